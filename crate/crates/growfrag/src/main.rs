//! Batch front door: loads model configs, runs the estimators and solvers,
//! and writes reproducible CSV/JSON artifacts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde_json::json;

use growfrag::bump::Bump;
use growfrag::config::load_model;
use growfrag::ergo::{check_assumptions, drift_profile, LyapunovSpec};
use growfrag::error::{Error, Result};
use growfrag::levy::LevyParams;
use growfrag::model::ValidatedModel;
use growfrag::output::{write_csv, write_json, RunHeader};
use growfrag::pde::{boundary_leak, evolve_backward, PdeGrid};
use growfrag::pdmp::{collect_paths, feynman_kac, sample_hit_set, simulate_path};
use growfrag::quad::log_grid;
use growfrag::rng::stream_rng;
use growfrag::spectral::{build_ell_table, find_rho, EllFunction};
use growfrag::tilt::{asymptotic_profile, stationary_density, TiltedModel};

#[derive(Parser)]
#[command(name = "growfrag", version, about = "Growth-fragmentation spectral estimators")]
struct Cli {
    /// Worker threads (default: available parallelism). Results are
    /// byte-identical regardless of this setting.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// RNG seed; echoed in every output header.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Omit the timestamp header line so reruns are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a model config against the growth and rate bounds.
    Validate { model: PathBuf },
    /// Simulate n paths to time t; per-path summary CSV.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Start mass (default: the config's x0).
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        n: usize,
    },
    /// Monte Carlo semigroup value T_t f(x).
    Semigroup {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        t: f64,
        /// "id" or a bump spec `bump:<center>;<width>`.
        #[arg(long)]
        f: String,
        #[arg(long)]
        n: usize,
    },
    /// Estimate the leading eigenvalue from return times to x.
    FindRho {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        tmax: f64,
    },
    /// Tabulate the eigenfunction on a log grid.
    Ell {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rho: f64,
        /// LO:HI:K log-spaced grid.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 200.0)]
        tmax: f64,
    },
    /// Rescaled semigroup e^{-rho t} T_t f(x), direct vs tilted.
    Profile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        f: String,
        #[arg(long)]
        x: Option<f64>,
        /// Comma-separated times.
        #[arg(long)]
        t: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rho: f64,
    },
    /// Occupation histogram of a long run (stationary density).
    Stationary {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trun: f64,
        /// Burn-in (default trun/10).
        #[arg(long)]
        tburn: Option<f64>,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        /// LO:HI histogram range.
        #[arg(long, default_value = "0.005:100")]
        range: String,
    },
    /// Closed-form spectral quantities for the homogeneous model.
    LevyAnalytic {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        beta: f64,
    },
    /// Backward finite-difference solve of u_t = A u, u_0 = f.
    PdeSolve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        f: String,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 512)]
        n_grid: usize,
        #[arg(long, default_value_t = 0.01)]
        x_min: f64,
        #[arg(long, default_value_t = 100.0)]
        x_max: f64,
    },
    /// Foster-Lyapunov drift check with V ~ x^{-B} near 0, x^A at infinity.
    CheckErgodicity {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "A")]
        a_exp: f64,
        #[arg(long = "B")]
        b_exp: f64,
    },
}

fn parse_f(spec: &str) -> Result<Box<dyn Fn(f64) -> f64 + Sync + Send>> {
    if spec == "id" {
        Ok(Box::new(|x| x))
    } else {
        let b = Bump::from_str(spec)?;
        Ok(Box::new(move |x| b.eval(x)))
    }
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    let err = || Error::InvalidConfig(format!("expected LO:HI, got {s:?}"));
    if parts.len() != 2 {
        return Err(err());
    }
    let lo: f64 = parts[0].parse().map_err(|_| err())?;
    let hi: f64 = parts[1].parse().map_err(|_| err())?;
    if !(lo > 0.0 && hi > lo) {
        return Err(err());
    }
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let err = || Error::InvalidConfig(format!("expected LO:HI:K, got {s:?}"));
    if parts.len() != 3 {
        return Err(err());
    }
    let lo: f64 = parts[0].parse().map_err(|_| err())?;
    let hi: f64 = parts[1].parse().map_err(|_| err())?;
    let k: usize = parts[2].parse().map_err(|_| err())?;
    if !(lo > 0.0 && hi > lo && k >= 2) {
        return Err(err());
    }
    Ok(log_grid(lo, hi, k))
}

fn parse_times(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad time {t:?}")))
        })
        .collect()
}

fn load(path: &Path) -> Result<ValidatedModel> {
    load_model(path)?.validate()
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // Ignore the error from double initialization under test harnesses.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&cli.out)?;
    let seed = cli.seed;
    let ts = !cli.no_timestamp;
    match &cli.cmd {
        Cmd::Validate { model } => {
            let m = load(model)?;
            let header = RunHeader::new(&m, seed, ts);
            let body = json!({
                "valid": true,
                "label": m.label(),
                "x0": m.x0(),
                "cbar_sup": m.cbar_sup(),
                "ksup": m.ksup(),
            });
            let doc = growfrag::output::json_with_meta(&header, body);
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
        }
        Cmd::Simulate { model, x, t, n } => {
            let m = load(model)?;
            let x = x.unwrap_or(m.x0());
            let header = RunHeader::new(&m, seed, ts);
            let rows = collect_paths(*n, seed, 0, |i, rng| {
                let traj = simulate_path(&m, x, *t, rng)?;
                Ok(vec![
                    i as f64,
                    traj.events.len() as f64,
                    traj.end_mass,
                    traj.log_e,
                ])
            })?;
            let extra = [("x", format!("{x}")), ("t", format!("{t}")), ("n", format!("{n}"))];
            write_csv(
                &cli.out.join("simulate.csv"),
                &header,
                &extra,
                &["path", "events", "end_mass", "log_e"],
                rows,
            )?;
        }
        Cmd::Semigroup { model, x, t, f, n } => {
            let m = load(model)?;
            let x = x.unwrap_or(m.x0());
            let func = parse_f(f)?;
            let est = feynman_kac(&m, x, *t, &func, *n, seed)?;
            let header = RunHeader::new(&m, seed, ts);
            let body = json!({
                "x": x, "t": t, "f": f, "n": n,
                "mean": est.mean, "stderr": est.stderr,
            });
            write_json(&cli.out.join("semigroup.json"), &header, body.clone())?;
            let doc = growfrag::output::json_with_meta(&header, body);
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
        }
        Cmd::FindRho { model, x, n, tmax } => {
            let m = load(model)?;
            let x = x.unwrap_or(m.x0());
            let set = sample_hit_set(&m, x, x, *n, *tmax, seed, 0)?;
            let est = find_rho(&set, m.cbar_sup())?;
            let header = RunHeader::new(&m, seed, ts);
            let extra = [("x", format!("{x}")), ("n", format!("{n}")), ("tmax", format!("{tmax}"))];
            write_csv(
                &cli.out.join("spectral.csv"),
                &header,
                &extra,
                &[
                    "rho_hat",
                    "ci_lo",
                    "ci_hi",
                    "l_at_rho",
                    "minus_lprime",
                    "minus_lprime_stderr",
                    "hit_fraction",
                    "censor_fraction",
                ],
                vec![vec![
                    est.rho_hat,
                    est.ci95.0,
                    est.ci95.1,
                    est.l_at_rho,
                    est.minus_lprime_at_rho.value,
                    est.minus_lprime_at_rho.stderr,
                    est.hit_fraction,
                    est.censor_fraction,
                ]],
            )?;
            let doc = growfrag::output::json_with_meta(
                &header,
                serde_json::to_value(&est).map_err(std::io::Error::other)?,
            );
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
        }
        Cmd::Ell { model, rho, grid, n, tmax } => {
            let m = load(model)?;
            let grid = parse_grid(grid)?;
            let table = build_ell_table(&m, *rho, &grid, *n, *tmax, seed)?;
            let header = RunHeader::new(&m, seed, ts);
            let extra = [("rho", format!("{rho}")), ("n", format!("{n}")), ("tmax", format!("{tmax}"))];
            let rows: Vec<Vec<f64>> = table
                .grid
                .iter()
                .zip(&table.values)
                .map(|(&x, v)| match v {
                    Some((ell, se)) => vec![x, *ell, *se],
                    None => vec![x, f64::NAN, f64::NAN],
                })
                .collect();
            write_csv(
                &cli.out.join("ell_table.csv"),
                &header,
                &extra,
                &["x", "ell", "stderr"],
                rows,
            )?;
        }
        Cmd::Profile { model, f, x, t, n, rho } => {
            let m = load(model)?;
            let x = x.unwrap_or(m.x0());
            let func = parse_f(f)?;
            let times = parse_times(t)?;
            let tm = TiltedModel::new(m.clone(), EllFunction::One, *rho)?;
            let header = RunHeader::new(&m, seed, ts);
            let mut rows = Vec::new();
            for &t in &times {
                let pair = asymptotic_profile(&tm, &func, x, t, *n, seed)?;
                rows.push(vec![
                    t,
                    pair.direct.mean,
                    pair.direct.stderr,
                    pair.tilted.mean,
                    pair.tilted.stderr,
                ]);
            }
            let extra = [("x", format!("{x}")), ("rho", format!("{rho}")), ("f", f.clone()), ("n", format!("{n}"))];
            write_csv(
                &cli.out.join("profile.csv"),
                &header,
                &extra,
                &["t", "direct", "direct_stderr", "tilted", "tilted_stderr"],
                rows,
            )?;
        }
        Cmd::Stationary { model, trun, tburn, bins, range } => {
            let m = load(model)?;
            let range = parse_range(range)?;
            let t_burn = tburn.unwrap_or(trun / 10.0);
            let tm = TiltedModel::new(m.clone(), EllFunction::One, m.cbar_sup())?;
            let mut rng = stream_rng(seed, 0, 0);
            let hist = stationary_density(&tm, t_burn, *trun, *bins, range, &mut rng)?;
            let header = RunHeader::new(&m, seed, ts);
            let rows: Vec<Vec<f64>> = (0..hist.density.len())
                .map(|i| vec![hist.edges[i], hist.edges[i + 1], hist.density[i], hist.time_in_bin[i]])
                .collect();
            let extra = [
                ("trun", format!("{trun}")),
                ("tburn", format!("{t_burn}")),
                ("coverage", format!("{:?}", hist.coverage)),
            ];
            write_csv(
                &cli.out.join("stationary.csv"),
                &header,
                &extra,
                &["bin_lo", "bin_hi", "density", "time_in_bin"],
                rows,
            )?;
        }
        Cmd::LevyAnalytic { a, lambda, beta } => {
            let p = LevyParams::new(*a, *lambda, *beta)?;
            let (theta0, rho) = p.theta0_rho()?;
            let body = json!({
                "a": a, "lambda": lambda, "beta": beta,
                "theta0": theta0,
                "rho": rho,
                "psi_1": p.psi(1.0)?,
                "psi_2": p.psi(2.0)?,
                "kappa_0": p.kappa(0.0)?,
                "phi_0": p.phi(0.0)?,
                "l_1": p.l_closed(1.0)?,
                "minus_l_prime_1": p.minus_l_prime(1.0)?,
                "kappa_second_theta0": p.psi_second(theta0 - 1.0)?,
            });
            let header = RunHeader {
                seed,
                label: "levy-analytic".to_string(),
                echo: format!("a={a} lambda={lambda} beta={beta}"),
                timestamp: ts,
            };
            write_json(&cli.out.join("levy_analytic.json"), &header, body.clone())?;
            let doc = growfrag::output::json_with_meta(&header, body);
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
        }
        Cmd::PdeSolve { model, f, t, n_grid, x_min, x_max } => {
            let m = load(model)?;
            let func = parse_f(f)?;
            let grid = PdeGrid::new(*x_min, *x_max, *n_grid)?;
            let f0 = grid.sample(&func, f);
            let sol = evolve_backward(&m, &grid, &f0, *t, None)?;
            let leak = boundary_leak(&m, &grid, &sol);
            let leak_max = leak.iter().cloned().fold(0.0, f64::max);
            let header = RunHeader::new(&m, seed, ts);
            let rows: Vec<Vec<f64>> = grid
                .xs()
                .iter()
                .zip(&sol.values)
                .map(|(&x, &v)| vec![x, v])
                .collect();
            let extra = [
                ("t", format!("{t}")),
                ("f", f.clone()),
                ("n_grid", format!("{n_grid}")),
                ("boundary_leak_max", format!("{leak_max:?}")),
            ];
            write_csv(
                &cli.out.join("pde_solution.csv"),
                &header,
                &extra,
                &["x", "value"],
                rows,
            )?;
        }
        Cmd::CheckErgodicity { model, a_exp, b_exp } => {
            let m = load(model)?;
            let report = check_assumptions(&m, *a_exp, *b_exp)?;
            let spec = LyapunovSpec::new(*a_exp, *b_exp)?;
            let xs = log_grid(1e-3, 1e3, 200);
            let profile = drift_profile(&m, &spec, &xs, (0.25, 8.0));
            let header = RunHeader::new(&m, seed, ts);
            let body = json!({
                "assumptions": report,
                "certificate": profile.certificate,
            });
            write_json(&cli.out.join("ergodicity.json"), &header, body.clone())?;
            let doc = growfrag::output::json_with_meta(&header, body);
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = json!({ "kind": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
