//! End-to-end acceptance gate. Each test prints one PASS/FAIL line with the
//! measured values and its pinned tolerance, then asserts.

use std::path::{Path, PathBuf};
use std::process::Command;

use growfrag::bump::Bump;
use growfrag::config::load_model;
use growfrag::ergo::{check_assumptions, drift_profile, Certificate, LyapunovSpec};
use growfrag::levy::LevyParams;
use growfrag::model::ValidatedModel;
use growfrag::pde::{apply_classical, evolve_backward, PdeGrid};
use growfrag::pdmp::{feynman_kac, sample_hit_set};
use growfrag::quad::log_grid;
use growfrag::rng::stream_rng;
use growfrag::spectral::{
    build_ell_table, find_rho, laplace_derivative, laplace_estimate, nu_density_unnormalized,
    EllFunction,
};
use growfrag::tilt::{
    asymptotic_profile, eigenmeasure_residual, occupation_measure, sample_positions,
    stationary_density, TiltedModel,
};

fn fixture(name: &str) -> ValidatedModel {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name);
    load_model(&path).unwrap().validate().unwrap()
}

fn levy_params() -> LevyParams {
    LevyParams::new(1.0, 4.0, 2.0).unwrap()
}

fn check(name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {detail}");
    assert!(pass, "{name}: {detail}");
}

#[test]
fn c01_closed_form_suite() {
    let p = levy_params();
    let (theta0, rho) = p.theta0_rho().unwrap();
    let sqrt2 = std::f64::consts::SQRT_2;
    let cases = [
        ("psi(2)", p.psi(2.0).unwrap(), 0.0),
        ("psi(1)", p.psi(1.0).unwrap(), -1.0 / 3.0),
        ("kappa(0)", p.kappa(0.0).unwrap(), 4.0),
        ("theta0", theta0, 2.0 * sqrt2 - 1.0),
        ("rho", rho, 4.0 * sqrt2 - 5.0),
        ("phi(0)", p.phi(0.0).unwrap(), 2.0),
        ("L(1)", p.l_closed(1.0).unwrap(), 0.5),
        (
            "kappa''(theta0)",
            p.psi_second(theta0 - 1.0).unwrap(),
            1.0 / sqrt2,
        ),
    ];
    let worst = cases
        .iter()
        .map(|(_, got, want)| (got - want).abs())
        .fold(0.0f64, f64::max);
    check(
        "closed-form suite",
        worst <= 1e-10,
        &format!("worst |error| = {worst:.2e}, tolerance 1e-10"),
    );
}

#[test]
fn c02_laplace_mc_vs_closed_form() {
    let m = fixture("levy_142.cfg");
    let p = levy_params();
    let set = sample_hit_set(&m, 1.0, 1.0, 100_000, 200.0, 42, 0).unwrap();
    let mut detail = String::new();
    let mut pass = true;
    for q in [1.0, 1.25, 1.5] {
        let est = laplace_estimate(&set, q);
        let exact = p.l_closed(q).unwrap();
        let diff = (est.mean - exact).abs();
        let ok = diff <= 3.0 * est.stderr && diff <= 0.015;
        pass &= ok;
        detail.push_str(&format!(
            "q={q}: |{:.5} - {exact:.5}| = {diff:.5} (3se = {:.5}); ",
            est.mean,
            3.0 * est.stderr
        ));
    }
    check(
        "Laplace transform MC vs closed form",
        pass,
        &format!("{detail}tolerance min(3se, 0.015)"),
    );
}

#[test]
fn c03_spectral_radius_recovery() {
    let levy = fixture("levy_142.cfg");
    let (_, rho) = levy_params().theta0_rho().unwrap();
    let set = sample_hit_set(&levy, 1.0, 1.0, 20_000, 2000.0, 43, 0).unwrap();
    let est = find_rho(&set, levy.cbar_sup()).unwrap();
    let diff = (est.rho_hat - rho).abs();
    let ci_up = est.ci95.1 - est.rho_hat;
    // Censoring only loses mass, so the bias direction is known: down.
    let direction_ok = est.rho_hat <= rho + ci_up + 1e-9;

    let ub = fixture("ub_14.cfg");
    let set_ub = sample_hit_set(&ub, 1.0, 1.0, 20_000, 500.0, 43, 1).unwrap();
    let est_ub = find_rho(&set_ub, ub.cbar_sup()).unwrap();
    let diff_ub = (est_ub.rho_hat - 1.0).abs();

    check(
        "leading eigenvalue recovery",
        diff <= 0.03 && direction_ok && diff_ub <= 0.02,
        &format!(
            "homogeneous rho_hat = {:.4} vs {rho:.4} (|d| = {diff:.4} <= 0.03, \
             downward bias {direction_ok}); saturating rho_hat = {:.4} vs 1 \
             (|d| = {diff_ub:.4} <= 0.02)",
            est.rho_hat, est_ub.rho_hat
        ),
    );
}

fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn c04_eigenfunction_recovery() {
    let levy = fixture("levy_142.cfg");
    let (theta0, rho) = levy_params().theta0_rho().unwrap();
    let grid = log_grid(0.5, 2.0, 7);
    let table = build_ell_table(&levy, rho, &grid, 5_000, 200.0, 44).unwrap();
    let (lx, ly): (Vec<f64>, Vec<f64>) = table
        .grid
        .iter()
        .zip(&table.values)
        .map(|(&x, v)| (x.ln(), v.unwrap().0.ln()))
        .unzip();
    let slope = regression_slope(&lx, &ly);
    let slope_err = (slope - (theta0 - 1.0)).abs();

    let ub = fixture("ub_14.cfg");
    let grid_ub = log_grid(0.5, 2.0, 5);
    let table_ub = build_ell_table(&ub, 1.0, &grid_ub, 2_000, 200.0, 44).unwrap();
    let flat = table_ub
        .values
        .iter()
        .all(|v| {
            let (ell, se) = v.unwrap();
            (ell - 1.0).abs() <= 3.0 * se + 1e-12
        });

    check(
        "eigenfunction recovery",
        slope_err <= 0.05 && flat,
        &format!(
            "log-log slope = {slope:.4} vs {:.4} (|d| = {slope_err:.4} <= 0.05); \
             saturating table flat at 1 within 3se: {flat}",
            theta0 - 1.0
        ),
    );
}

#[test]
fn c05_martingale_normalization() {
    let levy = fixture("levy_142.cfg");
    let (theta0, rho) = levy_params().theta0_rho().unwrap();
    // M_1 = e^{-rho} E_1 ell_bar(X_1) / ell_bar(1), estimated through the
    // semigroup: mean M_1 = e^{-rho} T_1 ell_bar(1).
    let est = feynman_kac(&levy, 1.0, 1.0, |y: f64| y.powf(theta0), 100_000, 45).unwrap();
    let mean = (-rho).exp() * est.mean;
    let se = (-rho).exp() * est.stderr;
    let diff = (mean - 1.0).abs();
    check(
        "martingale normalization",
        diff <= 3.0 * se,
        &format!("mean M_1 = {mean:.4} (3se = {:.4}), |d| = {diff:.4}", 3.0 * se),
    );
}

#[test]
fn c06_hitting_time_products() {
    let levy = fixture("levy_142.cfg");
    let (_, rho) = levy_params().theta0_rho().unwrap();
    let n = 20_000;
    let tmax = 500.0;
    let l = |x: f64, y: f64, block: u32| {
        let set = sample_hit_set(&levy, x, y, n, tmax, 46, block).unwrap();
        laplace_estimate(&set, rho).mean
    };
    let l12 = l(1.0, 2.0, 0);
    let l21 = l(2.0, 1.0, 1);
    let l24 = l(2.0, 4.0, 2);
    let l14 = l(1.0, 4.0, 3);
    let round_trip = l12 * l21;
    let chain = l12 * l24;
    let d1 = (round_trip - 1.0).abs();
    let d2 = (chain - l14).abs();
    check(
        "hitting-time Laplace products",
        d1 <= 0.05 && d2 <= 0.05,
        &format!(
            "L12*L21 = {round_trip:.4} (|d| = {d1:.4} <= 0.05); \
             L12*L24 = {chain:.4} vs L14 = {l14:.4} (|d| = {d2:.4} <= 0.05)"
        ),
    );
}

#[test]
fn c07_cross_solver_semigroup() {
    let ub = fixture("ub_14.cfg");
    let f: Bump = "bump:1.0;0.5".parse().unwrap();
    let mc = feynman_kac(&ub, 1.0, 1.0, |y| f.eval(y), 100_000, 47).unwrap();
    let grid = PdeGrid::new(0.01, 100.0, 512).unwrap();
    let f0 = grid.sample(|y| f.eval(y), "bump");
    let sol = evolve_backward(&ub, &grid, &f0, 1.0, None).unwrap();
    let pde = grid.interp(&sol.values, 0.0);
    let diff = (mc.mean - pde).abs();
    let tol = (3.0 * mc.stderr).max(0.02 * pde.abs());
    check(
        "simulation vs finite-difference semigroup",
        diff <= tol,
        &format!("MC = {:.5} (se {:.5}), PDE = {pde:.5}, |d| = {diff:.5} <= {tol:.5}", mc.mean, mc.stderr),
    );
}

#[test]
fn c08_generator_eigenrelations() {
    let levy = fixture("levy_142.cfg");
    let p = levy_params();
    let (theta0, _) = p.theta0_rho().unwrap();
    let grid = PdeGrid::new(1e-4, 1e4, 2048).unwrap();
    let xs = grid.xs();
    let mut pass = true;
    let mut detail = String::new();
    for theta in [0.5, 1.0, theta0] {
        let kappa = p.kappa(theta).unwrap();
        let h = grid.sample(|y| y.powf(theta), "power");
        let ah = apply_classical(&levy, &grid, &h);
        let worst = xs
            .iter()
            .zip(&ah.values)
            .zip(&h.values)
            .filter(|((x, _), _)| **x >= 0.5 && **x <= 50.0)
            .map(|((_, a), hv)| (a / hv - kappa).abs() / kappa.abs())
            .fold(0.0f64, f64::max);
        pass &= worst <= 0.01;
        detail.push_str(&format!("theta={theta:.3}: rel err {worst:.4}; "));
    }

    let ub = fixture("ub_14.cfg");
    let ell_bar = grid.sample(|y| y, "mass");
    let al = apply_classical(&ub, &grid, &ell_bar);
    let worst_ub = xs
        .iter()
        .zip(&al.values)
        .zip(&ell_bar.values)
        .filter(|((x, _), _)| **x >= 0.5 && **x <= 50.0)
        .map(|((_, a), hv)| (a / hv - 1.0).abs())
        .fold(0.0f64, f64::max);
    pass &= worst_ub <= 0.01;
    check(
        "generator eigenrelations on the grid",
        pass,
        &format!("{detail}mass eigenfunction rel err {worst_ub:.2e}; tolerance 1%"),
    );
}

#[test]
fn c09_asymptotic_profile() {
    let ub = fixture("ub_14.cfg");
    let f: Bump = "bump:1.0;0.5".parse().unwrap();
    let tm = TiltedModel::new(ub, EllFunction::One, 1.0).unwrap();

    let p2 = asymptotic_profile(&tm, |y| f.eval(y), 1.0, 2.0, 20_000, 48).unwrap();
    let d2 = (p2.direct.mean - p2.tilted.mean).abs();
    let se2 = (p2.direct.stderr.powi(2) + p2.tilted.stderr.powi(2)).sqrt();

    let p4 = asymptotic_profile(&tm, |y| f.eval(y), 1.0, 4.0, 20_000, 48).unwrap();
    let p8 = asymptotic_profile(&tm, |y| f.eval(y), 1.0, 8.0, 20_000, 48).unwrap();
    let settle = (p4.tilted.mean - p8.tilted.mean).abs() / p8.tilted.mean.abs();

    // nu(f) through renewal-reward: mean occupation of f/ell_bar over an
    // excursion divided by mean excursion length.
    let occ_f = occupation_measure(&tm, |y| f.eval(y) / y, 3_000, 300.0, 48, 10).unwrap();
    let occ_1 = occupation_measure(&tm, |_| 1.0, 3_000, 300.0, 48, 11).unwrap();
    let stabilized = p8.tilted.mean;
    let predicted = occ_f.value / occ_1.value; // ell_bar(1) = 1
    let d_lim = (stabilized - predicted).abs() / predicted.abs();

    check(
        "asymptotic profile",
        d2 <= 3.0 * se2 && settle <= 0.05 && d_lim <= 0.05,
        &format!(
            "t=2 direct {:.4} vs tilted {:.4} (|d| = {d2:.4} <= 3se = {:.4}); \
             t=4 vs t=8 rel {settle:.4} <= 0.05; \
             stabilized {stabilized:.4} vs nu prediction {predicted:.4} (rel {d_lim:.4} <= 0.05)",
            p2.direct.mean,
            p2.tilted.mean,
            3.0 * se2
        ),
    );
}

#[test]
fn c10_stationary_density() {
    let ub = fixture("ub_14.cfg");
    let tm = TiltedModel::new(ub.clone(), EllFunction::One, 1.0).unwrap();
    let bins = 32;
    let range = (0.05, 20.0);
    let edges = log_grid(range.0, range.1, bins + 1);
    let centers: Vec<f64> = (0..bins).map(|i| (edges[i] * edges[i + 1]).sqrt()).collect();

    // Model curve 1 / (c(y) |L'_{y,y}(rho)|) at the bin centers.
    let derivs: Vec<_> = centers
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let set = sample_hit_set(&ub, y, y, 8_000, 300.0, 51, 10 + i as u32).unwrap();
            laplace_derivative(&set, 1.0)
        })
        .collect();
    let curve: Vec<f64> = centers
        .iter()
        .zip(&derivs)
        .map(|(&y, d)| 1.0 / (ub.c(y) * d.value))
        .collect();
    let mut probs: Vec<f64> = curve
        .iter()
        .enumerate()
        .map(|(i, c)| c * (edges[i + 1] - edges[i]))
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }

    // Decorrelated position samples against the model curve, chi-square at
    // significance 1e-3 over the bins.
    let mut rng = stream_rng(50, 0, 0);
    let positions = sample_positions(&tm, 50.0, 3.0, 4_000, &mut rng).unwrap();
    let in_range: Vec<f64> = positions
        .into_iter()
        .filter(|&y| y >= range.0 && y < range.1)
        .collect();
    let n = in_range.len() as f64;
    let mut counts = vec![0.0f64; bins];
    for y in &in_range {
        let i = edges.partition_point(|e| *e <= *y) - 1;
        counts[i.min(bins - 1)] += 1.0;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(o, p)| (o - n * p).powi(2) / (n * p))
        .sum();
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let threshold = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.999);

    // Long-run occupation histogram: y^{-1} * density should match the
    // eigenmeasure density on the central bins.
    let mut rng2 = stream_rng(52, 0, 0);
    let hist = stationary_density(&tm, 200.0, 120_000.0, bins, range, &mut rng2).unwrap();
    let nu_curve: Vec<f64> = centers
        .iter()
        .zip(&derivs)
        .map(|(&y, d)| nu_density_unnormalized(&ub, &EllFunction::One, d, y).unwrap())
        .collect();
    let nu_norm = growfrag::quad::trapezoid(&centers, &nu_curve);
    let emp: Vec<f64> = centers
        .iter()
        .zip(&hist.density)
        .map(|(&y, &d)| d / y)
        .collect();
    let emp_norm = growfrag::quad::trapezoid(&centers, &emp);
    let worst_central = centers
        .iter()
        .enumerate()
        .filter(|(_, y)| **y >= 0.3 && **y <= 4.0)
        .map(|(i, _)| (emp[i] / emp_norm - nu_curve[i] / nu_norm).abs() / (nu_curve[i] / nu_norm))
        .fold(0.0f64, f64::max);

    check(
        "stationary density",
        chi2 <= threshold && worst_central <= 0.05,
        &format!(
            "chi2 = {chi2:.1} <= {threshold:.1} (31 dof, p = 1e-3, n = {n}); \
             eigenmeasure density central rel err {worst_central:.4} <= 0.05"
        ),
    );
}

#[test]
fn c11_eigenmeasure_residual() {
    let ub = fixture("ub_14.cfg");
    let tm = TiltedModel::new(ub.clone(), EllFunction::One, 1.0).unwrap();
    let mut rng = stream_rng(53, 0, 0);
    let bins = 64;
    let range = (0.01, 50.0);
    let hist = stationary_density(&tm, 200.0, 40_000.0, bins, range, &mut rng).unwrap();
    let grid = PdeGrid::new(1e-3, 1e3, 1024).unwrap();
    let nu: Vec<f64> = grid
        .xs()
        .iter()
        .map(|&x| {
            if x < range.0 || x >= range.1 {
                return 0.0;
            }
            let i = hist.edges.partition_point(|e| *e <= x) - 1;
            hist.density[i.min(bins - 1)] / x
        })
        .collect();
    let f: Bump = "bump:1.0;0.5".parse().unwrap();
    let residual = eigenmeasure_residual(&ub, &grid, &nu, |y| f.eval(y), 1.0);
    check(
        "eigenmeasure residual",
        residual <= 0.05,
        &format!("relative residual = {residual:.4} <= 0.05"),
    );
}

#[test]
fn c12_ergodicity_certification() {
    let ub = fixture("ub_14.cfg");
    let report = check_assumptions(&ub, 1.0, 0.5).unwrap();
    let spec = LyapunovSpec::new(1.0, 0.5).unwrap();
    let xs = log_grid(1e-3, 1e3, 200);
    let profile = drift_profile(&ub, &spec, &xs, (0.25, 8.0));
    let (certified, alpha) = match profile.certificate {
        Certificate::Certified { alpha, .. } => (alpha > 0.0, alpha),
        Certificate::NotCertified { .. } => (false, 0.0),
    };
    // Large-mass drift limit a*A - beta_inf*(1 - M(A)) = 1 - 4/3 = -1/3.
    let tail = *profile
        .ratio
        .last()
        .unwrap();
    let tail_ok = (tail - (-1.0 / 3.0)).abs() <= 0.05;

    let levy = fixture("levy_142.cfg");
    let report_levy = check_assumptions(&levy, 1.0, 1.0).unwrap();
    let spec_levy = LyapunovSpec::new(1.0, 1.0).unwrap();
    let profile_levy = drift_profile(&levy, &spec_levy, &xs, (0.25, 8.0));
    let not_certified = matches!(profile_levy.certificate, Certificate::NotCertified { .. });
    // Small-mass drift brace -a*B + lambda*(M(-B) - 1) = -1 + 4 = +3.
    let head = profile_levy.ratio[0];
    let head_ok = (head - 3.0).abs() <= 1e-3;

    check(
        "ergodicity certification",
        report.small_x.direct
            && report.large_x.direct
            && !report.discrepancy
            && certified
            && tail_ok
            && not_certified
            && report_levy.discrepancy
            && report_levy.small_x.printed
            && !report_levy.small_x.direct
            && head_ok,
        &format!(
            "saturating: certified alpha = {alpha:.4} > 0, tail drift {tail:.4} vs -1/3; \
             homogeneous: NotCertified, printed/direct small-mass disagreement flagged \
             (discrepancy = {}), small-mass brace {head:.4} vs +3",
            report_levy.discrepancy
        ),
    );
}

fn run_cli(dir: &Path, threads: u32, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_growfrag"))
        .args(args)
        .args([
            "--threads",
            &threads.to_string(),
            "--seed",
            "7",
            "--no-timestamp",
            "--out",
        ])
        .arg(dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "cli failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

#[test]
fn c13_thread_count_reproducibility() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/ub_14.cfg");
    let model = config.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["validate", model],
        vec!["simulate", "--model", model, "--t", "5", "--n", "100"],
        vec!["find-rho", "--model", model, "--n", "2000", "--tmax", "200"],
        vec![
            "ell", "--model", model, "--rho", "1.0", "--grid", "0.5:2:3", "--n", "300",
        ],
    ];
    let mut pass = true;
    let mut detail = String::new();
    for args in &commands {
        let mut outputs: Vec<(Vec<u8>, Vec<(PathBuf, Vec<u8>)>)> = Vec::new();
        for threads in [1u32, 2, 8] {
            let dir = tempfile::tempdir().unwrap();
            let stdout = run_cli(dir.path(), threads, args);
            let mut files: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(dir.path())
                .unwrap()
                .map(|e| {
                    let p = e.unwrap().path();
                    let bytes = std::fs::read(&p).unwrap();
                    (PathBuf::from(p.file_name().unwrap()), bytes)
                })
                .collect();
            files.sort();
            outputs.push((stdout, files));
        }
        let same = outputs.iter().all(|o| *o == outputs[0]);
        pass &= same;
        detail.push_str(&format!("{}: identical = {same}; ", args[0]));
    }
    check(
        "thread-count reproducibility",
        pass,
        &format!("{detail}stdout and artifacts compared across 1/2/8 threads"),
    );
}
