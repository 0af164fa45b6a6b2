//! Result files. Every artifact starts with `#`-prefixed header lines that
//! pin down what produced it: build id, seed, model label and parameters.
//! The timestamp line is the only non-deterministic header and can be
//! suppressed so that reruns are byte-identical.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::Result;
use crate::model::{FragRate, GrowthSpec, RatioLaw, ValidatedModel};

/// Compile-time build identifier, overridable at build time.
pub const BUILD_ID: &str = match option_env!("GROWFRAG_BUILD_ID") {
    Some(id) => id,
    None => concat!("growfrag-", env!("CARGO_PKG_VERSION")),
};

/// One-line parameter echo for a validated model.
pub fn model_echo(model: &ValidatedModel) -> String {
    let mut s = String::new();
    match model.growth() {
        GrowthSpec::Linear { a } => {
            let _ = write!(s, "growth=linear a={a}");
        }
        GrowthSpec::General { cbar_sup, .. } => {
            let _ = write!(s, "growth=general cbar_sup={cbar_sup}");
        }
    }
    match &model.spec().frag.rate {
        FragRate::Constant { b } => {
            let _ = write!(s, " rate=constant b={b}");
        }
        FragRate::Saturating { b, gamma0 } => {
            let _ = write!(s, " rate=saturating b={b} gamma0={gamma0}");
        }
    }
    match model.ratio_law() {
        RatioLaw::SizeBiasedUniformBinary => {
            let _ = write!(s, " ratio=uniform-binary");
        }
        RatioLaw::PowerBeta { beta } => {
            let _ = write!(s, " ratio=power-beta beta={beta}");
        }
    }
    let _ = write!(s, " x0={}", model.x0());
    s
}

/// Header metadata shared by all artifacts of one run.
#[derive(Debug, Clone)]
pub struct RunHeader {
    pub seed: u64,
    pub label: String,
    pub echo: String,
    pub timestamp: bool,
}

impl RunHeader {
    pub fn new(model: &ValidatedModel, seed: u64, timestamp: bool) -> Self {
        RunHeader {
            seed,
            label: model.label().to_string(),
            echo: model_echo(model),
            timestamp,
        }
    }

    fn write_to(&self, w: &mut impl Write, extra: &[(&str, String)]) -> std::io::Result<()> {
        writeln!(w, "# build {BUILD_ID}")?;
        writeln!(w, "# seed {}", self.seed)?;
        writeln!(w, "# model {}", self.label)?;
        writeln!(w, "# params {}", self.echo)?;
        for (k, v) in extra {
            writeln!(w, "# {k} {v}")?;
        }
        if self.timestamp {
            let t = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            writeln!(w, "# unix-time {t}")?;
        }
        Ok(())
    }
}

/// Write a CSV file with commented header, column names, then rows.
/// Floats are formatted with full round-trip precision.
pub fn write_csv(
    path: &Path,
    header: &RunHeader,
    extra: &[(&str, String)],
    columns: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    header.write_to(&mut w, extra)?;
    writeln!(w, "{}", columns.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Write a JSON value alongside the same commented metadata (as a "meta"
/// object inside the document, since JSON has no comments).
pub fn write_json(
    path: &Path,
    header: &RunHeader,
    body: serde_json::Value,
) -> Result<()> {
    let doc = json_with_meta(header, body);
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc).map_err(std::io::Error::other)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Wrap a JSON body with run metadata, mirroring the CSV headers.
pub fn json_with_meta(header: &RunHeader, body: serde_json::Value) -> serde_json::Value {
    let mut meta = serde_json::json!({
        "build": BUILD_ID,
        "seed": header.seed,
        "model": header.label,
        "params": header.echo,
    });
    if header.timestamp {
        let t = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        meta["unix_time"] = serde_json::json!(t);
    }
    serde_json::json!({ "meta": meta, "result": body })
}
