//! Model configuration files (TOML). The key names are part of the CLI
//! contract: growth.kind, growth.a, frag.rate.kind, frag.rate.b,
//! frag.rate.gamma0, frag.ratio.kind, frag.ratio.beta, x0, label.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{FragRate, FragmentationSpec, GrowthSpec, ModelSpec, RatioLaw};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    label: Option<String>,
    x0: f64,
    growth: GrowthCfg,
    frag: FragCfg,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum GrowthCfg {
    /// c(x) = a x
    Linear { a: f64 },
    /// c(x) = a x^2, with a declared (finite) bound on c(x)/x for
    /// validation to test against.
    Quadratic { a: f64, cbar_sup: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FragCfg {
    rate: RateCfg,
    ratio: RatioCfg,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RateCfg {
    Constant { b: f64 },
    Saturating { b: f64, gamma0: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RatioCfg {
    UniformBinary,
    PowerBeta { beta: f64 },
}

/// Parse a model spec from TOML text.
pub fn parse_model(text: &str, default_label: &str) -> Result<ModelSpec> {
    let cfg: ConfigFile =
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))?;
    let growth = match cfg.growth {
        GrowthCfg::Linear { a } => GrowthSpec::Linear { a },
        GrowthCfg::Quadratic { a, cbar_sup } => GrowthSpec::General {
            c: Arc::new(move |x| a * x * x),
            cbar_sup,
        },
    };
    let rate = match cfg.frag.rate {
        RateCfg::Constant { b } => FragRate::Constant { b },
        RateCfg::Saturating { b, gamma0 } => FragRate::Saturating { b, gamma0 },
    };
    let ratio = match cfg.frag.ratio {
        RatioCfg::UniformBinary => RatioLaw::SizeBiasedUniformBinary,
        RatioCfg::PowerBeta { beta } => RatioLaw::PowerBeta { beta },
    };
    Ok(ModelSpec {
        growth,
        frag: FragmentationSpec { rate, ratio },
        x0: cfg.x0,
        label: cfg.label.unwrap_or_else(|| default_label.to_string()),
    })
}

/// Load a model spec from a file; the file stem is the fallback label.
pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string());
    parse_model(&text, &stem)
}
