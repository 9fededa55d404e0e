//! JSON configuration for maps, roofs, and experiments.
//!
//! Schema:
//! ```json
//! {
//!   "map":  {"preset": "doubling"}
//!        or {"pieces": [{"domain": [0.0, 0.5], "poly": [0.0, 2.0], "trig": []}, ...],
//!            "lambda": 0.6931, "alpha": 1.0, "distortion": 0.0},
//!   "roof": {"preset": "cos"}
//!        or {"pieces": [...], "c_tau": 6.2832},
//!   "experiment": {"resolution": 4096, "modes": 64, "nmax": 30,
//!                  "b": 1.0, "b_range": [1, 8], "eps0": 0.45,
//!                  "a": 2.0, "delta": 0.03, "boundary_b": 8.0}
//! }
//! ```
//! Map presets: `doubling`, `tripling`, `markov`, `perturbed_tripling`.
//! Roof presets: `cos`, `coboundary`, `linear`, `constant`, `zero`.
//! Combined presets accepted by `--preset`: `doubling_cos`, `tripling_cos`,
//! `coboundary` (doubling base), `markov_cos`, `perturbed_cos`.

use crate::dynamics::{presets, PiecewiseMap, RoofFunction, SkewProduct};
use crate::error::{Error, Result};
use crate::formula::{Formula, TrigTerm};
use crate::interval::Interval;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigDoc {
    pub map: MapSpec,
    pub roof: RoofSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSpec {
    Preset { preset: String },
    Pieces { pieces: Vec<PieceSpec>, lambda: f64, alpha: f64, #[serde(default)] distortion: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoofSpec {
    Preset {
        preset: String,
        #[serde(default)]
        value: Option<f64>,
    },
    Pieces { pieces: Vec<PieceSpec>, c_tau: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PieceSpec {
    pub domain: [f64; 2],
    #[serde(default)]
    pub poly: Vec<f64>,
    #[serde(default)]
    pub trig: Vec<TrigTerm>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub resolution: usize,
    pub modes: i64,
    pub nmax: usize,
    pub b: f64,
    pub b_range: [i64; 2],
    pub eps0: f64,
    pub a: f64,
    pub delta: f64,
    pub boundary_b: f64,
    pub k_steps: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            resolution: 1 << 12,
            modes: 64,
            nmax: 30,
            b: 500.0,
            b_range: [1, 8],
            eps0: 0.45,
            a: 2.0,
            delta: 0.03,
            boundary_b: 8.0,
            k_steps: 2,
        }
    }
}

impl PieceSpec {
    fn formula(&self) -> Formula {
        Formula { poly: self.poly.clone(), trig: self.trig.clone() }
    }
}

pub fn build_map(spec: &MapSpec) -> Result<PiecewiseMap> {
    match spec {
        MapSpec::Preset { preset } => match preset.as_str() {
            "doubling" => Ok(presets::doubling()),
            "tripling" => Ok(presets::tripling()),
            "markov" => Ok(presets::markov_unequal()),
            "perturbed_tripling" => Ok(presets::perturbed_tripling(0.05)),
            other => Err(Error::Config(format!("unknown map preset '{other}'"))),
        },
        MapSpec::Pieces { pieces, lambda, alpha, distortion } => {
            let parts = pieces
                .iter()
                .map(|p| (Interval::new(p.domain[0], p.domain[1]), p.formula()))
                .collect();
            PiecewiseMap::new(parts, *alpha, *lambda, *distortion)
        }
    }
}

pub fn build_roof(spec: &RoofSpec, map: &PiecewiseMap) -> Result<RoofFunction> {
    match spec {
        RoofSpec::Preset { preset, value } => match preset.as_str() {
            "cos" => Ok(presets::cos_roof(map.lambda)),
            "coboundary" => Ok(presets::coboundary_roof()),
            "linear" => Ok(presets::linear_roof(map.lambda)),
            "constant" => Ok(presets::constant_roof(value.unwrap_or(1.0))),
            "zero" => Ok(presets::constant_roof(0.0)),
            other => Err(Error::Config(format!("unknown roof preset '{other}'"))),
        },
        RoofSpec::Pieces { pieces, c_tau } => {
            let parts = pieces
                .iter()
                .map(|p| (Interval::new(p.domain[0], p.domain[1]), p.formula()))
                .collect();
            RoofFunction::new(parts, *c_tau)
        }
    }
}

pub fn build_skew(doc: &ConfigDoc) -> Result<SkewProduct> {
    let map = build_map(&doc.map)?;
    let roof = build_roof(&doc.roof, &map)?;
    SkewProduct::new(map, roof)
}

/// Named whole-experiment presets.
pub fn preset_doc(name: &str) -> Result<ConfigDoc> {
    let (map, roof) = match name {
        "doubling_cos" => ("doubling", "cos"),
        "tripling_cos" => ("tripling", "cos"),
        "coboundary" => ("doubling", "coboundary"),
        "markov_cos" => ("markov", "cos"),
        "perturbed_cos" => ("perturbed_tripling", "cos"),
        other => return Err(Error::Config(format!("unknown preset '{other}'"))),
    };
    Ok(ConfigDoc {
        map: MapSpec::Preset { preset: map.into() },
        roof: RoofSpec::Preset { preset: roof.into(), value: None },
        experiment: ExperimentSpec::default(),
    })
}

pub fn load(path: &Path) -> Result<ConfigDoc> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_explicit_pieces() {
        let doc: ConfigDoc = serde_json::from_str(
            r#"{
                "map": {"pieces": [
                    {"domain": [0.0, 0.5], "poly": [0.0, 2.0]},
                    {"domain": [0.5, 1.0], "poly": [-1.0, 2.0]}
                ], "lambda": 0.6931, "alpha": 1.0},
                "roof": {"pieces": [
                    {"domain": [0.0, 1.0], "trig": [{"kind": "cos", "amp": 1.0, "freq": 1.0}]}
                ], "c_tau": 6.2832},
                "experiment": {"resolution": 1024}
            }"#,
        )
        .unwrap();
        let skew = build_skew(&doc).unwrap();
        assert_eq!(skew.base.branch_count(), 2);
        assert_eq!(doc.experiment.resolution, 1024);
        // Defaults fill unspecified experiment fields.
        assert_eq!(doc.experiment.modes, 64);
    }

    #[test]
    fn presets_build() {
        for name in ["doubling_cos", "tripling_cos", "coboundary", "markov_cos", "perturbed_cos"] {
            let doc = preset_doc(name).unwrap();
            build_skew(&doc).unwrap();
        }
        assert!(matches!(preset_doc("nope"), Err(Error::Config(_))));
    }
}
