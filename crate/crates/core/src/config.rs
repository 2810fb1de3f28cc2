//! Scenario configuration (JSON), named presets and sweep specifications.
//!
//! A config file is a JSON object whose keys all have defaults, so `{}` is a
//! complete config. Files are layered on top of a preset: nested objects are
//! merged key by key, while function specs and initial data are replaced as a
//! whole.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::ClassifierThresholds;
use crate::asymptotics::FixedPointSettings;
use crate::error::{Error, Result};
use crate::grid::{FunctionSpec, PhenotypeGrid};
use crate::ide::{InitialData, RunSettings};
use crate::model::{IciKind, IciSchedule, ModelParams, OmegaKernel};
use crate::ode::{OdeMethod, OdeParams, OdeState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub model: ModelParams,
    /// Number of grid points on each phenotype axis.
    pub grid: usize,
    pub t_end: f64,
    pub dt: f64,
    pub initial: InitialData,
    /// Times at which density profiles are stored; empty picks six evenly
    /// spaced times.
    pub snapshot_times: Vec<f64>,
    pub thresholds: ClassifierThresholds,
    pub fixed_point: FixedPointSettings,
    /// Hold the immune populations at zero.
    pub tumour_alone: bool,
    pub output_dir: Option<PathBuf>,
    pub sweep: Option<SweepSpec>,
    pub ode: Option<OdeConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            grid: 1000,
            t_end: 1000.0,
            dt: 0.1,
            initial: InitialData::default(),
            snapshot_times: Vec::new(),
            thresholds: ClassifierThresholds::default(),
            fixed_point: FixedPointSettings::default(),
            tumour_alone: false,
            output_dir: None,
            sweep: None,
            ode: None,
        }
    }
}

/// Parameters a sweep axis may vary.
pub const SWEEP_PARAMETERS: &[&str] = &["s", "v", "lambda", "alpha", "h", "k1", "k2", "ici"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    pub t_end: f64,
    pub dt: f64,
    /// Step used when a cell trips the stability guard at `dt`.
    pub fallback_dt: f64,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axes: Vec::new(),
            t_end: 500.0,
            dt: 1.0,
            fallback_dt: 0.1,
            jobs: 0,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::invalid(
                "sweep.axes",
                format!("need 1 or 2 axes, got {}", self.axes.len()),
            ));
        }
        for axis in &self.axes {
            if !SWEEP_PARAMETERS.contains(&axis.name.as_str()) {
                return Err(Error::invalid(
                    "sweep.axes.name",
                    format!(
                        "unknown parameter `{}` (known: {SWEEP_PARAMETERS:?})",
                        axis.name
                    ),
                ));
            }
            if axis.values.is_empty() {
                return Err(Error::invalid(format!("sweep.{}", axis.name), "no values"));
            }
            let strictly_positive = matches!(axis.name.as_str(), "s" | "v" | "k2");
            for &v in &axis.values {
                let ok = v.is_finite() && if strictly_positive { v > 0.0 } else { v >= 0.0 };
                if !ok {
                    return Err(Error::invalid(
                        format!("sweep.{}", axis.name),
                        format!("value {v} not allowed"),
                    ));
                }
            }
        }
        if !(self.dt > 0.0 && self.fallback_dt > 0.0 && self.t_end > 0.0) {
            return Err(Error::invalid(
                "sweep",
                "t_end, dt and fallback_dt must be > 0",
            ));
        }
        Ok(())
    }

    /// Cells in row-major order (first axis outermost).
    pub fn cells(&self) -> Vec<Vec<f64>> {
        match self.axes.as_slice() {
            [a] => a.values.iter().map(|&v| vec![v]).collect(),
            [a, b] => a
                .values
                .iter()
                .flat_map(|&x| b.values.iter().map(move |&y| vec![x, y]))
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Sets a named scalar parameter on a model.
pub fn set_parameter(model: &mut ModelParams, name: &str, value: f64) -> Result<()> {
    match name {
        "s" => model.s = value,
        "v" => model.v = value,
        "lambda" => model.lambda_mix = value,
        "alpha" => model.alpha = value,
        "h" => model.h = value,
        "k1" => model.k1 = value,
        "k2" => model.k2 = value,
        "ici" => {
            model.ici = IciSchedule {
                kind: IciKind::Constant { dose: value },
                max_dose: model.ici.max_dose.max(value),
            }
        }
        other => {
            return Err(Error::invalid(
                "parameter",
                format!("unknown parameter `{other}`"),
            ))
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeConfig {
    pub params: OdeParams,
    pub init: OdeState,
    pub t_end: f64,
    pub dt: f64,
    pub method: OdeMethod,
    /// Point at which to report the right-hand-side residual.
    pub equilibrium: Option<OdeState>,
    pub window_fraction: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            params: OdeParams::reference(0.8514),
            init: OdeState::new(1.5, 0.5, 3.0),
            t_end: 500.0,
            dt: 0.01,
            method: OdeMethod::Rk4,
            equilibrium: Some(OdeState::new(0.6257, 1.1436, 0.746)),
            window_fraction: 0.4,
        }
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "baseline",
    "tumour-alone",
    "innate",
    "eradication",
    "equilibrium",
    "escape",
    "ici-escalation",
    "heatmap",
    "ode-stable",
    "ode-periodic",
    "periodic-ide",
];

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Constant-coefficient model matching the periodic ODE regime.
pub fn constant_coefficient_model(k2: f64) -> ModelParams {
    ModelParams {
        r: FunctionSpec::constant(1.3),
        d: FunctionSpec::constant(0.25),
        mu: FunctionSpec::constant(1.0),
        psi: FunctionSpec::constant(1.0),
        nu: FunctionSpec::constant(0.4),
        k1: 0.4,
        k2,
        alpha: 1.0,
        lambda_mix: 0.0,
        omega_kernel: OmegaKernel::Uniform,
        ..ModelParams::default()
    }
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let base = ScenarioConfig::default();
    let mixed = |v: f64| ScenarioConfig {
        model: ModelParams {
            lambda_mix: 0.5,
            s: 1.0,
            v,
            ..ModelParams::default()
        },
        ..ScenarioConfig::default()
    };
    let cfg = match name {
        "baseline" => base,
        "tumour-alone" => ScenarioConfig {
            tumour_alone: true,
            ..base
        },
        "innate" => ScenarioConfig {
            model: ModelParams {
                lambda_mix: 0.0,
                s: 1.0,
                ..ModelParams::default()
            },
            ..base
        },
        "eradication" => mixed(0.1),
        "equilibrium" => mixed(0.5),
        "escape" => mixed(1.0),
        "ici-escalation" => ScenarioConfig {
            model: ModelParams {
                nu: FunctionSpec::polynomial(&[1.0, -0.1]),
                k1: 0.01,
                lambda_mix: 1.0,
                s: 1.0,
                v: 2.0,
                h: 10.0,
                ici: IciSchedule {
                    kind: IciKind::Constant { dose: 0.0 },
                    max_dose: 10.0,
                },
                ..ModelParams::default()
            },
            ..base
        },
        "heatmap" => ScenarioConfig {
            t_end: 500.0,
            dt: 1.0,
            sweep: Some(SweepSpec {
                axes: vec![
                    SweepAxis {
                        name: "s".into(),
                        values: linspace(0.1, 1.0, 7),
                    },
                    SweepAxis {
                        name: "v".into(),
                        values: linspace(0.1, 1.0, 7),
                    },
                ],
                ..SweepSpec::default()
            }),
            ..mixed(0.5)
        },
        "ode-stable" => ScenarioConfig {
            ode: Some(OdeConfig::default()),
            ..base
        },
        "ode-periodic" => ScenarioConfig {
            ode: Some(OdeConfig {
                params: OdeParams::reference(0.7314),
                t_end: 5000.0,
                equilibrium: Some(OdeState::new(0.5204, 1.1699, 0.7115)),
                ..OdeConfig::default()
            }),
            ..base
        },
        "periodic-ide" => ScenarioConfig {
            model: constant_coefficient_model(0.7314),
            grid: 201,
            t_end: 5000.0,
            dt: 0.1,
            initial: InitialData::Uniform {
                n0: 1.5,
                ell0: 0.5,
                p0: 3.0,
            },
            ..base
        },
        other => {
            return Err(Error::invalid(
                "preset",
                format!("unknown preset `{other}` (known: {PRESETS:?})"),
            ))
        }
    };
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let grid = PhenotypeGrid::new(self.grid)
            .map_err(|_| Error::invalid("grid", format!("need >= 3 points, got {}", self.grid)))?;
        self.model.validate(&grid)?;
        self.run_settings()
            .validate()
            .map_err(|e| Error::invalid("t_end/dt", e.to_string()))?;
        let th = &self.thresholds;
        if !(th.tail_fraction > 0.0 && th.tail_fraction <= 1.0) {
            return Err(Error::invalid(
                "thresholds.tail_fraction",
                "must lie in (0, 1]",
            ));
        }
        if !(th.eradication >= 0.0 && th.escape_ratio > 0.0 && th.drift >= 0.0) {
            return Err(Error::invalid("thresholds", "must be nonnegative"));
        }
        let fp = &self.fixed_point;
        if !(fp.damping > 0.0 && fp.damping <= 1.0) {
            return Err(Error::invalid("fixed_point.damping", "must lie in (0, 1]"));
        }
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
        }
        if let Some(ode) = &self.ode {
            ode.params.validate()?;
            if !(ode.t_end > 0.0 && ode.dt > 0.0) {
                return Err(Error::invalid("ode.t_end/dt", "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn phenotype_grid(&self) -> Result<PhenotypeGrid> {
        PhenotypeGrid::new(self.grid)
    }

    pub fn run_settings(&self) -> RunSettings {
        let snapshot_times = if self.snapshot_times.is_empty() {
            linspace(0.0, self.t_end, 6)
        } else {
            self.snapshot_times.clone()
        };
        RunSettings {
            t_end: self.t_end,
            dt: self.dt,
            snapshot_times,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Keys whose values are enums or tagged unions; an override replaces them
/// instead of merging into them.
const ATOMIC_KEYS: &[&str] = &[
    "r",
    "d",
    "mu",
    "psi",
    "nu",
    "initial",
    "kind",
    "equilibrium",
    "axes",
];

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if !ATOMIC_KEYS.contains(&k.as_str()) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::ConfigParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses `text` as an override of `base`, then validates the result.
pub fn parse_config(text: &str, base: &ScenarioConfig) -> Result<ScenarioConfig> {
    // Typed parse of the file alone first, so type errors and unknown keys
    // carry the file's line numbers.
    serde_json::from_str::<ScenarioConfig>(text).map_err(parse_error)?;
    let overlay: Value = serde_json::from_str(text).map_err(parse_error)?;
    let mut merged = serde_json::to_value(base)?;
    merge(&mut merged, overlay);
    let cfg: ScenarioConfig = serde_json::from_value(merged).map_err(parse_error)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a config file layered on the default baseline scenario.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    load_config_with_base(path, &ScenarioConfig::default())
}

pub fn load_config_with_base(path: &Path, base: &ScenarioConfig) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_baseline() {
        let cfg = parse_config("{}", &ScenarioConfig::default()).unwrap();
        let m = &cfg.model;
        assert_eq!(m.r, FunctionSpec::polynomial(&[0.666, 0.0, -0.132]));
        assert_eq!(m.d.value_at(1.0), 0.5 * (1.0 - 0.3));
        assert_eq!(m.mu, FunctionSpec::polynomial(&[1.0, 0.0, -0.1]));
        assert_eq!(m.psi, FunctionSpec::polynomial(&[0.0, 0.0, 0.5]));
        assert_eq!(m.nu, FunctionSpec::polynomial(&[0.5, -0.1]));
        assert_eq!((m.k1, m.k2, m.alpha, m.h), (0.5, 1.5, 1.0, 10.0));
        assert_eq!(cfg.dt, 0.1);
        assert_eq!(cfg.grid, 1000);
    }

    #[test]
    fn negative_k2_names_field() {
        let err = parse_config(r#"{"model": {"k2": -1}}"#, &ScenarioConfig::default()).unwrap_err();
        match err {
            Error::InvalidParameter { name, .. } => assert_eq!(name, "k2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let err = parse_config(
            "{\n  \"grid\": 11,\n  \"bogus\": 1\n}",
            &ScenarioConfig::default(),
        )
        .unwrap_err();
        match err {
            Error::ConfigParse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config("{\"grid\": ", &ScenarioConfig::default()),
            Err(Error::ConfigParse { .. })
        ));
    }

    #[test]
    fn ici_preset() {
        let cfg = preset("ici-escalation").unwrap();
        let m = &cfg.model;
        assert_eq!(m.nu, FunctionSpec::polynomial(&[1.0, -0.1]));
        assert_eq!(
            (m.k1, m.lambda_mix, m.s, m.v, m.h),
            (0.01, 1.0, 1.0, 2.0, 10.0)
        );
        cfg.validate().unwrap();
    }

    #[test]
    fn every_preset_validates() {
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn override_merges_onto_preset() {
        let base = preset("ici-escalation").unwrap();
        let cfg = parse_config(
            r#"{"model": {"v": 1.5, "psi": {"polynomial": [0.1]}}}"#,
            &base,
        )
        .unwrap();
        assert_eq!(cfg.model.v, 1.5);
        assert_eq!(cfg.model.k1, 0.01);
        assert_eq!(cfg.model.psi, FunctionSpec::constant(0.1));
        let tab = parse_config(
            r#"{"grid": 3, "model": {"r": {"tabulated": [1, 1, 1]}}}"#,
            &base,
        )
        .unwrap();
        assert_eq!(tab.model.r, FunctionSpec::Tabulated(vec![1.0; 3]));
    }

    #[test]
    fn sweep_cells_row_major() {
        let spec = SweepSpec {
            axes: vec![
                SweepAxis {
                    name: "s".into(),
                    values: vec![0.1, 0.2],
                },
                SweepAxis {
                    name: "v".into(),
                    values: vec![1.0, 2.0, 3.0],
                },
            ],
            ..SweepSpec::default()
        };
        spec.validate().unwrap();
        let cells = spec.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1], vec![0.1, 2.0]);
        assert_eq!(cells[3], vec![0.2, 1.0]);
    }

    #[test]
    fn sweep_validation() {
        let bad = SweepSpec {
            axes: vec![SweepAxis {
                name: "s".into(),
                values: vec![0.0],
            }],
            ..SweepSpec::default()
        };
        assert!(bad.validate().is_err());
        let unknown = SweepSpec {
            axes: vec![SweepAxis {
                name: "zeta".into(),
                values: vec![1.0],
            }],
            ..SweepSpec::default()
        };
        assert!(unknown.validate().is_err());
    }
}
