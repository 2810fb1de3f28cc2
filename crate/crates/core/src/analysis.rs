//! Outcome classification (eradication / equilibrium / escape), Dirac
//! concentration metrics, and comparison of long runs with limit-system
//! predictions.

use serde::{Deserialize, Serialize};

use crate::asymptotics::FixedPointResult;
use crate::error::{Error, Result};
use crate::grid::{argmax, PhenotypeGrid};
use crate::ide::SimOutput;
use crate::ode::{detect_limit_cycle, CycleReport, MIN_WINDOW_SAMPLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeLabel {
    Eradication,
    Equilibrium,
    Escape,
    Oscillatory,
    Undetermined,
}

impl std::fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OutcomeLabel::Eradication => "Eradication",
            OutcomeLabel::Equilibrium => "Equilibrium",
            OutcomeLabel::Escape => "Escape",
            OutcomeLabel::Oscillatory => "Oscillatory",
            OutcomeLabel::Undetermined => "Undetermined",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierThresholds {
    /// Tail mean of ρ below this is eradication.
    pub eradication: f64,
    /// Tail mean above `escape_ratio · ρ*` is escape.
    pub escape_ratio: f64,
    /// Fraction of the series forming the tail window.
    pub tail_fraction: f64,
    /// Relative change over the tail above which a non-oscillating run is
    /// undetermined.
    pub drift: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        Self {
            eradication: 1e-3,
            escape_ratio: 0.9,
            tail_fraction: 0.2,
            drift: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub thresholds: ClassifierThresholds,
    pub rho_star: f64,
    pub tail_samples: usize,
    pub tail_mean: f64,
    /// `|ρ_last − ρ_first| / tail_mean` over the tail.
    pub tail_drift: f64,
    /// Oscillation test on the tail (absent when the tail is too short).
    pub cycle: Option<CycleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub label: OutcomeLabel,
    pub rho_final: f64,
    /// `ρ(T)/ρ*`
    pub rho_ratio: f64,
    pub evidence: Evidence,
}

pub fn classify_outcome(output: &SimOutput, rho_star: f64) -> Result<Outcome> {
    classify_series(
        &output.times,
        &output.rho,
        rho_star,
        &ClassifierThresholds::default(),
    )
}

/// Classifies a tumour-mass series.
///
/// Order of checks on the tail: sustained oscillation, then eradication, then
/// drift (undetermined), then escape versus equilibrium.
pub fn classify_series(
    times: &[f64],
    rho: &[f64],
    rho_star: f64,
    th: &ClassifierThresholds,
) -> Result<Outcome> {
    if rho.is_empty() || times.len() != rho.len() {
        return Err(Error::InsufficientData(format!(
            "{} times and {} tumour masses",
            times.len(),
            rho.len()
        )));
    }
    if !(rho_star > 0.0) {
        return Err(Error::Precondition(format!(
            "rho* must be > 0, got {rho_star}"
        )));
    }
    let len = rho.len();
    let tail_len = ((len as f64 * th.tail_fraction).round() as usize).clamp(1, len);
    let tail = &rho[len - tail_len..];
    let tail_mean = tail.iter().sum::<f64>() / tail_len as f64;
    let tail_drift = if tail_mean > 0.0 {
        (tail[tail_len - 1] - tail[0]).abs() / tail_mean
    } else {
        0.0
    };
    let cycle = if tail_len >= MIN_WINDOW_SAMPLES {
        Some(detect_limit_cycle(
            times,
            rho,
            tail_len as f64 / len as f64,
        )?)
    } else {
        None
    };

    let label = if cycle.is_some_and(|c| c.oscillatory) {
        OutcomeLabel::Oscillatory
    } else if tail_mean < th.eradication {
        OutcomeLabel::Eradication
    } else if tail_drift > th.drift {
        OutcomeLabel::Undetermined
    } else if tail_mean > th.escape_ratio * rho_star {
        OutcomeLabel::Escape
    } else {
        OutcomeLabel::Equilibrium
    };

    let rho_final = rho[len - 1];
    Ok(Outcome {
        label,
        rho_final,
        rho_ratio: rho_final / rho_star,
        evidence: Evidence {
            thresholds: *th,
            rho_star,
            tail_samples: tail_len,
            tail_mean,
            tail_drift,
            cycle,
        },
    })
}

/// Half-width of the window used for `mass_within_0_05`.
pub const CONCENTRATION_HALF_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub total_mass: f64,
    pub peak_location: f64,
    pub peak_index: usize,
    /// Fraction of the mass on nodes within ±0.05 of the peak.
    pub mass_within_0_05: f64,
    /// Distance between the 25% and 75% quantiles of the normalized density.
    pub spread: f64,
}

pub fn concentration_metrics(n: &[f64], grid: &PhenotypeGrid) -> Result<ConcentrationReport> {
    let total = grid.quad(n)?;
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let peak = argmax(n);
    let peak_x = grid.node(peak);
    let near: f64 = grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .zip(n)
        .filter(|((x, _), _)| (*x - peak_x).abs() <= CONCENTRATION_HALF_WIDTH + 1e-12)
        .map(|((_, w), v)| w * v)
        .sum();

    // Piecewise-linear CDF through the cumulative trapezoid sums.
    let mut cdf = Vec::with_capacity(n.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    for i in 1..n.len() {
        acc += 0.5 * grid.spacing() * (n[i - 1] + n[i]);
        cdf.push(acc / total);
    }
    let quantile = |q: f64| -> f64 {
        let k = cdf.partition_point(|&c| c < q).clamp(1, n.len() - 1);
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let frac = if c1 > c0 { (q - c0) / (c1 - c0) } else { 0.0 };
        grid.node(k - 1) + frac * grid.spacing()
    };

    Ok(ConcentrationReport {
        total_mass: total,
        peak_location: peak_x,
        peak_index: peak,
        mass_within_0_05: (near / total).clamp(0.0, 1.0),
        spread: quantile(0.75) - quantile(0.25),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionComparison {
    pub available: bool,
    pub reason: Option<String>,
    pub rho_simulated: f64,
    pub rho_predicted: f64,
    /// `|ρ(T) − ρ∞| / ρ∞`
    pub rho_rel_error: f64,
    pub peak_simulated: f64,
    pub peak_predicted: f64,
    /// `|peak − x∞|`
    pub peak_distance: f64,
    pub rho_pass: bool,
    pub peak_pass: bool,
}

pub const PREDICTION_RHO_TOL: f64 = 0.05;
pub const PREDICTION_PEAK_NODES: f64 = 2.0;

impl PredictionComparison {
    fn unavailable(reason: &str) -> Self {
        Self {
            available: false,
            reason: Some(reason.to_string()),
            rho_simulated: f64::NAN,
            rho_predicted: f64::NAN,
            rho_rel_error: f64::NAN,
            peak_simulated: f64::NAN,
            peak_predicted: f64::NAN,
            peak_distance: f64::NAN,
            rho_pass: false,
            peak_pass: false,
        }
    }

    pub fn passes(&self) -> bool {
        self.available && self.rho_pass && self.peak_pass
    }
}

/// Compares the end of a run with the first solution of a limit system:
/// 5% on the tumour mass, two grid steps on the concentration point.
pub fn compare_to_prediction(
    output: &SimOutput,
    fp: &FixedPointResult,
    grid: &PhenotypeGrid,
) -> PredictionComparison {
    let Some(best) = fp.best() else {
        return PredictionComparison::unavailable("fixed-point solver did not converge");
    };
    let rho = output.rho_final();
    if rho < ClassifierThresholds::default().eradication {
        return PredictionComparison::unavailable("tumour eradicated");
    }
    let conc = match concentration_metrics(&output.final_state.n, grid) {
        Ok(c) => c,
        Err(_) => return PredictionComparison::unavailable("tumour density has zero mass"),
    };
    let rho_rel_error = (rho - best.rho_inf).abs() / best.rho_inf;
    let peak_distance = (conc.peak_location - best.x_inf).abs();
    PredictionComparison {
        available: true,
        reason: None,
        rho_simulated: rho,
        rho_predicted: best.rho_inf,
        rho_rel_error,
        peak_simulated: conc.peak_location,
        peak_predicted: best.x_inf,
        peak_distance,
        rho_pass: rho_rel_error <= PREDICTION_RHO_TOL,
        peak_pass: peak_distance <= PREDICTION_PEAK_NODES * grid.spacing() + 1e-12,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64, t_end: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let n = (t_end / dt).round() as usize;
        let t: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let v = t.iter().map(|&x| f(x)).collect();
        (t, v)
    }

    #[test]
    fn decay_is_eradication() {
        let (t, r) = series(|x| (-x * 0.0138).exp(), 1000.0, 0.1);
        assert!(r.last().unwrap() < &1e-5);
        let out = classify_series(&t, &r, 1.53, &ClassifierThresholds::default()).unwrap();
        assert_eq!(out.label, OutcomeLabel::Eradication);
    }

    #[test]
    fn plateaus() {
        let th = ClassifierThresholds::default();
        let (t, hi) = series(|x| 1.5 * (1.0 - (-x).exp()), 500.0, 0.5);
        assert_eq!(
            classify_series(&t, &hi, 1.53, &th).unwrap().label,
            OutcomeLabel::Escape
        );
        let (t, mid) = series(|x| 0.7 * (1.0 - (-x).exp()), 500.0, 0.5);
        let o = classify_series(&t, &mid, 1.53, &th).unwrap();
        assert_eq!(o.label, OutcomeLabel::Equilibrium);
        assert!((o.rho_ratio - 0.7 / 1.53).abs() < 1e-9);
    }

    #[test]
    fn slow_ramp_is_undetermined() {
        let (t, r) = series(|x| 0.5 + 0.001 * x, 500.0, 0.5);
        let o = classify_series(&t, &r, 1.53, &ClassifierThresholds::default()).unwrap();
        assert_eq!(o.label, OutcomeLabel::Undetermined);
    }

    #[test]
    fn oscillation_wins() {
        let (t, r) = series(|x| 0.5 + 0.2 * (x / 3.0).sin(), 1000.0, 0.1);
        let o = classify_series(&t, &r, 1.53, &ClassifierThresholds::default()).unwrap();
        assert_eq!(o.label, OutcomeLabel::Oscillatory);
    }

    #[test]
    fn empty_series_rejected() {
        assert!(matches!(
            classify_series(&[], &[], 1.0, &ClassifierThresholds::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn gaussian_concentration() {
        let g = PhenotypeGrid::new(1000).unwrap();
        let n: Vec<f64> = g
            .nodes()
            .iter()
            .map(|x| (-(x - 0.5f64).powi(2) / 0.02).exp())
            .collect();
        let c = concentration_metrics(&n, &g).unwrap();
        assert!((c.peak_location - 0.5).abs() <= g.spacing());
        // P(|X − m| ≤ 0.05) for X ~ N(m, 0.1²) is erf(0.05/(0.1·√2)) ≈ 0.3829.
        assert!(
            (c.mass_within_0_05 - 0.3829).abs() < 0.02,
            "{}",
            c.mass_within_0_05
        );
        // Interquartile range of N(m, 0.1²) is 2·0.6745·0.1.
        assert!((c.spread - 0.1349).abs() < 2e-3, "{}", c.spread);
    }

    #[test]
    fn single_node_mass() {
        let g = PhenotypeGrid::new(101).unwrap();
        let mut n = vec![0.0; 101];
        n[40] = 3.0;
        let c = concentration_metrics(&n, &g).unwrap();
        assert_eq!(c.mass_within_0_05, 1.0);
        assert_eq!(c.peak_index, 40);
        assert!(matches!(
            concentration_metrics(&vec![0.0; 101], &g),
            Err(Error::ZeroMass)
        ));
    }
}
