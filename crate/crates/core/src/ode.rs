//! Constant-coefficient reduction of the IDE system to total masses
//! `(ρ, σ, γ)`:
//!
//! ```text
//! ρ' = (r − dρ − μσ) ρ
//! σ' = γ − (k1 + νρ) σ
//! γ' = γ (ωρ − k2 γ)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PhenotypeGrid;
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeParams {
    pub r: f64,
    pub d: f64,
    pub mu: f64,
    pub nu: f64,
    pub omega: f64,
    pub k1: f64,
    pub k2: f64,
}

impl OdeParams {
    /// Reference parameters of the reduced system: `r = 1.3`, `d = 0.25`, `μ = ω = 1`,
    /// `ν = k1 = 0.4`, with `k2` selecting the stable (0.8514) or periodic
    /// (0.7314) regime.
    pub fn reference(k2: f64) -> Self {
        Self {
            r: 1.3,
            d: 0.25,
            mu: 1.0,
            nu: 0.4,
            omega: 1.0,
            k1: 0.4,
            k2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("r", self.r),
            ("d", self.d),
            ("mu", self.mu),
            ("nu", self.nu),
            ("omega", self.omega),
            ("k1", self.k1),
            ("k2", self.k2),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(
                format!("ode.{name}"),
                format!("non-finite {v}"),
            ));
        }
        if !(self.d > 0.0) {
            return Err(Error::invalid("ode.d", "must be > 0"));
        }
        if !(self.k2 > 0.0) {
            return Err(Error::invalid("ode.k2", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeState {
    pub rho: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl OdeState {
    pub fn new(rho: f64, sigma: f64, gamma: f64) -> Self {
        Self { rho, sigma, gamma }
    }

    fn axpy(self, a: f64, k: OdeState) -> OdeState {
        OdeState::new(
            self.rho + a * k.rho,
            self.sigma + a * k.sigma,
            self.gamma + a * k.gamma,
        )
    }

    pub fn distance(&self, other: &OdeState) -> f64 {
        ((self.rho - other.rho).powi(2)
            + (self.sigma - other.sigma).powi(2)
            + (self.gamma - other.gamma).powi(2))
        .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.rho.abs().max(self.sigma.abs()).max(self.gamma.abs())
    }
}

pub fn ode_rhs(s: &OdeState, p: &OdeParams) -> OdeState {
    OdeState {
        rho: (p.r - p.d * s.rho - p.mu * s.sigma) * s.rho,
        sigma: s.gamma - (p.k1 + p.nu * s.rho) * s.sigma,
        gamma: s.gamma * (p.omega * s.rho - p.k2 * s.gamma),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeMethod {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<OdeState>,
    /// Number of components clamped to zero after going negative.
    pub clamped: usize,
    /// Most negative value seen before clamping (0 if none).
    pub min_before_clamp: f64,
}

impl OdeTrajectory {
    pub fn rho(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.rho).collect()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.sigma).collect()
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.gamma).collect()
    }

    pub fn last(&self) -> OdeState {
        *self.states.last().expect("non-empty trajectory")
    }
}

/// Fixed-step integration from `init` over `[0, t_end]`.
pub fn ode_run(
    params: &OdeParams,
    init: OdeState,
    t_end: f64,
    dt: f64,
    method: OdeMethod,
) -> Result<OdeTrajectory> {
    params.validate()?;
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::Precondition(format!(
            "T and dt must be > 0 (T = {t_end}, dt = {dt})"
        )));
    }
    let steps = (t_end / dt).round() as usize;
    let mut traj = OdeTrajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        clamped: 0,
        min_before_clamp: 0.0,
    };
    let mut s = init;
    traj.times.push(0.0);
    traj.states.push(s);
    for k in 1..=steps {
        s = match method {
            OdeMethod::Euler => s.axpy(dt, ode_rhs(&s, params)),
            OdeMethod::Rk4 => rk4_step(&s, params, dt),
        };
        for c in [&mut s.rho, &mut s.sigma, &mut s.gamma] {
            if !c.is_finite() {
                return Err(Error::Instability {
                    field: "ode",
                    t: k as f64 * dt,
                    detail: "non-finite state".into(),
                });
            }
            if *c < 0.0 {
                traj.min_before_clamp = traj.min_before_clamp.min(*c);
                traj.clamped += 1;
                *c = 0.0;
            }
        }
        traj.times.push(k as f64 * dt);
        traj.states.push(s);
    }
    Ok(traj)
}

fn rk4_step(s: &OdeState, p: &OdeParams, dt: f64) -> OdeState {
    let k1 = ode_rhs(s, p);
    let k2 = ode_rhs(&s.axpy(0.5 * dt, k1), p);
    let k3 = ode_rhs(&s.axpy(0.5 * dt, k2), p);
    let k4 = ode_rhs(&s.axpy(dt, k3), p);
    OdeState::new(
        s.rho + dt / 6.0 * (k1.rho + 2.0 * k2.rho + 2.0 * k3.rho + k4.rho),
        s.sigma + dt / 6.0 * (k1.sigma + 2.0 * k2.sigma + 2.0 * k3.sigma + k4.sigma),
        s.gamma + dt / 6.0 * (k1.gamma + 2.0 * k2.gamma + 2.0 * k3.gamma + k4.gamma),
    )
}

/// Effective ODE coefficients for a tumour population concentrated at
/// `x_star`: `r(x*)`, `d(x*)`, `μ(x*)·∫Ψ(x*,y)dy`, `∫ν`, `∫ω(x*,y)dy`.
pub fn reduce_params(params: &ModelParams, x_star: f64, grid: &PhenotypeGrid) -> Result<OdeParams> {
    if !(0.0..=1.0).contains(&x_star) {
        return Err(Error::Precondition(format!("x* = {x_star} outside [0, 1]")));
    }
    let ys = grid.nodes();
    let psi_row: Vec<f64> = ys.iter().map(|&y| params.psi_kernel(x_star, y)).collect();
    let omega_row: Vec<f64> = ys
        .iter()
        .map(|&y| params.omega_kernel_at(x_star, y))
        .collect();
    let nu = params.nu.evaluate(grid)?;
    Ok(OdeParams {
        r: params.r.value_at(x_star),
        d: params.d.value_at(x_star),
        mu: params.mu.value_at(x_star) * grid.quad(&psi_row)?,
        nu: grid.quad(&nu)?,
        omega: grid.quad(&omega_row)?,
        k1: params.k1,
        k2: params.k2,
    })
}

/// Result of the trailing-window oscillation test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub oscillatory: bool,
    /// `max − min` over the window.
    pub amplitude: f64,
    /// Mean spacing between retained peaks (0 when fewer than two).
    pub period_estimate: f64,
    pub peaks: usize,
    pub mean: f64,
    /// Amplitude over the second half of the window divided by the amplitude
    /// over the first half; near 1 for a sustained cycle, below 1 when damped.
    pub amplitude_ratio: f64,
}

/// Minimum number of samples the trailing window must contain.
pub const MIN_WINDOW_SAMPLES: usize = 100;
/// Relative amplitude (to the window mean) above which a signal may be
/// oscillatory.
pub const CYCLE_RELATIVE_AMPLITUDE: f64 = 0.05;
/// Minimum number of peaks in the window.
pub const CYCLE_MIN_PEAKS: usize = 3;
/// Allowed relative deviation of each peak spacing from the mean spacing.
pub const CYCLE_SPACING_TOLERANCE: f64 = 0.2;

/// Looks for a sustained oscillation in the last `window_fraction` of
/// `values` (sampled at `times`).
///
/// Oscillatory means: amplitude above 5% of the window mean and at least three
/// local maxima, each in the upper half of the window's range, with spacings
/// all within ±20% of their mean.
pub fn detect_limit_cycle(
    times: &[f64],
    values: &[f64],
    window_fraction: f64,
) -> Result<CycleReport> {
    if times.len() != values.len() {
        return Err(Error::Dimension {
            what: "cycle times vs values",
            expected: times.len(),
            found: values.len(),
        });
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Precondition(format!(
            "window fraction {window_fraction} outside (0, 1]"
        )));
    }
    let len = values.len();
    let count = ((len as f64) * window_fraction).round() as usize;
    if count < MIN_WINDOW_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "trailing window has {count} samples, need {MIN_WINDOW_SAMPLES}"
        )));
    }
    let start = len - count;
    let (t, v) = (&times[start..], &values[start..]);

    let (lo, hi) = min_max(v);
    let amplitude = hi - lo;
    let mean = v.iter().sum::<f64>() / count as f64;
    let half = count / 2;
    let (lo1, hi1) = min_max(&v[..half]);
    let (lo2, hi2) = min_max(&v[half..]);
    let early = hi1 - lo1;
    let amplitude_ratio = if early > 0.0 {
        (hi2 - lo2) / early
    } else {
        0.0
    };

    let mid = 0.5 * (lo + hi);
    let peak_times: Vec<f64> = (1..count - 1)
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] > mid)
        .map(|i| t[i])
        .collect();
    let spacings: Vec<f64> = peak_times.windows(2).map(|w| w[1] - w[0]).collect();
    let period_estimate = if spacings.is_empty() {
        0.0
    } else {
        spacings.iter().sum::<f64>() / spacings.len() as f64
    };
    let regular = !spacings.is_empty()
        && spacings
            .iter()
            .all(|s| (s - period_estimate).abs() <= CYCLE_SPACING_TOLERANCE * period_estimate);
    let oscillatory = amplitude > CYCLE_RELATIVE_AMPLITUDE * mean.abs()
        && amplitude > 0.0
        && peak_times.len() >= CYCLE_MIN_PEAKS
        && regular;

    Ok(CycleReport {
        oscillatory,
        amplitude,
        period_estimate,
        peaks: peak_times.len(),
        mean,
        amplitude_ratio,
    })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FunctionSpec;

    #[test]
    fn origin_is_equilibrium() {
        let d = ode_rhs(&OdeState::default(), &OdeParams::reference(0.7314));
        assert_eq!(d, OdeState::default());
    }

    #[test]
    fn reference_equilibria_residuals() {
        let lower = ode_rhs(
            &OdeState::new(0.5204, 1.1699, 0.7115),
            &OdeParams::reference(0.7314),
        );
        assert!(lower.max_abs() <= 1e-3, "{lower:?}");
        let upper = ode_rhs(
            &OdeState::new(0.6257, 1.1436, 0.746),
            &OdeParams::reference(0.8514),
        );
        assert!(upper.max_abs() <= 1e-2, "{upper:?}");
    }

    #[test]
    fn immune_decay_without_tumour() {
        let p = OdeParams::reference(0.7314);
        let traj = ode_run(&p, OdeState::new(0.0, 2.0, 0.0), 10.0, 0.01, OdeMethod::Rk4).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert_eq!(s.rho, 0.0);
            assert_eq!(s.gamma, 0.0);
            assert!((s.sigma - 2.0 * (-p.k1 * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn stable_regime_settles() {
        let traj = ode_run(
            &OdeParams::reference(0.8514),
            OdeState::new(1.5, 0.5, 3.0),
            500.0,
            0.01,
            OdeMethod::Rk4,
        )
        .unwrap();
        let target = OdeState::new(0.6257, 1.1436, 0.746);
        assert!(traj.last().distance(&target) < 0.02, "{:?}", traj.last());
    }

    #[test]
    fn run_preconditions() {
        let p = OdeParams::reference(0.8514);
        assert!(ode_run(&p, OdeState::default(), 1.0, 0.0, OdeMethod::Euler).is_err());
        let bad = OdeParams { k2: 0.0, ..p };
        assert!(ode_run(&bad, OdeState::default(), 1.0, 0.1, OdeMethod::Euler).is_err());
    }

    #[test]
    fn reduce_constant_model() {
        let g = PhenotypeGrid::new(101).unwrap();
        let params = ModelParams {
            r: FunctionSpec::constant(1.3),
            d: FunctionSpec::constant(0.25),
            mu: FunctionSpec::constant(1.0),
            psi: FunctionSpec::constant(2.0),
            nu: FunctionSpec::constant(0.4),
            k1: 0.4,
            k2: 0.7314,
            lambda_mix: 0.0,
            omega_kernel: crate::model::OmegaKernel::Uniform,
            ..ModelParams::default()
        };
        let o = reduce_params(&params, 0.3, &g).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(o.r, 1.3) && close(o.d, 0.25) && close(o.mu, 2.0));
        assert!(close(o.nu, 0.4) && close(o.omega, 1.0));
        assert_eq!((o.k1, o.k2), (0.4, 0.7314));
    }

    #[test]
    fn reduce_baseline_innate() {
        let g = PhenotypeGrid::new(1000).unwrap();
        let params = ModelParams {
            lambda_mix: 0.0,
            ..ModelParams::default()
        };
        let o = reduce_params(&params, 0.86, &g).unwrap();
        let mu_x = 1.0 - 0.1 * 0.86 * 0.86;
        assert!((o.mu - mu_x / 6.0).abs() < 1e-6);
        assert!((o.nu - 0.45).abs() < 1e-12);
        let at_zero = reduce_params(&ModelParams::default(), 0.0, &g).unwrap();
        assert!((at_zero.omega - (1.0 - (-1.0f64).exp())).abs() < 1e-5);
        assert!(reduce_params(&params, 1.5, &g).is_err());
    }

    fn sampled(f: impl Fn(f64) -> f64, t_end: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let n = (t_end / dt) as usize;
        let t: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let v = t.iter().map(|&x| f(x)).collect();
        (t, v)
    }

    #[test]
    fn constant_signal_is_not_a_cycle() {
        let (t, v) = sampled(|_| 0.7, 100.0, 0.1);
        let rep = detect_limit_cycle(&t, &v, 0.4).unwrap();
        assert!(!rep.oscillatory);
        assert_eq!(rep.amplitude, 0.0);
    }

    #[test]
    fn sine_period_recovered() {
        let period = 7.3;
        let (t, v) = sampled(
            |x| 0.5 + 0.1 * (2.0 * std::f64::consts::PI * x / period).sin(),
            200.0,
            0.05,
        );
        let rep = detect_limit_cycle(&t, &v, 0.4).unwrap();
        assert!(rep.oscillatory);
        assert!((rep.period_estimate - period).abs() < 0.05 * period);
        assert!((rep.amplitude - 0.2).abs() < 1e-3);
    }

    #[test]
    fn damped_oscillation_has_small_ratio() {
        let (t, v) = sampled(|x| 1.0 + 0.5 * (-x / 20.0).exp() * x.sin(), 200.0, 0.05);
        let rep = detect_limit_cycle(&t, &v, 0.4).unwrap();
        assert!(rep.amplitude_ratio < 0.5);
    }

    #[test]
    fn short_window_rejected() {
        let (t, v) = sampled(|x| x, 10.0, 0.1);
        assert!(matches!(
            detect_limit_cycle(&t, &v, 0.4),
            Err(Error::InsufficientData(_))
        ));
    }
}
