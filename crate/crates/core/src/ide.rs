//! Explicit time integration of the tumour / competent-immune / naïve-immune
//! system
//!
//! ```text
//! ∂t n(x) = [r(x) − d(x)ρ − μ(x)φ(x)] n(x)
//! ∂t ℓ(y) = p(y) − (ν(y)ρ/(1 + h·ICI(t)) + k1) ℓ(y)
//! ∂t p(y) = χ(y) p(y) − k2 p(y)²
//! ```
//!
//! Every coupling (ρ, φ, χ, ICI) is evaluated at the current state, then all
//! three densities take one forward-Euler step. Negative entries produced by
//! undershoot are clamped to zero and counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PhenotypeGrid;
use crate::model::{DiscreteModel, ModelParams};

/// Largest tolerated `|per-capita rate| · dt` before a step is refused.
pub const STABILITY_LIMIT: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    /// Tumour density over `x`.
    pub n: Vec<f64>,
    /// Competent immune density over `y`.
    pub ell: Vec<f64>,
    /// Naïve / inactive immune density over `y`.
    pub p: Vec<f64>,
}

impl SimState {
    pub fn zeros(len: usize) -> Self {
        Self {
            t: 0.0,
            n: vec![0.0; len],
            ell: vec![0.0; len],
            p: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// Gaussian tumour profile centred at `m` with standard deviation `e`,
    /// scaled to total mass `target_mass`; `ℓ⁰ ≡ 0` and `p⁰(y) = 1 − y²`.
    Gaussian { m: f64, e: f64, target_mass: f64 },
    Explicit {
        n0: Vec<f64>,
        ell0: Vec<f64>,
        p0: Vec<f64>,
    },
    /// Spatially constant densities; used for the constant-coefficient case.
    Uniform { n0: f64, ell0: f64, p0: f64 },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Gaussian {
            m: 0.5,
            e: 0.1,
            target_mass: 1.0,
        }
    }
}

pub fn make_initial(init: &InitialData, grid: &PhenotypeGrid) -> Result<SimState> {
    let state = match init {
        InitialData::Gaussian { m, e, target_mass } => {
            if !(*e > 0.0) {
                return Err(Error::invalid(
                    "initial.e",
                    "standard deviation must be > 0",
                ));
            }
            if !(*target_mass > 0.0) {
                return Err(Error::invalid("initial.target_mass", "must be > 0"));
            }
            let profile: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|x| (-(x - m).powi(2) / (2.0 * e * e)).exp())
                .collect();
            let mass = grid.quad(&profile)?;
            if !(mass > 0.0) {
                return Err(Error::ZeroMass);
            }
            let scale = target_mass / mass;
            SimState {
                t: 0.0,
                n: profile.iter().map(|v| v * scale).collect(),
                ell: vec![0.0; grid.len()],
                p: grid.nodes().iter().map(|y| 1.0 - y * y).collect(),
            }
        }
        InitialData::Explicit { n0, ell0, p0 } => {
            grid.check_len("initial n0", n0.len())?;
            grid.check_len("initial ell0", ell0.len())?;
            grid.check_len("initial p0", p0.len())?;
            SimState {
                t: 0.0,
                n: n0.clone(),
                ell: ell0.clone(),
                p: p0.clone(),
            }
        }
        InitialData::Uniform { n0, ell0, p0 } => SimState {
            t: 0.0,
            n: vec![*n0; grid.len()],
            ell: vec![*ell0; grid.len()],
            p: vec![*p0; grid.len()],
        },
    };
    for (name, v) in [("n0", &state.n), ("ell0", &state.ell), ("p0", &state.p)] {
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid(
                format!("initial.{name}"),
                "densities must be finite and >= 0",
            ));
        }
    }
    Ok(state)
}

/// Nonlocal terms of the current state.
#[derive(Debug, Clone)]
pub struct Couplings {
    pub rho: f64,
    pub phi: Vec<f64>,
    pub chi: Vec<f64>,
    pub dose: f64,
}

pub fn couplings(state: &SimState, model: &DiscreteModel) -> Couplings {
    let grid = &model.grid;
    let len = grid.len();
    let rho = grid.quad_unchecked(&state.n);
    // φ and χ vanish identically when their integrands do.
    let phi = if state.ell.iter().all(|&v| v == 0.0) {
        vec![0.0; len]
    } else {
        model.kernels.phi_unchecked(&state.ell, grid)
    };
    let chi = if state.p.iter().all(|&v| v == 0.0) {
        vec![0.0; len]
    } else {
        model.kernels.chi_unchecked(&state.n, grid)
    };
    Couplings {
        rho,
        phi,
        chi,
        dose: model.ici_dose(state.t),
    }
}

fn check_len(state: &SimState, model: &DiscreteModel) -> Result<()> {
    let grid = &model.grid;
    grid.check_len("state n", state.n.len())?;
    grid.check_len("state ell", state.ell.len())?;
    grid.check_len("state p", state.p.len())
}

/// One forward-Euler update using precomputed couplings. Returns the new
/// state and the number of entries clamped to zero.
pub fn advance(
    state: &SimState,
    c: &Couplings,
    model: &DiscreteModel,
    dt: f64,
) -> Result<(SimState, usize)> {
    let params = &model.params;
    let t = state.t;
    let guard = |field: &'static str, rate: f64| -> Result<()> {
        if !rate.is_finite() || rate.abs() * dt > STABILITY_LIMIT {
            return Err(Error::Instability {
                field,
                t,
                detail: format!("per-capita rate {rate} with dt {dt}"),
            });
        }
        Ok(())
    };
    let mut clamped = 0usize;
    let mut clamp = |v: f64| {
        if v < 0.0 {
            clamped += 1;
            0.0
        } else {
            v
        }
    };

    let len = state.n.len();
    let mut n = Vec::with_capacity(len);
    for i in 0..len {
        let rate = model.r[i] - model.d[i] * c.rho - model.mu[i] * c.phi[i];
        guard("n", rate)?;
        n.push(clamp(state.n[i] + dt * rate * state.n[i]));
    }

    let tolerance = 1.0 / (1.0 + params.h * c.dose);
    let mut ell = Vec::with_capacity(len);
    let mut p = Vec::with_capacity(len);
    for j in 0..len {
        let decay = model.nu[j] * c.rho * tolerance + params.k1;
        guard("ell", decay)?;
        ell.push(clamp(
            state.ell[j] + dt * (state.p[j] - decay * state.ell[j]),
        ));

        let growth = c.chi[j] - params.k2 * state.p[j];
        guard("p", growth)?;
        p.push(clamp(state.p[j] + dt * growth * state.p[j]));
    }

    let next_t = t + dt;
    for (field, v) in [("n", &n), ("ell", &ell), ("p", &p)] {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Instability {
                field,
                t: next_t,
                detail: "non-finite density".into(),
            });
        }
    }
    Ok((
        SimState {
            t: next_t,
            n,
            ell,
            p,
        },
        clamped,
    ))
}

/// Single time step from `state`.
pub fn step(state: &SimState, model: &DiscreteModel, dt: f64) -> Result<SimState> {
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("dt must be > 0, got {dt}")));
    }
    check_len(state, model)?;
    let c = couplings(state, model);
    advance(state, &c, model, dt).map(|(s, _)| s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

impl RunSettings {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            dt,
            snapshot_times: Vec::new(),
        }
    }

    pub fn with_snapshots(mut self, times: &[f64]) -> Self {
        self.snapshot_times = times.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Precondition(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Precondition(format!(
                "T must be > 0, got {}",
                self.t_end
            )));
        }
        if self.dt > self.t_end {
            return Err(Error::Precondition(format!(
                "dt = {} exceeds T = {}",
                self.dt, self.t_end
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub n: Vec<f64>,
    pub ell: Vec<f64>,
    pub p: Vec<f64>,
}

/// Recorded trajectory. Every series has one entry per time in `times`
/// (the initial state plus one per step).
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    /// `σ(t) = ∫ ℓ(t, y) dy`
    pub sigma: Vec<f64>,
    /// `γ(t) = ∫ p(t, y) dy`
    pub gamma: Vec<f64>,
    /// `∫ φ(t, x) dx`, the mean immune pressure over tumour phenotypes.
    pub phi_mean: Vec<f64>,
    pub ici_dose: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: SimState,
    /// Total count of density entries clamped to zero over the run.
    pub clamped: usize,
}

impl SimOutput {
    pub fn rho_final(&self) -> f64 {
        *self.rho.last().expect("non-empty output")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Integrates from `initial` up to `settings.t_end`.
pub fn run(model: &DiscreteModel, initial: SimState, settings: &RunSettings) -> Result<SimOutput> {
    settings.validate()?;
    check_len(&initial, model)?;
    let steps = settings.steps();
    let dt = settings.dt;
    let t0 = initial.t;

    let mut snap_steps: Vec<usize> = settings
        .snapshot_times
        .iter()
        .map(|&t| (((t - t0) / dt).round().max(0.0) as usize).min(steps))
        .collect();
    snap_steps.sort_unstable();
    snap_steps.dedup();
    let mut next_snap = snap_steps.iter().copied().peekable();

    let grid = &model.grid;
    let mut out = SimOutput {
        times: Vec::with_capacity(steps + 1),
        rho: Vec::with_capacity(steps + 1),
        sigma: Vec::with_capacity(steps + 1),
        gamma: Vec::with_capacity(steps + 1),
        phi_mean: Vec::with_capacity(steps + 1),
        ici_dose: Vec::with_capacity(steps + 1),
        snapshots: Vec::with_capacity(snap_steps.len()),
        final_state: SimState::zeros(0),
        clamped: 0,
    };

    let mut state = initial;
    for k in 0..=steps {
        state.t = t0 + k as f64 * dt;
        let c = couplings(&state, model);
        out.times.push(state.t);
        out.rho.push(c.rho);
        out.sigma.push(grid.quad_unchecked(&state.ell));
        out.gamma.push(grid.quad_unchecked(&state.p));
        out.phi_mean.push(grid.quad_unchecked(&c.phi));
        out.ici_dose.push(c.dose);
        if next_snap.peek() == Some(&k) {
            next_snap.next();
            out.snapshots.push(Snapshot {
                t: state.t,
                n: state.n.clone(),
                ell: state.ell.clone(),
                p: state.p.clone(),
            });
        }
        if k == steps {
            break;
        }
        let (next, clamped) = advance(&state, &c, model, dt)?;
        out.clamped += clamped;
        state = next;
    }
    out.final_state = state;
    Ok(out)
}

/// Builds the discrete model and initial state, then runs.
pub fn simulate(
    params: &ModelParams,
    init: &InitialData,
    grid: &PhenotypeGrid,
    settings: &RunSettings,
) -> Result<SimOutput> {
    let model = DiscreteModel::new(params, grid)?;
    let initial = make_initial(init, grid)?;
    run(&model, initial, settings)
}

/// Tumour cells alone: the immune densities are held at zero, which leaves
/// the logistic nonlocal equation `∂t n = [r − dρ] n`.
pub fn run_tumour_alone(
    model: &DiscreteModel,
    initial: SimState,
    settings: &RunSettings,
) -> Result<SimOutput> {
    let len = initial.n.len();
    let state = SimState {
        ell: vec![0.0; len],
        p: vec![0.0; len],
        ..initial
    };
    run(model, state, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FunctionSpec;

    fn model(n: usize, params: &ModelParams) -> DiscreteModel {
        DiscreteModel::new(params, &PhenotypeGrid::new(n).unwrap()).unwrap()
    }

    #[test]
    fn gaussian_initial_data() {
        let g = PhenotypeGrid::new(1000).unwrap();
        let s1 = make_initial(&InitialData::default(), &g).unwrap();
        assert!((g.quad(&s1.n).unwrap() - 1.0).abs() < 1e-10);
        let peak = crate::grid::argmax(&s1.n);
        assert!((g.node(peak) - 0.5).abs() <= g.spacing());
        assert!(s1.ell.iter().all(|&v| v == 0.0));
        assert!((s1.p[999] - 0.0).abs() < 1e-15 && s1.p[0] == 1.0);

        let s2 = make_initial(
            &InitialData::Gaussian {
                m: 0.5,
                e: 0.1,
                target_mass: 2.0,
            },
            &g,
        )
        .unwrap();
        for (a, b) in s1.n.iter().zip(&s2.n) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn bad_initial_data() {
        let g = PhenotypeGrid::new(11).unwrap();
        let bad = InitialData::Gaussian {
            m: 0.5,
            e: 0.0,
            target_mass: 1.0,
        };
        assert!(make_initial(&bad, &g).is_err());
        let short = InitialData::Explicit {
            n0: vec![0.0; 10],
            ell0: vec![0.0; 11],
            p0: vec![0.0; 11],
        };
        assert!(matches!(
            make_initial(&short, &g),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_state_is_fixed() {
        let m = model(21, &ModelParams::default());
        let z = make_initial(
            &InitialData::Explicit {
                n0: vec![0.0; 21],
                ell0: vec![0.0; 21],
                p0: vec![0.0; 21],
            },
            &m.grid,
        )
        .unwrap();
        let next = step(&z, &m, 0.1).unwrap();
        assert_eq!(next.n, z.n);
        assert_eq!(next.ell, z.ell);
        assert_eq!(next.p, z.p);
        assert!((next.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn no_predation_gives_logistic_update() {
        let params = ModelParams {
            mu: FunctionSpec::constant(0.0),
            ..ModelParams::default()
        };
        let m = model(101, &params);
        let mut s = make_initial(&InitialData::default(), &m.grid).unwrap();
        s.ell = vec![3.0; 101];
        let next = step(&s, &m, 0.1).unwrap();
        let rho = m.grid.quad(&s.n).unwrap();
        for i in 0..101 {
            let expect = s.n[i] + 0.1 * (m.r[i] - m.d[i] * rho) * s.n[i];
            assert_eq!(next.n[i], expect);
        }
    }

    #[test]
    fn nonpositive_dt_rejected() {
        let m = model(11, &ModelParams::default());
        let s = make_initial(&InitialData::default(), &m.grid).unwrap();
        assert!(matches!(step(&s, &m, 0.0), Err(Error::Precondition(_))));
        assert!(run(&m, s.clone(), &RunSettings::new(10.0, 0.0)).is_err());
        assert!(run(&m, s, &RunSettings::new(1.0, 2.0)).is_err());
    }

    #[test]
    fn stability_guard_names_field() {
        let params = ModelParams {
            r: FunctionSpec::constant(1000.0),
            ..ModelParams::default()
        };
        let m = model(11, &params);
        let s = make_initial(&InitialData::default(), &m.grid).unwrap();
        match step(&s, &m, 1.0) {
            Err(Error::Instability { field, t, .. }) => {
                assert_eq!(field, "n");
                assert_eq!(t, 0.0);
            }
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn snapshots_use_nearest_step() {
        let m = model(11, &ModelParams::default());
        let s = make_initial(&InitialData::default(), &m.grid).unwrap();
        let settings = RunSettings::new(1.0, 0.1).with_snapshots(&[0.0, 0.44, 0.46, 5.0]);
        let out = run(&m, s, &settings).unwrap();
        let ts: Vec<f64> = out.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 4);
        assert!((ts[1] - 0.4).abs() < 1e-12 && (ts[2] - 0.5).abs() < 1e-12);
        assert!((ts[3] - 1.0).abs() < 1e-12);
        assert_eq!(out.times.len(), 11);
        assert_eq!(out.rho.len(), out.sigma.len());
        assert!(out.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn tumour_alone_empty_tumour_stays_empty() {
        let m = model(21, &ModelParams::default());
        let mut s = make_initial(&InitialData::default(), &m.grid).unwrap();
        s.n = vec![0.0; 21];
        let out = run_tumour_alone(&m, s, &RunSettings::new(10.0, 0.1)).unwrap();
        assert!(out.rho.iter().all(|&r| r == 0.0));
    }
}
