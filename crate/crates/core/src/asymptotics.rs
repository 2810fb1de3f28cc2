//! Long-time analysis: carrying capacity, a-priori bounds, the
//! non-extinction margin, and fixed-point solvers for the limit systems that
//! characterize a Dirac-concentrated tumour `n∞ = ρ∞ δ_{x∞}`.
//!
//! Innate response (`λ = 0`), unknowns `(ρ, φ)`:
//!
//! ```text
//! ρ = max_x (r − μφ)/d
//! φ = (ρ/k2) ∫ ψ(y) ω(x(ρ,φ), y) / (ν(y)ρ + k1) dy
//! ```
//!
//! Mixed or adaptive response, unknowns `(ρ, ℓ(·))`:
//!
//! ```text
//! ρ    = max_x (r − μ ∫Ψ(x,·)ℓ)/d
//! ℓ(y) = (ρ/k2) ω(x(ρ,ℓ), y) / (ν(y)ρ + k1)
//! ```
//!
//! where `x(·)` is the maximizer of the fitness `r − dρ − μφ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::argmax;
use crate::model::DiscreteModel;

/// Nodes whose ratio `r/d` is within this of the maximum belong to the
/// concentration set.
pub const CONCENTRATION_SET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarryingCapacity {
    pub rho_star: f64,
    pub x_star: f64,
    pub x_star_index: usize,
    /// Node indices of `argmax r/d`.
    pub set: Vec<usize>,
}

pub fn carrying_capacity(model: &DiscreteModel) -> CarryingCapacity {
    let ratio: Vec<f64> = model.r.iter().zip(&model.d).map(|(r, d)| r / d).collect();
    let idx = argmax(&ratio);
    let rho_star = ratio[idx];
    let set: Vec<usize> = ratio
        .iter()
        .enumerate()
        .filter(|(_, &q)| rho_star - q <= CONCENTRATION_SET_TOL)
        .map(|(i, _)| i)
        .collect();
    let first = set[0];
    CarryingCapacity {
        rho_star,
        x_star: model.grid.node(first),
        x_star_index: first,
        set,
    }
}

/// Upper bounds on the long-time densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub rho_bar: f64,
    /// `ω^M(y) = max_x ω(x, y)`
    pub omega_max: Vec<f64>,
    /// `p̄(y) = ω^M(y) ρ̄ / k2`
    pub p_bar: Vec<f64>,
    /// `ℓ̄(y) = p̄(y) / k1`
    pub ell_bar: Vec<f64>,
    /// Innate bound `∫ ψ ℓ̄`.
    pub phi_bar: f64,
    /// Adaptive bound `∫ Ψ(x, y) ℓ̄(y) dy`; constant in `x` when `λ = 0`.
    pub phi_bar_x: Vec<f64>,
}

pub fn apriori_bounds(model: &DiscreteModel) -> Result<Bounds> {
    let params = &model.params;
    if !(params.k1 > 0.0) {
        return Err(Error::Unbounded(format!(
            "k1 = {} gives no bound on the competent immune density",
            params.k1
        )));
    }
    let rho_bar = carrying_capacity(model).rho_star;
    let omega_max = model.kernels.omega_column_max();
    let p_bar: Vec<f64> = omega_max.iter().map(|w| w * rho_bar / params.k2).collect();
    let ell_bar: Vec<f64> = p_bar.iter().map(|p| p / params.k1).collect();
    let psi_ell: Vec<f64> = model.psi.iter().zip(&ell_bar).map(|(a, b)| a * b).collect();
    let phi_bar = model.grid.quad_unchecked(&psi_ell);
    let phi_bar_x = model.kernels.phi_unchecked(&ell_bar, &model.grid);
    Ok(Bounds {
        rho_bar,
        omega_max,
        p_bar,
        ell_bar,
        phi_bar,
        phi_bar_x,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonExtinction {
    pub holds: bool,
    /// `min_x (r − μ φ̄(x))`
    pub margin: f64,
    pub argmin_x: f64,
}

/// Sufficient condition ruling out eradication. Uses the x-dependent bound,
/// which coincides with the innate form when `λ = 0`.
pub fn non_extinction_check(model: &DiscreteModel) -> Result<NonExtinction> {
    let bounds = apriori_bounds(model)?;
    let (idx, margin) = model
        .r
        .iter()
        .zip(&model.mu)
        .zip(&bounds.phi_bar_x)
        .map(|((r, mu), phi)| r - mu * phi)
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) },
        );
    Ok(NonExtinction {
        holds: margin > 0.0,
        margin,
        argmin_x: model.grid.node(idx),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointSettings {
    /// Relaxation weight: `new = (1 − θ)·old + θ·map(old)`.
    pub damping: f64,
    /// Convergence threshold on the max-norm of one update.
    pub step_tol: f64,
    pub max_iter: usize,
    /// Minimum gap between the largest and second-largest fitness values for
    /// the maximizer to count as unique.
    pub argmax_gap_tol: f64,
    /// Converged solutions closer than this (max-norm) are merged.
    pub cluster_tol: f64,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        Self {
            damping: 0.5,
            step_tol: 1e-10,
            max_iter: 100_000,
            argmax_gap_tol: 1e-8,
            cluster_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `|ρ − max_x (r − μφ)/d|`
    pub rho: f64,
    /// Innate: `|φ − map_φ|`; adaptive: `sup_y |ℓ − map_ℓ|`.
    pub immune: f64,
    /// `max_x (r − dρ − μφ)`, zero at a genuine limit.
    pub max_fitness: f64,
}

/// One solution of a limit system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub rho_inf: f64,
    /// Immune pressure at `x∞` (`∫Ψ(x∞,·)ℓ∞`; equals `∫ψℓ∞` when `λ = 0`).
    pub phi_inf: f64,
    /// `ℓ∞(y)`; reconstructed from `(ρ∞, x∞)` for the innate solver.
    pub ell_inf: Vec<f64>,
    pub x_inf: f64,
    pub x_index: usize,
    pub residuals: Residuals,
    pub unique_argmax: bool,
    pub argmax_gap: f64,
    pub iterations: usize,
    /// Index of the first start that reached this solution.
    pub start_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub converged: bool,
    /// Distinct converged solutions ordered by first start index.
    pub solutions: Vec<FixedPoint>,
    /// Largest max-norm distance between any two converged starts.
    pub multistart_spread: f64,
    pub starts_total: usize,
    pub starts_converged: usize,
    /// Converged starts discarded for leaving the a-priori rectangle.
    pub starts_rejected: usize,
    /// Starts stopped early because the iterates repeat with a period
    /// between 2 and [`MAX_CYCLE_PERIOD`] (the maximizer keeps jumping).
    pub starts_cycling: usize,
}

impl FixedPointResult {
    pub fn best(&self) -> Option<&FixedPoint> {
        self.solutions.first()
    }

    pub fn is_unique(&self) -> bool {
        self.solutions.len() == 1
    }
}

/// Shared pieces of both limit systems.
struct LimitMaps<'a> {
    model: &'a DiscreteModel,
    /// `ν` scaled by the long-run checkpoint-inhibitor factor.
    nu_eff: Vec<f64>,
}

impl<'a> LimitMaps<'a> {
    fn new(model: &'a DiscreteModel) -> Self {
        let p = &model.params;
        let factor = 1.0 / (1.0 + p.h * p.ici.dose(f64::INFINITY));
        Self {
            model,
            nu_eff: model.nu.iter().map(|v| v * factor).collect(),
        }
    }

    fn fitness(&self, rho: f64, phi: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.model;
        (0..m.len())
            .map(|i| m.r[i] - m.d[i] * rho - m.mu[i] * phi(i))
            .collect()
    }

    fn rho_map(&self, phi: &dyn Fn(usize) -> f64) -> f64 {
        let m = self.model;
        (0..m.len())
            .map(|i| (m.r[i] - m.mu[i] * phi(i)) / m.d[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `ℓ(y) = (ρ/k2) ω(x, y)/(ν(y)ρ + k1)` for a tumour concentrated at node `x`.
    fn ell_profile(&self, rho: f64, x_index: usize) -> Vec<f64> {
        let p = &self.model.params;
        self.model
            .kernels
            .omega_row(x_index)
            .iter()
            .zip(&self.nu_eff)
            .map(|(w, nu)| rho / p.k2 * w / (nu * rho + p.k1))
            .collect()
    }

    fn innate_phi_map(&self, rho: f64, x_index: usize) -> f64 {
        let ell = self.ell_profile(rho, x_index);
        let integrand: Vec<f64> = self
            .model
            .psi
            .iter()
            .zip(&ell)
            .map(|(a, b)| a * b)
            .collect();
        self.model.grid.quad_unchecked(&integrand)
    }
}

fn top_two_gap(values: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in values {
        if v > best {
            second = best;
            best = v;
        } else if v > second {
            second = v;
        }
    }
    best - second
}

/// `(p∞, ℓ∞)` for `n∞ = ρ∞ δ_{x∞}`:
/// `p∞(y) = ρ∞ ω(x∞, y)/k2` and `ℓ∞ = p∞/(ν ρ∞ + k1)`.
pub fn limit_immune_profiles(
    model: &DiscreteModel,
    rho: f64,
    x_index: usize,
) -> (Vec<f64>, Vec<f64>) {
    let maps = LimitMaps::new(model);
    let k = &model.params;
    let p_inf: Vec<f64> = model
        .kernels
        .omega_row(x_index)
        .iter()
        .map(|w| rho * w / k.k2)
        .collect();
    let ell_inf = p_inf
        .iter()
        .zip(&maps.nu_eff)
        .map(|(p, nu)| p / (nu * rho + k.k1))
        .collect();
    (p_inf, ell_inf)
}

/// Default innate starts: `ρ ∈ {¼,½,¾,1}·ρ̄` × `φ ∈ {¼,1}·φ̄`.
pub fn default_innate_starts(model: &DiscreteModel) -> Vec<(f64, f64)> {
    let cc = carrying_capacity(model);
    let phi_hi = match apriori_bounds(model) {
        Ok(b) => b.phi_bar,
        Err(_) => LimitMaps::new(model).innate_phi_map(cc.rho_star, cc.x_star_index),
    };
    let mut starts = Vec::with_capacity(8);
    for rf in [0.25, 0.5, 0.75, 1.0] {
        for pf in [0.25, 1.0] {
            starts.push((rf * cc.rho_star, pf * phi_hi));
        }
    }
    starts
}

/// Default adaptive starts: `ρ = k·ρ̄/8`, `k = 1..8`.
pub fn default_adaptive_starts(model: &DiscreteModel) -> Vec<f64> {
    let rho_bar = carrying_capacity(model).rho_star;
    (1..=8).map(|k| rho_bar * k as f64 / 8.0).collect()
}

/// Longest period checked by the cycle watch.
pub const MAX_CYCLE_PERIOD: usize = 8;

/// Remembers recent iterates and reports when the sequence has returned
/// exactly (within the step tolerance) to a state 2..=MAX_CYCLE_PERIOD
/// iterations back.
struct CycleWatch {
    history: std::collections::VecDeque<Vec<f64>>,
    tol: f64,
}

impl CycleWatch {
    fn new(tol: f64) -> Self {
        Self {
            history: std::collections::VecDeque::with_capacity(MAX_CYCLE_PERIOD + 1),
            tol,
        }
    }

    fn push(&mut self, state: Vec<f64>) -> bool {
        let len = self.history.len();
        let cycling =
            (2..=len).any(|p| max_norm_distance(&self.history[len - p], &state) < self.tol);
        if len == MAX_CYCLE_PERIOD {
            self.history.pop_front();
        }
        self.history.push_back(state);
        cycling
    }
}

struct Trial {
    rho: f64,
    phi: f64,
    ell: Vec<f64>,
    iterations: usize,
    converged: bool,
    cycling: bool,
}

/// Solves the innate limit system by damped fixed-point iteration from every
/// start. Requires `λ = 0`. An empty `starts` uses [`default_innate_starts`].
pub fn solve_fixed_point_innate(
    model: &DiscreteModel,
    starts: &[(f64, f64)],
    settings: &FixedPointSettings,
) -> Result<FixedPointResult> {
    if model.params.lambda_mix != 0.0 {
        return Err(Error::Precondition(format!(
            "innate limit system needs lambda = 0, got {}",
            model.params.lambda_mix
        )));
    }
    let starts = if starts.is_empty() {
        default_innate_starts(model)
    } else {
        starts.to_vec()
    };
    let maps = LimitMaps::new(model);
    let theta = settings.damping;

    let trials: Vec<Trial> = starts
        .par_iter()
        .map(|&(rho0, phi0)| {
            let (mut rho, mut phi) = (rho0, phi0);
            let mut watch = CycleWatch::new(settings.step_tol);
            for it in 1..=settings.max_iter {
                let fit = maps.fitness(rho, &|_| phi);
                let x = argmax(&fit);
                let rho_new = maps.rho_map(&|_| phi).max(0.0);
                let phi_new = maps.innate_phi_map(rho, x);
                let next_rho = (1.0 - theta) * rho + theta * rho_new;
                let next_phi = (1.0 - theta) * phi + theta * phi_new;
                let delta = (next_rho - rho).abs().max((next_phi - phi).abs());
                rho = next_rho;
                phi = next_phi;
                if !delta.is_finite() {
                    break;
                }
                if delta < settings.step_tol {
                    return Trial {
                        rho,
                        phi,
                        ell: Vec::new(),
                        iterations: it,
                        converged: true,
                        cycling: false,
                    };
                }
                if watch.push(vec![rho, phi]) {
                    return Trial {
                        rho,
                        phi,
                        ell: Vec::new(),
                        iterations: it,
                        converged: false,
                        cycling: true,
                    };
                }
            }
            Trial {
                rho,
                phi,
                ell: Vec::new(),
                iterations: settings.max_iter,
                converged: false,
                cycling: false,
            }
        })
        .collect();

    let bounds = apriori_bounds(model).ok();
    let finish = |start_index: usize, t: &Trial| -> Option<FixedPoint> {
        if let Some(b) = &bounds {
            let slack = 1.0 + 1e-9;
            if t.rho < 0.0
                || t.rho > b.rho_bar * slack
                || t.phi < 0.0
                || t.phi > b.phi_bar * slack + 1e-12
            {
                return None;
            }
        }
        let fit = maps.fitness(t.rho, &|_| t.phi);
        let x = argmax(&fit);
        let (_, ell_inf) = limit_immune_profiles(model, t.rho, x);
        Some(FixedPoint {
            rho_inf: t.rho,
            phi_inf: t.phi,
            ell_inf,
            x_inf: model.grid.node(x),
            x_index: x,
            residuals: Residuals {
                rho: (t.rho - maps.rho_map(&|_| t.phi)).abs(),
                immune: (t.phi - maps.innate_phi_map(t.rho, x)).abs(),
                max_fitness: fit[x],
            },
            unique_argmax: top_two_gap(&fit) >= settings.argmax_gap_tol,
            argmax_gap: top_two_gap(&fit),
            iterations: t.iterations,
            start_index,
        })
    };
    let point = |t: &Trial| vec![t.rho, t.phi];
    Ok(merge(&trials, finish, point, settings))
}

/// Solves the mixed/adaptive limit system (any `λ`) by damped iteration that
/// alternates the `ρ` and `ℓ` updates. An empty `starts` uses
/// [`default_adaptive_starts`]; each start seeds `ℓ` from the `ℓ`-equation at
/// `x = x*`.
pub fn solve_fixed_point_adaptive(
    model: &DiscreteModel,
    starts: &[f64],
    settings: &FixedPointSettings,
) -> Result<FixedPointResult> {
    let starts = if starts.is_empty() {
        default_adaptive_starts(model)
    } else {
        starts.to_vec()
    };
    let maps = LimitMaps::new(model);
    let grid = &model.grid;
    let x_star = carrying_capacity(model).x_star_index;
    let theta = settings.damping;

    let trials: Vec<Trial> = starts
        .par_iter()
        .map(|&rho0| {
            let mut rho = rho0;
            let mut ell = maps.ell_profile(rho0, x_star);
            let mut watch = CycleWatch::new(settings.step_tol);
            for it in 1..=settings.max_iter {
                let phi = model.kernels.phi_unchecked(&ell, grid);
                let rho_new = maps.rho_map(&|i| phi[i]).max(0.0);
                let next_rho = (1.0 - theta) * rho + theta * rho_new;
                let x = argmax(&maps.fitness(next_rho, &|i| phi[i]));
                let ell_map = maps.ell_profile(next_rho, x);
                let mut delta = (next_rho - rho).abs();
                for (l, m) in ell.iter_mut().zip(&ell_map) {
                    let next = (1.0 - theta) * *l + theta * m;
                    delta = delta.max((next - *l).abs());
                    *l = next;
                }
                rho = next_rho;
                if !delta.is_finite() {
                    break;
                }
                if delta < settings.step_tol {
                    return Trial {
                        rho,
                        phi: 0.0,
                        ell,
                        iterations: it,
                        converged: true,
                        cycling: false,
                    };
                }
                let mut state = Vec::with_capacity(ell.len() + 1);
                state.push(rho);
                state.extend_from_slice(&ell);
                if watch.push(state) {
                    return Trial {
                        rho,
                        phi: 0.0,
                        ell,
                        iterations: it,
                        converged: false,
                        cycling: true,
                    };
                }
            }
            Trial {
                rho,
                phi: 0.0,
                ell,
                iterations: settings.max_iter,
                converged: false,
                cycling: false,
            }
        })
        .collect();

    let bounds = apriori_bounds(model).ok();
    let finish = |start_index: usize, t: &Trial| -> Option<FixedPoint> {
        if let Some(b) = &bounds {
            let slack = 1.0 + 1e-9;
            let outside = t.rho < 0.0
                || t.rho > b.rho_bar * slack
                || t.ell
                    .iter()
                    .zip(&b.ell_bar)
                    .any(|(l, lb)| *l < 0.0 || *l > lb * slack + 1e-12);
            if outside {
                return None;
            }
        }
        let phi = model.kernels.phi_unchecked(&t.ell, grid);
        let fit = maps.fitness(t.rho, &|i| phi[i]);
        let x = argmax(&fit);
        let ell_map = maps.ell_profile(t.rho, x);
        let ell_res = t
            .ell
            .iter()
            .zip(&ell_map)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Some(FixedPoint {
            rho_inf: t.rho,
            phi_inf: phi[x],
            ell_inf: t.ell.clone(),
            x_inf: grid.node(x),
            x_index: x,
            residuals: Residuals {
                rho: (t.rho - maps.rho_map(&|i| phi[i])).abs(),
                immune: ell_res,
                max_fitness: fit[x],
            },
            unique_argmax: top_two_gap(&fit) >= settings.argmax_gap_tol,
            argmax_gap: top_two_gap(&fit),
            iterations: t.iterations,
            start_index,
        })
    };
    let point = |t: &Trial| {
        let mut v = Vec::with_capacity(t.ell.len() + 1);
        v.push(t.rho);
        v.extend_from_slice(&t.ell);
        v
    };
    Ok(merge(&trials, finish, point, settings))
}

fn max_norm_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn merge(
    trials: &[Trial],
    finish: impl Fn(usize, &Trial) -> Option<FixedPoint>,
    point: impl Fn(&Trial) -> Vec<f64>,
    settings: &FixedPointSettings,
) -> FixedPointResult {
    let mut solutions: Vec<FixedPoint> = Vec::new();
    let mut kept_points: Vec<Vec<f64>> = Vec::new();
    let mut all_points: Vec<Vec<f64>> = Vec::new();
    let mut converged = 0;
    let mut rejected = 0;
    for (i, t) in trials.iter().enumerate() {
        if !t.converged {
            continue;
        }
        converged += 1;
        let Some(fp) = finish(i, t) else {
            rejected += 1;
            continue;
        };
        let pt = point(t);
        all_points.push(pt.clone());
        if kept_points
            .iter()
            .all(|k| max_norm_distance(k, &pt) > settings.cluster_tol)
        {
            kept_points.push(pt);
            solutions.push(fp);
        }
    }
    let mut spread: f64 = 0.0;
    for i in 0..all_points.len() {
        for j in i + 1..all_points.len() {
            spread = spread.max(max_norm_distance(&all_points[i], &all_points[j]));
        }
    }
    FixedPointResult {
        converged: !solutions.is_empty(),
        solutions,
        multistart_spread: spread,
        starts_total: trials.len(),
        starts_converged: converged,
        starts_rejected: rejected,
        starts_cycling: trials.iter().filter(|t| t.cycling).count(),
    }
}
