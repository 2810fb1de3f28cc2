//! Model parameters, interaction kernels and the nonlocal coupling terms.
//!
//! Tumour cells feel the immune pressure
//! `φ(x) = ∫ Ψ_λ(x,y) ℓ(y) dy` with
//! `Ψ_λ(x,y) = ((1-λ) + (λ/v) e^{-|x-y|/v}) ψ(y)`,
//! and naïve immune cells are stimulated by
//! `χ(y) = ∫ ω(x,y) n(x) dx` with `ω(x,y) = (α/s) e^{-|x-y|/s}`.
//! Neither exponential kernel is renormalized on `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FunctionSpec, PhenotypeGrid};

/// Shape of the detection kernel `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaKernel {
    /// `(α/s)·e^{-|x-y|/s}`
    #[default]
    Exponential,
    /// `ω ≡ α`, the constant-coefficient case that reduces to the ODE system.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IciKind {
    Constant {
        dose: f64,
    },
    /// Right-continuous steps: `doses[k]` applies on
    /// `[breakpoints[k-1], breakpoints[k])`, so `doses.len() == breakpoints.len() + 1`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        doses: Vec<f64>,
    },
}

/// Immune checkpoint inhibitor dosing over time, bounded by `max_dose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IciSchedule {
    pub kind: IciKind,
    pub max_dose: f64,
}

impl IciSchedule {
    pub fn constant(dose: f64) -> Self {
        Self {
            kind: IciKind::Constant { dose },
            max_dose: dose,
        }
    }

    pub fn dose(&self, t: f64) -> f64 {
        match &self.kind {
            IciKind::Constant { dose } => *dose,
            IciKind::PiecewiseConstant { breakpoints, doses } => {
                let k = breakpoints.partition_point(|&b| b <= t);
                doses[k]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_dose.is_finite() && self.max_dose >= 0.0) {
            return Err(Error::invalid("ici.max_dose", "must be finite and >= 0"));
        }
        let in_range = |d: f64| d.is_finite() && (0.0..=self.max_dose).contains(&d);
        match &self.kind {
            IciKind::Constant { dose } => {
                if !in_range(*dose) {
                    return Err(Error::invalid(
                        "ici.dose",
                        format!("{dose} outside [0, {}]", self.max_dose),
                    ));
                }
            }
            IciKind::PiecewiseConstant { breakpoints, doses } => {
                if doses.len() != breakpoints.len() + 1 {
                    return Err(Error::invalid(
                        "ici.doses",
                        "need exactly one more dose than breakpoints",
                    ));
                }
                if breakpoints.windows(2).any(|w| w[1] <= w[0])
                    || breakpoints.iter().any(|b| !b.is_finite())
                {
                    return Err(Error::invalid(
                        "ici.breakpoints",
                        "must be finite and strictly increasing",
                    ));
                }
                if let Some(d) = doses.iter().find(|&&d| !in_range(d)) {
                    return Err(Error::invalid(
                        "ici.doses",
                        format!("{d} outside [0, {}]", self.max_dose),
                    ));
                }
            }
        }
        Ok(())
    }
}

impl Default for IciSchedule {
    fn default() -> Self {
        IciSchedule::constant(0.0)
    }
}

/// All model functions and scalars. Defaults are the baseline values used for
/// the untreated mixed innate/adaptive runs, with `λ = 0.5` and
/// `(s, v) = (1, 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Tumour proliferation rate `r(x)`.
    pub r: FunctionSpec,
    /// Tumour competition death rate `d(x)`.
    pub d: FunctionSpec,
    /// Tumour sensitivity to immune predation `μ(x)`.
    pub mu: FunctionSpec,
    /// Immune efficacy weight `ψ(y)`.
    pub psi: FunctionSpec,
    /// Tumour-induced immunotolerance `ν(y)`.
    pub nu: FunctionSpec,
    pub k1: f64,
    pub k2: f64,
    pub alpha: f64,
    pub h: f64,
    #[serde(rename = "lambda")]
    pub lambda_mix: f64,
    pub v: f64,
    pub s: f64,
    pub omega_kernel: OmegaKernel,
    pub ici: IciSchedule,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            r: FunctionSpec::polynomial(&[0.666, 0.0, -0.132]),
            d: FunctionSpec::polynomial(&[0.5, -0.15]),
            mu: FunctionSpec::polynomial(&[1.0, 0.0, -0.1]),
            psi: FunctionSpec::polynomial(&[0.0, 0.0, 0.5]),
            nu: FunctionSpec::polynomial(&[0.5, -0.1]),
            k1: 0.5,
            k2: 1.5,
            alpha: 1.0,
            h: 10.0,
            lambda_mix: 0.5,
            v: 0.5,
            s: 1.0,
            omega_kernel: OmegaKernel::Exponential,
            ici: IciSchedule::default(),
        }
    }
}

impl ModelParams {
    /// Checks scalar ranges and the sign of every function at the grid nodes.
    ///
    /// `d` must be strictly positive; the other rate functions may vanish
    /// (an inert immune system is expressed as `ψ ≡ 0` or `μ ≡ 0`).
    pub fn validate(&self, grid: &PhenotypeGrid) -> Result<()> {
        let scalar = |name: &str, value: f64, ok: bool, rule: &str| {
            if value.is_finite() && ok {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{value} violates {rule}")))
            }
        };
        scalar("k1", self.k1, self.k1 >= 0.0, ">= 0")?;
        scalar("k2", self.k2, self.k2 > 0.0, "> 0")?;
        scalar("alpha", self.alpha, self.alpha >= 0.0, ">= 0")?;
        scalar("h", self.h, self.h >= 0.0, ">= 0")?;
        scalar(
            "lambda",
            self.lambda_mix,
            (0.0..=1.0).contains(&self.lambda_mix),
            "0 <= lambda <= 1",
        )?;
        scalar("v", self.v, self.v > 0.0, "> 0")?;
        scalar("s", self.s, self.s > 0.0, "> 0")?;
        self.ici.validate()?;

        for (name, f) in [
            ("r", &self.r),
            ("mu", &self.mu),
            ("psi", &self.psi),
            ("nu", &self.nu),
        ] {
            let vals = f.evaluate(grid)?;
            if let Some(bad) = vals.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::invalid(
                    name,
                    format!("takes value {bad} on the grid"),
                ));
            }
        }
        let d = self.d.evaluate(grid)?;
        if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(
                "d",
                format!("must be > 0, takes value {bad}"),
            ));
        }
        Ok(())
    }

    /// `Ψ_λ(x, y)` evaluated pointwise from the parameter functions.
    pub fn psi_kernel(&self, x: f64, y: f64) -> f64 {
        psi_weight(self.lambda_mix, self.v, x, y) * self.psi.value_at(y)
    }

    /// `ω(x, y)` evaluated pointwise.
    pub fn omega_kernel_at(&self, x: f64, y: f64) -> f64 {
        match self.omega_kernel {
            OmegaKernel::Exponential => self.alpha / self.s * (-(x - y).abs() / self.s).exp(),
            OmegaKernel::Uniform => self.alpha,
        }
    }
}

fn psi_weight(lambda: f64, v: f64, x: f64, y: f64) -> f64 {
    (1.0 - lambda) + lambda / v * (-(x - y).abs() / v).exp()
}

/// Dense kernel matrices indexed `[i·n + j]` for tumour node `i` and immune
/// node `j`.
#[derive(Debug, Clone)]
pub struct KernelMatrices {
    n: usize,
    psi: Vec<f64>,
    omega: Vec<f64>,
    innate_only: bool,
    uniform_omega: Option<f64>,
}

pub fn build_kernels(params: &ModelParams, grid: &PhenotypeGrid) -> Result<KernelMatrices> {
    if !(params.v > 0.0) {
        return Err(Error::invalid("v", "kernel width must be > 0"));
    }
    if !(params.s > 0.0) {
        return Err(Error::invalid("s", "kernel width must be > 0"));
    }
    let n = grid.len();
    let nodes = grid.nodes();
    let psi_y = params.psi.evaluate(grid)?;
    let mut psi = Vec::with_capacity(n * n);
    let mut omega = Vec::with_capacity(n * n);
    for &x in nodes {
        for (j, &y) in nodes.iter().enumerate() {
            psi.push(psi_weight(params.lambda_mix, params.v, x, y) * psi_y[j]);
            omega.push(params.omega_kernel_at(x, y));
        }
    }
    Ok(KernelMatrices {
        n,
        psi,
        omega,
        innate_only: params.lambda_mix == 0.0,
        uniform_omega: (params.omega_kernel == OmegaKernel::Uniform).then_some(params.alpha),
    })
}

impl KernelMatrices {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn psi(&self, i: usize, j: usize) -> f64 {
        self.psi[i * self.n + j]
    }

    pub fn omega(&self, i: usize, j: usize) -> f64 {
        self.omega[i * self.n + j]
    }

    pub fn psi_row(&self, i: usize) -> &[f64] {
        &self.psi[i * self.n..(i + 1) * self.n]
    }

    pub fn omega_row(&self, i: usize) -> &[f64] {
        &self.omega[i * self.n..(i + 1) * self.n]
    }

    /// `ω^M(y) = max_x ω(x, y)` over the grid.
    pub fn omega_column_max(&self) -> Vec<f64> {
        let mut out = vec![f64::NEG_INFINITY; self.n];
        for i in 0..self.n {
            for (m, &w) in out.iter_mut().zip(self.omega_row(i)) {
                *m = m.max(w);
            }
        }
        out
    }

    /// Immune pressure `φ(x_i) = ∫ Ψ(x_i, y) ℓ(y) dy` at every tumour node.
    pub fn phi(&self, ell: &[f64], grid: &PhenotypeGrid) -> Result<Vec<f64>> {
        self.check(grid, "ell", ell.len())?;
        Ok(self.phi_unchecked(ell, grid))
    }

    /// Stimulus `χ(y_j) = ∫ ω(x, y_j) n(x) dx` at every immune node.
    pub fn chi(&self, n: &[f64], grid: &PhenotypeGrid) -> Result<Vec<f64>> {
        self.check(grid, "n", n.len())?;
        Ok(self.chi_unchecked(n, grid))
    }

    fn check(&self, grid: &PhenotypeGrid, what: &'static str, len: usize) -> Result<()> {
        if grid.len() != self.n {
            return Err(Error::Dimension {
                what: "grid vs kernel",
                expected: self.n,
                found: grid.len(),
            });
        }
        grid.check_len(what, len)
    }

    pub(crate) fn phi_unchecked(&self, ell: &[f64], grid: &PhenotypeGrid) -> Vec<f64> {
        let weighted: Vec<f64> = grid.weights().iter().zip(ell).map(|(w, l)| w * l).collect();
        if self.innate_only {
            // Every row is ψ(y); one dot product serves all x.
            let value = dot(self.psi_row(0), &weighted);
            return vec![value; self.n];
        }
        (0..self.n)
            .map(|i| dot(self.psi_row(i), &weighted))
            .collect()
    }

    pub(crate) fn chi_unchecked(&self, n: &[f64], grid: &PhenotypeGrid) -> Vec<f64> {
        if let Some(alpha) = self.uniform_omega {
            return vec![alpha * grid.quad_unchecked(n); self.n];
        }
        let mut chi = vec![0.0; self.n];
        for (i, (w, ni)) in grid.weights().iter().zip(n).enumerate() {
            let c = w * ni;
            if c == 0.0 {
                continue;
            }
            for (acc, om) in chi.iter_mut().zip(self.omega_row(i)) {
                *acc += c * om;
            }
        }
        chi
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four partial sums keep the loop vectorizable; order is fixed so results
    // are reproducible.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Model functions sampled on a grid together with the kernel matrices.
/// Built once per parameter set and shared read-only between time steps.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub grid: PhenotypeGrid,
    pub params: ModelParams,
    pub r: Vec<f64>,
    pub d: Vec<f64>,
    pub mu: Vec<f64>,
    pub psi: Vec<f64>,
    pub nu: Vec<f64>,
    pub kernels: KernelMatrices,
}

impl DiscreteModel {
    pub fn new(params: &ModelParams, grid: &PhenotypeGrid) -> Result<Self> {
        params.validate(grid)?;
        Ok(Self {
            grid: grid.clone(),
            params: params.clone(),
            r: params.r.evaluate(grid)?,
            d: params.d.evaluate(grid)?,
            mu: params.mu.evaluate(grid)?,
            psi: params.psi.evaluate(grid)?,
            nu: params.nu.evaluate(grid)?,
            kernels: build_kernels(params, grid)?,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn ici_dose(&self, t: f64) -> f64 {
        self.params.ici.dose(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_with(lambda: f64, v: f64, s: f64) -> ModelParams {
        ModelParams {
            lambda_mix: lambda,
            v,
            s,
            ..ModelParams::default()
        }
    }

    #[test]
    fn innate_kernel_is_x_independent() {
        let g = PhenotypeGrid::new(21).unwrap();
        let k = build_kernels(&params_with(0.0, 0.3, 1.0), &g).unwrap();
        for i in 0..21 {
            for j in 0..21 {
                let y = g.node(j);
                assert_eq!(k.psi(i, j), 0.5 * y * y);
            }
        }
    }

    #[test]
    fn adaptive_kernel_peak() {
        let g = PhenotypeGrid::new(11).unwrap();
        let k = build_kernels(&params_with(1.0, 1.0, 1.0), &g).unwrap();
        for i in 0..11 {
            let y = g.node(i);
            assert!((k.psi(i, i) - 0.5 * y * y).abs() < 1e-15);
        }
    }

    #[test]
    fn omega_corner_value() {
        let g = PhenotypeGrid::new(11).unwrap();
        let k = build_kernels(&params_with(0.5, 0.5, 1.0), &g).unwrap();
        assert!((k.omega(0, 10) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k.omega(0, 10) - 0.3679).abs() < 1e-4);
        assert!(k
            .omega_column_max()
            .iter()
            .all(|&m| (m - 1.0).abs() < 1e-15));
    }

    #[test]
    fn nonpositive_widths_rejected() {
        let g = PhenotypeGrid::new(5).unwrap();
        assert!(build_kernels(&params_with(0.5, 0.0, 1.0), &g).is_err());
        assert!(build_kernels(&params_with(0.5, 1.0, -1.0), &g).is_err());
    }

    #[test]
    fn phi_zero_and_innate_value() {
        let g = PhenotypeGrid::new(1000).unwrap();
        let k = build_kernels(&params_with(0.0, 0.5, 1.0), &g).unwrap();
        assert!(k
            .phi(&vec![0.0; 1000], &g)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let phi = k.phi(&vec![1.0; 1000], &g).unwrap();
        assert!(phi.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-6));
        assert!(phi.iter().all(|&v| v == phi[0]));
    }

    #[test]
    fn phi_adaptive_matches_closed_form() {
        let g = PhenotypeGrid::new(1000).unwrap();
        let p = ModelParams {
            psi: FunctionSpec::constant(1.0),
            ..params_with(1.0, 0.5, 1.0)
        };
        let k = build_kernels(&p, &g).unwrap();
        let phi = k.phi(&vec![1.0; 1000], &g).unwrap();
        for (i, &x) in g.nodes().iter().enumerate() {
            let exact = 2.0 - (-x / 0.5).exp() - (-(1.0 - x) / 0.5).exp();
            assert!(
                (phi[i] - exact).abs() < 1e-5,
                "x={x}: {} vs {exact}",
                phi[i]
            );
        }
    }

    #[test]
    fn chi_matches_closed_form_and_scales_with_alpha() {
        let g = PhenotypeGrid::new(1000).unwrap();
        let k = build_kernels(&params_with(0.5, 0.5, 1.0), &g).unwrap();
        assert!(k
            .chi(&vec![0.0; 1000], &g)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let chi = k.chi(&vec![1.0; 1000], &g).unwrap();
        for (j, &y) in g.nodes().iter().enumerate() {
            let exact = 2.0 - (-y).exp() - (-(1.0 - y)).exp();
            assert!((chi[j] - exact).abs() < 1e-5);
        }
        assert!((chi[0] - 0.6321).abs() < 1e-4);
        let p2 = ModelParams {
            alpha: 2.0,
            ..params_with(0.5, 0.5, 1.0)
        };
        let k2 = build_kernels(&p2, &g).unwrap();
        let chi2 = k2.chi(&vec![1.0; 1000], &g).unwrap();
        for (a, b) in chi.iter().zip(&chi2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn coupling_dimension_errors() {
        let g = PhenotypeGrid::new(10).unwrap();
        let k = build_kernels(&ModelParams::default(), &g).unwrap();
        assert!(matches!(k.phi(&[1.0; 9], &g), Err(Error::Dimension { .. })));
        assert!(matches!(
            k.chi(&[1.0; 11], &g),
            Err(Error::Dimension { .. })
        ));
        let other = PhenotypeGrid::new(9).unwrap();
        assert!(k.chi(&[1.0; 9], &other).is_err());
    }

    #[test]
    fn ici_schedules() {
        assert_eq!(IciSchedule::constant(0.0).dose(17.0), 0.0);
        let ten = IciSchedule::constant(10.0);
        assert_eq!(ten.dose(0.0), 10.0);
        assert_eq!(ten.dose(999.0), 10.0);
        let step = IciSchedule {
            kind: IciKind::PiecewiseConstant {
                breakpoints: vec![50.0],
                doses: vec![0.0, 1.0],
            },
            max_dose: 1.0,
        };
        step.validate().unwrap();
        assert_eq!(step.dose(49.9), 0.0);
        assert_eq!(step.dose(50.0), 1.0);
    }

    #[test]
    fn ici_validation() {
        let over = IciSchedule {
            kind: IciKind::Constant { dose: 2.0 },
            max_dose: 1.0,
        };
        assert!(over.validate().is_err());
        let mismatched = IciSchedule {
            kind: IciKind::PiecewiseConstant {
                breakpoints: vec![1.0, 2.0],
                doses: vec![0.0, 1.0],
            },
            max_dose: 1.0,
        };
        assert!(mismatched.validate().is_err());
    }

    #[test]
    fn params_validation() {
        let g = PhenotypeGrid::new(11).unwrap();
        ModelParams::default().validate(&g).unwrap();
        let bad_k2 = ModelParams {
            k2: -1.0,
            ..ModelParams::default()
        };
        assert!(matches!(
            bad_k2.validate(&g),
            Err(Error::InvalidParameter { name, .. }) if name == "k2"
        ));
        let bad_d = ModelParams {
            d: FunctionSpec::polynomial(&[0.5, -1.0]),
            ..ModelParams::default()
        };
        assert!(bad_d.validate(&g).is_err());
        let inert = ModelParams {
            psi: FunctionSpec::constant(0.0),
            ..ModelParams::default()
        };
        inert.validate(&g).unwrap();
    }

    #[test]
    fn shortcuts_agree_with_dense_sums() {
        let g = PhenotypeGrid::new(37).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|x| 1.0 + x * (1.0 - x)).collect();
        let p = ModelParams {
            omega_kernel: OmegaKernel::Uniform,
            ..params_with(0.0, 0.5, 1.0)
        };
        let k = build_kernels(&p, &g).unwrap();
        let (phi, chi) = (k.phi(&u, &g).unwrap(), k.chi(&u, &g).unwrap());
        for i in 0..g.len() {
            let mut dense_phi = 0.0;
            let mut dense_chi = 0.0;
            for (j, (w, uj)) in g.weights().iter().zip(&u).enumerate() {
                dense_phi += k.psi(i, j) * w * uj;
                dense_chi += k.omega(j, i) * w * uj;
            }
            assert!((phi[i] - dense_phi).abs() < 1e-14);
            assert!((chi[i] - dense_chi).abs() < 1e-14);
        }
    }
}
