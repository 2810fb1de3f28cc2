//! Command implementations behind the `phenoimmune` binary. Each command
//! reads a validated [`ScenarioConfig`], writes its files into an output
//! directory and returns a report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    classify_series, compare_to_prediction, concentration_metrics, ConcentrationReport, Outcome,
    OutcomeLabel, PredictionComparison,
};
use crate::asymptotics::{
    apriori_bounds, carrying_capacity, non_extinction_check, solve_fixed_point_adaptive,
    solve_fixed_point_innate, Bounds, CarryingCapacity, FixedPoint, FixedPointResult,
    FixedPointSettings, NonExtinction, Residuals,
};
use crate::config::{set_parameter, OdeConfig, ScenarioConfig, SweepAxis, SweepSpec};
use crate::error::{Error, Result};
use crate::ide::{make_initial, run, run_tumour_alone, RunSettings, SimOutput, Snapshot};
use crate::model::DiscreteModel;
use crate::ode::{detect_limit_cycle, ode_rhs, ode_run, CycleReport, OdeState};

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub jobs: Option<usize>,
    pub ici: Option<f64>,
    pub tumour_alone: bool,
    pub axes: Vec<SweepAxis>,
    pub k2: Option<f64>,
}

/// Applies overrides; `--dt`/`--T` go to the sweep or ODE section when the
/// command uses one.
pub fn apply_overrides(cfg: &mut ScenarioConfig, o: &Overrides, command: &str) -> Result<()> {
    if let Some(n) = o.grid {
        cfg.grid = n;
    }
    match command {
        "sweep" => {
            let spec = cfg.sweep.get_or_insert_with(SweepSpec::default);
            if let Some(dt) = o.dt {
                spec.dt = dt;
            }
            if let Some(t) = o.t_end {
                spec.t_end = t;
            }
            if let Some(j) = o.jobs {
                spec.jobs = j;
            }
            if !o.axes.is_empty() {
                spec.axes = o.axes.clone();
            }
        }
        "ode" => {
            let ode = cfg.ode.get_or_insert_with(OdeConfig::default);
            if let Some(dt) = o.dt {
                ode.dt = dt;
            }
            if let Some(t) = o.t_end {
                ode.t_end = t;
            }
            if let Some(k2) = o.k2 {
                ode.params.k2 = k2;
            }
        }
        _ => {
            if let Some(dt) = o.dt {
                cfg.dt = dt;
            }
            if let Some(t) = o.t_end {
                cfg.t_end = t;
            }
        }
    }
    if let Some(dose) = o.ici {
        set_parameter(&mut cfg.model, "ici", dose)?;
    }
    if o.tumour_alone {
        cfg.tumour_alone = true;
    }
    cfg.validate()
}

/// Parses `NAME=v1,v2,...` or `NAME=start:end:count`.
pub fn parse_axis(spec: &str) -> Result<SweepAxis> {
    let (name, rest) = spec
        .split_once('=')
        .ok_or_else(|| Error::invalid("axis", format!("expected NAME=VALUES, got `{spec}`")))?;
    let bad = |what: &str| Error::invalid("axis", format!("bad {what} in `{spec}`"));
    let values = if rest.contains(':') {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("range"));
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad("start"))?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad("end"))?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad("count"))?;
        match n {
            0 => return Err(bad("count")),
            1 => vec![a],
            _ => (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    } else {
        rest.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(SweepAxis {
        name: name.trim().to_string(),
        values,
    })
}

fn write_file(out: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let path = out.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(out, name, &text)
}

pub fn timeseries_csv(output: &SimOutput) -> String {
    let mut s = String::from("t,rho,sigma,gamma,phi_mean,ici_dose\n");
    for k in 0..output.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            output.times[k],
            output.rho[k],
            output.sigma[k],
            output.gamma[k],
            output.phi_mean[k],
            output.ici_dose[k]
        );
    }
    s
}

/// Long-format density table: one row per (snapshot time, grid node).
pub fn density_csv(
    snapshots: &[Snapshot],
    nodes: &[f64],
    field: fn(&Snapshot) -> &[f64],
) -> String {
    let mut s = String::from("t,node,value\n");
    for snap in snapshots {
        for (x, v) in nodes.iter().zip(field(snap)) {
            let _ = writeln!(s, "{},{},{}", snap.t, x, v);
        }
    }
    s
}

const SIMULATE_PLOT: &str = r#"import csv, sys, os
import matplotlib.pyplot as plt

d = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))

def table(name):
    with open(os.path.join(d, name)) as f:
        return list(csv.DictReader(f))

ts = table("timeseries.csv")
t = [float(r["t"]) for r in ts]
fig, ax = plt.subplots(1, 4, figsize=(18, 4))
for key in ("rho", "sigma", "gamma"):
    ax[0].plot(t, [float(r[key]) for r in ts], label=key)
ax[0].set_xlabel("t")
ax[0].legend()
for a, field in zip(ax[1:], ("n", "ell", "p")):
    rows = table("density_%s.csv" % field)
    for snap in sorted({r["t"] for r in rows}, key=float):
        sel = [r for r in rows if r["t"] == snap]
        a.plot([float(r["node"]) for r in sel], [float(r["value"]) for r in sel], label="t=" + snap)
    a.set_title(field)
    a.legend(fontsize=7)
fig.tight_layout()
fig.savefig(os.path.join(d, "simulation.png"), dpi=120)
"#;

const HEATMAP_PLOT: &str = r#"import csv, sys, os
import matplotlib.pyplot as plt

d = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(d, "heatmap.csv")) as f:
    rows = [r for r in csv.DictReader(f) if r["rho_ratio"]]
xs = sorted({float(r["axis1"]) for r in rows})
ys = sorted({float(r["axis2"]) for r in rows}) if rows and rows[0]["axis2"] else [0.0]
grid = [[float("nan")] * len(xs) for _ in ys]
for r in rows:
    y = float(r["axis2"]) if r["axis2"] else 0.0
    grid[ys.index(y)][xs.index(float(r["axis1"]))] = float(r["rho_ratio"])
plt.imshow(grid, origin="lower", aspect="auto",
           extent=[xs[0], xs[-1], ys[0], ys[-1]], cmap="viridis")
plt.colorbar(label="rho(T) / rho*")
plt.xlabel("axis1")
plt.ylabel("axis2")
plt.savefig(os.path.join(d, "heatmap.png"), dpi=120)
"#;

const ODE_PLOT: &str = r#"import csv, sys, os
import matplotlib.pyplot as plt

d = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(d, "ode_timeseries.csv")) as f:
    rows = list(csv.DictReader(f))
t = [float(r["t"]) for r in rows]
fig, ax = plt.subplots(1, 2, figsize=(12, 4))
for key in ("rho", "sigma", "gamma"):
    ax[0].plot(t, [float(r[key]) for r in rows], label=key)
ax[0].legend()
ax[1].plot([float(r["rho"]) for r in rows], [float(r["gamma"]) for r in rows])
ax[1].set_xlabel("rho")
ax[1].set_ylabel("gamma")
fig.tight_layout()
fig.savefig(os.path.join(d, "ode.png"), dpi=120)
"#;

/// Builds the model and runs the configured scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(DiscreteModel, SimOutput)> {
    let grid = cfg.phenotype_grid()?;
    let model = DiscreteModel::new(&cfg.model, &grid)?;
    let initial = make_initial(&cfg.initial, &grid)?;
    let settings = cfg.run_settings();
    let output = if cfg.tumour_alone {
        run_tumour_alone(&model, initial, &settings)?
    } else {
        run(&model, initial, &settings)?
    };
    Ok((model, output))
}

/// The limit system matching a model: the innate solver when `λ = 0`, the
/// adaptive solver otherwise.
pub fn solve_limit(
    model: &DiscreteModel,
    settings: &FixedPointSettings,
) -> Result<FixedPointResult> {
    if model.params.lambda_mix == 0.0 {
        solve_fixed_point_innate(model, &[], settings)
    } else {
        solve_fixed_point_adaptive(model, &[], settings)
    }
}

/// Limit of the tumour-alone equation: `ρ* δ_{x*}` with no immune cells.
pub fn tumour_alone_limit(model: &DiscreteModel) -> FixedPointResult {
    let cc = carrying_capacity(model);
    FixedPointResult {
        converged: true,
        solutions: vec![FixedPoint {
            rho_inf: cc.rho_star,
            phi_inf: 0.0,
            ell_inf: vec![0.0; model.len()],
            x_inf: cc.x_star,
            x_index: cc.x_star_index,
            residuals: Residuals {
                rho: 0.0,
                immune: 0.0,
                max_fitness: 0.0,
            },
            unique_argmax: cc.set.len() == 1,
            argmax_gap: f64::NAN,
            iterations: 0,
            start_index: 0,
        }],
        multistart_spread: 0.0,
        starts_total: 1,
        starts_converged: 1,
        starts_rejected: 0,
        starts_cycling: 0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitSummary {
    pub converged: bool,
    pub unique: bool,
    pub rho_inf: Option<f64>,
    pub x_inf: Option<f64>,
    pub phi_inf: Option<f64>,
}

impl LimitSummary {
    fn from(fp: &FixedPointResult) -> Self {
        let best = fp.best();
        Self {
            converged: fp.converged,
            unique: fp.is_unique(),
            rho_inf: best.map(|b| b.rho_inf),
            x_inf: best.map(|b| b.x_inf),
            phi_inf: best.map(|b| b.phi_inf),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub outcome: Outcome,
    pub rho_star: f64,
    pub x_star: f64,
    pub concentration: Option<ConcentrationReport>,
    pub limit: Option<LimitSummary>,
    pub prediction: Option<PredictionComparison>,
    pub clamped: usize,
    pub final_time: f64,
    #[serde(skip)]
    pub output: Option<SimOutput>,
}

pub fn cmd_simulate(cfg: &ScenarioConfig, out: &Path) -> Result<SimulateReport> {
    let (model, output) = run_scenario(cfg)?;
    let cc = carrying_capacity(&model);
    let outcome = classify_series(&output.times, &output.rho, cc.rho_star, &cfg.thresholds)?;
    let concentration = concentration_metrics(&output.final_state.n, &model.grid).ok();
    let limit = if cfg.tumour_alone {
        Some(tumour_alone_limit(&model))
    } else {
        solve_limit(&model, &cfg.fixed_point).ok()
    };
    let prediction = limit
        .as_ref()
        .map(|fp| compare_to_prediction(&output, fp, &model.grid));

    write_file(out, "timeseries.csv", &timeseries_csv(&output))?;
    let nodes = model.grid.nodes();
    write_file(
        out,
        "density_n.csv",
        &density_csv(&output.snapshots, nodes, |s| &s.n),
    )?;
    write_file(
        out,
        "density_ell.csv",
        &density_csv(&output.snapshots, nodes, |s| &s.ell),
    )?;
    write_file(
        out,
        "density_p.csv",
        &density_csv(&output.snapshots, nodes, |s| &s.p),
    )?;
    write_file(out, "plot.py", SIMULATE_PLOT)?;

    let report = SimulateReport {
        outcome,
        rho_star: cc.rho_star,
        x_star: cc.x_star,
        concentration,
        limit: limit.as_ref().map(LimitSummary::from),
        prediction,
        clamped: output.clamped,
        final_time: *output.times.last().unwrap_or(&0.0),
        output: None,
    };
    write_json(out, "outcome.json", &report)?;
    Ok(SimulateReport {
        output: Some(output),
        ..report
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub coords: Vec<f64>,
    pub rho_final: Option<f64>,
    pub rho_ratio: Option<f64>,
    pub outcome: Option<OutcomeLabel>,
    pub fell_back_dt: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub axes: Vec<String>,
    pub rho_star: f64,
    pub cells: Vec<SweepCell>,
    pub failures: usize,
}

fn sweep_cell(cfg: &ScenarioConfig, spec: &SweepSpec, coords: &[f64], rho_star: f64) -> SweepCell {
    let attempt = |dt: f64| -> Result<Outcome> {
        let mut params = cfg.model.clone();
        for (axis, &v) in spec.axes.iter().zip(coords) {
            set_parameter(&mut params, &axis.name, v)?;
        }
        let grid = cfg.phenotype_grid()?;
        params.validate(&grid)?;
        let model = DiscreteModel::new(&params, &grid)?;
        let initial = make_initial(&cfg.initial, &grid)?;
        let output = run(&model, initial, &RunSettings::new(spec.t_end, dt))?;
        classify_series(&output.times, &output.rho, rho_star, &cfg.thresholds)
    };
    let (result, fell_back) = match attempt(spec.dt) {
        Err(Error::Instability { .. }) if spec.fallback_dt < spec.dt => {
            (attempt(spec.fallback_dt), true)
        }
        other => (other, false),
    };
    match result {
        Ok(o) => SweepCell {
            coords: coords.to_vec(),
            rho_final: Some(o.rho_final),
            rho_ratio: Some(o.rho_ratio),
            outcome: Some(o.label),
            fell_back_dt: fell_back,
            error: None,
        },
        Err(e) => SweepCell {
            coords: coords.to_vec(),
            rho_final: None,
            rho_ratio: None,
            outcome: None,
            fell_back_dt: fell_back,
            error: Some(e.to_string()),
        },
    }
}

pub fn heatmap_csv(report: &SweepReport) -> String {
    let mut s = String::from("axis1,axis2,rho_final,rho_ratio,outcome,fell_back_dt\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &report.cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            c.coords[0],
            c.coords.get(1).map(|x| x.to_string()).unwrap_or_default(),
            opt(c.rho_final),
            opt(c.rho_ratio),
            c.outcome
                .map(|l| l.to_string())
                .unwrap_or_else(|| "Failed".into()),
            c.fell_back_dt
        );
    }
    s
}

/// Runs every cell of the sweep in parallel. Cells that fail are recorded
/// rather than aborting the sweep.
pub fn cmd_sweep(cfg: &ScenarioConfig, out: &Path) -> Result<SweepReport> {
    let spec = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::invalid("sweep", "config has no sweep section"))?;
    spec.validate()?;
    let grid = cfg.phenotype_grid()?;
    let rho_star = carrying_capacity(&DiscreteModel::new(&cfg.model, &grid)?).rho_star;
    let cells_in = spec.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    let cells: Vec<SweepCell> = pool.install(|| {
        cells_in
            .par_iter()
            .map(|coords| sweep_cell(cfg, &spec, coords, rho_star))
            .collect()
    });
    let failures = cells.iter().filter(|c| c.error.is_some()).count();
    let report = SweepReport {
        axes: spec.axes.iter().map(|a| a.name.clone()).collect(),
        rho_star,
        cells,
        failures,
    };
    write_file(out, "heatmap.csv", &heatmap_csv(&report))?;
    write_json(out, "sweep.json", &report)?;
    write_file(out, "plot_heatmap.py", HEATMAP_PLOT)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub carrying_capacity: CarryingCapacity,
    pub bounds: Option<Bounds>,
    pub bounds_error: Option<String>,
    pub non_extinction: Option<NonExtinction>,
}

fn bounds_report(model: &DiscreteModel) -> BoundsReport {
    let (bounds, bounds_error) = match apriori_bounds(model) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    BoundsReport {
        carrying_capacity: carrying_capacity(model),
        bounds,
        bounds_error,
        non_extinction: non_extinction_check(model).ok(),
    }
}

pub fn cmd_bounds(cfg: &ScenarioConfig, out: &Path) -> Result<BoundsReport> {
    let model = DiscreteModel::new(&cfg.model, &cfg.phenotype_grid()?)?;
    let report = bounds_report(&model);
    write_json(out, "bounds.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    #[serde(flatten)]
    pub bounds: BoundsReport,
    /// Innate solver result (only when `λ = 0`).
    pub innate: Option<FixedPointResult>,
    pub adaptive: FixedPointResult,
    /// Largest `|ρ|`/`|φ|` difference between the two solvers when both ran.
    pub solver_agreement: Option<f64>,
}

impl FixedPointReport {
    pub fn converged(&self) -> bool {
        self.adaptive.converged || self.innate.as_ref().is_some_and(|r| r.converged)
    }
}

pub fn cmd_fixedpoint(cfg: &ScenarioConfig, out: &Path) -> Result<FixedPointReport> {
    let model = DiscreteModel::new(&cfg.model, &cfg.phenotype_grid()?)?;
    let innate = if cfg.model.lambda_mix == 0.0 {
        Some(solve_fixed_point_innate(&model, &[], &cfg.fixed_point)?)
    } else {
        None
    };
    let adaptive = solve_fixed_point_adaptive(&model, &[], &cfg.fixed_point)?;
    let solver_agreement = match (innate.as_ref().and_then(|r| r.best()), adaptive.best()) {
        (Some(a), Some(b)) => Some(
            (a.rho_inf - b.rho_inf)
                .abs()
                .max((a.phi_inf - b.phi_inf).abs()),
        ),
        _ => None,
    };
    let report = FixedPointReport {
        bounds: bounds_report(&model),
        innate,
        adaptive,
        solver_agreement,
    };
    write_json(out, "fixedpoint.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeReport {
    pub final_state: OdeState,
    pub rho_cycle: CycleReport,
    pub sigma_cycle: CycleReport,
    pub gamma_cycle: CycleReport,
    pub equilibrium: Option<OdeState>,
    /// Max-norm of the right-hand side at `equilibrium`.
    pub equilibrium_residual: Option<f64>,
    pub distance_to_equilibrium: Option<f64>,
    pub clamped: usize,
}

/// Rows written to `ode_timeseries.csv` are thinned to at most this many.
pub const MAX_CSV_ROWS: usize = 20_000;

pub fn cmd_ode(cfg: &ScenarioConfig, out: &Path) -> Result<OdeReport> {
    let ode = cfg
        .ode
        .clone()
        .ok_or_else(|| Error::invalid("ode", "config has no ode section"))?;
    let traj = ode_run(&ode.params, ode.init, ode.t_end, ode.dt, ode.method)?;
    let cycle = |v: Vec<f64>| detect_limit_cycle(&traj.times, &v, ode.window_fraction);
    let final_state = traj.last();
    let report = OdeReport {
        final_state,
        rho_cycle: cycle(traj.rho())?,
        sigma_cycle: cycle(traj.sigma())?,
        gamma_cycle: cycle(traj.gamma())?,
        equilibrium: ode.equilibrium,
        equilibrium_residual: ode.equilibrium.map(|e| ode_rhs(&e, &ode.params).max_abs()),
        distance_to_equilibrium: ode.equilibrium.map(|e| final_state.distance(&e)),
        clamped: traj.clamped,
    };

    let stride = traj.times.len().div_ceil(MAX_CSV_ROWS).max(1);
    let mut csv = String::from("t,rho,sigma,gamma\n");
    for (k, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        if k % stride == 0 || k + 1 == traj.times.len() {
            let _ = writeln!(csv, "{},{},{},{}", t, s.rho, s.sigma, s.gamma);
        }
    }
    write_file(out, "ode_timeseries.csv", &csv)?;
    write_json(
        out,
        "cycle.json",
        &[&report.rho_cycle, &report.sigma_cycle, &report.gamma_cycle],
    )?;
    write_json(
        out,
        "equilibrium.json",
        &serde_json::json!({
            "params": ode.params,
            "equilibrium": report.equilibrium,
            "residual": report.equilibrium_residual,
            "final_state": report.final_state,
            "distance": report.distance_to_equilibrium,
        }),
    )?;
    write_file(out, "plot_ode.py", ODE_PLOT)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicReport {
    pub delta: f64,
    pub rho_cycle: CycleReport,
    pub sigma_cycle: CycleReport,
    pub gamma_cycle: CycleReport,
    pub rho_min: f64,
    pub rho_max: f64,
    pub concentration: Option<ConcentrationReport>,
    pub clamped: usize,
}

impl PeriodicReport {
    pub fn oscillatory(&self) -> bool {
        self.rho_cycle.oscillatory && self.sigma_cycle.oscillatory && self.gamma_cycle.oscillatory
    }
}

/// Trailing share of the run inspected for a limit cycle.
pub const PERIODIC_WINDOW: f64 = 0.4;

/// Runs the IDE with every phenotype function tilted by `delta·x` and checks
/// the aggregates for a sustained oscillation.
pub fn cmd_periodic(cfg: &ScenarioConfig, delta: f64, out: &Path) -> Result<PeriodicReport> {
    if !(0.0..0.1).contains(&delta) {
        return Err(Error::invalid(
            "delta",
            format!("must lie in [0, 0.1), got {delta}"),
        ));
    }
    let mut tilted = cfg.clone();
    let m = &mut tilted.model;
    m.r = m.r.tilted(delta);
    m.d = m.d.tilted(delta);
    m.mu = m.mu.tilted(delta);
    m.psi = m.psi.tilted(delta);
    m.nu = m.nu.tilted(delta);
    tilted.validate()?;
    let (model, output) = run_scenario(&tilted)?;
    let cycle = |v: &[f64]| detect_limit_cycle(&output.times, v, PERIODIC_WINDOW);
    let start = output.len() - (output.len() as f64 * PERIODIC_WINDOW) as usize;
    let window = &output.rho[start..];
    let report = PeriodicReport {
        delta,
        rho_cycle: cycle(&output.rho)?,
        sigma_cycle: cycle(&output.sigma)?,
        gamma_cycle: cycle(&output.gamma)?,
        rho_min: window.iter().copied().fold(f64::INFINITY, f64::min),
        rho_max: window.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        concentration: concentration_metrics(&output.final_state.n, &model.grid).ok(),
        clamped: output.clamped,
    };
    write_file(out, "timeseries.csv", &timeseries_csv(&output))?;
    write_json(out, "periodic.json", &report)?;
    Ok(report)
}

/// Reads `t` and `rho` columns from a CSV with a header row.
pub fn read_timeseries(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InsufficientData(format!("{} is empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| {
        cols.iter().position(|c| *c == name).ok_or_else(|| {
            Error::InsufficientData(format!("no `{name}` column in {}", path.display()))
        })
    };
    let (ti, ri) = (col("t")?, col("rho")?);
    let mut times = Vec::new();
    let mut rho = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::ConfigParse {
                    line: lineno + 1,
                    column: i + 1,
                    message: format!("bad number in {}", path.display()),
                })
        };
        times.push(parse(ti)?);
        rho.push(parse(ri)?);
    }
    Ok((times, rho))
}

/// Classifies a stored time series against the configured model's `ρ*`.
pub fn cmd_classify(cfg: &ScenarioConfig, timeseries: &Path, out: &Path) -> Result<Outcome> {
    let (times, rho) = read_timeseries(timeseries)?;
    let model = DiscreteModel::new(&cfg.model, &cfg.phenotype_grid()?)?;
    let rho_star = carrying_capacity(&model).rho_star;
    let outcome = classify_series(&times, &rho, rho_star, &cfg.thresholds)?;
    write_json(out, "outcome.json", &outcome)?;
    Ok(outcome)
}
