use proptest::prelude::*;

use phenoimmune::analysis::{classify_series, ClassifierThresholds};
use phenoimmune::config::{parse_config, preset, ScenarioConfig, PRESETS};
use phenoimmune::grid::{FunctionSpec, PhenotypeGrid};
use phenoimmune::ide::{simulate, InitialData, RunSettings};
use phenoimmune::model::{build_kernels, ModelParams};

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quad_is_linear(n in 3usize..200, a in -5.0..5.0f64, b in -5.0..5.0f64,
                      cf in coeffs(), cg in coeffs()) {
        let grid = PhenotypeGrid::new(n).unwrap();
        let f = FunctionSpec::Polynomial(cf).evaluate(&grid).unwrap();
        let g = FunctionSpec::Polynomial(cg).evaluate(&grid).unwrap();
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let lhs = grid.quad(&combo).unwrap();
        let rhs = a * grid.quad(&f).unwrap() + b * grid.quad(&g).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn quad_exact_on_affine(n in 3usize..2000, c0 in -10.0..10.0f64, c1 in -10.0..10.0f64) {
        let grid = PhenotypeGrid::new(n).unwrap();
        let v: Vec<f64> = grid.nodes().iter().map(|x| c0 + c1 * x).collect();
        let exact = c0 + c1 / 2.0;
        prop_assert!((grid.quad(&v).unwrap() - exact).abs() <= 1e-12);
    }

    #[test]
    fn weights_sum_to_one(n in 3usize..5000) {
        let grid = PhenotypeGrid::new(n).unwrap();
        let s: f64 = grid.weights().iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
        prop_assert_eq!(grid.nodes()[0], 0.0);
        prop_assert_eq!(grid.nodes()[n - 1], 1.0);
        prop_assert!(grid.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn phi_chi_linear_and_monotone(
        n in 3usize..60,
        lambda in 0.0..=1.0f64,
        v in 0.05..2.0f64,
        s in 0.05..2.0f64,
        a in 0.0..3.0f64,
        seed in prop::collection::vec(0.0..1.0f64, 120),
    ) {
        let grid = PhenotypeGrid::new(n).unwrap();
        let params = ModelParams { lambda_mix: lambda, v, s, ..ModelParams::default() };
        let k = build_kernels(&params, &grid).unwrap();
        let u: Vec<f64> = seed[..n].to_vec();
        let w: Vec<f64> = seed[60..60 + n].to_vec();
        let sum: Vec<f64> = u.iter().zip(&w).map(|(x, y)| a * x + y).collect();

        let (pu, pw, ps) = (k.phi(&u, &grid).unwrap(), k.phi(&w, &grid).unwrap(), k.phi(&sum, &grid).unwrap());
        let (cu, cw, cs) = (k.chi(&u, &grid).unwrap(), k.chi(&w, &grid).unwrap(), k.chi(&sum, &grid).unwrap());
        for i in 0..n {
            prop_assert!((ps[i] - (a * pu[i] + pw[i])).abs() <= 1e-12 * (1.0 + ps[i].abs()));
            prop_assert!((cs[i] - (a * cu[i] + cw[i])).abs() <= 1e-12 * (1.0 + cs[i].abs()));
            // sum dominates w entrywise
            prop_assert!(ps[i] >= pw[i] - 1e-15);
            prop_assert!(cs[i] >= cw[i] - 1e-15);
        }
    }

    #[test]
    fn phi_interpolates_in_lambda(
        n in 3usize..60,
        lambda in 0.0..=1.0f64,
        v in 0.05..2.0f64,
        seed in prop::collection::vec(0.0..1.0f64, 60),
    ) {
        let grid = PhenotypeGrid::new(n).unwrap();
        let ell = &seed[..n];
        let phi_at = |l: f64| {
            let p = ModelParams { lambda_mix: l, v, ..ModelParams::default() };
            build_kernels(&p, &grid).unwrap().phi(ell, &grid).unwrap()
        };
        let (p0, p1, pl) = (phi_at(0.0), phi_at(1.0), phi_at(lambda));
        for i in 0..n {
            let expect = (1.0 - lambda) * p0[i] + lambda * p1[i];
            prop_assert!((pl[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn config_round_trips(
        idx in 0usize..PRESETS.len(),
        k2 in 0.1..3.0f64,
        v in 0.05..2.0f64,
        grid in 3usize..2000,
        dt in 0.01..1.0f64,
    ) {
        let mut cfg = preset(PRESETS[idx]).unwrap();
        cfg.model.k2 = k2;
        cfg.model.v = v;
        cfg.grid = grid;
        cfg.dt = dt;
        let text = cfg.to_json().unwrap();
        let back = parse_config(&text, &ScenarioConfig::default()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn classification_ignores_stride(
        level in 0.0..2.0f64,
        rate in 0.001..0.2f64,
        start in 0.0..2.0f64,
    ) {
        // relaxation toward `level`, sampled every 0.5 up to t=1000
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.5).collect();
        let rho: Vec<f64> = times.iter().map(|t| level + (start - level) * (-rate * t).exp()).collect();
        let th = ClassifierThresholds::default();
        let full = classify_series(&times, &rho, 1.53, &th).unwrap();
        let t2: Vec<f64> = times.iter().step_by(2).copied().collect();
        let r2: Vec<f64> = rho.iter().step_by(2).copied().collect();
        let half = classify_series(&t2, &r2, 1.53, &th).unwrap();
        prop_assert_eq!(full.label, half.label);
    }
}

#[test]
fn trapezoid_refinement_is_second_order() {
    let exact = 1.0 - (-1.0f64).exp();
    let err = |n: usize| {
        let grid = PhenotypeGrid::new(n).unwrap();
        let v: Vec<f64> = grid.nodes().iter().map(|x| (-x).exp()).collect();
        (grid.quad(&v).unwrap() - exact).abs()
    };
    // intervals double: 50 -> 100 -> 200
    let (e1, e2, e3) = (err(51), err(101), err(201));
    let order1 = (e1 / e2).log2();
    let order2 = (e2 / e3).log2();
    assert!((order1 - 2.0).abs() < 0.05, "order {order1}");
    assert!((order2 - 2.0).abs() < 0.05, "order {order2}");
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let grid = PhenotypeGrid::new(51).unwrap();
    let params = ModelParams::default();
    let settings = RunSettings::new(50.0, 0.1).with_snapshots(&[0.0, 25.0, 50.0]);
    let a = simulate(&params, &InitialData::default(), &grid, &settings).unwrap();
    let b = simulate(&params, &InitialData::default(), &grid, &settings).unwrap();
    assert_eq!(a, b);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.rho), bits(&b.rho));
    assert_eq!(bits(&a.final_state.n), bits(&b.final_state.n));
}
