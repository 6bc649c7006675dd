use pidl_tse::corridor::{greenshields_flux, CorridorSpec, SegmentSpec};
use pidl_tse::solver::*;
use proptest::prelude::*;

fn seg(index: usize, x: (f64, f64), v_f: f64, rho_m: f64) -> SegmentSpec {
    SegmentSpec {
        index,
        x_start: x.0,
        x_end: x.1,
        v_f,
        rho_m,
        f_up: 0.0,
        f_down: 0.0,
    }
}

/// Three segments with closed ends, 300 m, 20 s.
fn small_corridor(params: &[(f64, f64)]) -> CorridorSpec {
    let segments = params
        .iter()
        .enumerate()
        .map(|(i, &(v, r))| seg(i + 1, (100.0 * i as f64, 100.0 * (i + 1) as f64), v, r))
        .collect();
    CorridorSpec::new(segments, 20.0).unwrap()
}

fn small_config() -> SolverConfig {
    SolverConfig {
        cell_width: 10.0,
        output_dx: 10.0,
        output_dt: 1.0,
        ..Default::default()
    }
}

/// Largest flow reachable on `[lo, hi]` by dense sampling plus the critical point.
fn max_flow_on(lo: f64, hi: f64, s: &SegmentSpec) -> f64 {
    let mut best = 0.0f64;
    for k in 0..=4000 {
        let r = lo + (hi - lo) * k as f64 / 4000.0;
        best = best.max(greenshields_flux(r, s).unwrap());
    }
    let c = 0.5 * s.rho_m;
    if lo <= c && c <= hi {
        best = best.max(greenshields_flux(c, s).unwrap());
    }
    best
}

#[test]
fn interface_flux_matches_brute_force_on_a_grid() {
    let a = seg(1, (0.0, 1.0), 40.0, 0.10);
    let b = seg(2, (1.0, 2.0), 30.0, 0.15);
    let n = 50;
    for i in 0..n {
        for j in 0..n {
            let rl = a.rho_m * i as f64 / (n - 1) as f64;
            let rr = b.rho_m * j as f64 / (n - 1) as f64;
            // demand: best flow with density at most rl; supply: at least rr
            let d = max_flow_on(0.0, rl, &a);
            let s = max_flow_on(rr, b.rho_m, &b);
            let f = godunov_flux(rl, &a, rr, &b).unwrap();
            assert!((f - d.min(s)).abs() <= 1e-12, "({rl}, {rr}): {f} vs {}", d.min(s));
            assert!(f >= 0.0 && f <= a.capacity().min(b.capacity()) + 1e-15);
        }
    }
}

#[test]
fn same_segment_flux_is_the_riemann_solution() {
    let s = seg(1, (0.0, 1.0), 50.0, 0.10);
    let n = 50;
    for i in 0..n {
        for j in 0..n {
            let rl = s.rho_m * i as f64 / (n - 1) as f64;
            let rr = s.rho_m * j as f64 / (n - 1) as f64;
            let q = |r| greenshields_flux(r, &s).unwrap();
            // min of q over [rl, rr] when rl <= rr, max over [rr, rl] otherwise
            let exact = if rl <= rr {
                q(rl).min(q(rr))
            } else {
                max_flow_on(rr, rl, &s)
            };
            let f = godunov_flux(rl, &s, rr, &s).unwrap();
            assert!((f - exact).abs() <= 1e-12, "({rl}, {rr})");
        }
    }
}

#[test]
fn refinement_differences_shrink() {
    let corridor = CorridorSpec::five_segment();
    let coarse = |h: f64| SolverConfig {
        cell_width: h,
        output_dx: 40.0,
        output_dt: 1.0,
        ..Default::default()
    };
    let fields: Vec<_> = [40.0, 20.0, 10.0, 5.0]
        .iter()
        .map(|&h| simulate_corridor(&corridor, &coarse(h)).unwrap().field)
        .collect();
    let l1 = |a: &pidl_tse::field::DensityField, b: &pidl_tse::field::DensityField| {
        a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    };
    let diffs: Vec<f64> = fields.windows(2).map(|w| l1(&w[0], &w[1])).collect();
    assert!(diffs[0] > diffs[1] && diffs[1] > diffs[2], "{diffs:?}");
}

fn arb_corridor() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((10.0f64..60.0, 0.05f64..0.2), 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_corridor_conserves_mass_and_stays_bounded(
        params in arb_corridor(),
        fractions in prop::collection::vec(0.0f64..=1.0, 30),
    ) {
        let c = small_corridor(&params);
        let init: Vec<f64> = fractions
            .iter()
            .enumerate()
            .map(|(i, f)| f * c.segments[i / 10].rho_m)
            .collect();
        let sim = simulate_with_diagnostics(&c, &init, &small_config()).unwrap();
        prop_assert!(sim.relative_mass_drift() <= 1e-12, "{}", sim.relative_mass_drift());
        for k in 0..sim.field.nt {
            for j in 0..sim.field.nx {
                let x = sim.field.x(j);
                let v = sim.field.get(k, j);
                let rho_m = c.segment_at(x).unwrap().rho_m;
                prop_assert!(v >= 0.0, "negative density {v}");
                prop_assert!(v <= rho_m + 1e-12, "{v} above {rho_m} at x = {x}");
            }
        }
        prop_assert!(sim.dt <= cfl_max_dt(&c, 10.0) + 1e-15);
    }

    #[test]
    fn scheme_is_order_preserving(
        params in arb_corridor(),
        lo in prop::collection::vec(0.0f64..=1.0, 30),
        bump in prop::collection::vec(0.0f64..=1.0, 30),
    ) {
        let c = small_corridor(&params);
        let rho = |i: usize| c.segments[i / 10].rho_m;
        let a: Vec<f64> = lo.iter().enumerate().map(|(i, f)| f * rho(i)).collect();
        let b: Vec<f64> = lo
            .iter()
            .zip(&bump)
            .enumerate()
            .map(|(i, (f, d))| (f + d * (1.0 - f)) * rho(i))
            .collect();
        let fa = simulate(&c, &a, &small_config()).unwrap();
        let fb = simulate(&c, &b, &small_config()).unwrap();
        for (x, y) in fa.values.iter().zip(&fb.values) {
            prop_assert!(x <= &(y + 1e-12), "{x} > {y}");
        }
    }

    #[test]
    fn uniform_critical_single_segment_is_steady(v_f in 10.0f64..60.0, rho_m in 0.05f64..0.2) {
        let mut s = seg(1, (0.0, 300.0), v_f, rho_m);
        s.f_up = s.capacity();
        s.f_down = s.capacity();
        let c = CorridorSpec::new(vec![s.clone()], 20.0).unwrap();
        let init = vec![0.5 * rho_m; 30];
        let f = simulate(&c, &init, &small_config()).unwrap();
        for v in &f.values {
            prop_assert!((v - 0.5 * rho_m).abs() <= 1e-14);
        }
    }
}
