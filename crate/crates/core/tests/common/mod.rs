//! Random network cases and finite-difference checks shared by the autodiff
//! suite and the acceptance run.

#![allow(dead_code)]

use pidl_tse::corridor::SegmentSpec;
use pidl_tse::nn::*;
use pidl_tse::training::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ARCHES: [&[usize]; 5] = [&[4], &[6, 6], &[8, 8], &[5, 5, 5], &[3, 7]];

pub struct Case {
    pub spec: NetworkSpec,
    pub frame: Frame,
    pub params: ParamVector,
    pub seg: SegmentSpec,
    pub obs: ObservationSet,
    pub colloc: CollocationSet,
    pub mu: f64,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = ARCHES[rng.gen_range(0..ARCHES.len())].to_vec();
    let spec = NetworkSpec {
        hidden_layers: hidden,
        activation: if rng.gen_bool(0.8) { Activation::Tanh } else { Activation::Sin },
        output_squash: rng.gen_bool(0.7),
    };
    assert!(spec.param_count() <= 200);
    let x0 = rng.gen_range(-5.0..5.0);
    let t0 = rng.gen_range(0.0..3.0);
    let lx = rng.gen_range(1.0..10.0);
    let lt = rng.gen_range(1.0..5.0);
    let rho_m = rng.gen_range(0.5..2.0);
    let frame = Frame::new((x0, x0 + lx), (t0, t0 + lt), rho_m);
    let mut params = init_network(&spec, rng.gen());
    // nonzero biases so no gradient component is structurally tiny
    for p in params.iter_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    let seg = SegmentSpec {
        index: 1,
        x_start: x0,
        x_end: x0 + lx,
        v_f: rng.gen_range(0.5..2.0),
        rho_m,
        f_up: 0.0,
        f_down: 0.0,
    };
    let mut point = || (rng.gen_range(x0..x0 + lx), rng.gen_range(t0..t0 + lt));
    let obs = ObservationSet {
        points: (0..3)
            .map(|_| {
                let (x, t) = point();
                Observation { x, t, rho: 0.0 }
            })
            .collect(),
        segment_id: Some(1),
    };
    let colloc = CollocationSet {
        points: (0..3).map(|_| point()).collect(),
        segment_id: Some(1),
    };
    let mut obs = obs;
    for p in &mut obs.points {
        p.rho = rng.gen_range(0.0..rho_m);
    }
    Case {
        spec,
        frame,
        params,
        seg,
        obs,
        colloc,
        mu: rng.gen_range(0.0..1.0),
    }
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-12)
}

pub fn cost(c: &Case, p: &ParamVector) -> f64 {
    pidl_cost_gradient(p, &c.spec, &c.frame, &c.obs, &c.colloc, Some(&c.seg), c.mu)
        .unwrap()
        .j
}

/// Smallest gradient component relative to the cost scale. Central differences
/// at h = 1e-6 carry roughly 1e-10 * J of rounding noise, so components far
/// below J cannot be resolved at that step.
pub fn conditioning(j: f64, g: &[f64]) -> f64 {
    let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let gmin = g.iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
    gmin / j.max(gmax)
}

/// Worst relative error of the analytic input derivatives against central
/// differences (h = 1e-5) at a random point of the case's domain.
pub fn input_derivative_error(c: &Case, seed: u64) -> f64 {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
    let x = rng.gen_range(c.frame.x_min..c.frame.x_max);
    let t = rng.gen_range(c.frame.t_min..c.frame.t_max);
    let at = |x: f64, t: f64| {
        let (xn, tn) = c.frame.normalize(x, t);
        forward(&c.params, &c.spec, &c.frame, xn, tn).unwrap()
    };
    let (xn, tn) = c.frame.normalize(x, t);
    let rec = forward_with_input_grads(&c.params, &c.spec, &c.frame, xn, tn).unwrap();
    assert_eq!(rec.rho_hat, at(x, t));
    let ddx = (at(x + h, t) - at(x - h, t)) / (2.0 * h);
    let ddt = (at(x, t + h) - at(x, t - h)) / (2.0 * h);
    rel(rec.d_rho_dx, ddx).max(rel(rec.d_rho_dt, ddt))
}

/// Worst relative error of the full cost gradient against central
/// differences at h = 1e-6, or `None` when the gradient has components too
/// small for that step to resolve.
pub fn gradient_error(c: &Case) -> Option<f64> {
    let eval = pidl_cost_gradient(&c.params, &c.spec, &c.frame, &c.obs, &c.colloc, Some(&c.seg), c.mu).unwrap();
    if conditioning(eval.j, &eval.gradient) < 1e-3 {
        return None;
    }
    Some(finite_diff_check(&c.params, &eval.gradient, |p| cost(c, p), 1e-6))
}

/// Worst relative error of the full cost gradient against Richardson
/// extrapolation of central differences at h = 1e-3 and 5e-4.
pub fn extrapolated_gradient_error(c: &Case) -> f64 {
    let eval = pidl_cost_gradient(&c.params, &c.spec, &c.frame, &c.obs, &c.colloc, Some(&c.seg), c.mu).unwrap();
    let central = |h: f64| -> Vec<f64> {
        let mut q = c.params.clone();
        (0..q.len())
            .map(|i| {
                let orig = q[i];
                q[i] = orig + h;
                let up = cost(c, &q);
                q[i] = orig - h;
                let down = cost(c, &q);
                q[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    };
    let (coarse, fine) = (central(1e-3), central(5e-4));
    eval.gradient
        .iter()
        .enumerate()
        .map(|(i, &a)| rel(a, (4.0 * fine[i] - coarse[i]) / 3.0))
        .fold(0.0, f64::max)
}
