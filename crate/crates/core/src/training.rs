//! Physics-informed training of a density estimator on one road segment.
//!
//! The cost is `J = mu * J_PHY + (1 - mu) * J_DL`, where `J_DL` is the mean
//! squared error against observed densities and `J_PHY` the mean squared LWR
//! residual `rho_t + v_f (1 - 2 rho / rho_m) rho_x` at collocation points.

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corridor::{CorridorSpec, SegmentSpec};
use crate::error::{Error, Result};
use crate::field::DensityField;
use crate::nn::{init_network, BatchEval, EvalRecord, Frame, NetworkSpec, ParamVector};

/// One observed density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub t: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    pub points: Vec<Observation>,
    pub segment_id: Option<usize>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.x, p.t)).collect()
    }

    /// Splits off the trailing `fraction` of points (at least one when the
    /// set has two or more) as a held-out set.
    pub fn split_holdout(&self, fraction: f64) -> (ObservationSet, ObservationSet) {
        let n = self.points.len();
        let mut held = ((n as f64) * fraction).round() as usize;
        if fraction > 0.0 && n >= 2 {
            held = held.clamp(1, n - 1);
        }
        let cut = n - held.min(n);
        let part = |points: &[Observation]| ObservationSet {
            points: points.to_vec(),
            segment_id: self.segment_id,
        };
        (part(&self.points[..cut]), part(&self.points[cut..]))
    }

    /// Serializes as `x,t,rho` lines under a `segment=` header.
    pub fn to_csv(&self) -> String {
        let mut out = match self.segment_id {
            Some(s) => format!("segment={s}\n"),
            None => "segment=none\n".to_string(),
        };
        for p in &self.points {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", p.x, p.t, p.rho));
        }
        out
    }

    pub fn from_csv(text: &str) -> std::result::Result<ObservationSet, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty observation file")?;
        let seg = header
            .strip_prefix("segment=")
            .ok_or("observation header must be `segment=`")?;
        let segment_id = match seg {
            "none" => None,
            s => Some(s.parse().map_err(|_| format!("bad segment id {s:?}"))?),
        };
        let mut points = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| format!("bad observation line {line:?}"))?;
            if vals.len() != 3 {
                return Err(format!("observation line {line:?} needs 3 fields"));
            }
            points.push(Observation {
                x: vals[0],
                t: vals[1],
                rho: vals[2],
            });
        }
        Ok(ObservationSet { points, segment_id })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollocationSet {
    pub points: Vec<(f64, f64)>,
    pub segment_id: Option<usize>,
}

impl CollocationSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidlConfig {
    /// Weight of the physics cost.
    pub mu: f64,
    pub n_observations: usize,
    pub n_collocation: usize,
    pub learning_rate: f64,
    /// Learning rate at the last iteration as a fraction of `learning_rate`;
    /// the rate decays geometrically in between.
    pub final_lr_fraction: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Iterations between trajectory entries.
    pub log_every: usize,
    /// Standard deviation of Gaussian noise added to observations (veh/m).
    pub observation_noise: f64,
    /// Overrides the segment extent used for input normalization.
    pub x_range: Option<(f64, f64)>,
    /// Overrides `[0, horizon]` for input normalization.
    pub t_range: Option<(f64, f64)>,
}

impl Default for PidlConfig {
    fn default() -> Self {
        PidlConfig {
            mu: 0.2,
            n_observations: 250,
            n_collocation: 1000,
            learning_rate: 3e-3,
            final_lr_fraction: 1.0,
            iterations: 3000,
            seed: 0,
            log_every: 100,
            observation_noise: 0.0,
            x_range: None,
            t_range: None,
        }
    }
}

impl PidlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::InvalidConfig(format!("mu must lie in [0, 1], got {}", self.mu)));
        }
        if self.n_observations == 0 || self.n_collocation == 0 {
            return Err(Error::InvalidConfig("point counts must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::InvalidConfig("final learning-rate fraction must lie in (0, 1]".into()));
        }
        if self.observation_noise < 0.0 {
            return Err(Error::InvalidConfig("observation noise must be >= 0".into()));
        }
        Ok(())
    }

    /// Normalization frame for a segment.
    pub fn frame_for(&self, seg: &SegmentSpec, horizon: f64) -> Frame {
        Frame::new(
            self.x_range.unwrap_or((seg.x_start, seg.x_end)),
            self.t_range.unwrap_or((0.0, horizon)),
            seg.rho_m,
        )
    }
}

/// One logged point of the optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSample {
    pub iteration: usize,
    pub j: f64,
    pub j_dl: f64,
    pub j_phy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub trajectory: Vec<LossSample>,
    /// Relative L2 error on the segment's part of the truth grid.
    pub final_relative_l2: Option<f64>,
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("iteration,J,J_DL,J_PHY\n");
        for s in &self.trajectory {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e}\n",
                s.iteration, s.j, s.j_dl, s.j_phy
            ));
        }
        out
    }
}

/// Grid indices `(k, j)` of the field points owned by `segment`.
fn segment_columns(field: &DensityField, segment: &SegmentSpec, last: bool) -> Vec<usize> {
    (0..field.nx)
        .filter(|&j| {
            let x = field.x(j);
            x >= segment.x_start && (x < segment.x_end || (last && x == segment.x_end))
        })
        .collect()
}

/// Draws `n` distinct grid points of `segment` uniformly at random.
///
/// The segment owns `[x_start, x_end)`, plus `x_end` when `owns_end` is set
/// (the last segment of a corridor).
pub fn sample_observations(
    field: &DensityField,
    segment: &SegmentSpec,
    n: usize,
    seed: u64,
) -> Result<ObservationSet> {
    sample_observations_owned(field, segment, false, n, seed)
}

/// [`sample_observations`] with the corridor's endpoint convention resolved.
pub fn sample_segment_observations(
    field: &DensityField,
    corridor: &CorridorSpec,
    segment_index: usize,
    n: usize,
    seed: u64,
) -> Result<ObservationSet> {
    let seg = corridor
        .segment(segment_index)
        .ok_or_else(|| Error::InvalidConfig(format!("no segment {segment_index}")))?;
    let last = segment_index == corridor.segments.len();
    sample_observations_owned(field, seg, last, n, seed)
}

fn sample_observations_owned(
    field: &DensityField,
    segment: &SegmentSpec,
    owns_end: bool,
    n: usize,
    seed: u64,
) -> Result<ObservationSet> {
    let cols = segment_columns(field, segment, owns_end);
    let available = cols.len() * field.nt;
    if n > available {
        return Err(Error::NotEnoughPoints {
            requested: n,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = sample(&mut rng, available, n)
        .into_iter()
        .map(|flat| {
            let (k, c) = (flat / cols.len(), flat % cols.len());
            let j = cols[c];
            Observation {
                x: field.x(j),
                t: field.t(k),
                rho: field.get(k, j),
            }
        })
        .collect();
    Ok(ObservationSet {
        points,
        segment_id: Some(segment.index),
    })
}

/// Uniform continuous points in `[x_start, x_end) x [0, horizon]`.
pub fn sample_collocation(
    segment: &SegmentSpec,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<CollocationSet> {
    if n == 0 {
        return Err(Error::Empty("collocation set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            (
                rng.gen_range(segment.x_start..segment.x_end),
                rng.gen_range(0.0..=horizon),
            )
        })
        .collect();
    Ok(CollocationSet {
        points,
        segment_id: Some(segment.index),
    })
}

/// LWR residual in density form.
pub fn physics_residual(record: &EvalRecord, seg: &SegmentSpec) -> f64 {
    record.d_rho_dt + seg.v_f * (1.0 - 2.0 * record.rho_hat / seg.rho_m) * record.d_rho_dx
}

/// Mean squared residual over `residuals`, with per-record adjoints.
fn physics_cost_with_adjoints(records: &[EvalRecord], seg: &SegmentSpec) -> (f64, Vec<EvalRecord>) {
    let n = records.len() as f64;
    let mut sum = 0.0;
    let adj = records
        .iter()
        .map(|r| {
            let c = seg.v_f * (1.0 - 2.0 * r.rho_hat / seg.rho_m);
            let res = r.d_rho_dt + c * r.d_rho_dx;
            sum += res * res;
            let g = 2.0 * res / n;
            EvalRecord {
                rho_hat: g * (-2.0 * seg.v_f / seg.rho_m) * r.d_rho_dx,
                d_rho_dx: g * c,
                d_rho_dt: g,
            }
        })
        .collect();
    (sum / n, adj)
}

fn data_cost_with_adjoints(estimates: &[f64], obs: &ObservationSet) -> (f64, Vec<EvalRecord>) {
    let n = obs.len() as f64;
    let mut sum = 0.0;
    let adj = estimates
        .iter()
        .zip(&obs.points)
        .map(|(&est, p)| {
            let e = est - p.rho;
            sum += e * e;
            EvalRecord {
                rho_hat: 2.0 * e / n,
                ..Default::default()
            }
        })
        .collect();
    (sum / n, adj)
}

pub fn physics_cost(
    params: &ParamVector,
    spec: &NetworkSpec,
    frame: &Frame,
    collocation: &CollocationSet,
    seg: &SegmentSpec,
) -> Result<f64> {
    if collocation.is_empty() {
        return Err(Error::Empty("collocation set".into()));
    }
    let eval = BatchEval::new(params, spec, frame, &collocation.points, true)?;
    Ok(physics_cost_with_adjoints(&eval.records(), seg).0)
}

pub fn data_cost(
    params: &ParamVector,
    spec: &NetworkSpec,
    frame: &Frame,
    observations: &ObservationSet,
) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::Empty("observation set".into()));
    }
    let eval = BatchEval::new(params, spec, frame, &observations.coords(), false)?;
    Ok(data_cost_with_adjoints(eval.rho().as_slice().unwrap(), observations).0)
}

pub fn pidl_cost(mu: f64, j_phy: f64, j_dl: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidConfig(format!("mu must lie in [0, 1], got {mu}")));
    }
    Ok(mu * j_phy + (1.0 - mu) * j_dl)
}

/// Value of every cost term plus the gradient of `J`.
#[derive(Debug, Clone)]
pub struct CostEval {
    pub j: f64,
    pub j_dl: f64,
    pub j_phy: f64,
    pub gradient: ParamVector,
}

/// The full cost and its exact parameter gradient.
///
/// With `mu == 0` the collocation pass is skipped entirely, so the gradient is
/// that of the data cost alone. The physics term needs a segment whenever
/// `mu > 0`.
pub fn pidl_cost_gradient(
    params: &ParamVector,
    spec: &NetworkSpec,
    frame: &Frame,
    observations: &ObservationSet,
    collocation: &CollocationSet,
    seg: Option<&SegmentSpec>,
    mu: f64,
) -> Result<CostEval> {
    let mut grad = vec![0.0; params.len()];
    let obs_eval = BatchEval::new(params, spec, frame, &observations.coords(), false)?;
    let (j_dl, mut adj) = data_cost_with_adjoints(obs_eval.rho().as_slice().unwrap(), observations);
    let w_dl = 1.0 - mu;
    adj.iter_mut().for_each(|a| a.rho_hat *= w_dl);
    obs_eval.backward_into(&adj, &mut grad);

    let mut j_phy = 0.0;
    if mu > 0.0 {
        let seg = seg.ok_or_else(|| {
            Error::InvalidConfig("physics cost requires a segment".into())
        })?;
        let col_eval = BatchEval::new(params, spec, frame, &collocation.points, true)?;
        let (value, mut adj) = physics_cost_with_adjoints(&col_eval.records(), seg);
        j_phy = value;
        for a in &mut adj {
            a.rho_hat *= mu;
            a.d_rho_dx *= mu;
            a.d_rho_dt *= mu;
        }
        col_eval.backward_into(&adj, &mut grad);
    }
    let j = pidl_cost(mu, j_phy, j_dl)?;
    Ok(CostEval {
        j,
        j_dl,
        j_phy,
        gradient: ParamVector(grad),
    })
}

/// Data cost of `scale_i * net(x_i, t_i)` against the observations, with its
/// gradient. `scales` holds one output scale per observation.
pub fn scaled_data_cost_gradient(
    params: &ParamVector,
    spec: &NetworkSpec,
    frame: &Frame,
    observations: &ObservationSet,
    scales: &[f64],
) -> Result<CostEval> {
    if observations.is_empty() {
        return Err(Error::Empty("observation set".into()));
    }
    if scales.len() != observations.len() {
        return Err(Error::InvalidConfig(format!(
            "{} scales for {} observations",
            scales.len(),
            observations.len()
        )));
    }
    let eval = BatchEval::new(params, spec, frame, &observations.coords(), false)?;
    let est: Vec<f64> = eval.rho().iter().zip(scales).map(|(u, s)| s * u).collect();
    let (j_dl, mut adj) = data_cost_with_adjoints(&est, observations);
    for (a, s) in adj.iter_mut().zip(scales) {
        a.rho_hat *= s;
    }
    let mut grad = vec![0.0; params.len()];
    eval.backward_into(&adj, &mut grad);
    Ok(CostEval {
        j: j_dl,
        j_dl,
        j_phy: 0.0,
        gradient: ParamVector(grad),
    })
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Runs Adam on the cost from `init` for `config.iterations` full-batch steps.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    init: ParamVector,
    spec: &NetworkSpec,
    frame: &Frame,
    observations: &ObservationSet,
    collocation: &CollocationSet,
    seg: Option<&SegmentSpec>,
    config: &PidlConfig,
) -> Result<(ParamVector, TrainReport)> {
    config.validate()?;
    spec.validate()?;
    if observations.is_empty() && config.mu < 1.0 {
        return Err(Error::Empty("observation set".into()));
    }
    fit_with(init, config, |p| {
        pidl_cost_gradient(p, spec, frame, observations, collocation, seg, config.mu)
    })
}

/// The Adam loop of [`fit`] around an arbitrary cost. Only the optimizer
/// settings of `config` are used.
pub fn fit_with<F>(init: ParamVector, config: &PidlConfig, mut cost_of: F) -> Result<(ParamVector, TrainReport)>
where
    F: FnMut(&ParamVector) -> Result<CostEval>,
{
    let start = Instant::now();
    let mut params = init;
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut trajectory = Vec::new();
    let log_every = config.log_every.max(1);
    for it in 0..config.iterations {
        let cost = cost_of(&params).map_err(|e| Error::Diverged {
                iteration: it,
                detail: e.to_string(),
            })?;
        if !(cost.j.is_finite() && cost.gradient.iter().all(|g| g.is_finite())) {
            return Err(Error::Diverged {
                iteration: it,
                detail: format!("cost {}", cost.j),
            });
        }
        if it % log_every == 0 {
            trajectory.push(LossSample {
                iteration: it,
                j: cost.j,
                j_dl: cost.j_dl,
                j_phy: cost.j_phy,
            });
        }
        let progress = it as f64 / config.iterations.max(2).saturating_sub(1) as f64;
        adam.learning_rate = config.learning_rate * config.final_lr_fraction.powf(progress);
        adam.step(&mut params, &cost.gradient);
    }
    if config.iterations > 0 {
        let last = cost_of(&params).map_err(|e| Error::Diverged {
                iteration: config.iterations,
                detail: e.to_string(),
            })?;
        if !last.j.is_finite() {
            return Err(Error::Diverged {
                iteration: config.iterations,
                detail: format!("cost {}", last.j),
            });
        }
        trajectory.push(LossSample {
            iteration: config.iterations,
            j: last.j,
            j_dl: last.j_dl,
            j_phy: last.j_phy,
        });
    }
    Ok((
        params,
        TrainReport {
            trajectory,
            final_relative_l2: None,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Adds zero-mean Gaussian noise to observed densities, clamped at zero.
pub fn add_observation_noise(obs: &mut ObservationSet, std_dev: f64, seed: u64) {
    if std_dev <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, std_dev).expect("positive standard deviation");
    for p in &mut obs.points {
        p.rho = (p.rho + noise.sample(&mut rng)).max(0.0);
    }
}

/// Samples observations and collocation points from the config seeds and
/// trains one physics-informed estimator on `segment_index`.
pub fn train_pidl(
    field: &DensityField,
    corridor: &CorridorSpec,
    segment_index: usize,
    config: &PidlConfig,
    spec: &NetworkSpec,
) -> Result<(ParamVector, TrainReport)> {
    let seg = corridor
        .segment(segment_index)
        .ok_or_else(|| Error::InvalidConfig(format!("no segment {segment_index}")))?;
    let mut obs = sample_segment_observations(
        field,
        corridor,
        segment_index,
        config.n_observations,
        config.seed,
    )?;
    add_observation_noise(&mut obs, config.observation_noise, config.seed ^ 0x006e_6f69_7365);
    let colloc = sample_collocation(seg, corridor.horizon, config.n_collocation, config.seed + 1)?;
    let frame = config.frame_for(seg, corridor.horizon);
    let init = init_network(spec, config.seed);
    let (params, mut report) = fit(init, spec, &frame, &obs, &colloc, Some(seg), config)?;
    let last = segment_index == corridor.segments.len();
    // undefined (None) where the segment's truth is identically zero
    report.final_relative_l2 = match segment_relative_l2(field, seg, last, |pts| {
        crate::nn::predict_batch(&params, spec, &frame, pts)
    }) {
        Ok(v) => Some(v),
        Err(Error::Empty(_)) => None,
        Err(e) => return Err(e),
    };
    Ok((params, report))
}

/// Relative L2 error of a predictor restricted to one segment's grid columns.
pub fn segment_relative_l2<F>(
    field: &DensityField,
    seg: &SegmentSpec,
    owns_end: bool,
    predict: F,
) -> Result<f64>
where
    F: Fn(&[(f64, f64)]) -> Result<Vec<f64>>,
{
    let cols = segment_columns(field, seg, owns_end);
    let mut pts = Vec::with_capacity(cols.len() * field.nt);
    let mut truth = Vec::with_capacity(cols.len() * field.nt);
    for k in 0..field.nt {
        for &j in &cols {
            pts.push((field.x(j), field.t(k)));
            truth.push(field.get(k, j));
        }
    }
    let est = predict(&pts)?;
    relative_l2(&est, &truth)
}

/// `||est - truth||_2 / ||truth||_2` over paired values.
pub fn relative_l2(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::GridMismatch(format!(
            "{} estimates for {} truth values",
            estimate.len(),
            truth.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&e, &t) in estimate.iter().zip(truth) {
        num += (e - t) * (e - t);
        den += t * t;
    }
    if den == 0.0 {
        return Err(Error::Empty(
            "truth is identically zero; relative error undefined".into(),
        ));
    }
    Ok(num.sqrt() / den.sqrt())
}

/// Relative L2 error between two fields on the same grid.
pub fn relative_l2_error(estimate: &DensityField, truth: &DensityField) -> Result<f64> {
    if !estimate.same_grid(truth) {
        return Err(Error::GridMismatch(format!(
            "estimate grid {:?} differs from truth grid {:?}",
            estimate.grid(),
            truth.grid()
        )));
    }
    relative_l2(&estimate.values, &truth.values)
}
