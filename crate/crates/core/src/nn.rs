//! Feedforward density estimator with exact input and parameter derivatives.
//!
//! The network maps normalized `(x, t)` to a density. Input derivatives are
//! propagated forward as two tangent streams alongside the primal values; the
//! reverse sweep then differentiates through primal and tangents together, so
//! any loss built from `rho`, `drho/dx` and `drho/dt` gets an exact parameter
//! gradient, second-order paths included.
//!
//! Parameters are stored flat, layer by layer: the `(out, in)` weight matrix in
//! row-major order followed by the `out` biases.

use std::fmt;
use std::fs;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows per block when evaluating large batches.
const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sin,
}

impl Activation {
    /// Value, first and second derivative.
    #[inline]
    fn eval(self, a: f64) -> (f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let z = a.tanh();
                let d1 = 1.0 - z * z;
                (z, d1, -2.0 * z * d1)
            }
            Activation::Sin => {
                let (sn, cs) = a.sin_cos();
                (sn, cs, -sn)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sin => "sin",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "sin" => Some(Activation::Sin),
            _ => None,
        }
    }
}

/// Architecture of a `2 -> hidden... -> 1` perceptron.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSpec {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    /// Map the raw output through a logistic squash scaled by the frame's
    /// `rho_scale`, keeping estimates strictly inside `(0, rho_scale)`.
    pub output_squash: bool,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            hidden_layers: vec![20, 20, 20],
            activation: Activation::Tanh,
            output_squash: true,
        }
    }
}

impl NetworkSpec {
    pub const INPUT_DIM: usize = 2;

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be >= 1".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every affine layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut fan_in = Self::INPUT_DIM;
        for &w in &self.hidden_layers {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims.push((fan_in, 1));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    fn descriptor(&self) -> String {
        let widths: Vec<String> = self.hidden_layers.iter().map(|w| w.to_string()).collect();
        format!(
            "hidden={} activation={} squash={}",
            widths.join("-"),
            self.activation.name(),
            self.output_squash
        )
    }
}

/// Flat trainable parameters in canonical layer order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(pub Vec<f64>);

impl Deref for ParamVector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

/// Affine map from physical coordinates to `[-1, 1]^2`, plus the density
/// scale applied by the output squash.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub x_min: f64,
    pub x_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub rho_scale: f64,
}

impl Frame {
    pub fn new(x_range: (f64, f64), t_range: (f64, f64), rho_scale: f64) -> Self {
        Frame {
            x_min: x_range.0,
            x_max: x_range.1,
            t_min: t_range.0,
            t_max: t_range.1,
            rho_scale,
        }
    }

    /// Identity normalization with unit density scale.
    pub fn unit() -> Self {
        Frame::new((-1.0, 1.0), (-1.0, 1.0), 1.0)
    }

    pub fn normalize(&self, x: f64, t: f64) -> (f64, f64) {
        (
            2.0 * (x - self.x_min) / (self.x_max - self.x_min) - 1.0,
            2.0 * (t - self.t_min) / (self.t_max - self.t_min) - 1.0,
        )
    }

    /// `d x_norm / d x`.
    pub fn x_scale(&self) -> f64 {
        2.0 / (self.x_max - self.x_min)
    }

    /// `d t_norm / d t`.
    pub fn t_scale(&self) -> f64 {
        2.0 / (self.t_max - self.t_min)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min && self.t_max > self.t_min && self.rho_scale > 0.0) {
            return Err(Error::InvalidConfig(format!("degenerate frame {self:?}")));
        }
        Ok(())
    }
}

/// Estimate and its derivatives with respect to physical `x` and `t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalRecord {
    pub rho_hat: f64,
    pub d_rho_dx: f64,
    pub d_rho_dt: f64,
}

/// Glorot-uniform weights, zero biases; deterministic per seed.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_dims() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParamVector(params)
}

fn check_len(params: &ParamVector, spec: &NetworkSpec) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::InvalidConfig(format!(
            "parameter vector has {} entries, architecture needs {}",
            params.len(),
            spec.param_count()
        )));
    }
    Ok(())
}

/// Estimate at normalized coordinates.
pub fn forward(
    params: &ParamVector,
    spec: &NetworkSpec,
    frame: &Frame,
    x_norm: f64,
    t_norm: f64,
) -> Result<f64> {
    check_len(params, spec)?;
    let input = Array2::from_shape_vec((1, 2), vec![x_norm, t_norm]).unwrap();
    let tape = Tape::record(params, spec, frame, input, false);
    let rho = tape.rho[0];
    if !rho.is_finite() {
        return Err(Error::NonFinite(format!(
            "network output {rho} at normalized ({x_norm}, {t_norm})"
        )));
    }
    Ok(rho)
}

/// Estimate plus physical-coordinate derivatives at normalized coordinates.
pub fn forward_with_input_grads(
    params: &ParamVector,
    spec: &NetworkSpec,
    frame: &Frame,
    x_norm: f64,
    t_norm: f64,
) -> Result<EvalRecord> {
    check_len(params, spec)?;
    let input = Array2::from_shape_vec((1, 2), vec![x_norm, t_norm]).unwrap();
    let tape = Tape::record(params, spec, frame, input, true);
    let rec = tape.record_at(0);
    if !(rec.rho_hat.is_finite() && rec.d_rho_dx.is_finite() && rec.d_rho_dt.is_finite()) {
        return Err(Error::NonFinite(format!(
            "network evaluation {rec:?} at normalized ({x_norm}, {t_norm})"
        )));
    }
    Ok(rec)
}

/// Estimates at many physical points, evaluated in blocks.
pub fn predict_batch(
    params: &ParamVector,
    spec: &NetworkSpec,
    frame: &Frame,
    points: &[(f64, f64)],
) -> Result<Vec<f64>> {
    check_len(params, spec)?;
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(CHUNK) {
        let tape = Tape::record(params, spec, frame, normalized_inputs(frame, chunk), false);
        out.extend(tape.rho.iter().copied());
    }
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "network output {} at {:?}",
            out[i], points[i]
        )));
    }
    Ok(out)
}

fn normalized_inputs(frame: &Frame, points: &[(f64, f64)]) -> Array2<f64> {
    let mut input = Array2::zeros((points.len(), 2));
    for (mut row, &(x, t)) in input.rows_mut().into_iter().zip(points) {
        let (xn, tn) = frame.normalize(x, t);
        row[0] = xn;
        row[1] = tn;
    }
    input
}

/// A recorded batch evaluation at physical points, ready for a reverse sweep.
pub struct BatchEval<'a> {
    spec: &'a NetworkSpec,
    params: &'a ParamVector,
    tape: Tape,
}

impl<'a> BatchEval<'a> {
    pub fn new(
        params: &'a ParamVector,
        spec: &'a NetworkSpec,
        frame: &Frame,
        points: &[(f64, f64)],
        input_grads: bool,
    ) -> Result<Self> {
        check_len(params, spec)?;
        frame.validate()?;
        let tape = Tape::record(params, spec, frame, normalized_inputs(frame, points), input_grads);
        Ok(BatchEval { spec, params, tape })
    }

    pub fn len(&self) -> usize {
        self.tape.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Estimates; derivative fields are zero when input gradients were off.
    pub fn records(&self) -> Vec<EvalRecord> {
        (0..self.len()).map(|i| self.tape.record_at(i)).collect()
    }

    pub fn rho(&self) -> &Array1<f64> {
        &self.tape.rho
    }

    /// Accumulates into `grad` the parameter gradient of `sum_i adj_i . record_i`.
    pub fn backward_into(&self, adjoints: &[EvalRecord], grad: &mut [f64]) {
        assert_eq!(adjoints.len(), self.len(), "one adjoint per record");
        assert_eq!(grad.len(), self.params.len());
        self.tape.backward(self.params, self.spec, adjoints, grad);
    }
}

/// Value and parameter gradient of a scalar loss over a batch of records.
///
/// `loss` returns the loss value together with its partial derivatives with
/// respect to each record's three fields.
pub fn loss_gradient<F>(
    params: &ParamVector,
    spec: &NetworkSpec,
    frame: &Frame,
    points: &[(f64, f64)],
    loss: F,
) -> Result<(f64, ParamVector)>
where
    F: Fn(&[EvalRecord]) -> (f64, Vec<EvalRecord>),
{
    let eval = BatchEval::new(params, spec, frame, points, true)?;
    let (value, adjoints) = loss(&eval.records());
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {value}")));
    }
    let mut grad = vec![0.0; params.len()];
    eval.backward_into(&adjoints, &mut grad);
    Ok((value, ParamVector(grad)))
}

/// Worst component-wise relative error between an analytic gradient and
/// central differences of `scalar_fn`. The denominator is
/// `max(|analytic|, |numeric|, 1e-12)`.
pub fn finite_diff_check<F>(params: &ParamVector, analytic: &[f64], scalar_fn: F, h: f64) -> f64
where
    F: Fn(&ParamVector) -> f64,
{
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = scalar_fn(&probe);
        probe[i] = orig - h;
        let down = scalar_fn(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

struct LayerTape {
    /// Inputs to the layer and their tangents.
    z: Array2<f64>,
    zx: Option<Array2<f64>>,
    zt: Option<Array2<f64>>,
    /// Pre-activation tangents (hidden layers only).
    ax: Option<Array2<f64>>,
    at: Option<Array2<f64>>,
    /// Activation first and second derivatives at the pre-activation.
    d1: Option<Array2<f64>>,
    d2: Option<Array2<f64>>,
}

struct Tape {
    layers: Vec<LayerTape>,
    /// Raw output and its normalized-input tangents.
    y: Array1<f64>,
    yx: Option<Array1<f64>>,
    yt: Option<Array1<f64>>,
    rho: Array1<f64>,
    rho_x: Option<Array1<f64>>,
    rho_t: Option<Array1<f64>>,
    squash: Option<f64>,
    x_scale: f64,
    t_scale: f64,
}

fn layer_views<'p>(
    params: &'p [f64],
    spec: &NetworkSpec,
) -> Vec<(ArrayView2<'p, f64>, ndarray::ArrayView1<'p, f64>)> {
    let mut off = 0;
    spec.layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let w = ArrayView2::from_shape((fan_out, fan_in), &params[off..off + fan_in * fan_out])
                .unwrap();
            off += fan_in * fan_out;
            let b = ndarray::ArrayView1::from(&params[off..off + fan_out]);
            off += fan_out;
            (w, b)
        })
        .collect()
}

impl Tape {
    fn record(
        params: &[f64],
        spec: &NetworkSpec,
        frame: &Frame,
        input: Array2<f64>,
        tangents: bool,
    ) -> Tape {
        let n = input.nrows();
        let views = layer_views(params, spec);
        let mut z = input;
        let (mut zx, mut zt) = if tangents {
            let mut ex = Array2::zeros((n, 2));
            ex.column_mut(0).fill(1.0);
            let mut et = Array2::zeros((n, 2));
            et.column_mut(1).fill(1.0);
            (Some(ex), Some(et))
        } else {
            (None, None)
        };
        let mut layers = Vec::with_capacity(views.len());
        let act = spec.activation;
        let (hidden, output) = views.split_at(views.len() - 1);
        for (w, b) in hidden {
            let mut a = z.dot(&w.t());
            a += b;
            let ax = zx.as_ref().map(|m| m.dot(&w.t()));
            let at = zt.as_ref().map(|m| m.dot(&w.t()));
            let mut d1 = Array2::zeros(a.raw_dim());
            let mut d2 = Array2::zeros(a.raw_dim());
            Zip::from(&mut a)
                .and(&mut d1)
                .and(&mut d2)
                .for_each(|a, d1, d2| {
                    let (v, g, h) = act.eval(*a);
                    *a = v;
                    *d1 = g;
                    *d2 = h;
                });
            let next = a;
            let next_x = ax.as_ref().map(|ax| ax * &d1);
            let next_t = at.as_ref().map(|at| at * &d1);
            layers.push(LayerTape {
                z: std::mem::replace(&mut z, next),
                zx: std::mem::replace(&mut zx, next_x),
                zt: std::mem::replace(&mut zt, next_t),
                ax,
                at,
                d1: Some(d1),
                d2: Some(d2),
            });
        }
        let (w, b) = &output[0];
        let y = z.dot(&w.row(0)) + b[0];
        let yx = zx.as_ref().map(|m| m.dot(&w.row(0)));
        let yt = zt.as_ref().map(|m| m.dot(&w.row(0)));
        layers.push(LayerTape {
            z,
            zx,
            zt,
            ax: None,
            at: None,
            d1: None,
            d2: None,
        });

        let (x_scale, t_scale) = (frame.x_scale(), frame.t_scale());
        let squash = spec.output_squash.then_some(frame.rho_scale);
        let (rho, rho_x, rho_t) = match squash {
            Some(scale) => {
                let sig = y.mapv(sigmoid);
                let s1 = sig.mapv(|s| scale * s * (1.0 - s));
                let rho_x = yx.as_ref().map(|yx| yx * &s1 * x_scale);
                let rho_t = yt.as_ref().map(|yt| yt * &s1 * t_scale);
                (sig * scale, rho_x, rho_t)
            }
            None => (
                y.clone(),
                yx.as_ref().map(|v| v * x_scale),
                yt.as_ref().map(|v| v * t_scale),
            ),
        };
        Tape {
            layers,
            y,
            yx,
            yt,
            rho,
            rho_x,
            rho_t,
            squash,
            x_scale,
            t_scale,
        }
    }

    fn record_at(&self, i: usize) -> EvalRecord {
        EvalRecord {
            rho_hat: self.rho[i],
            d_rho_dx: self.rho_x.as_ref().map_or(0.0, |v| v[i]),
            d_rho_dt: self.rho_t.as_ref().map_or(0.0, |v| v[i]),
        }
    }

    fn backward(&self, params: &[f64], spec: &NetworkSpec, adj: &[EvalRecord], grad: &mut [f64]) {
        let n = adj.len();
        let tangents = self.yx.is_some();
        // adjoints of the raw output and its normalized tangents
        let mut gy = Array1::zeros(n);
        let mut gyx = Array1::zeros(n);
        let mut gyt = Array1::zeros(n);
        for i in 0..n {
            let gxn = adj[i].d_rho_dx * self.x_scale;
            let gtn = adj[i].d_rho_dt * self.t_scale;
            match self.squash {
                Some(scale) => {
                    let s = sigmoid(self.y[i]);
                    let s1 = scale * s * (1.0 - s);
                    let s2 = s1 * (1.0 - 2.0 * s);
                    let mut g = adj[i].rho_hat * s1;
                    if tangents {
                        g += (gxn * self.yx.as_ref().unwrap()[i]
                            + gtn * self.yt.as_ref().unwrap()[i])
                            * s2;
                    }
                    gy[i] = g;
                    gyx[i] = gxn * s1;
                    gyt[i] = gtn * s1;
                }
                None => {
                    gy[i] = adj[i].rho_hat;
                    gyx[i] = gxn;
                    gyt[i] = gtn;
                }
            }
        }

        let views = layer_views(params, spec);
        let offsets: Vec<usize> = spec
            .layer_dims()
            .iter()
            .scan(0, |off, (i, o)| {
                let start = *off;
                *off += i * o + o;
                Some(start)
            })
            .collect();

        // output layer: gradients arrive as (n,1) columns
        let mut g = gy.insert_axis(Axis(1));
        let mut gx = tangents.then(|| gyx.insert_axis(Axis(1)));
        let mut gt = tangents.then(|| gyt.insert_axis(Axis(1)));

        for l in (0..views.len()).rev() {
            let tape = &self.layers[l];
            let (w, _) = &views[l];
            if l + 1 < views.len() {
                // hidden layer: turn output adjoints into pre-activation adjoints
                let d1 = tape.d1.as_ref().unwrap();
                let d2 = tape.d2.as_ref().unwrap();
                let mut ga = &g * d1;
                if let (Some(gx_out), Some(gt_out)) = (gx.as_ref(), gt.as_ref()) {
                    let ax = tape.ax.as_ref().unwrap();
                    let at = tape.at.as_ref().unwrap();
                    Zip::from(&mut ga)
                        .and(gx_out)
                        .and(gt_out)
                        .and(ax)
                        .and(at)
                        .and(d2)
                        .for_each(|ga, &gx, &gt, &ax, &at, &d2| {
                            *ga += (gx * ax + gt * at) * d2;
                        });
                    gx = Some(gx_out * d1);
                    gt = Some(gt_out * d1);
                }
                g = ga;
            }
            let (fan_in, fan_out) = (w.ncols(), w.nrows());
            let off = offsets[l];
            let mut gw = g.t().dot(&tape.z);
            if let (Some(gx), Some(gt)) = (gx.as_ref(), gt.as_ref()) {
                gw += &gx.t().dot(tape.zx.as_ref().unwrap());
                gw += &gt.t().dot(tape.zt.as_ref().unwrap());
            }
            let gb = g.sum_axis(Axis(0));
            for (dst, src) in grad[off..off + fan_in * fan_out].iter_mut().zip(gw.iter()) {
                *dst += src;
            }
            for (dst, src) in grad[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]
                .iter_mut()
                .zip(gb.iter())
            {
                *dst += src;
            }
            if l > 0 {
                g = g.dot(w);
                gx = gx.map(|m| m.dot(w));
                gt = gt.map(|m| m.dot(w));
            }
        }
    }
}

#[inline]
fn sigmoid(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

/// A trained network together with its coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub spec: NetworkSpec,
    pub frame: Frame,
    pub params: ParamVector,
}

impl Estimator {
    pub fn predict(&self, x: f64, t: f64) -> Result<f64> {
        let (xn, tn) = self.frame.normalize(x, t);
        forward(&self.params, &self.spec, &self.frame, xn, tn)
    }

    pub fn predict_batch(&self, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        predict_batch(&self.params, &self.spec, &self.frame, points)
    }

    /// Writes a one-line descriptor followed by one parameter per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Estimator> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Estimator::parse(&text).map_err(|d| Error::format(path, d))
    }

    fn parse(text: &str) -> std::result::Result<Estimator, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty checkpoint")?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some("mlp") {
            return Err("checkpoint descriptor must start with `mlp`".into());
        }
        let mut hidden = None;
        let mut activation = None;
        let mut squash = None;
        let mut frame = [None::<f64>; 5];
        const FRAME_KEYS: [&str; 5] = ["x_min", "x_max", "t_min", "t_max", "rho_scale"];
        for tok in tokens {
            let (k, v) = tok.split_once('=').ok_or(format!("bad token {tok:?}"))?;
            match k {
                "hidden" => {
                    let widths = if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split('-')
                            .map(|w| w.parse::<usize>().map_err(|_| format!("bad width {w:?}")))
                            .collect::<std::result::Result<_, _>>()?
                    };
                    hidden = Some(widths);
                }
                "activation" => {
                    activation = Some(Activation::parse(v).ok_or(format!("unknown activation {v:?}"))?)
                }
                "squash" => squash = Some(v.parse::<bool>().map_err(|_| format!("bad squash {v:?}"))?),
                _ => {
                    let slot = FRAME_KEYS
                        .iter()
                        .position(|key| *key == k)
                        .ok_or(format!("unknown key {k:?}"))?;
                    frame[slot] = Some(v.parse().map_err(|_| format!("bad {k} {v:?}"))?);
                }
            }
        }
        let spec = NetworkSpec {
            hidden_layers: hidden.ok_or("missing hidden")?,
            activation: activation.ok_or("missing activation")?,
            output_squash: squash.ok_or("missing squash")?,
        };
        let get = |i: usize| frame[i].ok_or(format!("missing {}", FRAME_KEYS[i]));
        let frame = Frame {
            x_min: get(0)?,
            x_max: get(1)?,
            t_min: get(2)?,
            t_max: get(3)?,
            rho_scale: get(4)?,
        };
        let params = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| format!("bad value {l:?}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if params.len() != spec.param_count() {
            return Err(format!(
                "{} parameters for an architecture needing {}",
                params.len(),
                spec.param_count()
            ));
        }
        Ok(Estimator {
            spec,
            frame,
            params: ParamVector(params),
        })
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fr = &self.frame;
        writeln!(
            f,
            "mlp {} x_min={} x_max={} t_min={} t_max={} rho_scale={}",
            self.spec.descriptor(),
            fr.x_min,
            fr.x_max,
            fr.t_min,
            fr.t_max,
            fr.rho_scale
        )?;
        for v in self.params.iter() {
            writeln!(f, "{v:.16e}")?;
        }
        Ok(())
    }
}
