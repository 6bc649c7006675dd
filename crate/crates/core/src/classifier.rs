//! Per-point traffic-characteristics classifier.
//!
//! Each observation becomes a fixed-length feature vector: its normalized
//! position and time, its density, and statistics of the observation window it
//! belongs to (mean and max density, and the sign of the density change towards
//! its nearest neighbour in time). A small softmax perceptron maps features to
//! one of the corridor's known `(v_f, rho_m)` classes; a segment's class is the
//! majority vote of its points.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corridor::CorridorSpec;
use crate::error::{Error, Result};
use crate::training::{Adam, ObservationSet};

pub const FEATURE_DIM: usize = 6;

/// A known combination of free-flow speed and jam density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicClass {
    pub class_id: usize,
    pub v_f: f64,
    pub rho_m: f64,
}

/// Distinct `(v_f, rho_m)` pairs in corridor order, numbered from 1.
pub fn corridor_classes(corridor: &CorridorSpec) -> Vec<CharacteristicClass> {
    let mut classes: Vec<CharacteristicClass> = Vec::new();
    for seg in &corridor.segments {
        if !classes.iter().any(|c| c.v_f == seg.v_f && c.rho_m == seg.rho_m) {
            classes.push(CharacteristicClass {
                class_id: classes.len() + 1,
                v_f: seg.v_f,
                rho_m: seg.rho_m,
            });
        }
    }
    classes
}

/// Class id of every segment, in segment order.
pub fn segment_labels(corridor: &CorridorSpec, classes: &[CharacteristicClass]) -> Vec<usize> {
    corridor
        .segments
        .iter()
        .map(|seg| {
            classes
                .iter()
                .find(|c| c.v_f == seg.v_f && c.rho_m == seg.rho_m)
                .map(|c| c.class_id)
                .expect("every segment has a class")
        })
        .collect()
}

/// Coordinate extents used to normalize position and time features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureDomain {
    pub length: f64,
    pub horizon: f64,
}

impl FeatureDomain {
    pub fn of(corridor: &CorridorSpec) -> Self {
        FeatureDomain {
            length: corridor.length,
            horizon: corridor.horizon,
        }
    }
}

/// One feature vector per observation; the whole set is one window.
pub fn build_classifier_features(
    obs: &ObservationSet,
    domain: &FeatureDomain,
) -> Vec<[f64; FEATURE_DIM]> {
    if obs.is_empty() {
        return Vec::new();
    }
    let n = obs.len() as f64;
    let mean = obs.points.iter().map(|p| p.rho).sum::<f64>() / n;
    let max = obs.points.iter().map(|p| p.rho).fold(f64::MIN, f64::max);
    obs.points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let neighbour = obs
                .points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .min_by(|a, b| {
                    let da = (a.1.t - p.t).abs();
                    let db = (b.1.t - p.t).abs();
                    da.total_cmp(&db).then(a.0.cmp(&b.0))
                });
            let trend = match neighbour {
                Some((_, q)) if q.t != p.t => ((q.rho - p.rho) / (q.t - p.t)).signum() * f64::from(q.rho != p.rho),
                _ => 0.0,
            };
            [
                2.0 * p.x / domain.length - 1.0,
                2.0 * p.t / domain.horizon - 1.0,
                p.rho,
                mean,
                max,
                trend,
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Fraction of each labeled set held out for accuracy reporting.
    pub holdout_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden_layers: vec![16, 16],
            learning_rate: 3e-3,
            iterations: 1500,
            holdout_fraction: 0.2,
        }
    }
}

/// Trained softmax perceptron plus the feature standardization it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub hidden_layers: Vec<usize>,
    pub params: Vec<f64>,
    pub feature_mean: [f64; FEATURE_DIM],
    pub feature_scale: [f64; FEATURE_DIM],
    pub classes: Vec<CharacteristicClass>,
    pub domain: FeatureDomain,
    /// Per-point accuracy on the held-out points; `None` if nothing was held out.
    pub holdout_accuracy: Option<f64>,
}

fn layer_dims(hidden: &[usize], n_classes: usize) -> Vec<(usize, usize)> {
    let mut dims = Vec::new();
    let mut fan_in = FEATURE_DIM;
    for &w in hidden {
        dims.push((fan_in, w));
        fan_in = w;
    }
    dims.push((fan_in, n_classes));
    dims
}

/// `(weights (out, in), biases)` views into a flat parameter slice.
fn views<'a>(params: &'a [f64], dims: &[(usize, usize)]) -> Vec<(ArrayView2<'a, f64>, &'a [f64])> {
    let mut off = 0;
    dims.iter()
        .map(|&(i, o)| {
            let w = ArrayView2::from_shape((o, i), &params[off..off + i * o]).unwrap();
            off += i * o;
            let b = &params[off..off + o];
            off += o;
            (w, b)
        })
        .collect()
}

/// Hidden activations of every layer (input first) and output probabilities.
fn forward(params: &[f64], dims: &[(usize, usize)], x: Array2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
    let vs = views(params, dims);
    let mut acts = vec![x];
    for (l, (w, b)) in vs.iter().enumerate() {
        let mut a = acts[l].dot(&w.t());
        for mut row in a.rows_mut() {
            row.iter_mut().zip(b.iter()).for_each(|(v, bb)| *v += bb);
        }
        if l + 1 < vs.len() {
            a.mapv_inplace(f64::tanh);
            acts.push(a);
        } else {
            for mut row in a.rows_mut() {
                let m = row.iter().copied().fold(f64::MIN, f64::max);
                row.mapv_inplace(|v| (v - m).exp());
                let s = row.sum();
                row.mapv_inplace(|v| v / s);
            }
            return (acts, a);
        }
    }
    unreachable!("network has an output layer")
}

impl ClassifierModel {
    fn dims(&self) -> Vec<(usize, usize)> {
        layer_dims(&self.hidden_layers, self.classes.len())
    }

    fn standardize(&self, feats: &[[f64; FEATURE_DIM]]) -> Array2<f64> {
        standardize(feats, &self.feature_mean, &self.feature_scale)
    }

    /// Class probabilities for each feature vector (rows sum to one).
    pub fn predict_proba(&self, feats: &[[f64; FEATURE_DIM]]) -> Array2<f64> {
        forward(&self.params, &self.dims(), self.standardize(feats)).1
    }

    /// Most probable class id per feature vector; ties go to the lower id.
    pub fn predict(&self, feats: &[[f64; FEATURE_DIM]]) -> Vec<usize> {
        let proba = self.predict_proba(feats);
        proba
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (i, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = i;
                    }
                }
                self.classes[best].class_id
            })
            .collect()
    }

    pub fn class(&self, class_id: usize) -> Option<&CharacteristicClass> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let widths: Vec<String> = self.hidden_layers.iter().map(|w| w.to_string()).collect();
        writeln!(
            out,
            "classifier hidden={} length={} horizon={}",
            widths.join("-"),
            self.domain.length,
            self.domain.horizon
        )
        .unwrap();
        for c in &self.classes {
            writeln!(out, "class {} {} {}", c.class_id, c.v_f, c.rho_m).unwrap();
        }
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
        writeln!(out, "mean {}", join(&self.feature_mean)).unwrap();
        writeln!(out, "scale {}", join(&self.feature_scale)).unwrap();
        match self.holdout_accuracy {
            Some(a) => writeln!(out, "holdout_accuracy {a:.16e}").unwrap(),
            None => writeln!(out, "holdout_accuracy none").unwrap(),
        }
        for p in &self.params {
            writeln!(out, "{p:.16e}").unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ClassifierModel> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|d| Error::format(path, d))
    }

    fn parse(text: &str) -> std::result::Result<ClassifierModel, String> {
        let mut lines = text.lines().peekable();
        let header = lines.next().ok_or("empty classifier file")?;
        let mut hidden = Vec::new();
        let mut domain = FeatureDomain {
            length: f64::NAN,
            horizon: f64::NAN,
        };
        for tok in header.split_whitespace().skip(1) {
            let (k, v) = tok.split_once('=').ok_or(format!("bad token {tok:?}"))?;
            match k {
                "hidden" if !v.is_empty() => {
                    hidden = v
                        .split('-')
                        .map(|w| w.parse().map_err(|_| format!("bad width {w:?}")))
                        .collect::<std::result::Result<_, _>>()?
                }
                "hidden" => {}
                "length" => domain.length = v.parse().map_err(|_| "bad length")?,
                "horizon" => domain.horizon = v.parse().map_err(|_| "bad horizon")?,
                _ => return Err(format!("unknown key {k:?}")),
            }
        }
        let mut classes = Vec::new();
        let mut mean = None;
        let mut scale = None;
        let mut holdout = None;
        let parse_vec = |s: &str| -> std::result::Result<[f64; FEATURE_DIM], String> {
            let v: Vec<f64> = s
                .split(',')
                .map(|x| x.parse::<f64>().map_err(|_| format!("bad number {x:?}")))
                .collect::<std::result::Result<_, _>>()?;
            v.try_into().map_err(|_| "wrong feature count".to_string())
        };
        while let Some(line) = lines.peek() {
            let line = *line;
            if let Some(rest) = line.strip_prefix("class ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(format!("bad class line {line:?}"));
                }
                classes.push(CharacteristicClass {
                    class_id: f[0].parse().map_err(|_| "bad class id")?,
                    v_f: f[1].parse().map_err(|_| "bad v_f")?,
                    rho_m: f[2].parse().map_err(|_| "bad rho_m")?,
                });
            } else if let Some(rest) = line.strip_prefix("mean ") {
                mean = Some(parse_vec(rest)?);
            } else if let Some(rest) = line.strip_prefix("scale ") {
                scale = Some(parse_vec(rest)?);
            } else if let Some(rest) = line.strip_prefix("holdout_accuracy ") {
                holdout = match rest {
                    "none" => None,
                    v => Some(v.parse().map_err(|_| "bad accuracy")?),
                };
            } else {
                break;
            }
            lines.next();
        }
        let params: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| format!("bad value {l:?}")))
            .collect::<std::result::Result<_, _>>()?;
        let model = ClassifierModel {
            hidden_layers: hidden,
            params,
            feature_mean: mean.ok_or("missing mean")?,
            feature_scale: scale.ok_or("missing scale")?,
            classes,
            domain,
            holdout_accuracy: holdout,
        };
        let expected: usize = model.dims().iter().map(|(i, o)| i * o + o).sum();
        if model.params.len() != expected || model.classes.len() < 2 {
            return Err(format!(
                "{} parameters / {} classes do not match the architecture",
                model.params.len(),
                model.classes.len()
            ));
        }
        Ok(model)
    }
}

fn standardize(
    feats: &[[f64; FEATURE_DIM]],
    mean: &[f64; FEATURE_DIM],
    scale: &[f64; FEATURE_DIM],
) -> Array2<f64> {
    let mut x = Array2::zeros((feats.len(), FEATURE_DIM));
    for (mut row, f) in x.rows_mut().into_iter().zip(feats) {
        for d in 0..FEATURE_DIM {
            row[d] = (f[d] - mean[d]) / scale[d];
        }
    }
    x
}

/// A labeled observation window.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub observations: ObservationSet,
    pub class_id: usize,
}

/// Trains the softmax classifier by full-batch cross-entropy with Adam.
pub fn train_classifier(
    labeled: &[LabeledSet],
    classes: &[CharacteristicClass],
    domain: &FeatureDomain,
    config: &ClassifierConfig,
    seed: u64,
) -> Result<ClassifierModel> {
    let present: BTreeMap<usize, usize> = labeled
        .iter()
        .filter(|s| !s.observations.is_empty())
        .fold(BTreeMap::new(), |mut m, s| {
            *m.entry(s.class_id).or_insert(0) += s.observations.len();
            m
        });
    if present.len() < 2 || classes.len() < 2 {
        return Err(Error::InvalidConfig(
            "classifier needs at least two classes with labeled points".into(),
        ));
    }
    for id in present.keys() {
        if !classes.iter().any(|c| c.class_id == *id) {
            return Err(Error::InvalidConfig(format!("label {id} is not a known class")));
        }
    }

    let mut train_feats = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_feats = Vec::new();
    let mut test_labels = Vec::new();
    for set in labeled {
        let feats = build_classifier_features(&set.observations, domain);
        let label = classes.iter().position(|c| c.class_id == set.class_id).unwrap();
        let n = feats.len();
        let held = if n >= 2 {
            (((n as f64) * config.holdout_fraction).round() as usize).min(n - 1)
        } else {
            0
        };
        for (i, f) in feats.into_iter().enumerate() {
            if i < n - held {
                train_feats.push(f);
                train_labels.push(label);
            } else {
                test_feats.push(f);
                test_labels.push(label);
            }
        }
    }

    let mut mean = [0.0; FEATURE_DIM];
    let mut scale = [0.0; FEATURE_DIM];
    let n = train_feats.len() as f64;
    for d in 0..FEATURE_DIM {
        mean[d] = train_feats.iter().map(|f| f[d]).sum::<f64>() / n;
        let var = train_feats.iter().map(|f| (f[d] - mean[d]).powi(2)).sum::<f64>() / n;
        scale[d] = if var > 1e-24 { var.sqrt() } else { 1.0 };
    }

    let dims = layer_dims(&config.hidden_layers, classes.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for &(fan_in, fan_out) in &dims {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }

    let x = standardize(&train_feats, &mean, &scale);
    let mut onehot = Array2::<f64>::zeros((train_labels.len(), classes.len()));
    for (i, &l) in train_labels.iter().enumerate() {
        onehot[[i, l]] = 1.0;
    }
    let mut adam = Adam::new(params.len(), config.learning_rate);
    for it in 0..config.iterations {
        let (loss, grad) = cross_entropy_gradient(&params, &dims, &x, &onehot);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                detail: format!("classifier cross-entropy {loss}"),
            });
        }
        adam.step(&mut params, &grad);
    }

    let mut model = ClassifierModel {
        hidden_layers: config.hidden_layers.clone(),
        params,
        feature_mean: mean,
        feature_scale: scale,
        classes: classes.to_vec(),
        domain: *domain,
        holdout_accuracy: None,
    };
    if !test_feats.is_empty() {
        let predicted = model.predict(&test_feats);
        let correct = predicted
            .iter()
            .zip(&test_labels)
            .filter(|(p, &l)| **p == classes[l].class_id)
            .count();
        model.holdout_accuracy = Some(correct as f64 / test_feats.len() as f64);
    }
    Ok(model)
}

/// Mean cross-entropy and its gradient.
fn cross_entropy_gradient(
    params: &[f64],
    dims: &[(usize, usize)],
    x: &Array2<f64>,
    onehot: &Array2<f64>,
) -> (f64, Vec<f64>) {
    let n = x.nrows() as f64;
    let (acts, proba) = forward(params, dims, x.clone());
    let loss = -(onehot * &proba.mapv(|p| p.max(1e-300).ln())).sum() / n;
    let vs = views(params, dims);
    let mut grad = vec![0.0; params.len()];
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |off, (i, o)| {
            let s = *off;
            *off += i * o + o;
            Some(s)
        })
        .collect();
    let mut delta = (&proba - onehot) / n;
    for l in (0..vs.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        let gw = delta.t().dot(&acts[l]);
        let gb: Array1<f64> = delta.sum_axis(Axis(0));
        let off = offsets[l];
        grad[off..off + fan_in * fan_out].copy_from_slice(gw.as_slice().unwrap());
        grad[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]
            .copy_from_slice(gb.as_slice().unwrap());
        if l > 0 {
            let back = delta.dot(&vs[l].0);
            delta = back * &acts[l].mapv(|z| 1.0 - z * z);
        }
    }
    (loss, grad)
}

/// Per-point votes, then the majority; ties go to the lowest class id.
pub fn majority_vote(votes: &[usize]) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &v in votes {
        *counts.entry(v).or_insert(0) += 1;
    }
    // BTreeMap iterates ascending, so the first maximum has the lowest id
    counts
        .iter()
        .fold(None::<(usize, usize)>, |best, (&id, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((id, c)),
        })
        .map(|(id, _)| id)
}

/// Class of one segment's observation window.
pub fn classify_segment(model: &ClassifierModel, obs: &ObservationSet) -> Result<usize> {
    if obs.is_empty() {
        return Err(Error::Empty("observations to classify".into()));
    }
    let feats = build_classifier_features(obs, &model.domain);
    Ok(majority_vote(&model.predict(&feats)).expect("nonempty votes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::Observation;

    fn obs(points: &[(f64, f64, f64)], seg: usize) -> ObservationSet {
        ObservationSet {
            points: points
                .iter()
                .map(|&(x, t, rho)| Observation { x, t, rho })
                .collect(),
            segment_id: Some(seg),
        }
    }

    #[test]
    fn classes_of_the_test_bed_are_distinct() {
        let c = CorridorSpec::five_segment();
        let classes = corridor_classes(&c);
        assert_eq!(classes.len(), 5);
        assert_eq!(segment_labels(&c, &classes), vec![1, 2, 3, 4, 5]);
        let mut c2 = c.clone();
        c2.segments[4].v_f = 40.0;
        let classes = corridor_classes(&c2);
        assert_eq!(classes.len(), 4);
        assert_eq!(segment_labels(&c2, &classes), vec![1, 2, 3, 4, 1]);
    }

    #[test]
    fn feature_vectors() {
        let domain = FeatureDomain {
            length: 5000.0,
            horizon: 50.0,
        };
        let single = obs(&[(2500.0, 25.0, 0.04)], 3);
        let f = build_classifier_features(&single, &domain);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0], [0.0, 0.0, 0.04, 0.04, 0.04, 0.0]);

        let set = obs(&[(0.0, 0.0, 0.02), (500.0, 10.0, 0.05), (1000.0, 12.0, 0.01)], 1);
        let f = build_classifier_features(&set, &domain);
        assert_eq!(f, build_classifier_features(&set, &domain));
        let mean = (0.02 + 0.05 + 0.01) / 3.0;
        assert!((f[0][3] - mean).abs() < 1e-15);
        assert_eq!(f[0][4], 0.05);
        // neighbours in time: 0 -> 1 (rising), 1 -> 2 (falling), 2 -> 1 (rising backwards)
        assert_eq!([f[0][5], f[1][5], f[2][5]], [1.0, -1.0, -1.0]);
    }

    #[test]
    fn votes() {
        assert_eq!(majority_vote(&[3, 3, 3]), Some(3));
        let mut tie = vec![1; 25];
        tie.extend(vec![2; 25]);
        assert_eq!(majority_vote(&tie), Some(1));
        assert_eq!(majority_vote(&[2, 5, 5, 2, 5]), Some(5));
        assert_eq!(majority_vote(&[]), None);
    }

    fn toy_sets() -> (Vec<LabeledSet>, Vec<CharacteristicClass>) {
        let classes = vec![
            CharacteristicClass { class_id: 1, v_f: 40.0, rho_m: 0.1 },
            CharacteristicClass { class_id: 2, v_f: 30.0, rho_m: 0.15 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sets = Vec::new();
        for (seg, lo, rho) in [(1, 0.0, 0.02), (2, 1000.0, 0.09)] {
            let pts: Vec<(f64, f64, f64)> = (0..40)
                .map(|_| (lo + rng.gen_range(0.0..1000.0), rng.gen_range(0.0..50.0), rho * rng.gen_range(0.8..1.2)))
                .collect();
            sets.push(LabeledSet { observations: obs(&pts, seg), class_id: seg });
        }
        (sets, classes)
    }

    #[test]
    fn separable_toy_problem() {
        let (sets, classes) = toy_sets();
        let domain = FeatureDomain { length: 2000.0, horizon: 50.0 };
        let cfg = ClassifierConfig { iterations: 300, ..Default::default() };
        let model = train_classifier(&sets, &classes, &domain, &cfg, 1).unwrap();
        assert_eq!(model.holdout_accuracy, Some(1.0));
        assert_eq!(classify_segment(&model, &sets[0].observations).unwrap(), 1);
        assert_eq!(classify_segment(&model, &sets[1].observations).unwrap(), 2);
        let p = model.predict_proba(&build_classifier_features(&sets[0].observations, &domain));
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        let again = train_classifier(&sets, &classes, &domain, &cfg, 1).unwrap();
        assert_eq!(again, model);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.txt");
        model.save(&path).unwrap();
        assert_eq!(ClassifierModel::load(&path).unwrap(), model);
    }

    #[test]
    fn single_class_is_rejected() {
        let (mut sets, classes) = toy_sets();
        sets[1].class_id = 1;
        let domain = FeatureDomain { length: 2000.0, horizon: 50.0 };
        assert!(train_classifier(&sets, &classes, &domain, &ClassifierConfig::default(), 0).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_differences() {
        let dims = layer_dims(&[4], 3);
        let count: usize = dims.iter().map(|(i, o)| i * o + o).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params: Vec<f64> = (0..count).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let x = Array2::from_shape_fn((5, FEATURE_DIM), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6);
        let mut onehot = Array2::zeros((5, 3));
        for i in 0..5 {
            onehot[[i, i % 3]] = 1.0;
        }
        let (_, grad) = cross_entropy_gradient(&params, &dims, &x, &onehot);
        let h = 1e-6;
        for i in 0..count {
            let mut p = params.clone();
            p[i] += h;
            let up = cross_entropy_gradient(&p, &dims, &x, &onehot).0;
            p[i] -= 2.0 * h;
            let down = cross_entropy_gradient(&p, &dims, &x, &onehot).0;
            let num = (up - down) / (2.0 * h);
            let denom = grad[i].abs().max(num.abs()).max(1e-12);
            assert!((grad[i] - num).abs() / denom < 1e-6 || (grad[i] - num).abs() < 1e-10);
        }
    }
}
