//! Teacher ensembles, per-segment routing and the assembled student.
//!
//! A teacher ensemble is `K` physics-informed estimators trained on the same
//! segment observations from different seeds and combined with weights
//! proportional to the inverse of their held-out loss. The student routes
//! every segment, through the characteristics classifier, to the ensemble of
//! the class the segment was voted into, and evaluates that ensemble in its own
//! coordinates after an affine map of the segment onto the teacher's segment.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{classify_segment, ClassifierModel};
use crate::corridor::{CorridorSpec, SegmentSpec};
use crate::error::{Error, Result};
use crate::field::{DensityField, Grid};
use crate::nn::{init_network, Estimator, NetworkSpec};
use crate::training::{
    data_cost, fit, relative_l2, sample_collocation, ObservationSet, PidlConfig, TrainReport,
};

/// Smallest validation loss used when forming inverse-loss weights.
pub const LOSS_FLOOR: f64 = 1e-12;

/// Seed offset for the single retry of a diverged member.
const RETRY_OFFSET: u64 = 1_000_003;
const COLLOCATION_STREAM: u64 = 0x00c0_11a7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    InverseLoss,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherMember {
    pub estimator: Estimator,
    pub seed: u64,
    pub validation_loss: f64,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherEnsemble {
    /// The segment whose observations trained the members.
    pub segment: SegmentSpec,
    pub members: Vec<TeacherMember>,
    pub weights: Vec<f64>,
}

/// Normalized weights from held-out losses.
pub fn ensemble_weights(losses: &[f64], weighting: Weighting) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::Empty("ensemble members".into()));
    }
    if let Some(l) = losses.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(Error::NonFinite(format!("validation loss {l}")));
    }
    let raw: Vec<f64> = match weighting {
        Weighting::Uniform => vec![1.0; losses.len()],
        Weighting::InverseLoss => losses.iter().map(|l| 1.0 / l.max(LOSS_FLOOR)).collect(),
    };
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

impl TeacherEnsemble {
    pub fn new(segment: SegmentSpec, mut members: Vec<TeacherMember>, weighting: Weighting) -> Result<Self> {
        members.sort_by_key(|m| m.seed);
        let losses: Vec<f64> = members.iter().map(|m| m.validation_loss).collect();
        let weights = ensemble_weights(&losses, weighting)?;
        Ok(TeacherEnsemble {
            segment,
            members,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member indices in ascending seed order, the fixed summation order.
    fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.members.len()).collect();
        idx.sort_by_key(|&i| self.members[i].seed);
        idx
    }

    pub fn predict(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.predict_batch(&[(x, t)])?[0])
    }

    /// Weighted sum of member estimates at points in this ensemble's own
    /// coordinates.
    pub fn predict_batch(&self, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; points.len()];
        for i in self.order() {
            let w = self.weights[i];
            let est = self.members[i].estimator.predict_batch(points)?;
            out.iter_mut().zip(est).for_each(|(o, e)| *o += w * e);
        }
        Ok(out)
    }
}

pub fn ensemble_predict(ensemble: &TeacherEnsemble, x: f64, t: f64) -> Result<f64> {
    ensemble.predict(x, t)
}

/// Ensemble training options beyond the per-member optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub members: usize,
    pub weighting: Weighting,
    /// Trailing fraction of the observations held out for member weights.
    pub validation_fraction: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            members: 5,
            weighting: Weighting::InverseLoss,
            validation_fraction: 0.2,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members == 0 {
            return Err(Error::InvalidConfig("an ensemble needs at least one member".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig(
                "validation fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

fn train_member(
    train: &ObservationSet,
    validation: &ObservationSet,
    seg: &SegmentSpec,
    horizon: f64,
    base: &PidlConfig,
    spec: &NetworkSpec,
    seed: u64,
) -> Result<TeacherMember> {
    let config = PidlConfig {
        seed,
        ..base.clone()
    };
    let colloc = sample_collocation(seg, horizon, config.n_collocation, seed ^ COLLOCATION_STREAM)?;
    let frame = config.frame_for(seg, horizon);
    let (params, report) = fit(init_network(spec, seed), spec, &frame, train, &colloc, Some(seg), &config)?;
    let estimator = Estimator {
        spec: spec.clone(),
        frame,
        params,
    };
    let held = if validation.is_empty() { train } else { validation };
    let validation_loss = data_cost(&estimator.params, spec, &frame, held)?;
    if !validation_loss.is_finite() {
        return Err(Error::Diverged {
            iteration: config.iterations,
            detail: format!("validation loss {validation_loss}"),
        });
    }
    Ok(TeacherMember {
        estimator,
        seed,
        validation_loss,
        report,
    })
}

/// Trains members `seed, seed + 1, ..` on one segment's observations.
///
/// Each member sees the same leading part of `observations`; the trailing
/// `validation_fraction` is held out to weight it. A member that diverges is
/// retried once from a different seed before the whole ensemble fails.
pub fn train_teacher_ensemble(
    observations: &ObservationSet,
    segment: &SegmentSpec,
    horizon: f64,
    ensemble: &EnsembleConfig,
    base: &PidlConfig,
    spec: &NetworkSpec,
    seed: u64,
) -> Result<TeacherEnsemble> {
    ensemble.validate()?;
    base.validate()?;
    if observations.is_empty() {
        return Err(Error::Empty("teacher observations".into()));
    }
    let (train, validation) = observations.split_holdout(ensemble.validation_fraction);
    let members = (0..ensemble.members as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed + k;
            match train_member(&train, &validation, segment, horizon, base, spec, s) {
                Err(Error::Diverged { .. }) => {
                    train_member(&train, &validation, segment, horizon, base, spec, s + RETRY_OFFSET)
                }
                other => other,
            }
        })
        .collect::<Result<Vec<_>>>()?;
    TeacherEnsemble::new(segment.clone(), members, ensemble.weighting)
}

/// Evaluates a per-segment predictor over a whole grid.
///
/// `predict(segment_index, points)` receives the grid points owned by each
/// segment (the last segment also owns the corridor end).
pub fn assemble_field<F>(grid: Grid, corridor: &CorridorSpec, predict: F) -> Result<DensityField>
where
    F: Fn(usize, &[(f64, f64)]) -> Result<Vec<f64>> + Sync,
{
    let mut columns: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for j in 0..grid.nx {
        columns.entry(corridor.segment_at(grid.x(j))?.index).or_default().push(j);
    }
    let parts = columns
        .par_iter()
        .map(|(&seg, cols)| {
            let pts: Vec<(f64, f64)> = (0..grid.nt)
                .flat_map(|k| cols.iter().map(move |&j| (grid.x(j), grid.t(k))))
                .collect();
            let values = predict(seg, &pts)?;
            if values.len() != pts.len() {
                return Err(Error::GridMismatch(format!(
                    "{} estimates for {} points",
                    values.len(),
                    pts.len()
                )));
            }
            Ok((cols, values))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![0.0; grid.len()];
    for (cols, est) in parts {
        let mut it = est.into_iter();
        for k in 0..grid.nt {
            for &j in cols {
                values[k * grid.nx + j] = it.next().unwrap();
            }
        }
    }
    DensityField::new(grid, values)
}

/// Maps `x` on `from` affinely onto `to`.
fn map_onto(x: f64, from: &SegmentSpec, to: &SegmentSpec) -> f64 {
    to.x_start + (x - from.x_start) * to.length() / from.length()
}

/// The routed estimator for a whole corridor.
#[derive(Debug, Clone, PartialEq)]
pub struct Student {
    pub corridor: CorridorSpec,
    pub classifier: ClassifierModel,
    /// Teacher ensemble per class id.
    pub ensembles: BTreeMap<usize, TeacherEnsemble>,
    /// Class id chosen for each segment, in segment order.
    pub routing: Vec<usize>,
}

/// Classifies every segment from its observations and checks that an
/// ensemble exists for each chosen class.
pub fn assemble_student(
    corridor: &CorridorSpec,
    classifier: ClassifierModel,
    ensembles: BTreeMap<usize, TeacherEnsemble>,
    segment_observations: &[ObservationSet],
) -> Result<Student> {
    if segment_observations.len() != corridor.segments.len() {
        return Err(Error::InvalidConfig(format!(
            "{} observation sets for {} segments",
            segment_observations.len(),
            corridor.segments.len()
        )));
    }
    let routing = segment_observations
        .iter()
        .map(|obs| classify_segment(&classifier, obs))
        .collect::<Result<Vec<_>>>()?;
    let student = Student {
        corridor: corridor.clone(),
        classifier,
        ensembles,
        routing,
    };
    student.check()?;
    Ok(student)
}

impl Student {
    fn check(&self) -> Result<()> {
        if self.routing.len() != self.corridor.segments.len() {
            return Err(Error::InvalidConfig("routing does not cover the corridor".into()));
        }
        for (i, class_id) in self.routing.iter().enumerate() {
            if !self.ensembles.contains_key(class_id) {
                return Err(Error::MissingEnsemble {
                    segment: i + 1,
                    class_id: *class_id,
                });
            }
        }
        Ok(())
    }

    pub fn ensemble_for(&self, segment_index: usize) -> Result<&TeacherEnsemble> {
        let class_id = *self
            .routing
            .get(segment_index.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidConfig(format!("no segment {segment_index}")))?;
        self.ensembles.get(&class_id).ok_or(Error::MissingEnsemble {
            segment: segment_index,
            class_id,
        })
    }

    /// Estimates at points that all lie on `segment_index`.
    pub fn predict_segment(&self, segment_index: usize, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        let seg = self
            .corridor
            .segment(segment_index)
            .ok_or_else(|| Error::InvalidConfig(format!("no segment {segment_index}")))?;
        let ens = self.ensemble_for(segment_index)?;
        let local: Vec<(f64, f64)> = points
            .iter()
            .map(|&(x, t)| (map_onto(x, seg, &ens.segment), t))
            .collect();
        ens.predict_batch(&local)
    }

    pub fn predict(&self, x: f64, t: f64) -> Result<f64> {
        let seg = self.corridor.segment_at(x)?.index;
        Ok(self.predict_segment(seg, &[(x, t)])?[0])
    }

    pub fn field(&self, grid: Grid) -> Result<DensityField> {
        assemble_field(grid, &self.corridor, |s, pts| self.predict_segment(s, pts))
    }

    /// Relative L2 error against observed densities anywhere on the corridor.
    pub fn loss(&self, observations: &ObservationSet) -> Result<f64> {
        let mut est = Vec::with_capacity(observations.len());
        for p in &observations.points {
            est.push(self.predict(p.x, p.t)?);
        }
        let truth: Vec<f64> = observations.points.iter().map(|p| p.rho).collect();
        relative_l2(&est, &truth)
    }

    /// Writes the classifier, every member and a manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.classifier.save(&dir.join("classifier.txt"))?;
        let mut manifest = StudentManifest {
            corridor: self.corridor.clone(),
            routing: self.routing.clone(),
            ensembles: Vec::new(),
        };
        for (&class_id, ens) in &self.ensembles {
            let mut members = Vec::new();
            for (m, w) in ens.members.iter().zip(&ens.weights) {
                let file = format!("class{class_id}_seed{}.txt", m.seed);
                m.estimator.save(&dir.join(&file))?;
                members.push(MemberEntry {
                    file,
                    seed: m.seed,
                    weight: *w,
                    validation_loss: m.validation_loss,
                });
            }
            manifest.ensembles.push(EnsembleEntry {
                class_id,
                segment: ens.segment.index,
                members,
            });
        }
        let path = dir.join("manifest.toml");
        let text = toml::to_string(&manifest).map_err(|e| Error::format(&path, e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Student> {
        let path = dir.join("manifest.toml");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: StudentManifest =
            toml::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        manifest.corridor.validate()?;
        let classifier = ClassifierModel::load(&dir.join("classifier.txt"))?;
        let mut ensembles = BTreeMap::new();
        for entry in manifest.ensembles {
            let segment = manifest
                .corridor
                .segment(entry.segment)
                .ok_or_else(|| Error::format(&path, format!("no segment {}", entry.segment)))?
                .clone();
            let mut members = Vec::new();
            let mut weights = Vec::new();
            for m in entry.members {
                members.push(TeacherMember {
                    estimator: Estimator::load(&dir.join(&m.file))?,
                    seed: m.seed,
                    validation_loss: m.validation_loss,
                    report: TrainReport::default(),
                });
                weights.push(m.weight);
            }
            ensembles.insert(
                entry.class_id,
                TeacherEnsemble {
                    segment,
                    members,
                    weights,
                },
            );
        }
        let student = Student {
            corridor: manifest.corridor,
            classifier,
            ensembles,
            routing: manifest.routing,
        };
        student.check()?;
        Ok(student)
    }
}

pub fn student_predict(student: &Student, x: f64, t: f64) -> Result<f64> {
    student.predict(x, t)
}

pub fn student_field(student: &Student, grid: Grid) -> Result<DensityField> {
    student.field(grid)
}

pub fn student_loss(student: &Student, observations: &ObservationSet) -> Result<f64> {
    student.loss(observations)
}

#[derive(Debug, Serialize, Deserialize)]
struct StudentManifest {
    corridor: CorridorSpec,
    routing: Vec<usize>,
    ensembles: Vec<EnsembleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleEntry {
    class_id: usize,
    segment: usize,
    members: Vec<MemberEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MemberEntry {
    file: String,
    seed: u64,
    weight: f64,
    validation_loss: f64,
}
