//! Config-driven end-to-end experiments: simulate, train, evaluate, render.
//!
//! Every stage reads its inputs from and writes its outputs to one directory,
//! so stages can be rerun independently.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    interp_baseline, non_ensemble_from_teachers, train_non_ensemble_pidl, train_plain_dl, NonEnsemble,
    PlainDl,
};
use crate::classifier::{
    corridor_classes, segment_labels, train_classifier, ClassifierConfig, FeatureDomain, LabeledSet,
};
use crate::corridor::CorridorSpec;
use crate::ensemble::{assemble_student, train_teacher_ensemble, EnsembleConfig, Student, TeacherEnsemble};
use crate::error::{Error, Result};
use crate::field::DensityField;
use crate::nn::NetworkSpec;
use crate::render::write_pgm;
use crate::solver::{simulate_corridor, SolverConfig};
use crate::training::{relative_l2, relative_l2_error, sample_segment_observations, ObservationSet, PidlConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ensemble,
    NonEnsemble,
    PlainDl,
    Interpolation,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Ensemble,
        Method::NonEnsemble,
        Method::PlainDl,
        Method::Interpolation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ensemble => "ensemble",
            Method::NonEnsemble => "non-ensemble",
            Method::PlainDl => "plain-dl",
            Method::Interpolation => "interpolation",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Parses a comma-separated method list, keeping canonical order.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut methods = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Method::from_str)
        .collect::<Result<Vec<_>>>()?;
    methods.sort();
    methods.dedup();
    if methods.is_empty() {
        return Err(Error::InvalidConfig("empty method list".into()));
    }
    Ok(methods)
}

fn five_segment() -> CorridorSpec {
    CorridorSpec::five_segment()
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads for independent training jobs; 0 uses every core.
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Labeled points per segment for the classifier.
    pub classifier_points: usize,
    /// Observed points per segment for the estimators.
    pub observation_points: usize,
    pub methods: Vec<Method>,
    /// Train one data-only network per segment instead of one overall.
    pub dl_per_segment: bool,
    pub training: PidlConfig,
    pub network: NetworkSpec,
    pub ensemble: EnsembleConfig,
    pub classifier: ClassifierConfig,
    pub solver: SolverConfig,
    #[serde(default = "five_segment")]
    pub corridor: CorridorSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            workers: 0,
            output_dir: PathBuf::from("out"),
            classifier_points: 50,
            observation_points: 250,
            methods: all_methods(),
            dl_per_segment: false,
            training: PidlConfig::default(),
            network: NetworkSpec::default(),
            ensemble: EnsembleConfig::default(),
            classifier: ClassifierConfig::default(),
            solver: SolverConfig::default(),
            corridor: CorridorSpec::five_segment(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// The config as a document [`ExperimentConfig::from_toml`] reads back
    /// unchanged.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.corridor.validate()?;
        self.solver.validate()?;
        self.training.validate()?;
        self.network.validate()?;
        self.ensemble.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods requested".into()));
        }
        if self.observation_points == 0 {
            return Err(Error::InvalidConfig("observation budget must be positive".into()));
        }
        if self.methods.contains(&Method::Ensemble) && self.classifier_points < 2 {
            return Err(Error::InvalidConfig(
                "the ensemble needs at least two classifier points per segment".into(),
            ));
        }
        Ok(())
    }

    pub fn points_per_segment(&self) -> usize {
        self.classifier_points + self.observation_points
    }

    fn sampling_seed(&self, segment: usize) -> u64 {
        self.seed.wrapping_mul(1000).wrapping_add(segment as u64)
    }

    fn job_seed(&self, slot: u64) -> u64 {
        self.seed.wrapping_mul(1_000_000).wrapping_add(slot)
    }

    /// First member seed of every teacher ensemble.
    fn member_seed(&self) -> u64 {
        self.job_seed(0)
    }
}

/// Deferred checkpoint write for one method.
type ModelWriter = Box<dyn FnOnce(&Path) -> Result<()>>;

/// Runs `f` on a pool of `workers` threads (0 = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// File names inside an output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout {
            root: root.to_path_buf(),
        }
    }
    pub fn truth(&self) -> PathBuf {
        self.root.join("truth.csv")
    }
    pub fn samples(&self) -> PathBuf {
        self.root.join("samples")
    }
    pub fn classifier_samples(&self, segment: usize) -> PathBuf {
        self.samples().join(format!("classifier_segment{segment}.csv"))
    }
    pub fn observation_samples(&self, segment: usize) -> PathBuf {
        self.samples().join(format!("observations_segment{segment}.csv"))
    }
    pub fn model(&self, method: Method) -> PathBuf {
        self.root.join("models").join(method.name())
    }
    pub fn estimate(&self, method: Method) -> PathBuf {
        self.root.join("estimates").join(format!("{}.csv", method.name()))
    }
    pub fn report_txt(&self) -> PathBuf {
        self.root.join("report.txt")
    }
    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }
    pub fn config_echo(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.txt")
    }
    pub fn training_log(&self) -> PathBuf {
        self.root.join("training.txt")
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub path: PathBuf,
    pub nx: usize,
    pub nt: usize,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub relative_mass_drift: f64,
    pub max_density: f64,
    pub secs: f64,
}

impl fmt::Display for SimulateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "wrote {} ({} x {} = {} points)", self.path.display(), self.nx, self.nt, self.nx * self.nt)?;
        writeln!(
            f,
            "mass {:.9e} -> {:.9e} veh, relative drift {:.3e}",
            self.initial_mass, self.final_mass, self.relative_mass_drift
        )?;
        write!(f, "max density {:.6} veh/m, {:.2} s", self.max_density, self.secs)
    }
}

/// Solves the configured corridor and writes the ground-truth field.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulateSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let sim = simulate_corridor(&cfg.corridor, &cfg.solver)?;
    let layout = Layout::new(&cfg.output_dir);
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    sim.field.write_csv(&layout.truth())?;
    Ok(SimulateSummary {
        path: layout.truth(),
        nx: sim.field.nx,
        nt: sim.field.nt,
        initial_mass: sim.mass[0],
        final_mass: *sim.mass.last().unwrap(),
        relative_mass_drift: sim.relative_mass_drift(),
        max_density: sim.field.max_value(),
        secs: start.elapsed().as_secs_f64(),
    })
}

/// The per-segment samples: a labeled window and an observation set each.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub classifier: Vec<ObservationSet>,
    pub observations: Vec<ObservationSet>,
}

impl Samples {
    pub fn total(&self) -> usize {
        self.classifier.iter().chain(&self.observations).map(|s| s.len()).sum()
    }

    pub fn pooled_observations(&self) -> ObservationSet {
        ObservationSet {
            points: self.observations.iter().flat_map(|o| o.points.iter().copied()).collect(),
            segment_id: None,
        }
    }

    fn save(&self, layout: &Layout) -> Result<()> {
        for (i, (c, o)) in self.classifier.iter().zip(&self.observations).enumerate() {
            write(&layout.classifier_samples(i + 1), &c.to_csv())?;
            write(&layout.observation_samples(i + 1), &o.to_csv())?;
        }
        Ok(())
    }

    fn load(layout: &Layout, segments: usize) -> Result<Samples> {
        let read = |path: PathBuf| -> Result<ObservationSet> {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            ObservationSet::from_csv(&text).map_err(|d| Error::format(&path, d))
        };
        Ok(Samples {
            classifier: (1..=segments).map(|s| read(layout.classifier_samples(s))).collect::<Result<_>>()?,
            observations: (1..=segments).map(|s| read(layout.observation_samples(s))).collect::<Result<_>>()?,
        })
    }
}

/// Draws distinct grid points per segment; the first `classifier_points`
/// label the classifier and the rest are observations.
pub fn draw_samples(field: &DensityField, cfg: &ExperimentConfig) -> Result<Samples> {
    let mut samples = Samples {
        classifier: Vec::new(),
        observations: Vec::new(),
    };
    for s in 1..=cfg.corridor.segments.len() {
        let all = sample_segment_observations(field, &cfg.corridor, s, cfg.points_per_segment(), cfg.sampling_seed(s))?;
        let cut = cfg.classifier_points;
        samples.classifier.push(ObservationSet {
            points: all.points[..cut].to_vec(),
            segment_id: all.segment_id,
        });
        samples.observations.push(ObservationSet {
            points: all.points[cut..].to_vec(),
            segment_id: all.segment_id,
        });
    }
    Ok(samples)
}

/// Outcome of one trained component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentStatus {
    pub component: String,
    pub outcome: std::result::Result<(), String>,
    pub secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub samples: usize,
    pub grid_points: usize,
    pub classifier_accuracy: Option<f64>,
    pub components: Vec<ComponentStatus>,
}

impl TrainSummary {
    pub fn training_fraction(&self) -> f64 {
        self.samples as f64 / self.grid_points as f64
    }

    pub fn all_ok(&self) -> bool {
        self.components.iter().all(|c| c.outcome.is_ok())
    }
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} training points of {} ({:.4}%)",
            self.samples,
            self.grid_points,
            100.0 * self.training_fraction()
        )?;
        if let Some(a) = self.classifier_accuracy {
            writeln!(f, "classifier held-out accuracy {a:.3}")?;
        }
        for c in &self.components {
            match &c.outcome {
                Ok(()) => writeln!(f, "{:<14} ok      {:8.1} s", c.component, c.secs)?,
                Err(e) => writeln!(f, "{:<14} FAILED  {:8.1} s  {e}", c.component, c.secs)?,
            }
        }
        Ok(())
    }
}

fn timed<T>(name: &str, f: impl FnOnce() -> Result<T>) -> (Option<T>, ComponentStatus) {
    let start = Instant::now();
    let r = f();
    let secs = start.elapsed().as_secs_f64();
    match r {
        Ok(v) => (
            Some(v),
            ComponentStatus {
                component: name.to_string(),
                outcome: Ok(()),
                secs,
            },
        ),
        Err(e) => (
            None,
            ComponentStatus {
                component: name.to_string(),
                outcome: Err(e.to_string()),
                secs,
            },
        ),
    }
}

fn read_truth(layout: &Layout) -> Result<DensityField> {
    let path = layout.truth();
    if !path.exists() {
        return Err(Error::InvalidConfig(format!(
            "ground-truth field {} not found; run `simulate` first",
            path.display()
        )));
    }
    DensityField::read_csv(&path)
}

/// Samples the ground truth and trains every configured method.
///
/// A component that fails is recorded and skipped; the others still train.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    let truth = read_truth(&layout)?;
    let samples = draw_samples(&truth, cfg)?;
    samples.save(&layout)?;

    let corridor = &cfg.corridor;
    let wants = |m: Method| cfg.methods.contains(&m);
    let mut components = Vec::new();
    let mut classifier_accuracy = None;

    let (teachers, classifier) = if wants(Method::Ensemble) {
        let classes = corridor_classes(corridor);
        let labels = segment_labels(corridor, &classes);
        let labeled: Vec<LabeledSet> = samples
            .classifier
            .iter()
            .zip(&labels)
            .map(|(o, &class_id)| LabeledSet {
                observations: o.clone(),
                class_id,
            })
            .collect();
        let (clf, status) = timed("classifier", || {
            train_classifier(&labeled, &classes, &FeatureDomain::of(corridor), &cfg.classifier, cfg.job_seed(998))
        });
        components.push(status);
        classifier_accuracy = clf.as_ref().and_then(|c| c.holdout_accuracy);
        let (teachers, status) = timed("teachers", || {
            corridor
                .segments
                .par_iter()
                .zip(&samples.observations)
                .map(|(seg, obs)| {
                    train_teacher_ensemble(
                        obs,
                        seg,
                        corridor.horizon,
                        &cfg.ensemble,
                        &cfg.training,
                        &cfg.network,
                        cfg.member_seed(),
                    )
                })
                .collect::<Result<Vec<_>>>()
        });
        components.push(status);
        (teachers, clf)
    } else {
        (None, None)
    };

    let mut outputs: Vec<(Method, ModelWriter)> = Vec::new();

    if wants(Method::Ensemble) {
        let (student, status) = timed("student", || {
            let clf = classifier.ok_or_else(|| Error::InvalidConfig("classifier unavailable".into()))?;
            let teachers = teachers
                .clone()
                .ok_or_else(|| Error::InvalidConfig("teacher ensembles unavailable".into()))?;
            let mut by_class: BTreeMap<usize, TeacherEnsemble> = BTreeMap::new();
            let labels = segment_labels(corridor, &clf.classes);
            for (ens, class_id) in teachers.into_iter().zip(labels) {
                by_class.entry(class_id).or_insert(ens);
            }
            assemble_student(corridor, clf, by_class, &samples.observations)
        });
        components.push(status);
        if let Some(s) = student {
            outputs.push((Method::Ensemble, Box::new(move |dir: &Path| s.save(dir))));
        }
    }

    if wants(Method::NonEnsemble) {
        let (model, status) = timed("non-ensemble", || match &teachers {
            // member `seed` of each teacher ensemble is exactly the K = 1 model
            Some(t) => non_ensemble_from_teachers(corridor, t),
            None => train_non_ensemble_pidl(
                corridor,
                &samples.observations,
                &cfg.ensemble,
                &cfg.training,
                &cfg.network,
                cfg.member_seed(),
            ),
        });
        components.push(status);
        if let Some(m) = model {
            outputs.push((Method::NonEnsemble, Box::new(move |dir: &Path| m.save(dir))));
        }
    }

    if wants(Method::PlainDl) {
        let (model, status) = timed("plain-dl", || {
            train_plain_dl(
                corridor,
                &samples.observations,
                &cfg.training,
                &cfg.network,
                cfg.job_seed(999),
                cfg.dl_per_segment,
            )
        });
        components.push(status);
        if let Some(m) = model {
            outputs.push((Method::PlainDl, Box::new(move |dir: &Path| m.save(dir))));
        }
    }

    // interpolation has no trained state beyond the stored samples
    for (method, save) in outputs {
        let dir = layout.model(method);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        save(&dir)?;
    }

    let summary = TrainSummary {
        samples: samples.total(),
        grid_points: truth.len(),
        classifier_accuracy,
        components,
    };
    write(&layout.training_log(), &summary.to_string())?;
    Ok(summary)
}

/// Accuracy of one method on the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub relative_l2: f64,
    /// Per segment; `None` where that segment's truth is identically zero.
    pub segment_relative_l2: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub results: Vec<MethodResult>,
    pub training_points: usize,
    pub grid_points: usize,
    pub classifier_accuracy: Option<f64>,
    /// `(segment, routed class, true class)` for the ensemble.
    pub routing: Vec<(usize, usize, usize)>,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }

    pub fn training_fraction(&self) -> f64 {
        self.training_points as f64 / self.grid_points as f64
    }

    /// Machine-readable report at full precision; contains nothing
    /// run-dependent beyond the results themselves.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,method,segment,value\n");
        let num = |v: f64| format!("{v:.17e}");
        out.push_str(&format!("training_points,all,all,{}\n", self.training_points));
        out.push_str(&format!("grid_points,all,all,{}\n", self.grid_points));
        out.push_str(&format!("training_fraction,all,all,{}\n", num(self.training_fraction())));
        for r in &self.results {
            out.push_str(&format!("relative_l2,{},all,{}\n", r.method, num(r.relative_l2)));
            for (i, v) in r.segment_relative_l2.iter().enumerate() {
                let v = v.map(num).unwrap_or_else(|| "undefined".into());
                out.push_str(&format!("relative_l2,{},{},{v}\n", r.method, i + 1));
            }
        }
        if let Some(a) = self.classifier_accuracy {
            out.push_str(&format!("classifier_accuracy,ensemble,all,{}\n", num(a)));
        }
        for (seg, routed, truth) in &self.routing {
            out.push_str(&format!("routed_class,ensemble,{seg},{routed}\n"));
            out.push_str(&format!("true_class,ensemble,{seg},{truth}\n"));
        }
        out
    }

    /// Human-readable report with three significant digits.
    pub fn to_text(&self, timings: Option<&str>) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "training points: {} of {} grid points ({:.3}%)\n\n",
            self.training_points,
            self.grid_points,
            100.0 * self.training_fraction()
        ));
        out.push_str(&format!("{:<16}{:>12}", "method", "rel. L2"));
        for i in 1..=self.config.corridor.segments.len() {
            out.push_str(&format!("{:>11}", format!("seg {i}")));
        }
        out.push('\n');
        for r in &self.results {
            out.push_str(&format!("{:<16}{:>12}", r.method.name(), sig3(r.relative_l2)));
            for v in &r.segment_relative_l2 {
                out.push_str(&format!("{:>11}", v.map(sig3).unwrap_or_else(|| "-".into())));
            }
            out.push('\n');
        }
        if let Some(a) = self.classifier_accuracy {
            out.push_str(&format!("\nclassifier held-out accuracy: {}\n", sig3(a)));
        }
        if !self.routing.is_empty() {
            let correct = self.routing.iter().filter(|r| r.1 == r.2).count();
            out.push_str(&format!("segment votes correct: {correct}/{}\n", self.routing.len()));
            for (seg, routed, truth) in &self.routing {
                out.push_str(&format!("  segment {seg}: routed to class {routed} (true class {truth})\n"));
            }
        }
        if let Some(t) = timings {
            out.push_str("\ntraining:\n");
            out.push_str(t);
        }
        out
    }
}

/// Three significant digits in scientific notation, e.g. `3.89e-2`.
pub fn sig3(v: f64) -> String {
    format!("{v:.2e}")
}

fn load_method_field(method: Method, cfg: &ExperimentConfig, layout: &Layout, truth: &DensityField) -> Result<(DensityField, Option<Student>)> {
    let dir = layout.model(method);
    let missing = || {
        Error::InvalidConfig(format!(
            "checkpoints for {method} not found in {}; run `train` first",
            dir.display()
        ))
    };
    match method {
        Method::Ensemble => {
            if !dir.exists() {
                return Err(missing());
            }
            let s = Student::load(&dir)?;
            Ok((s.field(truth.grid())?, Some(s)))
        }
        Method::NonEnsemble => {
            if !dir.exists() {
                return Err(missing());
            }
            Ok((NonEnsemble::load(&dir, &cfg.corridor)?.field(truth.grid())?, None))
        }
        Method::PlainDl => {
            if !dir.exists() {
                return Err(missing());
            }
            Ok((PlainDl::load(&dir, &cfg.corridor)?.field(truth.grid(), &cfg.corridor)?, None))
        }
        Method::Interpolation => {
            if !layout.samples().exists() {
                return Err(Error::InvalidConfig(format!(
                    "samples not found in {}; run `train` first",
                    layout.samples().display()
                )));
            }
            let samples = Samples::load(layout, cfg.corridor.segments.len())?;
            Ok((interp_baseline(&samples.pooled_observations(), truth.grid(), &cfg.corridor)?, None))
        }
    }
}

fn segment_errors(estimate: &DensityField, truth: &DensityField, corridor: &CorridorSpec) -> Result<Vec<Option<f64>>> {
    let mut est = vec![Vec::new(); corridor.segments.len()];
    let mut tru = vec![Vec::new(); corridor.segments.len()];
    for j in 0..truth.nx {
        let s = corridor.segment_index_at(truth.x(j))?;
        for k in 0..truth.nt {
            est[s].push(estimate.get(k, j));
            tru[s].push(truth.get(k, j));
        }
    }
    est.iter()
        .zip(&tru)
        .map(|(e, t)| match relative_l2(e, t) {
            Ok(v) => Ok(Some(v)),
            Err(Error::Empty(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Evaluates every requested method against the ground truth and writes the
/// report, estimates, config echo and manifest.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    let truth = read_truth(&layout)?;
    let samples = Samples::load(&layout, cfg.corridor.segments.len())?;
    let mut results = Vec::new();
    let mut estimates = Vec::new();
    let mut classifier_accuracy = None;
    let mut routing = Vec::new();
    for &method in &cfg.methods {
        let (field, student) = load_method_field(method, cfg, &layout, &truth)?;
        results.push(MethodResult {
            method,
            relative_l2: relative_l2_error(&field, &truth)?,
            segment_relative_l2: segment_errors(&field, &truth, &cfg.corridor)?,
        });
        if let Some(s) = student {
            classifier_accuracy = s.classifier.holdout_accuracy;
            let labels = segment_labels(&cfg.corridor, &s.classifier.classes);
            routing = s
                .routing
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (&r, t))| (i + 1, r, t))
                .collect();
        }
        estimates.push((method, field));
    }
    for (method, field) in &estimates {
        let path = layout.estimate(*method);
        fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&path, e))?;
        field.write_csv(&path)?;
    }
    let mut report = ExperimentReport {
        config: cfg.clone(),
        results,
        training_points: samples.total(),
        grid_points: truth.len(),
        classifier_accuracy,
        routing,
        files: Vec::new(),
    };
    let timings = fs::read_to_string(layout.training_log()).ok();
    write(&layout.report_csv(), &report.to_csv())?;
    write(&layout.report_txt(), &report.to_text(timings.as_deref()))?;
    write(&layout.config_echo(), &cfg.to_toml())?;
    report.files = list_files(&cfg.output_dir)?;
    let manifest: String = report
        .files
        .iter()
        .map(|p| format!("{}\n", p.display()))
        .chain(std::iter::once("manifest.txt\n".to_string()))
        .collect();
    write(&layout.manifest(), &manifest)?;
    report.files.push(PathBuf::from("manifest.txt"));
    report.files.sort();
    Ok(report)
}

/// Files under `root`, relative to it, sorted.
fn list_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name() != Some("manifest.txt".as_ref()) || dir != root {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Renders a field file as a grayscale image scaled to the corridor's largest
/// jam density.
pub fn cmd_render(field_file: &Path, out_image: &Path, corridor: &CorridorSpec) -> Result<PathBuf> {
    let field = DensityField::read_csv(field_file)?;
    write_pgm(&field, corridor.max_rho_m(), out_image)
}

/// Simulate, train, evaluate and render the truth in one go.
pub fn run_all(cfg: &ExperimentConfig) -> Result<(SimulateSummary, TrainSummary, ExperimentReport)> {
    let sim = cmd_simulate(cfg)?;
    let train = cmd_train(cfg)?;
    let layout = Layout::new(&cfg.output_dir);
    cmd_render(&layout.truth(), &cfg.output_dir.join("truth.pgm"), &cfg.corridor)?;
    let report = cmd_evaluate(cfg)?;
    Ok((sim, train, report))
}
