//! Comparison estimators: single physics-informed networks per segment, a
//! purely data-driven network, and nearest-neighbour interpolation.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::corridor::CorridorSpec;
use crate::ensemble::{
    assemble_field, train_teacher_ensemble, EnsembleConfig, TeacherEnsemble, TeacherMember, Weighting,
};
use crate::error::{Error, Result};
use crate::field::{DensityField, Grid};
use crate::nn::{init_network, Estimator, Frame, NetworkSpec};
use crate::training::{fit, fit_with, scaled_data_cost_gradient, CollocationSet, ObservationSet, PidlConfig};

/// One physics-informed estimator per segment, routed by true segment.
#[derive(Debug, Clone, PartialEq)]
pub struct NonEnsemble {
    pub corridor: CorridorSpec,
    /// Single-member ensembles in segment order.
    pub segments: Vec<TeacherEnsemble>,
}

impl NonEnsemble {
    pub fn predict_segment(&self, segment_index: usize, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        self.segments
            .get(segment_index.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidConfig(format!("no segment {segment_index}")))?
            .predict_batch(points)
    }

    pub fn field(&self, grid: Grid) -> Result<DensityField> {
        assemble_field(grid, &self.corridor, |s, pts| self.predict_segment(s, pts))
    }

    /// One checkpoint per segment, `segment{i}.txt`, with seeds and held-out
    /// losses listed in `seeds.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = String::new();
        for ens in &self.segments {
            let m = &ens.members[0];
            m.estimator.save(&dir.join(format!("segment{}.txt", ens.segment.index)))?;
            index.push_str(&format!("{} {} {:.16e}\n", ens.segment.index, m.seed, m.validation_loss));
        }
        let path = dir.join("seeds.txt");
        fs::write(&path, index).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, corridor: &CorridorSpec) -> Result<NonEnsemble> {
        let path = dir.join("seeds.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut segments = Vec::new();
        for (line, seg) in text.lines().zip(&corridor.segments) {
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = (f.len() == 3)
                .then(|| Some((f[0].parse::<usize>().ok()?, f[1].parse::<u64>().ok()?, f[2].parse::<f64>().ok()?)))
                .flatten();
            let Some((index, seed, loss)) = parsed.filter(|p| p.0 == seg.index) else {
                return Err(Error::format(&path, format!("bad line {line:?}")));
            };
            let estimator = Estimator::load(&dir.join(format!("segment{index}.txt")))?;
            let member = TeacherMember {
                estimator,
                seed,
                validation_loss: loss,
                report: Default::default(),
            };
            segments.push(TeacherEnsemble::new(seg.clone(), vec![member], Weighting::Uniform)?);
        }
        if segments.len() != corridor.segments.len() {
            return Err(Error::format(&path, "one line per segment expected"));
        }
        Ok(NonEnsemble {
            corridor: corridor.clone(),
            segments,
        })
    }
}

/// Trains a one-member ensemble on each segment's observations.
///
/// This is the ensemble procedure with `K = 1`, so it consumes observations,
/// held-out split and seeds exactly as member `seed` of a larger ensemble does.
pub fn train_non_ensemble_pidl(
    corridor: &CorridorSpec,
    segment_observations: &[ObservationSet],
    ensemble: &EnsembleConfig,
    base: &PidlConfig,
    spec: &NetworkSpec,
    seed: u64,
) -> Result<NonEnsemble> {
    let single = EnsembleConfig {
        members: 1,
        weighting: Weighting::Uniform,
        ..ensemble.clone()
    };
    let segments = corridor
        .segments
        .par_iter()
        .zip(segment_observations)
        .map(|(seg, obs)| train_teacher_ensemble(obs, seg, corridor.horizon, &single, base, spec, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(NonEnsemble {
        corridor: corridor.clone(),
        segments,
    })
}

/// Extracts the lowest-seed member of each segment's ensemble as a
/// non-ensemble estimator, which is what [`train_non_ensemble_pidl`] with the
/// same base seed would train.
pub fn non_ensemble_from_teachers(corridor: &CorridorSpec, teachers: &[TeacherEnsemble]) -> Result<NonEnsemble> {
    if teachers.len() != corridor.segments.len() {
        return Err(Error::InvalidConfig(format!(
            "{} ensembles for {} segments",
            teachers.len(),
            corridor.segments.len()
        )));
    }
    let segments = teachers
        .iter()
        .map(|ens| {
            let first = ens
                .members
                .iter()
                .min_by_key(|m| m.seed)
                .ok_or_else(|| Error::Empty("ensemble members".into()))?;
            TeacherEnsemble::new(ens.segment.clone(), vec![first.clone()], Weighting::Uniform)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NonEnsemble {
        corridor: corridor.clone(),
        segments,
    })
}

/// A network trained on observations alone (`mu = 0`).
#[derive(Debug, Clone, PartialEq)]
pub enum PlainDl {
    /// One network over the whole corridor. Its squash has unit scale and the
    /// output is multiplied by the jam density of the segment at `x`.
    Global { estimator: Estimator, rho_m: Vec<f64> },
    /// One network per segment, in segment order.
    PerSegment(Vec<Estimator>),
}

impl PlainDl {
    pub fn predict_segment(&self, segment_index: usize, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        let missing = || Error::InvalidConfig(format!("no segment {segment_index}"));
        match self {
            PlainDl::Global { estimator, rho_m } => {
                let scale = *rho_m.get(segment_index.wrapping_sub(1)).ok_or_else(missing)?;
                Ok(estimator.predict_batch(points)?.into_iter().map(|u| scale * u).collect())
            }
            PlainDl::PerSegment(es) => es
                .get(segment_index.wrapping_sub(1))
                .ok_or_else(missing)?
                .predict_batch(points),
        }
    }

    pub fn field(&self, grid: Grid, corridor: &CorridorSpec) -> Result<DensityField> {
        assemble_field(grid, corridor, |s, pts| self.predict_segment(s, pts))
    }

    /// Writes `global.txt`, or `segment{i}.txt` for each segment.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        match self {
            PlainDl::Global { estimator, .. } => estimator.save(&dir.join("global.txt")),
            PlainDl::PerSegment(es) => es
                .iter()
                .enumerate()
                .try_for_each(|(i, e)| e.save(&dir.join(format!("segment{}.txt", i + 1)))),
        }
    }

    pub fn load(dir: &Path, corridor: &CorridorSpec) -> Result<PlainDl> {
        let global = dir.join("global.txt");
        if global.exists() {
            let estimator = Estimator::load(&global)?;
            let rho_m = output_scales(corridor, &estimator.spec);
            return Ok(PlainDl::Global { estimator, rho_m });
        }
        (1..=corridor.segments.len())
            .map(|i| Estimator::load(&dir.join(format!("segment{i}.txt"))))
            .collect::<Result<Vec<_>>>()
            .map(PlainDl::PerSegment)
    }
}

/// Per-segment output scale of a global network: the jam density when the
/// squash is on, 1 otherwise.
fn output_scales(corridor: &CorridorSpec, spec: &NetworkSpec) -> Vec<f64> {
    corridor
        .segments
        .iter()
        .map(|s| if spec.output_squash { s.rho_m } else { 1.0 })
        .collect()
}

/// Trains the data-only baseline on the pooled per-segment observations.
///
/// The global network normalizes inputs over the whole corridor and scales
/// its squashed output by the jam density of the segment owning each point;
/// per-segment networks use the segment frame, as the physics-informed
/// estimators do. Nothing is held out.
pub fn train_plain_dl(
    corridor: &CorridorSpec,
    segment_observations: &[ObservationSet],
    base: &PidlConfig,
    spec: &NetworkSpec,
    seed: u64,
    per_segment: bool,
) -> Result<PlainDl> {
    let config = PidlConfig {
        mu: 0.0,
        seed,
        ..base.clone()
    };
    let train = segment_observations;
    if per_segment {
        let empty = CollocationSet::default();
        let nets = corridor
            .segments
            .par_iter()
            .zip(train)
            .map(|(seg, obs)| {
                let frame = config.frame_for(seg, corridor.horizon);
                let (params, _) = fit(init_network(spec, seed), spec, &frame, obs, &empty, None, &config)?;
                Ok(Estimator {
                    spec: spec.clone(),
                    frame,
                    params,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(PlainDl::PerSegment(nets));
    }
    config.validate()?;
    spec.validate()?;
    let pooled = ObservationSet {
        points: train.iter().flat_map(|o| o.points.iter().copied()).collect(),
        segment_id: None,
    };
    let rho_m = output_scales(corridor, spec);
    let scales: Vec<f64> = pooled
        .points
        .iter()
        .map(|p| corridor.segment_index_at(p.x).map(|i| rho_m[i]))
        .collect::<Result<_>>()?;
    let frame = Frame::new((0.0, corridor.length), (0.0, corridor.horizon), 1.0);
    let (params, _) = fit_with(init_network(spec, seed), &config, |p| {
        scaled_data_cost_gradient(p, spec, &frame, &pooled, &scales)
    })?;
    Ok(PlainDl::Global {
        estimator: Estimator {
            spec: spec.clone(),
            frame,
            params,
        },
        rho_m,
    })
}

/// Nearest-observation estimate at every grid point.
///
/// Distances are measured after scaling `x` by the corridor length and `t` by
/// the horizon; ties go to the earlier observation.
pub fn interp_baseline(observations: &ObservationSet, grid: Grid, corridor: &CorridorSpec) -> Result<DensityField> {
    if observations.is_empty() {
        return Err(Error::Empty("observations to interpolate".into()));
    }
    let (sx, st) = (1.0 / corridor.length, 1.0 / corridor.horizon);
    // observations sorted by scaled x so the search can stop early
    let mut sorted: Vec<(f64, f64, f64, usize)> = observations
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.x * sx, p.t * st, p.rho, i))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.3.cmp(&b.3)));
    let xs: Vec<f64> = sorted.iter().map(|p| p.0).collect();

    let nearest = |x: f64, t: f64| -> f64 {
        let start = xs.partition_point(|&v| v < x);
        let mut best = (f64::INFINITY, usize::MAX, 0.0);
        let consider = |best: &mut (f64, usize, f64), p: &(f64, f64, f64, usize)| {
            let d = (p.0 - x).powi(2) + (p.1 - t).powi(2);
            if d < best.0 || (d == best.0 && p.3 < best.1) {
                *best = (d, p.3, p.2);
            }
        };
        for p in &sorted[start..] {
            if (p.0 - x).powi(2) > best.0 {
                break;
            }
            consider(&mut best, p);
        }
        for p in sorted[..start].iter().rev() {
            if (p.0 - x).powi(2) > best.0 {
                break;
            }
            consider(&mut best, p);
        }
        best.2
    };

    let values: Vec<f64> = (0..grid.nt)
        .into_par_iter()
        .flat_map_iter(|k| {
            let t = grid.t(k) * st;
            (0..grid.nx).map(move |j| (k, j, t))
        })
        .map(|(_, j, t)| nearest(grid.x(j) * sx, t))
        .collect();
    DensityField::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::Observation;

    #[test]
    fn interpolation_reproduces_observed_points() {
        let c = CorridorSpec::five_segment();
        let grid = Grid {
            nx: 11,
            nt: 6,
            dx: 500.0,
            dt: 10.0,
            x0: 0.0,
            t0: 0.0,
        };
        let obs = ObservationSet {
            points: vec![
                Observation { x: 0.0, t: 0.0, rho: 0.01 },
                Observation { x: 5000.0, t: 50.0, rho: 0.09 },
                Observation { x: 2500.0, t: 20.0, rho: 0.04 },
            ],
            segment_id: None,
        };
        let f = interp_baseline(&obs, grid, &c).unwrap();
        assert_eq!(f.get(0, 0), 0.01);
        assert_eq!(f.get(5, 10), 0.09);
        assert_eq!(f.get(2, 5), 0.04);
        // brute force agreement everywhere
        for k in 0..grid.nt {
            for j in 0..grid.nx {
                let (x, t) = (grid.x(j) / 5000.0, grid.t(k) / 50.0);
                let best = obs
                    .points
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        let da = (a.1.x / 5000.0 - x).powi(2) + (a.1.t / 50.0 - t).powi(2);
                        let db = (b.1.x / 5000.0 - x).powi(2) + (b.1.t / 50.0 - t).powi(2);
                        da.total_cmp(&db).then(a.0.cmp(&b.0))
                    })
                    .unwrap();
                assert_eq!(f.get(k, j), best.1.rho);
            }
        }
    }

    fn pooled_points(c: &CorridorSpec) -> Vec<ObservationSet> {
        c.segments
            .iter()
            .map(|s| ObservationSet {
                points: (0..8)
                    .map(|i| Observation {
                        x: s.x_start + 110.0 * i as f64,
                        t: 6.0 * i as f64,
                        rho: s.rho_m * (0.1 + 0.1 * i as f64),
                    })
                    .collect(),
                segment_id: Some(s.index),
            })
            .collect()
    }

    #[test]
    fn uniform_scale_cost_matches_plain_data_cost() {
        let spec = NetworkSpec {
            hidden_layers: vec![5],
            ..Default::default()
        };
        let params = init_network(&spec, 9);
        let obs = &pooled_points(&CorridorSpec::five_segment())[1];
        let unit = Frame::new((0.0, 5000.0), (0.0, 50.0), 1.0);
        let scaled = Frame { rho_scale: 0.15, ..unit };
        let a = scaled_data_cost_gradient(&params, &spec, &unit, obs, &vec![0.15; obs.len()]).unwrap();
        let b = crate::training::pidl_cost_gradient(&params, &spec, &scaled, obs, &CollocationSet::default(), None, 0.0)
            .unwrap();
        assert!((a.j - b.j).abs() <= 1e-15 * b.j);
        for (x, y) in a.gradient.iter().zip(b.gradient.iter()) {
            assert!((x - y).abs() <= 1e-13 * y.abs().max(1e-12), "{x} {y}");
        }
    }

    #[test]
    fn scaled_cost_gradient_matches_differences() {
        let spec = NetworkSpec {
            hidden_layers: vec![4, 4],
            ..Default::default()
        };
        let params = init_network(&spec, 2);
        let obs = &pooled_points(&CorridorSpec::five_segment())[3];
        let scales: Vec<f64> = (0..obs.len()).map(|i| 0.1 + 0.01 * i as f64).collect();
        let frame = Frame::new((0.0, 5000.0), (0.0, 50.0), 1.0);
        let eval = scaled_data_cost_gradient(&params, &spec, &frame, obs, &scales).unwrap();
        let e = crate::nn::finite_diff_check(
            &params,
            &eval.gradient,
            |p| scaled_data_cost_gradient(p, &spec, &frame, obs, &scales).unwrap().j,
            1e-5,
        );
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn global_network_respects_each_segment_jam_density() {
        let c = CorridorSpec::five_segment();
        let base = PidlConfig {
            iterations: 50,
            learning_rate: 5e-2,
            ..Default::default()
        };
        let spec = NetworkSpec {
            hidden_layers: vec![6],
            ..Default::default()
        };
        let dl = train_plain_dl(&c, &pooled_points(&c), &base, &spec, 4, false).unwrap();
        let grid = Grid {
            nx: 51,
            nt: 11,
            dx: 100.0,
            dt: 5.0,
            x0: 0.0,
            t0: 0.0,
        };
        let f = dl.field(grid, &c).unwrap();
        for k in 0..grid.nt {
            for j in 0..grid.nx {
                let rho_m = c.segment_at(grid.x(j)).unwrap().rho_m;
                let v = f.get(k, j);
                assert!(v > 0.0 && v < rho_m, "{v} at x = {}", grid.x(j));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        dl.save(dir.path()).unwrap();
        assert_eq!(PlainDl::load(dir.path(), &c).unwrap(), dl);
    }
}
