//! Godunov finite-volume solver for the LWR conservation law on a corridor of
//! Greenshields segments.
//!
//! Interfaces use the demand/supply form of the Godunov flux, which also
//! couples cells governed by different fundamental diagrams. The explicit
//! update always runs at or below the CFL limit; output times are hit exactly
//! by splitting each output interval into equal substeps.

use serde::{Deserialize, Serialize};

use crate::corridor::{invert_flux_free, CorridorSpec, SegmentSpec};
use crate::error::{Error, Result};
use crate::field::{DensityField, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Finite-volume cell width, meters.
    pub cell_width: f64,
    /// Fraction of the CFL-limited step actually used.
    pub cfl_safety: f64,
    pub output_dx: f64,
    pub output_dt: f64,
    /// Overrides the first segment's `f_up` as the external inflow.
    pub inflow: Option<f64>,
    /// Overrides the last segment's `f_down` as the external outflow.
    pub outflow: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cell_width: 2.0,
            cfl_safety: 0.9,
            output_dx: 2.0,
            output_dt: 0.1,
            inflow: None,
            outflow: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.cell_width) || !positive(self.output_dx) || !positive(self.output_dt) {
            return Err(Error::InvalidConfig(
                "solver resolutions must be positive".into(),
            ));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        for q in [self.inflow, self.outflow].into_iter().flatten() {
            if !(q >= 0.0 && q.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "boundary flows must be nonnegative, got {q}"
                )));
            }
        }
        Ok(())
    }
}

/// Flow a cell can send downstream.
pub fn demand(rho: f64, seg: &SegmentSpec) -> Result<f64> {
    let rho = seg.check_density(rho)?;
    Ok(demand_raw(rho, seg.v_f, seg.rho_m))
}

/// Flow a cell can accept from upstream.
pub fn supply(rho: f64, seg: &SegmentSpec) -> Result<f64> {
    let rho = seg.check_density(rho)?;
    Ok(supply_raw(rho, seg.v_f, seg.rho_m))
}

/// `min(demand(left), supply(right))`.
pub fn godunov_flux(
    rho_left: f64,
    seg_left: &SegmentSpec,
    rho_right: f64,
    seg_right: &SegmentSpec,
) -> Result<f64> {
    Ok(demand(rho_left, seg_left)?.min(supply(rho_right, seg_right)?))
}

/// Largest stable step for cells of width `cell_width`.
pub fn cfl_max_dt(corridor: &CorridorSpec, cell_width: f64) -> f64 {
    cell_width / corridor.max_v_f()
}

#[inline]
fn flux_raw(rho: f64, v_f: f64, rho_m: f64) -> f64 {
    rho * v_f * (1.0 - rho / rho_m)
}

#[inline]
fn demand_raw(rho: f64, v_f: f64, rho_m: f64) -> f64 {
    if rho <= 0.5 * rho_m {
        flux_raw(rho, v_f, rho_m)
    } else {
        0.25 * v_f * rho_m
    }
}

#[inline]
fn supply_raw(rho: f64, v_f: f64, rho_m: f64) -> f64 {
    if rho <= 0.5 * rho_m {
        0.25 * v_f * rho_m
    } else {
        flux_raw(rho, v_f, rho_m)
    }
}

/// Piecewise-constant initial density built from each segment's upstream flow:
/// the free-flow density carrying `f_up`, or the critical density where `f_up`
/// exceeds capacity.
pub fn table_initial_density(corridor: &CorridorSpec, cell_width: f64) -> Result<Vec<f64>> {
    let levels: Vec<f64> = corridor
        .segments
        .iter()
        .map(|seg| {
            if seg.f_up <= seg.capacity() {
                invert_flux_free(seg.f_up, seg)
            } else {
                Ok(seg.critical_density())
            }
        })
        .collect::<Result<_>>()?;
    let layout = CellLayout::new(corridor, cell_width)?;
    Ok(layout.segment_of.iter().map(|&s| levels[s]).collect())
}

/// Cell-to-segment ownership for a uniform mesh.
struct CellLayout {
    n_cells: usize,
    segment_of: Vec<usize>,
}

impl CellLayout {
    fn new(corridor: &CorridorSpec, cell_width: f64) -> Result<Self> {
        let n = whole_multiple(corridor.length, cell_width).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "corridor length {} is not a multiple of cell width {cell_width}",
                corridor.length
            ))
        })?;
        for seg in &corridor.segments {
            if whole_multiple(seg.x_start, cell_width).is_none() && seg.x_start != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "segment {} boundary {} does not fall on a cell edge",
                    seg.index, seg.x_start
                )));
            }
        }
        let segment_of = (0..n)
            .map(|i| corridor.segment_index_at((i as f64 + 0.5) * cell_width))
            .collect::<Result<_>>()?;
        Ok(CellLayout {
            n_cells: n,
            segment_of,
        })
    }
}

fn whole_multiple(value: f64, unit: f64) -> Option<usize> {
    let r = value / unit;
    let n = r.round();
    ((r - n).abs() <= 1e-9 * r.abs().max(1.0) && n >= 1.0).then_some(n as usize)
}

/// Ground truth plus the exact cell mass at every output time.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub field: DensityField,
    /// Vehicles in the corridor at each output row.
    pub mass: Vec<f64>,
    /// Internal step actually used, seconds.
    pub dt: f64,
    pub steps: usize,
}

impl Simulation {
    /// Largest `|m(t) - m(0)| / m(0)`; zero when the road starts empty.
    pub fn relative_mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        if m0 == 0.0 {
            return self.mass.iter().map(|m| m.abs()).fold(0.0, f64::max);
        }
        self.mass
            .iter()
            .map(|m| ((m - m0) / m0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn simulate(
    corridor: &CorridorSpec,
    initial_density: &[f64],
    config: &SolverConfig,
) -> Result<DensityField> {
    simulate_with_diagnostics(corridor, initial_density, config).map(|s| s.field)
}

pub fn simulate_with_diagnostics(
    corridor: &CorridorSpec,
    initial_density: &[f64],
    config: &SolverConfig,
) -> Result<Simulation> {
    corridor.validate()?;
    config.validate()?;
    let h = config.cell_width;
    let layout = CellLayout::new(corridor, h)?;
    let n = layout.n_cells;
    if initial_density.len() != n {
        return Err(Error::GridMismatch(format!(
            "{} initial densities for {n} cells",
            initial_density.len()
        )));
    }
    let sample_every = whole_multiple(config.output_dx, h).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "output_dx {} is not a multiple of cell width {h}",
            config.output_dx
        ))
    })?;
    let n_intervals = whole_multiple(corridor.horizon, config.output_dt).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "horizon {} is not a multiple of output_dt {}",
            corridor.horizon, config.output_dt
        ))
    })?;

    let v_f: Vec<f64> = layout
        .segment_of
        .iter()
        .map(|&s| corridor.segments[s].v_f)
        .collect();
    let rho_m: Vec<f64> = layout
        .segment_of
        .iter()
        .map(|&s| corridor.segments[s].rho_m)
        .collect();

    let mut rho = Vec::with_capacity(n);
    for (i, &r) in initial_density.iter().enumerate() {
        rho.push(corridor.segments[layout.segment_of[i]].check_density(r)?);
    }

    let first = &corridor.segments[0];
    let last = corridor.segments.last().unwrap();
    let q_in = config.inflow.unwrap_or(first.f_up);
    let q_out = config.outflow.unwrap_or(last.f_down);

    let dt_limit = config.cfl_safety * cfl_max_dt(corridor, h);
    let substeps = (config.output_dt / dt_limit).ceil().max(1.0) as usize;
    let dt = config.output_dt / substeps as f64;
    let ratio = dt / h;

    let nx = whole_multiple(corridor.length, config.output_dx).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "corridor length {} is not a multiple of output_dx {}",
            corridor.length, config.output_dx
        ))
    })? + 1;
    let sample_cells: Vec<usize> = (0..nx).map(|j| (j * sample_every).min(n - 1)).collect();
    let nt = n_intervals + 1;

    let mut values = Vec::with_capacity(nx * nt);
    let mut mass = Vec::with_capacity(nt);
    let record = |rho: &[f64], values: &mut Vec<f64>, mass: &mut Vec<f64>| {
        values.extend(sample_cells.iter().map(|&c| rho[c]));
        mass.push(rho.iter().sum::<f64>() * h);
    };
    record(&rho, &mut values, &mut mass);

    let mut flux = vec![0.0; n + 1];
    let mut steps = 0;
    for k in 1..nt {
        for _ in 0..substeps {
            flux[0] = q_in.min(supply_raw(rho[0], v_f[0], rho_m[0]));
            for i in 1..n {
                let d = demand_raw(rho[i - 1], v_f[i - 1], rho_m[i - 1]);
                let s = supply_raw(rho[i], v_f[i], rho_m[i]);
                flux[i] = d.min(s);
            }
            flux[n] = q_out.min(demand_raw(rho[n - 1], v_f[n - 1], rho_m[n - 1]));
            for i in 0..n {
                rho[i] -= ratio * (flux[i + 1] - flux[i]);
            }
            steps += 1;
        }
        if let Some(i) = rho.iter().position(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!(
                "density in cell {i} became {} at t = {}",
                rho[i],
                k as f64 * config.output_dt
            )));
        }
        record(&rho, &mut values, &mut mass);
    }

    let field = DensityField::new(
        Grid {
            nx,
            nt,
            dx: config.output_dx,
            dt: config.output_dt,
            x0: 0.0,
            t0: 0.0,
        },
        values,
    )?;
    Ok(Simulation {
        field,
        mass,
        dt,
        steps,
    })
}

/// Ground truth for a corridor from its own boundary flows.
pub fn simulate_corridor(corridor: &CorridorSpec, config: &SolverConfig) -> Result<Simulation> {
    let initial = table_initial_density(corridor, config.cell_width)?;
    simulate_with_diagnostics(corridor, &initial, config)
}

pub fn total_mass(field: &DensityField, time_index: usize) -> f64 {
    field.total_mass(time_index)
}
