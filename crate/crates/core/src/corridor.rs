//! Greenshields traffic physics on a corridor of homogeneous segments.
//!
//! Every function here is pure. Densities are validated against the owning
//! segment's `[0, rho_m]`; violations of at most [`DENSITY_SLACK`] are clamped
//! back into range, anything larger is an error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerated floating-point overshoot of a density bound.
pub const DENSITY_SLACK: f64 = 1e-9;

/// One homogeneous stretch of road with its own fundamental diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    /// 1-based id.
    pub index: usize,
    pub x_start: f64,
    pub x_end: f64,
    /// Free-flow speed, m/s.
    pub v_f: f64,
    /// Jam density, veh/m.
    pub rho_m: f64,
    /// Upstream flow, veh/s.
    pub f_up: f64,
    /// Downstream flow, veh/s.
    pub f_down: f64,
}

impl SegmentSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.x_start < self.x_end
            && self.v_f > 0.0
            && self.rho_m > 0.0
            && self.f_up >= 0.0
            && self.f_down >= 0.0
            && [self.x_start, self.x_end, self.v_f, self.rho_m, self.f_up, self.f_down]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidCorridor(format!(
                "segment {} has invalid parameters: {:?}",
                self.index, self
            )))
        }
    }

    pub fn length(&self) -> f64 {
        self.x_end - self.x_start
    }

    pub fn critical_density(&self) -> f64 {
        0.5 * self.rho_m
    }

    pub fn capacity(&self) -> f64 {
        0.25 * self.v_f * self.rho_m
    }

    /// Checks `rho` against `[0, rho_m]`, clamping slack-sized violations.
    pub fn check_density(&self, rho: f64) -> Result<f64> {
        if !rho.is_finite() || rho < -DENSITY_SLACK || rho > self.rho_m + DENSITY_SLACK {
            return Err(Error::DensityOutOfRange {
                rho,
                rho_m: self.rho_m,
                segment: self.index,
            });
        }
        Ok(rho.clamp(0.0, self.rho_m))
    }
}

/// An ordered, contiguous sequence of segments starting at x = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorSpec {
    pub segments: Vec<SegmentSpec>,
    /// Meters.
    pub length: f64,
    /// Seconds.
    pub horizon: f64,
}

impl CorridorSpec {
    pub fn new(segments: Vec<SegmentSpec>, horizon: f64) -> Result<Self> {
        let length = segments.last().map(|s| s.x_end).unwrap_or(0.0);
        let corridor = CorridorSpec {
            segments,
            length,
            horizon,
        };
        corridor.validate()?;
        Ok(corridor)
    }

    /// The five-segment, 5 km, 50 s varying-speed-limit test bed.
    pub fn five_segment() -> Self {
        // (v_f, rho_m, f_up, f_down)
        const ROWS: [(f64, f64, f64, f64); 5] = [
            (40.0, 0.10, 0.0, 1.0),
            (30.0, 0.15, 1.0, 1.125),
            (50.0, 0.10, 1.125, 1.25),
            (40.0, 0.15, 1.25, 1.5),
            (30.0, 0.10, 1.5, 0.0),
        ];
        let segments = ROWS
            .iter()
            .enumerate()
            .map(|(i, &(v_f, rho_m, f_up, f_down))| SegmentSpec {
                index: i + 1,
                x_start: 1000.0 * i as f64,
                x_end: 1000.0 * (i + 1) as f64,
                v_f,
                rho_m,
                f_up,
                f_down,
            })
            .collect();
        CorridorSpec::new(segments, 50.0).expect("built-in corridor is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .segments
            .first()
            .ok_or_else(|| Error::InvalidCorridor("no segments".into()))?;
        if first.x_start != 0.0 {
            return Err(Error::InvalidCorridor(format!(
                "first segment starts at {} instead of 0",
                first.x_start
            )));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            seg.validate()?;
            if seg.index != i + 1 {
                return Err(Error::InvalidCorridor(format!(
                    "segment at position {} has index {}",
                    i + 1,
                    seg.index
                )));
            }
        }
        for pair in self.segments.windows(2) {
            if pair[0].x_end != pair[1].x_start {
                return Err(Error::InvalidCorridor(format!(
                    "segments {} and {} are not contiguous",
                    pair[0].index, pair[1].index
                )));
            }
        }
        let last = self.segments.last().unwrap();
        if last.x_end != self.length {
            return Err(Error::InvalidCorridor(format!(
                "length {} differs from last segment end {}",
                self.length, last.x_end
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidCorridor(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Half-open `[x_start, x_end)` lookup; the last segment also owns `length`.
    pub fn segment_at(&self, x: f64) -> Result<&SegmentSpec> {
        self.segment_index_at(x).map(|i| &self.segments[i])
    }

    /// Zero-based position of the segment owning `x`.
    pub fn segment_index_at(&self, x: f64) -> Result<usize> {
        if !(0.0..=self.length).contains(&x) {
            return Err(Error::OutsideCorridor {
                x,
                length: self.length,
            });
        }
        // segments are sorted by x_start
        let idx = self.segments.partition_point(|s| s.x_start <= x);
        Ok(idx.saturating_sub(1).min(self.segments.len() - 1))
    }

    pub fn segment(&self, index: usize) -> Option<&SegmentSpec> {
        self.segments.iter().find(|s| s.index == index)
    }

    pub fn max_rho_m(&self) -> f64 {
        self.segments.iter().map(|s| s.rho_m).fold(0.0, f64::max)
    }

    pub fn max_v_f(&self) -> f64 {
        self.segments.iter().map(|s| s.v_f).fold(0.0, f64::max)
    }
}

/// Greenshields speed `v_f (1 - rho / rho_m)`.
pub fn greenshields_speed(rho: f64, seg: &SegmentSpec) -> Result<f64> {
    let rho = seg.check_density(rho)?;
    Ok(seg.v_f - seg.v_f / seg.rho_m * rho)
}

/// Flow `rho * v(rho)`.
pub fn greenshields_flux(rho: f64, seg: &SegmentSpec) -> Result<f64> {
    let rho = seg.check_density(rho)?;
    Ok(rho * greenshields_speed(rho, seg)?)
}

pub fn critical_density(seg: &SegmentSpec) -> f64 {
    seg.critical_density()
}

pub fn capacity(seg: &SegmentSpec) -> f64 {
    seg.capacity()
}

/// Characteristic speed `dq/drho = v_f (1 - 2 rho / rho_m)`.
pub fn wave_speed(rho: f64, seg: &SegmentSpec) -> Result<f64> {
    let rho = seg.check_density(rho)?;
    Ok(seg.v_f * (1.0 - 2.0 * rho / seg.rho_m))
}

pub fn segment_at(x: f64, corridor: &CorridorSpec) -> Result<&SegmentSpec> {
    corridor.segment_at(x)
}

/// Free-flow (uncongested) density carrying flow `q`.
pub fn invert_flux_free(q: f64, seg: &SegmentSpec) -> Result<f64> {
    let cap = seg.capacity();
    if !q.is_finite() || q < 0.0 || q > cap * (1.0 + 1e-12) {
        return Err(Error::InfeasibleDemand {
            q,
            capacity: cap,
            segment: seg.index,
        });
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    // (v_f / rho_m) rho^2 - v_f rho + q = 0, smaller root. The product-of-roots
    // form avoids cancellation when q is small.
    let a = seg.v_f / seg.rho_m;
    let disc = (seg.v_f * seg.v_f - 4.0 * a * q).max(0.0);
    let larger = (seg.v_f + disc.sqrt()) / (2.0 * a);
    Ok((q / (a * larger)).min(seg.critical_density()))
}
