//! Dense space-time density grids and their CSV interchange format.
//!
//! File layout: one header line `nx=..,nt=..,dx=..,dt=..,x0=..,t0=..`, then `nt`
//! rows of `nx` comma-separated densities written with 17 significant digits.
//! Row `k` holds time `t0 + k dt`, column `j` holds position `x0 + j dx`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    pub x0: f64,
    pub t0: f64,
    /// Row-major `[time][space]`.
    pub values: Vec<f64>,
}

/// Geometry of a grid without its values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    pub x0: f64,
    pub t0: f64,
}

impl Grid {
    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.dx
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.nx * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl DensityField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nx * grid.nt {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.nx,
                grid.nt
            )));
        }
        Ok(DensityField {
            nx: grid.nx,
            nt: grid.nt,
            dx: grid.dx,
            dt: grid.dt,
            x0: grid.x0,
            t0: grid.t0,
            values,
        })
    }

    pub fn zeros(grid: Grid) -> Self {
        DensityField::new(grid, vec![0.0; grid.nx * grid.nt]).unwrap()
    }

    /// Evaluates `f(x, t)` at every grid point.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.nt {
            let t = grid.t(k);
            for j in 0..grid.nx {
                values.push(f(grid.x(j), t));
            }
        }
        DensityField::new(grid, values).unwrap()
    }

    pub fn grid(&self) -> Grid {
        Grid {
            nx: self.nx,
            nt: self.nt,
            dx: self.dx,
            dt: self.dt,
            x0: self.x0,
            t0: self.t0,
        }
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.dx
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.nx + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.nx..(k + 1) * self.nx]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Checks finiteness, nonnegativity and an upper bound (with slack).
    pub fn check_bounds(&self, upper: f64, slack: f64) -> Result<()> {
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v < -slack || v > upper + slack {
                let (k, j) = (i / self.nx, i % self.nx);
                return Err(Error::NonFinite(format!(
                    "density {v} at (x={}, t={}) outside [0, {upper}]",
                    self.x(j),
                    self.t(k)
                )));
            }
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &DensityField) -> bool {
        self.grid() == other.grid()
    }

    /// Point-samples onto a coarser grid whose spacings are integer multiples.
    pub fn downsample(&self, output_dx: f64, output_dt: f64) -> Result<DensityField> {
        let fx = integer_ratio(output_dx, self.dx, "output_dx")?;
        let ft = integer_ratio(output_dt, self.dt, "output_dt")?;
        if !(self.nx - 1).is_multiple_of(fx) || !(self.nt - 1).is_multiple_of(ft) {
            return Err(Error::GridMismatch(format!(
                "grid {}x{} cannot be sampled every {fx} columns and {ft} rows",
                self.nx, self.nt
            )));
        }
        let nx = (self.nx - 1) / fx + 1;
        let nt = (self.nt - 1) / ft + 1;
        let mut values = Vec::with_capacity(nx * nt);
        for k in 0..nt {
            let row = self.row(k * ft);
            values.extend((0..nx).map(|j| row[j * fx]));
        }
        DensityField::new(
            Grid {
                nx,
                nt,
                dx: self.dx * fx as f64,
                dt: self.dt * ft as f64,
                x0: self.x0,
                t0: self.t0,
            },
            values,
        )
    }

    /// Vehicles on the road at time row `k`.
    ///
    /// Each grid point owns `[x_j, x_j + dx)`; the closing point at the far end
    /// owns nothing, so a field sampled from `dx`-wide cells reproduces their
    /// mass exactly.
    pub fn total_mass(&self, k: usize) -> f64 {
        let row = self.row(k);
        let owned = if row.len() > 1 { &row[..row.len() - 1] } else { row };
        owned.iter().sum::<f64>() * self.dx
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut line = String::with_capacity(self.nx * 24);
        writeln!(
            out,
            "nx={},nt={},dx={},dt={},x0={},t0={}",
            self.nx, self.nt, self.dx, self.dt, self.x0, self.t0
        )
        .map_err(|e| Error::io(path, e))?;
        for k in 0..self.nt {
            line.clear();
            for (j, v) in self.row(k).iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                write!(line, "{v:.16e}").unwrap();
            }
            line.push('\n');
            out.write_all(line.as_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<DensityField> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, "missing header"))?
            .map_err(|e| Error::io(path, e))?;
        let grid = parse_header(&header).map_err(|d| Error::format(path, d))?;
        let mut values = Vec::with_capacity(grid.len());
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let before = values.len();
            for tok in line.split(',') {
                let v: f64 = tok.trim().parse().map_err(|_| {
                    Error::format(path, format!("row {k}: bad number {tok:?}"))
                })?;
                values.push(v);
            }
            if values.len() - before != grid.nx {
                return Err(Error::format(
                    path,
                    format!("row {k} has {} values, expected {}", values.len() - before, grid.nx),
                ));
            }
        }
        if values.len() != grid.len() {
            return Err(Error::format(
                path,
                format!("expected {} rows, found {}", grid.nt, values.len() / grid.nx.max(1)),
            ));
        }
        DensityField::new(grid, values)
    }
}

fn parse_header(header: &str) -> std::result::Result<Grid, String> {
    let mut fields = [None::<&str>; 6];
    const KEYS: [&str; 6] = ["nx", "nt", "dx", "dt", "x0", "t0"];
    for part in header.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("header field {part:?} is not key=value"))?;
        let slot = KEYS
            .iter()
            .position(|k| *k == key.trim())
            .ok_or_else(|| format!("unknown header key {key:?}"))?;
        fields[slot] = Some(value.trim());
    }
    let get = |i: usize| fields[i].ok_or_else(|| format!("header lacks {}", KEYS[i]));
    let int = |i: usize| -> std::result::Result<usize, String> {
        get(i)?.parse().map_err(|_| format!("bad {}", KEYS[i]))
    };
    let float = |i: usize| -> std::result::Result<f64, String> {
        get(i)?.parse().map_err(|_| format!("bad {}", KEYS[i]))
    };
    Ok(Grid {
        nx: int(0)?,
        nt: int(1)?,
        dx: float(2)?,
        dt: float(3)?,
        x0: float(4)?,
        t0: float(5)?,
    })
}

fn integer_ratio(coarse: f64, fine: f64, what: &str) -> Result<usize> {
    let ratio = coarse / fine;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "{what}={coarse} is not an integer multiple of {fine}"
        )));
    }
    Ok(rounded as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nx: usize, nt: usize, dx: f64, dt: f64) -> Grid {
        Grid {
            nx,
            nt,
            dx,
            dt,
            x0: 0.0,
            t0: 0.0,
        }
    }

    #[test]
    fn mass_of_simple_fields() {
        let g = grid(2501, 3, 2.0, 0.1);
        assert_eq!(DensityField::zeros(g).total_mass(1), 0.0);
        let uniform = DensityField::from_fn(g, |_, _| 0.1);
        assert!((uniform.total_mass(0) - 500.0).abs() < 1e-9);
    }

    #[test]
    fn downsample_identity_and_default_grid() {
        let g = grid(11, 6, 1.0, 0.5);
        let f = DensityField::from_fn(g, |x, t| x + 100.0 * t);
        assert_eq!(f.downsample(1.0, 0.5).unwrap(), f);

        let half = f.downsample(2.0, 0.5).unwrap();
        assert_eq!(half.nx - 1, (f.nx - 1) / 2);
        assert_eq!(half.get(3, 2), f.get(3, 4));

        let fine = grid(5001, 1001, 1.0, 0.05);
        let f = DensityField::zeros(fine).downsample(2.0, 0.1).unwrap();
        assert_eq!((f.nx, f.nt), (2501, 501));
        assert_eq!(f.len(), 1_253_001);
    }

    #[test]
    fn downsample_rejects_non_divisible() {
        let f = DensityField::zeros(grid(11, 6, 1.0, 0.5));
        assert!(f.downsample(1.5, 0.5).is_err());
        assert!(f.downsample(3.0, 0.5).is_err());
        assert!(f.downsample(1.0, 0.25).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = Grid {
            nx: 7,
            nt: 4,
            dx: 2.0,
            dt: 0.1,
            x0: 10.0,
            t0: 0.5,
        };
        let f = DensityField::from_fn(g, |x, t| (x * 0.013 + t).sin().abs() / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        f.write_csv(&path).unwrap();
        let back = DensityField::read_csv(&path).unwrap();
        assert_eq!(back, f);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("nx=7,nt=4,dx=2,dt=0.1,x0=10,t0=0.5\n"));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "nx=2,nt=2,dx=1,dt=1,x0=0,t0=0\n1,2\n3\n").unwrap();
        assert!(DensityField::read_csv(&path).is_err());
        std::fs::write(&path, "nx=2,nt=2,dx=1\n1,2\n3,4\n").unwrap();
        assert!(DensityField::read_csv(&path).is_err());
    }
}
