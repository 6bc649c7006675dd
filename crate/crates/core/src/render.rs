//! Grayscale heatmaps of density fields.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::DensityField;

/// Gray level for a density: 255 (white) at zero, 0 (black) at `max_density`.
pub fn gray_level(rho: f64, max_density: f64) -> u8 {
    let frac = (rho / max_density).clamp(0.0, 1.0);
    (255.0 * (1.0 - frac)).round() as u8
}

/// Binary PGM bytes: `x` runs left to right, `t` bottom to top.
pub fn pgm_bytes(field: &DensityField, max_density: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", field.nx, field.nt).into_bytes();
    out.reserve(field.len());
    for k in (0..field.nt).rev() {
        out.extend(field.row(k).iter().map(|&r| gray_level(r, max_density)));
    }
    out
}

/// Path of the bounds file written next to an image.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut name = image.file_name().unwrap_or_default().to_os_string();
    name.push(".bounds.txt");
    image.with_file_name(name)
}

/// Writes the image and a sidecar with the colormap and axis bounds; returns
/// the sidecar path.
pub fn write_pgm(field: &DensityField, max_density: f64, image: &Path) -> Result<PathBuf> {
    if !(max_density > 0.0 && max_density.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad colormap maximum {max_density}")));
    }
    if let Some(parent) = image.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(image, pgm_bytes(field, max_density)).map_err(|e| Error::io(image, e))?;
    let sidecar = sidecar_path(image);
    let text = format!(
        "white_density=0\nblack_density={max_density}\nx_min={}\nx_max={}\nt_min={}\nt_max={}\nrows=time descending\n",
        field.x0,
        field.x(field.nx - 1),
        field.t0,
        field.t(field.nt - 1),
    );
    fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    Ok(sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    fn grid() -> Grid {
        Grid {
            nx: 4,
            nt: 3,
            dx: 1.0,
            dt: 1.0,
            x0: 0.0,
            t0: 0.0,
        }
    }

    #[test]
    fn extremes() {
        let white = pgm_bytes(&DensityField::zeros(grid()), 0.15);
        assert!(white.ends_with(&[255; 12]));
        assert!(white.starts_with(b"P5\n4 3\n255\n"));
        let black = pgm_bytes(&DensityField::from_fn(grid(), |_, _| 0.15), 0.15);
        assert!(black.ends_with(&[0; 12]));
        assert_eq!(gray_level(0.075, 0.15), 128);
    }

    #[test]
    fn time_runs_upwards() {
        let f = DensityField::from_fn(grid(), |_, t| if t == 0.0 { 0.1 } else { 0.0 });
        let bytes = pgm_bytes(&f, 0.1);
        let body = &bytes[bytes.len() - 12..];
        assert_eq!(&body[..8], &[255; 8]);
        assert_eq!(&body[8..], &[0; 4]);
    }

    #[test]
    fn sidecar_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("f.pgm");
        let side = write_pgm(&DensityField::zeros(grid()), 0.15, &img).unwrap();
        assert_eq!(side, dir.path().join("f.pgm.bounds.txt"));
        let text = fs::read_to_string(side).unwrap();
        assert!(text.contains("black_density=0.15"));
        assert_eq!(fs::read(&img).unwrap().len(), 11 + 12);
    }
}
