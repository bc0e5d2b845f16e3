//! Micrograph and particle-file readers, descriptor curve writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::DynamicImage;

use super::{DescriptorCurve, MicrostructureImage, ParticleSet};
use crate::datamodel::write_file;
use crate::error::{Error, Result};

/// Reads an 8- or 16-bit grayscale PGM (P2 or P5). Intensities are scaled to
/// [0, 1] by the full range of the decoded bit depth.
pub fn load_pgm(path: &Path) -> Result<MicrostructureImage> {
    let img_err = |msg: String| Error::Image {
        path: path.to_path_buf(),
        msg,
    };
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| img_err(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let intensities: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect(),
        other => return Err(img_err(format!("expected a grayscale image, got {:?}", other.color()))),
    };
    MicrostructureImage::new(w, h, intensities)
}

/// Reads `x,y` rows preceded by a `# window <width> <height>` line. A literal
/// `x,y` header row is optional.
pub fn load_particles(path: &Path) -> Result<ParticleSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (first_no, first) = lines.next().ok_or_else(|| parse_err(1, "empty particle file".into()))?;
    let fields: Vec<&str> = first.trim().trim_start_matches('#').split_whitespace().collect();
    let window = match fields.as_slice() {
        ["window", w, h] => match (w.parse::<f64>(), h.parse::<f64>()) {
            (Ok(w), Ok(h)) => (w, h),
            _ => return Err(parse_err(first_no + 1, format!("bad window line {first:?}"))),
        },
        _ => {
            return Err(parse_err(
                first_no + 1,
                "expected '# window w h' as the first line".into(),
            ))
        }
    };
    let mut points = Vec::new();
    for (no, line) in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols == ["x", "y"] {
            continue;
        }
        let point = match cols.as_slice() {
            [x, y] => x.parse::<f64>().ok().zip(y.parse::<f64>().ok()),
            _ => None,
        };
        match point {
            Some(p) if p.0.is_finite() && p.1.is_finite() => points.push(p),
            _ => return Err(parse_err(no + 1, format!("expected 'x,y', found {line:?}"))),
        }
    }
    ParticleSet::new(points, window)
}

pub fn write_particles(path: &Path, ps: &ParticleSet) -> Result<()> {
    let mut out = format!("# window {} {}\nx,y\n", ps.window.0, ps.window.1);
    for (x, y) in &ps.points {
        let _ = writeln!(out, "{x},{y}");
    }
    write_file(path, &out)
}

/// Writes `(unit_id, covariate label, curve)` triples in the curves schema
/// `unit_id,s,r,z`.
pub fn write_curves_csv(path: &Path, curves: &[(String, String, DescriptorCurve)]) -> Result<()> {
    let mut out = String::from("unit_id,s,r,z\n");
    for (unit, s, curve) in curves {
        for (r, z) in curve.r_grid.iter().zip(&curve.values) {
            let _ = writeln!(out, "{unit},{s},{r},{z}");
        }
    }
    write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_pgm_is_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        fs::write(&p, "P2\n3 2\n255\n0 255 51\n102 0 255\n").unwrap();
        let img = load_pgm(&p).unwrap();
        assert_eq!((img.width, img.height), (3, 2));
        assert_eq!(img.intensities, vec![0.0, 1.0, 0.2, 0.4, 0.0, 1.0]);
    }

    #[test]
    fn binary_16bit_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.pgm");
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x00, 0x00]);
        fs::write(&p, bytes).unwrap();
        assert_eq!(load_pgm(&p).unwrap().intensities, vec![1.0, 0.0]);
    }

    #[test]
    fn particles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let ps = ParticleSet::new(vec![(0.125, 3.5), (7.0, 0.1)], (8.0, 4.0)).unwrap();
        write_particles(&p, &ps).unwrap();
        assert_eq!(load_particles(&p).unwrap(), ps);

        fs::write(&p, "# window 2 2\n0.5,0.5\n1,1.5\n").unwrap();
        assert_eq!(load_particles(&p).unwrap().points.len(), 2);
        fs::write(&p, "x,y\n0.5,0.5\n").unwrap();
        assert!(load_particles(&p).is_err());
        fs::write(&p, "# window 1 1\n3,0.5\n").unwrap();
        assert!(load_particles(&p).is_err());
    }
}
