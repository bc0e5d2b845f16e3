use super::{DescriptorCurve, DescriptorKind, MicrostructureImage};
use crate::error::{Error, Result};

/// Integer displacements grouped by `round(|d|)` for `|d|` buckets `0..=r_max`.
fn displacement_shells(r_max: usize) -> Vec<Vec<(isize, isize)>> {
    let mut shells = vec![Vec::new(); r_max + 1];
    let lim = r_max as isize;
    for dy in -lim..=lim {
        for dx in -lim..=lim {
            let r = (((dx * dx + dy * dy) as f64).sqrt()).round() as usize;
            if r <= r_max {
                shells[r].push((dx, dy));
            }
        }
    }
    shells
}

fn and_count(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| u64::from(x & y)).sum()
}

/// Two-point correlation `S2(r)` of the phase mask for integer radii
/// `0..=r_max`. Displacements are bucketed by `round(|d|)`; each value is the
/// fraction of (pixel, displacement) pairs in the bucket with both ends in
/// phase. Without `periodic`, only pairs whose both ends lie in the window
/// count.
pub fn compute_tpc(img: &MicrostructureImage, r_max: usize, periodic: bool) -> Result<DescriptorCurve> {
    let mask = img.mask()?;
    let (w, h) = (img.width, img.height);
    if 2 * r_max >= w.min(h) {
        return Err(Error::invalid(format!(
            "r_max {r_max} must be below half the shorter image side ({w}x{h})"
        )));
    }
    let bits: Vec<u8> = mask.iter().map(|&b| u8::from(b)).collect();
    let shells = displacement_shells(r_max);
    let mut values = Vec::with_capacity(r_max + 1);
    for shell in &shells {
        let mut hits = 0u64;
        let mut pairs = 0u64;
        for &(dx, dy) in shell {
            let (c, n) = if periodic {
                count_periodic(&bits, w, h, dx, dy)
            } else {
                count_windowed(&bits, w, h, dx, dy)
            };
            hits += c;
            pairs += n;
        }
        values.push(hits as f64 / pairs as f64);
    }
    Ok(DescriptorCurve {
        kind: DescriptorKind::Tpc,
        r_grid: (0..=r_max).map(|r| r as f64).collect(),
        values,
        degenerate: false,
    })
}

fn count_windowed(bits: &[u8], w: usize, h: usize, dx: isize, dy: isize) -> (u64, u64) {
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx.max(0)) as usize;
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize - dy.max(0)) as usize;
    let mut hits = 0;
    for y in y0..y1 {
        let yb = (y as isize + dy) as usize;
        let xb = (x0 as isize + dx) as usize;
        let a = &bits[y * w + x0..y * w + x1];
        let b = &bits[yb * w + xb..yb * w + xb + (x1 - x0)];
        hits += and_count(a, b);
    }
    (hits, ((x1 - x0) * (y1 - y0)) as u64)
}

fn count_periodic(bits: &[u8], w: usize, h: usize, dx: isize, dy: isize) -> (u64, u64) {
    let s = dx.rem_euclid(w as isize) as usize;
    let mut hits = 0;
    for y in 0..h {
        let yb = (y as isize + dy).rem_euclid(h as isize) as usize;
        let a = &bits[y * w..(y + 1) * w];
        let b = &bits[yb * w..(yb + 1) * w];
        hits += and_count(&a[..w - s], &b[s..]);
        hits += and_count(&a[w - s..], &b[..s]);
    }
    (hits, (w * h) as u64)
}
