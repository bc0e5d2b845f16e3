use super::{MicrostructureImage, ParticleSet};
use crate::error::Result;

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// One particle per 4-connected component of the phase mask, placed at the
/// mean (column, row) pixel coordinate of the component.
///
/// Two-pass labelling with union-find; particles are ordered by the raster
/// position of each component's first pixel.
pub fn extract_particles(img: &MicrostructureImage) -> Result<ParticleSet> {
    let mask = img.mask()?;
    let (w, h) = (img.width, img.height);
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask[i] {
                continue;
            }
            if x > 0 && mask[i - 1] {
                union(&mut parent, i, i - 1);
            }
            if y > 0 && mask[i - w] {
                union(&mut parent, i, i - w);
            }
        }
    }
    // root -> (index into sums)
    let mut slot = vec![usize::MAX; w * h];
    let mut sums: Vec<(f64, f64, usize)> = Vec::new();
    for i in 0..w * h {
        if !mask[i] {
            continue;
        }
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = sums.len();
            sums.push((0.0, 0.0, 0));
        }
        let acc = &mut sums[slot[root]];
        acc.0 += (i % w) as f64;
        acc.1 += (i / w) as f64;
        acc.2 += 1;
    }
    let points = sums
        .into_iter()
        .map(|(sx, sy, n)| (sx / n as f64, sy / n as f64))
        .collect();
    ParticleSet::new(points, (w as f64, h as f64))
}
