//! Independent reference computations shared by the integration tests.
//!
//! Everything here is written as plain scalar loops over slices so that it
//! shares no code path with the library beyond the public types.

#![allow(dead_code)]

use bfk::grid::{Field, ImageGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `Σ_i Σ_{r: mask} u_i^p (I − b c_i)²` by brute force.
pub fn energy_oracle(
    img: &[f64],
    mask: &[bool],
    planes: &[Vec<f64>],
    centers: &[f64],
    bias: &[f64],
    p: f64,
) -> f64 {
    let mut e = 0.0;
    for (i, plane) in planes.iter().enumerate() {
        for r in 0..img.len() {
            if mask[r] {
                let d = img[r] - bias[r] * centers[i];
                e += plane[r].powf(p) * d * d;
            }
        }
    }
    e
}

/// Same-size convolution with clamped borders, straight loops.
pub fn convolve_oracle(data: &[f64], w: usize, h: usize, k: &[f64], n: usize) -> Vec<f64> {
    let rad = (n / 2) as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut s = 0.0;
            for dy in -rad..=rad {
                for dx in -rad..=rad {
                    let sy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    let sx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    s += k[((dy + rad) as usize) * n + (dx + rad) as usize] * data[sy * w + sx];
                }
            }
            out[y as usize * w + x as usize] = s;
        }
    }
    out
}

/// Random strictly increasing centers in `[lo, hi]` separated by at least `gap`.
pub fn random_centers(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, gap: f64) -> Vec<f64> {
    loop {
        let mut c: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        c.sort_by(f64::total_cmp);
        if c.windows(2).all(|w| w[1] - w[0] >= gap) {
            return c;
        }
    }
}

/// Random image with a fraction of zero (background) pixels.
pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, zero_frac: f64) -> ImageGrid {
    let data = (0..w * h)
        .map(|_| {
            if rng.random::<f64>() < zero_frac {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    ImageGrid::new(w, h, data).unwrap()
}

pub fn pearson(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    let idx: Vec<usize> = (0..a.len()).filter(|&r| mask[r]).collect();
    let n = idx.len() as f64;
    let ma = idx.iter().map(|&r| a[r]).sum::<f64>() / n;
    let mb = idx.iter().map(|&r| b[r]).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &r in &idx {
        let (da, db) = (a[r] - ma, b[r] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    sab / (saa * sbb).sqrt()
}

pub fn max_neighbor_diff<F: Field>(f: &F) -> f64 {
    let (w, h) = f.dims();
    let v = f.values();
    let mut m: f64 = 0.0;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                m = m.max((v[y * w + x] - v[y * w + x + 1]).abs());
            }
            if y + 1 < h {
                m = m.max((v[y * w + x] - v[(y + 1) * w + x]).abs());
            }
        }
    }
    m
}

/// Straight-loop re-implementation of the synthetic bias generator:
/// Legendre values by the three-term recurrence evaluated per pixel, the
/// double sums in draw order, then min/max rescaling.
pub fn synth_bias_oracle(
    w: usize,
    h: usize,
    ll: usize,
    lt: usize,
    wrange: (f64, f64),
    range: (f64, f64),
    seed: u64,
) -> Vec<f64> {
    fn p(n: usize, x: f64) -> f64 {
        let (mut a, mut b) = (1.0, x);
        if n == 0 {
            return a;
        }
        for k in 1..n {
            let k = k as f64;
            let c = ((2.0 * k + 1.0) * x * b - k * a) / (k + 1.0);
            a = b;
            b = c;
        }
        b
    }
    fn coord(i: usize, n: usize, lo: f64, hi: f64) -> f64 {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }
    let mut g = rng(seed);
    let mut draw = || wrange.0 + (wrange.1 - wrange.0) * g.random::<f64>();
    let mut wl = vec![vec![0.0; ll + 1]; ll + 1];
    for i in 0..=ll {
        for j in 0..=ll - i {
            wl[i][j] = draw();
        }
    }
    let mut wt = vec![vec![0.0; lt + 1]; lt + 1];
    for l in 0..=lt {
        for k in 0..=l {
            wt[l][k] = draw();
        }
    }
    let mut raw = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let (x, y) = (coord(col, w, -1.0, 1.0), coord(row, h, -1.0, 1.0));
            let (xt, yt) = (coord(col, w, 0.0, 1.0), coord(row, h, 0.0, 1.0));
            let mut s = 0.0;
            for i in 0..=ll {
                for j in 0..=ll - i {
                    s += wl[i][j] * p(i, x) * p(j, y);
                }
            }
            for l in 0..=lt {
                for k in 0..=l {
                    s += wt[l][k] * (xt.powi(k as i32) * yt.powi((l - k) as i32)).sin();
                }
            }
            raw[row * w + col] = s;
        }
    }
    let mn = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let mx = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|&v| {
            if mx > mn {
                let t = (v - mn) / (mx - mn);
                (range.0 * (1.0 - t) + range.1 * t).clamp(range.0, range.1)
            } else {
                0.5 * (range.0 + range.1)
            }
        })
        .collect()
}
