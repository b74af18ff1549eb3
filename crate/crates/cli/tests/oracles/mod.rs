//! Independent reference computations for the acceptance suite.

#![allow(dead_code)]

use ctnorm::volume::Image2;

type Entry<'a> = Box<dyn Fn(usize, usize) -> f64 + 'a>;

/// Largest singular value of a row-major `rows × cols` matrix by one-sided
/// Jacobi rotations in f64.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_max_singular(a: &[f32], rows: usize, cols: usize) -> f64 {
    // orthogonalize the shorter dimension's vectors: work on columns of the
    // matrix whose column count is min(rows, cols)
    let (m, n, get): (usize, usize, Entry) = if cols <= rows {
        (rows, cols, Box::new(|i, j| a[i * cols + j] as f64))
    } else {
        (cols, rows, Box::new(|i, j| a[j * cols + i] as f64))
    };
    let mut u: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| get(i, j)).collect())
        .collect();
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = u[p].iter().map(|x| x * x).sum();
                let beta: f64 = u[q].iter().map(|x| x * x).sum();
                let gamma: f64 = u[p].iter().zip(&u[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[p][i], u[q][i]);
                    u[p][i] = c * x - s * y;
                    u[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-13 {
            break;
        }
    }
    u.iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// One-sided and two-sided signed-rank p-values by enumerating all 2ⁿ sign
/// assignments of the ranks `1..=n`. Returns `(p_less, p_greater, p_two)`
/// for the observed positive-rank sum `w_plus`.
pub fn signed_rank_brute_force(n: usize, w_plus: u64) -> (f64, f64, f64) {
    let total = 1u64 << n;
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0..total {
        let w: u64 = (0..n)
            .filter(|k| mask >> k & 1 == 1)
            .map(|k| k as u64 + 1)
            .sum();
        if w <= w_plus {
            le += 1;
        }
        if w >= w_plus {
            ge += 1;
        }
    }
    let (pl, pg) = (le as f64 / total as f64, ge as f64 / total as f64);
    (pl, pg, (2.0 * pl.min(pg)).min(1.0))
}

/// Positive-rank sum of tie-free differences.
pub fn w_plus(diffs: &[f64]) -> u64 {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    order
        .iter()
        .enumerate()
        .filter(|(_, &i)| diffs[i] > 0.0)
        .map(|(r, _)| r as u64 + 1)
        .sum()
}

/// Direct (non-separable) SSIM with an 11×11 Gaussian window, σ = 1.5,
/// valid positions only, data range 1.
pub fn ssim_direct(a: &Image2, b: &Image2) -> f64 {
    const W: usize = 11;
    let g: Vec<f64> = (0..W)
        .map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp())
        .collect();
    let gs: f64 = g.iter().sum();
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=a.rows - W {
        for c in 0..=a.cols - W {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..W {
                for j in 0..W {
                    let w = g[i] * g[j] / (gs * gs);
                    let x = a.get(r + i, c + j) as f64;
                    let y = b.get(r + i, c + j) as f64;
                    ma += w * x;
                    mb += w * y;
                    saa += w * x * x;
                    sbb += w * y * y;
                    sab += w * x * y;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Linear ramp blend weights of one output tile along one axis, written
/// from the stitching contract: ramps of width `overlap` at (k + ½)/overlap
/// on every side shared with a neighbouring tile.
pub fn ramp_weights(len: usize, overlap: usize, has_prev: bool, has_next: bool) -> Vec<f64> {
    (0..len)
        .map(|k| {
            let mut w = 1.0f64;
            if overlap > 0 {
                if has_prev && k < overlap {
                    w = w.min((k as f64 + 0.5) / overlap as f64);
                }
                if has_next && len - 1 - k < overlap {
                    w = w.min(((len - 1 - k) as f64 + 0.5) / overlap as f64);
                }
            }
            w
        })
        .collect()
}

/// Tile starts: stride `tile − overlap` from 0, final tile flush with the end.
pub fn starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if tile >= len {
        return vec![0];
    }
    let mut v: Vec<usize> = (0..)
        .map(|i| i * (tile - overlap))
        .take_while(|&s| s + tile < len)
        .collect();
    v.push(len - tile);
    v
}

/// Max relative error of `analytic` against central differences of `loss`
/// at the listed coordinates of `x`. The denominator is floored at 1% of
/// the largest analytic magnitude so near-zero components do not dominate.
pub fn fd_max_rel_error(
    x: &mut [f32],
    analytic: &[f32],
    coords: &[usize],
    h: f32,
    loss: &mut dyn FnMut(&[f32]) -> f64,
) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, &g| m.max(g.abs() as f64));
    let floor = (1e-2 * scale).max(1e-6);
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = x[i];
        let (xp, xm) = (orig + h, orig - h);
        x[i] = xp;
        let up = loss(x);
        x[i] = xm;
        let down = loss(x);
        x[i] = orig;
        let numeric = (up - down) / (xp as f64 - xm as f64);
        let a = analytic[i] as f64;
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}

/// Finite-difference check for losses that are piecewise linear along each
/// coordinate (ReLU networks). Inside a linear piece the one-sided and central
/// differences are all exact, so for each coordinate the best of them over
/// `steps` is scored: large steps may straddle a kink, small ones drown in f32
/// roundoff, but some step avoids both. `grad_scale` sets the error floor
/// (1e-2 of it), normally the largest gradient magnitude over the model.
pub fn fd_piecewise_max_rel_error(
    x: &mut [f32],
    analytic: &[f32],
    coords: &[usize],
    steps: &[f32],
    grad_scale: f64,
    loss: &mut dyn FnMut(&[f32]) -> f64,
) -> f64 {
    let floor = (1e-2 * grad_scale).max(1e-6);
    let centre = loss(x);
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = x[i];
        let a = analytic[i] as f64;
        let mut best = f64::INFINITY;
        for &h in steps {
            let (xp, xm) = (orig + h, orig - h);
            x[i] = xp;
            let up = loss(x);
            x[i] = xm;
            let down = loss(x);
            let candidates = [
                (up - centre) / (xp as f64 - orig as f64),
                (centre - down) / (orig as f64 - xm as f64),
                (up - down) / (xp as f64 - xm as f64),
            ];
            for n in candidates {
                best = best.min((a - n).abs() / a.abs().max(n.abs()).max(floor));
            }
        }
        x[i] = orig;
        worst = worst.max(best);
    }
    worst
}

pub fn max_abs(v: &[f32]) -> f64 {
    v.iter().fold(0.0f64, |m, &g| m.max(g.abs() as f64))
}
