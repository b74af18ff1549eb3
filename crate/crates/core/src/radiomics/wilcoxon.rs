use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{RadiomicsError, Result};

/// Largest tie-free sample for which the exact null distribution is used.
const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    TwoSided,
    /// Differences `a − b` tend to be negative.
    Less,
    /// Differences `a − b` tend to be positive.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Pairs left after dropping zero differences.
    pub n_effective: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W⁺, W⁻)`.
    pub statistic: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
    pub alternative: Alternative,
    /// Every difference was zero; `p_value` is 1.
    pub degenerate: bool,
}

/// Mid-ranks of `values` (1-based) and the tie-group sizes.
fn mid_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Number of subsets of {1..n} with each rank sum, indexed by the sum.
fn rank_sum_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for k in 1..=n {
        for s in (k..=max).rev() {
            counts[s] += counts[s - k];
        }
    }
    counts
}

/// Paired Wilcoxon signed-rank test on `a − b`.
pub fn wilcoxon_signed_rank(
    pairs: &[(f64, f64)],
    alternative: Alternative,
) -> Result<WilcoxonResult> {
    if pairs.is_empty() {
        return Err(RadiomicsError::NoPairs);
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(RadiomicsError::NonFinite("Wilcoxon pairs"));
    }
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| a - b)
        .filter(|&d| d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            n_effective: 0,
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            p_value: 1.0,
            method: WilcoxonMethod::Exact,
            alternative,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = mid_ranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let (p_ge, p_le, method) = if n <= EXACT_MAX_N && ties.is_empty() {
        let counts = rank_sum_counts(n);
        let all = 2f64.powi(n as i32);
        let obs = w_plus.round() as usize;
        let ge: f64 = counts[obs..].iter().sum::<f64>() / all;
        let le: f64 = counts[..=obs].iter().sum::<f64>() / all;
        (ge, le, WilcoxonMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term).sqrt();
        let normal = Normal::standard();
        // sf rather than 1 − cdf: far upper tails would cancel to p = 0
        let ge = normal.sf((w_plus - mean - 0.5) / sd);
        let le = normal.cdf((w_plus - mean + 0.5) / sd);
        (ge, le, WilcoxonMethod::NormalApprox)
    };
    let p = match alternative {
        Alternative::Greater => p_ge,
        Alternative::Less => p_le,
        Alternative::TwoSided => 2.0 * p_ge.min(p_le),
    };
    Ok(WilcoxonResult {
        n_effective: n,
        w_plus,
        w_minus,
        statistic: w_plus.min(w_minus),
        p_value: p.min(1.0),
        method,
        alternative,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diffs(d: &[f64]) -> Vec<(f64, f64)> {
        d.iter().map(|&x| (x, 0.0)).collect()
    }

    #[test]
    fn all_positive_five() {
        let r = wilcoxon_signed_rank(&diffs(&[1.0, 2.0, 3.0, 4.0, 5.0]), Alternative::TwoSided)
            .unwrap();
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert_eq!(r.w_minus, 0.0);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.0625).abs() < 1e-12);
        let g =
            wilcoxon_signed_rank(&diffs(&[1.0, 2.0, 3.0, 4.0, 5.0]), Alternative::Greater).unwrap();
        assert!((g.p_value - 1.0 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair() {
        let r = wilcoxon_signed_rank(&diffs(&[1.0, -1.0]), Alternative::TwoSided).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.method, WilcoxonMethod::NormalApprox);
        assert_eq!(r.statistic, 1.5);
    }

    #[test]
    fn one_sided_samples_keep_positive_p() {
        let up: Vec<f64> = (1..=120).map(|i| i as f64 * 0.5).collect();
        let down: Vec<f64> = up.iter().map(|d| -d).collect();
        for d in [&up, &down] {
            for alt in [
                Alternative::TwoSided,
                Alternative::Less,
                Alternative::Greater,
            ] {
                let p = wilcoxon_signed_rank(&diffs(d), alt).unwrap().p_value;
                assert!(p > 0.0 && p <= 1.0, "{alt:?}: {p}");
            }
        }
        let a = wilcoxon_signed_rank(&diffs(&up), Alternative::TwoSided).unwrap();
        let b = wilcoxon_signed_rank(&diffs(&down), Alternative::TwoSided).unwrap();
        assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn degenerate() {
        let r = wilcoxon_signed_rank(&[(1.0, 1.0), (2.0, 2.0)], Alternative::TwoSided).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert!(wilcoxon_signed_rank(&[], Alternative::Less).is_err());
    }

    #[test]
    fn rank_counts_sum_to_power_of_two() {
        for n in 1..=12 {
            assert_eq!(rank_sum_counts(n).iter().sum::<f64>(), 2f64.powi(n as i32));
        }
    }

    #[test]
    fn mid_rank_ties() {
        let (r, t) = mid_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, vec![2]);
    }
}
