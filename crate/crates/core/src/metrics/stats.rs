use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest sample size evaluated by exact enumeration.
pub const EXACT_MAX_N: usize = 20;
pub const MIN_NONZERO: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    /// Smaller of the positive and negative rank sums.
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n_effective: usize,
    pub method: PMethod,
}

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// `P(W+ <= w)` under the null by counting sign assignments; ranks are
/// doubled so tied half-ranks stay integral.
fn exact_lower_tail(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = (2.0 * w).round() as usize;
    let hits: f64 = counts[..=limit.min(total)].iter().sum();
    hits / 2f64.powi(ranks.len() as i32)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided Wilcoxon signed-rank test of the paired samples `a` and `b`.
///
/// Zero differences are dropped. Up to [`EXACT_MAX_N`] remaining pairs the
/// p-value comes from the exact null distribution, beyond that from the
/// normal approximation with tie and continuity corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<SignificanceReport> {
    const OP: &str = "wilcoxon_signed_rank";
    if a.len() != b.len() {
        return Err(Error::invalid(OP, format!("{} vs {} samples", a.len(), b.len())));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite { op: OP });
    }
    let n = diffs.len();
    if n < MIN_NONZERO {
        return Err(Error::invalid(
            OP,
            format!("{n} non-zero differences, need at least {MIN_NONZERO}"),
        ));
    }
    let r = ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = r.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let statistic = w_plus.min(total - w_plus);
    let (p, method) = if n <= EXACT_MAX_N {
        (2.0 * exact_lower_tail(&r, statistic), PMethod::Exact)
    } else {
        (normal_p(&r, statistic), PMethod::Normal)
    };
    Ok(SignificanceReport {
        statistic,
        p_value: p.min(1.0),
        n_effective: n,
        method,
    })
}

/// Normal-approximation two-sided p for the lower rank sum `w`.
pub(crate) fn normal_p(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((mean - w).abs() - 0.5).max(0.0) / var.sqrt();
    (2.0 * (1.0 - normal_cdf(z))).min(1.0)
}

/// Bonferroni correction for `m` comparisons: `min(1, m p)`.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    p_values.iter().map(|p| (p * m as f64).min(1.0)).collect()
}
