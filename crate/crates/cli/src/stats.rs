//! Distances and dependence measures used by the experiments.

use std::collections::BTreeMap;

use gwve_core::{Error, Result};

/// sup_x |F_N(x) − F(x)| for sorted samples.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Precondition("KS statistic of an empty sample".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Precondition("KS statistic of a sample containing NaN".into()));
    }
    if samples.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Precondition("KS statistic needs sorted samples".into()));
    }
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Mean of the Kolmogorov distribution: √N·KS is about this large under the null.
pub const KOLMOGOROV_MEAN: f64 = 0.868_731_160_598_376_1;

/// ½ Σ |a − b| over the union of keys.
pub fn total_variation<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut d = 0.0;
    for (k, &p) in a {
        d += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &q) in b {
        if !a.contains_key(k) {
            d += q.abs();
        }
    }
    0.5 * d
}

/// Expected TV between an exact law and an empirical law from `samples` effective
/// draws, to first order: ½ Σ √(2 p(1−p) / (π N)).
pub fn null_tv_scale<'a>(probs: impl IntoIterator<Item = &'a f64>, samples: f64) -> f64 {
    let c = (2.0 / (std::f64::consts::PI * samples)).sqrt();
    0.5 * probs.into_iter().map(|&p| c * (p * (1.0 - p)).max(0.0).sqrt()).sum::<f64>()
}

/// Plug-in mutual information (nats) of a contingency table of counts.
pub fn mutual_information<A: Ord + Clone, B: Ord + Clone>(counts: &BTreeMap<(A, B), u64>) -> f64 {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    let mut rows: BTreeMap<A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<B, u64> = BTreeMap::new();
    for ((a, b), &c) in counts {
        *rows.entry(a.clone()).or_default() += c;
        *cols.entry(b.clone()).or_default() += c;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|((a, b), &c)| {
            let pab = c as f64 / n;
            let pa = rows[a] as f64 / n;
            let pb = cols[b] as f64 / n;
            pab * (pab / (pa * pb)).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Normalizes counts or weights into a law.
pub fn normalize<K: Ord>(weights: BTreeMap<K, f64>) -> BTreeMap<K, f64> {
    let total: f64 = weights.values().sum();
    weights.into_iter().map(|(k, w)| (k, w / total)).collect()
}
