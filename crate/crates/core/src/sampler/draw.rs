//! Discrete draws: truncated probability tables and per-law samplers.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson};

use crate::error::{Error, Result};
use crate::law::{binomial_pmf, OffspringLaw};

/// Relative tail mass dropped when truncating infinite supports.
pub const TRUNCATION_TOL: f64 = 1e-12;
/// Largest table built before giving up.
const TABLE_CAP: usize = 10_000_000;

/// Probability table on {offset, offset + 1, …} sampled by inverse CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteTable {
    offset: usize,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl DiscreteTable {
    /// Normalizes non-negative weights on {offset, offset + 1, …}.
    pub fn from_weights(offset: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidInput(format!("table weights sum to {total}")));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        *cdf.last_mut().expect("non-empty") = 1.0;
        Ok(DiscreteTable { offset, probs, cdf })
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Probabilities of offset, offset + 1, ….
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, value: usize) -> f64 {
        if value < self.offset {
            return 0.0;
        }
        self.probs.get(value - self.offset).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        if u < self.cdf[0] {
            return self.offset;
        }
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.offset + idx
    }
}

/// Probability mass functions with stable term recursions.
#[derive(Clone, Debug)]
pub(crate) enum Shape {
    Poisson(f64),
    Binomial(usize, f64),
    /// C(j + r − 1, j) (1 − x)^r x^j.
    NegBinomial(usize, f64),
    /// p0 at 0, (1 − p0)(1 − b) b^{j−1} at j ≥ 1.
    LinearFractional(f64, f64),
    Table(Vec<f64>),
}

impl Shape {
    pub(crate) fn of_law(law: &OffspringLaw) -> Shape {
        match law {
            OffspringLaw::Poisson { rate } => Shape::Poisson(*rate),
            OffspringLaw::Binomial { trials, p } => Shape::Binomial(*trials as usize, *p),
            OffspringLaw::LinearFractional { p0, b } => Shape::LinearFractional(*p0, *b),
            OffspringLaw::Explicit { probs } => Shape::Table(probs.clone()),
        }
    }

    /// Unnormalized terms from j = `start` (0 or 1), truncated once the geometric tail
    /// bound falls below `TRUNCATION_TOL` relative to the accumulated mass.
    pub(crate) fn terms(&self, start: usize) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        match self {
            Shape::Table(t) => out.extend_from_slice(&t[start.min(t.len())..]),
            Shape::Binomial(n, p) => out.extend((start..=*n).map(|j| binomial_pmf(*n, *p, j))),
            Shape::Poisson(mu) => {
                if *mu == 0.0 {
                    if start == 0 {
                        out.push(1.0);
                    }
                    return Ok(out);
                }
                let ln_mu = mu.ln();
                let mut ln_fact = 0.0;
                let mut j = 0usize;
                let mut ln_term = -mu;
                let mut sum = 0.0;
                loop {
                    if j >= start {
                        let t = ln_term.exp();
                        sum += t;
                        out.push(t);
                    }
                    let ratio = mu / (j + 1) as f64;
                    if stop(&out, sum, ratio)? {
                        break;
                    }
                    j += 1;
                    ln_fact += (j as f64).ln();
                    ln_term = -mu + j as f64 * ln_mu - ln_fact;
                }
            }
            Shape::NegBinomial(r, x) => {
                let r = *r as f64;
                let mut term = (r * (-x).ln_1p()).exp();
                let mut j = 0usize;
                let mut sum = 0.0;
                loop {
                    if j >= start {
                        sum += term;
                        out.push(term);
                    }
                    let ratio = (j as f64 + r) / (j as f64 + 1.0) * x;
                    if *x == 0.0 || stop(&out, sum, ratio)? {
                        break;
                    }
                    term *= ratio;
                    j += 1;
                }
            }
            Shape::LinearFractional(p0, b) => {
                if start == 0 {
                    out.push(*p0);
                }
                let mut term = (1.0 - p0) * (1.0 - b);
                if *b == 0.0 {
                    out.push(term);
                    return Ok(out);
                }
                if start == 1 && term == 0.0 {
                    // Conditioned on j ≥ 1 only the geometric shape matters.
                    term = 1.0 - b;
                }
                let mut sum: f64 = out.iter().sum();
                loop {
                    sum += term;
                    out.push(term);
                    if stop(&out, sum, *b)? {
                        break;
                    }
                    term *= b;
                }
            }
        }
        Ok(out)
    }
}

fn stop(terms: &[f64], sum: f64, next_ratio: f64) -> Result<bool> {
    if terms.len() >= TABLE_CAP {
        return Err(Error::Resource { what: "probability table entries", count: terms.len() as u64, cap: TABLE_CAP as u64 });
    }
    let last = *terms.last().unwrap_or(&0.0);
    if next_ratio >= 1.0 || sum == 0.0 {
        return Ok(false);
    }
    Ok(last * next_ratio / (1.0 - next_ratio) <= TRUNCATION_TOL * sum)
}

/// Exact sampler for one offspring law.
#[derive(Clone, Debug)]
pub enum LawSampler {
    Constant(usize),
    Poisson(Poisson<f64>),
    Binomial(Binomial),
    /// 0 with probability p0, otherwise 1 + Geometric.
    LinearFractional { p0: f64, tail: Geometric },
    Table(DiscreteTable),
}

impl LawSampler {
    pub fn new(law: &OffspringLaw) -> Result<Self> {
        let bad = |e: String| Error::InvalidInput(format!("cannot sample {law:?}: {e}"));
        Ok(match law {
            OffspringLaw::Poisson { rate } if *rate == 0.0 => LawSampler::Constant(0),
            OffspringLaw::Poisson { rate } => LawSampler::Poisson(Poisson::new(*rate).map_err(|e| bad(e.to_string()))?),
            OffspringLaw::Binomial { trials, p } => {
                LawSampler::Binomial(Binomial::new(*trials as u64, *p).map_err(|e| bad(e.to_string()))?)
            }
            OffspringLaw::LinearFractional { p0, b } => LawSampler::LinearFractional {
                p0: *p0,
                tail: Geometric::new(1.0 - b).map_err(|e| bad(e.to_string()))?,
            },
            OffspringLaw::Explicit { probs } => LawSampler::Table(DiscreteTable::from_weights(0, probs.clone())?),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            LawSampler::Constant(c) => *c,
            LawSampler::Poisson(d) => d.sample(rng) as usize,
            LawSampler::Binomial(d) => d.sample(rng) as usize,
            LawSampler::LinearFractional { p0, tail } => {
                if rng.random::<f64>() < *p0 {
                    0
                } else {
                    1 + tail.sample(rng) as usize
                }
            }
            LawSampler::Table(t) => t.sample(rng),
        }
    }
}

/// `count` distinct values of 0..len in uniformly random order.
pub fn sample_distinct<R: Rng + ?Sized>(rng: &mut R, len: usize, count: usize) -> Vec<usize> {
    assert!(count <= len, "cannot draw {count} distinct values from {len}");
    if count * 4 <= len {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let x = rng.random_range(0..len);
            if !out.contains(&x) {
                out.push(x);
            }
        }
        out
    } else {
        let mut pool: Vec<usize> = (0..len).collect();
        for i in 0..count {
            let j = rng.random_range(i..len);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}
