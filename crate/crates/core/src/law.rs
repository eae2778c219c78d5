//! One generation's offspring law.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::Real;

/// Default cap on derivative orders (supports up to 11 spines).
pub const DEFAULT_MAX_ORDER: usize = 12;

/// Tolerance on the total mass of an explicit table.
const MASS_TOL: f64 = 1e-12;

/// Offspring distribution q with generating function f(s) = Σ q(j) s^j.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LawSpec", into = "LawSpec")]
pub enum OffspringLaw {
    Poisson { rate: f64 },
    Binomial { trials: u32, p: f64 },
    /// q(0) = p0 and q(j) = (1 − p0)(1 − b) b^{j−1} for j ≥ 1.
    LinearFractional { p0: f64, b: f64 },
    /// q(j) = probs[j].
    Explicit { probs: Vec<f64> },
}

/// Wire format of a law; `geometric` is sugar for a linear-fractional law.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LawSpec {
    Poisson { rate: f64 },
    Binomial { trials: u32, p: f64 },
    /// q(j) = p (1 − p)^j, pgf p / (1 − (1 − p) s).
    Geometric { p: f64 },
    LinearFractional { p0: f64, b: f64 },
    Explicit { probs: Vec<f64> },
}

impl TryFrom<LawSpec> for OffspringLaw {
    type Error = Error;

    fn try_from(spec: LawSpec) -> Result<Self> {
        let law = match spec {
            LawSpec::Poisson { rate } => OffspringLaw::Poisson { rate },
            LawSpec::Binomial { trials, p } => OffspringLaw::Binomial { trials, p },
            LawSpec::Geometric { p } => OffspringLaw::geometric(p)?,
            LawSpec::LinearFractional { p0, b } => OffspringLaw::LinearFractional { p0, b },
            LawSpec::Explicit { probs } => OffspringLaw::Explicit { probs },
        };
        law.validate()?;
        Ok(law)
    }
}

impl From<OffspringLaw> for LawSpec {
    fn from(law: OffspringLaw) -> Self {
        match law {
            OffspringLaw::Poisson { rate } => LawSpec::Poisson { rate },
            OffspringLaw::Binomial { trials, p } => LawSpec::Binomial { trials, p },
            OffspringLaw::LinearFractional { p0, b } => LawSpec::LinearFractional { p0, b },
            OffspringLaw::Explicit { probs } => LawSpec::Explicit { probs },
        }
    }
}

impl OffspringLaw {
    pub fn poisson(rate: f64) -> Result<Self> {
        let law = OffspringLaw::Poisson { rate };
        law.validate()?;
        Ok(law)
    }

    pub fn binomial(trials: u32, p: f64) -> Result<Self> {
        let law = OffspringLaw::Binomial { trials, p };
        law.validate()?;
        Ok(law)
    }

    /// q(j) = p (1 − p)^j.
    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(domain(format!("geometric parameter {p} outside (0,1]")));
        }
        Ok(OffspringLaw::LinearFractional { p0: p, b: 1.0 - p })
    }

    pub fn linear_fractional(p0: f64, b: f64) -> Result<Self> {
        let law = OffspringLaw::LinearFractional { p0, b };
        law.validate()?;
        Ok(law)
    }

    pub fn explicit(probs: Vec<f64>) -> Result<Self> {
        let law = OffspringLaw::Explicit { probs };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        match self {
            OffspringLaw::Poisson { rate } if rate.is_finite() && *rate >= 0.0 => Ok(()),
            OffspringLaw::Binomial { p, .. } if unit(*p) => Ok(()),
            OffspringLaw::LinearFractional { p0, b } if unit(*p0) && unit(*b) && *b < 1.0 => Ok(()),
            OffspringLaw::Explicit { probs } => {
                if probs.is_empty() || !probs.iter().all(|&q| unit(q)) {
                    return Err(domain("explicit table needs entries in [0,1]"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(domain(format!("explicit table sums to {total}")));
                }
                Ok(())
            }
            other => Err(domain(format!("invalid parameters in {other:?}"))),
        }
    }

    /// f(s); `s` must lie in [0,1].
    pub fn pgf<T: Real>(&self, s: T) -> Result<T> {
        check_unit(s)?;
        Ok(self.deriv_raw(0, s))
    }

    /// ∂^g f(s) with the default order cap.
    pub fn pgf_derivative<T: Real>(&self, order: usize, s: T) -> Result<T> {
        self.pgf_derivative_capped(order, s, DEFAULT_MAX_ORDER)
    }

    pub fn pgf_derivative_capped<T: Real>(&self, order: usize, s: T, max_order: usize) -> Result<T> {
        if order > max_order {
            return Err(Error::UnsupportedOrder { order, max: max_order });
        }
        check_unit(s)?;
        Ok(self.deriv_raw(order, s))
    }

    /// ∂^g f(s) without argument checks. Valid for s in [0,1] (and slightly beyond for
    /// finite differences of analytic families).
    pub fn deriv_raw<T: Real>(&self, g: usize, s: T) -> T {
        let one = T::one();
        match self {
            OffspringLaw::Poisson { rate } => {
                let lam = T::of(*rate);
                lam.powi(g as i32) * (lam * (s - one)).exp()
            }
            OffspringLaw::Binomial { trials, p } => {
                let n = *trials as usize;
                if g > n {
                    return T::zero();
                }
                let p = T::of(*p);
                let falling = (0..g).fold(one, |acc, j| acc * T::of((n - j) as f64));
                falling * p.powi(g as i32) * (one - p + p * s).powi((n - g) as i32)
            }
            OffspringLaw::LinearFractional { p0, b } => {
                let a = T::of(*p0);
                let b = T::of(*b);
                let den = one - b * s;
                if g == 0 {
                    a + (one - a) * (one - b) * s / den
                } else {
                    let fact = (1..=g).fold(one, |acc, j| acc * T::of(j as f64));
                    (one - a) * (one - b) * fact * b.powi(g as i32 - 1) / den.powi(g as i32 + 1)
                }
            }
            OffspringLaw::Explicit { probs } => {
                if g >= probs.len() {
                    return T::zero();
                }
                let mut acc = T::zero();
                for j in (g..probs.len()).rev() {
                    let falling = ((j - g + 1)..=j).fold(one, |f, i| f * T::of(i as f64));
                    acc = acc * s + falling * T::of(probs[j]);
                }
                acc
            }
        }
    }

    /// f'(1).
    pub fn mean(&self) -> f64 {
        self.deriv_raw(1, 1.0)
    }

    /// f''(1) = E[X(X−1)].
    pub fn second_factorial_moment(&self) -> f64 {
        self.deriv_raw(2, 1.0)
    }

    /// f'''(1).
    pub fn third_factorial_moment(&self) -> f64 {
        self.deriv_raw(3, 1.0)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_factorial_moment() + m - m * m
    }

    /// ν = f''(1) / f'(1)².
    pub fn nu(&self) -> f64 {
        let m = self.mean();
        self.second_factorial_moment() / (m * m)
    }

    /// q(j).
    pub fn pmf(&self, j: usize) -> f64 {
        match self {
            OffspringLaw::Poisson { rate } => {
                if *rate == 0.0 {
                    return if j == 0 { 1.0 } else { 0.0 };
                }
                let ln_fact: f64 = (1..=j).map(|i| (i as f64).ln()).sum();
                (-rate + j as f64 * rate.ln() - ln_fact).exp()
            }
            OffspringLaw::Binomial { trials, p } => {
                let n = *trials as usize;
                if j > n {
                    return 0.0;
                }
                binomial_pmf(n, *p, j)
            }
            OffspringLaw::LinearFractional { p0, b } => {
                if j == 0 {
                    *p0
                } else {
                    (1.0 - p0) * (1.0 - b) * b.powi(j as i32 - 1)
                }
            }
            OffspringLaw::Explicit { probs } => probs.get(j).copied().unwrap_or(0.0),
        }
    }

    /// Largest possible offspring count, if finite.
    pub fn max_offspring(&self) -> Option<usize> {
        match self {
            OffspringLaw::Poisson { rate } if *rate == 0.0 => Some(0),
            OffspringLaw::Poisson { .. } => None,
            OffspringLaw::Binomial { trials, p } => Some(if *p == 0.0 { 0 } else { *trials as usize }),
            OffspringLaw::LinearFractional { p0, b } => {
                if *p0 == 1.0 {
                    Some(0)
                } else if *b == 0.0 {
                    Some(1)
                } else {
                    None
                }
            }
            OffspringLaw::Explicit { probs } => probs.iter().rposition(|&q| q > 0.0),
        }
    }

    /// Atoms (j, q(j)) with q(j) > 0, for finite-support laws.
    pub fn finite_atoms(&self) -> Option<Vec<(usize, f64)>> {
        let max = self.max_offspring()?;
        Some((0..=max).map(|j| (j, self.pmf(j))).filter(|&(_, q)| q > 0.0).collect())
    }

    /// 1 − f(1 − q), evaluated without cancellation for small q.
    pub fn survival_map(&self, q: f64) -> f64 {
        match self {
            OffspringLaw::Poisson { rate } => -(-rate * q).exp_m1(),
            OffspringLaw::Binomial { trials, p } => {
                -((*trials as f64) * (-p * q).ln_1p()).exp_m1()
            }
            OffspringLaw::LinearFractional { p0, b } => (1.0 - p0) * q / (1.0 - b + b * q),
            OffspringLaw::Explicit { probs } => {
                let l = (-q).ln_1p();
                probs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(j, &pj)| pj * -((j as f64) * l).exp_m1())
                    .sum()
            }
        }
    }

    /// Law of the number of children retained by independent Bernoulli(r) thinning.
    pub fn thinned(&self, r: f64) -> OffspringLaw {
        match self {
            OffspringLaw::Poisson { rate } => OffspringLaw::Poisson { rate: rate * r },
            OffspringLaw::Binomial { trials, p } => OffspringLaw::Binomial { trials: *trials, p: p * r },
            OffspringLaw::LinearFractional { p0, b } => {
                let den = 1.0 - b + b * r;
                OffspringLaw::LinearFractional {
                    p0: 1.0 - (1.0 - p0) * r / den,
                    b: b * r / den,
                }
            }
            OffspringLaw::Explicit { probs } => {
                let len = probs.len();
                let mut out = vec![0.0; len];
                for (l, &ql) in probs.iter().enumerate() {
                    if ql == 0.0 {
                        continue;
                    }
                    for (s, slot) in out.iter_mut().enumerate().take(l + 1) {
                        *slot += ql * binomial_pmf(l, r, s);
                    }
                }
                OffspringLaw::Explicit { probs: out }
            }
        }
    }
}

fn check_unit<T: Real>(s: T) -> Result<()> {
    if s >= T::zero() && s <= T::one() {
        Ok(())
    } else {
        Err(domain(format!("argument {s:?} outside [0,1]")))
    }
}

/// C(n, j) p^j (1 − p)^{n−j}, with the conventions 0^0 = 1.
pub fn binomial_pmf(n: usize, p: f64, j: usize) -> f64 {
    if j > n {
        return 0.0;
    }
    if p == 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if j == n { 1.0 } else { 0.0 };
    }
    let ln_choose: f64 = (0..j).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum();
    (ln_choose + j as f64 * p.ln() + (n - j) as f64 * (-p).ln_1p()).exp()
}
