//! Limit laws and finite-n transforms used as comparison targets.

use crate::env::{compose_pgf, Environment};
use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate, QuadResult, DEFAULT_PANEL_CAP};
use crate::Real;

/// Default absolute tolerance for the mixture integral.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Parameters of a limit evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitQuery<T> {
    pub k: usize,
    pub theta: T,
    /// t_1, …, t_{k−1}.
    pub times: Vec<T>,
    pub tolerance: T,
}

impl<T: Real> LimitQuery<T> {
    pub fn new(k: usize, times: Vec<T>) -> Self {
        LimitQuery { k, theta: T::zero(), times, tolerance: T::of(DEFAULT_TOLERANCE) }
    }

    pub fn with_theta(mut self, theta: T) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_tolerance(mut self, tolerance: T) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// Times in (0,1), tolerance in (0, 1e-4], k − 1 times.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(false)
    }

    fn validate_with(&self, allow_zero: bool) -> Result<()> {
        if self.k < 2 {
            return Err(domain("limit queries need k ≥ 2"));
        }
        if self.times.len() != self.k - 1 {
            return Err(domain(format!("k = {} needs {} times, got {}", self.k, self.k - 1, self.times.len())));
        }
        for &t in &self.times {
            let lower_ok = if allow_zero { t >= T::zero() } else { t > T::zero() };
            if !(lower_ok && t < T::one()) {
                return Err(domain(format!("time {t:?} outside (0,1)")));
            }
        }
        if !(self.tolerance > T::zero() && self.tolerance <= T::of(1e-4)) {
            return Err(domain(format!("tolerance {:?} outside (0, 1e-4]", self.tolerance)));
        }
        if !(self.theta >= T::zero()) {
            return Err(domain("θ must be ≥ 0"));
        }
        Ok(())
    }
}

/// ∫₀^∞ k/(1+λ)² Π_i (1 − 1/(1 + λ(1 − t_i))) dλ with its quadrature error.
///
/// Under λ = u/(1−u) the integrand becomes k Π_i u(1 − t_i)/(1 − u t_i) on (0,1).
/// Times equal to 0 are accepted and give the marginal over the remaining times.
pub fn limit_joint_tail_integral_with_error<T: Real>(query: &LimitQuery<T>) -> Result<QuadResult<T>> {
    query.validate_with(true)?;
    let k = T::of(query.k as f64);
    let times = query.times.clone();
    let f = move |u: T| {
        times.iter().fold(k, |acc, &t| acc * u * (T::one() - t) / (T::one() - u * t))
    };
    integrate(f, T::zero(), T::one(), query.tolerance, DEFAULT_PANEL_CAP)
}

/// Limit of P(B̃_1 ≥ S_n(t_1), …, B̃_{k−1} ≥ S_n(t_{k−1}) | Z_n ≥ k), by quadrature.
pub fn limit_joint_tail_integral<T: Real>(query: &LimitQuery<T>) -> Result<T> {
    Ok(limit_joint_tail_integral_with_error(query)?.value)
}

/// (1 − t) ln(1 − t), extended by 0 at t = 1.
fn x_ln_x<T: Real>(one_minus_t: T) -> T {
    if one_minus_t == T::zero() {
        T::zero()
    } else {
        one_minus_t * one_minus_t.ln()
    }
}

/// k(Π(1−t_i)/t_i − Σ_j (1−t_j)/t_j Π_{i≠j} t_i/(t_i−t_j) ln(1−t_j)), evaluated as written.
pub fn limit_joint_tail_closed<T: Real>(query: &LimitQuery<T>) -> Result<T> {
    query.validate()?;
    let t = &query.times;
    for i in 0..t.len() {
        for j in 0..i {
            if t[i] == t[j] {
                return Err(domain("closed form needs pairwise distinct times"));
            }
        }
    }
    let one = T::one();
    let first = t.iter().fold(one, |acc, &ti| acc * (one - ti) / ti);
    let mut sum = T::zero();
    for (j, &tj) in t.iter().enumerate() {
        let prod = t
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .fold(one, |acc, (_, &ti)| acc * ti / (ti - tj));
        sum = sum + x_ln_x(one - tj) / tj * prod;
    }
    Ok(T::of(query.k as f64) * (first - sum))
}

/// Closed form against the integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailConsistency<T> {
    pub closed: T,
    pub integral: T,
    pub difference: T,
    pub consistent: bool,
}

/// Evaluates both joint-tail forms and reports whether they agree within `slack`.
pub fn compare_joint_tail<T: Real>(query: &LimitQuery<T>, slack: T) -> Result<TailConsistency<T>> {
    let closed = limit_joint_tail_closed(query)?;
    let integral = limit_joint_tail_integral(query)?;
    let difference = (closed - integral).abs();
    Ok(TailConsistency { closed, integral, difference, consistent: difference <= slack })
}

/// lim Q(ψ₁ ≥ S_n(t)) under θ_n = θ/a_n: ((1+θ)(1−t)/(1+θ(1−t)))^{k−1}.
pub fn limit_psi1_tail<T: Real>(k: usize, theta: T, t: T) -> T {
    let one = T::one();
    ((one + theta) * (one - t) / (one + theta * (one - t))).powi(k as i32 - 1)
}

/// Limit probability that the first split produces groups of sizes k1 and k2.
pub fn limit_group_split<T: Real>(k: usize, k1: usize, k2: usize) -> Result<T> {
    if k1 == 0 || k2 == 0 || k1 + k2 != k {
        return Err(domain(format!("sizes {k1} + {k2} do not split k = {k}")));
    }
    let num = if k1 == k2 { 1.0 } else { 2.0 };
    Ok(T::of(num / (k as f64 - 1.0)))
}

/// F(t) = t/(1 + θ(1 − t)), the common law of the rescaled split times.
pub fn limit_split_marginal_cdf<T: Real>(theta: T, t: T) -> T {
    t / (T::one() + theta * (T::one() - t))
}

/// 1 − e^{−x}.
pub fn yaglom_cdf<T: Real>(x: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else {
        -(-x).exp_m1()
    }
}

/// (1+θ)²/(1+λ)² Π_i (1 + θ(1 − t_i))/(1 + λ(1 − t_i)).
pub fn limit_q_laplace<T: Real>(theta: T, times: &[T], lambda: T) -> T {
    let one = T::one();
    let lead = ((one + theta) / (one + lambda)).powi(2);
    times
        .iter()
        .fold(lead, |acc, &t| acc * (one + theta * (one - t)) / (one + lambda * (one - t)))
}

/// Q[e^{−(λ−θ) Y}] for the off-spine population Y of a spine particle at generation m
/// with g marked children: ∂^g f_{m+1}(f_{m+1,n}(e^{−λ})) / ∂^g f_{m+1}(f_{m+1,n}(e^{−θ})).
pub fn bush_laplace(env: &Environment, n: usize, m: usize, g: usize, theta: f64, lambda: f64) -> Result<f64> {
    if m >= n {
        return Err(domain(format!("bush_laplace needs m < n, got m={m}, n={n}")));
    }
    if g == 0 {
        return Err(domain("bush_laplace needs g ≥ 1"));
    }
    if !(theta >= 0.0 && lambda >= theta) {
        return Err(domain(format!("bush_laplace needs 0 ≤ θ ≤ λ, got θ={theta}, λ={lambda}")));
    }
    let law = env.law(m + 1)?;
    let den = law.pgf_derivative_capped(g, compose_pgf(env, m + 1, n, (-theta).exp())?, env.max_order())?;
    if !(den > 0.0) {
        return Err(Error::DegenerateTilt { generation: m, normalizer: den });
    }
    let num = law.pgf_derivative_capped(g, compose_pgf(env, m + 1, n, (-lambda).exp())?, env.max_order())?;
    Ok(num / den)
}
