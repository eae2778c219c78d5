//! Truncated Taylor jets of pgf compositions.

use crate::law::OffspringLaw;
use crate::Real;

/// Derivatives of a map h at a point s up to a fixed order.
///
/// Stored as scaled Taylor coefficients `d_g = h^{(g)}(s)/g! · λ^g` with `ln λ` kept
/// separately, so long compositions with geometric drift neither overflow nor
/// underflow. After every composition `λ` is chosen so that `d_1 = 1` (unless h' = 0).
#[derive(Clone, Debug, PartialEq)]
pub struct Jet<T> {
    point: T,
    coeffs: Vec<T>,
    ln_scale: T,
}

impl<T: Real> Jet<T> {
    /// The identity map at `s`, truncated at `order`.
    pub fn identity(s: T, order: usize) -> Self {
        let mut coeffs = vec![T::zero(); order + 1];
        coeffs[0] = s;
        if order >= 1 {
            coeffs[1] = T::one();
        }
        Jet { point: s, coeffs, ln_scale: T::zero() }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Base point s.
    pub fn point(&self) -> T {
        self.point
    }

    /// h(s).
    pub fn value(&self) -> T {
        self.coeffs[0]
    }

    /// ln h^{(g)}(s); −∞ when the derivative vanishes.
    pub fn ln_derivative(&self, g: usize) -> T {
        if g == 0 {
            return self.coeffs[0].ln();
        }
        let ln_fact = (1..=g).fold(T::zero(), |acc, j| acc + T::of(j as f64).ln());
        ln_fact + self.coeffs[g].ln() - T::of(g as f64) * self.ln_scale
    }

    /// h^{(g)}(s).
    pub fn derivative(&self, g: usize) -> T {
        if g == 0 {
            return self.coeffs[0];
        }
        if self.coeffs[g] == T::zero() {
            return T::zero();
        }
        self.ln_derivative(g).exp()
    }

    /// (h(s), h'(s), …, h^{(K)}(s)).
    pub fn derivatives(&self) -> Vec<T> {
        (0..=self.order()).map(|g| self.derivative(g)).collect()
    }

    /// The jet of `law.pgf ∘ h` at the same base point.
    pub fn compose_law(&self, law: &OffspringLaw) -> Self {
        let k = self.order();
        let x = self.value();
        let mut fact = T::one();
        let mut outer = Vec::with_capacity(k + 1);
        for i in 0..=k {
            if i > 0 {
                fact = fact * T::of(i as f64);
            }
            outer.push(law.deriv_raw(i, x) / fact);
        }
        // Horner in the increment δ(ε) = h(s + λε) − h(s), which has no constant term.
        let delta = &self.coeffs;
        let mut acc = vec![T::zero(); k + 1];
        acc[0] = outer[k];
        let mut next = vec![T::zero(); k + 1];
        for i in (0..k).rev() {
            next[0] = outer[i];
            for j in 1..=k {
                let mut sum = T::zero();
                for l in 1..=j {
                    sum = sum + delta[l] * acc[j - l];
                }
                next[j] = sum;
            }
            std::mem::swap(&mut acc, &mut next);
        }
        let mut out = Jet { point: self.point, coeffs: acc, ln_scale: self.ln_scale };
        out.renormalize();
        out
    }

    fn renormalize(&mut self) {
        if self.order() == 0 {
            return;
        }
        let r = self.coeffs[1];
        if !(r > T::zero()) || !r.is_finite() {
            return;
        }
        let mut pow = T::one();
        for g in 1..self.coeffs.len() {
            pow = pow * r;
            self.coeffs[g] = self.coeffs[g] / pow;
        }
        self.ln_scale = self.ln_scale - r.ln();
    }
}
