//! Size-biased and discounted offspring laws q^(g,θ).

use rand::Rng;

use super::draw::{DiscreteTable, Shape};
use crate::env::{compose_pgf, Environment};
use crate::error::{domain, Error, Result};
use crate::law::OffspringLaw;

/// Normalizers below this are treated as zero.
const MIN_NORMALIZER: f64 = 1e-300;

/// q^(g,θ)_{m+1}(ℓ) = q_{m+1}(ℓ) ℓ^[g] y^{ℓ−g} / ∂^g f_{m+1}(y), y = f_{m+1,n}(e^{−θ}).
#[derive(Clone, Debug, PartialEq)]
pub struct TiltedLaw {
    generation: usize,
    groups: usize,
    theta: f64,
    tail_value: f64,
    table: DiscreteTable,
}

impl TiltedLaw {
    /// Tilt of `law` (the law of generation m + 1) at tail value y.
    pub fn build(law: &OffspringLaw, generation: usize, groups: usize, theta: f64, y: f64) -> Result<Self> {
        let g = groups;
        let normalizer = law.deriv_raw(g, y);
        if !(normalizer > MIN_NORMALIZER) {
            return Err(Error::DegenerateTilt { generation, normalizer });
        }
        let shape = match law {
            OffspringLaw::Poisson { rate } => Shape::Poisson(rate * y),
            OffspringLaw::Binomial { trials, p } => {
                let n = *trials as usize;
                Shape::Binomial(n - g, p * y / (1.0 - p + p * y))
            }
            OffspringLaw::LinearFractional { p0, b } => {
                if g == 0 {
                    let rest = (1.0 - p0) * (1.0 - b) * y / (1.0 - b * y);
                    Shape::LinearFractional(p0 / (p0 + rest), b * y)
                } else {
                    Shape::NegBinomial(g + 1, b * y)
                }
            }
            OffspringLaw::Explicit { probs } => Shape::Table(
                (g..probs.len())
                    .map(|l| {
                        let falling = ((l - g + 1)..=l).fold(1.0, |f, i| f * i as f64);
                        probs[l] * falling * y.powi((l - g) as i32)
                    })
                    .collect(),
            ),
        };
        let table = DiscreteTable::from_weights(g, shape.terms(0)?)?;
        Ok(TiltedLaw { generation, groups, theta, tail_value: y, table })
    }

    /// m, the generation of the parent.
    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// f_{m+1,n}(e^{−θ}).
    pub fn tail_value(&self) -> f64 {
        self.tail_value
    }

    pub fn table(&self) -> &DiscreteTable {
        &self.table
    }

    pub fn prob(&self, l: usize) -> f64 {
        self.table.prob(l)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.sample(rng)
    }
}

/// q^(g,θ) for a parent in generation m of a tree observed up to generation n.
pub fn tilted_offspring(env: &Environment, m: usize, n: usize, g: usize, theta: f64) -> Result<TiltedLaw> {
    if m >= n {
        return Err(domain(format!("tilted_offspring needs m < n, got m={m}, n={n}")));
    }
    if g > env.max_order() {
        return Err(Error::UnsupportedOrder { order: g, max: env.max_order() });
    }
    if !(theta >= 0.0) {
        return Err(domain(format!("θ = {theta} must be ≥ 0")));
    }
    let y = compose_pgf(env, m + 1, n, (-theta).exp())?;
    TiltedLaw::build(env.law(m + 1)?, m, g, theta, y)
}
