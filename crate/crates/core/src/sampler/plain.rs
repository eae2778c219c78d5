//! Trees under the plain measure, survival conditioning and P-measure spines.

use rand::Rng;

use super::draw::{DiscreteTable, LawSampler, Shape};
use super::SamplerLimits;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::tree::{Genealogy, SpineTip, SpinedTree};

/// Generation-by-generation sampler for a tree of height n.
#[derive(Clone, Debug)]
pub struct GwSampler {
    laws: Vec<LawSampler>,
    limits: SamplerLimits,
}

impl GwSampler {
    pub fn new(env: &Environment, n: usize) -> Result<Self> {
        let laws = env.laws(n)?.into_iter().map(LawSampler::new).collect::<Result<_>>()?;
        Ok(GwSampler { laws, limits: SamplerLimits::default() })
    }

    pub fn with_limits(mut self, limits: SamplerLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn height(&self) -> usize {
        self.laws.len()
    }

    /// One tree; generations after extinction are empty.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Genealogy> {
        Ok(Genealogy::from_parents_unchecked(self.grow(rng)?))
    }

    /// Parent arrays; stops drawing at extinction.
    fn grow<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<u32>>> {
        let mut parents = Vec::with_capacity(self.laws.len());
        let mut prev = 1usize;
        let mut total = 1u64;
        for law in &self.laws {
            if prev == 0 {
                parents.push(Vec::new());
                continue;
            }
            let mut gen = Vec::new();
            for i in 0..prev {
                let c = law.sample(rng);
                gen.extend(std::iter::repeat_n(i as u32, c));
            }
            total += gen.len() as u64;
            if total > self.limits.population_cap {
                return Err(Error::Resource { what: "tree population", count: total, cap: self.limits.population_cap });
            }
            prev = gen.len();
            parents.push(gen);
        }
        Ok(parents)
    }

    /// Rejection sampling of {Z_n ≥ min_pop}; returns the tree and the attempts used.
    pub fn sample_surviving<R: Rng + ?Sized>(&self, rng: &mut R, min_pop: usize) -> Result<(Genealogy, u64)> {
        for attempt in 1..=self.limits.attempt_cap {
            let parents = self.grow(rng)?;
            let z = parents.last().map_or(1, Vec::len);
            if z >= min_pop {
                return Ok((Genealogy::from_parents_unchecked(parents), attempt));
            }
        }
        Err(Error::Budget { cap: self.limits.attempt_cap })
    }
}

pub fn sample_gw<R: Rng + ?Sized>(env: &Environment, n: usize, rng: &mut R) -> Result<Genealogy> {
    GwSampler::new(env, n)?.sample(rng)
}

pub fn sample_gw_surviving<R: Rng + ?Sized>(
    env: &Environment,
    n: usize,
    rng: &mut R,
    min_pop: usize,
) -> Result<(Genealogy, u64)> {
    GwSampler::new(env, n)?.sample_surviving(rng, min_pop)
}

/// Exact sampler of the reduced tree (individuals with descendants at generation n)
/// under P(· | Z_n > 0).
///
/// Given survival, an individual of generation m has a number of surviving children
/// distributed as q_{m+1} thinned with retention P(line from m+1 reaches n), conditioned
/// to be positive; the reduced tree is therefore itself a branching tree. Its
/// generation-n individuals are exactly Z_n, and sample genealogies of generation-n
/// individuals coincide with those in the full tree.
#[derive(Clone, Debug)]
pub struct SurvivalSampler {
    survival: Vec<f64>,
    tables: Vec<DiscreteTable>,
    limits: SamplerLimits,
}

impl SurvivalSampler {
    pub fn new(env: &Environment, n: usize) -> Result<Self> {
        let laws = env.laws(n)?;
        let mut survival = vec![1.0; n + 1];
        for m in (0..n).rev() {
            survival[m] = laws[m].survival_map(survival[m + 1]);
        }
        if !(survival[0] > 0.0) {
            return Err(Error::EmptyMeasure(format!("P(Z_{n} > 0) = {}", survival[0])));
        }
        let tables = (0..n)
            .map(|m| {
                let thinned = laws[m].thinned(survival[m + 1]);
                DiscreteTable::from_weights(1, Shape::of_law(&thinned).terms(1)?)
            })
            .collect::<Result<_>>()?;
        Ok(SurvivalSampler { survival, tables, limits: SamplerLimits::default() })
    }

    pub fn with_limits(mut self, limits: SamplerLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn height(&self) -> usize {
        self.tables.len()
    }

    /// P(a generation-m individual has descendants at generation n), m = 0..=n.
    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    /// Reduced tree under P(· | Z_n > 0).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Genealogy> {
        let mut parents = Vec::with_capacity(self.tables.len());
        let mut prev = 1usize;
        let mut total = 1u64;
        for table in &self.tables {
            let mut gen = Vec::with_capacity(prev + prev / 8);
            for i in 0..prev {
                let c = table.sample(rng);
                gen.extend(std::iter::repeat_n(i as u32, c));
            }
            total += gen.len() as u64;
            if total > self.limits.population_cap {
                return Err(Error::Resource { what: "tree population", count: total, cap: self.limits.population_cap });
            }
            prev = gen.len();
            parents.push(gen);
        }
        Ok(Genealogy::from_parents_unchecked(parents))
    }

    /// Reduced tree under P(· | Z_n ≥ min_pop), by rejection from the survival-conditioned law.
    pub fn sample_at_least<R: Rng + ?Sized>(&self, rng: &mut R, min_pop: usize) -> Result<(Genealogy, u64)> {
        let n = self.height();
        for attempt in 1..=self.limits.attempt_cap {
            let tree = self.sample(rng)?;
            if tree.population(n) >= min_pop {
                return Ok((tree, attempt));
            }
        }
        Err(Error::Budget { cap: self.limits.attempt_cap })
    }
}

/// Tree with k spines under P_n^(e,k): marks follow uniformly chosen children
/// independently; a carrier without children sends its marks to the graveyard.
pub fn sample_p_spined<R: Rng + ?Sized>(env: &Environment, n: usize, k: usize, rng: &mut R) -> Result<SpinedTree> {
    let tree = GwSampler::new(env, n)?.sample(rng)?;
    let mut tips = Vec::with_capacity(k);
    for _ in 0..k {
        let mut idx = 0usize;
        let mut tip = SpineTip::Alive(0);
        let mut alive = true;
        for m in 0..n {
            let r = tree.children(m, idx);
            if r.is_empty() {
                tip = SpineTip::Graveyard { generation: m, index: idx };
                alive = false;
                break;
            }
            idx = r.start + rng.random_range(0..r.len());
        }
        if alive {
            tip = SpineTip::Alive(idx);
        }
        tips.push(tip);
    }
    Ok(SpinedTree::from_parts_unchecked(tree, tips))
}
