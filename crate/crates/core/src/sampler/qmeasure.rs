//! The k-spine measure Q_n^(e,k,θ): split plans, forward construction and an
//! importance-sampling cross-check.

use rand::seq::SliceRandom;
use rand::Rng;

use super::draw::sample_distinct;
use super::plain::GwSampler;
use super::tilted::TiltedLaw;
use super::SamplerLimits;
use crate::env::{jet_sweep, Environment};
use crate::error::{domain, Error, Result};
use crate::tree::{SpineTip, SpinedTree};

/// Integer partition of j into at least two parts, with its combinatorial log weight
/// −Σ_r ln(g_r!) − Σ_i ln(k_i!), g_r counting parts equal to r.
#[derive(Clone, Debug, PartialEq)]
struct Partition {
    parts: Vec<usize>,
    ln_comb: f64,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

fn proper_partitions(j: usize) -> Vec<Partition> {
    fn rec(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        for p in (1..=max.min(rest)).rev() {
            cur.push(p);
            rec(rest - p, p, cur, out);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    rec(j, j, &mut Vec::new(), &mut all);
    all.into_iter()
        .filter(|p| p.len() >= 2)
        .map(|parts| {
            let mut ln_comb = -parts.iter().map(|&p| ln_factorial(p)).sum::<f64>();
            let mut r = 0;
            while r < parts.len() {
                let run = parts[r..].iter().take_while(|&&x| x == parts[r]).count();
                ln_comb -= ln_factorial(run);
                r += run;
            }
            Partition { parts, ln_comb }
        })
        .collect()
}

/// One outcome of the first spine split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPlan {
    /// ψ₁: the spines are together up to this generation and split into its children.
    pub generation: usize,
    /// Group sizes k_1 ≥ … ≥ k_g.
    pub groups: Vec<usize>,
    pub probability: f64,
}

impl SplitPlan {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}

/// Factorial-moment tables for one (environment, horizon, θ), shared by every level of
/// the recursive construction.
#[derive(Clone, Debug)]
pub struct QContext {
    env: Environment,
    n: usize,
    k: usize,
    theta: f64,
    /// f_{m,n}(e^{−θ}), m = 0..=n.
    tail: Vec<f64>,
    /// ln E^(e_m)[e^{−θ Z_{n−m}} Z_{n−m}^[j]], m = 0..=n, j = 0..=k.
    ln_moment: Vec<Vec<f64>>,
    /// ln ∂^g f_{m+1}(f_{m+1,n}(e^{−θ})), m = 0..n, g = 0..=k.
    ln_step: Vec<Vec<f64>>,
    /// Proper partitions of j, j = 0..=k.
    partitions: Vec<Vec<Partition>>,
}

impl QContext {
    pub fn new(env: &Environment, n: usize, k: usize, theta: f64) -> Result<Self> {
        if k == 0 {
            return Err(domain("the spine measure needs k ≥ 1"));
        }
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(domain(format!("θ = {theta} must be finite and ≥ 0")));
        }
        let x = (-theta).exp();
        let jets = jet_sweep(env, n, x, k)?;
        let tail: Vec<f64> = jets.iter().map(|j| j.value()).collect();
        let ln_moment: Vec<Vec<f64>> = jets
            .iter()
            .map(|jet| (0..=k).map(|j| -theta * j as f64 + jet.ln_derivative(j)).collect())
            .collect();
        if ln_moment[0][k] == f64::NEG_INFINITY || ln_moment[0][k].is_nan() {
            return Err(Error::EmptyMeasure(format!("E[e^(-θZ_n) Z_n^[{k}]] = 0")));
        }
        let ln_step = (0..n)
            .map(|m| {
                let law = env.law(m + 1)?;
                Ok((0..=k).map(|g| law.deriv_raw(g, tail[m + 1]).ln()).collect())
            })
            .collect::<Result<_>>()?;
        let partitions = (0..=k).map(proper_partitions).collect();
        Ok(QContext { env: env.clone(), n, k, theta, tail, ln_moment, ln_step, partitions })
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// f_{m,n}(e^{−θ}).
    pub fn tail_value(&self, m: usize) -> f64 {
        self.tail[m]
    }

    /// ln E^(e_m)[e^{−θ Z_{n−m}} Z_{n−m}^[j]].
    pub fn ln_factorial_moment(&self, m: usize, j: usize) -> f64 {
        self.ln_moment[m][j]
    }

    /// E[e^{−θ Z_n} Z_n^[k]], the normalizer of the measure.
    pub fn normalizer(&self) -> f64 {
        self.ln_moment[0][self.k].exp()
    }

    /// Q(ψ ≥ m) for a block of j spines carried by one particle of generation a.
    pub fn ln_block_survival(&self, a: usize, j: usize, m: usize) -> f64 {
        debug_assert!(a <= m && m <= self.n);
        if m == a {
            return 0.0;
        }
        let f = &self.ln_moment;
        let v = f[a][1] - f[m][1] + f[m][j] - f[a][j];
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v.min(0.0)
        }
    }

    /// Q(ψ₁ ≥ m) for the full set of k spines.
    pub fn psi1_survival(&self, m: usize) -> f64 {
        self.ln_block_survival(0, self.k, m).exp()
    }

    /// Q(ψ₁ = m).
    pub fn psi1_probability(&self, m: usize) -> f64 {
        if m >= self.n {
            return if self.k == 1 && m == self.n { 1.0 } else { 0.0 };
        }
        (self.psi1_survival(m) - self.psi1_survival(m + 1)).max(0.0)
    }

    fn ln_plan_conditional(&self, m: usize, part: &Partition) -> f64 {
        let g = part.parts.len();
        self.ln_step[m][g] + part.parts.iter().map(|&p| self.ln_moment[m + 1][p]).sum::<f64>() + part.ln_comb
    }

    /// ln probability that a block of j spines at generation a splits at m into `parts`.
    fn ln_plan(&self, a: usize, j: usize, m: usize, part: &Partition) -> f64 {
        let f = &self.ln_moment;
        ln_factorial(j) + self.ln_plan_conditional(m, part) + f[a][1] - f[m][1] - f[a][j]
    }

    /// Split-plan law for the root block; the masses sum to 1.
    pub fn split_plans(&self) -> Vec<SplitPlan> {
        let k = self.k;
        let mut out = Vec::new();
        if k < 2 {
            return out;
        }
        for m in 0..self.n {
            for part in &self.partitions[k] {
                let p = self.ln_plan(0, k, m, part).exp();
                if p > 0.0 {
                    out.push(SplitPlan { generation: m, groups: part.parts.clone(), probability: p });
                }
            }
        }
        out
    }

    /// Split generation of a block of j ≥ 2 spines at generation a, by inversion of the
    /// block survival function.
    pub fn sample_split_generation<R: Rng + ?Sized>(&self, a: usize, j: usize, rng: &mut R) -> usize {
        debug_assert!(j >= 2 && a < self.n);
        let ln_u = rng.random::<f64>().ln();
        // Largest m in [a, n−1] with survival(m) > u.
        let (mut lo, mut hi) = (a, self.n - 1);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if self.ln_block_survival(a, j, mid) > ln_u {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Group sizes for a block of j spines splitting at generation m.
    pub fn sample_groups<R: Rng + ?Sized>(&self, m: usize, j: usize, rng: &mut R) -> Vec<usize> {
        let parts = &self.partitions[j];
        let ln_w: Vec<f64> = parts.iter().map(|p| self.ln_plan_conditional(m, p)).collect();
        let top = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = ln_w.iter().map(|x| (x - top).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (p, wi) in parts.iter().zip(&w) {
            if u < *wi {
                return p.parts.clone();
            }
            u -= wi;
        }
        parts.iter().zip(&w).rev().find(|(_, wi)| **wi > 0.0).expect("positive weight").0.parts.clone()
    }

    /// Split events of all spines, without the surrounding tree.
    pub fn sample_skeleton<R: Rng + ?Sized>(&self, rng: &mut R) -> SpineSkeleton {
        let mut splits = Vec::new();
        let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();
        if self.k >= 2 {
            stack.push((0, (0..self.k).collect()));
        }
        while let Some((a, mut ids)) = stack.pop() {
            let j = ids.len();
            let m = self.sample_split_generation(a, j, rng);
            let sizes = self.sample_groups(m, j, rng);
            ids.shuffle(rng);
            let mut groups = Vec::with_capacity(sizes.len());
            let mut at = 0;
            for s in sizes {
                let group = ids[at..at + s].to_vec();
                at += s;
                if s >= 2 {
                    stack.push((m + 1, group.clone()));
                }
                groups.push(group);
            }
            splits.push(SkeletonSplit { generation: m, spines: ids, groups });
        }
        splits.sort_by_key(|s| s.generation);
        SpineSkeleton { k: self.k, horizon: self.n, splits }
    }
}

/// One spine split: the particle of generation `generation` carrying `spines` passes
/// them to distinct children in `groups`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSplit {
    pub generation: usize,
    pub spines: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
}

/// Spine split events in generation order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpineSkeleton {
    pub k: usize,
    pub horizon: usize,
    pub splits: Vec<SkeletonSplit>,
}

/// Split-plan law of the first spine split under Q_n^(e,k,θ).
pub fn split_plan_distribution(env: &Environment, n: usize, k: usize, theta: f64) -> Result<Vec<SplitPlan>> {
    if k < 2 {
        return Err(domain("split plans need k ≥ 2"));
    }
    let ctx = QContext::new(env, n, k, theta)?;
    let plans = ctx.split_plans();
    let total: f64 = plans.iter().map(|p| p.probability).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Consistency(format!("split plans sum to {total}")));
    }
    Ok(plans)
}

/// Forward sampler of whole spined trees under Q_n^(e,k,θ).
#[derive(Clone, Debug)]
pub struct QTreeSampler {
    ctx: QContext,
    /// laws[m][g] = q^(g,θ)_{m+1}; None where the tilt is degenerate.
    laws: Vec<Vec<Option<TiltedLaw>>>,
    limits: SamplerLimits,
}

enum Carrier {
    Free,
    Marked { spines: Vec<usize>, split_at: usize },
}

impl QTreeSampler {
    pub fn new(ctx: QContext) -> Result<Self> {
        let n = ctx.n;
        let laws = (0..n)
            .map(|m| {
                let law = ctx.env.law(m + 1)?;
                Ok((0..=ctx.k)
                    .map(|g| TiltedLaw::build(law, m, g, ctx.theta, ctx.tail[m + 1]).ok())
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(QTreeSampler { ctx, laws, limits: SamplerLimits::default() })
    }

    pub fn with_limits(mut self, limits: SamplerLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn context(&self) -> &QContext {
        &self.ctx
    }

    fn law(&self, m: usize, g: usize) -> Result<&TiltedLaw> {
        self.laws[m][g]
            .as_ref()
            .ok_or(Error::DegenerateTilt { generation: m, normalizer: self.ctx.ln_step[m][g].exp() })
    }

    fn block(&self, a: usize, spines: Vec<usize>, rng: &mut (impl Rng + ?Sized)) -> Carrier {
        let split_at = if spines.len() >= 2 { self.ctx.sample_split_generation(a, spines.len(), rng) } else { self.ctx.n };
        Carrier::Marked { spines, split_at }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SpinedTree> {
        let (n, k) = (self.ctx.n, self.ctx.k);
        let mut current = vec![self.block(0, (0..k).collect(), rng)];
        let mut parents = Vec::with_capacity(n);
        let mut total = 1u64;
        for m in 0..n {
            let mut next = Vec::with_capacity(current.len());
            let mut gen = Vec::with_capacity(current.len());
            for (i, carrier) in current.into_iter().enumerate() {
                match carrier {
                    Carrier::Free => {
                        let l = self.law(m, 0)?.sample(rng);
                        gen.extend(std::iter::repeat_n(i as u32, l));
                        next.extend((0..l).map(|_| Carrier::Free));
                    }
                    Carrier::Marked { spines, split_at } if m < split_at => {
                        let l = self.law(m, 1)?.sample(rng);
                        let c = rng.random_range(0..l);
                        gen.extend(std::iter::repeat_n(i as u32, l));
                        let base = next.len();
                        next.extend((0..l).map(|_| Carrier::Free));
                        next[base + c] = Carrier::Marked { spines, split_at };
                    }
                    Carrier::Marked { mut spines, .. } => {
                        let sizes = self.ctx.sample_groups(m, spines.len(), rng);
                        let l = self.law(m, sizes.len())?.sample(rng);
                        let chosen = sample_distinct(rng, l, sizes.len());
                        spines.shuffle(rng);
                        gen.extend(std::iter::repeat_n(i as u32, l));
                        let base = next.len();
                        next.extend((0..l).map(|_| Carrier::Free));
                        let mut at = 0;
                        for (&c, &s) in chosen.iter().zip(&sizes) {
                            next[base + c] = self.block(m + 1, spines[at..at + s].to_vec(), rng);
                            at += s;
                        }
                    }
                }
            }
            total += gen.len() as u64;
            if total > self.limits.population_cap {
                return Err(Error::Resource { what: "tree population", count: total, cap: self.limits.population_cap });
            }
            parents.push(gen);
            current = next;
        }
        let mut tips = vec![SpineTip::Alive(usize::MAX); k];
        for (i, carrier) in current.into_iter().enumerate() {
            if let Carrier::Marked { spines, .. } = carrier {
                if spines.len() != 1 {
                    return Err(Error::Consistency(format!("{} spines share leaf {i}", spines.len())));
                }
                tips[spines[0]] = SpineTip::Alive(i);
            }
        }
        let tree = crate::tree::Genealogy::from_parents_unchecked(parents);
        Ok(SpinedTree::from_parts_unchecked(tree, tips))
    }
}

pub fn sample_q_tree<R: Rng + ?Sized>(env: &Environment, n: usize, k: usize, theta: f64, rng: &mut R) -> Result<SpinedTree> {
    QTreeSampler::new(QContext::new(env, n, k, theta)?)?.sample(rng)
}

/// A tree under P^(e) with k uniformly placed distinct spines and its importance weight
/// e^{−θ Z_n} Z_n^[k] relative to Q_n^(e,k,θ).
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceDraw {
    pub tree: SpinedTree,
    pub weight: f64,
    pub ln_weight: f64,
    /// Trees drawn until Z_n ≥ k.
    pub attempts: u64,
}

pub fn importance_sample_q<R: Rng + ?Sized>(
    env: &Environment,
    n: usize,
    k: usize,
    theta: f64,
    rng: &mut R,
) -> Result<ImportanceDraw> {
    ImportanceSampler::new(env, n, k, theta)?.sample(rng)
}

/// Repeated importance draws for one instance.
#[derive(Clone, Debug)]
pub struct ImportanceSampler {
    gw: GwSampler,
    k: usize,
    theta: f64,
}

impl ImportanceSampler {
    pub fn new(env: &Environment, n: usize, k: usize, theta: f64) -> Result<Self> {
        if !(theta >= 0.0) {
            return Err(domain(format!("θ = {theta} must be ≥ 0")));
        }
        Ok(ImportanceSampler { gw: GwSampler::new(env, n)?, k, theta })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ImportanceDraw> {
        let (tree, attempts) = self.gw.sample_surviving(rng, self.k.max(1))?;
        let z = tree.population(self.gw.height());
        let leaves = sample_distinct(rng, z, self.k);
        let ln_weight = -self.theta * z as f64 + (0..self.k).map(|i| ((z - i) as f64).ln()).sum::<f64>();
        let tree = SpinedTree::from_leaves(tree, &leaves)?;
        Ok(ImportanceDraw { tree, weight: ln_weight.exp(), ln_weight, attempts })
    }
}
