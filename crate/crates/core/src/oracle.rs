//! Exhaustive enumeration of small trees with exact probabilities.

use std::collections::BTreeMap;
use std::io::Write;

use crate::coalescent::coalescent_record_unpermuted;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::tree::{Genealogy, SpineTip, SpinedTree};
use crate::Probability;

/// Default cap on enumerated outcomes.
pub const DEFAULT_OUTCOME_CAP: u64 = 10_000_000;

/// One enumerated outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedOutcome<P> {
    /// Canonical serialization of the (spined) tree.
    pub key: String,
    pub tree: Genealogy,
    /// Empty for unspined outcomes.
    pub spines: Vec<SpineTip>,
    pub probability: P,
    pub z_n: usize,
    /// ψ_i (spined outcomes on 𝒯̂) or B_i; empty otherwise.
    pub times: Vec<usize>,
    /// First split (generation, group sizes descending), when spines split.
    pub first_split: Option<(usize, Vec<usize>)>,
    pub topology: String,
}

impl<P: Probability> WeightedOutcome<P> {
    pub fn psi1(&self) -> Option<usize> {
        self.times.first().copied()
    }
}

/// Exact law of ordered trees up to height n: G_n(t) = Π_{|u|<n} q_{|u|+1}(l_u).
pub fn enumerate_trees<P: Probability>(env: &Environment, n: usize) -> Result<Vec<WeightedOutcome<P>>> {
    enumerate_trees_capped(env, n, DEFAULT_OUTCOME_CAP)
}

pub fn enumerate_trees_capped<P: Probability>(env: &Environment, n: usize, cap: u64) -> Result<Vec<WeightedOutcome<P>>> {
    let atoms: Vec<Vec<(u32, P)>> = env
        .laws(n)?
        .iter()
        .enumerate()
        .map(|(m, law)| {
            law.finite_atoms()
                .map(|a| a.into_iter().map(|(j, q)| (j as u32, P::from_real(q))).collect())
                .ok_or_else(|| Error::InvalidInput(format!("law of generation {} has infinite support", m + 1)))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut counts: Vec<Vec<u32>> = Vec::with_capacity(n);
    enumerate_level(&atoms, 0, 1, P::one(), &mut counts, &mut out, cap)?;
    Ok(out)
}

fn enumerate_level<P: Probability>(
    atoms: &[Vec<(u32, P)>],
    m: usize,
    population: usize,
    prob: P,
    counts: &mut Vec<Vec<u32>>,
    out: &mut Vec<WeightedOutcome<P>>,
    cap: u64,
) -> Result<()> {
    if m == atoms.len() {
        if out.len() as u64 >= cap {
            return Err(Error::Resource { what: "enumerated outcomes", count: out.len() as u64 + 1, cap });
        }
        let tree = Genealogy::from_offspring(counts)?;
        let z_n = tree.population(m);
        out.push(WeightedOutcome {
            key: tree.serialize(),
            tree,
            spines: Vec::new(),
            probability: prob,
            z_n,
            times: Vec::new(),
            first_split: None,
            topology: String::new(),
        });
        return Ok(());
    }
    let support = &atoms[m];
    // Odometer over support^population.
    let mut digits = vec![0usize; population];
    loop {
        let mut p = prob.clone();
        let mut next_pop = 0usize;
        let mut gen = Vec::with_capacity(population);
        for &d in &digits {
            let (j, ref q) = support[d];
            p = p * q.clone();
            next_pop += j as usize;
            gen.push(j);
        }
        counts.push(gen);
        enumerate_level(atoms, m + 1, next_pop, p, counts, out, cap)?;
        counts.pop();
        let mut pos = 0;
        loop {
            if pos == population {
                return Ok(());
            }
            digits[pos] += 1;
            if digits[pos] < support.len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Ordered k-tuples of distinct values of 0..z.
fn ordered_tuples(z: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(z: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for x in 0..z {
            if !cur.contains(&x) {
                cur.push(x);
                rec(z, k, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(z, k, &mut Vec::new(), &mut out);
    out
}

fn spined_outcome<P: Probability>(tree: &Genealogy, leaves: &[usize], probability: P) -> Result<WeightedOutcome<P>> {
    let record = coalescent_record_unpermuted(tree, leaves)?;
    let first_split = record.splits.first().map(|s| {
        let mut sizes: Vec<usize> = s.children.iter().map(Vec::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        (s.generation, sizes)
    });
    let spined = SpinedTree::from_leaves(tree.clone(), leaves)?;
    Ok(WeightedOutcome {
        key: spined.serialize(),
        tree: tree.clone(),
        spines: spined.tips().to_vec(),
        probability,
        z_n: tree.population(tree.height()),
        topology: record.topology_code(),
        times: record.times,
        first_split,
    })
}

/// Exact Q_n^(e,k,θ) over (tree, ordered spine leaves).
#[derive(Clone, Debug)]
pub struct QDistribution<P> {
    pub outcomes: Vec<WeightedOutcome<P>>,
    /// Σ_t e^{−θ X_n(t)} X_n(t)^[k] G_n(t) = E[e^{−θZ_n} Z_n^[k]].
    pub normalizer: P,
}

impl<P: Probability> QDistribution<P> {
    /// Law of ψ₁.
    pub fn psi1_law(&self) -> BTreeMap<usize, P> {
        marginal(&self.outcomes, |o| o.psi1())
    }

    /// Law of the first split plan (generation, sizes descending).
    pub fn split_plan_law(&self) -> BTreeMap<(usize, Vec<usize>), P> {
        marginal(&self.outcomes, |o| o.first_split.clone())
    }

    pub fn z_law(&self) -> BTreeMap<usize, P> {
        marginal(&self.outcomes, |o| Some(o.z_n))
    }

    /// Probability per canonical key.
    pub fn by_key(&self) -> BTreeMap<String, P> {
        marginal(&self.outcomes, |o| Some(o.key.clone()))
    }
}

/// Sums probabilities by a key; outcomes mapped to None are skipped.
pub fn marginal<P: Probability, K: Ord, F: Fn(&WeightedOutcome<P>) -> Option<K>>(
    outcomes: &[WeightedOutcome<P>],
    key: F,
) -> BTreeMap<K, P> {
    let mut map: BTreeMap<K, P> = BTreeMap::new();
    for o in outcomes {
        if let Some(k) = key(o) {
            let e = map.entry(k).or_insert_with(P::zero);
            *e = e.clone() + o.probability.clone();
        }
    }
    map
}

fn discount<P: Probability>(theta: f64, z: usize) -> P {
    if theta == 0.0 {
        P::one()
    } else {
        P::from_real((-theta * z as f64).exp())
    }
}

pub fn exact_q_distribution<P: Probability>(env: &Environment, n: usize, k: usize, theta: f64) -> Result<QDistribution<P>> {
    if k == 0 || k > env.max_order() {
        return Err(Error::UnsupportedOrder { order: k, max: env.max_order() });
    }
    let trees = enumerate_trees::<P>(env, n)?;
    let mut raw = Vec::new();
    let mut normalizer = P::zero();
    for t in &trees {
        if t.z_n < k {
            continue;
        }
        let w = t.probability.clone() * discount::<P>(theta, t.z_n);
        for tuple in ordered_tuples(t.z_n, k) {
            normalizer = normalizer + w.clone();
            raw.push(spined_outcome(&t.tree, &tuple, w.clone())?);
        }
    }
    if normalizer == P::zero() {
        return Err(Error::EmptyMeasure(format!("no height-{n} tree has {k} individuals")));
    }
    for o in raw.iter_mut() {
        o.probability = o.probability.clone() / normalizer.clone();
    }
    Ok(QDistribution { outcomes: raw, normalizer })
}

/// Exact law of (B_1..B_{k−1}, topology code) for a uniform k-sample under P(· | Z_n ≥ k).
pub fn exact_sample_coalescent<P: Probability>(
    env: &Environment,
    n: usize,
    k: usize,
) -> Result<BTreeMap<(Vec<usize>, String), P>> {
    let trees = enumerate_trees::<P>(env, n)?;
    let mut map: BTreeMap<(Vec<usize>, String), P> = BTreeMap::new();
    let mut total = P::zero();
    for t in &trees {
        if t.z_n < k {
            continue;
        }
        total = total + t.probability.clone();
        let tuples = ordered_tuples(t.z_n, k);
        let each = t.probability.clone() / P::from_usize(tuples.len()).expect("count");
        for tuple in tuples {
            let r = coalescent_record_unpermuted(&t.tree, &tuple)?;
            let e = map.entry((r.times.clone(), r.topology_code())).or_insert_with(P::zero);
            *e = e.clone() + each.clone();
        }
    }
    if total == P::zero() {
        return Err(Error::EmptyMeasure(format!("P(Z_{n} ≥ {k}) = 0")));
    }
    for v in map.values_mut() {
        *v = v.clone() / total.clone();
    }
    Ok(map)
}

/// Exact P_n^(e,k) over trees with k spines, including graveyard tips.
///
/// Each spine follows a uniformly chosen child at every step and stops at the
/// first childless individual or at generation n, so the weight of a tip is
/// Π 1/l_u over its strict ancestors u.
pub fn enumerate_p_spined<P: Probability>(env: &Environment, n: usize, k: usize) -> Result<Vec<WeightedOutcome<P>>> {
    let trees = enumerate_trees::<P>(env, n)?;
    let mut out = Vec::new();
    for t in &trees {
        let tips = spine_tips::<P>(&t.tree);
        let mut digits = vec![0usize; k];
        'tuples: loop {
            let mut p = t.probability.clone();
            let mut chosen = Vec::with_capacity(k);
            for &d in &digits {
                p = p * tips[d].1.clone();
                chosen.push(tips[d].0);
            }
            let spined = SpinedTree::new(t.tree.clone(), chosen.clone())?;
            out.push(WeightedOutcome {
                key: spined.serialize(),
                tree: t.tree.clone(),
                spines: chosen,
                probability: p,
                z_n: t.z_n,
                times: Vec::new(),
                first_split: None,
                topology: String::new(),
            });
            let mut pos = 0;
            loop {
                if pos == k {
                    break 'tuples;
                }
                digits[pos] += 1;
                if digits[pos] < tips.len() {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
        }
    }
    Ok(out)
}

/// Possible spine end points with their path probabilities.
fn spine_tips<P: Probability>(tree: &Genealogy) -> Vec<(SpineTip, P)> {
    let n = tree.height();
    let mut tips = Vec::new();
    for m in 0..=n {
        for i in 0..tree.population(m) {
            if m < n && tree.offspring(m, i) > 0 {
                continue;
            }
            let mut p = P::one();
            let mut idx = i;
            for g in (1..=m).rev() {
                idx = tree.parent(g, idx);
                p = p / P::from_usize(tree.offspring(g - 1, idx)).expect("count");
            }
            let tip = if m == n { SpineTip::Alive(i) } else { SpineTip::Graveyard { generation: m, index: i } };
            tips.push((tip, p));
        }
    }
    tips
}

/// Checks dQ/dP = g / E[g] on the enumeration: for every outcome of `q` the P-mass
/// times g(t)/E_P[g] must equal its Q-mass. Returns the largest absolute difference.
pub fn q_density_defect<P: Probability>(env: &Environment, n: usize, k: usize, theta: f64) -> Result<f64> {
    let q = exact_q_distribution::<P>(env, n, k, theta)?;
    let p = enumerate_p_spined::<P>(env, n, k)?;
    let mut weighted: BTreeMap<String, P> = BTreeMap::new();
    let mut total = P::zero();
    for o in &p {
        let spined = SpinedTree::from_parts_unchecked(o.tree.clone(), o.spines.clone());
        let g = density_weight::<P>(&spined, theta);
        if g == P::zero() {
            continue;
        }
        let w = o.probability.clone() * g;
        total = total + w.clone();
        let e = weighted.entry(o.key.clone()).or_insert_with(P::zero);
        *e = e.clone() + w;
    }
    if total == P::zero() {
        return Err(Error::EmptyMeasure("E_P[g] = 0".into()));
    }
    let qk = q.by_key();
    let mut worst = 0.0f64;
    for key in weighted.keys().chain(qk.keys()) {
        let a = weighted.get(key).map(|w| w.clone() / total.clone()).unwrap_or_else(P::zero);
        let b = qk.get(key).cloned().unwrap_or_else(P::zero);
        worst = worst.max((a.approx() - b.approx()).abs());
    }
    Ok(worst)
}

/// g(t, v) = 1{distinct tips at height n} e^{−θ X_n} Π_i Π_{u ∈ v_i, |u| < n} l_u.
pub fn density_weight<P: Probability>(spined: &SpinedTree, theta: f64) -> P {
    let tree = spined.tree();
    let n = tree.height();
    let mut leaves = Vec::with_capacity(spined.k());
    for tip in spined.tips() {
        match *tip {
            SpineTip::Alive(i) if !leaves.contains(&i) => leaves.push(i),
            _ => return P::zero(),
        }
    }
    let mut w = discount::<P>(theta, tree.population(n));
    for &leaf in &leaves {
        let mut idx = leaf;
        for g in (1..=n).rev() {
            idx = tree.parent(g, idx);
            w = w * P::from_usize(tree.offspring(g - 1, idx)).expect("count");
        }
    }
    w
}

/// E[e^{−θ Z_n} Z_n^[j]] for j = 0..=max_j, computed by enumeration.
pub fn exact_factorial_moments<P: Probability>(env: &Environment, n: usize, theta: f64, max_j: usize) -> Result<Vec<P>> {
    let trees = enumerate_trees::<P>(env, n)?;
    let mut out = vec![P::zero(); max_j + 1];
    for t in &trees {
        let w = t.probability.clone() * discount::<P>(theta, t.z_n);
        let mut falling = P::one();
        for (j, slot) in out.iter_mut().enumerate() {
            if j > 0 {
                if t.z_n < j {
                    break;
                }
                falling = falling * P::from_usize(t.z_n + 1 - j).expect("count");
            }
            *slot = slot.clone() + w.clone() * falling.clone();
        }
    }
    Ok(out)
}

/// Writes outcomes as CSV: key, probability, z_n, psi1, times, topology.
pub fn write_outcomes_csv<P: Probability, W: Write>(outcomes: &[WeightedOutcome<P>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(["key", "probability", "z_n", "psi1", "times", "topology"]).map_err(io)?;
    for o in outcomes {
        let times: Vec<String> = o.times.iter().map(usize::to_string).collect();
        w.write_record([
            o.key.replace('\n', ";"),
            format!("{:e}", o.probability.approx()),
            o.z_n.to_string(),
            o.psi1().map(|p| p.to_string()).unwrap_or_default(),
            times.join(" "),
            o.topology.clone(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    Ok(())
}
