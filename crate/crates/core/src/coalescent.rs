//! Sample genealogies: partition processes, split times, permuted times, topology.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::env::EnvSummary;
use crate::error::{Error, Result};
use crate::sampler::draw::sample_distinct;
use crate::sampler::SpineSkeleton;
use crate::tree::{Genealogy, SpinedTree};

/// k distinct generation-n individuals, uniformly without replacement, in random order.
pub fn uniform_leaf_sample<R: Rng + ?Sized>(tree: &Genealogy, n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let z = tree.census(n)?;
    if z < k {
        return Err(Error::Precondition(format!("generation {n} has {z} individuals, need {k}")));
    }
    Ok(sample_distinct(rng, z, k))
}

/// Forward-time split: the block carried by one individual of `generation` is divided
/// among distinct children.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SplitEvent {
    pub generation: usize,
    /// Sample labels (0-based) in the block, sorted.
    pub block: Vec<usize>,
    /// Child blocks, each sorted, ordered by smallest member.
    pub children: Vec<Vec<usize>>,
}

/// One step of the partition chain: the partition before the split and which block splits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitStep {
    pub generation: usize,
    /// Blocks before the split, ordered by smallest member.
    pub before: Vec<Vec<usize>>,
    /// Index in `before` of the splitting block.
    pub split_block: usize,
    pub child_sizes: Vec<usize>,
}

/// Genealogy of k sampled individuals at generation n.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CoalescentRecord {
    pub k: usize,
    pub n: usize,
    /// Splits in generation order (ties ordered by smallest member).
    pub splits: Vec<SplitEvent>,
    /// B_1 ≤ … ≤ B_{k−1}.
    pub times: Vec<usize>,
    /// B̃: a uniform random permutation of `times`.
    pub permuted: Vec<usize>,
}

/// ψ_i (or B_i) = max{m : blocks(m) ≤ i} from split events, i = 1..k−1.
fn times_from_splits(k: usize, splits: &[(usize, usize)]) -> Vec<usize> {
    let mut sorted = splits.to_vec();
    sorted.sort_by_key(|s| s.0);
    let mut times = Vec::with_capacity(k.saturating_sub(1));
    let mut count = 1usize;
    for (m, g) in sorted {
        for _ in count..count + g - 1 {
            times.push(m);
        }
        count += g - 1;
    }
    times.truncate(k.saturating_sub(1));
    times
}

impl CoalescentRecord {
    /// v_m: number of distinct ancestors at generation m.
    pub fn block_count(&self, m: usize) -> usize {
        1 + self.splits.iter().filter(|s| s.generation < m).map(|s| s.children.len() - 1).sum::<usize>()
    }

    /// True when every split is binary.
    pub fn binary(&self) -> bool {
        self.splits.iter().all(|s| s.children.len() == 2)
    }

    /// Steps of the partition chain in forward order.
    pub fn split_steps(&self) -> Vec<SplitStep> {
        let mut blocks: Vec<Vec<usize>> = vec![(0..self.k).collect()];
        let mut out = Vec::with_capacity(self.splits.len());
        for s in &self.splits {
            let idx = blocks.iter().position(|b| *b == s.block).expect("split block present");
            out.push(SplitStep {
                generation: s.generation,
                before: blocks.clone(),
                split_block: idx,
                child_sizes: s.children.iter().map(Vec::len).collect(),
            });
            blocks.remove(idx);
            blocks.extend(s.children.iter().cloned());
            blocks.sort_by_key(|b| b[0]);
        }
        out
    }

    /// Topology code: splits in order as `size>a+b`, child sizes ascending, `;`-separated.
    pub fn topology_code(&self) -> String {
        topology_code(&self.splits)
    }

    /// Unordered sizes of the first split, ascending.
    pub fn first_split_sizes(&self) -> Option<Vec<usize>> {
        self.splits.first().map(|s| {
            let mut sizes: Vec<usize> = s.children.iter().map(Vec::len).collect();
            sizes.sort_unstable();
            sizes
        })
    }
}

fn topology_code(splits: &[SplitEvent]) -> String {
    let parts: Vec<String> = splits
        .iter()
        .map(|s| {
            let mut sizes: Vec<usize> = s.children.iter().map(Vec::len).collect();
            sizes.sort_unstable();
            let sizes: Vec<String> = sizes.iter().map(|x| x.to_string()).collect();
            format!("{}>{}", s.block.len(), sizes.join("+"))
        })
        .collect();
    parts.join(";")
}

/// Split events of the lines ending at `leaves` (distinct generation-n indices).
fn ancestral_splits(tree: &Genealogy, leaves: &[usize]) -> Result<Vec<SplitEvent>> {
    let n = tree.height();
    let z = tree.population(n);
    let mut seen = leaves.to_vec();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) || seen.last().is_some_and(|&l| l >= z) {
        return Err(Error::InvalidInput("leaves must be distinct generation-n individuals".into()));
    }
    // (ancestor index, members), kept sorted by ancestor index.
    let mut blocks: Vec<(usize, Vec<usize>)> = leaves.iter().enumerate().map(|(s, &l)| (l, vec![s])).collect();
    blocks.sort_by_key(|b| b.0);
    let mut splits = Vec::new();
    for m in (0..n).rev() {
        if blocks.len() == 1 {
            break;
        }
        let mut merged: Vec<(usize, Vec<usize>)> = Vec::with_capacity(blocks.len());
        let mut pending: Vec<Vec<usize>> = Vec::new();
        for (anc, members) in blocks.drain(..) {
            let p = tree.parent(m + 1, anc);
            match merged.last_mut() {
                Some((q, _)) if *q == p => pending.push(members),
                _ => {
                    flush(&mut merged, &mut pending, m, &mut splits);
                    merged.push((p, Vec::new()));
                    pending.push(members);
                }
            }
        }
        flush(&mut merged, &mut pending, m, &mut splits);
        blocks = merged;
    }
    splits.reverse();
    // Within one generation order by smallest member.
    splits.sort_by(|a, b| a.generation.cmp(&b.generation).then(a.block[0].cmp(&b.block[0])));
    Ok(splits)
}

fn flush(merged: &mut [(usize, Vec<usize>)], pending: &mut Vec<Vec<usize>>, m: usize, splits: &mut Vec<SplitEvent>) {
    let Some(last) = merged.last_mut() else {
        return;
    };
    let mut children: Vec<Vec<usize>> = std::mem::take(pending);
    let mut block: Vec<usize> = children.iter().flatten().copied().collect();
    block.sort_unstable();
    if children.len() >= 2 {
        for c in children.iter_mut() {
            c.sort_unstable();
        }
        children.sort_by_key(|c| c[0]);
        splits.push(SplitEvent { generation: m, block: block.clone(), children });
    }
    last.1 = block;
}

/// Coalescent record of `leaves`, with B̃ drawn from `rng`.
pub fn coalescent_record<R: Rng + ?Sized>(tree: &Genealogy, leaves: &[usize], rng: &mut R) -> Result<CoalescentRecord> {
    let k = leaves.len();
    let splits = ancestral_splits(tree, leaves)?;
    let pairs: Vec<(usize, usize)> = splits.iter().map(|s| (s.generation, s.children.len())).collect();
    let times = times_from_splits(k, &pairs);
    let mut permuted = times.clone();
    permuted.shuffle(rng);
    Ok(CoalescentRecord { k, n: tree.height(), splits, times, permuted })
}

/// Coalescent record without the permutation (B̃ = B).
pub fn coalescent_record_unpermuted(tree: &Genealogy, leaves: &[usize]) -> Result<CoalescentRecord> {
    let k = leaves.len();
    let splits = ancestral_splits(tree, leaves)?;
    let pairs: Vec<(usize, usize)> = splits.iter().map(|s| (s.generation, s.children.len())).collect();
    let times = times_from_splits(k, &pairs);
    Ok(CoalescentRecord { k, n: tree.height(), splits, permuted: times.clone(), times })
}

/// Spine split times of a tree in 𝒯̂_n^k.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SpineSplitRecord {
    pub k: usize,
    /// ψ_1 ≤ … ≤ ψ_{k−1}, repeated when a split creates more than two groups.
    pub psi: Vec<usize>,
    /// ψ̃: uniform random permutation of `psi`.
    pub permuted: Vec<usize>,
    /// Γ_i = {ψ_i ≠ ψ_{i−1}} for i = 2..k−1.
    pub gamma: Vec<bool>,
    /// D_k: all split times distinct (only binary splits).
    pub all_distinct: bool,
    /// Group sizes of each split in generation order.
    pub group_sizes: Vec<Vec<usize>>,
    pub topology: String,
}

impl SpineSplitRecord {
    fn from_splits<R: Rng + ?Sized>(k: usize, splits: &[SplitEvent], rng: &mut R) -> Self {
        let pairs: Vec<(usize, usize)> = splits.iter().map(|s| (s.generation, s.children.len())).collect();
        let psi = times_from_splits(k, &pairs);
        let mut permuted = psi.clone();
        permuted.shuffle(rng);
        let gamma: Vec<bool> = psi.windows(2).map(|w| w[0] != w[1]).collect();
        let all_distinct = splits.iter().all(|s| s.children.len() == 2) && gamma.iter().all(|&g| g);
        let group_sizes = splits.iter().map(|s| s.children.iter().map(Vec::len).collect()).collect();
        SpineSplitRecord { k, psi, permuted, gamma, all_distinct, group_sizes, topology: topology_code(splits) }
    }

    /// Record of a sampled skeleton (spine ids are the sample labels).
    pub fn from_skeleton<R: Rng + ?Sized>(skeleton: &SpineSkeleton, rng: &mut R) -> Self {
        let mut splits: Vec<SplitEvent> = skeleton
            .splits
            .iter()
            .map(|s| {
                let mut block = s.spines.clone();
                block.sort_unstable();
                let mut children: Vec<Vec<usize>> = s
                    .groups
                    .iter()
                    .map(|g| {
                        let mut g = g.clone();
                        g.sort_unstable();
                        g
                    })
                    .collect();
                children.sort_by_key(|c| c[0]);
                SplitEvent { generation: s.generation, block, children }
            })
            .collect();
        splits.sort_by(|a, b| a.generation.cmp(&b.generation).then(a.block[0].cmp(&b.block[0])));
        Self::from_splits(skeleton.k, &splits, rng)
    }
}

/// ψ_i from the mark counts of a spined tree whose spines all end distinctly at height n.
pub fn spine_split_record<R: Rng + ?Sized>(spined: &SpinedTree, rng: &mut R) -> Result<SpineSplitRecord> {
    if !spined.is_hat() {
        return Err(Error::InvalidInput("spines must end at distinct height-n leaves".into()));
    }
    let leaves = spined.spine_leaves().expect("alive spines");
    let splits = ancestral_splits(spined.tree(), &leaves)?;
    Ok(SpineSplitRecord::from_splits(spined.k(), &splits, rng))
}

/// Frequency with a binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_hits(hits: usize, total: usize) -> Self {
        let p = hits as f64 / total as f64;
        Estimate { value: p, std_error: (p * (1.0 - p) / total as f64).sqrt(), count: total }
    }
}

/// One row of an empirical tail table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub t: f64,
    /// S_n(t).
    pub generation: usize,
    pub estimate: Estimate,
}

/// P(B̃_1 ≥ S_n(t)) for each grid point.
pub fn empirical_tail(records: &[CoalescentRecord], summary: &EnvSummary, grid: &[f64]) -> Result<Vec<TailRow>> {
    if records.is_empty() {
        return Err(Error::Precondition("no records".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Precondition("grid values must be distinct".into()));
    }
    grid.iter()
        .map(|&t| {
            let s = summary.time_change(t)?;
            let hits = records.iter().filter(|r| r.permuted.first().is_some_and(|&b| b >= s)).count();
            Ok(TailRow { t, generation: s, estimate: Estimate::from_hits(hits, records.len()) })
        })
        .collect()
}

/// P(B̃_i ≥ S_n(t_i) for all i).
pub fn empirical_joint_tail(records: &[CoalescentRecord], summary: &EnvSummary, times: &[f64]) -> Result<Estimate> {
    if records.is_empty() {
        return Err(Error::Precondition("no records".into()));
    }
    let gens = times.iter().map(|&t| summary.time_change(t)).collect::<Result<Vec<_>>>()?;
    let hits = records
        .iter()
        .filter(|r| r.permuted.iter().zip(&gens).all(|(&b, &s)| b >= s))
        .count();
    Ok(Estimate::from_hits(hits, records.len()))
}

/// Writes `replica,i,B_i,Btilde_i,topology` rows, one per split time.
pub fn write_record_stream<W: Write>(out: W, records: &[(u64, CoalescentRecord)]) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidInput(format!("record stream: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replica", "i", "B_i", "Btilde_i", "topology"]).map_err(io)?;
    for (replica, r) in records {
        let code = r.topology_code();
        for (i, (b, bt)) in r.times.iter().zip(&r.permuted).enumerate() {
            w.write_record([replica.to_string(), (i + 1).to_string(), b.to_string(), bt.to_string(), code.clone()])
                .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("record stream: {e}")))?;
    Ok(())
}
