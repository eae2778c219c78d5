//! Ulam–Harris trees stored as per-generation parent arrays, with spines.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use crate::error::{domain, Error, Result};

/// Ulam–Harris label: the sequence of 1-based child ranks from the root.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(Vec<u32>);

impl Label {
    pub fn root() -> Self {
        Label(Vec::new())
    }

    pub fn new(parts: Vec<u32>) -> Result<Self> {
        if parts.contains(&0) {
            return Err(domain("label entries are positive"));
        }
        Ok(Label(parts))
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    /// |u|.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, rank: u32) -> Label {
        let mut v = self.0.clone();
        v.push(rank);
        Label(v)
    }

    pub fn parent(&self) -> Option<Label> {
        if self.0.is_empty() {
            None
        } else {
            Some(Label(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// v ≼ u.
    pub fn is_ancestor_of(&self, other: &Label) -> bool {
        other.0.starts_with(&self.0)
    }

    /// uv.
    pub fn join(&self, other: &Label) -> Label {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Label(v)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        let parts: Vec<String> = self.0.iter().map(|p| p.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

/// A rooted ordered tree restricted to generations 0..=height.
///
/// Individuals of generation m are indexed 0..X_m in Ulam–Harris order; the children of
/// one parent form a contiguous block, so each parent array is non-decreasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Genealogy {
    parents: Vec<Vec<u32>>,
    starts: Vec<Vec<u32>>,
}

impl Genealogy {
    /// The tree {∅} of height 0.
    pub fn root_only() -> Self {
        Genealogy { parents: Vec::new(), starts: Vec::new() }
    }

    /// `parents[m − 1][i]` is the parent of individual i of generation m.
    pub fn from_parents(parents: Vec<Vec<u32>>) -> Result<Self> {
        let mut prev = 1usize;
        for (g, gen) in parents.iter().enumerate() {
            for (i, &p) in gen.iter().enumerate() {
                if p as usize >= prev {
                    return Err(Error::InvalidInput(format!(
                        "generation {}: parent {p} out of range {prev}",
                        g + 1
                    )));
                }
                if i > 0 && gen[i - 1] > p {
                    return Err(Error::InvalidInput(format!("generation {}: parents not in block order", g + 1)));
                }
            }
            prev = gen.len();
        }
        Ok(Self::from_parents_unchecked(parents))
    }

    pub(crate) fn from_parents_unchecked(parents: Vec<Vec<u32>>) -> Self {
        let mut starts = Vec::with_capacity(parents.len());
        let mut prev = 1usize;
        for gen in &parents {
            let mut s = vec![0u32; prev + 1];
            for &p in gen {
                s[p as usize + 1] += 1;
            }
            for j in 0..prev {
                s[j + 1] += s[j];
            }
            prev = gen.len();
            starts.push(s);
        }
        Genealogy { parents, starts }
    }

    /// `counts[m][i]` is the number of children of individual i of generation m, m < height.
    pub fn from_offspring(counts: &[Vec<u32>]) -> Result<Self> {
        let mut parents = Vec::with_capacity(counts.len());
        let mut prev = 1usize;
        for (m, gen) in counts.iter().enumerate() {
            if gen.len() != prev {
                return Err(Error::InvalidInput(format!(
                    "generation {m} has {prev} individuals but {} offspring counts",
                    gen.len()
                )));
            }
            let mut next = Vec::new();
            for (i, &c) in gen.iter().enumerate() {
                next.extend(std::iter::repeat_n(i as u32, c as usize));
            }
            prev = next.len();
            parents.push(next);
        }
        Ok(Self::from_parents_unchecked(parents))
    }

    /// Builds the tree from a label set satisfying the rooted-tree axioms.
    pub fn from_labels(labels: &[Label], height: usize) -> Result<Self> {
        let mut by_gen: Vec<Vec<&Label>> = vec![Vec::new(); height + 1];
        for l in labels {
            if l.len() > height {
                return Err(domain(format!("label {l} deeper than height {height}")));
            }
            by_gen[l.len()].push(l);
        }
        if by_gen[0].len() != 1 {
            return Err(Error::InvalidInput("label set must contain the root exactly once".into()));
        }
        let mut index: HashMap<&Label, usize> = HashMap::new();
        index.insert(by_gen[0][0], 0);
        let mut counts: Vec<Vec<u32>> = Vec::with_capacity(height);
        for g in 1..=height {
            by_gen[g].sort();
            by_gen[g].dedup();
            let mut c = vec![0u32; by_gen[g - 1].len()];
            for (i, l) in by_gen[g].iter().enumerate() {
                let parent = l.parent().expect("non-root");
                let p = *index
                    .get(&parent)
                    .ok_or_else(|| Error::InvalidInput(format!("label {l} has no parent in the set")))?;
                c[p] += 1;
                if *l.parts().last().expect("non-root") != c[p] {
                    return Err(Error::InvalidInput(format!("children of {parent} are not numbered 1..l")));
                }
                index.insert(l, i);
            }
            counts.push(c);
        }
        Self::from_offspring(&counts)
    }

    pub fn height(&self) -> usize {
        self.parents.len()
    }

    /// X_m(t).
    pub fn census(&self, m: usize) -> Result<usize> {
        if m > self.height() {
            return Err(domain(format!("generation {m} above height {}", self.height())));
        }
        Ok(self.population(m))
    }

    /// X_m(t); 0 above the height.
    pub fn population(&self, m: usize) -> usize {
        match m {
            0 => 1,
            m if m > self.height() => 0,
            m => self.parents[m - 1].len(),
        }
    }

    pub fn total_size(&self) -> usize {
        1 + self.parents.iter().map(Vec::len).sum::<usize>()
    }

    /// Parent array of generation m ≥ 1.
    pub fn generation(&self, m: usize) -> &[u32] {
        &self.parents[m - 1]
    }

    pub fn parent(&self, m: usize, i: usize) -> usize {
        self.parents[m - 1][i] as usize
    }

    /// Indices in generation m + 1 of the children of individual i of generation m.
    pub fn children(&self, m: usize, i: usize) -> Range<usize> {
        if m >= self.height() {
            return 0..0;
        }
        let s = &self.starts[m];
        s[i] as usize..s[i + 1] as usize
    }

    /// l_u for u = (m, i).
    pub fn offspring(&self, m: usize, i: usize) -> usize {
        self.children(m, i).len()
    }

    /// Offspring counts of generation m < height.
    pub fn offspring_counts(&self, m: usize) -> Vec<u32> {
        self.starts[m].windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index in generation g ≤ m of the ancestor of (m, i).
    pub fn ancestor(&self, m: usize, i: usize, g: usize) -> usize {
        let mut idx = i;
        for gen in (g + 1..=m).rev() {
            idx = self.parents[gen - 1][idx] as usize;
        }
        idx
    }

    /// Label of individual i of generation m.
    pub fn label(&self, m: usize, i: usize) -> Label {
        let mut parts = vec![0u32; m];
        let mut idx = i;
        for gen in (1..=m).rev() {
            let p = self.parents[gen - 1][idx] as usize;
            parts[gen - 1] = (idx - self.starts[gen - 1][p] as usize + 1) as u32;
            idx = p;
        }
        Label(parts)
    }

    /// Generation-|u| index of u, or None when u ∉ t.
    pub fn locate(&self, u: &Label) -> Option<usize> {
        if u.len() > self.height() {
            return None;
        }
        let mut idx = 0usize;
        for (gen, &rank) in u.parts().iter().enumerate() {
            let r = self.children(gen, idx);
            let off = rank as usize - 1;
            if off >= r.len() {
                return None;
            }
            idx = r.start + off;
        }
        Some(idx)
    }

    pub fn contains(&self, u: &Label) -> bool {
        self.locate(u).is_some()
    }

    /// All labels, generation by generation.
    pub fn labels(&self) -> Vec<Label> {
        let mut out = Vec::with_capacity(self.total_size());
        for m in 0..=self.height() {
            for i in 0..self.population(m) {
                out.push(self.label(m, i));
            }
        }
        out
    }

    /// R_m(t).
    pub fn restrict(&self, m: usize) -> Result<Genealogy> {
        if m > self.height() {
            return Err(domain(format!("restrict to {m} above height {}", self.height())));
        }
        Ok(Genealogy { parents: self.parents[..m].to_vec(), starts: self.starts[..m].to_vec() })
    }

    /// Index ranges per generation (relative generation d ↦ range in generation |u|+d)
    /// of the descendants of (gen, idx).
    fn descendant_ranges(&self, gen: usize, idx: usize) -> Vec<Range<usize>> {
        let mut out = vec![idx..idx + 1];
        for m in gen..self.height() {
            let r = out.last().expect("non-empty").clone();
            let lo = self.starts[m][r.start] as usize;
            let hi = self.starts[m][r.end] as usize;
            out.push(lo..hi);
        }
        out
    }

    /// S_u(t), relabelled to the root; None when u ∉ t.
    pub fn subtree(&self, u: &Label) -> Option<Genealogy> {
        let idx = self.locate(u)?;
        let ranges = self.descendant_ranges(u.len(), idx);
        let mut parents = Vec::with_capacity(ranges.len() - 1);
        for d in 1..ranges.len() {
            let base = ranges[d - 1].start as u32;
            let gen = &self.parents[u.len() + d - 1][ranges[d].clone()];
            parents.push(gen.iter().map(|&p| p - base).collect());
        }
        Some(Self::from_parents_unchecked(parents))
    }

    /// t ⊔_u s: the children of the root of s become children l_u(t)+1, … of u.
    /// Returns t unchanged when u ∉ t.
    pub fn concat(&self, u: &Label, s: &Genealogy) -> Genealogy {
        let Some(u_idx) = self.locate(u) else {
            return self.clone();
        };
        let d = u.len();
        let height = self.height().max(d + s.height());

        #[derive(Clone, Copy)]
        enum Node {
            T(usize),
            S(usize),
            Both(usize, usize),
        }
        let mut current = vec![if d == 0 { Node::Both(0, 0) } else { Node::T(0) }];
        let mut parents = Vec::with_capacity(height);
        for m in 0..height {
            let mut next = Vec::new();
            let mut par = Vec::new();
            for (p, node) in current.iter().enumerate() {
                let (t_idx, s_idx) = match *node {
                    Node::T(i) => (Some(i), None),
                    Node::S(j) => (None, Some(j)),
                    Node::Both(i, j) => (Some(i), Some(j)),
                };
                if let Some(i) = t_idx {
                    for c in self.children(m, i) {
                        par.push(p as u32);
                        next.push(if m + 1 == d && c == u_idx { Node::Both(c, 0) } else { Node::T(c) });
                    }
                }
                if let Some(j) = s_idx {
                    for c in s.children(m - d, j) {
                        par.push(p as u32);
                        next.push(Node::S(c));
                    }
                }
            }
            parents.push(par);
            current = next;
        }
        Self::from_parents_unchecked(parents)
    }

    /// Canonical text form: a header line, then one line of parent indices per generation.
    pub fn serialize(&self) -> String {
        let mut out = format!("gwve-tree {}\n", self.height());
        for gen in &self.parents {
            let line: Vec<String> = gen.iter().map(|p| p.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Genealogy> {
        let (tree, rest) = parse_generations(text)?;
        if rest.iter().any(|l| !l.trim().is_empty()) {
            return Err(Error::Parse("trailing content after generations".into()));
        }
        Ok(tree)
    }
}

fn parse_generations(text: &str) -> Result<(Genealogy, Vec<&str>)> {
    let mut lines = text.split('\n');
    let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))?;
    let height: usize = header
        .strip_prefix("gwve-tree ")
        .and_then(|h| h.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad header {header:?}")))?;
    let mut parents = Vec::with_capacity(height);
    for m in 1..=height {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("missing generation {m}")))?;
        let gen: std::result::Result<Vec<u32>, _> = line.split_whitespace().map(str::parse).collect();
        parents.push(gen.map_err(|e| Error::Parse(format!("generation {m}: {e}")))?);
    }
    Ok((Genealogy::from_parents(parents)?, lines.collect()))
}

/// End point of a spine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpineTip {
    /// Leaf index at the tree height.
    Alive(usize),
    /// Absorbed: the line ended at an individual below the tree height.
    Graveyard { generation: usize, index: usize },
}

impl SpineTip {
    pub fn generation(&self, height: usize) -> usize {
        match *self {
            SpineTip::Alive(_) => height,
            SpineTip::Graveyard { generation, .. } => generation,
        }
    }

    pub fn index(&self) -> usize {
        match *self {
            SpineTip::Alive(i) => i,
            SpineTip::Graveyard { index, .. } => index,
        }
    }
}

/// A genealogy with k spines, each the line from the root to its tip.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinedTree {
    tree: Genealogy,
    tips: Vec<SpineTip>,
}

impl SpinedTree {
    pub fn new(tree: Genealogy, tips: Vec<SpineTip>) -> Result<Self> {
        let h = tree.height();
        for tip in &tips {
            let ok = match *tip {
                SpineTip::Alive(i) => i < tree.population(h),
                SpineTip::Graveyard { generation, index } => generation < h && index < tree.population(generation),
            };
            if !ok {
                return Err(Error::InvalidInput(format!("spine tip {tip:?} not in tree")));
            }
        }
        Ok(SpinedTree { tree, tips })
    }

    /// Spines given as (generation, index) end points.
    pub fn from_nodes(tree: Genealogy, nodes: &[(usize, usize)]) -> Result<Self> {
        let h = tree.height();
        let tips = nodes
            .iter()
            .map(|&(g, i)| if g == h { SpineTip::Alive(i) } else { SpineTip::Graveyard { generation: g, index: i } })
            .collect();
        Self::new(tree, tips)
    }

    /// Spines ending at the given height-n leaves.
    pub fn from_leaves(tree: Genealogy, leaves: &[usize]) -> Result<Self> {
        Self::new(tree, leaves.iter().map(|&i| SpineTip::Alive(i)).collect())
    }

    pub(crate) fn from_parts_unchecked(tree: Genealogy, tips: Vec<SpineTip>) -> Self {
        SpinedTree { tree, tips }
    }

    pub fn tree(&self) -> &Genealogy {
        &self.tree
    }

    pub fn into_tree(self) -> Genealogy {
        self.tree
    }

    pub fn k(&self) -> usize {
        self.tips.len()
    }

    pub fn tips(&self) -> &[SpineTip] {
        &self.tips
    }

    fn tip_node(&self, i: usize) -> (usize, usize) {
        let t = self.tips[i];
        (t.generation(self.tree.height()), t.index())
    }

    /// True on 𝒯̂_n^k: all spine tips distinct and at the tree height.
    pub fn is_hat(&self) -> bool {
        let mut leaves = Vec::with_capacity(self.k());
        for t in &self.tips {
            match t {
                SpineTip::Alive(i) => leaves.push(*i),
                SpineTip::Graveyard { .. } => return false,
            }
        }
        leaves.sort_unstable();
        leaves.windows(2).all(|w| w[0] != w[1])
    }

    /// Leaf indices of the spines, if all are alive.
    pub fn spine_leaves(&self) -> Option<Vec<usize>> {
        self.tips
            .iter()
            .map(|t| match t {
                SpineTip::Alive(i) => Some(*i),
                SpineTip::Graveyard { .. } => None,
            })
            .collect()
    }

    /// |M_u| for u = (m, i).
    pub fn marks_at(&self, m: usize, i: usize) -> usize {
        (0..self.k())
            .filter(|&s| {
                let (g, idx) = self.tip_node(s);
                g >= m && self.tree.ancestor(g, idx, m) == i
            })
            .count()
    }

    /// |M_u|.
    pub fn marks(&self, u: &Label) -> Result<usize> {
        let i = self.tree.locate(u).ok_or_else(|| domain(format!("label {u} not in tree")))?;
        Ok(self.marks_at(u.len(), i))
    }

    /// |M_u| for every u of generation m.
    pub fn mark_counts(&self, m: usize) -> Vec<u32> {
        let mut out = vec![0u32; self.tree.population(m)];
        for s in 0..self.k() {
            let (g, idx) = self.tip_node(s);
            if g >= m {
                out[self.tree.ancestor(g, idx, m)] += 1;
            }
        }
        out
    }

    /// R_m applied to the tree and every spine.
    pub fn restrict(&self, m: usize) -> Result<SpinedTree> {
        let tree = self.tree.restrict(m)?;
        let tips = (0..self.k())
            .map(|s| {
                let (g, idx) = self.tip_node(s);
                if g >= m {
                    SpineTip::Alive(self.tree.ancestor(g, idx, m))
                } else {
                    SpineTip::Graveyard { generation: g, index: idx }
                }
            })
            .collect();
        Ok(SpinedTree { tree, tips })
    }

    /// S_u on the tree and on the spines through u, in their original order.
    pub fn subtree(&self, u: &Label) -> Option<SpinedTree> {
        let idx = self.tree.locate(u)?;
        let d = u.len();
        let ranges = self.tree.descendant_ranges(d, idx);
        let sub = self.tree.subtree(u)?;
        let h = sub.height();
        let tips = (0..self.k())
            .filter_map(|s| {
                let (g, i) = self.tip_node(s);
                if g < d || self.tree.ancestor(g, i, d) != idx {
                    return None;
                }
                let rel = i - ranges[g - d].start;
                Some(if g - d == h { SpineTip::Alive(rel) } else { SpineTip::Graveyard { generation: g - d, index: rel } })
            })
            .collect();
        Some(SpinedTree { tree: sub, tips })
    }

    /// Spined concatenation at u. At a leaf u carrying m marks, s must carry m spines and
    /// the j-th marked spine is extended by the j-th spine of s. At a non-leaf, u must carry
    /// no marks and s no spines. u ∉ t returns `self` unchanged.
    pub fn concat(&self, u: &Label, s: &SpinedTree) -> Result<SpinedTree> {
        let Some(u_idx) = self.tree.locate(u) else {
            return Ok(self.clone());
        };
        let d = u.len();
        let marked: Vec<usize> = (0..self.k())
            .filter(|&i| {
                let (g, idx) = self.tip_node(i);
                g >= d && self.tree.ancestor(g, idx, d) == u_idx
            })
            .collect();
        let leaf = self.tree.offspring(d, u_idx) == 0;
        if !leaf && !marked.is_empty() {
            return Err(Error::InvalidConcatenation(format!("{u} is not a leaf and carries {} marks", marked.len())));
        }
        if marked.len() != s.k() {
            return Err(Error::InvalidConcatenation(format!(
                "{u} carries {} marks but the attached tree has {} spines",
                marked.len(),
                s.k()
            )));
        }
        let tree = self.tree.concat(u, &s.tree);
        let h = tree.height();
        let mut tips = Vec::with_capacity(self.k());
        let mut next_w = 0;
        for i in 0..self.k() {
            let (g, idx) = self.tip_node(i);
            let label = if marked.contains(&i) {
                let (wg, widx) = s.tip_node(next_w);
                next_w += 1;
                u.join(&s.tree.label(wg, widx))
            } else {
                self.tree.label(g, idx)
            };
            let at = tree.locate(&label).expect("concatenation keeps labels");
            tips.push(if label.len() == h {
                SpineTip::Alive(at)
            } else {
                SpineTip::Graveyard { generation: label.len(), index: at }
            });
        }
        Ok(SpinedTree { tree, tips })
    }

    /// Tree serialization followed by a `spines` line; graveyard tips print as `g:i`.
    pub fn serialize(&self) -> String {
        let mut out = self.tree.serialize();
        out.push_str("spines");
        for t in &self.tips {
            match t {
                SpineTip::Alive(i) => out.push_str(&format!(" {i}")),
                SpineTip::Graveyard { generation, index } => out.push_str(&format!(" {generation}:{index}")),
            }
        }
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<SpinedTree> {
        let (tree, rest) = parse_generations(text)?;
        let line = rest.first().ok_or_else(|| Error::Parse("missing spines line".into()))?;
        let body = line.strip_prefix("spines").ok_or_else(|| Error::Parse(format!("bad spines line {line:?}")))?;
        let mut tips = Vec::new();
        for tok in body.split_whitespace() {
            let bad = || Error::Parse(format!("bad spine token {tok:?}"));
            let tip = match tok.split_once(':') {
                Some((g, i)) => SpineTip::Graveyard {
                    generation: g.parse().map_err(|_| bad())?,
                    index: i.parse().map_err(|_| bad())?,
                },
                None => SpineTip::Alive(tok.parse().map_err(|_| bad())?),
            };
            tips.push(tip);
        }
        Self::new(tree, tips)
    }
}
