//! Rooted finite trees, their constructors and the meet/level combinatorics
//! used by every kernel.
//!
//! Vertices are numbered breadth-first from the root (vertex 0), children in
//! the order they were supplied. Consequences used throughout the crate:
//! every level is a contiguous block of indices, the leaves at maximal depth
//! form the last block, and the edge above vertex `v >= 1` has index `v - 1`.

use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Upper bound on the number of vertices any constructor will materialize.
pub const DEFAULT_VERTEX_BUDGET: usize = 1 << 25;

/// Edge-flip parameters: edges are open with probability `p`, closed edges
/// open at rate `p` and open edges close at rate `q = 1 - p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PercolationParams {
    p: f64,
    q: f64,
}

impl PercolationParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("p = {p} must lie in (0, 1)")));
        }
        Ok(Self { p, q: 1.0 - p })
    }

    #[inline]
    pub fn p(&self) -> f64 {
        self.p
    }

    #[inline]
    pub fn q(&self) -> f64 {
        self.q
    }

    /// q / p, the amplitude of the time correlation.
    #[inline]
    pub fn odds(&self) -> f64 {
        self.q / self.p
    }
}

impl TryFrom<f64> for PercolationParams {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<PercolationParams> for f64 {
    fn from(params: PercolationParams) -> f64 {
        params.p
    }
}

/// Per-level child counts of a spherically symmetric tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphericalSpec {
    pub degrees: Vec<usize>,
}

impl SphericalSpec {
    pub fn new(degrees: Vec<usize>) -> Self {
        Self { degrees }
    }

    /// Cumulative products `[1, d0, d0*d1, ...]`, saturating on overflow.
    pub fn level_counts(&self) -> Vec<u128> {
        let mut out = Vec::with_capacity(self.degrees.len() + 1);
        let mut acc: u128 = 1;
        out.push(acc);
        for &d in &self.degrees {
            acc = acc.saturating_mul(d as u128);
            out.push(acc);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    level_counts: Vec<usize>,
    leaves: Vec<usize>,
}

impl Tree {
    /// Builds a tree from per-vertex child lists. The root is the unique
    /// vertex that is nobody's child; vertices are renumbered breadth-first.
    pub fn from_children(children: &[Vec<usize>]) -> Result<Self> {
        let len = children.len();
        if len == 0 {
            return Err(Error::EmptyTree);
        }
        let mut parent: Vec<Option<usize>> = vec![None; len];
        for (v, kids) in children.iter().enumerate() {
            for &c in kids {
                if c >= len {
                    return Err(Error::InvalidIndex { index: c, len });
                }
                if c == v || parent[c].is_some() {
                    return Err(Error::CycleDetected(c));
                }
                parent[c] = Some(v);
            }
        }
        let mut roots = (0..len).filter(|&v| parent[v].is_none());
        let root = roots.next().ok_or(Error::CycleDetected(0))?;
        if let Some(extra) = roots.next() {
            return Err(Error::DisconnectedVertex(extra));
        }

        let mut order = Vec::with_capacity(len);
        let mut seen = vec![false; len];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &children[v] {
                if seen[c] {
                    return Err(Error::CycleDetected(c));
                }
                seen[c] = true;
                queue.push_back(c);
            }
        }
        if order.len() < len {
            // every vertex has exactly one parent, so anything unreachable
            // from the root sits on a cycle
            let v = (0..len).find(|&v| !seen[v]).unwrap_or(0);
            return Err(Error::CycleDetected(v));
        }

        let mut new_index = vec![0usize; len];
        for (i, &v) in order.iter().enumerate() {
            new_index[v] = i;
        }
        let bfs_children: Vec<Vec<usize>> =
            order.iter().map(|&v| children[v].iter().map(|&c| new_index[c]).collect()).collect();
        Ok(Self::from_bfs_children(bfs_children))
    }

    /// `children` must already be in breadth-first order rooted at 0.
    fn from_bfs_children(children: Vec<Vec<usize>>) -> Self {
        let len = children.len();
        let mut parent = vec![None; len];
        let mut depth = vec![0usize; len];
        for v in 0..len {
            for &c in &children[v] {
                parent[c] = Some(v);
                depth[c] = depth[v] + 1;
            }
        }
        let height = depth.iter().copied().max().unwrap_or(0);
        let mut level_counts = vec![0usize; height + 1];
        for &d in &depth {
            level_counts[d] += 1;
        }
        let leaves = (0..len).filter(|&v| depth[v] == height).collect();
        Self { parent, children, depth, level_counts, leaves }
    }

    pub fn spherical(spec: &SphericalSpec) -> Result<Self> {
        Self::spherical_with_budget(spec, DEFAULT_VERTEX_BUDGET)
    }

    pub fn spherical_with_budget(spec: &SphericalSpec, budget: usize) -> Result<Self> {
        if let Some(l) = spec.degrees.iter().position(|&d| d == 0) {
            return Err(Error::ZeroDegree(l));
        }
        let total: u128 = spec.level_counts().iter().fold(0u128, |acc, &c| acc.saturating_add(c));
        if total > budget as u128 {
            return Err(Error::BudgetExceeded {
                what: "spherically symmetric tree vertices",
                needed: total,
                budget: budget as u128,
            });
        }
        let mut children = vec![Vec::new()];
        let mut level = vec![0usize];
        for &d in &spec.degrees {
            let mut next = Vec::with_capacity(level.len() * d);
            for &v in &level {
                for _ in 0..d {
                    let c = children.len();
                    children.push(Vec::new());
                    children[v].push(c);
                    next.push(c);
                }
            }
            level = next;
        }
        Ok(Self::from_bfs_children(children))
    }

    /// A tree with prescribed level sizes, children spread as evenly as
    /// possible: each depth-`l` vertex gets `floor(c[l+1]/c[l])` children and
    /// the first `c[l+1] mod c[l]` of them one extra. Spherically symmetric
    /// whenever the ratios are integers.
    pub fn balanced(counts: &[usize]) -> Result<Self> {
        Self::balanced_with_budget(counts, DEFAULT_VERTEX_BUDGET)
    }

    pub fn balanced_with_budget(counts: &[usize], budget: usize) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyTree);
        }
        if counts[0] != 1 {
            return Err(Error::InvalidParameter("level 0 must hold exactly the root".into()));
        }
        for l in 1..counts.len() {
            if counts[l] < counts[l - 1] {
                return Err(Error::InvalidParameter(format!(
                    "level counts must be non-decreasing for a leafless tree (level {l})"
                )));
            }
        }
        let total: u128 = counts.iter().map(|&c| c as u128).sum();
        if total > budget as u128 {
            return Err(Error::BudgetExceeded {
                what: "balanced tree vertices",
                needed: total,
                budget: budget as u128,
            });
        }
        let mut children = vec![Vec::new()];
        let mut level_start = 0usize;
        for l in 0..counts.len() - 1 {
            let (here, next) = (counts[l], counts[l + 1]);
            let (base, extra) = (next / here, next % here);
            for i in 0..here {
                let v = level_start + i;
                let k = base + usize::from(i < extra);
                for _ in 0..k {
                    let c = children.len();
                    children.push(Vec::new());
                    children[v].push(c);
                }
            }
            level_start += here;
        }
        Ok(Self::from_bfs_children(children))
    }

    /// A single ray of length `n`.
    pub fn path(n: usize) -> Self {
        let children = (0..=n).map(|v| if v < n { vec![v + 1] } else { Vec::new() }).collect();
        Self::from_bfs_children(children)
    }

    /// Galton-Watson tree with offspring law `offspring_probs[k] = P(k children)`,
    /// grown to `depth` generations and pruned to its leafless core.
    pub fn galton_watson(offspring_probs: &[f64], depth: usize, seed: u64) -> Result<Self> {
        Self::galton_watson_with_budget(offspring_probs, depth, seed, DEFAULT_VERTEX_BUDGET)
    }

    pub fn galton_watson_with_budget(offspring_probs: &[f64], depth: usize, seed: u64, budget: usize) -> Result<Self> {
        if offspring_probs.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("offspring probabilities must be finite and >= 0".into()));
        }
        let total: f64 = offspring_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("offspring probabilities sum to {total}, expected 1")));
        }
        let law =
            WeightedIndex::new(offspring_probs).map_err(|e| Error::InvalidParameter(format!("offspring law: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut children = vec![Vec::new()];
        let mut level = vec![0usize];
        for generation in 0..depth {
            let mut next = Vec::new();
            for &v in &level {
                let k = law.sample(&mut rng);
                if children.len() + k > budget {
                    return Err(Error::BudgetExceeded {
                        what: "Galton-Watson vertices",
                        needed: (children.len() + k) as u128,
                        budget: budget as u128,
                    });
                }
                for _ in 0..k {
                    let c = children.len();
                    children.push(Vec::new());
                    children[v].push(c);
                    next.push(c);
                }
            }
            if next.is_empty() {
                return Err(Error::Extinct(generation + 1));
            }
            level = next;
        }
        Ok(Self::from_bfs_children(children).prune_leafless())
    }

    /// First surviving Galton-Watson tree among seeds `seed, seed + 1, ...`,
    /// trying at most `attempts` seeds.
    pub fn galton_watson_surviving(offspring_probs: &[f64], depth: usize, seed: u64, attempts: u64) -> Result<Self> {
        let mut last = Error::Extinct(0);
        for s in seed..seed.saturating_add(attempts.max(1)) {
            match Self::galton_watson(offspring_probs, depth, s) {
                Err(e @ Error::Extinct(_)) => last = e,
                other => return other,
            }
        }
        Err(last)
    }

    /// Keeps only vertices with a descendant at maximal depth.
    pub fn prune_leafless(&self) -> Tree {
        let n = self.height();
        let len = self.vertex_count();
        let mut keep = vec![false; len];
        // children always carry larger indices than their parent
        for v in (0..len).rev() {
            keep[v] = self.depth[v] == n || self.children[v].iter().any(|&c| keep[c]);
        }
        if keep.iter().all(|&k| k) {
            return self.clone();
        }
        let mut new_index = vec![usize::MAX; len];
        let mut next = 0;
        for v in 0..len {
            if keep[v] {
                new_index[v] = next;
                next += 1;
            }
        }
        let children = (0..len)
            .filter(|&v| keep[v])
            .map(|v| self.children[v].iter().filter(|&&c| keep[c]).map(|&c| new_index[c]).collect())
            .collect();
        Self::from_bfs_children(children)
    }

    /// The first `depth` levels. A leafless tree stays leafless.
    pub fn truncate(&self, depth: usize) -> Tree {
        if depth >= self.height() {
            return self.clone();
        }
        let cut: usize = self.level_counts[..=depth].iter().sum();
        let children =
            self.children[..cut].iter().map(|kids| kids.iter().copied().filter(|&c| c < cut).collect()).collect();
        Self::from_bfs_children(children)
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.parent.len() - 1
    }

    /// n = maximal depth.
    #[inline]
    pub fn height(&self) -> usize {
        self.level_counts.len() - 1
    }

    #[inline]
    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    #[inline]
    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    #[inline]
    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    #[inline]
    pub fn level_counts(&self) -> &[usize] {
        &self.level_counts
    }

    /// Vertices at depth n, in canonical (breadth-first) order.
    #[inline]
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    #[inline]
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Vertex index of the `i`-th leaf.
    #[inline]
    pub fn leaf(&self, i: usize) -> usize {
        self.leaves[i]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        v < self.vertex_count() && self.depth[v] == self.height()
    }

    /// Edge index of the edge joining `v` to its parent.
    #[inline]
    pub fn edge_above(v: usize) -> usize {
        debug_assert!(v > 0);
        v - 1
    }

    /// Depth of the lowest common ancestor of two maximal-depth leaves.
    pub fn meet_depth(&self, a: usize, b: usize) -> Result<usize> {
        for v in [a, b] {
            if !self.is_leaf(v) {
                return Err(Error::NotALeaf(v));
            }
        }
        Ok(self.meet_unchecked(a, b))
    }

    /// Meet depth of two vertices at equal depth.
    fn meet_unchecked(&self, mut a: usize, mut b: usize) -> usize {
        let mut d = self.depth[a];
        while a != b {
            a = self.parent[a].expect("distinct vertices below the root");
            b = self.parent[b].expect("distinct vertices below the root");
            d -= 1;
        }
        d
    }

    /// Symmetric `L x L` table of meet depths between leaf positions.
    pub fn leaf_meet_table(&self) -> Vec<u32> {
        let n = self.height();
        let l = self.leaf_count();
        // ancestors[d][i] = ancestor at depth d of leaf i
        let mut ancestors = vec![vec![0usize; l]; n + 1];
        for (i, &leaf) in self.leaves.iter().enumerate() {
            let mut v = leaf;
            for d in (0..=n).rev() {
                ancestors[d][i] = v;
                if d > 0 {
                    v = self.parent[v].unwrap();
                }
            }
        }
        let mut table = vec![0u32; l * l];
        for i in 0..l {
            table[i * l + i] = n as u32;
            for j in (i + 1)..l {
                // ancestors agree on a prefix of depths; binary search its end
                let (mut lo, mut hi) = (0usize, n);
                while lo < hi {
                    let mid = (lo + hi).div_ceil(2);
                    if ancestors[mid][i] == ancestors[mid][j] {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                table[i * l + j] = lo as u32;
                table[j * l + i] = lo as u32;
            }
        }
        table
    }

    /// Vertices on the path from `v` up to (excluding) the root.
    pub fn ancestors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(v), move |&u| self.parent[u]).take_while(|&u| u != 0)
    }

    /// Per-level child counts if every vertex of a level has the same number
    /// of children (maximal-depth vertices excluded).
    pub fn spherical_degrees(&self) -> Option<Vec<usize>> {
        let n = self.height();
        let mut degrees = Vec::with_capacity(n);
        let mut start = 0;
        for l in 0..n {
            let block = start..start + self.level_counts[l];
            let d = self.children[block.start].len();
            if block.clone().any(|v| self.children[v].len() != d) {
                return None;
            }
            degrees.push(d);
            start = block.end;
        }
        Some(degrees)
    }

    pub fn is_spherically_symmetric(&self) -> bool {
        self.spherical_degrees().is_some()
    }

    pub fn is_leafless(&self) -> bool {
        let n = self.height();
        (0..self.vertex_count()).all(|v| self.depth[v] == n || !self.children[v].is_empty())
    }

    /// Stable content hash (hex) of the canonical child lists.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for kids in &self.children {
            hasher.update((kids.len() as u64).to_le_bytes());
            for &c in kids {
                hasher.update((c as u64).to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Child lists in canonical order, suitable for the explicit JSON form.
    pub fn to_children(&self) -> Vec<Vec<usize>> {
        self.children.clone()
    }
}

/// Level sizes `|G_0|, ..., |G_n|` held as natural logarithms so that deep
/// truncations of exponentially growing families stay representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCounts {
    ln_counts: Vec<f64>,
}

impl LevelCounts {
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() || counts.contains(&0) {
            return Err(Error::InvalidParameter("level counts must be non-empty and positive".into()));
        }
        Ok(Self { ln_counts: counts.iter().map(|&c| (c as f64).ln()).collect() })
    }

    pub fn from_tree(tree: &Tree) -> Self {
        Self { ln_counts: tree.level_counts().iter().map(|&c| (c as f64).ln()).collect() }
    }

    pub fn from_ln(ln_counts: Vec<f64>) -> Result<Self> {
        if ln_counts.is_empty() || ln_counts.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParameter("log level counts must be finite and >= 0".into()));
        }
        Ok(Self { ln_counts })
    }

    /// `|G_l| = ceil(base^l * l^gamma)` for `1 <= l <= n`, `|G_0| = 1`.
    /// Beyond 2^52 the ceiling is dropped.
    pub fn power_family(base: f64, gamma: f64, n: usize) -> Self {
        let ln_counts = (0..=n)
            .map(|l| {
                if l == 0 {
                    return 0.0;
                }
                let ln = l as f64 * base.ln() + gamma * (l as f64).ln();
                if ln < 52.0 * std::f64::consts::LN_2 {
                    (power_count(base, gamma, l) as f64).ln()
                } else {
                    ln
                }
            })
            .collect();
        Self { ln_counts }
    }

    /// Integer counts of [`LevelCounts::power_family`], for building trees.
    pub fn power_family_counts(base: f64, gamma: f64, n: usize) -> Vec<usize> {
        (0..=n).map(|l| if l == 0 { 1 } else { power_count(base, gamma, l) as usize }).collect()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.ln_counts.len() - 1
    }

    #[inline]
    pub fn ln_count(&self, l: usize) -> f64 {
        self.ln_counts[l]
    }

    #[inline]
    pub fn count(&self, l: usize) -> f64 {
        self.ln_counts[l].exp()
    }

    pub fn truncate(&self, n: usize) -> Self {
        Self { ln_counts: self.ln_counts[..=n.min(self.height())].to_vec() }
    }
}

/// `⌈base^l · l^γ⌉`, snapping values within rounding noise of an integer.
fn power_count(base: f64, gamma: f64, l: usize) -> u64 {
    let x = base.powi(l as i32) * (l as f64).powf(gamma);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Tree description as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeSpec {
    Explicit {
        children: Vec<Vec<usize>>,
    },
    Spherical {
        degrees: Vec<usize>,
    },
    GaltonWatson {
        offspring_probs: Vec<f64>,
        depth: usize,
        seed: u64,
    },
    /// Prescribed level sizes, built with [`Tree::balanced`].
    LevelCounts {
        counts: Vec<usize>,
    },
}

impl TreeSpec {
    pub fn build(&self) -> Result<Tree> {
        match self {
            TreeSpec::Explicit { children } => Tree::from_children(children),
            TreeSpec::Spherical { degrees } => Tree::spherical(&SphericalSpec::new(degrees.clone())),
            TreeSpec::GaltonWatson { offspring_probs, depth, seed } => {
                Tree::galton_watson(offspring_probs, *depth, *seed)
            }
            TreeSpec::LevelCounts { counts } => Tree::balanced(counts),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binary2() -> Tree {
        Tree::from_children(&[vec![1, 2], vec![3, 4], vec![5, 6], vec![], vec![], vec![], vec![]]).unwrap()
    }

    #[test]
    fn explicit_examples() {
        let cherry = Tree::from_children(&[vec![1, 2], vec![], vec![]]).unwrap();
        assert_eq!(cherry.height(), 1);
        assert_eq!(cherry.level_counts(), &[1, 2]);

        let path = Tree::from_children(&[vec![1], vec![2], vec![3], vec![]]).unwrap();
        assert_eq!(path.height(), 3);
        assert_eq!(path.level_counts(), &[1, 1, 1, 1]);
        assert_eq!(path, Tree::path(3));

        let t = binary2();
        assert_eq!(t.level_counts(), &[1, 2, 4]);
        assert_eq!(t.leaves(), &[3, 4, 5, 6]);
    }

    #[test]
    fn explicit_renumbers_breadth_first() {
        // root is vertex 2 here
        let t = Tree::from_children(&[vec![], vec![0], vec![1, 3], vec![]]).unwrap();
        assert_eq!(t.level_counts(), &[1, 2, 1]);
        assert_eq!(t.children(0), &[1, 2]);
        assert_eq!(t.children(1), &[3]);
    }

    #[test]
    fn explicit_errors() {
        assert_eq!(Tree::from_children(&[]), Err(Error::EmptyTree));
        assert!(matches!(Tree::from_children(&[vec![1], vec![0]]), Err(Error::CycleDetected(_))));
        assert!(matches!(Tree::from_children(&[vec![0]]), Err(Error::CycleDetected(0))));
        assert!(matches!(Tree::from_children(&[vec![1], vec![], vec![]]), Err(Error::DisconnectedVertex(2))));
        // root plus a detached 2-cycle
        assert!(matches!(Tree::from_children(&[vec![], vec![2], vec![1]]), Err(Error::CycleDetected(_))));
        assert!(matches!(Tree::from_children(&[vec![1, 2], vec![2], vec![]]), Err(Error::CycleDetected(2))));
        assert!(matches!(Tree::from_children(&[vec![5]]), Err(Error::InvalidIndex { .. })));
    }

    #[test]
    fn spherical_examples() {
        let t = Tree::spherical(&SphericalSpec::new(vec![2, 2])).unwrap();
        assert_eq!(t.level_counts(), &[1, 2, 4]);
        assert_eq!(t, binary2());
        let star = Tree::spherical(&SphericalSpec::new(vec![3])).unwrap();
        assert_eq!(star.level_counts(), &[1, 3]);
        let t = Tree::spherical(&SphericalSpec::new(vec![2, 3, 2])).unwrap();
        assert_eq!(t.level_counts(), &[1, 2, 6, 12]);
        assert_eq!(t.spherical_degrees(), Some(vec![2, 3, 2]));
    }

    #[test]
    fn spherical_budget_and_zero_degree() {
        let err = Tree::spherical_with_budget(&SphericalSpec::new(vec![10, 10, 10]), 500).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { needed: 1111, .. }));
        assert_eq!(Tree::spherical(&SphericalSpec::new(vec![2, 0])), Err(Error::ZeroDegree(1)));
    }

    #[test]
    fn prune_examples() {
        let path = Tree::path(3);
        assert_eq!(path.prune_leafless(), path);
        assert_eq!(binary2().prune_leafless(), binary2());

        // cherry whose second child is a stub
        let t = Tree::from_children(&[vec![1, 2], vec![3], vec![], vec![]]).unwrap();
        assert_eq!(t.level_counts(), &[1, 2, 1]);
        assert!(!t.is_leafless());
        let pruned = t.prune_leafless();
        assert_eq!(pruned.level_counts(), &[1, 1, 1]);
        assert!(pruned.is_leafless());
    }

    #[test]
    fn meet_examples() {
        let t = binary2();
        assert_eq!(t.meet_depth(3, 3).unwrap(), 2);
        assert_eq!(t.meet_depth(3, 4).unwrap(), 1);
        assert_eq!(t.meet_depth(3, 5).unwrap(), 0);
        assert_eq!(t.meet_depth(4, 6).unwrap(), 0);
        assert_eq!(t.meet_depth(1, 3), Err(Error::NotALeaf(1)));
        assert_eq!(t.meet_depth(3, 99), Err(Error::NotALeaf(99)));
    }

    #[test]
    fn meet_matches_ancestor_set_intersection() {
        let t = Tree::galton_watson_surviving(&[0.2, 0.3, 0.3, 0.2], 6, 11, 100).unwrap();
        let table = t.leaf_meet_table();
        let l = t.leaf_count();
        for i in 0..l {
            for j in 0..l {
                let (a, b) = (t.leaf(i), t.leaf(j));
                let anc_a: Vec<usize> = std::iter::successors(Some(a), |&u| t.parent(u)).collect();
                let common = std::iter::successors(Some(b), |&u| t.parent(u)).filter(|u| anc_a.contains(u)).count();
                assert_eq!(table[i * l + j] as usize, common - 1);
                assert_eq!(t.meet_depth(a, b).unwrap(), common - 1);
            }
        }
    }

    #[test]
    fn galton_watson_is_leafless_and_reproducible() {
        let a = Tree::galton_watson_surviving(&[0.25, 0.25, 0.5], 7, 3, 100).unwrap();
        let b = Tree::galton_watson_surviving(&[0.25, 0.25, 0.5], 7, 3, 100).unwrap();
        assert_eq!(a, b);
        assert!(a.is_leafless());
        assert_eq!(a.height(), 7);
        assert!(matches!(Tree::galton_watson(&[1.0], 3, 0), Err(Error::Extinct(1))));
        assert!(Tree::galton_watson(&[0.5, 0.6], 3, 0).is_err());
        assert!(matches!(Tree::galton_watson_surviving(&[1.0], 3, 0, 5), Err(Error::Extinct(1))));
    }

    #[test]
    fn balanced_levels() {
        let t = Tree::balanced(&[1, 2, 5, 11]).unwrap();
        assert_eq!(t.level_counts(), &[1, 2, 5, 11]);
        assert!(t.is_leafless());
        assert!(!t.is_spherically_symmetric());
        assert!(Tree::balanced(&[1, 3, 2]).is_err());
    }

    #[test]
    fn truncate_keeps_prefix() {
        let t = Tree::spherical(&SphericalSpec::new(vec![2, 3, 2])).unwrap();
        let s = t.truncate(2);
        assert_eq!(s.level_counts(), &[1, 2, 6]);
        assert!(s.is_leafless());
    }

    #[test]
    fn tree_spec_json() {
        let spec: TreeSpec = serde_json::from_str(r#"{"kind":"spherical","degrees":[2,3]}"#).unwrap();
        assert_eq!(spec.build().unwrap().level_counts(), &[1, 2, 6]);
        let spec: TreeSpec = serde_json::from_str(r#"{"kind":"explicit","children":[[1,2],[],[]]}"#).unwrap();
        assert_eq!(spec.build().unwrap().leaf_count(), 2);
        let spec: TreeSpec =
            serde_json::from_str(r#"{"kind":"galton_watson","offspring_probs":[0.1,0.4,0.5],"depth":5,"seed":9}"#)
                .unwrap();
        assert_eq!(spec.build().unwrap().height(), 5);
    }

    #[test]
    fn params_validation() {
        assert!(PercolationParams::new(0.0).is_err());
        assert!(PercolationParams::new(1.0).is_err());
        assert!(PercolationParams::new(f64::NAN).is_err());
        let pp = PercolationParams::new(0.3).unwrap();
        assert_eq!(pp.p() + pp.q(), 1.0);
    }

    fn arb_tree() -> impl Strategy<Value = Tree> {
        (prop::collection::vec(0.0f64..1.0, 3), 1usize..6, any::<u64>()).prop_filter_map(
            "extinct",
            |(w, depth, seed)| {
                let s: f64 = w.iter().sum::<f64>() + 0.5;
                let probs = [w[0] / s * 0.5, w[1] / s, w[2] / s, 0.5 / s];
                let total: f64 = probs.iter().sum();
                let probs: Vec<f64> = probs.iter().map(|x| x / total).collect();
                Tree::galton_watson(&probs, depth, seed).ok()
            },
        )
    }

    proptest! {
        #[test]
        fn prop_meet_is_ultrametric(t in arb_tree()) {
            let table = t.leaf_meet_table();
            let l = t.leaf_count();
            for a in 0..l { for b in 0..l { for c in 0..l {
                let ab = table[a * l + b];
                prop_assert!(ab >= table[a * l + c].min(table[b * l + c]));
                prop_assert_eq!(ab, table[b * l + a]);
            }}}
        }

        #[test]
        fn prop_level_counts_sum(t in arb_tree()) {
            prop_assert_eq!(t.level_counts().iter().sum::<usize>(), t.vertex_count());
            prop_assert_eq!(t.level_counts()[0], 1);
        }

        #[test]
        fn prop_spherical_counts(degrees in prop::collection::vec(1usize..4, 0..7)) {
            let spec = SphericalSpec::new(degrees);
            let t = Tree::spherical(&spec).unwrap();
            let expected: Vec<usize> = spec.level_counts().iter().map(|&c| c as usize).collect();
            prop_assert_eq!(t.level_counts(), expected.as_slice());
        }

        #[test]
        fn prop_prune_idempotent(children_seed in any::<u64>(), depth in 1usize..6) {
            // unpruned GW growth: extend with stubs by truncating a deeper tree at random cut
            let probs = [0.3, 0.3, 0.4];
            if let Ok(t) = Tree::galton_watson(&probs, depth + 1, children_seed) {
                let mut kids = t.to_children();
                kids.push(Vec::new());
                let stub = kids.len() - 1;
                kids[0].push(stub);
                let with_stub = Tree::from_children(&kids).unwrap();
                let once = with_stub.prune_leafless();
                prop_assert_eq!(once.prune_leafless(), once.clone());
                prop_assert_eq!(once.level_counts(), t.level_counts());
            }
        }

        #[test]
        fn prop_p_plus_q_is_one(p in 1e-9f64..(1.0 - 1e-9)) {
            let pp = PercolationParams::new(p).unwrap();
            prop_assert_eq!(pp.p() + pp.q(), 1.0);
        }
    }
}
