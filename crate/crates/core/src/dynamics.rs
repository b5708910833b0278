//! Exact event-driven simulation of the edge-flip dynamics.
//!
//! Each edge is an independent two-state chain: closed edges open at rate
//! `p`, open edges close at rate `q`. Every edge draws from its own ChaCha8
//! stream (`stream = edge index`), so a run depends only on `(tree, p,
//! horizon, seed)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::ProductMeasure;
use crate::error::{Error, Result};
use crate::target::{box_dimension_estimate, Interval, TargetSet, TimeGrid};
use crate::tree::{PercolationParams, Tree};

/// Horizon used when the target is `{0}`.
pub const MIN_HORIZON: f64 = 1e-9;

/// SplitMix64 finalizer of `(seed, run)`; seeds for independent runs.
pub fn derive_seed(seed: u64, run: u64) -> u64 {
    let mut z = seed ^ run.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Edge trajectories on `[0, horizon]`. Edge `e` sits above vertex `e + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    horizon: f64,
    seed: u64,
    p: f64,
    tree_fingerprint: String,
    initial_open: Vec<bool>,
    /// Flips of edge `e` are `flip_times[flip_offsets[e]..flip_offsets[e + 1]]`.
    flip_offsets: Vec<usize>,
    flip_times: Vec<f64>,
}

impl SimulationRun {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn tree_fingerprint(&self) -> &str {
        &self.tree_fingerprint
    }

    pub fn edge_count(&self) -> usize {
        self.initial_open.len()
    }

    pub fn initial_open(&self, e: usize) -> bool {
        self.initial_open[e]
    }

    /// Strictly increasing flip times of edge `e`, all in `(0, horizon]`.
    pub fn flips(&self, e: usize) -> &[f64] {
        &self.flip_times[self.flip_offsets[e]..self.flip_offsets[e + 1]]
    }

    pub fn total_flips(&self) -> usize {
        self.flip_times.len()
    }

    /// State of edge `e` at time `t`; a flip at `t` has already happened.
    pub fn is_open(&self, e: usize, t: f64) -> bool {
        let flipped = self.flips(e).partition_point(|&f| f <= t);
        self.initial_open[e] ^ (flipped % 2 == 1)
    }

    /// Fraction of `[0, horizon]` during which edge `e` is open.
    pub fn open_fraction(&self, e: usize) -> f64 {
        let mut open = self.initial_open[e];
        let mut last = 0.0;
        let mut total = 0.0;
        for &t in self.flips(e) {
            if open {
                total += t - last;
            }
            open = !open;
            last = t;
        }
        if open {
            total += self.horizon - last;
        }
        total / self.horizon
    }

    fn check_tree(&self, tree: &Tree) -> Result<()> {
        if self.edge_count() != tree.edge_count() || self.tree_fingerprint != tree.fingerprint() {
            return Err(Error::MismatchedRun(format!(
                "run for tree {} ({} edges), got tree {} ({} edges)",
                self.tree_fingerprint,
                self.edge_count(),
                tree.fingerprint(),
                tree.edge_count()
            )));
        }
        Ok(())
    }
}

/// Simulates every edge of `tree` on `[0, horizon]`, starting from the
/// stationary law.
pub fn simulate_edges(tree: &Tree, params: PercolationParams, horizon: f64, seed: u64) -> Result<SimulationRun> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive and finite")));
    }
    let open_to_closed = Exp::new(params.q()).expect("q > 0");
    let closed_to_open = Exp::new(params.p()).expect("p > 0");
    let edges: Vec<(bool, Vec<f64>)> = (0..tree.edge_count())
        .into_par_iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(e as u64);
            let initial = rng.random::<f64>() < params.p();
            let mut open = initial;
            let mut t = 0.0;
            let mut flips = Vec::new();
            loop {
                t += if open { open_to_closed.sample(&mut rng) } else { closed_to_open.sample(&mut rng) };
                if t > horizon {
                    break;
                }
                // an exponential draw of exactly 0 would repeat a time
                if flips.last() != Some(&t) {
                    flips.push(t);
                    open = !open;
                }
            }
            (initial, flips)
        })
        .collect();
    let mut initial_open = Vec::with_capacity(edges.len());
    let mut flip_offsets = Vec::with_capacity(edges.len() + 1);
    let mut flip_times = Vec::new();
    flip_offsets.push(0);
    for (initial, flips) in edges {
        initial_open.push(initial);
        flip_times.extend(flips);
        flip_offsets.push(flip_times.len());
    }
    Ok(SimulationRun {
        horizon,
        seed,
        p: params.p(),
        tree_fingerprint: tree.fingerprint(),
        initial_open,
        flip_offsets,
        flip_times,
    })
}

/// Closed, sorted, pairwise disjoint intervals of `[0, horizon]` during which
/// the root is joined to depth `height` by open edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercolationTrace {
    pub intervals: Vec<Interval>,
    pub horizon: f64,
}

impl PercolationTrace {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    /// `start,end` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("start,end\n");
        for iv in &self.intervals {
            out.push_str(&format!("{:?},{:?}\n", iv.lo, iv.hi));
        }
        out
    }

    fn push(&mut self, lo: f64, hi: f64) {
        match self.intervals.last_mut() {
            Some(last) if last.hi >= lo => last.hi = last.hi.max(hi),
            _ => self.intervals.push(Interval { lo, hi }),
        }
    }
}

/// Live-path bookkeeping: `live_children[v]` counts children `c` whose edge
/// is open and which are themselves live; a vertex is live when it sits at
/// maximal depth or has a live child.
struct LiveCounts<'a> {
    tree: &'a Tree,
    open: Vec<bool>,
    live_children: Vec<u32>,
}

impl<'a> LiveCounts<'a> {
    fn new(tree: &'a Tree, run: &SimulationRun) -> Self {
        let open: Vec<bool> = (0..tree.edge_count()).map(|e| run.initial_open(e)).collect();
        let mut s = Self { tree, open, live_children: vec![0; tree.vertex_count()] };
        // BFS order: children have larger indices than parents
        for v in (1..tree.vertex_count()).rev() {
            if s.open[v - 1] && s.is_live(v) {
                s.live_children[tree.parent(v).expect("non-root")] += 1;
            }
        }
        s
    }

    #[inline]
    fn is_live(&self, v: usize) -> bool {
        self.live_children[v] > 0 || self.tree.depth(v) == self.tree.height()
    }

    fn flip(&mut self, e: usize) {
        let v = e + 1;
        self.open[e] = !self.open[e];
        if !self.is_live(v) {
            return;
        }
        let opened = self.open[e];
        let mut u = self.tree.parent(v).expect("non-root");
        loop {
            let was = self.is_live(u);
            if opened {
                self.live_children[u] += 1;
            } else {
                self.live_children[u] -= 1;
            }
            if was == self.is_live(u) || u == 0 || !self.open[u - 1] {
                return;
            }
            u = self.tree.parent(u).expect("non-root");
        }
    }
}

/// `S(G) ∩ [0, horizon]` for the run, computed event by event.
pub fn percolation_trace(tree: &Tree, run: &SimulationRun) -> Result<PercolationTrace> {
    run.check_tree(tree)?;
    let mut events: Vec<(f64, usize)> =
        (0..run.edge_count()).flat_map(|e| run.flips(e).iter().map(move |&t| (t, e))).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut state = LiveCounts::new(tree, run);
    let mut trace = PercolationTrace { intervals: Vec::new(), horizon: run.horizon() };
    let mut start = state.is_live(0).then_some(0.0);
    let mut k = 0;
    while k < events.len() {
        let t = events[k].0;
        while k < events.len() && events[k].0 == t {
            state.flip(events[k].1);
            k += 1;
        }
        match (start, state.is_live(0)) {
            (None, true) => start = Some(t),
            (Some(s), false) => {
                trace.push(s, t);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        trace.push(s, run.horizon());
    }
    Ok(trace)
}

/// Whether some trace interval meets some interval of `d`; touching counts.
pub fn hits_target(trace: &PercolationTrace, d: &TargetSet) -> Result<bool> {
    if let Some(sup) = d.sup() {
        if sup > trace.horizon {
            return Err(Error::HorizonExceeded { sup, horizon: trace.horizon });
        }
    }
    let (a, b) = (&trace.intervals, d.intervals());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i].intersects(&b[j]) {
            return Ok(true);
        }
        if a[i].hi < b[j].hi {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(false)
}

/// Pairwise intersections of a trace with a target.
pub fn trace_intersection(trace: &PercolationTrace, d: &TargetSet) -> Vec<Interval> {
    let mut out = Vec::new();
    for iv in &trace.intervals {
        for dv in d.intervals() {
            if let Some(x) = iv.intersection(dv) {
                out.push(x);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitEstimate {
    pub runs: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub std_err: f64,
}

impl HitEstimate {
    pub fn from_counts(runs: u64, hits: u64) -> Self {
        let p_hat = hits as f64 / runs as f64;
        Self { runs, hits, p_hat, std_err: (p_hat * (1.0 - p_hat) / runs as f64).sqrt() }
    }
}

/// Monte Carlo estimate of `P(S(G) ∩ d ≠ ∅)` from `runs` independent runs on
/// `[0, max(sup d, MIN_HORIZON)]`; run `r` uses seed `derive_seed(seed, r)`.
pub fn estimate_hit_probability(
    tree: &Tree,
    params: PercolationParams,
    d: &TargetSet,
    runs: u64,
    seed: u64,
) -> Result<HitEstimate> {
    let Some(sup) = d.sup() else {
        if runs == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        return Ok(HitEstimate::from_counts(runs, 0));
    };
    Ok(simulate_hits(tree, params, d, sup.max(MIN_HORIZON), runs, seed, false)?.0)
}

/// Runs the dynamics `runs` times on `[0, horizon]` and counts runs whose
/// trace meets `d`; the traces are returned when `keep_traces` is set.
pub fn simulate_hits(
    tree: &Tree,
    params: PercolationParams,
    d: &TargetSet,
    horizon: f64,
    runs: u64,
    seed: u64,
    keep_traces: bool,
) -> Result<(HitEstimate, Vec<PercolationTrace>)> {
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    if d.inf().is_some_and(|inf| inf < 0.0) {
        return Err(Error::InvalidParameter("target must lie in [0, ∞)".into()));
    }
    let outcomes = (0..runs)
        .into_par_iter()
        .map(|r| {
            let run = simulate_edges(tree, params, horizon, derive_seed(seed, r))?;
            let trace = percolation_trace(tree, &run)?;
            let hit = !d.is_empty() && hits_target(&trace, d)?;
            Ok((hit, keep_traces.then_some(trace)))
        })
        .collect::<Result<Vec<_>>>()?;
    let hits = outcomes.iter().filter(|o| o.0).count() as u64;
    let traces = outcomes.into_iter().filter_map(|o| o.1).collect();
    Ok((HitEstimate::from_counts(runs, hits), traces))
}

/// `Z(μ) = p^{-n} Σ μ(a, i) 1{root-to-leaf(a) path open at t_i}`, with `t_i`
/// the center of cell `i`.
pub fn z_statistic(
    tree: &Tree,
    run: &SimulationRun,
    grid: &TimeGrid,
    mu: &ProductMeasure,
    params: PercolationParams,
) -> Result<f64> {
    run.check_tree(tree)?;
    let mut total = 0.0;
    for (&(a, i), &w) in mu.atoms().iter().zip(mu.weights()) {
        if a >= tree.leaf_count() || i >= grid.len() {
            return Err(Error::MismatchedRun(format!("atom ({a}, {i}) outside the tree or grid")));
        }
        let t = grid.centers()[i];
        if !(0.0..=run.horizon()).contains(&t) {
            return Err(Error::MismatchedRun(format!("time {t} outside [0, {}]", run.horizon())));
        }
        let leaf = tree.leaf(a);
        if std::iter::once(leaf).chain(tree.ancestors(leaf)).filter(|&v| v != 0).all(|v| run.is_open(v - 1, t)) {
            total += w;
        }
    }
    Ok(total * params.p().powi(-(tree.height() as i32)))
}

/// Average box-dimension estimate of `trace ∩ d` over the traces that meet `d`.
pub fn exceptional_dim_estimate(traces: &[PercolationTrace], d: &TargetSet, scales: &[f64]) -> Result<f64> {
    let estimates = traces
        .iter()
        .map(|tr| trace_intersection(tr, d))
        .filter(|x| !x.is_empty())
        .map(|x| box_dimension_estimate(&x, scales))
        .collect::<Result<Vec<f64>>>()?;
    if estimates.is_empty() {
        return Err(Error::NoHits);
    }
    Ok(estimates.iter().sum::<f64>() / estimates.len() as f64)
}
