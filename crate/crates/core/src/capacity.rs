//! Energies, capacities and dimension formulas.
//!
//! Capacity is `1 / min μᵀKμ` over probability vectors on the atoms of a
//! [`KernelMatrix`]; see [`minimize_energy`].

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{assemble_matrix, ss_matrix, DiagPolicy, KernelMatrix, KernelSpec};
use crate::target::{discretize, TargetSet, TimeGrid};
use crate::tree::{LevelCounts, PercolationParams, Tree};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_CUTOFF: f64 = 1e-6;
/// Weights above this are "in the support" for equilibrium diagnostics.
pub const SUPPORT_THRESHOLD: f64 = 1e-9;
const REFRESH_EVERY: usize = 64;

/// Probability measure on atoms `(leaf position, cell index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct ProductMeasure {
    atoms: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMeasure {
    atoms: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl TryFrom<RawMeasure> for ProductMeasure {
    type Error = Error;
    fn try_from(r: RawMeasure) -> Result<Self> {
        Self::new(r.atoms, r.weights)
    }
}

impl From<ProductMeasure> for RawMeasure {
    fn from(m: ProductMeasure) -> Self {
        RawMeasure { atoms: m.atoms, weights: m.weights }
    }
}

impl ProductMeasure {
    pub fn new(atoms: Vec<(usize, usize)>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!("{} atoms, {} weights", atoms.len(), weights.len())));
        }
        if atoms.is_empty() {
            return Err(Error::NotASimplex("no atoms".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::NotASimplex("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NotASimplex(format!("weights sum to {total}")));
        }
        let mut seen = atoms.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::NotASimplex("repeated atom".into()));
        }
        Ok(Self { atoms, weights })
    }

    pub fn point(leaf: usize, cell: usize) -> Self {
        Self { atoms: vec![(leaf, cell)], weights: vec![1.0] }
    }

    /// `leaf_weights ⊗ cell_weights`, keeping only positive products.
    pub fn product(leaf_weights: &[f64], cell_weights: &[f64]) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (a, &wa) in leaf_weights.iter().enumerate() {
            for (i, &wi) in cell_weights.iter().enumerate() {
                if wa * wi > 0.0 {
                    atoms.push((a, i));
                    weights.push(wa * wi);
                }
            }
        }
        Self::new(atoms, weights)
    }

    /// Uniform over `leaves` leaves, all at cell `cell`.
    pub fn uniform_leaves(leaves: usize, cell: usize) -> Result<Self> {
        let w = 1.0 / leaves as f64;
        Self::new((0..leaves).map(|a| (a, cell)).collect(), vec![w; leaves])
    }

    pub fn atoms(&self) -> &[(usize, usize)] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total weight per leaf position.
    pub fn leaf_marginal(&self, leaves: usize) -> Vec<f64> {
        let mut m = vec![0.0; leaves];
        for (&(a, _), &w) in self.atoms.iter().zip(&self.weights) {
            m[a] += w;
        }
        m
    }

    /// Total weight per time cell.
    pub fn cell_marginal(&self, cells: usize) -> Vec<f64> {
        let mut m = vec![0.0; cells];
        for (&(_, i), &w) in self.atoms.iter().zip(&self.weights) {
            m[i] += w;
        }
        m
    }

    fn indices(&self, k: &KernelMatrix) -> Result<Vec<usize>> {
        self.atoms
            .iter()
            .map(|&(a, i)| {
                k.atom_index(a, i).ok_or_else(|| {
                    Error::DimensionMismatch(format!(
                        "atom ({a}, {i}) outside {} leaves x {} cells",
                        k.leaves(),
                        k.cells()
                    ))
                })
            })
            .collect()
    }
}

/// `μᵀKμ`; zero-weight atoms never contribute.
pub fn energy(k: &KernelMatrix, mu: &ProductMeasure) -> Result<f64> {
    let idx = mu.indices(k)?;
    let w = mu.weights();
    let mut total = 0.0;
    for (s, &i) in idx.iter().enumerate() {
        if w[s] == 0.0 {
            continue;
        }
        let row = k.row(i);
        let inner: f64 = idx.iter().zip(w).filter(|(_, &wj)| wj > 0.0).map(|(&j, &wj)| row[j] * wj).sum();
        total += w[s] * inner;
    }
    Ok(total)
}

/// `(Kμ)_x` for every atom `x` of `k`.
pub fn potential(k: &KernelMatrix, mu: &ProductMeasure) -> Result<Vec<f64>> {
    let idx = mu.indices(k)?;
    let w = mu.weights();
    Ok((0..k.size())
        .into_par_iter()
        .map(|x| {
            let row = k.row(x);
            idx.iter().zip(w).filter(|(_, &wj)| wj > 0.0).map(|(&j, &wj)| row[j] * wj).sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    #[serde(with = "crate::serde_float")]
    pub energy: f64,
    pub capacity: f64,
    pub measure: ProductMeasure,
    /// Frank–Wolfe gap `2(E - min_x (Kμ)_x)`.
    #[serde(with = "crate::serde_float")]
    pub gap: f64,
    /// Away gap `2(max_{x ∈ supp μ} (Kμ)_x - E)`.
    #[serde(with = "crate::serde_float")]
    pub support_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diag_policy: DiagPolicy,
    pub epsilon: f64,
}

impl CapacityResult {
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged { gap: self.gap, iterations: self.iterations })
        }
    }
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Atoms with finite self-interaction, indexed `0..idx.len()`.
struct Active<'a> {
    k: &'a KernelMatrix,
    idx: Vec<usize>,
}

impl Active<'_> {
    fn len(&self) -> usize {
        self.idx.len()
    }

    fn entry(&self, a: usize, b: usize) -> f64 {
        self.k.get(self.idx[a], self.idx[b])
    }

    fn potential(&self, x: &[f64]) -> Vec<f64> {
        let support: Vec<usize> = (0..x.len()).filter(|&s| x[s] > 0.0).collect();
        (0..self.len())
            .into_par_iter()
            .map(|a| {
                let row = self.k.row(self.idx[a]);
                support.iter().map(|&s| row[self.idx[s]] * x[s]).sum()
            })
            .collect()
    }

    /// `(2(E - min g), 2(max_{supp x} g - E))`.
    fn gaps(x: &[f64], g: &[f64], e: f64) -> (f64, f64) {
        let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = (0..x.len()).filter(|&s| x[s] > 0.0).map(|s| g[s]).fold(f64::NEG_INFINITY, f64::max);
        (2.0 * (e - min), 2.0 * (max - e))
    }

    fn factor(&self, set: &[usize]) -> Option<Cholesky<f64, Dyn>> {
        let m = set.len();
        DMatrix::from_fn(m, m, |i, j| self.entry(set[i], set[j])).cholesky()
    }

    /// Minimizer of `yᵀK_SS y` subject to `Σy = 1`, without sign constraints,
    /// given the Cholesky factor of `K_SS`.
    fn affine_minimizer(&self, set: &[usize], chol: &Cholesky<f64, Dyn>) -> Option<Vec<f64>> {
        let m = set.len();
        let ones = DVector::from_element(m, 1.0);
        let mut z = chol.solve(&ones);
        for _ in 0..2 {
            let r = DVector::from_iterator(
                m,
                (0..m)
                    .into_par_iter()
                    .map(|i| 1.0 - (0..m).map(|j| self.entry(set[i], set[j]) * z[j]).sum::<f64>())
                    .collect::<Vec<_>>(),
            );
            z += chol.solve(&r);
        }
        let total = z.sum();
        if !(total > 0.0) || z.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(z.iter().map(|v| v / total).collect())
    }
}

/// Largest active set the corral phase will factorize.
const CORRAL_MAX_SET: usize = 3072;

/// Active-set descent over "corrals": the energy is minimized exactly on the
/// affine hull of the current support, stepping back to the simplex and
/// dropping atoms when the affine minimizer leaves it, and violated atoms
/// (potential below the energy) are added in batches. Returns `true` when
/// both gaps are within `tol`; `false` hands over to Frank–Wolfe.
fn corral_phase(act: &Active, x: &mut [f64], tol: f64, max_iter: usize, iterations: &mut usize) -> bool {
    let mut set: Vec<usize> = (0..x.len()).filter(|&s| x[s] > 0.0).collect();
    let mut batch = 1usize;
    let mut last_energy = f64::INFINITY;
    loop {
        let g = act.potential(x);
        let e = dot(x, &g);
        let (fw_gap, away_gap) = Active::gaps(x, &g, e);
        if fw_gap <= tol && away_gap <= tol {
            return true;
        }
        if *iterations >= max_iter {
            return false;
        }
        if e >= last_energy {
            // no progress with the current batch size
            if batch == 1 {
                return false;
            }
            batch = 1;
        }
        last_energy = e;
        let mut violators: Vec<usize> = (0..x.len()).filter(|&s| x[s] == 0.0 && g[s] < e).collect();
        violators.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
        violators.truncate(batch.max(1));
        set.extend(&violators);
        set.sort_unstable();
        batch = (2 * batch).max(set.len() / 2).max(1);
        if set.len() > CORRAL_MAX_SET {
            return false;
        }
        *iterations += 1;

        // minor cycle: move toward the affine minimizer until it is feasible
        let Some(mut chol) = act.factor(&set) else { return false };
        loop {
            let Some(y) = act.affine_minimizer(&set, &chol) else { return false };
            if y.iter().all(|&v| v > 0.0) {
                for (&s, &v) in set.iter().zip(&y) {
                    x[s] = v;
                }
                break;
            }
            let mut theta = 1.0f64;
            let mut hit = usize::MAX;
            for (pos, (&s, &v)) in set.iter().zip(&y).enumerate() {
                if v <= 0.0 {
                    let t = x[s] / (x[s] - v);
                    if t < theta || hit == usize::MAX {
                        theta = t;
                        hit = pos;
                    }
                }
            }
            for (&s, &v) in set.iter().zip(&y) {
                x[s] += theta * (v - x[s]);
            }
            x[set[hit]] = 0.0;
            set.remove(hit);
            chol = chol.remove_column(hit);
            if set.iter().any(|&s| x[s] <= 0.0) {
                set.retain(|&s| x[s] > 0.0);
                let Some(c) = act.factor(&set) else { return false };
                chol = c;
            }
            let total: f64 = set.iter().map(|&s| x[s]).sum();
            set.iter().for_each(|&s| x[s] /= total);
            *iterations += 1;
            if *iterations >= max_iter {
                return false;
            }
        }
    }
}

/// Away-step Frank–Wolfe with exact line search, continuing from `x`.
/// The potential is updated incrementally and recomputed exactly every
/// [`REFRESH_EVERY`] steps and before convergence is declared.
fn frank_wolfe(
    act: &Active,
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    iterations: &mut usize,
) -> (f64, f64, f64, bool) {
    let n = act.len();
    let mut g = act.potential(x);
    let mut e = dot(x, &g);
    let mut since_refresh = 0;
    let mut stalled = false;
    loop {
        if since_refresh >= REFRESH_EVERY {
            g = act.potential(x);
            e = dot(x, &g);
            since_refresh = 0;
        }
        let j = argmin(&g);
        let mut a = usize::MAX;
        for s in 0..n {
            if x[s] > 0.0 && (a == usize::MAX || g[s] > g[a]) {
                a = s;
            }
        }
        let fw_gap = 2.0 * (e - g[j]);
        let away_gap = 2.0 * (g[a] - e);
        if fw_gap <= tol && away_gap <= tol {
            if since_refresh == 0 {
                return (e, fw_gap, away_gap, true);
            }
            since_refresh = REFRESH_EVERY;
            continue;
        }
        if *iterations >= max_iter {
            return (e, fw_gap, away_gap, false);
        }
        *iterations += 1;
        since_refresh += 1;

        let toward = fw_gap >= away_gap;
        let (slope, curvature, gamma_max) = if toward {
            (g[j] - e, act.entry(j, j) - 2.0 * g[j] + e, 1.0)
        } else {
            let gm = if x[a] < 1.0 { x[a] / (1.0 - x[a]) } else { f64::INFINITY };
            (e - g[a], e - 2.0 * g[a] + act.entry(a, a), gm)
        };
        let gamma = if curvature > 0.0 { (-slope / curvature).clamp(0.0, gamma_max) } else { gamma_max };
        if !(gamma > 0.0) || !gamma.is_finite() {
            if stalled {
                return (e, fw_gap, away_gap, false);
            }
            stalled = true;
            since_refresh = REFRESH_EVERY;
            continue;
        }
        stalled = false;
        if toward {
            let col = act.k.row(act.idx[j]);
            for s in 0..n {
                x[s] *= 1.0 - gamma;
                g[s] = (1.0 - gamma) * g[s] + gamma * col[act.idx[s]];
            }
            x[j] += gamma;
        } else {
            let col = act.k.row(act.idx[a]);
            for s in 0..n {
                x[s] *= 1.0 + gamma;
                g[s] = (1.0 + gamma) * g[s] - gamma * col[act.idx[s]];
            }
            x[a] -= gamma;
            if gamma == gamma_max || x[a] < 0.0 {
                x[a] = 0.0;
            }
        }
        let total: f64 = x.iter().sum();
        if (total - 1.0).abs() > 1e-14 {
            x.iter_mut().for_each(|w| *w /= total);
            g.iter_mut().for_each(|v| *v /= total);
        }
        e = dot(x, &g);
    }
}

/// Minimizes `μᵀKμ` over the simplex, starting from the uniform measure.
/// Atoms whose self-interaction is not finite carry no mass; if no atom is
/// finite the capacity is 0.
///
/// An active-set phase solves the problem exactly on successive supports;
/// away-step Frank–Wolfe takes over if it stalls and certifies the result.
/// Returns `converged = false` rather than an error when `max_iter` runs
/// out; see [`CapacityResult::ensure_converged`].
pub fn minimize_energy(k: &KernelMatrix, tol: f64, max_iter: usize) -> Result<CapacityResult> {
    if k.size() == 0 {
        return Err(Error::InvalidMatrix("empty".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be non-negative")));
    }
    let epsilon = match k.diag_policy() {
        DiagPolicy::HalfWidth { epsilon } => epsilon,
        DiagPolicy::Exact => 0.0,
    };
    let idx: Vec<usize> = (0..k.size()).filter(|&i| k.get(i, i).is_finite()).collect();
    if idx.is_empty() {
        let w = 1.0 / k.size() as f64;
        let measure = ProductMeasure::new((0..k.size()).map(|i| k.atom(i)).collect(), vec![w; k.size()])?;
        return Ok(CapacityResult {
            energy: f64::INFINITY,
            capacity: 0.0,
            measure,
            gap: 0.0,
            support_gap: 0.0,
            iterations: 0,
            converged: true,
            diag_policy: k.diag_policy(),
            epsilon,
        });
    }
    let act = Active { k, idx };
    let n = act.len();
    let mut x = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    let start = x.clone();
    if !corral_phase(&act, &mut x, tol, max_iter, &mut iterations) && x.iter().any(|v| !v.is_finite()) {
        x = start;
    }
    let (e, fw_gap, away_gap, converged) = frank_wolfe(&act, &mut x, tol, max_iter, &mut iterations);

    let (atoms, weights): (Vec<_>, Vec<_>) = (0..n).filter(|&s| x[s] > 0.0).map(|s| (k.atom(act.idx[s]), x[s])).unzip();
    let total: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|w| w / total).collect();
    Ok(CapacityResult {
        energy: e,
        capacity: if e.is_finite() && e > 0.0 { 1.0 / e } else { 0.0 },
        measure: ProductMeasure::new(atoms, weights)?,
        gap: fw_gap,
        support_gap: away_gap,
        iterations,
        converged,
        diag_policy: k.diag_policy(),
        epsilon,
    })
}

/// Assembles the kernel of `spec` over `∂tree × grid` and minimizes its energy.
pub fn capacity(tree: &Tree, grid: &TimeGrid, spec: KernelSpec, tol: f64, max_iter: usize) -> Result<CapacityResult> {
    minimize_energy(&assemble_matrix(tree, grid, spec)?, tol, max_iter)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub resolution: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub cutoff: f64,
}

impl SweepOptions {
    pub fn new(resolution: f64) -> Self {
        Self { resolution, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, cutoff: DEFAULT_CUTOFF }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSweep {
    pub alphas: Vec<f64>,
    pub capacities: Vec<f64>,
    /// Largest α with capacity above `cutoff`; 0 if there is none.
    pub threshold: f64,
    pub cutoff: f64,
    pub epsilon: f64,
    /// Capacities non-increasing in α up to relative noise 1e-9.
    pub monotone: bool,
}

impl DimSweep {
    fn from_capacities(alphas: &[f64], capacities: Vec<f64>, cutoff: f64, epsilon: f64) -> Self {
        let threshold =
            alphas.iter().zip(&capacities).filter(|(_, &c)| c > cutoff).map(|(&a, _)| a).fold(0.0, f64::max);
        let mut order: Vec<usize> = (0..alphas.len()).collect();
        order.sort_by(|&a, &b| alphas[a].total_cmp(&alphas[b]));
        let monotone = order.windows(2).all(|w| capacities[w[1]] <= capacities[w[0]] * (1.0 + 1e-9));
        Self { alphas: alphas.to_vec(), capacities, threshold, cutoff, epsilon, monotone }
    }
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::InvalidParameter("alphas must be non-empty and lie in (0, 1)".into()));
    }
    Ok(())
}

/// `Cap_{φ(α)}(∂tree × d)` for each α, on cells of half-width at most
/// `opts.resolution`.
pub fn capacity_sweep(
    tree: &Tree,
    d: &TargetSet,
    params: PercolationParams,
    alphas: &[f64],
    opts: &SweepOptions,
) -> Result<DimSweep> {
    check_alphas(alphas)?;
    let grid = discretize(d, opts.resolution)?;
    if grid.has_atomic_cells() {
        return Err(Error::SingularDiagonal);
    }
    let caps = alphas
        .par_iter()
        .map(|&alpha| {
            let k = assemble_matrix(tree, &grid, KernelSpec::Phi { params, alpha })?;
            Ok(minimize_energy(&k, opts.tol, opts.max_iter)?.ensure_converged()?.capacity)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DimSweep::from_capacities(alphas, caps, opts.cutoff, opts.resolution))
}

/// Capacity of `∂G × grid` for a spherically symmetric tree with level sizes
/// `levels`, restricted to measures whose leaf marginal is uniform. For
/// spherically symmetric trees this restriction loses nothing, since the
/// energy is convex and invariant under automorphisms.
pub fn ss_capacity(
    levels: &LevelCounts,
    grid: &TimeGrid,
    params: PercolationParams,
    alpha: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<CapacityResult> {
    minimize_energy(&ss_matrix(levels, grid, params, alpha)?, tol, max_iter)
}

/// [`capacity_sweep`] for spherically symmetric trees given by level sizes,
/// without materializing the leaves.
pub fn ss_capacity_sweep(
    levels: &LevelCounts,
    d: &TargetSet,
    params: PercolationParams,
    alphas: &[f64],
    opts: &SweepOptions,
) -> Result<DimSweep> {
    check_alphas(alphas)?;
    let grid = discretize(d, opts.resolution)?;
    let caps = alphas
        .par_iter()
        .map(|&alpha| {
            Ok(ss_capacity(levels, &grid, params, Some(alpha), opts.tol, opts.max_iter)?.ensure_converged()?.capacity)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DimSweep::from_capacities(alphas, caps, opts.cutoff, opts.resolution))
}

/// Outcome of a dyadic-block ratio test on a positive series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesVerdict {
    Converges,
    Diverges,
    Inconclusive,
}

/// `log2(B_K / B_{K-1})` for the last complete dyadic block
/// `B_k = Σ_{l ∈ [2^k, 2^{k+1})} t_l`, with `ln_terms[l - 1] = ln t_l`.
fn last_block_log2_ratio(ln_terms: &[f64]) -> Option<f64> {
    let n = ln_terms.len();
    let blocks = (usize::BITS - (n + 1).leading_zeros()) as usize - 1;
    if blocks < 2 {
        return None;
    }
    let block = |k: usize| -> f64 {
        let (lo, hi) = (1usize << k, (1usize << (k + 1)) - 1);
        let slice = &ln_terms[lo - 1..hi];
        let m = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + slice.iter().map(|&t| (t - m).exp()).sum::<f64>().ln()
    };
    let k = blocks - 1;
    Some((block(k) - block(k - 1)) / std::f64::consts::LN_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimhEstimate {
    pub value: f64,
    /// Some candidate α had a block ratio within 0.05 of 1 in log2.
    pub inconclusive: bool,
    pub alphas: Vec<f64>,
    pub log2_ratios: Vec<f64>,
}

/// Numerical `sup{α : Σ_l p^{-l} l^{α-1} / |G_l| < ∞}` over `alphas ∪ {1}`,
/// deciding each α by the last dyadic block ratio over all levels in
/// `levels`. Returns 0 if no candidate converges.
pub fn dimh_sg(levels: &LevelCounts, params: PercolationParams, alphas: &[f64]) -> DimhEstimate {
    let mut candidates: Vec<f64> = alphas.iter().copied().filter(|a| (0.0..=1.0).contains(a)).collect();
    candidates.push(1.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let n = levels.height();
    let ln_p = params.p().ln();
    let ratios: Vec<f64> = candidates
        .iter()
        .map(|&alpha| {
            let ln_terms: Vec<f64> =
                (1..=n).map(|l| -(l as f64) * ln_p + (alpha - 1.0) * (l as f64).ln() - levels.ln_count(l)).collect();
            last_block_log2_ratio(&ln_terms).unwrap_or(f64::NAN)
        })
        .collect();
    let value = candidates.iter().zip(&ratios).filter(|(_, &r)| r < 0.0).map(|(&a, _)| a).fold(0.0, f64::max);
    let inconclusive = ratios.iter().any(|r| r.is_nan() || r.abs() < 0.05);
    DimhEstimate { value, inconclusive, alphas: candidates, log2_ratios: ratios }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpsReport {
    pub terms: usize,
    pub partial_sum: f64,
    pub log2_ratio: f64,
    pub verdict: SeriesVerdict,
}

/// Partial sum of `Σ_{l=1}^{terms} p^{-l} / (l |G_l|)` with a dyadic block
/// verdict: converges when the last block ratio is at most `2^{-0.05}`,
/// diverges when it is at least `2^{-0.01}`.
pub fn hps_condition(levels: &LevelCounts, params: PercolationParams, terms: usize) -> HpsReport {
    let terms = terms.min(levels.height());
    let ln_p = params.p().ln();
    let ln_terms: Vec<f64> = (1..=terms).map(|l| -(l as f64) * ln_p - (l as f64).ln() - levels.ln_count(l)).collect();
    let partial_sum = ln_terms.iter().map(|t| t.exp()).sum();
    let log2_ratio = last_block_log2_ratio(&ln_terms).unwrap_or(f64::NAN);
    let verdict = if terms < 16 || log2_ratio.is_nan() {
        SeriesVerdict::Inconclusive
    } else if log2_ratio <= -0.05 {
        SeriesVerdict::Converges
    } else if log2_ratio >= -0.01 {
        SeriesVerdict::Diverges
    } else {
        SeriesVerdict::Inconclusive
    };
    HpsReport { terms, partial_sum, log2_ratio, verdict }
}

/// `([dim - (1 - δ)]₊, [dim - (1 - Δ)]₊)`.
pub fn sandwich_bounds(dim_sg: f64, delta: f64, big_delta: f64) -> Result<(f64, f64)> {
    if delta > big_delta {
        return Err(Error::OrderViolation { delta, big_delta });
    }
    if !(0.0..=1.0).contains(&delta) || !(0.0..=1.0).contains(&big_delta) || !(0.0..=1.0).contains(&dim_sg) {
        return Err(Error::InvalidParameter("dimensions must lie in [0, 1]".into()));
    }
    Ok(((dim_sg - (1.0 - delta)).max(0.0), (dim_sg - (1.0 - big_delta)).max(0.0)))
}
