//! Kernel evaluations on space-time pairs `((v, s), (w, t))` and dense
//! kernel-matrix assembly over atoms `(leaf, time cell)`.
//!
//! All space dependence enters through the meet depth `|v ∧ w|`, all time
//! dependence through `|s - t|`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::target::{TargetSet, TimeGrid};
use crate::tree::{LevelCounts, PercolationParams, Tree};

/// Largest atom count for which a dense matrix is assembled.
pub const DEFAULT_ATOM_BUDGET: usize = 8192;

/// Space-time correlation kernel `(1 + (q/p) e^{-dt})^meet`.
///
/// At `dt = 0` the base is exactly `1/p`, so this coincides bit-for-bit with
/// [`lyons_value`]; the base is clamped to `1/p` so the kernel never exceeds
/// its `dt = 0` value through rounding.
#[inline]
pub fn h_value(params: PercolationParams, meet: u32, dt: f64) -> f64 {
    h_base(params, dt).powi(meet as i32)
}

#[inline]
fn h_base(params: PercolationParams, dt: f64) -> f64 {
    let top = 1.0 / params.p();
    if dt == 0.0 {
        top
    } else {
        (1.0 + params.odds() * (-dt).exp()).min(top)
    }
}

pub fn phi_value(params: PercolationParams, alpha: f64, meet: u32, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::ZeroTimeGap);
    }
    Ok(h_value(params, meet, dt) / dt.powf(alpha))
}

/// `p^{-meet}`.
#[inline]
pub fn lyons_value(params: PercolationParams, meet: u32) -> f64 {
    (1.0 / params.p()).powi(meet as i32)
}

/// `meet^{-beta} p^{-meet}`, with the value 1 at `meet = 0`.
#[inline]
pub fn g_value(params: PercolationParams, beta: f64, meet: u32) -> f64 {
    if meet == 0 {
        1.0
    } else {
        lyons_value(params, meet) / (meet as f64).powf(beta)
    }
}

pub fn riesz_value(alpha: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::ZeroTimeGap);
    }
    Ok(dt.powf(-alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    H { params: PercolationParams },
    Phi { params: PercolationParams, alpha: f64 },
    Lyons { params: PercolationParams },
    BetaSet { params: PercolationParams, beta: f64 },
    Riesz { alpha: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Phi { alpha, .. } | KernelSpec::Riesz { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in (0, 1)")))
            }
            KernelSpec::BetaSet { beta, .. } if !(0.0..=1.0).contains(&beta) => {
                Err(Error::InvalidParameter(format!("beta = {beta} must lie in [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Kernels that blow up at `dt = 0`.
    pub fn is_singular(&self) -> bool {
        matches!(self, KernelSpec::Phi { .. } | KernelSpec::Riesz { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::H { .. } => "h",
            KernelSpec::Phi { .. } => "phi",
            KernelSpec::Lyons { .. } => "lyons",
            KernelSpec::BetaSet { .. } => "betaset",
            KernelSpec::Riesz { .. } => "riesz",
        }
    }

    pub fn eval(&self, meet: u32, dt: f64) -> Result<f64> {
        match *self {
            KernelSpec::H { params } => Ok(h_value(params, meet, dt)),
            KernelSpec::Phi { params, alpha } => phi_value(params, alpha, meet, dt),
            KernelSpec::Lyons { params } => Ok(lyons_value(params, meet)),
            KernelSpec::BetaSet { params, beta } => Ok(g_value(params, beta, meet)),
            KernelSpec::Riesz { alpha } => riesz_value(alpha, dt),
        }
    }
}

/// How same-time pairs of singular kernels were evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagPolicy {
    /// Every entry is the kernel at the true time gap.
    Exact,
    /// Zero gaps replaced by the cell half-width (at most `epsilon`).
    HalfWidth { epsilon: f64 },
}

/// Dense symmetric kernel matrix over atoms laid out leaf-major:
/// atom `i` is `(leaf i / cells, cell i % cells)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    leaves: usize,
    cells: usize,
    entries: Vec<f64>,
    diag_policy: DiagPolicy,
}

impl KernelMatrix {
    /// Generic matrix (one "leaf" per row) from explicit rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidMatrix("empty".into()));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix("not square".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v.is_nan() || v < 0.0 {
                    return Err(Error::InvalidMatrix(format!("entry ({i},{j}) = {v}")));
                }
                if v != rows[j][i] {
                    return Err(Error::InvalidMatrix(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self {
            leaves: n,
            cells: 1,
            entries: rows.iter().flatten().copied().collect(),
            diag_policy: DiagPolicy::Exact,
        })
    }

    /// Matrix over time cells only, `entry(i, j) = f(i, j)`; `f` must be symmetric.
    pub fn from_time_fn(cells: usize, diag_policy: DiagPolicy, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let mut entries = vec![0.0; cells * cells];
        entries.par_chunks_mut(cells).enumerate().for_each(|(i, row)| {
            for (j, e) in row.iter_mut().enumerate() {
                *e = f(i.min(j), i.max(j));
            }
        });
        Self { leaves: 1, cells, entries, diag_policy }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.leaves * self.cells
    }

    #[inline]
    pub fn leaves(&self) -> usize {
        self.leaves
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.cells
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size() + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.size();
        &self.entries[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn diag_policy(&self) -> DiagPolicy {
        self.diag_policy
    }

    /// Atom index of `(leaf position, cell)`.
    #[inline]
    pub fn atom_index(&self, leaf: usize, cell: usize) -> Option<usize> {
        (leaf < self.leaves && cell < self.cells).then_some(leaf * self.cells + cell)
    }

    #[inline]
    pub fn atom(&self, i: usize) -> (usize, usize) {
        (i / self.cells, i % self.cells)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.size();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Assembles `K[(a,i),(b,j)] = kernel(|a ∧ b|, |t_i - t_j|)` over all leaves
/// of `tree` and all cells of `grid`.
pub fn assemble_matrix(tree: &Tree, grid: &TimeGrid, spec: KernelSpec) -> Result<KernelMatrix> {
    assemble_matrix_with_budget(tree, grid, spec, DEFAULT_ATOM_BUDGET)
}

pub fn assemble_matrix_with_budget(
    tree: &Tree,
    grid: &TimeGrid,
    spec: KernelSpec,
    budget: usize,
) -> Result<KernelMatrix> {
    spec.validate()?;
    if grid.is_empty() {
        return Err(Error::EmptyTarget);
    }
    if spec.is_singular() && grid.has_atomic_cells() {
        return Err(Error::SingularDiagonal);
    }
    let leaves = tree.leaf_count();
    let cells = grid.len();
    let size = leaves * cells;
    if size > budget {
        return Err(Error::BudgetExceeded {
            what: "kernel matrix atoms",
            needed: size as u128,
            budget: budget as u128,
        });
    }

    let diag_policy =
        if spec.is_singular() { DiagPolicy::HalfWidth { epsilon: grid.resolution() } } else { DiagPolicy::Exact };

    let centers = grid.centers();
    let hw = grid.half_widths();
    let mut gaps = vec![0.0; cells * cells];
    for i in 0..cells {
        for j in 0..cells {
            let dt = (centers[i] - centers[j]).abs();
            gaps[i * cells + j] = if dt == 0.0 && spec.is_singular() { hw[i].max(hw[j]) } else { dt };
        }
    }
    let meets = tree.leaf_meet_table();

    // time factors per cell pair; the meet enters through an integer power
    let (bases, denominators): (Vec<f64>, Vec<f64>) = gaps
        .iter()
        .map(|&dt| match spec {
            KernelSpec::H { params } => (h_base(params, dt), 1.0),
            KernelSpec::Phi { params, alpha } => (h_base(params, dt), dt.powf(alpha)),
            KernelSpec::Riesz { alpha } => (1.0, dt.powf(alpha)),
            KernelSpec::Lyons { params } | KernelSpec::BetaSet { params, .. } => (h_base(params, 0.0), 1.0),
        })
        .unzip();
    let space_only: Vec<f64> = match spec {
        KernelSpec::BetaSet { params, beta } => (0..=tree.height() as u32).map(|m| g_value(params, beta, m)).collect(),
        _ => Vec::new(),
    };

    let mut entries = vec![0.0; size * size];
    entries.par_chunks_mut(size).enumerate().for_each(|(row_idx, row)| {
        let (la, ca) = (row_idx / cells, row_idx % cells);
        for lb in 0..leaves {
            let meet = meets[la * leaves + lb];
            for cb in 0..cells {
                let k = ca * cells + cb;
                row[lb * cells + cb] = match spec {
                    KernelSpec::BetaSet { .. } => space_only[meet as usize],
                    KernelSpec::Riesz { .. } => 1.0 / denominators[k],
                    _ => bases[k].powi(meet as i32) / denominators[k],
                };
            }
        }
    });
    Ok(KernelMatrix { leaves, cells, entries, diag_policy })
}

/// Kernel of the uniform boundary measure against time: the average of
/// `h((v,s);(w,t))` over `w` uniform on the leaves of a spherically
/// symmetric tree, `1 + x Σ_{l=1}^{n} (1+x)^{l-1} / |G_l|` with
/// `x = (q/p) e^{-dt}`.
pub fn ss_time_kernel(levels: &LevelCounts, params: PercolationParams, dt: f64) -> f64 {
    let base = h_base(params, dt);
    let x = base - 1.0;
    if x <= 0.0 {
        return 1.0;
    }
    let (ln_x, ln_base) = (x.ln(), base.ln());
    let tail: f64 = (1..=levels.height()).map(|l| (ln_x + (l - 1) as f64 * ln_base - levels.ln_count(l)).exp()).sum();
    1.0 + tail
}

fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::NotASimplex("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::NotASimplex(format!("weights sum to {total}")));
    }
    Ok(())
}

/// `I_h(m × ν)` for the uniform boundary measure `m` of a spherically
/// symmetric tree and weights `nu` on the cells of `grid`.
pub fn ss_energy_series(levels: &LevelCounts, grid: &TimeGrid, nu: &[f64], params: PercolationParams) -> Result<f64> {
    if nu.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!("{} weights for {} cells", nu.len(), grid.len())));
    }
    check_simplex(nu)?;
    let c = grid.centers();
    let mut total = 0.0;
    for i in 0..nu.len() {
        if nu[i] == 0.0 {
            continue;
        }
        for j in 0..nu.len() {
            if nu[j] != 0.0 {
                total += nu[i] * nu[j] * ss_time_kernel(levels, params, (c[i] - c[j]).abs());
            }
        }
    }
    Ok(total)
}

/// Time-only matrix of `ss_time_kernel / dt^alpha` (or without the Riesz
/// factor when `alpha` is `None`), zero gaps replaced by the cell half-width.
pub fn ss_matrix(
    levels: &LevelCounts,
    grid: &TimeGrid,
    params: PercolationParams,
    alpha: Option<f64>,
) -> Result<KernelMatrix> {
    if grid.is_empty() {
        return Err(Error::EmptyTarget);
    }
    if let Some(a) = alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha = {a} must lie in (0, 1)")));
        }
        if grid.has_atomic_cells() {
            return Err(Error::SingularDiagonal);
        }
    }
    let c = grid.centers();
    let hw = grid.half_widths();
    let policy = match alpha {
        Some(_) => DiagPolicy::HalfWidth { epsilon: grid.resolution() },
        None => DiagPolicy::Exact,
    };
    Ok(KernelMatrix::from_time_fn(grid.len(), policy, |i, j| {
        let dt = (c[i] - c[j]).abs();
        let k = ss_time_kernel(levels, params, dt);
        match alpha {
            None => k,
            Some(a) => {
                let gap = if dt == 0.0 { hw[i].max(hw[j]) } else { dt };
                k / gap.powf(a)
            }
        }
    }))
}

/// `R(n) = ∬ (1 + (q/p) e^{-|t-s|})^n σ(ds) σ(dt)` with `σ` uniform over the
/// generator cells of `d`, evaluated at cell centers.
pub fn r_of_n(d: &TargetSet, n: u32, params: PercolationParams) -> Result<f64> {
    let g = d.generator().ok_or(Error::MissingGenerator)?;
    let centers: Vec<f64> = g.cells().iter().map(|c| 0.5 * (c.lo + c.hi)).collect();
    let w = 1.0 / centers.len() as f64;
    let off: f64 = (0..centers.len())
        .into_par_iter()
        .map(|i| centers[i + 1..].iter().map(|&cj| h_value(params, n, (centers[i] - cj).abs())).sum::<f64>())
        .sum();
    let diag = centers.len() as f64 * h_value(params, n, 0.0);
    Ok(w * w * (diag + 2.0 * off))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::discretize;
    use crate::tree::SphericalSpec;
    use proptest::prelude::*;

    fn pp(p: f64) -> PercolationParams {
        PercolationParams::new(p).unwrap()
    }

    #[test]
    fn h_examples() {
        assert_eq!(h_value(pp(0.3), 0, 0.7), 1.0);
        assert_eq!(h_value(pp(0.5), 2, 0.0), 4.0);
        // (1 + (2/3) e^{-1})^3 at 40 digits
        let expected = 1.930_957_650_619_216_8_f64;
        let v = h_value(pp(0.6), 3, 1.0);
        assert!((v - expected).abs() < 1e-14, "{v}");
    }

    #[test]
    fn phi_examples() {
        let p = pp(0.37);
        assert_eq!(phi_value(p, 0.4, 3, 1.0).unwrap(), h_value(p, 3, 1.0));
        assert_eq!(phi_value(p, 0.5, 0, 0.25).unwrap(), 2.0);
        let v = phi_value(pp(0.5), 0.5, 1, 0.5).unwrap();
        assert!((v - (1.0 + (-0.5f64).exp()) / 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(phi_value(p, 0.5, 1, 0.0), Err(Error::ZeroTimeGap));
    }

    #[test]
    fn lyons_examples() {
        assert_eq!(lyons_value(pp(0.2), 0), 1.0);
        assert!((lyons_value(pp(0.9), 3) - 1.371_742_112_482_853).abs() < 1e-12);
    }

    #[test]
    fn g_examples() {
        let p = pp(0.4);
        for m in 1..20 {
            assert_eq!(g_value(p, 0.0, m), lyons_value(p, m));
        }
        assert_eq!(g_value(p, 0.7, 0), 1.0);
        assert_eq!(g_value(pp(0.5), 1.0, 4), 4.0);
        let beta = 2f64.ln() / 3f64.ln();
        let v = g_value(pp(1.0 / 3.0), beta, 9);
        // 3^9 / 9^{log_3 2} = 19683 / 4
        assert!((v / (19683.0 / 4.0) - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn riesz_examples() {
        assert_eq!(riesz_value(0.3, 1.0).unwrap(), 1.0);
        for dt in [1e-3, 0.2, 0.9] {
            assert!((riesz_value(1e-9, dt).unwrap() - 1.0).abs() < 1e-6);
        }
        assert!((riesz_value(0.5, 0.04).unwrap() - 5.0).abs() < 1e-14);
        assert_eq!(riesz_value(0.5, 0.0), Err(Error::ZeroTimeGap));
    }

    #[test]
    fn kernel_spec_validation() {
        let p = pp(0.5);
        assert!(KernelSpec::Phi { params: p, alpha: 1.0 }.validate().is_err());
        assert!(KernelSpec::Riesz { alpha: 0.0 }.validate().is_err());
        assert!(KernelSpec::BetaSet { params: p, beta: 1.5 }.validate().is_err());
        assert!(KernelSpec::BetaSet { params: p, beta: 0.0 }.validate().is_ok());
    }

    #[test]
    fn assemble_single_ray_lyons() {
        let t = Tree::path(3);
        let g = TimeGrid::single(0.5);
        let k = assemble_matrix(&t, &g, KernelSpec::Lyons { params: pp(0.9) }).unwrap();
        assert_eq!(k.size(), 1);
        assert!((k.get(0, 0) / 0.9f64.powi(-3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn assemble_binary_h_singleton() {
        let t = Tree::spherical(&SphericalSpec::new(vec![2, 2])).unwrap();
        let k = assemble_matrix(&t, &TimeGrid::single(0.3), KernelSpec::H { params: pp(0.5) }).unwrap();
        let meets = t.leaf_meet_table();
        for i in 0..4 {
            for j in 0..4 {
                let expected = 2f64.powi(meets[i * 4 + j] as i32);
                assert_eq!(k.get(i, j), expected);
            }
        }
        assert_eq!(k.row(0), &[4.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn assemble_rejects_atomic_singular_and_budget() {
        let t = Tree::path(2);
        let g = TimeGrid::single(0.0);
        assert_eq!(
            assemble_matrix(&t, &g, KernelSpec::Phi { params: pp(0.5), alpha: 0.5 }),
            Err(Error::SingularDiagonal)
        );
        let t = Tree::spherical(&SphericalSpec::new(vec![4, 4])).unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 10);
        assert!(matches!(
            assemble_matrix_with_budget(&t, &g, KernelSpec::H { params: pp(0.5) }, 100),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn assemble_phi_records_half_width_diagonal() {
        let t = Tree::spherical(&SphericalSpec::new(vec![2])).unwrap();
        let d = TargetSet::from_intervals(&[(0.0, 1.0)]).unwrap();
        let g = discretize(&d, 0.125).unwrap();
        let p = pp(0.5);
        let k = assemble_matrix(&t, &g, KernelSpec::Phi { params: p, alpha: 0.5 }).unwrap();
        assert_eq!(k.diag_policy(), DiagPolicy::HalfWidth { epsilon: 0.125 });
        assert_eq!(k.get(0, 0), phi_value(p, 0.5, 1, 0.125).unwrap());
        // different leaves, same cell: meet 0
        assert_eq!(k.get(0, 4), phi_value(p, 0.5, 0, 0.125).unwrap());
        assert_eq!(k.get(1, 2), phi_value(p, 0.5, 1, 0.25).unwrap());
        assert_eq!(k.max_asymmetry(), 0.0);
    }

    #[test]
    fn assemble_h_monotone_in_time_scaling() {
        let t = Tree::galton_watson(&[0.2, 0.4, 0.4], 4, 5).unwrap();
        let p = pp(0.6);
        let narrow = TimeGrid::uniform(0.0, 0.5, 5);
        let wide = TimeGrid::uniform(0.0, 1.0, 5);
        let a = assemble_matrix(&t, &narrow, KernelSpec::H { params: p }).unwrap();
        let b = assemble_matrix(&t, &wide, KernelSpec::H { params: p }).unwrap();
        for (x, y) in a.entries().iter().zip(b.entries()) {
            assert!(y <= x);
        }
    }

    #[test]
    fn ss_series_binary_point_mass() {
        let levels = LevelCounts::from_counts(&[1, 2, 4]).unwrap();
        let g = TimeGrid::single(0.4);
        assert!((ss_energy_series(&levels, &g, &[1.0], pp(0.5)).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ss_series_path_point_mass_is_lyons_energy() {
        // the uniform measure on a single ray is a point mass on its leaf
        let levels = LevelCounts::from_counts(&[1, 1, 1, 1, 1]).unwrap();
        let p = pp(0.7);
        let v = ss_energy_series(&levels, &TimeGrid::single(0.0), &[1.0], p).unwrap();
        assert!((v / lyons_value(p, 4) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ss_series_rejects_bad_measures() {
        let levels = LevelCounts::from_counts(&[1, 2]).unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 2);
        assert!(matches!(ss_energy_series(&levels, &g, &[0.7, 0.7], pp(0.5)), Err(Error::NotASimplex(_))));
        assert!(matches!(ss_energy_series(&levels, &g, &[1.0], pp(0.5)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn r_of_n_degenerate_generator() {
        let d = TargetSet::cantor(3, &[1], 5).unwrap();
        let p = pp(0.4);
        for n in [1u32, 5, 30] {
            assert!((r_of_n(&d, n, p).unwrap() / p.p().powi(-(n as i32)) - 1.0).abs() < 1e-14);
        }
        let plain = TargetSet::from_intervals(&[(0.0, 1.0)]).unwrap();
        assert_eq!(r_of_n(&plain, 3, p), Err(Error::MissingGenerator));
    }

    #[test]
    fn r_of_n_full_digit_set_scales_like_inverse_n() {
        let p = pp(0.5);
        // cells of width 2^-12 resolve time gaps well below 1/n for these n
        let d = TargetSet::cantor(2, &[0, 1], 12).unwrap();
        let vals: Vec<f64> = [8u32, 16, 32, 64, 128, 256]
            .iter()
            .map(|&n| r_of_n(&d, n, p).unwrap() * n as f64 * p.p().powi(n as i32))
            .collect();
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 2.0, "{vals:?}");
    }

    proptest! {
        #[test]
        fn prop_h_at_zero_is_lyons(p in 0.01f64..0.99, meet in 0u32..200) {
            let params = pp(p);
            prop_assert_eq!(h_value(params, meet, 0.0), lyons_value(params, meet));
        }

        #[test]
        fn prop_h_bounds_and_monotone(p in 0.05f64..0.95, meet in 1u32..60, dt in 0.0f64..5.0, step in 1e-3f64..1.0) {
            let params = pp(p);
            let a = h_value(params, meet, dt);
            let b = h_value(params, meet, dt + step);
            prop_assert!(a >= 1.0 && a <= lyons_value(params, meet));
            prop_assert!(b < a);
            // per-generation factor does not depend on the meet
            let per = a.powf(1.0 / meet as f64);
            let other = h_value(params, meet + 7, dt).powf(1.0 / (meet + 7) as f64);
            prop_assert!((per - other).abs() < 1e-12 * per);
        }

        #[test]
        fn prop_phi_non_decreasing_in_alpha(p in 0.05f64..0.95, meet in 0u32..30, dt in 1e-4f64..1.0, a in 0.01f64..0.98, da in 0.0f64..0.01) {
            let params = pp(p);
            prop_assert!(phi_value(params, a + da, meet, dt).unwrap() >= phi_value(params, a, meet, dt).unwrap());
        }
    }
}
