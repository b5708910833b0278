//! Closed target sets of times: finite unions of intervals and points,
//! digit-restricted Cantor sets, their discretization into time cells, and
//! box-counting dimension estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of generator cells of a Cantor target.
pub const DEFAULT_CELL_BUDGET: usize = 1 << 22;

/// Closed interval `[lo, hi]`; `lo == hi` is a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::ReversedInterval(lo, hi));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    #[inline]
    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

/// Sorts and merges overlapping or touching closed intervals.
pub fn normalize(mut intervals: Vec<Interval>) -> Vec<Interval> {
    intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
    let mut out: Vec<Interval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
            _ => out.push(iv),
        }
    }
    out
}

/// Base-`b` digit-restricted Cantor construction truncated at depth `m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CantorGenerator {
    pub base: u32,
    pub digits: Vec<u32>,
    pub depth: u32,
}

impl CantorGenerator {
    pub fn dimension(&self) -> f64 {
        (self.digits.len() as f64).ln() / (self.base as f64).ln()
    }

    /// Width `b^{-m}` of one generator cell.
    pub fn cell_width(&self) -> f64 {
        (self.base as f64).powi(-(self.depth as i32))
    }

    pub fn cell_count(&self) -> usize {
        self.digits.len().pow(self.depth)
    }

    /// The `|B|^m` generator cells in increasing order.
    pub fn cells(&self) -> Vec<Interval> {
        let scale = (self.base as f64).powi(self.depth as i32);
        let mut numerators: Vec<u64> = vec![0];
        for _ in 0..self.depth {
            numerators = numerators
                .iter()
                .flat_map(|&k| self.digits.iter().map(move |&d| k * self.base as u64 + d as u64))
                .collect();
        }
        numerators.into_iter().map(|k| Interval { lo: k as f64 / scale, hi: (k + 1) as f64 / scale }).collect()
    }
}

/// A closed target set `D`, kept as sorted disjoint closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    intervals: Vec<Interval>,
    generator: Option<CantorGenerator>,
    beta: Option<f64>,
}

impl TargetSet {
    pub fn from_intervals(spec: &[(f64, f64)]) -> Result<Self> {
        if spec.is_empty() {
            return Err(Error::EmptySpec);
        }
        let intervals = spec.iter().map(|&(a, b)| Interval::new(a, b)).collect::<Result<Vec<_>>>()?;
        let intervals = normalize(intervals);
        let beta = if intervals.iter().any(|iv| !iv.is_point()) { 1.0 } else { 0.0 };
        Ok(Self { intervals, generator: None, beta: Some(beta) })
    }

    pub fn point(t: f64) -> Result<Self> {
        Self::from_intervals(&[(t, t)])
    }

    /// The empty target; never hit.
    pub fn empty() -> Self {
        Self { intervals: Vec::new(), generator: None, beta: None }
    }

    pub fn cantor(base: u32, digits: &[u32], depth: u32) -> Result<Self> {
        Self::cantor_with_budget(base, digits, depth, DEFAULT_CELL_BUDGET)
    }

    pub fn cantor_with_budget(base: u32, digits: &[u32], depth: u32, budget: usize) -> Result<Self> {
        if base < 2 {
            return Err(Error::InvalidGenerator(format!("base {base} must be at least 2")));
        }
        let mut digits = digits.to_vec();
        digits.sort_unstable();
        digits.dedup();
        if digits.is_empty() {
            return Err(Error::EmptyDigitSet);
        }
        if let Some(&d) = digits.iter().find(|&&d| d >= base) {
            return Err(Error::InvalidGenerator(format!("digit {d} not below base {base}")));
        }
        let needed = (digits.len() as u128).checked_pow(depth).unwrap_or(u128::MAX);
        if needed > budget as u128 {
            return Err(Error::BudgetExceeded { what: "Cantor generator cells", needed, budget: budget as u128 });
        }
        let generator = CantorGenerator { base, digits, depth };
        let beta = generator.dimension();
        let intervals = normalize(generator.cells());
        Ok(Self { intervals, generator: Some(generator), beta: Some(beta) })
    }

    #[inline]
    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    #[inline]
    pub fn generator(&self) -> Option<&CantorGenerator> {
        self.generator.as_ref()
    }

    #[inline]
    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn sup(&self) -> Option<f64> {
        self.intervals.last().map(|iv| iv.hi)
    }

    pub fn inf(&self) -> Option<f64> {
        self.intervals.first().map(|iv| iv.lo)
    }

    /// True when every component is a single point.
    pub fn is_atomic(&self) -> bool {
        self.intervals.iter().all(Interval::is_point)
    }

    pub fn lebesgue_measure(&self) -> f64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    /// Scales `[b^{-m}, 1]` over which a Cantor target's ball-mass scaling
    /// is certified by its finite generator.
    pub fn certified_scale_range(&self) -> Option<(f64, f64)> {
        self.generator.as_ref().map(|g| (g.cell_width(), 1.0))
    }

    /// Mass of `[x - r, x + r]` under the uniform weighting of generator cells.
    pub fn cell_mass(&self, x: f64, r: f64) -> Result<f64> {
        let g = self.generator.as_ref().ok_or(Error::MissingGenerator)?;
        let ball = Interval { lo: x - r, hi: x + r };
        let width = g.cell_width();
        let weight = 1.0 / g.cell_count() as f64;
        Ok(g.cells().iter().filter_map(|c| c.intersection(&ball)).map(|iv| weight * iv.len() / width).sum())
    }
}

/// Target description as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Intervals { intervals: Vec<(f64, f64)> },
    Point { t: f64 },
    Cantor { base: u32, digits: Vec<u32>, depth: u32 },
}

impl TargetSpec {
    pub fn build(&self) -> Result<TargetSet> {
        match self {
            TargetSpec::Intervals { intervals } => TargetSet::from_intervals(intervals),
            TargetSpec::Point { t } => TargetSet::point(*t),
            TargetSpec::Cantor { base, digits, depth } => TargetSet::cantor(*base, digits, *depth),
        }
    }
}

/// Cells covering a target set, used as the time coordinate of atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    centers: Vec<f64>,
    half_widths: Vec<f64>,
    parent_interval: Vec<usize>,
    resolution: f64,
}

impl TimeGrid {
    /// One atomic cell at `t`.
    pub fn single(t: f64) -> Self {
        Self { centers: vec![t], half_widths: vec![0.0], parent_interval: vec![0], resolution: 0.0 }
    }

    /// Cells tiling `[lo, hi]` with exactly `cells` equal pieces.
    pub fn uniform(lo: f64, hi: f64, cells: usize) -> Self {
        let h = (hi - lo) / (2 * cells) as f64;
        let centers = (0..cells).map(|k| lo + (2 * k + 1) as f64 * h).collect();
        Self { centers, half_widths: vec![h; cells], parent_interval: vec![0; cells], resolution: h }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    #[inline]
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    #[inline]
    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }

    #[inline]
    pub fn parent_interval(&self) -> &[usize] {
        &self.parent_interval
    }

    /// The requested half-width ε (cells may be narrower so they tile exactly).
    #[inline]
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn has_atomic_cells(&self) -> bool {
        self.half_widths.contains(&0.0)
    }

    pub fn cell(&self, i: usize) -> Interval {
        Interval { lo: self.centers[i] - self.half_widths[i], hi: self.centers[i] + self.half_widths[i] }
    }
}

/// Tiles every interval of `d` with cells of half-width at most `resolution`;
/// points become atomic cells.
pub fn discretize(d: &TargetSet, resolution: f64) -> Result<TimeGrid> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidParameter(format!("resolution {resolution} must be positive")));
    }
    if d.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let mut grid = TimeGrid { centers: Vec::new(), half_widths: Vec::new(), parent_interval: Vec::new(), resolution };
    for (idx, iv) in d.intervals().iter().enumerate() {
        if iv.is_point() {
            grid.centers.push(iv.lo);
            grid.half_widths.push(0.0);
            grid.parent_interval.push(idx);
            continue;
        }
        let ratio = iv.len() / (2.0 * resolution);
        if ratio < 1.0 - 1e-9 {
            return Err(Error::ResolutionTooCoarse { resolution, length: iv.len() });
        }
        let cells = (ratio - 1e-9).ceil().max(1.0) as usize;
        let h = iv.len() / (2 * cells) as f64;
        for k in 0..cells {
            grid.centers.push(iv.lo + (2 * k + 1) as f64 * h);
            grid.half_widths.push(h);
            grid.parent_interval.push(idx);
        }
    }
    Ok(grid)
}

/// Number of boxes `[kε, (k+1)ε)` meeting the union of `intervals`.
pub fn box_count(intervals: &[Interval], eps: f64) -> u64 {
    // endpoints within 1e-9 boxes of a grid line snap onto it
    let index = |x: f64| (x / eps + 1e-9).floor() as i64;
    let mut ranges: Vec<(i64, i64)> = intervals.iter().map(|iv| (index(iv.lo), index(iv.hi))).collect();
    ranges.sort_unstable();
    let mut count = 0u64;
    let mut covered_to = i64::MIN;
    for (a, b) in ranges {
        let start = a.max(covered_to.saturating_add(1));
        if b >= start {
            count += (b - start + 1) as u64;
        }
        covered_to = covered_to.max(b);
    }
    count
}

/// Least-squares slope of `ln N(ε)` against `ln(1/ε)`.
pub fn box_dimension_estimate(intervals: &[Interval], scales: &[f64]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let mut sorted: Vec<f64> = scales.to_vec();
    if sorted.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::DegenerateScales("scales must be positive and finite".into()));
    }
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 3 {
        return Err(Error::DegenerateScales(format!("need at least 3 distinct scales, got {}", sorted.len())));
    }
    let points: Vec<(f64, f64)> =
        sorted.iter().map(|&eps| ((1.0 / eps).ln(), (box_count(intervals, eps) as f64).ln())).collect();
    Ok(least_squares_slope(&points))
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `base^{-k}` for `k` in `from..=to`.
pub fn geometric_scales(base: f64, from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| base.powi(-k)).collect()
}
