//! Command-line configuration, command runners and report formatting.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capacity::{
    capacity, capacity_sweep, dimh_sg, hps_condition, sandwich_bounds, ss_capacity_sweep, CapacityResult, DimSweep,
    DimhEstimate, HpsReport, SweepOptions, DEFAULT_CUTOFF,
};
use crate::dynamics::{estimate_hit_probability, simulate_hits, HitEstimate};
use crate::error::{Error, Result};
use crate::kernels::{r_of_n, KernelSpec};
use crate::target::{discretize, TargetSet, TargetSpec, TimeGrid};
use crate::tree::{LevelCounts, PercolationParams, Tree, TreeSpec};

/// Finest default cell half-width for interval targets.
pub const DEFAULT_MAX_RESOLUTION: f64 = 1.0 / 32.0;

#[derive(Debug, Parser)]
#[command(name = "dynperc", version, about = "Capacities and exact simulation for dynamical percolation on trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Minimize the energy of a kernel over ∂G × D.
    Capacity(Flags),
    /// Simulate the edge dynamics and count target hits.
    Simulate(Flags),
    /// Compare the hit probability with Cap_h/2 and 512·Cap_h.
    BoundsCheck(Flags),
    /// Sweep Cap_φ(α) over α.
    DimSweep(Flags),
    /// β-set kernel versus h-kernel capacities and the R(n) band.
    Betaset(Flags),
    /// Partial sums of Σ p^{-l}/(l|G_l|).
    HpsCheck(Flags),
}

impl Command {
    pub fn split(self) -> (CommandKind, Flags) {
        match self {
            Command::Capacity(f) => (CommandKind::Capacity, f),
            Command::Simulate(f) => (CommandKind::Simulate, f),
            Command::BoundsCheck(f) => (CommandKind::BoundsCheck, f),
            Command::DimSweep(f) => (CommandKind::DimSweep, f),
            Command::Betaset(f) => (CommandKind::Betaset, f),
            Command::HpsCheck(f) => (CommandKind::HpsCheck, f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Capacity,
    Simulate,
    BoundsCheck,
    DimSweep,
    Betaset,
    HpsCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    H,
    Phi,
    Lyons,
    Betaset,
    Riesz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// Tree description (JSON).
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Target set description (JSON).
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "h")]
    pub kernel: KernelKind,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, conflicts_with = "alphas")]
    pub alpha: Option<f64>,
    /// `A:B:STEPS`, STEPS evenly spaced exponents from A to B inclusive.
    #[arg(long)]
    pub alphas: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Largest cell half-width ε.
    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long, default_value_t = crate::capacity::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = crate::capacity::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 10_000)]
    pub runs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Capacity positivity cutoff.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    pub cutoff: f64,
    /// Number of series terms for hps-check (default: tree height).
    #[arg(long)]
    pub terms: Option<usize>,
    /// `N_MIN:N_MAX` range for the R(n) band in betaset.
    #[arg(long, default_value = "16:256")]
    pub n_range: String,
    /// Per-run trace dump (CSV) for simulate.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

/// Fully resolved configuration; file contents are inlined so that the hash
/// identifies the computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub tree: Option<TreeSpec>,
    pub target: Option<TargetSpec>,
    pub kernel: KernelKind,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub alphas: Option<Vec<f64>>,
    pub beta: Option<f64>,
    pub resolution: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub runs: u64,
    pub seed: u64,
    pub horizon: Option<f64>,
    pub cutoff: f64,
    pub terms: Option<usize>,
    pub n_range: (u32, u32),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))
}

/// Parses `A:B:STEPS` into STEPS evenly spaced values from A to B.
pub fn parse_alpha_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::ConfigInvalid(format!("alpha grid {s:?} is not A:B:STEPS"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    match steps {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..steps).map(|i| a + (b - a) * i as f64 / (steps - 1) as f64).collect()),
    }
}

fn parse_n_range(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::ConfigInvalid(format!("n range {s:?} is not N_MIN:N_MAX"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok((a, b))
}

impl RunConfig {
    pub fn from_flags(command: CommandKind, f: &Flags) -> Result<Self> {
        let cfg = Self {
            command,
            tree: f.tree.as_deref().map(read_json).transpose()?,
            target: f.target.as_deref().map(read_json).transpose()?,
            kernel: f.kernel,
            p: f.p,
            alpha: f.alpha,
            alphas: f.alphas.as_deref().map(parse_alpha_grid).transpose()?,
            beta: f.beta,
            resolution: f.resolution,
            tol: f.tol,
            max_iter: f.max_iter,
            runs: f.runs,
            seed: f.seed,
            horizon: f.horizon,
            cutoff: f.cutoff,
            terms: f.terms,
            n_range: parse_n_range(&f.n_range)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(Error::ConfigInvalid(m.into()));
        if !(self.tol >= 0.0) {
            return invalid("--tol must be non-negative");
        }
        if self.runs == 0 {
            return invalid("--runs must be at least 1");
        }
        if self.resolution.is_some_and(|r| !(r > 0.0)) {
            return invalid("--resolution must be positive");
        }
        if self.horizon.is_some_and(|h| !(h > 0.0)) {
            return invalid("--horizon must be positive");
        }
        if self.p.is_some_and(|p| !(p > 0.0 && p < 1.0)) {
            return invalid("--p must lie in (0, 1)");
        }
        Ok(())
    }

    /// First 16 bytes of SHA-256 of the canonical JSON, in hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn require_tree(&self) -> Result<Tree> {
        self.tree.as_ref().ok_or_else(|| Error::ConfigInvalid("--tree is required".into()))?.build()
    }

    fn require_target(&self) -> Result<TargetSet> {
        self.target.as_ref().ok_or_else(|| Error::ConfigInvalid("--target is required".into()))?.build()
    }

    fn require_params(&self) -> Result<PercolationParams> {
        PercolationParams::new(self.p.ok_or_else(|| Error::ConfigInvalid("--p is required".into()))?)
    }

    fn require_alpha(&self) -> Result<f64> {
        self.alpha.ok_or_else(|| Error::ConfigInvalid("--alpha is required for this kernel".into()))
    }

    /// `--resolution`, or one cell per interval capped at
    /// [`DEFAULT_MAX_RESOLUTION`].
    fn resolution_for(&self, d: &TargetSet) -> f64 {
        self.resolution.unwrap_or_else(|| {
            d.intervals()
                .iter()
                .filter(|iv| !iv.is_point())
                .map(|iv| iv.len() / 2.0)
                .fold(DEFAULT_MAX_RESOLUTION, f64::min)
        })
    }

    fn grid_for(&self, d: &TargetSet) -> Result<TimeGrid> {
        discretize(d, self.resolution_for(d))
    }
}

/// Level sizes when the tree description is (treated as) spherically
/// symmetric; prescribed level counts are used as given.
fn spherical_levels(spec: &TreeSpec, tree: Option<&Tree>) -> Option<LevelCounts> {
    match spec {
        TreeSpec::LevelCounts { counts } => LevelCounts::from_counts(counts).ok(),
        _ => tree.filter(|t| t.is_spherically_symmetric()).map(LevelCounts::from_tree),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub tree_hash: String,
    pub p: f64,
    pub horizon: f64,
    pub runs: u64,
    pub seed: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub capacity: f64,
    pub p_hat: f64,
    pub std_err: f64,
    /// 3σ.
    pub band: f64,
    pub lower: f64,
    pub upper: f64,
    #[serde(with = "crate::serde_float")]
    pub ratio: f64,
    pub epsilon: f64,
    pub runs: u64,
    pub hits: u64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSweepReport {
    pub sweep: DimSweep,
    pub spherical: bool,
    pub series: Option<DimhEstimate>,
    pub sandwich: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetasetReport {
    pub beta: f64,
    pub g_capacity: f64,
    pub h_capacity: f64,
    pub agree: bool,
    pub n: Vec<u32>,
    pub scaled_r: Vec<f64>,
    pub band_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportBody {
    Capacity(CapacityResult),
    Simulate(SimulateReport),
    BoundsCheck(BoundsReport),
    DimSweep(DimSweepReport),
    Betaset(BetasetReport),
    HpsCheck(HpsReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub seed: u64,
    pub verdict: Option<Verdict>,
    pub body: ReportBody,
}

impl Report {
    fn new(cfg: &RunConfig, verdict: Option<Verdict>, body: ReportBody) -> Self {
        Self { config_hash: cfg.hash(), seed: cfg.seed, verdict, body }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `field,value` rows of every scalar, with dotted paths; a dim-sweep
    /// report is an `alpha,capacity` table instead.
    pub fn to_csv(&self) -> String {
        if let ReportBody::DimSweep(r) = &self.body {
            let mut out = String::from("alpha,capacity\n");
            for (a, c) in r.sweep.alphas.iter().zip(&r.sweep.capacities) {
                out.push_str(&format!("{a:?},{c:?}\n"));
            }
            return out;
        }
        let mut rows = Vec::new();
        flatten(&serde_json::to_value(self).expect("report serializes"), String::new(), &mut rows);
        let mut out = String::from("field,value\n");
        for (k, v) in rows {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

fn flatten(v: &serde_json::Value, prefix: String, rows: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        serde_json::Value::Object(map) => map.iter().for_each(|(k, x)| flatten(x, join(k), rows)),
        serde_json::Value::Array(xs) => xs.iter().enumerate().for_each(|(i, x)| flatten(x, join(&i.to_string()), rows)),
        serde_json::Value::String(s) => rows.push((prefix, s.clone())),
        other => rows.push((prefix, other.to_string())),
    }
}

/// Reads `field,value` rows back from [`Report::to_csv`].
pub fn parse_csv_fields(csv: &str) -> Vec<(String, String)> {
    csv.lines().skip(1).filter_map(|l| l.split_once(',')).map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

pub fn run_capacity(cfg: &RunConfig) -> Result<Report> {
    let tree = cfg.require_tree()?;
    let params = || cfg.require_params();
    let (spec, grid) = match cfg.kernel {
        KernelKind::Lyons => (KernelSpec::Lyons { params: params()? }, TimeGrid::single(0.0)),
        KernelKind::Betaset => {
            let beta = match cfg.beta {
                Some(b) => b,
                None => {
                    cfg.require_target()?.beta().ok_or_else(|| Error::ConfigInvalid("--beta is required".into()))?
                }
            };
            (KernelSpec::BetaSet { params: params()?, beta }, TimeGrid::single(0.0))
        }
        KernelKind::H => (KernelSpec::H { params: params()? }, cfg.grid_for(&cfg.require_target()?)?),
        KernelKind::Phi => {
            (KernelSpec::Phi { params: params()?, alpha: cfg.require_alpha()? }, cfg.grid_for(&cfg.require_target()?)?)
        }
        KernelKind::Riesz => (KernelSpec::Riesz { alpha: cfg.require_alpha()? }, cfg.grid_for(&cfg.require_target()?)?),
    };
    let result = capacity(&tree, &grid, spec, cfg.tol, cfg.max_iter)?;
    let verdict = (!result.converged).then_some(Verdict::Fail);
    Ok(Report::new(cfg, verdict, ReportBody::Capacity(result)))
}

pub fn run_simulate(cfg: &RunConfig) -> Result<(Report, Vec<crate::dynamics::PercolationTrace>)> {
    let tree = cfg.require_tree()?;
    let params = cfg.require_params()?;
    let target = cfg.target.as_ref().map(TargetSpec::build).transpose()?;
    let horizon = match (cfg.horizon, &target) {
        (Some(h), _) => h,
        (None, Some(d)) => d.sup().unwrap_or(1.0).max(crate::dynamics::MIN_HORIZON),
        (None, None) => 1.0,
    };
    let d = match target {
        Some(d) => d,
        None => TargetSet::from_intervals(&[(0.0, horizon)])?,
    };
    let (est, traces) = simulate_hits(&tree, params, &d, horizon, cfg.runs, cfg.seed, true)?;
    let body = SimulateReport {
        tree_hash: tree.fingerprint(),
        p: params.p(),
        horizon,
        runs: est.runs,
        seed: cfg.seed,
        hits: est.hits,
        p_hat: est.p_hat,
        std_err: est.std_err,
    };
    Ok((Report::new(cfg, None, ReportBody::Simulate(body)), traces))
}

/// PASS iff `p_hat + 3σ ≥ Cap_h / 2` and `p_hat - 3σ ≤ 512 Cap_h`; when the
/// capacity is 0 this means no hits.
pub fn run_bounds_check(cfg: &RunConfig) -> Result<Report> {
    let tree = cfg.require_tree()?;
    let d = cfg.require_target()?;
    let params = cfg.require_params()?;
    let grid = cfg.grid_for(&d)?;
    let cap = capacity(&tree, &grid, KernelSpec::H { params }, cfg.tol, cfg.max_iter)?;
    let est: HitEstimate = estimate_hit_probability(&tree, params, &d, cfg.runs, cfg.seed)?;
    let band = 3.0 * est.std_err;
    let (lower, upper) = (cap.capacity / 2.0, 512.0 * cap.capacity);
    let ok = if cap.capacity == 0.0 { est.hits == 0 } else { est.p_hat + band >= lower && est.p_hat - band <= upper };
    let body = BoundsReport {
        capacity: cap.capacity,
        p_hat: est.p_hat,
        std_err: est.std_err,
        band,
        lower,
        upper,
        ratio: if cap.capacity > 0.0 { est.p_hat / cap.capacity } else { f64::INFINITY },
        epsilon: grid.resolution(),
        runs: est.runs,
        hits: est.hits,
        converged: cap.converged,
    };
    Ok(Report::new(cfg, Some(Verdict::from_bool(ok && cap.converged)), ReportBody::BoundsCheck(body)))
}

pub fn run_dim_sweep(cfg: &RunConfig) -> Result<Report> {
    let spec = cfg.tree.as_ref().ok_or_else(|| Error::ConfigInvalid("--tree is required".into()))?;
    let d = cfg.require_target()?;
    let params = cfg.require_params()?;
    let alphas = match (&cfg.alphas, cfg.alpha) {
        (Some(a), _) => a.clone(),
        (None, Some(a)) => vec![a],
        (None, None) => return Err(Error::ConfigInvalid("--alphas or --alpha is required".into())),
    };
    let opts =
        SweepOptions { resolution: cfg.resolution_for(&d), tol: cfg.tol, max_iter: cfg.max_iter, cutoff: cfg.cutoff };
    let tree = match spec {
        TreeSpec::LevelCounts { .. } => None,
        other => Some(other.build()?),
    };
    let levels = spherical_levels(spec, tree.as_ref());
    let sweep = match (&levels, &tree) {
        (Some(l), _) => ss_capacity_sweep(l, &d, params, &alphas, &opts)?,
        (None, Some(t)) => capacity_sweep(t, &d, params, &alphas, &opts)?,
        (None, None) => unreachable!("level-count specs always yield levels"),
    };
    let series = levels.as_ref().map(|l| dimh_sg(l, params, &alphas));
    let sandwich = match (&series, d.beta()) {
        (Some(s), Some(b)) => Some(sandwich_bounds(s.value, b, b)?),
        _ => None,
    };
    let body = DimSweepReport { sweep, spherical: levels.is_some(), series, sandwich };
    Ok(Report::new(cfg, None, ReportBody::DimSweep(body)))
}

pub fn run_betaset(cfg: &RunConfig) -> Result<Report> {
    let tree = cfg.require_tree()?;
    let d = cfg.require_target()?;
    let params = cfg.require_params()?;
    let generator = d.generator().ok_or(Error::MissingGenerator)?;
    let beta = cfg.beta.unwrap_or_else(|| generator.dimension());
    let g = capacity(&tree, &TimeGrid::single(0.0), KernelSpec::BetaSet { params, beta }, cfg.tol, cfg.max_iter)?
        .ensure_converged()?;
    let h = capacity(&tree, &cfg.grid_for(&d)?, KernelSpec::H { params }, cfg.tol, cfg.max_iter)?.ensure_converged()?;
    let agree = (g.capacity > cfg.cutoff) == (h.capacity > cfg.cutoff);
    let (lo, hi) = cfg.n_range;
    let n: Vec<u32> = (lo..=hi).collect();
    let scaled_r = n
        .iter()
        .map(|&n| Ok(r_of_n(&d, n, params)? * (n as f64).powf(beta) * params.p().powi(n as i32)))
        .collect::<Result<Vec<f64>>>()?;
    let max = scaled_r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = scaled_r.iter().cloned().fold(f64::INFINITY, f64::min);
    let body = BetasetReport {
        beta,
        g_capacity: g.capacity,
        h_capacity: h.capacity,
        agree,
        n,
        scaled_r,
        band_ratio: max / min,
    };
    Ok(Report::new(cfg, Some(Verdict::from_bool(agree)), ReportBody::Betaset(body)))
}

pub fn run_hps_check(cfg: &RunConfig) -> Result<Report> {
    let spec = cfg.tree.as_ref().ok_or_else(|| Error::ConfigInvalid("--tree is required".into()))?;
    let params = cfg.require_params()?;
    let levels = match spec {
        TreeSpec::LevelCounts { counts } => LevelCounts::from_counts(counts)?,
        other => LevelCounts::from_tree(&other.build()?),
    };
    let report = hps_condition(&levels, params, cfg.terms.unwrap_or(levels.height()));
    Ok(Report::new(cfg, None, ReportBody::HpsCheck(report)))
}

/// Runs the parsed command line, writes the report, and returns the exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let (command, flags) = cli.command.split();
    let cfg = RunConfig::from_flags(command, &flags)?;
    let report = match command {
        CommandKind::Capacity => run_capacity(&cfg)?,
        CommandKind::Simulate => {
            let (report, traces) = run_simulate(&cfg)?;
            if let Some(path) = &flags.traces {
                let mut csv = String::from("run,start,end\n");
                for (r, tr) in traces.iter().enumerate() {
                    for iv in &tr.intervals {
                        csv.push_str(&format!("{r},{:?},{:?}\n", iv.lo, iv.hi));
                    }
                }
                std::fs::write(path, csv)?;
            }
            report
        }
        CommandKind::BoundsCheck => run_bounds_check(&cfg)?,
        CommandKind::DimSweep => run_dim_sweep(&cfg)?,
        CommandKind::Betaset => run_betaset(&cfg)?,
        CommandKind::HpsCheck => run_hps_check(&cfg)?,
    };
    let text = report.render(flags.format);
    match &flags.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(if report.verdict == Some(Verdict::Fail) { 2 } else { 0 })
}
