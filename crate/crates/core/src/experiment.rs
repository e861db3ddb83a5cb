//! Grid experiments: a TOML spec expands into grid points, every requested
//! method runs on every point, and each (point, method) pair becomes one CSV row.
//!
//! Spec format (schema 1):
//!
//! ```toml
//! schema = 1                      # required, must be 1
//! name = "table3"                 # free text, copied into the run log
//! methods = ["DLP", "RLP", "RVI", "TOTJOB", "EPS", "MP", "AP"]
//! epsilons = [0.2]                # one EPS row per value, each in [0, 1]
//! gamma = 0.0                     # cost slack of the total-job partition
//! seed = 1                        # simulation seed; point i uses seed + i
//! time_limit_secs = 7200.0        # per method and point
//! memory_budget_bytes = 12884901888
//! ap_reject_overflow = false      # AP rejects due-now overflow when true
//! output_dir = "results"          # used when no directory is given explicitly
//!
//! [grid]                          # cartesian product, in this nesting order
//! horizon = [2]                   # K
//! max_arrivals = [2, 3]           # A
//! capacity = [2, 5]               # M
//! costs = [[200, 150, 100, 50]]   # (c_o, c_r, c_e1, c_e2)
//! loads = ["EL", "FL", "BL"]
//! segmentations = ["ES", "HS", "LS"]
//! lambda_factor = 0.5             # lambda = lambda_factor * A
//!
//! [simulation]                    # optional; adds simulated means
//! warmup = 200000
//! horizon = 900000
//! batches = 30
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::aggregation::{
    build_aggregate_mdp, build_epsilon_partition, build_total_job_partition, lift_policy, Partition,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    absolute_gap, always_serve_policy, matched_action_percentage, myopic_policy, simulate, SimConfig,
};
use crate::lp::{dense_memory_bytes, Tolerances};
use crate::model::{Costs, LoadKind, ModelConfig, SegmentKind, State};
use crate::solve::{policy_gain, relative_value_iteration, solve_with_lp, Policy, RviOptions};
use crate::space::{build_instance_with, BuildOptions, MdpInstance, DEFAULT_MEMORY_BUDGET};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MethodKind {
    /// Dual LP on the full action sets.
    Dlp,
    /// Dual LP after action elimination.
    Rlp,
    /// Relative value iteration on the full action sets.
    Rvi,
    /// Total-job aggregation, lifted back.
    Totjob,
    /// Epsilon-homogeneity aggregation, lifted back.
    Eps,
    /// Myopic policy.
    Mp,
    /// Always-serve policy.
    Ap,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::Dlp,
        MethodKind::Rlp,
        MethodKind::Rvi,
        MethodKind::Totjob,
        MethodKind::Eps,
        MethodKind::Mp,
        MethodKind::Ap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Dlp => "DLP",
            MethodKind::Rlp => "RLP",
            MethodKind::Rvi => "RVI",
            MethodKind::Totjob => "TOTJOB",
            MethodKind::Eps => "EPS",
            MethodKind::Mp => "MP",
            MethodKind::Ap => "AP",
        }
    }

    fn is_exact(self) -> bool {
        matches!(self, MethodKind::Dlp | MethodKind::Rlp | MethodKind::Rvi)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        MethodKind::ALL.into_iter().find(|m| m.name() == up).ok_or_else(|| {
            Error::Config(format!("unknown method `{s}` (expected DLP, RLP, RVI, TOTJOB, EPS, MP or AP)"))
        })
    }
}

fn default_horizon() -> Vec<usize> {
    vec![2]
}
fn default_costs() -> Vec<[f64; 4]> {
    vec![[200.0, 150.0, 100.0, 50.0]]
}
fn default_loads() -> Vec<LoadKind> {
    vec![LoadKind::EL]
}
fn default_segmentations() -> Vec<SegmentKind> {
    vec![SegmentKind::ES]
}
fn default_lambda_factor() -> f64 {
    0.5
}
fn default_epsilons() -> Vec<f64> {
    vec![0.2]
}
fn default_seed() -> u64 {
    1
}
fn default_time_limit() -> f64 {
    7200.0
}
fn default_budget() -> u64 {
    DEFAULT_MEMORY_BUDGET
}
fn default_output() -> String {
    "results".into()
}
fn default_warmup() -> u64 {
    200_000
}
fn default_sim_horizon() -> u64 {
    900_000
}
fn default_batches() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_horizon")]
    pub horizon: Vec<usize>,
    pub max_arrivals: Vec<u32>,
    pub capacity: Vec<u32>,
    #[serde(default = "default_costs")]
    pub costs: Vec<[f64; 4]>,
    #[serde(default = "default_loads")]
    pub loads: Vec<LoadKind>,
    #[serde(default = "default_segmentations")]
    pub segmentations: Vec<SegmentKind>,
    #[serde(default = "default_lambda_factor")]
    pub lambda_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default = "default_sim_horizon")]
    pub horizon: u64,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub methods: Vec<MethodKind>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_time_limit")]
    pub time_limit_secs: f64,
    #[serde(default = "default_budget")]
    pub memory_budget_bytes: u64,
    #[serde(default)]
    pub ap_reject_overflow: bool,
    #[serde(default = "default_output")]
    pub output_dir: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub simulation: Option<SimulationSpec>,
}

/// One model configuration of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub horizon: usize,
    pub max_arrivals: u32,
    pub capacity: u32,
    pub costs: Costs,
    pub load: LoadKind,
    pub segmentation: SegmentKind,
    pub arrival_rate: f64,
}

impl GridPoint {
    pub fn config(&self) -> Result<ModelConfig> {
        let base = ModelConfig::with_profiles(
            self.capacity,
            self.horizon,
            self.max_arrivals,
            self.load,
            self.segmentation,
            self.costs,
        )?;
        ModelConfig::new(
            base.capacity,
            base.horizon,
            base.max_arrivals,
            self.arrival_rate,
            base.segmentation,
            base.load,
            base.costs,
        )
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.schema != SCHEMA_VERSION {
            return cfg(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        if self.methods.is_empty() {
            return cfg("`methods` must name at least one method".into());
        }
        let g = &self.grid;
        for (field, empty) in [
            ("grid.horizon", g.horizon.is_empty()),
            ("grid.max_arrivals", g.max_arrivals.is_empty()),
            ("grid.capacity", g.capacity.is_empty()),
            ("grid.costs", g.costs.is_empty()),
            ("grid.loads", g.loads.is_empty()),
            ("grid.segmentations", g.segmentations.is_empty()),
        ] {
            if empty {
                return cfg(format!("`{field}` must not be empty"));
            }
        }
        if !(g.lambda_factor.is_finite() && g.lambda_factor >= 0.0) {
            return cfg(format!("`grid.lambda_factor` must be >= 0, got {}", g.lambda_factor));
        }
        if self.methods.contains(&MethodKind::Eps) {
            if self.epsilons.is_empty() {
                return cfg("`epsilons` must not be empty when EPS is requested".into());
            }
            if let Some(e) = self.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
                return cfg(format!("epsilon {e} outside [0, 1]"));
            }
        }
        if !(self.gamma >= 0.0) {
            return cfg(format!("`gamma` must be >= 0, got {}", self.gamma));
        }
        if !(self.time_limit_secs > 0.0) {
            return cfg(format!("`time_limit_secs` must be positive, got {}", self.time_limit_secs));
        }
        if let Some(sim) = &self.simulation {
            if sim.horizon == 0 || sim.batches == 0 || sim.horizon < sim.batches as u64 {
                return cfg("`simulation.horizon` must be at least `simulation.batches` >= 1".into());
            }
        }
        for p in self.points() {
            p.config()?;
        }
        Ok(())
    }

    /// Grid points in nesting order K, A, M, costs, load, segmentation.
    pub fn points(&self) -> Vec<GridPoint> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &horizon in &g.horizon {
            for &max_arrivals in &g.max_arrivals {
                for &capacity in &g.capacity {
                    for c in &g.costs {
                        for &load in &g.loads {
                            for &segmentation in &g.segmentations {
                                out.push(GridPoint {
                                    index: out.len(),
                                    horizon,
                                    max_arrivals,
                                    capacity,
                                    costs: Costs::new(c[0], c[1], c[2], c[3]),
                                    load,
                                    segmentation,
                                    arrival_rate: g.lambda_factor * max_arrivals as f64,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Requested methods, deduplicated, in canonical order.
    pub fn method_order(&self) -> Vec<MethodKind> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }
}

fn default_model_costs() -> [f64; 4] {
    [200.0, 150.0, 100.0, 50.0]
}

/// Model file for single-instance commands:
///
/// ```toml
/// horizon = 2                  # K, default 2
/// max_arrivals = 2             # A
/// capacity = 2                 # M
/// costs = [200, 150, 100, 50]  # (c_o, c_r, c_e1, c_e2), this is the default
/// load = "EL"                  # EL, FL or BL, default EL
/// segmentation = "ES"          # ES, HS or LS, default ES
/// lambda_factor = 0.5          # lambda = lambda_factor * A unless arrival_rate is set
/// # arrival_rate = 1.0
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "default_two")]
    pub horizon: usize,
    pub max_arrivals: u32,
    pub capacity: u32,
    #[serde(default = "default_model_costs")]
    pub costs: [f64; 4],
    #[serde(default = "default_load")]
    pub load: LoadKind,
    #[serde(default = "default_segmentation")]
    pub segmentation: SegmentKind,
    #[serde(default = "default_lambda_factor")]
    pub lambda_factor: f64,
    #[serde(default)]
    pub arrival_rate: Option<f64>,
}

fn default_two() -> usize {
    2
}
fn default_load() -> LoadKind {
    LoadKind::EL
}
fn default_segmentation() -> SegmentKind {
    SegmentKind::ES
}

impl ModelSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.config()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn config(&self) -> Result<ModelConfig> {
        let c = self.costs;
        GridPoint {
            index: 0,
            horizon: self.horizon,
            max_arrivals: self.max_arrivals,
            capacity: self.capacity,
            costs: Costs::new(c[0], c[1], c[2], c[3]),
            load: self.load,
            segmentation: self.segmentation,
            arrival_rate: self.arrival_rate.unwrap_or(self.lambda_factor * self.max_arrivals as f64),
        }
        .config()
    }
}

/// Writes a policy as CSV: `state,x,a,r,y,cost`, vectors space-separated in
/// the dump layout.
pub fn write_policy_csv(instance: &MdpInstance, policy: &Policy, out: impl Write) -> Result<()> {
    let ids = policy.resolve(&instance.mdp)?;
    let k = instance.config.horizon;
    let join = |v: Vec<u32>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "x", "a", "r", "y", "cost"])?;
    for (s, &id) in ids.iter().enumerate() {
        let st = instance.state(s);
        let d = instance.mdp.label(id);
        w.write_record([
            s.to_string(),
            join(st.x.to_flat(k)),
            join(st.a.to_flat(k)),
            join(d.r[..k].iter().map(|&v| v as u32).collect()),
            join(d.y.to_flat(k)),
            instance.mdp.cost(id).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    Timeout,
    SkippedResource,
    Failed,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowStatus::Ok => "ok",
            RowStatus::Timeout => "timeout",
            RowStatus::SkippedResource => "skipped-resource",
            RowStatus::Failed => "failed",
        })
    }
}

/// One output row. Empty optional fields mean "not applicable".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub point: usize,
    #[serde(rename = "K")]
    pub horizon: usize,
    #[serde(rename = "A")]
    pub max_arrivals: u32,
    #[serde(rename = "M")]
    pub capacity: u32,
    pub lambda: f64,
    pub load: LoadKind,
    pub segmentation: SegmentKind,
    pub c_o: f64,
    pub c_r: f64,
    pub c_e1: f64,
    pub c_e2: f64,
    pub method: MethodKind,
    /// Epsilon or gamma of aggregation rows.
    pub parameter: Option<f64>,
    pub states: Option<u64>,
    /// Feasible actions before elimination.
    pub actions_feasible: Option<u64>,
    /// Actions in the model actually solved (reduced or aggregate).
    pub actions: Option<u64>,
    pub meta_states: Option<u64>,
    /// Exact long-run average cost of the row's policy.
    pub gain: Option<f64>,
    pub sim_mean: Option<f64>,
    pub sim_half_width: Option<f64>,
    #[serde(rename = "AG")]
    pub ag: Option<f64>,
    #[serde(rename = "MAP")]
    pub map: Option<f64>,
    pub wall_secs: f64,
    pub memory_bytes: Option<u64>,
    pub status: RowStatus,
    pub note: String,
}

impl ResultRow {
    fn blank(p: &GridPoint, method: MethodKind) -> Self {
        ResultRow {
            point: p.index,
            horizon: p.horizon,
            max_arrivals: p.max_arrivals,
            capacity: p.capacity,
            lambda: p.arrival_rate,
            load: p.load,
            segmentation: p.segmentation,
            c_o: p.costs.overtime,
            c_r: p.costs.rejection,
            c_e1: p.costs.early_high,
            c_e2: p.costs.early_low,
            method,
            parameter: None,
            states: None,
            actions_feasible: None,
            actions: None,
            meta_states: None,
            gain: None,
            sim_mean: None,
            sim_half_width: None,
            ag: None,
            map: None,
            wall_secs: 0.0,
            memory_bytes: None,
            status: RowStatus::Ok,
            note: String::new(),
        }
    }

    /// Simulated mean when present, exact gain otherwise.
    pub fn cost(&self) -> Option<f64> {
        self.gain.or(self.sim_mean)
    }

    fn fail(&mut self, e: &Error) {
        self.status = match e {
            Error::Resource { .. } => RowStatus::SkippedResource,
            Error::Timeout { .. } => RowStatus::Timeout,
            _ => RowStatus::Failed,
        };
        self.note = e.to_string();
    }
}

/// A successful method run, before it is turned into a row.
struct Outcome {
    gain: f64,
    policy: Policy,
    actions: usize,
    meta_states: Option<usize>,
    memory: u64,
    note: String,
}

struct PointRunner<'a> {
    spec: &'a ExperimentSpec,
    config: ModelConfig,
    full: Option<std::result::Result<MdpInstance, Error>>,
    reduced: Option<std::result::Result<MdpInstance, Error>>,
}

fn clone_err(e: &Error) -> Error {
    match e {
        Error::Resource { what, needed, limit } => {
            Error::Resource { what: what.clone(), needed: *needed, limit: *limit }
        }
        Error::Timeout { limit_secs, context } => Error::Timeout { limit_secs: *limit_secs, context: context.clone() },
        other => Error::Numerical(other.to_string()),
    }
}

impl PointRunner<'_> {
    fn instance(&mut self, eliminate: bool) -> Result<&MdpInstance> {
        let slot = if eliminate { &mut self.reduced } else { &mut self.full };
        if slot.is_none() {
            let opts = BuildOptions { eliminate, memory_budget: self.spec.memory_budget_bytes, arrivals: None };
            *slot = Some(build_instance_with(&self.config, &opts));
        }
        slot.as_ref().unwrap().as_ref().map_err(clone_err)
    }

    fn limit(&self) -> Duration {
        Duration::from_secs_f64(self.spec.time_limit_secs)
    }

    fn lp(&mut self, eliminate: bool) -> Result<Outcome> {
        let tol = Tolerances {
            time_limit: Some(self.limit()),
            memory_budget: self.spec.memory_budget_bytes,
            ..Tolerances::default()
        };
        let inst = self.instance(eliminate)?;
        let sol = solve_with_lp(&inst.mdp, &tol)?;
        Ok(Outcome {
            gain: sol.gain,
            policy: sol.policy,
            actions: inst.num_actions(),
            meta_states: None,
            memory: inst.stats.memory_bytes + dense_memory_bytes(inst.num_states() + 1),
            note: format!("{} pivots", sol.stats.iterations),
        })
    }

    fn rvi_options(&self) -> RviOptions {
        RviOptions { time_limit: Some(self.limit()), ..RviOptions::default() }
    }

    fn rvi(&mut self) -> Result<Outcome> {
        let opts = self.rvi_options();
        let inst = self.instance(false)?;
        let sol = relative_value_iteration(&inst.mdp, &opts)?;
        Ok(Outcome {
            gain: sol.gain,
            policy: sol.policy,
            actions: inst.num_actions(),
            meta_states: None,
            memory: inst.stats.memory_bytes,
            note: format!("{} sweeps", sol.stats.iterations),
        })
    }

    fn aggregate(&mut self, build: impl FnOnce(&MdpInstance) -> Result<Partition>) -> Result<Outcome> {
        let opts = self.rvi_options();
        let inst = self.instance(false)?;
        let partition = build(inst)?;
        let agg = build_aggregate_mdp(&inst.mdp, &partition)?;
        let sol = relative_value_iteration(&agg, &opts)?;
        let policy = lift_policy(&sol.policy, &partition)?;
        let gain = policy_gain(&inst.mdp, &policy)?;
        let mut note = format!("aggregate gain {:.6}", sol.gain);
        for d in &partition.diagnostics {
            note.push_str("; ");
            note.push_str(d);
        }
        Ok(Outcome {
            gain,
            policy,
            actions: agg.num_actions(),
            meta_states: Some(partition.len()),
            memory: inst.stats.memory_bytes + agg.memory_bytes(),
            note,
        })
    }

    fn heuristic(&mut self, method: MethodKind) -> Result<Outcome> {
        let reject = self.spec.ap_reject_overflow;
        let inst = self.instance(false)?;
        let policy = match method {
            MethodKind::Mp => myopic_policy(&inst.mdp),
            _ => always_serve_policy(inst, reject),
        };
        let gain = policy_gain(&inst.mdp, &policy)?;
        Ok(Outcome {
            gain,
            policy,
            actions: inst.num_actions(),
            meta_states: None,
            memory: inst.stats.memory_bytes,
            note: String::new(),
        })
    }
}

/// Runs every method on one grid point. Rows come back in canonical method order.
pub fn run_point(spec: &ExperimentSpec, point: &GridPoint) -> Result<Vec<ResultRow>> {
    let mut runner = PointRunner { spec, config: point.config()?, full: None, reduced: None };
    let mut rows = Vec::new();
    let mut policies: Vec<Option<Policy>> = Vec::new();
    for method in spec.method_order() {
        let params: Vec<Option<f64>> = match method {
            MethodKind::Eps => spec.epsilons.iter().map(|&e| Some(e)).collect(),
            MethodKind::Totjob => vec![Some(spec.gamma)],
            _ => vec![None],
        };
        for param in params {
            let start = Instant::now();
            let outcome = match method {
                MethodKind::Dlp => runner.lp(false),
                MethodKind::Rlp => runner.lp(true),
                MethodKind::Rvi => runner.rvi(),
                MethodKind::Totjob => runner.aggregate(|i| build_total_job_partition(i, spec.gamma)),
                MethodKind::Eps => runner.aggregate(|i| build_epsilon_partition(&i.mdp, param.unwrap_or(0.0))),
                MethodKind::Mp | MethodKind::Ap => runner.heuristic(method),
            };
            let mut row = ResultRow::blank(point, method);
            row.parameter = param;
            let full_stats = runner.full.as_ref().and_then(|r| r.as_ref().ok()).map(|i| &i.stats);
            let reduced_stats = runner.reduced.as_ref().and_then(|r| r.as_ref().ok()).map(|i| &i.stats);
            if let Some(st) = full_stats.or(reduced_stats) {
                row.states = Some(st.states as u64);
                row.actions_feasible = Some(st.feasible_actions as u64);
            }
            match outcome {
                Ok(o) => {
                    if let (Some(sim), Ok(inst)) = (&spec.simulation, runner.instance(method == MethodKind::Rlp)) {
                        let cfg = SimConfig {
                            seed: spec.seed.wrapping_add(point.index as u64),
                            warmup: sim.warmup,
                            horizon: sim.horizon,
                            initial: State::empty(),
                            batches: sim.batches,
                        };
                        let r = simulate(inst, &o.policy, &cfg)?;
                        row.sim_mean = Some(r.mean);
                        row.sim_half_width = Some(r.half_width);
                    }
                    row.gain = Some(o.gain);
                    row.actions = Some(o.actions as u64);
                    row.meta_states = o.meta_states.map(|n| n as u64);
                    row.memory_bytes = Some(o.memory);
                    row.note = o.note;
                    policies.push(Some(o.policy));
                }
                Err(e @ (Error::Resource { .. } | Error::Timeout { .. } | Error::Numerical(_))) => {
                    row.fail(&e);
                    policies.push(None);
                }
                Err(e) => return Err(e),
            }
            row.wall_secs = start.elapsed().as_secs_f64();
            rows.push(row);
        }
    }
    // Gap and matched actions against the first exact method that succeeded.
    let reference = rows
        .iter()
        .zip(&policies)
        .find(|(r, p)| r.method.is_exact() && p.is_some())
        .map(|(r, p)| (r.gain.unwrap(), p.clone().unwrap()));
    if let Some((opt, opt_policy)) = reference {
        for (row, p) in rows.iter_mut().zip(&policies) {
            if let (Some(g), Some(p)) = (row.gain, p) {
                row.ag = absolute_gap(g, opt);
                row.map = Some(matched_action_percentage(p, &opt_policy)?);
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub csv_path: PathBuf,
    pub log_path: PathBuf,
}

/// Runs the whole grid, writing `results.csv` and `run.log` into `out_dir`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentOutput> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("results.csv");
    let log_path = out_dir.join("run.log");
    let mut csv = csv::Writer::from_path(&csv_path)?;
    let mut log = BufWriter::new(File::create(&log_path)?);
    let points = spec.points();
    writeln!(log, "experiment `{}`: {} grid points, methods {:?}", spec.name, points.len(), spec.method_order())?;
    let mut all = Vec::new();
    for p in &points {
        let rows = run_point(spec, p)?;
        for r in &rows {
            writeln!(
                log,
                "point {} K={} A={} M={} {}/{} costs={},{},{},{} {}{} status={} gain={} secs={:.3} {}",
                p.index,
                p.horizon,
                p.max_arrivals,
                p.capacity,
                p.load,
                p.segmentation,
                p.costs.overtime,
                p.costs.rejection,
                p.costs.early_high,
                p.costs.early_low,
                r.method,
                r.parameter.map(|v| format!("({v})")).unwrap_or_default(),
                r.status,
                r.gain.map(|g| format!("{g:.6}")).unwrap_or_else(|| "-".into()),
                r.wall_secs,
                r.note
            )?;
            csv.serialize(r)?;
        }
        csv.flush()?;
        log.flush()?;
        all.extend(rows);
    }
    Ok(ExperimentOutput { rows: all, csv_path, log_path })
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_results(rows: &[ResultRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableKind {
    /// State and feasible-action counts: `(K, A)` rows, one action column per `M`.
    Sizes,
    /// Gains: one block per `(K, A, M, costs)`, loads as rows, segmentations as columns.
    Gains,
    /// Full versus reduced action counts and solve times.
    Elimination,
    /// Methods as rows, loads as column groups.
    Aggregation,
}

impl FromStr for TableKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sizes" => Ok(TableKind::Sizes),
            "gains" => Ok(TableKind::Gains),
            "elimination" => Ok(TableKind::Elimination),
            "aggregation" => Ok(TableKind::Aggregation),
            other => Err(Error::Config(format!(
                "unknown table `{other}` (expected sizes, gains, elimination or aggregation)"
            ))),
        }
    }
}

fn need<T: Copy>(v: Option<T>, column: &str, row: &ResultRow) -> Result<T> {
    v.ok_or_else(|| {
        Error::Contract(format!("column `{column}` is empty in the {} row of point {}", row.method, row.point))
    })
}

fn num(v: f64) -> String {
    format!("{v:.2}")
}

fn costs_label(r: &ResultRow) -> String {
    format!("{}/{}/{}/{}", r.c_o, r.c_r, r.c_e1, r.c_e2)
}

type BlockKey = (usize, u32, u32, String);

fn block_key(r: &ResultRow) -> BlockKey {
    (r.horizon, r.max_arrivals, r.capacity, costs_label(r))
}

fn exact_preference(m: MethodKind) -> Option<usize> {
    [MethodKind::Dlp, MethodKind::Rvi, MethodKind::Rlp].iter().position(|&x| x == m)
}

/// Pivots result rows into one of the table layouts, as CSV text.
pub fn emit_table(rows: &[ResultRow], kind: TableKind) -> Result<String> {
    let ok: Vec<&ResultRow> = rows.iter().filter(|r| r.status == RowStatus::Ok).collect();
    if ok.is_empty() {
        return Err(Error::Contract("no successful rows to tabulate".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    match kind {
        TableKind::Sizes => {
            let mut ms: Vec<u32> = ok.iter().map(|r| r.capacity).collect();
            ms.sort_unstable();
            ms.dedup();
            let mut table: BTreeMap<(usize, u32), (u64, BTreeMap<u32, u64>)> = BTreeMap::new();
            for r in &ok {
                let e = table.entry((r.horizon, r.max_arrivals)).or_default();
                e.0 = need(r.states, "states", r)?;
                e.1.insert(r.capacity, need(r.actions_feasible, "actions_feasible", r)?);
            }
            let mut header = vec!["K".to_string(), "A".into(), "states".into()];
            header.extend(ms.iter().map(|m| format!("actions M={m}")));
            w.write_record(&header)?;
            for ((k, a), (states, acts)) in table {
                let mut rec = vec![k.to_string(), a.to_string(), states.to_string()];
                rec.extend(ms.iter().map(|m| acts.get(m).map(|v| v.to_string()).unwrap_or_default()));
                w.write_record(&rec)?;
            }
        }
        TableKind::Gains => {
            let mut segs: Vec<SegmentKind> = ok.iter().map(|r| r.segmentation).collect();
            segs.sort_by_key(|s| *s as u8);
            segs.dedup();
            // (block, load) -> seg -> (preference, gain)
            let mut cells: BTreeMap<(BlockKey, u8, LoadKind), BTreeMap<u8, (usize, f64)>> = BTreeMap::new();
            for r in &ok {
                let Some(pref) = exact_preference(r.method) else { continue };
                let g = need(r.gain, "gain", r)?;
                let e = cells.entry((block_key(r), r.load as u8, r.load)).or_default();
                let slot = e.entry(r.segmentation as u8).or_insert((pref, g));
                if pref < slot.0 {
                    *slot = (pref, g);
                }
            }
            if cells.is_empty() {
                return Err(Error::Contract("the gains table needs DLP, RVI or RLP rows".into()));
            }
            let mut header = vec!["K".to_string(), "A".into(), "M".into(), "costs".into(), "load".into()];
            header.extend(segs.iter().map(|s| s.to_string()));
            w.write_record(&header)?;
            for (((k, a, m, costs), _, load), vals) in cells {
                let mut rec = vec![k.to_string(), a.to_string(), m.to_string(), costs, load.to_string()];
                rec.extend(segs.iter().map(|s| vals.get(&(*s as u8)).map(|v| num(v.1)).unwrap_or_default()));
                w.write_record(&rec)?;
            }
        }
        TableKind::Elimination => {
            let mut pairs: BTreeMap<(BlockKey, u8, u8), [Option<&ResultRow>; 2]> = BTreeMap::new();
            for r in &ok {
                let slot = match r.method {
                    MethodKind::Dlp => 0,
                    MethodKind::Rlp => 1,
                    _ => continue,
                };
                pairs.entry((block_key(r), r.load as u8, r.segmentation as u8)).or_default()[slot] = Some(r);
            }
            if pairs.is_empty() {
                return Err(Error::Contract("the elimination table needs DLP or RLP rows".into()));
            }
            w.write_record([
                "K",
                "A",
                "M",
                "costs",
                "load",
                "segmentation",
                "states",
                "DLP actions",
                "RLP actions",
                "ratio",
                "DLP gain",
                "RLP gain",
                "DLP secs",
                "RLP secs",
            ])?;
            for ((_, _, _), [d, r]) in pairs {
                let any = d.or(r).unwrap();
                let da = d.map(|x| need(x.actions, "actions", x)).transpose()?;
                let ra = r.map(|x| need(x.actions, "actions", x)).transpose()?;
                let ratio = match (da, ra) {
                    (Some(a), Some(b)) if a > 0 => format!("{:.4}", b as f64 / a as f64),
                    _ => String::new(),
                };
                let opt = |v: Option<String>| v.unwrap_or_default();
                w.write_record([
                    any.horizon.to_string(),
                    any.max_arrivals.to_string(),
                    any.capacity.to_string(),
                    costs_label(any),
                    any.load.to_string(),
                    any.segmentation.to_string(),
                    opt(any.states.map(|v| v.to_string())),
                    opt(da.map(|v| v.to_string())),
                    opt(ra.map(|v| v.to_string())),
                    ratio,
                    opt(d.and_then(|x| x.gain).map(num)),
                    opt(r.and_then(|x| x.gain).map(num)),
                    opt(d.map(|x| format!("{:.2}", x.wall_secs))),
                    opt(r.map(|x| format!("{:.2}", x.wall_secs))),
                ])?;
            }
        }
        TableKind::Aggregation => {
            let blocks: std::collections::BTreeSet<(BlockKey, u8)> =
                ok.iter().map(|r| (block_key(r), r.segmentation as u8)).collect();
            if blocks.len() != 1 {
                return Err(Error::Contract(format!(
                    "the aggregation table needs a single (K, A, M, costs, segmentation); found {}",
                    blocks.len()
                )));
            }
            let mut loads: Vec<LoadKind> = ok.iter().map(|r| r.load).collect();
            loads.sort_by_key(|l| *l as u8);
            loads.dedup();
            let label = |r: &ResultRow| match (r.method, r.parameter) {
                (MethodKind::Dlp | MethodKind::Rlp | MethodKind::Rvi, _) => format!("OPT ({})", r.method),
                (MethodKind::Eps, Some(e)) => format!("{e}-agg"),
                (MethodKind::Totjob, _) => "Tot-job".to_string(),
                (m, _) => m.to_string(),
            };
            let mut table: BTreeMap<(MethodKind, String), BTreeMap<u8, &ResultRow>> = BTreeMap::new();
            for r in &ok {
                table.entry((r.method, label(r))).or_default().insert(r.load as u8, r);
            }
            let mut header = vec!["method".to_string()];
            for l in &loads {
                for col in ["states", "actions", "cost", "MAP", "AG"] {
                    header.push(format!("{l} {col}"));
                }
            }
            w.write_record(&header)?;
            for ((_, name), by_load) in table {
                let mut rec = vec![name];
                for l in &loads {
                    match by_load.get(&(*l as u8)) {
                        Some(r) => {
                            rec.push(r.meta_states.or(r.states).map(|v| v.to_string()).unwrap_or_default());
                            rec.push(r.actions.map(|v| v.to_string()).unwrap_or_default());
                            rec.push(r.cost().map(num).unwrap_or_default());
                            rec.push(r.map.map(num).unwrap_or_default());
                            rec.push(r.ag.map(num).unwrap_or_default());
                        }
                        None => rec.extend(std::iter::repeat_n(String::new(), 5)),
                    }
                }
                w.write_record(&rec)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
schema = 1
name = "small"
methods = ["RVI", "DLP", "RLP", "TOTJOB", "EPS", "MP", "AP"]
epsilons = [0.5]

[grid]
max_arrivals = [1]
capacity = [1, 2]
loads = ["EL", "BL"]
"#;

    #[test]
    fn parses_and_expands_the_grid() {
        let spec = ExperimentSpec::from_toml(SMALL).unwrap();
        assert_eq!(spec.points().len(), 4);
        assert_eq!(spec.grid.horizon, vec![2]);
        assert_eq!(spec.time_limit_secs, 7200.0);
        assert_eq!(spec.method_order()[0], MethodKind::Dlp);
        let p = &spec.points()[3];
        assert_eq!((p.capacity, p.load, p.arrival_rate), (2, LoadKind::BL, 0.5));
    }

    #[test]
    fn rejects_bad_specs() {
        let no_methods = SMALL.replace(r#"["RVI", "DLP", "RLP", "TOTJOB", "EPS", "MP", "AP"]"#, "[]");
        assert!(matches!(ExperimentSpec::from_toml(&no_methods), Err(Error::Config(_))));
        let unknown = SMALL.replace("\"MP\"", "\"XX\"");
        assert!(matches!(ExperimentSpec::from_toml(&unknown), Err(Error::Parse(_))));
        let schema = SMALL.replace("schema = 1", "schema = 9");
        assert!(matches!(ExperimentSpec::from_toml(&schema), Err(Error::Config(_))));
        let field = SMALL.replace("[grid]", "[grid]\ncolour = 3");
        match ExperimentSpec::from_toml(&field) {
            Err(Error::Parse(m)) => assert!(m.contains("colour") && m.contains("line"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rows_cover_every_point_and_method() {
        let spec = ExperimentSpec::from_toml(SMALL).unwrap();
        let mut rows = Vec::new();
        for p in spec.points() {
            rows.extend(run_point(&spec, &p).unwrap());
        }
        assert_eq!(rows.len(), 4 * 7);
        for r in &rows {
            assert_eq!(r.status, RowStatus::Ok, "{r:?}");
            assert!(r.ag.unwrap() >= -1e-9);
        }
        let dlp: Vec<_> = rows.iter().filter(|r| r.method == MethodKind::Dlp).collect();
        assert_eq!(dlp.iter().map(|r| r.states.unwrap()).collect::<Vec<_>>(), vec![48; 4]);
        assert_eq!(dlp[0].actions.unwrap(), 118);
        assert_eq!(dlp[2].actions.unwrap(), 145);

        let sizes = emit_table(&rows, TableKind::Sizes).unwrap();
        assert_eq!(sizes, "K,A,states,actions M=1,actions M=2\n2,1,48,118,145\n");
        let gains = emit_table(&rows, TableKind::Gains).unwrap();
        assert_eq!(gains.lines().count(), 1 + 4);
        assert!(emit_table(&rows, TableKind::Aggregation).is_err());
        let one: Vec<_> = rows.iter().filter(|r| r.capacity == 2).cloned().collect();
        let agg = emit_table(&one, TableKind::Aggregation).unwrap();
        assert!(agg.lines().any(|l| l.starts_with("Tot-job,")));

        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("point,K,A,M,lambda,load,segmentation,"));
    }

    #[test]
    fn oversized_points_are_skipped() {
        let text = SMALL.replace("methods = [", "memory_budget_bytes = 2000\nmethods = [");
        let spec = ExperimentSpec::from_toml(&text).unwrap();
        let rows = run_point(&spec, &spec.points()[0]).unwrap();
        assert_eq!(rows.len(), 7);
        assert!(rows.iter().all(|r| r.status == RowStatus::SkippedResource));
    }

    #[test]
    fn model_file_round_trip() {
        let m = ModelSpec::from_toml("max_arrivals = 2\ncapacity = 5\nload = \"FL\"").unwrap();
        let c = m.config().unwrap();
        assert_eq!((c.horizon, c.max_arrivals, c.capacity, c.arrival_rate), (2, 2, 5, 1.0));
        assert!(ModelSpec::from_toml("max_arrivals = 2\ncapacity = 0").is_err());
        assert!(matches!(ModelSpec::from_toml("capacity = 1"), Err(Error::Parse(_))));
    }

    #[test]
    fn single_row_gives_single_cell() {
        let spec = ExperimentSpec::from_toml(
            &SMALL.replace(r#"["RVI", "DLP", "RLP", "TOTJOB", "EPS", "MP", "AP"]"#, r#"["RVI"]"#),
        )
        .unwrap();
        let rows = run_point(&spec, &spec.points()[0]).unwrap();
        let t = emit_table(&rows, TableKind::Gains).unwrap();
        let lines: Vec<_> = t.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("2,1,1,200/150/100/50,EL,"));
    }
}
