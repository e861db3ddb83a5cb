//! Reachable state space, feasible action sets and the assembled MDP.
//!
//! States are indexed in lexicographic `(x, a)` order: `index = x_index * |arrivals| + a_index`,
//! where both parts are mixed-radix numbers over the `(class, offset)` cells.

use std::fmt::Write as _;
use std::io::Write;
use std::ops::Range;
use std::time::Instant;

use crate::elimination::{self, EliminationSummary};
use crate::error::{Error, Result};
use crate::model::{cost_of, post_decision, Action, ArrivalModel, Class, Grid, ModelConfig, State, MAX_HORIZON};

/// Default memory budget for instance construction (12 GiB).
pub const DEFAULT_MEMORY_BUDGET: u64 = 12 << 30;

/// Rough per-element footprints used for sizing before allocation.
const BYTES_PER_STATE: u64 = 16;
const BYTES_PER_ACTION: u64 = (std::mem::size_of::<Action>() + 8 + 4) as u64;

/// Upper bounds `u_{ij}` on the processing-queue counts, indexed `[class][offset]`.
pub fn queue_bounds(config: &ModelConfig) -> [[u32; MAX_HORIZON]; 2] {
    let (k, a) = (config.horizon, config.max_arrivals);
    let mut u = [[0; MAX_HORIZON]; 2];
    for j in 1..k.saturating_sub(1) {
        let v = (k - 1 - j) as u32 * a;
        u[0][j] = v;
        u[1][j] = v;
    }
    u[0][0] = 2 * (k as u32 - 1) * a;
    u
}

/// Bijection between reachable states and `0..len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    horizon: usize,
    max_arrivals: u32,
    /// `(class, offset, radix)` for every queue cell with a positive bound.
    x_cells: Vec<(Class, usize, u32)>,
    num_queues: usize,
    num_arrivals: usize,
}

impl StateSpace {
    /// Same as [`enumerate_states`] with the default memory budget.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        enumerate_states(config, DEFAULT_MEMORY_BUDGET)
    }

    fn unchecked(config: &ModelConfig) -> Self {
        let u = queue_bounds(config);
        let x_cells: Vec<_> = Class::ALL
            .iter()
            .flat_map(|&c| (0..config.horizon).map(move |j| (c, j)))
            .filter(|&(c, j)| u[c.index()][j] > 0)
            .map(|(c, j)| (c, j, u[c.index()][j] + 1))
            .collect();
        let num_queues = x_cells.iter().map(|&(_, _, r)| r as usize).product();
        let num_arrivals = (config.max_arrivals as usize + 1).pow(2 * config.horizon as u32);
        StateSpace { horizon: config.horizon, max_arrivals: config.max_arrivals, x_cells, num_queues, num_arrivals }
    }

    pub fn len(&self) -> usize {
        self.num_queues * self.num_arrivals
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_queue_configurations(&self) -> usize {
        self.num_queues
    }

    pub fn num_arrival_vectors(&self) -> usize {
        self.num_arrivals
    }

    /// Index of a queue configuration, or `None` if it is outside the bounds.
    pub fn queue_index(&self, x: &Grid) -> Option<usize> {
        let mut idx = 0usize;
        let mut covered = 0u32;
        for &(c, j, radix) in &self.x_cells {
            let v = x.get(c, j);
            if v >= radix {
                return None;
            }
            covered += v;
            idx = idx * radix as usize + v as usize;
        }
        // Cells without a bound must be empty.
        (covered == x.total()).then_some(idx)
    }

    pub fn queue_of(&self, mut index: usize) -> Grid {
        let mut x = Grid::zero();
        for &(c, j, radix) in self.x_cells.iter().rev() {
            x.set(c, j, (index % radix as usize) as u32);
            index /= radix as usize;
        }
        x
    }

    pub fn arrival_index(&self, a: &Grid) -> Option<usize> {
        let base = self.max_arrivals as usize + 1;
        let mut idx = 0usize;
        for c in Class::ALL {
            for j in 0..self.horizon {
                let v = a.get(c, j);
                if v > self.max_arrivals {
                    return None;
                }
                idx = idx * base + v as usize;
            }
        }
        (a.total() == a.to_flat(self.horizon).iter().sum::<u32>()).then_some(idx)
    }

    pub fn arrivals_of(&self, mut index: usize) -> Grid {
        let base = self.max_arrivals as usize + 1;
        let mut a = Grid::zero();
        for c in (0..2 * self.horizon).rev() {
            a.set(Class::ALL[c / self.horizon], c % self.horizon, (index % base) as u32);
            index /= base;
        }
        a
    }

    pub fn index_of(&self, s: &State) -> Option<usize> {
        Some(self.queue_index(&s.x)? * self.num_arrivals + self.arrival_index(&s.a)?)
    }

    pub fn state_of(&self, index: usize) -> State {
        assert!(index < self.len(), "state index {index} out of range");
        State::new(self.queue_of(index / self.num_arrivals), self.arrivals_of(index % self.num_arrivals))
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.len()).map(|i| self.state_of(i))
    }
}

/// Number of reachable states, computed without enumerating them.
pub fn count_states(config: &ModelConfig) -> u128 {
    let u = queue_bounds(config);
    let queues: u128 = u.iter().flatten().map(|&b| b as u128 + 1).product();
    queues * (config.max_arrivals as u128 + 1).pow(2 * config.horizon as u32)
}

/// Builds the reachable state space after checking it fits in `memory_budget` bytes.
pub fn enumerate_states(config: &ModelConfig, memory_budget: u64) -> Result<StateSpace> {
    config.validate()?;
    let n = count_states(config);
    let needed = n.saturating_mul(BYTES_PER_STATE as u128);
    if needed > memory_budget as u128 || n > u32::MAX as u128 {
        return Err(Error::Resource {
            what: format!("state space of {n} states"),
            needed: needed.min(u64::MAX as u128) as u64,
            limit: memory_budget,
        });
    }
    Ok(StateSpace::unchecked(config))
}

/// Calls `f` on every feasible action of `s` in lexicographic order.
pub fn for_each_action(s: &State, config: &ModelConfig, mut f: impl FnMut(&Action)) {
    let k = config.horizon;
    let mut d = Action::default();
    // Free service cells after the forced due-now ones: (High, 1..K) then (Low, 1..K).
    let free: Vec<(Class, usize)> = Class::ALL.iter().flat_map(|&c| (1..k).map(move |j| (c, j))).collect();

    fn fill_y(s: &State, d: &mut Action, free: &[(Class, usize)], pos: usize, cap: u32, f: &mut dyn FnMut(&Action)) {
        let Some(&(c, j)) = free.get(pos) else {
            f(d);
            return;
        };
        let mut avail = s.present(c, j);
        if c == Class::Low {
            avail -= d.rejected(j);
        }
        for v in 0..=avail.min(cap) {
            d.y.set(c, j, v);
            fill_y(s, d, free, pos + 1, cap - v, f);
        }
        d.y.set(c, j, 0);
    }

    fn fill_r(
        s: &State,
        d: &mut Action,
        free: &[(Class, usize)],
        j: usize,
        k: usize,
        capacity: u32,
        f: &mut dyn FnMut(&Action),
    ) {
        if j == k {
            // Due-now service is forced; it is fixed by r_0 so enumeration stays sorted.
            let due_high = s.present(Class::High, 0);
            let due_low = s.present(Class::Low, 0) - d.rejected(0);
            d.y.set(Class::High, 0, due_high);
            d.y.set(Class::Low, 0, due_low);
            let cap = capacity.saturating_sub(due_high + due_low);
            fill_y(s, d, free, 0, cap, f);
            return;
        }
        for v in 0..=s.a.get(Class::Low, j) {
            d.r[j] = v as u8;
            fill_r(s, d, free, j + 1, k, capacity, f);
        }
        d.r[j] = 0;
    }

    fill_r(s, &mut d, &free, 0, k, config.capacity, &mut f);
}

/// All feasible actions of `s`, sorted.
pub fn enumerate_actions(s: &State, config: &ModelConfig) -> Vec<Action> {
    let mut out = Vec::new();
    for_each_action(s, config, |d| out.push(*d));
    out
}

/// Number of feasible actions of `s`.
pub fn count_actions(s: &State, config: &ModelConfig) -> usize {
    let mut n = 0;
    for_each_action(s, config, |_| n += 1);
    n
}

/// Finite average-cost MDP in compact form.
///
/// Each action points at a *post-decision* id; all actions sharing a post id
/// have the same successor distribution. Action labels are sorted within each state.
#[derive(Clone, Debug)]
pub struct Mdp {
    action_offsets: Vec<usize>,
    labels: Vec<Action>,
    costs: Vec<f64>,
    posts: Vec<u32>,
    kernel_offsets: Vec<usize>,
    kernel_targets: Vec<u32>,
    kernel_probs: Vec<f64>,
    reference: usize,
}

/// Row-sum tolerance for successor distributions.
pub const ROW_SUM_TOL: f64 = 1e-9;

impl Mdp {
    /// Assembles and validates an MDP.
    ///
    /// `action_offsets` has one entry per state plus a final sentinel; the
    /// successor lists are CSR rows indexed by post id.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        action_offsets: Vec<usize>,
        labels: Vec<Action>,
        costs: Vec<f64>,
        posts: Vec<u32>,
        kernel_offsets: Vec<usize>,
        kernel_targets: Vec<u32>,
        kernel_probs: Vec<f64>,
        reference: usize,
    ) -> Result<Self> {
        let contract = |m: String| Err(Error::Contract(m));
        let n = action_offsets.len().saturating_sub(1);
        if n == 0 || action_offsets[0] != 0 || *action_offsets.last().unwrap() != labels.len() {
            return contract("malformed action offsets".into());
        }
        if labels.len() != costs.len() || labels.len() != posts.len() {
            return contract("action arrays differ in length".into());
        }
        if reference >= n {
            return contract(format!("reference state {reference} out of range"));
        }
        let num_posts = kernel_offsets.len().saturating_sub(1);
        if kernel_targets.len() != kernel_probs.len() || kernel_offsets.last() != Some(&kernel_targets.len()) {
            return contract("malformed successor lists".into());
        }
        for s in 0..n {
            let (lo, hi) = (action_offsets[s], action_offsets[s + 1]);
            if lo >= hi {
                return contract(format!("state {s} has no actions"));
            }
            if labels[lo..hi].windows(2).any(|w| w[0] >= w[1]) {
                return contract(format!("actions of state {s} are not strictly sorted"));
            }
        }
        if posts.iter().any(|&p| p as usize >= num_posts) {
            return contract("action refers to an unknown post-decision id".into());
        }
        for p in 0..num_posts {
            let range = kernel_offsets[p]..kernel_offsets[p + 1];
            if kernel_targets[range.clone()].iter().any(|&t| t as usize >= n) {
                return contract(format!("post {p} has a successor out of range"));
            }
            let sum: f64 = kernel_probs[range].iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return contract(format!("successor distribution {p} sums to {sum}"));
            }
        }
        Ok(Mdp { action_offsets, labels, costs, posts, kernel_offsets, kernel_targets, kernel_probs, reference })
    }

    pub fn num_states(&self) -> usize {
        self.action_offsets.len() - 1
    }

    pub fn num_actions(&self) -> usize {
        self.labels.len()
    }

    pub fn num_posts(&self) -> usize {
        self.kernel_offsets.len() - 1
    }

    pub fn num_kernel_entries(&self) -> usize {
        self.kernel_targets.len()
    }

    /// Global action ids of state `s`.
    #[inline]
    pub fn actions(&self, s: usize) -> Range<usize> {
        self.action_offsets[s]..self.action_offsets[s + 1]
    }

    #[inline]
    pub fn label(&self, action: usize) -> &Action {
        &self.labels[action]
    }

    pub fn labels(&self, s: usize) -> &[Action] {
        &self.labels[self.actions(s)]
    }

    #[inline]
    pub fn cost(&self, action: usize) -> f64 {
        self.costs[action]
    }

    #[inline]
    pub fn post(&self, action: usize) -> usize {
        self.posts[action] as usize
    }

    /// Successor states and probabilities of a post-decision id.
    #[inline]
    pub fn successors(&self, post: usize) -> (&[u32], &[f64]) {
        let r = self.kernel_offsets[post]..self.kernel_offsets[post + 1];
        (&self.kernel_targets[r.clone()], &self.kernel_probs[r])
    }

    /// Sparse transition row of a global action id.
    #[inline]
    pub fn transitions(&self, action: usize) -> (&[u32], &[f64]) {
        self.successors(self.post(action))
    }

    /// The state used to pin the relative values (the empty system for the queueing model).
    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Global id of the action labelled `d` in state `s`.
    pub fn find_action(&self, s: usize, d: &Action) -> Option<usize> {
        let r = self.actions(s);
        self.labels[r.clone()].binary_search(d).ok().map(|i| r.start + i)
    }

    /// `out[p] = sum_j P(j | p) h(j)` for every post id.
    pub fn post_expectations(&self, h: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.num_posts()).map(|p| {
            let (t, q) = self.successors(p);
            t.iter().zip(q).map(|(&j, &pr)| pr * h[j as usize]).sum::<f64>()
        }));
    }

    /// Rough resident size in bytes.
    pub fn memory_bytes(&self) -> u64 {
        (self.action_offsets.len() * 8
            + self.labels.len() * BYTES_PER_ACTION as usize
            + self.kernel_offsets.len() * 8
            + self.kernel_targets.len() * 12) as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildOptions {
    pub eliminate: bool,
    pub memory_budget: u64,
    /// Overrides the truncated-Poisson arrival law (fixtures, what-if studies).
    pub arrivals: Option<ArrivalModel>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { eliminate: false, memory_budget: DEFAULT_MEMORY_BUDGET, arrivals: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildStats {
    pub states: usize,
    /// Feasible actions before elimination.
    pub feasible_actions: usize,
    /// Actions kept in the instance.
    pub actions: usize,
    pub build_secs: f64,
    pub memory_bytes: u64,
    pub notes: Vec<String>,
}

/// The queueing MDP with its state space and parameters.
#[derive(Clone, Debug)]
pub struct MdpInstance {
    pub config: ModelConfig,
    pub space: StateSpace,
    pub arrivals: ArrivalModel,
    pub mdp: Mdp,
    pub eliminated: bool,
    pub stats: BuildStats,
}

impl MdpInstance {
    pub fn num_states(&self) -> usize {
        self.space.len()
    }

    pub fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    pub fn state(&self, index: usize) -> State {
        self.space.state_of(index)
    }

    /// Writes the line-oriented text dump:
    ///
    /// ```text
    /// # admcap instance v1
    /// config K=<K> A=<A> M=<M> lambda=<lambda> q=<q1>,<q2> v=<v..> costs=<co>,<cr>,<ce1>,<ce2> eliminated=<bool>
    /// state <index> x=<x_1,0..x_1,K-1,x_2,0..> a=<same layout>
    /// action <state> r=<r_0..r_K-1> y=<y layout as x> cost=<c>
    /// ```
    pub fn write_dump(&self, mut out: impl Write) -> Result<()> {
        let k = self.config.horizon;
        let c = &self.config;
        writeln!(out, "# admcap instance v1")?;
        writeln!(
            out,
            "config K={} A={} M={} lambda={} q={} v={} costs={},{},{},{} eliminated={}",
            k,
            c.max_arrivals,
            c.capacity,
            c.arrival_rate,
            join(&c.segmentation),
            join(&c.load),
            c.costs.overtime,
            c.costs.rejection,
            c.costs.early_high,
            c.costs.early_low,
            self.eliminated
        )?;
        for i in 0..self.num_states() {
            let s = self.state(i);
            writeln!(out, "state {i} x={} a={}", join(&s.x.to_flat(k)), join(&s.a.to_flat(k)))?;
        }
        for i in 0..self.num_states() {
            for id in self.mdp.actions(i) {
                let d = self.mdp.label(id);
                writeln!(
                    out,
                    "action {i} r={} y={} cost={}",
                    join(&d.r[..k]),
                    join(&d.y.to_flat(k)),
                    self.mdp.cost(id)
                )?;
            }
        }
        Ok(())
    }
}

pub(crate) fn join<T: std::fmt::Display>(v: &[T]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{x}");
    }
    s
}

/// Builds the full instance with default options.
pub fn build_instance(config: &ModelConfig, eliminate: bool) -> Result<MdpInstance> {
    build_instance_with(config, &BuildOptions { eliminate, ..BuildOptions::default() })
}

pub fn build_instance_with(config: &ModelConfig, options: &BuildOptions) -> Result<MdpInstance> {
    let start = Instant::now();
    let space = enumerate_states(config, options.memory_budget)?;
    let arrivals = match &options.arrivals {
        Some(law) => {
            if law.horizon() != config.horizon || law.max_arrivals() != config.max_arrivals {
                return Err(Error::Config("arrival law does not match the model dimensions".into()));
            }
            law.clone()
        }
        None => ArrivalModel::truncated_poisson(config),
    };
    let k = config.horizon;
    let n = space.len();
    let n_a = space.num_arrival_vectors();

    // One post-decision id per queue configuration; arrivals are independent of the action.
    let joint = arrivals.joint_table();
    let support: Vec<(u32, f64)> =
        joint.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, &p)| (i as u32, p)).collect();
    let num_posts = space.num_queue_configurations();
    let mut kernel_offsets = Vec::with_capacity(num_posts + 1);
    let mut kernel_targets = Vec::with_capacity(num_posts * support.len());
    let mut kernel_probs = Vec::with_capacity(num_posts * support.len());
    kernel_offsets.push(0);
    for p in 0..num_posts {
        for &(a, pr) in &support {
            kernel_targets.push((p * n_a) as u32 + a);
            kernel_probs.push(pr);
        }
        kernel_offsets.push(kernel_targets.len());
    }

    let filter = options.eliminate.then(|| elimination::ActionFilter::new(config));
    let mut action_offsets = Vec::with_capacity(n + 1);
    let mut labels = Vec::new();
    let mut costs = Vec::new();
    let mut posts = Vec::new();
    let mut feasible = 0usize;
    let mut summary = EliminationSummary::default();
    let mut scratch = Vec::new();
    action_offsets.push(0);
    for i in 0..n {
        let s = space.state_of(i);
        scratch.clear();
        for_each_action(&s, config, |d| scratch.push(*d));
        feasible += scratch.len();
        if let Some(f) = &filter {
            f.retain(&s, &mut scratch, &mut summary);
        }
        for d in &scratch {
            let x = post_decision(&s, d, k).expect("enumerated actions are feasible");
            let p = space.queue_index(&x).ok_or_else(|| {
                Error::Numerical(format!("successor queue {x:?} of state {s:?} is outside the bounds"))
            })?;
            labels.push(*d);
            costs.push(cost_of(d, config));
            posts.push(p as u32);
        }
        action_offsets.push(labels.len());
        let used = (labels.len() as u64) * BYTES_PER_ACTION + (n as u64) * BYTES_PER_STATE;
        if used > options.memory_budget {
            return Err(Error::Resource {
                what: format!("action sets of {n} states"),
                needed: used,
                limit: options.memory_budget,
            });
        }
    }
    let reference = space.index_of(&State::empty()).expect("the empty state is reachable");
    let mdp =
        Mdp::from_parts(action_offsets, labels, costs, posts, kernel_offsets, kernel_targets, kernel_probs, reference)?;
    let mut notes = Vec::new();
    if let Some(f) = &filter {
        notes.extend(f.notes());
    }
    let stats = BuildStats {
        states: n,
        feasible_actions: feasible,
        actions: mdp.num_actions(),
        build_secs: start.elapsed().as_secs_f64(),
        memory_bytes: mdp.memory_bytes(),
        notes,
    };
    Ok(MdpInstance { config: config.clone(), space, arrivals, mdp, eliminated: options.eliminate, stats })
}
