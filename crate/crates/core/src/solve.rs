//! Exact average-cost solvers: the dual LP over state-action frequencies and
//! relative value iteration, plus evaluation of fixed policies.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::evaluation::myopic_choice;
use crate::lp::{self, ColumnSource, LpStatus, SparseLp, Tolerances};
use crate::model::Action;
use crate::space::Mdp;

/// Stationary deterministic policy, one action label per state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    pub actions: Vec<Action>,
}

impl Policy {
    pub fn from_choices(mdp: &Mdp, choices: &[usize]) -> Self {
        Policy { actions: choices.iter().map(|&a| *mdp.label(a)).collect() }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Global action ids in `mdp`; fails if some action is not available.
    pub fn resolve(&self, mdp: &Mdp) -> Result<Vec<usize>> {
        if self.actions.len() != mdp.num_states() {
            return Err(Error::Contract(format!(
                "policy covers {} states, model has {}",
                self.actions.len(),
                mdp.num_states()
            )));
        }
        self.actions
            .iter()
            .enumerate()
            .map(|(s, d)| {
                mdp.find_action(s, d)
                    .ok_or_else(|| Error::Contract(format!("action {d:?} is not available in state {s}")))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    DualLp,
    RelativeValueIteration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveStats {
    /// Simplex pivots or value-iteration sweeps.
    pub iterations: usize,
    pub elapsed: Duration,
    /// Final span of `h_{n+1} - h_n` (value iteration only).
    pub span: Option<f64>,
    pub degenerate_states: usize,
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Long-run average cost per period.
    pub gain: f64,
    /// Relative values with `h(reference) = 0`.
    pub bias: Vec<f64>,
    /// Chosen global action id per state.
    pub choices: Vec<usize>,
    pub policy: Policy,
    pub method: Method,
    pub stats: SolveStats,
}

/// Dual LP of an average-cost MDP: one column per state-action pair, one
/// balance row per state and a final normalization row.
pub struct DualLp<'a> {
    mdp: &'a Mdp,
    owner: Vec<u32>,
}

pub fn build_dual_lp(mdp: &Mdp) -> DualLp<'_> {
    let mut owner = vec![0u32; mdp.num_actions()];
    for s in 0..mdp.num_states() {
        for a in mdp.actions(s) {
            owner[a] = s as u32;
        }
    }
    DualLp { mdp, owner }
}

impl DualLp<'_> {
    pub fn to_sparse(&self) -> SparseLp {
        SparseLp::from_source(self)
    }
}

impl ColumnSource for DualLp<'_> {
    fn num_rows(&self) -> usize {
        self.mdp.num_states() + 1
    }

    fn num_cols(&self) -> usize {
        self.mdp.num_actions()
    }

    fn cost(&self, j: usize) -> f64 {
        self.mdp.cost(j)
    }

    fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.num_rows()];
        b[self.mdp.num_states()] = 1.0;
        b
    }

    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        let (t, p) = self.mdp.transitions(j);
        out.push((self.owner[j] as usize, 1.0));
        out.extend(t.iter().zip(p).map(|(&t, &p)| (t as usize, -p)));
        out.push((self.mdp.num_states(), 1.0));
    }

    fn reduced_costs(&self, y: &[f64], out: &mut [f64]) {
        let mut post = Vec::new();
        self.mdp.post_expectations(y, &mut post);
        let norm = y[self.mdp.num_states()];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.mdp.cost(j) - y[self.owner[j] as usize] - norm + post[self.mdp.post(j)];
        }
    }
}

#[derive(Clone, Debug)]
pub struct LpResult {
    pub status: LpStatus,
    /// Optimal gain (or the last objective when not optimal).
    pub objective: f64,
    /// State-action frequencies `x(s, d)` per global action id.
    pub frequencies: Vec<f64>,
    /// Whether each column is in the final basis.
    pub basic: Vec<bool>,
    /// Relative values read off the duals, `h(reference) = 0`.
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub elapsed: Duration,
}

/// Solves the dual LP. The simplex starts from the basis of the myopic
/// policy plus an artificial on the (redundant) balance row of the reference state.
pub fn solve_lp(mdp: &Mdp, tol: &Tolerances) -> Result<LpResult> {
    let lp = build_dual_lp(mdp);
    let n = mdp.num_states();
    let mut start: Vec<usize> = (0..n).map(|s| myopic_choice(mdp, s)).collect();
    start.push(lp.num_cols() + mdp.reference());
    let sol = lp::solve(&lp, Some(&start), tol)?;
    // With the artificial basic at zero cost, y_ref = 0 and y_s = h(s), y_norm = g.
    let shift = sol.duals[mdp.reference()];
    let bias = sol.duals[..n].iter().map(|v| v - shift).collect();
    let mut basic = vec![false; lp.num_cols()];
    for &j in sol.basis.iter().filter(|&&j| j < lp.num_cols()) {
        basic[j] = true;
    }
    Ok(LpResult {
        basic,
        status: sol.status,
        objective: sol.objective,
        frequencies: sol.x,
        bias,
        iterations: sol.iterations,
        elapsed: sol.elapsed,
    })
}

/// Frequency threshold above which a column counts as used.
pub const SUPPORT_TOL: f64 = 1e-9;

/// Reads a deterministic policy off an LP solution. Each state takes its
/// basic (or positive-frequency) action with the largest frequency, lowest id
/// on ties; states without one are transient and get the myopic action.
/// Returns the choices and the number of states with several candidates.
pub fn extract_policy(mdp: &Mdp, lp: &LpResult) -> (Vec<usize>, usize) {
    let mut degenerate = 0;
    let choices = (0..mdp.num_states())
        .map(|s| {
            let mut candidates = mdp.actions(s).filter(|&a| lp.basic[a] || lp.frequencies[a] > SUPPORT_TOL);
            let Some(mut best) = candidates.next() else {
                return myopic_choice(mdp, s);
            };
            for a in candidates {
                degenerate += 1;
                if lp.frequencies[a] > lp.frequencies[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    (choices, degenerate)
}

/// LP solve, policy extraction and packaging in one call.
pub fn solve_with_lp(mdp: &Mdp, tol: &Tolerances) -> Result<Solution> {
    let res = solve_lp(mdp, tol)?;
    match res.status {
        LpStatus::Optimal => {}
        LpStatus::TimeLimit => {
            return Err(Error::Timeout {
                limit_secs: tol.time_limit.map_or(0.0, |d| d.as_secs_f64()),
                context: format!("dual LP after {} pivots, objective {}", res.iterations, res.objective),
            })
        }
        other => return Err(Error::Numerical(format!("dual LP ended with status {other:?}"))),
    }
    let (choices, degenerate) = extract_policy(mdp, &res);
    Ok(Solution {
        gain: res.objective,
        policy: Policy::from_choices(mdp, &choices),
        choices,
        bias: res.bias,
        method: Method::DualLp,
        stats: SolveStats {
            iterations: res.iterations,
            elapsed: res.elapsed,
            span: None,
            degenerate_states: degenerate,
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RviOptions {
    /// Stop once `span(h_{n+1} - h_n)` falls below this value.
    pub span_tol: f64,
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
}

impl Default for RviOptions {
    fn default() -> Self {
        RviOptions { span_tol: 1e-10, max_iterations: 1_000_000, time_limit: None }
    }
}

/// Greedy action with ties to the lowest id.
fn greedy(mdp: &Mdp, s: usize, post: &[f64]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for a in mdp.actions(s) {
        let v = mdp.cost(a) + post[mdp.post(a)];
        if v < best.1 - 1e-12 * v.abs().max(1.0) {
            best = (a, v);
        }
    }
    best
}

/// Relative value iteration pinned at the reference state.
pub fn relative_value_iteration(mdp: &Mdp, opts: &RviOptions) -> Result<Solution> {
    let start = Instant::now();
    let n = mdp.num_states();
    let r = mdp.reference();
    let mut h = vec![0.0; n];
    let mut th = vec![0.0; n];
    let mut post = Vec::new();
    let mut iterations = 0;
    loop {
        mdp.post_expectations(&h, &mut post);
        for (s, v) in th.iter_mut().enumerate() {
            *v = greedy(mdp, s, &post).1;
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (t, o) in th.iter().zip(&h) {
            lo = lo.min(t - o);
            hi = hi.max(t - o);
        }
        let offset = th[r];
        for (o, t) in h.iter_mut().zip(&th) {
            *o = t - offset;
        }
        iterations += 1;
        let span = hi - lo;
        if span <= opts.span_tol {
            mdp.post_expectations(&h, &mut post);
            let choices: Vec<usize> = (0..n).map(|s| greedy(mdp, s, &post).0).collect();
            return Ok(Solution {
                gain: offset,
                bias: h,
                policy: Policy::from_choices(mdp, &choices),
                choices,
                method: Method::RelativeValueIteration,
                stats: SolveStats { iterations, elapsed: start.elapsed(), span: Some(span), degenerate_states: 0 },
            });
        }
        if iterations >= opts.max_iterations {
            return Err(Error::Numerical(format!(
                "value iteration did not converge: span {span} after {iterations} sweeps"
            )));
        }
        if let Some(limit) = opts.time_limit {
            if start.elapsed() > limit {
                return Err(Error::Timeout {
                    limit_secs: limit.as_secs_f64(),
                    context: format!("value iteration at span {span}"),
                });
            }
        }
    }
}

/// Gain and relative values of a fixed policy given as global action ids.
pub fn evaluate_choices(mdp: &Mdp, choices: &[usize]) -> Result<(f64, Vec<f64>)> {
    let n = mdp.num_states();
    if choices.len() != n {
        return Err(Error::Contract("policy length differs from the state count".into()));
    }
    for (s, &a) in choices.iter().enumerate() {
        if !mdp.actions(s).contains(&a) {
            return Err(Error::Contract(format!("action id {a} does not belong to state {s}")));
        }
    }
    let r = mdp.reference();
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..1_000_000 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..n {
            let a = choices[s];
            let (t, p) = mdp.transitions(a);
            let v = mdp.cost(a) + t.iter().zip(p).map(|(&t, &p)| p * h[t as usize]).sum::<f64>();
            next[s] = v;
            lo = lo.min(v - h[s]);
            hi = hi.max(v - h[s]);
        }
        let g = next[r];
        for (o, v) in h.iter_mut().zip(&next) {
            *o = v - g;
        }
        if hi - lo <= 1e-11 * g.abs().max(1.0) {
            return Ok((g, h));
        }
    }
    Err(Error::Numerical("policy evaluation did not converge (policy may not be unichain)".into()))
}

/// Exact long-run average cost of `policy`.
pub fn policy_gain(mdp: &Mdp, policy: &Policy) -> Result<f64> {
    Ok(evaluate_choices(mdp, &policy.resolve(mdp)?)?.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnichainReport {
    /// States from which some stationary policy can avoid the reference state forever.
    pub escaping: Vec<usize>,
}

impl UnichainReport {
    pub fn is_ok(&self) -> bool {
        self.escaping.is_empty()
    }
}

/// Checks that the reference state is reached from every state under every
/// policy, i.e. that every action of every state leads (with positive
/// probability) into the set that already reaches it.
pub fn verify_unichain(mdp: &Mdp) -> UnichainReport {
    let n = mdp.num_states();
    let mut reaches = vec![false; n];
    reaches[mdp.reference()] = true;
    let mut post_ok = vec![false; mdp.num_posts()];
    loop {
        for (p, ok) in post_ok.iter_mut().enumerate() {
            if !*ok {
                let (t, q) = mdp.successors(p);
                *ok = t.iter().zip(q).any(|(&t, &q)| q > 0.0 && reaches[t as usize]);
            }
        }
        let mut changed = false;
        for s in 0..n {
            if !reaches[s] && mdp.actions(s).all(|a| post_ok[mdp.post(a)]) {
                reaches[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    UnichainReport { escaping: (0..n).filter(|&s| !reaches[s]).collect() }
}
