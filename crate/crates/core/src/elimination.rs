//! Structural filters that remove provably suboptimal actions before solving.
//!
//! The filters depend only on the state, the capacity, the horizon and the
//! costs, never on the arrival probabilities.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{Action, Class, ModelConfig, State};
use crate::space::{for_each_action, MdpInstance};

/// Ordering of the four unit costs. Ties and other orderings are `Other`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CostRegime {
    /// `c_e2 < c_e1 < c_r < c_o`
    R1,
    /// `c_r < c_e2 < c_e1 < c_o`
    R2,
    /// `c_r < c_o < c_e2 < c_e1`
    R3,
    Other,
}

impl CostRegime {
    pub fn classify(config: &ModelConfig) -> Self {
        let c = &config.costs;
        let (co, cr, e1, e2) = (c.overtime, c.rejection, c.early_high, c.early_low);
        if e2 < e1 && e1 < cr && cr < co {
            CostRegime::R1
        } else if cr < e2 && e2 < e1 && e1 < co {
            CostRegime::R2
        } else if cr < co && co < e2 && e2 < e1 {
            CostRegime::R3
        } else {
            CostRegime::Other
        }
    }
}

impl fmt::Display for CostRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CostRegime::R1 => "R1 (c_e2 < c_e1 < c_r < c_o)",
            CostRegime::R2 => "R2 (c_r < c_e2 < c_e1 < c_o)",
            CostRegime::R3 => "R3 (c_r < c_o < c_e2 < c_e1)",
            CostRegime::Other => "other",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assumption {
    /// Early service of a high-priority job costs more than of a low-priority one.
    EarlinessOrder,
    /// Rejecting a low-priority request is cheaper than serving it in overtime.
    RejectionBelowOvertime,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::EarlinessOrder => f.write_str("earliness order violated: need c_e2 < c_e1"),
            Assumption::RejectionBelowOvertime => f.write_str("rejection/overtime order violated: need c_r < c_o"),
        }
    }
}

/// Lists the violated cost assumptions; empty means the filters are applicable.
pub fn check_assumptions(config: &ModelConfig) -> Vec<Assumption> {
    let c = &config.costs;
    let mut v = Vec::new();
    if !(c.early_low < c.early_high) {
        v.push(Assumption::EarlinessOrder);
    }
    if !(c.rejection < c.overtime) {
        v.push(Assumption::RejectionBelowOvertime);
    }
    v
}

/// At least `M` jobs, queued or arriving, are due at offset `j`.
pub fn is_boundary(s: &State, j: usize, config: &ModelConfig) -> bool {
    s.due_total(j) >= config.capacity
}

#[inline]
fn pos(v: i64) -> i64 {
    v.max(0)
}

/// Low-priority requests that would push offset `j` into certain overtime.
#[inline]
fn overtime(s: &State, j: usize, m: i64) -> i64 {
    pos(s.due_total(j) as i64 - m)
}

fn all_boundary(s: &State, config: &ModelConfig) -> bool {
    (0..config.horizon).all(|j| is_boundary(s, j, config))
}

/// Boundary-state rule: when every offset is boundary, reject every request
/// that would cause overtime and serve nothing early.
fn prop3_keeps(s: &State, d: &Action, config: &ModelConfig) -> bool {
    if !all_boundary(s, config) {
        return true;
    }
    let m = config.capacity as i64;
    let k = config.horizon;
    (0..k).all(|j| d.rejected(j) as i64 >= overtime(s, j, m).min(s.a.get(Class::Low, j) as i64))
        && d.early_served(k) == 0
}

/// Removes actions ruled out by the boundary-state rule.
pub fn prop3_filter(s: &State, actions: &[Action], config: &ModelConfig) -> Vec<Action> {
    actions.iter().filter(|d| prop3_keeps(s, d, config)).copied().collect()
}

/// Lower bound on `r_0` shared by all regimes.
fn r0_bound_keeps(s: &State, d: &Action, m: i64) -> bool {
    let lo =
        pos(s.present(Class::High, 0) as i64 + s.a.get(Class::Low, 0) as i64 - m).min(s.a.get(Class::Low, 0) as i64);
    d.rejected(0) as i64 >= lo
}

/// Regime bounds for a two-period horizon.
fn two_period_keeps(s: &State, d: &Action, m: i64, regime: CostRegime) -> bool {
    let a11 = s.present(Class::High, 1) as i64;
    let a21 = s.present(Class::Low, 1) as i64;
    let r1 = d.rejected(1) as i64;
    let y11 = d.served(Class::High, 1) as i64;
    let y21 = d.served(Class::Low, 1) as i64;
    let due = s.present(Class::High, 0) as i64 + s.a.get(Class::Low, 0) as i64 - d.rejected(0) as i64;
    let idle = pos(m - due);
    let low_cap = idle.min(a21 - r1);
    let ok = match regime {
        CostRegime::R1 => {
            // Each exchange below yields the same next queue at lower cost:
            // reject a carried low job that is certain to need overtime,
            // serve a rejected job early while capacity is idle, and serve
            // low before high when both are served early.
            let carried_excess = pos(a11 + a21 - y11 - y21 - m);
            r1 >= carried_excess.min(a21 - y21) && (r1 == 0 || y11 + y21 >= idle) && (y11 == 0 || y21 == a21 - r1)
        }
        CostRegime::R2 => {
            let lo = pos(a11 + a21 - m).min(a21);
            let y21_ok = if r1 > 0 { y21 == 0 } else { y21 <= low_cap };
            r1 >= lo && y11 <= pos(m - (due + y21)).min(a11) && y21_ok
        }
        CostRegime::R3 => r1 >= pos(a11 + a21 - m).min(a21) && y11 == 0 && y21 == 0,
        CostRegime::Other => true,
    };
    ok && y11 + y21 <= idle
}

/// Regime bounds for horizons longer than two periods.
fn multi_period_keeps(s: &State, d: &Action, config: &ModelConfig, regime: CostRegime) -> bool {
    let m = config.capacity as i64;
    let mut served = d.due_now_served() as i64;
    for j in 1..config.horizon {
        let a2 = s.a.get(Class::Low, j) as i64;
        let r = d.rejected(j) as i64;
        let y1 = d.served(Class::High, j) as i64;
        let y2 = d.served(Class::Low, j) as i64;
        let ot = overtime(s, j, m);
        // Under R1 a carried job may later be served early for less than c_r.
        let lo = if regime == CostRegime::R1 { 0 } else { ot.min(a2) };
        if r < lo {
            return false;
        }
        let remain = pos(m - served);
        let y_ok = match regime {
            CostRegime::R3 => y1 == 0 && y2 == 0,
            _ => {
                y1 <= remain.min(s.present(Class::High, j) as i64)
                    && y2 <= remain.min(s.present(Class::Low, j) as i64 - r)
            }
        };
        if !y_ok {
            return false;
        }
        served += y1 + y2;
    }
    let due = s.present(Class::High, 0) as i64 + s.a.get(Class::Low, 0) as i64 - d.rejected(0) as i64;
    d.early_served(config.horizon) as i64 <= pos(m - due)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub actions: Vec<Action>,
    pub note: Option<String>,
}

/// Applies the regime-specific bounds (two-period rules for `K = 2`, the
/// general rules otherwise). Outside the three regimes only the common `r_0`
/// bound is applied, and nothing at all when the cost assumptions fail.
pub fn prop24_filter(s: &State, actions: &[Action], config: &ModelConfig) -> FilterOutcome {
    let regime = CostRegime::classify(config);
    if !check_assumptions(config).is_empty() {
        return FilterOutcome {
            actions: actions.to_vec(),
            note: Some("cost assumptions violated; no regime filter applied".into()),
        };
    }
    let m = config.capacity as i64;
    let keep = |d: &&Action| {
        r0_bound_keeps(s, d, m)
            && match (regime, config.horizon) {
                (CostRegime::Other, _) => true,
                (_, 2) => two_period_keeps(s, d, m, regime),
                _ => multi_period_keeps(s, d, config, regime),
            }
    };
    let note = (regime == CostRegime::Other).then(|| "no regime filter applied (costs outside R1-R3)".to_string());
    FilterOutcome { actions: actions.iter().filter(keep).copied().collect(), note }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EliminationSummary {
    pub removed_boundary: usize,
    pub removed_regime: usize,
}

/// Combined filter used while building an instance.
#[derive(Clone, Debug)]
pub struct ActionFilter {
    config: ModelConfig,
    regime: CostRegime,
    applicable: bool,
}

impl ActionFilter {
    pub fn new(config: &ModelConfig) -> Self {
        ActionFilter {
            config: config.clone(),
            regime: CostRegime::classify(config),
            applicable: check_assumptions(config).is_empty(),
        }
    }

    pub fn regime(&self) -> CostRegime {
        self.regime
    }

    pub fn notes(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !self.applicable {
            let why: Vec<String> = check_assumptions(&self.config).iter().map(|a| a.to_string()).collect();
            v.push(format!("elimination skipped: {}", why.join("; ")));
        } else if self.regime == CostRegime::Other {
            v.push("costs outside R1-R3: only the r_0 bound applied".into());
        }
        v
    }

    /// Keeps the actions of `s` that survive both filters, in place.
    pub fn retain(&self, s: &State, actions: &mut Vec<Action>, summary: &mut EliminationSummary) {
        if !self.applicable {
            return;
        }
        let before = actions.len();
        // The two-period rules are complete on their own; under R2 the
        // no-early-service part of the boundary rule can cut the optimum.
        if self.config.horizon > 2 && matches!(self.regime, CostRegime::R1 | CostRegime::R3) {
            actions.retain(|d| prop3_keeps(s, d, &self.config));
        }
        let mid = actions.len();
        let out = prop24_filter(s, actions, &self.config);
        *actions = out.actions;
        summary.removed_boundary += before - mid;
        summary.removed_regime += mid - actions.len();
        debug_assert!(!actions.is_empty(), "filters removed every action of {s:?}");
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionStats {
    /// `(before, after)` action counts per state.
    pub per_state: Vec<(usize, usize)>,
    pub total_before: usize,
    pub total_after: usize,
    /// `after / before`.
    pub ratio: f64,
    pub memory_before: u64,
    pub memory_after: u64,
}

/// Compares the action sets of two instances built on the same state space.
pub fn reduced_action_stats(before: &MdpInstance, after: &MdpInstance) -> Result<ReductionStats> {
    if before.space != after.space {
        return Err(Error::Contract("instances have different state spaces".into()));
    }
    let per_state: Vec<_> =
        (0..before.num_states()).map(|s| (before.mdp.actions(s).len(), after.mdp.actions(s).len())).collect();
    let total_before = before.num_actions();
    let total_after = after.num_actions();
    Ok(ReductionStats {
        per_state,
        total_before,
        total_after,
        ratio: total_after as f64 / total_before as f64,
        memory_before: before.mdp.memory_bytes(),
        memory_after: after.mdp.memory_bytes(),
    })
}

/// Per-state audit trail: `state <index> x=.. a=.. feasible=<n> boundary=<n> regime=<n> kept=<n>`,
/// where `boundary` and `regime` count the actions removed by each filter.
pub fn write_trace(instance: &MdpInstance, mut out: impl Write) -> Result<()> {
    let config = &instance.config;
    let k = config.horizon;
    let filter = ActionFilter::new(config);
    writeln!(out, "# admcap elimination trace v1 regime={}", filter.regime())?;
    for note in filter.notes() {
        writeln!(out, "# {note}")?;
    }
    let mut actions = Vec::new();
    for i in 0..instance.num_states() {
        let s = instance.state(i);
        actions.clear();
        for_each_action(&s, config, |d| actions.push(*d));
        let feasible = actions.len();
        let mut summary = EliminationSummary::default();
        filter.retain(&s, &mut actions, &mut summary);
        writeln!(
            out,
            "state {i} x={} a={} feasible={feasible} boundary={} regime={} kept={}",
            crate::space::join(&s.x.to_flat(k)),
            crate::space::join(&s.a.to_flat(k)),
            summary.removed_boundary,
            summary.removed_regime,
            actions.len()
        )?;
    }
    Ok(())
}
