//! Benchmark policies, Monte-Carlo policy evaluation and comparison metrics.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::model::{cost_of, post_decision, Action, Class, Grid, State};
use crate::solve::Policy;
use crate::space::{Mdp, MdpInstance};

/// Cheapest action of state `s`; ties go to fewer rejections, then fewer
/// early-served jobs, then the lowest action id.
pub fn myopic_choice(mdp: &Mdp, s: usize) -> usize {
    let key = |a: usize| {
        let d = mdp.label(a);
        (d.total_rejected(), d.early_served(crate::model::MAX_HORIZON))
    };
    let mut best = mdp.actions(s).start;
    for a in mdp.actions(s) {
        let (c, cb) = (mdp.cost(a), mdp.cost(best));
        if c < cb - 1e-9 || (c <= cb + 1e-9 && key(a) < key(best)) {
            best = a;
        }
    }
    best
}

/// Minimum immediate cost in every state.
pub fn myopic_policy(mdp: &Mdp) -> Policy {
    let choices: Vec<usize> = (0..mdp.num_states()).map(|s| myopic_choice(mdp, s)).collect();
    Policy::from_choices(mdp, &choices)
}

/// Always-serve action: reject nothing (or, with `reject_overflow`, only the
/// low-priority due-now requests that would run into overtime), serve every
/// due job, then fill idle capacity earliest offset first, low before high.
pub fn always_serve_action(s: &State, capacity: u32, horizon: usize, reject_overflow: bool) -> Action {
    let mut d = Action::default();
    if reject_overflow {
        let excess = s.due_total(0).saturating_sub(capacity);
        d.r[0] = excess.min(s.a.get(Class::Low, 0)) as u8;
    }
    d.y.set(Class::High, 0, s.present(Class::High, 0));
    d.y.set(Class::Low, 0, s.present(Class::Low, 0) - d.rejected(0));
    let mut idle = capacity.saturating_sub(d.due_now_served());
    for j in 1..horizon {
        for class in [Class::Low, Class::High] {
            let v = s.present(class, j).min(idle);
            d.y.set(class, j, v);
            idle -= v;
        }
    }
    d
}

pub fn always_serve_policy(instance: &MdpInstance, reject_overflow: bool) -> Policy {
    let c = &instance.config;
    Policy {
        actions: instance
            .space
            .states()
            .map(|s| always_serve_action(&s, c.capacity, c.horizon, reject_overflow))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub warmup: u64,
    pub horizon: u64,
    pub initial: State,
    pub batches: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { seed: 1, warmup: 200_000, horizon: 900_000, initial: State::empty(), batches: 30 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    /// Mean cost per period after warm-up.
    pub mean: f64,
    /// 95% batch-means half-width.
    pub half_width: f64,
    pub batch_means: Vec<f64>,
    pub periods: u64,
}

/// Two-sided 97.5% Student-t quantiles for 1..=30 degrees of freedom.
const T_975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
    2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
];

fn t_quantile(dof: usize) -> f64 {
    if dof == 0 {
        f64::NAN
    } else {
        T_975.get(dof - 1).copied().unwrap_or(1.96)
    }
}

/// Simulates `policy` on the model behind `instance`.
///
/// Arrivals are drawn cell by cell with inverse-CDF sampling from a
/// xoshiro256++ stream seeded by `seed_from_u64(config.seed)`; the dynamics
/// are applied directly, not through the stored transition kernel.
pub fn simulate(instance: &MdpInstance, policy: &Policy, config: &SimConfig) -> Result<SimResult> {
    if config.horizon == 0 || config.batches == 0 || config.horizon < config.batches as u64 {
        return Err(Error::Config("simulation horizon must cover at least one period per batch".into()));
    }
    if policy.len() != instance.num_states() {
        return Err(Error::Contract("policy does not cover the state space".into()));
    }
    let model = &instance.config;
    let k = model.horizon;
    let cells: Vec<(Class, usize, Vec<f64>)> = Class::ALL
        .iter()
        .flat_map(|&c| (0..k).map(move |j| (c, j)))
        .map(|(c, j)| {
            let mut acc = 0.0;
            let cdf = instance.arrivals.cell_pmf(c, j).iter().map(|p| {
                acc += p;
                acc
            });
            (c, j, cdf.collect())
        })
        .collect();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
    let sample = |rng: &mut Xoshiro256PlusPlus| {
        let mut a = Grid::zero();
        for (c, j, cdf) in &cells {
            let u: f64 = rng.random();
            let n = cdf.iter().position(|&f| u < f).unwrap_or(cdf.len() - 1);
            a.set(*c, *j, n as u32);
        }
        a
    };

    let mut s = config.initial;
    let batch_len = config.horizon / config.batches as u64;
    let mut batch_sums = vec![0.0; config.batches];
    let mut total = 0.0;
    for t in 0..config.warmup + config.horizon {
        let idx = instance
            .space
            .index_of(&s)
            .ok_or_else(|| Error::Contract(format!("simulation left the state space at {s:?}")))?;
        let d = &policy.actions[idx];
        let x = post_decision(&s, d, k)
            .filter(|_| crate::model::check_action(&s, d, model).is_ok())
            .ok_or_else(|| Error::Contract(format!("policy action {d:?} is infeasible in visited state {s:?}")))?;
        if t >= config.warmup {
            let c = cost_of(d, model);
            let i = t - config.warmup;
            total += c;
            batch_sums[((i / batch_len) as usize).min(config.batches - 1)] += c;
        }
        s = State::new(x, sample(&mut rng));
    }
    let mut batch_means: Vec<f64> = batch_sums.iter().map(|v| v / batch_len as f64).collect();
    let last = config.horizon - batch_len * (config.batches as u64 - 1);
    *batch_means.last_mut().unwrap() = batch_sums[config.batches - 1] / last as f64;
    let mean = total / config.horizon as f64;
    let b = config.batches as f64;
    let half_width = if config.batches > 1 {
        let bm = batch_means.iter().sum::<f64>() / b;
        let var = batch_means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (b - 1.0);
        t_quantile(config.batches - 1) * (var / b).sqrt()
    } else {
        f64::NAN
    };
    Ok(SimResult { mean, half_width, batch_means, periods: config.horizon })
}

/// Percentage of states where both policies choose the same action.
pub fn matched_action_percentage(p1: &Policy, p2: &Policy) -> Result<f64> {
    if p1.len() != p2.len() || p1.is_empty() {
        return Err(Error::Contract(format!("policies cover {} and {} states", p1.len(), p2.len())));
    }
    let same = p1.actions.iter().zip(&p2.actions).filter(|(a, b)| a == b).count();
    Ok(100.0 * same as f64 / p1.len() as f64)
}

/// Absolute percentage gap `100 |cost - optimal| / optimal`; `None` when the optimum is zero.
pub fn absolute_gap(cost: f64, optimal: f64) -> Option<f64> {
    (optimal != 0.0).then(|| 100.0 * (cost - optimal).abs() / optimal)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub optimal_gain: f64,
    pub policy_gain: f64,
    pub absolute_gap: Option<f64>,
    pub matched_actions: f64,
    pub elapsed: Duration,
}

pub fn compare(optimal: (&Policy, f64), candidate: (&Policy, f64), elapsed: Duration) -> Result<ComparisonReport> {
    Ok(ComparisonReport {
        optimal_gain: optimal.1,
        policy_gain: candidate.1,
        absolute_gap: absolute_gap(candidate.1, optimal.1),
        matched_actions: matched_action_percentage(optimal.0, candidate.0)?,
        elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::Tolerances;
    use crate::model::{check_action, ArrivalModel, Costs, LoadKind, ModelConfig, SegmentKind};
    use crate::solve::{policy_gain, solve_with_lp};
    use crate::space::{build_instance, build_instance_with, BuildOptions};

    fn config(a: u32, m: u32) -> ModelConfig {
        ModelConfig::with_profiles(m, 2, a, LoadKind::EL, SegmentKind::ES, Costs::new(200.0, 150.0, 100.0, 50.0))
            .unwrap()
    }

    #[test]
    fn myopic_rejects_instead_of_overtime() {
        let inst = build_instance(&config(2, 1), false).unwrap();
        let p = myopic_policy(&inst.mdp);
        assert_eq!(p.actions[0], Action::default());
        for (i, d) in p.actions.iter().enumerate() {
            let s = inst.state(i);
            let excess = s.due_total(0).saturating_sub(1);
            assert_eq!(d.rejected(0), excess.min(s.a.get(Class::Low, 0)));
            assert_eq!(d.early_served(2), 0);
        }
    }

    #[test]
    fn always_serve_fills_capacity() {
        let cfg = config(2, 2);
        let inst = build_instance(&cfg, false).unwrap();
        let p = always_serve_policy(&inst, false);
        assert_eq!(p.actions[0], Action::default());
        for (i, d) in p.actions.iter().enumerate() {
            let s = inst.state(i);
            check_action(&s, d, &cfg).unwrap();
            assert_eq!(d.total_rejected(), 0);
            let present = s.due_total(0) + s.due_total(1);
            if s.due_total(0) <= 2 {
                assert_eq!(d.total_served(), present.min(2));
            }
            if d.served(Class::High, 1) > 0 {
                assert_eq!(d.served(Class::Low, 1), s.present(Class::Low, 1));
            }
        }
    }

    #[test]
    fn matched_actions_and_gap() {
        let inst = build_instance(&config(1, 2), false).unwrap();
        let p = myopic_policy(&inst.mdp);
        assert_eq!(matched_action_percentage(&p, &p).unwrap(), 100.0);
        let mut q = p.clone();
        let alt = inst.mdp.labels(47).iter().find(|d| **d != p.actions[47]).copied().unwrap();
        q.actions[47] = alt;
        let m = matched_action_percentage(&p, &q).unwrap();
        assert!((m - 97.916_666_666).abs() < 1e-6);
        assert_eq!(m, matched_action_percentage(&q, &p).unwrap());
        assert!(matched_action_percentage(&p, &Policy { actions: vec![] }).is_err());
        assert_eq!(absolute_gap(10.0, 10.0), Some(0.0));
        assert!((absolute_gap(143.0, 135.11).unwrap() - 5.84).abs() < 0.005);
        assert!((absolute_gap(139.21, 136.44).unwrap() - 2.03).abs() < 0.005);
        assert_eq!(absolute_gap(1.0, 0.0), None);
    }

    #[test]
    fn zero_arrivals_cost_nothing() {
        let cfg = config(1, 2);
        let law = ArrivalModel::from_pmfs(2, 1, vec![vec![1.0, 0.0]; 4]).unwrap();
        let inst = build_instance_with(&cfg, &BuildOptions { arrivals: Some(law), ..BuildOptions::default() }).unwrap();
        let p = myopic_policy(&inst.mdp);
        let sim = simulate(&inst, &p, &SimConfig { warmup: 10, horizon: 300, ..SimConfig::default() }).unwrap();
        assert_eq!(sim.mean, 0.0);
    }

    #[test]
    fn simulation_is_deterministic_and_consistent() {
        let inst = build_instance(&config(1, 1), false).unwrap();
        let opt = solve_with_lp(&inst.mdp, &Tolerances::default()).unwrap();
        let cfg = SimConfig { warmup: 1000, horizon: 60_000, seed: 7, ..SimConfig::default() };
        let a = simulate(&inst, &opt.policy, &cfg).unwrap();
        let b = simulate(&inst, &opt.policy, &cfg).unwrap();
        assert_eq!(a, b);
        let exact = policy_gain(&inst.mdp, &opt.policy).unwrap();
        assert!((a.mean - exact).abs() <= 4.0 * a.half_width, "{} vs {exact} ± {}", a.mean, a.half_width);
        let c = simulate(&inst, &opt.policy, &SimConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.mean, c.mean);
    }
}
