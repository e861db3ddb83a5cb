//! State aggregation: total-job and epsilon-homogeneity partitions, the
//! aggregate MDP over meta-states, and lifting aggregate policies back.
//!
//! Actions are matched by identity: a meta-state may use exactly the actions
//! that every member can take.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{Action, Class, State, MAX_HORIZON};
use crate::solve::Policy;
use crate::space::{join, Mdp, MdpInstance};

/// Per-`(class, offset)` totals `x_ij + a_ij`, high row first.
pub type TotalJobKey = [u16; 2 * MAX_HORIZON];

pub fn total_job_key(s: &State) -> TotalJobKey {
    let mut key = [0u16; 2 * MAX_HORIZON];
    for class in Class::ALL {
        for j in 0..MAX_HORIZON {
            key[class.index() * MAX_HORIZON + j] = s.present(class, j) as u16;
        }
    }
    key
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AggregationMethod {
    /// Equal total-job keys, then cost slack `gamma` on common actions.
    TotalJob {
        gamma: f64,
    },
    /// Greedy clustering with normalized cost slack `epsilon`.
    Epsilon {
        epsilon: f64,
    },
    Singleton,
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationMethod::TotalJob { gamma } => write!(f, "total-job gamma={gamma}"),
            AggregationMethod::Epsilon { epsilon } => write!(f, "epsilon epsilon={epsilon}"),
            AggregationMethod::Singleton => f.write_str("singleton"),
        }
    }
}

/// Disjoint cover of the state indices by meta-states.
#[derive(Clone, Debug)]
pub struct Partition {
    pub method: AggregationMethod,
    /// Member state indices of each meta-state, ascending.
    pub members: Vec<Vec<usize>>,
    /// Meta-state of each original state.
    pub meta_of: Vec<usize>,
    /// Actions available in every member, sorted.
    pub common: Vec<Vec<Action>>,
    pub diagnostics: Vec<String>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.meta_of.len()
    }

    /// Total number of meta-state actions.
    pub fn num_actions(&self) -> usize {
        self.common.iter().map(Vec::len).sum()
    }

    /// Every state in its own meta-state.
    pub fn singletons(mdp: &Mdp) -> Self {
        let n = mdp.num_states();
        Partition {
            method: AggregationMethod::Singleton,
            members: (0..n).map(|s| vec![s]).collect(),
            meta_of: (0..n).collect(),
            common: (0..n).map(|s| mdp.labels(s).to_vec()).collect(),
            diagnostics: Vec::new(),
        }
    }

    /// Checks the cover, disjointness and nonempty common action sets.
    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        if self.meta_of.len() != mdp.num_states() || self.common.len() != self.members.len() {
            return bad("partition does not match the model".into());
        }
        let mut seen = vec![false; mdp.num_states()];
        for (i, members) in self.members.iter().enumerate() {
            if members.is_empty() || self.common[i].is_empty() {
                return bad(format!("meta-state {i} is empty or has no common action"));
            }
            for &s in members {
                if s >= seen.len() || seen[s] || self.meta_of[s] != i {
                    return bad(format!("state {s} is not covered exactly once"));
                }
                seen[s] = true;
                if self.common[i].iter().any(|d| mdp.find_action(s, d).is_none()) {
                    return bad(format!("a common action of meta-state {i} is not available in state {s}"));
                }
            }
        }
        if seen.iter().any(|&v| !v) {
            return bad("some state is not covered".into());
        }
        Ok(())
    }

    /// Line-oriented dump:
    ///
    /// ```text
    /// # admcap partition v1
    /// partition method=<method> metas=<N> states=<n>
    /// meta <id> size=<members> actions=<common actions> members=<i,j,...>
    /// ```
    pub fn write_dump(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "# admcap partition v1")?;
        writeln!(out, "partition method={} metas={} states={}", self.method, self.len(), self.num_states())?;
        for (i, m) in self.members.iter().enumerate() {
            writeln!(out, "meta {i} size={} actions={} members={}", m.len(), self.common[i].len(), join(m))?;
        }
        Ok(())
    }
}

const ROW_TOL: f64 = 1e-9;

fn same_row(mdp: &Mdp, p: usize, q: usize) -> bool {
    if p == q {
        return true;
    }
    let (tp, pp) = mdp.successors(p);
    let (tq, pq) = mdp.successors(q);
    tp == tq && pp.iter().zip(pq).all(|(a, b)| (a - b).abs() <= ROW_TOL)
}

#[derive(Clone, Copy)]
struct Entry {
    label: Action,
    post: usize,
    lo: f64,
    hi: f64,
}

struct Cluster {
    members: Vec<usize>,
    common: Vec<Entry>,
}

impl Cluster {
    fn seed(mdp: &Mdp, s: usize) -> Self {
        let common = mdp
            .actions(s)
            .map(|a| Entry { label: *mdp.label(a), post: mdp.post(a), lo: mdp.cost(a), hi: mdp.cost(a) })
            .collect();
        Cluster { members: vec![s], common }
    }

    /// Common actions after admitting `s`, or `None` if `s` does not fit.
    fn admit(&self, mdp: &Mdp, s: usize, slack: f64) -> Option<Vec<Entry>> {
        let ids = mdp.actions(s);
        let labels = mdp.labels(s);
        let mut out = Vec::new();
        let (mut i, mut k) = (0, 0);
        while i < self.common.len() && k < labels.len() {
            let e = &self.common[i];
            match e.label.cmp(&labels[k]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => k += 1,
                std::cmp::Ordering::Equal => {
                    let a = ids.start + k;
                    let c = mdp.cost(a);
                    let (lo, hi) = (e.lo.min(c), e.hi.max(c));
                    if hi - lo > slack || !same_row(mdp, e.post, mdp.post(a)) {
                        return None;
                    }
                    out.push(Entry { lo, hi, ..*e });
                    i += 1;
                    k += 1;
                }
            }
        }
        (!out.is_empty()).then_some(out)
    }
}

/// Greedy first-fit clustering of `states` in the given order.
fn greedy(mdp: &Mdp, states: &[usize], slack: f64) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = Vec::new();
    for &s in states {
        let mut placed = false;
        for c in clusters.iter_mut() {
            if let Some(common) = c.admit(mdp, s, slack) {
                c.members.push(s);
                c.common = common;
                placed = true;
                break;
            }
        }
        if !placed {
            clusters.push(Cluster::seed(mdp, s));
        }
    }
    clusters
}

fn assemble(method: AggregationMethod, n: usize, clusters: Vec<Cluster>, diagnostics: Vec<String>) -> Partition {
    let mut clusters = clusters;
    clusters.sort_by_key(|c| c.members[0]);
    let mut meta_of = vec![0; n];
    for (i, c) in clusters.iter().enumerate() {
        for &s in &c.members {
            meta_of[s] = i;
        }
    }
    Partition {
        method,
        common: clusters.iter().map(|c| c.common.iter().map(|e| e.label).collect()).collect(),
        members: clusters.into_iter().map(|c| c.members).collect(),
        meta_of,
        diagnostics,
    }
}

/// Groups states by total-job key, then splits each group first-fit so that
/// every common action has identical successors and costs within `gamma`.
pub fn build_total_job_partition(instance: &MdpInstance, gamma: f64) -> Result<Partition> {
    if !(gamma >= 0.0) {
        return Err(Error::Config(format!("gamma must be nonnegative, got {gamma}")));
    }
    let mdp = &instance.mdp;
    let mut group_of: HashMap<TotalJobKey, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, s) in instance.space.states().enumerate() {
        let g = *group_of.entry(total_job_key(&s)).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let mut clusters = Vec::new();
    let mut split = 0;
    for g in &groups {
        let parts = greedy(mdp, g, gamma);
        split += (parts.len() > 1) as usize;
        clusters.extend(parts);
    }
    let mut diagnostics = Vec::new();
    if split > 0 {
        diagnostics
            .push(format!("{split} of {} key groups were split to keep common actions equivalent", groups.len()));
    }
    Ok(assemble(AggregationMethod::TotalJob { gamma }, mdp.num_states(), clusters, diagnostics))
}

/// Greedy clustering in state order: a state joins the first meta-state in
/// which every shared action has the same successor row and costs within
/// `epsilon * (c_max - c_min + 1)` of every member.
pub fn build_epsilon_partition(mdp: &Mdp, epsilon: f64) -> Result<Partition> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let (lo, hi) = (0..mdp.num_actions())
        .map(|a| mdp.cost(a))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), c| (l.min(c), h.max(c)));
    let slack = epsilon * (hi - lo + 1.0);
    let states: Vec<usize> = (0..mdp.num_states()).collect();
    let clusters = greedy(mdp, &states, slack);
    Ok(assemble(AggregationMethod::Epsilon { epsilon }, mdp.num_states(), clusters, Vec::new()))
}

/// Aggregate MDP: costs and transition mass averaged uniformly over members.
///
/// Meta-state actions whose members land on the same multiset of successor
/// rows share one aggregate successor row.
pub fn build_aggregate_mdp(mdp: &Mdp, partition: &Partition) -> Result<Mdp> {
    partition.validate(mdp)?;
    let n_meta = partition.len();
    let mut action_offsets = vec![0];
    let mut labels = Vec::with_capacity(partition.num_actions());
    let mut costs = Vec::with_capacity(partition.num_actions());
    let mut posts = Vec::with_capacity(partition.num_actions());
    let mut post_ids: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut kernel_offsets = vec![0];
    let mut kernel_targets = Vec::new();
    let mut kernel_probs = Vec::new();
    let mut acc = vec![0.0; n_meta];
    let mut touched = Vec::new();
    let mut key = Vec::new();
    for (i, members) in partition.members.iter().enumerate() {
        let w = 1.0 / members.len() as f64;
        for d in &partition.common[i] {
            key.clear();
            let mut cost = 0.0;
            for &s in members {
                let a = mdp.find_action(s, d).expect("validated partition");
                cost += mdp.cost(a);
                key.push(mdp.post(a) as u32);
            }
            key.sort_unstable();
            let next = post_ids.len() as u32;
            let id = *post_ids.entry(key.clone()).or_insert(next);
            if id == next {
                for &p in &key {
                    let (t, q) = mdp.successors(p as usize);
                    for (&t, &q) in t.iter().zip(q) {
                        let m = partition.meta_of[t as usize];
                        if acc[m] == 0.0 {
                            touched.push(m);
                        }
                        acc[m] += w * q;
                    }
                }
                touched.sort_unstable();
                for &m in &touched {
                    kernel_targets.push(m as u32);
                    kernel_probs.push(acc[m]);
                    acc[m] = 0.0;
                }
                touched.clear();
                kernel_offsets.push(kernel_targets.len());
            }
            labels.push(*d);
            costs.push(cost * w);
            posts.push(id);
        }
        action_offsets.push(labels.len());
    }
    Mdp::from_parts(
        action_offsets,
        labels,
        costs,
        posts,
        kernel_offsets,
        kernel_targets,
        kernel_probs,
        partition.meta_of[mdp.reference()],
    )
}

/// Gives every state the action its meta-state takes.
pub fn lift_policy(aggregate: &Policy, partition: &Partition) -> Result<Policy> {
    if aggregate.len() != partition.len() {
        return Err(Error::Contract(format!(
            "aggregate policy covers {} meta-states, partition has {}",
            aggregate.len(),
            partition.len()
        )));
    }
    Ok(Policy { actions: partition.meta_of.iter().map(|&m| aggregate.actions[m]).collect() })
}

/// Common actions whose cost or successor row differs between two members
/// of the same meta-state.
pub fn exactness_violations(mdp: &Mdp, partition: &Partition) -> usize {
    let mut bad = 0;
    for (i, members) in partition.members.iter().enumerate() {
        let first = members[0];
        for d in &partition.common[i] {
            let Some(a0) = mdp.find_action(first, d) else {
                bad += 1;
                continue;
            };
            for &s in &members[1..] {
                match mdp.find_action(s, d) {
                    Some(a) if mdp.cost(a) == mdp.cost(a0) && same_row(mdp, mdp.post(a), mdp.post(a0)) => {}
                    _ => bad += 1,
                }
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Costs, Grid, LoadKind, ModelConfig, SegmentKind};
    use crate::solve::{policy_gain, relative_value_iteration, RviOptions};
    use crate::space::build_instance;

    fn instance(k: usize, a: u32, m: u32) -> MdpInstance {
        let cfg =
            ModelConfig::with_profiles(m, k, a, LoadKind::EL, SegmentKind::ES, Costs::new(200.0, 150.0, 100.0, 50.0))
                .unwrap();
        build_instance(&cfg, false).unwrap()
    }

    fn state(x: [u32; 6], a: [u32; 6]) -> State {
        State::new(Grid::from_rows(&x[..3], &x[3..]).unwrap(), Grid::from_rows(&a[..3], &a[3..]).unwrap())
    }

    #[test]
    fn example_pair_shares_a_key() {
        let s = state([1, 2, 0, 0, 2, 0], [1, 0, 0, 2, 1, 1]);
        let t = state([2, 2, 0, 0, 1, 0], [0, 0, 0, 2, 2, 1]);
        assert_eq!(total_job_key(&s), total_job_key(&t));
        assert_eq!(&total_job_key(&s)[..3], &[2, 2, 0]);
        assert_eq!(&total_job_key(&s)[MAX_HORIZON..MAX_HORIZON + 3], &[2, 3, 1]);
        assert_eq!(total_job_key(&State::empty()), [0; 2 * MAX_HORIZON]);
    }

    #[test]
    fn singleton_aggregate_is_the_original() {
        let inst = instance(2, 1, 2);
        let p = Partition::singletons(&inst.mdp);
        let agg = build_aggregate_mdp(&inst.mdp, &p).unwrap();
        assert_eq!(agg.num_states(), inst.num_states());
        assert_eq!(agg.num_actions(), inst.num_actions());
        for a in 0..agg.num_actions() {
            assert_eq!(agg.cost(a), inst.mdp.cost(a));
            assert_eq!(agg.transitions(a), inst.mdp.transitions(a));
        }
    }

    #[test]
    fn total_job_partition_is_exact_for_two_periods() {
        let inst = instance(2, 2, 2);
        let p = build_total_job_partition(&inst, 0.0).unwrap();
        p.validate(&inst.mdp).unwrap();
        assert_eq!(exactness_violations(&inst.mdp, &p), 0);
        assert!(p.diagnostics.is_empty());
        // Keys are (x10 + a10, a20, a11, a21) with x10 + a10 in 0..=6.
        assert_eq!(p.len(), 7 * 27);
        let agg = build_aggregate_mdp(&inst.mdp, &p).unwrap();
        let opt = relative_value_iteration(&inst.mdp, &RviOptions::default()).unwrap();
        let sol = relative_value_iteration(&agg, &RviOptions::default()).unwrap();
        let lifted = lift_policy(&sol.policy, &p).unwrap();
        let g = policy_gain(&inst.mdp, &lifted).unwrap();
        assert!((g - opt.gain).abs() <= 1e-7 * opt.gain.max(1.0), "{g} vs {}", opt.gain);
    }

    #[test]
    fn epsilon_partition_is_monotone() {
        let inst = instance(2, 1, 2);
        let fine = build_epsilon_partition(&inst.mdp, 0.0).unwrap();
        let coarse = build_epsilon_partition(&inst.mdp, 1.0).unwrap();
        fine.validate(&inst.mdp).unwrap();
        coarse.validate(&inst.mdp).unwrap();
        assert!(coarse.len() <= fine.len());
        assert!(build_epsilon_partition(&inst.mdp, 1.5).is_err());
    }

    #[test]
    fn aggregate_rows_are_stochastic() {
        let inst = instance(3, 1, 2);
        for p in [build_total_job_partition(&inst, 0.0).unwrap(), build_epsilon_partition(&inst.mdp, 0.5).unwrap()] {
            let agg = build_aggregate_mdp(&inst.mdp, &p).unwrap();
            for post in 0..agg.num_posts() {
                let sum: f64 = agg.successors(post).1.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
            let sol = relative_value_iteration(&agg, &RviOptions::default()).unwrap();
            let lifted = lift_policy(&sol.policy, &p).unwrap();
            assert!(lifted.resolve(&inst.mdp).is_ok());
        }
    }

    #[test]
    fn dump_lists_every_meta_state() {
        let inst = instance(2, 1, 1);
        let p = build_total_job_partition(&inst, 0.0).unwrap();
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# admcap partition v1\npartition method=total-job gamma=0"));
        assert_eq!(text.lines().filter(|l| l.starts_with("meta ")).count(), p.len());
    }
}
