//! Problem parameters, state and action types, the truncated-Poisson arrival
//! law, the per-period cost and the deterministic part of the dynamics.
//!
//! Job counts live on a `(class, due-offset)` grid. Class `High` is index 1 in
//! the usual notation and `Low` is index 2; due-offset `j` counts the periods
//! until the requested service time (`0` means "due now").

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest customer order horizon the compact grid can hold.
pub const MAX_HORIZON: usize = 6;
const CELLS: usize = 2 * MAX_HORIZON;

/// Tolerance used when checking that probability vectors sum to one.
pub const PROBABILITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    High,
    Low,
}

impl Class {
    pub const ALL: [Class; 2] = [Class::High, Class::Low];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Class::High => 0,
            Class::Low => 1,
        }
    }
}

/// Job counts indexed by `(class, due-offset)`.
///
/// Cells beyond the model horizon are always zero, so the derived ordering is
/// the lexicographic order over `(class, offset)`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Grid([u8; CELLS]);

impl Grid {
    pub fn zero() -> Self {
        Grid([0; CELLS])
    }

    /// Builds a grid from the high- and low-priority rows.
    pub fn from_rows(high: &[u32], low: &[u32]) -> Result<Self> {
        if high.len() != low.len() || high.len() > MAX_HORIZON {
            return Err(Error::Domain(format!(
                "grid rows must have equal length <= {MAX_HORIZON} (got {} and {})",
                high.len(),
                low.len()
            )));
        }
        let mut g = Grid::zero();
        for (class, row) in [(Class::High, high), (Class::Low, low)] {
            for (j, &v) in row.iter().enumerate() {
                if v > u8::MAX as u32 {
                    return Err(Error::Domain(format!("count {v} exceeds {}", u8::MAX)));
                }
                g.set(class, j, v);
            }
        }
        Ok(g)
    }

    /// Parses the flat layout used in the text dumps and the examples:
    /// `x_{1,0..K-1}` followed by `x_{2,0..K-1}`.
    pub fn from_flat(values: &[u32]) -> Result<Self> {
        if !values.len().is_multiple_of(2) {
            return Err(Error::Domain("flat grid needs an even number of cells".into()));
        }
        let k = values.len() / 2;
        Grid::from_rows(&values[..k], &values[k..])
    }

    #[inline]
    fn cell(class: Class, j: usize) -> usize {
        debug_assert!(j < MAX_HORIZON);
        class.index() * MAX_HORIZON + j
    }

    #[inline]
    pub fn get(&self, class: Class, j: usize) -> u32 {
        self.0[Self::cell(class, j)] as u32
    }

    #[inline]
    pub fn set(&mut self, class: Class, j: usize, v: u32) {
        debug_assert!(v <= u8::MAX as u32);
        self.0[Self::cell(class, j)] = v as u8;
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&v| v as u32).sum()
    }

    /// Flat `[class 1 row, class 2 row]` view over the first `k` offsets.
    pub fn to_flat(&self, k: usize) -> Vec<u32> {
        Class::ALL.iter().flat_map(|&c| (0..k).map(move |j| self.get(c, j))).collect()
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = (0..MAX_HORIZON)
            .rev()
            .find(|&j| self.get(Class::High, j) != 0 || self.get(Class::Low, j) != 0)
            .map_or(1, |j| j + 1);
        write!(f, "{:?}", self.to_flat(k))
    }
}

/// System state: processing queues `x` and the current period's arrivals `a`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub x: Grid,
    pub a: Grid,
}

impl State {
    pub fn new(x: Grid, a: Grid) -> Self {
        State { x, a }
    }

    pub fn empty() -> Self {
        State::default()
    }

    /// `x_{1j} + a_{1j}`, or the same for class 2.
    #[inline]
    pub fn present(&self, class: Class, j: usize) -> u32 {
        self.x.get(class, j) + self.a.get(class, j)
    }

    /// All jobs (both classes, queued or arriving) due at offset `j`.
    #[inline]
    pub fn due_total(&self, j: usize) -> u32 {
        self.present(Class::High, j) + self.present(Class::Low, j)
    }
}

/// Admission/service decision: `r_j` low-priority arrivals rejected per offset and
/// `y_{ij}` jobs served this period.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub r: [u8; MAX_HORIZON],
    pub y: Grid,
}

impl Action {
    #[inline]
    pub fn rejected(&self, j: usize) -> u32 {
        self.r[j] as u32
    }

    #[inline]
    pub fn served(&self, class: Class, j: usize) -> u32 {
        self.y.get(class, j)
    }

    pub fn total_rejected(&self) -> u32 {
        self.r.iter().map(|&v| v as u32).sum()
    }

    pub fn total_served(&self) -> u32 {
        self.y.total()
    }

    /// Jobs served before their due period (offsets `1..K`).
    pub fn early_served(&self, k: usize) -> u32 {
        (1..k).map(|j| self.served(Class::High, j) + self.served(Class::Low, j)).sum()
    }

    pub fn due_now_served(&self) -> u32 {
        self.served(Class::High, 0) + self.served(Class::Low, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    /// `c_o`, per job served beyond capacity.
    pub overtime: f64,
    /// `c_r`, per rejected low-priority request.
    pub rejection: f64,
    /// `c_e^1`, per period of earliness for a high-priority job.
    pub early_high: f64,
    /// `c_e^2`, per period of earliness for a low-priority job.
    pub early_low: f64,
}

impl Costs {
    pub fn new(overtime: f64, rejection: f64, early_high: f64, early_low: f64) -> Self {
        Costs { overtime, rejection, early_high, early_low }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Costs::new(self.overtime * factor, self.rejection * factor, self.early_high * factor, self.early_low * factor)
    }

    fn early(&self, class: Class) -> f64 {
        match class {
            Class::High => self.early_high,
            Class::Low => self.early_low,
        }
    }
}

/// How requests spread over the due offsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LoadKind {
    /// Equal load.
    EL,
    /// Front-loaded: near-term requests are more likely.
    FL,
    /// Back-loaded: far-term requests are more likely.
    BL,
}

/// Priority mix of arriving customers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    /// Equal segmentation.
    ES,
    /// Mostly high-priority.
    HS,
    /// Mostly low-priority.
    LS,
}

impl FromStr for LoadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EL" => Ok(LoadKind::EL),
            "FL" => Ok(LoadKind::FL),
            "BL" => Ok(LoadKind::BL),
            other => Err(Error::Config(format!("unknown load profile `{other}` (expected EL, FL or BL)"))),
        }
    }
}

impl FromStr for SegmentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ES" => Ok(SegmentKind::ES),
            "HS" => Ok(SegmentKind::HS),
            "LS" => Ok(SegmentKind::LS),
            other => Err(Error::Config(format!("unknown segmentation profile `{other}` (expected ES, HS or LS)"))),
        }
    }
}

impl fmt::Display for LoadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Request distribution over due offsets `0..k`.
pub fn load_profile(kind: LoadKind, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::Config(format!("horizon must be at least 2, got {k}")));
    }
    let squares: f64 = (1..=k).map(|m| (m * m) as f64).sum();
    let v = (0..k)
        .map(|j| match kind {
            LoadKind::EL => 1.0 / k as f64,
            LoadKind::FL => ((k - j) * (k - j)) as f64 / squares,
            LoadKind::BL => ((j + 1) * (j + 1)) as f64 / squares,
        })
        .collect();
    Ok(v)
}

/// `(q1, q2)` for a segmentation profile.
pub fn segmentation_profile(kind: SegmentKind) -> [f64; 2] {
    match kind {
        SegmentKind::ES => [0.5, 0.5],
        SegmentKind::HS => [0.8, 0.2],
        SegmentKind::LS => [0.2, 0.8],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `M`: jobs that can be served per period without overtime.
    pub capacity: u32,
    /// `K`: customer order horizon.
    pub horizon: usize,
    /// `A`: arrival truncation per (class, offset) cell.
    pub max_arrivals: u32,
    /// `lambda`: overall arrival rate per period.
    pub arrival_rate: f64,
    /// `(q1, q2)`.
    pub segmentation: [f64; 2],
    /// `v_0..v_{K-1}`.
    pub load: Vec<f64>,
    pub costs: Costs,
}

impl ModelConfig {
    pub fn new(
        capacity: u32,
        horizon: usize,
        max_arrivals: u32,
        arrival_rate: f64,
        segmentation: [f64; 2],
        load: Vec<f64>,
        costs: Costs,
    ) -> Result<Self> {
        let cfg = ModelConfig { capacity, horizon, max_arrivals, arrival_rate, segmentation, load, costs };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Standard experiment configuration with `lambda = 0.5 A`.
    pub fn with_profiles(
        capacity: u32,
        horizon: usize,
        max_arrivals: u32,
        load: LoadKind,
        segmentation: SegmentKind,
        costs: Costs,
    ) -> Result<Self> {
        ModelConfig::new(
            capacity,
            horizon,
            max_arrivals,
            0.5 * max_arrivals as f64,
            segmentation_profile(segmentation),
            load_profile(load, horizon)?,
            costs,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.horizon;
        if !(2..=MAX_HORIZON).contains(&k) {
            return Err(Error::Config(format!("horizon K={k} outside 2..={MAX_HORIZON}")));
        }
        if self.capacity == 0 {
            return Err(Error::Config("capacity M must be positive".into()));
        }
        if self.max_arrivals == 0 {
            return Err(Error::Config("arrival truncation A must be at least 1".into()));
        }
        if 2 * (k as u32 - 1) * self.max_arrivals > u8::MAX as u32 {
            return Err(Error::Config(format!(
                "queue bound 2(K-1)A = {} exceeds the supported maximum {}",
                2 * (k as u32 - 1) * self.max_arrivals,
                u8::MAX
            )));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return Err(Error::Config(format!("arrival rate must be >= 0, got {}", self.arrival_rate)));
        }
        if self.segmentation.iter().any(|&q| !(0.0..=1.0).contains(&q))
            || (self.segmentation[0] + self.segmentation[1] - 1.0).abs() > PROBABILITY_TOL
        {
            return Err(Error::Config(format!("segmentation {:?} is not a probability vector", self.segmentation)));
        }
        if self.load.len() != k {
            return Err(Error::Config(format!("load profile has {} entries, expected K={k}", self.load.len())));
        }
        if self.load.iter().any(|&v| !(0.0..=1.0).contains(&v))
            || (self.load.iter().sum::<f64>() - 1.0).abs() > PROBABILITY_TOL
        {
            return Err(Error::Config(format!("load profile {:?} is not a probability vector", self.load)));
        }
        let c = &self.costs;
        if [c.overtime, c.rejection, c.early_high, c.early_low].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("costs must be finite and non-negative: {c:?}")));
        }
        Ok(())
    }

    pub fn with_costs(&self, costs: Costs) -> Self {
        ModelConfig { costs, ..self.clone() }
    }

    /// Number of `(class, offset)` cells, `2K`.
    pub fn cells(&self) -> usize {
        2 * self.horizon
    }
}

/// `lambda_{ij} = q_i v_j lambda`, indexed `[class][offset]`.
pub fn build_rates(config: &ModelConfig) -> [[f64; MAX_HORIZON]; 2] {
    let mut rates = [[0.0; MAX_HORIZON]; 2];
    for class in Class::ALL {
        for j in 0..config.horizon {
            rates[class.index()][j] = config.segmentation[class.index()] * config.load[j] * config.arrival_rate;
        }
    }
    rates
}

/// Poisson(rate) conditioned on `0..=max`. The `e^{-rate}` factor cancels.
pub fn truncated_poisson(rate: f64, max: u32) -> Vec<f64> {
    let mut terms = Vec::with_capacity(max as usize + 1);
    let mut t = 1.0;
    terms.push(t);
    for n in 1..=max {
        t *= rate / n as f64;
        terms.push(t);
    }
    let z: f64 = terms.iter().sum();
    terms.iter().map(|v| v / z).collect()
}

/// Probability of `n` arrivals in cell `(class, j)`.
pub fn arrival_pmf(class: Class, j: usize, n: u32, config: &ModelConfig) -> Result<f64> {
    if n > config.max_arrivals {
        return Err(Error::Domain(format!("arrival count {n} exceeds truncation A={}", config.max_arrivals)));
    }
    if j >= config.horizon {
        return Err(Error::Domain(format!("due offset {j} outside 0..{}", config.horizon)));
    }
    let rate = build_rates(config)[class.index()][j];
    Ok(truncated_poisson(rate, config.max_arrivals)[n as usize])
}

/// Per-cell arrival distributions, independent across cells.
///
/// Cell order is `(High, 0..K)` then `(Low, 0..K)`; the joint arrival index is
/// the mixed-radix number with the first cell most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalModel {
    horizon: usize,
    max_arrivals: u32,
    pmfs: Vec<Vec<f64>>,
}

impl ArrivalModel {
    pub fn truncated_poisson(config: &ModelConfig) -> Self {
        let rates = build_rates(config);
        let pmfs = Class::ALL
            .iter()
            .flat_map(|c| (0..config.horizon).map(move |j| (c.index(), j)))
            .map(|(c, j)| truncated_poisson(rates[c][j], config.max_arrivals))
            .collect();
        ArrivalModel { horizon: config.horizon, max_arrivals: config.max_arrivals, pmfs }
    }

    /// Arbitrary per-cell laws, e.g. for test fixtures. `pmfs` is in cell order.
    pub fn from_pmfs(horizon: usize, max_arrivals: u32, pmfs: Vec<Vec<f64>>) -> Result<Self> {
        if pmfs.len() != 2 * horizon {
            return Err(Error::Config(format!("expected {} cell pmfs, got {}", 2 * horizon, pmfs.len())));
        }
        for (c, p) in pmfs.iter().enumerate() {
            if p.len() != max_arrivals as usize + 1
                || p.iter().any(|&v| !(0.0..=1.0).contains(&v))
                || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12
            {
                return Err(Error::Config(format!("cell {c}: {p:?} is not a pmf on 0..={max_arrivals}")));
            }
        }
        Ok(ArrivalModel { horizon, max_arrivals, pmfs })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn max_arrivals(&self) -> u32 {
        self.max_arrivals
    }

    pub fn cell_pmf(&self, class: Class, j: usize) -> &[f64] {
        &self.pmfs[class.index() * self.horizon + j]
    }

    /// `(A+1)^{2K}`.
    pub fn num_vectors(&self) -> usize {
        (self.max_arrivals as usize + 1).pow(2 * self.horizon as u32)
    }

    pub fn probability(&self, counts: &Grid) -> f64 {
        let mut p = 1.0;
        for class in Class::ALL {
            for j in 0..self.horizon {
                let n = counts.get(class, j);
                if n > self.max_arrivals {
                    return 0.0;
                }
                p *= self.cell_pmf(class, j)[n as usize];
            }
        }
        p
    }

    /// Decodes a joint arrival index.
    pub fn vector(&self, mut index: usize) -> Grid {
        let base = self.max_arrivals as usize + 1;
        let mut g = Grid::zero();
        for c in (0..2 * self.horizon).rev() {
            let (class, j) = (Class::ALL[c / self.horizon], c % self.horizon);
            g.set(class, j, (index % base) as u32);
            index /= base;
        }
        g
    }

    pub fn index(&self, counts: &Grid) -> usize {
        let base = self.max_arrivals as usize + 1;
        let mut idx = 0;
        for class in Class::ALL {
            for j in 0..self.horizon {
                idx = idx * base + counts.get(class, j) as usize;
            }
        }
        idx
    }

    /// Joint probabilities in arrival-index order.
    pub fn joint_table(&self) -> Vec<f64> {
        let mut table = vec![1.0];
        for pmf in &self.pmfs {
            let mut next = Vec::with_capacity(table.len() * pmf.len());
            for &p in &table {
                next.extend(pmf.iter().map(|q| p * q));
            }
            table = next;
        }
        table
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrivalVector {
    pub counts: Grid,
    pub probability: f64,
}

/// Every arrival vector with its joint probability, in lexicographic order.
pub fn enumerate_arrival_vectors(config: &ModelConfig) -> Vec<ArrivalVector> {
    let law = ArrivalModel::truncated_poisson(config);
    law.joint_table()
        .into_iter()
        .enumerate()
        .map(|(i, probability)| ArrivalVector { counts: law.vector(i), probability })
        .collect()
}

/// Checks that `d` is an admissible decision in `s`.
pub fn check_action(s: &State, d: &Action, config: &ModelConfig) -> Result<()> {
    let k = config.horizon;
    let fail = |msg: String| Err(Error::Contract(format!("action {d:?} infeasible in state {s:?}: {msg}")));
    for j in k..MAX_HORIZON {
        if d.r[j] != 0 || d.served(Class::High, j) != 0 || d.served(Class::Low, j) != 0 {
            return fail(format!("nonzero entry at offset {j} >= K"));
        }
    }
    for j in 0..k {
        let r = d.rejected(j);
        if r > s.a.get(Class::Low, j) {
            return fail(format!("r_{j}={r} exceeds low-priority arrivals"));
        }
        let high_avail = s.present(Class::High, j);
        let low_avail = s.present(Class::Low, j) - r;
        let (yh, yl) = (d.served(Class::High, j), d.served(Class::Low, j));
        if j == 0 {
            if yh != high_avail || yl != low_avail {
                return fail("jobs due now must all be served".into());
            }
        } else if yh > high_avail || yl > low_avail {
            return fail(format!("serves more jobs than present at offset {j}"));
        }
    }
    let idle = config.capacity.saturating_sub(d.due_now_served());
    if d.early_served(k) > idle {
        return fail(format!("early service {} exceeds idle capacity {idle}", d.early_served(k)));
    }
    Ok(())
}

/// Immediate cost without the feasibility check.
#[inline]
pub(crate) fn cost_of(d: &Action, config: &ModelConfig) -> f64 {
    let c = &config.costs;
    let overtime = d.total_served().saturating_sub(config.capacity) as f64;
    let mut early = 0.0;
    for j in 1..config.horizon {
        for class in Class::ALL {
            early += j as f64 * c.early(class) * d.served(class, j) as f64;
        }
    }
    c.overtime * overtime + c.rejection * d.total_rejected() as f64 + early
}

/// Rejection, overtime and earliness cost of taking `d` in `s`.
pub fn immediate_cost(s: &State, d: &Action, config: &ModelConfig) -> Result<f64> {
    check_action(s, d, config)?;
    Ok(cost_of(d, config))
}

/// Queue contents at the start of the next period, before new arrivals.
///
/// Returns `None` when some count would go negative.
pub(crate) fn post_decision(s: &State, d: &Action, k: usize) -> Option<Grid> {
    let remaining = |class: Class, j: usize| -> Option<u32> {
        let mut v = s.present(class, j).checked_sub(d.served(class, j))?;
        if class == Class::Low {
            v = v.checked_sub(d.rejected(j))?;
        }
        Some(v)
    };
    let mut next = Grid::zero();
    // Low-priority jobs that waited a period are promoted when they become due.
    next.set(Class::High, 0, remaining(Class::High, 1)? + remaining(Class::Low, 1)?);
    for j in 1..k - 1 {
        next.set(Class::High, j, remaining(Class::High, j + 1)?);
        next.set(Class::Low, j, remaining(Class::Low, j + 1)?);
    }
    // Due-now cells must be emptied by the action.
    if remaining(Class::High, 0)? != 0 || remaining(Class::Low, 0)? != 0 {
        return None;
    }
    Some(next)
}

/// Next state for a given realisation of next-period arrivals.
pub fn apply_transition(s: &State, d: &Action, next_arrivals: &Grid, config: &ModelConfig) -> Result<State> {
    check_action(s, d, config)?;
    for class in Class::ALL {
        for j in 0..MAX_HORIZON {
            let n = next_arrivals.get(class, j);
            if (j >= config.horizon && n != 0) || n > config.max_arrivals {
                return Err(Error::Contract(format!("arrival vector {next_arrivals:?} outside the truncation")));
            }
        }
    }
    let x = post_decision(s, d, config.horizon)
        .ok_or_else(|| Error::Contract(format!("negative queue length applying {d:?} in {s:?}")))?;
    Ok(State::new(x, *next_arrivals))
}

/// `P(next | s, d)`: the arrival probability when the queue part matches the
/// deterministic successor, zero otherwise.
pub fn transition_probability(s: &State, d: &Action, next: &State, config: &ModelConfig) -> Result<f64> {
    check_action(s, d, config)?;
    let x = post_decision(s, d, config.horizon)
        .ok_or_else(|| Error::Contract(format!("negative queue length applying {d:?} in {s:?}")))?;
    if x != next.x {
        return Ok(0.0);
    }
    Ok(ArrivalModel::truncated_poisson(config).probability(&next.a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn costs() -> Costs {
        Costs::new(200.0, 150.0, 100.0, 50.0)
    }

    fn grid(v: &[u32]) -> Grid {
        Grid::from_flat(v).unwrap()
    }

    fn action(r: &[u8], y: &[u32]) -> Action {
        let mut a = Action { r: [0; MAX_HORIZON], y: grid(y) };
        a.r[..r.len()].copy_from_slice(r);
        a
    }

    /// K=3, M=3 instance of the worked transition example.
    fn example_config() -> ModelConfig {
        ModelConfig::with_profiles(3, 3, 2, LoadKind::EL, SegmentKind::ES, costs()).unwrap()
    }

    #[test]
    fn rates_equal_load_equal_segments() {
        let cfg = ModelConfig::new(2, 2, 1, 1.0, [0.5, 0.5], vec![0.5, 0.5], costs()).unwrap();
        let r = build_rates(&cfg);
        for c in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(r[c][j], 0.25, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn rates_zero_lambda() {
        let cfg = ModelConfig::new(2, 3, 1, 0.0, [0.5, 0.5], vec![1.0 / 3.0; 3], costs());
        // 3 * (1/3) rounds to 1 within tolerance
        let cfg = cfg.unwrap();
        assert!(build_rates(&cfg).iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn rates_front_loaded() {
        let cfg = ModelConfig::new(2, 3, 1, 1.4, [0.5, 0.5], load_profile(LoadKind::FL, 3).unwrap(), costs()).unwrap();
        let r = build_rates(&cfg);
        assert_abs_diff_eq!(r[0][0], 0.5 * 0.9, epsilon = 1e-12);
        let total: f64 = r.iter().flatten().sum();
        assert_abs_diff_eq!(total, 1.4, epsilon = 1e-12);
    }

    #[test]
    fn load_profiles() {
        let el = load_profile(LoadKind::EL, 3).unwrap();
        assert!(el.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let fl = load_profile(LoadKind::FL, 3).unwrap();
        for (v, e) in fl.iter().zip([9.0 / 14.0, 4.0 / 14.0, 1.0 / 14.0]) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-15);
        }
        let bl = load_profile(LoadKind::BL, 2).unwrap();
        assert_abs_diff_eq!(bl[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(bl[1], 0.8, epsilon = 1e-15);
        assert!(matches!(load_profile(LoadKind::EL, 1), Err(Error::Config(_))));
        assert!(matches!("XL".parse::<LoadKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn segmentation_profiles() {
        assert_eq!(segmentation_profile(SegmentKind::ES), [0.5, 0.5]);
        assert_eq!(segmentation_profile(SegmentKind::HS), [0.8, 0.2]);
        assert_eq!(segmentation_profile(SegmentKind::LS), [0.2, 0.8]);
        assert!(matches!("QS".parse::<SegmentKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn truncated_poisson_values() {
        assert_eq!(truncated_poisson(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
        let p = truncated_poisson(0.25, 1);
        assert_abs_diff_eq!(p[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.2, epsilon = 1e-15);
        let p = truncated_poisson(1.0, 2);
        for (v, e) in p.iter().zip([0.4, 0.4, 0.2]) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn arrival_pmf_domain() {
        let cfg = ModelConfig::new(2, 2, 1, 1.0, [0.5, 0.5], vec![0.5, 0.5], costs()).unwrap();
        assert_abs_diff_eq!(arrival_pmf(Class::Low, 1, 1, &cfg).unwrap(), 0.2, epsilon = 1e-15);
        assert!(matches!(arrival_pmf(Class::Low, 1, 2, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn arrival_vectors_count_and_mass() {
        for (k, expected) in [(2, 16), (3, 64)] {
            let cfg = ModelConfig::with_profiles(2, k, 1, LoadKind::FL, SegmentKind::HS, costs()).unwrap();
            let all = enumerate_arrival_vectors(&cfg);
            assert_eq!(all.len(), expected);
            let mass: f64 = all.iter().map(|v| v.probability).sum();
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
            assert_eq!(all[0].counts, Grid::zero());
            assert!(all[0].probability > 0.0);
            assert!(all.windows(2).all(|w| w[0].counts < w[1].counts));
        }
    }

    #[test]
    fn worked_transition_example() {
        let cfg = example_config();
        let s = State::new(grid(&[1, 2, 0, 0, 2, 0]), grid(&[1, 0, 0, 2, 1, 1]));
        let d = action(&[1, 0, 0], &[2, 0, 0, 1, 0, 0]);
        let arrivals = grid(&[0, 0, 1, 0, 2, 0]);
        let next = apply_transition(&s, &d, &arrivals, &cfg).unwrap();
        assert_eq!(next.x, grid(&[5, 0, 0, 0, 1, 0]));
        assert_eq!(next.a, arrivals);
        assert_abs_diff_eq!(immediate_cost(&s, &d, &cfg).unwrap(), 150.0);

        let wrong = State::new(grid(&[5, 0, 0, 0, 0, 0]), arrivals);
        assert_eq!(transition_probability(&s, &d, &wrong, &cfg).unwrap(), 0.0);
        let p = transition_probability(&s, &d, &next, &cfg).unwrap();
        let law = ArrivalModel::truncated_poisson(&cfg);
        assert_abs_diff_eq!(p, law.probability(&arrivals), epsilon = 1e-15);
    }

    #[test]
    fn empty_state_is_fixed_point() {
        let cfg = example_config();
        let s = State::empty();
        let d = Action::default();
        assert_eq!(immediate_cost(&s, &d, &cfg).unwrap(), 0.0);
        assert_eq!(apply_transition(&s, &d, &Grid::zero(), &cfg).unwrap(), s);
        let law = ArrivalModel::truncated_poisson(&cfg);
        let p0: f64 = (0..6).map(|c| law.cell_pmf(Class::ALL[c / 3], c % 3)[0]).product();
        assert_abs_diff_eq!(transition_probability(&s, &d, &s, &cfg).unwrap(), p0, epsilon = 1e-15);
    }

    #[test]
    fn overtime_cost() {
        let cfg = ModelConfig::with_profiles(1, 2, 1, LoadKind::EL, SegmentKind::ES, costs()).unwrap();
        let s = State::new(grid(&[2, 0, 0, 0]), Grid::zero());
        let d = action(&[0, 0], &[2, 0, 0, 0]);
        assert_abs_diff_eq!(immediate_cost(&s, &d, &cfg).unwrap(), 200.0);
    }

    #[test]
    fn promotion_of_low_priority_jobs() {
        let cfg = ModelConfig::with_profiles(1, 2, 1, LoadKind::EL, SegmentKind::ES, costs()).unwrap();
        let s = State::new(Grid::zero(), grid(&[0, 1, 0, 1]));
        let next = apply_transition(&s, &Action::default(), &Grid::zero(), &cfg).unwrap();
        assert_eq!(next.x, grid(&[2, 0, 0, 0]));
    }

    #[test]
    fn infeasible_actions_are_rejected() {
        let cfg = example_config();
        let s = State::new(grid(&[1, 2, 0, 0, 2, 0]), grid(&[1, 0, 0, 2, 1, 1]));
        // leaves a due-now job unserved
        let d = action(&[1, 0, 0], &[1, 0, 0, 1, 0, 0]);
        assert!(matches!(immediate_cost(&s, &d, &cfg), Err(Error::Contract(_))));
        // rejects more than arrived
        let d = action(&[3, 0, 0], &[2, 0, 0, 0, 0, 0]);
        assert!(matches!(immediate_cost(&s, &d, &cfg), Err(Error::Contract(_))));
        // early service while already at capacity
        let d = action(&[1, 0, 0], &[2, 1, 0, 1, 0, 0]);
        assert!(matches!(immediate_cost(&s, &d, &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::new(2, 2, 1, 1.0, [0.6, 0.5], vec![0.5, 0.5], costs()).is_err());
        assert!(ModelConfig::new(2, 2, 1, 1.0, [0.5, 0.5], vec![0.6, 0.5], costs()).is_err());
        assert!(ModelConfig::new(2, 2, 1, 1.0, [0.5, 0.5], vec![0.5, 0.5], Costs::new(-1.0, 0.0, 0.0, 0.0)).is_err());
        assert!(ModelConfig::new(0, 2, 1, 1.0, [0.5, 0.5], vec![0.5, 0.5], costs()).is_err());
    }
}
