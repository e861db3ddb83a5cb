//! Average-cost MDP for joint admission control and capacity allocation in a
//! two-class queueing system: model, state space, action elimination, exact
//! solvers, state aggregation, heuristic policies and simulation.

// `!(x < y)` is meant to catch NaN; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod aggregation;
pub mod elimination;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod lp;
pub mod model;
pub mod solve;
pub mod space;

pub use error::{Error, Result};
