//! Unbiased extremum seeking.
//!
//! Model-free controllers that drive the input of an unknown static map to
//! its minimiser using sinusoidal dithers whose amplitude decays while the
//! feedback gain grows. Besides the closed loop itself the crate carries the
//! machinery to check its convergence claims numerically: the loop in
//! scaled error coordinates, its Lie-bracket averaged system, a fixed-step
//! RK4 integrator, envelope-based rate fits and Lyapunov traces.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the precision used by the tooling.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod averaging;
pub mod controllers;
pub mod error;
pub mod maps;
pub mod scalar;
pub mod schedules;
pub mod sim;

pub use analysis::{RateFit, RateModel};
pub use averaging::{ProbeConfig, ProbeRow};
pub use controllers::{EsParams, EsState, TransformedState};
pub use error::{Error, Result};
pub use maps::{CostMap, PowerBounds};
pub use scalar::Scalar;
pub use schedules::{Schedule, ScheduleKind};
pub use sim::{Diverged, Lemma1Params, OdeSystem, Solution, Trajectory};

pub type CostMap64 = CostMap<f64>;
pub type PowerBounds64 = PowerBounds<f64>;
pub type Schedule64 = Schedule<f64>;
pub type EsParams64 = EsParams<f64>;
pub type EsState64 = EsState<f64>;
pub type TransformedState64 = TransformedState<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type Solution64 = Solution<f64>;
pub type Lemma1Params64 = Lemma1Params<f64>;
pub type ProbeConfig64 = ProbeConfig<f64>;
pub type ProbeRow64 = ProbeRow<f64>;
pub type RateFit64 = RateFit<f64>;

pub type CostMap32 = CostMap<f32>;
pub type Schedule32 = Schedule<f32>;
pub type EsParams32 = EsParams<f32>;
pub type Trajectory32 = Trajectory<f32>;
