//! Null distance and causality tools for Lorentzian coordinate patches.
//!
//! A [`Spacetime`] is a coordinate domain with a Lorentzian metric. Paired
//! with a [`TimeFunction`] it is discretized into a [`CausalGrid`], whose
//! shortest paths approximate the null distance. The remaining modules build
//! on that: curve-level checks in [`curve`], null charts and the optical
//! function in [`optical`], and map rigidity in [`isometry`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curve;
pub mod error;
pub mod grid;
pub mod isometry;
pub mod optical;
pub mod scene;
pub mod spacetime;
pub mod time;

pub use error::{Error, Result};
pub use grid::{BoxRegion, CausalGrid, StencilSpec};
pub use scene::Scene;
pub use spacetime::{Event, MetricForm, Spacetime, TangentVector, TimeSense};
pub use time::{coordinate_time, cubed_time, TimeFunction};
