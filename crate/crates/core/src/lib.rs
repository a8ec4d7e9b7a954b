//! Non-abelian geometric energy pumping in a driven tripod.
//!
//! A four-level tripod (three ground states, one excited state) is driven
//! quasi-periodically by two incommensurate tones. Its doubly degenerate
//! dark subspace carries a non-abelian Berry curvature whose Euler class
//! fixes the long-time energy transfer between the tones. With the
//! counterdiabatic term added, dark states stay dark exactly and the pumped
//! power is set by the curvature alone.

pub mod drive;
pub mod ensemble;
pub mod error;
pub mod evolution;
pub mod gauge;
pub mod geometry;
pub mod operator;
pub mod tripod;

pub use drive::{DriveProtocol, DriveSchedule, LinearPath, Phase, TorusPoint, Trajectory};
pub use error::{Error, Result};
pub use operator::{ComplexOperator, StateVector};
pub use tripod::{Couplings, InitialStateSpec, TripodModel};
