//! Geometric PID tracking on SO(3) for a rigid body actuated by three internal rotors.
//!
//! * [`liealg`]: SO(3)/so(3) primitives.
//! * [`dynamics`]: rigid body with and without rotors, momentum map, connection.
//! * [`control`]: navigation function, error map, PID tracking law, gain certification
//!   and the Lyapunov diagnostics.
//! * [`integrate`]: fixed-step Lie-group integrators.
//! * [`scenario`]: reference generation, closed-loop runs and effort comparison.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod liealg;
pub mod scenario;

pub use nalgebra::{Matrix3, Vector3};

pub use control::{AgatController, ErrorState, Feasibility, GainSet, NavigationWeights};
pub use dynamics::{BodyState, InertiaParams, Momentum, StateDerivative};
pub use error::{Error, Result};
pub use integrate::{IntegratorConfig, Scheme, Trajectory};
pub use liealg::{InertiaMetric, RotationMatrix, SkewMatrix};
pub use scenario::{ReferenceProgram, RunMetrics, ScenarioConfig};
