//! Control data: LTI plant sampling, LQR and bang-bang rollouts, the
//! second-order audio filter and diffusion-based setpoint following.

pub mod dataset;
pub mod filter;
pub mod lqr;
pub mod rollout;
pub mod sim;
pub mod system;

pub use dataset::{build_control_dataset, build_control_traces, ControlConfig};
pub use filter::gameboy_filter;
pub use lqr::{solve_care, LqrSolution};
pub use rollout::{diffusion_control_rollout, DemoConfig, DemoOutcome};
pub use sim::{bang_bang_rollout, lqr_rollout, ControlTrace, ControllerKind};
pub use system::{sample_system, StateSpace};
