//! Execution-driven simulation of an overdecomposed, message-driven
//! runtime on a modeled GPU cluster, with a real Jacobi3D proxy app.

pub mod device;
pub mod engine;
pub mod error;
pub mod fluid;
pub mod geom;
pub mod harness;
pub mod ids;
pub mod jacobi;
pub mod net;
pub mod oracle;
pub mod runtime;
pub mod scalar;
pub mod scenario;
pub mod time;

pub use error::{Result, SimError};
pub use scalar::Scalar;
pub use time::VirtualTime;
