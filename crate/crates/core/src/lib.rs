//! Hierarchical motion planning among moving obstacles.
//!
//! * [`dynenv`] models obstacles, predicts their motion and evaluates the
//!   dynamic distance field.
//! * [`devprm`] builds a visibility roadmap seeded with cone-boundary samples
//!   and extracts homotopy-distinct guidance paths.
//! * [`utfminco`] is the uniform, terminal-free piecewise-quintic trajectory
//!   class with its penalty costs, analytic gradients and L-BFGS driver.
//! * [`topomgr`] keeps a cost-sorted queue of spatial-temporally distinct
//!   trajectory branches and runs one incremental planning cycle.
//! * [`simharness`] closes the loop with simulated obstacles, a Kalman
//!   tracker and an ideal trajectory follower.

pub mod devprm;
pub mod dynenv;
pub mod fmt;
pub mod simharness;
pub mod topomgr;
pub mod utfminco;

pub type Vec3 = nalgebra::Vector3<f64>;

pub use dynenv::{DynamicObstacle, EnvSnapshot, PredictiveCone, Shape, WorldBox};
pub use utfminco::{CostSpec, DecisionVars, InitState, UtfTrajectory};
