//! Online learning of contract bundles for buyers whose preferences are
//! ordered by a one-dimensional private type.

pub mod buyer;
pub mod config;
pub mod contract;
pub mod distribution;
pub mod error;
pub mod learner;
pub mod oracle;
pub mod rng;
pub mod sim;

pub use buyer::BuyerModel;
pub use config::{SimulationConfig, SweepConfig};
pub use contract::{make_grid, Bundle, Choice, ContractGrid, Revenue};
pub use distribution::{DistSpec, TypeDistribution};
pub use error::{Error, Result};
pub use sim::{replicate, run_episode, slope_fit};
