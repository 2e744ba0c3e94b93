//! Beyond worst-case synthesis for multidimensional mean-payoff MDPs.
//!
//! Decision procedures are exact over rationals. Strategies are stochastic
//! Moore machines (or a procedural infinite-memory strategy) and can be
//! verified exactly or simulated.

pub mod chain;
pub mod decomposition;
pub mod error;
pub mod fixtures;
pub mod games;
pub mod io;
pub mod lp;
pub mod machine;
pub mod model;
pub mod procedural;
pub mod rational;
pub mod sim;
pub mod synthesis;
pub mod systems;

pub use error::{Error, Result};
pub use fixtures::{fixture, fixture_by_name, Fixture};
pub use model::{normalize, validate, Mdp, Mode, Owner, ThresholdQuery};
pub use rational::Rational;
