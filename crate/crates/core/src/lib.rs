//! Interactive configuration of extended feature models over a
//! finite-domain constraint kernel.
//!
//! The pipeline is: [`model`] (parse a `.fm` text) → [`translate`] (compile
//! to a solver store) → [`consequences`] (valid domains) → [`session`]
//! (decisions, retraction, background recomputation).

pub mod consequences;
pub mod model;
pub mod session;
pub mod solver;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod translate;

pub use consequences::{Consequences, Method};
pub use model::{FeatureModel, ParseError};
pub use session::{Decision, Restriction, Session, SessionSnapshot};
pub use solver::{CancelToken, Domain, Solver};
pub use translate::{compile, CompiledModel};
