//! Dynamic leakage analysis for probabilistic Boolean programs.

pub mod analysis;
pub mod bits;
pub mod cnf;
pub mod corpus;
pub mod counter;
pub mod leakage;
pub mod lower;
pub mod prob;
pub mod rmc;
pub mod semantics;
pub mod syntax;

pub use bits::Bits;
pub use cnf::{CircuitFormula, CnfQuery};
pub use leakage::{LeakageError, LeakageReport, Measure};
pub use prob::Rational;
pub use semantics::{JointDistribution, Prior, RunLimits};
pub use syntax::{parse_program, Program};
