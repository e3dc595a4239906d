//! Ancilla-assisted circuit simulation of Markovian collective decay in qubit chains.

pub mod channels;
pub mod circuit;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod mitigation;
pub mod mps;
pub mod params;
pub mod reference;
pub mod shots;

pub use circuit::{Circuit, Gate, GateKind, Instruction, LayoutPlan, Variant};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, C64};
pub use params::{basis_change_p, decay_probability, derived_rates, rotation_angle, ChainParams, DerivedRates};
