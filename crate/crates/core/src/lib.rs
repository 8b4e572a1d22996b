//! Dynamic epistemic logic with agent addition and deletion.
//!
//! Kripke models over transitive relations are updated by agent-update
//! frames through the sum-product update. On top of that sit a model checker
//! for the update languages, a rewriting compiler from update formulas to
//! plain doxastic formulas, and a tableau decision procedure for K4.

pub mod frames;
pub mod model;
pub mod proofkit;
pub mod reduction;
pub mod satsolver;
pub mod semantics;
pub mod syntax;
pub mod testkit;
pub mod update;
