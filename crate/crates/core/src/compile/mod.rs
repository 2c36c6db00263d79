//! Knowledge compilation of abductive formulas and weighted model counting.
//!
//! Formulas are compiled into reduced ordered binary decision diagrams with
//! the fixed variable order `a1 < a2 < ... < an`. The diagram is flattened
//! into a [`WmcGraph`] tape that evaluates the weighted model count and its
//! exact gradient for any vector of atom probabilities.

mod bdd;
mod cache;
mod wmc;

pub use bdd::{compile, CompiledDiagram, DiagramError, DiagramNode, NodeRef};
pub use cache::{policy_fingerprint, CompilationCache, CompiledLabel};
pub use wmc::{semantic_loss, wmc, SemanticLoss, WmcGraph, LOG_CLAMP};
