//! einlog: a compiler and runtime for tensorized logic programs.
//!
//! Programs are definite clauses plus two reserved body literals:
//! `tensor(Key, [Indices])` declares that a ground atom denotes an embedded
//! multi-dimensional array with named axes, and `operator(Name)` injects a
//! nonlinear function. A goal is compiled in three steps:
//!
//!   1. tabled proof search builds the explanation graph — for every goal
//!      reached, the disjunction of conjunctive bodies that hold in the
//!      least model ([`explain`]);
//!   2. the graph is lowered to tensor equations — disjunction becomes
//!      addition, conjunction becomes a generalized einsum whose output
//!      keeps the indices occurring exactly once ([`compile`]);
//!   3. the equations are evaluated bottom-up in SCC order, with Jacobi
//!      fixpoint iteration for cyclic components, and differentiated in
//!      reverse mode for training ([`eval`], [`train`]).
//!
//! The [`kg`] module adds knowledge-graph ingestion and MRR/HIT@k ranking
//! for link-prediction models written in the language.

pub mod compile;
pub mod error;
pub mod eval;
pub mod explain;
pub mod kg;
pub mod logic;
pub mod ops;
pub mod params;
pub mod parse;
pub mod session;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use logic::{Atom, Clause, Substitution, Term};
pub use parse::{parse_atom_str, parse_program, validate, SourceProgram};
pub use tensor::{DenseTensor, EinsumSpec};
