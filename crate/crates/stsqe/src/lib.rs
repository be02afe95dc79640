//! Quantifier-elimination decision procedures for structural subtyping
//! of non-recursive types: the first-order theory of term powers of a
//! finite relational base structure, together with the standalone
//! eliminators it is built from (set algebras with cardinality
//! constraints, finite direct powers, term algebras), each
//! cross-validated against brute-force oracles.

pub mod ba;
pub mod cli;
pub mod fv;
pub mod lang;
pub mod logic;
pub mod model;
pub mod oracle;
pub mod parse;
pub mod power;
pub mod term;

pub use cli::run;
