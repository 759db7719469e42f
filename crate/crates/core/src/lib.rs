pub mod expr;
pub mod grammar;
pub mod lattice;
pub mod seqspec;
pub mod simulator;
pub mod synthesizer;
pub mod verifier;
