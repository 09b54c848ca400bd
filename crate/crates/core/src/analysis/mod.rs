//! Numerical evaluation of the convergence bound and its supporting lemmas.

mod bound;
mod lemma;

pub use bound::{quantizer_j, theorem1_rhs, BoundFile, BoundParams, QuantProbe, Sensitivity};
pub use lemma::{
    lemma1_check, lemma1_sum, lemma2_check, EmpiricalConstants, Lemma2Entry, Lemma2Params,
    Lemma2Report,
};
