//! Spectral perturbation toolkit for direct sums of matrix algebras.
//!
//! Operators live in `⊕ M(n_k)`, optionally with the last summand repeated
//! forever. Norms are weighted aggregates of unitarily invariant base norms.
//! The main entry points are [`perturb::disconnect`], which builds a small
//! perturbation that splits the spectrum, and [`norms::c_phi`], the constant
//! that decides whether such perturbations exist.

pub mod error;
pub mod linalg;
pub mod algebra;
pub mod norms;
pub mod spectral;
pub mod perturb;
pub mod riesz;
pub mod uppertri;
pub mod cfun;
pub mod sampling;

pub use algebra::{AlgebraSpec, BlockOperator, IdealKind, IdealSpec, OperatorFile, Projection, Summand, Tail};
pub use cfun::{CompactRealSet, PLFunction};
pub use error::{Error, Result};
pub use linalg::{CMat, C64};
pub use norms::{Aggregation, BaseNorm, NormSpec, TailWeights};
pub use perturb::{Counterexample, PerturbationCertificate, Route};
pub use riesz::{Contour, ContourKind, WeakReduction};
pub use spectral::{Grid, PseudospectrumGrid, SpectrumReport};
pub use uppertri::UTBlock;
