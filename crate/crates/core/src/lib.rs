//! Radial solutions of the Lane–Emden–Fowler equation `-Δu = |u|^{p-1}u` on
//! rotationally symmetric Riemannian models, with the spectral and
//! functional diagnostics needed to classify them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod error;
pub mod functionals;
pub mod model;
pub mod psiexpr;
pub mod quad;
pub mod radialode;
pub mod spectrum;

pub use error::{LefError, Result};
pub use model::{build_model, ModelKind, ModelSpec, PsiModel};
