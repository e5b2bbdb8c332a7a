//! Shared fixtures for the benchmarks in `benches/`.

use lef_core::{build_model, ModelSpec, PsiModel};

pub fn hyperbolic3() -> PsiModel {
    build_model(&ModelSpec::hyperbolic(3)).expect("builtin model")
}

pub fn custom_fast() -> PsiModel {
    build_model(&ModelSpec::custom("r*exp(exp(r)-1-r)", 3)).expect("valid expression")
}
