//! Multiple imputation for incomplete clinical tables: missingness analysis,
//! chained-equation imputation, logistic regression with stepwise selection,
//! Rubin pooling and discrimination metrics.

pub mod data;
pub mod dist;
pub mod error;
pub mod eval;
pub mod flux;
pub mod glm;
pub mod mice;
pub mod plot;
pub mod pool;
pub mod synth;
pub mod util;

pub use error::{Error, Result};

// Runs the guide's snippets as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/flux.md")]
    mod flux {}
    #[doc = include_str!("../../../book/src/imputation.md")]
    mod imputation {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/pooling.md")]
    mod pooling {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/synth.md")]
    mod synth {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
