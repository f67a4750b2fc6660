//! Cross-lingual first-order meta-learning.
//!
//! The crate provides a small reverse-mode autodiff engine ([`tensor`]),
//! desk-scale models ([`models`]), the XG-Reptile episode and its baseline
//! training procedures ([`meta`]), numerical checks of the inner-loop
//! Taylor expansions ([`grad_analysis`]), synthetic multilingual parsing
//! tasks ([`tasks`]), evaluation and representation analysis ([`eval`]),
//! and the experiment harness behind the command-line tool ([`harness`]).

pub mod error;
pub mod eval;
pub mod grad_analysis;
pub mod gradcheck;
pub mod harness;
pub mod meta;
pub mod models;
pub mod params;
pub mod rng;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
pub use params::{param_axpy, Layout, ParamVector};
