//! Learned decompilation of a small C subset.
//!
//! The pipeline pairs a bundled optimizing mini-compiler (`minicc`) with a
//! from-scratch attentional encoder-decoder (`nmt`). Assembly inputs are
//! canonicalized (`canonical`), translated into source templates, checked for
//! equivalence against the input via program dependence graphs (`pdg`), and
//! completed by inverting compiler constant transformations (`template`).
//! `driver` ties the pieces into the iterative retraining loop and `rules`
//! distills verified results into reusable translation patterns.

pub mod canonical;
pub mod driver;
pub mod lang;
pub mod minicc;
pub mod nmt;
pub mod pdg;
pub mod rules;
pub mod template;

/// Default single-precision translation model.
pub type Model = nmt::ModelOf<f32>;
/// Double-precision instantiation, used where finite-difference accuracy matters.
pub type ModelF64 = nmt::ModelOf<f64>;
