//! The book under `book/` is the narrative companion to `fedspectrum`.
//! mdbook cannot run samples that depend on external crates, so each
//! chapter is included here as module documentation and `cargo test --doc`
//! executes every fenced Rust block. One module per chapter keeps test
//! failures attributable to the right file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/radio-environment.md")]
pub mod radio_environment {}

#[doc = include_str!("../../../book/src/recurrent-policies.md")]
pub mod recurrent_policies {}

#[doc = include_str!("../../../book/src/local-training.md")]
pub mod local_training {}

#[doc = include_str!("../../../book/src/federated-rounds.md")]
pub mod federated_rounds {}

#[doc = include_str!("../../../book/src/quantized-uploads.md")]
pub mod quantized_uploads {}

#[doc = include_str!("../../../book/src/client-selection.md")]
pub mod client_selection {}

#[doc = include_str!("../../../book/src/running-experiments.md")]
pub mod running_experiments {}
