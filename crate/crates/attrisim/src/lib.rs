//! Offline simulator and evaluation toolkit for attribution-aware bidding
//! in display advertising.
//!
//! The crate covers the full offline loop: load or synthesize an
//! impression log, fit an exponential-decay attribution model, train
//! conversion predictors under different click-labeling schemes, replay
//! logged auctions under last-click / first-click / attribution-aware
//! bidding policies, and score them with the attribution-aware Expected
//! Utility metric family with bootstrap significance.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --example synthetic_log
//! cargo run --example fit_attribution
//! cargo run --example labeling_schemes
//! cargo run --example train_conversion_model
//! cargo run --example bid_profiles
//! cargo run --example utility_metrics
//! cargo run --example end_to_end_evaluation
//! ```
//!
//! The same pipeline is scriptable through the thin `attrisim` binary
//! (`synth`, `fit-attribution`, `evaluate` subcommands).

pub mod attribution;
pub mod bidding;
pub mod conversion;
pub mod data;
pub mod error;
pub mod harness;
pub mod labeling;
pub mod metrics;

pub use error::{Error, Result};
