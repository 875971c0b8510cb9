//! Token-centric semantic link simulator.
//!
//! A synthetic Markov token source is classified by a linear head; tokens
//! travel over a 16QAM link with per-group LDPC protection chosen by a
//! utility-weighted scheduler, and the receiver gates low-confidence tokens
//! to erasures which a completion model fills back in.

pub mod calibration;
pub mod completion;
pub mod error;
pub mod fec;
pub mod gating;
pub mod harness;
pub mod link;
pub mod metrics;
pub mod phy;
pub mod rng;
pub mod source;
pub mod tokenlink;
pub mod uep;
pub mod utility;

pub use calibration::{calibrate, CalibrationConfig, CalibrationResult, Transcript};
pub use completion::{Completer, CompletionKind, CompletionModel};
pub use error::{Error, Result};
pub use fec::{CodeRate, LdpcCode, PolicySet, ProtectionPolicy};
pub use gating::{bayes_optimal_action, gate, Action, BayesGateSpec, GatedSequence, GatingPolicy};
pub use harness::{prepare, run_prepared, run_sweep, run_trial, Artifacts, RunConfig, RunReport, Variant, World};
pub use link::{transmit, LinkParams, LinkPlan};
pub use metrics::{ter, war, Aggregate, Summary, TrialRecord};
pub use phy::{ChannelKind, ChannelRealization, ChannelSpec};
pub use source::{EmbeddingTable, LabeledSample, SourceModel, TaskHead, Token, TokenSequence, TransitionKernel};
pub use tokenlink::PosteriorSequence;
pub use uep::{ErrorCurves, ProtectionProfile};
pub use utility::{UtilityGrouping, UtilityMode};
