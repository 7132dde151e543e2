//! Accuracy-aware routing for heterogeneous model serving, evaluated in a
//! deterministic discrete-event simulator.
//!
//! Under long-context workloads, a wrong answer triggers a retry, so
//! routing quality shows up as user-visible delay. This crate measures that
//! delay as time-to-correct-answer (TTCA: summed attempt latencies until
//! the first correct response, right-censored at a retry cap) and provides
//! a routing policy that minimizes a cheap proxy for it: expected latency
//! divided by predicted success probability, with previously failed models
//! excluded on retries.
//!
//! Modules, in data-flow order:
//!
//! * [`features`] — bounded prompt sampling, character-class language
//!   detection, coarse token estimates.
//! * [`capability`] — per-model logistic regression predicting success
//!   probability from the coarse features.
//! * [`latency`] — expected-latency estimate from model speed, request
//!   size, and queued work.
//! * [`policy`] — the accuracy-aware selector plus load-aware,
//!   session-affinity, and round-robin baselines.
//! * [`workload`] — synthetic multi-language key-value lookup generator
//!   and the deterministic response oracle.
//! * [`accuracy`] — scenario tables mapping (model, language, length) to
//!   success probability.
//! * [`simulator`] — the discrete-event cluster simulation.
//! * [`metrics`] — TTCA aggregation, success curves, and reports.
//! * [`config`] — cluster configuration files.

pub mod accuracy;
pub mod capability;
pub mod config;
pub mod defaults;
pub mod features;
pub mod hash;
pub mod latency;
pub mod metrics;
pub mod policy;
pub mod simulator;
pub mod types;
pub mod workload;

pub use accuracy::{default_profile, load_accuracy_profile, AccuracyProfile};
pub use capability::{encode, fit, predict_q, CapabilityModel, FitOptions, TrainingExample};
pub use config::{load_cluster_config, ClusterConfig, RawClusterConfig};
pub use features::{classify_language, estimate_tokens, extract_features, sample_text};
pub use latency::estimate_latency;
pub use metrics::{compute_ttca, improvement_ratio, success_curve, TtcaSummary};
pub use policy::{
    laar_cost, select_laar, Candidate, PolicyKind, Router, RoutingContext, ScoredCandidate,
};
pub use simulator::{run_simulation, AttemptRecord, RequestOutcome};
pub use types::{EndpointState, LanguageClass, LengthBucket, ModelProfile, RequestFeatures};
pub use workload::{check_answer, generate_workload, simulate_response, WorkloadQuery};
