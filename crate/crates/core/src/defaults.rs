//! The shipped five-model scenario.
//!
//! Per-token speeds are synthetic but keep a realistic shape: the smallest
//! model is fastest, the mid-size models sit close together, and the
//! largest is slowest. The speed ranking is intentionally not the accuracy
//! ranking (see the default accuracy profile), which is what makes the
//! routing trade-off nontrivial.

use crate::capability::CapabilityModel;
use crate::config::ClusterConfig;
use crate::policy::PolicyKind;
use crate::types::{EndpointState, ModelProfile};

/// (model id, seconds per token) for the default cluster.
pub const DEFAULT_MODELS: [(&str, f64); 5] = [
    ("granite3.1-2b", 0.00030),
    ("granite3.1-8b", 0.00042),
    ("llama3.1-swallow-8b", 0.00038),
    ("phi3-medium", 0.00062),
    ("phi3-mini", 0.00050),
];

/// Builds the default cluster with the given capability models, keyed by
/// model id. Missing entries fall back to zero weights (q = 0.5).
pub fn default_cluster<F>(policy: PolicyKind, rng_seed: u64, mut capability_for: F) -> ClusterConfig
where
    F: FnMut(&str) -> Option<CapabilityModel>,
{
    let endpoints = DEFAULT_MODELS
        .iter()
        .map(|(id, spt)| {
            let caps = capability_for(id).unwrap_or_else(CapabilityModel::zeros);
            (
                ModelProfile::new(*id, *spt, caps).expect("default speeds are positive"),
                EndpointState::idle(*id),
            )
        })
        .collect();
    ClusterConfig {
        endpoints,
        alpha: 0.7,
        retry_cap: 10,
        concurrency: 8,
        rng_seed,
        epsilon_q: 1e-3,
        policy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accuracy::default_profile;

    #[test]
    fn default_models_match_the_default_profile() {
        let profile = default_profile();
        let mut ids: Vec<&str> = DEFAULT_MODELS.iter().map(|(id, _)| *id).collect();
        ids.sort_unstable();
        assert_eq!(profile.models(), ids);
    }

    #[test]
    fn default_cluster_validates() {
        let cluster = default_cluster(PolicyKind::Laar, 7, |_| None);
        cluster.validate().unwrap();
        assert_eq!(cluster.endpoints.len(), 5);
        assert_eq!(cluster.retry_cap, 10);
        assert_eq!(cluster.concurrency, 8);
        assert_eq!(cluster.alpha, 0.7);
    }

    #[test]
    fn smallest_model_is_fastest_but_not_everywhere_most_accurate() {
        let spt: std::collections::BTreeMap<&str, f64> = DEFAULT_MODELS.into_iter().collect();
        assert!(spt["phi3-mini"] > spt["granite3.1-2b"]);
        assert!(spt["phi3-mini"] > spt["llama3.1-swallow-8b"]);
    }
}
