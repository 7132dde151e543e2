//! Expected-latency estimation: L(m, x) = c(m) * (T(x) + alpha * R(m)).
//!
//! The request cost is the estimated token count, the load cost is the
//! token mass already queued at the endpoint damped by `alpha`. Every input
//! is observable at routing time, so the estimate is a pure O(1) function.

use crate::types::{EndpointState, ModelProfile, RequestFeatures};

#[derive(Debug, thiserror::Error)]
pub enum LatencyError {
    #[error("state/profile mismatch: profile `{profile}` paired with state `{state}`")]
    StateProfileMismatch { profile: String, state: String },
}

/// Expected serving latency in seconds for running `features` on the
/// endpoint described by (`profile`, `state`).
pub fn estimate_latency(
    profile: &ModelProfile,
    features: &RequestFeatures,
    state: &EndpointState,
    alpha: f64,
) -> Result<f64, LatencyError> {
    if profile.model_id != state.model_id {
        return Err(LatencyError::StateProfileMismatch {
            profile: profile.model_id.clone(),
            state: state.model_id.clone(),
        });
    }
    debug_assert!(alpha >= 0.0);
    Ok(profile.seconds_per_token
        * (features.estimated_tokens as f64 + alpha * state.queued_tokens as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::CapabilityModel;
    use crate::types::LanguageClass;

    fn profile(id: &str, spt: f64) -> ModelProfile {
        ModelProfile::new(id, spt, CapabilityModel::zeros()).unwrap()
    }

    fn state(id: &str, queued: u64) -> EndpointState {
        EndpointState {
            model_id: id.to_string(),
            queued_tokens: queued,
        }
    }

    fn features(tokens: u64) -> RequestFeatures {
        RequestFeatures::new(LanguageClass::English, tokens)
    }

    #[test]
    fn unloaded_endpoint_is_pure_service_time() {
        let l = estimate_latency(&profile("m", 0.01), &features(1000), &state("m", 0), 0.7);
        assert_eq!(l.unwrap(), 10.0);
    }

    #[test]
    fn queued_tokens_add_damped_delay() {
        let l = estimate_latency(&profile("m", 0.01), &features(1000), &state("m", 2000), 0.7);
        assert!((l.unwrap() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_ignores_load() {
        for queued in [0, 5000, 1_000_000] {
            let l = estimate_latency(
                &profile("m", 0.01),
                &features(1000),
                &state("m", queued),
                0.0,
            );
            assert_eq!(l.unwrap(), 10.0);
        }
    }

    #[test]
    fn mismatched_ids_error() {
        let err = estimate_latency(&profile("a", 0.01), &features(10), &state("b", 0), 0.7);
        assert!(matches!(
            err.unwrap_err(),
            LatencyError::StateProfileMismatch { .. }
        ));
    }

    #[test]
    fn monotone_in_every_input() {
        let base =
            estimate_latency(&profile("m", 0.01), &features(1000), &state("m", 100), 0.7).unwrap();
        let more_t =
            estimate_latency(&profile("m", 0.01), &features(2000), &state("m", 100), 0.7).unwrap();
        let more_r =
            estimate_latency(&profile("m", 0.01), &features(1000), &state("m", 200), 0.7).unwrap();
        let more_c =
            estimate_latency(&profile("m", 0.02), &features(1000), &state("m", 100), 0.7).unwrap();
        let more_a =
            estimate_latency(&profile("m", 0.01), &features(1000), &state("m", 100), 0.9).unwrap();
        assert!(more_t > base && more_r > base && more_c > base && more_a > base);
    }

    #[test]
    fn linear_in_request_tokens() {
        let c = 0.0125;
        let one =
            estimate_latency(&profile("m", c), &features(3000), &state("m", 777), 0.7).unwrap();
        let two =
            estimate_latency(&profile("m", c), &features(6000), &state("m", 777), 0.7).unwrap();
        assert!((two - one - c * 3000.0).abs() < 1e-12);
    }
}
