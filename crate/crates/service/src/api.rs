//! Endpoint-picker API: request/response schemas and handlers.
//!
//! The service is a thin transport shell over the policy module. A select
//! call carries either a bounded text sample or precomputed features, plus
//! the models already attempted for the request; it answers with the chosen
//! model and the per-candidate scores that produced it. No per-session
//! state lives server-side — retry metadata travels in the request body —
//! and the only shared state is the queued-token tracker fed by
//! dispatch/complete reports.
//!
//! Routes:
//! * `POST /v1/select` — pick a model for a request.
//! * `POST /v1/report` — adjust an endpoint's queued-token counter.
//! * `GET  /healthz`   — readiness and candidate count.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use laar_core::capability;
use laar_core::config::{ClusterConfig, RawClusterConfig};
use laar_core::features::extract_features;
use laar_core::policy::{
    pick_best, score_candidates, Candidate, PolicyKind, Router, RoutingContext,
};
use laar_core::types::{LanguageClass, RequestFeatures};

use crate::http::{Request, Response};
use crate::tracker::EndpointTracker;

/// Largest accepted `text_sample`, in characters. Clients with longer
/// prompts send a head+tail sample instead of the full text.
pub const TEXT_SAMPLE_MAX_CHARS: usize = 4096;

#[derive(Clone, Debug, Deserialize)]
pub struct FeaturesBody {
    pub language: String,
    pub estimated_tokens: u64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct EndpointStateBody {
    pub model_id: String,
    pub queued_tokens: u64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SelectRequestBody {
    pub request_id: String,
    #[serde(default)]
    pub text_sample: Option<String>,
    #[serde(default)]
    pub features: Option<FeaturesBody>,
    #[serde(default)]
    pub attempted_models: Vec<String>,
    /// Optional state override; models not listed keep their tracked value.
    #[serde(default)]
    pub endpoint_states: Option<Vec<EndpointStateBody>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateBody {
    pub model_id: String,
    /// L/Q; `null` encodes exclusion (infinite cost).
    pub cost: Option<f64>,
    pub score: f64,
    pub q: f64,
    pub latency_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectResponseBody {
    pub request_id: String,
    pub selected_model: String,
    /// One scored entry per configured model under the scoring policy;
    /// empty for baselines that rank without scoring.
    pub candidates: Vec<CandidateBody>,
    pub decision_micros: u64,
    /// The attempted set actually applied (unknown models dropped).
    pub attempted_models: Vec<String>,
    pub q_evals: u64,
    pub latency_evals: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ReportRequestBody {
    pub model_id: String,
    /// "dispatch" adds queued tokens, "complete" removes them.
    pub event: String,
    pub tokens: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportResponseBody {
    pub model_id: String,
    pub queued_tokens: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HealthBody {
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub candidates: usize,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error_response(status: u16, message: impl Into<String>) -> Response {
    let body = serde_json::to_string(&ErrorBody {
        error: message.into(),
    })
    .expect("error body serializes");
    Response::json(status, body)
}

fn ok_response<T: Serialize>(body: &T) -> Response {
    Response::json(200, serde_json::to_string(body).expect("body serializes"))
}

/// The running service: the resolved cluster (when every capability file
/// loaded), the live tracker, and the policy router.
pub struct ServiceState {
    cluster: Option<ClusterConfig>,
    problems: Vec<String>,
    policy: PolicyKind,
    tracker: EndpointTracker,
    router: Router,
}

impl ServiceState {
    /// Builds a ready service from a resolved, validated config.
    pub fn from_cluster(cluster: ClusterConfig) -> Self {
        let tracker = EndpointTracker::new(
            cluster
                .endpoints
                .iter()
                .map(|(p, s)| (p.model_id.clone(), s.queued_tokens)),
        );
        ServiceState {
            policy: cluster.policy,
            router: Router::new(cluster.policy),
            tracker,
            problems: Vec::new(),
            cluster: Some(cluster),
        }
    }

    /// Builds from a raw config, degrading to not-ready (rather than
    /// failing) when capability files are missing or endpoints are absent.
    pub fn from_raw(raw: &RawClusterConfig) -> Self {
        let mut problems = Vec::new();
        if raw.models.is_empty() {
            problems.push("no endpoints configured".to_string());
        }
        for spec in &raw.models {
            if let Err(e) = capability::load_model(&spec.capability_path) {
                problems.push(e.to_string());
            }
        }
        if problems.is_empty() {
            match raw.resolve() {
                Ok(cluster) => return Self::from_cluster(cluster),
                Err(e) => problems.push(e.to_string()),
            }
        }
        ServiceState {
            cluster: None,
            policy: raw.policy,
            router: Router::new(raw.policy),
            tracker: EndpointTracker::new(
                raw.models
                    .iter()
                    .map(|m| (m.model_id.clone(), m.initial_queued_tokens)),
            ),
            problems,
        }
    }

    pub fn ready(&self) -> bool {
        self.cluster.is_some()
    }

    pub fn health(&self) -> HealthBody {
        match &self.cluster {
            Some(cluster) => HealthBody {
                status: "ready",
                reason: None,
                candidates: cluster.endpoints.len(),
            },
            None => HealthBody {
                status: "not-ready",
                reason: Some(self.problems.join("; ")),
                candidates: 0,
            },
        }
    }

    pub fn tracker(&self) -> &EndpointTracker {
        &self.tracker
    }
}

fn parse_features(
    body: &SelectRequestBody,
    warnings: &mut Vec<String>,
) -> Result<RequestFeatures, Response> {
    match (&body.text_sample, &body.features) {
        (Some(_), Some(_)) | (None, None) => Err(error_response(
            400,
            "exactly one of text_sample or features is required",
        )),
        (Some(text), None) => {
            let chars = text.chars().count();
            if chars > TEXT_SAMPLE_MAX_CHARS {
                return Err(error_response(
                    400,
                    format!(
                        "text_sample is {chars} characters; cap is {TEXT_SAMPLE_MAX_CHARS} — send a head+tail sample"
                    ),
                ));
            }
            Ok(extract_features(text))
        }
        (None, Some(raw)) => {
            let language: LanguageClass = raw
                .language
                .parse()
                .map_err(|e: String| error_response(400, e))?;
            if language == LanguageClass::Unknown {
                warnings.push("unknown language scores with the English fallback".to_string());
            }
            Ok(RequestFeatures::new(language, raw.estimated_tokens))
        }
    }
}

fn handle_select(state: &ServiceState, body: &[u8]) -> Response {
    let Some(cluster) = &state.cluster else {
        return error_response(503, "service is not ready");
    };
    let body: SelectRequestBody = match serde_json::from_slice(body) {
        Ok(body) => body,
        Err(e) => return error_response(400, format!("malformed select request: {e}")),
    };

    let mut warnings = Vec::new();
    let features = match parse_features(&body, &mut warnings) {
        Ok(features) => features,
        Err(response) => return response,
    };

    // Validate and filter the attempted set.
    let mut attempted: Vec<String> = Vec::with_capacity(body.attempted_models.len());
    for model in &body.attempted_models {
        if attempted.contains(model) {
            return error_response(400, format!("attempted_models repeats `{model}`"));
        }
        if cluster.endpoints.iter().any(|(p, _)| &p.model_id == model) {
            attempted.push(model.clone());
        } else {
            warnings.push(format!(
                "attempted model `{model}` is not configured; ignored"
            ));
        }
    }

    // One consistent snapshot, optionally overridden by the caller.
    let mut states = state.tracker.snapshot();
    if let Some(overrides) = &body.endpoint_states {
        for o in overrides {
            match states.iter_mut().find(|s| s.model_id == o.model_id) {
                Some(s) => s.queued_tokens = o.queued_tokens,
                None => warnings.push(format!(
                    "endpoint state for unknown model `{}` ignored",
                    o.model_id
                )),
            }
        }
    }
    let candidates: Vec<Candidate<'_>> = cluster
        .endpoints
        .iter()
        .zip(states)
        .map(|((profile, _), endpoint_state)| Candidate {
            profile,
            state: endpoint_state,
        })
        .collect();
    if candidates.is_empty() {
        return error_response(500, "no candidates configured");
    }

    let ctx = RoutingContext {
        features,
        attempted_models: attempted.clone(),
        session_id: body.request_id.clone(),
        request_id: body.request_id.clone(),
    };

    let started = Instant::now();
    let (selected, scored, evals) = match state.policy {
        PolicyKind::Laar => {
            let report = match score_candidates(&candidates, &ctx, cluster) {
                Ok(report) => report,
                Err(e) => return error_response(500, e.to_string()),
            };
            let best = pick_best(&report.scored)
                .expect("nonempty candidates")
                .clone();
            (best.model_id, report.scored, report.evals)
        }
        _ => match state.router.select(&candidates, &ctx, cluster) {
            Ok(selected) => (selected, Vec::new(), Default::default()),
            Err(e) => return error_response(500, e.to_string()),
        },
    };
    let decision_micros = started.elapsed().as_micros() as u64;

    ok_response(&SelectResponseBody {
        request_id: body.request_id,
        selected_model: selected,
        candidates: scored
            .into_iter()
            .map(|s| CandidateBody {
                model_id: s.model_id,
                cost: s.cost.is_finite().then_some(s.cost),
                score: s.score,
                q: s.q,
                latency_seconds: s.latency,
            })
            .collect(),
        decision_micros,
        attempted_models: attempted,
        q_evals: evals.q_evals,
        latency_evals: evals.latency_evals,
        warnings,
    })
}

fn handle_report(state: &ServiceState, body: &[u8]) -> Response {
    if !state.ready() {
        return error_response(503, "service is not ready");
    }
    let body: ReportRequestBody = match serde_json::from_slice(body) {
        Ok(body) => body,
        Err(e) => return error_response(400, format!("malformed report request: {e}")),
    };
    let adjustment = match body.event.as_str() {
        "dispatch" => state.tracker.report_dispatch(&body.model_id, body.tokens),
        "complete" => state.tracker.report_complete(&body.model_id, body.tokens),
        other => {
            return error_response(
                400,
                format!("event must be `dispatch` or `complete`, got `{other}`"),
            )
        }
    };
    match adjustment {
        Some(adj) => ok_response(&ReportResponseBody {
            model_id: adj.model_id,
            queued_tokens: adj.queued_tokens,
            warning: adj
                .clamped
                .then(|| "completion exceeded tracked tokens; counter clamped at zero".to_string()),
        }),
        None => error_response(400, format!("unknown model `{}`", body.model_id)),
    }
}

fn handle_health(state: &ServiceState) -> Response {
    let health = state.health();
    let status = if state.ready() { 200 } else { 503 };
    Response::json(
        status,
        serde_json::to_string(&health).expect("health serializes"),
    )
}

/// Dispatches one HTTP request to its handler.
pub fn route(state: &Arc<ServiceState>, request: &Request) -> Response {
    match (request.method.as_str(), request.path.as_str()) {
        ("POST", "/v1/select") => handle_select(state, &request.body),
        ("POST", "/v1/report") => handle_report(state, &request.body),
        ("GET", "/healthz") => handle_health(state),
        ("POST", "/healthz") | ("GET", "/v1/select") | ("GET", "/v1/report") => {
            error_response(405, format!("method {} not allowed", request.method))
        }
        _ => error_response(404, format!("no route for {}", request.path)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use laar_core::capability::CapabilityModel;
    use laar_core::types::{EndpointState, ModelProfile};

    fn test_cluster(policy: PolicyKind) -> ClusterConfig {
        let endpoints = ["alpha", "beta", "gamma"]
            .iter()
            .map(|id| {
                (
                    ModelProfile::new(*id, 0.001, CapabilityModel::zeros()).unwrap(),
                    EndpointState::idle(*id),
                )
            })
            .collect();
        ClusterConfig {
            endpoints,
            alpha: 0.7,
            retry_cap: 10,
            concurrency: 8,
            rng_seed: 0,
            epsilon_q: 1e-3,
            policy,
        }
    }

    fn select(state: &ServiceState, json: &str) -> Response {
        handle_select(state, json.as_bytes())
    }

    #[test]
    fn select_scores_every_candidate() {
        let state = ServiceState::from_cluster(test_cluster(PolicyKind::Laar));
        let response = select(
            &state,
            r#"{"request_id":"r1","text_sample":"Key: abc. The value associated with the specified key is:"}"#,
        );
        assert_eq!(response.status, 200);
        let v: serde_json::Value = serde_json::from_str(&response.body).unwrap();
        assert_eq!(v["candidates"].as_array().unwrap().len(), 3);
        assert_eq!(v["q_evals"], 3);
        assert_eq!(v["latency_evals"], 3);
        // Equal speed and q: lexicographic winner.
        assert_eq!(v["selected_model"], "alpha");
    }

    #[test]
    fn attempted_winner_is_excluded_next_time() {
        let state = ServiceState::from_cluster(test_cluster(PolicyKind::Laar));
        let response = select(
            &state,
            r#"{"request_id":"r1","features":{"language":"en","estimated_tokens":1000},"attempted_models":["alpha"]}"#,
        );
        let v: serde_json::Value = serde_json::from_str(&response.body).unwrap();
        assert_eq!(v["selected_model"], "beta");
        let excluded = v["candidates"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["model_id"] == "alpha")
            .unwrap();
        assert!(excluded["cost"].is_null());
        assert_eq!(excluded["score"], 0.0);
    }

    #[test]
    fn all_attempted_falls_back_to_raw_cost() {
        let state = ServiceState::from_cluster(test_cluster(PolicyKind::Laar));
        let response = select(
            &state,
            r#"{"request_id":"r1","features":{"language":"en","estimated_tokens":1000},"attempted_models":["alpha","beta","gamma"]}"#,
        );
        let v: serde_json::Value = serde_json::from_str(&response.body).unwrap();
        assert_eq!(v["selected_model"], "alpha");
        for c in v["candidates"].as_array().unwrap() {
            assert!(!c["cost"].is_null());
        }
    }

    #[test]
    fn unknown_attempted_model_warns_and_is_ignored() {
        let state = ServiceState::from_cluster(test_cluster(PolicyKind::Laar));
        let response = select(
            &state,
            r#"{"request_id":"r1","features":{"language":"en","estimated_tokens":1000},"attempted_models":["mystery"]}"#,
        );
        assert_eq!(response.status, 200);
        let v: serde_json::Value = serde_json::from_str(&response.body).unwrap();
        assert!(v["warnings"][0].as_str().unwrap().contains("mystery"));
        assert_eq!(v["attempted_models"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn select_validates_feature_sources() {
        let state = ServiceState::from_cluster(test_cluster(PolicyKind::Laar));
        assert_eq!(select(&state, r#"{"request_id":"r1"}"#).status, 400);
        assert_eq!(
            select(
                &state,
                r#"{"request_id":"r1","text_sample":"x","features":{"language":"en","estimated_tokens":1}}"#
            )
            .status,
            400
        );
        assert_eq!(
            select(
                &state,
                r#"{"request_id":"r1","features":{"language":"en","estimated_tokens":1},"attempted_models":["alpha","alpha"]}"#
            )
            .status,
            400
        );
        let oversized = format!(
            r#"{{"request_id":"r1","text_sample":"{}"}}"#,
            "y".repeat(TEXT_SAMPLE_MAX_CHARS + 1)
        );
        assert_eq!(select(&state, &oversized).status, 400);
    }

    #[test]
    fn endpoint_state_override_changes_the_decision() {
        let state = ServiceState::from_cluster(test_cluster(PolicyKind::LoadAware));
        // Tracker says everyone idle -> alpha; override loads alpha and beta.
        let response = select(
            &state,
            r#"{"request_id":"r1","features":{"language":"en","estimated_tokens":1000},"endpoint_states":[{"model_id":"alpha","queued_tokens":5000},{"model_id":"beta","queued_tokens":200}]}"#,
        );
        let v: serde_json::Value = serde_json::from_str(&response.body).unwrap();
        assert_eq!(v["selected_model"], "gamma");
    }

    #[test]
    fn report_adjusts_and_clamps() {
        let state = ServiceState::from_cluster(test_cluster(PolicyKind::Laar));
        let r = handle_report(
            &state,
            br#"{"model_id":"alpha","event":"dispatch","tokens":4096}"#,
        );
        let v: serde_json::Value = serde_json::from_str(&r.body).unwrap();
        assert_eq!(v["queued_tokens"], 4096);
        let r = handle_report(
            &state,
            br#"{"model_id":"alpha","event":"complete","tokens":9999}"#,
        );
        let v: serde_json::Value = serde_json::from_str(&r.body).unwrap();
        assert_eq!(v["queued_tokens"], 0);
        assert!(v["warning"].as_str().unwrap().contains("clamped"));
        let r = handle_report(
            &state,
            br#"{"model_id":"nope","event":"dispatch","tokens":1}"#,
        );
        assert_eq!(r.status, 400);
    }

    #[test]
    fn health_reflects_missing_capability_files() {
        let raw = laar_core::config::parse_cluster_config(
            "model m 0.001 missing-dir/never-written.caps\n",
            "test",
            std::path::Path::new("/tmp/laar-health"),
        )
        .unwrap();
        let state = ServiceState::from_raw(&raw);
        assert!(!state.ready());
        let health = state.health();
        assert_eq!(health.status, "not-ready");
        assert!(health.reason.unwrap().contains("never-written.caps"));
        // Selection refuses while not ready.
        let r = select(&state, r#"{"request_id":"r","text_sample":"x"}"#);
        assert_eq!(r.status, 503);
    }

    #[test]
    fn health_rejects_empty_roster() {
        let raw = RawClusterConfig::default();
        let state = ServiceState::from_raw(&raw);
        assert!(!state.ready());
        assert!(state.health().reason.unwrap().contains("no endpoints"));
    }
}
