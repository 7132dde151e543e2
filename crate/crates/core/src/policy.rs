//! Routing policies behind one selection interface.
//!
//! The accuracy-aware policy scores each candidate with the expected
//! time-to-success proxy cost(m | x) = L(m, x) / Q(m, x) and picks the
//! argmin. Models already attempted for the same request are hard-excluded
//! while any unattempted candidate remains; once every candidate has been
//! tried the exclusion lifts and ranking falls back to raw cost.
//!
//! Baselines: least-queued-tokens (load-aware), a stable session hash
//! (session-affinity), and round-robin.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::capability::predict_q;
use crate::config::ClusterConfig;
use crate::hash::fnv1a_64;
use crate::latency::{estimate_latency, LatencyError};
use crate::types::{EndpointState, LanguageClass, ModelProfile, RequestFeatures};

/// Added to a finite cost before inversion so scores stay finite.
pub const SCORE_EPSILON: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("empty candidate list")]
    EmptyCandidates,
    #[error(transparent)]
    Latency(#[from] LatencyError),
}

/// Policy selector, chosen by name in config or on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Laar,
    LoadAware,
    SessionAffinity,
    RoundRobin,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Laar,
        PolicyKind::LoadAware,
        PolicyKind::SessionAffinity,
        PolicyKind::RoundRobin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Laar => "laar",
            PolicyKind::LoadAware => "load-aware",
            PolicyKind::SessionAffinity => "session-affinity",
            PolicyKind::RoundRobin => "round-robin",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "laar" => Ok(PolicyKind::Laar),
            "load-aware" => Ok(PolicyKind::LoadAware),
            "session-affinity" => Ok(PolicyKind::SessionAffinity),
            "round-robin" => Ok(PolicyKind::RoundRobin),
            other => Err(format!(
                "unknown policy `{other}` (expected laar, load-aware, session-affinity, or round-robin)"
            )),
        }
    }
}

/// Per-request routing inputs: extracted features plus the retry metadata
/// echoed back by the client.
#[derive(Clone, Debug)]
pub struct RoutingContext {
    pub features: RequestFeatures,
    /// Models already attempted for this request, in attempt order, no duplicates.
    pub attempted_models: Vec<String>,
    pub session_id: String,
    pub request_id: String,
}

impl RoutingContext {
    /// A first-attempt context where the request is its own session.
    pub fn first_attempt(features: RequestFeatures, request_id: impl Into<String>) -> Self {
        let request_id = request_id.into();
        RoutingContext {
            features,
            attempted_models: Vec::new(),
            session_id: request_id.clone(),
            request_id,
        }
    }
}

/// One candidate endpoint at scoring time: the static profile plus a
/// point-in-time load snapshot.
#[derive(Clone, Debug)]
pub struct Candidate<'a> {
    pub profile: &'a ModelProfile,
    pub state: EndpointState,
}

/// Scored candidate: cost, its inversion for max-score picking, and the
/// estimates that produced it.
#[derive(Clone, Debug)]
pub struct ScoredCandidate {
    pub model_id: String,
    /// L/Q, or +infinity when the candidate is excluded for this attempt.
    pub cost: f64,
    /// 1 / (cost + 1e-9) for finite cost; 0 encodes exclusion.
    pub score: f64,
    pub q: f64,
    /// Estimated latency in seconds.
    pub latency: f64,
}

/// Instrumentation: how many estimator evaluations a scoring pass made.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub q_evals: u64,
    pub latency_evals: u64,
}

/// Scoring output: one entry per candidate plus the evaluation counts.
#[derive(Clone, Debug)]
pub struct ScoringReport {
    pub scored: Vec<ScoredCandidate>,
    pub evals: EvalCounts,
}

/// The capability model has no notion of unclassifiable text, so unknown
/// language falls back to the English features when scoring.
fn scoring_features(features: &RequestFeatures) -> RequestFeatures {
    if features.language == LanguageClass::Unknown {
        let mut mapped = features.clone();
        mapped.language = LanguageClass::English;
        mapped
    } else {
        features.clone()
    }
}

fn invert_cost(cost: f64) -> f64 {
    if cost.is_finite() {
        1.0 / (cost + SCORE_EPSILON)
    } else {
        0.0
    }
}

fn laar_cost_counted(
    profile: &ModelProfile,
    features: &RequestFeatures,
    state: &EndpointState,
    ctx: &RoutingContext,
    cfg: &ClusterConfig,
    counts: &mut EvalCounts,
) -> Result<ScoredCandidate, PolicyError> {
    let scoring = scoring_features(features);
    let latency = estimate_latency(profile, &scoring, state, cfg.alpha)?;
    counts.latency_evals += 1;
    let q = predict_q(&profile.capability, &scoring, cfg.epsilon_q);
    counts.q_evals += 1;

    let attempted = ctx.attempted_models.iter().any(|m| m == &profile.model_id);
    let any_unattempted = cfg
        .endpoints
        .iter()
        .any(|(p, _)| !ctx.attempted_models.iter().any(|m| m == &p.model_id));
    let cost = if attempted && any_unattempted {
        f64::INFINITY
    } else {
        latency / q
    };

    Ok(ScoredCandidate {
        model_id: profile.model_id.clone(),
        cost,
        score: invert_cost(cost),
        q,
        latency,
    })
}

/// Scores one candidate: cost = L/Q, with previously attempted models
/// excluded (infinite cost) while an unattempted configured model remains.
pub fn laar_cost(
    profile: &ModelProfile,
    features: &RequestFeatures,
    state: &EndpointState,
    ctx: &RoutingContext,
    cfg: &ClusterConfig,
) -> Result<ScoredCandidate, PolicyError> {
    let mut counts = EvalCounts::default();
    laar_cost_counted(profile, features, state, ctx, cfg, &mut counts)
}

/// Scores every candidate exactly once.
pub fn score_candidates(
    candidates: &[Candidate<'_>],
    ctx: &RoutingContext,
    cfg: &ClusterConfig,
) -> Result<ScoringReport, PolicyError> {
    if candidates.is_empty() {
        return Err(PolicyError::EmptyCandidates);
    }
    let mut evals = EvalCounts::default();
    let scored = candidates
        .iter()
        .map(|c| laar_cost_counted(c.profile, &ctx.features, &c.state, ctx, cfg, &mut evals))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoringReport { scored, evals })
}

/// Maximal score, i.e. minimal cost; ties break to the lexicographically
/// smallest model id.
pub fn pick_best(scored: &[ScoredCandidate]) -> Option<&ScoredCandidate> {
    scored.iter().min_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then_with(|| a.model_id.cmp(&b.model_id))
    })
}

/// Accuracy-aware selection: argmin over cost(m | x).
pub fn select_laar(
    candidates: &[Candidate<'_>],
    ctx: &RoutingContext,
    cfg: &ClusterConfig,
) -> Result<String, PolicyError> {
    let report = score_candidates(candidates, ctx, cfg)?;
    Ok(pick_best(&report.scored)
        .expect("nonempty scored list")
        .model_id
        .clone())
}

/// Least queued tokens; ties break to the lexicographically smallest id.
pub fn select_load_aware(
    candidates: &[Candidate<'_>],
    _ctx: &RoutingContext,
    _cfg: &ClusterConfig,
) -> Result<String, PolicyError> {
    candidates
        .iter()
        .min_by(|a, b| {
            a.state
                .queued_tokens
                .cmp(&b.state.queued_tokens)
                .then_with(|| a.profile.model_id.cmp(&b.profile.model_id))
        })
        .map(|c| c.profile.model_id.clone())
        .ok_or(PolicyError::EmptyCandidates)
}

fn sorted_model_ids<'a>(candidates: &'a [Candidate<'_>]) -> Vec<&'a str> {
    let mut ids: Vec<&str> = candidates
        .iter()
        .map(|c| c.profile.model_id.as_str())
        .collect();
    ids.sort_unstable();
    ids
}

/// Stable session mapping: FNV-1a of the session id modulo the candidate
/// count, over lexicographically sorted ids. Removing a candidate can remap
/// other sessions; that is inherent to the modulo rule.
pub fn select_session_affinity(
    candidates: &[Candidate<'_>],
    ctx: &RoutingContext,
    _cfg: &ClusterConfig,
) -> Result<String, PolicyError> {
    let ids = sorted_model_ids(candidates);
    if ids.is_empty() {
        return Err(PolicyError::EmptyCandidates);
    }
    let idx = (fnv1a_64(ctx.session_id.as_bytes()) % ids.len() as u64) as usize;
    Ok(ids[idx].to_string())
}

/// Cycles through sorted model ids; `counter` is the number of prior calls.
pub fn select_round_robin(
    candidates: &[Candidate<'_>],
    counter: u64,
) -> Result<String, PolicyError> {
    let ids = sorted_model_ids(candidates);
    if ids.is_empty() {
        return Err(PolicyError::EmptyCandidates);
    }
    Ok(ids[(counter % ids.len() as u64) as usize].to_string())
}

/// Stateful selector: policy kind plus the round-robin cursor. Selection is
/// safe to call concurrently; each call observes the candidate snapshot it
/// was handed.
#[derive(Debug)]
pub struct Router {
    kind: PolicyKind,
    round_robin_counter: AtomicU64,
}

impl Router {
    pub fn new(kind: PolicyKind) -> Self {
        Router {
            kind,
            round_robin_counter: AtomicU64::new(0),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn select(
        &self,
        candidates: &[Candidate<'_>],
        ctx: &RoutingContext,
        cfg: &ClusterConfig,
    ) -> Result<String, PolicyError> {
        if candidates.is_empty() {
            return Err(PolicyError::EmptyCandidates);
        }
        match self.kind {
            PolicyKind::Laar => select_laar(candidates, ctx, cfg),
            PolicyKind::LoadAware => select_load_aware(candidates, ctx, cfg),
            PolicyKind::SessionAffinity => select_session_affinity(candidates, ctx, cfg),
            PolicyKind::RoundRobin => {
                let counter = self.round_robin_counter.fetch_add(1, Ordering::Relaxed);
                select_round_robin(candidates, counter)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capability::{CapabilityModel, FEATURE_LEN};
    use crate::types::EndpointState;

    /// Builds a config whose models have bias-only capability weights, so
    /// q = sigmoid(bias) exactly.
    fn cluster(models: &[(&str, f64, f64)]) -> ClusterConfig {
        let endpoints = models
            .iter()
            .map(|(id, spt, q)| {
                let mut w = [0.0; FEATURE_LEN];
                // logit(q)
                w[FEATURE_LEN - 1] = (q / (1.0 - q)).ln();
                (
                    ModelProfile::new(*id, *spt, CapabilityModel::from_weights(w)).unwrap(),
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
            policy: PolicyKind::Laar,
        }
    }

    fn candidates_of(cfg: &ClusterConfig) -> Vec<Candidate<'_>> {
        cfg.endpoints
            .iter()
            .map(|(p, s)| Candidate {
                profile: p,
                state: s.clone(),
            })
            .collect()
    }

    fn ctx(tokens: u64) -> RoutingContext {
        RoutingContext::first_attempt(
            RequestFeatures::new(LanguageClass::English, tokens),
            "req-1",
        )
    }

    #[test]
    fn laar_cost_is_latency_over_q() {
        // L = 0.01 * 1000 = 10, q = 0.5 -> cost 20.
        let cfg = cluster(&[("a", 0.01, 0.5), ("b", 0.02, 0.5)]);
        let c = candidates_of(&cfg);
        let scored = laar_cost(
            c[0].profile,
            &ctx(1000).features,
            &c[0].state,
            &ctx(1000),
            &cfg,
        )
        .unwrap();
        assert!((scored.cost - 20.0).abs() < 1e-9, "cost = {}", scored.cost);
        assert!((scored.score - 1.0 / (scored.cost + SCORE_EPSILON)).abs() < 1e-15);
    }

    #[test]
    fn attempted_model_is_excluded_while_alternatives_remain() {
        let cfg = cluster(&[("a", 0.01, 0.5), ("b", 0.02, 0.5)]);
        let c = candidates_of(&cfg);
        let mut context = ctx(1000);
        context.attempted_models.push("a".to_string());
        let scored =
            laar_cost(c[0].profile, &context.features, &c[0].state, &context, &cfg).unwrap();
        assert!(scored.cost.is_infinite());
        assert_eq!(scored.score, 0.0);
        // b is unattempted, so it keeps a finite cost.
        let other =
            laar_cost(c[1].profile, &context.features, &c[1].state, &context, &cfg).unwrap();
        assert!(other.cost.is_finite());
    }

    #[test]
    fn all_attempted_falls_back_to_raw_cost() {
        let cfg = cluster(&[("a", 0.01, 0.5), ("b", 0.02, 0.5)]);
        let c = candidates_of(&cfg);
        let mut context = ctx(1000);
        context.attempted_models = vec!["a".to_string(), "b".to_string()];
        let report = score_candidates(&c, &context, &cfg).unwrap();
        assert!(report.scored.iter().all(|s| s.cost.is_finite()));
        assert_eq!(select_laar(&c, &context, &cfg).unwrap(), "a");
    }

    #[test]
    fn floored_q_keeps_cost_finite() {
        // q floored at 1e-3 with L = 10 gives cost 10000.
        let cfg = cluster(&[("a", 0.01, 1e-9), ("b", 0.02, 0.5)]);
        let c = candidates_of(&cfg);
        let scored = laar_cost(
            c[0].profile,
            &ctx(1000).features,
            &c[0].state,
            &ctx(1000),
            &cfg,
        )
        .unwrap();
        assert!(
            (scored.cost - 10_000.0).abs() < 1e-6,
            "cost = {}",
            scored.cost
        );
    }

    #[test]
    fn select_laar_picks_min_cost_with_lexicographic_ties() {
        // Same speed and q: tie broken by id.
        let cfg = cluster(&[("beta", 0.01, 0.5), ("alpha", 0.01, 0.5)]);
        assert_eq!(
            select_laar(&candidates_of(&cfg), &ctx(1000), &cfg).unwrap(),
            "alpha"
        );
    }

    #[test]
    fn reliable_slow_model_beats_flaky_fast_model() {
        // L_a = 10, q_a = 0.9 -> 11.1; L_b = 5, q_b = 0.2 -> 25.
        let cfg = cluster(&[("a", 0.01, 0.9), ("b", 0.005, 0.2)]);
        assert_eq!(
            select_laar(&candidates_of(&cfg), &ctx(1000), &cfg).unwrap(),
            "a"
        );
    }

    #[test]
    fn successive_exclusions_cover_all_models() {
        let cfg = cluster(&[
            ("m1", 0.010, 0.9),
            ("m2", 0.012, 0.8),
            ("m3", 0.008, 0.3),
            ("m4", 0.020, 0.95),
            ("m5", 0.015, 0.6),
        ]);
        let c = candidates_of(&cfg);
        let mut context = ctx(4096);
        let mut chosen = Vec::new();
        for _ in 0..5 {
            let winner = select_laar(&c, &context, &cfg).unwrap();
            assert!(!chosen.contains(&winner), "repeat pick {winner}");
            context.attempted_models.push(winner.clone());
            chosen.push(winner);
        }
        assert_eq!(chosen.len(), 5);
    }

    #[test]
    fn scoring_evaluates_each_candidate_once() {
        let cfg = cluster(&[("a", 0.01, 0.5), ("b", 0.02, 0.6), ("c", 0.03, 0.7)]);
        let report = score_candidates(&candidates_of(&cfg), &ctx(1000), &cfg).unwrap();
        assert_eq!(report.scored.len(), 3);
        assert_eq!(report.evals.q_evals, 3);
        assert_eq!(report.evals.latency_evals, 3);
    }

    #[test]
    fn load_aware_picks_least_queued() {
        let cfg = cluster(&[("a", 0.01, 0.5), ("b", 0.01, 0.5), ("c", 0.01, 0.5)]);
        let mut c = candidates_of(&cfg);
        c[0].state.queued_tokens = 100;
        c[1].state.queued_tokens = 50;
        c[2].state.queued_tokens = 200;
        assert_eq!(select_load_aware(&c, &ctx(10), &cfg).unwrap(), "b");
        for cand in &mut c {
            cand.state.queued_tokens = 7;
        }
        assert_eq!(select_load_aware(&c, &ctx(10), &cfg).unwrap(), "a");
    }

    #[test]
    fn session_affinity_is_sticky_across_retries() {
        let cfg = cluster(&[
            ("m1", 0.01, 0.5),
            ("m2", 0.01, 0.5),
            ("m3", 0.01, 0.5),
            ("m4", 0.01, 0.5),
            ("m5", 0.01, 0.5),
        ]);
        let c = candidates_of(&cfg);
        let mut context = ctx(100);
        context.session_id = "session-42".to_string();
        let first = select_session_affinity(&c, &context, &cfg).unwrap();
        for attempt in 0..10 {
            context.attempted_models.push(format!("noise-{attempt}"));
            assert_eq!(select_session_affinity(&c, &context, &cfg).unwrap(), first);
        }
    }

    #[test]
    fn session_affinity_spreads_sessions_roughly_uniformly() {
        let cfg = cluster(&[
            ("m1", 0.01, 0.5),
            ("m2", 0.01, 0.5),
            ("m3", 0.01, 0.5),
            ("m4", 0.01, 0.5),
            ("m5", 0.01, 0.5),
        ]);
        let c = candidates_of(&cfg);
        let mut counts = std::collections::BTreeMap::new();
        let n = 10_000;
        for i in 0..n {
            let mut context = ctx(100);
            context.session_id = format!("session-{i}");
            let pick = select_session_affinity(&c, &context, &cfg).unwrap();
            *counts.entry(pick).or_insert(0u32) += 1;
        }
        let expected = n as f64 / 5.0;
        for (model, count) in counts {
            let dev = (count as f64 - expected).abs() / n as f64;
            assert!(dev < 0.05, "{model}: {count} of {n} deviates {dev:.3}");
        }
    }

    #[test]
    fn round_robin_cycles_evenly() {
        let cfg = cluster(&[("b", 0.01, 0.5), ("a", 0.01, 0.5), ("c", 0.01, 0.5)]);
        let c = candidates_of(&cfg);
        let router = Router::new(PolicyKind::RoundRobin);
        let mut counts = std::collections::BTreeMap::new();
        let mut order = Vec::new();
        for _ in 0..6 {
            let pick = router.select(&c, &ctx(10), &cfg).unwrap();
            order.push(pick.clone());
            *counts.entry(pick).or_insert(0u32) += 1;
        }
        assert_eq!(order[..3], ["a", "b", "c"]);
        assert!(counts.values().all(|&n| n == 2));
    }

    #[test]
    fn single_candidate_always_wins() {
        let cfg = cluster(&[("only", 0.01, 0.5)]);
        let c = candidates_of(&cfg);
        let router = Router::new(PolicyKind::RoundRobin);
        for _ in 0..3 {
            assert_eq!(router.select(&c, &ctx(10), &cfg).unwrap(), "only");
        }
    }

    #[test]
    fn empty_candidates_error() {
        let cfg = cluster(&[("a", 0.01, 0.5)]);
        let empty: Vec<Candidate<'_>> = Vec::new();
        for kind in PolicyKind::ALL {
            let router = Router::new(kind);
            assert!(matches!(
                router.select(&empty, &ctx(10), &cfg),
                Err(PolicyError::EmptyCandidates)
            ));
        }
    }

    #[test]
    fn common_speed_scaling_preserves_choice() {
        let base = cluster(&[("a", 0.010, 0.9), ("b", 0.004, 0.4), ("c", 0.007, 0.7)]);
        let baseline_pick = select_laar(&candidates_of(&base), &ctx(2048), &base).unwrap();
        for k in [0.001, 0.5, 2.0, 64.0, 1000.0] {
            let scaled = cluster(&[
                ("a", 0.010 * k, 0.9),
                ("b", 0.004 * k, 0.4),
                ("c", 0.007 * k, 0.7),
            ]);
            let pick = select_laar(&candidates_of(&scaled), &ctx(2048), &scaled).unwrap();
            assert_eq!(pick, baseline_pick, "changed at k = {k}");
        }
    }

    #[test]
    fn unknown_language_scores_like_english() {
        let cfg = cluster(&[("a", 0.01, 0.5), ("b", 0.02, 0.8)]);
        let c = candidates_of(&cfg);
        let en =
            RoutingContext::first_attempt(RequestFeatures::new(LanguageClass::English, 1000), "r");
        let unk =
            RoutingContext::first_attempt(RequestFeatures::new(LanguageClass::Unknown, 1000), "r");
        let re = score_candidates(&c, &en, &cfg).unwrap();
        let ru = score_candidates(&c, &unk, &cfg).unwrap();
        for (a, b) in re.scored.iter().zip(ru.scored.iter()) {
            assert_eq!(a.cost, b.cost);
        }
    }
}
