//! Trace-level properties of full simulations on generated workloads.

use std::collections::BTreeSet;

use laar_core::accuracy::default_profile;
use laar_core::defaults::default_cluster;
use laar_core::metrics::{success_curve, summarize_cells};
use laar_core::policy::PolicyKind;
use laar_core::simulator::{run_simulation, RequestOutcome};
use laar_core::types::LanguageClass;
use laar_core::workload::{generate_workload, WorkloadQuery};

fn small_workload() -> Vec<WorkloadQuery> {
    generate_workload(
        8,
        &[
            LanguageClass::English,
            LanguageClass::Japanese,
            LanguageClass::Chinese,
        ],
        &[4096, 32768],
        1234,
    )
    .unwrap()
}

fn run(policy: PolicyKind, queries: &[WorkloadQuery]) -> Vec<RequestOutcome> {
    let cluster = default_cluster(policy, 77, |_| None);
    run_simulation(&cluster, queries, &default_profile()).unwrap()
}

#[test]
fn accuracy_aware_requests_use_distinct_models_and_stop_by_five() {
    let queries = small_workload();
    let outcomes = run(PolicyKind::Laar, &queries);
    for o in &outcomes {
        assert!(
            o.attempts.len() <= 5,
            "{} took {} attempts",
            o.request_id,
            o.attempts.len()
        );
        let distinct: BTreeSet<&str> = o.attempts.iter().map(|a| a.model_id.as_str()).collect();
        assert_eq!(
            distinct.len(),
            o.attempts.len(),
            "{} repeated a model",
            o.request_id
        );
        if o.censored {
            assert_eq!(
                o.attempts.len(),
                5,
                "censoring requires exhausting all models"
            );
        }
    }
}

#[test]
fn cumulative_ttca_and_success_are_monotone() {
    let queries = small_workload();
    for policy in [
        PolicyKind::Laar,
        PolicyKind::LoadAware,
        PolicyKind::SessionAffinity,
    ] {
        let outcomes = run(policy, &queries);
        for o in &outcomes {
            let mut so_far = 0.0;
            for a in &o.attempts {
                assert!(a.latency() >= 0.0);
                let next = so_far + a.latency();
                assert!(next >= so_far);
                so_far = next;
            }
        }
        let summaries = summarize_cells(policy.as_str(), &outcomes, &queries, 10).unwrap();
        for s in &summaries {
            for pair in s.success_curve.windows(2) {
                assert!(
                    pair[1] >= pair[0],
                    "{policy}/{}: curve decreased",
                    s.language
                );
            }
            let last = *s.success_curve.last().unwrap();
            assert!((last - (1.0 - s.censored_fraction)).abs() < 1e-12);
        }
    }
}

#[test]
fn session_affinity_first_failure_means_censored() {
    let queries = small_workload();
    let outcomes = run(PolicyKind::SessionAffinity, &queries);
    let mut first_failures = 0usize;
    let mut censored = 0usize;
    for o in &outcomes {
        let first_correct = o.attempts[0].correct;
        if !first_correct {
            first_failures += 1;
            assert!(o.censored, "{} failed first but recovered", o.request_id);
            assert_eq!(o.attempts.len(), 10, "sticky retries must run to the cap");
            // Sticky routing: one model for every attempt.
            let models: BTreeSet<&str> = o.attempts.iter().map(|a| a.model_id.as_str()).collect();
            assert_eq!(models.len(), 1);
        }
        if o.censored {
            censored += 1;
        }
    }
    assert_eq!(censored, first_failures);
    assert!(
        first_failures > 0,
        "scenario should produce some failures at 32K"
    );
}

#[test]
fn load_aware_avoids_the_endpoint_it_just_loaded() {
    // Two identical requests dispatched at t=0: the first takes the
    // lexicographically smallest idle endpoint, the second must see the
    // first's queued tokens in its snapshot and go elsewhere.
    let queries = generate_workload(2, &[LanguageClass::English], &[4096], 5).unwrap();
    let outcomes = run(PolicyKind::LoadAware, &queries);
    let first_model = &outcomes[0].attempts[0].model_id;
    let second_model = &outcomes[1].attempts[0].model_id;
    assert_eq!(outcomes[0].attempts[0].dispatch_time, 0.0);
    assert_eq!(outcomes[1].attempts[0].dispatch_time, 0.0);
    assert_eq!(first_model, "granite3.1-2b");
    assert_ne!(first_model, second_model);
}

#[test]
fn outcomes_are_reproducible_and_curves_cover_all_cells() {
    let queries = small_workload();
    let a = run(PolicyKind::Laar, &queries);
    let b = run(PolicyKind::Laar, &queries);
    assert_eq!(a, b);

    let summaries = summarize_cells("laar", &a, &queries, 10).unwrap();
    // 3 languages x 2 lengths.
    assert_eq!(summaries.len(), 6);
    for s in &summaries {
        assert_eq!(s.n, 8);
        assert_eq!(s.success_curve.len(), 10);
    }
    // The overall curve matches per-request outcomes.
    let curve = success_curve(&a, 10).unwrap();
    let solved = a.iter().filter(|o| !o.censored).count() as f64 / a.len() as f64;
    assert!((curve[9] - solved).abs() < 1e-12);
}
