//! Deterministic discrete-event simulation of a multi-endpoint cluster.
//!
//! A fixed number of client streams pull queries from a shared list. Each
//! request runs a retry loop: snapshot endpoint states, ask the configured
//! policy for a model, enqueue the attempt at that endpoint (FIFO, one
//! request in service at a time), and on completion check the simulated
//! response. Incorrect answers retry immediately with the failed model
//! recorded in the routing context.
//!
//! Two modeling choices matter for interpreting results:
//!
//! * Service time is `c(m) * T(x)` alone. Queueing delay emerges from the
//!   FIFO event flow; the `alpha * R(m)` term exists only inside the
//!   router's latency *estimate*, so estimator error is observable.
//! * Responses are a fixed function of (model, query). Under the
//!   accuracy-aware policy, once every model has been attempted further
//!   retries are provably futile and the request is censored on the spot;
//!   baseline policies run out their full retry budget.
//!
//! The event loop is single-threaded over a virtual clock and fully
//! deterministic: ties are broken by (event-kind priority, request id).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fs;
use std::path::Path;

use crate::accuracy::AccuracyProfile;
use crate::capability::TrainingExample;
use crate::config::ClusterConfig;
use crate::features::extract_features;
use crate::metrics::{self, MetricsError};
use crate::policy::{Candidate, PolicyError, PolicyKind, Router, RoutingContext};
use crate::types::{EndpointState, LanguageClass, ModelProfile, RequestFeatures};
use crate::workload::{check_answer, simulate_response, WorkloadError, WorkloadQuery};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("simulation requires at least one query")]
    NoQueries,
    #[error("duplicate request id `{0}` in workload")]
    DuplicateRequestId(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("config error: {0}")]
    Config(String),
    #[error(
        "token conservation violated at t={time}s on `{model}`: tracked {tracked}, actual {actual}"
    )]
    ConservationViolated {
        time: f64,
        model: String,
        tracked: u64,
        actual: u64,
    },
    #[error("attempt log {path}: {source}")]
    LogIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("attempt log {source_name} line {line}: {message}")]
    LogParse {
        source_name: String,
        line: usize,
        message: String,
    },
}

/// Event kinds in processing-priority order for equal timestamps: endpoints
/// finish work first, then retries route, then new arrivals, then queued
/// attempts begin service.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimEventKind {
    ServiceEnd,
    RetryDispatch,
    Arrival,
    ServiceStart,
}

impl SimEventKind {
    fn priority(self) -> u8 {
        match self {
            SimEventKind::ServiceEnd => 0,
            SimEventKind::RetryDispatch => 1,
            SimEventKind::Arrival => 2,
            SimEventKind::ServiceStart => 3,
        }
    }
}

/// One scheduled event. Requests and endpoints are indices into the
/// simulation's query list and endpoint roster.
#[derive(Clone, Debug)]
pub struct SimEvent {
    pub time: f64,
    pub kind: SimEventKind,
    pub request: usize,
    pub attempt_index: u32,
    pub endpoint: Option<usize>,
}

/// Heap entry ordered by (time, kind priority, request-id rank, sequence).
struct QueuedEvent {
    event: SimEvent,
    id_rank: usize,
    seq: u64,
}

impl QueuedEvent {
    fn key(&self) -> (f64, u8, usize, u64) {
        (
            self.event.time,
            self.event.kind.priority(),
            self.id_rank,
            self.seq,
        )
    }
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        let (t1, k1, r1, s1) = self.key();
        let (t2, k2, r2, s2) = other.key();
        t1.total_cmp(&t2)
            .then(k1.cmp(&k2))
            .then(r1.cmp(&r2))
            .then(s1.cmp(&s2))
    }
}

/// One completed attempt of one request.
#[derive(Clone, Debug, PartialEq)]
pub struct AttemptRecord {
    /// 1-based attempt number within the request.
    pub attempt_index: u32,
    pub model_id: String,
    /// Virtual time the attempt was routed and enqueued.
    pub dispatch_time: f64,
    /// Virtual time service began (dispatch + queue wait).
    pub start_time: f64,
    pub end_time: f64,
    pub correct: bool,
}

impl AttemptRecord {
    /// Per-attempt latency: queue wait plus service time.
    pub fn latency(&self) -> f64 {
        self.end_time - self.dispatch_time
    }
}

/// Final record for one request: its attempts and the derived TTCA.
#[derive(Clone, Debug, PartialEq)]
pub struct RequestOutcome {
    pub request_id: String,
    pub attempts: Vec<AttemptRecord>,
    /// 1-based index of the first correct attempt, if any.
    pub first_correct: Option<u32>,
    pub ttca: f64,
    pub censored: bool,
}

struct QueuedAttempt {
    request: usize,
    attempt_index: u32,
    dispatch_time: f64,
}

struct InService {
    queued: QueuedAttempt,
    start_time: f64,
}

struct EndpointSim<'a> {
    profile: &'a ModelProfile,
    queued_tokens: u64,
    fifo: VecDeque<QueuedAttempt>,
    in_service: Option<InService>,
    start_pending: bool,
}

struct RequestRun {
    features: RequestFeatures,
    attempted: Vec<String>,
    attempts: Vec<AttemptRecord>,
    done: bool,
}

struct Sim<'a> {
    cluster: &'a ClusterConfig,
    queries: &'a [WorkloadQuery],
    profile: &'a AccuracyProfile,
    router: Router,
    endpoints: Vec<EndpointSim<'a>>,
    requests: Vec<RequestRun>,
    outcomes: Vec<Option<RequestOutcome>>,
    heap: BinaryHeap<std::cmp::Reverse<QueuedEvent>>,
    id_rank: Vec<usize>,
    next_query: usize,
    seq: u64,
}

/// Runs the full workload through the cluster under the configured policy.
/// The result is ordered like `queries` and is a pure function of
/// (`cluster.rng_seed`, `queries`, `profile`).
pub fn run_simulation(
    cluster: &ClusterConfig,
    queries: &[WorkloadQuery],
    profile: &AccuracyProfile,
) -> Result<Vec<RequestOutcome>, SimError> {
    cluster
        .validate()
        .map_err(|e| SimError::Config(e.to_string()))?;
    if queries.is_empty() {
        return Err(SimError::NoQueries);
    }
    let mut seen = BTreeSet::new();
    for q in queries {
        if !seen.insert(q.query_id.as_str()) {
            return Err(SimError::DuplicateRequestId(q.query_id.clone()));
        }
    }
    // The profile must cover every (model, query cell) pair up front.
    for (p, _) in &cluster.endpoints {
        for q in queries {
            if profile.get(&p.model_id, q.language, q.bucket()).is_none() {
                return Err(SimError::Workload(WorkloadError::MissingProfileEntry {
                    model: p.model_id.clone(),
                    language: q.language,
                    bucket: q.bucket(),
                }));
            }
        }
    }

    let mut sim = Sim::new(cluster, queries, profile);
    sim.run()
}

impl<'a> Sim<'a> {
    fn new(
        cluster: &'a ClusterConfig,
        queries: &'a [WorkloadQuery],
        profile: &'a AccuracyProfile,
    ) -> Self {
        let endpoints = cluster
            .endpoints
            .iter()
            .map(|(p, s)| EndpointSim {
                profile: p,
                queued_tokens: s.queued_tokens,
                fifo: VecDeque::new(),
                in_service: None,
                start_pending: false,
            })
            .collect();
        let requests = queries
            .iter()
            .map(|q| RequestRun {
                features: extract_features(&q.prompt()),
                attempted: Vec::new(),
                attempts: Vec::new(),
                done: false,
            })
            .collect();
        // Rank requests by id so time ties break on request_id.
        let mut order: Vec<usize> = (0..queries.len()).collect();
        order.sort_by(|&a, &b| queries[a].query_id.cmp(&queries[b].query_id));
        let mut id_rank = vec![0; queries.len()];
        for (rank, idx) in order.into_iter().enumerate() {
            id_rank[idx] = rank;
        }
        Sim {
            cluster,
            queries,
            profile,
            router: Router::new(cluster.policy),
            endpoints,
            requests,
            outcomes: (0..queries.len()).map(|_| None).collect(),
            heap: BinaryHeap::new(),
            id_rank,
            next_query: 0,
            seq: 0,
        }
    }

    fn push_event(&mut self, event: SimEvent) {
        let entry = QueuedEvent {
            id_rank: self.id_rank[event.request],
            seq: self.seq,
            event,
        };
        self.seq += 1;
        self.heap.push(std::cmp::Reverse(entry));
    }

    fn run(&mut self) -> Result<Vec<RequestOutcome>, SimError> {
        let first_wave = (self.cluster.concurrency as usize).min(self.queries.len());
        for request in 0..first_wave {
            self.push_event(SimEvent {
                time: 0.0,
                kind: SimEventKind::Arrival,
                request,
                attempt_index: 1,
                endpoint: None,
            });
        }
        self.next_query = first_wave;

        while let Some(std::cmp::Reverse(entry)) = self.heap.pop() {
            let event = entry.event;
            self.check_conservation(event.time)?;
            match event.kind {
                SimEventKind::Arrival | SimEventKind::RetryDispatch => {
                    self.dispatch_attempt(event.request, event.attempt_index, event.time)?;
                }
                SimEventKind::ServiceStart => {
                    self.handle_service_start(
                        event.endpoint.expect("start without endpoint"),
                        event.time,
                    );
                }
                SimEventKind::ServiceEnd => {
                    self.handle_service_end(
                        event.endpoint.expect("end without endpoint"),
                        event.time,
                    )?;
                }
            }
        }

        let mut outcomes = Vec::with_capacity(self.queries.len());
        for (i, slot) in self.outcomes.iter().enumerate() {
            match slot {
                Some(outcome) => outcomes.push(outcome.clone()),
                None => {
                    // Every request must have been driven to completion.
                    return Err(SimError::Config(format!(
                        "request `{}` never finalized",
                        self.queries[i].query_id
                    )));
                }
            }
        }
        Ok(outcomes)
    }

    /// Point-in-time copy of every endpoint's load, in roster order.
    fn snapshot_states(&self) -> Vec<EndpointState> {
        self.endpoints
            .iter()
            .map(|e| EndpointState {
                model_id: e.profile.model_id.clone(),
                queued_tokens: e.queued_tokens,
            })
            .collect()
    }

    fn dispatch_attempt(
        &mut self,
        request: usize,
        attempt_index: u32,
        now: f64,
    ) -> Result<(), SimError> {
        let query = &self.queries[request];
        let run = &self.requests[request];
        debug_assert!(!run.done);
        let ctx = RoutingContext {
            features: run.features.clone(),
            attempted_models: run.attempted.clone(),
            session_id: query.query_id.clone(),
            request_id: query.query_id.clone(),
        };
        let states = self.snapshot_states();
        let candidates: Vec<Candidate<'_>> = self
            .endpoints
            .iter()
            .zip(states)
            .map(|(e, state)| Candidate {
                profile: e.profile,
                state,
            })
            .collect();
        let selected = self.router.select(&candidates, &ctx, self.cluster)?;
        let endpoint = self
            .endpoints
            .iter()
            .position(|e| e.profile.model_id == selected)
            .expect("policy selected an unconfigured model");

        let tokens = self.requests[request].features.estimated_tokens;
        let e = &mut self.endpoints[endpoint];
        e.queued_tokens += tokens;
        e.fifo.push_back(QueuedAttempt {
            request,
            attempt_index,
            dispatch_time: now,
        });
        if e.in_service.is_none() && !e.start_pending {
            e.start_pending = true;
            self.push_event(SimEvent {
                time: now,
                kind: SimEventKind::ServiceStart,
                request,
                attempt_index,
                endpoint: Some(endpoint),
            });
        }
        Ok(())
    }

    fn handle_service_start(&mut self, endpoint: usize, now: f64) {
        let e = &mut self.endpoints[endpoint];
        debug_assert!(e.start_pending);
        debug_assert!(e.in_service.is_none());
        e.start_pending = false;
        let queued = e.fifo.pop_front().expect("service start on empty queue");
        let request = queued.request;
        let attempt_index = queued.attempt_index;
        let tokens = self.requests[request].features.estimated_tokens;
        let service_time = e.profile.seconds_per_token * tokens as f64;
        e.in_service = Some(InService {
            queued,
            start_time: now,
        });
        self.push_event(SimEvent {
            time: now + service_time,
            kind: SimEventKind::ServiceEnd,
            request,
            attempt_index,
            endpoint: Some(endpoint),
        });
    }

    fn handle_service_end(&mut self, endpoint: usize, now: f64) -> Result<(), SimError> {
        let model_id = self.endpoints[endpoint].profile.model_id.clone();
        let e = &mut self.endpoints[endpoint];
        let served = e.in_service.take().expect("service end with idle endpoint");
        let request = served.queued.request;
        let tokens = self.requests[request].features.estimated_tokens;
        e.queued_tokens = e
            .queued_tokens
            .checked_sub(tokens)
            .expect("queued token underflow");
        if !e.fifo.is_empty() && !e.start_pending {
            e.start_pending = true;
            let head = e.fifo.front().unwrap();
            let (head_request, head_attempt) = (head.request, head.attempt_index);
            self.push_event(SimEvent {
                time: now,
                kind: SimEventKind::ServiceStart,
                request: head_request,
                attempt_index: head_attempt,
                endpoint: Some(endpoint),
            });
        }

        let query = &self.queries[request];
        let response = simulate_response(&model_id, query, self.profile, self.cluster.rng_seed)?;
        let correct = check_answer(query, &response);
        let attempt_index = served.queued.attempt_index;
        self.requests[request].attempts.push(AttemptRecord {
            attempt_index,
            model_id: model_id.clone(),
            dispatch_time: served.queued.dispatch_time,
            start_time: served.start_time,
            end_time: now,
            correct,
        });

        if correct {
            return self.finalize(request, now);
        }
        let run = &mut self.requests[request];
        if !run.attempted.contains(&model_id) {
            run.attempted.push(model_id);
        }
        let attempts_made = run.attempts.len() as u32;
        if attempts_made >= self.cluster.retry_cap {
            return self.finalize(request, now);
        }
        if self.cluster.policy == PolicyKind::Laar && self.all_models_attempted(request) {
            // Responses are deterministic per (model, query): with every
            // model tried, further retries cannot succeed.
            return self.finalize(request, now);
        }
        self.push_event(SimEvent {
            time: now,
            kind: SimEventKind::RetryDispatch,
            request,
            attempt_index: attempts_made + 1,
            endpoint: None,
        });
        Ok(())
    }

    fn all_models_attempted(&self, request: usize) -> bool {
        let attempted = &self.requests[request].attempted;
        self.endpoints
            .iter()
            .all(|e| attempted.contains(&e.profile.model_id))
    }

    fn finalize(&mut self, request: usize, now: f64) -> Result<(), SimError> {
        let run = &mut self.requests[request];
        run.done = true;
        let result = metrics::compute_ttca(&run.attempts, self.cluster.retry_cap)?;
        self.outcomes[request] = Some(RequestOutcome {
            request_id: self.queries[request].query_id.clone(),
            attempts: run.attempts.clone(),
            first_correct: result.first_correct,
            ttca: result.ttca,
            censored: result.censored,
        });
        // The stream that finished draws the next unserved query.
        if self.next_query < self.queries.len() {
            let request = self.next_query;
            self.next_query += 1;
            self.push_event(SimEvent {
                time: now,
                kind: SimEventKind::Arrival,
                request,
                attempt_index: 1,
                endpoint: None,
            });
        }
        Ok(())
    }

    /// Tracked queued_tokens must equal the token mass of enqueued-but-
    /// unfinished attempts at every event.
    fn check_conservation(&self, time: f64) -> Result<(), SimError> {
        for e in &self.endpoints {
            let mut actual: u64 = e
                .fifo
                .iter()
                .map(|a| self.requests[a.request].features.estimated_tokens)
                .sum();
            if let Some(s) = &e.in_service {
                actual += self.requests[s.queued.request].features.estimated_tokens;
            }
            if actual != e.queued_tokens {
                return Err(SimError::ConservationViolated {
                    time,
                    model: e.profile.model_id.clone(),
                    tracked: e.queued_tokens,
                    actual,
                });
            }
        }
        Ok(())
    }
}

/// Runs every (language, target length) cell as an independent simulation
/// and concatenates the outcomes in cell order.
///
/// This is the evaluation protocol: per-cell TTCA is only meaningful when
/// cells do not contend with each other's queues, so each cell gets a
/// fresh cluster (same seed) and its own batch of client streams.
pub fn run_cell_sweep(
    cluster: &ClusterConfig,
    queries: &[WorkloadQuery],
    profile: &AccuracyProfile,
) -> Result<Vec<RequestOutcome>, SimError> {
    let mut cells: BTreeMap<(LanguageClass, u64), Vec<WorkloadQuery>> = BTreeMap::new();
    for q in queries {
        cells
            .entry((q.language, q.target_tokens))
            .or_default()
            .push(q.clone());
    }
    let mut outcomes = Vec::with_capacity(queries.len());
    for cell_queries in cells.values() {
        outcomes.extend(run_simulation(cluster, cell_queries, profile)?);
    }
    Ok(outcomes)
}

const ATTEMPT_LOG_HEADER: &str = "# laar-attempts v1";
const ATTEMPT_LOG_COLUMNS: &str =
    "# request_id\tattempt\tmodel\tlanguage\test_tokens\tdispatch\tstart\tend\tcorrect";

/// One parsed attempt-log line: the attempt plus the request features
/// needed to rebuild training examples.
#[derive(Clone, Debug, PartialEq)]
pub struct LoggedAttempt {
    pub request_id: String,
    pub language: LanguageClass,
    pub estimated_tokens: u64,
    pub record: AttemptRecord,
}

/// Renders outcomes as attempt-log text: one tab-separated line per
/// attempt, in outcome order. Identical simulations produce byte-identical
/// text.
pub fn attempt_log_text(outcomes: &[RequestOutcome], queries: &[WorkloadQuery]) -> String {
    let features: BTreeMap<&str, RequestFeatures> = queries
        .iter()
        .map(|q| (q.query_id.as_str(), extract_features(&q.prompt())))
        .collect();
    let mut out = String::new();
    out.push_str(ATTEMPT_LOG_HEADER);
    out.push('\n');
    out.push_str(ATTEMPT_LOG_COLUMNS);
    out.push('\n');
    for outcome in outcomes {
        let f = &features[outcome.request_id.as_str()];
        for a in &outcome.attempts {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                outcome.request_id,
                a.attempt_index,
                a.model_id,
                f.language,
                f.estimated_tokens,
                a.dispatch_time,
                a.start_time,
                a.end_time,
                u8::from(a.correct)
            ));
        }
    }
    out
}

/// Writes the attempt log for a finished run.
pub fn write_attempt_log(
    path: &Path,
    outcomes: &[RequestOutcome],
    queries: &[WorkloadQuery],
) -> Result<(), SimError> {
    fs::write(path, attempt_log_text(outcomes, queries)).map_err(|source| SimError::LogIo {
        path: path.display().to_string(),
        source,
    })
}

/// Reads an attempt log written by [`write_attempt_log`].
pub fn read_attempt_log(path: &Path) -> Result<Vec<LoggedAttempt>, SimError> {
    let text = fs::read_to_string(path).map_err(|source| SimError::LogIo {
        path: path.display().to_string(),
        source,
    })?;
    let source_name = path.display().to_string();
    let mut attempts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 9 {
            return Err(SimError::LogParse {
                source_name,
                line: line_no,
                message: format!("expected 9 fields, found {}", fields.len()),
            });
        }
        let err = |message: String| SimError::LogParse {
            source_name: source_name.clone(),
            line: line_no,
            message,
        };
        let parse_f64 = |s: &str, what: &str| -> Result<f64, SimError> {
            s.parse()
                .map_err(|_| err(format!("`{s}` is not a valid {what}")))
        };
        let correct = match fields[8] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("`{other}` is not 0 or 1"))),
        };
        attempts.push(LoggedAttempt {
            request_id: fields[0].to_string(),
            language: fields[3].parse().map_err(err)?,
            estimated_tokens: fields[4]
                .parse()
                .map_err(|_| err(format!("`{}` is not a token count", fields[4])))?,
            record: AttemptRecord {
                attempt_index: fields[1]
                    .parse()
                    .map_err(|_| err(format!("`{}` is not an attempt index", fields[1])))?,
                model_id: fields[2].to_string(),
                dispatch_time: parse_f64(fields[5], "time")?,
                start_time: parse_f64(fields[6], "time")?,
                end_time: parse_f64(fields[7], "time")?,
                correct,
            },
        });
    }
    Ok(attempts)
}

/// Groups logged attempts into per-model training sets.
pub fn training_examples_from_log(
    attempts: &[LoggedAttempt],
) -> BTreeMap<String, Vec<TrainingExample>> {
    let mut by_model: BTreeMap<String, Vec<TrainingExample>> = BTreeMap::new();
    for a in attempts {
        by_model
            .entry(a.record.model_id.clone())
            .or_default()
            .push(TrainingExample {
                features: RequestFeatures::new(a.language, a.estimated_tokens),
                success: a.record.correct,
            });
    }
    by_model
}
