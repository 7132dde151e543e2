//! Command implementations and the exit-code policy.
//!
//! Exit codes: 1 for usage and input validation, 2 for I/O failures, 3 for
//! inconsistencies between otherwise-valid artifacts (a profile missing a
//! cell the cluster needs, a broken capability file, a simulation-internal
//! invariant failure).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use laar_core::accuracy::{default_profile, load_accuracy_profile, AccuracyProfile, ProfileError};
use laar_core::capability::{self, CapabilityError, FitOptions, TrainingExample};
use laar_core::config::{load_raw_config, ConfigError, RawClusterConfig};
use laar_core::features::extract_features;
use laar_core::metrics::{
    improvement_ratio, mean_ttca, summarize_cells, write_report, MetricsError,
};
use laar_core::policy::PolicyKind;
use laar_core::simulator::{
    read_attempt_log, run_cell_sweep, training_examples_from_log, write_attempt_log,
    RequestOutcome, SimError,
};
use laar_core::types::LanguageClass;
use laar_core::workload::{
    check_answer, generate_workload, read_workload, simulate_response, split_train_eval,
    write_workload, WorkloadError, WorkloadQuery,
};
use laar_service::{start_server, ServiceState};

use crate::{CompareArgs, FitArgs, GenArgs, ServeArgs, SimulateArgs};

pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
    fn io(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
    fn inconsistency(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
    pub fn code(&self) -> u8 {
        self.code
    }
    pub fn message(&self) -> &str {
        &self.message
    }
}

impl From<WorkloadError> for CliError {
    fn from(e: WorkloadError) -> Self {
        match &e {
            WorkloadError::Io { .. } => CliError::io(e.to_string()),
            WorkloadError::MissingProfileEntry { .. } => CliError::inconsistency(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<ProfileError> for CliError {
    fn from(e: ProfileError) -> Self {
        match &e {
            ProfileError::Io { .. } => CliError::io(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<CapabilityError> for CliError {
    fn from(e: CapabilityError) -> Self {
        match &e {
            CapabilityError::Io { .. } => CliError::io(e.to_string()),
            _ => CliError::inconsistency(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::io(e.to_string()),
            ConfigError::Capability(inner) => inner.into(),
            ConfigError::Parse { .. } | ConfigError::Validation(_) => {
                CliError::usage(e.to_string())
            }
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match &e {
            MetricsError::Io { .. } => CliError::io(e.to_string()),
            MetricsError::Parse { .. } => CliError::usage(e.to_string()),
            _ => CliError::inconsistency(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::LogIo { .. } => CliError::io(e.to_string()),
            SimError::LogParse { .. } | SimError::NoQueries | SimError::DuplicateRequestId(_) => {
                CliError::usage(e.to_string())
            }
            SimError::Workload(inner) => inner.into(),
            SimError::Metrics(inner) => inner.into(),
            _ => CliError::inconsistency(e.to_string()),
        }
    }
}

fn parse_languages(raw: &[String]) -> Result<Vec<LanguageClass>, CliError> {
    raw.iter()
        .map(|s| s.parse::<LanguageClass>().map_err(CliError::usage))
        .collect()
}

fn parse_policy(raw: &str) -> Result<PolicyKind, CliError> {
    raw.parse::<PolicyKind>().map_err(CliError::usage)
}

fn load_profile(spec: &str) -> Result<AccuracyProfile, CliError> {
    if spec == "default" {
        Ok(default_profile())
    } else {
        Ok(load_accuracy_profile(Path::new(spec))?)
    }
}

/// Config search order: explicit flag, then $LAAR_CONFIG, then ./laar.conf.
fn resolve_config(flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(path) = flag {
        return Ok(path);
    }
    if let Ok(env_path) = std::env::var("LAAR_CONFIG") {
        return Ok(PathBuf::from(env_path));
    }
    let fallback = PathBuf::from("laar.conf");
    if fallback.exists() {
        return Ok(fallback);
    }
    Err(CliError::usage(
        "no cluster config: pass --config, set LAAR_CONFIG, or create ./laar.conf",
    ))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
}

/// `workload.tsv` -> `workload.train.tsv` (or plain suffix when no extension).
fn split_path(out: &Path, part: &str) -> PathBuf {
    match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => out.with_extension(format!("{part}.{ext}")),
        None => {
            let mut p = out.as_os_str().to_owned();
            p.push(format!(".{part}"));
            PathBuf::from(p)
        }
    }
}

fn cell_counts(queries: &[WorkloadQuery]) -> BTreeMap<(LanguageClass, u64), usize> {
    let mut counts = BTreeMap::new();
    for q in queries {
        *counts.entry((q.language, q.target_tokens)).or_insert(0) += 1;
    }
    counts
}

pub fn gen(args: GenArgs) -> Result<(), CliError> {
    let languages = parse_languages(&args.languages)?;
    let queries = generate_workload(args.n, &languages, &args.lengths, args.seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_workload(&args.out, &queries)?;
    println!("wrote {} ({} records)", args.out.display(), queries.len());
    for ((language, tokens), count) in cell_counts(&queries) {
        println!("  {language} {tokens}: {count}");
    }
    if args.split {
        let (train, eval) = split_train_eval(&queries)?;
        let train_path = split_path(&args.out, "train");
        let eval_path = split_path(&args.out, "eval");
        write_workload(&train_path, &train)?;
        write_workload(&eval_path, &eval)?;
        println!(
            "split: {} ({} records) / {} ({} records), disjoint by base-query parity",
            train_path.display(),
            train.len(),
            eval_path.display(),
            eval.len()
        );
    }
    Ok(())
}

fn fit_and_save(
    by_model: BTreeMap<String, Vec<TrainingExample>>,
    out_dir: &Path,
    options: &FitOptions,
) -> Result<(), CliError> {
    if by_model.is_empty() {
        return Err(CliError::usage("no models to fit"));
    }
    ensure_dir(out_dir)?;
    for (model_id, examples) in by_model {
        let fitted = capability::fit(&examples, options)?;
        let path = out_dir.join(format!("{model_id}.caps"));
        capability::save_model(&fitted, &path)?;
        let successes = examples.iter().filter(|e| e.success).count();
        println!(
            "wrote {} ({} examples, {:.1}% correct)",
            path.display(),
            examples.len(),
            100.0 * successes as f64 / examples.len() as f64
        );
    }
    Ok(())
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    let options = FitOptions {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        l2: args.l2,
    };
    match (&args.workload, &args.attempt_log) {
        (Some(workload_path), None) => {
            let profile_spec = args.profile.as_deref().ok_or_else(|| {
                CliError::usage("--profile is required when fitting from a workload")
            })?;
            let seed = args.seed.ok_or_else(|| {
                CliError::usage("--seed is required when fitting from a workload")
            })?;
            let queries = read_workload(workload_path)?;
            if queries.is_empty() {
                return Err(CliError::usage("training workload is empty"));
            }
            let profile = load_profile(profile_spec)?;
            let mut by_model: BTreeMap<String, Vec<TrainingExample>> = BTreeMap::new();
            for model_id in profile.models() {
                let mut examples = Vec::with_capacity(queries.len());
                for query in &queries {
                    let response = simulate_response(model_id, query, &profile, seed)?;
                    examples.push(TrainingExample {
                        features: extract_features(&query.prompt()),
                        success: check_answer(query, &response),
                    });
                }
                by_model.insert(model_id.to_string(), examples);
            }
            fit_and_save(by_model, &args.out_dir, &options)
        }
        (None, Some(log_path)) => {
            let logged = read_attempt_log(log_path)?;
            if logged.is_empty() {
                return Err(CliError::usage("attempt log holds no attempts"));
            }
            fit_and_save(training_examples_from_log(&logged), &args.out_dir, &options)
        }
        (None, None) => Err(CliError::usage(
            "pass either --workload (with --profile and --seed) or --attempt-log",
        )),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    }
}

struct PreparedRun {
    cluster: laar_core::config::ClusterConfig,
    queries: Vec<WorkloadQuery>,
    profile: AccuracyProfile,
}

fn prepare_run(
    config_flag: Option<PathBuf>,
    workload: &Path,
    profile_spec: &str,
    policy: Option<&str>,
    seed: Option<u64>,
) -> Result<PreparedRun, CliError> {
    let config_path = resolve_config(config_flag)?;
    let mut raw: RawClusterConfig = load_raw_config(&config_path)?;
    if let Some(policy) = policy {
        raw.policy = parse_policy(policy)?;
    }
    if let Some(seed) = seed {
        raw.rng_seed = seed;
    }
    let cluster = raw.resolve()?;
    let queries = read_workload(workload)?;
    let profile = load_profile(profile_spec)?;
    Ok(PreparedRun {
        cluster,
        queries,
        profile,
    })
}

fn print_summaries(summaries: &[laar_core::metrics::TtcaSummary]) {
    println!("policy\tlanguage\ttokens\tn\tmean_ttca\tfinal_success\tcensored");
    for s in summaries {
        println!(
            "{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}",
            s.policy,
            s.language,
            s.target_tokens,
            s.n,
            s.mean_ttca,
            s.success_curve.last().copied().unwrap_or(0.0),
            s.censored_fraction
        );
    }
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let run = prepare_run(
        args.config,
        &args.workload,
        &args.profile,
        args.policy.as_deref(),
        args.seed,
    )?;
    let policy = run.cluster.policy;
    let outcomes = run_cell_sweep(&run.cluster, &run.queries, &run.profile)?;
    ensure_dir(&args.out_dir)?;
    let attempts_path = args.out_dir.join(format!("attempts-{policy}.tsv"));
    write_attempt_log(&attempts_path, &outcomes, &run.queries)?;
    let summaries = summarize_cells(
        policy.as_str(),
        &outcomes,
        &run.queries,
        run.cluster.retry_cap,
    )?;
    let report_path = args.out_dir.join(format!("report-{policy}.tsv"));
    write_report(&summaries, &report_path)?;
    print_summaries(&summaries);
    println!(
        "overall: mean_ttca {:.3}s over {} requests; wrote {} and {}",
        mean_ttca(&outcomes)?,
        outcomes.len(),
        attempts_path.display(),
        report_path.display()
    );
    Ok(())
}

fn outcomes_by_cell(
    outcomes: &[RequestOutcome],
    queries: &[WorkloadQuery],
) -> BTreeMap<(LanguageClass, u64), Vec<RequestOutcome>> {
    let cell_of: BTreeMap<&str, (LanguageClass, u64)> = queries
        .iter()
        .map(|q| (q.query_id.as_str(), (q.language, q.target_tokens)))
        .collect();
    let mut cells: BTreeMap<(LanguageClass, u64), Vec<RequestOutcome>> = BTreeMap::new();
    for o in outcomes {
        let cell = cell_of[o.request_id.as_str()];
        cells.entry(cell).or_default().push(o.clone());
    }
    cells
}

pub fn compare(args: CompareArgs) -> Result<(), CliError> {
    let policies: Vec<PolicyKind> = args
        .policies
        .iter()
        .map(|p| parse_policy(p))
        .collect::<Result<_, _>>()?;
    if policies.len() < 2 {
        return Err(CliError::usage("compare needs at least two policies"));
    }
    let reference_pos = policies
        .iter()
        .position(|p| *p == PolicyKind::Laar)
        .ok_or_else(|| CliError::usage("compare requires the laar policy in --policies"))?;

    let base_run = prepare_run(args.config, &args.workload, &args.profile, None, args.seed)?;
    ensure_dir(&args.out_dir)?;

    let mut outcomes_per_policy: Vec<Vec<RequestOutcome>> = Vec::with_capacity(policies.len());
    let mut all_summaries = Vec::new();
    for policy in &policies {
        let mut cluster = base_run.cluster.clone();
        cluster.policy = *policy;
        let outcomes = run_cell_sweep(&cluster, &base_run.queries, &base_run.profile)?;
        write_attempt_log(
            &args.out_dir.join(format!("attempts-{policy}.tsv")),
            &outcomes,
            &base_run.queries,
        )?;
        let summaries = summarize_cells(
            policy.as_str(),
            &outcomes,
            &base_run.queries,
            cluster.retry_cap,
        )?;
        write_report(
            &summaries,
            &args.out_dir.join(format!("report-{policy}.tsv")),
        )?;
        all_summaries.extend(summaries);
        outcomes_per_policy.push(outcomes);
    }
    write_report(&all_summaries, &args.out_dir.join("report-all.tsv"))?;

    let reference_cells = outcomes_by_cell(&outcomes_per_policy[reference_pos], &base_run.queries);
    let baseline_positions: Vec<usize> = (0..policies.len())
        .filter(|i| *i != reference_pos)
        .collect();

    let mut table = String::new();
    table.push_str("# laar-compare v1\n");
    table.push_str("# ratio = (baseline mean TTCA - laar mean TTCA) / baseline mean TTCA\n");
    table.push_str("language\ttarget_tokens\tn\tmean_ttca_laar");
    for &i in &baseline_positions {
        table.push_str(&format!(
            "\tmean_ttca_{}\tratio_vs_{}",
            policies[i], policies[i]
        ));
    }
    table.push('\n');

    let baseline_cells: Vec<BTreeMap<(LanguageClass, u64), Vec<RequestOutcome>>> =
        baseline_positions
            .iter()
            .map(|&i| outcomes_by_cell(&outcomes_per_policy[i], &base_run.queries))
            .collect();

    for (cell, laar_outcomes) in &reference_cells {
        let (language, tokens) = cell;
        let mut row = format!(
            "{language}\t{tokens}\t{}\t{}",
            laar_outcomes.len(),
            mean_ttca(laar_outcomes).map_err(CliError::from)?
        );
        for cells in &baseline_cells {
            let baseline_outcomes = &cells[cell];
            let ratio = improvement_ratio(laar_outcomes, baseline_outcomes)?;
            row.push_str(&format!("\t{}\t{}", mean_ttca(baseline_outcomes)?, ratio));
        }
        table.push_str(&row);
        table.push('\n');
    }

    let compare_path = args.out_dir.join("compare.tsv");
    std::fs::write(&compare_path, &table)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", compare_path.display())))?;
    print!("{table}");

    let laar_all = &outcomes_per_policy[reference_pos];
    for (&i, _) in baseline_positions.iter().zip(&baseline_cells) {
        let ratio = improvement_ratio(laar_all, &outcomes_per_policy[i])?;
        println!(
            "overall vs {}: mean_ttca {:.3}s -> {:.3}s, improvement {:.1}%",
            policies[i],
            mean_ttca(&outcomes_per_policy[i])?,
            mean_ttca(laar_all)?,
            100.0 * ratio
        );
    }
    println!("wrote {}", compare_path.display());
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let config_path = resolve_config(args.config)?;
    let raw = load_raw_config(&config_path)?;
    let state = ServiceState::from_raw(&raw);
    if !state.ready() {
        let health = state.health();
        return Err(CliError::inconsistency(format!(
            "service cannot start: {}",
            health.reason.unwrap_or_else(|| "unknown".into())
        )));
    }
    let listen = args
        .listen
        .or_else(|| std::env::var("LAAR_LISTEN").ok())
        .unwrap_or_else(|| "127.0.0.1:8080".to_string());
    let candidates = state.health().candidates;
    let handle = start_server(Arc::new(state), listen.as_str())
        .map_err(|e| CliError::io(format!("cannot bind {listen}: {e}")))?;
    println!(
        "ready: listening on {} with {} candidates (policy {})",
        handle.addr, candidates, raw.policy
    );
    loop {
        std::thread::park();
    }
}
