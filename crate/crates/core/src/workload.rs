//! Synthetic key-value lookup workload: a large JSON dictionary of random
//! UUID pairs plus a short question asking for one value.
//!
//! Context sizes are controlled so that the coarse token estimator lands
//! exactly on the requested target, which makes the generated queries
//! round-trip cleanly through feature extraction. Questions come in three
//! language variants; only the question carries non-ASCII characters, the
//! UUID payload stays ASCII everywhere.
//!
//! The module also provides the correctness side of the simulation: an
//! exact-containment answer check and a deterministic response oracle that
//! models temperature-zero decoding (retrying the same model on the same
//! query can never change the outcome).

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_pcg::Pcg64;

use crate::accuracy::AccuracyProfile;
use crate::features::estimate_tokens;
use crate::hash::{format_uuid, hash_to_unit, mix64, response_draw};
use crate::types::{LanguageClass, LengthBucket};

/// Context lengths the generator accepts, in estimated tokens.
pub const SUPPORTED_LENGTHS: [u64; 5] = [4096, 8192, 16384, 32768, 65536];

/// Languages the generator can render questions in.
pub const SUPPORTED_LANGUAGES: [LanguageClass; 3] = [
    LanguageClass::English,
    LanguageClass::Japanese,
    LanguageClass::Chinese,
];

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("workload file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid workload parameters: {0}")]
    Params(String),
    #[error("target length {target} tokens is too small to hold one key-value pair")]
    TargetTooSmall { target: u64 },
    #[error("workload file {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("no accuracy profile entry for ({model}, {language}, {bucket})")]
    MissingProfileEntry {
        model: String,
        language: LanguageClass,
        bucket: LengthBucket,
    },
    #[error("query id `{0}` does not follow the q<index>-<lang>-<tokens> form")]
    BadQueryId(String),
}

/// One generated lookup query.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadQuery {
    pub query_id: String,
    /// `JSON data: {...}` body holding the key-value pairs.
    pub context: String,
    /// Question naming the target key, rendered in `language`.
    pub question: String,
    pub target_key: String,
    pub expected_value: String,
    pub language: LanguageClass,
    pub target_tokens: u64,
}

impl WorkloadQuery {
    /// The full prompt as served to a model.
    pub fn prompt(&self) -> String {
        let mut p = String::with_capacity(self.context.len() + 1 + self.question.len());
        p.push_str(&self.context);
        p.push('\n');
        p.push_str(&self.question);
        p
    }

    pub fn bucket(&self) -> LengthBucket {
        LengthBucket::for_tokens(self.target_tokens)
    }
}

fn chars_per_token(language: LanguageClass) -> u64 {
    match language {
        LanguageClass::English => 4,
        _ => 1,
    }
}

fn render_question(language: LanguageClass, target_key: &str) -> String {
    match language {
        LanguageClass::English => {
            format!("Key: {target_key}. The value associated with the specified key is:")
        }
        LanguageClass::Japanese => {
            format!("キー: {target_key}. 指定されたキーに対応する値は:")
        }
        LanguageClass::Chinese => format!("键: {target_key}. 与指定键关联的值是:"),
        LanguageClass::Unknown => unreachable!("validated before rendering"),
    }
}

const CONTEXT_PREFIX: &str = "JSON data: {";
/// Characters in `"<uuid>": "<uuid>"`.
const PAIR_CHARS: u64 = 78;
/// Characters in the `, ` separator between pairs.
const SEP_CHARS: u64 = 2;
/// Characters in `, "padding": ""` before the fill is added.
const PAD_OVERHEAD: u64 = 15;

fn draw_unique_uuid(rng: &mut Pcg64, used: &mut HashSet<u128>) -> String {
    loop {
        let bits: u128 = rng.random();
        if used.insert(bits) {
            return format_uuid(bits);
        }
    }
}

/// Builds one query whose full prompt estimates to exactly `target` tokens.
fn build_query(
    query_id: String,
    language: LanguageClass,
    target: u64,
    rng: &mut Pcg64,
) -> Result<WorkloadQuery, WorkloadError> {
    let total_chars = target * chars_per_token(language);
    // Question length is fixed per language because UUIDs are fixed-width;
    // measure it with a placeholder key.
    let question_chars = render_question(language, &format_uuid(0)).chars().count() as u64;

    let prefix_chars = CONTEXT_PREFIX.chars().count() as u64;
    let fixed = prefix_chars + PAIR_CHARS + PAD_OVERHEAD + 1 /* closing brace */
        + 1 /* newline */ + question_chars;
    if total_chars < fixed {
        return Err(WorkloadError::TargetTooSmall { target });
    }
    let budget = total_chars - fixed;
    let extra_pairs = budget / (PAIR_CHARS + SEP_CHARS);
    let pad_chars = budget - extra_pairs * (PAIR_CHARS + SEP_CHARS);
    let n_pairs = (1 + extra_pairs) as usize;

    let mut used = HashSet::with_capacity(2 * n_pairs);
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let key = draw_unique_uuid(rng, &mut used);
        let value = draw_unique_uuid(rng, &mut used);
        pairs.push((key, value));
    }
    let target_idx = rng.random_range(0..n_pairs);
    let (target_key, expected_value) = pairs[target_idx].clone();

    let mut context = String::with_capacity(total_chars as usize);
    context.push_str(CONTEXT_PREFIX);
    for (i, (key, value)) in pairs.iter().enumerate() {
        if i > 0 {
            context.push_str(", ");
        }
        context.push('"');
        context.push_str(key);
        context.push_str("\": \"");
        context.push_str(value);
        context.push('"');
    }
    context.push_str(", \"padding\": \"");
    for _ in 0..pad_chars {
        context.push('x');
    }
    context.push_str("\"}");

    let question = render_question(language, &target_key);
    Ok(WorkloadQuery {
        query_id,
        context,
        question,
        target_key,
        expected_value,
        language,
        target_tokens: target,
    })
}

/// Generates the cross product of `n_queries` base queries, the given
/// languages, and the given target lengths. Languages and lengths are
/// canonicalized (deduplicated and sorted), and the whole run is a pure
/// function of the seed.
pub fn generate_workload(
    n_queries: usize,
    languages: &[LanguageClass],
    lengths: &[u64],
    seed: u64,
) -> Result<Vec<WorkloadQuery>, WorkloadError> {
    if n_queries == 0 {
        return Err(WorkloadError::Params("n_queries must be >= 1".into()));
    }
    if languages.is_empty() || lengths.is_empty() {
        return Err(WorkloadError::Params(
            "languages and lengths must be nonempty".into(),
        ));
    }
    let mut langs: Vec<LanguageClass> = languages.to_vec();
    langs.sort_unstable();
    langs.dedup();
    for lang in &langs {
        if !SUPPORTED_LANGUAGES.contains(lang) {
            return Err(WorkloadError::Params(format!(
                "language `{lang}` has no question template"
            )));
        }
    }
    let mut lens: Vec<u64> = lengths.to_vec();
    lens.sort_unstable();
    lens.dedup();
    for len in &lens {
        if !SUPPORTED_LENGTHS.contains(len) {
            return Err(WorkloadError::Params(format!(
                "target length {len} is not one of {SUPPORTED_LENGTHS:?}"
            )));
        }
    }

    let mut rng = Pcg64::seed_from_u64(seed);
    let mut queries = Vec::with_capacity(n_queries * langs.len() * lens.len());
    for i in 0..n_queries {
        for &lang in &langs {
            for &len in &lens {
                let query_id = format!("q{i:04}-{lang}-{len}");
                queries.push(build_query(query_id, lang, len, &mut rng)?);
            }
        }
    }
    Ok(queries)
}

fn base_index(query_id: &str) -> Result<u64, WorkloadError> {
    let rest = query_id
        .strip_prefix('q')
        .ok_or_else(|| WorkloadError::BadQueryId(query_id.to_string()))?;
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return Err(WorkloadError::BadQueryId(query_id.to_string()));
    }
    digits
        .parse()
        .map_err(|_| WorkloadError::BadQueryId(query_id.to_string()))
}

/// Splits a workload into two disjoint halves by base-query parity: even
/// indices go to the first (training) split, odd to the second (eval).
pub fn split_train_eval(
    queries: &[WorkloadQuery],
) -> Result<(Vec<WorkloadQuery>, Vec<WorkloadQuery>), WorkloadError> {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for q in queries {
        if base_index(&q.query_id)? % 2 == 0 {
            train.push(q.clone());
        } else {
            eval.push(q.clone());
        }
    }
    Ok((train, eval))
}

/// Returns 1 iff the expected value occurs in the response. UUIDs are
/// collision-safe markers, so containment is an exact-match check.
pub fn check_answer(query: &WorkloadQuery, response: &str) -> bool {
    response.contains(&query.expected_value)
}

/// Deterministic response oracle. The success draw is a fixed function of
/// (seed, model, query) — never of the attempt index — so a retry against
/// the same model always reproduces the same answer.
pub fn simulate_response(
    model_id: &str,
    query: &WorkloadQuery,
    profile: &AccuracyProfile,
    seed: u64,
) -> Result<String, WorkloadError> {
    let bucket = query.bucket();
    let p = profile
        .get(model_id, query.language, bucket)
        .ok_or_else(|| WorkloadError::MissingProfileEntry {
            model: model_id.to_string(),
            language: query.language,
            bucket,
        })?;
    let draw = response_draw(seed, model_id, &query.query_id);
    let answer = if hash_to_unit(draw) < p {
        query.expected_value.clone()
    } else {
        // A wrong but plausible-looking value, derived from the same draw.
        let hi = mix64(draw ^ 0x9e37_79b9_7f4a_7c15);
        let lo = mix64(draw.wrapping_add(0x6a09_e667_f3bc_c909));
        let mut wrong = format_uuid(((hi as u128) << 64) | lo as u128);
        if wrong == query.expected_value {
            wrong = format_uuid((((hi ^ 1) as u128) << 64) | lo as u128);
        }
        wrong
    };
    Ok(format!(
        "The value associated with the specified key is: {answer}"
    ))
}

const WORKLOAD_HEADER: &str = "# laar-workload v1";
const FIELDS_PER_RECORD: usize = 7;

/// Writes one tab-separated record per query.
pub fn write_workload(path: &Path, queries: &[WorkloadQuery]) -> Result<(), WorkloadError> {
    let mut out = String::new();
    out.push_str(WORKLOAD_HEADER);
    out.push('\n');
    out.push_str(
        "# query_id\tlanguage\ttarget_tokens\ttarget_key\texpected_value\tcontext\tquestion\n",
    );
    for q in queries {
        for field in [
            &q.query_id,
            &q.context,
            &q.question,
            &q.target_key,
            &q.expected_value,
        ] {
            if field.contains('\t') || field.contains('\n') {
                return Err(WorkloadError::Params(format!(
                    "query {} contains a delimiter character",
                    q.query_id
                )));
            }
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            q.query_id,
            q.language,
            q.target_tokens,
            q.target_key,
            q.expected_value,
            q.context,
            q.question
        ));
    }
    fs::write(path, out).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a workload file and re-validates the per-record invariants.
pub fn read_workload(path: &Path) -> Result<Vec<WorkloadQuery>, WorkloadError> {
    let text = fs::read_to_string(path).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let source_name = path.display().to_string();
    let mut queries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != FIELDS_PER_RECORD {
            return Err(WorkloadError::Parse {
                source_name,
                line: line_no,
                message: format!(
                    "expected {FIELDS_PER_RECORD} tab-separated fields, found {}",
                    fields.len()
                ),
            });
        }
        let parse_err = |message: String| WorkloadError::Parse {
            source_name: source_name.clone(),
            line: line_no,
            message,
        };
        let language: LanguageClass = fields[1].parse().map_err(parse_err)?;
        let target_tokens: u64 = fields[2].parse().map_err(|_| WorkloadError::Parse {
            source_name: source_name.clone(),
            line: line_no,
            message: format!("`{}` is not a token count", fields[2]),
        })?;
        let query = WorkloadQuery {
            query_id: fields[0].to_string(),
            language,
            target_tokens,
            target_key: fields[3].to_string(),
            expected_value: fields[4].to_string(),
            context: fields[5].to_string(),
            question: fields[6].to_string(),
        };
        let occurrences = query.context.matches(&query.target_key).count();
        if occurrences != 1 {
            return Err(WorkloadError::Parse {
                source_name: source_name.clone(),
                line: line_no,
                message: format!(
                    "target key must occur exactly once in the context, found {occurrences}"
                ),
            });
        }
        let pair = format!("\"{}\": \"{}\"", query.target_key, query.expected_value);
        if !query.context.contains(&pair) {
            return Err(WorkloadError::Parse {
                source_name: source_name.clone(),
                line: line_no,
                message: "expected value is not paired with the target key".into(),
            });
        }
        queries.push(query);
    }
    Ok(queries)
}

/// Convenience: total estimated tokens of the full prompt, using the
/// query's own language for the chars-per-token rate.
pub fn prompt_tokens(query: &WorkloadQuery) -> u64 {
    estimate_tokens(&query.prompt(), query.language)
}
