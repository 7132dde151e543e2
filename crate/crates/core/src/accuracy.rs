//! Accuracy profiles: the scenario table that drives the simulator's
//! correctness oracle.
//!
//! A profile maps (model, language, length bucket) to a success
//! probability. Profiles load from a whitespace-delimited text table with
//! `#` comments:
//!
//! ```text
//! # model language bucket probability
//! phi3-mini en 4096 0.99
//! ```
//!
//! A profile must be complete: every model appearing in the table needs a
//! row for each of the three languages and each of the five bounded
//! buckets. The crate ships a synthetic default scenario.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::types::{LanguageClass, LengthBucket};

/// Languages a profile must cover for every model.
pub const PROFILE_LANGUAGES: [LanguageClass; 3] = [
    LanguageClass::English,
    LanguageClass::Japanese,
    LanguageClass::Chinese,
];

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("profile {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("profile {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("profile {source_name} line {line}: probability {value} outside [0, 1]")]
    OutOfRange {
        source_name: String,
        line: usize,
        value: f64,
    },
    #[error("profile {source_name} line {line}: duplicate entry ({model}, {language}, {bucket})")]
    Duplicate {
        source_name: String,
        line: usize,
        model: String,
        language: LanguageClass,
        bucket: LengthBucket,
    },
    #[error("profile {source_name}: missing entry ({model}, {language}, {bucket})")]
    Incomplete {
        source_name: String,
        model: String,
        language: LanguageClass,
        bucket: LengthBucket,
    },
}

/// Success probabilities keyed by (model, language, bucket).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccuracyProfile {
    entries: BTreeMap<(String, LanguageClass, LengthBucket), f64>,
}

impl AccuracyProfile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts one entry; panics on out-of-range probabilities, which keeps
    /// hand-built test profiles honest.
    pub fn insert(
        &mut self,
        model_id: impl Into<String>,
        language: LanguageClass,
        bucket: LengthBucket,
        probability: f64,
    ) {
        assert!(
            (0.0..=1.0).contains(&probability),
            "probability {probability} outside [0, 1]"
        );
        self.entries
            .insert((model_id.into(), language, bucket), probability);
    }

    pub fn get(
        &self,
        model_id: &str,
        language: LanguageClass,
        bucket: LengthBucket,
    ) -> Option<f64> {
        self.entries
            .get(&(model_id.to_string(), language, bucket))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted distinct model ids present in the profile.
    pub fn models(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (model, _, _) in self.entries.keys() {
            if out.last() != Some(&model.as_str()) {
                out.push(model);
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, LanguageClass, LengthBucket, f64)> + '_ {
        self.entries
            .iter()
            .map(|((m, l, b), p)| (m.as_str(), *l, *b, *p))
    }

    /// Checks that every model covers all profile languages and bounded
    /// buckets. `source_name` is used in the error only.
    pub fn validate_complete(&self, source_name: &str) -> Result<(), ProfileError> {
        for model in self.models() {
            for language in PROFILE_LANGUAGES {
                for bucket in LengthBucket::BOUNDED {
                    if self.get(model, language, bucket).is_none() {
                        return Err(ProfileError::Incomplete {
                            source_name: source_name.to_string(),
                            model: model.to_string(),
                            language,
                            bucket,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parses a profile table and validates ranges and completeness.
pub fn parse_accuracy_profile(
    text: &str,
    source_name: &str,
) -> Result<AccuracyProfile, ProfileError> {
    let mut profile = AccuracyProfile::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(ProfileError::Parse {
                source_name: source_name.to_string(),
                line: line_no,
                message: format!(
                    "expected 4 fields (model language bucket probability), found {}",
                    fields.len()
                ),
            });
        }
        let language: LanguageClass = fields[1].parse().map_err(|e| ProfileError::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message: e,
        })?;
        let bucket: LengthBucket = fields[2].parse().map_err(|e| ProfileError::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message: e,
        })?;
        let probability: f64 = fields[3].parse().map_err(|_| ProfileError::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message: format!("`{}` is not a number", fields[3]),
        })?;
        if !(0.0..=1.0).contains(&probability) {
            return Err(ProfileError::OutOfRange {
                source_name: source_name.to_string(),
                line: line_no,
                value: probability,
            });
        }
        let key = (fields[0].to_string(), language, bucket);
        if profile.entries.contains_key(&key) {
            return Err(ProfileError::Duplicate {
                source_name: source_name.to_string(),
                line: line_no,
                model: key.0,
                language,
                bucket,
            });
        }
        profile.entries.insert(key, probability);
    }
    profile.validate_complete(source_name)?;
    Ok(profile)
}

/// Loads a profile table from disk.
pub fn load_accuracy_profile(path: &Path) -> Result<AccuracyProfile, ProfileError> {
    let text = fs::read_to_string(path).map_err(|source| ProfileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_accuracy_profile(&text, &path.display().to_string())
}

/// Raw text of the shipped synthetic scenario, for writing to disk.
pub const DEFAULT_PROFILE_TEXT: &str = include_str!("../data/accuracy_default.tsv");

/// The shipped synthetic accuracy scenario.
pub fn default_profile() -> AccuracyProfile {
    parse_accuracy_profile(DEFAULT_PROFILE_TEXT, "builtin-default")
        .expect("embedded default profile must parse")
}
