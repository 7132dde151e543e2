//! Domain types shared by every module: request features, model profiles,
//! and live endpoint state.

use std::fmt;
use std::str::FromStr;

use crate::capability::CapabilityModel;

/// Task tag carried by every request in this artifact. The workload is a
/// single task family, so the tag never varies and is not encoded as a
/// scoring feature.
pub const TASK_KV_LOOKUP: &str = "kv-lookup";

/// Language of a text sample, inferred from character classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LanguageClass {
    English,
    Japanese,
    Chinese,
    Unknown,
}

impl LanguageClass {
    pub const ALL: [LanguageClass; 4] = [
        LanguageClass::English,
        LanguageClass::Japanese,
        LanguageClass::Chinese,
        LanguageClass::Unknown,
    ];

    /// Index in the one-hot feature layout (enum order).
    pub fn slot(self) -> usize {
        match self {
            LanguageClass::English => 0,
            LanguageClass::Japanese => 1,
            LanguageClass::Chinese => 2,
            LanguageClass::Unknown => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LanguageClass::English => "en",
            LanguageClass::Japanese => "ja",
            LanguageClass::Chinese => "zh",
            LanguageClass::Unknown => "unknown",
        }
    }
}

impl fmt::Display for LanguageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(LanguageClass::English),
            "ja" => Ok(LanguageClass::Japanese),
            "zh" => Ok(LanguageClass::Chinese),
            "unknown" => Ok(LanguageClass::Unknown),
            other => Err(format!("unknown language class `{other}`")),
        }
    }
}

/// Input-length bucket. Buckets partition the nonnegative token counts with
/// inclusive upper bounds, so every count maps to exactly one bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LengthBucket {
    B4k,
    B8k,
    B16k,
    B32k,
    B64k,
    Over,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 6] = [
        LengthBucket::B4k,
        LengthBucket::B8k,
        LengthBucket::B16k,
        LengthBucket::B32k,
        LengthBucket::B64k,
        LengthBucket::Over,
    ];

    /// The five bounded buckets, i.e. everything except [`LengthBucket::Over`].
    pub const BOUNDED: [LengthBucket; 5] = [
        LengthBucket::B4k,
        LengthBucket::B8k,
        LengthBucket::B16k,
        LengthBucket::B32k,
        LengthBucket::B64k,
    ];

    /// Inclusive upper bound in tokens; `None` for the unbounded bucket.
    pub fn upper_bound(self) -> Option<u64> {
        match self {
            LengthBucket::B4k => Some(4096),
            LengthBucket::B8k => Some(8192),
            LengthBucket::B16k => Some(16384),
            LengthBucket::B32k => Some(32768),
            LengthBucket::B64k => Some(65536),
            LengthBucket::Over => None,
        }
    }

    /// Smallest bucket whose upper bound is >= `tokens`.
    pub fn for_tokens(tokens: u64) -> LengthBucket {
        match tokens {
            0..=4096 => LengthBucket::B4k,
            4097..=8192 => LengthBucket::B8k,
            8193..=16384 => LengthBucket::B16k,
            16385..=32768 => LengthBucket::B32k,
            32769..=65536 => LengthBucket::B64k,
            _ => LengthBucket::Over,
        }
    }

    /// Index in the one-hot feature layout (enum order).
    pub fn slot(self) -> usize {
        match self {
            LengthBucket::B4k => 0,
            LengthBucket::B8k => 1,
            LengthBucket::B16k => 2,
            LengthBucket::B32k => 3,
            LengthBucket::B64k => 4,
            LengthBucket::Over => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LengthBucket::B4k => "4096",
            LengthBucket::B8k => "8192",
            LengthBucket::B16k => "16384",
            LengthBucket::B32k => "32768",
            LengthBucket::B64k => "65536",
            LengthBucket::Over => "over",
        }
    }
}

impl fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LengthBucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "4096" => Ok(LengthBucket::B4k),
            "8192" => Ok(LengthBucket::B8k),
            "16384" => Ok(LengthBucket::B16k),
            "32768" => Ok(LengthBucket::B32k),
            "65536" => Ok(LengthBucket::B64k),
            "over" => Ok(LengthBucket::Over),
            other => Err(format!("unknown length bucket `{other}`")),
        }
    }
}

/// Coarse features extracted from a prompt: everything the router is
/// allowed to look at.
#[derive(Clone, Debug, PartialEq)]
pub struct RequestFeatures {
    pub language: LanguageClass,
    /// Estimated prompt token count T(x).
    pub estimated_tokens: u64,
    pub bucket: LengthBucket,
    pub task_type: String,
}

impl RequestFeatures {
    /// Builds features with the bucket derived from the token count, which
    /// keeps the `bucket == bucket_of(estimated_tokens)` invariant by
    /// construction.
    pub fn new(language: LanguageClass, estimated_tokens: u64) -> Self {
        RequestFeatures {
            language,
            estimated_tokens,
            bucket: LengthBucket::for_tokens(estimated_tokens),
            task_type: TASK_KV_LOOKUP.to_string(),
        }
    }
}

/// Static per-model constants: identity, measured decode speed, and the
/// offline-fitted capability model.
#[derive(Clone, Debug)]
pub struct ModelProfile {
    pub model_id: String,
    /// Empirical seconds per token c(m); must be positive.
    pub seconds_per_token: f64,
    pub capability: CapabilityModel,
}

impl ModelProfile {
    pub fn new(
        model_id: impl Into<String>,
        seconds_per_token: f64,
        capability: CapabilityModel,
    ) -> Result<Self, String> {
        if seconds_per_token <= 0.0 || !seconds_per_token.is_finite() {
            return Err(format!(
                "seconds_per_token must be a positive finite number, got {seconds_per_token}"
            ));
        }
        Ok(ModelProfile {
            model_id: model_id.into(),
            seconds_per_token,
            capability,
        })
    }
}

/// Live load signal for one endpoint: the token mass R(m) that is queued or
/// in service there.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EndpointState {
    pub model_id: String,
    pub queued_tokens: u64,
}

impl EndpointState {
    pub fn idle(model_id: impl Into<String>) -> Self {
        EndpointState {
            model_id: model_id.into(),
            queued_tokens: 0,
        }
    }
}
