//! Lightweight feature extraction: a bounded head+tail text sample,
//! character-class language detection, and a coarse token estimate.
//!
//! The router must stay cheap no matter how large the prompt is, so the
//! per-character work (classification) only ever touches the sampled
//! window. The sampler walks at most `max_chars` characters from each end
//! of the string and never decodes the middle.

use std::borrow::Cow;

use crate::types::{LanguageClass, RequestFeatures};

#[cfg(test)]
use crate::types::LengthBucket;

/// Characters taken from each end of the prompt when sampling.
/// The head captures the context prefix, the tail the trailing question.
pub const SAMPLE_WINDOW_CHARS: usize = 512;

/// Returns the first `max_chars` characters plus the last `max_chars`
/// characters of `full_text`. If the two windows touch or overlap the
/// whole text is returned once, without duplication.
///
/// # Panics
/// Panics if `max_chars` is zero.
pub fn sample_text(full_text: &str, max_chars: usize) -> Cow<'_, str> {
    assert!(max_chars > 0, "max_chars must be positive");

    // Walk forward to the byte index just past the max_chars-th character.
    let mut head_end = full_text.len();
    let mut seen = 0usize;
    for (idx, _) in full_text.char_indices() {
        if seen == max_chars {
            head_end = idx;
            break;
        }
        seen += 1;
    }
    if seen < max_chars {
        // Fewer than max_chars characters in total.
        return Cow::Borrowed(full_text);
    }

    // Walk backward to the byte index of the max_chars-th character from the end.
    let mut tail_start = 0usize;
    let mut seen_back = 0usize;
    for (idx, _) in full_text.char_indices().rev() {
        seen_back += 1;
        if seen_back == max_chars {
            tail_start = idx;
            break;
        }
    }
    if seen_back < max_chars || tail_start <= head_end {
        // Windows cover the whole string or overlap; dedup to the original.
        return Cow::Borrowed(full_text);
    }

    let mut out = String::with_capacity(head_end + (full_text.len() - tail_start));
    out.push_str(&full_text[..head_end]);
    out.push_str(&full_text[tail_start..]);
    Cow::Owned(out)
}

fn is_hiragana(c: char) -> bool {
    ('\u{3040}'..='\u{309f}').contains(&c)
}

fn is_katakana(c: char) -> bool {
    ('\u{30a0}'..='\u{30ff}').contains(&c)
}

fn is_cjk_ideograph(c: char) -> bool {
    ('\u{4e00}'..='\u{9fff}').contains(&c)
}

/// Classifies a text sample by character class.
///
/// Kana wins over CJK ideographs because Japanese text freely mixes both;
/// a sample with ideographs but no kana is treated as Chinese. ASCII
/// letters alone mean English, and anything else (including the empty
/// string) is unknown.
pub fn classify_language(sample: &str) -> LanguageClass {
    let mut saw_cjk = false;
    let mut saw_ascii_letter = false;
    for c in sample.chars() {
        if is_hiragana(c) || is_katakana(c) {
            return LanguageClass::Japanese;
        }
        if is_cjk_ideograph(c) {
            saw_cjk = true;
        } else if c.is_ascii_alphabetic() {
            saw_ascii_letter = true;
        }
    }
    if saw_cjk {
        LanguageClass::Chinese
    } else if saw_ascii_letter {
        LanguageClass::English
    } else {
        LanguageClass::Unknown
    }
}

/// Characters per token used by the coarse estimator. English text packs
/// roughly four characters into a token; CJK scripts are near one-to-one.
/// Only the bucket and a scale factor feed downstream, so coarse is fine.
fn chars_per_token(language: LanguageClass) -> u64 {
    match language {
        LanguageClass::English => 4,
        LanguageClass::Japanese | LanguageClass::Chinese | LanguageClass::Unknown => 1,
    }
}

/// Estimates the token count of `full_text`: ceil(chars / chars_per_token).
pub fn estimate_tokens(full_text: &str, language: LanguageClass) -> u64 {
    let chars = full_text.chars().count() as u64;
    let cpt = chars_per_token(language);
    chars.div_ceil(cpt)
}

/// Extracts routing features from a prompt: sample, classify, estimate,
/// bucket. Classification only sees the bounded sample; the token estimate
/// needs the full character count but does no per-character analysis.
pub fn extract_features(full_text: &str) -> RequestFeatures {
    let sample = sample_text(full_text, SAMPLE_WINDOW_CHARS);
    let language = classify_language(&sample);
    let estimated_tokens = estimate_tokens(full_text, language);
    RequestFeatures::new(language, estimated_tokens)
}
