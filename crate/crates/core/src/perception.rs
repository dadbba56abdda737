//! Personalized-element detection.
//!
//! The model answers `No` for explicit instructions, or
//! `Yes|first element|second element|...` when the instruction carries
//! user-specific phrases.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{LlmBackend, LlmConfig, LlmError};
use crate::text::{dedup_phrases, fill_slots, normalize};

pub const PERCEPTION_PROMPT: &str = "\
Please understand and evaluate the instructions I have given you to determine if they contain personalized elements.
If the instruction contains words that need to be clarified by asking the user, or if certain words have different meanings for different people or devices, it can be determined that the instruction contains personalized elements, and these words are personalized elements.

You need to strictly follow the following rules:

Rule 1: If certain words have unique executable meanings, such as app names like QQ and WeChat, they are not personalized elements.

Rule 2: When you think something is not a personalized element, directly determine that it is not a personalized element.

Rule 3: Strictly prohibit treating specific names as personalized elements, whether they are Chinese or English names. But abstract names are still personalized elements, such as friends.

If you think it is not a personalized instruction, please answer 'No'.

If you think this is a personalized instruction, you need to determine which part of the instruction is the personalized element.

Then your answer should follow this format:
'Yes|First personalized element (i.e., the first part you consider personalized)|Second personalized element|Third personalized element (and so on, output all personalized elements,The same element only needs to be output once)'
The current instruction is as follows:{instruction}

Please note that your answer should not include any additional information outside the format provided.";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("perception output does not follow the 'No' / 'Yes|element|...' grammar: {raw:?}")]
pub struct GrammarError {
    pub raw: String,
}

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("instruction text is empty")]
    EmptyInstruction,
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// Verdict plus the ordered, deduplicated element phrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPerception")]
pub struct PerceptionResult {
    is_personalized: bool,
    elements: Vec<String>,
}

#[derive(Deserialize)]
struct RawPerception {
    is_personalized: bool,
    elements: Vec<String>,
}

impl TryFrom<RawPerception> for PerceptionResult {
    type Error = String;

    fn try_from(raw: RawPerception) -> Result<Self, String> {
        match (raw.is_personalized, raw.elements.is_empty()) {
            (false, true) => Ok(PerceptionResult::explicit()),
            (false, false) => Err("explicit verdict with elements".into()),
            (true, _) => PerceptionResult::personalized(raw.elements)
                .ok_or_else(|| "personalized verdict without elements".into()),
        }
    }
}

impl PerceptionResult {
    pub fn explicit() -> Self {
        PerceptionResult {
            is_personalized: false,
            elements: Vec::new(),
        }
    }

    /// Builds a personalized verdict; `None` if no element survives trimming.
    pub fn personalized<I, S>(elements: I) -> Option<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let elements = dedup_phrases(elements);
        (!elements.is_empty()).then_some(PerceptionResult {
            is_personalized: true,
            elements,
        })
    }

    pub fn is_personalized(&self) -> bool {
        self.is_personalized
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    /// Normalized element set, for order- and case-insensitive comparison.
    pub fn normalized_set(&self) -> std::collections::BTreeSet<String> {
        self.elements.iter().map(|e| normalize(e)).collect()
    }

    /// The model-output form of this verdict.
    pub fn serialize(&self) -> String {
        if self.is_personalized {
            format!("Yes|{}", self.elements.join("|"))
        } else {
            "No".to_string()
        }
    }
}

pub fn build_perception_prompt(instruction: &str) -> Result<String, PerceptionError> {
    if instruction.trim().is_empty() {
        return Err(PerceptionError::EmptyInstruction);
    }
    Ok(fill_slots(PERCEPTION_PROMPT, &[("instruction", instruction)]))
}

pub fn parse_perception(raw: &str) -> Result<PerceptionResult, GrammarError> {
    let grammar_error = || GrammarError {
        raw: raw.to_string(),
    };
    let trimmed = raw.trim();
    if trimmed.eq_ignore_ascii_case("no") {
        return Ok(PerceptionResult::explicit());
    }
    let mut segments = trimmed.split('|');
    let head = segments.next().unwrap_or_default().trim();
    if !head.eq_ignore_ascii_case("yes") {
        return Err(grammar_error());
    }
    PerceptionResult::personalized(segments).ok_or_else(grammar_error)
}

/// Prompt, one backend call, parse.
pub fn perceive(
    instruction: &str,
    backend: &dyn LlmBackend,
    config: &LlmConfig,
) -> Result<PerceptionResult, PerceptionError> {
    let prompt = build_perception_prompt(instruction)?;
    let raw = backend.complete(&prompt, config)?;
    Ok(parse_perception(&raw)?)
}
