//! Benchmark records, corpus loading and dataset quality metrics.
//!
//! A corpus file is a JSON array of instruction records. Difficulty labels are
//! accepted as `simple|easy`, `normal` and `hard|difficult` and normalized on
//! load. Every record is validated on load, including the alignment between
//! its raw text and its completed-form template.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::ops::Deref;
use std::path::Path;

use regex::RegexBuilder;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::text::{contains_phrase, normalize};

/// The bundled benchmark corpus (75 records).
pub const BUNDLED_CORPUS_JSON: &str = include_str!("../data/perinstruct.json");

/// Apps installed on the benchmark device. The bundled corpus references 26
/// of them; Meituan is installed but no record uses it.
pub const APP_CATALOG: [&str; 27] = [
    "WeChat",
    "QQ",
    "Weibo",
    "rednote",
    "Phone",
    "Messages",
    "Calendar",
    "Settings",
    "Clock",
    "Browser",
    "Weather",
    "App Market",
    "elm.me",
    "Meituan",
    "Cainiao",
    "Didi Chuxing",
    "railway 12306",
    "Baidu Map",
    "DeepSeek",
    "WPS",
    "Dianping",
    "Bilibili",
    "NetEase Cloud Music",
    "TikTok",
    "Jingdong",
    "Taobao",
    "Pinduoduo",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("corpus record #{index}{}: {message}", id.map(|i| format!(" (id {i})")).unwrap_or_default())]
    Record {
        index: usize,
        id: Option<u64>,
        message: String,
    },
    #[error("record {id}: invalid {field}: {reason}")]
    Invalid {
        id: u32,
        field: &'static str,
        reason: String,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("correlation undefined: need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("correlation undefined: zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("sample length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("entropy undefined: need at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("entropy undefined: all category counts are zero")]
    EmptyDistribution,
    #[error("quality report needs a non-empty corpus")]
    EmptyCorpus,
}

/// Task difficulty. Ordered `Simple < Normal < Hard`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Difficulty {
    Simple,
    Normal,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Simple, Difficulty::Normal, Difficulty::Hard];

    /// Ordinal used for rank correlation (1, 2, 3).
    pub fn ordinal(self) -> u8 {
        match self {
            Difficulty::Simple => 1,
            Difficulty::Normal => 2,
            Difficulty::Hard => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Simple => "simple",
            Difficulty::Normal => "normal",
            Difficulty::Hard => "hard",
        }
    }

    /// Parses either spelling of the taxonomy (`easy`/`simple`, `difficult`/`hard`).
    pub fn parse(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "simple" | "easy" => Some(Difficulty::Simple),
            "normal" => Some(Difficulty::Normal),
            "hard" | "difficult" => Some(Difficulty::Hard),
            _ => None,
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Simple => "Simple",
            Difficulty::Normal => "Normal",
            Difficulty::Hard => "Hard",
        })
    }
}

impl Serialize for Difficulty {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Difficulty {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let label = String::deserialize(deserializer)?;
        Difficulty::parse(&label).ok_or_else(|| {
            serde::de::Error::custom(format!(
                "unknown difficulty {label:?} (expected simple/easy, normal, hard/difficult)"
            ))
        })
    }
}

/// One benchmark record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instruction {
    pub id: u32,
    pub text: String,
    pub difficulty: Difficulty,
    pub min_steps: u32,
    pub apps: Vec<String>,
    pub completed_template: String,
    pub gold_elements: Vec<String>,
    pub info_types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplatePart {
    Literal(String),
    Placeholder(String),
}

/// Splits a completed-form template into literal text and `{info type}` slots.
pub fn parse_template(template: &str) -> Result<Vec<TemplatePart>, String> {
    let mut parts = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        if let Some(stray) = rest[..open].find('}') {
            return Err(format!("unmatched '}}' at byte {}", template.len() - rest.len() + stray));
        }
        if open > 0 {
            parts.push(TemplatePart::Literal(rest[..open].to_string()));
        }
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| "unterminated placeholder".to_string())?;
        let name = after[..close].trim();
        if name.is_empty() || name.contains('{') {
            return Err(format!("malformed placeholder {{{}}}", &after[..close]));
        }
        parts.push(TemplatePart::Placeholder(name.to_string()));
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err("unmatched '}'".to_string());
    }
    if !rest.is_empty() {
        parts.push(TemplatePart::Literal(rest.to_string()));
    }
    Ok(parts)
}

/// What a template placeholder stands for in the raw instruction text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceholderBinding {
    pub info_type: String,
    /// The raw-text span the placeholder covers.
    pub span: String,
    /// The gold element this span is, or `None` when the span is an explicit
    /// value already present in the instruction (e.g. "New York").
    pub element: Option<String>,
}

impl Instruction {
    pub fn placeholders(&self) -> Result<Vec<String>, String> {
        Ok(parse_template(&self.completed_template)?
            .into_iter()
            .filter_map(|p| match p {
                TemplatePart::Placeholder(name) => Some(name),
                TemplatePart::Literal(_) => None,
            })
            .collect())
    }

    pub fn is_personalized(&self) -> bool {
        !self.gold_elements.is_empty()
    }

    /// Aligns the template against the raw text and binds each placeholder.
    ///
    /// Placeholders prefer spans that are gold elements (longest first); a
    /// span that merely contains a gold element is rejected, since the
    /// completed form would then not follow from substituting the element.
    pub fn placeholder_bindings(&self) -> Result<Vec<PlaceholderBinding>, String> {
        let parts = parse_template(&self.completed_template)?;
        let mut elements: Vec<&String> = self.gold_elements.iter().collect();
        elements.sort_by_key(|e| std::cmp::Reverse(e.len()));
        let mut alternatives: Vec<String> = elements
            .iter()
            .map(|e| {
                e.split_whitespace()
                    .map(regex::escape)
                    .collect::<Vec<_>>()
                    .join(r"\s+")
            })
            .collect();
        alternatives.push(".+?".to_string());
        let slot = format!("({})", alternatives.join("|"));

        let mut pattern = String::from("^");
        let mut names = Vec::new();
        for part in &parts {
            match part {
                TemplatePart::Literal(lit) => pattern.push_str(&regex::escape(lit)),
                TemplatePart::Placeholder(name) => {
                    pattern.push_str(&slot);
                    names.push(name.clone());
                }
            }
        }
        pattern.push('$');
        let re = RegexBuilder::new(&pattern)
            .case_insensitive(true)
            .dot_matches_new_line(true)
            .build()
            .map_err(|e| format!("cannot compile template pattern: {e}"))?;
        let caps = re
            .captures(&self.text)
            .ok_or_else(|| "completed_template does not align with text".to_string())?;

        let mut bindings = Vec::with_capacity(names.len());
        for (i, name) in names.into_iter().enumerate() {
            let span = caps.get(i + 1).map_or("", |m| m.as_str()).to_string();
            let span_norm = normalize(&span);
            let element = self
                .gold_elements
                .iter()
                .find(|e| normalize(e) == span_norm)
                .cloned();
            if element.is_none() {
                if let Some(inner) = self.gold_elements.iter().find(|e| contains_phrase(&span, e)) {
                    return Err(format!(
                        "placeholder {{{name}}} covers {span:?}, which embeds element {inner:?}"
                    ));
                }
            }
            bindings.push(PlaceholderBinding {
                info_type: name,
                span,
                element,
            });
        }
        Ok(bindings)
    }

    /// Checks every record-level invariant.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |field: &'static str, reason: String| DatasetError::Invalid {
            id: self.id,
            field,
            reason,
        };
        if self.id == 0 {
            return Err(invalid("id", "must be positive".into()));
        }
        if self.text.trim().is_empty() {
            return Err(invalid("text", "empty".into()));
        }
        if self.min_steps == 0 {
            return Err(invalid("min_steps", "must be at least 1".into()));
        }
        if self.apps.is_empty() {
            return Err(invalid("apps", "empty app list".into()));
        }
        if self.apps.iter().any(|a| a.trim().is_empty()) {
            return Err(invalid("apps", "blank app name".into()));
        }
        let mut seen = HashSet::new();
        for element in &self.gold_elements {
            if element.trim().is_empty() {
                return Err(invalid("gold_elements", "blank element".into()));
            }
            if !seen.insert(normalize(element)) {
                return Err(invalid("gold_elements", format!("duplicate element {element:?}")));
            }
            if !contains_phrase(&self.text, element) {
                return Err(invalid(
                    "gold_elements",
                    format!("element {element:?} does not occur in text"),
                ));
            }
        }
        let placeholders = self
            .placeholders()
            .map_err(|e| invalid("completed_template", e))?;
        if placeholders.len() != self.info_types.len() {
            return Err(invalid(
                "info_types",
                format!(
                    "{} info types for {} placeholders",
                    self.info_types.len(),
                    placeholders.len()
                ),
            ));
        }
        for (slot, info) in placeholders.iter().zip(&self.info_types) {
            if normalize(slot) != normalize(info) {
                return Err(invalid(
                    "info_types",
                    format!("{info:?} does not match placeholder {{{slot}}}"),
                ));
            }
        }
        let bindings = self
            .placeholder_bindings()
            .map_err(|e| invalid("completed_template", e))?;
        for element in &self.gold_elements {
            let key = normalize(element);
            let bound = bindings
                .iter()
                .any(|b| b.element.as_deref().map(normalize).as_deref() == Some(key.as_str()));
            if !bound {
                return Err(invalid(
                    "completed_template",
                    format!("element {element:?} has no placeholder"),
                ));
            }
        }
        Ok(())
    }
}

/// A validated list of records with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    records: Vec<Instruction>,
}

impl Deref for Corpus {
    type Target = [Instruction];

    fn deref(&self) -> &[Instruction] {
        &self.records
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Instruction;
    type IntoIter = std::slice::Iter<'a, Instruction>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

impl Corpus {
    pub fn new(records: Vec<Instruction>) -> Result<Self, DatasetError> {
        let mut ids = HashSet::new();
        for record in &records {
            record.validate()?;
            if !ids.insert(record.id) {
                return Err(DatasetError::Invalid {
                    id: record.id,
                    field: "id",
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Corpus { records })
    }

    pub fn from_json_str(source: &str) -> Result<Self, DatasetError> {
        let values: Vec<serde_json::Value> =
            serde_json::from_str(source).map_err(|e| DatasetError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        let mut records = Vec::with_capacity(values.len());
        for (index, value) in values.into_iter().enumerate() {
            let id = value.get("id").and_then(serde_json::Value::as_u64);
            let record: Instruction =
                serde_json::from_value(value).map_err(|e| DatasetError::Record {
                    index,
                    id,
                    message: e.to_string(),
                })?;
            records.push(record);
        }
        Corpus::new(records)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("records serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string() + "\n").map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn get(&self, id: u32) -> Option<&Instruction> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn records(&self) -> &[Instruction] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Instruction> {
        self.records
    }

    /// Distinct app names in first-seen order.
    pub fn distinct_apps(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .flat_map(|r| r.apps.iter())
            .filter(|a| seen.insert(a.as_str()))
            .cloned()
            .collect()
    }

    pub fn counts_by_difficulty(&self) -> BTreeMap<Difficulty, usize> {
        let mut counts: BTreeMap<Difficulty, usize> =
            Difficulty::ALL.iter().map(|d| (*d, 0)).collect();
        for record in &self.records {
            *counts.entry(record.difficulty).or_default() += 1;
        }
        counts
    }

    /// One count per (record, listed app) pair.
    pub fn app_occurrences(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for record in &self.records {
            for app in &record.apps {
                *counts.entry(app.clone()).or_default() += 1;
            }
        }
        counts
    }
}

/// Reads and validates a corpus file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, DatasetError> {
    let path = path.as_ref();
    let source = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Corpus::from_json_str(&source)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    corpus.save(path)
}

pub fn bundled_corpus() -> Corpus {
    Corpus::from_json_str(BUNDLED_CORPUS_JSON).expect("bundled corpus is valid")
}

/// Average (fractional) ranks, 1-based; tied values share the mean of the
/// ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mean_x, b - mean_y);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricError::ZeroVariance("first variable"));
    }
    if syy == 0.0 {
        return Err(MetricError::ZeroVariance("second variable"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Tie-corrected Spearman correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooFewSamples(x.len()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Difficulty label consistency: Spearman correlation between the difficulty
/// ordinal and the minimal step count.
pub fn spearman_dlc(records: &[Instruction]) -> Result<f64, MetricError> {
    let difficulty: Vec<f64> = records.iter().map(|r| f64::from(r.difficulty.ordinal())).collect();
    let steps: Vec<f64> = records.iter().map(|r| f64::from(r.min_steps)).collect();
    spearman(&difficulty, &steps).map_err(|e| match e {
        MetricError::ZeroVariance("first variable") => MetricError::ZeroVariance("difficulty"),
        MetricError::ZeroVariance(_) => MetricError::ZeroVariance("min_steps"),
        other => other,
    })
}

/// Normalized Shannon entropy `H / ln K` over the supplied categories.
/// Zero-count categories still count towards `K`.
pub fn distribution_entropy<I>(counts: I) -> Result<f64, MetricError>
where
    I: IntoIterator<Item = usize>,
{
    let counts: Vec<usize> = counts.into_iter().collect();
    if counts.len() < 2 {
        return Err(MetricError::TooFewCategories(counts.len()));
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(MetricError::EmptyDistribution);
    }
    let total = total as f64;
    let entropy: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    Ok((entropy / (counts.len() as f64).ln()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetQualityReport {
    /// `None` when the correlation is undefined (e.g. a single difficulty).
    pub dlc: Option<f64>,
    pub de_difficulty: f64,
    /// `None` when the corpus references a single app.
    pub de_diversity: Option<f64>,
    pub counts_by_difficulty: BTreeMap<Difficulty, usize>,
    pub records: usize,
    pub distinct_apps: usize,
}

/// Assembles DLC, difficulty entropy (K = 3) and app-occurrence entropy
/// (K = distinct apps observed).
pub fn quality_report(corpus: &Corpus) -> Result<DatasetQualityReport, MetricError> {
    if corpus.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let dlc = match spearman_dlc(corpus) {
        Ok(v) => Some(v),
        Err(MetricError::ZeroVariance(_)) | Err(MetricError::TooFewSamples(_)) => None,
        Err(e) => return Err(e),
    };
    let counts_by_difficulty = corpus.counts_by_difficulty();
    let de_difficulty = distribution_entropy(counts_by_difficulty.values().copied())?;
    let occurrences = corpus.app_occurrences();
    let de_diversity = match distribution_entropy(occurrences.values().copied()) {
        Ok(v) => Some(v),
        Err(MetricError::TooFewCategories(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(DatasetQualityReport {
        dlc,
        de_difficulty,
        de_diversity,
        counts_by_difficulty,
        records: corpus.len(),
        distinct_apps: occurrences.len(),
    })
}

impl DatasetQualityReport {
    /// Plain-text table: category, metric, value.
    pub fn render_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
        let mut out = String::new();
        out.push_str(&format!("{:<22}| {:<16}| {}\n", "Category", "Metric", "Value"));
        out.push_str(&format!("{:-<22}+{:-<17}+{:-<8}\n", "", "", ""));
        let rows = [
            ("DLC", fmt(self.dlc)),
            ("DE_difficulty", fmt(Some(self.de_difficulty))),
            ("DE_diversity", fmt(self.de_diversity)),
        ];
        for (i, (metric, value)) in rows.iter().enumerate() {
            let category = if i == 0 { "Quantitative Metrics" } else { "" };
            out.push_str(&format!("{category:<22}| {metric:<16}| {value}\n"));
        }
        let counts: Vec<String> = self
            .counts_by_difficulty
            .iter()
            .map(|(d, c)| format!("{d}:{c}"))
            .collect();
        out.push_str(&format!(
            "\n{} records, {} distinct apps, difficulty counts {}\n",
            self.records,
            self.distinct_apps,
            counts.join(" ")
        ));
        out
    }
}

/// Apps referenced by `corpus` that are missing from [`APP_CATALOG`].
pub fn apps_outside_catalog(corpus: &Corpus) -> BTreeSet<String> {
    corpus
        .distinct_apps()
        .into_iter()
        .filter(|a| !APP_CATALOG.iter().any(|c| c.eq_ignore_ascii_case(a)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: u32, difficulty: Difficulty, min_steps: u32, apps: &[&str]) -> Instruction {
        Instruction {
            id,
            text: "Navigate to my home.".into(),
            difficulty,
            min_steps,
            apps: apps.iter().map(|s| s.to_string()).collect(),
            completed_template: "Navigate to {place name}.".into(),
            gold_elements: vec!["my home".into()],
            info_types: vec!["place name".into()],
        }
    }

    #[test]
    fn difficulty_spellings_normalize() {
        assert_eq!(Difficulty::parse("easy"), Some(Difficulty::Simple));
        assert_eq!(Difficulty::parse("Difficult"), Some(Difficulty::Hard));
        assert_eq!(Difficulty::parse(" normal "), Some(Difficulty::Normal));
        assert_eq!(Difficulty::parse("medium"), None);
    }

    #[test]
    fn template_parsing() {
        assert_eq!(
            parse_template("call {name}.").unwrap(),
            vec![
                TemplatePart::Literal("call ".into()),
                TemplatePart::Placeholder("name".into()),
                TemplatePart::Literal(".".into()),
            ]
        );
        assert!(parse_template("call {name.").is_err());
        assert!(parse_template("call name}.").is_err());
        assert!(parse_template("call {}.").is_err());
    }

    #[test]
    fn bindings_distinguish_elements_from_explicit_values() {
        let mut r = record(1, Difficulty::Simple, 4, &["Baidu Map"]);
        r.text = "Navigate to my home and call David.".into();
        r.completed_template = "Navigate to {place name} and call {name}.".into();
        r.info_types = vec!["place name".into(), "name".into()];
        let b = r.placeholder_bindings().unwrap();
        assert_eq!(b[0].element.as_deref(), Some("my home"));
        assert_eq!(b[1].element, None);
        assert_eq!(b[1].span, "David");
        r.validate().unwrap();
    }

    #[test]
    fn span_embedding_an_element_is_rejected() {
        let mut r = record(1, Difficulty::Simple, 4, &["Taobao"]);
        r.text = "Ship it to near my home.".into();
        r.completed_template = "Ship it to {place name}.".into();
        let err = r.validate().unwrap_err().to_string();
        assert!(err.contains("embeds element"), "{err}");
    }

    #[test]
    fn validation_names_offending_field() {
        let mut r = record(7, Difficulty::Simple, 0, &["Phone"]);
        let err = r.validate().unwrap_err().to_string();
        assert!(err.contains("record 7") && err.contains("min_steps"), "{err}");
        r.min_steps = 3;
        r.info_types.push("name".into());
        let err = r.validate().unwrap_err().to_string();
        assert!(err.contains("info_types"), "{err}");
        r.info_types.pop();
        r.gold_elements = vec!["my office".into()];
        let err = r.validate().unwrap_err().to_string();
        assert!(err.contains("does not occur"), "{err}");
        r.gold_elements = vec![];
        r.apps.clear();
        assert!(r.validate().unwrap_err().to_string().contains("apps"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = record(3, Difficulty::Simple, 4, &["Phone"]);
        let err = Corpus::new(vec![a.clone(), a]).unwrap_err().to_string();
        assert!(err.contains("duplicate id"), "{err}");
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(Corpus::from_json_str(""), Err(DatasetError::Parse { .. })));
        assert!(matches!(
            Corpus::from_json_str("[{\"id\": 4}]"),
            Err(DatasetError::Record { index: 0, id: Some(4), .. })
        ));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn perfect_monotone_dlc_is_one() {
        let records = vec![
            record(1, Difficulty::Simple, 3, &["A"]),
            record(2, Difficulty::Normal, 7, &["A"]),
            record(3, Difficulty::Hard, 12, &["A"]),
        ];
        assert!((spearman_dlc(&records).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dlc_errors() {
        let one = vec![record(1, Difficulty::Simple, 3, &["A"])];
        assert_eq!(spearman_dlc(&one), Err(MetricError::TooFewSamples(1)));
        let flat = vec![
            record(1, Difficulty::Simple, 3, &["A"]),
            record(2, Difficulty::Hard, 3, &["A"]),
        ];
        assert_eq!(spearman_dlc(&flat), Err(MetricError::ZeroVariance("min_steps")));
    }

    #[test]
    fn entropy_edge_cases() {
        assert!((distribution_entropy([5, 5, 5, 5]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(distribution_entropy([0, 9, 0]).unwrap(), 0.0);
        assert_eq!(distribution_entropy([3]), Err(MetricError::TooFewCategories(1)));
        assert_eq!(distribution_entropy([0, 0]), Err(MetricError::EmptyDistribution));
    }

    #[test]
    fn single_difficulty_report() {
        let corpus = Corpus::new(vec![
            record(1, Difficulty::Simple, 3, &["A"]),
            record(2, Difficulty::Simple, 5, &["B"]),
            record(3, Difficulty::Simple, 4, &["C"]),
        ])
        .unwrap();
        let report = quality_report(&corpus).unwrap();
        assert_eq!(report.de_difficulty, 0.0);
        assert_eq!(report.dlc, None);
        assert!((report.de_diversity.unwrap() - 1.0).abs() < 1e-12);
        assert!(report.render_table().contains("n/a"));
    }
}
