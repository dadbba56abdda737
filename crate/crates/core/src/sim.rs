//! A deterministic stand-in for a real handset: installed apps expose fact
//! tables, exploration instructions are answered from them, and final
//! instructions are judged against the scenario's ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Instruction;
use crate::exploration::{parse_agent_report, AgentReport, ExplorationInstruction};
use crate::text::{contains_phrase, normalize};

pub const BUNDLED_SCENARIO_JSON: &str = include_str!("../data/scenario_full.json");

/// Label attached to success rates produced by [`judge`].
pub const JUDGE_LABEL: &str = "template-equality oracle";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("app {0:?} is not installed")]
    UnknownApp(String),
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    profile: BTreeMap<String, String>,
    #[serde(default)]
    apps: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
}

/// Ground truth for one simulated user and device. Immutable after load.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    profile: BTreeMap<String, String>,
    /// Display name, normalized fact key → value.
    apps: Vec<(String, BTreeMap<String, String>)>,
    /// Normalized alias → normalized canonical key.
    aliases: BTreeMap<String, String>,
}

fn normalized_map(map: BTreeMap<String, String>, what: &str) -> Result<BTreeMap<String, String>, SimError> {
    let mut out = BTreeMap::new();
    for (k, v) in map {
        let key = normalize(&k);
        if key.is_empty() {
            return Err(SimError::Malformed(format!("blank key in {what}")));
        }
        if out.insert(key, v.trim().to_string()).is_some() {
            return Err(SimError::Malformed(format!("duplicate key {k:?} in {what}")));
        }
    }
    Ok(out)
}

impl Scenario {
    pub fn empty() -> Self {
        Scenario::default()
    }

    pub fn from_json_str(source: &str) -> Result<Self, SimError> {
        let file: ScenarioFile =
            serde_json::from_str(source).map_err(|e| SimError::Malformed(e.to_string()))?;
        let profile = normalized_map(file.profile, "profile")?;
        let mut apps = Vec::new();
        let mut names = BTreeSet::new();
        for (name, facts) in file.apps {
            if !names.insert(normalize(&name)) {
                return Err(SimError::Malformed(format!("duplicate app {name:?}")));
            }
            apps.push((name.trim().to_string(), normalized_map(facts, &name)?));
        }
        let aliases = normalized_map(file.aliases, "aliases")?
            .into_iter()
            .map(|(k, v)| (k, normalize(&v)))
            .collect();
        Ok(Scenario {
            profile,
            apps,
            aliases,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let source = fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_json_str(&source)
    }

    /// The bundled scenario covering every element of the bundled corpus.
    pub fn bundled_full() -> Self {
        Scenario::from_json_str(BUNDLED_SCENARIO_JSON).expect("bundled scenario is valid")
    }

    /// Same installed apps, no facts and no profile.
    pub fn without_facts(&self) -> Self {
        Scenario {
            profile: BTreeMap::new(),
            apps: self
                .apps
                .iter()
                .map(|(name, _)| (name.clone(), BTreeMap::new()))
                .collect(),
            aliases: self.aliases.clone(),
        }
    }

    pub fn installed_apps(&self) -> Vec<String> {
        self.apps.iter().map(|(name, _)| name.clone()).collect()
    }

    pub fn profile(&self) -> &BTreeMap<String, String> {
        &self.profile
    }

    fn canonical(&self, element: &str) -> String {
        let key = normalize(element);
        self.aliases.get(&key).cloned().unwrap_or(key)
    }

    /// Lookup keys for an element: itself, its canonical form, and every alias
    /// of that canonical form.
    fn keys_for(&self, element: &str) -> Vec<String> {
        let key = normalize(element);
        let canonical = self.canonical(element);
        let mut keys = vec![key, canonical.clone()];
        keys.extend(
            self.aliases
                .iter()
                .filter(|(_, c)| **c == canonical)
                .map(|(a, _)| a.clone()),
        );
        keys.dedup();
        keys
    }

    /// The true referent of an element for this user.
    pub fn truth(&self, element: &str) -> Option<&str> {
        self.keys_for(element)
            .iter()
            .find_map(|k| self.profile.get(k))
            .map(String::as_str)
    }

    fn app(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        let wanted = normalize(name);
        self.apps
            .iter()
            .find(|(n, _)| normalize(n) == wanted)
            .map(|(_, facts)| facts)
    }

    fn fact<'a>(&self, facts: &'a BTreeMap<String, String>, element: &str) -> Option<&'a str> {
        self.keys_for(element)
            .iter()
            .find_map(|k| facts.get(k))
            .map(String::as_str)
    }

    /// First installed app whose fact table knows `element`.
    pub fn locate(&self, element: &str) -> Option<&str> {
        self.apps
            .iter()
            .find(|(_, facts)| self.fact(facts, element).is_some())
            .map(|(name, _)| name.as_str())
    }

    /// Answers one exploration instruction from the named app's facts.
    pub fn explore(&self, instr: &ExplorationInstruction) -> Result<AgentReport, SimError> {
        let facts = self
            .app(&instr.app)
            .ok_or_else(|| SimError::UnknownApp(instr.app.clone()))?;
        Ok(self
            .fact(facts, &instr.element)
            .and_then(AgentReport::found)
            .unwrap_or_else(AgentReport::not_finished))
    }

    /// Profile elements no installed app can reveal.
    pub fn human_only_elements(&self) -> Vec<String> {
        self.profile
            .keys()
            .filter(|k| self.locate(k).is_none())
            .cloned()
            .collect()
    }
}

/// The device an exploration instruction is executed on.
pub trait DeviceAgent {
    fn installed_apps(&self) -> Vec<String>;

    /// Runs one instruction and returns the agent's raw terminal output.
    fn execute(&self, instr: &ExplorationInstruction) -> Result<String, SimError>;
}

pub const NOT_FOUND_OUTPUT: &str = "I could not find the requested information in this app.";

impl DeviceAgent for Scenario {
    fn installed_apps(&self) -> Vec<String> {
        Scenario::installed_apps(self)
    }

    fn execute(&self, instr: &ExplorationInstruction) -> Result<String, SimError> {
        let report = self.explore(instr)?;
        Ok(report.render().unwrap_or_else(|| NOT_FOUND_OUTPUT.to_string()))
    }
}

/// Reads a device's raw output as an [`AgentReport`].
pub fn run_on_device(device: &dyn DeviceAgent, instr: &ExplorationInstruction) -> Result<(String, AgentReport), SimError> {
    let raw = device.execute(instr)?;
    let report = parse_agent_report(&raw);
    Ok((raw, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionVerdict {
    pub success: bool,
    pub reason: String,
}

impl ExecutionVerdict {
    pub fn success() -> Self {
        ExecutionVerdict {
            success: true,
            reason: "matches expected completion".to_string(),
        }
    }

    pub fn failure(reason: impl Into<String>) -> Self {
        ExecutionVerdict {
            success: false,
            reason: reason.into(),
        }
    }
}

/// Normal form used for judging: normalized, terminal punctuation dropped.
pub fn judge_form(text: &str) -> String {
    normalize(text)
        .trim_end_matches(['.', '!', '?', '。', '！', '？'])
        .trim_end()
        .to_string()
}

/// The instruction this record should complete to under `scenario`.
pub fn expected_completion(record: &Instruction, scenario: &Scenario) -> Result<String, String> {
    let bindings = record.placeholder_bindings()?;
    let mut values = Vec::with_capacity(bindings.len());
    for b in &bindings {
        match &b.element {
            Some(element) => match scenario.truth(element) {
                Some(v) => values.push(v.to_string()),
                None => {
                    return Err(format!(
                        "unbound placeholder {{{}}}: no truth value for {element:?}",
                        b.info_type
                    ))
                }
            },
            None => values.push(b.span.clone()),
        }
    }
    let mut out = String::new();
    let mut values = values.into_iter();
    for part in crate::dataset::parse_template(&record.completed_template)? {
        match part {
            crate::dataset::TemplatePart::Literal(l) => out.push_str(&l),
            crate::dataset::TemplatePart::Placeholder(_) => {
                out.push_str(&values.next().expect("one value per placeholder"))
            }
        }
    }
    Ok(out)
}

/// Success iff `final_instruction` equals the record's completed template
/// filled with this scenario's truth values.
pub fn judge(final_instruction: &str, record: &Instruction, scenario: &Scenario) -> ExecutionVerdict {
    let expected = match expected_completion(record, scenario) {
        Ok(e) => e,
        Err(reason) => return ExecutionVerdict::failure(reason),
    };
    if judge_form(final_instruction) == judge_form(&expected) {
        return ExecutionVerdict::success();
    }
    let lingering = record.gold_elements.iter().find(|e| {
        contains_phrase(final_instruction, e)
            && !scenario.truth(e).is_some_and(|t| contains_phrase(t, e))
    });
    match lingering {
        Some(e) => ExecutionVerdict::failure(format!("unresolved element: {e}")),
        None => ExecutionVerdict::failure(format!("expected {expected:?}, got {final_instruction:?}")),
    }
}
