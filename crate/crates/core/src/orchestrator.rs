//! The pipeline state machine: perceive, retrieve from memory, explore the
//! device, ask the user, complete, judge.
//!
//! `run_one` never fails; backend, grammar and plan errors are recorded in the
//! trace as stage failures.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Difficulty, Instruction};
use crate::exploration::{plan_exploration, AgentReport, ExplorationInstruction};
use crate::llm::{LlmBackend, LlmConfig};
use crate::memory::{retrieve_complete, MemoryStore, RetrievalOutcome};
use crate::perception::{build_perception_prompt, parse_perception, PerceptionResult};
use crate::sim::{judge, run_on_device, DeviceAgent, ExecutionVerdict, Scenario};
use crate::text::{contains_phrase, normalize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Perceive,
    Retrieve,
    Explore,
    Intervene,
    Complete,
    Judge,
}

/// Where an element's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Memory,
    Exploration,
    Human,
    Unresolved,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Memory, Source::Exploration, Source::Human, Source::Unresolved];
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerceptionTrace {
    pub raw: Option<String>,
    pub result: Option<PerceptionResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub unresolved: Vec<String>,
    pub raw: Option<String>,
    pub instructions: Vec<ExplorationInstruction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationAttempt {
    pub element: String,
    pub app: String,
    pub instruction: String,
    pub agent_output: Option<String>,
    pub report: AgentReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub element: String,
    pub supplied: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryWrite {
    pub element: String,
    pub value: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub element: String,
    pub source: Source,
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

/// Everything one record's run did, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub id: u32,
    pub instruction: String,
    pub difficulty: Difficulty,
    pub stages: Vec<Stage>,
    pub perception: PerceptionTrace,
    pub retrieval: Option<RetrievalOutcome>,
    pub plan: Option<PlanTrace>,
    pub attempts: Vec<ExplorationAttempt>,
    pub interventions: Vec<Intervention>,
    pub memory_writes: Vec<MemoryWrite>,
    pub final_retrieval: Option<RetrievalOutcome>,
    pub final_instruction: String,
    pub verdict: ExecutionVerdict,
    /// One entry per perceived element.
    pub resolutions: Vec<Resolution>,
    /// One entry per gold element; unperceived gold elements are unresolved.
    pub gold_sources: BTreeMap<String, Source>,
    pub failures: Vec<StageFailure>,
}

impl RunTrace {
    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn source_counts(&self) -> BTreeMap<Source, usize> {
        let mut counts: BTreeMap<Source, usize> = Source::ALL.iter().map(|s| (*s, 0)).collect();
        for s in self.gold_sources.values() {
            *counts.entry(*s).or_default() += 1;
        }
        counts
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

/// Asked for a value once exploration of an element has failed.
pub trait InterventionHook {
    fn clarify(&mut self, element: &str, instruction: &str) -> Option<String>;

    fn mode(&self) -> &'static str;
}

/// Never supplies a value.
#[derive(Debug, Default, Clone, Copy)]
pub struct DisabledHook;

impl InterventionHook for DisabledHook {
    fn clarify(&mut self, _element: &str, _instruction: &str) -> Option<String> {
        None
    }

    fn mode(&self) -> &'static str {
        "disabled"
    }
}

#[derive(Debug, Error)]
pub enum HookError {
    #[error("cannot read interventions file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed interventions file {path}: {message}")]
    Malformed { path: String, message: String },
}

/// Answers from a fixed element → value map.
#[derive(Debug, Default, Clone)]
pub struct ScriptedHook {
    answers: BTreeMap<String, String>,
}

impl ScriptedHook {
    pub fn new<I, K, V>(answers: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        ScriptedHook {
            answers: answers
                .into_iter()
                .map(|(k, v)| (normalize(k.as_ref()), v.into()))
                .collect(),
        }
    }

    /// Loads a JSON object mapping element phrases to values.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HookError> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|source| HookError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let map: BTreeMap<String, String> =
            serde_json::from_str(&source).map_err(|e| HookError::Malformed {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(ScriptedHook::new(map))
    }
}

impl InterventionHook for ScriptedHook {
    fn clarify(&mut self, element: &str, _instruction: &str) -> Option<String> {
        self.answers
            .get(&normalize(element))
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
    }

    fn mode(&self) -> &'static str {
        "scripted"
    }
}

/// Prompts on `output` and reads one line per question from `input`.
pub struct InteractiveHook<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> InteractiveHook<R, W> {
    pub fn new(input: R, output: W) -> Self {
        InteractiveHook { input, output }
    }
}

impl<R: BufRead, W: Write> InterventionHook for InteractiveHook<R, W> {
    fn clarify(&mut self, element: &str, instruction: &str) -> Option<String> {
        writeln!(self.output, "Instruction: {instruction}").ok()?;
        write!(self.output, "What does \"{element}\" refer to? (empty to skip) ").ok()?;
        self.output.flush().ok()?;
        let mut line = String::new();
        self.input.read_line(&mut line).ok()?;
        let answer = line.trim();
        (!answer.is_empty()).then(|| answer.to_string())
    }

    fn mode(&self) -> &'static str {
        "interactive"
    }
}

/// Progress notification emitted after each record.
#[derive(Debug, Clone, Copy)]
pub struct Progress<'a> {
    pub done: usize,
    pub total: usize,
    pub trace: &'a RunTrace,
}

pub struct Orchestrator<'a> {
    backend: &'a dyn LlmBackend,
    config: LlmConfig,
    scenario: &'a Scenario,
    device: &'a dyn DeviceAgent,
}

impl<'a> Orchestrator<'a> {
    /// The scenario doubles as the device.
    pub fn new(backend: &'a dyn LlmBackend, config: LlmConfig, scenario: &'a Scenario) -> Self {
        Orchestrator {
            backend,
            config,
            scenario,
            device: scenario,
        }
    }

    pub fn with_device(mut self, device: &'a dyn DeviceAgent) -> Self {
        self.device = device;
        self
    }

    pub fn run_one(
        &self,
        record: &Instruction,
        store: &mut MemoryStore,
        hook: &mut dyn InterventionHook,
    ) -> RunTrace {
        let mut trace = RunTrace {
            id: record.id,
            instruction: record.text.clone(),
            difficulty: record.difficulty,
            stages: vec![Stage::Perceive],
            perception: PerceptionTrace::default(),
            retrieval: None,
            plan: None,
            attempts: Vec::new(),
            interventions: Vec::new(),
            memory_writes: Vec::new(),
            final_retrieval: None,
            final_instruction: record.text.clone(),
            verdict: ExecutionVerdict::failure("not judged"),
            resolutions: Vec::new(),
            gold_sources: BTreeMap::new(),
            failures: Vec::new(),
        };

        let perceived = self.perceive(record, &mut trace);
        let Some(perceived) = perceived else {
            trace.verdict = ExecutionVerdict::failure("perception failed");
            self.attribute_gold(record, &mut trace);
            return trace;
        };

        let mut elements = Vec::new();
        for e in perceived.elements() {
            if contains_phrase(&record.text, e) {
                elements.push(e.clone());
            } else {
                trace.failures.push(StageFailure {
                    stage: Stage::Retrieve,
                    message: format!("perceived element {e:?} does not occur in the instruction"),
                });
                trace.resolutions.push(Resolution {
                    element: e.clone(),
                    source: Source::Unresolved,
                    value: None,
                });
            }
        }

        if !elements.is_empty() {
            self.resolve(record, &elements, store, hook, &mut trace);
        }

        trace.stages.push(Stage::Judge);
        trace.verdict = judge(&trace.final_instruction, record, self.scenario);
        self.attribute_gold(record, &mut trace);
        trace
    }

    fn perceive(&self, record: &Instruction, trace: &mut RunTrace) -> Option<PerceptionResult> {
        let fail = |trace: &mut RunTrace, message: String| {
            trace.failures.push(StageFailure {
                stage: Stage::Perceive,
                message,
            })
        };
        let prompt = match build_perception_prompt(&record.text) {
            Ok(p) => p,
            Err(e) => {
                fail(trace, e.to_string());
                return None;
            }
        };
        let raw = match self.backend.complete(&prompt, &self.config) {
            Ok(raw) => raw,
            Err(e) => {
                fail(trace, e.to_string());
                return None;
            }
        };
        trace.perception.raw = Some(raw.clone());
        match parse_perception(&raw) {
            Ok(result) => {
                trace.perception.result = Some(result.clone());
                Some(result)
            }
            Err(e) => {
                fail(trace, e.to_string());
                None
            }
        }
    }

    fn resolve(
        &self,
        record: &Instruction,
        elements: &[String],
        store: &mut MemoryStore,
        hook: &mut dyn InterventionHook,
        trace: &mut RunTrace,
    ) {
        trace.stages.push(Stage::Retrieve);
        let first = match retrieve_complete(&record.text, elements, store) {
            Ok(outcome) => outcome,
            Err(e) => {
                trace.failures.push(StageFailure {
                    stage: Stage::Retrieve,
                    message: e.to_string(),
                });
                return;
            }
        };
        let remaining = first.remaining().to_vec();
        let mut sources: BTreeMap<String, (Source, Option<String>)> = elements
            .iter()
            .filter(|e| !remaining.contains(e))
            .map(|e| (e.clone(), (Source::Memory, store.get(e).map(str::to_string))))
            .collect();
        trace.retrieval = Some(first);

        let mut failed = Vec::new();
        if !remaining.is_empty() {
            trace.stages.push(Stage::Explore);
            failed = self.explore(record, &remaining, store, &mut sources, trace);
        }

        if !failed.is_empty() {
            trace.stages.push(Stage::Intervene);
            for element in &failed {
                let supplied = hook.clarify(element, &record.text);
                trace.interventions.push(Intervention {
                    element: element.clone(),
                    supplied: supplied.clone(),
                });
                let stored = supplied
                    .as_deref()
                    .map(|v| store.store(element, v).map(|_| v.trim().to_string()));
                match stored {
                    Some(Ok(value)) => {
                        trace.memory_writes.push(MemoryWrite {
                            element: element.clone(),
                            value: value.clone(),
                            source: Source::Human,
                        });
                        sources.insert(element.clone(), (Source::Human, Some(value)));
                    }
                    Some(Err(e)) => {
                        trace.failures.push(StageFailure {
                            stage: Stage::Intervene,
                            message: e.to_string(),
                        });
                        sources.insert(element.clone(), (Source::Unresolved, None));
                    }
                    None => {
                        sources.insert(element.clone(), (Source::Unresolved, None));
                    }
                }
            }
        }

        trace.stages.push(Stage::Complete);
        match retrieve_complete(&record.text, elements, store) {
            Ok(outcome) => {
                trace.final_instruction = outcome.instruction(&record.text).to_string();
                trace.final_retrieval = Some(outcome);
            }
            Err(e) => trace.failures.push(StageFailure {
                stage: Stage::Complete,
                message: e.to_string(),
            }),
        }

        for e in elements {
            let (source, value) = sources.remove(e).unwrap_or((Source::Unresolved, None));
            trace.resolutions.push(Resolution {
                element: e.clone(),
                source,
                value,
            });
        }
    }

    /// Plans and runs exploration; returns the elements it failed to resolve.
    fn explore(
        &self,
        record: &Instruction,
        remaining: &[String],
        store: &mut MemoryStore,
        sources: &mut BTreeMap<String, (Source, Option<String>)>,
        trace: &mut RunTrace,
    ) -> Vec<String> {
        let fail = |trace: &mut RunTrace, message: String| {
            trace.failures.push(StageFailure {
                stage: Stage::Explore,
                message,
            })
        };
        let apps = self.device.installed_apps();
        let mut plan_trace = PlanTrace {
            unresolved: remaining.to_vec(),
            raw: None,
            instructions: Vec::new(),
        };
        let planned = plan_exploration(&record.text, remaining, &apps, self.backend, &self.config);
        let instructions = match planned {
            Ok(p) => {
                plan_trace.raw = Some(p.raw);
                match p.plan {
                    Ok(instructions) => instructions,
                    Err(e) => {
                        fail(trace, e.to_string());
                        Vec::new()
                    }
                }
            }
            Err(e) => {
                fail(trace, e.to_string());
                Vec::new()
            }
        };
        plan_trace.instructions = instructions.clone();
        trace.plan = Some(plan_trace);
        if instructions.is_empty() {
            return remaining.to_vec();
        }

        let mut failed = Vec::new();
        for instr in instructions {
            let (agent_output, report) = match run_on_device(self.device, &instr) {
                Ok((raw, report)) => (Some(raw), report),
                Err(e) => {
                    fail(trace, e.to_string());
                    (None, AgentReport::not_finished())
                }
            };
            let found = report.info().map(str::to_string);
            trace.attempts.push(ExplorationAttempt {
                element: instr.element.clone(),
                app: instr.app.clone(),
                instruction: instr.text.clone(),
                agent_output,
                report,
            });
            match found {
                Some(value) if store.store(&instr.element, &value).is_ok() => {
                    trace.memory_writes.push(MemoryWrite {
                        element: instr.element.clone(),
                        value: value.clone(),
                        source: Source::Exploration,
                    });
                    sources.insert(instr.element.clone(), (Source::Exploration, Some(value)));
                }
                _ => failed.push(instr.element),
            }
        }
        failed
    }

    fn attribute_gold(&self, record: &Instruction, trace: &mut RunTrace) {
        for gold in &record.gold_elements {
            let key = normalize(gold);
            let source = trace
                .resolutions
                .iter()
                .find(|r| normalize(&r.element) == key)
                .map_or(Source::Unresolved, |r| r.source);
            trace.gold_sources.insert(gold.clone(), source);
        }
        if let Some(e) = trace
            .gold_sources
            .iter()
            .find(|(_, s)| **s == Source::Unresolved)
            .map(|(e, _)| e.clone())
        {
            if trace.verdict.success {
                trace.verdict = ExecutionVerdict::failure(format!("unresolved element: {e}"));
            }
        }
    }

    /// Runs records in id order, threading `store` through them.
    ///
    /// With `fail_fast`, stops after the first record that recorded a stage
    /// failure.
    pub fn run_corpus(
        &self,
        records: &[Instruction],
        store: &mut MemoryStore,
        hook: &mut dyn InterventionHook,
        fail_fast: bool,
        mut progress: impl FnMut(Progress<'_>),
    ) -> Vec<RunTrace> {
        let mut ordered: Vec<&Instruction> = records.iter().collect();
        ordered.sort_by_key(|r| r.id);
        let total = ordered.len();
        let mut traces = Vec::with_capacity(total);
        for record in ordered {
            let trace = self.run_one(record, store, hook);
            let stop = fail_fast && trace.has_failures();
            traces.push(trace);
            progress(Progress {
                done: traces.len(),
                total,
                trace: traces.last().expect("just pushed"),
            });
            if stop {
                break;
            }
        }
        traces
    }
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("cannot access trace file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace on line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Newline-delimited JSON, one trace per line.
pub fn traces_to_jsonl(traces: &[RunTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        out.push_str(&t.to_json_line());
        out.push('\n');
    }
    out
}

pub fn traces_from_jsonl(source: &str) -> Result<Vec<RunTrace>, TraceIoError> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TraceIoError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_traces(path: impl AsRef<Path>, traces: &[RunTrace]) -> Result<(), TraceIoError> {
    let path = path.as_ref();
    std::fs::write(path, traces_to_jsonl(traces)).map_err(|source| TraceIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<RunTrace>, TraceIoError> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|source| TraceIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    traces_from_jsonl(&source)
}
