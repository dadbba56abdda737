//! Exploration planning: ask the model which installed app holds each missing
//! element, parse its one-line-per-element plan, and read the device agent's
//! terminal report.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

use crate::llm::{LlmBackend, LlmConfig, LlmError};
use crate::text::{contains_phrase, find_phrase, fill_slots, normalize};

pub const EXPLORATION_PROMPT: &str = "\
You need to assist me in completing an information exploration task. The specific task information is as follows:
You are currently controlling the user's phone to complete the personalized instruction {instruction}, but those personalized information: {search_element} (You only need to deal with the personalized elements in parentheses) in the instruction is missing.
I am now trying to obtain the precise information for these personalized elements from the user's phone.

It is known that the user's phone has the following apps:
{app_lists}

Please carefully consider the types of these apps and the information they may contain. For each personalized element, select the app that is most likely to store the corresponding precise information (note that each personalized element can only select one app, do not select multiple apps).

Output the same number of instructions as the number of personalized elements (do not output extra instructions, only output one instruction per personalized element, strictly forbidden to output extra instructions), each instruction should be in the format 'From the app XX, obtain the YY (the YY is personalized element and personalized element must be included in the sentence) XX information (here, XX is the type of information you need to obtain, for example From QQ, obtain the friend name information. please note one instruction per line)'.";

/// Guidance given to a device agent exploring one app.
pub const AGENT_GUIDANCE_PROMPT: &str = "\
You are assisting a user with a mobile command task.The user's instruction is: {instruction}.

You need to help the user find the corresponding information in this app based on their instructions. The following hints may help you better complete the task.

Hint 1: The information the user needs contains personalized elements, which have different meanings for different people, such as home, friends. Therefore, do not directly search for these terms.

Hint 2: When you find information marked with ... (ellipsis), you should try to obtain the full content of the information rather than directly outputting the information with ellipsis.

Hint 3: The user's original instruction is {instruction}. The information in this instruction may help you better find the information the user needs.

Remember that the above hints are only auxiliary information; you need to use your own judgment to determine if they are useful.

You need to use your thinking ability to first determine what information to find.

Note that for the task, more information is not necessarily better; rather, more concise information is better (for example, for home, you usually only need to find an address; for a good friend, you usually only need to find a name. For other types of information, think about what you need to find). Then find which information in this app is most likely to represent the information you need

If you believe all the requirements of the user's instruction have been completed and no further action is needed, you can choose this operation to terminate the process.Then your output format is Stop|Information (this information is the core part of what the user needs)";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("no unresolved elements to explore")]
    EmptyUnresolved,
    #[error("the device reports no installed apps")]
    EmptyAppList,
    #[error("plan has {found} instruction lines for {expected} unresolved elements")]
    CountMismatch { expected: usize, found: usize },
    #[error("line {line} is not of the form 'From the app <APP>, obtain ...': {text:?}")]
    UnparseableLine { line: usize, text: String },
    #[error("line {line} names app {app:?}, which is not installed")]
    UnknownApp { line: usize, app: String },
    #[error("line {line} mentions no unresolved element: {text:?}")]
    ElementUnmentioned { line: usize, text: String },
    #[error("line {line} mentions several unresolved elements: {elements:?}")]
    AmbiguousElement { line: usize, elements: Vec<String> },
    #[error("element {element:?} is targeted by more than one line")]
    DuplicateElement { element: String },
}

#[derive(Debug, Error)]
pub enum ExplorationError {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// One app-targeted retrieval directive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationInstruction {
    /// Spelled as in the installed-app list.
    pub app: String,
    /// Spelled as in the unresolved list.
    pub element: String,
    pub text: String,
}

impl ExplorationInstruction {
    /// The canonical directive for `element` in `app`.
    pub fn canonical(app: &str, element: &str) -> Self {
        ExplorationInstruction {
            app: app.to_string(),
            element: element.to_string(),
            text: format!("From the app {app}, obtain the {element} information."),
        }
    }
}

fn render_list(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("'{s}'")).collect();
    format!("[{}]", quoted.join(", "))
}

pub fn build_exploration_prompt(
    instruction: &str,
    unresolved: &[String],
    apps: &[String],
) -> Result<String, PlanError> {
    if unresolved.is_empty() {
        return Err(PlanError::EmptyUnresolved);
    }
    if apps.is_empty() {
        return Err(PlanError::EmptyAppList);
    }
    Ok(fill_slots(
        EXPLORATION_PROMPT,
        &[
            ("instruction", instruction),
            ("search_element", &render_list(unresolved)),
            ("app_lists", &render_list(apps)),
        ],
    ))
}

pub fn build_guidance_prompt(exploration: &ExplorationInstruction) -> String {
    fill_slots(AGENT_GUIDANCE_PROMPT, &[("instruction", &exploration.text)])
}

fn line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^from\s+(?:the\s+app\s+)?(.+?)\s*,\s*(?:obtain|retrieve)\s+(.+?)\s*$")
            .expect("valid plan regex")
    })
}

fn list_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:[-*•]|\d+[.)])\s*").expect("valid marker regex"))
}

/// Parses a plan into exactly one instruction per unresolved element, in the
/// order of `unresolved`.
///
/// Element spans that lie inside a longer mentioned element are ignored, so
/// "my friend" does not also count as a mention of "friend".
pub fn parse_exploration_plan(
    raw: &str,
    unresolved: &[String],
    apps: &[String],
) -> Result<Vec<ExplorationInstruction>, PlanError> {
    if unresolved.is_empty() {
        return Err(PlanError::EmptyUnresolved);
    }
    let lines: Vec<&str> = raw
        .lines()
        .map(|l| l.trim())
        .map(|l| l.trim_matches(|c| c == '"' || c == '\'' || c == '`').trim())
        .filter(|l| !l.is_empty())
        .collect();
    if lines.len() != unresolved.len() {
        return Err(PlanError::CountMismatch {
            expected: unresolved.len(),
            found: lines.len(),
        });
    }

    let mut slots: Vec<Option<ExplorationInstruction>> = vec![None; unresolved.len()];
    for (i, line) in lines.iter().enumerate() {
        let number = i + 1;
        let line = list_marker().replace(line, "").trim().to_string();
        let caps = line_regex()
            .captures(&line)
            .ok_or_else(|| PlanError::UnparseableLine {
                line: number,
                text: line.clone(),
            })?;
        let named = caps[1].trim();
        let app = apps
            .iter()
            .find(|a| normalize(a) == normalize(named))
            .ok_or_else(|| PlanError::UnknownApp {
                line: number,
                app: named.to_string(),
            })?;
        let tail = &caps[2];

        let mut mentions: Vec<(usize, Vec<std::ops::Range<usize>>)> = unresolved
            .iter()
            .enumerate()
            .map(|(k, e)| (k, find_phrase(tail, e)))
            .filter(|(_, ranges)| !ranges.is_empty())
            .collect();
        let snapshot = mentions.clone();
        mentions.retain(|(k, ranges)| {
            !snapshot.iter().any(|(other, outer)| {
                other != k
                    && normalize(&unresolved[*other]).len() > normalize(&unresolved[*k]).len()
                    && ranges
                        .iter()
                        .all(|r| outer.iter().any(|o| o.start <= r.start && r.end <= o.end))
            })
        });
        let k = match mentions.as_slice() {
            [] => {
                return Err(PlanError::ElementUnmentioned {
                    line: number,
                    text: line.clone(),
                })
            }
            [(k, _)] => *k,
            many => {
                return Err(PlanError::AmbiguousElement {
                    line: number,
                    elements: many.iter().map(|(k, _)| unresolved[*k].clone()).collect(),
                })
            }
        };
        if slots[k].is_some() {
            return Err(PlanError::DuplicateElement {
                element: unresolved[k].clone(),
            });
        }
        slots[k] = Some(ExplorationInstruction {
            app: app.clone(),
            element: unresolved[k].clone(),
            text: line.clone(),
        });
    }
    // counts match and no element repeats, so every slot is filled
    Ok(slots.into_iter().map(|s| s.expect("slot filled")).collect())
}

/// The raw plan text plus its parse.
#[derive(Debug, Clone)]
pub struct PlannedExploration {
    pub raw: String,
    pub plan: Result<Vec<ExplorationInstruction>, PlanError>,
}

/// Prompt, one backend call, parse.
pub fn plan_exploration(
    instruction: &str,
    unresolved: &[String],
    apps: &[String],
    backend: &dyn LlmBackend,
    config: &LlmConfig,
) -> Result<PlannedExploration, ExplorationError> {
    let prompt = build_exploration_prompt(instruction, unresolved, apps)?;
    let raw = backend.complete(&prompt, config)?;
    let plan = parse_exploration_plan(&raw, unresolved, apps);
    Ok(PlannedExploration { raw, plan })
}

/// A device agent's terminal output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentReport {
    finished: bool,
    info: Option<String>,
}

impl AgentReport {
    pub fn found(info: &str) -> Option<Self> {
        let info = info.trim();
        (!info.is_empty()).then(|| AgentReport {
            finished: true,
            info: Some(info.to_string()),
        })
    }

    pub fn not_finished() -> Self {
        AgentReport {
            finished: false,
            info: None,
        }
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    pub fn info(&self) -> Option<&str> {
        self.info.as_deref()
    }

    /// The `Stop|<info>` wire form, or `None` when not finished.
    pub fn render(&self) -> Option<String> {
        self.info.as_ref().map(|i| format!("Stop|{i}"))
    }
}

/// Reads `FINISH|info` or `Stop|info`; anything else is a not-finished report.
pub fn parse_agent_report(raw: &str) -> AgentReport {
    let trimmed = raw.trim();
    let Some((keyword, info)) = trimmed.split_once('|') else {
        return AgentReport::not_finished();
    };
    let keyword = keyword.trim();
    if keyword.eq_ignore_ascii_case("stop") || keyword.eq_ignore_ascii_case("finish") {
        AgentReport::found(info).unwrap_or_else(AgentReport::not_finished)
    } else {
        AgentReport::not_finished()
    }
}

/// Whether an instruction's text still names its element.
pub fn mentions_element(instr: &ExplorationInstruction) -> bool {
    contains_phrase(&instr.text, &instr.element)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TIKTOK: &str = "Open TikTok, search for a video about my school, and share it with my friend.";

    fn v(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn prompt_substitutes_all_slots() {
        let p = build_exploration_prompt(TIKTOK, &v(&["my friend"]), &v(&["WeChat", "QQ"])).unwrap();
        assert!(p.contains("one instruction per personalized element"));
        assert!(p.contains(&format!("personalized instruction {TIKTOK}, but")));
        assert!(p.contains("personalized information: ['my friend'] (You only"));
        assert!(p.contains("['WeChat', 'QQ']"));
        assert!(!p.contains("{instruction}") && !p.contains("{search_element}") && !p.contains("{app_lists}"));

        let two = build_exploration_prompt(TIKTOK, &v(&["my school", "my friend"]), &v(&["QQ"])).unwrap();
        assert!(two.contains("['my school', 'my friend']"));
    }

    #[test]
    fn prompt_preconditions() {
        assert_eq!(
            build_exploration_prompt(TIKTOK, &[], &v(&["QQ"])),
            Err(PlanError::EmptyUnresolved)
        );
        assert_eq!(
            build_exploration_prompt(TIKTOK, &v(&["my friend"]), &[]),
            Err(PlanError::EmptyAppList)
        );
    }

    #[test]
    fn parses_walkthrough_plan() {
        let plan = parse_exploration_plan(
            "From the app wechat, obtain my friend name information.",
            &v(&["my friend"]),
            &v(&["WeChat", "TikTok"]),
        )
        .unwrap();
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].app, "WeChat");
        assert_eq!(plan[0].element, "my friend");
        assert_eq!(plan[0].text, "From the app wechat, obtain my friend name information.");
        assert!(mentions_element(&plan[0]));
    }

    #[test]
    fn plan_follows_unresolved_order() {
        let raw = "1. From the app Taobao, obtain the my home address information.\n\n- From QQ, obtain the friend name information.";
        let plan = parse_exploration_plan(raw, &v(&["friend", "my home"]), &v(&["QQ", "Taobao"])).unwrap();
        assert_eq!(plan[0].app, "QQ");
        assert_eq!(plan[1].element, "my home");
    }

    #[test]
    fn nested_elements_resolve_to_longest() {
        let raw = "From the app Phone, obtain the Friend's phone number information.\nFrom the app WeChat, obtain the friend name information.";
        let plan = parse_exploration_plan(
            raw,
            &v(&["friend", "Friend's phone number"]),
            &v(&["Phone", "WeChat"]),
        )
        .unwrap();
        assert_eq!(plan[0].app, "WeChat");
        assert_eq!(plan[1].app, "Phone");
    }

    #[test]
    fn plan_errors_are_distinct() {
        let apps = v(&["WeChat", "Taobao"]);
        let one = v(&["my friend"]);
        assert_eq!(
            parse_exploration_plan(
                "From the app wechat, obtain my friend name information.\nFrom the app Taobao, obtain my friend name information.",
                &one,
                &apps
            ),
            Err(PlanError::CountMismatch { expected: 1, found: 2 })
        );
        assert!(matches!(
            parse_exploration_plan("Look in wechat for my friend", &one, &apps),
            Err(PlanError::UnparseableLine { line: 1, .. })
        ));
        assert_eq!(
            parse_exploration_plan("From the app Alipay, obtain my friend name information.", &one, &apps),
            Err(PlanError::UnknownApp { line: 1, app: "Alipay".into() })
        );
        assert!(matches!(
            parse_exploration_plan("From the app wechat, obtain the contact name information.", &one, &apps),
            Err(PlanError::ElementUnmentioned { line: 1, .. })
        ));
        let two = v(&["my friend", "my home"]);
        assert!(matches!(
            parse_exploration_plan(
                "From the app wechat, obtain my friend and my home information.\nFrom the app Taobao, obtain my home information.",
                &two,
                &apps
            ),
            Err(PlanError::AmbiguousElement { line: 1, .. })
        ));
        assert_eq!(
            parse_exploration_plan(
                "From the app wechat, obtain my friend information.\nFrom the app Taobao, obtain my friend information.",
                &two,
                &apps
            ),
            Err(PlanError::DuplicateElement { element: "my friend".into() })
        );
        assert_eq!(parse_exploration_plan("", &[], &apps), Err(PlanError::EmptyUnresolved));
    }

    #[test]
    fn agent_reports() {
        let r = parse_agent_report("Stop|jack");
        assert!(r.finished());
        assert_eq!(r.info(), Some("jack"));
        assert_eq!(r.render().as_deref(), Some("Stop|jack"));
        assert_eq!(parse_agent_report("FINISH|xi'an road 5").info(), Some("xi'an road 5"));
        assert_eq!(parse_agent_report("  finish | Tom \n").info(), Some("Tom"));
        for raw in ["I could not find it", "Stop|", "Stop|   ", "", "Done|x", "|x"] {
            assert_eq!(parse_agent_report(raw), AgentReport::not_finished(), "{raw:?}");
        }
        assert_eq!(parse_agent_report("Stop|a|b").info(), Some("a|b"));
    }

    #[test]
    fn canonical_instruction_parses_back() {
        let instr = ExplorationInstruction::canonical("QQ", "Friend's taboo");
        let plan = parse_exploration_plan(&instr.text, &v(&["Friend's taboo"]), &v(&["QQ"])).unwrap();
        assert_eq!(plan[0], instr);
    }

    #[test]
    fn guidance_prompt_names_instruction() {
        let p = build_guidance_prompt(&ExplorationInstruction::canonical("WeChat", "my friend"));
        assert!(p.contains("The user's instruction is: From the app WeChat, obtain the my friend information.."));
        assert!(p.contains("Stop|Information"));
    }
}
