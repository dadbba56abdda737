//! Property tests for parsers, metrics and the judge.

use perpilot::dataset::{bundled_corpus, distribution_entropy, spearman_dlc, Corpus, Difficulty, Instruction};
use perpilot::exploration::{parse_agent_report, parse_exploration_plan, ExplorationInstruction};
use perpilot::memory::{retrieve_complete, MemoryStore, RetrievalOutcome};
use perpilot::perception::{parse_perception, PerceptionResult};
use perpilot::sim::{expected_completion, judge, Scenario};
use proptest::prelude::*;
use std::sync::OnceLock;

fn bundled() -> &'static (Corpus, Scenario) {
    static DATA: OnceLock<(Corpus, Scenario)> = OnceLock::new();
    DATA.get_or_init(|| (bundled_corpus(), Scenario::bundled_full()))
}

fn phrase() -> impl Strategy<Value = String> {
    "[a-z]{1,8}( [a-z]{1,8}){0,2}"
}

proptest! {
    #[test]
    fn agent_report_is_total(raw in ".*") {
        let r = parse_agent_report(&raw);
        if r.finished() {
            prop_assert!(r.info().is_some_and(|i| !i.trim().is_empty()));
        } else {
            prop_assert!(r.info().is_none());
        }
    }

    #[test]
    fn agent_report_reads_back_rendered(info in "[^|\n]*[a-zA-Z0-9][^\n]*") {
        let r = parse_agent_report(&format!("Stop|{info}"));
        prop_assert!(r.finished());
        prop_assert_eq!(parse_agent_report(&r.render().unwrap()), r);
    }

    #[test]
    fn perception_never_personalized_without_elements(raw in ".*") {
        if let Ok(p) = parse_perception(&raw) {
            prop_assert_eq!(p.is_personalized(), !p.elements().is_empty());
        }
    }

    #[test]
    fn perception_round_trips(elements in prop::collection::vec(phrase(), 0..5)) {
        let p = PerceptionResult::personalized(&elements).unwrap_or_else(PerceptionResult::explicit);
        prop_assert_eq!(parse_perception(&p.serialize()).unwrap(), p);
    }

    #[test]
    fn perception_yes_prefix_with_junk(tail in "[|\\s]*") {
        let raw = format!("Yes{tail}");
        prop_assert!(parse_perception(&raw).is_err());
    }

    #[test]
    fn plan_length_matches_or_errors(
        raw in "(From the app (QQ|WeChat|Taobao|Alipay), obtain (the )?(my friend|my home|mom|nothing)( name)? information\\.\n){0,4}",
        pick in prop::sample::subsequence(vec!["my friend", "my home", "mom"], 1..=3),
    ) {
        let unresolved: Vec<String> = pick.iter().map(|s| s.to_string()).collect();
        let apps = vec!["QQ".to_string(), "WeChat".to_string(), "Taobao".to_string()];
        if let Ok(plan) = parse_exploration_plan(&raw, &unresolved, &apps) {
            prop_assert_eq!(plan.len(), unresolved.len());
            for (instr, element) in plan.iter().zip(&unresolved) {
                prop_assert_eq!(&instr.element, element);
                prop_assert!(apps.contains(&instr.app));
                prop_assert!(perpilot::exploration::mentions_element(instr));
            }
        }
    }

    #[test]
    fn plan_of_arbitrary_text_never_truncates(raw in ".{0,200}", n in 1usize..4) {
        let unresolved: Vec<String> = ["a b", "c", "d e f"][..n].iter().map(|s| s.to_string()).collect();
        if let Ok(plan) = parse_exploration_plan(&raw, &unresolved, &["X".to_string()]) {
            prop_assert_eq!(plan.len(), n);
        }
    }

    #[test]
    fn canonical_plans_always_parse(
        elements in prop::collection::btree_set("[a-z]{3,8}", 1..4),
        app_pick in prop::collection::vec(0usize..3, 4),
    ) {
        let unresolved: Vec<String> = elements.into_iter().map(|e| format!("my {e}")).collect();
        let apps = vec!["QQ".to_string(), "WeChat".to_string(), "Taobao".to_string()];
        let lines: Vec<String> = unresolved
            .iter()
            .zip(&app_pick)
            .rev()
            .map(|(e, a)| ExplorationInstruction::canonical(&apps[*a], e).text)
            .collect();
        let plan = parse_exploration_plan(&lines.join("\n"), &unresolved, &apps).unwrap();
        prop_assert_eq!(plan.len(), unresolved.len());
    }

    #[test]
    fn entropy_ignores_order(mut counts in prop::collection::vec(0usize..50, 2..10), seed in any::<u64>()) {
        prop_assume!(counts.iter().sum::<usize>() > 0);
        let before = distribution_entropy(counts.clone()).unwrap();
        let len = counts.len();
        counts.rotate_left((seed as usize) % len);
        counts.reverse();
        let after = distribution_entropy(counts).unwrap();
        prop_assert!((before - after).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&before));
    }

    #[test]
    fn dlc_invariant_under_monotone_step_transform(
        rows in prop::collection::vec((0usize..3, 1u32..30), 4..30),
    ) {
        let make = |f: &dyn Fn(u32) -> u32| -> Vec<Instruction> {
            rows.iter()
                .enumerate()
                .map(|(i, (d, s))| Instruction {
                    id: i as u32 + 1,
                    text: "Open the app.".into(),
                    difficulty: Difficulty::ALL[*d],
                    min_steps: f(*s),
                    apps: vec!["QQ".into()],
                    completed_template: "Open the app.".into(),
                    gold_elements: vec![],
                    info_types: vec![],
                })
                .collect()
        };
        let base = spearman_dlc(&make(&|s| s));
        let transformed = spearman_dlc(&make(&|s| s * s * 3 + 7));
        match (base, transformed) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn judge_ignores_case_and_spacing(idx in 0usize..75, flips in prop::collection::vec(any::<bool>(), 200), pad in 1usize..4) {
        let (corpus, scenario) = bundled();
        let record = &corpus[idx];
        let expected = expected_completion(record, scenario).unwrap();
        let perturbed: String = expected
            .chars()
            .zip(flips.iter().cycle())
            .map(|(c, flip)| {
                let c = if *flip { c.to_uppercase().collect::<String>() } else { c.to_lowercase().collect() };
                if c == " " { " ".repeat(pad) } else { c }
            })
            .collect();
        let padded = format!("  {perturbed}  ");
        prop_assert!(judge(&padded, record, scenario).success);
    }

    #[test]
    fn retrieval_preserves_non_element_text(
        prefix in "[A-Za-z ,]{0,12}",
        middle in "[A-Za-z ,]{0,12}",
        known in any::<bool>(),
    ) {
        let text = format!("{prefix} my friend {middle} my home.");
        let elements = vec!["my friend".to_string(), "my home".to_string()];
        prop_assume!(perpilot::text::find_phrase(&text, "my friend").len() == 1);
        prop_assume!(perpilot::text::find_phrase(&text, "my home").len() == 1);
        let mut store = MemoryStore::default();
        if known {
            store.store("my friend", "jack").unwrap();
        }
        let outcome = retrieve_complete(&text, &elements, &store).unwrap();
        match outcome {
            RetrievalOutcome::Partial { instruction, remaining } => {
                prop_assert!(known);
                prop_assert_eq!(instruction, format!("{prefix} jack {middle} my home."));
                prop_assert_eq!(remaining, vec!["my home".to_string()]);
            }
            RetrievalOutcome::Missing { elements: e } => {
                prop_assert!(!known);
                prop_assert_eq!(e, elements);
            }
            RetrievalOutcome::Completed { .. } => prop_assert!(false),
        }
    }
}

#[test]
fn corpus_round_trips() {
    let corpus = bundled_corpus();
    let again = Corpus::from_json_str(&corpus.to_json_string()).unwrap();
    assert_eq!(again, corpus);
}
