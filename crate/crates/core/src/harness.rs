//! Gold mock scripts: backend responses an ideal model would give for a
//! corpus under a scenario.

use crate::dataset::Corpus;
use crate::exploration::{build_exploration_prompt, ExplorationInstruction};
use crate::llm::MockScript;
use crate::perception::{build_perception_prompt, PerceptionResult};
use crate::sim::Scenario;

/// Exact-match entries for every perception prompt and for the exploration
/// prompt of every non-empty ordered subset of each record's gold elements.
pub fn gold_script(corpus: &Corpus, scenario: &Scenario) -> MockScript {
    let apps = scenario.installed_apps();
    let mut script = MockScript::new();
    for record in corpus.iter() {
        let Ok(prompt) = build_perception_prompt(&record.text) else {
            continue;
        };
        let verdict = PerceptionResult::personalized(&record.gold_elements)
            .unwrap_or_else(PerceptionResult::explicit);
        script = script.exact(prompt, verdict.serialize());

        let gold = &record.gold_elements;
        if apps.is_empty() || gold.len() >= usize::BITS as usize {
            continue;
        }
        for mask in 1usize..(1 << gold.len()) {
            let subset: Vec<String> = gold
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, e)| e.clone())
                .collect();
            let prompt = build_exploration_prompt(&record.text, &subset, &apps)
                .expect("non-empty subset and app list");
            let lines: Vec<String> = subset
                .iter()
                .map(|e| {
                    let app = scenario.locate(e).unwrap_or(&apps[0]);
                    ExplorationInstruction::canonical(app, e).text
                })
                .collect();
            script = script.exact(prompt, lines.join("\n"));
        }
    }
    script
}
