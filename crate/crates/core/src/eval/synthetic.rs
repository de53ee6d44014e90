//! Seeded synthetic evaluation suite: a 200-passage corpus, question sets
//! whose answers sit in one gold passage each, and a stub model that
//! answers correctly exactly when that passage reaches its context.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Choice, McqItem, OeItem, TaskSet, TASK_MCQ, TASK_OPEN_ENDED};
use crate::context::Difficulty;
use crate::knowledge::{ingest_passages, Corpus, RawPassage};
use crate::llm::{task_of, ClientError, GenerationRequest, GenerativeModelClient};

pub const PASSAGES: usize = 200;
pub const MCQ_ITEMS: usize = 20;
pub const OE_ITEMS: usize = 10;

const HAZARDS: &[&str] = &["flood", "hurricane", "wildfire", "earthquake", "tornado", "heat wave", "storm surge"];
const PLACES: &[&str] = &[
    "riverside", "harbor", "hillcrest", "lakeview", "meadow", "northgate", "oakridge", "pinecrest", "southbank",
    "westfield",
];
const NOUNS: &[&str] = &[
    "drainage capacity", "warning lead time", "levee height", "shelter staffing", "road clearance",
    "generator fuel", "radio coverage", "volunteer rosters", "sandbag stock", "medical supplies",
    "insurance uptake", "building codes", "tree trimming", "culvert maintenance", "school closures",
];
const DESTINATIONS: &[&str] = &[
    "the civic arena", "the county fairground", "the high school gym", "the convention center",
    "the university stadium", "the community college", "the regional airport hangar", "the armory",
];
const SUPPLIES: &[&str] = &[
    "three days of water", "prescription medicine", "a battery radio", "copies of identity documents",
    "a first aid kit", "pet carriers",
];

/// The suite plus the stub model that knows its answers.
pub struct SyntheticSuite {
    pub corpus: Corpus,
    pub tasks: TaskSet,
    pub model: SyntheticModel,
}

/// Answers an item correctly only when the item's gold sentence appears in
/// the prompt's context section. Otherwise MCQ replies are "A" and
/// open-ended replies carry no keypoints.
#[derive(Debug, Clone, Default)]
pub struct SyntheticModel {
    mcq: HashMap<String, (Choice, String)>,
    open_ended: HashMap<String, String>,
}

fn context_section(prompt: &str) -> &str {
    let start = prompt.find("\nContext:\n").map_or(prompt.len(), |i| i + 10);
    let end = prompt.rfind("\nQuestion: ").unwrap_or(prompt.len());
    if start < end {
        &prompt[start..end]
    } else {
        ""
    }
}

fn question_of(prompt: &str) -> &str {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Question: "))
        .unwrap_or("")
}

impl GenerativeModelClient for SyntheticModel {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        let p = &request.prompt;
        let ctx = context_section(p);
        match task_of(p) {
            Some(TASK_MCQ) => {
                let (gold, sentence) = self
                    .mcq
                    .get(question_of(p))
                    .ok_or_else(|| ClientError::NoFixture("unknown synthetic question".into()))?;
                let pick = if ctx.contains(sentence.as_str()) { *gold } else { Choice::A };
                Ok(format!("Answer: {pick}"))
            }
            Some(TASK_OPEN_ENDED) => {
                let sentence = self
                    .open_ended
                    .get(question_of(p))
                    .ok_or_else(|| ClientError::NoFixture("unknown synthetic question".into()))?;
                Ok(if ctx.contains(sentence.as_str()) {
                    sentence.clone()
                } else {
                    "No specific guidance is available for that order.".into()
                })
            }
            other => Err(ClientError::NoFixture(format!("synthetic model has no task {other:?}"))),
        }
    }
}

fn filler(rng: &mut ChaCha8Rng) -> String {
    let mut sentences = Vec::new();
    for _ in 0..rng.gen_range(2..5) {
        let h = HAZARDS.choose(rng).unwrap();
        let p = PLACES.choose(rng).unwrap();
        let a = NOUNS.choose(rng).unwrap();
        let b = NOUNS.choose(rng).unwrap();
        sentences.push(format!("{h} readiness in the {p} district depends on {a} and {b}."));
    }
    sentences.join(" ")
}

pub fn synthetic_suite(seed: u64) -> SyntheticSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw: Vec<RawPassage> = Vec::with_capacity(PASSAGES);
    let mut model = SyntheticModel::default();
    let mut tasks = TaskSet::default();

    for i in 0..MCQ_ITEMS {
        let code = format!("sp{:03}", 100 + i);
        let place = PLACES.choose(&mut rng).unwrap();
        let mut dests: Vec<&str> = DESTINATIONS.choose_multiple(&mut rng, 4).copied().collect();
        dests.shuffle(&mut rng);
        let gold = Choice::ALL[i % 4];
        let gold_dest = dests[i % 4];
        let sentence = format!("Shelter protocol {code} sends residents of the {place} district to {gold_dest}.");
        raw.push(RawPassage {
            id: format!("gold-mcq-{i:02}"),
            text: format!("{sentence} {}", filler(&mut rng)),
            source_id: format!("protocols/{code}"),
            hazard_tags: vec![],
            location_tags: vec![],
        });
        let question = format!("Under shelter protocol {code}, where do residents of the {place} district go?");
        model.mcq.insert(question.clone(), (gold, sentence));
        tasks.mcq.push(McqItem {
            id: format!("mcq-{i:02}"),
            question,
            options: Choice::ALL.iter().copied().zip(dests.iter().map(|d| d.to_string())).collect::<BTreeMap<_, _>>(),
            gold,
        });
    }

    let difficulties = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard, Difficulty::Extreme];
    for i in 0..OE_ITEMS {
        let code = format!("eo{:03}", 500 + i);
        let dest = DESTINATIONS.choose(&mut rng).unwrap();
        let supply = SUPPLIES.choose(&mut rng).unwrap();
        let sentence = format!("Evacuation order {code} requires households to bring {supply} and report to {dest}.");
        raw.push(RawPassage {
            id: format!("gold-oe-{i:02}"),
            text: format!("{sentence} {}", filler(&mut rng)),
            source_id: format!("orders/{code}"),
            hazard_tags: vec![],
            location_tags: vec![],
        });
        let question = format!("What does evacuation order {code} require of households?");
        model.open_ended.insert(question.clone(), sentence);
        tasks.open_ended.push(OeItem {
            id: format!("oe-{i:02}"),
            question,
            gold_keypoints: vec![supply.to_string(), dest.to_string()],
            difficulty: difficulties[i % 4],
        });
    }

    while raw.len() < PASSAGES {
        let n = raw.len();
        raw.push(RawPassage {
            id: format!("filler-{n:03}"),
            text: filler(&mut rng),
            source_id: format!("bulletins/{n:03}"),
            hazard_tags: vec![],
            location_tags: vec![],
        });
    }
    raw.shuffle(&mut rng);
    let corpus = ingest_passages(raw).expect("synthetic passages are valid");
    SyntheticSuite { corpus, tasks, model }
}
