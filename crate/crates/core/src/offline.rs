//! A deterministic, rule-based stand-in for the hosted model.
//!
//! It reads the task marker on each prompt and answers with simple lexical
//! heuristics, so the whole pipeline runs without network access. Answers
//! are extractive: sentences are copied from the supplied evidence, never
//! invented.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;

use crate::generation::{TASK_ANSWER_DOCUMENT, TASK_ANSWER_STRUCTURED, TASK_ANSWER_WEB};
use crate::eval::{TASK_MCQ, TASK_OPEN_ENDED};
use crate::llm::{task_of, ClientError, GenerationRequest, GenerativeModelClient};
use crate::sql::TASK_TEXT_TO_SQL;
use crate::text::analyze;
use crate::understanding::{TASK_CLASSIFY, TASK_REWRITE, TASK_TAGS};

const HAZARDS: &[&str] = &[
    "hurricane", "tropical storm", "storm surge", "flood", "flooding", "flash flood", "wildfire", "earthquake",
    "tornado", "drought", "tsunami", "winter storm", "heat wave", "landslide", "typhoon", "cyclone", "blizzard",
];

const NAMED_EVENTS: &[&str] = &[
    "harvey", "katrina", "ike", "rita", "ian", "sandy", "maria", "irma", "ida", "laura", "beryl", "michael", "allison",
];

const LOCATIONS: &[&str] = &[
    "houston", "harris county", "galveston", "texas", "gulf coast", "beaumont", "port arthur", "corpus christi",
    "louisiana", "new orleans", "florida", "miami", "tampa", "fort bend county", "brazoria county",
    "montgomery county", "baytown", "pasadena", "katy", "puerto rico", "california", "new york", "north carolina",
];

const DOMAIN_WORDS: &[&str] = &[
    "disaster", "emergency", "evacuation", "evacuate", "shelter", "fema", "damage", "outage", "power", "relief",
    "recovery", "preparedness", "warning", "watch", "insurance", "rain", "rainfall", "wind", "inundation",
    "hazard", "resilience", "mitigation", "response", "rescue", "casualties", "displaced",
];

const OUT_OF_SCOPE: &[&str] = &["predict", "forecast", "simulate", "simulation", "train a model", "machine learning"];

static NAMED_HAZARD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?i:hurricane|tropical storm|typhoon|cyclone)\s+([A-Z][a-z]+)\b").unwrap()
});
static COUNTY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Z][a-z]+) County\b").unwrap());
static UNIT_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\[(\d+)\] \(([^)]*)\) (.*)$").unwrap());
static OPTION_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([A-D])[.)]\s+(.*)$").unwrap());
static SENTENCE_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.!?](\s+|$)").unwrap());

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "and", "or", "is", "are", "was", "were", "be", "by",
    "what", "which", "who", "how", "why", "when", "where", "do", "does", "did", "i", "it", "that", "this", "with",
    "from", "as", "can", "about", "want", "know", "there", "me", "my", "you", "your", "should",
];

fn contains_word(haystack: &str, needle: &str) -> bool {
    let hay = format!(" {} ", analyze(haystack).join(" "));
    hay.contains(&format!(" {} ", analyze(needle).join(" ")))
}

fn content_terms(text: &str) -> HashSet<String> {
    analyze(text)
        .into_iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// `(disasters, locations)` mentioned in `text`, in a stable order.
pub fn lexicon_tags(text: &str) -> (Vec<String>, Vec<String>) {
    let mut disasters: Vec<String> = Vec::new();
    let push = |v: &mut Vec<String>, s: String| {
        if !v.contains(&s) {
            v.push(s);
        }
    };
    for c in NAMED_HAZARD.captures_iter(text) {
        let kind = c[0][..c[0].len() - c[1].len()].trim().to_lowercase();
        push(&mut disasters, format!("{kind} {}", c[1].to_lowercase()));
    }
    for name in NAMED_EVENTS {
        if contains_word(text, name) && !disasters.iter().any(|d| d.ends_with(&format!(" {name}"))) {
            push(&mut disasters, format!("hurricane {name}"));
        }
    }
    for h in HAZARDS {
        let covered = disasters.iter().any(|d| d.starts_with(h));
        if contains_word(text, h) && !covered {
            push(&mut disasters, (*h).to_owned());
        }
    }
    let mut locations = Vec::new();
    for l in LOCATIONS {
        if contains_word(text, l) {
            push(&mut locations, (*l).to_owned());
        }
    }
    for c in COUNTY.captures_iter(text) {
        push(&mut locations, c[0].to_lowercase());
    }
    (disasters, locations)
}

/// Text after the last line starting with `label`.
fn field<'p>(prompt: &'p str, label: &str) -> Option<&'p str> {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix(label))
        .map(str::trim)
}

fn units(prompt: &str) -> Vec<(String, String)> {
    prompt
        .lines()
        .filter_map(|l| UNIT_LINE.captures(l.trim()))
        .map(|c| (c[2].to_owned(), c[3].to_owned()))
        .collect()
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    for m in SENTENCE_END.find_iter(text) {
        let s = text[start..m.start() + 1].trim();
        if !s.is_empty() {
            out.push(s.to_owned());
        }
        start = m.end();
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest.to_owned());
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct RuleBasedModel;

impl RuleBasedModel {
    fn classify(&self, request: &str) -> String {
        let lower = request.to_lowercase();
        let has = |ws: &[&str]| ws.iter().any(|w| lower.contains(w));
        let (disasters, locations) = lexicon_tags(request);
        let domain = !has(OUT_OF_SCOPE) && (!disasters.is_empty() || has(DOMAIN_WORDS));
        let ty = if has(&[
            "how many", "how much", "number of", "largest", "highest", "lowest", "smallest", "most ", "least ",
            "total", "average", "rate", "percent", "maximum", "minimum", "rank", "top ",
        ]) {
            "quantitative"
        } else if has(&["why", "cause", "explain", "reason", "how does", "how did", "impact of", "effect of"]) {
            "explanatory"
        } else if has(&["what is", "what are", "define", "definition", "how to", "how should", "how can", "steps", "guideline"]) {
            "descriptive"
        } else if has(&["where", "which area", "which county", "which city"]) || !locations.is_empty() {
            "locational"
        } else if has(&["what about", "and there", "that event", "those"]) {
            "contextual"
        } else {
            "other"
        };
        let ambiguous = analyze(request).len() < 4 || ty == "contextual";
        format!("TYPE={ty};AMBIGUOUS={};DOMAIN={}", ambiguous as u8, domain as u8)
    }

    fn tags(&self, request: &str) -> String {
        let (d, l) = lexicon_tags(request);
        let list = |v: Vec<String>| if v.is_empty() { "none".to_owned() } else { v.join(", ") };
        format!("DISASTERS={};LOCATIONS={}", list(d), list(l))
    }

    /// Makes implicit references explicit using entities named in the
    /// conversation, most recent mention first.
    fn rewrite(&self, prompt: &str) -> String {
        let query = field(prompt, "Follow-up question:").unwrap_or("").to_owned();
        let history: String = prompt
            .lines()
            .filter(|l| l.starts_with('Q') || l.starts_with('A'))
            .collect::<Vec<_>>()
            .join("\n");
        let original = |tag: &str| -> String {
            // recover the original capitalization from the history
            let lower = history.to_lowercase();
            match lower.rfind(tag) {
                Some(i) if history.is_char_boundary(i) && history.is_char_boundary(i + tag.len()) => {
                    history[i..i + tag.len()].to_owned()
                }
                _ => tag.to_owned(),
            }
        };
        let (disasters, locations) = lexicon_tags(&history);
        let (qd, ql) = lexicon_tags(&query);
        let mut out = query.trim().trim_end_matches('?').to_owned();
        if let Some(loc) = locations.iter().find(|l| !ql.contains(l)) {
            let place = original(loc);
            let replaced = Regex::new(r"(?i)\bthere\b").unwrap().replace(&out, format!("in {place}")).into_owned();
            out = if replaced != out { replaced } else { format!("{out} in {place}") };
        }
        if let Some(d) = disasters.iter().find(|d| !qd.iter().any(|q| d.contains(q.as_str()))) {
            out = format!("{out} during {}", original(d));
        }
        format!("{out}?")
    }

    /// Maps phrases to aggregates over the schema lines in the prompt.
    fn text_to_sql(&self, prompt: &str) -> String {
        let question = field(prompt, "Question:").unwrap_or("");
        let q = question.to_lowercase();
        let schema_line = Regex::new(r"^([A-Za-z_][A-Za-z0-9_]*)\(([^)]*)\)$").unwrap();
        let tables: Vec<(String, Vec<String>)> = prompt
            .lines()
            .filter_map(|l| schema_line.captures(l.trim()))
            .map(|c| (c[1].to_owned(), c[2].split(',').map(|s| s.trim().to_owned()).collect()))
            .collect();
        let keys: Vec<String> = field(prompt, "Available join keys:")
            .map(|k| k.split(',').map(|s| s.trim().to_owned()).collect())
            .unwrap_or_default();

        let qterms = content_terms(question);
        let score = |col: &str| {
            analyze(&col.replace('_', " "))
                .iter()
                .filter(|t| qterms.contains(*t) || qterms.contains(&format!("{t}s")))
                .count()
        };
        let mut best: Option<(usize, &str, &str)> = None;
        for (t, cols) in &tables {
            for c in cols {
                if keys.iter().any(|k| k.eq_ignore_ascii_case(c)) {
                    continue;
                }
                let s = score(c);
                if s > 0 && best.is_none_or(|(b, _, _)| s > b) {
                    best = Some((s, t, c));
                }
            }
        }
        let has = |ws: &[&str]| ws.iter().any(|w| q.contains(w));
        let agg = if has(&["how many", "number of", "count"]) {
            "COUNT"
        } else if has(&["total", "sum"]) {
            "SUM"
        } else if has(&["average", "mean"]) {
            "AVG"
        } else if has(&["lowest", "smallest", "minimum", "least"]) {
            "MIN"
        } else {
            "MAX"
        };
        let Some((_, table, metric)) = best else {
            return "UNSUPPORTED: no matching column".to_owned();
        };
        let cols = &tables.iter().find(|(t, _)| t == table).unwrap().1;
        let group = [("zip", "zip_code"), ("tract", "GEOID_TRACT_20"), ("block group", "CBG_ID"), ("area", ""), ("region", "")]
            .iter()
            .find(|(w, _)| q.contains(w))
            .and_then(|(_, col)| {
                if col.is_empty() {
                    keys.iter().find(|k| cols.contains(k)).cloned()
                } else {
                    cols.iter().find(|c| c.eq_ignore_ascii_case(col)).cloned()
                }
            });
        let expr = if agg == "COUNT" { "COUNT(*)".to_owned() } else { format!("{agg}({metric})") };
        let dir = if agg == "MIN" { "ASC" } else { "DESC" };
        match group {
            Some(g) => format!("SELECT {g}, {expr} FROM {table} GROUP BY {g} ORDER BY {expr} {dir}"),
            None => format!("SELECT {expr} FROM {table}"),
        }
    }

    fn answer(&self, prompt: &str, task: &str) -> String {
        let question = field(prompt, "Question:").unwrap_or("");
        let evidence = units(prompt);
        if evidence.is_empty() {
            return "I could not find supporting evidence for this question, so I cannot answer it reliably.".into();
        }
        if task == TASK_ANSWER_STRUCTURED {
            let rows: Vec<&str> = evidence.iter().map(|(_, t)| t.as_str()).collect();
            let mut text = format!("According to the database records, the top result is {}.", rows[0]);
            if rows.len() > 1 {
                text.push_str(&format!(" It is followed by {}.", rows[1..rows.len().min(5)].join(", then ")));
            }
            return text;
        }
        let qterms = content_terms(question);
        let mut scored: Vec<(usize, usize, String)> = Vec::new();
        for (u, (_, text)) in evidence.iter().enumerate() {
            for s in sentences(text) {
                let overlap = content_terms(&s).intersection(&qterms).count();
                scored.push((overlap, u, s));
            }
        }
        // stable sort keeps evidence order among equal overlaps
        scored.sort_by_key(|s| std::cmp::Reverse(s.0));
        let picked: Vec<String> = scored.into_iter().take(3).map(|(_, _, s)| s).collect();
        let mut text = picked.join(" ");
        if task == TASK_ANSWER_WEB {
            text.push_str(" These points come from web search results and may be incomplete or uncertain.");
        }
        text
    }

    fn mcq(&self, prompt: &str) -> String {
        let context: String = units(prompt).into_iter().map(|(_, t)| t).collect::<Vec<_>>().join(" ");
        let ctx_terms = content_terms(&context);
        let mut best = ('A', 0usize);
        for l in prompt.lines() {
            if let Some(c) = OPTION_LINE.captures(l.trim()) {
                let overlap = content_terms(&c[2]).intersection(&ctx_terms).count();
                if overlap > best.1 {
                    best = (c[1].chars().next().unwrap(), overlap);
                }
            }
        }
        format!("Answer: {}", best.0)
    }
}

impl GenerativeModelClient for RuleBasedModel {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        let prompt = request.prompt.as_str();
        let task = task_of(prompt).unwrap_or("");
        let reply = match task {
            TASK_CLASSIFY => self.classify(field(prompt, "Request:").unwrap_or("")),
            TASK_TAGS => self.tags(field(prompt, "Request:").unwrap_or("")),
            TASK_REWRITE => self.rewrite(prompt),
            TASK_TEXT_TO_SQL => self.text_to_sql(prompt),
            TASK_MCQ => self.mcq(prompt),
            TASK_ANSWER_DOCUMENT | TASK_ANSWER_STRUCTURED | TASK_ANSWER_WEB => self.answer(prompt, task),
            TASK_OPEN_ENDED => self.answer(prompt, TASK_ANSWER_DOCUMENT),
            other => return Err(ClientError::NoFixture(format!("offline model has no rule for task `{other}`"))),
        };
        Ok(reply)
    }
}
