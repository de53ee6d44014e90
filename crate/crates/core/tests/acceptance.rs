//! Acceptance suite. Every criterion runs with deterministic stubs only and
//! prints one PASS/FAIL line; the process exits non-zero if any fails.
//!
//! Run alone with `cargo test -p hazardline-core --test acceptance`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::useless_format, clippy::needless_range_loop)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use hazardline::context::{assemble_context, Difficulty, TaskKind, MCQ_CONTEXT_TOKENS, UNIT_TOKENS};
use hazardline::engine::Engine;
use hazardline::eval::synthetic::synthetic_suite;
use hazardline::eval::{keypoint_coverage, mcq_accuracy, mean_coverage, run_grid, Choice, GridSpec, OeItem, OracleJudge};
use hazardline::generation::TASK_ANSWER_STRUCTURED;
use hazardline::knowledge::{
    ingest_passages, load_structured_store, ColumnType, RawPassage, SchemaDecl, StructuredStore, TableDecl, Value,
};
use hazardline::llm::{RecordingClient, ScriptedClient};
use hazardline::memory::{MemoryEntry, QaPair, SessionMemory, REWRITE_TURNS};
use hazardline::offline::RuleBasedModel;
use hazardline::retrieval::{
    build_candidate_pool, build_indices, hybrid_merge, keyword_search, rerank, Channel, HashEmbedder, InvertedIndex,
    RerankScorer, ScoredPassage, ScorerError,
};
use hazardline::router::{route, Pathway};
use hazardline::sql::{validate_sql, RejectReason, Verdict, TASK_TEXT_TO_SQL};
use hazardline::text::count_tokens;
use hazardline::understanding::{
    rewrite_query, understand, EntityTags, QueryType, StructuredQueryRepresentation, TASK_REWRITE,
};
use hazardline::web::{FixtureSearchClient, WebSnippet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "metric exactness", budget: Duration::from_secs(1), run: metric_exactness },
        Criterion { name: "bm25 oracle equivalence", budget: Duration::from_secs(5), run: bm25_oracle },
        Criterion { name: "hybrid fusion", budget: Duration::from_secs(5), run: hybrid_fusion },
        Criterion { name: "rerank contract", budget: Duration::from_secs(30), run: rerank_contract },
        Criterion { name: "context budgets", budget: Duration::from_secs(5), run: context_budgets },
        Criterion { name: "sql guard", budget: Duration::from_secs(10), run: sql_guard },
        Criterion { name: "structured case: evacuation ranking", budget: Duration::from_secs(1), run: structured_case },
        Criterion { name: "web fallback case: flood inundation", budget: Duration::from_secs(1), run: web_case },
        Criterion { name: "routing totality", budget: Duration::from_secs(1), run: routing_totality },
        Criterion { name: "memory properties", budget: Duration::from_secs(5), run: memory_properties },
        Criterion { name: "grid shape: retrieval never below baseline", budget: Duration::from_secs(120), run: grid_shape },
        Criterion { name: "grid determinism", budget: Duration::from_secs(240), run: grid_determinism },
    ];

    // keep panic messages on the criterion line instead of interleaved
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    println!("\nrunning {} acceptance criteria", criteria.len());
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; exceeded budget {:?}", c.budget)),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS  {:<44} {:>9.3}s  {detail}", c.name, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<44} {:>9.3}s  {why}", c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("\nacceptance: {} passed, {failed} failed\n", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- metrics

fn metric_exactness() -> Outcome {
    let golds: Vec<Choice> = (0..25).map(|i| Choice::ALL[i % 4]).collect();
    let mut preds: Vec<Option<Choice>> = golds.iter().copied().map(Some).collect();
    // six misses: four wrong letters and two unparseable replies
    for i in 0..4 {
        preds[i] = Some(Choice::ALL[(i + 1) % 4]);
    }
    preds[10] = None;
    preds[20] = None;
    let acc = mcq_accuracy(&preds, &golds).map_err(|e| e.to_string())?;
    ensure!(acc == 0.76, "19/25 gave {acc}");
    let all: Vec<_> = golds.iter().copied().map(Some).collect();
    let full = mcq_accuracy(&all, &golds).map_err(|e| e.to_string())?;
    ensure!(full == 1.0, "all-correct gave {full}");
    ensure!(mcq_accuracy(&[], &[]).is_err(), "empty prediction set must be an error");

    let item = OeItem {
        id: "oe".into(),
        question: "What should an evacuation kit contain?".into(),
        gold_keypoints: vec!["water".into(), "medication".into(), "flashlight".into(), "cash".into()],
        difficulty: Difficulty::Medium,
    };
    let cov = keypoint_coverage(&item, "Pack water, your medication and a flashlight.", &OracleJudge)
        .map_err(|e| e.to_string())?;
    ensure!((cov - 0.75).abs() <= 1e-12, "3/4 coverage gave {cov}");
    let mean = mean_coverage(&[0.75, 0.5, 1.0, 0.25]).map_err(|e| e.to_string())?;
    ensure!((mean - 0.625).abs() <= 1e-12, "mean coverage gave {mean}");
    Ok("19/25 = 0.76, 25/25 = 1.0, 3/4 = 0.75".into())
}

// ---------------------------------------------------------------- bm25

fn corpus_of(texts: &[String]) -> hazardline::Corpus {
    ingest_passages(texts.iter().enumerate().map(|(i, t)| RawPassage {
        id: format!("d{i:02}"),
        text: t.clone(),
        source_id: String::new(),
        hazard_tags: vec![],
        location_tags: vec![],
    }))
    .unwrap()
}

fn oracle_terms(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Okapi BM25 by direct evaluation over raw documents; idf is the
/// non-negative `ln(1 + (N - df + 0.5) / (df + 0.5))` form, repeated
/// query terms count once.
fn okapi(query: &str, docs: &[String], k1: f64, b: f64) -> Vec<f64> {
    let docs: Vec<Vec<String>> = docs.iter().map(|d| oracle_terms(d)).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut q = oracle_terms(query);
    q.sort();
    q.dedup();
    docs.iter()
        .map(|d| {
            q.iter()
                .map(|t| {
                    let tf = d.iter().filter(|w| *w == t).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl))
                })
                .sum()
        })
        .collect()
}

fn bm25_oracle() -> Outcome {
    const VOCAB: &[&str] = &[
        "storm", "surge", "flood", "levee", "shelter", "evacuate", "wind", "rain", "harvey", "houston", "wildfire",
        "smoke", "tornado", "warning", "watch", "county", "road", "closed",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0xB225);
    let mut corpora: Vec<Vec<String>> = vec![
        vec!["storm surge flood".into(), "wildfire smoke".into()],
        vec![
            "Flood warning for Harris County until Friday.".into(),
            "A flood watch means flooding is possible; a flood warning means it is occurring.".into(),
            "Shelters open at the convention center.".into(),
            "Storm surge may reach 12 feet near Galveston.".into(),
        ],
    ];
    for size in [20, 15, 7] {
        corpora.push(
            (0..size)
                .map(|_| {
                    let len = rng.gen_range(1..25);
                    (0..len).map(|_| *VOCAB.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" ")
                })
                .collect(),
        );
    }
    let mut pairs = 0;
    let mut worst = 0.0f64;
    for docs in &corpora {
        let corpus = corpus_of(docs);
        let index = InvertedIndex::build(&corpus);
        let mut queries: Vec<String> = vec!["storm surge".into(), "flood warning".into(), "flood flood levee".into()];
        for _ in 0..12 {
            let len = rng.gen_range(1..5);
            queries.push((0..len).map(|_| *VOCAB.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" "));
        }
        for q in &queries {
            let expected = okapi(q, docs, 1.2, 0.75);
            let got: HashMap<String, f64> = keyword_search(q, docs.len(), &index)
                .into_iter()
                .map(|s| (s.passage_id, s.score))
                .collect();
            for (i, want) in expected.iter().enumerate() {
                let id = format!("d{i:02}");
                pairs += 1;
                match got.get(&id) {
                    Some(s) => {
                        ensure!(*want > 0.0, "{id} scored {s} for `{q}` but matches no query term");
                        worst = worst.max((s - want).abs());
                        ensure!((s - want).abs() <= 1e-6, "{id} `{q}`: {s} vs oracle {want}");
                    }
                    None => ensure!(*want == 0.0, "{id} missing for `{q}` (oracle {want})"),
                }
            }
        }
    }
    Ok(format!("{} corpora, {pairs} (query, passage) pairs, max |err| {worst:.2e}", corpora.len()))
}

// ---------------------------------------------------------------- fusion

fn sp(id: &str, channel: Channel, score: f64) -> ScoredPassage {
    ScoredPassage::new(id, channel, score)
}

fn sorted_by_rank(mut v: Vec<ScoredPassage>) -> Vec<ScoredPassage> {
    v.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.passage_id.cmp(&b.passage_id)));
    v
}

fn hybrid_fusion() -> Outcome {
    let kw = vec![sp("p1", Channel::Keyword, 4.0), sp("p2", Channel::Keyword, 2.0)];
    let vec = vec![sp("p2", Channel::Vector, 0.9), sp("p3", Channel::Vector, 0.45)];
    let merged = hybrid_merge(&kw, &vec);
    let got: Vec<(&str, f64)> = merged.iter().map(|s| (s.passage_id.as_str(), s.score)).collect();
    ensure!(got == [("p2", 0.75), ("p1", 0.5), ("p3", 0.25)], "fixture merged to {got:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(0xF05E);
    for case in 0..500 {
        let ids: Vec<String> = (0..rng.gen_range(1..30)).map(|i| format!("p{i:02}")).collect();
        let channel = |rng: &mut ChaCha8Rng, ch| -> Vec<ScoredPassage> {
            let mut out = Vec::new();
            for id in &ids {
                if rng.gen_bool(0.6) {
                    out.push(sp(id, ch, rng.gen_range(0.01..50.0)));
                }
            }
            out
        };
        let mut kw = channel(&mut rng, Channel::Keyword);
        let mut vec = channel(&mut rng, Channel::Vector);
        if case % 5 == 0 {
            // plant a passage that tops both channels
            let top = ids[0].clone();
            kw.retain(|s| s.passage_id != top);
            vec.retain(|s| s.passage_id != top);
            kw.push(sp(&top, Channel::Keyword, 100.0));
            vec.push(sp(&top, Channel::Vector, 100.0));
        }
        let merged = hybrid_merge(&kw, &vec);
        for s in &merged {
            ensure!(s.score > 0.0 && s.score <= 1.0, "case {case}: score {} out of (0,1]", s.score);
        }
        if case % 5 == 0 {
            ensure!(merged[0].passage_id == ids[0] && merged[0].score == 1.0, "case {case}: dual top got {:?}", merged[0]);
        }
        // one channel empty: same order, scores halved
        for single in [&kw, &vec] {
            let alone = hybrid_merge(single, &[]);
            let flipped = hybrid_merge(&[], single);
            let expected = sorted_by_rank(single.clone());
            let max = expected.first().map_or(1.0, |s| s.score);
            ensure!(alone == flipped, "case {case}: channel side changed the result");
            ensure!(alone.len() == expected.len(), "case {case}: lost passages");
            for (a, e) in alone.iter().zip(&expected) {
                ensure!(a.passage_id == e.passage_id, "case {case}: degenerate order differs");
                ensure!((a.score - 0.5 * e.score / max).abs() < 1e-12, "case {case}: score not halved");
            }
        }
    }
    Ok("fixture {p2: 0.75, p1: 0.5, p3: 0.25}; 500 randomized cases".into())
}

// ---------------------------------------------------------------- rerank

/// Hash-derived scores on a coarse grid so ties are common.
struct StubScorer;

fn stub_score(query: &str, passage: &str) -> f64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in query.bytes().chain([0xff]).chain(passage.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    (h % 9) as f64 / 8.0
}

impl RerankScorer for StubScorer {
    fn score(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>, ScorerError> {
        Ok(passages.iter().map(|p| stub_score(query, p)).collect())
    }
}

fn rerank_sweep(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texts: HashMap<String, String> =
        (0..300).map(|i| (format!("p{i:03}"), format!("passage {i} text {}", i * 7 % 13))).collect();
    let mut log = String::new();
    for case in 0..1000 {
        let n = rng.gen_range(0..250);
        let results: Vec<ScoredPassage> = (0..n)
            .map(|_| sp(&format!("p{:03}", rng.gen_range(0..300)), Channel::Keyword, rng.gen_range(0.0..10.0)))
            .collect();
        let pool = build_candidate_pool(&results, rng.gen_range(1..=200));
        let k = rng.gen_range(1..=20);
        let batch = rng.gen_range(1..=160);
        let query = format!("query {}", rng.gen_range(0..50));
        let out = rerank(&query, &pool, k, &StubScorer, batch, |id| texts.get(id).map(String::as_str));

        let pool_ids: HashSet<&str> = pool.entries.iter().map(|e| e.passage_id.as_str()).collect();
        ensure!(!out.degraded, "case {case}: degraded");
        ensure!(out.passages.len() == k.min(pool.len()), "case {case}: |out| {} for k {k}, |pool| {}", out.passages.len(), pool.len());
        ensure!(
            out.passages.iter().all(|p| pool_ids.contains(p.passage_id.as_str())),
            "case {case}: output not a subset of the pool"
        );
        let oracle: Vec<(String, f64)> = sorted_by_rank(
            pool.entries
                .iter()
                .map(|e| sp(&e.passage_id, Channel::Reranked, stub_score(&query, &texts[&e.passage_id])))
                .collect(),
        )
        .into_iter()
        .take(k)
        .map(|s| (s.passage_id, s.score))
        .collect();
        let got: Vec<(String, f64)> = out.passages.iter().map(|s| (s.passage_id.clone(), s.score)).collect();
        ensure!(got == oracle, "case {case}: {got:?} vs oracle {oracle:?}");
        log.push_str(&serde_json::to_string(&out).unwrap());
        log.push('\n');
    }
    Ok(log)
}

fn rerank_contract() -> Outcome {
    let a = rerank_sweep(0x5EED)?;
    let b = rerank_sweep(0x5EED)?;
    ensure!(a.as_bytes() == b.as_bytes(), "two runs differ");
    Ok(format!("1000 cases match the exhaustive oracle; runs identical ({} bytes)", a.len()))
}

// ---------------------------------------------------------------- context

fn words(n: usize, salt: usize) -> String {
    const W: &[&str] = &["surge", "ﬂood", "levee", "Ｈｏｕｓｔｏｎ", "shelter", "wind\u{a0}gust", "rain"];
    (0..n).map(|i| W[(i + salt) % W.len()]).collect::<Vec<_>>().join(if salt.is_multiple_of(3) { "  " } else { " \n" })
}

fn context_budgets() -> Outcome {
    let raw = |id: usize, text: String| RawPassage {
        id: format!("c{id}"),
        text,
        source_id: String::new(),
        hazard_tags: vec![],
        location_tags: vec![],
    };
    let boundary = ingest_passages((0..3).map(|i| raw(i, words(2500, 1)))).unwrap();
    let refs: Vec<_> = boundary.passages().iter().collect();
    let ctx = assemble_context(&refs, TaskKind::Mcq);
    let measured: usize = ctx.units.iter().map(|u| count_tokens(&u.text)).sum();
    ensure!(measured == 6000 && ctx.total_tokens == 6000, "3 x 2500 gave {measured} (reported {})", ctx.total_tokens);

    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
    let kinds = [
        TaskKind::Mcq,
        TaskKind::OpenEnded(Difficulty::Easy),
        TaskKind::OpenEnded(Difficulty::Extreme),
        TaskKind::Interactive,
    ];
    let mut max_mcq = 0;
    let mut max_unit = 0;
    for case in 0..400 {
        let n = rng.gen_range(1..12);
        let corpus = ingest_passages((0..n).map(|i| raw(i, words(rng.gen_range(1..3000), case + i)))).unwrap();
        let refs: Vec<_> = corpus.passages().iter().collect();
        for kind in kinds {
            let ctx = assemble_context(&refs, kind);
            let per_unit: Vec<usize> = ctx.units.iter().map(|u| count_tokens(&u.text)).collect();
            let total: usize = per_unit.iter().sum();
            ensure!(total == ctx.total_tokens, "case {case}: reported {} measured {total}", ctx.total_tokens);
            if kind == TaskKind::Mcq {
                ensure!(total <= MCQ_CONTEXT_TOKENS, "case {case}: MCQ context {total} tokens");
                max_mcq = max_mcq.max(total);
            } else {
                for &t in &per_unit {
                    ensure!(t <= UNIT_TOKENS, "case {case}: {kind:?} unit of {t} tokens");
                    max_unit = max_unit.max(t);
                }
            }
        }
    }
    Ok(format!("boundary = 6000; 400 random sets, max MCQ {max_mcq}, max unit {max_unit}"))
}

// ---------------------------------------------------------------- sql guard

fn harvey_store(extra_rows: bool) -> StructuredStore {
    let schema = SchemaDecl {
        tables: vec![
            TableDecl::new(
                "harvey_evacuation_data",
                &[("zip_code", ColumnType::Integer), ("evacuation_rate", ColumnType::Real)],
            ),
            TableDecl::new(
                "building_damage",
                &[
                    ("zip_code", ColumnType::Integer),
                    ("GEOID_TRACT_20", ColumnType::Text),
                    ("Adj_damage_amount", ColumnType::Real),
                ],
            ),
            TableDecl::new(
                "power_outage",
                &[("CBG_ID", ColumnType::Text), ("GEOID_TRACT_20", ColumnType::Text), ("Customers_Out", ColumnType::Integer)],
            ),
        ],
        join_keys: vec!["zip_code".into(), "GEOID_TRACT_20".into(), "CBG_ID".into()],
    };
    let row = |z: i64, r: f64| vec![Value::Integer(z), Value::Real(r)];
    let mut evac = vec![row(77061, 57.14), row(77025, 55.56), row(77005, 55.56)];
    if extra_rows {
        evac.extend([row(77061, 41.0), row(77002, 48.3), row(77025, 20.0), row(77005, 12.5)]);
    }
    let mut rows = BTreeMap::new();
    rows.insert("harvey_evacuation_data".to_owned(), evac);
    rows.insert(
        "building_damage".to_owned(),
        vec![
            vec![Value::Integer(77061), Value::Text("48201310100".into()), Value::Real(125000.0)],
            vec![Value::Integer(77025), Value::Text("48201411200".into()), Value::Real(98000.5)],
        ],
    );
    rows.insert(
        "power_outage".to_owned(),
        vec![vec![Value::Text("482013101001".into()), Value::Text("48201310100".into()), Value::Integer(340)]],
    );
    load_structured_store(schema, rows).unwrap()
}

const CONFORMANT: &[&str] = &[
    "SELECT zip_code, MAX(evacuation_rate) FROM harvey_evacuation_data GROUP BY zip_code ORDER BY MAX(evacuation_rate) DESC",
    "SELECT zip_code, evacuation_rate FROM harvey_evacuation_data",
    "SELECT * FROM building_damage",
    "SELECT COUNT(*) FROM power_outage",
    "SELECT COUNT(*) AS n FROM harvey_evacuation_data WHERE evacuation_rate >= 55",
    "SELECT AVG(evacuation_rate) FROM harvey_evacuation_data",
    "SELECT MIN(Adj_damage_amount), MAX(Adj_damage_amount) FROM building_damage",
    "SELECT zip_code FROM harvey_evacuation_data ORDER BY evacuation_rate DESC LIMIT 1",
    "SELECT DISTINCT zip_code FROM harvey_evacuation_data",
    "select zip_code, sum(Adj_damage_amount) as total from building_damage group by zip_code order by total desc",
    "SELECT GEOID_TRACT_20, SUM(Customers_Out) FROM power_outage GROUP BY GEOID_TRACT_20 HAVING SUM(Customers_Out) > 10",
    "SELECT h.zip_code, h.evacuation_rate, d.Adj_damage_amount FROM harvey_evacuation_data h JOIN building_damage d ON h.zip_code = d.zip_code",
    "SELECT d.zip_code, p.Customers_Out FROM building_damage d JOIN power_outage p ON d.GEOID_TRACT_20 = p.GEOID_TRACT_20",
    "SELECT h.zip_code FROM harvey_evacuation_data h LEFT JOIN building_damage d ON d.zip_code = h.zip_code WHERE d.zip_code IS NULL",
    "SELECT zip_code FROM harvey_evacuation_data WHERE zip_code IN (77061, 77005)",
    "SELECT zip_code FROM harvey_evacuation_data WHERE evacuation_rate BETWEEN 50 AND 56",
    "SELECT CBG_ID FROM power_outage WHERE CBG_ID LIKE '48201%'",
    "SELECT zip_code, ROUND(evacuation_rate) FROM harvey_evacuation_data",
    "SELECT zip_code, evacuation_rate / 100 AS share FROM harvey_evacuation_data ORDER BY 2 DESC",
    "SELECT zip_code FROM harvey_evacuation_data WHERE NOT evacuation_rate < 50 AND zip_code <> 77002",
    "SELECT COUNT(DISTINCT GEOID_TRACT_20) FROM building_damage",
    "SELECT zip_code FROM harvey_evacuation_data ORDER BY zip_code LIMIT 2 OFFSET 1",
    "  SELECT zip_code FROM harvey_evacuation_data;  ",
    "SELECT h.* FROM harvey_evacuation_data AS h WHERE h.evacuation_rate > 55.0",
];

const TABLES: &[&str] = &["harvey_evacuation_data", "building_damage", "power_outage", "sqlite_master", "users"];
const COLUMNS: &[&str] = &["zip_code", "evacuation_rate", "Adj_damage_amount", "Customers_Out", "CBG_ID"];

/// One hostile statement: a mutation/DDL/DCL form, optionally stacked
/// behind a conformant SELECT, with case, comment and spacing noise.
fn hostile(rng: &mut ChaCha8Rng) -> String {
    let t = *TABLES.choose(rng).unwrap();
    let t2 = *TABLES.choose(rng).unwrap();
    let c = *COLUMNS.choose(rng).unwrap();
    let n: u32 = rng.gen_range(0..10_000);
    let forms = [
        format!("DROP TABLE {t}"),
        format!("DROP TABLE IF EXISTS {t}"),
        format!("DROP VIEW v{n}"),
        format!("DELETE FROM {t}"),
        format!("DELETE FROM {t} WHERE {c} = {n}"),
        format!("UPDATE {t} SET {c} = {n}"),
        format!("UPDATE {t} SET {c} = NULL WHERE {c} > {n}"),
        format!("INSERT INTO {t} VALUES ({n})"),
        format!("INSERT INTO {t} ({c}) SELECT {c} FROM {t2}"),
        format!("INSERT OR REPLACE INTO {t} VALUES ({n})"),
        format!("REPLACE INTO {t} ({c}) VALUES ({n})"),
        format!("UPSERT INTO {t} VALUES ({n})"),
        format!("CREATE TABLE t{n} ({c} INTEGER)"),
        format!("CREATE TABLE t{n} AS SELECT * FROM {t}"),
        format!("CREATE VIEW v{n} AS SELECT {c} FROM {t}"),
        format!("CREATE TRIGGER g{n} AFTER INSERT ON {t} BEGIN DELETE FROM {t2}; END"),
        format!("ALTER TABLE {t} DROP COLUMN {c}"),
        format!("ALTER TABLE {t} RENAME TO {t2}"),
        format!("TRUNCATE {t}"),
        format!("GRANT ALL ON {t} TO analyst"),
        format!("REVOKE SELECT ON {t} FROM analyst"),
        format!("ATTACH DATABASE '/tmp/x{n}.db' AS x"),
        format!("DETACH DATABASE x"),
        format!("PRAGMA journal_mode = OFF"),
        format!("VACUUM INTO '/tmp/copy{n}.db'"),
        format!("REINDEX {t}"),
        format!("BEGIN; DELETE FROM {t}; COMMIT"),
        format!("SELECT {c} INTO t{n} FROM {t}"),
        format!("WITH w AS (SELECT {c} FROM {t}) DELETE FROM {t2}"),
        format!("WITH w AS (SELECT {c} FROM {t}) UPDATE {t2} SET {c} = 0"),
        format!("MERGE INTO {t} USING {t2} ON 1 = 1 WHEN MATCHED THEN DELETE"),
        format!("EXEC xp_cmdshell 'rm -rf /'"),
        format!("CALL purge_{t}()"),
        format!("LOAD DATA INFILE '/etc/passwd' INTO TABLE {t}"),
        format!("COPY {t} FROM '/tmp/evil.csv'"),
    ];
    let mut s = forms.choose(rng).unwrap().clone();
    match rng.gen_range(0..6) {
        0 => s = format!("{}; {s}", CONFORMANT.choose(rng).unwrap().trim().trim_end_matches(';')),
        1 => s = format!("{s}; {}", CONFORMANT.choose(rng).unwrap().trim()),
        2 => s = format!("/* harmless */ {s} -- done"),
        3 => s = format!("{s};\n{s};"),
        _ => {}
    }
    match rng.gen_range(0..3) {
        0 => s.to_lowercase(),
        1 => s
            .chars()
            .map(|ch| if rng.gen_bool(0.5) { ch.to_ascii_uppercase() } else { ch.to_ascii_lowercase() })
            .collect(),
        _ => s,
    }
}

fn sql_guard() -> Outcome {
    let store = harvey_store(false);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5A1);
    let fuzz: Vec<String> = (0..1000).map(|_| hostile(&mut rng)).collect();
    let accepted: Vec<&String> = fuzz.iter().filter(|s| validate_sql(s, &store).is_accepted()).collect();
    ensure!(accepted.is_empty(), "{} hostile inputs accepted, first: {}", accepted.len(), accepted[0]);

    for sql in CONFORMANT {
        let v = validate_sql(sql, &store);
        ensure!(v.is_accepted(), "conformant SELECT rejected: {sql}: {:?}", v.verdict);
    }

    let drop = validate_sql("DROP TABLE harvey_evacuation_data", &store);
    ensure!(
        matches!(drop.verdict, Verdict::Rejected(RejectReason::ForbiddenOperation(_))),
        "DROP TABLE gave {:?}",
        drop.verdict
    );
    Ok(format!("{} fuzz inputs, 0 accepted; {}/{} conformant accepted; DROP -> ForbiddenOperation", fuzz.len(), CONFORMANT.len(), CONFORMANT.len()))
}

// ---------------------------------------------------------------- case studies

const EVAC: &str = "Which area has the largest evacuation rate during Hurricane Harvey? I want to know it in zip code level";
const FLOOD: &str = "I want to predict the flood inundation depth of the road network in Houston assuming there will be a hurricane similar to Harvey";

fn small_corpus() -> hazardline::Corpus {
    let p = |id: &str, text: &str| RawPassage {
        id: id.into(),
        text: text.into(),
        source_id: format!("guides/{id}"),
        hazard_tags: vec![],
        location_tags: vec![],
    };
    ingest_passages(vec![
        p("watch", "A hurricane watch means hurricane conditions are possible within 48 hours."),
        p("kit", "An emergency kit should hold water, food and medicine for three days."),
        p("surge", "Storm surge is the abnormal rise of water generated by a storm."),
    ])
    .unwrap()
}

fn indexed_engine(model: Arc<dyn hazardline::GenerativeModelClient>) -> Engine {
    let corpus = small_corpus();
    let indices = build_indices(&corpus, &HashEmbedder::default()).unwrap();
    Engine::new(corpus, model).with_indices(indices)
}

fn structured_case() -> Outcome {
    let sql = "```sql\nSELECT zip_code, MAX(evacuation_rate) FROM harvey_evacuation_data \
               GROUP BY zip_code ORDER BY MAX(evacuation_rate) DESC LIMIT 3\n```";
    let scripted = ScriptedClient::new()
        .on(TASK_TEXT_TO_SQL, "harvey_evacuation_data", sql)
        .with_fallback(Arc::new(RuleBasedModel));
    let model = Arc::new(RecordingClient::new(scripted));
    let engine = indexed_engine(model.clone()).with_store(harvey_store(true));
    let mut memory = SessionMemory::default();
    let r = engine.handle_query(&mut memory, EVAC).map_err(|e| e.to_string())?;

    ensure!(r.pathway == Pathway::StructuredAccess, "pathway {}", r.pathway);
    ensure!(r.evidence_pathway == Pathway::StructuredAccess, "evidence from {}", r.evidence_pathway);
    ensure!(r.query_type == QueryType::Quantitative, "query type {:?}", r.query_type);
    let normalized = r.sql.as_deref().ok_or("no normalized SQL on a structured turn")?;
    ensure!(normalized.contains("harvey_evacuation_data"), "sql {normalized}");
    ensure!(r.sources.iter().any(|s| s == "3 rows"), "sources {:?}", r.sources);

    // the evidence handed to generation, in ranked order
    let answer_prompt = model
        .calls()
        .into_iter()
        .find(|c| c.task() == Some(TASK_ANSWER_STRUCTURED))
        .ok_or("structured answer prompt never issued")?
        .prompt;
    let lines: Vec<&str> = answer_prompt.lines().filter(|l| l.contains("zip_code: ")).collect();
    let expected = [
        "zip_code: 77061; MAX(evacuation_rate): 57.14",
        "zip_code: 77025; MAX(evacuation_rate): 55.56",
        "zip_code: 77005; MAX(evacuation_rate): 55.56",
    ];
    ensure!(lines.len() == 3, "evidence lines {lines:?}");
    for (line, want) in lines.iter().zip(expected) {
        ensure!(line.ends_with(want), "evidence `{line}`, expected `{want}`");
    }
    ensure!(r.answer_text.contains("77061"), "answer does not name 77061: {}", r.answer_text);
    ensure!(memory.len() == 1, "memory holds {} turns", memory.len());
    Ok("structured; 77061 @ 57.14, then 77025 and 77005 @ 55.56".into())
}

fn snippet(title: &str, url: &str, text: &str) -> WebSnippet {
    WebSnippet {
        title: title.into(),
        url: url.into(),
        snippet_text: text.into(),
    }
}

fn web_case() -> Outcome {
    let search = FixtureSearchClient::new(vec![
        snippet(
            "Flood inundation mapping with remote sensing",
            "https://example.org/houston-inundation",
            "Remote sensing and hydrological simulation support flood inundation mapping of Houston roads.",
        ),
        snippet(
            "Storm surge in Florida",
            "https://example.org/florida-surge",
            "Storm surge inundated coastal Florida communities after the hurricane.",
        ),
        snippet(
            "Hydrodynamic models for road flooding",
            "https://example.org/road-models",
            "Coupled hydrodynamic models estimate flood depth on road networks.",
        ),
    ]);
    let engine = indexed_engine(Arc::new(RuleBasedModel)).with_search(Arc::new(search));
    let mut memory = SessionMemory::default();
    let r = engine.handle_query(&mut memory, FLOOD).map_err(|e| e.to_string())?;
    ensure!(r.pathway == Pathway::WebFallback, "pathway {}", r.pathway);
    ensure!(!r.sources.is_empty(), "no sources");
    ensure!(!r.sources.iter().any(|s| s.contains("florida")), "Florida snippet kept: {:?}", r.sources);
    ensure!(r.sources.iter().any(|s| s.contains("houston-inundation")), "Houston snippet dropped: {:?}", r.sources);
    ensure!(!r.degraded, "web turn flagged degraded");
    Ok(format!("web; sources {:?}", r.sources))
}

// ---------------------------------------------------------------- routing

fn routing_totality() -> Outcome {
    let mut seen = 0;
    for ty in QueryType::ALL {
        for domain in [true, false] {
            let expected = match (domain, ty) {
                (false, _) => Pathway::WebFallback,
                (true, QueryType::Quantitative) => Pathway::StructuredAccess,
                (true, QueryType::Descriptive | QueryType::Explanatory) => Pathway::DocumentRetrieval,
                // remaining in-domain types default to document retrieval
                (true, _) => Pathway::DocumentRetrieval,
            };
            let decisions: HashSet<Pathway> = [false, true]
                .into_iter()
                .map(|ambiguous| {
                    route(&StructuredQueryRepresentation {
                        original_query: "q".into(),
                        rewritten_query: "q".into(),
                        query_type: ty,
                        is_ambiguous: ambiguous,
                        is_domain_relevant: domain,
                        entity_tags: EntityTags::default(),
                        degraded: false,
                    })
                    .pathway
                })
                .collect();
            ensure!(decisions.len() == 1, "{ty} domain={domain}: {decisions:?}");
            let got = *decisions.iter().next().unwrap();
            ensure!(got == expected, "{ty} domain={domain}: {got} expected {expected}");
            seen += 1;
        }
    }
    Ok(format!("{seen} combinations, one pathway each"))
}

// ---------------------------------------------------------------- memory

fn tag_overlap(stored: &[String], current: &[String]) -> bool {
    stored.iter().any(|s| {
        current
            .iter()
            .any(|c| !s.is_empty() && !c.is_empty() && (s.contains(c.as_str()) || c.contains(s.as_str())))
    })
}

fn memory_properties() -> Outcome {
    const DISASTERS: &[&str] = &["hurricane harvey", "harvey", "flood", "wildfire", "winter storm uri"];
    const PLACES: &[&str] = &["houston", "harris county", "texas", "galveston", "austin"];
    let mut rng = ChaCha8Rng::seed_from_u64(0x3E30);
    let pick = |rng: &mut ChaCha8Rng, from: &[&str]| -> Vec<String> {
        from.iter().filter(|_| rng.gen_bool(0.25)).map(|s| s.to_string()).collect()
    };

    let mut ops = 0;
    let (mut entity_hits, mut fallbacks) = (0, 0);
    for w in [1, 3, 10] {
        let mut mem = SessionMemory::new(w).unwrap();
        let mut log: Vec<MemoryEntry> = Vec::new();
        for step in 0..1000 / 3 + 1 {
            ops += 1;
            if rng.gen_bool(0.6) {
                let e = MemoryEntry {
                    user_query: format!("q{step}"),
                    answer: format!("a{step}"),
                    entity_tags: EntityTags::new(pick(&mut rng, DISASTERS), pick(&mut rng, PLACES)),
                    timestamp: step as u64 + 1,
                };
                mem.store(e.clone()).map_err(|e| e.to_string())?;
                log.push(e);
                ensure!(mem.len() <= w, "window {} exceeds W={w}", mem.len());
                ensure!(mem.len() == log.len().min(w), "window {} after {} stores", mem.len(), log.len());
            } else {
                let tags = EntityTags::new(pick(&mut rng, DISASTERS), pick(&mut rng, PLACES));
                let m = rng.gen_range(1..=4);
                let window: Vec<&MemoryEntry> = log.iter().rev().take(w).collect();
                let matching: Vec<&MemoryEntry> = window
                    .iter()
                    .copied()
                    .filter(|e| {
                        tag_overlap(&e.entity_tags.disaster_types, &tags.disaster_types)
                            || tag_overlap(&e.entity_tags.locations, &tags.locations)
                    })
                    .take(m)
                    .collect();
                let chosen = if matching.is_empty() {
                    fallbacks += 1;
                    window.into_iter().take(m).collect()
                } else {
                    entity_hits += 1;
                    matching
                };
                let expected: Vec<QaPair> = chosen.into_iter().rev().map(QaPair::from).collect();
                let got = mem.retrieve(&tags, m);
                ensure!(got == expected, "W={w} step {step}: {got:?} vs {expected:?}");
            }
        }
    }

    // the rewrite call never sees more than three prior turns
    let model = RecordingClient::new(RuleBasedModel);
    let mut rewrite_calls = 0;
    for n in 0..=12usize {
        let turns: Vec<QaPair> =
            (0..n).map(|i| QaPair { question: format!("question {i}"), answer: format!("answer {i}") }).collect();
        model.clear();
        rewrite_query("What about there?", &turns, &model);
        let mut mem = SessionMemory::new(12).unwrap();
        for (i, t) in turns.iter().enumerate() {
            mem.store(MemoryEntry {
                user_query: t.question.clone(),
                answer: t.answer.clone(),
                entity_tags: EntityTags::new(vec!["hurricane harvey".into()], vec!["houston".into()]),
                timestamp: i as u64 + 1,
            })
            .unwrap();
        }
        understand("How much rain fell in Houston during Hurricane Harvey?", &mem, &model);
        for call in model.calls().iter().filter(|c| c.task() == Some(TASK_REWRITE)) {
            rewrite_calls += 1;
            let shown = call.prompt.lines().filter(|l| l.starts_with('Q') && l.contains(": ")).count();
            ensure!(shown <= REWRITE_TURNS, "rewrite prompt carried {shown} turns with {n} available");
            ensure!(shown == n.min(REWRITE_TURNS), "rewrite prompt carried {shown} of {n} turns");
        }
    }
    ensure!(rewrite_calls > 0, "rewrite path never exercised");
    Ok(format!(
        "{ops} ops over W in {{1, 3, 10}}; {entity_hits} entity hits, {fallbacks} recency fallbacks; {rewrite_calls} rewrite prompts <= 3 turns"
    ))
}

// ---------------------------------------------------------------- grid

fn sweep(seed: u64) -> hazardline::eval::GridReport {
    let suite = synthetic_suite(seed);
    let embedder = HashEmbedder::default();
    let indices = build_indices(&suite.corpus, &embedder).unwrap();
    run_grid(
        &suite.tasks,
        &indices,
        &suite.corpus,
        &embedder,
        &hazardline::retrieval::OverlapScorer,
        &suite.model,
        &OracleJudge,
        &GridSpec::default(),
    )
}

fn grid_shape() -> Outcome {
    let report = sweep(2026);
    ensure!(report.cell_count() == 28, "{} cells", report.cell_count());
    let base = report.baseline.mcq_accuracy.ok_or("baseline has no MCQ accuracy")?;
    ensure!(report.baseline.mcq_items.len() == 20, "{} MCQ items", report.baseline.mcq_items.len());
    let mut worst = f64::INFINITY;
    for (label, cell) in &report.cells {
        ensure!(cell.error.is_none(), "{label} failed: {:?}", cell.error);
        let acc = cell.mcq_accuracy.ok_or_else(|| format!("{label} has no MCQ accuracy"))?;
        ensure!(acc >= base, "{label}: {acc} below baseline {base}");
        worst = worst.min(acc);
    }
    let best = report.summary().into_iter().find(|r| r.metric == "MCQ accuracy").ok_or("no summary row")?;
    Ok(format!(
        "28 cells; baseline {base:.2}, worst cell {worst:.2}, best {:.2} at {}",
        best.best, best.best_config
    ))
}

fn grid_determinism() -> Outcome {
    let a = sweep(99).to_json();
    let b = sweep(99).to_json();
    ensure!(a.as_bytes() == b.as_bytes(), "reports differ");
    Ok(format!("two sweeps byte-identical ({} bytes)", a.len()))
}
