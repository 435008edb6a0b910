//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chronicle_core::cache::DiskCache;
use chronicle_core::cognition::merge_metadata;
use chronicle_core::date::CalendarDate;
use chronicle_core::evaluation::{
    agree_f1, align_f1, concat_f1, date_f1, max_weight_assignment, rouge_f1, tokenize, EvalTimeline, MetricValues,
};
use chronicle_core::model::{
    DatedEvent, DeficiencyKind, EventMetadata, GlobalEventMemory, SourceRef, SubTimeline, TimelineEntry,
    TimelineMemory,
};
use chronicle_core::orchestrator::{ActionKind, RunManifest, TerminationReason};
use chronicle_core::retrieval::{Document, LocalBackend, RemoteSearch, SearchBackend};
use chronicle_core::supervisor::{analyze, SupervisorThresholds};
use chronicle_core::testkit::{StubResponse, StubServer};
use chronicle_core::updater::{merge_deterministic, satisfies_no_loss};
use chronicle_core::workbench::{load_manifest, MANIFEST_JSONL, TIMELINE_JSON};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn chronicle(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_chronicle"))
        .args(args)
        .env_remove("LLM_ENDPOINT")
        .env_remove("LLM_API_KEY")
        .env_remove("SEARCH_API_KEY")
        .output()
        .map_err(|e| format!("spawning chronicle: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "chronicle {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn day(s: &str) -> CalendarDate {
    s.parse().unwrap()
}

fn tl(items: &[(&str, &str)]) -> EvalTimeline {
    EvalTimeline::new(items.iter().map(|(d, s)| (day(d), s.to_string())))
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

// 1
fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let r1 = rouge_f1(&tokenize("the cat sat"), &tokenize("the cat ran"), 1);
    ensure(close(r1, 2.0 / 3.0), || format!("ROUGE-1 F1 {r1}, expected 2/3"))?;
    let d = date_f1(&tl(&[("2020-01-01", "a"), ("2020-02-01", "b")]), &tl(&[("2020-01-01", "c")]));
    ensure(close(d, 2.0 / 3.0), || format!("Date F1 {d}, expected 2/3"))?;
    let shifted = tl(&[("2020-01-02", "apple unveils mac studio")]);
    let reference = tl(&[("2020-01-01", "apple unveils mac studio")]);
    let a = align_f1(&shifted, &reference, 1);
    ensure(close(a, 0.5), || format!("Align F1 {a}, expected 1/2"))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("ROUGE-1 {r1:.6}, Date F1 {d:.6}, Align F1 {a:.6}"))
}

fn brute_force(w: &[Vec<f64>]) -> f64 {
    // Every partial matching, each total summed in row order.
    fn go(w: &[Vec<f64>], row: usize, used: &mut [bool], picked: &mut Vec<f64>, best: &mut f64) {
        if row == w.len() {
            *best = best.max(picked.iter().sum());
            return;
        }
        go(w, row + 1, used, picked, best);
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                picked.push(w[row][j]);
                go(w, row + 1, used, picked, best);
                picked.pop();
                used[j] = false;
            }
        }
    }
    let cols = w.first().map_or(0, Vec::len);
    let mut best = 0.0;
    go(w, 0, &mut vec![false; cols], &mut Vec::new(), &mut best);
    best
}

// 2
fn assignment_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trials = 250;
    for t in 0..trials {
        let rows = rng.gen_range(1..=6);
        let cols = rng.gen_range(1..=6);
        let w: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| match rng.gen_range(0..4) {
                        0 => 0.0,
                        1 => rng.gen_range(1..4) as f64 / 4.0,
                        _ => rng.gen::<f64>(),
                    })
                    .collect()
            })
            .collect();
        let got = max_weight_assignment(&w).total;
        let want = brute_force(&w);
        ensure(got == want, || format!("trial {t}: solver {got}, enumeration {want} on {w:?}"))?;
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("{trials} matrices up to 6x6 match enumeration"))
}

fn random_words(rng: &mut ChaCha8Rng, letters: &[u8], n: usize) -> String {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..7);
            (0..len).map(|_| *letters.choose(rng).unwrap() as char).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_timeline(rng: &mut ChaCha8Rng, year: i32, letters: &[u8]) -> EvalTimeline {
    let n = rng.gen_range(1..6);
    let mut days = BTreeSet::new();
    while days.len() < n {
        days.insert(rng.gen_range(1..=28u32) + 100 * rng.gen_range(1..=12u32));
    }
    EvalTimeline::new(days.into_iter().map(|md| {
        let date = day(&format!("{year}-{:02}-{:02}", md / 100, md % 100));
        let words = rng.gen_range(2..9);
        (date, random_words(rng, letters, words))
    }))
}

// 3
fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let low: Vec<u8> = (b'a'..=b'm').collect();
    let high: Vec<u8> = (b'n'..=b'z').collect();
    for i in 0..100 {
        let p = random_timeline(&mut rng, 2020, &low);
        let same = MetricValues::compute(&p, &p);
        ensure(same.as_array().iter().all(|v| close(*v, 1.0)), || {
            format!("instance {i}: identical timelines scored {same:?}")
        })?;
        let q = random_timeline(&mut rng, 2021, &high);
        let disjoint = MetricValues::compute(&p, &q);
        ensure(disjoint.as_array().iter().all(|v| *v == 0.0), || {
            format!("instance {i}: disjoint timelines scored {disjoint:?}")
        })?;
        let r = random_timeline(&mut rng, 2020, &low);
        for n in [1, 2] {
            for (a, b) in [(&p, &r), (&r, &p)] {
                let (ag, al) = (agree_f1(a, b, n), align_f1(a, b, n));
                ensure(ag <= al + 1e-9, || format!("instance {i}: agree {ag} > align {al} (n={n})"))?;
            }
        }
        let c = concat_f1(&p, &r, 1);
        ensure((0.0..=1.0).contains(&c), || format!("instance {i}: concat {c} out of range"))?;
    }
    Ok("100 instances: identity = 1, disjoint = 0, agree <= align".into())
}

fn strip_timestamps(manifest: &RunManifest) -> String {
    manifest
        .comparable()
        .iter()
        .map(|v| serde_json::to_string(v).unwrap())
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

fn golden_run(out: &Path) -> Result<(), String> {
    let f = fixtures();
    chronicle(&[
        "run",
        "--config",
        &path_str(&f.join("golden.toml")),
        "--scenario",
        &path_str(&f.join("scenario.json")),
        "--corpus",
        &path_str(&f.join("corpus.jsonl")),
        "--out",
        &path_str(out),
    ])
    .map(|_| ())
}

// 4
fn golden_determinism() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    golden_run(&a)?;
    golden_run(&b)?;
    let read = |p: PathBuf| std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()));
    let (ta, tb) = (read(a.join(TIMELINE_JSON))?, read(b.join(TIMELINE_JSON))?);
    ensure(ta == tb, || "timeline.json differs between runs".into())?;
    let ma = load_manifest(&a.join(MANIFEST_JSONL)).map_err(|e| e.to_string())?;
    let mb = load_manifest(&b.join(MANIFEST_JSONL)).map_err(|e| e.to_string())?;
    let (sa, sb) = (strip_timestamps(&ma), strip_timestamps(&mb));
    ensure(sa == sb, || "manifest.jsonl differs between runs".into())?;

    let golden = fixtures().join("golden");
    if std::env::var_os("CHRONICLE_BLESS").is_some() {
        std::fs::create_dir_all(&golden).map_err(|e| e.to_string())?;
        std::fs::write(golden.join(TIMELINE_JSON), &ta).map_err(|e| e.to_string())?;
        std::fs::write(golden.join("manifest.comparable.jsonl"), &sa).map_err(|e| e.to_string())?;
    }
    ensure(read(golden.join(TIMELINE_JSON))? == ta, || {
        "timeline.json differs from the shipped golden copy".into()
    })?;
    ensure(read(golden.join("manifest.comparable.jsonl"))? == sa, || {
        "manifest differs from the shipped golden copy".into()
    })?;

    ma.validate().map_err(|e| e.to_string())?;
    let iterations = ma.iterations().len();
    let searches = ma.actions(ActionKind::Search);
    let updates = ma.actions(ActionKind::UpdateTimeline);
    let reason = ma.termination();
    ensure(
        iterations == 2 && searches == 3 && updates == 2 && reason == Some(TerminationReason::SupervisorTerminate),
        || format!("shape: {iterations} iterations, {searches} searches, {updates} updates, {reason:?}"),
    )?;
    within(start, Duration::from_secs(10))?;
    Ok(format!(
        "{iterations} iterations, {searches} searches, {updates} updates, supervisor terminate; byte-identical"
    ))
}

const VOCAB: [&str; 16] = [
    "storm", "coast", "officials", "warned", "towns", "rain", "flood", "bridge", "closed", "power", "restored",
    "crews", "river", "rose", "evacuation", "ordered",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(3..8);
    let words: Vec<&str> = (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

fn random_day(rng: &mut ChaCha8Rng) -> CalendarDate {
    day(&format!("2019-09-{:02}", rng.gen_range(1..=12)))
}

fn random_memory(rng: &mut ChaCha8Rng) -> (TimelineMemory, Vec<(CalendarDate, String)>) {
    let mut dates = BTreeSet::new();
    for _ in 0..rng.gen_range(0..6) {
        dates.insert(random_day(rng));
    }
    let mut originals = Vec::new();
    let entries = dates
        .into_iter()
        .map(|d| {
            let sentences: Vec<String> = (0..rng.gen_range(1..4)).map(|_| sentence(rng)).collect();
            for s in &sentences {
                originals.push((d, s.clone()));
            }
            let mut e = TimelineEntry::new(d, &sentences.join(" ")).unwrap();
            e.support = vec![SourceRef::new(format!("doc{}", rng.gen_range(0..5)), 0)];
            e
        })
        .collect();
    (TimelineMemory { entries, revision: 1 }, originals)
}

fn random_sub(rng: &mut ChaCha8Rng, memory: &[(CalendarDate, String)]) -> SubTimeline {
    let mut by_date = std::collections::BTreeMap::new();
    for _ in 0..rng.gen_range(1..5) {
        let (d, s) = if !memory.is_empty() && rng.gen_bool(0.4) {
            memory.choose(rng).unwrap().clone()
        } else {
            (random_day(rng), sentence(rng))
        };
        by_date.entry(d).or_insert_with(Vec::new).push(s);
    }
    SubTimeline {
        entries: by_date
            .into_iter()
            .map(|(d, s)| TimelineEntry::new(d, &s.join(" ")).unwrap())
            .collect(),
    }
}

// 5
fn no_loss_merge() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xi = GlobalEventMemory::default();
    for i in 0..500 {
        let (memory, originals) = random_memory(&mut rng);
        let sub = random_sub(&mut rng, &originals);
        let merged = merge_deterministic(&memory, &sub, &xi, 2, 0.8);
        let dates: Vec<CalendarDate> = merged.entries.iter().map(|e| e.date).collect();
        ensure(dates.windows(2).all(|w| w[0] < w[1]), || format!("pair {i}: dates not unique and sorted"))?;
        for (d, s) in &originals {
            let kept = merged.entry(d).is_some_and(|e| e.summary.contains(s.as_str()));
            ensure(kept, || format!("pair {i}: sentence {s:?} on {d} was lost"))?;
        }
        for e in &sub.entries {
            ensure(merged.entry(&e.date).is_some(), || format!("pair {i}: sub date {} missing", e.date))?;
        }
        ensure(satisfies_no_loss(&memory, &merged, 0.5), || format!("pair {i}: no-loss check failed"))?;
        let again = merge_deterministic(&merged, &sub, &xi, 3, 0.8);
        ensure(again.entries == merged.entries, || format!("pair {i}: merge is not idempotent"))?;
    }
    Ok("500 pairs: no loss, unique dates, idempotent".into())
}

fn normalized(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .to_lowercase()
}

fn random_event(rng: &mut ChaCha8Rng, pool: &[DatedEvent]) -> DatedEvent {
    let support = vec![SourceRef::new(format!("doc{}", rng.gen_range(0..8)), rng.gen_range(0..3))];
    if !pool.is_empty() && rng.gen_bool(0.5) {
        let base = pool.choose(rng).unwrap();
        let mut text = base.description.clone();
        if rng.gen_bool(0.5) {
            text.push_str(&format!(" {}", VOCAB.choose(rng).unwrap()));
        }
        return DatedEvent::new(base.date, &text, vec![], support).unwrap();
    }
    let date = if rng.gen_bool(0.2) {
        day("2019-09")
    } else {
        random_day(rng)
    };
    DatedEvent::new(date, &sentence(rng), vec!["storm".into()], support).unwrap()
}

// 6
fn monotone_coverage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut memory = GlobalEventMemory::default();
    let mut calls = 0;
    while calls < 500 {
        if calls % 50 == 0 {
            memory = GlobalEventMemory::default();
        }
        let incoming: Vec<DatedEvent> = (0..rng.gen_range(0..5))
            .map(|_| random_event(&mut rng, &memory.events))
            .collect();
        let meta = EventMetadata::deduplicated("storm", incoming);
        let after = merge_metadata(&memory, &meta, 0.6);
        for e in &memory.events {
            let key = normalized(&e.description);
            let survivor = after
                .events
                .iter()
                .find(|a| a.date == e.date && (normalized(&a.description) == key || a.aliases.contains(&key)));
            let Some(survivor) = survivor else {
                return Err(format!("call {calls}: event {:?} on {} was lost", e.description, e.date));
            };
            ensure(survivor.salience >= e.salience, || {
                format!("call {calls}: salience of {:?} fell", e.description)
            })?;
        }
        memory = after;
        calls += 1;
    }
    Ok("500 updates: every event survives with non-decreasing salience".into())
}

fn entry(date: &str, summary: &str) -> TimelineEntry {
    TimelineEntry::new(day(date), summary).unwrap()
}

// 7
fn supervisor_relief() -> Outcome {
    let th = SupervisorThresholds::default();
    let long = "officials confirmed the storm reached the northern coast overnight";
    // 2020-01-01 plus 0, 10, 20 and 120 days
    let entries = ["2020-01-01", "2020-01-11", "2020-01-21", "2020-04-30"]
        .iter()
        .map(|d| entry(d, long))
        .collect();
    let sparse = TimelineMemory { entries, revision: 1 };
    let defs = analyze(&sparse, &GlobalEventMemory::default(), &th);
    let count = defs.iter().filter(|d| d.kind == DeficiencyKind::SparseRegion).count();
    ensure(count == 1 && defs.len() == 1, || format!("expected one sparse region, got {defs:?}"))?;
    ensure(defs == analyze(&sparse, &GlobalEventMemory::default(), &th), || "analysis is not deterministic".into())?;

    let planted = DatedEvent::new(
        day("2021-06-01"),
        "Volcanic eruption forces airline cancellations",
        vec![],
        vec![SourceRef::new("v", 0)],
    )
    .unwrap();
    let memory = GlobalEventMemory {
        events: vec![planted],
        revision: 0,
    };
    let mut timeline = TimelineMemory {
        entries: vec![entry("2020-01-01", long)],
        revision: 1,
    };
    let missing = |t: &TimelineMemory| {
        analyze(t, &memory, &th)
            .iter()
            .filter(|d| d.kind == DeficiencyKind::MissingEvent)
            .count()
    };
    ensure(missing(&timeline) == 1, || "planted event was not reported missing".into())?;
    timeline.entries.push(entry(
        "2021-06-01",
        "A volcanic eruption forces airlines to cancel hundreds of flights across the region",
    ));
    ensure(missing(&timeline) == 0, || "inserted entry did not relieve the deficiency".into())?;
    Ok("days {0,10,20,120} give one sparse region; missing event relieved".into())
}

// 8
fn budget_enforcement() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let f = fixtures();
    chronicle(&[
        "run",
        "--config",
        &path_str(&f.join("golden.toml")),
        "--scenario",
        &path_str(&f.join("scenario.json")),
        "--corpus",
        &path_str(&f.join("corpus.jsonl")),
        "--token-budget",
        "1",
        "--out",
        &path_str(tmp.path()),
    ])?;
    let m = load_manifest(tmp.path()).map_err(|e| e.to_string())?;
    m.validate().map_err(|e| format!("manifest invalid: {e}"))?;
    ensure(m.termination() == Some(TerminationReason::BudgetExceeded), || {
        format!("terminated with {:?}", m.termination())
    })?;
    let calls = m.calls().count();
    let usage = m.usage().unwrap_or_default();
    ensure(calls == 0 && usage.call_count == 0, || format!("{calls} calls recorded"))?;
    Ok("budget_exceeded with zero model calls; manifest valid".into())
}

// 9
fn retrieval_sanity() -> Outcome {
    let doc = |id: &str, body: &str| Document {
        doc_id: id.into(),
        title: String::new(),
        published: None,
        body: body.into(),
    };
    let local = LocalBackend::new(vec![
        doc("d1", "apple iphone launch"),
        doc("d2", "apple pie recipe"),
        doc("d3", "orange juice"),
    ])
    .map_err(|e| e.to_string())?;
    let hits = local.search("apple iphone", 10).map_err(|e| e.to_string())?;
    let ids: Vec<&str> = hits.iter().map(|h| h.doc_id.as_str()).collect();
    ensure(ids == ["d1", "d2"], || format!("ranking {ids:?}"))?;

    let body = r#"{"organic": [
        {"title": "Storm hits coast", "link": "https://example.com/1", "snippet": "The storm hit.", "date": "2019-09-01"},
        {"title": "Power restored", "link": "https://example.com/2", "snippet": "Crews restored power."}
    ]}"#;
    let server = StubServer::start(move |_| StubResponse::json(200, body));
    let cache_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let open = || DiskCache::open(cache_dir.path()).map_err(|e| e.to_string());
    let first = RemoteSearch::new(server.url("/search"), "test-key", Some(open()?)).map_err(|e| e.to_string())?;
    let live = first.search("storm coast", 2).map_err(|e| e.to_string())?;
    let before = server.request_count();
    let replay = RemoteSearch::new(server.url("/search"), "test-key", Some(open()?)).map_err(|e| e.to_string())?;
    let cached = replay.search("storm coast", 2).map_err(|e| e.to_string())?;
    ensure(live == cached, || "cached hits differ from live hits".into())?;
    ensure(server.request_count() == before && replay.network_calls() == 0, || {
        "cache replay touched the network".into()
    })?;
    Ok("d1 > d2, d3 absent; cache replay identical with zero requests".into())
}

fn baseline(method: &str, out: &Path) -> Result<RunManifest, String> {
    let f = fixtures();
    chronicle(&[
        "baseline",
        "--method",
        method,
        "--config",
        &path_str(&f.join("golden.toml")),
        "--scenario",
        &path_str(&f.join("baselines.json")),
        "--corpus",
        &path_str(&f.join("corpus.jsonl")),
        "--refs",
        &path_str(&f.join("refs.json")),
        "--out",
        &path_str(out),
    ])?;
    load_manifest(out).map_err(|e| e.to_string())
}

// 10
fn baseline_shapes() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let iter = baseline("iter_rag", &tmp.path().join("iter_rag"))?;
    let rounds = iter.retrievals().count();
    ensure(rounds == 5 && iter.iterations().len() == 5, || format!("iter_rag recorded {rounds} rounds"))?;
    let direct = baseline("direct", &tmp.path().join("direct"))?;
    let (retrievals, calls) = (direct.retrievals().count(), direct.calls().count());
    ensure(retrievals == 1 && calls == 1, || {
        format!("direct recorded {retrievals} retrievals and {calls} generations")
    })?;

    let reasoner = tmp.path().join("reasoner");
    golden_run(&reasoner)?;
    chronicle(&[
        "eval",
        "--pred",
        &path_str(&reasoner),
        "--refs",
        &path_str(&fixtures().join("refs.json")),
    ])?;
    let table = chronicle(&[
        "report",
        &path_str(&reasoner),
        &path_str(&tmp.path().join("direct")),
        &path_str(&tmp.path().join("iter_rag")),
    ])?;
    let lines: Vec<&str> = table.lines().collect();
    ensure(lines.len() == 5, || format!("report has {} lines:\n{table}", lines.len()))?;
    for header in ["method", "Align R-2", "Date F1", "total tokens"] {
        ensure(lines[0].contains(header), || format!("report header lacks {header:?}"))?;
    }
    for (line, method) in lines[2..].iter().zip(["timeline_reasoner", "direct", "iter_rag"]) {
        ensure(line.contains(method), || format!("row {line:?} lacks {method}"))?;
        let cells: Vec<&str> = line.split_whitespace().collect();
        let tokens: u64 = cells[cells.len() - 2].parse().map_err(|_| format!("bad token cell in {line:?}"))?;
        ensure(tokens > 0, || format!("row {line:?} reports no tokens"))?;
    }
    Ok("iter_rag 5 rounds; direct 1 retrieval + 1 generation; 3-run report".into())
}

// 11
fn ablation_sweep() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let f = fixtures();
    let mut settings = Vec::new();
    for v in [10, 20, 30, 40] {
        settings.push((v, 20));
    }
    for v in [10, 20, 30, 40] {
        settings.push((20, v));
    }
    for (i, (n_init, n_exp)) in settings.iter().enumerate() {
        let out = tmp.path().join(format!("sweep-{i}"));
        chronicle(&[
            "run",
            "--query",
            "Apple Mac Studio",
            "--n-init",
            &n_init.to_string(),
            "--n-exp",
            &n_exp.to_string(),
            "--max-iterations",
            "2",
            "--scenario",
            &path_str(&f.join("sweep.json")),
            "--corpus",
            &path_str(&f.join("corpus.jsonl")),
            "--out",
            &path_str(&out),
        ])?;
        let m = load_manifest(&out).map_err(|e| e.to_string())?;
        m.validate().map_err(|e| format!("run {i}: {e}"))?;
        let config = m.config().ok_or("no episode record")?;
        ensure(config.n_init == *n_init && config.n_exp == *n_exp, || {
            format!("run {i}: recorded n_init {} n_exp {}", config.n_init, config.n_exp)
        })?;
        let ks: Vec<usize> = m.retrievals().map(|r| r.k).collect();
        ensure(ks.first() == Some(n_init) && ks[1..].iter().all(|k| k == n_exp), || {
            format!("run {i}: retrieval depths {ks:?}")
        })?;
        ensure(m.termination().is_some(), || format!("run {i}: no end record"))?;
    }
    Ok(format!("{} manifests with configured n_init / n_exp", settings.len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("metric hand oracles", metric_oracles),
        ("assignment exactness", assignment_exactness),
        ("metric identities", metric_identities),
        ("golden episode determinism", golden_determinism),
        ("no-loss merge", no_loss_merge),
        ("global memory monotone coverage", monotone_coverage),
        ("supervisor determinism and relief", supervisor_relief),
        ("budget enforcement", budget_enforcement),
        ("retrieval sanity", retrieval_sanity),
        ("baseline shapes and report", baseline_shapes),
        ("ablation harness", ablation_sweep),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({:.2?})", i + 1, start.elapsed()),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {reason}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
