//! Acceptance checks, one PASS/FAIL line per criterion. Run with
//! `cargo test -p atg-core --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use atg_core::baseline::{estimate_madip_rand, estimate_muip_rand, sample_pair_counts, Allocation};
use atg_core::encoder::{cluster_fixes, encode_sector, ContinuousSector, EncoderConfig};
use atg_core::geometry::{dist, off_node_crossings, polyline_length};
use atg_core::harness::{report, run_benchmark, run_refinement, RefinementStatus, RunOptions, Store, SuiteSpec};
use atg_core::llm::{extract_scenario_json, ChatMessage, Client, LlmError, MockFixture, MockStep, MockTransport, ProviderConfig};
use atg_core::metrics::normalized_skill;
use atg_core::model::{
    Aircraft, Benchmark, InteractionClass, Mechanism, NodeId, Point, RouteId, Scenario, SectorGraph, Speed,
};
use atg_core::prompting::{build_benchmark_prompt, Templates};
use atg_core::rollout::{detect_interactions, unique_pairs, RolloutConfig};
use atg_core::sectors::{generate, GridSize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn detector_matches_reference() -> Check {
    let params = Benchmark::TrafficVolume.params(8);
    let sectors = SuiteSpec::new(1).sectors(&params).map_err(|e| e.to_string())?;
    let levels = [280, 290, 300, 310, 320];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = Instant::now();
    let mut events_seen = 0;
    for i in 0..1000 {
        let g = &sectors[i % sectors.len()];
        let routes: Vec<&RouteId> = g.routes.keys().collect();
        let mut s = Scenario::new(12);
        for k in 0..rng.random_range(1..=8) {
            let speed = if rng.random_bool(0.5) { Speed::Fast } else { Speed::Slow };
            let a = Aircraft::new(&format!("AC{}", k + 1), rng.random_range(0..12), routes[rng.random_range(0..routes.len())].clone(), speed)
                .with_levels(levels[rng.random_range(0..5)], levels[rng.random_range(0..5)]);
            s.aircraft.push(a);
        }
        let events = detect_interactions(&s, g).map_err(|e| e.to_string())?;
        let got: BTreeSet<common::RefEvent> = events
            .iter()
            .map(|e| (e.t, e.pair.0.clone(), e.pair.1.clone(), e.mechanism, e.nodes.clone()))
            .collect();
        ensure(got.len() == events.len(), format!("scenario {i}: duplicate events"))?;
        let want = common::naive_events(&s, g);
        ensure(got == want, format!("scenario {i}: event sets differ"))?;
        let want_pairs: BTreeSet<(String, String)> = want.iter().map(|e| (e.1.clone(), e.2.clone())).collect();
        ensure(unique_pairs(&events) == want_pairs, format!("scenario {i}: unique pairs differ"))?;
        events_seen += events.len();
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(10), format!("took {}", secs(took)))?;
    Ok(format!("1000 scenarios, {events_seen} events, {}", secs(took)))
}

/// Row H0..H6 along y = 0 (E eastbound, W westbound) and a column V
/// crossing it at H3.
fn fixture_sector() -> SectorGraph {
    let mut g = SectorGraph::new(20.0);
    let row: Vec<NodeId> = (0..7).map(|i| NodeId::from(format!("H{i}").as_str())).collect();
    for (i, n) in row.iter().enumerate() {
        g.nodes.insert(n.clone(), Point::new(20.0 * i as f64, 0.0));
    }
    let mut col = Vec::new();
    for j in 0..7 {
        if j == 3 {
            col.push(row[3].clone());
            continue;
        }
        let n = NodeId::from(format!("V{j}").as_str());
        g.nodes.insert(n.clone(), Point::new(60.0, 20.0 * (j as f64 - 3.0)));
        col.push(n);
    }
    g.routes.insert("E".into(), row.clone());
    g.routes.insert("W".into(), row.into_iter().rev().collect());
    g.routes.insert("V".into(), col);
    g
}

fn interaction_fixtures() -> Check {
    let g = fixture_sector();
    let n = |s: &str| NodeId::from(s);
    type Expect = Vec<(u32, Mechanism, Vec<NodeId>, InteractionClass)>;
    // Expected events, read off the position tables in the comments.
    let cases: Vec<(&str, [Aircraft; 2], Expect)> = vec![
        // t:   0  1  2  3
        // AC1 H0 H1 H2 H3
        // AC2 H6 H5 H4 H3
        (
            "head-on, even gap",
            [Aircraft::new("AC1", 0, "E", Speed::Fast), Aircraft::new("AC2", 0, "W", Speed::Fast)],
            vec![(3, Mechanism::SameNode, vec![n("H3")], InteractionClass::HeadOn)],
        ),
        // t:   1  2  3  4
        // AC1 H1 H2 H3 H4
        // AC2 H6 H5 H4 H3
        (
            "head-on, odd gap",
            [Aircraft::new("AC1", 0, "E", Speed::Fast), Aircraft::new("AC2", 1, "W", Speed::Fast)],
            vec![(4, Mechanism::Swap, vec![n("H4"), n("H3")], InteractionClass::HeadOn)],
        ),
        // t:   3  4  5  6  7
        // AC1 H1 H2 H2 H3 H3
        // AC2 H0 H1 H2 H3 H4
        (
            "catch-up, odd spawn offset",
            [Aircraft::new("AC1", 0, "E", Speed::Slow), Aircraft::new("AC2", 3, "E", Speed::Fast)],
            vec![
                (5, Mechanism::SameNode, vec![n("H2")], InteractionClass::CatchUp),
                (6, Mechanism::SameNode, vec![n("H3")], InteractionClass::CatchUp),
            ],
        ),
        // t:   4  5  6  7  8  9
        // AC1 H1 H2 H2 H3 H3 H4
        // AC2 -  H0 H1 H2 H3 H4
        (
            "catch-up, even spawn offset",
            [Aircraft::new("AC1", 1, "E", Speed::Slow), Aircraft::new("AC2", 5, "E", Speed::Fast)],
            vec![
                (8, Mechanism::SameNode, vec![n("H3")], InteractionClass::CatchUp),
                (9, Mechanism::SameNode, vec![n("H4")], InteractionClass::CatchUp),
            ],
        ),
        // t:   2  3  4
        // AC1 H2 H3 H4
        // AC2 V2 H3 V4
        (
            "cross-path, fast/fast",
            [Aircraft::new("AC1", 0, "E", Speed::Fast), Aircraft::new("AC2", 0, "V", Speed::Fast)],
            vec![(3, Mechanism::SameNode, vec![n("H3")], InteractionClass::CrossPath)],
        ),
        // t:   5  6  7  8
        // AC1 H2 H3 H4 H5
        // AC2 V2 H3 H3 V4
        (
            "cross-path, fast/slow",
            [Aircraft::new("AC1", 3, "E", Speed::Fast), Aircraft::new("AC2", 0, "V", Speed::Slow)],
            vec![(6, Mechanism::SameNode, vec![n("H3")], InteractionClass::CrossPath)],
        ),
    ];
    for (name, aircraft, expect) in &cases {
        let mut s = Scenario::new(12);
        s.aircraft.extend(aircraft.iter().cloned());
        let got: Expect = detect_interactions(&s, &g)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|e| (e.t, e.mechanism, e.nodes, e.class))
            .collect();
        ensure(&got == expect, format!("{name}: got {got:?}"))?;
        let reference: Vec<(u32, Mechanism, Vec<NodeId>)> =
            common::naive_events(&s, &g).into_iter().map(|e| (e.0, e.3, e.4)).collect();
        let expected: Vec<(u32, Mechanism, Vec<NodeId>)> = expect.iter().map(|e| (e.0, e.1, e.2.clone())).collect();
        ensure(reference == expected, format!("{name}: reference disagrees"))?;
    }
    Ok(format!("{} variants", cases.len()))
}

fn encoder_fixture() -> Check {
    // Three nearby fixes (a1, b1, b2) shared by both routes, then B loops
    // round and crosses A again at (120, 0).
    let fixes = [
        ("a0", 0.0, 0.0),
        ("a1", 58.0, 2.0),
        ("a2", 120.0, 0.0),
        ("a3", 160.0, 0.0),
        ("b0", 60.0, -60.0),
        ("b1", 62.0, -4.0),
        ("b2", 60.0, 2.0),
        ("b3", 60.0, 40.0),
        ("b4", 120.0, 40.0),
        ("b5", 120.0, -40.0),
    ];
    let sector = ContinuousSector {
        fixes: fixes.iter().map(|(n, x, y)| (n.to_string(), Point::new(*x, *y))).collect(),
        routes: [
            ("A", vec!["a0", "a1", "a2", "a3"]),
            ("B", vec!["b0", "b1", "b2", "b3", "b4", "b5"]),
        ]
        .into_iter()
        .map(|(r, fs)| (RouteId::from(r), fs.into_iter().map(String::from).collect()))
        .collect(),
    };
    let cfg = EncoderConfig::default();
    let clusters = cluster_fixes(&sector, &cfg);
    let merged: Vec<&Vec<String>> = clusters.members.iter().filter(|m| m.len() > 1).collect();
    ensure(merged.len() == 1 && merged[0].len() == 3, format!("clusters {:?}", clusters.members))?;

    let g = encode_sector(&sector, &cfg).map_err(|e| e.to_string())?;
    let shared = g.intersection_nodes();
    ensure(shared.len() == 2, format!("{} intersection nodes", shared.len()))?;
    let at = |x: f64, y: f64| shared.iter().any(|(id, _)| dist(g.nodes[id], Point::new(x, y)) < 1e-6);
    ensure(at(60.0, 0.0), "no merged cluster node at (60, 0)")?;
    ensure(at(120.0, 0.0), "no crossing node at (120, 0)")?;

    for (route, a, b) in g.edges() {
        let len = dist(g.nodes[a], g.nodes[b]);
        ensure((10.0..=30.0).contains(&len), format!("{route}: edge of {len:.2} nmi"))?;
    }
    ensure(off_node_crossings(&g).is_empty(), "off-node crossing found")?;
    for (route, ids) in &sector.routes {
        let before = polyline_length(&ids.iter().map(|f| sector.fixes[f]).collect::<Vec<_>>());
        let after = polyline_length(&g.routes[route].iter().map(|n| g.nodes[n]).collect::<Vec<_>>());
        ensure((before - after).abs() <= 20.0, format!("{route}: {before:.1} vs {after:.1} nmi"))?;
    }

    let again = encode_sector(&ContinuousSector::from_graph(&g), &cfg).map_err(|e| e.to_string())?;
    let shape = |g: &SectorGraph| {
        let routes: Vec<(String, usize)> = g.routes.iter().map(|(r, n)| (r.0.clone(), n.len())).collect();
        (g.nodes.len(), routes, g.count_intersections())
    };
    ensure(shape(&again) == shape(&g), "re-encoding changed the topology")?;
    Ok(format!("{} nodes, routes A={} B={}", g.nodes.len(), g.routes["A"].len(), g.routes["B"].len()))
}

fn generator_exact() -> Check {
    let start = Instant::now();
    let mut first = Vec::new();
    for k in 4..=14 {
        for seed in 0..10 {
            let g = generate(seed, 7, k, GridSize::default()).map_err(|e| format!("k={k} seed={seed}: {e}"))?;
            ensure(g.count_intersections() == k as usize, format!("k={k} seed={seed}: {}", g.count_intersections()))?;
            first.push(g.to_json());
        }
    }
    let took = start.elapsed();
    let mut i = 0;
    for k in 4..=14 {
        for seed in 0..10 {
            let again = generate(seed, 7, k, GridSize::default()).map_err(|e| e.to_string())?.to_json();
            ensure(again == first[i], format!("k={k} seed={seed}: output differs between runs"))?;
            i += 1;
        }
    }
    ensure(took < Duration::from_secs(30), format!("took {}", secs(took)))?;
    Ok(format!("110 sectors in {}", secs(took)))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn baseline_bands() -> Check {
    let params = Benchmark::TrafficVolume.params(8);
    let suite = SuiteSpec::new(0);
    let sectors = suite.sectors(&params).map_err(|e| e.to_string())?;
    let all = Allocation::Total(500);
    let mut notes = Vec::new();
    for (n, lo, hi) in [(2, 0.02, 0.30), (8, 0.7, 3.5), (30, 14.0, 45.0)] {
        let e = estimate_muip_rand(&sectors, n, 12, all, suite.seed);
        ensure((lo..=hi).contains(&e.mean), format!("MUIP_rand(N={n}) = {:.3}", e.mean))?;
        notes.push(format!("N={n}: {:.3}", e.mean));
    }
    let params = Benchmark::Controllability.params(1);
    let e = estimate_madip_rand(&sectors, params.n_aircraft, 12, 1, all, suite.seed);
    ensure((0.8..=3.5).contains(&e.mean), format!("MADIP_rand(k=1) = {:.3}", e.mean))?;
    notes.push(format!("k=1: {:.3}", e.mean));

    // Bootstrap each adjacent step of the sweep: the larger N must have the
    // larger mean in at least 95% of resamples.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let counts: Vec<Vec<f64>> = Benchmark::TrafficVolume
        .sweep()
        .iter()
        .map(|&n| sample_pair_counts(&sectors, n, 12, all, suite.seed).into_iter().map(|c| c as f64).collect())
        .collect();
    let resample = |xs: &[f64], rng: &mut ChaCha8Rng| -> f64 {
        mean(&(0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).collect::<Vec<_>>())
    };
    let mut weakest: f64 = 1.0;
    for w in counts.windows(2) {
        let wins = (0..1000).filter(|_| resample(&w[1], &mut rng) > resample(&w[0], &mut rng)).count();
        weakest = weakest.min(wins as f64 / 1000.0);
    }
    ensure(weakest >= 0.95, format!("monotonicity support only {weakest:.3}"))?;
    notes.push(format!("monotone (min support {weakest:.3})"));
    Ok(notes.join(", "))
}

fn score_formulas() -> Check {
    for r in [1e-3, 0.1, 1.0, 1.95, 28.4, 1e4] {
        let f = |x| normalized_skill(x, r).map_err(|e| e.to_string());
        ensure(f(0.0)? == 1.0, format!("skill(0, {r}) != 1"))?;
        ensure(f(r)? == 0.0, format!("skill({r}, {r}) != 0"))?;
        ensure(f(2.0 * r)? == 0.0, format!("skill(2r, {r}) != 0"))?;
    }
    let v = normalized_skill(0.9, 28.4).map_err(|e| e.to_string())?;
    ensure((v - 0.9683).abs() <= 1e-4, format!("1 - 0.9/28.4 gave {v}"))?;
    Ok(format!("skill(0.9, 28.4) = {v:.4}"))
}

fn mock_client(dir: &Path, name: &str) -> (Client, Arc<MockTransport>) {
    let transport = Arc::new(MockTransport::new(dir));
    (Client::new(ProviderConfig::mock(name, dir), transport.clone()), transport)
}

fn run_all(fixtures: &Path, store_path: &Path, suite: &SuiteSpec, limit: Option<usize>) -> Result<usize, String> {
    let templates = Templates::embedded();
    let mut store = Store::open(store_path).map_err(|e| e.to_string())?;
    let (client, _) = mock_client(fixtures, "perfect");
    let mut executed = 0;
    for b in Benchmark::ALL {
        let opts = RunOptions { baseline: Allocation::Total(100), cell_limit: limit, ..RunOptions::default() };
        let summary = run_benchmark(b, std::slice::from_ref(&client), suite, &mut store, &templates, &opts)
            .map_err(|e| e.to_string())?;
        ensure(summary.failed == 0, format!("{b}: {} failed cells", summary.failed))?;
        executed += summary.executed;
    }
    Ok(executed)
}

fn mock_end_to_end() -> Check {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixtures = work.path().join("fixtures");
    let suite = SuiteSpec::new(3);
    let n = common::write_perfect_fixtures(&fixtures, &suite, &Benchmark::ALL, None);

    let full = work.path().join("full.jsonl");
    let executed = run_all(&fixtures, &full, &suite, None)?;
    ensure(executed == n, format!("{executed} of {n} cells executed"))?;

    let out = work.path().join("report");
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let store = Store::open(&full).map_err(|e| e.to_string())?;
    let files = report(&store, &out).map_err(|e| e.to_string())?;
    ensure(files.tables.len() == 4, format!("{} tables", files.tables.len()))?;
    let skills = std::fs::read_to_string(&files.skills).map_err(|e| e.to_string())?;
    let row: Vec<&str> = skills.lines().nth(1).unwrap_or_default().split(',').collect();
    ensure(row.len() == 7 && row[0] == "perfect" && row[1..5] == ["1", "1", "1", "1"], format!("skills row {row:?}"))?;

    // Interrupted after 50 cells per benchmark, then resumed.
    let resumed = work.path().join("resumed.jsonl");
    let first = run_all(&fixtures, &resumed, &suite, Some(50))?;
    let second = run_all(&fixtures, &resumed, &suite, None)?;
    ensure(first == 200 && first + second == n, format!("interrupted {first}, resumed {second}"))?;
    let same = std::fs::read(&full).map_err(|e| e.to_string())? == std::fs::read(&resumed).map_err(|e| e.to_string())?;
    ensure(same, "resumed store differs from the uninterrupted one")?;

    // Truncated at every budget.
    let esc = work.path().join("escalation");
    let messages = [ChatMessage::user("escalate")];
    MockFixture::new(vec![MockStep::truncated("{\"duration\": 12, \"aircraft\": [")])
        .write(&esc, "escalate")
        .map_err(|e| e.to_string())?;
    let (client, transport) = mock_client(&esc, "m");
    let failure = match client.complete_with_escalation(&messages) {
        Ok(_) => return Err("escalation fixture produced a scenario".into()),
        Err(f) => f,
    };
    let budgets: Vec<u32> = failure.history.iter().map(|r| r.max_tokens).collect();
    ensure(budgets == [35_000, 45_000, 50_000], format!("budgets {budgets:?}"))?;
    ensure(matches!(failure.error, LlmError::BudgetExhausted { cap: 50_000, .. }), format!("{:?}", failure.error))?;
    ensure(transport.calls() == 3, format!("{} calls", transport.calls()))?;
    Ok(format!("{n} cells, 4 tables, resume identical, budgets {budgets:?}"))
}

fn refinement() -> Check {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let params = Benchmark::TrafficVolume.params(8);
    let suite = SuiteSpec { n_sectors: 1, ..SuiteSpec::new(5) };
    let g = &suite.sectors(&params).map_err(|e| e.to_string())?[0];
    let t = Templates::embedded();
    let good = common::solve(g, &params).ok_or("no solution")?;
    // A slow aircraft on the longest route, caught up by two fast ones.
    let longest = g.routes.iter().max_by_key(|(_, n)| n.len()).map(|(r, _)| r.clone()).ok_or("no routes")?;
    let mut flawed = good.clone();
    for (i, (spawn, speed)) in [(0, Speed::Slow), (3, Speed::Fast), (5, Speed::Fast)].into_iter().enumerate() {
        flawed.aircraft[i] = Aircraft::new(&format!("AC{}", i + 1), spawn, longest.clone(), speed);
    }
    let prompt = build_benchmark_prompt(&t, g, &params).map_err(|e| e.to_string())?;
    MockFixture::new(vec![MockStep::text(common::fenced(&flawed)), MockStep::text(common::fenced(&good))])
        .write(work.path(), &prompt)
        .map_err(|e| e.to_string())?;
    let (client, _) = mock_client(work.path(), "m");
    let trace = run_refinement(&client, g, &params, 3, &t, &RolloutConfig::default()).map_err(|e| e.to_string())?;
    let counts = trace.pair_counts();
    ensure(counts.len() == 2 && counts[0].unwrap_or(0) > 0 && counts[1] == Some(0), format!("trace {counts:?}"))?;
    ensure(trace.status == RefinementStatus::Resolved, "not resolved")?;
    let first = &trace.rounds[0];
    let feedback = first.feedback.as_deref().ok_or("no feedback after round 0")?;
    let events = &first.verification.as_ref().ok_or("round 0 unverified")?.events;
    for e in events {
        ensure(feedback.contains(&format!("{} and {}", e.pair.0, e.pair.1)), format!("pair {:?} missing", e.pair))?;
        ensure(feedback.contains(&format!("t={}", e.t)), format!("time {} missing", e.t))?;
        for n in &e.nodes {
            ensure(feedback.contains(n.as_str()), format!("node {n} missing"))?;
        }
        let line = feedback.lines().find(|l| l.contains(&format!("{} and {} interact at t={} ", e.pair.0, e.pair.1, e.t)));
        ensure(line.is_some_and(|l| e.nodes.iter().all(|n| l.contains(n.as_str()))), format!("no line for {e:?}"))?;
    }
    Ok(format!("trace {counts:?}, {} events named", events.len()))
}

fn schema_exactness() -> Check {
    let t = Templates::embedded();
    let examples = t.embedded_examples();
    ensure(examples.len() >= 2, format!("{} template examples", examples.len()))?;
    for (name, body) in &examples {
        extract_scenario_json(body).map_err(|e| format!("{name}: {e}"))?;
    }
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let read = |f: &str| std::fs::read_to_string(golden.join(f)).map_err(|e| format!("{f}: {e}"));
    let sector = read("sector.json")?;
    let g = SectorGraph::from_json(&sector).map_err(|e| e.to_string())?;
    ensure(g.to_json() + "\n" == sector, "sector round-trip differs")?;
    let scenario = read("scenario.json")?;
    let s = Scenario::from_json_str(&scenario).map_err(|e| e.join("; "))?;
    ensure(s.to_json() + "\n" == scenario, "scenario round-trip differs")?;
    Ok(format!("{} template examples, 2 golden files", examples.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("detector matches naive reference", detector_matches_reference),
        ("interaction-type fixtures", interaction_fixtures),
        ("encoder fixture properties", encoder_fixture),
        ("synthetic generator exactness", generator_exact),
        ("random-baseline bands", baseline_bands),
        ("score formulas", score_formulas),
        ("mock end-to-end run", mock_end_to_end),
        ("refinement loop", refinement),
        ("scenario schema exactness", schema_exactness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
