use std::io::Write;
use std::path::{Path, PathBuf};

use atg_core::baseline::{estimate_madip_rand, estimate_muip_rand, Allocation};
use atg_core::encoder::{encode_sector, ContinuousSector, EncoderConfig};
use atg_core::harness::{report, run_benchmark, run_refinement, RunOptions, Store, SuiteSpec};
use atg_core::io::write_atomic;
use atg_core::llm::{Client, ModelsFile, ProviderConfig};
use atg_core::model::{Benchmark, BenchmarkParams, Scenario, SectorGraph};
use atg_core::prompting::{build_benchmark_prompt, build_controllability_prompt, build_feedback, Templates};
use atg_core::rollout::{validate_json, verify, RolloutConfig, Verification};
use atg_core::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{
    BaselineArgs, BenchArgs, Command, EncodeArgs, GenSectorsArgs, Overrides, PromptArgs, RefineArgs, ReportArgs,
    SuiteArgs, VerifyArgs,
};

pub fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::GenSectors(a) => gen_sectors(a),
        Command::Encode(a) => encode(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Baseline(a) => baseline(a),
        Command::Bench(a) => bench(a),
        Command::Refine(a) => refine(a),
        Command::Report(a) => report_cmd(a),
        Command::Prompt(a) => prompt(a),
    }
}

fn input_error(path: &Path, message: impl ToString) -> Error {
    Error::Input { path: path.display().to_string(), message: message.to_string() }
}

fn flag_error(flag: &str, message: impl ToString) -> Error {
    Error::Input { path: flag.to_string(), message: message.to_string() }
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| input_error(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    serde_json::from_str(&read_text(path)?).map_err(|e| input_error(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

/// Atomic write to `path`, or stdout.
fn emit(text: &str, path: Option<&Path>) -> Result<(), Error> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()).map_err(|e| input_error(p, e)),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_benchmark(name: &str) -> Result<Benchmark, Error> {
    Benchmark::parse(name).ok_or_else(|| flag_error("--benchmark", format!("unknown benchmark {name}")))
}

fn benchmarks(name: &str) -> Result<Vec<Benchmark>, Error> {
    if name == "all" {
        Ok(Benchmark::ALL.to_vec())
    } else {
        Ok(vec![parse_benchmark(name)?])
    }
}

fn suite_spec(a: &SuiteArgs) -> SuiteSpec {
    SuiteSpec { n_sectors: a.n_sectors, ..SuiteSpec::new(a.suite_seed) }
}

fn apply(mut p: BenchmarkParams, o: &Overrides) -> BenchmarkParams {
    p.n_routes = o.routes.unwrap_or(p.n_routes);
    p.n_intersections = o.intersections.unwrap_or(p.n_intersections);
    p.n_aircraft = o.aircraft.unwrap_or(p.n_aircraft);
    p.duration = o.duration.unwrap_or(p.duration);
    p
}

fn points(a: &SuiteArgs, o: &Overrides) -> Result<Vec<BenchmarkParams>, Error> {
    let mut out = Vec::new();
    for b in benchmarks(&a.benchmark)? {
        let values = if a.values.is_empty() { b.sweep() } else { a.values.clone() };
        out.extend(values.into_iter().map(|v| apply(b.params(v), o)));
    }
    Ok(out)
}

/// Exactly one parameter point.
fn single_point(a: &SuiteArgs, o: &Overrides) -> Result<BenchmarkParams, Error> {
    let b = parse_benchmark(&a.benchmark)?;
    match a.values.as_slice() {
        [v] => Ok(apply(b.params(*v), o)),
        _ => Err(flag_error("--value", "exactly one value is required")),
    }
}

fn suite_sector(a: &SuiteArgs, params: &BenchmarkParams, index: usize) -> Result<SectorGraph, Error> {
    let mut sectors = suite_spec(a).sectors(params)?;
    if index >= sectors.len() {
        return Err(flag_error("--sector-index", format!("suite has {} sectors", sectors.len())));
    }
    Ok(sectors.swap_remove(index))
}

fn gen_sectors(a: GenSectorsArgs) -> Result<(), Error> {
    let suite = suite_spec(&a.suite);
    for params in points(&a.suite, &a.overrides)? {
        for (i, g) in suite.sectors(&params)?.iter().enumerate() {
            let name = format!("sector_{}_{}_{i}.json", params.benchmark.name(), params.swept_value());
            let path = a.out.join(name);
            emit(&(g.to_json() + "\n"), Some(&path))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn encode(a: EncodeArgs) -> Result<(), Error> {
    let sector: ContinuousSector = read_json(&a.input)?;
    let cfg = EncoderConfig { spacing: a.spacing, cluster_radius: a.spacing, ..EncoderConfig::default() };
    let g = encode_sector(&sector, &cfg)?;
    emit(&(g.to_json() + "\n"), a.output.as_deref())
}

fn read_sector(path: &Path) -> Result<SectorGraph, Error> {
    let g: SectorGraph = read_json(path)?;
    g.validate()?;
    Ok(g)
}

fn verify_cmd(a: VerifyArgs) -> Result<(), Error> {
    let g = read_sector(&a.sector)?;
    let value: serde_json::Value = read_json(&a.scenario)?;
    let params = match (&a.benchmark, a.value) {
        (Some(b), Some(v)) => Some(parse_benchmark(b)?.params(v)),
        _ => None,
    };
    let cfg = RolloutConfig { grace_steps: a.grace, ..RolloutConfig::default() };
    let (scenario, validation) = validate_json(&value, &g, params.as_ref(), &cfg);
    match scenario {
        Some(s) => emit(&to_json(&verify(&s, &g, params.as_ref(), &cfg)), a.output.as_deref()),
        None => {
            let issues = validation.violations.iter().map(|v| v.detail.clone()).collect();
            let report = Verification { events: vec![], unique_pairs: vec![], validation };
            emit(&to_json(&report), a.output.as_deref())?;
            Err(Error::Schema(issues))
        }
    }
}

fn baseline(a: BaselineArgs) -> Result<(), Error> {
    let params = parse_benchmark(&a.benchmark)?.params(a.value);
    let suite = SuiteSpec { n_sectors: a.n_sectors, ..SuiteSpec::new(a.seed) };
    let sectors = suite.sectors(&params)?;
    let allocation = match a.samples_per_sector {
        Some(n) => Allocation::PerSector(n),
        None => Allocation::Total(a.samples),
    };
    let estimate = match params.target_pairs {
        Some(k) => estimate_madip_rand(&sectors, params.n_aircraft, params.duration, k, allocation, a.seed),
        None => estimate_muip_rand(&sectors, params.n_aircraft, params.duration, allocation, a.seed),
    };
    let out = serde_json::json!({
        "params": params,
        "mean": estimate.mean,
        "stderr": estimate.stderr,
        "samples": estimate.samples,
    });
    emit(&to_json(&out), a.output.as_deref())
}

/// Models file with relative fixture directories resolved against the
/// file's own directory.
fn load_models(path: &Path, max_inflight: Option<usize>) -> Result<Vec<ProviderConfig>, Error> {
    let file: ModelsFile = read_json(path)?;
    if file.models.is_empty() {
        return Err(input_error(path, "no models listed"));
    }
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(file
        .models
        .into_iter()
        .map(|mut m| {
            if let Some(dir) = m.fixtures.as_mut().filter(|d| d.is_relative()) {
                *dir = base.join(&*dir);
            }
            if let Some(n) = max_inflight {
                m.max_inflight = n;
            }
            m
        })
        .collect())
}

fn bench(a: BenchArgs) -> Result<(), Error> {
    let templates = Templates::load(a.templates.as_deref())?;
    let clients = load_models(&a.models, a.max_inflight)?
        .into_iter()
        .map(Client::from_config)
        .collect::<Result<Vec<_>, _>>()?;
    let mut store = Store::open(&a.store).map_err(|e| input_error(&a.store, e))?;
    if !store.is_empty() && !a.resume {
        return Err(input_error(&a.store, "store already has results; pass --resume to continue it"));
    }
    let suite = suite_spec(&a.suite);
    let opts = RunOptions {
        values: (!a.suite.values.is_empty()).then(|| a.suite.values.clone()),
        baseline: if a.samples_per_sector {
            Allocation::PerSector(a.baseline_samples)
        } else {
            Allocation::Total(a.baseline_samples)
        },
        workers: a.max_inflight.unwrap_or(RunOptions::default().workers).max(1),
        retry_failed: a.retry_failed,
        ..RunOptions::default()
    };
    for b in benchmarks(&a.suite.benchmark)? {
        let summary = run_benchmark(b, &clients, &suite, &mut store, &templates, &opts)?;
        let line = serde_json::json!({ "benchmark": b, "summary": summary });
        println!("{line}");
    }
    Ok(())
}

fn refine(a: RefineArgs) -> Result<(), Error> {
    let templates = Templates::load(a.templates.as_deref())?;
    let models = load_models(&a.models, None)?;
    let cfg = match &a.model {
        Some(name) => models
            .into_iter()
            .find(|m| m.label() == name)
            .ok_or_else(|| flag_error("--model", format!("{name} is not in {}", a.models.display())))?,
        None => models.into_iter().next().expect("models checked non-empty"),
    };
    let client = Client::from_config(cfg)?;
    let params = single_point(&a.suite, &a.overrides)?;
    let g = suite_sector(&a.suite, &params, a.sector_index)?;
    let trace = run_refinement(&client, &g, &params, a.rounds, &templates, &RolloutConfig::default())?;
    emit(&to_json(&trace), a.output.as_deref())
}

fn report_cmd(a: ReportArgs) -> Result<(), Error> {
    if !a.store.exists() {
        return Err(input_error(&a.store, "no such store"));
    }
    let mut store = Store::open(&a.store).map_err(|e| input_error(&a.store, e))?;
    if a.compact {
        store.compact().map_err(|e| input_error(&a.store, e))?;
    }
    std::fs::create_dir_all(&a.out).map_err(|e| input_error(&a.out, e))?;
    let files = report(&store, &a.out)?;
    let paths: Vec<&PathBuf> = files.tables.iter().chain([&files.skills, &files.pareto]).collect();
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn prompt(a: PromptArgs) -> Result<(), Error> {
    let templates = Templates::load(a.templates.as_deref())?;
    let params = single_point(&a.suite, &a.overrides)?;
    let g = match &a.sector {
        Some(path) => read_sector(path)?,
        None => suite_sector(&a.suite, &params, a.sector_index)?,
    };
    let text = if let Some(spec) = &a.spec {
        let existing = a.existing.as_deref().map(read_scenario).transpose()?;
        let p = build_controllability_prompt(&templates, &g, spec, a.three_d, existing.as_ref())?;
        for w in &p.warnings {
            log::warn!("{w}");
        }
        p.text
    } else if let Some(path) = &a.feedback_for {
        let s = read_scenario(path)?;
        let v = verify(&s, &g, Some(&params), &RolloutConfig::default());
        build_feedback(&templates, &v, &params, 1)?
    } else {
        build_benchmark_prompt(&templates, &g, &params)?
    };
    emit(&(text + "\n"), None)
}

fn read_scenario(path: &Path) -> Result<Scenario, Error> {
    Scenario::from_json_str(&read_text(path)?).map_err(Error::Schema)
}
