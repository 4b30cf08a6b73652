// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! `culvertd`: simulate inspection runs, serve them, and work with quantized
//! artifacts and evaluation corpora.
//!
//! Exit codes: 0 ok, 1 runtime failure, 2 configuration or input error,
//! 3 quality gate or budget failure.

use std::fs;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use culvert_core::inspect::InspectionReport;
use culvert_core::metrics::{evaluate_corpus, quality_gate, CorpusItem, GateDecision, QUALITY_GATE_THRESHOLD};
use culvert_core::orchestrator::{
    budget_check, run_pipeline, run_scenario_live, write_ndjson, BudgetSpec, Bus, LiveRun, RunConfig, RunSnapshot,
    RunStatus, TelemetrySample, CONFIG_ENV,
};
use culvert_core::quant::{
    affine_quantize, artifact, calibrate_affine, calibrate_symmetric_per_channel, dequantize, merge_lora,
    merge_lora_quantized, nf4_quantize, select_configuration, LoraAdapter, ModelConfig, ObjectiveWeights, QuantError,
    QuantScheme, Tensor,
};
use culvert_core::sim::{generate_scenario, preset_by_name, score_run, Difficulty, Scenario};
use culvert_core::summarize::SummarizerKind;
use culvert_gateway::{Gateway, GatewayConfig};

#[derive(Parser)]
#[command(name = "culvertd", version, about = "Culvert inspection runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a scenario through the pipeline and write the run artifacts.
    Simulate(SimulateArgs),
    /// Serve a run over HTTP and web socket while it executes.
    Serve(ServeArgs),
    /// Generate a scenario file.
    Scenario(ScenarioArgs),
    /// Quantize a tensor file into a binary artifact.
    Quantize(QuantizeArgs),
    /// Reconstruct a tensor from a binary artifact.
    Dequantize(DequantizeArgs),
    /// Merge a low-rank adapter into base weights.
    MergeAdapter(MergeArgs),
    /// Pick the deployment configuration that minimizes the objective.
    SelectConfig(SelectArgs),
    /// Score hypotheses against references and apply the quality gate.
    Evaluate(EvaluateArgs),
    /// Validate and render an inspection report.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON). Falls back to $CULVERTD_CONFIG, then defaults.
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Scenario file.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario: lab-60ft or field-65ft.
    #[arg(long)]
    preset: Option<String>,
    /// Generate a scenario from this seed instead of loading one.
    #[arg(long, conflicts_with_all = ["scenario", "preset"])]
    seed: Option<u64>,
    /// Budget overrides (JSON).
    #[arg(long)]
    budget_file: Option<PathBuf>,
    /// Remote summarizer address (host:port).
    #[arg(long)]
    summarizer_endpoint: Option<String>,
    /// Pace frames at capture rate instead of running as fast as possible.
    #[arg(long)]
    realtime: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory for report, telemetry, score and scenario files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Messages buffered per stream client.
    #[arg(long, default_value_t = GatewayConfig::default().client_queue)]
    client_queue: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum DifficultyArg {
    Easy,
    Moderate,
    Hard,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 18.3)]
    length: f64,
    /// Planted defects per 10 m.
    #[arg(long, default_value_t = 2.0)]
    density: f64,
    #[arg(long, value_enum, default_value = "easy")]
    difficulty: DifficultyArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QuantizeArgs {
    /// Tensor JSON: {"shape": [...], "values": [...]}.
    #[arg(long)]
    input: PathBuf,
    /// affine, int8 (symmetric per channel) or nf4.
    #[arg(long, default_value = "int8")]
    scheme: String,
    #[arg(long, default_value_t = 8)]
    bits: u8,
    #[arg(long, default_value_t = 64)]
    block_size: usize,
    /// Affine scale; calibrated from the tensor range when omitted.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, requires = "scale")]
    zero_point: Option<i32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DequantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MergeArgs {
    /// Base weights: tensor JSON or a quantized artifact.
    #[arg(long)]
    base: PathBuf,
    /// Adapter JSON: {"b": tensor, "a": tensor, "alpha": number}.
    #[arg(long)]
    adapter: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    /// JSON array of candidate configurations.
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    budget_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    lambda_p: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_t: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_m: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// JSON array of {"hyp": ..., "refs": [...]} items.
    #[arg(long)]
    corpus: PathBuf,
    /// Full-precision outputs for the same items; enables the quality gate.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = QUALITY_GATE_THRESHOLD)]
    threshold: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON, or a run directory containing report.json.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Input(anyhow::Error),
    Gate(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn input<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Input)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn load_budgets(path: Option<&Path>) -> anyhow::Result<Option<BudgetSpec>> {
    let Some(p) = path else { return Ok(None) };
    let b: BudgetSpec = read_json(p)?;
    b.validate().map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
    Ok(Some(b))
}

fn resolve_run(args: &RunArgs) -> anyhow::Result<(RunConfig, Scenario)> {
    let mut cfg = RunConfig::resolve(args.config.as_deref())?;
    if let Some(b) = load_budgets(args.budget_file.as_deref())? {
        cfg.budgets = b;
    }
    if let Some(ep) = &args.summarizer_endpoint {
        cfg.summarizer.kind = SummarizerKind::Remote;
        cfg.summarizer.endpoint = Some(ep.clone());
    }
    cfg.validate()?;
    let scenario = match (&args.scenario, &args.preset, args.seed) {
        (Some(p), _, _) => Scenario::load(p)?,
        (None, Some(name), _) => preset_by_name(name)?,
        (None, None, Some(seed)) => generate_scenario(seed, 18.3, 2.0, Difficulty::Easy),
        (None, None, None) => preset_by_name("lab-60ft")?,
    };
    Ok((cfg, scenario))
}

/// Every telemetry sample checked against the budgets; the worst is reported.
fn check_budgets(samples: &[TelemetrySample], cfg: &RunConfig) -> Result<(), String> {
    let fallback = [TelemetrySample { memory_gb: cfg.model.memory_gb, ..Default::default() }];
    let samples = if samples.is_empty() { &fallback[..] } else { samples };
    for s in samples {
        let st = budget_check(s, &cfg.model, &cfg.budgets);
        if !st.all_ok() {
            return Err(format!(
                "budget violated at t = {} s: latency {:.2} s (limit {}), memory {:.2} GB (limit {}), params {:.3e} (limit {:.3e})",
                s.t_s, st.latency_s, cfg.budgets.t_max_s, st.memory_gb, cfg.budgets.m_max_gb, st.params, cfg.budgets.p_max
            ));
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Outcome {
    let (cfg, scenario) = input(resolve_run(&args.run))?;
    let started = Instant::now();
    let out = run_pipeline(&scenario, &cfg, args.run.realtime).map_err(|e| Failure::Runtime(e.into()))?;
    let score = score_run(&out.report, &scenario, 0.5);
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write_json(&dir.join("report.json"), &out.report)?;
        write_json(&dir.join("score.json"), &score)?;
        write_json(&dir.join("scenario.json"), &scenario)?;
        let f = fs::File::create(dir.join("telemetry.ndjson")).context("cannot write telemetry")?;
        write_ndjson(BufWriter::new(f), &out.telemetry).context("cannot write telemetry")?;
    }
    let d = &out.report.telemetry;
    let ms = |v: Option<f64>| v.map_or("n/a".to_string(), |s| format!("{s:.2} s"));
    println!(
        "{}: {} records ({} planted), precision {:.3}, recall {:.3}, median end-to-end {}, throughput {}, {} degradation transitions, {:.2} s wall",
        out.report.run_id,
        score.records,
        score.planted,
        score.precision,
        score.recall,
        ms(d.median_end_to_end_s),
        d.saturated_throughput.map_or("n/a".into(), |t| format!("{t:.3}/s")),
        d.degradation_transitions,
        started.elapsed().as_secs_f64()
    );
    check_budgets(&out.telemetry, &cfg).map_err(Failure::Gate)
}

fn serve(args: ServeArgs) -> Outcome {
    let (cfg, scenario) = input(resolve_run(&args.run))?;
    let live = LiveRun::new(RunSnapshot::new("idle", scenario.pipe.clone()), Bus::new(cfg.bus_retain));
    let gw_cfg = GatewayConfig {
        client_queue: args.client_queue,
        summarizer_endpoint: args.run.summarizer_endpoint.clone(),
        query_timeout_s: cfg.summarizer.timeout_s,
        ..GatewayConfig::default()
    };
    let gateway = input(Gateway::new(live.clone(), gw_cfg).map_err(anyhow::Error::from))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().context("cannot start runtime")?;
    rt.block_on(async move {
        let running = gateway.bind(args.addr).await.map_err(|e| Failure::Input(e.into()))?;
        println!("listening on http://{}", running.local_addr());
        let _ = std::io::stdout().flush();
        let realtime = args.run.realtime;
        let runner = live.clone();
        tokio::task::spawn_blocking(move || {
            if let Err(e) = run_scenario_live(&scenario, &cfg, realtime, runner.clone()) {
                runner.update(|s| {
                    s.status = RunStatus::Failed;
                    s.error = Some(e.to_string());
                });
                eprintln!("run failed: {e}");
            }
        });
        running.wait().await.map_err(|e| Failure::Runtime(e.into()))
    })
}

fn scenario_cmd(args: ScenarioArgs) -> Outcome {
    if !(args.density >= 0.0 && args.length > 0.0) {
        return Err(Failure::Input(anyhow::anyhow!("length must be positive and density non-negative")));
    }
    let difficulty = match args.difficulty {
        DifficultyArg::Easy => Difficulty::Easy,
        DifficultyArg::Moderate => Difficulty::Moderate,
        DifficultyArg::Hard => Difficulty::Hard,
    };
    let s = generate_scenario(args.seed, args.length, args.density, difficulty);
    Ok(emit(args.out.as_deref(), &s)?)
}

fn quantize(args: QuantizeArgs) -> Outcome {
    let t: Tensor = input(read_json(&args.input))?;
    let scheme = QuantScheme::parse(&args.scheme)
        .ok_or_else(|| Failure::Input(anyhow::anyhow!("unknown scheme {:?}", args.scheme)))?;
    let q = match scheme {
        QuantScheme::Affine => {
            let (s, z) = match args.scale {
                Some(s) => (s, args.zero_point.unwrap_or(0)),
                None => input(calibrate_affine(&t, args.bits).map_err(anyhow::Error::from))?,
            };
            affine_quantize(&t, s, z, args.bits)
        }
        QuantScheme::SymmetricPerChannel => calibrate_symmetric_per_channel(&t, args.bits).map(|(_, q)| q),
        QuantScheme::Nf4Block => nf4_quantize(&t, args.block_size),
    };
    let q = input(q.map_err(anyhow::Error::from))?;
    fs::write(&args.out, artifact::encode(&q)).with_context(|| format!("cannot write {}", args.out.display()))?;
    let back = dequantize(&q);
    let worst = t.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!(
        "{:?}: {} values, {} scales, max abs error {worst:.6e}",
        q.spec.scheme,
        q.len(),
        q.spec.scales.len().max(q.absmax.len())
    );
    Ok(())
}

fn read_artifact(path: &Path) -> anyhow::Result<culvert_core::quant::QuantizedTensor> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    artifact::decode(&bytes).with_context(|| format!("cannot decode {}", path.display()))
}

fn dequantize_cmd(args: DequantizeArgs) -> Outcome {
    let q = input(read_artifact(&args.input))?;
    Ok(emit(args.out.as_deref(), &dequantize(&q))?)
}

fn merge_adapter(args: MergeArgs) -> Outcome {
    let adapter: LoraAdapter = input(read_json(&args.adapter))?;
    let merged = if args.base.extension().is_some_and(|e| e == "json") {
        let base: Tensor = input(read_json(&args.base))?;
        merge_lora(&base, &adapter)
    } else {
        let q = input(read_artifact(&args.base))?;
        merge_lora_quantized(&q, &adapter)
    };
    let merged = input(merged.map_err(anyhow::Error::from))?;
    Ok(emit(args.out.as_deref(), &merged)?)
}

fn select_config(args: SelectArgs) -> Outcome {
    let candidates: Vec<ModelConfig> = input(read_json(&args.candidates))?;
    let budgets = input(load_budgets(args.budget_file.as_deref()))?.unwrap_or_default();
    let w = ObjectiveWeights { lambda_p: args.lambda_p, lambda_t: args.lambda_t, lambda_m: args.lambda_m };
    match select_configuration(&candidates, &budgets, &w) {
        Ok(c) => Ok(emit(None, c)?),
        Err(QuantError::NoFeasibleCandidate) => Err(Failure::Gate("every candidate violates a budget".into())),
        Err(e) => Err(Failure::Input(e.into())),
    }
}

fn evaluate(args: EvaluateArgs) -> Outcome {
    let items: Vec<CorpusItem> = input(read_json(&args.corpus))?;
    let report = input(evaluate_corpus(&items).map_err(anyhow::Error::from))?;
    let Some(path) = &args.baseline else {
        return Ok(emit(None, &report)?);
    };
    let base_items: Vec<CorpusItem> = input(read_json(path))?;
    let baseline = input(evaluate_corpus(&base_items).map_err(anyhow::Error::from))?;
    let (decision, ratio) = input(quality_gate(&report, &baseline, args.threshold).map_err(anyhow::Error::from))?;
    emit(
        None,
        &serde_json::json!({ "candidate": report, "baseline": baseline, "ratio": ratio, "decision": decision }),
    )?;
    match decision {
        GateDecision::Pass => Ok(()),
        GateDecision::Recalibrate => Err(Failure::Gate(format!("ROUGE-L ratio {ratio:.4} below {}", args.threshold))),
    }
}

fn render_text(r: &InspectionReport) -> String {
    let mut s = format!(
        "Inspection report {}\nPipe: {:.1} m {}\nRecords: {}\n",
        r.run_id,
        r.segment.pipe_length_m,
        r.segment.material,
        r.entries.len()
    );
    for e in &r.entries {
        let rec = &e.record;
        s.push_str(&format!(
            "\n#{} {} at {:.1} m (confidence {:.2}, {} sightings)\n",
            rec.record_id,
            rec.class.name(),
            rec.first_pose.chainage,
            rec.representative.confidence,
            rec.member_count
        ));
        match &e.summary {
            Some(sum) => {
                s.push_str(&format!("  Condition: {}\n", sum.condition));
                s.push_str(&format!("  Location: {}\n", sum.location));
                s.push_str(&format!("  Severity: {} ({})\n", sum.severity.level, sum.severity.text));
                s.push_str(&format!("  Implications: {}\n", sum.implications));
            }
            None => s.push_str("  (summary pending)\n"),
        }
    }
    let t = &r.telemetry;
    s.push_str(&format!(
        "\nFrames: {} captured, {} processed, {} dropped, {} skipped\nSummaries: {} ({} fell back)\n",
        t.frames_captured, t.frames_processed, t.frames_dropped, t.frames_skipped, t.summaries, t.summary_failures
    ));
    s
}

fn report(args: ReportArgs) -> Outcome {
    let path = if args.input.is_dir() { args.input.join("report.json") } else { args.input.clone() };
    let r: InspectionReport = input(read_json(&path))?;
    match args.format {
        ReportFormat::Json => Ok(emit(args.out.as_deref(), &r)?),
        ReportFormat::Text => {
            let text = render_text(&r);
            match &args.out {
                Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Serve(a) => serve(a),
        Command::Scenario(a) => scenario_cmd(a),
        Command::Quantize(a) => quantize(a),
        Command::Dequantize(a) => dequantize_cmd(a),
        Command::MergeAdapter(a) => merge_adapter(a),
        Command::SelectConfig(a) => select_config(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Gate(msg)) => {
            eprintln!("failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
