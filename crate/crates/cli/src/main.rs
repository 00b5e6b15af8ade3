//! `erase`: generate toy stacks, run closed-form concept erasure on them and
//! measure the result. Every output is accompanied by a run manifest.
//!
//! Exit codes: 0 success, 2 argument/validation, 3 I/O, 4 solver infeasibility.

mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use erase_core::diagnostics::{delta_profile, distance_trace, inject_deviation, probe_degradation, InjectionSpec};
use erase_core::erasure::{ConceptConfig, MethodRegistry};
use erase_core::model::{to_exact_json, PromptFile};
use erase_core::report::{rows_to_csv, svg_line_chart, ReportRow, Series};
use erase_core::{BlockKind, DiagnosticsError, EraseError, GenSpec, ModelError, ModelStack};
use serde::Serialize;

use output::{ensure_distinct, manifest_path_for, read_text, ReportPaths, RunManifest};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Infeasible(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Infeasible(m) => f.write_str(m),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<EraseError> for CliError {
    fn from(e: EraseError) -> Self {
        if e.is_infeasible() {
            CliError::Infeasible(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "erase", version, about = "Closed-form concept erasure on toy attention stacks")]
struct Cli {
    /// Record wall-clock duration in manifests (makes them non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded random stack.
    GenModel(GenModelArgs),
    /// Erase a concept and write the edited model plus a per-projection report.
    Erase(EraseArgs),
    /// Per-projection update norms between two structurally identical models.
    Inspect(InspectArgs),
    /// Target-vs-anchor feature distance at every stage.
    Trace(TraceArgs),
    /// Add alpha * ||W||_F * I to one square projection.
    Inject(InjectArgs),
    /// Mean relative output error of an edited model on probe prompts.
    Probe(ProbeArgs),
}

#[derive(Args, Debug)]
struct GenModelArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    blocks: usize,
    #[arg(long)]
    hidden: usize,
    #[arg(long)]
    vocab: usize,
    #[arg(long)]
    seed: u64,
    /// Comma-separated block kinds; a single kind applies to every block,
    /// `kind*n` repeats. Defaults to self_attn blocks ending in a sink.
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    sink_queries: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EraseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `method`.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    model_a: PathBuf,
    #[arg(long)]
    model_b: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[arg(long)]
    pre: PathBuf,
    #[arg(long)]
    post: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct InjectArgs {
    #[arg(long)]
    model: PathBuf,
    /// 1-based block index.
    #[arg(long)]
    layer: usize,
    #[arg(long)]
    projection: String,
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    /// Scale by this norm instead of the projection's own.
    #[arg(long)]
    reference_norm: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[arg(long)]
    edited: PathBuf,
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let started = Instant::now();
    match run(cli, &argv, started) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli, argv: &[String], started: Instant) -> Result<(), CliError> {
    let timing = cli.timing.then_some(started);
    match cli.command {
        Command::GenModel(a) => gen_model(a, argv, timing),
        Command::Erase(a) => erase(a, argv, timing),
        Command::Inspect(a) => inspect(a, argv, timing),
        Command::Trace(a) => trace(a, argv, timing),
        Command::Inject(a) => inject(a, argv, timing),
        Command::Probe(a) => probe(a, argv, timing),
    }
}

fn finish(mut manifest: RunManifest, path: &Path, timing: Option<Instant>) -> Result<(), CliError> {
    manifest.wall_clock_ms = timing.map(|t| t.elapsed().as_millis());
    manifest.write(path)
}

fn load_model(manifest: &mut RunManifest, role: &str, path: &Path) -> Result<(ModelStack, String), CliError> {
    let text = read_text(path)?;
    let sha = manifest.input(role, path, text.as_bytes());
    let model = ModelStack::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((model, sha))
}

fn load_config(manifest: &mut RunManifest, path: &Path) -> Result<ConceptConfig, CliError> {
    let text = read_text(path)?;
    manifest.input("config", path, text.as_bytes());
    ConceptConfig::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parse_kinds(spec: &str) -> Result<Vec<BlockKind>, CliError> {
    let mut kinds = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, count) = match item.split_once('*') {
            Some((n, c)) => {
                let c = c.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("bad repeat count in '{item}'")))?;
                (n.trim(), c)
            }
            None => (item, 1),
        };
        let kind: BlockKind = name.parse().map_err(|e| CliError::Usage(format!("--kinds: {e}")))?;
        kinds.extend(std::iter::repeat_n(kind, count));
    }
    if kinds.is_empty() {
        return Err(CliError::Usage("--kinds is empty".into()));
    }
    Ok(kinds)
}

fn gen_model(a: GenModelArgs, argv: &[String], timing: Option<Instant>) -> Result<(), CliError> {
    let mut spec = GenSpec::new(a.dim, a.blocks, a.hidden, a.vocab, a.seed);
    if let Some(k) = &a.kinds {
        spec = spec.with_kinds(parse_kinds(k)?);
    }
    if let Some(m) = a.sink_queries {
        spec.sink_queries = m;
    }
    let model = ModelStack::generate(&spec)?;
    let mut manifest = RunManifest::new("gen-model", argv);
    manifest.seed = Some(a.seed);
    let sha = manifest.emit("model", &a.out, model.to_json().as_bytes())?;
    manifest.model_post_sha256 = Some(sha);
    finish(manifest, &manifest_path_for(&a.out), timing)
}

fn write_rows(
    manifest: &mut RunManifest,
    paths: &ReportPaths,
    rows: &[ReportRow],
    json: &str,
) -> Result<(), CliError> {
    manifest.emit("report_csv", &paths.csv(), rows_to_csv(rows).as_bytes())?;
    manifest.emit("report_json", &paths.json(), json.as_bytes())?;
    Ok(())
}

/// One series per projection name, `value` against layer index.
fn chart_by_projection(rows: &[ReportRow], value: impl Fn(&ReportRow) -> Option<f64>) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    for r in rows {
        let Some(v) = value(r) else { continue };
        let label = if r.projection.is_empty() { "features".to_string() } else { r.projection.clone() };
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((r.layer_index as f64, v)),
            None => series.push(Series { label, points: vec![(r.layer_index as f64, v)] }),
        }
    }
    series
}

fn erase(a: EraseArgs, argv: &[String], timing: Option<Instant>) -> Result<(), CliError> {
    let paths = ReportPaths::new(&a.report);
    for out in [a.out.clone(), paths.csv(), paths.json()] {
        ensure_distinct(&out, &[&a.model, &a.config])?;
    }
    let mut manifest = RunManifest::new("erase", argv);
    let (model, pre_sha) = load_model(&mut manifest, "model", &a.model)?;
    let config = load_config(&mut manifest, &a.config)?;
    let plan = config.plan(a.method.as_deref())?;
    manifest.seed = Some(model.seed);
    manifest.model_pre_sha256 = Some(pre_sha);

    let outcome = MethodRegistry::default().run(&model, &plan)?;
    let post_sha = manifest.emit("model", &a.out, outcome.model.to_json().as_bytes())?;
    manifest.model_post_sha256 = Some(post_sha);
    write_rows(&mut manifest, &paths, &outcome.report.rows, &outcome.report.to_json())?;
    if a.svg {
        let rows = &outcome.report.rows;
        let svg = svg_line_chart("update norm per projection", "delta_rel", &chart_by_projection(rows, |r| r.delta_rel));
        manifest.emit("svg_delta", &paths.svg("delta"), svg.as_bytes())?;
        let svg = svg_line_chart("feature distance after edit", "dist_fro", &chart_by_projection(rows, |r| r.dist_fro));
        manifest.emit("svg_dist", &paths.svg("dist"), svg.as_bytes())?;
    }
    finish(manifest, &paths.manifest(), timing)
}

#[derive(Serialize)]
struct RowsReport<'a, T: Serialize> {
    command: &'a str,
    entries: &'a [T],
}

fn inspect(a: InspectArgs, argv: &[String], timing: Option<Instant>) -> Result<(), CliError> {
    let paths = ReportPaths::new(&a.report);
    for out in [paths.csv(), paths.json()] {
        ensure_distinct(&out, &[&a.model_a, &a.model_b])?;
    }
    let mut manifest = RunManifest::new("inspect", argv);
    let (pre, pre_sha) = load_model(&mut manifest, "model_a", &a.model_a)?;
    let (post, post_sha) = load_model(&mut manifest, "model_b", &a.model_b)?;
    manifest.seed = Some(pre.seed);
    manifest.model_pre_sha256 = Some(pre_sha);
    manifest.model_post_sha256 = Some(post_sha);

    let deltas = delta_profile(&pre, &post)?;
    let rows: Vec<ReportRow> = deltas.iter().map(ReportRow::from).collect();
    let json = to_exact_json(&RowsReport { command: "inspect", entries: &deltas });
    write_rows(&mut manifest, &paths, &rows, &json)?;
    if a.svg {
        let svg = svg_line_chart("update norm per projection", "delta_rel", &chart_by_projection(&rows, |r| r.delta_rel));
        manifest.emit("svg_delta", &paths.svg("delta"), svg.as_bytes())?;
    }
    finish(manifest, &paths.manifest(), timing)
}

fn trace(a: TraceArgs, argv: &[String], timing: Option<Instant>) -> Result<(), CliError> {
    let paths = ReportPaths::new(&a.report);
    for out in [paths.csv(), paths.json()] {
        ensure_distinct(&out, &[&a.pre, &a.post, &a.config])?;
    }
    let mut manifest = RunManifest::new("trace", argv);
    let (pre, pre_sha) = load_model(&mut manifest, "pre", &a.pre)?;
    let (post, post_sha) = load_model(&mut manifest, "post", &a.post)?;
    let config = load_config(&mut manifest, &a.config)?;
    manifest.seed = Some(pre.seed);
    manifest.model_pre_sha256 = Some(pre_sha);
    manifest.model_post_sha256 = Some(post_sha);

    let stages = distance_trace(&pre, &post, &config.concept())?;
    let rows: Vec<ReportRow> = stages.iter().map(ReportRow::from).collect();
    let json = to_exact_json(&RowsReport { command: "trace", entries: &stages });
    write_rows(&mut manifest, &paths, &rows, &json)?;
    if a.svg {
        let svg = svg_line_chart("target vs anchor features", "dist_fro", &chart_by_projection(&rows, |r| r.dist_fro));
        manifest.emit("svg_dist", &paths.svg("dist"), svg.as_bytes())?;
        let svg = svg_line_chart(
            "target vs anchor features",
            "dist_angular_deg",
            &chart_by_projection(&rows, |r| r.dist_angular_deg),
        );
        manifest.emit("svg_angle", &paths.svg("angle"), svg.as_bytes())?;
    }
    finish(manifest, &paths.manifest(), timing)
}

fn inject(a: InjectArgs, argv: &[String], timing: Option<Instant>) -> Result<(), CliError> {
    ensure_distinct(&a.out, &[&a.model])?;
    let mut manifest = RunManifest::new("inject", argv);
    let (model, pre_sha) = load_model(&mut manifest, "model", &a.model)?;
    manifest.seed = Some(model.seed);
    manifest.model_pre_sha256 = Some(pre_sha);

    let mut spec = InjectionSpec::new(a.layer, a.projection, a.alpha);
    spec.reference_norm = a.reference_norm;
    let (injected, record) = inject_deviation(&model, &spec)?;
    let post_sha = manifest.emit("model", &a.out, injected.to_json().as_bytes())?;
    manifest.model_post_sha256 = Some(post_sha);
    let mut record_path = a.out.as_os_str().to_owned();
    record_path.push(".injection.json");
    manifest.emit("injection", Path::new(&record_path), to_exact_json(&record).as_bytes())?;
    finish(manifest, &manifest_path_for(&a.out), timing)
}

#[derive(Serialize)]
struct ProbeReport<'a> {
    command: &'a str,
    prompts: usize,
    degradation: f64,
    per_prompt: &'a [f64],
}

fn probe(a: ProbeArgs, argv: &[String], timing: Option<Instant>) -> Result<(), CliError> {
    let paths = ReportPaths::new(&a.report);
    ensure_distinct(&paths.json(), &[&a.edited, &a.baseline, &a.prompts])?;
    let mut manifest = RunManifest::new("probe", argv);
    let (edited, post_sha) = load_model(&mut manifest, "edited", &a.edited)?;
    let (baseline, pre_sha) = load_model(&mut manifest, "baseline", &a.baseline)?;
    let text = read_text(&a.prompts)?;
    manifest.input("prompts", &a.prompts, text.as_bytes());
    let prompts = PromptFile::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", a.prompts.display())))?;
    manifest.seed = Some(baseline.seed);
    manifest.model_pre_sha256 = Some(pre_sha);
    manifest.model_post_sha256 = Some(post_sha);

    let result = probe_degradation(&edited, &baseline, &prompts.prompts)?;
    let report = ProbeReport {
        command: "probe",
        prompts: prompts.prompts.len(),
        degradation: result.degradation,
        per_prompt: &result.per_prompt,
    };
    manifest.emit("report_json", &paths.json(), to_exact_json(&report).as_bytes())?;
    println!("degradation {:.16e}", result.degradation);
    finish(manifest, &paths.manifest(), timing)
}
