use anyhow::{bail, Context};
use chartopt_core::ingest::{load_table, load_task};
use chartopt_core::metrics::{SaliencyProvider, WaveTable};
use chartopt_core::objective::{Evaluator, ObjectiveWeights};
use chartopt_core::optim::{run, trace_from_jsonl, trace_to_jsonl, RunConfig};
use chartopt_core::render::{layout, overlay_aois, rasterise, task_aois, to_svg};
use chartopt_core::{default_spec, validate, ChartSpec};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "chartopt", about = "Task-driven bar chart design optimiser", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimise a chart design for a table and task
    Optimise(OptimiseArgs),
    /// Evaluate the objective for a chart spec once
    Score(ScoreArgs),
    /// Render a chart spec to PNG and SVG
    Render(RenderArgs),
    /// Summarise an optimisation trace
    Trace(TraceArgs),
}

#[derive(Args)]
struct EvalOpts {
    /// Objective weights as w,c,t,s
    #[arg(long, value_name = "W,C,T,S")]
    weights: Option<String>,
    /// Saliency provider: `proxy` or `file:<dir>`
    #[arg(long, default_value = "proxy")]
    saliency: String,
    /// (chart_id, task_id) key for file-backed saliency, as `chart.task`
    #[arg(long, value_name = "CHART.TASK")]
    saliency_key: Option<String>,
    /// Alternate WAVE anchor table (CSV with header r,g,b,valence)
    #[arg(long, value_name = "FILE")]
    wave: Option<PathBuf>,
}

#[derive(Args)]
struct OptimiseArgs {
    /// Data table (.csv with header category,value, or .json)
    #[arg(long)]
    table: PathBuf,
    /// Task annotation JSON ({"type", "targets", "question"})
    #[arg(long)]
    task: PathBuf,
    /// Output directory for best.json, best.png, best.svg, trace.jsonl
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u32,
    /// Total evaluation budget, initial design included
    #[arg(long, default_value_t = 50)]
    budget: usize,
    /// Size of the Sobol initial design
    #[arg(long, default_value_t = 16)]
    init: usize,
    /// Candidate pool size per acquisition step
    #[arg(long, default_value_t = 512)]
    pool: usize,
    /// Record per-iteration wall time in the trace (off keeps reruns
    /// byte-identical)
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    eval: EvalOpts,
}

#[derive(Args)]
struct ScoreArgs {
    /// Chart spec JSON
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    eval: EvalOpts,
}

#[derive(Args)]
struct RenderArgs {
    /// Chart spec JSON
    #[arg(long)]
    spec: PathBuf,
    /// Output path base; `.png` and `.svg` are appended
    #[arg(long)]
    out: PathBuf,
    /// Overlay task AOI rectangles on the PNG
    #[arg(long)]
    aoi: bool,
}

#[derive(Args)]
struct TraceArgs {
    /// Trace file (JSONL)
    #[arg(long)]
    trace: PathBuf,
}

fn parse_weights(s: &str) -> anyhow::Result<ObjectiveWeights> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad --weights {s:?}"))?;
    if parts.len() != 4 {
        bail!("--weights expects four values w,c,t,s; got {}", parts.len());
    }
    let w = ObjectiveWeights {
        w_w: parts[0],
        w_c: parts[1],
        w_t: parts[2],
        w_s: parts[3],
    };
    if let Some(msg) = w.violations() {
        bail!("bad --weights: {msg}");
    }
    Ok(w)
}

fn parse_saliency(s: &str) -> anyhow::Result<SaliencyProvider> {
    if s == "proxy" {
        Ok(SaliencyProvider::Proxy)
    } else if let Some(dir) = s.strip_prefix("file:") {
        Ok(SaliencyProvider::FileBacked {
            dir: PathBuf::from(dir),
        })
    } else {
        bail!("--saliency must be `proxy` or `file:<dir>`, got {s:?}")
    }
}

fn build_evaluator(opts: &EvalOpts) -> anyhow::Result<Evaluator> {
    let wave = match &opts.wave {
        Some(path) => WaveTable::from_csv_path(path)?,
        None => WaveTable::builtin(),
    };
    let mut evaluator = Evaluator::new(wave);
    if let Some(w) = &opts.weights {
        evaluator.weights = parse_weights(w)?;
    }
    evaluator.saliency = parse_saliency(&opts.saliency)?;
    if let Some(key) = &opts.saliency_key {
        let (chart, task) = key
            .split_once('.')
            .with_context(|| format!("--saliency-key expects `chart.task`, got {key:?}"))?;
        evaluator.saliency_key = Some((chart.to_string(), task.to_string()));
    }
    Ok(evaluator)
}

fn load_spec(path: &PathBuf) -> anyhow::Result<ChartSpec> {
    let data = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let spec: ChartSpec =
        serde_json::from_str(&data).with_context(|| format!("bad spec {}", path.display()))?;
    Ok(validate(spec)?)
}

fn cmd_optimise(args: OptimiseArgs) -> anyhow::Result<()> {
    let table = load_table(&args.table)?;
    let task = load_task(&args.task)?;
    // reject bad inputs up front with the full violation list
    default_spec(table.clone(), task.clone())?;

    let mut evaluator = build_evaluator(&args.eval)?;
    let config = RunConfig {
        budget: args.budget,
        init: args.init,
        pool_size: args.pool,
        seed: args.seed,
        weights: evaluator.weights,
        ..RunConfig::default()
    };
    evaluator.weights = config.weights;

    let outcome = run(&table, &task, &config, &evaluator)?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(
        args.out.join("best.json"),
        serde_json::to_string_pretty(&outcome.best_spec)?,
    )?;
    let scene = layout(&outcome.best_spec);
    let rendered = rasterise(&scene, scene.width, scene.height);
    std::fs::write(args.out.join("best.png"), rendered.raster.to_png_bytes()?)?;
    std::fs::write(args.out.join("best.svg"), to_svg(&scene))?;
    std::fs::write(
        args.out.join("trace.jsonl"),
        trace_to_jsonl(&outcome.trace, args.timing),
    )?;

    println!("{}", serde_json::to_string(&outcome.best_breakdown)?);
    eprintln!(
        "optimised {} trials in {:.2}s; best total {:.4} at iteration {}",
        outcome.trace.len(),
        outcome.elapsed_s,
        outcome.best_breakdown.total,
        outcome.best_iter
    );
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> anyhow::Result<()> {
    let spec = load_spec(&args.spec)?;
    let evaluator = build_evaluator(&args.eval)?;
    let breakdown = evaluator.evaluate(&spec)?;
    println!("{}", serde_json::to_string(&breakdown)?);
    Ok(())
}

fn cmd_render(args: RenderArgs) -> anyhow::Result<()> {
    let spec = load_spec(&args.spec)?;
    let scene = layout(&spec);
    let rendered = rasterise(&scene, scene.width, scene.height);
    let png = if args.aoi {
        let aois = task_aois(&rendered, &spec.task, &spec.table)?;
        overlay_aois(&rendered, &aois).to_png_bytes()?
    } else {
        rendered.raster.to_png_bytes()?
    };
    let png_path = args.out.with_extension("png");
    let svg_path = args.out.with_extension("svg");
    std::fs::write(&png_path, png)?;
    std::fs::write(&svg_path, to_svg(&scene))?;
    eprintln!("wrote {} and {}", png_path.display(), svg_path.display());
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> anyhow::Result<()> {
    let data = std::fs::read_to_string(&args.trace)?;
    let trace = trace_from_jsonl(&data)?;
    if trace.is_empty() {
        bail!("trace {} is empty", args.trace.display());
    }
    let best = trace
        .iter()
        .max_by(|a, b| a.total.partial_cmp(&b.total).unwrap())
        .unwrap();
    let flagged = trace.iter().filter(|r| !r.flags.is_empty()).count();
    let summary = serde_json::json!({
        "iterations": trace.len(),
        "best_total": best.total,
        "best_iter": best.iter,
        "final_best_so_far": trace.last().unwrap().best_so_far,
        "flagged_trials": flagged,
    });
    println!("{summary}");
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimise(args) => cmd_optimise(args),
        Command::Score(args) => cmd_score(args),
        Command::Render(args) => cmd_render(args),
        Command::Trace(args) => cmd_trace(args),
    };
    if let Err(e) = result {
        // single-line, machine-parsable
        eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
        std::process::exit(1);
    }
}
