use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use sirude_core::experiment::{
    build_geography, distill, fit_model, run_experiment, simulate_scenario, ExperimentConfig, JobId,
};
use sirude_core::io::{
    self, bar_figures, cumulative_figures, load_run, read_dataset, read_json, trajectory_csv,
    trajectory_figures, write_dataset, write_json, write_plot, write_run, write_text, GeographyFile,
    RunDir,
};
use sirude_core::metrics::{aggregate_report, score, ScoredRun};
use sirude_core::models::{make_target_view, predict, ModelKind};
use sirude_core::sim::Scenario;
use sirude_core::{Dataset64, Model64};

#[derive(Parser, Debug)]
#[command(name = "sirude", version, about = "Regional outbreak simulation and SIR/UDE model study")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment configuration (JSON). Overrides --preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in configuration when no --config is given.
    #[arg(long, global = true, default_value = "paper", value_parser = ["paper", "desk"])]
    preset: String,

    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; every written path is relative to it.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the geography and mobility matrix.
    Geography,
    /// Simulate ground-truth outbreaks for every configured scenario.
    Simulate,
    /// Train one model on one region of one initialization.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Score the predictions stored in a run directory.
    Evaluate(EvaluateArgs),
    /// Replace the coupling network of a SIR+UDE model by a sparse regression.
    Sindy(SindyArgs),
    /// Run the whole experiment grid and write a run directory.
    RunAll,
    /// Draw figures from a run directory.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset sidecar JSON; simulated from the configuration when omitted.
    #[arg(long)]
    data: Option<PathBuf>,

    #[arg(long, default_value = "no_recovered", value_parser = scenario_arg)]
    scenario: Scenario,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// sir, ude or sir+ude.
    #[arg(long, value_parser = model_arg)]
    model: ModelKind,

    /// Target region, counted from 1.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    region: u64,

    /// Initialization index, counted from 0.
    #[arg(long, default_value_t = 0)]
    init: usize,

    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Model JSON written by `fit`, `sindy` or `run-all`.
    #[arg(long)]
    model: PathBuf,

    #[arg(long, value_enum, default_value_t = WindowArg::Both)]
    window: WindowArg,

    #[command(flatten)]
    data: DataArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WindowArg {
    Test,
    Full,
    Both,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Run directory written by `run-all`.
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct SindyArgs {
    /// SIR+UDE model JSON.
    #[arg(long)]
    model: PathBuf,

    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long, value_enum)]
    kind: PlotKindArg,

    /// Run directory written by `run-all`.
    #[arg(long = "in")]
    input: PathBuf,

    /// Initialization for trajectory plots.
    #[arg(long, default_value_t = 0)]
    init: usize,

    /// Region for trajectory plots, counted from 1.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    region: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlotKindArg {
    Cumulative,
    Bar,
    Trajectory,
}

fn scenario_arg(s: &str) -> Result<Scenario, String> {
    Scenario::from_slug(s).ok_or_else(|| format!("unknown scenario {s:?} (no_recovered, quarter_recovered)"))
}

fn model_arg(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => read_json(path)?,
        None => ExperimentConfig::preset(&g.preset).context("unknown preset")?,
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = g.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset(cfg: &ExperimentConfig, args: &DataArgs) -> Result<Dataset64> {
    if let Some(path) = &args.data {
        return Ok(read_dataset(path)?);
    }
    if !cfg.scenarios.contains(&args.scenario) {
        bail!("scenario {} is not part of the configuration", args.scenario.slug());
    }
    let (geo, m) = build_geography(cfg)?;
    Ok(simulate_scenario(cfg, &geo, &m, args.scenario)?)
}

fn write_geography(cfg: &ExperimentConfig, dir: &RunDir) -> Result<()> {
    let (geography, mobility) = build_geography(cfg)?;
    write_json(&dir.geography(), &GeographyFile { geography, mobility })?;
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, dir: &RunDir) -> Result<()> {
    let (geo, m) = build_geography(cfg)?;
    write_json(
        &dir.geography(),
        &GeographyFile {
            geography: geo.clone(),
            mobility: m.clone(),
        },
    )?;
    write_json(&dir.config(), cfg)?;
    for &s in &cfg.scenarios {
        let data = simulate_scenario(cfg, &geo, &m, s)?;
        let side = write_dataset(&dir.datasets(), s.slug(), &data)?;
        println!("{}", side.display());
    }
    Ok(())
}

fn cmd_fit(cfg: &ExperimentConfig, dir: &RunDir, args: &FitArgs) -> Result<()> {
    if args.model == ModelKind::SirSindy {
        bail!("sir+sindy models come from the `sindy` command");
    }
    let data = dataset(cfg, &args.data)?;
    let region = args.region as usize - 1;
    let view = make_target_view(&data, args.init, region, cfg.train_days())?;
    let job = JobId {
        scenario: data.provenance.scenario,
        init: args.init,
        region,
        kind: args.model,
    };
    let model = fit_model(args.model, &view, &cfg.fit, job.seed(cfg.seed))?;
    let path = dir.model(&job);
    write_json(&path, &model)?;
    if let Some(loss) = model.final_loss() {
        info!("final training loss {loss:.6e}");
    }
    println!("{}", path.display());
    Ok(())
}

fn cmd_predict(cfg: &ExperimentConfig, dir: &RunDir, args: &PredictArgs) -> Result<()> {
    let model: Model64 = read_json(&args.model)?;
    model.validate()?;
    let data = dataset(cfg, &args.data)?;
    let t = model.target.clone();
    let view = make_target_view(&data, t.init, t.region, t.train_days)?;
    let job = JobId {
        scenario: data.provenance.scenario,
        init: t.init,
        region: t.region,
        kind: model.kind,
    };
    let windows: &[(&str, (usize, usize))] = match args.window {
        WindowArg::Test => &[("test", (t.train_days.1 + 1, view.days))],
        WindowArg::Full => &[("full", (1, view.days))],
        WindowArg::Both => &[("test", (t.train_days.1 + 1, view.days)), ("full", (1, view.days))],
    };
    for (name, span) in windows {
        let traj = predict(&model, &view, *span)?;
        let path = dir.prediction(&job, name);
        write_text(&path, &trajectory_csv(span.0, &traj))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_evaluate(dir: &RunDir, args: &EvaluateArgs) -> Result<()> {
    let run = load_run(&args.input)?;
    let cfg = &run.config;
    let mut scored = Vec::with_capacity(run.jobs.len());
    for j in &run.jobs {
        let scores = if j.has_predictions {
            let data = run.dataset(j.job.scenario).context("dataset missing")?;
            let view = make_target_view(data, j.job.init, j.job.region, cfg.train_days())?;
            let (test, full) = run.predictions(&j.job)?;
            Some(score(&view.target, &test, &full, view.target_pop, cfg.train_split + 1)?)
        } else {
            None
        };
        scored.push(ScoredRun {
            scenario: j.job.scenario,
            init: j.job.init,
            region: j.job.region,
            kind: j.job.kind,
            scores,
        });
    }
    let report = aggregate_report(&scored);
    let csv = io::report_csv(&report);
    write_text(&dir.report_csv(), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_sindy(cfg: &ExperimentConfig, dir: &RunDir, args: &SindyArgs) -> Result<()> {
    let model: Model64 = read_json(&args.model)?;
    model.validate()?;
    let data = dataset(cfg, &args.data)?;
    let t = model.target.clone();
    let view = make_target_view(&data, t.init, t.region, t.train_days)?;
    let out = distill(cfg, &view, &model)?;
    let job = JobId {
        scenario: data.provenance.scenario,
        init: t.init,
        region: t.region,
        kind: ModelKind::SirSindy,
    };
    let reg_path = dir.root.join("sindy").join(format!("{}.json", job.stem()));
    write_json(&reg_path, &out)?;
    if let Some(m) = &out.model {
        write_json(&dir.model(&job), m)?;
        println!("{}", dir.model(&job).display());
    }
    write_text(&dir.prediction(&job, "test"), &trajectory_csv(cfg.train_split + 1, &out.pred_test))?;
    write_text(&dir.prediction(&job, "full"), &trajectory_csv(1, &out.pred_full))?;
    if let Some(reg) = &out.regression {
        let terms: Vec<String> = reg
            .terms
            .iter()
            .zip(&reg.coefficients)
            .filter(|(_, c)| **c != 0.0)
            .map(|(t, c)| format!("{c:+.6e}*{t}"))
            .collect();
        println!("g = {}", if terms.is_empty() { "0".into() } else { terms.join(" ") });
        for flag in &reg.flags {
            println!("note: {flag}");
        }
    }
    if let Some(s) = out.sindy_scores {
        println!("test MAE {:.6} test AIE {:.6}", s.test_mae, s.test_aie);
    }
    println!("{}", reg_path.display());
    Ok(())
}

fn cmd_run_all(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let result = run_experiment(cfg)?;
    let dir = write_run(out, &result)?;
    println!(
        "{} jobs, {} failed; report at {}",
        result.records.len(),
        result.failures(),
        dir.report_csv().display()
    );
    Ok(())
}

fn cmd_plot(out: &Path, args: &PlotArgs) -> Result<()> {
    let run = load_run(&args.input)?;
    let figures = match args.kind {
        PlotKindArg::Cumulative => cumulative_figures(&run)?,
        PlotKindArg::Bar => bar_figures(&run)?,
        PlotKindArg::Trajectory => trajectory_figures(&run, args.init, args.region as usize - 1)?,
    };
    for (stem, spec) in &figures {
        write_plot(out, stem, spec)?;
        println!("{}", out.join(format!("{stem}.svg")).display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let dir = RunDir::new(&cli.global.out);
    match &cli.command {
        Command::Evaluate(args) => cmd_evaluate(&dir, args),
        Command::Plot(args) => cmd_plot(&cli.global.out, args),
        command => {
            let cfg = load_config(&cli.global)?;
            match command {
                Command::Geography => write_geography(&cfg, &dir),
                Command::Simulate => cmd_simulate(&cfg, &dir),
                Command::Fit(args) => cmd_fit(&cfg, &dir, args),
                Command::Predict(args) => cmd_predict(&cfg, &dir, args),
                Command::Sindy(args) => cmd_sindy(&cfg, &dir, args),
                Command::RunAll => cmd_run_all(&cfg, &cli.global.out),
                Command::Evaluate(_) | Command::Plot(_) => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.ends_with(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
