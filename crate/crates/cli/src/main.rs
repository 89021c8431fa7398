//! `hetsense` command-line front end.
//!
//! Configuration is layered: the subcommand's preset, then the `--config` TOML file,
//! then any `--key=value` flags naming config keys, then `--seed`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};

use hetsense::dmd::{self, DmdModel, SnapshotPair};
use hetsense::field::{self, Workspace};
use hetsense::harness::bench::{run_timing_benchmark, BenchEnv, PAPER_ENVS, TIMING_HEADER};
use hetsense::harness::forgetting::{run_forgetting_comparison, Regime, FORGETTING_HEADER};
use hetsense::harness::metrics::{fmt_f64, write_metrics_csv};
use hetsense::harness::scenario::{final_third_mean, Truth};
use hetsense::harness::trials::run_eigenvalue_trials;
use hetsense::harness::{run_scenario, ExperimentConfig, Method};
use hetsense::io::{self, Checkpoint, SnapshotMatrix};
use hetsense::online;
use hetsense::placement;
use hetsense::rng::{self, Purpose};

#[derive(Parser)]
#[command(name = "hetsense", version, about = "Heterogeneous field modeling, placement and online DMD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file with config keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random stream; required by stochastic commands.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic series (t_total + 1 snapshots on the full grid).
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output file; `.csv` for text, anything else for binary.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model on a series file. `method = "batch"` writes a model checkpoint,
    /// `general`/`longterm` an online state that `update` can extend.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feed the snapshots of a series file to a checkpointed online state.
    Update {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Where to write the updated state; defaults to overwriting `--state`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Choose sensing regions from a model or state checkpoint.
    Place {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Placement CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop heterogeneous sensing run.
    Scenario {
        #[command(flatten)]
        common: Common,
        /// Metrics CSV.
        #[arg(long)]
        out: PathBuf,
        /// Final marine placement CSV.
        #[arg(long)]
        placement_out: Option<PathBuf>,
        /// Final heterogeneous model checkpoint.
        #[arg(long)]
        checkpoint_out: Option<PathBuf>,
    },
    /// Dominant-eigenvalue tracking over noisy LTI trials, all three methods.
    Eigtrials {
        #[command(flatten)]
        common: Common,
        /// Per-update trace CSV.
        #[arg(long)]
        out: PathBuf,
        /// Median/quartile CSV; printed to stdout when omitted.
        #[arg(long)]
        summary_out: Option<PathBuf>,
    },
    /// Update/extraction timing of the three methods.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Time the environment described by the config (full grid, t_total,
        /// init_t, update_every) instead of the four reference environments.
        #[arg(long)]
        config_env: bool,
    },
    /// Long-term updates with each forgetting factor on switched and stationary streams.
    Forgetting {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Splits `--key=value` flags that are not options of `subcommand` off as config overrides.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let Some(sub) = args.get(1).cloned() else { return (args, Vec::new()) };
    let cmd = Cli::command();
    let Some(sc) = cmd.find_subcommand(&sub) else { return (args, Vec::new()) };
    let known: Vec<String> = sc.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect();
    let mut kept = Vec::new();
    let mut overrides = Vec::new();
    for (i, a) in args.into_iter().enumerate() {
        if i >= 2 {
            if let Some((k, v)) = a.strip_prefix("--").and_then(|rest| rest.split_once('=')) {
                if !known.iter().any(|n| n == k) {
                    overrides.push((k.to_string(), v.to_string()));
                    continue;
                }
            }
        }
        kept.push(a);
    }
    (kept, overrides)
}

fn build_config(preset: ExperimentConfig, common: &Common, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut cfg = preset;
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg = cfg.merged(&text).with_context(|| format!("in {}", path.display()))?;
    }
    for (k, v) in overrides {
        cfg.apply_override(k, v).with_context(|| format!("override --{k}={v}"))?;
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    Ok(cfg)
}

fn seed_of(cfg: &ExperimentConfig, command: &str) -> Result<u64> {
    cfg.seed.with_context(|| format!("`{command}` is stochastic: pass --seed=<u64> (or set `seed` in the config)"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn summarize(model: &DmdModel) -> String {
    let omega = model
        .dominant_eigenvalue()
        .filter(|l| l.norm() > 0.0)
        .map(|l| l.ln() / model.dt)
        .map_or("undefined".to_string(), |w| format!("{:.6} {:+.6}i", w.re, w.im));
    format!("rank {}, dominant omega {omega}", model.rank())
}

fn model_of(cp: &Checkpoint) -> Result<DmdModel> {
    Ok(match cp {
        Checkpoint::Model(m) => m.clone(),
        Checkpoint::General(st) => online::general_model(st)?,
        Checkpoint::LongTerm(st) => online::longterm_model(st)?,
    })
}

fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let seed = seed_of(cfg, "generate")?;
    if cfg.generator == hetsense::harness::Generator::ExternalSeries {
        bail!("generator = \"external_series\" reads data; choose damped_oscillation or lti");
    }
    let (truth, ws, dt) = Truth::from_config(cfg, seed)?;
    let mut noise = rng::stream(seed, 0, Purpose::Noise);
    let snaps = (0..=cfg.t_total)
        .map(|k| field::inject_noise_with(&truth.at(&ws, k, dt)?, cfg.noise_variance, &mut noise))
        .collect::<hetsense::Result<Vec<_>>>()?;
    let series = field::SnapshotSeries::new(snaps, dt)?;
    io::save_snapshots(out, &SnapshotMatrix::from_series(&series, Some(&ws)))?;
    println!("wrote {} snapshots of {} points to {}", series.len(), ws.len(), out.display());
    Ok(())
}

fn fit(cfg: &ExperimentConfig, input: &Path, out: &Path) -> Result<()> {
    let data = io::load_snapshots(input)?;
    if data.values.ncols() < 2 {
        bail!("{} holds fewer than two snapshots", input.display());
    }
    let cols = data.values.ncols() - 1;
    let pair = SnapshotPair::new(
        data.values.subcols(0, cols).to_owned(),
        data.values.subcols(1, cols).to_owned(),
        data.dt,
    )?;
    let cp = match cfg.method {
        Method::Batch => Checkpoint::Model(dmd::fit_dmd(&pair, cfg.rank_policy())?),
        Method::General => {
            Checkpoint::General(online::init_general_with(&pair, cfg.rank_policy(), cfg.time_stride, cfg.anchor)?)
        }
        Method::Longterm => Checkpoint::LongTerm(online::init_longterm_with(&pair, cfg.gamma, cfg.anchor)?),
    };
    io::save_checkpoint(out, &cp)?;
    println!("{} on {cols} pairs: {}; wrote {}", cp.kind(), summarize(&model_of(&cp)?), out.display());
    Ok(())
}

fn update(state: &Path, input: &Path, out: &Path) -> Result<()> {
    let mut cp = io::load_checkpoint(state)?;
    let data = io::load_snapshots(input)?;
    let latest = match &cp {
        Checkpoint::General(st) => st.latest_snapshot().to_vec(),
        Checkpoint::LongTerm(st) => st.latest_snapshot().to_vec(),
        Checkpoint::Model(_) => bail!("{} is a fitted model; refit with method = \"general\" or \"longterm\" to update", state.display()),
    };
    let n = latest.len();
    if data.values.nrows() != n {
        bail!("{} has {} points per snapshot, the state has {n}", input.display(), data.values.nrows());
    }
    let k = data.values.ncols();
    if k == 0 {
        bail!("{} holds no snapshots", input.display());
    }
    // the stored latest snapshot links the new batch to the stream seen so far
    let x = faer::Mat::from_fn(n, k, |i, j| if j == 0 { latest[i] } else { data.values[(i, j - 1)] });
    match &mut cp {
        Checkpoint::General(st) => online::update_general(st, x.as_ref(), data.values.as_ref())?,
        Checkpoint::LongTerm(st) => online::update_longterm(st, x.as_ref(), data.values.as_ref())?,
        Checkpoint::Model(_) => unreachable!(),
    }
    io::save_checkpoint(out, &cp)?;
    println!("applied {k} pairs: {}; wrote {}", summarize(&model_of(&cp)?), out.display());
    Ok(())
}

fn place(cfg: &ExperimentConfig, model_path: &Path, out: Option<&Path>) -> Result<()> {
    let model = model_of(&io::load_checkpoint(model_path)?)?;
    let ws: Workspace = cfg.full_workspace()?;
    if ws.len() != model.n_points() {
        bail!(
            "the model has {} points but the configured grid is {}x{}; set full_width/full_height",
            model.n_points(),
            ws.width(),
            ws.height()
        );
    }
    let p = placement::optimal_placement(&model, &ws, cfg.sensing_radius, cfg.mv_count)?;
    match out {
        Some(path) => {
            io::save_placement(path, &p, &ws)?;
            println!("placed {} regions: centers {:?}; wrote {}", p.len(), p.centers(), path.display());
        }
        None => io::write_placement_csv(std::io::stdout().lock(), &p, &ws)?,
    }
    Ok(())
}

fn scenario(cfg: &ExperimentConfig, out: &Path, placement_out: Option<&Path>, checkpoint_out: Option<&Path>) -> Result<()> {
    seed_of(cfg, "scenario")?;
    let res = run_scenario(cfg)?;
    let mut w = create(out)?;
    write_metrics_csv(&mut w, &res.records)?;
    w.flush()?;
    if let Some(path) = placement_out {
        io::save_placement(path, &res.placement, &res.model_workspace)?;
    }
    if let (Some(path), Some(model)) = (checkpoint_out, &res.model) {
        io::save_checkpoint(path, &Checkpoint::Model(model.clone()))?;
    }
    println!(
        "{} records; final-third mean MSE: heterogeneous {:.4e}, av-only {:.4e}, mv-only {:.4e}",
        res.records.len(),
        final_third_mean(&res.records, |r| r.mse_heterogeneous),
        final_third_mean(&res.records, |r| r.mse_av_only),
        final_third_mean(&res.records, |r| r.mse_mv_only)
    );
    Ok(())
}

const TRACE_HEADER: &str = "method,variance,trial,step,time,omega_re,omega_im";
const SUMMARY_HEADER: &str = "method,variance,count,median_re,q1_re,q3_re,median_im,q1_im,q3_im";

fn eigtrials(cfg: &ExperimentConfig, out: &Path, summary_out: Option<&Path>) -> Result<()> {
    seed_of(cfg, "eigtrials")?;
    let rep = run_eigenvalue_trials(cfg, &Method::ALL)?;
    let mut w = create(out)?;
    writeln!(w, "{TRACE_HEADER}")?;
    for p in &rep.traces {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.method.name(),
            fmt_f64(p.variance),
            p.trial,
            p.step,
            fmt_f64(p.time),
            fmt_f64(p.omega_re),
            fmt_f64(p.omega_im)
        )?;
    }
    w.flush()?;
    let mut sink: Box<dyn Write> = match summary_out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(sink, "{SUMMARY_HEADER}")?;
    for s in &rep.summaries {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{},{}",
            s.method.name(),
            fmt_f64(s.variance),
            s.count,
            fmt_f64(s.median_re),
            fmt_f64(s.q1_re),
            fmt_f64(s.q3_re),
            fmt_f64(s.median_im),
            fmt_f64(s.q1_im),
            fmt_f64(s.q3_im)
        )?;
    }
    sink.flush()?;
    Ok(())
}

fn bench(cfg: &ExperimentConfig, out: &Path, config_env: bool) -> Result<()> {
    seed_of(cfg, "bench")?;
    let envs = if config_env {
        vec![BenchEnv {
            steps: cfg.t_total,
            width: cfg.full_width,
            height: cfg.full_height,
            init_t: cfg.init_t,
            update_every: cfg.update_every,
        }]
    } else {
        PAPER_ENVS.to_vec()
    };
    let rows = run_timing_benchmark(&envs, cfg)?;
    let mut w = create(out)?;
    writeln!(w, "{TIMING_HEADER}")?;
    for r in &rows {
        let line = format!(
            "{},{},{},{},{}",
            r.env.label(),
            r.method.name(),
            r.updates,
            fmt_f64(r.seconds_no_eig),
            fmt_f64(r.seconds_with_eig)
        );
        writeln!(w, "{line}")?;
        println!("{line}");
    }
    w.flush()?;
    Ok(())
}

fn forgetting(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    seed_of(cfg, "forgetting")?;
    let regimes = if cfg.switch_eigs.is_empty() { vec![Regime::Stationary] } else { vec![Regime::Switched, Regime::Stationary] };
    let rows = run_forgetting_comparison(cfg, &regimes)?;
    let mut w = create(out)?;
    writeln!(w, "{FORGETTING_HEADER}")?;
    for r in &rows {
        let estimator = r.gamma.map_or("batch".to_string(), |g| format!("gamma={g}"));
        writeln!(w, "{},{estimator},{},{},{},{}", r.regime.name(), r.trial, fmt_f64(r.omega_re), fmt_f64(r.omega_im), fmt_f64(r.error))?;
    }
    w.flush()?;
    for regime in regimes {
        let mut line = format!("{}:", regime.name());
        for g in cfg.gammas.iter().map(|&g| Some(g)).chain([None]) {
            let e = hetsense::harness::forgetting::errors(&rows, regime, g);
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            let label = g.map_or("batch".to_string(), |g| format!("gamma={g}"));
            line.push_str(&format!(" {label} mean error {mean:.4e};"));
        }
        println!("{line}");
    }
    Ok(())
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    let cfg = |preset: ExperimentConfig, common: &Common| -> Result<Option<ExperimentConfig>> {
        let cfg = build_config(preset, common, overrides)?;
        if common.print_config {
            print!("{}", cfg.to_toml());
            return Ok(None);
        }
        Ok(Some(cfg))
    };
    match cli.command {
        Command::Generate { common, out } => {
            if let Some(c) = cfg(ExperimentConfig::default(), &common)? {
                generate(&c, &out)?;
            }
        }
        Command::Fit { common, input, out } => {
            if let Some(c) = cfg(ExperimentConfig::default(), &common)? {
                fit(&c, &input, &out)?;
            }
        }
        Command::Update { common, state, input, out } => {
            if cfg(ExperimentConfig::default(), &common)?.is_some() {
                let dest = out.unwrap_or_else(|| state.clone());
                update(&state, &input, &dest)?;
            }
        }
        Command::Place { common, model, out } => {
            if let Some(c) = cfg(ExperimentConfig::default(), &common)? {
                place(&c, &model, out.as_deref())?;
            }
        }
        Command::Scenario { common, out, placement_out, checkpoint_out } => {
            if let Some(c) = cfg(ExperimentConfig::default(), &common)? {
                scenario(&c, &out, placement_out.as_deref(), checkpoint_out.as_deref())?;
            }
        }
        Command::Eigtrials { common, out, summary_out } => {
            if let Some(c) = cfg(ExperimentConfig::eigtrials_preset(), &common)? {
                eigtrials(&c, &out, summary_out.as_deref())?;
            }
        }
        Command::Bench { common, out, config_env } => {
            if let Some(c) = cfg(ExperimentConfig::bench_preset(), &common)? {
                bench(&c, &out, config_env)?;
            }
        }
        Command::Forgetting { common, out } => {
            if let Some(c) = cfg(ExperimentConfig::forgetting_preset(), &common)? {
                forgetting(&c, &out)?;
            }
        }
    }
    Ok(())
}

fn main() {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    if let Err(e) = run(cli, &overrides) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
