//! Subcommands. Each one writes its CSV artifacts and a manifest into the
//! output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use sdegan::gan::{self, stream_rng, streams, write_training_log, Monitor, Snapshot, TrainedGan};
use sdegan::paths::{self, draw_normals, generate_paths, linspace, ExactMap, PathSource};
use sdegan::preprocess::build_training_set;
use sdegan::stats::{benchmark_sweep, NamedSampler};
use sdegan::{ConditionalGenerator, GanVariant, SchemeKind, SdeModel, TrainingSet};

use crate::checkpoint::Checkpoint;
use crate::config::{parse_config, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "sdegan", version, about = "Train and evaluate conditional GAN samplers for GBM and CIR")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Vanilla,
    Supervised,
}

impl From<VariantArg> for GanVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Vanilla => GanVariant::Vanilla,
            VariantArg::Supervised => GanVariant::Supervised,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, env = "SDEGAN_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "SDEGAN_SEED")]
    pub seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true, env = "SDEGAN_OUT")]
    pub out: Option<PathBuf>,
    /// Trained model for the evaluation commands.
    #[arg(long, global = true, env = "SDEGAN_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    /// Time step for single-condition commands.
    #[arg(long, global = true, env = "SDEGAN_DT")]
    pub dt: Option<f64>,
    /// Starting level.
    #[arg(long, global = true, env = "SDEGAN_S0")]
    pub s0: Option<f64>,
    /// Number of samples or paths.
    #[arg(long, global = true, env = "SDEGAN_N")]
    pub n: Option<usize>,
    #[arg(long, global = true, env = "SDEGAN_VARIANT", value_enum)]
    pub variant: Option<VariantArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Build the supervised training set: training_set.csv.
    GenData,
    /// Train a GAN: model.ckpt, checkpoints/, training_log.csv.
    Train,
    /// One-step distribution distances: monitor.csv, sweep.csv, sweep_summary.csv, samples.csv.
    EvalDist,
    /// Weak and strong error against exact paths: errors.csv.
    ErrorSweep,
    /// Sample paths with shared noise: paths_<source>.csv.
    PathSim,
    /// Long-run mean of iterated CIR steps: mean_revert.csv.
    MeanRevert,
    /// Generator output against the exact map on a z grid: map.csv.
    MapDump,
    /// Supervised discriminator on a (z, r) grid: disc_grid.csv.
    DiscGrid,
    /// Exact and generated next levels from exact states: autocorr.csv.
    Autocorr,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::EvalDist => "eval-dist",
            Command::ErrorSweep => "error-sweep",
            Command::PathSim => "path-sim",
            Command::MeanRevert => "mean-revert",
            Command::MapDump => "map-dump",
            Command::DiscGrid => "disc-grid",
            Command::Autocorr => "autocorr",
        }
    }
}

/// Resolved configuration plus command-line overrides.
pub struct Context {
    pub config: RunConfig,
    pub args: GlobalArgs,
    pub out: PathBuf,
    pub config_hash: String,
}

impl Context {
    pub fn resolve(args: GlobalArgs) -> CliResult<Self> {
        let mut config = match &args.config {
            Some(path) => parse_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(v) = args.variant {
            config.variant = v.into();
        }
        config.validate()?;
        for (flag, v) in [("--dt", args.dt), ("--s0", args.s0)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(CliError::Usage(format!("{flag} must be positive, got {v}")));
                }
            }
        }
        if args.n == Some(0) {
            return Err(CliError::Usage("--n must be positive".into()));
        }
        let out = args.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        let config_hash = config.hash()?;
        Ok(Context { config, args, out, config_hash })
    }

    /// A context without command-line overrides.
    pub fn from_config(config: RunConfig, out: PathBuf) -> CliResult<Self> {
        config.validate()?;
        let config_hash = config.hash()?;
        let args = GlobalArgs { out: Some(out.clone()), ..GlobalArgs::default() };
        Ok(Context { config, args, out, config_hash })
    }

    fn seed(&self) -> u64 {
        self.config.seed
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        stream_rng(self.seed(), stream)
    }

    fn checkpoint(&self) -> CliResult<Option<Checkpoint>> {
        let Some(path) = &self.args.checkpoint else { return Ok(None) };
        let ck = Checkpoint::load(path)?;
        if ck.config_hash != self.config_hash {
            log::warn!("checkpoint was trained under config {}, current config is {}", ck.config_hash, self.config_hash);
        }
        Ok(Some(ck))
    }

    fn require_checkpoint(&self, command: Command) -> CliResult<Checkpoint> {
        self.checkpoint()?
            .ok_or_else(|| CliError::Usage(format!("{} needs --checkpoint <model.ckpt>", command.name())))
    }
}

/// Default starting level: the monitor state of the model.
pub fn default_s0(model: &SdeModel) -> f64 {
    gan::MonitorCondition::default_for(model).s_t
}

pub const MEAN_REVERT_S0: f64 = 0.01;

struct Outputs {
    dir: PathBuf,
    manifest: Manifest,
}

impl Outputs {
    fn new(ctx: &Context, command: Command) -> CliResult<Self> {
        std::fs::create_dir_all(&ctx.out)?;
        Ok(Outputs { dir: ctx.out.clone(), manifest: Manifest::new(command.name(), &ctx.config_hash, ctx.seed()) })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        drop(w);
        self.manifest.add(&self.dir, name)
    }

    fn rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> CliResult<()> {
        self.write(name, |w| Ok(paths::write_rows(w, rows)?))
    }

    fn finish(self) -> CliResult<()> {
        self.manifest.write(&self.dir)?;
        log::info!("wrote {} artifacts to {}", self.manifest.artifacts.len(), self.dir.display());
        Ok(())
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let ctx = Context::resolve(cli.global)?;
    run_command(&ctx, cli.command)
}

pub fn run_command(ctx: &Context, command: Command) -> CliResult<()> {
    match command {
        Command::GenData => gen_data(ctx),
        Command::Train => train(ctx).map(|_| ()),
        Command::EvalDist => eval_dist(ctx),
        Command::ErrorSweep => error_sweep(ctx),
        Command::PathSim => path_sim(ctx),
        Command::MeanRevert => mean_revert(ctx),
        Command::MapDump => map_dump(ctx),
        Command::DiscGrid => disc_grid(ctx),
        Command::Autocorr => autocorr(ctx),
    }
}

pub fn training_set(config: &RunConfig) -> CliResult<TrainingSet> {
    let model = config.model()?;
    let mut rng = stream_rng(config.seed, streams::TRAINING_SET);
    let d = &config.data;
    let set = build_training_set(&model, config.transform()?, &d.dt_grid, &d.s_t_grid, d.n_train, d.pairing, &mut rng)?;
    if set.meta.z_clamps > 0 {
        log::warn!("{} training rows hit the z clamp", set.meta.z_clamps);
    }
    Ok(set)
}

fn gen_data(ctx: &Context) -> CliResult<()> {
    let set = training_set(&ctx.config)?;
    let mut out = Outputs::new(ctx, Command::GenData)?;
    out.write("training_set.csv", |w| Ok(set.write_csv(w)?))?;
    out.finish()
}

fn log_header(meta: &gan::GanMeta, config_hash: &str) -> Vec<String> {
    vec![
        format!("variant {} model {:?}", meta.variant.name(), meta.model),
        format!("monitor s_t {} dt {} samples {}", meta.monitor.s_t, meta.monitor.dt, meta.eval_samples),
        format!("seed {} config {config_hash}", meta.seed),
        format!("init {}", meta.init),
    ]
}

/// Trains and writes `model.ckpt`, periodic checkpoints and the training log.
pub fn train(ctx: &Context) -> CliResult<TrainedGan> {
    let set = training_set(&ctx.config)?;
    let mut out = Outputs::new(ctx, Command::Train)?;
    let cfg = ctx.config.train_config();
    let mut saved = Vec::new();
    let dir = out.dir.clone();
    let hash = ctx.config_hash.clone();
    let trained = gan::train_with(ctx.config.variant, &set, &cfg, &mut |s: Snapshot<'_>| {
        let name = format!("checkpoints/epoch_{:04}.ckpt", s.epoch);
        Checkpoint::new(s.meta, &hash, s.epoch, s.iteration, s.generator, s.discriminator, s.log)
            .save(&dir.join(&name))
            .map_err(|e| sdegan::Error::Io(e.to_string()))?;
        log::info!("epoch {}: saved {name}", s.epoch);
        saved.push(name);
        Ok(())
    })?;
    for name in &saved {
        out.manifest.add(&dir, name)?;
    }
    let epochs = ctx.config.train.epochs;
    let ck = Checkpoint::from_trained(&trained, &ctx.config_hash, epochs);
    out.write("model.ckpt", |w| Ok(w.write_all(ck.encode()?.as_bytes())?))?;
    let header = log_header(&trained.meta, &ctx.config_hash);
    out.write("training_log.csv", |w| Ok(write_training_log(w, &header, &trained.log)?))?;
    let toml = ctx.config.to_toml()?;
    out.write("config.toml", |w| Ok(w.write_all(toml.as_bytes())?))?;
    out.finish()?;
    Ok(trained)
}

#[derive(Serialize)]
struct MonitorRow {
    iteration: usize,
    ks: f64,
    w1: f64,
    logged_ks: f64,
    logged_w1: f64,
}

#[derive(Serialize)]
struct SampleRow {
    z: f64,
    gan: f64,
    exact: f64,
}

fn eval_dist(ctx: &Context) -> CliResult<()> {
    let ck = ctx.require_checkpoint(Command::EvalDist)?;
    let g = ck.generator()?;
    let meta = &ck.meta;
    let model = meta.model;
    let mut out = Outputs::new(ctx, Command::EvalDist)?;

    // recomputes the last logged monitor value from the stored network
    let monitor = Monitor::new(&model, meta.monitor, meta.eval_samples, meta.seed)?;
    let (ks, w1) = monitor.evaluate(&g)?;
    let last = ck.log.last();
    out.rows(
        "monitor.csv",
        &[MonitorRow {
            iteration: meta.iterations,
            ks,
            w1,
            logged_ks: last.map_or(f64::NAN, |r| r.ks),
            logged_w1: last.map_or(f64::NAN, |r| r.w1),
        }],
    )?;

    let s0 = ctx.args.s0.unwrap_or(meta.monitor.s_t);
    let dt = ctx.args.dt.unwrap_or(meta.monitor.dt);
    let normals = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let gan_sampler = |n: usize, rng: &mut ChaCha8Rng| g.step(&vec![s0; n], dt, &normals(n, rng));
    let scheme_samplers: Vec<(SchemeKind, Box<sdegan::stats::SampleFn<'_>>)> = SchemeKind::baselines_for(&model)
        .into_iter()
        .map(|k| {
            let f: Box<sdegan::stats::SampleFn<'_>> = Box::new(move |n: usize, rng: &mut ChaCha8Rng| {
                normals(n, rng).iter().map(|&z| k.step(&model, s0, dt, z)).collect()
            });
            (k, f)
        })
        .collect();
    let mut samplers = vec![NamedSampler { name: "gan".into(), sample: &gan_sampler }];
    for (k, f) in &scheme_samplers {
        samplers.push(NamedSampler { name: k.name().into(), sample: f.as_ref() });
    }
    let reference = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| model.exact_sample(s0, dt, rng)).collect();
    let sweep_seed = ctx.rng(streams::EVALUATION).next_u64();
    let report = benchmark_sweep(&samplers, &reference, &ctx.config.eval.n_list, ctx.config.eval.repeats, sweep_seed)?;
    out.write("sweep.csv", |w| Ok(report.write_csv(w)?))?;
    out.write("sweep_summary.csv", |w| Ok(report.write_summary_csv(w)?))?;

    let n = ctx.args.n.unwrap_or(10_000);
    let mut rng = ctx.rng(streams::EVALUATION);
    let z = normals(n, &mut rng);
    let states = vec![s0; n];
    let gan_next = g.step(&states, dt, &z)?;
    let exact_next = ExactMap::new(model).step(&states, dt, &z)?;
    let rows: Vec<SampleRow> =
        (0..n).map(|i| SampleRow { z: z[i], gan: gan_next[i], exact: exact_next[i] }).collect();
    out.rows("samples.csv", &rows)?;
    out.finish()
}

#[derive(Serialize)]
struct ExtrapolationRow {
    source: String,
    dt: f64,
}

fn error_sweep(ctx: &Context) -> CliResult<()> {
    let ck = ctx.require_checkpoint(Command::ErrorSweep)?;
    let g = ck.generator()?;
    let model = ck.meta.model;
    let s0 = ctx.args.s0.unwrap_or_else(|| default_s0(&model));
    let e = &ctx.config.eval;
    let mut rng = ctx.rng(streams::EVALUATION);
    let table = paths::error_vs_dt_experiment(
        &[("gan", &g)],
        &model,
        s0,
        e.t_end,
        &e.step_counts,
        ctx.args.n.unwrap_or(100_000),
        e.test_function,
        &mut rng,
    )?;
    let mut out = Outputs::new(ctx, Command::ErrorSweep)?;
    out.write("errors.csv", |w| Ok(table.write_csv(w)?))?;
    let extra: Vec<ExtrapolationRow> =
        table.extrapolated.iter().map(|(source, dt)| ExtrapolationRow { source: source.clone(), dt: *dt }).collect();
    out.rows("extrapolated.csv", &extra)?;
    out.finish()
}

fn model_and_generator(ctx: &Context) -> CliResult<(SdeModel, Option<sdegan::GanGenerator>)> {
    match ctx.checkpoint()? {
        Some(ck) => Ok((ck.meta.model, Some(ck.generator()?))),
        None => Ok((ctx.config.model()?, None)),
    }
}

fn sources<'a>(model: &SdeModel, g: Option<&'a sdegan::GanGenerator>) -> Vec<PathSource<'a>> {
    let mut v = vec![PathSource::Exact];
    v.extend(SchemeKind::baselines_for(model).map(PathSource::Scheme));
    if let Some(g) = g {
        v.push(PathSource::Generator { name: "gan", generator: g });
    }
    v
}

fn path_sim(ctx: &Context) -> CliResult<()> {
    let (model, g) = model_and_generator(ctx)?;
    let s0 = ctx.args.s0.unwrap_or_else(|| default_s0(&model));
    let dt = ctx.args.dt.unwrap_or(1.0);
    let steps = ctx.config.eval.path_steps;
    let m = ctx.args.n.unwrap_or(100);
    let mut rng = ctx.rng(streams::EVALUATION);
    let z = Arc::new(draw_normals(m, steps, &mut rng));
    let mut out = Outputs::new(ctx, Command::PathSim)?;
    for src in sources(&model, g.as_ref()) {
        let ens = generate_paths(src, &model, s0, dt, steps, m, Some(z.clone()), &mut rng)?;
        if ens.extrapolated {
            log::warn!("{}: dt = {dt} lies outside the trained range", ens.source);
        }
        out.write(&format!("paths_{}.csv", ens.source), |w| Ok(ens.write_csv(w)?))?;
    }
    out.finish()
}

#[derive(Serialize)]
struct SourcedMeanRow {
    source: String,
    step: usize,
    t: f64,
    mean: f64,
    std_err: f64,
    exact_mean: f64,
}

fn mean_revert(ctx: &Context) -> CliResult<()> {
    let (model, g) = model_and_generator(ctx)?;
    let s0 = ctx.args.s0.unwrap_or(MEAN_REVERT_S0);
    let dt = ctx.args.dt.unwrap_or(1.0);
    let m = ctx.args.n.unwrap_or(100_000);
    let mut rng = ctx.rng(streams::EVALUATION);
    let mut rows = Vec::new();
    for src in sources(&model, g.as_ref()) {
        for r in paths::mean_reversion_experiment(src, &model, s0, dt, ctx.config.eval.mean_revert_reps, m, &mut rng)? {
            rows.push(SourcedMeanRow {
                source: src.tag(),
                step: r.step,
                t: r.t,
                mean: r.mean,
                std_err: r.std_err,
                exact_mean: r.exact_mean,
            });
        }
    }
    let mut out = Outputs::new(ctx, Command::MeanRevert)?;
    out.rows("mean_revert.csv", &rows)?;
    out.finish()
}

fn z_grid(ctx: &Context) -> Vec<f64> {
    linspace(-3.0, 3.0, ctx.config.eval.z_points)
}

fn map_dump(ctx: &Context) -> CliResult<()> {
    let ck = ctx.require_checkpoint(Command::MapDump)?;
    let g = ck.generator()?;
    let s0 = ctx.args.s0.unwrap_or(ck.meta.monitor.s_t);
    let dt = ctx.args.dt.unwrap_or(ck.meta.monitor.dt);
    let rows = paths::map_dump(&g, &ck.meta.model, s0, dt, &z_grid(ctx))?;
    let mut out = Outputs::new(ctx, Command::MapDump)?;
    out.rows("map.csv", &rows)?;
    out.finish()
}

fn disc_grid(ctx: &Context) -> CliResult<()> {
    let ck = ctx.require_checkpoint(Command::DiscGrid)?;
    if ck.meta.variant != GanVariant::Supervised {
        return Err(CliError::Usage("disc-grid needs a supervised checkpoint".into()));
    }
    let d = ck.discriminator()?;
    let model = ck.meta.model;
    let s0 = ctx.args.s0.unwrap_or(ck.meta.monitor.s_t);
    let dt = ctx.args.dt.unwrap_or(ck.meta.monitor.dt);
    let zs = z_grid(ctx);
    // r range: exact increments over the z grid, padded by a quarter on each side
    let exact = ExactMap { model, transform: ck.meta.transform };
    let r = exact.generate_encoded(&[-3.0, 3.0], &[s0, s0], dt)?;
    let pad = 0.25 * (r[1] - r[0]).abs();
    let rs = linspace(r[0].min(r[1]) - pad, r[0].max(r[1]) + pad, ctx.config.eval.z_points);
    let rows = paths::disc_grid(&d, s0, dt, &zs, &rs)?;
    let mut out = Outputs::new(ctx, Command::DiscGrid)?;
    out.rows("disc_grid.csv", &rows)?;
    out.finish()
}

fn autocorr(ctx: &Context) -> CliResult<()> {
    let ck = ctx.require_checkpoint(Command::Autocorr)?;
    let g = ck.generator()?;
    let model = ck.meta.model;
    let s0 = ctx.args.s0.unwrap_or_else(|| default_s0(&model));
    let dt = ctx.args.dt.unwrap_or(ck.meta.monitor.dt);
    let mut rng = ctx.rng(streams::EVALUATION);
    let rows = paths::autocorr_scatter(&g, &model, s0, ctx.config.eval.t_end, dt, ctx.args.n.unwrap_or(10_000), &mut rng)?;
    let mut out = Outputs::new(ctx, Command::Autocorr)?;
    out.rows("autocorr.csv", &rows)?;
    out.finish()
}

/// Path of `name` inside the output directory.
pub fn artifact(ctx: &Context, name: &str) -> PathBuf {
    ctx.out.join(name)
}
