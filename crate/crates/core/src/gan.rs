//! Conditional GAN training on exact-simulation data.
//!
//! The generator maps `[z, cond...]` to an encoded increment `r`. The
//! discriminator sees `[r, cond...]` (vanilla) or `[r, z, cond...]`
//! (supervised), so in both layouts the sample sits in column 0.

use std::io::Write;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    adam_update, log_sigmoid, lr_at, max_rel_diff, numeric_param_grads, sigmoid, softplus, Activation, AdamState,
    Mlp, MlpGrads, LrSchedule, Real,
};
use crate::preprocess::{Conditioning, TrainingSet, TransformKind};
use crate::sde::SdeModel;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GanVariant {
    Vanilla,
    /// The discriminator also receives the noise `z` paired with each sample.
    Supervised,
}

impl GanVariant {
    pub fn name(&self) -> &'static str {
        match self {
            GanVariant::Vanilla => "vanilla",
            GanVariant::Supervised => "supervised",
        }
    }

    pub fn discriminator_inputs(&self, conditioning: Conditioning) -> usize {
        match self {
            GanVariant::Vanilla => 1 + conditioning.width(),
            GanVariant::Supervised => 2 + conditioning.width(),
        }
    }
}

pub fn generator_inputs(conditioning: Conditioning) -> usize {
    1 + conditioning.width()
}

/// Targets for the discriminator's binary cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub real: f64,
    pub fake: f64,
}

impl Default for Labels {
    fn default() -> Self {
        Labels { real: 1.0, fake: 0.0 }
    }
}

/// Condition at which held-out KS and W1 are tracked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorCondition {
    pub s_t: f64,
    pub dt: f64,
}

impl MonitorCondition {
    pub fn default_for(model: &SdeModel) -> Self {
        if model.is_cir() {
            MonitorCondition { s_t: 0.1, dt: 1.0 }
        } else {
            MonitorCondition { s_t: 1.0, dt: 1.0 }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// `None` derives `n_train / batch_size`.
    pub iterations_per_epoch: Option<usize>,
    pub d_steps_per_g_step: usize,
    pub labels: Labels,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub lr_g: LrSchedule,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eval_every: usize,
    pub eval_samples: usize,
    /// `None` uses [`MonitorCondition::default_for`].
    pub monitor: Option<MonitorCondition>,
    pub checkpoint_every_epochs: usize,
    /// Set by the caller; not part of the serialized section.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1000,
            epochs: 200,
            iterations_per_epoch: None,
            d_steps_per_g_step: 1,
            labels: Labels::default(),
            hidden_layers: 4,
            hidden_width: 200,
            lr_g: LrSchedule::generator_default(),
            lr_d: 5e-4,
            beta1: 0.5,
            beta2: 0.999,
            eval_every: 200,
            eval_samples: 100_000,
            monitor: None,
            checkpoint_every_epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("d_steps_per_g_step", self.d_steps_per_g_step),
            ("hidden_width", self.hidden_width),
            ("eval_every", self.eval_every),
            ("eval_samples", self.eval_samples),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.iterations_per_epoch == Some(0) {
            return Err(Error::invalid("iterations_per_epoch", "must be positive"));
        }
        self.lr_g.validate()?;
        crate::error::ensure_positive("lr_d", self.lr_d)?;
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(name, "must lie in [0, 1)"));
            }
        }
        for (name, l) in [("labels.real", self.labels.real), ("labels.fake", self.labels.fake)] {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::invalid(name, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn iterations_per_epoch(&self, n_train: usize) -> usize {
        self.iterations_per_epoch.unwrap_or((n_train / self.batch_size).max(1))
    }

    fn layer_sizes(&self, inputs: usize) -> Vec<usize> {
        let mut sizes = vec![inputs];
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(1);
        sizes
    }
}

/// RNG streams derived from the run seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const MONITOR: u64 = 1;
    pub const BATCHES: u64 = 2;
    pub const TRAINING_SET: u64 = 3;
    pub const EVALUATION: u64 = 4;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn new_generator<F: Real, R: Rng + ?Sized>(
    conditioning: Conditioning,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Mlp<F>> {
    Mlp::new(
        &config.layer_sizes(generator_inputs(conditioning)),
        Activation::leaky(),
        Activation::Identity,
        rng,
    )
}

pub fn new_discriminator<F: Real, R: Rng + ?Sized>(
    variant: GanVariant,
    conditioning: Conditioning,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Mlp<F>> {
    Mlp::new(
        &config.layer_sizes(variant.discriminator_inputs(conditioning)),
        Activation::leaky(),
        Activation::Sigmoid,
        rng,
    )
}

/// Builds discriminator rows from samples `r` and generator inputs `[z, cond...]`.
pub fn discriminator_input<F: Real>(variant: GanVariant, r: ArrayView1<F>, g_input: ArrayView2<F>) -> Result<Array2<F>> {
    if r.len() != g_input.nrows() {
        return Err(Error::Shape(format!("{} samples for {} input rows", r.len(), g_input.nrows())));
    }
    let r = r.insert_axis(Axis(1));
    let rest = match variant {
        GanVariant::Supervised => g_input,
        GanVariant::Vanilla => g_input.slice_move(s![.., 1..]),
    };
    concatenate(Axis(1), &[r, rest]).map_err(|e| Error::Shape(e.to_string()))
}

/// Mean binary cross-entropy of `sigmoid(logits)` against `label`; writes
/// `dloss/dlogit` into `grad`.
fn bce_with_logits<F: Real>(logits: ArrayView2<F>, label: f64, mut grad: ArrayViewMut2<F>, scale: f64) -> f64 {
    let y = F::of(label);
    let sc = F::of(scale);
    let mut loss = 0.0;
    for (l, g) in logits.iter().zip(grad.iter_mut()) {
        loss += label * softplus(-*l).as_f64() + (1.0 - label) * softplus(*l).as_f64();
        *g = (sigmoid(*l) - y) * sc;
    }
    loss * scale
}

/// `-mean log D(real) - mean log(1 - D(fake))` (for hard labels) and its
/// parameter gradients.
pub fn d_loss_and_grads<F: Real>(
    d: &Mlp<F>,
    real: ArrayView2<F>,
    fake: ArrayView2<F>,
    labels: Labels,
) -> Result<(f64, MlpGrads<F>)> {
    if real.ncols() != fake.ncols() || real.nrows() == 0 || fake.nrows() == 0 {
        return Err(Error::Shape("real and fake batches must be non-empty with equal widths".into()));
    }
    let (nr, nf) = (real.nrows(), fake.nrows());
    let x = concatenate(Axis(0), &[real, fake]).map_err(|e| Error::Shape(e.to_string()))?;
    let cache = d.forward(x.view())?;
    let mut grad = Array2::zeros(cache.logits.raw_dim());
    let (lr, lf) = cache.logits.view().split_at(Axis(0), nr);
    let (gr, gf) = grad.view_mut().split_at(Axis(0), nr);
    let loss_real = bce_with_logits(lr, labels.real, gr, 1.0 / nr as f64);
    let loss_fake = bce_with_logits(lf, labels.fake, gf, 1.0 / nf as f64);
    let (grads, _) = d.backward(&cache, grad)?;
    Ok((loss_real + loss_fake, grads))
}

/// Non-saturating generator loss `-mean log D(G(z | cond), ...)`, given the
/// generator's forward cache for `g_input`.
fn g_loss_from_cache<F: Real>(
    g: &Mlp<F>,
    g_cache: &crate::nn::ForwardCache<F>,
    d: &Mlp<F>,
    variant: GanVariant,
) -> Result<(f64, MlpGrads<F>)> {
    let fake = g_cache.output.column(0);
    let d_in = discriminator_input(variant, fake, g_cache.inputs[0].view())?;
    let d_cache = d.forward(d_in.view())?;
    let n = d_in.nrows() as f64;
    let inv = F::of(1.0 / n);
    let mut loss = 0.0;
    let mut grad = Array2::zeros(d_cache.logits.raw_dim());
    for (l, gr) in d_cache.logits.iter().zip(grad.iter_mut()) {
        loss -= log_sigmoid(*l).as_f64();
        *gr = (sigmoid(*l) - F::one()) * inv;
    }
    let d_input_grad = d.backward_input(&d_cache, grad)?;
    let g_out_grad = d_input_grad.slice(s![.., 0..1]).to_owned();
    let (grads, _) = g.backward(g_cache, g_out_grad)?;
    Ok((loss / n, grads))
}

/// Generator loss and gradients for inputs `[z, cond...]`; `z` is also what
/// a supervised discriminator sees.
pub fn g_loss_and_grads<F: Real>(
    g: &Mlp<F>,
    d: &Mlp<F>,
    variant: GanVariant,
    g_input: ArrayView2<F>,
) -> Result<(f64, MlpGrads<F>)> {
    let cache = g.forward(g_input)?;
    g_loss_from_cache(g, &cache, d, variant)
}

/// Generator loss when the discriminator sees `z_for_d` in place of the
/// generator's own noise column. Only meaningful for the supervised layout.
pub fn g_loss_with_d_noise<F: Real>(
    g: &Mlp<F>,
    d: &Mlp<F>,
    variant: GanVariant,
    g_input: ArrayView2<F>,
    z_for_d: ArrayView1<F>,
) -> Result<f64> {
    let fake = g.predict(g_input)?;
    let mut d_side = g_input.to_owned();
    d_side.column_mut(0).assign(&z_for_d);
    let d_in = discriminator_input(variant, fake.column(0), d_side.view())?;
    let logits = d.forward(d_in.view())?.logits;
    Ok(-logits.iter().map(|l| log_sigmoid(*l).as_f64()).sum::<f64>() / logits.len() as f64)
}

/// Anything that maps `(z, S_t, dt)` to an encoded increment.
pub trait ConditionalGenerator: Sync {
    fn transform(&self) -> TransformKind;
    fn conditioning(&self) -> Conditioning;
    fn generate_encoded(&self, z: &[f64], s_t: &[f64], dt: f64) -> Result<Vec<f64>>;

    /// `dt` range seen during training, if known.
    fn trained_dt_range(&self) -> Option<(f64, f64)> {
        None
    }

    /// Next levels: encoded output followed by the transform's decode.
    fn step(&self, s_t: &[f64], dt: f64, z: &[f64]) -> Result<Vec<f64>> {
        let r = self.generate_encoded(z, s_t, dt)?;
        let t = self.transform();
        Ok(r.iter().zip(s_t).map(|(&r, &s)| t.decode(r, s)).collect())
    }
}

const INFERENCE_CHUNK: usize = 16_384;

fn input_rows<F: Real>(conditioning: Conditioning, z: &[f64], s_t: &[f64], dt: f64) -> Array2<F> {
    let c = conditioning.width();
    let mut x = Array2::zeros((z.len(), 1 + c));
    let mut cond = [0.0; 2];
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        conditioning.fill(s_t[i], dt, &mut cond);
        row[0] = F::of(z[i]);
        for k in 0..c {
            row[k + 1] = F::of(cond[k]);
        }
    }
    x
}

/// A trained generator network with the metadata needed to use it.
#[derive(Debug, Clone, PartialEq)]
pub struct GanGenerator {
    pub net: Mlp<f32>,
    pub conditioning: Conditioning,
    pub transform: TransformKind,
    pub dt_range: Option<(f64, f64)>,
}

impl ConditionalGenerator for GanGenerator {
    fn transform(&self) -> TransformKind {
        self.transform
    }

    fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    fn trained_dt_range(&self) -> Option<(f64, f64)> {
        self.dt_range
    }

    fn generate_encoded(&self, z: &[f64], s_t: &[f64], dt: f64) -> Result<Vec<f64>> {
        if z.len() != s_t.len() {
            return Err(Error::Shape(format!("{} noise values for {} states", z.len(), s_t.len())));
        }
        let mut out = Vec::with_capacity(z.len());
        for start in (0..z.len()).step_by(INFERENCE_CHUNK) {
            let end = (start + INFERENCE_CHUNK).min(z.len());
            let x = input_rows::<f32>(self.conditioning, &z[start..end], &s_t[start..end], dt);
            let y = self.net.predict(x.view())?;
            out.extend(y.iter().map(|v| *v as f64));
        }
        Ok(out)
    }
}

/// A trained discriminator with its input layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GanDiscriminator {
    pub net: Mlp<f32>,
    pub variant: GanVariant,
    pub conditioning: Conditioning,
}

impl GanDiscriminator {
    /// `D(r, z, cond)`; `z` is ignored by a vanilla discriminator.
    pub fn evaluate(&self, r: &[f64], z: &[f64], s_t: &[f64], dt: f64) -> Result<Vec<f64>> {
        if r.len() != z.len() || r.len() != s_t.len() {
            return Err(Error::Shape("r, z and s_t must have equal lengths".into()));
        }
        let g_in = input_rows::<f32>(self.conditioning, z, s_t, dt);
        let r32: Array1<f32> = r.iter().map(|&v| v as f32).collect();
        let x = discriminator_input(self.variant, r32.view(), g_in.view())?;
        Ok(self.net.predict(x.view())?.iter().map(|v| *v as f64).collect())
    }
}

/// Held-out exact draws at a fixed condition, with fixed generator noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitor {
    pub condition: MonitorCondition,
    pub z: Vec<f64>,
    pub exact: Vec<f64>,
}

impl Monitor {
    pub fn new(model: &SdeModel, condition: MonitorCondition, n: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, streams::MONITOR);
        let exact = (0..n)
            .map(|_| model.exact_sample(condition.s_t, condition.dt, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let z = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Monitor { condition, z, exact })
    }

    /// KS and W1 between decoded generator levels and the exact draws.
    pub fn evaluate(&self, g: &dyn ConditionalGenerator) -> Result<(f64, f64)> {
        let s_t = vec![self.condition.s_t; self.z.len()];
        let levels = g.step(&s_t, self.condition.dt, &self.z)?;
        Ok((stats::ks_two_sample(&levels, &self.exact)?, stats::wasserstein1(&levels, &self.exact)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    /// Mean over the iterations since the previous record.
    pub d_loss: f64,
    pub g_loss: f64,
    pub lr_g: f64,
    pub ks: f64,
    pub w1: f64,
}

/// `iteration,d_loss,g_loss,lr_g,ks,w1`, preceded by `#` comment lines.
pub fn write_training_log<W: Write>(mut out: W, header: &[String], log: &[LogRecord]) -> Result<()> {
    for h in header {
        writeln!(out, "# {h}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything needed to rebuild and evaluate a trained pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanMeta {
    pub variant: GanVariant,
    pub model: SdeModel,
    pub transform: TransformKind,
    pub conditioning: Conditioning,
    pub dt_grid: Vec<f64>,
    pub s_t_grid: Vec<f64>,
    pub n_train: usize,
    pub monitor: MonitorCondition,
    pub eval_samples: usize,
    pub seed: u64,
    pub iterations: usize,
    pub init: String,
}

impl GanMeta {
    pub fn dt_range(&self) -> Option<(f64, f64)> {
        let lo = self.dt_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.dt_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo <= hi).then_some((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedGan {
    pub meta: GanMeta,
    pub generator: Mlp<f32>,
    pub discriminator: Mlp<f32>,
    pub log: Vec<LogRecord>,
}

impl TrainedGan {
    pub fn generator(&self) -> GanGenerator {
        GanGenerator {
            net: self.generator.clone(),
            conditioning: self.meta.conditioning,
            transform: self.meta.transform,
            dt_range: self.meta.dt_range(),
        }
    }

    pub fn discriminator(&self) -> GanDiscriminator {
        GanDiscriminator {
            net: self.discriminator.clone(),
            variant: self.meta.variant,
            conditioning: self.meta.conditioning,
        }
    }

    pub fn final_ks(&self) -> Option<f64> {
        self.log.last().map(|r| r.ks)
    }
}

/// State handed to the checkpoint callback.
pub struct Snapshot<'a> {
    pub epoch: usize,
    pub iteration: usize,
    pub meta: &'a GanMeta,
    pub generator: &'a Mlp<f32>,
    pub discriminator: &'a Mlp<f32>,
    pub log: &'a [LogRecord],
}

pub const INIT_DESCRIPTION: &str = "uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases";

pub fn train(variant: GanVariant, set: &TrainingSet, config: &TrainConfig) -> Result<TrainedGan> {
    train_with(variant, set, config, &mut |_| Ok(()))
}

/// Alternates `d_steps_per_g_step` discriminator updates with one generator
/// update, with batches drawn uniformly with replacement. The callback runs
/// every `checkpoint_every_epochs` epochs; a non-finite loss or parameter
/// aborts with [`Error::Diverged`].
pub fn train_with(
    variant: GanVariant,
    set: &TrainingSet,
    config: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(Snapshot<'_>) -> Result<()>,
) -> Result<TrainedGan> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::invalid("training_set", "is empty"));
    }
    let conditioning = set.meta.conditioning;
    let model = set.meta.model;
    let monitor_cond = config.monitor.unwrap_or_else(|| MonitorCondition::default_for(&model));
    let iters_per_epoch = config.iterations_per_epoch(set.meta.n_requested);
    let total = config.epochs * iters_per_epoch;
    let meta = GanMeta {
        variant,
        model,
        transform: set.meta.transform,
        conditioning,
        dt_grid: set.meta.dt_grid.clone(),
        s_t_grid: set.meta.s_t_grid.clone(),
        n_train: set.len(),
        monitor: monitor_cond,
        eval_samples: config.eval_samples,
        seed: config.seed,
        iterations: total,
        init: INIT_DESCRIPTION.to_string(),
    };

    let mut init_rng = stream_rng(config.seed, streams::INIT);
    let mut g: Mlp<f32> = new_generator(conditioning, config, &mut init_rng)?;
    let mut d: Mlp<f32> = new_discriminator(variant, conditioning, config, &mut init_rng)?;
    let mut opt_g = AdamState::new(&g, config.lr_g.base, config.beta1, config.beta2);
    let mut opt_d = AdamState::new(&d, config.lr_d, config.beta1, config.beta2);
    let monitor = Monitor::new(&model, monitor_cond, config.eval_samples, config.seed)?;
    let mut batch_rng = stream_rng(config.seed, streams::BATCHES);

    // columns: r, z, cond...
    let c = conditioning.width();
    let mut table = Array2::<f32>::zeros((set.len(), 2 + c));
    let mut cond = [0.0; 2];
    for (i, mut row) in table.rows_mut().into_iter().enumerate() {
        conditioning.fill(set.s_t[i], set.dt[i], &mut cond);
        row[0] = set.r[i] as f32;
        row[1] = set.z[i] as f32;
        for k in 0..c {
            row[2 + k] = cond[k] as f32;
        }
    }

    let mut log = Vec::new();
    let (mut d_acc, mut g_acc, mut n_acc) = (0.0, 0.0, 0usize);
    let snapshot_gen = |net: &Mlp<f32>| GanGenerator {
        net: net.clone(),
        conditioning,
        transform: meta.transform,
        dt_range: meta.dt_range(),
    };

    for it in 0..total {
        let mut last = None;
        let mut d_loss = 0.0;
        for _ in 0..config.d_steps_per_g_step {
            let idx: Vec<usize> = (0..config.batch_size).map(|_| batch_rng.random_range(0..set.len())).collect();
            let batch = table.select(Axis(0), &idx);
            let g_in = batch.slice(s![.., 1..]).to_owned();
            let g_cache = g.forward(g_in.view())?;
            let real = discriminator_input(variant, batch.column(0), g_in.view())?;
            let fake = discriminator_input(variant, g_cache.output.column(0), g_in.view())?;
            let (loss, grads) = d_loss_and_grads(&d, real.view(), fake.view(), config.labels)?;
            adam_update(&mut d, &grads, &mut opt_d)?;
            d_loss = loss;
            last = Some(g_cache);
        }
        let g_cache = last.expect("at least one discriminator step");
        let (g_loss, grads) = g_loss_from_cache(&g, &g_cache, &d, variant)?;
        opt_g.lr = lr_at(&config.lr_g, it);
        adam_update(&mut g, &grads, &mut opt_g)?;

        if !d_loss.is_finite() || !g_loss.is_finite() {
            return Err(Error::Diverged { iteration: it, reason: format!("losses d={d_loss} g={g_loss}") });
        }
        d_acc += d_loss;
        g_acc += g_loss;
        n_acc += 1;

        let done = it + 1;
        if done % config.eval_every == 0 || done == total {
            if !g.is_finite() || !d.is_finite() {
                return Err(Error::Diverged { iteration: it, reason: "non-finite parameters".into() });
            }
            let (ks, w1) = monitor.evaluate(&snapshot_gen(&g))?;
            log.push(LogRecord {
                iteration: done,
                d_loss: d_acc / n_acc as f64,
                g_loss: g_acc / n_acc as f64,
                lr_g: opt_g.lr,
                ks,
                w1,
            });
            log::debug!("{} it {done}/{total}: ks {ks:.4} w1 {w1:.5}", variant.name());
            (d_acc, g_acc, n_acc) = (0.0, 0.0, 0);
        }
        if done % iters_per_epoch == 0 && config.checkpoint_every_epochs > 0 {
            let epoch = done / iters_per_epoch;
            if epoch % config.checkpoint_every_epochs == 0 || done == total {
                if !g.is_finite() || !d.is_finite() {
                    return Err(Error::Diverged { iteration: it, reason: "non-finite parameters".into() });
                }
                on_checkpoint(Snapshot { epoch, iteration: done, meta: &meta, generator: &g, discriminator: &d, log: &log })?;
            }
        }
    }
    Ok(TrainedGan { meta, generator: g, discriminator: d, log })
}

/// Relative gradient errors of the GAN losses against finite differences, on
/// small f64 networks in every input layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GanGradReport {
    pub cases: Vec<(String, f64)>,
}

impl GanGradReport {
    pub fn max_rel(&self) -> f64 {
        self.cases.iter().map(|c| c.1).fold(0.0, f64::max)
    }
}

pub fn gradient_suite(seed: u64) -> Result<GanGradReport> {
    gradient_suite_with_step(seed, GRAD_CHECK_STEP)
}

/// Finite-difference step used by [`gradient_suite`].
pub const GRAD_CHECK_STEP: f64 = 1e-3;

/// Test rows are redrawn until every hidden unit sits at least this far from
/// the LeakyReLU kink, so that no difference quotient straddles it.
const KINK_MARGIN: f64 = 0.05;

fn kink_distance(cache: &crate::nn::ForwardCache<f64>, net: &Mlp<f64>) -> f64 {
    let mut m = f64::INFINITY;
    for (i, x) in cache.inputs.iter().enumerate().skip(1) {
        if let Activation::LeakyRelu { slope } = net.layers[i - 1].activation {
            // pre-activation magnitude recovered from the output
            m = x.iter().map(|&v| if v > 0.0 { v } else { -v / slope }).fold(m, f64::min);
        }
    }
    m
}

pub fn gradient_suite_with_step(seed: u64, h: f64) -> Result<GanGradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = TrainConfig { hidden_layers: 2, hidden_width: 6, ..TrainConfig::default() };
    let n = 16;
    let mut cases = Vec::new();
    for conditioning in [Conditioning::DtOnly, Conditioning::StateAndDt] {
        for variant in [GanVariant::Vanilla, GanVariant::Supervised] {
            let g: Mlp<f64> = new_generator(conditioning, &cfg, &mut rng)?;
            let d: Mlp<f64> = new_discriminator(variant, conditioning, &cfg, &mut rng)?;
            let (g, d) = (jitter_biases(g, &mut rng), jitter_biases(d, &mut rng));
            let width = generator_inputs(conditioning);
            let mut g_in = Array2::zeros((n, width));
            let mut r = Array1::zeros(n);
            let mut filled = 0;
            for _ in 0..100_000 {
                if filled == n {
                    break;
                }
                let row = Array2::from_shape_simple_fn((1, width), || rng.sample::<f64, _>(StandardNormal));
                let rv = Array1::from_elem(1, rng.sample::<f64, _>(StandardNormal));
                let gc = g.forward(row.view())?;
                let real = d.forward(discriminator_input(variant, rv.view(), row.view())?.view())?;
                let fake = d.forward(discriminator_input(variant, gc.output.column(0), row.view())?.view())?;
                if kink_distance(&gc, &g).min(kink_distance(&real, &d)).min(kink_distance(&fake, &d)) > KINK_MARGIN {
                    g_in.row_mut(filled).assign(&row.row(0));
                    r[filled] = rv[0];
                    filled += 1;
                }
            }
            if filled < n {
                return Err(Error::NoConvergence { what: "kink-free test rows", target: KINK_MARGIN });
            }
            let fake_r: Array1<f64> = g.predict(g_in.view())?.column(0).to_owned();
            let real = discriminator_input(variant, r.view(), g_in.view())?;
            let fake = discriminator_input(variant, fake_r.view(), g_in.view())?;

            let (_, dg) = d_loss_and_grads(&d, real.view(), fake.view(), Labels::default())?;
            let dn = numeric_param_grads(&d, h, |net| Ok(d_loss_and_grads(net, real.view(), fake.view(), Labels::default())?.0))?;
            let tag = format!("{}-c{}", variant.name(), conditioning.width());
            cases.push((format!("discriminator-{tag}"), max_rel_diff(&dg, &dn)));

            let (_, gg) = g_loss_and_grads(&g, &d, variant, g_in.view())?;
            let gn = numeric_param_grads(&g, h, |net| Ok(g_loss_and_grads(net, &d, variant, g_in.view())?.0))?;
            cases.push((format!("generator-{tag}"), max_rel_diff(&gg, &gn)));
        }
    }
    Ok(GanGradReport { cases })
}

fn jitter_biases(mut net: Mlp<f64>, rng: &mut ChaCha8Rng) -> Mlp<f64> {
    for l in &mut net.layers {
        l.bias.mapv_inplace(|_| 0.2 * rng.sample::<f64, _>(StandardNormal));
    }
    net
}
