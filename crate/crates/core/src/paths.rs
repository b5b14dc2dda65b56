//! Path construction with stored common random numbers, and the path-level
//! experiments built on it.

use std::io::Write;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::gan::{ConditionalGenerator, GanDiscriminator, GanVariant};
use crate::preprocess::{Conditioning, TransformKind};
use crate::schemes::SchemeKind;
use crate::sde::{PairingMode, SdeModel};
use crate::stats::{self, TestFunction};

/// The exact transition `F^{-1}(Phi(z))` behind the generator interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMap {
    pub model: SdeModel,
    pub transform: TransformKind,
}

impl ExactMap {
    pub fn new(model: SdeModel) -> Self {
        ExactMap { model, transform: TransformKind::default_for(&model) }
    }
}

impl ConditionalGenerator for ExactMap {
    fn transform(&self) -> TransformKind {
        self.transform
    }

    fn conditioning(&self) -> Conditioning {
        Conditioning::for_model(&self.model)
    }

    fn generate_encoded(&self, z: &[f64], s_t: &[f64], dt: f64) -> Result<Vec<f64>> {
        let next = self.step(s_t, dt, z)?;
        next.iter().zip(s_t).map(|(&n, &s)| self.transform.encode(n, s)).collect()
    }

    fn step(&self, s_t: &[f64], dt: f64, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != s_t.len() {
            return Err(Error::Shape(format!("{} noise values for {} states", z.len(), s_t.len())));
        }
        s_t.par_iter()
            .zip(z.par_iter())
            .map(|(&s, &z)| self.model.step_from_z(s, dt, z))
            .collect()
    }
}

/// Where the next level of a path comes from.
#[derive(Clone, Copy)]
pub enum PathSource<'a> {
    Exact,
    Scheme(SchemeKind),
    Generator { name: &'a str, generator: &'a dyn ConditionalGenerator },
}

impl PathSource<'_> {
    pub fn tag(&self) -> String {
        match self {
            PathSource::Exact => "exact".into(),
            PathSource::Scheme(k) => k.name().into(),
            PathSource::Generator { name, .. } => (*name).into(),
        }
    }

    /// Whether a generator is asked for a `dt` outside the range it saw in training.
    pub fn extrapolates(&self, dt: f64) -> bool {
        match self {
            PathSource::Generator { generator, .. } => {
                generator.trained_dt_range().is_some_and(|(lo, hi)| dt < lo || dt > hi)
            }
            _ => false,
        }
    }

    /// One step for every path.
    pub fn advance(&self, model: &SdeModel, s_t: &[f64], dt: f64, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            PathSource::Exact => ExactMap::new(*model).step(s_t, dt, z),
            PathSource::Scheme(kind) => s_t.iter().zip(z).map(|(&s, &z)| kind.step(model, s, dt, z)).collect(),
            PathSource::Generator { generator, .. } => {
                if generator.conditioning() != Conditioning::for_model(model) {
                    return Err(Error::WrongModel { operation: "generate_paths", found: model.kind_name() });
                }
                generator.step(s_t, dt, z)
            }
        }
    }
}

/// `m x n` standard normal draws, filled path by path.
pub fn draw_normals<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((m, n), || rng.sample(StandardNormal))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    /// `m x (n + 1)`; column 0 holds `s0`.
    pub values: Array2<f64>,
    /// `m x n`, shared between ensembles that are compared path by path.
    pub z_draws: Arc<Array2<f64>>,
    pub dt: f64,
    pub model: SdeModel,
    pub source: String,
    pub extrapolated: bool,
}

impl PathEnsemble {
    pub fn terminal(&self) -> Vec<f64> {
        self.values.column(self.values.ncols() - 1).to_vec()
    }

    /// `path_id,step,value`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path_id", "step", "value"])?;
        for (p, row) in self.values.axis_iter(Axis(0)).enumerate() {
            for (k, v) in row.iter().enumerate() {
                w.write_record(&[p.to_string(), k.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_path_args(s0: f64, dt: f64) -> Result<()> {
    ensure_positive("s0", s0)?;
    ensure_positive("dt", dt)?;
    Ok(())
}

/// Iterates `source` from `s0`. When `z` is `None`, `m_paths x n_steps`
/// normals are drawn from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn generate_paths<R: Rng + ?Sized>(
    source: PathSource<'_>,
    model: &SdeModel,
    s0: f64,
    dt: f64,
    n_steps: usize,
    m_paths: usize,
    z: Option<Arc<Array2<f64>>>,
    rng: &mut R,
) -> Result<PathEnsemble> {
    check_path_args(s0, dt)?;
    let z = match z {
        Some(z) => {
            if z.dim() != (m_paths, n_steps) {
                return Err(Error::Shape(format!("z is {:?}, expected ({m_paths}, {n_steps})", z.dim())));
            }
            z
        }
        None => Arc::new(draw_normals(m_paths, n_steps, rng)),
    };
    let extrapolated = source.extrapolates(dt);
    if extrapolated {
        log::warn!("{}: dt = {dt} lies outside the trained range", source.tag());
    }
    let mut values = Array2::zeros((m_paths, n_steps + 1));
    values.column_mut(0).fill(s0);
    let mut cur = vec![s0; m_paths];
    for k in 0..n_steps {
        let zk = z.column(k).to_vec();
        cur = source.advance(model, &cur, dt, &zk)?;
        values.column_mut(k + 1).assign(&ndarray::ArrayView1::from(&cur));
    }
    Ok(PathEnsemble { values, z_draws: z, dt, model: *model, source: source.tag(), extrapolated })
}

/// Terminal values only, for when the intermediate levels are not needed.
pub fn terminal_values(source: PathSource<'_>, model: &SdeModel, s0: f64, dt: f64, z: &Array2<f64>) -> Result<Vec<f64>> {
    check_path_args(s0, dt)?;
    let mut cur = vec![s0; z.nrows()];
    for zk in z.axis_iter(Axis(1)) {
        cur = source.advance(model, &cur, dt, &zk.to_vec())?;
    }
    Ok(cur)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub dt: f64,
    pub source: String,
    pub e_w: f64,
    pub e_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    /// `(source, dt)` pairs evaluated outside a generator's trained range.
    pub extrapolated: Vec<(String, f64)>,
}

impl ErrorTable {
    pub fn get(&self, source: &str, dt: f64) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.source == source && r.dt == dt)
    }

    /// `dt,source,e_w,e_s`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const ERROR_STEP_COUNTS: [usize; 8] = [40, 20, 10, 5, 4, 3, 2, 1];

/// Weak and strong error at `t_end` against exact paths driven by the same
/// normals, for `dt = t_end / n` and each `n` in `n_list`.
///
/// Sources are the exact map itself, the model's two baseline schemes and,
/// when given, the generators.
#[allow(clippy::too_many_arguments)]
pub fn error_vs_dt_experiment<R: Rng + ?Sized>(
    generators: &[(&str, &dyn ConditionalGenerator)],
    model: &SdeModel,
    s0: f64,
    t_end: f64,
    n_list: &[usize],
    m_paths: usize,
    f: TestFunction,
    rng: &mut R,
) -> Result<ErrorTable> {
    ensure_positive("t_end", t_end)?;
    if n_list.is_empty() || n_list.contains(&0) || m_paths == 0 {
        return Err(Error::invalid("n_list", "needs positive step counts and at least one path"));
    }
    let mut table = ErrorTable::default();
    for &n in n_list {
        let dt = t_end / n as f64;
        let z = draw_normals(m_paths, n, rng);
        let exact = terminal_values(PathSource::Exact, model, s0, dt, &z)?;
        let mut sources = vec![PathSource::Exact];
        sources.extend(SchemeKind::baselines_for(model).map(PathSource::Scheme));
        sources.extend(generators.iter().map(|&(name, generator)| PathSource::Generator { name, generator }));
        for src in sources {
            let term = match src {
                PathSource::Exact => exact.clone(),
                _ => terminal_values(src, model, s0, dt, &z)?,
            };
            if src.extrapolates(dt) {
                log::warn!("{}: dt = {dt} lies outside the trained range", src.tag());
                table.extrapolated.push((src.tag(), dt));
            }
            let (e_w, e_s) = stats::weak_strong_error(&term, &exact, f)?;
            table.rows.push(ErrorRow { dt, source: src.tag(), e_w, e_s });
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRevertRow {
    pub step: usize,
    pub t: f64,
    pub mean: f64,
    pub std_err: f64,
    pub exact_mean: f64,
}

/// `step,t,mean,std_err,exact_mean`
pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Iterates `source` `n_reps` times from `s0` over `m_paths` paths and
/// reports the cross-sectional mean next to `S_bar + (s0 - S_bar) e^{-kappa t}`.
pub fn mean_reversion_experiment<R: Rng + ?Sized>(
    source: PathSource<'_>,
    model: &SdeModel,
    s0: f64,
    dt: f64,
    n_reps: usize,
    m_paths: usize,
    rng: &mut R,
) -> Result<Vec<MeanRevertRow>> {
    let SdeModel::Cir { kappa, s_bar, .. } = *model else {
        return Err(Error::WrongModel { operation: "mean_reversion_experiment", found: model.kind_name() });
    };
    check_path_args(s0, dt)?;
    if m_paths < 2 {
        return Err(Error::invalid("m_paths", "need at least two paths"));
    }
    let mut cur = vec![s0; m_paths];
    let mut rows = vec![MeanRevertRow { step: 0, t: 0.0, mean: s0, std_err: 0.0, exact_mean: s0 }];
    for k in 1..=n_reps {
        cur = match source {
            // no path pairing is needed here, so use the direct sampler
            PathSource::Exact => cur.iter().map(|&s| model.exact_sample(s, dt, rng)).collect::<Result<_>>()?,
            _ => {
                let z: Vec<f64> = (0..m_paths).map(|_| rng.sample(StandardNormal)).collect();
                source.advance(model, &cur, dt, &z)?
            }
        };
        let (mean, sd) = stats::mean_std(&cur);
        let t = k as f64 * dt;
        rows.push(MeanRevertRow {
            step: k,
            t,
            mean,
            std_err: sd / (m_paths as f64).sqrt(),
            exact_mean: s_bar + (s0 - s_bar) * (-kappa * t).exp(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub z: f64,
    pub r_gan: f64,
    pub r_exact: f64,
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Default noise grid: 100 points on `[-3, 3]`.
pub fn default_z_grid() -> Vec<f64> {
    linspace(-3.0, 3.0, 100)
}

/// Generator output against the exact encoded increment on a grid of `z`.
pub fn map_dump(
    generator: &dyn ConditionalGenerator,
    model: &SdeModel,
    s_t: f64,
    dt: f64,
    z_grid: &[f64],
) -> Result<Vec<MapRow>> {
    ensure_positive("s_t", s_t)?;
    if z_grid.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("z_grid", "values must be finite"));
    }
    let states = vec![s_t; z_grid.len()];
    let r_gan = generator.generate_encoded(z_grid, &states, dt)?;
    let exact = ExactMap { model: *model, transform: generator.transform() };
    let r_exact = exact.generate_encoded(z_grid, &states, dt)?;
    Ok(z_grid
        .iter()
        .zip(r_gan.iter().zip(&r_exact))
        .map(|(&z, (&r_gan, &r_exact))| MapRow { z, r_gan, r_exact })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub z: f64,
    pub r: f64,
    pub d_out: f64,
}

/// Discriminator output on the grid `z_grid x r_grid` at a fixed condition.
pub fn disc_grid(disc: &GanDiscriminator, s_t: f64, dt: f64, z_grid: &[f64], r_grid: &[f64]) -> Result<Vec<GridRow>> {
    if disc.variant == GanVariant::Vanilla {
        return Err(Error::WrongModel { operation: "disc_grid (needs a z input)", found: "vanilla" });
    }
    let mut z = Vec::with_capacity(z_grid.len() * r_grid.len());
    let mut r = Vec::with_capacity(z.capacity());
    for &zv in z_grid {
        for &rv in r_grid {
            z.push(zv);
            r.push(rv);
        }
    }
    let states = vec![s_t; z.len()];
    let d = disc.evaluate(&r, &z, &states, dt)?;
    Ok(z.into_iter()
        .zip(r)
        .zip(d)
        .map(|((z, r), d_out)| GridRow { z, r, d_out })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrRow {
    pub s_t: f64,
    pub s_next_exact: f64,
    pub s_next_gan: f64,
}

/// Draws `S_t | S_0` exactly, then one exact step whose noise is recovered by
/// inversion and fed to the generator.
pub fn autocorr_scatter<R: Rng + ?Sized>(
    generator: &dyn ConditionalGenerator,
    model: &SdeModel,
    s0: f64,
    t: f64,
    dt: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<AutocorrRow>> {
    check_path_args(s0, dt)?;
    ensure_positive("t", t)?;
    let mut s_t = Vec::with_capacity(n);
    let mut exact = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let s = model.exact_sample(s0, t, rng)?;
        let p = model.exact_sample_paired(s, dt, PairingMode::DirectThenInvert, rng)?;
        s_t.push(s);
        exact.push(p.s_next);
        z.push(p.z);
    }
    let gan = generator.step(&s_t, dt, &z)?;
    Ok((0..n)
        .map(|i| AutocorrRow { s_t: s_t[i], s_next_exact: exact[i], s_next_gan: gan[i] })
        .collect())
}
