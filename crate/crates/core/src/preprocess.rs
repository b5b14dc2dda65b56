//! Transforms between levels and network space, and the construction of
//! conditional training sets of supervised `(Z, R)` pairs.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::sde::{PairingMode, SdeModel};

/// Target-space transform for the generator output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransformKind {
    /// `r = ln(S_next / S_t)`
    LogReturn,
    /// `r = (S_next - s_bar) / s_bar`, decoded with rectification
    MeanScale { s_bar: f64 },
}

impl TransformKind {
    /// Log-returns for GBM; mean-scaling for CIR, which can approach zero.
    pub fn default_for(model: &SdeModel) -> Self {
        match *model {
            SdeModel::Gbm { .. } => TransformKind::LogReturn,
            SdeModel::Cir { s_bar, .. } => TransformKind::MeanScale { s_bar },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let TransformKind::MeanScale { s_bar } = *self {
            ensure_positive("s_bar", s_bar)?;
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::LogReturn => "log-return",
            TransformKind::MeanScale { .. } => "mean-scale",
        }
    }

    pub fn encode(&self, s_next: f64, s_t: f64) -> Result<f64> {
        encode_target(s_next, s_t, *self)
    }

    pub fn decode(&self, r: f64, s_t: f64) -> f64 {
        decode_output(r, s_t, *self)
    }
}

pub fn encode_target(s_next: f64, s_t: f64, kind: TransformKind) -> Result<f64> {
    ensure_positive("s_next", s_next)?;
    match kind {
        TransformKind::LogReturn => {
            ensure_positive("s_t", s_t)?;
            Ok((s_next / s_t).ln())
        }
        TransformKind::MeanScale { s_bar } => {
            ensure_positive("s_bar", s_bar)?;
            Ok((s_next - s_bar) / s_bar)
        }
    }
}

/// Inverse of [`encode_target`]; mean-scaled outputs are rectified with `|.|`.
pub fn decode_output(r: f64, s_t: f64, kind: TransformKind) -> f64 {
    match kind {
        TransformKind::LogReturn => s_t * r.exp(),
        TransformKind::MeanScale { s_bar } => ((r + 1.0) * s_bar).abs(),
    }
}

/// Which conditionals accompany `Z` at the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    /// `(dt)`: log-returns remove the dependence on `S_t` for GBM.
    DtOnly,
    /// `(S_t, dt)`
    StateAndDt,
}

impl Conditioning {
    pub fn for_model(model: &SdeModel) -> Self {
        if model.is_cir() {
            Conditioning::StateAndDt
        } else {
            Conditioning::DtOnly
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Conditioning::DtOnly => 1,
            Conditioning::StateAndDt => 2,
        }
    }

    /// Writes the conditional vector for one row into `out`.
    #[inline]
    pub fn fill(&self, s_t: f64, dt: f64, out: &mut [f64]) {
        match self {
            Conditioning::DtOnly => out[0] = dt,
            Conditioning::StateAndDt => {
                out[0] = s_t;
                out[1] = dt;
            }
        }
    }
}

/// How a [`TrainingSet`] was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub model: SdeModel,
    pub transform: TransformKind,
    pub conditioning: Conditioning,
    pub dt_grid: Vec<f64>,
    pub s_t_grid: Vec<f64>,
    pub pairing: PairingMode,
    pub n_requested: usize,
    /// Rows actually built: `n_requested` rounded down to a multiple of the cell count.
    pub n_rows: usize,
    /// Rows whose recovered `z` hit the clamp.
    pub z_clamps: usize,
}

/// Columnar store of supervised training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub dt: Vec<f64>,
    pub s_t: Vec<f64>,
    pub meta: TrainingMeta,
}

/// Level at which GBM rows are generated; log-returns do not depend on it.
pub const GBM_REFERENCE_LEVEL: f64 = 1.0;

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Writes `z,r,dt[,s_t]` rows. `s_t` is included only when it is a conditional.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let with_state = self.meta.conditioning == Conditioning::StateAndDt;
        if with_state {
            w.write_record(["z", "r", "dt", "s_t"])?;
        } else {
            w.write_record(["z", "r", "dt"])?;
        }
        for i in 0..self.len() {
            let mut rec = vec![
                self.z[i].to_string(),
                self.r[i].to_string(),
                self.dt[i].to_string(),
            ];
            if with_state {
                rec.push(self.s_t[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds a conditional training set on the Cartesian product of the grids.
///
/// Every `(dt, S_t)` cell receives exactly `n_train / cells` rows; rows are
/// shuffled, then each receives a paired exact draw `(Z, S_next)` encoded to
/// `r`. For GBM only the `dt` grid is used and rows start from
/// [`GBM_REFERENCE_LEVEL`].
pub fn build_training_set<R: Rng + ?Sized>(
    model: &SdeModel,
    transform: TransformKind,
    dt_grid: &[f64],
    s_t_grid: &[f64],
    n_train: usize,
    pairing: PairingMode,
    rng: &mut R,
) -> Result<TrainingSet> {
    model.validate()?;
    transform.validate()?;
    if dt_grid.is_empty() {
        return Err(Error::invalid("dt_grid", "must not be empty"));
    }
    for &dt in dt_grid {
        ensure_positive("dt_grid", dt)?;
    }
    let conditioning = Conditioning::for_model(model);
    let states: Vec<f64> = match conditioning {
        Conditioning::DtOnly => vec![GBM_REFERENCE_LEVEL],
        Conditioning::StateAndDt => {
            if s_t_grid.is_empty() {
                return Err(Error::invalid("s_t_grid", "must not be empty"));
            }
            for &s in s_t_grid {
                ensure_positive("s_t_grid", s)?;
            }
            s_t_grid.to_vec()
        }
    };
    let cells = dt_grid.len() * states.len();
    if n_train < cells {
        return Err(Error::invalid(
            "n_train",
            format!("{n_train} rows cannot cover {cells} grid cells"),
        ));
    }
    let per_cell = n_train / cells;
    let n_rows = per_cell * cells;

    let mut cond: Vec<(f64, f64)> = Vec::with_capacity(n_rows);
    for &dt in dt_grid {
        for &s in &states {
            cond.extend(std::iter::repeat_n((dt, s), per_cell));
        }
    }
    cond.shuffle(rng);

    let mut z = Vec::with_capacity(n_rows);
    let mut r = Vec::with_capacity(n_rows);
    let mut dts = Vec::with_capacity(n_rows);
    let mut s_ts = Vec::with_capacity(n_rows);
    let mut z_clamps = 0;
    for (dt, s) in cond {
        let pair = model.exact_sample_paired(s, dt, pairing, rng)?;
        z_clamps += usize::from(pair.clamped);
        z.push(pair.z);
        r.push(transform.encode(pair.s_next, s)?);
        dts.push(dt);
        s_ts.push(s);
    }

    Ok(TrainingSet {
        z,
        r,
        dt: dts,
        s_t: s_ts,
        meta: TrainingMeta {
            model: *model,
            transform,
            conditioning,
            dt_grid: dt_grid.to_vec(),
            s_t_grid: states,
            pairing,
            n_requested: n_train,
            n_rows,
            z_clamps,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encode_values() {
        assert_abs_diff_eq!(encode_target(0.03f64.exp(), 1.0, TransformKind::LogReturn).unwrap(), 0.03, epsilon = 1e-12);
        let ms = TransformKind::MeanScale { s_bar: 0.1 };
        assert_eq!(encode_target(0.1, 0.3, ms).unwrap(), 0.0);
        assert_abs_diff_eq!(encode_target(0.15, 0.3, ms).unwrap(), 0.5, epsilon = 1e-12);
        assert!(encode_target(1.0, 0.0, TransformKind::LogReturn).is_err());
        assert!(encode_target(-1.0, 1.0, TransformKind::LogReturn).is_err());
    }

    #[test]
    fn decode_values() {
        let ms = TransformKind::MeanScale { s_bar: 0.1 };
        assert_abs_diff_eq!(decode_output(-1.001, 0.3, ms), 1e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(decode_output(0.23, 1.0, TransformKind::LogReturn), 1.25860, epsilon = 1e-5);
    }

    proptest! {
        #[test]
        fn log_return_roundtrip(s_next in 1e-6f64..1e6, s_t in 1e-6f64..1e6) {
            let k = TransformKind::LogReturn;
            let back = k.decode(k.encode(s_next, s_t).unwrap(), s_t);
            prop_assert!(((back - s_next) / s_next).abs() < 1e-12);
        }

        #[test]
        fn mean_scale_roundtrip(s_next in 1e-8f64..10.0, s_bar in 1e-3f64..10.0) {
            let k = TransformKind::MeanScale { s_bar };
            let r = k.encode(s_next, 1.0).unwrap();
            prop_assert!(r > -1.0);
            let back = k.decode(r, 1.0);
            prop_assert!((back - s_next).abs() <= 1e-12 * s_bar.max(s_next));
        }
    }

    const PAPER_DT_GRID: [f64; 8] = [0.05, 0.1, 0.2, 0.4, 0.5, 0.67, 1.0, 2.0];

    #[test]
    fn gbm_grid_frequencies_are_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = SdeModel::default_gbm();
        let ts = build_training_set(&m, TransformKind::LogReturn, &PAPER_DT_GRID, &[], 100_000, PairingMode::InverseCdf, &mut rng).unwrap();
        assert_eq!(ts.len(), 100_000);
        for dt in PAPER_DT_GRID {
            assert_eq!(ts.dt.iter().filter(|&&d| d == dt).count(), 12_500);
        }
        // r = 0.03 + 0.2 z at dt = 1
        let rows: Vec<f64> = (0..ts.len()).filter(|&i| ts.dt[i] == 1.0).map(|i| ts.r[i]).collect();
        let mean = rows.iter().sum::<f64>() / rows.len() as f64;
        assert!((mean - 0.03).abs() < 3.0 * 0.2 / 12_500f64.sqrt());
    }

    #[test]
    fn cir_rows_satisfy_pairing_and_truncate_to_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = SdeModel::default_cir(0.3);
        let t = TransformKind::default_for(&m);
        let states = [0.01, 0.05, 0.1, 0.15, 0.2, 0.3];
        let ts = build_training_set(&m, t, &PAPER_DT_GRID, &states, 5_000, PairingMode::InverseCdf, &mut rng).unwrap();
        assert_eq!(ts.meta.n_rows, 4_992);
        assert_eq!(ts.len(), 4_992);
        for &dt in &PAPER_DT_GRID {
            for &s in &states {
                let c = (0..ts.len()).filter(|&i| ts.dt[i] == dt && ts.s_t[i] == s).count();
                assert_eq!(c, 104);
            }
        }
        for i in (0..ts.len()).step_by(5) {
            let s = m.step_from_z(ts.s_t[i], ts.dt[i], ts.z[i]).unwrap();
            let r = t.encode(s, ts.s_t[i]).unwrap();
            assert!((r - ts.r[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = SdeModel::default_cir(0.1);
        let t = TransformKind::default_for(&m);
        assert!(build_training_set(&m, t, &[], &[0.1], 10, PairingMode::InverseCdf, &mut rng).is_err());
        assert!(build_training_set(&m, t, &[1.0], &[], 10, PairingMode::InverseCdf, &mut rng).is_err());
        assert!(build_training_set(&m, t, &[1.0, 2.0], &[0.1, 0.2], 3, PairingMode::InverseCdf, &mut rng).is_err());
    }

    #[test]
    fn csv_header_depends_on_conditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = SdeModel::default_cir(0.1);
        let ts = build_training_set(&m, TransformKind::default_for(&m), &[1.0], &[0.1], 4, PairingMode::InverseCdf, &mut rng).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("z,r,dt,s_t\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
