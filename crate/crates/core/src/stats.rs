//! Two-sample distances, weak and strong errors, and the sample-size sweep.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn sorted(x: &[f64], name: &'static str) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::invalid(name, "sample is empty"));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid(name, "sample contains NaN"));
    }
    let mut v = x.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

/// Empirical CDF `F(t) = #{x_i <= t} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    values: Vec<f64>,
}

impl Ecdf {
    pub fn new(sample: &[f64]) -> Result<Self> {
        Ok(Ecdf { values: sorted(sample, "sample")? })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.values.partition_point(|&v| v <= t) as f64 / self.values.len() as f64
    }
}

/// Two-sample Kolmogorov-Smirnov statistic `sup_t |F_x(t) - F_y(t)|`.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<f64> {
    let a = sorted(x, "x")?;
    let b = sorted(y, "y")?;
    Ok(ks_sorted(&a, &b))
}

fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // step over every copy of the smaller value in both samples before comparing
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_against_cdf<F: Fn(f64) -> Result<f64>>(x: &[f64], cdf: F) -> Result<f64> {
    let a = sorted(x, "x")?;
    let n = a.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in a.iter().enumerate() {
        let f = cdf(v)?;
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// 1-Wasserstein distance between two empirical distributions.
///
/// Equal sizes use the mean absolute difference of order statistics; otherwise
/// `integral |F_x - F_y| dt` is evaluated exactly on the merged support.
pub fn wasserstein1(x: &[f64], y: &[f64]) -> Result<f64> {
    let a = sorted(x, "x")?;
    let b = sorted(y, "y")?;
    Ok(w1_sorted(&a, &b))
}

fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        return a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64;
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / n - j as f64 / m).abs() * (t - prev);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        prev = t;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    #[default]
    Identity,
    Square,
}

impl TestFunction {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            TestFunction::Identity => x,
            TestFunction::Square => x * x,
        }
    }
}

/// `(e_w, e_s) = (|mean f(ref) - mean f(approx)|, mean |ref - approx|)`
/// for terminal values paired by common random numbers.
pub fn weak_strong_error(approx: &[f64], reference: &[f64], f: TestFunction) -> Result<(f64, f64)> {
    if approx.len() != reference.len() {
        return Err(Error::Shape(format!(
            "{} approximate values against {} reference values",
            approx.len(),
            reference.len()
        )));
    }
    if approx.is_empty() {
        return Err(Error::invalid("approx", "sample is empty"));
    }
    let n = approx.len() as f64;
    let (mut fa, mut fr, mut abs) = (0.0, 0.0, 0.0);
    for (&a, &r) in approx.iter().zip(reference) {
        fa += f.apply(a);
        fr += f.apply(r);
        abs += (r - a).abs();
    }
    Ok(((fr - fa).abs() / n, abs / n))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample mean and unbiased standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    if x.len() < 2 {
        return (m, 0.0);
    }
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64;
    (m, v.sqrt())
}

/// Least-squares `y = intercept + slope * x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Shape("linear fit needs two equal-length series of length >= 2".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("x", "has no spread"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.iter().chain(y).any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::invalid("loglog_slope", "needs positive values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    Ok(linear_fit(&lx, &ly)?.0)
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Shape("spearman needs two equal-length series of length >= 2".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Draws `n` values of the distribution under test.
pub type SampleFn<'a> = dyn Fn(usize, &mut ChaCha8Rng) -> Result<Vec<f64>> + Sync + 'a;

pub struct NamedSampler<'a> {
    pub name: String,
    pub sample: &'a SampleFn<'a>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sampler: String,
    pub n: usize,
    pub repeat: usize,
    pub ks: f64,
    pub w1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub sampler: String,
    pub n: usize,
    pub ks_mean: f64,
    pub ks_std: f64,
    pub w1_mean: f64,
    pub w1_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub records: Vec<SweepRecord>,
}

impl EvalReport {
    pub fn summary(&self) -> Vec<SweepSummary> {
        let mut keys: Vec<(String, usize)> = Vec::new();
        for r in &self.records {
            if !keys.iter().any(|(s, n)| *s == r.sampler && *n == r.n) {
                keys.push((r.sampler.clone(), r.n));
            }
        }
        keys.into_iter()
            .map(|(sampler, n)| {
                let rows: Vec<&SweepRecord> =
                    self.records.iter().filter(|r| r.sampler == sampler && r.n == n).collect();
                let ks: Vec<f64> = rows.iter().map(|r| r.ks).collect();
                let w1: Vec<f64> = rows.iter().map(|r| r.w1).collect();
                let (ks_mean, ks_std) = mean_std(&ks);
                let (w1_mean, w1_std) = mean_std(&w1);
                SweepSummary { sampler, n, ks_mean, ks_std, w1_mean, w1_std }
            })
            .collect()
    }

    /// `sampler,n,repeat,ks,w1`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `sampler,n,ks_mean,ks_std,w1_mean,w1_std`
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.summary() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const EXACT_BASELINE: &str = "exact";

/// Compares each sampler with fresh reference draws for every `n` and repeat.
///
/// An exact-vs-exact baseline named [`EXACT_BASELINE`] is prepended. Every
/// `(sampler, n, repeat)` cell uses its own ChaCha stream of `seed`, so the
/// report does not depend on scheduling.
pub fn benchmark_sweep(
    samplers: &[NamedSampler<'_>],
    reference: &SampleFn<'_>,
    n_list: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<EvalReport> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::invalid("n_list", "must be non-empty with positive sizes"));
    }
    if repeats < 2 {
        return Err(Error::invalid("repeats", "at least two repeats are needed for a spread"));
    }
    let mut all: Vec<(&str, &SampleFn<'_>)> = vec![(EXACT_BASELINE, reference)];
    all.extend(samplers.iter().map(|s| (s.name.as_str(), s.sample)));

    let mut cells = Vec::new();
    for (si, _) in all.iter().enumerate() {
        for (ni, &n) in n_list.iter().enumerate() {
            for rep in 0..repeats {
                cells.push((si, ni, n, rep));
            }
        }
    }
    let records = cells
        .par_iter()
        .map(|&(si, ni, n, rep)| {
            let (name, sample) = all[si];
            let stream = ((si * n_list.len() + ni) * repeats + rep) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let wrap = |e: Error| Error::Sampler { source_name: name.to_string(), message: e.to_string() };
            let x = sample(n, &mut rng).map_err(wrap)?;
            let y = reference(n, &mut rng).map_err(|e| Error::Sampler {
                source_name: EXACT_BASELINE.to_string(),
                message: e.to_string(),
            })?;
            let a = sorted(&x, "sample").map_err(wrap)?;
            let b = sorted(&y, "reference")?;
            Ok(SweepRecord { sampler: name.to_string(), n, repeat: rep, ks: ks_sorted(&a, &b), w1: w1_sorted(&a, &b) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ks_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_two_sample(&x, &x).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&x, &[3.0, 4.0, 5.0, 6.0]).unwrap(), 0.5);
        assert_eq!(ks_two_sample(&x, &[10.0, 11.0]).unwrap(), 1.0);
        assert!(ks_two_sample(&[], &x).is_err());
    }

    #[test]
    fn ks_handles_ties() {
        // identical multisets in different order
        assert_eq!(ks_two_sample(&[1.0, 1.0, 2.0], &[2.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(ks_two_sample(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ks_against_uniform_cdf() {
        let d = ks_against_cdf(&[0.25, 0.75], |t| Ok(t.clamp(0.0, 1.0))).unwrap();
        assert_abs_diff_eq!(d, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn ecdf_steps() {
        let e = Ecdf::new(&[3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(e.eval(0.5), 0.0);
        assert_eq!(e.eval(2.0), 0.75);
        assert_eq!(e.eval(3.0), 1.0);
    }

    #[test]
    fn w1_examples() {
        assert_eq!(wasserstein1(&[0.0, 1.0], &[0.0, 3.0]).unwrap(), 1.0);
        let x = [0.3, -1.2, 4.0, 2.5];
        assert_eq!(wasserstein1(&x, &x).unwrap(), 0.0);
        let shifted: Vec<f64> = x.iter().map(|v| v - 0.7).collect();
        assert_abs_diff_eq!(wasserstein1(&x, &shifted).unwrap(), 0.7, epsilon = 1e-12);
        // {0,1} vs {0,0,3}: |1/2 - 2/3| on [0,1) plus |1 - 2/3| on [1,3)
        assert_abs_diff_eq!(wasserstein1(&[0.0, 1.0], &[0.0, 0.0, 3.0]).unwrap(), 5.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn unequal_w1_agrees_with_replicated_equal_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..7).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let xr: Vec<f64> = x.iter().flat_map(|&v| [v; 3]).collect();
        let yr: Vec<f64> = y.iter().flat_map(|&v| [v; 7]).collect();
        assert_abs_diff_eq!(wasserstein1(&x, &y).unwrap(), wasserstein1(&xr, &yr).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn weak_strong_examples() {
        let r = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(weak_strong_error(&r, &r, TestFunction::Identity).unwrap(), (0.0, 0.0));
        let up: Vec<f64> = r.iter().map(|v| v + 0.01).collect();
        let (w, s) = weak_strong_error(&up, &r, TestFunction::Identity).unwrap();
        assert_abs_diff_eq!(w, 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.01, epsilon = 1e-12);
        let alt: Vec<f64> = r.iter().enumerate().map(|(i, v)| if i % 2 == 0 { v + 0.01 } else { v - 0.01 }).collect();
        let (w, s) = weak_strong_error(&alt, &r, TestFunction::Identity).unwrap();
        assert_abs_diff_eq!(w, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.01, epsilon = 1e-12);
        assert!(weak_strong_error(&r[..3], &r, TestFunction::Square).is_err());
    }

    #[test]
    fn spearman_and_fit() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
        assert_abs_diff_eq!(spearman(&x, &y).unwrap(), 1.0, epsilon = 1e-15);
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        assert_abs_diff_eq!(spearman(&x, &rev).unwrap(), -1.0, epsilon = 1e-15);
        let lin: Vec<f64> = x.iter().map(|v| 0.03 + 0.2 * v).collect();
        let (s, i) = linear_fit(&x, &lin).unwrap();
        assert_abs_diff_eq!(s, 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(i, 0.03, epsilon = 1e-14);
    }

    fn normal(n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok((0..n).map(|_| rng.sample(StandardNormal)).collect())
    }

    #[test]
    fn sweep_baseline_scaling_and_bias_plateau() {
        let shifted = |n: usize, rng: &mut ChaCha8Rng| -> Result<Vec<f64>> {
            Ok(normal(n, rng)?.into_iter().map(|v| v + 0.01).collect())
        };
        let samplers = [NamedSampler { name: "shifted".into(), sample: &shifted }];
        let rep = benchmark_sweep(&samplers, &normal, &[100, 10_000, 100_000], 10, 42).unwrap();
        let sum = rep.summary();
        let get = |s: &str, n: usize| sum.iter().find(|r| r.sampler == s && r.n == n).unwrap().clone();
        assert!(get(EXACT_BASELINE, 100_000).ks_mean < get(EXACT_BASELINE, 100).ks_mean);
        let ks = get(EXACT_BASELINE, 10_000).ks_mean;
        // Kolmogorov limit law: E[sqrt(n/2) D] -> sqrt(pi/2) ln 2
        let expected = (std::f64::consts::PI / 2.0).sqrt() * std::f64::consts::LN_2 / (10_000f64 / 2.0).sqrt();
        assert!(ks > expected / 1.5 && ks < expected * 1.5, "{ks}");
        assert!((get("shifted", 100_000).w1_mean - 0.01).abs() < 0.005);
        let again = benchmark_sweep(&samplers, &normal, &[100, 10_000, 100_000], 10, 42).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn sweep_reports_failing_sampler_by_name() {
        let bad = |_: usize, _: &mut ChaCha8Rng| -> Result<Vec<f64>> { Err(Error::invalid("x", "boom")) };
        let samplers = [NamedSampler { name: "broken".into(), sample: &bad }];
        match benchmark_sweep(&samplers, &normal, &[10], 2, 1) {
            Err(Error::Sampler { source_name, .. }) => assert_eq!(source_name, "broken"),
            other => panic!("{other:?}"),
        }
        assert!(benchmark_sweep(&samplers, &normal, &[10], 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn ks_symmetric_and_invariant(x in prop::collection::vec(-5.0f64..5.0, 1..40), y in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let d = ks_two_sample(&x, &y).unwrap();
            prop_assert_eq!(d, ks_two_sample(&y, &x).unwrap());
            let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let ey: Vec<f64> = y.iter().map(|v| v.exp()).collect();
            prop_assert_eq!(d, ks_two_sample(&ex, &ey).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn w1_triangle_inequality(
            x in prop::collection::vec(-5.0f64..5.0, 1..30),
            y in prop::collection::vec(-5.0f64..5.0, 1..30),
            z in prop::collection::vec(-5.0f64..5.0, 1..30),
        ) {
            let xy = wasserstein1(&x, &y).unwrap();
            let yz = wasserstein1(&y, &z).unwrap();
            let xz = wasserstein1(&x, &z).unwrap();
            prop_assert!(xz <= xy + yz + 1e-12);
            prop_assert!((xy - wasserstein1(&y, &x).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn weak_error_bounded_by_strong(x in prop::collection::vec(-5.0f64..5.0, 1..50), d in prop::collection::vec(-1.0f64..1.0, 50)) {
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            let (w, s) = weak_strong_error(&y, &x, TestFunction::Identity).unwrap();
            prop_assert!(w <= s + 1e-12);
        }
    }
}
