//! Scalar special functions and samplers: the standard normal law, the
//! regularized incomplete gamma function and the non-central chi-squared law.
//!
//! The non-central chi-squared CDF is evaluated as a Poisson mixture of
//! central chi-squared CDFs,
//!
//! ```text
//! F(x; df, nc) = sum_j  Pois(j; nc/2) * P(df/2 + j, x/2)
//! ```
//!
//! summed outward from the modal Poisson index. Neighbouring incomplete gamma
//! values are linked by `P(s + 1, y) = P(s, y) - y^s e^-y / Gamma(s + 1)`, so
//! only one incomplete gamma evaluation is needed per call. The upper tail is
//! accumulated separately from the complementary function `Q`, which keeps both
//! tails accurate in relative terms.

#![allow(clippy::excessive_precision)]

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{ensure_finite, ensure_probability, Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Series terms below this size are dropped.
const SERIES_EPS: f64 = 1e-17;
const MAX_SERIES_TERMS: usize = 100_000;

/// Standard normal CDF `Phi(x)`.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    ensure_finite("x", x)?;
    Ok(phi(x))
}

/// Unchecked `Phi(x)`; accurate to a few ulps in relative terms in both tails.
#[inline]
pub(crate) fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Inverse of the standard normal CDF.
///
/// Wichura's AS241 rational approximation followed by one Halley step on
/// `Phi(x) - p`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    ensure_probability("p", p)?;
    Ok(phi_inv(p))
}

pub(crate) fn phi_inv(p: f64) -> f64 {
    let x = as241(p);
    if !x.is_finite() {
        return x;
    }
    // Halley refinement; the tail is handled through the lower-tail probability
    // of the mirrored argument so that Phi(x) - p never cancels badly.
    let (err, xs) = if x > 0.0 {
        // Phi(x) - p = (1 - p) - Phi(-x), with sign flipped.
        (-((1.0 - p) - phi(-x)), x)
    } else {
        (phi(x) - p, x)
    };
    let u = err * SQRT_2PI * (0.5 * xs * xs).exp();
    x - u / (1.0 + 0.5 * x * u)
}

fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_4e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_6;
        let den = ((((((5.226_495_278_852_854_6e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271_1e4)
            * r
            + 2.121_379_430_158_659_6e4)
            * r
            + 5.394_196_021_424_751_1e3)
            * r
            + 6.871_870_074_920_579_1e2)
            * r
            + 4.231_333_070_160_091_1e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506_1e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_6)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_6;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_7e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_3e-2)
            * r
            + 2.965_605_718_285_048_9e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_8;
        let den = ((((((2.044_263_103_389_939_8e-15 * r + 1.421_511_758_316_445_9e-7) * r
            + 1.846_318_317_510_054_7e-5)
            * r
            + 7.868_691_311_456_132_6e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_879_4e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[inline]
fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn reg_lower_gamma(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    Ok(reg_gamma_pq(a, x).0)
}

/// Regularized upper incomplete gamma function `Q(a, x) = 1 - P(a, x)`.
pub fn reg_upper_gamma(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    Ok(reg_gamma_pq(a, x).1)
}

fn check_gamma_args(a: f64, x: f64) -> Result<()> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::invalid("a", format!("must be positive, got {a}")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::invalid("x", format!("must be non-negative, got {x}")));
    }
    Ok(())
}

/// `y^a e^-y / Gamma(a + 1)`, the mass that separates `P(a, y)` and `P(a + 1, y)`.
#[inline]
fn gamma_step_term(a: f64, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    (a * y.ln() - y - ln_gamma(a + 1.0)).exp()
}

/// Both `P(a, x)` and `Q(a, x)`, each computed without cancellation in its
/// own small tail. Arguments must already be validated.
pub(crate) fn reg_gamma_pq(a: f64, x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    if x < a + 1.0 {
        // Power series: P = x^a e^-x / Gamma(a + 1) * sum_n x^n / ((a+1)...(a+n)).
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        loop {
            term *= x / (a + n);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            n += 1.0;
        }
        let p = (sum * gamma_step_term(a, x)).min(1.0);
        (p, 1.0 - p)
    } else {
        // Continued fraction for Q (modified Lentz).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        let mut i = 1.0;
        loop {
            let an = -i * (i - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 || i > 10_000.0 {
                break;
            }
            i += 1.0;
        }
        let q = ((a * x.ln() - x - ln_gamma(a)).exp() * h).min(1.0);
        (1.0 - q, q)
    }
}

/// Parameters of a non-central chi-squared law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ncx2Params {
    /// Degrees of freedom.
    pub df: f64,
    /// Non-centrality.
    pub nc: f64,
}

impl Ncx2Params {
    pub fn new(df: f64, nc: f64) -> Result<Self> {
        let p = Ncx2Params { df, nc };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.df.is_finite() && self.df > 0.0) {
            return Err(Error::invalid("df", format!("must be positive, got {}", self.df)));
        }
        if !(self.nc.is_finite() && self.nc >= 0.0) {
            return Err(Error::invalid("nc", format!("must be non-negative, got {}", self.nc)));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.df + self.nc
    }

    pub fn variance(&self) -> f64 {
        2.0 * (self.df + 2.0 * self.nc)
    }
}

/// CDF, survival function and density at one point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ncx2Eval {
    pub cdf: f64,
    pub sf: f64,
    pub pdf: f64,
}

/// Non-central chi-squared CDF.
pub fn ncx2_cdf(x: f64, p: Ncx2Params) -> Result<f64> {
    p.validate()?;
    if x.is_nan() {
        return Err(Error::invalid("x", "must not be NaN"));
    }
    Ok(ncx2_eval(x, p).cdf)
}

/// Non-central chi-squared survival function `1 - F(x)`, accurate in the upper tail.
pub fn ncx2_sf(x: f64, p: Ncx2Params) -> Result<f64> {
    p.validate()?;
    if x.is_nan() {
        return Err(Error::invalid("x", "must not be NaN"));
    }
    Ok(ncx2_eval(x, p).sf)
}

/// Non-central chi-squared density.
pub fn ncx2_pdf(x: f64, p: Ncx2Params) -> Result<f64> {
    p.validate()?;
    if x.is_nan() {
        return Err(Error::invalid("x", "must not be NaN"));
    }
    Ok(ncx2_eval(x, p).pdf)
}

pub(crate) fn ncx2_eval(x: f64, p: Ncx2Params) -> Ncx2Eval {
    if x <= 0.0 {
        return Ncx2Eval {
            cdf: 0.0,
            sf: 1.0,
            pdf: 0.0,
        };
    }
    if x.is_infinite() {
        return Ncx2Eval {
            cdf: 1.0,
            sf: 0.0,
            pdf: 0.0,
        };
    }
    let a = 0.5 * p.df;
    let y = 0.5 * x;
    let lambda = 0.5 * p.nc;
    if lambda == 0.0 {
        let (cdf, sf) = reg_gamma_pq(a, y);
        let pdf = gamma_step_term(a, y) * a / x;
        return Ncx2Eval { cdf, sf, pdf };
    }

    let mode = lambda.floor();
    let k = mode as usize;
    let w_mode = (-lambda + mode * lambda.ln() - ln_gamma(mode + 1.0)).exp();
    let (p_mode, q_mode) = reg_gamma_pq(a + mode, y);
    let t_mode = gamma_step_term(a + mode, y);

    if t_mode < 1e-280 && k > 0 {
        // The recurrence term underflows; evaluate every mixture component directly.
        return ncx2_eval_direct(a, y, x, lambda, k, w_mode);
    }

    let mut cdf = 0.0;
    let mut sf = 0.0;
    let mut pdf = 0.0;

    // Forward from the mode.
    {
        let (mut w, mut pj, mut qj, mut t) = (w_mode, p_mode, q_mode, t_mode);
        let mut j = k;
        for _ in 0..MAX_SERIES_TERMS {
            let s = a + j as f64;
            cdf += w * pj;
            sf += w * qj;
            pdf += w * t * s / x;
            // P(s+1) = P(s) - t_s, Q(s+1) = Q(s) + t_s
            pj = (pj - t).max(0.0);
            qj += t;
            t *= y / (s + 1.0);
            w *= lambda / (j as f64 + 1.0);
            j += 1;
            let ratio = lambda / (j as f64 + 1.0);
            if (j as f64) > lambda && ratio < 1.0 && w / (1.0 - ratio) < SERIES_EPS {
                break;
            }
        }
    }

    // Backward from the mode.
    if k > 0 {
        let (mut w, mut pj, mut qj, mut t) = (w_mode, p_mode, q_mode, t_mode);
        let mut j = k;
        while j > 0 {
            // Step from j to j-1: t_{j-1} = t_j (s_j) / y where s_j = a + j.
            let s = a + j as f64;
            t *= s / y;
            pj += t;
            qj = (qj - t).max(0.0);
            w *= j as f64 / lambda;
            j -= 1;
            let sj = a + j as f64;
            cdf += w * pj.min(1.0);
            sf += w * qj;
            pdf += w * t * sj / x;
            let ratio = j as f64 / lambda;
            if w / (1.0 - ratio).max(1e-300) < SERIES_EPS {
                break;
            }
        }
    }

    Ncx2Eval {
        cdf: cdf.clamp(0.0, 1.0),
        sf: sf.clamp(0.0, 1.0),
        pdf,
    }
}

fn ncx2_eval_direct(a: f64, y: f64, x: f64, lambda: f64, k: usize, w_mode: f64) -> Ncx2Eval {
    let mut cdf = 0.0;
    let mut sf = 0.0;
    let mut pdf = 0.0;
    let mut add = |j: usize, w: f64| {
        let s = a + j as f64;
        let (pj, qj) = reg_gamma_pq(s, y);
        cdf += w * pj;
        sf += w * qj;
        pdf += w * gamma_step_term(s, y) * s / x;
    };
    let mut w = w_mode;
    let mut j = k;
    loop {
        add(j, w);
        w *= lambda / (j as f64 + 1.0);
        j += 1;
        if (j as f64) > lambda && w < SERIES_EPS {
            break;
        }
    }
    let mut w = w_mode;
    let mut j = k;
    while j > 0 && w >= SERIES_EPS {
        w *= j as f64 / lambda;
        j -= 1;
        add(j, w);
    }
    Ncx2Eval {
        cdf: cdf.clamp(0.0, 1.0),
        sf: sf.clamp(0.0, 1.0),
        pdf,
    }
}

/// Non-central chi-squared quantile.
pub fn ncx2_quantile(prob: f64, p: Ncx2Params) -> Result<f64> {
    p.validate()?;
    ensure_probability("prob", prob)?;
    if prob <= 0.5 {
        ncx2_solve(prob, false, p)
    } else {
        ncx2_solve(1.0 - prob, true, p)
    }
}

/// Quantile given an upper-tail probability `q = 1 - prob`; accurate for tiny `q`.
pub fn ncx2_quantile_upper(q: f64, p: Ncx2Params) -> Result<f64> {
    p.validate()?;
    ensure_probability("q", q)?;
    if q <= 0.5 {
        ncx2_solve(q, true, p)
    } else {
        ncx2_solve(1.0 - q, false, p)
    }
}

/// Solves `F(x) = target` (or `S(x) = target` in the upper tail) for `x`.
///
/// Works in `u = ln x` against `ln F` (resp. `ln S`), which is close to linear
/// near the origin even when the density is singular there (`df < 2`). A
/// geometric bracket around a moment-based starting point keeps the Newton
/// iterates safe; any step leaving the bracket is replaced by bisection in `u`.
pub(crate) fn ncx2_solve(target: f64, upper: bool, p: Ncx2Params) -> Result<f64> {
    let ln_target = target.ln();
    // g(u) increasing in u
    let g = |u: f64| -> (f64, f64) {
        let x = u.exp();
        let e = ncx2_eval(x, p);
        if upper {
            // -ln S is increasing; compare against -ln target
            let s = e.sf.max(f64::MIN_POSITIVE);
            (-(s.ln()) + ln_target, x * e.pdf / s)
        } else {
            let f = e.cdf.max(f64::MIN_POSITIVE);
            (f.ln() - ln_target, x * e.pdf / f)
        }
    };

    let no_conv = || Error::NoConvergence {
        what: "non-central chi-squared quantile",
        target,
    };

    // Starting point: central chi-squared approximation matched to the mean.
    let mut u = p.mean().max(1e-300).ln();
    let (mut val, mut slope) = g(u);
    let (mut lo, mut hi);
    let step = 8f64.ln();
    if val < 0.0 {
        lo = u;
        hi = u + step;
        let mut k = 0;
        loop {
            let (v, _) = g(hi);
            if v >= 0.0 {
                break;
            }
            lo = hi;
            hi += step * (1.0 + k as f64 * 0.5);
            k += 1;
            if k > 200 || hi > 709.0 {
                return Err(no_conv());
            }
        }
    } else {
        hi = u;
        lo = u - step;
        let mut k = 0;
        loop {
            let (v, _) = g(lo);
            if v <= 0.0 {
                break;
            }
            hi = lo;
            lo -= step * (1.0 + k as f64 * 0.5);
            k += 1;
            if k > 400 || lo < -740.0 {
                return Err(no_conv());
            }
        }
    }

    for _ in 0..200 {
        if val == 0.0 {
            return Ok(u.exp());
        }
        if val < 0.0 {
            lo = lo.max(u);
        } else {
            hi = hi.min(u);
        }
        let newton = if slope.is_finite() && slope > 0.0 {
            u - val / slope
        } else {
            f64::NAN
        };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let du = (next - u).abs();
        u = next;
        if du <= 1e-15 * u.abs().max(1.0) || (hi - lo) <= 1e-15 * u.abs().max(1.0) {
            return Ok(u.exp());
        }
        let r = g(u);
        val = r.0;
        slope = r.1;
    }
    Err(no_conv())
}

/// Draws one non-central chi-squared variate.
///
/// Poisson mixture: `K ~ Poisson(nc/2)`, then a central chi-squared variate with
/// `df + 2K` degrees of freedom, i.e. twice a `Gamma(df/2 + K, 1)` draw.
pub fn sample_ncx2<R: Rng + ?Sized>(p: Ncx2Params, rng: &mut R) -> Result<f64> {
    p.validate()?;
    Ok(sample_ncx2_unchecked(p, rng))
}

pub(crate) fn sample_ncx2_unchecked<R: Rng + ?Sized>(p: Ncx2Params, rng: &mut R) -> f64 {
    let lambda = 0.5 * p.nc;
    let k = if lambda > 0.0 {
        Poisson::new(lambda)
            .expect("positive finite Poisson rate")
            .sample(rng)
    } else {
        0.0
    };
    let shape = 0.5 * p.df + k;
    let g: f64 = Gamma::new(shape, 1.0)
        .expect("positive gamma shape")
        .sample(rng);
    // Shape < 1 draws can round to 0 for tiny uniforms; keep the support open.
    (2.0 * g).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_cdf_values() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        assert_abs_diff_eq!(std_normal_cdf(1.959964).unwrap(), 0.975, epsilon = 1e-6);
        for x in [0.5, 2.0, 5.0] {
            let s = std_normal_cdf(x).unwrap() + std_normal_cdf(-x).unwrap();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
    }

    #[test]
    fn normal_cdf_matches_high_precision_values() {
        // mpmath.ncdf at 30 digits
        let cases = [
            (-8.0, 6.2209605742717841e-16),
            (-3.0, 0.0013498980316300945),
            (-1.0, 0.15865525393145705),
            (0.3, 0.61791142218895263),
            (2.5, 0.99379033467422386),
        ];
        for (x, want) in cases {
            let got = std_normal_cdf(x).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.max(1e-4), "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn normal_quantile_values() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(std_normal_quantile(0.975).unwrap(), 1.959964, epsilon = 1e-5);
        for x in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let back = std_normal_quantile(phi(x)).unwrap();
            assert_abs_diff_eq!(back, x, epsilon = 1e-8);
        }
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(std_normal_quantile(p).is_err());
        }
    }

    #[test]
    fn normal_quantile_inverts_cdf_across_range() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let x = std_normal_quantile(p).unwrap();
            assert!(x > prev);
            prev = x;
            assert!((phi(x) - p).abs() <= 1e-9, "p={p}");
        }
        for p in [1e-300, 1e-100, 1e-20, 1e-10, 1e-5] {
            let x = std_normal_quantile(p).unwrap();
            assert!(((phi(x) - p) / p).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn incomplete_gamma_closed_forms() {
        assert_abs_diff_eq!(reg_lower_gamma(1.0, 2.0).unwrap(), 1.0 - (-2f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            reg_lower_gamma(2.0, 2.0).unwrap(),
            1.0 - 3.0 * (-2f64).exp(),
            epsilon = 1e-15
        );
        assert_eq!(reg_lower_gamma(0.22, 0.0).unwrap(), 0.0);
        assert!(reg_lower_gamma(0.0, 1.0).is_err());
        assert!(reg_lower_gamma(-1.0, 1.0).is_err());
        assert!(reg_lower_gamma(1.0, -1.0).is_err());
    }

    #[test]
    fn incomplete_gamma_matches_high_precision_oracle() {
        // mpmath.gammainc(a, 0, x, regularized=True) at 30 digits
        let cases = [
            (0.1, 0.05, 0.77553863545103057),
            (0.22, 1e-8, 0.019031754533564921),
            (0.5, 0.3, 0.56142197391900014),
            (2.2, 10.0, 0.99926711572674647),
            (15.5, 3.0, 2.9061301748356286e-7),
            (50.0, 45.0, 0.24680203440017027),
            (120.0, 150.0, 0.99489528839684953),
            (200.0, 170.0, 0.013418580090211785),
            (200.0, 260.0, 0.99995249987555699),
            (0.1, 30.0, 0.99999999999999955),
        ];
        for (a, x, want) in cases {
            let got = reg_lower_gamma(a, x).unwrap();
            assert!(((got - want) / want).abs() <= 1e-10, "a={a} x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn ncx2_cdf_matches_high_precision_mixture() {
        // Poisson mixture summed in mpmath at 40 digits: (df, nc, x, cdf, sf)
        let cases = [
            (4.0, 38.0334, 40.0, 0.46662489307893494, 0.53337510692106506),
            (0.44, 38.0334, 40.0, 0.58022138793874032, 0.41977861206125968),
            (0.44, 38.0334, 0.01, 2.028736579454416e-9, 0.99999999797126342),
            (0.44, 4.226, 1e-10, 0.00071711364990434442, 0.99928288635009566),
            (4.0, 38.0334, 1.0, 5.4028377075910182e-9, 0.99999999459716229),
            (0.44, 4.226, 3.0, 0.43368482105375049, 0.56631517894624951),
            (10.0, 900.0, 850.0, 0.15927938471421296, 0.84072061528578704),
            (4.0, 0.5, 2.5, 0.30331740829434505, 0.69668259170565495),
        ];
        for (df, nc, x, want_cdf, want_sf) in cases {
            let p = Ncx2Params::new(df, nc).unwrap();
            let cdf = ncx2_cdf(x, p).unwrap();
            let sf = ncx2_sf(x, p).unwrap();
            assert!((cdf - want_cdf).abs() <= 1e-12 + 1e-9 * want_cdf, "cdf df={df} nc={nc} x={x}: {cdf}");
            assert!((sf - want_sf).abs() <= 1e-12 + 1e-9 * want_sf, "sf df={df} nc={nc} x={x}: {sf}");
        }
    }

    #[test]
    fn ncx2_cdf_basic_values() {
        let p = Ncx2Params::new(4.0, 0.0).unwrap();
        assert_abs_diff_eq!(ncx2_cdf(4.0, p).unwrap(), 1.0 - 3.0 * (-2f64).exp(), epsilon = 1e-8);
        assert_eq!(ncx2_cdf(-1.0, Ncx2Params::new(0.44, 38.0).unwrap()).unwrap(), 0.0);
        assert!(Ncx2Params::new(0.0, 1.0).is_err());
        assert!(Ncx2Params::new(1.0, -1.0).is_err());
        assert!(Ncx2Params::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn ncx2_cdf_and_sf_are_complementary() {
        for (df, nc) in [(0.44, 38.0334), (4.0, 38.0334), (0.44, 4.226), (4.0, 0.5), (10.0, 900.0)] {
            let p = Ncx2Params::new(df, nc).unwrap();
            for x in [1e-6, 0.01, 1.0, 10.0, 42.0, 80.0, 1000.0] {
                let e = ncx2_eval(x, p);
                assert!((e.cdf + e.sf - 1.0).abs() < 1e-12, "df={df} nc={nc} x={x}");
            }
        }
    }

    #[test]
    fn ncx2_pdf_matches_cdf_derivative() {
        for (df, nc) in [(0.44, 38.0334), (4.0, 38.0334), (4.0, 0.0), (0.44, 0.3)] {
            let p = Ncx2Params::new(df, nc).unwrap();
            for x in [0.5, 3.0, 20.0, 45.0] {
                let h = 1e-5 * x;
                // difference whichever tail is small to avoid cancellation near 1
                let fd = if ncx2_cdf(x, p).unwrap() < 0.5 {
                    (ncx2_cdf(x + h, p).unwrap() - ncx2_cdf(x - h, p).unwrap()) / (2.0 * h)
                } else {
                    (ncx2_sf(x - h, p).unwrap() - ncx2_sf(x + h, p).unwrap()) / (2.0 * h)
                };
                let pdf = ncx2_pdf(x, p).unwrap();
                assert!((fd - pdf).abs() <= 1e-6 * pdf.max(1e-8), "df={df} nc={nc} x={x}: {fd} {pdf}");
            }
        }
    }

    #[test]
    fn ncx2_quantile_examples() {
        let central = Ncx2Params::new(4.0, 0.0).unwrap();
        // bisection on the central closed form in mpmath: 3.35669398003
        assert_abs_diff_eq!(ncx2_quantile(0.5, central).unwrap(), 3.3567, epsilon = 1e-3);
        for df in [0.44, 4.0] {
            let p = Ncx2Params::new(df, 38.0334).unwrap();
            for x in [0.01, 1.0, 10.0, 50.0] {
                let prob = ncx2_cdf(x, p).unwrap();
                let back = ncx2_quantile(prob, p).unwrap();
                assert!(((back - x) / x).abs() < 1e-6, "df={df} x={x} back={back}");
                assert!((ncx2_cdf(back, p).unwrap() - prob).abs() < 1e-8);
            }
            let tiny = ncx2_quantile(1e-6, p).unwrap();
            assert!(tiny > 0.0 && tiny < ncx2_quantile(1e-3, p).unwrap());
        }
        assert!(ncx2_quantile(0.0, central).is_err());
        assert!(ncx2_quantile(1.0, central).is_err());
    }

    #[test]
    fn ncx2_upper_quantile_is_accurate_in_far_tail() {
        let p = Ncx2Params::new(0.44, 4.226).unwrap();
        for q in [1e-15, 1e-10, 1e-4] {
            let x = ncx2_quantile_upper(q, p).unwrap();
            let sf = ncx2_sf(x, p).unwrap();
            assert!(((sf - q) / q).abs() < 1e-9, "q={q}: sf={sf}");
        }
    }

    #[test]
    fn ncx2_sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (df, nc) in [(4.0, 38.0334), (0.44, 38.0334), (4.0, 0.0)] {
            let p = Ncx2Params::new(df, nc).unwrap();
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| sample_ncx2(p, &mut rng).unwrap()).collect();
            assert!(xs.iter().all(|&x| x > 0.0));
            let mean = xs.iter().sum::<f64>() / n as f64;
            let se = (p.variance() / n as f64).sqrt();
            assert!((mean - p.mean()).abs() < 5.0 * se, "df={df} nc={nc} mean={mean}");
        }
    }
}
