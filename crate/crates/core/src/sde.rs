//! GBM and CIR models with their exact conditional transition laws.
//!
//! GBM steps are lognormal. A CIR step `S_{t+dt} | S_t` is `c * X` with `X`
//! non-central chi-squared, where
//!
//! ```text
//! xi    = 4 kappa S_t e^{-kappa dt} / (gamma^2 (1 - e^{-kappa dt}))
//! delta = 4 kappa s_bar / gamma^2
//! c     = gamma^2 (1 - e^{-kappa dt}) / (4 kappa)
//! ```
//!
//! Every model exposes the same bijection between a standard normal draw and a
//! step, `S = F^{-1}(Phi(Z))`, which the supervised GAN is trained on.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, ensure_probability, Error, Result};
use crate::special::{self, ncx2_eval, ncx2_solve, phi, phi_inv, Ncx2Params};

/// z values returned by [`SdeModel::z_from_step`] are clamped to this range.
pub const Z_CLAMP: f64 = 8.3;

/// Inputs to [`SdeModel::step_from_z`] are limited to this range so that both
/// tail probabilities stay representable.
const Z_INPUT_LIMIT: f64 = 37.0;

/// A one-dimensional Itô SDE with a known transition law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SdeModel {
    /// `dS = mu S dt + sigma S dW`
    Gbm { mu: f64, sigma: f64 },
    /// `dS = kappa (s_bar - S) dt + gamma sqrt(S) dW`
    Cir { kappa: f64, s_bar: f64, gamma: f64 },
}

/// Parameters of the scaled non-central chi-squared CIR transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirTransitionParams {
    pub xi: f64,
    pub delta: f64,
    pub c_bar: f64,
}

impl CirTransitionParams {
    pub fn ncx2(&self) -> Ncx2Params {
        Ncx2Params {
            df: self.delta,
            nc: self.xi,
        }
    }
}

/// Outcome of the Feller check `delta = 4 kappa s_bar / gamma^2 >= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FellerCheck {
    pub delta: f64,
    pub satisfied: bool,
}

/// How [`SdeModel::exact_sample_paired`] produces its `(S, Z)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingMode {
    /// Draw `Z ~ N(0,1)` and map it through the inverse transition CDF.
    #[default]
    InverseCdf,
    /// Draw `S` from the transition law directly and recover `Z` by inversion.
    DirectThenInvert,
}

/// A transition sample together with the standard normal draw it corresponds to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedSample {
    pub s_next: f64,
    pub z: f64,
    /// The recovered `z` hit [`Z_CLAMP`].
    pub clamped: bool,
}

impl SdeModel {
    pub fn gbm(mu: f64, sigma: f64) -> Result<Self> {
        let m = SdeModel::Gbm { mu, sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn cir(kappa: f64, s_bar: f64, gamma: f64) -> Result<Self> {
        let m = SdeModel::Cir { kappa, s_bar, gamma };
        m.validate()?;
        Ok(m)
    }

    /// GBM with `mu = 0.05`, `sigma = 0.2`.
    pub fn default_gbm() -> Self {
        SdeModel::Gbm {
            mu: 0.05,
            sigma: 0.2,
        }
    }

    /// CIR with `kappa = 0.1`, `s_bar = 0.1` and the given volatility
    /// (`0.1` satisfies the Feller condition, `0.3` violates it).
    pub fn default_cir(gamma: f64) -> Self {
        SdeModel::Cir {
            kappa: 0.1,
            s_bar: 0.1,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SdeModel::Gbm { mu, sigma } => {
                ensure_finite("mu", mu)?;
                ensure_positive("sigma", sigma)?;
            }
            SdeModel::Cir { kappa, s_bar, gamma } => {
                ensure_positive("kappa", kappa)?;
                ensure_positive("s_bar", s_bar)?;
                ensure_positive("gamma", gamma)?;
            }
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SdeModel::Gbm { .. } => "gbm",
            SdeModel::Cir { .. } => "cir",
        }
    }

    pub fn is_cir(&self) -> bool {
        matches!(self, SdeModel::Cir { .. })
    }

    /// Drift `A(S)`.
    pub fn drift(&self, s: f64) -> f64 {
        match *self {
            SdeModel::Gbm { mu, .. } => mu * s,
            SdeModel::Cir { kappa, s_bar, .. } => kappa * (s_bar - s),
        }
    }

    /// Diffusion `B(S)`; the CIR square root is taken of the positive part.
    pub fn diffusion(&self, s: f64) -> f64 {
        match *self {
            SdeModel::Gbm { sigma, .. } => sigma * s,
            SdeModel::Cir { gamma, .. } => gamma * s.max(0.0).sqrt(),
        }
    }

    pub fn cir_transition_params(&self, s_t: f64, dt: f64) -> Result<CirTransitionParams> {
        let SdeModel::Cir { kappa, s_bar, gamma } = *self else {
            return Err(self.wrong_model("cir_transition_params"));
        };
        self.validate()?;
        ensure_positive("s_t", s_t)?;
        ensure_positive("dt", dt)?;
        Ok(cir_params_unchecked(kappa, s_bar, gamma, s_t, dt))
    }

    pub fn feller_delta(&self) -> Result<FellerCheck> {
        let SdeModel::Cir { kappa, s_bar, gamma } = *self else {
            return Err(self.wrong_model("feller_delta"));
        };
        self.validate()?;
        let delta = 4.0 * kappa * s_bar / (gamma * gamma);
        Ok(FellerCheck {
            delta,
            satisfied: delta >= 2.0,
        })
    }

    /// `E[S_{t+dt} | S_t]`.
    pub fn conditional_mean(&self, s_t: f64, dt: f64) -> f64 {
        match *self {
            SdeModel::Gbm { mu, .. } => s_t * (mu * dt).exp(),
            SdeModel::Cir { kappa, s_bar, .. } => s_bar + (s_t - s_bar) * (-kappa * dt).exp(),
        }
    }

    /// `Var[S_{t+dt} | S_t]`.
    pub fn conditional_variance(&self, s_t: f64, dt: f64) -> f64 {
        match *self {
            SdeModel::Gbm { mu, sigma } => {
                s_t * s_t * (2.0 * mu * dt).exp() * ((sigma * sigma * dt).exp() - 1.0)
            }
            SdeModel::Cir { kappa, s_bar, gamma } => {
                let p = cir_params_unchecked(kappa, s_bar, gamma, s_t, dt);
                p.c_bar * p.c_bar * 2.0 * (p.delta + 2.0 * p.xi)
            }
        }
    }

    /// `F_{S_{t+dt} | S_t}(x)`.
    pub fn transition_cdf(&self, s_t: f64, dt: f64, x: f64) -> Result<f64> {
        self.check_state(s_t, dt)?;
        if x.is_nan() {
            return Err(Error::invalid("x", "must not be NaN"));
        }
        if x <= 0.0 {
            return Ok(0.0);
        }
        Ok(match *self {
            SdeModel::Gbm { .. } => phi(self.gbm_standardize(s_t, dt, x)),
            SdeModel::Cir { kappa, s_bar, gamma } => {
                let p = cir_params_unchecked(kappa, s_bar, gamma, s_t, dt);
                ncx2_eval(x / p.c_bar, p.ncx2()).cdf
            }
        })
    }

    /// Inverse of [`transition_cdf`](Self::transition_cdf).
    pub fn transition_quantile(&self, s_t: f64, dt: f64, prob: f64) -> Result<f64> {
        self.check_state(s_t, dt)?;
        ensure_probability("prob", prob)?;
        match *self {
            SdeModel::Gbm { sigma, .. } => {
                Ok(s_t * (self.gbm_log_drift(dt) + sigma * dt.sqrt() * phi_inv(prob)).exp())
            }
            SdeModel::Cir { kappa, s_bar, gamma } => {
                let p = cir_params_unchecked(kappa, s_bar, gamma, s_t, dt);
                Ok(p.c_bar * special::ncx2_quantile(prob, p.ncx2())?)
            }
        }
    }

    /// Maps a standard normal draw to the step it represents: `F^{-1}(Phi(z))`.
    pub fn step_from_z(&self, s_t: f64, dt: f64, z: f64) -> Result<f64> {
        self.check_state(s_t, dt)?;
        ensure_finite("z", z)?;
        self.step_from_z_unchecked(s_t, dt, z)
    }

    pub(crate) fn step_from_z_unchecked(&self, s_t: f64, dt: f64, z: f64) -> Result<f64> {
        match *self {
            SdeModel::Gbm { sigma, .. } => {
                Ok(s_t * (self.gbm_log_drift(dt) + sigma * dt.sqrt() * z).exp())
            }
            SdeModel::Cir { kappa, s_bar, gamma } => {
                let p = cir_params_unchecked(kappa, s_bar, gamma, s_t, dt);
                let z = z.clamp(-Z_INPUT_LIMIT, Z_INPUT_LIMIT);
                // Solve in whichever tail is small so extreme z keep full precision.
                let x = if z <= 0.0 {
                    ncx2_solve(phi(z), false, p.ncx2())?
                } else {
                    ncx2_solve(phi(-z), true, p.ncx2())?
                };
                Ok(p.c_bar * x)
            }
        }
    }

    /// Recovers the standard normal draw of a step: `Phi^{-1}(F(s_next))`,
    /// clamped to `[-Z_CLAMP, Z_CLAMP]`.
    pub fn z_from_step(&self, s_t: f64, dt: f64, s_next: f64) -> Result<f64> {
        Ok(self.z_from_step_flagged(s_t, dt, s_next)?.0)
    }

    /// As [`z_from_step`](Self::z_from_step), also reporting whether the clamp was hit.
    pub fn z_from_step_flagged(&self, s_t: f64, dt: f64, s_next: f64) -> Result<(f64, bool)> {
        self.check_state(s_t, dt)?;
        if !(s_next.is_finite() && s_next > 0.0) {
            return Err(Error::invalid(
                "s_next",
                format!("must lie in the positive support, got {s_next}"),
            ));
        }
        let z = match *self {
            SdeModel::Gbm { .. } => self.gbm_standardize(s_t, dt, s_next),
            SdeModel::Cir { kappa, s_bar, gamma } => {
                let p = cir_params_unchecked(kappa, s_bar, gamma, s_t, dt);
                let e = ncx2_eval(s_next / p.c_bar, p.ncx2());
                if e.cdf <= 0.5 {
                    if e.cdf > 0.0 {
                        phi_inv(e.cdf)
                    } else {
                        f64::NEG_INFINITY
                    }
                } else if e.sf > 0.0 {
                    -phi_inv(e.sf)
                } else {
                    f64::INFINITY
                }
            }
        };
        let clamped = z.abs() > Z_CLAMP;
        Ok((z.clamp(-Z_CLAMP, Z_CLAMP), clamped))
    }

    /// One exact transition draw. CIR uses the Poisson-mixture sampler.
    pub fn exact_sample<R: Rng + ?Sized>(&self, s_t: f64, dt: f64, rng: &mut R) -> Result<f64> {
        self.check_state(s_t, dt)?;
        Ok(match *self {
            SdeModel::Gbm { .. } => {
                let z: f64 = StandardNormal.sample(rng);
                self.step_from_z_unchecked(s_t, dt, z)?
            }
            SdeModel::Cir { kappa, s_bar, gamma } => {
                let p = cir_params_unchecked(kappa, s_bar, gamma, s_t, dt);
                p.c_bar * special::sample_ncx2_unchecked(p.ncx2(), rng)
            }
        })
    }

    /// One exact transition draw together with its standard normal draw.
    pub fn exact_sample_paired<R: Rng + ?Sized>(
        &self,
        s_t: f64,
        dt: f64,
        mode: PairingMode,
        rng: &mut R,
    ) -> Result<PairedSample> {
        self.check_state(s_t, dt)?;
        if mode == PairingMode::InverseCdf || !self.is_cir() {
            let z: f64 = StandardNormal.sample(rng);
            let s_next = self.step_from_z_unchecked(s_t, dt, z)?;
            return Ok(PairedSample {
                s_next,
                z,
                clamped: false,
            });
        }
        let s_next = self.exact_sample(s_t, dt, rng)?;
        let (z, clamped) = self.z_from_step_flagged(s_t, dt, s_next)?;
        Ok(PairedSample { s_next, z, clamped })
    }

    fn check_state(&self, s_t: f64, dt: f64) -> Result<()> {
        self.validate()?;
        ensure_positive("s_t", s_t)?;
        ensure_positive("dt", dt)?;
        Ok(())
    }

    fn gbm_log_drift(&self, dt: f64) -> f64 {
        match *self {
            SdeModel::Gbm { mu, sigma } => (mu - 0.5 * sigma * sigma) * dt,
            SdeModel::Cir { .. } => unreachable!("GBM only"),
        }
    }

    fn gbm_standardize(&self, s_t: f64, dt: f64, x: f64) -> f64 {
        match *self {
            SdeModel::Gbm { sigma, .. } => {
                ((x / s_t).ln() - self.gbm_log_drift(dt)) / (sigma * dt.sqrt())
            }
            SdeModel::Cir { .. } => unreachable!("GBM only"),
        }
    }

    fn wrong_model(&self, operation: &'static str) -> Error {
        Error::WrongModel {
            operation,
            found: self.kind_name(),
        }
    }
}

fn cir_params_unchecked(kappa: f64, s_bar: f64, gamma: f64, s_t: f64, dt: f64) -> CirTransitionParams {
    let decay = (-kappa * dt).exp();
    // 1 - e^{-kappa dt} without cancellation for small steps
    let one_minus = -(-kappa * dt).exp_m1();
    let g2 = gamma * gamma;
    CirTransitionParams {
        xi: 4.0 * kappa * s_t * decay / (g2 * one_minus),
        delta: 4.0 * kappa * s_bar / g2,
        c_bar: g2 * one_minus / (4.0 * kappa),
    }
}
