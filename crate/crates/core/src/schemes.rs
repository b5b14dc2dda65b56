//! Discrete-time baselines. Every stepper takes its standard normal draw
//! explicitly so that paths can be compared against other samplers driven by
//! the same draws.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::sde::SdeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Euler,
    Milstein,
    TruncatedEuler,
    TruncatedMilstein,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Euler => "euler",
            SchemeKind::Milstein => "milstein",
            SchemeKind::TruncatedEuler => "truncated-euler",
            SchemeKind::TruncatedMilstein => "truncated-milstein",
        }
    }

    /// Euler and Milstein are offered for GBM, the truncated variants for CIR.
    pub fn supports(&self, model: &SdeModel) -> bool {
        match self {
            SchemeKind::Euler | SchemeKind::Milstein => !model.is_cir(),
            SchemeKind::TruncatedEuler | SchemeKind::TruncatedMilstein => model.is_cir(),
        }
    }

    /// The (Euler-type, Milstein-type) pair appropriate for a model.
    pub fn baselines_for(model: &SdeModel) -> [SchemeKind; 2] {
        if model.is_cir() {
            [SchemeKind::TruncatedEuler, SchemeKind::TruncatedMilstein]
        } else {
            [SchemeKind::Euler, SchemeKind::Milstein]
        }
    }

    pub fn step(&self, model: &SdeModel, s_t: f64, dt: f64, z: f64) -> Result<f64> {
        match self {
            SchemeKind::Euler => taylor_step(model, s_t, dt, z, false),
            SchemeKind::Milstein => taylor_step(model, s_t, dt, z, true),
            SchemeKind::TruncatedEuler => truncated_euler_step(model, s_t, dt, z),
            SchemeKind::TruncatedMilstein => truncated_milstein_step(model, s_t, dt, z),
        }
    }
}

/// Euler (`milstein = false`) or Milstein step for GBM:
/// `S + A dt + B sqrt(dt) z + zeta * B B' (dt z^2 - dt) / 2`.
pub fn taylor_step(model: &SdeModel, s_t: f64, dt: f64, z: f64, milstein: bool) -> Result<f64> {
    let SdeModel::Gbm { mu, sigma } = *model else {
        return Err(Error::WrongModel {
            operation: "taylor_step",
            found: model.kind_name(),
        });
    };
    ensure_positive("dt", dt)?;
    let a = mu * s_t;
    let b = sigma * s_t;
    let mut next = s_t + a * dt + b * dt.sqrt() * z;
    if milstein {
        next += 0.5 * b * sigma * (dt * z * z - dt);
    }
    Ok(next)
}

/// Truncated Euler for CIR. Negative states are allowed; the diffusion then vanishes.
pub fn truncated_euler_step(model: &SdeModel, s_t: f64, dt: f64, z: f64) -> Result<f64> {
    let SdeModel::Cir { kappa, s_bar, gamma } = *model else {
        return Err(Error::WrongModel {
            operation: "truncated_euler_step",
            found: model.kind_name(),
        });
    };
    ensure_positive("dt", dt)?;
    Ok(s_t + kappa * (s_bar - s_t) * dt + gamma * s_t.max(0.0).sqrt() * dt.sqrt() * z)
}

/// Truncated Milstein for CIR; the result is never negative.
pub fn truncated_milstein_step(model: &SdeModel, s_t: f64, dt: f64, z: f64) -> Result<f64> {
    let SdeModel::Cir { kappa, s_bar, gamma } = *model else {
        return Err(Error::WrongModel {
            operation: "truncated_milstein_step",
            found: model.kind_name(),
        });
    };
    ensure_positive("dt", dt)?;
    let half = 0.5 * gamma * dt.sqrt();
    let root = half.max(half.max(s_t).sqrt() + half * z);
    let next = root * root + (kappa * s_bar - 0.25 * gamma * gamma - kappa * s_t) * dt;
    Ok(next.max(0.0))
}
