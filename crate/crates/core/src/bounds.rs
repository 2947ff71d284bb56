//! Finite-horizon exit-probability bounds for a barrier satisfying the
//! expectation condition `E[h(x_{k+1}) | x_k] ≥ α h(x_k) + δ` with `h ≤ M`.
//!
//! The same formulas serve state feedback (`M`, `h(x_0)`, `δ`, `σ = 0`) and
//! output feedback (`M − h_γ`, `ĥ(x̂_0)`, `δ′`, `σ`).

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInput {
    pub m_eff: f64,
    pub h0_eff: f64,
    pub alpha: f64,
    pub delta: f64,
    pub horizon: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    DeltaNegative,
    DeltaNonnegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundResult {
    pub p_exit_raw: f64,
    pub p_exit: f64,
    pub p_safe_lower: f64,
    pub branch: Branch,
    /// The certificate carries no information (start outside the shifted
    /// safe set, or the raw exit bound reaches 1).
    pub vacuous: bool,
}

impl BoundInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_eff > 0.0) {
            return Err(Error::Config(format!(
                "effective upper bound must be positive, got {}",
                self.m_eff
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let ceiling = self.m_eff * (1.0 - self.alpha);
        if self.delta > ceiling * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::Config(format!(
                "delta = {} exceeds the admissible ceiling M(1 − α) = {ceiling}",
                self.delta
            )));
        }
        if self.h0_eff > self.m_eff * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "initial barrier value {} exceeds the upper bound {}",
                self.h0_eff, self.m_eff
            )));
        }
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(Error::Config(format!("sigma must lie in [0, 1), got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Raw exit bound of the selected branch, without clipping.
fn raw_exit(input: &BoundInput) -> f64 {
    let BoundInput {
        m_eff: m,
        h0_eff: h0,
        alpha,
        delta,
        horizon,
        ..
    } = *input;
    let k = horizon as i32;
    if delta < 0.0 {
        // Σ_{i=1..K} α^{i−1}
        let geometric: f64 = (0..horizon).map(|i| alpha.powi(i as i32)).sum();
        (m - h0) / m * alpha.powi(k) + (m * (1.0 - alpha) - delta) / m * geometric
    } else {
        1.0 - h0 / m * ((m * alpha + delta) / m).powi(k)
    }
}

pub fn exit_bound(input: &BoundInput) -> Result<BoundResult> {
    input.validate()?;
    let branch = if input.delta < 0.0 {
        Branch::DeltaNegative
    } else {
        Branch::DeltaNonnegative
    };
    if input.h0_eff < 0.0 {
        return Ok(BoundResult {
            p_exit_raw: raw_exit(input),
            p_exit: 1.0,
            p_safe_lower: 0.0,
            branch,
            vacuous: true,
        });
    }
    let raw = raw_exit(input);
    let p_exit = raw.clamp(0.0, 1.0);
    Ok(BoundResult {
        p_exit_raw: raw,
        p_exit,
        p_safe_lower: (1.0 - p_exit - input.sigma).clamp(0.0, 1.0),
        branch,
        vacuous: raw >= 1.0,
    })
}

/// `clip(1 − P_e − σ, 0, 1)`.
pub fn safety_lower_bound(input: &BoundInput) -> Result<f64> {
    exit_bound(input).map(|r| r.p_safe_lower)
}
