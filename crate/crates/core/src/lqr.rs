//! Nominal controllers: fixed linear feedback, optionally synthesized by
//! discrete-time LQR.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_pd, check_psd, check_shape, check_square, symmetrize};
use crate::system::LinearSystem;

pub const DLQR_TOL: f64 = 1e-10;
pub const DLQR_MAX_ITER: usize = 10_000;

fn riccati_map(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let bt_p = b.transpose() * p;
    let gain = (r + &bt_p * b).cholesky()?.solve(&(&bt_p * a));
    let next = q + a.transpose() * p * a - a.transpose() * p * b * &gain;
    Some((symmetrize(&next), gain))
}

/// Infinite-horizon discrete LQR gain by fixed-point iteration of the
/// Riccati map, starting from `P = Q`.
pub fn solve_dlqr(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    check_square("LQR A", a, n)?;
    let m = b.ncols();
    check_shape("LQR B", b, n, m)?;
    check_square("LQR Q", q, n)?;
    check_square("LQR R", r, m)?;
    check_psd("LQR Q", q)?;
    check_pd("LQR R", r)?;

    let mut p = symmetrize(q);
    let mut residual = f64::INFINITY;
    for iter in 1..=DLQR_MAX_ITER {
        let (next, _) = riccati_map(&p, a, b, q, r).ok_or(Error::Synthesis {
            reason: "R + BᵀPB lost definiteness",
            residual,
            iterations: iter,
        })?;
        residual = (&next - &p).abs().max();
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual < DLQR_TOL {
            let (_, gain) = riccati_map(&p, a, b, q, r).expect("factorization succeeded on the previous iterate");
            let rho = spectral_radius(&(a - b * &gain));
            if rho >= 1.0 {
                return Err(Error::Synthesis {
                    reason: "closed loop is not stable",
                    residual,
                    iterations: iter,
                });
            }
            return Ok(gain);
        }
    }
    Err(Error::Synthesis {
        reason: "Riccati iteration did not converge",
        residual,
        iterations: DLQR_MAX_ITER,
    })
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub enum NominalController {
    /// `u = −K (x − target) + offset`.
    StaticGain {
        gain: DMatrix<f64>,
        target: DVector<f64>,
        offset: DVector<f64>,
    },
    /// Resolved into a `StaticGain` with zero offset before use.
    Lqr {
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        target: DVector<f64>,
    },
}

impl NominalController {
    pub fn static_gain(gain: DMatrix<f64>, target: DVector<f64>) -> Self {
        let m = gain.nrows();
        NominalController::StaticGain {
            gain,
            target,
            offset: DVector::zeros(m),
        }
    }

    /// Synthesizes the LQR gain (on the step-0 matrices) when needed and
    /// checks dimensions against the plant.
    pub fn resolve(&self, sys: &LinearSystem) -> Result<ResolvedController> {
        let (n, m) = (sys.state_dim(), sys.input_dim());
        let (gain, target, offset) = match self {
            NominalController::StaticGain { gain, target, offset } => (gain.clone(), target.clone(), offset.clone()),
            NominalController::Lqr { q, r, target } => {
                let gain = solve_dlqr(sys.a(0)?, sys.b(0)?, q, r)?;
                (gain, target.clone(), DVector::zeros(m))
            }
        };
        check_shape("nominal gain", &gain, m, n)?;
        check_len("nominal target", &target, n)?;
        check_len("nominal offset", &offset, m)?;
        Ok(ResolvedController { gain, target, offset })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedController {
    pub gain: DMatrix<f64>,
    pub target: DVector<f64>,
    pub offset: DVector<f64>,
}

impl ResolvedController {
    pub fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        -(&self.gain * (x - &self.target)) + &self.offset
    }
}
