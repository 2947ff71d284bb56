//! One-step Kalman predictor `x̂_{k+1} = A x̂_k + B u_k + K_k (y_k − C x̂_k)`
//! and the prediction-error covariance recursion that drives it.
//!
//! The gain and covariance sequence depend only on the system, so they are
//! precomputed once per horizon into a [`FilterSchedule`].

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_psd, check_square, clip_psd, sym_eigenvalues, symmetrize};
use crate::system::LinearSystem;

/// Innovation covariances with a reciprocal condition number below this are
/// treated as singular.
pub const MIN_INNOVATION_RCOND: f64 = 1e-12;

fn factor_innovation(p: &DMatrix<f64>, c: &DMatrix<f64>, r: &DMatrix<f64>, step: usize) -> Result<Cholesky<f64, Dyn>> {
    let s = symmetrize(&(c * p * c.transpose() + r));
    let ev = sym_eigenvalues(&s);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    let rcond = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(rcond.is_finite() && rcond >= MIN_INNOVATION_RCOND) {
        return Err(Error::SingularInnovation { step, rcond });
    }
    Cholesky::new(s).ok_or(Error::SingularInnovation { step, rcond })
}

fn gain_at(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    step: usize,
) -> Result<DMatrix<f64>> {
    let chol = factor_innovation(p, c, r, step)?;
    // Kᵀ = S⁻¹ (C P Aᵀ), S symmetric.
    Ok(chol.solve(&(c * p * a.transpose())).transpose())
}

fn riccati_at(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    step: usize,
) -> Result<DMatrix<f64>> {
    let gain = gain_at(p, a, c, r, step)?;
    let next = a * p * a.transpose() + q - &gain * (c * p * a.transpose());
    Ok(clip_psd(&next))
}

/// `A P Aᵀ + Q − A P Cᵀ (C P Cᵀ + R)⁻¹ C P Aᵀ`, symmetrized with negative
/// eigenvalues clipped to zero.
pub fn riccati_step(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    riccati_at(p, a, c, q, r, 0)
}

/// `A P Cᵀ (C P Cᵀ + R)⁻¹`.
pub fn kalman_gain(p: &DMatrix<f64>, a: &DMatrix<f64>, c: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    gain_at(p, a, c, r, 0)
}

/// Gains `K_0..K_{T-1}` and covariances `P_0..P_T` over a fixed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSchedule {
    covariances: Vec<DMatrix<f64>>,
    gains: Vec<DMatrix<f64>>,
}

impl FilterSchedule {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    pub fn covariance(&self, k: usize) -> &DMatrix<f64> {
        &self.covariances[k]
    }

    pub fn gain(&self, k: usize) -> &DMatrix<f64> {
        &self.gains[k]
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn gains(&self) -> &[DMatrix<f64>] {
        &self.gains
    }
}

pub fn build_filter_schedule(sys: &LinearSystem, p0: &DMatrix<f64>, horizon: usize) -> Result<FilterSchedule> {
    let n = sys.state_dim();
    check_square("P0", p0, n)?;
    check_psd("P0", p0)?;
    if let Some(len) = sys.schedule_len() {
        if len < horizon {
            return Err(Error::Config(format!(
                "system schedule covers {len} steps but the horizon is {horizon}"
            )));
        }
    }
    let mut covariances = Vec::with_capacity(horizon + 1);
    let mut gains = Vec::with_capacity(horizon);
    let mut p = symmetrize(p0);
    for k in 0..horizon {
        let (a, c, q, r) = (sys.a(k)?, sys.c(k)?, sys.q(k)?, sys.r(k)?);
        gains.push(gain_at(&p, a, c, r, k)?);
        let next = riccati_at(&p, a, c, q, r, k)?;
        covariances.push(std::mem::replace(&mut p, next));
    }
    covariances.push(p);
    Ok(FilterSchedule { covariances, gains })
}

/// Predictor-form update. `u` must have been computed from `xhat` before
/// `y` arrived.
pub fn predictor_update(
    xhat: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
    k: usize,
    sys: &LinearSystem,
    sched: &FilterSchedule,
) -> Result<DVector<f64>> {
    if k >= sched.horizon() {
        return Err(Error::Config(format!(
            "filter schedule covers {} steps, step {k} requested",
            sched.horizon()
        )));
    }
    check_len("estimate", xhat, sys.state_dim())?;
    check_len("input", u, sys.input_dim())?;
    check_len("measurement", y, sys.output_dim())?;
    let (a, b, c) = (sys.a(k)?, sys.b(k)?, sys.c(k)?);
    let innovation = y - c * xhat;
    Ok(a * xhat + b * u + sched.gain(k) * innovation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_asymmetry, min_sym_eigenvalue};
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_riccati_examples() {
        assert_eq!(
            riccati_step(&s(0.0), &s(1.0), &s(1.0), &s(0.0), &s(1.0)).unwrap()[(0, 0)],
            0.0
        );
        let p1 = riccati_step(&s(1.0), &s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((p1[(0, 0)] - 1.5).abs() < 1e-15);
        let blind = riccati_step(&s(1.0), &s(1.0), &s(0.0), &s(0.5), &s(1.0)).unwrap();
        assert!((blind[(0, 0)] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_gain_examples() {
        assert!((kalman_gain(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(kalman_gain(&s(0.0), &s(3.0), &s(2.0), &s(0.7)).unwrap()[(0, 0)], 0.0);
        assert_eq!(kalman_gain(&s(2.0), &s(3.0), &s(0.0), &s(0.7)).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let err = kalman_gain(&s(0.0), &s(1.0), &s(1.0), &s(0.0)).unwrap_err();
        assert!(matches!(err, Error::SingularInnovation { .. }));
    }

    #[test]
    fn predictor_examples() {
        let sys = LinearSystem::new(s(1.0), s(0.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let sched = build_filter_schedule(&sys, &s(1.0), 1).unwrap();
        assert!((sched.gain(0)[(0, 0)] - 0.5).abs() < 1e-15);
        let next = predictor_update(&dvector![0.0], &dvector![0.0], &dvector![2.0], 0, &sys, &sched).unwrap();
        assert!((next[0] - 1.0).abs() < 1e-15);

        // zero innovation reduces to open-loop propagation
        let sys2 = LinearSystem::new(s(0.9), s(2.0), s(1.0), s(0.1), s(1.0)).unwrap();
        let sched2 = build_filter_schedule(&sys2, &s(1.0), 3).unwrap();
        let xhat = dvector![1.3];
        let next = predictor_update(&xhat, &dvector![0.5], &dvector![1.3], 2, &sys2, &sched2).unwrap();
        assert!((next[0] - (0.9 * 1.3 + 1.0)).abs() < 1e-15);
        assert!(predictor_update(&xhat, &dvector![0.5], &dvector![1.3], 3, &sys2, &sched2).is_err());
    }

    #[test]
    fn schedule_chain() {
        let sys = LinearSystem::new(s(1.0), s(0.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let empty = build_filter_schedule(&sys, &s(1.0), 0).unwrap();
        assert_eq!(empty.covariances().len(), 1);
        assert_eq!(empty.horizon(), 0);
        let sched = build_filter_schedule(&sys, &s(1.0), 2).unwrap();
        // P1 = 1.5; P2 = 1.5 + 1 - 1.5^2/2.5 = 1.6
        assert!((sched.covariance(1)[(0, 0)] - 1.5).abs() < 1e-15);
        assert!((sched.covariance(2)[(0, 0)] - 1.6).abs() < 1e-14);
    }

    #[test]
    fn halfplane_first_covariance_step() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.05, 0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let q = DMatrix::from_row_slice(2, 2, &[7.66e-5, 3.06e-3, 3.06e-3, 1.23e-1]);
        let r = s(0.09);
        let sys = LinearSystem::new(
            a.clone(),
            DMatrix::from_row_slice(2, 1, &[0.0125, 0.05]),
            c,
            q.clone(),
            r,
        )
        .unwrap();
        let sched = build_filter_schedule(&sys, &q, 1).unwrap();
        // hand evaluation: S = q22 + 0.09, APCᵀ = (q12 + 0.05 q22, q22)
        let q11 = 7.66e-5;
        let q12 = 3.06e-3;
        let q22 = 1.23e-1;
        let s_inn = q22 + 0.09;
        let apc = [q12 + 0.05 * q22, q22];
        let apa = [q11 + 0.1 * q12 + 0.0025 * q22, q12 + 0.05 * q22, q22];
        let expected = [
            apa[0] + q11 - apc[0] * apc[0] / s_inn,
            apa[1] + q12 - apc[0] * apc[1] / s_inn,
            apa[2] + q22 - apc[1] * apc[1] / s_inn,
        ];
        let p1 = sched.covariance(1);
        assert!((p1[(0, 0)] - expected[0]).abs() < 1e-14);
        assert!((p1[(0, 1)] - expected[1]).abs() < 1e-14);
        assert!((p1[(1, 0)] - expected[1]).abs() < 1e-14);
        assert!((p1[(1, 1)] - expected[2]).abs() < 1e-14);
    }

    /// Exact Gaussian conditioning of `x_5` on `y_0..y_4` for a scalar plant.
    #[test]
    fn predictor_matches_batch_posterior_mean() {
        let (a, b, c, q, r, p0) = (0.93, 0.4, 1.7, 0.3, 0.5, 0.8);
        let xhat0 = 0.25;
        let us = [0.3, -1.0, 0.5, 0.0, 2.0];
        let ys = [0.1, 1.2, -0.7, 0.4, 0.9];
        let horizon = 5;

        // latent vector ξ = (x0 − xhat0, w0..w4, v0..v4); x_k = mean_k + Σ coeffs·ξ
        let dim = 1 + 2 * horizon;
        let mut x_mean = vec![xhat0];
        let mut x_coef = vec![{
            let mut v = vec![0.0; dim];
            v[0] = 1.0;
            v
        }];
        for k in 0..horizon {
            let mut coef: Vec<f64> = x_coef[k].iter().map(|z| a * z).collect();
            coef[1 + k] += 1.0;
            x_mean.push(a * x_mean[k] + b * us[k]);
            x_coef.push(coef);
        }
        let mut latent_var = vec![q; dim];
        latent_var[0] = p0;
        for v in latent_var.iter_mut().skip(1 + horizon) {
            *v = r;
        }
        let y_coef: Vec<Vec<f64>> = (0..horizon)
            .map(|k| {
                let mut coef: Vec<f64> = x_coef[k].iter().map(|z| c * z).collect();
                coef[1 + horizon + k] += 1.0;
                coef
            })
            .collect();
        let cov = |u: &[f64], v: &[f64]| -> f64 { (0..dim).map(|i| u[i] * v[i] * latent_var[i]).sum() };
        let syy = DMatrix::from_fn(horizon, horizon, |i, j| cov(&y_coef[i], &y_coef[j]));
        let sxy = DVector::from_fn(horizon, |i, _| cov(&x_coef[horizon], &y_coef[i]));
        let resid = DVector::from_fn(horizon, |i, _| ys[i] - c * x_mean[i]);
        let syy_inv = syy.try_inverse().unwrap();
        let posterior_mean = x_mean[horizon] + (sxy.transpose() * &syy_inv * &resid)[(0, 0)];
        let posterior_var = cov(&x_coef[horizon], &x_coef[horizon]) - (sxy.transpose() * &syy_inv * &sxy)[(0, 0)];

        let sys = LinearSystem::new(s(a), s(b), s(c), s(q), s(r)).unwrap();
        let sched = build_filter_schedule(&sys, &s(p0), horizon).unwrap();
        let mut xhat = dvector![xhat0];
        for k in 0..horizon {
            xhat = predictor_update(&xhat, &dvector![us[k]], &dvector![ys[k]], k, &sys, &sched).unwrap();
        }
        assert!(
            (xhat[0] - posterior_mean).abs() < 1e-8,
            "{} vs {}",
            xhat[0],
            posterior_mean
        );
        assert!((sched.covariance(horizon)[(0, 0)] - posterior_var).abs() < 1e-8);
    }

    fn random_psd(n: usize, vals: &[f64]) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |i, j| vals[i * n + j]);
        &g * g.transpose()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn riccati_preserves_symmetry_and_psd(
            n in 1usize..4,
            ny in 1usize..3,
            pv in prop::collection::vec(-2.0f64..2.0, 9),
            qv in prop::collection::vec(-1.0f64..1.0, 9),
            av in prop::collection::vec(-1.5f64..1.5, 9),
            cv in prop::collection::vec(-1.5f64..1.5, 6),
            rscale in 0.01f64..2.0,
        ) {
            let p = random_psd(n, &pv);
            let q = random_psd(n, &qv);
            let a = DMatrix::from_fn(n, n, |i, j| av[i * n + j]);
            let c = DMatrix::from_fn(ny, n, |i, j| cv[i * n + j]);
            let r = DMatrix::identity(ny, ny) * rscale;
            let next = riccati_step(&p, &a, &c, &q, &r).unwrap();
            prop_assert!(max_asymmetry(&next) < 1e-12);
            prop_assert!(min_sym_eigenvalue(&next) > -1e-9);

            let gain = kalman_gain(&p, &a, &c, &r).unwrap();
            let dense = &a * &p * c.transpose() * (&c * &p * c.transpose() + &r).try_inverse().unwrap();
            let scale = dense.abs().max().max(1.0);
            prop_assert!((gain - dense).abs().max() < 1e-10 * scale);
        }
    }

    #[test]
    fn rejects_bad_initial_covariance() {
        let sys = LinearSystem::new(s(1.0), s(0.0), s(1.0), s(1.0), s(1.0)).unwrap();
        assert!(build_filter_schedule(&sys, &s(-1.0), 2).is_err());
        assert!(build_filter_schedule(&sys, &DMatrix::identity(2, 2), 2).is_err());
    }
}
