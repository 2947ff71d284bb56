//! Independent oracles shared by the acceptance harness and the oracle tests.
#![allow(dead_code)]

use kalman_cbf::barrier::{Barrier, ShiftedBarrier};
use kalman_cbf::bounds::BoundInput;
use kalman_cbf::filter::{solve_safe_input, CjSpec, FeedbackMode, SafetyParams, FEASIBILITY_TOL};
use kalman_cbf::rng::seeded;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // plain Box–Muller, kept separate from the library's sampler
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// Random SPD matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = normal_matrix(rng, n, n).qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(lo..hi)));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Random PSD matrix, rank possibly deficient.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let rank = rng.random_range(1..=n);
    let g = normal_matrix(rng, n, rank) * rng.random_range(0.05..2.0);
    &g * g.transpose()
}

pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// `E[h(x)]` by symmetric sigma points `μ ± √n Lᵢ`, weights `1/2n`: exact for
/// polynomials of degree ≤ 3 under a Gaussian law.
pub fn sigma_point_expectation(h: impl Fn(&DVector<f64>) -> f64, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = mean.len();
    let l = sym_sqrt(cov) * (n as f64).sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let col = l.column(i).into_owned();
        total += h(&(mean + &col)) + h(&(mean - &col));
    }
    total / (2 * n) as f64
}

#[derive(Debug, Default)]
pub struct JensenReport {
    pub cases: usize,
    pub max_identity_error: f64,
    pub bound_violations: usize,
}

/// Random concave quadratics in 1..=4 dimensions under random Gaussian laws.
pub fn jensen_suite(cases: usize, seed: u64) -> JensenReport {
    let mut rng = seeded(seed);
    let mut report = JensenReport {
        cases,
        ..Default::default()
    };
    for _ in 0..cases {
        let n = rng.random_range(1..=4);
        let w = random_psd(&mut rng, n);
        let c0 = rng.random_range(0.1..5.0);
        let center = normal_vector(&mut rng, n);
        let bar = Barrier::concave_quadratic(c0, w.clone(), center).unwrap();
        let mean = normal_vector(&mut rng, n) * 2.0;
        let cov = random_psd(&mut rng, n);
        let closed = bar.gaussian_expectation(&mean, &cov).unwrap().unwrap();
        let identity = bar.eval(&mean) - (&w * &cov).trace();
        let oracle = sigma_point_expectation(|x| bar.eval(x), &mean, &cov);
        let scale = 1.0f64.max(bar.eval(&mean).abs()).max((&w * &cov).trace());
        let err = (closed - identity).abs().max((closed - oracle).abs()) / scale;
        report.max_identity_error = report.max_identity_error.max(err);
        if closed < bar.jensen_lower_bound(&mean, &cov).unwrap() - 1e-12 * scale {
            report.bound_violations += 1;
        }
    }
    report
}

#[derive(Debug, Default)]
pub struct QcqpReport {
    pub instances: usize,
    pub solver_infeasible: usize,
    /// Feasible results whose constraint slack is below `−1e−8`.
    pub violations: usize,
    /// Largest `‖u* − u_grid‖ / cell diameter`.
    pub max_distance_in_cells: f64,
    /// Instances where some feasible grid point beats `u*` by more than one cell diameter.
    pub grid_better: usize,
    /// Largest `‖u* − u_exact‖ / max(1, ‖u_exact‖)` against the boundary-parametrization oracle.
    pub max_exact_error: f64,
    /// Largest `|‖u* − u_nom‖ − ‖u_grid − u_nom‖| / cell diameter`.
    pub max_objective_gap_in_cells: f64,
    /// Largest `(‖u* − u_nom‖ − ‖u_grid − u_nom‖) / ‖u_grid − u_nom‖`: positive
    /// only if a feasible grid point is strictly better than `u*`.
    pub max_grid_advantage: f64,
}

const GRID: usize = 400;

/// Brute-force minimization of `‖u − u_nom‖²` over a 400×400 grid, keeping
/// points with `constraint(u) ≥ 0`. Returns the best point and the cell diameter.
pub fn grid_minimizer(
    constraint: impl Fn(&DVector<f64>) -> f64,
    u_nom: &DVector<f64>,
    lo: [f64; 2],
    hi: [f64; 2],
) -> (Option<DVector<f64>>, f64) {
    let dx = (hi[0] - lo[0]) / (GRID - 1) as f64;
    let dy = (hi[1] - lo[1]) / (GRID - 1) as f64;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for i in 0..GRID {
        for j in 0..GRID {
            let u = DVector::from_vec(vec![lo[0] + i as f64 * dx, lo[1] + j as f64 * dy]);
            if constraint(&u) < 0.0 {
                continue;
            }
            let cost = (&u - u_nom).norm_squared();
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, u));
            }
        }
    }
    (best.map(|(_, u)| u), (dx * dx + dy * dy).sqrt())
}

struct Instance {
    barrier: Barrier,
    params: SafetyParams,
    cj: f64,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    x: DVector<f64>,
    u_nom: DVector<f64>,
    lo: [f64; 2],
    hi: [f64; 2],
    exact: DVector<f64>,
}

fn params(alpha: f64) -> SafetyParams {
    SafetyParams::new(alpha, CjSpec::Absolute(0.0), 0.05, FeedbackMode::StateFeedback).unwrap()
}

/// Two-input ellipsoid instance with a nonempty feasible set. The grid box is
/// the bounding box of the feasible ellipsoid in input space.
fn ellipsoid_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = 2;
    let w = random_spd(rng, n, 0.2, 3.0);
    let c0 = rng.random_range(0.5..2.0);
    let center = normal_vector(rng, n);
    let barrier = Barrier::concave_quadratic(c0, w.clone(), center.clone()).unwrap();
    let alpha = rng.random_range(0.05..0.95);
    let a = normal_matrix(rng, n, n) * 0.7;
    let b = loop {
        let b = normal_matrix(rng, n, 2);
        if b.clone().svd(false, false).singular_values.min() > 0.3 {
            break b;
        }
    };
    // state inside the safe set, c_J keeps `required < c0`
    let x = loop {
        let x = &center + normal_vector(rng, n);
        if barrier.eval(&x) >= 0.0 {
            break x;
        }
    };
    let cj = rng.random_range(0.0..0.9) * (1.0 - alpha) * c0;
    let required = alpha * barrier.eval(&x) + cj;
    let radius = c0 - required;
    // feasible inputs: u = u_c + B⁻¹ z, zᵀWz ≤ radius
    let b_inv = b.clone().try_inverse().unwrap();
    let u_c = -&b_inv * (&a * &x - &center);
    let g_inv = (b.transpose() * &w * &b).try_inverse().unwrap();
    let half = [(radius * g_inv[(0, 0)]).sqrt(), (radius * g_inv[(1, 1)]).sqrt()];
    let lo = [u_c[0] - half[0] * 1.001, u_c[1] - half[1] * 1.001];
    let hi = [u_c[0] + half[0] * 1.001, u_c[1] + half[1] * 1.001];
    let spread = rng.random_range(0.3..3.0);
    let u_nom = DVector::from_vec(vec![
        u_c[0] + half[0] * spread * normal(rng),
        u_c[1] + half[1] * spread * normal(rng),
    ]);
    let map = &b_inv * sym_sqrt(&w).try_inverse().unwrap() * radius.sqrt();
    let exact = closest_on_ellipse(&u_c, &map, &u_nom);
    Instance {
        barrier,
        params: params(alpha),
        cj,
        a,
        b,
        x,
        u_nom,
        lo,
        hi,
        exact,
    }
}

/// Point of the filled ellipse `{c + L (cos θ, sin θ) r : r ≤ 1}` closest to
/// `p`, by dense search over θ refined with golden sections.
pub fn closest_on_ellipse(center: &DVector<f64>, map: &DMatrix<f64>, p: &DVector<f64>) -> DVector<f64> {
    let inside = map.clone().try_inverse().unwrap() * (p - center);
    if inside.norm() <= 1.0 {
        return p.clone();
    }
    let at = |t: f64| center + map * DVector::from_vec(vec![t.cos(), t.sin()]);
    let cost = |t: f64| (at(t) - p).norm_squared();
    let samples = 20_000;
    let step = std::f64::consts::TAU / samples as f64;
    let best = (0..samples)
        .map(|i| i as f64 * step)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .unwrap();
    let (mut lo, mut hi) = (best - step, best + step);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if cost(m1) < cost(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    at(0.5 * (lo + hi))
}

/// Two-input half-space instance; the grid box is centered on `u_nom` and
/// reaches twice its distance to the constraint boundary.
fn half_space_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = 2;
    let normal_vec = normal_vector(rng, n);
    let offset = rng.random_range(0.0..2.0);
    let barrier = Barrier::half_space(normal_vec.clone(), offset).unwrap();
    let alpha = rng.random_range(0.05..0.95);
    let a = normal_matrix(rng, n, n);
    let b = normal_matrix(rng, n, 2);
    let x = normal_vector(rng, n);
    let cj = rng.random_range(0.0..2.0);
    let u_nom = normal_vector(rng, 2) * 3.0;
    let g = b.transpose() * &normal_vec;
    let rhs = alpha * barrier.eval(&x) + cj - offset - normal_vec.dot(&(&a * &x));
    let dist = ((rhs - g.dot(&u_nom)) / g.norm()).abs().max(0.1);
    let lo = [u_nom[0] - 2.0 * dist, u_nom[1] - 2.0 * dist];
    let hi = [u_nom[0] + 2.0 * dist, u_nom[1] + 2.0 * dist];
    let exact = &u_nom + &g * ((rhs - g.dot(&u_nom)).max(0.0) / g.norm_squared());
    Instance {
        barrier,
        params: params(alpha),
        cj,
        a,
        b,
        x,
        u_nom,
        lo,
        hi,
        exact,
    }
}

pub fn qcqp_suite(instances: usize, seed: u64, half_space: bool) -> QcqpReport {
    let mut rng = seeded(seed);
    let mut report = QcqpReport {
        instances,
        max_grid_advantage: f64::NEG_INFINITY,
        ..Default::default()
    };
    for _ in 0..instances {
        let inst = if half_space {
            half_space_instance(&mut rng)
        } else {
            ellipsoid_instance(&mut rng)
        };
        let sb = ShiftedBarrier::unshifted(inst.barrier.clone());
        let res = solve_safe_input(&sb, &inst.params, inst.cj, &inst.a, &inst.b, &inst.x, &inst.u_nom).unwrap();
        if !res.feasible {
            report.solver_infeasible += 1;
            continue;
        }
        let required = inst.params.alpha * inst.barrier.eval(&inst.x) + inst.cj;
        let drift = &inst.a * &inst.x;
        let constraint = |u: &DVector<f64>| inst.barrier.eval(&(&drift + &inst.b * u)) - required;
        if constraint(&res.u_star) < -FEASIBILITY_TOL {
            report.violations += 1;
        }
        let exact_err = (&res.u_star - &inst.exact).norm() / inst.exact.norm().max(1.0);
        report.max_exact_error = report.max_exact_error.max(exact_err);
        let (best, diameter) = grid_minimizer(constraint, &inst.u_nom, inst.lo, inst.hi);
        let Some(best) = best else {
            continue;
        };
        let dist = (&res.u_star - &best).norm() / diameter;
        report.max_distance_in_cells = report.max_distance_in_cells.max(dist);
        let (solver_cost, grid_cost) = ((&res.u_star - &inst.u_nom).norm(), (&best - &inst.u_nom).norm());
        if grid_cost < solver_cost - diameter {
            report.grid_better += 1;
        }
        report.max_objective_gap_in_cells = report
            .max_objective_gap_in_cells
            .max((solver_cost - grid_cost).abs() / diameter);
        if grid_cost > 0.0 {
            report.max_grid_advantage = report.max_grid_advantage.max((solver_cost - grid_cost) / grid_cost);
        }
    }
    report
}

/// Exit bound evaluated by explicit loops, without `powi`.
pub fn hand_exit_bound(input: &BoundInput) -> f64 {
    let BoundInput {
        m_eff: m,
        h0_eff: h0,
        alpha,
        delta,
        horizon,
        ..
    } = *input;
    if delta < 0.0 {
        let mut alpha_k = 1.0;
        let mut series = 0.0;
        for _ in 0..horizon {
            series += alpha_k;
            alpha_k *= alpha;
        }
        (m - h0) / m * alpha_k + (m * (1.0 - alpha) - delta) / m * series
    } else {
        let ratio = (m * alpha + delta) / m;
        let mut r_k = 1.0;
        for _ in 0..horizon {
            r_k *= ratio;
        }
        1.0 - h0 / m * r_k
    }
}

pub fn bound_input(m: f64, h0: f64, alpha: f64, delta: f64, horizon: usize, sigma: f64) -> BoundInput {
    BoundInput {
        m_eff: m,
        h0_eff: h0,
        alpha,
        delta,
        horizon,
        sigma,
    }
}

/// Fixed inputs with their hand-evaluated raw exit bounds.
pub fn fixed_bound_cases() -> Vec<(BoundInput, f64)> {
    let geometric = |alpha: f64, k: i32| (1..=k).map(|i| alpha.powi(i - 1)).sum::<f64>();
    vec![
        // δ = 0, h0 = M: 1 − α^K
        (bound_input(1.0, 1.0, 0.9, 0.0, 10, 0.0), 1.0 - 0.3486784401),
        (bound_input(3.0, 3.0, 0.5, 0.0, 4, 0.0), 1.0 - 0.0625),
        // δ = 0, K = 0: 1 − h0/M
        (bound_input(2.0, 0.5, 0.9, 0.0, 0, 0.0), 0.75),
        (bound_input(10.0, 3.8, 0.7, 0.0, 0, 0.1), 0.62),
        // δ ≥ 0 branch
        (bound_input(1.0, 0.5, 0.5, 0.25, 2, 0.0), 1.0 - 0.5 * 0.75 * 0.75),
        (bound_input(0.8, 0.8, 0.52, 0.384, 100, 0.1), 0.0),
        (bound_input(2.0, 1.0, 0.8, 0.2, 3, 0.0), 1.0 - 0.5 * 0.9f64.powi(3)),
        (
            bound_input(1.0, 0.25, 0.99, 0.005, 50, 0.0),
            1.0 - 0.25 * 0.995f64.powi(50),
        ),
        // δ < 0 branch
        (
            bound_input(1.0, 0.5, 0.9, -0.05, 10, 0.0),
            0.5 * 0.3486784401 + 0.15 * geometric(0.9, 10),
        ),
        (
            bound_input(1.0, 0.9, 0.95, -0.001, 20, 0.0),
            0.1 * 0.95f64.powi(20) + 0.051 * geometric(0.95, 20),
        ),
        (bound_input(2.0, 2.0, 0.5, -0.1, 1, 0.0), 0.0 + 1.1 / 2.0),
        (bound_input(4.0, 1.0, 0.3, -1.0, 0, 0.0), 0.75),
    ]
}

#[derive(Debug, Default)]
pub struct BoundReport {
    pub fixed_cases: usize,
    pub max_fixed_error: f64,
    pub random_inputs: usize,
    pub monotonicity_failures: usize,
}

pub fn bound_suite(random_inputs: usize, seed: u64) -> BoundReport {
    use kalman_cbf::bounds::exit_bound;
    let cases = fixed_bound_cases();
    let mut report = BoundReport {
        fixed_cases: cases.len(),
        random_inputs,
        ..Default::default()
    };
    for (input, expected) in &cases {
        let got = exit_bound(input).unwrap().p_exit_raw;
        let hand = hand_exit_bound(input);
        report.max_fixed_error = report
            .max_fixed_error
            .max((got - expected).abs())
            .max((got - hand).abs());
    }
    let mut rng = seeded(seed);
    for i in 0..random_inputs {
        let m = rng.random_range(0.1..10.0);
        let h0 = rng.random_range(0.0..1.0) * m;
        let alpha = rng.random_range(0.01..0.99);
        // alternate the branches
        let frac = if i % 2 == 0 {
            rng.random_range(0.0..1.0)
        } else {
            -rng.random_range(0.0..1.0)
        };
        let delta = frac * m * (1.0 - alpha);
        let mut prev = f64::NEG_INFINITY;
        let mut ok = true;
        for k in 0..=200 {
            let r = exit_bound(&bound_input(m, h0, alpha, delta, k, 0.0)).unwrap();
            ok &= r.p_exit_raw >= prev - 1e-12;
            ok &= (r.p_exit_raw - hand_exit_bound(&bound_input(m, h0, alpha, delta, k, 0.0))).abs() < 1e-12;
            prev = r.p_exit_raw;
        }
        if !ok {
            report.monotonicity_failures += 1;
        }
    }
    report
}
