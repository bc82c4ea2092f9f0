//! Reference implementations used to check the library. None of them call
//! into `deepc_core` numerics.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Block Hankel matrix built entry by entry: row block `i`, column `j` holds
/// sample `i + j`.
pub fn hankel_double_loop(signal: &DMatrix<f64>, depth: usize) -> DMatrix<f64> {
    let d = signal.nrows();
    let cols = signal.ncols() + 1 - depth;
    let mut h = DMatrix::zeros(d * depth, cols);
    for i in 0..depth {
        for j in 0..cols {
            for k in 0..d {
                h[(i * d + k, j)] = signal[(k, i + j)];
            }
        }
    }
    h
}

/// `x(t) = Aᵗx₀ + Σ_{k<t} A^{t−1−k} B u(k)` and `y(t) = C x(t) + D u(t)`,
/// evaluated from matrix powers rather than by stepping.
pub fn closed_form_outputs(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    x0: &DVector<f64>,
    inputs: &DMatrix<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = a.nrows();
    let steps = inputs.ncols();
    let mut powers = vec![DMatrix::identity(n, n)];
    for k in 1..=steps {
        powers.push(&powers[k - 1] * a);
    }
    let state_at = |t: usize| {
        let mut x = &powers[t] * x0;
        for k in 0..t {
            x += &powers[t - 1 - k] * b * inputs.column(k);
        }
        x
    };
    let mut y = DMatrix::zeros(c.nrows(), steps);
    for t in 0..steps {
        let yt = c * state_at(t) + d * inputs.column(t);
        y.set_column(t, &yt);
    }
    (y, state_at(steps))
}

/// First input of the model-based horizon MPC
/// `min Σ_k ‖y_k − r_k‖²_Q + ‖u_k‖²_R` s.t. `lo ≤ u_k ≤ hi`,
/// with `y_k = C x_k` predicted from the true model and state.
///
/// The box QP is solved by a projected Newton iteration; the returned point is
/// checked against the KKT conditions before use.
#[allow(clippy::too_many_arguments)]
pub fn mpc_inputs(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    x0: &DVector<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    reference: &DMatrix<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> DMatrix<f64> {
    let (n, m, p) = (a.nrows(), b.ncols(), c.nrows());
    let horizon = reference.ncols();
    // y = O x0 + Γ U
    let mut obs = DMatrix::zeros(p * horizon, n);
    let mut gamma = DMatrix::zeros(p * horizon, m * horizon);
    let mut ak = DMatrix::identity(n, n);
    let mut markov = vec![];
    for k in 0..horizon {
        obs.view_mut((k * p, 0), (p, n)).copy_from(&(c * &ak));
        markov.push(c * &ak * b);
        ak = &ak * a;
    }
    for k in 0..horizon {
        for j in 0..k {
            gamma
                .view_mut((k * p, j * m), (p, m))
                .copy_from(&markov[k - 1 - j]);
        }
    }
    let mut qbar = DMatrix::zeros(p * horizon, p * horizon);
    let mut rbar = DMatrix::zeros(m * horizon, m * horizon);
    for k in 0..horizon {
        qbar.view_mut((k * p, k * p), (p, p)).copy_from(q);
        rbar.view_mut((k * m, k * m), (m, m)).copy_from(r);
    }
    let rvec = DVector::from_column_slice(reference.as_slice());
    let h = (gamma.transpose() * &qbar * &gamma + &rbar) * 2.0;
    let f = gamma.transpose() * &qbar * (&obs * x0 - &rvec) * 2.0;
    let lo = DVector::from_fn(m * horizon, |i, _| lo[i % m]);
    let hi = DVector::from_fn(m * horizon, |i, _| hi[i % m]);
    let u = box_qp(&h, &f, &lo, &hi);
    DMatrix::from_column_slice(m, horizon, u.as_slice())
}

/// `min ½uᵀHu + fᵀu` over a box with strictly convex `H`.
pub fn box_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> DVector<f64> {
    let n = f.len();
    let clamp = |u: &DVector<f64>| DVector::from_fn(n, |i, _| u[i].clamp(lo[i], hi[i]));
    let objective = |u: &DVector<f64>| 0.5 * u.dot(&(h * u)) + f.dot(u);
    let mut u = clamp(&-h.clone().lu().solve(f).expect("H invertible"));
    for _ in 0..500 {
        let grad = h * &u + f;
        let fixed: Vec<bool> = (0..n)
            .map(|i| (u[i] <= lo[i] && grad[i] > 0.0) || (u[i] >= hi[i] && grad[i] < 0.0))
            .collect();
        let free: Vec<usize> = (0..n).filter(|i| !fixed[*i]).collect();
        let mut dir = DVector::zeros(n);
        if !free.is_empty() {
            let hff = h.select_rows(&free).select_columns(&free);
            let gf = DVector::from_fn(free.len(), |i, _| grad[free[i]]);
            let step = hff.lu().solve(&-gf).expect("principal block invertible");
            for (k, &i) in free.iter().enumerate() {
                dir[i] = step[k];
            }
        }
        // Projected Armijo search along the Newton direction.
        let f0 = objective(&u);
        let mut t = 1.0;
        let mut next = clamp(&(&u + &dir * t));
        while objective(&next) > f0 + 1e-4 * grad.dot(&(&next - &u)) && t > 1e-12 {
            t *= 0.5;
            next = clamp(&(&u + &dir * t));
        }
        let moved = (&next - &u).amax();
        u = next;
        if moved <= 1e-15 * (1.0 + u.amax()) {
            break;
        }
    }
    let grad = h * &u + f;
    let scale = 1.0 + f.amax() + (h * &u).amax();
    for i in 0..n {
        let ok = if u[i] <= lo[i] {
            grad[i] >= -1e-10 * scale
        } else if u[i] >= hi[i] {
            grad[i] <= 1e-10 * scale
        } else {
            grad[i].abs() <= 1e-10 * scale
        };
        assert!(
            ok,
            "box QP oracle failed KKT at {i}: u={} g={}",
            u[i], grad[i]
        );
    }
    u
}

/// Cable lengths from the curvature relations `κ_b = φ/L`,
/// `1/κ_b = 1/κ_c + d` and `l = (κ_b/κ_c)·L`.
pub fn kappa_form_lengths(
    phi: f64,
    gamma: f64,
    length: f64,
    offset: f64,
    angles: [f64; 3],
) -> [f64; 3] {
    angles.map(|theta| {
        let d = offset * (gamma - theta).cos();
        if phi == 0.0 {
            return length;
        }
        let kappa_b = phi / length;
        let kappa_c = 1.0 / (1.0 / kappa_b - d);
        kappa_b / kappa_c * length
    })
}
