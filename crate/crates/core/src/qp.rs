//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//!     minimize    ½ zᵀ P z + qᵀ z
//!     subject to  A_eq z  = b_eq
//!                 lower ≤ A_in z ≤ upper
//! ```
//!
//! with a dual active-set method in the style of Goldfarb and Idnani, carried
//! out in constraint space: `P` is factored once, and every active-set
//! operation works on `M = G P⁻¹ Gᵀ` where `G = [A_eq; A_in]`. Because the
//! factorization depends only on `P` and the constraint matrices,
//! [`PreparedQp`] can be reused across solves that only change `q`, `b_eq`
//! and the bounds, which is the situation inside a receding-horizon loop.
//!
//! Equality rows are always active and never dropped. A positive-semidefinite
//! `P` is handled with proximal-point outer iterations on `P + εI`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::linalg;

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Bound on the scaled stationarity/complementarity residual.
    pub tol_kkt: f64,
    /// Bound on constraint violation.
    pub tol_feas: f64,
    /// Cap on active-set changes (summed over proximal passes).
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-8,
            tol_feas: 1e-8,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIterations => "max_iterations",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub kkt_residual: f64,
    /// Largest equality residual or bound violation.
    pub primal_residual: f64,
    pub iterations: usize,
    /// Multipliers of the equality rows.
    pub eq_multipliers: DVector<f64>,
    /// Multipliers of the bound rows: positive at the upper bound, negative
    /// at the lower bound.
    pub bound_multipliers: DVector<f64>,
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    a_in: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem; `p` is symmetrized.
    pub fn new(mut p: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if !p.is_square() || p.nrows() != q.len() {
            return Err(invalid!(
                "P is {}x{} but q has length {}",
                p.nrows(),
                p.ncols(),
                q.len()
            ));
        }
        if p.iter().chain(q.iter()).any(|x| !x.is_finite()) {
            return Err(invalid!("P and q must be finite"));
        }
        linalg::symmetrize(&mut p);
        let n = q.len();
        Ok(Self {
            p,
            q,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        })
    }

    pub fn with_equalities(mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Result<Self> {
        check_rows(&a_eq, b_eq.len(), self.q.len(), "equality")?;
        if b_eq.iter().any(|x| !x.is_finite()) {
            return Err(invalid!("b_eq must be finite"));
        }
        self.a_eq = a_eq;
        self.b_eq = b_eq;
        Ok(self)
    }

    pub fn with_bounds(
        mut self,
        a_in: DMatrix<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        check_rows(&a_in, lower.len(), self.q.len(), "bound")?;
        check_bounds(&lower, &upper)?;
        self.a_in = a_in;
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.p * z)) + self.q.dot(z)
    }
}

fn check_rows(a: &DMatrix<f64>, rhs: usize, n: usize, what: &str) -> Result<()> {
    if a.ncols() != n || a.nrows() != rhs {
        return Err(invalid!(
            "{what} matrix is {}x{}, expected {rhs}x{n}",
            a.nrows(),
            a.ncols()
        ));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(invalid!("{what} matrix must be finite"));
    }
    Ok(())
}

fn check_bounds(lower: &DVector<f64>, upper: &DVector<f64>) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(invalid!(
            "lower has length {} but upper has {}",
            lower.len(),
            upper.len()
        ));
    }
    for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY
        {
            return Err(invalid!("bound row {i} has lower {lo} and upper {hi}"));
        }
    }
    Ok(())
}

/// One-shot solve.
pub fn solve(
    problem: &QpProblem,
    warm_start: Option<&DVector<f64>>,
    settings: QpSettings,
) -> Result<QpSolution> {
    let prepared = PreparedQp::new(
        problem.p.clone(),
        problem.a_eq.clone(),
        problem.a_in.clone(),
        settings,
    )?;
    prepared.solve(
        &problem.q,
        &problem.b_eq,
        &problem.lower,
        &problem.upper,
        warm_start,
    )
}

// Relative threshold below which a new constraint is treated as linearly
// dependent on the active set.
const DEPENDENCE_TOL: f64 = 1e-11;
// Relative smallest Cholesky pivot (squared) accepted before falling back to
// proximal iterations.
const PD_PIVOT_TOL: f64 = 1e-10;
const PROX_SCALE: f64 = 1e-8;
const MAX_PROX_PASSES: usize = 2_000;
const REFINE_STEPS: usize = 2;

/// Factorizations for a fixed `P`, `A_eq` and `A_in`.
#[derive(Debug, Clone)]
pub struct PreparedQp {
    p: DMatrix<f64>,
    g: DMatrix<f64>,
    n_eq: usize,
    chol: Cholesky<f64, Dyn>,
    prox: f64,
    x: DMatrix<f64>,
    m: DMatrix<f64>,
    eq_basis: Vec<usize>,
    eq_factor: DMatrix<f64>,
    settings: QpSettings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Active {
    row: usize,
    sign: f64,
    target: f64,
    equality: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PassOutcome {
    Converged,
    MaxIterations,
    Infeasible,
}

struct Pass {
    outcome: PassOutcome,
    z: DVector<f64>,
    multipliers: DVector<f64>,
    active: Vec<(usize, f64)>,
    iterations: usize,
}

impl PreparedQp {
    pub fn new(
        mut p: DMatrix<f64>,
        a_eq: DMatrix<f64>,
        a_in: DMatrix<f64>,
        settings: QpSettings,
    ) -> Result<Self> {
        let n = p.nrows();
        if !p.is_square() {
            return Err(invalid!(
                "P must be square, got {}x{}",
                p.nrows(),
                p.ncols()
            ));
        }
        if a_eq.ncols() != n || a_in.ncols() != n {
            return Err(invalid!(
                "constraint matrices have {} and {} columns, expected {n}",
                a_eq.ncols(),
                a_in.ncols()
            ));
        }
        linalg::symmetrize(&mut p);
        let n_eq = a_eq.nrows();
        let g = linalg::vstack(&[&a_eq, &a_in]);

        let scale = p.diagonal().amax().max(f64::MIN_POSITIVE);
        let strict = Cholesky::new(p.clone()).filter(|c| {
            let l = c.l_dirty();
            (0..n).all(|i| l[(i, i)] * l[(i, i)] >= PD_PIVOT_TOL * scale)
        });
        let (chol, prox) = match strict {
            Some(c) => (c, 0.0),
            None => {
                let eps = PROX_SCALE * scale.max(1.0);
                let shifted = &p + DMatrix::identity(n, n) * eps;
                let c = Cholesky::new(shifted).ok_or_else(|| {
                    invalid!("P is not positive semidefinite (shifted factorization failed)")
                })?;
                (c, eps)
            }
        };

        let x = chol.solve(&g.transpose());
        let mut m = &g * &x;
        linalg::symmetrize(&mut m);
        let (eq_basis, eq_factor) = pivoted_basis(&m, n_eq);

        Ok(Self {
            p,
            g,
            n_eq,
            chol,
            prox,
            x,
            m,
            eq_basis,
            eq_factor,
            settings,
        })
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn n_eq(&self) -> usize {
        self.n_eq
    }

    pub fn n_bounds(&self) -> usize {
        self.g.nrows() - self.n_eq
    }

    pub fn settings(&self) -> QpSettings {
        self.settings
    }

    /// True when `P` was only semidefinite and proximal passes are used.
    pub fn uses_proximal_passes(&self) -> bool {
        self.prox > 0.0
    }

    /// Number of equality rows kept after removing linear dependence.
    pub fn independent_equalities(&self) -> usize {
        self.eq_basis.len()
    }

    pub fn solve(
        &self,
        q: &DVector<f64>,
        b_eq: &DVector<f64>,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<QpSolution> {
        let n = self.dim();
        let n_in = self.n_bounds();
        if q.len() != n {
            return Err(invalid!("q has length {}, expected {n}", q.len()));
        }
        if b_eq.len() != self.n_eq {
            return Err(invalid!(
                "b_eq has length {}, expected {}",
                b_eq.len(),
                self.n_eq
            ));
        }
        if lower.len() != n_in {
            return Err(invalid!(
                "bounds have length {}, expected {n_in}",
                lower.len()
            ));
        }
        check_bounds(lower, upper)?;
        if let Some(ws) = warm_start {
            if ws.len() != n {
                return Err(invalid!("warm start has length {}, expected {n}", ws.len()));
            }
        }
        if q.iter().chain(b_eq.iter()).any(|v| !v.is_finite()) {
            return Err(invalid!("q and b_eq must be finite"));
        }

        let mut hints = match warm_start {
            Some(ws) => self.active_rows_at(ws, lower, upper),
            None => Vec::new(),
        };
        let mut total_iter = 0;

        if self.prox == 0.0 {
            let pass = self.dual_pass(q, b_eq, lower, upper, &hints, self.settings.max_iter);
            total_iter += pass.iterations;
            return Ok(self.finish(pass, q, b_eq, lower, upper, total_iter, false));
        }

        let mut center = warm_start.cloned().unwrap_or_else(|| DVector::zeros(n));
        let mut last = None;
        for _ in 0..MAX_PROX_PASSES {
            let shifted = q - &center * self.prox;
            let budget = self.settings.max_iter.saturating_sub(total_iter);
            let pass = self.dual_pass(&shifted, b_eq, lower, upper, &hints, budget);
            total_iter += pass.iterations;
            match pass.outcome {
                PassOutcome::Converged => {}
                _ => return Ok(self.finish(pass, q, b_eq, lower, upper, total_iter, false)),
            }
            if pass.active == hints {
                if let Some(exact) = self.solve_on_active(&pass.active, q, b_eq, lower, upper) {
                    return Ok(self.finish(exact, q, b_eq, lower, upper, total_iter, false));
                }
            }
            let step = (&pass.z - &center).amax();
            let (kkt, feas) = self.residuals(&pass.z, &pass.multipliers, q, b_eq, lower, upper);
            let stalled = step <= 1e-15 * (1.0 + pass.z.amax());
            hints = pass.active.clone();
            center = pass.z.clone();
            if (kkt <= 0.5 * self.settings.tol_kkt && feas <= self.settings.tol_feas) || stalled {
                return Ok(self.finish(pass, q, b_eq, lower, upper, total_iter, false));
            }
            last = Some(pass);
            if total_iter >= self.settings.max_iter {
                break;
            }
        }
        let pass = last.expect("at least one proximal pass");
        Ok(self.finish(pass, q, b_eq, lower, upper, total_iter, true))
    }

    fn active_rows_at(
        &self,
        z: &DVector<f64>,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
    ) -> Vec<(usize, f64)> {
        let values = &self.g * z;
        let mut rows = Vec::new();
        for i in 0..self.n_bounds() {
            let row = self.n_eq + i;
            let v = values[row];
            if lower[i] == upper[i] {
                continue;
            }
            let near = |b: f64| v - b >= -1e-9 * (1.0 + b.abs());
            if upper[i].is_finite() && near(upper[i]) {
                rows.push((row, 1.0));
            } else if lower[i].is_finite() && -v + lower[i] >= -1e-9 * (1.0 + lower[i].abs()) {
                rows.push((row, -1.0));
            }
        }
        rows
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        pass: Pass,
        q: &DVector<f64>,
        b_eq: &DVector<f64>,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
        iterations: usize,
        exhausted: bool,
    ) -> QpSolution {
        let (kkt, feas) = self.residuals(&pass.z, &pass.multipliers, q, b_eq, lower, upper);
        let eq_gap = self.equality_gap(&pass.z, b_eq);
        let status = match pass.outcome {
            PassOutcome::Infeasible => QpStatus::Infeasible,
            PassOutcome::MaxIterations => QpStatus::MaxIterations,
            PassOutcome::Converged if eq_gap > self.settings.tol_feas * (1.0 + b_eq.amax()) => {
                // Rows dropped as dependent were not consistent with the rest.
                QpStatus::Infeasible
            }
            PassOutcome::Converged
                if exhausted || kkt > self.settings.tol_kkt || feas > self.settings.tol_feas =>
            {
                QpStatus::MaxIterations
            }
            PassOutcome::Converged => QpStatus::Optimal,
        };
        let objective = 0.5 * pass.z.dot(&(&self.p * &pass.z)) + q.dot(&pass.z);
        QpSolution {
            objective,
            status,
            kkt_residual: kkt,
            primal_residual: feas,
            iterations,
            eq_multipliers: pass.multipliers.rows(0, self.n_eq).into_owned(),
            bound_multipliers: pass
                .multipliers
                .rows(self.n_eq, self.n_bounds())
                .into_owned(),
            z: pass.z,
        }
    }

    /// Solves the KKT system with `active` held as equalities; `None` unless
    /// the result is primal feasible and the multiplier signs agree.
    fn solve_on_active(
        &self,
        active: &[(usize, f64)],
        q: &DVector<f64>,
        b_eq: &DVector<f64>,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
    ) -> Option<Pass> {
        let n = self.dim();
        let mut rows: Vec<(usize, f64)> = (0..self.n_eq).map(|r| (r, b_eq[r])).collect();
        for i in 0..self.n_bounds() {
            if lower[i] == upper[i] {
                rows.push((self.n_eq + i, upper[i]));
            }
        }
        for &(row, sign) in active {
            let i = row - self.n_eq;
            rows.push((row, if sign > 0.0 { upper[i] } else { lower[i] }));
        }
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.p);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-q));
        for (j, &(row, target)) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(n + j, c)] = self.g[(row, c)];
                kkt[(c, n + j)] = self.g[(row, c)];
            }
            rhs[n + j] = target;
        }
        let scale = kkt.amax().max(f64::MIN_POSITIVE);
        let sol = kkt.svd(true, true).solve(&rhs, 1e-13 * scale).ok()?;
        let z = sol.rows(0, n).into_owned();
        let mut multipliers = DVector::zeros(self.g.nrows());
        for (j, &(row, _)) in rows.iter().enumerate() {
            multipliers[row] += sol[n + j];
        }
        for &(row, sign) in active {
            if sign * multipliers[row] < 0.0 {
                return None;
            }
        }
        let (res, feas) = self.residuals(&z, &multipliers, q, b_eq, lower, upper);
        if res > self.settings.tol_kkt || feas > self.settings.tol_feas {
            return None;
        }
        Some(Pass {
            outcome: PassOutcome::Converged,
            z,
            multipliers,
            active: active.to_vec(),
            iterations: 0,
        })
    }

    fn equality_gap(&self, z: &DVector<f64>, b_eq: &DVector<f64>) -> f64 {
        if self.n_eq == 0 {
            return 0.0;
        }
        (self.g.rows(0, self.n_eq) * z - b_eq).amax()
    }

    /// Scaled KKT residual and absolute primal violation for the original `P`.
    fn residuals(
        &self,
        z: &DVector<f64>,
        mult: &DVector<f64>,
        q: &DVector<f64>,
        b_eq: &DVector<f64>,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
    ) -> (f64, f64) {
        let pz = &self.p * z;
        let gtm = self.g.tr_mul(mult);
        let scale = 1.0 + pz.amax().max(q.amax()).max(gtm.amax());
        let stationarity = (&pz + q + &gtm).amax() / scale;

        let values = &self.g * z;
        let mut feas: f64 = 0.0;
        for i in 0..self.n_eq {
            feas = feas.max((values[i] - b_eq[i]).abs());
        }
        let mut comp: f64 = 0.0;
        for i in 0..self.n_bounds() {
            let v = values[self.n_eq + i];
            let mu = mult[self.n_eq + i];
            feas = feas.max(v - upper[i]).max(lower[i] - v);
            let gap = if mu > 0.0 {
                upper[i] - v
            } else if mu < 0.0 {
                v - lower[i]
            } else {
                0.0
            };
            comp = comp.max((mu * gap).abs());
        }
        (stationarity.max(comp / scale), feas)
    }

    /// One dual active-set solve for the strictly convex `P (+ εI)`.
    fn dual_pass(
        &self,
        q: &DVector<f64>,
        b_eq: &DVector<f64>,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
        hints: &[(usize, f64)],
        budget: usize,
    ) -> Pass {
        let total_rows = self.g.nrows();
        let z0 = -self.chol.solve(q);
        let v0 = &self.g * &z0;
        let mut ws = Workspace::new(total_rows);

        for &row in &self.eq_basis {
            ws.active.push(Active {
                row,
                sign: 1.0,
                target: b_eq[row],
                equality: true,
            });
        }
        let ke = self.eq_basis.len();
        ws.factor
            .view_mut((0, 0), (ke, ke))
            .copy_from(&self.eq_factor);

        let mut infeasible = false;
        // Rows with lower == upper behave as equalities.
        for i in 0..self.n_bounds() {
            if lower[i] == upper[i] {
                let cand = Active {
                    row: self.n_eq + i,
                    sign: 1.0,
                    target: upper[i],
                    equality: true,
                };
                if !self.try_append(&mut ws, cand) {
                    // Dependent: consistency is checked after the solve.
                    continue;
                }
            }
        }
        for &(row, sign) in hints {
            let i = row - self.n_eq;
            if lower[i] == upper[i] || ws.active.iter().any(|a| a.row == row) {
                continue;
            }
            let target = if sign > 0.0 { upper[i] } else { lower[i] };
            if !target.is_finite() {
                continue;
            }
            let cand = Active {
                row,
                sign,
                target,
                equality: false,
            };
            self.try_append(&mut ws, cand);
        }

        // Multipliers for the initial working set; drop inequality rows with
        // the wrong sign until the set is dual feasible.
        loop {
            ws.solve_multipliers(&v0);
            let worst = ws
                .active
                .iter()
                .zip(&ws.y)
                .enumerate()
                .filter(|(_, (a, y))| !a.equality && **y < 0.0)
                .min_by(|a, b| a.1 .1.total_cmp(b.1 .1))
                .map(|(i, _)| i);
            match worst {
                Some(pos) => ws.remove(pos, &self.m),
                None => break,
            }
        }

        let mut iterations = 0;
        let mut outcome = PassOutcome::Converged;
        'outer: loop {
            let values = ws.values(&self.m, &v0, None);
            let Some((row, sign, target)) = self.most_violated(&ws, &values, lower, upper) else {
                break;
            };
            let mut added = Active {
                row,
                sign,
                target,
                equality: false,
            };
            let mut partial = 0.0;
            loop {
                if iterations >= budget {
                    outcome = PassOutcome::MaxIterations;
                    break 'outer;
                }
                iterations += 1;
                let k = ws.active.len();
                let coupling: Vec<f64> = ws
                    .active
                    .iter()
                    .map(|a| a.sign * added.sign * self.m[(a.row, added.row)])
                    .collect();
                let l = ws.forward(&coupling);
                let r = ws.backward(&l);
                let m_pp = self.m[(added.row, added.row)];
                let theta = m_pp - l.iter().map(|x| x * x).sum::<f64>();

                let blocking = ws
                    .active
                    .iter()
                    .zip(&ws.y)
                    .zip(&r)
                    .enumerate()
                    .filter(|(_, ((a, _), ri))| !a.equality && **ri > 0.0)
                    .map(|(i, ((_, yi), ri))| (i, yi / ri))
                    .min_by(|a, b| a.1.total_cmp(&b.1));

                let value =
                    added.sign * ws.value_of(&self.m, &v0, added.row, Some((&added, partial)));
                let violation = value - added.target;

                if theta <= DEPENDENCE_TOL * m_pp.max(f64::MIN_POSITIVE) {
                    let Some((pos, t)) = blocking else {
                        infeasible = true;
                        break 'outer;
                    };
                    for (yi, ri) in ws.y.iter_mut().zip(&r) {
                        *yi -= t * ri;
                    }
                    partial += t;
                    ws.remove(pos, &self.m);
                    continue;
                }

                let full = violation / theta;
                match blocking {
                    Some((pos, t)) if t < full => {
                        for (yi, ri) in ws.y.iter_mut().zip(&r) {
                            *yi -= t * ri;
                        }
                        partial += t;
                        ws.remove(pos, &self.m);
                    }
                    _ => {
                        for (yi, ri) in ws.y.iter_mut().zip(&r) {
                            *yi -= full * ri;
                        }
                        added.equality = false;
                        ws.append_row(&l, theta.sqrt());
                        ws.active.push(added);
                        ws.y.push(partial + full);
                        debug_assert_eq!(ws.active.len(), k + 1);
                        break;
                    }
                }
            }
        }
        if infeasible {
            outcome = PassOutcome::Infeasible;
        }

        let mut z = z0;
        for (a, y) in ws.active.iter().zip(&ws.y) {
            z.axpy(-a.sign * y, &self.x.column(a.row), 1.0);
        }
        // Recovering z through P⁻¹Gᵀ amplifies rounding when P is nearly
        // singular; refine on the working rows so they hold to working precision.
        if outcome == PassOutcome::Converged {
            for _ in 0..REFINE_STEPS {
                let gap: Vec<f64> = ws
                    .active
                    .iter()
                    .map(|a| a.sign * self.g.row(a.row).dot(&z.transpose()) - a.target)
                    .collect();
                let l = ws.forward(&gap);
                let delta = ws.backward(&l);
                for ((a, y), d) in ws.active.iter().zip(ws.y.iter_mut()).zip(&delta) {
                    *y += d;
                    z.axpy(-a.sign * d, &self.x.column(a.row), 1.0);
                }
            }
        }
        let mut multipliers = DVector::zeros(total_rows);
        for (a, y) in ws.active.iter().zip(&ws.y) {
            multipliers[a.row] += a.sign * y;
        }
        let active = ws
            .active
            .iter()
            .filter(|a| a.row >= self.n_eq && lower[a.row - self.n_eq] != upper[a.row - self.n_eq])
            .map(|a| (a.row, a.sign))
            .collect();
        Pass {
            outcome,
            z,
            multipliers,
            active,
            iterations,
        }
    }

    fn most_violated(
        &self,
        ws: &Workspace,
        values: &DVector<f64>,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
    ) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        let mut worst = self.settings.tol_feas;
        for i in 0..self.n_bounds() {
            let row = self.n_eq + i;
            if ws.active.iter().any(|a| a.row == row) {
                continue;
            }
            let v = values[row];
            if v - upper[i] > worst {
                worst = v - upper[i];
                best = Some((row, 1.0, upper[i]));
            }
            if lower[i] - v > worst {
                worst = lower[i] - v;
                best = Some((row, -1.0, -lower[i]));
            }
        }
        best
    }

    /// Appends `cand` if it is independent of the current working set.
    fn try_append(&self, ws: &mut Workspace, cand: Active) -> bool {
        let coupling: Vec<f64> = ws
            .active
            .iter()
            .map(|a| a.sign * cand.sign * self.m[(a.row, cand.row)])
            .collect();
        let l = ws.forward(&coupling);
        let m_pp = self.m[(cand.row, cand.row)];
        let theta = m_pp - l.iter().map(|x| x * x).sum::<f64>();
        if theta <= DEPENDENCE_TOL * m_pp.max(f64::MIN_POSITIVE) {
            return false;
        }
        let target = if cand.sign < 0.0 && !cand.equality {
            -cand.target
        } else {
            cand.target
        };
        ws.append_row(&l, theta.sqrt());
        ws.active.push(Active { target, ..cand });
        ws.y.push(0.0);
        true
    }
}

/// Greedy pivoted Cholesky of the leading `n_eq × n_eq` block of `m`.
fn pivoted_basis(m: &DMatrix<f64>, n_eq: usize) -> (Vec<usize>, DMatrix<f64>) {
    let scale = (0..n_eq).map(|i| m[(i, i)]).fold(0.0, f64::max);
    let mut chosen: Vec<usize> = Vec::new();
    // Column j of `rows` holds L-row entries for candidate j.
    let mut partial: Vec<Vec<f64>> = vec![Vec::new(); n_eq];
    let mut residual: Vec<f64> = (0..n_eq).map(|i| m[(i, i)]).collect();
    let mut diag: Vec<f64> = Vec::new();
    loop {
        let pick = (0..n_eq)
            .filter(|i| !chosen.contains(i))
            .max_by(|a, b| residual[*a].total_cmp(&residual[*b]));
        let Some(piv) = pick else { break };
        if residual[piv] <= DEPENDENCE_TOL * scale || residual[piv] <= 0.0 {
            break;
        }
        let d = residual[piv].sqrt();
        let k = chosen.len();
        for j in 0..n_eq {
            if chosen.contains(&j) || j == piv {
                continue;
            }
            let dot: f64 = (0..k).map(|t| partial[j][t] * partial[piv][t]).sum();
            let entry = (m[(j, piv)] - dot) / d;
            partial[j].push(entry);
            residual[j] -= entry * entry;
        }
        chosen.push(piv);
        diag.push(d);
    }
    let k = chosen.len();
    let mut factor = DMatrix::zeros(k, k);
    for (i, &row) in chosen.iter().enumerate() {
        for t in 0..i {
            factor[(i, t)] = partial[row][t];
        }
        factor[(i, i)] = diag[i];
    }
    (chosen, factor)
}

/// Working set with a Cholesky factor of `M̃_WW`.
struct Workspace {
    active: Vec<Active>,
    y: Vec<f64>,
    factor: DMatrix<f64>,
}

impl Workspace {
    fn new(capacity: usize) -> Self {
        Self {
            active: Vec::with_capacity(capacity),
            y: Vec::with_capacity(capacity),
            factor: DMatrix::zeros(capacity, capacity),
        }
    }

    fn entry(&self, m: &DMatrix<f64>, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.active[i], &self.active[j]);
        a.sign * b.sign * m[(a.row, b.row)]
    }

    /// Solves `L x = b` for the leading block.
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let k = b.len();
        let mut x = vec![0.0; k];
        for i in 0..k {
            let s: f64 = (0..i).map(|t| self.factor[(i, t)] * x[t]).sum();
            x[i] = (b[i] - s) / self.factor[(i, i)];
        }
        x
    }

    /// Solves `Lᵀ x = b` for the leading block.
    fn backward(&self, b: &[f64]) -> Vec<f64> {
        let k = b.len();
        let mut x = b.to_vec();
        for i in (0..k).rev() {
            let s: f64 = ((i + 1)..k).map(|t| self.factor[(t, i)] * x[t]).sum();
            x[i] = (x[i] - s) / self.factor[(i, i)];
        }
        x
    }

    fn append_row(&mut self, l: &[f64], diag: f64) {
        let k = l.len();
        for (t, v) in l.iter().enumerate() {
            self.factor[(k, t)] = *v;
        }
        self.factor[(k, k)] = diag;
    }

    fn remove(&mut self, pos: usize, m: &DMatrix<f64>) {
        self.active.remove(pos);
        self.y.remove(pos);
        let k = self.active.len();
        for i in pos..k {
            for c in 0..=i {
                let mut s = self.entry(m, i, c);
                if c < pos {
                    // Columns before `pos` in rows ≥ pos are unaffected by
                    // the removal except for the row shift.
                    s = self.factor[(i + 1, c)];
                    self.factor[(i, c)] = s;
                    continue;
                }
                for t in 0..c {
                    s -= self.factor[(i, t)] * self.factor[(c, t)];
                }
                if c == i {
                    self.factor[(i, i)] = s.max(f64::MIN_POSITIVE).sqrt();
                } else {
                    self.factor[(i, c)] = s / self.factor[(c, c)];
                }
            }
        }
    }

    /// Multipliers that keep every working row at its target.
    fn solve_multipliers(&mut self, v0: &DVector<f64>) {
        let rhs: Vec<f64> = self
            .active
            .iter()
            .map(|a| a.sign * v0[a.row] - a.target)
            .collect();
        let l = self.forward(&rhs);
        self.y = self.backward(&l);
    }

    fn values(
        &self,
        m: &DMatrix<f64>,
        v0: &DVector<f64>,
        extra: Option<(&Active, f64)>,
    ) -> DVector<f64> {
        let mut v = v0.clone();
        for (a, y) in self.active.iter().zip(&self.y) {
            v.axpy(-a.sign * y, &m.column(a.row), 1.0);
        }
        if let Some((a, y)) = extra {
            v.axpy(-a.sign * y, &m.column(a.row), 1.0);
        }
        v
    }

    fn value_of(
        &self,
        m: &DMatrix<f64>,
        v0: &DVector<f64>,
        row: usize,
        extra: Option<(&Active, f64)>,
    ) -> f64 {
        let mut v = v0[row];
        for (a, y) in self.active.iter().zip(&self.y) {
            v -= a.sign * y * m[(row, a.row)];
        }
        if let Some((a, y)) = extra {
            v -= a.sign * y * m[(row, a.row)];
        }
        v
    }
}
