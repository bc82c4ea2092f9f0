//! Data-enabled predictive control.
//!
//! The regularized problem
//!
//! ```text
//!     min  ‖y − y_r‖²_Q + ‖u‖²_R + λ_y ‖σ_y‖² + λ_g ‖g‖²
//!     s.t. [Up; Uf; Yp; Yf] g = [u_ini; u; y_ini + σ_y; y],  u ∈ U,  y ∈ Y
//! ```
//!
//! is condensed onto `g` alone by substituting `u = Uf g`, `y = Yf g` and
//! `σ_y = Yp g − y_ini`. What remains is a QP with the hard equality
//! `Up g = u_ini` and bound rows on `Uf g` (and optionally `Yf g`). The same
//! template accepts SVD-condensed data, where `g` is replaced by `ḡ ∈ ℝʳ`.
//!
//! Setting `lambda_y` to infinity turns the past-output rows into hard
//! equalities, which is the unregularized formulation.

use alloc::collections::VecDeque;
use alloc::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::datasets::HankelPartition;
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::qp::{PreparedQp, QpSettings, QpStatus};
use crate::svd_reduction::{self, SvdCondensed};

/// How the Hankel data is reduced before assembling the QP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reduction {
    /// Decision variable `g ∈ ℝᴷ`.
    Full,
    /// Keep exactly `r` singular directions.
    Rank(usize),
    /// Smallest rank holding this fraction of spectral energy.
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeePCConfig {
    pub t_ini: usize,
    pub horizon: usize,
    /// Per-step output weight `Q` (`p × p`).
    pub output_weight: DMatrix<f64>,
    /// Per-step input weight `R` (`m × m`).
    pub input_weight: DMatrix<f64>,
    pub lambda_g: f64,
    /// Slack penalty; `f64::INFINITY` enforces `Yp g = y_ini` exactly.
    pub lambda_y: f64,
    pub u_lower: DVector<f64>,
    pub u_upper: DVector<f64>,
    pub y_lower: Option<DVector<f64>>,
    pub y_upper: Option<DVector<f64>>,
    pub reduction: Reduction,
    pub qp: QpSettings,
}

impl DeePCConfig {
    /// Scalar weights `Q = q·I`, `R = r·I`, unbounded outputs, no reduction.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        t_ini: usize,
        horizon: usize,
        q: f64,
        r: f64,
        lambda_g: f64,
        lambda_y: f64,
        u_lower: DVector<f64>,
        u_upper: DVector<f64>,
        output_dim: usize,
    ) -> Self {
        let m = u_lower.len();
        Self {
            t_ini,
            horizon,
            output_weight: DMatrix::identity(output_dim, output_dim) * q,
            input_weight: DMatrix::identity(m, m) * r,
            lambda_g,
            lambda_y,
            u_lower,
            u_upper,
            y_lower: None,
            y_upper: None,
            reduction: Reduction::Full,
            qp: QpSettings::default(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.u_lower.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_weight.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.t_ini == 0 || self.horizon == 0 {
            return cfg(alloc::format!(
                "T_ini ({}) and N ({}) must be at least 1",
                self.t_ini,
                self.horizon
            ));
        }
        let (m, p) = (self.input_dim(), self.output_dim());
        if m == 0 || p == 0 {
            return cfg("input and output dimensions must be at least 1".into());
        }
        if self.input_weight.shape() != (m, m) || self.output_weight.shape() != (p, p) {
            return cfg(alloc::format!(
                "weights are {:?} and {:?}, expected ({m}, {m}) and ({p}, {p})",
                self.input_weight.shape(),
                self.output_weight.shape()
            ));
        }
        if !linalg::is_symmetric_psd(&self.output_weight, 1e-10)
            || !linalg::is_symmetric_psd(&self.input_weight, 1e-10)
        {
            return cfg("Q and R must be symmetric positive semidefinite".into());
        }
        if !(self.lambda_g.is_finite() && self.lambda_g >= 0.0) {
            return cfg(alloc::format!(
                "lambda_g must be finite and >= 0, got {}",
                self.lambda_g
            ));
        }
        if self.lambda_y.is_nan() || self.lambda_y < 0.0 {
            return cfg(alloc::format!(
                "lambda_y must be >= 0, got {}",
                self.lambda_y
            ));
        }
        if self.u_upper.len() != m {
            return cfg("u_lower and u_upper differ in length".into());
        }
        if self
            .u_lower
            .iter()
            .zip(self.u_upper.iter())
            .any(|(l, u)| l > u || l.is_nan() || u.is_nan())
        {
            return cfg("u_lower must not exceed u_upper".into());
        }
        for (name, b) in [("y_lower", &self.y_lower), ("y_upper", &self.y_upper)] {
            if let Some(b) = b {
                if b.len() != p {
                    return cfg(alloc::format!(
                        "{name} has length {}, expected {p}",
                        b.len()
                    ));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (&self.y_lower, &self.y_upper) {
            if lo.iter().zip(hi.iter()).any(|(l, u)| l > u) {
                return cfg("y_lower must not exceed y_upper".into());
            }
        }
        match self.reduction {
            Reduction::Full => {}
            Reduction::Rank(0) => return cfg("reduction rank must be at least 1".into()),
            Reduction::Energy(f) if !(f > 0.0 && f <= 1.0) => {
                return cfg(alloc::format!("energy fraction {f} outside (0, 1]"))
            }
            _ => {
                if self.lambda_g <= 0.0 {
                    return cfg("lambda_g must be positive when SVD reduction is enabled".into());
                }
            }
        }
        Ok(())
    }
}

/// Rolling window of the last `T_ini` applied inputs and measured outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    capacity: usize,
    input_dim: usize,
    output_dim: usize,
    samples: VecDeque<(DVector<f64>, DVector<f64>)>,
}

impl HistoryBuffer {
    pub fn new(t_ini: usize, input_dim: usize, output_dim: usize) -> Self {
        Self {
            capacity: t_ini,
            input_dim,
            output_dim,
            samples: VecDeque::with_capacity(t_ini + 1),
        }
    }

    /// Appends one sample, evicting the oldest once `T_ini` are held.
    pub fn push(&mut self, input: &DVector<f64>, output: &DVector<f64>) -> Result<()> {
        if input.len() != self.input_dim || output.len() != self.output_dim {
            return Err(invalid!(
                "sample dimensions ({}, {}) do not match ({}, {})",
                input.len(),
                output.len(),
                self.input_dim,
                self.output_dim
            ));
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((input.clone(), output.clone()));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    pub fn t_ini(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    /// `[u(t−T_ini); …; u(t−1)]`, oldest first.
    pub fn u_ini(&self) -> Result<DVector<f64>> {
        self.stacked(|s| &s.0, self.input_dim)
    }

    /// `[y(t−T_ini); …; y(t−1)]`, oldest first.
    pub fn y_ini(&self) -> Result<DVector<f64>> {
        self.stacked(|s| &s.1, self.output_dim)
    }

    fn stacked(
        &self,
        pick: impl Fn(&(DVector<f64>, DVector<f64>)) -> &DVector<f64>,
        dim: usize,
    ) -> Result<DVector<f64>> {
        if !self.is_full() {
            return Err(Error::HistoryNotFull {
                have: self.samples.len(),
                need: self.capacity,
            });
        }
        let mut out = DVector::zeros(dim * self.capacity);
        for (i, s) in self.samples.iter().enumerate() {
            out.rows_mut(i * dim, dim).copy_from(pick(s));
        }
        Ok(out)
    }
}

/// Solution of one receding-horizon problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DeePCStepResult {
    /// `m × N`, column `k` is `u(t+k)`.
    pub optimal_inputs: DMatrix<f64>,
    /// `p × N`, column `k` is `y(t+k)`.
    pub predicted_outputs: DMatrix<f64>,
    /// `g` (full data) or `ḡ` (condensed data).
    pub decision: DVector<f64>,
    /// `Yp g − y_ini`.
    pub sigma_y: DVector<f64>,
    /// Value of the regularized cost, constants included.
    pub objective: f64,
    pub solver_status: QpStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl DeePCStepResult {
    pub fn first_input(&self) -> DVector<f64> {
        self.optimal_inputs.column(0).into_owned()
    }
}

/// Reference-independent part of the DeePC problem.
#[derive(Debug, Clone)]
pub struct DeePCTemplate {
    config: DeePCConfig,
    up: DMatrix<f64>,
    uf: DMatrix<f64>,
    yp: DMatrix<f64>,
    yf: DMatrix<f64>,
    weighted_yf: DMatrix<f64>,
    rank: Option<usize>,
    qp: PreparedQp,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl DeePCTemplate {
    /// Assembles the template from full Hankel data, applying
    /// `config.reduction` first.
    pub fn assemble(config: &DeePCConfig, data: &HankelPartition) -> Result<Self> {
        config.validate()?;
        check_dims(
            config,
            data.input_dim(),
            data.output_dim(),
            data.t_ini(),
            data.horizon(),
        )?;
        match config.reduction {
            Reduction::Full => Self::from_blocks(
                config,
                data.up.clone(),
                data.uf.clone(),
                data.yp.clone(),
                data.yf.clone(),
                None,
            ),
            Reduction::Rank(r) => {
                Self::assemble_condensed(config, &svd_reduction::factorize_and_condense(data, r)?)
            }
            Reduction::Energy(f) => {
                Self::assemble_condensed(config, &svd_reduction::condense_by_energy(data, f)?)
            }
        }
    }

    /// Assembles the template on SVD-condensed data.
    pub fn assemble_condensed(config: &DeePCConfig, data: &SvdCondensed) -> Result<Self> {
        config.validate()?;
        if config.lambda_g <= 0.0 {
            return Err(Error::Config(
                "lambda_g must be positive with condensed data".into(),
            ));
        }
        check_dims(
            config,
            data.input_dim(),
            data.output_dim(),
            data.t_ini(),
            data.horizon(),
        )?;
        let (up, uf, yp, yf) = data.blocks();
        Self::from_blocks(config, up, uf, yp, yf, Some(data.rank_used()))
    }

    fn from_blocks(
        config: &DeePCConfig,
        up: DMatrix<f64>,
        uf: DMatrix<f64>,
        yp: DMatrix<f64>,
        yf: DMatrix<f64>,
        rank: Option<usize>,
    ) -> Result<Self> {
        let n = up.ncols();
        let hard_past = config.lambda_y.is_infinite();

        let weighted_yf = linalg::block_diag_mul(&config.output_weight, &yf);
        let weighted_uf = linalg::block_diag_mul(&config.input_weight, &uf);
        let mut hessian = yf.tr_mul(&weighted_yf) + uf.tr_mul(&weighted_uf);
        if !hard_past && config.lambda_y > 0.0 {
            hessian += yp.tr_mul(&yp) * config.lambda_y;
        }
        for i in 0..n {
            hessian[(i, i)] += config.lambda_g;
        }
        hessian *= 2.0;

        let a_eq = if hard_past {
            linalg::vstack(&[&up, &yp])
        } else {
            up.clone()
        };

        let horizon = config.horizon;
        let mut rows = alloc::vec![&uf];
        let mut lower = linalg::repeat(&config.u_lower, horizon);
        let mut upper = linalg::repeat(&config.u_upper, horizon);
        if config.y_lower.is_some() || config.y_upper.is_some() {
            let p = config.output_dim();
            let lo = config
                .y_lower
                .clone()
                .unwrap_or_else(|| DVector::from_element(p, f64::NEG_INFINITY));
            let hi = config
                .y_upper
                .clone()
                .unwrap_or_else(|| DVector::from_element(p, f64::INFINITY));
            rows.push(&yf);
            lower = linalg::concat(&lower, &linalg::repeat(&lo, horizon));
            upper = linalg::concat(&upper, &linalg::repeat(&hi, horizon));
        }
        let a_in = linalg::vstack(&rows);

        let qp = PreparedQp::new(hessian, a_eq, a_in, config.qp)?;
        Ok(Self {
            config: config.clone(),
            up,
            uf,
            yp,
            yf,
            weighted_yf,
            rank,
            qp,
            lower,
            upper,
        })
    }

    pub fn config(&self) -> &DeePCConfig {
        &self.config
    }

    /// Length of the decision vector (`K` or `r`).
    pub fn decision_dim(&self) -> usize {
        self.up.ncols()
    }

    /// `Some(r)` when the template runs on condensed data.
    pub fn condensed_rank(&self) -> Option<usize> {
        self.rank
    }

    pub fn qp(&self) -> &PreparedQp {
        &self.qp
    }

    /// Solves the receding-horizon problem for the current history.
    ///
    /// `reference` is `p × N` (column `k` is the target for `y(t+k)`). A
    /// non-optimal solver status is reported in the result, not as an error.
    pub fn step(
        &self,
        history: &HistoryBuffer,
        reference: &DMatrix<f64>,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<DeePCStepResult> {
        let (m, p) = (self.config.input_dim(), self.config.output_dim());
        let horizon = self.config.horizon;
        if history.t_ini() != self.config.t_ini {
            return Err(invalid!(
                "history window {} differs from T_ini {}",
                history.t_ini(),
                self.config.t_ini
            ));
        }
        if reference.shape() != (p, horizon) {
            return Err(invalid!(
                "reference is {:?}, expected ({p}, {horizon})",
                reference.shape()
            ));
        }
        let u_ini = history.u_ini()?;
        let y_ini = history.y_ini()?;
        if u_ini.len() != self.up.nrows() || y_ini.len() != self.yp.nrows() {
            return Err(invalid!("history dimensions do not match the data"));
        }
        let y_ref = DVector::from_column_slice(reference.as_slice());

        let hard_past = self.config.lambda_y.is_infinite();
        let mut q = self.weighted_yf.tr_mul(&y_ref);
        let weighted_ref = linalg::block_diag_mul_vec(&self.config.output_weight, &y_ref);
        let mut constant = y_ref.dot(&weighted_ref);
        if !hard_past && self.config.lambda_y > 0.0 {
            q += self.yp.tr_mul(&y_ini) * self.config.lambda_y;
            constant += self.config.lambda_y * y_ini.norm_squared();
        }
        q *= -2.0;
        let b_eq = if hard_past {
            linalg::concat(&u_ini, &y_ini)
        } else {
            u_ini
        };

        let sol = self
            .qp
            .solve(&q, &b_eq, &self.lower, &self.upper, warm_start)?;
        let g = sol.z;
        let u = &self.uf * &g;
        let y = &self.yf * &g;
        let sigma_y = &self.yp * &g - &y_ini;
        Ok(DeePCStepResult {
            optimal_inputs: DMatrix::from_column_slice(m, horizon, u.as_slice()),
            predicted_outputs: DMatrix::from_column_slice(p, horizon, y.as_slice()),
            decision: g,
            sigma_y,
            objective: sol.objective + constant,
            solver_status: sol.status,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
        })
    }
}

fn check_dims(
    config: &DeePCConfig,
    m: usize,
    p: usize,
    t_ini: usize,
    horizon: usize,
) -> Result<()> {
    if config.input_dim() != m
        || config.output_dim() != p
        || config.t_ini != t_ini
        || config.horizon != horizon
    {
        return Err(invalid!(
            "data has (m, p, T_ini, N) = ({m}, {p}, {t_ini}, {horizon}) but config expects ({}, {}, {}, {})",
            config.input_dim(),
            config.output_dim(),
            config.t_ini,
            config.horizon
        ));
    }
    Ok(())
}

/// Outcome of one closed-loop control decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAction {
    /// Input to apply now.
    pub input: DVector<f64>,
    /// True when the solver failed and the previous input was reused.
    pub fallback: bool,
    pub result: DeePCStepResult,
}

/// Receding-horizon loop state around a shared template.
#[derive(Debug, Clone)]
pub struct DeePCController {
    template: Arc<DeePCTemplate>,
    history: HistoryBuffer,
    last_decision: Option<DVector<f64>>,
    last_input: DVector<f64>,
}

impl DeePCController {
    pub fn new(template: Arc<DeePCTemplate>) -> Self {
        let cfg = template.config();
        let history = HistoryBuffer::new(cfg.t_ini, cfg.input_dim(), cfg.output_dim());
        let last_input = DVector::from_fn(cfg.input_dim(), |i, _| {
            0.0f64.clamp(cfg.u_lower[i], cfg.u_upper[i])
        });
        Self {
            template,
            history,
            last_decision: None,
            last_input,
        }
    }

    pub fn template(&self) -> &Arc<DeePCTemplate> {
        &self.template
    }

    pub fn history(&self) -> &HistoryBuffer {
        &self.history
    }

    pub fn is_ready(&self) -> bool {
        self.history.is_full()
    }

    /// Records the input that was applied and the output it produced.
    pub fn advance(&mut self, applied: &DVector<f64>, measured: &DVector<f64>) -> Result<()> {
        self.history.push(applied, measured)?;
        self.last_input.copy_from(applied);
        Ok(())
    }

    /// Solves for the current window and returns the first input.
    ///
    /// The returned input is clipped to the input bounds so solver tolerance
    /// never leaks into the plant. On a non-optimal solve the previously
    /// applied input is returned with `fallback` set.
    pub fn control(&mut self, reference: &DMatrix<f64>) -> Result<ControlAction> {
        let result = self
            .template
            .step(&self.history, reference, self.last_decision.as_ref())?;
        let cfg = self.template.config();
        if result.solver_status == QpStatus::Optimal {
            let first = result.first_input();
            let input = DVector::from_fn(first.len(), |i, _| {
                first[i].clamp(cfg.u_lower[i], cfg.u_upper[i])
            });
            self.last_decision = Some(result.decision.clone());
            Ok(ControlAction {
                input,
                fallback: false,
                result,
            })
        } else {
            Ok(ControlAction {
                input: self.last_input.clone(),
                fallback: true,
                result,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn history_orders_oldest_first_and_evicts() {
        let mut h = HistoryBuffer::new(3, 1, 1);
        assert!(matches!(
            h.u_ini(),
            Err(Error::HistoryNotFull { have: 0, need: 3 })
        ));
        for k in 0..3 {
            h.push(&dv(&[k as f64]), &dv(&[10.0 * k as f64])).unwrap();
        }
        assert_eq!(h.u_ini().unwrap(), dv(&[0.0, 1.0, 2.0]));
        assert_eq!(h.y_ini().unwrap(), dv(&[0.0, 10.0, 20.0]));
        h.push(&dv(&[3.0]), &dv(&[30.0])).unwrap();
        assert_eq!(h.u_ini().unwrap(), dv(&[1.0, 2.0, 3.0]));
        assert_eq!(h.len(), 3);
        assert!(h.push(&dv(&[1.0, 2.0]), &dv(&[0.0])).is_err());
    }

    #[test]
    fn config_validation() {
        let base = DeePCConfig::new(
            20,
            30,
            10.0,
            2e-3,
            300.0,
            1000.0,
            dv(&[0.0; 3]),
            dv(&[90.0; 3]),
            3,
        );
        assert!(base.validate().is_ok());
        let mut c = base.clone();
        c.lambda_g = 0.0;
        c.reduction = Reduction::Rank(5);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base.clone();
        c.t_ini = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.u_lower = dv(&[0.0, 100.0, 0.0]);
        assert!(c.validate().is_err());
        let mut c = base;
        c.output_weight =
            DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(c.validate().is_err());
    }
}
