//! Trajectory data, block-Hankel matrices and the fundamental-lemma queries
//! built on them.
//!
//! Signals are stored as `d × T` matrices, one column per time step. Block
//! rows of a Hankel matrix are time-major: block row `i` holds the `d`
//! channels of sample `i + j` in column `j`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{invalid, Error, Result};
use crate::linalg;

/// Paired input/output samples from one data-collection experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    inputs: DMatrix<f64>,
    outputs: DMatrix<f64>,
    sample_period: f64,
}

impl TrajectoryDataset {
    /// `inputs` is `m × T`, `outputs` is `p × T`.
    pub fn new(inputs: DMatrix<f64>, outputs: DMatrix<f64>, sample_period: f64) -> Result<Self> {
        if inputs.ncols() == 0 {
            return Err(invalid!("dataset must hold at least one sample"));
        }
        if inputs.ncols() != outputs.ncols() {
            return Err(invalid!(
                "input length {} differs from output length {}",
                inputs.ncols(),
                outputs.ncols()
            ));
        }
        if inputs.nrows() == 0 || outputs.nrows() == 0 {
            return Err(invalid!("input and output dimensions must be at least 1"));
        }
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(invalid!(
                "sample period must be positive, got {sample_period}"
            ));
        }
        Ok(Self {
            inputs,
            outputs,
            sample_period,
        })
    }

    /// Builds a dataset from per-step vectors.
    pub fn from_samples(
        inputs: &[DVector<f64>],
        outputs: &[DVector<f64>],
        sample_period: f64,
    ) -> Result<Self> {
        Self::new(
            linalg::columns_to_matrix(inputs)?,
            linalg::columns_to_matrix(outputs)?,
            sample_period,
        )
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    /// Number of samples `T`.
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.nrows()
    }

    /// Hankel partition with depth `t_ini + horizon`.
    pub fn partition(&self, t_ini: usize, horizon: usize) -> Result<HankelPartition> {
        let depth = t_ini
            .checked_add(horizon)
            .ok_or_else(|| invalid!("depth overflow"))?;
        let hu = build_hankel(&self.inputs, depth)?;
        let hy = build_hankel(&self.outputs, depth)?;
        partition_past_future(&hu, &hy, t_ini, horizon)
    }
}

/// Block-Hankel matrix of depth `L` built from a `d`-dimensional signal.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockHankel {
    matrix: DMatrix<f64>,
    signal_dim: usize,
    depth: usize,
}

impl BlockHankel {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn signal_dim(&self) -> usize {
        self.signal_dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Column count `T - L + 1`.
    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Builds the `(d·L) × (T−L+1)` block-Hankel matrix of `signal` (`d × T`).
pub fn build_hankel(signal: &DMatrix<f64>, depth: usize) -> Result<BlockHankel> {
    let samples = signal.ncols();
    let d = signal.nrows();
    if d == 0 {
        return Err(invalid!("signal dimension must be at least 1"));
    }
    if depth == 0 {
        return Err(invalid!("Hankel depth must be at least 1"));
    }
    if depth > samples {
        return Err(invalid!(
            "Hankel depth {depth} exceeds signal length {samples}"
        ));
    }
    let cols = samples - depth + 1;
    let matrix = DMatrix::from_fn(d * depth, cols, |row, col| signal[(row % d, row / d + col)]);
    Ok(BlockHankel {
        matrix,
        signal_dim: d,
        depth,
    })
}

/// Past/future split of the input and output Hankel matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelPartition {
    pub up: DMatrix<f64>,
    pub uf: DMatrix<f64>,
    pub yp: DMatrix<f64>,
    pub yf: DMatrix<f64>,
    input_dim: usize,
    output_dim: usize,
    t_ini: usize,
    horizon: usize,
}

impl HankelPartition {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn t_ini(&self) -> usize {
        self.t_ini
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Shared column count `K`.
    pub fn ncols(&self) -> usize {
        self.up.ncols()
    }

    /// `[Up; Uf; Yp; Yf]`, which equals `[H_L(u); H_L(y)]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let k = self.ncols();
        let rows = self.up.nrows() + self.uf.nrows() + self.yp.nrows() + self.yf.nrows();
        let mut out = DMatrix::zeros(rows, k);
        let mut at = 0;
        for block in [&self.up, &self.uf, &self.yp, &self.yf] {
            out.rows_mut(at, block.nrows()).copy_from(block);
            at += block.nrows();
        }
        out
    }
}

/// Splits `hu`/`hy` (depth `t_ini + horizon`) into past and future blocks.
pub fn partition_past_future(
    hu: &BlockHankel,
    hy: &BlockHankel,
    t_ini: usize,
    horizon: usize,
) -> Result<HankelPartition> {
    if t_ini == 0 {
        return Err(invalid!("T_ini must be at least 1"));
    }
    if horizon == 0 {
        return Err(invalid!("prediction horizon must be at least 1"));
    }
    let depth = t_ini + horizon;
    if hu.depth != depth || hy.depth != depth {
        return Err(invalid!(
            "Hankel depths ({}, {}) do not equal T_ini + N = {depth}",
            hu.depth,
            hy.depth
        ));
    }
    if hu.ncols() != hy.ncols() {
        return Err(invalid!(
            "input Hankel has {} columns, output Hankel has {}",
            hu.ncols(),
            hy.ncols()
        ));
    }
    let m = hu.signal_dim;
    let p = hy.signal_dim;
    Ok(HankelPartition {
        up: hu.matrix.rows(0, m * t_ini).into_owned(),
        uf: hu.matrix.rows(m * t_ini, m * horizon).into_owned(),
        yp: hy.matrix.rows(0, p * t_ini).into_owned(),
        yf: hy.matrix.rows(p * t_ini, p * horizon).into_owned(),
        input_dim: m,
        output_dim: p,
        t_ini,
        horizon,
    })
}

/// Checks whether `inputs` (`m × T`) is persistently exciting of `order`.
///
/// Returns the flag together with the numerical rank of the order-`order`
/// Hankel matrix.
pub fn is_persistently_exciting(inputs: &DMatrix<f64>, order: usize) -> Result<(bool, usize)> {
    let hankel = build_hankel(inputs, order)?;
    let rank = linalg::numerical_rank(hankel.matrix());
    Ok((rank == hankel.matrix.nrows(), rank))
}

/// Least-squares membership test for the span of `[H_L(u); H_L(y)]`.
///
/// The SVD of the stacked matrix is computed once, so many trajectories can
/// be checked against the same data.
pub struct RepresentabilityTest {
    input_rows: usize,
    output_rows: usize,
    basis: DMatrix<f64>,
}

impl RepresentabilityTest {
    pub fn new(hu: &BlockHankel, hy: &BlockHankel) -> Result<Self> {
        if hu.depth != hy.depth || hu.ncols() != hy.ncols() {
            return Err(invalid!(
                "input Hankel ({} deep, {} cols) and output Hankel ({} deep, {} cols) disagree",
                hu.depth,
                hu.ncols(),
                hy.depth,
                hy.ncols()
            ));
        }
        let stacked = linalg::vstack(&[hu.matrix(), hy.matrix()]);
        let rows = stacked.nrows();
        let cols = stacked.ncols();
        let svd = SVD::new(stacked, true, false);
        let tol = linalg::rank_tolerance(svd.singular_values.as_slice(), rows, cols);
        let u = svd
            .u
            .ok_or_else(|| Error::Numerical("SVD did not return left vectors".into()))?;
        let keep: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, s)| **s > tol)
            .map(|(i, _)| i)
            .collect();
        let basis = u.select_columns(keep.iter());
        Ok(Self {
            input_rows: hu.matrix.nrows(),
            output_rows: hy.matrix.nrows(),
            basis,
        })
    }

    /// `min_g ‖[H_u; H_y] g − [u; y]‖₂` for a length-`L` trajectory given as
    /// `m × L` and `p × L` matrices.
    pub fn residual(&self, traj_u: &DMatrix<f64>, traj_y: &DMatrix<f64>) -> Result<f64> {
        if traj_u.len() != self.input_rows || traj_y.len() != self.output_rows {
            return Err(invalid!(
                "trajectory sizes ({}, {}) do not match Hankel rows ({}, {})",
                traj_u.len(),
                traj_y.len(),
                self.input_rows,
                self.output_rows
            ));
        }
        let mut w = DVector::zeros(self.input_rows + self.output_rows);
        w.rows_mut(0, self.input_rows)
            .copy_from_slice(traj_u.as_slice());
        w.rows_mut(self.input_rows, self.output_rows)
            .copy_from_slice(traj_y.as_slice());
        let coeffs = self.basis.tr_mul(&w);
        let projected = &self.basis * coeffs;
        Ok((w - projected).norm())
    }
}

/// One-shot form of [`RepresentabilityTest::residual`].
pub fn representability_residual(
    hu: &BlockHankel,
    hy: &BlockHankel,
    traj_u: &DMatrix<f64>,
    traj_y: &DMatrix<f64>,
) -> Result<f64> {
    RepresentabilityTest::new(hu, hy)?.residual(traj_u, traj_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use std::vec;

    #[test]
    fn hankel_of_short_scalar_signal() {
        let s = dmatrix![1.0, 2.0, 3.0, 4.0];
        let h = build_hankel(&s, 2).unwrap();
        assert_eq!(h.matrix(), &dmatrix![1.0, 2.0, 3.0; 2.0, 3.0, 4.0]);
    }

    #[test]
    fn hankel_identity_case() {
        let s = dmatrix![7.5];
        let h = build_hankel(&s, 1).unwrap();
        assert_eq!(h.matrix(), &dmatrix![7.5]);
    }

    #[test]
    fn depth_beyond_length_names_both_values() {
        let s = dmatrix![1.0, 2.0, 3.0];
        let err = build_hankel(&s, 5).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains('5') && msg.contains('3'), "{msg}");
    }

    #[test]
    fn pe_of_constant_and_impulse() {
        let c = dmatrix![5.0, 5.0, 5.0, 5.0, 5.0];
        assert_eq!(is_persistently_exciting(&c, 2).unwrap(), (false, 1));
        let imp = dmatrix![1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(is_persistently_exciting(&imp, 2).unwrap(), (false, 1));
    }

    #[test]
    fn scalar_partition_unrolled() {
        let s = DMatrix::from_fn(1, 10, |_, j| (j + 1) as f64);
        let h = build_hankel(&s, 2).unwrap();
        let part = partition_past_future(&h, &h, 1, 1).unwrap();
        let past: Vec<f64> = part.up.iter().copied().collect();
        let future: Vec<f64> = part.uf.iter().copied().collect();
        assert_eq!(past, (1..=9).map(f64::from).collect::<Vec<_>>());
        assert_eq!(future, (2..=10).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn partition_rejects_zero_past_window() {
        let s = DMatrix::from_fn(1, 10, |_, j| j as f64);
        let h = build_hankel(&s, 3).unwrap();
        assert!(partition_past_future(&h, &h, 0, 3).is_err());
        assert!(partition_past_future(&h, &h, 1, 1).is_err());
    }

    #[test]
    fn partition_rejects_column_mismatch() {
        let a = DMatrix::from_fn(1, 10, |_, j| j as f64);
        let b = DMatrix::from_fn(1, 11, |_, j| j as f64);
        let ha = build_hankel(&a, 3).unwrap();
        let hb = build_hankel(&b, 3).unwrap();
        assert!(partition_past_future(&ha, &hb, 1, 2).is_err());
    }

    #[test]
    fn column_and_zero_trajectories_are_representable() {
        let u = DMatrix::from_fn(2, 40, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0);
        let y = DMatrix::from_fn(1, 40, |_, j| ((j * j) % 17) as f64);
        let hu = build_hankel(&u, 4).unwrap();
        let hy = build_hankel(&y, 4).unwrap();
        let test = RepresentabilityTest::new(&hu, &hy).unwrap();
        let col_u = DMatrix::from_column_slice(2, 4, hu.matrix().column(9).as_slice());
        let col_y = DMatrix::from_column_slice(1, 4, hy.matrix().column(9).as_slice());
        assert!(test.residual(&col_u, &col_y).unwrap() <= 1e-10);
        let zu = DMatrix::zeros(2, 4);
        let zy = DMatrix::zeros(1, 4);
        assert_eq!(test.residual(&zu, &zy).unwrap(), 0.0);
        assert!(test.residual(&DMatrix::zeros(2, 3), &zy).is_err());
    }

    #[test]
    fn dataset_rejects_length_mismatch() {
        let u = DMatrix::zeros(1, 5);
        let y = DMatrix::zeros(2, 4);
        assert!(TrajectoryDataset::new(u, y, 0.1).is_err());
    }
}
