//! SVD condensation of the stacked Hankel matrix.
//!
//! The joint matrix `H = [Up; Uf; Yp; Yf]` is factored as `W Σ Vᵀ` and
//! truncated to `H̄ = W₁ Σ₁` (`q₁ × r`). Any `g` in the row space of `H`
//! maps to `ḡ = V₁ᵀ g` with `H g = H̄ ḡ` and `‖g‖ = ‖ḡ‖`.

use nalgebra::{DMatrix, DVector, SVD};

use crate::datasets::HankelPartition;
use crate::error::{invalid, Error, Result};
use crate::linalg;

/// Energy fraction used when no explicit rank is requested.
pub const DEFAULT_ENERGY_FRACTION: f64 = 0.999;

/// Rank-`r` condensed data matrix with the `[Up; Uf; Yp; Yf]` row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdCondensed {
    condensed: DMatrix<f64>,
    singular_values: DVector<f64>,
    rank_used: usize,
    input_dim: usize,
    output_dim: usize,
    t_ini: usize,
    horizon: usize,
}

impl SvdCondensed {
    /// `H̄ = W₁Σ₁`, shape `q₁ × r`.
    pub fn condensed(&self) -> &DMatrix<f64> {
        &self.condensed
    }

    /// Full spectrum of the stacked Hankel, descending.
    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn rank_used(&self) -> usize {
        self.rank_used
    }

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

    /// Row blocks `(Ūp, Ūf, Ȳp, Ȳf)` of the condensed matrix.
    pub fn blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (m, p) = (self.input_dim, self.output_dim);
        let sizes = [
            m * self.t_ini,
            m * self.horizon,
            p * self.t_ini,
            p * self.horizon,
        ];
        let mut at = 0;
        let mut take = |rows: usize| {
            let b = self.condensed.rows(at, rows).into_owned();
            at += rows;
            b
        };
        (
            take(sizes[0]),
            take(sizes[1]),
            take(sizes[2]),
            take(sizes[3]),
        )
    }

    /// Numerical rank of the stacked Hankel under the standard tolerance.
    pub fn numerical_rank(&self) -> usize {
        let rows = self.condensed.nrows();
        let cols = self.singular_values.len().max(rows);
        let tol = linalg::rank_tolerance(self.singular_values.as_slice(), rows, cols);
        self.singular_values.iter().filter(|s| **s > tol).count()
    }
}

/// Thin SVD of the stacked partition, truncated to `rank` columns.
pub fn factorize_and_condense(partition: &HankelPartition, rank: usize) -> Result<SvdCondensed> {
    let stacked = partition.stacked();
    let (q1, q2) = stacked.shape();
    let max_rank = q1.min(q2);
    if rank == 0 || rank > max_rank {
        return Err(invalid!("rank {rank} outside 1..={max_rank}"));
    }
    let mut svd = SVD::try_new(stacked.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of stacked Hankel did not converge".into()))?;
    // nalgebra does not guarantee ordering.
    svd.sort_by_singular_values();
    let w = svd.u.as_ref().expect("left vectors requested");
    let mut condensed = w.columns(0, rank).into_owned();
    for (j, mut col) in condensed.column_iter_mut().enumerate() {
        col *= svd.singular_values[j];
    }

    #[cfg(debug_assertions)]
    {
        let v_t = svd.v_t.as_ref().expect("right vectors requested");
        let via_v = &stacked * v_t.rows(0, rank).transpose();
        let scale = condensed.norm().max(f64::MIN_POSITIVE);
        debug_assert!(
            (&via_v - &condensed).norm() / scale <= 1e-9,
            "H V1 and W1 Σ1 disagree"
        );
    }

    Ok(SvdCondensed {
        condensed,
        singular_values: svd.singular_values,
        rank_used: rank,
        input_dim: partition.input_dim(),
        output_dim: partition.output_dim(),
        t_ini: partition.t_ini(),
        horizon: partition.horizon(),
    })
}

/// Same as [`factorize_and_condense`] but picks `r` with [`select_rank`].
pub fn condense_by_energy(
    partition: &HankelPartition,
    energy_fraction: f64,
) -> Result<SvdCondensed> {
    let mut svd = SVD::new(partition.stacked(), false, false);
    svd.sort_by_singular_values();
    let spectrum = svd.singular_values;
    let rank = select_rank(spectrum.as_slice(), energy_fraction)?;
    factorize_and_condense(partition, rank)
}

/// Smallest `r` whose leading singular values hold `energy_fraction` of the
/// total squared spectrum.
pub fn select_rank(singular_values: &[f64], energy_fraction: f64) -> Result<usize> {
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(invalid!("energy fraction {energy_fraction} outside (0, 1]"));
    }
    if singular_values.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(invalid!("singular values must be finite and nonnegative"));
    }
    if singular_values.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid!(
            "singular values must be sorted in descending order"
        ));
    }
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate(
            "singular spectrum is identically zero".into(),
        ));
    }
    let mut acc = 0.0;
    for (i, s) in singular_values.iter().enumerate() {
        acc += s * s;
        if acc >= energy_fraction * total {
            return Ok(i + 1);
        }
    }
    // Rounding can leave acc a hair under total when energy_fraction == 1.
    Ok(singular_values
        .iter()
        .rposition(|s| *s > 0.0)
        .map_or(1, |i| i + 1))
}
