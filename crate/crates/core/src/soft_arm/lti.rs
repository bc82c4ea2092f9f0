//! Discrete-time state-space plant `x⁺ = Ax + Bu`, `y = Cx + Du`.

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    x: DVector<f64>,
}

impl LtiPlant {
    /// Validates dimensions only.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(invalid!(
                "A must be square and nonempty, got {}x{}",
                n,
                a.ncols()
            ));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(invalid!(
                "B is {}x{}, expected {n}xm with m > 0",
                b.nrows(),
                b.ncols()
            ));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(invalid!(
                "C is {}x{}, expected px{n} with p > 0",
                c.nrows(),
                c.ncols()
            ));
        }
        if d.shape() != (c.nrows(), b.ncols()) {
            return Err(invalid!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            ));
        }
        if x0.len() != n {
            return Err(invalid!(
                "initial state has length {}, expected {n}",
                x0.len()
            ));
        }
        Ok(Self { a, b, c, d, x: x0 })
    }

    /// Like [`LtiPlant::new`] but also requires `(A, B)` controllable and
    /// `(A, C)` observable.
    pub fn new_minimal(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let plant = Self::new(a, b, c, d, x0)?;
        if !plant.is_controllable() {
            return Err(Error::Degenerate("(A, B) is not controllable".into()));
        }
        if !plant.is_observable() {
            return Err(Error::Degenerate("(A, C) is not observable".into()));
        }
        Ok(plant)
    }

    /// Random minimal plant with spectral radius at most `max_radius`.
    pub fn random<R: Rng + ?Sized>(
        n: usize,
        m: usize,
        p: usize,
        max_radius: f64,
        rng: &mut R,
    ) -> Result<Self> {
        for _ in 0..100 {
            let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let radius = a
                .complex_eigenvalues()
                .iter()
                .map(|e| e.re.hypot(e.im))
                .fold(0.0, f64::max);
            if radius > max_radius {
                a *= max_radius / radius;
            }
            let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let c = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
            let d = DMatrix::zeros(p, m);
            if let Ok(plant) = Self::new_minimal(a, b, c, d, DVector::zeros(n)) {
                return Ok(plant);
            }
        }
        Err(Error::Degenerate("could not draw a minimal plant".into()))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn set_state(&mut self, x: DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(invalid!(
                "state has length {}, expected {}",
                x.len(),
                self.state_dim()
            ));
        }
        self.x = x;
        Ok(())
    }

    /// Returns `y = Cx + Du` from the pre-update state, then advances `x`.
    pub fn step(&mut self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.input_dim() {
            return Err(invalid!(
                "input has length {}, expected {}",
                u.len(),
                self.input_dim()
            ));
        }
        let y = &self.c * &self.x + &self.d * u;
        self.x = &self.a * &self.x + &self.b * u;
        Ok(y)
    }

    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut blocks = alloc::vec::Vec::with_capacity(n);
        let mut ak_b = self.b.clone();
        for _ in 0..n {
            let next = &self.a * &ak_b;
            blocks.push(core::mem::replace(&mut ak_b, next));
        }
        let refs: alloc::vec::Vec<_> = blocks.iter().map(|b| b.transpose()).collect();
        let refs: alloc::vec::Vec<_> = refs.iter().collect();
        linalg::vstack(&refs).transpose()
    }

    pub fn observability_matrix(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut blocks = alloc::vec::Vec::with_capacity(n);
        let mut c_ak = self.c.clone();
        for _ in 0..n {
            let next = &c_ak * &self.a;
            blocks.push(core::mem::replace(&mut c_ak, next));
        }
        let refs: alloc::vec::Vec<_> = blocks.iter().collect();
        linalg::vstack(&refs)
    }

    pub fn is_controllable(&self) -> bool {
        linalg::numerical_rank(&self.controllability_matrix()) == self.state_dim()
    }

    pub fn is_observable(&self) -> bool {
        linalg::numerical_rank(&self.observability_matrix()) == self.state_dim()
    }
}
