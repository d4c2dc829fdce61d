//! Second-order cone programming.
//!
//! Problems are held in the standard form
//!
//! ```text
//! minimize    c^T x
//! subject to  A x + s = b,   s in K = K_1 x ... x K_r
//! ```
//!
//! where every `K_i` is a zero cone, a nonnegative orthant or a second-order
//! cone `{ (s0, s1) : s0 >= ||s1|| }`, and the cones partition the rows of
//! `A` in order. The dual is
//!
//! ```text
//! maximize   -b^T y
//! subject to  A^T y + c = 0,   y in K*
//! ```
//!
//! Complex quantities are realified as `v -> [Re v; Im v]`. Under that map
//! `Re(h^H w) = [Re h; Im h]^T [Re w; Im w]` and
//! `Im(h^H w) = [-Im h; Re h]^T [Re w; Im w]`.

mod builders;
mod cone;
mod dump;
mod ipm;

pub use builders::{build_centralized, build_local, solve_centralized, CentralizedMap, LocalMap};
pub use dump::{read_debug_dump, write_debug_dump};
pub use ipm::{kkt_residuals, solve};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One block of rows of a cone program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Zero(usize),
    NonNeg(usize),
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::SecondOrder(n) => n,
        }
    }
}

/// Standard-form cone program data.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub cones: Vec<Cone>,
}

impl ConeProgram {
    pub fn new(c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>, cones: Vec<Cone>) -> Result<Self> {
        let prog = Self { c, a, b, cones };
        prog.validate()?;
        Ok(prog)
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let rows: usize = self.cones.iter().map(Cone::dim).sum();
        if self.a.nrows() != self.b.len() || self.a.ncols() != self.c.len() || rows != self.b.len() {
            return Err(Error::Dimension(format!(
                "A is {}x{}, b has {} rows, c has {} entries, cones cover {} rows",
                self.a.nrows(),
                self.a.ncols(),
                self.b.len(),
                self.c.len(),
                rows
            )));
        }
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !finite(self.c.as_slice()) {
            return Err(Error::NonFinite("objective vector"));
        }
        if !finite(self.a.as_slice()) {
            return Err(Error::NonFinite("constraint matrix"));
        }
        if !finite(self.b.as_slice()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        Ok(())
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative primal and dual residual tolerance.
    pub feas_tol: f64,
    /// Relative duality gap tolerance.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Fraction of the step to the cone boundary taken each iteration.
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            step_fraction: 0.99,
        }
    }
}

impl SolverOptions {
    /// Both tolerances set to `tol`.
    pub fn with_tol(tol: f64) -> Self {
        Self {
            feas_tol: tol,
            gap_tol: tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// `y` holds a certificate: `A^T y = 0`, `y in K*`, `b^T y = -1`.
    Infeasible,
    /// `x` holds a certificate: `-A x in K`, `c^T x = -1`.
    Unbounded,
    MaxIterations,
}

/// Relative KKT residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub y: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residuals: Residuals,
}
