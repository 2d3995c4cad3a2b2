//! Univariate spline spaces on uniform knots: construction, basis and
//! derivative evaluation, Greville abscissae and Gauss-Legendre quadrature
//! grids.
//!
//! Only uniform knot vectors are supported. Periodic spaces have dimension
//! `n_cells` and require `n_cells > degree`; clamped spaces use open
//! (repeated-end) knots and have dimension `n_cells + degree`. Degree-0
//! spaces use cell midpoints as Greville points so interpolation degrees of
//! freedom exist for every factor space.

use crate::{Error, Real, Result};

/// Boundary treatment of a univariate space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Boundary {
    /// Wrap-around splines on a circle; dimension equals the cell count.
    Periodic,
    /// Open knot vector; end basis functions are interpolatory at the ends.
    Clamped,
}

/// A univariate spline space on uniform knots.
#[derive(Debug, Clone)]
pub struct SplineSpace1D {
    /// Polynomial degree of the splines.
    pub degree: usize,
    /// Number of knot cells in `[a, b]`.
    pub n_cells: usize,
    /// Boundary treatment.
    pub boundary: Boundary,
    /// Left end of the domain.
    pub a: Real,
    /// Right end of the domain.
    pub b: Real,
    /// Uniform cell width.
    pub h: Real,
    /// Number of basis functions.
    pub dim: usize,
    /// Knot vector. Clamped: the open vector of length `n_cells + 2 degree + 1`.
    /// Periodic: the extended uniform vector `t_j = a + (j - degree) h`
    /// covering all cells touched by wrapped basis functions.
    pub knots: Vec<Real>,
    /// Greville abscissae, one per basis function, strictly increasing.
    pub greville: Vec<Real>,
}

/// Index offset mapping periodic basis indices to extended-knot indices.
///
/// Periodic basis function `i` is the extended basis function `i + offset`
/// (mod wrapping), chosen so Greville points land on knots for odd degrees
/// and on cell midpoints for even degrees.
fn periodic_offset(degree: usize) -> usize {
    degree.saturating_sub(1).div_ceil(2)
}

impl SplineSpace1D {
    /// Builds a uniform spline space.
    ///
    /// Periodic spaces require `n_cells > degree`.
    pub fn build(
        degree: usize,
        n_cells: usize,
        boundary: Boundary,
        interval: (Real, Real),
    ) -> Result<Self> {
        let (a, b) = interval;
        if n_cells == 0 {
            return Err(Error::Config("spline space needs at least one cell".into()));
        }
        if !(b > a) {
            return Err(Error::Config(format!(
                "invalid interval [{a}, {b}]: length must be positive"
            )));
        }
        if boundary == Boundary::Periodic && n_cells <= degree {
            return Err(Error::Config(format!(
                "periodic space of degree {degree} needs more than {degree} cells, got {n_cells}"
            )));
        }
        let h = (b - a) / n_cells as Real;
        let (dim, knots) = match boundary {
            Boundary::Periodic => {
                let dim = n_cells;
                // Extended uniform knots; index j corresponds to a + (j - degree) h.
                let n_knots = n_cells + 3 * degree + 2;
                let knots = (0..n_knots)
                    .map(|j| a + (j as Real - degree as Real) * h)
                    .collect();
                (dim, knots)
            }
            Boundary::Clamped => {
                let dim = n_cells + degree;
                let mut knots = Vec::with_capacity(n_cells + 2 * degree + 1);
                for _ in 0..=degree {
                    knots.push(a);
                }
                for j in 1..n_cells {
                    knots.push(a + j as Real * h);
                }
                for _ in 0..=degree {
                    knots.push(b);
                }
                (dim, knots)
            }
        };
        let mut space = SplineSpace1D {
            degree,
            n_cells,
            boundary,
            a,
            b,
            h,
            dim,
            knots,
            greville: Vec::new(),
        };
        space.greville = space.compute_greville();
        Ok(space)
    }

    /// Domain length.
    pub fn length(&self) -> Real {
        self.b - self.a
    }

    fn compute_greville(&self) -> Vec<Real> {
        let q = self.degree;
        match self.boundary {
            Boundary::Periodic => {
                let ofs = periodic_offset(q) as Real;
                (0..self.dim)
                    .map(|i| self.a + self.h * (i as Real + ofs - (q as Real - 1.0) / 2.0))
                    .collect()
            }
            Boundary::Clamped => {
                if q == 0 {
                    (0..self.dim)
                        .map(|i| self.a + (i as Real + 0.5) * self.h)
                        .collect()
                } else {
                    (0..self.dim)
                        .map(|i| {
                            let sum: Real = self.knots[i + 1..=i + q].iter().sum();
                            sum / q as Real
                        })
                        .collect()
                }
            }
        }
    }

    /// Greville abscissae (averages of `degree` consecutive interior knots;
    /// cell midpoints for degree 0).
    pub fn greville_points(&self) -> &[Real] {
        &self.greville
    }

    /// Evaluates the `degree + 1` basis functions (or first derivatives)
    /// that are nonzero at `x`.
    ///
    /// Returns `(indices, values)` where indices are global basis indices
    /// (wrapped modulo the dimension for periodic spaces).
    pub fn eval_basis(&self, x: Real, deriv_order: usize) -> Result<(Vec<usize>, Vec<Real>)> {
        if deriv_order > 1 {
            return Err(Error::Config(format!(
                "derivative order {deriv_order} not supported (0 or 1)"
            )));
        }
        let tol = 1e-12 * (self.b - self.a).abs();
        if x < self.a - tol || x > self.b + tol {
            return Err(Error::Domain(format!(
                "x = {x} outside [{}, {}]",
                self.a, self.b
            )));
        }
        let x = x.clamp(self.a, self.b);
        let q = self.degree;
        // Cell index, mapping the right endpoint into the last cell.
        let mut cell = ((x - self.a) / self.h).floor() as isize;
        cell = cell.clamp(0, self.n_cells as isize - 1);
        let cell = cell as usize;

        match self.boundary {
            Boundary::Periodic => {
                // Extended basis functions nonzero on cell c are c..=c+q
                // (extended index i spans knots [a+(i-q)h, a+(i+1)h]).
                // Knot-vector index of extended basis i is also i because
                // knots[j] = a + (j - q) h.
                let vals = de_boor_row(&self.knots, q, cell + q, x, deriv_order);
                let ofs = periodic_offset(q);
                let idx = (0..=q)
                    .map(|r| {
                        let ext = cell + r;
                        (ext + self.dim - (ofs % self.dim)) % self.dim
                    })
                    .collect();
                Ok((idx, vals))
            }
            Boundary::Clamped => {
                // Knot span containing x: for the open vector, span index
                // is cell + degree.
                let vals = de_boor_row(&self.knots, q, cell + q, x, deriv_order);
                let idx = (0..=q).map(|r| cell + r).collect();
                Ok((idx, vals))
            }
        }
    }

    /// Applies the derivative map into the degree-lowered space.
    ///
    /// For a space of degree `q >= 1`, the derivative of a spline with
    /// coefficients `c` expands exactly in the degree-`(q-1)` space on the
    /// same knots; this returns those coefficients. Degree-0 spaces (the
    /// trivialized factors) return a zero vector of the same length.
    pub fn derivative_coeffs(&self, c: &[Real]) -> Vec<Real> {
        assert_eq!(c.len(), self.dim, "coefficient length mismatch");
        let q = self.degree;
        if q == 0 {
            return vec![0.0; self.dim];
        }
        match self.boundary {
            Boundary::Periodic => {
                let n = self.dim;
                // Shift aligning this degree's periodic indexing with the
                // degree-(q-1) convention on the same cells.
                let s = periodic_offset(q - 1) + 1 - periodic_offset(q);
                (0..n)
                    .map(|k| (c[(k + s) % n] - c[(k + s + n - 1) % n]) / self.h)
                    .collect()
            }
            Boundary::Clamped => (0..self.dim - 1)
                .map(|i| {
                    let span = self.knots[i + q + 1] - self.knots[i + 1];
                    q as Real * (c[i + 1] - c[i]) / span
                })
                .collect(),
        }
    }

    /// Dimension of the image space of [`Self::derivative_coeffs`].
    pub fn derivative_dim(&self) -> usize {
        match (self.degree, self.boundary) {
            (0, _) => self.dim,
            (_, Boundary::Periodic) => self.dim,
            (_, Boundary::Clamped) => self.dim - 1,
        }
    }

    /// Gauss-Legendre quadrature grid with `n_gauss` nodes per cell.
    pub fn quadrature_grid(&self, n_gauss: usize) -> Result<QuadratureGrid> {
        if n_gauss == 0 {
            return Err(Error::Config("quadrature needs at least one node".into()));
        }
        let (ref_nodes, ref_weights) = gauss_legendre(n_gauss);
        let mut nodes = Vec::with_capacity(self.n_cells * n_gauss);
        let mut weights = Vec::with_capacity(self.n_cells * n_gauss);
        for cell in 0..self.n_cells {
            let lo = self.a + cell as Real * self.h;
            let mid = lo + 0.5 * self.h;
            let half = 0.5 * self.h;
            for g in 0..n_gauss {
                nodes.push(mid + half * ref_nodes[g]);
                weights.push(half * ref_weights[g]);
            }
        }
        Ok(QuadratureGrid {
            n_cells: self.n_cells,
            n_gauss,
            nodes,
            weights,
        })
    }
}

/// Gauss-Legendre nodes and weights for each cell of a univariate space.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    /// Number of cells.
    pub n_cells: usize,
    /// Nodes per cell.
    pub n_gauss: usize,
    /// Node positions, cell-major (`n_cells * n_gauss`).
    pub nodes: Vec<Real>,
    /// Weights matching `nodes`; per-cell weights sum to the cell length.
    pub weights: Vec<Real>,
}

/// One row of the B-spline basis (all functions nonzero at `x`), by the
/// Cox-de Boor recursion on an arbitrary knot vector.
///
/// `span` is the knot index with `knots[span] <= x < knots[span + 1]`.
/// Returns the `degree + 1` values of basis functions
/// `span - degree ..= span`, or their first derivatives.
fn de_boor_row(knots: &[Real], degree: usize, span: usize, x: Real, deriv_order: usize) -> Vec<Real> {
    let q = degree;
    if deriv_order == 1 {
        if q == 0 {
            return vec![0.0];
        }
        // d/dx N_{i,q} = q (N_{i,q-1}/(t_{i+q}-t_i) - N_{i+1,q-1}/(t_{i+q+1}-t_{i+1})).
        let lower = de_boor_row(knots, q - 1, span, x, 0);
        let mut out = vec![0.0; q + 1];
        for r in 0..=q {
            let i = span - q + r;
            let mut val = 0.0;
            // Lower-degree row covers indices span-q+1 ..= span.
            if r >= 1 {
                let denom = knots[i + q] - knots[i];
                if denom > 0.0 {
                    val += lower[r - 1] / denom;
                }
            }
            if r <= q - 1 {
                let denom = knots[i + q + 1] - knots[i + 1];
                if denom > 0.0 {
                    val -= lower[r] / denom;
                }
            }
            out[r] = q as Real * val;
        }
        return out;
    }
    let mut vals = vec![0.0; q + 1];
    vals[0] = 1.0;
    let mut left = vec![0.0; q + 1];
    let mut right = vec![0.0; q + 1];
    for j in 1..=q {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom > 0.0 { vals[r] / denom } else { 0.0 };
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    vals
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre polynomial, with the Chebyshev-based
/// initial guess; accurate to machine precision for `n <= 64`.
pub fn gauss_legendre(n: usize) -> (Vec<Real>, Vec<Real>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Initial guess: Chebyshev-like approximation of the i-th root.
        let mut x = (std::f64::consts::PI * (i as Real + 0.75) / (n as Real + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre value and derivative by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as Real * x * p1 - (k - 1) as Real * p0) / k as Real;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as Real * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        // Exact center for odd counts.
        nodes[n / 2] = 0.0;
        let mut p0 = 1.0;
        let mut p1: Real = 0.0;
        for k in 2..=n {
            let p2 = -((k - 1) as Real * p0) / k as Real;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as Real * (0.0 * p1 - p0) / (0.0 - 1.0);
        weights[n / 2] = 2.0 / (dp * dp);
    }
    (nodes, weights)
}
