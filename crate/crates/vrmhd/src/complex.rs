//! Tensor-product De Rham complex on spline spaces.
//!
//! Builds the scalar and vector spaces `V0 -> V1 -> V2 -> V3` (plus the
//! velocity space `X = (V0)^3`), the strong differential operators
//! `grad`, `curl`, `div` acting on coefficient vectors, and the commuting
//! projectors based on interpolation (value degrees of freedom) and
//! histopolation (integrals between consecutive Greville points).
//!
//! The implementation is always a 3D tensor product; 1D and 2D problems
//! trivialize unused directions with a single periodic degree-0 cell on
//! `[0, 1]`, whose derivative map is identically zero. Per direction the
//! complex carries a fine factor of degree `p + 1` and a coarse factor of
//! degree `p`; each space component selects one factor per direction:
//! `V0` is fine everywhere, component `c` of `V1` is coarse in direction `c`
//! only, component `c` of `V2` is fine in direction `c` only, and `V3` is
//! coarse everywhere.

use nalgebra::{DMatrix, Dyn};

use crate::splines::{Boundary, SplineSpace1D};
use crate::{Error, Real, Result};

/// Tag identifying which space a coefficient vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SpaceTag {
    /// Scalar fine space (potentials).
    V0,
    /// Edge-type vector space (domain of the curl).
    V1,
    /// Face-type vector space (magnetic flux density).
    V2,
    /// Scalar coarse space (densities).
    V3,
    /// Velocity space, three copies of `V0`.
    X,
}

impl SpaceTag {
    /// Number of vector components of the space.
    pub fn n_components(self) -> usize {
        match self {
            SpaceTag::V0 | SpaceTag::V3 => 1,
            SpaceTag::V1 | SpaceTag::V2 | SpaceTag::X => 3,
        }
    }

    /// Factor selection per direction for one component: `true` picks the
    /// fine (degree `p + 1`) factor, `false` the coarse (degree `p`) one.
    pub fn mask(self, comp: usize) -> [bool; 3] {
        match self {
            SpaceTag::V0 | SpaceTag::X => [true, true, true],
            SpaceTag::V3 => [false, false, false],
            SpaceTag::V1 => {
                let mut m = [true, true, true];
                m[comp] = false;
                m
            }
            SpaceTag::V2 => {
                let mut m = [false, false, false];
                m[comp] = true;
                m
            }
        }
    }

    /// Short name for error messages.
    pub fn name(self) -> &'static str {
        match self {
            SpaceTag::V0 => "V0",
            SpaceTag::V1 => "V1",
            SpaceTag::V2 => "V2",
            SpaceTag::V3 => "V3",
            SpaceTag::X => "X",
        }
    }
}

/// A coefficient vector tagged with its space.
///
/// Vector-valued spaces store their component blocks concatenated; block
/// offsets depend on the complex that created the field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    /// Which space the coefficients belong to.
    pub space_tag: SpaceTag,
    /// Concatenated component coefficient blocks.
    pub coeffs: Vec<Real>,
}

/// Sparse rows mapping a coefficient (or point) axis to an evaluation
/// (or degree-of-freedom) axis; CSR layout.
#[derive(Debug, Clone)]
pub(crate) struct AxisTable {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<u32>,
    pub idx: Vec<u32>,
    pub val: Vec<Real>,
}

fn split_dims(dims: [usize; 3], axis: usize) -> (usize, usize, usize) {
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

impl AxisTable {
    /// Contracts `inp` along `axis` with the table rows:
    /// `out[.., r, ..] = sum_c T[r, c] inp[.., c, ..]`.
    pub fn forward_axis(&self, inp: &[Real], dims: [usize; 3], axis: usize) -> (Vec<Real>, [usize; 3]) {
        let (outer, mid, inner) = split_dims(dims, axis);
        assert_eq!(mid, self.n_cols, "axis {axis} length mismatch");
        assert_eq!(inp.len(), outer * mid * inner);
        let mut out_dims = dims;
        out_dims[axis] = self.n_rows;
        let mut out = vec![0.0; outer * self.n_rows * inner];
        for o in 0..outer {
            let in_base = o * mid * inner;
            let out_base = o * self.n_rows * inner;
            for r in 0..self.n_rows {
                let (lo, hi) = (self.row_ptr[r] as usize, self.row_ptr[r + 1] as usize);
                let out_row = &mut out[out_base + r * inner..out_base + (r + 1) * inner];
                for e in lo..hi {
                    let c = self.idx[e] as usize;
                    let v = self.val[e];
                    let in_row = &inp[in_base + c * inner..in_base + (c + 1) * inner];
                    for (t, &x) in in_row.iter().enumerate() {
                        out_row[t] += v * x;
                    }
                }
            }
        }
        (out, out_dims)
    }

    /// Adjoint contraction: `out[.., c, ..] = sum_r T[r, c] inp[.., r, ..]`.
    pub fn adjoint_axis(&self, inp: &[Real], dims: [usize; 3], axis: usize) -> (Vec<Real>, [usize; 3]) {
        let (outer, mid, inner) = split_dims(dims, axis);
        assert_eq!(mid, self.n_rows, "axis {axis} length mismatch");
        assert_eq!(inp.len(), outer * mid * inner);
        let mut out_dims = dims;
        out_dims[axis] = self.n_cols;
        let mut out = vec![0.0; outer * self.n_cols * inner];
        for o in 0..outer {
            let in_base = o * mid * inner;
            let out_base = o * self.n_cols * inner;
            for r in 0..self.n_rows {
                let (lo, hi) = (self.row_ptr[r] as usize, self.row_ptr[r + 1] as usize);
                let in_row = &inp[in_base + r * inner..in_base + (r + 1) * inner];
                for e in lo..hi {
                    let c = self.idx[e] as usize;
                    let v = self.val[e];
                    let out_row = &mut out[out_base + c * inner..out_base + (c + 1) * inner];
                    for (t, &x) in in_row.iter().enumerate() {
                        out_row[t] += v * x;
                    }
                }
            }
        }
        (out, out_dims)
    }
}

/// Univariate derivative map from the fine factor into the coarse factor,
/// applied along one tensor axis.
#[derive(Debug, Clone)]
pub(crate) enum AxisDeriv {
    /// Trivialized direction: the zero map on a one-dimensional factor.
    Zero { n: usize },
    /// Periodic difference `(Dc)_k = (c_{k+s} - c_{k+s-1}) / h` (indices mod n).
    Periodic { n: usize, s: usize, inv_h: Real },
    /// Clamped difference `(Dc)_i = scale_i (c_{i+1} - c_i)`, output length `n - 1`.
    Clamped { n_in: usize, scale: Vec<Real> },
}

impl AxisDeriv {
    fn from_fine(fine: &SplineSpace1D) -> AxisDeriv {
        let q = fine.degree;
        if q == 0 {
            return AxisDeriv::Zero { n: fine.dim };
        }
        match fine.boundary {
            Boundary::Periodic => {
                let ofs = |d: usize| d.saturating_sub(1).div_ceil(2);
                AxisDeriv::Periodic {
                    n: fine.dim,
                    s: ofs(q - 1) + 1 - ofs(q),
                    inv_h: 1.0 / fine.h,
                }
            }
            Boundary::Clamped => {
                let scale = (0..fine.dim - 1)
                    .map(|i| q as Real / (fine.knots[i + q + 1] - fine.knots[i + 1]))
                    .collect();
                AxisDeriv::Clamped {
                    n_in: fine.dim,
                    scale,
                }
            }
        }
    }

    pub fn dim_in(&self) -> usize {
        match self {
            AxisDeriv::Zero { n } => *n,
            AxisDeriv::Periodic { n, .. } => *n,
            AxisDeriv::Clamped { n_in, .. } => *n_in,
        }
    }

    pub fn dim_out(&self) -> usize {
        match self {
            AxisDeriv::Zero { n } => *n,
            AxisDeriv::Periodic { n, .. } => *n,
            AxisDeriv::Clamped { n_in, .. } => n_in - 1,
        }
    }

    /// Applies the derivative along `axis`.
    pub fn forward_axis(&self, inp: &[Real], dims: [usize; 3], axis: usize) -> (Vec<Real>, [usize; 3]) {
        let (outer, mid, inner) = split_dims(dims, axis);
        assert_eq!(mid, self.dim_in());
        let n_out = self.dim_out();
        let mut out_dims = dims;
        out_dims[axis] = n_out;
        let mut out = vec![0.0; outer * n_out * inner];
        match self {
            AxisDeriv::Zero { .. } => {}
            AxisDeriv::Periodic { n, s, inv_h } => {
                for o in 0..outer {
                    let ib = o * mid * inner;
                    let ob = o * n_out * inner;
                    for k in 0..*n {
                        let hi = (k + s) % n;
                        let lo = (k + s + n - 1) % n;
                        for t in 0..inner {
                            out[ob + k * inner + t] =
                                (inp[ib + hi * inner + t] - inp[ib + lo * inner + t]) * inv_h;
                        }
                    }
                }
            }
            AxisDeriv::Clamped { scale, .. } => {
                for o in 0..outer {
                    let ib = o * mid * inner;
                    let ob = o * n_out * inner;
                    for i in 0..n_out {
                        let sc = scale[i];
                        for t in 0..inner {
                            out[ob + i * inner + t] =
                                sc * (inp[ib + (i + 1) * inner + t] - inp[ib + i * inner + t]);
                        }
                    }
                }
            }
        }
        (out, out_dims)
    }

    /// Adjoint (transpose) of [`Self::forward_axis`].
    pub fn adjoint_axis(&self, inp: &[Real], dims: [usize; 3], axis: usize) -> (Vec<Real>, [usize; 3]) {
        let (outer, mid, inner) = split_dims(dims, axis);
        assert_eq!(mid, self.dim_out());
        let n_in = self.dim_in();
        let mut out_dims = dims;
        out_dims[axis] = n_in;
        let mut out = vec![0.0; outer * n_in * inner];
        match self {
            AxisDeriv::Zero { .. } => {}
            AxisDeriv::Periodic { n, s, inv_h } => {
                for o in 0..outer {
                    let ib = o * mid * inner;
                    let ob = o * n_in * inner;
                    for j in 0..*n {
                        let from_hi = (j + n - s) % n;
                        let from_lo = (j + 1 + n - s) % n;
                        for t in 0..inner {
                            out[ob + j * inner + t] = (inp[ib + from_hi * inner + t]
                                - inp[ib + from_lo * inner + t])
                                * inv_h;
                        }
                    }
                }
            }
            AxisDeriv::Clamped { n_in, scale } => {
                for o in 0..outer {
                    let ib = o * mid * inner;
                    let ob = o * n_in * inner;
                    for j in 0..*n_in {
                        for t in 0..inner {
                            let mut v = 0.0;
                            if j >= 1 {
                                v += scale[j - 1] * inp[ib + (j - 1) * inner + t];
                            }
                            if j + 1 < *n_in {
                                v -= scale[j] * inp[ib + j * inner + t];
                            }
                            out[ob + j * inner + t] = v;
                        }
                    }
                }
            }
        }
        (out, out_dims)
    }
}

/// Which factor a table refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FactorKind {
    Fine,
    Coarse,
}

/// Named evaluation point sets stored per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PointSet {
    /// Greville points of the fine factor (interpolation dofs).
    Greville,
    /// Gauss points of the histopolation segments (integral dofs).
    Histo,
    /// Assembly quadrature grid.
    Quad,
}

/// Specification of one nontrivial direction of the complex.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DirectionSpec {
    /// Coarse degree `p`; the fine factor has degree `p + 1`.
    pub degree: usize,
    /// Cell count.
    pub n_cells: usize,
    /// Boundary treatment (shared by both factors).
    pub boundary: Boundary,
    /// Domain interval.
    pub interval: (Real, Real),
}

/// All per-direction data: the two factor spaces, quadrature, evaluation
/// tables and factorized interpolation/histopolation systems.
pub(crate) struct Direction {
    pub fine: SplineSpace1D,
    pub coarse: SplineSpace1D,
    pub deriv: AxisDeriv,
    pub trivial: bool,
    /// Assembly quadrature nodes (cell-major) and weights.
    pub quad_pts: Vec<Real>,
    pub quad_w: Vec<Real>,
    /// Histopolation point list (Gauss nodes of all segment pieces, folded
    /// into the domain for periodic wrap) and the dof weight table
    /// (rows = coarse dofs, cols = histo points).
    pub histo_pts: Vec<Real>,
    pub histo_dof: AxisTable,
    /// Interpolation dof table (identity rows over the Greville list).
    pub grev_dof: AxisTable,
    /// Evaluation tables `[point set][factor][deriv]`.
    tables: [[[AxisTable; 2]; 2]; 3],
    /// Factorized interpolation system and its transpose.
    pub lu_interp: nalgebra::LU<Real, Dyn, Dyn>,
    pub lu_interp_t: nalgebra::LU<Real, Dyn, Dyn>,
    /// Factorized histopolation system and its transpose.
    pub lu_histo: nalgebra::LU<Real, Dyn, Dyn>,
    pub lu_histo_t: nalgebra::LU<Real, Dyn, Dyn>,
}

impl Direction {
    pub fn table(&self, pts: PointSet, factor: FactorKind, deriv: usize) -> &AxisTable {
        let p = match pts {
            PointSet::Greville => 0,
            PointSet::Histo => 1,
            PointSet::Quad => 2,
        };
        let f = match factor {
            FactorKind::Fine => 0,
            FactorKind::Coarse => 1,
        };
        &self.tables[p][f][deriv]
    }

    pub fn factor(&self, kind: FactorKind) -> &SplineSpace1D {
        match kind {
            FactorKind::Fine => &self.fine,
            FactorKind::Coarse => &self.coarse,
        }
    }

    /// Points of a named point set.
    pub fn points(&self, pts: PointSet) -> &[Real] {
        match pts {
            PointSet::Greville => self.fine.greville_points(),
            PointSet::Histo => &self.histo_pts,
            PointSet::Quad => &self.quad_pts,
        }
    }
}

/// Builds the CSR evaluation table of a factor space at a point list.
pub(crate) fn eval_table(space: &SplineSpace1D, pts: &[Real], deriv: usize) -> AxisTable {
    let mut row_ptr = Vec::with_capacity(pts.len() + 1);
    let mut idx = Vec::new();
    let mut val = Vec::new();
    row_ptr.push(0u32);
    for &x in pts {
        let (ids, vals) = space
            .eval_basis(x, deriv)
            .expect("table points lie inside the domain");
        // Periodic wrapping can alias indices for tiny spaces; accumulate.
        for (i, v) in ids.iter().zip(&vals) {
            if let Some(pos) = idx[*row_ptr.last().unwrap() as usize..]
                .iter()
                .position(|&j| j as usize == *i)
            {
                let at = *row_ptr.last().unwrap() as usize + pos;
                val[at] += *v;
            } else {
                idx.push(*i as u32);
                val.push(*v);
            }
        }
        row_ptr.push(idx.len() as u32);
    }
    AxisTable {
        n_rows: pts.len(),
        n_cols: space.dim,
        row_ptr,
        idx,
        val,
    }
}

/// The assembled De Rham complex.
pub struct DeRhamComplex {
    /// Logical dimension (count of nontrivial directions).
    pub dim: usize,
    pub(crate) dirs: [Direction; 3],
    /// Gauss points per cell per nontrivial direction (`p + 2`).
    pub n_gauss: [usize; 3],
}

/// Number of Gauss points per histopolation segment piece.
fn histo_gauss(p: usize) -> usize {
    (p + 2).max(10)
}

fn build_direction(spec: Option<&DirectionSpec>) -> Result<Direction> {
    let (fine, coarse, n_gauss) = match spec {
        Some(s) => {
            let fine = SplineSpace1D::build(s.degree + 1, s.n_cells, s.boundary, s.interval)?;
            let coarse = SplineSpace1D::build(s.degree, s.n_cells, s.boundary, s.interval)?;
            (fine, coarse, s.degree + 2)
        }
        None => {
            let sp = SplineSpace1D::build(0, 1, Boundary::Periodic, (0.0, 1.0))?;
            (sp.clone(), sp, 1)
        }
    };
    let trivial = spec.is_none();
    let deriv = if trivial {
        AxisDeriv::Zero { n: 1 }
    } else {
        AxisDeriv::from_fine(&fine)
    };

    let quad = fine.quadrature_grid(n_gauss)?;
    let (quad_pts, quad_w) = (quad.nodes, quad.weights);

    // Histopolation segments: between consecutive Greville points of the
    // fine factor, split at knots, Gauss points per piece. Along a
    // trivialized direction every field is constant, so a single midpoint
    // with weight 1 integrates the (wrapped) unit segment exactly.
    let g = fine.greville_points();
    let n_seg = match fine.boundary {
        Boundary::Periodic => g.len(),
        Boundary::Clamped => g.len() - 1,
    };
    assert_eq!(n_seg, coarse.dim, "histopolation segment count");
    let length = fine.length();
    let ng = histo_gauss(coarse.degree);
    let (ref_n, ref_w) = crate::splines::gauss_legendre(ng);
    let mut histo_pts = Vec::new();
    let mut row_ptr = vec![0u32];
    let mut dof_idx = Vec::new();
    let mut dof_val = Vec::new();
    if trivial {
        histo_pts.push(0.5);
        dof_idx.push(0);
        dof_val.push(1.0);
        row_ptr.push(1);
    } else {
        for i in 0..n_seg {
            let lo = g[i];
            let hi = if i + 1 < g.len() { g[i + 1] } else { g[0] + length };
            // Split (lo, hi) at interior knots a + m h.
            let mut cuts = vec![lo];
            let m_lo = ((lo - fine.a) / fine.h).floor() as isize + 1;
            let m_hi = ((hi - fine.a) / fine.h).ceil() as isize - 1;
            for m in m_lo..=m_hi {
                let knot = fine.a + m as Real * fine.h;
                if knot > lo + 1e-13 * length && knot < hi - 1e-13 * length {
                    cuts.push(knot);
                }
            }
            cuts.push(hi);
            for piece in cuts.windows(2) {
                let (plo, phi) = (piece[0], piece[1]);
                let mid = 0.5 * (plo + phi);
                let half = 0.5 * (phi - plo);
                if half <= 0.0 {
                    continue;
                }
                for gq in 0..ng {
                    let mut x = mid + half * ref_n[gq];
                    // Fold wrapped points into the domain.
                    if x > fine.b {
                        x -= length;
                    }
                    histo_pts.push(x);
                    dof_idx.push((histo_pts.len() - 1) as u32);
                    dof_val.push(half * ref_w[gq]);
                }
            }
            row_ptr.push(dof_idx.len() as u32);
        }
    }
    let histo_dof = AxisTable {
        n_rows: n_seg,
        n_cols: histo_pts.len(),
        row_ptr,
        idx: dof_idx,
        val: dof_val,
    };

    // Interpolation dof table: identity over the Greville list.
    let n_grev = g.len();
    let grev_dof = AxisTable {
        n_rows: n_grev,
        n_cols: n_grev,
        row_ptr: (0..=n_grev as u32).collect(),
        idx: (0..n_grev as u32).collect(),
        val: vec![1.0; n_grev],
    };

    let grev_pts: Vec<Real> = g.to_vec();
    let mk = |pts: &[Real], factor: &SplineSpace1D, deriv: usize| eval_table(factor, pts, deriv);
    let tables = [
        [
            [mk(&grev_pts, &fine, 0), mk(&grev_pts, &fine, 1)],
            [mk(&grev_pts, &coarse, 0), mk(&grev_pts, &coarse, 1)],
        ],
        [
            [mk(&histo_pts, &fine, 0), mk(&histo_pts, &fine, 1)],
            [mk(&histo_pts, &coarse, 0), mk(&histo_pts, &coarse, 1)],
        ],
        [
            [mk(&quad_pts, &fine, 0), mk(&quad_pts, &fine, 1)],
            [mk(&quad_pts, &coarse, 0), mk(&quad_pts, &coarse, 1)],
        ],
    ];

    // Interpolation system A[i][j] = N_j(g_i) (fine factor).
    let interp_table = &tables[0][0][0];
    let mut a: DMatrix<Real> = DMatrix::zeros(n_grev, n_grev);
    for r in 0..n_grev {
        for e in interp_table.row_ptr[r] as usize..interp_table.row_ptr[r + 1] as usize {
            a[(r, interp_table.idx[e] as usize)] += interp_table.val[e];
        }
    }
    // Histopolation system H[i][j] = integral of coarse N_j over segment i.
    let coarse_at_histo = &tables[1][1][0];
    let mut hmat: DMatrix<Real> = DMatrix::zeros(n_seg, coarse.dim);
    for i in 0..n_seg {
        for e in histo_dof.row_ptr[i] as usize..histo_dof.row_ptr[i + 1] as usize {
            let pt = histo_dof.idx[e] as usize;
            let w = histo_dof.val[e];
            for f in coarse_at_histo.row_ptr[pt] as usize..coarse_at_histo.row_ptr[pt + 1] as usize
            {
                hmat[(i, coarse_at_histo.idx[f] as usize)] += w * coarse_at_histo.val[f];
            }
        }
    }

    let lu_interp = a.clone().lu();
    let lu_interp_t = a.transpose().lu();
    let lu_histo = hmat.clone().lu();
    let lu_histo_t = hmat.transpose().lu();
    for (lu, what) in [(&lu_interp, "interpolation"), (&lu_histo, "histopolation")] {
        if !lu.is_invertible() {
            return Err(Error::Config(format!("singular {what} system")));
        }
    }

    Ok(Direction {
        fine,
        coarse,
        deriv,
        trivial,
        quad_pts,
        quad_w,
        histo_pts,
        histo_dof,
        grev_dof,
        tables,
        lu_interp,
        lu_interp_t,
        lu_histo,
        lu_histo_t,
    })
}

/// Solves the factorized system along one tensor axis (in place).
pub(crate) fn solve_axis(
    lu: &nalgebra::LU<Real, Dyn, Dyn>,
    data: &mut [Real],
    dims: [usize; 3],
    axis: usize,
) {
    let (outer, mid, inner) = split_dims(dims, axis);
    if mid == 1 {
        // 1x1 system: scale.
        let d = lu.determinant();
        for v in data.iter_mut() {
            *v /= d;
        }
        return;
    }
    let ncols = outer * inner;
    let mut m = DMatrix::zeros(mid, ncols);
    for o in 0..outer {
        for r in 0..mid {
            for t in 0..inner {
                m[(r, o * inner + t)] = data[(o * mid + r) * inner + t];
            }
        }
    }
    let ok = lu.solve_mut(&mut m);
    assert!(ok, "factorized system must be solvable");
    for o in 0..outer {
        for r in 0..mid {
            for t in 0..inner {
                data[(o * mid + r) * inner + t] = m[(r, o * inner + t)];
            }
        }
    }
}

impl DeRhamComplex {
    /// Builds the complex; `None` directions are trivialized.
    pub fn build(specs: [Option<DirectionSpec>; 3]) -> Result<Self> {
        let dim = specs.iter().filter(|s| s.is_some()).count();
        if dim == 0 {
            return Err(Error::Config("at least one nontrivial direction".into()));
        }
        let n_gauss = [
            specs[0].as_ref().map_or(1, |s| s.degree + 2),
            specs[1].as_ref().map_or(1, |s| s.degree + 2),
            specs[2].as_ref().map_or(1, |s| s.degree + 2),
        ];
        let d0 = build_direction(specs[0].as_ref())?;
        let d1 = build_direction(specs[1].as_ref())?;
        let d2 = build_direction(specs[2].as_ref())?;
        Ok(DeRhamComplex {
            dim,
            dirs: [d0, d1, d2],
            n_gauss,
        })
    }

    /// Per-direction data (factors, tables, quadrature).
    pub(crate) fn direction(&self, d: usize) -> &Direction {
        &self.dirs[d]
    }

    /// Per-direction tensor dimensions of one component of a space.
    pub fn space_dims(&self, tag: SpaceTag, comp: usize) -> [usize; 3] {
        let mask = tag.mask(comp);
        let mut dims = [0; 3];
        for d in 0..3 {
            dims[d] = if mask[d] {
                self.dirs[d].fine.dim
            } else {
                self.dirs[d].coarse.dim
            };
        }
        dims
    }

    /// Length of one component block.
    pub fn block_len(&self, tag: SpaceTag, comp: usize) -> usize {
        self.space_dims(tag, comp).iter().product()
    }

    /// Range of one component block inside a field's coefficient vector.
    pub fn block_range(&self, tag: SpaceTag, comp: usize) -> std::ops::Range<usize> {
        let mut start = 0;
        for c in 0..comp {
            start += self.block_len(tag, c);
        }
        start..start + self.block_len(tag, comp)
    }

    /// Total coefficient count of a space.
    pub fn total_len(&self, tag: SpaceTag) -> usize {
        (0..tag.n_components()).map(|c| self.block_len(tag, c)).sum()
    }

    /// Zero field in a space.
    pub fn field_zeros(&self, tag: SpaceTag) -> Field {
        Field {
            space_tag: tag,
            coeffs: vec![0.0; self.total_len(tag)],
        }
    }

    pub(crate) fn check_tag(&self, f: &Field, want: SpaceTag) -> Result<()> {
        if f.space_tag != want {
            return Err(Error::SpaceMismatch {
                expected: want.name(),
                got: f.space_tag.name(),
            });
        }
        if f.coeffs.len() != self.total_len(want) {
            return Err(Error::Config(format!(
                "field length {} does not match space {} ({})",
                f.coeffs.len(),
                want.name(),
                self.total_len(want)
            )));
        }
        Ok(())
    }

    /// Strong gradient `V0 -> V1`.
    pub fn grad(&self, f: &Field) -> Result<Field> {
        self.check_tag(f, SpaceTag::V0)?;
        let dims = self.space_dims(SpaceTag::V0, 0);
        let mut out = Vec::with_capacity(self.total_len(SpaceTag::V1));
        for c in 0..3 {
            let (block, _) = self.dirs[c].deriv.forward_axis(&f.coeffs, dims, c);
            out.extend_from_slice(&block);
        }
        Ok(Field {
            space_tag: SpaceTag::V1,
            coeffs: out,
        })
    }

    /// Strong curl `V1 -> V2`.
    pub fn curl(&self, a: &Field) -> Result<Field> {
        self.check_tag(a, SpaceTag::V1)?;
        let mut out = Vec::with_capacity(self.total_len(SpaceTag::V2));
        for c in 0..3 {
            let (ax1, ax2) = ((c + 1) % 3, (c + 2) % 3);
            let b1 = &a.coeffs[self.block_range(SpaceTag::V1, ax2)];
            let d1 = self.space_dims(SpaceTag::V1, ax2);
            let (t1, _) = self.dirs[ax1].deriv.forward_axis(b1, d1, ax1);
            let b2 = &a.coeffs[self.block_range(SpaceTag::V1, ax1)];
            let d2 = self.space_dims(SpaceTag::V1, ax1);
            let (t2, _) = self.dirs[ax2].deriv.forward_axis(b2, d2, ax2);
            out.extend(t1.iter().zip(&t2).map(|(x, y)| x - y));
        }
        Ok(Field {
            space_tag: SpaceTag::V2,
            coeffs: out,
        })
    }

    /// Strong divergence `V2 -> V3`.
    pub fn div(&self, b: &Field) -> Result<Field> {
        self.check_tag(b, SpaceTag::V2)?;
        let len = self.total_len(SpaceTag::V3);
        let mut out = vec![0.0; len];
        for c in 0..3 {
            let blk = &b.coeffs[self.block_range(SpaceTag::V2, c)];
            let dims = self.space_dims(SpaceTag::V2, c);
            let (t, _) = self.dirs[c].deriv.forward_axis(blk, dims, c);
            for (o, v) in out.iter_mut().zip(&t) {
                *o += v;
            }
        }
        Ok(Field {
            space_tag: SpaceTag::V3,
            coeffs: out,
        })
    }

    /// Adjoint of [`Self::curl`] on coefficient vectors (`V2' -> V1'`).
    pub(crate) fn curl_adjoint(&self, m: &[Real]) -> Vec<Real> {
        let mut out = vec![0.0; self.total_len(SpaceTag::V1)];
        for c in 0..3 {
            let (ax1, ax2) = ((c + 1) % 3, (c + 2) % 3);
            let blk = &m[self.block_range(SpaceTag::V2, c)];
            let dims = self.space_dims(SpaceTag::V2, c);
            let (t1, _) = self.dirs[ax1].deriv.adjoint_axis(blk, dims, ax1);
            let r1 = self.block_range(SpaceTag::V1, ax2);
            for (o, v) in out[r1].iter_mut().zip(&t1) {
                *o += v;
            }
            let (t2, _) = self.dirs[ax2].deriv.adjoint_axis(blk, dims, ax2);
            let r2 = self.block_range(SpaceTag::V1, ax1);
            for (o, v) in out[r2].iter_mut().zip(&t2) {
                *o -= v;
            }
        }
        out
    }

    /// Adjoint of [`Self::div`] on coefficient vectors (`V3' -> V2'`).
    pub(crate) fn div_adjoint(&self, m: &[Real]) -> Vec<Real> {
        let mut out = vec![0.0; self.total_len(SpaceTag::V2)];
        let dims3 = self.space_dims(SpaceTag::V3, 0);
        for c in 0..3 {
            let (t, _) = self.dirs[c].deriv.adjoint_axis(m, dims3, c);
            let r = self.block_range(SpaceTag::V2, c);
            out[r].copy_from_slice(&t);
        }
        out
    }

    /// Point lists (one per direction) of the projection dofs of a component.
    pub(crate) fn dof_point_sets(&self, tag: SpaceTag, comp: usize) -> [PointSet; 3] {
        let mask = tag.mask(comp);
        [0, 1, 2].map(|d| {
            if mask[d] {
                PointSet::Greville
            } else {
                PointSet::Histo
            }
        })
    }

    /// Dimensions of the dof-point tensor grid of a component.
    pub(crate) fn dof_grid_dims(&self, tag: SpaceTag, comp: usize) -> [usize; 3] {
        let sets = self.dof_point_sets(tag, comp);
        [0, 1, 2].map(|d| self.dirs[d].points(sets[d]).len())
    }

    /// Evaluates a scalar closure on the dof-point grid of a component.
    fn closure_on_grid(
        &self,
        sets: [PointSet; 3],
        f: &dyn Fn(Real, Real, Real) -> Real,
    ) -> Vec<Real> {
        let px = self.dirs[0].points(sets[0]);
        let py = self.dirs[1].points(sets[1]);
        let pz = self.dirs[2].points(sets[2]);
        let mut out = Vec::with_capacity(px.len() * py.len() * pz.len());
        for &x in px {
            for &y in py {
                for &z in pz {
                    out.push(f(x, y, z));
                }
            }
        }
        out
    }

    /// Projects values given on the dof-point grid of `(tag, comp)` into
    /// coefficients of that component (applies dof weights, then solves the
    /// interpolation/histopolation systems).
    pub(crate) fn project_from_point_values(
        &self,
        tag: SpaceTag,
        comp: usize,
        values: Vec<Real>,
    ) -> Vec<Real> {
        let mask = tag.mask(comp);
        let sets = self.dof_point_sets(tag, comp);
        let mut dims = [0; 3];
        for d in 0..3 {
            dims[d] = self.dirs[d].points(sets[d]).len();
        }
        // Contract points to dofs per axis.
        let mut data = values;
        for d in 0..3 {
            let tab = if mask[d] {
                &self.dirs[d].grev_dof
            } else {
                &self.dirs[d].histo_dof
            };
            let (next, nd) = tab.forward_axis(&data, dims, d);
            data = next;
            dims = nd;
        }
        // Solve the Kronecker dof systems.
        for d in 0..3 {
            let lu = if mask[d] {
                &self.dirs[d].lu_interp
            } else {
                &self.dirs[d].lu_histo
            };
            solve_axis(lu, &mut data, dims, d);
        }
        data
    }

    /// Adjoint of [`Self::project_from_point_values`]: maps a dof-space
    /// functional to point-grid values (transposed solves, then dof-weight
    /// scatter). Used by the propagators' force terms.
    pub(crate) fn project_adjoint_to_points(
        &self,
        tag: SpaceTag,
        comp: usize,
        functional: &[Real],
    ) -> Vec<Real> {
        let mask = tag.mask(comp);
        let mut dims = self.space_dims(tag, comp);
        let mut data = functional.to_vec();
        for d in 0..3 {
            let lu = if mask[d] {
                &self.dirs[d].lu_interp_t
            } else {
                &self.dirs[d].lu_histo_t
            };
            solve_axis(lu, &mut data, dims, d);
        }
        for d in 0..3 {
            let tab = if mask[d] {
                &self.dirs[d].grev_dof
            } else {
                &self.dirs[d].histo_dof
            };
            let (next, nd) = tab.adjoint_axis(&data, dims, d);
            data = next;
            dims = nd;
        }
        data
    }

    /// Commuting projector into `V0` (Greville interpolation).
    pub fn project_0(&self, f: impl Fn(Real, Real, Real) -> Real) -> Field {
        let sets = self.dof_point_sets(SpaceTag::V0, 0);
        let vals = self.closure_on_grid(sets, &f);
        Field {
            space_tag: SpaceTag::V0,
            coeffs: self.project_from_point_values(SpaceTag::V0, 0, vals),
        }
    }

    /// Commuting projector into `V3` (histopolation over Greville cells).
    pub fn project_3(&self, f: impl Fn(Real, Real, Real) -> Real) -> Field {
        let sets = self.dof_point_sets(SpaceTag::V3, 0);
        let vals = self.closure_on_grid(sets, &f);
        Field {
            space_tag: SpaceTag::V3,
            coeffs: self.project_from_point_values(SpaceTag::V3, 0, vals),
        }
    }

    /// Commuting projector into `V1` (edge dofs).
    pub fn project_1(&self, f: impl Fn(Real, Real, Real) -> [Real; 3]) -> Field {
        self.project_vector(SpaceTag::V1, f)
    }

    /// Commuting projector into `V2` (face dofs).
    pub fn project_2(&self, f: impl Fn(Real, Real, Real) -> [Real; 3]) -> Field {
        self.project_vector(SpaceTag::V2, f)
    }

    /// Component-wise Greville interpolation into the velocity space.
    pub fn project_x(&self, f: impl Fn(Real, Real, Real) -> [Real; 3]) -> Field {
        self.project_vector(SpaceTag::X, f)
    }

    fn project_vector(
        &self,
        tag: SpaceTag,
        f: impl Fn(Real, Real, Real) -> [Real; 3],
    ) -> Field {
        let mut coeffs = Vec::with_capacity(self.total_len(tag));
        for c in 0..3 {
            let sets = self.dof_point_sets(tag, c);
            let vals = self.closure_on_grid(sets, &|x, y, z| f(x, y, z)[c]);
            coeffs.extend(self.project_from_point_values(tag, c, vals));
        }
        Field { space_tag: tag, coeffs }
    }

    /// Evaluates one component of a field on a named tensor point grid.
    ///
    /// `deriv_axis` requests the first derivative along that axis.
    pub(crate) fn eval_component_on(
        &self,
        tag: SpaceTag,
        comp: usize,
        coeffs: &[Real],
        sets: [PointSet; 3],
        deriv_axis: Option<usize>,
    ) -> Vec<Real> {
        let mask = tag.mask(comp);
        let mut dims = self.space_dims(tag, comp);
        let mut data = coeffs.to_vec();
        for d in 0..3 {
            let kind = if mask[d] {
                FactorKind::Fine
            } else {
                FactorKind::Coarse
            };
            let dv = usize::from(deriv_axis == Some(d));
            let tab = self.dirs[d].table(sets[d], kind, dv);
            let (next, nd) = tab.forward_axis(&data, dims, d);
            data = next;
            dims = nd;
        }
        data
    }

    /// Adjoint of [`Self::eval_component_on`]: scatters point-grid values
    /// back to a coefficient-space functional.
    pub(crate) fn scatter_component_from(
        &self,
        tag: SpaceTag,
        comp: usize,
        values: &[Real],
        sets: [PointSet; 3],
        deriv_axis: Option<usize>,
    ) -> Vec<Real> {
        let mask = tag.mask(comp);
        let mut dims = [0; 3];
        for d in 0..3 {
            dims[d] = self.dirs[d].points(sets[d]).len();
        }
        let mut data = values.to_vec();
        for d in 0..3 {
            let kind = if mask[d] {
                FactorKind::Fine
            } else {
                FactorKind::Coarse
            };
            let dv = usize::from(deriv_axis == Some(d));
            let tab = self.dirs[d].table(sets[d], kind, dv);
            let (next, nd) = tab.adjoint_axis(&data, dims, d);
            data = next;
            dims = nd;
        }
        data
    }

    /// Evaluates one component of a field at a single point, with optional
    /// per-direction derivative orders (0 or 1).
    pub fn eval_field(&self, f: &Field, comp: usize, at: [Real; 3], deriv: [usize; 3]) -> Result<Real> {
        self.check_tag(f, f.space_tag)?;
        let mask = f.space_tag.mask(comp);
        let blk = &f.coeffs[self.block_range(f.space_tag, comp)];
        let dims = self.space_dims(f.space_tag, comp);
        let mut rows = Vec::with_capacity(3);
        for d in 0..3 {
            let factor = if mask[d] {
                &self.dirs[d].fine
            } else {
                &self.dirs[d].coarse
            };
            let mut x = if self.dirs[d].trivial { 0.5 } else { at[d] };
            if factor.boundary == Boundary::Periodic {
                x = factor.a + (x - factor.a).rem_euclid(factor.length());
            }
            rows.push(factor.eval_basis(x, deriv[d])?);
        }
        let mut acc = 0.0;
        for (i, &vi) in rows[0].0.iter().zip(&rows[0].1) {
            for (j, &vj) in rows[1].0.iter().zip(&rows[1].1) {
                for (k, &vk) in rows[2].0.iter().zip(&rows[2].1) {
                    acc += vi * vj * vk * blk[(i * dims[1] + j) * dims[2] + k];
                }
            }
        }
        Ok(acc)
    }

    /// Quadrature point grid dimensions.
    pub(crate) fn quad_dims(&self) -> [usize; 3] {
        [0, 1, 2].map(|d| self.dirs[d].quad_pts.len())
    }

    /// Tensor product quadrature weights, flattened on the quadrature grid.
    pub(crate) fn quad_weights(&self) -> Vec<Real> {
        let wx = &self.dirs[0].quad_w;
        let wy = &self.dirs[1].quad_w;
        let wz = &self.dirs[2].quad_w;
        let mut out = Vec::with_capacity(wx.len() * wy.len() * wz.len());
        for &a in wx {
            for &b in wy {
                for &c in wz {
                    out.push(a * b * c);
                }
            }
        }
        out
    }

    /// Domain volume.
    pub fn volume(&self) -> Real {
        self.dirs.iter().map(|d| d.fine.length()).product()
    }
}
