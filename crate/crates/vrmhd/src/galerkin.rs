//! Mass matrices, weighted mass operators, the L² projector into `V3`,
//! the weak dual curl, and the linear solves behind the propagators.
//!
//! Unweighted mass matrices factor into Kronecker products of univariate
//! Gram matrices, so their solves are exact per-axis Cholesky
//! back-substitutions. Weighted operators keep the weight as quadrature-node
//! samples and are applied by sum factorization; their solves run
//! preconditioned conjugate gradients with the corresponding Kronecker mass
//! as preconditioner. Boundary-constrained solves restrict to a tensor
//! product of per-axis index ranges (the only pattern clamped boundaries
//! produce), which keeps even the constrained mass solves direct.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::complex::{DeRhamComplex, Field, FactorKind, PointSet, SpaceTag};
use crate::splines::Boundary;
use crate::{Error, Real, Result};

/// A weight sampled at every node of the tensor quadrature grid.
#[derive(Debug, Clone)]
pub struct WeightFunction {
    /// Samples on the quadrature grid, innermost direction fastest.
    pub values: Vec<Real>,
}

/// Active index range `[lo, hi)` along one tensor axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisRange {
    pub lo: usize,
    pub hi: usize,
}

/// Active ranges of one component block; frozen coefficients lie outside.
pub type CompMask = [AxisRange; 3];

/// Iterative solver settings for the weighted operators.
#[derive(Debug, Clone, Copy)]
pub struct SolverParams {
    /// Relative residual target.
    pub tol: Real,
    pub max_iters: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            tol: 1e-12,
            max_iters: 500,
        }
    }
}

enum OpKind {
    Mass,
    WeightedMass {
        w: Vec<Real>,
    },
    /// `M[rho]_X + dt K[mu]` with the viscous stiffness
    /// `K[mu] u · v = ∫ mu ∇u : ∇v`.
    Viscous {
        rho: Vec<Real>,
        mu: Vec<Real>,
        dt: Real,
    },
    /// `M2 + dt M2 C M1^{-1} M[eta]_1 M1^{-1} Cᵀ M2` acting on `V2`.
    Resistive {
        eta: Vec<Real>,
        dt: Real,
        v1_mask: Option<Vec<CompMask>>,
    },
}

/// A symmetric positive (semi)definite operator on one of the spaces.
pub struct LinearOperator {
    tag: SpaceTag,
    kind: OpKind,
}

impl LinearOperator {
    /// Space the operator acts on.
    pub fn space_tag(&self) -> SpaceTag {
        self.tag
    }
}

/// One direction's univariate Gram matrix with its factorizations.
struct FactorMass {
    full: DMatrix<Real>,
    chol: Cholesky<Real, Dyn>,
    /// Factorization of the interior block `1..dim-1`, present for the
    /// fine factor of clamped directions (the only restriction masks use).
    interior: Option<Cholesky<Real, Dyn>>,
}

/// Assembled Galerkin context owning the complex.
pub struct Galerkin {
    cx: DeRhamComplex,
    /// Tensor quadrature weights.
    qw: Vec<Real>,
    /// `[direction][fine = 0 | coarse = 1]`.
    axis: [[FactorMass; 2]; 3],
    params: SolverParams,
}

fn mul_axis(m: &DMatrix<Real>, data: &[Real], dims: [usize; 3], axis: usize) -> Vec<Real> {
    let outer: usize = dims[..axis].iter().product();
    let mid = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    assert_eq!(m.ncols(), mid);
    let mut out = vec![0.0; outer * m.nrows() * inner];
    for o in 0..outer {
        for r in 0..m.nrows() {
            let ob = (o * m.nrows() + r) * inner;
            for c in 0..mid {
                let v = m[(r, c)];
                if v == 0.0 {
                    continue;
                }
                let ib = (o * mid + c) * inner;
                for t in 0..inner {
                    out[ob + t] += v * data[ib + t];
                }
            }
        }
    }
    out
}

fn chol_solve_axis(chol: &Cholesky<Real, Dyn>, data: &mut [Real], dims: [usize; 3], axis: usize) {
    let outer: usize = dims[..axis].iter().product();
    let mid = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    assert_eq!(chol.l_dirty().nrows(), mid);
    if mid == 1 {
        let d = chol.l_dirty()[(0, 0)];
        let scale = 1.0 / (d * d);
        for v in data.iter_mut() {
            *v *= scale;
        }
        return;
    }
    let mut m = DMatrix::zeros(mid, outer * inner);
    for o in 0..outer {
        for r in 0..mid {
            for t in 0..inner {
                m[(r, o * inner + t)] = data[(o * mid + r) * inner + t];
            }
        }
    }
    chol.solve_mut(&mut m);
    for o in 0..outer {
        for r in 0..mid {
            for t in 0..inner {
                data[(o * mid + r) * inner + t] = m[(r, o * inner + t)];
            }
        }
    }
}

fn full_range(dims: [usize; 3]) -> CompMask {
    [0, 1, 2].map(|d| AxisRange {
        lo: 0,
        hi: dims[d],
    })
}

fn mask_is_full(mask: &CompMask, dims: [usize; 3]) -> bool {
    (0..3).all(|d| mask[d].lo == 0 && mask[d].hi == dims[d])
}

/// Zeroes every entry of a component block outside the mask.
fn restrict_in_place(data: &mut [Real], dims: [usize; 3], mask: &CompMask) {
    if mask_is_full(mask, dims) {
        return;
    }
    let inner = dims[2];
    let mid = dims[1];
    for i in 0..dims[0] {
        for j in 0..mid {
            let keep_ij = i >= mask[0].lo && i < mask[0].hi && j >= mask[1].lo && j < mask[1].hi;
            let base = (i * mid + j) * inner;
            for k in 0..inner {
                if !(keep_ij && k >= mask[2].lo && k < mask[2].hi) {
                    data[base + k] = 0.0;
                }
            }
        }
    }
}

impl Galerkin {
    /// Assembles the univariate Gram matrices and their factorizations.
    pub fn new(cx: DeRhamComplex) -> Result<Self> {
        let qw = cx.quad_weights();
        let mut axis: Vec<[FactorMass; 2]> = Vec::with_capacity(3);
        for d in 0..3 {
            let dir = cx.direction(d);
            let build = |kind: FactorKind| -> Result<FactorMass> {
                let space = dir.factor(kind);
                let tab = dir.table(PointSet::Quad, kind, 0);
                let n = space.dim;
                let mut m: DMatrix<Real> = DMatrix::zeros(n, n);
                for q in 0..tab.n_rows {
                    let wq = dir.quad_w[q];
                    let (lo, hi) = (tab.row_ptr[q] as usize, tab.row_ptr[q + 1] as usize);
                    for a in lo..hi {
                        for b in lo..hi {
                            m[(tab.idx[a] as usize, tab.idx[b] as usize)] +=
                                wq * tab.val[a] * tab.val[b];
                        }
                    }
                }
                let chol = m
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Solver {
                        context: "univariate mass factorization".into(),
                        detail: format!("direction {d} not positive definite"),
                    })?;
                let interior = if space.boundary == Boundary::Clamped
                    && kind == FactorKind::Fine
                    && n >= 3
                {
                    let sub = m.view((1, 1), (n - 2, n - 2)).into_owned();
                    Some(sub.cholesky().ok_or_else(|| Error::Solver {
                        context: "interior mass factorization".into(),
                        detail: format!("direction {d} interior block not positive definite"),
                    })?)
                } else {
                    None
                };
                Ok(FactorMass {
                    full: m,
                    chol,
                    interior,
                })
            };
            axis.push([build(FactorKind::Fine)?, build(FactorKind::Coarse)?]);
        }
        let mut it = axis.into_iter();
        let axis = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
        Ok(Galerkin {
            cx,
            qw,
            axis,
            params: SolverParams::default(),
        })
    }

    pub fn complex(&self) -> &DeRhamComplex {
        &self.cx
    }

    /// Iterative solver settings used by the weighted solves.
    pub fn set_solver_params(&mut self, params: SolverParams) {
        self.params = params;
    }

    pub fn solver_params(&self) -> SolverParams {
        self.params
    }

    /// Tensor quadrature weights (innermost direction fastest).
    pub fn quadrature_weights(&self) -> &[Real] {
        &self.qw
    }

    /// Flattened tensor quadrature nodes matching the weight layout.
    pub fn quadrature_points(&self) -> Vec<[Real; 3]> {
        let px = self.cx.direction(0).points(PointSet::Quad);
        let py = self.cx.direction(1).points(PointSet::Quad);
        let pz = self.cx.direction(2).points(PointSet::Quad);
        let mut out = Vec::with_capacity(px.len() * py.len() * pz.len());
        for &x in px {
            for &y in py {
                for &z in pz {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }

    /// Samples a closure on the quadrature grid.
    pub fn weight_from_fn(&self, f: impl Fn(Real, Real, Real) -> Real) -> WeightFunction {
        let values = self
            .quadrature_points()
            .into_iter()
            .map(|[x, y, z]| f(x, y, z))
            .collect();
        WeightFunction { values }
    }

    /// Constant weight.
    pub fn weight_constant(&self, c: Real) -> WeightFunction {
        WeightFunction {
            values: vec![c; self.qw.len()],
        }
    }

    /// Samples one component of a discrete field on the quadrature grid.
    pub fn weight_from_field(&self, f: &Field, comp: usize) -> WeightFunction {
        let blk = &f.coeffs[self.cx.block_range(f.space_tag, comp)];
        let values =
            self.cx
                .eval_component_on(f.space_tag, comp, blk, [PointSet::Quad; 3], None);
        WeightFunction { values }
    }

    /// Integral of quadrature-node samples.
    pub fn integrate(&self, values: &[Real]) -> Real {
        values.iter().zip(&self.qw).map(|(v, w)| v * w).sum()
    }

    /// Unweighted Gram operator of a space.
    pub fn mass_matrix(&self, tag: SpaceTag) -> LinearOperator {
        LinearOperator {
            tag,
            kind: OpKind::Mass,
        }
    }

    /// Weighted Gram operator `∫ w a·b` of a space.
    pub fn weighted_mass(&self, tag: SpaceTag, w: &WeightFunction) -> Result<LinearOperator> {
        if w.values.len() != self.qw.len() {
            return Err(Error::Config(format!(
                "weight sample count {} does not match the quadrature grid ({})",
                w.values.len(),
                self.qw.len()
            )));
        }
        if !w.values.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("weight contains non-finite samples".into()));
        }
        Ok(LinearOperator {
            tag,
            kind: OpKind::WeightedMass {
                w: w.values.clone(),
            },
        })
    }

    /// Viscous velocity operator `M[rho]_X + dt K[mu]`.
    pub fn viscous_operator(
        &self,
        rho: &WeightFunction,
        mu: &WeightFunction,
        dt: Real,
    ) -> LinearOperator {
        LinearOperator {
            tag: SpaceTag::X,
            kind: OpKind::Viscous {
                rho: rho.values.clone(),
                mu: mu.values.clone(),
                dt,
            },
        }
    }

    /// Implicit resistive operator on `V2`; the inner `V1` solves honor
    /// `v1_mask` so that constrained current dofs stay frozen.
    pub fn resistive_operator(
        &self,
        eta: &WeightFunction,
        dt: Real,
        v1_mask: Option<Vec<CompMask>>,
    ) -> LinearOperator {
        LinearOperator {
            tag: SpaceTag::V2,
            kind: OpKind::Resistive {
                eta: eta.values.clone(),
                dt,
                v1_mask,
            },
        }
    }

    /// Mask covering every coefficient of a component (nothing frozen).
    pub fn full_mask(&self, tag: SpaceTag, comp: usize) -> CompMask {
        full_range(self.cx.space_dims(tag, comp))
    }

    fn kron_apply(&self, tag: SpaceTag, comp: usize, blk: &[Real]) -> Vec<Real> {
        let mask = tag.mask(comp);
        let mut dims = self.cx.space_dims(tag, comp);
        let mut data = blk.to_vec();
        for d in 0..3 {
            let fm = &self.axis[d][usize::from(!mask[d])];
            data = mul_axis(&fm.full, &data, dims, d);
            dims[d] = fm.full.nrows();
        }
        data
    }

    fn kron_solve(&self, tag: SpaceTag, comp: usize, blk: &mut [Real], cmask: &CompMask) {
        let mask = tag.mask(comp);
        let dims = self.cx.space_dims(tag, comp);
        if mask_is_full(cmask, dims) {
            for d in 0..3 {
                let fm = &self.axis[d][usize::from(!mask[d])];
                chol_solve_axis(&fm.chol, blk, dims, d);
            }
            return;
        }
        // Restricted solve: gather the active tensor block, solve with the
        // interior factorizations, scatter back with frozen entries zeroed.
        let adims = [0, 1, 2].map(|d| cmask[d].hi - cmask[d].lo);
        let mut active = vec![0.0; adims.iter().product()];
        for i in 0..adims[0] {
            for j in 0..adims[1] {
                for k in 0..adims[2] {
                    let src = ((i + cmask[0].lo) * dims[1] + j + cmask[1].lo) * dims[2]
                        + k
                        + cmask[2].lo;
                    active[(i * adims[1] + j) * adims[2] + k] = blk[src];
                }
            }
        }
        for d in 0..3 {
            let fm = &self.axis[d][usize::from(!mask[d])];
            let chol = if cmask[d].lo == 0 && cmask[d].hi == dims[d] {
                &fm.chol
            } else {
                assert!(
                    cmask[d].lo == 1 && cmask[d].hi == dims[d] - 1,
                    "unsupported mask range along axis {d}"
                );
                fm.interior.as_ref().expect("interior factorization present")
            };
            chol_solve_axis(chol, &mut active, adims, d);
        }
        blk.fill(0.0);
        for i in 0..adims[0] {
            for j in 0..adims[1] {
                for k in 0..adims[2] {
                    let dst = ((i + cmask[0].lo) * dims[1] + j + cmask[1].lo) * dims[2]
                        + k
                        + cmask[2].lo;
                    blk[dst] = active[(i * adims[1] + j) * adims[2] + k];
                }
            }
        }
    }

    fn weighted_apply(&self, tag: SpaceTag, comp: usize, blk: &[Real], w: &[Real]) -> Vec<Real> {
        let mut vals = self
            .cx
            .eval_component_on(tag, comp, blk, [PointSet::Quad; 3], None);
        for ((v, wv), qv) in vals.iter_mut().zip(w).zip(&self.qw) {
            *v *= wv * qv;
        }
        self.cx
            .scatter_component_from(tag, comp, &vals, [PointSet::Quad; 3], None)
    }

    fn stiffness_apply(&self, comp: usize, blk: &[Real], w: &[Real]) -> Vec<Real> {
        let mut out = vec![0.0; blk.len()];
        for d in 0..3 {
            let mut vals =
                self.cx
                    .eval_component_on(SpaceTag::X, comp, blk, [PointSet::Quad; 3], Some(d));
            for ((v, wv), qv) in vals.iter_mut().zip(w).zip(&self.qw) {
                *v *= wv * qv;
            }
            let part =
                self.cx
                    .scatter_component_from(SpaceTag::X, comp, &vals, [PointSet::Quad; 3], Some(d));
            for (o, p) in out.iter_mut().zip(&part) {
                *o += p;
            }
        }
        out
    }

    /// Applies an operator to a full coefficient vector of its space.
    pub fn apply(&self, op: &LinearOperator, x: &[Real]) -> Vec<Real> {
        let tag = op.tag;
        assert_eq!(x.len(), self.cx.total_len(tag), "operand length");
        let mut out = Vec::with_capacity(x.len());
        match &op.kind {
            OpKind::Mass => {
                for c in 0..tag.n_components() {
                    let blk = &x[self.cx.block_range(tag, c)];
                    out.extend(self.kron_apply(tag, c, blk));
                }
            }
            OpKind::WeightedMass { w } => {
                for c in 0..tag.n_components() {
                    let blk = &x[self.cx.block_range(tag, c)];
                    out.extend(self.weighted_apply(tag, c, blk, w));
                }
            }
            OpKind::Viscous { rho, mu, dt } => {
                for c in 0..3 {
                    let blk = &x[self.cx.block_range(tag, c)];
                    let mut y = self.weighted_apply(tag, c, blk, rho);
                    let k = self.stiffness_apply(c, blk, mu);
                    for (yv, kv) in y.iter_mut().zip(&k) {
                        *yv += dt * kv;
                    }
                    out.extend(y);
                }
            }
            OpKind::Resistive { eta, dt, v1_mask } => {
                let m2x_field = Field {
                    space_tag: SpaceTag::V2,
                    coeffs: self.apply(&self.mass_matrix(SpaceTag::V2), x),
                };
                let j = self
                    .dual_curl_from_m2(&m2x_field.coeffs, v1_mask.as_deref())
                    .expect("exact mass solve");
                let mj = self.apply(
                    &LinearOperator {
                        tag: SpaceTag::V1,
                        kind: OpKind::WeightedMass { w: eta.clone() },
                    },
                    &j.coeffs,
                );
                let k = self.field_from_v1_dual(&mj, v1_mask.as_deref());
                let curl_k = self.cx.curl(&k).expect("dual curl lives in V1");
                let m2ck = self.apply(&self.mass_matrix(SpaceTag::V2), &curl_k.coeffs);
                out = m2x_field.coeffs;
                for (o, v) in out.iter_mut().zip(&m2ck) {
                    *o += dt * v;
                }
            }
        }
        out
    }

    /// Solves `M1 x = rhs` honoring an optional mask (frozen dofs get zero).
    fn field_from_v1_dual(&self, rhs: &[Real], mask: Option<&[CompMask]>) -> Field {
        let mut coeffs = rhs.to_vec();
        for c in 0..3 {
            let r = self.cx.block_range(SpaceTag::V1, c);
            let cmask = mask
                .map(|m| m[c])
                .unwrap_or_else(|| self.full_mask(SpaceTag::V1, c));
            let dims = self.cx.space_dims(SpaceTag::V1, c);
            restrict_in_place(&mut coeffs[r.clone()], dims, &cmask);
            self.kron_solve(SpaceTag::V1, c, &mut coeffs[r], &cmask);
        }
        Field {
            space_tag: SpaceTag::V1,
            coeffs,
        }
    }

    /// Weak dual curl from an already mass-weighted `V2` vector.
    fn dual_curl_from_m2(&self, m2b: &[Real], mask: Option<&[CompMask]>) -> Result<Field> {
        let rhs = self.cx.curl_adjoint(m2b);
        Ok(self.field_from_v1_dual(&rhs, mask))
    }

    /// Weak dual curl `∇̃×B`: solves `M1 x = Cᵀ M2 b`.
    pub fn dual_curl(&self, b: &Field) -> Result<Field> {
        self.dual_curl_masked(b, None)
    }

    /// Dual curl with constrained `V1` dofs frozen to zero.
    pub fn dual_curl_masked(&self, b: &Field, mask: Option<&[CompMask]>) -> Result<Field> {
        if b.space_tag != SpaceTag::V2 {
            return Err(Error::SpaceMismatch {
                expected: SpaceTag::V2.name(),
                got: b.space_tag.name(),
            });
        }
        let m2b = self.apply(&self.mass_matrix(SpaceTag::V2), &b.coeffs);
        self.dual_curl_from_m2(&m2b, mask)
    }

    /// L² projection into `V3` from quadrature-node samples.
    pub fn l2_project_3(&self, data: &[Real]) -> Result<Field> {
        if data.len() != self.qw.len() {
            return Err(Error::Config(format!(
                "sample count {} does not match the quadrature grid ({})",
                data.len(),
                self.qw.len()
            )));
        }
        let weighted: Vec<Real> = data.iter().zip(&self.qw).map(|(v, w)| v * w).collect();
        let mut coeffs = self.cx.scatter_component_from(
            SpaceTag::V3,
            0,
            &weighted,
            [PointSet::Quad; 3],
            None,
        );
        let cmask = self.full_mask(SpaceTag::V3, 0);
        self.kron_solve(SpaceTag::V3, 0, &mut coeffs, &cmask);
        Ok(Field {
            space_tag: SpaceTag::V3,
            coeffs,
        })
    }

    /// Solves `op x = rhs` to the configured tolerance.
    pub fn solve(&self, op: &LinearOperator, rhs: &[Real]) -> Result<Vec<Real>> {
        self.solve_masked(op, rhs, None)
    }

    /// Masked solve: frozen coefficients are excluded from the system and
    /// return as zero (callers re-add frozen values).
    pub fn solve_masked(
        &self,
        op: &LinearOperator,
        rhs: &[Real],
        mask: Option<&[CompMask]>,
    ) -> Result<Vec<Real>> {
        let tag = op.tag;
        assert_eq!(rhs.len(), self.cx.total_len(tag), "right-hand side length");
        if let OpKind::WeightedMass { w } = &op.kind {
            if tag == SpaceTag::V3 && w.iter().any(|&v| v <= 0.0) {
                return Err(Error::ThermodynamicState(
                    "nonpositive temperature weight in a V3 mass solve".into(),
                ));
            }
        }
        match &op.kind {
            OpKind::Mass => {
                let mut out = rhs.to_vec();
                for c in 0..tag.n_components() {
                    let r = self.cx.block_range(tag, c);
                    let cmask = mask
                        .map(|m| m[c])
                        .unwrap_or_else(|| self.full_mask(tag, c));
                    let dims = self.cx.space_dims(tag, c);
                    restrict_in_place(&mut out[r.clone()], dims, &cmask);
                    self.kron_solve(tag, c, &mut out[r], &cmask);
                }
                Ok(out)
            }
            _ => self.pcg(op, rhs, mask),
        }
    }

    fn restrict_masked(&self, tag: SpaceTag, y: &mut [Real], mask: Option<&[CompMask]>) {
        if let Some(m) = mask {
            for c in 0..tag.n_components() {
                let r = self.cx.block_range(tag, c);
                let dims = self.cx.space_dims(tag, c);
                restrict_in_place(&mut y[r], dims, &m[c]);
            }
        }
    }

    /// Kronecker-mass preconditioner application.
    fn precondition(
        &self,
        tag: SpaceTag,
        r: &[Real],
        mask: Option<&[CompMask]>,
    ) -> Vec<Real> {
        let mut z = r.to_vec();
        for c in 0..tag.n_components() {
            let rr = self.cx.block_range(tag, c);
            let cmask = mask
                .map(|m| m[c])
                .unwrap_or_else(|| self.full_mask(tag, c));
            let dims = self.cx.space_dims(tag, c);
            restrict_in_place(&mut z[rr.clone()], dims, &cmask);
            self.kron_solve(tag, c, &mut z[rr], &cmask);
        }
        z
    }

    fn pcg(
        &self,
        op: &LinearOperator,
        rhs: &[Real],
        mask: Option<&[CompMask]>,
    ) -> Result<Vec<Real>> {
        self.pcg_apply(op.tag, &|x| Ok(self.apply(op, x)), rhs, mask)
    }

    /// Matrix-free masked solve: `apply` must act symmetric positive
    /// definite on the active coefficients of `tag`. Used by the implicit
    /// wave corrections, whose operators are mass matrices shifted by
    /// quadrature-realized transport compositions.
    pub(crate) fn solve_operator<F>(
        &self,
        tag: SpaceTag,
        apply: F,
        rhs: &[Real],
        mask: Option<&[CompMask]>,
    ) -> Result<Vec<Real>>
    where
        F: Fn(&[Real]) -> Result<Vec<Real>>,
    {
        self.pcg_apply(tag, &apply, rhs, mask)
    }

    fn pcg_apply(
        &self,
        tag: SpaceTag,
        apply: &dyn Fn(&[Real]) -> Result<Vec<Real>>,
        rhs: &[Real],
        mask: Option<&[CompMask]>,
    ) -> Result<Vec<Real>> {
        assert_eq!(rhs.len(), self.cx.total_len(tag), "right-hand side length");
        let mut b = rhs.to_vec();
        self.restrict_masked(tag, &mut b, mask);
        let norm_b = b.iter().map(|v| v * v).sum::<Real>().sqrt();
        let mut x = vec![0.0; b.len()];
        if norm_b == 0.0 {
            return Ok(x);
        }
        let mut r = b;
        let mut z = self.precondition(tag, &r, mask);
        let mut p = z.clone();
        let mut rz: Real = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for _ in 0..self.params.max_iters {
            let res = r.iter().map(|v| v * v).sum::<Real>().sqrt();
            if res <= self.params.tol * norm_b {
                return Ok(x);
            }
            // The preconditioner is positive definite, so rᵀz = 0 means the
            // residual is zero to float resolution (products underflow).
            if rz == 0.0 {
                return Ok(x);
            }
            let mut ap = apply(&p)?;
            self.restrict_masked(tag, &mut ap, mask);
            let pap: Real = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(Error::Solver {
                    context: "conjugate gradient".into(),
                    detail: format!("operator not positive definite (pᵀAp = {pap:.3e})"),
                });
            }
            let alpha = rz / pap;
            for ((xv, pv), (rv, av)) in
                x.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap))
            {
                *xv += alpha * pv;
                *rv -= alpha * av;
            }
            z = self.precondition(tag, &r, mask);
            let rz_new: Real = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for (pv, zv) in p.iter_mut().zip(&z) {
                *pv = zv + beta * *pv;
            }
        }
        let res = r.iter().map(|v| v * v).sum::<Real>().sqrt();
        Err(Error::Solver {
            context: "conjugate gradient".into(),
            detail: format!(
                "no convergence in {} iterations (relative residual {:.3e})",
                self.params.max_iters,
                res / norm_b
            ),
        })
    }
}
