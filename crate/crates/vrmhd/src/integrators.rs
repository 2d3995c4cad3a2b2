//! Bracket-split time integrators.
//!
//! The flow is split into six propagators, each of which preserves mass and
//! `div B` exactly and conserves (or correctly dissipates into entropy) the
//! total energy up to iteration and linear-solver tolerances:
//!
//! * `step_m`: velocity self-advection through the antisymmetric bracket,
//! * `step_rho`: mass transport with the matching pressure force,
//! * `step_s`: entropy transport with the matching temperature force,
//! * `step_b`: ideal induction coupled to the Lorentz force,
//! * `step_visc`: implicit viscosity with heat deposited into entropy,
//! * `step_res`: implicit resistivity with Joule heat deposited into entropy.
//!
//! `strang_step` composes them in a palindromic sequence at half steps so the
//! full step is second order in time.
//!
//! On clamped directions the boundary-adjacent velocity coefficients are held
//! at zero (test functions vanish on the boundary) and the constrained dual
//! current dofs are frozen; density, entropy, and magnetic updates act on the
//! natural spaces and keep their boundary dofs fixed because the boundary
//! fluxes vanish with the velocity.

use std::time::{Duration, Instant};

use crate::complex::{Field, PointSet, SpaceTag};
use crate::eos::Eos;
use crate::galerkin::{CompMask, Galerkin, LinearOperator, WeightFunction};
use crate::splines::Boundary;
use crate::stabilization::{artificial_eta, artificial_mu, DissipationSpec};
use crate::{Error, Real, Result};

/// Discrete state advanced by the propagators.
#[derive(Debug, Clone)]
pub struct State {
    /// Velocity in the interpolation space `X = (V0)³`.
    pub u: Field,
    /// Density in `V3`.
    pub rho: Field,
    /// Entropy density in `V3`.
    pub s: Field,
    /// Magnetic field in `V2`.
    pub b: Field,
    /// Physical time.
    pub time: Real,
}

/// Parameters shared by all propagators.
#[derive(Debug, Clone)]
pub struct StepConfig {
    /// Time step.
    pub dt: Real,
    /// Relative increment below which the nonlinear iterations stop.
    pub picard_tol: Real,
    /// Iteration cap for the nonlinear solves.
    pub picard_max_iters: usize,
    /// Viscosity coefficient specification.
    pub mu: DissipationSpec,
    /// Resistivity coefficient specification.
    pub eta: DissipationSpec,
    /// When set, the resistive propagator diffuses `B - B0` instead of `B`.
    pub linearized_b0: Option<Field>,
}

impl StepConfig {
    /// Ideal defaults: no dissipation, tight nonlinear tolerance.
    pub fn new(dt: Real) -> Self {
        StepConfig {
            dt,
            picard_tol: 1e-10,
            picard_max_iters: 50,
            mu: DissipationSpec::Off,
            eta: DissipationSpec::Off,
            linearized_b0: None,
        }
    }
}

/// Wall-clock accumulators per propagator across a run.
#[derive(Debug, Clone, Default)]
pub struct PropagatorClock {
    pub m: Duration,
    pub rho: Duration,
    pub s: Duration,
    pub b: Duration,
    pub visc: Duration,
    pub res: Duration,
}

/// Galerkin assembly plus equation of state plus boundary constraints.
pub struct Integrator {
    g: Galerkin,
    eos: Eos,
    /// Velocity mask (all components fine in every direction).
    u_mask: Option<Vec<CompMask>>,
    /// Dual-current mask for the constrained `V1` solves.
    v1_mask: Option<Vec<CompMask>>,
}

fn interior_mask(g: &Galerkin, tag: SpaceTag, comp: usize) -> CompMask {
    let cx = g.complex();
    let dims = cx.space_dims(tag, comp);
    let mask = tag.mask(comp);
    let mut out = g.full_mask(tag, comp);
    for d in 0..3 {
        let dir_clamped = cx.direction(d).fine.boundary == Boundary::Clamped;
        if dir_clamped && mask[d] {
            out[d].lo = 1;
            out[d].hi = dims[d] - 1;
        }
    }
    out
}

impl Integrator {
    /// Builds the integrator, deriving the boundary constraint masks from the
    /// complex's clamped directions.
    pub fn new(g: Galerkin, eos: Eos) -> Self {
        let any_clamped = (0..3)
            .any(|d| g.complex().direction(d).fine.boundary == Boundary::Clamped);
        let (u_mask, v1_mask) = if any_clamped {
            let u = (0..3).map(|c| interior_mask(&g, SpaceTag::X, c)).collect();
            let v1 = (0..3).map(|c| interior_mask(&g, SpaceTag::V1, c)).collect();
            (Some(u), Some(v1))
        } else {
            (None, None)
        };
        Integrator {
            g,
            eos,
            u_mask,
            v1_mask,
        }
    }

    /// Read access to the assembly backend.
    pub fn galerkin(&self) -> &Galerkin {
        &self.g
    }

    /// Read access to the equation of state.
    pub fn eos(&self) -> &Eos {
        &self.eos
    }

    /// The dual-current constraint mask (used by case setup and diagnostics).
    pub fn v1_mask(&self) -> Option<&[CompMask]> {
        self.v1_mask.as_deref()
    }

    /// Zeroes the frozen wall coefficients of a velocity field.
    ///
    /// Exact conservation on clamped domains relies on the frozen boundary
    /// coefficients being zero, so case setup runs initial data through this
    /// after projection.  A no-op on fully periodic domains.
    ///
    /// # Errors
    ///
    /// Returns [`Error::SpaceMismatch`] when `u` is not a velocity field.
    pub fn zero_frozen_velocity(&self, u: &mut Field) -> Result<()> {
        self.g.complex().check_tag(u, SpaceTag::X)?;
        if self.u_mask.is_some() {
            let zeros = vec![0.0; u.coeffs.len()];
            self.restore_frozen_u(&mut u.coeffs, &zeros);
        }
        Ok(())
    }

    fn check_state(&self, state: &State) -> Result<()> {
        let cx = self.g.complex();
        cx.check_tag(&state.u, SpaceTag::X)?;
        cx.check_tag(&state.rho, SpaceTag::V3)?;
        cx.check_tag(&state.s, SpaceTag::V3)?;
        cx.check_tag(&state.b, SpaceTag::V2)?;
        Ok(())
    }

    /// Density samples at quadrature nodes, rejecting nonpositive values.
    fn density_weight(&self, rho: &Field) -> Result<WeightFunction> {
        let w = self.g.weight_from_field(rho, 0);
        if let Some(bad) = w.values.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::ThermodynamicState(format!(
                "density {bad} at a quadrature node is not positive"
            )));
        }
        Ok(w)
    }

    /// Copies frozen velocity coefficients from `src` over `dst`.
    fn restore_frozen_u(&self, dst: &mut [Real], src: &[Real]) {
        let Some(masks) = self.u_mask.as_deref() else {
            return;
        };
        let cx = self.g.complex();
        for c in 0..3 {
            let r = cx.block_range(SpaceTag::X, c);
            let dims = cx.space_dims(SpaceTag::X, c);
            let cmask = &masks[c];
            let (db, sb) = (&mut dst[r.clone()], &src[r]);
            for i in 0..dims[0] {
                for j in 0..dims[1] {
                    for k in 0..dims[2] {
                        let active = i >= cmask[0].lo
                            && i < cmask[0].hi
                            && j >= cmask[1].lo
                            && j < cmask[1].hi
                            && k >= cmask[2].lo
                            && k < cmask[2].hi;
                        if !active {
                            let idx = (i * dims[1] + j) * dims[2] + k;
                            db[idx] = sb[idx];
                        }
                    }
                }
            }
        }
    }

    fn solve_u(&self, op: &LinearOperator, rhs: &[Real], u_prev: &[Real]) -> Result<Vec<Real>> {
        let mut u = self.g.solve_masked(op, rhs, self.u_mask.as_deref())?;
        self.restore_frozen_u(&mut u, u_prev);
        Ok(u)
    }

    /// Quadrature samples of `∇·Π²(f p)`, the transport rate induced on the
    /// carrier `f` by a velocity perturbation `p`.
    fn transport_rate_q(&self, f: &Field, p: &[Real]) -> Result<Vec<Real>> {
        let flux = self.transport_flux(f, p);
        let div_f = self.g.complex().div(&flux)?;
        Ok(self.g.weight_from_field(&div_f, 0).values)
    }

    /// One Newton sweep of a wave-coupled bracket: solves
    /// `(M + coef·S) δ = residual` for the velocity correction on the active
    /// dofs, with the wave shift `S` applied matrix-free. The shift is the
    /// composition `Aᵀ W A` of a transport map with a nonnegative diagonal,
    /// so the system stays symmetric positive definite at any time step.
    fn wave_correction<F>(
        &self,
        m_op: &LinearOperator,
        residual: &[Real],
        coef: Real,
        shift: F,
    ) -> Result<Vec<Real>>
    where
        F: Fn(&[Real]) -> Result<Vec<Real>>,
    {
        self.g.solve_operator(
            SpaceTag::X,
            |p| {
                let mut out = self.g.apply(m_op, p);
                let add = shift(p)?;
                for (o, a) in out.iter_mut().zip(&add) {
                    *o += coef * a;
                }
                Ok(out)
            },
            residual,
            self.u_mask.as_deref(),
        )
    }

    /// Relative step-to-step increment used as the Picard stopping metric.
    /// The unit floor in the denominator makes the test absolute for fields
    /// near zero, where round-off noise never contracts relatively.
    fn rel_increment(new: &[Real], old: &[Real]) -> Real {
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (a, b) in new.iter().zip(old) {
            diff += (a - b) * (a - b);
            norm += a * a;
        }
        diff.sqrt() / norm.sqrt().max(1.0)
    }

    fn picard_failure(name: &str, iters: usize, residual: Real) -> Error {
        Error::Solver {
            context: format!("{name} fixed-point iteration"),
            detail: format!(
                "no convergence after {iters} iterations (relative increment {residual:.3e})"
            ),
        }
    }

    /// Load vector of `v ↦ ∫ g ∇·Π²(f v)` over velocity test functions.
    fn transport_load(&self, f: &Field, g_quad: &[Real]) -> Vec<Real> {
        let cx = self.g.complex();
        let qw = self.g.quadrature_weights();
        let weighted: Vec<Real> = g_quad.iter().zip(qw).map(|(g, w)| g * w).collect();
        let ell3 = cx.scatter_component_from(SpaceTag::V3, 0, &weighted, [PointSet::Quad; 3], None);
        let delta = cx.div_adjoint(&ell3);
        let mut load = vec![0.0; cx.total_len(SpaceTag::X)];
        for c in 0..3 {
            let sets = cx.dof_point_sets(SpaceTag::V2, c);
            let nu = cx.project_adjoint_to_points(
                SpaceTag::V2,
                c,
                &delta[cx.block_range(SpaceTag::V2, c)],
            );
            let f_pts = cx.eval_component_on(SpaceTag::V3, 0, &f.coeffs, sets, None);
            let prod: Vec<Real> = nu.iter().zip(&f_pts).map(|(n, f)| n * f).collect();
            let lc = cx.scatter_component_from(SpaceTag::X, c, &prod, sets, None);
            for (dst, v) in load[cx.block_range(SpaceTag::X, c)].iter_mut().zip(&lc) {
                *dst += v;
            }
        }
        load
    }

    /// Commuting projection of the transport flux, `Π²(f w)`.
    fn transport_flux(&self, f: &Field, w: &[Real]) -> Field {
        let cx = self.g.complex();
        let mut coeffs = Vec::with_capacity(cx.total_len(SpaceTag::V2));
        for c in 0..3 {
            let sets = cx.dof_point_sets(SpaceTag::V2, c);
            let f_pts = cx.eval_component_on(SpaceTag::V3, 0, &f.coeffs, sets, None);
            let w_pts = cx.eval_component_on(
                SpaceTag::X,
                c,
                &w[cx.block_range(SpaceTag::X, c)],
                sets,
                None,
            );
            let vals: Vec<Real> = f_pts.iter().zip(&w_pts).map(|(a, b)| a * b).collect();
            coeffs.extend(cx.project_from_point_values(SpaceTag::V2, c, vals));
        }
        Field {
            space_tag: SpaceTag::V2,
            coeffs,
        }
    }

    /// Velocity self-advection. The bracket `[w, v] = w·∇v − v·∇w` is
    /// interpolated into `V0` component-wise, so the load vanishes exactly at
    /// `v = w` and the kinetic energy is conserved.
    pub fn step_m(&self, state: &State, cfg: &StepConfig) -> Result<State> {
        self.check_state(state)?;
        let cx = self.g.complex();
        let dt = cfg.dt;
        let rho_w = self.density_weight(&state.rho)?;
        let m_op = self.g.weighted_mass(SpaceTag::X, &rho_w)?;
        let rhs0 = self.g.apply(&m_op, &state.u.coeffs);

        // Fixed per step: the functional f ↦ ∫ ρⁿ uⁿ_c Π⁰(f), realized as
        // values on the Greville grid.
        let grev = [PointSet::Greville; 3];
        let qw = self.g.quadrature_weights();
        let mut lambda = Vec::with_capacity(3);
        for c in 0..3 {
            let u_q = cx.eval_component_on(
                SpaceTag::X,
                c,
                &state.u.coeffs[cx.block_range(SpaceTag::X, c)],
                [PointSet::Quad; 3],
                None,
            );
            let vals: Vec<Real> = rho_w
                .values
                .iter()
                .zip(&u_q)
                .zip(qw)
                .map(|((r, u), w)| r * u * w)
                .collect();
            let ell = cx.scatter_component_from(SpaceTag::X, c, &vals, [PointSet::Quad; 3], None);
            lambda.push(cx.project_adjoint_to_points(SpaceTag::X, c, &ell));
        }

        let n_grev: usize = cx.dof_grid_dims(SpaceTag::X, 0).iter().product();
        let u_blocks =
            |u: &[Real], c: usize| -> Vec<Real> { u[cx.block_range(SpaceTag::X, c)].to_vec() };

        let mut u_new = state.u.coeffs.clone();
        let mut inc = Real::INFINITY;
        for _ in 0..cfg.picard_max_iters {
            let w: Vec<Real> = state
                .u
                .coeffs
                .iter()
                .zip(&u_new)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            // Point data of the iterate on the Greville grid.
            let mut w_vals = Vec::with_capacity(3);
            let mut dw_vals = Vec::with_capacity(3);
            for c in 0..3 {
                let blk = u_blocks(&w, c);
                w_vals.push(cx.eval_component_on(SpaceTag::X, c, &blk, grev, None));
                let mut per_dir = Vec::with_capacity(3);
                for d in 0..3 {
                    per_dir.push(cx.eval_component_on(SpaceTag::X, c, &blk, grev, Some(d)));
                }
                dw_vals.push(per_dir);
            }
            let mut load = vec![0.0; cx.total_len(SpaceTag::X)];
            let mut scratch = vec![0.0; n_grev];
            for c in 0..3 {
                for d in 0..3 {
                    // ∫ λ_c w_d ∂_d v_c
                    for ((s, l), wd) in scratch.iter_mut().zip(&lambda[c]).zip(&w_vals[d]) {
                        *s = l * wd;
                    }
                    let lc = cx.scatter_component_from(SpaceTag::X, c, &scratch, grev, Some(d));
                    for (dst, v) in load[cx.block_range(SpaceTag::X, c)].iter_mut().zip(&lc) {
                        *dst += v;
                    }
                    // −∫ λ_c (∂_d w_c) v_d
                    for ((s, l), dw) in scratch.iter_mut().zip(&lambda[c]).zip(&dw_vals[c][d]) {
                        *s = l * dw;
                    }
                    let ld = cx.scatter_component_from(SpaceTag::X, d, &scratch, grev, None);
                    for (dst, v) in load[cx.block_range(SpaceTag::X, d)].iter_mut().zip(&ld) {
                        *dst -= v;
                    }
                }
            }
            let rhs: Vec<Real> = rhs0.iter().zip(&load).map(|(r, l)| r + dt * l).collect();
            let u_next = self.solve_u(&m_op, &rhs, &state.u.coeffs)?;
            inc = Self::rel_increment(&u_next, &u_new);
            u_new = u_next;
            if inc <= cfg.picard_tol {
                let mut out = state.clone();
                out.u.coeffs = u_new;
                return Ok(out);
            }
        }
        Err(Self::picard_failure("momentum", cfg.picard_max_iters, inc))
    }

    /// Mass transport: `ρⁿ⁺¹ = ρⁿ − Δt ∇·Π²(ρⁿ u^{n+1/2})` with the matching
    /// discrete-gradient pressure force, so mass is conserved exactly and
    /// kinetic plus internal energy is conserved to the iteration tolerance.
    ///
    /// The pair is an implicit acoustic system, so each sweep is a Newton
    /// correction through the linearized wave operator rather than a plain
    /// fixed-point update, which would only contract for `Δt` under the
    /// sound-crossing time of a cell. The converged state solves the same
    /// discrete system either way.
    pub fn step_rho(&self, state: &State, cfg: &StepConfig) -> Result<State> {
        self.check_state(state)?;
        let cx = self.g.complex();
        let dt = cfg.dt;
        let rho_w = self.density_weight(&state.rho)?;
        let m_rho_n = self.g.weighted_mass(SpaceTag::X, &rho_w)?;
        let mu0 = self.g.apply(&m_rho_n, &state.u.coeffs);
        let s_q = self.g.weight_from_field(&state.s, 0).values;
        let u_q_n: Vec<Vec<Real>> = (0..3)
            .map(|c| {
                cx.eval_component_on(
                    SpaceTag::X,
                    c,
                    &state.u.coeffs[cx.block_range(SpaceTag::X, c)],
                    [PointSet::Quad; 3],
                    None,
                )
            })
            .collect();

        let mut u_new = state.u.coeffs.clone();
        let mut rho_new = state.rho.clone();
        let mut inc = Real::INFINITY;
        for _ in 0..cfg.picard_max_iters {
            let w: Vec<Real> = state
                .u
                .coeffs
                .iter()
                .zip(&u_new)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let flux = self.transport_flux(&state.rho, &w);
            let div_f = cx.div(&flux)?;
            let mut rho_next = state.rho.clone();
            for (r, d) in rho_next.coeffs.iter_mut().zip(&div_f.coeffs) {
                *r -= dt * d;
            }
            let rho_next_q = self.g.weight_from_field(&rho_next, 0).values;
            // g = uⁿ·u*/2 − dq_ρ(ρⁿ, ρⁿ⁺¹; sⁿ) at quadrature nodes.
            let mut g_q = vec![0.0; rho_next_q.len()];
            for c in 0..3 {
                let u_q_new = cx.eval_component_on(
                    SpaceTag::X,
                    c,
                    &u_new[cx.block_range(SpaceTag::X, c)],
                    [PointSet::Quad; 3],
                    None,
                );
                for ((g, a), b) in g_q.iter_mut().zip(&u_q_n[c]).zip(&u_q_new) {
                    *g += 0.5 * a * b;
                }
            }
            let mut slope_q = vec![0.0; rho_next_q.len()];
            for (i, g) in g_q.iter_mut().enumerate() {
                *g -= self
                    .eos
                    .dq_rho(rho_w.values[i], rho_next_q[i], s_q[i])?;
                slope_q[i] = self
                    .eos
                    .dq_rho_slope(rho_w.values[i], rho_next_q[i], s_q[i])?;
            }
            let load = self.transport_load(&state.rho, &g_q);
            let m_rho_next = self.g.weighted_mass(
                SpaceTag::X,
                &WeightFunction {
                    values: rho_next_q,
                },
            )?;
            let m_u = self.g.apply(&m_rho_next, &u_new);
            let residual: Vec<Real> = m_u
                .iter()
                .zip(&mu0)
                .zip(&load)
                .map(|((a, b), l)| a - b + dt * l)
                .collect();
            let delta = self.wave_correction(&m_rho_next, &residual, 0.5 * dt * dt, |p| {
                let rate = self.transport_rate_q(&state.rho, p)?;
                let scaled: Vec<Real> = rate.iter().zip(&slope_q).map(|(r, c)| r * c).collect();
                Ok(self.transport_load(&state.rho, &scaled))
            })?;
            let u_next: Vec<Real> = u_new.iter().zip(&delta).map(|(u, d)| u - d).collect();
            inc = Self::rel_increment(&u_next, &u_new)
                .max(Self::rel_increment(&rho_next.coeffs, &rho_new.coeffs));
            u_new = u_next;
            rho_new = rho_next;
            if inc <= cfg.picard_tol {
                let mut out = state.clone();
                out.u.coeffs = u_new;
                out.rho = rho_new;
                return Ok(out);
            }
        }
        Err(Self::picard_failure("mass", cfg.picard_max_iters, inc))
    }

    /// Entropy transport: `sⁿ⁺¹ = sⁿ − Δt ∇·Π²(sⁿ u^{n+1/2})` with the
    /// matching temperature force. Solved by Newton sweeps through the
    /// linearized wave operator, as in [`Integrator::step_rho`].
    pub fn step_s(&self, state: &State, cfg: &StepConfig) -> Result<State> {
        self.check_state(state)?;
        let cx = self.g.complex();
        let dt = cfg.dt;
        let rho_w = self.density_weight(&state.rho)?;
        let m_op = self.g.weighted_mass(SpaceTag::X, &rho_w)?;
        let mu0 = self.g.apply(&m_op, &state.u.coeffs);
        let s_q_n = self.g.weight_from_field(&state.s, 0).values;

        let mut u_new = state.u.coeffs.clone();
        let mut s_new = state.s.clone();
        let mut inc = Real::INFINITY;
        for _ in 0..cfg.picard_max_iters {
            let w: Vec<Real> = state
                .u
                .coeffs
                .iter()
                .zip(&u_new)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let flux = self.transport_flux(&state.s, &w);
            let div_f = cx.div(&flux)?;
            let mut s_next = state.s.clone();
            for (s, d) in s_next.coeffs.iter_mut().zip(&div_f.coeffs) {
                *s -= dt * d;
            }
            let s_next_q = self.g.weight_from_field(&s_next, 0).values;
            let mut g_q = vec![0.0; s_next_q.len()];
            let mut slope_q = vec![0.0; s_next_q.len()];
            for i in 0..g_q.len() {
                g_q[i] = self.eos.dq_s(rho_w.values[i], s_q_n[i], s_next_q[i])?;
                slope_q[i] = self.eos.dq_s_slope(rho_w.values[i], s_q_n[i], s_next_q[i])?;
            }
            let load = self.transport_load(&state.s, &g_q);
            let m_u = self.g.apply(&m_op, &u_new);
            let residual: Vec<Real> = m_u
                .iter()
                .zip(&mu0)
                .zip(&load)
                .map(|((a, b), l)| a - b - dt * l)
                .collect();
            let delta = self.wave_correction(&m_op, &residual, 0.5 * dt * dt, |p| {
                let rate = self.transport_rate_q(&state.s, p)?;
                let scaled: Vec<Real> = rate.iter().zip(&slope_q).map(|(r, c)| r * c).collect();
                Ok(self.transport_load(&state.s, &scaled))
            })?;
            let u_next: Vec<Real> = u_new.iter().zip(&delta).map(|(u, d)| u - d).collect();
            inc = Self::rel_increment(&u_next, &u_new)
                .max(Self::rel_increment(&s_next.coeffs, &s_new.coeffs));
            u_new = u_next;
            s_new = s_next;
            if inc <= cfg.picard_tol {
                let mut out = state.clone();
                out.u.coeffs = u_new;
                out.s = s_new;
                return Ok(out);
            }
        }
        Err(Self::picard_failure("entropy", cfg.picard_max_iters, inc))
    }

    /// `Π¹(b × w)` evaluated through the edge dofs.
    fn cross_projection(&self, b: &Field, w: &[Real]) -> Field {
        let cx = self.g.complex();
        let mut coeffs = Vec::with_capacity(cx.total_len(SpaceTag::V1));
        for c in 0..3 {
            let (a, bb) = ((c + 1) % 3, (c + 2) % 3);
            let sets = cx.dof_point_sets(SpaceTag::V1, c);
            let b_a = cx.eval_component_on(
                SpaceTag::V2,
                a,
                &b.coeffs[cx.block_range(SpaceTag::V2, a)],
                sets,
                None,
            );
            let b_b = cx.eval_component_on(
                SpaceTag::V2,
                bb,
                &b.coeffs[cx.block_range(SpaceTag::V2, bb)],
                sets,
                None,
            );
            let w_a = cx.eval_component_on(
                SpaceTag::X,
                a,
                &w[cx.block_range(SpaceTag::X, a)],
                sets,
                None,
            );
            let w_b = cx.eval_component_on(
                SpaceTag::X,
                bb,
                &w[cx.block_range(SpaceTag::X, bb)],
                sets,
                None,
            );
            let vals: Vec<Real> = (0..b_a.len())
                .map(|i| b_a[i] * w_b[i] - b_b[i] * w_a[i])
                .collect();
            coeffs.extend(cx.project_from_point_values(SpaceTag::V1, c, vals));
        }
        Field {
            space_tag: SpaceTag::V1,
            coeffs,
        }
    }

    /// Lorentz force load `v ↦ ∫ b_half · ∇×Π¹(b × v)`.
    fn lorentz_load(&self, b: &Field, b_half: &[Real]) -> Vec<Real> {
        let cx = self.g.complex();
        let m2 = self.g.apply(&self.g.mass_matrix(SpaceTag::V2), b_half);
        let m1 = cx.curl_adjoint(&m2);
        let mut load = vec![0.0; cx.total_len(SpaceTag::X)];
        for c in 0..3 {
            let (a, bb) = ((c + 1) % 3, (c + 2) % 3);
            let sets = cx.dof_point_sets(SpaceTag::V1, c);
            let nu = cx.project_adjoint_to_points(
                SpaceTag::V1,
                c,
                &m1[cx.block_range(SpaceTag::V1, c)],
            );
            let b_a = cx.eval_component_on(
                SpaceTag::V2,
                a,
                &b.coeffs[cx.block_range(SpaceTag::V2, a)],
                sets,
                None,
            );
            let b_b = cx.eval_component_on(
                SpaceTag::V2,
                bb,
                &b.coeffs[cx.block_range(SpaceTag::V2, bb)],
                sets,
                None,
            );
            let plus: Vec<Real> = nu.iter().zip(&b_a).map(|(n, v)| n * v).collect();
            let lc = cx.scatter_component_from(SpaceTag::X, bb, &plus, sets, None);
            for (dst, v) in load[cx.block_range(SpaceTag::X, bb)].iter_mut().zip(&lc) {
                *dst += v;
            }
            let minus: Vec<Real> = nu.iter().zip(&b_b).map(|(n, v)| n * v).collect();
            let la = cx.scatter_component_from(SpaceTag::X, a, &minus, sets, None);
            for (dst, v) in load[cx.block_range(SpaceTag::X, a)].iter_mut().zip(&la) {
                *dst -= v;
            }
        }
        load
    }

    /// Ideal induction: `Bⁿ⁺¹ = Bⁿ − Δt ∇×Π¹(Bⁿ × u^{n+1/2})` coupled to the
    /// Lorentz force `∫ B^{n+1/2}·∇×Π¹(Bⁿ × v)`; magnetic plus kinetic energy
    /// cancels exactly at the fixed point and `div B` never changes.
    ///
    /// The pair is linear in `(u, B)`, so a single Newton sweep through the
    /// shifted operator `M + (Δt²/4)·GᵀM₂G` lands on the solution and the
    /// second sweep only confirms convergence; a plain fixed-point update
    /// would diverge once `Δt` exceeds the Alfvén crossing time of a cell.
    pub fn step_b(&self, state: &State, cfg: &StepConfig) -> Result<State> {
        self.check_state(state)?;
        if state.b.coeffs.iter().all(|&v| v == 0.0) {
            return Ok(state.clone());
        }
        let cx = self.g.complex();
        let dt = cfg.dt;
        let rho_w = self.density_weight(&state.rho)?;
        let m_op = self.g.weighted_mass(SpaceTag::X, &rho_w)?;
        let mu0 = self.g.apply(&m_op, &state.u.coeffs);

        let mut u_new = state.u.coeffs.clone();
        let mut b_new = state.b.coeffs.clone();
        let mut inc = Real::INFINITY;
        for _ in 0..cfg.picard_max_iters {
            let w: Vec<Real> = state
                .u
                .coeffs
                .iter()
                .zip(&u_new)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let cross = self.cross_projection(&state.b, &w);
            let curl_c = cx.curl(&cross)?;
            let b_next: Vec<Real> = state
                .b
                .coeffs
                .iter()
                .zip(&curl_c.coeffs)
                .map(|(b0, c)| b0 - dt * c)
                .collect();
            let b_half: Vec<Real> = state
                .b
                .coeffs
                .iter()
                .zip(&b_next)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let load = self.lorentz_load(&state.b, &b_half);
            let m_u = self.g.apply(&m_op, &u_new);
            let residual: Vec<Real> = m_u
                .iter()
                .zip(&mu0)
                .zip(&load)
                .map(|((a, b), l)| a - b - dt * l)
                .collect();
            let delta = self.wave_correction(&m_op, &residual, 0.25 * dt * dt, |p| {
                let gp = cx.curl(&self.cross_projection(&state.b, p))?;
                Ok(self.lorentz_load(&state.b, &gp.coeffs))
            })?;
            let u_next: Vec<Real> = u_new.iter().zip(&delta).map(|(u, d)| u - d).collect();
            inc = Self::rel_increment(&u_next, &u_new).max(Self::rel_increment(&b_next, &b_new));
            u_new = u_next;
            b_new = b_next;
            if inc <= cfg.picard_tol {
                let mut out = state.clone();
                out.u.coeffs = u_new;
                out.b.coeffs = b_new;
                return Ok(out);
            }
        }
        Err(Self::picard_failure("induction", cfg.picard_max_iters, inc))
    }

    /// Solves `∫(ρe(ρ, sⁿ⁺¹) − ρe(ρ, sⁿ)) q = ∫ heat q` for all `q` in `V3`
    /// by Newton iteration with the temperature-weighted mass as Jacobian.
    fn entropy_deposit(
        &self,
        rho_q: &[Real],
        s0: &Field,
        heat_q: &[Real],
        cfg: &StepConfig,
    ) -> Result<Field> {
        let cx = self.g.complex();
        let qw = self.g.quadrature_weights();
        let s0_q = self.g.weight_from_field(s0, 0).values;
        let mut rhs_q = vec![0.0; rho_q.len()];
        for i in 0..rhs_q.len() {
            rhs_q[i] = (self.eos.rho_e(rho_q[i], s0_q[i])? + heat_q[i]) * qw[i];
        }
        let rhs_dual =
            cx.scatter_component_from(SpaceTag::V3, 0, &rhs_q, [PointSet::Quad; 3], None);

        let mut s = s0.clone();
        let mut inc = Real::INFINITY;
        for _ in 0..cfg.picard_max_iters {
            let s_q = self.g.weight_from_field(&s, 0).values;
            let mut cur_q = vec![0.0; rho_q.len()];
            let mut t_q = vec![0.0; rho_q.len()];
            for i in 0..cur_q.len() {
                cur_q[i] = self.eos.rho_e(rho_q[i], s_q[i])? * qw[i];
                t_q[i] = self.eos.temperature(rho_q[i], s_q[i])?;
            }
            let cur_dual =
                cx.scatter_component_from(SpaceTag::V3, 0, &cur_q, [PointSet::Quad; 3], None);
            let r: Vec<Real> = rhs_dual.iter().zip(&cur_dual).map(|(a, b)| a - b).collect();
            let t_op = self
                .g
                .weighted_mass(SpaceTag::V3, &WeightFunction { values: t_q })?;
            let delta = self.g.solve(&t_op, &r)?;
            let prev = s.coeffs.clone();
            for (sv, d) in s.coeffs.iter_mut().zip(&delta) {
                *sv += d;
            }
            inc = Self::rel_increment(&s.coeffs, &prev);
            if inc <= cfg.picard_tol {
                return Ok(s);
            }
        }
        Err(Self::picard_failure(
            "entropy deposit",
            cfg.picard_max_iters,
            inc,
        ))
    }

    /// Velocity gradient contraction `Σ_{c,d} ∂_d a_c ∂_d b_c` at quadrature.
    fn grad_contraction(&self, a: &[Real], b: &[Real]) -> Vec<Real> {
        let cx = self.g.complex();
        let mut out = vec![0.0; self.g.quadrature_weights().len()];
        for c in 0..3 {
            let ra = &a[cx.block_range(SpaceTag::X, c)];
            let rb = &b[cx.block_range(SpaceTag::X, c)];
            for d in 0..3 {
                let da = cx.eval_component_on(SpaceTag::X, c, ra, [PointSet::Quad; 3], Some(d));
                let db = cx.eval_component_on(SpaceTag::X, c, rb, [PointSet::Quad; 3], Some(d));
                for ((o, x), y) in out.iter_mut().zip(&da).zip(&db) {
                    *o += x * y;
                }
            }
        }
        out
    }

    /// Implicit viscosity `( M[ρⁿ] + Δt K[μ] ) uⁿ⁺¹ = M[ρⁿ] uⁿ` with the heat
    /// `Δt μ ∇u^{n+1/2} : ∇uⁿ⁺¹` deposited into entropy.
    pub fn step_visc(&self, state: &State, cfg: &StepConfig) -> Result<State> {
        self.check_state(state)?;
        let mu = match self.resolve_mu(state, cfg)? {
            Some(w) => w,
            None => return Ok(state.clone()),
        };
        self.step_visc_with(state, cfg, &mu)
    }

    fn step_visc_with(
        &self,
        state: &State,
        cfg: &StepConfig,
        mu: &WeightFunction,
    ) -> Result<State> {
        if mu.values.iter().all(|&v| v == 0.0) {
            return Ok(state.clone());
        }
        let dt = cfg.dt;
        let rho_w = self.density_weight(&state.rho)?;
        let m_op = self.g.weighted_mass(SpaceTag::X, &rho_w)?;
        let visc_op = self.g.viscous_operator(&rho_w, mu, dt);
        let rhs = self.g.apply(&m_op, &state.u.coeffs);
        let u1 = self.solve_u(&visc_op, &rhs, &state.u.coeffs)?;
        let u_half: Vec<Real> = state
            .u
            .coeffs
            .iter()
            .zip(&u1)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let contraction = self.grad_contraction(&u_half, &u1);
        let heat_q: Vec<Real> = contraction
            .iter()
            .zip(&mu.values)
            .map(|(c, m)| dt * m * c)
            .collect();
        let s1 = self.entropy_deposit(&rho_w.values, &state.s, &heat_q, cfg)?;
        let mut out = state.clone();
        out.u.coeffs = u1;
        out.s = s1;
        Ok(out)
    }

    /// Implicit resistivity on the magnetic field with Joule heat
    /// `Δt η ĵ^{n+1/2}·ĵⁿ⁺¹` deposited into entropy; `div B` is unchanged.
    pub fn step_res(&self, state: &State, cfg: &StepConfig) -> Result<State> {
        self.check_state(state)?;
        let eta = match self.resolve_eta(state, cfg)? {
            Some(w) => w,
            None => return Ok(state.clone()),
        };
        self.step_res_with(state, cfg, &eta)
    }

    fn step_res_with(
        &self,
        state: &State,
        cfg: &StepConfig,
        eta: &WeightFunction,
    ) -> Result<State> {
        if eta.values.iter().all(|&v| v == 0.0) {
            return Ok(state.clone());
        }
        let reference = match &cfg.linearized_b0 {
            Some(b0) => {
                self.g.complex().check_tag(b0, SpaceTag::V2)?;
                Some(b0)
            }
            None => None,
        };
        let cx = self.g.complex();
        let dt = cfg.dt;
        // Deviation from the linearization background (the background drops
        // out entirely when there is none).
        let dev0 = match reference {
            Some(b0) => Field {
                space_tag: SpaceTag::V2,
                coeffs: state
                    .b
                    .coeffs
                    .iter()
                    .zip(&b0.coeffs)
                    .map(|(b, r)| b - r)
                    .collect(),
            },
            None => state.b.clone(),
        };
        if dev0.coeffs.iter().all(|&v| v == 0.0) {
            return Ok(state.clone());
        }
        let op = self.g.resistive_operator(eta, dt, self.v1_mask.clone());
        let rhs = self.g.apply(&self.g.mass_matrix(SpaceTag::V2), &dev0.coeffs);
        let dev1 = Field {
            space_tag: SpaceTag::V2,
            coeffs: self.g.solve(&op, &rhs)?,
        };
        let j0 = self.g.dual_curl_masked(&dev0, self.v1_mask.as_deref())?;
        let j1 = self.g.dual_curl_masked(&dev1, self.v1_mask.as_deref())?;
        let mut heat_q = vec![0.0; self.g.quadrature_weights().len()];
        for c in 0..3 {
            let r = cx.block_range(SpaceTag::V1, c);
            let j0_q =
                cx.eval_component_on(SpaceTag::V1, c, &j0.coeffs[r.clone()], [PointSet::Quad; 3], None);
            let j1_q =
                cx.eval_component_on(SpaceTag::V1, c, &j1.coeffs[r], [PointSet::Quad; 3], None);
            for ((h, a), b) in heat_q.iter_mut().zip(&j0_q).zip(&j1_q) {
                *h += 0.5 * (a + b) * b;
            }
        }
        for (h, e) in heat_q.iter_mut().zip(&eta.values) {
            *h *= dt * e;
        }
        let rho_q = self.density_weight(&state.rho)?;
        let s1 = self.entropy_deposit(&rho_q.values, &state.s, &heat_q, cfg)?;
        let mut out = state.clone();
        out.b.coeffs = match reference {
            Some(b0) => b0
                .coeffs
                .iter()
                .zip(&dev1.coeffs)
                .map(|(r, d)| r + d)
                .collect(),
            None => dev1.coeffs,
        };
        out.s = s1;
        Ok(out)
    }

    /// Resistive step linearized about `cfg.linearized_b0`; diffusion and
    /// heating both act on the deviation `B − B0`.
    pub fn step_res_linearized(&self, state: &State, cfg: &StepConfig) -> Result<State> {
        if cfg.linearized_b0.is_none() {
            return Err(Error::Config(
                "linearized resistive step requires a background field".into(),
            ));
        }
        self.step_res(state, cfg)
    }

    fn resolve_mu(&self, state: &State, cfg: &StepConfig) -> Result<Option<WeightFunction>> {
        cfg.mu.validate()?;
        Ok(match cfg.mu {
            DissipationSpec::Off => None,
            DissipationSpec::Constant(v) => {
                if v == 0.0 {
                    None
                } else {
                    Some(self.g.weight_constant(v))
                }
            }
            DissipationSpec::Artificial(c) => {
                if c == 0.0 {
                    None
                } else {
                    Some(artificial_mu(&self.g, &state.u, c)?)
                }
            }
        })
    }

    fn resolve_eta(&self, state: &State, cfg: &StepConfig) -> Result<Option<WeightFunction>> {
        cfg.eta.validate()?;
        Ok(match cfg.eta {
            DissipationSpec::Off => None,
            DissipationSpec::Constant(v) => {
                if v == 0.0 {
                    None
                } else {
                    Some(self.g.weight_constant(v))
                }
            }
            DissipationSpec::Artificial(c) => {
                if c == 0.0 {
                    None
                } else {
                    Some(artificial_eta(&self.g, &state.b, c, self.v1_mask.as_deref())?)
                }
            }
        })
    }

    /// One palindromic splitting step of size `cfg.dt`: the six propagators
    /// at `Δt/2` in the order mass, momentum, entropy, induction, viscosity,
    /// resistivity, then the same six reversed. Advances `time` by `dt`.
    pub fn strang_step(&self, state: &State, cfg: &StepConfig) -> Result<State> {
        let mut clock = PropagatorClock::default();
        self.strang_step_timed(state, cfg, &mut clock)
    }

    /// [`Self::strang_step`] with wall-clock accumulation per propagator.
    pub fn strang_step_timed(
        &self,
        state: &State,
        cfg: &StepConfig,
        clock: &mut PropagatorClock,
    ) -> Result<State> {
        self.check_state(state)?;
        let half = StepConfig {
            dt: 0.5 * cfg.dt,
            ..cfg.clone()
        };
        // Dissipation weights are resolved from the step-start state and
        // frozen across the whole step.
        let mu = self.resolve_mu(state, cfg)?;
        let eta = self.resolve_eta(state, cfg)?;

        enum Prop {
            Rho,
            M,
            S,
            B,
            Visc,
            Res,
        }
        use Prop::*;
        let schedule = [Rho, M, S, B, Visc, Res, Res, Visc, B, S, M, Rho];
        let mut cur = state.clone();
        for (k, prop) in schedule.iter().enumerate() {
            let t0 = Instant::now();
            let (next, slot, name) = match prop {
                Rho => (self.step_rho(&cur, &half), 0, "mass"),
                M => (self.step_m(&cur, &half), 1, "momentum"),
                S => (self.step_s(&cur, &half), 2, "entropy"),
                B => (self.step_b(&cur, &half), 3, "induction"),
                Visc => (
                    match &mu {
                        Some(w) => self.step_visc_with(&cur, &half, w),
                        None => Ok(cur.clone()),
                    },
                    4,
                    "viscosity",
                ),
                Res => (
                    match &eta {
                        Some(w) => self.step_res_with(&cur, &half, w),
                        None => Ok(cur.clone()),
                    },
                    5,
                    "resistivity",
                ),
            };
            let elapsed = t0.elapsed();
            match slot {
                0 => clock.rho += elapsed,
                1 => clock.m += elapsed,
                2 => clock.s += elapsed,
                3 => clock.b += elapsed,
                4 => clock.visc += elapsed,
                _ => clock.res += elapsed,
            }
            cur = next.map_err(|e| match e {
                Error::Solver { context, detail } => Error::Solver {
                    context: format!("splitting sub-step {} ({name}): {context}", k + 1),
                    detail,
                },
                other => other,
            })?;
        }
        cur.time = state.time + cfg.dt;
        Ok(cur)
    }
}
