//! Perfect-gas equation of state and the difference quotients used by the
//! energy-conserving propagators.
//!
//! The internal energy is stored as the density `ρe(ρ,s) = ρ^γ exp(s/ρ)`;
//! temperature and pressure derive from it. The difference quotients
//! `dq_rho` and `dq_s` are the discrete-gradient ratios whose telescoping
//! makes the transport steps conserve total energy; near the degenerate
//! point they switch to the analytic derivative at the midpoint state.

use crate::{Error, Real, Result};

/// Relative spacing below which a difference quotient switches to its
/// midpoint expansion. The quotient's subtractive cancellation grows as
/// `ε/θ` while the corrected expansion is accurate to `θ⁴`, so the switch
/// sits where the two error curves cross; a narrower window would leave
/// states just outside it with noise far above the nonlinear-iteration
/// tolerance, and the iterations would stall chasing it.
const DEGENERATE_REL: Real = 1e-3;

/// Relative spacing below which a difference-quotient slope degenerates.
/// The slope formula divides by Δ², so its cancellation grows quadratically
/// as the states coincide, while the midpoint value is `O(Δ²)` accurate.
const SLOPE_DEGENERATE_REL: Real = 1e-3;

/// Perfect gas with adiabatic index `γ > 1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Eos {
    pub gamma: Real,
}

impl Eos {
    pub fn new(gamma: Real) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Config(format!(
                "adiabatic index must exceed 1, got {gamma}"
            )));
        }
        Ok(Eos { gamma })
    }

    fn check_density(&self, rho: Real) -> Result<()> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::ThermodynamicState(format!(
                "nonpositive density {rho}"
            )));
        }
        Ok(())
    }

    /// Internal energy density `ρe = ρ^γ exp(s/ρ)`.
    pub fn rho_e(&self, rho: Real, s: Real) -> Result<Real> {
        self.check_density(rho)?;
        Ok(rho.powf(self.gamma) * (s / rho).exp())
    }

    /// Temperature `T = ∂(ρe)/∂s = ρ^{γ-1} exp(s/ρ)`.
    pub fn temperature(&self, rho: Real, s: Real) -> Result<Real> {
        self.check_density(rho)?;
        Ok(rho.powf(self.gamma - 1.0) * (s / rho).exp())
    }

    /// Pressure `p = (γ-1) ρe`.
    pub fn pressure(&self, rho: Real, s: Real) -> Result<Real> {
        Ok((self.gamma - 1.0) * self.rho_e(rho, s)?)
    }

    /// Analytic derivative `∂ρ(ρe) = ρ^{γ-1} exp(s/ρ) (γ - s/ρ)`.
    pub fn d_rho_e(&self, rho: Real, s: Real) -> Result<Real> {
        self.check_density(rho)?;
        Ok(rho.powf(self.gamma - 1.0) * (s / rho).exp() * (self.gamma - s / rho))
    }

    /// Difference quotient `(ρ_b e(ρ_b,s) - ρ_a e(ρ_a,s)) / (ρ_b - ρ_a)`,
    /// switching to the midpoint expansion
    /// `∂ρ(ρe) + Δ²/24 ∂³ρ(ρe)` when the densities nearly coincide. The
    /// correction term keeps the expansion accurate to `O(Δ⁴)`, so the two
    /// branches agree to machine precision at the switch.
    pub fn dq_rho(&self, rho_a: Real, rho_b: Real, s: Real) -> Result<Real> {
        self.check_density(rho_a)?;
        self.check_density(rho_b)?;
        let delta = rho_b - rho_a;
        if delta.abs() < DEGENERATE_REL * rho_a.abs().max(rho_b.abs()) {
            let mid = 0.5 * (rho_a + rho_b);
            return Ok(self.d_rho_e(mid, s)? + delta * delta / 24.0 * self.d3_rho_e(mid, s)?);
        }
        Ok((self.rho_e(rho_b, s)? - self.rho_e(rho_a, s)?) / delta)
    }

    /// Difference quotient `(ρ e(ρ,s_b) - ρ e(ρ,s_a)) / (s_b - s_a)`,
    /// switching to the midpoint expansion
    /// `T + Δ²/24 ∂³s(ρe)` with `∂³s(ρe) = ρ^{γ-3} exp(s/ρ)` when the
    /// entropies nearly coincide.
    pub fn dq_s(&self, rho: Real, s_a: Real, s_b: Real) -> Result<Real> {
        self.check_density(rho)?;
        let delta = s_b - s_a;
        if delta.abs() < DEGENERATE_REL * s_a.abs().max(s_b.abs()).max(1.0) {
            let mid = 0.5 * (s_a + s_b);
            let d3 = rho.powf(self.gamma - 3.0) * (mid / rho).exp();
            return Ok(self.temperature(rho, mid)? + delta * delta / 24.0 * d3);
        }
        Ok((self.rho_e(rho, s_b)? - self.rho_e(rho, s_a)?) / delta)
    }

    /// Second density derivative
    /// `∂²ρ(ρe) = exp(s/ρ) ρ^{γ-4} (γ(γ-1)ρ² - 2(γ-1)sρ + s²)`.
    /// The quadratic in `s` has negative discriminant `-4(γ-1)ρ²`, so `ρe`
    /// is strictly convex in `ρ` and the value is always positive.
    pub fn d2_rho_e(&self, rho: Real, s: Real) -> Result<Real> {
        self.check_density(rho)?;
        let g = self.gamma;
        let quad = g * (g - 1.0) * rho * rho - 2.0 * (g - 1.0) * s * rho + s * s;
        Ok((s / rho).exp() * rho.powf(g - 4.0) * quad)
    }

    /// Third density derivative
    /// `∂³ρ(ρe) = exp(s/ρ) ρ^{γ-6} (-sQ + (γ-4)ρQ + ρ²Q')` with
    /// `Q = γ(γ-1)ρ² - 2(γ-1)sρ + s²` and `Q' = 2γ(γ-1)ρ - 2(γ-1)s`.
    pub fn d3_rho_e(&self, rho: Real, s: Real) -> Result<Real> {
        self.check_density(rho)?;
        let g = self.gamma;
        let q = g * (g - 1.0) * rho * rho - 2.0 * (g - 1.0) * s * rho + s * s;
        let dq = 2.0 * g * (g - 1.0) * rho - 2.0 * (g - 1.0) * s;
        let bracket = -s * q + (g - 4.0) * rho * q + rho * rho * dq;
        Ok((s / rho).exp() * rho.powf(g - 6.0) * bracket)
    }

    /// Derivative of `dq_rho` in its second argument, the slope the implicit
    /// wave solves need. Clamped at zero so round-off near the degenerate
    /// point can never make the linearized operator indefinite; convexity of
    /// `ρe` makes the exact value nonnegative.
    pub fn dq_rho_slope(&self, rho_a: Real, rho_b: Real, s: Real) -> Result<Real> {
        self.check_density(rho_a)?;
        self.check_density(rho_b)?;
        let delta = rho_b - rho_a;
        if delta.abs() < SLOPE_DEGENERATE_REL * rho_a.abs().max(rho_b.abs()) {
            return Ok(0.5 * self.d2_rho_e(0.5 * (rho_a + rho_b), s)?);
        }
        let num = self.d_rho_e(rho_b, s)? * delta - (self.rho_e(rho_b, s)? - self.rho_e(rho_a, s)?);
        Ok((num / (delta * delta)).max(0.0))
    }

    /// Derivative of `dq_s` in its second argument, clamped at zero for the
    /// same reason as [`Eos::dq_rho_slope`]. The degenerate limit is half the
    /// entropy second derivative `∂²s(ρe) = ρ^{γ-2} exp(s/ρ)`.
    pub fn dq_s_slope(&self, rho: Real, s_a: Real, s_b: Real) -> Result<Real> {
        self.check_density(rho)?;
        let delta = s_b - s_a;
        if delta.abs() < SLOPE_DEGENERATE_REL * s_a.abs().max(s_b.abs()).max(1.0) {
            let mid = 0.5 * (s_a + s_b);
            return Ok(0.5 * rho.powf(self.gamma - 2.0) * (mid / rho).exp());
        }
        let num =
            self.temperature(rho, s_b)? * delta - (self.rho_e(rho, s_b)? - self.rho_e(rho, s_a)?);
        Ok((num / (delta * delta)).max(0.0))
    }
}
