//! Artificial viscosity and resistivity weights for shock capturing.
//!
//! The artificial weights follow the gradient-magnitude closure
//! `μ = μ_a |∇u_h|` and `η = η_a |∇̃×B_h|`, sampled at quadrature nodes.
//! They are refreshed once per outer Strang step from the step-start state
//! and frozen within the step, which keeps every sub-propagator's
//! conservation identity intact.

use serde::de::Error as _;

use crate::complex::{DeRhamComplex, Field, PointSet, SpaceTag};
use crate::galerkin::{CompMask, Galerkin, WeightFunction};
use crate::{Error, Real, Result};

/// How a dissipation coefficient is supplied.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum DissipationSpec {
    /// No dissipation; the propagator becomes the identity.
    #[default]
    Off,
    /// Spatially constant coefficient.
    Constant(Real),
    /// Gradient-magnitude artificial coefficient (the factor `μ_a`/`η_a`).
    Artificial(Real),
}

impl DissipationSpec {
    /// Rejects negative coefficients.
    pub fn validate(&self) -> Result<()> {
        let v = match self {
            DissipationSpec::Off => return Ok(()),
            DissipationSpec::Constant(v) | DissipationSpec::Artificial(v) => *v,
        };
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Config(format!(
                "dissipation coefficient must be nonnegative, got {v}"
            )));
        }
        Ok(())
    }

    /// True when the spec can never produce a nonzero weight.
    pub fn is_off(&self) -> bool {
        matches!(
            self,
            DissipationSpec::Off
                | DissipationSpec::Constant(0.0)
                | DissipationSpec::Artificial(0.0)
        )
    }
}

impl serde::Serialize for DissipationSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DissipationSpec::Off => ser.serialize_str("off"),
            DissipationSpec::Constant(v) => ser.serialize_f64(*v),
            DissipationSpec::Artificial(v) => {
                use serde::ser::SerializeMap;
                let mut m = ser.serialize_map(Some(1))?;
                m.serialize_entry("artificial", v)?;
                m.end()
            }
        }
    }
}

impl<'de> serde::Deserialize<'de> for DissipationSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(Real),
            Map { artificial: Real },
        }
        let spec = match Raw::deserialize(de)? {
            Raw::Text(s) if s == "off" => DissipationSpec::Off,
            Raw::Text(s) => {
                return Err(D::Error::custom(format!(
                    "expected \"off\", a number, or {{ artificial = c }}, got \"{s}\""
                )))
            }
            Raw::Number(v) => DissipationSpec::Constant(v),
            Raw::Map { artificial } => DissipationSpec::Artificial(artificial),
        };
        spec.validate().map_err(D::Error::custom)?;
        Ok(spec)
    }
}

/// The paper's default artificial coefficient `2h²` with `h` the smallest
/// cell edge across nontrivial directions.
pub fn default_artificial_coefficient(cx: &DeRhamComplex) -> Real {
    let mut h = Real::INFINITY;
    for d in 0..3 {
        let dir = cx.direction(d);
        if !dir.trivial {
            h = h.min(dir.fine.h);
        }
    }
    if !h.is_finite() {
        h = 1.0;
    }
    2.0 * h * h
}

/// `μ_a` times the Frobenius norm of the velocity gradient at each
/// quadrature node.
pub fn artificial_mu(g: &Galerkin, u: &Field, mu_a: Real) -> Result<WeightFunction> {
    if u.space_tag != SpaceTag::X {
        return Err(Error::SpaceMismatch {
            expected: SpaceTag::X.name(),
            got: u.space_tag.name(),
        });
    }
    let cx = g.complex();
    let mut sq = vec![0.0; g.quadrature_weights().len()];
    for c in 0..3 {
        let blk = &u.coeffs[cx.block_range(SpaceTag::X, c)];
        for d in 0..3 {
            let vals = cx.eval_component_on(SpaceTag::X, c, blk, [PointSet::Quad; 3], Some(d));
            for (s, v) in sq.iter_mut().zip(&vals) {
                *s += v * v;
            }
        }
    }
    Ok(WeightFunction {
        values: sq.into_iter().map(|s| mu_a * s.sqrt()).collect(),
    })
}

/// `η_a` times the magnitude of the dual curl at each quadrature node.
pub fn artificial_eta(
    g: &Galerkin,
    b: &Field,
    eta_a: Real,
    v1_mask: Option<&[CompMask]>,
) -> Result<WeightFunction> {
    let j = g.dual_curl_masked(b, v1_mask)?;
    let cx = g.complex();
    let mut sq = vec![0.0; g.quadrature_weights().len()];
    for c in 0..3 {
        let blk = &j.coeffs[cx.block_range(SpaceTag::V1, c)];
        let vals = cx.eval_component_on(SpaceTag::V1, c, blk, [PointSet::Quad; 3], None);
        for (s, v) in sq.iter_mut().zip(&vals) {
            *s += v * v;
        }
    }
    Ok(WeightFunction {
        values: sq.into_iter().map(|s| eta_a * s.sqrt()).collect(),
    })
}
