//! Case library: the verification problems the solver is exercised on.
//!
//! Each case fixes the domain, boundary treatment and initial data; the
//! [`CaseSpec`] chooses the resolution, time step and dissipation on top of
//! that.  [`preset`] returns desk-scale configurations that run in minutes;
//! the doc comment of each case names the production-scale parameters.
//! Initial fields always go through the commuting projectors, so curl- and
//! divergence-structure of the analytic data survives discretization, and
//! random perturbations are drawn from a recorded seed, making every noisy
//! case bit-reproducible.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{DeRhamComplex, DirectionSpec, Field, SpaceTag};
use crate::eos::Eos;
use crate::galerkin::Galerkin;
use crate::integrators::{Integrator, State, StepConfig};
use crate::splines::Boundary;
use crate::stabilization::DissipationSpec;
use crate::{Error, Real, Result};

/// Background density of the one dimensional current sheet.
pub const SHEET_1D_RHO0: Real = 1.0;
/// Background entropy density of the one dimensional current sheet.
pub const SHEET_1D_S0: Real = 9.62;
/// Guide field strength of the one dimensional current sheet.
pub const SHEET_1D_BZ0: Real = 1e4;
/// In-plane field strength of the one dimensional current sheet.
pub const SHEET_1D_BY0: Real = 1e-3;
/// Diffusion time offset of the one dimensional current sheet.
pub const SHEET_1D_T0: Real = 10.0;

/// Sheet half-thickness of the two dimensional current sheet.
pub const SHEET_2D_DELTA: Real = 0.1;
/// Default perturbation amplitude of the two dimensional current sheet.
pub const SHEET_2D_EPSILON: Real = 1e-4;
/// Default number of excited modes of the two dimensional current sheet.
pub const SHEET_2D_MODES: usize = 18;

/// Default noise amplitude of the wave dispersion study.
pub const DISPERSION_AMPLITUDE: Real = 1e-2;
/// Default noise seed of the wave dispersion study.
pub const DISPERSION_SEED: u64 = 0;

/// The verification problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseName {
    /// Linear waves over a uniform background on `[0, 10]`, excited by
    /// velocity noise.  Production scale: 128 cells, `p = 2`,
    /// `dt = 3e-2`, `T = 18`.
    #[serde(rename = "dispersion-1d")]
    Dispersion1D,
    /// Resistive diffusion of a magnetic shear layer on `[-50, 50]` with an
    /// error-function reference.  Production scale: `dt = 2e-3`, `T = 1000`.
    #[serde(rename = "current-sheet-1d")]
    CurrentSheet1D,
    /// Ideal vortex on `[0, 2 pi]^2` stabilized by artificial dissipation.
    /// Production scale: 256 x 256, `dt = 1e-3`.
    #[serde(rename = "orszag-tang-ideal")]
    OrszagTangIdeal,
    /// Viscous and resistive vortex on `[0, 2 pi]^2` with
    /// `mu = eta = 0.01`.  Production scale: 256 x 256, `dt = 1e-3`.
    #[serde(rename = "orszag-tang-vr")]
    OrszagTangVr,
    /// Purely hydrodynamic shear instability on `[0, 1] x [-1, 1]`.
    /// Production scale: 128 x 256, `dt = 5e-4`.
    #[serde(rename = "kelvin-helmholtz")]
    KelvinHelmholtz,
    /// Tearing-unstable current sheet on `[0, 6 pi] x [-pi/2, pi/2]` with
    /// linearized resistivity.  Production scale: 128 x 256, `dt = 0.1`.
    #[serde(rename = "current-sheet-2d")]
    CurrentSheet2D,
}

impl CaseName {
    /// All cases, in the order they are documented.
    pub const ALL: [CaseName; 6] = [
        CaseName::Dispersion1D,
        CaseName::CurrentSheet1D,
        CaseName::OrszagTangIdeal,
        CaseName::OrszagTangVr,
        CaseName::KelvinHelmholtz,
        CaseName::CurrentSheet2D,
    ];

    /// The kebab-case identifier used in config files and on the CLI.
    pub fn id(self) -> &'static str {
        match self {
            CaseName::Dispersion1D => "dispersion-1d",
            CaseName::CurrentSheet1D => "current-sheet-1d",
            CaseName::OrszagTangIdeal => "orszag-tang-ideal",
            CaseName::OrszagTangVr => "orszag-tang-vr",
            CaseName::KelvinHelmholtz => "kelvin-helmholtz",
            CaseName::CurrentSheet2D => "current-sheet-2d",
        }
    }

    /// Number of nontrivial directions.
    pub fn dimension(self) -> usize {
        match self {
            CaseName::Dispersion1D | CaseName::CurrentSheet1D => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for CaseName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for CaseName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseName::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = CaseName::ALL.iter().map(|c| c.id()).collect();
                Error::Config(format!(
                    "unknown case {s:?}, expected one of {}",
                    known.join(", ")
                ))
            })
    }
}

/// Mesh resolution; the domain itself is fixed by the case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    /// Cells per nontrivial direction (one entry per case dimension).
    pub cells: Vec<usize>,
    /// Coarse spline degree `p`.
    pub degree: usize,
}

/// Physical parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    /// Adiabatic exponent.
    pub gamma: Real,
    /// Viscosity specification.
    #[serde(default)]
    pub mu: DissipationSpec,
    /// Resistivity specification.
    #[serde(default)]
    pub eta: DissipationSpec,
}

/// Perturbation parameters; cases ignore the fields they do not use.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Noise or perturbation amplitude override.
    #[serde(default)]
    pub amplitude: Option<Real>,
    /// Seed for random perturbations.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Number of excited modes of the two dimensional current sheet.
    #[serde(default)]
    pub modes: Option<usize>,
    /// Per-mode phase offsets of the two dimensional current sheet
    /// (defaults to all zero; the length must match the mode count).
    #[serde(default)]
    pub phases: Option<Vec<Real>>,
}

/// A fully specified run: case identity plus discretization choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    /// Which verification problem to set up.
    pub name: CaseName,
    /// Mesh resolution.
    pub geometry: Geometry,
    /// Adiabatic exponent and dissipation.
    pub physics: Physics,
    /// Time step.
    pub dt: Real,
    /// Final time.
    pub t_end: Real,
    /// Perturbation parameters.
    #[serde(default)]
    pub perturbation: Perturbation,
}

impl CaseSpec {
    /// Checks internal consistency without building anything.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Config`] describing the first violated requirement.
    pub fn validate(&self) -> Result<()> {
        let dim = self.name.dimension();
        if self.geometry.cells.len() != dim {
            return Err(Error::Config(format!(
                "case {} is {dim}-dimensional but {} cell counts were given",
                self.name,
                self.geometry.cells.len()
            )));
        }
        if self.geometry.cells.iter().any(|&n| n < 4) {
            return Err(Error::Config(
                "every direction needs at least 4 cells".into(),
            ));
        }
        if self.geometry.degree < 1 {
            return Err(Error::Config("the spline degree must be at least 1".into()));
        }
        if !(self.physics.gamma > 1.0) {
            return Err(Error::Config(format!(
                "the adiabatic exponent must exceed 1, got {}",
                self.physics.gamma
            )));
        }
        self.physics.mu.validate()?;
        self.physics.eta.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!(
                "the time step must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!(
                "the final time must be positive, got {}",
                self.t_end
            )));
        }
        if let Some(a) = self.perturbation.amplitude {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::Config(format!(
                    "the perturbation amplitude must be nonnegative, got {a}"
                )));
            }
        }
        if let Some(phases) = &self.perturbation.phases {
            let modes = self.perturbation.modes.unwrap_or(SHEET_2D_MODES);
            if phases.len() != modes {
                return Err(Error::Config(format!(
                    "{} phase offsets given for {modes} modes",
                    phases.len()
                )));
            }
        }
        Ok(())
    }
}

/// Everything needed to run a case.
pub struct CaseSetup {
    /// The propagators over the case's discretization.
    pub integrator: Integrator,
    /// Initial state at `time = 0`.
    pub state: State,
    /// Time step configuration, including the linearization background for
    /// the two dimensional current sheet.
    pub step: StepConfig,
}

/// The per-direction specs of a case at the requested resolution.
fn case_directions(name: CaseName, geometry: &Geometry) -> [Option<DirectionSpec>; 3] {
    let d = |n_cells, boundary, interval| {
        Some(DirectionSpec {
            degree: geometry.degree,
            n_cells,
            boundary,
            interval,
        })
    };
    let c = &geometry.cells;
    match name {
        CaseName::Dispersion1D => [d(c[0], Boundary::Periodic, (0.0, 10.0)), None, None],
        CaseName::CurrentSheet1D => [d(c[0], Boundary::Clamped, (-50.0, 50.0)), None, None],
        CaseName::OrszagTangIdeal | CaseName::OrszagTangVr => [
            d(c[0], Boundary::Periodic, (0.0, TAU)),
            d(c[1], Boundary::Periodic, (0.0, TAU)),
            None,
        ],
        CaseName::KelvinHelmholtz => [
            d(c[0], Boundary::Periodic, (0.0, 1.0)),
            d(c[1], Boundary::Periodic, (-1.0, 1.0)),
            None,
        ],
        CaseName::CurrentSheet2D => [
            d(c[0], Boundary::Periodic, (0.0, 6.0 * PI)),
            d(c[1], Boundary::Clamped, (-0.5 * PI, 0.5 * PI)),
            None,
        ],
    }
}

/// Smallest cell edge of a case at the requested resolution.
fn min_cell_edge(dirs: &[Option<DirectionSpec>; 3]) -> Real {
    dirs.iter()
        .flatten()
        .map(|d| (d.interval.1 - d.interval.0) / d.n_cells as Real)
        .fold(Real::INFINITY, Real::min)
}

/// The `2 h^2` artificial-dissipation coefficient of a case resolution,
/// computable without building the discretization.
pub fn artificial_coefficient(name: CaseName, geometry: &Geometry) -> Real {
    let h = min_cell_edge(&case_directions(name, geometry));
    2.0 * h * h
}

/// Reference solution for the in-plane field of the one dimensional
/// current sheet: diffusion of a step profile,
/// `B_y(x, t) = -B_y0 erf(x / (2 sqrt(eta (t + t0))))`.
pub fn reference_erf(x: Real, t: Real, eta: Real, t0: Real, by0: Real) -> Real {
    -by0 * libm::erf(0.5 * x / (eta * (t + t0)).sqrt())
}

/// Velocity noise drawn per component and Greville point, then run through
/// the commuting interpolation so the discrete field matches the drawn
/// values exactly.  The draw order (components outermost, dof grid row-major
/// within) is part of the reproducibility contract.
fn greville_noise(cx: &DeRhamComplex, amplitude: Real, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = cx.field_zeros(SpaceTag::X);
    for comp in 0..3 {
        let n: usize = cx.dof_grid_dims(SpaceTag::X, comp).iter().product();
        let values: Vec<Real> = (0..n).map(|_| rng.gen_range(-amplitude..amplitude)).collect();
        let coeffs = cx.project_from_point_values(SpaceTag::X, comp, values);
        field.coeffs[cx.block_range(SpaceTag::X, comp)].copy_from_slice(&coeffs);
    }
    field
}

/// Extracts the constant resistivity a diffusion-driven case needs.
fn constant_eta(spec: &CaseSpec) -> Result<Real> {
    match spec.physics.eta {
        DissipationSpec::Constant(v) if v > 0.0 => Ok(v),
        _ => Err(Error::Config(format!(
            "case {} needs a positive constant resistivity",
            spec.name
        ))),
    }
}

/// Builds the discretization and projects the initial data of a case.
///
/// # Errors
///
/// Returns [`Error::Config`] when the spec fails [`CaseSpec::validate`] or
/// requests parameters the case cannot honor, and propagates discretization
/// failures.
pub fn init_case(spec: &CaseSpec) -> Result<CaseSetup> {
    spec.validate()?;
    let dirs = case_directions(spec.name, &spec.geometry);
    let cx = DeRhamComplex::build(dirs)?;
    let g = Galerkin::new(cx)?;
    let eos = Eos::new(spec.physics.gamma)?;
    let integrator = Integrator::new(g, eos);
    let cx = integrator.galerkin().complex();
    let gamma = spec.physics.gamma;

    let mut step = StepConfig::new(spec.dt);
    step.mu = spec.physics.mu;
    step.eta = spec.physics.eta;

    let mut state = match spec.name {
        CaseName::Dispersion1D => {
            let amplitude = spec.perturbation.amplitude.unwrap_or(DISPERSION_AMPLITUDE);
            let seed = spec.perturbation.seed.unwrap_or(DISPERSION_SEED);
            State {
                u: greville_noise(cx, amplitude, seed),
                rho: cx.project_3(|_, _, _| 1.0),
                s: cx.project_3(move |_, _, _| (1.0 / (gamma - 1.0)).ln()),
                b: cx.project_2(|_, _, _| [1.0, 1.0, 0.0]),
                time: 0.0,
            }
        }
        CaseName::CurrentSheet1D => {
            let eta = constant_eta(spec)?;
            State {
                u: cx.project_x(|_, _, _| [0.0; 3]),
                rho: cx.project_3(|_, _, _| SHEET_1D_RHO0),
                s: cx.project_3(|_, _, _| SHEET_1D_S0),
                b: cx.project_2(move |x, _, _| {
                    [
                        0.0,
                        reference_erf(x, 0.0, eta, SHEET_1D_T0, SHEET_1D_BY0),
                        SHEET_1D_BZ0,
                    ]
                }),
                time: 0.0,
            }
        }
        CaseName::OrszagTangIdeal => {
            let s0 = gamma * gamma * (gamma / ((gamma - 1.0) * gamma.powf(2.0 * gamma))).ln();
            State {
                u: cx.project_x(|x, y, _| [-y.sin(), x.sin(), 0.0]),
                rho: cx.project_3(move |_, _, _| gamma * gamma),
                s: cx.project_3(move |_, _, _| s0),
                b: cx.project_2(|x, y, _| [-y.sin(), (2.0 * x).sin(), 0.0]),
                time: 0.0,
            }
        }
        CaseName::OrszagTangVr => {
            let pressure = |x: Real, y: Real| {
                3.75 + 0.25 * (4.0 * x).cos() + 0.8 * (2.0 * x).cos() * y.cos()
                    - x.cos() * y.cos()
                    + 0.25 * (2.0 * y).cos()
            };
            State {
                u: cx.project_x(|x, y, _| [-y.sin(), x.sin(), 0.0]),
                rho: cx.project_3(|_, _, _| 1.0),
                s: cx.project_3(move |x, y, _| (pressure(x, y) / (gamma - 1.0)).ln()),
                b: cx.project_2(|x, y, _| [-y.sin(), (2.0 * x).sin(), 0.0]),
                time: 0.0,
            }
        }
        CaseName::KelvinHelmholtz => {
            let delta = 1.0 / 15.0;
            let shear =
                move |y: Real| -((y - 0.5) / delta).tanh() + ((y + 0.5) / delta).tanh();
            let rho = move |y: Real| 0.5 + 0.75 * shear(y);
            State {
                u: cx.project_x(move |x, y, _| {
                    [0.5 * (shear(y) - 1.0), 0.1 * (TAU * x).sin(), 0.0]
                }),
                rho: cx.project_3(move |_, y, _| rho(y)),
                s: cx.project_3(move |_, y, _| {
                    let r = rho(y);
                    -r * ((gamma - 1.0).ln() + gamma * r.ln())
                }),
                b: cx.project_2(|_, _, _| [0.0; 3]),
                time: 0.0,
            }
        }
        CaseName::CurrentSheet2D => {
            let epsilon = spec.perturbation.amplitude.unwrap_or(SHEET_2D_EPSILON);
            let modes = spec.perturbation.modes.unwrap_or(SHEET_2D_MODES);
            let phases = spec
                .perturbation
                .phases
                .clone()
                .unwrap_or_else(|| vec![0.0; modes]);
            let chi = |y: Real| (SHEET_2D_DELTA * y).tanh() / (SHEET_2D_DELTA * y).cosh();
            let state = State {
                u: cx.project_x(move |x, y, _| {
                    let sum: Real = (1..=modes)
                        .map(|n| (n as Real / 3.0 * x + phases[n - 1]).sin())
                        .sum();
                    [0.0, epsilon * chi(y) * sum, 0.0]
                }),
                rho: cx.project_3(|_, _, _| 1.0),
                s: cx.project_3(move |_, _, _| (2.5 / (gamma - 1.0)).ln()),
                b: cx.project_2(|_, y, _| {
                    let bx = (y / SHEET_2D_DELTA).tanh();
                    [bx, 0.0, (1.0 - bx * bx).max(0.0).sqrt()]
                }),
                time: 0.0,
            };
            constant_eta(spec)?;
            step.linearized_b0 = Some(state.b.clone());
            state
        }
    };
    integrator.zero_frozen_velocity(&mut state.u)?;
    Ok(CaseSetup {
        integrator,
        state,
        step,
    })
}

/// Desk-scale configuration of a case: small enough to run in minutes while
/// keeping the published physics parameters.
pub fn preset(name: CaseName) -> CaseSpec {
    let (cells, dt, t_end, gamma) = match name {
        CaseName::Dispersion1D => (vec![64], 3e-2, 18.0, 5.0 / 3.0),
        CaseName::CurrentSheet1D => (vec![128], 2e-3, 100.0, 5.0 / 3.0),
        CaseName::OrszagTangIdeal => (vec![64, 64], 4e-3, 1.0, 5.0 / 3.0),
        CaseName::OrszagTangVr => (vec![64, 64], 2e-3, 2.0, 5.0 / 3.0),
        CaseName::KelvinHelmholtz => (vec![64, 128], 2e-3, 1.0, 7.0 / 5.0),
        CaseName::CurrentSheet2D => (vec![64, 128], 0.1, 40.0, 5.0 / 3.0),
    };
    let geometry = Geometry { cells, degree: 2 };
    let (mu, eta) = match name {
        CaseName::Dispersion1D => (DissipationSpec::Off, DissipationSpec::Off),
        CaseName::CurrentSheet1D => (DissipationSpec::Off, DissipationSpec::Constant(0.1)),
        CaseName::OrszagTangIdeal => {
            let c = artificial_coefficient(name, &geometry);
            (DissipationSpec::Artificial(c), DissipationSpec::Artificial(c))
        }
        CaseName::OrszagTangVr => (
            DissipationSpec::Constant(0.01),
            DissipationSpec::Constant(0.01),
        ),
        CaseName::KelvinHelmholtz => (
            DissipationSpec::Artificial(artificial_coefficient(name, &geometry)),
            DissipationSpec::Off,
        ),
        CaseName::CurrentSheet2D => (DissipationSpec::Off, DissipationSpec::Constant(2e-4)),
    };
    CaseSpec {
        name,
        geometry,
        physics: Physics { gamma, mu, eta },
        dt,
        t_end,
        perturbation: Perturbation::default(),
    }
}
