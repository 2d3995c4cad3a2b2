//! Conserved-quantity bookkeeping and spectral post-processing.
//!
//! [`record`] evaluates the tracked functionals of a [`State`] with the same
//! quadrature the solver uses, so drifts reported here measure the scheme and
//! not the measurement.  The spectral helpers ([`spacetime_spectrum`],
//! [`mode_energies`], [`extract_frequencies`]) operate on uniform samples and
//! are used by the wave and tearing analyses; [`dispersion_branches`] supplies
//! the analytic frequencies those analyses compare against.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::complex::{Field, SpaceTag};
use crate::splines::Boundary;
use crate::eos::Eos;
use crate::galerkin::Galerkin;
use crate::integrators::State;
use crate::{Error, Real, Result};

/// Snapshot of the tracked functionals at one instant.
///
/// `e_total` is stored exactly as the sum of the three energies so that a
/// drift test on the column reproduces what the scheme conserves, with no
/// re-rounding between recording and reporting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    /// Simulation time the state was recorded at.
    pub time: Real,
    /// Total mass, the integral of the density field.
    pub mass: Real,
    /// Total entropy, the integral of the entropy density field.
    pub entropy: Real,
    /// Kinetic energy.
    pub e_kin: Real,
    /// Internal energy.
    pub e_int: Real,
    /// Magnetic energy.
    pub e_mag: Real,
    /// Sum of the three energies.
    pub e_total: Real,
    /// L2 norm of the divergence of the magnetic field.
    pub div_b_l2: Real,
}

/// Evaluates every tracked functional of `state` by quadrature.
///
/// # Errors
///
/// Returns [`Error::SpaceMismatch`] when a field of `state` lives in the
/// wrong space and [`Error::ThermodynamicState`] when the internal energy is
/// undefined because the density is nonpositive somewhere.
pub fn record(g: &Galerkin, eos: &Eos, state: &State) -> Result<DiagnosticsRecord> {
    let cx = g.complex();
    cx.check_tag(&state.u, SpaceTag::X)?;
    cx.check_tag(&state.rho, SpaceTag::V3)?;
    cx.check_tag(&state.s, SpaceTag::V3)?;
    cx.check_tag(&state.b, SpaceTag::V2)?;
    let rho_q = g.weight_from_field(&state.rho, 0).values;
    let s_q = g.weight_from_field(&state.s, 0).values;
    let n = rho_q.len();
    let mut usq = vec![0.0; n];
    let mut bsq = vec![0.0; n];
    for c in 0..3 {
        let u_q = g.weight_from_field(&state.u, c).values;
        let b_q = g.weight_from_field(&state.b, c).values;
        for i in 0..n {
            usq[i] += u_q[i] * u_q[i];
            bsq[i] += b_q[i] * b_q[i];
        }
    }
    let mut e_kin_q = vec![0.0; n];
    let mut e_int_q = vec![0.0; n];
    let mut e_mag_q = vec![0.0; n];
    for i in 0..n {
        e_kin_q[i] = 0.5 * rho_q[i] * usq[i];
        e_int_q[i] = eos.rho_e(rho_q[i], s_q[i])?;
        e_mag_q[i] = 0.5 * bsq[i];
    }
    let div = cx.div(&state.b)?;
    let div_q = g.weight_from_field(&div, 0).values;
    let div_sq: Vec<Real> = div_q.iter().map(|d| d * d).collect();
    let e_kin = g.integrate(&e_kin_q);
    let e_int = g.integrate(&e_int_q);
    let e_mag = g.integrate(&e_mag_q);
    Ok(DiagnosticsRecord {
        time: state.time,
        mass: g.integrate(&rho_q),
        entropy: g.integrate(&s_q),
        e_kin,
        e_int,
        e_mag,
        e_total: e_kin + e_int + e_mag,
        div_b_l2: g.integrate(&div_sq).sqrt(),
    })
}

/// Power of a space-time trace over wavenumber and angular frequency.
#[derive(Clone, Debug)]
pub struct SpacetimeSpectrum {
    /// Wavenumber axis in angular units, `k_n = 2 pi n / (N dx)`.
    pub k: Vec<Real>,
    /// Frequency axis in angular units, `omega_m = 2 pi m / (M dt)`.
    pub omega: Vec<Real>,
    /// Power at `(k, omega)`, row-major with `k` as the slow index.  Both
    /// propagation directions fold into the same bin.
    pub power: Vec<Real>,
}

fn check_uniform(axis: &[Real], what: &str) -> Result<Real> {
    if axis.len() < 2 {
        return Err(Error::Config(format!(
            "spectrum needs at least two {what} samples, got {}",
            axis.len()
        )));
    }
    let h = axis[1] - axis[0];
    if !(h > 0.0) {
        return Err(Error::Config(format!("{what} samples must be increasing")));
    }
    for w in axis.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(Error::Config(format!(
                "{what} samples are not uniformly spaced: step {} differs from {}",
                w[1] - w[0],
                h
            )));
        }
    }
    Ok(h)
}

/// Discrete power spectrum of a scalar trace sampled on a uniform
/// space-time grid.
///
/// `data` is row-major with time as the slow index: `data[m * xs.len() + j]`
/// is the sample at time `times[m]` and position `xs[j]`.  The returned axes
/// carry angular units; opposite propagation directions are folded, so a
/// travelling wave `cos(k0 x - w0 t)` lands in the single bin `(k0, w0)`.
///
/// # Errors
///
/// Returns [`Error::Config`] when either axis is shorter than two samples or
/// not uniformly spaced, or when `data` does not have `times.len() *
/// xs.len()` entries.
pub fn spacetime_spectrum(
    times: &[Real],
    xs: &[Real],
    data: &[Real],
) -> Result<SpacetimeSpectrum> {
    let dt = check_uniform(times, "time")?;
    let dx = check_uniform(xs, "space")?;
    let (nt, nx) = (times.len(), xs.len());
    if data.len() != nt * nx {
        return Err(Error::Config(format!(
            "spectrum data has {} entries, expected {} times x {} positions",
            data.len(),
            nt,
            nx
        )));
    }
    let mut grid: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let fft_x = planner.plan_fft_forward(nx);
    for row in grid.chunks_mut(nx) {
        fft_x.process(row);
    }
    let fft_t = planner.plan_fft_forward(nt);
    let mut col = vec![Complex64::default(); nt];
    for j in 0..nx {
        for m in 0..nt {
            col[m] = grid[m * nx + j];
        }
        fft_t.process(&mut col);
        for m in 0..nt {
            grid[m * nx + j] = col[m];
        }
    }
    let (nk, nw) = (nx / 2 + 1, nt / 2 + 1);
    let norm = 1.0 / ((nx * nt) as Real);
    let mut power = vec![0.0; nk * nw];
    for n in 0..nk {
        for m in 0..nw {
            let mut folded = 0.0;
            let mut ns = vec![n];
            if n != 0 && (nx - n) % nx != n {
                ns.push(nx - n);
            }
            let mut ms = vec![m];
            if m != 0 && (nt - m) % nt != m {
                ms.push(nt - m);
            }
            for &nn in &ns {
                for &mm in &ms {
                    folded += (grid[mm % nt * nx + nn % nx] * norm).norm_sqr();
                }
            }
            power[n * nw + m] = folded;
        }
    }
    Ok(SpacetimeSpectrum {
        k: (0..nk).map(|n| TAU * n as Real / (nx as Real * dx)).collect(),
        omega: (0..nw).map(|m| TAU * m as Real / (nt as Real * dt)).collect(),
        power,
    })
}

/// Analytic frequencies of the three linear wave branches at wavenumber `k`.
///
/// The background is a uniform state with density `rho0`, pressure `p0`,
/// adiabatic exponent `gamma` and magnetic field `b`; propagation is along
/// the x axis, so only the first two field components enter (the shear
/// branch rides on the in-plane field and the third component is passive).
/// Frequencies are returned as `[shear, slow, fast]`, all nonnegative.
///
/// # Errors
///
/// Returns [`Error::Domain`] when `rho0` or `p0` is nonpositive or `gamma`
/// is not greater than one.
pub fn dispersion_branches(
    k: Real,
    rho0: Real,
    p0: Real,
    b: [Real; 3],
    gamma: Real,
) -> Result<[Real; 3]> {
    if !(rho0 > 0.0) || !(p0 > 0.0) {
        return Err(Error::Domain(format!(
            "dispersion background needs positive density and pressure, got rho={rho0}, p={p0}"
        )));
    }
    if !(gamma > 1.0) {
        return Err(Error::Domain(format!(
            "dispersion background needs gamma > 1, got {gamma}"
        )));
    }
    let cs2 = gamma * p0 / rho0;
    let bperp2 = b[0] * b[0] + b[1] * b[1];
    if bperp2 == 0.0 {
        // Pure sound: the magnetosonic pair degenerates to acoustic and zero.
        return Ok([0.0, 0.0, k.abs() * cs2.sqrt()]);
    }
    let va2 = bperp2 / rho0;
    let shear2 = va2 * b[0] * b[0] / bperp2;
    let sum = cs2 + va2;
    let delta = 4.0 * b[0] * b[0] * cs2 * va2 / (sum * sum * bperp2);
    let root = delta.sqrt().min(1.0);
    let slow2 = 0.5 * sum * (1.0 - root);
    let fast2 = 0.5 * sum * (1.0 + root);
    let k = k.abs();
    Ok([k * shear2.sqrt(), k * slow2.sqrt(), k * fast2.sqrt()])
}

/// Magnetic energy per wavenumber bin along the first (periodic) direction.
///
/// The field is sampled on a uniform grid in x and on the quadrature grid
/// transversally, transformed with an FFT per line, and the squared moduli
/// are folded so that `modes = 0..=N/2` recovers the total magnetic energy
/// (Parseval).  Entry `i` of the result is the energy in the bin
/// `k_x = 2 pi modes[i] / L_x`.
///
/// The sample count is at least four per cell (keeping every spline replica
/// harmonic below the Nyquist bin) with an absolute floor of 1024: the
/// uniform-grid sum aliases the tail of the squared field, which for fields
/// with a C1 component decays only cubically in the sample count, and the
/// floor pushes that error below 1e-8 relative at any practical resolution.
///
/// # Errors
///
/// Returns [`Error::SpaceMismatch`] when `b` does not live in the flux
/// space, and [`Error::Config`] when the first direction is not periodic or
/// a requested bin index exceeds the Nyquist bin.
pub fn mode_energies(g: &Galerkin, b: &Field, modes: &[usize]) -> Result<Vec<Real>> {
    if b.space_tag != SpaceTag::V2 {
        return Err(Error::SpaceMismatch {
            expected: SpaceTag::V2.name(),
            got: b.space_tag.name(),
        });
    }
    let cx = g.complex();
    let dir_x = cx.direction(0);
    if dir_x.trivial || dir_x.fine.boundary != Boundary::Periodic {
        return Err(Error::Config(
            "mode energies need a periodic, nontrivial first direction".into(),
        ));
    }
    let (a, len_x) = (dir_x.fine.a, dir_x.fine.b - dir_x.fine.a);
    let nx = 2 * mode_energy_nyquist(g)?;
    for &n in modes {
        if n > nx / 2 {
            return Err(Error::Config(format!(
                "mode index {n} exceeds the Nyquist bin {} of the sampling grid",
                nx / 2
            )));
        }
    }
    let (ys, wy) = transverse_rule(cx, 1);
    let (zs, wz) = transverse_rule(cx, 2);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nx);
    let mut folded = vec![0.0; nx / 2 + 1];
    let mut line = vec![Complex64::default(); nx];
    for comp in 0..3 {
        for (iy, &y) in ys.iter().enumerate() {
            for (iz, &z) in zs.iter().enumerate() {
                for (j, slot) in line.iter_mut().enumerate() {
                    let x = a + len_x * j as Real / nx as Real;
                    *slot = Complex64::new(cx.eval_field(b, comp, [x, y, z], [0, 0, 0])?, 0.0);
                }
                fft.process(&mut line);
                let w = wy[iy] * wz[iz];
                for (n, slot) in folded.iter_mut().enumerate() {
                    let mut p = (line[n] / nx as Real).norm_sqr();
                    if n != 0 && (nx - n) != n {
                        p += (line[nx - n] / nx as Real).norm_sqr();
                    }
                    *slot += w * p;
                }
            }
        }
    }
    Ok(modes
        .iter()
        .map(|&n| 0.5 * len_x * folded[n])
        .collect())
}

/// Index of the highest wavenumber bin [`mode_energies`] resolves, so
/// `(0..=mode_energy_nyquist(g)?).collect()` requests the complete set.
///
/// # Errors
///
/// Returns [`Error::Config`] when the first direction is not periodic or is
/// trivialized.
pub fn mode_energy_nyquist(g: &Galerkin) -> Result<usize> {
    let dir_x = g.complex().direction(0);
    if dir_x.trivial || dir_x.fine.boundary != Boundary::Periodic {
        return Err(Error::Config(
            "mode energies need a periodic, nontrivial first direction".into(),
        ));
    }
    Ok((2 * dir_x.fine.n_cells).max(512))
}

/// One-direction quadrature rule: the direction's Gauss nodes and weights,
/// or the midpoint of a trivialized direction (unit weight).
fn transverse_rule(cx: &crate::complex::DeRhamComplex, d: usize) -> (Vec<Real>, Vec<Real>) {
    let dir = cx.direction(d);
    if dir.trivial {
        (vec![0.5], vec![1.0])
    } else {
        (dir.quad_pts.clone(), dir.quad_w.clone())
    }
}

/// Exponential growth rate fitted to an energy history.
#[derive(Clone, Copy, Debug)]
pub struct GrowthFit {
    /// Field growth rate: half the fitted slope of `log E`.
    pub rate: Real,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: Real,
}

/// Least-squares fit of `log E = 2 gamma t + c` over the given window.
///
/// Energies grow with twice the field growth rate, so the returned rate is
/// half the fitted slope.  Callers choose the window by slicing the inputs.
///
/// # Errors
///
/// Returns [`Error::Config`] on mismatched or too-short inputs and
/// [`Error::Domain`] when an energy is not positive (its logarithm would be
/// undefined).
pub fn fit_growth_rate(times: &[Real], energies: &[Real]) -> Result<GrowthFit> {
    if times.len() != energies.len() || times.len() < 3 {
        return Err(Error::Config(format!(
            "growth fit needs matching histories of at least three samples, got {} and {}",
            times.len(),
            energies.len()
        )));
    }
    let mut logs = Vec::with_capacity(energies.len());
    for &e in energies {
        if !(e > 0.0) {
            return Err(Error::Domain(format!(
                "growth fit needs positive energies, got {e}"
            )));
        }
        logs.push(e.ln());
    }
    let n = times.len() as Real;
    let t_mean = times.iter().sum::<Real>() / n;
    let l_mean = logs.iter().sum::<Real>() / n;
    let mut stt = 0.0;
    let mut stl = 0.0;
    let mut sll = 0.0;
    for (&t, &l) in times.iter().zip(&logs) {
        stt += (t - t_mean) * (t - t_mean);
        stl += (t - t_mean) * (l - l_mean);
        sll += (l - l_mean) * (l - l_mean);
    }
    if stt == 0.0 {
        return Err(Error::Config("growth fit times are all identical".into()));
    }
    let slope = stl / stt;
    let ss_res = (sll - slope * stl).max(0.0);
    let r_squared = if sll == 0.0 { 1.0 } else { 1.0 - ss_res / sll };
    Ok(GrowthFit {
        rate: 0.5 * slope,
        r_squared,
    })
}

/// One fitted component of a complex time series: signed angular frequency
/// and modulus of the complex amplitude.
pub type FittedMode = (Real, Real);

/// Extracts the `count` strongest complex-exponential components of a
/// uniformly sampled series by matching-pursuit deflation.
///
/// Each pass locates the strongest remaining peak on a 16x zero-padded FFT,
/// refines the frequency by maximizing the projection amplitude, and
/// subtracts the fitted component; two final sweeps re-fit every component
/// against the residual to undo cross-talk between nearby peaks.  The model
/// is `sum_j a_j exp(i nu_j t)` with `t` relative to the first sample, and
/// components come back sorted by descending amplitude.
///
/// # Errors
///
/// Returns [`Error::Config`] when the series is shorter than four samples or
/// `dt` is not positive.
pub fn extract_frequencies(
    series: &[Complex64],
    dt: Real,
    count: usize,
) -> Result<Vec<FittedMode>> {
    let m = series.len();
    if m < 4 || !(dt > 0.0) {
        return Err(Error::Config(format!(
            "frequency extraction needs at least four samples and a positive step, \
             got {m} samples with dt={dt}"
        )));
    }
    let padded = 16 * m;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(padded);
    let mut residual = series.to_vec();
    let mut comps: Vec<(Real, Complex64)> = Vec::new();
    let bin = TAU / (padded as Real * dt);
    for _ in 0..count.min(m / 2) {
        let mut buf = vec![Complex64::default(); padded];
        buf[..m].copy_from_slice(&residual);
        fft.process(&mut buf);
        let peak = buf
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        // FFT kernel exp(-i 2 pi n j / P) peaking at bin n means the series
        // carries exp(+i nu t) with nu = 2 pi n / (P dt), folded to (-pi, pi].
        let signed = if peak > padded / 2 {
            peak as Real - padded as Real
        } else {
            peak as Real
        };
        let nu = refine_frequency(&residual, dt, signed * bin, bin);
        let amp = project_amplitude(&residual, dt, nu);
        subtract_mode(&mut residual, dt, nu, amp);
        comps.push((nu, amp));
    }
    let window = TAU / (m as Real * dt);
    for _ in 0..2 {
        for j in 0..comps.len() {
            let (nu_old, amp_old) = comps[j];
            add_mode(&mut residual, dt, nu_old, amp_old);
            let nu = refine_frequency(&residual, dt, nu_old, 0.5 * window);
            let amp = project_amplitude(&residual, dt, nu);
            subtract_mode(&mut residual, dt, nu, amp);
            comps[j] = (nu, amp);
        }
    }
    comps.sort_by(|a, b| b.1.norm_sqr().total_cmp(&a.1.norm_sqr()));
    Ok(comps.into_iter().map(|(nu, a)| (nu, a.norm())).collect())
}

/// Least-squares amplitude of `exp(i nu t)` against the series.
fn project_amplitude(series: &[Complex64], dt: Real, nu: Real) -> Complex64 {
    let mut acc = Complex64::default();
    for (j, &c) in series.iter().enumerate() {
        acc += c * Complex64::from_polar(1.0, -nu * dt * j as Real);
    }
    acc / series.len() as Real
}

fn subtract_mode(series: &mut [Complex64], dt: Real, nu: Real, amp: Complex64) {
    for (j, c) in series.iter_mut().enumerate() {
        *c -= amp * Complex64::from_polar(1.0, nu * dt * j as Real);
    }
}

fn add_mode(series: &mut [Complex64], dt: Real, nu: Real, amp: Complex64) {
    for (j, c) in series.iter_mut().enumerate() {
        *c += amp * Complex64::from_polar(1.0, nu * dt * j as Real);
    }
}

/// Golden-section maximization of the projection amplitude around `center`.
fn refine_frequency(series: &[Complex64], dt: Real, center: Real, half_width: Real) -> Real {
    let gain = |nu: Real| project_amplitude(series, dt, nu).norm_sqr();
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (center - half_width, center + half_width);
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (gain(a), gain(b));
    for _ in 0..80 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = gain(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = gain(a);
        }
    }
    0.5 * (lo + hi)
}

/// Uniform periodic sample positions `a + j (b - a) / n`, endpoint excluded.
pub fn uniform_grid(a: Real, b: Real, n: usize) -> Vec<Real> {
    (0..n).map(|j| a + (b - a) * j as Real / n as Real).collect()
}
