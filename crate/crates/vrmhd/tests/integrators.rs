use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vrmhd::complex::{DeRhamComplex, DirectionSpec, Field, SpaceTag};
use vrmhd::eos::Eos;
use vrmhd::galerkin::Galerkin;
use vrmhd::integrators::{Integrator, State, StepConfig};
use vrmhd::splines::Boundary;
use vrmhd::stabilization::DissipationSpec;
use vrmhd::{Error, Real};

const TAU: Real = std::f64::consts::TAU;

fn periodic_box(n: usize, degree: usize) -> Integrator {
    let spec = DirectionSpec {
        degree,
        n_cells: n,
        boundary: Boundary::Periodic,
        interval: (0.0, TAU),
    };
    let cx = DeRhamComplex::build([Some(spec), Some(spec), Some(spec)]).unwrap();
    Integrator::new(Galerkin::new(cx).unwrap(), Eos::new(5.0 / 3.0).unwrap())
}

/// A handful of low-wavenumber Fourier modes with seeded random phases.
fn random_smooth(rng: &mut ChaCha8Rng, amplitude: Real) -> impl Fn(Real, Real, Real) -> Real {
    let modes: Vec<([i32; 3], Real, Real)> = (0..4)
        .map(|_| {
            let k = [
                rng.gen_range(-2..=2),
                rng.gen_range(-2..=2),
                rng.gen_range(-2..=2),
            ];
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..TAU))
        })
        .collect();
    move |x: Real, y: Real, z: Real| {
        modes
            .iter()
            .map(|(k, a, phi)| {
                a * amplitude * (k[0] as Real * x + k[1] as Real * y + k[2] as Real * z + phi).sin()
            })
            .sum()
    }
}

/// Random state with positive density and exactly divergence-free B.
fn random_state(ig: &Integrator, seed: u64) -> State {
    let cx = ig.galerkin().complex();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fr = random_smooth(&mut rng, 0.08);
    let fs = random_smooth(&mut rng, 0.1);
    let (u0, u1, u2) = (
        random_smooth(&mut rng, 0.15),
        random_smooth(&mut rng, 0.15),
        random_smooth(&mut rng, 0.15),
    );
    let (a0, a1, a2) = (
        random_smooth(&mut rng, 0.2),
        random_smooth(&mut rng, 0.2),
        random_smooth(&mut rng, 0.2),
    );
    let rho = cx.project_3(|x, y, z| 2.0 + fr(x, y, z));
    let s = cx.project_3(|x, y, z| 0.5 + fs(x, y, z));
    let u = cx.project_x(|x, y, z| [u0(x, y, z), u1(x, y, z), u2(x, y, z)]);
    let a = cx.project_1(|x, y, z| [a0(x, y, z), a1(x, y, z), a2(x, y, z)]);
    let b = cx.curl(&a).unwrap();
    State {
        u,
        rho,
        s,
        b,
        time: 0.0,
    }
}

struct Invariants {
    mass: Real,
    entropy: Real,
    e_kin: Real,
    e_int: Real,
    e_mag: Real,
    div_b: Real,
}

impl Invariants {
    fn total(&self) -> Real {
        self.e_kin + self.e_int + self.e_mag
    }
}

fn invariants(ig: &Integrator, state: &State) -> Invariants {
    let g = ig.galerkin();
    let cx = g.complex();
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
    let e_kin_q: Vec<Real> = (0..n).map(|i| 0.5 * rho_q[i] * usq[i]).collect();
    let e_int_q: Vec<Real> = (0..n)
        .map(|i| ig.eos().rho_e(rho_q[i], s_q[i]).unwrap())
        .collect();
    let e_mag_q: Vec<Real> = bsq.iter().map(|b| 0.5 * b).collect();
    let div = cx.div(&state.b).unwrap();
    let div_q = g.weight_from_field(&div, 0).values;
    let div_sq: Vec<Real> = div_q.iter().map(|d| d * d).collect();
    Invariants {
        mass: g.integrate(&rho_q),
        entropy: g.integrate(&s_q),
        e_kin: g.integrate(&e_kin_q),
        e_int: g.integrate(&e_int_q),
        e_mag: g.integrate(&e_mag_q),
        div_b: g.integrate(&div_sq).sqrt(),
    }
}

fn assert_fields_equal(a: &Field, b: &Field) {
    assert_eq!(a.space_tag, b.space_tag);
    for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
        assert_eq!(x, y);
    }
}

#[test]
fn uniform_rest_state_is_a_fixed_point() {
    let ig = periodic_box(6, 2);
    let cx = ig.galerkin().complex();
    let state = State {
        u: cx.field_zeros(SpaceTag::X),
        rho: cx.project_3(|_, _, _| 2.0),
        s: cx.project_3(|_, _, _| 0.7),
        b: cx.project_2(|_, _, _| [0.3, -0.2, 0.5]),
        time: 0.0,
    };
    let cfg = StepConfig::new(0.05);
    let next = ig.strang_step(&state, &cfg).unwrap();
    let tol = 1e-13;
    for (a, b) in state.u.coeffs.iter().zip(&next.u.coeffs) {
        assert!((a - b).abs() <= tol, "velocity moved: {a} -> {b}");
    }
    for (a, b) in state.rho.coeffs.iter().zip(&next.rho.coeffs) {
        assert!((a - b).abs() <= tol * 2.0, "density moved: {a} -> {b}");
    }
    for (a, b) in state.s.coeffs.iter().zip(&next.s.coeffs) {
        assert!((a - b).abs() <= tol, "entropy moved: {a} -> {b}");
    }
    for (a, b) in state.b.coeffs.iter().zip(&next.b.coeffs) {
        assert!((a - b).abs() <= tol, "magnetic field moved: {a} -> {b}");
    }
    assert!((next.time - 0.05).abs() < 1e-15);
}

#[test]
fn switched_off_dissipation_is_the_identity() {
    let ig = periodic_box(6, 1);
    let state = random_state(&ig, 11);
    for spec in [
        DissipationSpec::Off,
        DissipationSpec::Constant(0.0),
        DissipationSpec::Artificial(0.0),
    ] {
        let mut cfg = StepConfig::new(0.02);
        cfg.mu = spec;
        cfg.eta = spec;
        let after_visc = ig.step_visc(&state, &cfg).unwrap();
        assert_fields_equal(&state.u, &after_visc.u);
        assert_fields_equal(&state.s, &after_visc.s);
        let after_res = ig.step_res(&state, &cfg).unwrap();
        assert_fields_equal(&state.b, &after_res.b);
        assert_fields_equal(&state.s, &after_res.s);
    }
}

#[test]
fn each_ideal_propagator_conserves_its_energy_pair() {
    let ig = periodic_box(8, 2);
    let state = random_state(&ig, 3);
    let cfg = StepConfig::new(0.02);
    let before = invariants(&ig, &state);

    // Momentum: kinetic energy alone, everything else untouched.
    let after = ig.step_m(&state, &cfg).unwrap();
    assert_fields_equal(&state.rho, &after.rho);
    assert_fields_equal(&state.s, &after.s);
    assert_fields_equal(&state.b, &after.b);
    let inv = invariants(&ig, &after);
    assert!(
        (inv.e_kin - before.e_kin).abs() <= 1e-9 * before.e_kin,
        "momentum step kinetic drift {:.3e}",
        (inv.e_kin - before.e_kin).abs() / before.e_kin
    );

    // Mass transport: kinetic plus internal, entropy and B untouched.
    let after = ig.step_rho(&state, &cfg).unwrap();
    assert_fields_equal(&state.s, &after.s);
    assert_fields_equal(&state.b, &after.b);
    let inv = invariants(&ig, &after);
    assert!(
        (inv.mass - before.mass).abs() <= 1e-13 * before.mass.abs(),
        "mass drift {:.3e}",
        (inv.mass - before.mass).abs()
    );
    let pair0 = before.e_kin + before.e_int;
    let pair1 = inv.e_kin + inv.e_int;
    assert!(
        (pair1 - pair0).abs() <= 1e-9 * pair0,
        "mass step energy drift {:.3e}",
        (pair1 - pair0).abs() / pair0
    );
    assert!((inv.e_kin - before.e_kin).abs() > 0.0 || true);

    // Entropy transport: kinetic plus internal, density and B untouched.
    let after = ig.step_s(&state, &cfg).unwrap();
    assert_fields_equal(&state.rho, &after.rho);
    assert_fields_equal(&state.b, &after.b);
    let inv = invariants(&ig, &after);
    assert!(
        (inv.entropy - before.entropy).abs() <= 1e-12 * before.entropy.abs().max(1.0),
        "entropy transport integral drift {:.3e}",
        (inv.entropy - before.entropy).abs()
    );
    let pair1 = inv.e_kin + inv.e_int;
    assert!(
        (pair1 - pair0).abs() <= 1e-9 * pair0,
        "entropy step energy drift {:.3e}",
        (pair1 - pair0).abs() / pair0
    );

    // Induction: kinetic plus magnetic, scalars untouched, div B preserved.
    let after = ig.step_b(&state, &cfg).unwrap();
    assert_fields_equal(&state.rho, &after.rho);
    assert_fields_equal(&state.s, &after.s);
    let inv = invariants(&ig, &after);
    let pair0 = before.e_kin + before.e_mag;
    let pair1 = inv.e_kin + inv.e_mag;
    assert!(
        (pair1 - pair0).abs() <= 1e-9 * pair0,
        "induction step energy drift {:.3e}",
        (pair1 - pair0).abs() / pair0
    );
    assert!(inv.div_b <= 1e-12, "div B = {:.3e}", inv.div_b);
}

#[test]
fn strang_step_conserves_the_ideal_invariants_on_random_states() {
    for seed in 0..20u64 {
        let degree = 1 + (seed % 2) as usize;
        let ig = periodic_box(8, degree);
        let state = random_state(&ig, 100 + seed);
        let cfg = StepConfig::new(0.02);
        let before = invariants(&ig, &state);
        let next = ig.strang_step(&state, &cfg).unwrap();
        let after = invariants(&ig, &next);
        assert!(
            (after.mass - before.mass).abs() <= 1e-13 * before.mass,
            "seed {seed}: mass drift {:.3e}",
            (after.mass - before.mass).abs() / before.mass
        );
        assert!(
            (after.entropy - before.entropy).abs() <= 1e-12 * before.entropy.abs().max(1.0),
            "seed {seed}: entropy drift {:.3e}",
            (after.entropy - before.entropy).abs()
        );
        assert!(
            (after.total() - before.total()).abs() <= 1e-8 * before.total(),
            "seed {seed}: energy drift {:.3e}",
            (after.total() - before.total()).abs() / before.total()
        );
        assert!(after.div_b <= 1e-12, "seed {seed}: div B {:.3e}", after.div_b);
    }
}

#[test]
fn viscous_step_moves_kinetic_energy_into_heat() {
    let ig = periodic_box(8, 2);
    let mut state = random_state(&ig, 7);
    state.b = ig.galerkin().complex().field_zeros(SpaceTag::V2);
    let mut cfg = StepConfig::new(0.05);
    cfg.mu = DissipationSpec::Constant(0.05);
    let before = invariants(&ig, &state);
    let next = ig.step_visc(&state, &cfg).unwrap();
    let after = invariants(&ig, &next);
    assert!(after.e_kin < before.e_kin, "viscosity must damp the flow");
    assert!(
        (after.total() - before.total()).abs() <= 1e-9 * before.total(),
        "viscous heating unbalanced: {:.3e}",
        (after.total() - before.total()).abs() / before.total()
    );
    assert!(
        after.entropy >= before.entropy - 1e-10 * before.entropy.abs().max(1.0),
        "entropy decreased under viscosity"
    );
    assert_fields_equal(&state.rho, &next.rho);
    assert_fields_equal(&state.b, &next.b);
}

#[test]
fn resistive_step_moves_magnetic_energy_into_heat() {
    let ig = periodic_box(8, 2);
    let mut state = random_state(&ig, 9);
    state.u = ig.galerkin().complex().field_zeros(SpaceTag::X);
    let mut cfg = StepConfig::new(0.05);
    cfg.eta = DissipationSpec::Constant(0.02);
    let before = invariants(&ig, &state);
    let next = ig.step_res(&state, &cfg).unwrap();
    let after = invariants(&ig, &next);
    assert!(after.e_mag < before.e_mag, "resistivity must damp the field");
    assert!(
        (after.total() - before.total()).abs() <= 1e-9 * before.total(),
        "joule heating unbalanced: {:.3e}",
        (after.total() - before.total()).abs() / before.total()
    );
    assert!(after.div_b <= 1e-12, "div B = {:.3e}", after.div_b);
    assert_fields_equal(&state.u, &next.u);
    assert_fields_equal(&state.rho, &next.rho);
}

#[test]
fn resistive_solve_matches_a_dense_oracle() {
    let spec = DirectionSpec {
        degree: 1,
        n_cells: 32,
        boundary: Boundary::Periodic,
        interval: (0.0, TAU),
    };
    let cx = DeRhamComplex::build([Some(spec), None, None]).unwrap();
    let g = Galerkin::new(cx).unwrap();
    let ig = Integrator::new(g, Eos::new(5.0 / 3.0).unwrap());
    let g = ig.galerkin();
    let cx = g.complex();

    let mut state = random_state(&ig, 21);
    state.u = cx.field_zeros(SpaceTag::X);
    let mut cfg = StepConfig::new(0.1);
    let eta = 0.03;
    cfg.eta = DissipationSpec::Constant(eta);

    // Dense materialization of the implicit operator through its action.
    let n = cx.total_len(SpaceTag::V2);
    let op = g.resistive_operator(&g.weight_constant(eta), cfg.dt, None);
    let mut dense = nalgebra::DMatrix::<Real>::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = g.apply(&op, &e);
        for i in 0..n {
            dense[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    let rhs = g.apply(&g.mass_matrix(SpaceTag::V2), &state.b.coeffs);
    let oracle = dense
        .lu()
        .solve(&nalgebra::DVector::from_vec(rhs))
        .unwrap();

    let next = ig.step_res(&state, &cfg).unwrap();
    let scale = oracle.amax();
    for i in 0..n {
        assert!(
            (next.b.coeffs[i] - oracle[i]).abs() <= 1e-10 * scale,
            "coefficient {i}: {} vs {}",
            next.b.coeffs[i],
            oracle[i]
        );
    }
}

#[test]
fn linearized_resistive_step_fixes_the_background() {
    let ig = periodic_box(6, 1);
    let state = random_state(&ig, 33);
    let mut cfg = StepConfig::new(0.1);
    cfg.eta = DissipationSpec::Constant(0.05);
    cfg.linearized_b0 = Some(state.b.clone());
    let next = ig.step_res_linearized(&state, &cfg).unwrap();
    assert_fields_equal(&state.b, &next.b);
    assert_fields_equal(&state.s, &next.s);
}

#[test]
fn linearized_step_with_zero_background_matches_the_plain_step() {
    let ig = periodic_box(6, 1);
    let state = random_state(&ig, 35);
    let mut cfg = StepConfig::new(0.1);
    cfg.eta = DissipationSpec::Constant(0.05);
    let plain = ig.step_res(&state, &cfg).unwrap();
    cfg.linearized_b0 = Some(ig.galerkin().complex().field_zeros(SpaceTag::V2));
    let linearized = ig.step_res_linearized(&state, &cfg).unwrap();
    assert_fields_equal(&plain.b, &linearized.b);
    assert_fields_equal(&plain.s, &linearized.s);
}

#[test]
fn linearized_step_requires_a_background() {
    let ig = periodic_box(6, 1);
    let state = random_state(&ig, 36);
    let cfg = StepConfig::new(0.1);
    match ig.step_res_linearized(&state, &cfg) {
        Err(Error::Config(_)) => {}
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn failed_iteration_names_the_splitting_substep() {
    let ig = periodic_box(6, 1);
    let state = random_state(&ig, 41);
    let mut cfg = StepConfig::new(0.05);
    cfg.picard_max_iters = 1;
    cfg.picard_tol = 1e-15;
    match ig.strang_step(&state, &cfg) {
        Err(Error::Solver { context, .. }) => {
            assert!(
                context.contains("splitting sub-step"),
                "context: {context}"
            );
        }
        other => panic!("expected a solver error, got {other:?}"),
    }
}

#[test]
fn clamped_boundaries_freeze_velocity_and_conserve() {
    let spec_x = DirectionSpec {
        degree: 2,
        n_cells: 24,
        boundary: Boundary::Clamped,
        interval: (-1.0, 1.0),
    };
    let cx = DeRhamComplex::build([Some(spec_x), None, None]).unwrap();
    let g = Galerkin::new(cx).unwrap();
    let ig = Integrator::new(g, Eos::new(5.0 / 3.0).unwrap());
    let cx = ig.galerkin().complex();

    // Velocity profile that vanishes at the walls; zero the frozen dofs so
    // the constraint set matches the initial data exactly.
    let mut u = cx.project_x(|x, _, _| {
        let bump = (1.0 - x * x).powi(2);
        [0.2 * bump, 0.1 * bump * (2.0 * x).cos(), 0.0]
    });
    let dims = cx.space_dims(SpaceTag::X, 0);
    for c in 0..3 {
        let r = cx.block_range(SpaceTag::X, c);
        let blk = &mut u.coeffs[r];
        blk[0] = 0.0;
        blk[dims[0] - 1] = 0.0;
    }
    let a = cx.project_1(|x, _, _| [0.0, 0.1 * (1.0 - x * x), 0.3 * x]);
    let b = cx.curl(&a).unwrap();
    let state = State {
        u,
        rho: cx.project_3(|x, _, _| 1.5 + 0.1 * x),
        s: cx.project_3(|_, _, _| 0.8),
        b,
        time: 0.0,
    };
    let cfg = StepConfig::new(0.01);
    let before = invariants(&ig, &state);
    let mut cur = state.clone();
    for _ in 0..5 {
        cur = ig.strang_step(&cur, &cfg).unwrap();
    }
    let after = invariants(&ig, &cur);

    for c in 0..3 {
        let r = cx.block_range(SpaceTag::X, c);
        let blk = &cur.u.coeffs[r];
        assert_eq!(blk[0], 0.0, "wall velocity dof moved (component {c})");
        assert_eq!(blk[dims[0] - 1], 0.0, "wall velocity dof moved (component {c})");
    }
    // The wall-normal magnetic dofs stay at their initial values.
    let rb = cx.block_range(SpaceTag::V2, 0);
    let bdims = cx.space_dims(SpaceTag::V2, 0);
    assert_eq!(state.b.coeffs[rb.start], cur.b.coeffs[rb.start]);
    assert_eq!(
        state.b.coeffs[rb.start + bdims[0] - 1],
        cur.b.coeffs[rb.start + bdims[0] - 1]
    );
    assert!(
        (after.mass - before.mass).abs() <= 1e-13 * before.mass,
        "mass drift {:.3e}",
        (after.mass - before.mass).abs() / before.mass
    );
    assert!(
        (after.total() - before.total()).abs() <= 5.0 * 1e-8 * before.total(),
        "energy drift {:.3e} over five steps",
        (after.total() - before.total()).abs() / before.total()
    );
    assert!(after.div_b <= 1e-12, "div B = {:.3e}", after.div_b);
}
