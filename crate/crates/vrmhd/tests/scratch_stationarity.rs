use vrmhd::cases::{init_case, preset, CaseName};
use vrmhd::diagnostics::{mode_energies, record};

fn maxdiff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn measure_unperturbed_sheet_drift() {
    let mut spec = preset(CaseName::CurrentSheet2D);
    spec.perturbation.amplitude = Some(0.0);
    // full criterion resolution
    let setup = init_case(&spec).unwrap();
    let ig = &setup.integrator;
    let cfg = &setup.step;
    let mut st = setup.state;
    let st0 = st.clone();
    let r0 = record(ig.galerkin(), ig.eos(), &st).unwrap();
    println!("init: e_total {:.17e} divb {:.3e}", r0.e_total, r0.div_b_l2);
    for k in 0..3 {
        st = ig.strang_step(&st, cfg).unwrap();
        let r = record(ig.galerkin(), ig.eos(), &st).unwrap();
        let modes = mode_energies(ig.galerkin(), &st.b, &[1, 2, 3, 4, 5, 6]).unwrap();
        println!(
            "step {k}: du {:.3e} drho {:.3e} ds {:.3e} db {:.3e} dE/E {:.3e} divb {:.3e}",
            maxdiff(&st.u.coeffs, &st0.u.coeffs),
            maxdiff(&st.rho.coeffs, &st0.rho.coeffs),
            maxdiff(&st.s.coeffs, &st0.s.coeffs),
            maxdiff(&st.b.coeffs, &st0.b.coeffs),
            (r.e_total - r0.e_total).abs() / r0.e_total,
            r.div_b_l2,
        );
        println!(
            "  tearing mode energies 1..6: {:.3e} {:.3e} {:.3e} {:.3e} {:.3e} {:.3e}",
            modes[0], modes[1], modes[2], modes[3], modes[4], modes[5]
        );
    }
}
