//! De Rham complex: dimensions, exact identities, commuting projectors.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vrmhd::complex::{DeRhamComplex, DirectionSpec, SpaceTag};
use vrmhd::splines::Boundary;
use vrmhd::Real;

const TAU: Real = std::f64::consts::TAU;

fn periodic(degree: usize, n_cells: usize, interval: (Real, Real)) -> DirectionSpec {
    DirectionSpec {
        degree,
        n_cells,
        boundary: Boundary::Periodic,
        interval,
    }
}

fn box_2d(degree: usize, n: usize, len: Real) -> DeRhamComplex {
    DeRhamComplex::build([
        Some(periodic(degree, n, (0.0, len))),
        Some(periodic(degree, n, (0.0, len))),
        None,
    ])
    .unwrap()
}

fn box_3d(degree: usize, n: usize, len: Real) -> DeRhamComplex {
    DeRhamComplex::build([
        Some(periodic(degree, n, (0.0, len))),
        Some(periodic(degree, n, (0.0, len))),
        Some(periodic(degree, n, (0.0, len))),
    ])
    .unwrap()
}

fn random_field(cx: &DeRhamComplex, tag: SpaceTag, rng: &mut ChaCha8Rng) -> vrmhd::complex::Field {
    let mut f = cx.field_zeros(tag);
    for c in f.coeffs.iter_mut() {
        *c = rng.gen_range(-1.0..1.0);
    }
    f
}

fn max_abs(v: &[Real]) -> Real {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn dimensions_match_case_grids() {
    // 1D current-sheet grid: p = 2, 128 periodic cells.
    let cx = DeRhamComplex::build([Some(periodic(2, 128, (0.0, 1.0))), None, None]).unwrap();
    assert_eq!(cx.dim, 1);
    assert_eq!(cx.total_len(SpaceTag::V3), 128);
    assert_eq!(cx.total_len(SpaceTag::V0), 128);
    // 2.5D block shapes: one nontrivial direction, unit factors elsewhere.
    assert_eq!(cx.space_dims(SpaceTag::V1, 0), [128, 1, 1]);
    assert_eq!(cx.space_dims(SpaceTag::V2, 2), [128, 1, 1]);
    assert_eq!(cx.total_len(SpaceTag::X), 3 * 128);

    // 2D Orszag-Tang grid: 256 x 256, p = 2, periodic.
    let cx = box_2d(2, 256, TAU);
    assert_eq!(cx.dim, 2);
    assert_eq!(cx.total_len(SpaceTag::V3), 256 * 256);
    assert_eq!(cx.block_len(SpaceTag::V2, 0), 256 * 256);
    assert_eq!(cx.total_len(SpaceTag::V1), 3 * 256 * 256);
}

#[test]
fn invalid_direction_rejected() {
    // Periodic fine degree 3 needs more than 3 cells.
    assert!(DeRhamComplex::build([Some(periodic(2, 3, (0.0, 1.0))), None, None]).is_err());
    assert!(DeRhamComplex::build([None, None, None]).is_err());
}

#[test]
fn tag_mismatch_rejected() {
    let cx = box_2d(1, 8, 1.0);
    let a = cx.field_zeros(SpaceTag::V1);
    assert!(cx.grad(&a).is_err());
    assert!(cx.curl(&cx.field_zeros(SpaceTag::V0)).is_err());
    assert!(cx.div(&cx.field_zeros(SpaceTag::V1)).is_err());
}

#[test]
fn complex_identities_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for degree in [1usize, 2] {
        let cx = box_3d(degree, 8, 1.0);
        let f = random_field(&cx, SpaceTag::V0, &mut rng);
        let cg = cx.curl(&cx.grad(&f).unwrap()).unwrap();
        assert!(
            max_abs(&cg.coeffs) <= 1e-13,
            "curl(grad) = {:.3e} at p = {degree}",
            max_abs(&cg.coeffs)
        );
        let a = random_field(&cx, SpaceTag::V1, &mut rng);
        let dc = cx.div(&cx.curl(&a).unwrap()).unwrap();
        assert!(
            max_abs(&dc.coeffs) <= 1e-13,
            "div(curl) = {:.3e} at p = {degree}",
            max_abs(&dc.coeffs)
        );
    }
}

#[test]
fn projectors_reproduce_constants() {
    for cx in [box_2d(2, 6, TAU), box_3d(1, 4, 1.0)] {
        let f3 = cx.project_3(|_, _, _| 2.5);
        assert!(max_abs(&f3.coeffs.iter().map(|c| c - 2.5).collect::<Vec<_>>()) <= 1e-12);
        let f0 = cx.project_0(|_, _, _| -1.25);
        assert!(max_abs(&f0.coeffs.iter().map(|c| c + 1.25).collect::<Vec<_>>()) <= 1e-12);
        for (tag, field) in [
            (SpaceTag::V1, cx.project_1(|_, _, _| [1.0, -2.0, 0.5])),
            (SpaceTag::V2, cx.project_2(|_, _, _| [1.0, -2.0, 0.5])),
            (SpaceTag::X, cx.project_x(|_, _, _| [1.0, -2.0, 0.5])),
        ] {
            for (c, want) in [(0usize, 1.0), (1, -2.0), (2, 0.5)] {
                let blk = &field.coeffs[cx.block_range(tag, c)];
                let err = max_abs(&blk.iter().map(|v| v - want).collect::<Vec<_>>());
                assert!(err <= 1e-12, "{} comp {c}: {err:.3e}", tag.name());
            }
        }
    }
}

#[test]
fn zero_function_projects_to_zero() {
    let cx = box_2d(2, 8, TAU);
    let u = cx.project_x(|_, _, _| [0.0, 0.0, 0.0]);
    assert_eq!(max_abs(&u.coeffs), 0.0);
}

#[test]
fn orszag_tang_magnetic_field_is_divergence_free() {
    let cx = box_2d(2, 16, TAU);
    let b = cx.project_2(|x, y, _| [-(y.sin()), (2.0 * x).sin(), 0.0]);
    let div_b = cx.div(&b).unwrap();
    assert!(max_abs(&div_b.coeffs) <= 1e-12, "{:.3e}", max_abs(&div_b.coeffs));
    let rhs = cx.project_3(|_, _, _| 0.0);
    assert!(max_abs(&rhs.coeffs) <= 1e-12);
}

#[test]
fn interpolation_is_identity_on_v0() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cx = box_2d(2, 8, 1.0);
    let f = random_field(&cx, SpaceTag::V0, &mut rng);
    let g = cx.project_0(|x, y, z| cx.eval_field(&f, 0, [x, y, z], [0, 0, 0]).unwrap());
    let err: Vec<Real> = f.coeffs.iter().zip(&g.coeffs).map(|(a, b)| a - b).collect();
    assert!(max_abs(&err) <= 1e-12, "{:.3e}", max_abs(&err));
}

#[test]
fn projectors_are_idempotent() {
    let cx = box_2d(2, 6, TAU);
    let fields = [
        (
            SpaceTag::V0,
            cx.project_0(|x, y, _| (x.sin() * (2.0 * y).cos()) + 0.3),
        ),
        (
            SpaceTag::V3,
            cx.project_3(|x, y, _| ((2.0 * x).cos() + y.sin()) * 0.7),
        ),
        (
            SpaceTag::V1,
            cx.project_1(|x, y, _| [y.cos(), x.sin(), x.cos() * y.sin()]),
        ),
        (
            SpaceTag::V2,
            cx.project_2(|x, y, _| [-(y.sin()), (2.0 * x).sin(), x.cos()]),
        ),
    ];
    for (tag, once) in fields {
        let twice = match tag {
            SpaceTag::V0 => {
                cx.project_0(|x, y, z| cx.eval_field(&once, 0, [x, y, z], [0, 0, 0]).unwrap())
            }
            SpaceTag::V3 => {
                cx.project_3(|x, y, z| cx.eval_field(&once, 0, [x, y, z], [0, 0, 0]).unwrap())
            }
            SpaceTag::V1 => cx.project_1(|x, y, z| {
                [0, 1, 2].map(|c| cx.eval_field(&once, c, [x, y, z], [0, 0, 0]).unwrap())
            }),
            SpaceTag::V2 => cx.project_2(|x, y, z| {
                [0, 1, 2].map(|c| cx.eval_field(&once, c, [x, y, z], [0, 0, 0]).unwrap())
            }),
            SpaceTag::X => unreachable!(),
        };
        let err: Vec<Real> = once
            .coeffs
            .iter()
            .zip(&twice.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        assert!(max_abs(&err) <= 1e-12, "{}: {:.3e}", tag.name(), max_abs(&err));
    }
}

#[test]
fn commuting_diagram_holds() {
    let cx = box_3d(2, 8, TAU);
    // grad after interpolation equals edge projection of the gradient.
    let f = |x: Real, y: Real, z: Real| (x).sin() * (2.0 * y).cos() + (z + x).cos();
    let grad_f = |x: Real, y: Real, z: Real| {
        [
            (x).cos() * (2.0 * y).cos() - (z + x).sin(),
            -2.0 * (x).sin() * (2.0 * y).sin(),
            -(z + x).sin(),
        ]
    };
    let lhs = cx.grad(&cx.project_0(f)).unwrap();
    let rhs = cx.project_1(grad_f);
    let err: Vec<Real> = lhs.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect();
    assert!(max_abs(&err) <= 1e-10, "grad diagram: {:.3e}", max_abs(&err));

    // curl after edge projection equals face projection of the curl.
    let a_fun = |x: Real, y: Real, z: Real| {
        [
            (y).sin() * (z).cos(),
            (2.0 * z).sin() + (x).cos(),
            (x).sin() * (y).cos(),
        ]
    };
    let curl_a = |x: Real, y: Real, z: Real| {
        [
            (x).sin() * -(y).sin() - 2.0 * (2.0 * z).cos(),
            (y).sin() * -(z).sin() - (x).cos() * (y).cos(),
            -(x).sin() - (y).cos() * (z).cos(),
        ]
    };
    let lhs = cx.curl(&cx.project_1(a_fun)).unwrap();
    let rhs = cx.project_2(curl_a);
    let err: Vec<Real> = lhs.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect();
    assert!(max_abs(&err) <= 1e-10, "curl diagram: {:.3e}", max_abs(&err));

    // div after face projection equals volume projection of the divergence.
    let f_fun = |x: Real, y: Real, z: Real| {
        [
            (2.0 * x).sin() * (y).cos(),
            (y).sin() * (z).cos(),
            (z).sin() * (x).cos(),
        ]
    };
    let div_f = |x: Real, y: Real, z: Real| {
        2.0 * (2.0 * x).cos() * (y).cos() + (y).cos() * (z).cos() + (z).cos() * (x).cos()
    };
    let lhs = cx.div(&cx.project_2(f_fun)).unwrap();
    let rhs = cx.project_3(div_f);
    let err: Vec<Real> = lhs.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect();
    assert!(max_abs(&err) <= 1e-10, "div diagram: {:.3e}", max_abs(&err));
}

#[test]
fn gradient_of_interpolated_sine_converges() {
    // Pointwise error of grad(interpolant of sin(2 pi x / L)) against the
    // exact derivative drops at the coarse approximation order p + 1.
    let p = 2;
    let mut errs = Vec::new();
    for n in [8usize, 16, 32] {
        let cx = DeRhamComplex::build([Some(periodic(p, n, (0.0, 1.0))), None, None]).unwrap();
        let f = cx.project_0(|x, _, _| (TAU * x).sin());
        let g = cx.grad(&f).unwrap();
        let mut err: Real = 0.0;
        for i in 0..200 {
            let x = (i as Real + 0.31) / 200.0;
            let have = cx.eval_field(&g, 0, [x, 0.5, 0.5], [0, 0, 0]).unwrap();
            let want = TAU * (TAU * x).cos();
            err = err.max((have - want).abs());
        }
        errs.push(err);
    }
    let rate = (errs[0] / errs[2]).log2() / 2.0;
    assert!(rate >= p as Real + 0.6, "rate {rate:.2}, errors {errs:?}");
}

#[test]
fn velocity_interpolation_converges_at_fine_order() {
    // Component-wise Greville interpolation carries the fine order p + 2.
    let p = 1;
    let mut errs = Vec::new();
    for n in [8usize, 16, 32] {
        let cx = box_2d(p, n, TAU);
        let u = cx.project_x(|x, y, _| [-(y.sin()), x.sin(), 0.0]);
        let mut err: Real = 0.0;
        for i in 0..40 {
            for j in 0..40 {
                let x = TAU * (i as Real + 0.37) / 40.0;
                let y = TAU * (j as Real + 0.61) / 40.0;
                let ux = cx.eval_field(&u, 0, [x, y, 0.5], [0, 0, 0]).unwrap();
                let uy = cx.eval_field(&u, 1, [x, y, 0.5], [0, 0, 0]).unwrap();
                err = err.max((ux + y.sin()).abs()).max((uy - x.sin()).abs());
            }
        }
        errs.push(err);
    }
    let rate = (errs[0] / errs[2]).log2() / 2.0;
    assert!(rate >= p as Real + 1.6, "rate {rate:.2}, errors {errs:?}");
}

#[test]
fn harmonic_form_count_on_torus() {
    // On the 3-torus the first Betti number is 3: dim ker(curl) exceeds
    // rank(grad) by exactly the three constant 1-form directions.
    let cx = box_3d(1, 3, 1.0);
    let n0 = cx.total_len(SpaceTag::V0);
    let n1 = cx.total_len(SpaceTag::V1);
    let n2 = cx.total_len(SpaceTag::V2);

    let mut g = nalgebra::DMatrix::<Real>::zeros(n1, n0);
    for j in 0..n0 {
        let mut e = cx.field_zeros(SpaceTag::V0);
        e.coeffs[j] = 1.0;
        let col = cx.grad(&e).unwrap();
        for i in 0..n1 {
            g[(i, j)] = col.coeffs[i];
        }
    }
    let mut c = nalgebra::DMatrix::<Real>::zeros(n2, n1);
    for j in 0..n1 {
        let mut e = cx.field_zeros(SpaceTag::V1);
        e.coeffs[j] = 1.0;
        let col = cx.curl(&e).unwrap();
        for i in 0..n2 {
            c[(i, j)] = col.coeffs[i];
        }
    }
    let rank_g = g.rank(1e-10);
    let rank_c = c.rank(1e-10);
    let ker_c = n1 - rank_c;
    assert_eq!(rank_g, n0 - 1);
    assert_eq!(ker_c - rank_g, 3);
}
