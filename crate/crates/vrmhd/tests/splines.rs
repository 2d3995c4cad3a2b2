//! Unit and property tests for univariate spline spaces.

use proptest::prelude::*;
use vrmhd::splines::{gauss_legendre, Boundary, SplineSpace1D};
use vrmhd::Real;

fn space(degree: usize, n_cells: usize, boundary: Boundary, iv: (Real, Real)) -> SplineSpace1D {
    SplineSpace1D::build(degree, n_cells, boundary, iv).expect("valid space")
}

#[test]
fn dimensions() {
    assert_eq!(space(0, 4, Boundary::Periodic, (0.0, 1.0)).dim, 4);
    assert_eq!(space(2, 8, Boundary::Clamped, (0.0, 1.0)).dim, 10);
    assert_eq!(space(2, 128, Boundary::Periodic, (0.0, 10.0)).dim, 128);
}

#[test]
fn invalid_sizes_rejected() {
    assert!(SplineSpace1D::build(2, 0, Boundary::Clamped, (0.0, 1.0)).is_err());
    assert!(SplineSpace1D::build(2, 2, Boundary::Periodic, (0.0, 1.0)).is_err());
    assert!(SplineSpace1D::build(1, 4, Boundary::Periodic, (1.0, 1.0)).is_err());
}

#[test]
fn greville_examples() {
    let s = space(1, 4, Boundary::Clamped, (0.0, 1.0));
    let expect = [0.0, 0.25, 0.5, 0.75, 1.0];
    for (g, e) in s.greville_points().iter().zip(expect) {
        assert!((g - e).abs() < 1e-15);
    }

    let s = space(2, 4, Boundary::Periodic, (0.0, 1.0));
    let expect = [0.125, 0.375, 0.625, 0.875];
    for (g, e) in s.greville_points().iter().zip(expect) {
        assert!((g - e).abs() < 1e-15, "got {g}, want {e}");
    }

    let s = space(0, 4, Boundary::Periodic, (0.0, 1.0));
    let expect = [0.125, 0.375, 0.625, 0.875];
    for (g, e) in s.greville_points().iter().zip(expect) {
        assert!((g - e).abs() < 1e-15);
    }
}

#[test]
fn greville_strictly_increasing_and_in_domain() {
    for degree in 1..=3 {
        for &boundary in &[Boundary::Periodic, Boundary::Clamped] {
            let s = space(degree, 12, boundary, (-2.0, 3.0));
            let g = s.greville_points();
            for w in g.windows(2) {
                assert!(w[1] > w[0]);
            }
            for &x in g {
                assert!(x >= s.a - 1e-14 && x <= s.b + 1e-14);
            }
        }
    }
}

#[test]
fn partition_of_unity() {
    for degree in 0..=3 {
        for &boundary in &[Boundary::Periodic, Boundary::Clamped] {
            let s = space(degree, 9, boundary, (0.0, 2.0));
            for i in 0..100 {
                let x = 2.0 * (i as Real + 0.321) / 100.0;
                let (_, vals) = s.eval_basis(x, 0).unwrap();
                let sum: Real = vals.iter().sum();
                assert!(
                    (sum - 1.0).abs() < 1e-13,
                    "degree {degree} {boundary:?} x={x}: sum={sum}"
                );
                assert!(vals.iter().all(|&v| v >= -1e-14), "nonnegative basis");
            }
        }
    }
}

#[test]
fn hat_function_is_nodal() {
    let s = space(1, 5, Boundary::Clamped, (0.0, 1.0));
    let (idx, vals) = s.eval_basis(0.4, 0).unwrap();
    // x = 0.4 is the knot where hat number 2 peaks.
    let mut found = false;
    for (i, v) in idx.iter().zip(&vals) {
        if (*v - 1.0).abs() < 1e-14 {
            assert_eq!(*i, 2);
            found = true;
        } else {
            assert!(v.abs() < 1e-14);
        }
    }
    assert!(found);
}

#[test]
fn derivative_of_constant_vanishes() {
    for degree in 1..=3 {
        for &boundary in &[Boundary::Periodic, Boundary::Clamped] {
            let s = space(degree, 7, boundary, (0.0, 1.0));
            for i in 0..25 {
                let x = (i as Real + 0.5) / 25.0;
                let (_, dvals) = s.eval_basis(x, 1).unwrap();
                let sum: Real = dvals.iter().sum();
                assert!(sum.abs() < 1e-11, "degree {degree} {boundary:?}: {sum}");
            }
        }
    }
}

#[test]
fn out_of_domain_rejected() {
    let s = space(2, 4, Boundary::Clamped, (0.0, 1.0));
    assert!(s.eval_basis(-0.5, 0).is_err());
    assert!(s.eval_basis(1.5, 0).is_err());
}

/// Evaluates the spline with the given coefficients at `x`.
fn eval_spline(s: &SplineSpace1D, c: &[Real], x: Real, deriv: usize) -> Real {
    let (idx, vals) = s.eval_basis(x, deriv).unwrap();
    idx.iter().zip(&vals).map(|(&i, &v)| c[i] * v).sum()
}

#[test]
fn derivative_lands_in_lower_space() {
    // d/dx of a degree-q spline expands exactly in the degree-(q-1) space
    // on the same knots; compare pointwise at off-knot points.
    for q in 1..=3 {
        for &boundary in &[Boundary::Periodic, Boundary::Clamped] {
            let s = space(q, 11, boundary, (0.0, 1.0));
            let lower = space(q - 1, 11, boundary, (0.0, 1.0));
            let c: Vec<Real> = (0..s.dim).map(|i| ((i * 7 + 3) % 13) as Real - 6.0).collect();
            let dc = s.derivative_coeffs(&c);
            assert_eq!(dc.len(), lower.dim);
            for i in 0..200 {
                let x = (i as Real + 0.237) / 200.0;
                let direct = eval_spline(&s, &c, x, 1);
                let via_lower = eval_spline(&lower, &dc, x, 0);
                assert!(
                    (direct - via_lower).abs() < 1e-12 * (1.0 + direct.abs()),
                    "q={q} {boundary:?} x={x}: {direct} vs {via_lower}"
                );
            }
        }
    }
}

#[test]
fn quadrature_examples() {
    // Single cell [0, 0.5], one node: midpoint rule.
    let s = space(0, 1, Boundary::Clamped, (0.0, 0.5));
    let g = s.quadrature_grid(1).unwrap();
    assert!((g.nodes[0] - 0.25).abs() < 1e-15);
    assert!((g.weights[0] - 0.5).abs() < 1e-15);

    // Two-point Gauss integrates x^3 on [0,1] exactly.
    let s = space(1, 1, Boundary::Clamped, (0.0, 1.0));
    let g = s.quadrature_grid(2).unwrap();
    let integral: Real = g
        .nodes
        .iter()
        .zip(&g.weights)
        .map(|(&x, &w)| w * x * x * x)
        .sum();
    assert!((integral - 0.25).abs() < 1e-15);
}

#[test]
fn gauss_nodes_match_reference() {
    // Reference values at 17 significant digits.
    let cases: [(usize, &[Real], &[Real]); 3] = [
        (
            3,
            &[-0.77459666924148340, 0.0, 0.77459666924148340],
            &[0.55555555555555569, 0.88888888888888884, 0.55555555555555569],
        ),
        (
            5,
            &[
                -0.90617984593866396,
                -0.53846931010568311,
                0.0,
                0.53846931010568311,
                0.90617984593866396,
            ],
            &[
                0.23692688505618942,
                0.47862867049936619,
                0.56888888888888900,
                0.47862867049936619,
                0.23692688505618942,
            ],
        ),
        (
            10,
            &[
                -0.97390652851717174,
                -0.86506336668898454,
                -0.67940956829902444,
                -0.43339539412924721,
                -0.14887433898163122,
                0.14887433898163122,
                0.43339539412924721,
                0.67940956829902444,
                0.86506336668898454,
                0.97390652851717174,
            ],
            &[
                0.06667134430868807,
                0.14945134915058036,
                0.21908636251598201,
                0.26926671930999652,
                0.29552422471475298,
                0.29552422471475298,
                0.26926671930999652,
                0.21908636251598201,
                0.14945134915058036,
                0.06667134430868807,
            ],
        ),
    ];
    for (n, ref_nodes, ref_weights) in cases {
        let (nodes, weights) = gauss_legendre(n);
        for i in 0..n {
            assert!(
                (nodes[i] - ref_nodes[i]).abs() < 1e-15,
                "n={n} node {i}: {} vs {}",
                nodes[i],
                ref_nodes[i]
            );
            assert!(
                (weights[i] - ref_weights[i]).abs() < 1e-15,
                "n={n} weight {i}: {} vs {}",
                weights[i],
                ref_weights[i]
            );
        }
    }
}

proptest! {
    #[test]
    fn quadrature_exact_on_polynomials(
        n_gauss in 1usize..8,
        coeff_seed in 0u64..1000,
        n_cells in 1usize..6,
    ) {
        // Random polynomial of the highest exactly-integrable degree.
        let deg = 2 * n_gauss - 1;
        let coeffs: Vec<Real> = (0..=deg)
            .map(|k| (((coeff_seed + k as u64 * 37) % 19) as Real - 9.0) / 5.0)
            .collect();
        let s = space(0, n_cells, Boundary::Clamped, (-1.0, 2.0));
        let g = s.quadrature_grid(n_gauss).unwrap();
        let by_quad: Real = g
            .nodes
            .iter()
            .zip(&g.weights)
            .map(|(&x, &w)| {
                let mut p = 0.0;
                for &c in coeffs.iter().rev() {
                    p = p * x + c;
                }
                w * p
            })
            .sum();
        // Analytic antiderivative evaluated at the ends.
        let anti = |x: Real| -> Real {
            let mut acc = 0.0;
            for (k, &c) in coeffs.iter().enumerate() {
                acc += c * x.powi(k as i32 + 1) / (k as Real + 1.0);
            }
            acc
        };
        let exact = anti(2.0) - anti(-1.0);
        prop_assert!((by_quad - exact).abs() < 1e-12 * (1.0 + exact.abs()));
    }

    #[test]
    fn per_cell_weights_sum_to_cell_length(
        n_gauss in 1usize..9,
        n_cells in 1usize..7,
    ) {
        let s = space(1, n_cells.max(2), Boundary::Periodic, (0.0, 3.0));
        let g = s.quadrature_grid(n_gauss).unwrap();
        for cell in 0..g.n_cells {
            let sum: Real = g.weights[cell * n_gauss..(cell + 1) * n_gauss].iter().sum();
            prop_assert!((sum - s.h).abs() < 1e-14);
            prop_assert!(g.weights[cell * n_gauss..(cell + 1) * n_gauss].iter().all(|&w| w > 0.0));
        }
    }
}
