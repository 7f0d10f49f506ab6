use super::*;
use crate::linalg::{haar_orthogonal, sylvester_hadamard_basis};
use crate::pjp::PositionSolution;

fn logdet_at(outer: &Body, inner: &Body, u: &Matrix) -> f64 {
    solve_at(outer, inner, u, &FamilyOptions::default()).unwrap().solution.log_det
}

fn random_skew(n: usize, seed: u64) -> Matrix {
    let mut rng = stream_rng(seed, 99);
    let a = skew(&Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)));
    let norm = a.norm();
    a / norm
}

fn asymmetric_polytope(n: usize) -> Body {
    let mut pts = Vec::new();
    for i in 0..n {
        let mut e = Vector::zeros(n);
        e[i] = 1.0 + 0.1 * i as f64;
        pts.push(e.clone());
        pts.push(-e * 0.6);
    }
    pts.push(Vector::from_element(n, 0.45));
    Body::v_polytope(&pts).unwrap()
}

/// Central differences of `log det P*(e^{tA} U)` against `⟨A, G⟩`.
#[test]
fn envelope_gradient_matches_finite_differences() {
    let cases = [
        (Body::cube(2), Body::cross_polytope(2)),
        (Body::cube(3), asymmetric_polytope(3)),
        (Body::euclidean_ball(3), asymmetric_polytope(3)),
        (Body::cross_polytope(3), Body::cube(3)),
    ];
    let h = 1e-5;
    for (case, (outer, inner)) in cases.iter().enumerate() {
        let n = outer.dim();
        let mut checked = 0;
        for s in 0..6u64 {
            let u = haar_orthogonal(n, 1000 + s).into_matrix();
            let pj = solve_at(outer, inner, &u, &FamilyOptions::default()).unwrap();
            let g = multiplier_gradient(&pj.problem, &pj.solution);
            let a = random_skew(n, s);
            let analytic = crate::linalg::frobenius_dot(&a, &g.gradient);
            let plus = logdet_at(outer, inner, &(matrix_exp(&(&a * h)) * &u));
            let minus = logdet_at(outer, inner, &(matrix_exp(&(&a * -h)) * &u));
            let one_sided = ((plus - pj.solution.log_det) / h, (pj.solution.log_det - minus) / h);
            if (one_sided.0 - one_sided.1).abs() > 1e-3 * one_sided.0.abs().max(1e-3) {
                // A kink lies within h; the derivative is one-sided there.
                continue;
            }
            let fd = (plus - minus) / (2.0 * h);
            assert!(
                (fd - analytic).abs() <= 1e-3 * fd.abs().max(1e-3),
                "case {case} seed {s}: fd {fd} analytic {analytic}"
            );
            checked += 1;
        }
        assert!(checked >= 3, "case {case}: only {checked} smooth samples");
    }
}

fn nnls_gradient(pj: &PositiveJohn) -> EnvelopeGradient {
    envelope_gradient(&pj.solution, &pj.contacts, &pj.decomposition.weights).unwrap()
}

#[test]
fn known_stationary_rotations() {
    let pj =
        solve_at(&Body::cube(2), &Body::cross_polytope(2), &Matrix::identity(2, 2), &FamilyOptions::default()).unwrap();
    assert!(nnls_gradient(&pj).stationarity < 1e-6);
    for n in [2, 4] {
        let h = sylvester_hadamard_basis(n).unwrap();
        let pj = solve_at(&Body::cube(n), &Body::cube(n), h.matrix(), &FamilyOptions::default()).unwrap();
        assert!((pj.solution.log_det + 0.5 * n as f64 * (n as f64).ln()).abs() < 1e-6);
        assert!(nnls_gradient(&pj).stationarity < 1e-6);
    }
}

#[test]
fn envelope_gradient_requires_a_decomposition() {
    let pj =
        solve_at(&Body::cube(2), &Body::cross_polytope(2), &Matrix::identity(2, 2), &FamilyOptions::default()).unwrap();
    let bad = vec![0.0; pj.contacts.len()];
    assert!(matches!(envelope_gradient(&pj.solution, &pj.contacts, &bad), Err(Error::DecompositionResidual(_))));
}

fn ellipse(diag: &[f64]) -> Body {
    let s = SpdMatrix::new(Matrix::from_diagonal(&Vector::from_column_slice(diag))).unwrap();
    Body::ellipsoid(s, Vector::zeros(diag.len())).unwrap()
}

#[test]
fn sweeps() {
    let opts = FamilyOptions::default();
    let s = sweep_family(&ellipse(&[2.0, 1.0]), &Body::cube(2), 30, 1, &opts).unwrap();
    assert_eq!(s.summary.failed, 0);
    assert!(s.summary.std_dev * 2.0 < 1e-6, "{:?}", s.summary);
    let ball = Body::euclidean_ball(2);
    let s = sweep_family(&ball, &ball, 10, 2, &opts).unwrap();
    assert!(s.summary.max.abs() < 1e-6 && s.summary.min.abs() < 1e-6);
    let s = sweep_family(&Body::cube(4), &Body::cross_polytope(4), 200, 3, &opts).unwrap();
    assert_eq!(s.summary.failed, 0);
    assert!(s.summary.min >= -1e-7, "{:?}", s.summary);
    // Determinism.
    let a = sweep_family(&Body::cube(3), &Body::cube(3), 5, 9, &opts).unwrap();
    let b = sweep_family(&Body::cube(3), &Body::cube(3), 5, 9, &opts).unwrap();
    assert_eq!(
        a.samples.iter().map(|s| s.log_det).collect::<Vec<_>>(),
        b.samples.iter().map(|s| s.log_det).collect::<Vec<_>>()
    );
}

#[test]
fn square_and_diamond_extremes() {
    let opts = FamilyOptions { starts: 6, ..Default::default() };
    let k = Body::cube(2);
    let l = Body::cross_polytope(2);
    let max = extremize_over_rotations(&k, &l, Direction::Max, 0, &opts).unwrap();
    assert!((max.position.solution.log_det - 2f64.ln()).abs() < 1e-5, "{}", max.position.solution.log_det);
    let min = extremize_over_rotations(&k, &l, Direction::Min, 0, &opts).unwrap();
    assert!(min.position.solution.log_det.abs() < 1e-5, "{}", min.position.solution.log_det);
    assert!(min.decomposition.residual() < 1e-4, "{:?}", min.decomposition);
}

#[test]
fn hadamard_minimum_of_cube_in_cube() {
    let opts = FamilyOptions { starts: 4, ..Default::default() };
    let n = 4;
    let min = extremize_over_rotations(&Body::cube(n), &Body::cube(n), Direction::Min, 0, &opts).unwrap();
    let expected = -0.5 * n as f64 * (n as f64).ln();
    assert!((min.position.solution.log_det - expected).abs() < 1e-4, "{}", min.position.solution.log_det);
    assert!(min.decomposition.residual() < 1e-4);
    // Every entry of the minimiser has modulus 1/√n up to signs: a Hadamard basis.
    let u = min.rotation.matrix();
    assert!(u.iter().all(|x| (x.abs() - 0.5).abs() < 1e-2), "{u}");
}

#[test]
fn dilation_examples() {
    // K = B²_∞, L_s = B²_1 with pairs from the solved position at U = I.
    let pj =
        solve_at(&Body::cube(2), &Body::cross_polytope(2), &Matrix::identity(2, 2), &FamilyOptions::default()).unwrap();
    let (d, pairs) = genuine_certificate(&pj).unwrap();
    let placed = Body::cross_polytope(2).apply_affine(&pj.placement()).unwrap();
    let r = check_dilation_inclusion(&Body::cube(2), &placed, &pj.solution.p, &pairs, &d.weights).unwrap();
    assert!(r.holds && r.center.norm() < 1e-6);
    // ‖x‖₁ ≤ 2‖x‖∞ is tight at the corners.
    assert!(r.worst_margin.abs() < 1e-6);

    let ball = Body::euclidean_ball(2);
    let pj = solve_at(&ball, &ball, &Matrix::identity(2, 2), &FamilyOptions::default()).unwrap();
    let (d, pairs) = genuine_certificate(&pj).unwrap();
    let placed = ball.apply_affine(&pj.placement()).unwrap();
    assert!(check_dilation_inclusion(&ball, &placed, &pj.solution.p, &pairs, &d.weights).unwrap().holds);

    let k = Body::cross_polytope(3);
    let pj = solve_at(&k, &Body::cube(3), &Matrix::identity(3, 3), &FamilyOptions::default()).unwrap();
    let (d, pairs) = genuine_certificate(&pj).unwrap();
    let placed = Body::cube(3).apply_affine(&pj.placement()).unwrap();
    assert!(check_dilation_inclusion(&k, &placed, &pj.solution.p, &pairs, &d.weights).unwrap().holds);
}

#[test]
fn transport_matches_direct_solves() {
    let opts = FamilyOptions::default();
    for (e, l) in [(ellipse(&[2.0, 1.0]), Body::cube(2)), (ellipse(&[3.0, 1.0, 0.5]), Body::cross_polytope(3))] {
        let n = e.dim();
        let base: PositionSolution = solve_at(&e, &l, &Matrix::identity(n, n), &opts).unwrap().solution;
        for s in 0..5 {
            let u = haar_orthogonal(n, 70 + s);
            let t = ellipsoid_family_transport(&e, &l, &base.p, &u, &opts).unwrap();
            assert!(t.statement_residual < 1e-5, "{t:?}");
            assert_eq!(t.orientation, TransportOrientation::Statement);
            assert!((t.p.log_det() - base.log_det).abs() < 1e-8);
        }
        let t = ellipsoid_family_transport(&e, &l, &base.p, &OrthogonalMatrix::identity(n), &opts).unwrap();
        assert!((t.p.matrix() - base.p.matrix()).norm() < 1e-9);
    }
    // A rectangle has a non-round John ellipse, which separates the two
    // orientations: only the statement's matches.
    let rect = Body::v_polytope(&[
        Vector::from_vec(vec![2.0, 1.0]),
        Vector::from_vec(vec![-2.0, 1.0]),
        Vector::from_vec(vec![-2.0, -1.0]),
        Vector::from_vec(vec![2.0, -1.0]),
    ])
    .unwrap();
    for (e, l) in [(ellipse(&[2.0, 1.0]), rect), (ellipse(&[3.0, 1.0, 0.5]), asymmetric_polytope(3))] {
        let n = e.dim();
        let base = solve_at(&e, &l, &Matrix::identity(n, n), &opts).unwrap().solution;
        for s in 0..3 {
            // Reflections in the plane are symmetric, so use proper rotations.
            let mut u = haar_orthogonal(n, 80 + s).into_matrix();
            if u.determinant() < 0.0 {
                u.column_mut(0).neg_mut();
            }
            let u = OrthogonalMatrix::new(u).unwrap();
            let t = ellipsoid_family_transport(&e, &l, &base.p, &u, &opts).unwrap();
            assert_eq!(t.orientation, TransportOrientation::Statement);
            assert!(t.statement_residual < 1e-5 && t.transposed_residual > 1e-3, "{t:?}");
        }
    }
    // A ball inside an ellipse fills it for every rotation; the disk is
    // replaced by an inscribed 256-gon, which costs a factor 1/cos(π/256).
    let e = ellipse(&[2.0, 1.0]);
    let ball = Body::euclidean_ball(2);
    let base = solve_at(&e, &ball, &Matrix::identity(2, 2), &opts).unwrap().solution;
    let err = (base.p.matrix() - Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]))).norm();
    assert!(err < 4e-4, "{err} {}", base.p.matrix());
}

#[test]
fn rotation_statistics() {
    let opts = FamilyOptions::default();
    let stats = random_rotation_statistics(&Body::cube(8), &Body::cross_polytope(8), 100, 5, &opts).unwrap();
    let median = stats.rows.iter().find(|r| r.quantile == 0.5).unwrap().det_nth_root;
    assert!((1.0..=8f64.sqrt()).contains(&median), "{median}");
    let stats = random_rotation_statistics(&Body::cube(8), &Body::cube(8), 100, 6, &opts).unwrap();
    let median = stats.rows.iter().find(|r| r.quantile == 0.5).unwrap().det_nth_root;
    assert!(median <= 1.0);
    let ball = Body::euclidean_ball(3);
    let stats = random_rotation_statistics(&ball, &ball, 10, 7, &opts).unwrap();
    assert!(stats.rows.iter().all(|r| (r.det_nth_root - 1.0).abs() < 1e-6));
    assert!(random_rotation_statistics(&ball, &ball, 3, 7, &opts).is_err());
}
