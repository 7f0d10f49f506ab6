//! Cross-module properties checked through the public API.

use extpos::bodies::{parse_body, Body, BodySpec};
use extpos::linalg::stream_rng;
use extpos::linalg::{haar_orthogonal, AffineMap};
use extpos::maxint::{intersection_volume, VolumeMethod};
use extpos::pjp::{positive_john, PjpOptions};
use extpos::suite::random_polytope;
use extpos::Matrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// `P*(sK, L) = s P*(K, L)` and `z*(sK, L) = s z*(K, L)`.
    #[test]
    fn positive_john_scales_with_the_container(seed in 0u64..1000, s in 0.5f64..3.0) {
        let mut rng = stream_rng(seed, 0);
        let k = random_polytope(&mut rng, 2, 7, 0.0);
        let l = random_polytope(&mut rng, 2, 6, 0.0);
        let base = positive_john(&k, &l, &PjpOptions::default()).unwrap();
        let scaled = k.apply_affine(&AffineMap::linear(Matrix::identity(2, 2) * s)).unwrap();
        let pj = positive_john(&scaled, &l, &PjpOptions::default()).unwrap();
        prop_assert!((pj.solution.p.matrix() - base.solution.p.matrix() * s).norm() < 1e-5 * s);
        prop_assert!((&pj.solution.z - &base.solution.z * s).norm() < 1e-5 * s);
    }

    /// Rotating both bodies by `R` conjugates the solution: `(R P Rᵀ, R z)`.
    #[test]
    fn positive_john_is_rotation_equivariant(seed in 0u64..1000) {
        let mut rng = stream_rng(seed, 1);
        let k = random_polytope(&mut rng, 3, 9, 0.0);
        let l = random_polytope(&mut rng, 3, 8, 0.0);
        let r = haar_orthogonal(3, seed).into_matrix();
        let map = AffineMap::linear(r.clone());
        let base = positive_john(&k, &l, &PjpOptions::default()).unwrap();
        let pj = positive_john(&k.apply_affine(&map).unwrap(), &l.apply_affine(&map).unwrap(), &PjpOptions::default()).unwrap();
        let expected = &r * base.solution.p.matrix() * r.transpose();
        prop_assert!((pj.solution.p.matrix() - expected).norm() < 1e-5);
        prop_assert!((&pj.solution.z - &r * &base.solution.z).norm() < 1e-5);
    }

    /// A body written through its spec parses back to the same body.
    #[test]
    fn body_files_round_trip(seed in 0u64..1000) {
        let mut rng = stream_rng(seed, 2);
        let body = random_polytope(&mut rng, 3, 10, 0.2);
        let text = serde_json::to_string(&BodySpec::from_body(&body)).unwrap();
        let back = parse_body(&text).unwrap();
        prop_assert!((back.volume() - body.volume()).abs() < 1e-12);
        let vol = intersection_volume(&body, &back, VolumeMethod::Exact).unwrap().volume;
        prop_assert!((vol - body.volume()).abs() < 1e-10);
    }
}

#[test]
fn positive_john_of_a_body_in_itself_is_the_identity() {
    for body in [Body::cube(3), Body::cross_polytope(4), Body::euclidean_ball(2)] {
        let pj = positive_john(&body, &body, &PjpOptions::default()).unwrap();
        let n = body.dim();
        assert!((pj.solution.p.matrix() - Matrix::identity(n, n)).amax() < 1e-6, "{}", body.describe());
        assert!(pj.solution.z.amax() < 1e-6);
    }
}
