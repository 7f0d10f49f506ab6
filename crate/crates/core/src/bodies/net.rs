use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::stream_rng;
use crate::Vector;

/// Default number of directions used by support-function checks.
pub const DEFAULT_NET_SIZE: usize = 4096;

const NET_SEED: u64 = 0x6e65_7473;

/// Deterministic near-uniform unit directions: equally spaced angles in the
/// plane, a Fibonacci lattice on the 2-sphere, and seeded Gaussian directions
/// otherwise.
pub fn direction_net(n: usize, size: usize) -> Vec<Vector> {
    match n {
        0 => Vec::new(),
        1 => vec![Vector::from_element(1, 1.0), Vector::from_element(1, -1.0)],
        2 => (0..size)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / size as f64;
                Vector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..size)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / size as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    Vector::from_vec(vec![r * t.cos(), r * t.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = stream_rng(NET_SEED, n as u64);
            (0..size)
                .map(|_| {
                    let g = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let norm = g.norm();
                    g / norm
                })
                .collect()
        }
    }
}
