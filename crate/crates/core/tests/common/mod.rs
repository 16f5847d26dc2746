#![allow(dead_code)]

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use superlase::oracle::{product_state, DenseOperator, OracleSpace};
use superlase::SystemParams;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// g = κ/4, γ = κ/100, η = 20γ, κ = 1.
pub fn desk(n: u64) -> SystemParams {
    SystemParams::new(n, 0.25, 1.0, 0.01).with_eta(0.2)
}

/// Every rate and both frequencies non-zero.
pub fn busy(n: u64) -> SystemParams {
    let mut p = desk(n).with_chi(0.02);
    p.omega_a = 0.3;
    p.omega_c = -0.1;
    p
}

pub fn random_qubit(r: &mut ChaCha8Rng) -> [[c64; 2]; 2] {
    // Bloch vector inside the unit ball; basis (ground, excited)
    let (x, y, z): (f64, f64, f64) = loop {
        let v = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        if v.0 * v.0 + v.1 * v.1 + v.2 * v.2 <= 1.0 {
            break v;
        }
    };
    [
        [c64::new((1.0 - z) / 2.0, 0.0), c64::new(x / 2.0, -y / 2.0)],
        [c64::new(x / 2.0, y / 2.0), c64::new((1.0 + z) / 2.0, 0.0)],
    ]
}

/// Random mixed state of a mode with dimension `dim`, empty top level.
pub fn random_mode(r: &mut ChaCha8Rng, dim: usize) -> Mat<c64> {
    let k = dim - 1;
    let w = Mat::from_fn(k, k, |_, _| c64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)));
    let m = &w * w.adjoint();
    let tr: f64 = (0..k).map(|i| m[(i, i)].re).sum();
    Mat::from_fn(dim, dim, |i, j| if i < k && j < k { m[(i, j)] / tr } else { c64::new(0.0, 0.0) })
}

pub fn random_product(r: &mut ChaCha8Rng, space: &OracleSpace) -> DenseOperator {
    let atom = random_qubit(r);
    let cav = random_mode(r, space.nc());
    let filt = space.m_max.map(|m| random_mode(r, m + 1));
    product_state(space, &atom, &cav, filt.as_ref()).unwrap()
}

/// `|a − b| / max(|b|, floor)`
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}
