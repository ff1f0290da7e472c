#![allow(dead_code)]

use std::f64::consts::PI;

use lockbif::grid::{
    assemble_operator, build_grid, DomainSpec, PotentialSpec, SchrodingerOperator,
};
use lockbif::scalar::{
    solve_ground_state, weighted_spectrum, GroundState, SolverOptions, WeightedSpectrum,
    DEFAULT_CLUSTER_TOL,
};

pub struct Setup {
    pub op: SchrodingerOperator,
    pub ground: GroundState,
    pub spectrum: WeightedSpectrum,
}

/// `(0, π)` with `a ≡ 1`.
pub fn interval(m: usize, kmax: usize) -> Setup {
    let grid = build_grid(&DomainSpec::interval(0.0, PI).unwrap(), m).unwrap();
    let op = assemble_operator(&grid, &PotentialSpec::Constant { value: 1.0 }).unwrap();
    let mut ground = solve_ground_state(&op, &SolverOptions::default()).unwrap();
    let spectrum = weighted_spectrum(&op, &mut ground, kmax, DEFAULT_CLUSTER_TOL).unwrap();
    Setup {
        op,
        ground,
        spectrum,
    }
}

/// Deterministic pseudo-random field with values in `[-1, 1]`.
pub fn wiggle(m: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn smooth(m: usize, seed: u64) -> Vec<f64> {
    let s = seed as f64;
    (0..m)
        .map(|i| {
            let x = (i as f64 + 1.0) / (m as f64 + 1.0) * PI;
            (x).sin() * (1.0 + 0.3 * (s + 2.0 * x).cos()) + 0.1 * ((3.0 + s) * x).sin()
        })
        .collect()
}
