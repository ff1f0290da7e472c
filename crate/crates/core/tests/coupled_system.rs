mod common;

use lockbif::locked::{
    beta_bar, bifurcation_points, coupling_matrix, gammas, locked_solution, CouplingSpec,
};
use lockbif::system::*;
use lockbif::Error;

fn mu123() -> CouplingSpec {
    CouplingSpec::new(vec![1.0, 2.0, 3.0]).unwrap()
}

fn combo(u: &[Vec<f64>], t: f64, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    u.iter()
        .zip(v)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + t * y).collect())
        .collect()
}

fn random_state(m: usize, n: usize, beta: f64, seed: u64) -> SystemState {
    let u = (0..n).map(|j| common::smooth(m, seed + j as u64)).collect();
    SystemState::new(beta, u)
}

#[test]
fn energy_special_values() {
    let s = common::interval(400, 3);
    let c = CouplingSpec::new(vec![1.0, 2.0]).unwrap();
    let zero = SystemState::new(0.3, vec![vec![0.0; 400]; 2]);
    assert_eq!(energy(&zero, &c, &s.op).unwrap(), 0.0);
    assert!(system_residual(&zero, &c, &s.op)
        .unwrap()
        .iter()
        .flatten()
        .all(|v| *v == 0.0));
    // a single nonzero component reduces to the scalar functional
    let single = SystemState::new(0.3, vec![s.ground.w.clone(), vec![0.0; 400]]);
    let e = energy(&single, &c, &s.op).unwrap();
    let quarter = 0.25 * s.op.energy_norm_sq(&s.ground.w);
    assert!((e - quarter).abs() <= 1e-9 * quarter, "{e} vs {quarter}");
    let bad = SystemState::new(0.3, vec![vec![0.0; 400]]);
    assert!(matches!(
        energy(&bad, &c, &s.op),
        Err(Error::SizeMismatch { .. })
    ));
    let short = SystemState::new(0.3, vec![vec![0.0; 399]; 2]);
    assert!(matches!(
        system_residual(&short, &c, &s.op),
        Err(Error::SizeMismatch { .. })
    ));
}

#[test]
fn decoupled_state_at_zero_beta() {
    let s = common::interval(800, 3);
    let c = mu123();
    let u = c
        .mu()
        .iter()
        .map(|m| s.ground.w.iter().map(|w| w / m.sqrt()).collect())
        .collect();
    let state = SystemState::new(0.0, u);
    assert!(residual_norm(&state, &c, &s.op).unwrap() <= 1e-10);
}

fn fd_ratio(err: impl Fn(f64) -> f64) -> f64 {
    err(2e-3) / err(1e-3)
}

#[test]
fn gradient_matches_energy_differences() {
    let s = common::interval(200, 3);
    let c = mu123();
    let state = random_state(200, 3, -0.4, 1);
    let phi: Vec<Vec<f64>> = (0..3).map(|j| common::smooth(200, 10 + j)).collect();
    let r = system_residual(&state, &c, &s.op).unwrap();
    let exact = field_inner(&s.op.grid, &r, &phi);
    let err = |eps: f64| {
        let plus = SystemState::new(-0.4, combo(&state.u, eps, &phi));
        let minus = SystemState::new(-0.4, combo(&state.u, -eps, &phi));
        let fd =
            (energy(&plus, &c, &s.op).unwrap() - energy(&minus, &c, &s.op).unwrap()) / (2.0 * eps);
        (fd - exact).abs()
    };
    let ratio = fd_ratio(err);
    assert!((ratio - 4.0).abs() <= 1.2, "ratio {ratio}");
}

#[test]
fn hessian_matches_residual_differences() {
    let s = common::interval(200, 3);
    let c = mu123();
    let state = random_state(200, 3, 0.6, 3);
    let phi: Vec<Vec<f64>> = (0..3).map(|j| common::smooth(200, 20 + j)).collect();
    let h = hessian_apply(&state, &c, &s.op, &phi).unwrap();
    let err = |eps: f64| {
        let rp = system_residual(
            &SystemState::new(0.6, combo(&state.u, eps, &phi)),
            &c,
            &s.op,
        )
        .unwrap();
        let rm = system_residual(
            &SystemState::new(0.6, combo(&state.u, -eps, &phi)),
            &c,
            &s.op,
        )
        .unwrap();
        let fd: Vec<Vec<f64>> = rp
            .iter()
            .zip(&rm)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) / (2.0 * eps))
                    .collect()
            })
            .collect();
        field_norm(&s.op.grid, &combo(&fd, -1.0, &h))
    };
    let ratio = fd_ratio(err);
    assert!((ratio - 4.0).abs() <= 1.2, "ratio {ratio}");
}

#[test]
fn hessian_is_symmetric() {
    let s = common::interval(300, 3);
    let c = mu123();
    let state = random_state(300, 3, -0.2, 5);
    for seed in 0..5 {
        let phi: Vec<Vec<f64>> = (0..3)
            .map(|j| common::wiggle(300, 100 * seed + j))
            .collect();
        let psi: Vec<Vec<f64>> = (0..3)
            .map(|j| common::wiggle(300, 100 * seed + 50 + j))
            .collect();
        let a = field_inner(
            &s.op.grid,
            &hessian_apply(&state, &c, &s.op, &phi).unwrap(),
            &psi,
        );
        let b = field_inner(
            &s.op.grid,
            &phi,
            &hessian_apply(&state, &c, &s.op, &psi).unwrap(),
        );
        assert!((a - b).abs() <= 1e-11 * a.abs().max(1.0), "{a} {b}");
    }
}

#[test]
fn hessian_at_locked_state_uses_c() {
    let s = common::interval(400, 3);
    let c = mu123();
    for beta in [-0.5, 0.3, 0.8, 5.0] {
        let state = locked_solution(&s.ground, &c, beta).unwrap();
        let cm = coupling_matrix(&c, beta).unwrap();
        let phi: Vec<Vec<f64>> = (0..3).map(|j| common::wiggle(400, 7 + j)).collect();
        let h = hessian_apply(&state, &c, &s.op, &phi).unwrap();
        let expect: Vec<Vec<f64>> = (0..3)
            .map(|j| {
                let ap = s.op.apply(&phi[j]).unwrap();
                (0..400)
                    .map(|i| {
                        let w2 = s.ground.w[i] * s.ground.w[i];
                        ap[i] - w2 * (0..3).map(|k| cm[(j, k)] * phi[k][i]).sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        let diff = field_norm(&s.op.grid, &combo(&h, -1.0, &expect));
        assert!(
            diff <= 1e-10 * field_norm(&s.op.grid, &h).max(1.0),
            "beta {beta}: {diff}"
        );
    }
}

#[test]
fn kernel_appears_exactly_at_bifurcation_points() {
    let s = common::interval(400, 6);
    let c = mu123();
    let tol = default_zero_tol(&s.op.grid);
    let pts = bifurcation_points(&c, &s.spectrum).unwrap();
    for (idx, p) in pts.iter().enumerate().take(3) {
        let upper = if idx == 0 {
            c.mu_min()
        } else {
            pts[idx - 1].beta
        };
        let lower = pts.get(idx + 1).map_or(beta_bar(&c), |q| q.beta);
        let at = locked_solution(&s.ground, &c, p.beta).unwrap();
        let spec = hessian_spectrum(&at, &c, &s.op, 12, tol).unwrap();
        assert_eq!(spec.kernel_dim, (c.n() - 1) * p.multiplicity, "k={}", p.k);
        assert!(spec.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert!(spec.morse_index + spec.kernel_dim <= spec.eigenvalues.len());

        let eps = 0.1 * (upper - p.beta).min(p.beta - lower);
        let below = locked_solution(&s.ground, &c, p.beta - eps).unwrap();
        let above = locked_solution(&s.ground, &c, p.beta + eps).unwrap();
        let mb = hessian_spectrum(&below, &c, &s.op, 12, tol).unwrap();
        let ma = hessian_spectrum(&above, &c, &s.op, 12, tol).unwrap();
        assert_eq!(mb.kernel_dim, 0);
        assert_eq!(ma.kernel_dim, 0);
        assert_eq!(
            mb.morse_index - ma.morse_index,
            (c.n() - 1) * p.multiplicity
        );
    }
    // halfway between consecutive points
    for pair in pts.windows(2).take(3) {
        let mid = 0.5 * (pair[0].beta + pair[1].beta);
        let st = locked_solution(&s.ground, &c, mid).unwrap();
        assert_eq!(
            hessian_spectrum(&st, &c, &s.op, 8, tol).unwrap().kernel_dim,
            0
        );
    }
}

#[test]
fn morse_formula_matches_direct_count() {
    let s = common::interval(400, 10);
    let c = mu123();
    let bb = beta_bar(&c);
    let pts = bifurcation_points(&c, &s.spectrum).unwrap();
    let lowest_covered = pts.last().unwrap().beta;
    let tol = default_zero_tol(&s.op.grid);
    let mut checked = 0;
    for i in 0..20 {
        let t = (i as f64 + 0.5) / 20.0;
        let beta = lowest_covered.max(bb) + t * (c.mu_min() - lowest_covered.max(bb));
        if pts.iter().any(|p| (p.beta - beta).abs() < 1e-6) {
            continue;
        }
        let Ok(formula) = morse_index_formula(&c, beta, &s.spectrum) else {
            continue;
        };
        let st = locked_solution(&s.ground, &c, beta).unwrap();
        let direct = hessian_spectrum(&st, &c, &s.op, 4, tol).unwrap();
        assert_eq!(direct.morse_index, formula, "beta {beta}");
        checked += 1;
    }
    assert!(checked >= 15, "{checked}");
    // upper interval
    for beta in [3.2, 6.0] {
        let st = locked_solution(&s.ground, &c, beta).unwrap();
        let direct = hessian_spectrum(&st, &c, &s.op, 4, tol).unwrap();
        assert_eq!(
            direct.morse_index,
            morse_index_formula(&c, beta, &s.spectrum).unwrap()
        );
    }
    // at zero both sums coincide
    let three: usize = (1..=s.spectrum.len())
        .filter(|k| s.spectrum.lambda(*k) < 3.0)
        .map(|k| s.spectrum.multiplicity(k))
        .sum();
    assert_eq!(
        morse_index_formula(&c, 0.0, &s.spectrum).unwrap(),
        3 * three
    );
    let p = pts[0];
    assert!(matches!(
        morse_index_formula(&c, p.beta, &s.spectrum),
        Err(Error::AtBifurcation { .. })
    ));
}

#[test]
fn constructed_kernel_matches_numerical_kernel() {
    let s = common::interval(400, 6);
    let c = mu123();
    let grid = &s.op.grid;
    for p in bifurcation_points(&c, &s.spectrum).unwrap().iter().take(2) {
        let basis = kernel_basis_at_bif(&c, p, s.spectrum.basis(p.k), grid).unwrap();
        assert_eq!(basis.len(), (c.n() - 1) * p.multiplicity);
        let state = locked_solution(&s.ground, &c, p.beta).unwrap();
        let gamma = gammas(&c, p.beta).unwrap();
        for phi in &basis {
            let h = hessian_apply(&state, &c, &s.op, phi).unwrap();
            assert!(
                field_norm(grid, &h) <= 1e-8 * field_norm(grid, phi),
                "{}",
                field_norm(grid, &h)
            );
            let constraint: Vec<f64> = (0..400)
                .map(|i| (0..3).map(|j| gamma[j] * phi[j][i]).sum())
                .collect();
            assert!(grid.norm(&constraint) <= 1e-12);
        }
        // numerically computed null space spans the same subspace
        let pencil = hessian_pencil(&state, &c, &s.op).unwrap();
        let numeric = pencil.cluster_eigenvectors(0.0, basis.len(), &[]).unwrap();
        for phi in &basis {
            let flat: Vec<f64> = (0..400)
                .flat_map(|i| (0..3).map(move |j| phi[j][i]))
                .collect();
            let mut rest = flat.clone();
            for v in &numeric {
                let coef = pencil.mass_dot(&flat, v);
                rest.iter_mut().zip(v).for_each(|(r, x)| *r -= coef * x);
            }
            let sine = pencil.mass_dot(&rest, &rest).sqrt();
            assert!(sine < 1e-4, "principal angle {sine}");
        }
    }
    let p = bifurcation_points(&c, &s.spectrum).unwrap()[0];
    assert!(matches!(
        kernel_basis_at_bif(&c, &p, &[], grid),
        Err(Error::EmptyKernel)
    ));
    let two = vec![s.spectrum.basis(2)[0].clone(); 2];
    assert!(matches!(
        kernel_basis_at_bif(&c, &p, &two, grid),
        Err(Error::WrongMultiplicity { .. })
    ));
}
