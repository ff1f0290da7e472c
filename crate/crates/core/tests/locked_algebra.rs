mod common;

use approx::assert_abs_diff_eq;
use lockbif::locked::*;
use lockbif::system::{residual_norm, system_residual};
use lockbif::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn coupling_strategy() -> impl Strategy<Value = CouplingSpec> {
    prop::collection::vec(0.3f64..5.0, 2..=6).prop_map(|mu| CouplingSpec::new(mu).unwrap())
}

/// Coupling together with a `β` strictly inside `(β̄, μ_min)`.
fn lower_point() -> impl Strategy<Value = (CouplingSpec, f64)> {
    (coupling_strategy(), 0.02f64..0.98).prop_map(|(c, t)| {
        let bb = beta_bar(&c);
        let beta = bb + t * (c.mu_min() - bb);
        (c, beta)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn constraint_and_ratio_identities((c, beta) in lower_point()) {
        let a = gammas_alphas(&c, beta).unwrap().alpha;
        let mu = c.mu();
        let total: f64 = a.iter().map(|x| x * x).sum();
        let scale = a.iter().map(|x| x * x * mu.iter().cloned().fold(0.0, f64::max).max(beta.abs())).sum::<f64>().max(1.0);
        for j in 0..c.n() {
            let lhs = mu[j] * a[j] * a[j] + beta * (total - a[j] * a[j]);
            prop_assert!((lhs - 1.0).abs() <= 1e-12 * scale, "j={} lhs={}", j, lhs);
            let r0 = (mu[0] - beta) * a[0] * a[0];
            let rj = (mu[j] - beta) * a[j] * a[j];
            prop_assert!((r0 - rj).abs() <= 1e-12 * r0.abs().max(1.0));
        }
    }

    #[test]
    fn upper_interval_identities(c in coupling_strategy(), d in 0.01f64..20.0) {
        let beta = c.mu_max() + d;
        let a = gammas_alphas(&c, beta).unwrap();
        prop_assert!(a.gamma.is_none());
        let total: f64 = a.alpha.iter().map(|x| x * x).sum();
        for j in 0..c.n() {
            let lhs = c.mu()[j] * a.alpha[j].powi(2) + beta * (total - a.alpha[j].powi(2));
            prop_assert!((lhs - 1.0).abs() <= 1e-11 * (beta * total).max(1.0));
        }
        prop_assert!(eval_f(&c, beta).unwrap() < 1.0);
    }

    #[test]
    fn c_spectrum_matches_dense_solver((c, beta) in lower_point()) {
        prop_assume!(beta.abs() > 1e-6);
        let (cm, _) = matrix_cd(&c, beta).unwrap();
        let f = eval_f(&c, beta).unwrap();
        let mut ev: Vec<f64> = cm.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        let mut want = vec![3.0];
        want.extend(std::iter::repeat_n(f, c.n() - 1));
        want.sort_by(f64::total_cmp);
        for (got, w) in ev.iter().zip(&want) {
            prop_assert!((got - w).abs() <= 1e-10 * w.abs().max(1.0), "{:?} vs {:?}", ev, want);
        }
    }

    #[test]
    fn eigen_c_invariants((c, beta) in lower_point()) {
        prop_assume!(beta.abs() > 1e-6);
        let n = c.n();
        let (cm, dm) = matrix_cd(&c, beta).unwrap();
        let g = eval_g(&c, beta).unwrap();
        let dec = eigen_c(&c, beta).unwrap();
        let sc = cm.norm().max(1.0);
        prop_assert!((&cm * &dec.b1 - dec.b1.scale(3.0)).norm() <= 1e-12 * sc * dec.b1.norm());
        prop_assert!((&dm * &dec.b1 - dec.b1.scale(g)).norm() <= 1e-12 * sc * dec.b1.norm());
        for b in &dec.perp {
            prop_assert!((&cm * b - b.scale(dec.f_value)).norm() <= 1e-12 * sc * b.norm());
            prop_assert!((&dm * b - b).norm() <= 1e-12 * dm.norm().max(1.0) * b.norm());
        }
        let t = &dec.t;
        prop_assert!((t.transpose() * t - DMatrix::<f64>::identity(n, n)).norm() <= 1e-12);
        prop_assert!((t.determinant() - 1.0).abs() <= 1e-12);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(dec.eigenvalues()));
        prop_assert!((t.transpose() * &cm * t - diag).norm() <= 1e-11 * sc);
        let first = t.column(0);
        prop_assert!((first - dec.b1.normalize()).norm() <= 1e-14);
        // amplitude form of C agrees with I + (2/g) D
        let alt = coupling_matrix(&c, beta).unwrap();
        prop_assert!((alt - &cm).norm() <= 1e-11 * sc);
    }

    #[test]
    fn g_increasing_f_decreasing((c, beta) in lower_point(), dt in 0.001f64..0.5) {
        let beta2 = beta + dt * (c.mu_min() - beta);
        prop_assume!(beta2 < c.mu_min() && beta2 > beta);
        prop_assert!(eval_g(&c, beta).unwrap() < eval_g(&c, beta2).unwrap());
        prop_assert!(eval_f(&c, beta).unwrap() > eval_f(&c, beta2).unwrap());
    }

    #[test]
    fn beta_bar_is_a_negative_root(c in coupling_strategy()) {
        let bb = beta_bar(&c);
        prop_assert!(bb < 0.0);
        prop_assert!(eval_g(&c, bb).unwrap().abs() <= G_ROOT_TOL);
    }
}

#[test]
fn f_inverse_round_trip() {
    for c in [
        CouplingSpec::new(vec![1.0, 2.0]).unwrap(),
        CouplingSpec::new(vec![1.0, 2.0, 3.0]).unwrap(),
        CouplingSpec::new(vec![0.7, 4.0, 1.3, 2.2]).unwrap(),
    ] {
        let mut lambda = 1.01;
        while lambda <= 50.0 {
            let beta = f_inverse(&c, lambda).unwrap();
            assert!(
                (eval_f(&c, beta).unwrap() - lambda).abs() <= 1e-11,
                "{lambda}"
            );
            lambda += 0.37;
        }
    }
}

#[test]
fn locked_solution_residuals() {
    let s = common::interval(800, 4);
    let c = CouplingSpec::new(vec![1.0, 2.0, 3.0]).unwrap();
    for beta in [-0.3, 0.0, 0.4, 0.9, 3.5, 10.0] {
        let state = locked_solution(&s.ground, &c, beta).unwrap();
        let r = residual_norm(&state, &c, &s.op).unwrap();
        assert!(r <= 1e-10, "beta {beta}: {r}");
    }
    let zero = locked_solution(&s.ground, &c, 0.0).unwrap();
    for (j, m) in [1.0f64, 2.0, 3.0].iter().enumerate() {
        let ratio = zero.u[j][400] / s.ground.w[400];
        assert_abs_diff_eq!(ratio, 1.0 / m.sqrt(), epsilon = 1e-14);
    }
    assert!(matches!(
        locked_solution(&s.ground, &c, 1.5),
        Err(Error::OutOfDomain { .. })
    ));
}

#[test]
fn equal_mu_family_solves_the_system() {
    let s = common::interval(400, 3);
    let c = CouplingSpec::new(vec![1.0, 1.0]).unwrap();
    let state = locked_family_equal_mu(&s.ground, &c, &[3.0, 4.0]).unwrap();
    assert_eq!(state.beta, 1.0);
    let r = system_residual(&state, &c, &s.op).unwrap();
    assert!(lockbif::system::field_norm(&s.op.grid, &r) <= 1e-10);
    let c3 = CouplingSpec::new(vec![2.0; 3]).unwrap();
    let ones = locked_family_equal_mu(&s.ground, &c3, &[1.0; 3]).unwrap();
    let alpha = ones.u[0][200] / s.ground.w[200];
    assert_abs_diff_eq!(alpha * alpha * 2.0 * 3.0, 1.0, epsilon = 1e-14);
    assert!(residual_norm(&ones, &c3, &s.op).unwrap() <= 1e-10);
}

#[test]
fn bifurcation_points_from_spectrum() {
    let s = common::interval(400, 6);
    let eq = CouplingSpec::new(vec![1.0, 1.0]).unwrap();
    let pts = bifurcation_points(&eq, &s.spectrum).unwrap();
    assert_eq!(pts.len(), 5);
    assert!(pts.windows(2).all(|p| p[0].beta > p[1].beta));
    for p in &pts {
        assert_abs_diff_eq!(p.beta, (3.0 - p.lambda) / (1.0 + p.lambda), epsilon = 1e-11);
        assert_eq!(p.kernel_dim, p.multiplicity);
        assert_eq!(p.beta.signum(), (3.0 - p.lambda).signum());
        assert!(p.k >= 2);
    }
    let c = CouplingSpec::new(vec![1.0, 2.0, 3.0]).unwrap();
    let bb = beta_bar(&c);
    for p in bifurcation_points(&c, &s.spectrum).unwrap() {
        assert!(p.beta > bb && p.beta < c.mu_min());
        assert_eq!(p.kernel_dim, 2 * p.multiplicity);
    }
}
