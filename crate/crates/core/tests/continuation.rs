mod common;

use lockbif::continuation::*;
use lockbif::locked::{beta_bar, gammas, locked_solution, CouplingSpec};
use lockbif::partition::{detect_partition, locked_ratio, pair_partitions, Partition, DETECT_TOL};
use lockbif::system::{field_inner, field_norm, hessian_apply};
use lockbif::Error;

fn mu12() -> CouplingSpec {
    CouplingSpec::new(vec![1.0, 2.0]).unwrap()
}

fn mu123() -> CouplingSpec {
    CouplingSpec::new(vec![1.0, 2.0, 3.0]).unwrap()
}

fn sub(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect()
}

fn angle(grid: &lockbif::grid::RadialGrid, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let c = field_inner(grid, a, b) / (field_norm(grid, a) * field_norm(grid, b));
    c.abs().min(1.0).acos()
}

fn run(
    s: &common::Setup,
    c: &CouplingSpec,
    k: usize,
    part: &Partition,
    eps: f64,
    opts: &ContinuationOpts,
) -> (Branch, Predictor) {
    let plan = plan_bifurcations(c, &s.spectrum).unwrap();
    let point = plan.iter().find(|p| p.point.k == k).unwrap().point;
    let pred = branch_switch_predictor(
        part,
        c,
        &s.ground,
        &s.op.grid,
        &point,
        s.spectrum.basis(k),
        eps,
        1,
    )
    .unwrap();
    (
        continue_branch(&pred, part, c, &s.op, &s.ground, opts).unwrap(),
        pred,
    )
}

#[test]
fn locked_samples() {
    let s = common::interval(800, 6);
    let c = mu123();
    let bb = beta_bar(&c);
    let b = sample_locked_branch(
        &s.ground,
        &c,
        &s.op,
        Some(&s.spectrum),
        bb + 0.01,
        0.99,
        120,
    )
    .unwrap();
    assert_eq!(b.points.len(), 120);
    let plan = plan_bifurcations(&c, &s.spectrum).unwrap();
    for p in &b.points {
        assert!(
            p.residual <= 1e-10,
            "beta {} residual {:e}",
            p.beta,
            p.residual
        );
        assert_eq!(p.dist_locked, 0.0);
    }
    for pair in b.points.windows(2) {
        assert!(pair[1].s > pair[0].s);
        let (Some(m0), Some(m1)) = (pair[0].morse_index, pair[1].morse_index) else {
            continue;
        };
        let crossed: usize = plan
            .iter()
            .filter(|q| q.point.beta > pair[0].beta && q.point.beta < pair[1].beta)
            .map(|q| q.point.kernel_dim)
            .sum();
        assert_eq!(
            m0 - m1,
            crossed,
            "between {} and {}",
            pair[0].beta,
            pair[1].beta
        );
    }
    // the weaker components die out towards μ_min
    let smallest = |beta: f64| {
        let st = locked_solution(&s.ground, &c, beta).unwrap();
        st.u.iter()
            .map(|u| u.iter().fold(0.0_f64, |m, v| m.max(*v)))
            .fold(f64::INFINITY, f64::min)
    };
    let seq: Vec<f64> = [1e-1, 1e-2, 1e-4, 1e-6]
        .iter()
        .map(|d| smallest(1.0 - d))
        .collect();
    assert!(
        seq.windows(2).all(|w| w[1] < w[0]) && seq[3] < 1e-2,
        "{seq:?}"
    );
    assert!(matches!(
        sample_locked_branch(&s.ground, &c, &s.op, None, 0.5, 3.5, 4),
        Err(Error::OutOfDomain { .. })
    ));
    // upper interval works too
    let up = sample_locked_branch(&s.ground, &c, &s.op, Some(&s.spectrum), 3.1, 8.0, 10).unwrap();
    assert!(up
        .points
        .iter()
        .all(|p| p.residual <= 1e-10 && p.morse_index.is_some()));
}

#[test]
fn planned_partitions() {
    let s = common::interval(400, 4);
    for (mu, count) in [
        (vec![1.0, 2.0], 1),
        (vec![1.0, 2.0, 3.0], 3),
        (vec![1.0, 2.0, 3.0, 4.0], 7),
    ] {
        let c = CouplingSpec::new(mu).unwrap();
        let plan = plan_bifurcations(&c, &s.spectrum).unwrap();
        assert_eq!(plan.len(), 3);
        for p in &plan {
            assert!(p.point.k >= 2);
            assert_eq!(p.partitions.len(), count);
            assert_eq!(p.point.kernel_dim, (c.n() - 1) * p.point.multiplicity);
        }
    }
    let plan = plan_bifurcations(&mu123(), &s.spectrum).unwrap();
    let names: Vec<String> = plan[0].partitions.iter().map(ToString::to_string).collect();
    assert_eq!(names, ["1|2,3", "1,2|3", "1,3|2"]);
}

#[test]
fn predictor_properties() {
    let s = common::interval(800, 4);
    let c = mu123();
    let plan = plan_bifurcations(&c, &s.spectrum).unwrap();
    let point = plan.iter().find(|p| p.point.k == 2).unwrap().point;
    let gamma = gammas(&c, point.beta).unwrap();
    let locked = locked_solution(&s.ground, &c, point.beta).unwrap();
    for part in pair_partitions(3) {
        let pred = branch_switch_predictor(
            &part,
            &c,
            &s.ground,
            &s.op.grid,
            &point,
            s.spectrum.basis(2),
            1e-2,
            1,
        )
        .unwrap();
        assert!(!pred.ambiguous);
        assert_eq!(pred.beta, point.beta);
        // X^P membership
        for blk in part.blocks() {
            for &j in &blk[1..] {
                let g = locked_ratio(&c, point.beta, blk[0], j).unwrap();
                let d: Vec<f64> = pred.u[j]
                    .iter()
                    .zip(&pred.u[blk[0]])
                    .map(|(a, b)| a - g * b)
                    .collect();
                assert!(s.op.grid.norm(&d) <= 1e-12 * s.op.grid.norm(&pred.u[blk[0]]));
            }
        }
        let phi = pred.kick.clone().unwrap();
        assert!((field_norm(&s.op.grid, &phi) - 1.0).abs() <= 1e-12);
        let pointwise = (0..800)
            .map(|i| (0..3).map(|j| gamma[j] * phi[j][i]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        assert!(pointwise <= 1e-12, "{pointwise:e}");
        let h = hessian_apply(&locked, &c, &s.op, &phi).unwrap();
        assert!(
            field_norm(&s.op.grid, &h) <= 1e-7,
            "{:e}",
            field_norm(&s.op.grid, &h)
        );
        // the sign flips the kick
        let neg = branch_switch_predictor(
            &part,
            &c,
            &s.ground,
            &s.op.grid,
            &point,
            s.spectrum.basis(2),
            1e-2,
            -1,
        )
        .unwrap();
        let back: Vec<Vec<f64>> = neg
            .kick
            .unwrap()
            .iter()
            .map(|f| f.iter().map(|x| -x).collect())
            .collect();
        assert_eq!(back, phi);
    }
    let disc = Partition::discrete(3);
    let basis = s.spectrum.basis(2);
    assert!(matches!(
        branch_switch_predictor(&disc, &c, &s.ground, &s.op.grid, &point, basis, 1e-2, 1),
        Err(Error::NotPairPartition(3))
    ));
    let part = Partition::parse("1|2,3", 3).unwrap();
    assert!(matches!(
        branch_switch_predictor(&part, &c, &s.ground, &s.op.grid, &point, &[], 1e-2, 1),
        Err(Error::EmptyKernel)
    ));
    assert!(matches!(
        branch_switch_predictor(&part, &c, &s.ground, &s.op.grid, &point, basis, 0.0, 1),
        Err(Error::InvalidOption(_))
    ));
}

#[test]
fn options_validation() {
    assert!(ContinuationOpts::default().validate().is_ok());
    let bad = [
        ContinuationOpts {
            ds0: 1.0,
            ..Default::default()
        },
        ContinuationOpts {
            ds_min: 0.0,
            ..Default::default()
        },
        ContinuationOpts {
            newton_tol: 0.0,
            ..Default::default()
        },
        ContinuationOpts {
            eps: -1.0,
            ..Default::default()
        },
        ContinuationOpts {
            max_newton: 0,
            ..Default::default()
        },
        ContinuationOpts {
            beta_min: Some(0.5),
            beta_max: Some(0.1),
            ..Default::default()
        },
    ];
    for o in bad {
        assert!(
            matches!(o.validate(), Err(Error::InvalidOption(_))),
            "{o:?}"
        );
    }
    let (lo, hi) = ContinuationOpts::default().beta_bounds(&mu12());
    let margin = 1e-3 * (1.0 + 2f64.sqrt());
    assert!((lo - (-(2f64.sqrt()) + margin)).abs() < 1e-12);
    assert!((hi - (1.0 - margin)).abs() < 1e-15);
}

#[test]
fn two_component_branch_leaves_locked_branch() {
    let s = common::interval(800, 4);
    let c = mu12();
    let opts = ContinuationOpts::default();
    let part = Partition::parse("1|2", 2).unwrap();
    let (b, _) = run(&s, &c, 2, &part, opts.eps, &opts);
    assert!(
        b.points.len() >= 11,
        "{} points, {}",
        b.points.len(),
        b.termination
    );
    let d: Vec<f64> = b.points.iter().take(11).map(|p| p.dist_locked).collect();
    assert!(d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
    for pair in b.points.windows(2) {
        let gap = pair[1].s - pair[0].s;
        assert!(gap >= 0.0 && gap <= 2.0 * opts.ds_max);
    }
    for p in &b.points {
        assert!(p.residual <= 10.0 * opts.newton_tol, "{:e}", p.residual);
        assert!(p.min_u > 0.0 || b.termination == Termination::PositivityLost);
    }
    assert_eq!(b.origin.unwrap().k, 2);
    assert_eq!(
        detect_partition(&b.points[5].u, &s.op.grid, DETECT_TOL).unwrap(),
        Partition::discrete(2)
    );
}

#[test]
fn three_partitions_give_separated_branches() {
    let s = common::interval(800, 4);
    let c = mu123();
    let opts = ContinuationOpts {
        morse_every: 5,
        ..Default::default()
    };
    let branches: Vec<Branch> = pair_partitions(3)
        .map(|p| run(&s, &c, 2, &p, opts.eps, &opts).0)
        .collect();
    for b in &branches {
        assert!(b.points.len() > 3);
        assert!(b
            .points
            .iter()
            .all(|p| p.residual <= 10.0 * opts.newton_tol));
        assert!(b.points.iter().step_by(5).all(|p| p.morse_index.is_some()));
        assert_eq!(
            detect_partition(&b.points[3].u, &s.op.grid, DETECT_TOL).unwrap(),
            b.partition
        );
    }
    for i in 0..3 {
        for j in i + 1..3 {
            let sep = branch_separation(&branches[i], &branches[j], &s.op.grid).unwrap();
            assert!(
                sep > 1e-3,
                "{} vs {}: {sep:e}",
                branches[i].partition,
                branches[j].partition
            );
        }
    }
}

#[test]
fn origin_extrapolation_improves_with_smaller_kick() {
    let s = common::interval(800, 4);
    for c in [mu12(), mu123()] {
        let beta_k = plan_bifurcations(&c, &s.spectrum).unwrap()[0].point.beta;
        let part = pair_partitions(c.n()).next().unwrap();
        let err = |eps: f64| {
            let opts = ContinuationOpts {
                eps,
                ds0: eps,
                max_steps: 4,
                ..Default::default()
            };
            let (b, _) = run(&s, &c, 2, &part, eps, &opts);
            (extrapolate_origin(&b).unwrap() - beta_k).abs()
        };
        let (coarse, fine) = (err(1e-2), err(1e-3));
        assert!(coarse < 5e-3 && fine < coarse, "{coarse:e} -> {fine:e}");
    }
}

#[test]
fn first_secant_follows_kernel() {
    let s = common::interval(800, 4);
    let c = mu123();
    let eps = 1e-3;
    let opts = ContinuationOpts {
        eps,
        ds0: eps,
        max_steps: 2,
        ..Default::default()
    };
    for part in pair_partitions(3) {
        let (b, pred) = run(&s, &c, 2, &part, eps, &opts);
        let origin = locked_solution(&s.ground, &c, pred.beta).unwrap();
        let secant = sub(&b.points[0].u, &origin.u);
        let a = angle(&s.op.grid, &secant, pred.kick.as_ref().unwrap());
        assert!(a < 0.2, "{part}: {a}");
    }
}

#[test]
fn discrete_partition_tracks_locked_branch() {
    let s = common::interval(800, 4);
    let c = mu12();
    let start = locked_solution(&s.ground, &c, 0.3).unwrap();
    let opts = ContinuationOpts {
        max_steps: 15,
        beta_max: Some(0.95),
        ..Default::default()
    };
    for part in [Partition::discrete(2), Partition::single(2)] {
        let b = continue_branch(
            &Predictor::at_solution(&start, 1),
            &part,
            &c,
            &s.op,
            &s.ground,
            &opts,
        )
        .unwrap();
        assert!(
            b.points.len() > 5,
            "{part}: {} points, {}",
            b.points.len(),
            b.termination
        );
        assert!(b.points.windows(2).all(|w| w[1].beta > w[0].beta));
        for p in &b.points {
            let exact = locked_solution(&s.ground, &c, p.beta).unwrap();
            let d = field_norm(&s.op.grid, &sub(&p.u, &exact.u));
            assert!(d <= 1e-8, "{part} beta {}: {d:e}", p.beta);
        }
    }
}
