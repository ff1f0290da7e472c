//! Invariant suite behind `lockbif verify`.

use lockbif::continuation::{branch_separation, extrapolate_origin, ContinuationOpts};
use lockbif::locked::{beta_bar, coupling_matrix, eigen_c, locked_solution, BifurcationPoint};
use lockbif::partition::{
    pair_partitions, project, reduced_hessian_spectrum, residual_transfer_check, Partition,
};
use lockbif::system::{hessian_spectrum, morse_index_formula, residual_norm};
use serde::Serialize;

use crate::commands::{run_branch, Problem};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    /// How `value` must compare with `threshold`.
    pub relation: &'static str,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn below(name: &'static str, value: f64, threshold: f64, detail: String) -> Self {
        Self {
            name,
            pass: value <= threshold,
            value,
            relation: "<=",
            threshold,
            detail,
        }
    }

    fn exact(name: &'static str, mismatches: usize, detail: String) -> Self {
        Self {
            name,
            pass: mismatches == 0,
            value: mismatches as f64,
            relation: "==",
            threshold: 0.0,
            detail,
        }
    }

    fn failed(name: &'static str, err: impl std::fmt::Display) -> Self {
        Self {
            name,
            pass: false,
            value: f64::NAN,
            relation: "<=",
            threshold: f64::NAN,
            detail: format!("error: {err}"),
        }
    }
}

type Outcome = Result<Check, lockbif::Error>;
type CheckFn = fn(&Problem) -> Outcome;

pub fn run_checks(p: &Problem) -> Vec<Check> {
    let checks: [(&'static str, CheckFn); 12] = [
        ("ground-state-residual", ground_residual),
        ("first-eigenvalue", first_eigenvalue),
        ("first-eigenfunction", first_eigenfunction),
        ("nondegenerate", nondegenerate),
        ("locked-exactness", locked_exactness),
        ("coupling-spectrum", coupling_spectrum),
        ("hidden-symmetry", hidden_symmetry),
        ("kernel-dimension", kernel_dimension),
        ("morse-jumps", morse_jumps),
        ("reduced-morse-jumps", reduced_morse_jumps),
        ("branch-multiplicity", branch_multiplicity),
        ("origin-extrapolation", origin_extrapolation),
    ];
    checks
        .iter()
        .map(|(name, check)| check(p).unwrap_or_else(|e| Check::failed(name, e)))
        .collect()
}

fn ground_residual(p: &Problem) -> Outcome {
    let tol = 10.0 * p.config.solver.tol;
    Ok(Check::below(
        "ground-state-residual",
        p.ground.residual_norm,
        tol,
        format!("{} iterations", p.ground.iterations),
    ))
}

fn first_eigenvalue(p: &Problem) -> Outcome {
    let l1 = p.spectrum.lambda(1);
    Ok(Check::below(
        "first-eigenvalue",
        (l1 - 1.0).abs(),
        1e-9,
        format!("lambda_1 = {l1}"),
    ))
}

fn first_eigenfunction(p: &Problem) -> Outcome {
    let g = &p.op.grid;
    let psi = &p.spectrum.basis(1)[0];
    let w = &p.ground.w;
    let (np, nw) = (g.norm(psi), g.norm(w));
    let sign = if g.inner(psi, w)? < 0.0 { -1.0 } else { 1.0 };
    // chord between the unit vectors; acos would lose half the digits
    let chord: Vec<f64> = psi
        .iter()
        .zip(w)
        .map(|(a, b)| a / np - sign * b / nw)
        .collect();
    let angle = 2.0 * (0.5 * g.norm(&chord)).min(1.0).asin();
    Ok(Check::below(
        "first-eigenfunction",
        angle,
        1e-6,
        "angle to w".into(),
    ))
}

fn nondegenerate(p: &Problem) -> Outcome {
    let gap = p
        .spectrum
        .eigenvalues
        .iter()
        .map(|l| (l - 3.0).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(Check {
        name: "nondegenerate",
        pass: p.spectrum.nondegenerate,
        value: gap,
        relation: ">",
        threshold: lockbif::scalar::DEGENERACY_TOL,
        detail: "min |lambda_k - 3| must exceed the threshold".into(),
    })
}

fn samples(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn locked_exactness(p: &Problem) -> Outcome {
    let c = &p.coupling;
    let bb = beta_bar(c);
    let lower = samples(bb + 0.01, c.mu_min() - 0.01, 50);
    let upper = samples(c.mu_max() + 0.1, c.mu_max() + 5.0, 10);
    let mut worst = 0.0_f64;
    for beta in lower.chain(upper) {
        let state = locked_solution(&p.ground, c, beta)?;
        worst = worst.max(residual_norm(&state, c, &p.op)?);
    }
    Ok(Check::below(
        "locked-exactness",
        worst,
        1e-10,
        "60 samples on both locked intervals".into(),
    ))
}

fn coupling_spectrum(p: &Problem) -> Outcome {
    let c = &p.coupling;
    let n = c.n();
    let bb = beta_bar(c);
    let mut worst = 0.0_f64;
    for beta in samples(bb + 0.01, c.mu_min() - 0.01, 25) {
        let m = coupling_matrix(c, beta)?;
        let dec = eigen_c(c, beta)?;
        let pairs =
            std::iter::once((&dec.b1, 3.0)).chain(dec.perp.iter().map(|b| (b, dec.f_value)));
        for (b, lambda) in pairs {
            let nb = b.norm();
            let res = (0..n)
                .map(|i| ((0..n).map(|j| m[(i, j)] * b[j]).sum::<f64>() - lambda * b[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(res / nb);
        }
    }
    let m0 = coupling_matrix(c, 0.0)?;
    let off: usize = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| m0[(i, j)] != if i == j { 3.0 } else { 0.0 })
        .count();
    let mut check = Check::below(
        "coupling-spectrum",
        worst,
        1e-10,
        format!("C(0) = 3I: {}", off == 0),
    );
    check.pass &= off == 0;
    Ok(check)
}

fn probe(m: usize, seed: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            0.2 + ((i + 1) as f64 * (0.37 + 0.11 * seed as f64) + seed as f64)
                .sin()
                .abs()
        })
        .collect()
}

fn hidden_symmetry(p: &Problem) -> Outcome {
    let c = &p.coupling;
    let n = c.n();
    let m = p.op.len();
    let bb = beta_bar(c);
    let mut worst = 0.0_f64;
    let mut count = 0;
    for beta in samples(bb + 0.01, c.mu_min() - 0.01, 5) {
        for i in 0..n {
            for j in (0..n).filter(|j| *j != i) {
                for seed in 0..4 {
                    let mut u: Vec<Vec<f64>> = (0..n).map(|k| probe(m, seed * n + k)).collect();
                    let g = lockbif::partition::locked_ratio(c, beta, i, j)?;
                    u[j] = u[i].iter().map(|v| g * v).collect();
                    worst = worst.max(residual_transfer_check(c, beta, i, j, &u, &p.op)?);
                    count += 1;
                }
            }
        }
    }
    Ok(Check::below(
        "hidden-symmetry",
        worst,
        1e-12,
        format!("{count} non-solution states"),
    ))
}

/// Bifurcation points `k = 2..=5` that have a cluster above them.
fn checked_points(p: &Problem) -> Result<Vec<BifurcationPoint>, lockbif::Error> {
    let len = p.spectrum.len();
    Ok(p.plan()?
        .into_iter()
        .map(|q| q.point)
        .filter(|b| b.k <= 5 && b.k < len)
        .collect())
}

fn kernel_dimension(p: &Problem) -> Outcome {
    let c = &p.coupling;
    let tol = p.config.solver.zero_tol;
    let points = checked_points(p)?;
    let mut bad = 0;
    let mut notes = Vec::new();
    let kernel_at = |beta: f64| -> Result<usize, lockbif::Error> {
        let state = locked_solution(&p.ground, c, beta)?;
        Ok(hessian_spectrum(&state, c, &p.op, 4, tol)?.kernel_dim)
    };
    for (idx, b) in points.iter().enumerate() {
        let dim = kernel_at(b.beta)?;
        if dim != (c.n() - 1) * b.multiplicity {
            bad += 1;
            notes.push(format!("k={} dim {dim}", b.k));
        }
        if let Some(next) = points.get(idx + 1) {
            let mid = kernel_at(0.5 * (b.beta + next.beta))?;
            if mid != 0 {
                bad += 1;
                notes.push(format!("between k={} and k={}: dim {mid}", b.k, next.k));
            }
        }
    }
    Ok(Check::exact(
        "kernel-dimension",
        bad,
        if notes.is_empty() {
            format!("{} points", points.len())
        } else {
            format!("{} points; {}", points.len(), notes.join(", "))
        },
    ))
}

fn morse_jumps(p: &Problem) -> Outcome {
    let c = &p.coupling;
    let eps = 1e-3 * (c.mu_min() - beta_bar(c));
    let tol = p.config.solver.zero_tol;
    let mut bad = 0;
    let points = checked_points(p)?;
    for b in &points {
        let mut direct = [0usize; 2];
        for (slot, beta) in [b.beta - eps, b.beta + eps].into_iter().enumerate() {
            let state = locked_solution(&p.ground, c, beta)?;
            direct[slot] = hessian_spectrum(&state, c, &p.op, 4, tol)?.morse_index;
            if morse_index_formula(c, beta, &p.spectrum)? != direct[slot] {
                bad += 1;
            }
        }
        if direct[0].checked_sub(direct[1]) != Some((c.n() - 1) * b.multiplicity) {
            bad += 1;
        }
    }
    Ok(Check::exact(
        "morse-jumps",
        bad,
        format!("{} points, eps = {eps:.3e}", points.len()),
    ))
}

fn reduced_morse_jumps(p: &Problem) -> Outcome {
    let c = &p.coupling;
    let eps = 1e-3 * (c.mu_min() - beta_bar(c));
    let tol = p.config.solver.zero_tol;
    let points = checked_points(p)?;
    let parts: Vec<Partition> = pair_partitions(c.n()).collect();
    let mut bad = 0;
    for b in &points {
        for part in &parts {
            let mut m = [0usize; 2];
            for (slot, beta) in [b.beta - eps, b.beta + eps].into_iter().enumerate() {
                let state = locked_solution(&p.ground, c, beta)?;
                let v = project(part, &state.u)?;
                m[slot] = reduced_hessian_spectrum(part, c, beta, &v, &p.op, 4, tol)?.morse_index;
            }
            if m[0].checked_sub(m[1]) != Some((part.len() - 1) * b.multiplicity) {
                bad += 1;
            }
        }
    }
    Ok(Check::exact(
        "reduced-morse-jumps",
        bad,
        format!("{} points x {} partitions", points.len(), parts.len()),
    ))
}

fn branch_multiplicity(p: &Problem) -> Outcome {
    let plan = p.plan()?;
    let Some(planned) = plan.iter().find(|q| q.point.k == 2) else {
        return Ok(Check::exact(
            "branch-multiplicity",
            1,
            "no bifurcation point with k = 2".into(),
        ));
    };
    let opts = &p.config.continuation;
    let mut branches = Vec::new();
    for part in &planned.partitions {
        match run_branch(p, planned, part, 1, opts) {
            Ok(b) => branches.push(b),
            Err(e) => return Ok(Check::failed("branch-multiplicity", e)),
        }
    }
    let expected = (1usize << (p.coupling.n() - 1)) - 1;
    let mut bad = usize::from(branches.len() != expected);
    let worst = branches
        .iter()
        .flat_map(|b| b.points.iter().map(|q| q.residual))
        .fold(0.0, f64::max);
    if worst > 10.0 * opts.newton_tol {
        bad += 1;
    }
    let mut min_sep = f64::INFINITY;
    for (i, a) in branches.iter().enumerate() {
        for b in &branches[i + 1..] {
            let s = branch_separation(a, b, &p.op.grid).unwrap_or(0.0);
            min_sep = min_sep.min(s);
            if !(s > 1e-3) {
                bad += 1;
            }
        }
    }
    Ok(Check::exact(
        "branch-multiplicity",
        bad,
        format!(
            "{} branches, max residual {worst:.2e}, min separation {min_sep:.2e}",
            branches.len()
        ),
    ))
}

fn origin_extrapolation(p: &Problem) -> Outcome {
    let plan = p.plan()?;
    let Some(planned) = plan.iter().find(|q| q.point.k == 2) else {
        return Ok(Check::exact(
            "origin-extrapolation",
            1,
            "no bifurcation point with k = 2".into(),
        ));
    };
    let part = &planned.partitions[0];
    let mut errs = Vec::new();
    for eps in [1e-2, 1e-3] {
        let opts = ContinuationOpts {
            eps,
            ds0: eps,
            max_steps: 4,
            ..p.config.continuation.clone()
        };
        let b = match run_branch(p, planned, part, 1, &opts) {
            Ok(b) => b,
            Err(e) => return Ok(Check::failed("origin-extrapolation", e)),
        };
        errs.push(extrapolate_origin(&b).map_or(f64::INFINITY, |x| (x - planned.point.beta).abs()));
    }
    let mut check = Check::below(
        "origin-extrapolation",
        errs[0],
        5e-3,
        format!("error {:.2e} -> {:.2e}", errs[0], errs[1]),
    );
    check.pass &= errs[1] < errs[0];
    Ok(check)
}
