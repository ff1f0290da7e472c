//! Path following in `(β, u)`: the analytic locked branch, planning of
//! bifurcation points, kick predictors into partially locked families, and
//! pseudo-arclength continuation of the reduced problem.

use serde::{Deserialize, Serialize};

use crate::compensated::Dd;
use crate::error::{Error, Result};
use crate::grid::{RadialGrid, SchrodingerOperator};
use crate::linalg::{BandLu, BandMatrix};
use crate::locked::{
    alpha_derivative, bifurcation_points, gammas, gammas_alphas, locked_solution, BifurcationPoint,
    CouplingSpec, LockedBranchAlgebra,
};
use crate::partition::{
    embed_state, embedding_coefficients, embedding_derivatives, pair_partitions, project,
    reduced_hessian_spectrum, Partition,
};
use crate::scalar::{GroundState, WeightedSpectrum};
use crate::system::{
    default_zero_tol, field_norm, hessian_apply, local_coupling, morse_index_formula,
    residual_norm, system_residual_dd, SystemState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOpts {
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    /// Bound on `‖R‖_ω` of the reduced residual.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_steps: usize,
    /// Continuation stops outside `[beta_min, beta_max]`; `None` picks the
    /// locked interval shrunk by `1e-3 (μ_min - β̄)` at both ends.
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
    /// Kick size of the branch-switching predictor.
    pub eps: f64,
    /// Reduced Morse index every this many points (0: never).
    pub morse_every: usize,
    /// Distance to the locked branch below which a point counts as back on it.
    pub locked_tol: f64,
}

impl Default for ContinuationOpts {
    fn default() -> Self {
        Self {
            ds0: 0.02,
            ds_min: 1e-6,
            ds_max: 0.2,
            newton_tol: 1e-9,
            max_newton: 12,
            max_steps: 40,
            beta_min: None,
            beta_max: None,
            eps: 1e-2,
            morse_every: 0,
            locked_tol: 1e-7,
        }
    }
}

impl ContinuationOpts {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidOption(what.to_string()));
        if !(self.ds_min > 0.0 && self.ds_min <= self.ds0 && self.ds0 <= self.ds_max) {
            return bad("need 0 < ds_min <= ds0 <= ds_max");
        }
        if !(self.newton_tol > 0.0) || !(self.eps > 0.0) || !(self.locked_tol > 0.0) {
            return bad("tolerances and eps must be positive");
        }
        if self.max_newton == 0 {
            return bad("max_newton must be positive");
        }
        if let (Some(a), Some(b)) = (self.beta_min, self.beta_max) {
            if !(a < b) {
                return bad("beta_min must be below beta_max");
            }
        }
        Ok(())
    }

    /// Effective `β` window.
    pub fn beta_bounds(&self, coupling: &CouplingSpec) -> (f64, f64) {
        let bb = crate::locked::beta_bar(coupling);
        let margin = 1e-3 * (coupling.mu_min() - bb);
        (
            self.beta_min.unwrap_or(bb + margin),
            self.beta_max.unwrap_or(coupling.mu_min() - margin),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub beta: f64,
    pub u: Vec<Vec<f64>>,
    pub s: f64,
    /// Full (embedded) residual norm.
    pub residual: f64,
    pub morse_index: Option<usize>,
    pub min_u: f64,
    pub dist_locked: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxSteps,
    BetaBound,
    PositivityLost,
    NewtonFailure,
    ReturnedToLocked,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::MaxSteps => "max-steps",
            Termination::BetaBound => "beta-bound",
            Termination::PositivityLost => "positivity-lost",
            Termination::NewtonFailure => "newton-failure",
            Termination::ReturnedToLocked => "returned-to-locked",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub partition: Partition,
    pub origin: Option<BifurcationPoint>,
    pub direction: i8,
    pub termination: Termination,
    /// The kernel inside the partition's subspace has more than one
    /// direction; only the first was followed.
    pub ambiguous: bool,
}

/// Best-multiple-of-`w` misfit `sqrt(Σ_j ‖u_j - a_j w‖²_ω)`.
pub fn distance_to_locked(u: &[Vec<f64>], w: &[f64], grid: &RadialGrid) -> f64 {
    let ww = grid.inner_unchecked(w, w);
    u.iter()
        .map(|uj| {
            let a = grid.inner_unchecked(uj, w) / ww;
            let d: Vec<f64> = uj.iter().zip(w).map(|(x, y)| x - a * y).collect();
            grid.norm(&d).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Samples of `α(β) w` on `[beta_from, beta_to]` (inside one admissible
/// interval) with residuals and the closed-form Morse index.
pub fn sample_locked_branch(
    ground: &GroundState,
    coupling: &CouplingSpec,
    op: &SchrodingerOperator,
    spectrum: Option<&WeightedSpectrum>,
    beta_from: f64,
    beta_to: f64,
    samples: usize,
) -> Result<Branch> {
    let alg = LockedBranchAlgebra::new(coupling.clone());
    let same_side = (alg.in_lower(beta_from) && alg.in_lower(beta_to))
        || (alg.in_upper(beta_from) && alg.in_upper(beta_to));
    if !same_side {
        let bad = if alg.admissible(beta_from) {
            beta_to
        } else {
            beta_from
        };
        return Err(Error::OutOfDomain {
            beta: bad,
            range: "one locked interval".into(),
        });
    }
    let mut points = Vec::with_capacity(samples);
    let mut s = 0.0;
    let mut prev: Option<SystemState> = None;
    for idx in 0..samples {
        let t = if samples > 1 {
            idx as f64 / (samples - 1) as f64
        } else {
            0.0
        };
        let beta = beta_from + t * (beta_to - beta_from);
        let state = locked_solution(ground, coupling, beta)?;
        if let Some(p) = &prev {
            let du: Vec<Vec<f64>> = state
                .u
                .iter()
                .zip(&p.u)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect();
            s += (field_norm(&op.grid, &du).powi(2) + (beta - p.beta).powi(2)).sqrt();
        }
        let morse_index = spectrum.and_then(|sp| morse_index_formula(coupling, beta, sp).ok());
        points.push(BranchPoint {
            beta,
            s,
            residual: residual_norm(&state, coupling, op)?,
            morse_index,
            min_u: state.min_value(),
            dist_locked: 0.0,
            u: state.u.clone(),
        });
        prev = Some(state);
    }
    Ok(Branch {
        points,
        partition: Partition::single(coupling.n()),
        origin: None,
        direction: if beta_to >= beta_from { 1 } else { -1 },
        termination: Termination::MaxSteps,
        ambiguous: false,
    })
}

/// A bifurcation point with the pair partitions to switch into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedBifurcation {
    pub point: BifurcationPoint,
    pub partitions: Vec<Partition>,
}

pub fn plan_bifurcations(
    coupling: &CouplingSpec,
    spectrum: &WeightedSpectrum,
) -> Result<Vec<PlannedBifurcation>> {
    Ok(bifurcation_points(coupling, spectrum)?
        .into_iter()
        .map(|point| PlannedBifurcation {
            point,
            partitions: pair_partitions(coupling.n()).collect(),
        })
        .collect())
}

/// Starting data for [`continue_branch`].
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub beta: f64,
    pub u: Vec<Vec<f64>>,
    /// Unit kick direction already multiplied by the direction sign; `None`
    /// when `u` is itself a solution to continue from.
    pub kick: Option<Vec<Vec<f64>>>,
    pub origin: Option<BifurcationPoint>,
    pub direction: i8,
    pub ambiguous: bool,
}

impl Predictor {
    /// Continue from the solution `state` without a kick.
    pub fn at_solution(state: &SystemState, direction: i8) -> Self {
        Self {
            beta: state.beta,
            u: state.u.clone(),
            kick: None,
            origin: None,
            direction,
            ambiguous: false,
        }
    }
}

/// Kernel direction inside `X^P` for a pair partition `{A, B}`:
/// `φ_j = s_b γ_j ψ` with `s = (S_B, -S_A)`, `S_b = Σ_{j∈b} γ_j²`.
pub fn pair_kernel_direction(
    partition: &Partition,
    gamma: &[f64],
    psi: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if partition.len() != 2 {
        return Err(Error::NotPairPartition(partition.len()));
    }
    let sums: Vec<f64> = partition
        .blocks()
        .iter()
        .map(|b| b.iter().map(|&j| gamma[j] * gamma[j]).sum())
        .collect();
    let s = [sums[1], -sums[0]];
    Ok((0..gamma.len())
        .map(|j| {
            let c = s[partition.block_of(j)] * gamma[j];
            psi.iter().map(|p| c * p).collect()
        })
        .collect())
}

/// `u(β_k) ± ε φ/‖φ‖` with `φ` the kernel direction inside `X^P`.
pub fn branch_switch_predictor(
    partition: &Partition,
    coupling: &CouplingSpec,
    ground: &GroundState,
    grid: &RadialGrid,
    point: &BifurcationPoint,
    v_k: &[Vec<f64>],
    eps: f64,
    direction: i8,
) -> Result<Predictor> {
    if partition.len() != 2 {
        return Err(Error::NotPairPartition(partition.len()));
    }
    let psi = v_k.first().ok_or(Error::EmptyKernel)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidOption(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let gamma = gammas(coupling, point.beta)?;
    let mut phi = pair_kernel_direction(partition, &gamma, psi)?;
    let norm = field_norm(grid, &phi);
    if !(norm > 0.0) {
        return Err(Error::EmptyKernel);
    }
    let sign = if direction < 0 { -1.0 } else { 1.0 };
    phi.iter_mut().flatten().for_each(|x| *x *= sign / norm);
    let locked = locked_solution(ground, coupling, point.beta)?;
    let u = locked
        .u
        .iter()
        .zip(&phi)
        .map(|(a, p)| a.iter().zip(p).map(|(x, y)| x + eps * y).collect())
        .collect();
    Ok(Predictor {
        beta: point.beta,
        u,
        kick: Some(phi),
        origin: Some(*point),
        direction: if direction < 0 { -1 } else { 1 },
        ambiguous: v_k.len() > 1,
    })
}

/// Reduced unknowns `(v, β)` with `v` interleaved by node.
#[derive(Debug, Clone)]
struct Point {
    v: Vec<f64>,
    beta: f64,
}

/// The reduced problem `R(v, β) = 0` for a fixed partition.
struct Reduced<'a> {
    partition: &'a Partition,
    coupling: &'a CouplingSpec,
    op: &'a SchrodingerOperator,
    m: usize,
    nodes: usize,
}

/// Residual, Jacobian in `v` and derivative in `β` at a point.
struct Linearization {
    r: Vec<f64>,
    jac: BandMatrix,
    r_beta: Vec<f64>,
}

impl<'a> Reduced<'a> {
    fn new(
        partition: &'a Partition,
        coupling: &'a CouplingSpec,
        op: &'a SchrodingerOperator,
    ) -> Self {
        Self {
            partition,
            coupling,
            op,
            m: partition.len(),
            nodes: op.len(),
        }
    }

    fn fields(&self, v: &[f64]) -> Vec<Vec<f64>> {
        (0..self.m)
            .map(|b| (0..self.nodes).map(|i| v[i * self.m + b]).collect())
            .collect()
    }

    fn flatten(&self, fields: &[Vec<f64>]) -> Vec<f64> {
        let mut v = vec![0.0; self.m * self.nodes];
        for (b, f) in fields.iter().enumerate() {
            for (i, x) in f.iter().enumerate() {
                v[i * self.m + b] = *x;
            }
        }
        v
    }

    fn block_weights(&self, beta: f64) -> Result<Vec<f64>> {
        let c = embedding_coefficients(self.partition, self.coupling, beta)?;
        Ok(self
            .partition
            .blocks()
            .iter()
            .map(|b| b.iter().map(|&j| c[j] * c[j]).sum())
            .collect())
    }

    /// `⟨x, y⟩ = Σ_b S_b ⟨x_b, y_b⟩_ω + x_β y_β`.
    fn dot(&self, weights: &[f64], x: &Point, y: &Point) -> f64 {
        let mut s = x.beta * y.beta;
        for i in 0..self.nodes {
            let w = self.op.grid.weights[i];
            for b in 0..self.m {
                s += w * weights[b] * x.v[i * self.m + b] * y.v[i * self.m + b];
            }
        }
        s
    }

    fn embedded(&self, p: &Point) -> Result<SystemState> {
        embed_state(self.partition, self.coupling, p.beta, &self.fields(&p.v))
    }

    fn residual_norm(&self, r: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.nodes {
            for b in 0..self.m {
                s += self.op.grid.weights[i] * r[i * self.m + b].powi(2);
            }
        }
        s.sqrt()
    }

    fn linearize(&self, p: &Point) -> Result<Linearization> {
        let (m, nodes, n) = (self.m, self.nodes, self.coupling.n());
        let op = self.op;
        let c = embedding_coefficients(self.partition, self.coupling, p.beta)?;
        let dc = embedding_derivatives(self.partition, self.coupling, p.beta)?;
        let state = self.embedded(p)?;
        let full = system_residual_dd(&state, self.coupling, op)?;
        let blocks = self.partition.blocks();
        let weights: Vec<f64> = blocks
            .iter()
            .map(|b| b.iter().map(|&j| c[j] * c[j]).sum())
            .collect();

        let mut r = vec![0.0; m * nodes];
        for (b, blk) in blocks.iter().enumerate() {
            for i in 0..nodes {
                r[i * m + b] = blk
                    .iter()
                    .fold(Dd::default(), |acc, &j| acc + full[j][i].scale(c[j]))
                    .to_f64();
            }
        }

        let mut jac = BandMatrix::zeros(m * nodes, m, m);
        let mut local = vec![0.0; n * n];
        let mut ui = vec![0.0; n];
        for i in 0..nodes {
            for j in 0..n {
                ui[j] = state.u[j][i];
            }
            local_coupling(&ui, self.coupling.mu(), p.beta, &mut local);
            for (a, ba) in blocks.iter().enumerate() {
                for (b, bb) in blocks.iter().enumerate() {
                    let mut s = 0.0;
                    for &j in ba {
                        for &k in bb {
                            s += c[j] * c[k] * local[j * n + k];
                        }
                    }
                    jac.add(i * m + a, i * m + b, -s);
                }
                jac.add(i * m + a, i * m + a, weights[a] * op.diag(i));
                if i + 1 < nodes {
                    jac.add(i * m + a, (i + 1) * m + a, weights[a] * op.upper(i));
                    jac.add((i + 1) * m + a, i * m + a, weights[a] * op.lower(i));
                }
            }
        }

        // d/dβ through the explicit coupling term and through c(β)
        let fields = self.fields(&p.v);
        let du: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                fields[self.partition.block_of(j)]
                    .iter()
                    .map(|x| dc[j] * x)
                    .collect()
            })
            .collect();
        let hdu = hessian_apply(&state, self.coupling, op, &du)?;
        let mut r_beta = vec![0.0; m * nodes];
        for i in 0..nodes {
            let total: f64 = (0..n).map(|k| state.u[k][i].powi(2)).sum();
            for j in 0..n {
                let uj = state.u[j][i];
                let explicit = -(total - uj * uj) * uj;
                let b = self.partition.block_of(j);
                r_beta[i * m + b] += dc[j] * full[j][i].to_f64() + c[j] * (explicit + hdu[j][i]);
            }
        }
        Ok(Linearization { r, jac, r_beta })
    }
}

/// Solves `[J a; cᵀ d] [x; ξ] = [f; φ]` by block elimination with one step
/// of iterative refinement.
fn bordered_solve(
    jac: &BandMatrix,
    lu: &BandLu,
    a: &[f64],
    c: &[f64],
    d: f64,
    f: &[f64],
    phi: f64,
) -> Result<(Vec<f64>, f64)> {
    let y = lu.solve(a);
    let denom = d - dot(c, &y);
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Singular);
    }
    let once = |f: &[f64], phi: f64| {
        let z = lu.solve(f);
        let xi = (phi - dot(c, &z)) / denom;
        let x: Vec<f64> = z.iter().zip(&y).map(|(zi, yi)| zi - xi * yi).collect();
        (x, xi)
    };
    let (mut x, mut xi) = once(f, phi);
    let jx = jac.matvec(&x);
    let rf: Vec<f64> = (0..f.len()).map(|i| f[i] - jx[i] - a[i] * xi).collect();
    let rphi = phi - dot(c, &x) - d * xi;
    let (dx, dxi) = once(&rf, rphi);
    x.iter_mut().zip(&dx).for_each(|(p, q)| *p += q);
    xi += dxi;
    if x.iter().any(|v| !v.is_finite()) || !xi.is_finite() {
        return Err(Error::Singular);
    }
    Ok((x, xi))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear constraint `⟨normal, x - anchor⟩ = target` in the arclength metric.
struct Constraint {
    normal: Point,
    anchor: Point,
    target: f64,
}

struct Corrected {
    point: Point,
    iterations: usize,
}

fn correct(
    red: &Reduced,
    start: Point,
    con: &Constraint,
    opts: &ContinuationOpts,
) -> Result<Corrected> {
    let mut x = start;
    let mut first: Option<f64> = None;
    for it in 0..=opts.max_newton {
        if !(x.beta < red.coupling.mu_min()) {
            return Err(Error::OutOfDomain {
                beta: x.beta,
                range: "below mu_min".into(),
            });
        }
        let lin = red.linearize(&x)?;
        let weights = red.block_weights(x.beta)?;
        let rn = red.residual_norm(&lin.r);
        let diff = Point {
            v: x.v.iter().zip(&con.anchor.v).map(|(a, b)| a - b).collect(),
            beta: x.beta - con.anchor.beta,
        };
        let g = red.dot(&weights, &con.normal, &diff) - con.target;
        let scale = *first.get_or_insert(rn.max(1e-300));
        if !rn.is_finite() || rn > 1e6 * scale.max(1.0) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: rn,
            });
        }
        if rn <= opts.newton_tol && g.abs() <= opts.newton_tol {
            return Ok(Corrected {
                point: x,
                iterations: it,
            });
        }
        if it == opts.max_newton {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: rn,
            });
        }
        let cvec: Vec<f64> = (0..red.nodes)
            .flat_map(|i| {
                let w = red.op.grid.weights[i];
                let weights = &weights;
                let normal = &con.normal;
                (0..red.m).map(move |b| w * weights[b] * normal.v[i * red.m + b])
            })
            .collect();
        let lu = lin.jac.clone().factor(false)?;
        let f: Vec<f64> = lin.r.iter().map(|v| -v).collect();
        let (dv, dbeta) =
            bordered_solve(&lin.jac, &lu, &lin.r_beta, &cvec, con.normal.beta, &f, -g)?;
        x.v.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);
        x.beta += dbeta;
    }
    unreachable!("loop returns on its last iteration")
}

/// Unit tangent with `⟨t, previous⟩ > 0`, from `[J R_β; previousᵀ] t = [0; 1]`.
fn tangent(red: &Reduced, x: &Point, previous: &Point) -> Result<Point> {
    let lin = red.linearize(x)?;
    let weights = red.block_weights(x.beta)?;
    let cvec: Vec<f64> = (0..red.nodes)
        .flat_map(|i| {
            let w = red.op.grid.weights[i];
            let weights = &weights;
            (0..red.m).map(move |b| w * weights[b] * previous.v[i * red.m + b])
        })
        .collect();
    let lu = lin.jac.clone().factor(false)?;
    let zero = vec![0.0; lin.r.len()];
    let (tv, tb) = bordered_solve(&lin.jac, &lu, &lin.r_beta, &cvec, previous.beta, &zero, 1.0)?;
    let mut t = Point { v: tv, beta: tb };
    let nrm = red.dot(&weights, &t, &t).sqrt();
    let sign = if red.dot(&weights, &t, previous) < 0.0 {
        -1.0
    } else {
        1.0
    };
    t.v.iter_mut().for_each(|a| *a *= sign / nrm);
    t.beta *= sign / nrm;
    Ok(t)
}

/// Pseudo-arclength continuation of the reduced problem for `partition`.
///
/// With a kick, the first corrector is confined to the hyperplane through
/// the predictor whose normal is the kick direction made orthogonal to the
/// locked branch, which keeps it from sliding back onto that branch.
pub fn continue_branch(
    predictor: &Predictor,
    partition: &Partition,
    coupling: &CouplingSpec,
    op: &SchrodingerOperator,
    ground: &GroundState,
    opts: &ContinuationOpts,
) -> Result<Branch> {
    opts.validate()?;
    if partition.n() != coupling.n() || predictor.u.len() != coupling.n() {
        return Err(Error::SizeMismatch {
            expected: coupling.n(),
            got: predictor.u.len(),
        });
    }
    let red = Reduced::new(partition, coupling, op);
    let grid = &op.grid;
    let (beta_lo, beta_hi) = opts.beta_bounds(coupling);
    let start = Point {
        v: red.flatten(&project(partition, &predictor.u)?),
        beta: predictor.beta,
    };
    let sign = if predictor.direction < 0 { -1.0 } else { 1.0 };

    let (first, mut t) = match &predictor.kick {
        Some(kick) => {
            // kick and locked tangent in reduced coordinates
            let phi = Point {
                v: red.flatten(&project(partition, kick)?),
                beta: 0.0,
            };
            let da = alpha_derivative(coupling, predictor.beta)?;
            let reps = partition.representatives();
            let lt_fields: Vec<Vec<f64>> = reps
                .iter()
                .map(|&r| ground.w.iter().map(|x| da[r] * x).collect())
                .collect();
            let locked_t = Point {
                v: red.flatten(&lt_fields),
                beta: 1.0,
            };
            let weights = red.block_weights(predictor.beta)?;
            let proj = red.dot(&weights, &phi, &locked_t) / red.dot(&weights, &locked_t, &locked_t);
            let normal = Point {
                v: phi
                    .v
                    .iter()
                    .zip(&locked_t.v)
                    .map(|(a, b)| a - proj * b)
                    .collect(),
                beta: -proj,
            };
            let con = Constraint {
                normal,
                anchor: start.clone(),
                target: 0.0,
            };
            let first = correct(&red, start.clone(), &con, opts)
                .map_err(|e| Error::PredictorDiverged(format!("first corrector: {e}")))?;
            let alpha = gammas_alphas(coupling, predictor.beta)?.alpha;
            let origin_fields: Vec<Vec<f64>> = reps
                .iter()
                .map(|&r| ground.w.iter().map(|x| alpha[r] * x).collect())
                .collect();
            let origin = Point {
                v: red.flatten(&origin_fields),
                beta: predictor.beta,
            };
            let secant = Point {
                v: first
                    .point
                    .v
                    .iter()
                    .zip(&origin.v)
                    .map(|(a, b)| a - b)
                    .collect(),
                beta: first.point.beta - origin.beta,
            };
            let t = tangent(&red, &first.point, &secant)?;
            (first, t)
        }
        None => {
            let fixed = Constraint {
                normal: Point {
                    v: vec![0.0; start.v.len()],
                    beta: 1.0,
                },
                anchor: start.clone(),
                target: 0.0,
            };
            let first = correct(&red, start.clone(), &fixed, opts)?;
            let up = Point {
                v: vec![0.0; start.v.len()],
                beta: sign,
            };
            let t = tangent(&red, &first.point, &up)?;
            (first, t)
        }
    };

    let make_point = |x: &Point, s: f64, index: usize| -> Result<BranchPoint> {
        let state = red.embedded(x)?;
        let residual = residual_norm(&state, coupling, op)?;
        let morse_index = if opts.morse_every > 0 && index.is_multiple_of(opts.morse_every) {
            let fields = red.fields(&x.v);
            let spec = reduced_hessian_spectrum(
                partition,
                coupling,
                x.beta,
                &fields,
                op,
                4,
                default_zero_tol(grid),
            )?;
            Some(spec.morse_index)
        } else {
            None
        };
        Ok(BranchPoint {
            beta: x.beta,
            s,
            residual,
            morse_index,
            min_u: state.min_value(),
            dist_locked: distance_to_locked(&state.u, &ground.w, grid),
            u: state.u,
        })
    };

    let mut branch = Branch {
        points: vec![make_point(&first.point, 0.0, 0)?],
        partition: partition.clone(),
        origin: predictor.origin,
        direction: predictor.direction,
        termination: Termination::MaxSteps,
        ambiguous: predictor.ambiguous,
    };
    if predictor.kick.is_some()
        && branch.points[0].dist_locked <= 0.1 * opts.eps * locked_scale(&branch.points[0])
    {
        branch.termination = Termination::ReturnedToLocked;
        return Ok(branch);
    }

    let kicked = predictor.kick.is_some();
    let mut x = first.point;
    let mut ds = opts.ds0;
    let mut s = 0.0;
    'steps: for step in 1..=opts.max_steps {
        loop {
            let weights = red.block_weights(x.beta)?;
            let guess = Point {
                v: x.v.iter().zip(&t.v).map(|(a, b)| a + ds * b).collect(),
                beta: x.beta + ds * t.beta,
            };
            let con = Constraint {
                normal: t.clone(),
                anchor: x.clone(),
                target: ds,
            };
            let attempt = if guess.beta < coupling.mu_min() {
                correct(&red, guess, &con, opts)
            } else {
                Err(Error::Singular)
            };
            match attempt {
                Ok(next) => {
                    let diff = Point {
                        v: next.point.v.iter().zip(&x.v).map(|(a, b)| a - b).collect(),
                        beta: next.point.beta - x.beta,
                    };
                    s += red.dot(&weights, &diff, &diff).sqrt();
                    let new_t = tangent(&red, &next.point, &t)?;
                    let fast = next.iterations <= 3;
                    x = next.point;
                    t = new_t;
                    let bp = make_point(&x, s, step)?;
                    let done = if !(bp.beta > beta_lo && bp.beta < beta_hi) {
                        Some(Termination::BetaBound)
                    } else if bp.min_u <= 0.0 {
                        Some(Termination::PositivityLost)
                    } else if kicked && bp.dist_locked <= opts.locked_tol * locked_scale(&bp) {
                        Some(Termination::ReturnedToLocked)
                    } else {
                        None
                    };
                    branch.points.push(bp);
                    if let Some(reason) = done {
                        branch.termination = reason;
                        break 'steps;
                    }
                    if fast {
                        ds = (2.0 * ds).min(opts.ds_max);
                    }
                    break;
                }
                Err(_) => {
                    ds *= 0.5;
                    if ds < opts.ds_min {
                        branch.termination = Termination::NewtonFailure;
                        break 'steps;
                    }
                }
            }
        }
    }
    Ok(branch)
}

fn locked_scale(p: &BranchPoint) -> f64 {
    p.u.iter()
        .flatten()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1.0)
}

/// `β` at `dist_locked = 0` from the quadratic through the first three
/// points of a branch.
pub fn extrapolate_origin(branch: &Branch) -> Option<f64> {
    let p = branch.points.get(..3)?;
    let (d, b): (Vec<f64>, Vec<f64>) = p.iter().map(|q| (q.dist_locked, q.beta)).unzip();
    let mut value = 0.0;
    for i in 0..3 {
        let mut l = 1.0;
        for j in 0..3 {
            if i != j {
                let den = d[i] - d[j];
                if den == 0.0 {
                    return None;
                }
                l *= (0.0 - d[j]) / den;
            }
        }
        value += l * b[i];
    }
    value.is_finite().then_some(value)
}

/// Largest distance between two branches at common `β`, relative to the
/// size of the state, using linear interpolation along `other`. `None` if
/// their `β` ranges do not overlap.
pub fn branch_separation(a: &Branch, b: &Branch, grid: &RadialGrid) -> Option<f64> {
    let mut best: Option<f64> = None;
    for p in &a.points {
        for seg in b.points.windows(2) {
            let (q0, q1) = (&seg[0], &seg[1]);
            let (lo, hi) = if q0.beta <= q1.beta {
                (q0.beta, q1.beta)
            } else {
                (q1.beta, q0.beta)
            };
            if p.beta < lo || p.beta > hi || hi == lo {
                continue;
            }
            let t = (p.beta - q0.beta) / (q1.beta - q0.beta);
            let diff: Vec<Vec<f64>> = (0..p.u.len())
                .map(|j| {
                    (0..p.u[j].len())
                        .map(|i| p.u[j][i] - (q0.u[j][i] + t * (q1.u[j][i] - q0.u[j][i])))
                        .collect()
                })
                .collect();
            let rel = field_norm(grid, &diff) / field_norm(grid, &p.u);
            best = Some(best.map_or(rel, |m: f64| m.max(rel)));
        }
    }
    best
}
