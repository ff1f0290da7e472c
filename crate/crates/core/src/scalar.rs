//! The scalar ground state `-Δw + a w = w³, w > 0` and the weighted
//! eigenvalue problem `-Δψ + aψ = λ w² ψ` linearized around it.

use serde::{Deserialize, Serialize};

use crate::compensated::{apply_dd, at, Dd};
use crate::error::{Error, Result};
use crate::grid::SchrodingerOperator;
use crate::linalg::{cluster_sorted, BandMatrix};

/// Distance from 3 below which a weighted eigenvalue marks `w` degenerate.
pub const DEGENERACY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iterations: 50,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub w: Vec<f64>,
    /// Sub-ulp correction: the computed solution is `w + w_tail`.
    pub w_tail: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// `None` until [`weighted_spectrum`] has inspected the linearization.
    pub nondegenerate: Option<bool>,
}

impl GroundState {
    /// Gate used by every bifurcation computation.
    pub fn require_nondegenerate(&self) -> Result<()> {
        match self.nondegenerate {
            Some(true) => Ok(()),
            Some(false) => Err(Error::DegenerateGroundState { k: 0, lambda: 3.0 }),
            None => Err(Error::InvalidOption(
                "nondegeneracy of the ground state has not been checked".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSpectrum {
    /// Cluster values `λ_1 < λ_2 < …`.
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// Per cluster, an orthonormal basis in the `ω w²` product.
    pub bases: Vec<Vec<Vec<f64>>>,
    /// Number of eigenpairs computed.
    pub kmax: usize,
    pub nondegenerate: bool,
    /// `(k, λ_k)` of an eigenvalue within [`DEGENERACY_TOL`] of 3, if any.
    pub degenerate_at: Option<(usize, f64)>,
}

impl WeightedSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalue of the 1-based cluster index `k`.
    pub fn lambda(&self, k: usize) -> f64 {
        self.eigenvalues[k - 1]
    }

    pub fn multiplicity(&self, k: usize) -> usize {
        self.multiplicities[k - 1]
    }

    pub fn basis(&self, k: usize) -> &[Vec<f64>] {
        &self.bases[k - 1]
    }

    pub fn require_nondegenerate(&self) -> Result<()> {
        match self.degenerate_at {
            None => Ok(()),
            Some((k, lambda)) => Err(Error::DegenerateGroundState { k, lambda }),
        }
    }
}

/// `Aw - w³`.
pub fn scalar_residual(op: &SchrodingerOperator, w: &[f64]) -> Result<Vec<f64>> {
    let mut r = op.apply(w)?;
    r.iter_mut().zip(w).for_each(|(ri, wi)| *ri -= wi * wi * wi);
    Ok(r)
}

/// Galerkin-optimal multiple of the first eigenfunction of `A`.
pub fn initial_guess(op: &SchrodingerOperator) -> Result<Vec<f64>> {
    let (nu, phi) = op.lowest_eigenpair()?;
    let g = &op.grid;
    let quad = g.inner_unchecked(&phi, &phi);
    let quartic: f64 = g.weights.iter().zip(&phi).map(|(w, p)| w * p.powi(4)).sum();
    let s = (nu * quad / quartic).sqrt();
    Ok(phi.iter().map(|p| s * p).collect())
}

/// `A(w) + shift·w - w³` for `w = hi + lo`, evaluated in double-double and
/// rounded.
fn residual_dd(op: &SchrodingerOperator, hi: &[f64], lo: &[f64], shift: f64) -> Vec<f64> {
    let aw = apply_dd(op, hi, lo);
    aw.into_iter()
        .enumerate()
        .map(|(i, a)| {
            let u = at(hi, lo, i);
            (a + u.scale(shift) - u * u * u).to_f64()
        })
        .collect()
}

/// Residual of a ground state including its tail.
pub fn ground_state_residual(op: &SchrodingerOperator, gs: &GroundState) -> Vec<f64> {
    residual_dd(op, &gs.w, &gs.w_tail, 0.0)
}

struct NewtonOutcome {
    hi: Vec<f64>,
    lo: Vec<f64>,
    residual: f64,
    iterations: usize,
}

fn newton(
    op: &SchrodingerOperator,
    start: Vec<f64>,
    shift: f64,
    opts: &SolverOptions,
) -> Result<NewtonOutcome> {
    let g = &op.grid;
    let m = start.len();
    let mut hi = start;
    let mut lo = vec![0.0; m];
    let mut f = residual_dd(op, &hi, &lo, shift);
    let mut fnorm = g.norm(&f);
    for it in 0..opts.max_iterations {
        if fnorm <= opts.tol {
            return Ok(NewtonOutcome {
                hi,
                lo,
                residual: fnorm,
                iterations: it,
            });
        }
        let mut jac = BandMatrix::zeros(m, 1, 1);
        for i in 0..m {
            jac.add(i, i, op.diag(i) + shift - 3.0 * hi[i] * hi[i]);
            if i + 1 < m {
                jac.add(i, i + 1, op.upper(i));
                jac.add(i + 1, i, op.lower(i));
            }
        }
        let step = jac
            .factor(false)?
            .solve(&f.iter().map(|v| -v).collect::<Vec<_>>());
        let mut t = 1.0;
        let mut accepted = false;
        let mut lost_positivity = false;
        for _ in 0..=opts.max_halvings {
            let (th, tl): (Vec<f64>, Vec<f64>) = (0..m)
                .map(|i| {
                    let v = at(&hi, &lo, i) + Dd::from_f64(t * step[i]);
                    (v.hi, v.lo)
                })
                .unzip();
            if th.iter().any(|v| *v <= 0.0) {
                lost_positivity = true;
                t *= 0.5;
                continue;
            }
            let ft = residual_dd(op, &th, &tl, shift);
            let nt = g.norm(&ft);
            if nt < fnorm || nt <= opts.tol {
                hi = th;
                lo = tl;
                f = ft;
                fnorm = nt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            if lost_positivity {
                return Err(Error::PositivityLost(it));
            }
            return Err(Error::NoConvergence {
                iterations: it,
                residual: fnorm,
            });
        }
    }
    if fnorm <= opts.tol {
        return Ok(NewtonOutcome {
            hi,
            lo,
            residual: fnorm,
            iterations: opts.max_iterations,
        });
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: fnorm,
    })
}

/// Newton iteration on `F(w) = Aw - w³` from [`initial_guess`], with a
/// backtracking line search on `‖F‖_ω` that also rejects nonpositive
/// iterates. If that fails, a homotopy `A + (1-t)ν₁` is followed from the
/// damped problem back to `t = 1`.
pub fn solve_ground_state(op: &SchrodingerOperator, opts: &SolverOptions) -> Result<GroundState> {
    let smallest = op.smallest_eigenvalue()?;
    if !(smallest > 0.0) {
        return Err(Error::NonpositiveOperator(smallest));
    }
    let guess = initial_guess(op)?;
    let out = match newton(op, guess, 0.0, opts) {
        Ok(sol) => sol,
        Err(first) => homotopy(op, smallest, opts)
            .or_else(|_| {
                let warm = petviashvili(op)?;
                newton(op, warm, 0.0, opts)
            })
            .map_err(|_| first)?,
    };
    Ok(GroundState {
        w: out.hi,
        w_tail: out.lo,
        residual_norm: out.residual,
        iterations: out.iterations,
        nondegenerate: None,
    })
}

fn homotopy(op: &SchrodingerOperator, nu: f64, opts: &SolverOptions) -> Result<NewtonOutcome> {
    const STEPS: usize = 16;
    let (_, phi) = op.lowest_eigenpair()?;
    let g = &op.grid;
    let quartic: f64 = g.weights.iter().zip(&phi).map(|(w, p)| w * p.powi(4)).sum();
    let s = (2.0 * nu * g.inner_unchecked(&phi, &phi) / quartic).sqrt();
    let mut w: Vec<f64> = phi.iter().map(|p| s * p).collect();
    let mut total = 0;
    for step in 0..=STEPS {
        let shift = nu * (1.0 - step as f64 / STEPS as f64);
        let next = newton(op, w, shift, opts)?;
        w = next.hi;
        total += next.iterations;
    }
    let mut out = newton(op, w, 0.0, opts)?;
    out.iterations += total;
    Ok(out)
}

/// Normalized fixed-point iteration `w ← M^{3/2} A⁻¹w³` with the
/// stabilizing factor `M = ⟨Aw,w⟩/⟨w³,w⟩`. Since `A⁻¹` is positivity
/// preserving, every iterate stays positive; the result is only a warm start.
fn petviashvili(op: &SchrodingerOperator) -> Result<Vec<f64>> {
    const SWEEPS: usize = 400;
    let m = op.len();
    let mut a = BandMatrix::zeros(m, 1, 1);
    for i in 0..m {
        a.add(i, i, op.diag(i));
        if i + 1 < m {
            a.add(i, i + 1, op.upper(i));
            a.add(i + 1, i, op.lower(i));
        }
    }
    let lu = a.factor(false)?;
    let g = &op.grid;
    let mut w = initial_guess(op)?;
    for _ in 0..SWEEPS {
        let cube: Vec<f64> = w.iter().map(|v| v * v * v).collect();
        let stab = op.quadratic_form(&w) / g.inner_unchecked(&cube, &w);
        let mut next = lu.solve(&cube);
        let s = stab.powf(1.5);
        next.iter_mut()
            .for_each(|v| *v = (s * *v).max(f64::MIN_POSITIVE));
        let change = g.norm(&next.iter().zip(&w).map(|(a, b)| a - b).collect::<Vec<_>>());
        let size = g.norm(&next);
        w = next;
        if change <= 1e-8 * size {
            break;
        }
    }
    Ok(w)
}

/// Lowest `kmax` eigenpairs of `Aψ = λ diag(w²) ψ`, grouped into clusters of
/// relative width `cluster_tol`. Marks the ground state (non)degenerate.
///
/// The pencil `(WA, W diag(w²))` is symmetric-definite, which is the same as
/// reducing to a standard symmetric problem through `ψ = diag(w)^{-1} φ`;
/// eigenvalues are bracketed by Sturm bisection and refined as Rayleigh
/// quotients of their inverse-iteration eigenvectors.
pub fn weighted_spectrum(
    op: &SchrodingerOperator,
    ground: &mut GroundState,
    kmax: usize,
    cluster_tol: f64,
) -> Result<WeightedSpectrum> {
    if kmax < 2 {
        return Err(Error::InvalidOption(format!(
            "kmax must be >= 2, got {kmax}"
        )));
    }
    let w = &ground.w;
    if w.len() != op.len() {
        return Err(Error::SizeMismatch {
            expected: op.len(),
            got: w.len(),
        });
    }
    if w.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidOption("ground state must be positive".into()));
    }
    let w2: Vec<f64> = w.iter().map(|v| v * v).collect();
    let pencil = op.scalar_pencil(None, Some(&w2));
    let mut rough = pencil.lowest_eigenvalues(kmax + 1, 1e-10);
    // keep the last cluster whole
    let mut count = kmax.min(rough.len());
    while count < rough.len()
        && (rough[count] - rough[count - 1]).abs() <= cluster_tol * rough[count - 1].abs().max(1.0)
    {
        count += 1;
        if count == rough.len() && count < pencil.dim() {
            rough = pencil.lowest_eigenvalues(count + 1, 1e-10);
        }
    }
    rough.truncate(count);

    let g = &op.grid;
    let rayleigh = |psi: &[f64]| -> f64 {
        let num = op.quadratic_form(psi);
        let den: f64 = g
            .weights
            .iter()
            .zip(psi)
            .zip(&w2)
            .map(|((a, p), q)| a * p * p * q)
            .sum();
        num / den
    };

    let mut eigenvalues = Vec::new();
    let mut multiplicities = Vec::new();
    let mut bases: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut found: Vec<Vec<f64>> = Vec::new();
    for range in cluster_sorted(&rough, cluster_tol) {
        let mean = rough[range.clone()].iter().sum::<f64>() / range.len() as f64;
        let mut vecs = pencil.cluster_eigenvectors(mean, range.len(), &found)?;
        for v in vecs.iter_mut() {
            fix_sign(v);
        }
        let refined = vecs.iter().map(|v| rayleigh(v)).sum::<f64>() / vecs.len() as f64;
        found.extend(vecs.iter().cloned());
        eigenvalues.push(refined);
        multiplicities.push(vecs.len());
        bases.push(vecs);
    }

    let near_three =
        pencil.count_below(3.0 + DEGENERACY_TOL) - pencil.count_below(3.0 - DEGENERACY_TOL);
    let degenerate_at = if near_three > 0 {
        let k = eigenvalues
            .iter()
            .position(|l| (l - 3.0).abs() <= DEGENERACY_TOL)
            .map_or(pencil.count_below(3.0 - DEGENERACY_TOL) + 1, |p| p + 1);
        let lambda = eigenvalues.get(k - 1).copied().unwrap_or(3.0);
        Some((k, lambda))
    } else {
        None
    };
    let nondegenerate = degenerate_at.is_none();
    ground.nondegenerate = Some(nondegenerate);
    Ok(WeightedSpectrum {
        eigenvalues,
        multiplicities,
        bases,
        kmax: count,
        nondegenerate,
        degenerate_at,
    })
}

/// Default relative clustering width.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-7;

fn fix_sign(v: &mut [f64]) {
    let peak = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-3 * peak) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}
