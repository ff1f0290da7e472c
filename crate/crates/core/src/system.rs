//! The coupled `n`-component system: energy, residual, Hessian and its
//! spectrum, and the kernel at bifurcation points of the locked branch.

use serde::{Deserialize, Serialize};

use crate::compensated::{apply_dd, at, Dd};
use crate::error::{Error, Result};
use crate::grid::{RadialGrid, SchrodingerOperator};
use crate::linalg::SymBlockTridiag;
use crate::locked::{eigen_c, eval_f, BifurcationPoint, CouplingSpec, LockedBranchAlgebra};
use crate::scalar::WeightedSpectrum;

/// `β` together with the components `u_1, …, u_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub beta: f64,
    pub u: Vec<Vec<f64>>,
    /// Optional sub-ulp corrections (`u + tail` is the state); empty if
    /// absent.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tail: Vec<Vec<f64>>,
}

impl SystemState {
    pub fn new(beta: f64, u: Vec<Vec<f64>>) -> Self {
        Self {
            beta,
            u,
            tail: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// `min_{j,i} u_{j,i}`.
    pub fn min_value(&self) -> f64 {
        self.u
            .iter()
            .flatten()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self) -> bool {
        self.min_value() > 0.0
    }

    fn tail_of(&self, j: usize) -> &[f64] {
        self.tail.get(j).map_or(&[], |t| t.as_slice())
    }

    fn check(&self, coupling: &CouplingSpec, m: usize) -> Result<()> {
        if self.u.len() != coupling.n() {
            return Err(Error::SizeMismatch {
                expected: coupling.n(),
                got: self.u.len(),
            });
        }
        for comp in self.u.iter().chain(&self.tail) {
            if comp.len() != m {
                return Err(Error::SizeMismatch {
                    expected: m,
                    got: comp.len(),
                });
            }
        }
        Ok(())
    }
}

/// Sum of `ω`-norms squared over components, square-rooted.
pub fn field_norm(grid: &RadialGrid, u: &[Vec<f64>]) -> f64 {
    u.iter().map(|c| grid.norm(c).powi(2)).sum::<f64>().sqrt()
}

/// `Σ_j ⟨a_j, b_j⟩_ω`.
pub fn field_inner(grid: &RadialGrid, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| grid.inner_unchecked(x, y))
        .sum()
}

/// `J_β(u) = ½Σ‖u_j‖²_E - ¼Σμ_j∫u_j⁴ - (β/2)Σ_{i<j}∫u_i²u_j²`.
pub fn energy(
    state: &SystemState,
    coupling: &CouplingSpec,
    op: &SchrodingerOperator,
) -> Result<f64> {
    state.check(coupling, op.len())?;
    let w = &op.grid.weights;
    let mu = coupling.mu();
    let n = state.n();
    let mut e = 0.0;
    for j in 0..n {
        let uj = &state.u[j];
        e += 0.5 * op.quadratic_form(uj);
        e -= 0.25 * mu[j] * uj.iter().zip(w).map(|(v, o)| o * v.powi(4)).sum::<f64>();
        for k in j + 1..n {
            let cross: f64 = (0..uj.len())
                .map(|i| w[i] * uj[i] * uj[i] * state.u[k][i] * state.u[k][i])
                .sum();
            e -= 0.5 * state.beta * cross;
        }
    }
    Ok(e)
}

/// Component `j`: `Au_j - μ_j u_j³ - β Σ_{k≠j} u_k² u_j`, evaluated in
/// double-double (including the tail when present) and rounded.
pub fn system_residual(
    state: &SystemState,
    coupling: &CouplingSpec,
    op: &SchrodingerOperator,
) -> Result<Vec<Vec<f64>>> {
    Ok(system_residual_dd(state, coupling, op)?
        .into_iter()
        .map(|c| c.into_iter().map(Dd::to_f64).collect())
        .collect())
}

pub(crate) fn system_residual_dd(
    state: &SystemState,
    coupling: &CouplingSpec,
    op: &SchrodingerOperator,
) -> Result<Vec<Vec<Dd>>> {
    state.check(coupling, op.len())?;
    let n = state.n();
    let m = op.len();
    let mu = coupling.mu();
    let mut out: Vec<Vec<Dd>> = (0..n)
        .map(|j| apply_dd(op, &state.u[j], state.tail_of(j)))
        .collect();
    let mut vals = vec![Dd::default(); n];
    let mut sq = vec![Dd::default(); n];
    for i in 0..m {
        for j in 0..n {
            vals[j] = at(&state.u[j], state.tail_of(j), i);
            sq[j] = vals[j] * vals[j];
        }
        for j in 0..n {
            let mut coup = Dd::default();
            for k in (0..n).filter(|k| *k != j) {
                coup = coup + sq[k];
            }
            let cubic = (sq[j].scale(mu[j]) + coup.scale(state.beta)) * vals[j];
            out[j][i] = out[j][i] - cubic;
        }
    }
    Ok(out)
}

/// `‖F(u)‖_ω` over all components.
pub fn residual_norm(
    state: &SystemState,
    coupling: &CouplingSpec,
    op: &SchrodingerOperator,
) -> Result<f64> {
    Ok(field_norm(&op.grid, &system_residual(state, coupling, op)?))
}

/// Pointwise `n×n` matrix `N(u_i)` with `H = A - N`: diagonal
/// `3μ_j u_j² + β Σ_{k≠j} u_k²`, off-diagonal `2β u_j u_k`.
pub(crate) fn local_coupling(u: &[f64], mu: &[f64], beta: f64, out: &mut [f64]) {
    let n = u.len();
    let total: f64 = u.iter().map(|v| v * v).sum();
    for j in 0..n {
        for k in 0..n {
            out[j * n + k] = if j == k {
                3.0 * mu[j] * u[j] * u[j] + beta * (total - u[j] * u[j])
            } else {
                2.0 * beta * u[j] * u[k]
            };
        }
    }
}

/// Second derivative of `J_β` at `state` applied to `phi`.
pub fn hessian_apply(
    state: &SystemState,
    coupling: &CouplingSpec,
    op: &SchrodingerOperator,
    phi: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    state.check(coupling, op.len())?;
    SystemState::new(state.beta, phi.to_vec()).check(coupling, op.len())?;
    let n = state.n();
    let m = op.len();
    let mut out: Vec<Vec<f64>> = phi.iter().map(|p| op.apply_unchecked(p)).collect();
    let mut local = vec![0.0; n * n];
    let mut ui = vec![0.0; n];
    for i in 0..m {
        for j in 0..n {
            ui[j] = state.u[j][i];
        }
        local_coupling(&ui, coupling.mu(), state.beta, &mut local);
        for j in 0..n {
            out[j][i] -= (0..n).map(|k| local[j * n + k] * phi[k][i]).sum::<f64>();
        }
    }
    Ok(out)
}

/// Pencil `(W H, W)` of the Hessian, interleaved by node.
pub fn hessian_pencil(
    state: &SystemState,
    coupling: &CouplingSpec,
    op: &SchrodingerOperator,
) -> Result<SymBlockTridiag> {
    state.check(coupling, op.len())?;
    let n = state.n();
    let m = op.len();
    let mut p = SymBlockTridiag::new(n, m);
    let mut local = vec![0.0; n * n];
    let mut ui = vec![0.0; n];
    for i in 0..m {
        let w = op.grid.weights[i];
        for j in 0..n {
            ui[j] = state.u[j][i];
        }
        local_coupling(&ui, coupling.mu(), state.beta, &mut local);
        let block = &mut p.diag[i * n * n..(i + 1) * n * n];
        for j in 0..n {
            for k in 0..n {
                block[j * n + k] = -w * local[j * n + k];
            }
            block[j * n + j] += w * op.diag(i);
            p.mass[i * n + j] = w;
            if i + 1 < m {
                p.off[i * n + j] = op.weighted_offdiag(i);
            }
        }
    }
    Ok(p)
}

/// Lowest Hessian eigenvalues with the inertia they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianSpectrum {
    pub eigenvalues: Vec<f64>,
    pub morse_index: usize,
    pub kernel_dim: usize,
    /// Absolute threshold actually applied.
    pub zero_tol: f64,
}

/// `max(1e-7, 5h²)`.
pub fn default_zero_tol(grid: &RadialGrid) -> f64 {
    (5.0 * grid.h * grid.h).max(1e-7)
}

/// Inertia of a pencil with `zero_tol` taken relative to the largest of the
/// lowest `count` eigenvalue magnitudes (but at least absolute).
pub(crate) fn pencil_spectrum(
    pencil: &SymBlockTridiag,
    count: usize,
    zero_tol: f64,
) -> Result<HessianSpectrum> {
    if !(zero_tol > 0.0) {
        return Err(Error::InvalidOption(format!(
            "zero_tol must be positive, got {zero_tol}"
        )));
    }
    let eigenvalues = pencil.lowest_eigenvalues(count, 1e-11);
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigensolverFailure(
            "non-finite Hessian eigenvalue".into(),
        ));
    }
    let scale = eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = zero_tol * scale;
    let inertia = pencil.inertia(tol);
    Ok(HessianSpectrum {
        eigenvalues,
        morse_index: inertia.negative,
        kernel_dim: inertia.zero,
        zero_tol: tol,
    })
}

/// Lowest `count` eigenvalues of the Hessian in the `ω` product. Morse
/// index and kernel dimension count the whole spectrum by inertia, so they
/// are exact even when `count` is small.
pub fn hessian_spectrum(
    state: &SystemState,
    coupling: &CouplingSpec,
    op: &SchrodingerOperator,
    count: usize,
    zero_tol: f64,
) -> Result<HessianSpectrum> {
    pencil_spectrum(&hessian_pencil(state, coupling, op)?, count, zero_tol)
}

/// Relative distance of `f(β)` to a weighted eigenvalue that counts as
/// hitting it.
pub const AT_BIFURCATION_TOL: f64 = 1e-9;

/// `m(β) = Σ_{λ_k<3} n_k + (n-1) Σ_{λ_k<f(β)} n_k` on the locked branch.
pub fn morse_index_formula(
    coupling: &CouplingSpec,
    beta: f64,
    spectrum: &WeightedSpectrum,
) -> Result<usize> {
    spectrum.require_nondegenerate()?;
    let alg = LockedBranchAlgebra::new(coupling.clone());
    if !alg.admissible(beta) {
        return Err(Error::OutOfDomain {
            beta,
            range: "locked branch".into(),
        });
    }
    let f = eval_f(coupling, beta)?;
    let top = spectrum.eigenvalues.last().copied().unwrap_or(0.0);
    if top <= f.max(3.0) {
        return Err(Error::InvalidOption(format!(
            "weighted spectrum ends at {top}, need an eigenvalue above {}",
            f.max(3.0)
        )));
    }
    let mut below_three = 0;
    let mut below_f = 0;
    for k in 1..=spectrum.len() {
        let lambda = spectrum.lambda(k);
        let nk = spectrum.multiplicity(k);
        if (lambda - f).abs() <= AT_BIFURCATION_TOL * lambda.max(1.0) {
            return Err(Error::AtBifurcation { k, f });
        }
        if lambda < 3.0 {
            below_three += nk;
        }
        if lambda < f {
            below_f += nk;
        }
    }
    Ok(below_three + (coupling.n() - 1) * below_f)
}

/// `ω`-orthonormal basis `{b_j ⊗ ψ : ψ ∈ V_k, j = 2..n}` of the kernel of
/// the Hessian at `β_k`.
pub fn kernel_basis_at_bif(
    coupling: &CouplingSpec,
    point: &BifurcationPoint,
    v_k: &[Vec<f64>],
    grid: &RadialGrid,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if v_k.is_empty() {
        return Err(Error::EmptyKernel);
    }
    if v_k.len() != point.multiplicity {
        return Err(Error::WrongMultiplicity {
            expected: point.multiplicity,
            got: v_k.len(),
        });
    }
    let dec = eigen_c(coupling, point.beta)?;
    let mut basis: Vec<Vec<Vec<f64>>> = Vec::new();
    for psi in v_k {
        for b in &dec.perp {
            basis.push(
                b.iter()
                    .map(|c| psi.iter().map(|p| c * p).collect())
                    .collect(),
            );
        }
    }
    orthonormalize_fields(grid, &mut basis)?;
    Ok(basis)
}

/// Two-pass modified Gram-Schmidt in the product `ω` inner product.
pub fn orthonormalize_fields(grid: &RadialGrid, basis: &mut [Vec<Vec<f64>>]) -> Result<()> {
    for idx in 0..basis.len() {
        for _ in 0..2 {
            for prev in 0..idx {
                let (head, tail) = basis.split_at_mut(idx);
                let c = field_inner(grid, &tail[0], &head[prev]);
                for (a, b) in tail[0].iter_mut().zip(&head[prev]) {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
        }
        let nrm = field_norm(grid, &basis[idx]);
        if !(nrm > 0.0) {
            return Err(Error::EmptyKernel);
        }
        basis[idx].iter_mut().flatten().for_each(|x| *x /= nrm);
    }
    Ok(())
}
