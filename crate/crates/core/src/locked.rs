//! Closed-form algebra of the synchronized ("locked") branch
//! `u_j = α_j(β) w` and of the coupling matrix of its linearization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::compensated::{scale_field, Dd};
use crate::error::{Error, Result};
use crate::scalar::{GroundState, WeightedSpectrum};
use crate::system::SystemState;

/// Absolute tolerance on `g` for the root `β̄`.
pub const G_ROOT_TOL: f64 = 1e-13;
/// Absolute tolerance on `f` when inverting it.
pub const F_INVERSE_TOL: f64 = 1e-12;
/// Relative pivot size below which Gram-Schmidt switches to coordinate seeds.
const PIVOT_FLOOR: f64 = 1e-8;

/// Self-interaction strengths `μ_1, …, μ_n`, kept in user order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    mu: Vec<f64>,
}

impl CouplingSpec {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.len() < 2 {
            return Err(Error::InvalidCoupling(format!(
                "need n >= 2 components, got {}",
                mu.len()
            )));
        }
        if let Some(bad) = mu.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidCoupling(format!(
                "mu must be positive and finite, got {bad}"
            )));
        }
        Ok(Self { mu })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mu_min(&self) -> f64 {
        self.mu.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn mu_max(&self) -> f64 {
        self.mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index (0-based) of the first component attaining `μ_min`.
    pub fn argmin(&self) -> usize {
        let m = self.mu_min();
        self.mu.iter().position(|v| *v == m).unwrap_or(0)
    }

    pub fn all_equal(&self) -> bool {
        self.mu.iter().all(|m| *m == self.mu[0])
    }
}

/// `g(β) = 1 + β Σ 1/(μ_k - β)`.
pub fn eval_g(coupling: &CouplingSpec, beta: f64) -> Result<f64> {
    // g cancels to zero at β̄, so the sum is carried in double-double
    let mut acc = Dd::from_f64(1.0);
    for &m in coupling.mu() {
        if m == beta {
            return Err(Error::Pole(beta));
        }
        let d = Dd::from_f64(m) - Dd::from_f64(beta);
        let q = beta / d.hi;
        let rem = (-q).mul_add(d.hi, beta);
        acc = acc + Dd::new(q, (rem - q * d.lo) / d.hi);
    }
    Ok(acc.to_f64())
}

/// The unique zero of `g` on `(-∞, μ_min)`; it is negative.
pub fn beta_bar(coupling: &CouplingSpec) -> f64 {
    let g = |b: f64| eval_g(coupling, b).expect("negative beta is never a pole");
    let mut lo = -1.0;
    while g(lo) >= 0.0 {
        lo *= 2.0;
    }
    let mut hi = 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let v = g(mid);
        if v.abs() <= G_ROOT_TOL {
            return mid;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Where the locked branch exists: `(β̄, μ_min) ∪ (μ_max, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockedBranchAlgebra {
    pub coupling: CouplingSpec,
    pub beta_bar: f64,
}

impl LockedBranchAlgebra {
    pub fn new(coupling: CouplingSpec) -> Self {
        let beta_bar = beta_bar(&coupling);
        Self { coupling, beta_bar }
    }

    /// `β` lies in the lower interval `(β̄, μ_min)`.
    pub fn in_lower(&self, beta: f64) -> bool {
        beta > self.beta_bar && beta < self.coupling.mu_min()
    }

    pub fn in_upper(&self, beta: f64) -> bool {
        beta > self.coupling.mu_max()
    }

    pub fn admissible(&self, beta: f64) -> bool {
        self.in_lower(beta) || self.in_upper(beta)
    }

    fn range_text(&self) -> String {
        format!(
            "({}, {}) U ({}, inf)",
            self.beta_bar,
            self.coupling.mu_min(),
            self.coupling.mu_max()
        )
    }

    fn check(&self, beta: f64) -> Result<()> {
        if self.admissible(beta) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                beta,
                range: self.range_text(),
            })
        }
    }

    fn check_lower(&self, beta: f64) -> Result<()> {
        if self.in_lower(beta) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                beta,
                range: format!("({}, {})", self.beta_bar, self.coupling.mu_min()),
            })
        }
    }
}

/// Amplitudes of the locked branch at `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Amplitudes {
    /// `γ_j = (μ_j - β)^{-1/2}`, present only below `μ_min`.
    pub gamma: Option<Vec<f64>>,
    /// `α_j = ((μ_j - β) g(β))^{-1/2}`.
    pub alpha: Vec<f64>,
}

pub fn gammas_alphas(coupling: &CouplingSpec, beta: f64) -> Result<Amplitudes> {
    let alg = LockedBranchAlgebra::new(coupling.clone());
    alg.check(beta)?;
    let g = eval_g(coupling, beta)?;
    let alpha: Vec<f64> = coupling
        .mu()
        .iter()
        .map(|m| 1.0 / ((m - beta) * g).sqrt())
        .collect();
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::OutOfDomain {
            beta,
            range: alg.range_text(),
        });
    }
    let gamma = alg.in_lower(beta).then(|| {
        coupling
            .mu()
            .iter()
            .map(|m| 1.0 / (m - beta).sqrt())
            .collect()
    });
    Ok(Amplitudes { gamma, alpha })
}

/// `dα_j/dβ` on either interval.
pub fn alpha_derivative(coupling: &CouplingSpec, beta: f64) -> Result<Vec<f64>> {
    let alpha = gammas_alphas(coupling, beta)?.alpha;
    let g = eval_g(coupling, beta)?;
    let dg: f64 = coupling
        .mu()
        .iter()
        .map(|m| 1.0 / (m - beta) + beta / (m - beta).powi(2))
        .sum();
    Ok(coupling
        .mu()
        .iter()
        .zip(&alpha)
        .map(|(m, a)| -0.5 * a.powi(3) * ((m - beta) * dg - g))
        .collect())
}

/// `γ_j(β)` for `β < μ_min`.
pub fn gammas(coupling: &CouplingSpec, beta: f64) -> Result<Vec<f64>> {
    if !(beta < coupling.mu_min()) {
        return Err(Error::OutOfDomain {
            beta,
            range: format!("(-inf, {})", coupling.mu_min()),
        });
    }
    Ok(coupling
        .mu()
        .iter()
        .map(|m| 1.0 / (m - beta).sqrt())
        .collect())
}

/// `u_j = α_j(β) w`, carrying the tail of `w` along.
pub fn locked_solution(
    ground: &GroundState,
    coupling: &CouplingSpec,
    beta: f64,
) -> Result<SystemState> {
    let amp = gammas_alphas(coupling, beta)?;
    Ok(scaled_state(ground, &amp.alpha, beta))
}

fn scaled_state(ground: &GroundState, alpha: &[f64], beta: f64) -> SystemState {
    let (u, tail) = alpha
        .iter()
        .map(|&a| scale_field(a, &ground.w, &ground.w_tail))
        .unzip();
    SystemState { beta, u, tail }
}

/// At `β = μ` with all couplings equal, every `α` on the sphere
/// `Σ α_j² = 1/μ` gives a solution; `direction` picks the point.
pub fn locked_family_equal_mu(
    ground: &GroundState,
    coupling: &CouplingSpec,
    direction: &[f64],
) -> Result<SystemState> {
    if !coupling.all_equal() {
        return Err(Error::UnequalMu);
    }
    if direction.len() != coupling.n() {
        return Err(Error::SizeMismatch {
            expected: coupling.n(),
            got: direction.len(),
        });
    }
    if direction.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::NonpositiveDirection);
    }
    let mu = coupling.mu()[0];
    let alpha = equal_mu_amplitudes(mu, direction);
    Ok(scaled_state(ground, &alpha, mu))
}

/// Rescales `direction` to `Σ α_j² = 1/μ`.
pub fn equal_mu_amplitudes(mu: f64, direction: &[f64]) -> Vec<f64> {
    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    let s = 1.0 / (norm * mu.sqrt());
    direction.iter().map(|d| d * s).collect()
}

/// `(C(β), D(β))` on `(β̄, μ_min)`.
pub fn matrix_cd(coupling: &CouplingSpec, beta: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    LockedBranchAlgebra::new(coupling.clone()).check_lower(beta)?;
    let gamma = gammas(coupling, beta)?;
    let g = eval_g(coupling, beta)?;
    let n = coupling.n();
    let mu = coupling.mu();
    let d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            mu[i] / (mu[i] - beta)
        } else {
            beta * gamma[i] * gamma[j]
        }
    });
    let c = DMatrix::identity(n, n) + d.scale(2.0 / g);
    Ok((c, d))
}

/// Coupling matrix of the linearization in amplitude form,
/// `C = I + 2 diag(μ α²) + 2β (α αᵀ - diag α²)`, valid on both intervals.
/// Equals `I + (2/g) D` below `μ_min`.
pub fn coupling_matrix(coupling: &CouplingSpec, beta: f64) -> Result<DMatrix<f64>> {
    let alpha = gammas_alphas(coupling, beta)?.alpha;
    let g = eval_g(coupling, beta)?;
    let n = coupling.n();
    let mu = coupling.mu();
    // μα² formed without the square root, so that C(0) = 3I exactly
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 + 2.0 * mu[i] / ((mu[i] - beta) * g)
        } else {
            2.0 * beta * alpha[i] * alpha[j]
        }
    }))
}

/// `f(β) = 1 + 2/g(β)`.
pub fn eval_f(coupling: &CouplingSpec, beta: f64) -> Result<f64> {
    let g = eval_g(coupling, beta)?;
    if g == 0.0 {
        return Err(Error::Pole(beta));
    }
    Ok(1.0 + 2.0 / g)
}

/// The `β ∈ (β̄, μ_min)` with `f(β) = λ`.
pub fn f_inverse(coupling: &CouplingSpec, lambda: f64) -> Result<f64> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::LambdaNotAboveOne(lambda));
    }
    if lambda == 3.0 {
        return Ok(0.0);
    }
    let alg = LockedBranchAlgebra::new(coupling.clone());
    // f decreases from +∞ at β̄ to 1 at μ_min
    let (mut lo, mut hi) = (alg.beta_bar, coupling.mu_min());
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let v = eval_f(coupling, mid)? - lambda;
        if v.abs() <= F_INVERSE_TOL {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Eigendecomposition of `C(β)`: the eigenvalue 3 on `b₁ = γ` and `f(β)` on
/// its orthogonal complement.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecompC {
    pub f_value: f64,
    pub b1: DVector<f64>,
    /// `b_j` for `j = 2..n`: `γ_j` in slot 1, `-γ_1` in slot `j`.
    pub perp: Vec<DVector<f64>>,
    /// Orthogonal, `det = +1`, first column `b₁/|b₁|`.
    pub t: DMatrix<f64>,
    /// Set at `β = 0`, where `C = 3I`.
    pub degenerate: bool,
}

impl SpectralDecompC {
    pub const EIGENVALUE_3: f64 = 3.0;

    /// Diagonal of `Tᵀ C T`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.t.nrows();
        std::iter::once(3.0)
            .chain(std::iter::repeat_n(self.f_value, n - 1))
            .collect()
    }
}

pub fn eigen_c(coupling: &CouplingSpec, beta: f64) -> Result<SpectralDecompC> {
    LockedBranchAlgebra::new(coupling.clone()).check_lower(beta)?;
    let n = coupling.n();
    let gamma = gammas(coupling, beta)?;
    let f_value = eval_f(coupling, beta)?;
    let b1 = DVector::from_vec(gamma.clone());
    let perp: Vec<DVector<f64>> = (1..n)
        .map(|j| {
            let mut v = DVector::zeros(n);
            v[0] = gamma[j];
            v[j] = -gamma[0];
            v
        })
        .collect();
    if beta == 0.0 {
        return Ok(SpectralDecompC {
            f_value: 3.0,
            b1,
            perp,
            t: DMatrix::identity(n, n),
            degenerate: true,
        });
    }
    let mut cols = vec![b1.normalize()];
    let seeds = perp
        .iter()
        .cloned()
        .chain((0..n).map(|k| DVector::from_fn(n, |i, _| (i == k) as u8 as f64)));
    for seed in seeds {
        if cols.len() == n {
            break;
        }
        let scale = seed.norm();
        let mut v = seed;
        for _ in 0..2 {
            for c in &cols {
                let p = c.dot(&v);
                v -= c * p;
            }
        }
        let nrm = v.norm();
        if nrm > PIVOT_FLOOR * scale {
            cols.push(v / nrm);
        }
    }
    let mut t = DMatrix::from_columns(&cols);
    if t.determinant() < 0.0 {
        let last = n - 1;
        t.column_mut(last).neg_mut();
    }
    Ok(SpectralDecompC {
        f_value,
        b1,
        perp,
        t,
        degenerate: false,
    })
}

/// A parameter `β_k = f⁻¹(λ_k)` where the locked branch can bifurcate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub k: usize,
    pub lambda: f64,
    pub multiplicity: usize,
    pub beta: f64,
    /// `(n - 1) n_k`.
    pub kernel_dim: usize,
}

/// One point per weighted eigenvalue cluster `k ≥ 2`, sorted by decreasing
/// `β_k`.
pub fn bifurcation_points(
    coupling: &CouplingSpec,
    spectrum: &WeightedSpectrum,
) -> Result<Vec<BifurcationPoint>> {
    spectrum.require_nondegenerate()?;
    let n = coupling.n();
    let mut out = Vec::new();
    for k in 2..=spectrum.len() {
        let lambda = spectrum.lambda(k);
        let multiplicity = spectrum.multiplicity(k);
        out.push(BifurcationPoint {
            k,
            lambda,
            multiplicity,
            beta: f_inverse(coupling, lambda)?,
            kernel_dim: (n - 1) * multiplicity,
        });
    }
    out.sort_by(|a, b| b.beta.total_cmp(&a.beta));
    Ok(out)
}
