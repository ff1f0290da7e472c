//! Partial locking: partitions of the components, the locking ratios within
//! a block, and the reduced problem on the subspace where every block is
//! locked.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::compensated::{scale_field, Dd};
use crate::error::{Error, Result};
use crate::grid::{RadialGrid, SchrodingerOperator};
use crate::locked::CouplingSpec;
use crate::system::{pencil_spectrum, system_residual_dd, HessianSpectrum, SystemState};

/// Default relative tolerance of [`detect_partition`].
pub const DETECT_TOL: f64 = 1e-6;
/// Relative defect allowed in the input of [`residual_transfer_check`].
pub const RATIO_TOL: f64 = 1e-12;

/// Set partition of the 0-based component indices `0..n`, kept canonical:
/// blocks sorted internally and by their smallest element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    n: usize,
}

impl Partition {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &i in b {
                if i >= n {
                    return Err(Error::InvalidPartition(format!(
                        "blocks must cover 1..={n} without gaps, found index {}",
                        i + 1
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidPartition(format!("index {} repeated", i + 1)));
                }
            }
        }
        if n == 0 {
            return Err(Error::InvalidPartition("no components".into()));
        }
        blocks.iter_mut().for_each(|b| b.sort_unstable());
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { blocks, n })
    }

    /// `{{1}, …, {n}}`.
    pub fn discrete(n: usize) -> Self {
        Self {
            blocks: (0..n).map(|i| vec![i]).collect(),
            n,
        }
    }

    /// `{{1, …, n}}`.
    pub fn single(n: usize) -> Self {
        Self {
            blocks: vec![(0..n).collect()],
            n,
        }
    }

    /// `{A, Aᶜ}` from the 0-based members of `A`.
    pub fn pair(n: usize, a: &[usize]) -> Result<Self> {
        let rest: Vec<usize> = (0..n).filter(|i| !a.contains(i)).collect();
        Self::new(vec![a.to_vec(), rest])
    }

    /// Parses `1|2,3` (1-based) and checks it covers exactly `1..=n`.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let p: Partition = text.parse()?;
        if p.n != n {
            return Err(Error::InvalidPartition(format!(
                "{text} covers {} components, expected {n}",
                p.n
            )));
        }
        Ok(p)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of components.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of blocks `|P|`.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn representatives(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b[0]).collect()
    }

    /// Block index of component `j`.
    pub fn block_of(&self, j: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.contains(&j))
            .expect("component in range")
    }

    /// `true` if every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.n == coarser.n
            && self.blocks.iter().all(|b| {
                b.iter()
                    .all(|j| coarser.block_of(*j) == coarser.block_of(b[0]))
            })
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let blocks = text
            .split('|')
            .map(|blk| {
                blk.split(',')
                    .map(|t| {
                        let t = t.trim();
                        match t.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(Error::InvalidPartition(format!(
                                "bad index {t:?} in {text:?}"
                            ))),
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Partition::new(blocks)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|i| (i + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        f.write_str(&text.join("|"))
    }
}

impl TryFrom<String> for Partition {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Partition> for String {
    fn from(p: Partition) -> String {
        p.to_string()
    }
}

/// All unordered pairs `{A, Aᶜ}`, `A ∋ 1`, `Aᶜ ≠ ∅`, listed by increasing
/// bitmask of `A \ {1}`: `2^{n-1} - 1` partitions.
pub fn pair_partitions(n: usize) -> impl Iterator<Item = Partition> {
    let count: u64 = if n >= 1 { (1u64 << (n - 1)) - 1 } else { 0 };
    (0..count).map(move |mask| {
        let mut a = vec![0];
        a.extend((1..n).filter(|j| mask >> (j - 1) & 1 == 1));
        Partition::pair(n, &a).expect("valid pair partition")
    })
}

/// `γ_j(β)/γ_i(β) = ((μ_i - β)/(μ_j - β))^{1/2}`, 0-based indices.
pub fn locked_ratio(coupling: &CouplingSpec, beta: f64, i: usize, j: usize) -> Result<f64> {
    if !(beta < coupling.mu_min()) {
        return Err(Error::OutOfDomain {
            beta,
            range: format!("(-inf, {})", coupling.mu_min()),
        });
    }
    let mu = coupling.mu();
    if i >= mu.len() || j >= mu.len() {
        return Err(Error::SizeMismatch {
            expected: mu.len(),
            got: i.max(j) + 1,
        });
    }
    if i == j {
        return Ok(1.0);
    }
    Ok(((mu[i] - beta) / (mu[j] - beta)).sqrt())
}

/// `d/dβ` of [`locked_ratio`].
pub fn locked_ratio_derivative(
    coupling: &CouplingSpec,
    beta: f64,
    i: usize,
    j: usize,
) -> Result<f64> {
    let c = locked_ratio(coupling, beta, i, j)?;
    let mu = coupling.mu();
    Ok((mu[i] - mu[j]) / (2.0 * c * (mu[j] - beta).powi(2)))
}

/// Embedding coefficients `c_j = γ_j/γ_rep(j)` for every component.
pub fn embedding_coefficients(
    partition: &Partition,
    coupling: &CouplingSpec,
    beta: f64,
) -> Result<Vec<f64>> {
    check_sizes(partition, coupling)?;
    (0..partition.n())
        .map(|j| {
            locked_ratio(
                coupling,
                beta,
                partition.blocks[partition.block_of(j)][0],
                j,
            )
        })
        .collect()
}

/// `dc_j/dβ` for every component.
pub fn embedding_derivatives(
    partition: &Partition,
    coupling: &CouplingSpec,
    beta: f64,
) -> Result<Vec<f64>> {
    check_sizes(partition, coupling)?;
    (0..partition.n())
        .map(|j| {
            locked_ratio_derivative(
                coupling,
                beta,
                partition.blocks[partition.block_of(j)][0],
                j,
            )
        })
        .collect()
}

fn check_sizes(partition: &Partition, coupling: &CouplingSpec) -> Result<()> {
    if partition.n() != coupling.n() {
        return Err(Error::SizeMismatch {
            expected: coupling.n(),
            got: partition.n(),
        });
    }
    Ok(())
}

/// `‖r_j - γ r_i‖_ω` for a state with `u_j = γ u_i`, `γ` the locking ratio.
/// Fails if the input is not locked on `{i, j}`.
pub fn residual_transfer_check(
    coupling: &CouplingSpec,
    beta: f64,
    i: usize,
    j: usize,
    u: &[Vec<f64>],
    op: &SchrodingerOperator,
) -> Result<f64> {
    let gamma = locked_ratio(coupling, beta, i, j)?;
    if u.len() != coupling.n() {
        return Err(Error::SizeMismatch {
            expected: coupling.n(),
            got: u.len(),
        });
    }
    let grid = &op.grid;
    let defect: Vec<f64> = u[j].iter().zip(&u[i]).map(|(a, b)| a - gamma * b).collect();
    let rel = grid.norm(&defect) / grid.norm(&u[i]).max(f64::MIN_POSITIVE);
    if !(rel <= RATIO_TOL) {
        return Err(Error::RatioViolated {
            i: i + 1,
            j: j + 1,
            defect: rel,
        });
    }
    transfer_defect(coupling, beta, i, j, gamma, u, op)
}

/// `‖r_j - γ r_i‖_ω` after setting `u_j = γ u_i` for an arbitrary ratio `γ`.
///
/// Component `j` is formed as the exact double-double product, so the
/// linear part cancels identically and only the nonlinear identity is
/// measured; it vanishes exactly when `γ` is the locking ratio.
pub fn transfer_defect(
    coupling: &CouplingSpec,
    beta: f64,
    i: usize,
    j: usize,
    gamma: f64,
    u: &[Vec<f64>],
    op: &SchrodingerOperator,
) -> Result<f64> {
    if u.len() != coupling.n() || i >= u.len() || j >= u.len() || i == j {
        return Err(Error::SizeMismatch {
            expected: coupling.n(),
            got: u.len(),
        });
    }
    let mut state = SystemState::new(beta, u.to_vec());
    let (hi, lo) = scale_field(gamma, &u[i], &[]);
    state.u[j] = hi;
    state.tail = vec![vec![0.0; op.len()]; coupling.n()];
    state.tail[j] = lo;
    let r = system_residual_dd(&state, coupling, op)?;
    let diff: Vec<f64> = r[j]
        .iter()
        .zip(&r[i])
        .map(|(a, b)| (*a - b.scale(gamma)).to_f64())
        .collect();
    Ok(op.grid.norm(&diff))
}

/// Reduced coordinates: one field per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub beta: f64,
    pub v: Vec<Vec<f64>>,
}

/// `u_j = c_j v_{block(j)}`.
pub fn embed(
    partition: &Partition,
    coupling: &CouplingSpec,
    beta: f64,
    v: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    Ok(embed_state(partition, coupling, beta, v)?.u)
}

/// [`embed`] keeping the rounding error of each product as a tail.
pub fn embed_state(
    partition: &Partition,
    coupling: &CouplingSpec,
    beta: f64,
    v: &[Vec<f64>],
) -> Result<SystemState> {
    if v.len() != partition.len() {
        return Err(Error::SizeMismatch {
            expected: partition.len(),
            got: v.len(),
        });
    }
    let c = embedding_coefficients(partition, coupling, beta)?;
    let (u, tail) = (0..partition.n())
        .map(|j| scale_field(c[j], &v[partition.block_of(j)], &[]))
        .unzip();
    Ok(SystemState { beta, u, tail })
}

/// `v_b = u_{rep(b)}`.
pub fn project(partition: &Partition, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if u.len() != partition.n() {
        return Err(Error::SizeMismatch {
            expected: partition.n(),
            got: u.len(),
        });
    }
    Ok(partition
        .representatives()
        .iter()
        .map(|&r| u[r].clone())
        .collect())
}

/// Gradient of `v ↦ J_β(embed(v))` in the `ω` product:
/// `R_b = Σ_{j∈P_b} c_j r_j`.
pub fn reduced_residual(
    partition: &Partition,
    coupling: &CouplingSpec,
    beta: f64,
    v: &[Vec<f64>],
    op: &SchrodingerOperator,
) -> Result<Vec<Vec<f64>>> {
    let state = embed_state(partition, coupling, beta, v)?;
    let r = system_residual_dd(&state, coupling, op)?;
    let c = embedding_coefficients(partition, coupling, beta)?;
    Ok(partition
        .blocks()
        .iter()
        .map(|b| {
            (0..op.len())
                .map(|i| {
                    b.iter()
                        .fold(Dd::default(), |acc, &j| acc + r[j][i].scale(c[j]))
                        .to_f64()
                })
                .collect()
        })
        .collect())
}

/// Pencil `(EᵀWHE, EᵀWE)` of the reduced Hessian, interleaved by node.
pub fn reduced_hessian_pencil(
    partition: &Partition,
    coupling: &CouplingSpec,
    beta: f64,
    v: &[Vec<f64>],
    op: &SchrodingerOperator,
) -> Result<crate::linalg::SymBlockTridiag> {
    let state = embed_state(partition, coupling, beta, v)?;
    let full = crate::system::hessian_pencil(&state, coupling, op)?;
    let c = embedding_coefficients(partition, coupling, beta)?;
    let n = coupling.n();
    let m = partition.len();
    let nodes = op.len();
    let weight: Vec<f64> = partition
        .blocks()
        .iter()
        .map(|b| b.iter().map(|&j| c[j] * c[j]).sum())
        .collect();
    let mut p = crate::linalg::SymBlockTridiag::new(m, nodes);
    for i in 0..nodes {
        let src = &full.diag[i * n * n..(i + 1) * n * n];
        for (a, ba) in partition.blocks().iter().enumerate() {
            for (b, bb) in partition.blocks().iter().enumerate() {
                let mut s = 0.0;
                for &j in ba {
                    for &k in bb {
                        s += c[j] * c[k] * src[j * n + k];
                    }
                }
                p.diag[i * m * m + a * m + b] = s;
            }
            p.mass[i * m + a] = op.grid.weights[i] * weight[a];
            if i + 1 < nodes {
                p.off[i * m + a] = op.weighted_offdiag(i) * weight[a];
            }
        }
    }
    Ok(p)
}

/// Spectrum and inertia of the reduced Hessian; see
/// [`crate::system::hessian_spectrum`].
pub fn reduced_hessian_spectrum(
    partition: &Partition,
    coupling: &CouplingSpec,
    beta: f64,
    v: &[Vec<f64>],
    op: &SchrodingerOperator,
    count: usize,
    zero_tol: f64,
) -> Result<HessianSpectrum> {
    pencil_spectrum(
        &reduced_hessian_pencil(partition, coupling, beta, v, op)?,
        count,
        zero_tol,
    )
}

/// Finest partition whose blocks have pointwise constant ratios, judged by
/// the `ω`-weighted relative standard deviation of `u_j/u_i` against `tol`.
/// Diagnostic only.
pub fn detect_partition(u: &[Vec<f64>], grid: &RadialGrid, tol: f64) -> Result<Partition> {
    let n = u.len();
    for (j, comp) in u.iter().enumerate() {
        if comp.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: comp.len(),
            });
        }
        if comp.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroComponent(j + 1));
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if ratio_spread(&u[i], &u[j], &grid.weights) <= tol {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut index_of = vec![usize::MAX; n];
    for j in 0..n {
        let r = root(&mut parent, j);
        if index_of[r] == usize::MAX {
            index_of[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[index_of[r]].push(j);
    }
    Partition::new(blocks)
}

/// Relative weighted standard deviation of `b/a` over nodes where `a` is
/// not negligible.
fn ratio_spread(a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    let peak = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = 1e-10 * peak;
    let (mut sw, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        if a[i].abs() > floor {
            let r = b[i] / a[i];
            sw += weights[i];
            s1 += weights[i] * r;
            s2 += weights[i] * r * r;
        }
    }
    if sw == 0.0 {
        return f64::INFINITY;
    }
    let mean = s1 / sw;
    let var = (s2 / sw - mean * mean).max(0.0);
    if mean == 0.0 {
        return f64::INFINITY;
    }
    var.sqrt() / mean.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        let p = Partition::parse("1|2,3", 3).unwrap();
        assert_eq!(p.blocks(), &[vec![0], vec![1, 2]]);
        assert_eq!(p.to_string(), "1|2,3");
        assert_eq!(Partition::parse("3,1|2", 3).unwrap().to_string(), "1,3|2");
        assert_eq!(p.representatives(), vec![0, 1]);
        assert!(Partition::parse("1|1,2", 3).is_err());
        assert!(Partition::parse("1|3", 3).is_err());
        assert!(Partition::parse("1|2", 3).is_err());
        assert!(Partition::parse("0|1", 2).is_err());
        assert!(Partition::parse("1||2", 2).is_err());
        assert!(Partition::parse("a|2", 2).is_err());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "\"1|2,3\"");
    }

    #[test]
    fn pair_enumeration_order() {
        let names: Vec<String> = pair_partitions(3).map(|p| p.to_string()).collect();
        assert_eq!(names, ["1|2,3", "1,2|3", "1,3|2"]);
        for n in 2..=8 {
            let all: Vec<Partition> = pair_partitions(n).collect();
            assert_eq!(all.len(), (1 << (n - 1)) - 1);
            let unique: std::collections::HashSet<_> = all.iter().cloned().collect();
            assert_eq!(unique.len(), all.len());
            assert!(all.iter().all(|p| p.len() == 2));
        }
    }

    #[test]
    fn refinement() {
        let fine = Partition::discrete(3);
        let mid = Partition::parse("1,2|3", 3).unwrap();
        assert!(fine.refines(&mid));
        assert!(mid.refines(&Partition::single(3)));
        assert!(!mid.refines(&Partition::parse("1|2,3", 3).unwrap()));
    }

    #[test]
    fn ratio_values() {
        let c = CouplingSpec::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(locked_ratio(&c, -0.5, 1, 1).unwrap(), 1.0);
        assert!((locked_ratio(&c, -0.5, 0, 2).unwrap() - 0.6546536707079771).abs() < 1e-15);
        assert!(locked_ratio(&c, 1.0, 0, 1).is_err());
        let eq = CouplingSpec::new(vec![2.0, 2.0]).unwrap();
        assert_eq!(locked_ratio(&eq, 0.7, 0, 1).unwrap(), 1.0);
        // derivative against a central difference
        let h = 1e-6;
        let fd = (locked_ratio(&c, 0.3 + h, 0, 2).unwrap()
            - locked_ratio(&c, 0.3 - h, 0, 2).unwrap())
            / (2.0 * h);
        assert!((fd - locked_ratio_derivative(&c, 0.3, 0, 2).unwrap()).abs() < 1e-8);
    }
}
