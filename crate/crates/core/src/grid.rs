//! Radial finite-difference discretization of `-Δ + a` with Dirichlet data.
//!
//! Radially symmetric problems on an interval, a ball, an annulus or a
//! truncated copy of `R^N` reduce to the one-dimensional operator
//! `-(u'' + (N-1)/r u') + a(r) u` on the open radial interval. The central
//! difference stencil on a uniform grid is exactly symmetric in the
//! quadrature product `Σ ω_i u_i v_i` with `ω_i = r_i^{N-1} h`, which is the
//! discrete counterpart of the `L²(Ω)` pairing restricted to radial functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymBlockTridiag;

pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Interval,
    Ball,
    Annulus,
    TruncatedSpace,
}

impl std::str::FromStr for DomainKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "interval" => Ok(Self::Interval),
            "ball" => Ok(Self::Ball),
            "annulus" => Ok(Self::Annulus),
            "truncated-space" => Ok(Self::TruncatedSpace),
            other => Err(Error::InvalidDomain(format!(
                "unknown domain kind `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for DomainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Interval => "interval",
            Self::Ball => "ball",
            Self::Annulus => "annulus",
            Self::TruncatedSpace => "truncated-space",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub dim: usize,
    pub r_inner: f64,
    pub r_outer: f64,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, dim: usize, r_inner: f64, r_outer: f64) -> Result<Self> {
        let d = Self {
            kind,
            dim,
            r_inner,
            r_outer,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(DomainKind::Interval, 1, a, b)
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(DomainKind::Ball, dim, 0.0, radius)
    }

    pub fn annulus(dim: usize, r_inner: f64, r_outer: f64) -> Result<Self> {
        Self::new(DomainKind::Annulus, dim, r_inner, r_outer)
    }

    pub fn truncated_space(dim: usize, radius: f64) -> Result<Self> {
        Self::new(DomainKind::TruncatedSpace, dim, 0.0, radius)
    }

    /// Truncation radius heuristic for a harmonic trap `a = scale·r²`:
    /// eight oscillator lengths.
    pub fn default_truncation_radius(scale: f64) -> f64 {
        8.0 * scale.powf(-0.25)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidDomain(format!(
                "dimension {} not in 1..=3",
                self.dim
            )));
        }
        if !(self.r_inner.is_finite() && self.r_outer.is_finite()) || self.r_outer <= self.r_inner {
            return Err(Error::InvalidDomain(format!(
                "need R0 < R1, got R0={}, R1={}",
                self.r_inner, self.r_outer
            )));
        }
        match self.kind {
            DomainKind::Interval if self.dim != 1 => {
                Err(Error::InvalidDomain("interval requires N = 1".into()))
            }
            DomainKind::Interval if self.r_inner < 0.0 => Err(Error::InvalidDomain(
                "interval endpoints must be >= 0".into(),
            )),
            DomainKind::Ball | DomainKind::TruncatedSpace if self.r_inner != 0.0 => Err(
                Error::InvalidDomain(format!("{} requires R0 = 0", self.kind)),
            ),
            DomainKind::Annulus if self.r_inner <= 0.0 => {
                Err(Error::InvalidDomain("annulus requires R0 > 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether the left end of the radial interval is the symmetry centre
    /// (regularity `u'(0) = 0`) rather than a Dirichlet boundary.
    pub fn has_origin(&self) -> bool {
        matches!(self.kind, DomainKind::Ball | DomainKind::TruncatedSpace)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec {
    Constant {
        value: f64,
    },
    /// `a(r) = scale · r²`.
    Harmonic {
        scale: f64,
    },
    /// Piecewise-linear interpolation of `(radius, value)` samples, constant
    /// outside the sampled range.
    Tabulated {
        radii: Vec<f64>,
        values: Vec<f64>,
    },
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidPotential("constant must be finite".into()))
            }
            Self::Harmonic { scale } if !(*scale > 0.0 && scale.is_finite()) => Err(
                Error::InvalidPotential("harmonic scale must be positive".into()),
            ),
            Self::Tabulated { radii, values } => {
                if radii.len() != values.len() || radii.len() < 2 {
                    return Err(Error::InvalidPotential(
                        "table needs >= 2 radii and matching values".into(),
                    ));
                }
                if radii.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidPotential(
                        "table entries must be finite".into(),
                    ));
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidPotential("table radii must increase".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Self::Harmonic { .. })
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Harmonic { scale } => scale * r * r,
            Self::Tabulated { radii, values } => {
                let last = radii.len() - 1;
                if r <= radii[0] {
                    return values[0];
                }
                if r >= radii[last] {
                    return values[last];
                }
                let j = radii.partition_point(|&x| x <= r).min(last);
                let t = (r - radii[j - 1]) / (radii[j] - radii[j - 1]);
                values[j - 1] + t * (values[j] - values[j - 1])
            }
        }
    }
}

/// Uniform interior nodes with midpoint-type quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub domain: DomainSpec,
    pub nodes: Vec<f64>,
    pub h: f64,
    pub weights: Vec<f64>,
}

impl RadialGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `Σ ω_i u_i v_i`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.inner_unchecked(u, v))
    }

    pub(crate) fn inner_unchecked(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u)
            .zip(v)
            .map(|((w, a), b)| w * a * b)
            .sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner_unchecked(u, u).sqrt()
    }

    /// Fraction of the `ω`-norm carried by the outer 10 % of the nodes; used
    /// to check that truncating `R^N` did not clip the solution.
    pub fn tail_mass_fraction(&self, u: &[f64]) -> f64 {
        let total = self.norm(u);
        if total == 0.0 {
            return 0.0;
        }
        let start = self.len() - (self.len() / 10).max(1);
        let tail: f64 = (start..self.len())
            .map(|i| self.weights[i] * u[i] * u[i])
            .sum();
        tail.sqrt() / total
    }
}

pub fn build_grid(domain: &DomainSpec, points: usize) -> Result<RadialGrid> {
    if points < MIN_POINTS {
        return Err(Error::TooFewPoints(points));
    }
    RadialGrid::uniform(domain, points)
}

impl RadialGrid {
    /// Uniform grid without the minimum-resolution gate of [`build_grid`].
    pub fn uniform(domain: &DomainSpec, points: usize) -> Result<RadialGrid> {
        domain.validate()?;
        if points == 0 {
            return Err(Error::TooFewPoints(0));
        }
        Self::uniform_inner(domain, points)
    }

    fn uniform_inner(domain: &DomainSpec, points: usize) -> Result<RadialGrid> {
        let h = (domain.r_outer - domain.r_inner) / (points + 1) as f64;
        let nodes: Vec<f64> = (1..=points)
            .map(|i| domain.r_inner + i as f64 * h)
            .collect();
        let weights = nodes
            .iter()
            .map(|r| r.powi(domain.dim as i32 - 1) * h)
            .collect();
        Ok(RadialGrid {
            domain: *domain,
            nodes,
            h,
            weights,
        })
    }
}

/// `-Δ + a` on a [`RadialGrid`], stored as a flux-form three-point stencil:
/// `(Au)_i = up_i (u_i - u_{i+1}) + down_i (u_i - u_{i-1}) + a_i u_i`, with
/// `u_0 = u_{M+1} = 0` at Dirichlet ends. At a symmetry centre the left
/// flux is dropped (`u_0 = u_1`, i.e. `u'(0) = 0`).
#[derive(Debug, Clone)]
pub struct SchrodingerOperator {
    pub grid: RadialGrid,
    pub potential: Vec<f64>,
    up: Vec<f64>,
    down: Vec<f64>,
    /// `ω_i · up_i`, the symmetric coupling of nodes `i` and `i+1`
    /// (last entry: coupling to the right Dirichlet boundary).
    edge: Vec<f64>,
    /// `ω_0 · down_0` (zero at a symmetry centre).
    left_edge: f64,
}

pub fn assemble_operator(
    grid: &RadialGrid,
    potential: &PotentialSpec,
) -> Result<SchrodingerOperator> {
    potential.validate()?;
    if grid.domain.kind == DomainKind::TruncatedSpace && !potential.is_unbounded() {
        return Err(Error::InvalidPotential(
            "truncated-space needs a potential unbounded at infinity (harmonic)".into(),
        ));
    }
    let op = SchrodingerOperator::new_unchecked(grid, potential);
    let smallest = op.smallest_eigenvalue()?;
    if !(smallest > 0.0) {
        return Err(Error::NonpositiveOperator(smallest));
    }
    Ok(op)
}

impl SchrodingerOperator {
    /// Assembles the stencil without the positivity gate.
    pub fn new_unchecked(grid: &RadialGrid, potential: &PotentialSpec) -> Self {
        let m = grid.len();
        let h = grid.h;
        let nm1 = (grid.domain.dim - 1) as f64;
        let inv_h2 = 1.0 / (h * h);
        let mut up = Vec::with_capacity(m);
        let mut down = Vec::with_capacity(m);
        for &r in &grid.nodes {
            let drift = nm1 / (2.0 * r * h);
            up.push(inv_h2 + drift);
            down.push(inv_h2 - drift);
        }
        let left_edge = if grid.domain.has_origin() {
            down[0] = 0.0;
            0.0
        } else {
            grid.weights[0] * down[0]
        };
        let edge = (0..m).map(|i| grid.weights[i] * up[i]).collect();
        let potential = grid.nodes.iter().map(|&r| potential.eval(r)).collect();
        Self {
            grid: grid.clone(),
            potential,
            up,
            down,
            edge,
            left_edge,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.grid.check(u)?;
        Ok(self.apply_unchecked(u))
    }

    pub(crate) fn apply_unchecked(&self, u: &[f64]) -> Vec<f64> {
        let m = u.len();
        (0..m)
            .map(|i| {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < m { u[i + 1] } else { 0.0 };
                self.up[i] * (u[i] - right)
                    + self.down[i] * (u[i] - left)
                    + self.potential[i] * u[i]
            })
            .collect()
    }

    /// Flux coefficients `(up_i, down_i)` of row `i`.
    pub fn stencil(&self, i: usize) -> (f64, f64) {
        (self.up[i], self.down[i])
    }

    /// Diagonal entry of the matrix `A`.
    pub fn diag(&self, i: usize) -> f64 {
        self.up[i] + self.down[i] + self.potential[i]
    }

    /// Off-diagonal entries `A_{i,i+1}` and `A_{i+1,i}`.
    pub fn upper(&self, i: usize) -> f64 {
        -self.up[i]
    }

    pub fn lower(&self, i: usize) -> f64 {
        -self.down[i + 1]
    }

    /// Symmetric coupling `ω_i A_{i,i+1}` of the weighted matrix `WA`.
    pub fn weighted_offdiag(&self, i: usize) -> f64 {
        -self.edge[i]
    }

    /// `⟨Au, u⟩_ω` summed edge by edge, so that it stays accurate when `u`
    /// is smooth and the stencil entries are large.
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        let m = u.len();
        let mut s = self.left_edge * u[0] * u[0];
        for i in 0..m {
            let right = if i + 1 < m { u[i + 1] } else { 0.0 };
            let d = u[i] - right;
            s += self.edge[i] * d * d + self.grid.weights[i] * self.potential[i] * u[i] * u[i];
        }
        s
    }

    /// `⟨Au, v⟩_ω`, symmetric bilinear version of [`Self::quadratic_form`].
    pub fn bilinear_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let m = u.len();
        let mut s = self.left_edge * u[0] * v[0];
        for i in 0..m {
            let ur = if i + 1 < m { u[i + 1] } else { 0.0 };
            let vr = if i + 1 < m { v[i + 1] } else { 0.0 };
            s += self.edge[i] * (u[i] - ur) * (v[i] - vr)
                + self.grid.weights[i] * self.potential[i] * u[i] * v[i];
        }
        s
    }

    /// `‖u‖²_E = ⟨Au,u⟩_ω`.
    pub fn energy_norm_sq(&self, u: &[f64]) -> f64 {
        self.quadratic_form(u)
    }

    /// Pencil `(WA - WD, W)` for a diagonal field `shift_diag` subtracted
    /// from `A`; with `weight` the mass becomes `W·diag(weight)`.
    pub(crate) fn scalar_pencil(
        &self,
        shift_diag: Option<&[f64]>,
        weight: Option<&[f64]>,
    ) -> SymBlockTridiag {
        let m = self.len();
        let mut p = SymBlockTridiag::new(1, m);
        for i in 0..m {
            let w = self.grid.weights[i];
            let s = shift_diag.map_or(0.0, |d| d[i]);
            p.diag[i] = w * (self.diag(i) - s);
            p.mass[i] = w * weight.map_or(1.0, |d| d[i]);
            if i + 1 < m {
                p.off[i] = self.weighted_offdiag(i);
            }
        }
        p
    }

    /// Smallest eigenvalue of the `ω`-symmetric operator (bisection bracket
    /// refined by a Rayleigh quotient of the inverse-iteration eigenvector).
    pub fn smallest_eigenvalue(&self) -> Result<f64> {
        Ok(self.lowest_eigenpair()?.0)
    }

    /// Lowest eigenpair with the eigenvector positive and `ω`-normalized.
    pub fn lowest_eigenpair(&self) -> Result<(f64, Vec<f64>)> {
        let pencil = self.scalar_pencil(None, None);
        let estimate = pencil.lowest_eigenvalues(1, 1e-9)[0];
        if !estimate.is_finite() {
            return Err(Error::EigensolverFailure(
                "non-finite eigenvalue estimate".into(),
            ));
        }
        let mut v = pencil.cluster_eigenvectors(estimate, 1, &[])?.remove(0);
        if v.iter().sum::<f64>() < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let rq = self.quadratic_form(&v) / self.grid.inner_unchecked(&v, &v);
        Ok((rq, v))
    }
}

pub fn weighted_inner(grid: &RadialGrid, u: &[f64], v: &[f64]) -> Result<f64> {
    grid.inner(u, v)
}

pub fn operator_smallest_eigenvalue(op: &SchrodingerOperator) -> Result<f64> {
    op.smallest_eigenvalue()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn interval_op(m: usize, a: f64) -> SchrodingerOperator {
        let g = build_grid(&DomainSpec::interval(0.0, PI).unwrap(), m).unwrap();
        SchrodingerOperator::new_unchecked(&g, &PotentialSpec::Constant { value: a })
    }

    #[test]
    fn coarse_grid_arithmetic() {
        let g = RadialGrid::uniform(&DomainSpec::interval(0.0, PI).unwrap(), 3).unwrap();
        let expect = [PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];
        for (a, b) in g.nodes.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(g.weights.iter().all(|w| (w - PI / 4.0).abs() < 1e-15));
        let ones = [1.0; 3];
        assert!((g.inner(&ones, &ones).unwrap() - 3.0 * PI / 4.0).abs() < 1e-15);
        let g = RadialGrid::uniform(&DomainSpec::ball(3, 1.0).unwrap(), 4).unwrap();
        for (i, (r, w)) in g.nodes.iter().zip(&g.weights).enumerate() {
            let expect = 0.2 * (i + 1) as f64;
            assert!((r - expect).abs() < 1e-15);
            assert!((w - expect * expect * 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_arithmetic() {
        let g = build_grid(&DomainSpec::ball(3, 1.0).unwrap(), 16).unwrap();
        assert!((g.h - 1.0 / 17.0).abs() < 1e-15);
        for (r, w) in g.nodes.iter().zip(&g.weights) {
            assert!((w - r * r * g.h).abs() < 1e-15);
        }
        let g = build_grid(&DomainSpec::annulus(2, 1.0, 2.0).unwrap(), 99).unwrap();
        assert_eq!(g.len(), 99);
        assert!((g.h - 0.01).abs() < 1e-15);
        assert!((g.nodes[0] - 1.01).abs() < 1e-14 && (g.nodes[98] - 1.99).abs() < 1e-14);
        for (r, w) in g.nodes.iter().zip(&g.weights) {
            assert!((w - r * 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn small_grids_and_bad_domains_rejected() {
        let d = DomainSpec::interval(0.0, PI).unwrap();
        assert_eq!(build_grid(&d, 15), Err(Error::TooFewPoints(15)));
        assert!(DomainSpec::interval(1.0, 1.0).is_err());
        assert!(DomainSpec::new(DomainKind::Interval, 2, 0.0, 1.0).is_err());
        assert!(DomainSpec::new(DomainKind::Ball, 3, 0.5, 1.0).is_err());
        assert!(DomainSpec::new(DomainKind::Ball, 4, 0.0, 1.0).is_err());
        assert!(DomainSpec::annulus(2, 0.0, 1.0).is_err());
    }

    #[test]
    fn dirichlet_laplacian_lowest_eigenvalue_matches_closed_form() {
        let op = interval_op(799, 0.0);
        let h = op.grid.h;
        let exact = 4.0 / (h * h) * (h / 2.0).sin().powi(2);
        let got = op.smallest_eigenvalue().unwrap();
        assert!((got - exact).abs() < 1e-12, "{got} vs {exact}");
        let shifted = interval_op(799, 1.0).smallest_eigenvalue().unwrap();
        assert!((shifted - (1.0 + exact)).abs() < 1e-12);
    }

    #[test]
    fn constant_potential_shifts_every_eigenvalue() {
        let p0 = interval_op(64, 0.0)
            .scalar_pencil(None, None)
            .lowest_eigenvalues(5, 1e-13);
        let p1 = interval_op(64, 1.0)
            .scalar_pencil(None, None)
            .lowest_eigenvalues(5, 1e-13);
        for (a, b) in p0.iter().zip(&p1) {
            assert!((b - a - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ball_stencil_annihilates_constants_in_the_interior() {
        let g = build_grid(&DomainSpec::ball(3, 1.0).unwrap(), 32).unwrap();
        let op = assemble_operator(&g, &PotentialSpec::Constant { value: 1.0 }).unwrap();
        let au = op.apply(&vec![1.0; 32]).unwrap();
        for v in &au[..31] {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn quadratic_form_agrees_with_apply() {
        for domain in [
            DomainSpec::interval(0.0, PI).unwrap(),
            DomainSpec::ball(2, 1.0).unwrap(),
            DomainSpec::ball(3, 1.0).unwrap(),
            DomainSpec::annulus(3, 1.0, 2.0).unwrap(),
        ] {
            let g = build_grid(&domain, 40).unwrap();
            let op =
                SchrodingerOperator::new_unchecked(&g, &PotentialSpec::Harmonic { scale: 0.5 });
            let u: Vec<f64> = g.nodes.iter().map(|r| (3.0 * r).cos() + r).collect();
            let v: Vec<f64> = g.nodes.iter().map(|r| (r * r).sin()).collect();
            let direct = g.inner(&op.apply(&u).unwrap(), &v).unwrap();
            let form = op.bilinear_form(&u, &v);
            assert!(
                (direct - form).abs() < 1e-9 * direct.abs().max(1.0),
                "{direct} vs {form}"
            );
            let q = op.quadratic_form(&u);
            assert!((q - g.inner(&op.apply(&u).unwrap(), &u).unwrap()).abs() < 1e-9 * q);
        }
    }

    #[test]
    fn nonpositive_operator_is_rejected() {
        let g = build_grid(&DomainSpec::interval(0.0, PI).unwrap(), 64).unwrap();
        let err = assemble_operator(&g, &PotentialSpec::Constant { value: -10.0 }).unwrap_err();
        assert!(matches!(err, Error::NonpositiveOperator(v) if v < 0.0));
        let spec = DomainSpec::truncated_space(3, 6.0).unwrap();
        let g = build_grid(&spec, 64).unwrap();
        assert!(assemble_operator(&g, &PotentialSpec::Constant { value: 1.0 }).is_err());
        assert!(assemble_operator(&g, &PotentialSpec::Harmonic { scale: 1.0 }).is_ok());
    }

    #[test]
    fn tabulated_potential_interpolates() {
        let p = PotentialSpec::Tabulated {
            radii: vec![0.0, 1.0, 2.0],
            values: vec![1.0, 3.0, 2.0],
        };
        p.validate().unwrap();
        assert_eq!(p.eval(0.5), 2.0);
        assert_eq!(p.eval(1.5), 2.5);
        assert_eq!(p.eval(5.0), 2.0);
        let bad = PotentialSpec::Tabulated {
            radii: vec![0.0, 1.0],
            values: vec![1.0, f64::NAN],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn weighted_inner_examples() {
        let g = build_grid(&DomainSpec::interval(0.0, PI).unwrap(), 16).unwrap();
        let ones = vec![1.0; 16];
        assert!((weighted_inner(&g, &ones, &ones).unwrap() - 16.0 * g.h).abs() < 1e-14);
        assert_eq!(weighted_inner(&g, &ones, &[0.0; 16]).unwrap(), 0.0);
        assert!(weighted_inner(&g, &ones, &[1.0]).is_err());
        let g = build_grid(&DomainSpec::interval(0.0, PI).unwrap(), 400).unwrap();
        let s: Vec<f64> = g.nodes.iter().map(|r| r.sin()).collect();
        assert!((g.inner(&s, &s).unwrap() - PI / 2.0).abs() < 1e-4);
    }
}
