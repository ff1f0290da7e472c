//! INI run configuration.
//!
//! ```ini
//! [domain]
//! ; interval | ball | annulus | truncated-space
//! kind = interval
//! dim = 1
//! r0 = 0
//! ; numbers, `pi` or `<number>*pi`
//! r1 = pi
//!
//! [potential]
//! ; constant (value) | harmonic (scale) | tabulated (radii, values)
//! kind = constant
//! value = 1
//!
//! [grid]
//! points = 800
//!
//! [coupling]
//! n = 2
//! mu = 1, 2
//!
//! [solver]
//! tol = 1e-11
//! max_iterations = 50
//! max_halvings = 30
//! eigenpairs = 6
//! zero_tol = 1e-7
//!
//! [continuation]
//! ds0 = 0.02
//! ds_min = 1e-6
//! ds_max = 0.2
//! newton_tol = 1e-9
//! max_newton = 12
//! max_steps = 40
//! beta_min = auto
//! beta_max = auto
//! eps = 0.01
//! morse_every = 0
//! locked_tol = 1e-7
//!
//! [output]
//! dir = out
//! ; any of json, csv, dat
//! formats = json, csv
//! ```
//!
//! Every key is optional; missing keys keep the defaults shown. Unknown
//! sections and keys are rejected.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use ini::Ini;
use lockbif::continuation::ContinuationOpts;
use lockbif::grid::{DomainKind, DomainSpec, PotentialSpec};
use lockbif::locked::CouplingSpec;
use lockbif::scalar::SolverOptions;
use serde::Serialize;

use crate::error::CliError;
use crate::output::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Dat,
}

impl Format {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "dat" => Ok(Self::Dat),
            other => Err(CliError::Config(format!("unknown output format `{other}`"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Dat => "dat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Weighted eigenpairs to compute.
    pub eigenpairs: usize,
    /// Relative threshold for counting a Hessian eigenvalue as zero.
    pub zero_tol: f64,
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iterations: self.max_iterations,
            max_halvings: self.max_halvings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub potential: PotentialSpec,
    pub points: usize,
    pub mu: Vec<f64>,
    pub solver: SolverSection,
    pub continuation: ContinuationOpts,
    pub output: OutputSection,
}

impl Default for RunConfig {
    /// `(0, π)`, `a ≡ 1`, 800 nodes, `μ = (1, 2)`.
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            domain: DomainSpec {
                kind: DomainKind::Interval,
                dim: 1,
                r_inner: 0.0,
                r_outer: PI,
            },
            potential: PotentialSpec::Constant { value: 1.0 },
            points: 800,
            mu: vec![1.0, 2.0],
            solver: SolverSection {
                tol: s.tol,
                max_iterations: s.max_iterations,
                max_halvings: s.max_halvings,
                eigenpairs: 6,
                zero_tol: 1e-7,
            },
            continuation: ContinuationOpts::default(),
            output: OutputSection {
                dir: PathBuf::from("out"),
                formats: vec![Format::Json, Format::Csv],
            },
        }
    }
}

type Section = BTreeMap<String, String>;

fn take(sec: &mut Section, key: &str) -> Option<String> {
    sec.remove(key)
}

fn bad(section: &str, key: &str, value: &str, what: &str) -> CliError {
    CliError::Config(format!("[{section}] {key} = {value}: {what}"))
}

/// Accepts plain numbers, `pi` and `<number>*pi`.
pub fn parse_f64(text: &str) -> Option<f64> {
    let t = text.trim();
    let value = if let Some(coef) = t.strip_suffix("pi") {
        let coef = coef.trim().trim_end_matches('*').trim();
        let c = match coef {
            "" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().ok()?,
        };
        c * PI
    } else {
        t.parse::<f64>().ok()?
    };
    value.is_finite().then_some(value)
}

fn get_f64(sec: &mut Section, name: &str, key: &str, slot: &mut f64) -> Result<(), CliError> {
    if let Some(v) = take(sec, key) {
        *slot = parse_f64(&v).ok_or_else(|| bad(name, key, &v, "not a finite number"))?;
    }
    Ok(())
}

fn get_usize(sec: &mut Section, name: &str, key: &str, slot: &mut usize) -> Result<(), CliError> {
    if let Some(v) = take(sec, key) {
        *slot = v
            .trim()
            .parse()
            .map_err(|_| bad(name, key, &v, "not a non-negative integer"))?;
    }
    Ok(())
}

fn get_list(sec: &mut Section, name: &str, key: &str) -> Result<Option<Vec<f64>>, CliError> {
    take(sec, key)
        .map(|v| {
            v.split(',')
                .map(|t| {
                    parse_f64(t).ok_or_else(|| bad(name, key, &v, "not a list of finite numbers"))
                })
                .collect()
        })
        .transpose()
}

fn finish(sec: Section, name: &str) -> Result<(), CliError> {
    match sec.keys().next() {
        Some(k) => Err(CliError::Config(format!("unknown key `{k}` in [{name}]"))),
        None => Ok(()),
    }
}

impl RunConfig {
    pub fn from_ini_str(text: &str) -> Result<Self, CliError> {
        let ini =
            Ini::load_from_str(text).map_err(|e| CliError::Config(format!("INI syntax: {e}")))?;
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        for (name, props) in ini.iter() {
            let entry = sections.entry(name.unwrap_or("").to_string()).or_default();
            for (k, v) in props.iter() {
                entry.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let mut cfg = RunConfig::default();
        if let Some(general) = sections.remove("") {
            finish(general, "top level")?;
        }

        let mut sec = sections.remove("domain").unwrap_or_default();
        if let Some(v) = take(&mut sec, "kind") {
            cfg.domain.kind = v
                .parse()
                .map_err(|_| bad("domain", "kind", &v, "unknown domain kind"))?;
            if cfg.domain.kind != DomainKind::Interval {
                cfg.domain.r_inner = 0.0;
            }
        }
        get_usize(&mut sec, "domain", "dim", &mut cfg.domain.dim)?;
        get_f64(&mut sec, "domain", "r0", &mut cfg.domain.r_inner)?;
        get_f64(&mut sec, "domain", "r1", &mut cfg.domain.r_outer)?;
        finish(sec, "domain")?;

        let mut sec = sections.remove("potential").unwrap_or_default();
        let kind = take(&mut sec, "kind").unwrap_or_else(|| "constant".into());
        cfg.potential = match kind.as_str() {
            "constant" => {
                let mut value = 1.0;
                get_f64(&mut sec, "potential", "value", &mut value)?;
                PotentialSpec::Constant { value }
            }
            "harmonic" => {
                let mut scale = f64::NAN;
                get_f64(&mut sec, "potential", "scale", &mut scale)?;
                if scale.is_nan() {
                    return Err(CliError::Config(
                        "[potential] harmonic needs `scale`".into(),
                    ));
                }
                PotentialSpec::Harmonic { scale }
            }
            "tabulated" => {
                let radii = get_list(&mut sec, "potential", "radii")?;
                let values = get_list(&mut sec, "potential", "values")?;
                match (radii, values) {
                    (Some(radii), Some(values)) => PotentialSpec::Tabulated { radii, values },
                    _ => {
                        return Err(CliError::Config(
                            "[potential] tabulated needs `radii` and `values`".into(),
                        ))
                    }
                }
            }
            other => {
                return Err(bad(
                    "potential",
                    "kind",
                    other,
                    "expected constant, harmonic or tabulated",
                ))
            }
        };
        finish(sec, "potential")?;

        let mut sec = sections.remove("grid").unwrap_or_default();
        get_usize(&mut sec, "grid", "points", &mut cfg.points)?;
        finish(sec, "grid")?;

        let mut sec = sections.remove("coupling").unwrap_or_default();
        let n = take(&mut sec, "n")
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| bad("coupling", "n", &v, "not an integer"))
            })
            .transpose()?;
        if let Some(mu) = get_list(&mut sec, "coupling", "mu")? {
            cfg.mu = mu;
        }
        if let Some(n) = n {
            if n != cfg.mu.len() {
                return Err(CliError::Config(format!(
                    "[coupling] n = {n} but mu has {} entries",
                    cfg.mu.len()
                )));
            }
        }
        finish(sec, "coupling")?;

        let mut sec = sections.remove("solver").unwrap_or_default();
        let s = &mut cfg.solver;
        get_f64(&mut sec, "solver", "tol", &mut s.tol)?;
        get_usize(&mut sec, "solver", "max_iterations", &mut s.max_iterations)?;
        get_usize(&mut sec, "solver", "max_halvings", &mut s.max_halvings)?;
        get_usize(&mut sec, "solver", "eigenpairs", &mut s.eigenpairs)?;
        get_f64(&mut sec, "solver", "zero_tol", &mut s.zero_tol)?;
        finish(sec, "solver")?;

        let mut sec = sections.remove("continuation").unwrap_or_default();
        let c = &mut cfg.continuation;
        get_f64(&mut sec, "continuation", "ds0", &mut c.ds0)?;
        get_f64(&mut sec, "continuation", "ds_min", &mut c.ds_min)?;
        get_f64(&mut sec, "continuation", "ds_max", &mut c.ds_max)?;
        get_f64(&mut sec, "continuation", "newton_tol", &mut c.newton_tol)?;
        get_usize(&mut sec, "continuation", "max_newton", &mut c.max_newton)?;
        get_usize(&mut sec, "continuation", "max_steps", &mut c.max_steps)?;
        for (key, slot) in [("beta_min", &mut c.beta_min), ("beta_max", &mut c.beta_max)] {
            if let Some(v) = take(&mut sec, key) {
                *slot = match v.as_str() {
                    "auto" => None,
                    t => Some(
                        parse_f64(t)
                            .ok_or_else(|| bad("continuation", key, t, "number or `auto`"))?,
                    ),
                };
            }
        }
        get_f64(&mut sec, "continuation", "eps", &mut c.eps)?;
        get_usize(&mut sec, "continuation", "morse_every", &mut c.morse_every)?;
        get_f64(&mut sec, "continuation", "locked_tol", &mut c.locked_tol)?;
        finish(sec, "continuation")?;

        let mut sec = sections.remove("output").unwrap_or_default();
        if let Some(v) = take(&mut sec, "dir") {
            cfg.output.dir = PathBuf::from(v);
        }
        if let Some(v) = take(&mut sec, "formats") {
            let mut formats = v
                .split(',')
                .map(|t| Format::parse(t.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            formats.sort();
            formats.dedup();
            cfg.output.formats = formats;
        }
        finish(sec, "output")?;

        if let Some(name) = sections.keys().next() {
            return Err(CliError::Config(format!("unknown section [{name}]")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks.
    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Config(m));
        self.domain.validate()?;
        self.potential.validate()?;
        if self.domain.kind == DomainKind::TruncatedSpace && !self.potential.is_unbounded() {
            return err(
                "truncated-space requires a potential unbounded at infinity (harmonic)".into(),
            );
        }
        self.coupling()?;
        if !(self.solver.tol > 0.0) || !(self.solver.zero_tol > 0.0) {
            return err("[solver] tolerances must be positive".into());
        }
        if self.solver.max_iterations == 0 {
            return err("[solver] max_iterations must be positive".into());
        }
        if self.solver.eigenpairs < 2 {
            return err("[solver] eigenpairs must be at least 2".into());
        }
        self.continuation.validate()?;
        if self.output.formats.is_empty() {
            return err("[output] formats must not be empty".into());
        }
        Ok(())
    }

    pub fn coupling(&self) -> Result<CouplingSpec, CliError> {
        Ok(CouplingSpec::new(self.mu.clone())?)
    }

    /// Resolved configuration in the INI syntax it was read from.
    pub fn to_ini(&self) -> String {
        let f = |x: f64| fmt_f64(x);
        let list = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let d = &self.domain;
        let _ = writeln!(
            s,
            "[domain]\nkind = {}\ndim = {}\nr0 = {}\nr1 = {}\n",
            d.kind,
            d.dim,
            f(d.r_inner),
            f(d.r_outer)
        );
        let _ = match &self.potential {
            PotentialSpec::Constant { value } => {
                writeln!(s, "[potential]\nkind = constant\nvalue = {}\n", f(*value))
            }
            PotentialSpec::Harmonic { scale } => {
                writeln!(s, "[potential]\nkind = harmonic\nscale = {}\n", f(*scale))
            }
            PotentialSpec::Tabulated { radii, values } => {
                writeln!(
                    s,
                    "[potential]\nkind = tabulated\nradii = {}\nvalues = {}\n",
                    list(radii),
                    list(values)
                )
            }
        };
        let _ = writeln!(s, "[grid]\npoints = {}\n", self.points);
        let _ = writeln!(
            s,
            "[coupling]\nn = {}\nmu = {}\n",
            self.mu.len(),
            list(&self.mu)
        );
        let v = &self.solver;
        let _ = writeln!(
            s,
            "[solver]\ntol = {}\nmax_iterations = {}\nmax_halvings = {}\neigenpairs = {}\nzero_tol = {}\n",
            f(v.tol),
            v.max_iterations,
            v.max_halvings,
            v.eigenpairs,
            f(v.zero_tol)
        );
        let c = &self.continuation;
        let opt = |x: Option<f64>| x.map_or_else(|| "auto".to_string(), fmt_f64);
        let _ = writeln!(
            s,
            "[continuation]\nds0 = {}\nds_min = {}\nds_max = {}\nnewton_tol = {}\nmax_newton = {}\nmax_steps = {}\nbeta_min = {}\nbeta_max = {}\neps = {}\nmorse_every = {}\nlocked_tol = {}\n",
            f(c.ds0),
            f(c.ds_min),
            f(c.ds_max),
            f(c.newton_tol),
            c.max_newton,
            c.max_steps,
            opt(c.beta_min),
            opt(c.beta_max),
            f(c.eps),
            c.morse_every,
            f(c.locked_tol)
        );
        let formats: Vec<&str> = self.output.formats.iter().map(|x| x.name()).collect();
        let _ = write!(
            s,
            "[output]\ndir = {}\nformats = {}\n",
            self.output.dir.display(),
            formats.join(", ")
        );
        s
    }
}
