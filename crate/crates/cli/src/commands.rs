use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use lockbif::continuation::{
    branch_separation, branch_switch_predictor, continue_branch, extrapolate_origin,
    plan_bifurcations, sample_locked_branch, Branch, ContinuationOpts, PlannedBifurcation,
};
use lockbif::grid::{assemble_operator, build_grid, SchrodingerOperator};
use lockbif::locked::{
    beta_bar, bifurcation_points, eval_f, gammas_alphas, locked_solution, CouplingSpec,
    LockedBranchAlgebra,
};
use lockbif::partition::{detect_partition, Partition, DETECT_TOL};
use lockbif::scalar::{
    solve_ground_state, weighted_spectrum, GroundState, WeightedSpectrum, DEFAULT_CLUSTER_TOL,
};
use lockbif::system::{hessian_spectrum, morse_index_formula};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::output::{document, fmt_f64, Sink};
use crate::verify;

const AFTER_HELP: &str = "\
Output files (under --out, default [output] dir):
  ground-state  ground_state.json, ground_state.csv   columns: r, w
  spectrum      spectrum.json, spectrum.csv           columns: k, lambda, n_k
  bifpoints     bifpoints.json, bifpoints.csv         columns: k, lambda, n_k, beta_k, kernel_dim
  locked        locked.json, locked.csv               columns: beta, s, residual, min_u, morse_index, alpha_1..alpha_n
  morse-scan    morse_scan.json, morse_scan.csv       columns: beta, direct, formula, kernel_dim, agree
  continue      branch_k<k>_<partition>_<dir>.{json,csv,dat}
  sweep         one branch file set per job, plus sweep.json
  verify        verify.json
Branch CSV columns: index, beta, s, residual, min_u, dist_locked, morse_index, detected_partition.
Partitions are written `1|2,3` (1-based); file names use `1_2-3`.
Floats carry 17 significant digits. CSV and .dat files begin with the
resolved configuration as `#` comment lines; JSON documents hold it under
`config` next to `schema: 1`.

Exit codes: 0 success, 2 solver failure, 3 invalid configuration,
4 degenerate ground state, 5 failed invariant in verify.";

#[derive(Parser, Debug)]
#[command(name = "lockbif", version, about = "Locked and partially locked states of coupled cubic Schrodinger systems", after_help = AFTER_HELP)]
pub struct Cli {
    /// INI configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dir {
    #[value(name = "+", alias = "plus")]
    Plus,
    #[value(name = "-", alias = "minus")]
    Minus,
    #[value(name = "both")]
    Both,
}

impl Dir {
    fn signs(self) -> Vec<i8> {
        match self {
            Dir::Plus => vec![1],
            Dir::Minus => vec![-1],
            Dir::Both => vec![1, -1],
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve for the scalar ground state w.
    GroundState,
    /// Weighted eigenvalues of the linearization at w.
    Spectrum,
    /// Parameters where the locked branch can bifurcate.
    Bifpoints,
    /// Sample the locked branch with its Morse index.
    Locked {
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Compare direct Hessian inertia with the closed-form Morse index.
    MorseScan {
        #[arg(long, default_value_t = 40)]
        samples: usize,
    },
    /// Continue one branch from a bifurcation point.
    Continue {
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Two-block partition such as `1|2,3`; the first one listed by default.
        #[arg(long)]
        partition: Option<String>,
        #[arg(long, value_enum, default_value = "+")]
        dir: Dir,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Continue every planned branch, in parallel.
    Sweep {
        /// Restrict to one bifurcation point.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum, default_value = "+")]
        dir: Dir,
        #[arg(long)]
        eps: Option<f64>,
        /// Worker threads (default: logical cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the invariant suite and report pass/fail per check.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GroundState => "ground-state",
            Command::Spectrum => "spectrum",
            Command::Bifpoints => "bifpoints",
            Command::Locked { .. } => "locked",
            Command::MorseScan { .. } => "morse-scan",
            Command::Continue { .. } => "continue",
            Command::Sweep { .. } => "sweep",
            Command::Verify => "verify",
        }
    }
}

/// Everything downstream of the configuration.
pub struct Problem {
    pub config: RunConfig,
    pub coupling: CouplingSpec,
    pub op: SchrodingerOperator,
    pub ground: GroundState,
    pub spectrum: WeightedSpectrum,
}

impl Problem {
    fn ground_only(config: &RunConfig) -> Result<(SchrodingerOperator, GroundState), CliError> {
        let grid = build_grid(&config.domain, config.points)?;
        let op = assemble_operator(&grid, &config.potential)?;
        let ground = solve_ground_state(&op, &config.solver.options())?;
        Ok((op, ground))
    }

    pub fn new(config: &RunConfig) -> Result<Self, CliError> {
        let coupling = config.coupling()?;
        let (op, mut ground) = Self::ground_only(config)?;
        let spectrum = weighted_spectrum(
            &op,
            &mut ground,
            config.solver.eigenpairs,
            DEFAULT_CLUSTER_TOL,
        )?;
        Ok(Self {
            config: config.clone(),
            coupling,
            op,
            ground,
            spectrum,
        })
    }

    pub fn plan(&self) -> lockbif::Result<Vec<PlannedBifurcation>> {
        plan_bifurcations(&self.coupling, &self.spectrum)
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            RunConfig::from_ini_str(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

fn emit(
    sink: &mut Sink,
    cfg: &RunConfig,
    stem: &str,
    doc: serde_json::Map<String, Value>,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    if cfg.output.wants(Format::Json) {
        sink.json(&format!("{stem}.json"), doc)?;
    }
    if cfg.output.wants(Format::Csv) {
        sink.csv(&format!("{stem}.csv"), header, rows)?;
    }
    if cfg.output.wants(Format::Dat) {
        sink.dat(&format!("{stem}.dat"), header, rows)?;
    }
    Ok(())
}

/// Executes `cli`, writing artifacts and a short report on stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let mut sink = Sink::new(&cfg.output.dir, &cfg)?;
    let result = dispatch(cli, &cfg, &mut sink);
    for path in &sink.written {
        println!("wrote {}", path.display());
    }
    result
}

fn dispatch(cli: &Cli, cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let name = cli.command.name();
    let mut doc = document(name, cfg);
    match &cli.command {
        Command::GroundState => {
            let (op, ground) = Problem::ground_only(cfg)?;
            let g = &op.grid;
            doc.insert("residual_norm".into(), json!(ground.residual_norm));
            doc.insert("iterations".into(), json!(ground.iterations));
            doc.insert(
                "max_w".into(),
                json!(ground.w.iter().fold(0.0_f64, |m, v| m.max(*v))),
            );
            doc.insert("norm_w".into(), json!(g.norm(&ground.w)));
            doc.insert(
                "tail_mass_fraction".into(),
                json!(g.tail_mass_fraction(&ground.w)),
            );
            doc.insert("r".into(), json!(g.nodes));
            doc.insert("w".into(), json!(ground.w));
            println!(
                "ground state: residual {:.3e} after {} iterations",
                ground.residual_norm, ground.iterations
            );
            let rows: Vec<Vec<String>> = g
                .nodes
                .iter()
                .zip(&ground.w)
                .map(|(r, w)| vec![f(*r), f(*w)])
                .collect();
            emit(sink, cfg, "ground_state", doc, &["r", "w"], &rows)
        }
        Command::Spectrum => {
            let p = Problem::new(cfg)?;
            let sp = &p.spectrum;
            let rows: Vec<Vec<String>> = (1..=sp.len())
                .map(|k| {
                    vec![
                        k.to_string(),
                        f(sp.lambda(k)),
                        sp.multiplicity(k).to_string(),
                    ]
                })
                .collect();
            doc.insert("nondegenerate".into(), json!(sp.nondegenerate));
            doc.insert(
                "degenerate_at".into(),
                json!(sp.degenerate_at.map(|(k, l)| json!({"k": k, "lambda": l}))),
            );
            doc.insert(
                "eigenvalues".into(),
                json!((1..=sp.len())
                    .map(|k| json!({"k": k, "lambda": sp.lambda(k), "n_k": sp.multiplicity(k)}))
                    .collect::<Vec<_>>()),
            );
            for r in &rows {
                println!("k = {:>2}  lambda = {}  n_k = {}", r[0], r[1], r[2]);
            }
            emit(sink, cfg, "spectrum", doc, &["k", "lambda", "n_k"], &rows)?;
            sp.require_nondegenerate()?;
            Ok(())
        }
        Command::Bifpoints => {
            let p = Problem::new(cfg)?;
            let points = bifurcation_points(&p.coupling, &p.spectrum)?;
            doc.insert("beta_bar".into(), json!(beta_bar(&p.coupling)));
            doc.insert("mu_min".into(), json!(p.coupling.mu_min()));
            let mut list = Vec::new();
            let mut rows = Vec::new();
            for b in &points {
                let fb = eval_f(&p.coupling, b.beta)?;
                list.push(json!({"k": b.k, "lambda": b.lambda, "n_k": b.multiplicity, "beta_k": b.beta, "kernel_dim": b.kernel_dim, "f_beta_k": fb}));
                rows.push(vec![
                    b.k.to_string(),
                    f(b.lambda),
                    b.multiplicity.to_string(),
                    f(b.beta),
                    b.kernel_dim.to_string(),
                ]);
                println!(
                    "k = {:>2}  beta_k = {:+.10}  kernel dim = {}",
                    b.k, b.beta, b.kernel_dim
                );
            }
            doc.insert("points".into(), json!(list));
            emit(
                sink,
                cfg,
                "bifpoints",
                doc,
                &["k", "lambda", "n_k", "beta_k", "kernel_dim"],
                &rows,
            )
        }
        Command::Locked { from, to, samples } => {
            let p = Problem::new(cfg)?;
            p.spectrum.require_nondegenerate()?;
            let (lo, hi) = cfg.continuation.beta_bounds(&p.coupling);
            let (from, to) = (from.unwrap_or(lo), to.unwrap_or(hi));
            let alg = LockedBranchAlgebra::new(p.coupling.clone());
            for b in [from, to] {
                if !alg.admissible(b) {
                    return Err(CliError::Config(format!(
                        "beta = {b} is outside the locked branch"
                    )));
                }
            }
            let branch = sample_locked_branch(
                &p.ground,
                &p.coupling,
                &p.op,
                Some(&p.spectrum),
                from,
                to,
                *samples,
            )?;
            let n = p.coupling.n();
            let mut header: Vec<String> = ["beta", "s", "residual", "min_u", "morse_index"]
                .map(String::from)
                .to_vec();
            header.extend((1..=n).map(|j| format!("alpha_{j}")));
            let mut rows = Vec::new();
            let mut pts = Vec::new();
            for q in &branch.points {
                let alpha = gammas_alphas(&p.coupling, q.beta)?.alpha;
                let mut row = vec![
                    f(q.beta),
                    f(q.s),
                    f(q.residual),
                    f(q.min_u),
                    q.morse_index.map_or(String::new(), |m| m.to_string()),
                ];
                row.extend(alpha.iter().map(|a| f(*a)));
                rows.push(row);
                pts.push(json!({"beta": q.beta, "s": q.s, "residual": q.residual, "min_u": q.min_u, "morse_index": q.morse_index, "alpha": alpha}));
            }
            let worst = branch.points.iter().map(|q| q.residual).fold(0.0, f64::max);
            println!(
                "{} samples on [{from}, {to}], max residual {worst:.3e}",
                branch.points.len()
            );
            doc.insert("max_residual".into(), json!(worst));
            doc.insert("points".into(), json!(pts));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            emit(sink, cfg, "locked", doc, &header, &rows)
        }
        Command::MorseScan { samples } => {
            let p = Problem::new(cfg)?;
            p.spectrum.require_nondegenerate()?;
            if *samples < 2 {
                return Err(CliError::Config("--samples must be at least 2".into()));
            }
            let (lo, hi) = cfg.continuation.beta_bounds(&p.coupling);
            let mut rows = Vec::new();
            let mut pts = Vec::new();
            let mut mismatches = 0;
            for i in 0..*samples {
                let beta = lo + (hi - lo) * i as f64 / (*samples - 1) as f64;
                let state = locked_solution(&p.ground, &p.coupling, beta)?;
                let direct = hessian_spectrum(&state, &p.coupling, &p.op, 4, cfg.solver.zero_tol)?;
                let formula = morse_index_formula(&p.coupling, beta, &p.spectrum).ok();
                let agree = formula.map(|m| m == direct.morse_index && direct.kernel_dim == 0);
                if agree == Some(false) {
                    mismatches += 1;
                }
                rows.push(vec![
                    f(beta),
                    direct.morse_index.to_string(),
                    formula.map_or(String::new(), |m| m.to_string()),
                    direct.kernel_dim.to_string(),
                    agree.map_or(String::new(), |a| a.to_string()),
                ]);
                pts.push(json!({"beta": beta, "direct": direct.morse_index, "formula": formula, "kernel_dim": direct.kernel_dim, "agree": agree}));
            }
            println!("{samples} samples on [{lo}, {hi}], {mismatches} mismatch(es)");
            doc.insert("mismatches".into(), json!(mismatches));
            doc.insert("points".into(), json!(pts));
            emit(
                sink,
                cfg,
                "morse_scan",
                doc,
                &["beta", "direct", "formula", "kernel_dim", "agree"],
                &rows,
            )
        }
        Command::Continue {
            k,
            partition,
            dir,
            eps,
        } => {
            let p = Problem::new(cfg)?;
            let plan = p.plan()?;
            let planned = plan
                .iter()
                .find(|q| q.point.k == *k)
                .ok_or_else(|| CliError::Config(format!("no bifurcation point with k = {k}")))?;
            let part = match partition {
                Some(text) => Partition::parse(text, p.coupling.n())?,
                None => planned.partitions[0].clone(),
            };
            let sign = match dir {
                Dir::Plus => 1,
                Dir::Minus => -1,
                Dir::Both => return Err(CliError::Config("continue takes --dir + or -".into())),
            };
            let opts = with_eps(&cfg.continuation, *eps)?;
            let branch = run_branch(&p, planned, &part, sign, &opts)?;
            report_branch(&branch);
            write_branch(sink, cfg, &p, &branch, &opts)
        }
        Command::Sweep { k, dir, eps, jobs } => {
            let p = Problem::new(cfg)?;
            let plan: Vec<PlannedBifurcation> = p
                .plan()?
                .into_iter()
                .filter(|q| k.is_none_or(|k| q.point.k == k))
                .collect();
            if plan.is_empty() {
                return Err(CliError::Config(format!(
                    "no bifurcation point with k = {}",
                    k.unwrap_or(0)
                )));
            }
            let opts = with_eps(&cfg.continuation, *eps)?;
            let tasks: Vec<(&PlannedBifurcation, &Partition, i8)> = plan
                .iter()
                .flat_map(|q| {
                    q.partitions
                        .iter()
                        .flat_map(move |part| dir.signs().into_iter().map(move |s| (q, part, s)))
                })
                .collect();
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(j) = jobs {
                if *j == 0 {
                    return Err(CliError::Config("--jobs must be positive".into()));
                }
                builder = builder.num_threads(*j);
            }
            let pool = builder
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            let results: Vec<Result<Branch, CliError>> = pool.install(|| {
                tasks
                    .par_iter()
                    .map(|(q, part, s)| run_branch(&p, q, part, *s, &opts))
                    .collect()
            });
            let mut entries = Vec::new();
            let mut failed = 0;
            let mut done: Vec<&Branch> = Vec::new();
            for ((q, part, s), res) in tasks.iter().zip(&results) {
                match res {
                    Ok(b) => {
                        report_branch(b);
                        write_branch(sink, cfg, &p, b, &opts)?;
                        entries.push(json!({"k": q.point.k, "partition": part.to_string(), "direction": s, "file": branch_stem(b), "termination": b.termination.to_string(), "points": b.points.len()}));
                        done.push(b);
                    }
                    Err(e) => {
                        failed += 1;
                        println!("k = {} {} dir {:+}: failed: {e}", q.point.k, part, s);
                        entries.push(json!({"k": q.point.k, "partition": part.to_string(), "direction": s, "error": e.to_string()}));
                    }
                }
            }
            let mut seps = Vec::new();
            for (i, a) in done.iter().enumerate() {
                for b in &done[i + 1..] {
                    if a.origin.map(|o| o.k) == b.origin.map(|o| o.k) {
                        let s = branch_separation(a, b, &p.op.grid);
                        seps.push(json!({"k": a.origin.map(|o| o.k), "a": format!("{}{:+}", a.partition, a.direction), "b": format!("{}{:+}", b.partition, b.direction), "separation": s}));
                    }
                }
            }
            doc.insert(
                "continuation".into(),
                serde_json::to_value(&opts).expect("options serialize"),
            );
            doc.insert("branches".into(), json!(entries));
            doc.insert("separations".into(), json!(seps));
            if cfg.output.wants(Format::Json) {
                sink.json("sweep.json", doc)?;
            }
            if failed > 0 {
                return Err(CliError::Sweep {
                    failed,
                    total: tasks.len(),
                });
            }
            Ok(())
        }
        Command::Verify => {
            let p = Problem::new(cfg)?;
            p.spectrum.require_nondegenerate()?;
            let checks = verify::run_checks(&p);
            let failed = checks.iter().filter(|c| !c.pass).count();
            for c in &checks {
                println!(
                    "{} {:<24} {:>12.3e} {:<2} {:<10.3e} {}",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.relation,
                    c.threshold,
                    c.detail
                );
            }
            doc.insert("passed".into(), json!(failed == 0));
            doc.insert(
                "checks".into(),
                serde_json::to_value(&checks).expect("checks serialize"),
            );
            sink.json("verify.json", doc)?;
            if failed > 0 {
                return Err(CliError::Verify { failed });
            }
            Ok(())
        }
    }
}

fn with_eps(base: &ContinuationOpts, eps: Option<f64>) -> Result<ContinuationOpts, CliError> {
    let mut opts = base.clone();
    if let Some(e) = eps {
        opts.eps = e;
    }
    opts.validate()?;
    Ok(opts)
}

pub(crate) fn run_branch(
    p: &Problem,
    planned: &PlannedBifurcation,
    part: &Partition,
    sign: i8,
    opts: &ContinuationOpts,
) -> Result<Branch, CliError> {
    let k = planned.point.k;
    let pred = branch_switch_predictor(
        part,
        &p.coupling,
        &p.ground,
        &p.op.grid,
        &planned.point,
        p.spectrum.basis(k),
        opts.eps,
        sign,
    )?;
    Ok(continue_branch(
        &pred,
        part,
        &p.coupling,
        &p.op,
        &p.ground,
        opts,
    )?)
}

fn branch_stem(b: &Branch) -> String {
    let k = b.origin.map_or(0, |o| o.k);
    let part = b.partition.to_string().replace('|', "_").replace(',', "-");
    let dir = if b.direction < 0 { "minus" } else { "plus" };
    format!("branch_k{k}_{part}_{dir}")
}

fn report_branch(b: &Branch) {
    let last = b.points.last().map_or(f64::NAN, |q| q.beta);
    println!(
        "k = {} {} dir {:+}: {} points, beta {:.6} -> {:.6}, {}",
        b.origin.map_or(0, |o| o.k),
        b.partition,
        b.direction,
        b.points.len(),
        b.points.first().map_or(f64::NAN, |q| q.beta),
        last,
        b.termination
    );
}

fn write_branch(
    sink: &mut Sink,
    cfg: &RunConfig,
    p: &Problem,
    b: &Branch,
    opts: &ContinuationOpts,
) -> Result<(), CliError> {
    let mut doc = document("continue", cfg);
    let origin = b
        .origin
        .map(|o| json!({"k": o.k, "beta_k": o.beta, "lambda_k": o.lambda, "n_k": o.multiplicity}));
    doc.insert("origin".into(), json!(origin));
    doc.insert("partition".into(), json!(b.partition.to_string()));
    doc.insert("direction".into(), json!(b.direction));
    doc.insert(
        "opts".into(),
        serde_json::to_value(opts).expect("options serialize"),
    );
    doc.insert("ambiguous".into(), json!(b.ambiguous));
    doc.insert("termination".into(), json!(b.termination.to_string()));
    doc.insert("extrapolated_origin".into(), json!(extrapolate_origin(b)));
    let mut rows = Vec::new();
    let mut pts = Vec::new();
    for (i, q) in b.points.iter().enumerate() {
        let detected = detect_partition(&q.u, &p.op.grid, DETECT_TOL)
            .map(|d| d.to_string())
            .unwrap_or_default();
        rows.push(vec![
            i.to_string(),
            f(q.beta),
            f(q.s),
            f(q.residual),
            f(q.min_u),
            f(q.dist_locked),
            q.morse_index.map_or(String::new(), |m| m.to_string()),
            detected.clone(),
        ]);
        pts.push(json!({"beta": q.beta, "s": q.s, "residual": q.residual, "min_u": q.min_u, "dist_locked": q.dist_locked, "morse_index": q.morse_index, "detected_partition": detected}));
    }
    doc.insert("points".into(), json!(pts));
    let header = [
        "index",
        "beta",
        "s",
        "residual",
        "min_u",
        "dist_locked",
        "morse_index",
        "detected_partition",
    ];
    let stem = branch_stem(b);
    if cfg.output.wants(Format::Json) {
        sink.json(&format!("{stem}.json"), doc)?;
    }
    if cfg.output.wants(Format::Csv) {
        sink.csv(&format!("{stem}.csv"), &header, &rows)?;
    }
    if cfg.output.wants(Format::Dat) {
        // gnuplot-friendly: numeric columns only
        let dat: Vec<Vec<String>> = rows.iter().map(|r| r[..6].to_vec()).collect();
        sink.dat(&format!("{stem}.dat"), &header[..6], &dat)?;
    }
    Ok(())
}
