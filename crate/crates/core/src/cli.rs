//! Batch front-end: `growth`, `verify`, `average` and `export` subcommands.
//!
//! Exit codes: 0 when everything ran and every check passed, 1 when a check
//! failed, 2 on bad input (flags, files, parameters).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use crate::algebra::{
    derive_seed, gns_norm2, identity, load_action, load_matrix, max_eigenvalue, operator_norm,
    random_hermitian, random_positive, save_action, save_matrix, state_value, ActionAssignment,
    AlgebraState, Observable,
};
use crate::automaton::{
    build_for_family, count_to_f64, load_automaton, path_count_series, save_automaton,
    verify_strong_markov, MarkovAutomaton,
};
use crate::averages::{cesaro_ladder, cesaro_weights, convergence_diagnostics, STATE_REL_TOL};
use crate::covering::{CoveringOperator, D1_MAX_POWER};
use crate::error::{Error, Result};
use crate::spectral::{
    growth_constants_with, growth_rate_with, noncontributing_path_counts, perron_data,
    scc_decompose, verify_single_crossing, MAX_COUNT_N, PERRON_RESIDUAL_TOL,
};
use crate::words::{Family, GroupOracle};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Tolerance on `|sum_j R(i,j) - 1|`.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "markov-ergodic",
    version,
    about = "Growth, covering-operator checks and Cesaro spherical averages for strongly Markov groups"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sphere counts N(n), the growth rate and the growth constants.
    Growth(GrowthArgs),
    /// Automaton, spectral and covering-operator checks.
    Verify(VerifyArgs),
    /// Cesaro averages of an observable under a group action.
    Average(AverageArgs),
    /// Write the automaton and a seeded action as JSON files.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GroupArgs {
    /// Built-in group: free:K, abelian:N, freeprod:M1,M2,... (also F2, Z, Z^N).
    #[arg(long)]
    pub group: Option<Family>,
    /// Automaton JSON file; overrides the built-in automaton of --group.
    #[arg(long)]
    pub automaton: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GrowthArgs {
    #[command(flatten)]
    pub source: GroupArgs,
    #[arg(long = "n-max", default_value_t = 30)]
    pub n_max: usize,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: GroupArgs,
    /// Radius of the exhaustive strong-Markov check.
    #[arg(long, default_value_t = 6)]
    pub radius: usize,
    /// Tolerance on the relative deviation of the block power identity.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Seed of the action and tuple used for the block power identity.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Recipe {
    /// Random state-preserving unitaries compatible with the group relations.
    Seeded,
    /// Every generator acts as the identity.
    Trivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObservableKind {
    Identity,
    RandomHermitian,
    RandomPositive,
}

#[derive(Debug, Clone, Args)]
pub struct ActionArgs {
    /// Action JSON file (state and one unitary per generator).
    #[arg(long)]
    pub action: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Matrix size when the action is generated.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, value_enum, default_value_t = Recipe::Seeded)]
    pub recipe: Recipe,
    /// Diagonal state weights, comma separated; tracial when omitted.
    #[arg(long = "state-weights", value_delimiter = ',')]
    pub state_weights: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct AverageArgs {
    #[command(flatten)]
    pub source: GroupArgs,
    #[command(flatten)]
    pub action: ActionArgs,
    #[arg(long, value_enum, default_value_t = ObservableKind::RandomHermitian)]
    pub observable: ObservableKind,
    /// Matrix JSON file for the observable; overrides --observable.
    #[arg(long = "observable-file")]
    pub observable_file: Option<PathBuf>,
    #[arg(long = "N-max", default_value_t = 64)]
    pub big_n_max: usize,
    /// Relative tolerance of the state functional identity.
    #[arg(long, default_value_t = STATE_REL_TOL)]
    pub tol: f64,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub source: GroupArgs,
    #[command(flatten)]
    pub action: ActionArgs,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

/// Result of a command that ran to completion.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
    /// Text printed to standard output.
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Convergence { .. } | Error::Invariant(_) => EXIT_CHECK_FAILED,
        Error::Input(_) | Error::Resource(_) | Error::Parse { .. } | Error::Io { .. } => EXIT_INPUT,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Growth(a) => cmd_growth(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Average(a) => cmd_average(a),
        Command::Export(a) => cmd_export(a),
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

struct Source {
    automaton: MarkovAutomaton,
    oracle: Option<GroupOracle>,
    label: String,
}

fn load_source(args: &GroupArgs) -> Result<Source> {
    let oracle = args.group.clone().map(GroupOracle::new).transpose()?;
    let (automaton, label) = match (&args.automaton, &oracle) {
        (Some(path), _) => (load_automaton(path)?, path.display().to_string()),
        (None, Some(o)) => (build_for_family(o.family())?, o.family().to_string()),
        (None, None) => return Err(Error::input("either --group or --automaton is required")),
    };
    if let Some(o) = &oracle {
        if o.table() != automaton.generators() {
            return Err(Error::input(format!(
                "automaton generators {:?} do not match group {}",
                automaton.generators().names(),
                o.family()
            )));
        }
    }
    Ok(Source {
        automaton,
        oracle,
        label,
    })
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn require_positive_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!(
            "tolerance must be positive, got {tol}"
        )))
    }
}

pub fn cmd_growth(args: &GrowthArgs) -> Result<Outcome> {
    if args.n_max == 0 || args.n_max > MAX_COUNT_N {
        return Err(Error::input(format!(
            "--n-max must be in 1..={MAX_COUNT_N}"
        )));
    }
    let src = load_source(&args.source)?;
    let d = scc_decompose(&src.automaton.transition_matrix());
    let report = growth_rate_with(&src.automaton, &d)?;
    let (c1, c2) = growth_constants_with(&src.automaton, report.rho, args.n_max)?;
    let counts = path_count_series(&src.automaton, args.n_max);

    let mut csv = format!(
        "# growth group={} seed=none n_max={}\n",
        src.label, args.n_max
    );
    csv.push_str("n,N(n),N(n)/rho^n\n");
    for (n, c) in counts.iter().enumerate() {
        let ratio = count_to_f64(c) / report.rho.powi(n as i32);
        let _ = writeln!(csv, "{n},{c},{}", fmt_float(ratio));
    }
    let summary = format!(
        "rho={} C1={} C2={} rho1={} contributing={}\n",
        fmt_float(report.rho),
        fmt_float(c1),
        fmt_float(c2),
        fmt_float(report.rho1),
        report.contributing.len()
    );
    let _ = write!(csv, "# summary {summary}");

    prepare_dir(&args.out_dir)?;
    let path = args.out_dir.join("growth.csv");
    write_text(&path, &csv)?;
    Ok(Outcome {
        passed: true,
        files: vec![path],
        summary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIPPED",
        })
    }
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Outcome> {
    require_positive_tol(args.tol)?;
    let src = load_source(&args.source)?;
    let a = &src.automaton;
    let mut lines: Vec<(Status, String, String)> = Vec::new();
    let mut push =
        |s: Status, name: &str, detail: String| lines.push((s, name.to_string(), detail));

    push(
        Status::Pass,
        "automaton",
        format!(
            "{} vertices, {} edges, origin {} without incoming edges",
            a.vertex_count(),
            a.edges().len(),
            a.vertex_name(a.origin())
        ),
    );

    match &src.oracle {
        Some(o) => {
            let r = verify_strong_markov(a, o, args.radius)?;
            let detail = match &r.counterexample {
                Some(c) => format!("radius {}: {c}", r.radius),
                None => format!("radius {}: geodesic, injective, surjective", r.radius),
            };
            push(status(r.passed()), "strong-markov", detail);
        }
        None => push(
            Status::Skipped,
            "strong-markov",
            "no group oracle (pass --group)".into(),
        ),
    }

    let d = scc_decompose(&a.transition_matrix());
    let report = growth_rate_with(a, &d)?;
    let reassembled = d.reassemble() == *d.matrix() && d.is_block_lower_triangular();
    push(
        status(reassembled),
        "block-decomposition",
        format!(
            "{} blocks, block lower triangular, exact reassembly",
            d.block_count()
        ),
    );

    push(
        status(!report.contributing.is_empty()),
        "contributing-blocks",
        format!(
            "rho={} rho1={} contributing={:?} count estimate {}",
            fmt_float(report.rho),
            fmt_float(report.rho1),
            report.contributing,
            fmt_float(report.count_estimate)
        ),
    );

    let crossing = verify_single_crossing(&d, &report.contributing);
    let detail = match &crossing.witness {
        Some(w) => {
            let names: Vec<&str> = w.iter().map(|&v| a.vertex_name(v)).collect();
            format!("witness path through {}", names.join(" -> "))
        }
        None => "every path meets at most one contributing block".into(),
    };
    push(status(crossing.holds), "single-crossing", detail);

    let nc = noncontributing_path_counts(a, &d, &report, MAX_COUNT_N)?;
    let detail = match nc.transient_length {
        Some(t) => format!("counts vanish beyond length {t}"),
        None => format!(
            "bounded by {} * {}^n",
            fmt_float(nc.constant),
            fmt_float(nc.base)
        ),
    };
    push(
        status(nc.bound_holds || nc.vanishes_after_transient()),
        "noncontributing-growth",
        detail,
    );

    let mut perrons = Vec::new();
    for &j in &report.contributing {
        let p = perron_data(&d, j)?;
        push(
            status(p.perron.residual <= PERRON_RESIDUAL_TOL),
            "perron-residual",
            format!("block {j}: {}", fmt_float(p.perron.residual)),
        );
        push(
            status(p.perron.row_sum_error() <= ROW_SUM_TOL),
            "stochastic-rows",
            format!("block {j}: {}", fmt_float(p.perron.row_sum_error())),
        );
        perrons.push(j);
    }

    let state = AlgebraState::tracial(2);
    let family = src.oracle.as_ref().map(|o| o.family());
    let action = ActionAssignment::seeded(a.generators(), family, &state, args.seed)?;
    let cov = CoveringOperator::new(a, &action)?;
    for j in perrons {
        let mut worst = 0.0f64;
        for q in 1..=D1_MAX_POWER {
            worst = worst.max(
                cov.verify_d1(j, q, derive_seed(args.seed, q as u64))?
                    .rel_deviation,
            );
        }
        push(
            status(worst <= args.tol),
            "block-power-identity",
            format!(
                "block {j}, q <= {D1_MAX_POWER}: relative deviation {}",
                fmt_float(worst)
            ),
        );
    }

    let passed = lines.iter().all(|(s, _, _)| *s != Status::Fail);
    let mut text = format!(
        "# verify group={} seed={} radius={} tol={}\n",
        src.label,
        args.seed,
        args.radius,
        fmt_float(args.tol)
    );
    for (s, name, detail) in &lines {
        let _ = writeln!(text, "{s} {name}: {detail}");
    }
    let _ = writeln!(text, "{}", if passed { "ALL PASS" } else { "FAILED" });

    prepare_dir(&args.out_dir)?;
    let path = args.out_dir.join("verify.txt");
    write_text(&path, &text)?;
    Ok(Outcome {
        passed,
        files: vec![path],
        summary: text,
    })
}

fn build_action(
    args: &ActionArgs,
    a: &MarkovAutomaton,
    oracle: Option<&GroupOracle>,
) -> Result<(AlgebraState, ActionAssignment)> {
    if let Some(path) = &args.action {
        return load_action(path, a.generators());
    }
    if args.dim == 0 {
        return Err(Error::input("--dim must be positive"));
    }
    let state = match &args.state_weights {
        Some(w) if w.len() != args.dim => {
            return Err(Error::input(format!(
                "--state-weights has {} entries, expected {}",
                w.len(),
                args.dim
            )))
        }
        Some(w) => AlgebraState::diagonal(w)?,
        None => AlgebraState::tracial(args.dim),
    };
    let action = match args.recipe {
        Recipe::Trivial => ActionAssignment::trivial(a.generators().clone(), args.dim),
        Recipe::Seeded => ActionAssignment::seeded(
            a.generators(),
            oracle.map(|o| o.family()),
            &state,
            args.seed,
        )?,
    };
    Ok((state, action))
}

fn build_observable(args: &AverageArgs, d: usize) -> Result<Observable> {
    if let Some(path) = &args.observable_file {
        let x = load_matrix(path)?;
        if x.nrows() != d {
            return Err(Error::input(format!(
                "observable is {}x{}, the action acts on {d}x{d} matrices",
                x.nrows(),
                x.ncols()
            )));
        }
        return Ok(x);
    }
    let seed = derive_seed(args.action.seed, 0x0b5e);
    Ok(match args.observable {
        ObservableKind::Identity => identity(d),
        ObservableKind::RandomHermitian => random_hermitian(d, seed),
        ObservableKind::RandomPositive => random_positive(d, seed),
    })
}

pub fn cmd_average(args: &AverageArgs) -> Result<Outcome> {
    require_positive_tol(args.tol)?;
    if args.big_n_max < 8 {
        return Err(Error::input("--N-max must be at least 8"));
    }
    let src = load_source(&args.source)?;
    let (state, action) = build_action(&args.action, &src.automaton, src.oracle.as_ref())?;
    let x = build_observable(args, state.dim())?;
    let cov = CoveringOperator::new(&src.automaton, &action)?;

    let n_max = args.big_n_max;
    let ns: Vec<usize> = (1..=n_max).collect();
    let samples = cesaro_ladder(&cov, &x, &ns)?;
    let weights = cesaro_weights(&cov, n_max);
    let limit = samples.last().expect("N_max >= 8").clone();
    let phi_x = state_value(&state, &x)?;
    let x_norm = operator_norm(&x);

    let mut csv = format!(
        "# average group={} seed={} dim={} recipe={} N_max={} rho={}\n",
        src.label,
        args.action.seed,
        state.dim(),
        match (&args.action.action, args.action.recipe) {
            (Some(_), _) => "file",
            (None, Recipe::Seeded) => "seeded",
            (None, Recipe::Trivial) => "trivial",
        },
        n_max,
        fmt_float(cov.rho())
    );
    csv.push_str("N,gns_delta,op_delta,phi_s_N,c_N_phi_x,lambda_max\n");
    let mut worst_rel = 0.0f64;
    for (i, s) in samples.iter().enumerate() {
        let diff = s - &limit;
        let lhs = state_value(&state, s)?;
        let rhs = phi_x * weights[i];
        let scale = rhs.norm().max(weights[i] * x_norm);
        let err = (lhs - rhs).norm();
        worst_rel = worst_rel.max(if scale > 0.0 { err / scale } else { err });
        let herm = (s + s.adjoint()) * Complex64::new(0.5, 0.0);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            i + 1,
            fmt_float(gns_norm2(&state, &diff)?),
            fmt_float(operator_norm(&diff)),
            fmt_float(lhs.re),
            fmt_float(rhs.re),
            fmt_float(max_eigenvalue(&herm))
        );
    }
    let conv = convergence_diagnostics(&cov, &state, &x, n_max)?;
    let state_ok = worst_rel <= args.tol;
    let deltas: Vec<String> = conv.gns_deltas.iter().map(|&d| fmt_float(d)).collect();
    let flags = format!(
        "# flags ladder={:?} gns_deltas=[{}] cauchy={} strictly_decreasing={} state_functional={} max_rel_error={}\n",
        conv.ladder,
        deltas.join(";"),
        conv.cauchy(),
        conv.strictly_decreasing(),
        status(state_ok),
        fmt_float(worst_rel)
    );
    csv.push_str(&flags);

    prepare_dir(&args.out_dir)?;
    let csv_path = args.out_dir.join("average.csv");
    write_text(&csv_path, &csv)?;
    let limit_path = args.out_dir.join("limit.json");
    save_matrix(&limit, &limit_path)?;
    Ok(Outcome {
        passed: state_ok,
        files: vec![csv_path, limit_path],
        summary: flags.trim_start_matches("# ").to_string(),
    })
}

pub fn cmd_export(args: &ExportArgs) -> Result<Outcome> {
    let src = load_source(&args.source)?;
    let (state, action) = build_action(&args.action, &src.automaton, src.oracle.as_ref())?;
    prepare_dir(&args.out_dir)?;
    let automaton_path = args.out_dir.join("automaton.json");
    save_automaton(&src.automaton, &automaton_path)?;
    let action_path = args.out_dir.join("action.json");
    save_action(&state, &action, &action_path)?;
    Ok(Outcome {
        passed: true,
        summary: format!(
            "wrote {} and {}\n",
            automaton_path.display(),
            action_path.display()
        ),
        files: vec![automaton_path, action_path],
    })
}
