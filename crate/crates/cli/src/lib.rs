//! The `extpos` command line: loads bodies, dispatches subcommands, writes
//! reports (JSON and text side by side) and CSV traces.
//!
//! Exit status: 0 when every requested check passes, 1 when a certificate
//! fails, 2 on a usage error, 3 when a solver does not converge.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use extpos::bodies::{load_body, Body, Shape};
use extpos::family::{
    check_dilation_inclusion, ellipsoid_family_transport, extremize_over_rotations, sweep_family, Direction,
    FamilyOptions,
};
use extpos::linalg::{generalized_polar_decompose, haar_orthogonal_from, stream_rng};
use extpos::maxint::{
    isotropy_report, maxint_flow, FlowMode, FlowOptions, FlowStatus, VolumeMethod, DEFAULT_MC_SAMPLES,
};
use extpos::pjp::{positive_john, verify_positive_john, PjpOptions};
use extpos::report::{
    flow_rows, sweep_rows, write_csv, write_report, DerivativeCase, DerivativeReport, ExtremalReport, MaxintReport,
    PjpReport, PolarCase, PolarReport, Report, TransportReport, TransportRow, VerifyReport,
};
use extpos::suite::{compare_derivatives, random_directions, Suite, FD_STEP};
use extpos::{Error, Matrix};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CERTIFICATE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

/// Genuine-decomposition residual accepted at a saddle point.
const GENUINE_TOL: f64 = 1e-4;
/// Transport residual accepted in the resolved orientation.
const TRANSPORT_TOL: f64 = 1e-5;
/// Reconstruction error accepted for a polar decomposition.
const POLAR_TOL: f64 = 1e-9;
/// Anisotropy tolerance of the flow.
const ANISOTROPY_TOL: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "extpos", version, about = "Extremal positions of convex bodies")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Args)]
pub struct Options {
    /// Outer body K (JSON body file).
    #[arg(long, global = true)]
    pub outer: Option<PathBuf>,
    /// Inner body L (JSON body file).
    #[arg(long, global = true)]
    pub inner: Option<PathBuf>,
    /// Certificate tolerance.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Sample count (sweeps, transport checks, random cases, Monte Carlo points).
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Multi-start count for extremal searches.
    #[arg(long, global = true)]
    pub starts: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Directory for reports and CSV files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = VolumeChoice::Auto)]
    pub volume_method: VolumeChoice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VolumeChoice {
    Auto,
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Full,
    Positive,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the positive John position of L in K and certify it.
    Pjp,
    /// Check that L is already in positive John position inside K.
    Verify,
    /// Positive John family over Haar-random rotations, as CSV.
    Sweep,
    /// Minimum-volume rotation with genuine decomposition and dilation check.
    Saddle,
    /// Maximum-volume rotation.
    Maxvol,
    /// Compare the transport formula with direct solves for an ellipsoid K.
    EllipsoidTransport,
    /// Generalized polar decomposition A = P M U.
    PolarDecomp {
        /// JSON file with `{"A": rows, "M": rows}` or a list of them; random cases when absent.
        #[arg(long)]
        matrices: Option<PathBuf>,
    },
    /// Maximal intersection flow and its isotropy certificate.
    Maxint {
        #[arg(long, value_enum, default_value_t = ModeChoice::Full)]
        mode: ModeChoice,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
    },
    /// Volume derivative formulas against central finite differences.
    DerivativeCheck,
    /// Run the acceptance criteria and print a pass/fail table.
    PaperSuite {
        /// Criteria to run, comma separated; all when absent.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<usize>,
    },
}

/// Failure of a run, carrying its exit status.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence { .. } | Error::IllConditioned(_) | Error::Conditioning { .. } => EXIT_NONCONVERGENCE,
            Error::NoContactPairs | Error::DecompositionResidual(_) | Error::Recentering(_) => EXIT_CERTIFICATE,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the exit status.
pub fn execute<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(config.options.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| run(&config)) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn run(config: &RunConfig) -> Result<i32, Failure> {
    let o = &config.options;
    if !(o.tol > 0.0) {
        return Err(Failure::usage("--tol must be positive"));
    }
    match &config.command {
        Command::Pjp => pjp(o),
        Command::Verify => verify(o),
        Command::Sweep => sweep(o),
        Command::Saddle => extremal(o, Direction::Min),
        Command::Maxvol => extremal(o, Direction::Max),
        Command::EllipsoidTransport => transport(o),
        Command::PolarDecomp { matrices } => polar(o, matrices.as_deref()),
        Command::Maxint { mode, max_iter } => maxint(o, *mode, *max_iter),
        Command::DerivativeCheck => derivative_check(o),
        Command::PaperSuite { criteria } => paper_suite(o, criteria),
    }
}

fn body(path: Option<&Path>, flag: &str) -> Result<Body, Failure> {
    let path = path.ok_or_else(|| Failure::usage(format!("--{flag} is required")))?;
    load_body(path).map_err(|e| Failure::usage(format!("--{flag} {}: {e}", path.display())))
}

fn bodies(o: &Options) -> Result<(Body, Body), Failure> {
    let k = body(o.outer.as_deref(), "outer")?;
    let l = body(o.inner.as_deref(), "inner")?;
    if k.dim() != l.dim() {
        return Err(Failure::usage(format!("--outer has dimension {} but --inner has {}", k.dim(), l.dim())));
    }
    Ok((k, l))
}

fn family_options(o: &Options) -> FamilyOptions {
    let mut opts = FamilyOptions::default();
    if let Some(s) = o.starts {
        opts.starts = s.max(1);
    }
    opts
}

/// Prints the text rendering and writes both renderings under `--out`.
fn emit<R: Report>(o: &Options, stem: &str, report: &R) -> Result<(), Failure> {
    print!("{}", report.render_text());
    if let Some(dir) = &o.out {
        write_report(dir, stem, report)?;
    }
    Ok(())
}

fn fail_with(code: i32, message: String) -> i32 {
    eprintln!("{message}");
    code
}

fn pjp(o: &Options) -> Result<i32, Failure> {
    let (k, l) = bodies(o)?;
    let pj = positive_john(&k, &l, &PjpOptions::default())?;
    let report = PjpReport::new(&pj, o.tol);
    emit(o, "pjp", &report)?;
    if report.contact_pairs.is_empty() {
        return Ok(fail_with(EXIT_CERTIFICATE, "certificate failed: no contact pairs found".into()));
    }
    if !report.certified {
        let r = &report.residuals;
        return Ok(fail_with(
            EXIT_CERTIFICATE,
            format!("certificate failed: decomposition residual {:e} exceeds {:e}", r.matrix.max(r.vector), o.tol),
        ));
    }
    Ok(EXIT_PASS)
}

fn verify(o: &Options) -> Result<i32, Failure> {
    let (k, l) = bodies(o)?;
    let verification = verify_positive_john(&k, &l, o.tol)?;
    let holds = verification.holds;
    let reason = verification.reason.clone();
    emit(o, "verify", &VerifyReport { outer: k.describe(), inner: l.describe(), verification })?;
    if holds {
        Ok(EXIT_PASS)
    } else {
        Ok(fail_with(EXIT_CERTIFICATE, format!("certificate failed: {}", reason.unwrap_or_default())))
    }
}

fn sweep(o: &Options) -> Result<i32, Failure> {
    let (k, l) = bodies(o)?;
    let samples = o.samples.unwrap_or(100);
    if samples == 0 {
        return Err(Failure::usage("--samples must be positive"));
    }
    let result = sweep_family(&k, &l, samples, o.seed, &family_options(o))?;
    let rows = sweep_rows(&result);
    match &o.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(Error::from)?;
            let file = fs::File::create(dir.join("sweep.csv")).map_err(Error::from)?;
            write_csv(file, &rows)?;
            let s = &result.summary;
            println!(
                "{} of {} rotations solved; log det / n in [{:.9}, {:.9}], mean {:.9}, std {:.3e}",
                s.solved, samples, s.min, s.max, s.mean, s.std_dev
            );
        }
        None => {
            write_csv(std::io::stdout().lock(), &rows)?;
        }
    }
    if result.summary.failed > 0 {
        let first = result.samples.iter().find_map(|s| s.error.clone()).unwrap_or_default();
        return Ok(fail_with(
            EXIT_NONCONVERGENCE,
            format!("{} of {samples} rotations failed to solve; first: {first}", result.summary.failed),
        ));
    }
    Ok(EXIT_PASS)
}

fn extremal(o: &Options, direction: Direction) -> Result<i32, Failure> {
    let (k, l) = bodies(o)?;
    let ext = extremize_over_rotations(&k, &l, direction, o.seed, &family_options(o))?;
    let pj = &ext.position;
    let placed = l.apply_affine(&pj.placement())?;
    let dilation =
        check_dilation_inclusion(&k, &placed, &pj.solution.p, &ext.certificate_pairs, &ext.decomposition.weights).ok();
    let report = ExtremalReport::new(&ext, dilation, o.tol);
    let stem = match direction {
        Direction::Min => "saddle",
        Direction::Max => "maxvol",
    };
    emit(o, stem, &report)?;
    if direction == Direction::Min {
        if report.genuine_residual > GENUINE_TOL {
            return Ok(fail_with(
                EXIT_CERTIFICATE,
                format!(
                    "certificate failed: genuine decomposition residual {:e} exceeds {GENUINE_TOL:e}",
                    report.genuine_residual
                ),
            ));
        }
        match &report.dilation_check {
            Some(d) if d.holds => {}
            Some(d) => {
                return Ok(fail_with(
                    EXIT_CERTIFICATE,
                    format!("certificate failed: dilation inclusion margin {:e}", d.worst_margin),
                ))
            }
            None => return Ok(fail_with(EXIT_CERTIFICATE, "certificate failed: dilation centre undefined".into())),
        }
    }
    Ok(EXIT_PASS)
}

fn transport(o: &Options) -> Result<i32, Failure> {
    let (k, l) = bodies(o)?;
    if !matches!(k.shape(), Shape::Ellipsoid { .. }) {
        return Err(Failure::usage("--outer must be an ellipsoid"));
    }
    let opts = family_options(o);
    let base = positive_john(&k, &l, &PjpOptions::default())?;
    let n = k.dim();
    let samples = o.samples.unwrap_or(10);
    let rows = (0..samples)
        .map(|index| {
            let u = haar_orthogonal_from(n, &mut stream_rng(o.seed, index as u64));
            let result = ellipsoid_family_transport(&k, &l, &base.solution.p, &u, &opts)?;
            Ok(TransportRow { index, u: u.into_matrix(), result })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let report = TransportReport::new(k.describe(), l.describe(), o.seed, base.solution.log_det, rows);
    emit(o, "transport", &report)?;
    if report.max_matched_residual > TRANSPORT_TOL {
        return Ok(fail_with(
            EXIT_CERTIFICATE,
            format!("transport residual {:e} exceeds {TRANSPORT_TOL:e}", report.max_matched_residual),
        ));
    }
    Ok(EXIT_PASS)
}

#[derive(Deserialize)]
struct MatrixPair {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    m: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixInput {
    One(MatrixPair),
    Many(Vec<MatrixPair>),
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<Matrix, Failure> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Failure::usage(format!("{name} must be a non-empty square matrix")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn polar(o: &Options, matrices: Option<&Path>) -> Result<i32, Failure> {
    let inputs: Vec<(Matrix, Matrix)> = match matrices {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| Failure::usage(format!("--matrices {}: {e}", path.display())))?;
            let parsed: MatrixInput = serde_json::from_str(&text)
                .map_err(|e| Failure::usage(format!("--matrices {}: {e}", path.display())))?;
            let pairs = match parsed {
                MatrixInput::One(p) => vec![p],
                MatrixInput::Many(v) => v,
            };
            pairs
                .iter()
                .map(|p| {
                    let a = matrix_from_rows(&p.a, "A")?;
                    let m = match &p.m {
                        Some(m) => matrix_from_rows(m, "M")?,
                        None => Matrix::identity(a.nrows(), a.nrows()),
                    };
                    if m.nrows() != a.nrows() {
                        return Err(Failure::usage("A and M must have the same size"));
                    }
                    Ok((a, m))
                })
                .collect::<Result<_, _>>()?
        }
        None => (0..o.samples.unwrap_or(100) as u64)
            .map(|i| {
                let mut rng = stream_rng(o.seed, i);
                let n = rng.random_range(1..=8);
                let mut g = || Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                (g(), g())
            })
            .collect(),
    };
    let cases = inputs
        .into_iter()
        .map(|(a, m)| {
            let (p, u) = generalized_polar_decompose(&a, &m)?;
            let reconstruction = (p.matrix() * &m * u.matrix() - &a).norm() / a.norm();
            let orthogonality = u.residual();
            Ok(PolarCase { a, m, p: p.into_matrix(), u: u.into_matrix(), reconstruction, orthogonality })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let report = PolarReport { cases };
    emit(o, "polar", &report)?;
    let worst = report.cases.iter().map(|c| c.reconstruction).fold(0.0, f64::max);
    if worst > POLAR_TOL {
        return Ok(fail_with(EXIT_CERTIFICATE, format!("reconstruction error {worst:e} exceeds {POLAR_TOL:e}")));
    }
    Ok(EXIT_PASS)
}

fn volume_method(o: &Options) -> VolumeMethod {
    match o.volume_method {
        VolumeChoice::Auto => VolumeMethod::Auto,
        VolumeChoice::Exact => VolumeMethod::Exact,
        VolumeChoice::Mc => VolumeMethod::MonteCarlo { samples: o.samples.unwrap_or(DEFAULT_MC_SAMPLES), seed: o.seed },
    }
}

fn maxint(o: &Options, mode: ModeChoice, max_iter: usize) -> Result<i32, Failure> {
    let (k, l) = bodies(o)?;
    let mode = match mode {
        ModeChoice::Full => FlowMode::FullAffine,
        ModeChoice::Positive => FlowMode::Positive,
    };
    let opts = FlowOptions {
        tol: o.tol,
        anisotropy_tol: ANISOTROPY_TOL,
        max_iter,
        method: volume_method(o),
        ..FlowOptions::default()
    };
    let trace = maxint_flow(&k, &l, mode, &opts)?;
    let placed = l.apply_affine(&trace.final_map())?;
    let certificate = isotropy_report(&k, &placed)?;
    let report =
        MaxintReport::new(k.describe(), l.describe(), &trace, certificate, 2.0 * opts.tol, 2.0 * opts.anisotropy_tol);
    if let Some(dir) = &o.out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        let file = fs::File::create(dir.join("flow.csv")).map_err(Error::from)?;
        write_csv(file, &flow_rows(&trace))?;
    }
    emit(o, "maxint", &report)?;
    if trace.status != FlowStatus::Converged {
        return Ok(fail_with(
            EXIT_NONCONVERGENCE,
            format!("flow stopped with status {:?} after {} steps", trace.status, report.steps),
        ));
    }
    if !report.certified {
        return Ok(fail_with(
            EXIT_CERTIFICATE,
            "certificate failed: isotropy residuals exceed twice the flow tolerance".into(),
        ));
    }
    Ok(EXIT_PASS)
}

fn derivative_check(o: &Options) -> Result<i32, Failure> {
    let cases = match (&o.outer, &o.inner) {
        (None, None) => Suite::new(o.seed).derivatives()?.1,
        _ => {
            let (k, l) = bodies(o)?;
            pair_derivatives(o, &k, &l)?
        }
    };
    let max_error = cases.iter().map(|c| c.error).fold(0.0, f64::max);
    let report = DerivativeReport { step: FD_STEP, tol: o.tol, cases, max_error, passed: max_error <= o.tol };
    emit(o, "derivatives", &report)?;
    if !report.passed {
        return Ok(fail_with(EXIT_CERTIFICATE, format!("derivative error {max_error:e} exceeds {:e}", o.tol)));
    }
    Ok(EXIT_PASS)
}

/// Random translation and traceless directions for one pair.
fn pair_derivatives(o: &Options, k: &Body, l: &Body) -> Result<Vec<DerivativeCase>, Failure> {
    let method = match o.volume_method {
        VolumeChoice::Auto => VolumeMethod::Exact,
        _ => volume_method(o),
    };
    let mut cases = Vec::new();
    for index in 0..o.samples.unwrap_or(10) {
        let (u, a) = random_directions(&mut stream_rng(o.seed, index as u64), k.dim());
        cases.extend(compare_derivatives(k, l, &u, &a, index, method)?);
    }
    Ok(cases)
}

fn paper_suite(o: &Options, criteria: &[usize]) -> Result<i32, Failure> {
    if let Some(bad) = criteria.iter().find(|&&c| !(1..=10).contains(&c)) {
        return Err(Failure::usage(format!("no criterion {bad}; choose from 1 to 10")));
    }
    let report = Suite::new(o.seed).run(criteria);
    emit(o, "suite", &report)?;
    let _ = std::io::stdout().flush();
    Ok(if report.all_passed() { EXIT_PASS } else { EXIT_CERTIFICATE })
}
