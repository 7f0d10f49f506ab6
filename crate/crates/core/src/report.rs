//! Structured reports. Every report is written twice, as pretty JSON (which
//! parses back into the same value) and as plain text for reading. Sweeps and
//! flows also export CSV traces.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::family::{DilationReport, Direction, ExtremalPosition, FamilySweep, TransportOrientation, TransportResult};
use crate::maxint::{FlowMode, FlowStatus, FlowTrace, IntersectionMethod, IsotropyReport, IsotropySide};
use crate::pjp::{ContactPair, Decomposition, PositiveJohn, SolverReport, Verification};
use crate::{Matrix, Result, Vector};

/// A report with a structured (JSON) and a textual rendering.
pub trait Report: Serialize + DeserializeOwned {
    fn render_text(&self) -> String;
}

/// Pretty JSON with a trailing newline; deterministic for a given value.
pub fn to_json<R: Report>(report: &R) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<R: Report>(text: &str) -> Result<R> {
    Ok(serde_json::from_str(text)?)
}

/// Paths of a report written side by side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub text: PathBuf,
}

/// Writes `<stem>.json` and `<stem>.txt` into `dir`, creating it if needed.
pub fn write_report<R: Report>(dir: &Path, stem: &str, report: &R) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let files = ReportFiles { json: dir.join(format!("{stem}.json")), text: dir.join(format!("{stem}.txt")) };
    fs::write(&files.json, to_json(report)?)?;
    fs::write(&files.text, report.render_text())?;
    Ok(files)
}

pub fn read_report<R: Report>(path: &Path) -> Result<R> {
    from_json(&fs::read_to_string(path)?)
}

fn fmt_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "{name} =");
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:>14.9}")).collect();
        let _ = writeln!(out, "  [{} ]", row.join(""));
    }
}

fn fmt_vector(v: &Vector) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.9}")).collect();
    format!("({})", items.join(", "))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖Σ c x ⊗ y − I‖_F` (symmetrised in symmetrized mode).
    pub matrix: f64,
    /// `‖Σ c y‖`.
    pub vector: f64,
    /// `Σ c`, which equals `n` for an exact decomposition.
    pub weight_sum: f64,
}

impl From<&Decomposition> for Residuals {
    fn from(d: &Decomposition) -> Self {
        Residuals { matrix: d.matrix_residual, vector: d.vector_residual, weight_sum: d.weight_sum }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub stages: usize,
    pub final_mu: f64,
    pub kkt_residual: f64,
    pub duality_gap: f64,
}

impl From<&SolverReport> for SolverSummary {
    fn from(r: &SolverReport) -> Self {
        SolverSummary {
            iterations: r.newton_steps,
            stages: r.stages,
            final_mu: r.final_mu,
            kkt_residual: r.kkt_residual,
            duality_gap: r.duality_gap,
        }
    }
}

/// Positive John solution with its symmetrized certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PjpReport {
    pub outer: String,
    pub inner: String,
    #[serde(rename = "P")]
    pub p: Matrix,
    pub z: Vector,
    pub logdet: f64,
    pub symmetric: bool,
    /// Support-point count when a smooth inner body was replaced by a hull.
    pub approximation: Option<usize>,
    /// Contact pairs in the coordinates of the problem.
    pub contact_pairs: Vec<ContactPair>,
    /// Weights of the decomposition over the normalised pairs, in pair order.
    pub weights: Vec<f64>,
    pub residuals: Residuals,
    pub solver: SolverSummary,
    pub certified: bool,
}

impl PjpReport {
    pub fn new(position: &PositiveJohn, tol: f64) -> Self {
        let d = &position.decomposition;
        PjpReport {
            outer: position.problem.outer().describe(),
            inner: position.problem.inner().describe(),
            p: position.solution.p.matrix().clone(),
            z: position.solution.z.clone(),
            logdet: position.solution.log_det,
            symmetric: position.problem.symmetric(),
            approximation: position.problem.approximation(),
            contact_pairs: position.pairs(),
            weights: d.weights.clone(),
            residuals: d.into(),
            solver: (&position.solution.report).into(),
            certified: !position.contacts.is_empty() && d.residual() <= tol,
        }
    }

    fn render_into(&self, out: &mut String) {
        let _ = writeln!(out, "outer: {}", self.outer);
        let _ = writeln!(out, "inner: {}", self.inner);
        if let Some(n) = self.approximation {
            let _ = writeln!(out, "inner approximated by the hull of {n} support points");
        }
        fmt_matrix(out, "P", &self.p);
        let _ = writeln!(out, "z = {}", fmt_vector(&self.z));
        let _ = writeln!(out, "log det P = {:.12}", self.logdet);
        let _ = writeln!(out, "symmetric problem: {}", self.symmetric);
        let _ = writeln!(out, "contact pairs: {}", self.contact_pairs.len());
        for (pair, c) in self.contact_pairs.iter().zip(&self.weights) {
            let _ = writeln!(out, "  c = {c:.9}  x = {}  y = {}", fmt_vector(&pair.x), fmt_vector(&pair.y));
        }
        let r = &self.residuals;
        let _ = writeln!(
            out,
            "residuals: matrix {:.3e}, vector {:.3e}, weight sum {:.9}",
            r.matrix, r.vector, r.weight_sum
        );
        let s = &self.solver;
        let _ = writeln!(
            out,
            "solver: {} Newton steps in {} stages, final mu {:.3e}, KKT residual {:.3e}, gap bound {:.3e}",
            s.iterations, s.stages, s.final_mu, s.kkt_residual, s.duality_gap
        );
        let _ = writeln!(out, "certificate: {}", if self.certified { "holds" } else { "FAILS" });
    }
}

impl Report for PjpReport {
    fn render_text(&self) -> String {
        let mut out = String::from("positive John position\n");
        self.render_into(&mut out);
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub outer: String,
    pub inner: String,
    pub verification: Verification,
}

impl Report for VerifyReport {
    fn render_text(&self) -> String {
        let v = &self.verification;
        let mut out = String::from("positive John certificate\n");
        let _ = writeln!(out, "outer: {}", self.outer);
        let _ = writeln!(out, "inner: {}", self.inner);
        let _ = writeln!(
            out,
            "containment: {} (worst violation {:.3e}, {:?})",
            v.containment.holds, v.containment.worst_violation, v.containment.method
        );
        let _ = writeln!(out, "contact pairs: {}", v.contact_count);
        if let Some(d) = &v.decomposition {
            let _ = writeln!(
                out,
                "residuals: matrix {:.3e}, vector {:.3e}, weight sum {:.9}",
                d.matrix_residual, d.vector_residual, d.weight_sum
            );
        }
        let _ = writeln!(out, "certificate: {}", if v.holds { "holds" } else { "FAILS" });
        if let Some(reason) = &v.reason {
            let _ = writeln!(out, "reason: {reason}");
        }
        out
    }
}

/// Best-found extremal rotation with its genuine decomposition and the
/// dilation inclusion at that point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalReport {
    pub direction: Direction,
    #[serde(rename = "U")]
    pub u: Matrix,
    pub position: PjpReport,
    pub envelope_gradient_norm: f64,
    pub genuine_residual: f64,
    pub genuine_weights: Vec<f64>,
    pub genuine_weight_sum: f64,
    pub dilation_check: Option<DilationReport>,
    pub starts_used: usize,
    pub converged_starts: usize,
}

impl ExtremalReport {
    pub fn new(ext: &ExtremalPosition, dilation: Option<DilationReport>, tol: f64) -> Self {
        ExtremalReport {
            direction: ext.direction,
            u: ext.rotation.matrix().clone(),
            position: PjpReport::new(&ext.position, tol),
            envelope_gradient_norm: ext.envelope_gradient_norm,
            genuine_residual: ext.decomposition.residual(),
            genuine_weights: ext.decomposition.weights.clone(),
            genuine_weight_sum: ext.decomposition.weight_sum,
            dilation_check: dilation,
            starts_used: ext.starts_used,
            converged_starts: ext.converged_starts,
        }
    }
}

impl Report for ExtremalReport {
    fn render_text(&self) -> String {
        let what = match self.direction {
            Direction::Min => "saddle (minimum-volume) position, best found",
            Direction::Max => "maximal-volume position, best found",
        };
        let mut out = format!("{what}\n");
        let _ = writeln!(out, "starts: {} ({} reached stationarity)", self.starts_used, self.converged_starts);
        fmt_matrix(&mut out, "U", &self.u);
        let _ = writeln!(out, "envelope gradient norm: {:.3e}", self.envelope_gradient_norm);
        let _ = writeln!(
            out,
            "genuine decomposition: residual {:.3e}, weight sum {:.9}",
            self.genuine_residual, self.genuine_weight_sum
        );
        match &self.dilation_check {
            Some(d) => {
                let _ = writeln!(
                    out,
                    "dilation inclusion K - a in -n(L - a): {} (worst margin {:.3e} over {} directions, a = {})",
                    if d.holds { "holds" } else { "FAILS" },
                    d.worst_margin,
                    d.directions,
                    fmt_vector(&d.center)
                );
            }
            None => {
                let _ = writeln!(out, "dilation inclusion: not checked");
            }
        }
        self.position.render_into(&mut out);
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportRow {
    pub index: usize,
    #[serde(rename = "U")]
    pub u: Matrix,
    pub result: TransportResult,
}

impl TransportRow {
    /// Residual of the orientation that was returned.
    pub fn matched_residual(&self) -> f64 {
        match self.result.orientation {
            TransportOrientation::Statement => self.result.statement_residual,
            TransportOrientation::Transposed => self.result.transposed_residual,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportReport {
    pub outer: String,
    pub inner: String,
    pub seed: u64,
    pub base_logdet: f64,
    pub rows: Vec<TransportRow>,
    /// Standard deviation of the directly solved log-determinants.
    pub logdet_std: f64,
    pub max_matched_residual: f64,
}

impl TransportReport {
    pub fn new(outer: String, inner: String, seed: u64, base_logdet: f64, rows: Vec<TransportRow>) -> Self {
        let m = rows.len().max(1) as f64;
        let mean = rows.iter().map(|r| r.result.direct_log_det).sum::<f64>() / m;
        let var = rows.iter().map(|r| (r.result.direct_log_det - mean).powi(2)).sum::<f64>() / m;
        let max_matched_residual = rows.iter().map(TransportRow::matched_residual).fold(0.0, f64::max);
        TransportReport { outer, inner, seed, base_logdet, rows, logdet_std: var.sqrt(), max_matched_residual }
    }
}

impl Report for TransportReport {
    fn render_text(&self) -> String {
        let mut out = String::from("ellipsoid transport\n");
        let _ = writeln!(out, "outer: {}", self.outer);
        let _ = writeln!(out, "inner: {}", self.inner);
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "log det P*(I) = {:.12}", self.base_logdet);
        let _ = writeln!(
            out,
            "{:>6} {:>18} {:>12} {:>12} {:>11}",
            "index", "direct log det", "statement", "transposed", "resolved"
        );
        for r in &self.rows {
            let orient = match r.result.orientation {
                TransportOrientation::Statement => "statement",
                TransportOrientation::Transposed => "transposed",
            };
            let _ = writeln!(
                out,
                "{:>6} {:>18.12} {:>12.3e} {:>12.3e} {:>11}",
                r.index, r.result.direct_log_det, r.result.statement_residual, r.result.transposed_residual, orient
            );
        }
        let _ = writeln!(out, "log det standard deviation: {:.3e}", self.logdet_std);
        let _ = writeln!(out, "largest resolved residual: {:.3e}", self.max_matched_residual);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarCase {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "M")]
    pub m: Matrix,
    #[serde(rename = "P")]
    pub p: Matrix,
    #[serde(rename = "U")]
    pub u: Matrix,
    /// `‖PMU − A‖_F / ‖A‖_F`.
    pub reconstruction: f64,
    /// `‖UᵀU − I‖_F`.
    pub orthogonality: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarReport {
    pub cases: Vec<PolarCase>,
}

impl Report for PolarReport {
    fn render_text(&self) -> String {
        let mut out = String::from("generalized polar decomposition A = P M U\n");
        for (i, c) in self.cases.iter().enumerate() {
            let _ = writeln!(
                out,
                "case {i}: reconstruction {:.3e}, orthogonality {:.3e}",
                c.reconstruction, c.orthogonality
            );
            fmt_matrix(&mut out, "P", &c.p);
            fmt_matrix(&mut out, "U", &c.u);
        }
        out
    }
}

fn side_text(out: &mut String, label: &str, s: &IsotropySide) {
    let _ = writeln!(out, "{label}:");
    let _ = writeln!(out, "  flux norm        {:.6e}", s.flux_norm);
    let _ = writeln!(out, "  anisotropy full  {:.6e}", s.anisotropy_full);
    let _ = writeln!(out, "  anisotropy sym   {:.6e}", s.anisotropy_sym);
    let _ = writeln!(out, "  moment trace     {:.12}", s.trace);
    let _ = writeln!(out, "  boundary overlap {}", s.overlap);
}

impl Report for IsotropyReport {
    fn render_text(&self) -> String {
        let mut out = format!("isotropy certificate ({})\n", self.certification);
        side_text(&mut out, "K ∩ ∂L", &self.forward);
        side_text(&mut out, "L ∩ ∂K", &self.swapped);
        out
    }
}

/// Outcome of a maximal intersection flow with the certificate at its end.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxintReport {
    pub outer: String,
    pub inner: String,
    pub mode: FlowMode,
    pub method: IntersectionMethod,
    pub status: FlowStatus,
    pub steps: usize,
    pub polished_at: Option<usize>,
    pub initial_volume: f64,
    pub final_volume: f64,
    pub linear: Matrix,
    pub shift: Vector,
    pub certificate: IsotropyReport,
    pub flux_tol: f64,
    pub anisotropy_tol: f64,
    pub certified: bool,
}

impl MaxintReport {
    pub fn new(
        outer: String,
        inner: String,
        trace: &FlowTrace,
        certificate: IsotropyReport,
        flux_tol: f64,
        anisotropy_tol: f64,
    ) -> Self {
        let certified = certificate.passes(flux_tol, anisotropy_tol, trace.mode == FlowMode::Positive);
        let last = trace.last();
        MaxintReport {
            outer,
            inner,
            mode: trace.mode,
            method: trace.method,
            status: trace.status,
            steps: trace.steps.len() - 1,
            polished_at: trace.polished_at,
            initial_volume: trace.steps[0].volume,
            final_volume: last.volume,
            linear: last.linear.clone(),
            shift: last.shift.clone(),
            certificate,
            flux_tol,
            anisotropy_tol,
            certified,
        }
    }
}

impl Report for MaxintReport {
    fn render_text(&self) -> String {
        let mut out = String::from("maximal intersection flow\n");
        let _ = writeln!(out, "outer: {}", self.outer);
        let _ = writeln!(out, "inner: {}", self.inner);
        let _ = writeln!(out, "mode: {:?}, volumes: {:?}", self.mode, self.method);
        let _ = writeln!(out, "status: {:?} after {} steps", self.status, self.steps);
        if let Some(k) = self.polished_at {
            let _ = writeln!(out, "exact congruence polish at step {k}");
        }
        let _ = writeln!(out, "volume: {:.12} -> {:.12}", self.initial_volume, self.final_volume);
        fmt_matrix(&mut out, "A", &self.linear);
        let _ = writeln!(out, "z = {}", fmt_vector(&self.shift));
        out.push_str(&self.certificate.render_text());
        let which = if self.mode == FlowMode::Positive { "symmetrized" } else { "full" };
        let _ = writeln!(
            out,
            "certificate ({which}, flux <= {:.1e}, anisotropy <= {:.1e}): {}",
            self.flux_tol,
            self.anisotropy_tol,
            if self.certified { "holds" } else { "FAILS" }
        );
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCase {
    pub index: usize,
    pub dim: usize,
    /// `translation` or `linear`.
    pub kind: String,
    pub analytic: f64,
    pub finite_difference: f64,
    pub error: f64,
    pub one_sided: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub step: f64,
    pub tol: f64,
    pub cases: Vec<DerivativeCase>,
    pub max_error: f64,
    pub passed: bool,
}

impl Report for DerivativeReport {
    fn render_text(&self) -> String {
        let mut out = format!("volume derivatives against central differences (h = {:e})\n", self.step);
        let _ = writeln!(
            out,
            "{:>5} {:>3} {:>12} {:>18} {:>18} {:>10}",
            "case", "n", "direction", "analytic", "difference", "error"
        );
        for c in &self.cases {
            let _ = writeln!(
                out,
                "{:>5} {:>3} {:>12} {:>18.12} {:>18.12} {:>10.2e}{}",
                c.index,
                c.dim,
                c.kind,
                c.analytic,
                c.finite_difference,
                c.error,
                if c.one_sided { " one-sided" } else { "" }
            );
        }
        let _ = writeln!(
            out,
            "largest error {:.3e} (tolerance {:.1e}): {}",
            self.max_error,
            self.tol,
            if self.passed { "pass" } else { "FAIL" }
        );
        out
    }
}

/// One row of the sweep CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed_index: usize,
    pub logdet: Option<f64>,
    pub det_nth_root: Option<f64>,
    pub grad_norm: Option<f64>,
    pub solver_iters: usize,
}

pub fn sweep_rows(sweep: &FamilySweep) -> Vec<SweepRow> {
    sweep
        .samples
        .iter()
        .map(|s| SweepRow {
            seed_index: s.index,
            logdet: s.log_det,
            det_nth_root: s.det_nth_root,
            grad_norm: s.grad_norm,
            solver_iters: s.solver_iters,
        })
        .collect()
}

/// One row of the flow CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub step: usize,
    pub volume: f64,
    pub flux_norm: f64,
    pub anisotropy: f64,
    pub step_size: f64,
    pub det_drift: f64,
}

pub fn flow_rows(trace: &FlowTrace) -> Vec<FlowRow> {
    trace
        .steps
        .iter()
        .map(|s| FlowRow {
            step: s.step,
            volume: s.volume,
            flux_norm: s.flux_norm,
            anisotropy: s.anisotropy,
            step_size: s.step_size,
            det_drift: s.det_drift,
        })
        .collect()
}

pub fn write_csv<T: Serialize, W: Write>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}
