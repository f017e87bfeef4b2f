use std::path::{Path, PathBuf};

use bifloop_core::continuation::{
    deflated_probe, detect_trivial_bifurcations, trace_branch, Branch, ContinuationConfig, SeedFailure,
    Termination,
};
use bifloop_core::diagram::{
    assemble, homotopy_seeds, trivial_seeds, validate_points, Diagram, DiagramSummary, HomotopyReport,
    ParamsSummary, ProbeEvidence, Scan, ValidationReport,
};
use bifloop_core::grid::Grid;
use bifloop_core::pencil::{estimate_kappa, lambda1, linearization_curve, pencil_suite};
use bifloop_core::problem::{ProblemParams, Regime, Sign, CRITICAL_SNAP_TOL};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{
    branch_rows, create_dir, num, opt_num, read_branch_records, write_csv, write_text, BRANCH_COLUMNS,
};
use crate::svg::{Line, Marker, Plot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Contradicted,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Contradicted => 1,
            Status::NumericalFailure => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

const POSITIVE: &str = "#1f5fbf";
const NEGATIVE: &str = "#2e8b3a";
const OTHER: &str = "#999999";

fn color(sign: Option<Sign>) -> &'static str {
    match sign {
        Some(Sign::Positive) => POSITIVE,
        Some(Sign::Negative) => NEGATIVE,
        None => OTHER,
    }
}

// ---------------------------------------------------------------- diagram

/// Contents of `diagram.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramFile {
    pub config: RunConfig,
    pub lambda_range: (f64, f64),
    pub summary: DiagramSummary,
    pub homotopy: Vec<HomotopyReport>,
    pub seed_failures: Vec<SeedFailure>,
}

pub struct DiagramRun {
    pub grid: Grid,
    pub problem: ProblemParams,
    pub cfg: ContinuationConfig,
    pub diagram: Diagram,
    pub homotopy: Vec<HomotopyReport>,
    pub seed_failures: Vec<SeedFailure>,
    pub notes: Vec<String>,
}

impl DiagramRun {
    pub fn numerical_failure(&self) -> bool {
        !self.seed_failures.is_empty()
            || self.diagram.branches.iter().any(|b| {
                matches!(
                    b.termination,
                    Termination::MaxSteps | Termination::NewtonFailure { .. }
                )
            })
            || !self.notes.is_empty()
    }

    pub fn file(&self, rc: &RunConfig) -> DiagramFile {
        DiagramFile {
            config: rc.clone(),
            lambda_range: (self.cfg.lambda_min, self.cfg.lambda_max),
            summary: self.diagram.summary(),
            homotopy: self.homotopy.clone(),
            seed_failures: self.seed_failures.clone(),
        }
    }
}

fn trace_all(
    rc: &RunConfig,
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    seeds: &[bifloop_core::continuation::Seed],
) -> Result<Vec<Branch>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(rc.workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    // Indexed collect keeps seed order whatever the scheduling.
    Ok(pool.install(|| seeds.par_iter().map(|s| trace_branch(p, g, cfg, s)).collect()))
}

/// Deflated searches where no solution of the given sign should exist.
fn probes(
    rc: &RunConfig,
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
) -> (Vec<ProbeEvidence>, Vec<String>) {
    let regime = p.regime();
    let above = matches!(regime, Regime::Critical | Regime::Supercritical);
    let below = matches!(regime, Regime::Critical | Regime::Subcritical);
    let mut plan = Vec::new();
    if above {
        plan.push((
            "no positive solution for λ ≤ 0 when d ≥ 1/σ₁",
            -0.5,
            Sign::Positive,
        ));
    }
    if above && p.q_is_odd() {
        plan.push((
            "no negative solution for λ ≥ 0 when d ≥ 1/σ₁",
            0.5,
            Sign::Negative,
        ));
    }
    if below && !p.q_is_odd() {
        plan.push(("no negative solution at λ = 0 for even q", 0.0, Sign::Negative));
    }
    let mut out = Vec::new();
    let mut notes = Vec::new();
    for (k, (what, lam, sign)) in plan.into_iter().enumerate() {
        let seed = rc.seed.wrapping_add(k as u64);
        match deflated_probe(p, g, cfg, lam, &[], sign.factor(), rc.probe_attempts, seed) {
            Ok(hits) => {
                let found = hits.iter().filter(|h| h.sign.sign() == Some(sign)).count();
                out.push(ProbeEvidence::new(
                    what,
                    lam,
                    sign,
                    rc.probe_attempts,
                    found,
                    true,
                ));
            }
            Err(e) => notes.push(format!("probe at λ = {lam} failed: {e}")),
        }
    }
    (out, notes)
}

/// Detection, branch switching, tracing, homotopy above the critical
/// diffusion, assembly and validation.
pub fn run_diagram(rc: &RunConfig) -> Result<DiagramRun> {
    let g = rc.grid()?;
    let p = rc.problem(&g)?;
    let cfg = rc.continuation(rc.lambda_range(&p));
    let scan = Scan {
        lam_range: (cfg.lambda_min, cfg.lambda_max),
        step: rc.scan_step,
    };
    let ts = trivial_seeds(&p, &g, &cfg, scan);
    let (hs, homotopy) = homotopy_seeds(&p, &g, &cfg, scan, rc.homotopy_steps);
    let seeds: Vec<_> = ts.seeds.into_iter().chain(hs).collect();
    let branches = trace_all(rc, &p, &g, &cfg, &seeds)?;
    let mut diagram = assemble(&p, &cfg, &ts.bifurcations, branches);
    let (evidence, notes) = probes(rc, &p, &g, &cfg);
    diagram.attach_probes(evidence);
    Ok(DiagramRun {
        grid: g,
        problem: p,
        cfg,
        diagram,
        homotopy,
        seed_failures: ts.failures,
        notes,
    })
}

pub fn diagram_svg(run: &DiagramRun) -> String {
    let p = &run.problem;
    let lines = run
        .diagram
        .branches
        .iter()
        .map(|b| Line {
            points: b.points.iter().map(|pt| (pt.lam, pt.signed_norm())).collect(),
            color: color(b.sign()),
            dashed: false,
        })
        .collect();
    let markers = run
        .diagram
        .bifurcations
        .iter()
        .map(|b| Marker {
            at: (b.lambda0, 0.0),
            color: "black",
        })
        .collect();
    Plot {
        title: format!("d = {}, q = {}", p.d_requested, p.q),
        x_label: "λ".into(),
        y_label: "±‖u‖∞".into(),
        lines,
        markers,
    }
    .render()
}

pub fn write_diagram(rc: &RunConfig, run: &DiagramRun) -> Result<Vec<PathBuf>> {
    create_dir(&rc.out)?;
    let mut files = Vec::new();
    files.push(write_csv(
        &rc.out.join("branches.csv"),
        &BRANCH_COLUMNS,
        &branch_rows(&run.diagram.branches),
    )?);
    let json = serde_json::to_string_pretty(&run.file(rc)).map_err(|e| CliError::Config(e.to_string()))?;
    files.push(write_text(&rc.out.join("diagram.json"), &(json + "\n"))?);
    files.push(write_text(&rc.out.join("diagram.svg"), &diagram_svg(run))?);
    Ok(files)
}

pub fn cmd_diagram(rc: &RunConfig) -> Result<Outcome> {
    let run = run_diagram(rc)?;
    let files = write_diagram(rc, &run)?;
    let status = if run.diagram.contradicted() {
        Status::Contradicted
    } else if run.numerical_failure() {
        Status::NumericalFailure
    } else {
        Status::Success
    };
    let mut notes = run.notes.clone();
    for c in &run.diagram.components {
        notes.push(format!(
            "component {}: {:?}",
            c.classification.label(),
            c.branches
        ));
    }
    notes.push(format!("census: {:?}", run.diagram.census.outcome));
    Ok(Outcome { status, files, notes })
}

// ---------------------------------------------------------------- spectrum

pub const SPECTRUM_COLUMNS: [&str; 6] = ["d", "d_used", "lambda1", "count", "bifurcations", "tangencies"];

pub struct SpectrumRow {
    pub d: f64,
    pub d_used: f64,
    pub lambda1: Option<f64>,
    pub bifurcations: Vec<bifloop_core::continuation::Bifurcation>,
}

pub fn run_spectrum(rc: &RunConfig) -> Result<(Grid, Vec<SpectrumRow>)> {
    let g = rc.grid()?;
    let base = rc.problem(&g)?;
    let mut rows = Vec::new();
    for d in rc.spectrum_values(base.sigma1) {
        let mut p = base.with_d(d)?;
        // Same snapping as a run configured at this d.
        if (d * p.sigma1 - 1.0).abs() <= CRITICAL_SNAP_TOL {
            p.d = p.critical_d();
        }
        let range = rc.lambda_range(&p);
        rows.push(SpectrumRow {
            d,
            d_used: p.d,
            lambda1: lambda1(p.d, p.abs_a(), p.sigma1),
            bifurcations: detect_trivial_bifurcations(&p, &g, range, rc.scan_step),
        });
    }
    Ok((g, rows))
}

/// The curve `4d(1−σ₁d) = λ²|a|²` as `(λ, d)` pairs, closed.
pub fn ellipse(abs_a: f64, sigma1: f64, count: usize) -> Vec<(f64, f64)> {
    let alpha = 1.0 / (abs_a * sigma1.sqrt());
    let beta = 0.5 / sigma1;
    (0..=count)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / count as f64;
            (alpha * t.cos(), beta + beta * t.sin())
        })
        .collect()
}

pub fn cmd_spectrum(rc: &RunConfig) -> Result<Outcome> {
    let (g, rows) = run_spectrum(rc)?;
    let p = rc.problem(&g)?;
    create_dir(&rc.out)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let join = |f: &dyn Fn(&bifloop_core::continuation::Bifurcation) -> String| {
                r.bifurcations.iter().map(f).collect::<Vec<_>>().join(";")
            };
            vec![
                num(r.d),
                num(r.d_used),
                opt_num(r.lambda1),
                r.bifurcations.len().to_string(),
                join(&|b| num(b.lambda0)),
                join(&|b| format!("{:?}", b.tangency).to_lowercase()),
            ]
        })
        .collect();
    let mut files = vec![write_csv(
        &rc.out.join("spectrum.csv"),
        &SPECTRUM_COLUMNS,
        &table,
    )?];

    let curve = ellipse(p.abs_a(), p.sigma1, 360);
    let ell: Vec<Vec<String>> = curve.iter().map(|&(l, d)| vec![num(l), num(d)]).collect();
    files.push(write_csv(&rc.out.join("ellipse.csv"), &["lambda", "d"], &ell)?);

    let markers = rows
        .iter()
        .flat_map(|r| {
            r.bifurcations.iter().map(move |b| Marker {
                at: (b.lambda0, r.d_used),
                color: "black",
            })
        })
        .collect();
    let plot = Plot {
        title: "Bifurcation values from u = 0".into(),
        x_label: "λ".into(),
        y_label: "d".into(),
        lines: vec![Line {
            points: curve,
            color: "#c0202a",
            dashed: false,
        }],
        markers,
    };
    files.push(write_text(&rc.out.join("spectrum.svg"), &plot.render())?);
    Ok(Outcome {
        status: Status::Success,
        files,
        notes: Vec::new(),
    })
}

// ---------------------------------------------------------------- validate

pub fn run_validate(rc: &RunConfig, branches: &Path) -> Result<ValidationReport> {
    let g = rc.grid()?;
    let p = rc.problem(&g)?;
    let records = read_branch_records(branches)?;
    Ok(validate_points(&ParamsSummary::from(&p), &records))
}

pub fn cmd_validate(rc: &RunConfig, branches: Option<&Path>) -> Result<Outcome> {
    let default = rc.out.join("branches.csv");
    let path = branches.unwrap_or(&default);
    let report = run_validate(rc, path)?;
    create_dir(&rc.out)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    let file = write_text(&rc.out.join("validation.json"), &(json + "\n"))?;
    let notes = report
        .checks
        .iter()
        .map(|c| format!("{}: {:?}", c.name, c.status))
        .collect();
    Ok(Outcome {
        status: if report.contradicted() {
            Status::Contradicted
        } else {
            Status::Success
        },
        files: vec![file],
        notes,
    })
}

// ---------------------------------------------------------------- multiplicity

pub const MULTIPLICITY_COLUMNS: [&str; 10] = [
    "kind",
    "name",
    "lambda0",
    "kappa",
    "expected_chi",
    "found_chi",
    "slope",
    "fit_residual",
    "pass",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicityRow {
    pub kind: &'static str,
    pub name: String,
    pub lambda0: Option<f64>,
    pub kappa: Option<u32>,
    pub expected_chi: String,
    pub found_chi: String,
    pub slope: Option<f64>,
    pub fit_residual: Option<f64>,
    pub pass: bool,
    pub error: String,
}

/// κ fits at the detected bifurcation values followed by the pencil suite.
pub fn run_multiplicity(rc: &RunConfig) -> Result<Vec<MultiplicityRow>> {
    let g = rc.grid()?;
    let p = rc.problem(&g)?;
    let curve = linearization_curve(&p, &g);
    let expected = match p.regime() {
        Regime::Subcritical => Some(1),
        Regime::Critical => Some(2),
        Regime::Supercritical => None,
    };
    let mut rows = Vec::new();
    for b in detect_trivial_bifurcations(&p, &g, rc.lambda_range(&p), rc.scan_step) {
        let mut row = MultiplicityRow {
            kind: "linearization",
            name: format!("d={}", p.d_requested),
            lambda0: Some(b.lambda0),
            kappa: None,
            expected_chi: expected.map(|k: u32| k.to_string()).unwrap_or_default(),
            found_chi: String::new(),
            slope: None,
            fit_residual: None,
            pass: false,
            error: String::new(),
        };
        match estimate_kappa(&curve, b.lambda0) {
            Ok(fit) => {
                row.kappa = Some(fit.kappa);
                row.slope = Some(fit.slope);
                row.fit_residual = Some(fit.residual);
                row.pass = expected.is_some_and(|k| fit.kappa == k && (fit.slope - k as f64).abs() <= 0.1);
            }
            Err(e) => row.error = e.to_string(),
        }
        rows.push(row);
    }
    for c in pencil_suite()? {
        rows.push(MultiplicityRow {
            kind: "pencil",
            name: c.name,
            lambda0: None,
            kappa: None,
            expected_chi: c.expected.to_string(),
            found_chi: c.found.to_string(),
            slope: None,
            fit_residual: None,
            pass: c.pass,
            error: String::new(),
        });
    }
    Ok(rows)
}

pub fn cmd_multiplicity(rc: &RunConfig) -> Result<Outcome> {
    let rows = run_multiplicity(rc)?;
    create_dir(&rc.out)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.kind.to_string(),
                r.name.clone(),
                opt_num(r.lambda0),
                r.kappa.map(|k| k.to_string()).unwrap_or_default(),
                r.expected_chi.clone(),
                r.found_chi.clone(),
                opt_num(r.slope),
                opt_num(r.fit_residual),
                r.pass.to_string(),
                r.error.clone(),
            ]
        })
        .collect();
    let file = write_csv(&rc.out.join("multiplicity.csv"), &MULTIPLICITY_COLUMNS, &table)?;
    let failed = rows.iter().any(|r| !r.error.is_empty());
    let wrong = rows
        .iter()
        .any(|r| r.error.is_empty() && !r.pass && !r.expected_chi.is_empty());
    Ok(Outcome {
        status: if wrong {
            Status::Contradicted
        } else if failed {
            Status::NumericalFailure
        } else {
            Status::Success
        },
        files: vec![file],
        notes: Vec::new(),
    })
}
