use serde::{Deserialize, Serialize};

use crate::continuation::{
    branch_switch, continue_in_d, detect_trivial_bifurcations, isola_seed_candidates, trace_branch,
    Bifurcation, ContinuationConfig, Origin, Seed, SeedFailure, Termination,
};
use crate::grid::Grid;
use crate::problem::{ProblemParams, Regime, Sign};

/// Homotopy starting points tried per loop before giving up.
pub const HOMOTOPY_ATTEMPTS: usize = 6;

/// Where the trivial line is scanned for bifurcations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub lam_range: (f64, f64),
    pub step: f64,
}

impl Scan {
    pub fn for_config(cfg: &ContinuationConfig) -> Self {
        Self {
            lam_range: (cfg.lambda_min, cfg.lambda_max),
            step: 0.01,
        }
    }
}

/// Bifurcations on `u = 0` and the corrected seeds of the branches leaving
/// them, in detection order.
#[derive(Debug, Clone)]
pub struct TrivialSeeds {
    pub bifurcations: Vec<Bifurcation>,
    pub seeds: Vec<Seed>,
    pub failures: Vec<SeedFailure>,
}

pub fn trivial_seeds(p: &ProblemParams, g: &Grid, cfg: &ContinuationConfig, scan: Scan) -> TrivialSeeds {
    let bifurcations = detect_trivial_bifurcations(p, g, scan.lam_range, scan.step);
    let mut seeds = Vec::new();
    let mut failures = Vec::new();
    for b in &bifurcations {
        for s in branch_switch(p, g, cfg, b) {
            match s {
                Ok(seed) => seeds.push(seed),
                Err(f) => failures.push(f),
            }
        }
    }
    TrivialSeeds {
        bifurcations,
        seeds,
        failures,
    }
}

/// Outcome of continuing one critical loop to the requested diffusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyReport {
    pub sign: Sign,
    pub d_from: f64,
    pub d_target: f64,
    /// Best diffusion reached over all attempts.
    pub d_achieved: f64,
    pub completed: bool,
    pub attempts: usize,
    /// λ of the starting point that succeeded, if any.
    pub lambda_start: Option<f64>,
    pub note: Option<String>,
}

/// Seeds for isolas above the critical diffusion.
///
/// The loops at `d = 1/σ₁` are traced and points of large amplitude on each
/// are continued in `d` up to `p.d`. One seed per loop sign is returned for
/// the loops that make it; the others are reported with the diffusion they
/// reached.
pub fn homotopy_seeds(
    p: &ProblemParams,
    g: &Grid,
    cfg: &ContinuationConfig,
    scan: Scan,
    steps: usize,
) -> (Vec<Seed>, Vec<HomotopyReport>) {
    if p.regime() != Regime::Supercritical {
        return (Vec::new(), Vec::new());
    }
    let Ok(crit) = p.with_d(p.critical_d()) else {
        return (Vec::new(), Vec::new());
    };
    let base = trivial_seeds(&crit, g, cfg, scan);
    let mut seeds = Vec::new();
    let mut reports = Vec::new();
    let mut done: Vec<Sign> = Vec::new();
    for seed in &base.seeds {
        let Some(sign) = seed.point.sign.sign() else {
            continue;
        };
        if done.contains(&sign) {
            continue;
        }
        let branch = trace_branch(&crit, g, cfg, seed);
        if !matches!(branch.termination, Termination::LoopClosed { .. }) {
            continue;
        }
        done.push(sign);
        let mut report = HomotopyReport {
            sign,
            d_from: crit.d,
            d_target: p.d,
            d_achieved: crit.d,
            completed: false,
            attempts: 0,
            lambda_start: None,
            note: None,
        };
        for &i in isola_seed_candidates(&branch).iter().take(HOMOTOPY_ATTEMPTS) {
            report.attempts += 1;
            let start = &branch.points[i];
            match continue_in_d(&crit, g, cfg, start, p.d, steps) {
                Ok(r) if r.completed && r.point.sign.sign() == Some(sign) => {
                    report.d_achieved = r.d_achieved;
                    report.completed = true;
                    report.lambda_start = Some(start.lam);
                    seeds.push(Seed {
                        origin: Origin::DHomotopySeed { d_from: crit.d },
                        point: r.point,
                    });
                    break;
                }
                Ok(r) => {
                    if (r.d_achieved - crit.d).abs() > (report.d_achieved - crit.d).abs() {
                        report.d_achieved = r.d_achieved;
                    }
                }
                Err(e) => report.note = Some(e.to_string()),
            }
        }
        if !report.completed && report.note.is_none() {
            report.note = Some(format!(
                "continuation stopped at d = {:.6} before reaching {}",
                report.d_achieved, p.d
            ));
        }
        reports.push(report);
    }
    (seeds, reports)
}
