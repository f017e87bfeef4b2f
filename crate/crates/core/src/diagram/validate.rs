use serde::{Deserialize, Serialize};

use super::ParamsSummary;
use crate::continuation::Branch;
use crate::problem::{apriori_bound, lambda_window, LambdaWindow, Regime, Sign, SignClass, WindowBounds};

/// Absolute slack on the sup-norm bound.
pub const BOUND_SLACK: f64 = 1e-8;
/// Slack on the λ-window, covering the mesh offset of the bifurcation values.
pub const WINDOW_SLACK: f64 = 1e-3;
/// λ of points next to the vertex at `λ = 0` is resolved to about this
/// absolute accuracy, so smaller values of the wrong sign are not counted.
pub const LAMBDA_SIGN_TOL: f64 = 1e-9;
const MAX_OFFENDERS: usize = 20;

/// The data a validator needs from one branch point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub branch: usize,
    pub index: usize,
    pub lam: f64,
    pub sup_norm: f64,
    pub sign: SignClass,
}

pub fn point_records(branches: &[Branch]) -> Vec<PointRecord> {
    branches
        .iter()
        .enumerate()
        .flat_map(|(b, br)| {
            br.points.iter().enumerate().map(move |(i, pt)| PointRecord {
                branch: b,
                index: i,
                lam: pt.lam,
                sup_norm: pt.sup_norm,
                sign: pt.sign,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub branch: usize,
    pub point: usize,
    /// Signed distance to the admissible set; negative means violated.
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub scope: String,
    pub checked: usize,
    pub violations: usize,
    /// Smallest margin seen; `None` when nothing was checked.
    pub worst_margin: Option<f64>,
    pub offenders: Vec<Offender>,
    pub status: CheckStatus,
}

impl CheckResult {
    fn new(name: &str, scope: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            scope: scope.into(),
            checked: 0,
            violations: 0,
            worst_margin: None,
            offenders: Vec::new(),
            status: CheckStatus::NotApplicable,
        }
    }

    fn record(&mut self, r: &PointRecord, margin: f64, ok: bool) {
        self.checked += 1;
        let margin = if margin.is_finite() { margin } else { -1.0 };
        self.worst_margin = Some(self.worst_margin.map_or(margin, |w| w.min(margin)));
        if !ok {
            self.violations += 1;
            if self.offenders.len() < MAX_OFFENDERS {
                self.offenders.push(Offender {
                    branch: r.branch,
                    point: r.index,
                    margin,
                });
            }
        }
    }

    fn finish(mut self) -> Self {
        self.status = if self.checked == 0 {
            CheckStatus::NotApplicable
        } else if self.violations == 0 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        self
    }
}

/// Outcome of a deflated search where theory predicts no solution, or where
/// one is expected. Always labelled as evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEvidence {
    pub description: String,
    pub lam: f64,
    pub sign: Sign,
    pub attempts: usize,
    pub hits: usize,
    pub expect_none: bool,
    pub label: String,
    pub contradicts: bool,
}

impl ProbeEvidence {
    pub fn new(
        description: impl Into<String>,
        lam: f64,
        sign: Sign,
        attempts: usize,
        hits: usize,
        expect_none: bool,
    ) -> Self {
        Self {
            description: description.into(),
            lam,
            sign,
            attempts,
            hits,
            expect_none,
            label: "evidence".into(),
            contradicts: expect_none && hits > 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub probes: Vec<ProbeEvidence>,
}

impl ValidationReport {
    pub fn contradicted(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Fail) || self.probes.iter().any(|p| p.contradicts)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn window_margin(w: &LambdaWindow, lam: f64) -> Option<f64> {
    match w.bounds {
        WindowBounds::Interval { lo, hi } => Some((lam - lo).min(hi - lam)),
        WindowBounds::Empty => Some(-f64::MAX),
        WindowBounds::Unconstrained => None,
    }
}

/// Runs the point validators: sup-norm bounds, λ-windows, sign persistence
/// along branches, the sign of λ above the critical diffusion and the
/// absence of negative solutions at `λ = 0` for even `q`.
///
/// Bounds and windows for negative solutions are only known for odd `q` and
/// are skipped otherwise.
pub fn validate_points(params: &ParamsSummary, records: &[PointRecord]) -> ValidationReport {
    let odd = params.q_is_odd();
    let at_or_above = matches!(params.regime, Regime::Critical | Regime::Supercritical);
    let at_or_below = matches!(params.regime, Regime::Critical | Regime::Subcritical);
    let windows = params.to_params().ok().map(|p| {
        (
            lambda_window(&p, Sign::Positive).ok(),
            lambda_window(&p, Sign::Negative).ok(),
        )
    });

    let mut bound = CheckResult::new(
        "apriori_bound",
        if odd {
            "positive and negative points"
        } else {
            "positive points (no bound for negative solutions with even q)"
        },
    );
    let mut window = CheckResult::new(
        "lambda_window",
        if odd {
            "positive and negative points"
        } else {
            "positive points (no window for negative solutions with even q)"
        },
    );
    let mut sign_check = CheckResult::new("sign_consistency", "all nontrivial points of a branch");
    let mut pos_lambda = CheckResult::new(
        "positive_lambda_positive",
        if at_or_above {
            "positive points, d at or above critical"
        } else {
            "not applicable below the critical diffusion"
        },
    );
    let mut neg_lambda = CheckResult::new(
        "negative_lambda_negative",
        if at_or_above && odd {
            "negative points, odd q, d at or above critical"
        } else {
            "only for odd q at or above the critical diffusion"
        },
    );
    let mut zero = CheckResult::new(
        "no_negative_at_zero",
        if at_or_below && !odd {
            "negative points, even q, d at or below critical"
        } else {
            "only for even q at or below the critical diffusion"
        },
    );

    let mut branch_sign: std::collections::BTreeMap<usize, Sign> = Default::default();
    let mut prev: Option<&PointRecord> = None;
    for r in records {
        let same_branch_prev = prev.filter(|p| p.branch == r.branch && p.index + 1 == r.index);
        prev = Some(r);
        if r.sign == SignClass::Trivial {
            continue;
        }
        match r.sign.sign() {
            None => sign_check.record(r, -r.sup_norm, false),
            Some(s) => {
                let expect = *branch_sign.entry(r.branch).or_insert(s);
                let ok = s == expect;
                sign_check.record(r, if ok { 0.0 } else { -r.sup_norm }, ok);
            }
        }
        let Some(sign) = r.sign.sign() else {
            continue;
        };

        if sign == Sign::Positive || odd {
            let m = apriori_bound(r.lam, params.q, sign) + BOUND_SLACK - r.sup_norm;
            bound.record(r, m, m >= 0.0);
            let w = match (&windows, sign) {
                (Some((Some(w), _)), Sign::Positive) => Some(w),
                (Some((_, Some(w))), Sign::Negative) => Some(w),
                _ => None,
            };
            if let Some(m) = w.and_then(|w| window_margin(w, r.lam)) {
                window.record(r, m + WINDOW_SLACK, m + WINDOW_SLACK >= 0.0);
            }
        }
        if at_or_above && sign == Sign::Positive {
            pos_lambda.record(r, r.lam, r.lam > -LAMBDA_SIGN_TOL);
        }
        if at_or_above && odd && sign == Sign::Negative {
            neg_lambda.record(r, -r.lam, r.lam < LAMBDA_SIGN_TOL);
        }
        if at_or_below && !odd && sign == Sign::Negative {
            let crossed = same_branch_prev
                .filter(|p| p.sign == SignClass::StrictlyNegative)
                .is_some_and(|p| p.lam * r.lam < 0.0);
            let ok = r.lam != 0.0 && !crossed;
            zero.record(r, if ok { r.lam.abs() } else { -r.sup_norm }, ok);
        }
    }

    ValidationReport {
        checks: [bound, window, sign_check, pos_lambda, neg_lambda, zero]
            .into_iter()
            .map(CheckResult::finish)
            .collect(),
        probes: Vec::new(),
    }
}
