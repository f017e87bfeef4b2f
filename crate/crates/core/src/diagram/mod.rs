//! Assembly of traced branches into components, classification against the
//! link / loop / isola / unbounded-arm taxonomy, the regime census and the
//! validators.

mod census;
mod pipeline;
mod validate;

use serde::{Deserialize, Serialize};

use crate::continuation::{Bifurcation, Branch, ContinuationConfig, Origin, Termination};
use crate::grid::Interval;
use crate::problem::{ProblemParams, Regime, Sign};

pub use census::{census_check, expected_census, CensusOutcome, CensusReport};
pub use pipeline::{homotopy_seeds, trivial_seeds, HomotopyReport, Scan, TrivialSeeds, HOMOTOPY_ATTEMPTS};
pub use validate::{
    point_records, validate_points, CheckResult, CheckStatus, Offender, PointRecord, ProbeEvidence,
    ValidationReport, BOUND_SLACK, LAMBDA_SIGN_TOL, WINDOW_SLACK,
};

/// Tolerance for matching points on `u = 0` by their λ.
pub const ENDPOINT_TOL: f64 = 1e-3;

/// Serializable identity of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSummary {
    pub d: f64,
    pub d_requested: f64,
    pub q: u32,
    pub a: Vec<f64>,
    pub domain: Interval,
    pub sigma1: f64,
    pub regime: Regime,
}

impl From<&ProblemParams> for ParamsSummary {
    fn from(p: &ProblemParams) -> Self {
        Self {
            d: p.d,
            d_requested: p.d_requested,
            q: p.q,
            a: p.a.clone(),
            domain: p.domain,
            sigma1: p.sigma1,
            regime: p.regime(),
        }
    }
}

impl ParamsSummary {
    pub fn q_is_odd(&self) -> bool {
        self.q % 2 == 1
    }

    /// Parameters without an eigenvector, enough for the closed-form checks.
    pub fn to_params(&self) -> crate::Result<ProblemParams> {
        let mut p = ProblemParams::with_spectrum(
            self.d,
            self.q,
            self.a.clone(),
            self.domain,
            self.sigma1,
            nalgebra::DVector::zeros(0),
        )?;
        p.d_requested = self.d_requested;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArmDirection {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Tag {
    /// Joins two distinct bifurcation points of `u = 0`.
    Link {
        lambda_a: f64,
        lambda_b: f64,
    },
    /// Leaves and returns to the same point of `u = 0`.
    Loop {
        vertex: f64,
    },
    /// Closed and bounded away from `u = 0`.
    Isola {
        lambda_lo: f64,
        lambda_hi: f64,
    },
    /// Left the λ window at `extent`; unboundedness is not claimed beyond it.
    UnboundedArm {
        direction: ArmDirection,
        extent: f64,
    },
    Unclassified {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tag: Tag,
    pub sign: Option<Sign>,
}

impl Classification {
    /// Short label such as `Link+`, `Arm-R` or `Isola-`.
    pub fn label(&self) -> String {
        let s = self.sign.map(|s| s.symbol().to_string()).unwrap_or_default();
        match &self.tag {
            Tag::Link { .. } => format!("Link{s}"),
            Tag::Loop { .. } => format!("Loop{s}"),
            Tag::Isola { .. } => format!("Isola{s}"),
            Tag::UnboundedArm { direction, .. } => match direction {
                ArmDirection::Left => format!("Arm{s}L"),
                ArmDirection::Right => format!("Arm{s}R"),
            },
            Tag::Unclassified { .. } => format!("Unclassified{s}"),
        }
    }

    pub fn is_classified(&self) -> bool {
        !matches!(self.tag, Tag::Unclassified { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// Indices into the diagram's branch list, ascending.
    pub branches: Vec<usize>,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub id: usize,
    pub origin: Origin,
    pub termination: Termination,
    pub sign: Option<Sign>,
    pub points: usize,
    pub arclength: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub sup_min: f64,
    pub sup_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagram {
    pub params: ParamsSummary,
    pub bifurcations: Vec<Bifurcation>,
    pub branches: Vec<Branch>,
    pub components: Vec<Component>,
    pub census: CensusReport,
    pub report: ValidationReport,
}

/// Everything in a [`Diagram`] except the point data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramSummary {
    pub params: ParamsSummary,
    pub bifurcations: Vec<Bifurcation>,
    pub branches: Vec<BranchSummary>,
    pub components: Vec<Component>,
    pub census: CensusReport,
    pub report: ValidationReport,
}

impl Diagram {
    pub fn summary(&self) -> DiagramSummary {
        DiagramSummary {
            params: self.params.clone(),
            bifurcations: self.bifurcations.clone(),
            branches: self
                .branches
                .iter()
                .enumerate()
                .map(|(id, b)| {
                    let (lambda_min, lambda_max) = b.lambda_range();
                    BranchSummary {
                        id,
                        origin: b.origin,
                        termination: b.termination.clone(),
                        sign: b.sign(),
                        points: b.points.len(),
                        arclength: b.arclength,
                        lambda_min,
                        lambda_max,
                        sup_min: b.min_sup(),
                        sup_max: b.max_sup(),
                    }
                })
                .collect(),
            components: self.components.clone(),
            census: self.census.clone(),
            report: self.report.clone(),
        }
    }

    /// Adds nonexistence-probe evidence to the report.
    pub fn attach_probes(&mut self, probes: Vec<ProbeEvidence>) {
        self.report.probes.extend(probes);
    }

    /// True when a validator or the census contradicts the expected theory.
    pub fn contradicted(&self) -> bool {
        self.report.contradicted() || self.census.outcome == CensusOutcome::Contradicted
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut j = i;
        while self.0[j] != r {
            let next = self.0[j];
            self.0[j] = r;
            j = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Points of `u = 0` a branch touches: its origin and its return point.
fn trivial_ends(b: &Branch) -> Vec<f64> {
    let mut ends = Vec::new();
    if let Origin::TrivialBifurcation { lambda0 } = b.origin {
        ends.push(lambda0);
    }
    if let Termination::ReturnedToTrivial { lambda_end } = b.termination {
        ends.push(lambda_end);
    }
    ends
}

/// Branches that may share a component through their trivial endpoints.
fn joins_by_endpoints(b: &Branch) -> bool {
    matches!(b.origin, Origin::TrivialBifurcation { .. })
        && matches!(
            b.termination,
            Termination::ReturnedToTrivial { .. } | Termination::LoopClosed { .. }
        )
}

fn nearest_bifurcation(bifs: &[Bifurcation], lam: f64) -> Option<f64> {
    bifs.iter()
        .map(|b| b.lambda0)
        .filter(|l| (l - lam).abs() <= ENDPOINT_TOL)
        .min_by(|a, b| (a - lam).abs().total_cmp(&(b - lam).abs()))
}

/// Groups endpoint values into clusters closer than [`ENDPOINT_TOL`] and
/// returns a representative per cluster, order independent.
fn cluster(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut reps: Vec<f64> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for x in v {
        if x - last > ENDPOINT_TOL {
            reps.push(x);
        }
        last = x;
    }
    reps
}

/// Classifies the branches `members` of one component.
pub fn classify(
    bifurcations: &[Bifurcation],
    cfg: &ContinuationConfig,
    branches: &[Branch],
    members: &[usize],
) -> Classification {
    let unclassified = |sign, reason: String| Classification {
        tag: Tag::Unclassified { reason },
        sign,
    };
    let mut signs: Vec<Sign> = members.iter().filter_map(|&i| branches[i].sign()).collect();
    signs.sort();
    signs.dedup();
    let sign = match signs.as_slice() {
        [s] => Some(*s),
        [] => return unclassified(None, "no signed points".into()),
        _ => return unclassified(None, "mixed signs within one component".into()),
    };
    if let Some(b) = members.iter().map(|&i| &branches[i]).find(|b| {
        matches!(
            b.termination,
            Termination::NewtonFailure { .. } | Termination::MaxSteps
        )
    }) {
        let reason = match &b.termination {
            Termination::NewtonFailure { reason } => format!("newton failure: {reason}"),
            t => t.label().to_string(),
        };
        return unclassified(sign, reason);
    }

    let min_sup = members
        .iter()
        .map(|&i| branches[i].min_sup())
        .fold(f64::INFINITY, f64::min);
    let (lo, hi) = members
        .iter()
        .map(|&i| branches[i].lambda_range())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| {
            (a.min(c), b.max(d))
        });

    if let Some(b) = members
        .iter()
        .map(|&i| &branches[i])
        .find(|b| matches!(b.termination, Termination::WindowExit { .. }))
    {
        let Termination::WindowExit { lambda_exit } = b.termination else {
            unreachable!()
        };
        let start = b.points.first().map(|p| p.lam).unwrap_or(lambda_exit);
        let direction = if lambda_exit >= start {
            ArmDirection::Right
        } else {
            ArmDirection::Left
        };
        return Classification {
            tag: Tag::UnboundedArm {
                direction,
                extent: lambda_exit,
            },
            sign,
        };
    }

    let all_homotopy = members.iter().all(|&i| {
        matches!(
            branches[i].origin,
            Origin::DHomotopySeed { .. } | Origin::UserSeed
        )
    });
    if all_homotopy {
        let closed = members
            .iter()
            .all(|&i| matches!(branches[i].termination, Termination::LoopClosed { .. }));
        return if !closed {
            unclassified(sign, "seeded branch did not close".into())
        } else if min_sup > cfg.trivial_threshold {
            Classification {
                tag: Tag::Isola {
                    lambda_lo: lo,
                    lambda_hi: hi,
                },
                sign,
            }
        } else {
            unclassified(sign, "closed seeded branch touches u = 0".into())
        };
    }

    let ends: Vec<f64> = members.iter().flat_map(|&i| trivial_ends(&branches[i])).collect();
    let clusters = cluster(&ends);
    let matched: Vec<Option<f64>> = clusters
        .iter()
        .map(|&c| nearest_bifurcation(bifurcations, c))
        .collect();
    match (clusters.as_slice(), matched.as_slice()) {
        ([_, _], [Some(a), Some(b)]) => Classification {
            tag: Tag::Link {
                lambda_a: a.min(*b),
                lambda_b: a.max(*b),
            },
            sign,
        },
        ([_], [Some(v)]) => {
            let closed = members
                .iter()
                .any(|&i| matches!(branches[i].termination, Termination::LoopClosed { .. }));
            if closed {
                Classification {
                    tag: Tag::Loop { vertex: *v },
                    sign,
                }
            } else {
                unclassified(sign, "returned to its origin without closing".into())
            }
        }
        (c, m) if m.iter().any(Option::is_none) => unclassified(
            sign,
            format!("trivial endpoint in {c:?} is not a detected bifurcation"),
        ),
        (c, _) => unclassified(sign, format!("{} trivial endpoints", c.len())),
    }
}

fn components_of(branches: &[Branch]) -> Vec<Vec<usize>> {
    let n = branches.len();
    let mut uf = UnionFind::new(n);
    for sign in [Sign::Positive, Sign::Negative] {
        let joinable: Vec<usize> = (0..n)
            .filter(|&i| branches[i].sign() == Some(sign) && joins_by_endpoints(&branches[i]))
            .collect();
        for (k, &i) in joinable.iter().enumerate() {
            for &j in &joinable[k + 1..] {
                let share = trivial_ends(&branches[i]).iter().any(|a| {
                    trivial_ends(&branches[j])
                        .iter()
                        .any(|b| (a - b).abs() <= ENDPOINT_TOL)
                });
                if share {
                    uf.union(i, j);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of = std::collections::BTreeMap::new();
    for i in 0..n {
        let r = uf.find(i);
        let slot = *root_of.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(i);
    }
    groups
}

/// Builds the components of `branches`, classifies them and runs the
/// census and the point validators.
pub fn assemble(
    p: &ProblemParams,
    cfg: &ContinuationConfig,
    bifurcations: &[Bifurcation],
    branches: Vec<Branch>,
) -> Diagram {
    let params = ParamsSummary::from(p);
    let mut components: Vec<Component> = components_of(&branches)
        .into_iter()
        .map(|members| {
            let classification = classify(bifurcations, cfg, &branches, &members);
            Component {
                branches: members,
                classification,
            }
        })
        .collect();
    components.sort_by(|a, b| {
        let key = |c: &Component| {
            let lo = c
                .branches
                .iter()
                .map(|&i| branches[i].lambda_range().0)
                .fold(f64::INFINITY, f64::min);
            (c.classification.sign, lo)
        };
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(a.branches.cmp(&b.branches))
    });
    let census = census_check(&params, &components);
    let records = point_records(&branches);
    let report = validate_points(&params, &records);
    Diagram {
        params,
        bifurcations: bifurcations.to_vec(),
        branches,
        components,
        census,
        report,
    }
}
