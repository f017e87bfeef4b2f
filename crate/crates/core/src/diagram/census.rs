use serde::{Deserialize, Serialize};

use super::{Component, ParamsSummary, Tag};
use crate::problem::{Regime, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CensusOutcome {
    Pass,
    /// Some expected component was not witnessed; inconclusive.
    NotFound,
    /// A found component is incompatible with the regime.
    Contradicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub expected: Vec<String>,
    pub found: Vec<String>,
    /// Found labels left out of the comparison.
    pub excluded: Vec<String>,
    pub outcome: CensusOutcome,
    pub notes: Vec<String>,
}

/// Expected component labels for the regime and parity of `q`.
pub fn expected_census(regime: Regime, q_odd: bool) -> Vec<&'static str> {
    match (regime, q_odd) {
        (Regime::Subcritical, true) => vec!["Link+", "Link-"],
        (Regime::Subcritical, false) => vec!["Link+", "Arm-L", "Arm-R"],
        (Regime::Critical, true) => vec!["Loop+", "Loop-"],
        (Regime::Critical, false) => vec!["Loop+", "Arm-L", "Arm-R"],
        (Regime::Supercritical, true) => vec!["Isola+", "Isola-"],
        (Regime::Supercritical, false) => vec!["Isola+"],
    }
}

/// Compares the classified components against the expected census.
///
/// Unclassified components are listed in the notes and never count as
/// contradictions. Above the critical diffusion with even `q` negative
/// components are excluded, and with odd `q` a negative unbounded arm is
/// reported without a verdict.
pub fn census_check(params: &ParamsSummary, components: &[Component]) -> CensusReport {
    let q_odd = params.q_is_odd();
    let expected: Vec<String> = expected_census(params.regime, q_odd)
        .into_iter()
        .map(String::from)
        .collect();
    let mut found = Vec::new();
    let mut excluded = Vec::new();
    let mut notes = Vec::new();
    let mut contradicted = false;
    for c in components {
        let label = c.classification.label();
        let negative = c.classification.sign == Some(Sign::Negative);
        if params.regime == Regime::Supercritical && negative {
            let open = !q_odd || matches!(c.classification.tag, Tag::UnboundedArm { .. });
            if open {
                notes.push(format!("{label} reported without a verdict"));
                excluded.push(label);
                continue;
            }
        }
        if let Tag::Unclassified { reason } = &c.classification.tag {
            notes.push(format!("{label}: {reason}"));
            continue;
        }
        if !expected.contains(&label) {
            notes.push(format!("{label} is not expected in this regime"));
            contradicted = true;
        }
        found.push(label);
    }
    for e in &expected {
        let want = expected.iter().filter(|x| *x == e).count();
        let got = found.iter().filter(|x| *x == e).count();
        if got > want {
            notes.push(format!("{e} found {got} times"));
        }
    }
    found.sort();
    excluded.sort();
    let all_found = expected.iter().all(|e| found.contains(e));
    let outcome = if contradicted {
        CensusOutcome::Contradicted
    } else if all_found {
        CensusOutcome::Pass
    } else {
        CensusOutcome::NotFound
    };
    CensusReport {
        expected,
        found,
        excluded,
        outcome,
        notes,
    }
}
