//! The evaluation report: metrics, confusion matrices, cohort table with
//! risk and bias values, the bias network and an optional flu assessment.
//!
//! Every derived value can be recomputed from the stored inputs with
//! [`ReportDocument::check_consistency`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Attribute;
use crate::eval::{CohortReport, ConfusionMatrix, MetricsReport};
use crate::reasoning::{
    assess_flu, bias_reliability, bias_risk, build_bias_network, risk_error, BiasPriors, DiscreteBayesNet,
    FluAssessment, ImpactCosts, RatioTrust, ReasoningError, RiskProfile, TrustModel, NODE_MATCH,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasDirection {
    Positive,
    Negative,
    Neutral,
}

impl BiasDirection {
    pub fn of(bias: f64) -> Self {
        if bias > 0.0 {
            BiasDirection::Positive
        } else if bias < 0.0 {
            BiasDirection::Negative
        } else {
            BiasDirection::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSection {
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub reliability: f64,
    pub risk: RiskProfile,
    pub trust: f64,
}

/// One cohort; every field after `samples` is `None` for an absent cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub attribute: Attribute,
    pub value: String,
    pub samples: u64,
    pub absent: bool,
    pub metrics: Option<MetricsReport>,
    pub confusion: Option<ConfusionMatrix>,
    pub reliability: Option<f64>,
    pub risk: Option<RiskProfile>,
    pub trust: Option<f64>,
    /// Cohort reliability minus baseline reliability.
    pub bias_reliability: Option<f64>,
    /// Baseline risk minus cohort risk.
    pub bias_risk: Option<f64>,
    /// Sign of `bias_reliability`.
    pub direction: Option<BiasDirection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasNetworkSection {
    pub priors: BiasPriors,
    pub composition: String,
    pub fallbacks: Vec<String>,
    pub network: DiscreteBayesNet,
    /// P(Match = match) with no evidence.
    pub p_match: f64,
    /// P(Match = match) given each single root observation, keyed `node=state`.
    pub p_match_given: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format_version: u32,
    pub classes: Vec<String>,
    pub costs: ImpactCosts,
    pub baseline: BaselineSection,
    pub cohorts: Vec<CohortRow>,
    pub bias_network: BiasNetworkSection,
    pub flu: Option<FluAssessment>,
}

impl ReportDocument {
    pub fn build(
        classes: Vec<String>,
        cohorts: &CohortReport,
        costs: ImpactCosts,
        priors: &BiasPriors,
    ) -> Result<Self, ReasoningError> {
        let trust = RatioTrust;
        let base_risk = risk_error(costs, &cohorts.baseline)?;
        let base_rel = cohorts.baseline.accuracy;
        let baseline = BaselineSection {
            metrics: cohorts.baseline.clone(),
            confusion: cohorts.baseline_confusion.clone(),
            reliability: base_rel,
            risk: base_risk,
            trust: trust.trust(base_risk.risk, base_rel),
        };

        let mut rows = Vec::with_capacity(cohorts.cohorts.len());
        for entry in &cohorts.cohorts {
            let mut row = CohortRow {
                attribute: entry.attribute,
                value: entry.value.clone(),
                samples: entry.samples,
                absent: entry.is_absent(),
                metrics: entry.metrics.clone(),
                confusion: entry.confusion.clone(),
                reliability: None,
                risk: None,
                trust: None,
                bias_reliability: None,
                bias_risk: None,
                direction: None,
            };
            if let Some(m) = &entry.metrics {
                let risk = risk_error(costs, m)?;
                let rel_bias = bias_reliability(m.accuracy, base_rel);
                row.reliability = Some(m.accuracy);
                row.risk = Some(risk);
                row.trust = Some(trust.trust(risk.risk, m.accuracy));
                row.bias_reliability = Some(rel_bias);
                row.bias_risk = Some(bias_risk(base_risk.risk, risk.risk));
                row.direction = Some(BiasDirection::of(rel_bias));
            }
            rows.push(row);
        }

        let bias = build_bias_network(cohorts, priors)?;
        let (p_match, p_match_given) = match_probabilities(&bias.net)?;
        Ok(Self {
            format_version: REPORT_VERSION,
            classes,
            costs,
            baseline,
            cohorts: rows,
            bias_network: BiasNetworkSection {
                priors: priors.clone(),
                composition: bias.composition,
                fallbacks: bias.fallbacks,
                network: bias.net,
                p_match,
                p_match_given,
            },
            flu: None,
        })
    }

    /// Attaches a flu assessment penalised by the baseline risk.
    pub fn with_flu(mut self, p_cough: f64, p_sneeze: f64) -> Result<Self, ReasoningError> {
        self.flu = Some(assess_flu(p_cough, p_sneeze, self.baseline.risk.risk)?);
        Ok(self)
    }

    pub fn cohort(&self, attribute: Attribute, value: &str) -> Option<&CohortRow> {
        self.cohorts.iter().find(|c| c.attribute == attribute && c.value == value)
    }

    /// Recomputes every derived field and lists each mismatch.
    pub fn check_consistency(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let trust = RatioTrust;
        let base = &self.baseline;
        match risk_error(self.costs, &base.metrics) {
            Ok(r) => expect(&mut problems, "baseline risk".into(), base.risk.risk, r.risk),
            Err(e) => problems.push(format!("baseline risk: {e}")),
        }
        expect(&mut problems, "baseline reliability".into(), base.reliability, base.metrics.accuracy);
        expect(&mut problems, "baseline trust".into(), base.trust, trust.trust(base.risk.risk, base.reliability));

        for row in &self.cohorts {
            let name = format!("{}={}", row.attribute, row.value);
            let (Some(m), Some(rel), Some(risk), Some(t), Some(br), Some(bk), Some(dir)) = (
                &row.metrics,
                row.reliability,
                row.risk,
                row.trust,
                row.bias_reliability,
                row.bias_risk,
                row.direction,
            ) else {
                let all_none = row.metrics.is_none()
                    && row.reliability.is_none()
                    && row.risk.is_none()
                    && row.bias_reliability.is_none()
                    && row.bias_risk.is_none();
                if !(row.absent && all_none && row.samples == 0) {
                    problems.push(format!("{name}: partially filled or wrongly marked absent row"));
                }
                continue;
            };
            if row.absent {
                problems.push(format!("{name}: marked absent but filled"));
            }
            expect(&mut problems, format!("{name} reliability"), rel, m.accuracy);
            match risk_error(self.costs, m) {
                Ok(r) => expect(&mut problems, format!("{name} risk"), risk.risk, r.risk),
                Err(e) => problems.push(format!("{name} risk: {e}")),
            }
            expect(&mut problems, format!("{name} trust"), t, trust.trust(risk.risk, rel));
            expect(&mut problems, format!("{name} bias_reliability"), br, bias_reliability(rel, base.reliability));
            expect(&mut problems, format!("{name} bias_risk"), bk, bias_risk(base.risk.risk, risk.risk));
            if dir != BiasDirection::of(br) {
                problems.push(format!("{name}: direction {dir:?} disagrees with bias {br}"));
            }
        }

        if let Some(flu) = &self.flu {
            match assess_flu(flu.p_cough, flu.p_sneeze, flu.risk) {
                Ok(f) => {
                    expect(&mut problems, "flu base".into(), flu.p_flu_base, f.p_flu_base);
                    expect(&mut problems, "flu adjusted".into(), flu.p_flu_adjusted, f.p_flu_adjusted);
                }
                Err(e) => problems.push(format!("flu: {e}")),
            }
        }
        problems
    }
}

fn expect(problems: &mut Vec<String>, what: String, stored: f64, recomputed: f64) {
    if stored != recomputed {
        problems.push(format!("{what}: stored {stored}, recomputed {recomputed}"));
    }
}

fn match_probabilities(net: &DiscreteBayesNet) -> Result<(f64, BTreeMap<String, f64>), ReasoningError> {
    let p = |evidence: &BTreeMap<String, String>| -> Result<f64, ReasoningError> {
        Ok(net.infer(evidence, NODE_MATCH)?.probs[0])
    };
    let p_match = p(&BTreeMap::new())?;
    let mut given = BTreeMap::new();
    for node in net.nodes().iter().filter(|n| n.parents.is_empty()) {
        for state in &node.states {
            let evidence = BTreeMap::from([(node.name.clone(), state.clone())]);
            given.insert(format!("{}={state}", node.name), p(&evidence)?);
        }
    }
    Ok((p_match, given))
}
