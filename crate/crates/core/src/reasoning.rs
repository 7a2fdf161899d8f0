//! Risk, reliability and bias scores, a default trust combination, discrete
//! Bayesian networks with exact inference, the ensemble-bias network and the
//! flu decision-support network.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Attribute, AttributeValue, Gender, Pose, View};
use crate::eval::{CohortReport, MetricsReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReasoningError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` has no state `{state}`")]
    UnknownState { node: String, state: String },
    #[error("evidence has zero probability")]
    InconsistentEvidence,
    #[error("cohort report lacks attribute `{0}`")]
    MissingAttribute(Attribute),
}

/// Costs of a false non-match (`alpha`) and a false match (`beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactCosts {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ImpactCosts {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

impl ImpactCosts {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ReasoningError> {
        if !(alpha.is_finite() && beta.is_finite() && alpha >= 0.0 && beta >= 0.0) {
            return Err(ReasoningError::Domain(format!(
                "costs must be finite and >= 0, got alpha {alpha}, beta {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    /// `1 - sensitivity`.
    pub fnmr: f64,
    /// `1 - specificity`.
    pub fmr: f64,
}

impl ErrorRates {
    pub fn from_rates(sensitivity: f64, specificity: f64) -> Result<Self, ReasoningError> {
        for (name, v) in [("sensitivity", sensitivity), ("specificity", specificity)] {
            check_fraction(name, v)?;
        }
        Ok(Self { fnmr: 1.0 - sensitivity, fmr: 1.0 - specificity })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub costs: ImpactCosts,
    pub errors: ErrorRates,
    /// `alpha·fnmr + beta·fmr`.
    pub risk: f64,
}

fn check_fraction(name: &str, v: f64) -> Result<(), ReasoningError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ReasoningError::Domain(format!("{name} must lie in [0, 1], got {v}")))
    }
}

pub fn risk_from_rates(costs: ImpactCosts, sensitivity: f64, specificity: f64) -> Result<RiskProfile, ReasoningError> {
    let errors = ErrorRates::from_rates(sensitivity, specificity)?;
    Ok(RiskProfile { costs, errors, risk: costs.alpha * errors.fnmr + costs.beta * errors.fmr })
}

pub fn risk_error(costs: ImpactCosts, metrics: &MetricsReport) -> Result<RiskProfile, ReasoningError> {
    risk_from_rates(costs, metrics.sensitivity, metrics.specificity)
}

/// `risk_i - risk_j`: positive when condition `j` carries less risk than `i`.
pub fn bias_risk(risk_i: f64, risk_j: f64) -> f64 {
    risk_i - risk_j
}

/// `rel_j - rel_i`: positive when condition `j` is more reliable than `i`.
pub fn bias_reliability(rel_j: f64, rel_i: f64) -> f64 {
    rel_j - rel_i
}

/// A trust score that falls with risk and rises with reliability.
pub trait TrustModel {
    fn trust(&self, risk: f64, reliability: f64) -> f64;
}

/// `reliability / (1 + risk)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RatioTrust;

impl TrustModel for RatioTrust {
    fn trust(&self, risk: f64, reliability: f64) -> f64 {
        reliability / (1.0 + risk)
    }
}

/// One discrete variable. CPT rows enumerate parent state combinations with
/// the last listed parent varying fastest; each row holds one probability per
/// state of this node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesNode {
    pub name: String,
    pub states: Vec<String>,
    pub parents: Vec<String>,
    pub cpt: Vec<Vec<f64>>,
}

const ROW_TOLERANCE: f64 = 1e-9;

/// A validated acyclic network. Interchange format (JSON):
/// `{"nodes": [{"name", "states", "parents", "cpt"}, ...]}`, fields in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNet", into = "RawNet")]
pub struct DiscreteBayesNet {
    nodes: Vec<BayesNode>,
    /// Parent indices per node.
    parent_idx: Vec<Vec<usize>>,
    /// Node indices with every parent before its children.
    order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawNet {
    nodes: Vec<BayesNode>,
}

impl TryFrom<RawNet> for DiscreteBayesNet {
    type Error = ReasoningError;
    fn try_from(raw: RawNet) -> Result<Self, ReasoningError> {
        DiscreteBayesNet::new(raw.nodes)
    }
}

impl From<DiscreteBayesNet> for RawNet {
    fn from(net: DiscreteBayesNet) -> Self {
        RawNet { nodes: net.nodes }
    }
}

/// Posterior over the states of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub node: String,
    pub states: Vec<String>,
    pub probs: Vec<f64>,
}

impl Posterior {
    pub fn prob(&self, state: &str) -> Option<f64> {
        self.states.iter().position(|s| s == state).map(|i| self.probs[i])
    }
}

impl DiscreteBayesNet {
    pub fn new(nodes: Vec<BayesNode>) -> Result<Self, ReasoningError> {
        let invalid = |m: String| Err(ReasoningError::InvalidNetwork(m));
        let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.name.as_str(), i)).collect();
        if index.len() != nodes.len() {
            return invalid("duplicate node names".into());
        }
        let mut parent_idx = Vec::with_capacity(nodes.len());
        for node in &nodes {
            if node.states.is_empty() {
                return invalid(format!("node `{}` has no states", node.name));
            }
            let mut seen = node.states.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != node.states.len() {
                return invalid(format!("node `{}` repeats a state", node.name));
            }
            let mut ids = Vec::with_capacity(node.parents.len());
            for p in &node.parents {
                match index.get(p.as_str()) {
                    Some(&i) if !ids.contains(&i) => ids.push(i),
                    Some(_) => return invalid(format!("node `{}` lists parent `{p}` twice", node.name)),
                    None => return invalid(format!("node `{}` has unknown parent `{p}`", node.name)),
                }
            }
            let rows: usize = ids.iter().map(|&i| nodes[i].states.len()).product();
            if node.cpt.len() != rows {
                return invalid(format!("node `{}` needs {rows} CPT rows, has {}", node.name, node.cpt.len()));
            }
            for (r, row) in node.cpt.iter().enumerate() {
                if row.len() != node.states.len() {
                    return invalid(format!("node `{}` CPT row {r} has {} entries", node.name, row.len()));
                }
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return invalid(format!("node `{}` CPT row {r} has an entry outside [0, 1]", node.name));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    return invalid(format!("node `{}` CPT row {r} sums to {sum}", node.name));
                }
            }
            parent_idx.push(ids);
        }

        // Kahn's algorithm; leftovers mean a cycle.
        let mut indegree: Vec<usize> = parent_idx.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..nodes.len()).filter(|&i| indegree[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(i) = ready.pop() {
            order.push(i);
            for (child, parents) in parent_idx.iter().enumerate() {
                if parents.contains(&i) {
                    indegree[child] -= 1;
                    if indegree[child] == 0 {
                        ready.push(child);
                    }
                }
            }
        }
        if order.len() != nodes.len() {
            return invalid("the graph has a cycle".into());
        }
        Ok(Self { nodes, parent_idx, order })
    }

    pub fn nodes(&self) -> &[BayesNode] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Option<&BayesNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    fn index_of(&self, name: &str) -> Result<usize, ReasoningError> {
        self.nodes.iter().position(|n| n.name == name).ok_or_else(|| ReasoningError::UnknownNode(name.to_string()))
    }

    fn state_of(&self, node: usize, state: &str) -> Result<usize, ReasoningError> {
        self.nodes[node].states.iter().position(|s| s == state).ok_or_else(|| ReasoningError::UnknownState {
            node: self.nodes[node].name.clone(),
            state: state.to_string(),
        })
    }

    /// Probability of one full assignment (state index per node).
    pub fn joint(&self, assignment: &[usize]) -> f64 {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let row = self.parent_idx[i].iter().fold(0, |acc, &p| acc * self.nodes[p].states.len() + assignment[p]);
                node.cpt[row][assignment[i]]
            })
            .product()
    }

    /// Exact posterior of `query` given `evidence` (node name → state name),
    /// summing the joint over every assignment consistent with the evidence.
    pub fn infer(&self, evidence: &BTreeMap<String, String>, query: &str) -> Result<Posterior, ReasoningError> {
        let q = self.index_of(query)?;
        let mut fixed: Vec<Option<usize>> = vec![None; self.nodes.len()];
        for (name, state) in evidence {
            let i = self.index_of(name)?;
            fixed[i] = Some(self.state_of(i, state)?);
        }
        let free: Vec<usize> = (0..self.nodes.len()).filter(|&i| fixed[i].is_none()).collect();
        let mut assignment: Vec<usize> = fixed.iter().map(|s| s.unwrap_or(0)).collect();
        let mut mass = vec![0.0; self.nodes[q].states.len()];
        loop {
            mass[assignment[q]] += self.joint(&assignment);
            // odometer over the free nodes
            let mut k = 0;
            while k < free.len() {
                let i = free[k];
                assignment[i] += 1;
                if assignment[i] < self.nodes[i].states.len() {
                    break;
                }
                assignment[i] = 0;
                k += 1;
            }
            if k == free.len() {
                break;
            }
        }
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return Err(ReasoningError::InconsistentEvidence);
        }
        Ok(Posterior {
            node: query.to_string(),
            states: self.nodes[q].states.clone(),
            probs: mass.iter().map(|m| m / total).collect(),
        })
    }

    /// Nodes ordered so that parents precede children.
    pub fn topological_order(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.nodes[i].name.as_str()).collect()
    }
}

/// Root priors of the bias network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasPriors {
    /// male, female
    pub gender: [f64; 2],
    /// stand, walk
    pub pose: [f64; 2],
    /// left, center, right
    pub view: [f64; 3],
}

impl Default for BiasPriors {
    fn default() -> Self {
        Self { gender: [0.6, 0.4], pose: [0.5, 0.5], view: [1.0 / 3.0; 3] }
    }
}

pub const NODE_GENDER: &str = "G";
pub const NODE_POSE: &str = "P";
pub const NODE_VIEW: &str = "V";
pub const NODE_VALID: &str = "Valid";
pub const NODE_MATCH: &str = "Match";

/// How the Valid CPT is composed from cohort rates.
pub const VALID_COMPOSITION: &str = "P(valid | g, p, v) = clamp01(base * (r_g / base) * (r_p / base) * (r_v / base)), \
where base is the baseline rank-1 accuracy and r_x the accuracy of cohort x; absent cohorts use base. \
P(match | valid) = baseline sensitivity, P(match | invalid) = 1 - baseline specificity.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasNetwork {
    pub net: DiscreteBayesNet,
    pub composition: String,
    /// Cohorts whose rate fell back to the baseline.
    pub fallbacks: Vec<String>,
}

fn cohort_rate(
    report: &CohortReport,
    value: AttributeValue,
    fallbacks: &mut Vec<String>,
) -> Result<f64, ReasoningError> {
    let entry = report.get(value).ok_or(ReasoningError::MissingAttribute(value.attribute()))?;
    Ok(match &entry.metrics {
        Some(m) => m.accuracy,
        None => {
            log::warn!("cohort {value} is absent; using the baseline rate");
            fallbacks.push(value.to_string());
            report.baseline.accuracy
        }
    })
}

fn state_names<T: ToString>(values: &[T]) -> Vec<String> {
    values.iter().map(ToString::to_string).collect()
}

pub fn build_bias_network(report: &CohortReport, priors: &BiasPriors) -> Result<BiasNetwork, ReasoningError> {
    let mut fallbacks = Vec::new();
    let base = report.baseline.accuracy;
    let g: Vec<f64> = Gender::ALL
        .iter()
        .map(|&v| cohort_rate(report, AttributeValue::Gender(v), &mut fallbacks))
        .collect::<Result<_, _>>()?;
    let p: Vec<f64> = Pose::ALL
        .iter()
        .map(|&v| cohort_rate(report, AttributeValue::Pose(v), &mut fallbacks))
        .collect::<Result<_, _>>()?;
    let v: Vec<f64> = View::ALL
        .iter()
        .map(|&v| cohort_rate(report, AttributeValue::View(v), &mut fallbacks))
        .collect::<Result<_, _>>()?;

    let mut valid_cpt = Vec::with_capacity(12);
    for &rg in &g {
        for &rp in &p {
            for &rv in &v {
                let pv = if base > 0.0 { (rg * rp * rv / (base * base)).clamp(0.0, 1.0) } else { 0.0 };
                valid_cpt.push(vec![pv, 1.0 - pv]);
            }
        }
    }
    let sens = report.baseline.sensitivity;
    let fmr = 1.0 - report.baseline.specificity;
    let root = |name: &str, states: Vec<String>, prior: &[f64]| BayesNode {
        name: name.into(),
        states,
        parents: vec![],
        cpt: vec![prior.to_vec()],
    };
    let nodes = vec![
        root(NODE_GENDER, state_names(Gender::ALL), &priors.gender),
        root(NODE_POSE, state_names(Pose::ALL), &priors.pose),
        root(NODE_VIEW, state_names(View::ALL), &priors.view),
        BayesNode {
            name: NODE_VALID.into(),
            states: vec!["valid".into(), "invalid".into()],
            parents: vec![NODE_GENDER.into(), NODE_POSE.into(), NODE_VIEW.into()],
            cpt: valid_cpt,
        },
        BayesNode {
            name: NODE_MATCH.into(),
            states: vec!["match".into(), "non_match".into()],
            parents: vec![NODE_VALID.into()],
            cpt: vec![vec![sens, 1.0 - sens], vec![fmr, 1.0 - fmr]],
        },
    ];
    Ok(BiasNetwork { net: DiscreteBayesNet::new(nodes)?, composition: VALID_COMPOSITION.into(), fallbacks })
}

pub const NODE_COUGH: &str = "Cough";
pub const NODE_SNEEZE: &str = "Sneeze";
pub const NODE_FLU: &str = "Flu";

/// Cough and Sneeze feed Flu; each present symptom contributes half of the
/// flu probability, so the Flu marginal is the mean of the symptom
/// probabilities.
pub fn flu_network(p_cough: f64, p_sneeze: f64) -> Result<DiscreteBayesNet, ReasoningError> {
    check_fraction("p_cough", p_cough)?;
    check_fraction("p_sneeze", p_sneeze)?;
    let yes_no = || vec!["yes".to_string(), "no".to_string()];
    let mut flu_cpt = Vec::with_capacity(4);
    for c in [1.0, 0.0] {
        for s in [1.0, 0.0] {
            let p: f64 = (c + s) / 2.0;
            flu_cpt.push(vec![p, 1.0 - p]);
        }
    }
    DiscreteBayesNet::new(vec![
        BayesNode {
            name: NODE_COUGH.into(),
            states: yes_no(),
            parents: vec![],
            cpt: vec![vec![p_cough, 1.0 - p_cough]],
        },
        BayesNode {
            name: NODE_SNEEZE.into(),
            states: yes_no(),
            parents: vec![],
            cpt: vec![vec![p_sneeze, 1.0 - p_sneeze]],
        },
        BayesNode {
            name: NODE_FLU.into(),
            states: yes_no(),
            parents: vec![NODE_COUGH.into(), NODE_SNEEZE.into()],
            cpt: flu_cpt,
        },
    ])
}

pub fn flu_probability(p_cough: f64, p_sneeze: f64) -> Result<f64, ReasoningError> {
    check_fraction("p_cough", p_cough)?;
    check_fraction("p_sneeze", p_sneeze)?;
    Ok((p_cough + p_sneeze) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluAssessment {
    pub p_cough: f64,
    pub p_sneeze: f64,
    pub risk: f64,
    pub p_flu_base: f64,
    /// `p_flu_base / (1 + risk)`.
    pub p_flu_adjusted: f64,
}

pub fn risk_adjusted_flu(p_flu: f64, risk: f64) -> Result<f64, ReasoningError> {
    check_fraction("p_flu", p_flu)?;
    if !(risk >= 0.0) || !risk.is_finite() {
        return Err(ReasoningError::Domain(format!("risk must be finite and >= 0, got {risk}")));
    }
    Ok(p_flu / (1.0 + risk))
}

pub fn assess_flu(p_cough: f64, p_sneeze: f64, risk: f64) -> Result<FluAssessment, ReasoningError> {
    let p_flu_base = flu_probability(p_cough, p_sneeze)?;
    let p_flu_adjusted = risk_adjusted_flu(p_flu_base, risk)?;
    Ok(FluAssessment { p_cough, p_sneeze, risk, p_flu_base, p_flu_adjusted })
}
