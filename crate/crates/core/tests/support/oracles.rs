//! Independent oracles for the metric, risk and inference layers. Each check
//! panics with a description of the first disagreement.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resflu_core::data::{Attribute, Attributes, Gender, Pose, View};
use resflu_core::eval::{cohort_eval, confusion_matrix, metrics_from_cm};
use resflu_core::model::{compute_losses, HeadOutputs};
use resflu_core::nn::{kl_divergence, tempered_softmax, Tensor};
use resflu_core::reasoning::{
    assess_flu, bias_reliability, bias_risk, build_bias_network, flu_network, risk_adjusted_flu, risk_from_rates,
    BayesNode, BiasPriors, DiscreteBayesNet, ImpactCosts, ReasoningError, NODE_FLU, NODE_GENDER, NODE_MATCH, NODE_POSE,
    NODE_VIEW,
};

/// Tolerance for values compared against three-decimal table figures.
pub const TABLE_TOL: f64 = 0.0005;

fn near(what: &str, got: f64, want: f64, tol: f64) {
    assert!((got - want).abs() <= tol, "{what}: got {got}, want {want} (tol {tol})");
}

/// Baseline: sensitivity 0.837, specificity 0.852, reliability 0.825.
/// Left view: 0.876 / 0.856. Center view: 0.796 / 0.847. Right view reliability 0.881.
pub fn worked_examples() {
    let start = Instant::now();
    let unit = ImpactCosts::default();
    let base = risk_from_rates(unit, 0.837, 0.852).unwrap().risk;
    let left = risk_from_rates(unit, 0.876, 0.856).unwrap().risk;
    let center = risk_from_rates(unit, 0.796, 0.847).unwrap().risk;
    near("baseline risk", base, 0.311, TABLE_TOL);
    near("left view risk", left, 0.268, TABLE_TOL);
    near("center view risk", center, 0.357, TABLE_TOL);
    near("bias risk baseline to left", bias_risk(base, left), 0.043, TABLE_TOL);
    near("bias risk baseline to center", bias_risk(base, center), -0.046, TABLE_TOL);
    near("bias reliability right view", bias_reliability(0.881, 0.825), 0.056, TABLE_TOL);

    let flu = assess_flu(0.783, 0.817, base).unwrap();
    near("flu base", flu.p_flu_base, 0.800, TABLE_TOL);
    near("flu adjusted", flu.p_flu_adjusted, 0.610, TABLE_TOL);
    assert_eq!(risk_adjusted_flu(flu.p_flu_base, 0.0).unwrap(), flu.p_flu_base, "zero risk must not penalise");

    // risk is linear in each cost and bias is antisymmetric
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..200 {
        let (sens, spec) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let (a, b) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let r = risk_from_rates(ImpactCosts::new(a, b).unwrap(), sens, spec).unwrap().risk;
        near("risk linearity", r, a * (1.0 - sens) + b * (1.0 - spec), 1e-12);
        let doubled = risk_from_rates(ImpactCosts::new(2.0 * a, 2.0 * b).unwrap(), sens, spec).unwrap().risk;
        near("risk scaling", doubled, 2.0 * r, 1e-12);
        let (x, y) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        assert_eq!(bias_risk(x, y), -bias_risk(y, x));
        assert_eq!(bias_reliability(x, y), -bias_reliability(y, x));
        // a better cohort always has lower risk under positive costs
        let worse = risk_from_rates(ImpactCosts::new(a, b).unwrap(), sens * 0.9, spec).unwrap().risk;
        assert!(worse >= r);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "worked-example checks took {elapsed:?}");
}

/// Builds predictions and truths for a binary problem from its four counts,
/// with class 1 as the positive class.
fn binary_set(tp: usize, tn: usize, fp: usize, fn_: usize) -> (Vec<usize>, Vec<usize>) {
    let mut p = Vec::new();
    let mut t = Vec::new();
    for (n, pred, truth) in [(tp, 1, 1), (tn, 0, 0), (fp, 1, 0), (fn_, 0, 1)] {
        p.extend(std::iter::repeat_n(pred, n));
        t.extend(std::iter::repeat_n(truth, n));
    }
    (p, t)
}

pub fn metrics_oracle() {
    let (p, t) = binary_set(3, 4, 1, 2);
    let m = metrics_from_cm(&confusion_matrix(&p, &t, 2).unwrap()).unwrap();
    assert_eq!((m.accuracy, m.precision, m.sensitivity, m.specificity), (0.7, 0.75, 0.6, 0.8));

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for round in 0..1000 {
        let n_classes = rng.random_range(3..9);
        let len = rng.random_range(1..300);
        let skill = rng.random_range(0.0..1.0);
        let truths: Vec<usize> = (0..len).map(|_| rng.random_range(0..n_classes)).collect();
        let preds: Vec<usize> =
            truths.iter().map(|&t| if rng.random_bool(skill) { t } else { rng.random_range(0..n_classes) }).collect();
        let cm = confusion_matrix(&preds, &truths, n_classes).unwrap();
        let m = metrics_from_cm(&cm).unwrap();
        let correct = preds.iter().zip(&truths).filter(|(a, b)| a == b).count();
        let accuracy = correct as f64 / len as f64;
        assert_eq!(m.accuracy, accuracy, "round {round}: accuracy");
        assert_eq!(m.precision, m.accuracy, "round {round}: micro precision");
        assert_eq!(cm.total(), len as u64);
        assert_eq!(cm.trace(), correct as u64);

        // macro one-vs-rest rates from a direct tally
        let (mut sens, mut spec) = (Vec::new(), Vec::new());
        for c in 0..n_classes {
            let count = |f: &dyn Fn(usize, usize) -> bool| preds.iter().zip(&truths).filter(|(&p, &t)| f(p, t)).count();
            let tp = count(&|p, t| p == c && t == c);
            let fn_ = count(&|p, t| p != c && t == c);
            let fp = count(&|p, t| p == c && t != c);
            let tn = count(&|p, t| p != c && t != c);
            if tp + fn_ > 0 {
                sens.push(tp as f64 / (tp + fn_) as f64);
                if tn + fp > 0 {
                    spec.push(tn as f64 / (tn + fp) as f64);
                }
            }
        }
        near("macro sensitivity", m.sensitivity, sens.iter().sum::<f64>() / sens.len() as f64, 1e-12);
        if !spec.is_empty() {
            near("macro specificity", m.specificity, spec.iter().sum::<f64>() / spec.len() as f64, 1e-12);
        }
    }

    // equal support per class: mean of the row-normalised diagonal is the accuracy
    for round in 0..200 {
        let n_classes = rng.random_range(2..7);
        let per_class = rng.random_range(1..40);
        let truths: Vec<usize> = (0..n_classes).flat_map(|c| std::iter::repeat_n(c, per_class)).collect();
        let preds: Vec<usize> =
            truths.iter().map(|&t| if rng.random_bool(0.6) { t } else { rng.random_range(0..n_classes) }).collect();
        let cm = confusion_matrix(&preds, &truths, n_classes).unwrap();
        let diag: f64 =
            (0..n_classes).map(|c| cm.counts[c][c] as f64 / per_class as f64).sum::<f64>() / n_classes as f64;
        let m = metrics_from_cm(&cm).unwrap();
        near(&format!("balanced round {round}: diagonal mean"), diag, m.accuracy, 1e-12);
        if n_classes > 2 {
            near(&format!("balanced round {round}: macro sensitivity"), m.sensitivity, m.accuracy, 1e-12);
        }
    }
}

/// Posterior by listing the whole joint table, independent of the
/// evidence-clamping enumeration inside `infer`.
pub fn brute_force(net: &DiscreteBayesNet, evidence: &BTreeMap<String, String>, query: &str) -> Option<Vec<f64>> {
    let nodes = net.nodes();
    let index = |name: &str| nodes.iter().position(|n| n.name == name).unwrap();
    let sizes: Vec<usize> = nodes.iter().map(|n| n.states.len()).collect();
    let total: usize = sizes.iter().product();
    let q = index(query);
    let observed: Vec<(usize, usize)> = evidence
        .iter()
        .map(|(n, s)| {
            let i = index(n);
            (i, nodes[i].states.iter().position(|x| x == s).unwrap())
        })
        .collect();
    let mut mass = vec![0.0; sizes[q]];
    for code in 0..total {
        let mut rest = code;
        let assignment: Vec<usize> = sizes
            .iter()
            .map(|&s| {
                let v = rest % s;
                rest /= s;
                v
            })
            .collect();
        if observed.iter().any(|&(i, s)| assignment[i] != s) {
            continue;
        }
        let mut p = 1.0;
        for (i, node) in nodes.iter().enumerate() {
            let mut row = 0;
            for parent in &node.parents {
                let j = index(parent);
                row = row * sizes[j] + assignment[j];
            }
            p *= node.cpt[row][assignment[i]];
        }
        mass[assignment[q]] += p;
    }
    let z: f64 = mass.iter().sum();
    (z > 0.0).then(|| mass.iter().map(|m| m / z).collect())
}

fn random_row(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.01..1.0) }).collect();
    let s: f64 = raw.iter().sum();
    if s == 0.0 {
        return vec![1.0 / k as f64; k];
    }
    raw.iter().map(|v| v / s).collect()
}

/// A random DAG of `n` nodes; parents come from earlier positions in a hidden
/// order, and the node list is shuffled so storage order is not topological.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize) -> DiscreteBayesNet {
    let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(2..4)).collect();
    let mut nodes = Vec::new();
    for i in 0..n {
        let parents: Vec<usize> = (0..i).filter(|_| rng.random_bool(0.5)).take(3).collect();
        let rows: usize = parents.iter().map(|&p| sizes[p]).product();
        nodes.push(BayesNode {
            name: format!("N{i}"),
            states: (0..sizes[i]).map(|s| format!("s{s}")).collect(),
            parents: parents.iter().map(|p| format!("N{p}")).collect(),
            cpt: (0..rows).map(|_| random_row(rng, sizes[i])).collect(),
        });
    }
    nodes.shuffle(rng);
    DiscreteBayesNet::new(nodes).unwrap()
}

fn compare_all_queries(net: &DiscreteBayesNet, rng: &mut ChaCha8Rng, trials: usize, label: &str) {
    let names: Vec<String> = net.nodes().iter().map(|n| n.name.clone()).collect();
    for _ in 0..trials {
        let mut evidence = BTreeMap::new();
        for node in net.nodes() {
            if rng.random_bool(0.4) {
                let s = rng.random_range(0..node.states.len());
                evidence.insert(node.name.clone(), node.states[s].clone());
            }
        }
        for query in &names {
            let got = net.infer(&evidence, query);
            match (brute_force(net, &evidence, query), got) {
                (Some(want), Ok(post)) => {
                    for (a, b) in post.probs.iter().zip(&want) {
                        assert!((a - b).abs() < 1e-9, "{label}: P({query} | {evidence:?}) {a} vs {b}");
                    }
                }
                (None, Err(ReasoningError::InconsistentEvidence)) => {}
                (want, got) => panic!("{label}: P({query} | {evidence:?}) oracle {want:?} vs {got:?}"),
            }
        }
    }
}

fn attrs(g: Gender, p: Pose, v: View) -> Attributes {
    Attributes { gender: g, pose: p, view: v, subject_id: "S00".into() }
}

/// A cohort evaluation over every attribute combination with per-cell
/// accuracy given by `correct(cell)` out of `per_cell`.
pub fn cohort_fixture(
    per_cell: usize,
    correct: impl Fn(Gender, Pose, View) -> usize,
) -> resflu_core::eval::CohortReport {
    let (mut p, mut t, mut a) = (Vec::new(), Vec::new(), Vec::new());
    for &g in Gender::ALL.iter() {
        for &pose in Pose::ALL.iter() {
            for &v in View::ALL.iter() {
                let k = correct(g, pose, v);
                for i in 0..per_cell {
                    let truth = i % 3;
                    t.push(truth);
                    p.push(if i < k { truth } else { (truth + 1) % 3 });
                    a.push(attrs(g, pose, v));
                }
            }
        }
    }
    cohort_eval(&p, &t, &a, 3, &Attribute::ALL).unwrap()
}

pub fn bayes_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for k in 0..12 {
        let n = 1 + k % 5;
        let net = random_network(&mut rng, n);
        compare_all_queries(&net, &mut rng, 25, &format!("random net {k}"));
    }

    // the bias topology; the 0.33 view entries are renormalised to 1/3
    let priors = BiasPriors { gender: [0.60, 0.40], pose: [0.50, 0.50], view: [0.33 / 0.99; 3] };
    let report = cohort_fixture(12, |g, p, v| {
        8 + (g == Gender::Male) as usize + 2 * (p == Pose::Stand) as usize - (v == View::Center) as usize * 3
    });
    let bias = build_bias_network(&report, &priors).unwrap();
    assert!(bias.fallbacks.is_empty());
    compare_all_queries(&bias.net, &mut rng, 60, "bias network");
    let g = bias.net.infer(&BTreeMap::new(), NODE_GENDER).unwrap();
    near("gender prior", g.probs[0], 0.60, 1e-12);
    let v = bias.net.infer(&BTreeMap::new(), NODE_VIEW).unwrap();
    for p in &v.probs {
        near("view prior", *p, 1.0 / 3.0, 1e-12);
    }
    let center = BTreeMap::from([(NODE_VIEW.to_string(), "center".to_string())]);
    let left = BTreeMap::from([(NODE_VIEW.to_string(), "left".to_string())]);
    let pc = bias.net.infer(&center, NODE_MATCH).unwrap().probs[0];
    let pl = bias.net.infer(&left, NODE_MATCH).unwrap().probs[0];
    assert!(pc < pl, "weaker center cohort must lower P(match): {pc} vs {pl}");

    // identical cohorts: observing any root leaves P(match) unchanged
    let flat = cohort_fixture(8, |_, _, _| 6);
    let net = build_bias_network(&flat, &BiasPriors::default()).unwrap().net;
    let unconditional = net.infer(&BTreeMap::new(), NODE_MATCH).unwrap().probs[0];
    for (node, states) in [
        (NODE_GENDER, vec!["male", "female"]),
        (NODE_POSE, vec!["stand", "walk"]),
        (NODE_VIEW, vec!["left", "center", "right"]),
    ] {
        for s in states {
            let e = BTreeMap::from([(node.to_string(), s.to_string())]);
            near(&format!("P(match | {node}={s})"), net.infer(&e, NODE_MATCH).unwrap().probs[0], unconditional, 1e-12);
        }
    }

    // the flu topology
    let flu = flu_network(0.783, 0.817).unwrap();
    compare_all_queries(&flu, &mut rng, 40, "flu network");
    near("flu marginal", flu.infer(&BTreeMap::new(), NODE_FLU).unwrap().probs[0], 0.800, 1e-12);

    // a deterministic chain inverts to certainty, and a lone root returns its prior
    let copy = |name: &str, parent: &str| BayesNode {
        name: name.into(),
        states: vec!["a".into(), "b".into()],
        parents: vec![parent.into()],
        cpt: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    };
    let chain = DiscreteBayesNet::new(vec![
        copy("C", "B"),
        BayesNode {
            name: "A".into(),
            states: vec!["a".into(), "b".into()],
            parents: vec![],
            cpt: vec![vec![0.3, 0.7]],
        },
        copy("B", "A"),
    ])
    .unwrap();
    assert_eq!(chain.topological_order(), vec!["A", "B", "C"]);
    let e = BTreeMap::from([("C".to_string(), "b".to_string())]);
    assert_eq!(chain.infer(&e, "A").unwrap().probs, vec![0.0, 1.0]);
    near("root prior", chain.infer(&BTreeMap::new(), "A").unwrap().probs[0], 0.3, 1e-15);
}

/// Softmax written out directly, without max-subtraction.
pub fn plain_softmax(z: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn softmax_and_divergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..1000 {
        let n = rng.random_range(2..10);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..20.0)).collect();
        for (a, b) in tempered_softmax(&z, 1.0).unwrap().probs.iter().zip(plain_softmax(&z)) {
            assert!((a - b).abs() < 1e-12, "softmax {i}: {a} vs {b}");
        }
        let scale = if i % 3 == 0 { 30.0 } else { 3.0 };
        let p = plain_softmax(&(0..n).map(|_| rng.random_range(-scale..scale)).collect::<Vec<f64>>());
        let q = plain_softmax(&(0..n).map(|_| rng.random_range(-scale..scale)).collect::<Vec<f64>>());
        let kl = kl_divergence(&p, &q).unwrap().value;
        assert!(kl >= 0.0, "pair {i}: KL {kl}");
        assert_eq!(kl_divergence(&p, &p).unwrap().value, 0.0);
    }

    let z = Tensor::new(vec![2, 3], vec![0.4, -1.0, 2.2, 1.5, 0.0, -0.3]).unwrap();
    let outputs = HeadOutputs { block_logits: vec![z.clone(); 4], fusion_logits: z };
    for t in [1.0, 3.0, 10.0] {
        let (loss, _) = compute_losses(&outputs, &[2, 0], t).unwrap();
        for block in &loss.blocks {
            assert_eq!(block.fkd, 0.0, "distillation with coinciding logits at T={t}");
        }
    }
}
