//! Thresholding, F-scores and the layer/graph ablation harnesses.
//!
//! F-scores are reported on a 0-100 scale. Per label, counts are pooled
//! over examples; the headline macro F is the plain mean over labels.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::dataset::LabelSpace;
use crate::error::{Error, Result};
use crate::model::{GraphMode, Model, ModelConfig, OutputKind};
use crate::training::{run, PreparedExample, RunInputs, RunLog, TrainConfig};

/// How probabilities become a predicted label set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdPolicy {
    /// Labels with probability strictly above `1/C`.
    UniformPrior,
    /// The `k` most probable labels; ties go to the lower index.
    TopK(usize),
    /// Labels with probability strictly above `τ`.
    Fixed(f64),
}

impl ThresholdPolicy {
    /// `UniformPrior` for softmax heads, `Fixed(0.5)` for sigmoid heads.
    pub fn default_for(output: OutputKind) -> Self {
        match output {
            OutputKind::Softmax => ThresholdPolicy::UniformPrior,
            OutputKind::Sigmoid => ThresholdPolicy::Fixed(0.5),
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::UniformPrior => write!(f, "uniform_prior"),
            ThresholdPolicy::TopK(k) => write!(f, "top_k:{k}"),
            ThresholdPolicy::Fixed(t) => write!(f, "fixed:{t}"),
        }
    }
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        let bad = || Error::Config(format!("unknown threshold policy {s:?}"));
        if s == "uniform_prior" {
            return Ok(ThresholdPolicy::UniformPrior);
        }
        match s.split_once(':') {
            Some(("top_k", k)) => match k.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(ThresholdPolicy::TopK(k)),
                _ => Err(bad()),
            },
            Some(("fixed", t)) => match t.parse::<f64>() {
                Ok(t) if t.is_finite() => Ok(ThresholdPolicy::Fixed(t)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

pub fn predict_labels(probs: &[f64], policy: ThresholdPolicy) -> BTreeSet<usize> {
    match policy {
        ThresholdPolicy::UniformPrior => {
            let prior = 1.0 / probs.len() as f64;
            (0..probs.len()).filter(|&i| probs[i] > prior).collect()
        }
        ThresholdPolicy::Fixed(t) => (0..probs.len()).filter(|&i| probs[i] > t).collect(),
        ThresholdPolicy::TopK(k) => {
            let mut order: Vec<usize> = (0..probs.len()).collect();
            order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
            order.into_iter().take(k).collect()
        }
    }
}

/// Counts and F-score of one label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMetrics {
    pub label: usize,
    /// Number of examples whose true label set contains this label.
    pub frequency: usize,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub f_score: f64,
}

/// `100 · 2tp / (2tp + fp + fn)`, or 0 when the denominator is 0.
pub fn f_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        100.0 * (2 * tp) as f64 / denom as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_label: Vec<LabelMetrics>,
    pub macro_f: f64,
    pub micro_f: f64,
    pub policy: ThresholdPolicy,
}

impl MetricsReport {
    pub fn per_label_csv(&self, labels: &LabelSpace) -> String {
        let mut out = String::from("label,frequency,f_score\n");
        for row in &self.per_label {
            writeln!(out, "{},{},{}", csv_field(labels.name(row.label)), row.frequency, row.f_score).unwrap();
        }
        out
    }

    /// Aggregates and the threshold policy as `metric,value` rows.
    pub fn summary_csv(&self) -> String {
        format!(
            "metric,value\nmacro_f,{}\nmicro_f,{}\nthreshold,{}\n",
            self.macro_f, self.micro_f, self.policy
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Scores predicted label-index sets against true ones over `num_labels`
/// labels.
pub fn f_scores_indexed(
    predictions: &[BTreeSet<usize>],
    truth: &[BTreeSet<usize>],
    num_labels: usize,
    policy: ThresholdPolicy,
) -> Result<MetricsReport> {
    if predictions.len() != truth.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} examples",
            predictions.len(),
            truth.len()
        )));
    }
    if num_labels == 0 {
        return Err(Error::Config("no labels to score".into()));
    }
    let mut counts = vec![[0usize; 4]; num_labels];
    for (pred, gold) in predictions.iter().zip(truth) {
        if let Some(bad) = pred.iter().chain(gold).find(|&&l| l >= num_labels) {
            return Err(Error::Config(format!("label index {bad} outside {num_labels} labels")));
        }
        for (l, c) in counts.iter_mut().enumerate() {
            let (p, g) = (pred.contains(&l), gold.contains(&l));
            c[0] += g as usize;
            c[1] += (p && g) as usize;
            c[2] += (p && !g) as usize;
            c[3] += (!p && g) as usize;
        }
    }
    let per_label: Vec<LabelMetrics> = counts
        .iter()
        .enumerate()
        .map(|(label, c)| LabelMetrics {
            label,
            frequency: c[0],
            true_pos: c[1],
            false_pos: c[2],
            false_neg: c[3],
            f_score: f_score(c[1], c[2], c[3]),
        })
        .collect();
    let macro_f = per_label.iter().map(|m| m.f_score).sum::<f64>() / num_labels as f64;
    let sum = |k: usize| counts.iter().map(|c| c[k]).sum::<usize>();
    Ok(MetricsReport {
        per_label,
        macro_f,
        micro_f: f_score(sum(1), sum(2), sum(3)),
        policy,
    })
}

/// Name-based variant of [`f_scores_indexed`]; unknown label names are
/// errors.
pub fn f_scores(
    predictions: &[Vec<String>],
    truth: &[Vec<String>],
    labels: &LabelSpace,
    policy: ThresholdPolicy,
) -> Result<MetricsReport> {
    let to_sets = |xs: &[Vec<String>]| xs.iter().map(|x| labels.indices(x)).collect::<Result<Vec<_>>>();
    f_scores_indexed(&to_sets(predictions)?, &to_sets(truth)?, labels.len(), policy)
}

/// Output of the model on one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub image_id: String,
    pub probs: Vec<f64>,
    pub predicted: BTreeSet<usize>,
    /// `[α_kg, α_sg]` in attention modes.
    pub alpha: Option<[f64; 2]>,
}

/// Runs the model over `data` and scores it.
pub fn evaluate(model: &Model, data: &[PreparedExample], policy: ThresholdPolicy) -> Result<(MetricsReport, Vec<Prediction>)> {
    let mut predictions = Vec::with_capacity(data.len());
    for ex in data {
        let (probs, diagnostics) = model
            .forward(&ex.input)
            .map_err(|e| Error::Training(format!("image {}: {e}", ex.image_id)))?;
        predictions.push(Prediction {
            image_id: ex.image_id.clone(),
            predicted: predict_labels(&probs, policy),
            probs,
            alpha: diagnostics.alpha,
        });
    }
    let pred_sets: Vec<_> = predictions.iter().map(|p| p.predicted.clone()).collect();
    let truth: Vec<_> = data.iter().map(|e| e.targets.clone()).collect();
    let report = f_scores_indexed(&pred_sets, &truth, model.config().num_labels, policy)?;
    Ok((report, predictions))
}

/// `image_id,alpha_kg,alpha_sg` rows for attention-mode predictions.
pub fn attention_csv(predictions: &[Prediction]) -> String {
    let mut out = String::from("image_id,alpha_kg,alpha_sg\n");
    for p in predictions {
        if let Some([kg, sg]) = p.alpha {
            writeln!(out, "{},{kg},{sg}", csv_field(&p.image_id)).unwrap();
        }
    }
    out
}

/// Expected-F upper bound, on the 0-100 scale, for any predictor that
/// ignores its input: predicting every label gives `2f/(1+f)` per label
/// of frequency `f`, and predicting less often only lowers it.
pub fn uniform_baseline_f(frequencies: &[f64]) -> f64 {
    if frequencies.is_empty() {
        return 0.0;
    }
    100.0 * frequencies.iter().map(|&f| 2.0 * f / (1.0 + f)).sum::<f64>() / frequencies.len() as f64
}

/// One training run of an ablation sweep.
#[derive(Clone, Debug)]
pub struct AblationRun {
    pub variant: String,
    pub log: RunLog,
}

pub fn ablation_csv(runs: &[AblationRun]) -> String {
    let mut out = String::from("variant,epoch,val_macro_f\n");
    for r in runs {
        for rec in &r.log.records {
            writeln!(out, "{},{},{}", csv_field(&r.variant), rec.epoch, rec.val_macro_f).unwrap();
        }
    }
    out
}

/// Trains one model per GCN depth in `depths`, all with the same seeds.
pub fn ablate_layers(
    depths: &[usize],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    inputs: RunInputs<'_>,
) -> Result<Vec<AblationRun>> {
    if let Some(bad) = depths.iter().find(|&&k| k < 1) {
        return Err(Error::Config(format!("layer count {bad} must be at least 1")));
    }
    depths
        .iter()
        .map(|&k| {
            let config = ModelConfig {
                gcn_layers: k,
                ..model_config.clone()
            };
            Ok(AblationRun {
                variant: format!("k={k}"),
                log: run(&config, train_config, inputs)?.log,
            })
        })
        .collect()
}

/// Trains one model per graph mode in `modes`.
pub fn ablate_graphs(
    modes: &[GraphMode],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    inputs: RunInputs<'_>,
) -> Result<Vec<AblationRun>> {
    modes
        .iter()
        .map(|&graphs| {
            let config = ModelConfig {
                graphs,
                ..model_config.clone()
            };
            Ok(AblationRun {
                variant: graphs.name().to_string(),
                log: run(&config, train_config, inputs)?.log,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn uniform_probs_predict_nothing() {
        assert!(predict_labels(&[0.25; 4], ThresholdPolicy::UniformPrior).is_empty());
    }

    #[test]
    fn dominant_label_predicted() {
        assert_eq!(predict_labels(&[0.7, 0.1, 0.1, 0.1], ThresholdPolicy::UniformPrior), set(&[0]));
    }

    #[test]
    fn top_one_returns_one_label() {
        for probs in [[0.25; 4], [0.1, 0.2, 0.6, 0.1], [0.0, 0.0, 0.5, 0.5]] {
            assert_eq!(predict_labels(&probs, ThresholdPolicy::TopK(1)).len(), 1);
        }
        assert_eq!(predict_labels(&[0.0, 0.5, 0.5], ThresholdPolicy::TopK(1)), set(&[1]));
        assert_eq!(predict_labels(&[0.3, 0.7], ThresholdPolicy::Fixed(0.5)), set(&[1]));
    }

    #[test]
    fn policy_text_round_trip() {
        for p in [ThresholdPolicy::UniformPrior, ThresholdPolicy::TopK(2), ThresholdPolicy::Fixed(0.25)] {
            assert_eq!(p.to_string().parse::<ThresholdPolicy>().unwrap(), p);
        }
        assert!("top_k:0".parse::<ThresholdPolicy>().is_err());
        assert!("median".parse::<ThresholdPolicy>().is_err());
    }

    #[test]
    fn perfect_predictions_score_100() {
        let truth = vec![set(&[0]), set(&[1, 2]), set(&[2])];
        let r = f_scores_indexed(&truth, &truth, 3, ThresholdPolicy::UniformPrior).unwrap();
        assert!(r.per_label.iter().all(|m| m.f_score == 100.0));
        assert_eq!(r.macro_f, 100.0);
    }

    #[test]
    fn disjoint_predictions_score_0() {
        let truth = vec![set(&[0]), set(&[1])];
        let pred = vec![set(&[1]), set(&[0])];
        let r = f_scores_indexed(&pred, &truth, 2, ThresholdPolicy::UniformPrior).unwrap();
        assert!(r.per_label.iter().all(|m| m.f_score == 0.0));
    }

    #[test]
    fn hand_tabulated_three_examples() {
        // label 0: tp in ex0, fp in ex1, fn in ex2
        let truth = vec![set(&[0]), set(&[1]), set(&[0])];
        let pred = vec![set(&[0]), set(&[0, 1]), set(&[])];
        let r = f_scores_indexed(&pred, &truth, 2, ThresholdPolicy::UniformPrior).unwrap();
        let m = &r.per_label[0];
        assert_eq!((m.true_pos, m.false_pos, m.false_neg, m.frequency), (1, 1, 1, 2));
        assert_eq!(m.f_score, 50.0);
        assert_eq!(r.per_label[1].f_score, 100.0);
        assert_eq!(r.macro_f, 75.0);
        // pooled: tp 2, fp 1, fn 1
        assert!((r.micro_f - 100.0 * 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_labels_are_errors() {
        let labels = LabelSpace::new(["safety", "fun"]).unwrap();
        let truth = vec![vec!["safety".to_string()]];
        let pred = vec![vec!["danger".to_string()]];
        assert!(f_scores(&pred, &truth, &labels, ThresholdPolicy::UniformPrior).is_err());
        assert!(f_scores_indexed(&[set(&[5])], &[set(&[0])], 2, ThresholdPolicy::UniformPrior).is_err());
    }

    #[test]
    fn per_label_csv_layout() {
        let labels = LabelSpace::new(["safety", "fun"]).unwrap();
        let truth = vec![set(&[0]), set(&[0])];
        let r = f_scores_indexed(&truth, &truth, 2, ThresholdPolicy::UniformPrior).unwrap();
        assert_eq!(r.per_label_csv(&labels), "label,frequency,f_score\nsafety,2,100\nfun,0,0\n");
        assert!(r.summary_csv().contains("threshold,uniform_prior"));
    }

    #[test]
    fn baseline_for_balanced_pair() {
        assert!((uniform_baseline_f(&[0.5, 0.5]) - 200.0 / 3.0).abs() < 1e-12);
    }

    fn label_sets(c: usize, n: usize) -> impl Strategy<Value = Vec<BTreeSet<usize>>> {
        prop::collection::vec(prop::collection::btree_set(0..c, 0..=c), n)
    }

    proptest! {
        #[test]
        fn order_does_not_matter(
            (pred, truth, rotation) in (1usize..12).prop_flat_map(|n| (label_sets(4, n), label_sets(4, n), 0..n))
        ) {
            let a = f_scores_indexed(&pred, &truth, 4, ThresholdPolicy::UniformPrior).unwrap();
            let mut p2 = pred.clone();
            let mut t2 = truth.clone();
            p2.rotate_left(rotation);
            t2.rotate_left(rotation);
            p2.reverse();
            t2.reverse();
            let b = f_scores_indexed(&p2, &t2, 4, ThresholdPolicy::UniformPrior).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn extra_true_positive_never_hurts(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
            prop_assert!(f_score(tp + 1, fp, fn_) >= f_score(tp, fp, fn_));
        }

        #[test]
        fn macro_is_the_mean_of_the_column(
            (pred, truth) in (1usize..12).prop_flat_map(|n| (label_sets(5, n), label_sets(5, n)))
        ) {
            let r = f_scores_indexed(&pred, &truth, 5, ThresholdPolicy::UniformPrior).unwrap();
            let mean = r.per_label.iter().map(|m| m.f_score).sum::<f64>() / 5.0;
            prop_assert_eq!(r.macro_f, mean);
            prop_assert!(r.per_label.iter().all(|m| (0.0..=100.0).contains(&m.f_score)));
        }
    }
}
