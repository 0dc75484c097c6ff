//! Metrics, reports, the ablation harness and single-sample explanations.

mod ablation;
mod bleu;
mod explain;
mod metrics;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::ModelConfig;
use crate::error::{Error, Result};
use crate::fingerprint::write_sorted_json;
use crate::model::{predict, PreparedSample};
use crate::parallel::Parallelism;
use crate::params::ParamStore;
use crate::preprocess::{detokenize, Vocabulary, EOS};
use crate::synthdata::ActionLabel;

pub use ablation::{
    ordering_report, run_ablation, run_variant, AblationResult, AblationTable, AblationVariant, OrderingCheck,
    VariantRun, Verdict,
};
pub use bleu::{bleu4, bleu4_text, sentence_bleu4, BleuScore, MAX_ORDER};
pub use explain::{explain_sample, ExplainOptions, ExplanationRecord};
pub use metrics::{accuracy, action_distribution, ActionDistributionReport, ConfusionMatrix};

/// Side length in pixels of one confusion-matrix cell in the PGM heatmap.
pub const PGM_CELL: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub id: String,
    pub label: ActionLabel,
    pub predicted: ActionLabel,
    pub probabilities: Vec<f64>,
    pub hypothesis: Option<String>,
    pub reference: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub results: Vec<SampleResult>,
    pub accuracy: f64,
    pub bleu: Option<BleuScore>,
}

impl Evaluation {
    pub fn predictions(&self) -> Vec<ActionLabel> {
        self.results.iter().map(|r| r.predicted).collect()
    }

    pub fn labels(&self) -> Vec<ActionLabel> {
        self.results.iter().map(|r| r.label).collect()
    }
}

/// Predicts every sample (in parallel when enabled) and scores the batch.
/// Explanations are beam-decoded only when the decoder head is enabled.
pub fn evaluate(
    params: &ParamStore,
    cfg: &ModelConfig,
    samples: &[PreparedSample],
    vocab: &Vocabulary,
    par: Parallelism,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let outputs = par.map(samples, |s| -> Result<SampleResult> {
        let p = predict(params, cfg, s, false)?;
        Ok(SampleResult {
            id: s.id.clone(),
            label: s.label,
            predicted: p.action.predicted(),
            probabilities: p.action.probs.clone(),
            hypothesis: p.explanation.map(|b| detokenize(b.best.content(EOS), vocab)),
            reference: s.explanation.clone(),
        })
    });
    let results = outputs.into_iter().collect::<Result<Vec<_>>>()?;
    let preds: Vec<_> = results.iter().map(|r| r.predicted).collect();
    let labels: Vec<_> = results.iter().map(|r| r.label).collect();
    let acc = accuracy(&preds, &labels)?;
    let bleu = if cfg.explanation_head {
        let hyps: Vec<String> = results
            .iter()
            .map(|r| r.hypothesis.clone().unwrap_or_default())
            .collect();
        let refs: Vec<String> = results.iter().map(|r| r.reference.clone()).collect();
        Some(bleu4_text(&hyps, &refs)?)
    } else {
        None
    };
    Ok(Evaluation {
        results,
        accuracy: acc,
        bleu,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub bleu4_corpus: Option<f64>,
    pub bleu4_precisions: Option<[f64; MAX_ORDER]>,
    pub brevity_penalty: Option<f64>,
    pub bleu4_sentences: Vec<f64>,
    pub confusion_counts: ConfusionMatrix,
    pub confusion_percent: [[f64; ActionLabel::COUNT]; ActionLabel::COUNT],
    pub empty_confusion_rows: Vec<ActionLabel>,
    pub action_distribution: ActionDistributionReport,
    pub predicted_distribution: ActionDistributionReport,
    pub n_samples: usize,
    pub config_fingerprint: String,
    pub dataset_fingerprint: String,
}

impl MetricsReport {
    pub fn new(eval: &Evaluation, config_fingerprint: String, dataset_fingerprint: String) -> Result<Self> {
        let preds = eval.predictions();
        let labels = eval.labels();
        let cm = ConfusionMatrix::from_predictions(&preds, &labels)?;
        let (pct, empty) = cm.normalized();
        Ok(Self {
            accuracy: eval.accuracy,
            bleu4_corpus: eval.bleu.as_ref().map(|b| b.corpus),
            bleu4_precisions: eval.bleu.as_ref().map(|b| b.precisions),
            brevity_penalty: eval.bleu.as_ref().map(|b| b.brevity_penalty),
            bleu4_sentences: eval.bleu.as_ref().map(|b| b.sentences.clone()).unwrap_or_default(),
            confusion_counts: cm,
            confusion_percent: pct,
            empty_confusion_rows: empty,
            action_distribution: action_distribution(&labels)?,
            predicted_distribution: action_distribution(&preds)?,
            n_samples: labels.len(),
            config_fingerprint,
            dataset_fingerprint,
        })
    }

    /// Writes `metrics.json`, `confusion.csv`, `confusion.pgm` and `distribution.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_sorted_json(&dir.join("metrics.json"), self)?;
        let files: [(&str, Vec<u8>); 3] = [
            ("confusion.csv", self.confusion_counts.to_csv().into_bytes()),
            ("confusion.pgm", self.confusion_counts.to_pgm(PGM_CELL)),
            ("distribution.csv", self.action_distribution.to_csv().into_bytes()),
        ];
        for (name, bytes) in files {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
