use serde::{Deserialize, Serialize};

use crate::encoders::{init_params, FusionMode, ModelConfig};
use crate::error::Result;
use crate::parallel::Parallelism;
use crate::pipeline::PreparedSplits;
use crate::training::{train, TrainConfig, TrainContext, TrainOutcome};

use super::{evaluate, Evaluation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    WoVideo,
    WoSensor,
    WoText,
    SimpleConcat,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::WoVideo,
        AblationVariant::WoSensor,
        AblationVariant::WoText,
        AblationVariant::SimpleConcat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::WoVideo => "wo_video",
            AblationVariant::WoSensor => "wo_sensor",
            AblationVariant::WoText => "wo_text",
            AblationVariant::SimpleConcat => "simple_concat",
        }
    }

    /// The model configuration trained for this row. Without text the
    /// explanation decoder is dropped as well, so no BLEU is reported.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        match self {
            AblationVariant::Full => {}
            AblationVariant::WoVideo => cfg.modalities.video = false,
            AblationVariant::WoSensor => cfg.modalities.sensor = false,
            AblationVariant::WoText => {
                cfg.modalities.text = false;
                cfg.explanation_head = false;
            }
            AblationVariant::SimpleConcat => cfg.fusion_mode = FusionMode::SimpleConcat,
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub variant: AblationVariant,
    pub accuracy: Option<f64>,
    pub bleu4: Option<f64>,
    /// Set when the sub-run failed; the metrics are then absent.
    pub error: Option<String>,
}

/// A trained variant with its test-set evaluation.
pub struct VariantRun {
    pub result: AblationResult,
    pub outcome: TrainOutcome,
    pub evaluation: Evaluation,
}

/// Trains one configuration from `init_seed` and scores its best checkpoint
/// on the test split.
pub fn run_variant(
    variant: AblationVariant,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &PreparedSplits,
    init_seed: u64,
    par: Parallelism,
) -> Result<VariantRun> {
    let cfg = variant.apply(base);
    let params = init_params(&cfg, init_seed)?;
    let ctx = TrainContext {
        vocab: &data.vocab,
        sensor_stats: &data.sensor_stats,
    };
    let outcome = train(&cfg, train_cfg, params, &data.train, &data.val, ctx, par)?;
    let evaluation = evaluate(&outcome.best.params, &cfg, &data.test, &data.vocab, par)?;
    let result = AblationResult {
        variant,
        accuracy: Some(evaluation.accuracy),
        bleu4: evaluation.bleu.as_ref().map(|b| b.corpus),
        error: None,
    };
    Ok(VariantRun {
        result,
        outcome,
        evaluation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationResult>,
}

impl AblationTable {
    pub fn get(&self, v: AblationVariant) -> Option<&AblationResult> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("configuration,accuracy,bleu4,status\n");
        let fmt = |v: Option<f64>| v.map_or_else(|| "N/A".to_owned(), |v| format!("{:.4}", 100.0 * v));
        for r in &self.rows {
            let status = r
                .error
                .as_deref()
                .map_or("ok".to_owned(), |e| format!("failed: {}", e.replace(',', ";")));
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.variant.name(),
                fmt(r.accuracy),
                fmt(r.bleu4),
                status
            ));
        }
        s
    }
}

/// Retrains every variant with identical seeds and schedule. A failing
/// sub-run is recorded in its row and does not stop the others.
pub fn run_ablation(
    variants: &[AblationVariant],
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &PreparedSplits,
    init_seed: u64,
    par: Parallelism,
) -> AblationTable {
    let rows = variants
        .iter()
        .map(|&v| match run_variant(v, base, train_cfg, data, init_seed, par) {
            Ok(run) => run.result,
            Err(e) => AblationResult {
                variant: v,
                accuracy: None,
                bleu4: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    AblationTable { rows }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Tie,
    Violated,
    Missing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub claim: String,
    /// Accuracy difference in percentage points, positive when the claim holds.
    pub gap_points: Option<f64>,
    pub verdict: Verdict,
}

fn judge(claim: String, better: Option<f64>, worse: Option<f64>, tie_points: f64) -> OrderingCheck {
    let gap = better.zip(worse).map(|(b, w)| 100.0 * (b - w));
    let verdict = match gap {
        None => Verdict::Missing,
        Some(g) if g.abs() < tie_points => Verdict::Tie,
        Some(g) if g > 0.0 => Verdict::Holds,
        Some(_) => Verdict::Violated,
    };
    OrderingCheck {
        claim,
        gap_points: gap,
        verdict,
    }
}

/// Expected ordering: the full model at least matches every ablation, and
/// dropping video hurts most. Gaps under `tie_points` are reported as ties.
pub fn ordering_report(table: &AblationTable, tie_points: f64) -> Vec<OrderingCheck> {
    use AblationVariant::*;
    let acc = |v| table.get(v).and_then(|r| r.accuracy);
    let mut out = Vec::new();
    for v in [WoSensor, WoText, SimpleConcat] {
        out.push(judge(format!("full >= {}", v.name()), acc(Full), acc(v), tie_points));
    }
    for v in [Full, WoSensor, WoText, SimpleConcat] {
        out.push(judge(
            format!("{} > wo_video", v.name()),
            acc(v),
            acc(WoVideo),
            tie_points,
        ));
    }
    out
}
