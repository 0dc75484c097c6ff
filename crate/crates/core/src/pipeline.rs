//! Glue from raw samples to model-ready splits.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{prepare_sample, PreparedSample};
use crate::preprocess::{build_vocab, fit_sensor_stats, SensorStats, SplitAssignment, Vocabulary};
use crate::synthdata::Sample;

pub struct PreparedSplits {
    pub vocab: Vocabulary,
    pub sensor_stats: SensorStats,
    pub train: Vec<PreparedSample>,
    pub val: Vec<PreparedSample>,
    pub test: Vec<PreparedSample>,
}

/// Fits the vocabulary and sensor statistics on the training split only,
/// then preprocesses every split in assignment order.
pub fn prepare_splits(samples: &[Sample], split: &SplitAssignment, max_len: usize) -> Result<PreparedSplits> {
    let by_id: HashMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let pick = |ids: &[String]| -> Result<Vec<&Sample>> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("split refers to unknown sample `{id}`")))
            })
            .collect()
    };
    let train = pick(&split.train)?;
    let val = pick(&split.val)?;
    let test = pick(&split.test)?;
    let corpus = train
        .iter()
        .flat_map(|s| [s.description.as_str(), s.explanation.as_str()]);
    let vocab = build_vocab(corpus, 1)?;
    let sensor_stats = fit_sensor_stats(train.iter().map(|s| &s.sensor))?;
    let prep = |set: &[&Sample]| -> Result<Vec<PreparedSample>> {
        set.iter()
            .map(|s| prepare_sample(s, &vocab, &sensor_stats, max_len))
            .collect()
    };
    Ok(PreparedSplits {
        train: prep(&train)?,
        val: prep(&val)?,
        test: prep(&test)?,
        vocab,
        sensor_stats,
    })
}
