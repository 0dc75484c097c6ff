use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub epoch: usize,
    /// Global 1-based iteration counter.
    pub iteration: usize,
    /// 0-based batch index within the epoch.
    pub batch: usize,
    pub batch_size: usize,
    pub action_loss: f64,
    pub explanation_loss: f64,
    pub total_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub iterations: usize,
    /// Sample-weighted means of the losses seen during the epoch.
    pub train_loss: f64,
    pub train_action_loss: f64,
    pub train_explanation_loss: f64,
    /// Fraction of training samples whose forward pass predicted the label.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub val_bleu4: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Iteration(IterationRecord),
    Epoch(EpochRecord),
}

/// Training history. Wall-clock times are kept apart from the records so
/// that two runs can be compared exactly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    pub epoch_seconds: Vec<f64>,
}

impl TrainLog {
    pub fn epochs(&self) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Epoch(e) => Some(e),
            _ => None,
        })
    }

    pub fn iterations(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Iteration(i) => Some(i),
            _ => None,
        })
    }

    /// One sorted-key JSON object per line; epoch lines carry `wall_clock_s`.
    pub fn to_jsonl(&self, with_timing: bool) -> Result<String> {
        let mut out = String::new();
        let mut epoch_idx = 0;
        for r in &self.records {
            let mut v = serde_json::to_value(r)?;
            if let (LogRecord::Epoch(_), true) = (r, with_timing) {
                if let Some(t) = self.epoch_seconds.get(epoch_idx) {
                    v["wall_clock_s"] = serde_json::json!(t);
                }
                epoch_idx += 1;
            }
            out.push_str(&serde_json::to_string(&v)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl(true)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut log = TrainLog::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut v: serde_json::Value = serde_json::from_str(line)?;
            if let Some(t) = v.as_object_mut().and_then(|o| o.remove("wall_clock_s")) {
                log.epoch_seconds.push(t.as_f64().unwrap_or(0.0));
            }
            log.records.push(serde_json::from_value(v)?);
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_log() -> TrainLog {
        TrainLog {
            records: vec![
                LogRecord::Iteration(IterationRecord {
                    epoch: 1,
                    iteration: 1,
                    batch: 0,
                    batch_size: 4,
                    action_loss: 1.5,
                    explanation_loss: 2.25,
                    total_loss: 3.75,
                }),
                LogRecord::Epoch(EpochRecord {
                    epoch: 1,
                    iterations: 1,
                    train_loss: 3.75,
                    train_action_loss: 1.5,
                    train_explanation_loss: 2.25,
                    train_accuracy: 0.25,
                    val_accuracy: Some(0.5),
                    val_bleu4: None,
                }),
            ],
            epoch_seconds: vec![0.125],
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let log = sample_log();
        log.write(&p).unwrap();
        assert_eq!(TrainLog::read(&p).unwrap(), log);
        let text = std::fs::read_to_string(&p).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("{\"action_loss\":1.5,"));
        assert!(text.lines().nth(1).unwrap().contains("\"wall_clock_s\":0.125"));
    }

    #[test]
    fn timing_can_be_left_out() {
        assert!(!sample_log().to_jsonl(false).unwrap().contains("wall_clock"));
    }
}
