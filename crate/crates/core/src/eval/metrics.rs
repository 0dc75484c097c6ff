use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::ActionLabel;

const A: usize = ActionLabel::COUNT;

fn check_pair(predictions: &[ActionLabel], labels: &[ActionLabel]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[ActionLabel], labels: &[ActionLabel]) -> Result<f64> {
    check_pair(predictions, labels)?;
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Rows are ground truth, columns predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; A]; A],
}

impl ConfusionMatrix {
    pub fn from_predictions(predictions: &[ActionLabel], labels: &[ActionLabel]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::invalid("predictions and labels differ in length"));
        }
        let mut counts = [[0u64; A]; A];
        for (p, l) in predictions.iter().zip(labels) {
            counts[l.code()][p.code()] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..A).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Row percentages; rows without samples are zero and listed separately.
    pub fn normalized(&self) -> ([[f64; A]; A], Vec<ActionLabel>) {
        let mut out = [[0.0; A]; A];
        let mut empty = Vec::new();
        for (i, row) in self.counts.iter().enumerate() {
            let n: u64 = row.iter().sum();
            if n == 0 {
                empty.push(ActionLabel::ALL[i]);
                continue;
            }
            for j in 0..A {
                out[i][j] = 100.0 * row[j] as f64 / n as f64;
            }
        }
        (out, empty)
    }

    pub fn to_csv(&self) -> String {
        let (norm, _) = self.normalized();
        let mut s = String::from("true\\pred");
        for a in ActionLabel::ALL {
            s.push(',');
            s.push_str(a.name());
        }
        s.push_str(",count\n");
        for (i, a) in ActionLabel::ALL.iter().enumerate() {
            s.push_str(a.name());
            for v in norm[i] {
                s.push_str(&format!(",{v:.4}"));
            }
            s.push_str(&format!(",{}\n", self.counts[i].iter().sum::<u64>()));
        }
        s
    }

    /// Binary greyscale heatmap, `cell` pixels per entry, white = 100%.
    pub fn to_pgm(&self, cell: usize) -> Vec<u8> {
        let (norm, _) = self.normalized();
        let side = A * cell;
        let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
        for y in 0..side {
            for x in 0..side {
                let v = norm[y / cell][x / cell];
                out.push((v / 100.0 * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDistributionReport {
    pub counts: [usize; A],
    pub fractions: [f64; A],
}

impl ActionDistributionReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("action,count,fraction\n");
        for (i, a) in ActionLabel::ALL.iter().enumerate() {
            s.push_str(&format!("{},{},{:.6}\n", a.name(), self.counts[i], self.fractions[i]));
        }
        s
    }
}

pub fn action_distribution(labels: &[ActionLabel]) -> Result<ActionDistributionReport> {
    if labels.is_empty() {
        return Err(Error::invalid("no labels to count"));
    }
    let mut counts = [0usize; A];
    for l in labels {
        counts[l.code()] += 1;
    }
    let fractions = counts.map(|c| c as f64 / labels.len() as f64);
    Ok(ActionDistributionReport { counts, fractions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActionLabel::*;

    #[test]
    fn paper_headline_rate() {
        let labels = vec![Stop; 40];
        let mut preds = labels.clone();
        for p in preds.iter_mut().take(3) {
            *p = Accelerate;
        }
        assert_eq!(accuracy(&preds, &labels).unwrap(), 0.925);
    }

    #[test]
    fn stop_row_diagonal() {
        let labels = vec![Stop; 200];
        let mut preds = labels.clone();
        for p in preds.iter_mut().take(13) {
            *p = Decelerate;
        }
        let cm = ConfusionMatrix::from_predictions(&preds, &labels).unwrap();
        let (norm, empty) = cm.normalized();
        assert!((norm[Stop.code()][Stop.code()] - 93.5).abs() < 1e-12);
        assert_eq!(empty.len(), 4);
    }

    #[test]
    fn perfect_predictions_are_identity() {
        let labels: Vec<_> = ActionLabel::ALL.iter().cycle().take(50).copied().collect();
        let cm = ConfusionMatrix::from_predictions(&labels, &labels).unwrap();
        let (norm, _) = cm.normalized();
        for i in 0..A {
            for j in 0..A {
                assert_eq!(norm[i][j], if i == j { 100.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn pgm_header_and_size() {
        let cm = ConfusionMatrix::from_predictions(&[Stop], &[Stop]).unwrap();
        let pgm = cm.to_pgm(4);
        let header = b"P5\n20 20\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 400);
        assert_eq!(*pgm.last().unwrap(), 255);
    }

    #[test]
    fn distribution_single_class() {
        let d = action_distribution(&[TurnLeft; 7]).unwrap();
        assert_eq!(d.fractions[TurnLeft.code()], 1.0);
        assert!(action_distribution(&[]).is_err());
    }

    #[test]
    fn empty_and_mismatched_rejected() {
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[Stop], &[Stop, Stop]).is_err());
    }
}
