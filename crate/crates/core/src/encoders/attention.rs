use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::transformer::AttentionRecord;

/// How to pool one layer's attention matrix into a map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionSource {
    /// Mean over all query rows, summed over time slots onto the patch grid.
    Video { temporal_slots: usize, grid: usize },
    /// The CLS query row over the valid tokens.
    Text,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionGrid {
    pub modality: &'static str,
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl AttentionGrid {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# modality={} layer={} rows={} cols={}\n",
            self.modality, self.layer, self.rows, self.cols
        );
        for r in 0..self.rows {
            let row: Vec<String> = self.values[r * self.cols..(r + 1) * self.cols]
                .iter()
                .map(|v| format!("{v:.9}"))
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

pub fn export_attention(record: Option<&AttentionRecord>, source: AttentionSource) -> Result<Vec<AttentionGrid>> {
    let record = record.ok_or(Error::AttentionNotRecorded)?;
    let mut grids = Vec::with_capacity(record.len());
    for (layer, a) in record.iter().enumerate() {
        let n = a.rows();
        let grid = match source {
            AttentionSource::Text => AttentionGrid {
                modality: "text",
                layer,
                rows: 1,
                cols: n,
                values: a.row(0).to_vec(),
            },
            AttentionSource::Video { temporal_slots, grid } => {
                let cells = grid * grid;
                if temporal_slots * cells != n {
                    return Err(Error::invalid(format!(
                        "attention over {n} tokens does not fit {temporal_slots}×{grid}×{grid}"
                    )));
                }
                let mut pooled = vec![0.0; n];
                for r in 0..n {
                    for (p, v) in pooled.iter_mut().zip(a.row(r)) {
                        *p += v;
                    }
                }
                let mut values = vec![0.0; cells];
                for (i, p) in pooled.iter().enumerate() {
                    values[i % cells] += p / n as f64;
                }
                AttentionGrid {
                    modality: "video",
                    layer,
                    rows: grid,
                    cols: grid,
                    values,
                }
            }
        };
        grids.push(grid);
    }
    Ok(grids)
}

/// Writes `attention_{modality}_layer{l}.csv` files and returns their paths.
pub fn write_attention_csv(dir: &Path, grids: &[AttentionGrid]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for g in grids {
        let path = dir.join(format!("attention_{}_layer{}.csv", g.modality, g.layer));
        std::fs::write(&path, g.to_csv()).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{init_params, video_encode, ModelConfig};
    use crate::preprocess::NormalizedClip;

    #[test]
    fn disabled_recording_rejected() {
        assert!(matches!(
            export_attention(None, AttentionSource::Text),
            Err(Error::AttentionNotRecorded)
        ));
    }

    #[test]
    fn video_grid_shape_and_mass() {
        let cfg = ModelConfig::tiny(10);
        let params = init_params(&cfg, 0).unwrap();
        let s = cfg.video.image_size;
        let clip = NormalizedClip {
            size: s,
            data: (0..16 * s * s * 3).map(|i| (i % 7) as f64 / 7.0).collect(),
        };
        let (_, _, rec) = video_encode(&clip, &params, &cfg, true).unwrap();
        let source = AttentionSource::Video {
            temporal_slots: cfg.video.temporal_slots(),
            grid: cfg.video.grid(),
        };
        let grids = export_attention(rec.as_ref(), source).unwrap();
        assert_eq!(grids.len(), cfg.video.layers);
        for g in &grids {
            assert_eq!((g.rows, g.cols), (2, 2));
            assert!((g.total() - 1.0).abs() < 1e-9);
        }
        let csv = grids[0].to_csv();
        assert!(csv.starts_with("# modality=video layer=0 rows=2 cols=2\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
