use crate::error::{Error, Result};
use crate::synthdata::{VideoClip, FRAMES};

/// Real-valued clip in [0, 1], `frames × size × size × 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedClip {
    pub size: usize,
    pub data: Vec<f64>,
}

impl NormalizedClip {
    pub fn frames(&self) -> usize {
        self.data.len() / (self.size * self.size * 3)
    }
}

/// Nearest-neighbour resize to `target_size`, then divide by 255.
pub fn normalize_clip(clip: &VideoClip, target_size: usize) -> Result<NormalizedClip> {
    if clip.size == 0 || !clip.data.len().is_multiple_of(clip.size * clip.size * 3) {
        return Err(Error::invalid("clip payload does not match its size"));
    }
    if clip.frames() != FRAMES {
        return Err(Error::invalid(format!(
            "clip has {} frames, expected {FRAMES}",
            clip.frames()
        )));
    }
    if target_size == 0 {
        return Err(Error::invalid("target size must be positive"));
    }
    let src = clip.size;
    let mut data = Vec::with_capacity(FRAMES * target_size * target_size * 3);
    let lut: Vec<usize> = (0..target_size).map(|d| d * src / target_size).collect();
    for f in 0..FRAMES {
        for &sy in &lut {
            for &sx in &lut {
                let i = ((f * src + sy) * src + sx) * 3;
                for c in 0..3 {
                    data.push(clip.data[i + c] as f64 / 255.0);
                }
            }
        }
    }
    Ok(NormalizedClip {
        size: target_size,
        data,
    })
}
