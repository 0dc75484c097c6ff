use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::MAX_LEN;
use crate::synthdata::{ActionLabel, FRAMES};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEncoderConfig {
    pub frames: usize,
    pub image_size: usize,
    pub tubelet_frames: usize,
    pub patch: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
}

impl VideoEncoderConfig {
    pub fn grid(&self) -> usize {
        self.image_size / self.patch
    }

    pub fn temporal_slots(&self) -> usize {
        self.frames / self.tubelet_frames
    }

    pub fn tokens(&self) -> usize {
        self.temporal_slots() * self.grid() * self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.tubelet_frames * self.patch * self.patch * 3
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackConfig {
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// ReLU(W · concat + b).
    Full,
    /// The raw concatenation feeds both heads.
    SimpleConcat,
}

/// Which modality features reach the fusion layer; absent ones are zero-filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityMask {
    pub video: bool,
    pub sensor: bool,
    pub text: bool,
}

impl ModalityMask {
    pub const ALL: ModalityMask = ModalityMask {
        video: true,
        sensor: true,
        text: true,
    };

    pub fn any(&self) -> bool {
        self.video || self.sensor || self.text
    }
}

impl Default for ModalityMask {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_video: usize,
    pub d_sensor_hidden: usize,
    pub d_sensor: usize,
    pub d_text: usize,
    pub d_fused: usize,
    pub d_dec: usize,
    pub video: VideoEncoderConfig,
    pub text: StackConfig,
    pub decoder: StackConfig,
    pub vocab_size: usize,
    pub num_actions: usize,
    pub max_len: usize,
    pub beams: usize,
    pub fusion_mode: FusionMode,
    pub modalities: ModalityMask,
    /// When false the explanation decoder is neither trained nor evaluated.
    pub explanation_head: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale preset: 64-wide branches, 2-layer/4-head transformers,
    /// 64×64 clips with 8×8 patches and 2-frame tubelets.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            d_video: 64,
            d_sensor_hidden: 64,
            d_sensor: 128,
            d_text: 64,
            d_fused: 64,
            d_dec: 64,
            video: VideoEncoderConfig {
                frames: FRAMES,
                image_size: 64,
                tubelet_frames: 2,
                patch: 8,
                layers: 2,
                heads: 4,
                mlp_ratio: 4,
            },
            text: StackConfig {
                layers: 2,
                heads: 4,
                mlp_ratio: 4,
            },
            decoder: StackConfig {
                layers: 2,
                heads: 4,
                mlp_ratio: 4,
            },
            vocab_size,
            num_actions: ActionLabel::COUNT,
            max_len: MAX_LEN,
            beams: 5,
            fusion_mode: FusionMode::Full,
            modalities: ModalityMask::ALL,
            explanation_head: true,
            seed: 0,
        }
    }

    /// Full-size dimensions: 768-wide video/text features at 224×224.
    pub fn paper_preset(vocab_size: usize) -> Self {
        Self {
            d_video: 768,
            d_text: 768,
            d_fused: 768,
            d_dec: 768,
            video: VideoEncoderConfig {
                frames: FRAMES,
                image_size: 224,
                tubelet_frames: 2,
                patch: 16,
                layers: 12,
                heads: 12,
                mlp_ratio: 4,
            },
            text: StackConfig {
                layers: 12,
                heads: 12,
                mlp_ratio: 4,
            },
            decoder: StackConfig {
                layers: 6,
                heads: 12,
                mlp_ratio: 4,
            },
            ..Self::toy(vocab_size)
        }
    }

    /// Very small variant for unit tests: 16×16 clips, one-layer stacks.
    pub fn tiny(vocab_size: usize) -> Self {
        let mut cfg = Self::toy(vocab_size);
        cfg.d_video = 8;
        cfg.d_text = 8;
        cfg.d_fused = 8;
        cfg.d_dec = 8;
        cfg.d_sensor_hidden = 64;
        cfg.d_sensor = 128;
        cfg.video.image_size = 16;
        cfg.video.layers = 1;
        cfg.video.heads = 2;
        cfg.video.mlp_ratio = 2;
        cfg.text = StackConfig {
            layers: 1,
            heads: 2,
            mlp_ratio: 2,
        };
        cfg.decoder = StackConfig {
            layers: 1,
            heads: 2,
            mlp_ratio: 2,
        };
        cfg
    }

    pub fn concat_width(&self) -> usize {
        self.d_video + self.d_sensor + self.d_text
    }

    /// Width of the vector consumed by both heads.
    pub fn head_width(&self) -> usize {
        match self.fusion_mode {
            FusionMode::Full => self.d_fused,
            FusionMode::SimpleConcat => self.concat_width(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_video", self.d_video),
            ("d_sensor_hidden", self.d_sensor_hidden),
            ("d_text", self.d_text),
            ("d_fused", self.d_fused),
            ("d_dec", self.d_dec),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
            ("beams", self.beams),
            ("video.patch", self.video.patch),
            ("video.tubelet_frames", self.video.tubelet_frames),
            ("video.heads", self.video.heads),
            ("text.heads", self.text.heads),
            ("decoder.heads", self.decoder.heads),
            ("video.mlp_ratio", self.video.mlp_ratio),
            ("text.mlp_ratio", self.text.mlp_ratio),
            ("decoder.mlp_ratio", self.decoder.mlp_ratio),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.d_sensor != 128 {
            return Err(Error::config("sensor feature width is fixed at 128"));
        }
        if self.num_actions != ActionLabel::COUNT {
            return Err(Error::config("action head must have 5 classes"));
        }
        if self.video.frames != FRAMES {
            return Err(Error::config(format!("video clips have {FRAMES} frames")));
        }
        if !self.video.frames.is_multiple_of(self.video.tubelet_frames) {
            return Err(Error::config("frame count not divisible by tubelet length"));
        }
        if !self.video.image_size.is_multiple_of(self.video.patch) {
            return Err(Error::config("image size not divisible by patch size"));
        }
        for (name, d, h) in [
            ("video", self.d_video, self.video.heads),
            ("text", self.d_text, self.text.heads),
            ("decoder", self.d_dec, self.decoder.heads),
        ] {
            if d % h != 0 {
                return Err(Error::config(format!("{name} width {d} not divisible by {h} heads")));
            }
        }
        if self.vocab_size <= crate::preprocess::CLS as usize {
            return Err(Error::config("vocabulary must include the reserved tokens"));
        }
        if self.max_len < 2 {
            return Err(Error::config("max_len must leave room for BOS and EOS"));
        }
        if !self.modalities.any() {
            return Err(Error::config("at least one modality must be enabled"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_token_count() {
        assert_eq!(ModelConfig::toy(30).video.tokens(), 512);
    }

    #[test]
    fn paper_preset_widths() {
        let cfg = ModelConfig::paper_preset(30);
        cfg.validate().unwrap();
        assert_eq!(cfg.video.tokens(), 8 * 14 * 14);
        assert_eq!(cfg.concat_width(), 1664);
        assert_eq!(cfg.head_width(), 768);
    }
}
