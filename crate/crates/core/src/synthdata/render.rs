//! Flat-colour rasterizer for scenario clips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mix, RenderConfig, ScenarioKind, ScenarioSpec, VideoClip, FRAMES};
use crate::error::Result;

/// Axis-aligned region in fractions of the frame size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Region {
    pub const TOP_CENTER: Region = Region {
        x0: 0.42,
        x1: 0.58,
        y0: 0.03,
        y1: 0.12,
    };
    pub const ROAD_CENTER: Region = Region {
        x0: 0.47,
        x1: 0.53,
        y0: 0.56,
        y1: 0.62,
    };
    pub const RIGHT_SIGN: Region = Region {
        x0: 0.80,
        x1: 0.90,
        y0: 0.31,
        y1: 0.40,
    };
    pub const RIGHT_LANE: Region = Region {
        x0: 0.65,
        x1: 0.80,
        y0: 0.62,
        y1: 0.68,
    };
    pub const LEFT_MARKER: Region = Region {
        x0: 0.05,
        x1: 0.17,
        y0: 0.31,
        y1: 0.39,
    };

    /// The region holding the distinguishing object of `kind`, if any.
    pub fn signature(kind: ScenarioKind) -> Option<Region> {
        match kind {
            ScenarioKind::PedestrianCrossing => Some(Self::ROAD_CENTER),
            ScenarioKind::TrafficLightRed => Some(Self::TOP_CENTER),
            ScenarioKind::SharpCurve => Some(Self::RIGHT_SIGN),
            ScenarioKind::MergingTraffic => Some(Self::RIGHT_LANE),
            ScenarioKind::LeftTurn => Some(Self::LEFT_MARKER),
            ScenarioKind::FreeRoad => None,
        }
    }

    fn pixels(&self, size: usize) -> (usize, usize, usize, usize) {
        let s = size as f64;
        let px = |f: f64| ((f * s).round() as usize).min(size);
        let (x0, x1, y0, y1) = (px(self.x0), px(self.x1), px(self.y0), px(self.y1));
        (x0, x1.max(x0 + 1).min(size), y0, y1.max(y0 + 1).min(size))
    }
}

/// Mean RGB over `region` across all frames.
pub fn region_mean(clip: &VideoClip, region: Region) -> [f64; 3] {
    let (x0, x1, y0, y1) = region.pixels(clip.size);
    let mut acc = [0.0; 3];
    let mut count = 0.0;
    for f in 0..clip.frames() {
        for y in y0..y1 {
            for x in x0..x1 {
                let p = clip.pixel(f, y, x);
                for c in 0..3 {
                    acc[c] += p[c] as f64;
                }
                count += 1.0;
            }
        }
    }
    acc.map(|v| v / count)
}

struct Frame<'a> {
    buf: &'a mut [u8],
    size: usize,
}

impl Frame<'_> {
    fn put(&mut self, x: isize, y: isize, color: [u8; 3]) {
        let s = self.size as isize;
        if x < 0 || y < 0 || x >= s || y >= s {
            return;
        }
        let i = ((y as usize) * self.size + x as usize) * 3;
        self.buf[i..i + 3].copy_from_slice(&color);
    }

    /// Fills `[x0, x1) × [y0, y1)` given in pixels, clipped to the frame.
    fn rect(&mut self, x0: isize, x1: isize, y0: isize, y1: isize, color: [u8; 3]) {
        for y in y0..y1 {
            for x in x0..x1 {
                self.put(x, y, color);
            }
        }
    }

    /// Same as [`Frame::rect`] with fractional coordinates.
    fn rect_frac(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, color: [u8; 3]) {
        let s = self.size as f64;
        let p = |v: f64| (v * s).round() as isize;
        let (a, b, c, d) = (p(x0), p(x1), p(y0), p(y1));
        self.rect(a, b.max(a + 1), c, d.max(c + 1), color);
    }
}

const HORIZON: f64 = 0.25;

/// Horizontal centre of the road at row fraction `t` below the horizon (0 at
/// the horizon, 1 at the bottom edge).
fn road_center(spec: &ScenarioSpec, t: f64) -> f64 {
    match spec.kind {
        ScenarioKind::SharpCurve => 0.5 + spec.geometry.curve_sharpness * 0.30 * (1.0 - t).powi(2),
        _ => 0.5,
    }
}

pub(super) fn render_clip(spec: &ScenarioSpec, cfg: &RenderConfig, speed: f64) -> Result<VideoClip> {
    let s = cfg.size;
    let sf = s as f64;
    let pal = &cfg.palette;
    let g = spec.geometry;
    let frame_len = s * s * 3;
    let mut data = vec![0u8; FRAMES * frame_len];
    let horizon_px = (HORIZON * sf).round() as usize;
    let lane_w = (s / 32).max(1) as isize;
    let dash_period = (s / 6).max(2) as f64;
    let dash_rate = speed / 20.0 * sf / 16.0;
    let ego = (s / 16).max(2) as isize;
    let ego_rate = speed / 20.0 * sf / 32.0;
    let ego_span = (s / 8).max(1) as f64;

    for (f, buf) in data.chunks_exact_mut(frame_len).enumerate() {
        let mut fr = Frame { buf, size: s };
        let ft = f as f64 / (FRAMES - 1) as f64;

        fr.rect(0, s as isize, 0, horizon_px as isize, pal.sky);
        fr.rect(0, s as isize, horizon_px as isize, s as isize, pal.grass);

        for y in horizon_px..s {
            let t = (y as f64 - HORIZON * sf) / (sf * (1.0 - HORIZON));
            let half = sf * (0.04 + 0.30 * t);
            let cx = road_center(spec, t) * sf;
            let (x0, x1) = ((cx - half).round() as isize, (cx + half).round() as isize);
            fr.rect(x0, x1, y as isize, y as isize + 1, pal.road);
            let phase = (y as f64 + f as f64 * dash_rate).rem_euclid(dash_period);
            if phase < dash_period / 2.0 {
                let c = cx.round() as isize;
                fr.rect(
                    c - lane_w / 2,
                    c - lane_w / 2 + lane_w,
                    y as isize,
                    y as isize + 1,
                    pal.lane,
                );
            }
        }

        match spec.kind {
            ScenarioKind::PedestrianCrossing => {
                let cx = 0.48 + 0.04 * g.object_x + (ft - 0.5) * 0.02;
                let cy = 0.55 + 0.05 * g.object_y;
                fr.rect_frac(cx - 0.05, cx + 0.05, cy - 0.08, cy + 0.08, pal.pedestrian);
            }
            ScenarioKind::TrafficLightRed => {
                let cx = 0.47 + 0.06 * g.object_x;
                fr.rect_frac(cx - 0.015, cx + 0.015, 0.02, HORIZON + 0.05, pal.pole);
                let k = 0.85 + 0.15 * g.light_phase;
                let red = pal.red_light.map(|c| (c as f64 * k).round() as u8);
                fr.rect_frac(cx - 0.09, cx + 0.09, 0.02, 0.14, red);
            }
            ScenarioKind::SharpCurve => {
                fr.rect_frac(0.78, 0.92, 0.29, 0.42, pal.curve_sign);
            }
            ScenarioKind::MergingTraffic => {
                let x0 = 0.80 - 0.25 * ft;
                let y0 = 0.56 + 0.04 * g.object_y;
                fr.rect_frac(x0, x0 + 0.17, y0, y0 + 0.14, pal.car);
            }
            ScenarioKind::LeftTurn => {
                let y0 = 0.42 + 0.04 * g.object_y;
                fr.rect_frac(0.0, 0.5, y0, y0 + 0.10, pal.road);
                fr.rect_frac(0.04, 0.18, 0.30, 0.40, pal.turn_marker);
            }
            ScenarioKind::FreeRoad => {}
        }

        let ey = sf - ego as f64 - 1.0 - (f as f64 * ego_rate).rem_euclid(ego_span);
        let ey = ey.round() as isize;
        let ex = (sf / 2.0).round() as isize - ego / 2;
        fr.rect(ex, ex + ego, ey, ey + ego, pal.ego);
    }

    if cfg.noise > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0x6e6f_6973));
        let amp = cfg.noise as i16;
        for v in data.iter_mut() {
            let n: i16 = rng.random_range(-amp..=amp);
            *v = (*v as i16 + n).clamp(0, 255) as u8;
        }
    }
    VideoClip::new(s, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate_scenario, ScenarioSpec};

    fn max_channel_gap(a: [f64; 3], b: [f64; 3]) -> f64 {
        (0..3).map(|c| (a[c] - b[c]).abs()).fold(0.0, f64::max)
    }

    /// Every pair of kinds differs in the signature region of at least one of
    /// the two, for every seed tried.
    #[test]
    fn kinds_are_separable_by_region_statistics() {
        for size in [16, 32, 64] {
            let cfg = RenderConfig::with_size(size);
            for seed in 0..6u64 {
                let clips: Vec<_> = ScenarioKind::ALL
                    .iter()
                    .map(|&k| generate_scenario(&ScenarioSpec::sample(k, seed * 31 + 5), &cfg).unwrap())
                    .collect();
                for (i, a) in clips.iter().enumerate() {
                    for b in clips.iter().skip(i + 1) {
                        let regions: Vec<Region> =
                            [a.kind, b.kind].iter().filter_map(|k| Region::signature(*k)).collect();
                        let best = regions
                            .iter()
                            .map(|r| max_channel_gap(region_mean(&a.clip, *r), region_mean(&b.clip, *r)))
                            .fold(0.0, f64::max);
                        assert!(best > 25.0, "{} vs {} at size {size}: best gap {best}", a.kind, b.kind);
                    }
                }
            }
        }
    }

    #[test]
    fn clip_has_sixteen_square_frames() {
        let spec = ScenarioSpec::sample(ScenarioKind::MergingTraffic, 11);
        let s = generate_scenario(&spec, &RenderConfig::with_size(32)).unwrap();
        assert_eq!(s.clip.frames(), 16);
        assert_eq!(s.clip.data.len(), 16 * 32 * 32 * 3);
    }

    #[test]
    fn faster_ego_moves_further() {
        let spec = ScenarioSpec::sample(ScenarioKind::FreeRoad, 2);
        let cfg = RenderConfig {
            noise: 0,
            ..RenderConfig::with_size(64)
        };
        let slow = render_clip(&spec, &cfg, 0.0).unwrap();
        let fast = render_clip(&spec, &cfg, 25.0).unwrap();
        assert_eq!(slow.data[..64 * 64 * 3], fast.data[..64 * 64 * 3]);
        assert_ne!(slow.data, fast.data);
    }
}
