//! Text templates for scenario descriptions (model input) and explanations
//! (decoder target).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ScenarioKind;

const WEATHER: [&str; 4] = ["clear", "rainy", "cloudy", "foggy"];
const TIME: [&str; 4] = ["morning", "afternoon", "evening", "night"];
const TRAFFIC: [&str; 3] = ["light", "moderate", "heavy"];
const SETTINGS: [&str; 5] = [
    "a city street",
    "a signalized intersection",
    "a highway",
    "a rural road",
    "a residential area",
];

/// Relative weight of each entry of [`SETTINGS`] per scenario kind. The
/// setting hints at the scenario without determining it.
fn setting_weights(kind: ScenarioKind) -> [u32; 5] {
    match kind {
        ScenarioKind::PedestrianCrossing => [4, 2, 0, 0, 4],
        ScenarioKind::TrafficLightRed => [4, 6, 0, 0, 0],
        ScenarioKind::SharpCurve => [0, 0, 2, 6, 2],
        ScenarioKind::MergingTraffic => [3, 0, 7, 0, 0],
        ScenarioKind::LeftTurn => [0, 6, 0, 0, 4],
        ScenarioKind::FreeRoad => [2, 0, 4, 4, 0],
    }
}

pub(super) fn description(kind: ScenarioKind, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weather = WEATHER[rng.random_range(0..WEATHER.len() as u32) as usize];
    let time = TIME[rng.random_range(0..TIME.len() as u32) as usize];
    let traffic = TRAFFIC[rng.random_range(0..TRAFFIC.len() as u32) as usize];
    let weights = setting_weights(kind);
    let total: u32 = weights.iter().sum();
    let mut pick = rng.random_range(0..total);
    let mut setting = SETTINGS[0];
    for (s, w) in SETTINGS.iter().zip(weights) {
        if pick < w {
            setting = s;
            break;
        }
        pick -= w;
    }
    format!("{weather} {time} driving on {setting} with {traffic} traffic")
}

pub(super) fn explanation(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::PedestrianCrossing => "slow down because of pedestrian crossing ahead",
        ScenarioKind::TrafficLightRed => "stop because of red light",
        ScenarioKind::SharpCurve => "reduce speed because of sharp curve",
        ScenarioKind::MergingTraffic => "change lane right due to merging traffic",
        ScenarioKind::LeftTurn => "turn left at the upcoming intersection",
        ScenarioKind::FreeRoad => "accelerate because the road ahead is clear",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptions_never_name_the_scenario() {
        for kind in ScenarioKind::ALL {
            for seed in 0..50 {
                let d = description(kind, seed);
                assert!(!d.contains("pedestrian") && !d.contains("red light") && !d.contains("curve"));
            }
        }
    }

    #[test]
    fn every_setting_weight_row_is_nonzero() {
        for kind in ScenarioKind::ALL {
            assert!(setting_weights(kind).iter().sum::<u32>() > 0);
        }
    }
}
