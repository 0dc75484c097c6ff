use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fusedrive::eval::{accuracy, bleu4, sentence_bleu4, ConfusionMatrix};
use fusedrive::fusion::{beam_search_with, exhaustive_search, greedy_decode, BeamConfig, StepScorer};
use fusedrive::nn::softmax;
use fusedrive::preprocess::{
    apply_sensor_norm, build_vocab, denormalize_sensor, fit_sensor_stats, normalize_clip, split_dataset, tokenize,
    Framing, SplitAssignment, BOS, CLS, EOS, PAD,
};
use fusedrive::synthdata::{mix, ActionLabel, SensorReading, VideoClip, BOSTON_BOX, FRAMES};

/// Scores every prefix with its own pseudo-random distribution.
struct HashScorer {
    seed: u64,
    vocab: usize,
}

impl StepScorer for HashScorer {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn log_probs(&self, prefix: &[u32]) -> Vec<f64> {
        let key = prefix.iter().fold(self.seed, |h, &t| mix(h, t as u64 + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let logits: Vec<f64> = (0..self.vocab).map(|_| rng.random_range(-3.0..3.0)).collect();
        softmax(&logits).iter().map(|p| p.ln()).collect()
    }
}

fn action() -> impl Strategy<Value = ActionLabel> {
    (0..ActionLabel::COUNT).prop_map(|c| ActionLabel::from_code(c).unwrap())
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(vec!["a", "b", "c", "d", "e", "road", "car"]),
        0..12,
    )
    .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_disjoint_cover(n in 10usize..400, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("s{i:06}")).collect();
        let s = split_dataset(&ids, seed).unwrap();
        let (tr, va, te) = SplitAssignment::sizes(n);
        prop_assert_eq!((s.train.len(), s.val.len(), s.test.len()), (tr, va, te));
        let all: HashSet<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(&split_dataset(&ids, seed).unwrap(), &s);
    }

    #[test]
    fn sensor_norm_inverts(
        raw in prop::collection::vec((0.0f64..40.0, 0.0f64..1.0, 0.0f64..1.0), 2..50),
    ) {
        let (lat, lon) = BOSTON_BOX;
        let readings: Vec<SensorReading> = raw
            .iter()
            .map(|&(s, a, b)| SensorReading {
                speed: s,
                latitude: lat[0] + a * (lat[1] - lat[0]),
                longitude: lon[0] + b * (lon[1] - lon[0]),
            })
            .collect();
        let stats = fit_sensor_stats(&readings).unwrap();
        for r in &readings {
            let z = apply_sensor_norm(r, &stats).unwrap();
            let back = denormalize_sensor(&z, &stats);
            prop_assert!((back.speed - r.speed).abs() < 1e-9);
            prop_assert!((back.latitude - r.latitude).abs() < 1e-9);
            prop_assert!((back.longitude - r.longitude).abs() < 1e-9);
        }
    }

    #[test]
    fn tokenization_respects_bounds(text in words(), extra in words(), max_len in 2usize..60) {
        let corpus = text.join(" ");
        let vocab = build_vocab([corpus.as_str()], 1).unwrap();
        let unseen = extra.join(" ");
        for framing in [Framing::Plain, Framing::Cls, Framing::BosEos] {
            for input in [&corpus, &unseen] {
                let t = tokenize(input, &vocab, max_len, framing);
                prop_assert_eq!(t.ids.len(), max_len);
                prop_assert!(t.len <= max_len);
                prop_assert!(t.ids.iter().all(|&i| (i as usize) < vocab.len()));
                prop_assert!(t.ids[t.len..].iter().all(|&i| i == PAD));
                match framing {
                    Framing::Cls => prop_assert_eq!(t.ids[0], CLS),
                    Framing::BosEos => {
                        prop_assert_eq!(t.ids[0], BOS);
                        prop_assert_eq!(t.ids[t.len - 1], EOS);
                    }
                    Framing::Plain => {}
                }
            }
        }
    }

    #[test]
    fn normalized_clip_stays_in_unit_range(size in 16usize..24, target in 1usize..40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<u8> = (0..VideoClip::byte_len(size)).map(|_| rng.random()).collect();
        let clip = VideoClip::new(size, data).unwrap();
        let n = normalize_clip(&clip, target).unwrap();
        prop_assert_eq!(n.data.len(), FRAMES * target * target * 3);
        prop_assert!(n.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-500.0f64..500.0, 1..40)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wide_beam_matches_exhaustive(seed in any::<u64>(), vocab in 3usize..5, max_len in 2usize..5) {
        let scorer = HashScorer { seed, vocab };
        // Enough beams to keep every live prefix.
        let beams = vocab.pow(max_len as u32);
        let cfg = BeamConfig::new(beams, max_len);
        let best = beam_search_with(&scorer, &cfg).unwrap().best;
        prop_assert_eq!(best, exhaustive_search(&scorer, &cfg).unwrap());
    }

    #[test]
    fn single_beam_is_greedy(seed in any::<u64>(), vocab in 3usize..8, max_len in 2usize..12) {
        let scorer = HashScorer { seed, vocab };
        let cfg = BeamConfig::new(1, max_len);
        let beam = beam_search_with(&scorer, &cfg).unwrap().best;
        prop_assert_eq!(beam, greedy_decode(&scorer, &cfg).unwrap());
    }

    #[test]
    fn bleu_ignores_pair_order(
        pairs in prop::collection::vec((words(), words()), 1..12),
        rot in 0usize..12,
    ) {
        let (h, r): (Vec<Vec<String>>, Vec<Vec<String>>) = pairs.iter().cloned().unzip();
        let a = bleu4(&h, &r).unwrap();
        let k = rot % pairs.len();
        let mut rotated = pairs.clone();
        rotated.rotate_left(k);
        let (h2, r2): (Vec<Vec<String>>, Vec<Vec<String>>) = rotated.into_iter().unzip();
        let b = bleu4(&h2, &r2).unwrap();
        prop_assert!((a.corpus - b.corpus).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a.corpus));
    }

    #[test]
    fn bleu_of_identical_text_is_one(h in words().prop_filter("four tokens", |w| w.len() >= 4)) {
        prop_assert!((sentence_bleu4(&h, &h) - 1.0).abs() < 1e-12);
        let corpus = vec![h.clone()];
        prop_assert!((bleu4(&corpus, &corpus).unwrap().corpus - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_is_confusion_trace(pairs in prop::collection::vec((action(), action()), 1..300)) {
        let (p, l): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let cm = ConfusionMatrix::from_predictions(&p, &l).unwrap();
        prop_assert_eq!(cm.total(), p.len() as u64);
        prop_assert_eq!(accuracy(&p, &l).unwrap(), cm.trace() as f64 / cm.total() as f64);
        let (pct, empty) = cm.normalized();
        for a in ActionLabel::ALL {
            let sum: f64 = pct[a.code()].iter().sum();
            if empty.contains(&a) {
                prop_assert_eq!(sum, 0.0);
            } else {
                prop_assert!((sum - 100.0).abs() < 1e-6);
            }
        }
    }
}
