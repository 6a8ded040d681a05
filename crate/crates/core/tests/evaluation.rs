//! Evaluation oracles: caption consistency on ground truth and noise, and
//! accuracy tallies.

mod common;

use common::{rng, tiny_config, toy_pairs};
use t2v_autograd::Tensor;
use t2v_core::data_pipeline::toy::{caption_for, PALETTE};
use t2v_core::data_pipeline::{synthesize_toy_corpus, ToyCorpusSpec};
use t2v_core::evaluation::consistency::{border_mean, nearest_color};
use t2v_core::evaluation::{
    caption_consistency_metrics, evaluate_clips, evaluate_generated, train_classifier, ClassifierConfig,
    ConsistencySample, LabeledClip, VideoClassifier,
};
use t2v_core::gist_cvae::Gist;
use t2v_core::training::{build_model_variant, VariantKind};
use t2v_core::video_generator::VideoClip;
use t2v_core::Result;

#[test]
fn ground_truth_is_self_consistent() {
    for size in [16, 64] {
        let spec = ToyCorpusSpec {
            frames: 8,
            size,
            ..ToyCorpusSpec::standard(4, 4, 3, 2)
        };
        let pairs = synthesize_toy_corpus(&spec).unwrap();
        let gists: Vec<Gist> = pairs.iter().map(|p| Gist { pixels: p.clip.frame(0) }).collect();
        let samples: Vec<ConsistencySample> = pairs
            .iter()
            .zip(&gists)
            .map(|(p, g)| ConsistencySample {
                gist: g,
                video: &p.clip,
                caption: &p.caption,
            })
            .collect();
        let r = caption_consistency_metrics(&samples, None).unwrap();
        assert_eq!((r.color_match_rate, r.motion_match_rate), (1.0, 1.0), "size {size}");
    }
}

#[test]
fn noise_gists_match_at_chance() {
    let colors: Vec<&str> = PALETTE.iter().take(4).map(|p| p.0).collect();
    let clip = VideoClip::new(Tensor::zeros(&[2, 3, 16, 16]), "still").unwrap();
    let mut r = rng(17);
    let gists: Vec<Gist> = (0..1000)
        .map(|_| Gist {
            pixels: Tensor::rand_uniform(&[3, 16, 16], -1.0, 1.0, &mut r),
        })
        .collect();
    let captions: Vec<String> = (0..1000).map(|i| caption_for(colors[i % 4], "right")).collect();
    let samples: Vec<ConsistencySample> = (0..1000)
        .map(|i| ConsistencySample {
            gist: &gists[i],
            video: &clip,
            caption: &captions[i],
        })
        .collect();
    let rates = caption_consistency_metrics(&samples, None).unwrap();
    assert!((rates.color_match_rate - 0.25).abs() <= 0.05, "{rates:?}");
    assert_eq!(rates.motion_match_rate, 0.0);

    let bad = [ConsistencySample {
        gist: &gists[0],
        video: &clip,
        caption: "a cat sitting still",
    }];
    assert!(caption_consistency_metrics(&bad, None).is_err());
}

#[test]
fn exact_solid_gist_matches_its_caption() {
    for (name, rgb) in PALETTE.iter().take(4) {
        let mut data = Vec::new();
        for c in rgb {
            data.extend(std::iter::repeat_n(*c, 64));
        }
        let g = Tensor::from_vec(&[3, 8, 8], data);
        let candidates: Vec<&str> = PALETTE.iter().take(4).map(|p| p.0).collect();
        assert_eq!(nearest_color(border_mean(&g), &candidates), Some(*name));
    }
}

/// Predicts the palette index nearest to the border color of the first frame.
struct BorderColor(Vec<&'static str>);

impl VideoClassifier for BorderColor {
    fn num_classes(&self) -> usize {
        self.0.len()
    }

    fn predict(&self, clip: &VideoClip) -> Result<usize> {
        let name = nearest_color(border_mean(&clip.frame(0)), &self.0).unwrap_or(self.0[0]);
        Ok(self.0.iter().position(|n| *n == name).unwrap())
    }
}

#[test]
fn accuracy_equals_an_independent_tally() {
    let classes: Vec<&str> = PALETTE.iter().take(4).map(|p| p.0).collect();
    let clf = BorderColor(classes.clone());
    let mut r = rng(3);
    // Mostly noise so that predictions scatter across the matrix.
    let groups: Vec<Vec<VideoClip>> = (0..4)
        .map(|k| {
            (0..25)
                .map(|i| {
                    let frames = if i % 3 == 0 {
                        let rgb = PALETTE[k].1;
                        let mut d = Vec::new();
                        for _ in 0..2 {
                            for c in rgb {
                                d.extend(std::iter::repeat_n(c, 64));
                            }
                        }
                        Tensor::from_vec(&[2, 3, 8, 8], d)
                    } else {
                        Tensor::rand_uniform(&[2, 3, 8, 8], -1.0, 1.0, &mut r)
                    };
                    VideoClip::new(frames, format!("{k}_{i}")).unwrap()
                })
                .collect()
        })
        .collect();
    let result = evaluate_clips(&clf, "X", &groups).unwrap();
    let mut hits = 0;
    let mut total = 0;
    for (k, g) in groups.iter().enumerate() {
        assert_eq!(result.confusion[k].iter().sum::<u64>(), 25);
        for c in g {
            hits += (clf.predict(c).unwrap() == k) as usize;
            total += 1;
        }
    }
    let trace: u64 = (0..4).map(|k| result.confusion[k][k]).sum();
    assert_eq!(result.accuracy, hits as f64 / total as f64);
    assert_eq!(result.accuracy, trace as f64 / 100.0);
    assert!(result.accuracy > 0.3 && result.accuracy < 1.0);
    assert!(evaluate_clips(&clf, "X", &groups[..3]).is_err());
}

#[test]
fn generated_samples_are_classified_per_class() {
    let cfg = tiny_config();
    let (vocab, data) = toy_pairs(&cfg, 2, 2, 2, 1);
    let (model, ps) = build_model_variant(VariantKind::T2V, &cfg, vocab.len(), 3).unwrap();
    let classes: Vec<&str> = PALETTE.iter().take(2).map(|p| p.0).collect();
    let by_class: Vec<Vec<_>> = classes
        .iter()
        .map(|c| data.iter().filter(|(_, cap)| cap.raw_text.contains(c)).map(|(_, cap)| cap.clone()).collect())
        .collect();
    let clf = BorderColor(classes.clone());
    let r = evaluate_generated(&clf, &model, &ps, &by_class, 5, 9).unwrap();
    assert_eq!(r.variant, "T2V");
    assert_eq!(r.sample_count, 10);
    assert!(r.confusion.iter().all(|row| row.iter().sum::<u64>() == 5));
    assert_eq!(r, evaluate_generated(&clf, &model, &ps, &by_class, 5, 9).unwrap());
    assert!(evaluate_generated(&clf, &model, &ps, &by_class[..1], 5, 9).is_err());
}

#[test]
fn classifier_training_is_deterministic() {
    let cfg = tiny_config();
    let (_, data) = toy_pairs(&cfg, 2, 2, 3, 4);
    let labeled: Vec<LabeledClip> = data
        .iter()
        .map(|(clip, cap)| LabeledClip {
            clip,
            label: cap.raw_text.contains("green") as usize,
        })
        .collect();
    let ccfg = ClassifierConfig {
        widths: [4, 4, 4, 4, 4],
        epochs: 3,
        batch_size: 4,
        seed: 5,
        ..Default::default()
    };
    let classes = vec!["a".to_string(), "b".to_string()];
    let (m1, h1) = train_classifier(&labeled, &labeled, classes.clone(), &ccfg).unwrap();
    let (m2, h2) = train_classifier(&labeled, &labeled, classes, &ccfg).unwrap();
    assert_eq!(h1, h2);
    let clips: Vec<&VideoClip> = data.iter().map(|d| &d.0).collect();
    assert_eq!(m1.probabilities(&clips).unwrap(), m2.probabilities(&clips).unwrap());
}
