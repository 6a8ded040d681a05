//! Property tests over randomized inputs.

mod common;

use std::collections::{BTreeSet, HashSet};

use common::{rng, tiny_config};
use proptest::prelude::*;
use t2v_autograd::{ParamKind, ParamStore, Tape, Tensor};
use t2v_core::adversarial::{critic_loss, enforce_lipschitz};
use t2v_core::data_pipeline::qualify::clip_spans;
use t2v_core::data_pipeline::toy::{caption_for, parse_caption, render_clip, color_rgb, motion_step, MOTIONS, PALETTE};
use t2v_core::data_pipeline::{curate_metadata, split_dataset, CurationConfig, MetadataRecord};
use t2v_core::evaluation::{
    caption_consistency_metrics, score_predictions, ClassifierConfig, ClassifierModel, ConsistencySample,
};
use t2v_core::gist_cvae::{kl_to_standard_normal, sample_latent, Gist, GistCvae};
use t2v_core::text2filter::Text2Filter;
use t2v_core::text_encoder::{TextEncoder, Vocabulary};
use t2v_core::training::total_loss;
use t2v_core::video_generator::VideoClip;
use t2v_core::ObjectiveWeights;

fn vec_t(v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(&[1, v.len()], v.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_the_prior(
        pairs in prop::collection::vec((-4.0f64..4.0, -6.0f64..6.0), 1..10),
        zero in any::<bool>(),
    ) {
        let (mu, lv): (Vec<f64>, Vec<f64>) = if zero {
            (vec![0.0; pairs.len()], vec![0.0; pairs.len()])
        } else {
            pairs.into_iter().unzip()
        };
        let tape = Tape::<f64>::empty();
        let kl = kl_to_standard_normal(tape.constant(vec_t(&mu)), tape.constant(vec_t(&lv))).item();
        prop_assert!(kl >= 0.0);
        let away = mu.iter().chain(&lv).any(|v| v.abs() > 1e-3);
        if zero {
            prop_assert_eq!(kl, 0.0);
        } else if away {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn reparameterization_formula(v in prop::collection::vec((-3.0f64..3.0, -5.0f64..5.0, -3.0f64..3.0), 1..8)) {
        let mu: Vec<f64> = v.iter().map(|x| x.0).collect();
        let lv: Vec<f64> = v.iter().map(|x| x.1).collect();
        let e: Vec<f64> = v.iter().map(|x| x.2).collect();
        let tape = Tape::<f64>::empty();
        let z = sample_latent(tape.constant(vec_t(&mu)), tape.constant(vec_t(&lv)), tape.constant(vec_t(&e))).to_tensor();
        for i in 0..mu.len() {
            prop_assert!((z.data()[i] - (mu[i] + (0.5 * lv[i]).exp() * e[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_loss_is_antisymmetric(
        a in prop::collection::vec(-10.0f64..10.0, 1..12),
        b in prop::collection::vec(-10.0f64..10.0, 1..12),
    ) {
        let tape = Tape::<f64>::empty();
        let va = tape.constant(Tensor::from_vec(&[a.len()], a.clone()));
        let vb = tape.constant(Tensor::from_vec(&[b.len()], b.clone()));
        let ab = critic_loss(va, vb).item();
        let ba = critic_loss(vb, va).item();
        prop_assert!((ab + ba).abs() < 1e-12);
    }

    #[test]
    fn total_loss_is_linear_in_each_term(
        x in prop::array::uniform3(-100.0f64..100.0),
        delta in -50.0f64..50.0,
        w in prop::array::uniform3(0.0f64..5.0),
        k in 0usize..3,
    ) {
        let weights = ObjectiveWeights::new(w[0], w[1], w[2]).unwrap();
        let f = |v: [f64; 3]| total_loss(v[0], v[1], v[2], &weights).unwrap();
        let mut moved = x;
        moved[k] += delta;
        let mut twice = x;
        twice[k] += 2.0 * delta;
        let (f0, f1, f2) = (f(x), f(moved), f(twice));
        prop_assert!(((f1 - f0) - w[k] * delta).abs() <= 1e-9 * (1.0 + f0.abs() + f1.abs()));
        prop_assert!(((f2 - f1) - (f1 - f0)).abs() <= 1e-9 * (1.0 + f1.abs() + f2.abs()));
    }

    #[test]
    fn split_is_a_deterministic_partition(n in 0usize..300, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let (a, b, c) = split_dataset(&items, [0.7, 0.1, 0.2], seed).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), n);
        let all: BTreeSet<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        prop_assert_eq!(all.len(), n);
        for (part, r) in [(&a, 0.7), (&b, 0.1), (&c, 0.2)] {
            prop_assert!((part.len() as f64 - r * n as f64).abs() <= 1.0 + 1e-9);
        }
        prop_assert_eq!(split_dataset(&items, [0.7, 0.1, 0.2], seed).unwrap(), (a, b, c));
    }

    #[test]
    fn clip_spans_respect_breaks(
        overlaps in prop::collection::vec(prop_oneof![3 => Just(1.0f64), 1 => 0.0f64..1.0], 0..120),
        clip_length in 1usize..12,
        threshold in 0.05f64..0.95,
    ) {
        let num_frames = overlaps.len() + 1;
        let spans = clip_spans(&overlaps, num_frames, clip_length, threshold);
        let mut last_end = 0;
        for &(s, e) in &spans {
            prop_assert_eq!(e - s, clip_length);
            prop_assert!(s >= last_end && e <= num_frames);
            // Pair (i, i+1) is overlaps[i]; none inside a clip may fall short.
            for i in s..e - 1 {
                prop_assert!(overlaps[i] >= threshold);
            }
            last_end = e;
        }
        // Each maximal run of length L yields floor(L / clip_length) clips.
        let mut expected = 0;
        let mut run = 1;
        for &o in &overlaps {
            if o >= threshold {
                run += 1;
            } else {
                expected += run / clip_length;
                run = 1;
            }
        }
        expected += run / clip_length;
        prop_assert_eq!(spans.len(), expected);
    }

    #[test]
    fn confusion_rows_count_each_class(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200),
    ) {
        let r = score_predictions("X", 5, &pairs).unwrap();
        for k in 0..5 {
            let count = pairs.iter().filter(|p| p.0 == k).count() as u64;
            prop_assert_eq!(r.confusion[k].iter().sum::<u64>(), count);
        }
        let hits = pairs.iter().filter(|p| p.0 == p.1).count();
        prop_assert_eq!(r.accuracy, hits as f64 / pairs.len() as f64);
        prop_assert_eq!(r.sample_count, pairs.len());
    }

    #[test]
    fn clipping_bounds_every_weight(
        values in prop::collection::vec(-3.0f64..3.0, 1..64),
        clip in 0.001f64..1.0,
    ) {
        let mut ps = ParamStore::<f64>::new();
        ps.add("critic.w", Tensor::from_vec(&[values.len()], values.clone()), ParamKind::Weight);
        ps.add("generator.w", Tensor::from_vec(&[values.len()], values.clone()), ParamKind::Weight);
        enforce_lipschitz(&mut ps, "critic.", clip).unwrap();
        let clipped = ps.by_name("critic.w").unwrap();
        for (c, v) in clipped.data().iter().zip(&values) {
            prop_assert!(c.abs() <= clip);
            if v.abs() <= clip {
                prop_assert_eq!(c, v);
            }
        }
        prop_assert_eq!(ps.by_name("generator.w").unwrap().data(), &values[..]);
    }

    #[test]
    fn toy_captions_parse_back(c in 0usize..8, m in 0usize..8) {
        let (color, motion) = (PALETTE[c].0, MOTIONS[m].0);
        let parsed = parse_caption(&caption_for(color, motion));
        prop_assert_eq!(parsed, Some((color.to_string(), motion.to_string())));
    }
}

fn word_pool() -> Vec<&'static str> {
    vec![
        "the", "a", "of", "and", "in", "dog", "cat", "park", "running", "garden", "swimming", "pool", "2014", "03",
        "video", "golf", "snow", "kids", "playing", "café", "日本", "über", "with", "is",
    ]
}

fn record_strategy() -> impl Strategy<Value = MetadataRecord> {
    let pool = word_pool();
    let tags = ["dog", "park", "pet", "golf", "snow", "beach", "kids", "music"];
    (
        prop::collection::vec(prop::sample::select(pool.clone()), 0..9),
        prop::collection::vec(prop::sample::select(pool), 0..8),
        0.0f64..500.0,
        prop::collection::vec(prop::sample::select(tags.to_vec()), 0..6),
        prop::sample::select(vec!["en", "en-US", "", "fr", "de"]),
        any::<u32>(),
    )
        .prop_map(|(title, desc, duration, tags, lang, id)| MetadataRecord {
            title: title.join(" "),
            description: desc.join(" "),
            duration_seconds: duration,
            tags: tags.into_iter().map(String::from).collect(),
            language: lang.to_string(),
            source_id: id.to_string(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tightening_curation_never_admits_more(
        records in prop::collection::vec(record_strategy(), 1..40),
        which in 0usize..7,
        amount in 1usize..4,
    ) {
        let allow: HashSet<String> = ["dog", "park", "pet", "golf", "snow", "beach"].iter().map(|s| s.to_string()).collect();
        let loose = CurationConfig::default();
        let mut tight = loose.clone();
        let a = amount as f64;
        match which {
            0 => tight.top_tags = loose.top_tags.saturating_sub(amount * 3),
            1 => tight.min_selected_tags += amount,
            2 => tight.min_duration += 40.0 * a,
            3 => tight.max_duration -= 40.0 * a,
            4 => tight.min_meaningful_words += amount,
            5 => tight.min_ascii_ratio = (loose.min_ascii_ratio + 0.03 * a).min(1.0),
            _ => tight.min_stop_word_hits += amount,
        }
        let before: BTreeSet<usize> = curate_metadata(&records, &allow, &loose).unwrap().accepted.into_iter().collect();
        let after: BTreeSet<usize> = curate_metadata(&records, &allow, &tight).unwrap().accepted.into_iter().collect();
        prop_assert!(after.is_subset(&before));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn consistency_ignores_positive_rescaling(
        picks in prop::collection::vec((0usize..4, 0usize..4, any::<u64>()), 1..6),
        scale in 0.05f32..10.0,
    ) {
        let size = 16;
        let mut clips = Vec::new();
        let mut gists = Vec::new();
        let mut captions = Vec::new();
        for &(c, m, seed) in &picks {
            let (color, motion) = (PALETTE[c].0, MOTIONS[m].0);
            let frames = render_clip(color_rgb(color).unwrap(), motion_step(motion).unwrap(), 6, size, 0.0, &mut rng(seed));
            // Base values of at most 0.09 keep every rescaled pixel in range.
            let noise = Tensor::<f32>::rand_uniform(&[3, size, size], -0.5, 0.5, &mut rng(seed ^ 1));
            let first = Tensor::from_vec(&[3, size, size], frames.data()[..3 * size * size].to_vec());
            gists.push(first.zip_map(&noise, |a, b| 0.06 * a + 0.03 * b));
            clips.push(frames.map(|v| 0.09 * v));
            captions.push(caption_for(color, motion));
        }
        let rates = |k: f32| {
            let g: Vec<Gist> = gists.iter().map(|t| Gist { pixels: t.map(|v| v * k) }).collect();
            let v: Vec<VideoClip> = clips.iter().map(|t| VideoClip::new(t.map(|x| x * k), "c").unwrap()).collect();
            let samples: Vec<ConsistencySample> = (0..g.len())
                .map(|i| ConsistencySample { gist: &g[i], video: &v[i], caption: &captions[i] })
                .collect();
            caption_consistency_metrics(&samples, None).unwrap()
        };
        prop_assert_eq!(rates(1.0), rates(scale));
    }

    #[test]
    fn classifier_outputs_are_distributions(seed in any::<u64>(), k in 2usize..6, n in 1usize..5) {
        let cfg = ClassifierConfig { widths: [2, 3, 3, 3, 3], seed, ..Default::default() };
        let classes = (0..k).map(|i| format!("c{i}")).collect();
        let model = ClassifierModel::new(classes, [4, 3, 8, 8], &cfg).unwrap();
        let clips: Vec<VideoClip> = (0..n)
            .map(|i| VideoClip::new(Tensor::rand_uniform(&[4, 3, 8, 8], -1.0, 1.0, &mut rng(seed ^ i as u64)), "x").unwrap())
            .collect();
        let refs: Vec<&VideoClip> = clips.iter().collect();
        for p in model.probabilities(&refs).unwrap() {
            prop_assert_eq!(p.len(), k);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn decoded_gists_stay_in_range(seed in any::<u64>(), scale in 0.1f32..50.0) {
        let cfg = tiny_config();
        let mut ps = ParamStore::<f32>::new();
        let cvae = GistCvae::new(&mut ps, "cvae", &cfg, &mut rng(seed));
        let tape = Tape::inference(&ps);
        let z = Tensor::<f32>::randn(&[3, cfg.gist_latent_dim], &mut rng(seed ^ 7)).map(|v| v * scale);
        let t = Tensor::<f32>::randn(&[3, cfg.text_dim], &mut rng(seed ^ 9)).map(|v| v * scale);
        let g = cvae.decode(tape.constant(z), tape.constant(t)).unwrap().to_tensor();
        prop_assert_eq!(g.shape(), &[3, cfg.channels, cfg.height, cfg.width]);
        prop_assert!(g.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn filter_shape_for_any_text_length(text_dim in 1usize..40, f in 1usize..6, ky in 0usize..3, kz in 0usize..3) {
        let cfg = t2v_core::ModelConfig {
            text_dim,
            filter_channels: f,
            filter_ky: 2 * ky + 1,
            filter_kz: 2 * kz + 1,
            ..tiny_config()
        };
        let mut ps = ParamStore::<f32>::new();
        let t2f = Text2Filter::new(&mut ps, "text2filter", "text2filter.encoder", &cfg, &mut rng(1));
        let tape = Tape::inference(&ps);
        let k = t2f.make_filter(tape.constant(Tensor::randn(&[2, text_dim], &mut rng(2)))).unwrap();
        prop_assert_eq!(k.shape(), vec![2, f, cfg.channels, 2 * ky + 1, 2 * kz + 1]);
    }

    #[test]
    fn encoded_text_has_fixed_length_and_is_pure(
        words in prop::collection::vec(prop::sample::select(word_pool()), 1..12),
        seed in any::<u64>(),
    ) {
        let text = words.join(" ");
        let cfg = tiny_config();
        let vocab = Vocabulary::build(&[text.as_str(), "zebra"]).unwrap();
        let mut ps = ParamStore::<f32>::new();
        let enc = TextEncoder::new(&mut ps, "text", vocab.len(), &cfg, &mut rng(seed));
        let cap = vocab.caption(&text).unwrap();
        let a = enc.encode(&ps, &cap).unwrap();
        prop_assert_eq!(a.values.len(), cfg.text_dim);
        prop_assert!(a.values.iter().all(|v| v.is_finite()));
        let b = enc.encode(&ps, &cap).unwrap();
        prop_assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
