//! Classifying generated samples: accuracy, confusion matrices and their
//! text, CSV and heatmap renderings.

use std::fmt::Write as _;

use image::{Rgb, RgbImage};
use t2v_autograd::ParamStore;

use crate::error::{invalid, Result};
use crate::evaluation::classifier::VideoClassifier;
use crate::text_encoder::Caption;
use crate::training::{generate_batch, Model, Sample};
use crate::video_generator::VideoClip;

const GENERATE_CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct VariantResult {
    pub variant: String,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub sample_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub results: Vec<VariantResult>,
}

/// Tallies `(true, predicted)` pairs.
pub fn score_predictions(variant: &str, num_classes: usize, pairs: &[(usize, usize)]) -> Result<VariantResult> {
    if pairs.is_empty() {
        return Err(invalid("no predictions to score"));
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for &(t, p) in pairs {
        if t >= num_classes || p >= num_classes {
            return Err(invalid(format!("label pair ({t}, {p}) out of range for {num_classes} classes")));
        }
        confusion[t][p] += 1;
    }
    let trace: u64 = (0..num_classes).map(|i| confusion[i][i]).sum();
    Ok(VariantResult {
        variant: variant.to_string(),
        accuracy: trace as f64 / pairs.len() as f64,
        confusion,
        sample_count: pairs.len(),
    })
}

/// Classifies clips grouped by true class.
pub fn evaluate_clips(classifier: &dyn VideoClassifier, variant: &str, by_class: &[Vec<VideoClip>]) -> Result<VariantResult> {
    let k = classifier.num_classes();
    if by_class.len() != k {
        return Err(invalid(format!("{} clip groups for a {k}-class classifier", by_class.len())));
    }
    let mut pairs = Vec::new();
    for (label, clips) in by_class.iter().enumerate() {
        for c in clips {
            pairs.push((label, classifier.predict(c)?));
        }
    }
    score_predictions(variant, k, &pairs)
}

/// `n_per_class` samples for every class, cycling through that class's
/// captions. Noise depends on `seed`, the class index and the position only.
pub fn generate_class_samples(
    model: &Model,
    ps: &ParamStore<f32>,
    captions_per_class: &[Vec<Caption>],
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<Vec<Sample>>> {
    if n_per_class == 0 {
        return Err(invalid("n_per_class must be positive"));
    }
    let mut out = Vec::with_capacity(captions_per_class.len());
    for (label, caps) in captions_per_class.iter().enumerate() {
        if caps.is_empty() {
            return Err(invalid(format!("class {label} has no captions")));
        }
        let wanted: Vec<&Caption> = (0..n_per_class).map(|i| &caps[i % caps.len()]).collect();
        let mut samples = Vec::with_capacity(n_per_class);
        for (j, chunk) in wanted.chunks(GENERATE_CHUNK).enumerate() {
            let s = seed ^ ((label as u64) << 40) ^ ((j as u64) << 20);
            samples.extend(generate_batch(model, ps, chunk, s)?);
        }
        out.push(samples);
    }
    Ok(out)
}

/// Generates `n_per_class` clips for every class and classifies them.
pub fn evaluate_generated(
    classifier: &dyn VideoClassifier,
    model: &Model,
    ps: &ParamStore<f32>,
    captions_per_class: &[Vec<Caption>],
    n_per_class: usize,
    seed: u64,
) -> Result<VariantResult> {
    let k = classifier.num_classes();
    if captions_per_class.len() != k {
        return Err(invalid(format!(
            "{} caption classes for a {k}-class classifier",
            captions_per_class.len()
        )));
    }
    let samples = generate_class_samples(model, ps, captions_per_class, n_per_class, seed)?;
    let by_class: Vec<Vec<VideoClip>> = samples
        .into_iter()
        .map(|v| v.into_iter().map(|s| s.video).collect())
        .collect();
    evaluate_clips(classifier, model.kind.name(), &by_class)
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "classes: {}", self.classes.join(", "));
        for r in &self.results {
            let _ = writeln!(s, "{}\taccuracy {:.4}\tsamples {}", r.variant, r.accuracy, r.sample_count);
        }
        s
    }

    /// Confusion matrix of one result as CSV with class-name headers.
    pub fn confusion_csv(&self, result: &VariantResult) -> String {
        let mut s = String::from("true\\predicted");
        for c in &self.classes {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&result.confusion) {
            s.push_str(c);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Row-normalized confusion matrix drawn as `cell`-pixel squares, white for
/// zero through dark blue for a full row.
pub fn confusion_heatmap(confusion: &[Vec<u64>], cell: u32) -> RgbImage {
    let k = confusion.len() as u32;
    let cell = cell.max(1);
    let mut img = RgbImage::new((k * cell).max(1), (k * cell).max(1));
    for (i, row) in confusion.iter().enumerate() {
        let total = row.iter().sum::<u64>().max(1) as f64;
        for (j, &v) in row.iter().enumerate() {
            let f = v as f64 / total;
            let px = Rgb([(255.0 * (1.0 - f)) as u8, (255.0 * (1.0 - 0.8 * f)) as u8, (255.0 - 100.0 * f) as u8]);
            for y in 0..cell {
                for x in 0..cell {
                    img.put_pixel(j as u32 * cell + x, i as u32 * cell + y, px);
                }
            }
        }
    }
    img
}
