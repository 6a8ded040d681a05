//! Video classifier used to score generated clips: five strided 3-D
//! convolutions with ReLU, then an affine layer and softmax.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use t2v_autograd::nn::{Conv, Init, Linear};
use t2v_autograd::{Adam, AdamConfig, ParamStore, Tape, Tensor, Var};

use crate::adversarial::layer_geom;
use crate::error::{invalid, Result};
use crate::video_generator::VideoClip;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub widths: [usize; 5],
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            widths: [32, 64, 128, 256, 256],
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LabeledClip<'a> {
    pub clip: &'a VideoClip,
    pub label: usize,
}

pub trait VideoClassifier {
    fn num_classes(&self) -> usize;
    fn predict(&self, clip: &VideoClip) -> Result<usize>;
}

#[derive(Clone, Debug)]
struct Net {
    convs: Vec<Conv>,
    head: Linear,
}

impl Net {
    fn forward<'t>(&self, x: Var<'t, f32>) -> Var<'t, f32> {
        let mut h = x;
        for c in &self.convs {
            h = c.forward(h).relu();
        }
        let n = h.shape()[0];
        let feat = h.shape()[1..].iter().product();
        self.head.forward(h.reshape(&[n, feat]))
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierModel {
    pub classes: Vec<String>,
    /// `[T, C, H, W]` of accepted clips.
    pub clip_shape: [usize; 4],
    params: ParamStore<f32>,
    net: Net,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHistory {
    pub val_accuracy: Vec<f64>,
    pub best_epoch: usize,
}

impl ClassifierModel {
    pub fn new(classes: Vec<String>, clip_shape: [usize; 4], cfg: &ClassifierConfig) -> Result<Self> {
        if classes.len() < 2 {
            return Err(invalid("a classifier needs at least two classes"));
        }
        if clip_shape.contains(&0) {
            return Err(invalid(format!("bad clip shape {clip_shape:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ps = ParamStore::new();
        let [t, c, h, w] = clip_shape;
        let mut dims = [t, h, w];
        let mut ch = c;
        let mut convs = Vec::new();
        for (i, &out) in cfg.widths.iter().enumerate() {
            let g = layer_geom(dims);
            convs.push(Conv::new(&mut ps, &format!("classifier.conv{i}"), ch, out, g, true, Init::FanIn, &mut rng));
            dims = g.out_dims(dims);
            ch = out;
        }
        let feat = ch * dims.iter().product::<usize>();
        let head = Linear::new(&mut ps, "classifier.head", feat, classes.len(), &mut rng);
        Ok(ClassifierModel {
            classes,
            clip_shape,
            params: ps,
            net: Net { convs, head },
        })
    }

    fn batch(&self, clips: &[&VideoClip]) -> Result<Tensor<f32>> {
        let mut parts = Vec::with_capacity(clips.len());
        for c in clips {
            if c.dims() != self.clip_shape {
                return Err(invalid(format!(
                    "clip {} has shape {:?}, classifier expects {:?}",
                    c.caption_id,
                    c.dims(),
                    self.clip_shape
                )));
            }
            parts.push(c.channels_first());
        }
        Ok(Tensor::stack(&parts))
    }

    /// Class probabilities per clip; every row sums to one.
    pub fn probabilities(&self, clips: &[&VideoClip]) -> Result<Vec<Vec<f64>>> {
        if clips.is_empty() {
            return Ok(Vec::new());
        }
        let tape = Tape::inference(&self.params);
        let logp = self.net.forward(tape.constant(self.batch(clips)?)).log_softmax().to_tensor();
        let k = self.classes.len();
        Ok(logp.data().chunks(k).map(|r| r.iter().map(|&v| (v as f64).exp()).collect()).collect())
    }

    pub fn predict_batch(&self, clips: &[&VideoClip]) -> Result<Vec<usize>> {
        Ok(self.probabilities(clips)?.iter().map(|p| argmax(p)).collect())
    }

    pub fn accuracy(&self, data: &[LabeledClip<'_>]) -> Result<f64> {
        if data.is_empty() {
            return Err(invalid("no clips to score"));
        }
        let mut hits = 0;
        for chunk in data.chunks(32) {
            let clips: Vec<&VideoClip> = chunk.iter().map(|d| d.clip).collect();
            let pred = self.predict_batch(&clips)?;
            hits += pred.iter().zip(chunk).filter(|(p, d)| **p == d.label).count();
        }
        Ok(hits as f64 / data.len() as f64)
    }

    fn train_batch(&mut self, opt: &mut Adam<f32>, batch: &[LabeledClip<'_>]) -> Result<f64> {
        let clips: Vec<&VideoClip> = batch.iter().map(|d| d.clip).collect();
        let x = self.batch(&clips)?;
        let k = self.classes.len();
        let mut onehot = Tensor::zeros(&[batch.len(), k]);
        for (i, d) in batch.iter().enumerate() {
            onehot.data_mut()[i * k + d.label] = 1.0;
        }
        let tape = Tape::new(&self.params, true, |_| true);
        let logp = self.net.forward(tape.constant(x)).log_softmax();
        let loss = logp.mul(tape.constant(onehot)).sum().scale(-1.0 / batch.len() as f32);
        let value = loss.item() as f64;
        if !value.is_finite() {
            return Err(crate::error::Error::Divergence {
                step: None,
                term: "classifier cross-entropy",
            });
        }
        let grads = tape.backward(loss);
        opt.step(&mut self.params, &grads.params());
        Ok(value)
    }
}

impl VideoClassifier for ClassifierModel {
    fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn predict(&self, clip: &VideoClip) -> Result<usize> {
        Ok(self.predict_batch(&[clip])?[0])
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
        .0
}

/// Trains with cross-entropy and Adam, keeping the parameters from the epoch
/// with the best validation accuracy (earliest on ties).
pub fn train_classifier(
    train: &[LabeledClip<'_>],
    val: &[LabeledClip<'_>],
    classes: Vec<String>,
    cfg: &ClassifierConfig,
) -> Result<(ClassifierModel, ClassifierHistory)> {
    if train.is_empty() || val.is_empty() {
        return Err(invalid("classifier training needs non-empty train and validation sets"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(invalid("epochs and batch_size must be positive"));
    }
    let k = classes.len();
    if let Some(d) = train.iter().chain(val).find(|d| d.label >= k) {
        return Err(invalid(format!("label {} out of range for {k} classes", d.label)));
    }
    let mut present = vec![false; k];
    train.iter().for_each(|d| present[d.label] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(invalid("classifier training data covers fewer than two classes"));
    }
    let mut model = ClassifierModel::new(classes, train[0].clip.dims(), cfg)?;
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.learning_rate,
        beta1: 0.9,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::NEG_INFINITY, 0, model.params.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<LabeledClip> = idx.iter().map(|&i| train[i]).collect();
            model.train_batch(&mut opt, &batch)?;
        }
        let acc = model.accuracy(val)?;
        history.push(acc);
        if acc > best.0 {
            best = (acc, epoch, model.params.clone());
        }
    }
    model.params = best.2;
    Ok((
        model,
        ClassifierHistory {
            val_accuracy: history,
            best_epoch: best.1,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(v: f32) -> VideoClip {
        VideoClip::new(Tensor::full(&[4, 3, 8, 8], v), "c").unwrap()
    }

    fn small() -> ClassifierConfig {
        ClassifierConfig {
            widths: [4, 8, 8, 8, 8],
            ..Default::default()
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = ClassifierModel::new(vec!["a".into(), "b".into(), "c".into()], [4, 3, 8, 8], &small()).unwrap();
        let clip = VideoClip::new(Tensor::rand_uniform(&[4, 3, 8, 8], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1)), "x").unwrap();
        for p in m.probabilities(&[&clip, &solid(0.3)]).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn separates_black_from_white() {
        let (black, white) = (solid(-1.0), solid(1.0));
        let data: Vec<LabeledClip> = (0..8)
            .map(|i| LabeledClip {
                clip: if i % 2 == 0 { &black } else { &white },
                label: i % 2,
            })
            .collect();
        let (m, h) = train_classifier(&data, &data, vec!["black".into(), "white".into()], &small()).unwrap();
        assert_eq!(h.val_accuracy[h.best_epoch], 1.0);
        assert_eq!(m.accuracy(&data).unwrap(), 1.0);
    }

    #[test]
    fn single_class_is_an_error() {
        let black = solid(-1.0);
        let data = vec![LabeledClip { clip: &black, label: 0 }; 4];
        assert!(train_classifier(&data, &data, vec!["a".into(), "b".into()], &small()).is_err());
        assert!(train_classifier(&data, &data, vec!["a".into()], &small()).is_err());
    }
}
