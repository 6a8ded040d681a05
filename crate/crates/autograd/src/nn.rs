//! Parameterized layers built on the tape.

use std::sync::Arc;

use rand::Rng;

use crate::conv::ConvGeom;
use crate::float::Float;
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::tape::Var;
use crate::tensor::{numel, Tensor};

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    FanIn,
    /// `N(0, std^2)`.
    Normal(f64),
    Zeros,
    Constant(f64),
}

impl Init {
    pub fn tensor<T: Float, R: Rng + ?Sized>(self, shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
        match self {
            Init::FanIn => {
                let b = 1.0 / (fan_in.max(1) as f64).sqrt();
                Tensor::rand_uniform(shape, -b, b, rng)
            }
            Init::Normal(std) => {
                let mut t = Tensor::<T>::randn(shape, rng);
                t.scale_inplace(T::from_f64(std));
                t
            }
            Init::Zeros => Tensor::zeros(shape),
            Init::Constant(c) => Tensor::full(shape, T::from_f64(c)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Float, R: Rng + ?Sized>(
        ps: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self::with_init(ps, name, in_dim, out_dim, Init::FanIn, Init::FanIn, rng)
    }

    pub fn with_init<T: Float, R: Rng + ?Sized>(
        ps: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        weight_init: Init,
        bias_init: Init,
        rng: &mut R,
    ) -> Self {
        let w = weight_init.tensor(&[out_dim, in_dim], in_dim, rng);
        let weight = ps.add(format!("{name}.weight"), w, ParamKind::Weight);
        let b = bias_init.tensor(&[out_dim], in_dim, rng);
        let bias = Some(ps.add(format!("{name}.bias"), b, ParamKind::Weight));
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// `[N, in] -> [N, out]`.
    pub fn forward<'t, T: Float>(&self, x: Var<'t, T>) -> Var<'t, T> {
        let tape = x.tape();
        let y = x.matmul_t(false, tape.param(self.weight), true);
        match self.bias {
            Some(b) => y.add_bcast(tape.param(b).reshape(&[1, self.out_dim])),
            None => y,
        }
    }
}

/// Convolution layer (2-D or 3-D, decided by the kernel geometry and input rank).
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub geom: ConvGeom,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float, R: Rng + ?Sized>(
        ps: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        geom: ConvGeom,
        bias: bool,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let shape = [out_ch, in_ch, geom.kernel[0], geom.kernel[1], geom.kernel[2]];
        let fan_in = in_ch * geom.kernel_volume();
        let weight = ps.add(format!("{name}.weight"), init.tensor(&shape, fan_in, rng), ParamKind::Weight);
        let bias = bias.then(|| {
            ps.add(
                format!("{name}.bias"),
                Init::FanIn.tensor(&[out_ch], fan_in, rng),
                ParamKind::Weight,
            )
        });
        Conv { weight, bias, geom }
    }

    pub fn forward<'t, T: Float>(&self, x: Var<'t, T>) -> Var<'t, T> {
        let tape = x.tape();
        let y = x.conv(tape.param(self.weight), self.geom);
        match self.bias {
            Some(b) => y.add_channel_bias(tape.param(b)),
            None => y,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub geom: ConvGeom,
}

impl ConvTranspose {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float, R: Rng + ?Sized>(
        ps: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        geom: ConvGeom,
        bias: bool,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let shape = [in_ch, out_ch, geom.kernel[0], geom.kernel[1], geom.kernel[2]];
        let fan_in = out_ch * geom.kernel_volume();
        let weight = ps.add(format!("{name}.weight"), init.tensor(&shape, fan_in, rng), ParamKind::Weight);
        let bias = bias.then(|| {
            ps.add(
                format!("{name}.bias"),
                Init::FanIn.tensor(&[out_ch], fan_in, rng),
                ParamKind::Weight,
            )
        });
        ConvTranspose { weight, bias, geom }
    }

    pub fn forward<'t, T: Float>(&self, x: Var<'t, T>) -> Var<'t, T> {
        let tape = x.tape();
        let y = x.conv_transpose(tape.param(self.weight), self.geom);
        match self.bias {
            Some(b) => y.add_channel_bias(tape.param(b)),
            None => y,
        }
    }
}

/// Per-channel batch normalization over `[N, C, ...]`.
///
/// Training tapes normalize with batch statistics and queue running-average
/// updates on the tape; evaluation tapes use the running averages.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new<T: Float>(ps: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: ps.add(format!("{name}.gamma"), Tensor::ones(&[channels]), ParamKind::Weight),
            beta: ps.add(format!("{name}.beta"), Tensor::zeros(&[channels]), ParamKind::Weight),
            running_mean: ps.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), ParamKind::Buffer),
            running_var: ps.add(format!("{name}.running_var"), Tensor::ones(&[channels]), ParamKind::Buffer),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward<'t, T: Float>(&self, x: Var<'t, T>) -> Var<'t, T> {
        let tape = x.tape();
        let gamma = tape.param(self.gamma);
        let beta = tape.param(self.beta);
        let eps = T::from_f64(self.eps);
        if tape.is_training() {
            let (y, mean, var) = x.batch_norm(gamma, beta, None, eps);
            let m = T::from_f64(self.momentum);
            let keep = T::ONE - m;
            let old_mean = tape.param(self.running_mean).value();
            let old_var = tape.param(self.running_var).value();
            let new_mean = old_mean.zip_map(&mean, |o, b| keep * o + m * b);
            let new_var = old_var.zip_map(&var, |o, b| keep * o + m * b);
            tape.record_buffer_update(self.running_mean, new_mean);
            tape.record_buffer_update(self.running_var, new_var);
            y
        } else {
            let stats = (
                tape.param(self.running_mean).value(),
                tape.param(self.running_var).value(),
            );
            x.batch_norm(gamma, beta, Some(stats), eps).0
        }
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new<T: Float, R: Rng + ?Sized>(
        ps: &mut ParamStore<T>,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let table = ps.add(
            format!("{name}.table"),
            Init::Normal(1.0).tensor(&[vocab, dim], 1, rng),
            ParamKind::Weight,
        );
        Embedding { table, dim }
    }

    pub fn forward<'t, T: Float>(&self, tape: &'t crate::tape::Tape<T>, ids: &[usize]) -> Var<'t, T> {
        tape.param(self.table).index_rows(ids)
    }
}

impl<'t, T: Float> Var<'t, T> {
    /// Batch normalization of `[N, C, ...]` with affine `gamma`, `beta` of shape `[C]`.
    ///
    /// With `running = None` batch statistics are used; the returned tensors are
    /// the batch mean and unbiased variance (for running averages).
    pub fn batch_norm(
        self,
        gamma: Var<'t, T>,
        beta: Var<'t, T>,
        running: Option<(Arc<Tensor<T>>, Arc<Tensor<T>>)>,
        eps: T,
    ) -> (Var<'t, T>, Tensor<T>, Tensor<T>) {
        let x = self.value();
        let shape = x.shape().to_vec();
        let (n, c) = (shape[0], shape[1]);
        let s = numel(&shape[2..]);
        let m = n * s;
        let gv = gamma.value();
        let bv = beta.value();
        assert_eq!(gv.shape(), &[c], "batch_norm gamma shape");
        let (mean, var_biased, batch_var) = match &running {
            None => {
                let mut mean = vec![T::ZERO; c];
                let mut var = vec![T::ZERO; c];
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * s;
                        mean[ch] += x.data()[base..base + s].iter().copied().sum::<T>();
                    }
                }
                let mt = T::from_f64(m as f64);
                for v in &mut mean {
                    *v /= mt;
                }
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * s;
                        let mu = mean[ch];
                        var[ch] += x.data()[base..base + s].iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
                    }
                }
                let biased: Vec<T> = var.iter().map(|&v| v / mt).collect();
                let denom = T::from_f64((m.max(2) - 1) as f64);
                let unbiased: Vec<T> = var.iter().map(|&v| v / denom).collect();
                (mean, biased, unbiased)
            }
            Some((rm, rv)) => (rm.data().to_vec(), rv.data().to_vec(), rv.data().to_vec()),
        };
        let invstd: Vec<T> = var_biased.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(&shape);
        let mut y = Tensor::zeros(&shape);
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * s;
                let (mu, is, g, b) = (mean[ch], invstd[ch], gv.data()[ch], bv.data()[ch]);
                for k in base..base + s {
                    let h = (x.data()[k] - mu) * is;
                    xhat.data_mut()[k] = h;
                    y.data_mut()[k] = g * h + b;
                }
            }
        }
        let training = running.is_none();
        let out = self.tape.push_op(y, &[self, gamma, beta], move || {
            Box::new(move |g, mask| {
                let mut sum_g = vec![T::ZERO; c];
                let mut sum_gx = vec![T::ZERO; c];
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * s;
                        for k in base..base + s {
                            sum_g[ch] += g.data()[k];
                            sum_gx[ch] += g.data()[k] * xhat.data()[k];
                        }
                    }
                }
                let gx = mask[0].then(|| {
                    let mut gx = Tensor::zeros(&shape);
                    let mt = T::from_f64(m as f64);
                    for i in 0..n {
                        for ch in 0..c {
                            let base = (i * c + ch) * s;
                            let scale = gv.data()[ch] * invstd[ch];
                            for k in base..base + s {
                                gx.data_mut()[k] = if training {
                                    scale / mt * (mt * g.data()[k] - sum_g[ch] - xhat.data()[k] * sum_gx[ch])
                                } else {
                                    scale * g.data()[k]
                                };
                            }
                        }
                    }
                    gx
                });
                let ggamma = mask[1].then(|| Tensor::from_vec(&[c], sum_gx.clone()));
                let gbeta = mask[2].then(|| Tensor::from_vec(&[c], sum_g.clone()));
                vec![gx, ggamma, gbeta]
            })
        });
        (
            out,
            Tensor::from_vec(&[c], mean),
            Tensor::from_vec(&[c], batch_var),
        )
    }
}
