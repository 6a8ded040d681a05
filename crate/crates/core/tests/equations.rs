//! Closed-form and element-wise oracles for the objective terms, the scene
//! composition and the text-generated filters.

mod common;

use common::{rng, tiny_config};
use rand_distr::{Distribution, StandardNormal};
use t2v_autograd::{ParamStore, Tape, Tensor};
use t2v_core::adversarial::{critic_loss, generator_adv_loss};
use t2v_core::gist_cvae::{kl_to_standard_normal, sample_latent, unit_gaussian_nll};
use t2v_core::text2filter::{apply_filter, Text2Filter};
use t2v_core::training::{reconstruction_loss, total_loss};
use t2v_core::video_generator::compose;
use t2v_core::ObjectiveWeights;

fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, data)
}

fn kl(mu: &[f64], log_var: &[f64]) -> f64 {
    let tape = Tape::<f64>::empty();
    let d = mu.len();
    kl_to_standard_normal(tape.constant(t(&[1, d], mu.to_vec())), tape.constant(t(&[1, d], log_var.to_vec()))).item()
}

#[test]
fn kl_examples() {
    assert_eq!(kl(&[0.0; 8], &[0.0; 8]), 0.0);
    assert!((kl(&[1.0; 8], &[0.0; 8]) - 4.0).abs() < 1e-12);
}

#[test]
fn kl_closed_form_matches_monte_carlo() {
    let n = 100_000;
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let mu: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut r)).collect();
        let lv: Vec<f64> = (0..4).map(|_| 0.8 * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
        let closed = kl(&mu, &lv);
        // log q(z) - log p(z) with z drawn from q; the 2*pi terms cancel.
        let mut sum = 0.0f64;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let mut v = 0.0;
            for d in 0..4 {
                let e: f64 = StandardNormal.sample(&mut r);
                let z = mu[d] + (0.5 * lv[d]).exp() * e;
                v += -0.5 * lv[d] - 0.5 * e * e + 0.5 * z * z;
            }
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((closed - mean).abs() <= 3.0 * se, "seed {seed}: closed {closed} mc {mean} se {se}");
    }
}

#[test]
fn reparameterized_samples_have_the_requested_moments() {
    let n = 100_000;
    let (mu, lv) = (0.7, -0.6f64);
    let tape = Tape::<f64>::empty();
    let noise = Tensor::randn(&[n, 1], &mut rng(5));
    let z = sample_latent(
        tape.constant(Tensor::full(&[n, 1], mu)),
        tape.constant(Tensor::full(&[n, 1], lv)),
        tape.constant(noise),
    )
    .to_tensor();
    let mean = z.mean();
    let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = (0.5 * lv).exp();
    assert!((mean - mu).abs() <= 3.0 * sd / (n as f64).sqrt());
    // Standard error of the sample standard deviation is about sd / sqrt(2n).
    assert!((var.sqrt() - sd).abs() <= 3.0 * sd / (2.0 * n as f64).sqrt());

    let tape = Tape::<f64>::empty();
    let m = tape.constant(t(&[1, 3], vec![0.5, -1.0, 2.0]));
    let zero = sample_latent(m, tape.constant(Tensor::zeros(&[1, 3])), tape.constant(Tensor::zeros(&[1, 3])));
    assert_eq!(zero.to_tensor().data(), &[0.5, -1.0, 2.0]);
    let e1 = sample_latent(m, tape.constant(Tensor::zeros(&[1, 3])), tape.constant(t(&[1, 3], vec![1.0, 0.0, 0.0])));
    assert_eq!(e1.to_tensor().data(), &[1.5, -1.0, 2.0]);
}

#[test]
fn perfect_reconstruction_leaves_only_the_normalizer() {
    let tape = Tape::<f64>::empty();
    let x = Tensor::rand_uniform(&[2, 3, 4, 4], -1.0, 1.0, &mut rng(1));
    let nll = unit_gaussian_nll(tape.constant(x.clone()), tape.constant(x)).item();
    let constant = 48.0 * 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((nll - constant).abs() < 1e-9);
}

fn compose_oracle(a: &Tensor<f64>, m: &Tensor<f64>, s: &Tensor<f64>) -> Vec<f64> {
    let [n, c, tt, h, w] = [m.shape()[0], m.shape()[1], m.shape()[2], m.shape()[3], m.shape()[4]];
    let mut out = Vec::new();
    for i in 0..n {
        for ch in 0..c {
            for f in 0..tt {
                for y in 0..h {
                    for x in 0..w {
                        let al = a.data()[(((i * tt) + f) * h + y) * w + x];
                        let mo = m.data()[((((i * c) + ch) * tt + f) * h + y) * w + x];
                        let st = s.data()[(((i * c) + ch) * h + y) * w + x];
                        out.push(al * mo + (1.0 - al) * st);
                    }
                }
            }
        }
    }
    out
}

#[test]
fn composition_matches_elementwise_oracle() {
    for (seed, shape) in [(0u64, [1usize, 1, 2, 2, 2]), (1, [2, 3, 2, 2, 2]), (2, [1, 3, 4, 5, 3])] {
        let [n, c, tt, h, w] = shape;
        let mut r = rng(seed);
        let a = Tensor::rand_uniform(&[n, 1, tt, h, w], 0.0, 1.0, &mut r);
        let m = Tensor::rand_uniform(&shape, -1.0, 1.0, &mut r);
        let s = Tensor::rand_uniform(&[n, c, h, w], -1.0, 1.0, &mut r);
        let tape = Tape::<f64>::empty();
        let got = compose(tape.constant(a.clone()), tape.constant(m.clone()), tape.constant(s.clone())).to_tensor();
        for (g, e) in got.data().iter().zip(compose_oracle(&a, &m, &s)) {
            assert!((g - e).abs() <= 1e-6);
        }

        let ones = compose(tape.constant(Tensor::ones(&[n, 1, tt, h, w])), tape.constant(m.clone()), tape.constant(s.clone()));
        assert_eq!(ones.to_tensor().data(), m.data());
        let zeros = compose(tape.constant(Tensor::zeros(&[n, 1, tt, h, w])), tape.constant(m), tape.constant(s.clone()));
        let z = zeros.to_tensor();
        for i in 0..n * c {
            for f in 0..tt {
                let frame = &z.data()[(i * tt + f) * h * w..(i * tt + f + 1) * h * w];
                assert_eq!(frame, &s.data()[i * h * w..(i + 1) * h * w]);
            }
        }
    }
}

fn conv_oracle(g: &Tensor<f64>, k: &Tensor<f64>) -> Vec<f64> {
    let (n, c, h, w) = (g.shape()[0], g.shape()[1], g.shape()[2], g.shape()[3]);
    let (f, ky, kz) = (k.shape()[1], k.shape()[3], k.shape()[4]);
    let mut out = vec![0.0; n * f * h * w];
    for i in 0..n {
        for o in 0..f {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for ch in 0..c {
                        for dy in 0..ky {
                            for dx in 0..kz {
                                let yy = y as isize + dy as isize - (ky / 2) as isize;
                                let xx = x as isize + dx as isize - (kz / 2) as isize;
                                if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                                    continue;
                                }
                                let gv = g.data()[((i * c + ch) * h + yy as usize) * w + xx as usize];
                                let kv = k.data()[((((i * f + o) * c + ch) * ky + dy) * kz) + dx];
                                acc += gv * kv;
                            }
                        }
                    }
                    out[((i * f + o) * h + y) * w + x] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn filter_application_matches_direct_convolution() {
    let cases = [(1usize, 3usize, 8usize, 3usize, 3usize, 3usize), (2, 3, 16, 4, 3, 3), (1, 2, 5, 2, 1, 5), (3, 1, 12, 5, 5, 3)];
    for (seed, &(n, c, s, f, ky, kz)) in cases.iter().enumerate() {
        let mut r = rng(seed as u64);
        let g = Tensor::rand_uniform(&[n, c, s, s], -1.0, 1.0, &mut r);
        let k = Tensor::randn(&[n, f, c, ky, kz], &mut r);
        let tape = Tape::<f64>::empty();
        let got = apply_filter(tape.constant(g.clone()), tape.constant(k.clone())).unwrap().to_tensor();
        assert_eq!(got.shape(), &[n, f, s, s]);
        for (a, b) in got.data().iter().zip(conv_oracle(&g, &k)) {
            assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
        }
    }
}

#[test]
fn delta_and_zero_kernels() {
    let g = Tensor::rand_uniform(&[1, 3, 8, 8], -1.0, 1.0, &mut rng(3));
    let mut k = Tensor::<f64>::zeros(&[1, 1, 3, 3, 3]);
    for c in 0..3 {
        k.data_mut()[c * 9 + 4] = 1.0;
    }
    let tape = Tape::<f64>::empty();
    let out = apply_filter(tape.constant(g.clone()), tape.constant(k)).unwrap().to_tensor();
    for p in 0..64 {
        let expect = g.data()[p] + g.data()[64 + p] + g.data()[128 + p];
        assert!((out.data()[p] - expect).abs() < 1e-12);
    }
    let zero = apply_filter(tape.constant(g.clone()), tape.constant(Tensor::zeros(&[1, 4, 3, 3, 3]))).unwrap();
    assert!(zero.to_tensor().data().iter().all(|v| *v == 0.0));
    assert!(apply_filter(tape.constant(g), tape.constant(Tensor::zeros(&[1, 4, 2, 3, 3]))).is_err());
}

#[test]
fn generated_kernels_are_a_contraction_of_the_text() {
    let cfg = tiny_config();
    let mut ps = ParamStore::<f64>::new();
    let t2f = Text2Filter::new(&mut ps, "text2filter", "text2filter.encoder", &cfg, &mut rng(4));
    let w = ps.get(t2f.filter_gen.weight).clone();
    let b_id = t2f.filter_gen.bias.unwrap();
    ps.set(b_id, Tensor::rand_uniform(&[w.shape()[0]], -0.5, 0.5, &mut rng(5)));
    let b = ps.get(b_id).clone();
    let text = Tensor::randn(&[2, cfg.text_dim], &mut rng(6));
    let tape = Tape::inference(&ps);
    let k = t2f.make_filter(tape.constant(text.clone())).unwrap().to_tensor();
    assert_eq!(k.shape(), &[2, cfg.filter_channels, cfg.channels, cfg.filter_ky, cfg.filter_kz]);
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    for n in 0..2 {
        for j in 0..out {
            let mut acc = b.data()[j];
            for i in 0..inp {
                acc += w.data()[j * inp + i] * text.data()[n * inp + i];
            }
            assert!((k.data()[n * out + j] - acc).abs() < 1e-12);
        }
    }

    let mut zero_bias = ParamStore::<f64>::new();
    let t2f = Text2Filter::new(&mut zero_bias, "text2filter", "text2filter.encoder", &cfg, &mut rng(4));
    let tape = Tape::inference(&zero_bias);
    let k = t2f.make_filter(tape.constant(Tensor::zeros(&[1, cfg.text_dim]))).unwrap();
    assert!(k.to_tensor().data().iter().all(|v| *v == 0.0));
    assert!(t2f.make_filter(tape.constant(Tensor::zeros(&[1, cfg.text_dim + 1]))).is_err());
}

#[test]
fn objective_weights_and_linearity() {
    let w = ObjectiveWeights::default();
    assert_eq!((w.gamma1, w.gamma2, w.gamma3), (1.0, 1.0, 0.1));
    assert!((total_loss(1.0, 1.0, 1.0, &w).unwrap() - 2.1).abs() < 1e-15);
    assert_eq!(total_loss(0.0, 0.0, 0.0, &w).unwrap(), 0.0);
    assert_eq!(total_loss(3.0, -2.0, 5.0, &ObjectiveWeights::new(0.0, 0.0, 1.0).unwrap()).unwrap(), 5.0);
    assert!(total_loss(f64::NAN, 0.0, 0.0, &w).is_err());
    assert!(total_loss(0.0, f64::INFINITY, 0.0, &w).is_err());

    // Dyadic weights and arguments keep every product exact.
    let d = ObjectiveWeights::new(0.5, 0.25, 0.125).unwrap();
    let base = [1.5, -2.25, 4.0];
    let f = |v: [f64; 3]| total_loss(v[0], v[1], v[2], &d).unwrap();
    let gammas = [0.5, 0.25, 0.125];
    for k in 0..3 {
        for delta in [0.5, -3.0, 8.25] {
            let mut moved = base;
            moved[k] += delta;
            assert_eq!(f(moved) - f(base), gammas[k] * delta);
        }
    }
}

#[test]
fn reconstruction_is_mean_absolute_difference() {
    let tape = Tape::<f64>::empty();
    let zeros = tape.constant(Tensor::zeros(&[1, 3, 4, 4]));
    let ones = tape.constant(Tensor::ones(&[1, 3, 32, 4, 4]));
    assert_eq!(reconstruction_loss(zeros, ones).unwrap().item(), 1.0);

    let g = Tensor::rand_uniform(&[1, 3, 4, 4], -1.0, 1.0, &mut rng(1));
    let mut rep = Vec::new();
    for c in 0..3 {
        for _ in 0..32 {
            rep.extend_from_slice(&g.data()[c * 16..(c + 1) * 16]);
        }
    }
    let same = reconstruction_loss(tape.constant(g), tape.constant(t(&[1, 3, 32, 4, 4], rep))).unwrap();
    assert_eq!(same.item(), 0.0);

    // T=2, C=1, H=W=2.
    let mut r = rng(2);
    let g = Tensor::<f64>::rand_uniform(&[1, 1, 2, 2], -1.0, 1.0, &mut r);
    let v = Tensor::<f64>::rand_uniform(&[1, 1, 2, 2, 2], -1.0, 1.0, &mut r);
    let mut sum = 0.0f64;
    for f in 0..2 {
        for p in 0..4 {
            sum += (g.data()[p] - v.data()[f * 4 + p]).abs();
        }
    }
    let got = reconstruction_loss(tape.constant(g), tape.constant(v)).unwrap().item();
    assert!((got - sum / 8.0).abs() < 1e-7);
}

#[test]
fn adversarial_losses_are_mean_differences() {
    let tape = Tape::<f64>::empty();
    let v = |x: Vec<f64>| tape.constant(t(&[x.len()], x));
    assert_eq!(critic_loss(v(vec![1.0, 1.0]), v(vec![0.0, 0.0])).item(), -1.0);
    assert_eq!(critic_loss(v(vec![0.3, -0.2]), v(vec![0.3, -0.2])).item(), 0.0);
    let mut r = rng(8);
    let real: Vec<f64> = (0..7).map(|_| StandardNormal.sample(&mut r)).collect();
    let fake: Vec<f64> = (0..5).map(|_| StandardNormal.sample(&mut r)).collect();
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let got = critic_loss(v(real.clone()), v(fake.clone())).item();
    assert!((got - (mean(&fake) - mean(&real))).abs() < 1e-7);
    assert!((generator_adv_loss(v(fake.clone())).item() + mean(&fake)).abs() < 1e-7);
}
