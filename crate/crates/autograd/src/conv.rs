//! Strided, zero-padded convolutions over up to three spatial axes.
//!
//! Everything is lowered to the 3-D case (2-D inputs get a unit depth axis)
//! and computed as im2col followed by a matrix product. All kernels follow the
//! cross-correlation convention: no kernel flip.

use crate::float::{DisplayShape, Float};
use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeom {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        ConvGeom {
            kernel,
            stride,
            padding,
        }
    }

    /// Square 2-D geometry embedded in 3-D (unit depth kernel).
    pub fn planar(kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeom {
            kernel: [1, kernel, kernel],
            stride: [1, stride, stride],
            padding: [0, padding, padding],
        }
    }

    pub fn cubic(kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeom {
            kernel: [kernel; 3],
            stride: [stride; 3],
            padding: [padding; 3],
        }
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Output extent of a forward convolution.
    pub fn out_dims(&self, input: [usize; 3]) -> [usize; 3] {
        let mut out = [0; 3];
        for i in 0..3 {
            let padded = input[i] + 2 * self.padding[i];
            assert!(
                padded >= self.kernel[i],
                "kernel {:?} larger than padded input {:?}",
                self.kernel,
                input
            );
            out[i] = (padded - self.kernel[i]) / self.stride[i] + 1;
        }
        out
    }

    /// Output extent of a transposed convolution.
    pub fn transposed_out_dims(&self, input: [usize; 3]) -> [usize; 3] {
        let mut out = [0; 3];
        for i in 0..3 {
            let full = (input[i] - 1) * self.stride[i] + self.kernel[i];
            assert!(full >= 2 * self.padding[i], "padding too large for transposed conv");
            out[i] = full - 2 * self.padding[i];
        }
        out
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1] && self.padding == [0, 0, 0]
    }
}

fn vol(d: [usize; 3]) -> usize {
    d[0] * d[1] * d[2]
}

/// Unfold one sample `[c, in]` into columns `[c * kvol, vol(out)]`.
fn im2col<T: Float>(x: &[T], c: usize, ind: [usize; 3], g: &ConvGeom, outd: [usize; 3], cols: &mut [T]) {
    let [kd, kh, kw] = g.kernel;
    let l = vol(outd);
    let in_vol = vol(ind);
    let mut row = 0;
    for ci in 0..c {
        let xc = &x[ci * in_vol..(ci + 1) * in_vol];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut cols[row * l..(row + 1) * l];
                    let mut p = 0;
                    for od in 0..outd[0] {
                        let id = (od * g.stride[0] + a) as isize - g.padding[0] as isize;
                        if id < 0 || id >= ind[0] as isize {
                            dst[p..p + outd[1] * outd[2]].fill(T::ZERO);
                            p += outd[1] * outd[2];
                            continue;
                        }
                        for oh in 0..outd[1] {
                            let ih = (oh * g.stride[1] + b) as isize - g.padding[1] as isize;
                            if ih < 0 || ih >= ind[1] as isize {
                                dst[p..p + outd[2]].fill(T::ZERO);
                                p += outd[2];
                                continue;
                            }
                            let base = (id as usize * ind[1] + ih as usize) * ind[2];
                            for ow in 0..outd[2] {
                                let iw = (ow * g.stride[2] + e) as isize - g.padding[2] as isize;
                                dst[p] = if iw >= 0 && iw < ind[2] as isize {
                                    xc[base + iw as usize]
                                } else {
                                    T::ZERO
                                };
                                p += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into `[c, in]`.
fn col2im<T: Float>(cols: &[T], c: usize, ind: [usize; 3], g: &ConvGeom, outd: [usize; 3], x: &mut [T]) {
    let [kd, kh, kw] = g.kernel;
    let l = vol(outd);
    let in_vol = vol(ind);
    let mut row = 0;
    for ci in 0..c {
        let xc = &mut x[ci * in_vol..(ci + 1) * in_vol];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &cols[row * l..(row + 1) * l];
                    let mut p = 0;
                    for od in 0..outd[0] {
                        let id = (od * g.stride[0] + a) as isize - g.padding[0] as isize;
                        if id < 0 || id >= ind[0] as isize {
                            p += outd[1] * outd[2];
                            continue;
                        }
                        for oh in 0..outd[1] {
                            let ih = (oh * g.stride[1] + b) as isize - g.padding[1] as isize;
                            if ih < 0 || ih >= ind[1] as isize {
                                p += outd[2];
                                continue;
                            }
                            let base = (id as usize * ind[1] + ih as usize) * ind[2];
                            for ow in 0..outd[2] {
                                let iw = (ow * g.stride[2] + e) as isize - g.padding[2] as isize;
                                if iw >= 0 && iw < ind[2] as isize {
                                    xc[base + iw as usize] += src[p];
                                }
                                p += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// `c (m x n) = beta * c + op(a) * op(b)` on row-major slices.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Float>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool, beta: T, c: &mut [T]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::ONE,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn spatial(shape: &[usize]) -> [usize; 3] {
    [shape[2], shape[3], shape[4]]
}

/// Columns of one sample, borrowing the input directly for pointwise kernels.
fn columns<'a, T: Float>(
    x: &'a [T],
    c: usize,
    ind: [usize; 3],
    g: &ConvGeom,
    outd: [usize; 3],
    buf: &'a mut Vec<T>,
) -> &'a [T] {
    if g.is_pointwise() {
        x
    } else {
        buf.resize(c * g.kernel_volume() * vol(outd), T::ZERO);
        im2col(x, c, ind, g, outd, buf);
        buf
    }
}

/// Forward correlation. `w` is `[F, C, k...]` or, when `per_sample`, `[N, F, C, k...]`.
fn conv_forward<T: Float>(x: &Tensor<T>, w: &Tensor<T>, per_sample: bool, g: &ConvGeom) -> Tensor<T> {
    let xs = x.shape();
    let (n, c) = (xs[0], xs[1]);
    let ind = spatial(xs);
    let ws = if per_sample { &w.shape()[1..] } else { w.shape() };
    let f = ws[0];
    let ck = c * g.kernel_volume();
    assert_eq!(ws[1], c, "conv channel mismatch: input {} vs weight {}", xs.display(), w.shape().display());
    let outd = g.out_dims(ind);
    let l = vol(outd);
    let mut y = Tensor::zeros(&[n, f, outd[0], outd[1], outd[2]]);
    let mut buf = Vec::new();
    let in_stride = c * vol(ind);
    for s in 0..n {
        let cols = columns(&x.data()[s * in_stride..(s + 1) * in_stride], c, ind, g, outd, &mut buf);
        let wn = if per_sample {
            &w.data()[s * f * ck..(s + 1) * f * ck]
        } else {
            w.data()
        };
        gemm(f, ck, l, wn, false, cols, false, T::ZERO, &mut y.data_mut()[s * f * l..(s + 1) * f * l]);
    }
    y
}

/// Gradient of [`conv_forward`] with respect to its input.
fn conv_backward_data<T: Float>(
    gy: &Tensor<T>,
    w: &Tensor<T>,
    per_sample: bool,
    g: &ConvGeom,
    in_shape: &[usize],
) -> Tensor<T> {
    let (n, c) = (in_shape[0], in_shape[1]);
    let ind = spatial(in_shape);
    let outd = spatial(gy.shape());
    let f = gy.shape()[1];
    let ck = c * g.kernel_volume();
    let l = vol(outd);
    let mut gx = Tensor::zeros(in_shape);
    let in_stride = c * vol(ind);
    let mut gcols = vec![T::ZERO; ck * l];
    for s in 0..n {
        let wn = if per_sample {
            &w.data()[s * f * ck..(s + 1) * f * ck]
        } else {
            w.data()
        };
        let gys = &gy.data()[s * f * l..(s + 1) * f * l];
        let dst = &mut gx.data_mut()[s * in_stride..(s + 1) * in_stride];
        if g.is_pointwise() {
            gemm(ck, f, l, wn, true, gys, false, T::ZERO, dst);
        } else {
            gemm(ck, f, l, wn, true, gys, false, T::ZERO, &mut gcols);
            col2im(&gcols, c, ind, g, outd, dst);
        }
    }
    gx
}

/// Gradient of [`conv_forward`] with respect to its weight.
fn conv_backward_weight<T: Float>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    per_sample: bool,
    g: &ConvGeom,
    w_shape: &[usize],
) -> Tensor<T> {
    let xs = x.shape();
    let (n, c) = (xs[0], xs[1]);
    let ind = spatial(xs);
    let outd = spatial(gy.shape());
    let f = gy.shape()[1];
    let ck = c * g.kernel_volume();
    let l = vol(outd);
    let mut gw = Tensor::zeros(w_shape);
    let mut buf = Vec::new();
    let in_stride = c * vol(ind);
    for s in 0..n {
        let cols = columns(&x.data()[s * in_stride..(s + 1) * in_stride], c, ind, g, outd, &mut buf);
        let gys = &gy.data()[s * f * l..(s + 1) * f * l];
        if per_sample {
            gemm(f, l, ck, gys, false, cols, true, T::ZERO, &mut gw.data_mut()[s * f * ck..(s + 1) * f * ck]);
        } else {
            gemm(f, l, ck, gys, false, cols, true, T::ONE, gw.data_mut());
        }
    }
    gw
}

fn as_5d(shape: &[usize]) -> Vec<usize> {
    match shape.len() {
        5 => shape.to_vec(),
        4 => vec![shape[0], shape[1], 1, shape[2], shape[3]],
        _ => panic!("convolution input must be 4-D or 5-D, got {}", shape.display()),
    }
}

fn weight_as_5d(shape: &[usize], per_sample: bool) -> Vec<usize> {
    let (lead, rest) = if per_sample { shape.split_at(1) } else { shape.split_at(0) };
    let mut out = lead.to_vec();
    match rest.len() {
        5 => out.extend_from_slice(rest),
        4 => out.extend_from_slice(&[rest[0], rest[1], 1, rest[2], rest[3]]),
        _ => panic!("convolution weight must be 4-D or 5-D, got {}", shape.display()),
    }
    out
}

impl<'t, T: Float> Var<'t, T> {
    fn conv_impl(self, w: Var<'t, T>, per_sample: bool, g: ConvGeom) -> Var<'t, T> {
        let in_shape = self.shape();
        let planar = in_shape.len() == 4;
        let x5 = self.reshape(&as_5d(&in_shape));
        let w_shape = w.shape();
        let w5 = w.reshape(&weight_as_5d(&w_shape, per_sample));
        if per_sample {
            assert_eq!(w_shape[0], in_shape[0], "per-sample weights need one kernel bank per sample");
        }
        let xv = x5.value();
        let wv = w5.value();
        let y = conv_forward(&xv, &wv, per_sample, &g);
        let x_shape = xv.shape().to_vec();
        let w5_shape = wv.shape().to_vec();
        let out = self.tape.push_op(y, &[x5, w5], move || {
            Box::new(move |gy, mask| {
                let gx = mask[0].then(|| conv_backward_data(gy, &wv, per_sample, &g, &x_shape));
                let gw = mask[1].then(|| conv_backward_weight(&xv, gy, per_sample, &g, &w5_shape));
                vec![gx, gw]
            })
        });
        if planar {
            let s = out.shape();
            out.reshape(&[s[0], s[1], s[3], s[4]])
        } else {
            out
        }
    }

    /// Correlate `[N, C, D, H, W]` (or `[N, C, H, W]`) with `[F, C, k...]`.
    pub fn conv(self, w: Var<'t, T>, g: ConvGeom) -> Var<'t, T> {
        self.conv_impl(w, false, g)
    }

    /// Like [`Var::conv`] but each sample has its own kernel bank `[N, F, C, k...]`.
    pub fn conv_per_sample(self, w: Var<'t, T>, g: ConvGeom) -> Var<'t, T> {
        self.conv_impl(w, true, g)
    }

    /// Transposed convolution; `w` is `[C_in, C_out, k...]`.
    pub fn conv_transpose(self, w: Var<'t, T>, g: ConvGeom) -> Var<'t, T> {
        let in_shape = self.shape();
        let planar = in_shape.len() == 4;
        let x5 = self.reshape(&as_5d(&in_shape));
        let w5 = w.reshape(&weight_as_5d(&w.shape(), false));
        let xv = x5.value();
        let wv = w5.value();
        let (n, cin) = (xv.shape()[0], xv.shape()[1]);
        assert_eq!(wv.shape()[0], cin, "conv_transpose channel mismatch");
        let cout = wv.shape()[1];
        let outd = g.transposed_out_dims(spatial(xv.shape()));
        let out_shape = [n, cout, outd[0], outd[1], outd[2]];
        let y = conv_backward_data(&xv, &wv, false, &g, &out_shape);
        let w5_shape = wv.shape().to_vec();
        let out = self.tape.push_op(y, &[x5, w5], move || {
            Box::new(move |gy, mask| {
                let gx = mask[0].then(|| conv_forward(gy, &wv, false, &g));
                let gw = mask[1].then(|| conv_backward_weight(gy, &xv, false, &g, &w5_shape));
                vec![gx, gw]
            })
        });
        if planar {
            let s = out.shape();
            out.reshape(&[s[0], s[1], s[3], s[4]])
        } else {
            out
        }
    }

    /// Adds a per-channel bias `[C]` to `[N, C, ...]`.
    pub fn add_channel_bias(self, bias: Var<'t, T>) -> Var<'t, T> {
        let shape = self.shape();
        let mut bshape = vec![1; shape.len()];
        bshape[1] = shape[1];
        self.add_bcast(bias.reshape(&bshape))
    }
}
