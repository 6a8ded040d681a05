//! Differentiable tensor operations on [`Var`].

use std::sync::Arc;

use crate::float::{DisplayShape, Float};
use crate::tape::Var;
use crate::tensor::{numel, strides, Tensor};

/// Broadcast `t` (same rank, dims equal or 1) to `shape`.
pub fn expand_tensor<T: Float>(t: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let src = t.shape();
    assert_eq!(src.len(), shape.len(), "expand {} to {}: rank mismatch", src.display(), shape.display());
    for (&s, &d) in src.iter().zip(shape) {
        assert!(s == d || s == 1, "cannot expand {} to {}", src.display(), shape.display());
    }
    if src == shape {
        return t.clone();
    }
    let st = strides(src);
    let eff: Vec<usize> = src
        .iter()
        .zip(&st)
        .map(|(&s, &k)| if s == 1 { 0 } else { k })
        .collect();
    let total = numel(shape);
    let mut out = Vec::with_capacity(total);
    let data = t.data();
    let mut idx = vec![0usize; shape.len()];
    let mut off = 0usize;
    for _ in 0..total {
        out.push(data[off]);
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            off += eff[d];
            if idx[d] < shape[d] {
                break;
            }
            off -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    Tensor::from_vec(shape, out)
}

/// Sum `t` down to `shape` (inverse of [`expand_tensor`]).
pub fn sum_to_tensor<T: Float>(t: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let src = t.shape();
    assert_eq!(src.len(), shape.len(), "sum_to rank mismatch");
    if src == shape {
        return t.clone();
    }
    let st = strides(shape);
    let eff: Vec<usize> = shape
        .iter()
        .zip(&st)
        .zip(src)
        .map(|((&s, &k), &full)| {
            assert!(s == full || s == 1, "cannot sum {} to {}", src.display(), shape.display());
            if s == 1 {
                0
            } else {
                k
            }
        })
        .collect();
    let mut out = vec![T::ZERO; numel(shape)];
    let mut idx = vec![0usize; src.len()];
    let mut off = 0usize;
    for &v in t.data() {
        out[off] += v;
        for d in (0..src.len()).rev() {
            idx[d] += 1;
            off += eff[d];
            if idx[d] < src[d] {
                break;
            }
            off -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    Tensor::from_vec(shape, out)
}

/// `op(a) * op(b)` for 2-D tensors, where `op` optionally transposes.
pub fn matmul_tensor<T: Float>(a: &Tensor<T>, ta: bool, b: &Tensor<T>, tb: bool) -> Tensor<T> {
    assert_eq!(a.ndim(), 2, "matmul lhs must be 2-D, got {}", a.shape().display());
    assert_eq!(b.ndim(), 2, "matmul rhs must be 2-D, got {}", b.shape().display());
    let (ar, ac) = (a.shape()[0], a.shape()[1]);
    let (br, bc) = (b.shape()[0], b.shape()[1]);
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "matmul inner dims differ: {} vs {}", a.shape().display(), b.shape().display());
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    let mut out = Tensor::zeros(&[m, n]);
    if m > 0 && n > 0 && k > 0 {
        unsafe {
            T::gemm(
                m,
                k,
                n,
                T::ONE,
                a.data().as_ptr(),
                rsa,
                csa,
                b.data().as_ptr(),
                rsb,
                csb,
                T::ZERO,
                out.data_mut().as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    out
}

fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

impl<'t, T: Float> Var<'t, T> {
    fn unary(
        self,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<'t, T> {
        let x = self.value();
        let y = Arc::new(x.map(f));
        let yc = Arc::clone(&y);
        self.tape.push_op((*y).clone(), &[self], move || {
            Box::new(move |g, _| {
                let mut out = g.clone();
                for ((o, &xv), &yv) in out.data_mut().iter_mut().zip(x.data()).zip(yc.data()) {
                    *o *= df(xv, yv);
                }
                vec![Some(out)]
            })
        })
    }

    pub fn neg(self) -> Var<'t, T> {
        self.scale(-T::ONE)
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        self.unary(move |v| v * c, move |_, _| c)
    }

    pub fn add_scalar(self, c: T) -> Var<'t, T> {
        self.unary(move |v| v + c, |_, _| T::ONE)
    }

    pub fn tanh(self) -> Var<'t, T> {
        self.unary(|v| v.tanh(), |_, y| T::ONE - y * y)
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        self.unary(sigmoid, |_, y| y * (T::ONE - y))
    }

    pub fn relu(self) -> Var<'t, T> {
        self.unary(
            |v| v.max(T::ZERO),
            |x, _| if x > T::ZERO { T::ONE } else { T::ZERO },
        )
    }

    pub fn leaky_relu(self, slope: T) -> Var<'t, T> {
        self.unary(
            move |v| if v > T::ZERO { v } else { v * slope },
            move |x, _| if x > T::ZERO { T::ONE } else { slope },
        )
    }

    pub fn exp(self) -> Var<'t, T> {
        self.unary(|v| v.exp(), |_, y| y)
    }

    pub fn ln(self) -> Var<'t, T> {
        self.unary(|v| v.ln(), |x, _| T::ONE / x)
    }

    pub fn abs(self) -> Var<'t, T> {
        self.unary(
            |v| v.abs(),
            |x, _| {
                if x > T::ZERO {
                    T::ONE
                } else if x < T::ZERO {
                    -T::ONE
                } else {
                    T::ZERO
                }
            },
        )
    }

    pub fn square(self) -> Var<'t, T> {
        self.unary(|v| v * v, |x, _| x + x)
    }

    pub fn powf(self, p: T) -> Var<'t, T> {
        self.unary(move |v| v.powf(p), move |x, _| p * x.powf(p - T::ONE))
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(self, lo: T, hi: T) -> Var<'t, T> {
        self.unary(
            move |v| v.max(lo).min(hi),
            move |x, _| if x >= lo && x <= hi { T::ONE } else { T::ZERO },
        )
    }

    fn binary(
        self,
        other: Var<'t, T>,
        f: impl Fn(T, T) -> T,
        da: impl Fn(T, T, T) -> T + 'static,
        db: impl Fn(T, T, T) -> T + 'static,
    ) -> Var<'t, T> {
        let a = self.value();
        let b = other.value();
        assert_eq!(
            a.shape(),
            b.shape(),
            "elementwise shape mismatch {} vs {}",
            a.shape().display(),
            b.shape().display()
        );
        let y = a.zip_map(&b, f);
        self.tape.push_op(y, &[self, other], move || {
            Box::new(move |g, mask| {
                let ga = mask[0].then(|| {
                    let mut o = g.clone();
                    for ((o, &x), &yv) in o.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
                        *o = da(*o, x, yv);
                    }
                    o
                });
                let gb = mask[1].then(|| {
                    let mut o = g.clone();
                    for ((o, &x), &yv) in o.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
                        *o = db(*o, x, yv);
                    }
                    o
                });
                vec![ga, gb]
            })
        })
    }

    pub fn add(self, other: Var<'t, T>) -> Var<'t, T> {
        self.binary(other, |a, b| a + b, |g, _, _| g, |g, _, _| g)
    }

    pub fn sub(self, other: Var<'t, T>) -> Var<'t, T> {
        self.binary(other, |a, b| a - b, |g, _, _| g, |g, _, _| -g)
    }

    pub fn mul(self, other: Var<'t, T>) -> Var<'t, T> {
        self.binary(other, |a, b| a * b, |g, _, b| g * b, |g, a, _| g * a)
    }

    pub fn div(self, other: Var<'t, T>) -> Var<'t, T> {
        self.binary(
            other,
            |a, b| a / b,
            |g, _, b| g / b,
            |g, a, b| -g * a / (b * b),
        )
    }

    /// `self + other`, broadcasting `other` to `self`'s shape.
    pub fn add_bcast(self, other: Var<'t, T>) -> Var<'t, T> {
        let shape = self.shape();
        self.add(other.expand(&shape))
    }

    pub fn mul_bcast(self, other: Var<'t, T>) -> Var<'t, T> {
        let shape = self.shape();
        self.mul(other.expand(&shape))
    }

    /// Broadcast to `shape`; source dims must equal the target or be 1.
    pub fn expand(self, shape: &[usize]) -> Var<'t, T> {
        let x = self.value();
        if x.shape() == shape {
            return self;
        }
        let src_shape = x.shape().to_vec();
        let y = expand_tensor(&x, shape);
        self.tape.push_op(y, &[self], move || {
            Box::new(move |g, _| vec![Some(sum_to_tensor(g, &src_shape))])
        })
    }

    /// Sum over broadcast dimensions down to `shape` (same rank, dims 1 or equal).
    pub fn sum_to(self, shape: &[usize]) -> Var<'t, T> {
        let x = self.value();
        if x.shape() == shape {
            return self;
        }
        let src_shape = x.shape().to_vec();
        let y = sum_to_tensor(&x, shape);
        self.tape.push_op(y, &[self], move || {
            Box::new(move |g, _| vec![Some(expand_tensor(g, &src_shape))])
        })
    }

    pub fn sum(self) -> Var<'t, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.tape.push_op(Tensor::scalar(x.sum()), &[self], move || {
            Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.item()))])
        })
    }

    pub fn mean(self) -> Var<'t, T> {
        let n = T::from_f64(self.value().len() as f64);
        self.sum().scale(T::ONE / n)
    }

    /// Sum over `axis`, keeping it with size 1.
    pub fn sum_axis(self, axis: usize) -> Var<'t, T> {
        let mut shape = self.shape();
        shape[axis] = 1;
        self.sum_to(&shape)
    }

    pub fn mean_axis(self, axis: usize) -> Var<'t, T> {
        let n = self.shape()[axis];
        self.sum_axis(axis).scale(T::ONE / T::from_f64(n as f64))
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t, T> {
        let x = self.value();
        if x.shape() == shape {
            return self;
        }
        let src_shape = x.shape().to_vec();
        let y = (*x).clone().reshape(shape);
        self.tape.push_op(y, &[self], move || {
            Box::new(move |g, _| vec![Some(g.clone().reshape(&src_shape))])
        })
    }

    /// Collapse everything after the first axis.
    pub fn flatten(self) -> Var<'t, T> {
        let s = self.shape();
        let rest = numel(&s[1..]);
        self.reshape(&[s[0], rest])
    }

    pub fn permute(self, axes: &[usize]) -> Var<'t, T> {
        let x = self.value();
        let y = x.permute(axes);
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        self.tape.push_op(y, &[self], move || {
            Box::new(move |g, _| vec![Some(g.permute(&inverse))])
        })
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'t, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        assert!(start + len <= shape[axis], "narrow out of range");
        let outer = numel(&shape[..axis]);
        let inner = numel(&shape[axis + 1..]);
        let full = shape[axis];
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            out.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let y = Tensor::from_vec(&out_shape, out);
        self.tape.push_op(y, &[self], move || {
            Box::new(move |g, _| {
                let mut gx = Tensor::zeros(&shape);
                let gd = g.data();
                let dst = gx.data_mut();
                for o in 0..outer {
                    let base = o * full * inner + start * inner;
                    dst[base..base + len * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            })
        })
    }

    /// Rows of a 2-D table (embedding lookup). Output `[indices.len(), cols]`.
    pub fn index_rows(self, indices: &[usize]) -> Var<'t, T> {
        let x = self.value();
        assert_eq!(x.ndim(), 2, "index_rows expects a 2-D table");
        let (rows, cols) = (x.shape()[0], x.shape()[1]);
        let mut out = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            assert!(i < rows, "row index {i} out of range {rows}");
            out.extend_from_slice(&x.data()[i * cols..(i + 1) * cols]);
        }
        let idx = indices.to_vec();
        let y = Tensor::from_vec(&[indices.len(), cols], out);
        self.tape.push_op(y, &[self], move || {
            Box::new(move |g, _| {
                let mut gx = Tensor::zeros(&[rows, cols]);
                for (k, &i) in idx.iter().enumerate() {
                    let src = &g.data()[k * cols..(k + 1) * cols];
                    for (d, &s) in gx.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                        *d += s;
                    }
                }
                vec![Some(gx)]
            })
        })
    }

    /// `op(self) * op(other)` with optional transposes.
    pub fn matmul_t(self, ta: bool, other: Var<'t, T>, tb: bool) -> Var<'t, T> {
        let a = self.value();
        let b = other.value();
        let y = matmul_tensor(&a, ta, &b, tb);
        self.tape.push_op(y, &[self, other], move || {
            Box::new(move |g, mask| {
                let ga = mask[0].then(|| {
                    if ta {
                        matmul_tensor(&b, tb, g, true)
                    } else {
                        matmul_tensor(g, false, &b, !tb)
                    }
                });
                let gb = mask[1].then(|| {
                    if tb {
                        matmul_tensor(g, true, &a, ta)
                    } else {
                        matmul_tensor(&a, !ta, g, false)
                    }
                });
                vec![ga, gb]
            })
        })
    }

    pub fn matmul(self, other: Var<'t, T>) -> Var<'t, T> {
        self.matmul_t(false, other, false)
    }

    /// Row-wise log-softmax of a 2-D tensor.
    pub fn log_softmax(self) -> Var<'t, T> {
        let x = self.value();
        assert_eq!(x.ndim(), 2, "log_softmax expects [rows, classes]");
        let (rows, cols) = (x.shape()[0], x.shape()[1]);
        let mut y = (*x).clone();
        for r in 0..rows {
            let row = &mut y.data_mut()[r * cols..(r + 1) * cols];
            let m = row.iter().fold(row[0], |a, &b| a.max(b));
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let yc = y.clone();
        self.tape.push_op(y, &[self], move || {
            Box::new(move |g, _| {
                let mut gx = g.clone();
                for r in 0..rows {
                    let gr = &g.data()[r * cols..(r + 1) * cols];
                    let s: T = gr.iter().copied().sum();
                    let yr = &yc.data()[r * cols..(r + 1) * cols];
                    for ((o, &gv), &yv) in gx.data_mut()[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .zip(gr)
                        .zip(yr)
                    {
                        *o = gv - yv.exp() * s;
                    }
                }
                vec![Some(gx)]
            })
        })
    }
}

/// Concatenate along `axis`.
pub fn concat<'t, T: Float>(vars: &[Var<'t, T>], axis: usize) -> Var<'t, T> {
    assert!(!vars.is_empty(), "concat of zero tensors");
    let tape = vars[0].tape;
    let values: Vec<_> = vars.iter().map(|v| v.value()).collect();
    let first = values[0].shape().to_vec();
    let mut sizes = Vec::with_capacity(values.len());
    for v in &values {
        let s = v.shape();
        assert_eq!(s.len(), first.len(), "concat rank mismatch");
        for (d, (&a, &b)) in s.iter().zip(&first).enumerate() {
            assert!(d == axis || a == b, "concat shape mismatch {} vs {}", s.display(), first.display());
        }
        sizes.push(s[axis]);
    }
    let total: usize = sizes.iter().sum();
    let outer = numel(&first[..axis]);
    let inner = numel(&first[axis + 1..]);
    let mut out_shape = first.clone();
    out_shape[axis] = total;
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (v, &s) in values.iter().zip(&sizes) {
            out.extend_from_slice(&v.data()[o * s * inner..(o + 1) * s * inner]);
        }
    }
    let y = Tensor::from_vec(&out_shape, out);
    tape.push_op(y, vars, move || {
        Box::new(move |g, mask| {
            let mut offset = 0;
            let mut grads = Vec::with_capacity(sizes.len());
            for (k, &s) in sizes.iter().enumerate() {
                if mask[k] {
                    let mut shape = out_shape.clone();
                    shape[axis] = s;
                    let mut buf = Vec::with_capacity(outer * s * inner);
                    for o in 0..outer {
                        let base = o * total * inner + offset * inner;
                        buf.extend_from_slice(&g.data()[base..base + s * inner]);
                    }
                    grads.push(Some(Tensor::from_vec(&shape, buf)));
                } else {
                    grads.push(None);
                }
                offset += s;
            }
            grads
        })
    })
}

/// Stack equally-shaped variables along a new leading axis.
pub fn stack<'t, T: Float>(vars: &[Var<'t, T>]) -> Var<'t, T> {
    let reshaped: Vec<_> = vars
        .iter()
        .map(|v| {
            let mut s = vec![1];
            s.extend(v.shape());
            v.reshape(&s)
        })
        .collect();
    concat(&reshaped, 0)
}
