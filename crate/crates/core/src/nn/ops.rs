//! Layer kernels on NHWC data. The tensor-level functions are the public
//! entry points; the slice-level helpers are shared with the network.

use super::real::{matmul, matmul_nt, matmul_tn};
use super::spec::{KERNEL, POOL};
use super::{NnError, Real, Tensor};

/// Unfolds 3×3 valid windows of a (b, h, w, c) input into a
/// (b·oh·ow) × (9·c) matrix whose columns run over (di, dj, c).
pub fn im2col<T: Real>(input: &[T], b: usize, h: usize, w: usize, c: usize) -> Vec<T> {
    let (oh, ow) = (h - KERNEL + 1, w - KERNEL + 1);
    let cols = KERNEL * KERNEL * c;
    let mut patches = vec![T::zero(); b * oh * ow * cols];
    for n in 0..b {
        let img = &input[n * h * w * c..(n + 1) * h * w * c];
        for i in 0..oh {
            for j in 0..ow {
                let row = ((n * oh + i) * ow + j) * cols;
                for di in 0..KERNEL {
                    let src = ((i + di) * w + j) * c;
                    let dst = row + di * KERNEL * c;
                    patches[dst..dst + KERNEL * c].copy_from_slice(&img[src..src + KERNEL * c]);
                }
            }
        }
    }
    patches
}

/// Scatter-adds patch gradients back onto a (b, h, w, c) input gradient.
pub fn col2im<T: Real>(dpatches: &[T], b: usize, h: usize, w: usize, c: usize) -> Vec<T> {
    let (oh, ow) = (h - KERNEL + 1, w - KERNEL + 1);
    let cols = KERNEL * KERNEL * c;
    let mut dinput = vec![T::zero(); b * h * w * c];
    for n in 0..b {
        let img = &mut dinput[n * h * w * c..(n + 1) * h * w * c];
        for i in 0..oh {
            for j in 0..ow {
                let row = ((n * oh + i) * ow + j) * cols;
                for di in 0..KERNEL {
                    let dst = ((i + di) * w + j) * c;
                    let src = row + di * KERNEL * c;
                    for (d, &s) in img[dst..dst + KERNEL * c]
                        .iter_mut()
                        .zip(&dpatches[src..src + KERNEL * c])
                    {
                        *d = *d + s;
                    }
                }
            }
        }
    }
    dinput
}

/// `patches · kernel + bias` for `rows` windows; kernel is (9c) × f.
pub fn conv_from_patches<T: Real>(patches: &[T], rows: usize, cols: usize, kernel: &[T], bias: &[T]) -> Vec<T> {
    let f = bias.len();
    let mut out = Vec::with_capacity(rows * f);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    matmul(rows, cols, f, patches, kernel, &mut out, true);
    out
}

/// Gradients of a convolution given its patches and output gradient.
/// Returns (d_kernel, d_bias, d_patches if requested).
pub fn conv_backward<T: Real>(
    patches: &[T],
    rows: usize,
    cols: usize,
    kernel: &[T],
    dout: &[T],
    f: usize,
    need_input: bool,
) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
    let mut dk = vec![T::zero(); cols * f];
    matmul_tn(cols, rows, f, patches, dout, &mut dk, false);
    let db = column_sums(dout, rows, f);
    let dpatches = need_input.then(|| {
        let mut dp = vec![T::zero(); rows * cols];
        matmul_nt(rows, f, cols, dout, kernel, &mut dp, false);
        dp
    });
    (dk, db, dpatches)
}

pub fn column_sums<T: Real>(m: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut sums = vec![T::zero(); cols];
    for r in 0..rows {
        for (s, &v) in sums.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *s = *s + v;
        }
    }
    sums
}

/// 2×2 stride-2 max pool over (b, h, w, c), discarding an odd trailing
/// row/column. Returns the output and, per output element, the flat input
/// index of the first maximum in row-major window order.
pub fn maxpool_slices<T: Real>(input: &[T], b: usize, h: usize, w: usize, c: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / POOL, w / POOL);
    let mut out = Vec::with_capacity(b * oh * ow * c);
    let mut argmax = Vec::with_capacity(b * oh * ow * c);
    for n in 0..b {
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let mut best_idx = ((n * h + POOL * i) * w + POOL * j) * c + ch;
                    let mut best = input[best_idx];
                    for di in 0..POOL {
                        for dj in 0..POOL {
                            let idx = ((n * h + POOL * i + di) * w + POOL * j + dj) * c + ch;
                            if input[idx] > best {
                                best = input[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx as u32);
                }
            }
        }
    }
    (out, argmax)
}

pub fn maxpool_backward_slices<T: Real>(dout: &[T], argmax: &[u32], input_len: usize) -> Vec<T> {
    let mut dinput = vec![T::zero(); input_len];
    for (&g, &idx) in dout.iter().zip(argmax) {
        let slot = &mut dinput[idx as usize];
        *slot = *slot + g;
    }
    dinput
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows<T: Real>(logits: &[T], cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut sum = T::zero();
        for &z in row {
            let e = (z - max).exp();
            sum = sum + e;
            out.push(e);
        }
        for p in &mut out[start..] {
            *p = *p / sum;
        }
    }
    out
}

/// `ln Σ exp(row)` for each row.
pub fn log_sum_exp_rows<T: Real>(logits: &[T], cols: usize) -> Vec<T> {
    logits
        .chunks(cols)
        .map(|row| {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            max + row.iter().map(|&z| (z - max).exp()).sum::<T>().ln()
        })
        .collect()
}

fn expect_rank<T: Real>(t: &Tensor<T>, rank: usize, context: &str) -> Result<(), NnError> {
    if t.shape().len() != rank {
        return Err(NnError::ShapeMismatch {
            context: context.into(),
            expected: vec![rank],
            found: t.shape().to_vec(),
        });
    }
    Ok(())
}

/// Valid 3×3 convolution of a (b, h, w, c) input with a (3, 3, c, f) kernel.
pub fn conv2d<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    expect_rank(input, 4, "conv2d input")?;
    let &[b, h, w, c] = input.shape() else { unreachable!() };
    let f = bias.len();
    if kernel.shape() != [KERNEL, KERNEL, c, f] || h < KERNEL || w < KERNEL {
        return Err(NnError::ShapeMismatch {
            context: "conv2d kernel".into(),
            expected: vec![KERNEL, KERNEL, c, f],
            found: kernel.shape().to_vec(),
        });
    }
    let (oh, ow) = (h - KERNEL + 1, w - KERNEL + 1);
    let patches = im2col(input.data(), b, h, w, c);
    let out = conv_from_patches(&patches, b * oh * ow, KERNEL * KERNEL * c, kernel.data(), bias.data());
    Tensor::new(vec![b, oh, ow, f], out)
}

/// 2×2 stride-2 max pool of a (b, h, w, c) input.
pub fn maxpool2d<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>), NnError> {
    expect_rank(input, 4, "maxpool input")?;
    let &[b, h, w, c] = input.shape() else { unreachable!() };
    if h < POOL || w < POOL {
        return Err(NnError::ShapeMismatch {
            context: "maxpool input".into(),
            expected: vec![POOL, POOL],
            found: vec![h, w],
        });
    }
    let (out, argmax) = maxpool_slices(input.data(), b, h, w, c);
    Ok((Tensor::new(vec![b, h / POOL, w / POOL, c], out)?, argmax))
}

/// Routes pooled gradients back to the argmax positions of a pool over `input_shape`.
pub fn maxpool2d_backward<T: Real>(dout: &Tensor<T>, argmax: &[u32], input_shape: &[usize]) -> Result<Tensor<T>, NnError> {
    let len = input_shape.iter().product();
    Tensor::new(input_shape.to_vec(), maxpool_backward_slices(dout.data(), argmax, len))
}

/// Row-wise softmax of a (b, n) tensor.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    expect_rank(logits, 2, "softmax input")?;
    let cols = logits.shape()[1];
    Tensor::new(logits.shape().to_vec(), softmax_rows(logits.data(), cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxpool_of_distinct_4x4() {
        // Rows: 1 5 2 0 / 3 4 8 6 / 9 7 10 11 / 12 13 15 14
        let vals = [1., 5., 2., 0., 3., 4., 8., 6., 9., 7., 10., 11., 12., 13., 15., 14.];
        let input = Tensor::<f64>::new(vec![1, 4, 4, 1], vals.to_vec()).unwrap();
        let (out, argmax) = maxpool2d(&input).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2, 1]);
        assert_eq!(out.data(), &[5., 8., 13., 15.]);
        assert_eq!(argmax, vec![1, 6, 13, 14]);
    }

    #[test]
    fn maxpool_floors_odd_edges() {
        let input = Tensor::<f64>::from_fn(vec![1, 5, 5, 1], |i| i as f64);
        let (out, _) = maxpool2d(&input).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2, 1]);
        assert_eq!(out.data(), &[6., 8., 16., 18.]);
    }

    #[test]
    fn maxpool_ties_go_to_first_position() {
        let input = Tensor::<f64>::new(vec![1, 2, 2, 1], vec![3., 3., 3., 3.]).unwrap();
        let (out, argmax) = maxpool2d(&input).unwrap();
        let d = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let back = maxpool2d_backward(&d, &argmax, &[1, 2, 2, 1]).unwrap();
        assert_eq!(out.data(), &[3.]);
        assert_eq!(back.data(), &[1., 0., 0., 0.]);
    }

    #[test]
    fn zero_input_zero_bias_conv_is_zero() {
        let input = Tensor::<f64>::zeros(vec![2, 6, 6, 3]);
        let kernel = Tensor::from_fn(vec![3, 3, 3, 4], |i| i as f64 - 50.0);
        let bias = Tensor::zeros(vec![4]);
        let out = conv2d(&input, &kernel, &bias).unwrap();
        assert_eq!(out.shape(), &[2, 4, 4, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_rejects_wrong_kernel() {
        let input = Tensor::<f64>::zeros(vec![1, 6, 6, 2]);
        let kernel = Tensor::zeros(vec![3, 3, 1, 4]);
        let bias = Tensor::zeros(vec![4]);
        assert!(matches!(conv2d(&input, &kernel, &bias), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let x = Tensor::<f64>::new(vec![1, 5], vec![0.3, -1.2, 4.0, 2.2, 0.0]).unwrap();
        let shifted = Tensor::new(vec![1, 5], x.data().iter().map(|v| v + 123.456).collect()).unwrap();
        let (p, q) = (softmax(&x).unwrap(), softmax(&shifted).unwrap());
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> = <x, col2im(y)> for all x, y.
        let (b, h, w, c) = (2, 5, 4, 3);
        let x: Vec<f64> = (0..b * h * w * c).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = im2col(&x, b, h, w, c);
        let y: Vec<f64> = (0..p.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = p.iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im(&y, b, h, w, c);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
