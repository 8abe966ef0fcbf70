//! Reference implementations the engine is checked against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tamilnist::nn::{ModelSpec, Network, Tensor};
use tamilnist::raster::{Raster, SIDE};

/// Valid 3×3 convolution, NHWC input, (3, 3, C, F) kernel, five loops deep.
pub fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, bias: &Tensor<f64>) -> Vec<f64> {
    let &[b, h, w, c] = x.shape() else { panic!("rank-4 input") };
    let f = bias.len();
    let xd = x.data();
    let kd = k.data();
    let mut out = Vec::new();
    for n in 0..b {
        for i in 0..h - 2 {
            for j in 0..w - 2 {
                for o in 0..f {
                    let mut acc = bias.data()[o];
                    for di in 0..3 {
                        for dj in 0..3 {
                            for ch in 0..c {
                                acc += xd[((n * h + i + di) * w + j + dj) * c + ch] * kd[((di * 3 + dj) * c + ch) * f + o];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Blockwise 2×2 max and the flat index of the first maximal cell in
/// row-major window order, per output element.
pub fn naive_maxpool(x: &Tensor<f64>) -> (Vec<f64>, Vec<usize>) {
    let &[b, h, w, c] = x.shape() else { panic!("rank-4 input") };
    let at = |n: usize, i: usize, j: usize, ch: usize| ((n * h + i) * w + j) * c + ch;
    let mut max = Vec::new();
    let mut first = Vec::new();
    for n in 0..b {
        for i in 0..h / 2 {
            for j in 0..w / 2 {
                for ch in 0..c {
                    let cells = [
                        at(n, 2 * i, 2 * j, ch),
                        at(n, 2 * i, 2 * j + 1, ch),
                        at(n, 2 * i + 1, 2 * j, ch),
                        at(n, 2 * i + 1, 2 * j + 1, ch),
                    ];
                    let m = cells.iter().map(|&q| x.data()[q]).fold(f64::MIN, f64::max);
                    max.push(m);
                    first.push(*cells.iter().find(|&&q| x.data()[q] == m).unwrap());
                }
            }
        }
    }
    (max, first)
}

/// Per-pixel bilinear resampling through an explicitly inverted affine map
/// (rotation about the centre, counter-clockwise on screen, then shift).
/// Returns unrounded intensities.
pub fn bilinear_oracle(src: &Raster, angle_deg: f64, dx: i32, dy: i32) -> Vec<f64> {
    let t = angle_deg.to_radians();
    let m = [[t.cos(), t.sin()], [-t.sin(), t.cos()]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
    let c = (SIDE as f64 - 1.0) / 2.0;
    let pixel = |r: i64, col: i64| -> f64 {
        if r < 0 || col < 0 || r >= SIDE as i64 || col >= SIDE as i64 {
            0.0
        } else {
            src.get(r as usize, col as usize) as f64
        }
    };
    let mut out = Vec::with_capacity(SIDE * SIDE);
    for row in 0..SIDE {
        for col in 0..SIDE {
            let x = col as f64 - dx as f64 - c;
            let y = row as f64 - dy as f64 - c;
            let sx = inv[0][0] * x + inv[0][1] * y + c;
            let sy = inv[1][0] * x + inv[1][1] * y + c;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            out.push(
                (1.0 - fy) * ((1.0 - fx) * pixel(y0, x0) + fx * pixel(y0, x0 + 1))
                    + fy * ((1.0 - fx) * pixel(y0 + 1, x0) + fx * pixel(y0 + 1, x0 + 1)),
            );
        }
    }
    out
}

/// Whether a rounded byte agrees with an unrounded reference value; either
/// neighbour is accepted when the reference sits on a half-way point.
pub fn matches_to_rounding(got: u8, expected: f64) -> bool {
    let g = got as f64;
    if (expected - expected.floor() - 0.5).abs() < 1e-9 {
        g == expected.floor() || g == expected.ceil()
    } else {
        g == expected.round().clamp(0.0, 255.0)
    }
}

/// Top-k accuracy counted directly: a sample hits when fewer than k classes
/// are strictly more probable or equally probable with a lower index.
pub fn brute_force_topk(probs: &[f64], labels: &[usize], classes: usize, k: usize) -> f64 {
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| {
            let row = &probs[i * classes..(i + 1) * classes];
            let ahead = (0..classes)
                .filter(|&j| row[j] > row[y] || (row[j] == row[y] && j < y))
                .count();
            ahead < k
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// Random probability matrix with coarse quantisation (frequent ties).
pub fn random_probabilities(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> (Vec<f64>, Vec<usize>) {
    let levels = rng.gen_range(2..=50);
    let mut probs = Vec::with_capacity(n * classes);
    for _ in 0..n {
        let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0..levels) as f64 + 1.0).collect();
        let sum: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|v| v / sum));
    }
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    (probs, labels)
}

/// Finite-difference step and pass threshold for gradient checks.
pub const GRADCHECK_H: f64 = 1e-4;
pub const GRADCHECK_MAX_REL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely; the central
/// difference itself carries ~1e-12 of cancellation noise at h = 1e-4.
pub const GRADCHECK_REL_FLOOR: f64 = 1e-6;

/// Central differences over every parameter of a fresh f64 model (with
/// small random biases) on a random batch. Returns (max relative error,
/// parameters checked).
pub fn gradcheck(spec: &ModelSpec, seed: u64, batch_size: usize, h: f64) -> (f64, usize) {
    let mut net = Network::<f64>::init(spec.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for p in net.params_mut() {
        if p.shape().len() == 1 {
            for v in p.data_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let mut shape = vec![batch_size];
    shape.extend(&spec.input_shape);
    let x = Tensor::from_fn(shape, |_| rng.gen_range(0.0..1.0));
    let labels: Vec<usize> = (0..batch_size).map(|i| (i * 5 + 3) % spec.output_dim().unwrap()).collect();
    let analytic = net.batch_gradients(&x, &labels).unwrap().grads;

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for t in 0..analytic.len() {
        for i in 0..analytic[t].len() {
            let orig = net.params()[t].data()[i];
            net.params_mut()[t].data_mut()[i] = orig + h;
            let plus = net.batch_gradients(&x, &labels).unwrap().loss;
            net.params_mut()[t].data_mut()[i] = orig - h;
            let minus = net.batch_gradients(&x, &labels).unwrap().loss;
            net.params_mut()[t].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[t].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_REL_FLOOR);
            max_rel = max_rel.max(if rel.is_finite() { rel } else { f64::INFINITY });
            checked += 1;
        }
    }
    (max_rel, checked)
}
