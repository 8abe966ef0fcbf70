use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ops;
use super::spec::{LayerSpec, ModelSpec, KERNEL};
use super::{NnError, Real, Tensor};

/// Samples per gradient work unit. Batches are always split at this size
/// and partial gradients summed in chunk order, so results do not depend
/// on the number of worker threads.
pub const GRAD_CHUNK: usize = 16;

/// A model spec together with its parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: ModelSpec,
    /// (weight, bias) pairs in layer order.
    params: Vec<Tensor<T>>,
    /// For each layer, the index of its weight in `params`.
    param_slot: Vec<Option<usize>>,
}

/// Per-layer state retained by a training-mode forward pass.
#[derive(Debug, Clone)]
enum LayerCache<T> {
    Flatten,
    Dense { input: Vec<T> },
    Conv { patches: Vec<T>, in_shape: [usize; 3] },
    Pool { argmax: Vec<u32>, in_len: usize },
    Relu { mask: Vec<bool> },
    Softmax { logits: Vec<T>, probs: Vec<T> },
}

/// Activations kept for `backward`; empty after an inference-mode forward.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    batch: usize,
    layers: Vec<LayerCache<T>>,
}

/// Loss, gradients congruent with `Network::params`, and top-1 hits.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub loss: f64,
    pub correct: usize,
    pub grads: Vec<Tensor<T>>,
}

impl<T: Real> Network<T> {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let shapes = spec.param_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut param_slot = Vec::with_capacity(shapes.len());
        for (layer, shape) in spec.layers.iter().zip(shapes) {
            let Some((w, b)) = shape else {
                param_slot.push(None);
                continue;
            };
            let (fan_in, fan_out) = fans(layer, &w);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new(-limit, limit);
            param_slot.push(Some(params.len()));
            params.push(Tensor::from_fn(w, |_| T::from_f64_lossy(dist.sample(&mut rng))));
            params.push(Tensor::zeros(b));
        }
        Ok(Self {
            spec,
            params,
            param_slot,
        })
    }

    /// Assembles a network from explicit parameters, checking every shape.
    pub fn from_params(spec: ModelSpec, params: Vec<Tensor<T>>) -> Result<Self, NnError> {
        spec.validate()?;
        let shapes = spec.param_shapes()?;
        let mut param_slot = Vec::with_capacity(shapes.len());
        let mut expected = Vec::new();
        for shape in shapes {
            match shape {
                Some((w, b)) => {
                    param_slot.push(Some(expected.len()));
                    expected.push(w);
                    expected.push(b);
                }
                None => param_slot.push(None),
            }
        }
        if expected.len() != params.len() {
            return Err(NnError::ShapeMismatch {
                context: "parameter tensor count".into(),
                expected: vec![expected.len()],
                found: vec![params.len()],
            });
        }
        for (e, p) in expected.into_iter().zip(&params) {
            if p.shape() != e.as_slice() {
                return Err(NnError::ShapeMismatch {
                    context: "parameter tensor".into(),
                    expected: e,
                    found: p.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            spec,
            params,
            param_slot,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.output_dim().expect("validated at construction")
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            param_slot: self.param_slot.clone(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize, NnError> {
        let shape = input.shape();
        if shape.len() != self.spec.input_shape.len() + 1 || shape[1..] != self.spec.input_shape[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(1)];
            expected.extend(&self.spec.input_shape);
            return Err(NnError::ShapeMismatch {
                context: format!("{} model input", self.spec.kind),
                expected,
                found: shape.to_vec(),
            });
        }
        Ok(shape[0])
    }

    /// Runs the batch through every layer and returns the softmax
    /// probabilities, shape (batch, classes). In training mode the cache
    /// holds what `backward` needs.
    pub fn forward(&self, input: &Tensor<T>, train_mode: bool) -> Result<(Tensor<T>, Cache<T>), NnError> {
        let batch = self.check_input(input)?;
        let chain = self.spec.shape_chain()?;
        let mut cache = Cache {
            batch,
            layers: Vec::new(),
        };
        let mut act: Vec<T> = input.data().to_vec();

        for (li, layer) in self.spec.layers.iter().enumerate() {
            let in_shape = &chain[li];
            let entry = match *layer {
                LayerSpec::Flatten => LayerCache::Flatten,
                LayerSpec::Relu => {
                    let mut mask = Vec::with_capacity(if train_mode { act.len() } else { 0 });
                    for v in act.iter_mut() {
                        let on = *v > T::zero();
                        if !on {
                            *v = T::zero();
                        }
                        if train_mode {
                            mask.push(on);
                        }
                    }
                    LayerCache::Relu { mask }
                }
                LayerSpec::Dense { units } => {
                    let n_in = in_shape[0];
                    let (w, b) = self.layer_params(li);
                    let mut out = Vec::with_capacity(batch * units);
                    for _ in 0..batch {
                        out.extend_from_slice(b.data());
                    }
                    super::matmul(batch, n_in, units, &act, w.data(), &mut out, true);
                    let input = std::mem::replace(&mut act, out);
                    LayerCache::Dense {
                        input: if train_mode { input } else { Vec::new() },
                    }
                }
                LayerSpec::Conv2d { .. } => {
                    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
                    let (kernel, bias) = self.layer_params(li);
                    let patches = ops::im2col(&act, batch, h, w, c);
                    let rows = batch * (h - KERNEL + 1) * (w - KERNEL + 1);
                    act = ops::conv_from_patches(&patches, rows, KERNEL * KERNEL * c, kernel.data(), bias.data());
                    LayerCache::Conv {
                        patches: if train_mode { patches } else { Vec::new() },
                        in_shape: [h, w, c],
                    }
                }
                LayerSpec::MaxPool2d => {
                    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
                    let in_len = act.len();
                    let (out, argmax) = ops::maxpool_slices(&act, batch, h, w, c);
                    act = out;
                    LayerCache::Pool {
                        argmax: if train_mode { argmax } else { Vec::new() },
                        in_len,
                    }
                }
                LayerSpec::Softmax => {
                    let probs = ops::softmax_rows(&act, in_shape[0]);
                    let logits = std::mem::replace(&mut act, probs);
                    LayerCache::Softmax {
                        probs: if train_mode { act.clone() } else { Vec::new() },
                        logits: if train_mode { logits } else { Vec::new() },
                    }
                }
            };
            if train_mode {
                cache.layers.push(entry);
            }
        }
        let classes = chain.last().expect("non-empty")[0];
        Ok((Tensor::new(vec![batch, classes], act)?, cache))
    }

    fn layer_params(&self, layer: usize) -> (&Tensor<T>, &Tensor<T>) {
        let slot = self.param_slot[layer].expect("parameterised layer");
        (&self.params[slot], &self.params[slot + 1])
    }

    /// Gradients of the mean cross-entropy over the cached batch.
    pub fn backward(&self, cache: &Cache<T>, labels: &[usize]) -> Result<Gradients<T>, NnError> {
        self.backward_scaled(cache, labels, labels.len())
    }

    /// As `backward`, but the loss is summed over the batch and divided by
    /// `denominator` (the size of the full batch this cache is a chunk of).
    pub fn backward_scaled(&self, cache: &Cache<T>, labels: &[usize], denominator: usize) -> Result<Gradients<T>, NnError> {
        if cache.layers.len() != self.spec.layers.len() {
            return Err(NnError::MissingCache);
        }
        if labels.len() != cache.batch {
            return Err(NnError::ShapeMismatch {
                context: "labels".into(),
                expected: vec![cache.batch],
                found: vec![labels.len()],
            });
        }
        let batch = cache.batch;
        let chain = self.spec.shape_chain()?;
        let classes = chain.last().expect("non-empty")[0];
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(NnError::LabelOutOfRange { label, classes });
        }
        let scale = T::one() / T::from_f64_lossy(denominator as f64);

        let mut grads: Vec<Tensor<T>> = self.params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        let mut loss = 0.0;
        let mut correct = 0;
        let mut delta: Vec<T> = Vec::new();
        // The first layer never needs an input gradient.
        for li in (0..self.spec.layers.len()).rev() {
            let need_input = li > 0;
            match (&self.spec.layers[li], &cache.layers[li]) {
                (LayerSpec::Softmax, LayerCache::Softmax { logits, probs }) => {
                    let lse = ops::log_sum_exp_rows(logits, classes);
                    delta = probs.iter().map(|&p| p * scale).collect();
                    for (n, &y) in labels.iter().enumerate() {
                        let row = &logits[n * classes..(n + 1) * classes];
                        loss += (lse[n] - row[y]).as_f64();
                        delta[n * classes + y] = delta[n * classes + y] - scale;
                        let top = row
                            .iter()
                            .enumerate()
                            .fold(0, |best, (k, &v)| if v > row[best] { k } else { best });
                        if top == y {
                            correct += 1;
                        }
                    }
                }
                (LayerSpec::Dense { units }, LayerCache::Dense { input }) => {
                    let n_in = chain[li][0];
                    let slot = self.param_slot[li].expect("dense has params");
                    super::matmul_tn(n_in, batch, *units, input, &delta, grads[slot].data_mut(), false);
                    grads[slot + 1] = Tensor::new(vec![*units], ops::column_sums(&delta, batch, *units))?;
                    if need_input {
                        let mut dx = vec![T::zero(); batch * n_in];
                        super::matmul_nt(batch, *units, n_in, &delta, self.params[slot].data(), &mut dx, false);
                        delta = dx;
                    }
                }
                (LayerSpec::Conv2d { filters }, LayerCache::Conv { patches, in_shape }) => {
                    let [h, w, c] = *in_shape;
                    let rows = batch * (h - KERNEL + 1) * (w - KERNEL + 1);
                    let cols = KERNEL * KERNEL * c;
                    let slot = self.param_slot[li].expect("conv has params");
                    let (dk, db, dpatches) =
                        ops::conv_backward(patches, rows, cols, self.params[slot].data(), &delta, *filters, need_input);
                    grads[slot].data_mut().copy_from_slice(&dk);
                    grads[slot + 1].data_mut().copy_from_slice(&db);
                    if let Some(dp) = dpatches {
                        delta = ops::col2im(&dp, batch, h, w, c);
                    }
                }
                (LayerSpec::MaxPool2d, LayerCache::Pool { argmax, in_len }) => {
                    delta = ops::maxpool_backward_slices(&delta, argmax, *in_len);
                }
                (LayerSpec::Relu, LayerCache::Relu { mask }) => {
                    for (d, &on) in delta.iter_mut().zip(mask) {
                        if !on {
                            *d = T::zero();
                        }
                    }
                }
                (LayerSpec::Flatten, LayerCache::Flatten) => {}
                _ => return Err(NnError::MissingCache),
            }
        }
        Ok(Gradients {
            loss: loss / denominator as f64,
            correct,
            grads,
        })
    }

    /// Loss and gradients of a full batch, computed in `GRAD_CHUNK`-sample
    /// pieces (in parallel) and reduced in a fixed order.
    pub fn batch_gradients(&self, input: &Tensor<T>, labels: &[usize]) -> Result<Gradients<T>, NnError> {
        let batch = self.check_input(input)?;
        if labels.len() != batch {
            return Err(NnError::ShapeMismatch {
                context: "labels".into(),
                expected: vec![batch],
                found: vec![labels.len()],
            });
        }
        let starts: Vec<usize> = (0..batch).step_by(GRAD_CHUNK).collect();
        let partials: Vec<Result<Gradients<T>, NnError>> = starts
            .par_iter()
            .map(|&start| {
                let end = (start + GRAD_CHUNK).min(batch);
                let chunk = input.slice_batch(start, end);
                let (_, cache) = self.forward(&chunk, true)?;
                self.backward_scaled(&cache, &labels[start..end], batch)
            })
            .collect();
        let mut total: Option<Gradients<T>> = None;
        for part in partials {
            let part = part?;
            total = Some(match total {
                None => part,
                Some(mut acc) => {
                    acc.loss += part.loss;
                    acc.correct += part.correct;
                    for (a, g) in acc.grads.iter_mut().zip(&part.grads) {
                        for (x, &y) in a.data_mut().iter_mut().zip(g.data()) {
                            *x = *x + y;
                        }
                    }
                    acc
                }
            });
        }
        total.ok_or_else(|| NnError::ShapeMismatch {
            context: "empty batch".into(),
            expected: vec![1],
            found: vec![0],
        })
    }

    /// Inference-mode probabilities, evaluated in chunks.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let batch = self.check_input(input)?;
        const CHUNK: usize = 256;
        let starts: Vec<usize> = (0..batch).step_by(CHUNK).collect();
        let parts: Vec<Result<Tensor<T>, NnError>> = starts
            .par_iter()
            .map(|&start| {
                let end = (start + CHUNK).min(batch);
                self.forward(&input.slice_batch(start, end), false).map(|(p, _)| p)
            })
            .collect();
        let classes = self.num_classes();
        let mut data = Vec::with_capacity(batch * classes);
        for p in parts {
            data.extend_from_slice(p?.data());
        }
        Tensor::new(vec![batch, classes], data)
    }
}

fn fans(layer: &LayerSpec, weight_shape: &[usize]) -> (usize, usize) {
    match layer {
        LayerSpec::Conv2d { .. } => {
            let receptive = weight_shape[0] * weight_shape[1];
            (receptive * weight_shape[2], receptive * weight_shape[3])
        }
        _ => (weight_shape[0], weight_shape[1]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_cnn_model, build_fc_model};

    #[test]
    fn glorot_range_and_zero_bias() {
        let net = Network::<f64>::init(ModelSpec::fc(1024, 16, 13), 3).unwrap();
        let limit = (6.0f64 / 1808.0).sqrt();
        assert!((limit - 0.0576).abs() < 1e-4);
        let w = &net.params()[0];
        assert_eq!(w.shape(), &[784, 1024]);
        assert!(w.data().iter().all(|v| v.abs() < limit));
        // The samples actually spread over the range.
        assert!(w.data().iter().any(|v| v.abs() > 0.9 * limit));
        for b in net.params().iter().skip(1).step_by(2) {
            assert!(b.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = Network::<f32>::init(build_cnn_model(), 11).unwrap();
        let b = Network::<f32>::init(build_cnn_model(), 11).unwrap();
        let c = Network::<f32>::init(build_cnn_model(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.param_count(), 116_109);
    }

    #[test]
    fn fc_forward_gives_distributions() {
        let net = Network::<f64>::init(build_fc_model(), 1).unwrap();
        let input = Tensor::from_fn(vec![3, 28, 28], |i| ((i * 7919) % 256) as f64 / 255.0);
        let (probs, cache) = net.forward(&input, false).unwrap();
        assert_eq!(probs.shape(), &[3, 13]);
        assert!(cache.layers.is_empty());
        for n in 0..3 {
            let row = probs.row(n);
            assert!(row.iter().all(|&p| p > 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn wrong_input_rank_is_a_shape_mismatch() {
        let fc = Network::<f32>::init(ModelSpec::fc(8, 8, 13), 0).unwrap();
        let conv_shaped = Tensor::zeros(vec![2, 28, 28, 1]);
        assert!(matches!(fc.forward(&conv_shaped, false), Err(NnError::ShapeMismatch { .. })));
        let cnn = Network::<f32>::init(ModelSpec::cnn(2, 2, 13), 0).unwrap();
        assert!(matches!(cnn.predict(&Tensor::zeros(vec![2, 28, 28])), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn backward_requires_training_cache() {
        let net = Network::<f64>::init(ModelSpec::cnn(2, 2, 13), 0).unwrap();
        let (_, cache) = net.forward(&Tensor::zeros(vec![1, 28, 28, 1]), false).unwrap();
        assert!(matches!(net.backward(&cache, &[0]), Err(NnError::MissingCache)));
    }

    #[test]
    fn uniform_probabilities_give_closed_form_gradient() {
        // Zero weights make every logit zero, hence uniform probabilities.
        let mut net = Network::<f64>::init(ModelSpec::fc(4, 4, 13), 0).unwrap();
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let (probs, cache) = net.forward(&Tensor::from_fn(vec![1, 28, 28], |_| 0.5), true).unwrap();
        assert!(probs.data().iter().all(|&p| (p - 1.0 / 13.0).abs() < 1e-15));
        let g = net.backward(&cache, &[4]).unwrap();
        assert!((g.loss - 13f64.ln()).abs() < 1e-12);
        // Final bias gradient equals the logit gradient p − onehot.
        let db = g.grads.last().unwrap();
        for (k, &v) in db.data().iter().enumerate() {
            let expected = 1.0 / 13.0 - if k == 4 { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn confident_prediction_has_vanishing_gradient() {
        let mut net = Network::<f64>::init(ModelSpec::fc(4, 4, 13), 0).unwrap();
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let last = net.params().len() - 1;
        net.params_mut()[last].data_mut()[2] = 60.0;
        let (_, cache) = net.forward(&Tensor::zeros(vec![1, 28, 28]), true).unwrap();
        let g = net.backward(&cache, &[2]).unwrap();
        assert!(g.loss < 1e-20);
        assert!(g.grads.last().unwrap().data().iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn chunked_gradients_match_single_pass() {
        let net = Network::<f64>::init(ModelSpec::cnn(3, 4, 13), 5).unwrap();
        let batch = 2 * GRAD_CHUNK + 3;
        let input = Tensor::from_fn(vec![batch, 28, 28, 1], |i| ((i * 31) % 97) as f64 / 97.0);
        let labels: Vec<usize> = (0..batch).map(|i| i % 13).collect();
        let (_, cache) = net.forward(&input, true).unwrap();
        let whole = net.backward(&cache, &labels).unwrap();
        let chunked = net.batch_gradients(&input, &labels).unwrap();
        assert!((whole.loss - chunked.loss).abs() < 1e-12);
        assert_eq!(whole.correct, chunked.correct);
        for (a, b) in whole.grads.iter().zip(&chunked.grads) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
