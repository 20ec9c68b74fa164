//! Dense feed-forward regression network: ReLU hidden layers, identity
//! output, trained on squared error.
//!
//! All parameters live in one flat `Vec<f64>` laid out layer by layer as
//! `[W0, b0, W1, b1, ...]`, each weight matrix row-major with shape
//! `(fan_out, fan_in)`. Gradients and optimizer moments share that layout.

mod adam;
mod artifact;

pub use adam::{adam_step, AdamState};
pub use artifact::{Model, ARTIFACT_MAGIC, ARTIFACT_VERSION};

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::Dataset;
use crate::par::{self, Exec};

/// Samples per gradient work unit. Fixed so the summation tree, and hence
/// the result, is the same for any thread count.
pub const GRAD_CHUNK: usize = 64;
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden: impl Into<Vec<usize>>, output_dim: usize) -> Self {
        NetworkSpec {
            input_dim,
            hidden: hidden.into(),
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!("zero-sized layer in {self}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }

    /// Parses `"512,128,64"` (empty or `"linear"` for no hidden layers).
    pub fn parse_hidden(s: &str) -> Result<Vec<usize>> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("linear") || s == "-" {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::InvalidConfig(format!("bad hidden layer size `{p}`")))
            })
            .collect()
    }

    pub fn hidden_label(&self) -> String {
        if self.hidden.is_empty() {
            "-".into()
        } else {
            self.hidden
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        }
    }
}

impl std::fmt::Display for NetworkSpec {
    /// `173-512-128-64-1`
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.input_dim)?;
        for h in &self.hidden {
            write!(f, "-{h}")?;
        }
        write!(f, "-{}", self.output_dim)
    }
}

/// Total weights and biases.
pub fn param_count(spec: &NetworkSpec) -> usize {
    spec.layer_dims().iter().map(|&(i, o)| i * o + o).sum()
}

/// Multiply-accumulates per sample for one forward pass.
pub fn mac_count(spec: &NetworkSpec) -> usize {
    spec.layer_dims().iter().map(|&(i, o)| i * o).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

fn layout_for(spec: &NetworkSpec) -> Vec<LayerLayout> {
    let mut offset = 0;
    spec.layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let l = LayerLayout {
                fan_in,
                fan_out,
                weights: offset,
                biases: offset + fan_in * fan_out,
            };
            offset += fan_in * fan_out + fan_out;
            l
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layout: Vec<LayerLayout>,
    params: Vec<f64>,
}

/// Layer activations from a forward pass: `activations[0]` is the input,
/// `activations[l + 1]` the output of layer `l` (post-ReLU for hidden
/// layers).
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn prediction(&self) -> f64 {
        self.activations
            .last()
            .and_then(|a| a.first())
            .copied()
            .unwrap_or(f64::NAN)
    }
}

/// Parameter gradients in the network's flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layout: Vec<LayerLayout>,
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layout: net.layout.clone(),
            values: vec![0.0; net.params.len()],
        }
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = &self.layout[layer];
        &self.values[l.weights..l.biases]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let l = &self.layout[layer];
        &self.values[l.biases..l.biases + l.fan_out]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Network {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        if spec.output_dim != 1 {
            return Err(Error::InvalidConfig(
                "only single-output networks are supported".into(),
            ));
        }
        let layout = layout_for(spec);
        let mut params = vec![0.0; param_count(spec)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &layout {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            let dist = Uniform::new(-bound, bound).expect("finite non-empty range");
            for w in &mut params[l.weights..l.biases] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(Network {
            spec: spec.clone(),
            layout,
            params,
        })
    }

    /// Builds a network from explicit parameters in the flat layout.
    pub fn from_params(spec: &NetworkSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if spec.output_dim != 1 {
            return Err(Error::InvalidConfig(
                "only single-output networks are supported".into(),
            ));
        }
        if params.len() != param_count(spec) {
            return Err(Error::DimensionMismatch {
                expected: param_count(spec),
                actual: params.len(),
            });
        }
        Ok(Network {
            spec: spec.clone(),
            layout: layout_for(spec),
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn num_layers(&self) -> usize {
        self.layout.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = &self.layout[layer];
        &self.params[l.weights..l.biases]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let l = &self.layout[layer];
        &self.params[l.biases..l.biases + l.fan_out]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layout[layer];
        &mut self.params[l.weights..l.biases]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layout[layer];
        &mut self.params[l.biases..l.biases + l.fan_out]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass reusing the buffers in `cache`.
    pub fn forward_into(&self, x: &[f64], cache: &mut ForwardCache) -> Result<f64> {
        self.check_input(x)?;
        let n = self.layout.len();
        cache.activations.resize_with(n + 1, Vec::new);
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(x);
        for (li, l) in self.layout.iter().enumerate() {
            let (prev, rest) = cache.activations.split_at_mut(li + 1);
            let input = &prev[li];
            let out = &mut rest[0];
            out.clear();
            let w = &self.params[l.weights..l.biases];
            let b = &self.params[l.biases..l.biases + l.fan_out];
            let hidden = li + 1 < n;
            out.extend(w.chunks_exact(l.fan_in).zip(b).map(|(row, &bias)| {
                let z = bias + dot(row, input);
                if hidden {
                    z.max(0.0)
                } else {
                    z
                }
            }));
        }
        Ok(cache.prediction())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(f64, ForwardCache)> {
        let mut cache = ForwardCache::default();
        let y = self.forward_into(x, &mut cache)?;
        Ok((y, cache))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.forward(x).map(|(y, _)| y)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let ok = cache.activations.len() == self.layout.len() + 1
            && cache.activations[0].len() == self.spec.input_dim
            && self
                .layout
                .iter()
                .zip(&cache.activations[1..])
                .all(|(l, a)| a.len() == l.fan_out);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "forward cache does not match network shape".into(),
            ))
        }
    }

    /// Adds `scale · ∂(ŷ - target)²/∂θ` into `grads`. `delta` and `next`
    /// are scratch buffers.
    fn accumulate(
        &self,
        cache: &ForwardCache,
        target: f64,
        scale: f64,
        grads: &mut [f64],
        delta: &mut Vec<f64>,
        next: &mut Vec<f64>,
    ) {
        delta.clear();
        delta.push(scale * 2.0 * (cache.prediction() - target));
        for (li, l) in self.layout.iter().enumerate().rev() {
            let input = &cache.activations[li];
            let (gw, gb) =
                grads[l.weights..l.biases + l.fan_out].split_at_mut(l.biases - l.weights);
            for (i, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, input, &mut gw[i * l.fan_in..(i + 1) * l.fan_in]);
                    gb[i] += d;
                }
            }
            if li == 0 {
                break;
            }
            next.clear();
            next.resize(l.fan_in, 0.0);
            let w = &self.params[l.weights..l.biases];
            for (i, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &w[i * l.fan_in..(i + 1) * l.fan_in], next);
                }
            }
            // ReLU'(z) is 1 for z > 0 and 0 otherwise (including z = 0).
            for (g, &a) in next.iter_mut().zip(input) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            std::mem::swap(delta, next);
        }
    }

    /// Gradients of the per-sample squared error `(ŷ - target)²`.
    pub fn backward(&self, cache: &ForwardCache, target: f64) -> Result<Gradients> {
        self.check_cache(cache)?;
        let mut g = Gradients::zeros_like(self);
        self.accumulate(
            cache,
            target,
            1.0,
            &mut g.values,
            &mut Vec::new(),
            &mut Vec::new(),
        );
        Ok(g)
    }

    /// Mean-squared-error gradient over `indices` of `data`, plus the summed
    /// squared error of the batch.
    pub fn batch_gradient(
        &self,
        data: &Dataset,
        indices: &[usize],
        exec: Exec,
    ) -> Result<(Gradients, f64)> {
        if data.dims() != self.spec.input_dim && !data.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: data.dims(),
            });
        }
        if indices.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let scale = 1.0 / indices.len() as f64;
        let partial = par::map_chunks(exec, indices, GRAD_CHUNK, |chunk| {
            let mut g = vec![0.0; self.params.len()];
            let mut cache = ForwardCache::default();
            let (mut delta, mut next) = (Vec::new(), Vec::new());
            let mut sse = 0.0;
            for &i in chunk {
                let y = self
                    .forward_into(data.row(i), &mut cache)
                    .expect("dimension checked above");
                let e = y - data.targets[i];
                sse += e * e;
                self.accumulate(
                    &cache,
                    data.targets[i],
                    scale,
                    &mut g,
                    &mut delta,
                    &mut next,
                );
            }
            (g, sse)
        });
        let mut grads = Gradients::zeros_like(self);
        let mut sse = 0.0;
        for (g, s) in partial {
            for (acc, v) in grads.values.iter_mut().zip(&g) {
                *acc += v;
            }
            sse += s;
        }
        Ok((grads, sse))
    }

    /// Predictions for every row of `data`, in row order.
    pub fn predict_dataset(&self, data: &Dataset, exec: Exec) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Ok(Vec::new());
        }
        if data.dims() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: data.dims(),
            });
        }
        let idx: Vec<usize> = (0..data.len()).collect();
        let parts = par::map_chunks(exec, &idx, PREDICT_CHUNK, |chunk| {
            let mut cache = ForwardCache::default();
            chunk
                .iter()
                .map(|&i| {
                    self.forward_into(data.row(i), &mut cache)
                        .expect("dimension checked")
                })
                .collect::<Vec<_>>()
        });
        Ok(parts.concat())
    }
}

/// `(1/n) Σ (ŷ - y)²`
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sse / predictions.len() as f64)
}

/// The seven reference architectures, from one to five hidden layers.
pub fn ablation_preset(input_dim: usize) -> Vec<NetworkSpec> {
    [
        vec![256],
        vec![256, 32],
        vec![256, 64],
        vec![512, 128, 64],
        vec![1024, 512, 64, 32],
        vec![512, 256, 128, 64, 32],
        vec![1024, 512, 128, 64, 32],
    ]
    .into_iter()
    .map(|h| NetworkSpec::new(input_dim, h, 1))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_parameter_and_mac_counts() {
        let s = |h: &[usize]| NetworkSpec::new(173, h.to_vec(), 1);
        assert_eq!(param_count(&s(&[256])), 44_801);
        assert_eq!(param_count(&s(&[512, 128, 64])), 163_073);
        assert_eq!(param_count(&s(&[])), 174);
        assert_eq!(mac_count(&s(&[256])), 44_544);
        assert_eq!(mac_count(&s(&[512, 128, 64])), 162_368);
        assert_eq!(mac_count(&NetworkSpec::new(1, vec![], 1)), 1);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = NetworkSpec::new(173, vec![512, 128, 64], 1);
        let a = Network::init(&spec, 11).unwrap();
        assert_eq!(a, Network::init(&spec, 11).unwrap());
        assert_ne!(a, Network::init(&spec, 12).unwrap());
        let shapes: Vec<(usize, usize)> =
            a.layout().iter().map(|l| (l.fan_out, l.fan_in)).collect();
        assert_eq!(shapes, [(512, 173), (128, 512), (64, 128), (1, 64)]);
        let bound = 1.0 / 173f64.sqrt();
        assert!(a.weights(0).iter().all(|w| w.abs() < bound));
        assert!(a.biases(0).iter().all(|&b| b == 0.0));
        assert_eq!(a.params().len(), param_count(&spec));
        assert!(Network::init(&NetworkSpec::new(0, vec![], 1), 1).is_err());
        assert!(Network::init(&NetworkSpec::new(3, vec![0], 1), 1).is_err());
    }

    #[test]
    fn forward_examples() {
        let spec = NetworkSpec::new(4, vec![3], 1);
        let mut net = Network::init(&spec, 0).unwrap();
        net.params_mut().fill(0.0);
        net.biases_mut(1)[0] = 7.0;
        assert_eq!(net.predict(&[1.0, -2.0, 3.0, 9.0]).unwrap(), 7.0);

        let lin = NetworkSpec::new(3, vec![], 1);
        let net = Network::from_params(&lin, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.predict(&[3.0, 0.0, 0.0]).unwrap(), 6.0);
        assert!(matches!(
            net.predict(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 4.0], &[0.0, 0.0]).unwrap(), 8.0);
        assert_eq!(mse(&[3.0], &[1.0]).unwrap(), 4.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn backward_hand_derivatives() {
        let lin = NetworkSpec::new(1, vec![], 1);
        for w in [-1.5, 0.25, 3.0] {
            let net = Network::from_params(&lin, vec![w, 0.0]).unwrap();
            let (_, cache) = net.forward(&[2.0]).unwrap();
            let g = net.backward(&cache, 0.0).unwrap();
            assert!((g.weights(0)[0] - 8.0 * w).abs() < 1e-12);
            assert!((g.biases(0)[0] - 4.0 * w).abs() < 1e-12);
        }

        let spec = NetworkSpec::new(5, vec![4, 3], 1);
        let net = Network::init(&spec, 3).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        let (y, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, y).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let a = Network::init(&NetworkSpec::new(3, vec![2], 1), 0).unwrap();
        let b = Network::init(&NetworkSpec::new(3, vec![4], 1), 0).unwrap();
        let (_, cache) = a.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(b.backward(&cache, 0.0).is_err());
    }

    #[test]
    fn parse_hidden_specs() {
        assert_eq!(
            NetworkSpec::parse_hidden("512,128,64").unwrap(),
            [512, 128, 64]
        );
        assert!(NetworkSpec::parse_hidden("linear").unwrap().is_empty());
        assert!(NetworkSpec::parse_hidden("5,0").is_err());
        assert_eq!(
            NetworkSpec::new(173, vec![512, 128, 64], 1).to_string(),
            "173-512-128-64-1"
        );
    }

    proptest! {
        #[test]
        fn stored_entries_match_param_count(
            input in 1usize..40,
            hidden in proptest::collection::vec(1usize..30, 0..4),
        ) {
            let spec = NetworkSpec::new(input, hidden, 1);
            let net = Network::init(&spec, 5).unwrap();
            let stored: usize = (0..net.num_layers())
                .map(|l| net.weights(l).len() + net.biases(l).len())
                .sum();
            prop_assert_eq!(stored, param_count(&spec));
        }

        #[test]
        fn positively_homogeneous_without_biases(
            x in proptest::collection::vec(-3.0f64..3.0, 6),
            alpha in 0.01f64..50.0,
            seed in 0u64..1000,
        ) {
            let net = Network::init(&NetworkSpec::new(6, vec![9], 1), seed).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| v * alpha).collect();
            let a = net.predict(&scaled).unwrap();
            let b = alpha * net.predict(&x).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
