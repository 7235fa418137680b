//! Dense multilayer perceptrons with ReLU hidden layers, analytic
//! backpropagation and Adam. All arithmetic is `f64`.
//!
//! Weights are stored `(fan_in, fan_out)` so a batch `X` of shape
//! `(n, fan_in)` maps to `X·W + b`.

mod adam;
pub mod codec;
mod gradcheck;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{check_dim, Error, Result};

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, relative_error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HiddenActivation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutputActivation {
    Identity,
    /// `scale ⊙ tanh(z)`, one positive scale per output component.
    TanhScaled(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: OutputActivation) -> Result<Self> {
        let spec = MlpSpec { layer_sizes, hidden_activation: HiddenActivation::Relu, output_activation };
        spec.validate()?;
        Ok(spec)
    }

    /// `input → hidden… → output` with an identity head.
    pub fn linear_head(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        Self::new(Self::sizes(input, hidden, output), OutputActivation::Identity)
    }

    /// `input → hidden… → output` with a `scale·tanh` head.
    pub fn tanh_head(input: usize, hidden: &[usize], scale: Vec<f64>) -> Result<Self> {
        let out = scale.len();
        Self::new(Self::sizes(input, hidden, out), OutputActivation::TanhScaled(scale))
    }

    fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least an input and an output layer"));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if let OutputActivation::TanhScaled(scale) = &self.output_activation {
            check_dim(self.output_dim(), scale.len())?;
            if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::invalid("tanh output scales must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Weights and biases of every layer. Also used for gradients and Adam
/// moments, which share the shape of the parameters they track.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub layers: Vec<Layer>,
}

impl ParameterSet {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Layer { weight: Array2::zeros((w[0], w[1])), bias: Array1::zeros(w[1]) })
            .collect();
        ParameterSet { layers }
    }

    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            layers: self
                .layers
                .iter()
                .map(|l| Layer { weight: Array2::zeros(l.weight.raw_dim()), bias: Array1::zeros(l.bias.len()) })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &ParameterSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    pub(crate) fn check_shape(&self, other: &ParameterSet) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid("parameter set shapes differ"))
        }
    }

    /// Flat index access in layer order, weights (row-major) before biases.
    pub fn get(&self, mut index: usize) -> f64 {
        for l in &self.layers {
            if index < l.weight.len() {
                let cols = l.weight.ncols();
                return l.weight[(index / cols, index % cols)];
            }
            index -= l.weight.len();
            if index < l.bias.len() {
                return l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set(&mut self, mut index: usize, value: f64) {
        for l in &mut self.layers {
            if index < l.weight.len() {
                let cols = l.weight.ncols();
                l.weight[(index / cols, index % cols)] = value;
                return;
            }
            index -= l.weight.len();
            if index < l.bias.len() {
                l.bias[index] = value;
                return;
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    /// `self ← (1 − tau)·self + tau·source`.
    pub fn soft_update_from(&mut self, source: &ParameterSet, tau: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut dst.weight).and(&src.weight).for_each(|d, &s| *d = (1.0 - tau) * *d + tau * s);
            Zip::from(&mut dst.bias).and(&src.bias).for_each(|d, &s| *d = (1.0 - tau) * *d + tau * s);
        }
    }

    /// `self += alpha·other`.
    pub fn add_scaled(&mut self, other: &ParameterSet, alpha: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weight.scaled_add(alpha, &src.weight);
            dst.bias.scaled_add(alpha, &src.bias);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().map(|v| v * v).sum::<f64>() + l.bias.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &ParameterSet) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| {
                a.weight
                    .iter()
                    .zip(b.weight.iter())
                    .chain(a.bias.iter().zip(b.bias.iter()))
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().unwrap()
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.activations[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    pub params: ParameterSet,
}

impl Mlp {
    /// Uniform initialization in `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = ParameterSet::zeros(&spec);
        for l in &mut params.layers {
            let bound = 1.0 / (l.weight.nrows() as f64).sqrt();
            l.weight.mapv_inplace(|_| rng.random_range(-bound..bound));
            l.bias.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(Mlp { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let params = ParameterSet::zeros(&spec);
        Ok(Mlp { spec, params })
    }

    pub fn from_parts(spec: MlpSpec, params: ParameterSet) -> Result<Self> {
        spec.validate()?;
        params.check_shape(&ParameterSet::zeros(&spec))?;
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Zeroes the output layer so the network computes the constant zero
    /// function (identity head) regardless of the input.
    pub fn zero_output_layer(&mut self) {
        let last = self.params.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous row");
        Ok(self.forward_view(x).into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        check_dim(self.input_dim(), input.ncols())?;
        Ok(self.forward_view(input.view()))
    }

    fn forward_view(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let n = self.params.layers.len();
        let mut h = self.layer_forward(0, input, n == 1);
        for l in 1..n {
            h = self.layer_forward(l, h.view(), l + 1 == n);
        }
        h
    }

    pub fn forward_cached(&self, input: Array2<f64>) -> Result<ForwardCache> {
        check_dim(self.input_dim(), input.ncols())?;
        let n = self.params.layers.len();
        let mut activations = Vec::with_capacity(n + 1);
        activations.push(input);
        for l in 0..n {
            let h = self.layer_forward(l, activations[l].view(), l + 1 == n);
            activations.push(h);
        }
        Ok(ForwardCache { activations })
    }

    fn layer_forward(&self, l: usize, x: ArrayView2<f64>, is_output: bool) -> Array2<f64> {
        let layer = &self.params.layers[l];
        let mut z = x.dot(&layer.weight);
        z += &layer.bias;
        if is_output {
            if let OutputActivation::TanhScaled(scale) = &self.spec.output_activation {
                for mut row in z.rows_mut() {
                    for (v, s) in row.iter_mut().zip(scale) {
                        *v = s * v.tanh();
                    }
                }
            }
        } else {
            z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
        }
        z
    }

    /// Reverse-mode pass: gradients of `Σ upstream ⊙ output` with respect to
    /// every parameter and to the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> Result<(ParameterSet, Array2<f64>)> {
        let mut grads = self.params.zeros_like();
        let input_grad = self.backward_impl(cache, upstream, Some(&mut grads))?;
        Ok((grads, input_grad))
    }

    /// Like [`Mlp::backward`] but skips parameter gradients.
    pub fn input_gradient(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> Result<Array2<f64>> {
        self.backward_impl(cache, upstream, None)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        upstream: &Array2<f64>,
        mut grads: Option<&mut ParameterSet>,
    ) -> Result<Array2<f64>> {
        let out = cache.output();
        if upstream.dim() != out.dim() {
            return Err(Error::invalid(format!(
                "upstream gradient shape {:?} does not match output shape {:?}",
                upstream.dim(),
                out.dim()
            )));
        }
        let n = self.params.layers.len();
        let mut delta = upstream.clone();
        if let OutputActivation::TanhScaled(scale) = &self.spec.output_activation {
            Zip::from(delta.rows_mut()).and(out.rows()).for_each(|mut d, y| {
                for ((dv, yv), s) in d.iter_mut().zip(y.iter()).zip(scale) {
                    let t = yv / s;
                    *dv *= s * (1.0 - t * t);
                }
            });
        }
        for l in (0..n).rev() {
            if l + 1 < n {
                Zip::from(&mut delta).and(&cache.activations[l + 1]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let layer = &self.params.layers[l];
            if let Some(g) = grads.as_deref_mut() {
                g.layers[l].weight = cache.activations[l].t().dot(&delta);
                g.layers[l].bias = delta.sum_axis(Axis(0));
            }
            delta = delta.dot(&layer.weight.t());
        }
        Ok(delta)
    }
}
