//! Fully connected networks with hand-written backpropagation and Adam.
//!
//! Batches are row-major: one sample per row. Weights are stored `out x in`.

use std::fmt::Debug;

use ndarray::{Array1, Array2, ArrayView2, Axis, ScalarOperand, Zip};
use num_traits::{Float, NumAssign};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point type a network can run in.
pub trait Real:
    Float + NumAssign + ndarray::LinalgScalar + ScalarOperand + Debug + Default + Send + Sync + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu { slope: LEAKY_SLOPE }
    }

    pub fn apply<F: Real>(&self, x: F) -> F {
        match *self {
            Activation::LeakyRelu { slope } => {
                if x > F::zero() {
                    x
                } else {
                    x * F::of(slope)
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output<F: Real>(&self, y: F) -> F {
        match *self {
            Activation::LeakyRelu { slope } => {
                if y > F::zero() {
                    F::one()
                } else {
                    F::of(slope)
                }
            }
            Activation::Sigmoid => y * (F::one() - y),
            Activation::Identity => F::one(),
        }
    }
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<F: Real>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

/// `ln sigmoid(x)`.
#[inline]
pub fn log_sigmoid<F: Real>(x: F) -> F {
    -softplus(-x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    /// `out x in`
    pub weight: Array2<F>,
    pub bias: Array1<F>,
    pub activation: Activation,
}

impl<F: Real> Layer<F> {
    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// Plain, precision-independent description of one layer, for checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    /// Row-major `outputs x inputs`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Layer<F>>,
}

/// Parameter gradients, one `(weight, bias)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<F> {
    pub layers: Vec<(Array2<F>, Array1<F>)>,
}

impl<F: Real> MlpGrads<F> {
    pub fn zeros_like(net: &Mlp<F>) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.raw_dim())))
                .collect(),
        }
    }

    pub fn iter_values(&self) -> impl Iterator<Item = F> + '_ {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }
}

/// Values saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    /// Input to each layer; `inputs[0]` is the batch itself.
    pub inputs: Vec<Array2<F>>,
    /// Pre-activation of the last layer.
    pub logits: Array2<F>,
    /// Post-activation of the last layer.
    pub output: Array2<F>,
}

impl<F: Real> Mlp<F> {
    /// Uniform `+-sqrt(6 / (fan_in + fan_out))` weights and zero biases.
    ///
    /// `sizes` lists every width from input to output; hidden layers use
    /// `hidden`, the last one `head`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        head: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("sizes", "need at least two positive widths"));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Array2::from_shape_simple_fn((fan_out, fan_in), || F::of(rng.random_range(-limit..limit)));
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                    activation: if i + 1 == n { head } else { hidden },
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer<F>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::Shape(format!("layer {i}: bias length {} != {}", l.bias.len(), l.outputs())));
            }
            if i > 0 && layers[i - 1].outputs() != l.inputs() {
                return Err(Error::Shape(format!(
                    "layer {i}: expects {} inputs, previous layer gives {}",
                    l.inputs(),
                    layers[i - 1].outputs()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Result<ForwardCache<F>> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut pre = cur.dot(&layer.weight.t());
            pre += &layer.bias;
            inputs.push(cur);
            if i == last {
                let mut output = pre.clone();
                let act = layer.activation;
                output.mapv_inplace(|v| act.apply(v));
                return Ok(ForwardCache { inputs, logits: pre, output });
            }
            let act = layer.activation;
            pre.mapv_inplace(|v| act.apply(v));
            cur = pre;
        }
        unreachable!("network has at least one layer")
    }

    /// Activated output only.
    pub fn predict(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        Ok(self.forward(x)?.output)
    }

    fn check_grad(&self, cache: &ForwardCache<F>, grad_logits: &Array2<F>) -> Result<()> {
        if cache.inputs.len() != self.layers.len() || grad_logits.raw_dim() != cache.logits.raw_dim() {
            return Err(Error::Shape(format!(
                "gradient shape {:?} does not match logits {:?}",
                grad_logits.shape(),
                cache.logits.shape()
            )));
        }
        Ok(())
    }

    /// Reverse pass from `dL/dlogits` (the last layer's pre-activation).
    ///
    /// Returns parameter gradients and `dL/dinput`. For an identity head the
    /// logits are the output.
    pub fn backward(&self, cache: &ForwardCache<F>, grad_logits: Array2<F>) -> Result<(MlpGrads<F>, Array2<F>)> {
        self.check_grad(cache, &grad_logits)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_logits;
        for i in (0..self.layers.len()).rev() {
            let gw = delta.t().dot(&cache.inputs[i]);
            let gb = delta.sum_axis(Axis(0));
            grads.push((gw, gb));
            delta = self.propagate(i, delta, cache);
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    /// `dL/dinput` without forming parameter gradients.
    pub fn backward_input(&self, cache: &ForwardCache<F>, grad_logits: Array2<F>) -> Result<Array2<F>> {
        self.check_grad(cache, &grad_logits)?;
        let mut delta = grad_logits;
        for i in (0..self.layers.len()).rev() {
            delta = self.propagate(i, delta, cache);
        }
        Ok(delta)
    }

    /// Moves `delta` from layer `i`'s pre-activation to its input, and through
    /// the previous layer's activation when there is one.
    fn propagate(&self, i: usize, delta: Array2<F>, cache: &ForwardCache<F>) -> Array2<F> {
        let mut back = delta.dot(&self.layers[i].weight);
        if i > 0 {
            let act = self.layers[i - 1].activation;
            Zip::from(&mut back)
                .and(&cache.inputs[i])
                .for_each(|d, &y| *d *= act.derivative_from_output(y));
        }
        back
    }

    pub fn to_params(&self) -> Vec<LayerParams> {
        self.layers
            .iter()
            .map(|l| LayerParams {
                inputs: l.inputs(),
                outputs: l.outputs(),
                activation: l.activation,
                weight: l.weight.iter().map(|v| v.as_f64()).collect(),
                bias: l.bias.iter().map(|v| v.as_f64()).collect(),
            })
            .collect()
    }

    pub fn from_params(params: &[LayerParams]) -> Result<Self> {
        let layers = params
            .iter()
            .map(|p| {
                let weight = Array2::from_shape_vec(
                    (p.outputs, p.inputs),
                    p.weight.iter().map(|&v| F::of(v)).collect(),
                )
                .map_err(|e| Error::Shape(e.to_string()))?;
                if p.bias.len() != p.outputs {
                    return Err(Error::Shape("bias length does not match outputs".into()));
                }
                Ok(Layer {
                    weight,
                    bias: p.bias.iter().map(|&v| F::of(v)).collect(),
                    activation: p.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers)
    }

    pub fn cast<G: Real>(&self) -> Mlp<G> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.mapv(|v| G::of(v.as_f64())),
                    bias: l.bias.mapv(|v| G::of(v.as_f64())),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: MlpGrads<F>,
    pub v: MlpGrads<F>,
}

impl<F: Real> AdamState<F> {
    pub fn new(net: &Mlp<F>, lr: f64, beta1: f64, beta2: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: MlpGrads::zeros_like(net),
            v: MlpGrads::zeros_like(net),
        }
    }

    /// Betas `(0.5, 0.999)`.
    pub fn gan_default(net: &Mlp<F>, lr: f64) -> Self {
        Self::new(net, lr, 0.5, 0.999)
    }
}

pub fn adam_update<F: Real>(net: &mut Mlp<F>, grads: &MlpGrads<F>, state: &mut AdamState<F>) -> Result<()> {
    if grads.layers.len() != net.layers.len() || state.m.layers.len() != net.layers.len() {
        return Err(Error::Shape("gradient layout does not match network".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (F::of(state.beta1), F::of(state.beta2));
    let (c1, c2) = (F::one() - b1, F::one() - b2);
    let bc1 = F::of(1.0 - state.beta1.powi(t));
    let bc2 = F::of(1.0 - state.beta2.powi(t));
    let lr = F::of(state.lr);
    let eps = F::of(state.eps);
    let step = |p: &mut F, g: &F, m: &mut F, v: &mut F| {
        *m = b1 * *m + c1 * *g;
        *v = b2 * *v + c2 * *g * *g;
        let mh = *m / bc1;
        let vh = *v / bc2;
        *p -= lr * mh / (vh.sqrt() + eps);
    };
    for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in net
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.m.layers.iter_mut())
        .zip(state.v.layers.iter_mut())
    {
        if gw.raw_dim() != layer.weight.raw_dim() || gb.raw_dim() != layer.bias.raw_dim() {
            return Err(Error::Shape("gradient shape does not match layer".into()));
        }
        Zip::from(&mut layer.weight).and(gw).and(mw).and(vw).for_each(step);
        Zip::from(&mut layer.bias).and(gb).and(mb).and(vb).for_each(step);
    }
    Ok(())
}

/// Step decay: `base / decay^floor(iteration / interval)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub interval: usize,
}

impl LrSchedule {
    pub fn generator_default() -> Self {
        LrSchedule { base: 1e-4, decay: 1.05, interval: 500 }
    }

    pub fn constant(base: f64) -> Self {
        LrSchedule { base, decay: 1.0, interval: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::ensure_positive("base", self.base)?;
        if self.decay.is_nan() || self.decay < 1.0 || self.interval == 0 {
            return Err(Error::invalid("schedule", "decay must be >= 1 and interval >= 1"));
        }
        Ok(())
    }
}

pub fn lr_at(schedule: &LrSchedule, iteration: usize) -> f64 {
    schedule.base / schedule.decay.powi((iteration / schedule.interval) as i32)
}

/// Largest relative discrepancies found by [`check_gradients`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_param: f64,
    pub max_rel_input: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn max_rel(&self) -> f64 {
        self.max_rel_param.max(self.max_rel_input)
    }
}

/// Relative error with an absolute floor, so that gradients that vanish do
/// not blow up the ratio.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares [`Mlp::backward`] against fourth-order central differences of
/// `L = sum(c * output)` at every parameter and input.
pub fn check_gradients(net: &Mlp<f64>, x: &Array2<f64>, c: &Array2<f64>, h: f64) -> Result<GradCheck> {
    let loss = |n: &Mlp<f64>, x: &Array2<f64>| -> Result<f64> {
        Ok((&n.predict(x.view())? * c).sum())
    };
    let cache = net.forward(x.view())?;
    let head = net.layers[net.layers.len() - 1].activation;
    let mut g = c.clone();
    Zip::from(&mut g)
        .and(&cache.output)
        .for_each(|g, &y| *g *= head.derivative_from_output(y));
    let (grads, gin) = net.backward(&cache, g)?;

    let numeric = numeric_param_grads(net, h, |n| loss(n, x))?;
    let mut out = GradCheck {
        max_rel_param: max_rel_diff(&grads, &numeric),
        max_rel_input: 0.0,
        checked: net.num_params(),
    };
    let mut xp = x.clone();
    for idx in ndarray::indices(x.raw_dim()) {
        let orig = xp[idx];
        let fd = stencil(h, |d| {
            xp[idx] = orig + d;
            loss(net, &xp)
        })?;
        xp[idx] = orig;
        out.max_rel_input = out.max_rel_input.max(rel_err(fd, gin[idx]));
        out.checked += 1;
    }
    Ok(out)
}

/// Central-difference gradient of `loss` with respect to every parameter.
pub fn numeric_param_grads(
    net: &Mlp<f64>,
    h: f64,
    mut loss: impl FnMut(&Mlp<f64>) -> Result<f64>,
) -> Result<MlpGrads<f64>> {
    let mut probe = net.clone();
    let mut grads = MlpGrads::zeros_like(net);
    for li in 0..net.layers.len() {
        let n_w = net.layers[li].weight.len();
        let n_b = net.layers[li].bias.len();
        for k in 0..n_w + n_b {
            let orig = *param_mut(&mut probe, li, k, n_w);
            let fd = stencil(h, |d| {
                *param_mut(&mut probe, li, k, n_w) = orig + d;
                loss(&probe)
            })?;
            *param_mut(&mut probe, li, k, n_w) = orig;
            let (gw, gb) = &mut grads.layers[li];
            if k < n_w {
                gw.as_slice_mut().expect("contiguous")[k] = fd;
            } else {
                gb[k - n_w] = fd;
            }
        }
    }
    Ok(grads)
}

/// Largest [`rel_err`] over matching entries.
pub fn max_rel_diff(a: &MlpGrads<f64>, b: &MlpGrads<f64>) -> f64 {
    a.iter_values()
        .zip(b.iter_values())
        .map(|(x, y)| rel_err(x, y))
        .fold(0.0, f64::max)
}

/// Fourth-order central difference `f'(0)` with step `h`.
fn stencil(h: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let (p1, m1, p2, m2) = (f(h)?, f(-h)?, f(2.0 * h)?, f(-2.0 * h)?);
    Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h))
}

fn param_mut(net: &mut Mlp<f64>, layer: usize, k: usize, n_w: usize) -> &mut f64 {
    let l = &mut net.layers[layer];
    if k < n_w {
        &mut l.weight.as_slice_mut().expect("contiguous")[k]
    } else {
        &mut l.bias[k - n_w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
    }

    fn randomize_biases(net: &mut Mlp<f64>, rng: &mut ChaCha8Rng) {
        for l in &mut net.layers {
            l.bias.mapv_inplace(|_| 0.3 * rng.sample::<f64, _>(StandardNormal));
        }
    }

    #[test]
    fn zero_network_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (head, want) in [(Activation::Identity, 0.0), (Activation::Sigmoid, 0.5)] {
            let mut net = Mlp::<f64>::new(&[3, 4, 1], Activation::leaky(), head, &mut rng).unwrap();
            for l in &mut net.layers {
                l.weight.fill(0.0);
            }
            let y = net.predict(random_batch(&mut rng, 5, 3).view()).unwrap();
            assert!(y.iter().all(|&v| v == want));
        }
    }

    #[test]
    fn single_leaky_layer() {
        let net = Mlp::from_layers(vec![Layer {
            weight: array![[2.0f64]],
            bias: array![1.0],
            activation: Activation::leaky(),
        }])
        .unwrap();
        let c = net.forward(array![[-1.0]].view()).unwrap();
        assert_eq!(c.logits[[0, 0]], -1.0);
        assert_abs_diff_eq!(c.output[[0, 0]], -0.1, epsilon = 1e-15);
    }

    #[test]
    fn identity_network_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::<f64>::new(&[2, 6, 6, 1], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let x = random_batch(&mut rng, 4, 2);
        let f0 = net.predict(Array2::zeros((4, 2)).view()).unwrap();
        let fx = net.predict(x.view()).unwrap();
        let fax = net.predict((&x * 2.5).view()).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(fax[[i, 0]] - f0[[i, 0]], 2.5 * (fx[[i, 0]] - f0[[i, 0]]), epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::<f64>::new(&[3, 4, 1], Activation::leaky(), Activation::Identity, &mut rng).unwrap();
        assert!(net.forward(Array2::zeros((2, 2)).view()).is_err());
        let c = net.forward(Array2::zeros((2, 3)).view()).unwrap();
        assert!(net.backward(&c, Array2::zeros((3, 1))).is_err());
        assert!(Mlp::<f64>::new(&[3], Activation::leaky(), Activation::Identity, &mut rng).is_err());
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::<f32>::new(&[3, 200, 200, 1], Activation::leaky(), Activation::Sigmoid, &mut rng).unwrap();
        let x = random_batch(&mut rng, 100, 3).mapv(|v| v as f32);
        let a = net.predict(x.view()).unwrap();
        let b = net.predict(x.view()).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn init_is_within_glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::<f64>::new(&[2, 200, 200, 1], Activation::leaky(), Activation::Identity, &mut rng).unwrap();
        for l in &net.layers {
            let lim = (6.0 / (l.inputs() + l.outputs()) as f64).sqrt();
            assert!(l.weight.iter().all(|w| w.abs() <= lim));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(net.num_params(), 2 * 200 + 200 + 200 * 200 + 200 + 200 + 1);
    }

    #[test]
    fn three_layer_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::<f64>::new(&[3, 8, 8, 1], Activation::leaky(), Activation::Identity, &mut rng).unwrap();
        randomize_biases(&mut net, &mut rng);
        let x = random_batch(&mut rng, 16, 3);
        let c = random_batch(&mut rng, 16, 1);
        let r = check_gradients(&net, &x, &c, 1e-5).unwrap();
        assert!(r.max_rel() < 1e-6, "{r:?}");
    }

    #[test]
    fn gradients_for_every_activation_and_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let acts = [Activation::leaky(), Activation::Sigmoid, Activation::Identity];
        for depth in 1..=5 {
            for hidden in acts {
                for head in acts {
                    let mut sizes = vec![4];
                    sizes.extend(std::iter::repeat_n(5, depth - 1));
                    sizes.push(2);
                    let mut net = Mlp::<f64>::new(&sizes, hidden, head, &mut rng).unwrap();
                    randomize_biases(&mut net, &mut rng);
                    let x = random_batch(&mut rng, 6, 4);
                    let c = random_batch(&mut rng, 6, 2);
                    // Deep sigmoid stacks have tiny gradients, so rounding in the
                    // differences needs a wider step. Kinks need a narrow one.
                    let h = if hidden == Activation::Sigmoid { 1e-3 } else { 1e-5 };
                    let r = check_gradients(&net, &x, &c, h).unwrap();
                    assert!(r.max_rel() < 1e-6, "depth {depth} {hidden:?} {head:?}: {r:?}");
                }
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::<f64>::new(&[3, 5, 1], Activation::leaky(), Activation::Sigmoid, &mut rng).unwrap();
        let c = net.forward(random_batch(&mut rng, 4, 3).view()).unwrap();
        let (g, gin) = net.backward(&c, Array2::zeros((4, 1))).unwrap();
        assert!(g.iter_values().all(|v| v == 0.0));
        assert!(gin.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_affine_layer_input_gradient_is_adjoint() {
        let net = Mlp::from_layers(vec![Layer {
            weight: array![[1.0f64, -2.0, 0.5], [3.0, 0.25, -1.0]],
            bias: array![0.1, -0.2],
            activation: Activation::Identity,
        }])
        .unwrap();
        let c = net.forward(array![[1.0, 2.0, 3.0]].view()).unwrap();
        let go = array![[0.7, -1.3]];
        let gin = net.backward_input(&c, go.clone()).unwrap();
        assert_eq!(gin, go.dot(&net.layers[0].weight));
        let (_, gin2) = net.backward(&c, go).unwrap();
        assert_eq!(gin, gin2);
    }

    fn scalar_net(value: f64) -> Mlp<f64> {
        Mlp::from_layers(vec![Layer {
            weight: array![[value]],
            bias: array![0.0],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn unit_grad(g: f64) -> MlpGrads<f64> {
        MlpGrads { layers: vec![(array![[g]], array![g])] }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = scalar_net(0.3);
        let mut st = AdamState::gan_default(&net, 1e-4);
        adam_update(&mut net, &unit_grad(1.0), &mut st).unwrap();
        assert_abs_diff_eq!(net.layers[0].weight[[0, 0]] - 0.3, -1e-4, epsilon = 1e-9);
        assert_abs_diff_eq!(net.layers[0].bias[0], -1e-4, epsilon = 1e-9);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut net = scalar_net(0.3);
        let mut st = AdamState::gan_default(&net, 1e-4);
        adam_update(&mut net, &unit_grad(0.0), &mut st).unwrap();
        assert_eq!(net.layers[0].weight[[0, 0]], 0.3);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_constant_gradient_gives_near_constant_steps() {
        let mut net = scalar_net(0.0);
        let mut st = AdamState::gan_default(&net, 1e-3);
        adam_update(&mut net, &unit_grad(0.7), &mut st).unwrap();
        let d1 = net.layers[0].weight[[0, 0]].abs();
        let before = net.layers[0].weight[[0, 0]];
        adam_update(&mut net, &unit_grad(0.7), &mut st).unwrap();
        let d2 = (net.layers[0].weight[[0, 0]] - before).abs();
        assert!(d2 <= d1 * 1.0001);
    }

    #[test]
    fn lr_schedule_values() {
        let s = LrSchedule::generator_default();
        assert_eq!(lr_at(&s, 0), 1e-4);
        assert_eq!(lr_at(&s, 499), 1e-4);
        assert_abs_diff_eq!(lr_at(&s, 1000), 9.0703e-5, epsilon = 1e-9);
        assert!(LrSchedule { base: 1e-4, decay: 0.9, interval: 5 }.validate().is_err());
        assert!(LrSchedule { base: 1e-4, decay: 1.05, interval: 0 }.validate().is_err());
    }

    #[test]
    fn params_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Mlp::<f32>::new(&[3, 7, 1], Activation::leaky(), Activation::Sigmoid, &mut rng).unwrap();
        let back = Mlp::<f32>::from_params(&net.to_params()).unwrap();
        assert_eq!(net, back);
        let json = serde_json_like_roundtrip(&net.to_params());
        assert_eq!(Mlp::<f32>::from_params(&json).unwrap(), net);
    }

    // Decimal text roundtrip through the shortest representation.
    fn serde_json_like_roundtrip(p: &[LayerParams]) -> Vec<LayerParams> {
        p.iter()
            .map(|l| LayerParams {
                weight: l.weight.iter().map(|v| v.to_string().parse().unwrap()).collect(),
                bias: l.bias.iter().map(|v| v.to_string().parse().unwrap()).collect(),
                ..l.clone()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn sigmoid_head_is_in_open_unit_interval(x in -30.0f64..30.0) {
            let y = sigmoid(x);
            prop_assert!(y > 0.0 && y < 1.0);
            prop_assert!((log_sigmoid(x) - y.ln()).abs() < 1e-12);
        }

        #[test]
        fn softplus_is_stable(x in -800.0f64..800.0) {
            let s = softplus(x);
            prop_assert!(s.is_finite() && s >= x.max(0.0));
        }
    }
}
