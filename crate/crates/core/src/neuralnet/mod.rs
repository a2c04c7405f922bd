//! Small feed-forward networks: dense and 1-D convolution layers with ReLU,
//! trained on squared error by backpropagation.
//!
//! Parameters live in one flat vector; each layer stores its weights
//! (row-major, output first) followed by its bias. Convolution weights are
//! laid out `[out][tap][in]`. Sequence activations are kept channels-last
//! internally so a convolution is one strided matrix product per sample.

mod train;

pub use train::{fit_cnn, fit_mlp, train, NetworkModel, Optimizer, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    fn n_weights(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs, .. } => inputs * outputs,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => in_channels * out_channels * kernel,
        }
    }

    fn n_outputs(&self) -> usize {
        match *self {
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Conv1d { out_channels, .. } => out_channels,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_weights() + self.n_outputs()
    }

    fn fan_in(&self) -> usize {
        self.n_weights() / self.n_outputs()
    }

    fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv1d { activation, .. } => activation,
        }
    }
}

/// Flat inputs, or `channels` blocks of `length` samples laid end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputShape {
    Flat(usize),
    Channels { channels: usize, length: usize },
}

impl InputShape {
    pub fn size(&self) -> usize {
        match *self {
            InputShape::Flat(n) => n,
            InputShape::Channels { channels, length } => channels * length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Flat(usize),
    /// channels-last
    Seq { len: usize, ch: usize },
}

impl Shape {
    fn size(self) -> usize {
        match self {
            Shape::Flat(n) => n,
            Shape::Seq { len, ch } => len * ch,
        }
    }
}

/// Layout change applied to a layer's input before it is consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Permute {
    None,
    /// channel-major to channels-last
    ToChannelsLast { ch: usize, len: usize },
    /// channels-last to channel-major (flatten)
    ToChannelMajor { ch: usize, len: usize },
}

#[derive(Debug, Clone, Copy)]
struct Step {
    spec: LayerSpec,
    offset: usize,
    permute: Permute,
    in_size: usize,
    out_shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_shape: InputShape,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<f64>,
}

fn plan(input: InputShape, layers: &[LayerSpec]) -> Result<Vec<Step>> {
    let bad = |m: String| Err(Error::InvalidArgument(m));
    let mut shape = match input {
        InputShape::Flat(n) => Shape::Flat(n),
        InputShape::Channels { channels, length } => Shape::Seq {
            len: length,
            ch: channels,
        },
    };
    if shape.size() == 0 {
        return bad("network input must be non-empty".into());
    }
    let mut first = true;
    let mut offset = 0;
    let mut steps = Vec::with_capacity(layers.len());
    for (i, spec) in layers.iter().enumerate() {
        let (permute, in_size, out_shape) = match (*spec, shape) {
            (LayerSpec::Dense { inputs, outputs, .. }, s) => {
                if inputs != s.size() || outputs == 0 {
                    return bad(format!(
                        "layer {i}: dense expects {inputs} inputs, previous layer gives {}",
                        s.size()
                    ));
                }
                let permute = match s {
                    Shape::Seq { len, ch } if !first => Permute::ToChannelMajor { ch, len },
                    _ => Permute::None,
                };
                (permute, inputs, Shape::Flat(outputs))
            }
            (
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                },
                Shape::Seq { len, ch },
            ) => {
                if kernel % 2 == 0 || in_channels != ch || out_channels == 0 {
                    return bad(format!(
                        "layer {i}: convolution with {in_channels} channels and kernel {kernel} \
                         does not fit input with {ch} channels"
                    ));
                }
                if len < kernel {
                    return bad(format!(
                        "layer {i}: sequence of length {len} is shorter than kernel {kernel}"
                    ));
                }
                let permute = if first {
                    Permute::ToChannelsLast { ch, len }
                } else {
                    Permute::None
                };
                (
                    permute,
                    len * ch,
                    Shape::Seq {
                        len: len - kernel + 1,
                        ch: out_channels,
                    },
                )
            }
            (LayerSpec::Conv1d { .. }, Shape::Flat(_)) => {
                return bad(format!("layer {i}: convolution after a flat layer"));
            }
        };
        steps.push(Step {
            spec: *spec,
            offset,
            permute,
            in_size,
            out_shape,
        });
        offset += spec.n_params();
        shape = out_shape;
        first = false;
    }
    match layers.last() {
        Some(LayerSpec::Dense {
            outputs: 1,
            activation: Activation::Identity,
            ..
        }) => Ok(steps),
        _ => bad("final layer must be dense with one identity output".into()),
    }
}

/// `C ← α A B + β C` over strided slices.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |r: usize, c: usize, rs: usize, cs: usize| (r.max(1) - 1) * rs + (c.max(1) - 1) * cs;
    assert!(k == 0 || last(m, k, rsa, csa) < a.len());
    assert!(k == 0 || last(k, n, rsb, csb) < b.len());
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: every index touched lies inside the slices (checked above) and
    // the strides of C map distinct (i, j) to distinct elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn permute_rows(src: &[f64], dst: &mut [f64], b: usize, p: Permute, inverse: bool) {
    let (ch, len, to_last) = match p {
        Permute::None => {
            dst.copy_from_slice(src);
            return;
        }
        Permute::ToChannelsLast { ch, len } => (ch, len, !inverse),
        Permute::ToChannelMajor { ch, len } => (ch, len, inverse),
    };
    let size = ch * len;
    for s in 0..b {
        let (src, dst) = (&src[s * size..(s + 1) * size], &mut dst[s * size..(s + 1) * size]);
        for c in 0..ch {
            for t in 0..len {
                if to_last {
                    dst[t * ch + c] = src[c * len + t];
                } else {
                    dst[c * len + t] = src[t * ch + c];
                }
            }
        }
    }
}

/// Per-layer buffers from one batch forward pass.
struct Trace {
    /// input of each layer, as consumed
    ins: Vec<Vec<f64>>,
    /// output of each layer, after activation
    outs: Vec<Vec<f64>>,
}

impl Network {
    /// A network with all parameters zero; see [`Network::initialize`].
    pub fn new(input_shape: InputShape, layers: Vec<LayerSpec>) -> Result<Network> {
        plan(input_shape, &layers)?;
        let n = layers.iter().map(LayerSpec::n_params).sum();
        Ok(Network {
            input_shape,
            layers,
            params: vec![0.0; n],
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_size(&self) -> usize {
        self.input_shape.size()
    }

    fn steps(&self) -> Vec<Step> {
        plan(self.input_shape, &self.layers).expect("layer plan validated at construction")
    }

    /// He-uniform weights for ReLU layers, Glorot-uniform for the identity
    /// output; zero biases.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for st in self.steps() {
            let nw = st.spec.n_weights();
            let fan_in = st.spec.fan_in() as f64;
            let limit = match st.spec.activation() {
                Activation::Relu => (6.0 / fan_in).sqrt(),
                Activation::Identity => (6.0 / (fan_in + st.spec.n_outputs() as f64)).sqrt(),
            };
            for w in &mut self.params[st.offset..st.offset + nw] {
                *w = rng.random_range(-limit..=limit);
            }
            for b in &mut self.params[st.offset + nw..st.offset + st.spec.n_params()] {
                *b = 0.0;
            }
        }
    }

    fn check_batch(&self, x: &[f64]) -> Result<usize> {
        let d = self.input_size();
        if x.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len() % d,
            });
        }
        Ok(x.len() / d)
    }

    fn run(&self, x: &[f64], b: usize, steps: &[Step]) -> Trace {
        let mut ins = Vec::with_capacity(steps.len());
        let mut outs: Vec<Vec<f64>> = Vec::with_capacity(steps.len());
        for (i, st) in steps.iter().enumerate() {
            let src: &[f64] = if i == 0 { x } else { &outs[i - 1] };
            let mut input = vec![0.0; b * st.in_size];
            permute_rows(src, &mut input, b, st.permute, false);
            let p = &self.params[st.offset..st.offset + st.spec.n_params()];
            let (w, bias) = p.split_at(st.spec.n_weights());
            let mut out = vec![0.0; b * st.out_shape.size()];
            match st.spec {
                LayerSpec::Dense { inputs, outputs, .. } => {
                    gemm(b, inputs, outputs, 1.0, &input, (inputs, 1), w, (1, inputs), 0.0, &mut out, (outputs, 1));
                }
                LayerSpec::Conv1d {
                    in_channels: cin,
                    out_channels: cout,
                    kernel,
                    ..
                } => {
                    let lin = st.in_size / cin;
                    let lout = lin - kernel + 1;
                    for s in 0..b {
                        gemm(
                            lout,
                            kernel * cin,
                            cout,
                            1.0,
                            &input[s * lin * cin..(s + 1) * lin * cin],
                            (cin, 1),
                            w,
                            (1, kernel * cin),
                            0.0,
                            &mut out[s * lout * cout..(s + 1) * lout * cout],
                            (cout, 1),
                        );
                    }
                }
            }
            let relu = st.spec.activation() == Activation::Relu;
            for row in out.chunks_mut(bias.len()) {
                for (v, bb) in row.iter_mut().zip(bias) {
                    *v += bb;
                    if relu && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            ins.push(input);
            outs.push(out);
        }
        Trace { ins, outs }
    }

    /// Outputs for a batch of rows laid end to end.
    pub fn forward_batch(&self, x: &[f64]) -> Result<Vec<f64>> {
        let b = self.check_batch(x)?;
        if b == 0 {
            return Ok(Vec::new());
        }
        let steps = self.steps();
        Ok(self.run(x, b, &steps).outs.pop().unwrap_or_default())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_size() {
            return Err(Error::DimensionMismatch {
                expected: self.input_size(),
                got: x.len(),
            });
        }
        Ok(self.forward_batch(x)?[0])
    }

    /// Adds to `grad` the gradient of `scale · Σ ½(f(x_s) − y_s)²` and returns
    /// the batch predictions.
    pub fn accumulate_gradient(&self, x: &[f64], y: &[f64], scale: f64, grad: &mut [f64]) -> Result<Vec<f64>> {
        let b = self.check_batch(x)?;
        if y.len() != b {
            return Err(Error::DimensionMismatch { expected: b, got: y.len() });
        }
        if grad.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                got: grad.len(),
            });
        }
        if b == 0 {
            return Ok(Vec::new());
        }
        let steps = self.steps();
        let trace = self.run(x, b, &steps);
        let pred = trace.outs.last().cloned().unwrap_or_default();
        let mut d_out: Vec<f64> = pred.iter().zip(y).map(|(p, t)| scale * (p - t)).collect();
        for (i, st) in steps.iter().enumerate().rev() {
            let out = &trace.outs[i];
            if st.spec.activation() == Activation::Relu {
                for (d, o) in d_out.iter_mut().zip(out) {
                    if *o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let dz = d_out;
            let input = &trace.ins[i];
            let nw = st.spec.n_weights();
            let w = &self.params[st.offset..st.offset + nw];
            let (gw, gb) = grad[st.offset..st.offset + st.spec.n_params()].split_at_mut(nw);
            for row in dz.chunks(gb.len()) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            let mut d_in = if i > 0 { vec![0.0; b * st.in_size] } else { Vec::new() };
            match st.spec {
                LayerSpec::Dense { inputs, outputs, .. } => {
                    gemm(outputs, b, inputs, 1.0, &dz, (1, outputs), input, (inputs, 1), 1.0, gw, (inputs, 1));
                    if i > 0 {
                        gemm(b, outputs, inputs, 1.0, &dz, (outputs, 1), w, (inputs, 1), 0.0, &mut d_in, (inputs, 1));
                    }
                }
                LayerSpec::Conv1d {
                    in_channels: cin,
                    out_channels: cout,
                    kernel,
                    ..
                } => {
                    let lin = st.in_size / cin;
                    let lout = lin - kernel + 1;
                    let kc = kernel * cin;
                    for s in 0..b {
                        let dz_s = &dz[s * lout * cout..(s + 1) * lout * cout];
                        let in_s = &input[s * lin * cin..(s + 1) * lin * cin];
                        gemm(cout, lout, kc, 1.0, dz_s, (1, cout), in_s, (cin, 1), 1.0, gw, (kc, 1));
                        if i > 0 {
                            let d_s = &mut d_in[s * lin * cin..(s + 1) * lin * cin];
                            for k in 0..kernel {
                                gemm(
                                    lout,
                                    cout,
                                    cin,
                                    1.0,
                                    dz_s,
                                    (cout, 1),
                                    &w[k * cin..],
                                    (kc, 1),
                                    1.0,
                                    &mut d_s[k * cin..],
                                    (cin, 1),
                                );
                            }
                        }
                    }
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; d_in.len()];
                permute_rows(&d_in, &mut prev, b, st.permute, true);
                d_out = prev;
            } else {
                d_out = Vec::new();
            }
        }
        Ok(pred)
    }

    /// Gradient of `½(f(x) − y)²` for one sample.
    pub fn backward(&self, x: &[f64], y: f64) -> Result<Vec<f64>> {
        if x.len() != self.input_size() {
            return Err(Error::DimensionMismatch {
                expected: self.input_size(),
                got: x.len(),
            });
        }
        let mut g = vec![0.0; self.n_params()];
        self.accumulate_gradient(x, &[y], 1.0, &mut g)?;
        Ok(g)
    }

    /// Output lengths of the convolution stack, starting with the input length.
    pub fn sequence_lengths(&self) -> Vec<usize> {
        let mut v = Vec::new();
        if let InputShape::Channels { length, .. } = self.input_shape {
            v.push(length);
        }
        for st in self.steps() {
            if let Shape::Seq { len, .. } = st.out_shape {
                v.push(len);
            }
        }
        v
    }
}

pub const MLP_HIDDEN_LAYERS: usize = 7;
pub const MLP_WIDTH: usize = 100;
pub const CNN_FILTERS: usize = 128;
pub const CNN_CONV_LAYERS: usize = 3;
pub const CNN_KERNEL: usize = 3;
pub const CNN_DENSE: [usize; 2] = [40, 20];

fn dense(inputs: usize, outputs: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense {
        inputs,
        outputs,
        activation,
    }
}

/// `2W → 7 × (100, ReLU) → 1`.
pub fn build_mlp(window_hours: usize) -> Result<Network> {
    if window_hours == 0 {
        return Err(Error::InvalidArgument("window must be at least one hour".into()));
    }
    let mut layers = Vec::new();
    let mut width = 2 * window_hours;
    for _ in 0..MLP_HIDDEN_LAYERS {
        layers.push(dense(width, MLP_WIDTH, Activation::Relu));
        width = MLP_WIDTH;
    }
    layers.push(dense(width, 1, Activation::Identity));
    Network::new(InputShape::Flat(2 * window_hours), layers)
}

/// `(2, W) → 3 × conv(128, k=3, valid, ReLU) → flatten → 40 → 20 → 1`.
pub fn build_cnn(window_hours: usize) -> Result<Network> {
    let min = CNN_CONV_LAYERS * (CNN_KERNEL - 1) + 1;
    if window_hours < min {
        return Err(Error::InvalidArgument(format!(
            "convolutional network needs a window of at least {min} hours, got {window_hours}"
        )));
    }
    let mut layers = Vec::new();
    let mut ch = 2;
    for _ in 0..CNN_CONV_LAYERS {
        layers.push(LayerSpec::Conv1d {
            in_channels: ch,
            out_channels: CNN_FILTERS,
            kernel: CNN_KERNEL,
            activation: Activation::Relu,
        });
        ch = CNN_FILTERS;
    }
    let len = window_hours - CNN_CONV_LAYERS * (CNN_KERNEL - 1);
    let mut width = len * CNN_FILTERS;
    for &h in &CNN_DENSE {
        layers.push(dense(width, h, Activation::Relu));
        width = h;
    }
    layers.push(dense(width, 1, Activation::Identity));
    Network::new(
        InputShape::Channels {
            channels: 2,
            length: window_hours,
        },
        layers,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_gradient;

    fn single_neuron() -> Network {
        let mut n = Network::new(InputShape::Flat(2), vec![dense(2, 1, Activation::Identity)]).unwrap();
        n.params = vec![1.0, -1.0, 0.5];
        n
    }

    #[test]
    fn dense_neuron_arithmetic() {
        // ReLU neuron followed by a unit identity read-out
        let mut n = Network::new(
            InputShape::Flat(2),
            vec![dense(2, 1, Activation::Relu), dense(1, 1, Activation::Identity)],
        )
        .unwrap();
        n.params = vec![1.0, -1.0, 0.5, 1.0, 0.0];
        assert_eq!(n.forward(&[2.0, 1.0]).unwrap(), 1.5);
        assert_eq!(n.forward(&[0.0, 2.0]).unwrap(), 0.0);
        assert_eq!(single_neuron().forward(&[0.0, 2.0]).unwrap(), -1.5);
        assert!(n.forward(&[1.0]).is_err());
    }

    #[test]
    fn identity_kernel_passes_interior() {
        let layers = vec![
            LayerSpec::Conv1d {
                in_channels: 1,
                out_channels: 1,
                kernel: 3,
                activation: Activation::Relu,
            },
            dense(3, 1, Activation::Identity),
        ];
        let mut n = Network::new(InputShape::Channels { channels: 1, length: 5 }, layers).unwrap();
        n.params = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let x = [0.5, 2.0, 3.0, 7.0, 1.0];
        let steps = n.steps();
        let t = n.run(&x, 1, &steps);
        assert_eq!(t.outs[0], vec![2.0, 3.0, 7.0]);
        assert_eq!(n.sequence_lengths(), vec![5, 3]);
    }

    #[test]
    fn zero_weight_linear_gradient() {
        let mut n = Network::new(InputShape::Flat(3), vec![dense(3, 1, Activation::Identity)]).unwrap();
        n.params = vec![0.0, 0.0, 0.0, 0.25];
        let g = n.backward(&[1.0, 2.0, -1.0], 2.0).unwrap();
        assert!((g[3] - (0.25 - 2.0)).abs() < 1e-15);
        assert_eq!(&g[..3], &[-1.75, -3.5, 1.75]);
    }

    fn toy_cnn(seed: u64) -> Network {
        let layers = vec![
            LayerSpec::Conv1d {
                in_channels: 2,
                out_channels: 3,
                kernel: 3,
                activation: Activation::Relu,
            },
            LayerSpec::Conv1d {
                in_channels: 3,
                out_channels: 2,
                kernel: 3,
                activation: Activation::Relu,
            },
            dense(4, 3, Activation::Relu),
            dense(3, 1, Activation::Identity),
        ];
        let mut n = Network::new(InputShape::Channels { channels: 2, length: 6 }, layers).unwrap();
        n.initialize(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        for p in &mut n.params {
            *p += rng.random_range(-0.1..0.1);
        }
        n
    }

    fn check_gradients(n: &Network, x: &[f64], y: &[f64]) {
        let b = y.len();
        let mut g = vec![0.0; n.n_params()];
        n.accumulate_gradient(x, y, 1.0 / b as f64, &mut g).unwrap();
        let mut probe = n.clone();
        let mut loss = |p: &[f64]| {
            probe.params.copy_from_slice(p);
            let out = probe.forward_batch(x).unwrap();
            out.iter().zip(y).map(|(o, t)| 0.5 * (o - t) * (o - t)).sum::<f64>() / b as f64
        };
        let fd = finite_diff_gradient(&mut loss, &n.params, 1e-5).unwrap();
        for (i, (a, f)) in g.iter().zip(&fd).enumerate() {
            let tol = 1e-4 * a.abs().max(f.abs()).max(1e-3);
            assert!((a - f).abs() <= tol, "param {i}: analytic {a} vs numeric {f}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cnn = toy_cnn(11);
        let x: Vec<f64> = (0..5 * 12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        check_gradients(&cnn, &x, &y);

        let mut mlp = Network::new(
            InputShape::Flat(5),
            vec![dense(5, 4, Activation::Relu), dense(4, 3, Activation::Relu), dense(3, 1, Activation::Identity)],
        )
        .unwrap();
        mlp.initialize(5);
        let x: Vec<f64> = (0..5 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        check_gradients(&mlp, &x, &[0.3, -0.2, 1.0, 0.5, -0.8]);
    }

    #[test]
    fn dead_unit_has_zero_incoming_gradient() {
        let mut n = Network::new(
            InputShape::Flat(2),
            vec![dense(2, 2, Activation::Relu), dense(2, 1, Activation::Identity)],
        )
        .unwrap();
        // unit 1 has a large negative bias and never fires
        n.params = vec![0.5, 0.3, 0.2, -0.4, 0.1, -10.0, 1.0, 2.0, 0.0];
        let x = [1.0, 0.5, -0.3, 0.8, 0.2, 0.2];
        let mut g = vec![0.0; n.n_params()];
        n.accumulate_gradient(&x, &[1.0, 0.0, 2.0], 1.0 / 3.0, &mut g).unwrap();
        assert_eq!(&g[2..4], &[0.0, 0.0]);
        assert_eq!(g[5], 0.0);
        assert!(g[0] != 0.0);
    }

    #[test]
    fn positive_scale_covariance() {
        let mut n = build_mlp(3).unwrap();
        n.initialize(9);
        for st in n.steps() {
            let nw = st.spec.n_weights();
            n.params[st.offset + nw..st.offset + st.spec.n_params()].fill(0.0);
        }
        let x = [0.3, -0.7, 1.1, 0.2, 0.9, -0.4];
        let base = n.forward(&x).unwrap();
        for c in [0.5, 2.0, 7.5] {
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let out = n.forward(&xs).unwrap();
            assert!((out - c * base).abs() <= 1e-12 * (1.0 + out.abs()));
        }
    }

    #[test]
    fn architectures() {
        let mlp = build_mlp(24).unwrap();
        assert_eq!(mlp.n_params(), 65_601);
        assert_eq!(48 * 100 + 100 + 6 * (100 * 100 + 100) + 100 + 1, 65_601);
        let cnn = build_cnn(24).unwrap();
        assert_eq!(cnn.sequence_lengths(), vec![24, 22, 20, 18]);
        assert!(build_cnn(6).is_err());
        assert!(build_cnn(7).is_ok());
    }

    #[test]
    fn batch_matches_rows() {
        let mut n = build_cnn(8).unwrap();
        n.initialize(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..5 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = n.forward_batch(&x).unwrap();
        for (s, v) in batch.iter().enumerate() {
            assert_eq!(*v, n.forward(&x[s * 16..(s + 1) * 16]).unwrap());
        }
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(Network::new(InputShape::Flat(3), vec![dense(3, 2, Activation::Relu)]).is_err());
        assert!(Network::new(InputShape::Flat(3), vec![dense(4, 1, Activation::Identity)]).is_err());
        let conv_on_flat = LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            activation: Activation::Relu,
        };
        assert!(Network::new(InputShape::Flat(5), vec![conv_on_flat, dense(3, 1, Activation::Identity)]).is_err());
        let even = LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel: 2,
            activation: Activation::Relu,
        };
        assert!(Network::new(InputShape::Channels { channels: 1, length: 5 }, vec![even, dense(4, 1, Activation::Identity)]).is_err());
    }
}
