use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetArch, CHANNELS, FILTERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Policy,
    Value,
}

/// Location of one named parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dims {
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    z: usize,
    h1: usize,
    h2: usize,
    out: usize,
}

// Registry order: conv1, conv2, fc1, fc2, out; weight then bias.
const CONV1_W: usize = 0;
const CONV1_B: usize = 1;
const CONV2_W: usize = 2;
const CONV2_B: usize = 3;
const FC1_W: usize = 4;
const FC1_B: usize = 5;
const FC2_W: usize = 6;
const FC2_B: usize = 7;
const OUT_W: usize = 8;
const OUT_B: usize = 9;

/// Two convolutions (stride 1 then 2, ReLU), two tanh layers and a linear
/// output, with all parameters in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: NetArch,
    head: Head,
    dims: Dims,
    specs: Vec<ParamSpec>,
    params: Vec<f64>,
}

/// Activations of a batched forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    input: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Row-major `batch × out` network outputs.
    pub fn output(&self) -> &[f64] {
        &self.out
    }

    /// Which ReLU units are active, first convolution then second.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.a1.iter().chain(&self.a2).map(|v| *v > 0.0).collect()
    }
}

impl Network {
    pub fn zeros(arch: NetArch, head: Head) -> Self {
        let (h, w) = (arch.m_max, arch.n_max);
        let (h1, h2, out) = arch.head_dims(head);
        let dims = Dims {
            h,
            w,
            ho: h.div_ceil(2),
            wo: w.div_ceil(2),
            z: arch.conv_out(),
            h1,
            h2,
            out,
        };
        let shapes: [(&str, Vec<usize>); 10] = [
            ("conv1.weight", vec![FILTERS, CHANNELS, 3, 3]),
            ("conv1.bias", vec![FILTERS]),
            ("conv2.weight", vec![FILTERS, FILTERS, 3, 3]),
            ("conv2.bias", vec![FILTERS]),
            ("fc1.weight", vec![h1, dims.z]),
            ("fc1.bias", vec![h1]),
            ("fc2.weight", vec![h2, h1]),
            ("fc2.bias", vec![h2]),
            ("out.weight", vec![out, h2]),
            ("out.bias", vec![out]),
        ];
        let mut offset = 0;
        let specs: Vec<ParamSpec> = shapes
            .into_iter()
            .map(|(name, shape)| {
                let spec = ParamSpec { name: name.to_string(), shape, offset };
                offset += spec.len();
                spec
            })
            .collect();
        Self { arch, head, dims, specs, params: vec![0.0; offset] }
    }

    /// Fan-in scaled uniform initialization: He for ReLU convolutions,
    /// LeCun for tanh and linear layers, policy output scaled by 0.01 so the
    /// initial distribution is nearly uniform. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(arch: NetArch, head: Head, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch, head);
        let d = net.dims;
        let layers = [
            (CONV1_W, CHANNELS * 9, 6.0, 1.0),
            (CONV2_W, FILTERS * 9, 6.0, 1.0),
            (FC1_W, d.z, 3.0, 1.0),
            (FC2_W, d.h1, 3.0, 1.0),
            (OUT_W, d.h2, 3.0, if head == Head::Policy { 0.01 } else { 1.0 }),
        ];
        for (idx, fan_in, numerator, scale) in layers {
            let limit = scale * (numerator / fan_in as f64).sqrt();
            let range = net.specs[idx].range();
            for p in &mut net.params[range] {
                *p = rng.random_range(-limit..=limit);
            }
        }
        net
    }

    pub fn arch(&self) -> NetArch {
        self.arch
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.dims.out
    }

    pub fn tensor(&self, spec: &ParamSpec) -> &[f64] {
        &self.params[spec.range()]
    }

    pub fn tensor_mut(&mut self, spec: &ParamSpec) -> &mut [f64] {
        &mut self.params[spec.range()]
    }

    fn p(&self, idx: usize) -> &[f64] {
        &self.params[self.specs[idx].range()]
    }

    /// Forward pass over `batch` inputs laid out back to back.
    pub fn forward(&self, input: &[f64], batch: usize) -> ForwardCache {
        let d = self.dims;
        assert_eq!(input.len(), batch * self.input_len(), "input length does not match batch");
        let a1_len = FILTERS * d.h * d.w;
        let mut a1 = vec![0.0; batch * a1_len];
        let mut a2 = vec![0.0; batch * d.z];
        let in_len = self.input_len();
        for b in 0..batch {
            let x = &input[b * in_len..(b + 1) * in_len];
            let y1 = &mut a1[b * a1_len..(b + 1) * a1_len];
            conv_forward(x, CHANNELS, d.h, d.w, self.p(CONV1_W), self.p(CONV1_B), 1, y1, d.h, d.w);
            conv_forward(y1, FILTERS, d.h, d.w, self.p(CONV2_W), self.p(CONV2_B), 2, &mut a2[b * d.z..(b + 1) * d.z], d.ho, d.wo);
        }
        let mut h1 = dense_forward(&a2, batch, d.z, self.p(FC1_W), self.p(FC1_B), d.h1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        let mut h2 = dense_forward(&h1, batch, d.h1, self.p(FC2_W), self.p(FC2_B), d.h2);
        h2.iter_mut().for_each(|v| *v = v.tanh());
        let out = dense_forward(&h2, batch, d.h2, self.p(OUT_W), self.p(OUT_B), d.out);
        ForwardCache { batch, input: input.to_vec(), a1, a2, h1, h2, out }
    }

    /// Accumulate into `grads` the gradient of `Σ d_out · output` with
    /// respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grads: &mut [f64]) {
        let d = self.dims;
        let batch = cache.batch;
        assert_eq!(d_out.len(), batch * d.out);
        assert_eq!(grads.len(), self.params.len());
        let s = |idx: usize| self.specs[idx].range();

        let mut d_h2 = dense_backward(d_out, &cache.h2, batch, d.h2, d.out, self.p(OUT_W), grads, s(OUT_W), s(OUT_B));
        tanh_backward(&mut d_h2, &cache.h2);
        let mut d_h1 = dense_backward(&d_h2, &cache.h1, batch, d.h1, d.h2, self.p(FC2_W), grads, s(FC2_W), s(FC2_B));
        tanh_backward(&mut d_h1, &cache.h1);
        let mut d_a2 = dense_backward(&d_h1, &cache.a2, batch, d.z, d.h1, self.p(FC1_W), grads, s(FC1_W), s(FC1_B));
        relu_backward(&mut d_a2, &cache.a2);

        let a1_len = FILTERS * d.h * d.w;
        let in_len = self.input_len();
        let mut d_a1 = vec![0.0; a1_len];
        let (w2, w1) = (self.p(CONV2_W).to_vec(), self.p(CONV1_W).to_vec());
        for b in 0..batch {
            let a1 = &cache.a1[b * a1_len..(b + 1) * a1_len];
            d_a1.iter_mut().for_each(|v| *v = 0.0);
            {
                let (gw, gb) = split_pair(grads, s(CONV2_W), s(CONV2_B));
                conv_backward(a1, FILTERS, d.h, d.w, &w2, 2, &d_a2[b * d.z..(b + 1) * d.z], d.ho, d.wo, gw, gb, Some(&mut d_a1));
            }
            relu_backward(&mut d_a1, a1);
            let (gw, gb) = split_pair(grads, s(CONV1_W), s(CONV1_B));
            conv_backward(&cache.input[b * in_len..(b + 1) * in_len], CHANNELS, d.h, d.w, &w1, 1, &d_a1, d.h, d.w, gw, gb, None);
        }
    }
}

/// Mutable views of two disjoint ranges, the first preceding the second.
fn split_pair(v: &mut [f64], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = v.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

/// 3×3 convolution with padding 1 followed by ReLU. Weights are
/// `[out][in][3][3]`, activations `[channel][row][col]`.
#[allow(clippy::too_many_arguments)]
fn conv_forward(x: &[f64], c_in: usize, h: usize, w: usize, weight: &[f64], bias: &[f64], stride: usize, y: &mut [f64], ho: usize, wo: usize) {
    for o in 0..FILTERS {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = bias[o];
                for c in 0..c_in {
                    let wk = &weight[(o * c_in + c) * 9..(o * c_in + c + 1) * 9];
                    let xc = &x[c * h * w..(c + 1) * h * w];
                    for ky in 0..3 {
                        let iy = oy * stride + ky;
                        if iy == 0 || iy > h {
                            continue;
                        }
                        let row = &xc[(iy - 1) * w..iy * w];
                        for kx in 0..3 {
                            let ix = ox * stride + kx;
                            if ix == 0 || ix > w {
                                continue;
                            }
                            acc += wk[ky * 3 + kx] * row[ix - 1];
                        }
                    }
                }
                y[(o * ho + oy) * wo + ox] = acc.max(0.0);
            }
        }
    }
}

/// Gradients of a convolution given `dy` already gated by the ReLU.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    stride: usize,
    dy: &[f64],
    ho: usize,
    wo: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    for o in 0..FILTERS {
        for oy in 0..ho {
            for ox in 0..wo {
                let g = dy[(o * ho + oy) * wo + ox];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                for c in 0..c_in {
                    let base = (o * c_in + c) * 9;
                    for ky in 0..3 {
                        let iy = oy * stride + ky;
                        if iy == 0 || iy > h {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = ox * stride + kx;
                            if ix == 0 || ix > w {
                                continue;
                            }
                            let xi = (c * h + iy - 1) * w + ix - 1;
                            gw[base + ky * 3 + kx] += g * x[xi];
                            if let Some(dx) = dx.as_deref_mut() {
                                dx[xi] += g * weight[base + ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `Y = X Wᵀ + b` with `W` stored `[out][in]`.
fn dense_forward(x: &[f64], batch: usize, n_in: usize, weight: &[f64], bias: &[f64], n_out: usize) -> Vec<f64> {
    if batch == 1 {
        // a single row gains nothing from packing W for a GEMM kernel
        return weight.chunks_exact(n_in).zip(bias).map(|(w, b)| b + dot(w, x)).collect();
    }
    let mut y = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    // SAFETY: slice lengths match the strides given.
    unsafe {
        matrixmultiply::dgemm(
            batch,
            n_in,
            n_out,
            1.0,
            x.as_ptr(),
            n_in as isize,
            1,
            weight.as_ptr(),
            1,
            n_in as isize,
            1.0,
            y.as_mut_ptr(),
            n_out as isize,
            1,
        );
    }
    y
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Accumulate weight and bias gradients and return the input gradient.
#[allow(clippy::too_many_arguments)]
fn dense_backward(
    dy: &[f64],
    x: &[f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
    weight: &[f64],
    grads: &mut [f64],
    w_range: std::ops::Range<usize>,
    b_range: std::ops::Range<usize>,
) -> Vec<f64> {
    let (gw, gb) = split_pair(grads, w_range, b_range);
    for row in dy.chunks_exact(n_out) {
        for (g, d) in gb.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dx = vec![0.0; batch * n_in];
    // SAFETY: slice lengths match the strides given.
    unsafe {
        // dW += dYᵀ X
        matrixmultiply::dgemm(
            n_out,
            batch,
            n_in,
            1.0,
            dy.as_ptr(),
            1,
            n_out as isize,
            x.as_ptr(),
            n_in as isize,
            1,
            1.0,
            gw.as_mut_ptr(),
            n_in as isize,
            1,
        );
        // dX = dY W
        matrixmultiply::dgemm(
            batch,
            n_out,
            n_in,
            1.0,
            dy.as_ptr(),
            n_out as isize,
            1,
            weight.as_ptr(),
            n_in as isize,
            1,
            0.0,
            dx.as_mut_ptr(),
            n_in as isize,
            1,
        );
    }
    dx
}

fn tanh_backward(d: &mut [f64], y: &[f64]) {
    for (g, y) in d.iter_mut().zip(y) {
        *g *= 1.0 - y * y;
    }
}

fn relu_backward(d: &mut [f64], y: &[f64]) {
    for (g, y) in d.iter_mut().zip(y) {
        if *y <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn random_input(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Purpose::Instance, 0);
        (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let arch = NetArch::new(20, 12).unwrap();
        for head in [Head::Policy, Head::Value] {
            let net = Network::zeros(arch, head);
            let c = net.forward(&random_input(arch.input_len(), 1), 1);
            assert!(c.output().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn batched_forward_matches_single() {
        let arch = NetArch::new(5, 4).unwrap();
        let mut rng = stream(2, Purpose::Policy, 0);
        let net = Network::new(arch, Head::Policy, &mut rng);
        let x = random_input(3 * arch.input_len(), 2);
        let all = net.forward(&x, 3);
        for b in 0..3 {
            let one = net.forward(&x[b * arch.input_len()..(b + 1) * arch.input_len()], 1);
            for (p, q) in one.output().iter().zip(&all.output()[b * 20..(b + 1) * 20]) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn strided_conv_shape_for_odd_sizes() {
        let arch = NetArch::new(5, 3).unwrap();
        let net = Network::zeros(arch, Head::Value);
        assert_eq!(net.dims.ho, 3);
        assert_eq!(net.dims.wo, 2);
        assert_eq!(net.specs[FC1_W].shape, vec![net.dims.h1, 48]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let arch = NetArch::new(4, 3).unwrap();
        let mut rng = stream(3, Purpose::Policy, 0);
        let net = Network::new(arch, Head::Policy, &mut rng);
        let c = net.forward(&random_input(arch.input_len(), 3), 1);
        let mut g = vec![0.0; net.num_params()];
        net.backward(&c, &[0.0; 12], &mut g);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dead_relu_units_get_no_gradient() {
        let arch = NetArch::new(4, 3).unwrap();
        let mut rng = stream(4, Purpose::Policy, 0);
        let mut net = Network::new(arch, Head::Value, &mut rng);
        // Strongly negative conv1 bias kills every first-layer unit.
        let b = net.specs[CONV1_B].clone();
        net.tensor_mut(&b).iter_mut().for_each(|v| *v = -100.0);
        let c = net.forward(&random_input(arch.input_len(), 4), 1);
        let mut g = vec![0.0; net.num_params()];
        net.backward(&c, &[1.0], &mut g);
        for idx in [CONV1_W, CONV1_B, CONV2_W] {
            assert!(g[net.specs[idx].range()].iter().all(|v| *v == 0.0), "{}", net.specs[idx].name);
        }
    }

    #[test]
    fn value_output_finite_on_extreme_inputs() {
        let arch = NetArch::new(20, 12).unwrap();
        let mut rng = stream(5, Purpose::Policy, 0);
        let net = Network::new(arch, Head::Value, &mut rng);
        for fill in [-1.0, 1.0] {
            let c = net.forward(&vec![fill; arch.input_len()], 1);
            assert!(c.output()[0].is_finite());
        }
    }
}
