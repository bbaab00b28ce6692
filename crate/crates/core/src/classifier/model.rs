use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::{Error, Result};

/// Side length of the square network input.
pub const INPUT_SIZE: usize = 64;
pub const INPUT_CHANNELS: usize = 3;
pub const INPUT_LEN: usize = INPUT_CHANNELS * INPUT_SIZE * INPUT_SIZE;
pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Three conv blocks, dense 64.
    Small,
    /// Four conv blocks, dense 128.
    Medium,
}

impl Variant {
    pub fn id(self) -> u8 {
        match self {
            Self::Small => 0,
            Self::Medium => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Self::Small),
            1 => Some(Self::Medium),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Medium => "medium",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Self::Small),
            "medium" => Ok(Self::Medium),
            _ => Err(Error::InvalidParameter(format!(
                "unknown model variant {s:?}"
            ))),
        }
    }

    fn channels(self) -> &'static [usize] {
        match self {
            Self::Small => &[3, 8, 16, 32],
            Self::Medium => &[3, 8, 16, 32, 64],
        }
    }

    fn hidden(self) -> usize {
        match self {
            Self::Small => 64,
            Self::Medium => 128,
        }
    }
}

/// One stage of the network. Offsets index the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// 3×3 convolution, padding 1, on a `size × size` map.
    Conv {
        cin: usize,
        cout: usize,
        size: usize,
        w: usize,
        b: usize,
    },
    Relu,
    /// 2×2 max pooling, stride 2, on `channels × size × size`.
    Pool {
        channels: usize,
        size: usize,
    },
    Dense {
        nin: usize,
        nout: usize,
        w: usize,
        b: usize,
    },
}

impl Layer {
    /// Parameter tensor shapes (weights, bias) of trainable layers.
    pub fn shapes(&self) -> Option<(Vec<usize>, usize)> {
        match *self {
            Layer::Conv { cin, cout, .. } => Some((vec![cout, cin, 3, 3], cout)),
            Layer::Dense { nin, nout, .. } => Some((vec![nout, nin], nout)),
            _ => None,
        }
    }
}

fn build_layers(variant: Variant) -> (Vec<Layer>, usize) {
    let mut layers = Vec::new();
    let mut off = 0;
    let mut size = INPUT_SIZE;
    for pair in variant.channels().windows(2) {
        let (cin, cout) = (pair[0], pair[1]);
        let w = off;
        let b = w + cout * cin * 9;
        off = b + cout;
        layers.push(Layer::Conv {
            cin,
            cout,
            size,
            w,
            b,
        });
        layers.push(Layer::Relu);
        layers.push(Layer::Pool {
            channels: cout,
            size,
        });
        size /= 2;
    }
    let flat = variant.channels().last().unwrap() * size * size;
    let hidden = variant.hidden();
    for (nin, nout, relu) in [(flat, hidden, true), (hidden, N_CLASSES, false)] {
        let w = off;
        let b = w + nout * nin;
        off = b + nout;
        layers.push(Layer::Dense { nin, nout, w, b });
        if relu {
            layers.push(Layer::Relu);
        }
    }
    (layers, off)
}

/// Small convolutional classifier over {good, medium, bad}.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<S: Scalar> {
    pub variant: Variant,
    layers: Vec<Layer>,
    /// All weights and biases, in layer order.
    pub params: Vec<S>,
    /// Treat every ReLU as the identity (for gradient checks of a
    /// piecewise-linear network).
    pub bypass_relu: bool,
}

/// Activations recorded during a forward pass, needed for backprop.
pub struct Trace<S> {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Vec<S>>,
    /// Winning input index of every pooled output, per pool layer.
    pool_argmax: Vec<Vec<u32>>,
}

impl<S: Scalar> Trace<S> {
    pub fn logits(&self) -> &[S] {
        self.acts.last().unwrap()
    }
}

impl<S: Scalar> CnnModel<S> {
    /// He-initialized weights (zero-mean normal, std `√(2/fan_in)`), zero
    /// biases.
    pub fn new(variant: Variant, rng: &mut impl Rng) -> Self {
        let (layers, n) = build_layers(variant);
        let mut params = vec![S::ZERO; n];
        for layer in &layers {
            let (fan_in, w, count) = match *layer {
                Layer::Conv { cin, cout, w, .. } => (cin * 9, w, cout * cin * 9),
                Layer::Dense { nin, nout, w, .. } => (nin, w, nout * nin),
                _ => continue,
            };
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for p in &mut params[w..w + count] {
                *p = S::from_f64(dist.sample(rng));
            }
        }
        Self {
            variant,
            layers,
            params,
            bypass_relu: false,
        }
    }

    /// Model with the given parameters; the length must match the variant.
    pub fn from_params(variant: Variant, params: Vec<S>) -> Result<Self> {
        let (layers, n) = build_layers(variant);
        if params.len() != n {
            return Err(Error::Shape {
                expected: format!("{n} parameters for the {} variant", variant.name()),
                actual: format!("{} parameters", params.len()),
            });
        }
        Ok(Self {
            variant,
            layers,
            params,
            bypass_relu: false,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn cast<T: Scalar>(&self) -> CnnModel<T> {
        CnnModel {
            variant: self.variant,
            layers: self.layers.clone(),
            params: self
                .params
                .iter()
                .map(|p| T::from_f64(p.to_f64()))
                .collect(),
            bypass_relu: self.bypass_relu,
        }
    }

    /// Range of the output layer's parameters.
    pub fn output_layer_range(&self) -> std::ops::Range<usize> {
        match self.layers.last() {
            Some(&Layer::Dense { w, b, nout, .. }) => w..b + nout,
            _ => unreachable!("networks end in a dense layer"),
        }
    }

    pub fn zero_output_layer(&mut self) {
        let r = self.output_layer_range();
        self.params[r].iter_mut().for_each(|p| *p = S::ZERO);
    }

    pub fn trace(&self, input: &[S]) -> Result<Trace<S>> {
        if input.len() != INPUT_LEN {
            return Err(Error::Shape {
                expected: format!("{INPUT_LEN} input values (3x{INPUT_SIZE}x{INPUT_SIZE})"),
                actual: format!("{} values", input.len()),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_argmax = Vec::new();
        acts.push(input.to_vec());
        for layer in &self.layers {
            let x = acts.last().unwrap();
            let y = match *layer {
                Layer::Conv {
                    cin,
                    cout,
                    size,
                    w,
                    b,
                } => {
                    let mut out = vec![S::ZERO; cout * size * size];
                    conv_forward(
                        x,
                        &mut out,
                        cin,
                        cout,
                        size,
                        &self.params[w..b],
                        &self.params[b..b + cout],
                    );
                    out
                }
                Layer::Relu if self.bypass_relu => x.clone(),
                Layer::Relu => x
                    .iter()
                    .map(|&v| if v > S::ZERO { v } else { S::ZERO })
                    .collect(),
                Layer::Pool { channels, size } => {
                    let (out, idx) = pool_forward(x, channels, size);
                    pool_argmax.push(idx);
                    out
                }
                Layer::Dense { nin, nout, w, b } => {
                    let wt = &self.params[w..b];
                    (0..nout)
                        .map(|o| {
                            let row = &wt[o * nin..(o + 1) * nin];
                            self.params[b + o] + dot(row, x)
                        })
                        .collect()
                }
            };
            acts.push(y);
        }
        Ok(Trace { acts, pool_argmax })
    }

    pub fn logits(&self, input: &[S]) -> Result<Vec<S>> {
        Ok(self.trace(input)?.acts.pop().unwrap())
    }

    /// Class probabilities for each input of a batch.
    pub fn forward(&self, batch: &[Vec<S>]) -> Result<Vec<[S; N_CLASSES]>> {
        batch
            .iter()
            .map(|x| Ok(softmax(&self.logits(x)?)))
            .collect()
    }

    /// Accumulates `∂loss/∂params` into `grad` given `∂loss/∂logits`.
    pub fn backward(&self, trace: &Trace<S>, dlogits: &[S], grad: &mut [S]) {
        let mut g = dlogits.to_vec();
        let mut pool_i = trace.pool_argmax.len();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[li];
            g = match *layer {
                Layer::Dense { nin, nout, w, b } => {
                    let mut gin = vec![S::ZERO; nin];
                    for o in 0..nout {
                        let go = g[o];
                        grad[b + o] += go;
                        let gw = &mut grad[w + o * nin..w + (o + 1) * nin];
                        axpy(go, x, gw);
                        if li > 0 {
                            axpy(go, &self.params[w + o * nin..w + (o + 1) * nin], &mut gin);
                        }
                    }
                    gin
                }
                Layer::Relu if self.bypass_relu => g,
                Layer::Relu => g
                    .iter()
                    .zip(x)
                    .map(|(&gv, &xv)| if xv > S::ZERO { gv } else { S::ZERO })
                    .collect(),
                Layer::Pool { .. } => {
                    pool_i -= 1;
                    let mut gin = vec![S::ZERO; x.len()];
                    for (&idx, &gv) in trace.pool_argmax[pool_i].iter().zip(&g) {
                        gin[idx as usize] += gv;
                    }
                    gin
                }
                Layer::Conv {
                    cin,
                    cout,
                    size,
                    w,
                    b,
                } => {
                    let (gw, gb) = grad[w..b + cout].split_at_mut(b - w);
                    let mut gin = if li > 0 {
                        vec![S::ZERO; cin * size * size]
                    } else {
                        Vec::new()
                    };
                    conv_backward(x, &g, &mut gin, cin, cout, size, &self.params[w..b], gw, gb);
                    gin
                }
            };
        }
    }
}

pub fn softmax<S: Scalar>(logits: &[S]) -> [S; N_CLASSES] {
    let m = logits
        .iter()
        .copied()
        .fold(logits[0], |a, b| if b > a { b } else { a });
    let mut out = [S::ZERO; N_CLASSES];
    let mut sum = S::ZERO;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        sum += *o;
    }
    for o in &mut out {
        *o = *o / sum;
    }
    out
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut s = S::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn axpy<S: Scalar>(a: S, x: &[S], y: &mut [S]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Output columns `[x0, x1)` valid for kernel column `kx`; the input column
/// is `x + kx - 1`.
fn col_span(kx: usize, size: usize) -> (usize, usize) {
    match kx {
        0 => (1, size),
        1 => (0, size),
        _ => (0, size - 1),
    }
}

fn conv_forward<S: Scalar>(
    x: &[S],
    out: &mut [S],
    cin: usize,
    cout: usize,
    size: usize,
    w: &[S],
    b: &[S],
) {
    let plane = size * size;
    for co in 0..cout {
        let op = &mut out[co * plane..(co + 1) * plane];
        op.iter_mut().for_each(|v| *v = b[co]);
        for ci in 0..cin {
            let ip = &x[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = w[((co * cin + ci) * 3 + ky) * 3 + kx];
                    let (x0, x1) = col_span(kx, size);
                    for y in 0..size {
                        let iy = y + ky;
                        if iy < 1 || iy > size {
                            continue;
                        }
                        let irow =
                            &ip[(iy - 1) * size + x0 + kx - 1..(iy - 1) * size + x1 + kx - 1];
                        axpy(wv, irow, &mut op[y * size + x0..y * size + x1]);
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<S: Scalar>(
    x: &[S],
    gout: &[S],
    gin: &mut [S],
    cin: usize,
    cout: usize,
    size: usize,
    w: &[S],
    gw: &mut [S],
    gb: &mut [S],
) {
    let plane = size * size;
    let want_input = !gin.is_empty();
    for co in 0..cout {
        let gp = &gout[co * plane..(co + 1) * plane];
        let mut s = S::ZERO;
        for &v in gp {
            s += v;
        }
        gb[co] += s;
        for ci in 0..cin {
            let ip = &x[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wi = ((co * cin + ci) * 3 + ky) * 3 + kx;
                    let (x0, x1) = col_span(kx, size);
                    let mut acc = S::ZERO;
                    for y in 0..size {
                        let iy = y + ky;
                        if iy < 1 || iy > size {
                            continue;
                        }
                        let lo = (iy - 1) * size + x0 + kx - 1;
                        let hi = lo + x1 - x0;
                        let grow = &gp[y * size + x0..y * size + x1];
                        acc += dot(grow, &ip[lo..hi]);
                        if want_input {
                            let off = ci * plane;
                            axpy(w[wi], grow, &mut gin[off + lo..off + hi]);
                        }
                    }
                    gw[wi] += acc;
                }
            }
        }
    }
}

fn pool_forward<S: Scalar>(x: &[S], channels: usize, size: usize) -> (Vec<S>, Vec<u32>) {
    let half = size / 2;
    let mut out = Vec::with_capacity(channels * half * half);
    let mut idx = Vec::with_capacity(out.capacity());
    for c in 0..channels {
        for y in 0..half {
            for xx in 0..half {
                let mut best = c * size * size + 2 * y * size + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = c * size * size + (2 * y + dy) * size + 2 * xx + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}
