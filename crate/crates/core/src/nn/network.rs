//! Feed-forward stacks of valid-padding 2-D convolutions and dense layers
//! with hand-written reverse-mode gradients.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{invalid, Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => super::loss::sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    Dense {
        outputs: usize,
        activation: Activation,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// `[channels, height, width]`; dense-only stacks may use `[n, 1, 1]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// Resolved geometry of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Geometry {
    Conv {
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        out_h: usize,
        out_w: usize,
        k: usize,
        s: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl Geometry {
    fn weight_shape(&self) -> Vec<usize> {
        match *self {
            Geometry::Conv { in_c, out_c, k, .. } => vec![out_c, in_c, k, k],
            Geometry::Dense { inputs, outputs } => vec![outputs, inputs],
        }
    }

    fn bias_len(&self) -> usize {
        match *self {
            Geometry::Conv { out_c, .. } => out_c,
            Geometry::Dense { outputs, .. } => outputs,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            Geometry::Conv { in_c, out_c, k, .. } => (in_c * k * k, out_c * k * k),
            Geometry::Dense { inputs, outputs } => (inputs, outputs),
        }
    }

    fn output_shape(&self) -> Vec<usize> {
        match *self {
            Geometry::Conv {
                out_c, out_h, out_w, ..
            } => vec![out_c, out_h, out_w],
            Geometry::Dense { outputs, .. } => vec![outputs],
        }
    }
}

impl Architecture {
    fn geometry(&self) -> Result<Vec<Geometry>> {
        let [mut c, mut h, mut w] = self.input;
        let mut flat: Option<usize> = None;
        let mut out = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    ..
                } => {
                    if flat.is_some() {
                        return Err(invalid(format!("layer {idx}: convolution after dense layer")));
                    }
                    if kernel == 0 || stride == 0 || kernel > h || kernel > w || out_channels == 0 {
                        return Err(invalid(format!(
                            "layer {idx}: kernel {kernel} stride {stride} does not fit {h}x{w}"
                        )));
                    }
                    let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
                    out.push(Geometry::Conv {
                        in_c: c,
                        in_h: h,
                        in_w: w,
                        out_c: out_channels,
                        out_h: oh,
                        out_w: ow,
                        k: kernel,
                        s: stride,
                    });
                    (c, h, w) = (out_channels, oh, ow);
                }
                LayerSpec::Dense { outputs, .. } => {
                    if outputs == 0 {
                        return Err(invalid(format!("layer {idx}: zero outputs")));
                    }
                    let inputs = flat.unwrap_or(c * h * w);
                    out.push(Geometry::Dense { inputs, outputs });
                    flat = Some(outputs);
                }
            }
        }
        if out.is_empty() {
            return Err(invalid("architecture has no layers"));
        }
        Ok(out)
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn output_len(&self) -> Result<usize> {
        Ok(self.geometry()?.last().map(|g| g.output_shape().iter().product()).unwrap_or(0))
    }

    fn activation(&self, idx: usize) -> Activation {
        match self.layers[idx] {
            LayerSpec::Conv { activation, .. } | LayerSpec::Dense { activation, .. } => activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Weights and biases for every layer of an [`Architecture`]. Gradients use
/// the same type.
#[derive(Debug)]
pub struct ParamSet {
    arch: Architecture,
    geometry: Vec<Geometry>,
    layers: Vec<LayerParams>,
    /// Changes whenever parameters are mutated; caches from older versions are stale.
    version: u64,
}

impl Clone for ParamSet {
    fn clone(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            geometry: self.geometry.clone(),
            layers: self.layers.clone(),
            version: fresh_version(),
        }
    }
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.layers == other.layers
    }
}

/// Intermediates retained by [`ParamSet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    version: u64,
    /// `activations[0]` is the input, `activations[k+1]` the output of layer `k`.
    activations: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl ParamSet {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let geometry = arch.geometry()?;
        let mut rng = rng_from_seed(seed);
        let layers = geometry
            .iter()
            .map(|g| {
                let (fi, fo) = g.fans();
                let limit = (6.0 / (fi + fo) as f64).sqrt();
                let shape = g.weight_shape();
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
                LayerParams {
                    weight: Tensor::new(shape, data).expect("shape product"),
                    bias: Tensor::zeros(vec![g.bias_len()]),
                }
            })
            .collect();
        Ok(Self {
            arch,
            geometry,
            layers,
            version: fresh_version(),
        })
    }

    pub fn from_layers(arch: Architecture, layers: Vec<LayerParams>) -> Result<Self> {
        let geometry = arch.geometry()?;
        if layers.len() != geometry.len() {
            return Err(invalid(format!(
                "{} parameter layers for {} architecture layers",
                layers.len(),
                geometry.len()
            )));
        }
        for (g, l) in geometry.iter().zip(&layers) {
            if l.weight.shape() != g.weight_shape().as_slice() || l.bias.shape() != [g.bias_len()] {
                return Err(Error::ShapeMismatch {
                    expected: g.weight_shape(),
                    actual: l.weight.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            arch,
            geometry,
            layers,
            version: fresh_version(),
        })
    }

    pub fn zeros_like(other: &ParamSet) -> Self {
        let layers = other
            .layers
            .iter()
            .map(|l| LayerParams {
                weight: Tensor::zeros_like(&l.weight),
                bias: Tensor::zeros_like(&l.bias),
            })
            .collect();
        Self {
            arch: other.arch.clone(),
            geometry: other.geometry.clone(),
            layers,
            version: fresh_version(),
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable access to the raw parameters; invalidates existing caches.
    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        self.version = fresh_version();
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// `(name, tensor)` pairs in storage order, e.g. `layer0.conv.weight`.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (k, (spec, l)) in self.arch.layers.iter().zip(&self.layers).enumerate() {
            let kind = match spec {
                LayerSpec::Conv { .. } => "conv",
                LayerSpec::Dense { .. } => "dense",
            };
            out.push((format!("layer{k}.{kind}.weight"), &l.weight));
            out.push((format!("layer{k}.{kind}.bias"), &l.bias));
        }
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend_from_slice(l.weight.as_slice());
            v.extend_from_slice(l.bias.as_slice());
        }
        v
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.num_params()],
                actual: vec![values.len()],
            });
        }
        let mut off = 0;
        for l in self.layers_mut() {
            for t in [&mut l.weight, &mut l.bias] {
                let n = t.len();
                t.as_mut_slice().copy_from_slice(&values[off..off + n]);
                off += n;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.is_finite() && l.bias.is_finite())
    }

    /// `self += alpha * other`, shapes must match.
    pub fn axpy(&mut self, alpha: f64, other: &ParamSet) {
        for (a, b) in self.layers_mut().iter_mut().zip(&other.layers) {
            a.weight.axpy(alpha, &b.weight);
            a.bias.axpy(alpha, &b.bias);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for l in self.layers_mut() {
            l.weight.scale(alpha);
            l.bias.scale(alpha);
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.sum_squares() + l.bias.sum_squares())
            .sum::<f64>()
            .sqrt()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.arch.input_len() {
            return Err(Error::ShapeMismatch {
                expected: self.arch.input.to_vec(),
                actual: vec![input.len()],
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Cache)> {
        self.check_input(input.as_slice())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.as_slice().to_vec());
        for (idx, (g, p)) in self.geometry.iter().zip(&self.layers).enumerate() {
            let x = activations.last().expect("input pushed");
            let mut y = match *g {
                Geometry::Conv { .. } => conv_forward(g, p, x),
                Geometry::Dense { .. } => dense_forward(g, p, x),
            };
            let act = self.arch.activation(idx);
            if act != Activation::Identity {
                y.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            activations.push(y);
        }
        let out_shape = self.geometry.last().expect("nonempty").output_shape();
        let output = Tensor::new(out_shape, activations.last().expect("output").clone())?;
        Ok((
            output,
            Cache {
                version: self.version,
                activations,
            },
        ))
    }

    /// Output only, no cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for (idx, (g, p)) in self.geometry.iter().zip(&self.layers).enumerate() {
            let mut y = match *g {
                Geometry::Conv { .. } => conv_forward(g, p, &x),
                Geometry::Dense { .. } => dense_forward(g, p, &x),
            };
            let act = self.arch.activation(idx);
            if act != Activation::Identity {
                y.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            x = y;
        }
        Ok(x)
    }

    /// Gradients of a scalar loss with respect to every parameter, given the
    /// loss gradient at the network output; also returns the input gradient.
    pub fn backward(&self, cache: &Cache, output_grad: &[f64]) -> Result<(ParamSet, Vec<f64>)> {
        let mut grads = ParamSet::zeros_like(self);
        let input_grad = self.backward_into(cache, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like [`backward`](Self::backward) but accumulates into `grads`.
    pub fn backward_into(&self, cache: &Cache, output_grad: &[f64], grads: &mut ParamSet) -> Result<Vec<f64>> {
        if cache.version != self.version || cache.activations.len() != self.layers.len() + 1 {
            return Err(invalid("stale or mismatched forward cache"));
        }
        if output_grad.len() != cache.output().len() {
            return Err(Error::ShapeMismatch {
                expected: vec![cache.output().len()],
                actual: vec![output_grad.len()],
            });
        }
        if grads.arch != self.arch {
            return Err(invalid("gradient buffer has a different architecture"));
        }
        let mut delta = output_grad.to_vec();
        for idx in (0..self.layers.len()).rev() {
            let act = self.arch.activation(idx);
            let y = &cache.activations[idx + 1];
            if act != Activation::Identity {
                for (d, &yv) in delta.iter_mut().zip(y) {
                    *d *= act.derivative_from_output(yv);
                }
            }
            let x = &cache.activations[idx];
            let g = &self.geometry[idx];
            let p = &self.layers[idx];
            let gp = &mut grads.layers[idx];
            delta = match *g {
                Geometry::Conv { .. } => conv_backward(g, p, gp, x, &delta, idx > 0),
                Geometry::Dense { .. } => dense_backward(g, p, gp, x, &delta),
            };
        }
        Ok(delta)
    }
}

fn dense_forward(g: &Geometry, p: &LayerParams, x: &[f64]) -> Vec<f64> {
    let Geometry::Dense { inputs, outputs } = *g else {
        unreachable!()
    };
    let w = p.weight.as_slice();
    let b = p.bias.as_slice();
    (0..outputs)
        .map(|o| {
            let row = &w[o * inputs..(o + 1) * inputs];
            b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
        })
        .collect()
}

fn dense_backward(g: &Geometry, p: &LayerParams, gp: &mut LayerParams, x: &[f64], delta: &[f64]) -> Vec<f64> {
    let Geometry::Dense { inputs, outputs } = *g else {
        unreachable!()
    };
    let w = p.weight.as_slice();
    let gw = gp.weight.as_mut_slice();
    let mut dx = vec![0.0; inputs];
    for o in 0..outputs {
        let d = delta[o];
        if d == 0.0 {
            continue;
        }
        let row = o * inputs;
        for i in 0..inputs {
            gw[row + i] += d * x[i];
            dx[i] += d * w[row + i];
        }
    }
    for (gb, d) in gp.bias.as_mut_slice().iter_mut().zip(delta) {
        *gb += d;
    }
    dx
}

fn conv_forward(g: &Geometry, p: &LayerParams, x: &[f64]) -> Vec<f64> {
    let Geometry::Conv {
        in_c,
        in_h,
        in_w,
        out_c,
        out_h,
        out_w,
        k,
        s,
    } = *g
    else {
        unreachable!()
    };
    let w = p.weight.as_slice();
    let b = p.bias.as_slice();
    let plane = out_h * out_w;
    let mut y = vec![0.0; out_c * plane];
    for o in 0..out_c {
        let yo = &mut y[o * plane..(o + 1) * plane];
        yo.iter_mut().for_each(|v| *v = b[o]);
        for c in 0..in_c {
            let xc = &x[c * in_h * in_w..(c + 1) * in_h * in_w];
            for ki in 0..k {
                for kj in 0..k {
                    let wv = w[((o * in_c + c) * k + ki) * k + kj];
                    for oi in 0..out_h {
                        let xrow = &xc[(oi * s + ki) * in_w + kj..];
                        let yrow = &mut yo[oi * out_w..(oi + 1) * out_w];
                        for (oj, yv) in yrow.iter_mut().enumerate() {
                            *yv += wv * xrow[oj * s];
                        }
                    }
                }
            }
        }
    }
    y
}

fn conv_backward(
    g: &Geometry,
    p: &LayerParams,
    gp: &mut LayerParams,
    x: &[f64],
    delta: &[f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let Geometry::Conv {
        in_c,
        in_h,
        in_w,
        out_c,
        out_h,
        out_w,
        k,
        s,
    } = *g
    else {
        unreachable!()
    };
    let w = p.weight.as_slice();
    let gw = gp.weight.as_mut_slice();
    let plane = out_h * out_w;
    let mut dx = vec![0.0; if need_input_grad { in_c * in_h * in_w } else { 0 }];
    for o in 0..out_c {
        let d_o = &delta[o * plane..(o + 1) * plane];
        gp.bias.as_mut_slice()[o] += d_o.iter().sum::<f64>();
        for c in 0..in_c {
            let base = c * in_h * in_w;
            for ki in 0..k {
                for kj in 0..k {
                    let widx = ((o * in_c + c) * k + ki) * k + kj;
                    let wv = w[widx];
                    let mut acc = 0.0;
                    for oi in 0..out_h {
                        let xoff = base + (oi * s + ki) * in_w + kj;
                        let drow = &d_o[oi * out_w..(oi + 1) * out_w];
                        for (oj, &dv) in drow.iter().enumerate() {
                            acc += dv * x[xoff + oj * s];
                        }
                        if need_input_grad {
                            for (oj, &dv) in drow.iter().enumerate() {
                                dx[xoff + oj * s] += wv * dv;
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    dx
}
