//! Small multilayer perceptrons for the frozen teacher and the trainable
//! student, reverse-mode gradients, and SGD with momentum.

use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::EmbeddingMatrix;
use crate::seeded_rng;

pub const MODEL_MAGIC: &[u8; 4] = b"CSSM";

/// Elementwise nonlinearity applied after a layer's affine map.
///
/// The discriminant is the on-disk tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Activation {
    Relu = 0,
    Tanh = 1,
    Identity = 2,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            t => Err(Error::format(format!("unknown activation tag {t}"))),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::config(format!(
                "unknown activation '{other}' (expected relu, tanh or identity)"
            ))),
        }
    }
}

/// One affine layer `y = act(W x + b)` with `W` stored `out × in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(
        out_dim: usize,
        in_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        if weights.len() != out_dim * in_dim || bias.len() != out_dim {
            return Err(Error::shape(format!(
                "layer {out_dim}x{in_dim} with {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            out_dim,
            in_dim,
            weights,
            bias,
            activation,
        })
    }

    fn weight_row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }
}

/// Width and activation of one layer in a [`ModelSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Hidden layers share `hidden_activation`; the output layer is linear.
    pub fn mlp(input_dim: usize, hidden: &[usize], output_dim: usize, hidden_activation: Activation) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&out_dim| LayerSpec {
                out_dim,
                activation: hidden_activation,
            })
            .collect();
        layers.push(LayerSpec {
            out_dim: output_dim,
            activation: Activation::Identity,
        });
        Self { input_dim, layers }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim)
    }
}

/// Feed-forward network; consecutive layer dimensions always chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
}

/// Activations retained by [`MlpModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<EmbeddingMatrix>,
    /// Pre-activation output of each layer.
    pre: Vec<EmbeddingMatrix>,
}

/// Gradients of every layer's weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ModelGrads {
    /// Gradient slices in the same order as [`MlpModel::params_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("model needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameter slices: weights then bias for each layer in order.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .copied()
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut rest = flat;
        for p in self.params_mut() {
            let (head, tail) = rest.split_at(p.len());
            p.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn check_input(&self, x: &EmbeddingMatrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} columns, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Runs the network, keeping what [`MlpModel::backward`] needs.
    pub fn forward(&self, x: &EmbeddingMatrix) -> Result<(EmbeddingMatrix, ForwardCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let z = affine(layer, &cur);
            let mut a = z.clone();
            a.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = layer.activation.apply(*v));
            inputs.push(cur);
            pre.push(z);
            cur = a;
        }
        if !cur.is_finite() {
            return Err(Error::Numerical("non-finite model output".into()));
        }
        Ok((cur, ForwardCache { inputs, pre }))
    }

    /// Forward pass without retaining activations.
    pub fn predict(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = affine(layer, &cur);
            cur.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = layer.activation.apply(*v));
        }
        if !cur.is_finite() {
            return Err(Error::Numerical("non-finite model output".into()));
        }
        Ok(cur)
    }

    /// Reverse-mode pass: parameter gradients and `∂loss/∂input` from `∂loss/∂output`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &EmbeddingMatrix,
    ) -> Result<(ModelGrads, EmbeddingMatrix)> {
        if cache.pre.len() != self.layers.len() {
            return Err(Error::shape("cache was produced by a different model"));
        }
        for (layer, z) in self.layers.iter().zip(&cache.pre) {
            if z.cols() != layer.out_dim {
                return Err(Error::shape("cache was produced by a different model"));
            }
        }
        let last = &cache.pre[cache.pre.len() - 1];
        if grad_out.shape() != last.shape() {
            return Err(Error::shape(format!(
                "output gradient {}x{} vs output {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                last.rows(),
                last.cols()
            )));
        }
        let rows = grad_out.rows();
        let mut grads = vec![(Vec::new(), Vec::new()); self.layers.len()];
        let mut g = grad_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[l];
            let x = &cache.inputs[l];
            // dZ = G ⊙ act'(Z)
            for (gv, zv) in g.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *gv *= layer.activation.derivative(*zv);
            }
            let mut dw = vec![0.0; layer.out_dim * layer.in_dim];
            let mut db = vec![0.0; layer.out_dim];
            let mut dx = EmbeddingMatrix::zeros(rows, layer.in_dim);
            for r in 0..rows {
                let xr = x.row(r);
                let gr = g.row(r);
                for (o, &go) in gr.iter().enumerate() {
                    db[o] += go;
                    let dw_row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (d, xv) in dw_row.iter_mut().zip(xr) {
                        *d += go * xv;
                    }
                }
                let dxr = dx.row_mut(r);
                for (o, &go) in gr.iter().enumerate() {
                    for (d, w) in dxr.iter_mut().zip(layer.weight_row(o)) {
                        *d += go * w;
                    }
                }
            }
            grads[l] = (dw, db);
            g = dx;
        }
        Ok((ModelGrads { layers: grads }, g))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(MODEL_MAGIC);
        w.u32(self.layers.len() as u32);
        for layer in &self.layers {
            w.u32(layer.out_dim as u32);
            w.u32(layer.in_dim as u32);
            w.u8(layer.activation as u8);
            w.f32s(&layer.weights);
            w.f32s(&layer.bias);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, MODEL_MAGIC)?;
        let count = r.u32()?;
        r.check_remaining(count as u64, 9)?;
        let mut layers = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let out_dim = r.u32()? as usize;
            let in_dim = r.u32()? as usize;
            let activation = Activation::from_tag(r.u8()?)?;
            r.check_remaining((out_dim as u64) * (in_dim as u64 + 1), 4)?;
            let weights = r.f32s(out_dim * in_dim)?;
            let bias = r.f32s(out_dim)?;
            layers.push(
                Layer::new(out_dim, in_dim, weights, bias, activation)
                    .map_err(|e| Error::format(format!("invalid layer: {e}")))?,
            );
        }
        r.finish()?;
        Self::new(layers).map_err(|e| Error::format(format!("invalid model: {e}")))
    }
}

/// `X Wᵀ + b`.
fn affine(layer: &Layer, x: &EmbeddingMatrix) -> EmbeddingMatrix {
    let mut out = EmbeddingMatrix::zeros(x.rows(), layer.out_dim);
    for r in 0..x.rows() {
        let xr = x.row(r);
        for (o, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = layer.weight_row(o)
                .iter()
                .zip(xr)
                .fold(layer.bias[o], |acc, (w, xv)| acc + w * xv);
        }
    }
    out
}

/// Weights and biases drawn from `Uniform(−1/√fan_in, 1/√fan_in)`.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<MlpModel> {
    if spec.input_dim == 0 || spec.layers.is_empty() {
        return Err(Error::invalid("model spec needs an input dimension and at least one layer"));
    }
    let mut rng = seeded_rng(seed);
    let mut in_dim = spec.input_dim;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for ls in &spec.layers {
        if ls.out_dim == 0 {
            return Err(Error::invalid("layer width must be positive"));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..ls.out_dim * in_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let bias = (0..ls.out_dim).map(|_| rng.random_range(-bound..=bound)).collect();
        layers.push(Layer::new(ls.out_dim, in_dim, weights, bias, ls.activation)?);
        in_dim = ls.out_dim;
    }
    MlpModel::new(layers)
}

/// Linear map from the student's output width to the teacher's, used only
/// while distilling and dropped from the saved student.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead(pub MlpModel);

impl ProjectionHead {
    pub fn new(student_dim: usize, teacher_dim: usize, seed: u64) -> Result<Self> {
        let spec = ModelSpec::mlp(student_dim, &[], teacher_dim, Activation::Identity);
        Ok(Self(init_model(&spec, seed)?))
    }
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    binio::write_atomic(path, &model.encode())
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    MlpModel::decode(&binio::read_file(path)?)
}

/// Momentum buffers and hyperparameters for SGD.
///
/// Update rule per parameter: `v ← momentum·v + (grad + weight_decay·param)`,
/// `param ← param − lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            buffers: Vec::new(),
        }
    }

    pub fn buffers(&self) -> &[Vec<f64>] {
        &self.buffers
    }

    /// Applies one update. Buffers are created on the first call and must keep
    /// matching the parameter shapes afterwards.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.buffers.is_empty() {
            self.buffers = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.buffers.len() != params.len() {
            return Err(Error::shape("optimizer state tracks a different parameter set"));
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.buffers) {
            if p.len() != g.len() || p.len() != v.len() {
                return Err(Error::shape("parameter, gradient and buffer lengths differ"));
            }
            for ((pv, gv), vv) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vv = self.momentum * *vv + (gv + self.weight_decay * *pv);
                *pv -= self.lr * *vv;
            }
        }
        Ok(())
    }
}

/// One SGD-with-momentum update of `params`.
pub fn sgd_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut OptimizerState) -> Result<()> {
    state.step(params, grads)
}
