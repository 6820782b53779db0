use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{gemm, Matrix};
use crate::math::{sqrt, tanh};
use crate::rng::{rng_from_seed, Fingerprint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => tanh(z),
            Activation::Linear => z,
        }
    }

    /// Derivative at pre-activation `z`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = tanh(z);
                1.0 - t * t
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Init {
    /// `U(±√(6/(fan_in + fan_out)))`.
    #[default]
    GlorotUniform,
    /// `N(0, 0.01²)`.
    SmallNormal,
}

/// Layer widths and activations of a decoder network.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Architecture {
    /// `(d_0, …, d_k)`: input width, hidden widths, state dimension.
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub use_bias: bool,
}

impl Architecture {
    /// Input width `inputs`, the given hidden widths, output width `outputs`,
    /// ReLU hidden layers and a linear head with biases.
    pub fn decoder(inputs: usize, hidden: &[usize], outputs: usize) -> Self {
        let mut layer_sizes = Vec::with_capacity(hidden.len() + 2);
        layer_sizes.push(inputs);
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(outputs);
        Architecture {
            layer_sizes,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
            use_bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(Error::invalid(format!(
                "a decoder needs at least two weight layers, got sizes {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::invalid(format!("layer sizes must be positive: {:?}", self.layer_sizes)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdnModel {
    arch: Architecture,
    /// `weights[i]` is `d_{i+1} × d_i`.
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    input_mask: Vec<bool>,
}

/// Forward intermediates kept for back-propagation.
pub(crate) struct ForwardCache {
    /// Layer inputs `H_0 (masked), H_1, …, H_{k-1}`.
    pub inputs: Vec<Matrix>,
    /// Pre-activations `Z_1 … Z_{k-1}` of the hidden layers.
    pub pre: Vec<Matrix>,
    /// `Z_k`, kept only when the output activation is not the identity.
    pub output_pre: Option<Matrix>,
    pub output: Matrix,
}

pub fn init_model(arch: &Architecture, init: Init, seed: u64) -> Result<SdnModel> {
    arch.validate()?;
    let sizes = &arch.layer_sizes;
    let mut model = SdnModel {
        arch: arch.clone(),
        weights: sizes.windows(2).map(|w| Matrix::zeros(w[1], w[0])).collect(),
        biases: sizes[1..].iter().map(|&d| vec![0.0; d]).collect(),
        input_mask: vec![true; sizes[0]],
    };
    model.reinitialize(init, seed);
    Ok(model)
}

impl SdnModel {
    /// Assembles a model from stored tensors.
    pub fn from_parts(arch: Architecture, weights: Vec<Matrix>, biases: Vec<Vec<f64>>, input_mask: Vec<bool>) -> Result<Self> {
        arch.validate()?;
        let sizes = &arch.layer_sizes;
        check_dim("weight layer count", sizes.len() - 1, weights.len())?;
        check_dim("bias layer count", sizes.len() - 1, biases.len())?;
        check_dim("input mask length", sizes[0], input_mask.len())?;
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            check_dim("weight rows", sizes[i + 1], w.rows())?;
            check_dim("weight cols", sizes[i], w.cols())?;
            check_dim("bias length", sizes[i + 1], b.len())?;
            if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameters of layer {}", i + 1)));
            }
        }
        let mut model = SdnModel {
            arch,
            weights,
            biases,
            input_mask,
        };
        model.zero_masked_columns();
        Ok(model)
    }

    /// Re-draws every weight from the init distribution and zeroes biases,
    /// keeping the input mask.
    pub fn reinitialize(&mut self, init: Init, seed: u64) {
        let mut rng = rng_from_seed(seed);
        for w in &mut self.weights {
            let (fan_out, fan_in) = (w.rows() as f64, w.cols() as f64);
            let bound = sqrt(6.0 / (fan_in + fan_out));
            for v in w.as_mut_slice() {
                *v = match init {
                    Init::GlorotUniform => rng.random_range(-bound..=bound),
                    Init::SmallNormal => 0.01 * rng.sample::<f64, _>(StandardNormal),
                };
            }
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        self.zero_masked_columns();
    }

    pub(crate) fn zero_masked_columns(&mut self) {
        for (j, &keep) in self.input_mask.iter().enumerate() {
            if !keep {
                self.weights[0].col_mut(j).iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.arch.layer_sizes
    }

    pub fn input_width(&self) -> usize {
        self.arch.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.arch.layer_sizes.last().expect("validated sizes")
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn input_mask(&self) -> &[bool] {
        &self.input_mask
    }

    /// Positions of inputs that are still active.
    pub fn surviving_inputs(&self) -> Vec<usize> {
        (0..self.input_mask.len()).filter(|&i| self.input_mask[i]).collect()
    }

    pub fn set_input_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        check_dim("input mask length", self.input_width(), mask.len())?;
        if mask.iter().zip(&self.input_mask).any(|(&new, &old)| new && !old) {
            return Err(Error::invalid("masked inputs cannot be re-enabled"));
        }
        self.input_mask = mask;
        self.zero_masked_columns();
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Parameter tensors in `W1, b1, W2, b2, …` order.
    pub fn parameters(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn fingerprint(&self) -> u64 {
        let mut fp = Fingerprint::new();
        for &d in &self.arch.layer_sizes {
            fp = fp.u64(d as u64);
        }
        for p in self.parameters() {
            fp = fp.f64s(p);
        }
        for &m in &self.input_mask {
            fp = fp.u64(u64::from(m));
        }
        fp.finish()
    }

    fn masked_input(&self, s: &Matrix) -> Result<Matrix> {
        check_dim("network input width", self.input_width(), s.rows())?;
        let mut h = s.clone();
        for j in 0..h.cols() {
            for (v, &keep) in h.col_mut(j).iter_mut().zip(&self.input_mask) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        Ok(h)
    }

    fn affine(&self, layer: usize, h: &Matrix) -> Matrix {
        let w = &self.weights[layer];
        let mut z = Matrix::zeros(w.rows(), h.cols());
        if self.arch.use_bias {
            for j in 0..z.cols() {
                z.col_mut(j).copy_from_slice(&self.biases[layer]);
            }
            gemm(1.0, w, false, h, false, 1.0, &mut z);
        } else {
            gemm(1.0, w, false, h, false, 0.0, &mut z);
        }
        z
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.arch.output_activation
        } else {
            self.arch.hidden_activation
        }
    }

    /// Evaluates the network on a batch (`d_0 × B`, one sample per column).
    pub fn forward(&self, s: &Matrix) -> Result<Matrix> {
        let mut h = self.masked_input(s)?;
        for layer in 0..self.weights.len() {
            let act = self.activation(layer);
            let mut z = self.affine(layer, &h);
            z.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            h = z;
        }
        if !h.is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(h)
    }

    pub fn forward_one(&self, s: &[f64]) -> Result<Vec<f64>> {
        let input = Matrix::from_col_major(s.len(), 1, s.to_vec())?;
        Ok(self.forward(&input)?.into_vec())
    }

    pub(crate) fn forward_cached(&self, s: &Matrix) -> Result<ForwardCache> {
        let layers = self.weights.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers - 1);
        let mut h = self.masked_input(s)?;
        for layer in 0..layers - 1 {
            let act = self.activation(layer);
            let z = self.affine(layer, &h);
            let mut next = z.clone();
            next.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            inputs.push(h);
            pre.push(z);
            h = next;
        }
        let mut output = self.affine(layers - 1, &h);
        inputs.push(h);
        let act = self.arch.output_activation;
        let output_pre = if act == Activation::Linear {
            None
        } else {
            let z = output.clone();
            output.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            Some(z)
        };
        Ok(ForwardCache {
            inputs,
            pre,
            output_pre,
            output,
        })
    }

    pub(crate) fn set_mask_unchecked(&mut self, mask: Vec<bool>) {
        self.input_mask = mask;
    }
}
