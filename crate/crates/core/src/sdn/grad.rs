use alloc::vec;
use alloc::vec::Vec;

use super::model::SdnModel;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{gemm, Matrix};

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    /// Tensors in `W1, b1, W2, b2, …` order, matching
    /// [`SdnModel::parameters`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

fn squared_error(y: &Matrix, x: &Matrix) -> f64 {
    y.as_slice().iter().zip(x.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_batch(model: &SdnModel, s: &Matrix, x: &Matrix) -> Result<()> {
    check_dim("batch size", s.cols(), x.cols())?;
    check_dim("target width", model.output_width(), x.rows())?;
    if s.cols() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

/// Mean squared error over every output entry of the batch.
pub fn loss(model: &SdnModel, s: &Matrix, x: &Matrix) -> Result<f64> {
    check_batch(model, s, x)?;
    let y = model.forward(s)?;
    let l = squared_error(&y, x) / (x.rows() * x.cols()) as f64;
    if !l.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(l)
}

/// Loss and exact reverse-mode gradients. First-layer gradients of masked
/// inputs are exactly zero.
pub fn loss_and_gradients(model: &SdnModel, s: &Matrix, x: &Matrix) -> Result<(f64, Gradients)> {
    check_batch(model, s, x)?;
    let cache = model.forward_cached(s)?;
    let count = (x.rows() * x.cols()) as f64;
    let layers = model.weights().len();
    let arch = model.architecture();
    let mut grad_w: Vec<Matrix> = Vec::with_capacity(layers);
    let mut grad_b: Vec<Vec<f64>> = Vec::with_capacity(layers);

    // dL/dZ_k, built in place over the output buffer
    let mut delta = cache.output;
    let mut sum = 0.0;
    for (d, &t) in delta.as_mut_slice().iter_mut().zip(x.as_slice()) {
        let r = *d - t;
        sum += r * r;
        *d = 2.0 * r / count;
    }
    if let Some(z) = &cache.output_pre {
        let act = arch.output_activation;
        for (d, &z) in delta.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *d *= act.derivative(z);
        }
    }
    let l = sum / count;
    if !l.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }

    let inputs = cache.inputs;
    for layer in (0..layers).rev() {
        let h = &inputs[layer];
        let mut gw = Matrix::zeros(delta.rows(), h.rows());
        gemm(1.0, &delta, false, h, true, 0.0, &mut gw);
        let mut gb = vec![0.0; delta.rows()];
        if arch.use_bias {
            for col in delta.columns() {
                for (g, v) in gb.iter_mut().zip(col) {
                    *g += v;
                }
            }
        }
        if layer > 0 {
            let w = &model.weights()[layer];
            let mut dh = Matrix::zeros(w.cols(), delta.cols());
            gemm(1.0, w, true, &delta, false, 0.0, &mut dh);
            let act = arch.hidden_activation;
            for (d, &z) in dh.as_mut_slice().iter_mut().zip(cache.pre[layer - 1].as_slice()) {
                *d *= act.derivative(z);
            }
            delta = dh;
        }
        grad_w.push(gw);
        grad_b.push(gb);
    }
    grad_w.reverse();
    grad_b.reverse();

    for (j, &keep) in model.input_mask().iter().enumerate() {
        if !keep {
            grad_w[0].col_mut(j).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let grads = Gradients {
        weights: grad_w,
        biases: grad_b,
    };
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients".into()));
    }
    Ok((l, grads))
}
