use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{shape_err, Result};

/// A fixed collection of trainable parameter buffers.
///
/// Gradients are represented with the same type, so an optimizer can walk
/// parameters and gradients in lockstep.
pub trait ParamSet {
    fn buffers(&self) -> Vec<&[f64]>;
    fn buffers_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        self.buffers().concat()
    }

    /// Overwrites every parameter from a flat vector in `buffers()` order.
    fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(shape_err("assign_flat", n, flat.len()));
        }
        let mut offset = 0;
        for buf in self.buffers_mut() {
            let len = buf.len();
            buf.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Two-layer perceptron: `out = act(x·w_in + b_in)·w_out + b_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w_in: DenseMatrix,
    pub b_in: Vec<f64>,
    pub w_out: DenseMatrix,
    pub b_out: Vec<f64>,
    pub activation: Activation,
}

impl MlpParams {
    pub fn zeros(d_in: usize, d_hidden: usize, d_out: usize) -> Self {
        Self {
            w_in: DenseMatrix::zeros(d_in, d_hidden),
            b_in: vec![0.0; d_hidden],
            w_out: DenseMatrix::zeros(d_hidden, d_out),
            b_out: vec![0.0; d_out],
            activation: Activation::Relu,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_hidden: usize, d_out: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d_in, d_hidden, d_out);
        glorot_uniform(&mut p.w_in, rng);
        glorot_uniform(&mut p.w_out, rng);
        p
    }

    pub fn d_in(&self) -> usize {
        self.w_in.rows()
    }

    pub fn d_hidden(&self) -> usize {
        self.w_in.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w_out.cols()
    }

    /// A zero-valued gradient buffer with this network's shapes.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d_in(), self.d_hidden(), self.d_out())
    }

    fn check_shapes(&self) -> Result<()> {
        if self.b_in.len() != self.d_hidden()
            || self.w_out.rows() != self.d_hidden()
            || self.b_out.len() != self.d_out()
        {
            return Err(shape_err(
                "MlpParams",
                format!("consistent layer shapes ({}->{}->{})", self.d_in(), self.d_hidden(), self.d_out()),
                format!(
                    "b_in {}, w_out {:?}, b_out {}",
                    self.b_in.len(),
                    self.w_out.shape(),
                    self.b_out.len()
                ),
            ));
        }
        Ok(())
    }
}

impl ParamSet for MlpParams {
    fn buffers(&self) -> Vec<&[f64]> {
        vec![self.w_in.as_slice(), &self.b_in, self.w_out.as_slice(), &self.b_out]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_in.as_mut_slice(),
            &mut self.b_in,
            self.w_out.as_mut_slice(),
            &mut self.b_out,
        ]
    }
}

pub fn glorot_uniform<R: Rng + ?Sized>(w: &mut DenseMatrix, rng: &mut R) {
    let limit = (6.0 / (w.rows() + w.cols()).max(1) as f64).sqrt();
    for v in w.as_mut_slice() {
        *v = rng.random_range(-limit..=limit);
    }
}

/// Returns `(hidden, out)` for a batch of input rows.
pub fn mlp_forward(p: &MlpParams, x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    p.check_shapes()?;
    if x.cols() != p.d_in() {
        return Err(shape_err("mlp_forward", format!("{} input columns", p.d_in()), x.cols()));
    }
    let mut hidden = x.matmul(&p.w_in)?;
    hidden.add_row_vector(&p.b_in)?;
    let act = p.activation;
    hidden.map_inplace(|v| act.apply(v));
    let mut out = hidden.matmul(&p.w_out)?;
    out.add_row_vector(&p.b_out)?;
    Ok((hidden, out))
}

/// Backpropagates `d_out = ∂L/∂out` through the network.
///
/// Returns parameter gradients and, when `want_input_grad`, `∂L/∂x`.
pub fn mlp_backward(
    p: &MlpParams,
    x: &DenseMatrix,
    hidden: &DenseMatrix,
    d_out: &DenseMatrix,
    want_input_grad: bool,
) -> Result<(MlpParams, Option<DenseMatrix>)> {
    if d_out.shape() != (x.rows(), p.d_out()) {
        return Err(shape_err(
            "mlp_backward",
            format!("({}, {})", x.rows(), p.d_out()),
            format!("{:?}", d_out.shape()),
        ));
    }
    let w_out = hidden.t_matmul(d_out)?;
    let b_out = d_out.column_sums();
    let mut d_hidden = d_out.matmul_t(&p.w_out)?;
    for (g, &h) in d_hidden.as_mut_slice().iter_mut().zip(hidden.as_slice()) {
        *g *= p.activation.grad_from_output(h);
    }
    let w_in = x.t_matmul(&d_hidden)?;
    let b_in = d_hidden.column_sums();
    let d_x = if want_input_grad {
        Some(d_hidden.matmul_t(&p.w_in)?)
    } else {
        None
    };
    Ok((
        MlpParams {
            w_in,
            b_in,
            w_out,
            b_out,
            activation: p.activation,
        },
        d_x,
    ))
}
