use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Matrix, NnError, Tape, Var};

/// Uniform initialization in `±√(6/(d_in+d_out))`.
pub(crate) fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize) -> Matrix {
    let limit = libm::sqrt(6.0 / (d_in + d_out) as f64);
    let data: Vec<f64> = (0..d_in * d_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix::from_vec(d_in, d_out, data).expect("length matches shape")
}

/// Fully connected layer `x·W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize) -> Self {
        Self {
            weight: glorot_uniform(rng, d_in, d_out),
            bias: Matrix::zeros(1, d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, act: Activation) -> Result<Var, NnError> {
        let w = tape.leaf(self.weight.clone());
        let b = tape.leaf(self.bias.clone());
        let y = tape.matmul(x, w)?;
        let y = tape.add_bias(y, b)?;
        Ok(tape.activation(y, act))
    }
}

/// Graph convolution `σ(Â·H·W)`; no bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    pub weight: Matrix,
}

impl GcnLayer {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize) -> Self {
        Self {
            weight: glorot_uniform(rng, d_in, d_out),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        h: Var,
        adj: &Matrix,
        act: Activation,
    ) -> Result<Var, NnError> {
        let w = tape.leaf(self.weight.clone());
        gcn_apply(tape, h, w, adj, act)
    }
}

/// `σ(Â·(H·W))` on the tape with an already-registered weight.
pub(crate) fn gcn_apply(
    tape: &mut Tape,
    h: Var,
    w: Var,
    adj: &Matrix,
    act: Activation,
) -> Result<Var, NnError> {
    let hw = tape.matmul(h, w)?;
    let agg = tape.propagate(adj, hw)?;
    Ok(tape.activation(agg, act))
}

/// Symmetric normalization `D̃^{-1/2} (A + I) D̃^{-1/2}` of a 0/1 adjacency.
pub fn normalize_adjacency(adj: &Matrix) -> Matrix {
    let n = adj.rows();
    debug_assert_eq!(n, adj.cols());
    let degree: Vec<f64> = (0..n)
        .map(|i| 1.0 + (0..n).filter(|&j| j != i).map(|j| adj.get(i, j)).sum::<f64>())
        .collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = if i == j { 1.0 } else { adj.get(i, j) };
            if a != 0.0 {
                out.set(i, j, a / libm::sqrt(degree[i] * degree[j]));
            }
        }
    }
    out
}

/// One graph-convolution layer evaluated outside any training context.
pub fn gcn_forward(h: &Matrix, adj: &Matrix, layer: &GcnLayer, act: Activation) -> Result<Matrix, NnError> {
    if h.rows() != adj.rows() {
        return Err(NnError::Shape {
            op: "gcn_forward",
            left: adj.shape(),
            right: h.shape(),
        });
    }
    let mut tape = Tape::new();
    let x = tape.constant(h.clone());
    let y = layer.forward(&mut tape, x, adj, act)?;
    Ok(tape.value(y).clone())
}
