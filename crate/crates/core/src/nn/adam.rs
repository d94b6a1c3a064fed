use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Matrix, NnError};

/// Adaptive-moment (Adam) gradient descent over a list of parameter matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamUpdater {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl ParamUpdater {
    pub fn new<'a, I>(learning_rate: f64, params: I) -> Self
    where
        I: IntoIterator<Item = &'a Matrix>,
    {
        Self::with_moments(learning_rate, 0.9, 0.999, params)
    }

    pub fn with_moments<'a, I>(learning_rate: f64, beta1: f64, beta2: f64, params: I) -> Self
    where
        I: IntoIterator<Item = &'a Matrix>,
    {
        let zeros: Vec<Matrix> = params.into_iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one descent step in place. Gradients are validated before any
    /// parameter is touched.
    pub fn update<'a, I>(&mut self, params: I, grads: &[Matrix]) -> Result<(), NnError>
    where
        I: IntoIterator<Item = &'a mut Matrix>,
    {
        let mut params: Vec<&'a mut Matrix> = params.into_iter().collect();
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(NnError::ParamCount {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NnError::Shape {
                    op: "update_params",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(NnError::NonFinite("gradient"));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon);
            }
        }
        Ok(())
    }
}
