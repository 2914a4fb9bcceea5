use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::Matrix;
use crate::error::Result;

pub const INIT_BIAS: f64 = 0.01;

/// Fully connected layer `y = x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in × out`
    pub weight: Matrix,
    /// `1 × out`
    pub bias: Matrix,
}

impl Dense {
    /// He-normal weights; a small positive bias keeps ReLU units alive so
    /// no input maps to an all-zero activation at the start.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let std = (2.0 / input as f64).sqrt();
        let data = (0..input * output)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
            .collect();
        Self {
            weight: Matrix::new(input, output, data).expect("finite init"),
            bias: Matrix::filled(1, output, INIT_BIAS),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(input, output),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul(&self.weight)?;
        y.add_row_broadcast(&self.bias)?;
        Ok(y)
    }

    /// Returns `(dx, grads)` for upstream gradient `dy` at input `x`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix) -> Result<(Matrix, Dense)> {
        let weight = x.matmul_tn(dy)?;
        let bias = dy.sum_rows();
        let dx = dy.matmul_nt(&self.weight)?;
        Ok((dx, Dense { weight, bias }))
    }
}

/// Multi-layer perceptron with ReLU between layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations retained by [`Mlp::forward_trace`].
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input to each layer; `inputs[0]` is the network input and `inputs[k]`
    /// for `k ≥ 1` is the post-ReLU activation of hidden layer `k − 1`.
    pub inputs: Vec<Matrix>,
    pub output: Matrix,
}

impl MlpTrace {
    /// Post-ReLU activation of hidden layer `k`.
    pub fn hidden(&self, k: usize) -> &Matrix {
        &self.inputs[k + 1]
    }
}

impl Mlp {
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let layers = dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_trace(x)?.output)
    }

    pub fn forward_trace(&self, x: &Matrix) -> Result<MlpTrace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h)?;
            if k < last {
                y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut h, y));
        }
        Ok(MlpTrace { inputs, output: h })
    }

    /// Back-propagates `dy` through the network.
    ///
    /// `hidden_grads[k]`, when present, is added to the gradient of the
    /// post-ReLU activation of hidden layer `k`.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        dy: &Matrix,
        hidden_grads: &[Option<Matrix>],
    ) -> Result<(Matrix, Mlp)> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = dy.clone();
        for k in (0..self.layers.len()).rev() {
            let (mut dx, g) = self.layers[k].backward(&trace.inputs[k], &d)?;
            grads.push(g);
            if k > 0 {
                if let Some(Some(extra)) = hidden_grads.get(k - 1) {
                    dx.add_scaled(1.0, extra)?;
                }
                // ReLU gate: the stored activation is positive exactly where the pre-activation was.
                for (g, a) in dx.data_mut().iter_mut().zip(trace.inputs[k].data()) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            d = dx;
        }
        grads.reverse();
        Ok((d, Mlp { layers: grads }))
    }

    /// `self += alpha · other`, parameter by parameter.
    pub fn add_scaled(&mut self, alpha: f64, other: &Mlp) -> Result<()> {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_scaled(alpha, &b.weight)?;
            a.bias.add_scaled(alpha, &b.bias)?;
        }
        Ok(())
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.{k}.weight"), &l.weight));
            out.push((format!("{prefix}.{k}.bias"), &l.bias));
        }
        out
    }

    pub fn named_params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("{prefix}.{k}.weight"), &mut l.weight));
            out.push((format!("{prefix}.{k}.bias"), &mut l.bias));
        }
        out
    }
}
