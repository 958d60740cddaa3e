use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Orthogonal initialization gains for hidden and output layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Init {
    pub hidden_gain: f64,
    pub output_gain: f64,
}

/// Feedforward network, tanh on hidden layers, linear output. Batches are
/// stored column-wise: an input batch is `inputs × batch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub init: Option<Init>,
}

/// Layer outputs kept for the backward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct Cache {
    pub acts: Vec<DMatrix<f64>>,
}

impl Cache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.acts.last().expect("non-empty cache")
    }
}

#[derive(Debug, Clone)]
pub struct Grads {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> DMatrix<f64> {
    let (r, c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let g = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let rdiag = qr.r().diagonal();
    for j in 0..c {
        if rdiag[j] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    q * gain
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], init: Init, rng: &mut R) -> Self {
        let layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let gain = if l + 1 == layers { init.output_gain } else { init.hidden_gain };
            weights.push(orthogonal(sizes[l + 1], sizes[l], gain, rng));
            biases.push(DVector::zeros(sizes[l + 1]));
        }
        Self { sizes: sizes.to_vec(), weights, biases, init: Some(init) }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let weights = sizes.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect();
        let biases = sizes[1..].iter().map(|&n| DVector::zeros(n)).collect();
        Self { sizes: sizes.to_vec(), weights, biases, init: None }
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().expect("sizes")
    }

    pub fn forward_cache(&self, x: &DMatrix<f64>) -> Cache {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x.clone());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * acts.last().expect("input");
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Cache { acts }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward_cache(x).acts.pop().expect("output")
    }

    pub fn forward_one(&self, x: &[f64]) -> DVector<f64> {
        let mut a = DVector::from_column_slice(x);
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &a + b;
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            a = z;
        }
        a
    }

    /// Gradients of a scalar loss given `∂L/∂output` for the cached batch.
    pub fn backward(&self, cache: &Cache, d_out: &DMatrix<f64>) -> Grads {
        let layers = self.weights.len();
        let mut dw = vec![DMatrix::zeros(0, 0); layers];
        let mut db = vec![DVector::zeros(0); layers];
        let mut delta = d_out.clone();
        for l in (0..layers).rev() {
            dw[l] = &delta * cache.acts[l].transpose();
            db[l] = delta.column_sum();
            if l > 0 {
                let mut back = self.weights[l].transpose() * &delta;
                // tanh' = 1 − a²
                back.zip_apply(&cache.acts[l], |g, a| *g *= 1.0 - a * a);
                delta = back;
            }
        }
        Grads { weights: dw, biases: db }
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
    }

    /// Reads parameters in [`write_params`](Self::write_params) order; returns the count consumed.
    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&src[k..k + n]);
            k += n;
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&src[k..k + n]);
            k += n;
        }
        k
    }
}

impl Grads {
    pub fn write(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
    }
}
