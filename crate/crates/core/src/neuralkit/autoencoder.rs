use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::{squash, squash_grad, Matrix, NeuralError, Trainable};

pub const AE_INPUT: usize = 5;
pub const AE_LATENT: usize = 3;

/// Fully connected layer `y = W x + b` with `W` shaped `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Matrix,
    pub b: Matrix,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Dense {
        Dense {
            w: Matrix::zeros(output, input),
            b: Matrix::zeros(output, 1),
        }
    }

    pub fn random(input: usize, output: usize, rng: &mut impl Rng) -> Dense {
        Dense {
            w: Matrix::random_fan_in(output, input, input, rng),
            b: Matrix::random_fan_in(output, 1, input, rng),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.w.matvec(x);
        y.iter_mut().zip(self.b.data()).for_each(|(v, b)| *v += b);
        y
    }

    /// Accumulates parameter gradients for upstream `dy` and returns `dx`.
    fn backward(&self, x: &[f64], dy: &[f64], dw: &mut Matrix, db: &mut Matrix) -> Vec<f64> {
        for (r, &g) in dy.iter().enumerate() {
            db.add_at(r, 0, g);
            for (c, &xc) in x.iter().enumerate() {
                dw.add_at(r, c, g * xc);
            }
        }
        self.w.t_matvec(dy)
    }
}

/// 5 → 3 (ReLU) → 5 (Tanh) autoencoder over a measure vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub enc: Dense,
    pub dec: Dense,
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Clone, Debug)]
pub struct AeTrace {
    pub input: Vec<f64>,
    pub latent_pre: Vec<f64>,
    pub latent: Vec<f64>,
    pub output: Vec<f64>,
}

impl Autoencoder {
    pub fn zeros() -> Autoencoder {
        Autoencoder {
            enc: Dense::zeros(AE_INPUT, AE_LATENT),
            dec: Dense::zeros(AE_LATENT, AE_INPUT),
        }
    }

    pub fn random(rng: &mut impl Rng) -> Autoencoder {
        Autoencoder {
            enc: Dense::random(AE_INPUT, AE_LATENT, rng),
            dec: Dense::random(AE_LATENT, AE_INPUT, rng),
        }
    }

    pub fn forward(&self, v: &[f64]) -> Result<[f64; AE_INPUT], NeuralError> {
        if v.len() != AE_INPUT {
            return Err(NeuralError::DimensionMismatch(format!(
                "autoencoder expects {AE_INPUT} inputs, got {}",
                v.len()
            )));
        }
        let out = self.trace(v).output;
        Ok(out.try_into().expect("decoder width"))
    }

    pub fn trace(&self, v: &[f64]) -> AeTrace {
        let latent_pre = self.enc.forward(v);
        let latent: Vec<f64> = latent_pre.iter().map(|&z| z.max(0.0)).collect();
        let output = self.dec.forward(&latent).into_iter().map(f64::tanh).collect();
        AeTrace {
            input: v.to_vec(),
            latent_pre,
            latent,
            output,
        }
    }

    /// Backprop of `d_output` into `grads` (enc.w, enc.b, dec.w, dec.b).
    fn backward(&self, t: &AeTrace, d_output: &[f64], grads: &mut [Matrix]) {
        let d_pre: Vec<f64> = d_output
            .iter()
            .zip(&t.output)
            .map(|(g, y)| g * (1.0 - y * y))
            .collect();
        let (enc_g, dec_g) = grads.split_at_mut(2);
        let (dec_w, dec_b) = dec_g.split_at_mut(1);
        let d_latent = self.dec.backward(&t.latent, &d_pre, &mut dec_w[0], &mut dec_b[0]);
        let d_latent_pre: Vec<f64> = d_latent
            .iter()
            .zip(&t.latent_pre)
            .map(|(g, &z)| if z > 0.0 { *g } else { 0.0 })
            .collect();
        let (enc_w, enc_b) = enc_g.split_at_mut(1);
        self.enc.backward(&t.input, &d_latent_pre, &mut enc_w[0], &mut enc_b[0]);
    }
}

/// Linear read-out applied to an autoencoder output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueHead {
    pub w: Matrix,
    pub bias: Matrix,
}

impl ValueHead {
    pub fn zeros() -> ValueHead {
        ValueHead {
            w: Matrix::zeros(AE_INPUT, 1),
            bias: Matrix::zeros(1, 1),
        }
    }

    pub fn random(rng: &mut impl Rng) -> ValueHead {
        ValueHead {
            w: Matrix::random_fan_in(AE_INPUT, 1, AE_INPUT, rng),
            bias: Matrix::zeros(1, 1),
        }
    }

    pub fn apply(&self, y: &[f64]) -> f64 {
        y.iter().zip(self.w.data()).map(|(a, b)| a * b).sum::<f64>() + self.bias.get(0, 0)
    }
}

/// `dot(ae(v), head.w) + bias`.
pub fn score(ae: &Autoencoder, head: &ValueHead, v: &[f64]) -> Result<f64, NeuralError> {
    Ok(head.apply(&ae.forward(v)?))
}

/// An autoencoder with its value head, trained so that the squashed score
/// tracks a label while the decoder also reconstructs the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredAutoencoder {
    pub ae: Autoencoder,
    pub head: ValueHead,
    pub reconstruction_weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreSample {
    pub measures: [f64; AE_INPUT],
    pub label: f64,
}

impl ScoredAutoencoder {
    pub fn new(ae: Autoencoder, head: ValueHead, reconstruction_weight: f64) -> Self {
        ScoredAutoencoder {
            ae,
            head,
            reconstruction_weight,
        }
    }

    pub fn raw_score(&self, v: &[f64]) -> f64 {
        self.head.apply(&self.ae.trace(v).output)
    }

    /// Score mapped to `(0, 1)`.
    pub fn predict(&self, v: &[f64]) -> f64 {
        squash(self.raw_score(v))
    }

    /// Mean supervised loss alone, without the reconstruction term.
    pub fn supervised_loss(&self, batch: &[ScoreSample], kind: LossKind) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|s| kind.value(self.predict(&s.measures), s.label))
            .sum();
        total / batch.len().max(1) as f64
    }
}

impl Trainable for ScoredAutoencoder {
    type Sample = ScoreSample;

    fn parameters(&self) -> Vec<&Matrix> {
        vec![
            &self.ae.enc.w,
            &self.ae.enc.b,
            &self.ae.dec.w,
            &self.ae.dec.b,
            &self.head.w,
            &self.head.bias,
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.ae.enc.w,
            &mut self.ae.enc.b,
            &mut self.ae.dec.w,
            &mut self.ae.dec.b,
            &mut self.head.w,
            &mut self.head.bias,
        ]
    }

    fn loss_and_grad(&self, batch: &[ScoreSample], kind: LossKind) -> Result<(f64, Vec<Matrix>), NeuralError> {
        if batch.is_empty() {
            return Err(NeuralError::DimensionMismatch("empty batch".into()));
        }
        let mut grads: Vec<Matrix> = self.parameters().iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        let n = batch.len() as f64;
        let rw = self.reconstruction_weight;
        let mut loss = 0.0;
        for s in batch {
            let t = self.ae.trace(&s.measures);
            let raw = self.head.apply(&t.output);
            let pred = squash(raw);
            loss += kind.value(pred, s.label) / n;
            let d_raw = kind.grad(pred, s.label) / n * squash_grad(raw);

            // Head: raw = w·y + b.
            for (i, &y) in t.output.iter().enumerate() {
                grads[4].add_at(i, 0, d_raw * y);
            }
            grads[5].add_at(0, 0, d_raw);
            let mut d_out: Vec<f64> = self.head.w.data().iter().map(|w| d_raw * w).collect();

            if rw != 0.0 {
                // Reconstruction: rw · mean_k (y_k − v_k)².
                let m = AE_INPUT as f64;
                for (k, (y, v)) in t.output.iter().zip(&s.measures).enumerate() {
                    let r = y - v;
                    loss += rw * r * r / m / n;
                    d_out[k] += rw * 2.0 * r / m / n;
                }
            }
            self.ae.backward(&t, &d_out, &mut grads[..4]);
        }
        Ok((loss, grads))
    }
}
