//! Batched forward and backward passes.
//!
//! Rows are samples. The quantizer sits between `z` and `q`; its backward
//! pass is straight-through (`∂L/∂z = ∂L/∂q`) plus the commitment gradient
//! `2·Σℓ rℓ`, which follows from the stop-gradient on every retrieved code.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::quant::{fsq_quantize, QuantResult, Scheme};

use super::loss::{bce_logit, dice_sums, sigmoid, DICE_SMOOTH};
use super::{Model, NetParams};

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

fn add_bias(mut a: Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    a += b;
    a
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Forward {
    pub input: Array2<f64>,
    pub enc_pre: Array2<f64>,
    pub enc_hidden: Array2<f64>,
    pub z: Array2<f64>,
    /// FSQ only: projected `z`.
    pub projected: Option<Array2<f64>>,
    /// FSQ only: selected level vectors.
    pub levels: Option<Array2<f64>>,
    pub quant: Vec<QuantResult>,
    pub q: Array2<f64>,
    pub dec_pre: Array2<f64>,
    pub dec_hidden: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Batch-mean loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub ce: f64,
    pub dice: f64,
    pub commit: f64,
    pub total: f64,
}

pub struct Backprop {
    pub forward: Forward,
    pub loss: LossParts,
    pub grads: NetParams,
    /// Gradient with respect to the pre-quantizer embedding `z`.
    pub grad_z: Array2<f64>,
}

impl Model {
    pub fn encode_batch(&self, input: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let p = &self.params;
        let enc_pre = add_bias(input.dot(&p.enc_w1), &p.enc_b1);
        let enc_hidden = enc_pre.mapv(silu);
        let z = add_bias(enc_hidden.dot(&p.enc_w2), &p.enc_b2);
        (enc_pre, enc_hidden, z)
    }

    pub fn decode_batch(&self, q: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let p = &self.params;
        let dec_pre = add_bias(q.dot(&p.dec_w1), &p.dec_b1);
        let dec_hidden = dec_pre.mapv(silu);
        let logits = add_bias(dec_hidden.dot(&p.dec_w2), &p.dec_b2);
        (dec_pre, dec_hidden, logits)
    }

    /// Quantizes each row of `z`. Returns the traces, the decoder input `q`,
    /// and for FSQ the projected and level matrices.
    #[allow(clippy::type_complexity)]
    pub fn quantize_batch(
        &self,
        z: &Array2<f64>,
    ) -> Result<(Vec<QuantResult>, Array2<f64>, Option<Array2<f64>>, Option<Array2<f64>>)> {
        let (b, d) = z.dim();
        match self.config.quant.scheme {
            Scheme::Identity => {
                let traces = z
                    .rows()
                    .into_iter()
                    .map(|row| QuantResult {
                        codes: vec![],
                        retrieved: vec![],
                        residuals: vec![],
                        quantized: row.to_vec(),
                        commit_loss: 0.0,
                    })
                    .collect();
                Ok((traces, z.clone(), None, None))
            }
            Scheme::Fsq => {
                let proj = self.params.fsq_project.as_ref().expect("FSQ projection");
                let unproj = self.params.fsq_unproject.as_ref().expect("FSQ de-projection");
                let u = z.dot(proj);
                let l = u.ncols();
                let mut levels = Array2::zeros((b, l));
                let mut traces = Vec::with_capacity(b);
                for (i, row) in u.rows().into_iter().enumerate() {
                    let r = fsq_quantize(row.as_slice().expect("row"), &self.config.quant)?;
                    levels.row_mut(i).assign(&Array1::from(r.quantized.clone()));
                    traces.push(r);
                }
                let q = levels.dot(unproj);
                Ok((traces, q, Some(u), Some(levels)))
            }
            Scheme::Vq | Scheme::Rq => {
                let books = self.codebooks.levels();
                let mut q = Array2::zeros((b, d));
                let mut traces = Vec::with_capacity(b);
                for (i, row) in z.rows().into_iter().enumerate() {
                    let r = crate::quant::rq_quantize(row.as_slice().expect("row"), &books)?;
                    q.row_mut(i).assign(&Array1::from(r.quantized.clone()));
                    traces.push(r);
                }
                Ok((traces, q, None, None))
            }
        }
    }

    pub fn forward(&self, input: &Array2<f64>) -> Result<Forward> {
        let (enc_pre, enc_hidden, z) = self.encode_batch(input);
        let (quant, q, projected, levels) = self.quantize_batch(&z)?;
        let (dec_pre, dec_hidden, logits) = self.decode_batch(&q);
        Ok(Forward {
            input: input.clone(),
            enc_pre,
            enc_hidden,
            z,
            projected,
            levels,
            quant,
            q,
            dec_pre,
            dec_hidden,
            logits,
        })
    }

    /// Loss and gradients of `ce + dice + λ·commit`, each averaged over the
    /// batch (cross-entropy is also averaged over cells).
    pub fn backprop(&self, input: &Array2<f64>, targets: &[Vec<bool>]) -> Result<Backprop> {
        let fwd = self.forward(input)?;
        let p = &self.params;
        let lambda = self.config.quant.commit_weight;
        let (b, n_out) = fwd.logits.dim();
        if targets.len() != b || targets.iter().any(|t| t.len() != n_out) {
            return Err(Error::InvalidTrainConfig("targets do not match the batch shape".into()));
        }
        let inv_b = 1.0 / b as f64;
        let inv_n = 1.0 / n_out as f64;

        let mut loss = LossParts::default();
        let mut d_logits = Array2::zeros((b, n_out));
        for (i, t) in targets.iter().enumerate() {
            let x = fwd.logits.row(i);
            let x = x.as_slice().expect("row");
            let probs: Vec<f64> = x.iter().map(|&v| sigmoid(v)).collect();
            let ce: f64 = x.iter().zip(t).map(|(&v, &t)| bce_logit(v, t as u8 as f64)).sum::<f64>() * inv_n;
            let (inter, sum_p, sum_t) = dice_sums(&probs, t);
            let num = 2.0 * inter + DICE_SMOOTH;
            let den = sum_p + sum_t + DICE_SMOOTH;
            loss.ce += ce * inv_b;
            loss.dice += (1.0 - num / den) * inv_b;
            loss.commit += fwd.quant[i].commit_loss * inv_b;

            let mut row = d_logits.row_mut(i);
            for j in 0..n_out {
                let pj = probs[j];
                let tj = t[j] as u8 as f64;
                let d_ce = (pj - tj) * inv_n;
                // ∂dice/∂p_j = −(2 t_j den − num) / den²
                let d_dice_dp = -(2.0 * tj * den - num) / (den * den);
                row[j] = (d_ce + d_dice_dp * pj * (1.0 - pj)) * inv_b;
            }
        }
        loss.total = loss.ce + loss.dice + lambda * loss.commit;

        let mut grads = p.zeros_like();
        grads.dec_w2 = fwd.dec_hidden.t().dot(&d_logits);
        grads.dec_b2 = d_logits.sum_axis(Axis(0));
        let d_dec_hidden = d_logits.dot(&p.dec_w2.t());
        let d_dec_pre = d_dec_hidden * &fwd.dec_pre.mapv(silu_grad);
        grads.dec_w1 = fwd.q.t().dot(&d_dec_pre);
        grads.dec_b1 = d_dec_pre.sum_axis(Axis(0));
        let d_q = d_dec_pre.dot(&p.dec_w1.t());

        let mut grad_z = match self.config.quant.scheme {
            Scheme::Fsq => {
                let proj = p.fsq_project.as_ref().expect("FSQ projection");
                let unproj = p.fsq_unproject.as_ref().expect("FSQ de-projection");
                let levels = fwd.levels.as_ref().expect("levels");
                let u = fwd.projected.as_ref().expect("projected");
                grads.fsq_unproject = Some(levels.t().dot(&d_q));
                let d_levels = d_q.dot(&unproj.t());
                // rounding is straight-through; the tanh squash is differentiated
                let d_u = d_levels * &u.mapv(|x| 1.0 - x.tanh().powi(2));
                grads.fsq_project = Some(fwd.z.t().dot(&d_u));
                d_u.dot(&proj.t())
            }
            _ => d_q,
        };
        // FSQ has no codebook to commit to.
        if lambda > 0.0 && self.config.quant.scheme != Scheme::Fsq {
            for (i, trace) in fwd.quant.iter().enumerate() {
                let mut row = grad_z.row_mut(i);
                for r in &trace.residuals {
                    for (g, &x) in row.iter_mut().zip(r) {
                        *g += 2.0 * lambda * inv_b * x;
                    }
                }
            }
        }

        grads.enc_w2 = fwd.enc_hidden.t().dot(&grad_z);
        grads.enc_b2 = grad_z.sum_axis(Axis(0));
        let d_enc_hidden = grad_z.dot(&p.enc_w2.t());
        let d_enc_pre = d_enc_hidden * &fwd.enc_pre.mapv(silu_grad);
        grads.enc_w1 = fwd.input.t().dot(&d_enc_pre);
        grads.enc_b1 = d_enc_pre.sum_axis(Axis(0));

        for (name, _, values) in grads.tensors() {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { tensor: name.to_string() });
            }
        }
        if grad_z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { tensor: "z".to_string() });
        }

        Ok(Backprop {
            forward: fwd,
            loss,
            grads,
            grad_z,
        })
    }
}
