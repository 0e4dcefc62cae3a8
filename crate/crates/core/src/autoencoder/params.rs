use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::quant::Scheme;

use super::TrainConfig;

/// Weights of the mask encoder and decoder.
///
/// Encoder: `grid → hidden (SiLU) → d`. Decoder: `d → hidden (SiLU) →
/// grid logits`. With FSQ the quantizer also owns a `d → L` projection and
/// an `L → d` de-projection.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub enc_w1: Array2<f64>,
    pub enc_b1: Array1<f64>,
    pub enc_w2: Array2<f64>,
    pub enc_b2: Array1<f64>,
    pub dec_w1: Array2<f64>,
    pub dec_b1: Array1<f64>,
    pub dec_w2: Array2<f64>,
    pub dec_b2: Array1<f64>,
    pub fsq_project: Option<Array2<f64>>,
    pub fsq_unproject: Option<Array2<f64>>,
}

fn normal_matrix(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Array2<f64> {
    let n = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || n.sample(rng))
}

impl NetParams {
    pub fn init(cfg: &TrainConfig, rng: &mut impl Rng) -> Self {
        let n = cfg.grid_size * cfg.grid_size;
        let (h, d) = (cfg.hidden, cfg.embed_dim);
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        let lecun = |fan_in: usize| (1.0 / fan_in as f64).sqrt();
        let enc_w1 = normal_matrix(n, h, he(n), rng);
        let enc_w2 = normal_matrix(h, d, lecun(h), rng);
        let dec_w1 = normal_matrix(d, h, he(d), rng);
        let dec_w2 = normal_matrix(h, n, lecun(h), rng);
        let (fsq_project, fsq_unproject) = match cfg.quant.scheme {
            Scheme::Fsq => {
                let l = cfg.quant.fsq_levels.len();
                (
                    Some(normal_matrix(d, l, lecun(d), rng)),
                    Some(normal_matrix(l, d, lecun(l), rng)),
                )
            }
            _ => (None, None),
        };
        NetParams {
            enc_w1,
            enc_b1: Array1::zeros(h),
            enc_w2,
            enc_b2: Array1::zeros(d),
            dec_w1,
            dec_b1: Array1::zeros(h),
            dec_w2,
            dec_b2: Array1::zeros(n),
            fsq_project,
            fsq_unproject,
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let z2 = |a: &Array2<f64>| Array2::zeros(a.raw_dim());
        let z1 = |a: &Array1<f64>| Array1::zeros(a.raw_dim());
        NetParams {
            enc_w1: z2(&self.enc_w1),
            enc_b1: z1(&self.enc_b1),
            enc_w2: z2(&self.enc_w2),
            enc_b2: z1(&self.enc_b2),
            dec_w1: z2(&self.dec_w1),
            dec_b1: z1(&self.dec_b1),
            dec_w2: z2(&self.dec_w2),
            dec_b2: z1(&self.dec_b2),
            fsq_project: self.fsq_project.as_ref().map(z2),
            fsq_unproject: self.fsq_unproject.as_ref().map(z2),
        }
    }

    /// `(name, shape, values)` for every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, (usize, usize), &[f64])> {
        fn m(a: &Array2<f64>) -> ((usize, usize), &[f64]) {
            (a.dim(), a.as_slice().expect("standard layout"))
        }
        fn v(a: &Array1<f64>) -> ((usize, usize), &[f64]) {
            ((1, a.len()), a.as_slice().expect("standard layout"))
        }
        let mut out = vec![
            ("encoder.w1", m(&self.enc_w1)),
            ("encoder.b1", v(&self.enc_b1)),
            ("encoder.w2", m(&self.enc_w2)),
            ("encoder.b2", v(&self.enc_b2)),
            ("decoder.w1", m(&self.dec_w1)),
            ("decoder.b1", v(&self.dec_b1)),
            ("decoder.w2", m(&self.dec_w2)),
            ("decoder.b2", v(&self.dec_b2)),
        ];
        if let Some(p) = &self.fsq_project {
            out.push(("fsq.project", m(p)));
        }
        if let Some(p) = &self.fsq_unproject {
            out.push(("fsq.unproject", m(p)));
        }
        out.into_iter().map(|(n, (s, d))| (n, s, d)).collect()
    }

    /// Mutable views in the same order as [`NetParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            ("encoder.w1", self.enc_w1.as_slice_mut().expect("standard layout")),
            ("encoder.b1", self.enc_b1.as_slice_mut().expect("standard layout")),
            ("encoder.w2", self.enc_w2.as_slice_mut().expect("standard layout")),
            ("encoder.b2", self.enc_b2.as_slice_mut().expect("standard layout")),
            ("decoder.w1", self.dec_w1.as_slice_mut().expect("standard layout")),
            ("decoder.b1", self.dec_b1.as_slice_mut().expect("standard layout")),
            ("decoder.w2", self.dec_w2.as_slice_mut().expect("standard layout")),
            ("decoder.b2", self.dec_b2.as_slice_mut().expect("standard layout")),
        ];
        if let Some(p) = &mut self.fsq_project {
            out.push(("fsq.project", p.as_slice_mut().expect("standard layout")));
        }
        if let Some(p) = &mut self.fsq_unproject {
            out.push(("fsq.unproject", p.as_slice_mut().expect("standard layout")));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    /// Global L2 norm over all tensors.
    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, _, v)| v.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Adam with bias correction, no weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: NetParams,
    pub v: NetParams,
}

impl Adam {
    pub fn new(params: &NetParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut NetParams, grads: &NetParams) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let g = grads.tensors();
        for (((_, p), (_, m)), ((_, v), (_, _, g))) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut().into_iter().zip(g))
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}
