//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls into the code under test except to read inputs.

#![allow(dead_code)]

use masktok::autoencoder::{prepare, Model, TrainConfig};
use masktok::mask::Mask;
use masktok::quant::{Codebook, QuantConfig, QuantResult, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// quantizer

/// Index of the nearest vector by a plain scan, lowest index on ties.
pub fn brute_argmin(z: &[f64], book: &Codebook) -> usize {
    let mut best = (0, f64::INFINITY);
    for k in 0..book.size() {
        let d: f64 = z.iter().zip(book.vector(k)).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Checks every level of a trace against exhaustive search and the
/// residual recurrence, bit for bit.
pub fn check_trace(z: &[f64], books: &[&Codebook], r: &QuantResult) -> Result<(), String> {
    let mut residual = z.to_vec();
    let mut q = vec![0.0; z.len()];
    for (level, book) in books.iter().enumerate() {
        let want = brute_argmin(&residual, book);
        if r.codes[level] != want {
            return Err(format!("level {level}: code {} but exhaustive argmin is {want}", r.codes[level]));
        }
        for (i, e) in book.vector(want).iter().enumerate() {
            residual[i] -= e;
            q[i] += e;
        }
        if r.residuals[level] != residual {
            return Err(format!("level {level}: residual recurrence broken"));
        }
        if r.retrieved[level] != book.vector(want) {
            return Err(format!("level {level}: retrieved vector differs"));
        }
    }
    if q.iter().zip(&r.quantized).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err("quantized is not the sum of retrieved vectors".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gradient check

/// Plain nested-loop dense layer: `x · W + b` with `W` row-major `rows × cols`.
fn dense(x: &[f64], w: &[f64], cols: usize, b: &[f64]) -> Vec<f64> {
    let mut out = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        for j in 0..cols {
            out[j] += xi * w[i * cols + j];
        }
    }
    out
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Parameter tensors by name, as plain vectors.
#[derive(Clone)]
pub struct Tensors {
    pub names: Vec<&'static str>,
    pub shapes: Vec<(usize, usize)>,
    pub values: Vec<Vec<f64>>,
}

impl Tensors {
    pub fn of(model: &Model) -> Self {
        let t = model.params.tensors();
        Tensors {
            names: t.iter().map(|x| x.0).collect(),
            shapes: t.iter().map(|x| x.1).collect(),
            values: t.iter().map(|x| x.2.to_vec()).collect(),
        }
    }

    fn get(&self, name: &str) -> (&[f64], usize) {
        let i = self.names.iter().position(|n| *n == name).expect(name);
        (&self.values[i], self.shapes[i].1)
    }
}

/// Everything the surrogate needs that is frozen at the unperturbed point.
pub struct Frozen {
    pub scheme: Scheme,
    pub lambda: f64,
    /// VQ/RQ: `q0 − z0` per sample, so `q(θ) = z(θ) + offset`.
    pub offset: Vec<Vec<f64>>,
    /// VQ/RQ: cumulative sums `e₁ + … + e_ℓ` per sample and level.
    pub partial_sums: Vec<Vec<Vec<f64>>>,
    /// FSQ: `levels0 − tanh(u0)` per sample.
    pub fsq_offset: Vec<Vec<f64>>,
}

pub fn encode(t: &Tensors, x: &[f64]) -> Vec<f64> {
    let (w1, h) = t.get("encoder.w1");
    let (b1, _) = t.get("encoder.b1");
    let (w2, d) = t.get("encoder.w2");
    let (b2, _) = t.get("encoder.b2");
    let hidden: Vec<f64> = dense(x, w1, h, b1).into_iter().map(silu).collect();
    dense(&hidden, w2, d, b2)
}

/// Per-sample loss terms given the pre-quantizer embedding of sample `i`.
fn sample_loss_from_z(t: &Tensors, f: &Frozen, i: usize, z: &[f64], target: &[bool]) -> (f64, f64, f64) {
    let (q, commit) = match f.scheme {
        Scheme::Identity => (z.to_vec(), 0.0),
        Scheme::Vq | Scheme::Rq => {
            let q: Vec<f64> = z.iter().zip(&f.offset[i]).map(|(a, b)| a + b).collect();
            let commit: f64 = f.partial_sums[i]
                .iter()
                .map(|s| z.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum();
            (q, commit)
        }
        Scheme::Fsq => {
            let (p, l) = t.get("fsq.project");
            let (unp, d) = t.get("fsq.unproject");
            let u = dense(z, p, l, &vec![0.0; l]);
            let levels: Vec<f64> = u.iter().zip(&f.fsq_offset[i]).map(|(a, o)| a.tanh() + o).collect();
            (dense(&levels, unp, d, &vec![0.0; d]), 0.0)
        }
    };
    let (w1, h) = t.get("decoder.w1");
    let (b1, _) = t.get("decoder.b1");
    let (w2, n) = t.get("decoder.w2");
    let (b2, _) = t.get("decoder.b2");
    let hidden: Vec<f64> = dense(&q, w1, h, b1).into_iter().map(silu).collect();
    let logits = dense(&hidden, w2, n, b2);
    let mut ce = 0.0;
    let (mut inter, mut sp, mut st) = (0.0, 0.0, 0.0);
    for (&x, &tt) in logits.iter().zip(target) {
        let p = sigmoid(x);
        let tv = if tt { 1.0 } else { 0.0 };
        ce += -(tv * p.ln() + (1.0 - tv) * (1.0 - p).ln());
        inter += p * tv;
        sp += p;
        st += tv;
    }
    let dice = 1.0 - (2.0 * inter + 1.0) / (sp + st + 1.0);
    (ce / n as f64, dice, commit)
}

/// Batch-mean `ce + dice + λ·commit` with the given embeddings.
pub fn loss_from_z(t: &Tensors, f: &Frozen, zs: &[Vec<f64>], targets: &[Vec<bool>]) -> f64 {
    let b = zs.len() as f64;
    let mut total = 0.0;
    for (i, (z, target)) in zs.iter().zip(targets).enumerate() {
        let (ce, dice, commit) = sample_loss_from_z(t, f, i, z, target);
        total += (ce + dice + f.lambda * commit) / b;
    }
    total
}

pub fn loss(t: &Tensors, f: &Frozen, inputs: &[Vec<f64>], targets: &[Vec<bool>]) -> f64 {
    let zs: Vec<Vec<f64>> = inputs.iter().map(|x| encode(t, x)).collect();
    loss_from_z(t, f, &zs, targets)
}

#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
    /// Oracle loss at the unperturbed point minus the model's loss.
    pub loss_gap: f64,
}

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor so gradients at roundoff level do not dominate.
pub const REL_FLOOR: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// The small gradient-check instance: 4×4 grid, d = 4, hidden = 8.
pub fn gradcheck_model(quant: QuantConfig, seed: u64) -> Model {
    let cfg = TrainConfig {
        grid_size: 4,
        embed_dim: 4,
        hidden: 8,
        seed,
        codebook_init_std: 0.5,
        quant,
        ..TrainConfig::default()
    };
    Model::init(cfg).expect("gradcheck config")
}

pub fn gradcheck_masks() -> Vec<Mask> {
    vec![
        Mask::from_u8(4, 4, &[0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0]).unwrap(),
        Mask::from_u8(4, 4, &[1, 1, 1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0]).unwrap(),
        Mask::from_u8(4, 4, &[0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 1, 0, 1, 1, 1]).unwrap(),
    ]
}

/// Compares every analytic parameter gradient and the pre-quantizer
/// gradient against central differences of the surrogate.
pub fn run_gradcheck(model: &Model) -> GradCheck {
    let batch = prepare(&gradcheck_masks(), model.config.grid_size).unwrap();
    let bp = model.backprop(&batch.input, &batch.targets).unwrap();
    let inputs: Vec<Vec<f64>> = batch.input.rows().into_iter().map(|r| r.to_vec()).collect();
    let z0: Vec<Vec<f64>> = bp.forward.z.rows().into_iter().map(|r| r.to_vec()).collect();

    let frozen = {
        let q0: Vec<Vec<f64>> = bp.forward.q.rows().into_iter().map(|r| r.to_vec()).collect();
        let offset = q0
            .iter()
            .zip(&z0)
            .map(|(q, z)| q.iter().zip(z).map(|(a, b)| a - b).collect())
            .collect();
        let partial_sums = bp
            .forward
            .quant
            .iter()
            .map(|tr| {
                let mut acc = vec![0.0; model.config.embed_dim];
                tr.retrieved
                    .iter()
                    .map(|e| {
                        for (a, x) in acc.iter_mut().zip(e) {
                            *a += x;
                        }
                        acc.clone()
                    })
                    .collect()
            })
            .collect();
        let fsq_offset = match (&bp.forward.levels, &bp.forward.projected) {
            (Some(lv), Some(u)) => lv
                .rows()
                .into_iter()
                .zip(u.rows())
                .map(|(l, u)| l.iter().zip(u.iter()).map(|(a, b)| a - b.tanh()).collect())
                .collect(),
            _ => vec![],
        };
        Frozen {
            scheme: model.config.quant.scheme,
            lambda: model.config.quant.commit_weight,
            offset,
            partial_sums,
            fsq_offset,
        }
    };

    let base = Tensors::of(model);
    let analytic = bp.grads.tensors();
    let mut out = GradCheck {
        checked: 0,
        max_rel_err: 0.0,
        worst: String::new(),
        loss_gap: loss(&base, &frozen, &inputs, &batch.targets) - bp.loss.total,
    };
    let mut record = |name: String, a: f64, n: f64| {
        let e = rel_err(a, n);
        out.checked += 1;
        if e >= out.max_rel_err {
            out.max_rel_err = e;
            out.worst = format!("{name}: analytic {a:e} numeric {n:e}");
        }
    };

    for (ti, (name, _, grad)) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let mut plus = base.clone();
            plus.values[ti][j] += FD_STEP;
            let mut minus = base.clone();
            minus.values[ti][j] -= FD_STEP;
            let numeric = (loss(&plus, &frozen, &inputs, &batch.targets)
                - loss(&minus, &frozen, &inputs, &batch.targets))
                / (2.0 * FD_STEP);
            record(format!("{name}[{j}]"), grad[j], numeric);
        }
    }
    for i in 0..z0.len() {
        for j in 0..z0[i].len() {
            let mut plus = z0.clone();
            plus[i][j] += FD_STEP;
            let mut minus = z0.clone();
            minus[i][j] -= FD_STEP;
            let numeric = (loss_from_z(&base, &frozen, &plus, &batch.targets)
                - loss_from_z(&base, &frozen, &minus, &batch.targets))
                / (2.0 * FD_STEP);
            record(format!("z[{i}][{j}]"), bp.grad_z[[i, j]], numeric);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// matching

/// Best mean IoU over every one-to-one matching of positive-IoU pairs
/// (None if no pair has positive IoU), plus the best total IoU.
pub fn brute_force_matching(m: &[Vec<f64>]) -> (Option<f64>, f64) {
    let n_pred = m.len();
    let n_truth = m.first().map_or(0, Vec::len);
    let mut best_mean: Option<f64> = None;
    let mut best_total = 0.0f64;
    fn rec(
        m: &[Vec<f64>],
        p: usize,
        used: &mut Vec<bool>,
        sum: f64,
        count: usize,
        best_mean: &mut Option<f64>,
        best_total: &mut f64,
    ) {
        if p == m.len() {
            if count > 0 {
                let mean = sum / count as f64;
                *best_mean = Some(best_mean.map_or(mean, |b| b.max(mean)));
            }
            *best_total = best_total.max(sum);
            return;
        }
        rec(m, p + 1, used, sum, count, best_mean, best_total);
        for t in 0..used.len() {
            if !used[t] && m[p][t] > 0.0 {
                used[t] = true;
                rec(m, p + 1, used, sum + m[p][t], count + 1, best_mean, best_total);
                used[t] = false;
            }
        }
    }
    let _ = n_pred;
    rec(m, 0, &mut vec![false; n_truth], 0.0, 0, &mut best_mean, &mut best_total);
    (best_mean, best_total)
}

// ---------------------------------------------------------------------------
// random inputs

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> Mask {
    Mask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap()
}

/// Writes one acceptance line straight to stderr so it survives the test
/// harness's output capture.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    use std::io::Write;
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "[acceptance {id}] {status} {name}: {detail}");
}
