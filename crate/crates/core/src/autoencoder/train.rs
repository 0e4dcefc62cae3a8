use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{binarize, downsample, Mask};
use crate::quant::{utilization, CodebookLearning, Scheme};

use super::{Adam, Model, NetParams, MASK_THRESHOLD};

/// Samples used to seed codebooks from data before the first step.
pub const DATA_INIT_SAMPLES: usize = 2048;

/// Network inputs and binary targets on the model grid.
#[derive(Clone, Debug)]
pub struct PreparedBatch {
    pub input: Array2<f64>,
    pub targets: Vec<Vec<bool>>,
}

/// Area-averages each mask onto an `n × n` grid. Masks already at grid
/// size are their own targets; others are thresholded after averaging.
pub fn prepare(masks: &[Mask], n: usize) -> Result<PreparedBatch> {
    if masks.is_empty() {
        return Err(Error::EmptyInput("training batch"));
    }
    let first = masks[0].dims();
    let mut input = Array2::zeros((masks.len(), n * n));
    let mut targets = Vec::with_capacity(masks.len());
    for (i, m) in masks.iter().enumerate() {
        if m.dims() != first {
            return Err(Error::dims(first, m.dims()));
        }
        let g = downsample(m, n, n)?;
        input.row_mut(i).assign(&ndarray::ArrayView1::from(g.values()));
        if m.dims() == (n, n) {
            targets.push(m.bits().to_vec());
        } else {
            targets.push(binarize(&g, MASK_THRESHOLD, n, n)?.bits().to_vec());
        }
    }
    Ok(PreparedBatch { input, targets })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainStepReport {
    pub step: u64,
    pub recon_loss: f64,
    pub ce_loss: f64,
    pub dice_loss: f64,
    pub commit_loss: f64,
    pub total_loss: f64,
    /// Global L2 norm of the parameter gradient.
    pub grad_norm: f64,
    /// Mean over levels of the fraction of entries used in this batch.
    pub codebook_utilization: f64,
}

/// Owns a model and its optimizer state; every source of randomness is
/// drawn from one seeded stream so runs are reproducible bit for bit.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    pub step: u64,
}

impl Trainer {
    pub fn new(model: Model) -> Self {
        let c = &model.config;
        let adam = Adam::new(&model.params, c.learning_rate, c.beta1, c.beta2, c.adam_eps);
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(1);
        Trainer {
            model,
            adam,
            rng,
            step: 0,
        }
    }

    fn learns_codebooks(&self) -> bool {
        matches!(self.model.config.quant.scheme, Scheme::Vq | Scheme::Rq) && !self.model.config.freeze_codebooks
    }

    /// Seeds every codebook from encoder outputs: level 0 from `z`, each
    /// later level from the residuals left by the levels before it.
    pub fn seed_codebooks(&mut self, masks: &[Mask]) -> Result<()> {
        if !self.learns_codebooks() || masks.is_empty() {
            return Ok(());
        }
        let noise = self.model.config.quant.reseed_noise;
        let batch = prepare(masks, self.model.config.grid_size)?;
        let (_, _, z) = self.model.encode_batch(&batch.input);
        let mut current: Vec<Vec<f64>> = z.rows().into_iter().map(|r| r.to_vec()).collect();
        let n_books = self.model.codebooks.books.len();
        for level in 0..n_books {
            let inputs: Vec<&[f64]> = current.iter().map(Vec::as_slice).collect();
            let book = &mut self.model.codebooks.books[level];
            book.seed_from_inputs(&inputs, noise, &mut self.rng);
            for r in current.iter_mut() {
                let (k, _) = book.nearest(r)?;
                for (x, e) in r.iter_mut().zip(book.vector(k)) {
                    *x -= e;
                }
            }
        }
        Ok(())
    }

    pub fn train_step(&mut self, batch: &[Mask]) -> Result<TrainStepReport> {
        let prepared = prepare(batch, self.model.config.grid_size)?;
        self.train_step_prepared(&prepared)
    }

    pub fn train_step_prepared(&mut self, batch: &PreparedBatch) -> Result<TrainStepReport> {
        let bp = self.model.backprop(&batch.input, &batch.targets)?;
        let grad_norm = bp.grads.norm();
        self.adam.step(&mut self.model.params, &bp.grads);
        if !self.model.params.is_finite() {
            return Err(Error::NonFiniteGradient {
                tensor: first_non_finite(&self.model.params),
            });
        }

        let steps = bp.forward.quant.first().map_or(0, |q| q.codes.len());
        let level_size = self.model.codebooks.codebook_size;
        let codebook_utilization = if steps == 0 {
            0.0
        } else {
            (0..steps)
                .map(|l| {
                    let codes: Vec<usize> = bp.forward.quant.iter().map(|q| q.codes[l]).collect();
                    utilization(level_size, &codes)
                })
                .sum::<f64>()
                / steps as f64
        };

        if self.learns_codebooks() {
            self.update_codebooks(&bp.forward.z, &bp.forward.quant)?;
        }

        self.step += 1;
        let l = bp.loss;
        Ok(TrainStepReport {
            step: self.step,
            recon_loss: l.ce + l.dice,
            ce_loss: l.ce,
            dice_loss: l.dice,
            commit_loss: l.commit,
            total_loss: l.total,
            grad_norm,
            codebook_utilization,
        })
    }

    fn update_codebooks(&mut self, z: &Array2<f64>, traces: &[crate::quant::QuantResult]) -> Result<()> {
        let q = &self.model.config.quant;
        let set = &mut self.model.codebooks;
        let mut per_book: Vec<Vec<(usize, &[f64])>> = vec![Vec::new(); set.books.len()];
        for (row, trace) in z.rows().into_iter().zip(traces) {
            let z = row.to_slice().expect("row");
            for (level, &code) in trace.codes.iter().enumerate() {
                // level ℓ quantizes the residual left by level ℓ−1
                let input = if level == 0 { z } else { trace.residuals[level - 1].as_slice() };
                per_book[set.book_index(level)].push((code, input));
            }
        }
        let policy = q.reseed_policy();
        for (book, assignments) in set.books.iter_mut().zip(&per_book) {
            match q.learning {
                CodebookLearning::Ema { decay } => book.ema_update(assignments, decay, &policy, &mut self.rng)?,
                CodebookLearning::Gradient { lr } => book.gradient_update(assignments, lr, traces.len())?,
            }
        }
        Ok(())
    }

    /// Runs the configured number of epochs over `data`, shuffling with the
    /// trainer's stream each epoch. Writes one JSON line per step to `log`.
    pub fn fit(&mut self, data: &[Mask], mut log: Option<&mut dyn Write>) -> Result<Vec<TrainStepReport>> {
        if data.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        let cfg = self.model.config.clone();
        if self.step == 0 && cfg.quant.data_init && cfg.epochs > 0 {
            let take = data.len().min(DATA_INIT_SAMPLES);
            self.seed_codebooks(&data[..take])?;
        }
        let prepared = prepare(data, cfg.grid_size)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let total = (cfg.epochs * data.len().div_ceil(cfg.batch_size)) as u64;
        let mut reports = Vec::new();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(cfg.batch_size) {
                self.adam.lr = cfg.lr_schedule.rate(cfg.learning_rate, reports.len() as u64, total);
                let batch = PreparedBatch {
                    input: prepared.input.select(ndarray::Axis(0), chunk),
                    targets: chunk.iter().map(|&i| prepared.targets[i].clone()).collect(),
                };
                let report = self.train_step_prepared(&batch)?;
                if let Some(w) = log.as_deref_mut() {
                    write_log_line(w, epoch, &report)?;
                }
                reports.push(report);
            }
        }
        self.adam.lr = cfg.learning_rate;
        Ok(reports)
    }
}

#[derive(Serialize)]
struct LogLine<'a> {
    epoch: usize,
    #[serde(flatten)]
    report: &'a TrainStepReport,
}

/// One metrics-log record: `{"epoch":…,"step":…,"recon_loss":…,…}`.
pub fn write_log_line(w: &mut dyn Write, epoch: usize, report: &TrainStepReport) -> Result<()> {
    serde_json::to_writer(&mut *w, &LogLine { epoch, report })?;
    w.write_all(b"\n")?;
    Ok(())
}

fn first_non_finite(p: &NetParams) -> String {
    p.tensors()
        .into_iter()
        .find(|(_, _, v)| v.iter().any(|x| !x.is_finite()))
        .map_or_else(|| "unknown".to_string(), |(n, _, _)| n.to_string())
}
