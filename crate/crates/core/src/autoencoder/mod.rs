//! The mask tokenizer network.
//!
//! A mask is area-averaged onto a square grid, encoded by a small MLP into
//! a `d`-dimensional embedding `z`, quantized (by default two residual
//! steps over non-shared 256-entry codebooks), and decoded back to per-cell
//! logits. The reconstructed mask is the decoded probability grid
//! thresholded at 0.5 and resampled to the input resolution.

pub mod checkpoint;
pub mod loss;
mod net;
mod params;
mod train;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{binarize, downsample, iou, Mask, SoftGrid};
use crate::quant::{fsq_index_to_levels, CodebookSet, QuantConfig, QuantResult, Scheme};

pub use loss::{bce_loss, bce_with_logits, dice_loss, sigmoid};
pub use net::{Backprop, Forward, LossParts};
pub use params::{Adam, NetParams};
pub use train::{prepare, DATA_INIT_SAMPLES, PreparedBatch, TrainStepReport, Trainer};

/// Probability threshold for the final binarization.
pub const MASK_THRESHOLD: f64 = 0.5;

/// Learning-rate schedule across a [`Trainer::fit`] run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over the run.
    Cosine,
}

impl LrSchedule {
    /// Rate for step `t` (0-based) of `total`.
    pub fn rate(self, base: f64, t: u64, total: u64) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine if total == 0 => base,
            LrSchedule::Cosine => base * 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Side of the square grid the network sees.
    pub grid_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Standard deviation of the random codebook initialisation.
    pub codebook_init_std: f64,
    /// Skip all codebook updates.
    pub freeze_codebooks: bool,
    pub quant: QuantConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            grid_size: 32,
            embed_dim: 64,
            hidden: 256,
            learning_rate: 3e-3,
            lr_schedule: LrSchedule::Cosine,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 64,
            epochs: 40,
            seed: 0,
            codebook_init_std: 0.1,
            freeze_codebooks: false,
            quant: QuantConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTrainConfig(m.to_string()));
        if self.grid_size == 0 || self.embed_dim == 0 || self.hidden == 0 || self.batch_size == 0 {
            return bad("grid_size, embed_dim, hidden and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        if !(self.codebook_init_std > 0.0) {
            return bad("codebook_init_std must be positive");
        }
        self.quant.validate()
    }

    pub fn cells(&self) -> usize {
        self.grid_size * self.grid_size
    }
}

/// Trained (or freshly initialised) network plus its quantizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub params: NetParams,
    pub codebooks: CodebookSet,
}

impl Model {
    /// Seeded initialisation; the same config always yields the same model.
    pub fn init(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = NetParams::init(&config, &mut rng);
        let codebooks = CodebookSet::init(&config.quant, config.embed_dim, config.codebook_init_std, &mut rng)?;
        Ok(Model {
            config,
            params,
            codebooks,
        })
    }

    fn check_grid(&self, g: &SoftGrid) -> Result<()> {
        let n = self.config.grid_size;
        if g.dims() != (n, n) {
            return Err(Error::dims(g.dims(), (n, n)));
        }
        Ok(())
    }

    /// Area-averages a mask onto the model grid.
    pub fn grid_input(&self, m: &Mask) -> Result<SoftGrid> {
        let n = self.config.grid_size;
        downsample(m, n, n)
    }

    /// Continuous embedding `z` of a grid.
    pub fn encode(&self, g: &SoftGrid) -> Result<Vec<f64>> {
        self.check_grid(g)?;
        let input = Array2::from_shape_vec((1, g.values().len()), g.values().to_vec()).expect("shape");
        let (_, _, z) = self.encode_batch(&input);
        Ok(z.into_raw_vec_and_offset().0)
    }

    /// Decoder logits for a decoder input `q`.
    pub fn decode_logits(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.config.embed_dim {
            return Err(Error::VectorDim {
                expected: self.config.embed_dim,
                got: q.len(),
            });
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidTrainConfig("decoder input is not finite".into()));
        }
        let q = Array2::from_shape_vec((1, q.len()), q.to_vec()).expect("shape");
        let (_, _, logits) = self.decode_batch(&q);
        Ok(logits.into_raw_vec_and_offset().0)
    }

    /// Per-cell probabilities decoded from `q`, kept strictly inside (0, 1).
    pub fn decode(&self, q: &[f64]) -> Result<SoftGrid> {
        let n = self.config.grid_size;
        let probs = logits_to_probs(&self.decode_logits(q)?);
        SoftGrid::new(n, n, probs)
    }

    /// Quantizes one embedding with the configured scheme. For FSQ the
    /// trace lives in the projected space and `quantized` is the level
    /// vector; use [`Model::decoder_input`] to map codes back to `q`.
    pub fn quantize(&self, z: &[f64]) -> Result<QuantResult> {
        let row = Array2::from_shape_vec((1, z.len()), z.to_vec())
            .map_err(|e| Error::InvalidTrainConfig(e.to_string()))?;
        if z.len() != self.config.embed_dim {
            return Err(Error::VectorDim {
                expected: self.config.embed_dim,
                got: z.len(),
            });
        }
        let (mut traces, _, _, _) = self.quantize_batch(&row)?;
        Ok(traces.remove(0))
    }

    /// Decoder input `q` for a code tuple.
    pub fn decoder_input(&self, codes: &[usize]) -> Result<Vec<f64>> {
        match self.config.quant.scheme {
            Scheme::Vq | Scheme::Rq => self.codebooks.lookup(codes),
            Scheme::Fsq => {
                let [code] = codes else {
                    return Err(Error::CodeCount {
                        expected: 1,
                        got: codes.len(),
                    });
                };
                let levels = fsq_index_to_levels(*code, &self.config.quant.fsq_levels)?;
                let unproj = self.params.fsq_unproject.as_ref().expect("FSQ de-projection");
                let l = Array2::from_shape_vec((1, levels.len()), levels).expect("shape");
                Ok(l.dot(unproj).into_raw_vec_and_offset().0)
            }
            Scheme::Identity => Err(Error::InvalidQuantConfig("identity quantizer has no codes".into())),
        }
    }

    /// Discrete codes of a mask, one per quantization level.
    pub fn tokenize(&self, m: &Mask) -> Result<Vec<usize>> {
        let z = self.encode(&self.grid_input(m)?)?;
        Ok(self.quantize(&z)?.codes)
    }

    /// Mask of the given size decoded from codes.
    pub fn detokenize(&self, codes: &[usize], width: usize, height: usize) -> Result<Mask> {
        let probs = self.decode(&self.decoder_input(codes)?)?;
        binarize(&probs, MASK_THRESHOLD, width, height)
    }

    /// Full round trip at the input's resolution, with the quantization trace.
    pub fn reconstruct(&self, m: &Mask) -> Result<(Mask, QuantResult)> {
        let mut out = self.reconstruct_batch(std::slice::from_ref(m))?;
        Ok(out.remove(0))
    }

    pub fn reconstruct_batch(&self, masks: &[Mask]) -> Result<Vec<(Mask, QuantResult)>> {
        if masks.is_empty() {
            return Ok(Vec::new());
        }
        let n = self.config.grid_size;
        let mut input = Array2::zeros((masks.len(), n * n));
        for (i, m) in masks.iter().enumerate() {
            let g = self.grid_input(m)?;
            input.row_mut(i).assign(&ndarray::ArrayView1::from(g.values()));
        }
        let fwd = self.forward(&input)?;
        fwd.quant
            .into_iter()
            .zip(fwd.logits.rows())
            .zip(masks)
            .map(|((trace, logits), m)| {
                let probs = SoftGrid::new(n, n, logits_to_probs(logits.as_slice().expect("row")))?;
                Ok((binarize(&probs, MASK_THRESHOLD, m.width(), m.height())?, trace))
            })
            .collect()
    }

    /// Mean reconstruction IoU over a dataset (r-Acc).
    pub fn eval_r_acc(&self, dataset: &[Mask]) -> Result<f64> {
        Ok(mean(&self.reconstruction_ious(dataset)?))
    }

    pub fn reconstruction_ious(&self, dataset: &[Mask]) -> Result<Vec<f64>> {
        if dataset.is_empty() {
            return Err(Error::EmptyInput("r-Acc needs at least one mask"));
        }
        let mut ious = Vec::with_capacity(dataset.len());
        for chunk in dataset.chunks(256) {
            for ((rec, _), m) in self.reconstruct_batch(chunk)?.iter().zip(chunk) {
                ious.push(iou(m, rec)?);
            }
        }
        Ok(ious)
    }

    /// Fraction of codebook entries used per level over a dataset, averaged
    /// across levels.
    pub fn code_utilization(&self, dataset: &[Mask]) -> Result<f64> {
        let steps = self.config.quant.steps;
        if steps == 0 || dataset.is_empty() {
            return Ok(0.0);
        }
        let mut per_level: Vec<Vec<usize>> = vec![Vec::with_capacity(dataset.len()); steps];
        for chunk in dataset.chunks(256) {
            for (_, trace) in self.reconstruct_batch(chunk)? {
                for (l, &c) in trace.codes.iter().enumerate() {
                    per_level[l].push(c);
                }
            }
        }
        let size = self.config.quant.level_size();
        Ok(per_level.iter().map(|c| crate::quant::utilization(size, c)).sum::<f64>() / steps as f64)
    }
}

/// Mean of a slice (0 for empty input).
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn logits_to_probs(logits: &[f64]) -> Vec<f64> {
    const EDGE: f64 = 1e-15;
    logits.iter().map(|&x| sigmoid(x).clamp(EDGE, 1.0 - EDGE)).collect()
}
