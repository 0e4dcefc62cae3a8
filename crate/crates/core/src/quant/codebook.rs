use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Rounds to the nearest `f32` so code vectors survive the 32-bit file
/// format bit-exactly.
#[inline]
pub(crate) fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

/// Dead-code handling for EMA updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReseedPolicy {
    /// Consecutive unassigned updates after which a code is reseeded.
    pub window: u32,
    /// Standard deviation of the noise added to the reseed vector.
    pub noise: f64,
}

impl Default for ReseedPolicy {
    fn default() -> Self {
        ReseedPolicy {
            window: 256,
            noise: 1e-3,
        }
    }
}

/// `size` code vectors of dimension `dim`, with EMA statistics.
///
/// Vectors are stored flat, entry-major. Every stored vector component is
/// exactly representable as an `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    dim: usize,
    size: usize,
    vectors: Vec<f64>,
    ema_counts: Vec<f64>,
    ema_sums: Vec<f64>,
    stale: Vec<u32>,
}

pub const EMA_EPSILON: f64 = 1e-5;

impl Codebook {
    /// Builds a codebook from explicit vectors. EMA state starts at one
    /// pseudo-observation of each vector.
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let size = vectors.len();
        if size == 0 {
            return Err(Error::EmptyCodebook);
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::InvalidQuantConfig("code vectors must have positive dimension".into()));
        }
        let mut flat = Vec::with_capacity(size * dim);
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::VectorDim {
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidQuantConfig("code vector is not finite".into()));
            }
            flat.extend(v.iter().map(|&x| f32_round(x)));
        }
        Ok(Codebook {
            dim,
            size,
            ema_sums: flat.clone(),
            vectors: flat,
            ema_counts: vec![1.0; size],
            stale: vec![0; size],
        })
    }

    /// Random normal initialisation with the given standard deviation.
    pub fn random(size: usize, dim: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        if size == 0 {
            return Err(Error::EmptyCodebook);
        }
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidQuantConfig(e.to_string()))?;
        let vectors = (0..size)
            .map(|_| (0..dim).map(|_| normal.sample(rng)).collect())
            .collect();
        Codebook::from_vectors(vectors)
    }

    pub(crate) fn from_raw(
        dim: usize,
        size: usize,
        vectors: Vec<f64>,
        ema_counts: Vec<f64>,
        ema_sums: Vec<f64>,
        stale: Vec<u32>,
    ) -> Self {
        Codebook {
            dim,
            size,
            vectors,
            ema_counts,
            ema_sums,
            stale,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.chunks_exact(self.dim)
    }

    pub fn ema_counts(&self) -> &[f64] {
        &self.ema_counts
    }

    pub fn ema_sum(&self, k: usize) -> &[f64] {
        &self.ema_sums[k * self.dim..(k + 1) * self.dim]
    }

    pub fn staleness(&self) -> &[u32] {
        &self.stale
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.iter().chain(&self.ema_sums).chain(&self.ema_counts).all(|v| v.is_finite())
    }

    /// Index of the nearest code by squared Euclidean distance; ties go to
    /// the lowest index.
    pub fn nearest(&self, z: &[f64]) -> Result<(usize, f64)> {
        if z.len() != self.dim {
            return Err(Error::VectorDim {
                expected: self.dim,
                got: z.len(),
            });
        }
        let mut best = (0, f64::INFINITY);
        for (k, e) in self.vectors().enumerate() {
            let d: f64 = z.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (k, d);
            }
        }
        Ok(best)
    }

    /// Overwrites entry `k` with `v` and resets its EMA state to a single
    /// observation.
    fn reset_entry(&mut self, k: usize, v: &[f64]) {
        let d = self.dim;
        for (i, &x) in v.iter().enumerate() {
            let x = f32_round(x);
            self.vectors[k * d + i] = x;
            self.ema_sums[k * d + i] = x;
        }
        self.ema_counts[k] = 1.0;
        self.stale[k] = 0;
    }

    /// Seeds every entry from inputs drawn (with replacement) from `inputs`,
    /// plus Gaussian noise. No-op when `inputs` is empty.
    pub fn seed_from_inputs(&mut self, inputs: &[&[f64]], noise: f64, rng: &mut impl Rng) {
        if inputs.is_empty() {
            return;
        }
        let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise scale");
        for k in 0..self.size {
            let src = inputs.choose(rng).expect("non-empty inputs");
            let v: Vec<f64> = src.iter().map(|&x| x + normal.sample(rng)).collect();
            self.reset_entry(k, &v);
        }
    }

    /// One exponential-moving-average step over a batch of assignments.
    ///
    /// Assigned entries move to `ema_sums / ema_counts`; unassigned entries
    /// keep their vectors and accumulate staleness. An entry unassigned for
    /// `policy.window` consecutive updates is reseeded to a random input of
    /// this batch plus noise, with its count reset to 1.
    pub fn ema_update(
        &mut self,
        assignments: &[(usize, &[f64])],
        decay: f64,
        policy: &ReseedPolicy,
        rng: &mut impl Rng,
    ) -> Result<()> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::InvalidQuantConfig(format!("EMA decay {decay} outside (0, 1)")));
        }
        let d = self.dim;
        let mut counts = vec![0usize; self.size];
        let mut sums = vec![0.0; self.size * d];
        for &(k, z) in assignments {
            if k >= self.size {
                return Err(Error::CodeOutOfRange {
                    level: 0,
                    index: k,
                    size: self.size,
                });
            }
            if z.len() != d {
                return Err(Error::VectorDim {
                    expected: d,
                    got: z.len(),
                });
            }
            counts[k] += 1;
            for (s, &x) in sums[k * d..(k + 1) * d].iter_mut().zip(z) {
                *s += x;
            }
        }

        for k in 0..self.size {
            self.ema_counts[k] = decay * self.ema_counts[k] + (1.0 - decay) * counts[k] as f64;
            for i in 0..d {
                let idx = k * d + i;
                self.ema_sums[idx] = decay * self.ema_sums[idx] + (1.0 - decay) * sums[idx];
            }
            if counts[k] > 0 {
                self.stale[k] = 0;
                let n = self.ema_counts[k].max(EMA_EPSILON);
                for i in 0..d {
                    let idx = k * d + i;
                    self.vectors[idx] = f32_round(self.ema_sums[idx] / n);
                }
            } else {
                self.stale[k] = self.stale[k].saturating_add(1);
            }
        }

        if !assignments.is_empty() {
            let normal = Normal::new(0.0, policy.noise.max(0.0)).expect("finite noise scale");
            for k in 0..self.size {
                if self.stale[k] >= policy.window {
                    let src = assignments.choose(rng).expect("non-empty").1;
                    let v: Vec<f64> = src.iter().map(|&x| x + normal.sample(rng)).collect();
                    self.reset_entry(k, &v);
                }
            }
        }
        Ok(())
    }

    /// Plain gradient step on the codebook loss `‖sg(z) − e_k‖²`, averaged
    /// over the batch. Alternative to [`Codebook::ema_update`].
    pub fn gradient_update(&mut self, assignments: &[(usize, &[f64])], lr: f64, batch: usize) -> Result<()> {
        let d = self.dim;
        let scale = 2.0 * lr / batch.max(1) as f64;
        let mut grad = vec![0.0; self.size * d];
        for &(k, z) in assignments {
            if k >= self.size {
                return Err(Error::CodeOutOfRange {
                    level: 0,
                    index: k,
                    size: self.size,
                });
            }
            for i in 0..d {
                grad[k * d + i] += self.vectors[k * d + i] - z[i];
            }
        }
        for (v, g) in self.vectors.iter_mut().zip(&grad) {
            *v = f32_round(*v - scale * g);
        }
        Ok(())
    }
}

/// Fraction of the `size` codebook entries that appear in `codes`.
pub fn utilization(size: usize, codes: &[usize]) -> f64 {
    if size == 0 {
        return 0.0;
    }
    let mut seen = vec![false; size];
    let mut distinct = 0usize;
    for &c in codes {
        if c < size && !seen[c] {
            seen[c] = true;
            distinct += 1;
        }
    }
    distinct as f64 / size as f64
}

impl Codebook {
    pub fn utilization(&self, codes: &[usize]) -> f64 {
        utilization(self.size, codes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn nearest_exact_hit_and_tie_break() {
        let mut vs: Vec<Vec<f64>> = (0..8).map(|k| vec![k as f64, 0.0]).collect();
        vs[5] = vs[0].clone();
        let book = Codebook::from_vectors(vs).unwrap();
        assert_eq!(book.nearest(&[3.0, 0.0]).unwrap(), (3, 0.0));
        assert_eq!(book.nearest(&[-0.2, 0.1]).unwrap().0, 0);
    }

    #[test]
    fn nearest_checks_dimension() {
        let book = Codebook::from_vectors(vec![vec![0.0, 0.0]]).unwrap();
        assert!(matches!(book.nearest(&[0.0]), Err(Error::VectorDim { .. })));
    }

    #[test]
    fn empty_codebook_rejected() {
        assert!(matches!(Codebook::from_vectors(vec![]), Err(Error::EmptyCodebook)));
    }

    #[test]
    fn no_assignments_only_ages_entries() {
        let mut book = Codebook::random(4, 3, 1.0, &mut rng()).unwrap();
        let before = book.clone();
        book.ema_update(&[], 0.99, &ReseedPolicy::default(), &mut rng()).unwrap();
        assert!(book.vectors().eq(before.vectors()));
        assert_eq!(book.staleness(), &[1, 1, 1, 1]);
    }

    #[test]
    fn constant_assignment_converges_geometrically() {
        let mut book = Codebook::from_vectors(vec![vec![5.0, -3.0], vec![0.0, 0.0]]).unwrap();
        let v = [0.25, 0.5];
        let policy = ReseedPolicy {
            window: 1000,
            noise: 0.0,
        };
        for _ in 0..100 {
            book.ema_update(&[(0, &v)], 0.9, &policy, &mut rng()).unwrap();
        }
        let err: f64 = book.vector(0).iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        // starting error ‖(4.75, -3.5)‖ shrinks by 0.9 per step
        let bound = 0.9f64.powi(100) * (4.75f64.powi(2) + 3.5f64.powi(2)).sqrt() + 1e-6;
        assert!(err < bound, "{err} vs {bound}");
        assert!(err < 1e-3);
    }

    #[test]
    fn dead_code_reseeded() {
        let mut book = Codebook::from_vectors(vec![vec![0.0], vec![100.0]]).unwrap();
        let policy = ReseedPolicy { window: 3, noise: 0.0 };
        let z = [1.0];
        for step in 0..3 {
            book.ema_update(&[(0, &z)], 0.9, &policy, &mut rng()).unwrap();
            if step < 2 {
                assert_eq!(book.vector(1), &[100.0]);
            }
        }
        assert_eq!(book.vector(1), &[1.0]);
        assert_eq!(book.ema_counts()[1], 1.0);
        assert_eq!(book.staleness()[1], 0);
    }

    #[test]
    fn utilization_counts_distinct() {
        assert_eq!(utilization(10, &[0, 0, 5, 5, 7]), 0.3);
        assert_eq!(utilization(256, &[9]), 1.0 / 256.0);
        let all: Vec<usize> = (0..16).collect();
        assert_eq!(utilization(16, &all), 1.0);
    }

    #[test]
    fn vectors_are_f32_representable() {
        let book = Codebook::random(16, 4, 0.3, &mut rng()).unwrap();
        assert!(book.vectors().flatten().all(|&v| v == v as f32 as f64));
    }
}
