mod common;

use common::{brute_argmin, check_trace, rng};
use masktok::quant::{rq_quantize, vq_quantize, Codebook, ReseedPolicy};
use proptest::prelude::*;
use rand::Rng;

fn book_from(values: &[i8], dim: usize) -> Codebook {
    // small integers make exact ties common
    let vectors = values.chunks(dim).map(|c| c.iter().map(|&x| x as f64 / 4.0).collect()).collect();
    Codebook::from_vectors(vectors).unwrap()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

proptest! {
    #[test]
    fn trace_is_exhaustive_argmin_with_ties(
        a in prop::collection::vec(-4i8..4, 3 * 12),
        b in prop::collection::vec(-4i8..4, 3 * 12),
        z in prop::collection::vec(-4i8..4, 3),
    ) {
        let books = [book_from(&a, 3), book_from(&b, 3)];
        let refs: Vec<&Codebook> = books.iter().collect();
        let z: Vec<f64> = z.iter().map(|&x| x as f64 / 4.0).collect();
        let r = rq_quantize(&z, &refs).unwrap();
        prop_assert_eq!(check_trace(&z, &refs, &r), Ok(()));
        let summed: f64 = r.residuals.iter().map(|res| res.iter().map(|x| x * x).sum::<f64>()).sum();
        prop_assert_eq!(r.commit_loss, summed);
    }

    #[test]
    fn single_step_rq_is_vq(values in prop::collection::vec(-8i8..8, 4 * 9), z in prop::collection::vec(-3.0..3.0f64, 4)) {
        let book = book_from(&values, 4);
        prop_assert_eq!(rq_quantize(&z, &[&book]).unwrap(), vq_quantize(&z, &book).unwrap());
    }

    /// Greedy two-level RQ keeps, for its chosen first code, the best
    /// possible second code: no other second code does better.
    #[test]
    fn greedy_second_level_is_optimal_for_first_choice(seed in any::<u64>(), k in 2usize..32) {
        let mut r = rng(seed);
        let b1 = Codebook::random(k, 3, 1.0, &mut r).unwrap();
        let b2 = Codebook::random(k, 3, 0.5, &mut r).unwrap();
        let z: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
        let out = rq_quantize(&z, &[&b1, &b2]).unwrap();
        let final_err: f64 = out.residuals[1].iter().map(|x| x * x).sum();
        let first = b1.vector(out.codes[0]);
        for j in 0..k {
            let q: Vec<f64> = first.iter().zip(b2.vector(j)).map(|(a, b)| a + b).collect();
            prop_assert!(final_err <= sq_dist(&z, &q) + 1e-12);
        }
        prop_assert_eq!(out.codes[0], brute_argmin(&z, &b1));
    }

    #[test]
    fn ema_stays_finite(
        seed in any::<u64>(),
        scale in prop::sample::select(vec![1e-6, 1.0, 1e6]),
        decay in 0.5..0.999f64,
        steps in 1usize..40,
    ) {
        let mut r = rng(seed);
        let mut book = Codebook::random(8, 4, 0.1, &mut r).unwrap();
        let policy = ReseedPolicy { window: 3, noise: 1e-3 };
        for _ in 0..steps {
            let batch: Vec<Vec<f64>> = (0..r.random_range(0..6))
                .map(|_| (0..4).map(|_| r.random_range(-1.0..1.0) * scale).collect())
                .collect();
            let assignments: Vec<(usize, &[f64])> = batch.iter().map(|z| (brute_argmin(z, &book), z.as_slice())).collect();
            book.ema_update(&assignments, decay, &policy, &mut r).unwrap();
            prop_assert!(book.is_finite());
            prop_assert!(book.staleness().iter().all(|&s| s < policy.window || assignments.is_empty()));
        }
    }
}
