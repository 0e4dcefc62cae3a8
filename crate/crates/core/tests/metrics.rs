mod common;

use common::{random_mask, rng};
use masktok::mask::{iou, rle_decode, rle_encode};
use masktok::metrics::{gres_metrics, matchset_metrics};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn rle_round_trip_random_sizes() {
    let mut r = rng(11);
    for _ in 0..1000 {
        let (w, h) = (r.random_range(1..=128), r.random_range(1..=128));
        let density = r.random_range(0.0..1.0);
        let m = random_mask(&mut r, w, h, density);
        assert_eq!(rle_decode(&rle_encode(&m)).unwrap(), m);
    }
}

proptest! {
    #[test]
    fn iou_symmetric(seed in any::<u64>(), w in 1usize..20, h in 1usize..20) {
        let mut r = rng(seed);
        let a = random_mask(&mut r, w, h, 0.3);
        let b = random_mask(&mut r, w, h, 0.6);
        prop_assert_eq!(iou(&a, &b).unwrap().to_bits(), iou(&b, &a).unwrap().to_bits());
    }

    #[test]
    fn perfect_predictions_score_one(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let masks: Vec<_> = (0..n).map(|_| random_mask(&mut r, 6, 5, 0.4)).collect();
        let pairs: Vec<_> = masks.iter().map(|m| (Some(m.clone()), Some(m.clone()))).collect();
        let g = gres_metrics(&pairs).unwrap();
        prop_assert_eq!(g.g_iou, Some(1.0));
        prop_assert!(g.c_iou.is_none_or(|c| c == 1.0));
        let nonempty: Vec<_> = masks.into_iter().filter(|m| !m.is_empty()).collect();
        let s = matchset_metrics(&nonempty, &nonempty, 0.5).unwrap();
        if !nonempty.is_empty() {
            prop_assert_eq!(s.mean_matched_iou, Some(1.0));
            prop_assert_eq!(s.recall_50, Some(1.0));
        }
    }
}
