//! Answer-matching reward for mask generation.
//!
//! Predicted mask words are deduplicated; each distinct word whose full text
//! occurs in the ground-truth answer is a true positive. The reward is
//! `n_tp / max(n_pred, n_gt)` where `n_pred` counts predicted words *with*
//! repeats, so repeating a correct word lowers the reward.
//!
//! ```
//! use masktok::reward::mask_reward;
//! use masktok::words::{format_mask_word, Vocab};
//!
//! let v = Vocab::default();
//! let a = format_mask_word(&[1, 2], &v).unwrap();
//! let b = format_mask_word(&[3, 4], &v).unwrap();
//! let r = mask_reward(&format!("{a} {a} {b}"), &format!("{a}{b}"), &v);
//! assert_eq!((r.n_tp, r.n_pred, r.n_gt), (2, 3, 2));
//! assert_eq!(r.reward, 2.0 / 3.0);
//! ```

use serde::{Deserialize, Serialize};

use crate::words::{parse_mask_words, Vocab, END_TOKEN, START_TOKEN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub n_tp: usize,
    /// Predicted words, repeats included.
    pub n_pred: usize,
    pub n_gt: usize,
    pub reward: f64,
    /// Distinct predicted words found in the answer, first-appearance order.
    pub matched_words: Vec<String>,
    /// Distinct predicted words not found in the answer.
    pub unmatched_words: Vec<String>,
}

fn score(n_tp: usize, n_pred: usize, n_gt: usize) -> f64 {
    match n_pred.max(n_gt) {
        // nothing predicted and nothing expected: correct no-target answer
        0 => 1.0,
        m => n_tp as f64 / m as f64,
    }
}

fn breakdown(pred_words: Vec<String>, n_gt: usize, in_gt: impl Fn(&str) -> bool) -> RewardBreakdown {
    let n_pred = pred_words.len();
    let mut distinct: Vec<String> = Vec::new();
    for w in pred_words {
        if !distinct.contains(&w) {
            distinct.push(w);
        }
    }
    let (matched, unmatched): (Vec<String>, Vec<String>) = distinct.into_iter().partition(|w| in_gt(w));
    let n_tp = matched.len();
    RewardBreakdown {
        n_tp,
        n_pred,
        n_gt,
        reward: score(n_tp, n_pred, n_gt),
        matched_words: matched,
        unmatched_words: unmatched,
    }
}

/// Scores a rollout against a reference answer. Never fails; malformed
/// mask-token fragments are ignored.
pub fn mask_reward(pred_text: &str, gt_text: &str, v: &Vocab) -> RewardBreakdown {
    let pred: Vec<String> = parse_mask_words(pred_text, v).words.into_iter().map(|w| w.text).collect();
    let n_gt = parse_mask_words(gt_text, v).words.len();
    breakdown(pred, n_gt, |w| gt_text.contains(w))
}

/// Reference implementation of [`mask_reward`] by direct re-scan: at every
/// byte offset, try to read a complete word by comparing fixed-width
/// windows against the token pattern. Slow and simple on purpose.
pub fn reward_oracle(pred_text: &str, gt_text: &str, v: &Vocab) -> RewardBreakdown {
    let pred = scan_words(pred_text.as_bytes(), v);
    let n_gt = scan_words(gt_text.as_bytes(), v).len();
    let gt = gt_text.as_bytes();
    breakdown(pred, n_gt, |w| {
        let w = w.as_bytes();
        (0..gt.len()).any(|i| gt[i..].len() >= w.len() && &gt[i..i + w.len()] == w)
    })
}

fn scan_words(text: &[u8], v: &Vocab) -> Vec<String> {
    let start = START_TOKEN.as_bytes();
    let end = END_TOKEN.as_bytes();
    let digits = v.digits();
    let token_len = "<|mt_".len() + digits + "|>".len();
    let is_level_token = |window: &[u8], level: usize| -> bool {
        if window.len() != token_len || &window[..5] != b"<|mt_" || &window[5 + digits..] != b"|>" {
            return false;
        }
        let mut id = 0usize;
        for &c in &window[5..5 + digits] {
            if !c.is_ascii_digit() {
                return false;
            }
            id = id * 10 + (c - b'0') as usize;
        }
        id >= level * v.codebook_size && id < (level + 1) * v.codebook_size
    };

    let mut words = Vec::new();
    let mut i = 0;
    'scan: while i < text.len() {
        if !text[i..].starts_with(start) {
            i += 1;
            continue;
        }
        let mut j = i + start.len();
        for level in 0..v.steps {
            if j + token_len > text.len() || !is_level_token(&text[j..j + token_len], level) {
                i += 1;
                continue 'scan;
            }
            j += token_len;
        }
        if text[j..].starts_with(end) {
            let stop = j + end.len();
            words.push(String::from_utf8(text[i..stop].to_vec()).expect("ascii word"));
            i = stop;
        } else {
            i += 1;
        }
    }
    words
}
