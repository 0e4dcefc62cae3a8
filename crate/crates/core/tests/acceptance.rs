//! The acceptance suite. Every criterion prints one PASS/FAIL line to
//! stderr and then asserts, so a failing criterion fails the test.

mod common;

use std::collections::HashSet;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::{brute_force_matching, check_trace, gradcheck_model, random_mask, report, rng, run_gradcheck, REL_TOL};
use masktok::ablate::{held_out_split, run_ablation, AblationSetup, Cell};
use masktok::autoencoder::{Model, TrainConfig, Trainer};
use masktok::corpus::{convert, gen_synthetic, lint_dialogue, synthetic_corpus, SampleKind, ShapeGenConfig, Templates};
use masktok::mask::{iou, Mask};
use masktok::metrics::{gres_metrics, greedy_match, match_sets, matchset_metrics};
use masktok::quant::{rq_quantize, vq_quantize, Codebook, QuantConfig};
use masktok::reward::{mask_reward, reward_oracle};
use masktok::words::{format_mask_word, parse_mask_words, Vocab};
use rand::Rng;

/// The two training criteria share the single CPU budget; running them
/// one at a time keeps the wall-clock limits meaningful.
static TRAINING: Mutex<()> = Mutex::new(());

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

#[test]
fn criterion_1_quantizer_correctness() {
    let start = Instant::now();
    let mut r = rng(1);
    // (K, S, d, share of the 10,000 embeddings)
    let setups = [(4096, 1, 8, 2500), (256, 2, 16, 2500), (1024, 3, 8, 2500), (4096, 2, 4, 2500)];
    let mut checked = 0;
    let mut failures = Vec::new();
    for (k, s, d, n) in setups {
        let books: Vec<Codebook> = (0..s)
            .map(|level| {
                let mut b = Codebook::random(k, d, 1.0 / (level + 1) as f64, &mut r).unwrap();
                if level == 0 {
                    // duplicate an entry so exact ties occur
                    let mut v: Vec<Vec<f64>> = b.vectors().map(<[f64]>::to_vec).collect();
                    v[k - 1] = v[3].clone();
                    b = Codebook::from_vectors(v).unwrap();
                }
                b
            })
            .collect();
        let refs: Vec<&Codebook> = books.iter().collect();
        for i in 0..n {
            let z: Vec<f64> = if i % 50 == 0 {
                books[0].vector(3).to_vec()
            } else {
                (0..d).map(|_| r.random_range(-1.5..1.5)).collect()
            };
            let out = if s == 1 { vq_quantize(&z, refs[0]) } else { rq_quantize(&z, &refs) }.unwrap();
            if i % 50 == 0 && out.codes[0] != 3 {
                failures.push(format!("K={k}: tie resolved to {} not 3", out.codes[0]));
            }
            if let Err(e) = check_trace(&z, &refs, &out) {
                failures.push(format!("K={k} S={s} sample {i}: {e}"));
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && checked == 10_000 && elapsed < Duration::from_secs(30);
    report(
        1,
        "quantizer correctness",
        pass,
        &format!("{checked} embeddings, K up to 4096, {} mismatches, {}", failures.len(), secs(elapsed)),
    );
    assert!(pass, "{:?}", &failures[..failures.len().min(5)]);
}

#[test]
fn criterion_2_gradient_fidelity() {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    let mut max_gap = 0.0f64;
    for (label, quant) in [
        ("RQ", QuantConfig::rq(8, 2)),
        ("VQ", QuantConfig::vq(8)),
        ("FSQ", QuantConfig::fsq(vec![5, 3])),
        ("identity", QuantConfig::identity()),
    ] {
        for seed in 0..3 {
            let quant = QuantConfig { commit_weight: 0.25, ..quant.clone() };
            let g = run_gradcheck(&gradcheck_model(quant, seed));
            checked += g.checked;
            max_gap = max_gap.max(g.loss_gap.abs());
            if g.max_rel_err >= worst.0 {
                worst = (g.max_rel_err, format!("{label} seed {seed} {}", g.worst));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst.0 < REL_TOL && max_gap < 1e-10 && elapsed < Duration::from_secs(10);
    report(
        2,
        "gradient fidelity",
        pass,
        &format!(
            "{checked} partials over RQ/VQ/FSQ/identity, max rel err {:.2e} ({}), loss gap {max_gap:.1e}, {}",
            worst.0,
            worst.1,
            secs(elapsed)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_toy_reconstruction() {
    let _guard = TRAINING.lock().unwrap_or_else(|e| e.into_inner());
    let data_cfg = ShapeGenConfig::default();
    let data = gen_synthetic(&data_cfg).unwrap();
    let held_out = gen_synthetic(&held_out_split(&data_cfg, 1000)).unwrap();
    let cfg = TrainConfig::default();
    assert_eq!((cfg.grid_size, cfg.quant.codebook_size, cfg.quant.steps), (32, 256, 2));

    let run = || {
        let start = Instant::now();
        let mut t = Trainer::new(Model::init(cfg.clone()).unwrap());
        let mut log = Vec::new();
        t.fit(&data, Some(&mut log)).unwrap();
        let elapsed = start.elapsed();
        (t.model.eval_r_acc(&held_out).unwrap(), log, elapsed)
    };
    let (r_acc, log_a, time_a) = run();
    let (_, log_b, time_b) = run();
    let identical = log_a == log_b && !log_a.is_empty();
    let in_time = time_a.max(time_b) < Duration::from_secs(15 * 60);
    let pass = r_acc >= 0.85 && identical && in_time;
    report(
        3,
        "toy reconstruction",
        pass,
        &format!(
            "held-out r-Acc {r_acc:.4} (need >= 0.85), train {} / {}, logs {} ({} bytes)",
            secs(time_a),
            secs(time_b),
            if identical { "identical" } else { "DIFFER" },
            log_a.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_ablation_orderings() {
    let _guard = TRAINING.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let cells = [Cell::vq(1024), Cell::rq(1024, 2), Cell::rq(256, 2), Cell::rq(256, 4)];
    let mut lines = Vec::new();
    let mut held = 0;
    for seed in 1..=3 {
        let rows = run_ablation(&AblationSetup::default().with_seed(seed), &cells).unwrap();
        let r: Vec<f64> = rows.iter().map(|row| row.r_acc.unwrap_or(f64::NAN)).collect();
        let ok = r[1] >= r[0] && r[3] >= r[2];
        held += ok as usize;
        lines.push(format!(
            "seed {seed}: VQ1024 {:.4} RQ1024x2 {:.4} RQ256x2 {:.4} RQ256x4 {:.4}",
            r[0], r[1], r[2], r[3]
        ));
    }
    let pass = held == 3;
    report(
        4,
        "ablation orderings",
        pass,
        &format!("{held}/3 seeds hold both orderings; {}; {}", lines.join("; "), secs(start.elapsed())),
    );
    assert!(pass);
}

#[test]
fn criterion_5_mask_word_round_trip() {
    let start = Instant::now();
    let v = Vocab::default();
    let mut seen = HashSet::new();
    let mut bad = 0;
    for a in 0..256 {
        for b in 0..256 {
            let text = format_mask_word(&[a, b], &v).unwrap();
            let parsed = parse_mask_words(&text, &v);
            let ok = parsed.diagnostics.is_empty()
                && parsed.words.len() == 1
                && parsed.words[0].codes == [a, b]
                && parsed.words[0].span == (0..text.len());
            bad += !ok as usize;
            seen.insert(text);
        }
    }
    let example = format_mask_word(&[11, 91], &v).unwrap();
    let example_ok = example == "<|mt_start|><|mt_0011|><|mt_0347|><|mt_end|>";
    let elapsed = start.elapsed();
    let pass = bad == 0 && seen.len() == 65_536 && example_ok && elapsed < Duration::from_secs(5);
    report(
        5,
        "mask-word round trip",
        pass,
        &format!("65536 pairs, {bad} failures, {} distinct strings, (11, 91) -> {example}, {}", seen.len(), secs(elapsed)),
    );
    assert!(pass);
}

/// A random rollout: valid words (often repeated or shared with the
/// answer), malformed fragments and plain text.
fn fuzz_text(r: &mut impl Rng, v: &Vocab, pool: &[String]) -> String {
    let mut s = String::new();
    for _ in 0..r.random_range(0..12) {
        let piece = match r.random_range(0..10) {
            0..=3 => pool[r.random_range(0..pool.len())].clone(),
            4 => "<|mt_start|>".to_string(),
            5 => "<|mt_end|>".to_string(),
            6 => format!("<|mt_{:04}|>", r.random_range(0..600)),
            7 => {
                // reversed levels, missing end, or truncated token
                let a = r.random_range(0..256);
                let b = r.random_range(0..256);
                match r.random_range(0..3) {
                    0 => format!("<|mt_start|>{}{}<|mt_end|>", v.token(256 + b), v.token(a)),
                    1 => format!("<|mt_start|>{}{}", v.token(a), v.token(256 + b)),
                    _ => format!("<|mt_start|>{}<|mt_03", v.token(a)),
                }
            }
            8 => ["the ", "dog", " and ", "é", "<|", "|>", "mt_", "\n"][r.random_range(0..8)].to_string(),
            _ => {
                // a valid word nested inside a broken one
                let w = &pool[r.random_range(0..pool.len())];
                format!("<|mt_start|><|mt_0001|>{w}")
            }
        };
        s.push_str(&piece);
    }
    s
}

#[test]
fn criterion_6_reward_correctness() {
    let v = Vocab::default();
    let mut r = rng(6);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let pool: Vec<String> = (0..r.random_range(1..6))
            .map(|_| format_mask_word(&[r.random_range(0..256), r.random_range(0..256)], &v).unwrap())
            .collect();
        let pred = fuzz_text(&mut r, &v, &pool);
        let gt = fuzz_text(&mut r, &v, &pool);
        if mask_reward(&pred, &gt, &v) != reward_oracle(&pred, &gt, &v) {
            mismatches += 1;
        }
    }
    let a = format_mask_word(&[5, 6], &v).unwrap();
    let b = format_mask_word(&[7, 8], &v).unwrap();
    let worked = mask_reward(&format!("{a} then {a} and {b}"), &format!("{a} {b}"), &v);
    let worked_ok = (worked.n_tp, worked.n_pred, worked.n_gt) == (2, 3, 2) && worked.reward == 2.0 / 3.0;
    let pass = mismatches == 0 && worked_ok;
    report(
        6,
        "reward correctness",
        pass,
        &format!(
            "1000 fuzzed rollouts, {mismatches} oracle mismatches; worked example tp {} pred {} gt {} reward {}",
            worked.n_tp, worked.n_pred, worked.n_gt, worked.reward
        ),
    );
    assert!(pass);
}

fn strip(cells: std::ops::Range<usize>) -> Mask {
    Mask::from_fn(20, 1, |x, _| cells.contains(&x)).unwrap()
}

#[test]
fn criterion_7_metrics_correctness() {
    let mut fixtures = Vec::new();
    let mut check = |name: &str, ok: bool| fixtures.push((name.to_string(), ok));

    // gIoU over per-sample IoUs {1, 0}
    let r = gres_metrics(&[(Some(strip(0..4)), Some(strip(0..4))), (Some(strip(0..4)), Some(strip(10..14)))]).unwrap();
    check("gIoU 0.5", r.g_iou == Some(0.5));
    // one pair, both empty
    let r = gres_metrics(&[(None, Some(Mask::empty(20, 1).unwrap()))]).unwrap();
    check("no-target pair", r.g_iou == Some(1.0) && r.n_acc == Some(1.0) && r.c_iou.is_none());
    // intersections {2, 1}, unions {4, 1}
    let r = gres_metrics(&[(Some(strip(0..3)), Some(strip(1..4))), (Some(strip(5..6)), Some(strip(5..6)))]).unwrap();
    check("cIoU 3/5", r.c_iou == Some(3.0 / 5.0));
    // identical sets
    let set = [strip(0..5), strip(7..9), strip(12..20)];
    let r = matchset_metrics(&set, &set, 0.5).unwrap();
    check("identity set", r.precision_50 == Some(1.0) && r.recall_50 == Some(1.0) && r.mean_matched_iou == Some(1.0));
    let r = matchset_metrics(&[], &set, 0.5).unwrap();
    check("empty prediction", r.precision_50 == Some(0.0) && r.recall_50 == Some(0.0));
    // greedy pairs (0,0) 0.9 and (1,1) 0.8
    let pairs = greedy_match(&[vec![0.9, 0.1], vec![0.2, 0.8]]);
    let mean = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
    check("matrix mean 0.85", pairs.len() == 2 && (mean - 0.85).abs() < 1e-12);
    // 9/10 and 8/10 matches, a third prediction left over
    let truth = [strip(0..10), strip(10..20)];
    let pred = [strip(0..9), strip(11..19), strip(0..2)];
    let r = matchset_metrics(&pred, &truth, 0.5).unwrap();
    check(
        "masks 0.9/0.8 + spare",
        r.recall_50 == Some(1.0)
            && r.precision_50 == Some(2.0 / 3.0)
            && (r.mean_matched_iou.unwrap() - 0.85).abs() < 1e-12,
    );
    let fixtures_failed: Vec<&str> = fixtures.iter().filter(|f| !f.1).map(|f| f.0.as_str()).collect();

    let mut r = rng(7);
    let mut violations = 0;
    for _ in 0..10_000 {
        let density = r.random_range(0.1..0.6);
        let pred: Vec<Mask> = (0..r.random_range(0..=5)).map(|_| random_mask(&mut r, 4, 4, density)).collect();
        let truth: Vec<Mask> = (0..r.random_range(0..=5)).map(|_| random_mask(&mut r, 4, 4, density)).collect();
        let matrix: Vec<Vec<f64>> = pred.iter().map(|p| truth.iter().map(|t| iou(p, t).unwrap()).collect()).collect();
        let (best_mean, _) = brute_force_matching(&matrix);
        let s = match_sets(&pred, &truth, 0.5).unwrap();
        let one_to_one = s.pairs.iter().map(|p| p.0).collect::<HashSet<_>>().len() == s.pairs.len()
            && s.pairs.iter().map(|p| p.1).collect::<HashSet<_>>().len() == s.pairs.len();
        let greedy_mean = s.report().mean_matched_iou.unwrap();
        let bounded = match best_mean {
            Some(b) => greedy_mean <= b + 1e-12,
            None => s.pairs.is_empty(),
        };
        violations += !(one_to_one && bounded) as usize;
    }
    let pass = fixtures_failed.is_empty() && violations == 0;
    report(
        7,
        "metrics correctness",
        pass,
        &format!(
            "{}/{} hand fixtures, failed {fixtures_failed:?}; 10000 random sets of size <= 5, {violations} greedy > brute force",
            fixtures.len() - fixtures_failed.len(),
            fixtures.len()
        ),
    );
    assert!(pass);
}

/// Removes every `<|mt_start|> … <|mt_end|>` run by plain search.
fn strip_words_oracle(text: &str) -> String {
    let mut out = String::new();
    let mut rest = text;
    while let Some(i) = rest.find("<|mt_start|>") {
        out.push_str(&rest[..i]);
        let after = &rest[i..];
        let end = after.find("<|mt_end|>").expect("unterminated word") + "<|mt_end|>".len();
        rest = &after[end..];
    }
    out.push_str(rest);
    out
}

#[test]
fn criterion_8_corpus_lint() {
    let v = Vocab::default();
    let templates = Templates::default();
    let tokenizer = Model::init(TrainConfig { grid_size: 16, hidden: 32, ..TrainConfig::default() }).unwrap();
    let corpus = synthetic_corpus(1000, 8).unwrap();
    let (mut violations, mut gcg, mut gcg_broken, mut word_mismatch) = (0, 0, 0, 0);
    for s in &corpus {
        let d = convert(s, &v, &tokenizer, &templates).unwrap();
        violations += lint_dialogue(&d, &v).len();
        let answer = &d.turns[1].text;
        let expected_words: Vec<Vec<usize>> = match s.kind {
            SampleKind::RegionCaption => s.masks.iter().map(|m| tokenizer.tokenize(&m.mask.to_mask().unwrap()).unwrap()).collect(),
            SampleKind::Gcg => s.alignments.iter().map(|a| tokenizer.tokenize(&s.mask(&a.mask).unwrap()).unwrap()).collect(),
            SampleKind::Res => s.targets.iter().map(|t| tokenizer.tokenize(&s.mask(t).unwrap()).unwrap()).collect(),
        };
        let text = if s.kind == SampleKind::RegionCaption { &d.turns[0].text } else { answer };
        let parsed: Vec<Vec<usize>> = parse_mask_words(text, &v).words.into_iter().map(|w| w.codes).collect();
        word_mismatch += (parsed != expected_words) as usize;
        if s.kind == SampleKind::Gcg {
            gcg += 1;
            gcg_broken += (strip_words_oracle(answer).as_bytes() != s.caption.as_deref().unwrap().as_bytes()) as usize;
        }
    }
    let pass = violations == 0 && gcg_broken == 0 && word_mismatch == 0;
    report(
        8,
        "corpus lint",
        pass,
        &format!(
            "{} samples, {violations} violations, {word_mismatch} mask-word mismatches, insertion-only broken on {gcg_broken}/{gcg} GCG samples",
            corpus.len()
        ),
    );
    assert!(pass);
}
