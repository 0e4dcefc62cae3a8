//! Seeded annotated samples of all three kinds, for exercising converters.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mask::MaskRecord;

use super::shapes::{gen_synthetic, ShapeGenConfig};
use super::{Alignment, AnnotatedSample, NamedMask, SampleKind, SCHEMA_VERSION};

const NOUNS: &[&str] = &["dog", "ball", "cup", "café table", "bicycle", "tree", "naïve robot", "kite", "boat", "lamp"];
const ADJECTIVES: &[&str] = &["red", "small", "left", "striped", "old", "shiny", "blue"];
const VERBS: &[&str] = &["next to", "behind", "chasing", "under", "near", "on top of"];

/// `count` samples cycling through region captions, GCG and RES, with
/// 16×16 masks. Captions mix in multi-byte characters so that
/// character-offset handling is exercised.
pub fn synthetic_corpus(count: usize, seed: u64) -> Result<Vec<AnnotatedSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = gen_synthetic(&ShapeGenConfig {
        count: 64,
        grid_size: 16,
        seed,
        ..ShapeGenConfig::default()
    })?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let kind = [SampleKind::RegionCaption, SampleKind::Gcg, SampleKind::Res][i % 3];
        let n_masks = match kind {
            SampleKind::RegionCaption => rng.random_range(1..=2),
            _ => rng.random_range(0..=3),
        };
        let masks: Vec<NamedMask> = (0..n_masks)
            .map(|k| NamedMask {
                name: format!("m{k}"),
                mask: MaskRecord::from_mask(shapes.choose(&mut rng).expect("shapes")),
            })
            .collect();
        let mut s = AnnotatedSample {
            schema: SCHEMA_VERSION,
            id: format!("syn-{i:06}"),
            kind,
            image_ref: format!("synthetic/{i}.png"),
            masks,
            caption: None,
            alignments: vec![],
            expression: None,
            targets: vec![],
        };
        match kind {
            SampleKind::RegionCaption => {
                s.caption = Some(format!(
                    "a {} {}",
                    ADJECTIVES.choose(&mut rng).expect("adj"),
                    NOUNS.choose(&mut rng).expect("noun")
                ));
            }
            SampleKind::Gcg => {
                let (caption, alignments) = gcg_caption(n_masks, &mut rng);
                s.caption = Some(caption);
                s.alignments = alignments;
            }
            SampleKind::Res => {
                s.expression = Some(format!(
                    "the {} {}",
                    ADJECTIVES.choose(&mut rng).expect("adj"),
                    NOUNS.choose(&mut rng).expect("noun")
                ));
                s.targets = (0..n_masks).rev().map(|k| format!("m{k}")).collect();
            }
        }
        out.push(s);
    }
    Ok(out)
}

fn gcg_caption(n_masks: usize, rng: &mut impl Rng) -> (String, Vec<Alignment>) {
    let mut caption = String::from("In this picture");
    let mut alignments = Vec::new();
    // a phrase for every mask plus an ungrounded one now and then
    let phrases = n_masks + rng.random_range(0..=1);
    for p in 0..phrases {
        caption.push_str(if p == 0 { " a " } else { ", " });
        if p > 0 {
            caption.push_str(VERBS.choose(rng).expect("verb"));
            caption.push_str(" a ");
        }
        let phrase = format!("{} {}", ADJECTIVES.choose(rng).expect("adj"), NOUNS.choose(rng).expect("noun"));
        let start = caption.chars().count();
        caption.push_str(&phrase);
        if p < n_masks {
            alignments.push(Alignment {
                start,
                end: start + phrase.chars().count(),
                mask: format!("m{p}"),
            });
        }
    }
    caption.push('.');
    (caption, alignments)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_validate_and_are_seeded() {
        let a = synthetic_corpus(60, 3).unwrap();
        assert_eq!(a, synthetic_corpus(60, 3).unwrap());
        for s in &a {
            s.validate().unwrap();
        }
        assert!(a.iter().any(|s| s.kind == SampleKind::Res && s.targets.is_empty()));
        assert!(a.iter().any(|s| s.kind == SampleKind::Gcg && s.alignments.len() == 3));
    }
}
