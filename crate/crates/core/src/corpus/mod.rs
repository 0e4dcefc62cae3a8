//! Mask-annotated samples to plain-text dialogues, plus synthetic data.
//!
//! # Input records (schema 1)
//!
//! One JSON object per line:
//!
//! | field        | type                         | used by                 |
//! |--------------|------------------------------|-------------------------|
//! | `schema`     | integer, optional, must be 1 | all                     |
//! | `id`         | string                       | all                     |
//! | `kind`       | `region_caption`, `gcg`, `res` | all                   |
//! | `image_ref`  | string, opaque               | all                     |
//! | `masks`      | list of `{name, width, height, rle_runs}` | all        |
//! | `caption`    | string                       | region_caption, gcg     |
//! | `alignments` | list of `{start, end, mask}`, character offsets into `caption`, end exclusive | gcg |
//! | `expression` | string                       | res                     |
//! | `targets`    | list of mask names; empty means no target | res        |
//!
//! # Output records (schema 1)
//!
//! `{"schema": 1, "id": …, "turns": [{"role": "user", "text": …}, {"role": "assistant", "text": …}]}`

mod convert;
mod shapes;
mod synthetic;

use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{Mask, MaskRecord};
use crate::words::{parse_mask_words, DiagnosticKind, Vocab};

pub use convert::{convert, convert_gcg, convert_region_caption, convert_res, strip_mask_words, Templates};
pub use shapes::{gen_synthetic, gen_synthetic_labeled, ShapeGenConfig, ShapeKind, ShapeMix};
pub use synthetic::synthetic_corpus;

pub const SCHEMA_VERSION: u32 = 1;

fn schema_v1() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    RegionCaption,
    Gcg,
    Res,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMask {
    pub name: String,
    #[serde(flatten)]
    pub mask: MaskRecord,
}

/// Links `caption[start..end]` (character offsets) to a mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alignment {
    pub start: usize,
    pub end: usize,
    pub mask: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedSample {
    #[serde(default = "schema_v1")]
    pub schema: u32,
    pub id: String,
    pub kind: SampleKind,
    pub image_ref: String,
    #[serde(default)]
    pub masks: Vec<NamedMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alignments: Vec<Alignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<String>,
}

impl AnnotatedSample {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Corpus {
            sample: self.id.clone(),
            message: message.into(),
        }
    }

    pub fn mask(&self, name: &str) -> Result<Mask> {
        let rec = self
            .masks
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| self.err(format!("unknown mask {name:?}")))?;
        rec.mask.to_mask()
    }

    /// Checks the schema version, unique mask names, and for GCG samples
    /// that alignments are sorted, non-overlapping, in range, and name
    /// existing masks.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Version {
                what: "corpus record",
                found: self.schema,
                expected: SCHEMA_VERSION,
            });
        }
        let mut names = HashSet::new();
        for m in &self.masks {
            if !names.insert(m.name.as_str()) {
                return Err(self.err(format!("duplicate mask name {:?}", m.name)));
            }
        }
        let chars = self.caption.as_deref().map_or(0, |c| c.chars().count());
        let mut prev_end = 0;
        for a in &self.alignments {
            if a.start >= a.end || a.end > chars {
                return Err(self.err(format!("alignment {}..{} outside caption of {chars} chars", a.start, a.end)));
            }
            if a.start < prev_end {
                return Err(self.err(format!("alignment {}..{} overlaps or is out of order", a.start, a.end)));
            }
            if !names.contains(a.mask.as_str()) {
                return Err(self.err(format!("alignment references unknown mask {:?}", a.mask)));
            }
            prev_end = a.end;
        }
        for t in &self.targets {
            if !names.contains(t.as_str()) {
                return Err(self.err(format!("target references unknown mask {t:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialogue {
    #[serde(default = "schema_v1")]
    pub schema: u32,
    /// Id of the source sample.
    pub id: String,
    pub turns: Vec<Turn>,
}

/// Maps a mask to its quantization codes.
pub trait MaskTokenizer {
    fn tokenize(&self, mask: &Mask) -> Result<Vec<usize>>;
}

impl<F: Fn(&Mask) -> Result<Vec<usize>>> MaskTokenizer for F {
    fn tokenize(&self, mask: &Mask) -> Result<Vec<usize>> {
        self(mask)
    }
}

impl MaskTokenizer for crate::autoencoder::Model {
    fn tokenize(&self, mask: &Mask) -> Result<Vec<usize>> {
        crate::autoencoder::Model::tokenize(self, mask)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoTurns,
    /// Turn `index` has the wrong role.
    Role { index: usize, found: Role },
    EmptyTurn { index: usize },
    /// A malformed mask-token fragment inside turn `index`.
    MaskToken { index: usize, kind: DiagnosticKind, span: Range<usize> },
}

/// Every violation of the dialogue invariants: turns alternate starting
/// with the user, no turn is empty, and every mask token belongs to a
/// well-formed mask word.
pub fn lint_dialogue(d: &Dialogue, v: &Vocab) -> Vec<Violation> {
    let mut out = Vec::new();
    if d.turns.is_empty() {
        out.push(Violation::NoTurns);
    }
    for (index, turn) in d.turns.iter().enumerate() {
        let want = if index % 2 == 0 { Role::User } else { Role::Assistant };
        if turn.role != want {
            out.push(Violation::Role { index, found: turn.role });
        }
        if turn.text.trim().is_empty() {
            out.push(Violation::EmptyTurn { index });
        }
        for diag in parse_mask_words(&turn.text, v).diagnostics {
            out.push(Violation::MaskToken {
                index,
                kind: diag.kind,
                span: diag.span,
            });
        }
    }
    out
}
