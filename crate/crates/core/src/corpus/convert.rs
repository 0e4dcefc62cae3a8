use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::words::{format_mask_word, parse_mask_words, Vocab};

use super::{AnnotatedSample, Dialogue, MaskTokenizer, Role, SampleKind, Turn, SCHEMA_VERSION};

const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates.json");

/// Instruction strings. `{mask}` and `{expression}` are placeholders.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub region_caption: String,
    pub gcg: String,
    pub res: String,
    /// Complete answer for a referring expression with no target.
    pub no_target: String,
    /// Joins mask words when a region-caption sample has several masks.
    pub region_separator: String,
}

impl Default for Templates {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }
}

impl Templates {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn word_for(s: &AnnotatedSample, name: &str, v: &Vocab, tok: &dyn MaskTokenizer) -> Result<String> {
    let wrap = |e: Error| Error::Tokenizer {
        mask: name.to_string(),
        source: Box::new(e),
    };
    let mask = s.mask(name)?;
    let codes = tok.tokenize(&mask).map_err(wrap)?;
    format_mask_word(&codes, v).map_err(wrap)
}

fn dialogue(s: &AnnotatedSample, user: String, assistant: String) -> Dialogue {
    Dialogue {
        schema: SCHEMA_VERSION,
        id: s.id.clone(),
        turns: vec![
            Turn {
                role: Role::User,
                text: user,
            },
            Turn {
                role: Role::Assistant,
                text: assistant,
            },
        ],
    }
}

fn expect_kind(s: &AnnotatedSample, kind: SampleKind) -> Result<()> {
    if s.kind != kind {
        return Err(s.err(format!("expected a {kind:?} sample, found {:?}", s.kind)));
    }
    s.validate()
}

fn caption(s: &AnnotatedSample) -> Result<&str> {
    s.caption.as_deref().ok_or_else(|| s.err("missing caption"))
}

/// User asks for a description of the masked region(s); the assistant
/// answers with the caption.
pub fn convert_region_caption(
    s: &AnnotatedSample,
    v: &Vocab,
    tok: &dyn MaskTokenizer,
    t: &Templates,
) -> Result<Dialogue> {
    expect_kind(s, SampleKind::RegionCaption)?;
    if s.masks.is_empty() {
        return Err(s.err("region caption sample has no masks"));
    }
    let caption = caption(s)?.to_string();
    let words = s
        .masks
        .iter()
        .map(|m| word_for(s, &m.name, v, tok))
        .collect::<Result<Vec<_>>>()?;
    let user = t.region_caption.replace("{mask}", &words.join(&t.region_separator));
    Ok(dialogue(s, user, caption))
}

/// Splices each aligned phrase's mask word into the caption right after
/// the phrase. Only insertions: removing the words restores the caption.
pub fn convert_gcg(s: &AnnotatedSample, v: &Vocab, tok: &dyn MaskTokenizer, t: &Templates) -> Result<Dialogue> {
    expect_kind(s, SampleKind::Gcg)?;
    let caption = caption(s)?;
    let mut byte_at: Vec<usize> = caption.char_indices().map(|(b, _)| b).collect();
    byte_at.push(caption.len());
    let mut out = String::with_capacity(caption.len() + 64 * s.alignments.len());
    let mut copied = 0;
    for a in &s.alignments {
        let end = byte_at[a.end];
        out.push_str(&caption[copied..end]);
        out.push_str(&word_for(s, &a.mask, v, tok)?);
        copied = end;
    }
    out.push_str(&caption[copied..]);
    Ok(dialogue(s, t.gcg.clone(), out))
}

/// The assistant answers a referring expression with the target mask words,
/// concatenated in source order, or with the no-target sentence.
pub fn convert_res(s: &AnnotatedSample, v: &Vocab, tok: &dyn MaskTokenizer, t: &Templates) -> Result<Dialogue> {
    expect_kind(s, SampleKind::Res)?;
    let expression = s.expression.as_deref().ok_or_else(|| s.err("missing expression"))?;
    let user = t.res.replace("{expression}", expression);
    let answer = if s.targets.is_empty() {
        t.no_target.clone()
    } else {
        s.targets
            .iter()
            .map(|name| word_for(s, name, v, tok))
            .collect::<Result<String>>()?
    };
    Ok(dialogue(s, user, answer))
}

/// Dispatches on the sample kind.
pub fn convert(s: &AnnotatedSample, v: &Vocab, tok: &dyn MaskTokenizer, t: &Templates) -> Result<Dialogue> {
    match s.kind {
        SampleKind::RegionCaption => convert_region_caption(s, v, tok, t),
        SampleKind::Gcg => convert_gcg(s, v, tok, t),
        SampleKind::Res => convert_res(s, v, tok, t),
    }
}

/// `text` with every well-formed mask word removed.
pub fn strip_mask_words(text: &str, v: &Vocab) -> String {
    let mut out = String::with_capacity(text.len());
    let mut copied = 0;
    for w in parse_mask_words(text, v).words {
        out.push_str(&text[copied..w.span.start]);
        copied = w.span.end;
    }
    out.push_str(&text[copied..]);
    out
}
