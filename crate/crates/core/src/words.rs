//! Mask words: the special-token text form of a quantized mask.
//!
//! A vocabulary with codebook size `K` and `S` steps owns `K·S` mask tokens
//! `<|mt_NNNN|>` plus `<|mt_start|>` and `<|mt_end|>`. Level `ℓ` code `k`
//! is token id `ℓ·K + k`, so each level occupies the contiguous band
//! `[ℓ·K, (ℓ+1)·K)`. A mask word is the start token, one token from each
//! band in level order, then the end token, with nothing in between:
//!
//! ```
//! use masktok::words::{format_mask_word, Vocab};
//!
//! let vocab = Vocab::default();
//! let word = format_mask_word(&[11, 91], &vocab).unwrap();
//! assert_eq!(word, "<|mt_start|><|mt_0011|><|mt_0347|><|mt_end|>");
//! ```

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const START_TOKEN: &str = "<|mt_start|>";
pub const END_TOKEN: &str = "<|mt_end|>";
const TOKEN_PREFIX: &str = "<|mt_";
const TOKEN_SUFFIX: &str = "|>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vocab {
    pub codebook_size: usize,
    pub steps: usize,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab {
            codebook_size: 256,
            steps: 2,
        }
    }
}

impl Vocab {
    pub fn new(codebook_size: usize, steps: usize) -> Result<Self> {
        if codebook_size == 0 || steps == 0 {
            return Err(Error::InvalidQuantConfig(format!(
                "vocabulary needs positive codebook size and steps, got {codebook_size}x{steps}"
            )));
        }
        Ok(Vocab {
            codebook_size,
            steps,
        })
    }

    /// Number of mask tokens, excluding start/end.
    pub fn mask_token_count(&self) -> usize {
        self.codebook_size * self.steps
    }

    /// Zero-padded digit width: 4, or more when the largest id needs it.
    pub fn digits(&self) -> usize {
        let max_id = self.mask_token_count().saturating_sub(1);
        max_id.to_string().len().max(4)
    }

    pub fn token_id(&self, level: usize, code: usize) -> usize {
        level * self.codebook_size + code
    }

    pub fn token(&self, id: usize) -> String {
        format!("{TOKEN_PREFIX}{id:0width$}{TOKEN_SUFFIX}", width = self.digits())
    }

    /// Level band of a mask token id, if the id is in range.
    pub fn band(&self, id: usize) -> Option<usize> {
        (id < self.mask_token_count()).then(|| id / self.codebook_size)
    }

    fn check_codes(&self, codes: &[usize]) -> Result<()> {
        if codes.len() != self.steps {
            return Err(Error::CodeCount {
                expected: self.steps,
                got: codes.len(),
            });
        }
        if let Some((level, &index)) = codes.iter().enumerate().find(|(_, &c)| c >= self.codebook_size) {
            return Err(Error::CodeOutOfRange {
                level,
                index,
                size: self.codebook_size,
            });
        }
        Ok(())
    }
}

/// Renders one code per level as a mask word.
pub fn format_mask_word(codes: &[usize], v: &Vocab) -> Result<String> {
    v.check_codes(codes)?;
    let mut out = String::from(START_TOKEN);
    for (level, &code) in codes.iter().enumerate() {
        out.push_str(&v.token(v.token_id(level, code)));
    }
    out.push_str(END_TOKEN);
    Ok(out)
}

/// Compact display form listing token ids, e.g. `<11-347>`.
pub fn display_codes(codes: &[usize], v: &Vocab) -> Result<String> {
    v.check_codes(codes)?;
    let ids: Vec<String> = codes
        .iter()
        .enumerate()
        .map(|(l, &c)| v.token_id(l, c).to_string())
        .collect();
    Ok(format!("<{}>", ids.join("-")))
}

/// Every special token, mask tokens by id followed by start and end.
pub fn vocab_manifest(v: &Vocab) -> Vec<String> {
    let mut tokens: Vec<String> = (0..v.mask_token_count()).map(|id| v.token(id)).collect();
    tokens.push(START_TOKEN.to_string());
    tokens.push(END_TOKEN.to_string());
    tokens
}

/// Manifest as a text file body, one token per line.
pub fn vocab_manifest_text(v: &Vocab) -> String {
    let mut out = String::new();
    for t in vocab_manifest(v) {
        out.push_str(&t);
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskWord {
    pub codes: Vec<usize>,
    pub text: String,
    /// Byte range of the word in the parsed string.
    pub span: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    /// A start token not followed by a complete word.
    Incomplete,
    /// A mask token whose band does not match its position in the word.
    WrongLevel { expected: usize, id: usize },
    /// A mask-token-shaped id beyond the vocabulary.
    OutOfBand { id: usize },
    /// A mask or end token outside any word.
    Stray,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub span: Range<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParseOutput {
    pub words: Vec<MaskWord>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TokenKind {
    Start,
    End,
    Mask(usize),
}

#[derive(Clone, Debug)]
struct Token {
    kind: TokenKind,
    span: Range<usize>,
}

fn lex(text: &str, v: &Vocab) -> Vec<Token> {
    let bytes = text.as_bytes();
    let digits = v.digits();
    let mut tokens = Vec::new();
    let mut pos = 0;
    while let Some(off) = text[pos..].find(TOKEN_PREFIX) {
        let at = pos + off;
        let body = &bytes[at + TOKEN_PREFIX.len()..];
        let kind_len = if body.starts_with(b"start|>") {
            Some((TokenKind::Start, START_TOKEN.len()))
        } else if body.starts_with(b"end|>") {
            Some((TokenKind::End, END_TOKEN.len()))
        } else if body.len() >= digits + 2
            && body[..digits].iter().all(u8::is_ascii_digit)
            && &body[digits..digits + 2] == TOKEN_SUFFIX.as_bytes()
        {
            let id: usize = std::str::from_utf8(&body[..digits])
                .expect("ascii digits")
                .parse()
                .expect("digits parse");
            Some((TokenKind::Mask(id), TOKEN_PREFIX.len() + digits + 2))
        } else {
            None
        };
        match kind_len {
            Some((kind, len)) => {
                tokens.push(Token {
                    kind,
                    span: at..at + len,
                });
                pos = at + len;
            }
            None => pos = at + 1,
        }
    }
    tokens
}

/// Extracts every well-formed mask word from arbitrary text, in order.
/// Malformed fragments are skipped and reported as diagnostics; parsing
/// never fails.
pub fn parse_mask_words(text: &str, v: &Vocab) -> ParseOutput {
    let tokens = lex(text, v);
    let mut out = ParseOutput::default();
    // A malformed fragment runs up to the next start token or gap in the text.
    let fragment_end = |from: usize| {
        let mut j = from + 1;
        while j < tokens.len()
            && tokens[j].kind != TokenKind::Start
            && tokens[j].span.start == tokens[j - 1].span.end
        {
            j += 1;
        }
        j
    };
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        if tok.kind != TokenKind::Start {
            let j = fragment_end(i);
            let kind = tokens[i..j]
                .iter()
                .find_map(|t| match t.kind {
                    TokenKind::Mask(id) if v.band(id).is_none() => Some(DiagnosticKind::OutOfBand { id }),
                    _ => None,
                })
                .unwrap_or(DiagnosticKind::Stray);
            out.diagnostics.push(Diagnostic {
                kind,
                span: tok.span.start..tokens[j - 1].span.end,
            });
            i = j;
            continue;
        }
        match read_word(&tokens[i..], v) {
            Ok(codes) => {
                let span = tok.span.start..tokens[i + v.steps + 1].span.end;
                out.words.push(MaskWord {
                    codes,
                    text: text[span.clone()].to_string(),
                    span,
                });
                i += v.steps + 2;
            }
            Err(kind) => {
                let j = fragment_end(i);
                out.diagnostics.push(Diagnostic {
                    kind,
                    span: tok.span.start..tokens[j - 1].span.end,
                });
                i = j;
            }
        }
    }
    out
}

/// Reads a word starting at `tokens[0]`, which must be a start token.
fn read_word(tokens: &[Token], v: &Vocab) -> Result<Vec<usize>, DiagnosticKind> {
    let mut codes = Vec::with_capacity(v.steps);
    let mut prev_end = tokens[0].span.end;
    for level in 0..v.steps {
        let tok = tokens
            .get(level + 1)
            .filter(|t| t.span.start == prev_end)
            .ok_or(DiagnosticKind::Incomplete)?;
        let TokenKind::Mask(id) = tok.kind else {
            return Err(DiagnosticKind::Incomplete);
        };
        match v.band(id) {
            None => return Err(DiagnosticKind::OutOfBand { id }),
            Some(band) if band != level => return Err(DiagnosticKind::WrongLevel { expected: level, id }),
            Some(_) => codes.push(id - level * v.codebook_size),
        }
        prev_end = tok.span.end;
    }
    match tokens.get(v.steps + 1) {
        Some(t) if t.kind == TokenKind::End && t.span.start == prev_end => Ok(codes),
        _ => Err(DiagnosticKind::Incomplete),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_reference_example() {
        let v = Vocab::default();
        assert_eq!(
            format_mask_word(&[11, 91], &v).unwrap(),
            "<|mt_start|><|mt_0011|><|mt_0347|><|mt_end|>"
        );
        assert_eq!(
            format_mask_word(&[0, 0], &v).unwrap(),
            "<|mt_start|><|mt_0000|><|mt_0256|><|mt_end|>"
        );
        let top = format_mask_word(&[255, 255], &v).unwrap();
        assert!(top.contains("<|mt_0255|>") && top.contains("<|mt_0511|>"));
        assert_eq!(display_codes(&[11, 91], &v).unwrap(), "<11-347>");
    }

    #[test]
    fn format_errors_name_level_and_index() {
        let v = Vocab::default();
        let err = format_mask_word(&[3, 256], &v).unwrap_err();
        assert!(matches!(
            err,
            Error::CodeOutOfRange {
                level: 1,
                index: 256,
                ..
            }
        ));
        assert!(format_mask_word(&[3], &v).is_err());
    }

    #[test]
    fn parses_embedded_word() {
        let v = Vocab::default();
        let text = "a <|mt_start|><|mt_0011|><|mt_0347|><|mt_end|> b";
        let out = parse_mask_words(text, &v);
        assert_eq!(out.words.len(), 1);
        assert_eq!(out.words[0].codes, vec![11, 91]);
        assert_eq!(&text[out.words[0].span.clone()], out.words[0].text);
        assert!(out.diagnostics.is_empty());
    }

    #[test]
    fn plain_text_has_no_words() {
        let out = parse_mask_words("nothing to see <|mt_ here", &Vocab::default());
        assert!(out.words.is_empty() && out.diagnostics.is_empty());
    }

    #[test]
    fn reversed_levels_rejected_with_one_diagnostic() {
        let out = parse_mask_words("<|mt_start|><|mt_0347|><|mt_0011|><|mt_end|>", &Vocab::default());
        assert!(out.words.is_empty());
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.diagnostics[0].span, 0..44);
        assert_eq!(
            out.diagnostics[0].kind,
            DiagnosticKind::WrongLevel {
                expected: 0,
                id: 347
            }
        );
    }

    #[test]
    fn back_to_back_words_allowed() {
        let v = Vocab::default();
        let text = format!(
            "{}{}",
            format_mask_word(&[1, 2], &v).unwrap(),
            format_mask_word(&[3, 4], &v).unwrap()
        );
        let codes: Vec<_> = parse_mask_words(&text, &v).words.into_iter().map(|w| w.codes).collect();
        assert_eq!(codes, vec![vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn recovers_word_nested_in_broken_one() {
        let v = Vocab::default();
        let text = "<|mt_start|><|mt_0011|><|mt_start|><|mt_0011|><|mt_0347|><|mt_end|>";
        let out = parse_mask_words(text, &v);
        assert_eq!(out.words.len(), 1);
        assert_eq!(out.words[0].span.start, 23);
        assert!(!out.diagnostics.is_empty());
    }

    #[test]
    fn interleaved_text_breaks_word() {
        let v = Vocab::default();
        let out = parse_mask_words("<|mt_start|><|mt_0011|> <|mt_0347|><|mt_end|>", &v);
        assert!(out.words.is_empty());
    }

    #[test]
    fn out_of_band_id() {
        let v = Vocab::default();
        let out = parse_mask_words("<|mt_start|><|mt_0011|><|mt_0600|><|mt_end|>", &v);
        assert!(out.words.is_empty());
        assert!(out
            .diagnostics
            .iter()
            .any(|d| d.kind == DiagnosticKind::OutOfBand { id: 600 }));
    }

    #[test]
    fn manifest_shapes() {
        let m = vocab_manifest(&Vocab::default());
        assert_eq!(m.len(), 514);
        assert_eq!(m[0], "<|mt_0000|>");
        assert_eq!(m[511], "<|mt_0511|>");
        assert_eq!(m[512], START_TOKEN);
        let small = vocab_manifest(&Vocab::new(4, 1).unwrap());
        assert_eq!(
            small,
            vec!["<|mt_0000|>", "<|mt_0001|>", "<|mt_0002|>", "<|mt_0003|>", START_TOKEN, END_TOKEN]
        );
        assert_eq!(vocab_manifest(&Vocab::default()), m);
    }

    #[test]
    fn digit_width_grows() {
        assert_eq!(Vocab::new(5000, 2).unwrap().digits(), 4);
        assert_eq!(Vocab::new(5001, 2).unwrap().digits(), 5);
        assert_eq!(Vocab::new(5001, 2).unwrap().token(7), "<|mt_00007|>");
    }
}
