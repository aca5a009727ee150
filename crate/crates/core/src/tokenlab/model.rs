use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::bpe::pretokenize;
use super::TokenizerError;

pub const TOKENIZER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub unk: Option<String>,
    pub bos: Option<String>,
    pub eos: Option<String>,
    pub pad: Option<String>,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        SpecialTokens {
            unk: Some("<unk>".into()),
            bos: Some("<s>".into()),
            eos: Some("</s>".into()),
            pad: Some("<pad>".into()),
        }
    }
}

impl SpecialTokens {
    pub fn none() -> Self {
        SpecialTokens { unk: None, bos: None, eos: None, pad: None }
    }

    fn defined(&self) -> impl Iterator<Item = &String> {
        [&self.unk, &self.bos, &self.eos, &self.pad].into_iter().flatten()
    }
}

/// Display form of the fallback token for one byte.
pub fn byte_token(b: u8) -> String {
    format!("<0x{b:02X}>")
}

/// On-disk tokenizer layout. `vocab` is in id order: defined specials
/// (unk, bos, eos, pad), then 256 byte tokens when `byte_fallback` is set,
/// then text tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerFile {
    pub version: u32,
    pub specials: SpecialTokens,
    pub byte_fallback: bool,
    pub vocab: Vec<String>,
    pub merges: Vec<[String; 2]>,
}

/// A token id with the byte range of the input it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub id: u32,
    pub span: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct TokenizerModel {
    specials: SpecialTokens,
    byte_fallback: bool,
    vocab: Vec<String>,
    merges: Vec<(String, String)>,
    text_start: u32,
    text_ids: HashMap<String, u32>,
    ranks: HashMap<(String, String), usize>,
    unk_id: Option<u32>,
    bos_id: Option<u32>,
    eos_id: Option<u32>,
    pad_id: Option<u32>,
}

impl PartialEq for TokenizerModel {
    fn eq(&self, other: &Self) -> bool {
        self.specials == other.specials
            && self.byte_fallback == other.byte_fallback
            && self.vocab == other.vocab
            && self.merges == other.merges
    }
}

#[derive(Clone)]
enum Sym {
    Text(String),
    Raw(char),
}

impl TokenizerModel {
    /// Build from text tokens (alphabet and merge results, in id order).
    pub fn new(
        specials: SpecialTokens,
        byte_fallback: bool,
        text_tokens: Vec<String>,
        merges: Vec<(String, String)>,
    ) -> Result<Self, TokenizerError> {
        let mut vocab: Vec<String> = specials.defined().cloned().collect();
        let mut seen = std::collections::HashSet::new();
        for s in &vocab {
            if !seen.insert(s.clone()) {
                return Err(TokenizerError::InvalidModel(format!("duplicate special token {s:?}")));
            }
        }
        let mut next = vocab.len() as u32;
        let mut ids = [None; 4];
        for (slot, tok) in [&specials.unk, &specials.bos, &specials.eos, &specials.pad].into_iter().enumerate() {
            if tok.is_some() {
                ids[slot] = Some(vocab.iter().position(|v| Some(v) == tok.as_ref()).unwrap() as u32);
            }
        }
        if byte_fallback {
            vocab.extend((0..=255u8).map(byte_token));
            next += 256;
        }
        let text_start = next;
        let mut text_ids = HashMap::with_capacity(text_tokens.len());
        for (i, tok) in text_tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(TokenizerError::InvalidModel("empty text token".into()));
            }
            if text_ids.insert(tok.clone(), text_start + i as u32).is_some() {
                return Err(TokenizerError::InvalidModel(format!("duplicate text token {tok:?}")));
            }
        }
        vocab.extend(text_tokens);
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (l, r)) in merges.iter().enumerate() {
            for part in [l, r] {
                if !text_ids.contains_key(part) {
                    return Err(TokenizerError::InvalidModel(format!("merge {rank} uses unknown token {part:?}")));
                }
            }
            if !text_ids.contains_key(&format!("{l}{r}")) {
                return Err(TokenizerError::InvalidModel(format!("merge {rank} result {l}{r:?} not in vocab")));
            }
            ranks.entry((l.clone(), r.clone())).or_insert(rank);
        }
        Ok(TokenizerModel {
            specials,
            byte_fallback,
            vocab,
            merges,
            text_start,
            text_ids,
            ranks,
            unk_id: ids[0],
            bos_id: ids[1],
            eos_id: ids[2],
            pad_id: ids[3],
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_fallback
    }

    pub fn unk_id(&self) -> Option<u32> {
        self.unk_id
    }

    pub fn bos_id(&self) -> Option<u32> {
        self.bos_id
    }

    pub fn eos_id(&self) -> Option<u32> {
        self.eos_id
    }

    pub fn pad_id(&self) -> Option<u32> {
        self.pad_id
    }

    /// Text tokens only (alphabet plus merge results).
    pub fn text_tokens(&self) -> &[String] {
        &self.vocab[self.text_start as usize..]
    }

    pub fn text_id(&self, token: &str) -> Option<u32> {
        self.text_ids.get(token).copied()
    }

    /// Merge one pre-token, applying merges in rank order; each step merges
    /// every occurrence of the lowest-ranked pair not yet applied.
    fn merge_word(&self, word: &str) -> Vec<Sym> {
        let mut syms: Vec<Sym> = word
            .chars()
            .map(|c| {
                let s = c.to_string();
                if self.text_ids.contains_key(&s) {
                    Sym::Text(s)
                } else {
                    Sym::Raw(c)
                }
            })
            .collect();
        let mut floor = 0usize;
        loop {
            let mut best: Option<(usize, &str, &str)> = None;
            for w in syms.windows(2) {
                if let (Sym::Text(a), Sym::Text(b)) = (&w[0], &w[1]) {
                    if let Some(&rank) = self.ranks.get(&(a.clone(), b.clone())) {
                        if rank >= floor && best.is_none_or(|(r, _, _)| rank < r) {
                            best = Some((rank, a, b));
                        }
                    }
                }
            }
            let Some((rank, a, b)) = best else { break };
            let (a, b) = (a.to_string(), b.to_string());
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() {
                    if let (Sym::Text(x), Sym::Text(y)) = (&syms[i], &syms[i + 1]) {
                        if *x == a && *y == b {
                            out.push(Sym::Text(format!("{a}{b}")));
                            i += 2;
                            continue;
                        }
                    }
                }
                out.push(syms[i].clone());
                i += 1;
            }
            syms = out;
            floor = rank + 1;
        }
        syms
    }

    fn push_word(&self, word: &str, start: usize, out: &mut Vec<TokenSpan>) -> Result<(), TokenizerError> {
        let mut pos = start;
        for sym in self.merge_word(word) {
            match sym {
                Sym::Text(s) => {
                    out.push(TokenSpan { id: self.text_ids[&s], span: pos..pos + s.len() });
                    pos += s.len();
                }
                Sym::Raw(c) => {
                    let len = c.len_utf8();
                    if self.byte_fallback {
                        let mut buf = [0u8; 4];
                        for (k, b) in c.encode_utf8(&mut buf).bytes().enumerate() {
                            out.push(TokenSpan { id: self.text_start - 256 + b as u32, span: pos + k..pos + k + 1 });
                        }
                    } else if let Some(unk) = self.unk_id {
                        out.push(TokenSpan { id: unk, span: pos..pos + len });
                    } else {
                        return Err(TokenizerError::UnencodableInput(c));
                    }
                    pos += len;
                }
            }
        }
        Ok(())
    }

    pub fn encode_with_offsets(&self, text: &str) -> Result<Vec<TokenSpan>, TokenizerError> {
        let mut out = Vec::new();
        let mut cache: HashMap<&str, Vec<TokenSpan>> = HashMap::new();
        for piece in pretokenize(text) {
            let word = &text[piece.clone()];
            if !cache.contains_key(word) {
                let mut spans = Vec::new();
                self.push_word(word, 0, &mut spans)?;
                cache.insert(word, spans);
            }
            out.extend(
                cache[word]
                    .iter()
                    .map(|t| TokenSpan { id: t.id, span: t.span.start + piece.start..t.span.end + piece.start }),
            );
        }
        Ok(out)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        Ok(self.encode_with_offsets(text)?.into_iter().map(|t| t.id).collect())
    }

    /// Inverse of [`encode`](Self::encode) on covered text. Special tokens
    /// decode to their literal strings; byte runs are decoded as UTF-8.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        let mut bytes: Vec<u8> = Vec::new();
        let byte_start = self.text_start.wrapping_sub(256);
        for &id in ids {
            if id as usize >= self.vocab.len() {
                return Err(TokenizerError::UnknownId(id));
            }
            if self.byte_fallback && id >= byte_start && id < self.text_start {
                bytes.push((id - byte_start) as u8);
                continue;
            }
            if !bytes.is_empty() {
                out.push_str(&String::from_utf8_lossy(&bytes));
                bytes.clear();
            }
            out.push_str(&self.vocab[id as usize]);
        }
        if !bytes.is_empty() {
            out.push_str(&String::from_utf8_lossy(&bytes));
        }
        Ok(out)
    }

    pub fn to_file(&self) -> TokenizerFile {
        TokenizerFile {
            version: TOKENIZER_FORMAT_VERSION,
            specials: self.specials.clone(),
            byte_fallback: self.byte_fallback,
            vocab: self.vocab.clone(),
            merges: self.merges.iter().map(|(l, r)| [l.clone(), r.clone()]).collect(),
        }
    }

    pub fn from_file(file: TokenizerFile) -> Result<Self, TokenizerError> {
        if file.version != TOKENIZER_FORMAT_VERSION {
            return Err(TokenizerError::InvalidModel(format!("unsupported version {}", file.version)));
        }
        let fixed: Vec<String> = file
            .specials
            .defined()
            .cloned()
            .chain(if file.byte_fallback { (0..=255u8).map(byte_token).collect() } else { Vec::new() })
            .collect();
        if file.vocab.len() < fixed.len() || file.vocab[..fixed.len()] != fixed[..] {
            return Err(TokenizerError::InvalidModel("vocab does not start with the special/byte layout".into()));
        }
        let text = file.vocab[fixed.len()..].to_vec();
        let merges = file.merges.into_iter().map(|[l, r]| (l, r)).collect();
        TokenizerModel::new(file.specials, file.byte_fallback, text, merges)
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), TokenizerError> {
        serde_json::to_writer_pretty(w, &self.to_file())?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self, TokenizerError> {
        Self::from_file(serde_json::from_reader(r)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(byte_fallback: bool, specials: SpecialTokens) -> TokenizerModel {
        let text = ["a", "b", "c", " ", "ab", "abc"].iter().map(|s| s.to_string()).collect();
        let merges = vec![("a".into(), "b".into()), ("ab".into(), "c".into())];
        TokenizerModel::new(specials, byte_fallback, text, merges).unwrap()
    }

    #[test]
    fn layout_and_ids() {
        let m = toy(true, SpecialTokens::default());
        assert_eq!(m.vocab_size(), 4 + 256 + 6);
        assert_eq!(m.unk_id(), Some(0));
        assert_eq!(m.eos_id(), Some(2));
        assert_eq!(m.vocab()[4], "<0x00>");
        assert_eq!(m.text_id("abc"), Some(265));
    }

    #[test]
    fn encode_basics() {
        let m = toy(true, SpecialTokens::default());
        assert!(m.encode("").unwrap().is_empty());
        assert_eq!(m.encode("abc").unwrap(), vec![265]);
        assert_eq!(m.encode("abc ab").unwrap(), vec![265, 263, 264]);
        let ids = m.encode("aé").unwrap();
        assert_eq!(ids.len(), 3);
        assert_eq!(m.decode(&ids).unwrap(), "aé");
    }

    #[test]
    fn unk_and_unencodable() {
        let m = toy(false, SpecialTokens::default());
        assert_eq!(m.encode("az").unwrap(), vec![4, 0]);
        let bare = toy(false, SpecialTokens::none());
        assert!(matches!(bare.encode("z"), Err(TokenizerError::UnencodableInput('z'))));
    }

    #[test]
    fn decode_errors_and_empty() {
        let m = toy(true, SpecialTokens::default());
        assert_eq!(m.decode(&[]).unwrap(), "");
        assert!(matches!(m.decode(&[9999]), Err(TokenizerError::UnknownId(9999))));
    }

    #[test]
    fn offsets_cover_input() {
        let m = toy(true, SpecialTokens::default());
        let text = "ab abc  cé";
        let spans = m.encode_with_offsets(text).unwrap();
        let mut pos = 0;
        for s in &spans {
            assert_eq!(s.span.start, pos);
            pos = s.span.end;
        }
        assert_eq!(pos, text.len());
    }

    #[test]
    fn file_roundtrip() {
        let m = toy(true, SpecialTokens::default());
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        assert_eq!(TokenizerModel::load(buf.as_slice()).unwrap(), m);
        let mut f = m.to_file();
        f.vocab.swap(0, 1);
        assert!(TokenizerModel::from_file(f).is_err());
    }

    #[test]
    fn rejects_bad_merges() {
        let r = TokenizerModel::new(SpecialTokens::none(), false, vec!["a".into()], vec![("a".into(), "a".into())]);
        assert!(r.is_err());
    }
}
