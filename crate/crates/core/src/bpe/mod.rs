//! Byte-pair encoding over pre-tokenized source words.

mod io;
mod learn;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::extract::signature_name_span;
use crate::corpus::FunctionRecord;

pub use io::{
    read_merges, read_tokens_jsonl, read_vocab, write_merges, write_tokens_jsonl, write_vocab, MERGES_VERSION,
};
pub use learn::learn_bpe;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Default number of merges learned by the pipeline.
pub const DEFAULT_NUM_MERGES: usize = 8192;

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits a function body into words, tagging each with its 0-based line.
///
/// Identifier runs `[A-Za-z0-9_]+` are words and every other non-whitespace
/// character is a word by itself. A templated declarator name such as
/// `Foo<a, b>::bar` is kept as one word with its template commas turned into
/// tabs and whitespace dropped.
pub fn pretokenize_lines(body: &str) -> Vec<(String, usize)> {
    let span = signature_name_span(body).filter(|&(s, e)| body[s..e].contains(','));
    let mut out = Vec::new();
    let mut line = 0usize;
    let mut cur = String::new();
    let mut cur_line = 0usize;
    let mut iter = body.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if let Some((s, e)) = span {
            if i == s {
                if !cur.is_empty() {
                    out.push((std::mem::take(&mut cur), cur_line));
                }
                out.push((crate::corpus::extract::normalize_name(&body[s..e]), line));
                line += body[s..e].matches('\n').count();
                while iter.peek().is_some_and(|&(j, _)| j < e) {
                    iter.next();
                }
                continue;
            }
        }
        if is_ident_char(c) {
            if cur.is_empty() {
                cur_line = line;
            }
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            out.push((std::mem::take(&mut cur), cur_line));
        }
        if c == '\n' {
            line += 1;
        } else if !c.is_whitespace() {
            out.push((c.to_string(), line));
        }
    }
    if !cur.is_empty() {
        out.push((cur, cur_line));
    }
    out
}

/// Splits a function body into words (see [`pretokenize_lines`]).
pub fn pretokenize(body: &str) -> Vec<String> {
    pretokenize_lines(body).into_iter().map(|(w, _)| w).collect()
}

/// Word counts over every record body.
pub fn word_frequencies(records: &[FunctionRecord]) -> BTreeMap<String, u64> {
    let mut freq = BTreeMap::new();
    for rec in records {
        for word in pretokenize(&rec.body) {
            *freq.entry(word).or_insert(0) += 1;
        }
    }
    freq
}

/// Ordered merge rules.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    rank: HashMap<String, HashMap<String, usize>>,
}

impl MergeTable {
    pub fn new(merges: Vec<(String, String)>) -> Self {
        let mut rank: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for (i, (l, r)) in merges.iter().enumerate() {
            rank.entry(l.clone()).or_default().entry(r.clone()).or_insert(i);
        }
        MergeTable { merges, rank }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn num_merges(&self) -> usize {
        self.merges.len()
    }

    fn rank_of(&self, left: &str, right: &str) -> Option<usize> {
        self.rank.get(left).and_then(|m| m.get(right)).copied()
    }
}

/// Dense subtoken ids; 0..4 are the reserved PAD, UNK, BOS and EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::new()).expect("reserved tokens are distinct")
    }
}

impl Vocabulary {
    /// Builds a vocabulary from non-reserved tokens in id order (ids start at 4).
    ///
    /// Returns `None` if a token repeats or collides with a reserved name.
    pub fn from_tokens(tokens: Vec<String>) -> Option<Self> {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        let mut id_of = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if id_of.insert(t.clone(), i as u32).is_some() {
                return None;
            }
        }
        Some(Vocabulary { tokens: all, id_of })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Splits `word` into characters and applies each merge in table order
/// wherever its pair is adjacent, left to right.
pub fn apply_bpe(word: &str, merges: &MergeTable) -> Vec<String> {
    let mut segs: Vec<String> = word.chars().map(String::from).collect();
    let mut next_rank = 0usize;
    loop {
        let best = segs
            .windows(2)
            .filter_map(|w| merges.rank_of(&w[0], &w[1]))
            .filter(|&r| r >= next_rank)
            .min();
        let Some(rank) = best else {
            break;
        };
        let (left, right) = &merges.merges[rank];
        let mut merged = Vec::with_capacity(segs.len());
        let mut i = 0;
        while i < segs.len() {
            if i + 1 < segs.len() && &segs[i] == left && &segs[i + 1] == right {
                merged.push(format!("{left}{right}"));
                i += 2;
            } else {
                merged.push(std::mem::take(&mut segs[i]));
                i += 1;
            }
        }
        segs = merged;
        next_rank = rank + 1;
    }
    segs
}

/// Subtoken ids for one function, wrapped in BOS/EOS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub function_id: u64,
    pub ids: Vec<u32>,
}

/// Token and UNK counts from an encoding pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodeStats {
    pub tokens: usize,
    pub unknown: usize,
    pub oov_rate: f64,
}

/// Encodes every record body; unknown subtokens map to UNK.
pub fn encode(
    records: &[FunctionRecord],
    merges: &MergeTable,
    vocab: &Vocabulary,
) -> (Vec<TokenSequence>, EncodeStats) {
    let mut cache: HashMap<String, Vec<u32>> = HashMap::new();
    let mut stats = EncodeStats::default();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let mut ids = vec![BOS];
        for word in pretokenize(&rec.body) {
            let pieces = cache.entry(word).or_insert_with_key(|w| {
                apply_bpe(w, merges)
                    .iter()
                    .map(|s| vocab.id(s).unwrap_or(UNK))
                    .collect()
            });
            ids.extend_from_slice(pieces);
        }
        ids.push(EOS);
        let inner = &ids[1..ids.len() - 1];
        stats.tokens += inner.len();
        stats.unknown += inner.iter().filter(|&&id| id == UNK).count();
        out.push(TokenSequence {
            function_id: rec.id,
            ids,
        });
    }
    stats.oov_rate = if stats.tokens == 0 {
        0.0
    } else {
        stats.unknown as f64 / stats.tokens as f64
    };
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        pretokenize(s)
    }

    #[test]
    fn pretokenize_examples() {
        assert_eq!(words("a = b;"), ["a", "=", "b", ";"]);
        assert_eq!(words("dwReadSize"), ["dwReadSize"]);
        assert_eq!(words("f(x,y)"), ["f", "(", "x", ",", "y", ")"]);
        assert!(words("  \n\t").is_empty());
    }

    #[test]
    fn pretokenize_tracks_lines() {
        let got = pretokenize_lines("a = b ;\nreturn a ;");
        let lines: Vec<usize> = got.iter().map(|(_, l)| *l).collect();
        assert_eq!(lines, [0, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn template_name_survives_as_one_word() {
        let body = "void IntraPredBppFuncs_C<block_width, block_height,\n  bitdepth, Pixel>::DcFill(void* dest) {\n  x = 1;\n}";
        let got = pretokenize_lines(body);
        assert_eq!(got[0], ("void".to_string(), 0));
        assert_eq!(
            got[1],
            (
                "IntraPredBppFuncs_C<block_width\tblock_height\tbitdepth\tPixel>::DcFill".to_string(),
                0
            )
        );
        assert_eq!(got[2], ("(".to_string(), 1));
        assert!(got.iter().any(|(w, l)| w == "x" && *l == 2));
        // commas inside the parameter list still split
        let plain = pretokenize("void f(int a, int b) { }");
        assert!(plain.contains(&",".to_string()));
    }

    #[test]
    fn apply_examples() {
        let empty = MergeTable::default();
        assert_eq!(apply_bpe("x", &empty), ["x"]);
        let aa = MergeTable::new(vec![("a".into(), "a".into())]);
        assert_eq!(apply_bpe("aaab", &aa), ["aa", "a", "b"]);
    }

    #[test]
    fn apply_respects_table_order() {
        // (b,c) comes after (a,b): "abc" -> ab,c and the later rule never fires.
        let t = MergeTable::new(vec![("a".into(), "b".into()), ("b".into(), "c".into())]);
        assert_eq!(apply_bpe("abc", &t), ["ab", "c"]);
        // a rule whose pair only appears after a later merge is skipped
        let t = MergeTable::new(vec![("x".into(), "yz".into()), ("y".into(), "z".into())]);
        assert_eq!(apply_bpe("xyz", &t), ["x", "yz"]);
    }

    fn rec(id: u64, body: &str) -> FunctionRecord {
        FunctionRecord {
            id,
            name: "f".into(),
            file_path: "a.c".into(),
            line_start: 1,
            line_end: 1,
            body: body.into(),
            param_count: 0,
            label: 0,
        }
    }

    #[test]
    fn encode_examples() {
        let vocab = Vocabulary::from_tokens(vec!["b".into(), "c".into(), "x".into(), "a".into()]).unwrap();
        assert_eq!(vocab.id("a"), Some(7));
        let (seqs, stats) = encode(&[rec(0, ""), rec(1, "a"), rec(2, "a q")], &MergeTable::default(), &vocab);
        assert_eq!(seqs[0].ids, [BOS, EOS]);
        assert_eq!(seqs[1].ids, [2, 7, 3]);
        assert_eq!(seqs[2].ids, [2, 7, UNK, 3]);
        assert_eq!(stats.tokens, 3);
        assert_eq!(stats.unknown, 1);
        assert!((stats.oov_rate - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn self_encoding_has_no_unknowns() {
        let recs = vec![
            rec(0, "int main(void) { return dwReadSize + 1; }"),
            rec(1, "static void copy(char *dst, const char *src) { strcpy(dst, src); }"),
        ];
        let freq = word_frequencies(&recs);
        let (table, vocab) = learn_bpe(&freq, 40);
        let (seqs, stats) = encode(&recs, &table, &vocab);
        assert_eq!(stats.unknown, 0);
        assert_eq!(stats.oov_rate, 0.0);
        for s in &seqs {
            assert!(s.ids.iter().all(|&id| (id as usize) < vocab.len()));
            assert_eq!(s.ids.first(), Some(&BOS));
            assert_eq!(s.ids.last(), Some(&EOS));
        }
    }
}
