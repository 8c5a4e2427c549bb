//! Text formats for merge tables and vocabularies.
//!
//! Subtokens are escaped so that a space or tab inside one never collides
//! with the field separators: `\\` for backslash, `\s` space, `\t` tab,
//! `\n` newline, `\r` carriage return.

use std::fmt::Write as _;
use std::path::Path;

use super::{MergeTable, TokenSequence, Vocabulary, RESERVED};
use crate::error::{Error, Result};

pub const MERGES_VERSION: &str = "#version vulnrank-bpe-1";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('s') => out.push(' '),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(Error::Data(format!("bad escape `\\{}` in `{s}`", other.unwrap_or(' ')))),
        }
    }
    Ok(out)
}

pub fn merges_to_string(table: &MergeTable) -> String {
    let mut out = String::from(MERGES_VERSION);
    out.push('\n');
    for (l, r) in table.merges() {
        let _ = writeln!(out, "{} {}", escape(l), escape(r));
    }
    out
}

pub fn merges_from_str(text: &str) -> Result<MergeTable> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first.trim_end() == MERGES_VERSION => {}
        other => {
            return Err(Error::Data(format!(
                "merge table must start with `{MERGES_VERSION}`, found `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let mut merges = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (l, r) = line
            .split_once(' ')
            .ok_or_else(|| Error::Data(format!("merge line {}: expected `left right`", i + 2)))?;
        merges.push((unescape(l)?, unescape(r)?));
    }
    Ok(MergeTable::new(merges))
}

pub fn vocab_to_string(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for (id, tok) in vocab.tokens().iter().enumerate() {
        let _ = writeln!(out, "{}\t{}", escape(tok), id);
    }
    out
}

pub fn vocab_from_str(text: &str) -> Result<Vocabulary> {
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (tok, id) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::Data(format!("vocab line {}: expected `subtoken<TAB>id`", i + 1)))?;
        let id: usize = id
            .parse()
            .map_err(|_| Error::Data(format!("vocab line {}: bad id `{id}`", i + 1)))?;
        if id != tokens.len() {
            return Err(Error::Data(format!("vocab line {}: ids must be contiguous from 0", i + 1)));
        }
        tokens.push(unescape(tok)?);
    }
    if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(t, r)| t != r) {
        return Err(Error::Data("vocab must start with the reserved tokens".into()));
    }
    Vocabulary::from_tokens(tokens.split_off(RESERVED.len()))
        .ok_or_else(|| Error::Data("vocab contains duplicate subtokens".into()))
}

pub fn write_merges(path: &Path, table: &MergeTable) -> Result<()> {
    std::fs::write(path, merges_to_string(table)).map_err(|e| Error::io(path, e))
}

pub fn read_merges(path: &Path) -> Result<MergeTable> {
    merges_from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    std::fs::write(path, vocab_to_string(vocab)).map_err(|e| Error::io(path, e))
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    vocab_from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// One JSON object per line.
pub fn write_tokens_jsonl(path: &Path, sequences: &[TokenSequence]) -> Result<()> {
    let mut out = String::new();
    for s in sequences {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_tokens_jsonl(path: &Path) -> Result<Vec<TokenSequence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Data(format!("{}:{}: bad token sequence: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn merge_file_layout() {
        let t = MergeTable::new(vec![("a".into(), "b".into()), ("x\ty".into(), " ".into())]);
        let s = merges_to_string(&t);
        assert_eq!(s, "#version vulnrank-bpe-1\na b\nx\\ty \\s\n");
        assert_eq!(merges_from_str(&s).unwrap(), t);
        assert!(merges_from_str("a b\n").is_err());
    }

    #[test]
    fn vocab_file_layout() {
        let v = Vocabulary::from_tokens(vec!["a".into(), "\\".into()]).unwrap();
        let s = vocab_to_string(&v);
        assert!(s.starts_with("<pad>\t0\n<unk>\t1\n<s>\t2\n</s>\t3\na\t4\n\\\\\t5\n"));
        assert_eq!(vocab_from_str(&s).unwrap(), v);
    }

    proptest! {
        #[test]
        fn escape_round_trips(s in "\\PC*") {
            prop_assert_eq!(unescape(&escape(&s)).unwrap(), s);
        }
    }
}
