use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use super::{MergeTable, Vocabulary};

type Pair = (u32, u32);

/// Heap entry: highest count first, then lexicographically smallest (left, right).
#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: String,
    right: String,
    pair: Pair,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| (&other.left, &other.right).cmp(&(&self.left, &self.right)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Learner {
    symbols: Vec<String>,
    symbol_id: HashMap<String, u32>,
    words: Vec<(Vec<u32>, u64)>,
    pair_count: HashMap<Pair, u64>,
    pair_words: HashMap<Pair, BTreeSet<usize>>,
    heap: BinaryHeap<Candidate>,
}

impl Learner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.symbol_id.get(s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(s.to_string());
        self.symbol_id.insert(s.to_string(), id);
        id
    }

    fn push(&mut self, pair: Pair) {
        let count = self.pair_count.get(&pair).copied().unwrap_or(0);
        if count > 0 {
            self.heap.push(Candidate {
                count,
                left: self.symbols[pair.0 as usize].clone(),
                right: self.symbols[pair.1 as usize].clone(),
                pair,
            });
        }
    }

    fn add_word(&mut self, idx: usize, sign: bool, touched: &mut BTreeSet<Pair>) {
        let (syms, count) = &self.words[idx];
        for w in syms.windows(2) {
            let pair = (w[0], w[1]);
            let entry = self.pair_count.entry(pair).or_insert(0);
            if sign {
                *entry += count;
                self.pair_words.entry(pair).or_default().insert(idx);
            } else {
                *entry -= count;
            }
            touched.insert(pair);
        }
    }

    /// Pops until a candidate matching the live count is found.
    fn best(&mut self) -> Option<(Pair, u64)> {
        while let Some(top) = self.heap.pop() {
            if self.pair_count.get(&top.pair).copied() == Some(top.count) {
                return Some((top.pair, top.count));
            }
        }
        None
    }
}

/// Learns up to `num_merges` merges from weighted words.
///
/// Each step merges the adjacent pair with the highest count weighted by word
/// frequency (overlapping occurrences all counted); ties go to the
/// lexicographically smallest `(left, right)`. Learning stops early once no
/// pair occurs at least twice.
pub fn learn_bpe(word_frequency: &BTreeMap<String, u64>, num_merges: usize) -> (MergeTable, Vocabulary) {
    let mut learner = Learner {
        symbols: Vec::new(),
        symbol_id: HashMap::new(),
        words: Vec::new(),
        pair_count: HashMap::new(),
        pair_words: HashMap::new(),
        heap: BinaryHeap::new(),
    };
    let mut chars = BTreeSet::new();
    for (word, &count) in word_frequency {
        if count == 0 || word.is_empty() {
            continue;
        }
        let syms: Vec<u32> = word
            .chars()
            .map(|c| {
                chars.insert(c);
                learner.intern(&c.to_string())
            })
            .collect();
        learner.words.push((syms, count));
    }
    let mut touched = BTreeSet::new();
    for idx in 0..learner.words.len() {
        learner.add_word(idx, true, &mut touched);
    }
    for pair in std::mem::take(&mut touched) {
        learner.push(pair);
    }

    let mut merges: Vec<(String, String)> = Vec::new();
    while merges.len() < num_merges {
        let Some((pair, count)) = learner.best() else {
            break;
        };
        if count < 2 {
            break;
        }
        let left = learner.symbols[pair.0 as usize].clone();
        let right = learner.symbols[pair.1 as usize].clone();
        let merged = learner.intern(&format!("{left}{right}"));

        let affected: Vec<usize> = learner
            .pair_words
            .get(&pair)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        for idx in affected {
            let syms = &learner.words[idx].0;
            if !syms.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            learner.add_word(idx, false, &mut touched);
            let syms = &learner.words[idx].0;
            let mut next = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(syms[i]);
                    i += 1;
                }
            }
            learner.words[idx].0 = next;
            learner.add_word(idx, true, &mut touched);
        }
        for p in std::mem::take(&mut touched) {
            learner.push(p);
        }
        merges.push((left, right));
    }

    let mut tokens: Vec<String> = chars.into_iter().map(String::from).collect();
    let mut seen: BTreeSet<String> = tokens.iter().cloned().collect();
    for (l, r) in &merges {
        let joined = format!("{l}{r}");
        if seen.insert(joined.clone()) {
            tokens.push(joined);
        }
    }
    let vocab = Vocabulary::from_tokens(tokens).expect("vocabulary tokens are deduplicated");
    (MergeTable::new(merges), vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::{apply_bpe, RESERVED};

    fn freq(items: &[(&str, u64)]) -> BTreeMap<String, u64> {
        items.iter().map(|(w, c)| (w.to_string(), *c)).collect()
    }

    #[test]
    fn empty_input() {
        let (table, vocab) = learn_bpe(&BTreeMap::new(), 0);
        assert_eq!(table.num_merges(), 0);
        assert_eq!(vocab.len(), RESERVED.len());
    }

    #[test]
    fn most_frequent_pair_first() {
        // "aa" occurs 6 weighted times, "ab" 3
        let (table, _) = learn_bpe(&freq(&[("aaab", 3)]), 1);
        assert_eq!(table.merges(), [("a".to_string(), "a".to_string())]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let (table, vocab) = learn_bpe(&freq(&[("ab", 5), ("cd", 5)]), 2);
        assert_eq!(
            table.merges(),
            [("a".to_string(), "b".to_string()), ("c".to_string(), "d".to_string())]
        );
        assert_eq!(vocab.len(), 4 + 4 + 2);
    }

    #[test]
    fn stops_when_no_pair_repeats() {
        let (table, _) = learn_bpe(&freq(&[("abc", 1)]), 10);
        assert_eq!(table.num_merges(), 0);
        let (table, _) = learn_bpe(&freq(&[("abcd", 2)]), 10);
        assert_eq!(table.num_merges(), 3);
    }

    #[test]
    fn training_words_reproduce_final_segmentation() {
        let f = freq(&[("dwReadSize", 4), ("dwWriteSize", 3), ("ReadFile", 5), ("Size", 2)]);
        let (table, vocab) = learn_bpe(&f, 15);
        for w in f.keys() {
            let segs = apply_bpe(w, &table);
            assert_eq!(segs.concat(), *w);
            assert!(segs.iter().all(|s| vocab.id(s).is_some()));
        }
        assert_eq!(apply_bpe("ReadFile", &table), ["ReadFile"]);
    }
}
