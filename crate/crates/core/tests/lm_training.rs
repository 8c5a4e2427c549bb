mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vulnrank_core::bpe::{BOS, EOS};
use vulnrank_core::lm::{embed_function, init_params, train, LmConfig};
use vulnrank_core::similarity::cosine;
use vulnrank_core::TokenSequence;

#[test]
fn repeating_corpus_is_learned_at_d32() {
    let seqs = support::repeating_corpus(40, 12);
    let cfg = LmConfig {
        epochs: 50,
        batch_size: 4,
        learning_rate: 1.0,
        seed: 11,
        ..LmConfig::new(7, 32)
    };
    let (_, history) = train(init_params(&cfg), &seqs, &cfg).unwrap();
    let last = history.epochs.last().unwrap();
    let held = last.heldout.unwrap();
    assert!(held.accuracy >= 0.95, "{held:?}");
    assert!(held.perplexity < 1.5, "{held:?}");
}

#[test]
fn training_loss_does_not_rise() {
    let seqs = support::repeating_corpus(40, 12);
    let cfg = LmConfig {
        epochs: 30,
        batch_size: 4,
        learning_rate: 0.1,
        seed: 11,
        ..LmConfig::new(7, 32)
    };
    let (_, history) = train(init_params(&cfg), &seqs, &cfg).unwrap();
    assert!(history.epochs.last().unwrap().train.perplexity < history.epochs[0].train.perplexity);
    for w in history.epochs.windows(2) {
        assert!(w[1].train.loss <= w[0].train.loss + 1e-3, "epoch {}: {:?}", w[1].epoch, w);
    }
}

#[test]
fn dialects_separate_in_embedding_space() {
    // dialect A draws from ids 4..10, dialect B from 10..16
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seqs = Vec::new();
    for i in 0..60u64 {
        let lo = if i % 2 == 0 { 4 } else { 10 };
        let mut ids = vec![BOS];
        let len = rng.gen_range(8..20);
        ids.extend((0..len).map(|_| rng.gen_range(lo..lo + 6)));
        ids.push(EOS);
        seqs.push(TokenSequence { function_id: i, ids });
    }
    let cfg = LmConfig {
        epochs: 5,
        batch_size: 8,
        seed: 2,
        ..LmConfig::new(16, 32)
    };
    let (params, _) = train(init_params(&cfg), &seqs, &cfg).unwrap();
    let emb: Vec<_> = seqs
        .iter()
        .map(|s| embed_function(&params, s.function_id, &s.ids).unwrap())
        .collect();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..emb.len() {
        for j in i + 1..emb.len() {
            let c = cosine(&emb[i].vector, &emb[j].vector);
            if i % 2 == j % 2 {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                nx += 1;
            }
        }
    }
    let (intra, inter) = (intra / ni as f64, inter / nx as f64);
    assert!(intra > inter, "intra {intra} inter {inter}");
}
