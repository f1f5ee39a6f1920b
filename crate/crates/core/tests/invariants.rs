use std::collections::{BTreeMap, HashMap};

use mohe::metrics::{compute_f1, segment_head_torso_tail, Segment};
use mohe::reach::{build_eta, smooth_simplex, EtaConfig};
use mohe::tensor::{ParamStore, Tape, Tensor};
use mohe::text::{encode, tokenize, TokenMode, Vocab, PAD, UNK};
use mohe::trainer::make_batches;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn words() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.!-]{0,40}"
}

proptest! {
    #[test]
    fn word_tokens_are_lowercase_alphanumeric(s in words()) {
        for t in tokenize(&s, TokenMode::Word) {
            prop_assert!(!t.is_empty());
            prop_assert!(t.chars().all(|c| c.is_alphanumeric() && !c.is_uppercase()));
        }
    }

    #[test]
    fn bigram_count_is_words_minus_one(s in words()) {
        let w = tokenize(&s, TokenMode::Word).len();
        prop_assert_eq!(tokenize(&s, TokenMode::Bigram).len(), w.saturating_sub(1));
    }

    #[test]
    fn char_tokens_drop_only_whitespace(s in words()) {
        let chars = tokenize(&s, TokenMode::Char);
        let non_space: String = chars.iter().filter(|c| c.as_str() != " ").cloned().collect();
        let expected: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(non_space, expected);
        prop_assert!(!chars.windows(2).any(|w| w[0] == " " && w[1] == " "));
    }

    #[test]
    fn vocab_is_order_independent_and_counts_match(docs in prop::collection::vec(words(), 1..12), min_freq in 1usize..3) {
        let corpus: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d, TokenMode::Word)).collect();
        let mut reversed = corpus.clone();
        reversed.reverse();
        let v = Vocab::build(&corpus, min_freq, 1000).unwrap();
        prop_assert_eq!(&v, &Vocab::build(&reversed, min_freq, 1000).unwrap());
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in corpus.iter().flatten() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        let kept = counts.values().filter(|&&c| c >= min_freq).count();
        prop_assert_eq!(v.len(), kept + 2);
        for (tok, c) in counts {
            prop_assert_eq!(v.get(tok).is_some(), c >= min_freq);
        }
    }

    #[test]
    fn encode_pads_and_truncates(toks in prop::collection::vec("[a-c]{1,2}", 0..12), len in 1usize..10) {
        let toks: Vec<String> = toks;
        let v = Vocab::build([&toks[..toks.len() / 2]], 1, 100).unwrap();
        let e = encode(&toks, &v, len).unwrap();
        prop_assert_eq!(e.ids.len(), len);
        prop_assert_eq!(e.true_length, toks.len().min(len));
        prop_assert!(e.ids[e.true_length..].iter().all(|&i| i == PAD));
        for (i, t) in toks.iter().take(len).enumerate() {
            prop_assert_eq!(e.ids[i], v.get(t).unwrap_or(UNK));
        }
    }

    #[test]
    fn segments_partition_in_rank_order(counts in prop::collection::vec(0u64..500, 1..30)) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let h: BTreeMap<String, u64> = counts.iter().enumerate().map(|(i, &c)| (format!("g{i:02}"), c)).collect();
        let a = segment_head_torso_tail(&h).unwrap();
        prop_assert_eq!(a.segments.len(), h.len());
        prop_assert!(!a.members(Segment::Head).is_empty());
        // every head genre outranks every torso genre, which outranks every tail genre
        let min_of = |s| a.members(s).iter().map(|g| h[*g]).min();
        let max_of = |s| a.members(s).iter().map(|g| h[*g]).max();
        if let (Some(lo), Some(hi)) = (min_of(Segment::Head), max_of(Segment::Torso)) {
            prop_assert!(lo >= hi);
        }
        if let (Some(lo), Some(hi)) = (min_of(Segment::Torso), max_of(Segment::Tail)) {
            prop_assert!(lo >= hi);
        }
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::vector(z.clone())).unwrap();
        let p = tape.softmax(x).unwrap();
        let v = tape.value(p).data();
        prop_assert!(v.iter().all(|&q| (0.0..=1.0).contains(&q)));
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let big = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let top = z.iter().position(|&q| q == big).unwrap();
        prop_assert!(v.iter().all(|&q| q <= v[top]));
    }

    #[test]
    fn eta_is_on_the_simplex(siblings in 1usize..8, k in 0usize..8, purchased: bool, seed: u64) {
        let k = k % siblings;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta = build_eta(k, siblings, purchased, &EtaConfig::default(), &mut rng);
        prop_assert_eq!(eta.len(), siblings);
        prop_assert!(eta.iter().all(|&e| e >= 0.0));
        prop_assert!((eta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        if siblings > 1 {
            prop_assert_eq!(eta[k], if purchased { 0.95 } else { 0.8 });
        }
        let s = smooth_simplex(&eta);
        prop_assert!(s.iter().all(|&e| e > 0.0 && e < 1.0) || siblings == 1);
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_ignores_label_names(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..60), seed: u64) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let mut perm: Vec<usize> = (0..5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let rp: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
        let rg: Vec<usize> = gold.iter().map(|&c| perm[c]).collect();
        let a = compute_f1(&pred, &gold, 5).unwrap();
        let b = compute_f1(&rp, &rg, 5).unwrap();
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        prop_assert!((a.micro_f1 - b.micro_f1).abs() < 1e-12);
    }

    #[test]
    fn batches_cover_every_index_once(n in 0usize..200, bs in 1usize..40, seed: u64) {
        let b = make_batches(n, bs, seed, true);
        let mut all: Vec<usize> = b.iter().flatten().copied().collect();
        prop_assert!(b.iter().all(|x| !x.is_empty() && x.len() <= bs));
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn batches_follow_the_documented_permutation() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut order: Vec<usize> = (0..10).collect();
    for i in (1..10).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let b = make_batches(10, 4, 42, true);
    assert_eq!(b.concat(), order);
    assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
    assert_eq!(make_batches(5, 2, 42, false), vec![vec![0, 1], vec![2, 3], vec![4]]);
}
