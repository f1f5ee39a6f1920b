//! Seeded synthetic catalogs with keyword-planted titles.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ItemRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub items: usize,
    pub classes: usize,
    pub keywords_per_class: usize,
    pub filler_words: usize,
    /// Filler words per title, inclusive range.
    pub min_filler: usize,
    pub max_filler: usize,
    /// Chance that a title carries one of its class keywords at all.
    pub keyword_rate: f64,
    /// Fraction of labels replaced by a different class chosen uniformly.
    pub label_noise: f64,
    /// Gives every item a shop id that identifies its true class.
    pub informative_shop: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            items: 2000,
            classes: 10,
            keywords_per_class: 6,
            filler_words: 300,
            min_filler: 3,
            max_filler: 7,
            keyword_rate: 1.0,
            label_noise: 0.0,
            informative_shop: false,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub items: Vec<ItemRecord>,
    /// Class before noise, per item.
    pub true_class: Vec<usize>,
    pub noisy: Vec<bool>,
}

/// Two-level path for class `c`: five classes per department.
pub fn class_path(c: usize) -> Vec<String> {
    vec![format!("dept{}", c / 5), format!("genre{c:02}")]
}

fn word<R: Rng>(rng: &mut R) -> String {
    const CONS: &[u8] = b"bcdfghjklmnprstvwz";
    const VOW: &[u8] = b"aeiou";
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONS[rng.random_range(0..CONS.len())] as char);
        w.push(VOW[rng.random_range(0..VOW.len())] as char);
    }
    w
}

fn distinct_words<R: Rng>(rng: &mut R, n: usize, taken: &mut std::collections::HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = word(rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut taken = std::collections::HashSet::new();
    let keywords: Vec<Vec<String>> =
        (0..cfg.classes).map(|_| distinct_words(&mut rng, cfg.keywords_per_class, &mut taken)).collect();
    let filler = distinct_words(&mut rng, cfg.filler_words, &mut taken);

    let mut items = Vec::with_capacity(cfg.items);
    let mut true_class = Vec::with_capacity(cfg.items);
    let mut noisy = Vec::with_capacity(cfg.items);
    for i in 0..cfg.items {
        let c = i % cfg.classes;
        let n = rng.random_range(cfg.min_filler..=cfg.max_filler);
        let mut words: Vec<&str> = (0..n).map(|_| filler[rng.random_range(0..filler.len())].as_str()).collect();
        if rng.random_bool(cfg.keyword_rate) {
            let kw = &keywords[c][rng.random_range(0..cfg.keywords_per_class)];
            let at = rng.random_range(0..=words.len());
            words.insert(at, kw);
        }
        let title = words.join(" ");
        let flip = cfg.classes > 1 && rng.random_bool(cfg.label_noise);
        let label = if flip {
            let other = rng.random_range(0..cfg.classes - 1);
            if other >= c { other + 1 } else { other }
        } else {
            c
        };
        let mut item = ItemRecord::new(format!("item{i:05}"), title, class_path(label));
        if cfg.informative_shop {
            item.shop_id = Some(format!("shop{c}"));
        }
        items.push(item);
        true_class.push(c);
        noisy.push(flip);
    }
    // interleaved classes would make every split perfectly balanced; shuffle
    let mut order: Vec<usize> = (0..cfg.items).collect();
    order.shuffle(&mut rng);
    SynthData {
        items: order.iter().map(|&i| items[i].clone()).collect(),
        true_class: order.iter().map(|&i| true_class[i]).collect(),
        noisy: order.iter().map(|&i| noisy[i]).collect(),
    }
}

/// First `train_fraction` of the items for training, the rest held out.
/// Held-out items get their true labels back.
pub fn split(data: &SynthData, train_fraction: f64) -> (Vec<ItemRecord>, Vec<ItemRecord>) {
    let cut = (data.items.len() as f64 * train_fraction).round() as usize;
    let train = data.items[..cut].to_vec();
    let test = data.items[cut..]
        .iter()
        .zip(&data.true_class[cut..])
        .map(|(it, &c)| ItemRecord { genre_path: class_path(c), ..it.clone() })
        .collect();
    (train, test)
}
