//! Deterministic text sources built from character-level Markov chains.
//!
//! Every style mixes a shared base chain with a style-specific chain:
//! `P = (1 - divergence) * base + divergence * own`. Two styles with
//! different seeds are therefore separable by their character statistics,
//! and `divergence` dials how easily.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Generator, GeneratorError, GeneratorReply, GeneratorRequest};
use crate::exec::derive_seed;
use crate::features::hash64;

const LETTERS: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's',
    't', 'u', 'v', 'w', 'x', 'y', 'z',
];
const BASE_SEED: u64 = 0x5eed_ba5e;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovStyle {
    /// Cumulative distribution of the first letter of a word.
    initial: Vec<f64>,
    /// Cumulative distribution of the next letter given the previous one.
    transition: Vec<Vec<f64>>,
    pub min_word_len: usize,
    pub max_word_len: usize,
    pub min_sentence_words: usize,
    pub max_sentence_words: usize,
    pub comma_rate: f64,
}

fn random_row(rng: &mut ChaCha8Rng) -> Vec<f64> {
    // cubed uniforms give a peaked, chain-like distribution
    (0..LETTERS.len())
        .map(|_| rng.random::<f64>().powi(3) + 1e-3)
        .collect()
}

fn normalise(row: &[f64]) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    row.iter().map(|w| w / s).collect()
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

impl MarkovStyle {
    /// Style `seed` at the given `divergence` in `[0, 1]` from the shared
    /// base chain.
    pub fn new(seed: u64, divergence: f64) -> Self {
        let mut base_rng = ChaCha8Rng::seed_from_u64(BASE_SEED);
        let mut own_rng = ChaCha8Rng::seed_from_u64(seed);
        let d = divergence.clamp(0.0, 1.0);
        let mix = |base: &mut ChaCha8Rng, own: &mut ChaCha8Rng| {
            let b = normalise(&random_row(base));
            let o = normalise(&random_row(own));
            cumulative(
                &b.iter()
                    .zip(&o)
                    .map(|(x, y)| (1.0 - d) * x + d * y)
                    .collect::<Vec<_>>(),
            )
        };
        let initial = mix(&mut base_rng, &mut own_rng);
        let transition = (0..LETTERS.len())
            .map(|_| mix(&mut base_rng, &mut own_rng))
            .collect();
        Self {
            initial,
            transition,
            min_word_len: 2,
            max_word_len: 8,
            min_sentence_words: 6,
            max_sentence_words: 14,
            comma_rate: 0.08,
        }
    }

    fn word(&self, rng: &mut impl Rng) -> String {
        let len = rng.random_range(self.min_word_len..=self.max_word_len);
        let mut k = draw(&self.initial, rng);
        let mut w = String::with_capacity(len);
        w.push(LETTERS[k]);
        for _ in 1..len {
            k = draw(&self.transition[k], rng);
            w.push(LETTERS[k]);
        }
        w
    }

    /// `words` words of running text: capitalised sentences ending in `.`,
    /// with occasional commas.
    pub fn generate(&self, words: usize, rng: &mut impl Rng) -> String {
        let mut out = String::new();
        let mut left_in_sentence = 0;
        for i in 0..words {
            let starting = left_in_sentence == 0;
            if starting {
                left_in_sentence =
                    rng.random_range(self.min_sentence_words..=self.max_sentence_words);
            }
            let mut w = self.word(rng);
            if starting {
                let mut cs = w.chars();
                w = cs
                    .next()
                    .map(|c| c.to_uppercase().chain(cs).collect())
                    .unwrap_or_default();
            }
            left_in_sentence -= 1;
            if left_in_sentence == 0 || i + 1 == words {
                w.push('.');
                left_in_sentence = 0;
            } else if rng.random::<f64>() < self.comma_rate {
                w.push(',');
            }
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&w);
        }
        out
    }
}

/// Offline generator: answers every request with Markov text of
/// `max_new_tokens` words. Output depends only on the request, so runs are
/// reproducible in any order.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    id: String,
    style: MarkovStyle,
}

/// Divergence used by the default mock styles.
pub const DEFAULT_DIVERGENCE: f64 = 0.5;
/// Seed of the default human-like source style.
pub const HUMAN_STYLE_SEED: u64 = 7;

impl MockGenerator {
    pub fn new(id: impl Into<String>, style: MarkovStyle) -> Self {
        Self {
            id: id.into(),
            style,
        }
    }

    /// Mock number `k`, with a style seeded from its id.
    pub fn numbered(k: usize) -> Self {
        let id = format!("mock-{k}");
        let style = MarkovStyle::new(hash64(&id), DEFAULT_DIVERGENCE);
        Self::new(id, style)
    }

    pub fn style(&self) -> &MarkovStyle {
        &self.style
    }
}

impl Generator for MockGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorReply, GeneratorError> {
        let seed = derive_seed(req.seed, hash64(&req.prompt), hash64(&req.prefix));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(GeneratorReply {
            completion: self.style.generate(req.max_new_tokens.max(1), &mut rng),
            finish_reason: "length".into(),
        })
    }
}

/// Human-style source documents for offline corpora.
pub fn mock_sources(
    count: usize,
    min_words: usize,
    max_words: usize,
    style: &MarkovStyle,
    seed: u64,
) -> Vec<String> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, 0x50));
            let n = rng.random_range(min_words..=max_words);
            style.generate(n, &mut rng)
        })
        .collect()
}
