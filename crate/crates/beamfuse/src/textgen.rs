//! Seeded Markov-chain text sampler for desk-scale experiments.
//!
//! Sentences are drawn from a randomly wired first-order chain with a
//! small branching factor, so n-gram models can learn real structure and
//! held-out text stays predictable. Everything is a pure function of the
//! construction seed plus the sampling RNG.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYLLABLES: [&str; 24] = [
    "ba", "de", "ki", "lo", "mu", "na", "po", "ri", "sa", "tu", "ve", "zo", "cha", "fi", "gu",
    "he", "ja", "ke", "li", "mo", "nu", "pa", "re", "si",
];

const MIN_LEN: usize = 3;
const MAX_LEN: usize = 28;
const END_PROB: f64 = 0.09;

#[derive(Debug, Clone)]
pub struct TextModel {
    words: Vec<String>,
    starts: Vec<usize>,
    /// Per word: successor ids with cumulative sampling weights.
    successors: Vec<Vec<(usize, f64)>>,
}

impl TextModel {
    pub fn random(seed: u64, n_words: usize, branching: usize) -> Self {
        assert!(n_words >= 2, "need at least two words");
        assert!(n_words <= SYLLABLES.len() * SYLLABLES.len());
        let branching = branching.clamp(1, n_words - 1);
        let words: Vec<String> = (0..n_words)
            .map(|i| format!("{}{}", SYLLABLES[i % SYLLABLES.len()], SYLLABLES[i / SYLLABLES.len()]))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let successors = (0..n_words)
            .map(|w| {
                let mut picks = Vec::with_capacity(branching);
                while picks.len() < branching {
                    let next = rng.random_range(0..n_words);
                    if next != w && !picks.contains(&next) {
                        picks.push(next);
                    }
                }
                // Geometric preference for the first successor.
                let raw: Vec<f64> = (0..branching).map(|j| 0.5f64.powi(j as i32)).collect();
                let total: f64 = raw.iter().sum();
                let mut acc = 0.0;
                picks
                    .into_iter()
                    .zip(raw)
                    .map(|(next, w)| {
                        acc += w / total;
                        (next, acc)
                    })
                    .collect()
            })
            .collect();
        let start_count = 8.min(n_words);
        let mut starts = Vec::with_capacity(start_count);
        while starts.len() < start_count {
            let s = rng.random_range(0..n_words);
            if !starts.contains(&s) {
                starts.push(s);
            }
        }
        Self {
            words,
            starts,
            successors,
        }
    }

    pub fn sample_sentence<R: Rng>(&self, rng: &mut R) -> Vec<String> {
        let mut word = self.starts[rng.random_range(0..self.starts.len())];
        let mut out = vec![self.words[word].clone()];
        loop {
            if out.len() >= MAX_LEN {
                break;
            }
            if out.len() >= MIN_LEN && rng.random::<f64>() < END_PROB {
                break;
            }
            let u = rng.random::<f64>();
            let table = &self.successors[word];
            word = table
                .iter()
                .find(|(_, cum)| u <= *cum)
                .map(|(next, _)| *next)
                .unwrap_or(table[table.len() - 1].0);
            out.push(self.words[word].clone());
        }
        out
    }

    pub fn sample_corpus<R: Rng>(&self, sentences: usize, rng: &mut R) -> Vec<Vec<String>> {
        (0..sentences).map(|_| self.sample_sentence(rng)).collect()
    }
}
