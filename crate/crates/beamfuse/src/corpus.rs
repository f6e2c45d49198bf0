//! Corpus reversal and partial-sentence generation for backward-LM training.
//!
//! A partial corpus contains, for every source sentence `w_1..w_n`, the
//! reversed prefixes `w_t..w_1` for `t = n` down to `1` (one new sequence
//! per source token, the longest being the full reversed sentence).

use serde::Serialize;

/// Reverses each sentence in place-order; sentence count is unchanged.
pub fn reverse_corpus<T: Clone>(sentences: &[Vec<T>]) -> Vec<Vec<T>> {
    sentences.iter().map(|s| reversed(s)).collect()
}

pub fn reversed<T: Clone>(sentence: &[T]) -> Vec<T> {
    sentence.iter().rev().cloned().collect()
}

/// Streams the reversed prefixes of one sentence, longest first.
pub fn partial_sequences<T: Clone>(sentence: &[T]) -> impl Iterator<Item = Vec<T>> + '_ {
    (1..=sentence.len())
        .rev()
        .map(move |t| sentence[..t].iter().rev().cloned().collect())
}

/// Emits the full partial corpus: input order, then descending prefix length.
pub fn make_partial_corpus<T: Clone>(sentences: &[Vec<T>]) -> Vec<Vec<T>> {
    sentences
        .iter()
        .flat_map(|s| partial_sequences(s))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub sentence_count: usize,
    pub token_count: usize,
}

impl CorpusStats {
    /// Tokens per sentence; 0 for an empty corpus.
    pub fn average_length(&self) -> f64 {
        if self.sentence_count == 0 {
            0.0
        } else {
            self.token_count as f64 / self.sentence_count as f64
        }
    }
}

pub fn corpus_stats<T, S, I>(sentences: I) -> CorpusStats
where
    S: AsRef<[T]>,
    I: IntoIterator<Item = S>,
{
    let mut stats = CorpusStats {
        sentence_count: 0,
        token_count: 0,
    };
    for s in sentences {
        stats.sentence_count += 1;
        stats.token_count += s.as_ref().len();
    }
    stats
}
