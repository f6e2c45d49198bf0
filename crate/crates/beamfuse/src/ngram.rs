//! Interpolated n-gram language models usable in forward or backward
//! orientation.
//!
//! The conditional is a Jelinek-Mercer mixture of maximum-likelihood
//! estimates from order `N` down to unigram plus a uniform `1/(V+1)`
//! floor. Per-order weights are fixed at training time; whenever a
//! context is unseen at some order, that order's weight falls through to
//! the floor, so probabilities over the prediction support sum to one for
//! every context, seen or not.
//!
//! Orientation decides which special symbol starts a sequence and which
//! one is predicted as the terminal: forward sequences run
//! `sos .. body .. eos`, backward sequences (already-reversed bodies)
//! run `eos .. body .. sos`. The start symbol of the active orientation
//! is never scored; its own log-probability is the constant 0.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary, EOS_ID, SOS_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Forward,
    Backward,
}

impl Orientation {
    /// Symbol that opens every sequence in this orientation.
    pub fn start_id(self) -> TokenId {
        match self {
            Orientation::Forward => SOS_ID,
            Orientation::Backward => EOS_ID,
        }
    }

    /// Symbol predicted at the end of every sequence in this orientation.
    pub fn terminal_id(self) -> TokenId {
        match self {
            Orientation::Forward => EOS_ID,
            Orientation::Backward => SOS_ID,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Orientation::Forward => write!(f, "fwd"),
            Orientation::Backward => write!(f, "bwd"),
        }
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fwd" | "forward" => Ok(Orientation::Forward),
            "bwd" | "backward" => Ok(Orientation::Backward),
            other => Err(Error::Config(format!("unknown orientation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    words: HashMap<TokenId, u64>,
}

#[derive(Debug, Clone)]
pub struct NGramLm {
    order: usize,
    lambdas: Vec<f64>,
    floor_weight: f64,
    orientation: Orientation,
    vocab: Arc<Vocabulary>,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

/// A scoring context resolved once so that many tokens can be scored
/// against it without re-hashing the context at every order.
pub struct ContextState<'a> {
    levels: Vec<Option<&'a ContextCounts>>,
    absent_weight: f64,
}

impl NGramLm {
    /// Trains a model. Bodies must be raw token sequences without
    /// start/terminal symbols; backward training expects already-reversed
    /// bodies.
    pub fn train<S, I>(
        corpus: I,
        order: usize,
        lambdas: &[f64],
        orientation: Orientation,
        vocab: Arc<Vocabulary>,
    ) -> Result<Self>
    where
        S: AsRef<[TokenId]>,
        I: IntoIterator<Item = S>,
    {
        let mut lm = Self::empty(order, lambdas, orientation, vocab)?;
        let mut sentences = 0usize;
        for body in corpus {
            lm.observe_sequence(body.as_ref());
            sentences += 1;
        }
        if sentences == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok(lm)
    }

    /// Untrained model: every conditional is the uniform floor `1/(V+1)`.
    pub fn uniform(vocab: Arc<Vocabulary>, orientation: Orientation) -> Self {
        Self::empty(1, &[0.0], orientation, vocab).expect("uniform parameters are valid")
    }

    fn empty(
        order: usize,
        lambdas: &[f64],
        orientation: Orientation,
        vocab: Arc<Vocabulary>,
    ) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidOrder(order));
        }
        if lambdas.len() != order {
            return Err(Error::InvalidLambdas(format!(
                "expected {} weights, got {}",
                order,
                lambdas.len()
            )));
        }
        let sum: f64 = lambdas.iter().sum();
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0 || *l >= 1.0) || sum >= 1.0 {
            return Err(Error::InvalidLambdas(
                "each weight must lie in [0, 1) and their sum must stay below 1 \
                 so the uniform floor keeps positive mass"
                    .into(),
            ));
        }
        Ok(Self {
            order,
            lambdas: lambdas.to_vec(),
            floor_weight: 1.0 - sum,
            orientation,
            vocab,
            counts: HashMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn start_id(&self) -> TokenId {
        self.orientation.start_id()
    }

    pub fn terminal_id(&self) -> TokenId {
        self.orientation.terminal_id()
    }

    /// Ascending ids of every token this model can predict: ordinary
    /// tokens plus the orientation's terminal symbol.
    pub fn prediction_support(&self) -> impl Iterator<Item = TokenId> {
        let total = self.vocab.total() as TokenId;
        let start = self.start_id();
        (0..total).filter(move |&id| id != start)
    }

    fn uniform_floor(&self) -> f64 {
        1.0 / (self.vocab.size() as f64 + 1.0)
    }

    /// Records one prediction event. `history` is the available context
    /// (longer histories are truncated to the model order).
    pub(crate) fn observe(&mut self, history: &[TokenId], word: TokenId) {
        let h = &history[history.len().saturating_sub(self.order - 1)..];
        for l in 0..=h.len() {
            let ctx = &h[h.len() - l..];
            if let Some(cc) = self.counts.get_mut(ctx) {
                cc.total += 1;
                *cc.words.entry(word).or_insert(0) += 1;
            } else {
                let cc = ContextCounts {
                    total: 1,
                    words: HashMap::from([(word, 1)]),
                };
                self.counts.insert(ctx.to_vec(), cc);
            }
        }
    }

    fn observe_sequence(&mut self, body: &[TokenId]) {
        let mut wrapped = Vec::with_capacity(body.len() + 2);
        wrapped.push(self.start_id());
        wrapped.extend_from_slice(body);
        wrapped.push(self.terminal_id());
        for i in 1..wrapped.len() {
            let begin = i.saturating_sub(self.order - 1);
            self.observe(&wrapped[begin..i], wrapped[i]);
        }
    }

    /// Resolves a context once; scores depend only on its last `N - 1` tokens.
    pub fn resolve_context(&self, context: &[TokenId]) -> ContextState<'_> {
        let h = &context[context.len().saturating_sub(self.order - 1)..];
        let mut levels = Vec::with_capacity(self.order);
        let mut absent = self.floor_weight;
        for l in 0..self.order {
            let node = if l <= h.len() {
                self.counts.get(&h[h.len() - l..])
            } else {
                None
            };
            if node.is_none() {
                absent += self.lambdas[l];
            }
            levels.push(node);
        }
        ContextState {
            levels,
            absent_weight: absent,
        }
    }

    fn check_support(&self, token: TokenId) -> Result<()> {
        if token == self.start_id() {
            return Err(Error::StartSymbolScored(token));
        }
        if token as usize >= self.vocab.total() {
            return Err(Error::TokenNotInSupport(token));
        }
        Ok(())
    }

    /// Natural-log conditional probability within a resolved context.
    pub fn logprob_in(&self, state: &ContextState<'_>, token: TokenId) -> Result<f64> {
        self.check_support(token)?;
        let mut p = state.absent_weight * self.uniform_floor();
        for (l, node) in state.levels.iter().enumerate() {
            if let Some(cc) = node {
                let c = cc.words.get(&token).copied().unwrap_or(0);
                p += self.lambdas[l] * (c as f64 / cc.total as f64);
            }
        }
        Ok(p.ln())
    }

    /// Natural-log conditional probability of `token` after `context`.
    pub fn logprob(&self, token: TokenId, context: &[TokenId]) -> Result<f64> {
        let state = self.resolve_context(context);
        self.logprob_in(&state, token)
    }

    /// Chain-rule log probability of a whole body including the terminal
    /// prediction. The start symbol contributes log 1 = 0.
    pub fn sequence_logprob(&self, body: &[TokenId]) -> Result<f64> {
        let mut wrapped = Vec::with_capacity(body.len() + 2);
        wrapped.push(self.start_id());
        wrapped.extend_from_slice(body);
        wrapped.push(self.terminal_id());
        let mut total = 0.0;
        for i in 1..wrapped.len() {
            total += self.logprob(wrapped[i], &wrapped[..i])?;
        }
        Ok(total)
    }

    /// `exp(-total_logprob / predictions)` where each sentence contributes
    /// `body length + 1` predictions (terminal included, start excluded).
    pub fn perplexity<S, I>(&self, dataset: I) -> Result<f64>
    where
        S: AsRef<[TokenId]>,
        I: IntoIterator<Item = S>,
    {
        let mut total = 0.0;
        let mut predictions = 0usize;
        for body in dataset {
            let body = body.as_ref();
            total += self.sequence_logprob(body)?;
            predictions += body.len() + 1;
        }
        if predictions == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok((-total / predictions as f64).exp())
    }

    /// Plain-text serialization; loading reproduces bit-identical scores.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        out.push_str("beamfuse-lm v1\n");
        out.push_str(&format!("orientation {}\n", self.orientation));
        out.push_str(&format!("order {}\n", self.order));
        out.push_str("lambdas");
        for l in &self.lambdas {
            out.push_str(&format!(" {l}"));
        }
        out.push('\n');
        out.push_str(&format!("vocab-hash {}\n", self.vocab.hash()));
        out.push_str(&format!("vocab-size {}\n", self.vocab.total()));
        for id in 0..self.vocab.total() {
            out.push_str(self.vocab.token(id as TokenId));
            out.push('\n');
        }
        let mut records: Vec<(&Vec<TokenId>, TokenId, u64)> = Vec::new();
        for (ctx, cc) in &self.counts {
            for (&word, &count) in &cc.words {
                records.push((ctx, word, count));
            }
        }
        records.sort_unstable_by(|a, b| {
            (a.0.len(), a.0, a.1).cmp(&(b.0.len(), b.0, b.1))
        });
        out.push_str(&format!("ngram-records {}\n", records.len()));
        for (ctx, word, count) in records {
            out.push_str(&format!("{}", ctx.len()));
            for id in ctx {
                out.push_str(&format!(" {id}"));
            }
            out.push_str(&format!(" {word} {count}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let name = path.display().to_string();
        let fail = |line: usize, msg: String| Error::Parse {
            path: name.clone(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| fail(0, format!("unexpected end of file, expected {what}")))
        };

        let (n, version) = next("version header")?;
        if version != "beamfuse-lm v1" {
            return Err(fail(n + 1, format!("unsupported header {version:?}")));
        }
        let (n, line) = next("orientation")?;
        let orientation: Orientation = field(line, "orientation")
            .map_err(|m| fail(n + 1, m))?
            .parse()
            .map_err(|e: Error| fail(n + 1, e.to_string()))?;
        let (n, line) = next("order")?;
        let order: usize = parse_field(line, "order").map_err(|m| fail(n + 1, m))?;
        let (n, line) = next("lambdas")?;
        let lambdas: Vec<f64> = field(line, "lambdas")
            .map_err(|m| fail(n + 1, m))?
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| fail(n + 1, e.to_string())))
            .collect::<Result<_>>()?;
        let (n, line) = next("vocab-hash")?;
        let vocab_hash = field(line, "vocab-hash").map_err(|m| fail(n + 1, m))?.to_string();
        let (n, line) = next("vocab-size")?;
        let vocab_size: usize = parse_field(line, "vocab-size").map_err(|m| fail(n + 1, m))?;

        let mut tokens = Vec::with_capacity(vocab_size);
        for _ in 0..vocab_size {
            let (_, line) = next("vocabulary token")?;
            tokens.push(line.to_string());
        }
        let vocab = Vocabulary::from_token_list(tokens).map_err(|e| fail(n + 1, e.to_string()))?;
        if vocab.hash() != vocab_hash {
            return Err(fail(
                n + 1,
                format!("vocab hash {} does not match header {}", vocab.hash(), vocab_hash),
            ));
        }

        let mut lm = Self::empty(order, &lambdas, orientation, Arc::new(vocab))
            .map_err(|e| fail(n + 1, e.to_string()))?;

        let (n, line) = next("ngram-records")?;
        let record_count: usize = parse_field(line, "ngram-records").map_err(|m| fail(n + 1, m))?;
        for _ in 0..record_count {
            let (ln, line) = next("ngram record")?;
            let mut fields = line.split_whitespace();
            let ctx_len: usize = fields
                .next()
                .ok_or_else(|| fail(ln + 1, "empty record".into()))?
                .parse()
                .map_err(|e: std::num::ParseIntError| fail(ln + 1, e.to_string()))?;
            let mut ctx = Vec::with_capacity(ctx_len);
            for _ in 0..ctx_len {
                let id: TokenId = fields
                    .next()
                    .ok_or_else(|| fail(ln + 1, "truncated context".into()))?
                    .parse()
                    .map_err(|e: std::num::ParseIntError| fail(ln + 1, e.to_string()))?;
                ctx.push(id);
            }
            let word: TokenId = fields
                .next()
                .ok_or_else(|| fail(ln + 1, "missing word id".into()))?
                .parse()
                .map_err(|e: std::num::ParseIntError| fail(ln + 1, e.to_string()))?;
            let count: u64 = fields
                .next()
                .ok_or_else(|| fail(ln + 1, "missing count".into()))?
                .parse()
                .map_err(|e: std::num::ParseIntError| fail(ln + 1, e.to_string()))?;
            if fields.next().is_some() {
                return Err(fail(ln + 1, "trailing fields in record".into()));
            }
            let cc = lm.counts.entry(ctx).or_default();
            cc.total += count;
            *cc.words.entry(word).or_insert(0) += count;
        }
        Ok(lm)
    }
}

fn field<'a>(line: &'a str, key: &str) -> std::result::Result<&'a str, String> {
    line.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| format!("expected {key:?} line, got {line:?}"))
}

fn parse_field<T: FromStr>(line: &str, key: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    field(line, key)?.parse::<T>().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::UNK_ID;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_vocab() -> Arc<Vocabulary> {
        Arc::new(Vocabulary::build(["a a a"], 5).unwrap())
    }

    fn abc_vocab() -> Arc<Vocabulary> {
        Arc::new(Vocabulary::build(["a b c a b a"], 10).unwrap())
    }

    #[test]
    fn hand_computed_unigram_matches() {
        let vocab = toy_vocab();
        let a = vocab.id_of("a").unwrap();
        let body = vec![a, a, a];
        let lm = NGramLm::train([&body], 1, &[0.5], Orientation::Forward, vocab.clone()).unwrap();
        // V = 2 (a + unk), floor 1/3; ML over {a,a,a,eos}: P(a)=3/4, P(eos)=1/4.
        let expect_a: f64 = 0.5 * 0.75 + 0.5 * (1.0 / 3.0);
        let expect_eos: f64 = 0.5 * 0.25 + 0.5 * (1.0 / 3.0);
        assert!((lm.logprob(a, &[]).unwrap() - expect_a.ln()).abs() < 1e-15);
        assert!((lm.logprob(EOS_ID, &[]).unwrap() - expect_eos.ln()).abs() < 1e-15);
        // Context is ignored at order 1 (Markov truncation).
        assert_eq!(lm.logprob(a, &[a]).unwrap(), lm.logprob(a, &[]).unwrap());
    }

    #[test]
    fn uniform_limit_floors_everything() {
        let vocab = abc_vocab();
        let lm = NGramLm::uniform(vocab.clone(), Orientation::Forward);
        let floor = (1.0 / (vocab.size() as f64 + 1.0)).ln();
        for id in lm.prediction_support() {
            assert_eq!(lm.logprob(id, &[]).unwrap(), floor);
            assert_eq!(lm.logprob(id, &[3, 4, 5]).unwrap(), floor);
        }
        // Uniform perplexity is V + 1.
        let ppl = lm.perplexity([[3u32, 4].as_slice(), [5u32].as_slice()]).unwrap();
        assert!((ppl - (vocab.size() as f64 + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn normalization_holds_for_random_contexts() {
        let vocab = abc_vocab();
        let corpus: Vec<Vec<TokenId>> = ["a b c", "a b a", "c c b"]
            .iter()
            .map(|s| vocab.encode_line(s))
            .collect();
        for orientation in [Orientation::Forward, Orientation::Backward] {
            let lm = NGramLm::train(&corpus, 3, &[0.4, 0.3, 0.2], orientation, vocab.clone())
                .unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..100 {
                let len = rng.random_range(0..5usize);
                let ctx: Vec<TokenId> = (0..len)
                    .map(|_| rng.random_range(0..vocab.total() as TokenId))
                    .collect();
                let state = lm.resolve_context(&ctx);
                let sum: f64 = lm
                    .prediction_support()
                    .map(|id| lm.logprob_in(&state, id).unwrap().exp())
                    .sum();
                assert!((sum - 1.0).abs() < 1e-9, "sum {sum} for ctx {ctx:?}");
            }
        }
    }

    #[test]
    fn markov_truncation_ignores_older_history() {
        let vocab = abc_vocab();
        let corpus: Vec<Vec<TokenId>> = ["a b c a", "b c a b"]
            .iter()
            .map(|s| vocab.encode_line(s))
            .collect();
        let lm = NGramLm::train(&corpus, 2, &[0.6, 0.25], Orientation::Forward, vocab.clone()).unwrap();
        let a = vocab.id_of("a").unwrap();
        let b = vocab.id_of("b").unwrap();
        let c = vocab.id_of("c").unwrap();
        let long = lm.logprob(a, &[c, b, c, b]).unwrap();
        let short = lm.logprob(a, &[b]).unwrap();
        assert_eq!(long, short);
    }

    #[test]
    fn observing_an_ngram_never_decreases_its_probability() {
        let vocab = abc_vocab();
        let corpus: Vec<Vec<TokenId>> = ["a b c", "b c a"]
            .iter()
            .map(|s| vocab.encode_line(s))
            .collect();
        let lm = NGramLm::train(&corpus, 3, &[0.4, 0.3, 0.2], Orientation::Forward, vocab.clone())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let len = rng.random_range(0..3usize);
            let ctx: Vec<TokenId> = (0..len)
                .map(|_| rng.random_range(UNK_ID..vocab.total() as TokenId))
                .collect();
            let word = rng.random_range(UNK_ID..vocab.total() as TokenId);
            let before = lm.logprob(word, &ctx).unwrap();
            let mut grown = lm.clone();
            grown.observe(&ctx, word);
            let after = grown.logprob(word, &ctx).unwrap();
            assert!(after >= before - 1e-12, "{before} -> {after}");
        }
    }

    #[test]
    fn sequence_logprob_matches_term_by_term_summation() {
        let vocab = abc_vocab();
        let corpus: Vec<Vec<TokenId>> = ["a b c a b", "c a b"]
            .iter()
            .map(|s| vocab.encode_line(s))
            .collect();
        let lm = NGramLm::train(&corpus, 3, &[0.5, 0.2, 0.1], Orientation::Forward, vocab.clone())
            .unwrap();
        let body = vocab.encode_line("b c a a");
        let mut expected = 0.0;
        let mut ctx = vec![SOS_ID];
        for &w in &body {
            expected += lm.logprob(w, &ctx).unwrap();
            ctx.push(w);
        }
        expected += lm.logprob(EOS_ID, &ctx).unwrap();
        assert!((lm.sequence_logprob(&body).unwrap() - expected).abs() < 1e-12);
        // Degenerate body: only the terminal prediction remains.
        assert_eq!(
            lm.sequence_logprob(&[]).unwrap(),
            lm.logprob(EOS_ID, &[SOS_ID]).unwrap()
        );
    }

    #[test]
    fn perplexity_of_single_sentence_matches_definition() {
        let vocab = abc_vocab();
        let corpus = vec![vocab.encode_line("a b c")];
        let lm = NGramLm::train(&corpus, 2, &[0.7, 0.2], Orientation::Forward, vocab.clone()).unwrap();
        let body = vocab.encode_line("a b");
        let expected = (-lm.sequence_logprob(&body).unwrap() / 3.0).exp();
        let got = lm.perplexity([&body]).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn backward_orientation_swaps_the_special_roles() {
        let vocab = abc_vocab();
        let reversed = vec![vocab.encode_line("c b a")];
        let lm = NGramLm::train(&reversed, 2, &[0.5, 0.3], Orientation::Backward, vocab.clone()).unwrap();
        assert_eq!(lm.start_id(), EOS_ID);
        assert_eq!(lm.terminal_id(), SOS_ID);
        assert!(lm.logprob(SOS_ID, &[EOS_ID]).unwrap().is_finite());
        assert!(matches!(
            lm.logprob(EOS_ID, &[]),
            Err(Error::StartSymbolScored(EOS_ID))
        ));
    }

    #[test]
    fn scoring_the_start_symbol_is_rejected() {
        let vocab = abc_vocab();
        let lm = NGramLm::uniform(vocab, Orientation::Forward);
        assert!(matches!(
            lm.logprob(SOS_ID, &[]),
            Err(Error::StartSymbolScored(SOS_ID))
        ));
        assert!(matches!(lm.logprob(999, &[]), Err(Error::TokenNotInSupport(999))));
    }

    #[test]
    fn training_validates_inputs() {
        let vocab = abc_vocab();
        let empty: Vec<Vec<TokenId>> = vec![];
        assert!(matches!(
            NGramLm::train(&empty, 2, &[0.5, 0.2], Orientation::Forward, vocab.clone()),
            Err(Error::EmptyCorpus)
        ));
        let corpus = vec![vocab.encode_line("a b")];
        assert!(matches!(
            NGramLm::train(&corpus, 0, &[], Orientation::Forward, vocab.clone()),
            Err(Error::InvalidOrder(0))
        ));
        assert!(matches!(
            NGramLm::train(&corpus, 2, &[0.8, 0.4], Orientation::Forward, vocab.clone()),
            Err(Error::InvalidLambdas(_))
        ));
        assert!(matches!(
            NGramLm::train(&corpus, 1, &[0.5, 0.1], Orientation::Forward, vocab.clone()),
            Err(Error::InvalidLambdas(_))
        ));
        let lm = NGramLm::uniform(vocab, Orientation::Forward);
        assert!(matches!(
            lm.perplexity(Vec::<Vec<TokenId>>::new()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn save_load_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lm");
        let vocab = abc_vocab();
        let corpus: Vec<Vec<TokenId>> = ["a b c a", "c c b", "a b"]
            .iter()
            .map(|s| vocab.encode_line(s))
            .collect();
        let lm = NGramLm::train(&corpus, 3, &[0.5, 0.25, 0.125], Orientation::Forward, vocab.clone())
            .unwrap();
        lm.save(&path).unwrap();
        let loaded = NGramLm::load(&path).unwrap();
        assert_eq!(loaded.order(), lm.order());
        assert_eq!(loaded.vocab().hash(), lm.vocab().hash());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let len = rng.random_range(0..4usize);
            let ctx: Vec<TokenId> = (0..len)
                .map(|_| rng.random_range(0..vocab.total() as TokenId))
                .collect();
            for id in lm.prediction_support() {
                let a = lm.logprob(id, &ctx).unwrap();
                let b = loaded.logprob(id, &ctx).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn malformed_file_reports_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.lm");
        std::fs::write(&path, "beamfuse-lm v1\norientation fwd\norder nope\n").unwrap();
        match NGramLm::load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
