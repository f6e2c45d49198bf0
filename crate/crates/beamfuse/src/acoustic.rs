//! Per-step posterior grids standing in for an acoustic decoder.
//!
//! A grid holds `T_max` rows of natural-log probabilities over the
//! prediction support (ordinary tokens plus the end symbol); column `j`
//! scores token id `j + 1`, so the start symbol has no column. Rows are
//! history-independent: the score of a token at step `t` does not depend
//! on the hypothesis prefix.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary, EOS_ID, UNK_ID};

/// Extra rows appended after the reference so hypotheses can run long.
pub const DEFAULT_SLACK: usize = 10;
/// Weight floor applied before row normalization; keeps every log score finite.
pub const PROB_FLOOR: f64 = 1e-8;

const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PosteriorGrid {
    vocab_hash: String,
    rows: Vec<Vec<f64>>,
    reference: Option<Vec<TokenId>>,
}

impl PosteriorGrid {
    /// Wraps pre-computed log-probability rows, validating row widths and
    /// normalization.
    pub fn from_rows(
        vocab: &Vocabulary,
        rows: Vec<Vec<f64>>,
        reference: Option<Vec<TokenId>>,
    ) -> Result<Self> {
        Self::from_raw_parts(vocab.hash().to_string(), vocab.support_size(), rows, reference)
    }

    fn from_raw_parts(
        vocab_hash: String,
        support: usize,
        rows: Vec<Vec<f64>>,
        reference: Option<Vec<TokenId>>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("grid needs at least one row".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != support {
                return Err(Error::Config(format!(
                    "row {} has {} columns, support is {}",
                    i + 1,
                    row.len(),
                    support
                )));
            }
            let sum: f64 = row.iter().map(|lp| lp.exp()).sum();
            if !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::UnnormalizedRow { row: i + 1, sum });
            }
        }
        Ok(Self {
            vocab_hash,
            rows,
            reference,
        })
    }

    /// Grid with the uniform distribution in every row.
    pub fn uniform(vocab: &Vocabulary, t_max: usize) -> Self {
        let support = vocab.support_size();
        let lp = (1.0 / support as f64).ln();
        Self {
            vocab_hash: vocab.hash().to_string(),
            rows: vec![vec![lp; support]; t_max],
            reference: None,
        }
    }

    /// Synthesizes a grid for a reference utterance.
    ///
    /// Each row is normally peaked on the reference token for its step
    /// (the end symbol once the reference is exhausted) with mass
    /// `1 - noise`, while `spread` sampled confusable tokens share the
    /// remaining `noise`. With per-row probability `noise` the peak is
    /// handed to the first confusable instead and the displaced target
    /// joins the confusable set, so decoding errors appear at a rate
    /// governed by `noise` and vanish as it approaches zero. The grid is
    /// a pure function of `(reference, noise, spread, seed)`.
    pub fn synth(
        vocab: &Vocabulary,
        reference: &[TokenId],
        noise: f64,
        spread: usize,
        seed: u64,
    ) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::InvalidNoise(noise));
        }
        let support = vocab.support_size();
        if spread < 1 || spread >= support {
            return Err(Error::InvalidSpread {
                spread,
                max: support - 1,
            });
        }
        for &id in reference {
            if !vocab.contains_id(id) || id < UNK_ID {
                return Err(Error::TokenNotInSupport(id));
            }
        }
        let t_max = reference.len() + DEFAULT_SLACK;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(t_max);
        for t in 1..=t_max {
            let target = if t <= reference.len() {
                reference[t - 1]
            } else {
                EOS_ID
            };
            let target_col = (target - 1) as usize;
            // `spread` distinct non-target columns.
            let picks = rand::seq::index::sample(&mut rng, support - 1, spread);
            let confusables: Vec<usize> = picks
                .into_iter()
                .map(|j| if j < target_col { j } else { j + 1 })
                .collect();
            let corrupted = rng.random::<f64>() < noise;
            let mut weights = vec![PROB_FLOOR; support];
            let share = if spread > 0 { noise / spread as f64 } else { 0.0 };
            if corrupted {
                weights[confusables[0]] += 1.0 - noise;
                weights[target_col] += share;
                for &c in &confusables[1..] {
                    weights[c] += share;
                }
            } else {
                weights[target_col] += 1.0 - noise;
                for &c in &confusables {
                    weights[c] += share;
                }
            }
            let total: f64 = weights.iter().sum();
            rows.push(weights.into_iter().map(|w| (w / total).ln()).collect());
        }
        Self::from_raw_parts(
            vocab.hash().to_string(),
            support,
            rows,
            Some(reference.to_vec()),
        )
    }

    pub fn t_max(&self) -> usize {
        self.rows.len()
    }

    pub fn support_size(&self) -> usize {
        self.rows[0].len()
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    pub fn reference(&self) -> Option<&[TokenId]> {
        self.reference.as_deref()
    }

    /// Log probability of `token` at 1-based step `t`.
    pub fn dec_logprob(&self, step: usize, token: TokenId) -> Result<f64> {
        if step < 1 || step > self.rows.len() {
            return Err(Error::StepOutOfRange {
                step,
                t_max: self.rows.len(),
            });
        }
        if token < 1 || token as usize > self.rows[0].len() {
            return Err(Error::TokenNotInSupport(token));
        }
        Ok(self.rows[step - 1][(token - 1) as usize])
    }

    /// Per-row argmax until the end symbol wins a row.
    pub fn greedy_path(&self) -> Vec<TokenId> {
        let mut out = Vec::new();
        for row in &self.rows {
            let mut best = 0usize;
            for (j, lp) in row.iter().enumerate() {
                if *lp > row[best] {
                    best = j;
                }
            }
            let id = (best + 1) as TokenId;
            if id == EOS_ID {
                break;
            }
            out.push(id);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        out.push_str("beamfuse-grid v1\n");
        out.push_str(&format!("tmax {}\n", self.rows.len()));
        out.push_str(&format!("support {}\n", self.rows[0].len()));
        out.push_str(&format!("vocab-hash {}\n", self.vocab_hash));
        match &self.reference {
            Some(ids) => {
                out.push_str("reference");
                for id in ids {
                    out.push_str(&format!(" {id}"));
                }
                out.push('\n');
            }
            None => out.push_str("reference -\n"),
        }
        for row in &self.rows {
            let mut first = true;
            for lp in row {
                if !first {
                    out.push(' ');
                }
                out.push_str(&format!("{lp}"));
                first = false;
            }
            out.push('\n');
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
        if version != "beamfuse-grid v1" {
            return Err(fail(n + 1, format!("unsupported header {version:?}")));
        }
        let (n, line) = next("tmax")?;
        let t_max: usize = header_field(line, "tmax").map_err(|m| fail(n + 1, m))?;
        let (n, line) = next("support")?;
        let support: usize = header_field(line, "support").map_err(|m| fail(n + 1, m))?;
        let (n, line) = next("vocab-hash")?;
        let vocab_hash = line
            .strip_prefix("vocab-hash")
            .map(str::trim)
            .ok_or_else(|| fail(n + 1, format!("expected vocab-hash, got {line:?}")))?
            .to_string();
        let (n, line) = next("reference")?;
        let ref_body = line
            .strip_prefix("reference")
            .map(str::trim)
            .ok_or_else(|| fail(n + 1, format!("expected reference, got {line:?}")))?;
        let reference = if ref_body == "-" {
            None
        } else {
            Some(
                ref_body
                    .split_whitespace()
                    .map(|t| t.parse::<TokenId>().map_err(|e| fail(n + 1, e.to_string())))
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        let mut rows = Vec::with_capacity(t_max);
        for _ in 0..t_max {
            let (ln, line) = next("grid row")?;
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| fail(ln + 1, e.to_string())))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_raw_parts(vocab_hash, support, rows, reference)
    }
}

fn header_field<T: std::str::FromStr>(line: &str, key: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    line.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| format!("expected {key:?} line, got {line:?}"))?
        .parse::<T>()
        .map_err(|e| e.to_string())
}
