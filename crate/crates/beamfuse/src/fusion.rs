//! Score terms for fused beam-search decoding.
//!
//! A step increment combines the acoustic score, the forward-LM score
//! scaled by `alpha`, an optional iterative backward-LM term scaled by
//! `beta`, and a flat per-token length reward `gamma`. The backward term
//! re-scores the entire partial hypothesis from its temporary end symbol
//! down to the start symbol and substitutes the fresh score for the one
//! applied at the previous application step; `BlmBook` carries that
//! last-applied score between steps so the substitution is a single
//! subtraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ngram::{NGramLm, Orientation};
use crate::vocab::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Forward-LM weight (>= 0).
    pub alpha: f64,
    /// Backward-LM weight (>= 0).
    pub beta: f64,
    /// Per-token length reward, applied to every emitted token including
    /// the real end symbol (start symbol excluded).
    pub gamma: f64,
    /// Beam width B (>= 1).
    pub beam: usize,
    /// Apply the backward term every `interval` steps; `None` applies it
    /// only as end-of-hypothesis post-processing.
    pub interval: Option<usize>,
    /// Per-step applications stop once a hypothesis grows past this many
    /// tokens; `None` means no limit. Post-processing ignores the limit.
    pub length_limit: Option<usize>,
    /// Apply the backward term to every hypothesis that reaches the real
    /// end symbol.
    pub post_processing: bool,
    /// First pruning keeps the best `beam` children per parent instead of
    /// the global best `beam * beam` candidates.
    pub per_parent_cap: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            beam: 5,
            interval: Some(1),
            length_limit: None,
            post_processing: true,
            per_parent_cap: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        if self.beam < 1 {
            return Err(Error::Config("beam must be >= 1".into()));
        }
        if self.interval == Some(0) {
            return Err(Error::Config("interval must be >= 1".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value {value:?} for {what}"));
        match key {
            "alpha" => self.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "beta" => self.beta = value.parse().map_err(|_| bad("beta"))?,
            "gamma" => self.gamma = value.parse().map_err(|_| bad("gamma"))?,
            "beam" => self.beam = value.parse().map_err(|_| bad("beam"))?,
            "interval" => self.interval = parse_count_or_inf(value).ok_or_else(|| bad("interval"))?,
            "limit" => self.length_limit = parse_count_or_inf(value).ok_or_else(|| bad("limit"))?,
            "post" => self.post_processing = parse_switch(value).ok_or_else(|| bad("post"))?,
            "per-parent-cap" => {
                self.per_parent_cap = parse_switch(value).ok_or_else(|| bad("per-parent-cap"))?
            }
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` config file body; `#` starts a comment.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            config.apply_kv(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "alpha = {}\nbeta = {}\ngamma = {}\nbeam = {}\ninterval = {}\nlimit = {}\npost = {}\nper-parent-cap = {}\n",
            self.alpha,
            self.beta,
            self.gamma,
            self.beam,
            fmt_count_or_inf(self.interval),
            fmt_count_or_inf(self.length_limit),
            if self.post_processing { "on" } else { "off" },
            if self.per_parent_cap { "on" } else { "off" },
        )
    }
}

pub fn parse_count_or_inf(value: &str) -> Option<Option<usize>> {
    match value {
        "inf" | "Inf" | "INF" | "∞" => Some(None),
        other => other.parse::<usize>().ok().filter(|n| *n >= 1).map(Some),
    }
}

fn fmt_count_or_inf(value: Option<usize>) -> String {
    match value {
        Some(n) => n.to_string(),
        None => "inf".to_string(),
    }
}

fn parse_switch(value: &str) -> Option<bool> {
    match value {
        "on" | "true" | "1" | "yes" => Some(true),
        "off" | "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// Last backward score applied to a hypothesis and the step it covered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlmBook {
    pub last_score: f64,
    pub last_step: usize,
}

/// Bookkeeping for a fresh hypothesis: the backward score of the empty
/// body, i.e. `log P(sos | eos)`. It is shared by every hypothesis, so it
/// can never change a score ordering.
pub fn initial_book(blm: &NGramLm) -> Result<BlmBook> {
    Ok(BlmBook {
        last_score: backward_sequence_score(blm, &[])?,
        last_step: 0,
    })
}

fn require_backward(blm: &NGramLm) -> Result<()> {
    if blm.orientation() != Orientation::Backward {
        return Err(Error::WrongOrientation {
            expected: "bwd".into(),
            actual: blm.orientation().to_string(),
        });
    }
    Ok(())
}

/// Backward score of a body `w_1..w_t`: the chain from the temporary end
/// symbol through `w_t..w_1` down to the predicted start symbol. Equals
/// the backward LM's sequence log-probability of the reversed body.
pub fn backward_sequence_score(blm: &NGramLm, body: &[TokenId]) -> Result<f64> {
    require_backward(blm)?;
    let reversed: Vec<TokenId> = body.iter().rev().copied().collect();
    blm.sequence_logprob(&reversed)
}

/// Re-scores the whole extended body and subtracts the previously applied
/// score. Returns the unscaled difference (callers multiply by `beta`)
/// and the updated bookkeeping.
pub fn isf_delta(blm: &NGramLm, body: &[TokenId], book: BlmBook) -> Result<(f64, BlmBook)> {
    debug_assert!(book.last_step <= body.len());
    let score = backward_sequence_score(blm, body)?;
    Ok((
        score - book.last_score,
        BlmBook {
            last_score: score,
            last_step: body.len(),
        },
    ))
}

/// Schedule gate: post-processing fires for final hypotheses, the
/// periodic clause fires while the hypothesis is short enough and the
/// step index is a multiple of the interval. `interval = None` leaves
/// only the post-processing clause.
pub fn isf_applies(config: &FusionConfig, step: usize, is_final: bool) -> bool {
    debug_assert!(step >= 1);
    if is_final && config.post_processing {
        return true;
    }
    let within_limit = config.length_limit.is_none_or(|l| step <= l);
    let on_interval = config.interval.is_some_and(|i| step.is_multiple_of(i));
    within_limit && on_interval
}

/// One-step score increment: acoustic + scaled forward-LM + backward term
/// + length reward.
pub fn step_score(config: &FusionConfig, dec_lp: f64, flm_lp: f64, isf_term: f64) -> f64 {
    dec_lp + config.alpha * flm_lp + isf_term + config.gamma
}
