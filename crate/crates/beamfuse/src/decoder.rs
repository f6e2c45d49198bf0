//! Label-synchronous beam search with two-step pruning and scheduled
//! backward rescoring.
//!
//! Per step, every live hypothesis is extended with the whole prediction
//! support and scored with the acoustic + forward-LM + length-reward
//! terms. On steps where the backward schedule fires, candidates are
//! first pruned to the best `min(B^2, B * (V+1))` by those cheap scores,
//! the surviving bodies are re-scored with the backward model as one pure
//! batch map, and a second pruning keeps the best `B`. Candidates ending
//! in the real end symbol are finalized with post-processing and leave
//! the beam; hypotheses still alive after the last grid row are forced to
//! take the end symbol, scored against that last row.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::acoustic::PosteriorGrid;
use crate::error::{Error, Result};
use crate::fusion::{self, BlmBook, FusionConfig};
use crate::ngram::{NGramLm, Orientation};
use crate::vocab::{TokenId, EOS_ID, SOS_ID, UNK_ID};

#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// Body tokens; never contains the start symbol, the end symbol only
    /// as the last token of an ended hypothesis.
    pub body: Vec<TokenId>,
    pub total_score: f64,
    pub blm_book: BlmBook,
    pub ended: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepStats {
    pub step: usize,
    pub candidates_scored: usize,
    pub isf_evaluations: usize,
    pub post_evaluations: usize,
    pub hypotheses_ended: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DecodeStats {
    pub steps: Vec<StepStats>,
}

impl DecodeStats {
    pub fn candidates_scored(&self) -> usize {
        self.steps.iter().map(|s| s.candidates_scored).sum()
    }

    /// Per-step backward evaluations (post-processing excluded).
    pub fn isf_evaluations(&self) -> usize {
        self.steps.iter().map(|s| s.isf_evaluations).sum()
    }

    pub fn post_evaluations(&self) -> usize {
        self.steps.iter().map(|s| s.post_evaluations).sum()
    }

    pub fn hypotheses_ended(&self) -> usize {
        self.steps.iter().map(|s| s.hypotheses_ended).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredHypothesis {
    /// Body without the end symbol.
    pub tokens: Vec<TokenId>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeResult {
    /// Every ended hypothesis, best first (score descending, then body
    /// ascending lexicographically).
    pub nbest: Vec<ScoredHypothesis>,
    pub stats: DecodeStats,
}

struct Candidate {
    parent: usize,
    token: TokenId,
    score: f64,
    book: BlmBook,
}

fn check_compatible(grid: &PosteriorGrid, flm: &NGramLm, blm: &NGramLm) -> Result<()> {
    if flm.orientation() != Orientation::Forward {
        return Err(Error::WrongOrientation {
            expected: "fwd".into(),
            actual: flm.orientation().to_string(),
        });
    }
    if blm.orientation() != Orientation::Backward {
        return Err(Error::WrongOrientation {
            expected: "bwd".into(),
            actual: blm.orientation().to_string(),
        });
    }
    for hash in [blm.vocab().hash(), grid.vocab_hash()] {
        if hash != flm.vocab().hash() {
            return Err(Error::VocabMismatch {
                expected: flm.vocab().hash().to_string(),
                actual: hash.to_string(),
            });
        }
    }
    Ok(())
}

pub fn beam_search(
    grid: &PosteriorGrid,
    flm: &NGramLm,
    blm: &NGramLm,
    config: &FusionConfig,
) -> Result<DecodeResult> {
    config.validate()?;
    check_compatible(grid, flm, blm)?;

    let support: Vec<TokenId> = flm.prediction_support().collect();
    let initial_book = fusion::initial_book(blm)?;
    let mut live = vec![Hypothesis {
        body: Vec::new(),
        total_score: 0.0,
        blm_book: initial_book,
        ended: false,
    }];
    let mut ended: Vec<Hypothesis> = Vec::new();
    let mut stats = DecodeStats::default();
    let t_max = grid.t_max();

    for t in 1..=t_max {
        let mut step = StepStats {
            step: t,
            ..StepStats::default()
        };

        let mut candidates: Vec<Candidate> = Vec::with_capacity(live.len() * support.len());
        for (pi, parent) in live.iter().enumerate() {
            let mut ctx = Vec::with_capacity(parent.body.len() + 1);
            ctx.push(SOS_ID);
            ctx.extend_from_slice(&parent.body);
            let state = flm.resolve_context(&ctx);
            for &w in &support {
                let dec_lp = grid.dec_logprob(t, w)?;
                let flm_lp = flm.logprob_in(&state, w)?;
                candidates.push(Candidate {
                    parent: pi,
                    token: w,
                    score: parent.total_score + fusion::step_score(config, dec_lp, flm_lp, 0.0),
                    book: parent.blm_book,
                });
            }
        }
        step.candidates_scored = candidates.len();

        // Score-descending order with a deterministic lexicographic
        // tie-break on the extended body.
        let better = |a: &Candidate, b: &Candidate| -> Ordering {
            b.score.total_cmp(&a.score).then_with(|| {
                let ab = live[a.parent]
                    .body
                    .iter()
                    .copied()
                    .chain(std::iter::once(a.token));
                let bb = live[b.parent]
                    .body
                    .iter()
                    .copied()
                    .chain(std::iter::once(b.token));
                ab.cmp(bb)
            })
        };

        if fusion::isf_applies(config, t, false) {
            candidates.sort_unstable_by(&better);
            if config.per_parent_cap {
                let mut kept = Vec::with_capacity(config.beam * config.beam);
                let mut per_parent = vec![0usize; live.len()];
                for c in candidates {
                    if per_parent[c.parent] < config.beam {
                        per_parent[c.parent] += 1;
                        kept.push(c);
                    }
                }
                candidates = kept;
            } else {
                candidates.truncate(config.beam * config.beam);
            }

            // Batch backward rescoring: a pure map over the survivors,
            // reduced in candidate order.
            let updates: Vec<Option<(f64, BlmBook)>> = candidates
                .par_iter()
                .map(|c| {
                    let parent_body = &live[c.parent].body;
                    let mut scored = Vec::with_capacity(parent_body.len() + 1);
                    scored.extend_from_slice(parent_body);
                    if c.token != EOS_ID {
                        scored.push(c.token);
                    }
                    if c.book.last_step < scored.len() {
                        fusion::isf_delta(blm, &scored, c.book).map(Some)
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<_>>()?;
            for (c, update) in candidates.iter_mut().zip(updates) {
                if let Some((delta, book)) = update {
                    c.score += config.beta * delta;
                    c.book = book;
                    step.isf_evaluations += 1;
                }
            }
            candidates.sort_unstable_by(&better);
            candidates.truncate(config.beam);
        } else {
            candidates.sort_unstable_by(&better);
            candidates.truncate(config.beam);
        }

        let mut next_live = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let parent = &live[c.parent];
            if c.token == EOS_ID {
                let mut body = parent.body.clone();
                let mut score = c.score;
                let mut book = c.book;
                if fusion::isf_applies(config, t, true) && book.last_step < body.len() {
                    let (delta, next) = fusion::isf_delta(blm, &body, book)?;
                    score += config.beta * delta;
                    book = next;
                    step.post_evaluations += 1;
                }
                body.push(EOS_ID);
                ended.push(Hypothesis {
                    body,
                    total_score: score,
                    blm_book: book,
                    ended: true,
                });
                step.hypotheses_ended += 1;
            } else {
                let mut body = Vec::with_capacity(parent.body.len() + 1);
                body.extend_from_slice(&parent.body);
                body.push(c.token);
                next_live.push(Hypothesis {
                    body,
                    total_score: c.score,
                    blm_book: c.book,
                    ended: false,
                });
            }
        }
        live = next_live;
        stats.steps.push(step);
        if live.is_empty() {
            break;
        }
    }

    // Hypotheses alive past the last row take a forced end symbol scored
    // against that row, plus post-processing.
    if !live.is_empty() {
        let mut step = StepStats {
            step: t_max + 1,
            ..StepStats::default()
        };
        for mut h in live.drain(..) {
            let mut ctx = Vec::with_capacity(h.body.len() + 1);
            ctx.push(SOS_ID);
            ctx.extend_from_slice(&h.body);
            let dec_lp = grid.dec_logprob(t_max, EOS_ID)?;
            let flm_lp = flm.logprob(EOS_ID, &ctx)?;
            h.total_score += fusion::step_score(config, dec_lp, flm_lp, 0.0);
            if fusion::isf_applies(config, h.body.len() + 1, true)
                && h.blm_book.last_step < h.body.len()
            {
                let (delta, next) = fusion::isf_delta(blm, &h.body, h.blm_book)?;
                h.total_score += config.beta * delta;
                h.blm_book = next;
                step.post_evaluations += 1;
            }
            h.body.push(EOS_ID);
            h.ended = true;
            ended.push(h);
            step.hypotheses_ended += 1;
        }
        stats.steps.push(step);
    }

    if ended.is_empty() {
        return Err(Error::DecodeFailure {
            utterance: "(unnamed)".into(),
        });
    }

    ended.sort_by(|a, b| {
        b.total_score.total_cmp(&a.total_score).then_with(|| {
            let ab = &a.body[..a.body.len() - 1];
            let bb = &b.body[..b.body.len() - 1];
            ab.cmp(bb)
        })
    });
    let nbest = ended
        .into_iter()
        .map(|h| ScoredHypothesis {
            tokens: h.body[..h.body.len() - 1].to_vec(),
            score: h.total_score,
        })
        .collect();
    Ok(DecodeResult { nbest, stats })
}

/// Longest prefix whose backward score a hypothesis of `len` body tokens
/// has applied under `config` by the time it is finalized.
fn last_applied_len(config: &FusionConfig, len: usize) -> usize {
    if fusion::isf_applies(config, len + 1, true) {
        return len;
    }
    match config.interval {
        None => 0,
        Some(i) => {
            let cap = config.length_limit.map_or(len, |l| len.min(l));
            cap - cap % i
        }
    }
}

/// From-scratch recomputation of a completed hypothesis score: the
/// per-step acoustic/forward/length terms over `body` plus the end
/// symbol, plus the scheduled backward contribution. Validates the
/// decoder's incremental accounting.
pub fn rescore_total(
    body: &[TokenId],
    grid: &PosteriorGrid,
    flm: &NGramLm,
    blm: &NGramLm,
    config: &FusionConfig,
) -> Result<f64> {
    config.validate()?;
    check_compatible(grid, flm, blm)?;
    if body.iter().any(|&id| id < UNK_ID) {
        return Err(Error::Config(
            "rescoring expects a body without start/end symbols".into(),
        ));
    }

    let mut total = 0.0;
    let mut ctx = Vec::with_capacity(body.len() + 1);
    ctx.push(SOS_ID);
    for (i, &w) in body.iter().enumerate() {
        let dec_lp = grid.dec_logprob(i + 1, w)?;
        let flm_lp = flm.logprob(w, &ctx)?;
        total += fusion::step_score(config, dec_lp, flm_lp, 0.0);
        ctx.push(w);
    }
    let eos_step = (body.len() + 1).min(grid.t_max());
    let dec_lp = grid.dec_logprob(eos_step, EOS_ID)?;
    let flm_lp = flm.logprob(EOS_ID, &ctx)?;
    total += fusion::step_score(config, dec_lp, flm_lp, 0.0);

    let applied = last_applied_len(config, body.len());
    if applied > 0 {
        let initial = fusion::initial_book(blm)?.last_score;
        let backward = fusion::backward_sequence_score(blm, &body[..applied])?;
        total += config.beta * (backward - initial);
    }
    Ok(total)
}
