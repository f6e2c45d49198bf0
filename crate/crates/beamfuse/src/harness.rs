//! Experiment harness: synthetic test sets, named method comparisons,
//! and length-limit sweeps with deterministic aggregation.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustic::PosteriorGrid;
use crate::corpus::{partial_sequences, reverse_corpus};
use crate::decoder::{beam_search, DecodeStats};
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::ngram::{NGramLm, Orientation};
use crate::textgen::TextModel;
use crate::vocab::{TokenId, Vocabulary};
use crate::wer::{edit_distance_wer, WerReport};

#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub reference: Vec<TokenId>,
    pub grid: PosteriorGrid,
}

#[derive(Debug, Clone, Default)]
pub struct TestSet {
    pub utterances: Vec<Utterance>,
}

#[derive(Debug, Clone)]
pub struct Models {
    pub flm: NGramLm,
    pub blm: NGramLm,
    pub pblm: NGramLm,
}

/// Which backward model a method scores with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackwardModel {
    Blm,
    Pblm,
}

impl fmt::Display for BackwardModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackwardModel::Blm => write!(f, "blm"),
            BackwardModel::Pblm => write!(f, "pblm"),
        }
    }
}

impl FromStr for BackwardModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blm" => Ok(BackwardModel::Blm),
            "pblm" => Ok(BackwardModel::Pblm),
            other => Err(Error::Config(format!("unknown backward model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Method {
    pub name: String,
    pub backward: BackwardModel,
    pub config: FusionConfig,
}

impl Method {
    pub fn new(name: impl Into<String>, backward: BackwardModel, config: FusionConfig) -> Self {
        Self {
            name: name.into(),
            backward,
            config,
        }
    }

    /// Parses `NAME key=value ...`, e.g.
    /// `12-combined backward=pblm alpha=0.5 beta=0.5 interval=1`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| Error::Config("method needs a name".into()))?
            .to_string();
        let mut backward = BackwardModel::Pblm;
        let mut config = FusionConfig::default();
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {part:?}")))?;
            if key == "backward" {
                backward = value.parse()?;
            } else {
                config.apply_kv(key, value)?;
            }
        }
        config.validate()?;
        Ok(Self {
            name,
            backward,
            config,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub name: String,
    pub backward: BackwardModel,
    pub config: FusionConfig,
    /// Corpus-level pooled error counts.
    pub pooled: WerReport,
    /// Pooled corpus WER percentage.
    pub mean_wer: f64,
    pub per_utterance: Vec<f64>,
    pub isf_evaluations: usize,
    pub post_evaluations: usize,
    pub candidates_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<MethodResult>,
}

impl SweepResult {
    pub fn row(&self, name: &str) -> Option<&MethodResult> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Mean-WER differences for every ordered method pair.
    pub fn pairwise_deltas(&self) -> Vec<(String, String, f64)> {
        let mut out = Vec::new();
        for a in &self.rows {
            for b in &self.rows {
                if a.name != b.name {
                    out.push((a.name.clone(), b.name.clone(), a.mean_wer - b.mean_wer));
                }
            }
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "method\tbackward\tmean_wer\tsubs\tdels\tins\tref_tokens\tisf_evals\tpost_evals\tcandidates\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{:.4}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.name,
                r.backward,
                r.mean_wer,
                r.pooled.substitutions,
                r.pooled.deletions,
                r.pooled.insertions,
                r.pooled.reference_length,
                r.isf_evaluations,
                r.post_evaluations,
                r.candidates_scored,
            ));
        }
        out.push_str("# pairwise mean-WER deltas (row - column)\n");
        for (a, b, d) in self.pairwise_deltas() {
            out.push_str(&format!("delta\t{a}\t{b}\t{d:.4}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep results serialize")
    }
}

/// Decodes every utterance under every method and aggregates WER plus
/// decode-work counters. Utterances run in parallel; aggregation is in
/// utterance order, so results do not depend on thread count.
pub fn run_method_comparison(
    set: &TestSet,
    models: &Models,
    methods: &[Method],
) -> Result<SweepResult> {
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        let backward = match method.backward {
            BackwardModel::Blm => &models.blm,
            BackwardModel::Pblm => &models.pblm,
        };
        let decoded: Vec<(WerReport, DecodeStats)> = set
            .utterances
            .par_iter()
            .map(|utt| {
                let result =
                    beam_search(&utt.grid, &models.flm, backward, &method.config).map_err(|e| {
                        match e {
                            Error::DecodeFailure { .. } => Error::DecodeFailure {
                                utterance: utt.id.clone(),
                            },
                            other => other,
                        }
                    })?;
                let report = edit_distance_wer(&utt.reference, &result.nbest[0].tokens)?;
                Ok((report, result.stats))
            })
            .collect::<Result<_>>()?;

        let mut pooled = WerReport::default();
        let mut per_utterance = Vec::with_capacity(decoded.len());
        let mut isf_evaluations = 0;
        let mut post_evaluations = 0;
        let mut candidates_scored = 0;
        for (report, stats) in &decoded {
            pooled.absorb(report);
            per_utterance.push(report.wer());
            isf_evaluations += stats.isf_evaluations();
            post_evaluations += stats.post_evaluations();
            candidates_scored += stats.candidates_scored();
        }
        rows.push(MethodResult {
            name: method.name.clone(),
            backward: method.backward,
            config: method.config.clone(),
            mean_wer: pooled.wer(),
            pooled,
            per_utterance,
            isf_evaluations,
            post_evaluations,
            candidates_scored,
        });
    }
    Ok(SweepResult { rows })
}

/// One row per length limit (the unlimited row is always included), with
/// and without post-processing. The base config must apply the backward
/// term every step.
pub fn run_length_sweep(
    set: &TestSet,
    models: &Models,
    base: &FusionConfig,
    backward: BackwardModel,
    limits: &[Option<usize>],
) -> Result<SweepResult> {
    if base.interval != Some(1) {
        return Err(Error::Config(
            "length sweep expects a base config with interval = 1".into(),
        ));
    }
    let mut all: Vec<Option<usize>> = limits.to_vec();
    if !all.contains(&None) {
        all.push(None);
    }
    let mut methods = Vec::new();
    for post in [true, false] {
        for &limit in &all {
            let label = match limit {
                Some(l) => format!("L={l}"),
                None => "L=inf".to_string(),
            };
            let suffix = if post { "post" } else { "no-post" };
            methods.push(Method::new(
                format!("{label}/{suffix}"),
                backward,
                FusionConfig {
                    length_limit: limit,
                    post_processing: post,
                    ..base.clone()
                },
            ));
        }
    }
    run_method_comparison(set, models, &methods)
}

/// Counts pairs where the first entry beats (is strictly below) the second.
pub fn sign_test_wins(pairs: &[(f64, f64)]) -> usize {
    pairs.iter().filter(|(a, b)| a < b).count()
}

/// Deterministic stream-splitting for per-utterance seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub words: usize,
    pub branching: usize,
    pub train_sentences: usize,
    pub heldout_sentences: usize,
    pub test_utterances: usize,
    pub noise: f64,
    pub spread: usize,
    pub order: usize,
    pub lambdas: Vec<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            words: 60,
            branching: 4,
            train_sentences: 20_000,
            heldout_sentences: 2_000,
            test_utterances: 200,
            noise: 0.4,
            spread: 3,
            order: 3,
            lambdas: vec![0.5, 0.3, 0.15],
        }
    }
}

/// Everything one synthetic experiment needs: shared vocabulary, the
/// three language models, the graded test set, and held-out text.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub vocab: Arc<Vocabulary>,
    pub models: Models,
    pub test_set: TestSet,
    pub heldout: Vec<Vec<TokenId>>,
}

pub fn build_experiment(spec: &ExperimentSpec) -> Result<Experiment> {
    let text_model = TextModel::random(spec.seed, spec.words, spec.branching);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1));
    let train = text_model.sample_corpus(spec.train_sentences, &mut rng);
    let heldout_text = text_model.sample_corpus(spec.heldout_sentences, &mut rng);
    let test_text = text_model.sample_corpus(spec.test_utterances, &mut rng);

    let vocab = Arc::new(Vocabulary::build(
        train.iter().map(|s| s.join(" ")),
        spec.words,
    )?);
    let train_ids: Vec<Vec<TokenId>> = train.iter().map(|s| vocab.encode_tokens(s)).collect();

    let flm = NGramLm::train(
        &train_ids,
        spec.order,
        &spec.lambdas,
        Orientation::Forward,
        vocab.clone(),
    )?;
    let blm = NGramLm::train(
        reverse_corpus(&train_ids),
        spec.order,
        &spec.lambdas,
        Orientation::Backward,
        vocab.clone(),
    )?;
    let pblm = NGramLm::train(
        train_ids.iter().flat_map(|s| partial_sequences(s)),
        spec.order,
        &spec.lambdas,
        Orientation::Backward,
        vocab.clone(),
    )?;

    let heldout: Vec<Vec<TokenId>> = heldout_text.iter().map(|s| vocab.encode_tokens(s)).collect();

    let mut utterances = Vec::with_capacity(test_text.len());
    for (i, sentence) in test_text.iter().enumerate() {
        let reference = vocab.encode_tokens(sentence);
        let grid = PosteriorGrid::synth(
            &vocab,
            &reference,
            spec.noise,
            spec.spread,
            derive_seed(spec.seed, 1000 + i as u64),
        )?;
        utterances.push(Utterance {
            id: format!("utt-{i:04}"),
            reference,
            grid,
        });
    }

    Ok(Experiment {
        vocab,
        models: Models { flm, blm, pblm },
        test_set: TestSet { utterances },
        heldout,
    })
}

/// A parsed sweep specification: the synthetic experiment parameters,
/// how many consecutive seeds to average, and the named methods.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub experiment: ExperimentSpec,
    pub seeds: usize,
    pub methods: Vec<Method>,
}

/// Flat `key = value` format; the `method` key repeats, one line per
/// method: `method = NAME key=value ...`.
pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec> {
    let mut experiment = ExperimentSpec::default();
    let mut seeds = 1usize;
    let mut methods = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::Config(format!("line {}: bad value for {what}", i + 1));
        match key {
            "seed" => experiment.seed = value.parse().map_err(|_| bad("seed"))?,
            "seeds" => seeds = value.parse().map_err(|_| bad("seeds"))?,
            "words" => experiment.words = value.parse().map_err(|_| bad("words"))?,
            "branching" => experiment.branching = value.parse().map_err(|_| bad("branching"))?,
            "train-sentences" => {
                experiment.train_sentences = value.parse().map_err(|_| bad("train-sentences"))?
            }
            "heldout-sentences" => {
                experiment.heldout_sentences =
                    value.parse().map_err(|_| bad("heldout-sentences"))?
            }
            "test-utterances" => {
                experiment.test_utterances = value.parse().map_err(|_| bad("test-utterances"))?
            }
            "eps" => experiment.noise = value.parse().map_err(|_| bad("eps"))?,
            "spread" => experiment.spread = value.parse().map_err(|_| bad("spread"))?,
            "order" => experiment.order = value.parse().map_err(|_| bad("order"))?,
            "lambdas" => {
                experiment.lambdas = value
                    .split([' ', ','])
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>().map_err(|_| bad("lambdas")))
                    .collect::<Result<_>>()?
            }
            "method" => methods.push(Method::parse(value)?),
            other => return Err(Error::Config(format!("line {}: unknown key {other:?}", i + 1))),
        }
    }
    if methods.is_empty() {
        return Err(Error::Config("sweep spec defines no methods".into()));
    }
    if seeds == 0 {
        return Err(Error::Config("seeds must be >= 1".into()));
    }
    Ok(SweepSpec {
        experiment,
        seeds,
        methods,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub result: SweepResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub per_seed: Vec<SeedRun>,
}

impl SweepRun {
    /// Mean over seeds of the pooled per-seed WER for one method.
    pub fn seed_mean_wer(&self, method: &str) -> Option<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for run in &self.per_seed {
            total += run.result.row(method)?.mean_wer;
            n += 1;
        }
        (n > 0).then(|| total / n as f64)
    }

    pub fn method_names(&self) -> Vec<String> {
        self.per_seed
            .first()
            .map(|r| r.result.rows.iter().map(|row| row.name.clone()).collect())
            .unwrap_or_default()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method");
        for run in &self.per_seed {
            out.push_str(&format!("\tseed{}", run.seed));
        }
        out.push_str("\tmean\n");
        for name in self.method_names() {
            out.push_str(&name);
            for run in &self.per_seed {
                let wer = run.result.row(&name).map(|r| r.mean_wer).unwrap_or(f64::NAN);
                out.push_str(&format!("\t{wer:.4}"));
            }
            out.push_str(&format!(
                "\t{:.4}\n",
                self.seed_mean_wer(&name).unwrap_or(f64::NAN)
            ));
        }
        out
    }
}

/// Builds the experiment at `seed + s` for `s = 0..seeds` and runs the
/// method comparison on each.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepRun> {
    let mut per_seed = Vec::with_capacity(spec.seeds);
    for s in 0..spec.seeds {
        let seed = spec.experiment.seed + s as u64;
        let experiment = build_experiment(&ExperimentSpec {
            seed,
            ..spec.experiment.clone()
        })?;
        let result = run_method_comparison(&experiment.test_set, &experiment.models, &spec.methods)?;
        per_seed.push(SeedRun { seed, result });
    }
    Ok(SweepRun { per_seed })
}
