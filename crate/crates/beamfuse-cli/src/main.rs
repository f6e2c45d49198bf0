//! Command-line front end for the beamfuse toolkit.
//!
//! Subcommands: `train-lm`, `gen-pblm-data`, `ppl`, `synth`, `decode`,
//! `score`, `sweep`. Every run writes a manifest into `--out-dir` with
//! the resolved settings and input hashes. Exit codes: 0 success,
//! 1 usage error, 2 data/validation error.

mod manifest;

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use beamfuse::acoustic::PosteriorGrid;
use beamfuse::decoder::{beam_search, StepStats};
use beamfuse::error::Error;
use beamfuse::fusion::{parse_count_or_inf, FusionConfig};
use beamfuse::harness::{derive_seed, parse_sweep_spec, run_sweep};
use beamfuse::ngram::NGramLm;
use beamfuse::vocab::Vocabulary;
use beamfuse::wer::{edit_distance_wer, WerReport};
use beamfuse::Result;

use manifest::RunManifest;

/// Environment variables with this prefix override config-file values
/// (but not explicit flags), e.g. `BEAMFUSE_ALPHA=0.3`.
const ENV_PREFIX: &str = "BEAMFUSE_";

#[derive(Parser)]
#[command(name = "beamfuse", version, about = "Beam-search decoding with language-model fusion")]
struct Cli {
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Base seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for utterance-parallel work (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an n-gram language model on whitespace-tokenized text.
    ///
    /// Backward models expect their training text already reversed (the
    /// output of `gen-pblm-data`).
    TrainLm(TrainLmArgs),
    /// Reverse a corpus; by default also emit every reversed partial
    /// sentence (one per source token, longest first).
    GenPblmData(GenPblmArgs),
    /// Token perplexity of a model on a dataset.
    Ppl(PplArgs),
    /// Generate synthetic posterior grids for a reference text file.
    Synth(SynthArgs),
    /// Beam-search decode a directory of grids with fused LM scores.
    Decode(DecodeArgs),
    /// WER-score hypothesis text against references.
    Score(ScoreArgs),
    /// Run a named-method comparison from a sweep spec file.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct TrainLmArgs {
    /// Training text, one sentence per line.
    #[arg(long)]
    data: PathBuf,
    /// Existing vocabulary file; omit to build one from the data.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Ordinary-token budget when building a vocabulary.
    #[arg(long, default_value_t = 500)]
    vocab_size: usize,
    #[arg(long)]
    order: usize,
    /// Interpolation weights, e.g. "0.5,0.3,0.15" (one per order).
    #[arg(long)]
    lambda: String,
    /// fwd | bwd
    #[arg(long)]
    orientation: String,
    /// Model output path (default: <out-dir>/model.lm).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenPblmArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Emit only the reversed sentences, no partial shortening.
    #[arg(long)]
    reverse_only: bool,
}

#[derive(Args)]
struct PplArgs {
    #[arg(long)]
    lm: PathBuf,
    /// Evaluation text in the model's orientation, one sequence per line.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Reference sentences, one per line.
    #[arg(long)]
    ref_file: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Noise level in [0, 1).
    #[arg(long)]
    eps: f64,
    /// Confusable tokens per step.
    #[arg(long)]
    spread: usize,
}

#[derive(Args)]
struct DecodeArgs {
    /// Directory of .grid files.
    #[arg(long)]
    grids: PathBuf,
    #[arg(long)]
    flm: PathBuf,
    #[arg(long)]
    blm: PathBuf,
    /// Flat key = value fusion config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beam: Option<usize>,
    /// Steps between backward-score applications, or "inf".
    #[arg(long)]
    interval: Option<String>,
    /// Longest hypothesis still eligible for per-step application, or "inf".
    #[arg(long)]
    limit: Option<String>,
    /// Disable end-of-hypothesis post-processing.
    #[arg(long)]
    no_post: bool,
    /// Hypotheses to keep per utterance.
    #[arg(long, default_value_t = 10)]
    nbest: usize,
    /// Output TSV: utterance, rank, score, tokens.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-step counter dump (JSON).
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Reference text, one utterance per line.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Hypothesis text, line-aligned with the references.
    #[arg(long, conflicts_with = "hyp_tsv")]
    hyp: Option<PathBuf>,
    /// Decode TSV; rank-1 rows are scored.
    #[arg(long)]
    hyp_tsv: Option<PathBuf>,
    /// Report output path (default: <out-dir>/score.tsv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec file (experiment keys plus repeated `method =` lines).
    #[arg(long)]
    spec: PathBuf,
    /// Seed-by-seed WER table output (default: <out-dir>/sweep.tsv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional full per-seed results (JSON).
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_error = e.use_stderr();
            let _ = e.print();
            return if is_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = if cli.jobs > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Error::Config(format!("cannot build thread pool: {e}"))),
        }
    } else {
        run(&cli)
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out_dir)?;
    match &cli.command {
        Command::TrainLm(args) => train_lm(cli, args),
        Command::GenPblmData(args) => gen_pblm_data(cli, args),
        Command::Ppl(args) => ppl(cli, args),
        Command::Synth(args) => synth(cli, args),
        Command::Decode(args) => decode(cli, args),
        Command::Score(args) => score(cli, args),
        Command::Sweep(args) => sweep(cli, args),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(|l| l.to_string())
        .collect())
}

fn parse_lambdas(text: &str) -> Result<Vec<f64>> {
    text.split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad lambda value {t:?}")))
        })
        .collect()
}

fn train_lm(cli: &Cli, args: &TrainLmArgs) -> Result<()> {
    let mut manifest = RunManifest::new("train-lm", cli.seed, cli.jobs);
    manifest.input(&args.data)?;
    let lines: Vec<String> = read_lines(&args.data)?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect();
    let lambdas = parse_lambdas(&args.lambda)?;
    let orientation = args.orientation.parse()?;

    let (vocab, built) = match &args.vocab {
        Some(path) => {
            manifest.input(path)?;
            (Vocabulary::load(path)?, false)
        }
        None => (Vocabulary::build(lines.iter(), args.vocab_size)?, true),
    };
    let vocab = std::sync::Arc::new(vocab);
    let bodies: Vec<Vec<u32>> = lines.iter().map(|l| vocab.encode_line(l)).collect();
    let lm = NGramLm::train(&bodies, args.order, &lambdas, orientation, vocab.clone())?;

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cli.out_dir.join("model.lm"));
    lm.save(&out)?;
    manifest.output(&out);
    if built {
        let vocab_out = cli.out_dir.join("vocab.txt");
        vocab.save(&vocab_out)?;
        manifest.output(&vocab_out);
    }
    manifest.arg("order", args.order);
    manifest.arg("lambda", &args.lambda);
    manifest.arg("orientation", &args.orientation);
    manifest.arg("vocab-size", vocab.size());
    manifest.write(&cli.out_dir)?;
    println!(
        "trained order-{} {} model on {} sentences (V = {}), wrote {}",
        args.order,
        orientation,
        bodies.len(),
        vocab.size(),
        out.display()
    );
    Ok(())
}

fn gen_pblm_data(cli: &Cli, args: &GenPblmArgs) -> Result<()> {
    let mut manifest = RunManifest::new("gen-pblm-data", cli.seed, cli.jobs);
    manifest.input(&args.input)?;
    let reader = BufReader::new(fs::File::open(&args.input)?);
    let mut writer = BufWriter::new(fs::File::create(&args.out)?);
    let mut sentences = 0usize;
    let mut emitted = 0usize;
    for line in reader.lines() {
        let line = line?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        sentences += 1;
        if args.reverse_only {
            write_tokens(&mut writer, tokens.iter().rev().copied())?;
            emitted += 1;
        } else {
            for t in (1..=tokens.len()).rev() {
                write_tokens(&mut writer, tokens[..t].iter().rev().copied())?;
                emitted += 1;
            }
        }
    }
    writer.flush()?;
    manifest.arg("reverse-only", args.reverse_only);
    manifest.output(&args.out);
    manifest.write(&cli.out_dir)?;
    println!(
        "{} sentences in, {} sequences out, wrote {}",
        sentences,
        emitted,
        args.out.display()
    );
    Ok(())
}

fn write_tokens<'a, W: Write>(writer: &mut W, tokens: impl Iterator<Item = &'a str>) -> Result<()> {
    for (i, tok) in tokens.enumerate() {
        if i > 0 {
            writer.write_all(b" ")?;
        }
        writer.write_all(tok.as_bytes())?;
    }
    writer.write_all(b"\n")?;
    Ok(())
}

fn ppl(cli: &Cli, args: &PplArgs) -> Result<()> {
    let mut manifest = RunManifest::new("ppl", cli.seed, cli.jobs);
    manifest.input(&args.lm)?;
    manifest.input(&args.data)?;
    let lm = NGramLm::load(&args.lm)?;
    let lines = read_lines(&args.data)?;
    let bodies: Vec<Vec<u32>> = lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| lm.vocab().encode_line(l))
        .collect();
    let predictions: usize = bodies.iter().map(|b| b.len() + 1).sum();
    let value = lm.perplexity(&bodies)?;
    println!("# token perplexity; predictions per sequence = body tokens + 1 (terminal symbol counted, start symbol excluded)");
    println!("perplexity\t{value:.6}");
    println!("sequences\t{}", bodies.len());
    println!("predictions\t{predictions}");
    manifest.arg("perplexity", format!("{value:.6}"));
    manifest.write(&cli.out_dir)?;
    Ok(())
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let mut manifest = RunManifest::new("synth", cli.seed, cli.jobs);
    manifest.input(&args.ref_file)?;
    manifest.input(&args.vocab)?;
    let vocab = Vocabulary::load(&args.vocab)?;
    let lines: Vec<String> = read_lines(&args.ref_file)?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for (i, line) in lines.iter().enumerate() {
        let reference = vocab.encode_line(line);
        let grid = PosteriorGrid::synth(
            &vocab,
            &reference,
            args.eps,
            args.spread,
            derive_seed(cli.seed, i as u64),
        )?;
        let path = cli.out_dir.join(format!("utt-{i:04}.grid"));
        grid.save(&path)?;
        manifest.output(&path);
    }
    let refs_out = cli.out_dir.join("refs.txt");
    fs::write(&refs_out, lines.join("\n") + "\n")?;
    manifest.output(&refs_out);
    manifest.arg("eps", args.eps);
    manifest.arg("spread", args.spread);
    manifest.arg("utterances", lines.len());
    manifest.write(&cli.out_dir)?;
    println!("wrote {} grids to {}", lines.len(), cli.out_dir.display());
    Ok(())
}

/// Precedence: defaults < config file < BEAMFUSE_* environment < flags.
fn resolve_fusion_config(args: &DecodeArgs) -> Result<FusionConfig> {
    let mut config = match &args.config {
        Some(path) => FusionConfig::from_kv_text(&fs::read_to_string(path)?)?,
        None => FusionConfig::default(),
    };
    for key in ["alpha", "beta", "gamma", "beam", "interval", "limit", "post", "per-parent-cap"] {
        let var = format!("{ENV_PREFIX}{}", key.to_uppercase().replace('-', "_"));
        if let Ok(value) = std::env::var(&var) {
            config.apply_kv(key, &value)?;
        }
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    if let Some(v) = args.beta {
        config.beta = v;
    }
    if let Some(v) = args.gamma {
        config.gamma = v;
    }
    if let Some(v) = args.beam {
        config.beam = v;
    }
    if let Some(v) = &args.interval {
        config.interval =
            parse_count_or_inf(v).ok_or_else(|| Error::Config(format!("bad interval {v:?}")))?;
    }
    if let Some(v) = &args.limit {
        config.length_limit =
            parse_count_or_inf(v).ok_or_else(|| Error::Config(format!("bad limit {v:?}")))?;
    }
    if args.no_post {
        config.post_processing = false;
    }
    config.validate()?;
    Ok(config)
}

#[derive(serde::Serialize)]
struct UtteranceStats<'a> {
    utterance: &'a str,
    candidates_scored: usize,
    isf_evaluations: usize,
    post_evaluations: usize,
    hypotheses_ended: usize,
    steps: &'a [StepStats],
}

fn decode(cli: &Cli, args: &DecodeArgs) -> Result<()> {
    let mut manifest = RunManifest::new("decode", cli.seed, cli.jobs);
    manifest.input(&args.flm)?;
    manifest.input(&args.blm)?;
    if let Some(path) = &args.config {
        manifest.input(path)?;
    }
    let config = resolve_fusion_config(args)?;
    let flm = NGramLm::load(&args.flm)?;
    let blm = NGramLm::load(&args.blm)?;

    let mut grid_paths: Vec<PathBuf> = fs::read_dir(&args.grids)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "grid"))
        .collect();
    grid_paths.sort();
    if grid_paths.is_empty() {
        return Err(Error::Config(format!(
            "no .grid files in {}",
            args.grids.display()
        )));
    }
    for path in &grid_paths {
        manifest.input(path)?;
    }

    let decoded: Vec<(String, beamfuse::DecodeResult)> = grid_paths
        .par_iter()
        .map(|path| {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            let grid = PosteriorGrid::load(path)?;
            let result = beam_search(&grid, &flm, &blm, &config).map_err(|e| match e {
                Error::DecodeFailure { .. } => Error::DecodeFailure { utterance: id.clone() },
                other => other,
            })?;
            Ok((id, result))
        })
        .collect::<Result<_>>()?;

    let vocab = flm.vocab();
    let mut tsv = String::from("utterance\trank\tscore\ttokens\n");
    for (id, result) in &decoded {
        for (rank, hyp) in result.nbest.iter().take(args.nbest).enumerate() {
            tsv.push_str(&format!(
                "{id}\t{}\t{:.6}\t{}\n",
                rank + 1,
                hyp.score,
                vocab.decode(&hyp.tokens)
            ));
        }
    }
    fs::write(&args.out, &tsv)?;
    manifest.output(&args.out);

    if let Some(stats_path) = &args.stats {
        let stats: Vec<UtteranceStats> = decoded
            .iter()
            .map(|(id, result)| UtteranceStats {
                utterance: id,
                candidates_scored: result.stats.candidates_scored(),
                isf_evaluations: result.stats.isf_evaluations(),
                post_evaluations: result.stats.post_evaluations(),
                hypotheses_ended: result.stats.hypotheses_ended(),
                steps: &result.stats.steps,
            })
            .collect();
        fs::write(stats_path, serde_json::to_string_pretty(&stats).expect("stats serialize"))?;
        manifest.output(stats_path);
    }

    manifest.arg("nbest", args.nbest);
    for line in config.to_kv_text().lines() {
        if let Some((k, v)) = line.split_once('=') {
            manifest.arg(&format!("config.{}", k.trim()), v.trim());
        }
    }
    manifest.write(&cli.out_dir)?;
    println!(
        "decoded {} utterances, wrote {}",
        decoded.len(),
        args.out.display()
    );
    Ok(())
}

fn score(cli: &Cli, args: &ScoreArgs) -> Result<()> {
    let mut manifest = RunManifest::new("score", cli.seed, cli.jobs);
    manifest.input(&args.reference)?;
    let references = read_lines(&args.reference)?;

    let hypotheses: Vec<String> = match (&args.hyp, &args.hyp_tsv) {
        (Some(path), None) => {
            manifest.input(path)?;
            read_lines(path)?
        }
        (None, Some(path)) => {
            manifest.input(path)?;
            read_lines(path)?
                .into_iter()
                .skip(1) // header
                .filter_map(|line| {
                    let fields: Vec<&str> = line.split('\t').collect();
                    (fields.len() >= 4 && fields[1] == "1").then(|| fields[3].to_string())
                })
                .collect()
        }
        _ => {
            return Err(Error::Config(
                "score needs exactly one of --hyp or --hyp-tsv".into(),
            ))
        }
    };
    let references: Vec<&String> = references.iter().filter(|l| !l.trim().is_empty()).collect();
    if references.len() != hypotheses.len() {
        return Err(Error::Config(format!(
            "{} references but {} hypotheses",
            references.len(),
            hypotheses.len()
        )));
    }

    let mut pooled = WerReport::default();
    let mut report = String::from("utterance\twer\tsubs\tdels\tins\tref_len\n");
    for (i, (reference, hypothesis)) in references.iter().zip(&hypotheses).enumerate() {
        let ref_tokens: Vec<&str> = reference.split_whitespace().collect();
        let hyp_tokens: Vec<&str> = hypothesis.split_whitespace().collect();
        let r = edit_distance_wer(&ref_tokens, &hyp_tokens)?;
        pooled.absorb(&r);
        report.push_str(&format!(
            "{i}\t{:.4}\t{}\t{}\t{}\t{}\n",
            r.wer(),
            r.substitutions,
            r.deletions,
            r.insertions,
            r.reference_length
        ));
    }
    report.push_str(&format!(
        "all\t{:.4}\t{}\t{}\t{}\t{}\n",
        pooled.wer(),
        pooled.substitutions,
        pooled.deletions,
        pooled.insertions,
        pooled.reference_length
    ));
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cli.out_dir.join("score.tsv"));
    fs::write(&out, &report)?;
    manifest.output(&out);
    manifest.arg("wer", format!("{:.4}", pooled.wer()));
    manifest.write(&cli.out_dir)?;
    println!(
        "WER {:.4}% over {} utterances (S {} / D {} / I {}), wrote {}",
        pooled.wer(),
        references.len(),
        pooled.substitutions,
        pooled.deletions,
        pooled.insertions,
        out.display()
    );
    Ok(())
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Result<()> {
    let mut manifest = RunManifest::new("sweep", cli.seed, cli.jobs);
    manifest.input(&args.spec)?;
    let spec = parse_sweep_spec(&fs::read_to_string(&args.spec)?)?;
    let run = run_sweep(&spec)?;
    let tsv = run.to_tsv();
    print!("{tsv}");
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cli.out_dir.join("sweep.tsv"));
    fs::write(&out, &tsv)?;
    manifest.output(&out);
    if let Some(json_path) = &args.json {
        fs::write(
            json_path,
            serde_json::to_string_pretty(&run).expect("sweep serializes"),
        )?;
        manifest.output(json_path);
    }
    manifest.arg("methods", spec.methods.len());
    manifest.arg("seeds", spec.seeds);
    manifest.write(&cli.out_dir)?;
    Ok(())
}
