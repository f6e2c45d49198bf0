//! End-to-end tests driving the installed binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;

use beamfuse::textgen::TextModel;

fn beamfuse() -> Command {
    Command::new(env!("CARGO_BIN_EXE_beamfuse"))
}

fn assert_success(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_corpus(path: &Path, seed: u64, sentences: usize) {
    let tm = TextModel::random(seed, 25, 3);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 1);
    let corpus = tm.sample_corpus(sentences, &mut rng);
    let text: String = corpus
        .iter()
        .map(|s| s.join(" "))
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(path, text + "\n").unwrap();
}

#[test]
fn full_pipeline_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_corpus(&root.join("train.txt"), 7, 600);
    write_corpus(&root.join("test.txt"), 8, 12);

    // Forward LM; builds and saves the shared vocabulary.
    let out = beamfuse()
        .args(["train-lm", "--data"])
        .arg(root.join("train.txt"))
        .args(["--vocab-size", "25", "--order", "3", "--lambda", "0.5,0.3,0.15"])
        .args(["--orientation", "fwd", "--out"])
        .arg(root.join("flm.lm"))
        .arg("--out-dir")
        .arg(root)
        .output()
        .unwrap();
    assert_success(&out, "train-lm fwd");
    assert!(root.join("vocab.txt").exists());
    assert!(root.join("train-lm.manifest.json").exists());

    // Reversed and partial corpora.
    for (flag, file) in [(Some("--reverse-only"), "reversed.txt"), (None, "partial.txt")] {
        let mut cmd = beamfuse();
        cmd.args(["gen-pblm-data", "--in"])
            .arg(root.join("train.txt"))
            .arg("--out")
            .arg(root.join(file))
            .arg("--out-dir")
            .arg(root);
        if let Some(flag) = flag {
            cmd.arg(flag);
        }
        assert_success(&cmd.output().unwrap(), "gen-pblm-data");
    }
    // Partial corpus has one sequence per source token.
    let train_tokens: usize = fs::read_to_string(root.join("train.txt"))
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().count())
        .sum();
    let partial_lines = fs::read_to_string(root.join("partial.txt")).unwrap().lines().count();
    assert_eq!(partial_lines, train_tokens);

    // Backward models over the shared vocabulary.
    for (data, model) in [("reversed.txt", "blm.lm"), ("partial.txt", "pblm.lm")] {
        let out = beamfuse()
            .args(["train-lm", "--data"])
            .arg(root.join(data))
            .arg("--vocab")
            .arg(root.join("vocab.txt"))
            .args(["--order", "3", "--lambda", "0.5,0.3,0.15", "--orientation", "bwd", "--out"])
            .arg(root.join(model))
            .arg("--out-dir")
            .arg(root)
            .output()
            .unwrap();
        assert_success(&out, "train-lm bwd");
    }

    // Perplexity prints its prediction-count convention.
    let out = beamfuse()
        .args(["ppl", "--lm"])
        .arg(root.join("pblm.lm"))
        .arg("--data")
        .arg(root.join("partial.txt"))
        .arg("--out-dir")
        .arg(root)
        .output()
        .unwrap();
    assert_success(&out, "ppl");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("terminal symbol counted"));
    assert!(stdout.contains("perplexity\t"));

    // Synthetic grids for the held-out references.
    let grids = root.join("grids");
    let out = beamfuse()
        .args(["synth", "--ref-file"])
        .arg(root.join("test.txt"))
        .arg("--vocab")
        .arg(root.join("vocab.txt"))
        .args(["--eps", "0.4", "--spread", "3", "--seed", "5", "--out-dir"])
        .arg(&grids)
        .output()
        .unwrap();
    assert_success(&out, "synth");
    assert!(grids.join("utt-0000.grid").exists());
    assert!(grids.join("refs.txt").exists());

    // Decode twice with different thread counts; outputs must match.
    let mut tsvs = Vec::new();
    for (jobs, name) in [("1", "decode-j1.tsv"), ("4", "decode-j4.tsv")] {
        let out = beamfuse()
            .args(["decode", "--grids"])
            .arg(&grids)
            .arg("--flm")
            .arg(root.join("flm.lm"))
            .arg("--blm")
            .arg(root.join("pblm.lm"))
            .args([
                "--alpha", "0.5", "--beta", "0.5", "--gamma", "3.0", "--beam", "5",
                "--interval", "1", "--nbest", "2",
            ])
            .arg("--out")
            .arg(root.join(name))
            .arg("--stats")
            .arg(root.join("stats.json"))
            .args(["--jobs", jobs])
            .arg("--out-dir")
            .arg(root)
            .output()
            .unwrap();
        assert_success(&out, "decode");
        tsvs.push(fs::read(root.join(name)).unwrap());
    }
    assert_eq!(tsvs[0], tsvs[1], "decode output changed with thread count");
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("stats.json")).unwrap()).unwrap();
    assert!(stats.as_array().unwrap().len() >= 12);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("decode.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["args"]["config.alpha"], "0.5");
    assert!(manifest["input_hashes"].as_object().unwrap().len() >= 14);

    // Score the rank-1 hypotheses against the references.
    let out = beamfuse()
        .args(["score", "--ref"])
        .arg(grids.join("refs.txt"))
        .arg("--hyp-tsv")
        .arg(root.join("decode-j1.tsv"))
        .arg("--out-dir")
        .arg(root)
        .output()
        .unwrap();
    assert_success(&out, "score");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("WER"), "score output: {stdout}");
    assert!(root.join("score.tsv").exists());
}

#[test]
fn decode_rejects_mismatched_vocabularies() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_corpus(&root.join("train.txt"), 11, 300);
    write_corpus(&root.join("other.txt"), 99, 300);
    write_corpus(&root.join("test.txt"), 12, 3);

    for (corpus, orientation, model, subdir) in [
        ("train.txt", "fwd", "flm.lm", "a"),
        ("train.txt", "bwd", "blm.lm", "b"),
        ("other.txt", "fwd", "other-flm.lm", "c"),
    ] {
        let out = beamfuse()
            .args(["train-lm", "--data"])
            .arg(root.join(corpus))
            .args(["--vocab-size", "25", "--order", "2", "--lambda", "0.5,0.2"])
            .args(["--orientation", orientation, "--out"])
            .arg(root.join(model))
            .arg("--out-dir")
            .arg(root.join(subdir))
            .output()
            .unwrap();
        assert_success(&out, "train-lm");
    }
    // Grids built against the *other* vocabulary.
    let grids = root.join("grids");
    let out = beamfuse()
        .args(["synth", "--ref-file"])
        .arg(root.join("test.txt"))
        .arg("--vocab")
        .arg(root.join("c").join("vocab.txt"))
        .args(["--eps", "0.2", "--spread", "2", "--seed", "1", "--out-dir"])
        .arg(&grids)
        .output()
        .unwrap();
    assert_success(&out, "synth");

    let out = beamfuse()
        .args(["decode", "--grids"])
        .arg(&grids)
        .arg("--flm")
        .arg(root.join("flm.lm"))
        .arg("--blm")
        .arg(root.join("blm.lm"))
        .arg("--out")
        .arg(root.join("decode.tsv"))
        .arg("--out-dir")
        .arg(root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "vocab mismatch must exit 2");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("vocabulary hash mismatch"),
        "stderr: {stderr}"
    );
    // Both hashes are printed (64 hex chars each).
    let hexes: Vec<&str> = stderr
        .split(|c: char| !c.is_ascii_hexdigit())
        .filter(|t| t.len() == 64)
        .collect();
    assert!(hexes.len() >= 2, "expected both hashes in: {stderr}");
}

#[test]
fn environment_overrides_config_but_not_flags() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_corpus(&root.join("train.txt"), 21, 300);
    write_corpus(&root.join("test.txt"), 22, 3);
    for (orientation, model) in [("fwd", "flm.lm"), ("bwd", "blm.lm")] {
        let out = beamfuse()
            .args(["train-lm", "--data"])
            .arg(root.join("train.txt"))
            .args(["--vocab-size", "25", "--order", "2", "--lambda", "0.5,0.2"])
            .args(["--orientation", orientation, "--out"])
            .arg(root.join(model))
            .arg("--out-dir")
            .arg(root)
            .output()
            .unwrap();
        assert_success(&out, "train-lm");
    }
    let grids = root.join("grids");
    let out = beamfuse()
        .args(["synth", "--ref-file"])
        .arg(root.join("test.txt"))
        .arg("--vocab")
        .arg(root.join("vocab.txt"))
        .args(["--eps", "0.2", "--spread", "2", "--seed", "3", "--out-dir"])
        .arg(&grids)
        .output()
        .unwrap();
    assert_success(&out, "synth");

    // gamma comes from the environment, beam from the explicit flag that
    // outranks its own environment value.
    let out = beamfuse()
        .args(["decode", "--grids"])
        .arg(&grids)
        .arg("--flm")
        .arg(root.join("flm.lm"))
        .arg("--blm")
        .arg(root.join("blm.lm"))
        .args(["--beam", "3", "--interval", "inf"])
        .arg("--out")
        .arg(root.join("decode.tsv"))
        .arg("--out-dir")
        .arg(root)
        .env("BEAMFUSE_GAMMA", "1.25")
        .env("BEAMFUSE_BEAM", "9")
        .output()
        .unwrap();
    assert_success(&out, "decode with env overrides");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("decode.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["args"]["config.gamma"], "1.25");
    assert_eq!(manifest["args"]["config.beam"], "3");
    assert_eq!(manifest["args"]["config.interval"], "inf");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = beamfuse()
        .args(["decode", "--grids", "x", "--flm", "y", "--blm", "z", "--out", "w"])
        .arg("--definitely-not-a-flag")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn sweep_runs_a_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let spec = "\
seed = 3
seeds = 1
words = 20
branching = 3
train-sentences = 300
heldout-sentences = 10
test-utterances = 6
eps = 0.4
spread = 3
order = 2
lambdas = 0.6 0.25
method = 00-wo-sf    backward=pblm alpha=0   beta=0   gamma=0   beam=4 interval=inf post=off
method = 01-sf-flm   backward=pblm alpha=0.5 beta=0   gamma=2.5 beam=4 interval=inf post=off
method = 07-isf-pblm backward=pblm alpha=0   beta=0.5 gamma=2.5 beam=4 interval=1
method = 12-comb-i1  backward=pblm alpha=0.5 beta=0.5 gamma=3.5 beam=4 interval=1
";
    fs::write(root.join("toy.spec"), spec).unwrap();
    let out = beamfuse()
        .args(["sweep", "--spec"])
        .arg(root.join("toy.spec"))
        .arg("--json")
        .arg(root.join("sweep.json"))
        .arg("--out-dir")
        .arg(root)
        .output()
        .unwrap();
    assert_success(&out, "sweep");
    let tsv = fs::read_to_string(root.join("sweep.tsv")).unwrap();
    for name in ["00-wo-sf", "01-sf-flm", "07-isf-pblm", "12-comb-i1"] {
        assert!(tsv.contains(name), "missing {name} in:\n{tsv}");
    }
    assert!(root.join("sweep.json").exists());
    assert!(root.join("sweep.manifest.json").exists());
}
