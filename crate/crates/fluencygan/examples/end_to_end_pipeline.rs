//! The whole pipeline through the CLI surface, end to end in a temp
//! directory: synthesize a corpus, corrupt it, pretrain, run adversarial
//! rounds, rewrite sentences, and score them.
//!
//! Run with: cargo run --release --example end_to_end_pipeline


use fluencygan::cli;
use fluencygan::text::synth;

fn run(args: &[&str]) {
    println!("$ fluencygan {}", args.join(" "));
    let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    let code = cli::run(&owned);
    assert_eq!(code, 0, "command failed with exit code {code}");
    println!();
}

fn main() {
    let dir = std::env::temp_dir().join("fluencygan-pipeline-example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = |name: &str| -> String { dir.join(name).display().to_string() };

    // A small self-contained corpus stands in for real monolingual text.
    let fluent: Vec<String> = synth::fluent_corpus(100, 33);
    std::fs::write(dir.join("fluent.txt"), fluent.join("\n") + "\n").unwrap();

    run(&[
        "corrupt",
        "--in", &path("fluent.txt"),
        "--out", &path("awkward.txt"),
        "--seed", "7",
    ]);

    let config = format!(
        "generator=lstm\n\
         fluent={}\n\
         awkward={}\n\
         vocab={}\n\
         checkpoint={}\n\
         log={}\n\
         max_len=16\n\
         vocab_max=512\n\
         lstm_embed=32\n\
         lstm_hidden=64\n\
         disc_embed=24\n\
         disc_dense=48\n\
         lambda=0.02\n\
         pretrain_epochs=60\n\
         adversarial_rounds=1\n\
         batch_size=8\n\
         base_lr=0.005\n\
         seed=42\n",
        path("fluent.txt"),
        path("awkward.txt"),
        path("vocab.txt"),
        path("model.flgn"),
        path("train.jsonl"),
    );
    std::fs::write(dir.join("run.conf"), config).unwrap();

    run(&["pretrain", "--config", &path("run.conf")]);
    run(&["train", "--config", &path("run.conf")]);

    // Rewrite the first few awkward sentences.
    let awkward = std::fs::read_to_string(dir.join("awkward.txt")).unwrap();
    let sample: Vec<&str> = awkward.lines().take(5).collect();
    std::fs::write(dir.join("sample.txt"), sample.join("\n") + "\n").unwrap();
    run(&[
        "infer",
        "--checkpoint", &path("model.flgn"),
        "--in", &path("sample.txt"),
        "--out", &path("rewritten.txt"),
    ]);
    let rewritten = std::fs::read_to_string(dir.join("rewritten.txt")).unwrap();
    for (inp, out) in sample.iter().zip(rewritten.lines()) {
        println!("  awkward : {inp}");
        println!("  rewrite : {out}\n");
    }

    // Evaluation pairs: awkward sentence TAB fluent reference.
    let pairs: Vec<String> = awkward
        .lines()
        .zip(&fluent)
        .take(40)
        .map(|(a, f)| format!("{a}\t{f}"))
        .collect();
    std::fs::write(dir.join("pairs.tsv"), pairs.join("\n") + "\n").unwrap();
    run(&[
        "eval",
        "--checkpoint", &path("model.flgn"),
        "--pairs", &path("pairs.tsv"),
        "--report", &path("report.json"),
    ]);

    let report = std::fs::read_to_string(dir.join("report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
    println!("report means: {}", parsed["means"]);
    println!("\nartifacts left in {}", dir.display());
}
