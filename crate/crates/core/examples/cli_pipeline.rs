//! The whole pipeline driven through the command-line entry point with a
//! generated config file: synth, train, every evaluation, probe and cost.
//!
//! cargo run --release --example cli_pipeline [-- <work dir>]

use std::path::PathBuf;

use sits_align::cli::{run, write_config};

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-cli".into()));
    std::fs::create_dir_all(&dir).expect("work dir");
    let config = dir.join("run.cfg");
    let pairs: Vec<(&str, String)> = [
        ("seed", "0"),
        ("out.dir", "out"),
        ("data.manifest", "out/train/dataset.manifest"),
        ("data.eval_manifest", "out/test/dataset.manifest"),
        ("data.prompt_dir", "out/prompts"),
        ("synth.embed_width", "64"),
        ("encoder.layers", "2"),
        ("encoder.heads", "4"),
        ("encoder.model_width", "64"),
        ("encoder.ffn_width", "64"),
        ("encoder.head_width", "64"),
        ("encoder.output_width", "64"),
        ("loss.queue_size", "256"),
        ("augment.strategy", "tsmixaug"),
        ("train.epochs", "20"),
        ("train.warmup_epochs", "2"),
        ("train.batch_size", "32"),
        ("train.lr", "2e-3"),
        ("eval.prompt_mode", "descriptive"),
        ("eval.ensemble", "late"),
    ]
    .iter()
    .map(|(k, v)| (*k, v.to_string()))
    .collect();
    write_config(&config, &pairs).expect("config");

    let config = config.to_string_lossy().into_owned();
    for cmd in ["synth", "train", "eval-zeroshot", "eval-retrieval", "eval-scenicness", "probe", "flops", "gradcheck"] {
        // gradcheck and flops read the same encoder.* keys
        let code = run(["sits-align", cmd, "--config", &config]);
        if code != 0 {
            eprintln!("{cmd} exited with {code}");
            std::process::exit(code);
        }
    }
    println!("outputs under {}", dir.join("out").display());
}
