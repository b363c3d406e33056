use std::path::Path;
use std::process::{Command, Output};

use sits_align::config::KEYS;
use sits_align::datamodel::load_dataset;
use sits_align::train::read_loss_csv;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sits-align")).args(args).output().expect("spawn binary")
}

fn write_cfg(dir: &Path, extra: &str) -> String {
    let text = format!(
        "seed = 3\nout.dir = out\ndata.manifest = out/train/dataset.manifest\n\
         data.eval_manifest = out/test/dataset.manifest\ndata.prompt_dir = out/prompts\n\
         synth.sites_per_class = 8\nsynth.embed_width = 16\n\
         encoder.layers = 1\nencoder.heads = 2\nencoder.model_width = 16\nencoder.ffn_width = 16\n\
         encoder.head_width = 16\nencoder.output_width = 16\n\
         loss.queue_size = 32\ntrain.epochs = 3\ntrain.warmup_epochs = 1\ntrain.batch_size = 8\n{extra}"
    );
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_lists_keys_and_exit_codes() {
    let o = bin(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for (k, _) in KEYS {
        assert!(text.contains(k), "help is missing {k}");
    }
    for code in ["0  success", "2  config", "3  data", "4  numeric", "5  I/O"] {
        assert!(text.contains(code), "help is missing exit code line '{code}'");
    }
    for cmd in ["synth", "train", "gradcheck", "eval-zeroshot", "eval-retrieval", "eval-scenicness", "probe", "flops"] {
        assert!(text.contains(cmd));
    }
}

#[test]
fn argument_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(&["train"]).status.code(), Some(2));
    assert_eq!(bin(&[]).status.code(), Some(2));
    let missing = dir.path().join("nope.cfg");
    assert_eq!(bin(&["synth", "--config", missing.to_str().unwrap()]).status.code(), Some(5));
    let cfg = write_cfg(dir.path(), "not.a.key = 1\n");
    let o = bin(&["synth", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not.a.key"));
    let cfg = write_cfg(dir.path(), "train.warmup_epochs = 5\n");
    assert_eq!(bin(&["train", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "");
    assert_eq!(bin(&["synth", "--config", &cfg]).status.code(), Some(0));
    std::fs::write(dir.path().join("out/train/cubes.tsr"), b"TSR0garbage").unwrap();
    let o = bin(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn pipeline_writes_outputs_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "");
    let out = dir.path().join("out");
    let run = |cmd: &str| {
        let o = bin(&[cmd, "--config", &cfg]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let s = stdout(&o);
        assert_eq!(s.lines().count(), 1, "{cmd} summary: {s}");
        assert!(s.starts_with(cmd));
    };

    run("synth");
    assert_eq!(load_dataset(out.join("train/dataset.manifest")).unwrap().len(), 48);
    run("train");
    assert!(out.join("checkpoint/encoder.manifest").exists());
    assert_eq!(read_loss_csv(&out.join("loss.csv")).unwrap().len(), 3);
    for cmd in ["eval-zeroshot", "eval-retrieval", "eval-scenicness", "probe", "flops", "gradcheck"] {
        run(cmd);
    }
    let zs = std::fs::read_to_string(out.join("metrics_zeroshot.csv")).unwrap();
    assert!(zs.starts_with("taxonomy,metric,mode,temporal_setting,value,support\n"));
    assert!(zs.lines().any(|l| l.starts_with("landcover,top1,")));
    let retrieval = std::fs::read_to_string(out.join("metrics_retrieval.csv")).unwrap();
    assert!(retrieval.contains("landcover,recall@1,g2s,monthly,"));
    let scen = std::fs::read_to_string(out.join("scenicness.csv")).unwrap();
    assert_eq!(scen.lines().count(), 1 + 16);

    let snapshot = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = walk(dir).into_iter().map(|p| (p.display().to_string(), std::fs::read(&p).unwrap())).collect();
        files.sort();
        files
    };
    let before = snapshot(&out);
    for cmd in ["synth", "train", "eval-zeroshot", "eval-retrieval", "eval-scenicness", "probe", "flops", "gradcheck"] {
        run(cmd);
    }
    assert!(before == snapshot(&out), "rerun changed output bytes");
}

#[test]
fn explicit_checkpoint_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "");
    assert_eq!(bin(&["synth", "--config", &cfg]).status.code(), Some(0));
    assert_eq!(bin(&["train", "--config", &cfg]).status.code(), Some(0));
    let full = std::fs::read(dir.path().join("out/loss.csv")).unwrap();

    let half = dir.path().join("half");
    std::fs::create_dir(&half).unwrap();
    std::fs::copy(dir.path().join("run.cfg"), half.join("run.cfg")).unwrap();
    let text = std::fs::read_to_string(half.join("run.cfg")).unwrap().replace("out/", "../out/");
    std::fs::write(half.join("run.cfg"), format!("{text}train.stop_after = 1\n")).unwrap();
    let half_cfg = half.join("run.cfg").to_string_lossy().into_owned();
    assert_eq!(bin(&["train", "--config", &half_cfg]).status.code(), Some(0));

    std::fs::write(half.join("run.cfg"), format!("{text}train.resume = out/checkpoint\n")).unwrap();
    assert_eq!(bin(&["train", "--config", &half_cfg]).status.code(), Some(0));
    assert_eq!(std::fs::read(half.join("out/loss.csv")).unwrap(), full);

    let ck = half.join("out/checkpoint");
    let o = bin(&["eval-zeroshot", "--config", &half_cfg, "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
