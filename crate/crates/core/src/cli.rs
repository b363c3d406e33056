//! Command-line front end: one subcommand per pipeline stage, each driven by
//! a `key=value` config file.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::augment::TemporalAggregation;
use crate::config::{RunConfig, KEYS};
use crate::datamodel::{load_dataset, load_prompt_table, write_csv, LabeledDataset};
use crate::encoder::{estimate_flops, load_params, param_count, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::{
    build_class_embeddings, category_recall_at_k, embed_dataset, kendall_tau, labeled_indices, linear_probe,
    pearson_r, recall_at_k, scenicness_score, top1_accuracy, write_metrics_csv, write_scenicness_csv, Embedded,
    Ensemble, MetricRow,
};
use crate::synth::{generate, write_synth, SynthSpec, SCENICNESS_TAXONOMY};
use crate::train::{
    grad_check_model, load_checkpoint, save_checkpoint, train_contrastive, write_loss_csv, TrainSetup, LOSS_LOG,
};

/// Relative-error tolerance of the `gradcheck` subcommand.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Reference cost of a ViT-B/32 image encoder in GMac.
pub const REFERENCE_GMAC: f64 = 16.69;

/// Directory under `out.dir` holding the trained checkpoint.
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Parser)]
#[command(name = "sits-align", version, about = "Contrastive alignment of pixel time series with ground-level embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (`key=value` lines)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Run configuration (`key=value` lines)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Checkpoint directory (default: <out.dir>/checkpoint)
    #[arg(long, value_name = "DIR")]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset and prompt tables under out.dir
    Synth(ConfigArg),
    /// Train the encoder; writes <out.dir>/checkpoint and <out.dir>/loss.csv
    Train(ConfigArg),
    /// Finite-difference check of every gradient; writes gradcheck.csv
    Gradcheck(ConfigArg),
    /// Zero-shot top-1 per taxonomy; writes metrics_zeroshot.csv
    EvalZeroshot(EvalArgs),
    /// S2G and G2S recall@k; writes metrics_retrieval.csv
    EvalRetrieval(EvalArgs),
    /// Scenicness correlation; writes metrics_scenicness.csv and scenicness.csv
    EvalScenicness(EvalArgs),
    /// Linear probe on frozen embeddings; writes metrics_probe.csv
    Probe(EvalArgs),
    /// Parameter count and MAC estimate; writes flops.csv
    Flops(ConfigArg),
}

fn help_footer() -> String {
    let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys:\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:width$}  {d}\n"));
    }
    s.push_str(
        "\ngradcheck uses the tiny encoder unless encoder.* keys are given.\n\
         \nExit codes:\n  0  success\n  2  config error (bad arguments, unknown or missing key)\n  \
         3  data error (malformed or inconsistent input files)\n  \
         4  numeric error (non-finite values, degenerate input, failed gradient check)\n  \
         5  I/O error\n",
    );
    s
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Summaries go to stdout, diagnostics to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let footer = help_footer();
    let matches = Cli::command().after_help(footer.clone()).after_long_help(footer).try_get_matches_from(argv);
    let cli = match matches.and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::Synth(a) => synth(&RunConfig::load(&a.config)?),
        Command::Train(a) => train(&RunConfig::load(&a.config)?),
        Command::Gradcheck(a) => gradcheck(&RunConfig::load(&a.config)?),
        Command::Flops(a) => flops(&RunConfig::load(&a.config)?),
        Command::EvalZeroshot(a) => eval_zeroshot(&EvalContext::new(&a)?),
        Command::EvalRetrieval(a) => eval_retrieval(&EvalContext::new(&a)?),
        Command::EvalScenicness(a) => eval_scenicness(&EvalContext::new(&a)?),
        Command::Probe(a) => probe(&EvalContext::new(&a)?),
    }
}

fn out_dir(c: &RunConfig) -> Result<PathBuf> {
    let dir = c.path("out.dir")?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn synth(c: &RunConfig) -> Result<String> {
    let out = out_dir(c)?;
    let data = generate(&SynthSpec::from_config(c)?)?;
    let paths = write_synth(&out, &data)?;
    Ok(format!(
        "synth: {} train / {} test sites, train manifest {}, prompts {}",
        data.train.len(),
        data.test.len(),
        paths.train_manifest.display(),
        paths.prompt_dir.display()
    ))
}

fn train(c: &RunConfig) -> Result<String> {
    let out = out_dir(c)?;
    let setup = TrainSetup::from_config(c)?;
    let ds = load_dataset(c.path("data.manifest")?)?;
    let resume = c.path_opt("train.resume").map(|p| load_checkpoint(&p)).transpose()?;
    let state = train_contrastive(&ds, &setup, c.seed()?, resume, |_| {})?;
    let ckpt = out.join(CHECKPOINT_DIR);
    save_checkpoint(&ckpt, &state)?;
    write_loss_csv(&out.join(LOSS_LOG), &state.log)?;
    let last = state.log.last().map_or(f64::NAN, |l| l.mean_loss);
    Ok(format!(
        "train: {} epochs on {} sites, final loss {last:.6}, tau {:.4}, checkpoint {}",
        state.epoch,
        ds.len(),
        state.params.temperature(),
        ckpt.display()
    ))
}

fn gradcheck(c: &RunConfig) -> Result<String> {
    let out = out_dir(c)?;
    let section = c.section("encoder.");
    let config = if section.is_empty() { EncoderConfig::tiny() } else { EncoderConfig::from_pairs(&section)? };
    let report = grad_check_model(&config, c.seed()?)?;
    let mut rows: Vec<Vec<String>> =
        report.per_param.iter().map(|(n, e)| vec![n.clone(), e.to_string()]).collect();
    rows.push(vec!["pool_only".into(), report.pool_only.to_string()]);
    write_csv(&out.join("gradcheck.csv"), &["param", "rel_err"], rows)?;
    let (name, worst) = report.worst().cloned().unwrap_or_default();
    if !(worst <= GRADCHECK_TOLERANCE) {
        return Err(Error::GradientMismatch {
            param: name,
            rel_err: worst,
            tolerance: GRADCHECK_TOLERANCE,
        });
    }
    Ok(format!(
        "gradcheck: {} params, max rel err {worst:.3e} ({name}), temperature {:.3e}, pool {:.3e}",
        report.per_param.len(),
        report.temperature(),
        report.pool_only
    ))
}

fn flops(c: &RunConfig) -> Result<String> {
    let out = out_dir(c)?;
    let config = EncoderConfig::from_pairs(&c.section("encoder."))?;
    config.validate()?;
    let patch = c.parse_or("flops.patch", config.patch)?;
    let timesteps = c.parse_or("flops.timesteps", 12usize)?;
    let macs = estimate_flops(&config, patch, timesteps);
    let params = param_count(&config);
    let ratio = macs as f64 / (REFERENCE_GMAC * 1e9);
    write_csv(
        &out.join("flops.csv"),
        &["quantity", "value"],
        [
            vec!["params".into(), params.to_string()],
            vec!["macs".into(), macs.to_string()],
            vec!["patch".into(), patch.to_string()],
            vec!["timesteps".into(), timesteps.to_string()],
            vec!["ratio_to_reference".into(), ratio.to_string()],
        ],
    )?;
    Ok(format!(
        "flops: {params} params, {:.4} GMac at {patch}x{patch} T={timesteps}, {ratio:.4} of {REFERENCE_GMAC} GMac",
        macs as f64 / 1e9
    ))
}

/// Config, output directory, trained parameters and evaluation settings
/// shared by the evaluation subcommands.
struct EvalContext {
    config: RunConfig,
    out: PathBuf,
    params: EncoderParams,
    temporal: TemporalAggregation,
    ensemble: Ensemble,
    prompt_mode: String,
}

impl EvalContext {
    fn new(a: &EvalArgs) -> Result<Self> {
        let config = RunConfig::load(&a.config)?;
        let temporal = config.parse_or("eval.temporal", TemporalAggregation::Monthly)?;
        let ensemble = config.parse_or("eval.ensemble", Ensemble::Early)?;
        let prompt_mode = config.get("eval.prompt_mode").unwrap_or("class").to_string();
        if !crate::datamodel::PROMPT_STYLES.contains(&prompt_mode.as_str()) {
            return Err(Error::Config(format!("eval.prompt_mode: unknown style '{prompt_mode}'")));
        }
        let out = out_dir(&config)?;
        let ckpt = a.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_DIR));
        let params = load_params(&ckpt)?;
        Ok(Self {
            config,
            out,
            params,
            temporal,
            ensemble,
            prompt_mode,
        })
    }

    fn eval_dataset(&self) -> Result<LabeledDataset> {
        match self.config.path_opt("data.eval_manifest") {
            Some(p) => load_dataset(p),
            None => load_dataset(self.config.path("data.manifest")?),
        }
    }

    fn prompt_manifest(&self, taxonomy: &str) -> Result<PathBuf> {
        Ok(self.config.path("data.prompt_dir")?.join(format!("prompts_{taxonomy}.manifest")))
    }

    fn row(&self, taxonomy: &str, metric: String, mode: String, value: f64, support: usize) -> MetricRow {
        MetricRow {
            taxonomy: taxonomy.to_string(),
            metric,
            mode,
            temporal_setting: self.temporal.to_string(),
            value,
            support,
        }
    }
}

fn pick<T: Clone>(xs: &[T], idx: &[(usize, usize)]) -> Vec<T> {
    idx.iter().map(|&(i, _)| xs[i].clone()).collect()
}

fn eval_zeroshot(cx: &EvalContext) -> Result<String> {
    let ds = cx.eval_dataset()?;
    let emb = embed_dataset(&ds, &cx.params, cx.temporal)?;
    let mut rows = Vec::new();
    for tax in ds.taxonomies() {
        let table = load_prompt_table(cx.prompt_manifest(tax)?, &cx.prompt_mode)?;
        let classes = build_class_embeddings(&table, cx.ensemble)?;
        let idx = labeled_indices(&ds, tax, &classes.classes)?;
        let labels: Vec<usize> = idx.iter().map(|p| p.1).collect();
        let acc = top1_accuracy(&pick(&emb.satellite, &idx), &labels, &classes)?;
        rows.push(cx.row(tax, "top1".into(), cx.ensemble.to_string(), acc, idx.len()));
    }
    if rows.is_empty() {
        return Err(Error::Format("evaluation dataset has no label taxonomies".into()));
    }
    write_metrics_csv(&cx.out.join("metrics_zeroshot.csv"), &rows)?;
    let parts: Vec<String> = rows.iter().map(|r| format!("{} {:.4} (n={})", r.taxonomy, r.value, r.support)).collect();
    Ok(format!("eval-zeroshot: top1 {} [{} prompts, {} ensemble, {}]", parts.join(", "), cx.prompt_mode, cx.ensemble, cx.temporal))
}

fn eval_retrieval(cx: &EvalContext) -> Result<String> {
    let ds = cx.eval_dataset()?;
    let k = cx.config.parse_or("eval.k", 1usize)?;
    let Embedded { satellite, ground, .. } = embed_dataset(&ds, &cx.params, cx.temporal)?;
    let metric = format!("recall@{k}");
    let identity: Vec<usize> = (0..ds.len()).collect();
    let mut rows = vec![
        cx.row("site", metric.clone(), "s2g".into(), recall_at_k(&satellite, &ground, &identity, k)?, ds.len()),
        cx.row("site", metric.clone(), "g2s".into(), recall_at_k(&ground, &satellite, &identity, k)?, ds.len()),
    ];
    for tax in ds.taxonomies() {
        let names: BTreeSet<&str> = ds.labels(tax).into_iter().flat_map(|m| m.values().map(String::as_str)).collect();
        let classes: Vec<String> = names.into_iter().map(str::to_string).collect();
        let idx = labeled_indices(&ds, tax, &classes)?;
        let labels: Vec<usize> = idx.iter().map(|p| p.1).collect();
        let (sat, gr) = (pick(&satellite, &idx), pick(&ground, &idx));
        let s2g = category_recall_at_k(&sat, &labels, &gr, &labels, k)?;
        let g2s = category_recall_at_k(&gr, &labels, &sat, &labels, k)?;
        rows.push(cx.row(tax, metric.clone(), "s2g".into(), s2g, idx.len()));
        rows.push(cx.row(tax, metric.clone(), "g2s".into(), g2s, idx.len()));
    }
    write_metrics_csv(&cx.out.join("metrics_retrieval.csv"), &rows)?;
    let parts: Vec<String> = rows.iter().map(|r| format!("{}/{} {:.4}", r.taxonomy, r.mode, r.value)).collect();
    Ok(format!("eval-retrieval: {metric} {} [{}]", parts.join(", "), cx.temporal))
}

fn eval_scenicness(cx: &EvalContext) -> Result<String> {
    let ds = cx.eval_dataset()?;
    let beta = cx.config.parse_or("eval.scenicness_beta", 20.0)?;
    let scores = ds.scenicness().ok_or_else(|| Error::Format("evaluation dataset has no scenicness scores".into()))?;
    let table = load_prompt_table(cx.prompt_manifest(SCENICNESS_TAXONOMY)?, &cx.prompt_mode)?;
    let emb = embed_dataset(&ds, &cx.params, cx.temporal)?;
    let mut per_site = Vec::new();
    for (site, sat) in emb.site_ids.iter().zip(&emb.satellite) {
        if let Some(&truth) = scores.get(site) {
            per_site.push((site.clone(), truth, scenicness_score(sat, &table, cx.ensemble, beta)?));
        }
    }
    let truth: Vec<f64> = per_site.iter().map(|r| r.1).collect();
    let pred: Vec<f64> = per_site.iter().map(|r| r.2).collect();
    let r = pearson_r(&truth, &pred)?;
    let tau = kendall_tau(&truth, &pred)?;
    let n = per_site.len();
    let mode = cx.ensemble.to_string();
    let rows = vec![
        cx.row(SCENICNESS_TAXONOMY, "pearson_r".into(), mode.clone(), r, n),
        cx.row(SCENICNESS_TAXONOMY, "kendall_tau".into(), mode, tau, n),
    ];
    write_metrics_csv(&cx.out.join("metrics_scenicness.csv"), &rows)?;
    write_scenicness_csv(&cx.out.join("scenicness.csv"), &per_site)?;
    Ok(format!("eval-scenicness: pearson_r {r:.4}, kendall_tau {tau:.4} over {n} sites [{} ensemble]", cx.ensemble))
}

fn probe(cx: &EvalContext) -> Result<String> {
    let train_ds = load_dataset(cx.config.path("data.manifest")?)?;
    let test_ds = cx.eval_dataset()?;
    let steps = cx.config.parse_or("probe.steps", 200usize)?;
    let lr = cx.config.parse_or("probe.lr", 0.01)?;
    let seed = cx.config.seed()?;
    let tr = embed_dataset(&train_ds, &cx.params, cx.temporal)?;
    let te = embed_dataset(&test_ds, &cx.params, cx.temporal)?;
    let mut rows = Vec::new();
    for tax in train_ds.taxonomies() {
        let names: BTreeSet<&str> = [&train_ds, &test_ds]
            .iter()
            .flat_map(|d| d.labels(tax).into_iter().flat_map(|m| m.values().map(String::as_str)))
            .collect();
        let classes: Vec<String> = names.into_iter().map(str::to_string).collect();
        let tri = labeled_indices(&train_ds, tax, &classes)?;
        let tei = if test_ds.labels(tax).is_some() { labeled_indices(&test_ds, tax, &classes)? } else { Vec::new() };
        let res = linear_probe(
            &pick(&tr.satellite, &tri),
            &tri.iter().map(|p| p.1).collect::<Vec<_>>(),
            &pick(&te.satellite, &tei),
            &tei.iter().map(|p| p.1).collect::<Vec<_>>(),
            classes.len(),
            steps,
            lr,
            seed,
        )?;
        rows.push(cx.row(tax, "top1".into(), "probe_train".into(), res.train_accuracy, tri.len()));
        rows.push(cx.row(tax, "top1".into(), "probe_test".into(), res.test_accuracy, tei.len()));
    }
    if rows.is_empty() {
        return Err(Error::Format("training dataset has no label taxonomies".into()));
    }
    write_metrics_csv(&cx.out.join("metrics_probe.csv"), &rows)?;
    let parts: Vec<String> =
        rows.chunks(2).map(|p| format!("{} train {:.4} test {:.4}", p[0].taxonomy, p[0].value, p[1].value)).collect();
    Ok(format!("probe: {} [{steps} steps, frozen encoder]", parts.join(", ")))
}

/// Writes a config file from `(key, value)` pairs; used by examples and
/// tests to script the CLI.
pub fn write_config(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let c = RunConfig::from_pairs(pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect())?;
    crate::datamodel::kv::write(path, c.pairs())
}
