//! Acceptance suite: one PASS/FAIL line per criterion. Reference values come
//! from oracles written here, independent of the library code paths.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sits_align::augment::{aggregate_temporal, augment, AugmentConfig, Branch, Strategy, TemporalAggregation};
use sits_align::contrastive::infonce_loss;
use sits_align::datamodel::{read_tensor, write_tensor, SpectralTemporalCube};
use sits_align::encoder::{
    encode_satellite, encode_satellite_permuted, estimate_flops, param_count, EncoderConfig, EncoderParams,
    LOGIT_SCALE, POOL_QUERY,
};
use sits_align::eval::{
    build_class_embeddings, category_recall_at_k, class_scores, embed_dataset, kendall_tau, labeled_indices,
    pearson_r, recall_at_k, top1_accuracy, zero_shot_classify, Ensemble,
};
use sits_align::datamodel::PromptEmbeddingTable;
use sits_align::synth::{generate, SynthSpec, TAXONOMY};
use sits_align::train::{
    grad_check_model, load_checkpoint, save_checkpoint, train_contrastive, write_loss_csv, TrainConfig, TrainSetup,
};

/// Criterion 2's quoted loss constant.
const QUOTED_LOSS: f64 = 0.74368;
const QUOTED_PARAMS: f64 = 8.17e6;
const REFERENCE_GMAC: f64 = 16.69;

struct Outcome {
    pass: bool,
    /// Fails only on a quoted reference value that disagrees with its own
    /// defining formula.
    quoted_value_conflict: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        quoted_value_conflict: false,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn gradient_correctness() -> Outcome {
    let t = Instant::now();
    let report = grad_check_model(&EncoderConfig::tiny(), 0).expect("gradient check runs");
    let elapsed = t.elapsed();
    let names: Vec<&str> = report.per_param.iter().map(|(n, _)| n.as_str()).collect();
    let covers = names.contains(&POOL_QUERY) && names.contains(&LOGIT_SCALE);
    let max = report.max().max(report.pool_only);
    outcome(
        covers && max <= 1e-4 && elapsed <= Duration::from_secs(60),
        format!(
            "{} tensors incl. pool and temperature: {covers}; max rel err {max:.2e} <= 1e-4; {:.2}s <= 60s",
            names.len(),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn closed_form_loss() -> Outcome {
    let got = infonce_loss(&[1.0, 0.0, 0.0, 0.0], 1.0).expect("loss");
    // -ln(e / (e + 3))
    let oracle = (1f64.exp() + 3.0).ln() - 1.0;
    let uniform_ok = [0.05, 0.07, 1.0, 3.0].iter().all(|&tau| {
        let u = infonce_loss(&[0.3, 0.3, 0.3, 0.3], tau).expect("loss");
        (u - 4f64.ln()).abs() <= 1e-12
    });
    let literal_ok = (got - QUOTED_LOSS).abs() <= 1e-5;
    let oracle_ok = (got - oracle).abs() <= 1e-12;
    let mut o = outcome(
        literal_ok && oracle_ok && uniform_ok,
        format!(
            "loss {got:.10} vs quoted {QUOTED_LOSS} +/- 1e-5: {} (|diff| {:.2e}); vs exact -ln(e/(e+3)) {oracle:.10}: {}; uniform K=3 == ln 4 within 1e-12: {uniform_ok}",
            if literal_ok { "ok" } else { "MISMATCH" },
            (got - QUOTED_LOSS).abs(),
            if oracle_ok { "ok" } else { "MISMATCH" },
        ),
    );
    o.quoted_value_conflict = !literal_ok && oracle_ok && uniform_ok;
    o
}

// ---------------------------------------------------------------- 3

fn synthetic_convergence() -> Outcome {
    let t = Instant::now();
    let data = generate(&SynthSpec::default()).expect("synth");
    let state = train_contrastive(&data.train, &TrainSetup::default(), 0, None, |s| {
        let l = s.log.last().expect("log");
        if l.epoch % 10 == 0 {
            eprintln!("    [3] epoch {} loss {:.4} ({:.0}s)", l.epoch, l.mean_loss, t.elapsed().as_secs_f64());
        }
    })
    .expect("training");
    let table = &data.prompts.iter().find(|(s, _)| *s == "class").expect("class prompts").1;
    let classes = build_class_embeddings(table, Ensemble::Early).expect("classes");
    let emb = embed_dataset(&data.test, &state.params, TemporalAggregation::Monthly).expect("embed");
    let idx = labeled_indices(&data.test, TAXONOMY, &classes.classes).expect("labels");
    let labels: Vec<usize> = idx.iter().map(|p| p.1).collect();
    let sat: Vec<Vec<f64>> = idx.iter().map(|&(i, _)| emb.satellite[i].clone()).collect();
    let gr: Vec<Vec<f64>> = idx.iter().map(|&(i, _)| emb.ground[i].clone()).collect();
    let top1 = top1_accuracy(&sat, &labels, &classes).expect("top1");
    let g2s = category_recall_at_k(&gr, &labels, &sat, &labels, 1).expect("g2s");
    let pairing: Vec<usize> = (0..sat.len()).collect();
    let g2s_site = recall_at_k(&gr, &sat, &pairing, 1).expect("g2s site");
    let elapsed = t.elapsed();
    outcome(
        state.epoch <= 50 && top1 >= 0.9 && g2s >= 0.8 && elapsed <= Duration::from_secs(600),
        format!(
            "{} epochs, held-out top1 {top1:.3} >= 0.9, G2S recall@1 (class match) {g2s:.3} >= 0.8 [site match {g2s_site:.3}], {:.0}s <= 600s",
            state.epoch,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn random_cube(rng: &mut ChaCha8Rng, bands: usize, side: usize) -> SpectralTemporalCube {
    let n = 12 * bands * side * side;
    let values = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    SpectralTemporalCube::new("s", (1..=12).collect(), bands, side, side, values).expect("cube")
}

/// Original step index of every output step, by month tag.
fn source_steps(input: &SpectralTemporalCube, output: &SpectralTemporalCube) -> Option<Vec<usize>> {
    output.months().iter().map(|m| input.months().iter().position(|x| x == m)).collect()
}

fn same_cube(a: &SpectralTemporalCube, b: &SpectralTemporalCube) -> bool {
    a.months() == b.months() && a.values() == b.values()
}

fn augmentation_contracts() -> Outcome {
    const DRAWS: u64 = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cube = random_cube(&mut rng, 10, 2);
    let cfg = |strategy| AugmentConfig {
        strategy,
        ..AugmentConfig::default()
    };

    // TSMSDrop: every RGB value of every surviving step is untouched
    let ms = cfg(Strategy::TsMsDrop);
    let mut rgb_violations = 0u64;
    for i in 0..DRAWS {
        let out = augment(&cube, &ms, &mut ms.sample_rng(0, i)).cube;
        let src = source_steps(&cube, &out).expect("months preserved");
        for (t, &s) in src.iter().enumerate() {
            for &b in &ms.rgb_band_indices {
                for y in 0..2 {
                    for x in 0..2 {
                        if out.value(t, b, y, x) != cube.value(s, b, y, x) {
                            rgb_violations += 1;
                        }
                    }
                }
            }
        }
    }

    // Random TSDrop: output is the input or keeps 1..=11 steps
    let td = cfg(Strategy::RandomTsDrop);
    let (mut fired, mut bad_len) = (0u64, 0u64);
    for i in 0..DRAWS {
        let a = augment(&cube, &td, &mut td.sample_rng(0, i));
        let out = a.cube;
        if matches!(a.branch, Branch::TimeDrop { .. }) || !same_cube(&out, &cube) {
            fired += 1;
            if !(1..=11).contains(&out.timesteps()) {
                bad_len += 1;
            }
        }
    }

    // TSMixAug: classify each draw from the output alone
    let mx = cfg(Strategy::TsMixAug);
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for i in 0..DRAWS {
        let out = augment(&cube, &mx, &mut mx.sample_rng(0, i)).cube;
        let kind = if same_cube(&out, &cube) {
            "identity"
        } else if out.timesteps() == 9 && {
            let missing: Vec<u8> = (1..=12).filter(|m| !out.months().contains(m)).collect();
            missing.len() == 3 && missing[0] % 3 == 1 && missing[2] == missing[0] + 2
        } {
            "quarter"
        } else if out.timesteps() == 1 && out.months() == [0] {
            "median"
        } else {
            "other"
        };
        *counts.entry(kind).or_default() += 1;
    }
    let freq = |k| *counts.get(k).unwrap_or(&0) as f64 / DRAWS as f64;
    let (fi, fq, fm) = (freq("identity"), freq("quarter"), freq("median"));
    let freq_ok = (fi - 0.5).abs() <= 0.01 && (fq - 0.25).abs() <= 0.01 && (fm - 0.25).abs() <= 0.01 && freq("other") == 0.0;
    outcome(
        rgb_violations == 0 && bad_len == 0 && freq_ok,
        format!(
            "{DRAWS} draws each: RGB values altered {rgb_violations} times; TSDrop fired {fired}, out-of-range T' {bad_len}; TSMixAug identity/quarter/median {fi:.4}/{fq:.4}/{fm:.4}"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn oracle_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn aggregation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0usize;
    let mut monthly_ok = true;
    for _ in 0..1000 {
        let bands = rng.gen_range(1..=6);
        let side = [1, 3, 5][rng.gen_range(0..3)];
        // coarse grid values force ties
        let n = 12 * bands * side * side;
        let values = (0..n)
            .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0..4) as f64 * 0.25 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let cube = SpectralTemporalCube::new("s", (1..=12).collect(), bands, side, side, values).expect("cube");
        monthly_ok &= same_cube(&aggregate_temporal(&cube, TemporalAggregation::Monthly).expect("monthly"), &cube);
        let q = aggregate_temporal(&cube, TemporalAggregation::Quarterly).expect("quarterly");
        let a = aggregate_temporal(&cube, TemporalAggregation::Annual).expect("annual");
        if q.months() != [2, 5, 8, 11] || a.months() != [0] {
            mismatches += 1;
        }
        for b in 0..bands {
            for y in 0..side {
                for x in 0..side {
                    let series: Vec<f64> = (0..12).map(|t| cube.value(t, b, y, x)).collect();
                    for k in 0..4 {
                        if q.value(k, b, y, x) != oracle_median(series[3 * k..3 * k + 3].to_vec()) {
                            mismatches += 1;
                        }
                    }
                    if a.value(0, b, y, x) != oracle_median(series) {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    outcome(
        mismatches == 0 && monthly_ok,
        format!("1000 random cubes: {mismatches} elementwise mismatches vs sort-based medians; monthly identity {monthly_ok}"),
    )
}

// ---------------------------------------------------------------- 6

fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (na * nb)
}

/// Sort the whole gallery per query (similarity desc, index asc) and check
/// the partner's position.
fn oracle_recall(q: &[Vec<f64>], g: &[Vec<f64>], pairing: &[usize], k: usize) -> f64 {
    let mut hits = 0;
    for (qi, &target) in q.iter().zip(pairing) {
        let mut order: Vec<(f64, usize)> = g.iter().enumerate().map(|(j, gj)| (oracle_cos(qi, gj), j)).collect();
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite").then(a.1.cmp(&b.1)));
        if order.iter().position(|&(_, j)| j == target).expect("present") < k {
            hits += 1;
        }
    }
    hits as f64 / q.len() as f64
}

/// Pair counting over all i < j.
fn oracle_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    (c - d) as f64 / ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt()
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut recall_bad = 0;
    let mut recall_cases = 0;
    for &n in &[1usize, 2, 3, 10, 57, 200, 500] {
        let dim = rng.gen_range(2..8);
        let vec_ = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let q: Vec<_> = (0..n).map(|_| vec_(&mut rng)).collect();
        let mut g: Vec<_> = (0..n).map(|_| vec_(&mut rng)).collect();
        // exact duplicates create tied similarities
        for i in (1..n).step_by(5) {
            g[i] = g[i - 1].clone();
        }
        let mut pairing: Vec<usize> = (0..n).collect();
        pairing.shuffle(&mut rng);
        let ks: Vec<usize> = if n <= 10 { (1..=n).collect() } else { vec![1, 2, 5, 10, n] };
        for k in ks {
            recall_cases += 1;
            if recall_at_k(&q, &g, &pairing, k).expect("recall") != oracle_recall(&q, &g, &pairing, k) {
                recall_bad += 1;
            }
        }
    }
    let mut tau_bad = 0;
    let mut pearson_err: f64 = 0.0;
    for trial in 0..300 {
        let n = rng.gen_range(2..=200);
        let levels = [2, 3, 5, 20, 1000][trial % 5];
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.5).collect();
        let all_tied = |v: &[f64]| v.iter().all(|a| *a == v[0]);
        if all_tied(&x) || all_tied(&y) {
            continue;
        }
        if kendall_tau(&x, &y).expect("tau") != oracle_tau_b(&x, &y) {
            tau_bad += 1;
        }
        let xr: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let yr: Vec<f64> = xr.iter().map(|v| 0.3 * v + rng.gen_range(-2.0..2.0)).collect();
        pearson_err = pearson_err.max((pearson_r(&xr, &yr).expect("r") - oracle_pearson(&xr, &yr)).abs());
    }
    outcome(
        recall_bad == 0 && tau_bad == 0 && pearson_err <= 1e-12,
        format!(
            "recall@k exact on {recall_cases} cases (N <= 500): {} mismatches; tau-b exact on tied data: {tau_bad} mismatches; pearson max |diff| {pearson_err:.1e}",
            recall_bad
        ),
    )
}

// ---------------------------------------------------------------- 7

/// Parameter tally from the architecture: per-step linear embedding, 13
/// month slots, class token, pre-norm layers, final norm, two-layer head,
/// pool query and temperature.
fn oracle_params(c: &EncoderConfig) -> usize {
    let (w, f, h, d) = (c.model_width, c.ffn_width, c.head_width, c.output_width);
    let input = c.bands * c.patch * c.patch;
    let layer = 2 * (2 * w) + (w * 3 * w + 3 * w) + (w * w + w) + (w * f + f) + (f * w + w);
    (input * w + w) + 13 * w + w + c.layers * layer + 2 * w + (w * h + h) + (h * d + d) + d + 1
}

/// Multiply-accumulates of every matrix product in one forward pass.
fn oracle_macs(c: &EncoderConfig, patch: usize, t: usize) -> u64 {
    let (w, f) = (c.model_width, c.ffn_width);
    let n = t + 1;
    let dh = w / c.heads;
    let mut total = t * (c.bands * patch * patch) * w;
    for _ in 0..c.layers {
        total += n * w * (3 * w); // qkv
        total += c.heads * n * n * dh; // q k^T
        total += c.heads * n * n * dh; // attention x v
        total += n * w * w; // output projection
        total += n * w * f + n * f * w; // feed-forward
    }
    total += w * c.head_width + c.head_width * c.output_width;
    total as u64
}

fn efficiency_accounting() -> Outcome {
    let c = EncoderConfig::default();
    let params = param_count(&c);
    let macs = estimate_flops(&c, 1, 12);
    let ratio = macs as f64 / (REFERENCE_GMAC * 1e9);
    let band = (params as f64 - QUOTED_PARAMS).abs() / QUOTED_PARAMS;
    let exact = params == oracle_params(&c) && macs == oracle_macs(&c, 1, 12);
    outcome(
        exact && ratio <= 0.01 && band <= 0.3,
        format!(
            "{params} params ({:+.2}% of 8.17e6, band 30%), {:.4} GMac, ratio {ratio:.4} <= 0.01 (reference 0.0063); matches tallies: {exact}",
            100.0 * (params as f64 - QUOTED_PARAMS) / QUOTED_PARAMS,
            macs as f64 / 1e9
        ),
    )
}

// ---------------------------------------------------------------- 8

fn small_setup() -> TrainSetup {
    let mut s = TrainSetup {
        encoder: EncoderConfig {
            layers: 2,
            heads: 4,
            model_width: 32,
            ffn_width: 32,
            head_width: 32,
            output_width: 32,
            ..EncoderConfig::default()
        },
        train: TrainConfig {
            epochs: 6,
            warmup_epochs: 2,
            batch_size: 16,
            lr: 1e-3,
            ..TrainConfig::default()
        },
        ..TrainSetup::default()
    };
    s.loss.queue_size = 64;
    s.augment.strategy = Strategy::TsMsDrop;
    s.augment.seed = 8;
    s
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).expect("read file")
}

fn determinism_and_persistence() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();
    let data = generate(&SynthSpec {
        sites_per_class: 12,
        embed_width: 32,
        ..SynthSpec::default()
    })
    .expect("synth");
    let setup = small_setup();

    let run_a = train_contrastive(&data.train, &setup, 8, None, |_| {}).expect("run a");
    let run_b = train_contrastive(&data.train, &setup, 8, None, |_| {}).expect("run b");
    write_loss_csv(&d.join("a.csv"), &run_a.log).expect("write");
    write_loss_csv(&d.join("b.csv"), &run_b.log).expect("write");
    let repeat = read(&d.join("a.csv")) == read(&d.join("b.csv"));

    let mut half = setup.clone();
    half.train.stop_after = Some(3);
    let partial = train_contrastive(&data.train, &half, 8, None, |_| {}).expect("partial");
    save_checkpoint(&d.join("ckpt"), &partial).expect("save");
    let resumed = train_contrastive(&data.train, &setup, 8, Some(load_checkpoint(&d.join("ckpt")).expect("load")), |_| {})
        .expect("resume");
    write_loss_csv(&d.join("r.csv"), &resumed.log).expect("write");
    let resume = read(&d.join("a.csv")) == read(&d.join("r.csv")) && resumed.params == run_a.params;

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut golden_ok = 0;
    let names = ["vector.tsr", "cube.tsr", "special.tsr"];
    for name in names {
        let original = read(&golden.join(name));
        let (dims, values) = read_tensor(golden.join(name)).expect("golden read");
        // independent decode of the header and payload
        let rank = original[4] as usize;
        let odims: Vec<usize> =
            (0..rank).map(|i| u32::from_le_bytes(original[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize).collect();
        let ovals: Vec<u32> =
            original[5 + 4 * rank..].chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        let decoded = dims == odims && values.iter().map(|v| v.to_bits()).collect::<Vec<_>>() == ovals;
        write_tensor(d.join(name), &dims, &values).expect("golden write");
        if decoded && read(&d.join(name)) == original {
            golden_ok += 1;
        }
    }
    outcome(
        repeat && resume && golden_ok == names.len(),
        format!(
            "repeat run loss log bitwise equal: {repeat}; resume after epoch 3 reproduces log and params: {resume}; golden files round-tripped {golden_ok}/{}",
            names.len()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn invariance_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = EncoderParams::init(&EncoderConfig::default(), 0.07, 9).expect("init");
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let t = rng.gen_range(2..=12);
        let mut months: Vec<u8> = (1..=12).collect();
        months.shuffle(&mut rng);
        months.truncate(t);
        months.sort_unstable();
        let values = (0..t * 10).map(|_| rng.gen_range(0.0..1.0)).collect();
        let cube = SpectralTemporalCube::new("s", months, 10, 1, 1, values).expect("cube");
        let base = encode_satellite(&cube, &params).expect("encode");
        for _ in 0..3 {
            let mut order: Vec<usize> = (0..t).collect();
            order.shuffle(&mut rng);
            let p = encode_satellite_permuted(&cube, &order, &params).expect("encode");
            worst = base.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
    }

    let mut argmax_changes = 0;
    let mut late_early_diff = 0;
    for trial in 0..200 {
        let classes = rng.gen_range(2..10);
        let dim = rng.gen_range(2..16);
        let prompts_per = if trial % 2 == 0 { 1 } else { rng.gen_range(2..5) };
        let v = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let prompts: Vec<Vec<Vec<f64>>> = (0..classes).map(|_| (0..prompts_per).map(|_| v(&mut rng)).collect()).collect();
        let scaled: Vec<Vec<Vec<f64>>> = prompts
            .iter()
            .map(|ps| {
                let s = 10f64.powf(rng.gen_range(-3.0..3.0));
                ps.iter().map(|p| p.iter().map(|x| x * s).collect()).collect()
            })
            .collect();
        let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let table = PromptEmbeddingTable::new("t", names.clone(), prompts, None).expect("table");
        let table_scaled = PromptEmbeddingTable::new("t", names, scaled, None).expect("table");
        let img = v(&mut rng);
        for mode in [Ensemble::Early, Ensemble::Late] {
            let a = zero_shot_classify(&img, &build_class_embeddings(&table, mode).expect("set")).expect("classify");
            let b = zero_shot_classify(&img, &build_class_embeddings(&table_scaled, mode).expect("set")).expect("classify");
            if a != b {
                argmax_changes += 1;
            }
        }
        if prompts_per == 1 {
            let e = class_scores(&img, &build_class_embeddings(&table, Ensemble::Early).expect("set"));
            let l = class_scores(&img, &build_class_embeddings(&table, Ensemble::Late).expect("set"));
            if e != l {
                late_early_diff += 1;
            }
        }
    }
    outcome(
        worst <= 1e-9 && argmax_changes == 0 && late_early_diff == 0,
        format!(
            "timestep-order max |diff| {worst:.1e} <= 1e-9; argmax changes under positive class scaling {argmax_changes}/400; single-prompt Late vs Early score differences {late_early_diff}/100"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient correctness", gradient_correctness),
        ("closed-form loss", closed_form_loss),
        ("synthetic convergence", synthetic_convergence),
        ("augmentation contracts", augmentation_contracts),
        ("aggregation oracle", aggregation_oracle),
        ("metric oracles", metric_oracles),
        ("efficiency accounting", efficiency_accounting),
        ("determinism and persistence", determinism_and_persistence),
        ("invariance suite", invariance_suite),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        let t = Instant::now();
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} {name}: {status} ({}) [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
        if o.quoted_value_conflict {
            println!("  criterion {n}: the quoted constant disagrees with its own formula; exact checks pass (see README)");
        }
        if !o.pass && !o.quoted_value_conflict {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
