//! Scenicness regression from value-tagged prompts, scored with Pearson r
//! and Kendall tau-b, and written as a per-site CSV.
//!
//! cargo run --release --example scenicness [-- <out csv>]

mod common;

use sits_align::augment::TemporalAggregation;
use sits_align::eval::{embed_dataset, kendall_tau, pearson_r, scenicness_score, write_scenicness_csv, Ensemble};

fn main() -> sits_align::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example-scenicness.csv".into());
    let (data, state) = common::trained()?;
    let emb = embed_dataset(&data.test, &state.params, TemporalAggregation::Monthly)?;
    let truth = data.test.scenicness().expect("synthetic scenicness");
    for (style, table) in &data.scenicness_prompts {
        for mode in [Ensemble::Early, Ensemble::Late] {
            let rows: Vec<(String, f64, f64)> = emb
                .site_ids
                .iter()
                .zip(&emb.satellite)
                .map(|(s, z)| Ok((s.clone(), truth[s], scenicness_score(z, table, mode, 20.0)?)))
                .collect::<sits_align::Result<_>>()?;
            let t: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let p: Vec<f64> = rows.iter().map(|r| r.2).collect();
            println!("{style:>11} {mode:>5}  pearson_r {:.3}  kendall_tau {:.3}", pearson_r(&t, &p)?, kendall_tau(&t, &p)?);
            if *style == "descriptive" && mode == Ensemble::Late {
                write_scenicness_csv(out.as_ref(), &rows)?;
            }
        }
    }
    println!("per-site predictions written to {out}");
    Ok(())
}
