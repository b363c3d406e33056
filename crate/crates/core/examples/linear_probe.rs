//! Supervised upper bound: a linear classifier on frozen satellite
//! embeddings, compared with zero-shot accuracy from the same encoder.
//!
//! cargo run --release --example linear_probe

mod common;

use sits_align::augment::TemporalAggregation;
use sits_align::eval::{build_class_embeddings, embed_dataset, labeled_indices, linear_probe, top1_accuracy, Ensemble};
use sits_align::synth::TAXONOMY;

fn main() -> sits_align::Result<()> {
    let (data, state) = common::trained()?;
    let classes = build_class_embeddings(&data.prompts[0].1, Ensemble::Early)?;
    let split = |ds| -> sits_align::Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let emb = embed_dataset(ds, &state.params, TemporalAggregation::Monthly)?;
        let idx = labeled_indices(ds, TAXONOMY, &classes.classes)?;
        Ok((idx.iter().map(|&(i, _)| emb.satellite[i].clone()).collect(), idx.iter().map(|p| p.1).collect()))
    };
    let (train_x, train_y) = split(&data.train)?;
    let (test_x, test_y) = split(&data.test)?;

    let probe = linear_probe(&train_x, &train_y, &test_x, &test_y, classes.classes.len(), 200, 0.01, 0)?;
    println!("linear probe  train {:.3}  test {:.3}", probe.train_accuracy, probe.test_accuracy);
    println!("zero-shot     test  {:.3}", top1_accuracy(&test_x, &test_y, &classes)?);
    Ok(())
}
