//! The three temporal/spectral dropout augmentations and the three temporal
//! aggregation settings applied to one synthetic cube.
//!
//! cargo run --release --example augmentations

use std::collections::BTreeMap;

use sits_align::augment::{aggregate_temporal, augment, AugmentConfig, Branch, Strategy, TemporalAggregation};
use sits_align::synth::{generate, SynthSpec};

fn branch_name(b: &Branch) -> &'static str {
    match b {
        Branch::Identity => "identity",
        Branch::TimeDrop { .. } => "time drop",
        Branch::QuarterMask { .. } => "quarter mask",
        Branch::MedianPool => "median pool",
        Branch::SpectralTimeDrop { .. } => "spectral+time drop",
    }
}

fn main() -> sits_align::Result<()> {
    let data = generate(&SynthSpec {
        sites_per_class: 4,
        embed_width: 8,
        ..SynthSpec::default()
    })?;
    let cube = &data.train.cubes()[0];
    println!("input: T={} months {:?}", cube.timesteps(), cube.months());

    for strategy in [Strategy::RandomTsDrop, Strategy::TsMixAug, Strategy::TsMsDrop] {
        let cfg = AugmentConfig {
            strategy,
            ..AugmentConfig::default()
        };
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let draws = 10_000;
        for i in 0..draws {
            let a = augment(cube, &cfg, &mut cfg.sample_rng(0, i));
            *counts.entry(branch_name(&a.branch)).or_default() += 1;
        }
        let example = augment(cube, &cfg, &mut cfg.sample_rng(0, 1));
        println!("\n{strategy}: branch frequencies over {draws} draws");
        for (b, n) in counts {
            println!("  {b:<20} {:.3}", n as f64 / draws as f64);
        }
        println!("  draw #1: {:?} -> T'={} months {:?}", example.branch, example.cube.timesteps(), example.cube.months());
    }

    println!();
    for mode in [TemporalAggregation::Monthly, TemporalAggregation::Quarterly, TemporalAggregation::Annual] {
        let agg = aggregate_temporal(cube, mode)?;
        println!("{mode:>9}: T={:<2} months {:?}  band 0 {:.3?}", agg.timesteps(), agg.months(), (0..agg.timesteps()).map(|t| agg.value(t, 0, 0, 0)).collect::<Vec<_>>());
    }
    Ok(())
}
