//! Generates the synthetic phenology dataset, writes it to disk and loads it
//! back.
//!
//! cargo run --release --example synth_dataset [-- <out dir>]

use std::path::PathBuf;

use sits_align::datamodel::{load_dataset, load_prompt_table, PROMPT_STYLES};
use sits_align::numerics::dot;
use sits_align::synth::{generate, write_synth, SynthSpec, TAXONOMY};

fn main() -> sits_align::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-synth".into()));
    let spec = SynthSpec::default();
    let data = generate(&spec)?;
    let paths = write_synth(&out, &data)?;

    let train = load_dataset(&paths.train_manifest)?;
    let test = load_dataset(&paths.test_manifest)?;
    println!("{} train / {} test sites, {} classes", train.len(), test.len(), spec.n_classes);
    let cube = &train.cubes()[0];
    println!("cube shape T={} C={} H={} W={}, months {:?}", cube.timesteps(), cube.bands(), cube.height(), cube.width(), cube.months());
    println!("ground embedding width {}", train.ground()[0].width());
    println!("minimum class-mean gap by construction: {:.4}", spec.amplitude_gap());

    let mut max_cos: f64 = -1.0;
    for (i, a) in data.prototypes.iter().enumerate() {
        for b in &data.prototypes[i + 1..] {
            max_cos = max_cos.max(dot(a, b));
        }
    }
    println!("largest cosine between class prototypes: {max_cos:.4}");

    for style in PROMPT_STYLES {
        let t = load_prompt_table(paths.prompt_dir.join(format!("prompts_{TAXONOMY}.manifest")), style)?;
        println!("{style:>11} prompts: {} per class", t.prompts[0].len());
    }
    println!("written under {}", out.display());
    Ok(())
}
