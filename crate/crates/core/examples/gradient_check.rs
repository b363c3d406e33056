//! Central-difference check of every analytic gradient in the full loss
//! (encoder, attention pool, temperature) on the tiny configuration.
//!
//! cargo run --release --example gradient_check

use std::time::Instant;

use sits_align::encoder::EncoderConfig;
use sits_align::train::grad_check_model;

fn main() -> sits_align::Result<()> {
    let t = Instant::now();
    let report = grad_check_model(&EncoderConfig::tiny(), 0)?;
    for (name, err) in &report.per_param {
        println!("{name:<28} {err:.3e}");
    }
    println!("{:<28} {:.3e}", "attention pool (alone)", report.pool_only);
    let (worst, err) = report.worst().expect("parameters");
    println!("max relative error {err:.3e} at {worst}, {:.1?}", t.elapsed());
    Ok(())
}
