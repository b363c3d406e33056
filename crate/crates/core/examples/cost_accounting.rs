//! Parameter count and multiply-accumulate estimate of the satellite
//! encoder across patch sizes, against a 16.69 GMac image encoder.
//!
//! cargo run --release --example cost_accounting

use sits_align::cli::REFERENCE_GMAC;
use sits_align::encoder::{estimate_flops, param_count, param_shapes, EncoderConfig};

fn main() {
    let base = EncoderConfig::default();
    println!("default encoder: {} parameters", param_count(&base));
    let mut groups: Vec<(String, usize)> = Vec::new();
    for (name, dims) in param_shapes(&base) {
        let group = name.split('.').next().unwrap_or(&name).to_string();
        let n: usize = dims.iter().product();
        match groups.iter_mut().find(|(g, _)| *g == group) {
            Some((_, total)) => *total += n,
            None => groups.push((group, n)),
        }
    }
    for (g, n) in groups {
        println!("  {g:<16} {n:>9}");
    }
    println!("\npatch  params      GMac (T=12)  ratio to {REFERENCE_GMAC} GMac");
    for patch in [1, 3, 5, 9] {
        let c = EncoderConfig { patch, ..base.clone() };
        let macs = estimate_flops(&c, patch, 12) as f64;
        println!("{patch}x{patch}    {:<10}  {:<11.4}  {:.4}", param_count(&c), macs / 1e9, macs / (REFERENCE_GMAC * 1e9));
    }
}
