//! One location interval of every scheme, from a TOML config.
//!
//! `cargo run --example two_timescale -- configs/desk.toml`

use polarsim::harness::{run_trial, Config, Scheme};

fn main() -> polarsim::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => Config::load(path.as_ref())?,
        None => Config::from_toml_str(
            "[scenario]\nsubarrays = 4\nantennas_per_subarray = 2\nusers = 4\n[sensing]\nslots = 8\n",
        )?,
    };
    let res = run_trial(&cfg, &Scheme::ALL, 0, 0)?;
    if let Some(s) = &res.sensing {
        println!("location errors [m]: {:.2?}", s.errors);
    }
    for r in &res.schemes {
        println!(
            "{:<18} weighted rate {:>7.3}  design {:.2} s",
            r.scheme.name(),
            r.mean_weighted_rate.unwrap_or(f64::NAN),
            r.timing.design_s
        );
    }
    Ok(())
}
