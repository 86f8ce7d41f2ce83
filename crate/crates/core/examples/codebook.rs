//! Discrete polarforming codebooks and nearest-codeword projection.

use polarsim::codebook::Codebook;
use polarsim::C64;

fn main() -> polarsim::Result<()> {
    let cb = Codebook::new(1, 3)?;
    println!("amplitudes {:?}", cb.amplitudes());
    println!(
        "phases (deg) {:?}",
        cb.phases().iter().map(|p| p.to_degrees()).collect::<Vec<_>>()
    );
    for x in [C64::new(0.9, 0.1), C64::new(-0.2, 0.3), C64::new(0.0, -1.4)] {
        let q = cb.project(x);
        println!("{x:.2} -> {q:.3} (|e| = {:.3})", (q - x).norm());
    }
    Ok(())
}
