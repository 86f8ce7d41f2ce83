//! Subarray position and rotation search against a PDD objective.

use polarsim::fast_opt::PddConfig;
use polarsim::harness::schemes::{LinkModel, PddObjective};
use polarsim::harness::{generate_scenario, ScenarioConfig};
use polarsim::slow_opt::{rs_pso_solve, PsoConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> polarsim::Result<()> {
    let cfg = ScenarioConfig {
        subarrays: 4,
        antennas_per_subarray: 2,
        users: 4,
        ..ScenarioConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = generate_scenario(&cfg, &mut rng)?;
    let link = LinkModel {
        layout: &s.layout,
        consts: &s.consts,
        gain: &s.config.gain,
        weights: &s.weights,
    };
    let obj = PddObjective {
        link,
        codebook: &s.codebook,
        cfg: PddConfig::cheap(),
    };
    let out = rs_pso_solve(&s.space, &PsoConfig::default(), &s.users, &obj, &mut rng)?;
    println!("global best per iteration: {:.3?}", out.trace);
    for (b, p) in out.best.iter().enumerate() {
        let n = p.normal();
        println!(
            "subarray {b}: q = [{:+.3}, {:+.3}, {:+.3}] m, normal = [{:+.2}, {:+.2}, {:+.2}]",
            p.q.x, p.q.y, p.q.z, n.x, n.y, n.z
        );
    }
    println!("violations {:?}", out.violations);
    Ok(())
}
