//! Polarforming and precoder design for one coherence interval.

use nalgebra::Vector3;
use polarsim::channel::{GainPattern, PhysicalConstants, UserState};
use polarsim::codebook::Codebook;
use polarsim::fast_opt::{pdd_solve, FastInstance, PddConfig};
use polarsim::geometry::{RotationAngles, SubarrayLayout, SubarrayPose};
use polarsim::harness::schemes::mrt_rates;

fn main() -> polarsim::Result<()> {
    let lambda = 0.0125;
    let mut consts = PhysicalConstants {
        lambda,
        epsilon0: PhysicalConstants::friis_epsilon0(lambda),
        sigma2: 1.0,
        zeta: 1.0,
    };
    consts.sigma2 = consts.path_loss(200.0) / 10.0;
    let layout = SubarrayLayout::half_wavelength_upa(2, lambda)?;
    let poses: Vec<SubarrayPose> = [Vector3::x(), Vector3::y(), -Vector3::x(), -Vector3::y()]
        .iter()
        .map(|n| SubarrayPose::new(n * 0.25, RotationAngles::facing(n, 0.0)))
        .collect();
    let users = [
        UserState::at_position(&Vector3::new(80.0, 20.0, 5.0), RotationAngles::new(0.3, 1.1, 0.0))?,
        UserState::at_position(&Vector3::new(-30.0, 120.0, -10.0), RotationAngles::new(2.0, 0.4, 5.0))?,
        UserState::at_position(&Vector3::new(10.0, -60.0, 30.0), RotationAngles::new(4.0, 3.0, 1.0))?,
    ];
    let inst = FastInstance::from_geometry(&users, &poses, &layout, &consts, &GainPattern::THREE_GPP, vec![1.0; 3])?;
    let cb = Codebook::new(1, 3)?;
    let out = pdd_solve(&inst, &cb, &PddConfig::default())?;
    let d = &out.diagnostics;
    println!(
        "converged {} after {} outer / {} inner iterations",
        d.converged, d.outer_iterations, d.inner_sweeps
    );
    println!("rates {:.3?}, weighted sum {:.3}", d.rates, d.weighted_rate);
    let base = mrt_rates(&inst, &out.state.w, &out.state.v);
    println!("same polarforming with MRT: {:.3}", inst.weighted_rate(&base));
    Ok(())
}
