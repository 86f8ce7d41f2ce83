//! Polarformed channel of one user seen by a rotated subarray.

use nalgebra::{Vector2, Vector3};
use polarsim::channel::{
    dual_pol_response, polarformed_channel, unpolarformed_los_channel, GainPattern, PhysicalConstants, UserState,
};
use polarsim::codebook::TRANSMIT_SCALE;
use polarsim::geometry::{local_direction, RotationAngles, SubarrayLayout, SubarrayPose};
use polarsim::C64;

fn main() -> polarsim::Result<()> {
    let lambda = 0.0125;
    let consts = PhysicalConstants {
        lambda,
        epsilon0: PhysicalConstants::friis_epsilon0(lambda),
        sigma2: 1e-12,
        zeta: 1.0,
    };
    let layout = SubarrayLayout::half_wavelength_upa(4, lambda)?;
    let pose = SubarrayPose::new(
        Vector3::new(0.0, 0.0, 0.5),
        RotationAngles::facing(&Vector3::new(1.0, 1.0, 0.2), 0.3),
    );
    let user = UserState::at_position(&Vector3::new(60.0, 45.0, 10.0), RotationAngles::new(0.2, 0.0, 1.0))?;

    let (theta, phi) = local_direction(&pose.u, &user.direction());
    println!(
        "user at {:.1} m, local direction ({:.1}, {:.1}) deg",
        user.distance,
        theta.to_degrees(),
        phi.to_degrees()
    );

    let h = unpolarformed_los_channel(&user, &pose, &layout, &consts, &GainPattern::THREE_GPP)?;
    let a = dual_pol_response(&pose.u, &user.rotation, user.theta, user.phi).a_complex();
    let one = C64::new(1.0, 0.0);
    for (name, w) in [
        ("V", Vector2::new(one, C64::new(0.0, 0.0))),
        ("H", Vector2::new(C64::new(0.0, 0.0), one)),
    ] {
        let hw = polarformed_channel(
            &h,
            &a,
            &Vector2::new(one, C64::new(0.0, 0.0)),
            &(w * C64::from(TRANSMIT_SCALE)),
        );
        println!("BS {name} -> user V: |h|^2 = {:.3e}", hw.norm_squared());
    }
    Ok(())
}
