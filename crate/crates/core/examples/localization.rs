//! Pilot simulation, PARAFAC, MUSIC and range estimation for four users.

use polarsim::channel::{GainPattern, PhysicalConstants, UserState};
use polarsim::geometry::{RotationAngles, SubarrayLayout};
use polarsim::localization::{localize_users, position_errors, training_poses, LocalizationConfig, PilotPattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> polarsim::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lambda = 0.0125;
    let consts = PhysicalConstants {
        lambda,
        epsilon0: PhysicalConstants::friis_epsilon0(lambda),
        sigma2: 1.0,
        zeta: 1.0,
    };
    let users: Vec<UserState> = (0..4)
        .map(|_| {
            let theta = rng.random_range(-1.2..1.2);
            let phi = rng.random_range(-3.0..3.0);
            let rot = RotationAngles::new(
                rng.random_range(0.0..6.28),
                rng.random_range(0.0..6.28),
                rng.random_range(0.0..6.28),
            );
            UserState::new(theta, phi, rng.random_range(20.0..200.0), rot)
        })
        .collect::<Result<_, _>>()?;
    let pattern = PilotPattern::new(4, 8, 8, training_poses(8, 1.0))?;
    let layout = SubarrayLayout::half_wavelength_upa(4, lambda)?;
    let far = users.iter().map(|u| u.distance).fold(0.0, f64::max);
    for snr_db in [0.0, 10.0, 20.0] {
        let sigma2 = consts.path_loss(far) / 10f64.powf(snr_db / 10.0);
        let out = localize_users(
            &users,
            &pattern,
            &layout,
            &consts,
            &GainPattern::THREE_GPP,
            sigma2,
            &LocalizationConfig::default(),
            &mut rng,
        )?;
        let err = position_errors(&users, &out.users)?;
        println!("{snr_db:>4} dB: errors [m] {:.3?}", err);
    }
    Ok(())
}
