//! Discrete polarforming amplitude/phase sets and projection onto them.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Gain applied to every BS (transmit) polarforming vector.
pub const TRANSMIT_SCALE: f64 = FRAC_1_SQRT_2;

/// Polarforming weights for the V and H elements of one antenna.
///
/// `coeffs` are the controllable entries `rho * exp(j psi)`; `as_vector`
/// returns the vector that actually multiplies the channel, which for BS
/// vectors carries the extra `1/sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarformingVector {
    coeffs: [C64; 2],
    scale: f64,
}

impl PolarformingVector {
    fn checked(coeffs: [C64; 2], scale: f64) -> Result<Self> {
        if coeffs.iter().any(|c| !(c.norm() <= 1.0 + 1e-12)) {
            return Err(Error::InvalidInput(format!(
                "polarforming entries must have modulus <= 1, got {coeffs:?}"
            )));
        }
        Ok(Self { coeffs, scale })
    }

    /// Receive (user-side) vector.
    pub fn receive(coeffs: [C64; 2]) -> Result<Self> {
        Self::checked(coeffs, 1.0)
    }

    /// Transmit (BS-side) vector, scaled by `1/sqrt(2)`.
    pub fn transmit(coeffs: [C64; 2]) -> Result<Self> {
        Self::checked(coeffs, TRANSMIT_SCALE)
    }

    /// Entries `rho_i * exp(-j psi_i)` from amplitudes and phase shifts.
    pub fn from_amplitude_phase(rho: [f64; 2], psi: [f64; 2], transmit: bool) -> Result<Self> {
        if rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidInput(format!(
                "amplitudes must lie in [0,1], got {rho:?}"
            )));
        }
        let c = [C64::from_polar(rho[0], -psi[0]), C64::from_polar(rho[1], -psi[1])];
        if transmit {
            Self::transmit(c)
        } else {
            Self::receive(c)
        }
    }

    pub fn coeffs(&self) -> [C64; 2] {
        self.coeffs
    }

    pub fn is_transmit(&self) -> bool {
        self.scale != 1.0
    }

    pub fn as_vector(&self) -> Vector2<C64> {
        Vector2::new(self.coeffs[0], self.coeffs[1]) * C64::from(self.scale)
    }
}

/// Discrete amplitude and phase sets for `Q_rho` / `Q_theta` control bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    amp_bits: u32,
    phase_bits: u32,
    phases: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl Codebook {
    /// `2^phase_bits` phases spaced evenly over `[0, 2pi)` and amplitudes
    /// `{i / 2^amp_bits : i = 1..=2^amp_bits}`.
    pub fn new(amp_bits: u32, phase_bits: u32) -> Result<Self> {
        if amp_bits > 16 || phase_bits > 16 {
            return Err(Error::InvalidInput(format!(
                "codebook bits ({amp_bits}, {phase_bits}) exceed 16"
            )));
        }
        let d = 1usize << phase_bits;
        let a = 1usize << amp_bits;
        let phases = (0..d).map(|i| TAU * i as f64 / d as f64).collect();
        let amplitudes = (1..=a).map(|i| i as f64 / a as f64).collect();
        Ok(Self {
            amp_bits,
            phase_bits,
            phases,
            amplitudes,
        })
    }

    pub fn amp_bits(&self) -> u32 {
        self.amp_bits
    }

    pub fn phase_bits(&self) -> u32 {
        self.phase_bits
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// All codewords, phase-major.
    pub fn codewords(&self) -> impl Iterator<Item = C64> + '_ {
        self.phases
            .iter()
            .flat_map(move |&p| self.amplitudes.iter().map(move |&a| C64::from_polar(a, p)))
    }

    /// Two-stage projection: nearest phase in circular distance, then the
    /// amplitude closest to `x` along that phase.
    ///
    /// Phase ties go to the smaller phase and amplitude ties to the larger
    /// amplitude. `x = 0` maps to the smallest amplitude at phase 0.
    pub fn project(&self, x: C64) -> C64 {
        let arg = if x == C64::new(0.0, 0.0) {
            0.0
        } else {
            x.arg().rem_euclid(TAU)
        };
        let d = self.phases.len();
        let step = TAU / d as f64;
        // phases[i] = i * step; candidates are the two neighbours of arg
        let lo = ((arg / step).floor() as usize).min(d - 1);
        let hi = (lo + 1) % d;
        let dist = |p: f64| {
            let r = (arg - p).rem_euclid(TAU);
            r.min(TAU - r)
        };
        let (dl, dh) = (dist(self.phases[lo]), dist(self.phases[hi]));
        let phase = if dh < dl || (dh == dl && self.phases[hi] < self.phases[lo]) {
            self.phases[hi]
        } else {
            self.phases[lo]
        };

        let target = x.norm() * (arg - phase).cos();
        let mut best = self.amplitudes[0];
        let mut best_d = (best - target).abs();
        for &a in &self.amplitudes[1..] {
            let da = (a - target).abs();
            if da <= best_d {
                best = a;
                best_d = da;
            }
        }
        C64::from_polar(best, phase)
    }

    /// Exhaustive nearest codeword over the full phase x amplitude grid.
    pub fn project_exhaustive(&self, x: C64) -> C64 {
        let mut best = C64::new(0.0, 0.0);
        let mut best_d = f64::INFINITY;
        for c in self.codewords() {
            let d = (c - x).norm_sqr();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    pub fn project_vector(&self, x: &Vector2<C64>) -> Vector2<C64> {
        x.map(|e| self.project(e))
    }

    pub fn contains(&self, x: C64) -> bool {
        self.codewords().any(|c| (c - x).norm() < 1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn degenerate_amplitude_set() {
        let cb = Codebook::new(0, 1).unwrap();
        assert_eq!(cb.amplitudes(), &[1.0]);
        assert_eq!(cb.phases(), &[0.0, PI]);

        let cb = Codebook::new(1, 2).unwrap();
        assert_eq!(cb.amplitudes(), &[0.5, 1.0]);
        assert_eq!(cb.phases(), &[0.0, PI / 2.0, PI, 3.0 * PI / 2.0]);

        let cb = Codebook::new(0, 0).unwrap();
        assert_eq!(cb.codewords().collect::<Vec<_>>(), vec![C64::new(1.0, 0.0)]);
    }

    #[test]
    fn projects_to_nearest_phase() {
        let cb = Codebook::new(0, 1).unwrap();
        let p = cb.project(C64::from_polar(0.9, 0.1));
        assert_abs_diff_eq!(p.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.im, 0.0, epsilon = 1e-15);
        let p = cb.project(C64::new(-1.0, 0.0));
        assert_abs_diff_eq!(p.re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tie_breaks() {
        // arg exactly between 0 and pi/2 -> smaller phase
        let cb = Codebook::new(0, 2).unwrap();
        let p = cb.project(C64::from_polar(1.0, PI / 4.0));
        assert_abs_diff_eq!(p.arg(), 0.0, epsilon = 1e-15);
        // |x| = 0.75 between 0.5 and 1.0 -> larger amplitude
        let cb = Codebook::new(1, 0).unwrap();
        assert_abs_diff_eq!(cb.project(C64::new(0.75, 0.0)).re, 1.0, epsilon = 1e-15);
        // zero input
        let cb = Codebook::new(2, 3).unwrap();
        assert_eq!(cb.project(C64::new(0.0, 0.0)), C64::new(0.25, 0.0));
    }

    #[test]
    fn polarforming_vector_scaling() {
        let one = C64::new(1.0, 0.0);
        let v = PolarformingVector::transmit([one, one]).unwrap();
        assert_abs_diff_eq!(v.as_vector()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        let w = PolarformingVector::receive([one, one]).unwrap();
        assert_eq!(w.as_vector()[1], one);
        assert!(PolarformingVector::receive([C64::new(1.5, 0.0), one]).is_err());
        let a = PolarformingVector::from_amplitude_phase([0.5, 1.0], [PI / 2.0, 0.0], false).unwrap();
        assert_abs_diff_eq!(a.coeffs()[0].im, -0.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn two_stage_matches_exhaustive(re in -1.5..1.5f64, im in -1.5..1.5f64, qa in 0u32..3, qp in 0u32..3) {
            let cb = Codebook::new(qa, qp).unwrap();
            let x = C64::new(re, im);
            let a = cb.project(x);
            let b = cb.project_exhaustive(x);
            prop_assert!(((a - x).norm() - (b - x).norm()).abs() < 1e-12);
            prop_assert!(a.norm() <= 1.0 + 1e-15);
        }

        #[test]
        fn projection_is_idempotent(qa in 0u32..4, qp in 0u32..5, idx in 0usize..1000) {
            let cb = Codebook::new(qa, qp).unwrap();
            let words: Vec<_> = cb.codewords().collect();
            let c = words[idx % words.len()];
            prop_assert!((cb.project(c) - c).norm() < 1e-12);
        }
    }
}
