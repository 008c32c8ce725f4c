//! Temperature-based frequency governor.
//!
//! Below the nominal temperature the clock is raised to generate heat;
//! at or above it the clock is throttled. Both branches are linear in the
//! distance from the nominal point and meet continuously at `f_base`.

use crate::thermal::GpuProfile;

/// Frequency in MHz at the given temperature.
///
/// Temperatures outside `[t_min, t_max]` are clamped to the nearest bound
/// before evaluation; scenarios never leave that interval.
pub fn frequency(profile: &GpuProfile, temperature: f64) -> f64 {
    let t = temperature.clamp(profile.t_min, profile.t_max);
    if t < profile.t_nominal {
        let scale = (profile.t_nominal - t) / (profile.t_nominal - profile.t_min);
        profile.f_base_mhz * (1.0 + profile.gamma * scale)
    } else {
        let scale = (t - profile.t_nominal) / (profile.t_max - profile.t_nominal);
        profile.f_base_mhz * (1.0 - profile.alpha * scale)
    }
}

/// Frequency as a fraction of `f_base`; `[1 - alpha, 1 + gamma]` after
/// clamping. This ratio drives the degraded executor's fault paths.
pub fn frequency_ratio(profile: &GpuProfile, temperature: f64) -> f64 {
    frequency(profile, temperature) / profile.f_base_mhz
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> GpuProfile {
        GpuProfile::rtx4090d()
    }

    #[test]
    fn nominal_gives_exactly_f_base() {
        let p = profile();
        assert_eq!(frequency(&p, p.t_nominal), p.f_base_mhz);
        assert_eq!(frequency_ratio(&p, p.t_nominal), 1.0);
    }

    #[test]
    fn extremes_collapse_to_coefficients() {
        let p = profile();
        assert_eq!(frequency(&p, p.t_max), p.f_base_mhz * (1.0 - p.alpha));
        assert_eq!(frequency(&p, p.t_min), p.f_base_mhz * (1.0 + p.gamma));
        assert_eq!(frequency_ratio(&p, p.t_max), 1.0 - p.alpha);
        assert_eq!(frequency_ratio(&p, p.t_min), 1.0 + p.gamma);
    }

    #[test]
    fn cold_branch_matches_scalar_evaluation() {
        // 1000 * (1 + 0.05 * (40 - 15) / 80) = 1015.625, checked against an
        // independent extended-precision evaluation of the piecewise formula.
        let p = GpuProfile {
            f_base_mhz: 1000.0,
            ..profile()
        };
        let f = frequency(&p, 15.0);
        assert!((f - 1015.625).abs() < 1e-9, "got {f}");
    }

    #[test]
    fn clamps_out_of_range_temperatures() {
        let p = profile();
        assert_eq!(frequency(&p, -200.0), frequency(&p, p.t_min));
        assert_eq!(frequency(&p, 500.0), frequency(&p, p.t_max));
    }

    #[test]
    fn continuous_at_nominal() {
        let p = profile();
        for eps in [1e-3, 1e-6, 1e-9] {
            let below = frequency(&p, p.t_nominal - eps);
            let above = frequency(&p, p.t_nominal + eps);
            assert!((below - above).abs() < p.f_base_mhz * eps);
        }
    }

    #[test]
    fn nonincreasing_over_operating_range() {
        let p = profile();
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let t = p.t_min + (p.t_max - p.t_min) * i as f64 / 1000.0;
            let f = frequency(&p, t);
            assert!(f <= prev + 1e-12);
            assert!(f >= p.f_base_mhz * (1.0 - p.alpha) - 1e-9);
            assert!(f <= p.f_base_mhz * (1.0 + p.gamma) + 1e-9);
            prev = f;
        }
    }
}
