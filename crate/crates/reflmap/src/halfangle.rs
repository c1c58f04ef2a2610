//! Half/difference-angle parameterization of isotropic BRDFs.
//!
//! Uses the convention of the MERL BRDF database: the half vector of
//! `(incoming, outgoing)` gives `(theta_h, phi_h)`, the incoming direction
//! expressed in the half-vector frame gives `(theta_d, phi_d)`. Isotropy
//! drops `phi_h`, reciprocity folds `phi_d` into `[0, pi)`.
//!
//! All directions live in the local shading frame with the normal at
//! `(0, 0, 1)` and must be in the upper hemisphere.

use crate::vec3::{add, dot, normalize, scale, sub, Vec3};
use crate::{Error, Result};

use std::f64::consts::{FRAC_PI_2, PI};

/// Half/difference angles of a direction pair. `phi_d` is folded into `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfDiffAngles {
    pub theta_h: f64,
    pub theta_d: f64,
    pub phi_d: f64,
}

/// Rodrigues rotation of `v` by `angle` around unit `axis`.
fn rotate(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let (sin_a, cos_a) = angle.sin_cos();
    let parallel = scale(axis, dot(axis, v) * (1.0 - cos_a));
    let ortho = scale(v, cos_a);
    let swept = scale(crate::vec3::cross(axis, v), sin_a);
    add(add(ortho, parallel), swept)
}

const NORMAL: Vec3 = [0.0, 0.0, 1.0];
const BINORMAL: Vec3 = [0.0, 1.0, 0.0];

/// Converts an (incoming, outgoing) direction pair into half/difference angles.
///
/// Fails if either direction points below the horizon.
pub fn to_half_diff(incoming: Vec3, outgoing: Vec3) -> Result<HalfDiffAngles> {
    if incoming[2] < 0.0 || outgoing[2] < 0.0 {
        return Err(Error::Argument(
            "direction below the local horizon".into(),
        ));
    }
    let half = add(incoming, outgoing);
    if dot(half, half) < 1e-24 {
        // Degenerate pair (incoming opposite outgoing); treat as grazing.
        return Ok(HalfDiffAngles {
            theta_h: FRAC_PI_2,
            theta_d: FRAC_PI_2,
            phi_d: 0.0,
        });
    }
    let half = normalize(half);
    let theta_h = half[2].clamp(-1.0, 1.0).acos();
    let phi_h = half[1].atan2(half[0]);

    let diff = rotate(rotate(incoming, NORMAL, -phi_h), BINORMAL, -theta_h);
    let theta_d = diff[2].clamp(-1.0, 1.0).acos();
    let mut phi_d = diff[1].atan2(diff[0]);
    // Reciprocity: the table only stores phi_d in [0, pi).
    if phi_d < 0.0 {
        phi_d += PI;
    }
    if phi_d >= PI {
        phi_d -= PI;
    }
    Ok(HalfDiffAngles {
        theta_h,
        theta_d,
        phi_d,
    })
}

/// Reconstructs a direction pair from half/difference angles, placing the
/// half vector in the x-z plane (`phi_h = 0`; any choice is equivalent for
/// isotropic BRDFs).
pub fn from_half_diff(angles: HalfDiffAngles) -> (Vec3, Vec3) {
    let HalfDiffAngles {
        theta_h,
        theta_d,
        phi_d,
    } = angles;
    let half = [theta_h.sin(), 0.0, theta_h.cos()];
    let diff = [
        theta_d.sin() * phi_d.cos(),
        theta_d.sin() * phi_d.sin(),
        theta_d.cos(),
    ];
    let incoming = rotate(rotate(diff, BINORMAL, theta_h), NORMAL, 0.0);
    // Outgoing is the mirror of incoming about the half vector.
    let outgoing = sub(scale(half, 2.0 * dot(incoming, half)), incoming);
    (incoming, outgoing)
}

/// Maps `theta_h` to a bin index with the square-root warp used by the MERL
/// tabulation (denser bins near the specular peak).
pub fn theta_h_index(theta_h: f64, res: usize) -> usize {
    if theta_h <= 0.0 {
        return 0;
    }
    let idx = (theta_h / FRAC_PI_2).sqrt() * res as f64;
    (idx as usize).min(res - 1)
}

/// Bin center of `theta_h` bin `i` under the square-root warp.
pub fn theta_h_center(i: usize, res: usize) -> f64 {
    let t = (i as f64 + 0.5) / res as f64;
    t * t * FRAC_PI_2
}

pub fn theta_d_index(theta_d: f64, res: usize) -> usize {
    if theta_d <= 0.0 {
        return 0;
    }
    let idx = theta_d / FRAC_PI_2 * res as f64;
    (idx as usize).min(res - 1)
}

pub fn theta_d_center(i: usize, res: usize) -> f64 {
    (i as f64 + 0.5) / res as f64 * FRAC_PI_2
}

pub fn phi_d_index(phi_d: f64, res: usize) -> usize {
    if phi_d <= 0.0 {
        return 0;
    }
    let idx = phi_d / PI * res as f64;
    (idx as usize).min(res - 1)
}

pub fn phi_d_center(i: usize, res: usize) -> f64 {
    (i as f64 + 0.5) / res as f64 * PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spherical(theta: f64, phi: f64) -> Vec3 {
        [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
    }

    #[test]
    fn mirror_pair_has_zero_theta_h() {
        let wi = spherical(0.3, 0.0);
        let wo = spherical(0.3, PI);
        let a = to_half_diff(wi, wo).unwrap();
        assert_relative_eq!(a.theta_h, 0.0, epsilon = 1e-12);
        assert_relative_eq!(a.theta_d, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn retroreflective_pair_has_zero_theta_d() {
        let wi = spherical(0.4, 1.1);
        let a = to_half_diff(wi, wi).unwrap();
        assert_relative_eq!(a.theta_h, 0.4, epsilon = 1e-12);
        assert_relative_eq!(a.theta_d, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn swap_is_symmetric() {
        let wi = spherical(0.7, 0.3);
        let wo = spherical(0.2, 2.0);
        let a = to_half_diff(wi, wo).unwrap();
        let b = to_half_diff(wo, wi).unwrap();
        assert_relative_eq!(a.theta_h, b.theta_h, epsilon = 1e-12);
        assert_relative_eq!(a.theta_d, b.theta_d, epsilon = 1e-12);
        // phi_d flips sign under the swap and folds back into [0, pi).
        let diff = (a.phi_d - b.phi_d).abs();
        assert!(diff < 1e-9 || (diff - PI).abs() < 1e-9, "phi_d {} vs {}", a.phi_d, b.phi_d);
    }

    #[test]
    fn below_horizon_is_rejected() {
        let wi = [0.0, 0.0, -1.0];
        assert!(to_half_diff(wi, [0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn round_trip_through_directions() {
        let a = HalfDiffAngles {
            theta_h: 0.6,
            theta_d: 0.5,
            phi_d: 1.3,
        };
        let (wi, wo) = from_half_diff(a);
        assert_relative_eq!(crate::vec3::length(wi), 1.0, epsilon = 1e-12);
        assert_relative_eq!(crate::vec3::length(wo), 1.0, epsilon = 1e-12);
        let b = to_half_diff(wi, wo).unwrap();
        assert_relative_eq!(a.theta_h, b.theta_h, epsilon = 1e-9);
        assert_relative_eq!(a.theta_d, b.theta_d, epsilon = 1e-9);
        assert_relative_eq!(a.phi_d, b.phi_d, epsilon = 1e-9);
    }

    #[test]
    fn theta_h_warp_round_trips_bins() {
        for res in [16usize, 90] {
            for i in 0..res {
                let center = theta_h_center(i, res);
                assert_eq!(theta_h_index(center, res), i);
            }
        }
    }
}
