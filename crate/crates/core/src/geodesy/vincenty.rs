use std::f64::consts::PI;

use super::GeoPoint;

/// WGS-84 semi-major axis in metres.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 semi-minor axis in metres.
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// Mean radius (2a + b) / 3, used by the spherical fallback.
pub const MEAN_RADIUS_M: f64 = (2.0 * WGS84_A + WGS84_B) / 3.0;

pub const MAX_ITERATIONS: usize = 200;
pub const CONVERGENCE_THRESHOLD: f64 = 1e-12;

/// A geodesic distance and whether it came from the spherical fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub km: f64,
    pub approximate: bool,
}

impl Distance {
    pub const ZERO: Distance = Distance { km: 0.0, approximate: false };
}

/// Inverse geodesic distance on the WGS-84 ellipsoid.
///
/// Points are put in a canonical order first, so the result is bit-for-bit
/// symmetric. When the λ iteration does not settle within
/// [`MAX_ITERATIONS`] (near-antipodal pairs) the great-circle distance on the
/// mean sphere is returned with `approximate` set.
pub fn vincenty_distance(a: GeoPoint, b: GeoPoint) -> Distance {
    if a == b {
        return Distance::ZERO;
    }
    let (p, q) = if (a.latitude(), a.longitude()) <= (b.latitude(), b.longitude()) { (a, b) } else { (b, a) };
    match vincenty_inverse_m(p, q) {
        Some(metres) => Distance { km: metres / 1000.0, approximate: false },
        None => Distance { km: great_circle_m(p, q) / 1000.0, approximate: true },
    }
}

/// Returns `None` when the iteration fails to converge.
fn vincenty_inverse_m(p: GeoPoint, q: GeoPoint) -> Option<f64> {
    let f = WGS84_F;
    let mut big_l = (q.longitude() - p.longitude()).to_radians();
    if big_l > PI {
        big_l -= 2.0 * PI;
    } else if big_l < -PI {
        big_l += 2.0 * PI;
    }
    let u1 = ((1.0 - f) * p.latitude().to_radians().tan()).atan();
    let u2 = ((1.0 - f) * q.latitude().to_radians().tan()).atan();
    let (sin_u1, cos_u1) = u1.sin_cos();
    let (sin_u2, cos_u2) = u2.sin_cos();

    let mut lambda = big_l;
    let mut converged = false;
    let (mut sin_sigma, mut cos_sigma, mut sigma) = (0.0, 0.0, 0.0);
    let (mut cos_sq_alpha, mut cos_2sigma_m) = (0.0, 0.0);

    for _ in 0..MAX_ITERATIONS {
        let (sin_lambda, cos_lambda) = lambda.sin_cos();
        let t1 = cos_u2 * sin_lambda;
        let t2 = cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda;
        sin_sigma = (t1 * t1 + t2 * t2).sqrt();
        if sin_sigma == 0.0 {
            // coincident after reduction (e.g. both at a pole)
            return Some(0.0);
        }
        cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lambda;
        sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cos_u1 * cos_u2 * sin_lambda / sin_sigma;
        cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
        // equatorial lines: cos²α = 0
        cos_2sigma_m =
            if cos_sq_alpha != 0.0 { cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha } else { 0.0 };
        let c = f / 16.0 * cos_sq_alpha * (4.0 + f * (4.0 - 3.0 * cos_sq_alpha));
        let previous = lambda;
        lambda = big_l
            + (1.0 - c)
                * f
                * sin_alpha
                * (sigma
                    + c * sin_sigma
                        * (cos_2sigma_m + c * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)));
        if !lambda.is_finite() || lambda.abs() > PI {
            return None;
        }
        if (lambda - previous).abs() < CONVERGENCE_THRESHOLD {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }

    let u_sq = cos_sq_alpha * (WGS84_A * WGS84_A - WGS84_B * WGS84_B) / (WGS84_B * WGS84_B);
    let big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
    let big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
    let delta_sigma = big_b
        * sin_sigma
        * (cos_2sigma_m
            + big_b / 4.0
                * (cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)
                    - big_b / 6.0
                        * cos_2sigma_m
                        * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                        * (-3.0 + 4.0 * cos_2sigma_m * cos_2sigma_m)));
    let s = WGS84_B * big_a * (sigma - delta_sigma);
    s.is_finite().then_some(s)
}

/// Haversine distance on the mean sphere, in metres.
pub fn great_circle_m(p: GeoPoint, q: GeoPoint) -> f64 {
    let (phi1, phi2) = (p.latitude().to_radians(), q.latitude().to_radians());
    let d_phi = phi2 - phi1;
    let d_lambda = (q.longitude() - p.longitude()).to_radians();
    let h = (d_phi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (d_lambda / 2.0).sin().powi(2);
    2.0 * MEAN_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn coincident_points_are_zero() {
        let d = vincenty_distance(pt(51.5074, -0.1278), pt(51.5074, -0.1278));
        assert_eq!(d, Distance::ZERO);
    }

    #[test]
    fn london_paris() {
        // geographiclib (Karney) gives 343.92312 km for this pair
        let d = vincenty_distance(pt(51.5074, -0.1278), pt(48.8566, 2.3522));
        assert!(!d.approximate);
        assert!((d.km - 343.923_12).abs() < 1e-4, "{}", d.km);
    }

    #[test]
    fn exactly_symmetric() {
        let a = pt(-33.4489, -70.6693);
        let b = pt(35.6762, 139.6503);
        assert_eq!(vincenty_distance(a, b), vincenty_distance(b, a));
    }

    #[test]
    fn equatorial_line() {
        // along the equator the geodesic is the equator itself: a * Δλ
        let d = vincenty_distance(pt(0.0, 0.0), pt(0.0, 10.0));
        let expected = WGS84_A * 10f64.to_radians() / 1000.0;
        assert!((d.km - expected).abs() < 1e-6);
    }

    #[test]
    fn nearly_antipodal_falls_back() {
        let d = vincenty_distance(pt(0.0, 0.0), pt(0.5, 179.7));
        assert!(d.approximate);
        assert!(d.km.is_finite() && d.km > 19_900.0 && d.km < 20_050.0, "{}", d.km);
    }

    #[test]
    fn poles_with_different_longitudes_coincide() {
        let d = vincenty_distance(pt(90.0, 10.0), pt(90.0, -120.0));
        assert!(d.km.abs() < 1e-9);
    }
}
