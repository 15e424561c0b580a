//! Array responses and the line-of-sight multi-user OFDM channel.
//!
//! A point `(φ, θ, r)` maps to Cartesian `(r cosφ cosθ, r sinφ cosθ, r sinθ)`;
//! the array lies in the yz-plane with element 0 at the origin. All phases are
//! relative distances in meters, converted to radians by `2π/λ`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::{CMatrix, C64};

/// Location seen from the reference element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint {
    azimuth: f64,
    elevation: f64,
    /// `None` marks a far-field point.
    range: Option<f64>,
}

fn check_angle(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value.abs() > FRAC_PI_2 + 1e-12 {
        return Err(Error::domain(format!(
            "{name} {value} rad outside [-π/2, π/2]"
        )));
    }
    Ok(())
}

impl SphericalPoint {
    /// Finite-range point; angles in radians.
    pub fn near(azimuth: f64, elevation: f64, range: f64) -> Result<Self> {
        check_angle("azimuth", azimuth)?;
        check_angle("elevation", elevation)?;
        if !(range > 0.0) || !range.is_finite() {
            return Err(Error::domain(format!("range {range} must be positive and finite")));
        }
        Ok(Self {
            azimuth,
            elevation,
            range: Some(range),
        })
    }

    pub fn far(azimuth: f64, elevation: f64) -> Result<Self> {
        check_angle("azimuth", azimuth)?;
        check_angle("elevation", elevation)?;
        Ok(Self {
            azimuth,
            elevation,
            range: None,
        })
    }

    /// Like [`near`](Self::near) / [`far`](Self::far) with angles in degrees.
    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64, range: Option<f64>) -> Result<Self> {
        match range {
            Some(r) => Self::near(azimuth_deg.to_radians(), elevation_deg.to_radians(), r),
            None => Self::far(azimuth_deg.to_radians(), elevation_deg.to_radians()),
        }
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn range(&self) -> Option<f64> {
        self.range
    }

    pub fn is_far_field(&self) -> bool {
        self.range.is_none()
    }

    /// `(sinθ, sinφ cosθ)`: the coefficients multiplying `k_z` and `k_y` in the phase.
    pub fn direction_cosines(&self) -> (f64, f64) {
        let (se, ce) = self.elevation.sin_cos();
        (se, self.azimuth.sin() * ce)
    }

    /// `1/r`, zero for far-field points.
    pub fn inverse_range(&self) -> f64 {
        self.range.map_or(0.0, |r| 1.0 / r)
    }

    pub fn with_range(&self, range: Option<f64>) -> Result<Self> {
        match range {
            Some(r) => Self::near(self.azimuth, self.elevation, r),
            None => Self::far(self.azimuth, self.elevation),
        }
    }
}

/// Which relative-distance expression the array response uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseModel {
    /// Euclidean element-to-point distance.
    Exact,
    /// Parabolic (first-order Taylor) wavefront; planar for far-field points.
    Fresnel,
}

/// `r − r_m` with the exact element distance `r_m`.
pub fn exact_relative_phase(geometry: &ArrayGeometry, m: usize, point: &SphericalPoint) -> Result<f64> {
    let Some(r) = point.range else {
        return Err(Error::domain("exact phase needs a finite range; use the far-field phase"));
    };
    let (ky, kz) = geometry.element_position(m)?;
    Ok(exact_phase_at(ky, kz, point, r))
}

fn exact_phase_at(ky: f64, kz: f64, point: &SphericalPoint, r: f64) -> f64 {
    let (uz, uy) = point.direction_cosines();
    let cross = 2.0 * r * (kz * uz + ky * uy);
    let rho2 = ky * ky + kz * kz;
    let rm = (r * r + rho2 - cross).max(0.0).sqrt();
    // r² − r_m² over r + r_m avoids cancellation at large r.
    (cross - rho2) / (r + rm)
}

/// Fresnel phase `k_z sinθ + k_y sinφ cosθ − (k_y² + k_z²)/(2r)`; the last term
/// is dropped for far-field points.
pub fn fresnel_relative_phase(geometry: &ArrayGeometry, m: usize, point: &SphericalPoint) -> Result<f64> {
    let (ky, kz) = geometry.element_position(m)?;
    Ok(fresnel_phase_at(ky, kz, point))
}

fn fresnel_phase_at(ky: f64, kz: f64, point: &SphericalPoint) -> f64 {
    let (uz, uy) = point.direction_cosines();
    kz * uz + ky * uy - (ky * ky + kz * kz) * point.inverse_range() / 2.0
}

/// Relative phases (meters) of every element under `model`.
pub fn relative_phases(geometry: &ArrayGeometry, point: &SphericalPoint, model: PhaseModel) -> Result<Vec<f64>> {
    match (model, point.range) {
        (PhaseModel::Exact, None) => Err(Error::domain(
            "exact array response needs a finite range",
        )),
        (PhaseModel::Exact, Some(r)) => Ok(geometry
            .positions()
            .map(|(ky, kz)| exact_phase_at(ky, kz, point, r))
            .collect()),
        (PhaseModel::Fresnel, _) => Ok(geometry
            .positions()
            .map(|(ky, kz)| fresnel_phase_at(ky, kz, point))
            .collect()),
    }
}

/// Array response `a(ψ)` with entries `exp(j 2π/λ φ_m)`.
pub fn array_response(geometry: &ArrayGeometry, point: &SphericalPoint, model: PhaseModel) -> Result<Vec<C64>> {
    let k = geometry.wavenumber();
    Ok(relative_phases(geometry, point, model)?
        .into_iter()
        .map(|phi| C64::from_polar(1.0, k * phi))
        .collect())
}

/// Exact response for finite-range points, planar response for far-field ones.
pub fn steering_vector(geometry: &ArrayGeometry, point: &SphericalPoint) -> Vec<C64> {
    let model = if point.is_far_field() {
        PhaseModel::Fresnel
    } else {
        PhaseModel::Exact
    };
    array_response(geometry, point, model).expect("model chosen to match the point")
}

/// Discrepancy between the exact and Fresnel phase over the aperture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FresnelDiagnostic {
    /// Largest phase error in radians.
    pub max_phase_error: f64,
    /// Largest distance error relative to the range.
    pub max_relative_distance_error: f64,
}

pub fn fresnel_diagnostic(geometry: &ArrayGeometry, point: &SphericalPoint) -> Result<FresnelDiagnostic> {
    let r = point
        .range
        .ok_or_else(|| Error::domain("Fresnel diagnostic needs a finite range"))?;
    let k = geometry.wavenumber();
    let mut max_err: f64 = 0.0;
    for (ky, kz) in geometry.positions() {
        let err = (exact_phase_at(ky, kz, point, r) - fresnel_phase_at(ky, kz, point)).abs();
        max_err = max_err.max(err);
    }
    Ok(FresnelDiagnostic {
        max_phase_error: k * max_err,
        max_relative_distance_error: max_err / r,
    })
}

/// Per-user line-of-sight parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserChannelParams {
    pub position: SphericalPoint,
    /// Complex path gain `g_k`.
    pub gain: C64,
    /// Normalized delay: the channel phase slope is `−2π τ` per subcarrier.
    pub delay: f64,
}

impl UserChannelParams {
    /// Unit gain, zero delay.
    pub fn unit(position: SphericalPoint) -> Self {
        Self {
            position,
            gain: C64::new(1.0, 0.0),
            delay: 0.0,
        }
    }
}

/// Factorized channel `Ĥ_ν = A F_ν`.
#[derive(Debug, Clone)]
pub struct LosChannel {
    steering: CMatrix,
    gains: Vec<C64>,
    delays: Vec<f64>,
}

impl LosChannel {
    pub fn new(users: &[UserChannelParams], geometry: &ArrayGeometry) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::domain("channel needs at least one user"));
        }
        if let Some(k) = users.iter().position(|u| u.gain.norm() == 0.0) {
            return Err(Error::domain(format!("user {k} has zero path gain")));
        }
        let m = geometry.num_elements();
        let columns: Vec<Vec<C64>> = users
            .iter()
            .map(|u| steering_vector(geometry, &u.position))
            .collect();
        let steering = CMatrix::from_fn(m, users.len(), |i, k| columns[k][i]);
        Ok(Self {
            steering,
            gains: users.iter().map(|u| u.gain).collect(),
            delays: users.iter().map(|u| u.delay).collect(),
        })
    }

    /// Steering matrix `A` (M × K).
    pub fn steering(&self) -> &CMatrix {
        &self.steering
    }

    pub fn num_users(&self) -> usize {
        self.gains.len()
    }

    /// Complex path gains `g_k`.
    pub fn gains(&self) -> &[C64] {
        &self.gains
    }

    pub fn num_antennas(&self) -> usize {
        self.steering.nrows()
    }

    /// Diagonal of `F_ν`: `g_k e^{−j2π τ_k ν}`.
    pub fn frequency_factors(&self, nu: usize) -> Vec<C64> {
        self.gains
            .iter()
            .zip(&self.delays)
            .map(|(g, tau)| g * C64::from_polar(1.0, -std::f64::consts::TAU * tau * nu as f64))
            .collect()
    }

    /// `Ĥ_ν` (M × K).
    pub fn matrix(&self, nu: usize) -> CMatrix {
        let f = self.frequency_factors(nu);
        let mut h = self.steering.clone();
        for (k, fk) in f.iter().enumerate() {
            for v in h.column_mut(k).iter_mut() {
                *v *= fk;
            }
        }
        h
    }
}

/// Channel matrix of `users` on subcarrier `nu`.
pub fn los_channel(users: &[UserChannelParams], geometry: &ArrayGeometry, nu: usize) -> Result<CMatrix> {
    Ok(LosChannel::new(users, geometry)?.matrix(nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deg;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn upa20() -> ArrayGeometry {
        ArrayGeometry::half_wavelength(20, 20, 0.1).unwrap()
    }

    #[test]
    fn point_construction_enforces_bounds() {
        assert!(SphericalPoint::near(0.0, 0.0, 0.0).is_err());
        assert!(SphericalPoint::near(2.0, 0.0, 1.0).is_err());
        assert!(SphericalPoint::far(0.0, -1.6).is_err());
        assert!(SphericalPoint::far(FRAC_PI_2, -FRAC_PI_2).is_ok());
        assert!(SphericalPoint::from_degrees(10.0, 5.0, None).unwrap().is_far_field());
    }

    #[test]
    fn reference_element_has_zero_phase() {
        let g = upa20();
        let p = SphericalPoint::near(0.3, -0.2, 7.0).unwrap();
        assert_eq!(exact_relative_phase(&g, 0, &p).unwrap(), 0.0);
        assert_eq!(fresnel_relative_phase(&g, 0, &p).unwrap(), 0.0);
    }

    #[test]
    fn exact_phase_broadside_offset_element() {
        let g = upa20();
        let p = SphericalPoint::near(0.0, 0.0, 20.0).unwrap();
        // Element 20 sits at (k_y, k_z) = (0.05, 0).
        let phi = exact_relative_phase(&g, 20, &p).unwrap();
        let expected = 20.0 - (400.0f64 + 0.0025).sqrt();
        assert_relative_eq!(phi, expected, max_relative = 1e-9);
        assert_relative_eq!(phi, -6.25e-5, max_relative = 1e-4);
    }

    #[test]
    fn exact_phase_rejects_far_field() {
        let g = upa20();
        let p = SphericalPoint::far(0.1, 0.0).unwrap();
        assert!(exact_relative_phase(&g, 3, &p).is_err());
        assert!(array_response(&g, &p, PhaseModel::Exact).is_err());
    }

    #[test]
    fn point_on_element_gives_full_range() {
        // Element 1 at (0, 0.05): the point (φ=0, θ=90°, r=0.05) coincides with it.
        let g = upa20();
        let p = SphericalPoint::near(0.0, FRAC_PI_2, 0.05).unwrap();
        assert_relative_eq!(exact_relative_phase(&g, 1, &p).unwrap(), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn fresnel_broadside_and_far_field_forms() {
        let g = upa20();
        let m = 47;
        let (ky, kz) = g.element_position(m).unwrap();
        let p = SphericalPoint::near(0.0, 0.0, 9.0).unwrap();
        assert_relative_eq!(
            fresnel_relative_phase(&g, m, &p).unwrap(),
            -(ky * ky + kz * kz) / 18.0,
            epsilon = 1e-15
        );
        let (az, el) = (deg(23.0), deg(-11.0));
        let ff = SphericalPoint::far(az, el).unwrap();
        assert_relative_eq!(
            fresnel_relative_phase(&g, m, &ff).unwrap(),
            kz * el.sin() + ky * az.sin() * el.cos(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn fresnel_error_shrinks_with_range() {
        let g = upa20();
        let mut last = f64::INFINITY;
        for r in [8.0, 16.0, 32.0, 64.0, 128.0] {
            let p = SphericalPoint::near(deg(15.0), deg(5.0), r).unwrap();
            let d = fresnel_diagnostic(&g, &p).unwrap();
            assert!(d.max_phase_error < last);
            last = d.max_phase_error;
        }
    }

    #[test]
    fn exact_converges_to_far_field_response() {
        let g = upa20();
        let r = 1e6 * g.field_boundaries().d_fa;
        let near = SphericalPoint::near(deg(31.0), deg(-12.0), r).unwrap();
        let far = SphericalPoint::far(deg(31.0), deg(-12.0)).unwrap();
        let a = array_response(&g, &near, PhaseModel::Exact).unwrap();
        let b = array_response(&g, &far, PhaseModel::Fresnel).unwrap();
        let worst = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x * y.conj()).arg().abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn los_channel_unit_user_equals_steering() {
        let g = upa20();
        let users = [UserChannelParams::unit(SphericalPoint::near(0.2, 0.1, 12.0).unwrap())];
        let h = los_channel(&users, &g, 5).unwrap();
        let a = steering_vector(&g, &users[0].position);
        for (x, y) in h.column(0).iter().zip(&a) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn los_channel_delay_wraps() {
        let g = ArrayGeometry::half_wavelength(4, 4, 0.1).unwrap();
        let mut user = UserChannelParams::unit(SphericalPoint::far(0.4, 0.0).unwrap());
        user.gain = C64::new(0.5, -0.25);
        user.delay = 0.5;
        let ch = LosChannel::new(&[user], &g).unwrap();
        let h = ch.matrix(2);
        for (x, a) in h.column(0).iter().zip(ch.steering().column(0).iter()) {
            assert!((x - user.gain * a).norm() < 1e-12);
        }
        // phase slope per subcarrier is −2πτ
        let f1 = ch.frequency_factors(1)[0];
        let f0 = ch.frequency_factors(0)[0];
        assert_relative_eq!((f1 / f0).arg().abs(), std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn distinct_far_field_users_are_not_parallel() {
        let g = upa20();
        let users: Vec<_> = [2.0, 20.0, 35.0]
            .iter()
            .map(|&a| UserChannelParams::unit(SphericalPoint::from_degrees(a, 0.0, None).unwrap()))
            .collect();
        let ch = LosChannel::new(&users, &g).unwrap();
        let a = ch.steering();
        let m = a.nrows() as f64;
        for i in 0..3 {
            for j in (i + 1)..3 {
                let ip = a.column(i).dotc(&a.column(j)).norm() / m;
                assert!(ip < 1.0 - 1e-6, "{i},{j}: {ip}");
            }
        }
    }

    proptest! {
        #[test]
        fn response_has_unit_modulus_and_norm_sqrt_m(
            az in -1.5f64..1.5, el in -1.5f64..1.5, r in 3.0f64..200.0, far in any::<bool>(),
        ) {
            let g = ArrayGeometry::half_wavelength(6, 5, 0.1).unwrap();
            let p = if far { SphericalPoint::far(az, el).unwrap() } else { SphericalPoint::near(az, el, r).unwrap() };
            let a = steering_vector(&g, &p);
            prop_assert_eq!(a[0], C64::new(1.0, 0.0));
            for v in &a {
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            }
            let norm: f64 = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((norm - 30f64.sqrt()).abs() < 1e-9);
        }

        #[test]
        fn fresnel_tracks_exact_to_second_order(
            az in -1.2f64..1.2, el in -1.2f64..1.2, m in 0usize..30,
        ) {
            let g = ArrayGeometry::half_wavelength(6, 5, 0.1).unwrap();
            let (ky, kz) = g.element_position(m).unwrap();
            let rho = ky.hypot(kz);
            for r in [10.0, 100.0, 1000.0] {
                let p = SphericalPoint::near(az, el, r).unwrap();
                let e = exact_relative_phase(&g, m, &p).unwrap();
                let f = fresnel_relative_phase(&g, m, &p).unwrap();
                // Neglected terms are O(ρ²/r).
                prop_assert!((e - f).abs() <= rho * rho / r + 1e-12);
            }
        }

        #[test]
        fn channel_is_linear_in_gain(re in -2.0f64..2.0, im in -2.0f64..2.0, nu in 0usize..64) {
            let g = ArrayGeometry::half_wavelength(3, 3, 0.1).unwrap();
            let pos = SphericalPoint::near(0.3, -0.1, 8.0).unwrap();
            let mut u = UserChannelParams::unit(pos);
            u.delay = 0.13;
            let h1 = los_channel(&[u], &g, nu).unwrap();
            u.gain = C64::new(re, im);
            prop_assume!(u.gain.norm() > 1e-6);
            let h2 = los_channel(&[u], &g, nu).unwrap();
            for (a, b) in h1.iter().zip(h2.iter()) {
                prop_assert!((a * u.gain - b).norm() < 1e-12);
            }
        }
    }
}
