//! Uniform planar array layout in the yz-plane.
//!
//! Element `m` sits at `(k_y, k_z) = (floor(m / m_z) d_y, (m mod m_z) d_z)`, so
//! element 0 is the reference at the origin and the z-index runs fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound on `-2 φ̃ / r` under which the Fresnel phase is considered accurate.
pub const FRESNEL_VALIDITY_RATIO: f64 = 0.1745;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    m_y: usize,
    m_z: usize,
    d_y: f64,
    d_z: f64,
    wavelength: f64,
}

/// Distances delimiting the radiative near-field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldBoundaries {
    /// `2Δ`: below this the phase-only model is not valid.
    pub d_b: f64,
    /// Fraunhofer array distance `2Δ²/λ`.
    pub d_fa: f64,
}

impl ArrayGeometry {
    pub fn new(m_y: usize, m_z: usize, d_y: f64, d_z: f64, wavelength: f64) -> Result<Self> {
        if m_y == 0 {
            return Err(Error::config("geometry.m_y", "must be at least 1"));
        }
        if m_z == 0 {
            return Err(Error::config("geometry.m_z", "must be at least 1"));
        }
        if !(d_y > 0.0 && d_y.is_finite()) {
            return Err(Error::config("geometry.d_y", "spacing must be positive"));
        }
        if !(d_z > 0.0 && d_z.is_finite()) {
            return Err(Error::config("geometry.d_z", "spacing must be positive"));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::config("geometry.wavelength", "must be positive"));
        }
        Ok(Self {
            m_y,
            m_z,
            d_y,
            d_z,
            wavelength,
        })
    }

    /// Array with `λ/2` spacing in both dimensions.
    pub fn half_wavelength(m_y: usize, m_z: usize, wavelength: f64) -> Result<Self> {
        Self::new(m_y, m_z, wavelength / 2.0, wavelength / 2.0, wavelength)
    }

    pub fn m_y(&self) -> usize {
        self.m_y
    }

    pub fn m_z(&self) -> usize {
        self.m_z
    }

    pub fn d_y(&self) -> f64 {
        self.d_y
    }

    pub fn d_z(&self) -> f64 {
        self.d_z
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// `2π/λ`.
    pub fn wavenumber(&self) -> f64 {
        std::f64::consts::TAU / self.wavelength
    }

    pub fn num_elements(&self) -> usize {
        self.m_y * self.m_z
    }

    /// Cartesian offsets `(k_y, k_z)` of element `m`.
    pub fn element_position(&self, m: usize) -> Result<(f64, f64)> {
        if m >= self.num_elements() {
            return Err(Error::domain(format!(
                "element index {m} out of range for {} elements",
                self.num_elements()
            )));
        }
        Ok(self.position_unchecked(m))
    }

    pub(crate) fn position_unchecked(&self, m: usize) -> (f64, f64) {
        let k_z = (m % self.m_z) as f64 * self.d_z;
        let k_y = (m / self.m_z) as f64 * self.d_y;
        (k_y, k_z)
    }

    /// Positions of all elements in index order.
    pub fn positions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.num_elements()).map(|m| self.position_unchecked(m))
    }

    /// Maximum linear dimension Δ of the rectangular layout (its diagonal).
    pub fn aperture(&self) -> f64 {
        let ly = (self.m_y - 1) as f64 * self.d_y;
        let lz = (self.m_z - 1) as f64 * self.d_z;
        ly.hypot(lz)
    }

    pub fn field_boundaries(&self) -> FieldBoundaries {
        let delta = self.aperture();
        FieldBoundaries {
            d_b: 2.0 * delta,
            d_fa: 2.0 * delta * delta / self.wavelength,
        }
    }

    /// Smallest range at which the quadratic Fresnel term satisfies
    /// `(k_y² + k_z²) / r² ≤ 0.1745` for every element.
    pub fn fresnel_validity_radius(&self) -> f64 {
        self.aperture() / FRESNEL_VALIDITY_RATIO.sqrt()
    }
}
