//! Closed-form focal points of the `(2p+1)`-th order distortion.
//!
//! The distortion term of index tuple `(k₀, …, k_{2p})` carries the phase
//! profile `Σ_i (−1)^i φ_m(user k_i)`. In the Fresnel regime its array-factor
//! maximum is the point whose direction cosines and inverse range are the
//! alternating sums of the users' ones. Far-field users contribute no `1/r`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::SphericalPoint;
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::waveform::RisConfig;

/// Angular tolerance of location matching, radians.
pub const ANGLE_TOLERANCE: f64 = 1e-9;
/// Relative range tolerance of location matching.
pub const RANGE_TOLERANCE: f64 = 1e-9;
/// Slack allowed on arcsin arguments before a point is deemed unphysical.
const DOMAIN_SLACK: f64 = 1e-12;

/// `(sinθ, sinφ cosθ, 1/r)` of a location; `1/r = 0` is the far field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalCoefficients {
    pub sin_elevation: f64,
    pub azimuth_cosine: f64,
    pub inverse_range: f64,
}

impl FocalCoefficients {
    pub fn from_point(p: &SphericalPoint) -> Self {
        let (sin_elevation, azimuth_cosine) = p.direction_cosines();
        Self {
            sin_elevation,
            azimuth_cosine,
            inverse_range: p.inverse_range(),
        }
    }

    /// Inverts the coefficients. Angles are `None` outside the arcsin domain
    /// or, for the azimuth, when `cosθ = 0`.
    pub fn resolve(&self) -> Resolved {
        let elevation = asin_checked(self.sin_elevation);
        let azimuth = elevation.and_then(|el| {
            let c = el.cos();
            if c <= DOMAIN_SLACK {
                None
            } else {
                asin_checked(self.azimuth_cosine / c)
            }
        });
        let range = (self.inverse_range != 0.0).then(|| self.inverse_range.recip());
        let physical = azimuth.is_some() && elevation.is_some() && range.is_none_or(|r| r > 0.0);
        Resolved {
            azimuth,
            elevation,
            range,
            physical,
        }
    }

    /// The location as a point, when physical.
    pub fn to_point(&self) -> Option<SphericalPoint> {
        let r = self.resolve();
        if !r.physical {
            return None;
        }
        let (az, el) = (r.azimuth?, r.elevation?);
        match r.range {
            Some(d) => SphericalPoint::near(az, el, d).ok(),
            None => SphericalPoint::far(az, el).ok(),
        }
    }
}

fn asin_checked(v: f64) -> Option<f64> {
    if !v.is_finite() || v.abs() > 1.0 + DOMAIN_SLACK {
        None
    } else {
        Some(v.clamp(-1.0, 1.0).asin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub azimuth: Option<f64>,
    pub elevation: Option<f64>,
    pub range: Option<f64>,
    pub physical: bool,
}

/// Anything with focal coefficients: user positions or effective RIS positions.
pub trait FocalInput {
    fn coefficients(&self) -> FocalCoefficients;
}

impl FocalInput for SphericalPoint {
    fn coefficients(&self) -> FocalCoefficients {
        FocalCoefficients::from_point(self)
    }
}

impl FocalInput for FocalCoefficients {
    fn coefficients(&self) -> FocalCoefficients {
        *self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FocalClass {
    P1,
    P2,
    P3,
    HigherOrder,
}

impl FocalClass {
    pub fn of(tuple: &[usize]) -> Self {
        if tuple.iter().all(|&k| k == tuple[0]) {
            FocalClass::P1
        } else if tuple.len() != 3 {
            FocalClass::HigherOrder
        } else if tuple[0] == tuple[2] {
            FocalClass::P2
        } else {
            FocalClass::P3
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocalPoint {
    /// Zero-based user indices `(k₀, …, k_{2p})`.
    pub tuple: Vec<usize>,
    pub order: usize,
    pub class: FocalClass,
    pub coefficients: FocalCoefficients,
    /// `None` when indeterminate.
    pub azimuth: Option<f64>,
    pub elevation: Option<f64>,
    /// `None` in the far field.
    pub range: Option<f64>,
    pub physical: bool,
}

impl FocalPoint {
    fn new(tuple: Vec<usize>, order: usize, coefficients: FocalCoefficients) -> Self {
        let r = coefficients.resolve();
        Self {
            class: FocalClass::of(&tuple),
            tuple,
            order,
            coefficients,
            azimuth: r.azimuth,
            elevation: r.elevation,
            range: r.range,
            physical: r.physical,
        }
    }

    pub fn location(&self) -> Option<SphericalPoint> {
        self.coefficients.to_point()
    }

    /// Same location within [`ANGLE_TOLERANCE`] and [`RANGE_TOLERANCE`].
    /// Points without resolved angles are compared on their coefficients.
    pub fn same_location(&self, other: &FocalPoint) -> bool {
        let ranges = match (self.range, other.range) {
            (None, None) => true,
            (Some(a), Some(b)) => (a - b).abs() <= RANGE_TOLERANCE * a.abs().max(b.abs()),
            _ => false,
        };
        match (self.azimuth, self.elevation, other.azimuth, other.elevation) {
            (Some(a1), Some(e1), Some(a2), Some(e2)) => {
                ranges && (a1 - a2).abs() <= ANGLE_TOLERANCE && (e1 - e2).abs() <= ANGLE_TOLERANCE
            }
            _ => {
                let (a, b) = (self.coefficients, other.coefficients);
                ranges
                    && (a.sin_elevation - b.sin_elevation).abs() <= ANGLE_TOLERANCE
                    && (a.azimuth_cosine - b.azimuth_cosine).abs() <= ANGLE_TOLERANCE
            }
        }
    }

    /// Mirror image `(−φ, −θ, r)`.
    pub fn negated(&self) -> Self {
        let c = self.coefficients;
        Self {
            coefficients: FocalCoefficients {
                sin_elevation: -c.sin_elevation,
                azimuth_cosine: -c.azimuth_cosine,
                inverse_range: c.inverse_range,
            },
            azimuth: self.azimuth.map(|v| -v),
            elevation: self.elevation.map(|v| -v),
            ..self.clone()
        }
    }

    pub fn record(&self) -> FocalRecord {
        FocalRecord {
            tuple: self.tuple.clone(),
            class: self.class,
            azimuth_deg: self.azimuth.map(f64::to_degrees),
            elevation_deg: self.elevation.map(f64::to_degrees),
            range_m: match self.range {
                Some(r) => RangeField::Meters(r),
                None => RangeField::Label("farfield".into()),
            },
            physical: self.physical,
        }
    }
}

/// Serialized form of a [`FocalPoint`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalRecord {
    pub tuple: Vec<usize>,
    pub class: FocalClass,
    pub azimuth_deg: Option<f64>,
    pub elevation_deg: Option<f64>,
    pub range_m: RangeField,
    pub physical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RangeField {
    Meters(f64),
    Label(String),
}

/// Combinatorial caps on [`predict`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationLimits {
    pub max_order: usize,
    pub max_users: usize,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            max_order: 2,
            max_users: 8,
        }
    }
}

/// One focal point per tuple in `{0..K}^{2p+1}`, in lexicographic order.
pub fn predict<U: FocalInput + Sync>(users: &[U], p: usize) -> Result<Vec<FocalPoint>> {
    predict_with_limits(users, p, EnumerationLimits::default())
}

pub fn predict_with_limits<U: FocalInput + Sync>(users: &[U], p: usize, limits: EnumerationLimits) -> Result<Vec<FocalPoint>> {
    let k = users.len();
    if k == 0 {
        return Err(Error::domain("focal prediction needs at least one user"));
    }
    if p == 0 {
        return Err(Error::domain("distortion order p must be at least 1"));
    }
    if p > limits.max_order || k > limits.max_users {
        return Err(Error::config(
            "focal",
            format!(
                "enumeration of K = {k}, p = {p} exceeds the limits K ≤ {}, p ≤ {}",
                limits.max_users, limits.max_order
            ),
        ));
    }
    let coeffs: Vec<FocalCoefficients> = users.iter().map(FocalInput::coefficients).collect();
    let len = 2 * p + 1;
    let total = k.pow(len as u32);
    let points = (0..total)
        .into_par_iter()
        .map(|idx| {
            let tuple = decode_tuple(idx, k, len);
            let c = alternating_sum(&coeffs, &tuple);
            FocalPoint::new(tuple, p, c)
        })
        .collect();
    Ok(points)
}

fn decode_tuple(mut idx: usize, k: usize, len: usize) -> Vec<usize> {
    let mut tuple = vec![0; len];
    for slot in tuple.iter_mut().rev() {
        *slot = idx % k;
        idx /= k;
    }
    tuple
}

/// Tuples and their alternating sums in lexicographic order, without the
/// enumeration limits or point resolution of [`predict`].
pub(crate) fn alternating_sums<U: FocalInput>(users: &[U], p: usize) -> Vec<(Vec<usize>, FocalCoefficients)> {
    let k = users.len();
    let coeffs: Vec<FocalCoefficients> = users.iter().map(FocalInput::coefficients).collect();
    let len = 2 * p + 1;
    (0..k.pow(len as u32))
        .map(|idx| {
            let tuple = decode_tuple(idx, k, len);
            let c = alternating_sum(&coeffs, &tuple);
            (tuple, c)
        })
        .collect()
}

fn alternating_sum(coeffs: &[FocalCoefficients], tuple: &[usize]) -> FocalCoefficients {
    let mut s = FocalCoefficients {
        sin_elevation: 0.0,
        azimuth_cosine: 0.0,
        inverse_range: 0.0,
    };
    for (i, &k) in tuple.iter().enumerate() {
        let c = coeffs[k];
        if i % 2 == 0 {
            s.sin_elevation += c.sin_elevation;
            s.azimuth_cosine += c.azimuth_cosine;
            s.inverse_range += c.inverse_range;
        } else {
            s.sin_elevation -= c.sin_elevation;
            s.azimuth_cosine -= c.azimuth_cosine;
            s.inverse_range -= c.inverse_range;
        }
    }
    s
}

/// Unique third-order focal points by class.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquePoints {
    /// Every diagonal tuple `(k, k, k)`.
    pub p1: Vec<FocalPoint>,
    /// `(p, q, p)`, `q ≠ p`, not colliding with an earlier point.
    pub p2: Vec<FocalPoint>,
    /// `(p, q, v)`, `p < v`, `q ∉ {p, v}`, not colliding with an earlier point.
    pub p3: Vec<FocalPoint>,
    points: Vec<FocalPoint>,
}

impl UniquePoints {
    /// Distinct locations over all classes.
    pub fn points(&self) -> &[FocalPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn physical(&self) -> impl Iterator<Item = &FocalPoint> {
        self.points.iter().filter(|p| p.physical)
    }
}

/// `(K³ − K² + 2K) / 2`.
pub fn unique_upper_bound(k: usize) -> usize {
    (k * k * k - k * k + 2 * k) / 2
}

/// Partitions a third-order prediction into unique P1/P2/P3 points.
///
/// Tuples `(p, q, v)` and `(v, q, p)` give the same point, and `(p, p, v)`,
/// `(p, v, v)` reproduce a user location, so only the canonical members of
/// each class are kept before merging by location.
pub fn unique_points(prediction: &[FocalPoint]) -> Result<UniquePoints> {
    if prediction.iter().any(|p| p.order != 1) {
        return Err(Error::domain("unique points are defined for the third order only"));
    }
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    let mut p3 = Vec::new();
    for fp in prediction {
        let t = &fp.tuple;
        match fp.class {
            FocalClass::P1 => p1.push(fp.clone()),
            FocalClass::P2 => p2.push(fp.clone()),
            FocalClass::P3 if t[0] < t[2] && t[1] != t[0] && t[1] != t[2] => p3.push(fp.clone()),
            _ => {}
        }
    }
    let mut points: Vec<FocalPoint> = Vec::new();
    let keep = |fp: &FocalPoint, points: &mut Vec<FocalPoint>| {
        let fresh = !points.iter().any(|q| q.same_location(fp));
        if fresh {
            points.push(fp.clone());
        }
        fresh
    };
    for fp in &p1 {
        keep(fp, &mut points);
    }
    p2.retain(|fp| keep(fp, &mut points));
    p3.retain(|fp| keep(fp, &mut points));
    Ok(UniquePoints { p1, p2, p3, points })
}

/// Third-order prediction for users sharing one elevation.
pub fn same_elevation_case(users: &[SphericalPoint]) -> Result<Vec<FocalPoint>> {
    let first = users.first().ok_or_else(|| Error::domain("no users"))?;
    if users.iter().any(|u| u.elevation() != first.elevation()) {
        return Err(Error::domain("users do not share a common elevation"));
    }
    predict(users, 1)
}

/// Third-order prediction for users sharing one azimuth.
pub fn same_azimuth_case(users: &[SphericalPoint]) -> Result<Vec<FocalPoint>> {
    let first = users.first().ok_or_else(|| Error::domain("no users"))?;
    if users.iter().any(|u| u.azimuth() != first.azimuth()) {
        return Err(Error::domain("users do not share a common azimuth"));
    }
    predict(users, 1)
}

/// Position of `user` as seen after the RIS removes the phase profile of
/// `steer.steer_from`.
pub fn ris_effective_position(user: &SphericalPoint, steer: &RisConfig) -> FocalCoefficients {
    let u = FocalCoefficients::from_point(user);
    let s = FocalCoefficients::from_point(&steer.steer_from);
    FocalCoefficients {
        sin_elevation: u.sin_elevation - s.sin_elevation,
        azimuth_cosine: u.azimuth_cosine - s.azimuth_cosine,
        inverse_range: u.inverse_range - s.inverse_range,
    }
}

/// Visible grating-lobe images of `point`: the array factor of a uniform grid
/// is periodic in `sinθ` with period `λ/d_z` and in `sinφ cosθ` with period
/// `λ/d_y`, so a point shifted by whole periods focuses identically. The
/// range term is unaffected. Returns only physical images other than `point`.
pub fn grating_images(point: &FocalPoint, geometry: &ArrayGeometry) -> Vec<FocalPoint> {
    let (pz, py) = (geometry.wavelength() / geometry.d_z(), geometry.wavelength() / geometry.d_y());
    // shifts beyond this cannot bring |u| ≤ 1 back from |u| ≤ 2p + 1
    let reach = |period: f64| ((2 * point.order + 2) as f64 / period).ceil() as i64;
    let c = point.coefficients;
    let mut out = Vec::new();
    for nz in -reach(pz)..=reach(pz) {
        for ny in -reach(py)..=reach(py) {
            if nz == 0 && ny == 0 {
                continue;
            }
            let shifted = FocalCoefficients {
                sin_elevation: c.sin_elevation + nz as f64 * pz,
                azimuth_cosine: c.azimuth_cosine + ny as f64 * py,
                inverse_range: c.inverse_range,
            };
            let image = FocalPoint::new(point.tuple.clone(), point.order, shifted);
            if image.physical {
                out.push(image);
            }
        }
    }
    out
}

/// Focal points of an active RIS in its reflected frame.
pub fn ris_focal_points(users: &[SphericalPoint], steer: &RisConfig, p: usize) -> Result<Vec<FocalPoint>> {
    let effective: Vec<FocalCoefficients> = users.iter().map(|u| ris_effective_position(u, steer)).collect();
    Ok(predict(&effective, p)?.iter().map(FocalPoint::negated).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deg;
    use approx::assert_relative_eq;

    fn pt(az: f64, el: f64, r: Option<f64>) -> SphericalPoint {
        SphericalPoint::from_degrees(az, el, r).unwrap()
    }

    fn find<'a>(pts: &'a [FocalPoint], t: &[usize]) -> &'a FocalPoint {
        pts.iter().find(|p| p.tuple == t).unwrap()
    }

    #[test]
    fn grating_image_of_unphysical_point() {
        let g = ArrayGeometry::half_wavelength(35, 35, 0.1).unwrap();
        let users = [pt(-20.0, 0.0, Some(20.0)), pt(10.0, 0.0, Some(20.0)), pt(25.0, 0.0, Some(20.0))];
        let pts = predict(&users, 1).unwrap();
        let p = find(&pts, &[0, 2, 0]);
        assert!(!p.physical);
        let images = grating_images(p, &g);
        assert_eq!(images.len(), 1);
        let u = 2.0 * deg(-20.0).sin() - deg(25.0).sin() + 2.0;
        assert_relative_eq!(images[0].azimuth.unwrap(), u.asin(), epsilon = 1e-12);
        assert_eq!(images[0].range, p.range);
        // a visible point keeps no image for half-wavelength spacing near broadside
        assert!(grating_images(find(&pts, &[1, 1, 1]), &g).is_empty());
    }

    #[test]
    fn single_user_collapses() {
        let pred = predict(&[pt(10.0, 5.0, Some(20.0))], 1).unwrap();
        assert_eq!(pred.len(), 1);
        let p = &pred[0];
        assert_relative_eq!(p.azimuth.unwrap(), deg(10.0), epsilon = 1e-12);
        assert_relative_eq!(p.elevation.unwrap(), deg(5.0), epsilon = 1e-12);
        assert_relative_eq!(p.range.unwrap(), 20.0, max_relative = 1e-12);
        assert_eq!(unique_points(&pred).unwrap().len(), 1);
    }

    #[test]
    fn off_user_lobe_azimuth() {
        let users = [pt(2.0, 0.0, None), pt(20.0, 0.0, None), pt(35.0, 0.0, None)];
        let pred = predict(&users, 1).unwrap();
        let p = find(&pred, &[0, 1, 0]);
        let expected = (2.0 * deg(2.0).sin() - deg(20.0).sin()).asin();
        assert_relative_eq!(p.azimuth.unwrap(), expected, epsilon = 1e-12);
        assert!((p.azimuth.unwrap().to_degrees() + 15.8).abs() < 0.05);
        assert_eq!(p.elevation.unwrap(), 0.0);
        assert_eq!(p.range, None);
    }

    #[test]
    fn depth_focus_of_mixed_tuple() {
        let users = [pt(0.0, 0.0, Some(4.8)), pt(0.0, 0.0, Some(9.8)), pt(0.0, 0.0, Some(19.0))];
        let pred = predict(&users, 1).unwrap();
        let r = find(&pred, &[0, 1, 2]).range.unwrap();
        assert_relative_eq!(r, 1.0 / (1.0 / 4.8 - 1.0 / 9.8 + 1.0 / 19.0), max_relative = 1e-12);
        assert!((r - 6.29).abs() < 0.01, "{r}");
        assert!(!find(&pred, &[1, 0, 1]).physical);
        assert!(find(&pred, &[1, 0, 1]).range.unwrap() < 0.0);
    }

    #[test]
    fn class_membership() {
        assert_eq!(FocalClass::of(&[2, 2, 2]), FocalClass::P1);
        assert_eq!(FocalClass::of(&[0, 1, 0]), FocalClass::P2);
        assert_eq!(FocalClass::of(&[0, 1, 2]), FocalClass::P3);
        assert_eq!(FocalClass::of(&[0, 0, 1]), FocalClass::P3);
        assert_eq!(FocalClass::of(&[1, 1, 1, 1, 1]), FocalClass::P1);
        assert_eq!(FocalClass::of(&[0, 1, 0, 1, 0]), FocalClass::HigherOrder);
    }

    #[test]
    fn three_user_counts() {
        let users = [pt(-20.0, 0.0, Some(20.0)), pt(10.0, 0.0, Some(20.0)), pt(25.0, 0.0, Some(20.0))];
        let u = unique_points(&predict(&users, 1).unwrap()).unwrap();
        assert_eq!(u.p1.len(), 3);
        assert!(u.p2.len() <= 6);
        assert!(u.p3.len() <= 3);
        assert!(u.len() <= 12);
        assert_eq!(unique_upper_bound(3), 12);
    }

    #[test]
    fn symmetric_users_collide() {
        let users = [pt(-15.0, 0.0, Some(10.0)), pt(0.0, 0.0, Some(10.0)), pt(15.0, 0.0, Some(10.0))];
        let u = unique_points(&predict(&users, 1).unwrap()).unwrap();
        assert!(u.len() < unique_upper_bound(3), "{}", u.len());
    }

    #[test]
    fn same_elevation_matches_closed_form() {
        let users = [pt(-20.0, 0.0, Some(20.0)), pt(10.0, 0.0, Some(20.0)), pt(25.0, 0.0, Some(20.0))];
        let pts = same_elevation_case(&users).unwrap();
        assert_eq!(pts, predict(&users, 1).unwrap());
        let p = find(&pts, &[0, 1, 2]);
        let expected = (deg(-20.0).sin() - deg(10.0).sin() + deg(25.0).sin()).asin();
        assert_relative_eq!(p.azimuth.unwrap(), expected, epsilon = 1e-12);
        assert!((p.azimuth.unwrap().to_degrees() + 5.3).abs() < 0.05);
        assert_eq!(p.elevation.unwrap(), 0.0);
        let mixed = [pt(0.0, 0.0, None), pt(0.0, 1.0, None)];
        assert!(same_elevation_case(&mixed).is_err());
    }

    #[test]
    fn same_azimuth_at_broadside_stays_at_zero() {
        let users = [pt(0.0, -1.0, None), pt(0.0, -15.0, None), pt(0.0, -40.0, None)];
        for p in same_azimuth_case(&users).unwrap().iter().filter(|p| p.physical) {
            assert_eq!(p.azimuth.unwrap(), 0.0);
        }
    }

    #[test]
    fn same_azimuth_spreads_off_broadside() {
        let users = [pt(20.0, -1.0, None), pt(20.0, -15.0, None), pt(20.0, -40.0, None)];
        let pts = same_azimuth_case(&users).unwrap();
        let p = find(&pts, &[0, 1, 2]);
        let el = (deg(-1.0).sin() - deg(-15.0).sin() + deg(-40.0).sin()).asin();
        let az = (deg(20.0).sin() / el.cos() * (deg(-1.0).cos() - deg(-15.0).cos() + deg(-40.0).cos())).asin();
        assert_relative_eq!(p.elevation.unwrap(), el, epsilon = 1e-12);
        assert_relative_eq!(p.azimuth.unwrap(), az, epsilon = 1e-12);
        assert!((p.azimuth.unwrap() - deg(20.0)).abs() > deg(0.5));
        assert!(same_azimuth_case(&[pt(1.0, 0.0, None), pt(2.0, 0.0, None)]).is_err());
    }

    #[test]
    fn vertical_focus_has_indeterminate_azimuth() {
        let c = FocalCoefficients {
            sin_elevation: 1.0,
            azimuth_cosine: 0.0,
            inverse_range: 0.0,
        };
        let r = c.resolve();
        assert_eq!(r.azimuth, None);
        assert!(!r.physical);
    }

    #[test]
    fn ris_effective_positions() {
        let user = pt(12.0, -3.0, Some(5.0));
        let same = ris_effective_position(&user, &RisConfig { steer_from: user });
        assert_eq!(same.inverse_range, 0.0);
        assert_eq!(same.sin_elevation, 0.0);
        assert_eq!(same.azimuth_cosine, 0.0);
        let zero = ris_effective_position(&user, &RisConfig { steer_from: pt(0.0, 0.0, None) });
        assert_eq!(zero, FocalCoefficients::from_point(&user));
        let steer = RisConfig { steer_from: pt(0.0, 0.0, Some(10.0)) };
        let r = ris_effective_position(&pt(0.0, 0.0, Some(5.0)), &steer).resolve().range.unwrap();
        assert_relative_eq!(r, 10.0 * 5.0 / (10.0 - 5.0), max_relative = 1e-12);
    }

    #[test]
    fn ris_effective_angles_match_closed_form() {
        let (u, s) = (pt(20.0, 8.0, None), pt(-2.0, -4.0, None));
        let e = ris_effective_position(&u, &RisConfig { steer_from: s }).resolve();
        let el = (deg(8.0).sin() - deg(-4.0).sin()).asin();
        let az = ((deg(8.0).cos() * deg(20.0).sin() - deg(-4.0).cos() * deg(-2.0).sin()) / el.cos()).asin();
        assert_relative_eq!(e.elevation.unwrap(), el, epsilon = 1e-12);
        assert_relative_eq!(e.azimuth.unwrap(), az, epsilon = 1e-12);
    }

    #[test]
    fn ris_with_zero_steering_negates_prediction() {
        let users = [pt(2.0, 0.0, None), pt(20.0, 0.0, None), pt(35.0, 0.0, None)];
        let ris = ris_focal_points(&users, &RisConfig { steer_from: pt(0.0, 0.0, None) }, 1).unwrap();
        let direct = predict(&users, 1).unwrap();
        for (a, b) in ris.iter().zip(&direct) {
            assert_eq!(a.azimuth, b.azimuth.map(|v| -v));
            assert_eq!(a.elevation, b.elevation.map(|v| -v));
            assert_eq!(a.range, b.range);
        }
    }

    #[test]
    fn enumeration_limits() {
        let users: Vec<_> = (0..9).map(|i| pt(i as f64, 0.0, None)).collect();
        assert!(predict(&users, 1).is_err());
        assert!(predict(&users[..3], 3).is_err());
        assert_eq!(predict(&users[..3], 2).unwrap().len(), 243);
        let empty: [SphericalPoint; 0] = [];
        assert!(predict(&empty, 1).is_err());
        assert!(predict(&users[..2], 0).is_err());
    }

    #[test]
    fn json_record_shapes() {
        let p = &predict(&[pt(10.0, 0.0, None)], 1).unwrap()[0];
        let rec = p.record();
        assert_eq!(rec.range_m, RangeField::Label("farfield".into()));
        assert_eq!(rec.class, FocalClass::P1);
    }
}
