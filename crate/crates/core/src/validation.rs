//! Matching of predicted focal points against peaks of a simulated
//! distortion scan along one axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::focal::FocalPoint;
use crate::radiation::{find_peaks, AxisKind, Component, Peak, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Angular match tolerance, degrees.
    pub angle_tolerance_deg: f64,
    /// Relative range match tolerance.
    pub range_tolerance: f64,
    /// Peaks at least this prominent must be explained by a prediction.
    pub min_prominence_db: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            angle_tolerance_deg: 1.0,
            range_tolerance: 0.10,
            min_prominence_db: 6.0,
        }
    }
}

impl MatchConfig {
    fn matches(&self, kind: AxisKind, predicted: f64, observed: f64) -> bool {
        match kind {
            AxisKind::Range => (observed - predicted).abs() <= self.range_tolerance * predicted.abs(),
            _ => (observed - predicted).abs() <= self.angle_tolerance_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionMatch {
    pub tuple: Vec<usize>,
    /// Predicted coordinate along the axis (degrees or meters).
    pub predicted: f64,
    /// Nearest local maximum, if one lies within tolerance.
    pub matched: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub axis: AxisKind,
    pub predictions: Vec<PredictionMatch>,
    /// Prominent peaks with no prediction within tolerance.
    pub unexplained: Vec<Peak>,
    /// Prominent peaks explained only by an auxiliary point.
    pub explained_by_auxiliary: usize,
    pub prominent_peaks: usize,
}

impl ValidationReport {
    pub fn all_predictions_matched(&self) -> bool {
        self.predictions.iter().all(|p| p.matched.is_some())
    }

    pub fn all_peaks_explained(&self) -> bool {
        self.unexplained.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.all_predictions_matched() && self.all_peaks_explained()
    }
}

/// Coordinate of `p` along an axis of `kind`, in presentation units.
fn coordinate(p: &FocalPoint, kind: AxisKind) -> Option<f64> {
    match kind {
        AxisKind::Azimuth => p.azimuth.map(f64::to_degrees),
        AxisKind::Elevation => p.elevation.map(f64::to_degrees),
        AxisKind::Range => p.range,
        AxisKind::Subcarrier => None,
    }
}

/// Compares physical predictions lying inside the scanned interval of a 1-D
/// distortion field with its local maxima, in both directions. `auxiliary`
/// points (e.g. grating images) may explain peaks but need no match.
pub fn validate_line(
    predictions: &[FocalPoint],
    auxiliary: &[FocalPoint],
    field: &SpectralField,
    cfg: &MatchConfig,
) -> Result<ValidationReport> {
    if field.spec.axis2.is_some() {
        return Err(Error::domain("validation runs on one-dimensional scans"));
    }
    let axis = &field.spec.axis1;
    if axis.kind == AxisKind::Subcarrier {
        return Err(Error::domain("focal points have no subcarrier coordinate"));
    }
    let n = axis.values.len();
    let (lo, hi) = (axis.display(0), axis.display(n - 1));
    let maxima = find_peaks(field, Component::Distortion, 0.0);
    let prominent: Vec<&Peak> = maxima.iter().filter(|p| p.prominence_db >= cfg.min_prominence_db).collect();

    let mut seen: Vec<f64> = Vec::new();
    let mut matches = Vec::new();
    for p in predictions.iter().filter(|p| p.physical) {
        let Some(c) = coordinate(p, axis.kind) else { continue };
        if c < lo || c > hi || seen.iter().any(|&s| (s - c).abs() <= 1e-9 * c.abs().max(1.0)) {
            continue;
        }
        seen.push(c);
        let matched = maxima
            .iter()
            .map(|m| m.coords.0)
            .filter(|&o| cfg.matches(axis.kind, c, o))
            .min_by(|a, b| (a - c).abs().total_cmp(&(b - c).abs()));
        matches.push(PredictionMatch {
            tuple: p.tuple.clone(),
            predicted: c,
            matched,
        });
    }
    let extra: Vec<f64> = auxiliary
        .iter()
        .filter(|p| p.physical)
        .filter_map(|p| coordinate(p, axis.kind))
        .collect();
    let near = |set: &[f64], peak: &Peak| set.iter().any(|&c| cfg.matches(axis.kind, c, peak.coords.0));
    let mut unexplained = Vec::new();
    let mut explained_by_auxiliary = 0;
    for peak in &prominent {
        if near(&seen, peak) {
            continue;
        }
        if near(&extra, peak) {
            explained_by_auxiliary += 1;
        } else {
            unexplained.push((*peak).clone());
        }
    }
    Ok(ValidationReport {
        axis: axis.kind,
        predictions: matches,
        unexplained,
        explained_by_auxiliary,
        prominent_peaks: prominent.len(),
    })
}
