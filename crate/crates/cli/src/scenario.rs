//! TOML scenario schema. Angles are degrees, distances meters and EVM a
//! fraction (0.03 = 3%) at this boundary; [`Scenario::build_*`] converts to
//! the library's SI/radian types.

use nfdist::channel::{SphericalPoint, UserChannelParams};
use nfdist::evaluation::{ClusterGeometry, SchedulingPolicy, SubBandLayout};
use nfdist::geometry::ArrayGeometry;
use nfdist::radiation::{AxisKind, FieldSpec, FixedCoords, ScanAxis};
use nfdist::validation::MatchConfig;
use nfdist::amplifier::PaModel;
use nfdist::waveform::{OfdmConfig, PrecoderKind, RisConfig};
use nfdist::{Error, C64};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Elaa,
    Ris,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Predict,
    Radiate,
    Rates,
    Schedule,
    Calibrate,
    Validate,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Predict => "predict",
            Experiment::Radiate => "radiate",
            Experiment::Rates => "rates",
            Experiment::Schedule => "schedule",
            Experiment::Calibrate => "calibrate",
            Experiment::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub mode: Mode,
    pub experiment: Experiment,
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precoder: Option<PrecoderKind>,
    pub geometry: GeometrySpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub users: Vec<UserSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pa: Option<PaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ofdm: Option<OfdmSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ris: Option<RisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<PredictSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radiate: Option<RadiateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateSpec>,
}

/// Element spacings default to half a wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub m_y: usize,
    pub m_z: usize,
    /// Meters.
    pub wavelength: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_z: Option<f64>,
}

/// A user; no `range_m` means far field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_m: Option<f64>,
    /// Complex gain as `[re, im]`, default `[1, 0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<[f64; 2]>,
    /// Delay in samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
}

/// At most one of `preset`, `evm` or (`order`, `memory`, `coeffs`).
/// Empty means the "evm3" preset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Third-order model output-power-preserving at unit input power.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<usize>,
    /// `[re, im]` per term, ordered `p = 0..=order` outer, lag inner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationSpec {
    #[default]
    Shared,
    /// One contiguous block per user, in user order.
    Subbands,
}

/// Occupied subcarriers `first..=last` of an `n_fft`-point grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmSpec {
    pub n_fft: usize,
    pub first: usize,
    pub last: usize,
    #[serde(default)]
    pub allocation: AllocationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisSpec {
    pub steer_azimuth_deg: f64,
    pub steer_elevation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steer_range_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSpec {
    #[serde(default = "one")]
    pub order: usize,
    /// Also list grating-lobe images of every unique point.
    #[serde(default = "yes")]
    pub images: bool,
}

impl Default for PredictSpec {
    fn default() -> Self {
        Self { order: 1, images: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Analytic,
    #[default]
    Periodogram,
}

/// Grid in degrees (angles), meters (range) or indices (subcarrier).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub kind: AxisKind,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiateSpec {
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default = "default_frames")]
    pub frames: usize,
    pub axis: AxisSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis2: Option<AxisSpec>,
    #[serde(default)]
    pub azimuth_deg: f64,
    #[serde(default)]
    pub elevation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_m: Option<f64>,
    /// Unset integrates over all subcarriers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcarrier: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSpec {
    #[serde(default = "default_angle_tol")]
    pub angle_tolerance_deg: f64,
    #[serde(default = "default_range_tol")]
    pub range_tolerance: f64,
    #[serde(default = "default_prominence")]
    pub min_prominence_db: f64,
}

impl Default for ValidateSpec {
    fn default() -> Self {
        let m = MatchConfig::default();
        Self {
            angle_tolerance_deg: m.angle_tolerance_deg,
            range_tolerance: m.range_tolerance,
            min_prominence_db: m.min_prominence_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSpec {
    pub precoders: Vec<PrecoderKind>,
    pub evms: Vec<f64>,
    pub snr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub clusters: ClusterGeometry,
    #[serde(default)]
    pub layout: SubBandLayout,
    pub policies: Vec<SchedulingPolicy>,
    pub evms: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSpec {
    pub target_evm: f64,
    #[serde(default = "unit")]
    pub input_power: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn unit() -> f64 {
    1.0
}
fn default_frames() -> usize {
    64
}
fn default_samples() -> usize {
    1_000_000
}
fn default_angle_tol() -> f64 {
    MatchConfig::default().angle_tolerance_deg
}
fn default_range_tol() -> f64 {
    MatchConfig::default().range_tolerance
}
fn default_prominence() -> f64 {
    MatchConfig::default().min_prominence_db
}

/// Parse failure with the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "`{}`: {}", self.path, self.message)
    }
}

impl From<Error> for SchemaError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { path, message } => SchemaError { path, message },
            other => SchemaError {
                path: String::new(),
                message: other.to_string(),
            },
        }
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError {
        path: path.into(),
        message: message.into(),
    }
}

fn at(path: impl Into<String>) -> impl FnOnce(Error) -> SchemaError {
    let path = path.into();
    move |e| match e {
        Error::Config { path: p, message } if !p.is_empty() => SchemaError { path: p, message },
        other => schema(path, other.to_string()),
    }
}

impl Scenario {
    /// Parses and checks every sub-config the scenario references.
    pub fn from_toml(text: &str) -> Result<Self, SchemaError> {
        let de = toml::Deserializer::parse(text).map_err(|e| schema("", e.message().to_string()))?;
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            schema(if path == "." { String::new() } else { path }, inner.message().to_string())
        })?;
        scenario.check()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Validates everything the chosen experiment needs. Sections of other
    /// experiments are checked too when present.
    pub fn check(&self) -> Result<(), SchemaError> {
        self.build_geometry()?;
        self.build_pa()?;
        if !self.users.is_empty() {
            self.build_users()?;
        }
        if self.mode == Mode::Ris {
            self.build_ris()?;
        }
        if self.ofdm.is_some() {
            self.build_ofdm()?;
        }
        if let Some(p) = &self.predict {
            if p.order == 0 {
                return Err(schema("predict.order", "must be at least 1"));
            }
        }
        if self.radiate.is_some() {
            self.build_field(None)?;
        }
        if self.validate.is_some() {
            self.build_match()?;
        }
        if let Some(s) = &self.schedule {
            s.layout.blocks().map_err(at("schedule.layout"))?;
            if s.realizations == 0 {
                return Err(schema("schedule.realizations", "must be at least 1"));
            }
        }
        if let Some(r) = &self.rates {
            if r.precoders.is_empty() {
                return Err(schema("rates.precoders", "must not be empty"));
            }
        }
        if let Some(c) = &self.calibrate {
            if !(c.target_evm >= 0.0) || !(c.input_power > 0.0) || c.samples == 0 {
                return Err(schema("calibrate", "needs target_evm ≥ 0, input_power > 0, samples ≥ 1"));
            }
        }
        match self.experiment {
            Experiment::Predict => self.require_users(),
            Experiment::Radiate | Experiment::Validate => {
                self.require_users()?;
                self.require(self.ofdm.is_some(), "ofdm")?;
                self.require(self.radiate.is_some(), "radiate")
            }
            Experiment::Rates => {
                self.require_users()?;
                self.require(self.ofdm.is_some(), "ofdm")?;
                self.require(self.rates.is_some(), "rates")?;
                if self.mode == Mode::Ris {
                    return Err(schema("mode", "rates are defined for precoded arrays only"));
                }
                Ok(())
            }
            Experiment::Schedule => self.require(self.schedule.is_some(), "schedule"),
            Experiment::Calibrate => self.require(self.calibrate.is_some(), "calibrate"),
        }
    }

    fn require(&self, present: bool, section: &str) -> Result<(), SchemaError> {
        if present {
            Ok(())
        } else {
            Err(schema(section, format!("section required by experiment `{}`", self.experiment.name())))
        }
    }

    fn require_users(&self) -> Result<(), SchemaError> {
        self.require(!self.users.is_empty(), "users")
    }

    pub fn build_geometry(&self) -> Result<ArrayGeometry, SchemaError> {
        let g = &self.geometry;
        let half = g.wavelength / 2.0;
        Ok(ArrayGeometry::new(
            g.m_y,
            g.m_z,
            g.d_y.unwrap_or(half),
            g.d_z.unwrap_or(half),
            g.wavelength,
        )?)
    }

    pub fn positions(&self) -> Result<Vec<SphericalPoint>, SchemaError> {
        self.users
            .iter()
            .enumerate()
            .map(|(i, u)| {
                SphericalPoint::from_degrees(u.azimuth_deg, u.elevation_deg, u.range_m).map_err(at(format!("users[{i}]")))
            })
            .collect()
    }

    pub fn build_users(&self) -> Result<Vec<UserChannelParams>, SchemaError> {
        let points = self.positions()?;
        self.users
            .iter()
            .zip(points)
            .enumerate()
            .map(|(i, (u, position))| {
                let [re, im] = u.gain.unwrap_or([1.0, 0.0]);
                let delay = u.delay.unwrap_or(0.0);
                if !(re.is_finite() && im.is_finite()) || re.hypot(im) == 0.0 {
                    return Err(schema(format!("users[{i}].gain"), "must be finite and nonzero"));
                }
                if !(delay.is_finite() && delay >= 0.0) {
                    return Err(schema(format!("users[{i}].delay"), "must be finite and non-negative"));
                }
                Ok(UserChannelParams {
                    position,
                    gain: C64::new(re, im),
                    delay,
                })
            })
            .collect()
    }

    pub fn build_pa(&self) -> Result<PaModel, SchemaError> {
        let Some(pa) = &self.pa else { return Ok(PaModel::evm3()) };
        let raw = pa.order.is_some() || pa.memory.is_some() || pa.coeffs.is_some();
        let sources = pa.preset.is_some() as usize + pa.evm.is_some() as usize + raw as usize;
        if sources > 1 {
            return Err(schema("pa", "give one of `preset`, `evm` or `order`/`memory`/`coeffs`"));
        }
        if let Some(name) = &pa.preset {
            return PaModel::preset(name).ok_or_else(|| schema("pa.preset", format!("unknown preset `{name}` (evm3, linear)")));
        }
        if let Some(evm) = pa.evm {
            return nfdist::evaluation::model_for_evm(evm).map_err(at("pa.evm"));
        }
        if raw {
            let coeffs = pa
                .coeffs
                .as_ref()
                .ok_or_else(|| schema("pa.coeffs", "required with `order`/`memory`"))?
                .iter()
                .map(|&[re, im]| C64::new(re, im))
                .collect();
            return PaModel::new(pa.order.unwrap_or(1), pa.memory.unwrap_or(0), coeffs).map_err(at("pa.coeffs"));
        }
        Ok(PaModel::evm3())
    }

    pub fn build_ofdm(&self) -> Result<OfdmConfig, SchemaError> {
        let o = self.ofdm.as_ref().ok_or_else(|| schema("ofdm", "section missing"))?;
        if o.first > o.last {
            return Err(schema("ofdm.first", "must not exceed `last`"));
        }
        let occupied: Vec<usize> = (o.first..=o.last).collect();
        let cfg = match o.allocation {
            AllocationSpec::Shared => OfdmConfig::shared(o.n_fft, occupied),
            AllocationSpec::Subbands => OfdmConfig::contiguous_subbands(o.n_fft, occupied, self.users.len().max(1)),
        };
        cfg.map_err(at("ofdm"))
    }

    pub fn build_ris(&self) -> Result<RisConfig, SchemaError> {
        let r = self.ris.as_ref().ok_or_else(|| schema("ris", "section required in ris mode"))?;
        let steer_from = SphericalPoint::from_degrees(r.steer_azimuth_deg, r.steer_elevation_deg, r.steer_range_m)
            .map_err(at("ris"))?;
        Ok(RisConfig { steer_from })
    }

    pub fn precoder(&self) -> PrecoderKind {
        self.precoder.unwrap_or(PrecoderKind::Mrt)
    }

    pub fn build_match(&self) -> Result<MatchConfig, SchemaError> {
        let v = self.validate.clone().unwrap_or_default();
        if !(v.angle_tolerance_deg > 0.0) || !(v.range_tolerance > 0.0) || !(v.min_prominence_db >= 0.0) {
            return Err(schema("validate", "tolerances must be positive"));
        }
        Ok(MatchConfig {
            angle_tolerance_deg: v.angle_tolerance_deg,
            range_tolerance: v.range_tolerance,
            min_prominence_db: v.min_prominence_db,
        })
    }

    /// Scan grid; `grid_deg` replaces the step of angular axes.
    pub fn build_field(&self, grid_deg: Option<f64>) -> Result<FieldSpec, SchemaError> {
        let r = self.radiate.as_ref().ok_or_else(|| schema("radiate", "section missing"))?;
        let axis1 = build_axis(&r.axis, grid_deg, "radiate.axis")?;
        let axis2 = r
            .axis2
            .as_ref()
            .map(|a| build_axis(a, grid_deg, "radiate.axis2"))
            .transpose()?;
        if axis2.as_ref().is_some_and(|a| a.kind == axis1.kind) {
            return Err(schema("radiate.axis2", "must scan a different coordinate than `axis`"));
        }
        if let Some(range) = r.range_m {
            if !(range > 0.0) {
                return Err(schema("radiate.range_m", "must be positive"));
            }
        }
        Ok(FieldSpec {
            axis1,
            axis2,
            fixed: FixedCoords {
                azimuth: r.azimuth_deg.to_radians(),
                elevation: r.elevation_deg.to_radians(),
                range: r.range_m,
                subcarrier: r.subcarrier,
            },
        })
    }
}

fn build_axis(a: &AxisSpec, grid_deg: Option<f64>, path: &str) -> Result<ScanAxis, SchemaError> {
    let bad = |m: &str| schema(path, m.to_string());
    match a.kind {
        AxisKind::Azimuth | AxisKind::Elevation => {
            let step = grid_deg.unwrap_or(a.step);
            if a.start < -90.0 || a.stop > 90.0 {
                return Err(bad("angles must lie in [-90, 90] degrees"));
            }
            ScanAxis::degrees(a.kind, a.start, a.stop, step).map_err(|_| bad("needs step > 0 and stop ≥ start"))
        }
        AxisKind::Range => {
            if !(a.start > 0.0) {
                return Err(bad("ranges must be positive"));
            }
            ScanAxis::linspace(a.kind, a.start, a.stop, a.step).map_err(|_| bad("needs step > 0 and stop ≥ start"))
        }
        AxisKind::Subcarrier => {
            let whole = |v: f64| v >= 0.0 && v.fract() == 0.0;
            if !whole(a.start) || !whole(a.stop) || !whole(a.step) || a.step == 0.0 || a.stop < a.start {
                return Err(bad("subcarrier axes need non-negative integer start ≤ stop and step ≥ 1"));
            }
            Ok(ScanAxis::subcarriers((a.start as usize..=a.stop as usize).step_by(a.step as usize)))
        }
    }
}
