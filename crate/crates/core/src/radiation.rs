//! Directional power spectral density `aᵀ S[ν] a*` of the amplified signal,
//! split into its linear and distortion parts, and peak extraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplifier::{analytic_distortion_psd, apply_pa, bussgang_gain, regression_gain, BussgangDecomposition, PaModel};
use crate::channel::{steering_vector, SphericalPoint};
use crate::dsp::UnitaryDft;
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::montecarlo::{par_map_seeded, EnsembleSpec};
use crate::waveform::{synthesize, Frame, OfdmConfig, Symbols, TransmitPlan};
use crate::{CMatrix, C64};

/// Per-subcarrier spatial spectral density, `ν ∈ [0, N)`.
#[derive(Debug, Clone)]
pub enum SpectralDensity {
    /// Full matrices `S[ν]`.
    Dense(Vec<CMatrix>),
    /// `S[ν] = scale · F_ν F_νᴴ`. With `snapshots`, each column of `F_ν` is
    /// one Monte-Carlo frame and `scale = 1/frames`.
    Factored {
        factors: Vec<CMatrix>,
        scale: f64,
        snapshots: bool,
    },
}

impl SpectralDensity {
    pub fn num_subcarriers(&self) -> usize {
        match self {
            SpectralDensity::Dense(s) => s.len(),
            SpectralDensity::Factored { factors, .. } => factors.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpectralDensity::Dense(s) => s.first().map_or(0, |m| m.nrows()),
            SpectralDensity::Factored { factors, .. } => factors.first().map_or(0, |m| m.nrows()),
        }
    }

    /// `S[ν]` as a dense matrix.
    pub fn matrix(&self, nu: usize) -> CMatrix {
        match self {
            SpectralDensity::Dense(s) => s[nu].clone(),
            SpectralDensity::Factored { factors, scale, .. } => &factors[nu] * factors[nu].adjoint() * C64::new(*scale, 0.0),
        }
    }

    /// `aᵀ S[ν] a*`.
    pub fn quadratic(&self, nu: usize, a: &[C64]) -> f64 {
        self.quadratic_with_stderr(nu, a).0
    }

    /// Quadratic form and, for snapshot estimates, its standard error.
    pub fn quadratic_with_stderr(&self, nu: usize, a: &[C64]) -> (f64, Option<f64>) {
        match self {
            SpectralDensity::Dense(s) => (dense_quadratic(&s[nu], a), None),
            SpectralDensity::Factored {
                factors,
                scale,
                snapshots,
            } => {
                let terms = factor_terms(&factors[nu], a);
                let value = scale * terms.iter().sum::<f64>();
                let stderr = snapshots.then(|| mean_stderr(&terms));
                (value, stderr.flatten())
            }
        }
    }
}

fn dense_quadratic(s: &CMatrix, a: &[C64]) -> f64 {
    let m = a.len();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..m {
        let aj = a[j].conj();
        let col = s.column(j);
        let mut t = C64::new(0.0, 0.0);
        for i in 0..m {
            t += a[i] * col[i];
        }
        acc += t * aj;
    }
    acc.re
}

/// `|aᵀ f_c|²` for every column `c`.
fn factor_terms(f: &CMatrix, a: &[C64]) -> Vec<f64> {
    f.column_iter()
        .map(|col| col.iter().zip(a).map(|(v, w)| v * w).sum::<C64>().norm_sqr())
        .collect()
}

fn mean_stderr(terms: &[f64]) -> Option<f64> {
    let n = terms.len();
    if n < 2 {
        return None;
    }
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((var / n as f64).sqrt())
}

/// Linear (`S_uu`) and distortion (`S_dd`) densities of one scenario.
#[derive(Debug, Clone)]
pub struct SpectralDensities {
    pub linear: SpectralDensity,
    pub distortion: SpectralDensity,
    pub gains: Vec<C64>,
}

impl SpectralDensities {
    /// DFT of the covariance sequences; the decomposition must hold every lag.
    pub fn from_decomposition(decomposition: &BussgangDecomposition) -> Result<Self> {
        let (suu, sdd) = decomposition.spectral_densities()?;
        Ok(Self {
            linear: SpectralDensity::Dense(suu),
            distortion: SpectralDensity::Dense(sdd),
            gains: decomposition.gains.clone(),
        })
    }

    /// Closed form for memoryless third-order models: `S_uu[ν] = G W_ν W_νᴴ Gᴴ`
    /// in factored form and a dense `S_dd[ν]`.
    pub fn analytic(model: &PaModel, plan: &TransmitPlan) -> Result<Self> {
        let (gains, sdd) = analytic_distortion_psd(model, plan)?;
        Ok(Self {
            linear: linear_factors(plan, &gains),
            distortion: SpectralDensity::Dense(sdd),
            gains,
        })
    }

    /// Averaged periodogram of `u_n = G x_n` and `d_n = y_n − u_n` over a
    /// seeded ensemble. Memoryless third-order models use the closed-form
    /// gains; other models use per-antenna least-squares gains.
    pub fn periodogram(model: &PaModel, ofdm: &OfdmConfig, plan: &TransmitPlan, spec: &EnsembleSpec) -> Result<Self> {
        if spec.frames < 2 {
            return Err(Error::InsufficientEnsemble {
                got: spec.frames,
                required: 2,
            });
        }
        let users = plan.num_users();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<(Frame, Frame)> {
            let s = Symbols::draw(rng, spec.symbols, users, ofdm);
            let x = synthesize(ofdm, plan, &s)?.samples;
            let y = apply_pa(model, &x)?;
            Ok((x, y))
        };
        let gains = if model.is_third_order_memoryless() {
            bussgang_gain(model, &plan.antenna_powers())?
        } else {
            let frames = par_map_seeded(spec.seed, spec.frames, |_, rng| draw(rng))?;
            let m = plan.num_antennas();
            (0..m)
                .map(|i| {
                    let x: Vec<C64> = frames.iter().flat_map(|(x, _)| x.antenna(i).to_vec()).collect();
                    let y: Vec<C64> = frames.iter().flat_map(|(_, y)| y.antenna(i).to_vec()).collect();
                    regression_gain(&x, &y)
                })
                .collect()
        };
        let spectra = par_map_seeded(spec.seed, spec.frames, |_, rng| {
            let (x, y) = draw(rng)?;
            Ok(split_spectra(&x, &y, &gains))
        })?;
        Ok(Self::from_spectra(spectra, gains))
    }

    /// Periodogram of explicit `(input, output)` frames with given gains.
    pub fn from_frames(frames: &[(Frame, Frame)], gains: Vec<C64>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InsufficientEnsemble {
                got: frames.len(),
                required: 2,
            });
        }
        let spectra = frames.par_iter().map(|(x, y)| split_spectra(x, y, &gains)).collect();
        Ok(Self::from_spectra(spectra, gains))
    }

    fn from_spectra(spectra: Vec<(Frame, Frame)>, gains: Vec<C64>) -> Self {
        let frames = spectra.len();
        let m = spectra[0].0.num_antennas();
        let n = spectra[0].0.len();
        let build = |pick: fn(&(Frame, Frame)) -> &Frame| {
            (0..n)
                .map(|nu| CMatrix::from_fn(m, frames, |i, f| pick(&spectra[f]).sample(i, nu)))
                .collect::<Vec<_>>()
        };
        let scale = 1.0 / frames as f64;
        Self {
            linear: SpectralDensity::Factored {
                factors: build(|s| &s.0),
                scale,
                snapshots: true,
            },
            distortion: SpectralDensity::Factored {
                factors: build(|s| &s.1),
                scale,
                snapshots: true,
            },
            gains,
        }
    }

    pub fn num_subcarriers(&self) -> usize {
        self.linear.num_subcarriers()
    }
}

/// `S_uu[ν] = (G W_ν)(G W_ν)ᴴ`.
pub fn linear_factors(plan: &TransmitPlan, gains: &[C64]) -> SpectralDensity {
    let m = plan.num_antennas();
    let k = plan.num_users().max(1);
    let mut factors = vec![CMatrix::zeros(m, k); plan.n_fft()];
    for (nu, w) in plan.iter() {
        let mut f = w.clone();
        for (i, mut row) in f.row_iter_mut().enumerate() {
            row.iter_mut().for_each(|v| *v *= gains[i]);
        }
        factors[nu] = f;
    }
    SpectralDensity::Factored {
        factors,
        scale: 1.0,
        snapshots: false,
    }
}

/// Unitary DFTs of `u = G x` and `d = y − G x`, antenna-major.
fn split_spectra(x: &Frame, y: &Frame, gains: &[C64]) -> (Frame, Frame) {
    let m = x.num_antennas();
    let n = x.len();
    let dft = UnitaryDft::new(n);
    let mut u = Frame::zeros(m, n);
    let mut d = Frame::zeros(m, n);
    for i in 0..m {
        let g = gains[i];
        let (xs, ys) = (x.antenna(i), y.antenna(i));
        let ub = u.antenna_mut(i);
        for t in 0..n {
            ub[t] = g * xs[t];
        }
        dft.forward(ub);
        let db = d.antenna_mut(i);
        for t in 0..n {
            db[t] = ys[t] - g * xs[t];
        }
        dft.forward(db);
    }
    (u, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    Azimuth,
    Elevation,
    Range,
    Subcarrier,
}

/// Grid along one coordinate: radians, meters or subcarrier indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanAxis {
    pub kind: AxisKind,
    pub values: Vec<f64>,
}

impl ScanAxis {
    /// `start, start + step, …` up to and including `stop` (within half a step).
    pub fn linspace(kind: AxisKind, start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(stop >= start) {
            return Err(Error::config("scan.axis", "needs step > 0 and stop ≥ start"));
        }
        let count = ((stop - start) / step + 0.5).floor() as usize + 1;
        Ok(Self {
            kind,
            values: (0..count).map(|i| start + i as f64 * step).collect(),
        })
    }

    /// Degree grid converted to radians.
    pub fn degrees(kind: AxisKind, start: f64, stop: f64, step: f64) -> Result<Self> {
        let mut axis = Self::linspace(kind, start, stop, step)?;
        axis.values.iter_mut().for_each(|v| *v = v.to_radians());
        Ok(axis)
    }

    pub fn subcarriers(values: impl IntoIterator<Item = usize>) -> Self {
        Self {
            kind: AxisKind::Subcarrier,
            values: values.into_iter().map(|v| v as f64).collect(),
        }
    }

    /// Value in presentation units (degrees for angles).
    pub fn display(&self, i: usize) -> f64 {
        match self.kind {
            AxisKind::Azimuth | AxisKind::Elevation => self.values[i].to_degrees(),
            _ => self.values[i],
        }
    }
}

/// Coordinates not being scanned. `range: None` is the far field and
/// `subcarrier: None` integrates over all subcarriers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedCoords {
    pub azimuth: f64,
    pub elevation: f64,
    pub range: Option<f64>,
    pub subcarrier: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub axis1: ScanAxis,
    pub axis2: Option<ScanAxis>,
    pub fixed: FixedCoords,
}

impl FieldSpec {
    pub fn line(axis: ScanAxis, fixed: FixedCoords) -> Self {
        Self {
            axis1: axis,
            axis2: None,
            fixed,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.axis1.values.len(), self.axis2.as_ref().map_or(1, |a| a.values.len()))
    }

    fn cell(&self, i: usize, j: usize) -> FixedCoords {
        let mut c = self.fixed;
        let mut set = |axis: &ScanAxis, idx: usize| {
            let v = axis.values[idx];
            match axis.kind {
                AxisKind::Azimuth => c.azimuth = v,
                AxisKind::Elevation => c.elevation = v,
                AxisKind::Range => c.range = Some(v),
                AxisKind::Subcarrier => c.subcarrier = Some(v as usize),
            }
        };
        set(&self.axis1, i);
        if let Some(a) = &self.axis2 {
            set(a, j);
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Linear,
    Distortion,
    Total,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Linear, Component::Distortion, Component::Total];

    pub fn name(&self) -> &'static str {
        match self {
            Component::Linear => "linear",
            Component::Distortion => "distortion",
            Component::Total => "total",
        }
    }
}

/// Scan result; values are row-major over `(axis1, axis2)` on a linear scale.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub spec: FieldSpec,
    pub linear: Vec<f64>,
    pub distortion: Vec<f64>,
    pub total: Vec<f64>,
    /// Monte-Carlo standard error of the distortion values, when estimated.
    pub distortion_stderr: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl SpectralField {
    pub fn shape(&self) -> (usize, usize) {
        self.spec.shape()
    }

    pub fn values(&self, component: Component) -> &[f64] {
        match component {
            Component::Linear => &self.linear,
            Component::Distortion => &self.distortion,
            Component::Total => &self.total,
        }
    }

    /// Reference level of the dBr scale: the largest linear value (or the
    /// largest total when the linear part vanishes).
    pub fn reference(&self) -> f64 {
        let lin = self.linear.iter().cloned().fold(0.0, f64::max);
        if lin > 0.0 {
            lin
        } else {
            self.total.iter().cloned().fold(0.0, f64::max)
        }
    }

    /// Values in dB relative to [`SpectralField::reference`].
    pub fn db(&self, component: Component) -> Vec<f64> {
        let r = self.reference();
        self.values(component).iter().map(|&v| to_db(v / r)).collect()
    }

    /// `axis1,axis2,component,psd_db` rows; angles in degrees.
    pub fn to_csv(&self) -> String {
        let (n1, n2) = self.shape();
        let mut out = String::from("axis1,axis2,component,psd_db\n");
        for c in Component::ALL {
            let db = self.db(c);
            for i in 0..n1 {
                for j in 0..n2 {
                    let a2 = self.spec.axis2.as_ref().map_or(String::new(), |a| format!("{:.6}", a.display(j)));
                    out.push_str(&format!("{:.6},{},{},{:.6}\n", self.spec.axis1.display(i), a2, c.name(), db[i * n2 + j]));
                }
            }
        }
        out
    }

    pub fn sidecar(&self, seed: Option<u64>) -> FieldSidecar {
        FieldSidecar {
            axis1: self.spec.axis1.kind,
            axis1_values: (0..self.spec.axis1.values.len()).map(|i| self.spec.axis1.display(i)).collect(),
            axis2: self.spec.axis2.as_ref().map(|a| a.kind),
            axis2_values: self
                .spec
                .axis2
                .as_ref()
                .map(|a| (0..a.values.len()).map(|i| a.display(i)).collect()),
            fixed_azimuth_deg: self.spec.fixed.azimuth.to_degrees(),
            fixed_elevation_deg: self.spec.fixed.elevation.to_degrees(),
            fixed_range_m: self.spec.fixed.range,
            fixed_subcarrier: self.spec.fixed.subcarrier,
            reference_level: self.reference(),
            seed,
            warnings: self.warnings.clone(),
        }
    }
}

/// JSON sidecar of a heatmap CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub axis1: AxisKind,
    pub axis1_values: Vec<f64>,
    pub axis2: Option<AxisKind>,
    pub axis2_values: Option<Vec<f64>>,
    pub fixed_azimuth_deg: f64,
    pub fixed_elevation_deg: f64,
    /// `null` is the far field.
    pub fixed_range_m: Option<f64>,
    /// `null` integrates over all subcarriers.
    pub fixed_subcarrier: Option<usize>,
    pub reference_level: f64,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
}

const DB_FLOOR: f64 = -300.0;

fn to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Frequency-summed form of a density, prepared once per scan.
enum Integrated {
    Dense(CMatrix),
    /// Columns grouped per frame when `frames` is set.
    Stacked { f: CMatrix, scale: f64, frames: Option<usize> },
}

impl Integrated {
    fn new(s: &SpectralDensity) -> Self {
        match s {
            SpectralDensity::Dense(mats) => {
                let m = mats.first().map_or(0, |x| x.nrows());
                let mut sum = CMatrix::zeros(m, m);
                mats.iter().for_each(|x| sum += x);
                Integrated::Dense(sum)
            }
            SpectralDensity::Factored {
                factors,
                scale,
                snapshots,
            } => {
                let m = factors.first().map_or(0, |x| x.nrows());
                let cols: usize = factors.iter().map(|f| f.ncols()).sum();
                let mut f = CMatrix::zeros(m, cols);
                let mut c = 0;
                for x in factors {
                    f.columns_mut(c, x.ncols()).copy_from(x);
                    c += x.ncols();
                }
                let frames = snapshots.then(|| factors.first().map_or(0, |x| x.ncols()));
                Integrated::Stacked { f, scale: *scale, frames }
            }
        }
    }

    fn eval(&self, a: &[C64]) -> (f64, Option<f64>) {
        match self {
            Integrated::Dense(s) => (dense_quadratic(s, a), None),
            Integrated::Stacked { f, scale, frames } => {
                let terms = factor_terms(f, a);
                let value = scale * terms.iter().sum::<f64>();
                let stderr = frames.filter(|&n| n > 1).and_then(|n| {
                    // per-frame totals over subcarriers; column = ν·F + f
                    let mut per = vec![0.0; n];
                    for (c, t) in terms.iter().enumerate() {
                        per[c % n] += t;
                    }
                    mean_stderr(&per)
                });
                (value, stderr)
            }
        }
    }
}

/// Evaluates `aᵀ S a*` on every cell of `spec`, using the exact spherical
/// steering vector for finite ranges and the planar one in the far field.
pub fn scan(spec: &FieldSpec, densities: &SpectralDensities, geometry: &ArrayGeometry) -> Result<SpectralField> {
    let mut kinds = vec![spec.axis1.kind];
    if let Some(a) = &spec.axis2 {
        if a.kind == spec.axis1.kind {
            return Err(Error::config("scan.axis2", "must differ from axis1"));
        }
        kinds.push(a.kind);
    }
    let n_sub = densities.num_subcarriers();
    if densities.linear.dim() != geometry.num_elements() || densities.distortion.dim() != geometry.num_elements() {
        return Err(Error::domain("spectral densities do not match the array size"));
    }
    let mut warnings = Vec::new();
    let d_b = geometry.field_boundaries().d_b;
    for axis in std::iter::once(&spec.axis1).chain(spec.axis2.as_ref()) {
        if axis.values.is_empty() {
            return Err(Error::config("scan.axis", "grid is empty"));
        }
        match axis.kind {
            AxisKind::Range => {
                if axis.values.iter().any(|&r| !(r > 0.0)) {
                    return Err(Error::config("scan.range", "ranges must be positive"));
                }
                if let Some(r) = axis.values.iter().cloned().find(|&r| r < d_b) {
                    warnings.push(format!("range {r:.3} m is below 2Δ = {d_b:.3} m"));
                }
            }
            AxisKind::Subcarrier => {
                if axis.values.iter().any(|&v| v < 0.0 || v as usize >= n_sub || v.fract() != 0.0) {
                    return Err(Error::config("scan.subcarrier", format!("indices must be integers below {n_sub}")));
                }
            }
            _ => {}
        }
    }
    if !kinds.contains(&AxisKind::Range) {
        if let Some(r) = spec.fixed.range {
            if !(r > 0.0) {
                return Err(Error::config("scan.range", "range must be positive"));
            }
            if r < d_b {
                warnings.push(format!("range {r:.3} m is below 2Δ = {d_b:.3} m"));
            }
        }
    }
    if !kinds.contains(&AxisKind::Subcarrier) && spec.fixed.subcarrier.is_some_and(|v| v >= n_sub) {
        return Err(Error::config("scan.subcarrier", format!("index must be below {n_sub}")));
    }

    let per_cell_nu = kinds.contains(&AxisKind::Subcarrier) || spec.fixed.subcarrier.is_some();
    let integrated = (!per_cell_nu).then(|| (Integrated::new(&densities.linear), Integrated::new(&densities.distortion)));

    let (n1, n2) = spec.shape();
    let cells: Vec<(f64, f64, Option<f64>)> = (0..n1 * n2)
        .into_par_iter()
        .map(|idx| {
            let c = spec.cell(idx / n2, idx % n2);
            let point = match c.range {
                Some(r) => SphericalPoint::near(c.azimuth, c.elevation, r),
                None => SphericalPoint::far(c.azimuth, c.elevation),
            }?;
            let a = steering_vector(geometry, &point);
            Ok(match (&integrated, c.subcarrier) {
                (Some((lin, dist)), _) => {
                    let (d, se) = dist.eval(&a);
                    (lin.eval(&a).0, d, se)
                }
                (None, Some(nu)) => {
                    let (d, se) = densities.distortion.quadratic_with_stderr(nu, &a);
                    (densities.linear.quadratic(nu, &a), d, se)
                }
                (None, None) => unreachable!("subcarrier is fixed or scanned"),
            })
        })
        .collect::<Result<_>>()?;

    let linear: Vec<f64> = cells.iter().map(|c| c.0.max(0.0)).collect();
    let distortion: Vec<f64> = cells.iter().map(|c| c.1.max(0.0)).collect();
    let total = linear.iter().zip(&distortion).map(|(a, b)| a + b).collect();
    let distortion_stderr = cells.iter().map(|c| c.2).collect::<Option<Vec<f64>>>();
    Ok(SpectralField {
        spec: spec.clone(),
        linear,
        distortion,
        total,
        distortion_stderr,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Peak {
    pub index: (usize, usize),
    /// Axis coordinates in presentation units.
    pub coords: (f64, Option<f64>),
    pub value: f64,
    pub value_db: f64,
    pub prominence_db: f64,
}

/// Local maxima whose topographic prominence is at least `min_prominence_db`,
/// sorted by value, largest first. The highest cell's prominence is its
/// height above the lowest cell.
pub fn find_peaks(field: &SpectralField, component: Component, min_prominence_db: f64) -> Vec<Peak> {
    let (n1, n2) = field.shape();
    let db = field.db(component);
    let total = n1 * n2;
    if total == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| db[b].total_cmp(&db[a]).then(a.cmp(&b)));

    let mut parent: Vec<usize> = (0..total).collect();
    let mut added = vec![false; total];
    let mut prominence: Vec<Option<f64>> = vec![None; total];
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let neighbors = |idx: usize| -> Vec<usize> {
        let (i, j) = ((idx / n2) as isize, (idx % n2) as isize);
        let mut out = Vec::with_capacity(8);
        let span: &[isize] = if n2 > 1 { &[-1, 0, 1] } else { &[0] };
        for di in [-1isize, 0, 1] {
            for &dj in span {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (a, b) = (i + di, j + dj);
                if a >= 0 && b >= 0 && (a as usize) < n1 && (b as usize) < n2 {
                    out.push(a as usize * n2 + b as usize);
                }
            }
        }
        out
    };
    let floor = db[order[total - 1]];
    for &cell in &order {
        added[cell] = true;
        let mut roots: Vec<usize> = neighbors(cell)
            .into_iter()
            .filter(|&n| added[n])
            .map(|n| root(&mut parent, n))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        if roots.is_empty() {
            continue;
        }
        // a root is its component's summit; the highest survives
        roots.sort_by(|&a, &b| db[b].total_cmp(&db[a]).then(a.cmp(&b)));
        let keep = roots[0];
        for &r in &roots[1..] {
            prominence[r] = Some(db[r] - db[cell]);
            parent[r] = keep;
        }
        parent[cell] = keep;
    }
    let top = order[0];
    prominence[top] = Some(db[top] - floor);

    let mut peaks: Vec<Peak> = (0..total)
        .filter_map(|idx| {
            let p = prominence[idx]?;
            (p > 0.0 && p >= min_prominence_db).then(|| {
                let (i, j) = (idx / n2, idx % n2);
                Peak {
                    index: (i, j),
                    coords: (field.spec.axis1.display(i), field.spec.axis2.as_ref().map(|a| a.display(j))),
                    value: field.values(component)[idx],
                    value_db: db[idx],
                    prominence_db: p,
                }
            })
        })
        .collect();
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.index.cmp(&b.index)));
    peaks
}
