//! Subcommand runners. Every run writes `manifest.json` next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use nfdist::amplifier::{calibrate_evm, measure_evm, EvmConvention};
use nfdist::channel::LosChannel;
use nfdist::evaluation::{rate_sweep, rates_csv, scheduling_experiment, RateSweepConfig, SchedulingConfig, SchedulingPolicy};
use nfdist::focal::{grating_images, predict, ris_focal_points, unique_points, unique_upper_bound, FocalPoint, FocalRecord};
use nfdist::montecarlo::{stream_rng, EnsembleSpec};
use nfdist::radiation::{scan, AxisKind, FieldSpec, SpectralDensities, SpectralField};
use nfdist::validation::{validate_line, ValidationReport};
use nfdist::waveform::{power_for_antenna_power, TransmitPlan};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scenario::{Estimator, Experiment, Mode, Scenario, SchemaError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(nfdist::Error),
    #[error("validation mismatch: {0}")]
    Mismatch(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } | RunError::Io { .. } => 1,
            RunError::Numerical(_) => 2,
            RunError::Mismatch(_) => 3,
        }
    }
}

impl From<SchemaError> for RunError {
    fn from(e: SchemaError) -> Self {
        RunError::Config {
            path: e.path,
            message: e.message,
        }
    }
}

impl From<nfdist::Error> for RunError {
    fn from(e: nfdist::Error) -> Self {
        match e {
            nfdist::Error::Config { path, message } => RunError::Config { path, message },
            other => RunError::Numerical(other),
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub grid_deg: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub summary: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    scenario: &'a str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    grid_deg: Option<f64>,
    versions: Versions,
    status: &'a str,
    error: Option<String>,
    outputs: &'a [String],
    warnings: &'a [String],
}

#[derive(Debug, Serialize)]
struct Versions {
    nfdist: &'static str,
    nfdist_cli: &'static str,
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Scenario::from_toml(&text)?)
}

/// Hex SHA-256 of the canonical serialization, after overrides.
pub fn config_hash(scenario: &Scenario) -> String {
    Sha256::digest(scenario.to_toml().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs `command` (or the scenario's own experiment) in a pool capped at
/// `opts.workers` threads.
pub fn execute(scenario: &Scenario, command: Option<Experiment>, opts: &RunOptions) -> Result<Outcome> {
    let mut scenario = scenario.clone();
    if let Some(seed) = opts.seed {
        scenario.seed = seed;
    }
    let command = command.unwrap_or(scenario.experiment);
    if command != scenario.experiment {
        scenario.experiment = command;
        scenario.check()?;
    }
    let out_dir = opts
        .out
        .clone()
        .or_else(|| scenario.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
    fs::create_dir_all(&out_dir).map_err(|source| RunError::Io {
        path: out_dir.clone(),
        source,
    })?;

    let mut ctx = Context {
        scenario: &scenario,
        dir: &out_dir,
        grid: opts.grid_deg,
        files: Vec::new(),
        warnings: Vec::new(),
    };
    let result = match opts.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| RunError::Config {
                    path: "--workers".into(),
                    message: e.to_string(),
                })?;
            pool.install(|| ctx.dispatch(command))
        }
        None => ctx.dispatch(command),
    };

    let (status, error) = match &result {
        Ok(_) => ("ok", None),
        Err(RunError::Mismatch(m)) => ("mismatch", Some(m.clone())),
        Err(e) => ("error", Some(e.to_string())),
    };
    let manifest = Manifest {
        scenario: &scenario.name,
        command: command.name(),
        seed: scenario.seed,
        config_sha256: config_hash(&scenario),
        grid_deg: opts.grid_deg,
        versions: Versions {
            nfdist: nfdist::VERSION,
            nfdist_cli: env!("CARGO_PKG_VERSION"),
        },
        status,
        error,
        outputs: &ctx.files,
        warnings: &ctx.warnings,
    };
    write(&out_dir, "manifest.json", &json(&manifest))?;
    let summary = result?;
    let mut files = ctx.files;
    files.push("manifest.json".into());
    Ok(Outcome { out_dir, files, summary })
}

struct Context<'a> {
    scenario: &'a Scenario,
    dir: &'a Path,
    grid: Option<f64>,
    files: Vec<String>,
    warnings: Vec<String>,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| RunError::Io { path, source })
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[derive(Debug, Serialize)]
struct FocalOutput {
    order: usize,
    users: usize,
    unique_upper_bound: Option<usize>,
    points: Vec<FocalRecord>,
    unique: Vec<FocalRecord>,
    images: Vec<FocalRecord>,
}

#[derive(Debug, Serialize)]
struct CalibrationOutput {
    order: usize,
    memory: usize,
    /// `[re, im]` per coefficient.
    coeffs: Vec<[f64; 2]>,
    convention: EvmConvention,
    target_evm: f64,
    analytic_evm: f64,
    measured_evm: f64,
    measured_evm_power: f64,
    input_power: f64,
    samples: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct ValidationOutput<'a> {
    passed: bool,
    axis: AxisKind,
    predictions_matched: usize,
    predictions: usize,
    prominent_peaks: usize,
    unexplained_peaks: usize,
    explained_by_images: usize,
    report: &'a ValidationReport,
}

impl Context<'_> {
    fn emit(&mut self, name: &str, contents: &str) -> Result<()> {
        write(self.dir, name, contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn dispatch(&mut self, command: Experiment) -> Result<String> {
        match command {
            Experiment::Predict => self.predict(),
            Experiment::Radiate => self.radiate(),
            Experiment::Rates => self.rates(),
            Experiment::Schedule => self.schedule(),
            Experiment::Calibrate => self.calibrate(),
            Experiment::Validate => self.validate(),
        }
    }

    fn focal(&self) -> Result<(Vec<FocalPoint>, Vec<FocalPoint>, Vec<FocalPoint>)> {
        let sc = self.scenario;
        let spec = sc.predict.clone().unwrap_or_default();
        let users = sc.positions()?;
        let points = match sc.mode {
            Mode::Elaa => predict(&users, spec.order)?,
            Mode::Ris => ris_focal_points(&users, &sc.build_ris()?, spec.order)?,
        };
        let unique = unique_points(&points)?.points().to_vec();
        let images = if spec.images {
            let geometry = sc.build_geometry()?;
            unique.iter().flat_map(|p| grating_images(p, &geometry)).collect()
        } else {
            Vec::new()
        };
        Ok((points, unique, images))
    }

    fn predict(&mut self) -> Result<String> {
        let order = self.scenario.predict.as_ref().map_or(1, |p| p.order);
        let (points, unique, images) = self.focal()?;
        let out = FocalOutput {
            order,
            users: self.scenario.users.len(),
            unique_upper_bound: (order == 1).then(|| unique_upper_bound(self.scenario.users.len())),
            points: points.iter().map(FocalPoint::record).collect(),
            unique: unique.iter().map(FocalPoint::record).collect(),
            images: images.iter().map(FocalPoint::record).collect(),
        };
        self.emit("focal_points.json", &json(&out))?;
        let physical = unique.iter().filter(|p| p.physical).count();
        Ok(format!(
            "{} tuples, {} unique focal points ({} physical), {} grating images",
            points.len(),
            unique.len(),
            physical,
            images.len()
        ))
    }

    fn densities(&self) -> Result<SpectralDensities> {
        let sc = self.scenario;
        let geometry = sc.build_geometry()?;
        let users = sc.build_users()?;
        let ofdm = sc.build_ofdm()?;
        let model = sc.build_pa()?;
        let channel = LosChannel::new(&users, &geometry)?;
        let plan = match sc.mode {
            Mode::Elaa => {
                let power = power_for_antenna_power(&ofdm, geometry.num_elements(), 1.0);
                TransmitPlan::precoded(sc.precoder(), &channel, &ofdm, power)?
            }
            Mode::Ris => TransmitPlan::ris(&geometry, &sc.build_ris()?, &channel, &ofdm)?,
        };
        let r = sc.radiate.as_ref().expect("checked");
        Ok(match r.estimator {
            Estimator::Analytic => SpectralDensities::analytic(&model, &plan)?,
            Estimator::Periodogram => {
                SpectralDensities::periodogram(&model, &ofdm, &plan, &EnsembleSpec::new(r.frames, sc.seed))?
            }
        })
    }

    fn field(&mut self, spec: &FieldSpec, densities: &SpectralDensities) -> Result<SpectralField> {
        let field = scan(spec, densities, &self.scenario.build_geometry()?)?;
        self.warnings.extend(field.warnings.iter().cloned());
        self.emit("field.csv", &field.to_csv())?;
        self.emit("field.json", &json(&field.sidecar(Some(self.scenario.seed))))?;
        Ok(field)
    }

    fn radiate(&mut self) -> Result<String> {
        let spec = self.scenario.build_field(self.grid)?;
        let densities = self.densities()?;
        let field = self.field(&spec, &densities)?;
        let (n1, n2) = field.shape();
        Ok(format!("{n1}×{n2} grid written"))
    }

    /// One-dimensional line through the radiate grid along its first
    /// non-subcarrier axis, integrated over subcarriers.
    fn validation_line(&self) -> Result<FieldSpec> {
        let mut spec = self.scenario.build_field(self.grid)?;
        let axes = std::iter::once(spec.axis1.clone()).chain(spec.axis2.take());
        let axis = axes
            .into_iter()
            .find(|a| a.kind != AxisKind::Subcarrier)
            .ok_or_else(|| RunError::Config {
                path: "radiate.axis".into(),
                message: "validation needs an angular or range axis".into(),
            })?;
        spec.fixed.subcarrier = None;
        Ok(FieldSpec::line(axis, spec.fixed))
    }

    fn validate(&mut self) -> Result<String> {
        let cfg = self.scenario.build_match()?;
        let (points, unique, images) = self.focal()?;
        let out = FocalOutput {
            order: self.scenario.predict.as_ref().map_or(1, |p| p.order),
            users: self.scenario.users.len(),
            unique_upper_bound: None,
            points: points.iter().map(FocalPoint::record).collect(),
            unique: unique.iter().map(FocalPoint::record).collect(),
            images: images.iter().map(FocalPoint::record).collect(),
        };
        self.emit("focal_points.json", &json(&out))?;
        let line = self.validation_line()?;
        let densities = self.densities()?;
        let field = self.field(&line, &densities)?;
        let report = validate_line(&unique, &images, &field, &cfg)?;
        let matched = report.predictions.iter().filter(|p| p.matched.is_some()).count();
        let summary = ValidationOutput {
            passed: report.passed(),
            axis: report.axis,
            predictions_matched: matched,
            predictions: report.predictions.len(),
            prominent_peaks: report.prominent_peaks,
            unexplained_peaks: report.unexplained.len(),
            explained_by_images: report.explained_by_auxiliary,
            report: &report,
        };
        self.emit("validation.json", &json(&summary))?;
        let text = format!(
            "{matched}/{} predictions matched, {} of {} prominent peaks unexplained",
            report.predictions.len(),
            report.unexplained.len(),
            report.prominent_peaks
        );
        if report.passed() {
            Ok(text)
        } else {
            Err(RunError::Mismatch(text))
        }
    }

    fn rates(&mut self) -> Result<String> {
        let sc = self.scenario;
        let r = sc.rates.as_ref().expect("checked");
        let geometry = sc.build_geometry()?;
        let users = sc.build_users()?;
        let ofdm = sc.build_ofdm()?;
        let mut cells = Vec::new();
        for &precoder in &r.precoders {
            cells.extend(rate_sweep(&RateSweepConfig {
                geometry: geometry.clone(),
                users: users.clone(),
                ofdm: ofdm.clone(),
                precoder,
                evms: r.evms.clone(),
                snr_db: r.snr_db.clone(),
            })?);
        }
        self.emit("rates.csv", &rates_csv(&cells))?;
        Ok(format!("{} rate cells written", cells.len()))
    }

    fn schedule(&mut self) -> Result<String> {
        let sc = self.scenario;
        let s = sc.schedule.as_ref().expect("checked");
        let cfg = SchedulingConfig {
            geometry: sc.build_geometry()?,
            clusters: s.clusters.clone(),
            layout: s.layout,
            precoder: sc.precoder(),
            policies: s.policies.clone(),
            evms: s.evms.clone(),
            snr_db: s.snr_db.clone(),
            realizations: s.realizations,
            seed: sc.seed,
        };
        let results = scheduling_experiment(&cfg)?;
        self.emit("schedule.csv", &results.to_csv())?;
        let mut gains = String::from("policy,baseline,evm,snr_db,relative_gain,stderr\n");
        let baseline = SchedulingPolicy::Unaware;
        for &policy in s.policies.iter().filter(|&&p| p != baseline) {
            for g in results.gains(policy, baseline).into_iter().flatten() {
                gains.push_str(&format!(
                    "{},{},{},{},{:.9},{:.9}\n",
                    policy.name(),
                    baseline.name(),
                    g.evm,
                    g.snr_db,
                    g.relative_gain,
                    g.stderr
                ));
            }
        }
        if s.policies.contains(&baseline) {
            self.emit("gains.csv", &gains)?;
        }
        Ok(format!("{} schedule cells over {} realizations", results.cells.len(), s.realizations))
    }

    fn calibrate(&mut self) -> Result<String> {
        let sc = self.scenario;
        let c = sc.calibrate.as_ref().expect("checked");
        let cal = calibrate_evm(c.target_evm, c.input_power)?;
        let measured = measure_evm(&cal.model, c.input_power, c.samples, &mut stream_rng(sc.seed, 0))?;
        let out = CalibrationOutput {
            order: cal.model.order(),
            memory: cal.model.memory(),
            coeffs: cal.model.coeffs().iter().map(|b| [b.re, b.im]).collect(),
            convention: cal.convention,
            target_evm: c.target_evm,
            analytic_evm: cal.evm.get(cal.convention),
            measured_evm: measured.get(cal.convention),
            measured_evm_power: measured.power,
            input_power: c.input_power,
            samples: c.samples,
            seed: sc.seed,
        };
        self.emit("pa.json", &json(&out))?;
        Ok(format!(
            "target EVM {:.4}: measured {:.4} over {} samples",
            c.target_evm, out.measured_evm, c.samples
        ))
    }
}
