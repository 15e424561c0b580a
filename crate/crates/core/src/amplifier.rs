//! Memory-polynomial power amplifiers and the Bussgang split of their output
//! into a linear part `u_n = G x_n` and distortion `d_n` uncorrelated with
//! the input.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::UnitaryDft;
use crate::error::{Error, Result};
use crate::waveform::{Frame, TransmitPlan};
use crate::{CMatrix, C64};

/// `y[n] = Σ_p Σ_l β_{2p+1}[l] x[n−l] |x[n−l]|^{2p}`, shared by every element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaModel {
    order: usize,
    memory: usize,
    /// Row-major `[p][l]`.
    coeffs: Vec<C64>,
}

impl PaModel {
    pub fn new(order: usize, memory: usize, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != (order + 1) * (memory + 1) {
            return Err(Error::config(
                "pa.coeffs",
                format!("expected {} coefficients for P = {order}, L = {memory}", (order + 1) * (memory + 1)),
            ));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::config("pa.coeffs", "coefficients must be finite"));
        }
        if coeffs[0] == C64::new(0.0, 0.0) {
            return Err(Error::config("pa.coeffs", "β₁[0] must be nonzero"));
        }
        Ok(Self { order, memory, coeffs })
    }

    /// `A(x) = β₁x + β₃x|x|²`.
    pub fn third_order(beta1: C64, beta3: C64) -> Result<Self> {
        Self::new(1, 0, vec![beta1, beta3])
    }

    pub fn linear() -> Self {
        Self {
            order: 0,
            memory: 0,
            coeffs: vec![C64::new(1.0, 0.0)],
        }
    }

    /// Third-order model with 3% EVM at unit input power.
    pub fn evm3() -> Self {
        Self {
            order: 1,
            memory: 0,
            coeffs: vec![C64::new(1.042, 0.0), C64::new(-0.0212, 0.0)],
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "linear" => Some(Self::linear()),
            "evm3" => Some(Self::evm3()),
            _ => None,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// `β_{2p+1}[l]`.
    pub fn beta(&self, p: usize, l: usize) -> C64 {
        if p > self.order || l > self.memory {
            return C64::new(0.0, 0.0);
        }
        self.coeffs[p * (self.memory + 1) + l]
    }

    /// Memoryless with no term above third order.
    pub fn is_third_order_memoryless(&self) -> bool {
        self.memory == 0 && self.order <= 1
    }

    /// `(β₁, β₃)` of a memoryless third-order model.
    pub fn third_order_coeffs(&self) -> Option<(C64, C64)> {
        self.is_third_order_memoryless()
            .then(|| (self.beta(0, 0), self.beta(1, 0)))
    }

    pub fn is_linear(&self) -> bool {
        (1..=self.order).all(|p| (0..=self.memory).all(|l| self.beta(p, l) == C64::new(0.0, 0.0)))
    }

    /// Memoryless transfer function; taps beyond `l = 0` are ignored.
    pub fn evaluate(&self, x: C64) -> C64 {
        let r2 = x.norm_sqr();
        let mut pow = 1.0;
        let mut acc = C64::new(0.0, 0.0);
        for p in 0..=self.order {
            acc += self.beta(p, 0) * pow;
            pow *= r2;
        }
        acc * x
    }

    fn apply_slice(&self, x: &[C64], y: &mut [C64]) {
        let n = x.len();
        let taps = self.memory + 1;
        // basis[p] = x|x|^{2p} per sample, reused across taps
        let mut basis = vec![C64::new(0.0, 0.0); n * (self.order + 1)];
        for (i, &v) in x.iter().enumerate() {
            let r2 = v.norm_sqr();
            let mut t = v;
            for p in 0..=self.order {
                basis[p * n + i] = t;
                t *= r2;
            }
        }
        for (i, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for l in 0..taps {
                let idx = (i + n - l % n) % n;
                for p in 0..=self.order {
                    acc += self.beta(p, l) * basis[p * n + idx];
                }
            }
            *out = acc;
        }
    }
}

/// Applies `model` to every antenna; memory taps wrap circularly over the frame.
pub fn apply_pa(model: &PaModel, frame: &Frame) -> Result<Frame> {
    let n = frame.len();
    if model.memory() > 0 && n <= model.memory() {
        return Err(Error::domain(format!(
            "frame of {n} samples is not longer than PA memory {}",
            model.memory()
        )));
    }
    let mut out = Frame::zeros(frame.num_antennas(), n);
    if n == 0 {
        return Ok(out);
    }
    let data = frame.data();
    let mut buf = out.data().to_vec();
    buf.par_chunks_mut(n)
        .zip(data.par_chunks(n))
        .for_each(|(y, x)| model.apply_slice(x, y));
    out = Frame::from_antenna_major(frame.num_antennas(), n, buf)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvmConvention {
    /// `sqrt(E|d|² / E|u|²)`.
    Amplitude,
    /// `E|d|² / E|u|²`.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvmReport {
    pub amplitude: f64,
    pub power: f64,
}

impl EvmReport {
    fn from_ratio(ratio: f64) -> Self {
        Self {
            amplitude: ratio.sqrt(),
            power: ratio,
        }
    }

    pub fn get(&self, convention: EvmConvention) -> f64 {
        match convention {
            EvmConvention::Amplitude => self.amplitude,
            EvmConvention::Power => self.power,
        }
    }
}

/// Closed-form EVM of a memoryless third-order model under Gaussian input of
/// power `input_power`.
pub fn analytic_evm(model: &PaModel, input_power: f64) -> Result<EvmReport> {
    let (b1, b3) = model
        .third_order_coeffs()
        .ok_or_else(|| Error::domain("closed-form EVM needs a memoryless third-order model"))?;
    let s2 = input_power;
    let g = b1 + b3 * (2.0 * s2);
    let linear = g.norm_sqr() * s2;
    let distortion = 2.0 * b3.norm_sqr() * s2.powi(3);
    Ok(EvmReport::from_ratio(distortion / linear))
}

/// Monte-Carlo EVM from `samples` Gaussian draws, with the linear gain
/// estimated by least squares.
pub fn measure_evm<R: Rng + ?Sized>(model: &PaModel, input_power: f64, samples: usize, rng: &mut R) -> Result<EvmReport> {
    if samples <= model.memory() {
        return Err(Error::InsufficientEnsemble {
            got: samples,
            required: model.memory() + 1,
        });
    }
    let x = gaussian_samples(rng, samples, input_power);
    let frame = Frame::from_antenna_major(1, samples, x)?;
    let y = apply_pa(model, &frame)?;
    let g = regression_gain(frame.data(), y.data());
    let mut du = 0.0;
    let mut uu = 0.0;
    for (xv, yv) in frame.data().iter().zip(y.data()) {
        let u = g * xv;
        du += (yv - u).norm_sqr();
        uu += u.norm_sqr();
    }
    Ok(EvmReport::from_ratio(du / uu))
}

pub(crate) fn gaussian_samples<R: Rng + ?Sized>(rng: &mut R, n: usize, power: f64) -> Vec<C64> {
    let s = (power / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re * s, im * s)
        })
        .collect()
}

/// `Σ y x* / Σ |x|²`.
pub fn regression_gain(x: &[C64], y: &[C64]) -> C64 {
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    for (a, b) in x.iter().zip(y) {
        num += b * a.conj();
        den += a.norm_sqr();
    }
    if den > 0.0 {
        num / den
    } else {
        C64::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: PaModel,
    pub convention: EvmConvention,
    pub evm: EvmReport,
    pub input_power: f64,
}

/// Third-order memoryless model whose amplitude EVM at Gaussian input power
/// `input_power` equals `target_evm`, with `β₁ > 0` chosen so that output and
/// input power coincide.
pub fn calibrate_evm(target_evm: f64, input_power: f64) -> Result<Calibration> {
    if !(0.0..0.3).contains(&target_evm) {
        return Err(Error::domain(format!("target EVM {target_evm} outside [0, 0.3)")));
    }
    if !(input_power > 0.0 && input_power.is_finite()) {
        return Err(Error::domain("input power must be positive"));
    }
    let s2 = input_power;
    // c = β₃/β₁ on (−1/(2σ²), 0]; EVM(c) = √2|c|σ²/|1 + 2cσ²| rises from 0 to ∞.
    let evm_of = |c: f64| 2f64.sqrt() * c.abs() * s2 / (1.0 + 2.0 * c * s2).abs();
    let mut lo = -0.5 / s2;
    let mut hi = 0.0;
    if target_evm > 0.0 {
        if !(evm_of(lo * (1.0 - 1e-12)) > target_evm) {
            return Err(Error::Convergence(format!("EVM {target_evm} not reachable")));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if evm_of(mid) > target_evm {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() < 1e-15 * s2.recip() {
                break;
            }
        }
    }
    let c = if target_evm > 0.0 { 0.5 * (lo + hi) } else { 0.0 };
    if (evm_of(c) - target_evm).abs() > 1e-9 {
        return Err(Error::Convergence(format!(
            "bisection stopped at EVM {} for target {target_evm}",
            evm_of(c)
        )));
    }
    let norm = 1.0 + 4.0 * c * s2 + 6.0 * c * c * s2 * s2;
    let beta1 = norm.sqrt().recip();
    let model = PaModel::third_order(C64::new(beta1, 0.0), C64::new(c * beta1, 0.0))?;
    let evm = analytic_evm(&model, input_power)?;
    Ok(Calibration {
        model,
        convention: EvmConvention::Amplitude,
        evm,
        input_power,
    })
}

/// Per-antenna Bussgang gains `β₁ + 2β₃σ²_m` of a memoryless third-order model.
pub fn bussgang_gain(model: &PaModel, input_powers: &[f64]) -> Result<Vec<C64>> {
    let (b1, b3) = model
        .third_order_coeffs()
        .ok_or_else(|| Error::domain("closed-form Bussgang gain needs a memoryless third-order model"))?;
    Ok(input_powers.iter().map(|&s2| b1 + b3 * (2.0 * s2)).collect())
}

/// Spatial covariance sequence `C[τ] = E[x_n x_{n−τ}ᴴ]` for
/// `τ = 0..num_lags()` of a process periodic in `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSeq {
    lags: Vec<CMatrix>,
    period: usize,
}

impl CovarianceSeq {
    pub fn new(lags: Vec<CMatrix>, period: usize) -> Result<Self> {
        if lags.is_empty() || lags.len() > period {
            return Err(Error::domain("lag window must hold between 1 and `period` lags"));
        }
        let m = lags[0].nrows();
        if lags.iter().any(|c| c.nrows() != m || c.ncols() != m) {
            return Err(Error::domain("covariance lags must be square and the same size"));
        }
        Ok(Self { lags, period })
    }

    pub fn dim(&self) -> usize {
        self.lags[0].nrows()
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn num_lags(&self) -> usize {
        self.lags.len()
    }

    /// Whether every lag of the period is stored.
    pub fn is_full(&self) -> bool {
        self.lags.len() == self.period
    }

    pub fn lag(&self, tau: usize) -> Option<&CMatrix> {
        self.lags.get(tau)
    }

    pub fn lags(&self) -> &[CMatrix] {
        &self.lags
    }

    /// `S[ν] = Σ_τ C[τ] e^{−j2πντ/N}` for `ν ∈ [0, N)`; needs the full period.
    pub fn spectral_density(&self) -> Result<Vec<CMatrix>> {
        if !self.is_full() {
            return Err(Error::domain("spectral density needs the full lag window"));
        }
        let n = self.period;
        let m = self.dim();
        let dft = UnitaryDft::new(n);
        let mut out = vec![CMatrix::zeros(m, m); n];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for j in 0..m {
            for i in 0..m {
                for (tau, c) in self.lags.iter().enumerate() {
                    buf[tau] = c[(i, j)];
                }
                dft.forward_raw(&mut buf);
                for (nu, v) in buf.iter().enumerate() {
                    out[nu][(i, j)] = *v;
                }
            }
        }
        Ok(out)
    }
}

/// Analytic `C_xx[τ] = (1/N) Σ_ν W_ν W_νᴴ e^{+j2πντ/N}` for Gaussian symbols,
/// truncated to `max_lag` when given.
pub fn input_covariance(plan: &TransmitPlan, max_lag: Option<usize>) -> Result<CovarianceSeq> {
    let n = plan.n_fft();
    let m = plan.num_antennas();
    let lags = max_lag.map_or(n, |l| (l + 1).min(n));
    let psd: Vec<(usize, CMatrix)> = plan.iter().map(|(nu, w)| (nu, w * w.adjoint())).collect();
    let out: Vec<CMatrix> = (0..lags)
        .into_par_iter()
        .map(|tau| {
            let mut c = CMatrix::zeros(m, m);
            for (nu, s) in &psd {
                let e = C64::from_polar(1.0 / n as f64, std::f64::consts::TAU * ((nu * tau) % n) as f64 / n as f64);
                c.zip_apply(s, |a, b| *a += b * e);
            }
            c
        })
        .collect();
    CovarianceSeq::new(out, n)
}

fn check_psd(c0: &CMatrix) -> Result<()> {
    let m = c0.nrows();
    let trace: f64 = (0..m).map(|i| c0[(i, i)].re).sum();
    let herm = (c0 - c0.adjoint()).norm();
    if herm > 1e-9 * trace.abs().max(1e-300) * (m as f64) {
        return Err(Error::domain("C_xx[0] is not Hermitian"));
    }
    let eig = ((c0 + c0.adjoint()) * C64::new(0.5, 0.0)).symmetric_eigenvalues();
    if eig.iter().any(|&e| e < -1e-9 * trace.abs()) {
        return Err(Error::domain("C_xx[0] is not positive semidefinite"));
    }
    Ok(())
}

/// Analytic `C_yy[τ]` of `β₁x + β₃x|x|²` under jointly circular Gaussian
/// input, from the Isserlis expansion of `E[y_i[n] y_j*[n−τ]]`.
pub fn output_covariance(model: &PaModel, c_xx: &CovarianceSeq) -> Result<CovarianceSeq> {
    let (b1, b3) = model
        .third_order_coeffs()
        .ok_or_else(|| Error::domain("closed-form output covariance needs a memoryless third-order model"))?;
    let c0 = &c_xx.lags[0];
    check_psd(c0)?;
    let sig: Vec<f64> = (0..c0.nrows()).map(|i| c0[(i, i)].re).collect();
    let lags = c_xx
        .lags
        .par_iter()
        .map(|c| {
            CMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
                let v = c[(i, j)];
                let (si, sj) = (sig[i], sig[j]);
                v * (b1.norm_sqr() + 2.0 * sj * b1 * b3.conj() + 2.0 * si * b3 * b1.conj())
                    + v * b3.norm_sqr() * (4.0 * si * sj + 2.0 * v.norm_sqr())
            })
        })
        .collect();
    CovarianceSeq::new(lags, c_xx.period)
}

/// `C_dd[τ] = C_yy[τ] − G C_xx[τ] Gᴴ` with diagonal `G`.
pub fn distortion_covariance(gains: &[C64], c_xx: &CovarianceSeq, c_yy: &CovarianceSeq) -> Result<CovarianceSeq> {
    if c_xx.num_lags() != c_yy.num_lags() || c_xx.dim() != gains.len() || c_yy.dim() != gains.len() {
        return Err(Error::domain("covariance/gain dimensions disagree"));
    }
    let lags = c_xx
        .lags
        .iter()
        .zip(&c_yy.lags)
        .map(|(x, y)| CMatrix::from_fn(x.nrows(), x.ncols(), |i, j| y[(i, j)] - gains[i] * x[(i, j)] * gains[j].conj()))
        .collect();
    CovarianceSeq::new(lags, c_xx.period)
}

/// One Monte-Carlo realization: the PA input and its output.
#[derive(Debug, Clone)]
pub struct AmplifiedFrame {
    pub input: Frame,
    pub output: Frame,
}

#[derive(Debug, Clone)]
pub struct DecomposeOptions {
    pub min_frames: usize,
    /// Largest stored lag; `None` keeps the whole period.
    pub max_lag: Option<usize>,
    /// Known input covariance (e.g. from [`input_covariance`]); otherwise it
    /// is estimated from the ensemble.
    pub input_covariance: Option<CovarianceSeq>,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            min_frames: 1,
            max_lag: None,
            input_covariance: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BussgangDecomposition {
    pub gains: Vec<C64>,
    pub c_xx: CovarianceSeq,
    pub c_yy: CovarianceSeq,
    pub c_dd: CovarianceSeq,
    /// Largest per-antenna `|⟨d, x⟩| / (‖d‖‖x‖)` over the ensemble; 0 when `d ≡ 0`.
    pub cross_correlation: f64,
    /// Whether `c_yy` came from the closed form.
    pub analytic: bool,
}

impl BussgangDecomposition {
    /// `E‖d_n‖² / E‖u_n‖²`.
    pub fn distortion_to_linear_ratio(&self) -> f64 {
        let c = &self.c_xx.lags[0];
        let d = &self.c_dd.lags[0];
        let lin: f64 = (0..c.nrows()).map(|i| self.gains[i].norm_sqr() * c[(i, i)].re).sum();
        let dist: f64 = (0..d.nrows()).map(|i| d[(i, i)].re).sum();
        dist / lin
    }

    /// `S_uu[ν] = G S_xx[ν] Gᴴ` and `S_dd[ν]`, `ν ∈ [0, N)`.
    pub fn spectral_densities(&self) -> Result<(Vec<CMatrix>, Vec<CMatrix>)> {
        let sxx = self.c_xx.spectral_density()?;
        let g = &self.gains;
        let suu = sxx
            .iter()
            .map(|s| CMatrix::from_fn(s.nrows(), s.ncols(), |i, j| g[i] * s[(i, j)] * g[j].conj()))
            .collect();
        Ok((suu, self.c_dd.spectral_density()?))
    }
}

/// Sample covariance `mean_f (1/N) Σ_n x_n x_{n−τ}ᴴ` with per-entry standard
/// errors across frames (frames are the independent batches).
pub fn sample_covariance(frames: &[&Frame], tau: usize) -> Result<(CMatrix, DMatrix<f64>)> {
    if frames.len() < 2 {
        return Err(Error::InsufficientEnsemble {
            got: frames.len(),
            required: 2,
        });
    }
    let m = frames[0].num_antennas();
    let n = frames[0].len();
    let per_frame: Vec<CMatrix> = frames
        .par_iter()
        .map(|f| {
            CMatrix::from_fn(m, m, |i, j| {
                let xi = f.antenna(i);
                let xj = f.antenna(j);
                let s: C64 = (0..n).map(|t| xi[t] * xj[(t + n - tau % n) % n].conj()).sum();
                s / n as f64
            })
        })
        .collect();
    let count = per_frame.len() as f64;
    let mut mean = CMatrix::zeros(m, m);
    per_frame.iter().for_each(|c| mean += c);
    mean /= C64::new(count, 0.0);
    let mut var = DMatrix::<f64>::zeros(m, m);
    for c in &per_frame {
        for j in 0..m {
            for i in 0..m {
                var[(i, j)] += (c[(i, j)] - mean[(i, j)]).norm_sqr();
            }
        }
    }
    let stderr = var.map(|v| (v / (count - 1.0) / count).sqrt());
    Ok((mean, stderr))
}

fn empirical_sequence(frames: &[&Frame], lags: usize, period: usize) -> Result<CovarianceSeq> {
    let seq = (0..lags)
        .map(|tau| sample_covariance(frames, tau).map(|(c, _)| c))
        .collect::<Result<Vec<_>>>()?;
    CovarianceSeq::new(seq, period)
}

/// Bussgang decomposition of an ensemble. Memoryless third-order models use
/// the closed-form gains and output covariance; other models use per-antenna
/// least-squares gains and sample covariances.
pub fn decompose(model: &PaModel, ensemble: &[AmplifiedFrame], opts: &DecomposeOptions) -> Result<BussgangDecomposition> {
    let required = opts.min_frames.max(1);
    if ensemble.len() < required {
        return Err(Error::InsufficientEnsemble {
            got: ensemble.len(),
            required,
        });
    }
    let m = ensemble[0].input.num_antennas();
    let n = ensemble[0].input.len();
    if ensemble
        .iter()
        .any(|f| f.input.num_antennas() != m || f.output.num_antennas() != m || f.input.len() != n || f.output.len() != n)
    {
        return Err(Error::domain("ensemble frames differ in shape"));
    }
    let lags = opts.max_lag.map_or(n, |l| (l + 1).min(n));
    let inputs: Vec<&Frame> = ensemble.iter().map(|f| &f.input).collect();
    let outputs: Vec<&Frame> = ensemble.iter().map(|f| &f.output).collect();
    let need_empirical_x = opts.input_covariance.is_none();
    if need_empirical_x && ensemble.len() < 2 {
        return Err(Error::InsufficientEnsemble {
            got: ensemble.len(),
            required: 2,
        });
    }
    let c_xx = match &opts.input_covariance {
        Some(c) => {
            if c.dim() != m || c.period() != n || c.num_lags() < lags {
                return Err(Error::domain("supplied input covariance does not match the ensemble"));
            }
            CovarianceSeq::new(c.lags[..lags].to_vec(), n)?
        }
        None => empirical_sequence(&inputs, lags, n)?,
    };

    let analytic = model.is_third_order_memoryless();
    let (gains, c_yy) = if analytic {
        let powers: Vec<f64> = (0..m).map(|i| c_xx.lags[0][(i, i)].re).collect();
        (bussgang_gain(model, &powers)?, output_covariance(model, &c_xx)?)
    } else {
        let gains = (0..m)
            .map(|i| {
                let mut num = C64::new(0.0, 0.0);
                let mut den = 0.0;
                for f in ensemble {
                    for (x, y) in f.input.antenna(i).iter().zip(f.output.antenna(i)) {
                        num += y * x.conj();
                        den += x.norm_sqr();
                    }
                }
                if den > 0.0 { num / den } else { C64::new(0.0, 0.0) }
            })
            .collect::<Vec<_>>();
        if ensemble.len() < 2 {
            return Err(Error::InsufficientEnsemble {
                got: ensemble.len(),
                required: 2,
            });
        }
        (gains, empirical_sequence(&outputs, lags, n)?)
    };
    let c_dd = distortion_covariance(&gains, &c_xx, &c_yy)?;

    let mut cross_correlation: f64 = 0.0;
    for i in 0..m {
        let mut dx = C64::new(0.0, 0.0);
        let mut dd = 0.0;
        let mut xx = 0.0;
        for f in ensemble {
            for (x, y) in f.input.antenna(i).iter().zip(f.output.antenna(i)) {
                let d = y - gains[i] * x;
                dx += d * x.conj();
                dd += d.norm_sqr();
                xx += x.norm_sqr();
            }
        }
        if dd > 0.0 && xx > 0.0 {
            cross_correlation = cross_correlation.max(dx.norm() / (dd * xx).sqrt());
        }
    }

    Ok(BussgangDecomposition {
        gains,
        c_xx,
        c_yy,
        c_dd,
        cross_correlation,
        analytic,
    })
}

/// Bussgang gains and `S_dd[ν]`, `ν ∈ [0, N)`, of a memoryless third-order
/// model driven by `plan`, without materializing the covariance sequences.
///
/// Each entry runs `S_xx → C_xx[τ] → C_dd[τ] = 2|β₃|²|c|²c → S_dd` on its own.
pub fn analytic_distortion_psd(model: &PaModel, plan: &TransmitPlan) -> Result<(Vec<C64>, Vec<CMatrix>)> {
    let (_, b3) = model
        .third_order_coeffs()
        .ok_or_else(|| Error::domain("closed-form distortion needs a memoryless third-order model"))?;
    let n = plan.n_fft();
    let m = plan.num_antennas();
    let gains = bussgang_gain(model, &plan.antenna_powers())?;
    let mut out = vec![CMatrix::zeros(m, m); n];
    if b3 == C64::new(0.0, 0.0) || m == 0 {
        return Ok((gains, out));
    }
    let scale = 2.0 * b3.norm_sqr();
    let dft = UnitaryDft::new(n);
    let mats: Vec<(usize, &CMatrix)> = plan.iter().collect();
    let columns: Vec<Vec<C64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut col = vec![C64::new(0.0, 0.0); m * n];
            let mut buf = vec![C64::new(0.0, 0.0); n];
            for i in 0..m {
                buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                for (nu, w) in &mats {
                    buf[*nu] = w.row(i).iter().zip(w.row(j).iter()).map(|(a, b)| a * b.conj()).sum();
                }
                dft.inverse_raw(&mut buf);
                for v in buf.iter_mut() {
                    let c = *v / n as f64;
                    *v = c * (scale * c.norm_sqr());
                }
                dft.forward_raw(&mut buf);
                col[i * n..(i + 1) * n].copy_from_slice(&buf);
            }
            col
        })
        .collect();
    for (j, col) in columns.iter().enumerate() {
        for i in 0..m {
            for (nu, s) in out.iter_mut().enumerate() {
                s[(i, j)] = col[i * n + nu];
            }
        }
    }
    Ok((gains, out))
}

/// `pᵀ S_dd[ν] p*` for every probe vector `p` and `ν ∈ [0, N)`, streaming over
/// the entries of the analytic third-order `S_dd` instead of storing it.
pub fn analytic_distortion_quadratic(model: &PaModel, plan: &TransmitPlan, probes: &[Vec<C64>]) -> Result<Vec<Vec<f64>>> {
    let (_, b3) = model
        .third_order_coeffs()
        .ok_or_else(|| Error::domain("closed-form distortion needs a memoryless third-order model"))?;
    let n = plan.n_fft();
    let m = plan.num_antennas();
    if probes.iter().any(|p| p.len() != m) {
        return Err(Error::domain("probe length differs from the array size"));
    }
    let zero = vec![vec![0.0; n]; probes.len()];
    if b3 == C64::new(0.0, 0.0) || m == 0 {
        return Ok(zero);
    }
    let scale = 2.0 * b3.norm_sqr();
    let dft = UnitaryDft::new(n);
    let mats: Vec<(usize, &CMatrix)> = plan.iter().collect();
    let partial = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut acc = vec![vec![C64::new(0.0, 0.0); n]; probes.len()];
            let mut buf = vec![C64::new(0.0, 0.0); n];
            for i in 0..m {
                buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                for (nu, w) in &mats {
                    buf[*nu] = w.row(i).iter().zip(w.row(j).iter()).map(|(a, b)| a * b.conj()).sum();
                }
                dft.inverse_raw(&mut buf);
                for v in buf.iter_mut() {
                    let c = *v / n as f64;
                    *v = c * (scale * c.norm_sqr());
                }
                dft.forward_raw(&mut buf);
                for (p, a) in probes.iter().zip(acc.iter_mut()) {
                    let w = p[i] * p[j].conj();
                    a.iter_mut().zip(&buf).for_each(|(s, v)| *s += w * v);
                }
            }
            acc
        })
        .reduce(
            || vec![vec![C64::new(0.0, 0.0); n]; probes.len()],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| x.iter_mut().zip(y).for_each(|(s, v)| *s += v));
                a
            },
        );
    Ok(partial.into_iter().map(|row| row.into_iter().map(|v| v.re).collect()).collect())
}
