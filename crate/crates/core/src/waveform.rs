//! Multi-user OFDM precoding, time-domain synthesis and the active-RIS
//! reflection path. Both paths produce a [`TransmitPlan`]: one `M × K`
//! matrix `W_ν` per occupied subcarrier such that the pre-amplifier spectrum
//! is `x̂_ν = W_ν s_ν`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{steering_vector, LosChannel, SphericalPoint};
use crate::dsp::UnitaryDft;
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::{CMatrix, C64};

/// Largest Gram-matrix condition number accepted by zero forcing.
pub const MAX_ZF_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Allocation {
    /// Every user on every occupied subcarrier.
    Shared,
    /// User `k` only on `blocks[k]`.
    SubBand(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    n_fft: usize,
    occupied: Vec<usize>,
    allocation: Allocation,
}

impl OfdmConfig {
    pub fn new(n_fft: usize, occupied: Vec<usize>, allocation: Allocation) -> Result<Self> {
        if n_fft == 0 {
            return Err(Error::config("ofdm.n_fft", "must be at least 1"));
        }
        if occupied.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("ofdm.occupied", "must be strictly increasing"));
        }
        if occupied.last().is_some_and(|&v| v >= n_fft) {
            return Err(Error::config("ofdm.occupied", format!("indices must be below n_fft = {n_fft}")));
        }
        if let Allocation::SubBand(blocks) = &allocation {
            let mut owner = vec![None; n_fft];
            for (k, block) in blocks.iter().enumerate() {
                for &nu in block {
                    if occupied.binary_search(&nu).is_err() {
                        return Err(Error::config(
                            format!("ofdm.allocation[{k}]"),
                            format!("subcarrier {nu} is not occupied"),
                        ));
                    }
                    if let Some(other) = owner[nu].replace(k) {
                        return Err(Error::config(
                            format!("ofdm.allocation[{k}]"),
                            format!("subcarrier {nu} already allocated to user {other}"),
                        ));
                    }
                }
            }
        }
        Ok(Self {
            n_fft,
            occupied,
            allocation,
        })
    }

    pub fn shared(n_fft: usize, occupied: Vec<usize>) -> Result<Self> {
        Self::new(n_fft, occupied, Allocation::Shared)
    }

    /// Splits `occupied` into `users` equal contiguous sub-bands (the remainder
    /// goes to the first bands).
    pub fn contiguous_subbands(n_fft: usize, occupied: Vec<usize>, users: usize) -> Result<Self> {
        if users == 0 {
            return Err(Error::config("ofdm.allocation", "needs at least one user"));
        }
        let base = occupied.len() / users;
        let extra = occupied.len() % users;
        let mut blocks = Vec::with_capacity(users);
        let mut start = 0;
        for k in 0..users {
            let len = base + usize::from(k < extra);
            blocks.push(occupied[start..start + len].to_vec());
            start += len;
        }
        Self::new(n_fft, occupied, Allocation::SubBand(blocks))
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn occupied(&self) -> &[usize] {
        &self.occupied
    }

    pub fn num_occupied(&self) -> usize {
        self.occupied.len()
    }

    pub fn allocation(&self) -> &Allocation {
        &self.allocation
    }

    /// Whether user `k` transmits on subcarrier `nu`.
    pub fn is_active(&self, k: usize, nu: usize) -> bool {
        match &self.allocation {
            Allocation::Shared => self.occupied.binary_search(&nu).is_ok(),
            Allocation::SubBand(blocks) => blocks.get(k).is_some_and(|b| b.contains(&nu)),
        }
    }

    /// Subcarriers carrying user `k` (given `num_users` in shared mode).
    pub fn user_subcarriers(&self, k: usize) -> Vec<usize> {
        match &self.allocation {
            Allocation::Shared => self.occupied.clone(),
            Allocation::SubBand(blocks) => blocks.get(k).cloned().unwrap_or_default(),
        }
    }

    fn check_users(&self, users: usize) -> Result<()> {
        if let Allocation::SubBand(blocks) = &self.allocation {
            if blocks.len() != users {
                return Err(Error::config(
                    "ofdm.allocation",
                    format!("{} sub-bands for {users} users", blocks.len()),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecoderKind {
    Mrt,
    Zf,
}

impl std::fmt::Display for PrecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrecoderKind::Mrt => "mrt",
            PrecoderKind::Zf => "zf",
        })
    }
}

/// Unnormalized MRT precoder `A* F_ν*`.
pub fn mrt_precoder(steering: &CMatrix, f: &[C64]) -> CMatrix {
    let mut p = steering.conjugate();
    for (k, fk) in f.iter().enumerate() {
        let c = fk.conj();
        p.column_mut(k).iter_mut().for_each(|v| *v *= c);
    }
    p
}

/// Unnormalized ZF precoder `A* (F_ν Aᵀ A*)⁻¹`, so that `Ĥ_νᵀ P = I`.
pub fn zf_precoder(steering: &CMatrix, f: &[C64]) -> Result<CMatrix> {
    let a_conj = steering.conjugate();
    let mut gram = steering.transpose() * &a_conj;
    for (k, fk) in f.iter().enumerate() {
        gram.row_mut(k).iter_mut().for_each(|v| *v *= fk);
    }
    let sv = gram.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_ZF_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let inv = gram
        .try_inverse()
        .ok_or(Error::IllConditioned { condition })?;
    Ok(a_conj * inv)
}

/// Scalar `α` meeting `E[Σ_n ‖x_n‖²] = P·S` for unit-variance symbols, given
/// unnormalized precoders of every occupied subcarrier.
pub fn normalize_power(precoders: &[CMatrix], power: f64, occupied: usize) -> Result<f64> {
    if !(power > 0.0) {
        return Err(Error::domain("transmit power must be positive"));
    }
    let total: f64 = precoders.iter().map(|p| p.norm_squared()).sum();
    if !(total > 0.0) {
        return Err(Error::domain("precoders have zero norm"));
    }
    Ok((power * occupied as f64 / total).sqrt())
}

/// Budget `P` giving a mean per-antenna, per-sample input power of
/// `per_antenna`: `P·S = per_antenna · N · M`.
pub fn power_for_antenna_power(ofdm: &OfdmConfig, antennas: usize, per_antenna: f64) -> f64 {
    per_antenna * (ofdm.n_fft() * antennas) as f64 / ofdm.num_occupied().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransmitKind {
    Precoded(PrecoderKind),
    RisReflection,
}

/// Per-subcarrier transmit matrices `W_ν` of one scenario.
#[derive(Debug, Clone)]
pub struct TransmitPlan {
    n_fft: usize,
    subcarriers: Vec<usize>,
    matrices: Vec<CMatrix>,
    alpha: f64,
    kind: TransmitKind,
}

impl TransmitPlan {
    /// Normalized MRT/ZF precoders with average power budget `power`. In
    /// sub-band mode only the users active on a subcarrier are precoded there.
    pub fn precoded(kind: PrecoderKind, channel: &LosChannel, ofdm: &OfdmConfig, power: f64) -> Result<Self> {
        let users = channel.num_users();
        ofdm.check_users(users)?;
        let m = channel.num_antennas();
        let mut raw = Vec::with_capacity(ofdm.num_occupied());
        for &nu in ofdm.occupied() {
            let active: Vec<usize> = (0..users).filter(|&k| ofdm.is_active(k, nu)).collect();
            let mut full = CMatrix::zeros(m, users);
            if !active.is_empty() {
                let f_all = channel.frequency_factors(nu);
                let sub_a = channel.steering().select_columns(active.iter());
                let sub_f: Vec<C64> = active.iter().map(|&k| f_all[k]).collect();
                let p = match kind {
                    PrecoderKind::Mrt => mrt_precoder(&sub_a, &sub_f),
                    PrecoderKind::Zf => zf_precoder(&sub_a, &sub_f)?,
                };
                for (j, &k) in active.iter().enumerate() {
                    full.set_column(k, &p.column(j));
                }
            }
            raw.push(full);
        }
        let alpha = normalize_power(&raw, power, ofdm.num_occupied())?;
        raw.iter_mut().for_each(|p| *p *= C64::new(alpha, 0.0));
        Ok(Self {
            n_fft: ofdm.n_fft(),
            subcarriers: ofdm.occupied().to_vec(),
            matrices: raw,
            alpha,
            kind: TransmitKind::Precoded(kind),
        })
    }

    /// Active-RIS reflection `W_ν = Φ A F_ν`, masked by the allocation. No
    /// power normalization is applied.
    pub fn ris(geometry: &ArrayGeometry, ris: &RisConfig, channel: &LosChannel, ofdm: &OfdmConfig) -> Result<Self> {
        let users = channel.num_users();
        ofdm.check_users(users)?;
        let phi = ris_phase_profile(geometry, ris);
        let mut matrices = Vec::with_capacity(ofdm.num_occupied());
        for &nu in ofdm.occupied() {
            let f = channel.frequency_factors(nu);
            let mut w = channel.steering().clone();
            for (i, mut row) in w.row_iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v *= phi[i]);
            }
            for k in 0..users {
                let c = if ofdm.is_active(k, nu) { f[k] } else { C64::new(0.0, 0.0) };
                w.column_mut(k).iter_mut().for_each(|v| *v *= c);
            }
            matrices.push(w);
        }
        Ok(Self {
            n_fft: ofdm.n_fft(),
            subcarriers: ofdm.occupied().to_vec(),
            matrices,
            alpha: 1.0,
            kind: TransmitKind::RisReflection,
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn num_antennas(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    pub fn num_users(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.ncols())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kind(&self) -> TransmitKind {
        self.kind
    }

    pub fn subcarriers(&self) -> &[usize] {
        &self.subcarriers
    }

    /// `(ν, W_ν)` pairs in subcarrier order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &CMatrix)> {
        self.subcarriers.iter().copied().zip(&self.matrices)
    }

    pub fn matrix(&self, nu: usize) -> Option<&CMatrix> {
        self.subcarriers
            .binary_search(&nu)
            .ok()
            .map(|i| &self.matrices[i])
    }

    /// Mean per-sample input power of each antenna, `[C_xx[0]]_{mm}`.
    pub fn antenna_powers(&self) -> Vec<f64> {
        let m = self.num_antennas();
        let mut out = vec![0.0; m];
        for w in &self.matrices {
            for (i, row) in w.row_iter().enumerate() {
                out[i] += row.iter().map(|v| v.norm_sqr()).sum::<f64>();
            }
        }
        out.iter_mut().for_each(|v| *v /= self.n_fft as f64);
        out
    }

    /// Expected frame energy `E[Σ_n ‖x_n‖²] = Σ_ν ‖W_ν‖_F²`.
    pub fn expected_energy(&self) -> f64 {
        self.matrices.iter().map(|w| w.norm_squared()).sum()
    }

    /// Input spectral density `S_xx[ν] = W_ν W_νᴴ` for all `ν ∈ [0, N)`.
    pub fn input_psd(&self) -> Vec<CMatrix> {
        let m = self.num_antennas();
        let mut out = vec![CMatrix::zeros(m, m); self.n_fft];
        for (nu, w) in self.iter() {
            out[nu] = w * w.adjoint();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolDistribution {
    /// Unit-variance circularly-symmetric complex Gaussian.
    #[default]
    Gaussian,
    Qpsk,
}

/// Frequency-domain data symbols `s_k[ν]`, zero where a user is inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbols {
    users: usize,
    subcarriers: Vec<usize>,
    values: Vec<C64>,
}

impl Symbols {
    pub fn new(users: usize, subcarriers: Vec<usize>, values: Vec<C64>) -> Result<Self> {
        if values.len() != users * subcarriers.len() {
            return Err(Error::domain("symbol count does not match users × subcarriers"));
        }
        Ok(Self {
            users,
            subcarriers,
            values,
        })
    }

    pub fn draw<R: Rng + ?Sized>(rng: &mut R, dist: SymbolDistribution, users: usize, ofdm: &OfdmConfig) -> Self {
        let mut values = Vec::with_capacity(users * ofdm.num_occupied());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for &nu in ofdm.occupied() {
            for k in 0..users {
                let s = match dist {
                    SymbolDistribution::Gaussian => {
                        let re: f64 = StandardNormal.sample(rng);
                        let im: f64 = StandardNormal.sample(rng);
                        C64::new(re * h, im * h)
                    }
                    SymbolDistribution::Qpsk => {
                        let b: u8 = rng.random_range(0..4);
                        C64::new(if b & 1 == 0 { h } else { -h }, if b & 2 == 0 { h } else { -h })
                    }
                };
                values.push(if ofdm.is_active(k, nu) { s } else { C64::new(0.0, 0.0) });
            }
        }
        Self {
            users,
            subcarriers: ofdm.occupied().to_vec(),
            values,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    /// `s_ν` for the `i`-th occupied subcarrier.
    pub fn at(&self, i: usize) -> &[C64] {
        &self.values[i * self.users..(i + 1) * self.users]
    }

    pub fn subcarriers(&self) -> &[usize] {
        &self.subcarriers
    }

    /// Applies `e^{jψ}` to every symbol.
    pub fn rotated(&self, psi: f64) -> Self {
        let r = C64::from_polar(1.0, psi);
        Self {
            users: self.users,
            subcarriers: self.subcarriers.clone(),
            values: self.values.iter().map(|v| v * r).collect(),
        }
    }
}

/// Time-domain samples of `M` antennas, each `N` long, stored antenna-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    antennas: usize,
    len: usize,
    data: Vec<C64>,
}

impl Frame {
    pub fn zeros(antennas: usize, len: usize) -> Self {
        Self {
            antennas,
            len,
            data: vec![C64::new(0.0, 0.0); antennas * len],
        }
    }

    pub fn from_antenna_major(antennas: usize, len: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != antennas * len {
            return Err(Error::domain("frame data length mismatch"));
        }
        Ok(Self { antennas, len, data })
    }

    pub fn num_antennas(&self) -> usize {
        self.antennas
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn antenna(&self, m: usize) -> &[C64] {
        &self.data[m * self.len..(m + 1) * self.len]
    }

    pub fn antenna_mut(&mut self, m: usize) -> &mut [C64] {
        &mut self.data[m * self.len..(m + 1) * self.len]
    }

    /// `x_m[n]`.
    pub fn sample(&self, m: usize, n: usize) -> C64 {
        self.data[m * self.len + n]
    }

    /// `x_n` across the array.
    pub fn snapshot(&self, n: usize) -> Vec<C64> {
        (0..self.antennas).map(|m| self.sample(m, n)).collect()
    }

    /// `Σ_n ‖x_n‖²`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }
}

/// A synthesized pre-amplifier frame.
#[derive(Debug, Clone)]
pub struct PrecodedFrame {
    pub samples: Frame,
    pub alpha: f64,
    /// `None` for RIS reflections.
    pub precoder_kind: Option<PrecoderKind>,
    pub symbols: Symbols,
}

/// OFDM synthesis `x_n = N^{-1/2} Σ_{ν∈S} W_ν s_ν e^{jν2πn/N}`.
pub fn synthesize(ofdm: &OfdmConfig, plan: &TransmitPlan, symbols: &Symbols) -> Result<PrecodedFrame> {
    if plan.subcarriers() != ofdm.occupied() || plan.n_fft() != ofdm.n_fft() {
        return Err(Error::config("ofdm", "transmit plan was built for a different OFDM configuration"));
    }
    if symbols.subcarriers() != ofdm.occupied() {
        return Err(Error::config("ofdm", "symbols were drawn for a different OFDM configuration"));
    }
    if !ofdm.occupied().is_empty() && symbols.num_users() != plan.num_users() {
        return Err(Error::domain("symbol/user count mismatch"));
    }
    let n = ofdm.n_fft();
    let m = plan.num_antennas();
    let mut frame = Frame::zeros(m, n);
    if m > 0 {
        let dft = UnitaryDft::new(n);
        for (i, (nu, w)) in plan.iter().enumerate() {
            let s = symbols.at(i);
            for ant in 0..m {
                let v: C64 = w.row(ant).iter().zip(s).map(|(a, b)| a * b).sum();
                frame.antenna_mut(ant)[nu] = v;
            }
        }
        for ant in 0..m {
            dft.inverse(frame.antenna_mut(ant));
        }
    }
    let precoder_kind = match plan.kind() {
        TransmitKind::Precoded(k) => Some(k),
        TransmitKind::RisReflection => None,
    };
    Ok(PrecodedFrame {
        samples: frame,
        alpha: plan.alpha(),
        precoder_kind,
        symbols: symbols.clone(),
    })
}

/// RIS phase configuration: conjugates the phase profile of `steer_from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisConfig {
    pub steer_from: SphericalPoint,
}

/// Diagonal of `Φ`: `e^{−j 2π/λ φ_m(steer_from)}`.
pub fn ris_phase_profile(geometry: &ArrayGeometry, ris: &RisConfig) -> Vec<C64> {
    steering_vector(geometry, &ris.steer_from)
        .into_iter()
        .map(|v| v.conj())
        .collect()
}

/// Phase-shifted RIS signal `x_n = Φ Σ_k a_k s_k[n]` before the cell amplifiers.
pub fn ris_phase_shift(
    geometry: &ArrayGeometry,
    ris: &RisConfig,
    channel: &LosChannel,
    ofdm: &OfdmConfig,
    symbols: &Symbols,
) -> Result<PrecodedFrame> {
    let plan = TransmitPlan::ris(geometry, ris, channel, ofdm)?;
    synthesize(ofdm, &plan, symbols)
}
