//! SINDR, sum rate and distortion-aware sub-band scheduling.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplifier::{analytic_distortion_quadratic, bussgang_gain, calibrate_evm, PaModel};
use crate::channel::{LosChannel, SphericalPoint, UserChannelParams};
use crate::error::{Error, Result};
use crate::focal::FocalCoefficients;
use crate::geometry::ArrayGeometry;
use crate::montecarlo::stream_rng;
use crate::radiation::SpectralDensity;
use crate::waveform::{power_for_antenna_power, Allocation, OfdmConfig, PrecoderKind, TransmitPlan};
use crate::C64;

/// `SNR = ρ/σ_n²` with `ρ` the received power, taken equal to the total
/// amplified transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub snr_db: f64,
}

impl LinkBudget {
    pub fn new(snr_db: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::config("snr_db", "must be finite"));
        }
        Ok(Self { snr_db })
    }

    pub fn snr(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// `σ_n² = ρ / SNR`.
    pub fn noise_power(&self, received_power: f64) -> f64 {
        received_power / self.snr()
    }
}

/// Signal, interference and distortion powers of user `k` on subcarrier `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkTerms {
    pub signal: f64,
    pub interference: f64,
    pub distortion: f64,
}

impl LinkTerms {
    pub fn sindr(&self, noise_power: f64) -> f64 {
        self.signal / (self.interference + self.distortion + noise_power)
    }
}

/// `γ_k[ν] = |h_kᵀ G w_k|² / (Σ_{i≠k} |h_kᵀ G w_i|² + h_kᵀ S_dd[ν] h_k* + σ_n²)`.
pub fn sindr(
    k: usize,
    nu: usize,
    channel: &LosChannel,
    plan: &TransmitPlan,
    gains: &[C64],
    s_dd: &SpectralDensity,
    noise_power: f64,
) -> Result<f64> {
    let h = channel.matrix(nu).column(k).iter().copied().collect::<Vec<_>>();
    let terms = link_terms(k, nu, &h, plan, gains, s_dd.quadratic(nu, &h))?;
    Ok(terms.sindr(noise_power))
}

fn link_terms(k: usize, nu: usize, h: &[C64], plan: &TransmitPlan, gains: &[C64], distortion: f64) -> Result<LinkTerms> {
    let w = plan
        .matrix(nu)
        .ok_or_else(|| Error::domain(format!("subcarrier {nu} is not occupied")))?;
    let mut signal = 0.0;
    let mut interference = 0.0;
    for i in 0..w.ncols() {
        let v: C64 = (0..w.nrows()).map(|m| h[m] * gains[m] * w[(m, i)]).sum();
        if i == k {
            signal = v.norm_sqr();
        } else {
            interference += v.norm_sqr();
        }
    }
    Ok(LinkTerms {
        signal,
        interference,
        distortion: distortion.max(0.0),
    })
}

/// Per-user link terms on each allocated subcarrier, for a memoryless
/// third-order model with the closed-form distortion.
#[derive(Debug, Clone)]
pub struct LinkTable {
    /// `(user, ν, terms)`.
    pub entries: Vec<(usize, usize, LinkTerms)>,
    /// Total amplified power per sample, `tr C_yy[0]`.
    pub received_power: f64,
    pub occupied: usize,
}

impl LinkTable {
    pub fn build(model: &PaModel, channel: &LosChannel, ofdm: &OfdmConfig, plan: &TransmitPlan) -> Result<Self> {
        let (_, b3) = model
            .third_order_coeffs()
            .ok_or_else(|| Error::domain("rate evaluation needs a memoryless third-order model"))?;
        let powers = plan.antenna_powers();
        let gains = bussgang_gain(model, &powers)?;
        let received_power = powers
            .iter()
            .zip(&gains)
            .map(|(s2, g)| g.norm_sqr() * s2 + 2.0 * b3.norm_sqr() * s2.powi(3))
            .sum();
        let k = channel.num_users();
        // h_k[ν] = a_k g_k e^{−j2πτ_kν}; only |g_k| survives the quadratic form
        let probes: Vec<Vec<C64>> = (0..k)
            .map(|u| {
                let g = channel.gains()[u].norm();
                channel.steering().column(u).iter().map(|&a| a * g).collect()
            })
            .collect();
        let dist = analytic_distortion_quadratic(model, plan, &probes)?;
        let mut entries = Vec::new();
        for u in 0..k {
            for nu in ofdm.user_subcarriers(u) {
                let h: Vec<C64> = channel.matrix(nu).column(u).iter().copied().collect();
                entries.push((u, nu, link_terms(u, nu, &h, plan, &gains, dist[u][nu])?));
            }
        }
        Ok(Self {
            entries,
            received_power,
            occupied: ofdm.num_occupied(),
        })
    }

    /// `R = (1/S) Σ_k Σ_ν log₂(1 + γ_k[ν])`.
    pub fn sum_rate(&self, budget: &LinkBudget) -> f64 {
        let noise = budget.noise_power(self.received_power);
        let total: f64 = self.entries.iter().map(|(_, _, t)| (1.0 + t.sindr(noise)).log2()).sum();
        total / self.occupied.max(1) as f64
    }
}

/// `R = (1/S) Σ log₂(1 + γ)` over a list of SINDR values.
pub fn sum_rate(sindrs: &[f64], occupied: usize) -> f64 {
    sindrs.iter().map(|g| (1.0 + g.max(0.0)).log2()).sum::<f64>() / occupied.max(1) as f64
}

/// PA model of a given EVM: linear at 0, otherwise calibrated at unit input power.
pub fn model_for_evm(evm: f64) -> Result<PaModel> {
    if evm == 0.0 {
        PaModel::third_order(C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    } else {
        Ok(calibrate_evm(evm, 1.0)?.model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSweepConfig {
    pub geometry: ArrayGeometry,
    pub users: Vec<UserChannelParams>,
    pub ofdm: OfdmConfig,
    pub precoder: PrecoderKind,
    pub evms: Vec<f64>,
    pub snr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub precoder: PrecoderKind,
    pub evm: f64,
    pub snr_db: f64,
    pub sum_rate: f64,
}

/// Sum rate over an EVM × SNR grid, at unit mean per-antenna input power.
pub fn rate_sweep(cfg: &RateSweepConfig) -> Result<Vec<RateCell>> {
    let channel = LosChannel::new(&cfg.users, &cfg.geometry)?;
    let power = power_for_antenna_power(&cfg.ofdm, cfg.geometry.num_elements(), 1.0);
    let plan = TransmitPlan::precoded(cfg.precoder, &channel, &cfg.ofdm, power)?;
    let mut out = Vec::new();
    for &evm in &cfg.evms {
        let table = LinkTable::build(&model_for_evm(evm)?, &channel, &cfg.ofdm, &plan)?;
        for &snr_db in &cfg.snr_db {
            out.push(RateCell {
                precoder: cfg.precoder,
                evm,
                snr_db,
                sum_rate: table.sum_rate(&LinkBudget::new(snr_db)?),
            });
        }
    }
    Ok(out)
}

pub fn rates_csv(cells: &[RateCell]) -> String {
    let mut s = String::from("precoder,evm,snr_db,sum_rate\n");
    for c in cells {
        s.push_str(&format!("{},{},{},{:.9}\n", c.precoder, c.evm, c.snr_db, c.sum_rate));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulingPolicy {
    /// Uniformly random co-scheduled set.
    Unaware,
    /// One user per cluster and a block order minimizing the predicted
    /// distortion exposure of the co-scheduled users.
    Aware,
    /// One random user per cluster, blocks in random order.
    AwareLite,
}

impl SchedulingPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulingPolicy::Unaware => "unaware",
            SchedulingPolicy::Aware => "aware",
            SchedulingPolicy::AwareLite => "aware-lite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteredUser {
    pub position: SphericalPoint,
    pub cluster: usize,
}

/// Contiguous equal blocks: block `i` is `offset + i·stride .. + width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubBandLayout {
    pub n_fft: usize,
    pub users: usize,
    pub width: usize,
    pub stride: usize,
    pub offset: usize,
}

impl Default for SubBandLayout {
    fn default() -> Self {
        Self {
            n_fft: 128,
            users: 4,
            width: 30,
            stride: 32,
            offset: 1,
        }
    }
}

impl SubBandLayout {
    pub fn blocks(&self) -> Result<Vec<Vec<usize>>> {
        if self.users == 0 || self.width == 0 || self.width > self.stride {
            return Err(Error::config("schedule.layout", "needs users ≥ 1 and 1 ≤ width ≤ stride"));
        }
        let end = self.offset + (self.users - 1) * self.stride + self.width;
        if end > self.n_fft {
            return Err(Error::config("schedule.layout", format!("blocks end at {end} > n_fft = {}", self.n_fft)));
        }
        Ok((0..self.users)
            .map(|i| (self.offset + i * self.stride..self.offset + i * self.stride + self.width).collect())
            .collect())
    }

    pub fn ofdm(&self) -> Result<OfdmConfig> {
        let blocks = self.blocks()?;
        let occupied: Vec<usize> = blocks.iter().flatten().copied().collect();
        OfdmConfig::new(self.n_fft, occupied, Allocation::SubBand(blocks))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleAssignment {
    /// Indices into the candidate list; entry `i` gets block `i`.
    pub coscheduled: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
    pub policy: SchedulingPolicy,
    pub seed: u64,
    /// Aware objective of the chosen set: `Σ_k ln` of the predicted exposure.
    pub objective: Option<f64>,
}

/// Share of the third-order products of blocks `(a, b, c)` at frequencies
/// `ν_a − ν_b + ν_c mod N` that fall into block `k`, indexed
/// `((a·B + b)·B + c)·B + k`.
fn spectral_spill(blocks: &[Vec<usize>], n_fft: usize) -> Vec<f64> {
    let nb = blocks.len();
    let mut owner = vec![usize::MAX; n_fft];
    for (i, b) in blocks.iter().enumerate() {
        b.iter().for_each(|&nu| owner[nu] = i);
    }
    let mut out = vec![0.0; nb * nb * nb * nb];
    for a in 0..nb {
        for b in 0..nb {
            let mut diff = vec![0.0; n_fft];
            for &x in &blocks[a] {
                for &y in &blocks[b] {
                    diff[(x + n_fft - y) % n_fft] += 1.0;
                }
            }
            for c in 0..nb {
                let total = (blocks[a].len() * blocks[b].len() * blocks[c].len()) as f64;
                let base = ((a * nb + b) * nb + c) * nb;
                for (d, &w) in diff.iter().enumerate().filter(|(_, w)| **w > 0.0) {
                    for &z in &blocks[c] {
                        let k = owner[(d + z) % n_fft];
                        if k != usize::MAX {
                            out[base + k] += w / total;
                        }
                    }
                }
            }
        }
    }
    out
}

/// `|aᵀ(t) a*(f)|² / M²` under the Fresnel phase, separable over rows and columns.
fn beam_overlap(geometry: &ArrayGeometry, t: &FocalCoefficients, f: &FocalCoefficients) -> f64 {
    let k = geometry.wavenumber();
    let (du_z, du_y) = (t.sin_elevation - f.sin_elevation, t.azimuth_cosine - f.azimuth_cosine);
    let dinv = t.inverse_range - f.inverse_range;
    let line = |count: usize, spacing: f64, du: f64| {
        let s: C64 = (0..count)
            .map(|i| {
                let x = i as f64 * spacing;
                C64::from_polar(1.0, k * (du * x - dinv * x * x / 2.0))
            })
            .sum();
        s.norm_sqr() / (count * count) as f64
    };
    line(geometry.m_y(), geometry.d_y(), du_y) * line(geometry.m_z(), geometry.d_z(), du_z)
}

/// Predicted in-band third-order exposure of each user when user `i` of
/// `users` transmits on block `i`: every product `(a, b, c)` focuses at its
/// Theorem-1 point and spills into block `k` by [`spectral_spill`]. The array
/// factor around the focal point carries grating lobes along.
pub fn distortion_exposure(users: &[SphericalPoint], layout: &SubBandLayout, geometry: &ArrayGeometry) -> Result<Vec<f64>> {
    let blocks = layout.blocks()?;
    if users.len() != blocks.len() {
        return Err(Error::config("schedule.users", format!("{} users for {} blocks", users.len(), blocks.len())));
    }
    let spill = spectral_spill(&blocks, layout.n_fft);
    Ok(exposure_with(users, &spill, geometry))
}

fn exposure_with(users: &[SphericalPoint], spill: &[f64], geometry: &ArrayGeometry) -> Vec<f64> {
    let nb = users.len();
    let own: Vec<FocalCoefficients> = users.iter().map(FocalCoefficients::from_point).collect();
    let mut exposure = vec![0.0; nb];
    for t in crate::focal::alternating_sums(users, 1) {
        let (a, b, c) = (t.0[0], t.0[1], t.0[2]);
        let base = ((a * nb + b) * nb + c) * nb;
        for (k, e) in exposure.iter_mut().enumerate() {
            let w = spill[base + k];
            if w > 0.0 {
                *e += w * beam_overlap(geometry, &t.1, &own[k]);
            }
        }
    }
    exposure
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Block orders tried by the aware policy; beyond this many users only the
/// cluster order is used.
const MAX_PERMUTED_USERS: usize = 6;

fn cluster_members(users: &[ClusteredUser]) -> Vec<Vec<usize>> {
    let n = users.iter().map(|u| u.cluster + 1).max().unwrap_or(0);
    let mut members = vec![Vec::new(); n];
    for (i, u) in users.iter().enumerate() {
        members[u.cluster].push(i);
    }
    members.retain(|m| !m.is_empty());
    members
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Picks `layout.users` users and assigns them the layout's blocks.
pub fn schedule(
    users: &[ClusteredUser],
    policy: SchedulingPolicy,
    layout: &SubBandLayout,
    geometry: &ArrayGeometry,
    seed: u64,
) -> Result<ScheduleAssignment> {
    let count = layout.users;
    if users.len() < count {
        return Err(Error::config("schedule.users", format!("{} users for {count} slots", users.len())));
    }
    let blocks = layout.blocks()?;
    let mut rng = stream_rng(seed, 0);
    let clusters = cluster_members(users);
    if policy != SchedulingPolicy::Unaware && clusters.len() < count {
        return Err(Error::config(
            "schedule.clusters",
            format!("{} clusters cannot host {count} users one per cluster", clusters.len()),
        ));
    }
    let (coscheduled, objective) = match policy {
        SchedulingPolicy::Unaware => {
            let mut idx: Vec<usize> = (0..users.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(count);
            (idx, None)
        }
        SchedulingPolicy::AwareLite => {
            let mut order: Vec<usize> = (0..clusters.len()).collect();
            order.shuffle(&mut rng);
            let chosen: Vec<usize> = order[..count]
                .iter()
                .map(|&c| clusters[c][rng.random_range(0..clusters[c].len())])
                .collect();
            (chosen, None)
        }
        SchedulingPolicy::Aware => {
            let spill = spectral_spill(&blocks, layout.n_fft);
            let orders = if count <= MAX_PERMUTED_USERS {
                permutations(count)
            } else {
                vec![(0..count).collect()]
            };
            let mut best: Option<(f64, Vec<usize>)> = None;
            for subset in combinations(clusters.len(), count) {
                let sizes: Vec<usize> = subset.iter().map(|&c| clusters[c].len()).collect();
                let total: usize = sizes.iter().product();
                for mut code in 0..total {
                    let pick: Vec<usize> = subset
                        .iter()
                        .zip(&sizes)
                        .map(|(&c, &s)| {
                            let v = clusters[c][code % s];
                            code /= s;
                            v
                        })
                        .collect();
                    for order in &orders {
                        let sel: Vec<usize> = order.iter().map(|&i| pick[i]).collect();
                        let pos: Vec<SphericalPoint> = sel.iter().map(|&i| users[i].position).collect();
                        // sum-rate proxy in the distortion-limited regime
                        let score: f64 = exposure_with(&pos, &spill, geometry).iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).sum();
                        if best.as_ref().is_none_or(|(b, _)| score < *b) {
                            best = Some((score, sel));
                        }
                    }
                }
            }
            let (score, pick) = best.expect("at least one candidate set");
            (pick, Some(score))
        }
    };
    Ok(ScheduleAssignment {
        coscheduled,
        blocks,
        policy,
        seed,
        objective,
    })
}

/// Cluster layout of the scheduling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGeometry {
    pub azimuths_deg: Vec<f64>,
    pub elevation_deg: f64,
    pub users_per_cluster: usize,
    pub jitter_deg: f64,
}

impl Default for ClusterGeometry {
    fn default() -> Self {
        Self {
            azimuths_deg: vec![-40.0, -10.0, 20.0, 50.0],
            elevation_deg: 0.0,
            users_per_cluster: 3,
            jitter_deg: 1.5,
        }
    }
}

impl ClusterGeometry {
    /// Far-field users with azimuths jittered uniformly by `±jitter_deg`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<ClusteredUser>> {
        let mut out = Vec::new();
        for (c, &az) in self.azimuths_deg.iter().enumerate() {
            for _ in 0..self.users_per_cluster {
                let j = if self.jitter_deg > 0.0 {
                    rng.random_range(-self.jitter_deg..=self.jitter_deg)
                } else {
                    0.0
                };
                out.push(ClusteredUser {
                    position: SphericalPoint::from_degrees(az + j, self.elevation_deg, None)?,
                    cluster: c,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingConfig {
    pub geometry: ArrayGeometry,
    pub clusters: ClusterGeometry,
    pub layout: SubBandLayout,
    pub precoder: PrecoderKind,
    pub policies: Vec<SchedulingPolicy>,
    pub evms: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleCell {
    pub policy: SchedulingPolicy,
    pub evm: f64,
    pub snr_db: f64,
    pub sum_rate: f64,
    pub stderr: f64,
}

/// Relative sum-rate gain of one policy over another on paired realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCell {
    pub evm: f64,
    pub snr_db: f64,
    pub relative_gain: f64,
    /// Standard error of `relative_gain` from the paired differences.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingResults {
    pub cells: Vec<ScheduleCell>,
    /// `rates[policy][evm][snr][realization]`.
    pub rates: Vec<Vec<Vec<Vec<f64>>>>,
    pub policies: Vec<SchedulingPolicy>,
    pub evms: Vec<f64>,
    pub snr_db: Vec<f64>,
}

impl SchedulingResults {
    /// Gain of `policy` over `baseline` per `(evm, snr)`.
    pub fn gains(&self, policy: SchedulingPolicy, baseline: SchedulingPolicy) -> Option<Vec<GainCell>> {
        let a = self.policies.iter().position(|&p| p == policy)?;
        let b = self.policies.iter().position(|&p| p == baseline)?;
        let mut out = Vec::new();
        for (e, &evm) in self.evms.iter().enumerate() {
            for (s, &snr_db) in self.snr_db.iter().enumerate() {
                let ra = &self.rates[a][e][s];
                let rb = &self.rates[b][e][s];
                let n = ra.len() as f64;
                let mb = rb.iter().sum::<f64>() / n;
                let diffs: Vec<f64> = ra.iter().zip(rb).map(|(x, y)| x - y).collect();
                let (md, sd) = mean_and_stderr(&diffs);
                out.push(GainCell {
                    evm,
                    snr_db,
                    relative_gain: md / mb,
                    stderr: sd / mb,
                });
            }
        }
        Some(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("policy,evm,snr_db,sum_rate,stderr\n");
        for c in &self.cells {
            s.push_str(&format!("{},{},{},{:.9},{:.9}\n", c.policy.name(), c.evm, c.snr_db, c.sum_rate, c.stderr));
        }
        s
    }
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sum rate per policy, EVM and SNR, averaged over user drops. All policies
/// see the same drop in a realization.
pub fn scheduling_experiment(cfg: &SchedulingConfig) -> Result<SchedulingResults> {
    if cfg.realizations == 0 {
        return Err(Error::config("experiment.realizations", "must be at least 1"));
    }
    let ofdm = cfg.layout.ofdm()?;
    let models = cfg.evms.iter().map(|&e| model_for_evm(e)).collect::<Result<Vec<_>>>()?;
    let power = power_for_antenna_power(&ofdm, cfg.geometry.num_elements(), 1.0);
    let budgets = cfg.snr_db.iter().map(|&s| LinkBudget::new(s)).collect::<Result<Vec<_>>>()?;

    // per realization: [policy][evm][snr]
    let per_real: Vec<Vec<Vec<Vec<f64>>>> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, r as u64);
            let users = cfg.clusters.draw(&mut rng)?;
            let sched_seed: u64 = rng.random();
            cfg.policies
                .iter()
                .map(|&policy| {
                    let a = schedule(&users, policy, &cfg.layout, &cfg.geometry, sched_seed)?;
                    let params: Vec<UserChannelParams> =
                        a.coscheduled.iter().map(|&i| UserChannelParams::unit(users[i].position)).collect();
                    let channel = LosChannel::new(&params, &cfg.geometry)?;
                    let plan = TransmitPlan::precoded(cfg.precoder, &channel, &ofdm, power)?;
                    models
                        .iter()
                        .map(|m| {
                            let t = LinkTable::build(m, &channel, &ofdm, &plan)?;
                            Ok(budgets.iter().map(|b| t.sum_rate(b)).collect())
                        })
                        .collect::<Result<Vec<Vec<f64>>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let (np, ne, ns) = (cfg.policies.len(), cfg.evms.len(), cfg.snr_db.len());
    let mut rates = vec![vec![vec![Vec::with_capacity(cfg.realizations); ns]; ne]; np];
    for real in &per_real {
        for p in 0..np {
            for e in 0..ne {
                for s in 0..ns {
                    rates[p][e][s].push(real[p][e][s]);
                }
            }
        }
    }
    let mut cells = Vec::new();
    for (p, &policy) in cfg.policies.iter().enumerate() {
        for (e, &evm) in cfg.evms.iter().enumerate() {
            for (s, &snr_db) in cfg.snr_db.iter().enumerate() {
                let (sum_rate, stderr) = mean_and_stderr(&rates[p][e][s]);
                cells.push(ScheduleCell {
                    policy,
                    evm,
                    snr_db,
                    sum_rate,
                    stderr,
                });
            }
        }
    }
    Ok(SchedulingResults {
        cells,
        rates,
        policies: cfg.policies.clone(),
        evms: cfg.evms.clone(),
        snr_db: cfg.snr_db.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplifier::analytic_distortion_psd;
    use approx::assert_relative_eq;

    fn geom10() -> ArrayGeometry {
        ArrayGeometry::half_wavelength(10, 10, 0.1).unwrap()
    }

    fn far(az: &[f64]) -> Vec<UserChannelParams> {
        az.iter()
            .map(|&a| UserChannelParams::unit(SphericalPoint::from_degrees(a, 0.0, None).unwrap()))
            .collect()
    }

    fn setup(kind: PrecoderKind, m: usize, az: &[f64]) -> (LosChannel, OfdmConfig, TransmitPlan) {
        let g = ArrayGeometry::half_wavelength(m, m, 0.1).unwrap();
        let ch = LosChannel::new(&far(az), &g).unwrap();
        let ofdm = OfdmConfig::shared(32, (2..30).collect()).unwrap();
        let p = power_for_antenna_power(&ofdm, m * m, 1.0);
        let plan = TransmitPlan::precoded(kind, &ch, &ofdm, p).unwrap();
        (ch, ofdm, plan)
    }

    #[test]
    fn zf_linear_pa_is_interference_free() {
        let (ch, ofdm, plan) = setup(PrecoderKind::Zf, 4, &[-30.0, 0.0, 25.0, 50.0]);
        let t = LinkTable::build(&model_for_evm(0.0).unwrap(), &ch, &ofdm, &plan).unwrap();
        for (_, _, terms) in &t.entries {
            assert!(terms.interference < 1e-12 * terms.signal);
            assert_eq!(terms.distortion, 0.0);
        }
        let hi = t.sum_rate(&LinkBudget::new(30.0).unwrap());
        let lo = t.sum_rate(&LinkBudget::new(20.0).unwrap());
        let expected = 4.0 * 10f64.log2();
        assert!(((hi - lo) - expected).abs() < 0.05 * expected, "{}", hi - lo);
    }

    #[test]
    fn sindr_matches_dense_route() {
        let (ch, ofdm, plan) = setup(PrecoderKind::Mrt, 3, &[-20.0, 15.0]);
        let model = calibrate_evm(0.05, 1.0).unwrap().model;
        let (gains, sdd) = analytic_distortion_psd(&model, &plan).unwrap();
        let table = LinkTable::build(&model, &ch, &ofdm, &plan).unwrap();
        let noise = 0.01;
        let dense = SpectralDensity::Dense(sdd);
        for &(k, nu, terms) in table.entries.iter().take(10) {
            let g = sindr(k, nu, &ch, &plan, &gains, &dense, noise).unwrap();
            assert_relative_eq!(g, terms.sindr(noise), max_relative = 1e-9);
            assert!(terms.distortion > 0.0);
        }
    }

    #[test]
    fn rate_limits() {
        assert_eq!(sum_rate(&[0.0, 0.0], 2), 0.0);
        let (ch, ofdm, plan) = setup(PrecoderKind::Mrt, 3, &[-20.0, 15.0]);
        let t = LinkTable::build(&model_for_evm(0.03).unwrap(), &ch, &ofdm, &plan).unwrap();
        assert!(t.sum_rate(&LinkBudget::new(-200.0).unwrap()) < 1e-12);
        let mut last = 0.0;
        for snr in (-10..40).step_by(5) {
            let r = t.sum_rate(&LinkBudget::new(snr as f64).unwrap());
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn distortion_lowers_zf_rate() {
        let (ch, ofdm, plan) = setup(PrecoderKind::Zf, 4, &[-30.0, 0.0, 25.0, 50.0]);
        let b = LinkBudget::new(25.0).unwrap();
        let clean = LinkTable::build(&model_for_evm(0.0).unwrap(), &ch, &ofdm, &plan).unwrap().sum_rate(&b);
        let dirty = LinkTable::build(&model_for_evm(0.03).unwrap(), &ch, &ofdm, &plan).unwrap().sum_rate(&b);
        assert!(dirty < clean);
    }

    #[test]
    fn layout_blocks() {
        let b = SubBandLayout::default().blocks().unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b[0].first(), Some(&1));
        assert_eq!(b[3].last(), Some(&126));
        assert!(b.iter().all(|x| x.len() == 30));
    }

    #[test]
    fn aware_policy_respects_clusters() {
        let mut rng = stream_rng(5, 0);
        let users = ClusterGeometry::default().draw(&mut rng).unwrap();
        let a = schedule(&users, SchedulingPolicy::Aware, &SubBandLayout::default(), &geom10(), 1).unwrap();
        let mut cl: Vec<usize> = a.coscheduled.iter().map(|&i| users[i].cluster).collect();
        cl.sort_unstable();
        assert_eq!(cl, vec![0, 1, 2, 3]);
        let lite = schedule(&users, SchedulingPolicy::AwareLite, &SubBandLayout::default(), &geom10(), 1).unwrap();
        let mut cl: Vec<usize> = lite.coscheduled.iter().map(|&i| users[i].cluster).collect();
        cl.sort_unstable();
        assert_eq!(cl, vec![0, 1, 2, 3]);
    }

    #[test]
    fn spill_matches_brute_force_count() {
        let layout = SubBandLayout {
            n_fft: 16,
            users: 3,
            width: 4,
            stride: 5,
            offset: 1,
        };
        let blocks = layout.blocks().unwrap();
        let spill = spectral_spill(&blocks, 16);
        for (a, b, c, k) in [(0, 0, 0, 0), (0, 1, 2, 1), (2, 0, 2, 0), (1, 2, 0, 2)] {
            let mut hits = 0;
            for &x in &blocks[a] {
                for &y in &blocks[b] {
                    for &z in &blocks[c] {
                        if blocks[k].contains(&((x + 16 - y + z) % 16)) {
                            hits += 1;
                        }
                    }
                }
            }
            assert_relative_eq!(spill[((a * 3 + b) * 3 + c) * 3 + k], hits as f64 / 64.0, epsilon = 1e-15);
        }
        for t in 0..27 {
            let total: f64 = spill[t * 3..t * 3 + 3].iter().sum();
            assert!(total <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn beam_overlap_is_periodic() {
        let g = geom10();
        let f = FocalCoefficients::from_point(&SphericalPoint::from_degrees(12.0, 0.0, None).unwrap());
        assert_relative_eq!(beam_overlap(&g, &f, &f), 1.0, epsilon = 1e-12);
        let shifted = FocalCoefficients {
            azimuth_cosine: f.azimuth_cosine - 2.0,
            ..f
        };
        assert_relative_eq!(beam_overlap(&g, &shifted, &f), 1.0, epsilon = 1e-9);
        let off = FocalCoefficients {
            azimuth_cosine: f.azimuth_cosine + 0.2,
            ..f
        };
        assert!(beam_overlap(&g, &off, &f) < 1e-6);
    }

    #[test]
    fn exposure_tracks_the_distortion_term() {
        let g = geom10();
        let layout = SubBandLayout::default();
        let ofdm = layout.ofdm().unwrap();
        let model = model_for_evm(0.1).unwrap();
        let mut predicted = Vec::new();
        let mut simulated = Vec::new();
        for az in [[-10.0, -9.0, -11.0, -10.5], [-40.0, -10.0, 20.0, 50.0]] {
            let users = far(&az);
            let pos: Vec<SphericalPoint> = users.iter().map(|u| u.position).collect();
            predicted.push(distortion_exposure(&pos, &layout, &g).unwrap().iter().sum::<f64>());
            let ch = LosChannel::new(&users, &g).unwrap();
            let plan = TransmitPlan::precoded(PrecoderKind::Mrt, &ch, &ofdm, power_for_antenna_power(&ofdm, 100, 1.0)).unwrap();
            let t = LinkTable::build(&model, &ch, &ofdm, &plan).unwrap();
            simulated.push(t.entries.iter().map(|e| e.2.distortion).sum::<f64>());
        }
        assert!(predicted[0] > predicted[1]);
        assert!(simulated[0] > simulated[1]);
    }

    #[test]
    fn aware_policy_needs_clusters() {
        let one = ClusterGeometry {
            azimuths_deg: vec![0.0],
            users_per_cluster: 5,
            ..Default::default()
        };
        let users = one.draw(&mut stream_rng(1, 0)).unwrap();
        let err = schedule(&users, SchedulingPolicy::Aware, &SubBandLayout::default(), &geom10(), 0).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn unaware_policy_is_seeded() {
        let users = ClusterGeometry::default().draw(&mut stream_rng(2, 0)).unwrap();
        let a = schedule(&users, SchedulingPolicy::Unaware, &SubBandLayout::default(), &geom10(), 9).unwrap();
        let b = schedule(&users, SchedulingPolicy::Unaware, &SubBandLayout::default(), &geom10(), 9).unwrap();
        assert_eq!(a, b);
        let mut s = a.coscheduled.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 4);
    }
}
