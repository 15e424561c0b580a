//! Seeded Monte-Carlo ensembles.
//!
//! Every work item `i` draws from its own ChaCha stream `i` of one seed, so
//! results do not depend on how rayon splits the work or on the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplifier::{apply_pa, AmplifiedFrame, PaModel};
use crate::error::Result;
use crate::waveform::{synthesize, OfdmConfig, SymbolDistribution, Symbols, TransmitPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub frames: usize,
    pub seed: u64,
    #[serde(default)]
    pub symbols: SymbolDistribution,
}

impl EnsembleSpec {
    pub fn new(frames: usize, seed: u64) -> Self {
        Self {
            frames,
            seed,
            symbols: SymbolDistribution::Gaussian,
        }
    }
}

/// RNG of work item `index`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f(i, rng_i)` for `i ∈ [0, count)` in parallel and returns results in
/// index order.
pub fn par_map_seeded<T, F>(seed: u64, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Draws symbols for frame `i` of `spec`.
pub fn frame_symbols(spec: &EnsembleSpec, index: usize, users: usize, ofdm: &OfdmConfig) -> Symbols {
    let mut rng = stream_rng(spec.seed, index as u64);
    Symbols::draw(&mut rng, spec.symbols, users, ofdm)
}

/// Synthesizes and amplifies one frame per stream.
pub fn amplified_ensemble(
    model: &PaModel,
    ofdm: &OfdmConfig,
    plan: &TransmitPlan,
    spec: &EnsembleSpec,
) -> Result<Vec<AmplifiedFrame>> {
    par_map_seeded(spec.seed, spec.frames, |_, rng| {
        let symbols = Symbols::draw(rng, spec.symbols, plan.num_users(), ofdm);
        let input = synthesize(ofdm, plan, &symbols)?.samples;
        let output = apply_pa(model, &input)?;
        Ok(AmplifiedFrame { input, output })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_of_thread_count() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| par_map_seeded(7, 64, |_, rng| Ok(rng.random::<u64>())).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn distinct_streams_differ() {
        let a: u64 = stream_rng(1, 0).random();
        let b: u64 = stream_rng(1, 1).random();
        assert_ne!(a, b);
    }
}
