#![allow(dead_code)]

use balance::ingest::{self, CorrelationMatrix, SynthSpec, WindowSpec};
use balance::network::{SignState, SignedWeightedNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Correlation matrix of the first `tau`-row window of a synthetic panel.
pub fn synth_corr(n: usize, tau: usize, rho: f64, seed: u64) -> CorrelationMatrix {
    let spec = SynthSpec {
        n_assets: n,
        n_days: tau + 1,
        rho,
        daily_vol: 0.01,
        seed,
    };
    let prices = ingest::synthesize_market(&spec).unwrap();
    let returns = ingest::log_returns(&prices);
    ingest::correlation_matrix(&returns, WindowSpec::new(0, tau, tau).unwrap()).unwrap()
}

/// Complete network with i.i.d. uniform(lo, hi) weights.
pub fn uniform_net(n: usize, lo: f64, hi: f64, seed: u64) -> SignedWeightedNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let x = rng.random_range(lo..hi);
            w[i * n + j] = x;
            w[j * n + i] = x;
        }
    }
    SignedWeightedNetwork::from_weights(n, &w, SignState::all_positive(n)).unwrap()
}
