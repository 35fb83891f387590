use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{simulate_dsm, CircuitConfig, ParamVec};
use crate::error::Result;
use crate::SquareMatrix;

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub dsm_dim: usize,
    pub aux_qubits: usize,
    pub total_qubits: usize,
    pub layers: usize,
    pub repetitions: usize,
    pub median_seconds: f64,
    pub min_seconds: f64,
}

/// Wall time of [`simulate_dsm`] per config over `repetitions` runs (at least
/// 5). Parameters and input are drawn once per config from `seed`. Runs are
/// interleaved round-robin across configs so that a burst of outside load is
/// spread over all of them rather than landing on one.
pub fn bench_circuit(
    configs: &[CircuitConfig],
    repetitions: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let repetitions = repetitions.max(5);
    let mut cases = Vec::with_capacity(configs.len());
    for config in configs {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = ParamVec::random(config, &mut rng);
        let m = SquareMatrix::gaussian(config.dsm_dim, &mut rng);
        // warm-up
        simulate_dsm(config, &theta, &m)?;
        cases.push((config, theta, m));
    }
    let mut times = vec![Vec::with_capacity(repetitions); cases.len()];
    for _ in 0..repetitions {
        for ((config, theta, m), t) in cases.iter().zip(&mut times) {
            let start = Instant::now();
            let out = simulate_dsm(config, theta, m)?;
            t.push(start.elapsed().as_secs_f64());
            std::hint::black_box(out);
        }
    }
    Ok(cases
        .iter()
        .zip(times)
        .map(|((config, _, _), mut t)| {
            t.sort_by(f64::total_cmp);
            BenchRow {
                dsm_dim: config.dsm_dim,
                aux_qubits: config.aux_qubits,
                total_qubits: config.total_qubits(),
                layers: config.layers,
                repetitions,
                median_seconds: t[repetitions / 2],
                min_seconds: t[0],
            }
        })
        .collect())
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "dsm_dim,aux_qubits,total_qubits,layers,repetitions,median_seconds,min_seconds\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.9},{:.9}",
            r.dsm_dim,
            r.aux_qubits,
            r.total_qubits,
            r.layers,
            r.repetitions,
            r.median_seconds,
            r.min_seconds
        );
    }
    out
}
