//! The streaming simulator against an explicitly multiplied dense unitary, plus
//! statistical properties of the circuit and its shot sampler.

use birkhoff_attn::expressivity::{probe_invariances, probe_trial_input, Transform};
use birkhoff_attn::metrics::frobenius_distance;
use birkhoff_attn::qontot::{sample_shots, simulate_dsm, Ansatz, CircuitConfig, ParamVec};
use birkhoff_attn::{DsmOperator, SquareMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "support/dense_circuit.rs"]
mod dense_circuit;

use dense_circuit::{dense_dsm, dense_unitary, CMat};

#[test]
fn dense_oracle_is_unitary() {
    let config = CircuitConfig::new(4, 1, 3, Ansatz::Simple).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let phi: Vec<f64> = (0..config.param_count())
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    let w = dense_unitary(&config, &phi);
    let gram = w.adjoint() * &w;
    let worst = (gram - CMat::identity(8, 8))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-12);
}

#[test]
fn streaming_simulation_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..100 {
        let t: usize = [2, 4, 8][trial % 3];
        let qd = t.trailing_zeros() as usize;
        let aux = rng.random_range(0..=(8 - qd));
        let ansatz = if rng.random_bool(0.5) {
            Ansatz::Simple
        } else {
            Ansatz::Trotter
        };
        let layers = rng.random_range(1..=4);
        let config = CircuitConfig::new(t, aux, layers, ansatz).unwrap();
        let theta = ParamVec::random(&config, &mut rng);
        let m = SquareMatrix::gaussian(t, &mut rng);
        let fast = simulate_dsm(&config, &theta, &m).unwrap();
        let slow = dense_dsm(&config, &theta, &m);
        let gap = fast.matrix().max_abs_diff(&slow);
        assert!(gap < 1e-10, "trial {trial} {config:?}: {gap}");
    }
}

#[test]
fn named_configuration_matches_dense_oracle() {
    let config = CircuitConfig::new(8, 2, 4, Ansatz::Simple).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let theta = ParamVec::random(&config, &mut rng);
    let m = SquareMatrix::gaussian(8, &mut rng);
    let gap = simulate_dsm(&config, &theta, &m)
        .unwrap()
        .matrix()
        .max_abs_diff(&dense_dsm(&config, &theta, &m));
    assert!(gap < 1e-10);
}

#[test]
fn zero_parameters_give_identity_for_every_config() {
    for t in [2, 4, 8, 16] {
        for aux in 0..=3 {
            for layers in [1, 2, 5] {
                for ansatz in [Ansatz::Simple, Ansatz::Trotter] {
                    let config = CircuitConfig::new(t, aux, layers, ansatz).unwrap();
                    let m =
                        SquareMatrix::gaussian(t, &mut ChaCha8Rng::seed_from_u64(layers as u64));
                    let out = simulate_dsm(&config, &ParamVec::zeros(&config), &m).unwrap();
                    assert_eq!(out.matrix(), &SquareMatrix::identity(t));
                }
            }
        }
    }
}

fn qontot_op(t: usize, layers: usize, seed: u64) -> DsmOperator {
    let config = CircuitConfig::with_default_aux(t, layers, Ansatz::Simple).unwrap();
    let theta = ParamVec::random(&config, &mut ChaCha8Rng::seed_from_u64(seed));
    DsmOperator::Qontot { config, theta }
}

#[test]
fn stored_scale_witness() {
    let op = qontot_op(4, 4, 3);
    let m = SquareMatrix::new(
        4,
        vec![
            0.3, -1.2, 0.8, 0.1, 1.5, 0.0, -0.4, 0.9, -0.7, 0.2, 1.1, -1.0, 0.6, 0.4, -0.2, 1.3,
        ],
    )
    .unwrap();
    let a = op.apply(&m).unwrap();
    let b = op.apply(&m.scale(2.0)).unwrap();
    assert!(a.max_abs_diff(&b) > 1e-3);
}

#[test]
fn stored_permutation_witness() {
    let op = qontot_op(4, 4, 3);
    let m = SquareMatrix::from_fn(4, |i, j| ((i * 4 + j) as f64 * 0.37).sin());
    let (r, c) = ([1, 0, 3, 2], [2, 3, 0, 1]);
    let lhs = op.apply(&m.permute(&r, &c)).unwrap();
    let rhs = op.apply(&m).unwrap().permute(&r, &c);
    assert!(lhs.max_abs_diff(&rhs) > 1e-3);
}

#[test]
fn probe_witnesses_are_reproducible() {
    let op = qontot_op(4, 4, 11);
    let report = probe_invariances(&op, 4, 5, 900).unwrap();
    assert!(!report.scale_invariant);
    assert!(!report.permutation_equivariant);
    for w in &report.witnesses {
        let (m, rows, cols) = probe_trial_input(&op, 4, w.trial_seed);
        assert_eq!(m, w.input);
        let base = op.apply(&m).unwrap();
        let deviation = match &w.transform {
            Transform::Scale { factor } => {
                let factor = *factor;
                op.apply(&m.scale(factor)).unwrap().max_abs_diff(&base)
            }
            Transform::Permute { rows: r, cols: c } => {
                assert_eq!((r, c), (&rows, &cols));
                op.apply(&m.permute(&rows, &cols))
                    .unwrap()
                    .max_abs_diff(&base.permute(&rows, &cols))
            }
        };
        assert_eq!(deviation, w.deviation);
    }
}

#[test]
fn output_range_grows_with_layers() {
    // per-cell max - min over random parameters, averaged over cells
    let t = 4;
    let m = SquareMatrix::filled(t, 1.0);
    let mut previous = 0.0;
    for layers in [1, 2, 4, 8] {
        let config = CircuitConfig::with_default_aux(t, layers, Ansatz::Simple).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut lo = vec![f64::INFINITY; t * t];
        let mut hi = vec![f64::NEG_INFINITY; t * t];
        for _ in 0..1000 {
            let theta = ParamVec::random(&config, &mut rng);
            let out = simulate_dsm(&config, &theta, &m).unwrap();
            for (k, &x) in out.matrix().as_slice().iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        let mean_range = hi.iter().zip(&lo).map(|(h, l)| h - l).sum::<f64>() / (t * t) as f64;
        assert!(
            mean_range >= previous,
            "L={layers}: {mean_range} < {previous}"
        );
        previous = mean_range;
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn shot_noise_halves_when_shots_quadruple() {
    let config = CircuitConfig::with_default_aux(8, 2, Ansatz::Simple).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let theta = ParamVec::random(&config, &mut rng);
    let m = SquareMatrix::gaussian(8, &mut rng);
    let exact = simulate_dsm(&config, &theta, &m).unwrap().into_matrix();
    let error_at = |shots: usize| {
        median(
            (0..50)
                .map(|seed| {
                    let s = sample_shots(&config, &theta, &m, shots, seed).unwrap();
                    frobenius_distance(&s, &exact).unwrap()
                })
                .collect(),
        )
    };
    for shots in [1_000, 4_000, 16_000] {
        let ratio = error_at(4 * shots) / error_at(shots);
        assert!((0.4..0.6).contains(&ratio), "shots {shots}: ratio {ratio}");
    }
}

#[test]
fn identity_circuit_samples_exactly() {
    let config = CircuitConfig::with_default_aux(4, 3, Ansatz::Trotter).unwrap();
    let m = SquareMatrix::gaussian(4, &mut ChaCha8Rng::seed_from_u64(0));
    for shots in [4, 100, 1001] {
        let s = sample_shots(&config, &ParamVec::zeros(&config), &m, shots, 9).unwrap();
        assert_eq!(s, SquareMatrix::identity(4));
    }
}
