//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shgt_core::{
    build_hypergraph, generate_synthetic, make_examples, GeneratorConfig, Hypergraph,
    SupervisedExample,
};

/// Synthetic cohort of `patients` patients as a hypergraph plus examples.
pub fn cohort(patients: usize, seed: u64) -> (Hypergraph, Vec<SupervisedExample>, usize) {
    let cfg = GeneratorConfig {
        patients,
        diagnoses: 100,
        medications: 60,
        procedures: 40,
        clusters: 8,
        ..GeneratorConfig::default()
    };
    let ds = generate_synthetic(&cfg, seed).expect("valid generator config");
    let examples = make_examples(&ds).examples;
    let h = build_hypergraph(&ds, &examples).expect("examples come from the dataset");
    (h, examples, ds.vocabulary.n_diagnoses())
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
}
