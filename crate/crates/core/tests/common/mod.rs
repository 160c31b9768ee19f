#![allow(dead_code)]

use shgt_core::ehr::{EhrDataset, PatientRecord};
use shgt_core::{build_hypergraph, make_examples, Hypergraph, SupervisedExample};

/// 12 codes (5 diagnoses, 4 medications, 3 procedures), 4 patients with two
/// input visits each, so 8 hyperedges.
pub fn toy_instance() -> (EhrDataset, Hypergraph, Vec<SupervisedExample>) {
    let visits: [[&[&str]; 3]; 4] = [
        [
            &["d:D0", "d:D1", "m:M0"],
            &["d:D1", "p:P0", "m:M1"],
            &["d:D0", "d:D2"],
        ],
        [
            &["d:D2", "d:D3", "p:P1"],
            &["d:D3", "m:M2", "m:M3"],
            &["d:D3", "d:D4", "m:M0"],
        ],
        [
            &["d:D4", "p:P2", "m:M1", "d:D0"],
            &["d:D4", "d:D1"],
            &["d:D1"],
        ],
        [
            &["m:M3", "p:P0", "d:D2"],
            &["d:D0", "p:P2", "p:P1", "m:M2"],
            &["d:D2", "d:D4", "p:P0"],
        ],
    ];
    let records: Vec<PatientRecord> = visits
        .iter()
        .enumerate()
        .map(|(u, vs)| PatientRecord {
            patient_id: format!("toy{u}"),
            visits: vs
                .iter()
                .map(|v| v.iter().map(|s| s.to_string()).collect())
                .collect(),
        })
        .collect();
    let dataset = EhrDataset::from_records(&records).unwrap();
    let examples = make_examples(&dataset).examples;
    let h = build_hypergraph(&dataset, &examples).unwrap();
    assert_eq!((h.num_nodes(), h.num_edges()), (12, 8));
    (dataset, h, examples)
}

/// Redraws every parameter uniformly from `[-scale, scale]`. Gradient checks
/// run at such a generic point rather than at the small-scale initializer,
/// where some attention gradients sit near the finite-difference noise floor.
pub fn spread(params: &mut shgt_core::ParameterSet, scale: f64, seed: u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    for (_, t) in params.tensors_mut() {
        t.mapv_inplace(|_| rng.gen_range(-scale..=scale));
    }
}
