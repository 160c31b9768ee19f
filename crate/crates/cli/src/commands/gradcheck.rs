use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shgt_core::ehr::PatientRecord;
use shgt_core::gradcheck::{all_coordinates, finite_difference_check, sample_coordinates};
use shgt_core::model::{backward, forward};
use shgt_core::objectives::sample_negatives;
use shgt_core::{build_hypergraph, make_examples, EhrDataset, ParameterSet, TrainConfig};

use super::read_corpus;
use crate::args::{Fault, GradcheckArgs};
use crate::config::{FlatConfig, RunSettings};
use crate::error::{CliError, CliResult};

/// Cohort used when no corpus is given: four patients over twelve codes
/// (five diagnoses), two input visits each, so eight hyperedges.
pub fn builtin_cohort() -> CliResult<EhrDataset> {
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
    Ok(EhrDataset::from_records(&records)?)
}

pub fn run(args: &GradcheckArgs) -> CliResult<()> {
    let mut settings = RunSettings {
        train: TrainConfig {
            dim: 4,
            layers: 2,
            alpha: 0.3,
            ..TrainConfig::default()
        },
        split_seed: 0,
    };
    if let Some(path) = &args.config {
        settings.apply(&FlatConfig::load(path)?)?;
    }
    if let Some(seed) = args.seed {
        settings.train.seed = seed;
    }
    if settings.train.dropout > 0.0 {
        log::info!(
            "dropout {} ignored: gradient checks run without dropout",
            settings.train.dropout
        );
    }
    settings.train.dropout = 0.0;
    settings.validate()?;
    let positive = |x: f64| x > 0.0 && x.is_finite();
    if !positive(args.step) || !positive(args.tolerance) || !(0.0..).contains(&args.perturb) {
        return Err(CliError::Usage(
            "step and tolerance must be positive and perturb non-negative".into(),
        ));
    }
    let seed = settings.train.seed;

    let dataset = match &args.corpus {
        Some(path) => read_corpus(path)?.0,
        None => builtin_cohort()?,
    };
    let examples = make_examples(&dataset).examples;
    if examples.is_empty() {
        return Err(CliError::Data(
            "no patient has a diagnosis in the final visit".into(),
        ));
    }
    let h = build_hypergraph(&dataset, &examples)?;
    let n_labels = dataset.vocabulary.n_diagnoses();
    let model = settings.train.model();

    let mut params = ParameterSet::init(
        h.num_nodes(),
        h.num_edges(),
        n_labels,
        model.dim,
        model.layers,
        seed,
    )?;
    if args.perturb > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
        for (_, t) in params.tensors_mut() {
            t.mapv_inplace(|_| rng.gen_range(-args.perturb..=args.perturb));
        }
    }
    let pairs = if model.variant.uses_reconstruction() {
        Some(sample_negatives(&h, &mut ChaCha8Rng::seed_from_u64(seed))?)
    } else {
        None
    };

    let (_, trace) = forward(&params, &h, &examples, pairs.as_ref(), &model, None)?;
    let mut grads = backward(&params, &h, &examples, pairs.as_ref(), &model, &trace)?;
    if args.inject_fault == Some(Fault::SignFlip) {
        for (_, g) in grads.tensors_mut() {
            g.mapv_inplace(|v| -v);
        }
    }
    let coords = if args.coords == 0 {
        all_coordinates(&params)
    } else {
        sample_coordinates(&params, args.coords, seed)
    };
    let loss = |p: &ParameterSet| {
        forward(p, &h, &examples, pairs.as_ref(), &model, None).map(|(l, _)| l.total)
    };
    let report = finite_difference_check(&params, &grads, loss, args.step, &coords)?;

    println!(
        "{} codes, {} visits, {} labels, d={}, layers={}, alpha={}, variant={}, step={:e}",
        h.num_nodes(),
        h.num_edges(),
        n_labels,
        model.dim,
        model.layers,
        model.alpha,
        model.variant,
        args.step
    );
    print!("{report}");
    let worst = report.max_relative_error();
    if report.passes(args.tolerance) {
        println!("PASS max relative error {worst:.3e} < {:e}", args.tolerance);
        Ok(())
    } else {
        println!(
            "FAIL max relative error {worst:.3e} >= {:e}",
            args.tolerance
        );
        Err(CliError::Numerical(format!(
            "gradient check failed: max relative error {worst:.3e} exceeds {:e}",
            args.tolerance
        )))
    }
}
