use std::path::PathBuf;

use shgt_core::checkpoint::read_checkpoint;
use shgt_core::train::evaluate_examples;
use shgt_core::{ParameterSet, SplitPart};

use super::{apply_metric_flags, ArtifactGuard, Prepared};
use crate::args::EvalArgs;
use crate::config::{FlatConfig, RunSettings};
use crate::error::{CliError, CliResult};
use crate::manifest::fingerprint;

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let ckpt = read_checkpoint(&args.checkpoint)
        .map_err(|e| CliError::Data(format!("checkpoint {}: {e}", args.checkpoint.display())))?;
    let meta = |key: &str| {
        ckpt.metadata
            .get(key)
            .cloned()
            .ok_or_else(|| CliError::Data(format!("checkpoint has no `{key}` entry")))
    };

    let expected = meta("corpus_sha256")?;
    let bytes = std::fs::read(&args.corpus)
        .map_err(|e| CliError::io(format!("corpus {}", args.corpus.display()), e))?;
    let actual = fingerprint(&bytes);
    if actual != expected {
        return Err(CliError::Data(format!(
            "corpus {} does not match the checkpoint: trained on sha256 {expected}, found {actual}",
            args.corpus.display()
        )));
    }

    let echo: String = ckpt
        .metadata
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| format!("{k} = {v}\n")))
        .collect();
    let mut settings = RunSettings::default();
    settings
        .apply(&FlatConfig::parse(&echo)?)
        .map_err(|e| CliError::Data(format!("checkpoint config echo: {e}")))?;
    apply_metric_flags(&args.metrics, &mut settings);
    settings.validate()?;

    let data = Prepared::load(&args.corpus, settings.split_seed)?;
    let (m, n, labels) = (
        data.hypergraph.num_nodes(),
        data.hypergraph.num_edges(),
        data.n_labels(),
    );
    for (key, have) in [("codes", m), ("visits", n), ("labels", labels)] {
        if meta(key)? != have.to_string() {
            return Err(CliError::Data(format!(
                "checkpoint `{key}` disagrees with the corpus ({have})"
            )));
        }
    }
    let t = &settings.train;
    let template = ParameterSet::init(m, n, labels, t.dim, t.layers, 0)?;
    let params = ckpt.into_params(&template)?;
    let examples = match args.split {
        SplitPart::Train => &data.train,
        SplitPart::Validation => &data.validation,
        SplitPart::Test => &data.test,
    };
    let report = evaluate_examples(&params, &data.hypergraph, examples, t)?;

    print!("{report}");
    let out = args.out.clone().unwrap_or_else(|| {
        let dir = args
            .checkpoint
            .parent()
            .map(PathBuf::from)
            .unwrap_or_default();
        dir.join(format!("eval_{}.txt", args.split))
    });
    let mut guard = ArtifactGuard::new();
    guard.write(
        out,
        format!("split={}\n{}", args.split, report.to_key_values()).as_bytes(),
    )?;
    guard.disarm();
    Ok(())
}
