use shgt_core::ehr::corpus_to_string;
use shgt_core::generate_synthetic;

use super::ArtifactGuard;
use crate::args::GenerateArgs;
use crate::config::{generator_config, FlatConfig};
use crate::error::CliResult;

pub fn run(args: &GenerateArgs) -> CliResult<()> {
    let flat = match &args.config {
        Some(path) => FlatConfig::load(path)?,
        None => FlatConfig::default(),
    };
    let cfg = generator_config(&flat)?;
    let dataset = generate_synthetic(&cfg, args.seed)?;
    let mut guard = ArtifactGuard::new();
    guard.write(args.out.clone(), corpus_to_string(&dataset).as_bytes())?;
    guard.disarm();
    println!(
        "wrote {} patients, {} visits, {} codes to {}",
        dataset.n_patients(),
        dataset.n_visits(),
        dataset.vocabulary.len(),
        args.out.display()
    );
    Ok(())
}
