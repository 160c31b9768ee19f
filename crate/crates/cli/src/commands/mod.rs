pub mod eval;
pub mod generate;
pub mod gradcheck;
pub mod plot;
pub mod train;

use std::path::{Path, PathBuf};

use shgt_core::checkpoint::write_atomic;
use shgt_core::ehr::{select_examples, ExampleSet};
use shgt_core::{
    build_hypergraph, make_examples, parse_corpus, split_patients, DatasetSplit, EhrDataset,
    Hypergraph, SupervisedExample,
};

use crate::config::RunSettings;
use crate::error::{CliError, CliResult};
use crate::manifest::fingerprint;

/// Reads a corpus file, returning the dataset and the hash of its bytes.
pub fn read_corpus(path: &Path) -> CliResult<(EhrDataset, String)> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::io(format!("corpus {}", path.display()), e))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| CliError::Data(format!("corpus {} is not UTF-8: {e}", path.display())))?;
    let dataset = parse_corpus(text)
        .map_err(|e| CliError::Data(format!("corpus {}: {e}", path.display())))?;
    Ok((dataset, fingerprint(&bytes)))
}

/// Everything derived from a corpus that training and evaluation share.
pub struct Prepared {
    pub dataset: EhrDataset,
    pub fingerprint: String,
    pub examples: ExampleSet,
    pub hypergraph: Hypergraph,
    pub split: DatasetSplit,
    pub train: Vec<SupervisedExample>,
    pub validation: Vec<SupervisedExample>,
    pub test: Vec<SupervisedExample>,
}

impl Prepared {
    pub fn load(path: &Path, split_seed: u64) -> CliResult<Self> {
        let (dataset, fingerprint) = read_corpus(path)?;
        let examples = make_examples(&dataset);
        // Every input visit of every kept patient is a hyperedge; only the
        // supervised examples are split.
        let hypergraph = build_hypergraph(&dataset, &examples.examples)?;
        let split = split_patients(dataset.n_patients(), split_seed)?;
        let pick = |patients: &[usize]| select_examples(&examples.examples, patients);
        let (train, validation, test) = (
            pick(&split.train),
            pick(&split.validation),
            pick(&split.test),
        );
        for (name, part) in [
            ("train", &train),
            ("validation", &validation),
            ("test", &test),
        ] {
            if part.is_empty() {
                return Err(CliError::Data(format!(
                    "the {name} split has no patient with a diagnosis in the final visit"
                )));
            }
        }
        Ok(Prepared {
            dataset,
            fingerprint,
            examples,
            hypergraph,
            split,
            train,
            validation,
            test,
        })
    }

    pub fn n_labels(&self) -> usize {
        self.dataset.vocabulary.n_diagnoses()
    }
}

/// Files written by a command that must not survive a failure. Dropping an
/// armed guard deletes them, along with the directory if the guard made it.
#[derive(Debug)]
pub(crate) struct ArtifactGuard {
    files: Vec<PathBuf>,
    created_dir: Option<PathBuf>,
    armed: bool,
}

impl ArtifactGuard {
    pub fn new() -> Self {
        ArtifactGuard {
            files: Vec::new(),
            created_dir: None,
            armed: true,
        }
    }

    pub fn create_dir(&mut self, dir: &Path) -> CliResult<()> {
        if !dir.exists() {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
            self.created_dir = Some(dir.to_path_buf());
        }
        Ok(())
    }

    pub fn write(&mut self, path: PathBuf, bytes: &[u8]) -> CliResult<()> {
        let result = write_atomic(&path, bytes);
        self.files.push(path);
        result.map_err(CliError::from)
    }

    pub fn track(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    pub fn disarm(mut self) {
        self.armed = false;
    }
}

impl Drop for ArtifactGuard {
    fn drop(&mut self) {
        if !self.armed {
            return;
        }
        for f in &self.files {
            let _ = std::fs::remove_file(f);
            let mut tmp = f.as_os_str().to_owned();
            tmp.push(".tmp");
            let _ = std::fs::remove_file(PathBuf::from(tmp));
        }
        if let Some(dir) = &self.created_dir {
            // only succeeds when nothing else was put there
            let _ = std::fs::remove_dir(dir);
        }
    }
}

/// Applies `--k`, `--threshold` and `--recall-denominator`.
pub(crate) fn apply_metric_flags(args: &crate::args::MetricArgs, settings: &mut RunSettings) {
    if let Some(ks) = &args.k {
        settings.train.ks = ks.clone();
    }
    if let Some(t) = args.threshold {
        settings.train.threshold = t;
    }
    if let Some(d) = args.recall_denominator {
        settings.train.recall_denominator = d;
    }
}
