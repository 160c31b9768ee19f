//! Coded visit records: vocabulary, corpus I/O, supervised examples and
//! patient splits.
//!
//! A corpus is newline-delimited JSON, one patient per line:
//!
//! ```text
//! {"patient_id":"p1","visits":[["d:A"],["d:A","m:X"]]}
//! ```
//!
//! Tokens are `<kind>:<raw>` with kind one of `d` (diagnosis), `m`
//! (medication) or `p` (procedure). Visits are listed chronologically; the
//! last visit of every patient is the prediction target.

mod synthetic;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShgtError};

pub use synthetic::{generate_synthetic, GeneratorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CodeKind {
    Diagnosis,
    Medication,
    Procedure,
}

impl CodeKind {
    pub fn prefix(self) -> char {
        match self {
            CodeKind::Diagnosis => 'd',
            CodeKind::Medication => 'm',
            CodeKind::Procedure => 'p',
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        match prefix {
            "d" => Some(CodeKind::Diagnosis),
            "m" => Some(CodeKind::Medication),
            "p" => Some(CodeKind::Procedure),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MedicalCode {
    pub id: usize,
    pub kind: CodeKind,
    pub raw: String,
}

impl MedicalCode {
    pub fn token(&self) -> String {
        format!("{}:{}", self.kind.prefix(), self.raw)
    }
}

/// Code table. Diagnoses occupy ids `[0, |D|)`, followed by medications and
/// then procedures; each block is sorted lexicographically by raw token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    codes: Vec<MedicalCode>,
    index: HashMap<(CodeKind, String), usize>,
    n_diagnoses: usize,
    n_medications: usize,
    n_procedures: usize,
}

impl Vocabulary {
    /// Builds the table from any collection of `(kind, raw)` pairs.
    pub fn from_codes<'a, I>(codes: I) -> Self
    where
        I: IntoIterator<Item = (CodeKind, &'a str)>,
    {
        let unique: BTreeSet<(CodeKind, &str)> = codes.into_iter().collect();
        let mut table = Vec::with_capacity(unique.len());
        let mut index = HashMap::with_capacity(unique.len());
        let (mut n_d, mut n_m, mut n_p) = (0, 0, 0);
        // BTreeSet order is (kind, raw): diagnoses first, each block lexicographic.
        for (id, (kind, raw)) in unique.into_iter().enumerate() {
            match kind {
                CodeKind::Diagnosis => n_d += 1,
                CodeKind::Medication => n_m += 1,
                CodeKind::Procedure => n_p += 1,
            }
            index.insert((kind, raw.to_string()), id);
            table.push(MedicalCode {
                id,
                kind,
                raw: raw.to_string(),
            });
        }
        Vocabulary {
            codes: table,
            index,
            n_diagnoses: n_d,
            n_medications: n_m,
            n_procedures: n_p,
        }
    }

    /// Total number of codes, `m`.
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn n_diagnoses(&self) -> usize {
        self.n_diagnoses
    }

    pub fn n_medications(&self) -> usize {
        self.n_medications
    }

    pub fn n_procedures(&self) -> usize {
        self.n_procedures
    }

    pub fn get(&self, id: usize) -> Option<&MedicalCode> {
        self.codes.get(id)
    }

    pub fn lookup(&self, kind: CodeKind, raw: &str) -> Option<usize> {
        self.index.get(&(kind, raw.to_string())).copied()
    }

    pub fn codes(&self) -> &[MedicalCode] {
        &self.codes
    }

    pub fn is_diagnosis(&self, id: usize) -> bool {
        id < self.n_diagnoses
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Visit {
    /// Distinct code ids in order of first appearance.
    pub codes: Vec<usize>,
    /// 1-based position in the patient's history.
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patient {
    pub patient_id: String,
    pub visits: Vec<Visit>,
}

impl Patient {
    /// Number of input (non-target) visits, `T`.
    pub fn n_input_visits(&self) -> usize {
        self.visits.len() - 1
    }

    pub fn target_visit(&self) -> &Visit {
        self.visits
            .last()
            .expect("patients have at least two visits")
    }

    pub fn input_visits(&self) -> &[Visit] {
        &self.visits[..self.visits.len() - 1]
    }
}

/// One line of the corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub visits: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EhrDataset {
    pub patients: Vec<Patient>,
    pub vocabulary: Vocabulary,
    /// Sum over patients of the number of non-target visits.
    pub n_input_visits: usize,
}

fn parse_token(token: &str, line: usize) -> Result<(CodeKind, &str)> {
    let unknown = || ShgtError::UnknownCodeKind {
        line,
        token: token.to_string(),
    };
    let (prefix, raw) = token.split_once(':').ok_or_else(unknown)?;
    let kind = CodeKind::from_prefix(prefix).ok_or_else(unknown)?;
    if raw.is_empty() {
        return Err(ShgtError::Parse {
            line,
            message: format!("empty code in token {token:?}"),
        });
    }
    Ok((kind, raw))
}

/// Derives the code table from raw records.
pub fn build_vocabulary(records: &[PatientRecord]) -> Result<Vocabulary> {
    let mut codes = Vec::new();
    for (n, record) in records.iter().enumerate() {
        for visit in &record.visits {
            for token in visit {
                codes.push(parse_token(token, n + 1)?);
            }
        }
    }
    Ok(Vocabulary::from_codes(codes))
}

impl EhrDataset {
    /// Validates records and converts them into an indexed dataset. Line
    /// numbers in errors are 1-based positions in `records`.
    pub fn from_records(records: &[PatientRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(ShgtError::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        for (n, record) in records.iter().enumerate() {
            let line = n + 1;
            if !seen.insert(record.patient_id.as_str()) {
                return Err(ShgtError::DuplicatePatient {
                    line,
                    patient_id: record.patient_id.clone(),
                });
            }
            if record.visits.len() < 2 {
                return Err(ShgtError::TooFewVisits {
                    line,
                    patient_id: record.patient_id.clone(),
                });
            }
            if record.visits.iter().any(Vec::is_empty) {
                return Err(ShgtError::EmptyVisit {
                    line,
                    patient_id: record.patient_id.clone(),
                });
            }
        }
        let vocabulary = build_vocabulary(records)?;

        let mut patients = Vec::with_capacity(records.len());
        for (n, record) in records.iter().enumerate() {
            let mut visits = Vec::with_capacity(record.visits.len());
            for (t, tokens) in record.visits.iter().enumerate() {
                let mut codes = Vec::with_capacity(tokens.len());
                for token in tokens {
                    let (kind, raw) = parse_token(token, n + 1)?;
                    let id = vocabulary
                        .lookup(kind, raw)
                        .expect("vocabulary built from the same records");
                    if !codes.contains(&id) {
                        codes.push(id);
                    }
                }
                visits.push(Visit {
                    codes,
                    ordinal: t + 1,
                });
            }
            patients.push(Patient {
                patient_id: record.patient_id.clone(),
                visits,
            });
        }
        let n_input_visits = patients.iter().map(Patient::n_input_visits).sum();
        Ok(EhrDataset {
            patients,
            vocabulary,
            n_input_visits,
        })
    }

    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    /// Total visits including targets.
    pub fn n_visits(&self) -> usize {
        self.patients.iter().map(|p| p.visits.len()).sum()
    }

    pub fn to_records(&self) -> Vec<PatientRecord> {
        self.patients
            .iter()
            .map(|p| PatientRecord {
                patient_id: p.patient_id.clone(),
                visits: p
                    .visits
                    .iter()
                    .map(|v| {
                        v.codes
                            .iter()
                            .map(|&id| self.vocabulary.codes[id].token())
                            .collect()
                    })
                    .collect(),
            })
            .collect()
    }

    /// Checks every structural invariant of the dataset.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ShgtError::InvalidDataset(msg));
        if self.patients.is_empty() {
            return Err(ShgtError::EmptyCorpus);
        }
        let m = self.vocabulary.len();
        let mut ids = HashSet::new();
        let mut total = 0;
        for p in &self.patients {
            if !ids.insert(&p.patient_id) {
                return bad(format!("duplicate patient_id {:?}", p.patient_id));
            }
            if p.visits.len() < 2 {
                return bad(format!(
                    "patient {:?} has fewer than 2 visits",
                    p.patient_id
                ));
            }
            for (t, v) in p.visits.iter().enumerate() {
                if v.codes.is_empty() {
                    return bad(format!("patient {:?} has an empty visit", p.patient_id));
                }
                if t > 0 && v.ordinal <= p.visits[t - 1].ordinal {
                    return bad(format!(
                        "patient {:?} ordinals not increasing",
                        p.patient_id
                    ));
                }
                if v.ordinal == 0 {
                    return bad(format!("patient {:?} has ordinal 0", p.patient_id));
                }
                let distinct: HashSet<_> = v.codes.iter().collect();
                if distinct.len() != v.codes.len() {
                    return bad(format!("patient {:?} has duplicate codes", p.patient_id));
                }
                if let Some(&id) = v.codes.iter().find(|&&id| id >= m) {
                    return bad(format!("code id {id} outside vocabulary of size {m}"));
                }
            }
            total += p.n_input_visits();
        }
        if total != self.n_input_visits {
            return bad(format!(
                "n_input_visits is {} but visits sum to {total}",
                self.n_input_visits
            ));
        }
        Ok(())
    }
}

/// Parses a corpus from its text form.
pub fn parse_corpus(text: &str) -> Result<EhrDataset> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PatientRecord = serde_json::from_str(line).map_err(|e| ShgtError::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        records.push((n + 1, record));
    }
    if records.is_empty() {
        return Err(ShgtError::EmptyCorpus);
    }
    let line_of: Vec<usize> = records.iter().map(|(l, _)| *l).collect();
    let records: Vec<PatientRecord> = records.into_iter().map(|(_, r)| r).collect();
    // Re-map record positions to physical file lines so errors point at the file.
    EhrDataset::from_records(&records).map_err(|e| remap_line(e, &line_of))
}

fn remap_line(err: ShgtError, line_of: &[usize]) -> ShgtError {
    let fix = |l: usize| line_of.get(l - 1).copied().unwrap_or(l);
    match err {
        ShgtError::Parse { line, message } => ShgtError::Parse {
            line: fix(line),
            message,
        },
        ShgtError::DuplicatePatient { line, patient_id } => ShgtError::DuplicatePatient {
            line: fix(line),
            patient_id,
        },
        ShgtError::TooFewVisits { line, patient_id } => ShgtError::TooFewVisits {
            line: fix(line),
            patient_id,
        },
        ShgtError::UnknownCodeKind { line, token } => ShgtError::UnknownCodeKind {
            line: fix(line),
            token,
        },
        ShgtError::EmptyVisit { line, patient_id } => ShgtError::EmptyVisit {
            line: fix(line),
            patient_id,
        },
        other => other,
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<EhrDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ShgtError::io(path, e))?;
    parse_corpus(&text)
}

/// Serializes a dataset in corpus format, one compact JSON object per line.
pub fn corpus_to_string(dataset: &EhrDataset) -> String {
    let mut out = String::new();
    for record in dataset.to_records() {
        out.push_str(&serde_json::to_string(&record).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(dataset: &EhrDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, corpus_to_string(dataset)).map_err(|e| ShgtError::io(path, e))
}

/// One patient's next-visit diagnosis target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupervisedExample {
    pub patient_index: usize,
    /// Hyperedge ids of visits `1..=T`.
    pub input_visit_edge_ids: Vec<usize>,
    /// 0/1 indicator over diagnosis ids `[0, |D|)`.
    pub label: Vec<u8>,
}

impl SupervisedExample {
    pub fn positive_labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.label
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == 1)
            .map(|(j, _)| j)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleSet {
    pub examples: Vec<SupervisedExample>,
    /// Patients dropped because their final visit had no diagnosis code.
    pub skipped: usize,
}

/// Builds one example per patient. Hyperedge ids are assigned consecutively
/// in (patient order, visit ordinal) over the patients that are kept; target
/// visits never receive an edge id.
pub fn make_examples(dataset: &EhrDataset) -> ExampleSet {
    let n_diag = dataset.vocabulary.n_diagnoses();
    let mut examples = Vec::with_capacity(dataset.patients.len());
    let mut skipped = 0;
    let mut next_edge = 0;
    for (u, patient) in dataset.patients.iter().enumerate() {
        let mut label = vec![0u8; n_diag];
        for &id in &patient.target_visit().codes {
            if id < n_diag {
                label[id] = 1;
            }
        }
        if !label.contains(&1) {
            skipped += 1;
            log::warn!(
                "patient {:?} skipped: final visit has no diagnosis codes",
                patient.patient_id
            );
            continue;
        }
        let t = patient.n_input_visits();
        examples.push(SupervisedExample {
            patient_index: u,
            input_visit_edge_ids: (next_edge..next_edge + t).collect(),
            label,
        });
        next_edge += t;
    }
    ExampleSet { examples, skipped }
}

/// Disjoint train / validation / test patient index lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

impl fmt::Display for SplitPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitPart::Train => "train",
            SplitPart::Validation => "validation",
            SplitPart::Test => "test",
        })
    }
}

impl std::str::FromStr for SplitPart {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitPart::Train),
            "validation" | "val" => Ok(SplitPart::Validation),
            "test" => Ok(SplitPart::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

pub const MIN_SPLIT_PATIENTS: usize = 10;

/// Shuffles patient indices with `seed` and cuts them 7:1:2 as
/// `⌊0.7N⌋ / ⌊0.1N⌋ / remainder`.
pub fn split_patients(n_patients: usize, seed: u64) -> Result<DatasetSplit> {
    if n_patients < MIN_SPLIT_PATIENTS {
        return Err(ShgtError::InvalidDataset(format!(
            "cannot split {n_patients} patients; need at least {MIN_SPLIT_PATIENTS}"
        )));
    }
    let mut order: Vec<usize> = (0..n_patients).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // Integer arithmetic keeps the floors exact.
    let n_train = n_patients * 7 / 10;
    let n_val = n_patients / 10;
    let test = order.split_off(n_train + n_val);
    let validation = order.split_off(n_train);
    Ok(DatasetSplit {
        train: order,
        validation,
        test,
    })
}

impl SplitPart {
    pub fn patients(self, split: &DatasetSplit) -> &[usize] {
        match self {
            SplitPart::Train => &split.train,
            SplitPart::Validation => &split.validation,
            SplitPart::Test => &split.test,
        }
    }
}

/// Examples whose patient belongs to `patients`, in example order.
pub fn select_examples(
    examples: &[SupervisedExample],
    patients: &[usize],
) -> Vec<SupervisedExample> {
    let wanted: HashSet<usize> = patients.iter().copied().collect();
    examples
        .iter()
        .filter(|e| wanted.contains(&e.patient_index))
        .cloned()
        .collect()
}
