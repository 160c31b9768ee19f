//! Synthetic cohorts with planted latent disease clusters.
//!
//! Every code is assigned to one cluster (round robin within its kind).
//! Each patient carries one or two clusters, and visit codes are drawn from
//! the union of those clusters' pools, with a `noise` fraction drawn
//! uniformly from the whole vocabulary instead. Codes from the same cluster
//! therefore co-occur in groups, which is the higher-order structure the
//! hypergraph model is meant to pick up.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CodeKind, EhrDataset, PatientRecord};
use crate::error::{Result, ShgtError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub patients: usize,
    pub diagnoses: usize,
    pub medications: usize,
    pub procedures: usize,
    pub clusters: usize,
    /// Visits per patient including the target visit, inclusive range.
    pub min_visits: usize,
    pub max_visits: usize,
    /// Distinct codes per visit, inclusive range.
    pub min_codes: usize,
    pub max_codes: usize,
    /// Probability that a code is drawn uniformly instead of from the pool.
    pub noise: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            patients: 50,
            diagnoses: 40,
            medications: 20,
            procedures: 20,
            clusters: 4,
            min_visits: 2,
            max_visits: 4,
            min_codes: 4,
            max_codes: 8,
            noise: 0.1,
        }
    }
}

impl GeneratorConfig {
    pub fn vocabulary_size(&self) -> usize {
        self.diagnoses + self.medications + self.procedures
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(ShgtError::Config(format!("generator: {msg}")));
        if self.patients == 0 {
            return fail("patients must be at least 1");
        }
        if self.diagnoses == 0 {
            return fail("diagnoses must be at least 1");
        }
        if self.clusters == 0 || self.clusters > self.diagnoses {
            return fail("clusters must be between 1 and the number of diagnoses");
        }
        if self.min_visits < 2 || self.min_visits > self.max_visits {
            return fail("visit range must satisfy 2 <= min_visits <= max_visits");
        }
        if self.min_codes == 0 || self.min_codes > self.max_codes {
            return fail("code range must satisfy 1 <= min_codes <= max_codes");
        }
        if self.max_codes > self.vocabulary_size() {
            return fail("codes per visit exceed the vocabulary size");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return fail("noise must lie in [0, 1]");
        }
        Ok(())
    }
}

struct CodeSpace {
    tokens: Vec<String>,
    kinds: Vec<CodeKind>,
    pools: Vec<Vec<usize>>,
}

fn code_space(cfg: &GeneratorConfig) -> CodeSpace {
    let mut tokens = Vec::with_capacity(cfg.vocabulary_size());
    let mut kinds = Vec::with_capacity(cfg.vocabulary_size());
    let mut pools = vec![Vec::new(); cfg.clusters];
    for (kind, count, letter) in [
        (CodeKind::Diagnosis, cfg.diagnoses, 'D'),
        (CodeKind::Medication, cfg.medications, 'M'),
        (CodeKind::Procedure, cfg.procedures, 'P'),
    ] {
        let width = count.to_string().len();
        for k in 0..count {
            pools[k % cfg.clusters].push(tokens.len());
            tokens.push(format!("{}:{letter}{k:0width$}", kind.prefix()));
            kinds.push(kind);
        }
    }
    CodeSpace {
        tokens,
        kinds,
        pools,
    }
}

fn draw_visit(
    rng: &mut ChaCha8Rng,
    space: &CodeSpace,
    pool: &[usize],
    n_codes: usize,
    noise: f64,
) -> Vec<usize> {
    let total = space.tokens.len();
    let mut visit: Vec<usize> = Vec::with_capacity(n_codes);
    while visit.len() < n_codes {
        let from_pool = rng.gen::<f64>() >= noise;
        let candidates: Vec<usize> = if from_pool {
            pool.iter()
                .copied()
                .filter(|c| !visit.contains(c))
                .collect()
        } else {
            Vec::new()
        };
        let code = match candidates.choose(rng) {
            Some(&c) => c,
            None => loop {
                let c = rng.gen_range(0..total);
                if !visit.contains(&c) {
                    break c;
                }
            },
        };
        visit.push(code);
    }
    visit
}

/// Generates a cohort that satisfies every dataset invariant. Deterministic
/// for a given `(cfg, seed)`.
pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<EhrDataset> {
    cfg.validate()?;
    let space = code_space(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = cfg.patients.to_string().len();
    let mut records = Vec::with_capacity(cfg.patients);

    for u in 0..cfg.patients {
        let n_clusters = if cfg.clusters > 1 && rng.gen_bool(0.5) {
            2
        } else {
            1
        };
        let clusters: Vec<usize> =
            rand::seq::index::sample(&mut rng, cfg.clusters, n_clusters).into_vec();
        let mut pool: Vec<usize> = clusters
            .iter()
            .flat_map(|&c| space.pools[c].iter().copied())
            .collect();
        pool.sort_unstable();

        let n_visits = rng.gen_range(cfg.min_visits..=cfg.max_visits);
        let mut visits = Vec::with_capacity(n_visits);
        for t in 0..n_visits {
            let n_codes = rng.gen_range(cfg.min_codes..=cfg.max_codes);
            let mut codes = draw_visit(&mut rng, &space, &pool, n_codes, cfg.noise);
            let is_target = t + 1 == n_visits;
            if is_target && !codes.iter().any(|&c| space.kinds[c] == CodeKind::Diagnosis) {
                // the pool always holds a diagnosis since clusters <= diagnoses
                let diag: Vec<usize> = pool
                    .iter()
                    .copied()
                    .filter(|&c| space.kinds[c] == CodeKind::Diagnosis)
                    .collect();
                let pick = *diag.choose(&mut rng).expect("pool has a diagnosis");
                let slot = rng.gen_range(0..codes.len());
                codes[slot] = pick;
            }
            visits.push(codes.into_iter().map(|c| space.tokens[c].clone()).collect());
        }
        records.push(PatientRecord {
            patient_id: format!("S{u:0width$}"),
            visits,
        });
    }
    EhrDataset::from_records(&records)
}
