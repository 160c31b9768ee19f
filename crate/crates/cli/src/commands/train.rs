//! `shgt train`: single runs, seed repeats, ablations and sweeps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use shgt_core::checkpoint::encode_checkpoint;
use shgt_core::train::{evaluate_examples, train, TrainLog};
use shgt_core::{EvalReport, LossBreakdown, Variant};

use super::{apply_metric_flags, ArtifactGuard, Prepared};
use crate::args::TrainArgs;
use crate::config::{FlatConfig, RunSettings};
use crate::error::{CliError, CliResult};
use crate::manifest::{unix_seconds, version_string, RunManifest, RunStatus, SplitSizes};
use crate::plot::{line_chart_svg, Series};
use crate::summary::{render_table, RowSummary};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Keys that `--sweep` may vary.
pub const SWEEP_KEYS: &[&str] = &[
    "layers", "alpha", "dim", "lr", "dropout", "epochs", "patience",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

/// Parses `key=v1,v2,a..b`. Ranges step by one unit of the finest decimal
/// place written in their endpoints, so `0.1..0.5` yields five values and
/// `1..4` four.
pub fn parse_sweep(spec: &str) -> CliResult<Sweep> {
    let usage = |msg: String| CliError::Usage(format!("--sweep {spec:?}: {msg}"));
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| usage("expected key=values".into()))?;
    let key = key.trim();
    if !SWEEP_KEYS.contains(&key) {
        return Err(usage(format!(
            "cannot sweep `{key}`; choose one of {}",
            SWEEP_KEYS.join(", ")
        )));
    }
    let mut out: Vec<String> = Vec::new();
    for item in values.split(',').map(str::trim) {
        let expanded = match item.split_once("..") {
            None => vec![item.to_string()],
            Some((a, b)) => expand_range(a.trim(), b.trim()).map_err(usage)?,
        };
        for v in expanded {
            if v.is_empty() {
                return Err(usage("empty value".into()));
            }
            if out.contains(&v) {
                return Err(usage(format!("value {v} listed twice")));
            }
            out.push(v);
        }
    }
    Ok(Sweep {
        key: key.to_string(),
        values: out,
    })
}

fn decimals(s: &str) -> usize {
    s.split_once('.').map_or(0, |(_, frac)| frac.len())
}

fn expand_range(a: &str, b: &str) -> Result<Vec<String>, String> {
    let places = decimals(a).max(decimals(b));
    let scale = 10f64.powi(places as i32);
    let units = |s: &str| -> Result<i64, String> {
        let v: f64 = s.parse().map_err(|_| format!("bad range endpoint {s:?}"))?;
        Ok((v * scale).round() as i64)
    };
    let (lo, hi) = (units(a)?, units(b)?);
    if lo > hi {
        return Err(format!("empty range {a}..{b}"));
    }
    if hi - lo > 10_000 {
        return Err(format!("range {a}..{b} is too long"));
    }
    Ok((lo..=hi)
        .map(|u| format!("{:.places$}", u as f64 / scale))
        .collect())
}

/// One training run in a (possibly multi-run) invocation.
#[derive(Debug, Clone)]
struct PlannedRun {
    row: String,
    dir: PathBuf,
    settings: RunSettings,
    sweep_value: Option<String>,
}

fn row_name(variant: Variant) -> String {
    match variant {
        Variant::Full => "SHGT".into(),
        Variant::WithoutStructure => "SHGT-w/o-S".into(),
        Variant::WithoutTransformer => "SHGT-w/o-T".into(),
        Variant::WithoutReconstruction => "SHGT-w/o-L".into(),
    }
}

fn plan(base: &RunSettings, args: &TrainArgs) -> CliResult<(Vec<PlannedRun>, Option<Sweep>)> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    if args.ablate.is_some() && args.sweep.is_some() {
        return Err(CliError::Usage(
            "--ablate and --sweep cannot be combined".into(),
        ));
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|i| base.train.seed + i).collect();
    let multi_seed = seeds.len() > 1;

    // (row name, subdirectory, settings, sweep value) per group
    let mut groups: Vec<(String, Option<String>, RunSettings, Option<String>)> = Vec::new();
    let sweep = args.sweep.as_deref().map(parse_sweep).transpose()?;
    if let Some(ablate) = &args.ablate {
        let mut variants = vec![Variant::Full];
        for &v in ablate {
            if !variants.contains(&v) {
                variants.push(v);
            }
        }
        for v in variants {
            let mut s = base.clone();
            s.train.variant = v;
            groups.push((row_name(v), Some(v.to_string()), s, None));
        }
    } else if let Some(sw) = &sweep {
        for value in &sw.values {
            let mut s = base.clone();
            s.apply(&FlatConfig::parse(&format!("{} = {value}", sw.key))?)?;
            s.validate()?;
            let name = format!("{}={value}", sw.key);
            groups.push((name.clone(), Some(name), s, Some(value.clone())));
        }
    } else {
        groups.push((row_name(base.train.variant), None, base.clone(), None));
    }

    let mut runs = Vec::new();
    for (row, sub, settings, sweep_value) in groups {
        for &seed in &seeds {
            let mut dir = args.out.clone();
            if let Some(sub) = &sub {
                dir.push(sub);
            }
            if multi_seed {
                dir.push(format!("seed-{seed}"));
            }
            let mut settings = settings.clone();
            settings.train.seed = seed;
            runs.push(PlannedRun {
                row: row.clone(),
                dir,
                settings,
                sweep_value: sweep_value.clone(),
            });
        }
    }
    Ok((runs, sweep))
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: TrainLog,
    pub validation: EvalReport,
    pub test: EvalReport,
}

fn config_map(settings: &RunSettings) -> BTreeMap<String, String> {
    settings
        .render()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn report_file(split: &str, report: &EvalReport) -> String {
    format!("split={split}\n{}", report.to_key_values())
}

/// Trains one model into `dir`, writing the manifest first and the
/// checkpoint, log and reports after. On failure every file written here is
/// removed again.
pub fn run_single(dir: &Path, settings: &RunSettings, data: &Prepared) -> CliResult<RunResult> {
    let started = Instant::now();
    let mut guard = ArtifactGuard::new();
    guard.create_dir(dir)?;
    let (n_train, n_val, n_test) = data.split.sizes();
    let mut manifest = RunManifest {
        status: RunStatus::Running,
        version: version_string(),
        config: config_map(settings),
        corpus_sha256: data.fingerprint.clone(),
        seed: settings.train.seed,
        split_seed: settings.split_seed,
        split_sizes: SplitSizes {
            train: n_train,
            validation: n_val,
            test: n_test,
        },
        skipped_patients: data.examples.skipped,
        codes: data.hypergraph.num_nodes(),
        visits: data.hypergraph.num_edges(),
        labels: data.n_labels(),
        started_unix: unix_seconds(),
        timings: BTreeMap::new(),
        epochs_run: None,
        best_epoch: None,
    };
    guard.track(dir.join(crate::manifest::MANIFEST_FILE));
    manifest.write(dir)?;

    log::info!(
        "training {} (seed {}) into {}",
        settings.train.variant,
        settings.train.seed,
        dir.display()
    );
    let t = Instant::now();
    let outcome = train(
        &settings.train,
        &data.hypergraph,
        data.n_labels(),
        &data.train,
        &data.validation,
    )
    .map_err(|failure| {
        log::error!("{failure}");
        CliError::from(failure.error)
    })?;
    manifest
        .timings
        .insert("train_seconds".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let validation = evaluate_examples(
        &outcome.best,
        &data.hypergraph,
        &data.validation,
        &settings.train,
    )?;
    let test = evaluate_examples(&outcome.best, &data.hypergraph, &data.test, &settings.train)?;
    manifest
        .timings
        .insert("eval_seconds".into(), t.elapsed().as_secs_f64());

    // Only run-invariant values go into the checkpoint so identical runs
    // produce identical bytes.
    let mut meta: BTreeMap<String, String> = config_map(settings)
        .into_iter()
        .map(|(k, v)| (format!("config.{k}"), v))
        .collect();
    meta.insert("corpus_sha256".into(), data.fingerprint.clone());
    meta.insert("codes".into(), data.hypergraph.num_nodes().to_string());
    meta.insert("visits".into(), data.hypergraph.num_edges().to_string());
    meta.insert("labels".into(), data.n_labels().to_string());
    if let Some(best) = outcome.log.best_epoch {
        meta.insert("best_epoch".into(), best.to_string());
    }
    let bytes = encode_checkpoint(&meta, &outcome.best)?;
    guard.write(dir.join(LOG_FILE), outcome.log.to_jsonl().as_bytes())?;
    guard.write(dir.join(CHECKPOINT_FILE), &bytes)?;
    guard.write(
        dir.join("eval_validation.txt"),
        report_file("validation", &validation).as_bytes(),
    )?;
    guard.write(
        dir.join("eval_test.txt"),
        report_file("test", &test).as_bytes(),
    )?;

    manifest.status = RunStatus::Complete;
    manifest.epochs_run = Some(outcome.log.records.len());
    manifest.best_epoch = outcome.log.best_epoch;
    manifest
        .timings
        .insert("total_seconds".into(), started.elapsed().as_secs_f64());
    manifest.write(dir)?;
    guard.disarm();
    Ok(RunResult {
        log: outcome.log,
        validation,
        test,
    })
}

fn execute(runs: &[PlannedRun], data: &Prepared, parallel: bool) -> CliResult<Vec<RunResult>> {
    if !parallel || runs.len() < 2 {
        return runs
            .iter()
            .map(|r| run_single(&r.dir, &r.settings, data))
            .collect();
    }
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(runs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<RunResult>>>> =
        Mutex::new((0..runs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(run) = runs.get(i) else { break };
                let result = run_single(&run.dir, &run.settings, data);
                results
                    .lock()
                    .expect("no worker panics while holding the lock")[i] = Some(result);
            });
        }
    });
    results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every run was claimed"))
        .collect()
}

#[derive(Debug, Serialize)]
struct SummaryJson<'a> {
    split_seed: u64,
    seeds: Vec<u64>,
    test: &'a [RowSummary],
    validation: &'a [RowSummary],
}

fn summarise(
    runs: &[PlannedRun],
    results: &[RunResult],
    pick: fn(&RunResult) -> &EvalReport,
) -> Vec<RowSummary> {
    let mut rows: Vec<RowSummary> = Vec::new();
    let mut i = 0;
    while i < runs.len() {
        let name = &runs[i].row;
        let group: Vec<(u64, &EvalReport)> = runs[i..]
            .iter()
            .zip(&results[i..])
            .take_while(|(r, _)| &r.row == name)
            .map(|(r, res)| (r.settings.train.seed, pick(res)))
            .collect();
        i += group.len();
        rows.push(RowSummary::new(name.clone(), &group));
    }
    rows
}

fn epoch0(log: &TrainLog) -> Option<LossBreakdown> {
    log.records.first().map(|r| r.loss)
}

pub const SWEEP_COLUMNS: [&str; 10] = [
    "key",
    "value",
    "seed",
    "epoch0_loss_total",
    "epoch0_loss_classification",
    "epoch0_loss_reconstruction",
    "epochs_run",
    "best_epoch",
    "val_w_f1",
    "test_w_f1",
];

fn sweep_csv(sweep: &Sweep, runs: &[PlannedRun], results: &[RunResult]) -> String {
    let mut out = SWEEP_COLUMNS.join(",");
    out.push('\n');
    for (run, res) in runs.iter().zip(results) {
        let e0 = epoch0(&res.log);
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let row = [
            sweep.key.clone(),
            run.sweep_value.clone().unwrap_or_default(),
            run.settings.train.seed.to_string(),
            f(e0.map(|l| l.total)),
            f(e0.map(|l| l.classification)),
            f(e0.map(|l| l.reconstruction)),
            res.log.records.len().to_string(),
            res.log
                .best_epoch
                .map_or_else(String::new, |b| b.to_string()),
            res.validation.w_f1.to_string(),
            res.test.w_f1.to_string(),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn sweep_svg(sweep: &Sweep, rows: &[RowSummary]) -> String {
    let points: Vec<(f64, f64)> = sweep
        .values
        .iter()
        .zip(rows)
        .filter_map(|(v, r)| v.parse::<f64>().ok().map(|x| (x, r.w_f1.mean)))
        .collect();
    line_chart_svg(
        &format!("Test w-F1 across {}", sweep.key),
        &sweep.key,
        &[Series {
            label: "w-F1 (mean over seeds)",
            points,
        }],
    )
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let mut settings = RunSettings::default();
    if let Some(path) = &args.config {
        settings.apply(&FlatConfig::load(path)?)?;
    }
    if let Some(seed) = args.seed {
        settings.train.seed = seed;
    }
    if let Some(seed) = args.split_seed {
        settings.split_seed = seed;
    }
    apply_metric_flags(&args.metrics, &mut settings);
    settings.validate()?;
    let (runs, sweep) = plan(&settings, args)?;
    let data = Prepared::load(&args.corpus, settings.split_seed)?;
    log::info!(
        "{} patients ({} skipped), {} codes, {} visits, {} runs",
        data.dataset.n_patients(),
        data.examples.skipped,
        data.hypergraph.num_nodes(),
        data.hypergraph.num_edges(),
        runs.len()
    );

    let results = execute(&runs, &data, args.parallel)?;
    if runs.len() == 1 {
        print!("{}", results[0].test);
        return Ok(());
    }

    let test_rows = summarise(&runs, &results, |r| &r.test);
    let val_rows = summarise(&runs, &results, |r| &r.validation);
    let table = render_table(&test_rows);
    print!("{table}");
    let mut guard = ArtifactGuard::new();
    let text = format!(
        "split: test\n{table}\nsplit: validation\n{}",
        render_table(&val_rows)
    );
    guard.write(args.out.join("summary.txt"), text.as_bytes())?;
    let json = SummaryJson {
        split_seed: settings.split_seed,
        seeds: (0..args.seeds).map(|i| settings.train.seed + i).collect(),
        test: &test_rows,
        validation: &val_rows,
    };
    let mut json = serde_json::to_string_pretty(&json).expect("summary serializes");
    json.push('\n');
    guard.write(args.out.join("summary.json"), json.as_bytes())?;
    if let Some(sw) = &sweep {
        guard.write(
            args.out.join("sweep.csv"),
            sweep_csv(sw, &runs, &results).as_bytes(),
        )?;
        guard.write(
            args.out.join("sweep.svg"),
            sweep_svg(sw, &test_rows).as_bytes(),
        )?;
    }
    guard.disarm();
    Ok(())
}
