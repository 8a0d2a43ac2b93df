//! End-to-end experiment drivers behind the CLI subcommands.
//!
//! `cmd_evolve` runs the full search-plus-finalization pipeline and writes
//! all run artifacts; `cmd_baseline` tests one baseline pairing under the
//! same protocol; `cmd_compare` runs Tukey HSD across sample files;
//! `cmd_props` inspects one function; `cmd_synth` materializes a synthetic
//! dataset as CSV. Artifact files are written to a temp name and renamed,
//! so a failed run never leaves a partially written file behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ConfigError, DatasetConfig, ExperimentConfig};
use crate::data::{load_csv, synth, DataError, Dataset, SynthKind, Targets};
use crate::evolution::{
    self, baseline_activation, finalize, EvolutionConfig, FinalReport, GenerationStats, Problem,
    ReportEntry, BASELINES,
};
use crate::expr::{ActivationTree, ParseError};
use crate::init::InitScheme;
use crate::nn::write_history_jsonl;
use crate::props::{analyze, PropertyGrid, PropertyVector};
use crate::rng::{derive, StreamAddress};
use crate::stats::{tukey_hsd, RunReport, StatsError, TukeyResult};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("unknown baseline activation '{0}' (expected relu, elu, or selu)")]
    UnknownBaseline(String),
    #[error("mismatched metrics: {0}")]
    MismatchedMetrics(String),
    #[error("{0}")]
    Problem(String),
    #[error("io error on '{path}': {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Command-line overrides on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_generations: Option<usize>,
}

pub struct EvolveOutcome {
    pub out_dir: PathBuf,
    pub report: FinalReport,
    pub significance: Vec<SignificanceRow>,
}

#[derive(Clone, Debug)]
pub struct SignificanceRow {
    pub metric: String,
    pub pair: String,
    pub mean_diff: f64,
    pub q: f64,
    pub p: f64,
}

/// Builds the dataset named by the config. Synthetic data derives from the
/// master seed, so a seed override changes the draw.
fn build_dataset(config: &ExperimentConfig, master: u64) -> Result<Dataset, Error> {
    match &config.dataset {
        DatasetConfig::Csv { path, .. } => {
            let schema = config.csv_schema().expect("csv schema");
            Ok(load_csv(path, &schema)?)
        }
        DatasetConfig::Synth {
            shape, n, noise, ..
        } => {
            let mut rng = derive(master, &StreamAddress::root().child("synth", 0));
            Ok(synth(*shape, *n, *noise, &mut rng))
        }
    }
}

fn build_problem(config: &ExperimentConfig, master: u64) -> Result<Problem, Error> {
    let dataset = build_dataset(config, master)?;
    Problem::new(
        &dataset,
        config.scaling(),
        &config.split_spec(),
        config.network_spec(),
        config.train_config(),
    )
    .map_err(Error::Problem)
}

fn resolve_out_dir(config: &ExperimentConfig, overrides: &CliOverrides, master: u64) -> PathBuf {
    if let Some(out) = &overrides.out {
        return out.clone();
    }
    if let Some(out) = &config.output_dir {
        return out.clone();
    }
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    PathBuf::from("runs").join(format!("{stamp}-{master}"))
}

/// Full pipeline: search, finalize, significance, artifacts.
pub fn cmd_evolve(
    config: &ExperimentConfig,
    overrides: &CliOverrides,
) -> Result<EvolveOutcome, Error> {
    config.validate()?;
    let master = overrides.seed.unwrap_or(config.master_seed);
    let problem = build_problem(config, master)?;
    let mut evo = config.evolution_config();
    if let Some(cap) = overrides.max_generations {
        evo.generations = evo.generations.min(cap);
    }

    println!(
        "master seed {master}; population {}, {} generation step(s)",
        evo.population_size, evo.generations
    );
    let result = evolution::run(&problem, &evo, master, |stats| {
        println!(
            "gen {:>3}  best {:.4}  mean {:.4}",
            stats.gen, stats.best_fitness, stats.mean_fitness
        );
    });
    let report = finalize(&result.final_population, &problem, &evo, master);
    let significance = significance_rows(&report);

    let out_dir = resolve_out_dir(config, overrides, master);
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    write_run_log(&out_dir, master, &result.generations)?;
    write_props_csv(&out_dir, &result.generations)?;
    write_best_txt(&out_dir, &report)?;
    write_report_csv(&out_dir, &report)?;
    write_samples_csv(&out_dir, &report)?;
    write_significance_csv(&out_dir, &significance)?;

    print_report(&report);
    print_significance(&significance);
    println!("artifacts written to {}", out_dir.display());
    Ok(EvolveOutcome {
        out_dir,
        report,
        significance,
    })
}

/// Trains and tests one baseline pairing under the finalization protocol.
pub fn cmd_baseline(
    config: &ExperimentConfig,
    activation_name: &str,
    init_override: Option<InitScheme>,
    overrides: &CliOverrides,
) -> Result<EvolveOutcome, Error> {
    config.validate()?;
    let activation = baseline_activation(activation_name)
        .ok_or_else(|| Error::UnknownBaseline(activation_name.to_string()))?;
    let init = init_override.unwrap_or_else(|| {
        BASELINES
            .iter()
            .find(|(name, _)| *name == activation_name)
            .map(|&(_, init)| init)
            .expect("known baseline")
    });
    let master = overrides.seed.unwrap_or(config.master_seed);
    let problem = build_problem(config, master)?;
    let evo = config.evolution_config();

    let addr = StreamAddress::root().child("baseline_cmd", 0);
    let summaries = evolution::repeated_test(&problem, &evo, &activation, init, master, &addr);
    let entry = ReportEntry {
        label: activation.label(),
        tree: None,
        init,
        validation_fitness: f64::NAN,
        metrics: summaries,
        is_baseline: true,
    };
    let report = FinalReport {
        entries: vec![entry],
    };

    let out_dir = resolve_out_dir(config, overrides, master);
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    write_report_csv(&out_dir, &report)?;
    write_samples_csv(&out_dir, &report)?;
    // Training history of one representative final run.
    let first = evolution_first_history(&problem, &evo, &activation, init, master, &addr);
    let mut buf = Vec::new();
    write_history_jsonl(&first, &mut buf).map_err(io_err(&out_dir))?;
    write_atomic(&out_dir.join("history.jsonl"), &buf)?;

    print_report(&report);
    println!("artifacts written to {}", out_dir.display());
    Ok(EvolveOutcome {
        out_dir,
        report,
        significance: Vec::new(),
    })
}

fn evolution_first_history(
    problem: &Problem,
    evo: &EvolutionConfig,
    activation: &crate::nn::Activation,
    init: InitScheme,
    master: u64,
    addr: &StreamAddress,
) -> crate::nn::TrainedModel {
    // Same address as the first repeat, so the history matches run 1.
    evolution::final_train_for_history(
        problem,
        evo,
        activation,
        init,
        master,
        &addr.child("run", 0),
    )
}

/// Tukey HSD across the groups found in `samples.csv`-style files, one
/// table per metric present in every file.
pub fn cmd_compare(files: &[PathBuf], out: Option<&Path>) -> Result<Vec<SignificanceRow>, Error> {
    if files.len() < 2 {
        return Err(Error::MismatchedMetrics(format!(
            "need at least two report files, got {}",
            files.len()
        )));
    }
    // (file, label, metric) -> samples, insertion-ordered.
    let mut groups: Vec<(usize, String, String, Vec<f64>)> = Vec::new();
    let mut per_file_metrics: Vec<std::collections::BTreeSet<String>> = Vec::new();
    for (fi, file) in files.iter().enumerate() {
        let mut reader = csv::Reader::from_path(file)
            .map_err(|e| Error::Data(DataError::Csv(format!("{}: {e}", file.display()))))?;
        let mut metrics_here = std::collections::BTreeSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Data(DataError::Csv(e.to_string())))?;
            let label = record.get(0).unwrap_or("").to_string();
            let metric = record.get(2).unwrap_or("").to_string();
            let value: f64 = record.get(4).unwrap_or("").parse().map_err(|_| {
                Error::Data(DataError::Csv(format!("bad value in {}", file.display())))
            })?;
            metrics_here.insert(metric.clone());
            match groups
                .iter_mut()
                .find(|(f, l, m, _)| *f == fi && *l == label && *m == metric)
            {
                Some((_, _, _, samples)) => samples.push(value),
                None => groups.push((fi, label, metric, vec![value])),
            }
        }
        if metrics_here.is_empty() {
            return Err(Error::MismatchedMetrics(format!(
                "{} contains no samples",
                file.display()
            )));
        }
        per_file_metrics.push(metrics_here);
    }
    let mut shared = per_file_metrics[0].clone();
    for m in &per_file_metrics[1..] {
        shared = shared.intersection(m).cloned().collect();
    }
    if shared.is_empty() {
        return Err(Error::MismatchedMetrics(
            "report files share no metric".to_string(),
        ));
    }

    let qualifiers = file_qualifiers(files);
    let mut rows = Vec::new();
    for metric in &shared {
        let mut reports: Vec<RunReport> = Vec::new();
        for (fi, label, m, samples) in &groups {
            if m != metric {
                continue;
            }
            // Qualify labels that collide across files.
            let exists = groups
                .iter()
                .any(|(f2, l2, m2, _)| f2 != fi && l2 == label && m2 == metric);
            let label = if exists {
                format!("{label} [{}]", qualifiers[*fi])
            } else {
                label.clone()
            };
            reports.push(RunReport::new(label, samples.clone()));
        }
        let results = tukey_hsd(&reports)?;
        rows.extend(filter_pairs(metric, &reports, results));
    }

    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_significance_csv(dir, &rows)?;
    }
    print_significance(&rows);
    Ok(rows)
}

/// Short unambiguous name per input file: the stem when stems are unique
/// (run directories usually all name the file samples.csv), otherwise
/// parent/stem, otherwise an index is appended.
fn file_qualifiers(files: &[PathBuf]) -> Vec<String> {
    let unique = |names: &[String]| {
        names
            .iter()
            .collect::<std::collections::BTreeSet<_>>()
            .len()
            == names.len()
    };
    let stems: Vec<String> = files
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| format!("file{i}"))
        })
        .collect();
    if unique(&stems) {
        return stems;
    }
    let with_parent: Vec<String> = files
        .iter()
        .zip(&stems)
        .map(|(f, stem)| {
            match f
                .parent()
                .and_then(|p| p.file_name())
                .map(|s| s.to_string_lossy().to_string())
            {
                Some(parent) if !parent.is_empty() => format!("{parent}/{stem}"),
                _ => stem.clone(),
            }
        })
        .collect();
    if unique(&with_parent) {
        return with_parent;
    }
    with_parent
        .into_iter()
        .enumerate()
        .map(|(i, q)| format!("{q}#{i}"))
        .collect()
}

/// When baseline-marked and unmarked groups are both present, keep only the
/// evolved-vs-baseline rows (the reporting shape of the final tables);
/// otherwise keep all pairs.
fn filter_pairs(
    metric: &str,
    reports: &[RunReport],
    results: Vec<TukeyResult>,
) -> Vec<SignificanceRow> {
    let is_baseline = |label: &str| label.contains("(baseline)");
    let have_baseline = reports.iter().any(|r| is_baseline(&r.label));
    let have_evolved = reports.iter().any(|r| !is_baseline(&r.label));
    results
        .into_iter()
        .filter(|r| {
            if have_baseline && have_evolved {
                is_baseline(&r.a) != is_baseline(&r.b)
            } else {
                true
            }
        })
        .map(|r| {
            // Evolved system first in the pair label.
            let (a, b, diff) = if is_baseline(&r.a) && !is_baseline(&r.b) {
                (r.b, r.a, -r.mean_diff)
            } else {
                (r.a, r.b, r.mean_diff)
            };
            SignificanceRow {
                metric: metric.to_string(),
                pair: format!("{a} vs {b}"),
                mean_diff: diff,
                q: r.q,
                p: r.p_value,
            }
        })
        .collect()
}

fn significance_rows(report: &FinalReport) -> Vec<SignificanceRow> {
    let mut rows = Vec::new();
    let metrics: Vec<_> = report
        .entries
        .first()
        .map(|e| e.metrics.iter().map(|m| m.kind).collect())
        .unwrap_or_default();
    for kind in metrics {
        let mut reports = Vec::new();
        for entry in &report.entries {
            if let Some(m) = entry.metrics.iter().find(|m| m.kind == kind) {
                if m.samples.len() >= 2 {
                    reports.push(RunReport::new(entry.label.clone(), m.samples.clone()));
                }
            }
        }
        if reports.len() < 2 {
            continue;
        }
        if let Ok(results) = tukey_hsd(&reports) {
            rows.extend(filter_pairs(kind.name(), &reports, results));
        }
    }
    rows
}

/// Parses and analyzes one activation function given as an s-expression.
pub struct PropsReport {
    pub tree: ActivationTree,
    pub vector: PropertyVector,
    pub probes: Vec<(f64, Option<f64>)>,
}

pub fn cmd_props(text: &str) -> Result<PropsReport, Error> {
    let tree: ActivationTree = text.parse()?;
    let vector = analyze(&tree);
    let grid = PropertyGrid::default();
    let mut probes = Vec::new();
    for k in 1..=grid.probe_decades {
        for sign in [-1.0, 1.0] {
            let x = sign * 10f64.powi(k as i32);
            probes.push((x, tree.eval(x).ok()));
        }
    }
    probes.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(PropsReport {
        tree,
        vector,
        probes,
    })
}

/// Writes a synthetic dataset as CSV (feature columns plus `target`).
pub fn cmd_synth(
    kind: SynthKind,
    n: usize,
    noise: f64,
    seed: u64,
    out: &Path,
) -> Result<(), Error> {
    let mut rng = derive(seed, &StreamAddress::root().child("synth", 0));
    let dataset = synth(kind, n, noise, &mut rng);
    let mut text = String::new();
    let _ = writeln!(text, "{},target", dataset.feature_names.join(","));
    for i in 0..dataset.n_rows() {
        for j in 0..dataset.n_features() {
            let _ = write!(text, "{},", dataset.features[[i, j]]);
        }
        let value = match &dataset.targets {
            Targets::Binary(v) | Targets::Regression(v) => v[i].to_string(),
            Targets::Multiclass { labels, .. } => labels[i].to_string(),
        };
        let _ = writeln!(text, "{value}");
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    write_atomic(out, text.as_bytes())?;
    println!("wrote {} rows to {}", n, out.display());
    Ok(())
}

// ---- artifact writers -------------------------------------------------

/// Write-to-temp then rename, so failures never leave partial artifacts.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

fn write_run_log(dir: &Path, master: u64, generations: &[GenerationStats]) -> Result<(), Error> {
    let mut text = String::new();
    let _ = writeln!(text, "{{\"master_seed\":{master}}}");
    for stats in generations {
        let line = serde_json::to_string(stats).expect("serializable stats");
        let _ = writeln!(text, "{line}");
    }
    write_atomic(&dir.join("log.jsonl"), text.as_bytes())
}

fn write_props_csv(dir: &Path, generations: &[GenerationStats]) -> Result<(), Error> {
    let mut text =
        String::from("generation,zero_on_nonpositive,monotone,upper_unbounded,lower_unbounded\n");
    for stats in generations {
        let f = &stats.property_fractions;
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            stats.gen, f.zero_on_nonpositive, f.monotone, f.upper_unbounded, f.lower_unbounded
        );
    }
    write_atomic(&dir.join("props.csv"), text.as_bytes())
}

fn write_best_txt(dir: &Path, report: &FinalReport) -> Result<(), Error> {
    let mut text = String::new();
    for entry in report.entries.iter().filter(|e| !e.is_baseline) {
        let tree = entry.tree.as_deref().unwrap_or("x");
        let _ = writeln!(
            text,
            "{{tree = \"{}\", init = \"{}\"}}",
            tree,
            entry.init.name()
        );
    }
    write_atomic(&dir.join("best.txt"), text.as_bytes())
}

fn write_report_csv(dir: &Path, report: &FinalReport) -> Result<(), Error> {
    let mut text = String::from("function,init_scheme,metric,mean,std\n");
    for entry in &report.entries {
        for m in &entry.metrics {
            let _ = writeln!(
                text,
                "{},{},{},{},{}",
                csv_field(&entry.label),
                entry.init.name(),
                m.kind.name(),
                m.mean,
                m.std
            );
        }
    }
    write_atomic(&dir.join("report.csv"), text.as_bytes())
}

fn write_samples_csv(dir: &Path, report: &FinalReport) -> Result<(), Error> {
    let mut text = String::from("function,init_scheme,metric,run,value\n");
    for entry in &report.entries {
        for m in &entry.metrics {
            for (run, value) in m.samples.iter().enumerate() {
                let _ = writeln!(
                    text,
                    "{},{},{},{},{}",
                    csv_field(&entry.label),
                    entry.init.name(),
                    m.kind.name(),
                    run + 1,
                    value
                );
            }
        }
    }
    write_atomic(&dir.join("samples.csv"), text.as_bytes())
}

fn write_significance_csv(dir: &Path, rows: &[SignificanceRow]) -> Result<(), Error> {
    let mut text = String::from("metric,pair,mean_diff,q,p\n");
    for row in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            row.metric,
            csv_field(&row.pair),
            row.mean_diff,
            row.q,
            row.p
        );
    }
    write_atomic(&dir.join("significance.csv"), text.as_bytes())
}

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

// ---- console output ----------------------------------------------------

fn print_report(report: &FinalReport) {
    println!();
    println!(
        "{:<34} {:<16} {:<22} mean (std)",
        "function", "init", "metric"
    );
    for entry in &report.entries {
        for m in &entry.metrics {
            println!(
                "{:<34} {:<16} {:<22} {:.4} ({:.4})",
                truncate(&entry.label, 34),
                entry.init.name(),
                m.kind.name(),
                m.mean,
                m.std
            );
        }
    }
}

fn print_significance(rows: &[SignificanceRow]) {
    if rows.is_empty() {
        return;
    }
    println!();
    println!(
        "{:<22} {:<52} {:>10} {:>8}",
        "metric", "pair", "mean diff", "p"
    );
    for row in rows {
        println!(
            "{:<22} {:<52} {:>10.4} {:>8}",
            row.metric,
            truncate(&row.pair, 52),
            row.mean_diff,
            format_p(row.p)
        );
    }
}

/// Paper-style display: values below 0.001 print as "< .001".
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "< .001".to_string()
    } else {
        format!("{p:.3}")
    }
}

fn truncate(s: &str, width: usize) -> String {
    if s.len() <= width {
        s.to_string()
    } else {
        format!("{}…", &s[..width.saturating_sub(1)])
    }
}
