//! Implementations of the CLI subcommands.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use editgate_core::edit::{AugmentedEdit, Edit, EditForm};
use editgate_core::eval::{load_dataset, run_incremental, run_sequential, run_single, MetricReport};
use editgate_core::filter::{load_training_samples, train_filter, TrainConfig};
use editgate_core::router::RoutePath;
use editgate_core::Error;

use crate::config::Config;
use crate::server;
use crate::{EvalSetting, TrainingFlags};

/// One line of an edits file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EditLine {
    #[serde(default)]
    id: Option<String>,
    query: String,
    answer: String,
}

/// One line of an augmentation cache file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheLine {
    edit_id: String,
    form: EditForm,
    text: String,
}

fn read_edit_lines(path: &Path) -> Result<Vec<EditLine>, Error> {
    let file = File::open(path).map_err(|e| {
        Error::InvalidInput(format!("cannot read edits file {}: {e}", path.display()))
    })?;
    let mut lines = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EditLine = serde_json::from_str(&line)
            .map_err(|e| Error::schema_at(index + 1, format!("bad edit line: {e}")))?;
        lines.push(parsed);
    }
    if lines.is_empty() {
        return Err(Error::InvalidInput(format!(
            "edits file {} holds no edits",
            path.display()
        )));
    }
    Ok(lines)
}

fn read_cache(path: &Path) -> Result<HashMap<String, Vec<(EditForm, String)>>, Error> {
    let file = File::open(path).map_err(|e| {
        Error::InvalidInput(format!("cannot read augmentation cache {}: {e}", path.display()))
    })?;
    let mut cache: HashMap<String, Vec<(EditForm, String)>> = HashMap::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CacheLine = serde_json::from_str(&line)
            .map_err(|e| Error::schema_at(index + 1, format!("bad cache line: {e}")))?;
        cache.entry(parsed.edit_id).or_default().push((parsed.form, parsed.text));
    }
    Ok(cache)
}

pub fn cmd_augment(config: &Config, edits_path: &Path, out_path: &Path) -> Result<(), Error> {
    let augmenter = config.build_augmenter()?;
    let lines = read_edit_lines(edits_path)?;
    let out = File::create(out_path)?;
    let mut writer = BufWriter::new(out);
    let mut forms_written = 0usize;
    for (index, line) in lines.iter().enumerate() {
        let sequence = index as u64 + 1;
        let id = line.id.clone().unwrap_or_else(|| format!("e{sequence}"));
        let edit = Edit::new(id, &line.query, &line.answer, sequence)?;
        let augmented = augmenter.augment(&edit)?;
        for (form, text) in augmented.forms() {
            let record = CacheLine {
                edit_id: edit.id.clone(),
                form: *form,
                text: text.clone(),
            };
            serde_json::to_writer(&mut writer, &record)
                .map_err(|e| Error::schema(format!("cannot encode cache line: {e}")))?;
            writer.write_all(b"\n")?;
            forms_written += 1;
        }
    }
    writer.flush()?;
    println!(
        "augmented {} edits into {} forms: {}",
        lines.len(),
        forms_written,
        out_path.display()
    );
    Ok(())
}

pub fn cmd_edit(config: &Config, edits_path: &Path, cache_path: Option<&Path>) -> Result<(), Error> {
    let mut engine = config.build_engine(true)?;
    let cache = match cache_path {
        Some(path) => read_cache(path)?,
        None => HashMap::new(),
    };
    let lines = read_edit_lines(edits_path)?;
    let mut entries_added = 0usize;
    for line in &lines {
        let id = line.id.clone().unwrap_or_else(|| engine.next_auto_id());
        entries_added += match cache.get(&id) {
            Some(forms) => {
                let step = engine.memory().current_step() + 1;
                let edit = Edit::new(id.clone(), &line.query, &line.answer, step)?;
                let augmented = AugmentedEdit::new(id.clone(), forms.clone())?;
                engine.apply_prepared(&edit, &augmented)?
            }
            None => engine.apply_edit(Some(id), &line.query, &line.answer)?.forms_stored,
        };
    }
    let snapshot_path = &config.persistence.memory_snapshot_path;
    engine.snapshot(snapshot_path)?;
    println!(
        "applied {} edits ({} new entries); memory snapshot: {}",
        lines.len(),
        entries_added,
        snapshot_path.display()
    );
    Ok(())
}

pub fn cmd_query(config: &Config, query: &str) -> Result<(), Error> {
    let engine = config.build_engine(true)?;
    let routed = engine.answer(query).map_err(Error::from)?;
    println!("{}", routed.answer);
    let path = match routed.decision.path {
        RoutePath::Base => "Base",
        RoutePath::Aligned => "Aligned",
    };
    let matched = routed
        .decision
        .matched_edit
        .as_ref()
        .map_or_else(|| "-".to_string(), |edit| edit.id.clone());
    let similarity = routed
        .decision
        .similarity
        .map_or_else(|| "-".to_string(), |s| format!("{s:.6}"));
    println!(
        "path={path} matched_edit={matched} similarity={similarity} considered={} passed_filter={}",
        routed.decision.candidates_considered, routed.decision.candidates_passed_filter
    );
    Ok(())
}

pub fn cmd_train_filter(
    config: &Config,
    samples_path: &Path,
    out_path: &Path,
    flags: &TrainingFlags,
) -> Result<(), Error> {
    let samples = load_training_samples(samples_path)?;
    let embedder = config.build_embedder()?;
    let defaults = TrainConfig::default();
    let train_config = TrainConfig {
        learning_rate: flags.lr.unwrap_or(defaults.learning_rate),
        epochs: flags.epochs.unwrap_or(defaults.epochs),
        seed: flags.seed.unwrap_or(defaults.seed),
        general_sample_rate: flags.general_rate.unwrap_or(defaults.general_sample_rate),
    };
    let mut report = train_filter(&samples, embedder.as_ref(), &train_config)?;
    if let Some(threshold) = config.retrieval.threshold {
        report.model.set_threshold(threshold)?;
    }
    report.model.save(out_path)?;
    print_training_summary(&report, out_path);
    Ok(())
}

fn print_training_summary(report: &editgate_core::filter::TrainReport, out_path: &Path) {
    let final_loss = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained on {}/{} samples over {} epochs; final loss {final_loss:.6}; weights: {}",
        report.samples_used,
        report.samples_total,
        report.epoch_losses.len(),
        out_path.display()
    );
}

pub fn cmd_eval(
    config: &Config,
    setting: EvalSetting,
    dataset_path: &Path,
    report_path: &Path,
) -> Result<(), Error> {
    let records = load_dataset(dataset_path)?;
    let report: MetricReport = match setting {
        EvalSetting::Single => run_single(&records, || config.build_engine(false))?,
        EvalSetting::Sequential => {
            let mut engine = config.build_engine(false)?;
            run_sequential(&records, &mut engine)?
        }
        EvalSetting::Incremental => {
            let mut engine = config.build_engine(false)?;
            run_incremental(&records, &mut engine)?
        }
    };
    let file = File::create(report_path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &report)
        .map_err(|e| Error::schema(format!("cannot encode report: {e}")))?;
    let locality = report
        .locality
        .map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
    let portability = report
        .portability
        .map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
    println!(
        "setting={} records={} edit_success={:.1} locality={locality} portability={portability} harmonic_mean={:.1}",
        report.setting,
        report.records.len(),
        report.edit_success,
        report.harmonic_mean
    );
    println!("report: {}", report_path.display());
    Ok(())
}

pub fn cmd_serve(config: &Config) -> Result<(), Error> {
    server::serve(config)
}
