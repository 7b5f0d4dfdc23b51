use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use soundocc::data::{
    filter_analysis_window, generate_synthetic, ingest_slots, read_truth, write_slots, write_truth, GroundTruth,
    RoomConfig, SlotFormat, SlotRecord,
};
use soundocc::energy::{
    energy_by_room, energy_slots, summarize_energy, temperature_distributions, write_cdf_csv, write_histogram_csv,
    EnergyReport, TemperatureHistograms,
};
use soundocc::neural::ClassifierModel;
use soundocc::occupancy::{
    cross_room_transfer, detect_classifier, detect_cluster, detect_semi_supervised, detect_threshold,
    evaluate as score, midpoint_thresholds, read_verdicts, slot_features, train_occupancy_models, write_verdicts,
    ClusterReports, EvaluationReport, Method, OccupancyVerdict, TrainedModels,
};

use crate::config::RunConfig;
use crate::output::RunDir;

fn warn(messages: &[String]) {
    for m in messages {
        eprintln!("warning: {m}");
    }
}

fn check_rooms_exist(selected: &[String], present: &BTreeSet<String>, what: &str) -> Result<()> {
    if let Some(r) = selected.iter().find(|r| !present.contains(*r)) {
        bail!("room `{r}` is not present in the {what}");
    }
    Ok(())
}

/// Read, room-select and office-hours filter the configured slot file.
fn load_slots(config: &RunConfig, run: &mut RunDir) -> Result<Vec<SlotRecord>> {
    let path = config.require(&config.slots, "slot", "--slots")?;
    let outcome = ingest_slots(path, SlotFormat::from_path(path), config.strict)
        .with_context(|| format!("reading slots from {}", path.display()))?;
    warn(&outcome.warnings);
    run.input(path);
    let mut slots = outcome.records;
    if !config.select_rooms.is_empty() {
        let present: BTreeSet<String> = slots.iter().map(|s| s.room_id.clone()).collect();
        check_rooms_exist(&config.select_rooms, &present, "slot data")?;
        slots.retain(|s| config.select_rooms.contains(&s.room_id));
    }
    if config.apply_filter {
        slots = filter_analysis_window(&slots, &config.filter);
    }
    if slots.is_empty() {
        bail!("no slots left after room selection and office-hours filtering");
    }
    Ok(slots)
}

fn restrict_truth(truth: Vec<GroundTruth>, slots: &[SlotRecord]) -> Vec<GroundTruth> {
    let keys: BTreeSet<_> = slots.iter().map(|s| s.key()).collect();
    truth
        .into_iter()
        .filter(|t| keys.contains(&(t.room_id.clone(), t.slot_start)))
        .collect()
}

fn load_truth(config: &RunConfig, run: &mut RunDir, slots: &[SlotRecord]) -> Result<Option<Vec<GroundTruth>>> {
    let Some(path) = &config.truth else {
        return Ok(None);
    };
    run.input(path);
    let truth = read_truth(path).with_context(|| format!("reading ground truth from {}", path.display()))?;
    Ok(Some(restrict_truth(truth, slots)))
}

fn note_room_config(config: &RunConfig, run: &mut RunDir) {
    if let Some(p) = &config.room_config {
        run.input(p);
    }
}

fn train_slots(config: &RunConfig, slots: &[SlotRecord]) -> Result<Vec<SlotRecord>> {
    if config.train_rooms.is_empty() {
        return Ok(slots.to_vec());
    }
    let present: BTreeSet<String> = slots.iter().map(|s| s.room_id.clone()).collect();
    check_rooms_exist(&config.train_rooms, &present, "selected slot data")?;
    Ok(slots
        .iter()
        .filter(|s| config.train_rooms.contains(&s.room_id))
        .cloned()
        .collect())
}

fn write_models(run: &mut RunDir, trained: &TrainedModels) -> Result<()> {
    run.write_json("autoencoder.json", &trained.classifier.encoder)?;
    run.write_json("classifier.json", &trained.classifier)?;
    run.write_json("training_metrics.json", &trained.metrics)?;
    Ok(())
}

#[derive(Serialize)]
struct RoomsFile<'a> {
    rooms: &'a [RoomConfig],
}

pub fn synth(config: &RunConfig, tag: Option<&str>) -> Result<PathBuf> {
    let mut spec = config.generator.clone();
    if !config.select_rooms.is_empty() {
        let present: BTreeSet<String> = spec.rooms.iter().map(|r| r.room_id.clone()).collect();
        check_rooms_exist(&config.select_rooms, &present, "generator spec")?;
        spec.rooms.retain(|r| config.select_rooms.contains(&r.room_id));
    }
    let data = generate_synthetic(&spec, config.days).context("invalid generator spec")?;
    warn(&data.warnings);
    let rooms = midpoint_thresholds(&data.records, &data.truth).context("calibrating room thresholds")?;

    let mut run = RunDir::create(config, "synth", tag)?;
    let comment = run.comment();
    let path = run.path("slots.csv");
    write_slots(&path, SlotFormat::Csv, &data.records, Some(&comment))?;
    let path = run.path("truth.csv");
    write_truth(&path, &data.truth, Some(&comment))?;
    run.write_json("rooms.json", &RoomsFile { rooms: &rooms })?;
    run.finish(config)
}

pub fn train(config: &RunConfig, tag: Option<&str>) -> Result<PathBuf> {
    let mut run = RunDir::create(config, "train", tag)?;
    note_room_config(config, &mut run);
    let slots = load_slots(config, &mut run)?;
    let slots = train_slots(config, &slots)?;
    let trained = train_occupancy_models(&slots, &config.rooms, &config.training).context("training models")?;
    write_models(&mut run, &trained)?;
    run.finish(config)
}

fn load_model(path: &Path) -> Result<ClassifierModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    ClassifierModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

fn verdict_name(method: Method, format: SlotFormat) -> String {
    let ext = match format {
        SlotFormat::Csv => "csv",
        SlotFormat::Jsonl => "jsonl",
    };
    format!("verdicts_{}.{ext}", method.as_str())
}

pub fn detect(config: &RunConfig, tag: Option<&str>, train_inline: bool) -> Result<PathBuf> {
    let mut run = RunDir::create(config, "detect", tag)?;
    note_room_config(config, &mut run);
    let slots = load_slots(config, &mut run)?;
    let truth = load_truth(config, &mut run, &slots)?;

    let needs_model = config
        .methods
        .iter()
        .any(|m| matches!(m, Method::Classifier | Method::SemiSupervised));
    let model = if !needs_model {
        None
    } else if let Some(path) = &config.model {
        run.input(path);
        Some(load_model(path)?)
    } else if train_inline {
        let trained = train_occupancy_models(&train_slots(config, &slots)?, &config.rooms, &config.training)
            .context("training models inline")?;
        write_models(&mut run, &trained)?;
        Some(trained.classifier)
    } else {
        let m = config
            .methods
            .iter()
            .find(|m| matches!(m, Method::Classifier | Method::SemiSupervised))
            .expect("needs_model");
        bail!("method {m} needs a trained classifier: pass --model or --train");
    };

    let needs_features = config.methods.iter().any(|m| m.has_cluster());
    let features = if needs_features {
        Some(slot_features(&slots, config.cluster.pooled).context("computing slot features")?)
    } else {
        None
    };

    let comment = run.comment();
    let mut clusters: BTreeMap<String, ClusterReports> = BTreeMap::new();
    let mut evaluation: BTreeMap<String, EvaluationReport> = BTreeMap::new();
    for &method in &config.methods {
        let verdicts: Vec<OccupancyVerdict> = match method {
            Method::Threshold => detect_threshold(&slots, &config.rooms)?,
            Method::Cluster => {
                let (v, reports) = detect_cluster(features.as_deref().expect("features"), &config.cluster)?;
                clusters.insert(method.to_string(), reports);
                v
            }
            Method::Classifier => detect_classifier(&slots, model.as_ref().expect("model"))?,
            Method::SemiSupervised => {
                let (v, reports) = detect_semi_supervised(
                    &slots,
                    features.as_deref().expect("features"),
                    model.as_ref().expect("model"),
                    &config.cluster,
                )?;
                clusters.insert(method.to_string(), reports);
                v
            }
        };
        let path = run.path(&verdict_name(method, config.verdict_format));
        write_verdicts(&path, config.verdict_format, &verdicts, Some(&comment))?;
        if let (Some(truth), Some(_)) = (&truth, verdicts.first().and_then(|v| v.occupied)) {
            evaluation.insert(method.to_string(), score(&verdicts, truth)?);
        }
    }
    if !clusters.is_empty() {
        run.write_json("clusters.json", &ClustersOut { clusters: &clusters })?;
    }
    if truth.is_some() {
        run.write_json("evaluation.json", &MethodsOut { methods: &evaluation })?;
    }
    run.finish(config)
}

#[derive(Serialize)]
struct ClustersOut<'a> {
    clusters: &'a BTreeMap<String, ClusterReports>,
}

#[derive(Serialize)]
struct MethodsOut<'a> {
    methods: &'a BTreeMap<String, EvaluationReport>,
}

#[derive(Serialize)]
struct EnergyOutput<'a> {
    method: Method,
    pooled: &'a EnergyReport,
    per_room: &'a BTreeMap<String, EnergyReport>,
    temperature: &'a TemperatureHistograms,
}

pub fn energy(config: &RunConfig, tag: Option<&str>) -> Result<PathBuf> {
    let mut run = RunDir::create(config, "energy", tag)?;
    let slots = load_slots(config, &mut run)?;
    let path = config.require(&config.verdicts, "verdict", "--verdicts")?;
    run.input(path);
    let rooms: BTreeSet<&str> = slots.iter().map(|s| s.room_id.as_str()).collect();
    let keys: BTreeSet<_> = slots.iter().map(|s| s.key()).collect();
    let verdicts: Vec<OccupancyVerdict> = read_verdicts(path)
        .with_context(|| format!("reading verdicts from {}", path.display()))?
        .into_iter()
        .filter(|v| rooms.contains(v.room_id.as_str()) && keys.contains(&v.key()))
        .collect();
    let methods: BTreeSet<Method> = verdicts.iter().map(|v| v.method).collect();
    let method = match methods.len() {
        1 => *methods.first().expect("one method"),
        0 => bail!("{} holds no verdicts for the selected slots", path.display()),
        _ => bail!("{} mixes verdicts from several methods", path.display()),
    };
    let es = energy_slots(&slots, &verdicts, &config.energy).context("joining slots with verdicts")?;
    let pooled = summarize_energy(&es, &config.energy);
    let per_room = energy_by_room(&es, &config.energy);
    let temperature = temperature_distributions(&es, config.temp_bin_width)?;
    if pooled.negative_delta_slots > 0 {
        eprintln!(
            "warning: {} slot(s) have supply air warmer than the room",
            pooled.negative_delta_slots
        );
    }

    run.write_json(
        "energy_report.json",
        &EnergyOutput {
            method,
            pooled: &pooled,
            per_room: &per_room,
            temperature: &temperature,
        },
    )?;
    let comment = run.comment();
    let p = run.path("energy_cdf.csv");
    write_cdf_csv(&p, &pooled, Some(&comment))?;
    let p = run.path("temperature_histogram.csv");
    write_histogram_csv(&p, &temperature, Some(&comment))?;
    run.finish(config)
}

fn evaluate_cmd(config: &RunConfig, run: &mut RunDir) -> Result<()> {
    let truth_path = config.require(&config.truth, "ground-truth", "--truth")?;
    if !config.test_rooms.is_empty() {
        note_room_config(config, run);
        let slots = load_slots(config, run)?;
        run.input(truth_path);
        let truth = restrict_truth(read_truth(truth_path)?, &slots);
        let train_rooms = if config.train_rooms.is_empty() {
            let test: BTreeSet<&String> = config.test_rooms.iter().collect();
            let all: BTreeSet<String> = slots.iter().map(|s| s.room_id.clone()).collect();
            all.into_iter().filter(|r| !test.contains(r)).collect()
        } else {
            config.train_rooms.clone()
        };
        let report = cross_room_transfer(
            &slots,
            &truth,
            &train_rooms,
            &config.test_rooms,
            &config.rooms,
            &config.training,
            &config.cluster,
        )
        .context("cross-room transfer")?;
        run.write_json("transfer.json", &report)?;
        return Ok(());
    }
    let path = config.require(&config.verdicts, "verdict", "--verdicts")?;
    run.input(path);
    run.input(truth_path);
    let verdicts = read_verdicts(path).with_context(|| format!("reading verdicts from {}", path.display()))?;
    let truth = read_truth(truth_path)?;
    let mut by_method: BTreeMap<Method, Vec<OccupancyVerdict>> = BTreeMap::new();
    for v in verdicts {
        by_method.entry(v.method).or_default().push(v);
    }
    let mut reports = BTreeMap::new();
    for (method, vs) in by_method {
        let keys: BTreeSet<_> = vs.iter().map(|v| v.key()).collect();
        let t: Vec<GroundTruth> = truth
            .iter()
            .filter(|t| keys.contains(&(t.room_id.clone(), t.slot_start)))
            .cloned()
            .collect();
        reports.insert(method.to_string(), score(&vs, &t)?);
    }
    run.write_json("evaluation.json", &MethodsOut { methods: &reports })?;
    Ok(())
}

pub fn evaluate(config: &RunConfig, tag: Option<&str>) -> Result<PathBuf> {
    let mut run = RunDir::create(config, "evaluate", tag)?;
    evaluate_cmd(config, &mut run)?;
    run.finish(config)
}
