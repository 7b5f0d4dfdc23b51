//! Threshold, clustering, classifier and semi-supervised occupancy detection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{select_clustering, ClusterSearchResult, DEFAULT_K_MAX, DEFAULT_K_MIN};
use crate::data::{self, GroundTruth, RoomConfig, SlotFormat, SlotRecord};
use crate::features::{fit_pca, histogram_haar, FeatureVector, DEFAULT_VARIANCE_TARGET};
use crate::neural::{ClassifierModel, PipelineConfig, TrainingHistory};
use crate::{Error, Result, SlotKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Threshold,
    Cluster,
    Classifier,
    SemiSupervised,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Threshold,
        Method::Cluster,
        Method::Classifier,
        Method::SemiSupervised,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Threshold => "threshold",
            Method::Cluster => "cluster",
            Method::Classifier => "classifier",
            Method::SemiSupervised => "semi_supervised",
        }
    }

    /// Whether verdicts from this method carry a probability.
    pub fn has_probability(self) -> bool {
        matches!(self, Method::Classifier | Method::SemiSupervised)
    }

    pub fn has_cluster(self) -> bool {
        matches!(self, Method::Cluster | Method::SemiSupervised)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(Method::Threshold),
            "cluster" => Ok(Method::Cluster),
            "classifier" => Ok(Method::Classifier),
            "semi" | "semi_supervised" | "semi-supervised" => Ok(Method::SemiSupervised),
            other => Err(Error::InvalidConfig(format!("unknown detection method `{other}`"))),
        }
    }
}

/// Occupancy decision for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyVerdict {
    pub room_id: String,
    pub slot_start: DateTime<Utc>,
    /// `None` for plain clustering, whose clusters are unlabeled.
    pub occupied: Option<bool>,
    pub probability: Option<f64>,
    pub method: Method,
    pub cluster_id: Option<usize>,
}

impl OccupancyVerdict {
    pub fn key(&self) -> SlotKey {
        (self.room_id.clone(), self.slot_start)
    }
}

/// The classifier decision rule.
pub fn is_occupied(probability: f64) -> bool {
    probability > 0.5
}

fn room_map(rooms: &[RoomConfig]) -> HashMap<&str, &RoomConfig> {
    rooms.iter().map(|r| (r.room_id.as_str(), r)).collect()
}

/// Occupied when the slot's accumulated noise strictly exceeds the room's threshold.
pub fn detect_threshold(slots: &[SlotRecord], rooms: &[RoomConfig]) -> Result<Vec<OccupancyVerdict>> {
    let by_room = room_map(rooms);
    slots
        .iter()
        .map(|s| {
            let cfg = by_room
                .get(s.room_id.as_str())
                .ok_or_else(|| Error::MissingThreshold(s.room_id.clone()))?;
            let sum = s.noise_sum.ok_or_else(|| {
                Error::Domain(format!(
                    "slot {} {} has no accumulated noise value",
                    s.room_id, s.slot_start
                ))
            })?;
            Ok(OccupancyVerdict {
                room_id: s.room_id.clone(),
                slot_start: s.slot_start,
                occupied: Some(sum > cfg.threshold),
                probability: None,
                method: Method::Threshold,
                cluster_id: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSearch {
    pub k_min: usize,
    pub k_max: usize,
    /// Cluster all rooms together instead of each room separately.
    pub pooled: bool,
}

impl Default for ClusterSearch {
    fn default() -> Self {
        ClusterSearch {
            k_min: DEFAULT_K_MIN,
            k_max: DEFAULT_K_MAX,
            pooled: false,
        }
    }
}

pub const POOLED_GROUP: &str = "pooled";

fn group_key(room_id: &str, pooled: bool) -> &str {
    if pooled {
        POOLED_GROUP
    } else {
        room_id
    }
}

fn histogram_of(s: &SlotRecord) -> Result<&data::NoiseHistogram> {
    s.histogram
        .as_ref()
        .ok_or_else(|| Error::Domain(format!("slot {} {} has no noise histogram", s.room_id, s.slot_start)))
}

/// Haar-then-PCA features for every slot, with PCA fitted per room or on
/// the pooled set. Output order follows `slots`.
pub fn slot_features(slots: &[SlotRecord], pooled: bool) -> Result<Vec<FeatureVector>> {
    let coeffs: Vec<Vec<f64>> = slots
        .iter()
        .map(|s| histogram_haar(histogram_of(s)?))
        .collect::<Result<_>>()?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in slots.iter().enumerate() {
        groups.entry(group_key(&s.room_id, pooled)).or_default().push(i);
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); slots.len()];
    for idx in groups.values() {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| coeffs[i].clone()).collect();
        let model = fit_pca(&rows, DEFAULT_VARIANCE_TARGET)?;
        for (&i, row) in idx.iter().zip(&rows) {
            values[i] = model.project(row)?;
        }
    }
    Ok(slots
        .iter()
        .zip(values)
        .map(|(s, values)| FeatureVector {
            room_id: s.room_id.clone(),
            slot_start: s.slot_start,
            values,
        })
        .collect())
}

/// Cluster search results keyed by room, or by [`POOLED_GROUP`].
pub type ClusterReports = BTreeMap<String, ClusterSearchResult>;

/// Annotate each slot with a cluster id; `occupied` stays unset.
pub fn detect_cluster(
    features: &[FeatureVector],
    search: &ClusterSearch,
) -> Result<(Vec<OccupancyVerdict>, ClusterReports)> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in features.iter().enumerate() {
        groups.entry(group_key(&f.room_id, search.pooled)).or_default().push(i);
    }
    let mut ids = vec![0usize; features.len()];
    let mut reports = BTreeMap::new();
    for (group, idx) in groups {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| features[i].values.clone()).collect();
        let result = select_clustering(&rows, search.k_min, search.k_max)?;
        for (&i, &label) in idx.iter().zip(&result.best.labels) {
            ids[i] = label;
        }
        reports.insert(group.to_string(), result);
    }
    let verdicts = features
        .iter()
        .zip(ids)
        .map(|(f, id)| OccupancyVerdict {
            room_id: f.room_id.clone(),
            slot_start: f.slot_start,
            occupied: None,
            probability: None,
            method: Method::Cluster,
            cluster_id: Some(id),
        })
        .collect();
    Ok((verdicts, reports))
}

pub fn detect_classifier(slots: &[SlotRecord], model: &ClassifierModel) -> Result<Vec<OccupancyVerdict>> {
    slots
        .iter()
        .map(|s| {
            let p = model.classify(&histogram_of(s)?.frequencies()?)?;
            Ok(OccupancyVerdict {
                room_id: s.room_id.clone(),
                slot_start: s.slot_start,
                occupied: Some(is_occupied(p)),
                probability: Some(p),
                method: Method::Classifier,
                cluster_id: None,
            })
        })
        .collect()
}

/// Label every cluster by majority vote of its members' classifier verdicts.
///
/// A strict majority decides; an exact tie goes to occupied only when the
/// cluster's mean probability exceeds 0.5.
pub fn fuse_cluster_votes(labels: &[usize], probabilities: &[f64]) -> Result<Vec<bool>> {
    if labels.len() != probabilities.len() {
        return Err(Error::Length {
            expected: labels.len(),
            actual: probabilities.len(),
        });
    }
    // (members, occupied votes, probability sum)
    let mut tally: BTreeMap<usize, (usize, usize, f64)> = BTreeMap::new();
    for (&l, &p) in labels.iter().zip(probabilities) {
        let t = tally.entry(l).or_insert((0, 0, 0.0));
        t.0 += 1;
        t.1 += usize::from(is_occupied(p));
        t.2 += p;
    }
    let decision: BTreeMap<usize, bool> = tally
        .into_iter()
        .map(|(l, (n, occ, sum))| {
            let verdict = if 2 * occ > n {
                true
            } else if 2 * (n - occ) > n {
                false
            } else {
                sum / n as f64 > 0.5
            };
            (l, verdict)
        })
        .collect();
    Ok(labels.iter().map(|l| decision[l]).collect())
}

/// Cluster the slots, then label each cluster by the classifier majority.
/// `features` must be aligned with `slots`.
pub fn detect_semi_supervised(
    slots: &[SlotRecord],
    features: &[FeatureVector],
    model: &ClassifierModel,
    search: &ClusterSearch,
) -> Result<(Vec<OccupancyVerdict>, ClusterReports)> {
    if slots.len() != features.len() {
        return Err(Error::Length {
            expected: slots.len(),
            actual: features.len(),
        });
    }
    if let Some((s, f)) = slots
        .iter()
        .zip(features)
        .find(|(s, f)| s.room_id != f.room_id || s.slot_start != f.slot_start)
    {
        return Err(Error::KeyMismatch(format!(
            "feature for {} {} is not aligned with slot {} {}",
            f.room_id, f.slot_start, s.room_id, s.slot_start
        )));
    }
    let (clusters, reports) = detect_cluster(features, search)?;
    let probs = detect_classifier(slots, model)?;

    // Cluster ids are local to their group, so key each cluster by both.
    let mut global: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    let labels: Vec<usize> = clusters
        .iter()
        .map(|v| {
            let key = (group_key(&v.room_id, search.pooled), v.cluster_id.unwrap_or(0));
            let next = global.len();
            *global.entry(key).or_insert(next)
        })
        .collect();
    let p: Vec<f64> = probs.iter().map(|v| v.probability.unwrap_or(0.0)).collect();
    let fused = fuse_cluster_votes(&labels, &p)?;
    let verdicts = clusters
        .into_iter()
        .zip(p)
        .zip(fused)
        .map(|((c, p), occupied)| OccupancyVerdict {
            occupied: Some(occupied),
            probability: Some(p),
            method: Method::SemiSupervised,
            ..c
        })
        .collect();
    Ok((verdicts, reports))
}

/// Binary detection metrics against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: Method,
    pub total: usize,
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub accuracy: f64,
    /// Zero when nothing was predicted occupied.
    pub precision: f64,
    /// Zero when nothing was truly occupied.
    pub recall: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Score labeled verdicts of one method. Verdict and truth key sets must match.
pub fn evaluate(verdicts: &[OccupancyVerdict], truth: &[GroundTruth]) -> Result<EvaluationReport> {
    let method = verdicts
        .first()
        .ok_or_else(|| Error::InsufficientData("no verdicts to evaluate".into()))?
        .method;
    if verdicts.iter().any(|v| v.method != method) {
        return Err(Error::InvalidConfig(
            "evaluate expects verdicts from a single method".into(),
        ));
    }
    let mut expected: HashMap<SlotKey, bool> = HashMap::with_capacity(truth.len());
    for t in truth {
        if expected.insert((t.room_id.clone(), t.slot_start), t.occupied).is_some() {
            return Err(Error::KeyMismatch(format!(
                "duplicate truth row {} {}",
                t.room_id, t.slot_start
            )));
        }
    }
    if expected.len() != verdicts.len() {
        return Err(Error::KeyMismatch(format!(
            "{} verdicts against {} truth rows",
            verdicts.len(),
            expected.len()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    let mut seen: BTreeSet<SlotKey> = BTreeSet::new();
    for v in verdicts {
        let key = v.key();
        let actual = *expected
            .get(&key)
            .ok_or_else(|| Error::KeyMismatch(format!("no truth for {} {}", v.room_id, v.slot_start)))?;
        if !seen.insert(key) {
            return Err(Error::KeyMismatch(format!(
                "duplicate verdict {} {}",
                v.room_id, v.slot_start
            )));
        }
        let predicted = v
            .occupied
            .ok_or_else(|| Error::InvalidConfig(format!("{} verdicts carry no occupancy label", v.method)))?;
        match (predicted, actual) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = verdicts.len();
    Ok(EvaluationReport {
        method,
        total,
        true_positive: tp,
        true_negative: tn,
        false_positive: fp,
        false_negative: fn_,
        accuracy: (tp + tn) as f64 / total as f64,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    })
}

/// Per-room threshold halfway between the mean accumulated noise of truly
/// occupied and truly unoccupied slots.
pub fn midpoint_thresholds(slots: &[SlotRecord], truth: &[GroundTruth]) -> Result<Vec<RoomConfig>> {
    let labels: HashMap<SlotKey, bool> = truth
        .iter()
        .map(|t| ((t.room_id.clone(), t.slot_start), t.occupied))
        .collect();
    // room -> [(sum, n) unoccupied, (sum, n) occupied]
    let mut acc: BTreeMap<&str, [(f64, usize); 2]> = BTreeMap::new();
    for s in slots {
        let (Some(sum), Some(&occ)) = (s.noise_sum, labels.get(&s.key())) else {
            continue;
        };
        let e = &mut acc.entry(&s.room_id).or_insert([(0.0, 0); 2])[usize::from(occ)];
        e.0 += sum;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(room, [un, occ])| {
            if un.1 == 0 || occ.1 == 0 {
                return Err(Error::SingleClass);
            }
            let mid = 0.5 * (un.0 / un.1 as f64 + occ.0 / occ.1 as f64);
            RoomConfig::new(room, mid)
        })
        .collect()
}

/// Classifier training settings plus the labeled-set cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingOptions {
    pub pipeline: PipelineConfig,
    pub dataset_size: usize,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            pipeline: PipelineConfig::default(),
            dataset_size: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub rooms: Vec<String>,
    /// Labeled slots used, after capping at `dataset_size`.
    pub dataset_size: usize,
    /// Half of the labeled set, from which occupied slots pretrain the autoencoder.
    pub autoencoder_pool: usize,
    pub autoencoder_samples: usize,
    pub classifier_samples: usize,
    pub occupied_fraction: f64,
    pub autoencoder: TrainingHistory,
    pub classifier: TrainingHistory,
    /// Agreement with the threshold labels on the training set.
    pub training_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub classifier: ClassifierModel,
    pub metrics: TrainingMetrics,
}

/// Label slots with their rooms' thresholds, pretrain the autoencoder on the
/// occupied half of a seeded split, then fit the classifier on every label.
pub fn train_occupancy_models(
    slots: &[SlotRecord],
    rooms: &[RoomConfig],
    options: &TrainingOptions,
) -> Result<TrainedModels> {
    if options.dataset_size < 2 {
        return Err(Error::InvalidConfig("dataset_size must be at least 2".into()));
    }
    let labels = detect_threshold(slots, rooms)?;
    let inputs: Vec<Vec<f64>> = slots
        .iter()
        .map(|s| histogram_of(s)?.frequencies())
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..slots.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(options.pipeline.train.seed));
    order.truncate(options.dataset_size);
    if order.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} labeled slots, need at least 4",
            order.len()
        )));
    }
    let x: Vec<Vec<f64>> = order.iter().map(|&i| inputs[i].clone()).collect();
    let y: Vec<bool> = order.iter().map(|&i| labels[i].occupied == Some(true)).collect();
    if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    let pool = x.len() / 2;
    let ae_inputs: Vec<Vec<f64>> = x[..pool]
        .iter()
        .zip(&y[..pool])
        .filter(|(_, &occ)| occ)
        .map(|(v, _)| v.clone())
        .collect();
    if ae_inputs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} occupied slots in the autoencoder half, need at least 2",
            ae_inputs.len()
        )));
    }
    let (classifier, ae_hist, clf_hist) = options.pipeline.fit(&ae_inputs, &x, &y)?;
    let correct = x
        .iter()
        .zip(&y)
        .map(|(v, &l)| Ok(usize::from(is_occupied(classifier.classify(v)?) == l)))
        .sum::<Result<usize>>()?;
    let rooms: BTreeSet<String> = order.iter().map(|&i| slots[i].room_id.clone()).collect();
    let metrics = TrainingMetrics {
        rooms: rooms.into_iter().collect(),
        dataset_size: x.len(),
        autoencoder_pool: pool,
        autoencoder_samples: ae_inputs.len(),
        classifier_samples: x.len(),
        occupied_fraction: ratio(y.iter().filter(|&&l| l).count(), y.len()),
        autoencoder: ae_hist,
        classifier: clf_hist,
        training_accuracy: ratio(correct, x.len()),
    };
    Ok(TrainedModels { classifier, metrics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomTransfer {
    pub semi_supervised: EvaluationReport,
    pub classifier: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub train_rooms: Vec<String>,
    pub test_rooms: Vec<String>,
    pub training: TrainingMetrics,
    pub per_room: BTreeMap<String, RoomTransfer>,
}

/// Train on threshold labels from `train_rooms` and evaluate detection on
/// `test_rooms` against ground truth.
pub fn cross_room_transfer(
    slots: &[SlotRecord],
    truth: &[GroundTruth],
    train_rooms: &[String],
    test_rooms: &[String],
    rooms: &[RoomConfig],
    options: &TrainingOptions,
    search: &ClusterSearch,
) -> Result<TransferReport> {
    let train: BTreeSet<&str> = train_rooms.iter().map(String::as_str).collect();
    let test: BTreeSet<&str> = test_rooms.iter().map(String::as_str).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidConfig(
            "train and test room sets must be non-empty".into(),
        ));
    }
    if let Some(r) = train.intersection(&test).next() {
        return Err(Error::InvalidConfig(format!(
            "room `{r}` is in both train and test sets"
        )));
    }
    let present: BTreeSet<&str> = slots.iter().map(|s| s.room_id.as_str()).collect();
    if let Some(r) = train.union(&test).find(|r| !present.contains(*r)) {
        return Err(Error::InvalidConfig(format!("room `{r}` has no slots")));
    }
    let train_slots: Vec<SlotRecord> = slots
        .iter()
        .filter(|s| train.contains(s.room_id.as_str()))
        .cloned()
        .collect();
    let trained = train_occupancy_models(&train_slots, rooms, options)?;

    let mut per_room = BTreeMap::new();
    for room in &test {
        let room_slots: Vec<SlotRecord> = slots.iter().filter(|s| s.room_id == *room).cloned().collect();
        let room_truth: Vec<GroundTruth> = truth.iter().filter(|t| t.room_id == *room).cloned().collect();
        let features = slot_features(&room_slots, false)?;
        let (semi, _) = detect_semi_supervised(&room_slots, &features, &trained.classifier, search)?;
        let clf = detect_classifier(&room_slots, &trained.classifier)?;
        per_room.insert(
            room.to_string(),
            RoomTransfer {
                semi_supervised: evaluate(&semi, &room_truth)?,
                classifier: evaluate(&clf, &room_truth)?,
            },
        );
    }
    Ok(TransferReport {
        train_rooms: train.iter().map(|s| s.to_string()).collect(),
        test_rooms: test.iter().map(|s| s.to_string()).collect(),
        training: trained.metrics,
        per_room,
    })
}

const VERDICT_COLUMNS: [&str; 6] = [
    "room_id",
    "slot_start",
    "method",
    "occupied",
    "probability",
    "cluster_id",
];

/// Write verdicts as CSV or JSONL. `comment` becomes a leading `# ...` line.
pub fn write_verdicts(
    path: &Path,
    format: SlotFormat,
    verdicts: &[OccupancyVerdict],
    comment: Option<&str>,
) -> Result<()> {
    let mut file = data::create(path)?;
    if let Some(c) = comment {
        writeln!(file, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    match format {
        SlotFormat::Csv => {
            let mut w = csv::Writer::from_writer(file);
            w.write_record(VERDICT_COLUMNS)?;
            for v in verdicts {
                w.write_record([
                    v.room_id.clone(),
                    data::format_timestamp(&v.slot_start),
                    v.method.to_string(),
                    v.occupied.map_or(String::new(), |o| o.to_string()),
                    v.probability.map_or(String::new(), |p| p.to_string()),
                    v.cluster_id.map_or(String::new(), |c| c.to_string()),
                ])?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        SlotFormat::Jsonl => {
            let mut w = std::io::BufWriter::new(file);
            for v in verdicts {
                serde_json::to_writer(&mut w, v)?;
                writeln!(w).map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

/// Read a verdict file written by [`write_verdicts`], by extension.
pub fn read_verdicts(path: &Path) -> Result<Vec<OccupancyVerdict>> {
    match SlotFormat::from_path(path) {
        SlotFormat::Jsonl => {
            let reader = BufReader::new(data::open(path)?);
            let mut out = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                out.push(serde_json::from_str(t).map_err(|e| Error::Row {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    message: e.to_string(),
                })?);
            }
            Ok(out)
        }
        SlotFormat::Csv => {
            let mut reader = data::csv_reader(path)?;
            let headers = reader.headers()?.clone();
            let idx: Vec<usize> = VERDICT_COLUMNS
                .iter()
                .map(|c| data::column_index(&headers, path, c))
                .collect::<Result<_>>()?;
            let mut out = Vec::new();
            for row in reader.records() {
                let row = row?;
                let line = row.position().map(|p| p.line()).unwrap_or(0);
                let row_err = |message: String| Error::Row {
                    path: path.to_path_buf(),
                    line,
                    message,
                };
                let get = |i: usize| row.get(idx[i]).unwrap_or("");
                let occupied = match get(3) {
                    "" => None,
                    "true" => Some(true),
                    "false" => Some(false),
                    other => return Err(row_err(format!("`{other}` is not a boolean"))),
                };
                let probability = match get(4) {
                    "" => None,
                    p => Some(data::number("probability", p).map_err(row_err)?),
                };
                let cluster_id = match get(5) {
                    "" => None,
                    c => Some(c.parse().map_err(|_| row_err(format!("`{c}` is not a cluster id")))?),
                };
                out.push(OccupancyVerdict {
                    room_id: get(0).to_string(),
                    slot_start: data::timestamp(get(1)).map_err(row_err)?,
                    method: get(2).parse().map_err(|e: Error| row_err(e.to_string()))?,
                    occupied,
                    probability,
                    cluster_id,
                });
            }
            Ok(out)
        }
    }
}
