//! Slot, raw-sample and ground-truth file formats.
//!
//! Slot CSV columns: `room_id, slot_start, bin1..bin8, room_temp_c,
//! supply_temp_c, air_volume_m3`, plus an optional `noise_sum`. Any other
//! numeric column is carried through in [`SlotRecord::aux`]. Lines starting
//! with `#` are comments. JSONL files hold one object per line with the same
//! field names.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{sort_records, NoiseHistogram, SlotRecord, NUM_BINS};
use crate::{Error, Result};

const BIN_COLUMNS: [&str; NUM_BINS] = ["bin1", "bin2", "bin3", "bin4", "bin5", "bin6", "bin7", "bin8"];
const REQUIRED_SCALARS: [&str; 5] = ["room_id", "slot_start", "room_temp_c", "supply_temp_c", "air_volume_m3"];
const NOISE_SUM: &str = "noise_sum";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotFormat {
    Csv,
    Jsonl,
}

impl SlotFormat {
    /// `.jsonl`/`.ndjson` map to JSONL, everything else to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => SlotFormat::Jsonl,
            _ => SlotFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub records: Vec<SlotRecord>,
    /// Rows skipped in lenient mode.
    pub rejected: Vec<RowError>,
    pub warnings: Vec<String>,
}

pub(crate) fn timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("unparseable timestamp `{s}`: {e}"))
}

pub(crate) fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub(crate) fn number(column: &str, s: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("column `{column}`: `{s}` is not a number"))
}

fn build_record(
    room_id: String,
    slot_start: &str,
    bins: [Option<u64>; NUM_BINS],
    room_temp: f64,
    supply_temp: f64,
    air_volume: f64,
    noise_sum: Option<f64>,
    aux: BTreeMap<String, f64>,
) -> std::result::Result<SlotRecord, String> {
    if room_id.trim().is_empty() {
        return Err("empty room_id".into());
    }
    let slot_start = timestamp(slot_start)?;
    let present = bins.iter().filter(|b| b.is_some()).count();
    let histogram = match present {
        0 => None,
        NUM_BINS => {
            let counts = bins.map(|b| b.unwrap_or(0));
            Some(NoiseHistogram::new(room_id.clone(), slot_start, counts))
        }
        _ => return Err("histogram bins must be all present or all empty".into()),
    };
    let record = SlotRecord {
        room_id,
        slot_start,
        histogram,
        noise_sum,
        room_temp,
        supply_temp,
        air_volume,
        aux,
    };
    record.validate().map_err(|e| e.to_string())?;
    Ok(record)
}

/// Read a slot file, sorting the result by (room_id, slot_start).
///
/// In strict mode the first malformed row aborts with an error naming its
/// line; otherwise malformed rows are collected in `rejected`.
pub fn ingest_slots(path: &Path, format: SlotFormat, strict: bool) -> Result<IngestOutcome> {
    let mut outcome = match format {
        SlotFormat::Csv => ingest_csv(path, strict)?,
        SlotFormat::Jsonl => ingest_jsonl(path, strict)?,
    };
    if outcome.records.is_empty() && outcome.rejected.is_empty() {
        outcome
            .warnings
            .push(format!("{}: no slot records found", path.display()));
    }
    if !outcome.rejected.is_empty() {
        outcome.warnings.push(format!(
            "{}: skipped {} malformed row(s)",
            path.display(),
            outcome.rejected.len()
        ));
    }
    sort_records(&mut outcome.records);
    Ok(outcome)
}

/// Strict read returning only the records.
pub fn read_slots(path: &Path) -> Result<Vec<SlotRecord>> {
    Ok(ingest_slots(path, SlotFormat::from_path(path), true)?.records)
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

pub(crate) fn column_index(headers: &csv::StringRecord, path: &Path, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
        path: path.to_path_buf(),
        column: name.to_string(),
    })
}

fn ingest_csv(path: &Path, strict: bool) -> Result<IngestOutcome> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    let mut outcome = IngestOutcome::default();
    if headers.is_empty() {
        return Ok(outcome);
    }
    let scalar_idx: Vec<usize> = REQUIRED_SCALARS
        .iter()
        .map(|c| column_index(&headers, path, c))
        .collect::<Result<_>>()?;
    let bin_idx: Vec<usize> = BIN_COLUMNS
        .iter()
        .map(|c| column_index(&headers, path, c))
        .collect::<Result<_>>()?;
    let sum_idx = headers.iter().position(|h| h == NOISE_SUM);
    let known: BTreeSet<usize> = scalar_idx.iter().chain(&bin_idx).copied().chain(sum_idx).collect();
    let aux_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !known.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => match e.kind() {
                csv::ErrorKind::UnequalLengths { pos, .. } => {
                    let line = pos.as_ref().map_or(0, |p| p.line());
                    push_row(&mut outcome, path, line, Err(e.to_string()), strict)?;
                    continue;
                }
                _ => return Err(e.into()),
            },
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let parsed = (|| -> std::result::Result<SlotRecord, String> {
            let get = |i: usize| row.get(i).unwrap_or("");
            let mut bins = [None; NUM_BINS];
            for (slot, (&i, name)) in bins.iter_mut().zip(bin_idx.iter().zip(BIN_COLUMNS)) {
                let cell = get(i);
                if !cell.is_empty() {
                    *slot = Some(
                        cell.parse::<u64>()
                            .map_err(|_| format!("column `{name}`: `{cell}` is not a count"))?,
                    );
                }
            }
            let noise_sum = match sum_idx.map(get) {
                Some(s) if !s.is_empty() => Some(number(NOISE_SUM, s)?),
                _ => None,
            };
            let mut aux = BTreeMap::new();
            for (i, name) in &aux_cols {
                let cell = get(*i);
                if !cell.is_empty() {
                    aux.insert(name.clone(), number(name, cell)?);
                }
            }
            build_record(
                get(scalar_idx[0]).to_string(),
                get(scalar_idx[1]),
                bins,
                number("room_temp_c", get(scalar_idx[2]))?,
                number("supply_temp_c", get(scalar_idx[3]))?,
                number("air_volume_m3", get(scalar_idx[4]))?,
                noise_sum,
                aux,
            )
        })();
        push_row(&mut outcome, path, line, parsed, strict)?;
    }
    Ok(outcome)
}

fn push_row(
    outcome: &mut IngestOutcome,
    path: &Path,
    line: u64,
    parsed: std::result::Result<SlotRecord, String>,
    strict: bool,
) -> Result<()> {
    match parsed {
        Ok(r) => outcome.records.push(r),
        Err(message) if strict => {
            return Err(Error::Row {
                path: path.to_path_buf(),
                line,
                message,
            })
        }
        Err(message) => outcome.rejected.push(RowError { line, message }),
    }
    Ok(())
}

fn json_number(obj: &Map<String, Value>, key: &str) -> std::result::Result<Option<f64>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => Ok(n.as_f64()),
        Some(other) => Err(format!("field `{key}`: expected a number, got {other}")),
    }
}

fn ingest_jsonl(path: &Path, strict: bool) -> Result<IngestOutcome> {
    let reader = BufReader::new(open(path)?);
    let mut outcome = IngestOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let text = line.map_err(|e| Error::io(path, e))?;
        let text = text.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let parsed = (|| -> std::result::Result<SlotRecord, String> {
            let obj: Map<String, Value> = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
            let require = |k: &str| -> std::result::Result<f64, String> {
                json_number(&obj, k)?.ok_or_else(|| format!("missing required field `{k}`"))
            };
            let room_id = obj
                .get("room_id")
                .and_then(Value::as_str)
                .ok_or("missing required field `room_id`")?
                .to_string();
            let slot_start = obj
                .get("slot_start")
                .and_then(Value::as_str)
                .ok_or("missing required field `slot_start`")?;
            let mut bins = [None; NUM_BINS];
            for (slot, name) in bins.iter_mut().zip(BIN_COLUMNS) {
                *slot = match obj.get(name) {
                    None | Some(Value::Null) => None,
                    Some(v) => Some(
                        v.as_u64()
                            .ok_or_else(|| format!("field `{name}`: `{v}` is not a count"))?,
                    ),
                };
            }
            let mut aux = BTreeMap::new();
            for (k, v) in &obj {
                let known =
                    REQUIRED_SCALARS.contains(&k.as_str()) || BIN_COLUMNS.contains(&k.as_str()) || k == NOISE_SUM;
                if !known {
                    let x = v
                        .as_f64()
                        .ok_or_else(|| format!("field `{k}`: expected a number, got {v}"))?;
                    aux.insert(k.clone(), x);
                }
            }
            build_record(
                room_id,
                slot_start,
                bins,
                require("room_temp_c")?,
                require("supply_temp_c")?,
                require("air_volume_m3")?,
                json_number(&obj, NOISE_SUM)?,
                aux,
            )
        })();
        push_row(&mut outcome, path, line_no, parsed, strict)?;
    }
    Ok(outcome)
}

pub(crate) fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Write records in the given format. `comment`, when set, becomes a leading
/// `# ...` line.
pub fn write_slots(path: &Path, format: SlotFormat, records: &[SlotRecord], comment: Option<&str>) -> Result<()> {
    let mut file = create(path)?;
    if let Some(c) = comment {
        writeln!(file, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    match format {
        SlotFormat::Csv => write_slots_csv(file, path, records),
        SlotFormat::Jsonl => {
            let mut w = std::io::BufWriter::new(file);
            for r in records {
                let obj = slot_to_json(r);
                serde_json::to_writer(&mut w, &obj)?;
                writeln!(w).map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

fn slot_to_json(r: &SlotRecord) -> Map<String, Value> {
    let mut obj = Map::new();
    obj.insert("room_id".into(), r.room_id.clone().into());
    obj.insert("slot_start".into(), format_timestamp(&r.slot_start).into());
    for (i, name) in BIN_COLUMNS.iter().enumerate() {
        let v = r.histogram.as_ref().map_or(Value::Null, |h| h.counts[i].into());
        obj.insert((*name).into(), v);
    }
    obj.insert("room_temp_c".into(), r.room_temp.into());
    obj.insert("supply_temp_c".into(), r.supply_temp.into());
    obj.insert("air_volume_m3".into(), r.air_volume.into());
    if let Some(s) = r.noise_sum {
        obj.insert(NOISE_SUM.into(), s.into());
    }
    for (k, v) in &r.aux {
        obj.insert(k.clone(), (*v).into());
    }
    obj
}

fn write_slots_csv(file: File, path: &Path, records: &[SlotRecord]) -> Result<()> {
    let aux_cols: BTreeSet<&str> = records.iter().flat_map(|r| r.aux.keys().map(String::as_str)).collect();
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = vec!["room_id", "slot_start"];
    header.extend(BIN_COLUMNS);
    header.extend(["room_temp_c", "supply_temp_c", "air_volume_m3", NOISE_SUM]);
    header.extend(aux_cols.iter().copied());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.room_id.clone(), format_timestamp(&r.slot_start)];
        for i in 0..NUM_BINS {
            row.push(r.histogram.as_ref().map_or(String::new(), |h| h.counts[i].to_string()));
        }
        row.push(r.room_temp.to_string());
        row.push(r.supply_temp.to_string());
        row.push(r.air_volume.to_string());
        row.push(r.noise_sum.map_or(String::new(), |s| s.to_string()));
        for c in &aux_cols {
            row.push(r.aux.get(*c).map_or(String::new(), |v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One timestamped sound reading.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub room_id: String,
    pub timestamp: DateTime<Utc>,
    pub value: f64,
}

/// Read a raw-sample CSV with columns `room_id, timestamp, value`.
pub fn read_raw_samples(path: &Path) -> Result<Vec<RawSample>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    let idx: Vec<usize> = ["room_id", "timestamp", "value"]
        .iter()
        .map(|c| column_index(&headers, path, c))
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
        let get = |i: usize| row.get(i).unwrap_or("");
        let timestamp = timestamp(get(idx[1])).map_err(row_err)?;
        let value = number("value", get(idx[2])).map_err(row_err)?;
        if !(value >= 0.0) {
            return Err(row_err(format!("negative sound reading {value}")));
        }
        out.push(RawSample {
            room_id: get(idx[0]).to_string(),
            timestamp,
            value,
        });
    }
    Ok(out)
}

/// The recorded occupancy of one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub room_id: String,
    pub slot_start: DateTime<Utc>,
    pub occupied: bool,
}

pub fn write_truth(path: &Path, truth: &[GroundTruth], comment: Option<&str>) -> Result<()> {
    let mut file = create(path)?;
    if let Some(c) = comment {
        writeln!(file, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["room_id", "slot_start", "occupied"])?;
    for t in truth {
        w.write_record([
            t.room_id.as_str(),
            &format_timestamp(&t.slot_start),
            if t.occupied { "true" } else { "false" },
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    let idx: Vec<usize> = ["room_id", "slot_start", "occupied"]
        .iter()
        .map(|c| column_index(&headers, path, c))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| Error::Row {
            path: PathBuf::from(path),
            line,
            message,
        };
        let get = |i: usize| row.get(i).unwrap_or("");
        let occupied = match get(idx[2]) {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(row_err(format!("`{other}` is not a boolean"))),
        };
        out.push(GroundTruth {
            room_id: get(idx[0]).to_string(),
            slot_start: timestamp(get(idx[1])).map_err(row_err)?,
            occupied,
        });
    }
    Ok(out)
}
