//! Slot-level data model, histogram binning and raw-sample aggregation.

mod filter;
mod ingest;
mod synth;

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, DurationRound, Utc};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use filter::{filter_analysis_window, parse_utc_offset, FilterOptions};
pub(crate) use ingest::{column_index, create, csv_reader, format_timestamp, number, open, timestamp};
pub use ingest::{
    ingest_slots, read_raw_samples, read_slots, read_truth, write_slots, write_truth, GroundTruth, IngestOutcome,
    RawSample, RowError, SlotFormat,
};
pub use synth::{generate_synthetic, GeneratorSpec, ScheduleEntry, SynthRoom, SyntheticData};

/// Number of histogram bins.
pub const NUM_BINS: usize = 8;

/// Inclusive lower edge of each bin. Bin `i` covers `[EDGES[i], EDGES[i + 1])`,
/// the last bin is unbounded above.
pub const BIN_LOWER_EDGES: [f64; NUM_BINS] = [0.0, 6.0, 10.0, 15.0, 30.0, 50.0, 75.0, 100.0];

pub const DEFAULT_SAMPLE_PERIOD_MS: u32 = 100;

pub const SLOT_MINUTES: i64 = 5;

/// Fraction of the expected samples a slot must contain to be kept.
pub const MIN_SLOT_COVERAGE: f64 = 0.5;

pub fn slot_length() -> Duration {
    Duration::minutes(SLOT_MINUTES)
}

/// Map a sound reading to its 1-based bin index.
pub fn bin_sample(value: f64) -> Result<usize> {
    if !(value >= 0.0) {
        return Err(Error::Domain(format!(
            "sound reading must be non-negative, got {value}"
        )));
    }
    let idx = BIN_LOWER_EDGES
        .iter()
        .rposition(|&lo| value >= lo)
        .expect("value >= 0 always reaches the first edge");
    Ok(idx + 1)
}

/// Per-slot count of sound samples in each magnitude bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseHistogram {
    pub room_id: String,
    pub slot_start: DateTime<Utc>,
    pub counts: [u64; NUM_BINS],
    pub total: u64,
}

impl NoiseHistogram {
    pub fn new(room_id: impl Into<String>, slot_start: DateTime<Utc>, counts: [u64; NUM_BINS]) -> Self {
        NoiseHistogram {
            room_id: room_id.into(),
            slot_start,
            counts,
            total: counts.iter().sum(),
        }
    }

    /// Counts divided by the total. Fails on an empty histogram.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        if self.total == 0 {
            return Err(Error::NoSamples(self.slot_start.to_rfc3339()));
        }
        let total = self.total as f64;
        Ok(self.counts.iter().map(|&c| c as f64 / total).collect())
    }
}

/// A regularly sampled run of sound readings for one room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSampleSeries {
    pub room_id: String,
    pub start_time: DateTime<Utc>,
    pub sample_period_ms: u32,
    pub values: Vec<f64>,
}

impl RawSampleSeries {
    pub fn new(
        room_id: impl Into<String>,
        start_time: DateTime<Utc>,
        sample_period_ms: u32,
        values: Vec<f64>,
    ) -> Result<Self> {
        if sample_period_ms == 0 {
            return Err(Error::Domain("sample period must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::Domain("sample series is empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Domain(format!("sound reading must be non-negative, got {bad}")));
        }
        Ok(RawSampleSeries {
            room_id: room_id.into(),
            start_time,
            sample_period_ms,
            values,
        })
    }

    pub fn sample_time(&self, index: usize) -> DateTime<Utc> {
        self.start_time + Duration::milliseconds(index as i64 * self.sample_period_ms as i64)
    }

    /// Samples whose timestamp falls in `[slot_start, slot_start + slot_len)`.
    pub fn window(&self, slot_start: DateTime<Utc>, slot_len: Duration) -> &[f64] {
        let period = self.sample_period_ms as i64;
        let offset = (slot_start - self.start_time).num_milliseconds();
        let end = offset + slot_len.num_milliseconds();
        let n = self.values.len() as i64;
        let first = ceil_div(offset, period).clamp(0, n);
        let last = ceil_div(end, period).clamp(0, n);
        if last <= first {
            &[]
        } else {
            &self.values[first as usize..last as usize]
        }
    }
}

fn ceil_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b) + i64::from(a.rem_euclid(b) != 0)
}

fn histogram_of(values: &[f64]) -> Result<[u64; NUM_BINS]> {
    let mut counts = [0u64; NUM_BINS];
    for &v in values {
        counts[bin_sample(v)? - 1] += 1;
    }
    Ok(counts)
}

pub fn build_histogram(
    series: &RawSampleSeries,
    slot_start: DateTime<Utc>,
    slot_len: Duration,
) -> Result<NoiseHistogram> {
    let window = series.window(slot_start, slot_len);
    if window.is_empty() {
        return Err(Error::NoSamples(slot_start.to_rfc3339()));
    }
    Ok(NoiseHistogram::new(
        series.room_id.clone(),
        slot_start,
        histogram_of(window)?,
    ))
}

/// Sum of the readings in the slot window.
pub fn accumulate_window(series: &RawSampleSeries, slot_start: DateTime<Utc>, slot_len: Duration) -> Result<f64> {
    let window = series.window(slot_start, slot_len);
    if window.is_empty() {
        return Err(Error::NoSamples(slot_start.to_rfc3339()));
    }
    Ok(window.iter().sum())
}

/// Histogram and accumulated noise for one slot built from raw samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotNoise {
    pub histogram: NoiseHistogram,
    pub noise_sum: f64,
}

/// Result of bucketing raw samples into slots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotAggregation {
    pub slots: Vec<SlotNoise>,
    /// Slots that had some samples but fewer than [`MIN_SLOT_COVERAGE`] of the
    /// expected count.
    pub missing: Vec<(String, DateTime<Utc>)>,
}

/// Bucket timestamped samples into grid-aligned slots of `slot_len`.
///
/// A slot is emitted when it holds at least half of `slot_len / sample_period`
/// samples; sparser slots are reported as missing.
pub fn aggregate_samples(samples: &[RawSample], slot_len: Duration, sample_period_ms: u32) -> Result<SlotAggregation> {
    if sample_period_ms == 0 {
        return Err(Error::Domain("sample period must be positive".into()));
    }
    let expected = slot_len.num_milliseconds() as f64 / sample_period_ms as f64;
    let mut buckets: BTreeMap<(String, DateTime<Utc>), (Vec<u64>, f64)> = BTreeMap::new();
    for s in samples {
        let bin = bin_sample(s.value)?;
        let start = s
            .timestamp
            .duration_trunc(slot_len)
            .map_err(|e| Error::Domain(format!("cannot align {}: {e}", s.timestamp)))?;
        let entry = buckets
            .entry((s.room_id.clone(), start))
            .or_insert_with(|| (vec![0; NUM_BINS], 0.0));
        entry.0[bin - 1] += 1;
        entry.1 += s.value;
    }
    let mut out = SlotAggregation::default();
    for ((room, start), (counts, sum)) in buckets {
        let n: u64 = counts.iter().sum();
        if (n as f64) < MIN_SLOT_COVERAGE * expected {
            out.missing.push((room, start));
            continue;
        }
        let mut arr = [0u64; NUM_BINS];
        arr.copy_from_slice(&counts);
        out.slots.push(SlotNoise {
            histogram: NoiseHistogram::new(room, start, arr),
            noise_sum: sum,
        });
    }
    Ok(out)
}

/// One five-minute slot joining sound, HVAC and room identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub room_id: String,
    pub slot_start: DateTime<Utc>,
    pub histogram: Option<NoiseHistogram>,
    /// Sum of raw readings in the slot, used by the threshold detector.
    pub noise_sum: Option<f64>,
    pub room_temp: f64,
    pub supply_temp: f64,
    /// Air volume supplied during the slot, m³.
    pub air_volume: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aux: BTreeMap<String, f64>,
}

pub const TEMP_SANITY_BAND: (f64, f64) = (-20.0, 60.0);

impl SlotRecord {
    pub fn key(&self) -> crate::SlotKey {
        (self.room_id.clone(), self.slot_start)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = TEMP_SANITY_BAND;
        for (name, t) in [("room_temp", self.room_temp), ("supply_temp", self.supply_temp)] {
            if !(t >= lo && t <= hi) {
                return Err(Error::Domain(format!("{name} {t} outside sanity band [{lo}, {hi}] °C")));
            }
        }
        if !(self.air_volume >= 0.0) || !self.air_volume.is_finite() {
            return Err(Error::Domain(format!(
                "air_volume must be finite and non-negative, got {}",
                self.air_volume
            )));
        }
        if let Some(sum) = self.noise_sum {
            if !(sum >= 0.0) {
                return Err(Error::Domain(format!("noise_sum must be non-negative, got {sum}")));
            }
        }
        if let Some(h) = &self.histogram {
            if h.room_id != self.room_id || h.slot_start != self.slot_start {
                return Err(Error::Domain("histogram key differs from slot key".into()));
            }
            if h.counts.iter().sum::<u64>() != h.total {
                return Err(Error::Domain("histogram counts do not sum to total".into()));
            }
        }
        Ok(())
    }
}

/// Per-room detection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub room_id: String,
    /// Accumulated-noise threshold; a slot is occupied when its sum exceeds it.
    pub threshold: f64,
    #[serde(default = "default_setpoint")]
    pub setpoint: f64,
}

fn default_setpoint() -> f64 {
    20.0
}

impl RoomConfig {
    pub fn new(room_id: impl Into<String>, threshold: f64) -> Result<Self> {
        let cfg = RoomConfig {
            room_id: room_id.into(),
            threshold,
            setpoint: default_setpoint(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "room {}: threshold must be positive, got {}",
                self.room_id, self.threshold
            )));
        }
        Ok(())
    }
}

/// Sort by (room_id, slot_start), the canonical record order.
pub fn sort_records(records: &mut [SlotRecord]) {
    records.sort_by(|a, b| (&a.room_id, a.slot_start).cmp(&(&b.room_id, b.slot_start)));
}
