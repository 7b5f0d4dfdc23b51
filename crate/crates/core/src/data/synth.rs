//! Seeded synthetic slot generator.
//!
//! Each room draws sound readings from a normal distribution truncated at
//! zero, with separate parameters for occupied and unoccupied slots. The
//! daily occupancy pattern comes from a change-point schedule.

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveTime, TimeZone, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{bin_sample, GroundTruth, NoiseHistogram, SlotRecord, DEFAULT_SAMPLE_PERIOD_MS, NUM_BINS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRoom {
    pub room_id: String,
    /// Multiplier on every noise mean and sigma for this room.
    #[serde(default = "one")]
    pub noise_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// From `slot_index` (within the day) onwards the room is `occupied`, until
/// the next entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub slot_index: usize,
    pub occupied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub seed: u64,
    /// First calendar day; weekends are skipped.
    pub start_date: NaiveDate,
    pub rooms: Vec<SynthRoom>,
    pub occupied_noise_mean: f64,
    pub occupied_noise_sigma: f64,
    pub unoccupied_noise_mean: f64,
    pub unoccupied_noise_sigma: f64,
    /// Relative spread of the per-slot activity level around the class mean.
    pub activity_jitter: f64,
    pub occupied_temp_offset: f64,
    pub base_room_temp: f64,
    pub room_temp_sigma: f64,
    pub supply_temp: f64,
    pub supply_temp_sigma: f64,
    /// Air volume per slot, m³.
    pub air_volume: f64,
    pub air_volume_sigma: f64,
    pub occupancy_schedule: Vec<ScheduleEntry>,
    pub sample_period_ms: u32,
    pub slot_minutes: i64,
    pub day_start: NaiveTime,
    pub day_end: NaiveTime,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        let entry = |slot_index, occupied| ScheduleEntry { slot_index, occupied };
        GeneratorSpec {
            seed: 0,
            start_date: NaiveDate::from_ymd_opt(2017, 11, 1).unwrap(),
            rooms: vec![SynthRoom {
                room_id: "P01".into(),
                noise_scale: 1.0,
            }],
            occupied_noise_mean: 3.0,
            occupied_noise_sigma: 5.0,
            unoccupied_noise_mean: 2.0,
            unoccupied_noise_sigma: 1.0,
            activity_jitter: 0.1,
            occupied_temp_offset: 0.35,
            base_room_temp: 25.02,
            room_temp_sigma: 0.2,
            supply_temp: 15.0,
            supply_temp_sigma: 0.3,
            air_volume: 150.0,
            air_volume_sigma: 10.0,
            occupancy_schedule: vec![
                entry(0, false),
                entry(12, true),
                entry(30, false),
                entry(54, true),
                entry(78, false),
                entry(96, true),
                entry(114, false),
            ],
            sample_period_ms: DEFAULT_SAMPLE_PERIOD_MS,
            slot_minutes: super::SLOT_MINUTES,
            day_start: NaiveTime::from_hms_opt(8, 0, 0).unwrap(),
            day_end: NaiveTime::from_hms_opt(19, 0, 0).unwrap(),
        }
    }
}

impl GeneratorSpec {
    pub fn slots_per_day(&self) -> usize {
        ((self.day_end - self.day_start).num_minutes() / self.slot_minutes).max(0) as usize
    }

    pub fn samples_per_slot(&self) -> usize {
        (self.slot_minutes * 60_000 / self.sample_period_ms as i64) as usize
    }

    /// Hard errors for unusable specs; soft issues are returned as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let sigmas = [
            ("occupied_noise_sigma", self.occupied_noise_sigma),
            ("unoccupied_noise_sigma", self.unoccupied_noise_sigma),
            ("activity_jitter", self.activity_jitter),
            ("room_temp_sigma", self.room_temp_sigma),
            ("supply_temp_sigma", self.supply_temp_sigma),
            ("air_volume_sigma", self.air_volume_sigma),
        ];
        for (name, s) in sigmas {
            if !(s >= 0.0) || !s.is_finite() {
                return bad(format!("{name} must be finite and non-negative, got {s}"));
            }
        }
        if self.rooms.is_empty() {
            return bad("at least one room is required".into());
        }
        for r in &self.rooms {
            if !(r.noise_scale > 0.0) {
                return bad(format!("room {}: noise_scale must be positive", r.room_id));
            }
        }
        if self.sample_period_ms == 0 || self.slot_minutes <= 0 {
            return bad("sample period and slot length must be positive".into());
        }
        if self.slots_per_day() == 0 {
            return bad("day window holds no slots".into());
        }
        if self
            .occupancy_schedule
            .windows(2)
            .any(|w| w[0].slot_index >= w[1].slot_index)
        {
            return bad("schedule indices must be strictly increasing".into());
        }
        let mut warnings = Vec::new();
        if self.occupied_noise_mean < self.unoccupied_noise_mean {
            warnings.push(format!(
                "occupied noise mean {} is below unoccupied mean {}",
                self.occupied_noise_mean, self.unoccupied_noise_mean
            ));
        }
        Ok(warnings)
    }

    fn occupied_at(&self, slot_index: usize) -> bool {
        self.occupancy_schedule
            .iter()
            .take_while(|e| e.slot_index <= slot_index)
            .last()
            .is_some_and(|e| e.occupied)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub records: Vec<SlotRecord>,
    pub truth: Vec<GroundTruth>,
    pub warnings: Vec<String>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Normal draw conditioned on being non-negative (rejection sampling).
fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mean.max(0.0);
    }
    for _ in 0..1000 {
        let x = mean + sigma * normal(rng);
        if x >= 0.0 {
            return x;
        }
    }
    0.0
}

/// Generate `n_days` weekdays of office-hours slots for every room.
///
/// Output is sorted by (room_id, slot_start) and is a pure function of `spec`
/// and `n_days`.
pub fn generate_synthetic(spec: &GeneratorSpec, n_days: usize) -> Result<SyntheticData> {
    let warnings = spec.validate()?;
    let days: Vec<NaiveDate> = spec
        .start_date
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n_days)
        .collect();
    let per_day = spec.slots_per_day();
    let samples = spec.samples_per_slot();

    let mut rooms: Vec<(usize, &SynthRoom)> = spec.rooms.iter().enumerate().collect();
    rooms.sort_by(|a, b| a.1.room_id.cmp(&b.1.room_id));

    let mut records = Vec::with_capacity(rooms.len() * days.len() * per_day);
    let mut truth = Vec::with_capacity(records.capacity());
    for (stream, room) in rooms {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream as u64);
        for day in &days {
            let day_start: DateTime<Utc> = Utc.from_utc_datetime(&day.and_time(spec.day_start));
            for i in 0..per_day {
                let slot_start = day_start + Duration::minutes(spec.slot_minutes * i as i64);
                let occupied = spec.occupied_at(i);
                let (mean, sigma) = if occupied {
                    (spec.occupied_noise_mean, spec.occupied_noise_sigma)
                } else {
                    (spec.unoccupied_noise_mean, spec.unoccupied_noise_sigma)
                };
                let level = (1.0 + spec.activity_jitter * normal(&mut rng)).max(0.0);
                let mean = mean * room.noise_scale * level;
                let sigma = sigma * room.noise_scale;

                let mut counts = [0u64; NUM_BINS];
                let mut noise_sum = 0.0;
                for _ in 0..samples {
                    let v = truncated_normal(&mut rng, mean, sigma);
                    counts[bin_sample(v)? - 1] += 1;
                    noise_sum += v;
                }

                let offset = if occupied { spec.occupied_temp_offset } else { 0.0 };
                let room_temp = spec.base_room_temp + offset + spec.room_temp_sigma * normal(&mut rng);
                let supply_temp = spec.supply_temp + spec.supply_temp_sigma * normal(&mut rng);
                let air_volume = (spec.air_volume + spec.air_volume_sigma * normal(&mut rng)).max(0.0);

                records.push(SlotRecord {
                    room_id: room.room_id.clone(),
                    slot_start,
                    histogram: Some(NoiseHistogram::new(room.room_id.clone(), slot_start, counts)),
                    noise_sum: Some(noise_sum),
                    room_temp,
                    supply_temp,
                    air_volume,
                    aux: Default::default(),
                });
                truth.push(GroundTruth {
                    room_id: room.room_id.clone(),
                    slot_start,
                    occupied,
                });
            }
        }
    }
    Ok(SyntheticData {
        records,
        truth,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> GeneratorSpec {
        GeneratorSpec {
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn default_schedule_covers_day() {
        let spec = small_spec();
        assert_eq!(spec.slots_per_day(), 132);
        assert_eq!(spec.samples_per_slot(), 3000);
        assert!(!spec.occupied_at(0));
        assert!(spec.occupied_at(12));
        assert!(!spec.occupied_at(131));
    }

    #[test]
    fn same_seed_same_output() {
        let a = generate_synthetic(&small_spec(), 2).unwrap();
        let b = generate_synthetic(&small_spec(), 2).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(
            &GeneratorSpec {
                seed: 8,
                ..small_spec()
            },
            2,
        )
        .unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn slot_layout_and_conservation() {
        let data = generate_synthetic(&small_spec(), 3).unwrap();
        assert_eq!(data.records.len(), 3 * 132);
        assert_eq!(data.truth.len(), data.records.len());
        for r in &data.records {
            let h = r.histogram.as_ref().unwrap();
            assert_eq!(h.total, 3000);
            r.validate().unwrap();
        }
        // 2017-11-01 is a Wednesday; three weekdays end on Friday the 3rd.
        let last = data.records.last().unwrap().slot_start;
        assert_eq!(last.date_naive(), NaiveDate::from_ymd_opt(2017, 11, 3).unwrap());
    }

    #[test]
    fn temperature_offset_is_recovered() {
        let data = generate_synthetic(&small_spec(), 21).unwrap();
        let (mut occ, mut un) = (Vec::new(), Vec::new());
        for (r, t) in data.records.iter().zip(&data.truth) {
            if t.occupied {
                occ.push(r.room_temp)
            } else {
                un.push(r.room_temp)
            }
        }
        assert!(occ.len() + un.len() >= 1000);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let gap = mean(&occ) - mean(&un);
        assert!((gap - 0.35).abs() <= 0.02, "gap {gap}");
    }

    #[test]
    fn all_unoccupied_schedule() {
        let spec = GeneratorSpec {
            occupancy_schedule: vec![ScheduleEntry {
                slot_index: 0,
                occupied: false,
            }],
            ..small_spec()
        };
        let data = generate_synthetic(&spec, 1).unwrap();
        assert!(data.truth.iter().all(|t| !t.occupied));
        let empty = GeneratorSpec {
            occupancy_schedule: vec![],
            ..small_spec()
        };
        assert!(generate_synthetic(&empty, 1).unwrap().truth.iter().all(|t| !t.occupied));
    }

    #[test]
    fn degenerate_means_warn() {
        let spec = GeneratorSpec {
            occupied_noise_mean: 1.0,
            unoccupied_noise_mean: 2.0,
            ..small_spec()
        };
        let data = generate_synthetic(&spec, 1).unwrap();
        assert_eq!(data.warnings.len(), 1);
    }

    #[test]
    fn invalid_specs_rejected() {
        let neg = GeneratorSpec {
            occupied_noise_sigma: -1.0,
            ..small_spec()
        };
        assert!(generate_synthetic(&neg, 1).is_err());
        let unsorted = GeneratorSpec {
            occupancy_schedule: vec![
                ScheduleEntry {
                    slot_index: 5,
                    occupied: true,
                },
                ScheduleEntry {
                    slot_index: 5,
                    occupied: false,
                },
            ],
            ..small_spec()
        };
        assert!(generate_synthetic(&unsorted, 1).is_err());
        let no_rooms = GeneratorSpec {
            rooms: vec![],
            ..small_spec()
        };
        assert!(generate_synthetic(&no_rooms, 1).is_err());
    }

    #[test]
    fn occupied_slots_are_louder() {
        let data = generate_synthetic(&small_spec(), 1).unwrap();
        let mean_sum = |occ: bool| {
            let v: Vec<f64> = data
                .records
                .iter()
                .zip(&data.truth)
                .filter(|(_, t)| t.occupied == occ)
                .map(|(r, _)| r.noise_sum.unwrap())
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean_sum(true) > 1.5 * mean_sum(false));
    }
}
