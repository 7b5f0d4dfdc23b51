use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Duration, FixedOffset, NaiveDate, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};

use super::{SlotRecord, SLOT_MINUTES};

/// Office-hours window applied before energy attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterOptions {
    pub office_start: NaiveTime,
    /// Exclusive end of the window.
    pub office_end: NaiveTime,
    pub drop_weekends: bool,
    pub drop_incomplete_days: bool,
    /// Offset of local office time from UTC.
    #[serde(with = "offset_serde")]
    pub utc_offset: FixedOffset,
    pub slot_minutes: i64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            office_start: NaiveTime::from_hms_opt(8, 0, 0).unwrap(),
            office_end: NaiveTime::from_hms_opt(19, 0, 0).unwrap(),
            drop_weekends: true,
            drop_incomplete_days: true,
            utc_offset: FixedOffset::east_opt(0).unwrap(),
            slot_minutes: SLOT_MINUTES,
        }
    }
}

impl FilterOptions {
    /// Slots a complete day must contain (132 for 08:00-19:00 at 5 minutes).
    pub fn expected_slots_per_day(&self) -> usize {
        let span = self.office_end - self.office_start;
        (span.num_minutes() / self.slot_minutes).max(0) as usize
    }

    fn slot_index(&self, time: NaiveTime) -> Option<usize> {
        if time < self.office_start || time >= self.office_end {
            return None;
        }
        let offset = time - self.office_start;
        let slot = Duration::minutes(self.slot_minutes);
        let aligned = offset.num_seconds() % slot.num_seconds() == 0 && offset.subsec_nanos() == 0;
        aligned.then(|| (offset.num_seconds() / slot.num_seconds()) as usize)
    }
}

pub(crate) mod offset_serde {
    use chrono::FixedOffset;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(o: &FixedOffset, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&o.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FixedOffset, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }

    /// Accepts `UTC`, `Z`, or `±HH:MM`.
    pub fn parse(s: &str) -> Result<FixedOffset, String> {
        match s.trim() {
            "UTC" | "utc" | "Z" => Ok(FixedOffset::east_opt(0).unwrap()),
            other => other
                .parse::<FixedOffset>()
                .map_err(|e| format!("invalid UTC offset `{other}`: {e}")),
        }
    }
}

pub use offset_serde::parse as parse_utc_offset;

fn is_weekend(d: NaiveDate) -> bool {
    matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Keep weekday office-hours slots, optionally dropping any (room, day) that
/// lacks one of the expected histogram-bearing slots.
pub fn filter_analysis_window(records: &[SlotRecord], opts: &FilterOptions) -> Vec<SlotRecord> {
    let in_window = |r: &SlotRecord| {
        let local = r.slot_start.with_timezone(&opts.utc_offset);
        if opts.drop_weekends && is_weekend(local.date_naive()) {
            return false;
        }
        let t = local.time();
        t >= opts.office_start && t < opts.office_end
    };
    let kept: Vec<&SlotRecord> = records.iter().filter(|r| in_window(r)).collect();
    if !opts.drop_incomplete_days {
        return kept.into_iter().cloned().collect();
    }

    let expected = opts.expected_slots_per_day();
    let mut present: BTreeMap<(&str, NaiveDate), BTreeSet<usize>> = BTreeMap::new();
    for r in &kept {
        if r.histogram.is_none() {
            continue;
        }
        let local = r.slot_start.with_timezone(&opts.utc_offset);
        if let Some(i) = opts.slot_index(local.time()) {
            present
                .entry((r.room_id.as_str(), local.date_naive()))
                .or_default()
                .insert(i);
        }
    }
    kept.into_iter()
        .filter(|r| {
            let day = r.slot_start.with_timezone(&opts.utc_offset).date_naive();
            present
                .get(&(r.room_id.as_str(), day))
                .is_some_and(|s| s.len() == expected)
        })
        .cloned()
        .collect()
}
