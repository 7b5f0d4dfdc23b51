//! Cooling energy per slot and its split by occupancy.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::data::{self, SlotRecord};
use crate::occupancy::OccupancyVerdict;
use crate::{Error, Result, SlotKey};

pub const KJ_PER_KWH: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyConstants {
    /// kg/m³
    pub air_density: f64,
    /// kJ/(°C·kg)
    pub specific_heat: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        EnergyConstants {
            air_density: 1.204,
            specific_heat: 1.012,
        }
    }
}

impl EnergyConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.air_density > 0.0 && self.specific_heat > 0.0)
            || !self.air_density.is_finite()
            || !self.specific_heat.is_finite()
        {
            return Err(Error::InvalidConfig(format!(
                "energy constants must be positive, got density {} and specific heat {}",
                self.air_density, self.specific_heat
            )));
        }
        Ok(())
    }
}

/// `ρ·C·V·(T_room − T_supply)` in kJ.
pub fn cooling_energy(room_temp: f64, supply_temp: f64, air_volume: f64, constants: &EnergyConstants) -> Result<f64> {
    constants.validate()?;
    if !(room_temp.is_finite() && supply_temp.is_finite() && air_volume.is_finite()) {
        return Err(Error::Domain("cooling energy inputs must be finite".into()));
    }
    if air_volume < 0.0 {
        return Err(Error::Domain(format!(
            "air volume must be non-negative, got {air_volume}"
        )));
    }
    Ok(constants.air_density * constants.specific_heat * air_volume * (room_temp - supply_temp))
}

pub fn kj_to_kwh(kj: f64) -> f64 {
    kj / KJ_PER_KWH
}

/// Volume delivered over `slot_minutes` at a flow rate in m³/h.
pub fn flow_to_volume(flow_m3_per_hour: f64, slot_minutes: u32) -> f64 {
    flow_m3_per_hour * f64::from(slot_minutes) / 60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySlot {
    pub room_id: String,
    pub slot_start: DateTime<Utc>,
    /// kWh
    pub q_cooling: f64,
    pub room_temp: f64,
    pub occupied: bool,
    /// Supply air warmer than the room.
    pub negative_delta: bool,
}

/// Join slots with labeled verdicts. Every slot needs exactly one verdict.
pub fn energy_slots(
    slots: &[SlotRecord],
    verdicts: &[OccupancyVerdict],
    constants: &EnergyConstants,
) -> Result<Vec<EnergySlot>> {
    let mut labels: HashMap<SlotKey, bool> = HashMap::with_capacity(verdicts.len());
    for v in verdicts {
        let occ = v
            .occupied
            .ok_or_else(|| Error::InvalidConfig(format!("{} verdicts carry no occupancy label", v.method)))?;
        if labels.insert(v.key(), occ).is_some() {
            return Err(Error::KeyMismatch(format!(
                "duplicate verdict {} {}",
                v.room_id, v.slot_start
            )));
        }
    }
    if labels.len() != slots.len() {
        return Err(Error::KeyMismatch(format!(
            "{} verdicts for {} slots",
            labels.len(),
            slots.len()
        )));
    }
    slots
        .iter()
        .map(|s| {
            let occupied = *labels
                .get(&s.key())
                .ok_or_else(|| Error::KeyMismatch(format!("no verdict for {} {}", s.room_id, s.slot_start)))?;
            let kj = cooling_energy(s.room_temp, s.supply_temp, s.air_volume, constants)?;
            Ok(EnergySlot {
                room_id: s.room_id.clone(),
                slot_start: s.slot_start,
                q_cooling: kj_to_kwh(kj),
                room_temp: s.room_temp,
                occupied,
                negative_delta: s.room_temp < s.supply_temp,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub x: f64,
    pub cumulative_probability: f64,
}

/// Empirical CDF as a step function at each distinct value.
pub fn empirical_cdf(values: &[f64]) -> Vec<CdfPoint> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.x == x => last.cumulative_probability = p,
            _ => out.push(CdfPoint {
                x,
                cumulative_probability: p,
            }),
        }
    }
    out
}

/// Evaluate a step CDF at `x`.
pub fn cdf_at(cdf: &[CdfPoint], x: f64) -> f64 {
    let idx = cdf.partition_point(|p| p.x <= x);
    if idx == 0 {
        0.0
    } else {
        cdf[idx - 1].cumulative_probability
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub count: usize,
    /// kWh per slot
    pub mean_energy: f64,
    pub mean_room_temp: f64,
    pub energy_cdf: Vec<CdfPoint>,
}

fn class_stats(slots: &[&EnergySlot]) -> Option<ClassStats> {
    if slots.is_empty() {
        return None;
    }
    let n = slots.len() as f64;
    let energies: Vec<f64> = slots.iter().map(|s| s.q_cooling).collect();
    Some(ClassStats {
        count: slots.len(),
        mean_energy: energies.iter().sum::<f64>() / n,
        mean_room_temp: slots.iter().map(|s| s.room_temp).sum::<f64>() / n,
        energy_cdf: empirical_cdf(&energies),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub constants: EnergyConstants,
    pub total_slots: usize,
    /// `None` when no slot was occupied.
    pub occupied: Option<ClassStats>,
    pub unoccupied: Option<ClassStats>,
    /// `(mean_occ − mean_unocc) / mean_unocc · 100`; `None` if a class is absent
    /// or the unoccupied mean is zero.
    pub percent_gap: Option<f64>,
    /// Occupied minus unoccupied mean room temperature, °C.
    pub temp_gap: Option<f64>,
    pub negative_delta_slots: usize,
}

pub fn summarize_energy(slots: &[EnergySlot], constants: &EnergyConstants) -> EnergyReport {
    let (occ, unocc): (Vec<&EnergySlot>, Vec<&EnergySlot>) = slots.iter().partition(|s| s.occupied);
    let occupied = class_stats(&occ);
    let unoccupied = class_stats(&unocc);
    let (percent_gap, temp_gap) = match (&occupied, &unoccupied) {
        (Some(o), Some(u)) => {
            let pct = (u.mean_energy != 0.0).then(|| (o.mean_energy - u.mean_energy) / u.mean_energy * 100.0);
            (pct, Some(o.mean_room_temp - u.mean_room_temp))
        }
        _ => (None, None),
    };
    EnergyReport {
        constants: *constants,
        total_slots: slots.len(),
        occupied,
        unoccupied,
        percent_gap,
        temp_gap,
        negative_delta_slots: slots.iter().filter(|s| s.negative_delta).count(),
    }
}

pub fn attribute_energy(
    slots: &[SlotRecord],
    verdicts: &[OccupancyVerdict],
    constants: &EnergyConstants,
) -> Result<EnergyReport> {
    Ok(summarize_energy(&energy_slots(slots, verdicts, constants)?, constants))
}

/// One report per room.
pub fn energy_by_room(slots: &[EnergySlot], constants: &EnergyConstants) -> BTreeMap<String, EnergyReport> {
    let mut rooms: BTreeMap<&str, Vec<EnergySlot>> = BTreeMap::new();
    for s in slots {
        rooms.entry(&s.room_id).or_default().push(s.clone());
    }
    rooms
        .into_iter()
        .map(|(r, s)| (r.to_string(), summarize_energy(&s, constants)))
        .collect()
}

/// Room-temperature counts per class on a shared grid of `bin_width` bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureHistograms {
    pub bin_width: f64,
    /// Lower edge of each bin.
    pub bin_edges: Vec<f64>,
    pub occupied: Vec<u64>,
    pub unoccupied: Vec<u64>,
}

pub fn temperature_distributions(slots: &[EnergySlot], bin_width: f64) -> Result<TemperatureHistograms> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    if slots.is_empty() {
        return Err(Error::InsufficientData("no slots for temperature distributions".into()));
    }
    let lo = slots.iter().map(|s| s.room_temp).fold(f64::INFINITY, f64::min);
    let hi = slots.iter().map(|s| s.room_temp).fold(f64::NEG_INFINITY, f64::max);
    let origin = (lo / bin_width).floor() * bin_width;
    let n = ((hi - origin) / bin_width).floor() as usize + 1;
    let mut occupied = vec![0u64; n];
    let mut unoccupied = vec![0u64; n];
    for s in slots {
        let i = (((s.room_temp - origin) / bin_width).floor().max(0.0) as usize).min(n - 1);
        if s.occupied {
            occupied[i] += 1;
        } else {
            unoccupied[i] += 1;
        }
    }
    Ok(TemperatureHistograms {
        bin_width,
        bin_edges: (0..n).map(|i| origin + i as f64 * bin_width).collect(),
        occupied,
        unoccupied,
    })
}

fn write_comment(file: &mut std::fs::File, path: &Path, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(file, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// CSV with columns `class, x, cumulative_probability`.
pub fn write_cdf_csv(path: &Path, report: &EnergyReport, comment: Option<&str>) -> Result<()> {
    let mut file = data::create(path)?;
    write_comment(&mut file, path, comment)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["class", "x", "cumulative_probability"])?;
    for (class, stats) in [("occupied", &report.occupied), ("unoccupied", &report.unoccupied)] {
        for p in stats.iter().flat_map(|s| &s.energy_cdf) {
            w.write_record([class.to_string(), p.x.to_string(), p.cumulative_probability.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// CSV with columns `class, x, count`, where `x` is the bin's lower edge.
pub fn write_histogram_csv(path: &Path, hist: &TemperatureHistograms, comment: Option<&str>) -> Result<()> {
    let mut file = data::create(path)?;
    write_comment(&mut file, path, comment)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["class", "x", "count"])?;
    for (class, counts) in [("occupied", &hist.occupied), ("unoccupied", &hist.unoccupied)] {
        for (x, c) in hist.bin_edges.iter().zip(counts) {
            w.write_record([class.to_string(), x.to_string(), c.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
