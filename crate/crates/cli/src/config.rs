use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use soundocc::data::{parse_utc_offset, FilterOptions, GeneratorSpec, RoomConfig, SlotFormat};
use soundocc::energy::EnergyConstants;
use soundocc::occupancy::{ClusterSearch, Method, TrainingOptions};

/// Everything a run depends on. Loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the generator and training seeds when set.
    pub seed: Option<u64>,
    pub slots: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub verdicts: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// JSON array of room configs, merged under `rooms`.
    pub room_config: Option<PathBuf>,
    pub rooms: Vec<RoomConfig>,
    /// Restrict processing to these rooms; empty means all.
    pub select_rooms: Vec<String>,
    pub methods: Vec<Method>,
    pub train_rooms: Vec<String>,
    pub test_rooms: Vec<String>,
    pub generator: GeneratorSpec,
    pub days: usize,
    pub out: PathBuf,
    /// `UTC`, `Z` or `±HH:MM`; overrides `filter.utc_offset`.
    pub timezone: Option<String>,
    pub filter: FilterOptions,
    pub apply_filter: bool,
    pub training: TrainingOptions,
    pub cluster: ClusterSearch,
    pub energy: EnergyConstants,
    /// Room-temperature histogram bin width, °C.
    pub temp_bin_width: f64,
    pub verdict_format: SlotFormat,
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            slots: None,
            truth: None,
            verdicts: None,
            model: None,
            room_config: None,
            rooms: Vec::new(),
            select_rooms: Vec::new(),
            methods: Method::ALL.to_vec(),
            train_rooms: Vec::new(),
            test_rooms: Vec::new(),
            generator: GeneratorSpec::default(),
            days: 21,
            out: PathBuf::from("runs"),
            timezone: None,
            filter: FilterOptions::default(),
            apply_filter: true,
            training: TrainingOptions::default(),
            cluster: ClusterSearch::default(),
            energy: EnergyConstants::default(),
            temp_bin_width: 0.1,
            verdict_format: SlotFormat::Csv,
            strict: false,
        }
    }
}

/// A bare array, or an object with a `rooms` array as written by `synth`.
fn parse_rooms(text: &str) -> Result<Vec<RoomConfig>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum RoomFile {
        Bare(Vec<RoomConfig>),
        Wrapped { rooms: Vec<RoomConfig> },
    }
    Ok(match serde_json::from_str(text)? {
        RoomFile::Bare(r) | RoomFile::Wrapped { rooms: r } => r,
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Push top-level overrides into nested sections and check consistency.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(seed) = self.seed {
            self.generator.seed = seed;
            self.training.pipeline.train.seed = seed;
        }
        if let Some(tz) = &self.timezone {
            self.filter.utc_offset = parse_utc_offset(tz).map_err(anyhow::Error::msg)?;
        }
        if let Some(path) = &self.room_config {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading room config {}", path.display()))?;
            let file_rooms = parse_rooms(&text).with_context(|| format!("parsing room config {}", path.display()))?;
            for r in file_rooms {
                if !self.rooms.iter().any(|x| x.room_id == r.room_id) {
                    self.rooms.push(r);
                }
            }
            self.rooms.sort_by(|a, b| a.room_id.cmp(&b.room_id));
        }
        for r in &self.rooms {
            r.validate()?;
        }
        if self.methods.is_empty() {
            bail!("no detection method selected");
        }
        self.methods.sort();
        self.methods.dedup();
        if !(self.temp_bin_width > 0.0) {
            bail!("temp_bin_width must be positive");
        }
        self.training.pipeline.train.validate()?;
        self.energy.validate()?;
        Ok(self)
    }

    /// SHA-256 of the canonical JSON, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str, flag: &str) -> Result<&'a Path> {
        match field {
            Some(p) => Ok(p.as_path()),
            None => bail!("no {name} file given (set `{flag}` or the config field)"),
        }
    }
}
