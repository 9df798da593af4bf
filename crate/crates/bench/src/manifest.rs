//! Run manifests.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdmbench_core::split::LONLAT_BLOCK_DEGREES;
use sdmbench_core::synth::SynthConfig;
use sdmbench_core::Crs;

use crate::error::{BenchError, Result};
use crate::io::{self, PaColumns, PoColumns};
use crate::methods::{MethodEntry, MethodSpec, Schedule};
use crate::world::{self, Data, SynthData};

/// Default block edge for planar (synthetic) data, in coordinate units.
pub const PLANAR_BLOCK_SIZE: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Generated on the fly; the world seed defaults to the run seed.
    Synthetic {
        #[serde(default)]
        config: SynthConfig,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// A data directory (see [`crate::world`]).
    Directory {
        path: PathBuf,
        #[serde(default = "planar")]
        crs: Crs,
    },
    /// Separate PO/PA CSV files and a directory of `.asc` grids.
    Csv {
        po: PathBuf,
        pa: PathBuf,
        rasters: PathBuf,
        #[serde(default = "lonlat")]
        crs: Crs,
        #[serde(default)]
        po_columns: PoColumns,
        #[serde(default)]
        pa_columns: PaColumns,
    },
}

fn planar() -> Crs {
    Crs::Planar
}
fn lonlat() -> Crs {
    Crs::LonLat
}
fn default_test_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Defaults to 0.45 degrees for lon/lat data and 8 units for planar data.
    #[serde(default)]
    pub block_size: Option<f64>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Defaults to the lower-left corner of the surveys' bounding box.
    #[serde(default)]
    pub origin: Option<(f64, f64)>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { block_size: None, test_fraction: default_test_fraction(), origin: None }
    }
}

impl SplitConfig {
    pub fn block_size_for(&self, crs: Crs) -> f64 {
        self.block_size.unwrap_or(match crs {
            Crs::LonLat => LONLAT_BLOCK_DEGREES,
            Crs::Planar => PLANAR_BLOCK_SIZE,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitConfig,
    pub methods: Vec<MethodEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Master seed; required.
    pub seed: u64,
    /// Also write each fitted model as JSON.
    #[serde(default)]
    pub save_models: bool,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Self = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.resolve_paths(base);
        m.validate()?;
        Ok(m)
    }

    /// Relative data paths are taken relative to the manifest's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataSource::Synthetic { .. } => {}
            DataSource::Directory { path, .. } => fix(path),
            DataSource::Csv { po, pa, rasters, .. } => {
                fix(po);
                fix(pa);
                fix(rasters);
            }
        }
        if let Some(out) = &mut self.output_dir {
            fix(out);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(BenchError::config("manifest lists no methods"));
        }
        let mut names = BTreeSet::new();
        for m in &self.methods {
            if !names.insert(m.name.as_str()) {
                return Err(BenchError::config(format!("method name {:?} used twice", m.name)));
            }
            m.validate(None)?;
        }
        if let DataSource::Synthetic { config, .. } = &self.data {
            config.validate()?;
        }
        let f = self.split.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(BenchError::config(format!("test fraction {f} must be in (0, 1)")));
        }
        if self.split.block_size.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
            return Err(BenchError::config("block size must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("manifest serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn load_data(&self) -> Result<Data> {
        match &self.data {
            DataSource::Synthetic { config, seed } => Ok(SynthData::generate(config, seed.unwrap_or(self.seed))?.into_data()),
            DataSource::Directory { path, crs } => world::load_dir(path, *crs),
            DataSource::Csv { po, pa, rasters, crs, po_columns, pa_columns } => {
                let (po, pa) = io::load_po_pa(po, pa, po_columns, pa_columns, *crs)?;
                Ok(Data {
                    species: po.species,
                    grids: io::read_grid_dir(rasters)?,
                    po: po.records,
                    pa: pa.surveys,
                    crs: *crs,
                    rejected: [po.rejected, pa.rejected].concat(),
                })
            }
        }
    }

    /// The default synthetic benchmark: every baseline, both MaxEnt variants,
    /// the forest and the five stage schedules.
    pub fn default_synthetic(seed: u64) -> Self {
        let staged = |label: &str| {
            let MethodSpec::Staged { train, predictors, features, .. } = MethodSpec::by_name("staged").expect("registered")
            else {
                unreachable!()
            };
            MethodEntry::new(
                format!("staged_{}", label.to_ascii_lowercase().replace('/', "_")),
                MethodSpec::Staged { schedule: Schedule::Label(label.into()), train, predictors, features },
            )
        };
        let named = |name: &str| MethodEntry::new(name, MethodSpec::by_name(name).expect("registered"));
        let mut methods = vec![named("constant"), named("knn_po"), named("knn_pa"), named("cooccurrence")];
        methods.push(named("maxent"));
        methods.push(MethodEntry::new(
            "maxent_all",
            MethodSpec::Maxent {
                filter: false,
                predictors: sdmbench_core::features::Predictors::Environment,
                config: Default::default(),
            },
        ));
        methods.push(named("forest"));
        for label in ["PO", "PA", "PO/PA", "PA/PO", "PA/PO/PA"] {
            methods.push(staged(label));
        }
        Self {
            data: DataSource::Synthetic { config: SynthConfig::default(), seed: None },
            split: SplitConfig::default(),
            methods,
            output_dir: None,
            seed,
            save_models: false,
        }
    }
}
