//! Data directories.
//!
//! ```text
//! species.json     species ids, in index order
//! grids/*.asc      environmental predictors
//! po.csv, pa.csv   occurrence data
//! world.json       synthetic worlds only: config, seed and species truth
//! effort.asc       synthetic worlds only: presence-only sampling effort
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use sdmbench_core::raster::RasterGrid;
use sdmbench_core::rng;
use sdmbench_core::synth::{generate_world, sample_pa, sample_po, SynthConfig, SynthWorld, VirtualSpecies};
use sdmbench_core::{Crs, PaSurvey, PoRecord, SpeciesIndex};

use crate::error::{BenchError, Result};
use crate::io::{self, PaColumns, PoColumns, RejectedRow};

/// Occurrence data plus predictors, under one species index.
#[derive(Debug, Clone, PartialEq)]
pub struct Data {
    pub species: SpeciesIndex,
    pub grids: Vec<RasterGrid>,
    pub po: Vec<PoRecord>,
    pub pa: Vec<PaSurvey>,
    pub crs: Crs,
    /// Rows dropped at ingestion.
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WorldFile {
    config: SynthConfig,
    seed: u64,
    species: Vec<VirtualSpecies>,
}

/// A generated world with its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub world: SynthWorld,
    pub po: Vec<PoRecord>,
    pub pa: Vec<PaSurvey>,
}

impl SynthData {
    /// Generates the world from `(config, seed)` and samples `config.n_po`
    /// records and `config.n_pa` surveys from seeds derived from `seed`.
    pub fn generate(config: &SynthConfig, seed: u64) -> Result<Self> {
        let world = generate_world(config, seed)?;
        let po = sample_po(&world, config.n_po, rng::derive(seed, 1))?;
        let pa = sample_pa(&world, config.n_pa, rng::derive(seed, 2))?;
        Ok(Self { world, po, pa })
    }

    pub fn into_data(self) -> Data {
        Data {
            species: self.world.species_index(),
            grids: self.world.grids,
            po: self.po,
            pa: self.pa,
            crs: Crs::Planar,
            rejected: Vec::new(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let index = self.world.species_index();
        write_species(dir, &index)?;
        for g in &self.world.grids {
            io::write_ascii_grid(&dir.join("grids").join(format!("{}.asc", g.name)), g)?;
        }
        io::write_ascii_grid(&dir.join("effort.asc"), &self.world.effort)?;
        io::write_json(
            &dir.join("world.json"),
            &WorldFile { config: self.world.config.clone(), seed: self.world.seed, species: self.world.species.clone() },
        )?;
        io::write_po_csv(&dir.join("po.csv"), &self.po, &index)?;
        io::write_pa_csv(&dir.join("pa.csv"), &self.pa, &index)
    }

    /// Reads back a directory written by [`SynthData::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let file: WorldFile = io::read_json(&dir.join("world.json"))?;
        let grids = io::read_grid_dir(&dir.join("grids"))?;
        let mut effort = io::read_ascii_grid(&dir.join("effort.asc"))?;
        effort.name = "effort".into();
        let world = SynthWorld::from_parts(file.config, file.seed, grids, file.species, effort)?;
        let data = load_dir(dir, Crs::Planar)?;
        Ok(Self { world, po: data.po, pa: data.pa })
    }
}

pub fn write_species(dir: &Path, index: &SpeciesIndex) -> Result<()> {
    io::write_json(&dir.join("species.json"), &index.ids())
}

pub fn read_species(dir: &Path) -> Result<SpeciesIndex> {
    let ids: Vec<String> = io::read_json(&dir.join("species.json"))?;
    Ok(SpeciesIndex::build(ids)?)
}

/// Loads a data directory. With `species.json` present the species index is
/// fixed and unknown species are rejected; otherwise it is built from the
/// PO and PA files.
pub fn load_dir(dir: &Path, crs: Crs) -> Result<Data> {
    if !dir.is_dir() {
        return Err(BenchError::data(format!("data directory {} not found", dir.display())));
    }
    let grids_dir = dir.join("grids");
    let grids = if grids_dir.is_dir() { io::read_grid_dir(&grids_dir)? } else { Vec::new() };
    let (po_path, pa_path) = (dir.join("po.csv"), dir.join("pa.csv"));
    let (po_cols, pa_cols) = (PoColumns::default(), PaColumns::default());
    let (species, po, pa, rejected) = if dir.join("species.json").is_file() {
        let species = read_species(dir)?;
        let po = io::load_po_csv(&po_path, &po_cols, crs, Some(&species))?;
        let pa = io::load_pa_csv(&pa_path, &pa_cols, crs, Some(&species))?;
        (species, po.records, pa.surveys, [po.rejected, pa.rejected].concat())
    } else {
        let (po, pa) = io::load_po_pa(&po_path, &pa_path, &po_cols, &pa_cols, crs)?;
        (po.species, po.records, pa.surveys, [po.rejected, pa.rejected].concat())
    };
    Ok(Data { species, grids, po, pa, crs, rejected })
}
