//! Synthetic world with known species responses.
//!
//! Environment grids are sums of Gaussian bumps, standardized over cells.
//! Each virtual species has a unimodal logistic occupancy over the linear and
//! squared grid values. Presence-absence surveys are exhaustive draws from
//! the occupancy; presence-only records draw a location from the effort
//! field and report a single present species chosen in proportion to its
//! detection weight. Skewed detection weights therefore decouple PO counts
//! from true prevalence.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, ln, sqrt};
use crate::par;
use crate::raster::RasterGrid;
use crate::rng::{self, family, StreamRng};
use crate::types::{Location, PaSurvey, PoRecord, SpeciesIdx, SpeciesIndex};

/// Retry bound per survey or record when the latent species set is empty.
pub const EMPTY_SET_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectionWeights {
    /// Every species equally detectable.
    Constant { value: f64 },
    /// `exp(U(ln min, ln max))`.
    LogUniform { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub nx: usize,
    pub ny: usize,
    pub cell: f64,
    pub n_grids: usize,
    pub bumps_per_grid: usize,
    pub n_species: usize,
    /// Species with a low, narrow occupancy peak; taken from the end of the index.
    pub n_rare_species: usize,
    /// Scales every quadratic niche coefficient.
    pub niche_sharpness: f64,
    /// Number of grids each species responds to.
    pub niche_dims: usize,
    /// Range of the occupancy logit at a common species' optimum.
    pub peak_logit: (f64, f64),
    /// Same for rare species.
    pub rare_peak_logit: (f64, f64),
    /// Extra factor on rare species' quadratic coefficients (narrower niches).
    pub rare_sharpness: f64,
    pub detection: DetectionWeights,
    /// 0 gives uniform effort; larger values give rougher effort fields.
    pub effort_roughness: f64,
    /// PA surveys are tagged by vertical band; 1 leaves them untagged.
    pub n_strata: usize,
    pub n_po: usize,
    pub n_pa: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            cell: 1.0,
            n_grids: 6,
            bumps_per_grid: 10,
            n_species: 50,
            n_rare_species: 0,
            niche_sharpness: 1.0,
            niche_dims: 3,
            peak_logit: (0.5, 3.0),
            rare_peak_logit: (-3.5, -2.0),
            rare_sharpness: 2.0,
            detection: DetectionWeights::LogUniform { min: 0.1, max: 10.0 },
            effort_roughness: 1.0,
            n_strata: 1,
            n_po: 20_000,
            n_pa: 2_500,
        }
    }
}

impl SynthConfig {
    /// The default world with equal detection weights and uniform effort.
    pub fn unbiased() -> Self {
        Self {
            detection: DetectionWeights::Constant { value: 1.0 },
            effort_roughness: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_species < 2 {
            return fail(format!("need at least 2 species, got {}", self.n_species));
        }
        if self.n_rare_species > self.n_species {
            return fail("more rare species than species".into());
        }
        if self.nx == 0 || self.ny == 0 || !(self.cell > 0.0) {
            return fail("domain must have positive size".into());
        }
        if self.n_grids == 0 || self.niche_dims == 0 || self.niche_dims > self.n_grids {
            return fail(format!("niche_dims {} must be in 1..={}", self.niche_dims, self.n_grids));
        }
        if self.n_strata == 0 {
            return fail("n_strata must be at least 1".into());
        }
        if !(self.niche_sharpness > 0.0 && self.rare_sharpness > 0.0) {
            return fail("niche sharpness must be positive".into());
        }
        if !(self.effort_roughness >= 0.0) {
            return fail("effort_roughness must be non-negative".into());
        }
        match self.detection {
            DetectionWeights::Constant { value } if !(value > 0.0) => {
                fail("detection weight must be positive".into())
            }
            DetectionWeights::LogUniform { min, max } if !(min > 0.0 && max >= min) => {
                fail("log-uniform detection range must satisfy 0 < min <= max".into())
            }
            _ => Ok(()),
        }
    }
}

/// A species with logistic occupancy `q(x) = logistic(alpha + beta . phi(x))`,
/// where `phi` is the grid values followed by their squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualSpecies {
    pub index: SpeciesIdx,
    pub id: String,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub detection_weight: f64,
}

impl VirtualSpecies {
    pub fn logit(&self, env: &[f64]) -> f64 {
        let g = env.len();
        let mut z = self.alpha;
        for (k, &e) in env.iter().enumerate() {
            z += self.beta[k] * e + self.beta[g + k] * e * e;
        }
        z
    }

    pub fn occupancy(&self, env: &[f64]) -> f64 {
        crate::math::sigmoid(self.logit(env))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub seed: u64,
    pub grids: Vec<RasterGrid>,
    pub species: Vec<VirtualSpecies>,
    pub effort: RasterGrid,
}

fn species_id(k: usize) -> String {
    format!("sp{k:03}")
}

fn bump_field(cfg: &SynthConfig, r: &mut StreamRng, name: String, n_bumps: usize) -> Result<RasterGrid> {
    let w = cfg.nx as f64 * cfg.cell;
    let h = cfg.ny as f64 * cfg.cell;
    let extent = w.max(h);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..n_bumps)
        .map(|_| {
            let cx = r.gen_range(0.0..w);
            let cy = r.gen_range(0.0..h);
            let width = r.gen_range(0.15..0.4) * extent;
            let amp = r.gen_range(-1.0..1.0);
            (cx, cy, width, amp)
        })
        .collect();
    let (gx, gy): (f64, f64) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
    let mut grid = RasterGrid::from_fn(name, cfg.nx, cfg.ny, 0.0, 0.0, cfg.cell, -9999.0, |x, y| {
        let mut v = 0.5 * (gx * (x / w - 0.5) + gy * (y / h - 0.5));
        for &(cx, cy, width, amp) in &bumps {
            let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            v += amp * exp(-d2 / (2.0 * width * width));
        }
        v
    })?;
    standardize_cells(&mut grid.values);
    Ok(grid)
}

fn standardize_cells(values: &mut [f64]) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    let sd = sqrt(var).max(1e-12);
    for v in values {
        *v = (*v - m) / sd;
    }
}

/// Builds the world deterministically from `(config, seed)`.
///
/// Grids, species niches, detection weights and effort each use their own
/// random stream, so changing one (e.g. the detection distribution) leaves
/// the others untouched.
pub fn generate_world(config: &SynthConfig, seed: u64) -> Result<SynthWorld> {
    config.validate()?;
    let grids = (0..config.n_grids)
        .map(|g| {
            let mut r = rng::stream(seed, family::GRIDS, g as u64);
            bump_field(config, &mut r, format!("env{g}"), config.bumps_per_grid)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_common = config.n_species - config.n_rare_species;
    let g = config.n_grids;
    let species = (0..config.n_species)
        .map(|k| {
            let mut r = rng::stream(seed, family::SPECIES, k as u64);
            let rare = k >= n_common;
            let dims = sample_indices(&mut r, g, config.niche_dims).into_vec();
            let (lo, hi) = if rare { config.rare_peak_logit } else { config.peak_logit };
            let peak = if hi > lo { r.gen_range(lo..hi) } else { lo };
            let mut alpha = peak;
            let mut beta = vec![0.0; 2 * g];
            for d in dims {
                let optimum: f64 = r.gen_range(-1.2..1.2);
                let mut a = config.niche_sharpness * r.gen_range(0.3..1.0);
                if rare {
                    a *= config.rare_sharpness;
                }
                // -a (e - optimum)^2 = -a e^2 + 2 a optimum e - a optimum^2
                beta[d] = 2.0 * a * optimum;
                beta[g + d] = -a;
                alpha -= a * optimum * optimum;
            }
            let mut dr = rng::stream(seed, family::DETECTION, k as u64);
            let detection_weight = match config.detection {
                DetectionWeights::Constant { value } => value,
                DetectionWeights::LogUniform { min, max } => {
                    if max > min {
                        exp(dr.gen_range(ln(min)..ln(max)))
                    } else {
                        min
                    }
                }
            };
            VirtualSpecies { index: k, id: species_id(k), alpha, beta, detection_weight }
        })
        .collect();

    let effort = if config.effort_roughness == 0.0 {
        RasterGrid::from_fn("effort", config.nx, config.ny, 0.0, 0.0, config.cell, -9999.0, |_, _| 1.0)?
    } else {
        let mut r = rng::stream(seed, family::EFFORT, 0);
        let mut field = bump_field(config, &mut r, "effort".into(), config.bumps_per_grid)?;
        for v in &mut field.values {
            *v = exp(config.effort_roughness * *v);
        }
        field
    };

    SynthWorld::from_parts(config.clone(), seed, grids, species, effort)
}

impl SynthWorld {
    /// Assembles a world from explicit parts (used for hand-built scenarios).
    pub fn from_parts(
        config: SynthConfig,
        seed: u64,
        grids: Vec<RasterGrid>,
        species: Vec<VirtualSpecies>,
        effort: RasterGrid,
    ) -> Result<Self> {
        if species.len() < 2 {
            return Err(Error::Config("need at least 2 species".into()));
        }
        let g = grids.len();
        for (k, s) in species.iter().enumerate() {
            if s.index != k || s.beta.len() != 2 * g {
                return Err(Error::Config(format!("species {k} malformed")));
            }
            if !(s.detection_weight > 0.0) {
                return Err(Error::Config(format!("species {k} detection weight must be positive")));
            }
        }
        for grid in &grids {
            if !grid.same_geometry(&effort) {
                return Err(Error::Config(format!("grid {} does not match the effort grid", grid.name)));
            }
        }
        if effort.values.iter().any(|&v| !(v >= 0.0)) || !(effort.values.iter().sum::<f64>() > 0.0) {
            return Err(Error::Config("effort must be non-negative with positive total".into()));
        }
        Ok(Self { config, seed, grids, species, effort })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn species_index(&self) -> SpeciesIndex {
        SpeciesIndex::build(self.species.iter().map(|s| s.id.as_str()))
            .expect("world has at least two species")
    }

    pub fn width(&self) -> f64 {
        self.effort.width()
    }

    pub fn height(&self) -> f64 {
        self.effort.height()
    }

    fn env_at_cell(&self, col: usize, row: usize) -> Vec<f64> {
        self.grids.iter().map(|g| g.get(col, row)).collect()
    }

    /// True occupancy of every species at `loc` (zeros out of extent).
    pub fn occupancy(&self, loc: &Location) -> Vec<f64> {
        match self.effort.cell_of(loc.x, loc.y) {
            Some((c, r)) => {
                let env = self.env_at_cell(c, r);
                self.species.iter().map(|s| s.occupancy(&env)).collect()
            }
            None => vec![0.0; self.n_species()],
        }
    }

    /// Occupancy per cell (row-major over the effort grid), then species.
    pub fn occupancy_table(&self) -> Vec<f64> {
        let (nx, ny) = (self.effort.nx, self.effort.ny);
        let rows = par::map_range(nx * ny, |k| {
            let env = self.env_at_cell(k % nx, k / nx);
            self.species.iter().map(|s| s.occupancy(&env)).collect::<Vec<f64>>()
        });
        rows.into_iter().flatten().collect()
    }

    fn stratum_of(&self, x: f64) -> Option<String> {
        let n = self.config.n_strata;
        if n <= 1 {
            return None;
        }
        let band = ((x / self.width()) * n as f64) as usize;
        Some(format!("S{}", band.min(n - 1) + 1))
    }
}

struct Sampler<'a> {
    world: &'a SynthWorld,
    table: Vec<f64>,
    cumulative_effort: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(world: &'a SynthWorld) -> Self {
        let mut acc = 0.0;
        let cumulative_effort = world
            .effort
            .values
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Self { world, table: world.occupancy_table(), cumulative_effort }
    }

    fn q(&self, cell: usize) -> &[f64] {
        let s = self.world.n_species();
        &self.table[cell * s..(cell + 1) * s]
    }

    fn cell_index(&self, col: usize, row: usize) -> usize {
        row * self.world.effort.nx + col
    }

    fn point_in_cell(&self, r: &mut StreamRng, cell: usize) -> (f64, f64) {
        let g = &self.world.effort;
        let (col, row) = (cell % g.nx, cell / g.nx);
        let (cx, cy) = g.cell_center(col, row);
        let half = 0.5 * g.cell;
        (cx + r.gen_range(-half..half), cy + r.gen_range(-half..half))
    }

    fn uniform_location(&self, r: &mut StreamRng) -> (f64, f64, usize) {
        let g = &self.world.effort;
        loop {
            let x = r.gen_range(0.0..self.world.width()) + g.x0;
            let y = r.gen_range(0.0..self.world.height()) + g.y0;
            if let Some((c, row)) = g.cell_of(x, y) {
                return (x, y, self.cell_index(c, row));
            }
        }
    }

    fn effort_location(&self, r: &mut StreamRng) -> (f64, f64, usize) {
        let total = *self.cumulative_effort.last().expect("non-empty grid");
        loop {
            let u = r.gen_range(0.0..total);
            let cell = self.cumulative_effort.partition_point(|&c| c <= u);
            if cell >= self.cumulative_effort.len() || self.world.effort.values[cell] <= 0.0 {
                continue;
            }
            let (x, y) = self.point_in_cell(r, cell);
            // Guard against float round-off pushing the point out of its cell.
            if let Some((c, row)) = self.world.effort.cell_of(x, y) {
                if self.cell_index(c, row) == cell {
                    return (x, y, cell);
                }
            }
        }
    }

    fn draw_set(&self, r: &mut StreamRng, cell: usize) -> Vec<SpeciesIdx> {
        self.q(cell)
            .iter()
            .enumerate()
            .filter_map(|(s, &q)| (r.gen::<f64>() < q).then_some(s))
            .collect()
    }
}

/// Exhaustive surveys at uniform locations; empty draws are resampled.
pub fn sample_pa(world: &SynthWorld, n_surveys: usize, seed: u64) -> Result<Vec<PaSurvey>> {
    if n_surveys == 0 {
        return Err(Error::Config("n_surveys must be at least 1".into()));
    }
    let sampler = Sampler::new(world);
    par::try_map_range(n_surveys, |i| {
        let mut r = rng::stream(seed, family::PA, i as u64);
        for _ in 0..EMPTY_SET_RETRIES {
            let (x, y, cell) = sampler.uniform_location(&mut r);
            let present = sampler.draw_set(&mut r, cell);
            if !present.is_empty() {
                let loc = Location::planar(x, y);
                return PaSurvey::new(format!("pa{i:06}"), loc, present, world.stratum_of(x));
            }
        }
        Err(Error::WorldTooSparse(EMPTY_SET_RETRIES))
    })
}

/// Presence-only records: effort-weighted location, latent exhaustive set,
/// one species reported in proportion to detection weight.
pub fn sample_po(world: &SynthWorld, n_records: usize, seed: u64) -> Result<Vec<PoRecord>> {
    if n_records == 0 {
        return Err(Error::Config("n_records must be at least 1".into()));
    }
    let sampler = Sampler::new(world);
    par::try_map_range(n_records, |i| {
        let mut r = rng::stream(seed, family::PO, i as u64);
        for _ in 0..EMPTY_SET_RETRIES {
            let (x, y, cell) = sampler.effort_location(&mut r);
            let present = sampler.draw_set(&mut r, cell);
            if present.is_empty() {
                continue;
            }
            let total: f64 = present.iter().map(|&s| world.species[s].detection_weight).sum();
            let u = r.gen_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = *present.last().expect("non-empty");
            for &s in &present {
                acc += world.species[s].detection_weight;
                if u < acc {
                    chosen = s;
                    break;
                }
            }
            return Ok(PoRecord {
                record_id: format!("po{i:07}"),
                location: Location::planar(x, y),
                species: chosen,
                year: None,
                source: None,
            });
        }
        Err(Error::WorldTooSparse(EMPTY_SET_RETRIES))
    })
}
