//! CSV and ESRI ASCII grid formats.
//!
//! PO: `recordId,lon,lat,speciesId[,year,source]`.
//! PA (long, one species per row): `surveyId,lon,lat,speciesId[,stratum]`.
//! Submission: `surveyId,speciesIds`, species ids space-separated in index order.
//! Split: `surveyId,side,blockI,blockJ`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdmbench_core::raster::RasterGrid;
use sdmbench_core::split::{Side, SplitAssignment};
use sdmbench_core::{Crs, Location, PaSurvey, PoRecord, PredictionSet, SpeciesIndex};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoColumns {
    pub record_id: String,
    pub lon: String,
    pub lat: String,
    pub species: String,
    pub year: String,
    pub source: String,
}

impl Default for PoColumns {
    fn default() -> Self {
        Self {
            record_id: "recordId".into(),
            lon: "lon".into(),
            lat: "lat".into(),
            species: "speciesId".into(),
            year: "year".into(),
            source: "source".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PaColumns {
    pub survey_id: String,
    pub lon: String,
    pub lat: String,
    pub species: String,
    pub stratum: String,
}

impl Default for PaColumns {
    fn default() -> Self {
        Self {
            survey_id: "surveyId".into(),
            lon: "lon".into(),
            lat: "lat".into(),
            species: "speciesId".into(),
            stratum: "stratum".into(),
        }
    }
}

/// A CSV row (or PA survey) left out of a load, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the file; for rejected surveys, the first line.
    pub line: u64,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoLoad {
    pub species: SpeciesIndex,
    pub records: Vec<PoRecord>,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaLoad {
    pub species: SpeciesIndex,
    pub surveys: Vec<PaSurvey>,
    pub rejected: Vec<RejectedRow>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| BenchError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| BenchError::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |source| BenchError::Csv { path: path.to_path_buf(), source }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

struct Header<'a> {
    path: &'a Path,
    positions: HashMap<String, usize>,
}

impl<'a> Header<'a> {
    fn read(path: &'a Path, reader: &mut csv::Reader<File>) -> Result<Self> {
        let headers = reader.headers().map_err(csv_err(path))?;
        let positions = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        Ok(Self { path, positions })
    }

    fn required(&self, column: &str) -> Result<usize> {
        self.positions.get(column).copied().ok_or_else(|| BenchError::MissingColumn {
            path: self.path.to_path_buf(),
            column: column.to_string(),
        })
    }

    fn optional(&self, column: &str) -> Option<usize> {
        self.positions.get(column).copied()
    }
}

fn field(rec: &csv::StringRecord, i: usize) -> &str {
    rec.get(i).unwrap_or("")
}

fn optional_field(rec: &csv::StringRecord, i: Option<usize>) -> Option<String> {
    i.map(|i| field(rec, i)).filter(|v| !v.is_empty()).map(str::to_string)
}

fn parse_location(lon: &str, lat: &str, crs: Crs) -> std::result::Result<Location, String> {
    let x: f64 = lon.parse().map_err(|_| format!("unparsable coordinate {lon:?}"))?;
    let y: f64 = lat.parse().map_err(|_| format!("unparsable coordinate {lat:?}"))?;
    Location::new(x, y, crs).map_err(|e| e.to_string())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

struct RawPo {
    line: u64,
    record_id: String,
    location: Location,
    species: String,
    year: Option<i32>,
    source: Option<String>,
}

fn read_po_rows(path: &Path, cols: &PoColumns, crs: Crs) -> Result<(Vec<RawPo>, Vec<RejectedRow>)> {
    let mut reader = csv_reader(path)?;
    let h = Header::read(path, &mut reader)?;
    let (id, lon, lat, sp) =
        (h.required(&cols.record_id)?, h.required(&cols.lon)?, h.required(&cols.lat)?, h.required(&cols.species)?);
    let (year, source) = (h.optional(&cols.year), h.optional(&cols.source));
    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = line_of(&rec);
        let record_id = field(&rec, id).to_string();
        let reject = |reason: String| RejectedRow { line, id: record_id.clone(), reason };
        let location = match parse_location(field(&rec, lon), field(&rec, lat), crs) {
            Ok(l) => l,
            Err(reason) => {
                rejected.push(reject(reason));
                continue;
            }
        };
        let species = field(&rec, sp).to_string();
        if species.is_empty() {
            rejected.push(reject("empty species id".into()));
            continue;
        }
        let year = match optional_field(&rec, year).map(|v| v.parse::<i32>().map_err(|_| v)) {
            None => None,
            Some(Ok(y)) => Some(y),
            Some(Err(v)) => {
                rejected.push(reject(format!("unparsable year {v:?}")));
                continue;
            }
        };
        rows.push(RawPo { line, record_id, location, species, year, source: optional_field(&rec, source) });
    }
    Ok((rows, rejected))
}

struct RawPaRow {
    line: u64,
    survey_id: String,
    location: Location,
    species: Option<String>,
    stratum: Option<String>,
}

fn read_pa_rows(path: &Path, cols: &PaColumns, crs: Crs) -> Result<(Vec<RawPaRow>, Vec<RejectedRow>)> {
    let mut reader = csv_reader(path)?;
    let h = Header::read(path, &mut reader)?;
    let (id, lon, lat, sp) =
        (h.required(&cols.survey_id)?, h.required(&cols.lon)?, h.required(&cols.lat)?, h.required(&cols.species)?);
    let stratum = h.optional(&cols.stratum);
    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = line_of(&rec);
        let survey_id = field(&rec, id).to_string();
        match parse_location(field(&rec, lon), field(&rec, lat), crs) {
            Ok(location) => rows.push(RawPaRow {
                line,
                survey_id,
                location,
                species: optional_field(&rec, Some(sp)),
                stratum: optional_field(&rec, stratum),
            }),
            Err(reason) => rejected.push(RejectedRow { line, id: survey_id, reason }),
        }
    }
    Ok((rows, rejected))
}

fn resolve_po(rows: Vec<RawPo>, index: &SpeciesIndex, rejected: &mut Vec<RejectedRow>) -> Vec<PoRecord> {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        match index.index_of(&r.species) {
            Some(species) => out.push(PoRecord {
                record_id: r.record_id,
                location: r.location,
                species,
                year: r.year,
                source: r.source,
            }),
            None => rejected.push(RejectedRow {
                line: r.line,
                id: r.record_id,
                reason: format!("unknown species {:?}", r.species),
            }),
        }
    }
    out
}

/// Groups long-format rows by survey id in first-appearance order. Rows
/// whose location disagrees with the survey's first row, unknown species and
/// surveys left without any species are rejected.
fn resolve_pa(rows: Vec<RawPaRow>, index: &SpeciesIndex, rejected: &mut Vec<RejectedRow>) -> Vec<PaSurvey> {
    struct Group {
        line: u64,
        location: Location,
        stratum: Option<String>,
        species: Vec<usize>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Group> = HashMap::new();
    for r in rows {
        let g = groups.entry(r.survey_id.clone()).or_insert_with(|| {
            order.push(r.survey_id.clone());
            Group { line: r.line, location: r.location, stratum: r.stratum.clone(), species: Vec::new() }
        });
        if g.location != r.location {
            rejected.push(RejectedRow {
                line: r.line,
                id: r.survey_id,
                reason: "location differs from the survey's first row".into(),
            });
            continue;
        }
        let Some(sp) = r.species else { continue };
        match index.index_of(&sp) {
            Some(s) => g.species.push(s),
            None => rejected.push(RejectedRow { line: r.line, id: r.survey_id, reason: format!("unknown species {sp:?}") }),
        }
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let g = groups.remove(&id).expect("grouped survey");
        match PaSurvey::new(id.clone(), g.location, g.species, g.stratum) {
            Ok(s) => out.push(s),
            Err(e) => rejected.push(RejectedRow { line: g.line, id, reason: e.to_string() }),
        }
    }
    out
}

fn index_from<'a>(ids: impl Iterator<Item = &'a str>) -> Result<SpeciesIndex> {
    let ids: BTreeSet<&str> = ids.collect();
    Ok(SpeciesIndex::build(ids)?)
}

/// Loads presence-only records. Without `index`, the species index is built
/// from the file's valid rows; with it, unknown species are rejected.
pub fn load_po_csv(path: &Path, cols: &PoColumns, crs: Crs, index: Option<&SpeciesIndex>) -> Result<PoLoad> {
    let (rows, mut rejected) = read_po_rows(path, cols, crs)?;
    let species = match index {
        Some(i) => i.clone(),
        None => index_from(rows.iter().map(|r| r.species.as_str()))?,
    };
    let records = resolve_po(rows, &species, &mut rejected);
    Ok(PoLoad { species, records, rejected })
}

/// Loads long-format presence-absence surveys; see [`load_po_csv`] for `index`.
pub fn load_pa_csv(path: &Path, cols: &PaColumns, crs: Crs, index: Option<&SpeciesIndex>) -> Result<PaLoad> {
    let (rows, mut rejected) = read_pa_rows(path, cols, crs)?;
    let species = match index {
        Some(i) => i.clone(),
        None => index_from(rows.iter().filter_map(|r| r.species.as_deref()))?,
    };
    let surveys = resolve_pa(rows, &species, &mut rejected);
    Ok(PaLoad { species, surveys, rejected })
}

/// Loads both files under one species index built from their union.
pub fn load_po_pa(
    po_path: &Path,
    pa_path: &Path,
    po_cols: &PoColumns,
    pa_cols: &PaColumns,
    crs: Crs,
) -> Result<(PoLoad, PaLoad)> {
    let (po_rows, mut po_rejected) = read_po_rows(po_path, po_cols, crs)?;
    let (pa_rows, mut pa_rejected) = read_pa_rows(pa_path, pa_cols, crs)?;
    let species = index_from(
        po_rows.iter().map(|r| r.species.as_str()).chain(pa_rows.iter().filter_map(|r| r.species.as_deref())),
    )?;
    let records = resolve_po(po_rows, &species, &mut po_rejected);
    let surveys = resolve_pa(pa_rows, &species, &mut pa_rejected);
    Ok((
        PoLoad { species: species.clone(), records, rejected: po_rejected },
        PaLoad { species, surveys, rejected: pa_rejected },
    ))
}

fn species_name(index: &SpeciesIndex, s: usize) -> Result<&str> {
    index.id_of(s).ok_or_else(|| BenchError::Core(sdmbench_core::Error::SpeciesOutOfRange { index: s, n_species: index.len() }))
}

pub fn write_po_csv(path: &Path, records: &[PoRecord], index: &SpeciesIndex) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["recordId", "lon", "lat", "speciesId", "year", "source"]).map_err(&err)?;
    for r in records {
        let year = r.year.map(|y| y.to_string()).unwrap_or_default();
        w.write_record([
            r.record_id.as_str(),
            &r.location.x.to_string(),
            &r.location.y.to_string(),
            species_name(index, r.species)?,
            &year,
            r.source.as_deref().unwrap_or(""),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn write_pa_csv(path: &Path, surveys: &[PaSurvey], index: &SpeciesIndex) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["surveyId", "lon", "lat", "speciesId", "stratum"]).map_err(&err)?;
    for s in surveys {
        let (x, y) = (s.location.x.to_string(), s.location.y.to_string());
        for &sp in s.present() {
            w.write_record([
                s.survey_id.as_str(),
                &x,
                &y,
                species_name(index, sp)?,
                s.stratum.as_deref().unwrap_or(""),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn write_submission(path: &Path, preds: &[PredictionSet], index: &SpeciesIndex) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["surveyId", "speciesIds"]).map_err(&err)?;
    for p in preds {
        let ids = p.species().iter().map(|&s| species_name(index, s)).collect::<Result<Vec<_>>>()?;
        w.write_record([p.survey_id.as_str(), &ids.join(" ")]).map_err(&err)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// Reads a submission; unknown species ids and repeated survey ids are data errors.
pub fn read_submission(path: &Path, index: &SpeciesIndex) -> Result<Vec<PredictionSet>> {
    let mut reader = csv_reader(path)?;
    let h = Header::read(path, &mut reader)?;
    let (id, sp) = (h.required("surveyId")?, h.required("speciesIds")?);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err(path))?;
        let survey = field(&rec, id).to_string();
        if !seen.insert(survey.clone()) {
            return Err(BenchError::data(format!("{}: survey {survey:?} listed twice", path.display())));
        }
        let species = field(&rec, sp)
            .split_whitespace()
            .map(|s| {
                index.index_of(s).ok_or_else(|| {
                    BenchError::data(format!("{}: unknown species {s:?} for survey {survey:?}", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(PredictionSet::new(survey, species));
    }
    Ok(out)
}

/// One row of `split.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRow {
    pub survey_id: String,
    pub side: Side,
    pub block: (i64, i64),
}

pub fn write_split(path: &Path, split: &SplitAssignment) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["surveyId", "side", "blockI", "blockJ"]).map_err(&err)?;
    for (id, (side, (i, j))) in &split.surveys {
        w.write_record([id.as_str(), side.as_str(), &i.to_string(), &j.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn read_split(path: &Path) -> Result<BTreeMap<String, SplitRow>> {
    let mut reader = csv_reader(path)?;
    let h = Header::read(path, &mut reader)?;
    let cols = [h.required("surveyId")?, h.required("side")?, h.required("blockI")?, h.required("blockJ")?];
    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = |what: &str| BenchError::data(format!("{}:{}: bad {what}", path.display(), line_of(&rec)));
        let side: Side = field(&rec, cols[1]).parse().map_err(|_| bad("side"))?;
        let i = field(&rec, cols[2]).parse().map_err(|_| bad("blockI"))?;
        let j = field(&rec, cols[3]).parse().map_err(|_| bad("blockJ"))?;
        let survey_id = field(&rec, cols[0]).to_string();
        out.insert(survey_id.clone(), SplitRow { survey_id, side, block: (i, j) });
    }
    Ok(out)
}

/// Reads an ESRI ASCII grid; the grid is named after the file stem.
pub fn read_ascii_grid(path: &Path) -> Result<RasterGrid> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("grid").to_string();
    let reader = BufReader::new(open(path)?);
    let mut header: BTreeMap<String, f64> = BTreeMap::new();
    let mut values = Vec::new();
    let bad = |reason: String| BenchError::Core(sdmbench_core::Error::MalformedRaster { name: name.clone(), reason });
    for line in reader.lines() {
        let line = line.map_err(|e| BenchError::io(path, e))?;
        let mut tokens = line.split_whitespace().peekable();
        let Some(first) = tokens.peek() else { continue };
        if values.is_empty() && first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            let key = first.to_ascii_lowercase();
            tokens.next();
            let v = tokens.next().ok_or_else(|| bad(format!("header {key} without value")))?;
            let v: f64 = v.parse().map_err(|_| bad(format!("header {key} value {v:?}")))?;
            header.insert(key, v);
            continue;
        }
        for t in tokens {
            values.push(t.parse::<f64>().map_err(|_| bad(format!("value {t:?}")))?);
        }
    }
    let get = |k: &str| header.get(k).copied().ok_or_else(|| bad(format!("missing header {k}")));
    let count = |k: &str| -> Result<usize> {
        let v = get(k)?;
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(bad(format!("{k} must be a positive integer")))
        }
    };
    let (nx, ny, cell) = (count("ncols")?, count("nrows")?, get("cellsize")?);
    let x0 = match header.get("xllcorner") {
        Some(&v) => v,
        None => get("xllcenter")? - cell / 2.0,
    };
    let y0 = match header.get("yllcorner") {
        Some(&v) => v,
        None => get("yllcenter")? - cell / 2.0,
    };
    let nodata = header.get("nodata_value").copied().unwrap_or(-9999.0);
    Ok(RasterGrid::new(name, nx, ny, x0, y0, cell, nodata, values)?)
}

/// Writes an ESRI ASCII grid with shortest round-trip number formatting.
pub fn write_ascii_grid(path: &Path, grid: &RasterGrid) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| BenchError::io(path, e);
    writeln!(w, "ncols {}", grid.nx).map_err(io)?;
    writeln!(w, "nrows {}", grid.ny).map_err(io)?;
    writeln!(w, "xllcorner {}", grid.x0).map_err(io)?;
    writeln!(w, "yllcorner {}", grid.y0).map_err(io)?;
    writeln!(w, "cellsize {}", grid.cell).map_err(io)?;
    writeln!(w, "NODATA_value {}", grid.nodata).map_err(io)?;
    for row in grid.values.chunks(grid.nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Every `*.asc` file in `dir`, sorted by file name.
pub fn read_grid_dir(dir: &Path) -> Result<Vec<RasterGrid>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| BenchError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "asc"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_ascii_grid(p)).collect()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = BufReader::new(open(path)?);
    serde_json::from_reader(reader).map_err(|source| BenchError::Json { path: path.to_path_buf(), source })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|source| BenchError::Json { path: path.to_path_buf(), source })?;
    writeln!(w).map_err(|e| BenchError::io(path, e))?;
    w.flush().map_err(|e| BenchError::io(path, e))
}
