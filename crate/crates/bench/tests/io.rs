use std::fs;
use std::path::Path;

use sdmbench::io::{
    load_pa_csv, load_po_csv, read_ascii_grid, read_split, read_submission, write_ascii_grid, write_pa_csv,
    write_po_csv, write_split, write_submission, PaColumns, PoColumns,
};
use sdmbench::world::SynthData;
use sdmbench::BenchError;
use sdmbench_core::raster::RasterGrid;
use sdmbench_core::split::spatial_block_split;
use sdmbench_core::synth::SynthConfig;
use sdmbench_core::{Crs, Location, PredictionSet, SpeciesIndex};

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn small_world() -> SynthData {
    let config = SynthConfig { nx: 16, ny: 16, n_species: 12, n_po: 1000, n_pa: 200, ..SynthConfig::default() };
    SynthData::generate(&config, 3).unwrap()
}

#[test]
fn three_row_po_file_gives_three_records() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "po.csv",
        "recordId,lon,lat,speciesId,year\nr1,3.1,43.2,b,2019\nr2,3.2,43.3,a,\nr3,3.3,43.4,a,2021\n",
    );
    let load = load_po_csv(&p, &PoColumns::default(), Crs::LonLat, None).unwrap();
    assert_eq!(load.records.len(), 3);
    assert!(load.rejected.is_empty());
    assert_eq!(load.species.ids(), ["a", "b"]);
    assert_eq!(load.records[0].species, 1);
    assert_eq!(load.records[0].year, Some(2019));
    assert_eq!(load.records[1].year, None);
    assert_eq!(load.records[2].location, Location::lonlat(3.3, 43.4).unwrap());
}

#[test]
fn na_coordinate_row_is_rejected_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "po.csv", "recordId,lon,lat,speciesId\nr1,3.1,43.2,a\nr2,3.2,NA,a\nr3,3.3,43.4,b\n");
    let load = load_po_csv(&p, &PoColumns::default(), Crs::LonLat, None).unwrap();
    assert_eq!(load.records.len(), 2);
    assert_eq!(load.rejected.len(), 1);
    assert_eq!(load.rejected[0].id, "r2");
    assert_eq!(load.rejected[0].line, 3);
}

#[test]
fn custom_column_names() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "po.csv", "id,x,y,taxon\n1,0.5,0.5,t1\n");
    let cols = PoColumns {
        record_id: "id".into(),
        lon: "x".into(),
        lat: "y".into(),
        species: "taxon".into(),
        ..PoColumns::default()
    };
    let load = load_po_csv(&p, &cols, Crs::Planar, None).unwrap();
    assert_eq!(load.records.len(), 1);
    assert_eq!(load.species.ids(), ["t1"]);
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "po.csv", "recordId,lon,speciesId\nr1,3.1,a\n");
    match load_po_csv(&p, &PoColumns::default(), Crs::LonLat, None) {
        Err(BenchError::MissingColumn { column, .. }) => assert_eq!(column, "lat"),
        other => panic!("expected a missing column error, got {other:?}"),
    }
}

#[test]
fn pa_rows_group_into_surveys() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "pa.csv",
        "surveyId,lon,lat,speciesId\n1,3.0,43.0,a\n1,3.0,43.0,b\n2,4.0,44.0,a\n1,3.0,43.0,c\n2,4.0,44.0,c\n",
    );
    let load = load_pa_csv(&p, &PaColumns::default(), Crs::LonLat, None).unwrap();
    assert_eq!(load.surveys.len(), 2);
    assert_eq!(load.surveys[0].survey_id, "1");
    assert_eq!(load.surveys[0].present().len(), 3);
    assert_eq!(load.surveys[1].present().len(), 2);
}

#[test]
fn duplicate_pa_rows_are_deduplicated() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "pa.csv", "surveyId,lon,lat,speciesId\ns,1,1,a\ns,1,1,a\ns,1,1,b\n");
    let load = load_pa_csv(&p, &PaColumns::default(), Crs::Planar, None).unwrap();
    assert_eq!(load.surveys.len(), 1);
    assert_eq!(load.surveys[0].present(), [0, 1]);
}

#[test]
fn pa_survey_with_moving_location_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "pa.csv", "surveyId,lon,lat,speciesId\ns,1,1,a\ns,2,1,b\nt,5,5,a\n");
    let load = load_pa_csv(&p, &PaColumns::default(), Crs::Planar, None).unwrap();
    assert_eq!(load.surveys.iter().map(|s| s.survey_id.as_str()).collect::<Vec<_>>(), ["s", "t"]);
    assert_eq!(load.surveys[0].present(), [0]);
    assert_eq!(load.rejected.len(), 1);
}

#[test]
fn unknown_species_under_fixed_index_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "po.csv", "recordId,lon,lat,speciesId\nr1,1,1,a\nr2,1,1,zz\n");
    let index = SpeciesIndex::build(["a", "b"]).unwrap();
    let load = load_po_csv(&p, &PoColumns::default(), Crs::Planar, Some(&index)).unwrap();
    assert_eq!(load.records.len(), 1);
    assert_eq!(load.rejected.len(), 1);
    assert_eq!(load.species, index);
}

#[test]
fn synthetic_po_round_trips() {
    let w = small_world();
    assert_eq!(w.po.len(), 1000);
    let index = w.world.species_index();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("po.csv");
    write_po_csv(&p, &w.po, &index).unwrap();
    let load = load_po_csv(&p, &PoColumns::default(), Crs::Planar, Some(&index)).unwrap();
    assert!(load.rejected.is_empty());
    assert_eq!(load.records, w.po);
    // Identical file, identical bytes on the way out.
    let again = dir.path().join("po2.csv");
    write_po_csv(&again, &load.records, &index).unwrap();
    assert_eq!(fs::read(&p).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn synthetic_pa_round_trips() {
    let w = small_world();
    let index = w.world.species_index();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pa.csv");
    write_pa_csv(&p, &w.pa, &index).unwrap();
    let load = load_pa_csv(&p, &PaColumns::default(), Crs::Planar, Some(&index)).unwrap();
    assert!(load.rejected.is_empty());
    assert_eq!(load.surveys, w.pa);
}

#[test]
fn synthetic_world_directory_round_trips() {
    let w = small_world();
    let dir = tempfile::tempdir().unwrap();
    w.save(dir.path()).unwrap();
    let back = SynthData::load(dir.path()).unwrap();
    assert_eq!(back.po, w.po);
    assert_eq!(back.pa, w.pa);
    assert_eq!(back.world.grids, w.world.grids);
    assert_eq!(back.world.species, w.world.species);
    let data = sdmbench::world::load_dir(dir.path(), Crs::Planar).unwrap();
    assert_eq!(data.species, w.world.species_index());
    assert_eq!(data.grids, w.world.grids);
}

#[test]
fn ascii_grid_round_trips_bit_exactly() {
    let mut g =
        RasterGrid::from_fn("env", 7, 5, -3.25, 10.5, 0.5, -9999.0, |x, y| (x * 0.1 + y).sin() / 3.0).unwrap();
    g.values[17] = -9999.0;
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("env.asc");
    write_ascii_grid(&p, &g).unwrap();
    let back = read_ascii_grid(&p).unwrap();
    assert_eq!(back, g);
    let text = fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("ncols 7\nnrows 5\n"));
}

#[test]
fn ascii_grid_point_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "g.asc",
        "NCOLS 3\nNROWS 2\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\nNODATA_VALUE -9999\n1 2 3\n4 -9999 6\n",
    );
    let g = read_ascii_grid(&p).unwrap();
    assert_eq!(g.name, "g");
    // The first data row is the northern row.
    assert_eq!(g.sample(&Location::planar(0.5, 1.5)), Some(1.0));
    assert_eq!(g.sample(&Location::planar(2.5, 1.5)), Some(3.0));
    assert_eq!(g.sample(&Location::planar(0.5, 0.5)), Some(4.0));
    assert_eq!(g.sample(&Location::planar(1.5, 0.5)), None);
    assert_eq!(g.sample(&Location::planar(3.5, 0.5)), None);
}

#[test]
fn single_cell_grid_with_center_header() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "one.asc", "ncols 1\nnrows 1\nxllcenter 0.5\nyllcenter 0.5\ncellsize 1\n7.0\n");
    let g = read_ascii_grid(&p).unwrap();
    assert_eq!(g.sample(&Location::planar(0.5, 0.5)), Some(7.0));
}

#[test]
fn truncated_grid_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.asc", "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n");
    assert!(read_ascii_grid(&p).is_err());
}

#[test]
fn submission_format() {
    let index = SpeciesIndex::build(["1003", "27", "5"]).unwrap();
    let preds = vec![
        PredictionSet::new("s1", vec![2, 0]),
        PredictionSet::empty("s2"),
        PredictionSet::new("s3", vec![1]),
    ];
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("submission.csv");
    write_submission(&p, &preds, &index).unwrap();
    assert_eq!(fs::read_to_string(&p).unwrap(), "surveyId,speciesIds\ns1,1003 5\ns2,\ns3,27\n");
    assert_eq!(read_submission(&p, &index).unwrap(), preds);
}

#[test]
fn submission_with_unknown_species_or_repeated_survey_is_a_data_error() {
    let index = SpeciesIndex::build(["a"]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.csv", "surveyId,speciesIds\ns1,a b\n");
    let err = read_submission(&unknown, &index).unwrap_err();
    assert!(!err.is_config());
    assert_eq!(err.exit_code(), 3);
    let twice = write(dir.path(), "t.csv", "surveyId,speciesIds\ns1,a\ns1,a\n");
    assert!(read_submission(&twice, &index).is_err());
}

#[test]
fn split_file_round_trips() {
    let w = small_world();
    let split = spatial_block_split(&w.pa, 4.0, 0.8, None, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("split.csv");
    write_split(&p, &split).unwrap();
    let rows = read_split(&p).unwrap();
    assert_eq!(rows.len(), w.pa.len());
    for (id, &(side, block)) in &split.surveys {
        assert_eq!(rows[id].side, side);
        assert_eq!(rows[id].block, block);
    }
}
