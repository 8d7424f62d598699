use gsne::config::EvalConfig;
use gsne::dataprep::{gen_synthetic_city, prepare, Prepared, RawTables, SyntheticCityConfig};
use gsne::eval::{EvalReport, RegressorSpec, GbtParams};
use gsne::geo_graph::{GraphArtifact, GraphConfig, PartitionId};
use gsne::pipeline::{build_artifact, embed, evaluate_embeddings, feature_sets, filter_sets, poi_ablation};
use gsne::trainer::{EmbeddingTable, Proximity, TrainConfig};
use gsne::{Execution, GsneError};

fn city() -> (RawTables, Prepared, GraphArtifact) {
    let city = gen_synthetic_city(&SyntheticCityConfig {
        houses: 150,
        regions: 3,
        schools: 5,
        stations: 3,
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    let prepared = prepare(&city.tables, 0.8, 21).unwrap();
    let artifact = build_artifact(&prepared, &GraphConfig::default()).unwrap();
    (city.tables, prepared, artifact)
}

fn config() -> TrainConfig {
    let mut c = TrainConfig {
        iterations: 150,
        batch_size: 32,
        seed: 21,
        ..Default::default()
    };
    c.encoder.embed_dim = 4;
    c.encoder.hidden1 = 16;
    c.encoder.hidden2 = 8;
    c
}

fn quick_eval() -> EvalConfig {
    let mut e = EvalConfig::default();
    e.models.gbt.trees = 20;
    e
}

fn report_bytes(r: &EvalReport) -> (String, String) {
    (r.to_text(), r.to_csv().unwrap())
}

#[test]
fn identical_seeds_give_identical_embeddings_and_reports() {
    let (tables, prepared, artifact) = city();
    let run = || {
        let (_, table) = embed(&artifact, &config()).unwrap();
        let report = evaluate_embeddings(
            &prepared,
            &tables,
            &table,
            Proximity::Both.orders(),
            &quick_eval(),
            21,
            Execution::Parallel,
        )
        .unwrap();
        (table.to_csv_string(), report_bytes(&report))
    };
    assert_eq!(run(), run());
}

#[test]
fn every_house_is_embedded_and_feature_sets_have_expected_widths() {
    let (tables, prepared, artifact) = city();
    let (_, table) = embed(&artifact, &config()).unwrap();
    let houses = table.by_id(PartitionId::HOUSES);
    assert_eq!(houses.len(), 150);
    let sets = feature_sets(&prepared, &tables, &table, Proximity::Both.orders(), false).unwrap();
    let raw = prepared.house_features.cols();
    let widths: Vec<(&str, usize)> = sets.iter().map(|s| (s.name.as_str(), s.matrix.cols())).collect();
    assert_eq!(
        widths,
        vec![
            ("raw", raw),
            ("raw+gsne_1st", raw + 4),
            ("raw+gsne_2nd", raw + 4),
            ("raw+gsne_both", raw + 8),
            ("gsne_only", 8)
        ]
    );
    let with_var = feature_sets(&prepared, &tables, &table, Proximity::Both.orders(), true).unwrap();
    assert_eq!(with_var[3].matrix.cols(), raw + 16);
    assert!(filter_sets(sets.clone(), "raw,bogus").is_err());
    assert_eq!(filter_sets(sets, "raw, gsne_only").unwrap().len(), 2);
}

#[test]
fn single_order_embeddings_offer_matching_sets() {
    let (tables, prepared, artifact) = city();
    let cfg = TrainConfig {
        proximity: Proximity::Second,
        ..config()
    };
    let (_, table) = embed(&artifact, &cfg).unwrap();
    assert_eq!(table.width(), 4);
    let sets = feature_sets(&prepared, &tables, &table, Proximity::Second.orders(), false).unwrap();
    let names: Vec<&str> = sets.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["raw", "raw+gsne_2nd", "gsne_only"]);
}

#[test]
fn missing_embeddings_are_reported_by_id() {
    let (tables, prepared, artifact) = city();
    let (_, mut table) = embed(&artifact, &config()).unwrap();
    let gone = tables.houses.ids[7].clone();
    table.rows.retain(|r| !(r.partition == PartitionId::HOUSES && r.id == gone));
    let err = feature_sets(&prepared, &tables, &table, Proximity::Both.orders(), false).unwrap_err();
    match err {
        GsneError::Evaluation(m) => assert!(m.contains(&gone), "{m}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn embedding_csv_survives_a_file_round_trip() {
    let (_, _, artifact) = city();
    let (_, table) = embed(&artifact, &config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.csv");
    table.write_csv(&path).unwrap();
    assert_eq!(EmbeddingTable::read_csv(&path).unwrap(), table);
}

#[test]
fn ablation_has_raw_single_type_and_all_rows() {
    let (tables, prepared, artifact) = city();
    let spec = RegressorSpec::Gbt(GbtParams {
        trees: 20,
        ..GbtParams::default()
    });
    let rows = poi_ablation(&prepared, &tables, &artifact, &config(), &spec, false, 21).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["raw", "region", "school", "station", "all"]);
    assert!(rows.iter().all(|r| r.regressor == "gbt" && r.overall.mae.is_finite()));
}
