//! Raw table ingestion, preprocessing, splitting, and synthetic data.

mod ingest;
mod preprocess;
mod schema;
mod split;
mod synth;

use std::collections::HashMap;

pub use ingest::{ingest, ingest_dir, ingest_table, ColumnData, RawTable, RawTables};
pub use preprocess::{
    log_normalize_price, ColumnTransform, FeatureKind, PreprocessReport, PriceTransform, TableTransform,
};
pub use schema::{ColumnKind, ColumnSpec, FeatureSchema, TableSchema};
pub use split::{split, Split, STRATA};
pub use synth::{
    decayed_quality, gen_synthetic_city, synthetic_schema, SyntheticCity, SyntheticCityConfig, AGE_COEF,
    BATHROOM_COEF, BEDROOM_COEF, LAND_COEF, PARKING_COEF, PROPERTY_TYPES,
};

use crate::error::{GsneError, Result};
use crate::geo_graph::{GraphInput, Partition, PartitionId};
use crate::linalg::Matrix;

/// Everything downstream stages need from the raw tables under one split.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Graph inputs built from the training houses and all points of interest.
    pub graph_input: GraphInput,
    /// Test houses, encoded inductively after training.
    pub heldout: Partition,
    /// Standardized features of every house in table order.
    pub house_features: Matrix,
    pub feature_names: Vec<String>,
    /// ln(price) of every house in table order.
    pub log_price: Vec<f64>,
    pub split: Split,
    pub report: PreprocessReport,
}

fn poi_partition(id: PartitionId, table: Option<&RawTable>) -> Result<(Partition, Option<TableTransform>)> {
    match table {
        Some(t) if !t.is_empty() => {
            let all: Vec<usize> = (0..t.len()).collect();
            let tr = TableTransform::fit(t, &all)?;
            let attrs = tr.apply(t)?;
            Ok((Partition::new(id, t.ids.clone(), t.coords.clone(), attrs)?, Some(tr)))
        }
        _ => Ok((Partition::empty(id, 1), None)),
    }
}

/// Log prices of the house table.
pub fn house_log_prices(tables: &RawTables) -> Result<Vec<f64>> {
    let prices = tables
        .houses
        .target
        .as_ref()
        .ok_or_else(|| GsneError::Schema("house table has no target column".into()))?;
    log_normalize_price(prices)
}

/// Split houses with [`split`] on log-price and preprocess every table.
/// House statistics are fitted on the training rows only.
pub fn prepare(tables: &RawTables, train_fraction: f64, seed: u64) -> Result<Prepared> {
    let log_price = house_log_prices(tables)?;
    let sp = split(&log_price, train_fraction, seed, true)?;
    prepare_with_split(tables, sp)
}

pub fn prepare_with_split(tables: &RawTables, sp: Split) -> Result<Prepared> {
    let log_price = house_log_prices(tables)?;
    let h = &tables.houses;
    let house_tr = TableTransform::fit(h, &sp.train)?;
    let house_features = house_tr.apply(h)?;
    let (regions, region_tr) = poi_partition(PartitionId::REGIONS, Some(&tables.regions))?;
    let (schools, school_tr) = poi_partition(PartitionId::SCHOOLS, tables.schools.as_ref())?;
    let (stations, station_tr) = poi_partition(PartitionId::STATIONS, tables.stations.as_ref())?;

    let region_index: HashMap<&str, usize> = regions.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let links = h
        .region_link
        .as_ref()
        .ok_or_else(|| GsneError::Schema("house table has no region link column".into()))?;
    let house_region = sp
        .train
        .iter()
        .map(|&r| {
            region_index.get(links[r].as_str()).copied().ok_or_else(|| {
                GsneError::Input(format!("house {} links to unknown region `{}`", h.ids[r], links[r]))
            })
        })
        .collect::<Result<Vec<usize>>>()?;

    let part = |rows: &[usize]| {
        Partition::new(
            PartitionId::HOUSES,
            rows.iter().map(|&r| h.ids[r].clone()).collect(),
            rows.iter().map(|&r| h.coords[r]).collect(),
            house_features.select_rows(rows),
        )
    };
    let houses = part(&sp.train)?;
    let heldout = part(&sp.test)?;
    let report = PreprocessReport {
        houses: house_tr.clone(),
        regions: region_tr.ok_or_else(|| GsneError::Input("region table is empty".into()))?,
        schools: school_tr,
        stations: station_tr,
        price_transform: "ln".into(),
    };
    Ok(Prepared {
        graph_input: GraphInput {
            houses,
            regions,
            schools,
            stations,
            house_region,
        },
        heldout,
        feature_names: house_tr.feature_names(),
        house_features,
        log_price,
        split: sp,
        report,
    })
}
