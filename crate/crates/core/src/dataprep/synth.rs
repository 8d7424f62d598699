//! Synthetic cities with planted neighbourhood effects on price.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ingest::{ColumnData, RawTable, RawTables};
use super::schema::{ColumnKind, ColumnSpec, FeatureSchema, TableSchema};
use crate::error::{GsneError, Result};
use crate::geo_graph::GeoPoint;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCityConfig {
    pub houses: usize,
    pub regions: usize,
    pub schools: usize,
    pub stations: usize,
    /// Side length of the square city, in planar metres.
    pub extent: f64,
    /// Numeric house columns with no effect on price.
    pub extra_house_features: usize,
    /// Numeric point-of-interest columns besides `quality`.
    pub extra_poi_features: usize,
    /// Multiplier on the fixed raw-feature coefficients.
    pub raw_weight: f64,
    pub region_weight: f64,
    pub school_weight: f64,
    pub station_weight: f64,
    pub region_scale: f64,
    pub school_scale: f64,
    pub station_scale: f64,
    /// Schools farther than this from a house do not affect its price.
    pub school_radius: f64,
    /// Stations farther than this from a house do not affect its price.
    pub station_radius: f64,
    pub noise_std: f64,
    pub base_log_price: f64,
    /// Spread of a region's houses around its centre, as a fraction of the
    /// typical spacing between region centres.
    pub cluster_spread: f64,
    /// Fraction of optional house feature cells left empty.
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticCityConfig {
    fn default() -> Self {
        SyntheticCityConfig {
            houses: 2000,
            regions: 20,
            schools: 30,
            stations: 8,
            extent: 10_000.0,
            extra_house_features: 3,
            extra_poi_features: 2,
            raw_weight: 1.0,
            region_weight: 0.25,
            school_weight: 0.25,
            station_weight: 0.2,
            region_scale: 5000.0,
            school_scale: 700.0,
            station_scale: 1000.0,
            school_radius: 1000.0,
            station_radius: 1000.0,
            noise_std: 0.1,
            base_log_price: 13.0,
            cluster_spread: 0.4,
            missing_rate: 0.0,
            seed: 42,
        }
    }
}

impl SyntheticCityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.houses < 1 || self.regions < 1 {
            return Err(GsneError::Config("a synthetic city needs at least one house and one region".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(GsneError::Config("noise_std must be non-negative".into()));
        }
        if !(self.extent > 0.0) || !(self.region_scale > 0.0 && self.school_scale > 0.0 && self.station_scale > 0.0) {
            return Err(GsneError::Config("extent and decay scales must be positive".into()));
        }
        if !(self.school_radius > 0.0 && self.station_radius > 0.0) {
            return Err(GsneError::Config("school and station radii must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(GsneError::Config("missing_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Coefficients of the raw-feature price term, before `raw_weight`.
pub const BEDROOM_COEF: f64 = 0.10;
pub const BATHROOM_COEF: f64 = 0.08;
pub const LAND_COEF: f64 = 0.0004;
pub const AGE_COEF: f64 = -0.004;
pub const PARKING_COEF: f64 = 0.05;
pub const PROPERTY_TYPES: [(&str, f64); 3] = [("house", 0.15), ("townhouse", 0.05), ("unit", 0.0)];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCity {
    pub tables: RawTables,
    /// Price contribution of each house's surroundings, in log units.
    pub neighborhood: Vec<f64>,
    /// Price contribution of each house's own features, in log units.
    pub raw_term: Vec<f64>,
}

impl SyntheticCity {
    /// Write the tables, `schema.json` and `ground_truth.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.tables.write(dir)?;
        let mut out = String::from("id,neighborhood\n");
        for (id, v) in self.tables.houses.ids.iter().zip(&self.neighborhood) {
            out.push_str(&format!("{id},{v:?}\n"));
        }
        let path = dir.join("ground_truth.csv");
        std::fs::write(&path, out).map_err(|e| GsneError::io(&path, e))
    }
}

fn poi_schema(file: &str, extra: usize) -> TableSchema {
    let mut columns = vec![
        ColumnSpec::new("id", ColumnKind::Id),
        ColumnSpec::new("x", ColumnKind::Coordinate),
        ColumnSpec::new("y", ColumnKind::Coordinate),
        ColumnSpec::new("quality", ColumnKind::Numeric),
    ];
    columns.extend((0..extra).map(|i| ColumnSpec::new(&format!("a{i}"), ColumnKind::Numeric)));
    TableSchema {
        file: file.into(),
        columns,
    }
}

pub fn synthetic_schema(config: &SyntheticCityConfig) -> FeatureSchema {
    let mut houses = vec![
        ColumnSpec::new("id", ColumnKind::Id),
        ColumnSpec::new("x", ColumnKind::Coordinate),
        ColumnSpec::new("y", ColumnKind::Coordinate),
        ColumnSpec::new("region_id", ColumnKind::RegionLink),
        ColumnSpec::new("price", ColumnKind::Target),
    ];
    for name in ["bedrooms", "bathrooms", "land_size", "age", "parking"] {
        houses.push(ColumnSpec::new(name, ColumnKind::Numeric));
    }
    houses.push(ColumnSpec {
        name: "ptype".into(),
        kind: ColumnKind::Categorical,
        vocabulary: Some(PROPERTY_TYPES.iter().map(|(n, _)| n.to_string()).collect()),
    });
    houses.extend((0..config.extra_house_features).map(|i| ColumnSpec::new(&format!("f{i}"), ColumnKind::Numeric)));
    FeatureSchema {
        houses: TableSchema {
            file: "houses.csv".into(),
            columns: houses,
        },
        regions: poi_schema("regions.csv", config.extra_poi_features),
        schools: Some(poi_schema("schools.csv", config.extra_poi_features)),
        stations: Some(poi_schema("stations.csv", config.extra_poi_features)),
    }
}

fn planar(p: GeoPoint, q: GeoPoint) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

struct Pois {
    coords: Vec<GeoPoint>,
    quality: Vec<f64>,
}

fn place_pois(n: usize, extent: f64, rng: &mut SeededRng) -> Pois {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let coords = (0..n)
        .map(|_| GeoPoint::new(rng.random_range(0.0..extent), rng.random_range(0.0..extent)))
        .collect();
    let quality = (0..n).map(|_| std.sample(rng)).collect();
    Pois { coords, quality }
}

fn poi_table(schema: TableSchema, prefix: &str, pois: &Pois, extra: usize, rng: &mut SeededRng) -> RawTable {
    let n = pois.coords.len();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = vec![("quality".to_string(), ColumnData::Numeric(pois.quality.iter().map(|&q| Some(q)).collect()))];
    for i in 0..extra {
        features.push((format!("a{i}"), ColumnData::Numeric((0..n).map(|_| Some(std.sample(rng))).collect())));
    }
    RawTable {
        schema,
        ids: (0..n).map(|i| format!("{prefix}{i}")).collect(),
        coords: pois.coords.clone(),
        features,
        target: None,
        region_link: None,
    }
}

/// `sum_p quality_p * exp(-dist(x, p) / scale)` over points within `radius`.
pub fn decayed_quality(x: GeoPoint, coords: &[GeoPoint], quality: &[f64], scale: f64, radius: f64) -> f64 {
    coords
        .iter()
        .zip(quality)
        .map(|(&c, q)| (planar(x, c), q))
        .filter(|&(d, _)| d <= radius)
        .map(|(d, q)| q * (-d / scale).exp())
        .sum()
}

/// Generate a city. Houses cluster around region centres and belong to the
/// nearest centre. Log-price is `base + raw term + neighbourhood + noise`,
/// where the neighbourhood term sums quality times distance decay over the
/// schools and stations within their radii plus the house's own region.
pub fn gen_synthetic_city(config: &SyntheticCityConfig) -> Result<SyntheticCity> {
    config.validate()?;
    let schema = synthetic_schema(config);
    let mut rng = SeededRng::new(config.seed, 0);
    let ext = config.extent;
    let regions = place_pois(config.regions, ext, &mut rng);
    let schools = place_pois(config.schools, ext, &mut rng);
    let stations = place_pois(config.stations, ext, &mut rng);

    let spread = config.cluster_spread * ext / (config.regions as f64).sqrt();
    let offset = Normal::new(0.0, spread.max(1e-9)).expect("positive spread");
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let noise = Normal::new(0.0, config.noise_std).expect("non-negative noise");

    let n = config.houses;
    let mut coords = Vec::with_capacity(n);
    let mut region_of = Vec::with_capacity(n);
    for i in 0..n {
        let p = if i < config.regions {
            // one house at every centre keeps all regions populated
            let c = regions.coords[i];
            GeoPoint::new(c.x + 1.0, c.y)
        } else {
            let c = regions.coords[rng.random_range(0..config.regions)];
            GeoPoint::new(
                (c.x + offset.sample(&mut rng)).clamp(0.0, ext),
                (c.y + offset.sample(&mut rng)).clamp(0.0, ext),
            )
        };
        let r = (0..config.regions)
            .min_by(|&a, &b| planar(p, regions.coords[a]).total_cmp(&planar(p, regions.coords[b])))
            .expect("at least one region");
        coords.push(p);
        region_of.push(r);
    }

    let bedrooms: Vec<f64> = (0..n).map(|_| rng.random_range(1..=5) as f64).collect();
    let bathrooms: Vec<f64> = (0..n).map(|_| rng.random_range(1..=3) as f64).collect();
    let land: Vec<f64> = (0..n).map(|_| rng.random_range(200.0..1200.0f64).round()).collect();
    let age: Vec<f64> = (0..n).map(|_| rng.random_range(0..=100) as f64).collect();
    let parking: Vec<f64> = (0..n).map(|_| rng.random_range(0..=3) as f64).collect();
    let ptype: Vec<usize> = (0..n).map(|_| rng.random_range(0..PROPERTY_TYPES.len())).collect();
    let extras: Vec<Vec<f64>> = (0..config.extra_house_features)
        .map(|_| (0..n).map(|_| std.sample(&mut rng)).collect())
        .collect();

    let mut raw_term = Vec::with_capacity(n);
    let mut neighborhood = Vec::with_capacity(n);
    let mut prices = Vec::with_capacity(n);
    for i in 0..n {
        let raw = BEDROOM_COEF * bedrooms[i]
            + BATHROOM_COEF * bathrooms[i]
            + LAND_COEF * land[i]
            + AGE_COEF * age[i]
            + PARKING_COEF * parking[i]
            + PROPERTY_TYPES[ptype[i]].1;
        let raw = config.raw_weight * raw;
        let r = region_of[i];
        let hood = config.region_weight
            * regions.quality[r]
            * (-planar(coords[i], regions.coords[r]) / config.region_scale).exp()
            + config.school_weight * decayed_quality(
                    coords[i],
                    &schools.coords,
                    &schools.quality,
                    config.school_scale,
                    config.school_radius,
                )
            + config.station_weight
                * decayed_quality(
                    coords[i],
                    &stations.coords,
                    &stations.quality,
                    config.station_scale,
                    config.station_radius,
                );
        let eps = if config.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        raw_term.push(raw);
        neighborhood.push(hood);
        prices.push((config.base_log_price + raw + hood + eps).exp());
    }

    let blank = |v: Vec<f64>, rng: &mut SeededRng| -> ColumnData {
        ColumnData::Numeric(
            v.into_iter()
                .map(|x| (config.missing_rate == 0.0 || rng.random::<f64>() >= config.missing_rate).then_some(x))
                .collect(),
        )
    };
    let mut features = vec![
        ("bedrooms".to_string(), blank(bedrooms, &mut rng)),
        ("bathrooms".to_string(), blank(bathrooms, &mut rng)),
        ("land_size".to_string(), blank(land, &mut rng)),
        ("age".to_string(), blank(age, &mut rng)),
        ("parking".to_string(), blank(parking, &mut rng)),
        (
            "ptype".to_string(),
            ColumnData::Categorical(ptype.iter().map(|&k| Some(PROPERTY_TYPES[k].0.to_string())).collect()),
        ),
    ];
    for (i, col) in extras.into_iter().enumerate() {
        features.push((format!("f{i}"), blank(col, &mut rng)));
    }
    let houses = RawTable {
        schema: schema.houses.clone(),
        ids: (0..n).map(|i| format!("h{i}")).collect(),
        coords,
        features,
        target: Some(prices),
        region_link: Some(region_of.iter().map(|r| format!("r{r}")).collect()),
    };
    let extra = config.extra_poi_features;
    let regions_t = poi_table(schema.regions.clone(), "r", &regions, extra, &mut rng);
    let schools_t = poi_table(schema.schools.clone().expect("schools"), "s", &schools, extra, &mut rng);
    let stations_t = poi_table(schema.stations.clone().expect("stations"), "t", &stations, extra, &mut rng);
    Ok(SyntheticCity {
        tables: RawTables {
            schema,
            houses,
            regions: regions_t,
            schools: Some(schools_t),
            stations: Some(stations_t),
        },
        neighborhood,
        raw_term,
    })
}
