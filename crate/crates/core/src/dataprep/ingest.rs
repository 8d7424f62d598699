//! Reading and writing the raw CSV tables.

use std::collections::HashSet;
use std::path::Path;

use super::schema::{ColumnKind, FeatureSchema, TableSchema};
use crate::error::{GsneError, Result};
use crate::geo_graph::GeoPoint;

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }
}

/// One typed table. Feature columns keep schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: TableSchema,
    pub ids: Vec<String>,
    pub coords: Vec<GeoPoint>,
    pub features: Vec<(String, ColumnData)>,
    pub target: Option<Vec<f64>>,
    pub region_link: Option<Vec<String>>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> RawTable {
        RawTable {
            schema: self.schema.clone(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            coords: rows.iter().map(|&r| self.coords[r]).collect(),
            features: self.features.iter().map(|(n, c)| (n.clone(), c.select(rows))).collect(),
            target: self.target.as_ref().map(|t| rows.iter().map(|&r| t[r]).collect()),
            region_link: self.region_link.as_ref().map(|t| rows.iter().map(|&r| t[r].clone()).collect()),
        }
    }

    /// Render in schema column order; missing values are empty cells.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.schema.columns.iter().map(|c| c.name.as_str()))?;
        let mut coord_seen = 0;
        let coord_axes: Vec<usize> = self
            .schema
            .columns
            .iter()
            .map(|c| {
                if c.kind == ColumnKind::Coordinate {
                    coord_seen += 1;
                    coord_seen - 1
                } else {
                    0
                }
            })
            .collect();
        for r in 0..self.len() {
            let mut rec = Vec::with_capacity(self.schema.columns.len());
            for (ci, c) in self.schema.columns.iter().enumerate() {
                let cell = match c.kind {
                    ColumnKind::Id => self.ids[r].clone(),
                    ColumnKind::Coordinate => {
                        let p = self.coords[r];
                        format!("{:?}", if coord_axes[ci] == 0 { p.x } else { p.y })
                    }
                    ColumnKind::Target => format!("{:?}", self.target.as_ref().expect("house table")[r]),
                    ColumnKind::RegionLink => self.region_link.as_ref().expect("house table")[r].clone(),
                    ColumnKind::Numeric | ColumnKind::Categorical => {
                        match &self.features.iter().find(|(n, _)| n == &c.name).expect("column present").1 {
                            ColumnData::Numeric(v) => v[r].map(|x| format!("{x:?}")).unwrap_or_default(),
                            ColumnData::Categorical(v) => v[r].clone().unwrap_or_default(),
                        }
                    }
                };
                rec.push(cell);
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| GsneError::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// The house table and the point-of-interest tables. Missing school or
/// station tables are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTables {
    pub schema: FeatureSchema,
    pub houses: RawTable,
    pub regions: RawTable,
    pub schools: Option<RawTable>,
    pub stations: Option<RawTable>,
}

impl RawTables {
    /// Write every table and `schema.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| GsneError::io(dir, e))?;
        self.schema.write(&dir.join("schema.json"))?;
        let tables = [Some(&self.houses), Some(&self.regions), self.schools.as_ref(), self.stations.as_ref()];
        for t in tables.into_iter().flatten() {
            let path = dir.join(&t.schema.file);
            std::fs::write(&path, t.to_csv_string()?).map_err(|e| GsneError::io(&path, e))?;
        }
        Ok(())
    }
}

fn parse_table(text: &str, file: &str, schema: &TableSchema) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let ingest_err = |row: usize, message: String| GsneError::Ingest {
        file: file.to_string(),
        row,
        message,
    };
    let headers = rdr.headers().map_err(|e| ingest_err(1, e.to_string()))?.clone();
    let mut positions = Vec::with_capacity(schema.columns.len());
    for c in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| h == c.name)
            .ok_or_else(|| GsneError::Schema(format!("{file}: missing column `{}`", c.name)))?;
        positions.push(pos);
    }

    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut coords = Vec::new();
    let mut features: Vec<(String, ColumnData)> = schema
        .columns
        .iter()
        .filter_map(|c| match c.kind {
            ColumnKind::Numeric => Some((c.name.clone(), ColumnData::Numeric(Vec::new()))),
            ColumnKind::Categorical => Some((c.name.clone(), ColumnData::Categorical(Vec::new()))),
            _ => None,
        })
        .collect();
    let mut target = schema.of_kind(ColumnKind::Target).next().map(|_| Vec::new());
    let mut region_link = schema.of_kind(ColumnKind::RegionLink).next().map(|_| Vec::new());

    for (i, rec) in rdr.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let rec = rec.map_err(|e| ingest_err(row, e.to_string()))?;
        let mut xy = Vec::with_capacity(2);
        let mut fi = 0;
        for (c, &pos) in schema.columns.iter().zip(&positions) {
            let cell = rec.get(pos).unwrap_or("");
            let number = |required: bool| -> Result<Option<f64>> {
                if cell.is_empty() {
                    return if required {
                        Err(ingest_err(row, format!("missing value in column `{}`", c.name)))
                    } else {
                        Ok(None)
                    };
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(ingest_err(row, format!("unparseable number `{cell}` in column `{}`", c.name))),
                }
            };
            match c.kind {
                ColumnKind::Id => {
                    if cell.is_empty() {
                        return Err(ingest_err(row, "empty id".into()));
                    }
                    if !seen.insert(cell.to_string()) {
                        return Err(ingest_err(row, format!("duplicate id `{cell}`")));
                    }
                    ids.push(cell.to_string());
                }
                ColumnKind::Coordinate => xy.push(number(true)?.expect("required")),
                ColumnKind::Target => target.as_mut().expect("target column").push(number(true)?.expect("required")),
                ColumnKind::RegionLink => {
                    if cell.is_empty() {
                        return Err(ingest_err(row, format!("missing value in column `{}`", c.name)));
                    }
                    region_link.as_mut().expect("link column").push(cell.to_string());
                }
                ColumnKind::Numeric => {
                    let v = number(false)?;
                    if let ColumnData::Numeric(col) = &mut features[fi].1 {
                        col.push(v);
                    }
                    fi += 1;
                }
                ColumnKind::Categorical => {
                    if let ColumnData::Categorical(col) = &mut features[fi].1 {
                        col.push((!cell.is_empty()).then(|| cell.to_string()));
                    }
                    fi += 1;
                }
            }
        }
        coords.push(GeoPoint::new(xy[0], xy[1]));
    }
    Ok(RawTable {
        schema: schema.clone(),
        ids,
        coords,
        features,
        target,
        region_link,
    })
}

/// Read one table described by `schema` from `dir`.
pub fn ingest_table(dir: &Path, schema: &TableSchema) -> Result<RawTable> {
    let path = dir.join(&schema.file);
    let text = std::fs::read_to_string(&path).map_err(|e| GsneError::io(&path, e))?;
    parse_table(&text, &schema.file, schema)
}

/// Read all tables named in `schema` from `dir`.
pub fn ingest(dir: &Path, schema: &FeatureSchema) -> Result<RawTables> {
    schema.validate()?;
    let houses = ingest_table(dir, &schema.houses)?;
    let regions = ingest_table(dir, &schema.regions)?;
    let schools = schema.schools.as_ref().map(|s| ingest_table(dir, s)).transpose()?;
    let stations = schema.stations.as_ref().map(|s| ingest_table(dir, s)).transpose()?;
    log::info!(
        "ingested {} houses, {} regions, {} schools, {} stations",
        houses.len(),
        regions.len(),
        schools.as_ref().map_or(0, RawTable::len),
        stations.as_ref().map_or(0, RawTable::len)
    );
    Ok(RawTables {
        schema: schema.clone(),
        houses,
        regions,
        schools,
        stations,
    })
}

/// Read `schema.json` and the tables it names from `dir`.
pub fn ingest_dir(dir: &Path) -> Result<RawTables> {
    let schema = FeatureSchema::read(&dir.join("schema.json"))?;
    ingest(dir, &schema)
}
