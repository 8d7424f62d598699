//! Column schema side file describing the four input tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GsneError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Coordinate,
    Target,
    Id,
    RegionLink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Fixed category list; when absent it is learned from training rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind,
            vocabulary: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSchema {
    pub file: String,
    pub columns: Vec<ColumnSpec>,
}

impl TableSchema {
    pub fn of_kind(&self, kind: ColumnKind) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(move |c| c.kind == kind)
    }

    fn validate(&self, table: &str, is_houses: bool) -> Result<()> {
        let count = |k| self.of_kind(k).count();
        let err = |m: String| Err(GsneError::Schema(format!("table {table}: {m}")));
        if count(ColumnKind::Id) != 1 {
            return err("exactly one id column is required".into());
        }
        if count(ColumnKind::Coordinate) != 2 {
            return err("exactly two coordinate columns are required".into());
        }
        match (is_houses, count(ColumnKind::Target), count(ColumnKind::RegionLink)) {
            (true, 1, 1) | (false, 0, 0) => {}
            (true, t, _) if t != 1 => return err(format!("expected exactly one target column, found {t}")),
            (true, _, r) => return err(format!("expected exactly one region_link column, found {r}")),
            (false, _, _) => return err("only the house table may have target or region_link columns".into()),
        }
        let mut names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return err(format!("duplicate column {}", w[0]));
        }
        for c in &self.columns {
            if c.vocabulary.is_some() && c.kind != ColumnKind::Categorical {
                return err(format!("column {} has a vocabulary but is not categorical", c.name));
            }
        }
        Ok(())
    }
}

/// Schemas of the house table and the three point-of-interest tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    pub houses: TableSchema,
    pub regions: TableSchema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schools: Option<TableSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stations: Option<TableSchema>,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        self.houses.validate("houses", true)?;
        self.regions.validate("regions", false)?;
        if let Some(s) = &self.schools {
            s.validate("schools", false)?;
        }
        if let Some(s) = &self.stations {
            s.validate("stations", false)?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GsneError::io(path, e))?;
        let s: FeatureSchema =
            serde_json::from_str(&text).map_err(|e| GsneError::Schema(format!("{}: {e}", path.display())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| GsneError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn houses() -> TableSchema {
        TableSchema {
            file: "houses.csv".into(),
            columns: vec![
                ColumnSpec::new("id", ColumnKind::Id),
                ColumnSpec::new("x", ColumnKind::Coordinate),
                ColumnSpec::new("y", ColumnKind::Coordinate),
                ColumnSpec::new("region_id", ColumnKind::RegionLink),
                ColumnSpec::new("price", ColumnKind::Target),
                ColumnSpec::new("rooms", ColumnKind::Numeric),
            ],
        }
    }

    fn poi(file: &str) -> TableSchema {
        TableSchema {
            file: file.into(),
            columns: vec![
                ColumnSpec::new("id", ColumnKind::Id),
                ColumnSpec::new("x", ColumnKind::Coordinate),
                ColumnSpec::new("y", ColumnKind::Coordinate),
            ],
        }
    }

    #[test]
    fn valid_schema_round_trips_through_json() {
        let s = FeatureSchema {
            houses: houses(),
            regions: poi("regions.csv"),
            schools: Some(poi("schools.csv")),
            stations: None,
        };
        s.validate().unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<FeatureSchema>(&text).unwrap(), s);
    }

    #[test]
    fn house_table_needs_one_target() {
        let mut h = houses();
        h.columns.retain(|c| c.kind != ColumnKind::Target);
        let s = FeatureSchema {
            houses: h,
            regions: poi("r.csv"),
            schools: None,
            stations: None,
        };
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("target"), "{err}");
    }

    #[test]
    fn coordinates_must_come_in_pairs() {
        let mut r = poi("r.csv");
        r.columns.pop();
        let s = FeatureSchema {
            houses: houses(),
            regions: r,
            schools: None,
            stations: None,
        };
        assert!(matches!(s.validate(), Err(GsneError::Schema(_))));
    }
}
