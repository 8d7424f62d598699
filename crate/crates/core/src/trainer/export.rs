//! Embedding tables: every node's Gaussian moments as a CSV.

use std::path::Path;

use super::TrainState;
use crate::encoder::{BatchEmbeddings, Role};
use crate::error::{GsneError, Result};
use crate::exec::Execution;
use crate::geo_graph::{MultipartiteGraph, Partition, PartitionId};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub id: String,
    pub partition: PartitionId,
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

/// Rows ordered by partition, then local index. When both proximity models
/// are present the first-order moments come before the second-order ones.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingTable {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.mu.len())
    }

    pub fn to_csv_string(&self) -> String {
        let w = self.width();
        let mut out = String::from("id,partition");
        for i in 0..w {
            out.push_str(&format!(",mu_{i}"));
        }
        for i in 0..w {
            out.push_str(&format!(",var_{i}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.id);
            out.push(',');
            out.push_str(r.partition.name());
            for v in r.mu.iter().chain(&r.var) {
                // shortest representation that round-trips exactly
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| GsneError::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| GsneError::load(path, e.to_string()))?;
        let headers = rdr.headers()?.clone();
        let n_mu = headers.iter().filter(|h| h.starts_with("mu_")).count();
        let n_var = headers.iter().filter(|h| h.starts_with("var_")).count();
        if headers.get(0) != Some("id") || headers.get(1) != Some("partition") || n_mu != n_var {
            return Err(GsneError::load(
                path,
                "expected header id,partition,mu_0..,var_0.. with equal mean and variance columns",
            ));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |m: String| GsneError::load(path, format!("row {}: {m}", i + 2));
            let partition = PartitionId::from_name(&rec[1]).ok_or_else(|| bad(format!("unknown partition {}", &rec[1])))?;
            let vals = rec
                .iter()
                .skip(2)
                .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number '{s}'"))))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != 2 * n_mu {
                return Err(bad("wrong number of columns".into()));
            }
            rows.push(EmbeddingRow {
                id: rec[0].to_string(),
                partition,
                mu: vals[..n_mu].to_vec(),
                var: vals[n_mu..].to_vec(),
            });
        }
        Ok(EmbeddingTable { rows })
    }

    /// Rows of one partition keyed by id.
    pub fn by_id(&self, partition: PartitionId) -> std::collections::HashMap<&str, &EmbeddingRow> {
        self.rows
            .iter()
            .filter(|r| r.partition == partition)
            .map(|r| (r.id.as_str(), r))
            .collect()
    }
}

fn encode_all(state: &TrainState, p: &Partition, exec: Execution) -> Result<Vec<BatchEmbeddings>> {
    state
        .models
        .iter()
        .map(|m| m.params.encode_matrix(p.id, &p.attrs, Role::Attribute, exec))
        .collect()
}

/// Attribute-encoder embeddings of every node in `graph`, followed by the
/// `heldout` houses, which are encoded inductively.
pub fn export_embeddings(
    state: &TrainState,
    graph: &MultipartiteGraph,
    heldout: Option<&Partition>,
    exec: Execution,
) -> Result<EmbeddingTable> {
    let mut parts: Vec<&Partition> = graph.partitions().iter().collect();
    // held-out houses go after all graph nodes of every partition
    if let Some(h) = heldout {
        parts.push(h);
    }
    let mut rows = Vec::new();
    for p in parts {
        if p.is_empty() {
            continue;
        }
        let enc = encode_all(state, p, exec)?;
        for i in 0..p.len() {
            let mut mu = Vec::new();
            let mut var = Vec::new();
            for e in &enc {
                mu.extend_from_slice(e.mu.row(i));
                var.extend_from_slice(e.var.row(i));
            }
            rows.push(EmbeddingRow {
                id: p.ids[i].clone(),
                partition: p.id,
                mu,
                var,
            });
        }
    }
    Ok(EmbeddingTable { rows })
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use crate::gradcheck::{toy_graph, toy_hyper};
    use crate::linalg::Matrix;

    fn state(proximity: Proximity) -> (MultipartiteGraph, TrainState) {
        let g = toy_graph(0).unwrap();
        let cfg = TrainConfig {
            proximity,
            iterations: 10,
            batch_size: 4,
            negatives: 1,
            encoder: toy_hyper(),
            loss_log_every: 0,
            ..TrainConfig::default()
        };
        let s = train(&g, &cfg).unwrap();
        (g, s)
    }

    #[test]
    fn both_concatenates_moments() {
        let (g, s) = state(Proximity::Both);
        let t = export_embeddings(&s, &g, None, Execution::Sequential).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.width(), 8);
        let first = export_embeddings(
            &TrainState {
                models: vec![s.models[0].clone()],
                ..s.clone()
            },
            &g,
            None,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(t.rows[0].mu[..4], first.rows[0].mu[..]);
        let header = t.to_csv_string().lines().next().unwrap().to_string();
        assert!(header.starts_with("id,partition,mu_0,"));
        assert!(header.ends_with(",var_7"));
    }

    #[test]
    fn csv_round_trip_and_idempotent() {
        let (g, s) = state(Proximity::Second);
        let dir = tempfile::tempdir().unwrap();
        let t = export_embeddings(&s, &g, None, Execution::Parallel).unwrap();
        let path = dir.path().join("e.csv");
        t.write_csv(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        export_embeddings(&s, &g, None, Execution::Sequential)
            .unwrap()
            .write_csv(&path)
            .unwrap();
        assert_eq!(bytes, std::fs::read(&path).unwrap());
        assert_eq!(EmbeddingTable::read_csv(&path).unwrap(), t);
    }

    #[test]
    fn heldout_houses_are_appended() {
        let (g, s) = state(Proximity::First);
        let h = Partition::new(
            PartitionId::HOUSES,
            vec!["new".into()],
            vec![crate::geo_graph::GeoPoint::new(0.0, 0.0)],
            Matrix::from_vec(1, 3, vec![0.1, 0.2, 0.3]).unwrap(),
        )
        .unwrap();
        let t = export_embeddings(&s, &g, Some(&h), Execution::Sequential).unwrap();
        let last = t.rows.last().unwrap();
        assert_eq!((last.id.as_str(), last.partition), ("new", PartitionId::HOUSES));
        let want = s.models[0]
            .params
            .encode_features(PartitionId::HOUSES, &[0.1, 0.2, 0.3], Role::Attribute)
            .unwrap();
        assert_eq!(last.mu, want.mu);
    }
}
