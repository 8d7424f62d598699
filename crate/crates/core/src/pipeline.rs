//! End-to-end helpers joining data preparation, graph construction, training
//! and evaluation.

use std::collections::HashMap;

use crate::config::{EvalConfig, FEATURE_SETS};
use crate::dataprep::{Prepared, RawTables};
use crate::error::{GsneError, Result};
use crate::eval::{bootstrap_ci, evaluate, AblationRow, BootstrapRow, EvalReport, FeatureSet, RegressorSpec};
use crate::exec::Execution;
use crate::geo_graph::{build_graph, EdgeSetKind, GraphArtifact, GraphConfig, MultipartiteGraph, PartitionId};
use crate::linalg::Matrix;
use crate::objective::Order;
use crate::trainer::{export_embeddings, train, EmbeddingTable, TrainConfig, TrainState};

/// Build the graph of the training houses and all points of interest.
pub fn build_artifact(prepared: &Prepared, config: &GraphConfig) -> Result<GraphArtifact> {
    let graph = build_graph(prepared.graph_input.clone(), config)?;
    Ok(GraphArtifact {
        graph,
        config: config.clone(),
        heldout: Some(prepared.heldout.clone()),
    })
}

/// Train on `artifact` and embed every node plus the held-out houses.
pub fn embed(artifact: &GraphArtifact, config: &TrainConfig) -> Result<(TrainState, EmbeddingTable)> {
    let state = train(&artifact.graph, config)?;
    let table = export_embeddings(&state, &artifact.graph, artifact.heldout.as_ref(), config.execution)?;
    Ok((state, table))
}

/// Embedding rows of every house, in house-table order.
fn house_embeddings(tables: &RawTables, table: &EmbeddingTable, include_variance: bool) -> Result<Matrix> {
    let by_id = table.by_id(PartitionId::HOUSES);
    let missing: Vec<&str> = tables
        .houses
        .ids
        .iter()
        .map(String::as_str)
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).copied().collect();
        return Err(GsneError::Evaluation(format!(
            "{} houses have no embedding: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > shown.len() { ", ..." } else { "" }
        )));
    }
    let rows: Vec<Vec<f64>> = tables
        .houses
        .ids
        .iter()
        .map(|id| {
            let r = by_id[id.as_str()];
            let mut v = r.mu.clone();
            if include_variance {
                v.extend_from_slice(&r.var);
            }
            v
        })
        .collect();
    Matrix::from_rows(&rows)
}

/// Column ranges of each proximity order inside an embedding row.
fn order_columns(orders: &[Order], width: usize, include_variance: bool) -> Result<HashMap<Order, Vec<usize>>> {
    if orders.is_empty() || !width.is_multiple_of(orders.len()) {
        return Err(GsneError::Evaluation(format!(
            "embedding width {width} does not split into {} proximity blocks",
            orders.len()
        )));
    }
    let l = width / orders.len();
    let mut out = HashMap::new();
    for (k, &o) in orders.iter().enumerate() {
        let mut cols: Vec<usize> = (k * l..(k + 1) * l).collect();
        if include_variance {
            cols.extend((k * l..(k + 1) * l).map(|c| width + c));
        }
        out.insert(o, cols);
    }
    Ok(out)
}

fn select_columns(m: &Matrix, cols: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), cols.len());
    for i in 0..m.rows() {
        let src = m.row(i);
        for (dst, &c) in out.row_mut(i).iter_mut().zip(cols) {
            *dst = src[c];
        }
    }
    out
}

/// Feature sets available for an embedding table holding `orders` (first
/// order before second when both are present).
pub fn feature_sets(
    prepared: &Prepared,
    tables: &RawTables,
    table: &EmbeddingTable,
    orders: &[Order],
    include_variance: bool,
) -> Result<Vec<FeatureSet>> {
    let emb = house_embeddings(tables, table, include_variance)?;
    let cols = order_columns(orders, table.width(), include_variance)?;
    let raw = &prepared.house_features;
    let mut sets = vec![FeatureSet {
        name: "raw".into(),
        matrix: raw.clone(),
    }];
    let mut add = |name: &str, e: Matrix| -> Result<()> {
        sets.push(FeatureSet {
            name: name.into(),
            matrix: raw.hstack(&e)?,
        });
        Ok(())
    };
    if let Some(c) = cols.get(&Order::First) {
        add("raw+gsne_1st", select_columns(&emb, c))?;
    }
    if let Some(c) = cols.get(&Order::Second) {
        add("raw+gsne_2nd", select_columns(&emb, c))?;
    }
    if orders.len() == 2 {
        add("raw+gsne_both", emb.clone())?;
    }
    sets.push(FeatureSet {
        name: "gsne_only".into(),
        matrix: emb,
    });
    Ok(sets)
}

/// Keep the sets named in a comma-separated list (all when empty).
pub fn filter_sets(sets: Vec<FeatureSet>, names: &str) -> Result<Vec<FeatureSet>> {
    let wanted: Vec<&str> = names.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    for w in &wanted {
        if !FEATURE_SETS.contains(w) {
            return Err(GsneError::Config(format!(
                "unknown feature set `{w}` ({})",
                FEATURE_SETS.join(", ")
            )));
        }
        if !sets.iter().any(|s| s.name == *w) {
            return Err(GsneError::Config(format!(
                "feature set `{w}` is not available for this embedding"
            )));
        }
    }
    if wanted.is_empty() {
        return Ok(sets);
    }
    Ok(sets.into_iter().filter(|s| wanted.contains(&s.name.as_str())).collect())
}

/// The raw+embedding design matrix: all mean columns of every order.
pub fn augmented(prepared: &Prepared, tables: &RawTables, table: &EmbeddingTable, include_variance: bool) -> Result<Matrix> {
    prepared
        .house_features
        .hstack(&house_embeddings(tables, table, include_variance)?)
}

/// Evaluate the configured feature sets and regressors on the prepared split.
pub fn evaluate_embeddings(
    prepared: &Prepared,
    tables: &RawTables,
    table: &EmbeddingTable,
    orders: &[Order],
    config: &EvalConfig,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    let sets = filter_sets(
        feature_sets(prepared, tables, table, orders, config.include_variance)?,
        &config.feature_sets,
    )?;
    let specs = config.models.parse_list(&config.regressors)?;
    let report = evaluate(&sets, &specs, &prepared.log_price, &prepared.split, seed, exec)?;
    report.validate()?;
    Ok(report)
}

/// Train on each house-to-POI edge set alone and on every edge set, scoring
/// raw+embedding features with `spec`. The first row is the raw baseline.
pub fn poi_ablation(
    prepared: &Prepared,
    tables: &RawTables,
    artifact: &GraphArtifact,
    train_config: &TrainConfig,
    spec: &RegressorSpec,
    include_variance: bool,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    let y = &prepared.log_price;
    let sp = &prepared.split;
    let score = |name: &str, x: &Matrix| -> Result<AblationRow> {
        let report = evaluate(
            &[FeatureSet {
                name: name.into(),
                matrix: x.clone(),
            }],
            std::slice::from_ref(spec),
            y,
            sp,
            seed,
            Execution::Sequential,
        )?;
        Ok(AblationRow {
            name: name.into(),
            regressor: spec.name().into(),
            overall: report.rows[0].overall,
        })
    };
    let mut rows = vec![score("raw", &prepared.house_features)?];
    let mut runs: Vec<(String, Vec<EdgeSetKind>)> = Vec::new();
    for poi in [PartitionId::REGIONS, PartitionId::SCHOOLS, PartitionId::STATIONS] {
        let kind = EdgeSetKind::house_to(poi).expect("point-of-interest partition");
        if artifact.graph.edge_set(kind).is_some_and(|s| !s.is_empty()) {
            runs.push((poi.name().to_string(), vec![kind]));
        }
    }
    runs.push(("all".into(), Vec::new()));
    for (name, filter) in runs {
        let cfg = TrainConfig {
            edge_sets: filter,
            ..train_config.clone()
        };
        let (_, table) = embed(artifact, &cfg)?;
        rows.push(score(&name, &augmented(prepared, tables, &table, include_variance)?)?);
    }
    Ok(rows)
}

/// Graph of the training houses for an in-memory city, with connectivity
/// checked.
pub fn graph_of(prepared: &Prepared, config: &GraphConfig) -> Result<MultipartiteGraph> {
    build_graph(prepared.graph_input.clone(), config)
}

/// Bootstrap intervals for every feature set and regressor pair.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_rows(
    sets: &[FeatureSet],
    specs: &[RegressorSpec],
    y: &[f64],
    replicates: usize,
    level: f64,
    train_fraction: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<BootstrapRow>> {
    let mut rows = Vec::new();
    for set in sets {
        for spec in specs {
            let ci = bootstrap_ci(&set.matrix, y, spec, replicates, level, train_fraction, seed, exec)?;
            rows.push(BootstrapRow {
                feature_set: set.name.clone(),
                regressor: spec.name().into(),
                level,
                lower: ci.lower,
                upper: ci.upper,
                replicates,
            });
        }
    }
    Ok(rows)
}
