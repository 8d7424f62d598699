//! Downstream price regression: regressors, metrics, reports and bootstrap
//! intervals comparing raw house features with embedding-augmented ones.

mod gbt;
mod linear;
pub mod metrics;
mod report;

pub use gbt::{fit_gbt, GbtModel, GbtParams, Tree};
pub use linear::{
    fit_kernel_ridge, fit_kernel_ridge_offset, fit_ridge, median_pairwise_distance, rbf_gram, sq_distances,
    KernelRidgeModel, RidgeModel,
};
pub use metrics::{mae, rmse};
pub use report::{AblationRow, BootstrapRow, EvalReport, GroupScore, ReportRow};

use serde::{Deserialize, Serialize};

use crate::dataprep::{split, Split};
use crate::error::{GsneError, Result};
use crate::exec::Execution;
use crate::linalg::Matrix;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorSpec {
    Ridge { lambda: f64 },
    /// `bandwidth: None` uses the median pairwise distance of the training rows.
    KernelRidge { lambda: f64, bandwidth: Option<f64> },
    Gbt(GbtParams),
}

impl RegressorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RegressorSpec::Ridge { .. } => "ridge",
            RegressorSpec::KernelRidge { .. } => "krr",
            RegressorSpec::Gbt(_) => "gbt",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RegressorSpec::Ridge { lambda } | RegressorSpec::KernelRidge { lambda, .. } if !(lambda > 0.0) => {
                Err(GsneError::Config(format!("{} penalty must be positive", self.name())))
            }
            RegressorSpec::KernelRidge {
                bandwidth: Some(h), ..
            } if !(h > 0.0) => Err(GsneError::Config("kernel bandwidth must be positive".into())),
            RegressorSpec::Gbt(p) => p.validate(),
            _ => Ok(()),
        }
    }
}

/// Default hyperparameters for each regressor kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorDefaults {
    pub ridge_lambda: f64,
    pub krr_lambda: f64,
    pub krr_bandwidth: Option<f64>,
    pub gbt: GbtParams,
}

impl Default for RegressorDefaults {
    fn default() -> Self {
        RegressorDefaults {
            ridge_lambda: 1.0,
            krr_lambda: 0.1,
            krr_bandwidth: None,
            gbt: GbtParams::default(),
        }
    }
}

impl RegressorDefaults {
    /// Specs for a comma-separated list such as `ridge,krr,gbt`.
    pub fn parse_list(&self, names: &str) -> Result<Vec<RegressorSpec>> {
        names
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|n| match n {
                "ridge" => Ok(RegressorSpec::Ridge {
                    lambda: self.ridge_lambda,
                }),
                "krr" | "kernel_ridge" => Ok(RegressorSpec::KernelRidge {
                    lambda: self.krr_lambda,
                    bandwidth: self.krr_bandwidth,
                }),
                "gbt" => Ok(RegressorSpec::Gbt(self.gbt)),
                other => Err(GsneError::Config(format!("unknown regressor `{other}` (ridge, krr, gbt)"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Ridge(RidgeModel),
    KernelRidge(KernelRidgeModel),
    Gbt(GbtModel),
}

impl FittedModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        match self {
            FittedModel::Ridge(m) => m.predict(x),
            FittedModel::KernelRidge(m) => m.predict(x),
            FittedModel::Gbt(m) => m.predict(x),
        }
    }
}

/// Fit `spec` on `(x, y)`. Kernel ridge is fitted to targets centred on
/// their training mean.
pub fn fit(spec: &RegressorSpec, x: &Matrix, y: &[f64], seed: u64) -> Result<FittedModel> {
    spec.validate()?;
    Ok(match *spec {
        RegressorSpec::Ridge { lambda } => FittedModel::Ridge(fit_ridge(x, y, lambda)?),
        RegressorSpec::KernelRidge { lambda, bandwidth } => {
            let h = bandwidth.unwrap_or_else(|| median_pairwise_distance(x));
            let offset = metrics::mean(y);
            FittedModel::KernelRidge(fit_kernel_ridge_offset(x, y, h, lambda, offset)?)
        }
        RegressorSpec::Gbt(p) => FittedModel::Gbt(fit_gbt(x, y, &p, seed)?),
    })
}

/// A named design matrix with one row per house, in house-table order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub name: String,
    pub matrix: Matrix,
}

/// Test-set MAE of `spec` fitted on the `train` rows.
pub fn test_mae(features: &Matrix, y: &[f64], sp: &Split, spec: &RegressorSpec, seed: u64) -> Result<f64> {
    let (pred, truth) = fit_predict(features, y, sp, spec, seed)?;
    mae(&truth, &pred)
}

fn fit_predict(features: &Matrix, y: &[f64], sp: &Split, spec: &RegressorSpec, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let xtr = features.select_rows(&sp.train);
    let ytr: Vec<f64> = sp.train.iter().map(|&i| y[i]).collect();
    let model = fit(spec, &xtr, &ytr, seed)?;
    let pred = model.predict(&features.select_rows(&sp.test));
    if pred.iter().any(|p| !p.is_finite()) {
        return Err(GsneError::Numeric(format!("{} produced non-finite predictions", spec.name())));
    }
    Ok((pred, sp.test.iter().map(|&i| y[i]).collect()))
}

fn score(truth: &[f64], pred: &[f64]) -> Result<GroupScore> {
    Ok(GroupScore {
        count: truth.len(),
        mae: mae(truth, pred)?,
        rmse: rmse(truth, pred)?,
    })
}

/// Quartile (0..4) of each test row by rank of its true value; ties broken by
/// position so the four groups have equal size up to one row.
pub fn quartile_of(truth: &[f64]) -> Vec<usize> {
    let n = truth.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| truth[a].total_cmp(&truth[b]).then(a.cmp(&b)));
    let mut q = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        q[i] = rank * 4 / n;
    }
    q
}

/// Fit every regressor on every feature set and score the test rows overall,
/// by price quartile, and on 3-sigma outliers of the training distribution.
pub fn evaluate(
    sets: &[FeatureSet],
    specs: &[RegressorSpec],
    y: &[f64],
    sp: &Split,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    for s in sets {
        if s.matrix.rows() != y.len() {
            return Err(GsneError::Evaluation(format!(
                "feature set {} has {} rows for {} targets",
                s.name,
                s.matrix.rows(),
                y.len()
            )));
        }
    }
    let ytr: Vec<f64> = sp.train.iter().map(|&i| y[i]).collect();
    let (mu, sd) = (metrics::mean(&ytr), metrics::std_dev(&ytr));
    let truth: Vec<f64> = sp.test.iter().map(|&i| y[i]).collect();
    let quart = quartile_of(&truth);
    let outlier: Vec<bool> = truth.iter().map(|t| (t - mu).abs() > 3.0 * sd).collect();
    let cells: Vec<(usize, usize)> = (0..sets.len()).flat_map(|a| (0..specs.len()).map(move |b| (a, b))).collect();
    let rows = exec
        .map(cells.len(), |c| {
            let (a, b) = cells[c];
            let (pred, _) = fit_predict(&sets[a].matrix, y, sp, &specs[b], seed)?;
            let pick = |keep: &dyn Fn(usize) -> bool| -> (Vec<f64>, Vec<f64>) {
                (0..truth.len()).filter(|&i| keep(i)).map(|i| (truth[i], pred[i])).unzip()
            };
            let quartiles = (0..4)
                .map(|q| {
                    let (t, p) = pick(&|i| quart[i] == q);
                    score(&t, &p)
                })
                .collect::<Result<Vec<_>>>()?;
            let (t, p) = pick(&|i| outlier[i]);
            let outliers = if t.is_empty() { None } else { Some(score(&t, &p)?) };
            Ok(ReportRow {
                feature_set: sets[a].name.clone(),
                regressor: specs[b].name().to_string(),
                overall: score(&truth, &pred)?,
                quartiles,
                outliers,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        rows,
        outlier_threshold: 3.0 * sd,
        ..EvalReport::default()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapCi {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub samples: Vec<f64>,
}

/// Percentile interval of test MAE over `replicates` seeded stratified
/// train/test resplits of all rows.
pub fn bootstrap_ci(
    features: &Matrix,
    y: &[f64],
    spec: &RegressorSpec,
    replicates: usize,
    level: f64,
    train_fraction: f64,
    seed: u64,
    exec: Execution,
) -> Result<BootstrapCi> {
    if replicates < 100 {
        return Err(GsneError::Input("bootstrap needs at least 100 replicates".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(GsneError::Input("confidence level must lie in (0, 1)".into()));
    }
    let samples = exec
        .map(replicates, |r| {
            let s = derive_seed(seed, r as u64);
            let sp = split(y, train_fraction, s, true)?;
            test_mae(features, y, &sp, spec, s)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let alpha = 1.0 - level;
    Ok(BootstrapCi {
        level,
        lower: metrics::quantile(&samples, alpha / 2.0),
        upper: metrics::quantile(&samples, 1.0 - alpha / 2.0),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn linear_data(n: usize, noise: f64) -> (Matrix, Vec<f64>) {
        let mut r = crate::rng::SeededRng::new(1, 0);
        let x = Matrix::from_vec(n, 2, (0..2 * n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let y = (0..n)
            .map(|i| 1.0 + 2.0 * x.row(i)[0] - x.row(i)[1] + noise * r.random_range(-1.0..1.0))
            .collect();
        (x, y)
    }

    #[test]
    fn identical_sets_give_identical_rows_and_quartiles_average_out() {
        let (x, y) = linear_data(200, 0.3);
        let sp = split(&y, 0.8, 0, true).unwrap();
        let sets = vec![
            FeatureSet { name: "a".into(), matrix: x.clone() },
            FeatureSet { name: "b".into(), matrix: x },
        ];
        let specs = RegressorDefaults::default().parse_list("ridge,krr,gbt").unwrap();
        let rep = evaluate(&sets, &specs, &y, &sp, 0, Execution::Parallel).unwrap();
        assert_eq!(rep.rows.len(), 6);
        for k in 0..3 {
            assert_eq!(rep.rows[k].overall, rep.rows[k + 3].overall);
        }
        for row in &rep.rows {
            let n: usize = row.quartiles.iter().map(|q| q.count).sum();
            let w: f64 = row.quartiles.iter().map(|q| q.mae * q.count as f64).sum::<f64>() / n as f64;
            assert!((w - row.overall.mae).abs() < 1e-12);
            assert!(row.overall.mae <= row.overall.rmse);
        }
    }

    #[test]
    fn bootstrap_interval_is_degenerate_for_exact_model() {
        let (x, y) = linear_data(100, 0.0);
        let spec = RegressorSpec::Ridge { lambda: 1e-12 };
        let ci = bootstrap_ci(&x, &y, &spec, 100, 0.95, 0.8, 3, Execution::Parallel).unwrap();
        assert!(ci.upper - ci.lower < 1e-6);
        let again = bootstrap_ci(&x, &y, &spec, 100, 0.95, 0.8, 3, Execution::Sequential).unwrap();
        assert_eq!(ci, again);
        assert!(bootstrap_ci(&x, &y, &spec, 99, 0.95, 0.8, 3, Execution::Sequential).is_err());
    }

    #[test]
    fn bootstrap_interval_uses_percentiles() {
        let (x, y) = linear_data(120, 0.5);
        let spec = RegressorSpec::Ridge { lambda: 1.0 };
        let ci = bootstrap_ci(&x, &y, &spec, 200, 0.95, 0.8, 9, Execution::Parallel).unwrap();
        assert_eq!(ci.lower, metrics::quantile(&ci.samples, 0.025));
        assert_eq!(ci.upper, metrics::quantile(&ci.samples, 0.975));
        assert!(ci.lower < ci.upper);
    }

    #[test]
    fn regressor_names() {
        let d = RegressorDefaults::default();
        assert!(d.parse_list("ridge,lasso").is_err());
        let specs = d.parse_list("gbt, krr").unwrap();
        assert_eq!(specs.iter().map(|s| s.name()).collect::<Vec<_>>(), ["gbt", "krr"]);
    }

    #[test]
    fn quartiles_split_evenly() {
        let q = quartile_of(&[5.0, 1.0, 3.0, 2.0, 4.0, 0.0, 7.0, 6.0]);
        assert_eq!(q, vec![2, 0, 1, 1, 2, 0, 3, 3]);
    }
}
