//! Evaluation report: aligned text, CSV and JSON renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GsneError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub count: usize,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub feature_set: String,
    pub regressor: String,
    pub overall: GroupScore,
    /// Test rows grouped by quartile of the true log-price, lowest first.
    pub quartiles: Vec<GroupScore>,
    /// Test rows more than three training standard deviations from the
    /// training mean; absent when there are none.
    pub outliers: Option<GroupScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `raw`, a single point-of-interest type, or `all`.
    pub name: String,
    pub regressor: String,
    pub overall: GroupScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub feature_set: String,
    pub regressor: String,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub outlier_threshold: f64,
    pub ablation: Vec<AblationRow>,
    pub bootstrap: Vec<BootstrapRow>,
}

const FOOTER: &str = "Scores are on ln(price). Averaged and stacked ensembles of several regressors are not reported.";

impl EvalReport {
    pub fn row(&self, feature_set: &str, regressor: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.feature_set == feature_set && r.regressor == regressor)
    }

    fn feature_sets(&self) -> Vec<&str> {
        let mut v: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.feature_set.as_str()) {
                v.push(&r.feature_set);
            }
        }
        v
    }

    fn regressors(&self) -> Vec<&str> {
        let mut v: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.regressor.as_str()) {
                v.push(&r.regressor);
            }
        }
        v
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let sets = self.feature_sets();
        if !self.rows.is_empty() {
            let _ = writeln!(out, "Test error by regressor and feature set (MAE / RMSE)");
            let _ = write!(out, "{:<10}", "regressor");
            for s in &sets {
                let _ = write!(out, " {:>21}", s);
            }
            out.push('\n');
            for reg in self.regressors() {
                let _ = write!(out, "{reg:<10}");
                for s in &sets {
                    match self.row(s, reg) {
                        Some(r) => {
                            let _ = write!(out, " {:>10.4} / {:>8.4}", r.overall.mae, r.overall.rmse);
                        }
                        None => {
                            let _ = write!(out, " {:>21}", "-");
                        }
                    }
                }
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "\nMAE by price quartile and on outliers (|z| > {:.4})",
                self.outlier_threshold
            );
            let _ = writeln!(
                out,
                "{:<16} {:<10} {:>9} {:>9} {:>9} {:>9} {:>15}",
                "feature_set", "regressor", "Q1", "Q2", "Q3", "Q4", "outliers (n)"
            );
            for r in &self.rows {
                let _ = write!(out, "{:<16} {:<10}", r.feature_set, r.regressor);
                for q in &r.quartiles {
                    let _ = write!(out, " {:>9.4}", q.mae);
                }
                match &r.outliers {
                    Some(o) => {
                        let _ = writeln!(out, " {:>9.4} ({:>3})", o.mae, o.count);
                    }
                    None => {
                        let _ = writeln!(out, " {:>15}", "- (0)");
                    }
                }
            }
        }
        if !self.ablation.is_empty() {
            let _ = writeln!(out, "\nPoint-of-interest ablation");
            let _ = writeln!(out, "{:<16} {:<10} {:>9} {:>9}", "edge_sets", "regressor", "MAE", "RMSE");
            for a in &self.ablation {
                let _ = writeln!(
                    out,
                    "{:<16} {:<10} {:>9.4} {:>9.4}",
                    a.name, a.regressor, a.overall.mae, a.overall.rmse
                );
            }
        }
        if !self.bootstrap.is_empty() {
            let _ = writeln!(out, "\nBootstrap intervals of test MAE");
            let _ = writeln!(
                out,
                "{:<16} {:<10} {:>6} {:>9} {:>9} {:>10}",
                "feature_set", "regressor", "level", "lower", "upper", "replicates"
            );
            for b in &self.bootstrap {
                let _ = writeln!(
                    out,
                    "{:<16} {:<10} {:>6.3} {:>9.4} {:>9.4} {:>10}",
                    b.feature_set, b.regressor, b.level, b.lower, b.upper, b.replicates
                );
            }
        }
        let _ = writeln!(out, "\n{FOOTER}");
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["section", "feature_set", "regressor", "group", "count", "mae", "rmse", "lower", "upper"])?;
        let num = |v: f64| format!("{v:?}");
        for r in &self.rows {
            let mut groups = vec![("overall".to_string(), r.overall)];
            groups.extend(r.quartiles.iter().enumerate().map(|(i, q)| (format!("q{}", i + 1), *q)));
            groups.extend(r.outliers.map(|o| ("outliers".to_string(), o)));
            for (g, s) in groups {
                w.write_record([
                    "metrics",
                    &r.feature_set,
                    &r.regressor,
                    &g,
                    &s.count.to_string(),
                    &num(s.mae),
                    &num(s.rmse),
                    "",
                    "",
                ])?;
            }
        }
        for a in &self.ablation {
            w.write_record([
                "ablation",
                &a.name,
                &a.regressor,
                "overall",
                &a.overall.count.to_string(),
                &num(a.overall.mae),
                &num(a.overall.rmse),
                "",
                "",
            ])?;
        }
        for b in &self.bootstrap {
            w.write_record([
                "bootstrap",
                &b.feature_set,
                &b.regressor,
                &num(b.level),
                &b.replicates.to_string(),
                "",
                "",
                &num(b.lower),
                &num(b.upper),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| GsneError::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Write `report.txt`, `report.csv` and `report.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| GsneError::io(dir, e))?;
        let files = [
            ("report.txt", self.to_text()),
            ("report.csv", self.to_csv()?),
            ("report.json", serde_json::to_string_pretty(self)? + "\n"),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| GsneError::io(&path, e))?;
        }
        Ok(())
    }

    /// Check the invariants every report must satisfy.
    pub fn validate(&self) -> Result<()> {
        let groups = self
            .rows
            .iter()
            .flat_map(|r| std::iter::once(&r.overall).chain(&r.quartiles).chain(r.outliers.as_ref()))
            .chain(self.ablation.iter().map(|a| &a.overall));
        for g in groups {
            if !(g.mae.is_finite() && g.rmse.is_finite()) || g.mae > g.rmse * (1.0 + 1e-12) {
                return Err(GsneError::Evaluation(format!(
                    "invalid score pair mae={} rmse={}",
                    g.mae, g.rmse
                )));
            }
        }
        Ok(())
    }
}
