//! Parameter sweeps: SA over subspace dimension, GFK over PCA dimension,
//! TCA over `mu`. Each point is scored by 1-NN on the adapted features.

use std::fmt::Write as _;

use super::{nn1_classify, sa_fit, GfkModel, TcaProblem};
use crate::data::MetricsReport;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Transfer components kept by TCA when not overridden.
pub const TCA_DEFAULT_COMPONENTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: &'static str,
    pub param: &'static str,
    pub value: f64,
    pub accuracy: f64,
    pub f1_macro: f64,
}

/// Keeps grid values in `1..=max`, warning about anything dropped.
fn clip_dims(method: &str, grid: &[usize], max: usize) -> Vec<usize> {
    let kept: Vec<usize> = grid.iter().copied().filter(|&d| d >= 1 && d <= max).collect();
    if kept.len() < grid.len() {
        log::warn!(
            "{method}: dropped {} grid values above the feasible maximum {max}",
            grid.len() - kept.len()
        );
    }
    kept
}

/// SA subspace dimensions 1..=300, clipped to `min(Ns−1, Nt−1, D)`.
pub fn sa_grid() -> Vec<usize> {
    (1..=300).collect()
}

/// GFK PCA dimensions 10, 20, …, 100 (clipped to `min(Ns−1, Nt−1, D−1)` when swept).
pub fn gfk_grid() -> Vec<usize> {
    (1..=10).map(|k| 10 * k).collect()
}

/// TCA trade-off values 1..=300.
pub fn tca_grid() -> Vec<f64> {
    (1..=300).map(f64::from).collect()
}

fn score(
    method: &'static str,
    param: &'static str,
    value: f64,
    pred: &[usize],
    truth: &[usize],
    classes: usize,
) -> Result<SweepRow> {
    let report = MetricsReport::evaluate(pred, truth, classes)?;
    Ok(SweepRow {
        method,
        param,
        value,
        accuracy: report.accuracy_percent,
        f1_macro: report.f1_macro,
    })
}

fn nonempty<T>(method: &str, grid: Vec<T>) -> Result<Vec<T>> {
    if grid.is_empty() {
        return Err(Error::Infeasible(format!("{method} grid is empty after clipping to the data rank")));
    }
    Ok(grid)
}

/// Domain data shared by every sweep: source rows with labels, target rows
/// with evaluation labels.
pub struct SweepData<'a> {
    pub xs: &'a Matrix,
    pub ys: &'a [usize],
    pub xt: &'a Matrix,
    pub yt: &'a [usize],
    pub classes: usize,
}

pub fn sweep_sa(data: &SweepData, grid: &[usize]) -> Result<Vec<SweepRow>> {
    let max = (data.xs.rows().min(data.xt.rows()).saturating_sub(1)).min(data.xs.cols());
    let grid = nonempty("sa", clip_dims("sa", grid, max))?;
    grid.into_iter()
        .map(|d| {
            let model = sa_fit(data.xs, data.xt, d)?;
            let zs = model.transform_source(data.xs)?;
            let zt = model.transform_target(data.xt)?;
            let pred = nn1_classify(&zs, data.ys, &zt)?;
            score("sa", "d", d as f64, &pred, data.yt, data.classes)
        })
        .collect()
}

pub fn sweep_gfk(data: &SweepData, grid: &[usize]) -> Result<Vec<SweepRow>> {
    let max = (data.xs.rows().min(data.xt.rows()).saturating_sub(1)).min(data.xs.cols().saturating_sub(1));
    let grid = nonempty("gfk", clip_dims("gfk", grid, max))?;
    grid.into_iter()
        .map(|d| {
            let model = GfkModel::fit(data.xs, data.xt, d)?;
            let zs = model.map_source(data.xs)?;
            let zt = model.map_target(data.xt)?;
            let pred = nn1_classify(&zs, data.ys, &zt)?;
            score("gfk", "d", d as f64, &pred, data.yt, data.classes)
        })
        .collect()
}

pub fn sweep_tca(data: &SweepData, grid: &[f64], components: usize) -> Result<Vec<SweepRow>> {
    let kept: Vec<f64> = grid.iter().copied().filter(|&mu| mu > 0.0 && mu.is_finite()).collect();
    if kept.len() < grid.len() {
        log::warn!("tca: dropped {} non-positive mu values", grid.len() - kept.len());
    }
    let grid = nonempty("tca", kept)?;
    let problem = TcaProblem::new(data.xs, data.xt)?;
    grid.into_iter()
        .map(|mu| {
            let model = problem.solve(mu, components)?;
            let pred = nn1_classify(&model.source_embedding(), data.ys, &model.target_embedding())?;
            score("tca", "mu", mu, &pred, data.yt, data.classes)
        })
        .collect()
}

/// Highest accuracy, earliest row on ties.
pub fn best_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().fold(None, |best: Option<&SweepRow>, r| match best {
        Some(b) if b.accuracy >= r.accuracy => Some(b),
        _ => Some(r),
    })
}

/// `method,param,value,accuracy,f1_macro`.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,param,value,accuracy,f1_macro\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{:.4}",
            r.method, r.param, r.value, r.accuracy, r.f1_macro
        );
    }
    out
}
