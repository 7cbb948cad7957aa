//! Lightweight predictors and the k-fold benchmark that compares selectors.

mod knn;
mod logistic;
pub mod metrics;
mod tree;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_folds, DataError, Dataset, FoldPlan, TargetKind};
use crate::seed::derive_seed;
use crate::selection::{project, select, SelectOptions, Selection, SelectionError, SelectionMethod};
use crate::stats::compensated_sum;

pub use metrics::{accuracy, error_rate, f1_score, rmse};

pub const ACCURACY: &str = "accuracy";
pub const F1: &str = "f1";
pub const RMSE: &str = "rmse";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("train and test feature schemas differ")]
    SchemaMismatch,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value")]
    NonFinite,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model {model} cannot be used with a {target} target")]
    TargetMismatch { model: String, target: &'static str },
    #[error("invalid benchmark: {0}")]
    InvalidBenchmark(String),
    #[error("{method} k={k}{} fold {fold}: {source}", .model.as_ref().map_or(String::new(), |m| format!(" model {m}")))]
    Cell {
        method: String,
        k: usize,
        model: Option<String>,
        fold: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    KnnClassifier { k_neighbors: usize },
    LogisticRegression { learning_rate: f64, epochs: usize, l2: f64 },
    KnnRegressor { k_neighbors: usize },
    DecisionTreeRegressor { max_depth: usize, min_leaf: usize },
}

impl Model {
    pub fn knn_classifier() -> Self {
        Model::KnnClassifier { k_neighbors: 5 }
    }

    pub fn logistic_regression() -> Self {
        Model::LogisticRegression {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
        }
    }

    pub fn knn_regressor() -> Self {
        Model::KnnRegressor { k_neighbors: 5 }
    }

    pub fn decision_tree_regressor() -> Self {
        Model::DecisionTreeRegressor { max_depth: 8, min_leaf: 5 }
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self, Model::KnnClassifier { .. } | Model::LogisticRegression { .. })
    }

    fn validate(&self) -> Result<(), EvalError> {
        let ok = match *self {
            Model::KnnClassifier { k_neighbors } | Model::KnnRegressor { k_neighbors } => k_neighbors >= 1,
            Model::LogisticRegression {
                learning_rate,
                epochs,
                l2,
            } => learning_rate > 0.0 && learning_rate.is_finite() && epochs >= 1 && l2 >= 0.0 && l2.is_finite(),
            Model::DecisionTreeRegressor { min_leaf, .. } => min_leaf >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(EvalError::InvalidModel(self.to_string()))
        }
    }
}

/// `knn:5`, `logreg:0.1:500:0.0001`, `knn-reg:5`, `tree:8:5`. Parsing also
/// accepts the bare name for the defaults.
impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::KnnClassifier { k_neighbors } => write!(f, "knn:{k_neighbors}"),
            Model::LogisticRegression {
                learning_rate,
                epochs,
                l2,
            } => write!(f, "logreg:{learning_rate}:{epochs}:{l2}"),
            Model::KnnRegressor { k_neighbors } => write!(f, "knn-reg:{k_neighbors}"),
            Model::DecisionTreeRegressor { max_depth, min_leaf } => write!(f, "tree:{max_depth}:{min_leaf}"),
        }
    }
}

impl FromStr for Model {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = || EvalError::InvalidModel(s.to_string());
        let arg = |i: usize| args.get(i).copied();
        fn num<T: FromStr>(v: Option<&str>, default: T, bad: impl Fn() -> EvalError) -> Result<T, EvalError> {
            v.map_or(Ok(default), |v| v.parse().map_err(|_| bad()))
        }
        let (model, max_args) = match name {
            "knn" => (Model::KnnClassifier { k_neighbors: num(arg(0), 5, bad)? }, 1),
            "knn-reg" => (Model::KnnRegressor { k_neighbors: num(arg(0), 5, bad)? }, 1),
            "logreg" => (
                Model::LogisticRegression {
                    learning_rate: num(arg(0), 0.1, bad)?,
                    epochs: num(arg(1), 500, bad)?,
                    l2: num(arg(2), 1e-4, bad)?,
                },
                3,
            ),
            "tree" => (
                Model::DecisionTreeRegressor {
                    max_depth: num(arg(0), 8, bad)?,
                    min_leaf: num(arg(1), 5, bad)?,
                },
                2,
            ),
            _ => return Err(bad()),
        };
        if args.len() > max_args {
            return Err(bad());
        }
        model.validate()?;
        Ok(model)
    }
}

/// Per-feature centring and scaling fitted on training rows. Constant
/// features keep scale one and so become identically zero.
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = Vec::with_capacity(d);
        let mut scale = Vec::with_capacity(d);
        for j in 0..d {
            let m = compensated_sum(rows.iter().map(|r| r[j])) / n;
            let var = compensated_sum(rows.iter().map(|r| (r[j] - m) * (r[j] - m))) / n;
            let sd = var.sqrt();
            mean.push(m);
            scale.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    fn apply(&self, rows: &mut [Vec<f64>]) {
        for row in rows {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
    }
}

fn all_rows(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.rows(&(0..ds.n_records()).collect::<Vec<_>>())
}

fn target_label(kind: TargetKind) -> &'static str {
    if kind.is_classification() {
        "class"
    } else {
        "continuous"
    }
}

/// Fit `model` on `train` and predict every record of `test`. Class
/// predictions are returned as class codes.
pub fn fit_predict(model: &Model, train: &Dataset, test: &Dataset) -> Result<Vec<f64>, EvalError> {
    model.validate()?;
    if train.n_records() == 0 {
        return Err(EvalError::EmptyTrain);
    }
    if train.feature_names() != test.feature_names() || train.target_kind() != test.target_kind() {
        return Err(EvalError::SchemaMismatch);
    }
    if model.is_classifier() != train.target_kind().is_classification() {
        return Err(EvalError::TargetMismatch {
            model: model.to_string(),
            target: target_label(train.target_kind()),
        });
    }
    if let Model::KnnClassifier { k_neighbors } | Model::KnnRegressor { k_neighbors } = *model {
        if k_neighbors > train.n_records() {
            return Err(EvalError::InvalidModel(format!(
                "{model} needs at least {k_neighbors} training records, got {}",
                train.n_records()
            )));
        }
    }

    let mut x_train = all_rows(train);
    let mut x_test = all_rows(test);
    let std = Standardizer::fit(&x_train);
    std.apply(&mut x_train);
    std.apply(&mut x_test);
    let classes = train.target_kind().num_classes().unwrap_or(0);
    let labels = train.class_labels();
    let y = train.target().values();

    let preds = match *model {
        Model::KnnClassifier { k_neighbors } => {
            let labels = labels.expect("classification target");
            x_test
                .par_iter()
                .map(|q| knn::classify(&x_train, &labels, q, k_neighbors, classes) as f64)
                .collect()
        }
        Model::KnnRegressor { k_neighbors } => x_test
            .par_iter()
            .map(|q| knn::regress(&x_train, y, q, k_neighbors))
            .collect(),
        Model::LogisticRegression {
            learning_rate,
            epochs,
            l2,
        } => {
            let labels = labels.expect("classification target");
            let fitted = logistic::Logistic::fit(&x_train, &labels, classes, learning_rate, epochs, l2);
            x_test.iter().map(|q| fitted.predict(q) as f64).collect()
        }
        Model::DecisionTreeRegressor { max_depth, min_leaf } => {
            let fitted = tree::RegressionTree::fit(&x_train, y, max_depth, min_leaf);
            x_test.iter().map(|q| fitted.predict(q)).collect()
        }
    };
    Ok(preds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub methods: Vec<SelectionMethod>,
    pub k_list: Vec<usize>,
    pub models: Vec<Model>,
    pub k_folds: usize,
    pub seed: u64,
    /// Select once on the full dataset instead of inside each training fold.
    pub global_selection: bool,
    /// Class code scored by F1.
    pub positive_class: usize,
    pub select: SelectOptions,
}

impl BenchmarkConfig {
    pub fn new(methods: Vec<SelectionMethod>, k_list: Vec<usize>, models: Vec<Model>) -> Self {
        BenchmarkConfig {
            methods,
            k_list,
            models,
            k_folds: 5,
            seed: 0,
            global_selection: false,
            positive_class: 1,
            select: SelectOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub method: String,
    pub k: usize,
    pub model: String,
    pub fold: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub k: usize,
    pub model: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation over folds; zero for a single fold.
    pub std: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSelection {
    pub method: String,
    pub k: usize,
    /// `None` when one selection on the full dataset serves every fold.
    pub fold: Option<usize>,
    pub selection: Selection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub k_folds: usize,
    pub k_list: Vec<usize>,
    pub methods: Vec<SelectionMethod>,
    pub models: Vec<Model>,
    pub bins: usize,
    pub global_selection: bool,
    pub positive_class: usize,
    pub n_records: usize,
    pub n_features: usize,
    pub target_kind: TargetKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub meta: RunMeta,
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    pub selections: Vec<FoldSelection>,
}

/// Mean and sample standard deviation per (method, k, model, metric), in
/// first-appearance order of the rows.
pub fn aggregate(rows: &[Row]) -> Vec<Aggregate> {
    let mut groups: Vec<(Aggregate, Vec<f64>)> = Vec::new();
    for r in rows {
        let key = |a: &Aggregate| a.method == r.method && a.k == r.k && a.model == r.model && a.metric == r.metric;
        match groups.iter_mut().find(|(a, _)| key(a)) {
            Some((_, values)) => values.push(r.value),
            None => groups.push((
                Aggregate {
                    method: r.method.clone(),
                    k: r.k,
                    model: r.model.clone(),
                    metric: r.metric.clone(),
                    mean: 0.0,
                    std: 0.0,
                    folds: 0,
                },
                vec![r.value],
            )),
        }
    }
    groups
        .into_iter()
        .map(|(mut a, values)| {
            let n = values.len() as f64;
            a.mean = compensated_sum(values.iter().copied()) / n;
            a.std = if values.len() > 1 {
                (compensated_sum(values.iter().map(|v| (v - a.mean) * (v - a.mean))) / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            a.folds = values.len();
            a
        })
        .collect()
}

fn classification_metrics(pred: &[f64], truth: &[f64], positive: usize) -> Result<Vec<(&'static str, f64)>, EvalError> {
    Ok(vec![
        (ACCURACY, accuracy(pred, truth)?),
        (F1, f1_score(pred, truth, positive as f64)?),
    ])
}

/// Seed handed to the selector for one (k, fold) cell; `fold = None` is
/// the global selection.
pub fn selection_seed(seed: u64, k: usize, fold: Option<usize>) -> u64 {
    derive_seed(seed, &[1, k as u64, fold.map_or(0, |f| f as u64 + 1)])
}

/// Select features using only the training records of `fold`.
pub fn select_on_fold(
    ds: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    method: &SelectionMethod,
    k: usize,
    cfg: &BenchmarkConfig,
) -> Result<Selection, EvalError> {
    let train = ds.subset_rows(&plan.train_indices(fold))?;
    Ok(select(&train, method, k, selection_seed(cfg.seed, k, Some(fold)), &cfg.select)?)
}

struct Cell<'a> {
    order: usize,
    method: &'a SelectionMethod,
    k: usize,
}

/// k-fold comparison of every (method, k) pair under every model.
///
/// Selection runs on each fold's training records only unless
/// `global_selection` is set. Rows are sorted by method, k, model, fold and
/// metric in configuration order, so the report is independent of thread
/// scheduling.
pub fn run_benchmark(ds: &Dataset, cfg: &BenchmarkConfig) -> Result<EvaluationReport, EvalError> {
    if cfg.methods.is_empty() || cfg.models.is_empty() {
        return Err(EvalError::InvalidBenchmark("need at least one method and one model".into()));
    }
    if cfg.methods.iter().any(SelectionMethod::uses_k) && cfg.k_list.is_empty() {
        return Err(EvalError::InvalidBenchmark("k_list is empty".into()));
    }
    for m in &cfg.models {
        m.validate()?;
        if m.is_classifier() != ds.target_kind().is_classification() {
            return Err(EvalError::TargetMismatch {
                model: m.to_string(),
                target: target_label(ds.target_kind()),
            });
        }
    }
    let labels: Vec<String> = cfg.methods.iter().map(SelectionMethod::label).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(EvalError::InvalidBenchmark(format!("method {l} listed twice")));
        }
    }
    let plan = make_folds(ds, cfg.k_folds, cfg.seed)?;

    let mut cells = Vec::new();
    for method in &cfg.methods {
        if method.uses_k() {
            for &k in &cfg.k_list {
                cells.push(Cell { order: cells.len(), method, k });
            }
        } else {
            cells.push(Cell {
                order: cells.len(),
                method,
                k: ds.n_features(),
            });
        }
    }

    let context = |cell: &Cell, model: Option<&Model>, fold: usize| {
        let method = cell.method.label();
        let k = cell.k;
        let model = model.map(Model::to_string);
        move |e: EvalError| EvalError::Cell {
            method: method.clone(),
            k,
            model: model.clone(),
            fold,
            source: Box::new(e),
        }
    };

    let global: Vec<Option<Selection>> = if cfg.global_selection {
        cells
            .par_iter()
            .map(|c| {
                select(ds, c.method, c.k, selection_seed(cfg.seed, c.k, None), &cfg.select)
                    .map(Some)
                    .map_err(|e| context(c, None, 0)(e.into()))
            })
            .collect::<Result<_, _>>()?
    } else {
        vec![None; cells.len()]
    };

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.k_folds).map(move |f| (c, f)))
        .collect();
    type CellOut = ((usize, usize), Option<Selection>, Vec<(usize, &'static str, f64)>);
    let outputs: Vec<CellOut> = jobs
        .par_iter()
        .map(|&(c, fold)| -> Result<CellOut, EvalError> {
            let cell = &cells[c];
            let (sel, fresh) = match &global[c] {
                Some(s) => (s.clone(), false),
                None => (
                    select_on_fold(ds, &plan, fold, cell.method, cell.k, cfg).map_err(context(cell, None, fold))?,
                    true,
                ),
            };
            let projected = project(ds, &sel).map_err(|e| context(cell, None, fold)(e.into()))?;
            let train = projected.subset_rows(&plan.train_indices(fold))?;
            let test = projected.subset_rows(&plan.test_indices(fold))?;
            let truth = test.target().values();
            let mut values = Vec::new();
            for (mi, model) in cfg.models.iter().enumerate() {
                let wrap = context(cell, Some(model), fold);
                let pred = fit_predict(model, &train, &test).map_err(&wrap)?;
                let scored = if model.is_classifier() {
                    classification_metrics(&pred, truth, cfg.positive_class)
                } else {
                    rmse(&pred, truth).map(|v| vec![(RMSE, v)])
                }
                .map_err(wrap)?;
                values.extend(scored.into_iter().map(|(m, v)| (mi, m, v)));
            }
            Ok(((cell.order, fold), fresh.then_some(sel), values))
        })
        .collect::<Result<_, _>>()?;

    let mut outputs = outputs;
    outputs.sort_by_key(|o| o.0);
    let metric_rank = |m: &str| [ACCURACY, F1, RMSE].iter().position(|x| *x == m).unwrap_or(usize::MAX);

    let mut keyed: Vec<((usize, usize, usize, usize), Row)> = Vec::new();
    let mut selections = Vec::new();
    for (c, sel) in global.iter().enumerate() {
        if let Some(s) = sel {
            selections.push(FoldSelection {
                method: cells[c].method.label(),
                k: cells[c].k,
                fold: None,
                selection: s.clone(),
            });
        }
    }
    for ((c, fold), sel, values) in outputs {
        let cell = &cells[c];
        if let Some(s) = sel {
            selections.push(FoldSelection {
                method: cell.method.label(),
                k: cell.k,
                fold: Some(fold),
                selection: s,
            });
        }
        for (mi, metric, value) in values {
            keyed.push((
                (c, mi, fold, metric_rank(metric)),
                Row {
                    method: cell.method.label(),
                    k: cell.k,
                    model: cfg.models[mi].to_string(),
                    fold,
                    metric: metric.to_string(),
                    value,
                },
            ));
        }
    }
    keyed.sort_by_key(|(key, _)| *key);
    let rows: Vec<Row> = keyed.into_iter().map(|(_, r)| r).collect();
    let aggregates = aggregate(&rows);

    Ok(EvaluationReport {
        meta: RunMeta {
            seed: cfg.seed,
            k_folds: cfg.k_folds,
            k_list: cfg.k_list.clone(),
            methods: cfg.methods.clone(),
            models: cfg.models.clone(),
            bins: cfg.select.bins,
            global_selection: cfg.global_selection,
            positive_class: cfg.positive_class,
            n_records: ds.n_records(),
            n_features: ds.n_features(),
            target_kind: ds.target_kind(),
        },
        rows,
        aggregates,
        selections,
    })
}

impl EvaluationReport {
    pub fn aggregate_for(&self, method: &str, k: usize, model: &str, metric: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.k == k && a.model == model && a.metric == metric)
    }

    /// One line per (method, k, model) with the averaged headline metrics.
    pub fn write_table_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let classification = self.meta.target_kind.is_classification();
        let mut w = csv::Writer::from_writer(writer);
        if classification {
            w.write_record(["Method", "k", "Model", "Average Accuracy", "Average f1"])?;
        } else {
            w.write_record(["Method", "k", "Model", "Average RMSE"])?;
        }
        let mut seen: Vec<(&str, usize, &str)> = Vec::new();
        for a in &self.aggregates {
            let key = (a.method.as_str(), a.k, a.model.as_str());
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let value = |metric: &str| {
                self.aggregate_for(a.method.as_str(), a.k, a.model.as_str(), metric)
                    .map_or(String::new(), |x| x.mean.to_string())
            };
            let mut record = vec![a.method.clone(), a.k.to_string(), a.model.clone()];
            if classification {
                record.push(value(ACCURACY));
                record.push(value(F1));
            } else {
                record.push(value(RMSE));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Every per-fold row.
    pub fn write_detail_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
