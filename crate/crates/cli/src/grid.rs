//! Task × dataset × model experiment grid and its consolidated table.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crisis_core::baselines::{OovPolicy, Representation};
use crisis_core::corpus::Task;
use serde::{Deserialize, Serialize};

use crate::bundle::bundle_name;
use crate::config::RunConfig;
use crate::manifest::RunManifest;
use crate::pipeline::{train_inner, ModelChoice, ModelKind, TrainRequest, CHECKPOINT};

pub const CELLS_DIR: &str = "cells";
pub const CELL_FILE: &str = "cell.json";
pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_TSV: &str = "results.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRequest {
    pub bundles: Vec<PathBuf>,
    pub tasks: Vec<Task>,
    pub models: Vec<ModelChoice>,
    pub out_dir: PathBuf,
    pub config: RunConfig,
}

/// Outcome of one (bundle, task, model) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    /// Position in run order.
    pub index: usize,
    pub bundle: String,
    pub task: Task,
    pub model: String,
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

/// Metric change between the first bundle and a later one:
/// `metric(from) − metric(to)`, so a positive value is a decline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub task: Task,
    pub model: String,
    pub from: String,
    pub to: String,
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub bundles: Vec<String>,
    pub tasks: Vec<Task>,
    pub models: Vec<String>,
    pub cells: Vec<CellResult>,
    pub deltas: Vec<Delta>,
}

impl GridTable {
    pub fn cell(&self, bundle: &str, task: Task, model: &str) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.bundle == bundle && c.task == task && c.model == model)
    }

    pub fn delta(&self, task: Task, model: &str, to: &str) -> Option<&Delta> {
        self.deltas.iter().find(|d| d.task == task && d.model == model && d.to == to)
    }

    /// Rows are models; each column is `task/bundle` holding `F1 / accuracy`
    /// in percent, followed by one delta column per later bundle and task.
    pub fn to_tsv(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x));
        let mut header = vec!["model".to_string()];
        for task in &self.tasks {
            for b in &self.bundles {
                header.push(format!("{task}/{b}"));
            }
        }
        for task in &self.tasks {
            for b in self.bundles.iter().skip(1) {
                header.push(format!("{task} delta {}->{b}", self.bundles[0]));
            }
        }
        let mut out = header.join("\t") + "\n";
        for model in &self.models {
            let mut row = vec![model.clone()];
            for &task in &self.tasks {
                for b in &self.bundles {
                    row.push(match self.cell(b, task, model) {
                        Some(c) if c.error.is_none() => format!("{} / {}", pct(Some(c.macro_f1.unwrap_or(0.0))), pct(c.accuracy)),
                        Some(_) => "failed".into(),
                        None => "-".into(),
                    });
                }
            }
            for &task in &self.tasks {
                for b in self.bundles.iter().skip(1) {
                    row.push(match self.delta(task, model, b) {
                        Some(d) => format!("{} / {}", pct(d.macro_f1), pct(d.accuracy)),
                        None => "-".into(),
                    });
                }
            }
            out.push_str(&(row.join("\t") + "\n"));
        }
        out
    }
}

fn ordered_unique(items: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Builds the table from per-cell results. Order of bundles, tasks and
/// models follows first appearance; deltas compare the first bundle with
/// every later one.
pub fn consolidate(cells: &[CellResult]) -> GridTable {
    let bundles = ordered_unique(cells.iter().map(|c| c.bundle.clone()));
    let mut tasks: Vec<Task> = Vec::new();
    for c in cells {
        if !tasks.contains(&c.task) {
            tasks.push(c.task);
        }
    }
    let models = ordered_unique(cells.iter().map(|c| c.model.clone()));
    let mut table = GridTable {
        bundles,
        tasks,
        models,
        cells: cells.to_vec(),
        deltas: Vec::new(),
    };
    let ok = |c: Option<&CellResult>| c.filter(|c| c.error.is_none()).cloned();
    let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
    if let Some(first) = table.bundles.first() {
        for &task in &table.tasks {
            for model in &table.models {
                for to in table.bundles.iter().skip(1) {
                    if let (Some(a), Some(b)) = (ok(table.cell(first, task, model)), ok(table.cell(to, task, model))) {
                        table.deltas.push(Delta {
                            task,
                            model: model.clone(),
                            from: first.clone(),
                            to: to.clone(),
                            macro_f1: diff(a.macro_f1, b.macro_f1),
                            accuracy: diff(a.accuracy, b.accuracy),
                        });
                    }
                }
            }
        }
    }
    table
}

fn cell_dir(out_dir: &Path, bundle: &str, task: Task, model: &ModelChoice) -> PathBuf {
    out_dir
        .join(CELLS_DIR)
        .join(bundle)
        .join(task.to_string())
        .join(model.label().replace(':', "-"))
}

/// Every `cell.json` under `out_dir/cells`, in path order.
pub fn read_cells(out_dir: &Path) -> Result<Vec<CellResult>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, out)?;
            } else if p.file_name().is_some_and(|n| n == CELL_FILE) {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    let root = out_dir.join(CELLS_DIR);
    if root.exists() {
        walk(&root, &mut files).with_context(|| format!("scanning {}", root.display()))?;
    }
    files
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

fn write_table(out_dir: &Path, table: &GridTable, manifest: &mut RunManifest) -> Result<()> {
    let json = out_dir.join(RESULTS_JSON);
    std::fs::write(&json, serde_json::to_string_pretty(table)?)?;
    manifest.output(&json);
    let tsv = out_dir.join(RESULTS_TSV);
    std::fs::write(&tsv, table.to_tsv())?;
    manifest.output(&tsv);
    Ok(())
}

/// Rebuilds the consolidated table from the cells already on disk.
pub fn consolidate_dir(out_dir: &Path) -> Result<GridTable> {
    let mut manifest = RunManifest::new("grid-consolidate", &serde_json::json!({ "out_dir": out_dir }));
    let mut cells = read_cells(out_dir)?;
    cells.sort_by_key(|c| c.index);
    let table = consolidate(&cells);
    write_table(out_dir, &table, &mut manifest)?;
    manifest.write(out_dir)?;
    Ok(table)
}

/// Runs every (bundle, task, model) cell in order. A failing cell is
/// recorded and the grid moves on. `lr:crisis2vec`-style models embed with
/// the encoder trained in the same bundle and task, so the encoder must be
/// listed first.
pub fn run_grid(req: &GridRequest) -> Result<GridTable> {
    if req.models.is_empty() {
        bail!(crisis_core::Error::Config("the grid needs at least one model".into()));
    }
    if req.tasks.is_empty() || req.bundles.is_empty() {
        bail!(crisis_core::Error::Config("the grid needs at least one task and one bundle".into()));
    }
    req.config.train.validate()?;
    let mut names = Vec::new();
    for b in &req.bundles {
        if !b.join(crate::bundle::CLASSES).exists() {
            bail!(crisis_core::Error::Config(format!("{} is not a prepared bundle", b.display())));
        }
        let name = bundle_name(b);
        if names.contains(&name) {
            bail!(crisis_core::Error::Config(format!("two bundles share the name '{name}'")));
        }
        names.push(name);
    }
    let mut manifest = RunManifest::new("grid", req);
    manifest.seed("root", req.config.seed);
    std::fs::create_dir_all(&req.out_dir)?;
    let mut cells = Vec::new();
    for (bundle, name) in req.bundles.iter().zip(&names) {
        for &task in &req.tasks {
            let encoder_ckpt = cell_dir(&req.out_dir, name, task, &ModelChoice::new(ModelKind::Encoder, None)).join(CHECKPOINT);
            for model in &req.models {
                let dir = cell_dir(&req.out_dir, name, task, model);
                let needs_encoder = model.representation() == Some(Representation::Crisis2vec);
                let train_req = TrainRequest {
                    bundle: bundle.clone(),
                    out_dir: dir.clone(),
                    model: *model,
                    task,
                    table: None,
                    oov: OovPolicy::Zero,
                    encoder: needs_encoder.then(|| encoder_ckpt.clone()),
                    vocab: None,
                    config: req.config.clone(),
                };
                log::info!("grid cell {name} / {task} / {}", model.label());
                let result = if needs_encoder && !encoder_ckpt.exists() {
                    Err(anyhow::anyhow!("no encoder trained for {name}/{task}; list 'encoder' before {}", model.label()))
                } else {
                    std::fs::create_dir_all(&dir)?;
                    train_inner(&train_req, &mut manifest)
                };
                let cell = match result {
                    Ok(o) => CellResult {
                        index: cells.len(),
                        bundle: name.clone(),
                        task,
                        model: model.label(),
                        macro_f1: Some(o.test.macro_f1),
                        accuracy: o.test.accuracy,
                        error: None,
                    },
                    Err(e) => {
                        log::error!("cell {name}/{task}/{} failed: {e:#}", model.label());
                        CellResult {
                            index: cells.len(),
                            bundle: name.clone(),
                            task,
                            model: model.label(),
                            macro_f1: None,
                            accuracy: None,
                            error: Some(format!("{e:#}")),
                        }
                    }
                };
                std::fs::create_dir_all(&dir)?;
                let path = dir.join(CELL_FILE);
                std::fs::write(&path, serde_json::to_string_pretty(&cell)?)?;
                manifest.output(&path);
                cells.push(cell);
            }
        }
    }
    let table = consolidate(&cells);
    write_table(&req.out_dir, &table, &mut manifest)?;
    manifest.write(&req.out_dir)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(bundle: &str, task: Task, model: &str, f1: f64, acc: f64) -> CellResult {
        CellResult {
            index: 0,
            bundle: bundle.into(),
            task,
            model: model.into(),
            macro_f1: Some(f1),
            accuracy: Some(acc),
            error: None,
        }
    }

    #[test]
    fn deltas_are_first_minus_later() {
        let cells = vec![
            cell("c6", Task::Recognition, "lr", 0.9, 0.95),
            cell("c36", Task::Recognition, "lr", 0.8, 0.9),
        ];
        let t = consolidate(&cells);
        let d = t.delta(Task::Recognition, "lr", "c36").unwrap();
        assert!((d.macro_f1.unwrap() - 0.1).abs() < 1e-12);
        assert!((d.accuracy.unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn failed_cells_have_no_delta() {
        let mut bad = cell("c36", Task::Detection, "nb", 0.0, 0.0);
        bad.error = Some("boom".into());
        let t = consolidate(&[cell("c6", Task::Detection, "nb", 0.5, 0.5), bad]);
        assert!(t.deltas.is_empty());
        assert!(t.to_tsv().contains("failed"));
    }

    #[test]
    fn consolidation_is_idempotent() {
        let cells = vec![
            cell("a", Task::Detection, "encoder", 0.9, 0.9),
            cell("b", Task::Detection, "encoder", 0.7, 0.8),
        ];
        let t = consolidate(&cells);
        assert_eq!(consolidate(&t.cells), t);
    }
}
