use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{evaluate_model, write_eval};
use super::provider::DataProvider;
use super::train::train;
use crate::error::{Error, Result};

pub const ABLATE_FILE: &str = "ablate.csv";
pub const ABLATE_HEADER: &str =
    "cell,seed,bn_in_backbone,bn_in_head,base_lr,first_conv_stride,root_depth,status,initial_loss,final_loss,map,ap_small";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BnSetting {
    pub backbone: bool,
    pub head: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StemSetting {
    pub first_conv_stride: usize,
    pub root_depth: usize,
}

/// A base run and the axes to sweep. An empty axis keeps the base value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub base: RunConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub bn: Vec<BnSetting>,
    #[serde(default)]
    pub lrs: Vec<f64>,
    #[serde(default)]
    pub stems: Vec<StemSetting>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub label: String,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblateRow {
    pub cell: GridCell,
    /// `converging`, `diverged`, or `error`.
    pub status: String,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub map: Option<f64>,
    pub ap_small: Option<f64>,
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut grid: GridConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        grid.base.resolve_paths(path);
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("grid needs at least one seed".into()));
        }
        self.cells().iter().try_for_each(|c| c.config.validate())
    }

    /// Cells in BN, lr, stem, seed order.
    pub fn cells(&self) -> Vec<GridCell> {
        let b = &self.base;
        let bns = if self.bn.is_empty() {
            vec![BnSetting {
                backbone: b.backbone.bn_in_backbone,
                head: b.head.bn_in_head,
            }]
        } else {
            self.bn.clone()
        };
        let lrs = if self.lrs.is_empty() {
            vec![b.train.base_lr]
        } else {
            self.lrs.clone()
        };
        let stems = if self.stems.is_empty() {
            vec![StemSetting {
                first_conv_stride: b.backbone.first_conv_stride,
                root_depth: b.backbone.root_depth,
            }]
        } else {
            self.stems.clone()
        };
        let mut out = Vec::new();
        for bn in &bns {
            for &lr in &lrs {
                for stem in &stems {
                    for &seed in &self.seeds {
                        let mut c = b.clone();
                        c.backbone.bn_in_backbone = bn.backbone;
                        c.head.bn_in_head = bn.head;
                        c.train.base_lr = lr;
                        c.backbone.first_conv_stride = stem.first_conv_stride;
                        c.backbone.root_depth = stem.root_depth;
                        if stem.root_depth > 1 {
                            c.backbone.first_conv_kernel = 3;
                        }
                        c.train.seed = seed;
                        let label = format!(
                            "bn{}{}_lr{lr}_s{}r{}_seed{seed}",
                            u8::from(bn.backbone),
                            u8::from(bn.head),
                            stem.first_conv_stride,
                            stem.root_depth
                        );
                        out.push(GridCell { label, config: c });
                    }
                }
            }
        }
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[AblateRow]) -> String {
    let mut s = String::from(ABLATE_HEADER);
    s.push('\n');
    for r in rows {
        let c = &r.cell.config;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.cell.label,
            c.train.seed,
            c.backbone.bn_in_backbone,
            c.head.bn_in_head,
            c.train.base_lr,
            c.backbone.first_conv_stride,
            c.backbone.root_depth,
            r.status,
            opt(r.initial_loss),
            opt(r.final_loss),
            opt(r.map),
            opt(r.ap_small)
        )
        .expect("write to String");
    }
    s
}

fn run_cell(cell: &GridCell, data: &DataProvider, dir: &Path) -> Result<AblateRow> {
    let mut outcome = train(&cell.config, data, dir, None)?;
    let mut row = AblateRow {
        cell: cell.clone(),
        status: if outcome.report.status == crate::landscape::DivergenceStatus::Diverged {
            "diverged".into()
        } else {
            "converging".into()
        },
        initial_loss: outcome.report.initial_loss,
        final_loss: outcome.report.final_loss,
        map: None,
        ap_small: None,
    };
    if row.status == "converging" {
        let (dets, report) = evaluate_model(&mut outcome.model, data, &cell.config.eval)?;
        write_eval(dir, &dets, &report)?;
        row.map = report.map;
        row.ap_small = report.ap_small;
    }
    Ok(row)
}

/// Trains and evaluates every cell under `out_dir/<label>/` and writes `ablate.csv`.
///
/// A failing cell is recorded with status `error` and the sweep continues.
pub fn run_ablation(grid: &GridConfig, out_dir: &Path) -> Result<Vec<AblateRow>> {
    grid.validate()?;
    let data = DataProvider::from_source(&grid.base.data)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rows = Vec::new();
    for cell in grid.cells() {
        log::info!("ablate cell {}", cell.label);
        let row = run_cell(&cell, &data, &out_dir.join(&cell.label)).unwrap_or_else(|e| {
            log::error!("cell {} failed: {e}", cell.label);
            AblateRow {
                cell: cell.clone(),
                status: "error".into(),
                initial_loss: None,
                final_loss: None,
                map: None,
                ap_small: None,
            }
        });
        rows.push(row);
    }
    let path = out_dir.join(ABLATE_FILE);
    std::fs::write(&path, rows_to_csv(&rows)).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
