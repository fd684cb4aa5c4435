//! Hyper-parameter grids: one line per dataset, e.g.
//! `dataset=SST-2 lr=1e-5,2e-5 batch=16,32 epochs=10`.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridLine {
    pub dataset: String,
    pub lr: Vec<f64>,
    pub batch: Vec<usize>,
    pub epochs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRun {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
}

impl GridLine {
    /// Cartesian product in lr, batch, epochs order.
    pub fn runs(&self) -> Vec<GridRun> {
        let mut out = Vec::new();
        for &lr in &self.lr {
            for &batch in &self.batch {
                for &epochs in &self.epochs {
                    out.push(GridRun { lr, batch, epochs });
                }
            }
        }
        out
    }
}

pub const DEFAULT_GRID: &str = include_str!("../../data/finetune_grid.txt");

pub fn parse_grid(text: &str, path: &Path) -> Result<Vec<GridLine>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::format(path, i + 1, msg);
        let (mut dataset, mut lr, mut batch, mut epochs) = (None, None, None, None);
        for field in line.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, found {field:?}")))?;
            let list = |v: &str| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect::<Vec<_>>()
            };
            match key {
                "dataset" => dataset = Some(value.to_string()),
                "lr" => {
                    lr = Some(
                        list(value)
                            .iter()
                            .map(|v| v.parse::<f64>().ok().filter(|x| *x > 0.0))
                            .collect::<Option<Vec<_>>>()
                            .ok_or_else(|| err(format!("bad learning rate list {value:?}")))?,
                    )
                }
                "batch" | "epochs" => {
                    let parsed = list(value)
                        .iter()
                        .map(|v| v.parse::<usize>().ok().filter(|x| *x > 0))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| err(format!("bad {key} list {value:?}")))?;
                    if key == "batch" {
                        batch = Some(parsed);
                    } else {
                        epochs = Some(parsed);
                    }
                }
                other => return Err(err(format!("unknown grid key {other:?}"))),
            }
        }
        out.push(GridLine {
            dataset: dataset.ok_or_else(|| err("missing dataset".into()))?,
            lr: required(lr, "lr").map_err(err)?,
            batch: required(batch, "batch").map_err(err)?,
            epochs: required(epochs, "epochs").map_err(err)?,
        });
    }
    Ok(out)
}

fn required<T>(values: Option<Vec<T>>, name: &str) -> std::result::Result<Vec<T>, String> {
    values
        .filter(|v| !v.is_empty())
        .ok_or_else(|| format!("missing {name}"))
}

pub fn load_grid(path: &Path) -> Result<Vec<GridLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_grid_enumerates() {
        let grid = parse_grid(DEFAULT_GRID, Path::new("grid")).unwrap();
        let names: Vec<&str> = grid.iter().map(|g| g.dataset.as_str()).collect();
        assert_eq!(names, ["SST-2", "Amazon-2", "Sem-R", "Sem-L", "MPQA2.0"]);
        assert_eq!(grid[0].runs().len(), 6);
        assert_eq!(grid[1].runs().len(), 2);
        assert_eq!(
            grid[2].runs(),
            [GridRun {
                lr: 3e-5,
                batch: 16,
                epochs: 5
            }]
        );
    }

    #[test]
    fn rejects_bad_lines() {
        let p = Path::new("g");
        assert!(parse_grid("dataset=x lr=1e-5 batch=16", p).is_err());
        assert!(parse_grid("dataset=x lr=abc batch=16 epochs=1", p).is_err());
        assert!(matches!(
            parse_grid("\n\ndataset=x lr=1 batch=0 epochs=1", p),
            Err(Error::Format { line: 3, .. })
        ));
        assert!(parse_grid("dataset=x lr=1 batch=1 epochs=1 warmup=3", p).is_err());
    }
}
