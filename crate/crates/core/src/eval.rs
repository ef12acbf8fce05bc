//! Point-in-box benchmark scoring with per-category breakdowns.
//!
//! Benchmark lines: `{"id": "...", "target": [x0, y0, x1, y1], "categories": {"platform": "Desktop", "element": "Icon"}}`.
//! Prediction lines: `{"id": "...", "point": [x, y]}`.
//!
//! A cell is one combination of category labels across all axes. Missing
//! predictions count as wrong. Both the micro average (hits over records) and
//! the macro average (mean of cell accuracies) are reported.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{NormBox, NormPoint};
use crate::rlvr::binary_reward;
use crate::{Error, Point, Rect, Result};

/// Label used when a record lacks an axis that other records have.
pub const NO_LABEL: &str = "(none)";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub id: String,
    pub target: Rect,
    pub categories: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchLine {
    id: String,
    target: [f64; 4],
    categories: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<'a> {
    pub id: &'a str,
    pub point: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OwnedPrediction {
    pub id: String,
    pub point: Point,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredLine {
    id: String,
    point: [f64; 2],
}

fn parse_lines<T>(text: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            f(l).map_err(|e| Error::Line {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn read_bench(text: &str) -> Result<Vec<BenchRecord>> {
    parse_lines(text, |l| {
        let b: BenchLine = serde_json::from_str(l)?;
        if b.categories.is_empty() {
            return Err(Error::Validation(format!("record `{}` has no category axis", b.id)));
        }
        Ok(BenchRecord {
            id: b.id,
            target: NormBox::new(b.target[0], b.target[1], b.target[2], b.target[3])?,
            categories: b.categories,
        })
    })
}

pub fn read_predictions(text: &str) -> Result<Vec<OwnedPrediction>> {
    parse_lines(text, |l| {
        let p: PredLine = serde_json::from_str(l)?;
        Ok(OwnedPrediction {
            id: p.id,
            point: NormPoint::new(p.point[0], p.point[1])?,
        })
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Cell {
    pub hits: usize,
    pub total: usize,
}

impl Cell {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    /// Category axes, sorted.
    pub axes: Vec<String>,
    /// Keyed by one label per axis, in `axes` order.
    pub cells: BTreeMap<Vec<String>, Cell>,
    pub hits: usize,
    pub total: usize,
}

impl ScoreTable {
    pub fn micro_average(&self) -> f64 {
        Cell {
            hits: self.hits,
            total: self.total,
        }
        .accuracy()
    }

    pub fn macro_average(&self) -> f64 {
        mean(self.cells.values().map(Cell::accuracy))
    }

    pub fn cell(&self, labels: &[&str]) -> Option<Cell> {
        let key: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        self.cells.get(&key).copied()
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn score(bench: &[BenchRecord], preds: &[Prediction<'_>]) -> Result<ScoreTable> {
    let mut by_id: HashMap<&str, &Point> = HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(p.id, &p.point).is_some() {
            return Err(Error::DuplicateId(p.id.to_string()));
        }
    }
    let known: BTreeSet<&str> = bench.iter().map(|r| r.id.as_str()).collect();
    let unknown: BTreeSet<String> = preds
        .iter()
        .filter(|p| !known.contains(p.id))
        .map(|p| p.id.to_string())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownIds(unknown.into_iter().collect()));
    }

    let axes: Vec<String> = bench
        .iter()
        .flat_map(|r| r.categories.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut cells: BTreeMap<Vec<String>, Cell> = BTreeMap::new();
    let mut hits = 0;
    for r in bench {
        let key: Vec<String> = axes
            .iter()
            .map(|a| r.categories.get(a).cloned().unwrap_or_else(|| NO_LABEL.to_string()))
            .collect();
        let hit = by_id
            .get(r.id.as_str())
            .is_some_and(|p| binary_reward(p, &r.target) == 1);
        let cell = cells.entry(key).or_default();
        cell.total += 1;
        if hit {
            cell.hits += 1;
            hits += 1;
        }
    }
    Ok(ScoreTable {
        axes,
        cells,
        hits,
        total: bench.len(),
    })
}

/// Text and CSV renderings of a score table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    pub csv: String,
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

/// Lays the table out with all but the last axis as rows and the last axis as
/// columns, followed by an `Avg.` column (row macro average) and an `Avg.`
/// row (column macro averages). Cells with no records print `-` and are left
/// out of averages.
pub fn render_table(table: &ScoreTable) -> Result<Rendered> {
    if table.cells.is_empty() {
        return Err(Error::Validation("cannot render an empty score table".into()));
    }
    let k = table.axes.len();
    let row_key = |key: &[String]| {
        if k <= 1 {
            "All".to_string()
        } else {
            key[..k - 1].join("/")
        }
    };
    let rows: Vec<String> = table.cells.keys().map(|c| row_key(c)).collect::<BTreeSet<_>>().into_iter().collect();
    let cols: Vec<String> = table
        .cells
        .keys()
        .map(|c| c[k - 1].clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let lookup: BTreeMap<(String, String), f64> = table
        .cells
        .iter()
        .map(|(c, cell)| ((row_key(c), c[k - 1].clone()), cell.accuracy()))
        .collect();

    let corner = if k <= 1 { String::new() } else { table.axes[..k - 1].join("/") };
    let mut grid: Vec<Vec<String>> = Vec::new();
    let mut header = vec![corner];
    header.extend(cols.iter().cloned());
    header.push("Avg.".into());
    grid.push(header);
    for r in &rows {
        let vals: Vec<Option<f64>> = cols.iter().map(|c| lookup.get(&(r.clone(), c.clone())).copied()).collect();
        let mut line = vec![r.clone()];
        line.extend(vals.iter().map(|v| v.map(pct).unwrap_or_else(|| "-".into())));
        line.push(pct(mean(vals.iter().flatten().copied())));
        grid.push(line);
    }
    if rows.len() > 1 {
        let mut line = vec!["Avg.".to_string()];
        for c in &cols {
            let v = mean(rows.iter().filter_map(|r| lookup.get(&(r.clone(), c.clone())).copied()));
            line.push(pct(v));
        }
        line.push(pct(table.macro_average()));
        grid.push(line);
    }

    let widths: Vec<usize> = (0..grid[0].len())
        .map(|j| grid.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    writeln!(text, "axes: {}", table.axes.join(", ")).expect("String write");
    for row in &grid {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if j == 0 {
                    format!("{v:<w$}", w = widths[j])
                } else {
                    format!("{v:>w$}", w = widths[j])
                }
            })
            .collect();
        writeln!(text, "{}", cells.join("  ").trim_end()).expect("String write");
    }
    writeln!(text, "Micro-avg: {} ({}/{})", pct(table.micro_average()), table.hits, table.total)
        .expect("String write");
    writeln!(text, "Macro-avg: {}", pct(table.macro_average())).expect("String write");

    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for row in &grid {
        w.write_record(row).expect("in-memory CSV");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8");
    Ok(Rendered { text, csv })
}
