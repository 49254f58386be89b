use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density_lab::{GridRle, GridSet};
use crate::interval::Interval;
use crate::orbit_engine::{Classifier, CycleWatcher};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceConfig {
    pub grid_h: f64,
    pub r_min: usize,
    /// Total sample count, spread evenly over the cells.
    pub samples: usize,
    pub budget: usize,
    pub kernel_fraction: f64,
    pub reject_fraction: f64,
    pub seed: u64,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        RecurrenceConfig { grid_h: 1.0 / 1024.0, r_min: 10, samples: 10_000, budget: 1_000_000, kernel_fraction: 0.9, reject_fraction: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Kernel,
    Dissipative,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecurrence {
    pub cell: usize,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
    /// Samples re-entering the cell at least `r_min` times.
    pub returning: usize,
    pub fraction: f64,
    /// Mean first-return time over samples that returned at all.
    pub mean_first_return: Option<f64>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub config: RecurrenceConfig,
    pub kernel: GridRle,
    pub kernel_cells: usize,
    pub kernel_measure: f64,
    pub ambiguous_cells: Vec<usize>,
    pub cells: Vec<CellRecurrence>,
    /// `λ(K Δ A)` against the attractor support coarsened to this grid,
    /// when an attractor was supplied.
    pub symmetric_difference: Option<f64>,
}

impl RecurrenceReport {
    pub fn kernel_set(&self) -> GridSet {
        GridSet::from_rle(&self.kernel)
    }
}

/// Forward-invariant unions of intervals; an orbit inside one that misses
/// a cell never comes back to it.
struct Trap {
    pieces: Vec<Interval>,
}

impl Trap {
    fn new(mut pieces: Vec<Interval>) -> Self {
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        Trap { pieces }
    }

    fn contains(&self, x: f64) -> bool {
        let k = self.pieces.partition_point(|p| p.lo <= x);
        k > 0 && self.pieces[..k].iter().rev().take(8).any(|p| p.contains(x))
    }

    fn meets(&self, y: &Interval) -> bool {
        self.pieces.iter().any(|p| p.intersects(y))
    }
}

fn traps(cl: &Classifier) -> Vec<Vec<Trap>> {
    // one chain per cascade (nested levels, shallow first), one per homterval cycle
    let map = cl.map;
    let mut out: Vec<Vec<Trap>> = cl.cascades.iter().map(|c| c.levels.iter().map(|l| Trap::new(l.orbit(map))).collect()).collect();
    for h in &cl.homtervals {
        out.push(vec![Trap::new(h.orbit(map))]);
    }
    out
}

/// Per-cell recurrence: the fraction of sampled points of each cell whose
/// orbit re-enters the cell at least `r_min` times within the budget.
/// Orbits stop early once they settle on an attracting cycle or enter a
/// forward-invariant cycle of intervals disjoint from the cell.
pub fn conservative_kernel(cl: &Classifier, cfg: &RecurrenceConfig) -> RecurrenceReport {
    let map = cl.map;
    let template = GridSet::for_map(map, cfg.grid_h);
    let n_cells = template.len();
    let per_cell = cfg.samples.div_ceil(n_cells).max(1);
    let chains = traps(cl);
    let cells: Vec<CellRecurrence> = (0..n_cells)
        .into_par_iter()
        .map(|k| {
            let y = template.cell_interval(k);
            let guards: Vec<&Trap> = chains.iter().filter_map(|ch| ch.iter().find(|t| !t.meets(&y))).collect();
            let mut rng = substream(cfg.seed, k as u64);
            let mut returning = 0usize;
            let (mut first_sum, mut first_n) = (0.0, 0usize);
            for s in 0..per_cell {
                let x = map.clamp(y.lo + (s as f64 + rng.gen::<f64>()) * y.len() / per_cell as f64);
                let (ret, first) = returns(cl, x, &y, cfg, &guards);
                if ret >= cfg.r_min {
                    returning += 1;
                }
                if let Some(t) = first {
                    first_sum += t as f64;
                    first_n += 1;
                }
            }
            let fraction = returning as f64 / per_cell as f64;
            let status = if fraction >= cfg.kernel_fraction {
                CellStatus::Kernel
            } else if fraction < cfg.reject_fraction {
                CellStatus::Dissipative
            } else {
                CellStatus::Ambiguous
            };
            CellRecurrence {
                cell: k,
                lo: y.lo,
                hi: y.hi,
                samples: per_cell,
                returning,
                fraction,
                mean_first_return: (first_n > 0).then(|| first_sum / first_n as f64),
                status,
            }
        })
        .collect();
    let mut kernel = template.with_shape();
    for c in &cells {
        if c.status == CellStatus::Kernel {
            kernel.set(c.cell, true);
        }
    }
    RecurrenceReport {
        config: cfg.clone(),
        kernel_cells: kernel.count(),
        kernel_measure: kernel.measure(),
        kernel: kernel.to_rle(),
        ambiguous_cells: cells.iter().filter(|c| c.status == CellStatus::Ambiguous).map(|c| c.cell).collect(),
        cells,
        symmetric_difference: None,
    }
}

/// Re-entries of the orbit of `x` into `y` (capped at `r_min`, or set to
/// `r_min` when the orbit settles on a cycle meeting `y`) and the first
/// return time.
fn returns(cl: &Classifier, x: f64, y: &Interval, cfg: &RecurrenceConfig, guards: &[&Trap]) -> (usize, Option<usize>) {
    let map = cl.map;
    let mut watcher = CycleWatcher::new(map, &cl.cfg);
    let mut z = x;
    let mut count = 0usize;
    let mut first = None;
    for t in 1..=cfg.budget {
        z = map.clamp(map.f(z));
        if y.contains(z) {
            count += 1;
            first.get_or_insert(t);
            if count >= cfg.r_min {
                break;
            }
        }
        if let Some(c) = watcher.push(z) {
            if c.points.iter().any(|&p| y.contains(p)) {
                count = count.max(cfg.r_min);
            }
            break;
        }
        if guards.iter().any(|g| g.contains(z)) {
            break;
        }
    }
    (count, first)
}

/// Per-cell recurrence table as CSV.
pub fn recurrence_csv(report: &RecurrenceReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cell", "lo", "hi", "samples", "returning", "fraction", "mean_first_return", "status"]).unwrap();
    for c in &report.cells {
        let status = match c.status {
            CellStatus::Kernel => "kernel",
            CellStatus::Dissipative => "dissipative",
            CellStatus::Ambiguous => "ambiguous",
        };
        w.write_record([
            c.cell.to_string(),
            format!("{:.16e}", c.lo),
            format!("{:.16e}", c.hi),
            c.samples.to_string(),
            c.returning.to_string(),
            format!("{:.16e}", c.fraction),
            c.mean_first_return.map(|m| format!("{m:.16e}")).unwrap_or_default(),
            status.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}
