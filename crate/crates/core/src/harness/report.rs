use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::perturb::PerturbationKind;
use crate::similarity::{avg_drop_by_perturbation, avg_drop_by_strength, CurveKey, RobustnessCurve};

use super::records::RunRecord;
use super::HarnessError;

/// Model rows against strength or perturbation columns; `None` marks an
/// incomplete cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl DropTable {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.columns.iter().position(|x| x == col)?;
        self.cells[r][c]
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("model,{}\n", self.columns.join(","));
        for (r, row) in self.rows.iter().zip(&self.cells) {
            let cells: Vec<String> = row.iter().map(|c| c.map_or("n/a".to_string(), |v| format!("{v:.6}"))).collect();
            s += &format!("{r},{}\n", cells.join(","));
        }
        s
    }
}

/// Clean versus attacked mean ECS for one adversarial cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRow {
    pub model: String,
    pub strength: f64,
    pub attack: String,
    pub level: f64,
    pub count: usize,
    pub mean_baseline: f64,
    pub mean_ecs: f64,
    /// `mean_baseline − mean_ecs`.
    pub delta: f64,
    /// Realizations where the attacked score fell below the clean one.
    pub degraded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub by_strength: DropTable,
    pub by_perturbation: DropTable,
    pub adversarial: Vec<AdversarialRow>,
}

fn strength_label(s: f64) -> String {
    format!("{s}")
}

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean curves for every complete (model, strength, kind) cell of the
/// non-adversarial kinds. A cell is complete when each level seen for its
/// kind anywhere has a record for every realization seen in the file.
fn curves(records: &[RunRecord]) -> Vec<(CurveKey, RobustnessCurve)> {
    let realizations: BTreeSet<usize> = records.iter().map(|r| r.realization).collect();
    let mut levels: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut cells: BTreeMap<(&str, u64, &str), Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !is_adversarial(&r.perturbation)) {
        let l = levels.entry(&r.perturbation).or_default();
        if !l.contains(&r.level) {
            l.push(r.level);
        }
        cells.entry((&r.model, r.strength.to_bits(), &r.perturbation)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((model, strength, kind), rs) in cells {
        let mut grid = levels[kind].clone();
        grid.sort_by(f64::total_cmp);
        let mut points = Vec::with_capacity(grid.len());
        let mut complete = true;
        for &level in &grid {
            let at: Vec<&&RunRecord> = rs.iter().filter(|r| r.level == level).collect();
            let seen: BTreeSet<usize> = at.iter().map(|r| r.realization).collect();
            if seen != realizations || at.len() != realizations.len() {
                complete = false;
                break;
            }
            points.push((level, mean(&at.iter().map(|r| r.ecs).collect::<Vec<_>>())));
        }
        if !complete {
            continue;
        }
        let mut per_real: BTreeMap<usize, f64> = BTreeMap::new();
        for r in &rs {
            per_real.insert(r.realization, r.baseline_ecs);
        }
        let baseline = mean(&per_real.values().copied().collect::<Vec<_>>());
        if let Ok(c) = RobustnessCurve::new(Some(baseline), points) {
            out.push((CurveKey::new(model, f64::from_bits(strength), kind), c));
        }
    }
    out
}

fn is_adversarial(kind: &str) -> bool {
    kind.parse::<PerturbationKind>().map(PerturbationKind::is_adversarial).unwrap_or(false)
}

/// Average-drop tables by strength and by perturbation type, plus
/// adversarial before/after rows. Labels follow first appearance in
/// `records`. A table cell is `None` when any curve it averages over is
/// missing or incomplete, or its initial score is zero.
pub fn summarize(records: &[RunRecord]) -> Summary {
    let models = first_seen(records.iter().map(|r| r.model.clone()));
    let strengths = first_seen(records.iter().map(|r| r.strength));
    let kinds = first_seen(records.iter().filter(|r| !is_adversarial(&r.perturbation)).map(|r| r.perturbation.clone()));
    let curves = curves(records);
    let has = |m: &str, s: f64, k: &str| curves.iter().any(|(c, _)| c.model == m && c.strength == s && c.perturbation == k);

    let by_strength = DropTable {
        rows: models.clone(),
        columns: strengths.iter().map(|&s| strength_label(s)).collect(),
        cells: models
            .iter()
            .map(|m| {
                strengths
                    .iter()
                    .map(|&s| {
                        let complete = kinds.iter().all(|k| has(m, s, k));
                        complete.then(|| avg_drop_by_strength(&curves, m, s).ok()).flatten()
                    })
                    .collect()
            })
            .collect(),
    };
    let by_perturbation = DropTable {
        rows: models.clone(),
        columns: kinds.clone(),
        cells: models
            .iter()
            .map(|m| {
                kinds
                    .iter()
                    .map(|k| {
                        let complete = strengths.iter().all(|&s| has(m, s, k));
                        complete.then(|| avg_drop_by_perturbation(&curves, m, k).ok()).flatten()
                    })
                    .collect()
            })
            .collect(),
    };

    let mut adv: BTreeMap<(usize, u64, String, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| is_adversarial(&r.perturbation)) {
        let mi = models.iter().position(|m| *m == r.model).expect("model seen");
        adv.entry((mi, r.strength.to_bits(), r.perturbation.clone(), r.level.to_bits())).or_default().push(r);
    }
    let adversarial = adv
        .into_iter()
        .map(|((mi, s, attack, level), rs)| {
            let b: Vec<f64> = rs.iter().map(|r| r.baseline_ecs).collect();
            let e: Vec<f64> = rs.iter().map(|r| r.ecs).collect();
            AdversarialRow {
                model: models[mi].clone(),
                strength: f64::from_bits(s),
                attack,
                level: f64::from_bits(level),
                count: rs.len(),
                mean_baseline: mean(&b),
                mean_ecs: mean(&e),
                delta: mean(&b) - mean(&e),
                degraded: rs.iter().filter(|r| r.ecs < r.baseline_ecs).count(),
            }
        })
        .collect();
    Summary { by_strength, by_perturbation, adversarial }
}

impl Summary {
    pub fn adversarial_csv(&self) -> String {
        let mut s = String::from("model,strength,attack,level,count,mean_baseline,mean_ecs,delta,degraded\n");
        for r in &self.adversarial {
            s += &format!(
                "{},{},{},{},{},{:.6},{:.6},{:.6},{}\n",
                r.model, r.strength, r.attack, r.level, r.count, r.mean_baseline, r.mean_ecs, r.delta, r.degraded
            );
        }
        s
    }

    /// Writes `drops_by_strength.csv`, `drops_by_perturbation.csv` and
    /// `adversarial.csv`, or a single `summary.json`.
    pub fn write(&self, out_dir: &Path, json: bool) -> Result<Vec<PathBuf>, HarnessError> {
        std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
        let files: Vec<(PathBuf, String)> = if json {
            let text = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Runtime(e.to_string()))?;
            vec![(out_dir.join("summary.json"), text + "\n")]
        } else {
            vec![
                (out_dir.join("drops_by_strength.csv"), self.by_strength.to_csv()),
                (out_dir.join("drops_by_perturbation.csv"), self.by_perturbation.to_csv()),
                (out_dir.join("adversarial.csv"), self.adversarial_csv()),
            ]
        };
        for (p, text) in &files {
            std::fs::write(p, text).map_err(|e| HarnessError::io(p, e))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// Mean and sample standard deviation of ECS over realizations at one
/// (perturbation, strength, level).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub perturbation: String,
    pub strength: f64,
    pub level: f64,
    pub mean_ecs: f64,
    pub std_ecs: f64,
    pub count: usize,
}

pub(crate) fn plot_rows(records: &[RunRecord]) -> Vec<((String, String), Vec<PlotRow>)> {
    let groups = first_seen(records.iter().map(|r| (r.dataset.clone(), r.model.clone())));
    groups
        .into_iter()
        .map(|(dataset, model)| {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.dataset == dataset && r.model == model).collect();
            let kinds = first_seen(mine.iter().map(|r| r.perturbation.clone()));
            let mut rows = Vec::new();
            for kind in kinds {
                let mut cells: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
                for r in mine.iter().filter(|r| r.perturbation == kind) {
                    cells.entry((r.strength.to_bits(), r.level.to_bits())).or_default().push(r.ecs);
                }
                let mut keyed: Vec<_> = cells.into_iter().map(|((s, l), v)| (f64::from_bits(s), f64::from_bits(l), v)).collect();
                keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                for (strength, level, v) in keyed {
                    let m = mean(&v);
                    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 } else { 0.0 };
                    rows.push(PlotRow { perturbation: kind.clone(), strength, level, mean_ecs: m, std_ecs: var.sqrt(), count: v.len() });
                }
            }
            ((dataset, model), rows)
        })
        .collect()
}

/// One `plot_<dataset>_<model>.csv` per (dataset, model), with one series
/// row per (perturbation, strength, level).
pub fn emit_plot_data(records: &[RunRecord], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();
    for ((dataset, model), rows) in plot_rows(records) {
        let path = out_dir.join(format!("plot_{dataset}_{model}.csv"));
        let mut s = String::from("perturbation,strength,level,mean_ecs,std_ecs,count\n");
        for r in rows {
            s += &format!(
                "{},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.perturbation, r.strength, r.level, r.mean_ecs, r.std_ecs, r.count
            );
        }
        std::fs::write(&path, s).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
