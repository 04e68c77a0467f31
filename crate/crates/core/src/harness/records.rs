use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const CSV_HEADER: &str = "dataset,model,strength,perturbation,level,realization,seed,baseline_ecs,ecs,runtime_ms";

/// One (model, strength, perturbation, level, realization) measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub model: String,
    pub strength: f64,
    pub perturbation: String,
    pub level: f64,
    pub realization: usize,
    pub seed: u64,
    pub baseline_ecs: f64,
    pub ecs: f64,
    pub runtime_ms: u64,
}

impl RunRecord {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{:.6},{},{:.6},{},{},{:.6},{:.6},{}",
            self.dataset,
            self.model,
            self.strength,
            self.perturbation,
            self.level,
            self.realization,
            self.seed,
            self.baseline_ecs,
            self.ecs,
            self.runtime_ms
        )
    }

    /// Rounds real fields to the six decimals the CSV keeps.
    pub fn rounded(&self) -> Self {
        let r = |v: f64| format!("{v:.6}").parse().expect("formatted float");
        Self {
            strength: r(self.strength),
            level: r(self.level),
            baseline_ecs: r(self.baseline_ecs),
            ecs: r(self.ecs),
            ..self.clone()
        }
    }
}

fn parse_line(path: &Path, line: usize, text: &str) -> Result<RunRecord, HarnessError> {
    let f: Vec<&str> = text.split(',').collect();
    if f.len() != 10 {
        return Err(HarnessError::parse(path, line, format!("expected 10 fields, found {}", f.len())));
    }
    let err = |what: &str| HarnessError::parse(path, line, format!("bad {what}"));
    let real = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(what));
    Ok(RunRecord {
        dataset: f[0].to_string(),
        model: f[1].to_string(),
        strength: real(f[2], "strength")?,
        perturbation: f[3].to_string(),
        level: real(f[4], "level")?,
        realization: f[5].parse().map_err(|_| err("realization"))?,
        seed: f[6].parse().map_err(|_| err("seed"))?,
        baseline_ecs: real(f[7], "baseline_ecs")?,
        ecs: real(f[8], "ecs")?,
        runtime_ms: f[9].parse().map_err(|_| err("runtime_ms"))?,
    })
}

pub fn write_csv(records: &[RunRecord], path: &Path) -> Result<(), HarnessError> {
    let mut sink = CsvSink::create(path)?;
    for r in records {
        sink.push(r)?;
    }
    sink.finish()
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if i == 0 {
            if line.trim() != CSV_HEADER {
                return Err(HarnessError::parse(path, 1, "unexpected header"));
            }
            continue;
        }
        if !line.trim().is_empty() {
            out.push(parse_line(path, i + 1, line.trim())?);
        }
    }
    if out.is_empty() && std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true) {
        return Err(HarnessError::parse(path, 1, "missing header"));
    }
    Ok(out)
}

pub fn write_json(records: &[RunRecord], path: &Path) -> Result<(), HarnessError> {
    let rounded: Vec<RunRecord> = records.iter().map(RunRecord::rounded).collect();
    let text = serde_json::to_string_pretty(&rounded).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

pub fn read_json(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::parse(path, e.line(), e.to_string()))
}

/// Append-only CSV writer that accepts out-of-order batches and writes
/// them in index order, flushing after each written batch.
pub struct CsvSink {
    path: PathBuf,
    w: BufWriter<std::fs::File>,
    next: usize,
    pending: BTreeMap<usize, Vec<RunRecord>>,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{CSV_HEADER}").map_err(|e| HarnessError::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), w, next: 0, pending: BTreeMap::new() })
    }

    pub fn push(&mut self, r: &RunRecord) -> Result<(), HarnessError> {
        writeln!(self.w, "{}", r.to_csv_line()).map_err(|e| HarnessError::io(&self.path, e))
    }

    /// Queues batch `index`; writes every batch that is now contiguous.
    pub fn submit(&mut self, index: usize, batch: Vec<RunRecord>) -> Result<(), HarnessError> {
        self.pending.insert(index, batch);
        while let Some(batch) = self.pending.remove(&self.next) {
            for r in &batch {
                self.push(r)?;
            }
            self.next += 1;
            self.w.flush().map_err(|e| HarnessError::io(&self.path, e))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), HarnessError> {
        let rest = std::mem::take(&mut self.pending);
        for r in rest.into_values().flatten() {
            self.push(&r)?;
        }
        self.w.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(i: usize) -> RunRecord {
        RunRecord {
            dataset: "lfr".into(),
            model: "gcn".into(),
            strength: 0.1,
            perturbation: "scale".into(),
            level: 5.0,
            realization: i,
            seed: 18_446_744_073_709_551_615,
            baseline_ecs: 0.987_654_321,
            ecs: 0.5,
            runtime_ms: 0,
        }
    }

    #[test]
    fn empty_set_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{CSV_HEADER}\n"));
        assert!(read_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn one_record_round_trips_at_six_decimals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&[record(3)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with("lfr,gcn,0.100000,scale,5.000000,3,18446744073709551615,0.987654,0.500000,0\n"));
        assert_eq!(read_csv(&path).unwrap(), vec![record(3).rounded()]);
    }

    #[test]
    fn sink_orders_batches() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let mut sink = CsvSink::create(&a).unwrap();
        sink.submit(2, vec![record(4)]).unwrap();
        sink.submit(0, vec![record(0), record(1)]).unwrap();
        sink.submit(1, vec![record(2), record(3)]).unwrap();
        sink.finish().unwrap();
        write_csv(&(0..5).map(record).collect::<Vec<_>>(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn bad_rows_report_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, format!("{CSV_HEADER}\n{}\nlfr,gcn\n", record(0).to_csv_line())).unwrap();
        assert!(matches!(read_csv(&path), Err(HarnessError::Parse { line: 3, .. })));
        std::fs::write(&path, "a,b\n").unwrap();
        assert!(matches!(read_csv(&path), Err(HarnessError::Parse { line: 1, .. })));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_json(&[record(1), record(2)], &path).unwrap();
        assert_eq!(read_json(&path).unwrap(), vec![record(1).rounded(), record(2).rounded()]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4))]
        #[test]
        fn ten_thousand_records_round_trip(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let records: Vec<RunRecord> = (0..10_000)
                .map(|i| RunRecord {
                    dataset: "adcsbm".into(),
                    model: ["gcn", "dmon", "gat"][i % 3].into(),
                    strength: rng.random_range(0.0..5.0),
                    perturbation: "random".into(),
                    level: rng.random_range(0.0..1.0),
                    realization: i,
                    seed: rng.random(),
                    baseline_ecs: rng.random_range(0.0..=1.0),
                    ecs: rng.random_range(0.0..=1.0),
                    runtime_ms: rng.random_range(0..100_000),
                })
                .map(|r| r.rounded())
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.csv");
            write_csv(&records, &path).unwrap();
            prop_assert_eq!(read_csv(&path).unwrap(), records);
        }
    }
}
