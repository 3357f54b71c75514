//! Campaign statistics: `stats.jsonl` samples and CSV export.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str = "execs,seconds,edges,corpus_size,unique_crashes,unique_hangs,execs_per_sec";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSample {
    pub execs: u64,
    pub seconds: f64,
    /// Edges seen at any bucket.
    pub edges: usize,
    pub corpus_size: usize,
    pub unique_crashes: usize,
    pub unique_hangs: usize,
    pub execs_per_sec: f64,
}

impl StatsSample {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.3},{},{},{},{},{:.1}",
            self.execs,
            self.seconds,
            self.edges,
            self.corpus_size,
            self.unique_crashes,
            self.unique_hangs,
            self.execs_per_sec
        )
    }
}

pub fn append(out: &mut impl Write, sample: &StatsSample) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, sample)?;
    out.write_all(b"\n")
}

pub fn read_jsonl(path: &Path) -> anyhow::Result<Vec<StatsSample>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn to_csv(samples: &[StatsSample]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for sample in samples {
        s.push_str(&sample.csv_row());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_csv() {
        let s = StatsSample {
            execs: 10,
            seconds: 0.5,
            edges: 3,
            corpus_size: 2,
            unique_crashes: 1,
            unique_hangs: 0,
            execs_per_sec: 20.0,
        };
        let mut buf = Vec::new();
        append(&mut buf, &s).unwrap();
        append(&mut buf, &s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.jsonl");
        std::fs::write(&path, &buf).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back, vec![s, s]);
        let csv = to_csv(&back);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(csv.lines().nth(1).unwrap(), "10,0.500,3,2,1,0,20.0");
    }
}
