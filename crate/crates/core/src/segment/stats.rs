//! Corpus statistics and segmentation throughput.

use std::collections::BTreeMap;
use std::fs;
use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use crate::corpus::{InstructionRecord, Vocab};
use crate::error::{Error, Result};
use crate::segment::{segment_instruction, RefineRuleSet};

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    pub records: usize,
    /// Fraction of records split into at least two sub-instructions.
    pub segment_ratio: f64,
    pub avg_sub_count: f64,
    /// Sub-instruction count → number of records with that count.
    pub histogram: BTreeMap<usize, usize>,
}

pub fn corpus_stats(records: &[InstructionRecord]) -> Result<CorpusStats> {
    if records.is_empty() {
        return Err(Error::invalid("statistics of an empty corpus"));
    }
    let mut histogram = BTreeMap::new();
    let mut segmented = 0usize;
    let mut total = 0usize;
    for r in records {
        let n = r.sub_instructions.len();
        *histogram.entry(n).or_insert(0) += 1;
        total += n;
        if n >= 2 {
            segmented += 1;
        }
    }
    let count = records.len() as f64;
    Ok(CorpusStats {
        records: records.len(),
        segment_ratio: segmented as f64 / count,
        avg_sub_count: total as f64 / count,
        histogram,
    })
}

/// Histogram as CSV with header `sub_count,frequency`.
pub fn write_histogram_csv(stats: &CorpusStats, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::from("sub_count,frequency\n");
    for (count, freq) in &stats.histogram {
        text.push_str(&format!("{count},{freq}\n"));
    }
    fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Throughput {
    pub instructions: usize,
    pub total_seconds: f64,
    pub instructions_per_second: f64,
}

impl Throughput {
    /// Projected single-threaded wall time for `count` instructions.
    pub fn projected_seconds(&self, count: usize) -> f64 {
        count as f64 / self.instructions_per_second
    }
}

/// Times single-threaded segmentation of the corpus, `repeat` passes.
pub fn bench_throughput(
    records: &[InstructionRecord],
    repeat: usize,
    rules: &RefineRuleSet,
    vocab: &Vocab,
) -> Result<Throughput> {
    if records.is_empty() {
        return Err(Error::invalid("throughput benchmark needs at least one record"));
    }
    let repeat = repeat.max(1);
    let start = Instant::now();
    for _ in 0..repeat {
        for r in records {
            black_box(segment_instruction(black_box(&r.instruction), rules, vocab)?);
        }
    }
    let total_seconds = start.elapsed().as_secs_f64().max(1e-9);
    let instructions = records.len() * repeat;
    Ok(Throughput {
        instructions,
        total_seconds,
        instructions_per_second: instructions as f64 / total_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n: usize) -> InstructionRecord {
        InstructionRecord {
            sub_instructions: vec!["walk".into(); n],
            tokens: vec![vec![1]; n],
            ..InstructionRecord::new("r", "walk")
        }
    }

    #[test]
    fn stats_examples() {
        let s = corpus_stats(&[rec(2), rec(2)]).unwrap();
        assert_eq!((s.segment_ratio, s.avg_sub_count), (1.0, 2.0));
        let s = corpus_stats(&[rec(1), rec(3)]).unwrap();
        assert_eq!((s.segment_ratio, s.avg_sub_count), (0.5, 2.0));
        assert_eq!(s.histogram, BTreeMap::from([(1, 1), (3, 1)]));
        assert!(corpus_stats(&[]).is_err());
    }

    #[test]
    fn histogram_csv_layout() {
        let s = corpus_stats(&[rec(1), rec(3), rec(3)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_histogram_csv(&s, &path).unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), "sub_count,frequency\n1,1\n3,2\n");
    }

    #[test]
    fn bench_reports_positive_rate() {
        let r = [InstructionRecord::new("a", "Walk forward and turn left. Stop.")];
        let t = bench_throughput(&r, 1, &RefineRuleSet::default(), &Vocab::default()).unwrap();
        assert!(t.instructions_per_second > 0.0);
        assert_eq!(t.instructions, 1);
        assert!(bench_throughput(&[], 1, &RefineRuleSet::default(), &Vocab::default()).is_err());
    }
}
