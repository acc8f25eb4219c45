//! LIBSVM sparse-format ingestion and epoch-based mini-batching.
//!
//! Each line holds a label followed by ascending 1-based `index:value` pairs:
//!
//! ```text
//! +1 3:1.5 7:0.25
//! 0 1:2 # trailing comments are ignored
//! ```
//!
//! Labels are mapped to `{-1, +1}` on ingestion (`0 → -1`).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::base::{Draw, DrawSampler, RngStream};
use crate::error::{Error, Result};

/// Row-sparse binary classification data with 0-based feature indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDataset {
    n_features: usize,
    rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<f64>,
}

impl SparseDataset {
    /// Builds a dataset from already 0-based rows, checking the row invariants.
    pub fn new(n_features: usize, rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("dataset has no samples"));
        }
        if rows.len() != labels.len() {
            return Err(Error::param(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for (r, row) in rows.iter().enumerate() {
            for (k, &(idx, value)) in row.iter().enumerate() {
                if idx >= n_features {
                    return Err(Error::param(format!(
                        "row {r}: feature {idx} >= n_features {n_features}"
                    )));
                }
                if k > 0 && row[k - 1].0 >= idx {
                    return Err(Error::param(format!("row {r}: indices not strictly increasing")));
                }
                if !value.is_finite() {
                    return Err(Error::NonFinite("feature value"));
                }
            }
        }
        for &y in &labels {
            if y != 1.0 && y != -1.0 {
                return Err(Error::param(format!("label {y} is not +1/-1")));
            }
        }
        Ok(Self {
            n_features,
            rows,
            labels,
        })
    }

    /// Dense rows; zero entries are dropped.
    pub fn from_dense(features: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let d = features.first().map_or(0, Vec::len);
        let rows = features
            .iter()
            .map(|x| {
                x.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v))
                    .collect()
            })
            .collect();
        Self::new(d, rows, labels)
    }

    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|(_, v)| v * v).sum()
    }

    /// Canonical LIBSVM text: `+1`/`-1` labels, shortest round-trip values, LF endings.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for (row, &y) in self.rows.iter().zip(&self.labels) {
            out.push_str(if y > 0.0 { "+1" } else { "-1" });
            for &(idx, v) in row {
                let _ = write!(out, " {}:{}", idx + 1, v);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LibsvmOptions {
    /// Feature count when known in advance; must cover every index seen.
    pub n_features: Option<usize>,
}

pub fn parse_libsvm(text: &[u8]) -> Result<SparseDataset> {
    parse_libsvm_with(text, LibsvmOptions::default())
}

pub fn parse_libsvm_with(text: &[u8], opts: LibsvmOptions) -> Result<SparseDataset> {
    let text = std::str::from_utf8(text).map_err(|e| {
        let line = text[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1;
        Error::Parse {
            line,
            message: "invalid UTF-8".into(),
        }
    })?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("malformed label '{label_tok}'")))?;
        let label = match label {
            l if l == 0.0 || l == -1.0 => -1.0,
            l if l == 1.0 => 1.0,
            l => return Err(err(format!("label {l} is not one of 0, 1, -1, +1"))),
        };

        let mut row: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed token '{tok}'")))?;
            let idx: usize = idx_s
                .parse()
                .map_err(|_| err(format!("malformed index in '{tok}'")))?;
            if idx == 0 {
                return Err(err(format!("index 0 in '{tok}'; indices are 1-based")));
            }
            let value: f64 = val_s
                .parse()
                .map_err(|_| err(format!("malformed value in '{tok}'")))?;
            if !value.is_finite() {
                return Err(err(format!("non-finite value in '{tok}'")));
            }
            if let Some(&(prev, _)) = row.last() {
                if idx - 1 <= prev {
                    return Err(err(format!(
                        "index {idx} does not follow {} in ascending order",
                        prev + 1
                    )));
                }
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, value));
        }
        rows.push(row);
        labels.push(label);
    }

    if rows.is_empty() {
        return Err(Error::Empty("LIBSVM input has no samples"));
    }
    let n_features = match opts.n_features {
        Some(d) if d < max_index => {
            return Err(Error::param(format!(
                "n_features {d} is smaller than the largest index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    SparseDataset::new(n_features, rows, labels)
}

/// Reads a LIBSVM file, decompressing when the name ends in `.gz`.
pub fn read_libsvm_file(path: impl AsRef<Path>, opts: LibsvmOptions) -> Result<SparseDataset> {
    let path = path.as_ref();
    let file = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut bytes)?;
    } else {
        let mut file = file;
        file.read_to_end(&mut bytes)?;
    }
    parse_libsvm_with(&bytes, opts)
}

/// One percent of the sample count, at least one.
pub fn default_batch_size(n_samples: usize) -> usize {
    ((0.01 * n_samples as f64).round() as usize).max(1)
}

/// Shuffles `0..n`, hands out consecutive chunks, and reshuffles once the
/// permutation is used up. The last chunk of an epoch may be short.
#[derive(Debug, Clone)]
pub struct EpochBatcher {
    batch_size: usize,
    n_samples: usize,
    rng: RngStream,
    permutation: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl EpochBatcher {
    pub fn new(batch_size: usize, n_samples: usize, rng: RngStream) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::param("batch size must be >= 1"));
        }
        if batch_size > n_samples {
            return Err(Error::param(format!(
                "batch size {batch_size} exceeds sample count {n_samples}"
            )));
        }
        Ok(Self {
            batch_size,
            n_samples,
            rng,
            permutation: (0..n_samples).collect(),
            cursor: n_samples,
            epoch: 0,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Number of permutations drawn so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor >= self.n_samples {
            self.permutation.sort_unstable();
            self.permutation.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let end = (self.cursor + self.batch_size).min(self.n_samples);
        let batch = self.permutation[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }
}

impl DrawSampler for EpochBatcher {
    fn next_draw(&mut self) -> Result<Draw> {
        Ok(Draw::Batch(self.next_batch()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_single_row() {
        let ds = parse_libsvm(b"+1 3:1.5 7:0.25\n").unwrap();
        assert_eq!(ds.n_samples(), 1);
        assert_eq!(ds.n_features(), 7);
        assert_eq!(ds.row(0), &[(2, 1.5), (6, 0.25)]);
        assert_eq!(ds.label(0), 1.0);
    }

    #[test]
    fn zero_label_maps_to_minus_one() {
        let ds = parse_libsvm(b"0 1:2\n").unwrap();
        assert_eq!(ds.label(0), -1.0);
        assert_eq!(ds.row(0), &[(0, 2.0)]);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(parse_libsvm(b""), Err(Error::Empty(_))));
        assert!(matches!(parse_libsvm(b"\n  \n# only a comment\n"), Err(Error::Empty(_))));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases: [(&[u8], usize); 6] = [
            (b"+1 1:1\n-1 3:1 2:1\n", 2),
            (b"+1 1:1\n+1 2:1\n-1 x:1\n", 3),
            (b"+1 1:abc\n", 1),
            (b"+1 1\n", 1),
            (b"+1 0:1\n", 1),
            (b"+1 1:1\n\n2 1:1\n", 3),
        ];
        for (text, line) in cases {
            match parse_libsvm(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{:?}", std::str::from_utf8(text)),
                other => panic!("expected parse error, got {other:?}"),
            }
        }
        assert!(matches!(parse_libsvm(b"+1 2:1 2:3\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn feature_count_override() {
        let ds = parse_libsvm_with(b"1 2:1\n", LibsvmOptions { n_features: Some(10) }).unwrap();
        assert_eq!(ds.n_features(), 10);
        assert!(parse_libsvm_with(b"1 5:1\n", LibsvmOptions { n_features: Some(3) }).is_err());
    }

    #[test]
    fn empty_rows_and_comments() {
        let ds = parse_libsvm(b"-1\n+1 4:2 # note\n").unwrap();
        assert_eq!(ds.n_samples(), 2);
        assert!(ds.row(0).is_empty());
        assert_eq!(ds.n_features(), 4);
    }

    #[test]
    fn batches_partition_each_epoch() {
        let mut b = EpochBatcher::new(2, 4, RngStream::new(1, 0)).unwrap();
        let first = b.next_batch();
        let second = b.next_batch();
        assert_eq!(first.len(), 2);
        let mut all: Vec<usize> = first.iter().chain(&second).copied().collect();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(b.epoch(), 1);
        b.next_batch();
        assert_eq!(b.epoch(), 2);
    }

    #[test]
    fn remainder_batch_is_emitted() {
        let mut b = EpochBatcher::new(2, 5, RngStream::new(9, 2)).unwrap();
        let sizes: Vec<usize> = (0..3).map(|_| b.next_batch().len()).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
    }

    #[test]
    fn batch_sequences_are_reproducible() {
        let run = |seed| {
            let mut b = EpochBatcher::new(3, 10, RngStream::new(seed, 5)).unwrap();
            (0..20).map(|_| b.next_batch()).collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn oversize_batch_is_rejected() {
        assert!(EpochBatcher::new(5, 4, RngStream::new(0, 0)).is_err());
        assert!(EpochBatcher::new(0, 4, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn default_batch_size_rule() {
        assert_eq!(default_batch_size(8124), 81);
        assert_eq!(default_batch_size(20242), 202);
        assert_eq!(default_batch_size(10), 1);
        assert_eq!(default_batch_size(1), 1);
    }

    #[test]
    fn gzip_input_is_accepted() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.svm.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::default());
        enc.write_all(b"+1 1:0.5\n0 2:1\n").unwrap();
        enc.finish().unwrap();
        let ds = read_libsvm_file(&path, LibsvmOptions::default()).unwrap();
        assert_eq!(ds.n_samples(), 2);
        assert_eq!(ds.labels(), &[1.0, -1.0]);
    }

    fn arb_dataset() -> impl Strategy<Value = SparseDataset> {
        let row = proptest::collection::btree_map(0usize..30, -1e6f64..1e6, 0..6);
        (proptest::collection::vec((row, any::<bool>()), 1..12)).prop_map(|rows| {
            let labels = rows.iter().map(|(_, p)| if *p { 1.0 } else { -1.0 }).collect();
            let rows = rows.into_iter().map(|(r, _)| r.into_iter().collect()).collect();
            SparseDataset::new(30, rows, labels).unwrap()
        })
    }

    proptest! {
        #[test]
        fn canonical_form_is_idempotent(ds in arb_dataset()) {
            let text = ds.to_libsvm();
            let opts = LibsvmOptions { n_features: Some(30) };
            let reparsed = parse_libsvm_with(text.as_bytes(), opts).unwrap();
            prop_assert_eq!(&reparsed, &ds);
            prop_assert_eq!(reparsed.to_libsvm(), text);
        }

        #[test]
        fn every_epoch_covers_all_indices(n in 1usize..60, bs in 1usize..60, seed in any::<u64>()) {
            prop_assume!(bs <= n);
            let mut b = EpochBatcher::new(bs, n, RngStream::new(seed, 0)).unwrap();
            for _ in 0..3 {
                let mut seen = Vec::new();
                let per_epoch = n.div_ceil(bs);
                for _ in 0..per_epoch {
                    seen.extend(b.next_batch());
                }
                seen.sort();
                prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
