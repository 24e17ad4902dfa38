use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;

use crate::common::SeededRng;
use crate::error::{Error, Result};

/// Sparse rows read from a LIBSVM text file. Indices are 0-based here.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LibsvmDataset {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub labels: Vec<f64>,
    pub n_features: usize,
}

impl LibsvmDataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows.len(), self.n_features);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out[(i, j)] = v;
            }
        }
        out
    }
}

pub fn parse_libsvm(path: impl AsRef<Path>) -> Result<LibsvmDataset> {
    let file = File::open(path)?;
    parse_libsvm_reader(BufReader::new(file))
}

/// Grammar per line: `label idx:val idx:val ...` with 1-based, strictly
/// increasing indices. Blank lines are skipped.
pub fn parse_libsvm_reader<R: BufRead>(reader: R) -> Result<LibsvmDataset> {
    let mut ds = LibsvmDataset::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(label) = tokens.next() else {
            continue;
        };
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let label: f64 = label
            .parse()
            .map_err(|_| err(format!("bad label {label:?}")))?;
        let mut row = Vec::new();
        let mut last: Option<usize> = None;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected idx:val, found {tok:?}")))?;
            let i: usize = i
                .parse()
                .map_err(|_| err(format!("bad index in {tok:?}")))?;
            if i == 0 {
                return Err(err(format!("indices are 1-based, found {tok:?}")));
            }
            let v: f64 = v
                .parse()
                .map_err(|_| err(format!("bad value in {tok:?}")))?;
            let j = i - 1;
            if last.is_some_and(|p| j <= p) {
                return Err(err(format!(
                    "indices must be strictly increasing at {tok:?}"
                )));
            }
            last = Some(j);
            ds.n_features = ds.n_features.max(i);
            row.push((j, v));
        }
        ds.rows.push(row);
        ds.labels.push(label);
    }
    Ok(ds)
}

/// Minimum target dimension from the Johnson-Lindenstrauss bound
/// `4 ln(n) / (eps^2/2 - eps^3/3)`.
pub fn jl_min_dim(n_samples: usize, eps: f64) -> usize {
    let denom = eps * eps / 2.0 - eps * eps * eps / 3.0;
    (4.0 * (n_samples as f64).ln() / denom) as usize
}

/// Sparse sign projection to `target_dim` columns: each entry of the
/// projection matrix is `+-sqrt(s / target_dim)` with probability `1/(2s)`
/// each and zero otherwise, `s = sqrt(n_features)`.
///
/// With `identity_if_same_dim` and `target_dim == n_features`, the dense input
/// is returned unchanged.
pub fn sparse_random_project(
    ds: &LibsvmDataset,
    target_dim: usize,
    rng: &mut SeededRng,
    identity_if_same_dim: bool,
) -> Result<DMatrix<f64>> {
    if target_dim == 0 {
        return Err(Error::Argument(
            "target dimension must be at least 1".into(),
        ));
    }
    if identity_if_same_dim && target_dim == ds.n_features {
        return Ok(ds.to_dense());
    }
    let s = (ds.n_features.max(1) as f64).sqrt();
    let p_half = 0.5 / s;
    let scale = (s / target_dim as f64).sqrt();
    // column lists of the projection matrix, one per input feature
    let mut proj: Vec<Vec<(usize, f64)>> = Vec::with_capacity(ds.n_features);
    for _ in 0..ds.n_features {
        let mut col = Vec::new();
        for t in 0..target_dim {
            let u = rng.uniform();
            if u < p_half {
                col.push((t, scale));
            } else if u < 2.0 * p_half {
                col.push((t, -scale));
            }
        }
        proj.push(col);
    }
    let mut out = DMatrix::zeros(ds.rows.len(), target_dim);
    for (i, row) in ds.rows.iter().enumerate() {
        for &(j, v) in row {
            for &(t, r) in &proj[j] {
                out[(i, t)] += v * r;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<LibsvmDataset> {
        parse_libsvm_reader(s.as_bytes())
    }

    #[test]
    fn parses_one_line() {
        let ds = parse("1.5 1:2.0 3:-1.0\n").unwrap();
        assert_eq!(ds.labels, vec![1.5]);
        assert_eq!(ds.rows, vec![vec![(0, 2.0), (2, -1.0)]]);
        assert_eq!(ds.n_features, 3);
    }

    #[test]
    fn empty_input_has_no_rows() {
        let ds = parse("").unwrap();
        assert_eq!(ds.n_rows(), 0);
    }

    #[test]
    fn malformed_value_names_the_line() {
        match parse("1:abc\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        match parse("1 1:1\n2 3:1 2:4\n") {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("increasing"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse("1 0:1\n").is_err());
        assert!(parse("1 2\n").is_err());
    }

    #[test]
    fn reads_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.svm");
        std::fs::write(&p, "0.5 2:1\n\n-1 1:3 4:0.25\n").unwrap();
        let ds = parse_libsvm(&p).unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.n_features, 4);
        assert!(parse_libsvm(dir.path().join("missing")).is_err());
    }

    #[test]
    fn identity_bypass() {
        let ds = parse("1 1:2 2:3\n0 2:-1\n").unwrap();
        let m = sparse_random_project(&ds, 2, &mut SeededRng::new(0), true).unwrap();
        assert_eq!(m, ds.to_dense());
    }

    #[test]
    fn projection_is_deterministic() {
        let ds = parse("1 1:2 5:3 9:1\n0 2:-1 7:4\n").unwrap();
        let a = sparse_random_project(&ds, 4, &mut SeededRng::new(3), false).unwrap();
        let b = sparse_random_project(&ds, 4, &mut SeededRng::new(3), false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn projection_roughly_preserves_norms() {
        let mut rng = SeededRng::new(21);
        let n_features = 2000;
        let mut ds = LibsvmDataset {
            n_features,
            ..Default::default()
        };
        for _ in 0..50 {
            let mut row = Vec::new();
            for j in 0..n_features {
                if rng.uniform() < 0.05 {
                    row.push((j, rng.standard_normal()));
                }
            }
            ds.rows.push(row);
            ds.labels.push(0.0);
        }
        let proj = sparse_random_project(&ds, 64, &mut rng, false).unwrap();
        let mut distortion = 0.0;
        for (i, row) in ds.rows.iter().enumerate() {
            let orig: f64 = row.iter().map(|(_, v)| v * v).sum();
            let new = proj.row(i).norm_squared();
            distortion += (new / orig - 1.0).abs();
        }
        distortion /= ds.rows.len() as f64;
        assert!(distortion <= 0.3, "mean distortion {distortion}");
    }

    #[test]
    fn jl_dimension_for_e2006() {
        assert_eq!(jl_min_dim(16087, 0.3), 1076);
    }
}
