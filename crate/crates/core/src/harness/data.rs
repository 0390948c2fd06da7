use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, RngState};
use crate::network::Batch;

use super::config::DatasetConfig;

const DATA_STREAM: u64 = 0xDA7A;

/// Train and test splits, samples as columns.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train_x: DenseMatrix,
    pub train_y: Vec<usize>,
    pub test_x: DenseMatrix,
    pub test_y: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn d_in(&self) -> usize {
        self.train_x.rows()
    }

    pub fn n_train(&self) -> usize {
        self.train_y.len()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let x = self.train_x.select_columns(indices);
        Batch::new(x, indices.iter().map(|&i| self.train_y[i]).collect())
    }

    pub fn load(cfg: &DatasetConfig, seed: u64) -> Result<Self> {
        match &cfg.csv_path {
            Some(path) => load_csv(path, cfg.n_test, seed),
            None => Ok(gaussian_mixture(cfg, seed)),
        }
    }
}

/// Class centers `c_k ~ N(0, center_scale² I)`, samples `c_y + spread · N(0, I)`,
/// labels balanced round-robin.
pub fn gaussian_mixture(cfg: &DatasetConfig, seed: u64) -> Dataset {
    let mut rng = RngState::substream(seed, &[DATA_STREAM]);
    let (k, d) = (cfg.n_classes, cfg.d_in);
    let centers = DenseMatrix::from_fn(d, k, |_, _| cfg.center_scale * rng.gaussian());
    let mut draw = |n: usize| {
        let y: Vec<usize> = (0..n).map(|i| i % k).collect();
        let mut x = DenseMatrix::zeros(d, n);
        for (j, &c) in y.iter().enumerate() {
            for i in 0..d {
                x.as_mut_slice()[i * n + j] = centers[(i, c)] + cfg.spread * rng.gaussian();
            }
        }
        (x, y)
    };
    let (train_x, train_y) = draw(cfg.n_train);
    let (test_x, test_y) = draw(cfg.n_test);
    Dataset {
        train_x,
        train_y,
        test_x,
        test_y,
        n_classes: k,
    }
}

/// Reads `features..., label` rows (header required), shuffles them with
/// `seed` and holds out the last `n_test`.
pub fn load_csv(path: &Path, n_test: usize, seed: u64) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |what: &str| {
            Error::InvalidConfig(format!("{}: row {}: {what}", path.display(), line + 1))
        };
        if record.len() < 2 {
            return Err(bad("need at least one feature and a label"));
        }
        let mut features = Vec::with_capacity(record.len() - 1);
        for field in record.iter().take(record.len() - 1) {
            features.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| bad("non-numeric feature"))?,
            );
        }
        let label = record[record.len() - 1]
            .trim()
            .parse::<usize>()
            .map_err(|_| bad("label must be a non-negative integer"))?;
        if let Some((first, _)) = rows.first() {
            if first.len() != features.len() {
                return Err(bad("inconsistent feature count"));
            }
        }
        rows.push((features, label));
    }
    if rows.len() <= n_test {
        return Err(Error::InvalidConfig(format!(
            "{} has {} rows, need more than n_test = {n_test}",
            path.display(),
            rows.len()
        )));
    }
    RngState::substream(seed, &[DATA_STREAM]).shuffle(&mut rows);
    let n_classes = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    let split = rows.len() - n_test;
    let to_matrix = |part: &[(Vec<f64>, usize)]| -> Result<(DenseMatrix, Vec<usize>)> {
        let d = part.first().map_or(0, |r| r.0.len());
        let x = DenseMatrix::from_fn(d, part.len(), |i, j| part[j].0[i]);
        if !x.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "{}: non-finite feature",
                path.display()
            )));
        }
        Ok((x, part.iter().map(|r| r.1).collect()))
    };
    let (train_x, train_y) = to_matrix(&rows[..split])?;
    let (test_x, test_y) = to_matrix(&rows[split..])?;
    Ok(Dataset {
        train_x,
        train_y,
        test_x,
        test_y,
        n_classes: n_classes.max(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_shapes_and_determinism() {
        let cfg = DatasetConfig {
            n_train: 50,
            n_test: 20,
            ..DatasetConfig::default()
        };
        let a = gaussian_mixture(&cfg, 3);
        let b = gaussian_mixture(&cfg, 3);
        assert_eq!(a.train_x, b.train_x);
        assert_eq!(a.train_x.shape(), (32, 50));
        assert_eq!(a.test_y.len(), 20);
        assert!(a.train_y.iter().all(|&y| y < 10));
        assert_ne!(a.train_x, gaussian_mixture(&cfg, 4).train_x);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut text = String::from("a,b,label\n");
        for i in 0..10 {
            text.push_str(&format!("{},{},{}\n", i, -(i as f64), i % 3));
        }
        std::fs::write(&path, text).unwrap();
        let data = load_csv(&path, 4, 1).unwrap();
        assert_eq!(data.d_in(), 2);
        assert_eq!(
            (data.n_train(), data.test_y.len(), data.n_classes),
            (6, 4, 3)
        );
        for j in 0..6 {
            assert_eq!(data.train_x[(1, j)], -data.train_x[(0, j)]);
            assert_eq!(data.train_y[j], data.train_x[(0, j)] as usize % 3);
        }
        std::fs::write(&path, "a,label\nx,1\n").unwrap();
        assert!(load_csv(&path, 0, 1).is_err());
    }
}
