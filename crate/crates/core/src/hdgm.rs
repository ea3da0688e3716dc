//! High-dimensional bimodal Gaussian mixture (HDGM) benchmarks and labeled
//! dataset plumbing.
//!
//! Every distribution is an equal-weight mixture of `c = 2` Gaussian clusters in
//! `d` dimensions with means `μ1 = 0` and `μ2 = Δμ · 1`. `P` uses identity
//! covariances. The alternative `Q` shifts every coordinate by `Δq` and gives
//! cluster `i` a correlation `Δi` (`Δ1 = 0.5`, `Δ2 = -0.5`) between the first
//! two coordinates. Under the null, `Q` is the same law as `P`.

use std::io::{BufRead, Write};

use ndarray::{s, Array1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;
use crate::rng::{fill_standard_normal, rng_from_seed};

/// Number of mixture components.
pub const CLUSTERS: usize = 2;

/// First-block correlation of each cluster under the alternative.
pub const CLUSTER_CORRELATIONS: [f64; CLUSTERS] = [0.5, -0.5];

/// Difficulty presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Easy,
    Medium,
    Hard,
}

impl Level {
    /// `(Δμ, Δq)` for this level.
    pub fn gaps(self) -> (f64, f64) {
        match self {
            Level::Easy => (10.0, 5.0),
            Level::Medium => (10.0, 0.0),
            Level::Hard => (0.5, 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Easy => "hdgm-easy",
            Level::Medium => "hdgm-medium",
            Level::Hard => "hdgm-hard",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "P")]
    P,
    #[serde(rename = "Q-null")]
    QNull,
    #[serde(rename = "Q-alt")]
    QAlt,
}

/// Parameters of one HDGM distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HdgmSpec {
    pub d: usize,
    pub delta_mu: f64,
    pub delta_q: f64,
    pub role: Role,
}

impl HdgmSpec {
    pub fn p(d: usize, level: Level) -> Self {
        let (delta_mu, delta_q) = level.gaps();
        Self {
            d,
            delta_mu,
            delta_q,
            role: Role::P,
        }
    }

    pub fn q_null(d: usize, level: Level) -> Self {
        Self {
            role: Role::QNull,
            ..Self::p(d, level)
        }
    }

    pub fn q_alt(d: usize, level: Level) -> Self {
        Self {
            role: Role::QAlt,
            ..Self::p(d, level)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidInput(format!(
                "HDGM dimension must be >= 2, got {}",
                self.d
            )));
        }
        if !self.delta_mu.is_finite() || !self.delta_q.is_finite() {
            return Err(Error::InvalidInput("HDGM gaps must be finite".into()));
        }
        Ok(())
    }

    /// Mean of cluster `cluster` (0-based).
    pub fn mean(&self, cluster: usize) -> Array1<f64> {
        let shift = match self.role {
            Role::QAlt => self.delta_q,
            Role::P | Role::QNull => 0.0,
        };
        Array1::from_elem(self.d, cluster as f64 * self.delta_mu + shift)
    }

    /// Covariance of cluster `cluster` (0-based).
    pub fn covariance(&self, cluster: usize) -> Matrix {
        let mut cov = Matrix::eye(self.d);
        if self.role == Role::QAlt {
            let rho = CLUSTER_CORRELATIONS[cluster];
            cov[[0, 1]] = rho;
            cov[[1, 0]] = rho;
        }
        cov
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(shape_err("cholesky", "square matrix", format!("{:?}", a.dim())));
    }
    let mut l = Matrix::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                let diag = a[[i, i]] - dot;
                if diag <= 0.0 || !diag.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "covariance is not positive definite (pivot {i} = {diag})"
                    )));
                }
                l[[i, j]] = diag.sqrt();
            } else {
                l[[i, j]] = (a[[i, j]] - dot) / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Draws exactly `n_per_cluster` points from each cluster; rows
/// `0..n_per_cluster` come from the first cluster.
pub fn sample_hdgm(spec: &HdgmSpec, n_per_cluster: usize, seed: u64) -> Result<Matrix> {
    spec.validate()?;
    if n_per_cluster == 0 {
        return Err(Error::InvalidInput("n_per_cluster must be >= 1".into()));
    }
    let d = spec.d;
    let mut rng = rng_from_seed(seed);
    let mut out = Matrix::zeros((CLUSTERS * n_per_cluster, d));
    for cluster in 0..CLUSTERS {
        let factor = cholesky(&spec.covariance(cluster))?;
        let mut noise = Matrix::zeros((n_per_cluster, d));
        fill_standard_normal(&mut rng, noise.as_slice_mut().expect("fresh matrix is contiguous"));
        let block = noise.dot(&factor.t()) + &spec.mean(cluster);
        out.slice_mut(s![cluster * n_per_cluster..(cluster + 1) * n_per_cluster, ..])
            .assign(&block);
    }
    Ok(out)
}

/// Pooled points labeled by sample of origin: 0 for `S_P`, 1 for `S_Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub points: Matrix,
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(points: Matrix, labels: Vec<u8>) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(shape_err("dataset labels", points.nrows(), labels.len()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidInput(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// `(count of label 0, count of label 1)`.
    pub fn label_counts(&self) -> (usize, usize) {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        (self.len() - ones, ones)
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            points: self.points.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Rows of each label as separate matrices `(S_P part, S_Q part)`.
    pub fn by_label(&self) -> (Matrix, Matrix) {
        let (zeros, ones): (Vec<usize>, Vec<usize>) = (0..self.len()).partition(|&i| self.labels[i] == 0);
        (self.points.select(Axis(0), &zeros), self.points.select(Axis(0), &ones))
    }
}

/// Stacks `sp` (label 0) above `sq` (label 1).
pub fn build_dataset(sp: &Matrix, sq: &Matrix) -> Result<LabeledDataset> {
    if sp.nrows() == 0 || sq.nrows() == 0 {
        return Err(Error::InvalidInput("both samples must be nonempty".into()));
    }
    if sp.nrows() != sq.nrows() {
        return Err(shape_err("sample sizes (m = n)", sp.nrows(), sq.nrows()));
    }
    if sp.ncols() != sq.ncols() {
        return Err(shape_err("sample dimensions", sp.ncols(), sq.ncols()));
    }
    let points = ndarray::concatenate(Axis(0), &[sp.view(), sq.view()]).expect("widths checked above");
    let labels = std::iter::repeat_n(0u8, sp.nrows())
        .chain(std::iter::repeat_n(1u8, sq.nrows()))
        .collect();
    LabeledDataset::new(points, labels)
}

/// Training and test halves of a labeled dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl SplitDataset {
    pub fn n_te(&self) -> usize {
        self.test.len()
    }
}

/// Stratified half/half split: each half receives exactly half of each label.
pub fn shuffle_split(ds: &LabeledDataset, seed: u64) -> Result<SplitDataset> {
    let (zeros, ones) = ds.label_counts();
    if zeros % 2 != 0 || ones % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "stratified halving needs even label counts, got {zeros} zeros and {ones} ones"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::with_capacity(ds.len() / 2);
    let mut test = Vec::with_capacity(ds.len() / 2);
    for label in [0u8, 1] {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == label).collect();
        idx.shuffle(&mut rng);
        let half = idx.len() / 2;
        train.extend_from_slice(&idx[..half]);
        test.extend_from_slice(&idx[half..]);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(SplitDataset {
        train: ds.select(&train),
        test: ds.select(&test),
    })
}

/// All points with labels removed, in shuffled order.
pub fn strip_labels(ds: &LabeledDataset, seed: u64) -> Matrix {
    shuffled_rows(&ds.points, seed)
}

pub(crate) fn shuffled_rows(points: &Matrix, seed: u64) -> Matrix {
    let mut idx: Vec<usize> = (0..points.nrows()).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    points.select(Axis(0), &idx)
}

/// Provenance record written as the first line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub p: HdgmSpec,
    pub q: HdgmSpec,
    pub n_per_cluster: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    x: Vec<f64>,
    label: u8,
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    header: DatasetHeader,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Record {
    Header(HeaderRecord),
    Point(PointRecord),
}

/// Writes one JSON object per line: an optional header, then `{"x": [...], "label": l}` per point.
pub fn write_jsonl<W: Write>(mut out: W, header: Option<&DatasetHeader>, ds: &LabeledDataset) -> Result<()> {
    if let Some(header) = header {
        serde_json::to_writer(&mut out, &HeaderRecord { header: header.clone() })?;
        out.write_all(b"\n")?;
    }
    for (row, &label) in ds.points.rows().into_iter().zip(&ds.labels) {
        let rec = PointRecord { x: row.to_vec(), label };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<(Option<DatasetHeader>, LabeledDataset)> {
    let mut header = None;
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(&line)? {
            Record::Header(h) if labels.is_empty() && header.is_none() => header = Some(h.header),
            Record::Header(_) => {
                return Err(Error::InvalidInput(format!(
                    "line {}: header must come first",
                    lineno + 1
                )));
            }
            Record::Point(p) => {
                let w = *width.get_or_insert(p.x.len());
                if p.x.len() != w {
                    return Err(shape_err("jsonl point width", w, p.x.len()));
                }
                flat.extend(p.x);
                labels.push(p.label);
            }
        }
    }
    let points = Matrix::from_shape_vec((labels.len(), width.unwrap_or(0)), flat)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((header, LabeledDataset::new(points, labels)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sorted_rows(m: &Matrix) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows
    }

    #[test]
    fn level_gaps() {
        assert_eq!(Level::Easy.gaps(), (10.0, 5.0));
        assert_eq!(Level::Medium.gaps(), (10.0, 0.0));
        assert_eq!(Level::Hard.gaps(), (0.5, 0.0));
        let hard = HdgmSpec::p(10, Level::Hard);
        assert_eq!((hard.delta_mu, hard.delta_q), (0.5, 0.0));
    }

    #[test]
    fn means_and_covariances() {
        let q = HdgmSpec::q_alt(4, Level::Easy);
        assert_eq!(q.mean(0), Array1::from_elem(4, 5.0));
        assert_eq!(q.mean(1), Array1::from_elem(4, 15.0));
        assert_eq!(q.covariance(0)[[0, 1]], 0.5);
        assert_eq!(q.covariance(1)[[1, 0]], -0.5);
        let p = HdgmSpec::p(4, Level::Easy);
        assert_eq!(p.mean(1), Array1::from_elem(4, 10.0));
        assert_eq!(p.covariance(1), Matrix::eye(4));
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 3.0, 0.1], [0.4, 0.1, 1.0]];
        let l = cholesky(&a).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(cholesky(&array![[1.0, 2.0], [2.0, 1.0]]).is_err());
    }

    #[test]
    fn sampling_is_stratified_and_deterministic() {
        let spec = HdgmSpec::q_alt(3, Level::Easy);
        let a = sample_hdgm(&spec, 40, 9).unwrap();
        assert_eq!(a.dim(), (80, 3));
        assert_eq!(a, sample_hdgm(&spec, 40, 9).unwrap());
        assert_ne!(a, sample_hdgm(&spec, 40, 10).unwrap());
        // clusters are 10 apart per coordinate under Easy; first block near 5, second near 15
        assert!(a.slice(s![..40, ..]).mean().unwrap() < 10.0);
        assert!(a.slice(s![40.., ..]).mean().unwrap() > 10.0);
        assert!(sample_hdgm(&spec, 0, 9).is_err());
        assert!(sample_hdgm(&HdgmSpec::p(1, Level::Hard), 5, 9).is_err());
    }

    #[test]
    fn build_dataset_labels() {
        let sp = Matrix::zeros((3, 2));
        let sq = Matrix::ones((3, 2));
        let ds = build_dataset(&sp, &sq).unwrap();
        assert_eq!(ds.labels, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(ds.len(), 6);
        assert!(build_dataset(&Matrix::zeros((0, 2)), &Matrix::zeros((0, 2))).is_err());
        assert!(build_dataset(&sp, &Matrix::ones((2, 2))).is_err());
        assert!(build_dataset(&sp, &sp).is_ok());
    }

    #[test]
    fn split_is_stratified_partition() {
        let sp = Matrix::from_shape_fn((4, 1), |(i, _)| i as f64);
        let sq = Matrix::from_shape_fn((4, 1), |(i, _)| 10.0 + i as f64);
        let ds = build_dataset(&sp, &sq).unwrap();
        let split = shuffle_split(&ds, 3).unwrap();
        assert_eq!(split.train.label_counts(), (2, 2));
        assert_eq!(split.test.label_counts(), (2, 2));
        assert_eq!(split, shuffle_split(&ds, 3).unwrap());
        let union = ndarray::concatenate(Axis(0), &[split.train.points.view(), split.test.points.view()]).unwrap();
        assert_eq!(sorted_rows(&union), sorted_rows(&ds.points));
        // each point keeps its label
        for (row, &l) in split.train.points.rows().into_iter().zip(&split.train.labels) {
            assert_eq!(l == 1, row[0] >= 10.0);
        }
    }

    #[test]
    fn split_rejects_odd_counts() {
        let ds = build_dataset(&Matrix::zeros((3, 1)), &Matrix::ones((3, 1))).unwrap();
        assert!(shuffle_split(&ds, 0).is_err());
    }

    #[test]
    fn strip_labels_keeps_multiset() {
        let ds = build_dataset(
            &array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            &array![[7.0, 8.0], [9.0, 10.0], [11.0, 12.0]],
        )
        .unwrap();
        let unl = strip_labels(&ds, 4);
        assert_eq!(unl.nrows(), 6);
        assert_eq!(sorted_rows(&unl), sorted_rows(&ds.points));
        let one = LabeledDataset::new(array![[3.5, -1.0]], vec![1]).unwrap();
        assert_eq!(strip_labels(&one, 0), array![[3.5, -1.0]]);
    }

    #[test]
    fn jsonl_roundtrip_with_header() {
        let ds = build_dataset(&array![[0.5, -1.25]], &array![[2.0, 3.0]]).unwrap();
        let header = DatasetHeader {
            p: HdgmSpec::p(2, Level::Hard),
            q: HdgmSpec::q_alt(2, Level::Hard),
            n_per_cluster: 1,
            seed: 42,
        };
        let mut buf = Vec::new();
        write_jsonl(&mut buf, Some(&header), &ds).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], r#"{"x":[0.5,-1.25],"label":0}"#);
        assert!(lines[0].contains(r#""role":"Q-alt""#));
        let (h, back) = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(h, Some(header));
        assert_eq!(back, ds);
    }

    #[test]
    fn spec_json_fields() {
        let json = serde_json::to_value(HdgmSpec::q_alt(10, Level::Hard)).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"d": 10, "delta_mu": 0.5, "delta_q": 0.0, "role": "Q-alt"})
        );
    }
}
