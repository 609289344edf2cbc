//! Embedding matrices, cosine scoring, unit-ball projection, ensembling
//! and the on-disk model format.
//!
//! Matrix entries live in [`AtomicCell`]s so several training threads may
//! update one shared model without locks. Reads and writes of single
//! entries are atomic; whole columns are not.

use std::fs;
use std::path::Path;

use crossbeam_utils::atomic::AtomicCell;
use rand::Rng;

use crate::encoder::SparseVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: [u8; 4] = *b"MQAM";
pub const MODEL_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 * 3 + 8 * 4 + 8 * 2;
const ADAGRAD_EPS: f64 = 1e-8;
/// Slack allowed on column norms after projection.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub dim: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub paraphrase_prob: f64,
    pub multi_corrupt_prob: f64,
    pub warp_max_trials: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 64,
            learning_rate: 0.01,
            margin: 0.1,
            paraphrase_prob: 0.2,
            multi_corrupt_prob: 0.3,
            warp_max_trials: 50,
            seed: 1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0 && self.margin.is_finite() && self.margin > 0.0)
        {
            return Err(Error::Config("learning rate and margin must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.paraphrase_prob) {
            return Err(Error::Config("paraphrase_prob must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.multi_corrupt_prob) {
            return Err(Error::Config("multi_corrupt_prob must lie in [0, 1]".into()));
        }
        if self.warp_max_trials == 0 {
            return Err(Error::Config("warp_max_trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dense column-major matrix of atomically accessed entries.
pub struct Matrix<T: Scalar> {
    rows: usize,
    cols: usize,
    data: Box<[AtomicCell<T>]>,
}

impl<T: Scalar> Clone for Matrix<T> {
    fn clone(&self) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|c| AtomicCell::new(c.load())).collect(),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| AtomicCell::new(T::zero())).collect(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let data = (0..rows * cols)
            .map(|i| AtomicCell::new(f(i % rows, i / rows)))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[col * self.rows + row].load()
    }

    #[inline]
    pub fn set(&self, row: usize, col: usize, v: T) {
        self.data[col * self.rows + row].store(v)
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col).to_f64_lossy()).collect()
    }

    #[inline]
    fn add_column_into(&self, col: usize, weight: f64, out: &mut [f64]) {
        let base = col * self.rows;
        for (r, o) in out.iter_mut().enumerate() {
            *o += weight * self.data[base + r].load().to_f64_lossy();
        }
    }

    pub fn column_norm(&self, col: usize) -> f64 {
        self.column(col).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales the column to unit norm if it lies outside the unit ball.
    pub fn project_column(&self, col: usize) {
        let norm = self.column_norm(col);
        if norm > 1.0 {
            for r in 0..self.rows {
                let v = self.get(r, col).to_f64_lossy() / norm;
                self.set(r, col, T::from_f64_lossy(v));
            }
        }
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        for c in self.data.iter() {
            c.load().write_le(out);
        }
    }
}

/// Which matrix a sparse vector is embedded with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `W_V`, over words and alias n-grams.
    Words,
    /// `W_S`, over entities and relationships.
    Symbols,
    /// `[W_V W_S]`, indices below `N_V` route to `W_V`.
    Joint,
}

/// A column of either matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Column {
    Word(usize),
    Symbol(usize),
}

#[derive(Debug, Clone)]
pub struct EmbeddingModel<T: Scalar> {
    pub hyper: Hyperparams,
    w_v: Matrix<T>,
    w_s: Matrix<T>,
    acc_v: Matrix<T>,
    acc_s: Matrix<T>,
}

impl<T: Scalar> EmbeddingModel<T> {
    /// Uniform entries in `[-1/sqrt(d), 1/sqrt(d)]`, then one projection pass.
    pub fn new<R: Rng>(hyper: Hyperparams, n_v: usize, n_s: usize, rng: &mut R) -> Self {
        let d = hyper.dim;
        let bound = 1.0 / (d as f64).sqrt();
        let mut draw = |_, _| T::from_f64_lossy(rng.gen_range(-bound..=bound));
        let w_v = Matrix::from_fn(d, n_v, &mut draw);
        let w_s = Matrix::from_fn(d, n_s, &mut draw);
        let m = EmbeddingModel {
            hyper,
            w_v,
            w_s,
            acc_v: Matrix::zeros(d, n_v),
            acc_s: Matrix::zeros(d, n_s),
        };
        m.project_unit_ball(None);
        m
    }

    /// Wraps explicit matrices; accumulators start at zero.
    pub fn from_matrices(hyper: Hyperparams, w_v: Matrix<T>, w_s: Matrix<T>) -> Result<Self> {
        if w_v.rows() != hyper.dim || w_s.rows() != hyper.dim {
            return Err(Error::DimensionMismatch {
                expected: hyper.dim,
                got: if w_v.rows() != hyper.dim {
                    w_v.rows()
                } else {
                    w_s.rows()
                },
            });
        }
        let (d, n_v, n_s) = (hyper.dim, w_v.cols(), w_s.cols());
        Ok(EmbeddingModel {
            hyper,
            w_v,
            w_s,
            acc_v: Matrix::zeros(d, n_v),
            acc_s: Matrix::zeros(d, n_s),
        })
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim
    }

    pub fn n_words(&self) -> usize {
        self.w_v.cols()
    }

    pub fn n_symbols(&self) -> usize {
        self.w_s.cols()
    }

    pub fn words(&self) -> &Matrix<T> {
        &self.w_v
    }

    pub fn symbols(&self) -> &Matrix<T> {
        &self.w_s
    }

    fn side_dim(&self, side: Side) -> usize {
        match side {
            Side::Words => self.n_words(),
            Side::Symbols => self.n_symbols(),
            Side::Joint => self.n_words() + self.n_symbols(),
        }
    }

    /// Resolves index `i` of a vector on `side` to a matrix column.
    #[inline]
    pub fn column_of(&self, side: Side, i: usize) -> Column {
        match side {
            Side::Words => Column::Word(i),
            Side::Symbols => Column::Symbol(i),
            Side::Joint if i < self.n_words() => Column::Word(i),
            Side::Joint => Column::Symbol(i - self.n_words()),
        }
    }

    fn matrix(&self, c: Column) -> (&Matrix<T>, usize) {
        match c {
            Column::Word(i) => (&self.w_v, i),
            Column::Symbol(i) => (&self.w_s, i),
        }
    }

    fn accumulator(&self, c: Column) -> (&Matrix<T>, usize) {
        match c {
            Column::Word(i) => (&self.acc_v, i),
            Column::Symbol(i) => (&self.acc_s, i),
        }
    }

    pub fn column(&self, c: Column) -> Vec<f64> {
        let (m, i) = self.matrix(c);
        m.column(i)
    }

    pub fn entry(&self, c: Column, row: usize) -> T {
        let (m, i) = self.matrix(c);
        m.get(row, i)
    }

    pub fn set_entry(&self, c: Column, row: usize, v: T) {
        let (m, i) = self.matrix(c);
        m.set(row, i, v)
    }

    pub fn column_norm(&self, c: Column) -> f64 {
        let (m, i) = self.matrix(c);
        m.column_norm(i)
    }

    /// Weighted sum of the selected columns, accumulated in `f64`.
    pub fn embed(&self, side: Side, v: &SparseVector<T>) -> Result<Vec<f64>> {
        let expected = self.side_dim(side);
        if v.dim() != expected {
            return Err(Error::DimensionMismatch { expected, got: v.dim() });
        }
        let mut out = vec![0.0; self.dim()];
        for &(i, w) in v.entries() {
            let (m, col) = self.matrix(self.column_of(side, i as usize));
            m.add_column_into(col, w.to_f64_lossy(), &mut out);
        }
        Ok(out)
    }

    pub fn score_qa(&self, q: &SparseVector<T>, fact: &SparseVector<T>) -> Result<f64> {
        Ok(cosine(&self.embed(Side::Words, q)?, &self.embed(Side::Symbols, fact)?))
    }

    pub fn score_external(&self, q: &SparseVector<T>, ext: &SparseVector<T>) -> Result<f64> {
        Ok(cosine(&self.embed(Side::Words, q)?, &self.embed(Side::Joint, ext)?))
    }

    pub fn score_paraphrase(&self, q: &SparseVector<T>, q2: &SparseVector<T>) -> Result<f64> {
        Ok(cosine(&self.embed(Side::Words, q)?, &self.embed(Side::Words, q2)?))
    }

    /// Projects the given columns, or every column when `touched` is `None`.
    pub fn project_unit_ball(&self, touched: Option<&[Column]>) {
        match touched {
            Some(cols) => {
                for &c in cols {
                    let (m, i) = self.matrix(c);
                    m.project_column(i);
                }
            }
            None => {
                for i in 0..self.n_words() {
                    self.w_v.project_column(i);
                }
                for i in 0..self.n_symbols() {
                    self.w_s.project_column(i);
                }
            }
        }
    }

    /// One Adagrad step on a column followed by its projection.
    pub fn adagrad_update(&self, c: Column, grad: &[f64], lr: f64) {
        let (m, i) = self.matrix(c);
        let (acc, _) = self.accumulator(c);
        for (r, &g) in grad.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let a = acc.get(r, i).to_f64_lossy() + g * g;
            acc.set(r, i, T::from_f64_lossy(a));
            let w = m.get(r, i).to_f64_lossy() - lr * g / (a + ADAGRAD_EPS).sqrt();
            m.set(r, i, T::from_f64_lossy(w));
        }
        m.project_column(i);
    }

    /// Copies every parameter and accumulator of `other` into `self`.
    pub fn copy_from(&mut self, other: &Self) {
        *self = other.clone();
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (d, n_v, n_s) = (self.dim(), self.n_words(), self.n_symbols());
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * d * (n_v + n_s) * T::WIDTH);
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(T::WIDTH as u32).to_le_bytes());
        for n in [d, n_v, n_s] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        let h = &self.hyper;
        for x in [h.learning_rate, h.margin, h.paraphrase_prob, h.multi_corrupt_prob] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&(h.warp_max_trials as u64).to_le_bytes());
        out.extend_from_slice(&h.seed.to_le_bytes());
        for m in [&self.w_v, &self.w_s, &self.acc_v, &self.acc_s] {
            m.write_le(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = ModelHeader::parse(bytes)?;
        if header.scalar_width as usize != T::WIDTH {
            return Err(Error::ModelFormat {
                offset: 8,
                msg: format!("stored scalar is {} bytes, expected {}", header.scalar_width, T::WIDTH),
            });
        }
        let (d, n_v, n_s) = (header.hyper.dim, header.n_words, header.n_symbols);
        let payload = 2 * d * (n_v + n_s) * T::WIDTH;
        let expected_len = HEADER_LEN + payload;
        if bytes.len() < expected_len {
            return Err(Error::ModelFormat {
                offset: bytes.len(),
                msg: format!("truncated payload, expected {expected_len} bytes"),
            });
        }
        if bytes.len() > expected_len {
            return Err(Error::ModelFormat {
                offset: expected_len,
                msg: "trailing bytes after payload".into(),
            });
        }
        let mut pos = HEADER_LEN;
        let mut read = |cols: usize| {
            let m = Matrix::from_fn(d, cols, |_, _| T::zero());
            for cell in m.data.iter() {
                cell.store(T::read_le(&bytes[pos..pos + T::WIDTH]));
                pos += T::WIDTH;
            }
            m
        };
        let w_v = read(n_v);
        let w_s = read(n_s);
        let acc_v = read(n_v);
        let acc_s = read(n_s);
        Ok(EmbeddingModel {
            hyper: header.hyper,
            w_v,
            w_s,
            acc_v,
            acc_s,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Norm statistics `(min, mean, max)` over the columns of one matrix.
    pub fn norm_stats(&self, side: Side) -> (f64, f64, f64) {
        let m = match side {
            Side::Symbols => &self.w_s,
            _ => &self.w_v,
        };
        let norms: Vec<f64> = (0..m.cols()).map(|c| m.column_norm(c)).collect();
        if norms.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = norms.iter().cloned().fold(0.0, f64::max);
        (min, norms.iter().sum::<f64>() / norms.len() as f64, max)
    }
}

impl<T: Scalar> PartialEq for EmbeddingModel<T> {
    /// Bitwise equality of parameters, accumulators and hyperparameters.
    fn eq(&self, other: &Self) -> bool {
        self.to_bytes() == other.to_bytes()
    }
}

/// Header fields of a saved model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHeader {
    pub version: u32,
    pub scalar_width: u32,
    pub n_words: usize,
    pub n_symbols: usize,
    pub hyper: Hyperparams,
}

impl ModelHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::ModelFormat {
                offset: bytes.len(),
                msg: "file shorter than magic and version".into(),
            });
        }
        if bytes[..4] != MODEL_MAGIC {
            return Err(Error::ModelFormat {
                offset: 0,
                msg: "bad magic".into(),
            });
        }
        let u32_at = |p: usize| u32::from_le_bytes(bytes[p..p + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != MODEL_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MODEL_VERSION,
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::ModelFormat {
                offset: bytes.len(),
                msg: "truncated header".into(),
            });
        }
        let u64_at = |p: usize| u64::from_le_bytes(bytes[p..p + 8].try_into().unwrap());
        let f64_at = |p: usize| f64::from_le_bytes(bytes[p..p + 8].try_into().unwrap());
        let hyper = Hyperparams {
            dim: u64_at(12) as usize,
            learning_rate: f64_at(36),
            margin: f64_at(44),
            paraphrase_prob: f64_at(52),
            multi_corrupt_prob: f64_at(60),
            warp_max_trials: u64_at(68) as usize,
            seed: u64_at(76),
        };
        Ok(ModelHeader {
            version,
            scalar_width: u32_at(8),
            n_words: u64_at(20) as usize,
            n_symbols: u64_at(28) as usize,
            hyper,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&bytes)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity clamped to `[-1, 1]`; zero when either side is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Sum of the question/fact scores of every model.
pub fn ensemble_score<T: Scalar>(
    models: &[EmbeddingModel<T>],
    q: &SparseVector<T>,
    fact: &SparseVector<T>,
) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::Config("ensemble needs at least one model".into()));
    }
    models.iter().map(|m| m.score_qa(q, fact)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyper(d: usize) -> Hyperparams {
        Hyperparams {
            dim: d,
            ..Default::default()
        }
    }

    fn model_from(d: usize, v: &[&[f64]], s: &[&[f64]]) -> EmbeddingModel<f64> {
        let w_v = Matrix::from_fn(d, v.len(), |r, c| v[c][r]);
        let w_s = Matrix::from_fn(d, s.len(), |r, c| s[c][r]);
        EmbeddingModel::from_matrices(hyper(d), w_v, w_s).unwrap()
    }

    #[test]
    fn embed_unit_vector_selects_column() {
        let m = model_from(2, &[&[1.0, 0.0], &[0.0, 1.0]], &[&[1.0, 0.0]]);
        let v = SparseVector::from_pairs(2, [(0, 1.0)]);
        assert_eq!(m.embed(Side::Words, &v).unwrap(), vec![1.0, 0.0]);
        assert_eq!(m.embed(Side::Words, &SparseVector::zeros(2)).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            m.embed(Side::Symbols, &v),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn cosine_conventions() {
        let m = model_from(2, &[&[1.0, 0.0], &[0.0, 1.0]], &[&[2.0, 0.0], &[0.0, 3.0]]);
        let q = SparseVector::from_pairs(2, [(0, 1.0)]);
        assert!((m.score_qa(&q, &SparseVector::from_pairs(2, [(0, 1.0)])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(m.score_qa(&q, &SparseVector::from_pairs(2, [(1, 1.0)])).unwrap(), 0.0);
        assert_eq!(m.score_qa(&q, &SparseVector::zeros(2)).unwrap(), 0.0);
        assert_eq!(
            m.score_paraphrase(&SparseVector::zeros(2), &SparseVector::zeros(2))
                .unwrap(),
            0.0
        );
        assert!((m.score_paraphrase(&q, &q).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(m.score_external(&q, &SparseVector::zeros(4)).unwrap(), 0.0);
    }

    #[test]
    fn projection_scales_outside_only() {
        let m = model_from(2, &[&[3.0, 4.0], &[0.3, 0.4]], &[]);
        m.project_unit_ball(None);
        let c0 = m.column(Column::Word(0));
        assert!((c0[0] - 0.6).abs() < 1e-15 && (c0[1] - 0.8).abs() < 1e-15);
        assert_eq!(m.column(Column::Word(1)), vec![0.3, 0.4]);
    }

    #[test]
    fn init_is_inside_unit_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m: EmbeddingModel<f32> = EmbeddingModel::new(hyper(16), 30, 20, &mut rng);
        for i in 0..30 {
            assert!(m.column_norm(Column::Word(i)) <= 1.0 + NORM_TOLERANCE);
        }
        let bound = 1.0 / 4.0 + 1e-7;
        assert!((0..20).all(|c| m.column(Column::Symbol(c)).iter().all(|x| x.abs() <= bound)));
    }

    #[test]
    fn ensemble_adds() {
        let m = model_from(2, &[&[1.0, 0.0]], &[&[1.0, 0.0]]);
        let q = SparseVector::from_pairs(1, [(0, 1.0)]);
        let f = SparseVector::from_pairs(1, [(0, 1.0)]);
        let single = m.score_qa(&q, &f).unwrap();
        assert_eq!(ensemble_score(std::slice::from_ref(&m), &q, &f).unwrap(), single);
        assert_eq!(ensemble_score(&[m.clone(), m], &q, &f).unwrap(), 2.0 * single);
        assert!(ensemble_score::<f64>(&[], &q, &f).is_err());
    }

    #[test]
    fn save_load_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m: EmbeddingModel<f32> = EmbeddingModel::new(hyper(8), 13, 7, &mut rng);
        m.adagrad_update(Column::Symbol(2), &[0.5; 8], 0.1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        m.save(&p).unwrap();
        let back = EmbeddingModel::<f32>::load(&p).unwrap();
        assert_eq!(back.to_bytes(), m.to_bytes());
        assert!(matches!(
            EmbeddingModel::<f64>::load(&p),
            Err(Error::ModelFormat { offset: 8, .. })
        ));
    }

    #[test]
    fn truncated_and_versioned_files_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bytes = EmbeddingModel::<f32>::new(hyper(4), 3, 3, &mut rng).to_bytes();
        let err = EmbeddingModel::<f32>::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::ModelFormat { offset, .. } if offset == bytes.len() - 3));
        assert!(EmbeddingModel::<f32>::from_bytes(&bytes[..20]).is_err());
        let mut old = bytes.clone();
        old[4..8].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            EmbeddingModel::<f32>::from_bytes(&old),
            Err(Error::Version { found: 0, expected: 1 })
        ));
    }
}
