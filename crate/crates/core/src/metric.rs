//! Metric learning: PCA, KISSME and XQDA, plus the distance kernels used for
//! retrieval.
//!
//! All learned distances are squared forms; [`euclidean_distance`] is the only
//! unsquared kernel.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::linalg::{
    canonical_sign, generalized_sym_eigen, psd_projection, quadratic_form, ridge_inverse, sym_eigen_desc, symmetrize,
};
use crate::rng::{seeded, stream};
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-8;

/// Row-major serialisation of a dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixRecord {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl MatrixRecord {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::shape(self.rows * self.cols, self.data.len()));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::shape(expected, actual))
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn row_matrix(vectors: &[&[f64]]) -> Result<DMatrix<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Fitting("no training vectors".into()))?;
    let dim = first.len();
    for v in vectors {
        check_dim(dim, v.len())?;
    }
    Ok(DMatrix::from_fn(vectors.len(), dim, |r, c| vectors[r][c]))
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= SYMMETRY_TOL * m.amax().max(1.0)
}

/// Ridge proportional to the mean diagonal entry: `1e-6 · trace / D`.
pub fn default_ridge(m: &DMatrix<f64>) -> f64 {
    let scale = m.trace() / m.nrows() as f64;
    if scale > 0.0 {
        1e-6 * scale
    } else {
        1e-6
    }
}

// ---------------------------------------------------------------------------
// PCA

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    /// `d × D`, orthonormal rows.
    components: DMatrix<f64>,
    explained_variance_ratio: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PcaRecord {
    kind: String,
    mean: Vec<f64>,
    components: MatrixRecord,
    eigenvalues: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
}

/// Fits the top-`out_dim` principal axes of `vectors`.
///
/// Uses the `D × D` covariance when `N ≥ D` and the `N × N` Gram matrix
/// otherwise, which keeps long descriptors tractable.
pub fn fit_pca(vectors: &[&[f64]], out_dim: usize) -> Result<PcaModel> {
    let x = row_matrix(vectors)?;
    let (n, dim) = x.shape();
    if n < 2 {
        return Err(Error::Config("PCA needs at least two samples".into()));
    }
    if out_dim == 0 || out_dim > dim.min(n - 1) {
        return Err(Error::Config(format!(
            "PCA output dimension {out_dim} outside [1, {}]",
            dim.min(n - 1)
        )));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = (n - 1) as f64;
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / denom;

    let (eigenvalues, mut components) = if n >= dim {
        let cov = centered.transpose() * &centered / denom;
        let (vals, vecs) = sym_eigen_desc(&cov);
        let top = vecs.columns(0, out_dim).transpose();
        (vals.rows(0, out_dim).into_owned(), top)
    } else {
        let gram = &centered * centered.transpose() / denom;
        let (vals, u) = sym_eigen_desc(&gram);
        let mut comps = DMatrix::zeros(out_dim, dim);
        for i in 0..out_dim {
            let axis = centered.transpose() * u.column(i);
            let norm = axis.norm();
            if norm > 1e-12 * total_variance.sqrt().max(1e-300) {
                comps.set_row(i, &(axis / norm).transpose());
            }
        }
        (vals.rows(0, out_dim).into_owned(), comps)
    };
    orthonormalize_rows(&mut components);

    let explained_variance_ratio = eigenvalues
        .iter()
        .map(|&l| {
            if total_variance > 0.0 {
                (l.max(0.0) / total_variance).min(1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance_ratio,
    })
}

/// Gram–Schmidt over the rows; zero rows are replaced by the first standard
/// basis vector that is linearly independent of the rows before them.
fn orthonormalize_rows(m: &mut DMatrix<f64>) {
    let (rows, cols) = m.shape();
    let mut next_basis = 0;
    for i in 0..rows {
        loop {
            let mut v: DVector<f64> = m.row(i).transpose();
            for _ in 0..2 {
                for j in 0..i {
                    let prev: DVector<f64> = m.row(j).transpose();
                    v -= &prev * prev.dot(&v);
                }
            }
            let norm = v.norm();
            if norm > 1e-10 {
                let mut unit = v / norm;
                canonical_sign(&mut unit);
                m.set_row(i, &unit.transpose());
                break;
            }
            assert!(next_basis < cols, "cannot complete an orthonormal basis");
            let mut e = DVector::zeros(cols);
            e[next_basis] = 1.0;
            next_basis += 1;
            m.set_row(i, &e.transpose());
        }
    }
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    /// `components · (x − mean)`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let centered = DVector::from_fn(x.len(), |i, _| x[i] - self.mean[i]);
        Ok((&self.components * centered).iter().copied().collect())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(
            &PcaRecord {
                kind: "pca".into(),
                mean: self.mean.iter().copied().collect(),
                components: (&self.components).into(),
                eigenvalues: Vec::new(),
                explained_variance_ratio: self.explained_variance_ratio.clone(),
            },
            path,
        )
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let rec: PcaRecord = read_json(path)?;
        let components = rec.components.to_matrix()?;
        check_dim(components.ncols(), rec.mean.len())?;
        Ok(Self {
            mean: DVector::from_vec(rec.mean),
            components,
            explained_variance_ratio: rec.explained_variance_ratio,
        })
    }
}

// ---------------------------------------------------------------------------
// Pair statistics

/// Difference covariances of similar and dissimilar pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCovariances {
    pub similar: DMatrix<f64>,
    pub dissimilar: DMatrix<f64>,
    pub similar_pairs: Vec<(usize, usize)>,
    pub dissimilar_pairs: Vec<(usize, usize)>,
}

/// `mean over pairs of (xᵢ − xⱼ)(xᵢ − xⱼ)ᵀ`.
pub fn difference_covariance(x: &DMatrix<f64>, pairs: &[(usize, usize)]) -> DMatrix<f64> {
    let dim = x.ncols();
    if pairs.is_empty() {
        return DMatrix::zeros(dim, dim);
    }
    let diffs = DMatrix::from_fn(pairs.len(), dim, |p, c| {
        let (i, j) = pairs[p];
        x[(i, c)] - x[(j, c)]
    });
    symmetrize(&(diffs.transpose() * &diffs / pairs.len() as f64))
}

/// Uniform sample without replacement of `count` items, returned in
/// ascending order; everything is kept when `count ≥ len`.
fn sample_pairs(all: Vec<(usize, usize)>, count: usize, seed: u64) -> Vec<(usize, usize)> {
    if count >= all.len() {
        return all;
    }
    let mut picked = index::sample(&mut seeded(seed, stream::PAIRS), all.len(), count).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i]).collect()
}

fn require_identities(ids: &[u32]) -> Result<()> {
    let distinct: BTreeSet<u32> = ids.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Fitting("need at least two identities".into()));
    }
    for id in &distinct {
        if ids.iter().filter(|&x| x == id).count() < 2 {
            return Err(Error::Fitting(format!("identity {id} has fewer than two records")));
        }
    }
    Ok(())
}

/// KISSME pair statistics: every same-identity pair, and an equally sized
/// seeded sample of different-identity pairs.
pub fn pair_covariances(vectors: &[&[f64]], ids: &[u32], seed: u64) -> Result<PairCovariances> {
    check_dim(vectors.len(), ids.len())?;
    require_identities(ids)?;
    let x = row_matrix(vectors)?;
    let mut similar_pairs = Vec::new();
    let mut candidates = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if ids[i] == ids[j] {
                similar_pairs.push((i, j));
            } else {
                candidates.push((i, j));
            }
        }
    }
    let dissimilar_pairs = sample_pairs(candidates, similar_pairs.len(), seed);
    Ok(PairCovariances {
        similar: difference_covariance(&x, &similar_pairs),
        dissimilar: difference_covariance(&x, &dissimilar_pairs),
        similar_pairs,
        dissimilar_pairs,
    })
}

// ---------------------------------------------------------------------------
// KISSME

/// A PSD matrix `M` defining `d(x, y) = (x − y)ᵀ·M·(x − y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisModel {
    m: DMatrix<f64>,
    ridge: f64,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct MahalanobisRecord {
    kind: String,
    matrix: MatrixRecord,
    eigenvalues: Vec<f64>,
    ridge: f64,
    seed: Option<u64>,
}

impl MahalanobisModel {
    /// Wraps a matrix after checking symmetry and PSD-ness.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !is_symmetric(&m) {
            return Err(Error::Fitting("metric matrix is not symmetric".into()));
        }
        let (vals, _) = sym_eigen_desc(&m);
        if vals.iter().any(|&l| l < -1e-8) {
            return Err(Error::Fitting("metric matrix is not positive semidefinite".into()));
        }
        Ok(Self {
            m: symmetrize(&m),
            ridge: 0.0,
            seed: None,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
            ridge: 0.0,
            seed: None,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Squared Mahalanobis distance.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), y.len())?;
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        Ok(quadratic_form(&self.m, &d).max(0.0))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let (vals, _) = sym_eigen_desc(&self.m);
        write_json(
            &MahalanobisRecord {
                kind: "kissme".into(),
                matrix: (&self.m).into(),
                eigenvalues: vals.iter().copied().collect(),
                ridge: self.ridge,
                seed: self.seed,
            },
            path,
        )
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let rec: MahalanobisRecord = read_json(path)?;
        let mut model = Self::from_matrix(rec.matrix.to_matrix()?)?;
        model.ridge = rec.ridge;
        model.seed = rec.seed;
        Ok(model)
    }
}

/// `M = PSD((Σ_S + rI)⁻¹ − (Σ_D + rI)⁻¹)`.
pub fn fit_kissme(
    sigma_similar: &DMatrix<f64>,
    sigma_dissimilar: &DMatrix<f64>,
    ridge: f64,
) -> Result<MahalanobisModel> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    check_dim(sigma_similar.nrows(), sigma_dissimilar.nrows())?;
    if !is_symmetric(sigma_similar) || !is_symmetric(sigma_dissimilar) {
        return Err(Error::Fitting("pair covariances must be symmetric".into()));
    }
    let m0 = ridge_inverse(sigma_similar, ridge)? - ridge_inverse(sigma_dissimilar, ridge)?;
    Ok(MahalanobisModel {
        m: psd_projection(&m0),
        ridge,
        seed: None,
    })
}

/// Pair statistics followed by [`fit_kissme`] with [`default_ridge`] taken
/// from the similar-pair covariance.
pub fn fit_kissme_on(vectors: &[&[f64]], ids: &[u32], seed: u64) -> Result<MahalanobisModel> {
    let pairs = pair_covariances(vectors, ids, seed)?;
    let mut model = fit_kissme(&pairs.similar, &pairs.dissimilar, default_ridge(&pairs.similar))?;
    model.seed = Some(seed);
    Ok(model)
}

// ---------------------------------------------------------------------------
// XQDA

/// Cross-view quadratic discriminant: a projection `W` and a PSD kernel in
/// the projected space.
#[derive(Debug, Clone, PartialEq)]
pub struct XqdaModel {
    /// `D × r`.
    w: DMatrix<f64>,
    /// `r × r`.
    kernel: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    ridge: f64,
    seed: u64,
    fallback: bool,
}

#[derive(Serialize, Deserialize)]
struct XqdaRecord {
    kind: String,
    projection: MatrixRecord,
    kernel: MatrixRecord,
    eigenvalues: Vec<f64>,
    ridge: f64,
    seed: u64,
    fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XqdaOptions {
    pub max_dim: usize,
    /// Defaults to [`default_ridge`] of the intra-class covariance.
    pub ridge: Option<f64>,
    pub seed: u64,
}

impl XqdaOptions {
    pub fn new(max_dim: usize, seed: u64) -> Self {
        Self {
            max_dim,
            ridge: None,
            seed,
        }
    }
}

/// Cross-view pair statistics: Σ_I over same-identity pairs seen by different
/// cameras, Σ_E over an equally sized sample of different-identity,
/// different-camera pairs.
pub fn cross_view_covariances(vectors: &[&[f64]], ids: &[u32], cameras: &[u32], seed: u64) -> Result<PairCovariances> {
    check_dim(vectors.len(), ids.len())?;
    check_dim(vectors.len(), cameras.len())?;
    if cameras.iter().collect::<BTreeSet<_>>().len() < 2 {
        return Err(Error::Protocol("XQDA needs records from at least two cameras".into()));
    }
    let x = row_matrix(vectors)?;
    let mut similar_pairs = Vec::new();
    let mut candidates = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if cameras[i] == cameras[j] {
                continue;
            }
            if ids[i] == ids[j] {
                similar_pairs.push((i, j));
            } else {
                candidates.push((i, j));
            }
        }
    }
    if similar_pairs.is_empty() || candidates.is_empty() {
        return Err(Error::Fitting(
            "no cross-camera similar or dissimilar pairs in the training set".into(),
        ));
    }
    let dissimilar_pairs = sample_pairs(candidates, similar_pairs.len(), seed);
    Ok(PairCovariances {
        similar: difference_covariance(&x, &similar_pairs),
        dissimilar: difference_covariance(&x, &dissimilar_pairs),
        similar_pairs,
        dissimilar_pairs,
    })
}

/// Solves `Σ_E·w = λ·(Σ_I + rI)·w`, keeps eigenvectors with `λ > 1` (at most
/// `max_dim`, at least one) and fits a KISSME kernel on the projections.
pub fn fit_xqda(vectors: &[&[f64]], ids: &[u32], cameras: &[u32], opts: &XqdaOptions) -> Result<XqdaModel> {
    if opts.max_dim == 0 {
        return Err(Error::Config("XQDA max_dim must be at least 1".into()));
    }
    let pairs = cross_view_covariances(vectors, ids, cameras, opts.seed)?;
    fit_xqda_from_covariances(&pairs.similar, &pairs.dissimilar, opts)
}

pub fn fit_xqda_from_covariances(
    sigma_intra: &DMatrix<f64>,
    sigma_extra: &DMatrix<f64>,
    opts: &XqdaOptions,
) -> Result<XqdaModel> {
    check_dim(sigma_intra.nrows(), sigma_extra.nrows())?;
    let dim = sigma_intra.nrows();
    let ridge = opts.ridge.unwrap_or_else(|| default_ridge(sigma_intra));
    let regularized = symmetrize(sigma_intra) + DMatrix::identity(dim, dim) * ridge;
    let (values, vectors) = generalized_sym_eigen(&symmetrize(sigma_extra), &regularized)?;
    let above = values.iter().take_while(|&&l| l > 1.0).count();
    let fallback = above == 0;
    let r = above.max(1).min(opts.max_dim).min(dim);
    let w = vectors.columns(0, r).into_owned();
    let projected_intra = symmetrize(&(w.transpose() * sigma_intra * &w));
    let projected_extra = symmetrize(&(w.transpose() * sigma_extra * &w));
    let kernel = fit_kissme(&projected_intra, &projected_extra, ridge)?.m;
    Ok(XqdaModel {
        w,
        kernel,
        eigenvalues: values.iter().take(r).copied().collect(),
        ridge,
        seed: opts.seed,
        fallback,
    })
}

impl XqdaModel {
    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// True when no generalized eigenvalue exceeded 1 and the single leading
    /// direction was kept anyway.
    pub fn used_fallback(&self) -> bool {
        self.fallback
    }

    /// `Wᵀ·x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let v = DVector::from_column_slice(x);
        Ok((self.w.transpose() * v).iter().copied().collect())
    }

    /// Kernel quadratic form on already projected vectors.
    pub fn projected_distance(&self, px: &[f64], py: &[f64]) -> Result<f64> {
        check_dim(self.subspace_dim(), px.len())?;
        check_dim(self.subspace_dim(), py.len())?;
        let d: Vec<f64> = px.iter().zip(py).map(|(a, b)| a - b).collect();
        Ok(quadratic_form(&self.kernel, &d).max(0.0))
    }

    /// `(Wᵀx − Wᵀy)ᵀ·K·(Wᵀx − Wᵀy)`.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.projected_distance(&self.project(x)?, &self.project(y)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(
            &XqdaRecord {
                kind: "xqda".into(),
                projection: (&self.w).into(),
                kernel: (&self.kernel).into(),
                eigenvalues: self.eigenvalues.clone(),
                ridge: self.ridge,
                seed: self.seed,
                fallback: self.fallback,
            },
            path,
        )
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let rec: XqdaRecord = read_json(path)?;
        let w = rec.projection.to_matrix()?;
        let kernel = rec.kernel.to_matrix()?;
        check_dim(w.ncols(), kernel.nrows())?;
        check_dim(kernel.nrows(), kernel.ncols())?;
        Ok(Self {
            w,
            kernel,
            eigenvalues: rec.eigenvalues,
            ridge: rec.ridge,
            seed: rec.seed,
            fallback: rec.fallback,
        })
    }
}

// ---------------------------------------------------------------------------
// Plain kernels

pub fn squared_euclidean(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

pub fn euclidean_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    squared_euclidean(x, y).map(f64::sqrt)
}
