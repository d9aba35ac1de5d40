//! Intrinsic dimension from the singular spectrum of local difference
//! vectors.
//!
//! Around a point `p` of a manifold, noisy copies `p + σ z` are projected
//! back onto the manifold. The differences `proj(p + σ z) - p` concentrate
//! on the tangent space, so the spectrum of the difference matrix has `d`
//! large singular values and `n - d` values of order `σ²`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{HypersphereSpec, ManifoldSpec};
use crate::rng::LabRng;
use crate::sampler::{gaussian_vec, norm, sq_dist, PlanarCircle, PointSampler};

/// Default noise scale relative to the local feature size.
pub const DEFAULT_SIGMA: f64 = 0.05;

/// Default neighbourhood size as a multiple of the ambient dimension.
pub const DEFAULT_OVERSAMPLING: usize = 8;

/// Relative cut-off for the truncated stable rank.
pub const DEFAULT_TRUNCATION: f64 = 0.1;

/// Nearest-point map onto a manifold, plus a way to draw base points.
pub trait ManifoldProjector: PointSampler {
    /// `None` where the projection is undefined (e.g. the sphere centre).
    fn project_point(&self, x: &[f64]) -> Option<Vec<f64>>;
}

impl ManifoldProjector for HypersphereSpec {
    fn project_point(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.project(x)
    }
}

impl ManifoldProjector for PlanarCircle {
    fn project_point(&self, x: &[f64]) -> Option<Vec<f64>> {
        let r = norm(x);
        (r > 0.0).then(|| x.iter().map(|v| v * self.radius / r).collect())
    }
}

impl ManifoldProjector for ManifoldSpec {
    fn project_point(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.project(x).ok().map(|p| p.ambient)
    }
}

/// The whole ambient space with standard Gaussian base points.
#[derive(Clone, Copy, Debug)]
pub struct FullSpace {
    pub dim: usize,
}

impl PointSampler for FullSpace {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut LabRng) -> Vec<f64> {
        gaussian_vec(self.dim, 1.0, rng)
    }
}

impl ManifoldProjector for FullSpace {
    fn project_point(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.to_vec())
    }
}

/// Difference vectors around one centre, stored as the columns of an
/// `ambient x count` matrix.
#[derive(Clone, Debug)]
pub struct NeighborhoodMatrix {
    pub center: Vec<f64>,
    pub sigma: f64,
    pub matrix: DMatrix<f64>,
    /// Perturbed points whose projection was undefined.
    pub skipped: usize,
}

impl NeighborhoodMatrix {
    pub fn from_columns(center: Vec<f64>, sigma: f64, columns: &[Vec<f64>]) -> Result<Self> {
        let n = center.len();
        if columns.len() < n {
            return Err(Error::domain(format!("need at least {n} difference vectors, got {}", columns.len())));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::Shape { expected: n, actual: c.len() });
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite difference vector"));
        }
        let matrix = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Ok(NeighborhoodMatrix { center, sigma, matrix, skipped: 0 })
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn count(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Perturb `center` `count` times by `N(0, σ² I)`, project back and keep the
/// differences. Undefined projections are skipped and redrawn, up to
/// `4 * count` attempts.
pub fn local_neighborhood<M: ManifoldProjector + ?Sized>(
    manifold: &M,
    center: &[f64],
    sigma: f64,
    count: usize,
    rng: &mut LabRng,
) -> Result<NeighborhoodMatrix> {
    let n = manifold.dim();
    if center.len() != n {
        return Err(Error::Shape { expected: n, actual: center.len() });
    }
    if !(sigma > 0.0) {
        return Err(Error::domain("sigma must be positive"));
    }
    if count < n {
        return Err(Error::domain(format!("need at least {n} samples, got {count}")));
    }
    let mut cols = Vec::with_capacity(count);
    let mut skipped = 0usize;
    while cols.len() < count {
        if skipped > 3 * count {
            return Err(Error::domain("projection failed for most perturbations"));
        }
        let noisy: Vec<f64> = center.iter().zip(gaussian_vec(n, sigma, rng)).map(|(c, z)| c + z).collect();
        match manifold.project_point(&noisy) {
            Some(p) => cols.push(p.iter().zip(center).map(|(a, b)| a - b).collect::<Vec<f64>>()),
            None => skipped += 1,
        }
    }
    let mut m = NeighborhoodMatrix::from_columns(center.to_vec(), sigma, &cols)?;
    m.skipped = skipped;
    Ok(m)
}

/// `||M||_F² / s_max²`.
pub fn stable_rank(m: &DMatrix<f64>) -> Result<f64> {
    let s = m.singular_values();
    spectrum_stable_rank(s.as_slice())
}

/// Stable rank of a matrix with the given singular values.
pub fn spectrum_stable_rank(values: &[f64]) -> Result<f64> {
    let top = values.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::domain("stable rank of a zero matrix"));
    }
    Ok(values.iter().map(|s| (s / top).powi(2)).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimMethod {
    /// `n - stable_rank(s_max - s_i)` over the `n` singular values.
    ShiftedSpectrum,
    /// Stable rank of the singular values at least `threshold * s_max`.
    TruncatedStableRank,
    /// Position of the largest ratio `s_i / s_{i+1}`.
    SpectralGap,
    /// `n - stable_rank(s_max(M_n) I - M_n)` for the square block `M_n`
    /// made of the first `n` columns.
    LiteralSquare,
}

impl DimMethod {
    pub const ALL: [DimMethod; 4] = [
        DimMethod::ShiftedSpectrum,
        DimMethod::TruncatedStableRank,
        DimMethod::SpectralGap,
        DimMethod::LiteralSquare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DimMethod::ShiftedSpectrum => "shifted_spectrum",
            DimMethod::TruncatedStableRank => "truncated_stable_rank",
            DimMethod::SpectralGap => "spectral_gap",
            DimMethod::LiteralSquare => "literal_square",
        }
    }
}

/// Dimension estimates of one neighbourhood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// Primary estimate.
    pub dim: f64,
    pub method: DimMethod,
    pub shifted_spectrum: f64,
    pub truncated_stable_rank: f64,
    pub spectral_gap: usize,
    pub literal_square: f64,
    /// Singular values of the centred difference matrix, descending.
    pub spectrum: Vec<f64>,
}

impl DimensionEstimate {
    pub fn rounded(&self) -> i64 {
        self.dim.round() as i64
    }

    pub fn by_method(&self, method: DimMethod) -> f64 {
        match method {
            DimMethod::ShiftedSpectrum => self.shifted_spectrum,
            DimMethod::TruncatedStableRank => self.truncated_stable_rank,
            DimMethod::SpectralGap => self.spectral_gap as f64,
            DimMethod::LiteralSquare => self.literal_square,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub method: DimMethod,
    /// Relative cut-off for [`DimMethod::TruncatedStableRank`].
    pub truncation: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { method: DimMethod::ShiftedSpectrum, truncation: DEFAULT_TRUNCATION }
    }
}

fn shifted_estimate(spectrum: &[f64], n: usize) -> f64 {
    let top = spectrum[0];
    let shifted: Vec<f64> = spectrum.iter().map(|s| top - s).collect();
    match spectrum_stable_rank(&shifted) {
        Ok(sr) => n as f64 - sr,
        // All singular values equal: no normal directions.
        Err(_) => n as f64,
    }
}

pub fn estimate_intrinsic_dim(m: &NeighborhoodMatrix, cfg: &EstimatorConfig) -> Result<DimensionEstimate> {
    let n = m.ambient_dim();
    let mut centred = m.matrix.clone();
    for mut row in centred.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    let mut spectrum: Vec<f64> = centred.singular_values().iter().copied().collect();
    spectrum.sort_by(|a, b| b.total_cmp(a));
    spectrum.resize(n, 0.0);
    let top = spectrum[0];
    if !(top > 0.0) {
        return Err(Error::domain("difference matrix is zero"));
    }

    let shifted = shifted_estimate(&spectrum, n);
    let kept: Vec<f64> = spectrum.iter().copied().filter(|&s| s >= cfg.truncation * top).collect();
    let truncated = spectrum_stable_rank(&kept)?;
    let gap = (0..n - 1)
        .map(|i| (i + 1, spectrum[i] / spectrum[i + 1].max(1e-12 * top)))
        .fold((n, 0.0), |best, (i, r)| if r > best.1 { (i, r) } else { best })
        .0;
    let square = centred.columns(0, n).into_owned();
    let s_top = square.singular_values().max();
    let literal = match stable_rank(&(DMatrix::identity(n, n) * s_top - &square)) {
        Ok(sr) => n as f64 - sr,
        Err(_) => n as f64,
    };

    let mut est = DimensionEstimate {
        dim: 0.0,
        method: cfg.method,
        shifted_spectrum: shifted,
        truncated_stable_rank: truncated,
        spectral_gap: gap,
        literal_square: literal,
        spectrum,
    };
    est.dim = est.by_method(cfg.method).clamp(0.0, n as f64);
    Ok(est)
}

/// Mean of the estimates at `centers` base points drawn from the manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldDimReport {
    pub ambient_dim: usize,
    pub centers: usize,
    pub sigma: f64,
    pub samples_per_center: usize,
    pub method: DimMethod,
    pub mean_dim: f64,
    pub per_center: Vec<DimensionEstimate>,
}

impl ManifoldDimReport {
    pub fn mean_by(&self, method: DimMethod) -> f64 {
        self.per_center.iter().map(|e| e.by_method(method)).sum::<f64>() / self.per_center.len() as f64
    }
}

pub fn estimate_manifold_dim<M: ManifoldProjector + ?Sized>(
    manifold: &M,
    centers: usize,
    sigma: f64,
    samples_per_center: usize,
    cfg: &EstimatorConfig,
    rng: &mut LabRng,
) -> Result<ManifoldDimReport> {
    if centers == 0 {
        return Err(Error::domain("need at least one centre"));
    }
    let mut per_center = Vec::with_capacity(centers);
    for _ in 0..centers {
        let p = manifold.sample(rng);
        let m = local_neighborhood(manifold, &p, sigma, samples_per_center, rng)?;
        per_center.push(estimate_intrinsic_dim(&m, cfg)?);
    }
    let mean_dim = per_center.iter().map(|e| e.dim).sum::<f64>() / centers as f64;
    Ok(ManifoldDimReport {
        ambient_dim: manifold.dim(),
        centers,
        sigma,
        samples_per_center,
        method: cfg.method,
        mean_dim,
        per_center,
    })
}

/// Read a headerless CSV of points, one per row.
pub fn read_point_cloud<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Config(format!("bad number {f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Shape { expected: first.len(), actual: row.len() });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::domain("empty point cloud"));
    }
    Ok(rows)
}

/// Estimate at point `center` of a cloud from the differences to its `k`
/// nearest neighbours.
pub fn cloud_estimate(points: &[Vec<f64>], center: usize, k: usize, cfg: &EstimatorConfig) -> Result<DimensionEstimate> {
    let p = points.get(center).ok_or_else(|| Error::domain("centre index out of range"))?;
    if k >= points.len() {
        return Err(Error::domain("neighbourhood larger than the cloud"));
    }
    let mut order: Vec<(f64, usize)> =
        points.iter().enumerate().filter(|(i, _)| *i != center).map(|(i, q)| (sq_dist(p, q), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let cols: Vec<Vec<f64>> =
        order[..k].iter().map(|&(_, i)| points[i].iter().zip(p).map(|(a, b)| a - b).collect()).collect();
    let m = NeighborhoodMatrix::from_columns(p.clone(), 0.0, &cols)?;
    estimate_intrinsic_dim(&m, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub center: usize,
    pub raw: f64,
    pub rounded: i64,
    pub method: DimMethod,
}

/// CSV with header `center,raw,rounded,method`.
pub fn write_estimates_csv<W: Write>(rows: &[EstimateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
