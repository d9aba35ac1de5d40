//! The Gray-code space-filling curve, its products with the unit cube, and
//! hyperspheres embedded in random subspaces.
//!
//! Segment `k` of the curve is the quarter circle
//!
//! ```text
//! c_k + u_k cos t + w_k sin t,   t in [0, pi/2]
//! c_k = (b_{k-1} + b_{k+1}) / 2,  u_k = (b_k - b_{k+1}) / 2,  w_k = (b_k - b_{k-1}) / 2
//! ```
//!
//! where `b_j` is Gray code word `j` with every bit repeated `delta_r` times.
//! `u_k` and `w_k` are orthogonal with norm `sqrt(delta_r) / 2`, so every
//! segment is an arc of the same radius and length. Consecutive segments
//! join at `(b_k + b_{k+1}) / 2` with matching tangents.
//!
//! For intrinsic dimension `d > 1` the manifold is the product of the curve
//! (first `delta_r * n_b` coordinates) with `[0, 1]^{d-1}` (last `d - 1`).

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graycode::{gray_u32, BitString, CodeIndex, MAX_WIDTH};
use crate::rng::LabRng;
use crate::sampler::{dot, norm, PointSampler};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifoldSpecDoc {
    reach_bound: f64,
    intrinsic_dim: usize,
    code_bits: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta_r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ambient_dim: Option<usize>,
}

/// Parameters of one space-filling manifold.
///
/// JSON form: `{"reach_bound": .., "intrinsic_dim": .., "code_bits": ..}`.
/// The derived `delta_r` and `ambient_dim` are written for readability and
/// recomputed (and checked, when present) on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ManifoldSpecDoc", into = "ManifoldSpecDoc")]
pub struct ManifoldSpec {
    reach_bound: f64,
    intrinsic_dim: usize,
    code_bits: u32,
    delta_r: usize,
    ambient_dim: usize,
}

impl TryFrom<ManifoldSpecDoc> for ManifoldSpec {
    type Error = Error;

    fn try_from(doc: ManifoldSpecDoc) -> Result<Self> {
        let spec = ManifoldSpec::new(doc.reach_bound, doc.intrinsic_dim, doc.code_bits)?;
        if let Some(delta) = doc.delta_r {
            if delta != spec.delta_r {
                return Err(Error::Config(format!(
                    "delta_r {delta} inconsistent with reach bound (expected {})",
                    spec.delta_r
                )));
            }
        }
        if let Some(n) = doc.ambient_dim {
            if n != spec.ambient_dim {
                return Err(Error::Config(format!(
                    "ambient_dim {n} inconsistent with parameters (expected {})",
                    spec.ambient_dim
                )));
            }
        }
        Ok(spec)
    }
}

impl From<ManifoldSpec> for ManifoldSpecDoc {
    fn from(s: ManifoldSpec) -> Self {
        ManifoldSpecDoc {
            reach_bound: s.reach_bound,
            intrinsic_dim: s.intrinsic_dim,
            code_bits: s.code_bits,
            delta_r: Some(s.delta_r),
            ambient_dim: Some(s.ambient_dim),
        }
    }
}

impl ManifoldSpec {
    pub fn new(reach_bound: f64, intrinsic_dim: usize, code_bits: u32) -> Result<Self> {
        if !(reach_bound.is_finite() && reach_bound > 0.0) {
            return Err(Error::domain(format!("reach bound {reach_bound} must be positive")));
        }
        if intrinsic_dim == 0 {
            return Err(Error::domain("intrinsic dimension must be at least 1"));
        }
        if !(2..=MAX_WIDTH).contains(&code_bits) {
            return Err(Error::domain(format!("code_bits {code_bits} outside [2, {MAX_WIDTH}]")));
        }
        let delta_r = (4.0 * reach_bound * reach_bound).ceil() as usize;
        let ambient_dim = delta_r * code_bits as usize + intrinsic_dim - 1;
        Ok(ManifoldSpec { reach_bound, intrinsic_dim, code_bits, delta_r, ambient_dim })
    }

    pub fn reach_bound(&self) -> f64 {
        self.reach_bound
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn code_bits(&self) -> u32 {
        self.code_bits
    }

    /// Per-bit repetition count `ceil(4 R^2)`.
    pub fn delta_r(&self) -> usize {
        self.delta_r
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Coordinates occupied by the curve factor.
    pub fn curve_dim(&self) -> usize {
        self.delta_r * self.code_bits as usize
    }

    pub fn segment_count(&self) -> u64 {
        1u64 << self.code_bits
    }

    /// Radius of every arc, `sqrt(delta_r) / 2`. This is the reach of the curve.
    pub fn arc_radius(&self) -> f64 {
        (self.delta_r as f64).sqrt() / 2.0
    }

    pub fn segment_index(&self, k: i64) -> CodeIndex {
        CodeIndex::wrapping(k, self.code_bits).expect("width validated at construction")
    }

    /// Bit `j` (most significant first) of Gray word `i`, with circular `i`.
    #[inline]
    fn code_bit(&self, i: i64, j: usize) -> f64 {
        let idx = i.rem_euclid(1i64 << self.code_bits) as u32;
        let g = gray_u32(idx);
        f64::from((g >> (self.code_bits as usize - 1 - j)) & 1)
    }

    /// Per-bit arc data for segment `k`: `(c, u, w)` restricted to one
    /// representative coordinate of each repeated block.
    fn arc_bits(&self, k: u32) -> Vec<[f64; 3]> {
        let k = i64::from(k);
        (0..self.code_bits as usize)
            .map(|j| {
                let prev = self.code_bit(k - 1, j);
                let cur = self.code_bit(k, j);
                let next = self.code_bit(k + 1, j);
                [(prev + next) / 2.0, (cur - next) / 2.0, (cur - prev) / 2.0]
            })
            .collect()
    }

    fn check_segment(&self, k: CodeIndex) -> Result<()> {
        if k.width() != self.code_bits {
            return Err(Error::domain(format!(
                "segment index width {} does not match code_bits {}",
                k.width(),
                self.code_bits
            )));
        }
        Ok(())
    }

    /// Curve coordinates of segment `k` at angle `t`.
    pub fn segment_point(&self, k: CodeIndex, t: f64) -> Result<Vec<f64>> {
        self.check_segment(k)?;
        if !(0.0..=FRAC_PI_2).contains(&t) {
            return Err(Error::domain(format!("angle {t} outside [0, pi/2]")));
        }
        let (cos_t, sin_t) = (t.cos(), t.sin());
        let mut out = Vec::with_capacity(self.curve_dim());
        for [c, u, w] in self.arc_bits(k.value()) {
            let v = c + u * cos_t + w * sin_t;
            out.extend(std::iter::repeat_n(v, self.delta_r));
        }
        Ok(out)
    }

    /// Unit tangent of the curve at segment `k`, angle `t` (curve coordinates).
    pub fn segment_tangent(&self, k: CodeIndex, t: f64) -> Result<Vec<f64>> {
        self.check_segment(k)?;
        let (cos_t, sin_t) = (t.cos(), t.sin());
        let mut out = Vec::with_capacity(self.curve_dim());
        for [_, u, w] in self.arc_bits(k.value()) {
            out.extend(std::iter::repeat_n(-u * sin_t + w * cos_t, self.delta_r));
        }
        let len = norm(&out);
        out.iter_mut().for_each(|x| *x /= len);
        Ok(out)
    }

    /// Full ambient point for segment `k`, angle `t` and cube coordinates.
    pub fn point(&self, k: CodeIndex, t: f64, cube: Vec<f64>) -> Result<ManifoldPoint> {
        if cube.len() != self.intrinsic_dim - 1 {
            return Err(Error::Shape { expected: self.intrinsic_dim - 1, actual: cube.len() });
        }
        if cube.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::domain("cube coordinates must lie in [0, 1]"));
        }
        let mut ambient = self.segment_point(k, t)?;
        ambient.extend_from_slice(&cube);
        Ok(ManifoldPoint { segment: k, angle: t, cube, ambient })
    }

    /// Uniform draw with respect to the manifold volume.
    ///
    /// All arcs have the same length, so a uniform segment and a uniform
    /// angle give the arc-length measure on the curve.
    pub fn sample_uniform(&self, rng: &mut LabRng) -> ManifoldPoint {
        let k = rng.random_range(0..self.segment_count()) as u32;
        let t = rng.random::<f64>() * FRAC_PI_2;
        let cube = (1..self.intrinsic_dim).map(|_| rng.random::<f64>()).collect();
        let k = CodeIndex::new(k, self.code_bits).expect("drawn in range");
        self.point(k, t, cube).expect("valid by construction")
    }

    /// One representative coordinate per repeated block, first `prefix_len`
    /// blocks. This is the map `P` followed by truncation.
    pub fn project_p(&self, x: &[f64], prefix_len: usize) -> Result<Vec<f64>> {
        if prefix_len > self.code_bits as usize {
            return Err(Error::domain(format!(
                "prefix length {prefix_len} exceeds code_bits {}",
                self.code_bits
            )));
        }
        if x.len() < self.curve_dim() {
            return Err(Error::Shape { expected: self.curve_dim(), actual: x.len() });
        }
        Ok((0..prefix_len).map(|j| x[j * self.delta_r]).collect())
    }

    /// Ambient index of the representative coordinate of bit `j`.
    pub fn block_leader(&self, j: usize) -> usize {
        j * self.delta_r
    }

    /// Exact nearest point of the manifold to `x`.
    ///
    /// Scans every arc; cube coordinates are clamped to `[0, 1]`.
    pub fn project(&self, x: &[f64]) -> Result<ManifoldPoint> {
        if x.len() != self.ambient_dim {
            return Err(Error::Shape { expected: self.ambient_dim, actual: x.len() });
        }
        let delta = self.delta_r as f64;
        let r2 = delta / 4.0;
        // Block sums of x: the arc vectors are constant on each block.
        let blocks: Vec<(f64, f64)> = (0..self.code_bits as usize)
            .map(|j| {
                let block = &x[j * self.delta_r..(j + 1) * self.delta_r];
                (block.iter().sum(), block.iter().map(|v| v * v).sum())
            })
            .collect();
        let mut best: Option<(f64, u32, f64)> = None;
        for k in 0..self.segment_count() as u32 {
            let arc = self.arc_bits(k);
            // |y - c|^2, <y - c, u>, <y - c, w>
            let (mut d2, mut alpha, mut beta) = (0.0, 0.0, 0.0);
            for ((s, s2), [c, u, w]) in blocks.iter().zip(&arc) {
                d2 += s2 - 2.0 * c * s + delta * c * c;
                let yc = s - delta * c;
                alpha += u * yc;
                beta += w * yc;
            }
            let mut t = beta.atan2(alpha);
            if !(0.0..=FRAC_PI_2).contains(&t) {
                let at0 = alpha;
                let at1 = beta;
                t = if at0 >= at1 { 0.0 } else { FRAC_PI_2 };
            }
            let dist2 = d2 - 2.0 * (alpha * t.cos() + beta * t.sin()) + r2;
            if best.is_none_or(|(b, _, _)| dist2 < b) {
                best = Some((dist2, k, t));
            }
        }
        let (_, k, t) = best.expect("at least four segments");
        let cube = x[self.curve_dim()..].iter().map(|v| v.clamp(0.0, 1.0)).collect();
        self.point(CodeIndex::new(k, self.code_bits)?, t, cube)
    }

    /// Empirical lower-bound surrogate for the reach; see [`reach_probe`].
    pub fn reach_probe(&self, pair_samples: usize, rng: &mut LabRng) -> Result<ReachProbe> {
        if self.code_bits > 10 {
            return Err(Error::domain("reach probe limited to code_bits <= 10"));
        }
        Ok(reach_probe(self, pair_samples, rng))
    }
}

impl PointSampler for ManifoldSpec {
    fn dim(&self) -> usize {
        self.ambient_dim
    }

    fn sample(&self, rng: &mut LabRng) -> Vec<f64> {
        self.sample_uniform(rng).ambient
    }
}

/// A point on a [`ManifoldSpec`] together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldPoint {
    pub segment: CodeIndex,
    pub angle: f64,
    pub cube: Vec<f64>,
    pub ambient: Vec<f64>,
}

/// Nearest hypercube corner, coordinate-wise. Exactly `0.5` rounds up.
pub fn round_to_corner(x: &[f64]) -> Result<BitString> {
    BitString::new(x.iter().map(|&v| u8::from(v >= 0.5)).collect())
}

fn is_boolean(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0 || x == 1.0)
}

/// Statistics of the truncated projected prefix `[P x]_{:n_b - t}`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PrefixStats {
    /// Probability that the prefix is a Boolean string.
    pub frac_boolean: f64,
    /// Probability that two independent prefixes are Boolean and equal.
    pub frac_collision: f64,
    /// Monte Carlo trial count; zero for exact values.
    pub trials: usize,
}

impl PrefixStats {
    pub fn std_err_boolean(&self) -> f64 {
        binomial_se(self.frac_boolean, self.trials)
    }

    pub fn std_err_collision(&self) -> f64 {
        binomial_se(self.frac_collision, self.trials)
    }
}

fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

fn check_truncation(spec: &ManifoldSpec, t: u32) -> Result<()> {
    if t == 0 || t >= spec.code_bits {
        return Err(Error::domain(format!(
            "truncation {t} outside [1, {})",
            spec.code_bits
        )));
    }
    Ok(())
}

/// Monte Carlo estimate of [`PrefixStats`] for truncation `t`.
pub fn boolean_prefix_stats(
    spec: &ManifoldSpec,
    t: u32,
    trials: usize,
    rng: &mut LabRng,
) -> Result<PrefixStats> {
    check_truncation(spec, t)?;
    if trials < 1000 {
        return Err(Error::domain("at least 1000 trials required"));
    }
    let prefix_len = (spec.code_bits - t) as usize;
    let mut boolean = 0usize;
    let mut collide = 0usize;
    for _ in 0..trials {
        let a = spec.project_p(&spec.sample_uniform(rng).ambient, prefix_len)?;
        let b = spec.project_p(&spec.sample_uniform(rng).ambient, prefix_len)?;
        if is_boolean(&a) {
            boolean += 1;
            if a == b {
                collide += 1;
            }
        }
    }
    Ok(PrefixStats {
        frac_boolean: boolean as f64 / trials as f64,
        frac_collision: collide as f64 / trials as f64,
        trials,
    })
}

/// Per-segment prefix classification used by exact enumerations.
///
/// A prefix bit is constant along segment `k` exactly when Gray words
/// `k - 1`, `k`, `k + 1` agree on it; otherwise it lies strictly inside
/// `(0, 1)` for all interior angles. Returns `Some(prefix)` for segments
/// whose whole prefix is constant and `None` otherwise.
pub fn segment_prefixes(spec: &ManifoldSpec, prefix_len: usize) -> Vec<Option<u32>> {
    let n_b = spec.code_bits;
    let shift = n_b - prefix_len as u32;
    (0..spec.segment_count() as i64)
        .map(|k| {
            let word = |i: i64| gray_u32(i.rem_euclid(1i64 << n_b) as u32) >> shift;
            let (p, c, n) = (word(k - 1), word(k), word(k + 1));
            (p == c && c == n).then_some(c)
        })
        .collect()
}

/// Exact [`PrefixStats`] by enumerating every segment.
pub fn exact_prefix_stats(spec: &ManifoldSpec, t: u32) -> Result<PrefixStats> {
    check_truncation(spec, t)?;
    let prefix_len = (spec.code_bits - t) as usize;
    let segments = segment_prefixes(spec, prefix_len);
    let total = segments.len() as f64;
    let mut counts = vec![0usize; 1 << prefix_len];
    for z in segments.iter().flatten() {
        counts[*z as usize] += 1;
    }
    let boolean: usize = counts.iter().sum();
    let collision: f64 = counts.iter().map(|&c| (c as f64 / total).powi(2)).sum();
    Ok(PrefixStats { frac_boolean: boolean as f64 / total, frac_collision: collision, trials: 0 })
}

/// Unit sphere of a linear subspace: `{B u : |u| = 1}` for an orthonormal
/// `n x k` basis `B`. Its intrinsic dimension is `k - 1`.
#[derive(Clone, Debug)]
pub struct HypersphereSpec {
    ambient_dim: usize,
    /// Basis columns, each of length `ambient_dim`.
    basis: Vec<Vec<f64>>,
}

impl HypersphereSpec {
    /// Validate an explicit basis given as columns.
    pub fn from_basis(ambient_dim: usize, basis: Vec<Vec<f64>>) -> Result<Self> {
        if basis.is_empty() || basis.len() > ambient_dim {
            return Err(Error::domain("subspace dimension must lie in [1, ambient]"));
        }
        for (i, col) in basis.iter().enumerate() {
            if col.len() != ambient_dim {
                return Err(Error::Shape { expected: ambient_dim, actual: col.len() });
            }
            for (j, other) in basis.iter().enumerate().take(i + 1) {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot(col, other) - expected).abs() > 1e-10 {
                    return Err(Error::domain("basis columns are not orthonormal"));
                }
            }
        }
        Ok(HypersphereSpec { ambient_dim, basis })
    }

    /// First `subspace_dim` coordinate axes.
    pub fn axis_aligned(subspace_dim: usize, ambient_dim: usize) -> Result<Self> {
        let basis = (0..subspace_dim)
            .map(|j| {
                let mut e = vec![0.0; ambient_dim];
                if j < ambient_dim {
                    e[j] = 1.0;
                }
                e
            })
            .collect();
        Self::from_basis(ambient_dim, basis)
    }

    /// Random subspace: the first `subspace_dim` columns of a random
    /// orthogonal matrix (QR of a Gaussian matrix with sign correction).
    pub fn random(subspace_dim: usize, ambient_dim: usize, rng: &mut LabRng) -> Result<Self> {
        if subspace_dim == 0 || subspace_dim > ambient_dim {
            return Err(Error::domain("subspace dimension must lie in [1, ambient]"));
        }
        let g = DMatrix::from_fn(ambient_dim, subspace_dim, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let qr = g.qr();
        let q = qr.q();
        let r = qr.r();
        let basis = (0..subspace_dim)
            .map(|j| {
                let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
                q.column(j).iter().map(|v| sign * v).collect()
            })
            .collect();
        Self::from_basis(ambient_dim, basis)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn subspace_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.basis.len() - 1
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn embed(&self, coords: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.ambient_dim];
        for (c, col) in coords.iter().zip(&self.basis) {
            for (xi, bi) in x.iter_mut().zip(col) {
                *xi += c * bi;
            }
        }
        x
    }

    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|col| dot(col, x)).collect()
    }

    /// Nearest point of the sphere; `None` when `x` is orthogonal to the
    /// subspace (every sphere point is then equidistant).
    pub fn project(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut c = self.coords(x);
        let len = norm(&c);
        if len < 1e-12 {
            return None;
        }
        c.iter_mut().for_each(|v| *v /= len);
        Some(self.embed(&c))
    }
}

impl PointSampler for HypersphereSpec {
    fn dim(&self) -> usize {
        self.ambient_dim
    }

    fn sample(&self, rng: &mut LabRng) -> Vec<f64> {
        loop {
            let u: Vec<f64> =
                (0..self.subspace_dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let len = norm(&u);
            if len > 1e-300 {
                let u: Vec<f64> = u.iter().map(|v| v / len).collect();
                return self.embed(&u);
            }
        }
    }
}

/// `count` i.i.d. uniform points of the sphere.
pub fn sample_hypersphere(spec: &HypersphereSpec, count: usize, rng: &mut LabRng) -> Vec<Vec<f64>> {
    spec.sample_many(count, rng)
}

/// A manifold point with an orthonormal basis of its tangent space.
#[derive(Clone, Debug)]
pub struct TangentPoint {
    pub point: Vec<f64>,
    pub tangent: Vec<Vec<f64>>,
}

/// Manifolds that can produce point pairs for the reach probe.
pub trait TangentSampler {
    /// A random point `p` with its tangent space, and a second point `q`.
    /// Implementations should mix distant pairs with pairs close along the
    /// manifold, which are the ones that see the curvature.
    fn sample_pair(&self, rng: &mut LabRng) -> (TangentPoint, Vec<f64>);
}

impl TangentSampler for crate::sampler::PlanarCircle {
    fn sample_pair(&self, rng: &mut LabRng) -> (TangentPoint, Vec<f64>) {
        let a = rng.random::<f64>() * std::f64::consts::TAU;
        let b = if rng.random::<bool>() {
            rng.random::<f64>() * std::f64::consts::TAU
        } else {
            a + (rng.random::<f64>() - 0.5) * 0.5
        };
        let p = TangentPoint { point: self.at_angle(a), tangent: vec![vec![-a.sin(), a.cos()]] };
        (p, self.at_angle(b))
    }
}

impl ManifoldSpec {
    fn point_at_arc_param(&self, s: f64, cube: Vec<f64>) -> ManifoldPoint {
        let n = self.segment_count() as f64;
        let s = s.rem_euclid(n);
        let k = (s.floor() as i64).min(n as i64 - 1);
        let t = ((s - k as f64) * FRAC_PI_2).clamp(0.0, FRAC_PI_2);
        self.point(self.segment_index(k), t, cube).expect("valid by construction")
    }
}

impl TangentSampler for ManifoldSpec {
    fn sample_pair(&self, rng: &mut LabRng) -> (TangentPoint, Vec<f64>) {
        let n = self.segment_count() as f64;
        let s = rng.random::<f64>() * n;
        let cube_p: Vec<f64> = (1..self.intrinsic_dim).map(|_| rng.random::<f64>()).collect();
        let p = self.point_at_arc_param(s, cube_p.clone());
        let q = if rng.random::<bool>() {
            let cube_q = (1..self.intrinsic_dim).map(|_| rng.random::<f64>()).collect();
            self.point_at_arc_param(rng.random::<f64>() * n, cube_q)
        } else {
            // Up to one and a half segments away, crossing junctions.
            self.point_at_arc_param(s + (rng.random::<f64>() - 0.5) * 3.0, cube_p)
        };
        let mut curve = self.segment_tangent(p.segment, p.angle).expect("valid segment");
        curve.resize(self.ambient_dim, 0.0);
        let mut tangent = vec![curve];
        for j in 0..self.intrinsic_dim - 1 {
            let mut e = vec![0.0; self.ambient_dim];
            e[self.curve_dim() + j] = 1.0;
            tangent.push(e);
        }
        (TangentPoint { point: p.ambient, tangent }, q.ambient)
    }
}

/// Result of [`reach_probe`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReachProbe {
    /// Minimum of `|q - p|^2 / (2 dist(q - p, T_p))` over the sampled pairs.
    pub estimate: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

/// Federer-style reach surrogate: the reach is the infimum over point pairs
/// of `|q - p|^2 / (2 dist(q - p, T_p M))`, so the minimum over sampled
/// pairs is an upper estimate that converges to it from above.
///
/// Pairs closer than `1e-9` are skipped; pairs with `q - p` in the tangent
/// space contribute `+inf`.
pub fn reach_probe<M: TangentSampler + ?Sized>(
    manifold: &M,
    pair_samples: usize,
    rng: &mut LabRng,
) -> ReachProbe {
    let mut estimate = f64::INFINITY;
    let mut used = 0;
    let mut skipped = 0;
    for _ in 0..pair_samples {
        let (p, q) = manifold.sample_pair(rng);
        let mut v: Vec<f64> = q.iter().zip(&p.point).map(|(a, b)| a - b).collect();
        let len2 = dot(&v, &v);
        if len2.sqrt() < 1e-9 {
            skipped += 1;
            continue;
        }
        used += 1;
        for t in &p.tangent {
            let c = dot(&v, t);
            v.iter_mut().zip(t).for_each(|(vi, ti)| *vi -= c * ti);
        }
        let normal = norm(&v);
        if normal > 1e-15 {
            estimate = estimate.min(len2 / (2.0 * normal));
        }
    }
    ReachProbe { estimate, pairs_used: used, pairs_skipped: skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graycode::{expand_codeword, gray};
    use crate::rng::seeded;
    use std::collections::HashSet;

    fn codeword(spec: &ManifoldSpec, j: i64) -> Vec<f64> {
        let idx = spec.segment_index(j);
        expand_codeword(&gray(idx.value(), spec.code_bits()).unwrap(), spec.delta_r(), spec.curve_dim())
            .unwrap()
            .to_f64()
    }

    /// Direct evaluation of the segment formula from expanded codewords.
    fn formula(spec: &ManifoldSpec, k: i64, t: f64) -> Vec<f64> {
        let (p, c, n) = (codeword(spec, k - 1), codeword(spec, k), codeword(spec, k + 1));
        (0..p.len())
            .map(|i| (p[i] + n[i]) / 2.0 + (c[i] - n[i]) / 2.0 * t.cos() + (c[i] - p[i]) / 2.0 * t.sin())
            .collect()
    }

    #[test]
    fn derived_fields() {
        let s = ManifoldSpec::new(0.5, 1, 8).unwrap();
        assert_eq!((s.delta_r(), s.ambient_dim()), (1, 8));
        let s = ManifoldSpec::new(1.0, 3, 5).unwrap();
        assert_eq!((s.delta_r(), s.ambient_dim()), (4, 22));
        assert!(ManifoldSpec::new(0.5, 1, 1).is_err());
        assert!(ManifoldSpec::new(0.0, 1, 4).is_err());
        assert!(ManifoldSpec::new(0.5, 0, 4).is_err());
    }

    #[test]
    fn two_bit_half_pi_example() {
        let s = ManifoldSpec::new(0.5, 1, 2).unwrap();
        let x = s.segment_point(s.segment_index(1), FRAC_PI_2).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_formula_evaluator() {
        for (r, bits) in [(0.5, 4), (1.0, 3), (0.8, 5)] {
            let s = ManifoldSpec::new(r, 1, bits).unwrap();
            for k in 0..s.segment_count() as i64 {
                for t in [0.0, 0.3, FRAC_PI_2 / 2.0, 1.2, FRAC_PI_2] {
                    let got = s.segment_point(s.segment_index(k), t).unwrap();
                    let want = formula(&s, k, t);
                    for (a, b) in got.iter().zip(&want) {
                        assert!((a - b).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn angle_zero_is_previous_midpoint() {
        let s = ManifoldSpec::new(0.5, 1, 4).unwrap();
        for k in 0..16 {
            let x = s.segment_point(s.segment_index(k), 0.0).unwrap();
            let (p, c) = (codeword(&s, k - 1), codeword(&s, k));
            for i in 0..x.len() {
                assert!((x[i] - (p[i] + c[i]) / 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn angle_out_of_range() {
        let s = ManifoldSpec::new(0.5, 1, 4).unwrap();
        assert!(s.segment_point(s.segment_index(0), -0.1).is_err());
        assert!(s.segment_point(s.segment_index(0), 1.6).is_err());
        let wrong_width = CodeIndex::new(0, 3).unwrap();
        assert!(s.segment_point(wrong_width, 0.1).is_err());
    }

    #[test]
    fn quarter_angle_rounds_to_codeword() {
        let s = ManifoldSpec::new(1.0, 1, 5).unwrap();
        for k in 0..32 {
            let x = s.segment_point(s.segment_index(k), FRAC_PI_2 / 2.0).unwrap();
            let r = round_to_corner(&x).unwrap();
            assert_eq!(r.to_f64(), codeword(&s, k));
        }
    }

    #[test]
    fn corner_is_fixed_point_and_ties_round_up() {
        let c = BitString::parse("0110").unwrap();
        assert_eq!(round_to_corner(&c.to_f64()).unwrap(), c);
        assert_eq!(round_to_corner(&[0.5, 0.4999]).unwrap().to_string(), "10");
    }

    #[test]
    fn project_p_examples() {
        let s = ManifoldSpec::new(0.5, 1, 4).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(s.project_p(&x, 2).unwrap(), vec![0.1, 0.2]);
        let s = ManifoldSpec::new(1.0, 2, 3).unwrap();
        let b = BitString::parse("101").unwrap();
        let mut x = expand_codeword(&b, 4, 12).unwrap().to_f64();
        x.push(0.3);
        assert_eq!(s.project_p(&x, 3).unwrap(), b.to_f64());
        assert!(s.project_p(&x, 4).is_err());
    }

    #[test]
    fn samples_in_unit_cube_and_deterministic() {
        let s = ManifoldSpec::new(0.7, 3, 6).unwrap();
        let mut r = seeded(11);
        let a: Vec<_> = (0..200).map(|_| s.sample_uniform(&mut r)).collect();
        let mut r = seeded(11);
        for p in &a {
            assert!(p.ambient.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(p.ambient.len(), s.ambient_dim());
            assert_eq!(&s.sample_uniform(&mut r), p);
        }
    }

    #[test]
    fn corner_count_small() {
        let s = ManifoldSpec::new(0.5, 1, 6).unwrap();
        let corners: HashSet<_> = (0..64)
            .map(|k| {
                round_to_corner(&s.segment_point(s.segment_index(k), FRAC_PI_2 / 2.0).unwrap()).unwrap()
            })
            .collect();
        assert_eq!(corners.len(), 64);
    }

    #[test]
    fn projection_recovers_manifold_points() {
        let s = ManifoldSpec::new(1.0, 2, 4).unwrap();
        let mut rng = seeded(5);
        for _ in 0..50 {
            let p = s.sample_uniform(&mut rng);
            let q = s.project(&p.ambient).unwrap();
            let err: f64 = p.ambient.iter().zip(&q.ambient).map(|(a, b)| (a - b).abs()).sum();
            assert!(err < 1e-9, "{err}");
        }
    }

    #[test]
    fn projection_is_nearest_among_samples() {
        let s = ManifoldSpec::new(0.5, 1, 4).unwrap();
        let mut rng = seeded(6);
        let cloud: Vec<Vec<f64>> = (0..4000).map(|_| s.sample(&mut rng)).collect();
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let p = s.project(&x).unwrap();
            let d = crate::sampler::sq_dist(&x, &p.ambient);
            let best = cloud.iter().map(|c| crate::sampler::sq_dist(&x, c)).fold(f64::INFINITY, f64::min);
            assert!(d <= best + 1e-12);
        }
    }

    #[test]
    fn sphere_samples_unit_norm_and_in_span() {
        let mut rng = seeded(2);
        let sphere = HypersphereSpec::random(4, 12, &mut rng).unwrap();
        for x in sample_hypersphere(&sphere, 500, &mut rng) {
            assert!((norm(&x) - 1.0).abs() < 1e-10);
            let back = sphere.embed(&sphere.coords(&x));
            let resid: f64 = crate::sampler::sq_dist(&back, &x).sqrt();
            assert!(resid < 1e-10);
        }
    }

    #[test]
    fn sphere_rejects_non_orthonormal() {
        let err = HypersphereSpec::from_basis(2, vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert!(err.is_err());
    }

    #[test]
    fn spec_json_roundtrip_and_validation() {
        let s = ManifoldSpec::new(1.3, 2, 7).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: ManifoldSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let minimal: ManifoldSpec =
            serde_json::from_str(r#"{"reach_bound":0.5,"intrinsic_dim":1,"code_bits":8}"#).unwrap();
        assert_eq!(minimal.ambient_dim(), 8);
        let bad = serde_json::from_str::<ManifoldSpec>(
            r#"{"reach_bound":0.5,"intrinsic_dim":1,"code_bits":8,"ambient_dim":9}"#,
        );
        assert!(bad.is_err());
        let typo = serde_json::from_str::<ManifoldSpec>(
            r#"{"reach_bound":0.5,"intrinsic_dim":1,"code_bit":8}"#,
        );
        assert!(typo.is_err());
    }
}
