//! Statistical-query oracles, pairwise independence of function classes,
//! the variance bound on query answers, and the correlation-scan learner.
//!
//! A query is a function `g(x, y)` with values in `[-1, 1]`. For a class `C`
//! and input law `D` write `phi[f] = E_{x ~ D} g(x, f(x))`. If the class is
//! `(1 - eta)`-pairwise independent then `Var_{f ~ Unif(C)} phi[f] <= 2 eta`,
//! so an adversary answering the class mean fools most queries.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{segment_prefixes, ManifoldSpec};
use crate::rng::LabRng;
use crate::sampler::PointSampler;
use crate::targets::triangle_wave;

/// A finite family of functions indexed by `0..size()`.
pub trait FunctionClass {
    fn size(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn eval(&self, index: usize, x: &[f64]) -> f64;
}

/// All parities on `{0,1}^dim`, the empty one included. Member `mask`
/// selects the coordinates whose bit is set in `mask`.
#[derive(Clone, Copy, Debug)]
pub struct ParityClass {
    dim: usize,
}

impl ParityClass {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > 20 {
            return Err(Error::domain("parity class dimension must lie in [1, 20]"));
        }
        Ok(ParityClass { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn masked_triangle(mask: usize, mut coord: impl FnMut(usize) -> f64) -> f64 {
    let mut s = 0.0;
    let mut m = mask;
    while m != 0 {
        let j = m.trailing_zeros() as usize;
        s += coord(j);
        m &= m - 1;
    }
    triangle_wave(s)
}

impl FunctionClass for ParityClass {
    fn size(&self) -> usize {
        1 << self.dim
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, index: usize, x: &[f64]) -> f64 {
        masked_triangle(index, |j| x[j])
    }
}

/// Lifted parities `x -> tri(sum_{j in S} x[leader(j)])` on the space-filling
/// manifold, for every `S` inside the first `code_bits - truncation` bits.
#[derive(Clone, Debug)]
pub struct LiftedParityClass {
    manifold: ManifoldSpec,
    truncation: u32,
}

impl LiftedParityClass {
    pub fn new(manifold: ManifoldSpec, truncation: u32) -> Result<Self> {
        if truncation == 0 || truncation >= manifold.code_bits() {
            return Err(Error::domain("truncation must lie in [1, code_bits)"));
        }
        if manifold.code_bits() - truncation > 20 {
            return Err(Error::domain("prefix too long to enumerate"));
        }
        Ok(LiftedParityClass { manifold, truncation })
    }

    /// Truncation `floor(code_bits / 2)`.
    pub fn with_default_truncation(manifold: ManifoldSpec) -> Result<Self> {
        let t = manifold.code_bits() / 2;
        Self::new(manifold, t)
    }

    pub fn manifold(&self) -> &ManifoldSpec {
        &self.manifold
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn prefix_len(&self) -> usize {
        (self.manifold.code_bits() - self.truncation) as usize
    }
}

impl FunctionClass for LiftedParityClass {
    fn size(&self) -> usize {
        1 << self.prefix_len()
    }

    fn input_dim(&self) -> usize {
        self.manifold.ambient_dim()
    }

    fn eval(&self, index: usize, x: &[f64]) -> f64 {
        let delta = self.manifold.delta_r();
        masked_triangle(index, |j| x[j * delta])
    }
}

/// A single function, used for degenerate checks.
#[derive(Clone, Copy, Debug)]
pub struct SingletonClass<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64> FunctionClass for SingletonClass<F> {
    fn size(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _index: usize, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// A discrete input law: weighted atoms summing to one.
#[derive(Clone, Debug)]
pub struct Law {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    exact: bool,
}

impl Law {
    /// Uniform law on `{0,1}^dim`, atoms in index order (bit `j` of the
    /// index is coordinate `j`).
    pub fn uniform_boolean(dim: usize) -> Result<Self> {
        if dim == 0 || dim > 20 {
            return Err(Error::domain("Boolean law dimension must lie in [1, 20]"));
        }
        let n = 1usize << dim;
        let points = (0..n).map(|i| (0..dim).map(|j| ((i >> j) & 1) as f64).collect()).collect();
        Ok(Law { points, weights: vec![1.0 / n as f64; n], exact: true })
    }

    /// Arc-length law of a one-dimensional curve, discretised per segment.
    ///
    /// Segments whose first `prefix_len` bits are constant get one atom at
    /// the arc midpoint; the others get `quadrature` midpoint-rule nodes.
    /// Functions of the projected prefix therefore integrate exactly on the
    /// constant segments and to midpoint-rule accuracy on the rest.
    pub fn manifold_segments(spec: &ManifoldSpec, prefix_len: usize, quadrature: usize) -> Result<Self> {
        if spec.intrinsic_dim() != 1 {
            return Err(Error::domain("segment law requires intrinsic dimension 1"));
        }
        if spec.code_bits() > 16 {
            return Err(Error::domain("segment law limited to code_bits <= 16"));
        }
        if quadrature == 0 {
            return Err(Error::domain("quadrature must be positive"));
        }
        let segments = segment_prefixes(spec, prefix_len);
        let w_seg = 1.0 / segments.len() as f64;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (k, prefix) in segments.iter().enumerate() {
            let idx = spec.segment_index(k as i64);
            let nodes = if prefix.is_some() { 1 } else { quadrature };
            for q in 0..nodes {
                let t = (q as f64 + 0.5) / nodes as f64 * std::f64::consts::FRAC_PI_2;
                points.push(spec.segment_point(idx, t)?);
                weights.push(w_seg / nodes as f64);
            }
        }
        Ok(Law { points, weights, exact: true })
    }

    /// Empirical law of `count` i.i.d. draws.
    pub fn sampled<S: PointSampler + ?Sized>(sampler: &S, count: usize, rng: &mut LabRng) -> Result<Self> {
        if count == 0 {
            return Err(Error::domain("sampled law needs at least one draw"));
        }
        let points = sampler.sample_many(count, rng);
        Ok(Law { points, weights: vec![1.0 / count as f64; count], exact: false })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }
}

/// Check a query value; anything outside `[-1, 1]` (or NaN) is rejected.
fn checked(v: f64) -> Result<f64> {
    if (-1.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::QueryOutOfRange(v))
    }
}

/// `phi[f] = E_law g(x, f(x))` for every member of the class.
pub fn class_answers<C, G>(class: &C, law: &Law, g: G) -> Result<Vec<f64>>
where
    C: FunctionClass + ?Sized,
    G: Fn(&[f64], f64) -> f64,
{
    let mut phi = vec![0.0; class.size()];
    for (x, w) in law.atoms() {
        for (f, slot) in phi.iter_mut().enumerate() {
            *slot += w * checked(g(x, class.eval(f, x)))?;
        }
    }
    Ok(phi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OraclePolicy {
    /// Fresh Monte Carlo estimate with standard error at most τ/3.
    Honest,
    /// Class mean whenever it is within τ of the truth, else the truth.
    AdversarialMean,
}

enum Backend<'a> {
    Honest { sampler: &'a dyn PointSampler, rng: LabRng },
    Adversarial { law: &'a Law },
}

/// Answers statistical queries about the labelled distribution
/// `(x, class[target](x))`.
pub struct SqOracle<'a> {
    class: &'a dyn FunctionClass,
    target: usize,
    tau: f64,
    backend: Backend<'a>,
    queries: usize,
}

impl<'a> SqOracle<'a> {
    pub fn honest(
        class: &'a dyn FunctionClass,
        target: usize,
        tau: f64,
        sampler: &'a dyn PointSampler,
        rng: LabRng,
    ) -> Result<Self> {
        Self::build(class, target, tau, Backend::Honest { sampler, rng })
    }

    pub fn adversarial(class: &'a dyn FunctionClass, target: usize, tau: f64, law: &'a Law) -> Result<Self> {
        Self::build(class, target, tau, Backend::Adversarial { law })
    }

    fn build(class: &'a dyn FunctionClass, target: usize, tau: f64, backend: Backend<'a>) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::domain("tolerance must be positive"));
        }
        if target >= class.size() {
            return Err(Error::domain(format!("target {target} outside class of size {}", class.size())));
        }
        Ok(SqOracle { class, target, tau, backend, queries: 0 })
    }

    pub fn policy(&self) -> OraclePolicy {
        match self.backend {
            Backend::Honest { .. } => OraclePolicy::Honest,
            Backend::Adversarial { .. } => OraclePolicy::AdversarialMean,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn query_count(&self) -> usize {
        self.queries
    }

    /// Monte Carlo sample size of an honest answer: `ceil(9 / τ²)`, which
    /// bounds the standard error of a `[-1, 1]` query by τ/3.
    pub fn honest_budget(&self) -> usize {
        (9.0 / (self.tau * self.tau)).ceil() as usize
    }

    /// Answer `E g(x, y)`. A query returning values outside `[-1, 1]` is
    /// rejected and not counted.
    pub fn query<G: Fn(&[f64], f64) -> f64>(&mut self, g: G) -> Result<f64> {
        let budget = self.honest_budget();
        let answer = match &mut self.backend {
            Backend::Honest { sampler, rng } => {
                let mut sum = 0.0;
                for _ in 0..budget {
                    let x = sampler.sample(rng);
                    let y = self.class.eval(self.target, &x);
                    sum += checked(g(&x, y))?;
                }
                sum / budget as f64
            }
            Backend::Adversarial { law } => {
                let phi = class_answers(self.class, law, &g)?;
                let mean = phi.iter().sum::<f64>() / phi.len() as f64;
                let truth = phi[self.target];
                if (truth - mean).abs() <= self.tau {
                    mean
                } else {
                    truth
                }
            }
        };
        self.queries += 1;
        Ok(answer)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMethod {
    Exact,
    MonteCarlo,
}

/// Outcome of a pairwise-independence measurement over the alphabet `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseIndependenceReport {
    /// Probability over `(x, x')` that the joint law of `(f(x), f(x'))`
    /// under a uniform class member is not uniform on `{0,1}^2`.
    pub eta: f64,
    pub alphabet: Vec<u8>,
    pub method: EtaMethod,
    /// Pair draws; zero for exact enumeration.
    pub trials: usize,
    pub std_err: f64,
}

/// Class values at `x` packed as a signature, or `None` if some value is
/// not exactly 0 or 1.
fn boolean_signature<C: FunctionClass + ?Sized>(class: &C, x: &[f64]) -> Option<Vec<u8>> {
    (0..class.size())
        .map(|f| match class.eval(f, x) {
            v if v == 0.0 => Some(0),
            v if v == 1.0 => Some(1),
            _ => None,
        })
        .collect()
}

fn product_uniform(a: &[u8], b: &[u8]) -> bool {
    let n = a.len();
    if n % 4 != 0 {
        return false;
    }
    let mut cells = [0usize; 4];
    for (&u, &v) in a.iter().zip(b) {
        cells[(2 * u + v) as usize] += 1;
    }
    cells.iter().all(|&c| c == n / 4)
}

/// η by enumerating all atom pairs of `law`.
pub fn pairwise_independence_exact<C: FunctionClass + ?Sized>(
    class: &C,
    law: &Law,
) -> Result<PairwiseIndependenceReport> {
    if !law.is_exact() {
        return Err(Error::domain("exact pairwise independence needs an enumerated law"));
    }
    if class.size() > 1 << 12 {
        return Err(Error::domain("class too large to enumerate"));
    }
    // Group atoms by signature; non-Boolean atoms fail against everything.
    let mut groups: HashMap<Vec<u8>, f64> = HashMap::new();
    for (x, w) in law.atoms() {
        if let Some(sig) = boolean_signature(class, x) {
            *groups.entry(sig).or_default() += w;
        }
    }
    let mut groups: Vec<(Vec<u8>, f64)> = groups.into_iter().collect();
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    let mut good = 0.0;
    for (a, wa) in &groups {
        for (b, wb) in &groups {
            if product_uniform(a, b) {
                good += wa * wb;
            }
        }
    }
    Ok(PairwiseIndependenceReport {
        eta: (1.0 - good).clamp(0.0, 1.0),
        alphabet: vec![0, 1],
        method: EtaMethod::Exact,
        trials: 0,
        std_err: 0.0,
    })
}

/// η from `trials` independent pairs drawn from `sampler`.
pub fn pairwise_independence_mc<C, S>(
    class: &C,
    sampler: &S,
    trials: usize,
    rng: &mut LabRng,
) -> Result<PairwiseIndependenceReport>
where
    C: FunctionClass + ?Sized,
    S: PointSampler + ?Sized,
{
    if trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    let mut bad = 0usize;
    for _ in 0..trials {
        let a = boolean_signature(class, &sampler.sample(rng));
        let b = boolean_signature(class, &sampler.sample(rng));
        let ok = matches!((&a, &b), (Some(a), Some(b)) if product_uniform(a, b));
        if !ok {
            bad += 1;
        }
    }
    let eta = bad as f64 / trials as f64;
    Ok(PairwiseIndependenceReport {
        eta,
        alphabet: vec![0, 1],
        method: EtaMethod::MonteCarlo,
        trials,
        std_err: (eta * (1.0 - eta) / trials as f64).sqrt(),
    })
}

/// `3 * 2^-d - 2 * 4^-d`: η of the full parity class under uniform inputs,
/// the probability that `x = 0`, `x' = 0` or `x = x'`.
pub fn parity_class_eta(dim: usize) -> f64 {
    let p = 0.5f64.powi(dim as i32);
    3.0 * p - 2.0 * p * p
}

/// The query `clip(w . x + a (2y - 1) + b, -1, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClippedLinearQuery {
    pub w: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl ClippedLinearQuery {
    pub fn random(dim: usize, rng: &mut LabRng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        ClippedLinearQuery {
            w: (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect(),
            a: rng.sample::<f64, _>(StandardNormal),
            b: 0.5 * rng.sample::<f64, _>(StandardNormal),
        }
    }

    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        let s: f64 = self.w.iter().zip(x).map(|(w, x)| w * x).sum();
        (s + self.a * (2.0 * y - 1.0) + self.b).clamp(-1.0, 1.0)
    }
}

/// `(2y - 1)(2 chi_T(x) - 1)` for member `t` of `class`.
pub fn correlation_query<'c, C: FunctionClass + ?Sized>(
    class: &'c C,
    t: usize,
) -> impl Fn(&[f64], f64) -> f64 + 'c {
    move |x, y| ((2.0 * y - 1.0) * (2.0 * class.eval(t, x) - 1.0)).clamp(-1.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryVariance {
    pub variance: f64,
    /// Monte Carlo standard error of `variance`; zero for an exact law.
    pub sigma: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub eta: f64,
    pub queries: Vec<QueryVariance>,
}

impl VarianceReport {
    pub fn all_pass(&self) -> bool {
        self.queries.iter().all(|q| q.pass)
    }

    pub fn max_variance(&self) -> f64 {
        self.queries.iter().map(|q| q.variance).fold(0.0, f64::max)
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Number of batches used for the Monte Carlo error of a sampled law.
const VARIANCE_BATCHES: usize = 10;

/// For each query, `Var_{f ~ Unif(C)} phi[f]` checked against `2 eta + 3 sigma`.
///
/// With a sampled law `sigma` is the standard error across
/// [`VARIANCE_BATCHES`] disjoint batches of the atoms.
pub fn variance_bound_check<C, G>(class: &C, law: &Law, queries: &[G], eta: f64) -> Result<VarianceReport>
where
    C: FunctionClass + ?Sized,
    G: Fn(&[f64], f64) -> f64,
{
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain("eta must lie in [0, 1]"));
    }
    let mut out = Vec::with_capacity(queries.len());
    for g in queries {
        let var = variance(&class_answers(class, law, g)?);
        let sigma = if law.is_exact() || law.len() < VARIANCE_BATCHES * 2 {
            0.0
        } else {
            let chunk = law.len() / VARIANCE_BATCHES;
            let mut estimates = Vec::with_capacity(VARIANCE_BATCHES);
            for b in 0..VARIANCE_BATCHES {
                let sub = Law {
                    points: law.points[b * chunk..(b + 1) * chunk].to_vec(),
                    weights: vec![1.0 / chunk as f64; chunk],
                    exact: false,
                };
                estimates.push(variance(&class_answers(class, &sub, g)?));
            }
            // Each batch has 1/K of the data, so its spread overstates the
            // full-sample error by sqrt(K).
            (variance(&estimates) * VARIANCE_BATCHES as f64 / (VARIANCE_BATCHES as f64 - 1.0)).sqrt()
                / VARIANCE_BATCHES as f64
        };
        let bound = 2.0 * eta + 3.0 * sigma;
        out.push(QueryVariance { variance: var, sigma, bound, pass: var <= bound });
    }
    Ok(VarianceReport { eta, queries: out })
}

/// Outcome of one correlation scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub queries_used: usize,
    pub success: bool,
    pub identified: Option<usize>,
}

/// Query the correlation with each member in `order` and stop at the first
/// answer above 1/2.
pub fn correlation_scan<C: FunctionClass + ?Sized>(
    oracle: &mut SqOracle<'_>,
    class: &C,
    order: &[usize],
) -> Result<ScanOutcome> {
    let start = oracle.query_count();
    for &t in order {
        if oracle.query(correlation_query(class, t))? > 0.5 {
            return Ok(ScanOutcome {
                queries_used: oracle.query_count() - start,
                success: true,
                identified: Some(t),
            });
        }
    }
    Ok(ScanOutcome { queries_used: oracle.query_count() - start, success: false, identified: None })
}

/// One row of the scaling experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub code_bits: u32,
    pub truncation: u32,
    pub tau: f64,
    pub class_size: usize,
    /// Mean over every possible target of the queries used.
    pub mean_queries: f64,
    pub max_queries: usize,
    /// Fraction of targets correctly identified.
    pub success: f64,
}

/// Run the correlation scan in index order against the adversarial oracle
/// for every target of the lifted class on a curve with `code_bits` bits.
pub fn scan_lifted_class(reach: f64, code_bits: u32, tau: f64, quadrature: usize) -> Result<ScalingRow> {
    let manifold = ManifoldSpec::new(reach, 1, code_bits)?;
    let class = LiftedParityClass::with_default_truncation(manifold.clone())?;
    let law = Law::manifold_segments(&manifold, class.prefix_len(), quadrature)?;
    let order: Vec<usize> = (0..class.size()).collect();
    let mut total = 0usize;
    let mut worst = 0usize;
    let mut hits = 0usize;
    for target in 0..class.size() {
        let mut oracle = SqOracle::adversarial(&class, target, tau, &law)?;
        let out = correlation_scan(&mut oracle, &class, &order)?;
        total += out.queries_used;
        worst = worst.max(out.queries_used);
        if out.identified == Some(target) {
            hits += 1;
        }
    }
    Ok(ScalingRow {
        code_bits,
        truncation: class.truncation(),
        tau,
        class_size: class.size(),
        mean_queries: total as f64 / class.size() as f64,
        max_queries: worst,
        success: hits as f64 / class.size() as f64,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
