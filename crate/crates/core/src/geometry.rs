//! ε-nets certified by held-out sampling, greedy covers and packings, and the
//! coupon-collector simulation.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::rng::LabRng;
use crate::sampler::{sq_dist, PointSampler};

/// Default cap on the number of samples a net may draw.
pub const DEFAULT_MAX_SAMPLES: usize = 1_000_000;

/// Confidence level of the one-sided miss-rate bound.
pub const CERT_CONFIDENCE: f64 = 0.95;

/// One-sided Clopper-Pearson upper bound on a binomial rate at `confidence`.
pub fn binomial_upper_bound(misses: usize, trials: usize, confidence: f64) -> f64 {
    if trials == 0 || misses >= trials {
        return 1.0;
    }
    let beta = Beta::new((misses + 1) as f64, (trials - misses) as f64).expect("positive shapes");
    beta.inverse_cdf(confidence)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetStatus {
    Certified,
    /// The sample budget ran out before the miss-rate bound dropped below δ.
    Uncertified,
}

/// Outcome of the last held-out coverage check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub status: NetStatus,
    pub trials: usize,
    pub misses: usize,
    /// 95% one-sided upper bound on the miss rate.
    pub upper_bound: f64,
    /// Every sample drawn while building, including the check samples.
    pub samples_drawn: usize,
}

/// A finite set of labelled anchors that covers all but a δ fraction of a
/// distribution at radius ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetDoc", into = "NetDoc")]
pub struct EpsilonNet {
    dim: usize,
    epsilon: f64,
    delta: f64,
    /// Row-major anchor coordinates.
    points: Vec<f64>,
    labels: Vec<f64>,
    certification: Certification,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetDoc {
    dim: usize,
    epsilon: f64,
    delta: f64,
    certification: Certification,
    anchors: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl TryFrom<NetDoc> for EpsilonNet {
    type Error = Error;

    fn try_from(d: NetDoc) -> Result<Self> {
        check_params(d.epsilon, d.delta)?;
        if d.anchors.len() != d.labels.len() {
            return Err(Error::Shape { expected: d.anchors.len(), actual: d.labels.len() });
        }
        let mut points = Vec::with_capacity(d.anchors.len() * d.dim);
        for a in &d.anchors {
            if a.len() != d.dim {
                return Err(Error::Shape { expected: d.dim, actual: a.len() });
            }
            points.extend_from_slice(a);
        }
        Ok(EpsilonNet {
            dim: d.dim,
            epsilon: d.epsilon,
            delta: d.delta,
            points,
            labels: d.labels,
            certification: d.certification,
        })
    }
}

impl From<EpsilonNet> for NetDoc {
    fn from(n: EpsilonNet) -> Self {
        let anchors = n.anchors().map(<[f64]>::to_vec).collect();
        NetDoc {
            dim: n.dim,
            epsilon: n.epsilon,
            delta: n.delta,
            certification: n.certification,
            anchors,
            labels: n.labels,
        }
    }
}

fn check_params(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::domain("epsilon must be positive and finite"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain("delta must lie in (0, 1)"));
    }
    Ok(())
}

impl EpsilonNet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn certification(&self) -> &Certification {
        &self.certification
    }

    pub fn is_certified(&self) -> bool {
        self.certification.status == NetStatus::Certified
    }

    pub fn anchor(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn anchors(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim.max(1)).take(self.labels.len())
    }

    /// Index and distance of the closest anchor; ties go to the lowest index.
    pub fn nearest_anchor(&self, x: &[f64]) -> Result<(usize, f64)> {
        if self.is_empty() {
            return Err(Error::domain("nearest anchor of an empty net"));
        }
        if x.len() != self.dim {
            return Err(Error::Shape { expected: self.dim, actual: x.len() });
        }
        let (i, d2) = self.nearest_sq(x);
        Ok((i, d2.sqrt()))
    }

    fn nearest_sq(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, a) in self.anchors().enumerate() {
            let d = sq_dist(a, x);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Whether some anchor lies within `radius` of `x`.
    fn covers(&self, x: &[f64], radius_sq: f64) -> bool {
        self.anchors().any(|a| sq_dist(a, x) <= radius_sq)
    }

    /// Miss count of `x` samples at radius ε, for independent re-checks.
    pub fn count_misses<S: PointSampler + ?Sized>(&self, sampler: &S, trials: usize, rng: &mut LabRng) -> usize {
        let r2 = self.epsilon * self.epsilon;
        (0..trials).filter(|_| !self.covers(&sampler.sample(rng), r2)).count()
    }

    fn push(&mut self, x: &[f64], label: f64) {
        self.points.extend_from_slice(x);
        self.labels.push(label);
    }
}

/// Smallest growth batch.
pub const MIN_GROWTH: usize = 16;

/// Held-out check size: enough trials that zero misses certify `delta`
/// with room to spare.
fn check_trials(delta: f64) -> usize {
    ((30.0 / delta).ceil() as usize).max(100)
}

/// Build an (ε, δ)-net of unlabelled anchors. See [`build_labeled_net`].
pub fn build_net<S: PointSampler + ?Sized>(
    sampler: &S,
    epsilon: f64,
    delta: f64,
    max_samples: usize,
    rng: &mut LabRng,
) -> Result<EpsilonNet> {
    build_labeled_net(sampler, |_| 0.0, epsilon, delta, max_samples, rng)
}

/// Build an (ε, δ)-net, labelling each anchor with `labeler`.
///
/// Rounds alternate between growth and a held-out check. Growth draws a
/// batch (half the samples grown so far, at least [`MIN_GROWTH`]) and keeps
/// each sample whose nearest anchor is at least ε/2 away. The check draws
/// [`check_trials`] fresh samples, which never join the net, counts those
/// farther than ε from every anchor, and stops once the 95% upper bound on
/// the miss rate is at most δ. Every sample counts against `max_samples`.
pub fn build_labeled_net<S, F>(
    sampler: &S,
    labeler: F,
    epsilon: f64,
    delta: f64,
    max_samples: usize,
    rng: &mut LabRng,
) -> Result<EpsilonNet>
where
    S: PointSampler + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    check_params(epsilon, delta)?;
    let mut net = EpsilonNet {
        dim: sampler.dim(),
        epsilon,
        delta,
        points: Vec::new(),
        labels: Vec::new(),
        certification: Certification {
            status: NetStatus::Uncertified,
            trials: 0,
            misses: 0,
            upper_bound: 1.0,
            samples_drawn: 0,
        },
    };
    let cover_sq = epsilon * epsilon;
    let dedup_sq = 0.25 * cover_sq;
    let check = check_trials(delta);
    let mut drawn = 0usize;
    let mut grown = 0usize;
    loop {
        let growth = (grown / 2).max(MIN_GROWTH).min(max_samples - drawn);
        for _ in 0..growth {
            let x = sampler.sample(rng);
            if net.is_empty() || net.nearest_sq(&x).1 >= dedup_sq {
                let y = labeler(&x);
                net.push(&x, y);
            }
        }
        drawn += growth;
        grown += growth;

        let trials = check.min(max_samples - drawn);
        if trials == 0 {
            break;
        }
        let misses = (0..trials).filter(|_| !net.covers(&sampler.sample(rng), cover_sq)).count();
        drawn += trials;
        let upper = binomial_upper_bound(misses, trials, CERT_CONFIDENCE);
        net.certification = Certification {
            status: if upper <= delta { NetStatus::Certified } else { NetStatus::Uncertified },
            trials,
            misses,
            upper_bound: upper,
            samples_drawn: drawn,
        };
        if net.is_certified() {
            break;
        }
    }
    Ok(net)
}

/// Greedy cover: a point becomes a center unless some center is within ε.
/// Every input point ends up within ε of a center.
pub fn greedy_cover(points: &[Vec<f64>], epsilon: f64) -> Vec<usize> {
    greedy_separated(points, epsilon)
}

/// Greedy packing: a point becomes a center if it is farther than 2ε from
/// every center, so the ε-balls around the centers are disjoint.
pub fn greedy_packing(points: &[Vec<f64>], epsilon: f64) -> Vec<usize> {
    greedy_separated(points, 2.0 * epsilon)
}

/// Indices of points kept in input order, each farther than `sep` from all
/// earlier kept points.
fn greedy_separated(points: &[Vec<f64>], sep: f64) -> Vec<usize> {
    let sep_sq = sep * sep;
    let mut centers: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if centers.iter().all(|&c| sq_dist(&points[c], p) > sep_sq) {
            centers.push(i);
        }
    }
    centers
}

/// The three sizes in the packing/covering duality chain
/// `packing(2ε) ≤ cover(2ε) ≤ packing(ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub epsilon: f64,
    pub packing_at_2eps: usize,
    pub cover_at_2eps: usize,
    pub packing_at_eps: usize,
}

impl CoverReport {
    pub fn measure(points: &[Vec<f64>], epsilon: f64) -> Self {
        CoverReport {
            epsilon,
            packing_at_2eps: greedy_packing(points, 2.0 * epsilon).len(),
            cover_at_2eps: greedy_cover(points, 2.0 * epsilon).len(),
            packing_at_eps: greedy_packing(points, epsilon).len(),
        }
    }

    pub fn duality_holds(&self) -> bool {
        self.packing_at_2eps <= self.cover_at_2eps && self.cover_at_2eps <= self.packing_at_eps
    }
}

/// Stopping times of the coupon-collector process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouponReport {
    pub bins: usize,
    pub trials: usize,
    pub mean_t: f64,
    pub std_err: f64,
    /// Sorted stopping times, one per trial.
    pub stopping_times: Vec<u64>,
}

impl CouponReport {
    /// Empirical CDF as `(t, P[T ≤ t])` at each distinct stopping time.
    pub fn empirical_cdf(&self) -> Vec<(u64, f64)> {
        let n = self.stopping_times.len() as f64;
        let mut out: Vec<(u64, f64)> = Vec::new();
        for (i, &t) in self.stopping_times.iter().enumerate() {
            let frac = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == t => last.1 = frac,
                _ => out.push((t, frac)),
            }
        }
        out
    }

    /// CSV with header `t,cdf`.
    pub fn write_cdf_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "cdf"])?;
        for (t, f) in self.empirical_cdf() {
            w.write_record([t.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n * H_n`, the expected number of uniform draws to see all `n` bins.
pub fn coupon_expectation(n: usize) -> f64 {
    n as f64 * (1..=n).map(|k| 1.0 / k as f64).sum::<f64>()
}

pub fn coupon_collector_sim(bins: usize, trials: usize, rng: &mut LabRng) -> Result<CouponReport> {
    if bins == 0 {
        return Err(Error::domain("need at least one bin"));
    }
    if trials < 100 {
        return Err(Error::domain("at least 100 trials required"));
    }
    let mut seen = vec![false; bins];
    let mut times = Vec::with_capacity(trials);
    for _ in 0..trials {
        seen.iter_mut().for_each(|s| *s = false);
        let mut remaining = bins;
        let mut t = 0u64;
        while remaining > 0 {
            t += 1;
            let b = rng.random_range(0..bins);
            if !seen[b] {
                seen[b] = true;
                remaining -= 1;
            }
        }
        times.push(t);
    }
    times.sort_unstable();
    let n = trials as f64;
    let mean = times.iter().map(|&t| t as f64).sum::<f64>() / n;
    let var = times.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(CouponReport { bins, trials, mean_t: mean, std_err: (var / n).sqrt(), stopping_times: times })
}
