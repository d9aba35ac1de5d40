//! Nearest-anchor interpolation over a certified ε-net.
//!
//! If the target is `L`-Lipschitz and every query lies within `ε_out / L` of
//! an anchor labelled with the true value, the nearest-anchor prediction is
//! off by at most `ε_out`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_labeled_net, EpsilonNet};
use crate::nn::ReluNetwork;
use crate::rng::LabRng;
use crate::sampler::PointSampler;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationModel {
    net: EpsilonNet,
    lipschitz_bound: f64,
    target_error: f64,
}

/// A prediction with the distance to the anchor that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub distance: f64,
    /// Whether the anchor lies within the net radius.
    pub covered: bool,
}

/// Build a labelled net at radius `ε_out / L`, where `L` is the network's
/// Lipschitz bound. A constant network (`L = 0`) gets an unbounded radius.
///
/// An uncertified net is not an error; check [`InterpolationModel::is_certified`].
pub fn fit_interpolator<S: PointSampler + ?Sized>(
    target: &ReluNetwork,
    sampler: &S,
    eps_out: f64,
    delta: f64,
    max_samples: usize,
    rng: &mut LabRng,
) -> Result<InterpolationModel> {
    if !(eps_out > 0.0 && eps_out.is_finite()) {
        return Err(Error::domain("target error must be positive"));
    }
    if sampler.dim() != target.input_dim() {
        return Err(Error::Shape { expected: target.input_dim(), actual: sampler.dim() });
    }
    let lipschitz = target.lipschitz_bound();
    let radius = if lipschitz > 0.0 { eps_out / lipschitz } else { f64::MAX };
    let net = build_labeled_net(sampler, |x| target.eval(x), radius, delta, max_samples, rng)?;
    Ok(InterpolationModel { net, lipschitz_bound: lipschitz, target_error: eps_out })
}

impl InterpolationModel {
    pub fn net(&self) -> &EpsilonNet {
        &self.net
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn radius(&self) -> f64 {
        self.net.epsilon()
    }

    pub fn target_error(&self) -> f64 {
        self.target_error
    }

    pub fn is_certified(&self) -> bool {
        self.net.is_certified()
    }

    /// Label of the nearest anchor. Queries beyond the radius still get a
    /// value but are flagged as uncovered.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let (i, distance) = self.net.nearest_anchor(x)?;
        Ok(Prediction { value: self.net.label(i), distance, covered: distance <= self.radius() })
    }

    /// Compare against the true target on `count` fresh samples.
    pub fn evaluate<S: PointSampler + ?Sized>(
        &self,
        target: &ReluNetwork,
        sampler: &S,
        count: usize,
        rng: &mut LabRng,
    ) -> Result<InterpolationEval> {
        if count == 0 {
            return Err(Error::domain("evaluation needs at least one sample"));
        }
        let mut sq_err = 0.0;
        let mut sq_out = 0.0;
        let mut uncovered = 0usize;
        let mut max_err: f64 = 0.0;
        let mut max_out: f64 = 0.0;
        let mut lipschitz_violations = 0usize;
        for _ in 0..count {
            let x = sampler.sample(rng);
            let y = target.eval(&x);
            let p = self.predict(&x)?;
            let err = (p.value - y).abs();
            if err > self.lipschitz_bound * p.distance * (1.0 + 1e-9) + 1e-12 {
                lipschitz_violations += 1;
            }
            sq_err += err * err;
            sq_out += y * y;
            max_err = max_err.max(err);
            max_out = max_out.max(y.abs());
            if !p.covered {
                uncovered += 1;
            }
        }
        let n = count as f64;
        let uncovered_fraction = uncovered as f64 / n;
        Ok(InterpolationEval {
            samples: count,
            mse: sq_err / n,
            relative_mse: if sq_out > 0.0 { sq_err / sq_out } else { sq_err / n },
            max_abs_error: max_err,
            max_abs_output: max_out,
            uncovered_fraction,
            lipschitz_violations,
            error_budget: self.target_error.powi(2) + uncovered_fraction * (2.0 * max_out).powi(2),
        })
    }
}

/// Measured accuracy of an [`InterpolationModel`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationEval {
    pub samples: usize,
    pub mse: f64,
    pub relative_mse: f64,
    pub max_abs_error: f64,
    pub max_abs_output: f64,
    pub uncovered_fraction: f64,
    /// Samples where `|prediction - target| > L * distance`.
    pub lipschitz_violations: usize,
    /// `ε_out² + uncovered_fraction * (2 max|f|)²`: covered points err by at
    /// most ε_out, uncovered ones by at most the output range.
    pub error_budget: f64,
}

impl InterpolationEval {
    pub fn within_budget(&self) -> bool {
        self.mse <= self.error_budget
    }
}
