//! Point samplers shared by the geometry, learning and SQ modules.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::LabRng;

/// A distribution over points of `R^dim` that can be sampled i.i.d.
pub trait PointSampler {
    fn dim(&self) -> usize;

    fn sample(&self, rng: &mut LabRng) -> Vec<f64>;

    fn sample_many(&self, count: usize, rng: &mut LabRng) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}

impl<S: PointSampler + ?Sized> PointSampler for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn sample(&self, rng: &mut LabRng) -> Vec<f64> {
        (**self).sample(rng)
    }
}

/// Degenerate distribution concentrated on one point.
#[derive(Clone, Debug)]
pub struct FixedPoint(pub Vec<f64>);

impl PointSampler for FixedPoint {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, _rng: &mut LabRng) -> Vec<f64> {
        self.0.clone()
    }
}

/// Uniform distribution on a circle of the given radius in the plane,
/// centred at the origin.
#[derive(Clone, Copy, Debug)]
pub struct PlanarCircle {
    pub radius: f64,
}

impl PlanarCircle {
    pub fn at_angle(&self, theta: f64) -> Vec<f64> {
        vec![self.radius * theta.cos(), self.radius * theta.sin()]
    }
}

impl PointSampler for PlanarCircle {
    fn dim(&self) -> usize {
        2
    }

    fn sample(&self, rng: &mut LabRng) -> Vec<f64> {
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        self.at_angle(theta)
    }
}

/// Uniform distribution on `[0, 1]^dim`.
#[derive(Clone, Copy, Debug)]
pub struct UnitCube {
    pub dim: usize,
}

impl PointSampler for UnitCube {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut LabRng) -> Vec<f64> {
        (0..self.dim).map(|_| rng.random::<f64>()).collect()
    }
}

/// Uniform distribution on the Boolean cube `{0, 1}^dim`.
#[derive(Clone, Copy, Debug)]
pub struct BooleanCube {
    pub dim: usize,
}

impl PointSampler for BooleanCube {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut LabRng) -> Vec<f64> {
        (0..self.dim).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()
    }
}

/// Isotropic Gaussian `N(0, scale^2 I)` in `R^dim`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianCloud {
    pub dim: usize,
    pub scale: f64,
}

impl PointSampler for GaussianCloud {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut LabRng) -> Vec<f64> {
        gaussian_vec(self.dim, self.scale, rng)
    }
}

pub(crate) fn gaussian_vec(dim: usize, scale: f64, rng: &mut LabRng) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
