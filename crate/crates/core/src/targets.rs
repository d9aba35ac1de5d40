//! Parity functions, their triangle-wave extension to the unit cube, exact
//! single-hidden-layer ReLU realisations, and the lifted targets on the
//! space-filling manifold.
//!
//! Subset indices are 0-based.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graycode::BitString;
use crate::manifold::ManifoldSpec;
use crate::nn::{normalize_target, BiasPlacement, DenseLayer, ReluNetwork};
use crate::rng::LabRng;
use crate::sampler::PointSampler;

/// A set of coordinate indices of `{0, .., domain_dim - 1}`, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SubsetDoc", into = "SubsetDoc")]
pub struct ParitySubset {
    indices: Vec<usize>,
    domain_dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsetDoc {
    indices: Vec<usize>,
    domain_dim: usize,
}

impl TryFrom<SubsetDoc> for ParitySubset {
    type Error = Error;

    fn try_from(d: SubsetDoc) -> Result<Self> {
        ParitySubset::new(d.indices, d.domain_dim)
    }
}

impl From<ParitySubset> for SubsetDoc {
    fn from(s: ParitySubset) -> Self {
        SubsetDoc { indices: s.indices, domain_dim: s.domain_dim }
    }
}

impl ParitySubset {
    /// Sorts and deduplicates; every index must be below `domain_dim`.
    pub fn new(mut indices: Vec<usize>, domain_dim: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&i) = indices.iter().find(|&&i| i >= domain_dim) {
            return Err(Error::domain(format!("index {i} outside domain of size {domain_dim}")));
        }
        Ok(ParitySubset { indices, domain_dim })
    }

    /// Subset whose members are the set bits of `mask` (bit `i` means index `i`).
    pub fn from_mask(mask: u64, domain_dim: usize) -> Result<Self> {
        if domain_dim < 64 && mask >> domain_dim != 0 {
            return Err(Error::domain("mask has bits outside the domain"));
        }
        Self::new((0..domain_dim.min(64)).filter(|i| mask >> i & 1 == 1).collect(), domain_dim)
    }

    pub fn mask(&self) -> u64 {
        self.indices.iter().fold(0u64, |m, &i| m | 1 << i)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.domain_dim {
            return Err(Error::Shape { expected: self.domain_dim, actual: width });
        }
        Ok(())
    }
}

/// Parity of the bits of `x` selected by `s`.
pub fn parity_chi(s: &ParitySubset, x: &BitString) -> Result<u8> {
    s.check_width(x.len())?;
    Ok(s.indices.iter().fold(0u8, |acc, &i| acc ^ x.bits()[i]))
}

/// [`parity_chi`] on a real vector whose entries must be exactly 0 or 1.
pub fn parity_of_reals(s: &ParitySubset, x: &[f64]) -> Result<u8> {
    s.check_width(x.len())?;
    let mut acc = 0u8;
    for &i in &s.indices {
        acc ^= match x[i] {
            v if v == 0.0 => 0,
            v if v == 1.0 => 1,
            v => return Err(Error::domain(format!("non-Boolean entry {v} at index {i}"))),
        };
    }
    Ok(acc)
}

/// `1 - |1 - (s mod 2)|`: rises on even unit intervals, falls on odd ones.
pub fn triangle_wave(s: f64) -> f64 {
    1.0 - (1.0 - s.rem_euclid(2.0)).abs()
}

/// Triangle wave of the selected coordinate sum.
pub fn continuous_parity(s: &ParitySubset, x: &[f64]) -> Result<f64> {
    s.check_width(x.len())?;
    Ok(triangle_wave(s.indices.iter().map(|&i| x[i]).sum()))
}

/// Readout coefficient of hidden unit `k` in the parity network.
fn parity_readout(k: usize) -> f64 {
    match k {
        0 => 1.0,
        k if k % 2 == 1 => -2.0,
        _ => 2.0,
    }
}

/// Hidden layer `ReLU(sum_{i in S} x_i - k)` for `k = 0..=|S|` over `input_dim`
/// inputs, where `columns[i]` is the input position of subset element `i`.
fn parity_network(columns: &[usize], input_dim: usize) -> Result<ReluNetwork> {
    if columns.is_empty() {
        return Err(Error::domain("parity network needs a non-empty subset"));
    }
    let width = columns.len() + 1;
    let mut weights = vec![0.0; width * input_dim];
    for row in weights.chunks_exact_mut(input_dim) {
        for &c in columns {
            row[c] = 1.0;
        }
    }
    let bias = (0..width).map(|k| -(k as f64)).collect();
    let layer = DenseLayer::new(width, input_dim, weights, bias)?;
    let readout = (0..width).map(parity_readout).collect();
    ReluNetwork::new(input_dim, vec![layer], readout, BiasPlacement::BeforeActivation)
}

/// Single-hidden-layer network equal to [`continuous_parity`] whenever the
/// selected sum lies in `[0, |S| + 1]`, in particular on all of `[0, 1]^m`.
pub fn parity_as_relu_net(s: &ParitySubset) -> Result<ReluNetwork> {
    parity_network(&s.indices, s.domain_dim)
}

/// A lifted parity on the space-filling manifold.
///
/// The subset lives on the first `code_bits - truncation` bits and
/// `truncation = floor(code_bits / 2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HardTargetDoc", into = "HardTargetDoc")]
pub struct HardTargetSpec {
    manifold: ManifoldSpec,
    subset: ParitySubset,
    truncation: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HardTargetDoc {
    manifold: ManifoldSpec,
    subset: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truncation: Option<u32>,
}

impl TryFrom<HardTargetDoc> for HardTargetSpec {
    type Error = Error;

    fn try_from(d: HardTargetDoc) -> Result<Self> {
        let spec = HardTargetSpec::new(d.manifold, d.subset)?;
        if let Some(t) = d.truncation {
            if t != spec.truncation {
                return Err(Error::Config(format!(
                    "truncation must be floor(code_bits / 2) = {}, got {t}",
                    spec.truncation
                )));
            }
        }
        Ok(spec)
    }
}

impl From<HardTargetSpec> for HardTargetDoc {
    fn from(s: HardTargetSpec) -> Self {
        HardTargetDoc { manifold: s.manifold, subset: s.subset.indices, truncation: Some(s.truncation) }
    }
}

impl HardTargetSpec {
    pub fn new(manifold: ManifoldSpec, subset: Vec<usize>) -> Result<Self> {
        let truncation = manifold.code_bits() / 2;
        let prefix = (manifold.code_bits() - truncation) as usize;
        let subset = ParitySubset::new(subset, prefix)?;
        if subset.is_empty() {
            return Err(Error::domain("hard target needs a non-empty subset"));
        }
        Ok(HardTargetSpec { manifold, subset, truncation })
    }

    /// Uniformly random non-empty subset of the prefix.
    pub fn random(manifold: ManifoldSpec, rng: &mut LabRng) -> Result<Self> {
        let prefix = manifold.code_bits() - manifold.code_bits() / 2;
        let mask = rng.random_range(1..1u64 << prefix);
        let subset = ParitySubset::from_mask(mask, prefix as usize)?;
        Self::new(manifold, subset.indices)
    }

    pub fn manifold(&self) -> &ManifoldSpec {
        &self.manifold
    }

    pub fn subset(&self) -> &ParitySubset {
        &self.subset
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn prefix_len(&self) -> usize {
        (self.manifold.code_bits() - self.truncation) as usize
    }

    /// Direct evaluation: triangle wave of the selected block leaders.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let prefix = self.manifold.project_p(x, self.prefix_len())?;
        continuous_parity(&self.subset, &prefix)
    }
}

/// The lifted parity as a network over ambient inputs. The coordinate
/// selection is folded into the first weight matrix.
pub fn hard_target(spec: &HardTargetSpec) -> Result<ReluNetwork> {
    let columns: Vec<usize> =
        spec.subset.indices.iter().map(|&j| spec.manifold.block_leader(j)).collect();
    parity_network(&columns, spec.manifold.ambient_dim())
}

/// Random single-hidden-layer teacher normalised to unit RMS under `sampler`.
///
/// Weights are Gaussian with scale `1/sqrt(fan_in)`, clamped to
/// `[-weight_bound, weight_bound]`; biases are zero.
pub fn random_target<S: PointSampler + ?Sized>(
    input_dim: usize,
    width: usize,
    weight_bound: f64,
    sampler: &S,
    rng: &mut LabRng,
) -> Result<ReluNetwork> {
    if width == 0 {
        return Err(Error::domain("width must be at least 1"));
    }
    if !(weight_bound > 0.0) {
        return Err(Error::domain("weight bound must be positive"));
    }
    if sampler.dim() != input_dim {
        return Err(Error::Shape { expected: input_dim, actual: sampler.dim() });
    }
    let clamp = |v: f64| v.clamp(-weight_bound, weight_bound);
    let in_scale = 1.0 / (input_dim as f64).sqrt();
    let weights =
        (0..width * input_dim).map(|_| clamp(in_scale * rng.sample::<f64, _>(StandardNormal))).collect();
    let out_scale = 1.0 / (width as f64).sqrt();
    let readout = (0..width).map(|_| clamp(out_scale * rng.sample::<f64, _>(StandardNormal))).collect();
    let layer = DenseLayer::new(width, input_dim, weights, vec![0.0; width])?;
    let net = ReluNetwork::new(input_dim, vec![layer], readout, BiasPlacement::AfterActivation)?;
    Ok(normalize_target(&net, sampler, 100, rng)?.0)
}

/// Hidden width used for random teachers in ambient dimension `n`.
pub fn teacher_width(ambient_dim: usize) -> usize {
    ambient_dim.div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graycode::gray;
    use crate::rng::seeded;

    fn subset(ix: &[usize], m: usize) -> ParitySubset {
        ParitySubset::new(ix.to_vec(), m).unwrap()
    }

    #[test]
    fn small_parities() {
        assert_eq!(parity_chi(&subset(&[0], 1), &BitString::parse("1").unwrap()).unwrap(), 1);
        assert_eq!(parity_chi(&subset(&[0, 1], 2), &BitString::parse("11").unwrap()).unwrap(), 0);
        assert!(parity_chi(&subset(&[0], 2), &BitString::parse("1").unwrap()).is_err());
    }

    #[test]
    fn exhaustive_against_xor_fold() {
        for mask in 0u64..16 {
            let s = ParitySubset::from_mask(mask, 4).unwrap();
            for x in 0u64..16 {
                let bits = BitString::new((0..4).map(|i| (x >> (3 - i) & 1) as u8).collect()).unwrap();
                // bit i of the string is bit (3 - i) of x
                let mut fold = 0u64;
                for i in 0..4 {
                    if mask >> i & 1 == 1 {
                        fold ^= x >> (3 - i) & 1;
                    }
                }
                assert_eq!(u64::from(parity_chi(&s, &bits).unwrap()), fold);
            }
        }
    }

    #[test]
    fn non_boolean_reals_rejected() {
        assert!(parity_of_reals(&subset(&[0], 2), &[0.5, 1.0]).is_err());
        assert_eq!(parity_of_reals(&subset(&[0, 1], 2), &[1.0, 0.0]).unwrap(), 1);
    }

    #[test]
    fn midpoint_of_descending_piece() {
        let s = subset(&[0, 1], 2);
        assert!((continuous_parity(&s, &[0.75, 0.75]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_bit_network_is_identity_on_unit_interval() {
        let net = parity_as_relu_net(&subset(&[0], 1)).unwrap();
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            assert!((net.eval(&[x]) - x).abs() < 1e-15);
        }
        assert_eq!(net.layers()[0].out_dim(), 2);
    }

    #[test]
    fn empty_subset_has_no_network() {
        assert!(parity_as_relu_net(&subset(&[], 3)).is_err());
    }

    #[test]
    fn hard_target_on_corners() {
        for n_b in [4u32, 5, 8] {
            let m = ManifoldSpec::new(1.0, 1, n_b).unwrap();
            let spec = HardTargetSpec::new(m.clone(), vec![0, 1]).unwrap();
            assert_eq!(spec.truncation(), n_b / 2);
            let net = hard_target(&spec).unwrap();
            for i in 0..1u32 << n_b {
                let b = gray(i, n_b).unwrap();
                let corner = crate::graycode::expand_codeword(&b, m.delta_r(), m.ambient_dim()).unwrap();
                let y = net.eval(&corner.to_f64());
                let expect = f64::from(b.bits()[0] ^ b.bits()[1]);
                assert_eq!(y, expect);
            }
        }
    }

    #[test]
    fn hard_target_spec_validation() {
        let m = ManifoldSpec::new(1.0, 1, 8).unwrap();
        assert!(HardTargetSpec::new(m.clone(), vec![]).is_err());
        assert!(HardTargetSpec::new(m.clone(), vec![4]).is_err());
        let spec = HardTargetSpec::new(m, vec![3, 0]).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: HardTargetSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let wrong_t = json.replace("\"truncation\":4", "\"truncation\":3");
        assert!(serde_json::from_str::<HardTargetSpec>(&wrong_t).is_err());
    }

    #[test]
    fn teacher_width_rule() {
        assert_eq!(teacher_width(32), 8);
        assert_eq!(teacher_width(33), 9);
    }

    #[test]
    fn random_target_is_seeded_and_normalised() {
        let sampler = crate::sampler::GaussianCloud { dim: 16, scale: 1.0 };
        let a = random_target(16, 4, 10.0, &sampler, &mut seeded(3)).unwrap();
        let b = random_target(16, 4, 10.0, &sampler, &mut seeded(3)).unwrap();
        assert_eq!(a, b);
        let mut rng = seeded(99);
        let ms: f64 = (0..20_000).map(|_| a.eval(&sampler.sample(&mut rng)).powi(2)).sum::<f64>() / 20_000.0;
        assert!((ms.sqrt() - 1.0).abs() < 0.1, "rms {}", ms.sqrt());
    }
}
