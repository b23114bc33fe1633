//! Von Mises-Fisher distribution on the unit 3-sphere: density evaluation and
//! rejection sampling, plus the rotational-noise draws used by the dataset
//! generators.
//!
//! The density is `p(x; mu, kappa) = c4(kappa) exp(kappa mu^T x)` with
//! `c4(kappa) = kappa / (4 pi^2 I1(kappa))`. Sampling follows the classic
//! tangent-normal decomposition: draw the radial component `w = mu^T x` by
//! rejection with Beta(3/2, 3/2) proposals, then a uniform direction in the
//! 3-space orthogonal to `mu`.

use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::quat::UnitQuaternion;

/// Proposal cap per sample; exceeding it aborts instead of spinning.
pub const MAX_PROPOSALS: usize = 1000;

/// Above this concentration the radial deviation `1 - w` is below f64
/// resolution around 1, so samples collapse to the mean direction exactly.
const SATURATION_KAPPA: f64 = 1e15;

#[derive(Debug, Error, PartialEq)]
pub enum VmfError {
    #[error("mean direction has norm {0:.6}, expected 1 within 1e-9")]
    NonUnitMean(f64),
    #[error("concentration must be nonnegative and finite, got {0}")]
    BadKappa(f64),
    #[error("evaluation point has norm {0:.6}, expected 1 within 1e-6")]
    NonUnitPoint(f64),
    #[error("rejection sampler exceeded {MAX_PROPOSALS} proposals")]
    ProposalCapExceeded,
    #[error("noise level must be positive, got {0}")]
    BadSigma(f64),
}

/// Mean direction and concentration of a vMF distribution on S^3.
#[derive(Debug, Clone, Copy)]
pub struct VmfParams {
    mu: Vector4<f64>,
    kappa: f64,
}

impl VmfParams {
    pub fn new(mu: Vector4<f64>, kappa: f64) -> Result<Self, VmfError> {
        let norm = mu.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(VmfError::NonUnitMean(norm));
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(VmfError::BadKappa(kappa));
        }
        Ok(Self { mu: mu / norm, kappa })
    }

    pub fn mu(&self) -> &Vector4<f64> {
        &self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// How a rotational noise level `sigma_r` maps to a vMF concentration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaConvention {
    /// `kappa = 2 / sigma_r^2`: larger sigma means more diffuse rotations,
    /// consistent with the large-kappa Gaussian limit of covariance 1/kappa.
    InverseVariance,
    /// `kappa = sigma_r^2 / 2`: the generator transcribed literally; larger
    /// sigma then means *more* concentration. Selectable for reproduction.
    Literal,
}

pub fn kappa_from_sigma(sigma_r: f64, convention: KappaConvention) -> f64 {
    match convention {
        KappaConvention::InverseVariance => 2.0 / (sigma_r * sigma_r),
        KappaConvention::Literal => 0.5 * sigma_r * sigma_r,
    }
}

/// Log of the modified Bessel function of the first kind, integer order.
///
/// Power series below x = 50, uniform asymptotic expansion above.
pub fn log_bessel_i(order: u32, x: f64) -> f64 {
    assert!(x >= 0.0, "log_bessel_i requires x >= 0");
    if x == 0.0 {
        return if order == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x < 50.0 {
        // I_nu(x) = (x/2)^nu sum_m (x^2/4)^m / (m! (m+nu)!)
        let q = 0.25 * x * x;
        let mut term = 1.0 / factorial(order);
        let mut sum = term;
        for m in 1..500 {
            term *= q / (m as f64 * (m + order as usize) as f64);
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        order as f64 * (0.5 * x).ln() + sum.ln()
    } else {
        // I_nu(x) ~ e^x / sqrt(2 pi x) * sum_k (-1)^k prod_j (mu - (2j-1)^2) / (k! (8x)^k)
        let mu = 4.0 * (order as f64) * (order as f64);
        let mut sum = 1.0;
        let mut prod = 1.0;
        let mut denom = 1.0;
        for k in 1..=6u32 {
            let j = (2 * k - 1) as f64;
            prod *= mu - j * j;
            denom *= k as f64 * 8.0 * x;
            sum += if k % 2 == 0 { prod / denom } else { -prod / denom };
        }
        x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln()
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n as u64).product::<u64>() as f64
}

/// `I2(kappa) / I1(kappa)`: the mean of `mu^T x` under vMF on S^3.
pub fn bessel_ratio_i2_i1(kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    if kappa >= SATURATION_KAPPA {
        return 1.0 - 1.5 / kappa;
    }
    (log_bessel_i(2, kappa) - log_bessel_i(1, kappa)).exp()
}

/// Log normalizing constant `ln c4(kappa) = ln kappa - ln(4 pi^2) - ln I1(kappa)`.
pub fn log_normalizer(kappa: f64) -> f64 {
    let log_area = (2.0 * std::f64::consts::PI * std::f64::consts::PI).ln();
    if kappa < 1e-12 {
        // c4(0) = 1 / (2 pi^2), the uniform density on S^3.
        return -log_area;
    }
    kappa.ln() - (4.0 * std::f64::consts::PI * std::f64::consts::PI).ln() - log_bessel_i(1, kappa)
}

/// Log density at a unit 4-vector `x`.
pub fn vmf_logpdf(params: &VmfParams, x: &Vector4<f64>) -> Result<f64, VmfError> {
    let norm = x.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(VmfError::NonUnitPoint(norm));
    }
    Ok(log_normalizer(params.kappa) + params.kappa * params.mu.dot(x))
}

/// Beta(3/2, 3/2) sample via the semicircle law: the x-coordinate of a
/// uniform point on the unit disk has density 2/pi sqrt(1-x^2), and
/// (1 + x)/2 is then Beta(3/2, 3/2).
fn sample_beta_3half<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random_range(-1.0..1.0);
        let y: f64 = rng.random_range(-1.0..1.0);
        if x * x + y * y <= 1.0 {
            return 0.5 * (1.0 + x);
        }
    }
}

/// One radial component `w = mu^T x` by rejection (Wood-style envelope).
fn sample_radial<R: Rng + ?Sized>(kappa: f64, rng: &mut R) -> Result<(f64, usize), VmfError> {
    // d = 4, so d - 1 = 3 throughout.
    let b = 3.0 / (2.0 * kappa + (4.0 * kappa * kappa + 9.0).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + 3.0 * (1.0 - x0 * x0).ln();
    for attempt in 1..=MAX_PROPOSALS {
        let z = sample_beta_3half(rng);
        let u: f64 = rng.random();
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        if kappa * w + 3.0 * (1.0 - x0 * w).ln() - c >= u.ln() {
            return Ok((w, attempt));
        }
    }
    Err(VmfError::ProposalCapExceeded)
}

/// Uniform unit direction in the 3-space orthogonal to `mu`.
fn sample_tangent_direction<R: Rng + ?Sized>(mu: &Vector4<f64>, rng: &mut R) -> Vector4<f64> {
    loop {
        let g = Vector4::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let v = g - mu * mu.dot(&g);
        let norm = v.norm();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}

/// Draws one vMF sample with the caller's generator.
pub fn sample_one<R: Rng + ?Sized>(
    params: &VmfParams,
    rng: &mut R,
) -> Result<Vector4<f64>, VmfError> {
    if params.kappa >= SATURATION_KAPPA {
        return Ok(params.mu);
    }
    let (w, _) = sample_radial(params.kappa, rng)?;
    let v = sample_tangent_direction(&params.mu, rng);
    let x = params.mu * w + v * (1.0 - w * w).max(0.0).sqrt();
    Ok(x / x.norm())
}

/// Draws `count` samples, deterministic for a fixed seed.
pub fn vmf_sample(
    params: &VmfParams,
    rng_seed: u64,
    count: usize,
) -> Result<Vec<Vector4<f64>>, VmfError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(count);
    let mut proposals = 0usize;
    for _ in 0..count {
        if params.kappa >= SATURATION_KAPPA {
            out.push(params.mu);
            continue;
        }
        let (w, used) = sample_radial(params.kappa, &mut rng)?;
        proposals += used;
        let v = sample_tangent_direction(&params.mu, &mut rng);
        let x = params.mu * w + v * (1.0 - w * w).max(0.0).sqrt();
        out.push(x / x.norm());
    }
    if count > 0 && params.kappa < SATURATION_KAPPA {
        log::debug!(
            "vMF sampler: {} samples, acceptance rate {:.3}",
            count,
            count as f64 / proposals.max(1) as f64
        );
    }
    Ok(out)
}

/// A rotational noise quaternion `q ~ vMF([1,0,0,0], kappa(sigma_r))`.
pub fn sample_rotation_noise(
    sigma_r: f64,
    convention: KappaConvention,
    rng_seed: u64,
) -> Result<UnitQuaternion, VmfError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_rotation_noise_with(sigma_r, convention, &mut rng)
}

/// Same as [`sample_rotation_noise`] but drawing from the caller's generator;
/// the dataset generators thread one seeded generator through all draws.
pub fn sample_rotation_noise_with<R: Rng + ?Sized>(
    sigma_r: f64,
    convention: KappaConvention,
    rng: &mut R,
) -> Result<UnitQuaternion, VmfError> {
    if !(sigma_r > 0.0) {
        return Err(VmfError::BadSigma(sigma_r));
    }
    let kappa = kappa_from_sigma(sigma_r, convention);
    let params = VmfParams::new(Vector4::new(1.0, 0.0, 0.0, 0.0), kappa)?;
    let x = sample_one(&params, rng)?;
    Ok(crate::quat::Quaternion::from_vec4(&x)
        .normalized()
        .expect("sampler outputs have unit norm"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1() -> Vector4<f64> {
        Vector4::new(1.0, 0.0, 0.0, 0.0)
    }

    #[test]
    fn log_bessel_matches_reference() {
        // Reference values from an independent Bessel implementation.
        let cases = [
            (1u32, 0.5, -1.355205447025335e0),
            (1, 2.0, 4.641344735461597e-1),
            (1, 10.0, 7.890203834104213e0),
            (1, 49.0, 4.612741873157747e1),
            (1, 50.0, 4.711747361658713e1),
            (1, 100.0, 9.677470745759145e1),
            (1, 1000.0, 9.956268086396400e2),
            (2, 10.0, 7.732596714041425e0),
            (2, 100.0, 9.675963227590303e1),
        ];
        for (order, x, expected) in cases {
            let got = log_bessel_i(order, x);
            assert!(
                (got - expected).abs() <= 1e-9 * expected.abs().max(1.0),
                "log I_{order}({x}) = {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn bessel_ratio_matches_reference() {
        let cases = [
            (10.0, 8.541853083236817e-1),
            (100.0, 9.850378800081565e-1),
            (1000.0, 9.985003753754932e-1),
        ];
        for (kappa, expected) in cases {
            assert!((bessel_ratio_i2_i1(kappa) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn logpdf_uniform_case() {
        let params = VmfParams::new(e1(), 0.0).unwrap();
        let x = Vector4::new(0.5, 0.5, 0.5, 0.5);
        let lp = vmf_logpdf(&params, &x).unwrap();
        assert!((lp - (-2.9826069522587457)).abs() < 1e-12);
    }

    #[test]
    fn logpdf_differences_cancel_normalizer() {
        let params = VmfParams::new(e1(), 7.3).unwrap();
        let x1 = Vector4::new(0.5, 0.5, 0.5, 0.5);
        let x2 = Vector4::new(0.0, 1.0, 0.0, 0.0);
        let diff = vmf_logpdf(&params, &x1).unwrap() - vmf_logpdf(&params, &x2).unwrap();
        let expected = 7.3 * (params.mu().dot(&x1) - params.mu().dot(&x2));
        assert!((diff - expected).abs() < 1e-12);
    }

    #[test]
    fn logpdf_maximized_at_mean() {
        let params = VmfParams::new(e1(), 3.0).unwrap();
        let at_mean = vmf_logpdf(&params, &e1()).unwrap();
        for x in vmf_sample(&VmfParams::new(e1(), 0.0).unwrap(), 11, 200).unwrap() {
            assert!(vmf_logpdf(&params, &x).unwrap() <= at_mean + 1e-12);
        }
    }

    #[test]
    fn logpdf_rejects_non_unit_point() {
        let params = VmfParams::new(e1(), 1.0).unwrap();
        let err = vmf_logpdf(&params, &Vector4::new(1.1, 0.0, 0.0, 0.0));
        assert!(matches!(err, Err(VmfError::NonUnitPoint(_))));
    }

    #[test]
    fn samples_are_unit_and_deterministic() {
        let params = VmfParams::new(e1(), 25.0).unwrap();
        let a = vmf_sample(&params, 42, 500).unwrap();
        let b = vmf_sample(&params, 42, 500).unwrap();
        assert_eq!(a, b);
        for x in &a {
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn concentrated_samples_hug_the_mean() {
        let params = VmfParams::new(e1(), 1000.0).unwrap();
        let samples = vmf_sample(&params, 7, 10_000).unwrap();
        let mean: f64 = samples.iter().map(|x| x[0]).sum::<f64>() / samples.len() as f64;
        assert!(mean >= 0.9980, "mean mu.x = {mean}");
        let oracle = bessel_ratio_i2_i1(1000.0);
        assert!((mean - oracle).abs() < 0.005, "mean {mean} vs oracle {oracle}");
    }

    #[test]
    fn uniform_samples_have_no_preferred_direction() {
        let params = VmfParams::new(e1(), 0.0).unwrap();
        let samples = vmf_sample(&params, 3, 10_000).unwrap();
        let mean: f64 = samples.iter().map(|x| x[0]).sum::<f64>() / samples.len() as f64;
        assert!(mean.abs() <= 0.05, "mean mu.x = {mean}");
    }

    #[test]
    fn mean_resultant_direction_aligns_with_mu() {
        let mu = Vector4::new(0.5, -0.5, 0.5, 0.5);
        let params = VmfParams::new(mu, 50.0).unwrap();
        let samples = vmf_sample(&params, 9, 10_000).unwrap();
        let resultant: Vector4<f64> = samples.iter().sum();
        let dir = resultant / resultant.norm();
        let angle = dir.dot(&mu).clamp(-1.0, 1.0).acos();
        assert!(angle <= 2.0f64.to_radians(), "angle {angle}");
    }

    #[test]
    fn density_integrates_to_one() {
        // Monte-Carlo over uniform S^3 samples: mean of p(x) times the
        // surface area 2 pi^2 must be 1.
        let uniform = VmfParams::new(e1(), 0.0).unwrap();
        let points = vmf_sample(&uniform, 17, 100_000).unwrap();
        let params = VmfParams::new(e1(), 2.0).unwrap();
        let area = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        let mean: f64 = points
            .iter()
            .map(|x| vmf_logpdf(&params, x).unwrap().exp())
            .sum::<f64>()
            / points.len() as f64;
        assert!((mean * area - 1.0).abs() <= 0.02, "integral {}", mean * area);
    }

    #[test]
    fn rotation_noise_concentrates_as_sigma_vanishes() {
        let q = sample_rotation_noise(1e-9, KappaConvention::InverseVariance, 5).unwrap();
        assert!((q.w() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_noise_reproducible() {
        let a = sample_rotation_noise(0.1, KappaConvention::InverseVariance, 123).unwrap();
        let b = sample_rotation_noise(0.1, KappaConvention::InverseVariance, 123).unwrap();
        assert_eq!(a.as_vec4(), b.as_vec4());
    }

    #[test]
    fn rotation_noise_matches_bessel_oracle() {
        // sigma_r = 0.1 under inverse-variance gives kappa = 200.
        let kappa = kappa_from_sigma(0.1, KappaConvention::InverseVariance);
        assert!((kappa - 200.0).abs() < 1e-12);
        let params = VmfParams::new(e1(), kappa).unwrap();
        let samples = vmf_sample(&params, 31, 10_000).unwrap();
        let mean: f64 = samples.iter().map(|x| x[0]).sum::<f64>() / samples.len() as f64;
        let oracle = bessel_ratio_i2_i1(kappa);
        assert!((mean - oracle).abs() <= 0.003, "mean {mean} oracle {oracle}");
    }

    #[test]
    fn literal_convention_is_selectable() {
        assert!((kappa_from_sigma(2.0, KappaConvention::Literal) - 2.0).abs() < 1e-15);
        assert!((kappa_from_sigma(0.1, KappaConvention::Literal) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            VmfParams::new(Vector4::new(2.0, 0.0, 0.0, 0.0), 1.0),
            Err(VmfError::NonUnitMean(_))
        ));
        assert!(matches!(
            VmfParams::new(e1(), -1.0),
            Err(VmfError::BadKappa(_))
        ));
        assert!(matches!(
            sample_rotation_noise(0.0, KappaConvention::InverseVariance, 0),
            Err(VmfError::BadSigma(_))
        ));
    }
}
