//! Gaussian memoryless source with quadratic distortion.
//!
//! Everything reduces to the law of `Σ Xᵢ²/σ² ~ χ²_n`: the tilted densities
//! are affine in `x²`, and the achievability bound is a chi-square tail.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{q_inv, ClosedForm, RegionBoundary, RegionCase};
use crate::special::chi_square_sf;
use crate::spectrum::{in_pool, Bound, CodeParams, TrendPoint};
use rayon::prelude::*;

/// Source variance and the two distortion levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianInstance {
    pub sigma2: f64,
    #[serde(rename = "D1")]
    pub d1: f64,
    #[serde(rename = "D2")]
    pub d2: f64,
}

impl GaussianInstance {
    /// Accepts any positive parameters; use [`GaussianInstance::check_regime`]
    /// for the ordering `σ² > D₁ > D₂ > 0`.
    pub fn new(sigma2: f64, d1: f64, d2: f64) -> Result<Self> {
        for (name, v) in [("sigma2", sigma2), ("D1", d1), ("D2", d2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { sigma2, d1, d2 })
    }

    pub fn check_regime(&self) -> Result<()> {
        if self.sigma2 > self.d1 && self.d1 > self.d2 && self.d2 > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(
                "outside the assumed regime sigma2 > D1 > D2 > 0".into(),
            ))
        }
    }

    pub fn validated(self) -> Result<Self> {
        Self::new(self.sigma2, self.d1, self.d2)
    }
}

/// `½ log⁺(σ²/D)`.
pub fn gaussian_rate(sigma2: f64, d: f64) -> f64 {
    0.5 * (sigma2 / d).ln().max(0.0)
}

/// Rate-distortion functions of both decoders and their tilted densities.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GaussianRd {
    pub sigma2: f64,
    pub rate_y: f64,
    pub rate_z: f64,
}

impl GaussianRd {
    fn tilted(&self, rate: f64, x: f64) -> f64 {
        if rate == 0.0 {
            0.0
        } else {
            rate + 0.5 * (x * x / self.sigma2 - 1.0)
        }
    }

    /// `ȷ_Y(x) = ½ log(σ²/D₁) + ½(x²/σ² − 1)`.
    pub fn tilted_y(&self, x: f64) -> f64 {
        self.tilted(self.rate_y, x)
    }

    pub fn tilted_z(&self, x: f64) -> f64 {
        self.tilted(self.rate_z, x)
    }

    /// `Var[ȷ]`: ½ below `σ²`, zero at or above it.
    pub fn dispersion_y(&self) -> f64 {
        if self.rate_y > 0.0 {
            0.5
        } else {
            0.0
        }
    }

    pub fn dispersion_z(&self) -> f64 {
        if self.rate_z > 0.0 {
            0.5
        } else {
            0.0
        }
    }
}

pub fn gaussian_rd(inst: &GaussianInstance) -> GaussianRd {
    GaussianRd {
        sigma2: inst.sigma2,
        rate_y: gaussian_rate(inst.sigma2, inst.d1),
        rate_z: gaussian_rate(inst.sigma2, inst.d2),
    }
}

/// Large deviations rate function `I(ξ) = ½(e^{2ξ} − 1 − 2ξ)`.
pub fn rate_function(xi: f64) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(Error::Domain(format!("xi must be non-negative, got {xi}")));
    }
    // expm1 keeps the small-ξ cancellation exact.
    Ok(0.5 * ((2.0 * xi).exp_m1() - 2.0 * xi))
}

/// Quantization of the normalized power `Σ xᵢ²/(nσ²)` into `k` classes.
#[derive(Debug, Clone, Serialize)]
pub struct GaussianTypePartition {
    pub xi: f64,
    pub delta: f64,
    pub k: u64,
    /// `Λ(i)/σ² = e^{−2ξ} + (i−1)δ` for `i ∈ [0:k]`.
    pub boundaries: Vec<f64>,
}

impl GaussianTypePartition {
    /// `ξ = n^{−1/3}`, `δ = 1/n`.
    pub fn preset(n: u64) -> Result<Self> {
        let nf = n as f64;
        build_partition(1.0 / nf.cbrt(), 1.0 / nf)
    }

    /// Boundaries in distortion units for variance `sigma2`.
    pub fn scaled(&self, sigma2: f64) -> Vec<f64> {
        self.boundaries.iter().map(|b| b * sigma2).collect()
    }

    /// Class `i` with `Λ(i−1) < tσ² ≤ Λ(i)` for a normalized power `t` in `(e^{−2ξ}, e^{2ξ})`.
    pub fn class_of(&self, t: f64) -> Option<u64> {
        let lo = (-2.0 * self.xi).exp();
        if !(t > lo && t < (2.0 * self.xi).exp()) {
            return None;
        }
        let i = ((t - lo) / self.delta).ceil() as u64 + 1;
        Some(i.clamp(1, self.k))
    }
}

pub fn build_partition(xi: f64, delta: f64) -> Result<GaussianTypePartition> {
    if !(xi > 0.0 && delta > 0.0) {
        return Err(Error::Domain("xi and delta must be positive".into()));
    }
    let width = (2.0 * xi).exp() - (-2.0 * xi).exp();
    let k = (width / delta).ceil() as u64 + 1;
    let lo = (-2.0 * xi).exp();
    let boundaries = (0..=k).map(|i| lo + (i as f64 - 1.0) * delta).collect();
    Ok(GaussianTypePartition {
        xi,
        delta,
        k,
        boundaries,
    })
}

/// Result of the Gaussian type-covering bound.
#[derive(Debug, Clone, Serialize)]
pub struct GaussianBound {
    pub bound: Bound,
    pub k: u64,
    pub r1n: f64,
    pub r2n: f64,
    /// Normalized-power threshold of the chi-square tail.
    pub threshold: f64,
    /// Set when the threshold is not positive and the bound is 1.
    pub vacuous: bool,
}

/// `4e^{−nI(ξ)} + P(χ²_n/n > min_i (Dᵢ/σ²) e^{2R_{i,n}} − δ)`.
pub fn gaussian_achievability_bound(
    inst: &GaussianInstance,
    n: u64,
    log_m1: f64,
    log_m1m2: f64,
    xi: f64,
    delta: f64,
) -> Result<GaussianBound> {
    inst.check_regime()?;
    CodeParams::new(n, log_m1, log_m1m2, 0.0, 0.0)?;
    let part = build_partition(xi, delta)?;
    let nf = n as f64;
    let ln6 = 6f64.ln();
    let r1n = (log_m1 - 2.5 * nf.ln() - (part.k as f64).ln() - ln6) / nf;
    let r2n = (log_m1m2 - 5.0 * nf.ln() - 2.0 * ln6) / nf;
    let t1 = inst.d1 / inst.sigma2 * (2.0 * r1n).exp();
    let t2 = inst.d2 / inst.sigma2 * (2.0 * r2n).exp();
    let threshold = t1.min(t2) - delta;
    let atypical = 4.0 * (-nf * rate_function(xi)?).exp();
    if threshold <= 0.0 {
        let bound = Bound {
            value: 1.0,
            raw: atypical + 1.0,
            std_error: None,
        };
        return Ok(GaussianBound {
            bound,
            k: part.k,
            r1n,
            r2n,
            threshold,
            vacuous: true,
        });
    }
    let raw = atypical + chi_square_sf(nf, nf * threshold)?;
    let bound = Bound {
        value: raw.clamp(0.0, 1.0),
        raw,
        std_error: None,
    };
    Ok(GaussianBound {
        bound,
        k: part.k,
        r1n,
        r2n,
        threshold,
        vacuous: false,
    })
}

/// Chi-square threshold `t` such that `Σ ȷ(Xᵢ) ≥ level` iff `χ²_n ≥ t`.
fn chi_threshold(rate: f64, n: u64, level: f64) -> f64 {
    let nf = n as f64;
    if rate == 0.0 {
        return if level <= 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    nf + 2.0 * (level - nf * rate)
}

fn chi_tail(n: u64, t: f64) -> Result<f64> {
    if t <= 0.0 {
        Ok(1.0)
    } else if t.is_infinite() {
        Ok(0.0)
    } else {
        chi_square_sf(n as f64, t)
    }
}

/// One-shot converse with the tilted sums expressed through `χ²_n`.
pub fn gaussian_one_shot_converse(inst: &GaussianInstance, cp: &CodeParams) -> Result<Bound> {
    let rd = gaussian_rd(inst);
    let t1 = chi_threshold(rd.rate_y, cp.n, cp.log_m1 + cp.gamma1);
    let t2 = chi_threshold(rd.rate_z, cp.n, cp.log_m1m2 + cp.gamma2);
    let p = chi_tail(cp.n, t1.min(t2))?;
    let raw = p - (-cp.gamma1).exp() - (-cp.gamma2).exp();
    Ok(Bound {
        value: raw.clamp(0.0, 1.0),
        raw,
        std_error: None,
    })
}

/// Second-order region: the relevant `Lᵢ` must exceed `√(1/2) Q⁻¹(ε)`.
pub fn gaussian_region(
    inst: &GaussianInstance,
    case_tag: RegionCase,
    epsilon: f64,
) -> Result<RegionBoundary> {
    inst.check_regime()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    let c = 0.5f64.sqrt() * q_inv(epsilon)?;
    let span: Vec<f64> = (0..200).map(|i| c + 6.0 * i as f64 / 199.0).collect();
    let (points, form) = match case_tag {
        RegionCase::I => (
            span.iter().map(|&l1| (l1 - 3.0, c)).collect(),
            ClosedForm::HalfPlane {
                a1: 0.0,
                a2: 1.0,
                c,
            },
        ),
        RegionCase::Ii => (
            span.iter().map(|&l2| (c, l2 - 3.0)).collect(),
            ClosedForm::HalfPlane {
                a1: 1.0,
                a2: 0.0,
                c,
            },
        ),
        RegionCase::Iii => {
            let mut pts: Vec<(f64, f64)> = span.iter().rev().map(|&l2| (c, l2)).collect();
            pts.extend(span.iter().skip(1).map(|&l1| (l1, c)));
            (pts, ClosedForm::Rectangle { corner: c })
        }
    };
    Ok(RegionBoundary {
        points,
        closed_form: Some(form),
    })
}

/// Moderate deviations constant: `θ₂²`, `θ₁²` or `min(θ₁², θ₂²)` by case.
pub fn gaussian_mdc(theta1: f64, theta2: f64, case_tag: RegionCase) -> Result<f64> {
    if !(theta1 > 0.0 && theta2 > 0.0) {
        return Err(Error::Domain("theta1 and theta2 must be positive".into()));
    }
    Ok(match case_tag {
        RegionCase::I => theta2 * theta2,
        RegionCase::Ii => theta1 * theta1,
        RegionCase::Iii => (theta1 * theta1).min(theta2 * theta2),
    })
}

/// Normalized exponents of `P(χ²_n/n − 1 ≥ 2 min(θ₁, θ₂) ρ_n)`, the
/// case (iii) one-shot event at rates `R* + θᵢρ_n`.
pub fn gaussian_mdc_trend<R: Fn(u64) -> f64>(
    theta1: f64,
    theta2: f64,
    rho: R,
    n_list: &[u64],
) -> Result<Vec<TrendPoint>> {
    gaussian_mdc(theta1, theta2, RegionCase::Iii)?;
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let r = rho(n);
        let nf = n as f64;
        let p = chi_square_sf(nf, nf * (1.0 + 2.0 * theta1.min(theta2) * r))?;
        out.push(TrendPoint::new(n, r, p.ln()));
    }
    Ok(out)
}

/// Monte-Carlo estimate of `P(χ²_k > x)` with its standard error.
pub fn chi_square_tail_mc(k: u64, x: f64, trials: u64, seed: u64) -> Result<(f64, f64)> {
    if k == 0 || trials == 0 {
        return Err(Error::Invalid(
            "degrees of freedom and trials must be positive".into(),
        ));
    }
    let hits: u64 = in_pool(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t);
                let s: f64 = (0..k)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * z
                    })
                    .sum();
                u64::from(s > x)
            })
            .sum()
    });
    let p = hits as f64 / trials as f64;
    Ok((p, (p * (1.0 - p) / trials as f64).sqrt()))
}
