//! Gaussian tails, the bivariate normal cdf `Ψ`, second-order coding regions
//! and moderate deviations constants.

use serde::{Deserialize, Serialize};

use crate::dispersion::{numerical_rank, DispersionReport};
use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Standard normal density.
pub fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal cdf `Φ(x)`.
pub fn phi_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary cdf `Q(x) = 1 − Φ(x)`.
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of `Q`: Acklam's rational approximation followed by Newton steps.
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("Q^-1 needs p in (0,1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    #[allow(clippy::excessive_precision)]
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    // Lower-tail quantile u = Φ⁻¹(1 − p) = Q⁻¹(p).
    let lower = 1.0 - p;
    let tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    let mut x = if lower < 0.02425 {
        tail(lower)
    } else if lower > 1.0 - 0.02425 {
        -tail(p)
    } else {
        let q = lower - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..4 {
        let f = q_func(x) - p;
        let d = -phi_pdf(x);
        if d == 0.0 {
            break;
        }
        let step = f / d;
        // Halley correction: Q'' = x φ(x).
        x -= step / (1.0 + 0.5 * step * x);
    }
    Ok(x)
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth >= 50 || (b - a).abs() < 1e-14 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(&f, a, b, tol, 0)
}

/// `Ψ(x, y, 0, Σ) = P(U₁ ≤ x, U₂ ≤ y)` for `U ~ N(0, Σ)`.
pub fn bivariate_psi(x: f64, y: f64, cov: &[[f64; 2]; 2]) -> Result<f64> {
    let (v1, v2, c) = (cov[0][0], cov[1][1], cov[0][1]);
    if !(v1 >= 0.0 && v2 >= 0.0) || (cov[0][1] - cov[1][0]).abs() > 1e-12 * (v1 + v2).max(1e-300) {
        return Err(Error::Invalid(
            "covariance must be symmetric positive semidefinite".into(),
        ));
    }
    match numerical_rank(cov) {
        0 => Err(Error::DegenerateMatrix),
        1 => {
            if v1 <= 1e-9 * (v1 + v2) {
                let first = if x >= 0.0 { 1.0 } else { 0.0 };
                return Ok(first * phi_cdf(y / v2.sqrt()));
            }
            if v2 <= 1e-9 * (v1 + v2) {
                let second = if y >= 0.0 { 1.0 } else { 0.0 };
                return Ok(second * phi_cdf(x / v1.sqrt()));
            }
            if c < 0.0 {
                return Err(Error::Domain(
                    "rank-one covariance with negative correlation".into(),
                ));
            }
            // U₂ = (c / v₁) U₁ almost surely.
            let s = v1.sqrt();
            Ok(phi_cdf((x / s).min(y * s / c)))
        }
        _ => {
            let (s1, s2) = (v1.sqrt(), v2.sqrt());
            let rho = (c / (s1 * s2)).clamp(-1.0, 1.0);
            Ok(standard_bivariate(x / s1, y / s2, rho))
        }
    }
}

/// `P(V₁ ≤ h, V₂ ≤ k)` for standard normals with correlation `|ρ| < 1`,
/// integrating the conditional cdf of `V₂` over `V₁`.
fn standard_bivariate(h: f64, k: f64, rho: f64) -> f64 {
    const LIM: f64 = 10.0;
    let upper = h.min(LIM);
    if upper <= -LIM {
        return 0.0;
    }
    let sd = (1.0 - rho * rho).sqrt();
    let f = |t: f64| phi_pdf(t) * phi_cdf((k - rho * t) / sd);
    // Split at the conditional median so the kink is a node boundary.
    let mut cuts = vec![-LIM];
    if rho != 0.0 {
        let t0 = k / rho;
        if t0 > -LIM && t0 < upper {
            cuts.push(t0);
        }
    }
    cuts.push(upper);
    let v: f64 = cuts
        .windows(2)
        .map(|w| integrate(f, w[0], w[1], 1e-12))
        .sum();
    v.clamp(0.0, 1.0)
}

/// The three rate configurations of the second-order region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionCase {
    /// Interior first-stage rate, sum rate on the boundary.
    I,
    /// First-stage rate at `R_Y`, sum rate above the boundary.
    Ii,
    /// Both rates on the boundary.
    Iii,
}

impl std::str::FromStr for RegionCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" => Ok(Self::I),
            "ii" => Ok(Self::Ii),
            "iii" => Ok(Self::Iii),
            _ => Err(Error::Invalid(format!(
                "unknown case {s:?}, expected i, ii or iii"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionQuery {
    pub case_tag: RegionCase,
    pub epsilon: f64,
    pub v_d1: f64,
    pub v_joint: f64,
    pub matrix: [[f64; 2]; 2],
    pub lambda: f64,
}

impl RegionQuery {
    pub fn new(case_tag: RegionCase, epsilon: f64, report: &DispersionReport) -> Result<Self> {
        Self::from_moments(case_tag, epsilon, report.matrix, report.lambda)
    }

    pub fn from_moments(
        case_tag: RegionCase,
        epsilon: f64,
        matrix: [[f64; 2]; 2],
        lambda: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Domain(format!(
                "epsilon must lie in (0,1), got {epsilon}"
            )));
        }
        // λ* does not enter case (ii), where it may be +∞.
        let lambda = if case_tag == RegionCase::Ii {
            0.0
        } else {
            lambda
        };
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "multiplier must be finite and non-negative, got {lambda}"
            )));
        }
        Ok(Self {
            case_tag,
            epsilon,
            v_d1: matrix[0][0],
            v_joint: matrix[1][1],
            matrix,
            lambda,
        })
    }
}

/// Closed-form description of a second-order region.
#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClosedForm {
    /// `a₁ L₁ + a₂ L₂ ≥ c`.
    HalfPlane { a1: f64, a2: f64, c: f64 },
    /// `min(L₁, L₂) ≥ corner`.
    Rectangle { corner: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionBoundary {
    pub points: Vec<(f64, f64)>,
    pub closed_form: Option<ClosedForm>,
}

/// Default `L₁` grid: 200 points on `[c − 0.5, c + 6]`, `c = √V(D₁) Q⁻¹(ε)`.
pub fn default_l1_grid(v_d1: f64, epsilon: f64) -> Result<Vec<f64>> {
    let c = v_d1.sqrt() * q_inv(epsilon)?;
    Ok((0..200).map(|i| c - 0.5 + 6.5 * i as f64 / 199.0).collect())
}

fn all_ones(m: &[[f64; 2]; 2]) -> bool {
    let v = m[0][0];
    v > 0.0
        && m.iter()
            .flatten()
            .all(|e| (e - v).abs() <= 1e-10 * v.max(1.0))
}

fn joint_prob(q: &RegionQuery, l1: f64, l2: f64) -> Result<f64> {
    bivariate_psi(l1, q.lambda * l1 + l2, &q.matrix)
}

/// Whether `(L₁, L₂)` belongs to the region.
pub fn region_contains(q: &RegionQuery, l1: f64, l2: f64) -> Result<bool> {
    let qe = q_inv(q.epsilon)?;
    match q.case_tag {
        RegionCase::I => Ok(q.lambda * l1 + l2 >= q.v_joint.sqrt() * qe),
        RegionCase::Ii => Ok(l1 >= q.v_d1.sqrt() * qe),
        RegionCase::Iii => Ok(joint_prob(q, l1, l2)? >= 1.0 - q.epsilon),
    }
}

/// Smallest `L₂` in the case-(iii) region at the given `L₁`, or `None` when
/// no `L₂` suffices.
pub fn boundary_l2(q: &RegionQuery, l1: f64) -> Result<Option<f64>> {
    let target = 1.0 - q.epsilon;
    if q.v_d1 > 0.0 && phi_cdf(l1 / q.v_d1.sqrt()) < target {
        return Ok(None);
    }
    let f = |l2: f64| joint_prob(q, l1, l2).map(|v| v - target);
    bisect_increasing(f, 1e-8)
}

/// Smallest `L₁` in the case-(iii) region at the given `L₂`.
pub fn boundary_l1(q: &RegionQuery, l2: f64) -> Result<Option<f64>> {
    let target = 1.0 - q.epsilon;
    let f = |l1: f64| joint_prob(q, l1, l2).map(|v| v - target);
    bisect_increasing(f, 1e-10)
}

fn bisect_increasing<F: Fn(f64) -> Result<f64>>(f: F, tol: f64) -> Result<Option<f64>> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut k = 0;
    while f(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        k += 1;
        if k > 60 {
            return Ok(None);
        }
    }
    k = 0;
    while f(lo)? >= 0.0 {
        hi = lo;
        lo *= 2.0;
        k += 1;
        if k > 60 {
            return Ok(Some(lo));
        }
    }
    while hi - lo > tol {
        let m = 0.5 * (lo + hi);
        if f(m)? >= 0.0 {
            hi = m;
        } else {
            lo = m;
        }
    }
    Ok(Some(hi))
}

/// Boundary of the second-order coding region.
///
/// Cases (i) and (ii) are half-planes, sampled along `l1_grid` (case i) or
/// along the vertical edge (case ii). Case (iii) with an all-ones matrix and
/// `λ* = 0` is the rectangle `min(L₁, L₂) ≥ √V Q⁻¹(ε)`; otherwise each `L₁`
/// of the grid gets the `L₂` solving `Ψ(L₁, λ*L₁ + L₂) = 1 − ε`.
pub fn second_order_region(q: &RegionQuery, l1_grid: Option<&[f64]>) -> Result<RegionBoundary> {
    let qe = q_inv(q.epsilon)?;
    let grid = match l1_grid {
        Some(g) => g.to_vec(),
        None => default_l1_grid(q.v_d1.max(0.0), q.epsilon)?,
    };
    match q.case_tag {
        RegionCase::I => {
            let c = q.v_joint.sqrt() * qe;
            let points = grid.iter().map(|&l1| (l1, c - q.lambda * l1)).collect();
            Ok(RegionBoundary {
                points,
                closed_form: Some(ClosedForm::HalfPlane {
                    a1: q.lambda,
                    a2: 1.0,
                    c,
                }),
            })
        }
        RegionCase::Ii => {
            let c = q.v_d1.sqrt() * qe;
            let points = grid.iter().rev().map(|&l| (c, l)).collect();
            Ok(RegionBoundary {
                points,
                closed_form: Some(ClosedForm::HalfPlane {
                    a1: 1.0,
                    a2: 0.0,
                    c,
                }),
            })
        }
        RegionCase::Iii => {
            if numerical_rank(&q.matrix) == 0 {
                return Err(Error::DegenerateMatrix);
            }
            if q.lambda == 0.0 && all_ones(&q.matrix) {
                let c = q.v_d1.sqrt() * qe;
                let mut points: Vec<(f64, f64)> = grid
                    .iter()
                    .rev()
                    .filter(|&&l| l > c)
                    .map(|&l| (c, l))
                    .collect();
                points.push((c, c));
                points.extend(grid.iter().filter(|&&l| l > c).map(|&l| (l, c)));
                return Ok(RegionBoundary {
                    points,
                    closed_form: Some(ClosedForm::Rectangle { corner: c }),
                });
            }
            let mut points = Vec::with_capacity(grid.len());
            for &l1 in &grid {
                if let Some(l2) = boundary_l2(q, l1)? {
                    points.push((l1, l2));
                }
            }
            Ok(RegionBoundary {
                points,
                closed_form: None,
            })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MdcQuery {
    pub theta1: f64,
    pub theta2: f64,
    pub v_d1: f64,
    pub v_joint: f64,
    pub lambda: f64,
}

impl MdcQuery {
    pub fn new(theta1: f64, theta2: f64, report: &DispersionReport) -> Result<Self> {
        Self::from_moments(theta1, theta2, report.v_d1, report.v_joint, report.lambda)
    }

    pub fn from_moments(
        theta1: f64,
        theta2: f64,
        v_d1: f64,
        v_joint: f64,
        lambda: f64,
    ) -> Result<Self> {
        if !(theta1 > 0.0 && theta2 > 0.0) {
            return Err(Error::Domain("theta1 and theta2 must be positive".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Domain("multiplier must be non-negative".into()));
        }
        Ok(Self {
            theta1,
            theta2,
            v_d1,
            v_joint,
            lambda,
        })
    }

    /// `θ = λ* θ₁ + θ₂`.
    pub fn theta(&self) -> f64 {
        self.lambda * self.theta1 + self.theta2
    }
}

/// Moderate deviations constant `ν*`.
pub fn mdc_constant(q: &MdcQuery, case_tag: RegionCase) -> Result<f64> {
    if !(q.v_d1 > 0.0 && q.v_joint > 0.0) {
        return Err(Error::DegenerateDispersion);
    }
    let first = q.theta1 * q.theta1 / (2.0 * q.v_d1);
    match case_tag {
        RegionCase::I => {
            if !q.lambda.is_finite() {
                return Err(Error::Domain("case (i) needs a finite multiplier".into()));
            }
            Ok(q.theta().powi(2) / (2.0 * q.v_joint))
        }
        RegionCase::Ii => Ok(first),
        RegionCase::Iii => Ok(first.min(q.theta().powi(2) / (2.0 * q.v_joint))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tails_and_inverse() {
        assert_eq!(q_func(0.0), 0.5);
        assert_eq!(q_inv(0.5).unwrap(), 0.0);
        assert!((q_inv(0.05).unwrap() - 1.644_853_626_951_472).abs() < 1e-12);
        assert!(q_inv(0.0).is_err() && q_inv(1.0).is_err());
        for p in [1e-300, 1e-12, 0.005, 0.2, 0.7, 0.99, 1.0 - 1e-12] {
            let x = q_inv(p).unwrap();
            assert!((q_func(x) - p).abs() <= 1e-12 * p.max(1e-3), "{p}");
        }
        for i in 0..=160 {
            let x = -8.0 + 0.1 * i as f64;
            // Below about -4.5, Q(x) = 1 - δ is stored with absolute error
            // ε, which alone moves the preimage by ε / φ(x).
            let floor = 4.0 * f64::EPSILON * q_func(x) / phi_pdf(x);
            assert!(
                (q_inv(q_func(x)).unwrap() - x).abs() < 1e-10f64.max(floor),
                "{x}"
            );
            if x > -4.5 {
                assert!((q_inv(q_func(x)).unwrap() - x).abs() < 1e-10, "{x}");
            }
        }
    }

    #[test]
    fn psi_basic_values() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        assert!((bivariate_psi(0.0, 0.0, &id).unwrap() - 0.25).abs() < 1e-12);
        let m = [[1.0, 0.5], [0.5, 1.0]];
        let exact = 0.25 + 0.5f64.asin() / (2.0 * std::f64::consts::PI);
        assert!((bivariate_psi(0.0, 0.0, &m).unwrap() - exact).abs() < 1e-10);
        for cov in [id, m, [[2.0, -0.3], [-0.3, 0.5]], [[1.0, 1.0], [1.0, 1.0]]] {
            assert!((bivariate_psi(40.0, 40.0, &cov).unwrap() - 1.0).abs() < 1e-8);
        }
        assert!(matches!(
            bivariate_psi(0.0, 0.0, &[[0.0, 0.0], [0.0, 0.0]]),
            Err(Error::DegenerateMatrix)
        ));
        assert!(bivariate_psi(0.0, 0.0, &[[1.0, -1.0], [-1.0, 1.0]]).is_err());
    }

    #[test]
    fn psi_is_monotone() {
        let m = [[0.4, 0.25], [0.25, 0.3]];
        let mut prev = 0.0;
        for i in 0..40 {
            let x = -3.0 + 0.15 * i as f64;
            let v = bivariate_psi(x, 0.2, &m).unwrap();
            assert!(v >= prev - 1e-14 && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn rank_one_limit() {
        let (v1, v2) = (0.4f64, 0.9);
        let c = (v1 * v2).sqrt();
        let singular = [[v1, c], [c, v2]];
        for (x, y) in [(0.3, 0.2), (-0.4, 0.8), (1.0, -0.1)] {
            let exact = bivariate_psi(x, y, &singular).unwrap();
            for (d, tol) in [(1e-3, 1e-2), (1e-4, 1e-3)] {
                let near = [[v1, c * (1.0 - d)], [c * (1.0 - d), v2]];
                assert!((bivariate_psi(x, y, &near).unwrap() - exact).abs() < tol);
            }
        }
    }

    #[test]
    fn corner_values() {
        let q =
            RegionQuery::from_moments(RegionCase::I, 0.05, [[0.5, 0.0], [0.0, 0.5]], 0.0).unwrap();
        let b = second_order_region(&q, Some(&[0.0])).unwrap();
        assert!((b.points[0].1 - 1.163_085).abs() < 1e-5);
        assert!((b.points[0].1 - 0.5f64.sqrt() * 1.644_853_626_951_472).abs() < 1e-12);
        let v = 0.307_490;
        let q = RegionQuery::from_moments(RegionCase::Iii, 0.05, [[v, v], [v, v]], 0.0).unwrap();
        let b = second_order_region(&q, None).unwrap();
        let Some(ClosedForm::Rectangle { corner }) = b.closed_form else {
            panic!()
        };
        assert!((corner - 0.912).abs() < 1e-3);
        assert!(b
            .points
            .windows(2)
            .all(|w| w[1].0 >= w[0].0 && w[1].1 <= w[0].1));
    }

    #[test]
    fn generic_path_reproduces_rectangle() {
        let v = 0.307_490;
        let q = RegionQuery::from_moments(RegionCase::Iii, 0.05, [[v, v], [v, v]], 0.0).unwrap();
        let c = v.sqrt() * q_inv(0.05).unwrap();
        for l1 in [c + 0.01, c + 0.5, c + 3.0] {
            let l2 = boundary_l2(&q, l1).unwrap().unwrap();
            assert!((l2 - c).abs() < 1e-6);
        }
        assert!(boundary_l2(&q, c - 0.01).unwrap().is_none());
    }

    #[test]
    fn mdc_cases() {
        let q = MdcQuery::from_moments(1.0, 2.0, 0.5, 0.5, 0.0).unwrap();
        assert!((mdc_constant(&q, RegionCase::Iii).unwrap() - 1.0).abs() < 1e-15);
        let v = 0.2f64 * 0.8 * 4f64.ln().powi(2);
        let q = MdcQuery::from_moments(1.0, 1.0, v, v, 0.0).unwrap();
        assert!((mdc_constant(&q, RegionCase::Iii).unwrap() - 1.626_070).abs() < 1e-5);
        let a = mdc_constant(
            &MdcQuery::from_moments(1.0, 1.0, 0.3, 0.2, 0.5).unwrap(),
            RegionCase::Ii,
        )
        .unwrap();
        let b = mdc_constant(
            &MdcQuery::from_moments(2.0, 1.0, 0.3, 0.2, 0.5).unwrap(),
            RegionCase::Ii,
        )
        .unwrap();
        assert!((b - 4.0 * a).abs() < 1e-14);
        let q = MdcQuery::from_moments(1.0, 1.0, 0.3, 0.2, 0.5).unwrap();
        assert_eq!(q.theta(), 1.5);
        let m = mdc_constant(&q, RegionCase::Iii).unwrap();
        let i = mdc_constant(&q, RegionCase::I).unwrap();
        let ii = mdc_constant(&q, RegionCase::Ii).unwrap();
        assert_eq!(m, i.min(ii));
        assert!(mdc_constant(
            &MdcQuery::from_moments(1.0, 1.0, 0.0, 0.2, 0.0).unwrap(),
            RegionCase::Ii
        )
        .is_err());
    }
}
