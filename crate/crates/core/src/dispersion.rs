//! Rate-dispersion functions, the rate-dispersion matrix and the
//! Berry-Esseen remainder. All moments are finite sums over the source
//! alphabet.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DistortionMatrix, Pmf, SourceInstance};
use crate::rd::rd_solve;
use crate::sr::sr_solve;

/// Second and third moments of the tilted densities `[ȷ_Y, ȷ_YZ]`.
#[derive(Debug, Clone, Serialize)]
pub struct DispersionReport {
    pub v_d1: f64,
    pub v_d2: f64,
    pub v_joint: f64,
    pub matrix: [[f64; 2]; 2],
    /// Centered third absolute moment of `ȷ_YZ`.
    pub t_joint: f64,
    pub rank: usize,
    pub min_eigenvalue: f64,
    /// Multiplier `λ*` of the first-stage rate constraint.
    pub lambda: f64,
    pub rate_y: f64,
    pub rate_z: f64,
    pub sum_rate: f64,
    pub tilted_y: Vec<f64>,
    pub tilted_z: Vec<f64>,
    pub tilted_yz: Vec<f64>,
}

fn centered(px: &Pmf, f: &[f64]) -> (f64, Vec<f64>) {
    let m = px.expect(f);
    (m, f.iter().map(|v| v - m).collect())
}

/// `Var[f(X)]` under `px`.
pub fn variance(px: &Pmf, f: &[f64]) -> f64 {
    let (_, c) = centered(px, f);
    px.expect(&c.iter().map(|v| v * v).collect::<Vec<_>>())
}

/// `Cov[f(X), g(X)]` under `px`.
pub fn covariance(px: &Pmf, f: &[f64], g: &[f64]) -> f64 {
    let (_, cf) = centered(px, f);
    let (_, cg) = centered(px, g);
    px.expect(&cf.iter().zip(&cg).map(|(a, b)| a * b).collect::<Vec<_>>())
}

/// Rate-dispersion function `V(D|P_X) = Var[ȷ(X, D)]`.
pub fn rate_dispersion(px: &Pmf, d: &DistortionMatrix, level: f64) -> Result<f64> {
    let sol = rd_solve(px, d, level)?;
    Ok(variance(px, &sol.tilted))
}

/// Eigenvalues of a symmetric 2×2 matrix in increasing order.
pub fn symmetric_eigenvalues(m: &[[f64; 2]; 2]) -> [f64; 2] {
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let r = half_diff.hypot(m[0][1]);
    [half_tr - r, half_tr + r]
}

/// Rank with eigenvalue cutoff `1e-9 · trace`.
pub fn numerical_rank(m: &[[f64; 2]; 2]) -> usize {
    let tr = m[0][0] + m[1][1];
    if tr <= 0.0 {
        return 0;
    }
    symmetric_eigenvalues(m)
        .iter()
        .filter(|&&e| e > 1e-9 * tr)
        .count()
}

/// Dispersion report at first-stage rate `r1`.
pub fn dispersion_report(inst: &SourceInstance, r1: f64) -> Result<DispersionReport> {
    let px = inst.px();
    let ry = rd_solve(px, inst.d1(), inst.dist1())?;
    let rz = rd_solve(px, inst.d2(), inst.dist2())?;
    let sr = sr_solve(inst, r1)?;
    let sum_rate = sr.value.finite().ok_or_else(|| {
        Error::Infeasible("R1 below the first-decoder rate-distortion function".into())
    })?;
    let v_d1 = variance(px, &ry.tilted);
    let v_d2 = variance(px, &rz.tilted);
    let v_joint = variance(px, &sr.tilted_yz);
    let c = covariance(px, &ry.tilted, &sr.tilted_yz);
    let matrix = [[v_d1, c], [c, v_joint]];
    let (_, cj) = centered(px, &sr.tilted_yz);
    let t_joint = px.expect(&cj.iter().map(|v| v.abs().powi(3)).collect::<Vec<_>>());
    Ok(DispersionReport {
        v_d1,
        v_d2,
        v_joint,
        matrix,
        t_joint,
        rank: numerical_rank(&matrix),
        min_eigenvalue: symmetric_eigenvalues(&matrix)[0],
        lambda: sr.lambda,
        rate_y: ry.rate,
        rate_z: rz.rate,
        sum_rate,
        tilted_y: ry.tilted,
        tilted_z: rz.tilted,
        tilted_yz: sr.tilted_yz,
    })
}

/// Berry-Esseen remainder `6 T / (√n V^{3/2})` of the joint tilted density.
pub fn be_remainder(report: &DispersionReport, n: u64) -> Result<f64> {
    be_remainder_raw(report.t_joint, report.v_joint, n)
}

pub fn be_remainder_raw(t: f64, v: f64, n: u64) -> Result<f64> {
    if v <= 0.0 {
        return Err(Error::DegenerateDispersion);
    }
    if n == 0 {
        return Err(Error::Invalid("blocklength must be positive".into()));
    }
    Ok(6.0 * t / ((n as f64).sqrt() * v.powf(1.5)))
}
