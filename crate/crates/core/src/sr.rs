//! Minimal sum rate `𝖱(R₁, D₁, D₂ | P_X)` and the joint tilted density.
//!
//! The convex program `min I(X;YZ)` subject to `I(X;Y) ≤ R₁`, `E d₁ ≤ D₁`,
//! `E d₂ ≤ D₂` is solved through its Lagrange dual
//! `g(λ, ν₁, ν₂) = inf_W I(X;YZ) + λ(I(X;Y) − R₁) + ν₁(E d₁ − D₁) + ν₂(E d₂ − D₂)`.
//! For fixed multipliers the infimum is computed by alternating between the
//! test channel and the reference laws `Q_Y`, `Q_{Z|Y}`. The channel update
//! factors as
//!
//! ```text
//! W(z|x,y) ∝ Q(z|y) exp(−ν₂ d₂'(x,z))
//! W(y|x)   ∝ Q_Y(y) exp(−(ν₁ d₁'(x,y) + c(x,y)) / (1+λ)),  c = −log Σ_z Q(z|y) exp(−ν₂ d₂')
//! ```
//!
//! with `dᵢ' = dᵢ − Dᵢ`. The multipliers are found by projected Newton ascent
//! on `g` using finite-difference curvature.
//!
//! Two cases are settled before the dual iteration:
//!
//! * `D₂` at or above the largest useful distortion: a constant second
//!   reproduction is free and `𝖱 = R_Y(D₁)`.
//! * the optimal decoder-1 channel is a degraded version of the optimal
//!   decoder-2 channel (`X - Z - Y` Markov): then `𝖱 = R_Z(D₂)` with
//!   `λ* = ν₁* = 0`. On this face the dual optimum is unique but the primal
//!   channel is not, so iterating the dual there would be ill-posed.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{Pmf, SourceInstance};
use crate::rd::{rd_solve, RdSolution};
use crate::special::solve_linear;

const INFEASIBLE_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-10;
const INNER_CAP: usize = 200_000;
const MARKOV_TOL: f64 = 1e-8;

/// A minimal sum-rate value, `+∞` when the first-stage rate is too small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SrValue {
    Finite(f64),
    Infeasible,
}

impl SrValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            SrValue::Finite(v) => Some(v),
            SrValue::Infeasible => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl Serialize for SrValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SrValue::Finite(v) => s.serialize_f64(*v),
            SrValue::Infeasible => s.serialize_str("infeasible"),
        }
    }
}

/// Which constraints bind at the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub struct ActiveConstraints {
    pub rate: bool,
    pub d1: bool,
    pub d2: bool,
}

/// How the solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SrMethod {
    Infeasible,
    ConstantSecond,
    Refinable,
    Boundary,
    Dual,
    DegenerateDual,
}

#[derive(Debug, Clone, Serialize)]
pub struct SrDiagnostics {
    pub method: SrMethod,
    /// `I(X;YZ)` of the returned channel.
    pub primal_value: f64,
    /// `|primal − dual|` at the returned point.
    pub dual_gap: f64,
    /// `(I(X;Y) − R₁, E d₁ − D₁, E d₂ − D₂)` of the returned channel.
    pub residuals: [f64; 3],
    pub outer_iterations: usize,
    pub inner_sweeps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SrSolution {
    pub value: SrValue,
    pub r1: f64,
    /// `test_channel[x][y][z] = P*(y, z | x)`.
    pub test_channel: Vec<Vec<Vec<f64>>>,
    pub lambda: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub tilted_yz: Vec<f64>,
    pub active: ActiveConstraints,
    pub diagnostics: SrDiagnostics,
}

impl SrSolution {
    pub fn is_feasible(&self) -> bool {
        matches!(self.value, SrValue::Finite(_))
    }

    /// Joint output law `P*_{YZ}` induced by `px`.
    pub fn output_law(&self, px: &Pmf) -> Vec<Vec<f64>> {
        joint_output(px.probs(), &self.test_channel)
    }
}

fn joint_output(p: &[f64], w: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let ny = w[0].len();
    let nz = w[0][0].len();
    let mut out = vec![vec![0.0; nz]; ny];
    for (x, wx) in w.iter().enumerate() {
        for y in 0..ny {
            for z in 0..nz {
                out[y][z] += p[x] * wx[y][z];
            }
        }
    }
    out
}

/// Problem data restricted to the source support.
struct Problem {
    p: Vec<f64>,
    d1: Vec<Vec<f64>>,
    d2: Vec<Vec<f64>>,
    lev1: f64,
    lev2: f64,
    r1: f64,
}

impl Problem {
    fn new(inst: &SourceInstance, r1: f64, xs: &[usize]) -> Self {
        let ny = inst.d1().cols();
        let nz = inst.d2().cols();
        Self {
            p: xs.iter().map(|&x| inst.px().get(x)).collect(),
            d1: xs
                .iter()
                .map(|&x| (0..ny).map(|y| inst.d1().get(x, y)).collect())
                .collect(),
            d2: xs
                .iter()
                .map(|&x| (0..nz).map(|z| inst.d2().get(x, z)).collect())
                .collect(),
            lev1: inst.dist1(),
            lev2: inst.dist2(),
            r1,
        }
    }
}

/// Reference laws of the alternating scheme.
#[derive(Debug, Clone)]
struct Reference {
    qy: Vec<f64>,
    qzy: Vec<Vec<f64>>,
}

impl Reference {
    fn uniform(ny: usize, nz: usize) -> Self {
        Self {
            qy: vec![1.0 / ny as f64; ny],
            qzy: vec![vec![1.0 / nz as f64; nz]; ny],
        }
    }
}

/// Output of one fixed-multiplier minimization.
#[derive(Debug, Clone)]
struct Inner {
    value: f64,
    reference: Reference,
    /// Channel `W(y|x)` and `W(z|x,y)` on the source support.
    wy: Vec<Vec<f64>>,
    wz: Vec<Vec<Vec<f64>>>,
    residuals: [f64; 3],
    sweeps: usize,
}

/// Quantities of one alternating step at fixed reference laws.
struct Step {
    value: f64,
    wy: Vec<Vec<f64>>,
    wz: Vec<Vec<Vec<f64>>>,
}

fn channel_step(pr: &Problem, m: [f64; 3], rf: &Reference) -> Step {
    let [lam, nu1, nu2] = m;
    let ny = rf.qy.len();
    let nz = rf.qzy[0].len();
    let mut value = 0.0;
    let mut wy = Vec::with_capacity(pr.p.len());
    let mut wz = Vec::with_capacity(pr.p.len());
    for i in 0..pr.p.len() {
        let e2: Vec<f64> = (0..nz)
            .map(|k| (-nu2 * (pr.d2[i][k] - pr.lev2)).exp())
            .collect();
        let mut rowz = vec![vec![0.0; nz]; ny];
        let mut ex = vec![0.0; ny];
        for j in 0..ny {
            if rf.qy[j] <= 0.0 {
                continue;
            }
            let mut s = 0.0;
            for k in 0..nz {
                let v = rf.qzy[j][k] * e2[k];
                rowz[j][k] = v;
                s += v;
            }
            for v in rowz[j].iter_mut() {
                *v /= s;
            }
            ex[j] = rf.qy[j]
                * (-nu1 * (pr.d1[i][j] - pr.lev1) / (1.0 + lam)).exp()
                * s.powf(1.0 / (1.0 + lam));
        }
        let den: f64 = ex.iter().sum();
        ex.iter_mut().for_each(|v| *v /= den);
        value += pr.p[i] * (1.0 + lam) * -den.ln();
        wy.push(ex);
        wz.push(rowz);
    }
    Step {
        value: value - lam * pr.r1,
        wy,
        wz,
    }
}

fn update_reference(pr: &Problem, st: &Step, old: &Reference) -> Reference {
    let ny = old.qy.len();
    let nz = old.qzy[0].len();
    let mut qy = vec![0.0; ny];
    let mut joint = vec![vec![0.0; nz]; ny];
    for i in 0..pr.p.len() {
        for j in 0..ny {
            let a = pr.p[i] * st.wy[i][j];
            if a == 0.0 {
                continue;
            }
            qy[j] += a;
            for k in 0..nz {
                joint[j][k] += a * st.wz[i][j][k];
            }
        }
    }
    let mut qzy = old.qzy.clone();
    for j in 0..ny {
        if qy[j] < 1e-15 {
            qy[j] = 0.0;
        } else {
            qzy[j] = joint[j].iter().map(|v| v / qy[j]).collect();
        }
    }
    let t: f64 = qy.iter().sum();
    qy.iter_mut().for_each(|v| *v /= t);
    Reference { qy, qzy }
}

fn primal_stats(pr: &Problem, wy: &[Vec<f64>], wz: &[Vec<Vec<f64>>]) -> ([f64; 3], f64) {
    let ny = wy[0].len();
    let nz = wz[0][0].len();
    let mut py = vec![0.0; ny];
    let mut pyz = vec![vec![0.0; nz]; ny];
    let (mut e1, mut e2) = (0.0, 0.0);
    for i in 0..pr.p.len() {
        for j in 0..ny {
            let a = pr.p[i] * wy[i][j];
            py[j] += a;
            e1 += a * pr.d1[i][j];
            for k in 0..nz {
                pyz[j][k] += a * wz[i][j][k];
                e2 += a * wz[i][j][k] * pr.d2[i][k];
            }
        }
    }
    let (mut iy, mut iyz) = (0.0, 0.0);
    for i in 0..pr.p.len() {
        for j in 0..ny {
            let a = wy[i][j];
            if a <= 0.0 {
                continue;
            }
            iy += pr.p[i] * a * (a / py[j]).ln();
            for k in 0..nz {
                let b = a * wz[i][j][k];
                if b > 0.0 {
                    iyz += pr.p[i] * b * (b / pyz[j][k]).ln();
                }
            }
        }
    }
    ([iy - pr.r1, e1 - pr.lev1, e2 - pr.lev2], iyz)
}

fn joint_of(rf: &Reference) -> Vec<Vec<f64>> {
    rf.qzy
        .iter()
        .zip(&rf.qy)
        .map(|(row, &q)| row.iter().map(|v| v * q).collect())
        .collect()
}

fn reference_of(j: &[Vec<f64>], fallback: &Reference) -> Reference {
    let qy: Vec<f64> = j.iter().map(|r| r.iter().sum()).collect();
    let qzy = j
        .iter()
        .zip(&qy)
        .zip(&fallback.qzy)
        .map(|((r, &q), old)| {
            if q > 0.0 {
                r.iter().map(|v| v / q).collect()
            } else {
                old.clone()
            }
        })
        .collect();
    Reference { qy, qzy }
}

/// Concave objective `Φ(J) = Σ_x P(x) log T_x(J)` of the inner problem over
/// the joint reference law, with
/// `T_x = Σ_y e₁(x,y) q_y (S_xy / q_y)^a`, `S_xy = Σ_z J(y,z) e₂(x,z)`,
/// `a = 1/(1+λ)`. The inner value equals `−(1+λ)Φ − λR₁`.
struct JointObjective<'a> {
    pr: &'a Problem,
    a: f64,
    e1: Vec<Vec<f64>>,
    e2: Vec<Vec<f64>>,
}

impl<'a> JointObjective<'a> {
    fn new(pr: &'a Problem, m: [f64; 3]) -> Self {
        let [lam, nu1, nu2] = m;
        let e1 = pr
            .d1
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&d| (-nu1 * (d - pr.lev1) / (1.0 + lam)).exp())
                    .collect()
            })
            .collect();
        let e2 = pr
            .d2
            .iter()
            .map(|r| r.iter().map(|&d| (-nu2 * (d - pr.lev2)).exp()).collect())
            .collect();
        Self {
            pr,
            a: 1.0 / (1.0 + lam),
            e1,
            e2,
        }
    }

    fn t(&self, j: &[Vec<f64>]) -> Vec<f64> {
        let qy: Vec<f64> = j.iter().map(|r| r.iter().sum()).collect();
        (0..self.pr.p.len())
            .map(|x| {
                let mut t = 0.0;
                for y in 0..j.len() {
                    if qy[y] <= 0.0 {
                        continue;
                    }
                    let s: f64 = j[y].iter().zip(&self.e2[x]).map(|(a, b)| a * b).sum();
                    t += self.e1[x][y] * qy[y] * (s / qy[y]).powf(self.a);
                }
                t
            })
            .collect()
    }

    fn phi(&self, j: &[Vec<f64>]) -> f64 {
        self.t(j)
            .iter()
            .zip(&self.pr.p)
            .map(|(t, p)| p * t.ln())
            .sum()
    }

    /// Normalized gradient `G(y,z) = Σ_x P(x) ∂T_x/∂J(y,z) / T_x`; equals 1 on
    /// the support at the optimum and is at most 1 elsewhere. For rows with
    /// no mass the derivative is taken along the single-entry direction.
    fn grad(&self, j: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let ny = j.len();
        let nz = j[0].len();
        let t = self.t(j);
        let qy: Vec<f64> = j.iter().map(|r| r.iter().sum()).collect();
        let mut g = vec![vec![0.0; nz]; ny];
        for x in 0..self.pr.p.len() {
            let w = self.pr.p[x] / t[x];
            for y in 0..ny {
                if qy[y] > 0.0 {
                    let s: f64 = j[y].iter().zip(&self.e2[x]).map(|(a, b)| a * b).sum();
                    let rho = s / qy[y];
                    let fq = (1.0 - self.a) * rho.powf(self.a);
                    let fs = self.a * rho.powf(self.a - 1.0);
                    for z in 0..nz {
                        g[y][z] += w * self.e1[x][y] * (fq + fs * self.e2[x][z]);
                    }
                } else {
                    for z in 0..nz {
                        g[y][z] += w * self.e1[x][y] * self.e2[x][z].powf(self.a);
                    }
                }
            }
        }
        (g, t)
    }

    /// Hessian of `Φ` restricted to the listed entries.
    fn hessian(&self, j: &[Vec<f64>], idx: &[(usize, usize)], t: &[f64]) -> Vec<Vec<f64>> {
        let k = idx.len();
        let qy: Vec<f64> = j.iter().map(|r| r.iter().sum()).collect();
        let mut h = vec![vec![0.0; k]; k];
        let a = self.a;
        for x in 0..self.pr.p.len() {
            let mut dt = vec![0.0; k];
            let mut second: Vec<(f64, f64, f64)> = vec![(0.0, 0.0, 0.0); j.len()];
            for y in 0..j.len() {
                if qy[y] <= 0.0 {
                    continue;
                }
                let s: f64 = j[y].iter().zip(&self.e2[x]).map(|(u, v)| u * v).sum();
                let rho = s / qy[y];
                let q = qy[y];
                second[y] = (
                    -a * (1.0 - a) * rho.powf(a) / q,
                    a * (1.0 - a) * rho.powf(a - 1.0) / q,
                    a * (a - 1.0) * rho.powf(a - 2.0) / q,
                );
            }
            for (u, &(y, z)) in idx.iter().enumerate() {
                let s: f64 = j[y].iter().zip(&self.e2[x]).map(|(p, q)| p * q).sum();
                let rho = s / qy[y];
                dt[u] = self.e1[x][y]
                    * ((1.0 - a) * rho.powf(a) + a * rho.powf(a - 1.0) * self.e2[x][z]);
            }
            let w = self.pr.p[x] / t[x];
            for u in 0..k {
                let (yu, zu) = idx[u];
                for v in u..k {
                    let (yv, zv) = idx[v];
                    let mut val = -w * dt[u] * dt[v] / t[x];
                    if yu == yv {
                        let (fqq, fqs, fss) = second[yu];
                        let e2u = self.e2[x][zu];
                        let e2v = self.e2[x][zv];
                        val += w * self.e1[x][yu] * (fqq + fqs * (e2u + e2v) + fss * e2u * e2v);
                    }
                    h[u][v] += val;
                }
            }
        }
        for u in 0..k {
            for v in 0..u {
                h[u][v] = h[v][u];
            }
        }
        h
    }
}

fn fw_gap(g: &[Vec<f64>]) -> f64 {
    g.iter().flatten().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - 1.0
}

/// Moves mass toward the vertex `(y, z)` by the best of a few step sizes; the
/// Newton model is undefined on rows without mass.
fn seed_entry(obj: &JointObjective, j: &mut [Vec<f64>], y: usize, z: usize) {
    let f0 = obj.phi(j);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut gamma = 0.3;
    while gamma > 1e-12 {
        let mut trial: Vec<Vec<f64>> = j
            .iter()
            .map(|r| r.iter().map(|v| v * (1.0 - gamma)).collect())
            .collect();
        trial[y][z] += gamma;
        let f = obj.phi(&trial);
        if f > f0 && best.as_ref().is_none_or(|(bf, _)| f > *bf) {
            best = Some((f, trial));
        }
        gamma *= 0.25;
    }
    match best {
        Some((_, t)) => j.iter_mut().zip(t).for_each(|(r, tr)| *r = tr),
        None => {
            let tiny = 1e-12;
            j.iter_mut().flatten().for_each(|v| *v *= 1.0 - tiny);
            j[y][z] += tiny;
        }
    }
}

/// Active-set Newton ascent of `Φ` over the simplex of joint laws.
fn newton_joint(obj: &JointObjective, j: &mut Vec<Vec<f64>>) -> bool {
    let ny = j.len();
    let nz = j[0].len();
    let mut active: Vec<Vec<bool>> = j
        .iter()
        .map(|r| r.iter().map(|&v| v > 1e-13).collect())
        .collect();
    for y in 0..ny {
        for z in 0..nz {
            if !active[y][z] {
                j[y][z] = 0.0;
            }
        }
    }
    let mut adds = 0;
    let mut damping = 1e-12;
    let mut stuck = false;
    for _ in 0..300 {
        let (g, t) = obj.grad(j);
        let idx: Vec<(usize, usize)> = (0..ny)
            .flat_map(|y| (0..nz).map(move |z| (y, z)))
            .filter(|&(y, z)| active[y][z])
            .collect();
        let on_face = stuck || idx.iter().all(|&(y, z)| (g[y][z] - 1.0).abs() < 1e-13);
        stuck = false;
        if on_face || fw_gap(&g) < 1e-14 {
            let mut worst = None;
            let mut wv = 1.0 + 1e-12;
            for y in 0..ny {
                for z in 0..nz {
                    if !active[y][z] && g[y][z] > wv {
                        wv = g[y][z];
                        worst = Some((y, z));
                    }
                }
            }
            match worst {
                Some((y, z)) => {
                    active[y][z] = true;
                    if j[y].iter().all(|&v| v == 0.0) {
                        seed_entry(obj, j, y, z);
                    }
                    adds += 1;
                    if adds > 4 * ny * nz {
                        return false;
                    }
                    continue;
                }
                None => return true,
            }
        }
        let k = idx.len();
        let hs = obj.hessian(j, &idx, &t);
        let tr: f64 = (0..k).map(|u| hs[u][u].abs()).sum::<f64>().max(1e-300);
        let f0 = obj.phi(j);
        let mut accepted = false;
        while damping <= 1e3 {
            let mut h = vec![vec![0.0; k + 1]; k + 1];
            for u in 0..k {
                h[u][..k].copy_from_slice(&hs[u]);
                h[u][u] -= damping * tr;
                h[u][k] = 1.0;
                h[k][u] = 1.0;
            }
            let mut rhs: Vec<f64> = idx.iter().map(|&(y, z)| -g[y][z]).collect();
            rhs.push(0.0);
            let Some(sol) = solve_linear(&h, &rhs) else {
                damping *= 100.0;
                continue;
            };
            let step = &sol[..k];
            let mut tmax = 1.0f64;
            let mut blocking = None;
            for (u, &(y, z)) in idx.iter().enumerate() {
                if step[u] < 0.0 && -j[y][z] / step[u] < tmax {
                    tmax = -j[y][z] / step[u];
                    blocking = Some((y, z));
                }
            }
            let mut trial = j.clone();
            for (u, &(y, z)) in idx.iter().enumerate() {
                trial[y][z] = (j[y][z] + tmax * step[u]).max(0.0);
            }
            if let Some((y, z)) = blocking {
                trial[y][z] = 0.0;
            }
            let s: f64 = trial.iter().flatten().sum();
            trial.iter_mut().flatten().for_each(|v| *v /= s);
            if obj.phi(&trial) >= f0 - 1e-15 * f0.abs().max(1.0) {
                *j = trial;
                accepted = true;
                damping = (damping * 0.1).max(1e-12);
                break;
            }
            damping *= 100.0;
        }
        if !accepted {
            let face_gap = idx
                .iter()
                .map(|&(y, z)| (g[y][z] - 1.0).abs())
                .fold(0.0, f64::max);
            if face_gap > 1e-9 {
                return fw_gap(&g) < 1e-12;
            }
            stuck = true;
            damping = 1e-12;
            continue;
        }
        for y in 0..ny {
            for z in 0..nz {
                if active[y][z] && j[y][z] <= 1e-15 {
                    j[y][z] = 0.0;
                    active[y][z] = false;
                }
            }
        }
    }
    false
}

fn inner_solve(pr: &Problem, m: [f64; 3], init: &Reference, tol: f64) -> Inner {
    let mut rf = init.clone();
    let mut prev = f64::INFINITY;
    let mut sweeps = 0;
    let mut step = channel_step(pr, m, &rf);
    let obj = JointObjective::new(pr, m);
    while sweeps < INNER_CAP {
        let burst = if sweeps == 0 { 100 } else { 500 };
        for _ in 0..burst {
            let next = update_reference(pr, &step, &rf);
            let nstep = channel_step(pr, m, &next);
            sweeps += 1;
            debug_assert!(
                nstep.value <= step.value + 1e-12 * step.value.abs().max(1.0),
                "alternating objective increased"
            );
            rf = next;
            step = nstep;
            let calm = (prev - step.value).abs() <= tol * step.value.abs().max(1.0);
            prev = step.value;
            if calm {
                break;
            }
        }
        let mut j = joint_of(&rf);
        if newton_joint(&obj, &mut j) {
            rf = reference_of(&j, &rf);
            step = channel_step(pr, m, &rf);
            break;
        }
        let (g, _) = obj.grad(&joint_of(&rf));
        if fw_gap(&g) < 1e-13 {
            break;
        }
    }
    let (residuals, _) = primal_stats(pr, &step.wy, &step.wz);
    Inner {
        value: step.value,
        reference: rf,
        wy: step.wy,
        wz: step.wz,
        residuals,
        sweeps,
    }
}

/// Dual function `g(λ, ν₁, ν₂)`, evaluated by alternating minimization from
/// uniform reference laws.
pub fn dual_value(inst: &SourceInstance, r1: f64, lambda: f64, nu1: f64, nu2: f64) -> Result<f64> {
    if lambda < 0.0 || nu1 < 0.0 || nu2 < 0.0 {
        return Err(Error::Domain("multipliers must be nonnegative".into()));
    }
    let xs = inst.px().support();
    let pr = Problem::new(inst, r1, &xs);
    let init = Reference::uniform(inst.d1().cols(), inst.d2().cols());
    Ok(inner_solve(&pr, [lambda, nu1, nu2], &init, 1e-15).value)
}

/// Generalized tilted density `Λ(x | Q_YZ, λ, ν₁, ν₂)` for a reference joint
/// law and a first-stage channel `P_{Y|X}`.
#[derive(Debug, Clone, Serialize)]
pub struct GeneralizedTilted {
    pub lambda: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub reference_law: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

pub fn generalized_tilted(
    inst: &SourceInstance,
    r1: f64,
    reference_law: &[Vec<f64>],
    channel_y: &[Vec<f64>],
    lambda: f64,
    nu1: f64,
    nu2: f64,
) -> Result<GeneralizedTilted> {
    let nx = inst.px().alphabet_size();
    let ny = inst.d1().cols();
    let nz = inst.d2().cols();
    if reference_law.len() != ny
        || reference_law.iter().any(|r| r.len() != nz)
        || channel_y.len() != nx
    {
        return Err(Error::Invalid(
            "reference law or channel has the wrong shape".into(),
        ));
    }
    let qy: Vec<f64> = reference_law.iter().map(|r| r.iter().sum()).collect();
    let values = (0..nx)
        .map(|x| {
            let mut acc = 0.0;
            for y in 0..ny {
                for z in 0..nz {
                    let q = reference_law[y][z];
                    if q <= 0.0 {
                        continue;
                    }
                    let info = if lambda == 0.0 {
                        0.0
                    } else {
                        (channel_y[x][y] / qy[y]).ln() - r1
                    };
                    let e = -lambda * info
                        - nu1 * (inst.d1().get(x, y) - inst.dist1())
                        - nu2 * (inst.d2().get(x, z) - inst.dist2());
                    acc += q * e.exp();
                }
            }
            -acc.ln()
        })
        .collect();
    Ok(GeneralizedTilted {
        lambda,
        nu1,
        nu2,
        reference_law: reference_law.to_vec(),
        values,
    })
}

/// Objective `F(P_{YZ|X}, Q_YZ)` of the alternating scheme.
pub fn alternating_objective(
    inst: &SourceInstance,
    r1: f64,
    channel: &[Vec<Vec<f64>>],
    reference_law: &[Vec<f64>],
    lambda: f64,
    nu1: f64,
    nu2: f64,
) -> f64 {
    let p = inst.px().probs();
    let ny = reference_law.len();
    let nz = reference_law[0].len();
    let qy: Vec<f64> = reference_law.iter().map(|r| r.iter().sum()).collect();
    let mut f = 0.0;
    for (x, wx) in channel.iter().enumerate() {
        if p[x] == 0.0 {
            continue;
        }
        for y in 0..ny {
            let wy: f64 = wx[y].iter().sum();
            for z in 0..nz {
                let w = wx[y][z];
                if w <= 0.0 {
                    continue;
                }
                let t = (w / reference_law[y][z]).ln()
                    + lambda * ((wy / qy[y]).ln() - r1)
                    + nu1 * (inst.d1().get(x, y) - inst.dist1())
                    + nu2 * (inst.d2().get(x, z) - inst.dist2());
                f += p[x] * w * t;
            }
        }
    }
    f
}

/// Tilted density from its defining expectation, with induced marginals
/// computed from `channel` and `px`.
fn tilted_from_channel(
    inst: &SourceInstance,
    r1: f64,
    channel: &[Vec<Vec<f64>>],
    m: [f64; 3],
) -> Vec<f64> {
    let law = joint_output(inst.px().probs(), channel);
    let wy: Vec<Vec<f64>> = channel
        .iter()
        .map(|wx| wx.iter().map(|r| r.iter().sum()).collect())
        .collect();
    generalized_tilted(inst, r1, &law, &wy, m[0], m[1], m[2])
        .expect("shapes are consistent")
        .values
}

struct Context {
    rd_y: RdSolution,
    rd_z: RdSolution,
}

fn rd_pair(inst: &SourceInstance) -> Result<Context> {
    Ok(Context {
        rd_y: rd_solve(inst.px(), inst.d1(), inst.dist1())?,
        rd_z: rd_solve(inst.px(), inst.d2(), inst.dist2())?,
    })
}

fn infeasible(r1: f64) -> SrSolution {
    SrSolution {
        value: SrValue::Infeasible,
        r1,
        test_channel: Vec::new(),
        lambda: 0.0,
        nu1: 0.0,
        nu2: 0.0,
        tilted_yz: Vec::new(),
        active: ActiveConstraints::default(),
        diagnostics: SrDiagnostics {
            method: SrMethod::Infeasible,
            primal_value: f64::INFINITY,
            dual_gap: 0.0,
            residuals: [f64::NAN; 3],
            outer_iterations: 0,
            inner_sweeps: 0,
        },
    }
}

fn refinable(inst: &SourceInstance, r1: f64, ctx: &Context, kernel: &[Vec<f64>]) -> SrSolution {
    let nx = inst.px().alphabet_size();
    let ny = inst.d1().cols();
    let nz = inst.d2().cols();
    let channel: Vec<Vec<Vec<f64>>> = (0..nx)
        .map(|x| {
            (0..ny)
                .map(|y| {
                    (0..nz)
                        .map(|z| ctx.rd_z.test_channel[x][z] * kernel[z][y])
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut sol = finish(
        inst,
        r1,
        channel,
        [0.0, 0.0, ctx.rd_z.slope],
        SrMethod::Refinable,
        0,
        0,
    );
    // On this face the tilted density is the decoder-2 one.
    sol.tilted_yz = ctx.rd_z.tilted.clone();
    sol.value = SrValue::Finite(ctx.rd_z.rate);
    sol.diagnostics.dual_gap = (sol.diagnostics.primal_value - ctx.rd_z.rate).abs();
    sol
}

/// Looks for a first-stage reproduction that is a garbling of the optimal
/// second-stage one and meets both first-stage constraints. The kernel
/// minimizes `I(Z;Y)` under the induced distortion `E[d₁(X,y) | Z=z]`, which
/// upper-bounds `I(X;Y)`.
fn garbling_witness(
    inst: &SourceInstance,
    r1: f64,
    ctx: &Context,
) -> Result<Option<Vec<Vec<f64>>>> {
    let p = inst.px().probs();
    let wz = &ctx.rd_z.test_channel;
    let nz = inst.d2().cols();
    let ny = inst.d1().cols();
    let pz = &ctx.rd_z.output_law;
    let zs: Vec<usize> = (0..nz).filter(|&z| pz[z] > 0.0).collect();
    if zs.len() < 2 {
        return Ok(None);
    }
    let mut rows = Vec::with_capacity(zs.len());
    let mut shift = 0.0;
    for &z in &zs {
        let row: Vec<f64> = (0..ny)
            .map(|y| {
                (0..p.len())
                    .map(|x| p[x] * wz[x][z] * inst.d1().get(x, y))
                    .sum::<f64>()
                    / pz[z]
            })
            .collect();
        let mn = row.iter().cloned().fold(f64::INFINITY, f64::min);
        shift += pz[z] * mn;
        rows.push(row.iter().map(|v| (v - mn).max(0.0)).collect::<Vec<f64>>());
    }
    let level = inst.dist1() - shift;
    if level <= 1e-12 {
        return Ok(None);
    }
    let pzr = Pmf::from_weights(&zs.iter().map(|&z| pz[z]).collect::<Vec<_>>())?;
    let dm = crate::model::DistortionMatrix::new(rows)?;
    let sol = rd_solve(&pzr, &dm, level)?;
    if sol.achieved_distortion > level + 1e-10 {
        return Ok(None);
    }
    let mut kernel = vec![vec![1.0 / ny as f64; ny]; nz];
    for (i, &z) in zs.iter().enumerate() {
        kernel[z] = sol.test_channel[i].clone();
    }
    // Exact I(X;Y) of the composed channel.
    let wy: Vec<Vec<f64>> = (0..p.len())
        .map(|x| {
            (0..ny)
                .map(|y| (0..nz).map(|z| wz[x][z] * kernel[z][y]).sum())
                .collect()
        })
        .collect();
    let py: Vec<f64> = (0..ny)
        .map(|y| (0..p.len()).map(|x| p[x] * wy[x][y]).sum())
        .collect();
    let mut info = 0.0;
    for x in 0..p.len() {
        for y in 0..ny {
            if p[x] > 0.0 && wy[x][y] > 0.0 {
                info += p[x] * wy[x][y] * (wy[x][y] / py[y]).ln();
            }
        }
    }
    Ok((info <= r1 + 1e-12).then_some(kernel))
}

/// At `R₁ = R_Y(D₁)` the first stage must use the optimal decoder-1 channel
/// and the multipliers `λ`, `ν₁` are unbounded. The second stage is then a
/// conditional rate-distortion problem solved at a common slope.
fn boundary_path(inst: &SourceInstance, r1: f64, ctx: &Context) -> Result<SrSolution> {
    let p = inst.px().probs();
    let nx = p.len();
    let ny = inst.d1().cols();
    let nz = inst.d2().cols();
    let wy = &ctx.rd_y.test_channel;
    let py = &ctx.rd_y.output_law;
    let ys: Vec<usize> = (0..ny).filter(|&y| py[y] > 0.0).collect();
    let cond: Vec<Pmf> = ys
        .iter()
        .map(|&y| Pmf::from_weights(&(0..nx).map(|x| p[x] * wy[x][y]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let reduced: Vec<crate::rd::Reduced> = cond
        .iter()
        .map(|c| crate::rd::Reduced::new(c, inst.d2()))
        .collect();
    let solve_at = |s: f64| -> Result<(f64, Vec<crate::rd::FixedSlope>)> {
        let mut d = 0.0;
        let mut out = Vec::with_capacity(ys.len());
        for (k, &y) in ys.iter().enumerate() {
            let f = crate::rd::solve_fixed(&reduced[k], s, None)?;
            d += py[y] * f.distortion;
            out.push(f);
        }
        Ok((d, out))
    };
    let target = inst.dist2();
    let (d0, _) = solve_at(0.0)?;
    let (s, sols) = if d0 <= target {
        (0.0, solve_at(0.0)?.1)
    } else {
        let mut hi = 1.0;
        while solve_at(hi)?.0 >= target {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::NonConvergence {
                    context: "conditional slope bracketing",
                    iterations: 20,
                    gap: f64::NAN,
                });
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if solve_at(mid)?.0 >= target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        (hi, solve_at(hi)?.1)
    };
    // Q(z|y) over the full second alphabet.
    let mut qzy = vec![vec![0.0; nz]; ny];
    for (k, &y) in ys.iter().enumerate() {
        for (j, &z) in reduced[k].ys.iter().enumerate() {
            qzy[y][z] = sols[k].q[j];
        }
    }
    let mut channel = vec![vec![vec![0.0; nz]; ny]; nx];
    let mut tilted = ctx.rd_y.tilted.clone();
    for x in 0..nx {
        for &y in &ys {
            let e: Vec<f64> = (0..nz)
                .map(|z| qzy[y][z] * (-s * (inst.d2().get(x, z) - target)).exp())
                .collect();
            let zsum: f64 = e.iter().sum();
            for z in 0..nz {
                channel[x][y][z] = wy[x][y] * e[z] / zsum;
            }
            tilted[x] += wy[x][y] * -zsum.ln();
        }
    }
    let mut sol = finish(inst, r1, channel, [0.0, 0.0, s], SrMethod::Boundary, 0, 0);
    sol.lambda = f64::INFINITY;
    sol.nu1 = f64::INFINITY;
    sol.tilted_yz = tilted;
    let v = inst.px().expect(&sol.tilted_yz);
    sol.value = SrValue::Finite(v);
    sol.diagnostics.dual_gap = (sol.diagnostics.primal_value - v).abs();
    sol.active = ActiveConstraints {
        rate: true,
        d1: true,
        d2: s > 0.0,
    };
    Ok(sol)
}

/// Row-stochastic `K(y|z)` with `Σ_z W_Z(z|x) K(y|z) = W_Y(y|x)` on the
/// source support, by accelerated projected gradient. Returns the kernel and
/// the largest absolute residual.
fn degrading_kernel(
    p: &[f64],
    xs: &[usize],
    wz: &[Vec<f64>],
    wy: &[Vec<f64>],
) -> (Vec<Vec<f64>>, f64) {
    let nz = wz[0].len();
    let ny = wy[0].len();
    let rows: Vec<(f64, &Vec<f64>, &Vec<f64>)> =
        xs.iter().map(|&x| (p[x], &wz[x], &wy[x])).collect();
    let mut lip = 0.0;
    for (w, a, _) in &rows {
        lip += w * a.iter().map(|v| v * v).sum::<f64>();
    }
    let step = 1.0 / (2.0 * lip.max(1e-300));
    let residual = |k: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|(_, a, b)| {
                (0..ny)
                    .map(|y| (0..nz).map(|z| a[z] * k[z][y]).sum::<f64>() - b[y])
                    .collect()
            })
            .collect()
    };
    let max_res = |r: &[Vec<f64>]| r.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut k = vec![vec![1.0 / ny as f64; ny]; nz];
    let mut mom = k.clone();
    let mut t = 1.0f64;
    let mut best = (k.clone(), f64::INFINITY);
    for it in 0..20_000 {
        let r = residual(&mom);
        let mut next = mom.clone();
        for z in 0..nz {
            for y in 0..ny {
                let g: f64 = rows
                    .iter()
                    .zip(&r)
                    .map(|((w, a, _), ri)| 2.0 * w * a[z] * ri[y])
                    .sum();
                next[z][y] -= step * g;
            }
            project_simplex(&mut next[z]);
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        for z in 0..nz {
            for y in 0..ny {
                mom[z][y] = next[z][y] + (t - 1.0) / tn * (next[z][y] - k[z][y]);
            }
        }
        t = tn;
        k = next;
        if it % 50 == 0 {
            let m = max_res(&residual(&k));
            if m < best.1 {
                best = (k.clone(), m);
            }
            if m < MARKOV_TOL * 1e-2 {
                break;
            }
        }
    }
    let m = max_res(&residual(&k));
    if m < best.1 {
        best = (k, m);
    }
    best
}

fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

/// Outcome of the refinability test.
#[derive(Debug, Clone, Serialize)]
pub struct Refinability {
    pub refinable: bool,
    /// Minimal sum rate at `R₁ = R_Y(D₁)` and the single-decoder `R_Z(D₂)`.
    pub sum_rate: f64,
    pub rate_z: f64,
    pub witness: Vec<Vec<Vec<f64>>>,
}

/// Decides whether the instance is successively refinable at `(D₁, D₂)`.
pub fn is_successively_refinable(inst: &SourceInstance) -> Result<Refinability> {
    let ctx = rd_pair(inst)?;
    let sol = solve_with(inst, ctx.rd_y.rate, &ctx)?;
    let sum_rate = sol.value.as_f64();
    Ok(Refinability {
        refinable: sum_rate <= ctx.rd_z.rate + 1e-6,
        sum_rate,
        rate_z: ctx.rd_z.rate,
        witness: sol.test_channel,
    })
}

/// Solves for `𝖱(R₁, D₁, D₂ | P_X)`.
pub fn sr_solve(inst: &SourceInstance, r1: f64) -> Result<SrSolution> {
    if !r1.is_finite() {
        return Err(Error::Invalid("R1 must be finite".into()));
    }
    let ctx = rd_pair(inst)?;
    solve_with(inst, r1, &ctx)
}

/// Variant that reuses precomputed single-decoder solutions.
pub fn sr_solve_with(
    inst: &SourceInstance,
    r1: f64,
    rd_y: &RdSolution,
    rd_z: &RdSolution,
) -> Result<SrSolution> {
    let ctx = Context {
        rd_y: rd_y.clone(),
        rd_z: rd_z.clone(),
    };
    solve_with(inst, r1, &ctx)
}

fn solve_with(inst: &SourceInstance, r1: f64, ctx: &Context) -> Result<SrSolution> {
    if r1 < ctx.rd_y.rate - INFEASIBLE_TOL {
        return Ok(infeasible(r1));
    }
    let nx = inst.px().alphabet_size();
    let ny = inst.d1().cols();
    let nz = inst.d2().cols();
    let p = inst.px().probs();
    let xs = inst.px().support();

    if ctx.rd_z.rate == 0.0 && ctx.rd_z.slope == 0.0 {
        let z0 = ctx
            .rd_z
            .output_law
            .iter()
            .position(|&v| v == 1.0)
            .unwrap_or(0);
        let channel: Vec<Vec<Vec<f64>>> = (0..nx)
            .map(|x| {
                (0..ny)
                    .map(|y| {
                        (0..nz)
                            .map(|z| {
                                if z == z0 {
                                    ctx.rd_y.test_channel[x][y]
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let m = [0.0, ctx.rd_y.slope, 0.0];
        return Ok(finish(inst, r1, channel, m, SrMethod::ConstantSecond, 0, 0));
    }

    let (kernel, res) = degrading_kernel(p, &xs, &ctx.rd_z.test_channel, &ctx.rd_y.test_channel);
    if res < MARKOV_TOL {
        return Ok(refinable(inst, r1, ctx, &kernel));
    }
    if let Some(kernel) = garbling_witness(inst, r1, ctx)? {
        return Ok(refinable(inst, r1, ctx, &kernel));
    }
    if (r1 - ctx.rd_y.rate).abs() <= INFEASIBLE_TOL {
        return boundary_path(inst, r1, ctx);
    }
    dual_path(inst, r1, ctx, &xs, &Reference::uniform(ny, nz))
}

/// Re-solves from reference laws drawn at random from `seed`.
///
/// Only the dual iteration depends on a starting point; instances settled by
/// a closed-form path return the same solution as [`sr_solve`].
pub fn sr_solve_restart(inst: &SourceInstance, r1: f64, seed: u64) -> Result<SrSolution> {
    use rand::{Rng, SeedableRng};
    let sol = sr_solve(inst, r1)?;
    if sol.diagnostics.method != SrMethod::Dual {
        return Ok(sol);
    }
    let ctx = rd_pair(inst)?;
    let ny = inst.d1().cols();
    let nz = inst.d2().cols();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |k: usize| -> Vec<f64> {
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let t: f64 = w.iter().sum();
        w.into_iter().map(|v| v / t).collect()
    };
    let qy = draw(ny);
    let qzy = (0..ny).map(|_| draw(nz)).collect();
    dual_path(inst, r1, &ctx, &inst.px().support(), &Reference { qy, qzy })
}

fn finish(
    inst: &SourceInstance,
    r1: f64,
    channel: Vec<Vec<Vec<f64>>>,
    m: [f64; 3],
    method: SrMethod,
    outer: usize,
    sweeps: usize,
) -> SrSolution {
    let xs = inst.px().support();
    let pr = Problem::new(inst, r1, &xs);
    let wy: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| channel[x].iter().map(|r| r.iter().sum()).collect())
        .collect();
    let wz: Vec<Vec<Vec<f64>>> = xs
        .iter()
        .zip(&wy)
        .map(|(&x, wyx)| {
            channel[x]
                .iter()
                .zip(wyx)
                .map(|(r, &s)| {
                    if s > 0.0 {
                        r.iter().map(|v| v / s).collect()
                    } else {
                        vec![1.0 / r.len() as f64; r.len()]
                    }
                })
                .collect()
        })
        .collect();
    let (residuals, primal) = primal_stats(&pr, &wy, &wz);
    let tilted = tilted_from_channel(inst, r1, &channel, m);
    let value = inst.px().expect(&tilted);
    let tol = 1e-7;
    SrSolution {
        value: SrValue::Finite(value),
        r1,
        test_channel: channel,
        lambda: m[0],
        nu1: m[1],
        nu2: m[2],
        tilted_yz: tilted,
        active: ActiveConstraints {
            rate: m[0] > 0.0 || residuals[0].abs() < tol,
            d1: m[1] > 0.0 || residuals[1].abs() < tol,
            d2: m[2] > 0.0 || residuals[2].abs() < tol,
        },
        diagnostics: SrDiagnostics {
            method,
            primal_value: primal,
            dual_gap: (primal - value).abs(),
            residuals,
            outer_iterations: outer,
            inner_sweeps: sweeps,
        },
    }
}

fn projected_gradient(m: [f64; 3], r: [f64; 3]) -> f64 {
    (0..3)
        .map(|i| {
            if m[i] > 0.0 {
                r[i].abs()
            } else {
                r[i].max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn dual_path(
    inst: &SourceInstance,
    r1: f64,
    ctx: &Context,
    xs: &[usize],
    init: &Reference,
) -> Result<SrSolution> {
    let pr = Problem::new(inst, r1, xs);
    let ny = inst.d1().cols();
    let nz = inst.d2().cols();
    let nx = inst.px().alphabet_size();
    let tol = 1e-15;
    let mut m = [0.5, 0.5 * ctx.rd_y.slope, ctx.rd_z.slope];
    let mut cur = inner_solve(&pr, m, init, tol);
    let mut sweeps = cur.sweeps;
    let mut outer = 0;
    let mut stalled = 0;
    while outer < 200 {
        outer += 1;
        let r = cur.residuals;
        if projected_gradient(m, r) < RESIDUAL_TOL {
            break;
        }
        let free: Vec<usize> = (0..3).filter(|&i| m[i] > 0.0 || r[i] > 0.0).collect();
        let mut jac = vec![vec![0.0; free.len()]; free.len()];
        for (c, &j) in free.iter().enumerate() {
            let h = (1e-6 * m[j]).max(1e-8);
            let mut mp = m;
            mp[j] += h;
            let e = inner_solve(&pr, mp, &cur.reference, tol);
            sweeps += e.sweeps;
            for (rr, &i) in free.iter().enumerate() {
                jac[rr][c] = (e.residuals[i] - r[i]) / h;
            }
        }
        let k = free.len();
        for a in 0..k {
            for b in 0..a {
                let s = 0.5 * (jac[a][b] + jac[b][a]);
                jac[a][b] = s;
                jac[b][a] = s;
            }
        }
        // The dual Hessian is negative semidefinite; keep the model concave.
        let diag_max = (0..k).map(|a| jac[a][a].abs()).fold(1e-12, f64::max);
        let mut shift = 0.0;
        let dir = loop {
            let mut hm = jac.clone();
            for a in 0..k {
                hm[a][a] -= shift;
            }
            let rhs: Vec<f64> = free.iter().map(|&i| -r[i]).collect();
            if let Some(d) = solve_linear(&hm, &rhs) {
                let ascent: f64 = free.iter().zip(&d).map(|(&i, v)| r[i] * v).sum();
                if ascent > 0.0 {
                    break d;
                }
            }
            shift = if shift == 0.0 {
                1e-8 * diag_max
            } else {
                shift * 10.0
            };
            if shift > 1e8 * diag_max {
                break free.iter().map(|&i| r[i] / diag_max).collect();
            }
        };
        // Trust region on the multipliers.
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = 2.0 * m.iter().cloned().fold(1.0, f64::max);
        let mut t = if norm > radius { radius / norm } else { 1.0 };
        let mut accepted = false;
        for attempt in 0..50 {
            let mut mn = m;
            for (c, &i) in free.iter().enumerate() {
                let d = if attempt < 30 { dir[c] } else { r[i] };
                mn[i] = (m[i] + t * d).max(0.0);
            }
            if attempt == 30 {
                t = 1.0 / diag_max;
            }
            let cand = inner_solve(&pr, mn, &cur.reference, tol);
            sweeps += cand.sweeps;
            if cand.value.is_finite()
                && cand.residuals.iter().all(|v| v.is_finite())
                && cand.value >= cur.value - 1e-15 * cur.value.abs().max(1.0)
            {
                m = mn;
                cur = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    let pg = projected_gradient(m, cur.residuals);
    let degenerate = m[0] <= 1e-8 && m[1] <= 1e-8 && (cur.value - ctx.rd_z.rate).abs() <= 1e-9;
    if pg > 1e-7 && !degenerate {
        return Err(Error::NonConvergence {
            context: "sum-rate dual ascent",
            iterations: outer,
            gap: pg,
        });
    }
    let mut channel = vec![vec![vec![0.0; nz]; ny]; nx];
    for (i, &x) in xs.iter().enumerate() {
        for y in 0..ny {
            for z in 0..nz {
                channel[x][y][z] = cur.wy[i][y] * cur.wz[i][y][z];
            }
        }
    }
    // Off-support symbols get the tilt-update channel of the final reference laws.
    if xs.len() < nx {
        let full: Vec<usize> = (0..nx).collect();
        let prf = Problem::new(inst, r1, &full);
        let st = channel_step(&prf, m, &cur.reference);
        for x in 0..nx {
            if inst.px().get(x) == 0.0 {
                for y in 0..ny {
                    for z in 0..nz {
                        channel[x][y][z] = st.wy[x][y] * st.wz[x][y][z];
                    }
                }
            }
        }
    }
    if pg > 1e-7 {
        // The dual optimum lies on the face λ = ν₁ = 0 where the primal
        // minimizer is not unique: the value is exact, the channel is the
        // last iterate and its residuals are reported as they are.
        let mut sol = finish(
            inst,
            r1,
            channel,
            [0.0, 0.0, ctx.rd_z.slope],
            SrMethod::DegenerateDual,
            outer,
            sweeps,
        );
        sol.tilted_yz = ctx.rd_z.tilted.clone();
        sol.value = SrValue::Finite(ctx.rd_z.rate);
        return Ok(sol);
    }
    Ok(finish(inst, r1, channel, m, SrMethod::Dual, outer, sweeps))
}

/// Tilted density `ȷ_YZ(x, R₁, D₁, D₂ | P_X)`.
pub fn tilted_yz(inst: &SourceInstance, r1: f64, x: usize) -> Result<f64> {
    let nx = inst.px().alphabet_size();
    if x >= nx {
        return Err(Error::IndexOutOfRange { index: x, size: nx });
    }
    let sol = sr_solve(inst, r1)?;
    if !sol.is_feasible() {
        return Err(Error::Infeasible(
            "R1 below the first-decoder rate-distortion function".into(),
        ));
    }
    Ok(sol.tilted_yz[x])
}

fn sr_finite(inst: &SourceInstance, r1: f64) -> Result<f64> {
    sr_solve(inst, r1)?.value.finite().ok_or_else(|| {
        Error::Infeasible("finite-difference stencil crosses the infeasible boundary".into())
    })
}

/// Multipliers `(λ*, ν₁*, ν₂*)` as negated central differences of `𝖱` in
/// `R₁`, `D₁` and `D₂`.
pub fn multipliers_by_perturbation(inst: &SourceInstance, r1: f64) -> Result<(f64, f64, f64)> {
    let h = 1e-4;
    let dr = (sr_finite(inst, r1 + h)? - sr_finite(inst, r1 - h)?) / (2.0 * h);
    let d1p = inst.with_levels(inst.dist1() + h, inst.dist2())?;
    let d1m = inst.with_levels(inst.dist1() - h, inst.dist2())?;
    let dd1 = (sr_finite(&d1p, r1)? - sr_finite(&d1m, r1)?) / (2.0 * h);
    let d2p = inst.with_levels(inst.dist1(), inst.dist2() + h)?;
    let d2m = inst.with_levels(inst.dist1(), inst.dist2() - h)?;
    let dd2 = (sr_finite(&d2p, r1)? - sr_finite(&d2m, r1)?) / (2.0 * h);
    Ok((-dr, -dd1, -dd2))
}

/// Directional derivative of `Q_X ↦ 𝖱(R₁, D₁, D₂ | Q_X)` along `e_a − e_b`.
#[derive(Debug, Clone, Serialize)]
pub struct SourceGradient {
    pub finite_difference: f64,
    /// `ȷ_YZ(a) − ȷ_YZ(b)`.
    pub predicted: f64,
    /// Whether the optimal output support was unchanged at the stencil points.
    pub support_stable: bool,
}

pub fn gradient_wrt_source(
    inst: &SourceInstance,
    r1: f64,
    a: usize,
    b: usize,
) -> Result<SourceGradient> {
    let nx = inst.px().alphabet_size();
    for i in [a, b] {
        if i >= nx {
            return Err(Error::IndexOutOfRange { index: i, size: nx });
        }
    }
    let base = sr_solve(inst, r1)?;
    let SrValue::Finite(_) = base.value else {
        return Err(Error::Infeasible(
            "R1 below the first-decoder rate-distortion function".into(),
        ));
    };
    let predicted = base.tilted_yz[a] - base.tilted_yz[b];
    if a == b {
        return Ok(SourceGradient {
            finite_difference: 0.0,
            predicted,
            support_stable: true,
        });
    }
    let h = 1e-4;
    let p = inst.px().probs();
    if p[a] + h > 1.0 || p[b] - h < 0.0 || p[a] - h < 0.0 || p[b] + h > 1.0 {
        return Err(Error::Domain("perturbation leaves the simplex".into()));
    }
    let shifted = |sign: f64| -> Result<SrSolution> {
        let mut q = p.to_vec();
        q[a] += sign * h;
        q[b] -= sign * h;
        let inst2 = inst.with_px(Pmf::from_weights(&q)?)?;
        sr_solve(&inst2, r1)
    };
    let plus = shifted(1.0)?;
    let minus = shifted(-1.0)?;
    let (Some(vp), Some(vm)) = (plus.value.finite(), minus.value.finite()) else {
        return Err(Error::Infeasible(
            "finite-difference stencil crosses the infeasible boundary".into(),
        ));
    };
    let support = |s: &SrSolution, px: &[f64]| -> Vec<bool> {
        joint_output(px, &s.test_channel)
            .iter()
            .flatten()
            .map(|&v| v > 1e-9)
            .collect()
    };
    let s0 = support(&base, p);
    let mut qp = p.to_vec();
    qp[a] += h;
    qp[b] -= h;
    let mut qm = p.to_vec();
    qm[a] -= h;
    qm[b] += h;
    let support_stable = support(&plus, &qp) == s0 && support(&minus, &qm) == s0;
    Ok(SourceGradient {
        finite_difference: (vp - vm) / (2.0 * h),
        predicted,
        support_stable,
    })
}

#[cfg(test)]
mod joint_objective_tests {
    use super::*;
    use crate::model::DistortionMatrix;

    fn problem() -> Problem {
        let inst = SourceInstance::new(
            Pmf::new(vec![0.3, 0.4, 0.3]).unwrap(),
            DistortionMatrix::hamming(3),
            DistortionMatrix::new(vec![
                vec![0.0, 1.0, 0.5],
                vec![0.3, 0.0, 1.0],
                vec![1.0, 0.6, 0.0],
            ])
            .unwrap(),
            0.3,
            0.1,
        )
        .unwrap();
        Problem::new(&inst, 0.3, &[0, 1, 2])
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let pr = problem();
        for m in [[0.0, 0.3, 2.0], [0.7, 1.1, 3.0]] {
            let obj = JointObjective::new(&pr, m);
            let j: Vec<Vec<f64>> = vec![
                vec![0.1, 0.05, 0.15],
                vec![0.2, 0.1, 0.05],
                vec![0.05, 0.2, 0.1],
            ];
            let (g, t) = obj.grad(&j);
            let idx: Vec<(usize, usize)> =
                (0..3).flat_map(|y| (0..3).map(move |z| (y, z))).collect();
            let h = obj.hessian(&j, &idx, &t);
            let eps = 1e-6;
            for (u, &(y, z)) in idx.iter().enumerate() {
                let mut jp = j.clone();
                jp[y][z] += eps;
                let mut jm = j.clone();
                jm[y][z] -= eps;
                let fd = (obj.phi(&jp) - obj.phi(&jm)) / (2.0 * eps);
                assert!(
                    (fd - g[y][z]).abs() < 1e-6,
                    "grad {m:?} {y}{z}: {fd} vs {}",
                    g[y][z]
                );
                let (gp, _) = obj.grad(&jp);
                let (gm, _) = obj.grad(&jm);
                for (v, &(y2, z2)) in idx.iter().enumerate() {
                    let fd2 = (gp[y2][z2] - gm[y2][z2]) / (2.0 * eps);
                    assert!(
                        (fd2 - h[v][u]).abs() < 1e-4,
                        "hess {m:?} ({y}{z},{y2}{z2}): {fd2} vs {}",
                        h[v][u]
                    );
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DistortionMatrix;
    use crate::rd::binary_entropy;

    fn binary() -> SourceInstance {
        SourceInstance::hamming(&[0.2, 0.8], 0.15, 0.05).unwrap()
    }

    fn ternary() -> SourceInstance {
        SourceInstance::new(
            Pmf::new(vec![0.3, 0.4, 0.3]).unwrap(),
            DistortionMatrix::hamming(3),
            DistortionMatrix::new(vec![
                vec![0.0, 1.0, 0.5],
                vec![0.3, 0.0, 1.0],
                vec![1.0, 0.6, 0.0],
            ])
            .unwrap(),
            0.3,
            0.1,
        )
        .unwrap()
    }

    fn rate_y(inst: &SourceInstance) -> f64 {
        rd_solve(inst.px(), inst.d1(), inst.dist1()).unwrap().rate
    }

    /// Both sides of the per-letter expansion of the tilted density, with the
    /// distortion terms entering with a positive sign.
    fn expansion_residual(inst: &SourceInstance, r1: f64, sol: &SrSolution) -> f64 {
        let p = inst.px().probs();
        let joint = sol.output_law(inst.px());
        let ny = joint.len();
        let py: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
        let mut worst: f64 = 0.0;
        for x in inst.px().support() {
            let wy: Vec<f64> = sol.test_channel[x].iter().map(|r| r.iter().sum()).collect();
            for y in 0..ny {
                for (z, &q) in joint[y].iter().enumerate() {
                    let w = sol.test_channel[x][y][z];
                    if q <= 1e-9 || w <= 0.0 || p[x] == 0.0 {
                        continue;
                    }
                    let rhs = (w / q).ln()
                        + sol.lambda * ((wy[y] / py[y]).ln() - r1)
                        + sol.nu1 * (inst.d1().get(x, y) - inst.dist1())
                        + sol.nu2 * (inst.d2().get(x, z) - inst.dist2());
                    worst = worst.max((rhs - sol.tilted_yz[x]).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn binary_hamming_is_refinable() {
        let inst = binary();
        let sol = sr_solve(&inst, rate_y(&inst) + 0.01).unwrap();
        let v = sol.value.finite().unwrap();
        assert!(
            (v - (binary_entropy(0.2) - binary_entropy(0.05))).abs() < 1e-7,
            "{v}"
        );
        assert!((v - 0.301_887_180).abs() < 1e-8);
        assert!(sol.lambda < 1e-9 && sol.nu1 < 1e-9);
        assert!((sol.nu2 - 19f64.ln()).abs() < 1e-6);
        let rz = rd_solve(inst.px(), inst.d2(), 0.05).unwrap();
        for x in 0..2 {
            assert!((sol.tilted_yz[x] - rz.tilted[x]).abs() < 1e-6);
        }
        let r = is_successively_refinable(&inst).unwrap();
        assert!(r.refinable);
    }

    #[test]
    fn below_first_stage_limit_is_infeasible() {
        for inst in [binary(), ternary()] {
            let sol = sr_solve(&inst, rate_y(&inst) - 0.05).unwrap();
            assert_eq!(sol.value, SrValue::Infeasible);
            assert!(!sol.is_feasible());
            let json = serde_json::to_value(&sol).unwrap();
            assert_eq!(json["value"], "infeasible");
        }
    }

    #[test]
    fn dual_solution_satisfies_tilt_identities() {
        let inst = ternary();
        let r1 = rate_y(&inst) + 0.02;
        let sol = sr_solve(&inst, r1).unwrap();
        assert_eq!(sol.diagnostics.method, SrMethod::Dual);
        assert!(sol.lambda > 1e-3);
        let v = sol.value.finite().unwrap();
        assert!((inst.px().expect(&sol.tilted_yz) - v).abs() < 1e-8);
        assert!(expansion_residual(&inst, r1, &sol) < 1e-6);
        let g = dual_value(&inst, r1, sol.lambda, sol.nu1, sol.nu2).unwrap();
        assert!((g - v).abs() < 1e-6, "{g} vs {v}");
        assert!(sol.diagnostics.dual_gap < 1e-7);
        assert!(sol.diagnostics.residuals[0].abs() < 1e-7);
        let rz = rd_solve(inst.px(), inst.d2(), inst.dist2()).unwrap().rate;
        assert!(v >= rz - 1e-8);
    }

    #[test]
    fn restarts_agree_on_tilted_density() {
        let inst = ternary();
        let r1 = rate_y(&inst) + 0.02;
        let base = sr_solve(&inst, r1).unwrap();
        for seed in 0..5 {
            let other = sr_solve_restart(&inst, r1, seed).unwrap();
            for x in 0..3 {
                assert!(
                    (other.tilted_yz[x] - base.tilted_yz[x]).abs() < 1e-6,
                    "seed {seed}"
                );
            }
        }
    }

    #[test]
    fn value_is_convex_and_nonincreasing_in_r1() {
        let inst = ternary();
        let ry = rate_y(&inst);
        let vals: Vec<f64> = (0..7)
            .map(|i| {
                sr_solve(&inst, ry + 0.01 * i as f64)
                    .unwrap()
                    .value
                    .as_f64()
            })
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        for w in vals.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-6, "{w:?}");
        }
    }

    #[test]
    fn multipliers_match_perturbation() {
        let inst = binary();
        let r1 = rate_y(&inst) + 0.01;
        let (l, n1, n2) = multipliers_by_perturbation(&inst, r1).unwrap();
        assert!(l.abs() < 1e-3 && n1.abs() < 1e-3);
        assert!((n2 - 2.944_439).abs() < 1e-3);

        let inst = ternary();
        let r1 = rate_y(&inst) + 0.02;
        let sol = sr_solve(&inst, r1).unwrap();
        let (l, n1, n2) = multipliers_by_perturbation(&inst, r1).unwrap();
        assert!((l - sol.lambda).abs() < 1e-3, "{l} vs {}", sol.lambda);
        assert!((n1 - sol.nu1).abs() < 1e-3, "{n1} vs {}", sol.nu1);
        assert!((n2 - sol.nu2).abs() < 1e-3, "{n2} vs {}", sol.nu2);
    }

    #[test]
    fn source_gradient_matches_tilted_difference() {
        let inst = binary();
        let r1 = rate_y(&inst) + 0.01;
        let g = gradient_wrt_source(&inst, r1, 0, 1).unwrap();
        assert!((g.finite_difference - g.predicted).abs() < 1e-3);
        let g = gradient_wrt_source(&inst, r1, 1, 1).unwrap();
        assert_eq!(g.finite_difference, 0.0);
        assert_eq!(g.predicted, 0.0);

        let q = SourceInstance::hamming(&[1.0 / 3.0, 0.25, 0.25, 1.0 / 6.0], 0.6, 0.3).unwrap();
        let r1 = rate_y(&q);
        let g = gradient_wrt_source(&q, r1 + 0.01, 0, 3).unwrap();
        assert!((g.finite_difference - g.predicted).abs() < 1e-3, "{g:?}");
    }

    #[test]
    fn quaternary_is_refinable() {
        let q = SourceInstance::hamming(&[1.0 / 3.0, 0.25, 0.25, 1.0 / 6.0], 0.6, 0.3).unwrap();
        let r = is_successively_refinable(&q).unwrap();
        assert!(r.refinable);
        assert!((r.sum_rate - r.rate_z).abs() < 1e-6);
    }

    #[test]
    fn generalized_tilted_at_optimum_reproduces_tilted_yz() {
        let inst = ternary();
        let r1 = rate_y(&inst) + 0.02;
        let sol = sr_solve(&inst, r1).unwrap();
        let q = sol.output_law(inst.px());
        let wy: Vec<Vec<f64>> = sol
            .test_channel
            .iter()
            .map(|a| a.iter().map(|r| r.iter().sum()).collect())
            .collect();
        let gt = generalized_tilted(&inst, r1, &q, &wy, sol.lambda, sol.nu1, sol.nu2).unwrap();
        for x in 0..3 {
            assert!((gt.values[x] - sol.tilted_yz[x]).abs() < 1e-9);
        }
    }

    #[test]
    fn alternating_objective_dominates_tilted_mean() {
        use rand::{Rng, SeedableRng};
        let inst = ternary();
        let r1 = 0.4;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut unit = |k: usize| -> Vec<f64> {
                let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
                let t: f64 = w.iter().sum();
                w.into_iter().map(|v| v / t).collect()
            };
            let channel: Vec<Vec<Vec<f64>>> = (0..3)
                .map(|_| {
                    let f = unit(9);
                    (0..3).map(|y| f[3 * y..3 * y + 3].to_vec()).collect()
                })
                .collect();
            let flat = unit(9);
            let q: Vec<Vec<f64>> = (0..3).map(|y| flat[3 * y..3 * y + 3].to_vec()).collect();
            let m = unit(3);
            let (l, n1, n2) = (2.0 * m[0], 3.0 * m[1], 4.0 * m[2]);
            let wy: Vec<Vec<f64>> = channel
                .iter()
                .map(|a| a.iter().map(|r| r.iter().sum()).collect())
                .collect();
            let gt = generalized_tilted(&inst, r1, &q, &wy, l, n1, n2).unwrap();
            let f = alternating_objective(&inst, r1, &channel, &q, l, n1, n2);
            assert!(f >= inst.px().expect(&gt.values) - 1e-12);
        }
    }

    #[test]
    fn constant_second_reproduction_costs_nothing() {
        let inst = SourceInstance::hamming(&[0.2, 0.8], 0.1, 0.3).unwrap();
        let ry = rate_y(&inst);
        let sol = sr_solve(&inst, ry + 0.01).unwrap();
        assert_eq!(sol.diagnostics.method, SrMethod::ConstantSecond);
        assert!((sol.value.as_f64() - ry).abs() < 1e-9);
    }
}
