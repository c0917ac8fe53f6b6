//! Single-decoder rate-distortion functions and D-tilted information densities.
//!
//! For a fixed slope `s` the optimal output law maximizes
//! `Σ_x P(x) log Σ_y Q(y) exp(-s d(x,y))` over the simplex. We run the
//! classical alternating (Blahut-Arimoto) sweeps until the iterate settles
//! and then polish with an active-set Newton method on the same concave
//! objective. The slope is located by a safeguarded secant search on the
//! achieved distortion.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DistortionMatrix, Pmf};
use crate::special::solve_linear;

const SWEEP_CAP: usize = 100_000;
const PRUNE: f64 = 1e-14;
const KKT_TOL: f64 = 1e-15;

/// Solution of `min I(X;Y)` subject to `E d(X,Y) ≤ D`.
#[derive(Debug, Clone, Serialize)]
pub struct RdSolution {
    pub rate: f64,
    pub slope: f64,
    pub distortion: f64,
    pub achieved_distortion: f64,
    pub test_channel: Vec<Vec<f64>>,
    pub output_law: Vec<f64>,
    pub tilted: Vec<f64>,
}

impl RdSolution {
    /// `ȷ(x, D | P_X)`.
    pub fn tilted_density(&self, x: usize) -> Result<f64> {
        self.tilted.get(x).copied().ok_or(Error::IndexOutOfRange {
            index: x,
            size: self.tilted.len(),
        })
    }
}

/// Compact view of the problem on the source support and distinct columns.
pub(crate) struct Reduced {
    pub p: Vec<f64>,
    pub ys: Vec<usize>,
    /// `d[i][j] = d(xs[i], ys[j])`.
    pub d: Vec<Vec<f64>>,
}

impl Reduced {
    pub fn new(px: &Pmf, dm: &DistortionMatrix) -> Self {
        let xs = px.support();
        let mut ys: Vec<usize> = Vec::new();
        for y in 0..dm.cols() {
            let dup = ys
                .iter()
                .any(|&u| (0..dm.rows()).all(|x| dm.get(x, u) == dm.get(x, y)));
            if !dup {
                ys.push(y);
            }
        }
        let d = xs
            .iter()
            .map(|&x| ys.iter().map(|&y| dm.get(x, y)).collect())
            .collect();
        let p = xs.iter().map(|&x| px.get(x)).collect();
        Self { p, ys, d }
    }
}

/// Optimum of the fixed-slope problem.
#[derive(Debug, Clone)]
pub struct FixedSlope {
    pub slope: f64,
    /// Output law over the reduced columns.
    pub q: Vec<f64>,
    pub distortion: f64,
    pub rate: f64,
    /// `log max_y Σ_x P(x) A(x,y)/Z(x)`, an upper bound on the objective gap.
    pub gap: f64,
    pub sweeps: usize,
}

struct Objective<'a> {
    p: &'a [f64],
    a: Vec<Vec<f64>>,
}

impl<'a> Objective<'a> {
    fn new(p: &'a [f64], d: &[Vec<f64>], s: f64) -> Self {
        let a = d
            .iter()
            .map(|row| row.iter().map(|&v| (-s * v).exp()).collect())
            .collect();
        Self { p, a }
    }

    fn z(&self, q: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .map(|row| row.iter().zip(q).map(|(a, q)| a * q).sum())
            .collect()
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.p.iter().zip(z).map(|(p, z)| p * z.ln()).sum()
    }

    fn grad(&self, z: &[f64]) -> Vec<f64> {
        let m = self.a[0].len();
        let mut g = vec![0.0; m];
        for (i, row) in self.a.iter().enumerate() {
            let w = self.p[i] / z[i];
            for j in 0..m {
                g[j] += w * row[j];
            }
        }
        g
    }
}

fn max_log(g: &[f64]) -> f64 {
    g.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)).ln()
}

/// One alternating sweep `Q ← Q ⊙ ∇`. Returns the objective before the update.
fn sweep(obj: &Objective, q: &mut [f64]) -> f64 {
    let z = obj.z(q);
    let g = obj.grad(&z);
    for (qj, gj) in q.iter_mut().zip(&g) {
        *qj *= gj;
    }
    let t: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= t);
    obj.value(&z)
}

/// Objective values along `sweeps` plain alternating sweeps from `init`.
/// Exposed so the monotone-descent property can be tested.
pub fn alternating_trace(px: &Pmf, d: &DistortionMatrix, s: f64, sweeps: usize) -> Vec<f64> {
    let r = Reduced::new(px, d);
    let obj = Objective::new(&r.p, &r.d, s);
    let mut q = vec![1.0 / r.ys.len() as f64; r.ys.len()];
    (0..sweeps).map(|_| sweep(&obj, &mut q)).collect()
}

fn newton_polish(obj: &Objective, q: &mut [f64]) -> bool {
    let m = q.len();
    let mut active: Vec<bool> = q.iter().map(|&v| v > 1e-12).collect();
    for j in 0..m {
        if !active[j] {
            q[j] = 0.0;
        }
    }
    let mut restarts = 0;
    let mut iters = 0;
    while iters < 300 {
        iters += 1;
        let z = obj.z(q);
        let g = obj.grad(&z);
        let on_face = (0..m)
            .filter(|&j| active[j])
            .all(|j| (g[j] - 1.0).abs() < 1e-14);
        if on_face || max_log(&g) < KKT_TOL {
            let worst = (0..m)
                .filter(|&j| !active[j])
                .max_by(|&a, &b| g[a].total_cmp(&g[b]));
            match worst {
                Some(j) if g[j] > 1.0 + 1e-13 => {
                    active[j] = true;
                    restarts += 1;
                    if restarts > 4 * m {
                        return false;
                    }
                    continue;
                }
                _ => return true,
            }
        }
        let idx: Vec<usize> = (0..m).filter(|&j| active[j]).collect();
        let k = idx.len();
        let mut h = vec![vec![0.0; k + 1]; k + 1];
        for (i, row) in obj.a.iter().enumerate() {
            let w = obj.p[i] / (z[i] * z[i]);
            for (u, &ju) in idx.iter().enumerate() {
                let au = row[ju] * w;
                for (v, &jv) in idx.iter().enumerate().skip(u) {
                    h[u][v] -= au * row[jv];
                }
            }
        }
        let tr: f64 = (0..k).map(|u| -h[u][u]).sum::<f64>().max(1e-300);
        for u in 0..k {
            h[u][u] -= 1e-13 * tr;
            for v in 0..u {
                h[u][v] = h[v][u];
            }
            h[u][k] = 1.0;
            h[k][u] = 1.0;
        }
        let mut rhs: Vec<f64> = idx.iter().map(|&j| -g[j]).collect();
        rhs.push(0.0);
        let Some(sol) = solve_linear(&h, &rhs) else {
            return false;
        };
        let step = &sol[..k];
        let mut tmax = 1.0f64;
        let mut blocking = None;
        for (u, &j) in idx.iter().enumerate() {
            if step[u] < 0.0 && -q[j] / step[u] < tmax {
                tmax = -q[j] / step[u];
                blocking = Some(j);
            }
        }
        let f0 = obj.value(&z);
        let mut t = tmax;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = q.to_vec();
            for (u, &j) in idx.iter().enumerate() {
                trial[j] = (q[j] + t * step[u]).max(0.0);
            }
            if t == tmax {
                if let Some(j) = blocking {
                    trial[j] = 0.0;
                }
            }
            let s: f64 = trial.iter().sum();
            trial.iter_mut().for_each(|v| *v /= s);
            let f1 = obj.value(&obj.z(&trial));
            if f1 >= f0 - 1e-15 * f0.abs().max(1.0) {
                q.copy_from_slice(&trial);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return max_log(&g) < 1e-13;
        }
        for j in 0..m {
            if active[j] && q[j] <= PRUNE {
                q[j] = 0.0;
                active[j] = false;
            }
        }
    }
    false
}

/// Solves the fixed-slope problem on reduced data, optionally warm-started.
pub(crate) fn solve_fixed(r: &Reduced, s: f64, warm: Option<&[f64]>) -> Result<FixedSlope> {
    let m = r.ys.len();
    let obj = Objective::new(&r.p, &r.d, s);
    let mut q: Vec<f64> = match warm {
        Some(w) => w.iter().map(|v| 0.98 * v + 0.02 / m as f64).collect(),
        None => vec![1.0 / m as f64; m],
    };
    let mut sweeps = 0;
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    while sweeps < SWEEP_CAP {
        let burst = if sweeps == 0 { 30 } else { 200 };
        for _ in 0..burst {
            let v = sweep(&obj, &mut q);
            debug_assert!(
                v >= prev - 1e-12 * v.abs().max(1.0),
                "alternating objective increased"
            );
            prev = v;
            sweeps += 1;
        }
        let mut trial = q.clone();
        if newton_polish(&obj, &mut trial) {
            q = trial;
            converged = true;
            break;
        }
        let g = obj.grad(&obj.z(&q));
        if max_log(&g) < KKT_TOL {
            converged = true;
            break;
        }
    }
    for v in q.iter_mut() {
        if *v < PRUNE {
            *v = 0.0;
        }
    }
    let t: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= t);
    let z = obj.z(&q);
    let gap = max_log(&obj.grad(&z)).max(0.0);
    if !converged && gap > 1e-10 {
        return Err(Error::NonConvergence {
            context: "rate-distortion sweeps",
            iterations: sweeps,
            gap,
        });
    }
    let mut dist = 0.0;
    for (i, row) in obj.a.iter().enumerate() {
        for j in 0..m {
            if q[j] > 0.0 {
                dist += r.p[i] * q[j] * row[j] * r.d[i][j] / z[i];
            }
        }
    }
    let rate = -s * dist - obj.value(&z);
    Ok(FixedSlope {
        slope: s,
        q,
        distortion: dist,
        rate,
        gap,
        sweeps,
    })
}

/// Fixed-slope solution for a full instance (test and oracle hook).
pub fn rd_fixed_slope(px: &Pmf, d: &DistortionMatrix, s: f64) -> Result<FixedSlope> {
    solve_fixed(&Reduced::new(px, d), s, None)
}

/// Computes `R(D)`, the optimal slope and the tilted densities.
pub fn rd_solve(px: &Pmf, d: &DistortionMatrix, level: f64) -> Result<RdSolution> {
    if !(level > 0.0) || !level.is_finite() {
        return Err(Error::Invalid("distortion level must be positive".into()));
    }
    if d.rows() != px.alphabet_size() {
        return Err(Error::Invalid(
            "distortion matrix rows must match the source alphabet".into(),
        ));
    }
    let (dmax, col) = d.max_useful_distortion(px.probs());
    if level >= dmax {
        return Ok(zero_rate(px, d, level, dmax, col));
    }
    let r = Reduced::new(px, d);
    let target = level;
    let mut lo = solve_fixed(&r, 0.0, None)?;
    if lo.distortion <= target {
        return Ok(zero_rate(px, d, level, dmax, col));
    }
    let mut s = 1.0;
    let mut hi = solve_fixed(&r, s, None)?;
    while hi.distortion >= target {
        lo = hi;
        s *= 2.0;
        if s > 1e6 {
            return Err(Error::NonConvergence {
                context: "slope bracketing",
                iterations: 20,
                gap: lo.distortion - target,
            });
        }
        hi = solve_fixed(&r, s, Some(&lo.q))?;
    }
    let mut side = 0i8;
    let (mut flo, mut fhi) = (lo.distortion - target, hi.distortion - target);
    for it in 0..300 {
        if fhi.abs() < 1e-14 || (hi.slope - lo.slope) <= 1e-14 * hi.slope.max(1.0) {
            break;
        }
        let mut sm = if it % 3 == 2 {
            0.5 * (lo.slope + hi.slope)
        } else {
            (flo * hi.slope - fhi * lo.slope) / (flo - fhi)
        };
        if !(sm > lo.slope && sm < hi.slope) {
            sm = 0.5 * (lo.slope + hi.slope);
        }
        let warm = hi.q.clone();
        let mid = solve_fixed(&r, sm, Some(&warm))?;
        let fm = mid.distortion - target;
        if fm >= 0.0 {
            lo = mid;
            flo = fm;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            fhi = fm;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(assemble(px, d, &r, &lo, &hi, level))
}

/// Builds the full-alphabet solution. When the distortion curve jumps at the
/// slope (a linear segment of `R(D)`), the two bracketing channels are mixed.
fn assemble(
    px: &Pmf,
    d: &DistortionMatrix,
    r: &Reduced,
    lo: &FixedSlope,
    hi: &FixedSlope,
    level: f64,
) -> RdSolution {
    let nx = px.alphabet_size();
    let ny = d.cols();
    let channel_of = |f: &FixedSlope| -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut w = vec![vec![0.0; ny]; nx];
        let mut out = vec![0.0; ny];
        for x in 0..nx {
            let mut row: Vec<f64> =
                r.ys.iter()
                    .enumerate()
                    .map(|(j, &y)| f.q[j] * (-f.slope * d.get(x, y)).exp())
                    .collect();
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= z);
            for (j, &y) in r.ys.iter().enumerate() {
                w[x][y] = row[j];
            }
        }
        for (j, &y) in r.ys.iter().enumerate() {
            out[y] = f.q[j];
        }
        (w, out)
    };
    let (base, theta) = if (hi.distortion - level).abs() <= 1e-12
        || (lo.distortion - hi.distortion).abs() < 1e-15
    {
        (hi, 1.0)
    } else {
        (
            hi,
            (lo.distortion - level) / (lo.distortion - hi.distortion),
        )
    };
    let s = base.slope;
    let (mut w, mut out) = channel_of(base);
    let mut achieved = base.distortion;
    let mut rate = base.rate + s * (base.distortion - level);
    if theta < 1.0 {
        let (wl, ol) = channel_of(lo);
        for x in 0..nx {
            for y in 0..ny {
                w[x][y] = theta * w[x][y] + (1.0 - theta) * wl[x][y];
            }
        }
        for y in 0..ny {
            out[y] = theta * out[y] + (1.0 - theta) * ol[y];
        }
        achieved = theta * hi.distortion + (1.0 - theta) * lo.distortion;
        rate = theta * hi.rate + (1.0 - theta) * lo.rate;
    }
    let tilted: Vec<f64> = (0..nx)
        .map(|x| {
            let z: f64 = (0..ny)
                .filter(|&y| out[y] > 0.0)
                .map(|y| out[y] * (-s * (d.get(x, y) - level)).exp())
                .sum();
            -z.ln()
        })
        .collect();
    // The tilted mean equals the rate exactly at the fixed point; use it.
    let mean = px.expect(&tilted);
    if theta >= 1.0 {
        rate = mean;
    }
    RdSolution {
        rate: rate.max(0.0),
        slope: s,
        distortion: level,
        achieved_distortion: achieved,
        test_channel: w,
        output_law: out,
        tilted,
    }
}

fn zero_rate(px: &Pmf, d: &DistortionMatrix, level: f64, dmax: f64, col: usize) -> RdSolution {
    let nx = px.alphabet_size();
    let ny = d.cols();
    let mut out = vec![0.0; ny];
    out[col] = 1.0;
    let w = (0..nx).map(|_| out.clone()).collect();
    RdSolution {
        rate: 0.0,
        slope: 0.0,
        distortion: level,
        achieved_distortion: dmax,
        test_channel: w,
        output_law: out,
        tilted: vec![0.0; nx],
    }
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let f = |t: f64| if t > 0.0 { -t * t.ln() } else { 0.0 };
    f(p) + f(1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(p: f64) -> Pmf {
        Pmf::new(vec![p, 1.0 - p]).unwrap()
    }

    #[test]
    fn binary_closed_form() {
        let h = DistortionMatrix::hamming(2);
        let sol = rd_solve(&bin(0.2), &h, 0.1).unwrap();
        assert!((sol.rate - 0.175_319).abs() < 1e-6, "{}", sol.rate);
        assert!((sol.rate - (binary_entropy(0.2) - binary_entropy(0.1))).abs() < 1e-10);
        assert!((sol.tilted_density(0).unwrap() - 1.284_355).abs() < 1e-6);
        assert!((sol.tilted_density(1).unwrap() + 0.101_940).abs() < 1e-6);
        assert!((sol.slope - 9f64.ln()).abs() < 1e-7);
        assert!(sol.tilted_density(2).is_err());
    }

    #[test]
    fn uniform_binary_at_half_is_free() {
        let sol = rd_solve(&bin(0.5), &DistortionMatrix::hamming(2), 0.5).unwrap();
        assert_eq!(sol.rate, 0.0);
        assert_eq!(sol.slope, 0.0);
        assert!(sol.tilted.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn tilted_mean_and_constraint() {
        let px = Pmf::new(vec![1.0 / 3.0, 0.25, 0.25, 1.0 / 6.0]).unwrap();
        let h = DistortionMatrix::hamming(4);
        for level in [0.05, 0.3, 0.5, 0.6, 0.66] {
            let sol = rd_solve(&px, &h, level).unwrap();
            assert!((px.expect(&sol.tilted) - sol.rate).abs() < 1e-10);
            assert!(sol.achieved_distortion <= level + 1e-9);
            for row in &sol.test_channel {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alternating_objective_is_monotone() {
        let px = Pmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let d = DistortionMatrix::new(vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.0],
            vec![2.0, 1.0, 0.0],
            vec![0.5, 0.0, 0.7],
        ])
        .unwrap();
        let tr = alternating_trace(&px, &d, 2.5, 500);
        for w in tr.windows(2) {
            assert!(w[1] >= w[0] - 1e-14);
        }
    }

    #[test]
    fn duplicate_columns_go_to_first_index() {
        let px = bin(0.3);
        let d = DistortionMatrix::new(vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let sol = rd_solve(&px, &d, 0.1).unwrap();
        assert_eq!(sol.output_law[2], 0.0);
        assert!((sol.rate - (binary_entropy(0.3) - binary_entropy(0.1))).abs() < 1e-9);
    }

    #[test]
    fn zero_probability_symbols_are_stripped() {
        let px = Pmf::new(vec![0.2, 0.0, 0.8]).unwrap();
        let sol = rd_solve(&px, &DistortionMatrix::hamming(3), 0.1).unwrap();
        assert!((sol.rate - (binary_entropy(0.2) - binary_entropy(0.1))).abs() < 1e-9);
        assert!(sol.tilted[1].is_finite());
    }
}
