//! Brute-force cross-checks of the minimal sum rate on binary instances.
//!
//! With binary alphabets the problem is two nested convex problems: choose
//! the first-stage channel (two crossover probabilities), then solve one
//! conditional rate-distortion problem per first-stage output and split the
//! second distortion budget between them. Every stage here is a scalar convex
//! minimization done by golden sections, with no Lagrange multipliers.

use srasym::sr::{sr_solve, SrMethod};
use srasym::{rd_solve, DistortionMatrix, Pmf, SourceInstance};

const GOLD: f64 = 0.618_033_988_749_894_9;

fn golden<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let mut a = hi - GOLD * (hi - lo);
    let mut b = lo + GOLD * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLD * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLD * (hi - lo);
            fb = f(b);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// I(X;Y) for a binary source `q0` and crossovers u = W(1|0), v = W(0|1).
fn mi(q0: f64, u: f64, v: f64) -> f64 {
    let q1 = 1.0 - q0;
    let r1 = q0 * u + q1 * (1.0 - v);
    let r0 = 1.0 - r1;
    q0 * (xlogy(1.0 - u, r0) + xlogy(u, r1)) + q1 * (xlogy(v, r0) + xlogy(1.0 - v, r1))
}

/// R(D) of a binary source `q0` with off-diagonal distortions c01, c10.
fn binary_rd(q0: f64, c01: f64, c10: f64, d: f64) -> f64 {
    let q1 = 1.0 - q0;
    if q0 <= 1e-15 || q1 <= 1e-15 || d >= (q0 * c01).min(q1 * c10) {
        return 0.0;
    }
    let umax = (d / (q0 * c01)).min(1.0);
    let vline = |u: f64| ((d - q0 * c01 * u) / (q1 * c10)).clamp(0.0, 1.0);
    golden(|u| mi(q0, u, vline(u)), 0.0, umax, 90).1
}

struct Binary {
    p0: f64,
    d1: [f64; 2],
    d2: [f64; 2],
    lev1: f64,
    lev2: f64,
}

impl Binary {
    fn instance(&self) -> SourceInstance {
        let m =
            |c: [f64; 2]| DistortionMatrix::new(vec![vec![0.0, c[0]], vec![c[1], 0.0]]).unwrap();
        SourceInstance::new(
            Pmf::new(vec![self.p0, 1.0 - self.p0]).unwrap(),
            m(self.d1),
            m(self.d2),
            self.lev1,
            self.lev2,
        )
        .unwrap()
    }

    /// I(X;YZ) minimized over the second stage for a fixed first stage (a, e).
    fn second_stage(&self, a: f64, e: f64) -> f64 {
        let (p0, p1) = (self.p0, 1.0 - self.p0);
        let py1 = p0 * a + p1 * (1.0 - e);
        let py0 = 1.0 - py1;
        let post = |y: usize| -> f64 {
            if y == 0 {
                p0 * (1.0 - a) / py0
            } else {
                p0 * a / py1
            }
        };
        let (c01, c10) = (self.d2[0], self.d2[1]);
        let rd = |y: usize, d: f64| {
            let py = if y == 0 { py0 } else { py1 };
            if py <= 1e-15 {
                0.0
            } else {
                binary_rd(post(y), c01, c10, d)
            }
        };
        let base = mi(p0, a, e);
        if py0 <= 1e-15 || py1 <= 1e-15 {
            let y = if py0 <= 1e-15 { 1 } else { 0 };
            return base + rd(y, self.lev2);
        }
        let hi = self.lev2 / py0;
        let split = |d0: f64| py0 * rd(0, d0) + py1 * rd(1, (self.lev2 - py0 * d0) / py1);
        base + golden(split, 0.0, hi, 70).1
    }

    fn e_max(&self, a: f64) -> f64 {
        ((self.lev1 - self.p0 * a * self.d1[0]) / ((1.0 - self.p0) * self.d1[1])).min(1.0)
    }

    /// Feasible interval of e for a given a, or None.
    fn e_range(&self, a: f64, r1: f64) -> Option<(f64, f64)> {
        let emax = self.e_max(a);
        if emax < 0.0 {
            return None;
        }
        let estar = (1.0 - a).clamp(0.0, emax);
        if mi(self.p0, a, estar) > r1 {
            return None;
        }
        let edge = |mut inside: f64, mut outside: f64| {
            if mi(self.p0, a, outside) <= r1 {
                return outside;
            }
            for _ in 0..100 {
                let mid = 0.5 * (inside + outside);
                if mi(self.p0, a, mid) <= r1 {
                    inside = mid
                } else {
                    outside = mid
                }
            }
            inside
        };
        Some((edge(estar, 0.0), edge(estar, emax)))
    }

    fn inner(&self, a: f64, r1: f64) -> f64 {
        match self.e_range(a, r1) {
            None => f64::INFINITY,
            Some((lo, hi)) => golden(|e| self.second_stage(a, e), lo, hi, 60).1,
        }
    }

    fn oracle(&self, r1: f64) -> f64 {
        let amax = (self.lev1 / (self.p0 * self.d1[0])).min(1.0);
        // Feasible a form an interval around the minimizer of the smallest
        // achievable I(X;Y).
        let slack = |a: f64| {
            let emax = self.e_max(a);
            if emax < 0.0 {
                return f64::INFINITY;
            }
            mi(self.p0, a, (1.0 - a).clamp(0.0, emax)) - r1
        };
        let (a0, s0) = golden(slack, 0.0, amax, 100);
        assert!(s0 <= 0.0, "instance infeasible for the oracle");
        let edge = |mut inside: f64, mut outside: f64| {
            if slack(outside) <= 0.0 {
                return outside;
            }
            for _ in 0..100 {
                let mid = 0.5 * (inside + outside);
                if slack(mid) <= 0.0 {
                    inside = mid
                } else {
                    outside = mid
                }
            }
            inside
        };
        let (lo, hi) = (edge(a0, 0.0), edge(a0, amax));
        golden(|a| self.inner(a, r1), lo, hi, 60).1
    }

    /// Value on a 0.01 grid of first-stage channels, refined by 0.0005 steps
    /// around the best grid point.
    fn grid(&self, r1: f64) -> f64 {
        let feasible = |a: f64, e: f64| {
            (0.0..=1.0).contains(&a)
                && (0.0..=1.0).contains(&e)
                && e <= self.e_max(a) + 1e-15
                && mi(self.p0, a, e) <= r1
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=100 {
            for j in 0..=100 {
                let (a, e) = (i as f64 / 100.0, j as f64 / 100.0);
                if feasible(a, e) {
                    let v = self.second_stage(a, e);
                    if v < best.0 {
                        best = (v, a, e);
                    }
                }
            }
        }
        let (_, ca, ce) = best;
        for i in -20..=20 {
            for j in -20..=20 {
                let (a, e) = (ca + 0.0005 * i as f64, ce + 0.0005 * j as f64);
                if feasible(a, e) {
                    best.0 = best.0.min(self.second_stage(a, e));
                }
            }
        }
        best.0
    }
}

fn check(b: &Binary, margin: f64, expect_dual: bool) {
    let inst = b.instance();
    let ry = rd_solve(inst.px(), inst.d1(), b.lev1).unwrap().rate;
    let r1 = ry + margin;
    let sol = sr_solve(&inst, r1).unwrap();
    let v = sol.value.finite().unwrap();
    let oracle = b.oracle(r1);
    let grid = b.grid(r1);
    assert!((v - oracle).abs() < 1e-4, "solver {v} vs oracle {oracle}");
    assert!(
        grid >= oracle - 1e-9 && grid - oracle < 2e-3,
        "grid {grid} vs oracle {oracle}"
    );
    assert!(grid >= v - 1e-9);
    if expect_dual {
        assert_eq!(sol.diagnostics.method, SrMethod::Dual);
        assert!(sol.lambda > 0.0);
    }
}

#[test]
fn asymmetric_second_distortion() {
    let b = Binary {
        p0: 0.5,
        d1: [1.0, 1.0],
        d2: [1.0, 2.0],
        lev1: 0.25,
        lev2: 0.15,
    };
    check(&b, 0.02, false);
}

#[test]
fn opposed_asymmetries_are_not_refinable() {
    let b = Binary {
        p0: 0.4,
        d1: [1.0, 3.0],
        d2: [3.0, 1.0],
        lev1: 0.2,
        lev2: 0.1,
    };
    check(&b, 0.01, true);
    check(&b, 0.05, true);
}
