//! Exact and Monte-Carlo evaluation of finite-blocklength quantities.
//!
//! Both tilted sums `Σ ȷ_Y(xᵢ)` and `Σ ȷ_YZ(xᵢ)` depend on `xⁿ` only through
//! its type, so exact laws are built by enumerating compositions of `n` with
//! multinomial masses. Type-based bounds evaluate the rate functions at the
//! empirical type, memoized per count vector.

use std::sync::Arc;

use dashmap::DashMap;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Pmf, SourceInstance};
use crate::rd::{rd_solve, RdSolution};
use crate::special::ln_factorial;
use crate::sr::{sr_solve, sr_solve_with};

/// Default cap on the number of enumerated compositions.
pub const DEFAULT_CAP: u128 = 5_000_000;

/// Runs `f` on a pool sized by `SRASYM_THREADS` when set, else on the global pool.
pub fn in_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match std::env::var("SRASYM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(t) if t > 0 => with_threads(t, f),
        _ => f(),
    }
}

/// Runs `f` on a dedicated pool with `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Number of compositions of `n` into `k` non-negative parts, `C(n+k-1, k-1)`.
pub fn composition_count(n: u64, k: usize) -> u128 {
    if k == 0 {
        return u128::from(n == 0);
    }
    let mut c: u128 = 1;
    for i in 1..k as u128 {
        c = c.saturating_mul(n as u128 + i) / i;
    }
    c
}

/// All compositions of `n` into `k` parts, in lexicographic order.
pub fn compositions(n: u64, k: usize) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut cur = vec![0u64; k];
    fn rec(i: usize, left: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for c in 0..=left {
            cur[i] = c;
            rec(i + 1, left - c, cur, out);
        }
    }
    if k > 0 {
        rec(0, n, &mut cur, &mut out);
    }
    out
}

/// `log P_Xⁿ(T_Q)` for the type with the given counts.
pub fn log_type_mass(counts: &[u64], px: &Pmf) -> f64 {
    let n: u64 = counts.iter().sum();
    let mut v = ln_factorial(n);
    for (&c, &p) in counts.iter().zip(px.probs()) {
        if c == 0 {
            continue;
        }
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        v += c as f64 * p.ln() - ln_factorial(c);
    }
    v
}

/// Joint law of the two tilted sums.
#[derive(Debug, Clone, Serialize)]
pub struct ExcessSpectrum {
    pub n: u64,
    /// Atoms `(a, b, mass)` with `a = Σ ȷ_Y(xᵢ)` and `b = Σ ȷ_YZ(xᵢ)`.
    pub support: Vec<(f64, f64, f64)>,
    /// Natural log of each atom's mass, for tails far below `f64` range.
    #[serde(skip)]
    pub log_mass: Vec<f64>,
}

impl ExcessSpectrum {
    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|t| t.2).sum()
    }

    /// `log P(a ≥ ta or b ≥ tb)`, accumulated in log space.
    pub fn log_tail(&self, ta: f64, tb: f64) -> f64 {
        let hits: Vec<f64> = self
            .support
            .iter()
            .zip(&self.log_mass)
            .filter(|((a, b, _), _)| *a >= ta || *b >= tb)
            .map(|(_, &l)| l)
            .collect();
        log_sum_exp(&hits)
    }

    pub fn tail(&self, ta: f64, tb: f64) -> f64 {
        self.log_tail(ta, tb).exp()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Spectrum of arbitrary per-letter values under `px`.
pub fn spectrum_of(
    px: &Pmf,
    first: &[f64],
    second: &[f64],
    n: u64,
    cap: u128,
) -> Result<ExcessSpectrum> {
    let k = px.alphabet_size();
    if first.len() != k || second.len() != k {
        return Err(Error::Invalid(
            "per-letter vectors must match the alphabet".into(),
        ));
    }
    let count = composition_count(n, k);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let types = compositions(n, k);
    let mut support = Vec::with_capacity(types.len());
    let mut log_mass = Vec::with_capacity(types.len());
    for c in &types {
        let a = c.iter().zip(first).map(|(&c, &v)| c as f64 * v).sum();
        let b = c.iter().zip(second).map(|(&c, &v)| c as f64 * v).sum();
        let l = log_type_mass(c, px);
        support.push((a, b, l.exp()));
        log_mass.push(l);
    }
    Ok(ExcessSpectrum {
        n,
        support,
        log_mass,
    })
}

/// Exact joint law of `(Σ ȷ_Y(Xᵢ), Σ ȷ_YZ(Xᵢ))` for `Xⁿ ~ P_Xⁿ`.
pub fn build_spectrum(inst: &SourceInstance, r1: f64, n: u64) -> Result<ExcessSpectrum> {
    build_spectrum_capped(inst, r1, n, DEFAULT_CAP)
}

pub fn build_spectrum_capped(
    inst: &SourceInstance,
    r1: f64,
    n: u64,
    cap: u128,
) -> Result<ExcessSpectrum> {
    let count = composition_count(n, inst.px().alphabet_size());
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let (ty, tyz) = tilted_pair(inst, r1)?;
    spectrum_of(inst.px(), &ty, &tyz, n, cap)
}

fn tilted_pair(inst: &SourceInstance, r1: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let ry = rd_solve(inst.px(), inst.d1(), inst.dist1())?;
    let sr = sr_solve(inst, r1)?;
    if !sr.is_feasible() {
        return Err(Error::Infeasible(
            "R1 below the first-decoder rate-distortion function".into(),
        ));
    }
    Ok((ry.tilted, sr.tilted_yz))
}

/// Code sizes and slack parameters of the one-shot converse.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CodeParams {
    pub n: u64,
    pub log_m1: f64,
    pub log_m1m2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl CodeParams {
    pub fn new(n: u64, log_m1: f64, log_m1m2: f64, gamma1: f64, gamma2: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("blocklength must be positive".into()));
        }
        if log_m1 > log_m1m2 {
            return Err(Error::Invalid("logM1 must not exceed logM1M2".into()));
        }
        if !(gamma1 >= 0.0 && gamma2 >= 0.0) {
            return Err(Error::Invalid(
                "gamma1 and gamma2 must be non-negative".into(),
            ));
        }
        Ok(Self {
            n,
            log_m1,
            log_m1m2,
            gamma1,
            gamma2,
        })
    }

    /// Slacks `γ₁ = γ₂ = ½ log n`.
    pub fn half_log(n: u64, log_m1: f64, log_m1m2: f64) -> Result<Self> {
        let g = 0.5 * (n as f64).ln();
        Self::new(n, log_m1, log_m1m2, g, g)
    }
}

/// A probability bound with its unclamped value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bound {
    pub value: f64,
    pub raw: f64,
    /// Monte-Carlo standard error of the probability term, if sampled.
    pub std_error: Option<f64>,
}

impl Bound {
    fn exact(raw: f64) -> Self {
        Self {
            value: raw.clamp(0.0, 1.0),
            raw,
            std_error: None,
        }
    }
}

/// `P(a ≥ log M₁ + γ₁ or b ≥ log M₁M₂ + γ₂) − e^{−γ₁} − e^{−γ₂}` from an exact spectrum.
pub fn one_shot_converse(spec: &ExcessSpectrum, cp: &CodeParams) -> Bound {
    let p = spec.tail(cp.log_m1 + cp.gamma1, cp.log_m1m2 + cp.gamma2);
    Bound::exact(p - (-cp.gamma1).exp() - (-cp.gamma2).exp())
}

/// Draws `Xⁿ` from per-trial ChaCha streams derived from a root seed.
#[derive(Debug, Clone)]
pub struct TiltedSampler {
    pub px: Pmf,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl TiltedSampler {
    pub fn new(inst: &SourceInstance, r1: f64) -> Result<Self> {
        let (first, second) = tilted_pair(inst, r1)?;
        Ok(Self {
            px: inst.px().clone(),
            first,
            second,
        })
    }

    fn weights(&self) -> Result<WeightedIndex<f64>> {
        WeightedIndex::new(self.px.probs())
            .map_err(|e| Error::Invalid(format!("sampling weights: {e}")))
    }

    /// Type counts of trial `trial` under root `seed`.
    pub fn counts(&self, n: u64, seed: u64, trial: u64) -> Result<Vec<u64>> {
        Ok(draw_counts(
            &self.weights()?,
            self.px.alphabet_size(),
            n,
            seed,
            trial,
        ))
    }

    /// Tilted sums of trial `trial` under root `seed`.
    pub fn sums(&self, n: u64, seed: u64, trial: u64) -> Result<(f64, f64)> {
        let c = self.counts(n, seed, trial)?;
        let a = c.iter().zip(&self.first).map(|(&c, &v)| c as f64 * v).sum();
        let b = c
            .iter()
            .zip(&self.second)
            .map(|(&c, &v)| c as f64 * v)
            .sum();
        Ok((a, b))
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn draw_counts(w: &WeightedIndex<f64>, k: usize, n: u64, seed: u64, trial: u64) -> Vec<u64> {
    let mut rng = trial_rng(seed, trial);
    let mut c = vec![0u64; k];
    for _ in 0..n {
        c[w.sample(&mut rng)] += 1;
    }
    c
}

/// Monte-Carlo estimate of `P(event)` over trials, returning `(p̂, standard error)`.
pub fn mc_probability<F>(trials: u64, event: F) -> (f64, f64)
where
    F: Fn(u64) -> bool + Sync,
{
    let hits: u64 = in_pool(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| u64::from(event(t)))
            .sum()
    });
    let p = hits as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// One-shot converse with the probability estimated by sampling.
pub fn one_shot_converse_mc(
    sampler: &TiltedSampler,
    cp: &CodeParams,
    trials: u64,
    seed: u64,
) -> Result<Bound> {
    if trials == 0 {
        return Err(Error::Invalid("trials must be positive".into()));
    }
    let w = sampler.weights()?;
    let k = sampler.px.alphabet_size();
    let (ta, tb) = (cp.log_m1 + cp.gamma1, cp.log_m1m2 + cp.gamma2);
    let (p, se) = mc_probability(trials, |t| {
        let c = draw_counts(&w, k, cp.n, seed, t);
        let a: f64 = c
            .iter()
            .zip(&sampler.first)
            .map(|(&c, &v)| c as f64 * v)
            .sum();
        let b: f64 = c
            .iter()
            .zip(&sampler.second)
            .map(|(&c, &v)| c as f64 * v)
            .sum();
        a >= ta || b >= tb
    });
    let raw = p - (-cp.gamma1).exp() - (-cp.gamma2).exp();
    Ok(Bound {
        value: raw.clamp(0.0, 1.0),
        raw,
        std_error: Some(se),
    })
}

/// How a type sweep visits types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Exact,
    MonteCarlo { trials: u64, seed: u64 },
}

/// Parameters of the type-based achievability bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TypeSweepConfig {
    pub c1: u64,
    pub c2: u64,
    pub n: u64,
    pub log_m1: f64,
    pub log_m1m2: f64,
    pub mode: SweepMode,
}

impl TypeSweepConfig {
    pub fn new(
        inst: &SourceInstance,
        n: u64,
        log_m1: f64,
        log_m1m2: f64,
        mode: SweepMode,
    ) -> Result<Self> {
        CodeParams::new(n, log_m1, log_m1m2, 0.0, 0.0)?;
        let (c1, c2) = covering_constants(inst);
        Ok(Self {
            c1,
            c2,
            n,
            log_m1,
            log_m1m2,
            mode,
        })
    }

    /// `R₁,ₙ = (log M₁ − c₁ log n − |𝒳| log(n+1)) / n`.
    pub fn r1n(&self, nx: usize) -> f64 {
        let n = self.n as f64;
        (self.log_m1 - self.c1 as f64 * n.ln() - nx as f64 * (n + 1.0).ln()) / n
    }

    /// `R₂,ₙ = (log M₁M₂ − c₂ log n) / n`.
    pub fn r2n(&self) -> f64 {
        let n = self.n as f64;
        (self.log_m1m2 - self.c2 as f64 * n.ln()) / n
    }
}

/// `(c₁, c₂) = (4|𝒳||𝒴| + 9, 6|𝒳||𝒴||𝒵| + 2|𝒳||𝒴| + 17)`.
pub fn covering_constants(inst: &SourceInstance) -> (u64, u64) {
    let (x, y, z) = (
        inst.px().alphabet_size() as u64,
        inst.d1().cols() as u64,
        inst.d2().cols() as u64,
    );
    (4 * x * y + 9, 6 * x * y * z + 2 * x * y + 17)
}

/// `β_n = |𝒳| log(n+1) + 2 log n`.
pub fn beta_n(nx: usize, n: u64) -> f64 {
    let n = n as f64;
    nx as f64 * (n + 1.0).ln() + 2.0 * n.ln()
}

type RdKey = (Vec<u64>, u64, u64);
type SrKey = (Vec<u64>, u64, u64, u64);

/// Per-type memo of rate-distortion and sum-rate evaluations.
#[derive(Default)]
pub struct TypeCache {
    rd: DashMap<RdKey, Arc<(RdSolution, RdSolution)>>,
    sr: DashMap<SrKey, f64>,
}

impl TypeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rd.len() + self.sr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rd_pair(
        &self,
        inst: &SourceInstance,
        counts: &[u64],
    ) -> Result<Arc<(RdSolution, RdSolution)>> {
        let key = (
            counts.to_vec(),
            inst.dist1().to_bits(),
            inst.dist2().to_bits(),
        );
        if let Some(v) = self.rd.get(&key) {
            return Ok(v.clone());
        }
        let y = rd_solve(inst.px(), inst.d1(), inst.dist1())?;
        let z = rd_solve(inst.px(), inst.d2(), inst.dist2())?;
        let v = Arc::new((y, z));
        self.rd.insert(key, v.clone());
        Ok(v)
    }

    fn sum_rate(
        &self,
        inst: &SourceInstance,
        counts: &[u64],
        r1: f64,
        pair: &(RdSolution, RdSolution),
    ) -> Result<f64> {
        let key = (
            counts.to_vec(),
            r1.to_bits(),
            inst.dist1().to_bits(),
            inst.dist2().to_bits(),
        );
        if let Some(v) = self.sr.get(&key) {
            return Ok(*v);
        }
        let v = sr_solve_with(inst, r1, &pair.0, &pair.1)?.value.as_f64();
        self.sr.insert(key, v);
        Ok(v)
    }
}

/// Whether `R₁ < R_Y(Q, D₁)` or `R₂ < 𝖱(R₁, D₁, D₂ | Q)` at the type `counts`.
fn type_violates(
    base: &SourceInstance,
    counts: &[u64],
    lev: (f64, f64),
    r1: f64,
    r2: f64,
    cache: &TypeCache,
) -> Result<bool> {
    let q = Pmf::from_counts(counts)?;
    let inst = base.with_px(q)?.with_levels(lev.0, lev.1)?;
    let pair = cache.rd_pair(&inst, counts)?;
    if r1 < pair.0.rate || r2 < pair.1.rate {
        return Ok(true);
    }
    let total = cache.sum_rate(&inst, counts, r1, &pair)?;
    Ok(r2 < total)
}

/// Report of a type-based bound.
#[derive(Debug, Clone, Serialize)]
pub struct TypeBound {
    pub bound: Bound,
    pub r1n: f64,
    pub r2n: f64,
    pub types: usize,
    /// Types skipped after a solver failure (mass below 1e-15 only).
    pub skipped: usize,
}

fn violation_probability(
    inst: &SourceInstance,
    n: u64,
    lev: (f64, f64),
    r1: f64,
    r2: f64,
    mode: SweepMode,
    cache: &TypeCache,
) -> Result<(f64, Option<f64>, usize, usize)> {
    let px = inst.px();
    let k = px.alphabet_size();
    match mode {
        SweepMode::Exact => {
            let count = composition_count(n, k);
            if count > DEFAULT_CAP {
                return Err(Error::CapExceeded {
                    count,
                    cap: DEFAULT_CAP,
                });
            }
            let types = compositions(n, k);
            let terms: Vec<Result<(f64, bool)>> = in_pool(|| {
                types
                    .par_iter()
                    .map(|c| {
                        let mass = log_type_mass(c, px).exp();
                        if mass == 0.0 {
                            return Ok((0.0, false));
                        }
                        match type_violates(inst, c, lev, r1, r2, cache) {
                            Ok(v) => Ok((if v { mass } else { 0.0 }, false)),
                            Err(_) if mass < 1e-15 => Ok((0.0, true)),
                            Err(e) => Err(e),
                        }
                    })
                    .collect()
            });
            let mut p = 0.0;
            let mut skipped = 0;
            for t in terms {
                let (m, s) = t?;
                p += m;
                skipped += usize::from(s);
            }
            Ok((p, None, types.len(), skipped))
        }
        SweepMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::Invalid("trials must be positive".into()));
            }
            let w = WeightedIndex::new(px.probs())
                .map_err(|e| Error::Invalid(format!("sampling weights: {e}")))?;
            let flags: Vec<Result<bool>> = in_pool(|| {
                (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        type_violates(inst, &draw_counts(&w, k, n, seed, t), lev, r1, r2, cache)
                    })
                    .collect()
            });
            let mut hits = 0u64;
            for f in flags {
                hits += u64::from(f?);
            }
            let p = hits as f64 / trials as f64;
            Ok((
                p,
                Some((p * (1.0 - p) / trials as f64).sqrt()),
                trials as usize,
                0,
            ))
        }
    }
}

/// Type-covering achievability bound: an upper bound on `ε_n`.
pub fn dms_achievability_bound(inst: &SourceInstance, cfg: &TypeSweepConfig) -> Result<TypeBound> {
    dms_achievability_bound_cached(inst, cfg, &TypeCache::new())
}

pub fn dms_achievability_bound_cached(
    inst: &SourceInstance,
    cfg: &TypeSweepConfig,
    cache: &TypeCache,
) -> Result<TypeBound> {
    let (r1n, r2n) = (cfg.r1n(inst.px().alphabet_size()), cfg.r2n());
    let lev = (inst.dist1(), inst.dist2());
    let (p, se, types, skipped) =
        violation_probability(inst, cfg.n, lev, r1n, r2n, cfg.mode, cache)?;
    Ok(TypeBound {
        bound: Bound {
            value: p.clamp(0.0, 1.0),
            raw: p,
            std_error: se,
        },
        r1n,
        r2n,
        types,
        skipped,
    })
}

/// Type-based strong converse: a lower bound on `ε_n`.
pub fn dms_converse_bound(
    inst: &SourceInstance,
    n: u64,
    log_m1: f64,
    log_m1m2: f64,
) -> Result<TypeBound> {
    dms_converse_bound_cached(
        inst,
        n,
        log_m1,
        log_m1m2,
        SweepMode::Exact,
        &TypeCache::new(),
    )
}

pub fn dms_converse_bound_cached(
    inst: &SourceInstance,
    n: u64,
    log_m1: f64,
    log_m1m2: f64,
    mode: SweepMode,
    cache: &TypeCache,
) -> Result<TypeBound> {
    CodeParams::new(n, log_m1, log_m1m2, 0.0, 0.0)?;
    let nx = inst.px().alphabet_size();
    let nf = n as f64;
    let b = beta_n(nx, n);
    let (r1n, r2n) = ((log_m1 + b) / nf, (log_m1m2 + b) / nf);
    let dbar =
        |m: &crate::model::DistortionMatrix| m.to_rows().into_iter().flatten().fold(0.0, f64::max);
    let lev = (
        inst.dist1() + dbar(inst.d1()) / nf,
        inst.dist2() + dbar(inst.d2()) / nf,
    );
    let (p, se, types, skipped) = violation_probability(inst, n, lev, r1n, r2n, mode, cache)?;
    let raw = p - 1.0 / nf;
    Ok(TypeBound {
        bound: Bound {
            value: raw.clamp(0.0, 1.0),
            raw,
            std_error: se,
        },
        r1n,
        r2n,
        types,
        skipped,
    })
}

/// One entry of a moderate-deviations trend.
#[derive(Debug, Clone, Serialize)]
pub struct TrendPoint {
    pub n: u64,
    pub rho: f64,
    pub log_epsilon: f64,
    /// `−log ε̂_n / (n ρ_n²)`, absent when `ε̂_n < 1e-300`.
    pub exponent: Option<f64>,
    /// When `ε̂_n` underflows: the exponent is at least this value.
    pub exponent_at_least: Option<f64>,
}

impl TrendPoint {
    pub fn new(n: u64, rho: f64, log_epsilon: f64) -> Self {
        let scale = n as f64 * rho * rho;
        let floor = 1e-300f64.ln();
        if log_epsilon < floor {
            Self {
                n,
                rho,
                log_epsilon,
                exponent: None,
                exponent_at_least: Some(-floor / scale),
            }
        } else {
            Self {
                n,
                rho,
                log_epsilon,
                exponent: Some(-log_epsilon / scale),
                exponent_at_least: None,
            }
        }
    }
}

/// Normalized exponents of `P(Σ ȷ_Y ≥ n(R₁* + θ₁ρ_n) or Σ ȷ_YZ ≥ n(R₂* + θ₂ρ_n))`.
pub fn mdc_trend<R: Fn(u64) -> f64>(
    inst: &SourceInstance,
    rates: (f64, f64),
    theta1: f64,
    theta2: f64,
    rho: R,
    n_list: &[u64],
) -> Result<Vec<TrendPoint>> {
    let (ty, tyz) = tilted_pair(inst, rates.0)?;
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let spec = spectrum_of(inst.px(), &ty, &tyz, n, DEFAULT_CAP)?;
        let r = rho(n);
        let nf = n as f64;
        let l = spec.log_tail(nf * (rates.0 + theta1 * r), nf * (rates.1 + theta2 * r));
        out.push(TrendPoint::new(n, r, l));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_counts() {
        assert_eq!(composition_count(2, 2), 3);
        assert_eq!(composition_count(300, 4), 4_590_551);
        assert_eq!(compositions(3, 3).len() as u128, composition_count(3, 3));
        assert!(compositions(4, 3)
            .iter()
            .all(|c| c.iter().sum::<u64>() == 4));
    }

    #[test]
    fn binary_atoms() {
        let px = Pmf::new(vec![0.2, 0.8]).unwrap();
        let s = spectrum_of(&px, &[1.0, 0.0], &[0.0, 1.0], 2, DEFAULT_CAP).unwrap();
        let mut masses: Vec<f64> = s.support.iter().map(|t| t.2).collect();
        masses.sort_by(f64::total_cmp);
        for (m, e) in masses.iter().zip([0.04, 0.32, 0.64]) {
            assert!((m - e).abs() < 1e-12);
        }
    }

    #[test]
    fn masses_normalize() {
        let inst = SourceInstance::hamming(&[0.2, 0.8], 0.15, 0.05).unwrap();
        let ry = rd_solve(inst.px(), inst.d1(), 0.15).unwrap().rate;
        let s = build_spectrum(&inst, ry, 1000).unwrap();
        assert_eq!(s.support.len(), 1001);
        assert!((s.total_mass() - 1.0).abs() < 1e-10);
        let big = SourceInstance::hamming(&[0.25; 4], 0.3, 0.1).unwrap();
        assert!(matches!(
            build_spectrum_capped(&big, 2.0, 300, 1000),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn clamp_at_huge_sizes() {
        let px = Pmf::new(vec![0.5, 0.5]).unwrap();
        let s = spectrum_of(&px, &[1.0, 2.0], &[1.0, 2.0], 5, DEFAULT_CAP).unwrap();
        let cp = CodeParams::new(5, 1e6, 1e6, 0.0, 0.0).unwrap();
        let b = one_shot_converse(&s, &cp);
        assert_eq!(b.value, 0.0);
        assert_eq!(b.raw, -2.0);
    }

    #[test]
    fn one_shot_is_monotone_in_sizes() {
        let px = Pmf::new(vec![0.3, 0.7]).unwrap();
        let s = spectrum_of(&px, &[1.2, 0.3], &[2.0, 0.1], 40, DEFAULT_CAP).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..30 {
            let cp = CodeParams::new(40, 5.0 + i as f64, 40.0, 0.5, 0.5).unwrap();
            let v = one_shot_converse(&s, &cp).raw;
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn monte_carlo_is_partition_independent() {
        let inst = SourceInstance::hamming(&[0.3, 0.7], 0.15, 0.05).unwrap();
        let ry = rd_solve(inst.px(), inst.d1(), 0.15).unwrap().rate;
        let sampler = TiltedSampler::new(&inst, ry).unwrap();
        let cp = CodeParams::half_log(50, 50.0 * ry, 50.0 * 0.6).unwrap();
        let a = with_threads(1, || one_shot_converse_mc(&sampler, &cp, 2000, 11).unwrap());
        let b = with_threads(4, || one_shot_converse_mc(&sampler, &cp, 2000, 11).unwrap());
        assert_eq!(a.raw.to_bits(), b.raw.to_bits());
        assert_eq!(
            sampler.counts(50, 11, 7).unwrap(),
            sampler.counts(50, 11, 7).unwrap()
        );
    }

    #[test]
    fn constants_follow_alphabet_sizes() {
        let inst = SourceInstance::hamming(&[0.3, 0.7], 0.15, 0.05).unwrap();
        assert_eq!(covering_constants(&inst), (25, 73));
    }
}
