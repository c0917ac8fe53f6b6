use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use srasym::dispersion::{dispersion_report, rate_dispersion, DispersionReport};
use srasym::gaussian::{
    gaussian_achievability_bound, gaussian_mdc, gaussian_one_shot_converse, gaussian_rd,
    gaussian_region, GaussianInstance, GaussianTypePartition,
};
use srasym::normal::{
    bivariate_psi, mdc_constant, phi_cdf, q_func, second_order_region, MdcQuery, RegionBoundary,
    RegionCase, RegionQuery,
};
use srasym::spectrum::{
    build_spectrum, dms_achievability_bound_cached, dms_converse_bound_cached, one_shot_converse,
    one_shot_converse_mc, CodeParams, SweepMode, TiltedSampler, TypeCache, TypeSweepConfig,
};
use srasym::sr::sr_solve;
use srasym::{rd_solve, validate_instance, DistortionMatrix, Pmf, RawInstance, SourceInstance};

use crate::output::{jnum, jnums, num, Format, Report, Table, Units};

pub type CmdResult<T> = Result<T, String>;

fn lib<T>(r: srasym::Result<T>) -> CmdResult<T> {
    r.map_err(|e| e.to_string())
}

/// Parses a JSON file, naming the offending field on failure.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CmdResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." {
            "<root>".to_string()
        } else {
            field
        };
        format!("{}: field `{}`: {}", path.display(), field, e.inner())
    })
}

pub fn load_instance(path: Option<&PathBuf>) -> CmdResult<SourceInstance> {
    let path = path.ok_or("--instance is required")?;
    let raw: RawInstance = read_json(path)?;
    validate_instance(&raw).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn load_gaussian(path: Option<&PathBuf>) -> CmdResult<GaussianInstance> {
    let path = path.ok_or("--instance is required")?;
    let g: GaussianInstance = read_json(path)?;
    g.validated()
        .map_err(|e| format!("{}: {e}", path.display()))
}

pub fn quaternary() -> SourceInstance {
    SourceInstance::hamming(&[1.0 / 3.0, 0.25, 0.25, 1.0 / 6.0], 0.5, 0.3)
        .expect("valid quaternary source")
}

/// First-stage rate from `--r1`, else `R_Y + margin`.
pub fn first_rate(inst: &SourceInstance, r1: Option<f64>, margin: f64) -> CmdResult<f64> {
    match r1 {
        Some(r) => Ok(r),
        None => Ok(lib(rd_solve(inst.px(), inst.d1(), inst.dist1()))?.rate + margin),
    }
}

pub fn rd(inst: &SourceInstance, u: Units) -> CmdResult<Report> {
    let mut table = Table::new(&["decoder", "level", "rate", "slope", "dispersion"]);
    let mut items = Vec::new();
    for (k, d, level) in [(1, inst.d1(), inst.dist1()), (2, inst.d2(), inst.dist2())] {
        let s = lib(rd_solve(inst.px(), d, level))?;
        let v = lib(rate_dispersion(inst.px(), d, level))?;
        table.push(vec![
            k.to_string(),
            num(level),
            num(u.rate(s.rate)),
            num(u.rate(s.slope)),
            num(u.var(v)),
        ]);
        items.push(json!({
            "decoder": k,
            "level": level,
            "rate": jnum(u.rate(s.rate)),
            "slope": jnum(u.rate(s.slope)),
            "achieved_distortion": s.achieved_distortion,
            "dispersion": u.var(v),
            "tilted": jnums(&u.rates(&s.tilted)),
            "test_channel": s.test_channel,
        }));
    }
    Ok(Report {
        json: json!({ "units": u.name(), "decoders": items }),
        table,
    })
}

pub fn sr(inst: &SourceInstance, r1: f64, u: Units) -> CmdResult<Report> {
    let s = lib(sr_solve(inst, r1))?;
    let value = u.rate(s.value.as_f64());
    let mut table = Table::new(&["r1", "sum_rate", "lambda", "nu1", "nu2", "method"]);
    let method = serde_json::to_value(s.diagnostics.method).map_err(|e| e.to_string())?;
    let method = method.as_str().unwrap_or_default().to_string();
    table.push(vec![
        num(u.rate(r1)),
        num(value),
        num(s.lambda),
        num(u.rate(s.nu1)),
        num(u.rate(s.nu2)),
        method.clone(),
    ]);
    let json = json!({
        "units": u.name(),
        "r1": u.rate(r1),
        "sum_rate": jnum(value),
        "feasible": s.is_feasible(),
        "lambda": jnum(s.lambda),
        "nu1": jnum(u.rate(s.nu1)),
        "nu2": jnum(u.rate(s.nu2)),
        "tilted_yz": jnums(&u.rates(&s.tilted_yz)),
        "test_channel": s.test_channel,
        "method": method,
        "diagnostics": {
            "primal_value": jnum(u.rate(s.diagnostics.primal_value)),
            "dual_gap": jnum(u.rate(s.diagnostics.dual_gap)),
            "outer_iterations": s.diagnostics.outer_iterations,
            "inner_sweeps": s.diagnostics.inner_sweeps,
        },
    });
    Ok(Report { json, table })
}

pub fn dispersion(inst: &SourceInstance, r1: f64, u: Units) -> CmdResult<Report> {
    let r = lib(dispersion_report(inst, r1))?;
    let s3 = u.scale().powi(3);
    let mut table = Table::new(&[
        "r1",
        "v_d1",
        "v_d2",
        "v_joint",
        "covariance",
        "t_joint",
        "rank",
        "lambda",
    ]);
    table.push(vec![
        num(u.rate(r1)),
        num(u.var(r.v_d1)),
        num(u.var(r.v_d2)),
        num(u.var(r.v_joint)),
        num(u.var(r.matrix[0][1])),
        num(r.t_joint * s3),
        r.rank.to_string(),
        num(r.lambda),
    ]);
    let m = r.matrix.map(|row| row.map(|v| u.var(v)));
    let json = json!({
        "units": u.name(),
        "r1": u.rate(r1),
        "v_d1": u.var(r.v_d1),
        "v_d2": u.var(r.v_d2),
        "v_joint": u.var(r.v_joint),
        "matrix": m,
        "t_joint": r.t_joint * s3,
        "rank": r.rank,
        "min_eigenvalue": u.var(r.min_eigenvalue),
        "lambda": jnum(r.lambda),
        "rate_y": u.rate(r.rate_y),
        "rate_z": u.rate(r.rate_z),
        "sum_rate": u.rate(r.sum_rate),
        "tilted_y": jnums(&u.rates(&r.tilted_y)),
        "tilted_z": jnums(&u.rates(&r.tilted_z)),
        "tilted_yz": jnums(&u.rates(&r.tilted_yz)),
    });
    Ok(Report { json, table })
}

fn region_report(b: &RegionBoundary, extra: Value, u: Units) -> Report {
    let mut table = Table::new(&["L1", "L2"]);
    for &(a, c) in &b.points {
        table.push_nums(&[u.rate(a), u.rate(c)]);
    }
    let closed = serde_json::to_value(&b.closed_form).unwrap_or(Value::Null);
    let closed = scale_closed_form(closed, u);
    let pts: Vec<Value> = b
        .points
        .iter()
        .map(|&(a, c)| json!([jnum(u.rate(a)), jnum(u.rate(c))]))
        .collect();
    let mut json = json!({ "units": u.name(), "closed_form": closed, "points": pts });
    if let (Value::Object(m), Value::Object(e)) = (&mut json, extra) {
        m.extend(e);
    }
    Report { json, table }
}

fn scale_closed_form(mut v: Value, u: Units) -> Value {
    if let Value::Object(m) = &mut v {
        for key in ["c", "corner"] {
            if let Some(x) = m.get(key).and_then(Value::as_f64) {
                m.insert(key.into(), jnum(u.rate(x)));
            }
        }
    }
    v
}

pub fn region(
    inst: &SourceInstance,
    r1: f64,
    case: RegionCase,
    eps: f64,
    u: Units,
) -> CmdResult<Report> {
    let rep = lib(dispersion_report(inst, r1))?;
    let q = lib(RegionQuery::new(case, eps, &rep))?;
    let b = lib(second_order_region(&q, None))?;
    Ok(region_report(
        &b,
        json!({ "case": case, "epsilon": eps, "rank": rep.rank, "r1": u.rate(r1) }),
        u,
    ))
}

pub fn mdc(
    inst: &SourceInstance,
    r1: f64,
    case: RegionCase,
    t1: f64,
    t2: f64,
) -> CmdResult<Report> {
    let rep = lib(dispersion_report(inst, r1))?;
    let q = lib(MdcQuery::new(t1, t2, &rep))?;
    let nu = lib(mdc_constant(&q, case))?;
    let mut table = Table::new(&["theta1", "theta2", "nu"]);
    table.push_nums(&[t1, t2, nu]);
    Ok(Report {
        json: json!({ "case": case, "theta1": t1, "theta2": t2, "nu": nu }),
        table,
    })
}

/// `ε` predicted by the second-order expansion at `(L₁, L₂)`.
pub fn gaussian_approx(
    rep: &DispersionReport,
    case: RegionCase,
    l1: f64,
    l2: f64,
) -> CmdResult<f64> {
    match case {
        RegionCase::Ii => Ok(q_func(l1 / rep.v_d1.sqrt())),
        RegionCase::I => Ok(q_func((rep.lambda * l1 + l2) / rep.v_joint.sqrt())),
        RegionCase::Iii => {
            if !rep.lambda.is_finite() {
                return Err(
                    "second-order approximation needs a finite multiplier at this rate".into(),
                );
            }
            if rep.rank == 1 && rep.lambda == 0.0 {
                let v = rep.v_d1.max(rep.v_joint);
                return Ok(1.0 - phi_cdf(l1.min(l2) / v.sqrt()));
            }
            Ok(1.0 - lib(bivariate_psi(l1, rep.lambda * l1 + l2, &rep.matrix))?)
        }
    }
}

pub struct BoundsArgs {
    pub n: u64,
    pub log_m1: f64,
    pub log_m1m2: f64,
    pub mode: SweepMode,
    pub r1: Option<f64>,
    pub case: RegionCase,
}

pub fn bounds(inst: &SourceInstance, a: &BoundsArgs, u: Units) -> CmdResult<Report> {
    let cache = TypeCache::new();
    let cfg = lib(TypeSweepConfig::new(
        inst, a.n, a.log_m1, a.log_m1m2, a.mode,
    ))?;
    let ach = lib(dms_achievability_bound_cached(inst, &cfg, &cache))?;
    let conv = lib(dms_converse_bound_cached(
        inst, a.n, a.log_m1, a.log_m1m2, a.mode, &cache,
    ))?;
    let r1_star = first_rate(inst, a.r1, 0.0)?;
    let cp = lib(CodeParams::half_log(a.n, a.log_m1, a.log_m1m2))?;
    let one_shot = match a.mode {
        SweepMode::Exact => one_shot_converse(&lib(build_spectrum(inst, r1_star, a.n))?, &cp),
        SweepMode::MonteCarlo { trials, seed } => lib(one_shot_converse_mc(
            &lib(TiltedSampler::new(inst, r1_star))?,
            &cp,
            trials,
            seed,
        ))?,
    };
    let rep = lib(dispersion_report(inst, r1_star))?;
    let nf = a.n as f64;
    let l1 = (a.log_m1 - nf * r1_star) / nf.sqrt();
    let l2 = (a.log_m1m2 - nf * rep.sum_rate) / nf.sqrt();
    let ga = gaussian_approx(&rep, a.case, l1, l2).ok();
    let mut table = Table::new(&[
        "n",
        "logM1",
        "logM1M2",
        "achievability",
        "converse",
        "one_shot",
        "gaussian_approx",
    ]);
    table.push(vec![
        a.n.to_string(),
        num(a.log_m1),
        num(a.log_m1m2),
        num(ach.bound.value),
        num(conv.bound.value),
        num(one_shot.value),
        ga.map(num).unwrap_or_else(|| "nan".into()),
    ]);
    let json = json!({
        "achievability": ach.bound.value,
        "converse": conv.bound.value,
        "one_shot": one_shot.value,
        "gaussian_approx": ga,
        "diagnostics": {
            "units": u.name(),
            "achievability_raw": ach.bound.raw,
            "achievability_std_error": ach.bound.std_error,
            "converse_raw": conv.bound.raw,
            "converse_std_error": conv.bound.std_error,
            "one_shot_raw": one_shot.raw,
            "one_shot_std_error": one_shot.std_error,
            "achievability_rates": [u.rate(ach.r1n), u.rate(ach.r2n)],
            "converse_rates": [u.rate(conv.r1n), u.rate(conv.r2n)],
            "types": ach.types,
            "skipped_types": ach.skipped + conv.skipped,
            "reference_rates": [u.rate(r1_star), u.rate(rep.sum_rate)],
            "second_order": [u.rate(l1), u.rate(l2)],
        },
    });
    Ok(Report { json, table })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GaussianQuery {
    Rd,
    Region,
    Mdc,
    Bounds,
}

pub struct GaussianArgs {
    pub query: GaussianQuery,
    pub case: RegionCase,
    pub epsilon: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub n: Option<u64>,
    pub log_m1: Option<f64>,
    pub log_m1m2: Option<f64>,
    pub xi: Option<f64>,
    pub delta: Option<f64>,
}

pub fn gaussian(g: &GaussianInstance, a: &GaussianArgs, u: Units) -> CmdResult<Report> {
    match a.query {
        GaussianQuery::Rd => {
            let rd = gaussian_rd(g);
            let mut table = Table::new(&["decoder", "level", "rate", "dispersion"]);
            table.push(vec![
                "1".into(),
                num(g.d1),
                num(u.rate(rd.rate_y)),
                num(u.var(rd.dispersion_y())),
            ]);
            table.push(vec![
                "2".into(),
                num(g.d2),
                num(u.rate(rd.rate_z)),
                num(u.var(rd.dispersion_z())),
            ]);
            let json = json!({
                "units": u.name(),
                "rate_y": u.rate(rd.rate_y),
                "rate_z": u.rate(rd.rate_z),
                "dispersion_y": u.var(rd.dispersion_y()),
                "dispersion_z": u.var(rd.dispersion_z()),
            });
            Ok(Report { json, table })
        }
        GaussianQuery::Region => {
            let b = lib(gaussian_region(g, a.case, a.epsilon))?;
            Ok(region_report(
                &b,
                json!({ "case": a.case, "epsilon": a.epsilon }),
                u,
            ))
        }
        GaussianQuery::Mdc => {
            lib(g.check_regime())?;
            let nu = lib(gaussian_mdc(a.theta1, a.theta2, a.case))?;
            let mut table = Table::new(&["theta1", "theta2", "nu"]);
            table.push_nums(&[a.theta1, a.theta2, nu]);
            Ok(Report {
                json: json!({ "case": a.case, "theta1": a.theta1, "theta2": a.theta2, "nu": nu }),
                table,
            })
        }
        GaussianQuery::Bounds => {
            let n = a.n.ok_or("--n is required")?;
            let m1 = a.log_m1.ok_or("--logM1 is required")?;
            let m12 = a.log_m1m2.ok_or("--logM1M2 is required")?;
            let preset = lib(GaussianTypePartition::preset(n))?;
            let (xi, delta) = (a.xi.unwrap_or(preset.xi), a.delta.unwrap_or(preset.delta));
            let ach = lib(gaussian_achievability_bound(g, n, m1, m12, xi, delta))?;
            let cp = lib(CodeParams::half_log(n, m1, m12))?;
            let os = lib(gaussian_one_shot_converse(g, &cp))?;
            let rd = gaussian_rd(g);
            let nf = n as f64;
            let (l1, l2) = (
                (m1 - nf * rd.rate_y) / nf.sqrt(),
                (m12 - nf * rd.rate_z) / nf.sqrt(),
            );
            let ga = match a.case {
                RegionCase::I => q_func(l2 / 0.5f64.sqrt()),
                RegionCase::Ii => q_func(l1 / 0.5f64.sqrt()),
                RegionCase::Iii => q_func(l1.min(l2) / 0.5f64.sqrt()),
            };
            let mut table = Table::new(&[
                "n",
                "logM1",
                "logM1M2",
                "achievability",
                "one_shot",
                "gaussian_approx",
            ]);
            table.push(vec![
                n.to_string(),
                num(m1),
                num(m12),
                num(ach.bound.value),
                num(os.value),
                num(ga),
            ]);
            let json = json!({
                "achievability": ach.bound.value,
                "converse": Value::Null,
                "one_shot": os.value,
                "gaussian_approx": ga,
                "diagnostics": {
                    "units": u.name(),
                    "achievability_raw": ach.bound.raw,
                    "one_shot_raw": os.raw,
                    "vacuous": ach.vacuous,
                    "types": ach.k,
                    "xi": xi,
                    "delta": delta,
                    "achievability_rates": [u.rate(ach.r1n), u.rate(ach.r2n)],
                    "second_order": [u.rate(l1), u.rate(l2)],
                },
            });
            Ok(Report { json, table })
        }
    }
}

/// `(D, V(D))` on `points` interior grid points of `(0, dmax)`.
pub fn figure1(
    px: &Pmf,
    d: &DistortionMatrix,
    points: usize,
    dmax: f64,
    u: Units,
) -> CmdResult<Report> {
    let mut table = Table::new(&["D", "V"]);
    let mut rows = Vec::new();
    for i in 1..=points {
        let level = dmax * i as f64 / (points + 1) as f64;
        let v = u.var(lib(rate_dispersion(px, d, level))?);
        table.push_nums(&[level, v]);
        rows.push(json!([level, v]));
    }
    Ok(Report {
        json: json!({ "units": u.name(), "points": rows }),
        table,
    })
}

pub const FIGURE2_LEVELS: [f64; 3] = [0.5, 0.55, 0.6];

/// Second-order boundaries at `D₂ = 0.3`, `ε = 0.005` for each `D₁`.
pub fn figure2(base: &SourceInstance, u: Units) -> CmdResult<Vec<(f64, Report)>> {
    let mut out = Vec::new();
    for d1 in FIGURE2_LEVELS {
        let inst = lib(base.with_levels(d1, 0.3))?;
        let r1 = first_rate(&inst, None, 0.0)?;
        let rep = lib(dispersion_report(&inst, r1))?;
        let q = lib(RegionQuery::new(RegionCase::Iii, 0.005, &rep))?;
        let b = lib(second_order_region(&q, None))?;
        out.push((
            d1,
            region_report(
                &b,
                json!({ "D1": d1, "D2": 0.3, "epsilon": 0.005, "rank": rep.rank }),
                u,
            ),
        ));
    }
    Ok(out)
}

pub fn write_figure2(
    reports: &[(f64, Report)],
    format: Format,
    dir: &Path,
) -> CmdResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut written = Vec::new();
    match format {
        Format::Csv => {
            for (d1, r) in reports {
                let p = dir.join(format!("figure2_D1_{d1:.2}.csv"));
                std::fs::write(&p, r.table.render()?)
                    .map_err(|e| format!("{}: {e}", p.display()))?;
                written.push(p);
            }
        }
        Format::Json => {
            let all: Vec<&Value> = reports.iter().map(|(_, r)| &r.json).collect();
            let p = dir.join("figure2.json");
            let text = serde_json::to_string_pretty(&all).map_err(|e| e.to_string())? + "\n";
            std::fs::write(&p, text).map_err(|e| format!("{}: {e}", p.display()))?;
            written.push(p);
        }
    }
    Ok(written)
}
