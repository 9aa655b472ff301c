use std::fmt::Write as _;
use std::path::Path;

use privpolar::codec::{run_trials, FrozenPolicy};
use privpolar::construction::{construct_sets, spectrum_csv, PolarSpec};
use privpolar::oracle::{FrozenMode, Oracle};
use privpolar::region::{min_rate_at, sweep_region_with, RegionFrontier, RegionOptions};
use privpolar::source::{target_point, JointLaw, TestChannel};
use privpolar::timeshare::{convex_hull, evaluate_frozen_ensemble, select_plan};
use privpolar::Error;
use serde_json::{json, Value};

use crate::config::{ChannelSpec, RunConfig};
use crate::error::CliError;

/// Files produced by a command, written only after everything succeeded.
pub struct Outputs {
    pub files: Vec<(String, String)>,
    pub summary: String,
}

fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn region_options(cfg: &RunConfig) -> RegionOptions {
    RegionOptions { grid_res: cfg.grid_res, refine_iters: cfg.refine_iters, ..RegionOptions::default() }
}

fn channel(cfg: &RunConfig) -> Result<TestChannel, CliError> {
    let spec = cfg.channel.as_ref().ok_or_else(|| CliError::Usage("this command needs 'channel' in the config".into()))?;
    let ch = match spec {
        ChannelSpec::Bsc(p) => TestChannel::bsc(&cfg.source, *p)?,
        ChannelSpec::Explicit(rows) => TestChannel::new(rows.clone())?,
        ChannelSpec::Region { d_max, delta_min } => {
            let frontier = sweep_region_with(&cfg.source, &cfg.metric, &region_options(cfg))?;
            min_rate_at(&cfg.source, &cfg.metric, *d_max, *delta_min, &frontier)?.channel
        }
    };
    if ch.q() != cfg.q as usize || cfg.metric.q() != cfg.q as usize {
        return Err(Error::Dimension(format!("q = {} but the channel has {} and the metric {} columns", cfg.q, ch.q(), cfg.metric.q())).into());
    }
    Ok(ch)
}

fn law(cfg: &RunConfig) -> Result<JointLaw, CliError> {
    Ok(JointLaw::new(&cfg.source, &channel(cfg)?)?)
}

fn spec_for(cfg: &RunConfig, law: &JointLaw, spec_path: Option<&Path>) -> Result<PolarSpec, CliError> {
    let spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Read { path: p.to_path_buf(), source })?;
            PolarSpec::from_text(&text)?
        }
        None => construct_sets(law, cfg.n, cfg.beta, cfg.mode, cfg.samples, cfg.seed)?,
    };
    if spec.q != law.modulus() {
        return Err(Error::Dimension(format!("spec has q = {}, the config q = {}", spec.q.get(), law.q())).into());
    }
    Ok(spec)
}

/// Recompute every frontier row from its channel.
fn self_check(cfg: &RunConfig, frontier: &RegionFrontier) -> Result<(), CliError> {
    for p in &frontier.points {
        let again = target_point(&cfg.source, &p.channel, &cfg.metric)?;
        let dev = (again.rate - p.op.rate).abs().max((again.distortion - p.op.distortion).abs()).max((again.equivocation - p.op.equivocation).abs());
        if dev > 1e-12 {
            return Err(Error::Assertion(format!("frontier row deviates by {dev:e} on re-evaluation")).into());
        }
    }
    Ok(())
}

pub fn region(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let frontier = sweep_region_with(&cfg.source, &cfg.metric, &region_options(cfg))?;
    self_check(cfg, &frontier)?;
    let mut files = vec![("frontier.csv".to_string(), frontier.to_csv(&cfg.source))];
    let mut summary = format!("{} frontier points from {} grid channels\n", frontier.points.len(), frontier.grid_size);
    if let Some(ChannelSpec::Region { d_max, delta_min }) = cfg.channel {
        let best = min_rate_at(&cfg.source, &cfg.metric, d_max, delta_min, &frontier)?;
        let _ = writeln!(summary, "query D <= {d_max}, Delta >= {delta_min}: R = {:.6}", best.op.rate);
        files.push(("query.json".into(), to_pretty(&json!({ "d_max": d_max, "delta_min": delta_min, "point": best }))));
    }
    Ok(Outputs { files, summary })
}

pub fn construct(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let law = law(cfg)?;
    let mut spec = construct_sets(&law, cfg.n, cfg.beta, cfg.mode, cfg.samples, cfg.seed)?;
    if let FrozenPolicy::Fixed(v) = &cfg.frozen {
        spec = spec.with_frozen_values(v.clone())?;
    }
    let summary = format!(
        "n = {}: |I| = {}, |F| = {}, |D| = {}, rate {:.6}\n",
        spec.n,
        spec.info.len(),
        spec.frozen.len(),
        spec.computable.len(),
        spec.rate()
    );
    Ok(Outputs { files: vec![("spec.polar".into(), spec.to_text()), ("spectrum.csv".into(), spectrum_csv(&spec))], summary })
}

pub fn simulate(cfg: &RunConfig, spec_path: Option<&Path>) -> Result<Outputs, CliError> {
    let law = law(cfg)?;
    let spec = spec_for(cfg, &law, spec_path)?;
    let report = run_trials(&spec, &law, &cfg.metric, &cfg.frozen, cfg.trials, cfg.seed, true)?;
    let mut files = vec![("report.json".to_string(), report.to_json())];
    if let Some(csv) = report.records_csv() {
        files.push(("trials.csv".into(), csv));
    }
    Ok(Outputs { files, summary: report.to_text() })
}

struct Check {
    name: &'static str,
    lhs: f64,
    rhs: f64,
}

pub fn oracle(cfg: &RunConfig, spec_path: Option<&Path>) -> Result<Outputs, CliError> {
    let law = law(cfg)?;
    let spec = spec_for(cfg, &law, spec_path)?;
    let o = Oracle::run(&law, &spec, &cfg.metric)?;
    let avg = FrozenMode::Averaged;
    let dist = o.distortion(&avg)?;
    let delta = o.equivocation(&avg)?;
    let h_pe = o.pe_conditional_entropy(&avg)?;
    let var = o.variational();
    let gaps = o.entropy_gaps();
    let target = law.operating_point(&cfg.metric);
    let d_max = cfg.metric.d_max();
    let tol = 1e-12;
    let mut checks = vec![
        Check { name: "H_Pe(Y|Xhat)/n <= Delta_n", lhs: h_pe, rhs: delta },
        Check { name: "P_e <= sum_D Z", lhs: dist.error_probability, rhs: dist.error_bound },
        Check { name: "||P - Pe|| <= pinsker bound", lhs: var.exact, rhs: var.pinsker_bound },
        Check { name: "||P - Pe|| <= entropy bound", lhs: var.exact, rhs: var.appendix_bound },
        Check { name: "||P - Pe|| <= Z bound", lhs: var.exact, rhs: var.z_bound },
        Check { name: "error part <= d_max P_e", lhs: dist.error_part, rhs: d_max * dist.error_probability },
        Check { name: "no-error part <= E_Pe[d]/n", lhs: dist.no_error_part, rhs: dist.pe_distortion },
        Check { name: "E_Pe[d]/n <= D* + d_max ||P - Pe||/2", lhs: dist.pe_distortion, rhs: target.distortion + d_max * var.exact / 2.0 },
        Check {
            name: "E_Pd[d]/n <= D* + d_max (P_e + ||P - Pe||/2)",
            lhs: dist.pd_distortion,
            rhs: target.distortion + d_max * (dist.error_probability + var.exact / 2.0),
        },
        Check { name: "|H(Y|Xhat) gap| <= joint + marginal gaps", lhs: gaps.conditional_gap, rhs: gaps.joint_gap + gaps.marginal_gap },
    ];
    if let Some(b) = gaps.continuity_bound {
        checks.push(Check { name: "joint entropy gap <= continuity bound", lhs: gaps.joint_gap, rhs: b });
    }
    let mut summary = String::new();
    let check_json: Vec<Value> = checks
        .iter()
        .map(|c| {
            let pass = c.lhs <= c.rhs + tol;
            let _ = writeln!(summary, "{:<48} {:>14.6e} <= {:<14.6e} {}", c.name, c.lhs, c.rhs, if pass { "PASS" } else { "FAIL" });
            json!({ "check": c.name, "lhs": c.lhs, "rhs": c.rhs, "pass": pass })
        })
        .collect();
    let all_pass = check_json.iter().all(|c| c["pass"] == true);
    let report = json!({
        "n": spec.n,
        "q": spec.q.get(),
        "info": spec.info,
        "frozen": spec.frozen,
        "computable": spec.computable,
        "rate": spec.rate(),
        "target": target,
        "distortion": {
            "pd": dist.pd_distortion,
            "pe": dist.pe_distortion,
            "target": dist.target_distortion,
            "no_error_part": dist.no_error_part,
            "error_part": dist.error_part,
        },
        "error_probability": dist.error_probability,
        "error_bound": dist.error_bound,
        "equivocation": delta,
        "pe_conditional_entropy": h_pe,
        "variational": {
            "exact": var.exact,
            "pinsker_bound": var.pinsker_bound,
            "entropy_bound": var.appendix_bound,
            "z_bound": var.z_bound,
        },
        "z_cond": (0..spec.n).map(|i| o.z_cond(i)).collect::<Vec<_>>(),
        "z_marg": (0..spec.n).map(|i| o.z_marg(i)).collect::<Vec<_>>(),
        "checks": check_json,
        "all_pass": all_pass,
    });
    let _ = writeln!(summary, "Delta_n = {delta:.6}, D_n = {:.6}, P_e = {:.6}", dist.pd_distortion, dist.error_probability);
    Ok(Outputs { files: vec![("oracle.json".into(), to_pretty(&report))], summary })
}

pub fn timeshare(cfg: &RunConfig, spec_path: Option<&Path>) -> Result<Outputs, CliError> {
    let law = law(cfg)?;
    let spec = spec_for(cfg, &law, spec_path)?;
    let pts = evaluate_frozen_ensemble(&law, &spec, &cfg.metric, cfg.limit)?;
    let target = law.operating_point(&cfg.metric);
    let (d_t, e_t) = (target.distortion + cfg.epsilon, target.equivocation - cfg.epsilon);
    let plan = select_plan(&pts, d_t, e_t)?;
    let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.distortion, p.equivocation)).collect();
    let hull = convex_hull(&xy);
    let mut csv = String::from("frozen,D,Delta,on_hull\n");
    for (i, p) in pts.iter().enumerate() {
        let digits: String = p.frozen.iter().map(|v| char::from_digit(*v, 36).unwrap_or('?')).collect();
        let _ = writeln!(csv, "{digits},{:?},{:?},{}", p.distortion, p.equivocation, u8::from(hull.contains(&i)));
    }
    let (d, e) = plan.operating_point();
    let out = json!({ "target": { "distortion": d_t, "equivocation": e_t, "epsilon": cfg.epsilon }, "plan": plan, "achieved": { "distortion": d, "equivocation": e } });
    let summary = format!("{} frozen vectors; plan achieves D = {d:.6} <= {d_t:.6}, Delta = {e:.6} >= {e_t:.6}\n", pts.len());
    Ok(Outputs { files: vec![("plan.json".into(), to_pretty(&out)), ("hull.csv".into(), csv)], summary })
}
