//! Derandomizing the frozen symbols: exact `(D_n, Δ_n)` for every frozen
//! vector, then a single vector or a time-shared pair meeting a target.

use std::fmt::Write as _;

use serde::Serialize;

use crate::construction::PolarSpec;
use crate::error::{Error, Result};
use crate::gf::{self, Symbol};
use crate::oracle::{FrozenMode, Oracle};
use crate::par;
use crate::source::{DistortionMetric, JointLaw};

/// Default cap on `q^{|F|}`.
pub const DEFAULT_LIMIT: usize = 4096;

/// Slack allowed when testing quadrant membership.
pub const PLAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrozenPoint {
    pub frozen: Vec<Symbol>,
    /// Decoder-side distortion `E[d(X^n, X̂^n)] / n`.
    pub distortion: f64,
    /// `H(Y^n | U_I) / n` with this frozen vector.
    pub equivocation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeSharePlan {
    Single { point: FrozenPoint },
    /// Use `first` a fraction `alpha` of the time and `second` otherwise.
    Pair { first: FrozenPoint, second: FrozenPoint, alpha: f64 },
}

impl TimeSharePlan {
    /// `(D, Δ)` achieved by the plan.
    pub fn operating_point(&self) -> (f64, f64) {
        match self {
            TimeSharePlan::Single { point } => (point.distortion, point.equivocation),
            TimeSharePlan::Pair { first, second, alpha } => (
                alpha * first.distortion + (1.0 - alpha) * second.distortion,
                alpha * first.equivocation + (1.0 - alpha) * second.equivocation,
            ),
        }
    }

    /// Plan invariant against the target corner.
    pub fn meets(&self, d_target: f64, delta_target: f64) -> bool {
        let (d, e) = self.operating_point();
        d <= d_target + PLAN_TOL && e >= delta_target - PLAN_TOL
    }
}

/// Exact metrics for every frozen vector, in lexicographic order with the
/// smallest frozen index most significant.
pub fn evaluate_frozen_ensemble(law: &JointLaw, spec: &PolarSpec, d: &DistortionMetric, limit: usize) -> Result<Vec<FrozenPoint>> {
    let count = ensemble_size(spec, limit)?;
    let oracle = Oracle::run(law, spec, d)?;
    ensemble_from_oracle(&oracle, spec, count)
}

fn ensemble_size(spec: &PolarSpec, limit: usize) -> Result<usize> {
    let q = spec.q.size() as f64;
    let needed = q.powi(spec.frozen.len() as i32);
    if needed > limit as f64 {
        return Err(Error::GuardExceeded { needed, limit: limit as f64 });
    }
    Ok(needed as usize)
}

/// [`evaluate_frozen_ensemble`] reusing an oracle already run for `spec`.
pub fn evaluate_with_oracle(oracle: &Oracle, spec: &PolarSpec, limit: usize) -> Result<Vec<FrozenPoint>> {
    let count = ensemble_size(spec, limit)?;
    ensemble_from_oracle(oracle, spec, count)
}

fn ensemble_from_oracle(oracle: &Oracle, spec: &PolarSpec, count: usize) -> Result<Vec<FrozenPoint>> {
    let q = spec.q.size();
    let k = spec.frozen.len();
    par::map_range(count, |idx| {
        let mut frozen = vec![0; k];
        gf::digits_into(idx, q, &mut frozen);
        let mode = FrozenMode::Fixed(frozen.clone());
        Ok(FrozenPoint {
            distortion: oracle.distortion(&mode)?.pd_distortion,
            equivocation: oracle.equivocation(&mode)?,
            frozen,
        })
    })
    .into_iter()
    .collect()
}

fn in_quadrant(d: f64, e: f64, d_t: f64, e_t: f64) -> bool {
    d <= d_t + PLAN_TOL && e >= e_t - PLAN_TOL
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Indices of the convex hull in counter-clockwise order (monotone chain,
/// collinear points dropped).
pub fn convex_hull(pts: &[(f64, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| pts[a].0.total_cmp(&pts[b].0).then(pts[a].1.total_cmp(&pts[b].1)));
    idx.dedup_by(|a, b| pts[*a] == pts[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 { Box::new(idx.iter()) } else { Box::new(idx.iter().rev()) };
        for &i in iter {
            while hull.len() >= start + 2 && cross(pts[hull[hull.len() - 2]], pts[hull[hull.len() - 1]], pts[i]) <= 0.0 {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull
}

/// Feasible `α` range for `α a + (1-α) b <= t` (with `sign = 1`) or `>= t`
/// (`sign = -1`).
fn alpha_range(a: f64, b: f64, t: f64, sign: f64) -> (f64, f64) {
    let (a, b, t) = (sign * a, sign * b, sign * t + PLAN_TOL);
    let slope = a - b;
    if slope == 0.0 {
        return if b <= t { (0.0, 1.0) } else { (1.0, 0.0) };
    }
    let root = (t - b) / slope;
    if slope > 0.0 {
        (0.0, root.min(1.0))
    } else {
        (root.max(0.0), 1.0)
    }
}

/// Pick one frozen vector, or a pair and a sharing fraction, whose
/// `(D, Δ)` lies in `{D <= d_target, Δ >= delta_target}`.
pub fn select_plan(points: &[FrozenPoint], d_target: f64, delta_target: f64) -> Result<TimeSharePlan> {
    if points.is_empty() {
        return Err(Error::Invalid("no frozen points".into()));
    }
    let m = points.len() as f64;
    let avg_d = points.iter().map(|p| p.distortion).sum::<f64>() / m;
    let avg_e = points.iter().map(|p| p.equivocation).sum::<f64>() / m;
    if !in_quadrant(avg_d, avg_e, d_target, delta_target) {
        return Err(Error::Precondition(format!(
            "ensemble average (D = {avg_d}, Delta = {avg_e}) misses the target (D <= {d_target}, Delta >= {delta_target})"
        )));
    }
    let slack = |p: &FrozenPoint| (d_target - p.distortion).min(p.equivocation - delta_target);
    if let Some(best) = points
        .iter()
        .filter(|p| in_quadrant(p.distortion, p.equivocation, d_target, delta_target))
        .max_by(|a, b| slack(a).total_cmp(&slack(b)))
    {
        return Ok(TimeSharePlan::Single { point: best.clone() });
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.distortion, p.equivocation)).collect();
    let hull = convex_hull(&xy);
    if hull.len() < 2 {
        return Err(Error::Assertion("degenerate hull with its average outside the target".into()));
    }
    let edges: Vec<(usize, usize)> = if hull.len() == 2 {
        vec![(hull[0], hull[1])]
    } else {
        (0..hull.len()).map(|k| (hull[k], hull[(k + 1) % hull.len()])).collect()
    };
    for (a, b) in edges {
        let (pa, pb) = (&points[a], &points[b]);
        let (lo1, hi1) = alpha_range(pa.distortion, pb.distortion, d_target, 1.0);
        let (lo2, hi2) = alpha_range(pa.equivocation, pb.equivocation, delta_target, -1.0);
        let (lo, hi) = (lo1.max(lo2), hi1.min(hi2));
        if lo <= hi {
            let plan = TimeSharePlan::Pair { first: pa.clone(), second: pb.clone(), alpha: lo };
            if !plan.meets(d_target, delta_target) {
                return Err(Error::Assertion("time-sharing plan misses its target".into()));
            }
            return Ok(plan);
        }
    }
    Err(Error::Assertion("no hull edge reaches the target".into()))
}

/// CSV of the ensemble: `frozen,D,Delta` with the frozen vector as digits.
pub fn points_csv(points: &[FrozenPoint]) -> String {
    let mut s = String::from("frozen,D,Delta\n");
    for p in points {
        let digits: String = p.frozen.iter().map(|v| char::from_digit(*v, 36).unwrap_or('?')).collect();
        let _ = writeln!(s, "{digits},{:?},{:?}", p.distortion, p.equivocation);
    }
    s
}
