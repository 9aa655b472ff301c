//! Numerical frontier of the rate-distortion-equivocation region: an
//! exhaustive simplex grid over test channels, dominance pruning, and local
//! mass-transfer descent on rate.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::info::entropy_nats;
use crate::par;
use crate::source::{target_point, DistortionMetric, JointSource, OperatingPoint, TestChannel};

/// Tolerance used when comparing operating points.
pub const DOMINANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub op: OperatingPoint,
    pub channel: TestChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionFrontier {
    /// Sorted by rate, then distortion.
    pub points: Vec<FrontierPoint>,
    pub grid_res: usize,
    pub refine_iters: usize,
    /// Number of channels evaluated on the grid.
    pub grid_size: usize,
}

/// Sweep parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOptions {
    pub grid_res: usize,
    pub refine_iters: usize,
    /// Upper bound on `|X||Y|`.
    pub max_pairs: usize,
    /// Upper bound on the reconstruction alphabet.
    pub max_q: usize,
    /// Upper bound on the number of grid channels.
    pub max_grid_points: usize,
}

impl Default for RegionOptions {
    fn default() -> Self {
        RegionOptions { grid_res: 20, refine_iters: 12, max_pairs: 16, max_q: 5, max_grid_points: 4_000_000 }
    }
}

/// Allocation-free evaluation of the operating point for flattened rows.
struct Evaluator<'a> {
    src: &'a JointSource,
    d: &'a DistortionMetric,
    q: usize,
    h_xy: f64,
    ln_q: f64,
}

impl<'a> Evaluator<'a> {
    fn new(src: &'a JointSource, d: &'a DistortionMetric) -> Self {
        let q = d.q();
        Evaluator { src, d, q, h_xy: entropy_nats(src.pmf()), ln_q: (q as f64).ln() }
    }

    fn eval(&self, rows: &[f64], scratch: &mut Vec<f64>) -> OperatingPoint {
        let q = self.q;
        let ny = self.src.ny();
        let pmf = self.src.pmf();
        scratch.clear();
        scratch.resize(q + ny * q, 0.0);
        let (prior, y_xh) = scratch.split_at_mut(q);
        let mut distortion = 0.0;
        let mut h_all = 0.0;
        for (pair, &pq) in pmf.iter().enumerate() {
            let (x, y) = self.src.pair(pair);
            for a in 0..q {
                let v = pq * rows[pair * q + a];
                if v > 0.0 {
                    h_all -= v * v.ln();
                    distortion += v * self.d.get(x, a);
                    prior[a] += v;
                    y_xh[y * q + a] += v;
                }
            }
        }
        let h_xh = entropy_nats(&*prior);
        let h_y_xh = entropy_nats(&*y_xh);
        let mut supported = (0..pmf.len()).filter(|&p| pmf[p] > 0.0);
        let first = supported.next().unwrap_or(0);
        let row = |p: usize| &rows[p * q..(p + 1) * q];
        let independent = supported.all(|p| row(p) == row(first));
        let rate = if independent { 0.0 } else { ((self.h_xy + h_xh - h_all) / self.ln_q).max(0.0) };
        OperatingPoint { rate, distortion, equivocation: (h_y_xh - h_xh) / self.ln_q }
    }
}

/// All compositions of `res` into `q` parts, scaled to probability rows.
fn simplex_points(q: usize, res: usize) -> Vec<Vec<f64>> {
    fn rec(q: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == q - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(q, left - k, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(q, res, &mut Vec::with_capacity(q), &mut raw);
    raw.into_iter().map(|c| c.into_iter().map(|k| k as f64 / res as f64).collect()).collect()
}

/// `a` dominates `b`: no worse in every coordinate, up to the tolerance.
fn dominates(a: &OperatingPoint, b: &OperatingPoint) -> bool {
    a.rate <= b.rate + DOMINANCE_TOL
        && a.distortion <= b.distortion + DOMINANCE_TOL
        && a.equivocation >= b.equivocation - DOMINANCE_TOL
}

/// Keep the non-dominated candidates; of a set of near-equal points the one
/// sorting first survives.
fn prune<T>(mut cands: Vec<(OperatingPoint, T)>) -> Vec<(OperatingPoint, T)> {
    cands.sort_by(|a, b| {
        a.0.rate
            .total_cmp(&b.0.rate)
            .then(a.0.distortion.total_cmp(&b.0.distortion))
            .then(b.0.equivocation.total_cmp(&a.0.equivocation))
    });
    let mut kept: Vec<(OperatingPoint, T)> = Vec::new();
    for c in cands {
        if !kept.iter().rev().any(|k| dominates(&k.0, &c.0)) {
            kept.push(c);
        }
    }
    kept
}

fn check_dims(src: &JointSource, d: &DistortionMetric, opts: &RegionOptions) -> Result<()> {
    if d.nx() != src.nx() {
        return Err(Error::Dimension("distortion metric rows do not match |X|".into()));
    }
    if src.num_pairs() > opts.max_pairs {
        return Err(Error::Dimension(format!("|X||Y| = {} exceeds {}", src.num_pairs(), opts.max_pairs)));
    }
    if d.q() > opts.max_q {
        return Err(Error::Dimension(format!("q = {} exceeds {}", d.q(), opts.max_q)));
    }
    crate::gf::PrimeModulus::new(d.q() as u32)?;
    if opts.grid_res < 1 {
        return Err(Error::Invalid("grid resolution must be positive".into()));
    }
    Ok(())
}

/// Mass-transfer moves: `(pair, from, to, weight)` steps applied together.
type Move = Vec<(usize, usize, usize, f64)>;

fn build_moves(src: &JointSource, q: usize) -> Vec<Move> {
    let pmf = src.pmf();
    let live: Vec<usize> = (0..pmf.len()).filter(|&p| pmf[p] > 0.0).collect();
    let dirs: Vec<(usize, usize)> = (0..q).flat_map(|a| (0..q).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let mut moves: Vec<Move> = Vec::new();
    for &p in &live {
        for &(a, b) in &dirs {
            moves.push(vec![(p, a, b, 1.0)]);
        }
    }
    for (i, &p1) in live.iter().enumerate() {
        for &p2 in &live[i + 1..] {
            for &(a, b) in &dirs {
                for &(c, e) in &dirs {
                    moves.push(vec![(p1, a, b, 1.0), (p2, c, e, 1.0)]);
                    // same joint mass in both rows
                    moves.push(vec![(p1, a, b, 1.0), (p2, c, e, pmf[p1] / pmf[p2])]);
                }
            }
        }
    }
    moves
}

fn apply_move(rows: &[f64], q: usize, mv: &Move, step: f64, out: &mut Vec<f64>) -> bool {
    out.clear();
    out.extend_from_slice(rows);
    for &(p, a, b, w) in mv {
        let s = (step * w).min(out[p * q + a]);
        if s <= 0.0 {
            return false;
        }
        out[p * q + a] -= s;
        out[p * q + b] += s;
    }
    true
}

/// Descend on rate from `rows` while keeping `D <= d_max` and `Δ >= delta_min`.
/// Returns the rate after every step size, which is non-increasing.
fn refine(
    ev: &Evaluator,
    moves: &[Move],
    rows: &mut Vec<f64>,
    d_max: f64,
    delta_min: f64,
    iters: usize,
) -> (OperatingPoint, Vec<f64>) {
    let q = ev.q;
    let mut scratch = Vec::new();
    let mut cand = Vec::with_capacity(rows.len());
    let mut best_rows = Vec::with_capacity(rows.len());
    let mut cur = ev.eval(rows, &mut scratch);
    let mut trace = Vec::with_capacity(iters);
    for t in 1..=iters {
        let step = 0.5f64.powi(t as i32);
        for _ in 0..1000 {
            let mut best: Option<OperatingPoint> = None;
            for mv in moves {
                if !apply_move(rows, q, mv, step, &mut cand) {
                    continue;
                }
                let op = ev.eval(&cand, &mut scratch);
                let bound = best.map_or(cur.rate, |b| b.rate);
                if op.rate < bound - 1e-15 && op.distortion <= d_max && op.equivocation >= delta_min {
                    best = Some(op);
                    std::mem::swap(&mut best_rows, &mut cand);
                }
            }
            match best {
                Some(op) => {
                    cur = op;
                    std::mem::swap(rows, &mut best_rows);
                }
                None => break,
            }
        }
        trace.push(cur.rate);
    }
    (cur, trace)
}

fn to_channel(rows: &[f64], q: usize) -> Result<TestChannel> {
    TestChannel::new(rows.chunks(q).map(|r| r.to_vec()).collect())
}

fn finish(src: &JointSource, d: &DistortionMetric, rows: &[f64], q: usize) -> Result<FrontierPoint> {
    let channel = to_channel(rows, q)?;
    let op = target_point(src, &channel, d)?;
    Ok(FrontierPoint { op, channel })
}

/// [`sweep_region_with`] using default limits.
pub fn sweep_region(src: &JointSource, d: &DistortionMetric, grid_res: usize, refine_iters: usize) -> Result<RegionFrontier> {
    sweep_region_with(src, d, &RegionOptions { grid_res, refine_iters, ..RegionOptions::default() })
}

/// Evaluate every grid channel, keep the non-dominated operating points,
/// refine each kept channel at its own `(D, Δ)`, and prune again.
///
/// Rows of zero-probability pairs are pinned to the first reconstruction
/// symbol; they do not affect any coordinate.
pub fn sweep_region_with(src: &JointSource, d: &DistortionMetric, opts: &RegionOptions) -> Result<RegionFrontier> {
    check_dims(src, d, opts)?;
    let q = d.q();
    let simplex = simplex_points(q, opts.grid_res);
    let pmf = src.pmf();
    let per_row: Vec<usize> = pmf.iter().map(|&p| if p > 0.0 { simplex.len() } else { 1 }).collect();
    let total = per_row.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k)).unwrap_or(usize::MAX);
    if total > opts.max_grid_points {
        return Err(Error::GuardExceeded { needed: total as f64, limit: opts.max_grid_points as f64 });
    }
    let ev = Evaluator::new(src, d);
    let pin: Vec<f64> = (0..q).map(|a| if a == 0 { 1.0 } else { 0.0 }).collect();
    let fill = |mut idx: usize, rows: &mut Vec<f64>| {
        rows.resize(per_row.len() * q, 0.0);
        for (p, &k) in per_row.iter().enumerate().rev() {
            let r = if k == 1 { &pin } else { &simplex[idx % k] };
            rows[p * q..(p + 1) * q].copy_from_slice(r);
            idx /= k;
        }
    };
    const CHUNKS: usize = 64;
    let chunks = CHUNKS.min(total);
    let parts: Vec<Vec<(OperatingPoint, usize)>> = par::map_range(chunks, |c| {
        let lo = c * total / chunks;
        let hi = (c + 1) * total / chunks;
        let mut rows = Vec::new();
        let mut scratch = Vec::new();
        let cands = (lo..hi)
            .map(|i| {
                fill(i, &mut rows);
                (ev.eval(&rows, &mut scratch), i)
            })
            .collect();
        prune(cands)
    });
    let kept = prune(parts.into_iter().flatten().collect());
    let moves = build_moves(src, q);
    let refined: Vec<Result<(OperatingPoint, Vec<f64>)>> = par::map_range(kept.len(), |k| {
        let (op, i) = kept[k];
        let mut rows = Vec::new();
        fill(i, &mut rows);
        let (op2, trace) = refine(&ev, &moves, &mut rows, op.distortion, op.equivocation, opts.refine_iters);
        if trace.windows(2).any(|w| w[1] > w[0]) || op2.rate > op.rate {
            return Err(Error::Assertion("refinement increased the rate".into()));
        }
        Ok((op2, rows))
    });
    let refined: Vec<(OperatingPoint, Vec<f64>)> = refined.into_iter().collect::<Result<_>>()?;
    let final_pts = prune(refined);
    let points = final_pts.into_iter().map(|(_, rows)| finish(src, d, &rows, q)).collect::<Result<Vec<_>>>()?;
    Ok(RegionFrontier { points, grid_res: opts.grid_res, refine_iters: opts.refine_iters, grid_size: total })
}

/// Smallest-rate point with `D <= d_max` and `Δ >= delta_min`.
///
/// The best stored candidates are refined again at the query constraints, so
/// the answer can lie strictly inside the stored frontier.
pub fn min_rate_at(
    src: &JointSource,
    d: &DistortionMetric,
    d_max: f64,
    delta_min: f64,
    frontier: &RegionFrontier,
) -> Result<FrontierPoint> {
    let q = d.q();
    if d_max < 0.0 || delta_min > src.entropy_y(q) + 1e-12 {
        return Err(Error::Infeasible(format!("D_max = {d_max} and Delta_min = {delta_min} are outside the region")));
    }
    if frontier.points.iter().any(|p| p.channel.q() != q || p.channel.rows().len() != src.num_pairs()) {
        return Err(Error::Dimension("frontier was computed for a different source or metric".into()));
    }
    let mut feasible: Vec<&FrontierPoint> = frontier
        .points
        .iter()
        .filter(|p| p.op.distortion <= d_max + DOMINANCE_TOL && p.op.equivocation >= delta_min - DOMINANCE_TOL)
        .collect();
    if feasible.is_empty() {
        return Err(Error::NotFound("no frontier point meets the constraints".into()));
    }
    feasible.sort_by(|a, b| a.op.rate.total_cmp(&b.op.rate));
    let ev = Evaluator::new(src, d);
    let moves = build_moves(src, q);
    let iters = frontier.refine_iters.max(12);
    let starts: Vec<&FrontierPoint> = feasible.into_iter().take(8).collect();
    let results: Vec<(OperatingPoint, Vec<f64>)> = par::map_range(starts.len(), |k| {
        let mut rows: Vec<f64> = starts[k].channel.rows().concat();
        let dm = d_max.max(starts[k].op.distortion);
        let em = delta_min.min(starts[k].op.equivocation);
        let (op, _) = refine(&ev, &moves, &mut rows, dm, em, iters);
        (op, rows)
    });
    let (_, rows) = results
        .into_iter()
        .min_by(|a, b| a.0.rate.total_cmp(&b.0.rate))
        .expect("at least one start");
    finish(src, d, &rows, q)
}

impl RegionFrontier {
    /// CSV with header `R,D,Delta,p_x{x}_y{y}_xh{a},...`; channel entries
    /// follow pair order (`x` major) and reconstruction symbol.
    pub fn to_csv(&self, src: &JointSource) -> String {
        let mut s = String::from("R,D,Delta");
        let q = self.points.first().map_or(0, |p| p.channel.q());
        for pair in 0..src.num_pairs() {
            let (x, y) = src.pair(pair);
            for a in 0..q {
                let _ = write!(s, ",p_x{x}_y{y}_xh{a}");
            }
        }
        s.push('\n');
        for p in &self.points {
            let _ = write!(s, "{:?},{:?},{:?}", p.op.rate, p.op.distortion, p.op.equivocation);
            for r in p.channel.rows() {
                for v in r {
                    let _ = write!(s, ",{v:?}");
                }
            }
            s.push('\n');
        }
        s
    }
}
