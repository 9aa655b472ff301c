//! Joint source, distortion metric, test channel and the single-letter
//! operating point `(R*, D*, Δ*)` they induce.
//!
//! Pairs `(x, y)` are flattened as `x * |Y| + y`. Information quantities are
//! reported in base-`q` units where `q` is the reconstruction alphabet size.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{PrimeModulus, Symbol};
use crate::info::entropy_nats;

/// Normalization tolerance for every probability vector the crate accepts.
pub const PROB_TOL: f64 = 1e-12;

fn check_pmf(p: &mut [f64], what: &str) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Invalid(format!("{what}: entry {v} is negative or not finite")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::NotNormalized(format!("{what} sums to {s}")));
    }
    p.iter_mut().for_each(|v| *v /= s);
    Ok(())
}

/// Memoryless joint source `Q(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSource {
    nx: usize,
    ny: usize,
    pmf: Vec<f64>,
}

impl JointSource {
    /// `rows[x][y] = Q(x, y)`.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        if nx == 0 || ny == 0 || rows.iter().any(|r| r.len() != ny) {
            return Err(Error::Dimension("source matrix must be rectangular and non-empty".into()));
        }
        let mut pmf: Vec<f64> = rows.into_iter().flatten().collect();
        check_pmf(&mut pmf, "source pmf")?;
        Ok(JointSource { nx, ny, pmf })
    }

    /// Doubly symmetric binary source: `X` uniform, `Y = X ⊕ Bern(p)`.
    pub fn dsbs(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Invalid(format!("crossover {p} outside [0, 1]")));
        }
        Self::new(vec![vec![0.5 * (1.0 - p), 0.5 * p], vec![0.5 * p, 0.5 * (1.0 - p)]])
    }

    /// `X` uniform; `Y = X` when `X = 0`, otherwise `Y` flips to 0 with
    /// probability `a`.
    pub fn z_channel(a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Invalid(format!("flip probability {a} outside [0, 1]")));
        }
        Self::new(vec![vec![0.5, 0.0], vec![0.5 * a, 0.5 * (1.0 - a)]])
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn num_pairs(&self) -> usize {
        self.nx * self.ny
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.pmf[x * self.ny + y]
    }

    /// Flattened pmf, indexed by pair.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn pair(&self, idx: usize) -> (usize, usize) {
        (idx / self.ny, idx % self.ny)
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.nx).map(|x| (0..self.ny).map(|y| self.prob(x, y)).sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.ny).map(|y| (0..self.nx).map(|x| self.prob(x, y)).sum()).collect()
    }

    /// `H(Y)` in base `q`.
    pub fn entropy_y(&self, q: usize) -> f64 {
        entropy_nats(&self.marginal_y()) / (q as f64).ln()
    }

    /// `H(X)` in base `q`.
    pub fn entropy_x(&self, q: usize) -> f64 {
        entropy_nats(&self.marginal_x()) / (q as f64).ln()
    }

    /// `H(Y|X)` in base `q`.
    pub fn entropy_y_given_x(&self, q: usize) -> f64 {
        (entropy_nats(&self.pmf) - entropy_nats(&self.marginal_x())) / (q as f64).ln()
    }

    /// i.i.d. draws of `(x^n, y^n)`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<Symbol>, Vec<Symbol>) {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let (x, y) = self.pair(crate::rng::sample_index(rng, &self.pmf));
            xs.push(x as Symbol);
            ys.push(y as Symbol);
        }
        (xs, ys)
    }
}

/// i.i.d. sampling of the source; deterministic given the generator state.
pub fn sample_source<R: Rng + ?Sized>(
    src: &JointSource,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Symbol>, Vec<Symbol>)> {
    if n == 0 {
        return Err(Error::Invalid("sample length must be at least 1".into()));
    }
    Ok(src.sample(n, rng))
}

/// Bounded distortion `d(x, x̂) ∈ [0, d_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionMetric {
    nx: usize,
    q: usize,
    values: Vec<f64>,
    d_max: f64,
}

impl DistortionMetric {
    /// `rows[x][x̂]`; `d_max` is the largest entry.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nx = rows.len();
        let q = rows.first().map_or(0, Vec::len);
        if nx == 0 || q == 0 || rows.iter().any(|r| r.len() != q) {
            return Err(Error::Dimension("distortion matrix must be rectangular and non-empty".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid("distortion entries must be finite and non-negative".into()));
        }
        let d_max = values.iter().cloned().fold(0.0, f64::max);
        Ok(DistortionMetric { nx, q, values, d_max })
    }

    /// Hamming distortion between `|X|` source letters and `q` reconstructions.
    pub fn hamming(nx: usize, q: usize) -> Self {
        let rows = (0..nx)
            .map(|x| (0..q).map(|xh| if x == xh { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::new(rows).expect("hamming matrix is valid")
    }

    #[inline]
    pub fn get(&self, x: usize, xh: usize) -> f64 {
        self.values[x * self.q + xh]
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Per-letter average distortion between two sequences.
    pub fn average(&self, x: &[Symbol], xh: &[Symbol]) -> f64 {
        let total: f64 = x.iter().zip(xh).map(|(&a, &b)| self.get(a as usize, b as usize)).sum();
        total / x.len() as f64
    }

    /// The metric with reconstruction labels permuted: column `perm[a]` of
    /// the result is column `a` of `self`.
    pub fn relabeled(&self, perm: &[usize]) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for x in 0..self.nx {
            for a in 0..self.q {
                values[x * self.q + perm[a]] = self.get(x, a);
            }
        }
        DistortionMetric { values, ..self.clone() }
    }
}

/// Forward test channel `P(x̂ | x, y)`, one row per pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestChannel {
    q: usize,
    rows: Vec<Vec<f64>>,
}

impl TestChannel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let q = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || q < 2 || rows.iter().any(|r| r.len() != q) {
            return Err(Error::Dimension("channel rows must all have length q >= 2".into()));
        }
        PrimeModulus::new(q as u32)?;
        let mut rows = rows;
        for (i, r) in rows.iter_mut().enumerate() {
            check_pmf(r, &format!("channel row {i}"))?;
        }
        Ok(TestChannel { q, rows })
    }

    /// `X̂ = X ⊕ Bern(p)` independent of `Y`; binary `X` only.
    pub fn bsc(src: &JointSource, p: f64) -> Result<Self> {
        if src.nx() != 2 {
            return Err(Error::Dimension("bsc test channel needs a binary X".into()));
        }
        let rows = (0..src.num_pairs())
            .map(|i| {
                let (x, _) = src.pair(i);
                if x == 0 {
                    vec![1.0 - p, p]
                } else {
                    vec![p, 1.0 - p]
                }
            })
            .collect();
        Self::new(rows)
    }

    /// `X̂ = X` deterministically (needs `|X| <= q`).
    pub fn identity(src: &JointSource, q: usize) -> Result<Self> {
        if src.nx() > q {
            return Err(Error::Dimension("identity channel needs |X| <= q".into()));
        }
        let rows = (0..src.num_pairs())
            .map(|i| {
                let (x, _) = src.pair(i);
                (0..q).map(|a| if a == x { 1.0 } else { 0.0 }).collect()
            })
            .collect();
        Self::new(rows)
    }

    /// Every pair maps to the fixed distribution `row`.
    pub fn independent(src: &JointSource, row: Vec<f64>) -> Result<Self> {
        Self::new(vec![row; src.num_pairs()])
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, pair: usize) -> &[f64] {
        &self.rows[pair]
    }

    /// Channel with reconstruction labels permuted (`a` becomes `perm[a]`).
    pub fn relabeled(&self, perm: &[usize]) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut out = vec![0.0; self.q];
                for (a, &p) in r.iter().enumerate() {
                    out[perm[a]] = p;
                }
                out
            })
            .collect();
        TestChannel { q: self.q, rows }
    }
}

/// `(R*, D*, Δ*)` in base-`q` units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub rate: f64,
    pub distortion: f64,
    pub equivocation: f64,
}

/// The single-letter joint `P(x, y, x̂) = Q(x, y) P(x̂ | x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLaw {
    pub src: JointSource,
    pub channel: TestChannel,
    q: PrimeModulus,
    joint: Vec<f64>,
    prior: Vec<f64>,
}

impl JointLaw {
    pub fn new(src: &JointSource, channel: &TestChannel) -> Result<Self> {
        if channel.rows.len() != src.num_pairs() {
            return Err(Error::Dimension(format!(
                "channel has {} rows but the source has {} pairs",
                channel.rows.len(),
                src.num_pairs()
            )));
        }
        let q = PrimeModulus::new(channel.q as u32)?;
        let qs = channel.q;
        let mut joint = vec![0.0; src.num_pairs() * qs];
        let mut prior = vec![0.0; qs];
        for (pair, &pq) in src.pmf().iter().enumerate() {
            for a in 0..qs {
                let v = pq * channel.rows[pair][a];
                joint[pair * qs + a] = v;
                prior[a] += v;
            }
        }
        Ok(JointLaw { src: src.clone(), channel: channel.clone(), q, joint, prior })
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.q
    }

    pub fn q(&self) -> usize {
        self.q.size()
    }

    /// Reconstruction prior `P(x̂)`.
    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// `P(x, y, x̂)` flattened as `pair * q + x̂`.
    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    /// Forward conditional `P(x̂ | x, y)` for a pair.
    pub fn forward(&self, pair: usize) -> &[f64] {
        self.channel.row(pair)
    }
}

fn ln_q(q: usize) -> f64 {
    (q as f64).ln()
}

/// Evaluate `R* = I(XY; X̂)`, `D* = E d(X, X̂)`, `Δ* = H(Y | X̂)` by direct
/// summation over the single-letter joint.
pub fn target_point(src: &JointSource, ch: &TestChannel, d: &DistortionMetric) -> Result<OperatingPoint> {
    if d.nx() != src.nx() || d.q() != ch.q() {
        return Err(Error::Dimension(format!(
            "distortion is {}x{} but source/channel need {}x{}",
            d.nx(),
            d.q(),
            src.nx(),
            ch.q()
        )));
    }
    let law = JointLaw::new(src, ch)?;
    Ok(law.operating_point(d))
}

impl JointLaw {
    /// [`target_point`] for an already-validated law.
    pub fn operating_point(&self, d: &DistortionMetric) -> OperatingPoint {
        let q = self.q();
        let ny = self.src.ny();
        let mut distortion = 0.0;
        let mut y_xh = vec![0.0; ny * q];
        for (pair, row) in self.joint.chunks(q).enumerate() {
            let (x, y) = self.src.pair(pair);
            for (a, &p) in row.iter().enumerate() {
                distortion += p * d.get(x, a);
                y_xh[y * q + a] += p;
            }
        }
        let h_xy = entropy_nats(self.src.pmf());
        let h_xh = entropy_nats(&self.prior);
        let h_all = entropy_nats(&self.joint);
        let h_y_xh = entropy_nats(&y_xh);
        // X̂ independent of (X, Y) exactly: all supported rows coincide
        let mut supported = (0..self.src.num_pairs()).filter(|&p| self.src.pmf()[p] > 0.0);
        let first = supported.next().map(|p| self.channel.row(p));
        let independent = supported.all(|p| Some(self.channel.row(p)) == first);
        let rate = if independent { 0.0 } else { ((h_xy + h_xh - h_all) / ln_q(q)).max(0.0) };
        OperatingPoint {
            rate,
            distortion,
            equivocation: (h_y_xh - h_xh) / ln_q(q),
        }
    }
}

/// Reverse channel `W(x, y | x̂) = P(x, y, x̂) / P(x̂)` with its prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseChannel {
    pub prior: Vec<f64>,
    /// `w[x̂][pair]`; rows of zero-prior symbols are all zero.
    pub w: Vec<Vec<f64>>,
    /// Reconstruction symbols with zero prior.
    pub degenerate: Vec<Symbol>,
}

impl ReverseChannel {
    /// Divide out the prior, flagging zero-prior symbols instead of failing.
    pub fn on_support(joint: &[f64], num_pairs: usize, q: usize) -> Result<Self> {
        if joint.len() != num_pairs * q {
            return Err(Error::Dimension("joint must have |X||Y|q entries".into()));
        }
        let mut j = joint.to_vec();
        check_pmf(&mut j, "joint pmf")?;
        let mut prior = vec![0.0; q];
        for pair in 0..num_pairs {
            for a in 0..q {
                prior[a] += j[pair * q + a];
            }
        }
        let mut degenerate = Vec::new();
        let w = (0..q)
            .map(|a| {
                if prior[a] <= 0.0 {
                    degenerate.push(a as Symbol);
                    vec![0.0; num_pairs]
                } else {
                    (0..num_pairs).map(|pair| j[pair * q + a] / prior[a]).collect()
                }
            })
            .collect();
        Ok(ReverseChannel { prior, w, degenerate })
    }

    /// Re-multiply by the prior, recovering `P(x, y, x̂)`.
    pub fn to_joint(&self) -> Vec<f64> {
        let q = self.prior.len();
        let pairs = self.w.first().map_or(0, Vec::len);
        let mut out = vec![0.0; pairs * q];
        for a in 0..q {
            for pair in 0..pairs {
                out[pair * q + a] = self.prior[a] * self.w[a][pair];
            }
        }
        out
    }
}

/// Strict form of [`ReverseChannel::on_support`]: a zero-prior reconstruction
/// symbol is reported as [`Error::DegenerateSupport`].
pub fn test_channel_from_joint(joint: &[f64], num_pairs: usize, q: usize) -> Result<ReverseChannel> {
    let rc = ReverseChannel::on_support(joint, num_pairs, q)?;
    if let Some(&a) = rc.degenerate.first() {
        return Err(Error::DegenerateSupport(a));
    }
    Ok(rc)
}

/// Search for an involution `π` of the pair alphabet with
/// `W(·|1) = W(π(·)|0)`. Returns the witness as `perm[pair] = π(pair)`.
pub fn is_symmetric(w: &ReverseChannel) -> Result<Option<Vec<usize>>> {
    const TOL: f64 = 1e-9;
    if w.prior.len() != 2 {
        return Err(Error::Invalid("symmetry is only defined for binary reconstructions".into()));
    }
    let (w0, w1) = (&w.w[0], &w.w[1]);
    let m = w0.len();
    let close = |a: f64, b: f64| (a - b).abs() <= TOL;
    // a <-> b is admissible iff W(a|1) = W(b|0) and W(b|1) = W(a|0)
    let admissible = |a: usize, b: usize| close(w1[a], w0[b]) && close(w1[b], w0[a]);

    fn search(
        perm: &mut Vec<Option<usize>>,
        admissible: &dyn Fn(usize, usize) -> bool,
    ) -> bool {
        let Some(a) = perm.iter().position(Option::is_none) else {
            return true;
        };
        for b in a..perm.len() {
            if perm[b].is_some() || !admissible(a, b) {
                continue;
            }
            perm[a] = Some(b);
            perm[b] = Some(a);
            if search(perm, admissible) {
                return true;
            }
            perm[a] = None;
            perm[b] = None;
        }
        false
    }

    let mut perm = vec![None; m];
    if search(&mut perm, &admissible) {
        Ok(Some(perm.into_iter().map(|p| p.expect("complete")).collect()))
    } else {
        Ok(None)
    }
}
