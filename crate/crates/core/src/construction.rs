//! Successive-cancellation probability recursion over GF(q), Monte-Carlo
//! estimation of the source Bhattacharyya parameters, and selection of the
//! frozen (`F`), computable (`D`) and information (`I`) index sets.
//!
//! The recursion works on the natural-order transform `x̂ = u · G_n` used in
//! [`crate::gf`]. For a block `u = (a, b)` of length `m = 2h` the first half
//! of `x̂` equals `(a + b) · G_h` and the second half `b · G_h`, so
//! `a · G_h = x̂_left - x̂_right`. Deciding `a` therefore runs the recursion on
//! the "minus" combination of leaf pairs, and deciding `b` (given `a`) on the
//! "plus" combination.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{self, PrimeModulus, Symbol};
use crate::par;
use crate::rng;
use crate::source::JointLaw;

/// A normalized length-`q` weight vector with the log of the discarded scale.
///
/// An all-zero vector (log scale `-inf`) marks an impossible conditioning
/// path.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
    log_scale: f64,
}

impl WeightVector {
    /// Normalize `w`; an all-zero input yields the impossible marker.
    pub fn new(w: Vec<f64>) -> Self {
        let mut w = w;
        let s = normalize(&mut w);
        WeightVector { w, log_scale: s.ln() }
    }

    pub fn uniform(q: usize) -> Self {
        WeightVector { w: vec![1.0 / q as f64; q], log_scale: 0.0 }
    }

    pub fn probs(&self) -> &[f64] {
        &self.w
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn is_impossible(&self) -> bool {
        self.log_scale == f64::NEG_INFINITY
    }

    pub fn q(&self) -> usize {
        self.w.len()
    }

    /// Bhattacharyya value of the distribution, see [`bhattacharyya_of`].
    pub fn bhattacharyya(&self) -> f64 {
        bhattacharyya_of(&self.w)
    }

    /// Smallest symbol attaining the maximum weight.
    pub fn argmax(&self) -> Symbol {
        argmax(&self.w)
    }
}

fn normalize(w: &mut [f64]) -> f64 {
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|v| *v /= s);
    }
    s
}

/// Relative tolerance under which two weights count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Smallest symbol whose weight is within [`TIE_TOL`] (relative) of the
/// maximum.
pub fn argmax(w: &[f64]) -> Symbol {
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    w.iter().position(|&v| v >= max - TIE_TOL * max.abs()).unwrap_or(0) as Symbol
}

#[inline]
fn minus_into(a: &[f64], b: &[f64], out: &mut [f64], q: usize) -> f64 {
    for u1 in 0..q {
        let mut acc = 0.0;
        for u2 in 0..q {
            let s = if u1 + u2 >= q { u1 + u2 - q } else { u1 + u2 };
            acc += a[s] * b[u2];
        }
        out[u1] = acc;
    }
    normalize(out)
}

#[inline]
fn plus_into(a: &[f64], b: &[f64], u1: usize, out: &mut [f64], q: usize) -> f64 {
    for u2 in 0..q {
        let s = if u1 + u2 >= q { u1 + u2 - q } else { u1 + u2 };
        out[u2] = a[s] * b[u2];
    }
    normalize(out)
}

fn check_same_len(a: &WeightVector, b: &WeightVector) -> Result<usize> {
    if a.q() != b.q() {
        return Err(Error::Dimension(format!("weight lengths {} and {}", a.q(), b.q())));
    }
    Ok(a.q())
}

/// `out(u1) ∝ Σ_{u2} a(u1 + u2) b(u2)`.
pub fn sc_combine_minus(a: &WeightVector, b: &WeightVector) -> Result<WeightVector> {
    let q = check_same_len(a, b)?;
    let mut out = vec![0.0; q];
    let s = minus_into(&a.w, &b.w, &mut out, q);
    Ok(WeightVector { w: out, log_scale: s.ln() + a.log_scale + b.log_scale })
}

/// `out(u2) ∝ a(u1 + u2) b(u2)`; an all-zero product is an impossible path.
pub fn sc_combine_plus(a: &WeightVector, b: &WeightVector, u1: Symbol) -> Result<WeightVector> {
    let q = check_same_len(a, b)?;
    if u1 as usize >= q {
        return Err(Error::SymbolOutOfRange { symbol: u1, q: q as u32 });
    }
    let mut out = vec![0.0; q];
    let s = plus_into(&a.w, &b.w, u1 as usize, &mut out, q);
    if s <= 0.0 {
        return Err(Error::ImpossiblePath(0));
    }
    Ok(WeightVector { w: out, log_scale: s.ln() + a.log_scale + b.log_scale })
}

/// `((Σ √w)² - Σ w) / (q - 1)`, i.e. the normalized sum of `√(w_a w_a')`
/// over ordered pairs `a ≠ a'`, clamped to `[0, 1]`.
pub fn bhattacharyya_of(w: &[f64]) -> f64 {
    let q = w.len();
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let root: f64 = w.iter().map(|v| (v / total).sqrt()).sum();
    ((root * root - 1.0) / (q as f64 - 1.0)).clamp(0.0, 1.0)
}

/// Source Bhattacharyya parameter `Z(A|B)` of a joint pmf given as
/// `joint[a][b]`.
pub fn bhattacharyya(joint: &[Vec<f64>]) -> Result<f64> {
    let q = joint.len();
    if q < 2 {
        return Err(Error::Dimension("A needs at least two symbols".into()));
    }
    let nb = joint[0].len();
    if joint.iter().any(|r| r.len() != nb) {
        return Err(Error::Dimension("joint rows differ in length".into()));
    }
    let total: f64 = joint.iter().flatten().sum();
    if (total - 1.0).abs() > crate::source::PROB_TOL {
        return Err(Error::NotNormalized(format!("joint sums to {total}")));
    }
    let mut z = 0.0;
    for b in 0..nb {
        for a in 0..q {
            for a2 in 0..q {
                if a != a2 {
                    z += (joint[a][b] * joint[a2][b]).sqrt();
                }
            }
        }
    }
    Ok((z / (q as f64 - 1.0)).clamp(0.0, 1.0))
}

/// View of the per-lane weight vectors at one leaf of the recursion.
pub(crate) struct Leaf<'a> {
    data: &'a [f64],
    q: usize,
}

impl<'a> Leaf<'a> {
    pub(crate) fn lane(&self, lane: usize) -> &'a [f64] {
        &self.data[lane * self.q..(lane + 1) * self.q]
    }
}

pub(crate) enum Halt {
    Stop,
    Fail(Error),
}

impl From<Error> for Halt {
    fn from(e: Error) -> Self {
        Halt::Fail(e)
    }
}

/// Successive-cancellation engine over `lanes` parallel sets of leaf weights
/// that share a single decision path.
///
/// Buffers are allocated once per blocklength and reused across passes.
pub(crate) struct Canceller {
    n: usize,
    q: PrimeModulus,
    lanes: usize,
    weights: Vec<Vec<f64>>,
    partial: Vec<Vec<Symbol>>,
    u: Vec<Symbol>,
}

impl Canceller {
    pub(crate) fn new(n: usize, q: PrimeModulus, lanes: usize) -> Result<Self> {
        let k = gf::log2_exact(n)? as usize;
        let qs = q.size();
        let weights = (0..=k).map(|l| vec![0.0; lanes * (n >> l) * qs]).collect();
        let partial = (0..=k).map(|l| vec![0; n >> l]).collect();
        Ok(Canceller { n, q, lanes, weights, partial, u: vec![0; n] })
    }

    /// Leaf weights of lane `lane` (length `n * q`, position-major).
    pub(crate) fn leaves_mut(&mut self, lane: usize) -> &mut [f64] {
        let stride = self.n * self.q.size();
        &mut self.weights[0][lane * stride..(lane + 1) * stride]
    }

    /// Normalize every leaf weight in place.
    pub(crate) fn normalize_leaves(&mut self) {
        let q = self.q.size();
        for chunk in self.weights[0].chunks_mut(q) {
            normalize(chunk);
        }
    }

    /// Run one pass. `decide(i, leaf)` returns `u_i` given the lane weights
    /// of `U_i | u^{i-1}`. Returns `Ok(true)` when the pass ran to the end.
    pub(crate) fn run<F>(&mut self, decide: &mut F) -> Result<bool>
    where
        F: FnMut(usize, &Leaf<'_>) -> std::result::Result<Symbol, Halt>,
    {
        match self.node(0, 0, decide) {
            Ok(()) => Ok(true),
            Err(Halt::Stop) => Ok(false),
            Err(Halt::Fail(e)) => Err(e),
        }
    }

    /// Decided `u^n` of the last full pass.
    pub(crate) fn u(&self) -> &[Symbol] {
        &self.u
    }

    /// `x̂^n = u^n · G_n` of the last full pass.
    pub(crate) fn codeword(&self) -> &[Symbol] {
        &self.partial[0]
    }

    fn node<F>(&mut self, level: usize, i0: usize, decide: &mut F) -> std::result::Result<(), Halt>
    where
        F: FnMut(usize, &Leaf<'_>) -> std::result::Result<Symbol, Halt>,
    {
        let q = self.q.size();
        let m = self.n >> level;
        if m == 1 {
            let leaf = Leaf { data: &self.weights[level], q };
            let u = decide(i0, &leaf)?;
            self.u[i0] = u;
            self.partial[level][0] = u;
            return Ok(());
        }
        let h = m / 2;
        {
            let (lo, hi) = self.weights.split_at_mut(level + 1);
            let (src, dst) = (&lo[level], &mut hi[0]);
            for lane in 0..self.lanes {
                let s = &src[lane * m * q..(lane + 1) * m * q];
                let d = &mut dst[lane * h * q..(lane + 1) * h * q];
                for j in 0..h {
                    minus_into(&s[j * q..(j + 1) * q], &s[(j + h) * q..(j + h + 1) * q], &mut d[j * q..(j + 1) * q], q);
                }
            }
        }
        self.node(level + 1, i0, decide)?;
        {
            let (lo, hi) = self.partial.split_at_mut(level + 1);
            lo[level][..h].copy_from_slice(&hi[0][..h]);
        }
        {
            let (lo, hi) = self.weights.split_at_mut(level + 1);
            let (src, dst) = (&lo[level], &mut hi[0]);
            let c = &self.partial[level];
            for lane in 0..self.lanes {
                let s = &src[lane * m * q..(lane + 1) * m * q];
                let d = &mut dst[lane * h * q..(lane + 1) * h * q];
                for j in 0..h {
                    plus_into(
                        &s[j * q..(j + 1) * q],
                        &s[(j + h) * q..(j + h + 1) * q],
                        c[j] as usize,
                        &mut d[j * q..(j + 1) * q],
                        q,
                    );
                }
            }
        }
        self.node(level + 1, i0 + h, decide)?;
        let (lo, hi) = self.partial.split_at_mut(level + 1);
        let (dst, right) = (&mut lo[level], &hi[0]);
        dst[h..m].copy_from_slice(&right[..h]);
        for j in 0..h {
            dst[j] = self.q.add(dst[j], dst[j + h]);
        }
        Ok(())
    }
}

fn path_symbol(leaf: &[f64], i: usize, u: Symbol) -> std::result::Result<Symbol, Halt> {
    if leaf.iter().sum::<f64>() <= 0.0 || leaf[u as usize] <= 0.0 {
        return Err(Halt::Fail(Error::ImpossiblePath(i)));
    }
    Ok(u)
}

fn load_leaves(c: &mut Canceller, leaves: &[WeightVector], q: usize) -> Result<()> {
    let dst = c.leaves_mut(0);
    for (j, w) in leaves.iter().enumerate() {
        if w.q() != q {
            return Err(Error::Dimension(format!("leaf {j} has length {}", w.q())));
        }
        dst[j * q..(j + 1) * q].copy_from_slice(&w.w);
    }
    c.normalize_leaves();
    Ok(())
}

/// `P(U_i | u^{i-1}, leaves)` where `i = path.len()` and the leaves are the
/// per-position weights of a product law on `x̂^n`.
pub fn sc_conditionals(leaves: &[WeightVector], path: &[Symbol], q: PrimeModulus) -> Result<WeightVector> {
    let n = leaves.len();
    if path.len() >= n {
        return Err(Error::Invalid(format!("prefix length {} must be below n = {n}", path.len())));
    }
    let mut c = Canceller::new(n, q, 1)?;
    load_leaves(&mut c, leaves, q.size())?;
    let target = path.len();
    let mut out = None;
    c.run(&mut |i, leaf| {
        let w = leaf.lane(0);
        if i == target {
            out = Some(w.to_vec());
            return Err(Halt::Stop);
        }
        path_symbol(w, i, path[i])
    })?;
    let w = out.expect("target index reached");
    if w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ImpossiblePath(target));
    }
    Ok(WeightVector { w, log_scale: 0.0 })
}

/// All `n` conditionals along a full path `u^n` in a single pass.
pub fn sc_all_conditionals(leaves: &[WeightVector], u: &[Symbol], q: PrimeModulus) -> Result<Vec<WeightVector>> {
    let n = leaves.len();
    if u.len() != n {
        return Err(Error::Dimension(format!("path has length {}, expected {n}", u.len())));
    }
    let mut c = Canceller::new(n, q, 1)?;
    load_leaves(&mut c, leaves, q.size())?;
    let mut out = Vec::with_capacity(n);
    c.run(&mut |i, leaf| {
        let w = leaf.lane(0);
        out.push(WeightVector { w: w.to_vec(), log_scale: 0.0 });
        path_symbol(w, i, u[i])
    })?;
    Ok(out)
}

/// Leaf weights `P(x̂ | x_j, y_j)` for a realization.
pub fn conditioned_leaves(law: &JointLaw, x: &[Symbol], y: &[Symbol]) -> Vec<WeightVector> {
    let ny = law.src.ny();
    x.iter()
        .zip(y)
        .map(|(&a, &b)| WeightVector::new(law.forward(a as usize * ny + b as usize).to_vec()))
        .collect()
}

/// Leaf weights `P(x̂)` at every position.
pub fn marginal_leaves(law: &JointLaw, n: usize) -> Vec<WeightVector> {
    vec![WeightVector::new(law.prior().to_vec()); n]
}

pub(crate) fn fill_conditioned(dst: &mut [f64], law: &JointLaw, x: &[Symbol], y: &[Symbol]) {
    let q = law.q();
    let ny = law.src.ny();
    for (j, (&a, &b)) in x.iter().zip(y).enumerate() {
        dst[j * q..(j + 1) * q].copy_from_slice(law.forward(a as usize * ny + b as usize));
    }
}

pub(crate) fn fill_marginal(dst: &mut [f64], prior: &[f64]) {
    for chunk in dst.chunks_mut(prior.len()) {
        chunk.copy_from_slice(prior);
    }
}

/// How the index sets are selected from the Bhattacharyya estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `F = {Z_cond >= 1 - δ}`, `D = {Z_marg <= δ} \ F` with `δ = 2^{-n^β}`.
    Threshold,
    /// `|I|` fixed by a requested rate; `F` and `D` filled by rank.
    Rank { rate: f64 },
}

/// Role of a single index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Info,
    Frozen,
    Computable,
}

/// A constructed code: index partition, Bhattacharyya estimates, frozen
/// values and the reconstruction prior the decoder needs.
///
/// Indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSpec {
    pub n: usize,
    pub k: u32,
    pub q: PrimeModulus,
    pub info: Vec<usize>,
    pub frozen: Vec<usize>,
    pub computable: Vec<usize>,
    pub z_cond: Vec<f64>,
    pub z_marg: Vec<f64>,
    pub beta: f64,
    pub mode: Mode,
    /// `u_F` in ascending index order of `frozen`.
    pub frozen_values: Vec<Symbol>,
    /// Reconstruction prior `P(x̂)`.
    pub prior: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl PolarSpec {
    /// Build from explicit sets and validate.
    #[allow(clippy::too_many_arguments)]
    pub fn from_sets(
        law: &JointLaw,
        n: usize,
        frozen: Vec<usize>,
        computable: Vec<usize>,
        z_cond: Vec<f64>,
        z_marg: Vec<f64>,
        beta: f64,
        mode: Mode,
    ) -> Result<Self> {
        let k = gf::log2_exact(n)?;
        let mut frozen = frozen;
        let mut computable = computable;
        frozen.sort_unstable();
        computable.sort_unstable();
        let mut taken = vec![false; n];
        for &i in frozen.iter().chain(&computable) {
            if i >= n || taken[i] {
                return Err(Error::Invalid(format!("index {i} repeated or out of range")));
            }
            taken[i] = true;
        }
        let info = (0..n).filter(|&i| !taken[i]).collect();
        let spec = PolarSpec {
            n,
            k,
            q: law.modulus(),
            info,
            frozen_values: vec![0; frozen.len()],
            frozen,
            computable,
            z_cond,
            z_marg,
            beta,
            mode,
            prior: law.prior().to_vec(),
            samples: 0,
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn rate(&self) -> f64 {
        self.info.len() as f64 / self.n as f64
    }

    pub fn roles(&self) -> Vec<Role> {
        let mut r = vec![Role::Info; self.n];
        self.frozen.iter().for_each(|&i| r[i] = Role::Frozen);
        self.computable.iter().for_each(|&i| r[i] = Role::Computable);
        r
    }

    /// Replace the stored frozen values.
    pub fn with_frozen_values(mut self, values: Vec<Symbol>) -> Result<Self> {
        self.frozen_values = values;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if !n.is_power_of_two() || 1usize << self.k != n {
            return Err(Error::Invalid(format!("n = {n} does not match k = {}", self.k)));
        }
        let mut seen = vec![0u8; n];
        for &i in self.info.iter().chain(&self.frozen).chain(&self.computable) {
            if i >= n {
                return Err(Error::Invalid(format!("index {i} out of range")));
            }
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::Invalid("index sets must partition 0..n".into()));
        }
        for set in [&self.info, &self.frozen, &self.computable] {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invalid("index sets must be sorted".into()));
            }
        }
        if self.z_cond.len() != n || self.z_marg.len() != n {
            return Err(Error::Dimension("one Bhattacharyya estimate per index required".into()));
        }
        if self.z_cond.iter().chain(&self.z_marg).any(|z| !(0.0..=1.0).contains(z)) {
            return Err(Error::Invalid("Bhattacharyya estimates must lie in [0, 1]".into()));
        }
        if self.frozen_values.len() != self.frozen.len() {
            return Err(Error::Dimension(format!(
                "{} frozen values for {} frozen indices",
                self.frozen_values.len(),
                self.frozen.len()
            )));
        }
        if let Some(&s) = self.frozen_values.iter().find(|&&s| s >= self.q.get()) {
            return Err(Error::SymbolOutOfRange { symbol: s, q: self.q.get() });
        }
        if self.prior.len() != self.q.size() {
            return Err(Error::Dimension("prior length must equal q".into()));
        }
        Ok(())
    }

    /// Versioned plain-text form; see [`PolarSpec::from_text`].
    pub fn to_text(&self) -> String {
        fn list<T: std::fmt::Debug>(xs: &[T]) -> String {
            xs.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
        }
        let mut s = String::new();
        let _ = writeln!(s, "privpolar-spec 1");
        let _ = writeln!(s, "n {}", self.n);
        let _ = writeln!(s, "k {}", self.k);
        let _ = writeln!(s, "q {}", self.q.get());
        let _ = writeln!(s, "info {}", list(&self.info));
        let _ = writeln!(s, "frozen {}", list(&self.frozen));
        let _ = writeln!(s, "computable {}", list(&self.computable));
        let _ = writeln!(s, "z_cond {}", list(&self.z_cond));
        let _ = writeln!(s, "z_marg {}", list(&self.z_marg));
        let _ = writeln!(s, "beta {:?}", self.beta);
        match self.mode {
            Mode::Threshold => {
                let _ = writeln!(s, "mode threshold");
            }
            Mode::Rank { rate } => {
                let _ = writeln!(s, "mode rank {rate:?}");
            }
        }
        let _ = writeln!(s, "frozen_values {}", list(&self.frozen_values));
        let _ = writeln!(s, "prior {}", list(&self.prior));
        let _ = writeln!(s, "samples {}", self.samples);
        let _ = writeln!(s, "seed {}", self.seed);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const KEYS: [&str; 15] = [
            "n", "k", "q", "info", "frozen", "computable", "z_cond", "z_marg", "beta", "mode",
            "frozen_values", "prior", "samples", "seed", "",
        ];
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == "privpolar-spec 1" => {}
            Some((i, l)) => {
                return Err(Error::Parse { line: i + 1, msg: format!("unknown header {l:?}") });
            }
            None => return Err(Error::Parse { line: 0, msg: "empty spec file".into() }),
        }
        let mut fields: Vec<(usize, &str, Vec<&str>)> = Vec::new();
        for (i, l) in lines {
            let mut it = l.split_whitespace();
            let key = it.next().unwrap_or("");
            if !KEYS[..14].contains(&key) {
                return Err(Error::Parse { line: i + 1, msg: format!("unknown field {key:?}") });
            }
            if fields.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate field {key:?}") });
            }
            fields.push((i + 1, key, it.collect()));
        }
        let get = |key: &str| -> Result<(usize, &Vec<&str>)> {
            fields
                .iter()
                .find(|(_, k, _)| *k == key)
                .map(|(l, _, v)| (*l, v))
                .ok_or(Error::Parse { line: 0, msg: format!("missing field {key:?}") })
        };
        fn parse_all<T: std::str::FromStr>(line: usize, vals: &[&str]) -> Result<Vec<T>> {
            vals.iter()
                .map(|v| v.parse::<T>().map_err(|_| Error::Parse { line, msg: format!("bad value {v:?}") }))
                .collect()
        }
        fn one<T: std::str::FromStr>(line: usize, vals: &[&str]) -> Result<T> {
            match vals {
                [v] => v.parse::<T>().map_err(|_| Error::Parse { line, msg: format!("bad value {v:?}") }),
                _ => Err(Error::Parse { line, msg: "expected exactly one value".into() }),
            }
        }
        let (l, v) = get("n")?;
        let n: usize = one(l, v)?;
        let (l, v) = get("k")?;
        let k: u32 = one(l, v)?;
        let (l, v) = get("q")?;
        let q = PrimeModulus::new(one(l, v)?)?;
        let (l, v) = get("info")?;
        let info = parse_all(l, v)?;
        let (l, v) = get("frozen")?;
        let frozen = parse_all(l, v)?;
        let (l, v) = get("computable")?;
        let computable = parse_all(l, v)?;
        let (l, v) = get("z_cond")?;
        let z_cond = parse_all(l, v)?;
        let (l, v) = get("z_marg")?;
        let z_marg = parse_all(l, v)?;
        let (l, v) = get("beta")?;
        let beta = one(l, v)?;
        let (l, v) = get("mode")?;
        let mode = match v.as_slice() {
            ["threshold"] => Mode::Threshold,
            ["rank", r] => Mode::Rank { rate: one(l, &[r])? },
            _ => return Err(Error::Parse { line: l, msg: "mode must be `threshold` or `rank <rate>`".into() }),
        };
        let (l, v) = get("frozen_values")?;
        let frozen_values = parse_all(l, v)?;
        let (l, v) = get("prior")?;
        let prior = parse_all(l, v)?;
        let (l, v) = get("samples")?;
        let samples = one(l, v)?;
        let (l, v) = get("seed")?;
        let seed = one(l, v)?;
        let spec = PolarSpec {
            n,
            k,
            q,
            info,
            frozen,
            computable,
            z_cond,
            z_marg,
            beta,
            mode,
            frozen_values,
            prior,
            samples,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Monte-Carlo estimates of `Z(U_i | U^{i-1}, X^n, Y^n)` and
/// `Z(U_i | U^{i-1})` for every index.
///
/// Each sample draws `(x^n, y^n)` from the source and `u^n` from the target
/// law by randomized SC; both conditionals are evaluated along that path.
pub fn estimate_bhattacharyya(law: &JointLaw, n: usize, num_samples: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if num_samples < 1 {
        return Err(Error::Invalid("num_samples must be at least 1".into()));
    }
    gf::log2_exact(n)?;
    const CHUNKS: usize = 64;
    let chunks = CHUNKS.min(num_samples);
    let partials: Vec<Result<Vec<f64>>> = par::map_range(chunks, |c| {
        let lo = c * num_samples / chunks;
        let hi = (c + 1) * num_samples / chunks;
        let mut acc = vec![0.0; 2 * n];
        let mut canc = Canceller::new(n, law.modulus(), 2)?;
        for s in lo..hi {
            let mut r = rng::stream(seed, s as u64);
            let (x, y) = law.src.sample(n, &mut r);
            fill_conditioned(canc.leaves_mut(0), law, &x, &y);
            fill_marginal(canc.leaves_mut(1), law.prior());
            canc.normalize_leaves();
            canc.run(&mut |i, leaf| {
                let cond = leaf.lane(0);
                acc[i] += bhattacharyya_of(cond);
                acc[n + i] += bhattacharyya_of(leaf.lane(1));
                if cond.iter().sum::<f64>() <= 0.0 {
                    return Err(Halt::Fail(Error::ImpossiblePath(i)));
                }
                Ok(rng::sample_index(&mut r, cond) as Symbol)
            })?;
        }
        Ok(acc)
    });
    let mut total = vec![0.0; 2 * n];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p?) {
            *t += v;
        }
    }
    let scale = 1.0 / num_samples as f64;
    let z_cond = total[..n].iter().map(|v| (v * scale).clamp(0.0, 1.0)).collect();
    let z_marg = total[n..].iter().map(|v| (v * scale).clamp(0.0, 1.0)).collect();
    Ok((z_cond, z_marg))
}

/// `δ_n = 2^{-n^β}`.
pub fn threshold_delta(n: usize, beta: f64) -> f64 {
    (-(n as f64).powf(beta) * std::f64::consts::LN_2).exp()
}

/// Split indices into `(F, D)` from the estimates.
///
/// Threshold mode: `F = {Z_cond >= 1 - δ}` and `D = {Z_marg <= δ}`; an index
/// meeting both joins `F`.
///
/// Rank mode: the `n - round(rate * n)` indices with the largest
/// `max(Z_cond, 1 - Z_marg)` leave `I`; each goes to `F` when
/// `Z_cond >= 1 - Z_marg` and to `D` otherwise. Ties are broken by index.
pub fn select_sets(z_cond: &[f64], z_marg: &[f64], beta: f64, mode: Mode) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = z_cond.len();
    match mode {
        Mode::Threshold => {
            if !(beta > 0.0 && beta < 0.5) {
                return Err(Error::Invalid(format!("beta = {beta} must lie in (0, 1/2)")));
            }
            let delta = threshold_delta(n, beta);
            let frozen: Vec<usize> = (0..n).filter(|&i| z_cond[i] >= 1.0 - delta).collect();
            let computable = (0..n).filter(|&i| z_marg[i] <= delta && z_cond[i] < 1.0 - delta).collect();
            Ok((frozen, computable))
        }
        Mode::Rank { rate } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Invalid(format!("requested rate {rate} outside [0, 1]")));
            }
            let keep = ((rate * n as f64).round() as usize).min(n);
            let mut order: Vec<usize> = (0..n).collect();
            let score = |i: usize| z_cond[i].max(1.0 - z_marg[i]);
            order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
            let mut frozen = Vec::new();
            let mut computable = Vec::new();
            for &i in &order[..n - keep] {
                if z_cond[i] >= 1.0 - z_marg[i] {
                    frozen.push(i);
                } else {
                    computable.push(i);
                }
            }
            frozen.sort_unstable();
            computable.sort_unstable();
            Ok((frozen, computable))
        }
    }
}

/// Estimate the Bhattacharyya parameters and select `F`, `D`, `I`.
pub fn construct_sets(law: &JointLaw, n: usize, beta: f64, mode: Mode, num_samples: usize, seed: u64) -> Result<PolarSpec> {
    gf::log2_exact(n)?;
    let (z_cond, z_marg) = estimate_bhattacharyya(law, n, num_samples, seed)?;
    let (frozen, computable) = select_sets(&z_cond, &z_marg, beta, mode)?;
    let mut spec = PolarSpec::from_sets(law, n, frozen, computable, z_cond, z_marg, beta, mode)?;
    spec.samples = num_samples;
    spec.seed = seed;
    Ok(spec)
}

/// Rows `(i, Z_cond[i], Z_marg[i])` sorted by index.
pub fn polarization_spectrum(spec: &PolarSpec) -> Vec<(usize, f64, f64)> {
    (0..spec.n).map(|i| (i, spec.z_cond[i], spec.z_marg[i])).collect()
}

/// CSV form of [`polarization_spectrum`] with a header row.
pub fn spectrum_csv(spec: &PolarSpec) -> String {
    let mut s = String::from("index,z_cond,z_marg\n");
    for (i, zc, zm) in polarization_spectrum(spec) {
        let _ = writeln!(s, "{i},{zc:?},{zm:?}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{JointSource, TestChannel};

    fn wv(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec())
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn minus_examples() {
        let u = WeightVector::uniform(3);
        assert!(close(sc_combine_minus(&u, &u).unwrap().probs(), &[1.0 / 3.0; 3], 1e-15));
        let forced = wv(&[1.0, 0.0]);
        assert_eq!(sc_combine_minus(&forced, &forced).unwrap().probs(), &[1.0, 0.0]);
        // 9-term direct sum
        let out = sc_combine_minus(&wv(&[0.5, 0.25, 0.25]), &wv(&[0.2, 0.3, 0.5])).unwrap();
        assert!(close(out.probs(), &[0.3, 0.375, 0.325], 1e-15));
        let dead = sc_combine_minus(&wv(&[0.0, 0.0]), &forced).unwrap();
        assert!(dead.is_impossible());
    }

    #[test]
    fn plus_examples() {
        let b = wv(&[0.2, 0.3, 0.5]);
        let out = sc_combine_plus(&WeightVector::uniform(3), &b, 1).unwrap();
        assert!(close(out.probs(), b.probs(), 1e-15));
        let out = sc_combine_plus(&wv(&[0.9, 0.1]), &wv(&[0.5, 0.5]), 1).unwrap();
        assert!(close(out.probs(), &[0.1, 0.9], 1e-15));
        // 3-term direct products (0.1*0.25, 0.6*0.25, 0.3*0.5) normalized
        let out = sc_combine_plus(&wv(&[0.6, 0.3, 0.1]), &wv(&[0.25, 0.25, 0.5]), 2).unwrap();
        assert!(close(out.probs(), &[0.07692307692307693, 0.46153846153846156, 0.46153846153846156], 1e-15));
        assert_eq!(sc_combine_plus(&wv(&[1.0, 0.0]), &wv(&[0.0, 1.0]), 0), Err(Error::ImpossiblePath(0)));
    }

    #[test]
    fn log_scale_tracks_discarded_mass() {
        let a = WeightVector::new(vec![2.0, 2.0]);
        assert!((a.log_scale() - 4f64.ln()).abs() < 1e-15);
        let m = sc_combine_minus(&a, &a).unwrap();
        // (0.5*0.5 + 0.5*0.5) summed over u1 = 1
        assert!((m.log_scale() - 2.0 * 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bhattacharyya_examples() {
        let uniform_indep = vec![vec![0.125; 4]; 2];
        assert!((bhattacharyya(&uniform_indep).unwrap() - 1.0).abs() < 1e-15);
        let deterministic = vec![vec![0.3, 0.0], vec![0.0, 0.7]];
        assert_eq!(bhattacharyya(&deterministic).unwrap(), 0.0);
        let bern = vec![vec![0.11], vec![0.89]];
        assert!((bhattacharyya(&bern).unwrap() - 2.0 * (0.11f64 * 0.89).sqrt()).abs() < 1e-15);
        assert!((bhattacharyya(&[vec![0.5], vec![0.5]]).unwrap() - 1.0).abs() < 1e-15);
        assert!((bhattacharyya_of(&[0.11, 0.89]) - 0.6257795138864807).abs() < 1e-15);
        assert!((bhattacharyya_of(&[1.0 / 3.0; 3]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_position_returns_leaf() {
        let q = PrimeModulus::new(3).unwrap();
        let leaf = wv(&[0.2, 0.5, 0.3]);
        let out = sc_conditionals(std::slice::from_ref(&leaf), &[], q).unwrap();
        assert!(close(out.probs(), leaf.probs(), 1e-15));
    }

    #[test]
    fn no_information_gives_uniform() {
        let q = PrimeModulus::new(3).unwrap();
        let leaves = vec![WeightVector::uniform(3); 8];
        let path = [2, 0, 1, 1, 0, 2, 2, 1];
        for w in sc_all_conditionals(&leaves, &path, q).unwrap() {
            assert!(close(w.probs(), &[1.0 / 3.0; 3], 1e-15));
        }
    }

    #[test]
    fn impossible_prefix_is_signalled() {
        let q = PrimeModulus::new(2).unwrap();
        // x̂ = (0, 0) forces u = (0, 0)
        let leaves = vec![wv(&[1.0, 0.0]), wv(&[1.0, 0.0])];
        assert_eq!(sc_conditionals(&leaves, &[1], q), Err(Error::ImpossiblePath(0)));
        assert!(sc_conditionals(&leaves, &[0], q).is_ok());
    }

    #[test]
    fn degenerate_source_freezes_nothing() {
        let src = JointSource::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let ch = TestChannel::identity(&src, 2).unwrap();
        let law = JointLaw::new(&src, &ch).unwrap();
        let spec = construct_sets(&law, 16, 0.3, Mode::Threshold, 20, 5).unwrap();
        assert!(spec.z_cond.iter().all(|&z| z == 0.0 || z == 1.0));
        assert!(spec.info.is_empty());
        assert_eq!(spec.computable.len(), 16);
    }

    #[test]
    fn spec_text_round_trip_and_validation() {
        let src = JointSource::z_channel(0.3).unwrap();
        let law = JointLaw::new(&src, &TestChannel::bsc(&src, 0.2).unwrap()).unwrap();
        let spec = construct_sets(&law, 32, 0.3, Mode::Rank { rate: 0.6 }, 50, 11).unwrap();
        let ones = vec![1; spec.frozen.len()];
        let spec = spec.with_frozen_values(ones).unwrap();
        let parsed = PolarSpec::from_text(&spec.to_text()).unwrap();
        assert_eq!(parsed, spec);
        assert_eq!(spectrum_csv(&spec).lines().count(), 33);

        let broken = spec.to_text().replace("seed 11", "seed 11\nseed 12");
        assert!(matches!(PolarSpec::from_text(&broken), Err(Error::Parse { .. })));
        let bogus = spec.to_text().replace("samples", "sample_count");
        assert!(matches!(PolarSpec::from_text(&bogus), Err(Error::Parse { .. })));
        let mut bad = spec.clone();
        bad.info.push(0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rank_mode_hits_requested_rate() {
        let z_cond = vec![0.9, 0.1, 0.5, 0.95, 0.02, 0.3, 0.6, 0.01];
        let z_marg = vec![1.0, 0.05, 0.9, 1.0, 0.5, 0.99, 0.7, 0.02];
        let (f, d) = select_sets(&z_cond, &z_marg, 0.3, Mode::Rank { rate: 0.5 }).unwrap();
        // scores: 0.9 0.95 0.5 0.95 0.5 0.3 0.6 0.98
        assert_eq!(f, vec![0, 3]);
        assert_eq!(d, vec![1, 7]);
        let (f, d) = select_sets(&z_cond, &z_marg, 0.3, Mode::Rank { rate: 1.0 }).unwrap();
        assert!(f.is_empty() && d.is_empty());
        assert!(select_sets(&z_cond, &z_marg, 0.7, Mode::Threshold).is_err());
    }

    #[test]
    fn threshold_overlap_resolves_to_frozen() {
        let (f, d) = select_sets(&[1.0, 0.0], &[0.0, 0.0], 0.3, Mode::Threshold).unwrap();
        assert_eq!(f, vec![0]);
        assert_eq!(d, vec![1]);
    }

    #[test]
    fn construction_is_reproducible() {
        let src = JointSource::dsbs(0.1).unwrap();
        let law = JointLaw::new(&src, &TestChannel::bsc(&src, 0.11).unwrap()).unwrap();
        let a = construct_sets(&law, 64, 0.3, Mode::Threshold, 100, 3).unwrap();
        let b = construct_sets(&law, 64, 0.3, Mode::Threshold, 100, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(polarization_spectrum(&a).len(), 64);
        // uniform prior: the marginal chain carries no information
        assert!(a.z_marg.iter().all(|&z| (z - 1.0).abs() < 1e-12));
        assert!(a.computable.is_empty());
    }
}
