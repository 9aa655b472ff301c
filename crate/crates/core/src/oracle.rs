//! Exact evaluation, by enumeration at small blocklength, of every analytic
//! object used to analyse the scheme: the target law `P`, the encoder law
//! `Pᵉ`, the decoder law `Pᵈ`, and the distortion, error probability,
//! equivocation and variational-distance quantities derived from them.
//!
//! The enumeration streams over source blocks `(x^n, y^n)`. For each block the
//! conditional `P(u^n | x^n, y^n)` is built by enumerating `x̂^n` (which fixes
//! `u^n = x̂^n G_n^{-1}`), and the encoder conditionals are read off prefix
//! sums of that table. Blocks are grouped into a fixed number of chunks whose
//! partial results are reduced in chunk order, so sums do not depend on the
//! thread count.
//!
//! The encoder conditionals are also recomputed by the SC recursion on a
//! deterministic subset of blocks and every prefix of the marginal chain; any
//! disagreement above [`CROSS_CHECK_TOL`] is an [`Error::Assertion`].

use crate::construction::{self, PolarSpec, Role, WeightVector};
use crate::error::{Error, Result};
use crate::gf::{self, PrimeModulus, Symbol};
use crate::info::{entropy_nats, kahan_sum, kl_nats};
use crate::par;
use crate::source::{DistortionMetric, JointLaw};

/// Largest `(|X||Y|q)^n` the enumeration accepts.
pub const GUARD: f64 = 1e8;

/// Tolerance for recursion-vs-enumeration agreement.
pub const CROSS_CHECK_TOL: f64 = 1e-10;

const CHUNKS: usize = 16;

/// How frozen symbols are drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrozenMode {
    /// i.i.d. uniform, each frozen vector with weight `q^{-|F|}`.
    Averaged,
    /// A single frozen vector (ascending index order of `F`).
    Fixed(Vec<Symbol>),
}

fn check_guard(law: &JointLaw, n: usize) -> Result<()> {
    gf::log2_exact(n)?;
    let needed = ((law.src.num_pairs() * law.q()) as f64).powi(n as i32);
    if needed > GUARD {
        return Err(Error::GuardExceeded { needed, limit: GUARD });
    }
    Ok(())
}

fn pow(base: usize, e: usize) -> usize {
    base.pow(e as u32)
}

/// A dense law over `(x^n, y^n, u^n)`; `x̂^n = u^n G_n` is implied.
///
/// Pair sequences are indexed in mixed radix `|X||Y|` and `u^n` in radix `q`,
/// first position most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    pub n: usize,
    pub q: usize,
    pub num_pairs: usize,
    prob: Vec<f64>,
}

impl ExactDistribution {
    pub fn prob(&self, pairs: usize, u: usize) -> f64 {
        self.prob[pairs * pow(self.q, self.n) + u]
    }

    pub fn probs(&self) -> &[f64] {
        &self.prob
    }

    pub fn support_size(&self) -> usize {
        self.prob.len()
    }

    pub fn total(&self) -> f64 {
        kahan_sum(self.prob.iter().cloned())
    }

    /// Marginal over pair sequences.
    pub fn marginal_pairs(&self) -> Vec<f64> {
        self.prob.chunks(pow(self.q, self.n)).map(|c| kahan_sum(c.iter().cloned())).collect()
    }

    /// L1 distance `Σ |P - P'|`.
    pub fn l1_distance(&self, other: &ExactDistribution) -> Result<f64> {
        if self.prob.len() != other.prob.len() {
            return Err(Error::Dimension("distributions live on different supports".into()));
        }
        Ok(kahan_sum(self.prob.iter().zip(&other.prob).map(|(a, b)| (a - b).abs())))
    }
}

/// Per-position law of `x̂` given the pair at each position, enumerated over
/// `x̂^n` and re-indexed by `u^n`.
struct Enumerator {
    q: PrimeModulus,
    /// `u_index[x̂ index]`.
    u_index: Vec<usize>,
    /// `x̂ index` for each `u` index.
    xh_index: Vec<usize>,
}

impl Enumerator {
    fn new(n: usize, q: PrimeModulus) -> Self {
        let qs = q.size();
        let total = pow(qs, n);
        let mut digits = vec![0; n];
        let mut u_index = vec![0; total];
        let mut xh_index = vec![0; total];
        for xh in 0..total {
            gf::digits_into(xh, qs, &mut digits);
            gf::inverse_in_place(&mut digits, q);
            let u = gf::digits_to_index(&digits, qs);
            u_index[xh] = u;
            xh_index[u] = xh;
        }
        Enumerator { q, u_index, xh_index }
    }

    /// `P(u^n | rows)` where `rows[j]` is the law of `x̂_j`.
    fn conditional(&self, rows: &[&[f64]], scratch: &mut Vec<f64>, out: &mut [f64]) {
        let qs = self.q.size();
        scratch.clear();
        scratch.push(1.0);
        for row in rows {
            let prev = std::mem::take(scratch);
            scratch.reserve(prev.len() * qs);
            for &p in &prev {
                for &r in row.iter() {
                    scratch.push(p * r);
                }
            }
        }
        for (xh, &p) in scratch.iter().enumerate() {
            out[self.u_index[xh]] = p;
        }
    }
}

/// Prefix marginals of a law on `u^n`: `levels[i][prefix]` is the mass of the
/// length-`i` prefix.
fn prefix_levels(p: &[f64], n: usize, q: usize) -> Vec<Vec<f64>> {
    let mut levels = vec![Vec::new(); n + 1];
    levels[n] = p.to_vec();
    for i in (0..n).rev() {
        levels[i] = levels[i + 1].chunks(q).map(|c| c.iter().sum()).collect();
    }
    levels
}

/// `P(u_i = · | prefix)` for 0-based index `i`; `None` on a null prefix.
fn conditional_at(levels: &[Vec<f64>], i: usize, prefix: usize, q: usize) -> Option<&[f64]> {
    if levels[i][prefix] <= 0.0 {
        return None;
    }
    Some(&levels[i + 1][prefix * q..(prefix + 1) * q])
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Encoder law `Pᵉ(u^n | block)` given the block's prefix levels and the
/// marginal prefix levels.
#[allow(clippy::too_many_arguments)]
fn encoder_conditional(
    roles: &[Role],
    frozen_pos: &[Option<usize>],
    mode: &FrozenMode,
    cond: &[Vec<f64>],
    marg: &[Vec<f64>],
    n: usize,
    q: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    out.push(1.0);
    for i in 0..n {
        let prev = std::mem::take(out);
        out.reserve(prev.len() * q);
        for (prefix, &mass) in prev.iter().enumerate() {
            if mass == 0.0 {
                out.extend(std::iter::repeat_n(0.0, q));
                continue;
            }
            match roles[i] {
                Role::Info => {
                    let c = conditional_at(cond, i, prefix, q).ok_or(Error::ImpossiblePath(i))?;
                    let s: f64 = c.iter().sum();
                    out.extend(c.iter().map(|v| mass * v / s));
                }
                Role::Computable => {
                    let c = conditional_at(marg, i, prefix, q).ok_or(Error::ImpossiblePath(i))?;
                    let s: f64 = c.iter().sum();
                    out.extend(c.iter().map(|v| mass * v / s));
                }
                Role::Frozen => match mode {
                    FrozenMode::Averaged => out.extend(std::iter::repeat_n(mass / q as f64, q)),
                    FrozenMode::Fixed(vals) => {
                        let v = vals[frozen_pos[i].expect("frozen index")] as usize;
                        out.extend((0..q).map(|a| if a == v { mass } else { 0.0 }));
                    }
                },
            }
        }
    }
    Ok(())
}

fn pair_rows<'a>(law: &'a JointLaw, block: usize, n: usize, digits: &mut [Symbol]) -> (f64, Vec<&'a [f64]>) {
    gf::digits_into(block, law.src.num_pairs(), digits);
    let mut q_mass = 1.0;
    let rows = digits
        .iter()
        .map(|&p| {
            q_mass *= law.src.pmf()[p as usize];
            law.forward(p as usize)
        })
        .collect();
    debug_assert_eq!(digits.len(), n);
    (q_mass, rows)
}

/// Exact target law `P(x^n, y^n, u^n)`.
pub fn enumerate_joint(law: &JointLaw, n: usize) -> Result<ExactDistribution> {
    check_guard(law, n)?;
    let q = law.q();
    let qn = pow(q, n);
    let blocks = pow(law.src.num_pairs(), n);
    let en = Enumerator::new(n, law.modulus());
    let mut prob = vec![0.0; blocks * qn];
    let mut digits = vec![0; n];
    let mut scratch = Vec::new();
    for (b, out) in prob.chunks_mut(qn).enumerate() {
        let (mass, rows) = pair_rows(law, b, n, &mut digits);
        if mass == 0.0 {
            continue;
        }
        en.conditional(&rows, &mut scratch, out);
        out.iter_mut().for_each(|v| *v *= mass);
    }
    Ok(ExactDistribution { n, q, num_pairs: law.src.num_pairs(), prob })
}

fn check_spec(law: &JointLaw, spec: &PolarSpec, mode: &FrozenMode) -> Result<()> {
    spec.validate()?;
    if spec.q != law.modulus() {
        return Err(Error::Dimension("spec alphabet differs from the law".into()));
    }
    if let FrozenMode::Fixed(v) = mode {
        if v.len() != spec.frozen.len() {
            return Err(Error::Dimension(format!("{} frozen values for |F| = {}", v.len(), spec.frozen.len())));
        }
        if let Some(&s) = v.iter().find(|&&s| s >= spec.q.get()) {
            return Err(Error::SymbolOutOfRange { symbol: s, q: spec.q.get() });
        }
    }
    Ok(())
}

fn frozen_positions(spec: &PolarSpec) -> Vec<Option<usize>> {
    let mut pos = vec![None; spec.n];
    for (k, &i) in spec.frozen.iter().enumerate() {
        pos[i] = Some(k);
    }
    pos
}

fn marginal_levels(law: &JointLaw, n: usize, en: &Enumerator) -> Vec<Vec<f64>> {
    let rows = vec![law.prior(); n];
    let mut p = vec![0.0; pow(law.q(), n)];
    en.conditional(&rows, &mut Vec::new(), &mut p);
    prefix_levels(&p, n, law.q())
}

/// Exact encoder law `Pᵉ(x^n, y^n, u^n)`.
pub fn exact_pe(law: &JointLaw, spec: &PolarSpec, mode: &FrozenMode) -> Result<ExactDistribution> {
    check_guard(law, spec.n)?;
    check_spec(law, spec, mode)?;
    let (n, q) = (spec.n, law.q());
    let qn = pow(q, n);
    let blocks = pow(law.src.num_pairs(), n);
    let en = Enumerator::new(n, law.modulus());
    let marg = marginal_levels(law, n, &en);
    cross_check_marginal(law, n, &marg)?;
    let roles = spec.roles();
    let fpos = frozen_positions(spec);
    let mut prob = vec![0.0; blocks * qn];
    let mut digits = vec![0; n];
    let (mut scratch, mut cond_p, mut pe) = (Vec::new(), vec![0.0; qn], Vec::new());
    for (b, out) in prob.chunks_mut(qn).enumerate() {
        let (mass, rows) = pair_rows(law, b, n, &mut digits);
        if mass == 0.0 {
            continue;
        }
        en.conditional(&rows, &mut scratch, &mut cond_p);
        let levels = prefix_levels(&cond_p, n, q);
        encoder_conditional(&roles, &fpos, mode, &levels, &marg, n, q, &mut pe)?;
        for (o, v) in out.iter_mut().zip(&pe) {
            *o = mass * v;
        }
    }
    Ok(ExactDistribution { n, q, num_pairs: law.src.num_pairs(), prob })
}

/// Compare every prefix of the marginal chain with the SC recursion.
fn cross_check_marginal(law: &JointLaw, n: usize, marg: &[Vec<f64>]) -> Result<()> {
    let q = law.q();
    let leaves = construction::marginal_leaves(law, n);
    let mut path = vec![0; n];
    for u in 0..pow(q, n) {
        gf::digits_into(u, q, &mut path);
        if marg[n][u] <= 0.0 {
            continue;
        }
        let sc = construction::sc_all_conditionals(&leaves, &path, law.modulus())?;
        compare_path(&sc, marg, &path, q)?;
    }
    Ok(())
}

fn compare_path(sc: &[WeightVector], levels: &[Vec<f64>], path: &[Symbol], q: usize) -> Result<()> {
    let mut prefix = 0;
    for (i, w) in sc.iter().enumerate() {
        let brute = normalized(conditional_at(levels, i, prefix, q).expect("positive path"));
        for (a, b) in w.probs().iter().zip(&brute) {
            if (a - b).abs() > CROSS_CHECK_TOL {
                return Err(Error::Assertion(format!(
                    "SC recursion disagrees with enumeration at index {i}: {:?} vs {brute:?}",
                    w.probs()
                )));
            }
        }
        prefix = prefix * q + path[i] as usize;
    }
    Ok(())
}

/// Brute-force `P(U_i | u^{i-1}, x^n, y^n)` for a single realization, for
/// every prefix: `levels[i][prefix]` masses as in the enumeration.
pub fn brute_force_levels(law: &JointLaw, x: &[Symbol], y: &[Symbol]) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    gf::log2_exact(n)?;
    let needed = pow(law.q(), n) as f64;
    if needed > GUARD {
        return Err(Error::GuardExceeded { needed, limit: GUARD });
    }
    let ny = law.src.ny();
    let rows: Vec<&[f64]> = x.iter().zip(y).map(|(&a, &b)| law.forward(a as usize * ny + b as usize)).collect();
    let en = Enumerator::new(n, law.modulus());
    let mut p = vec![0.0; pow(law.q(), n)];
    en.conditional(&rows, &mut Vec::new(), &mut p);
    Ok(prefix_levels(&p, n, law.q()))
}

/// Normalized conditional from [`brute_force_levels`] output.
pub fn brute_force_conditional(levels: &[Vec<f64>], i: usize, prefix: &[Symbol], q: usize) -> Option<Vec<f64>> {
    let idx = gf::digits_to_index(prefix, q);
    conditional_at(levels, i, idx, q).map(normalized)
}

/// Everything the small-n analysis needs, accumulated in one enumeration.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub n: usize,
    pub q: usize,
    pub d_max: f64,
    /// Single-letter operating point of the law.
    pub target: crate::source::OperatingPoint,
    frozen: Vec<usize>,
    roles: Vec<Role>,
    ny: usize,
    /// `P(u^n)`.
    p_u: Vec<f64>,
    /// `Pᵉ(u^n)`, averaged frozen symbols.
    pe_u: Vec<f64>,
    /// `P(y^n, u^n)` and `Pᵉ(y^n, u^n)`.
    p_yu: Vec<f64>,
    pe_yu: Vec<f64>,
    /// `Σ_{x,y} Pᵉ(x, y, u) d(x^n, u G_n)` (letter sums).
    dist_pe_u: Vec<f64>,
    /// Same with the decoder's reconstruction.
    dist_pd_u: Vec<f64>,
    dist_p: f64,
    /// Decoder output `û` for every `u`.
    decoded: Vec<usize>,
    l1: f64,
    /// `H_P(U_i | U^{i-1}, X^n, Y^n)` in nats.
    h_cond: Vec<f64>,
    /// `Z(U_i | U^{i-1}, X^n, Y^n)`.
    z_cond: Vec<f64>,
    /// `Σ_i E_P[√(2 KL(P_i ‖ Pᵉ_i))]` per index (Pinsker terms, nats).
    pinsker: Vec<f64>,
    marg_levels: Vec<Vec<f64>>,
}

#[derive(Default, Clone)]
struct Acc {
    p_yu: Vec<f64>,
    pe_yu: Vec<f64>,
    dist_pe_u: Vec<f64>,
    dist_pd_u: Vec<f64>,
    dist_p: f64,
    l1: f64,
    h_cond: Vec<f64>,
    z_cond: Vec<f64>,
    pinsker: Vec<f64>,
}

impl Acc {
    fn new(ny_n: usize, qn: usize, n: usize) -> Self {
        Acc {
            p_yu: vec![0.0; ny_n * qn],
            pe_yu: vec![0.0; ny_n * qn],
            dist_pe_u: vec![0.0; qn],
            dist_pd_u: vec![0.0; qn],
            dist_p: 0.0,
            l1: 0.0,
            h_cond: vec![0.0; n],
            z_cond: vec![0.0; n],
            pinsker: vec![0.0; n],
        }
    }

    fn merge(&mut self, o: Acc) {
        fn add(a: &mut [f64], b: &[f64]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        add(&mut self.p_yu, &o.p_yu);
        add(&mut self.pe_yu, &o.pe_yu);
        add(&mut self.dist_pe_u, &o.dist_pe_u);
        add(&mut self.dist_pd_u, &o.dist_pd_u);
        add(&mut self.h_cond, &o.h_cond);
        add(&mut self.z_cond, &o.z_cond);
        add(&mut self.pinsker, &o.pinsker);
        self.dist_p += o.dist_p;
        self.l1 += o.l1;
    }
}

/// Brute-force decoder: `û_i = u_i` on `I ∪ F`, otherwise the argmax of
/// `P(· | û^{i-1})` (smallest symbol on ties).
fn brute_decode(u: usize, roles: &[Role], marg: &[Vec<f64>], n: usize, q: usize) -> usize {
    let mut digits = vec![0; n];
    gf::digits_into(u, q, &mut digits);
    let mut prefix = 0;
    for i in 0..n {
        if roles[i] == Role::Computable {
            let c = marg[i + 1][prefix * q..(prefix + 1) * q].to_vec();
            digits[i] = if c.iter().sum::<f64>() > 0.0 { construction::argmax(&c) } else { 0 };
        }
        prefix = prefix * q + digits[i] as usize;
    }
    prefix
}

impl Oracle {
    /// Enumerate `P`, `Pᵉ` (averaged frozen symbols) and `Pᵈ` for `spec`.
    pub fn run(law: &JointLaw, spec: &PolarSpec, d: &DistortionMetric) -> Result<Self> {
        check_guard(law, spec.n)?;
        check_spec(law, spec, &FrozenMode::Averaged)?;
        if d.nx() != law.src.nx() || d.q() != law.q() {
            return Err(Error::Dimension("distortion metric does not match the law".into()));
        }
        let (n, q) = (spec.n, law.q());
        let qn = pow(q, n);
        let ny = law.src.ny();
        let ny_n = pow(ny, n);
        let num_pairs = law.src.num_pairs();
        let blocks = pow(num_pairs, n);
        let en = Enumerator::new(n, law.modulus());
        let marg = marginal_levels(law, n, &en);
        cross_check_marginal(law, n, &marg)?;
        let roles = spec.roles();
        let fpos = frozen_positions(spec);
        let decoded: Vec<usize> = (0..qn).map(|u| brute_decode(u, &roles, &marg, n, q)).collect();

        // letter-summed distortion d(x^n, x̂^n) for every block and codeword
        let xh_digits: Vec<Vec<Symbol>> = (0..qn)
            .map(|u| {
                let mut v = vec![0; n];
                gf::digits_into(en.xh_index[u], q, &mut v);
                v
            })
            .collect();

        let chunks = CHUNKS.min(blocks);
        let stride = (blocks / 64).max(1);
        let parts: Vec<Result<Acc>> = par::map_range(chunks, |c| {
            let lo = c * blocks / chunks;
            let hi = (c + 1) * blocks / chunks;
            let mut acc = Acc::new(ny_n, qn, n);
            let mut digits = vec![0; n];
            let (mut scratch, mut cond_p, mut pe) = (Vec::new(), vec![0.0; qn], Vec::new());
            let mut xs = vec![0usize; n];
            for b in lo..hi {
                let (mass, rows) = pair_rows(law, b, n, &mut digits);
                if mass == 0.0 {
                    continue;
                }
                let mut y_idx = 0;
                for (j, &p) in digits.iter().enumerate() {
                    let (x, y) = law.src.pair(p as usize);
                    xs[j] = x;
                    y_idx = y_idx * ny + y;
                }
                en.conditional(&rows, &mut scratch, &mut cond_p);
                let levels = prefix_levels(&cond_p, n, q);
                encoder_conditional(&roles, &fpos, &FrozenMode::Averaged, &levels, &marg, n, q, &mut pe)?;
                if b % stride == 0 {
                    cross_check_block(law, &rows, &levels, &cond_p, n)?;
                }
                for i in 0..n {
                    for prefix in 0..pow(q, i) {
                        let w = levels[i][prefix];
                        if w <= 0.0 {
                            continue;
                        }
                        let c = normalized(&levels[i + 1][prefix * q..(prefix + 1) * q]);
                        let weight = mass * w;
                        acc.h_cond[i] += weight * entropy_nats(&c);
                        acc.z_cond[i] += weight * construction::bhattacharyya_of(&c);
                        let target = match roles[i] {
                            Role::Info => continue,
                            Role::Frozen => vec![1.0 / q as f64; q],
                            Role::Computable => normalized(&marg[i + 1][prefix * q..(prefix + 1) * q]),
                        };
                        acc.pinsker[i] += weight * (2.0 * kl_nats(&c, &target)).max(0.0).sqrt();
                    }
                }
                let yrow = y_idx * qn;
                for u in 0..qn {
                    let p = mass * cond_p[u];
                    let e = mass * pe[u];
                    acc.l1 += (p - e).abs();
                    acc.p_yu[yrow + u] += p;
                    acc.pe_yu[yrow + u] += e;
                    if p > 0.0 {
                        acc.dist_p += p * letters(d, &xs, &xh_digits[u]);
                    }
                    if e > 0.0 {
                        acc.dist_pe_u[u] += e * letters(d, &xs, &xh_digits[u]);
                        acc.dist_pd_u[u] += e * letters(d, &xs, &xh_digits[decoded[u]]);
                    }
                }
            }
            Ok(acc)
        });
        let mut acc = Acc::new(ny_n, qn, n);
        for p in parts {
            acc.merge(p?);
        }
        let p_u = (0..qn).map(|u| (0..ny_n).map(|y| acc.p_yu[y * qn + u]).sum()).collect();
        let pe_u = (0..qn).map(|u| (0..ny_n).map(|y| acc.pe_yu[y * qn + u]).sum()).collect();
        Ok(Oracle {
            n,
            q,
            d_max: d.d_max(),
            target: law.operating_point(d),
            frozen: spec.frozen.clone(),
            roles,
            ny,
            p_u,
            pe_u,
            p_yu: acc.p_yu,
            pe_yu: acc.pe_yu,
            dist_pe_u: acc.dist_pe_u,
            dist_pd_u: acc.dist_pd_u,
            dist_p: acc.dist_p,
            decoded,
            l1: acc.l1,
            h_cond: acc.h_cond,
            z_cond: acc.z_cond,
            pinsker: acc.pinsker,
            marg_levels: marg,
        })
    }

    fn ln_q(&self) -> f64 {
        (self.q as f64).ln()
    }

    fn qn(&self) -> usize {
        pow(self.q, self.n)
    }

    /// Frozen digits of `u` in ascending index order of `F`.
    fn frozen_key(&self, u: usize) -> usize {
        let mut digits = vec![0; self.n];
        gf::digits_into(u, self.q, &mut digits);
        self.frozen.iter().fold(0, |acc, &i| acc * self.q + digits[i] as usize)
    }

    /// Weight of `u` under the mode, relative to the averaged law.
    fn selector(&self, mode: &FrozenMode) -> Result<Vec<f64>> {
        match mode {
            FrozenMode::Averaged => Ok(vec![1.0; self.qn()]),
            FrozenMode::Fixed(v) => {
                if v.len() != self.frozen.len() {
                    return Err(Error::Dimension(format!("{} frozen values for |F| = {}", v.len(), self.frozen.len())));
                }
                if let Some(&s) = v.iter().find(|&&s| s as usize >= self.q) {
                    return Err(Error::SymbolOutOfRange { symbol: s, q: self.q as u32 });
                }
                let key = gf::digits_to_index(v, self.q);
                let scale = (self.q as f64).powi(self.frozen.len() as i32);
                Ok((0..self.qn()).map(|u| if self.frozen_key(u) == key { scale } else { 0.0 }).collect())
            }
        }
    }

    /// `Δ_n = H(Y^n | U_I, U_F) / n` (averaged) or `H(Y^n | U_I) / n` with a
    /// fixed frozen vector, under `Pᵉ`, base `q`.
    pub fn equivocation(&self, mode: &FrozenMode) -> Result<f64> {
        let sel = self.selector(mode)?;
        let qn = self.qn();
        let ny_n = self.p_yu.len() / qn;
        let mut digits = vec![0; self.n];
        let keep: Vec<bool> = self.roles.iter().map(|r| *r != Role::Computable).collect();
        let key_of = |u: usize, digits: &mut Vec<Symbol>| -> usize {
            gf::digits_into(u, self.q, digits);
            digits.iter().zip(&keep).filter(|(_, &k)| k).fold(0, |acc, (&d, _)| acc * self.q + d as usize)
        };
        let keys: Vec<usize> = (0..qn).map(|u| key_of(u, &mut digits)).collect();
        let nkeys = pow(self.q, keep.iter().filter(|&&k| k).count());
        let mut joint = vec![0.0; ny_n * nkeys];
        let mut msg = vec![0.0; nkeys];
        for y in 0..ny_n {
            for u in 0..qn {
                let v = self.pe_yu[y * qn + u] * sel[u];
                joint[y * nkeys + keys[u]] += v;
                msg[keys[u]] += v;
            }
        }
        Ok((entropy_nats(&joint) - entropy_nats(&msg)) / self.ln_q() / self.n as f64)
    }

    /// `H_{Pᵉ}(Y^n | X̂^n) / n` under the mode, base `q`.
    pub fn pe_conditional_entropy(&self, mode: &FrozenMode) -> Result<f64> {
        let sel = self.selector(mode)?;
        let qn = self.qn();
        let joint: Vec<f64> = self.pe_yu.iter().enumerate().map(|(i, v)| v * sel[i % qn]).collect();
        let marg: Vec<f64> = self.pe_u.iter().zip(&sel).map(|(v, s)| v * s).collect();
        Ok((entropy_nats(&joint) - entropy_nats(&marg)) / self.ln_q() / self.n as f64)
    }

    /// Entropy bookkeeping for the equivocation argument, averaged mode.
    pub fn entropy_gaps(&self) -> EntropyGaps {
        let lq = self.ln_q();
        let h_p_yx = entropy_nats(&self.p_yu) / lq;
        let h_pe_yx = entropy_nats(&self.pe_yu) / lq;
        let h_p_x = entropy_nats(&self.p_u) / lq;
        let h_pe_x = entropy_nats(&self.pe_u) / lq;
        let theta = kahan_sum(self.p_yu.iter().zip(&self.pe_yu).map(|(a, b)| (a - b).abs()));
        let alphabet = (self.p_yu.len() as f64).ln() / lq;
        // |H(P) - H(P')| <= -θ log(θ / |alphabet|) for θ <= 1/2
        let continuity_bound = if theta > 0.0 && theta <= 0.5 {
            Some(theta * (alphabet - theta.ln() / lq))
        } else if theta == 0.0 {
            Some(0.0)
        } else {
            None
        };
        EntropyGaps {
            conditional_gap: ((h_p_yx - h_p_x) - (h_pe_yx - h_pe_x)).abs(),
            joint_gap: (h_p_yx - h_pe_yx).abs(),
            marginal_gap: (h_p_x - h_pe_x).abs(),
            h_p_y_given_xhat: (h_p_yx - h_p_x) / self.n as f64,
            h_pe_y_given_xhat: (h_pe_yx - h_pe_x) / self.n as f64,
            yx_l1: theta,
            continuity_bound,
        }
    }

    /// Distortion and error quantities under the mode.
    pub fn distortion(&self, mode: &FrozenMode) -> Result<DistortionReport> {
        let sel = self.selector(mode)?;
        let n = self.n as f64;
        let mut pd = 0.0;
        let mut pe_d = 0.0;
        let mut p_err = 0.0;
        let mut d_err = 0.0;
        for u in 0..self.qn() {
            let s = sel[u];
            pd += s * self.dist_pd_u[u];
            pe_d += s * self.dist_pe_u[u];
            if self.decoded[u] != u {
                p_err += s * self.pe_u[u];
                d_err += s * self.dist_pd_u[u];
            }
        }
        let error_bound = self.computable_z_sum();
        Ok(DistortionReport {
            pd_distortion: pd / n,
            pe_distortion: pe_d / n,
            target_distortion: self.dist_p / n,
            error_probability: p_err,
            error_bound,
            no_error_part: (pd - d_err) / n,
            error_part: d_err / n,
        })
    }

    /// `Σ_{i∈D} Z(U_i | U^{i-1})` computed exactly under `P`.
    pub fn computable_z_sum(&self) -> f64 {
        (0..self.n).filter(|&i| self.roles[i] == Role::Computable).fold(0.0, |a, i| a + self.z_marg(i))
    }

    /// Exact `Z(U_i | U^{i-1})` under `P`.
    pub fn z_marg(&self, i: usize) -> f64 {
        let q = self.q;
        let lv = &self.marg_levels;
        let mut z = 0.0;
        for prefix in 0..pow(q, i) {
            let row = &lv[i + 1][prefix * q..(prefix + 1) * q];
            for a in 0..q {
                for b in 0..q {
                    if a != b {
                        z += (row[a] * row[b]).sqrt();
                    }
                }
            }
        }
        (z / (q as f64 - 1.0)).clamp(0.0, 1.0)
    }

    /// Exact `Z(U_i | U^{i-1}, X^n, Y^n)` under `P`.
    pub fn z_cond(&self, i: usize) -> f64 {
        self.z_cond[i].clamp(0.0, 1.0)
    }

    /// Exact `H_P(U_i | U^{i-1}, X^n, Y^n)`, base `q`.
    pub fn h_cond(&self, i: usize) -> f64 {
        self.h_cond[i] / self.ln_q()
    }

    /// Exact `H_P(U_i | U^{i-1})`, base `q`.
    pub fn h_marg(&self, i: usize) -> f64 {
        let q = self.q;
        let lv = &self.marg_levels;
        (0..pow(q, i))
            .map(|prefix| {
                let w = lv[i][prefix];
                if w <= 0.0 {
                    0.0
                } else {
                    w * entropy_nats(&normalized(&lv[i + 1][prefix * q..(prefix + 1) * q]))
                }
            })
            .sum::<f64>()
            / self.ln_q()
    }

    /// `‖P - Pᵉ‖` with the chain of upper bounds.
    pub fn variational(&self) -> VariationalReport {
        let lq = self.ln_q();
        let mut pinsker = 0.0;
        let mut entropy_form = 0.0;
        let mut z_form = 0.0;
        for i in 0..self.n {
            match self.roles[i] {
                Role::Info => {}
                Role::Frozen => {
                    pinsker += self.pinsker[i];
                    entropy_form += (2.0 * lq * (1.0 - self.h_cond(i)).max(0.0)).sqrt();
                    z_form += (2.0 * lq * (1.0 - self.z_cond(i).powi(2)).max(0.0)).sqrt();
                }
                Role::Computable => {
                    pinsker += self.pinsker[i];
                    let mi = (self.h_marg(i) - self.h_cond(i)).max(0.0);
                    entropy_form += (2.0 * lq * mi).sqrt();
                    z_form += (2.0 * lq * mi).sqrt();
                }
            }
        }
        VariationalReport { exact: self.l1, pinsker_bound: pinsker, appendix_bound: entropy_form, z_bound: z_form }
    }

    /// Decoder output index for every `u` index.
    pub fn decoder_table(&self) -> &[usize] {
        &self.decoded
    }

    /// `Pᵉ(u^n)` with averaged frozen symbols.
    pub fn pe_marginal(&self) -> &[f64] {
        &self.pe_u
    }

    /// `P(u^n)`.
    pub fn p_marginal(&self) -> &[f64] {
        &self.p_u
    }

    pub fn ny(&self) -> usize {
        self.ny
    }
}

fn letters(d: &DistortionMetric, x: &[usize], xh: &[Symbol]) -> f64 {
    x.iter().zip(xh).map(|(&a, &b)| d.get(a, b as usize)).sum()
}

/// Recompute a block's conditionals by the SC recursion along every path of
/// positive probability and compare with the enumeration.
fn cross_check_block(law: &JointLaw, rows: &[&[f64]], levels: &[Vec<f64>], cond_p: &[f64], n: usize) -> Result<()> {
    let q = law.q();
    let leaves: Vec<WeightVector> = rows.iter().map(|r| WeightVector::new(r.to_vec())).collect();
    let mut path = vec![0; n];
    for (u, &p) in cond_p.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        gf::digits_into(u, q, &mut path);
        let sc = construction::sc_all_conditionals(&leaves, &path, law.modulus())?;
        compare_path(&sc, levels, &path, q)?;
    }
    Ok(())
}

/// Terms of the entropy-continuity argument (base `q`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyGaps {
    /// `|H_P(Y^n|X̂^n) - H_{Pᵉ}(Y^n|X̂^n)|`.
    pub conditional_gap: f64,
    /// `|H_P(Y^n, X̂^n) - H_{Pᵉ}(Y^n, X̂^n)|`.
    pub joint_gap: f64,
    /// `|H_P(X̂^n) - H_{Pᵉ}(X̂^n)|`.
    pub marginal_gap: f64,
    pub h_p_y_given_xhat: f64,
    pub h_pe_y_given_xhat: f64,
    /// L1 distance of the `(Y^n, X̂^n)` marginals.
    pub yx_l1: f64,
    /// `θ log(|Y|^n q^n / θ)`, available when `θ <= 1/2`.
    pub continuity_bound: Option<f64>,
}

/// Exact per-letter distortion figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionReport {
    /// `E_{Pᵈ}[d(X^n, X̂^n)] / n`.
    pub pd_distortion: f64,
    /// `E_{Pᵉ}[d(X^n, X̂^n)] / n`.
    pub pe_distortion: f64,
    /// `E_P[d(X^n, X̂^n)] / n`; equals `D*`.
    pub target_distortion: f64,
    /// `Pr_{Pᵉ}[Û^n ≠ U^n]`.
    pub error_probability: f64,
    /// `Σ_{i∈D} Z(U_i | U^{i-1})`.
    pub error_bound: f64,
    /// `E_{Pᵈ}[d · 1{no error}] / n`.
    pub no_error_part: f64,
    /// `E_{Pᵈ}[d · 1{error}] / n`.
    pub error_part: f64,
}

/// `‖P - Pᵉ‖` (L1) and three upper bounds, loosest last.
///
/// `pinsker_bound` is `Σ_{i∈F∪D} E_P √(2 KL)`; `appendix_bound` replaces the
/// expectation by the conditional entropies (`1 - H` for frozen indices, the
/// conditional mutual information for computable ones), and `z_bound`
/// further replaces `1 - H` by `1 - Z²`. All use base-`q` information with
/// the `2 ln q` Pinsker constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalReport {
    pub exact: f64,
    pub pinsker_bound: f64,
    pub appendix_bound: f64,
    pub z_bound: f64,
}

/// Exact `Δ_n` for a spec; convenience over [`Oracle`].
pub fn exact_equivocation(law: &JointLaw, spec: &PolarSpec, d: &DistortionMetric, mode: &FrozenMode) -> Result<f64> {
    check_spec(law, spec, mode)?;
    Oracle::run(law, spec, d)?.equivocation(mode)
}

/// Exact distortion, error probability and its bound.
pub fn exact_distortion(law: &JointLaw, spec: &PolarSpec, d: &DistortionMetric, mode: &FrozenMode) -> Result<DistortionReport> {
    check_spec(law, spec, mode)?;
    Oracle::run(law, spec, d)?.distortion(mode)
}

/// Exact `‖P - Pᵉ‖` and its bounds (averaged frozen symbols).
pub fn exact_variational_distance(law: &JointLaw, spec: &PolarSpec, d: &DistortionMetric) -> Result<VariationalReport> {
    Ok(Oracle::run(law, spec, d)?.variational())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::Mode;
    use crate::source::{JointSource, TestChannel};

    fn dsbs_law() -> JointLaw {
        let src = JointSource::dsbs(0.1).unwrap();
        JointLaw::new(&src, &TestChannel::bsc(&src, 0.11).unwrap()).unwrap()
    }

    fn spec_with(law: &JointLaw, n: usize, frozen: Vec<usize>, computable: Vec<usize>) -> PolarSpec {
        PolarSpec::from_sets(law, n, frozen, computable, vec![0.5; n], vec![0.5; n], 0.3, Mode::Threshold).unwrap()
    }

    #[test]
    fn single_letter_joint() {
        let law = dsbs_law();
        let p = enumerate_joint(&law, 1).unwrap();
        for pair in 0..4 {
            for u in 0..2 {
                assert!((p.prob(pair, u) - law.joint()[pair * 2 + u]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn joint_is_normalized_and_consistent() {
        let law = dsbs_law();
        let p = enumerate_joint(&law, 2).unwrap();
        assert!((p.total() - 1.0).abs() < 1e-12);
        assert_eq!(p.support_size(), 64);
        let pm = p.marginal_pairs();
        for (b, m) in pm.iter().enumerate() {
            let expect = law.src.pmf()[b / 4] * law.src.pmf()[b % 4];
            assert!((m - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn guard_is_enforced() {
        let src = JointSource::dsbs(0.1).unwrap();
        let ch = TestChannel::new(vec![vec![0.8, 0.1, 0.1]; 4]).unwrap();
        let law = JointLaw::new(&src, &ch).unwrap();
        assert!(matches!(enumerate_joint(&law, 16), Err(Error::GuardExceeded { .. })));
    }

    #[test]
    fn no_frozen_no_computable_reproduces_target() {
        let law = dsbs_law();
        let spec = spec_with(&law, 4, vec![], vec![]);
        let p = enumerate_joint(&law, 4).unwrap();
        let pe = exact_pe(&law, &spec, &FrozenMode::Averaged).unwrap();
        assert!(p.l1_distance(&pe).unwrap() < 1e-14);
        let d = DistortionMetric::hamming(2, 2);
        let o = Oracle::run(&law, &spec, &d).unwrap();
        let r = o.distortion(&FrozenMode::Averaged).unwrap();
        assert_eq!(r.error_probability, 0.0);
        assert!((r.pd_distortion - 0.11).abs() < 1e-12);
        assert!((r.pe_distortion - r.pd_distortion).abs() < 1e-15);
        assert!(o.variational().exact < 1e-14);
    }

    #[test]
    fn all_frozen_gives_uniform_independent_u() {
        let law = dsbs_law();
        let spec = spec_with(&law, 4, (0..4).collect(), vec![]);
        let pe = exact_pe(&law, &spec, &FrozenMode::Averaged).unwrap();
        for b in 0..256 {
            let qb = (0..4).map(|j| law.src.pmf()[(b >> (2 * (3 - j))) & 3]).product::<f64>();
            for u in 0..16 {
                assert!((pe.prob(b, u) - qb / 16.0).abs() < 1e-15);
            }
        }
        let d = DistortionMetric::hamming(2, 2);
        let o = Oracle::run(&law, &spec, &d).unwrap();
        let h_y = law.src.entropy_y(2);
        assert!((o.equivocation(&FrozenMode::Averaged).unwrap() - h_y).abs() < 1e-12);
    }

    #[test]
    fn fixed_mode_requires_matching_length() {
        let law = dsbs_law();
        let spec = spec_with(&law, 2, vec![0], vec![]);
        assert!(exact_pe(&law, &spec, &FrozenMode::Fixed(vec![])).is_err());
        assert!(exact_pe(&law, &spec, &FrozenMode::Fixed(vec![2])).is_err());
        let pe = exact_pe(&law, &spec, &FrozenMode::Fixed(vec![1])).unwrap();
        assert!((pe.total() - 1.0).abs() < 1e-12);
    }
}
