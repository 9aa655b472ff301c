//! Randomized successive-cancellation encoder, SC decoder with argmax
//! fill-in on the computable set, and a batch trial runner.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::construction::{self, Canceller, Halt, PolarSpec, Role};
use crate::error::{Error, Result};
use crate::gf::{self, Symbol};
use crate::info::entropy_nats;
use crate::par;
use crate::rng;
use crate::source::{DistortionMetric, JointLaw};

/// The transmitted symbols `u_I`, in ascending index order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message(pub Vec<Symbol>);

fn check_inputs(spec: &PolarSpec, law: &JointLaw, frozen: &[Symbol]) -> Result<()> {
    if spec.q != law.modulus() {
        return Err(Error::Dimension("spec and law use different alphabets".into()));
    }
    check_frozen(spec, frozen)
}

fn check_frozen(spec: &PolarSpec, frozen: &[Symbol]) -> Result<()> {
    if frozen.len() != spec.frozen.len() {
        return Err(Error::Dimension(format!("{} frozen values for |F| = {}", frozen.len(), spec.frozen.len())));
    }
    if let Some(&s) = frozen.iter().find(|&&s| s >= spec.q.get()) {
        return Err(Error::SymbolOutOfRange { symbol: s, q: spec.q.get() });
    }
    Ok(())
}

fn frozen_lookup(spec: &PolarSpec, frozen: &[Symbol]) -> Vec<Symbol> {
    let mut v = vec![0; spec.n];
    for (&i, &s) in spec.frozen.iter().zip(frozen) {
        v[i] = s;
    }
    v
}

/// Draw `u^n`: information indices from `P(u_i | u^{i-1}, x^n, y^n)`,
/// computable indices from `P(u_i | u^{i-1})`, frozen indices from `frozen`.
pub fn encode(
    spec: &PolarSpec,
    law: &JointLaw,
    x: &[Symbol],
    y: &[Symbol],
    frozen: &[Symbol],
    seed: u64,
) -> Result<(Vec<Symbol>, Message)> {
    check_inputs(spec, law, frozen)?;
    if x.len() != spec.n || y.len() != spec.n {
        return Err(Error::Dimension(format!("source block must have length {}", spec.n)));
    }
    if let Some(&v) = x.iter().find(|&&v| v as usize >= law.src.nx()) {
        return Err(Error::SymbolOutOfRange { symbol: v, q: law.src.nx() as u32 });
    }
    if let Some(&v) = y.iter().find(|&&v| v as usize >= law.src.ny()) {
        return Err(Error::SymbolOutOfRange { symbol: v, q: law.src.ny() as u32 });
    }
    let mut canc = Canceller::new(spec.n, spec.q, 2)?;
    let mut r = rng::stream(seed, 0);
    encode_with(&mut canc, spec, law, &spec.roles(), x, y, &frozen_lookup(spec, frozen), &mut r)
}

#[allow(clippy::too_many_arguments)]
fn encode_with<R: Rng>(
    canc: &mut Canceller,
    spec: &PolarSpec,
    law: &JointLaw,
    roles: &[Role],
    x: &[Symbol],
    y: &[Symbol],
    frozen_at: &[Symbol],
    r: &mut R,
) -> Result<(Vec<Symbol>, Message)> {
    construction::fill_conditioned(canc.leaves_mut(0), law, x, y);
    construction::fill_marginal(canc.leaves_mut(1), law.prior());
    canc.normalize_leaves();
    canc.run(&mut |i, leaf| {
        let w = match roles[i] {
            Role::Frozen => return Ok(frozen_at[i]),
            Role::Info => leaf.lane(0),
            Role::Computable => leaf.lane(1),
        };
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(Halt::Fail(Error::ImpossiblePath(i)));
        }
        Ok(rng::sample_index(r, w) as Symbol)
    })?;
    let u = canc.u().to_vec();
    let msg = Message(spec.info.iter().map(|&i| u[i]).collect());
    Ok((u, msg))
}

/// Recover `(û^n, x̂^n)`: message and frozen symbols are copied, computable
/// indices take the most likely value given `û^{i-1}` (smallest symbol on
/// ties), and `x̂^n = û^n G_n`.
pub fn decode(spec: &PolarSpec, msg: &Message, frozen: &[Symbol]) -> Result<(Vec<Symbol>, Vec<Symbol>)> {
    check_frozen(spec, frozen)?;
    if msg.0.len() != spec.info.len() {
        return Err(Error::Dimension(format!("message has {} symbols, |I| = {}", msg.0.len(), spec.info.len())));
    }
    if let Some(&s) = msg.0.iter().find(|&&s| s >= spec.q.get()) {
        return Err(Error::SymbolOutOfRange { symbol: s, q: spec.q.get() });
    }
    let mut canc = Canceller::new(spec.n, spec.q, 1)?;
    decode_with(&mut canc, spec, &spec.roles(), msg, &frozen_lookup(spec, frozen))
}

fn decode_with(
    canc: &mut Canceller,
    spec: &PolarSpec,
    roles: &[Role],
    msg: &Message,
    frozen_at: &[Symbol],
) -> Result<(Vec<Symbol>, Vec<Symbol>)> {
    let mut known = frozen_at.to_vec();
    for (&i, &s) in spec.info.iter().zip(&msg.0) {
        known[i] = s;
    }
    if spec.computable.is_empty() {
        let mut xh = known.clone();
        gf::transform_in_place(&mut xh, spec.q);
        return Ok((known, xh));
    }
    construction::fill_marginal(canc.leaves_mut(0), &spec.prior);
    canc.normalize_leaves();
    canc.run(&mut |i, leaf| {
        Ok(match roles[i] {
            Role::Computable => construction::argmax(leaf.lane(0)),
            _ => known[i],
        })
    })?;
    Ok((canc.u().to_vec(), canc.codeword().to_vec()))
}

/// Frozen-symbol policy for a batch of trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrozenPolicy {
    Fixed(Vec<Symbol>),
    /// Fresh i.i.d. uniform frozen symbols in every trial.
    Uniform,
    Zero,
}

impl FrozenPolicy {
    pub fn label(&self) -> String {
        match self {
            FrozenPolicy::Fixed(v) => {
                format!("fixed({})", v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","))
            }
            FrozenPolicy::Uniform => "uniform".into(),
            FrozenPolicy::Zero => "zero".into(),
        }
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    /// `d(x^n, x̂^n) / n`.
    pub distortion: f64,
    /// `û^n ≠ u^n`.
    pub decode_mismatch: bool,
    /// Seed of the trial's encoder stream.
    pub encoder_seed: u64,
}

/// Aggregate of a batch of trials.
///
/// `equivocation_proxy` is the per-letter empirical `H(Y | X̂)` pooled over
/// all trials and positions. It is not the block equivocation
/// `H(Y^n | U_I) / n`, which is only available exactly at small `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub n: usize,
    pub q: u32,
    pub info_size: usize,
    pub rate: f64,
    pub trials: usize,
    pub mean_distortion: f64,
    pub distortion_half_width: f64,
    pub error_rate: f64,
    pub error_half_width: f64,
    /// `Σ_{i∈D} Z_marg[i]` from the spec's estimates.
    pub error_bound_estimate: f64,
    pub equivocation_proxy: f64,
    pub frozen_policy: String,
    pub seed: u64,
    pub spec_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<TrialRecord>>,
}

/// Normal-approximation 95% half-width.
pub const Z95: f64 = 1.96;

fn half_width(values: impl Iterator<Item = f64> + Clone, mean: f64, count: usize) -> f64 {
    if count < 2 {
        return 0.0;
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
    Z95 * (var / count as f64).sqrt()
}

/// Run `trials` independent source blocks through encoder and decoder.
///
/// Trial `t` draws everything from stream `t` of `seed`, so it can be
/// reproduced in isolation.
pub fn run_trials(
    spec: &PolarSpec,
    law: &JointLaw,
    d: &DistortionMetric,
    policy: &FrozenPolicy,
    trials: usize,
    seed: u64,
    keep_records: bool,
) -> Result<ExperimentReport> {
    if trials < 1 {
        return Err(Error::Invalid("at least one trial is required".into()));
    }
    if d.nx() != law.src.nx() || d.q() != law.q() {
        return Err(Error::Dimension("distortion metric does not match the law".into()));
    }
    if let FrozenPolicy::Fixed(v) = policy {
        check_inputs(spec, law, v)?;
    } else {
        check_inputs(spec, law, &vec![0; spec.frozen.len()])?;
    }
    let roles = spec.roles();
    let q = law.q();
    let ny = law.src.ny();
    const CHUNKS: usize = 64;
    let chunks = CHUNKS.min(trials);
    let parts: Vec<Result<(Vec<TrialRecord>, Vec<u64>)>> = par::map_range(chunks, |c| {
        let lo = c * trials / chunks;
        let hi = (c + 1) * trials / chunks;
        let mut enc = Canceller::new(spec.n, spec.q, 2)?;
        let mut dec = Canceller::new(spec.n, spec.q, 1)?;
        let mut counts = vec![0u64; ny * q];
        let mut out = Vec::with_capacity(hi - lo);
        for t in lo..hi {
            let mut r = rng::stream(seed, t as u64);
            let (x, y) = law.src.sample(spec.n, &mut r);
            let frozen = match policy {
                FrozenPolicy::Fixed(v) => v.clone(),
                FrozenPolicy::Zero => vec![0; spec.frozen.len()],
                FrozenPolicy::Uniform => (0..spec.frozen.len()).map(|_| r.gen_range(0..q as Symbol)).collect(),
            };
            let frozen_at = frozen_lookup(spec, &frozen);
            let encoder_seed: u64 = r.gen();
            let mut er = rng::stream(encoder_seed, 0);
            let (u, msg) = encode_with(&mut enc, spec, law, &roles, &x, &y, &frozen_at, &mut er)?;
            let (u_hat, xh) = decode_with(&mut dec, spec, &roles, &msg, &frozen_at)?;
            for (&b, &a) in y.iter().zip(&xh) {
                counts[b as usize * q + a as usize] += 1;
            }
            out.push(TrialRecord {
                trial: t as u64,
                distortion: d.average(&x, &xh),
                decode_mismatch: u_hat != u,
                encoder_seed,
            });
        }
        Ok((out, counts))
    });
    let mut records = Vec::with_capacity(trials);
    let mut counts = vec![0u64; ny * q];
    for p in parts {
        let (r, c) = p?;
        records.extend(r);
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
    }
    let t = trials as f64;
    let mean = records.iter().map(|r| r.distortion).sum::<f64>() / t;
    let err = records.iter().filter(|r| r.decode_mismatch).count() as f64 / t;
    let total: u64 = counts.iter().sum();
    let joint: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let xh_marg: Vec<f64> = (0..q).map(|a| (0..ny).map(|b| joint[b * q + a]).sum()).collect();
    let proxy = (entropy_nats(&joint) - entropy_nats(&xh_marg)) / (q as f64).ln();
    Ok(ExperimentReport {
        n: spec.n,
        q: spec.q.get(),
        info_size: spec.info.len(),
        rate: spec.rate(),
        trials,
        mean_distortion: mean,
        distortion_half_width: half_width(records.iter().map(|r| r.distortion), mean, trials),
        error_rate: err,
        error_half_width: if trials > 1 { Z95 * (err * (1.0 - err) / t).sqrt() } else { 0.0 },
        error_bound_estimate: spec.computable.iter().map(|&i| spec.z_marg[i]).fold(0.0, |a, z| a + z),
        equivocation_proxy: proxy,
        frozen_policy: policy.label(),
        seed,
        spec_seed: spec.seed,
        records: keep_records.then_some(records),
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned two-column text.
    pub fn to_text(&self) -> String {
        let rows: Vec<(&str, String)> = vec![
            ("n", self.n.to_string()),
            ("q", self.q.to_string()),
            ("|I|", self.info_size.to_string()),
            ("rate R_n", format!("{:.6}", self.rate)),
            ("trials", self.trials.to_string()),
            ("distortion D_n", format!("{:.6} +/- {:.6}", self.mean_distortion, self.distortion_half_width)),
            ("error rate P_e", format!("{:.6} +/- {:.6}", self.error_rate, self.error_half_width)),
            ("sum_D Z_marg", format!("{:.6}", self.error_bound_estimate)),
            ("H(Y|Xhat) proxy", format!("{:.6}", self.equivocation_proxy)),
            ("frozen policy", self.frozen_policy.clone()),
            ("seed", self.seed.to_string()),
            ("spec seed", self.spec_seed.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = String::new();
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<width$}  {v}");
        }
        s
    }

    /// Per-trial CSV (`trial,distortion,decode_mismatch,encoder_seed`).
    pub fn records_csv(&self) -> Option<String> {
        let recs = self.records.as_ref()?;
        let mut s = String::from("trial,distortion,decode_mismatch,encoder_seed\n");
        for r in recs {
            let _ = writeln!(s, "{},{:?},{},{}", r.trial, r.distortion, r.decode_mismatch as u8, r.encoder_seed);
        }
        Some(s)
    }
}
