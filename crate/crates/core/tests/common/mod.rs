//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's transform or recursion code.
#![allow(dead_code)]

use privpolar::source::{DistortionMetric, JointLaw, JointSource, TestChannel};

/// Dense `G_n = G^{⊗k}` with `G = [[1,0],[1,1]]`, built by Kronecker expansion.
pub fn dense_kronecker(n: usize) -> Vec<Vec<u32>> {
    let mut g = vec![vec![1u32]];
    let kernel = [[1u32, 0], [1, 1]];
    while g.len() < n {
        let m = g.len();
        let mut next = vec![vec![0u32; 2 * m]; 2 * m];
        for (bi, krow) in kernel.iter().enumerate() {
            for (bj, &kv) in krow.iter().enumerate() {
                for i in 0..m {
                    for j in 0..m {
                        next[bi * m + i][bj * m + j] = kv * g[i][j];
                    }
                }
            }
        }
        g = next;
    }
    g
}

/// Row-vector product `u G mod q`.
pub fn row_times(u: &[u32], g: &[Vec<u32>], q: u32) -> Vec<u32> {
    let n = u.len();
    (0..n)
        .map(|j| {
            let s: u64 = (0..n).map(|i| u[i] as u64 * g[i][j] as u64).sum();
            (s % q as u64) as u32
        })
        .collect()
}

/// Base-`q` digits of `idx`, most significant first.
pub fn digits(mut idx: usize, q: usize, n: usize) -> Vec<u32> {
    let mut out = vec![0u32; n];
    for d in out.iter_mut().rev() {
        *d = (idx % q) as u32;
        idx /= q;
    }
    out
}

/// `P(u^n)` for a product law on `x̂^n` (`rows[j]` is the law of `x̂_j`),
/// with `x̂ = u G_n`, indexed by the base-`q` value of `u`.
pub fn brute_joint(rows: &[Vec<f64>], q: usize) -> Vec<f64> {
    let n = rows.len();
    let g = dense_kronecker(n);
    let total = q.pow(n as u32);
    (0..total)
        .map(|ui| {
            let u = digits(ui, q, n);
            let xh = row_times(&u, &g, q as u32);
            xh.iter().enumerate().map(|(j, &a)| rows[j][a as usize]).product()
        })
        .collect()
}

/// Normalized `P(u_i | u^{i-1})` from the full table, or `None` when the
/// prefix has zero probability.
pub fn brute_conditional(p: &[f64], n: usize, q: usize, prefix: &[u32]) -> Option<Vec<f64>> {
    let i = prefix.len();
    let tail = q.pow((n - i - 1) as u32);
    let base = prefix.iter().fold(0usize, |acc, &d| acc * q + d as usize);
    let w: Vec<f64> = (0..q)
        .map(|a| {
            let start = (base * q + a) * tail;
            p[start..start + tail].iter().sum()
        })
        .collect();
    let s: f64 = w.iter().sum();
    (s > 0.0).then(|| w.iter().map(|v| v / s).collect())
}

fn h(p: &[f64], q: f64) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log(q)).sum()
}

/// `(I(XY; X̂), E d, H(Y | X̂))` in base `q`, by direct summation.
pub fn direct_point(q_xy: &[Vec<f64>], ch: &[Vec<f64>], d: &[Vec<f64>]) -> (f64, f64, f64) {
    let (nx, ny, q) = (q_xy.len(), q_xy[0].len(), ch[0].len());
    let qf = q as f64;
    let mut joint = Vec::new();
    let mut prior = vec![0.0; q];
    let mut y_xh = vec![0.0; ny * q];
    let mut pairs = Vec::new();
    let mut dist = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            pairs.push(q_xy[x][y]);
            for a in 0..q {
                let v = q_xy[x][y] * ch[x * ny + y][a];
                joint.push(v);
                prior[a] += v;
                y_xh[y * q + a] += v;
                dist += v * d[x][a];
            }
        }
    }
    let rate = h(&pairs, qf) + h(&prior, qf) - h(&joint, qf);
    (rate, dist, h(&y_xh, qf) - h(&prior, qf))
}

pub struct Fixture {
    pub name: &'static str,
    pub law: JointLaw,
    pub d: DistortionMetric,
}

fn law(src: &JointSource, rows: Vec<Vec<f64>>) -> JointLaw {
    JointLaw::new(src, &TestChannel::new(rows).unwrap()).unwrap()
}

fn by_x(src: &JointSource, f: impl Fn(usize) -> Vec<f64>) -> Vec<Vec<f64>> {
    (0..src.num_pairs()).map(|p| f(src.pair(p).0)).collect()
}

/// DSBS(0.1) with `X̂ = X ⊕ Bern(0.11)`.
pub fn dsbs() -> Fixture {
    let src = JointSource::dsbs(0.1).unwrap();
    let ch = TestChannel::bsc(&src, 0.11).unwrap();
    Fixture { name: "dsbs/bsc", law: JointLaw::new(&src, &ch).unwrap(), d: DistortionMetric::hamming(2, 2) }
}

/// Z-channel-correlated source with an asymmetric binary test channel.
pub fn z_asym() -> Fixture {
    let src = JointSource::z_channel(0.3).unwrap();
    let rows = by_x(&src, |x| if x == 0 { vec![0.95, 0.05] } else { vec![0.25, 0.75] });
    Fixture { name: "z/asym", law: law(&src, rows), d: DistortionMetric::hamming(2, 2) }
}

/// Skewed `X` with a BSC test channel; the reconstruction prior is far from
/// uniform, so small-`n` constructions have computable indices.
pub fn skewed() -> Fixture {
    let src = JointSource::new(vec![vec![0.81, 0.09], vec![0.01, 0.09]]).unwrap();
    let ch = TestChannel::bsc(&src, 0.11).unwrap();
    Fixture { name: "skewed/bsc", law: JointLaw::new(&src, &ch).unwrap(), d: DistortionMetric::hamming(2, 2) }
}

fn ternary_metric() -> DistortionMetric {
    DistortionMetric::new(vec![vec![0.0, 1.0, 0.5], vec![1.0, 0.0, 0.5]]).unwrap()
}

/// DSBS(0.1) with a ternary reconstruction (symbol 2 is an erasure-like
/// middle value).
pub fn dsbs_ternary() -> Fixture {
    let src = JointSource::dsbs(0.1).unwrap();
    let rows = by_x(&src, |x| if x == 0 { vec![0.8, 0.1, 0.1] } else { vec![0.1, 0.8, 0.1] });
    Fixture { name: "dsbs/ternary", law: law(&src, rows), d: ternary_metric() }
}

/// Z-channel source with a ternary reconstruction depending on `(x, y)`.
pub fn z_ternary() -> Fixture {
    let src = JointSource::z_channel(0.3).unwrap();
    let rows = (0..src.num_pairs())
        .map(|p| match src.pair(p) {
            (0, _) => vec![0.85, 0.05, 0.1],
            (_, 0) => vec![0.3, 0.5, 0.2],
            _ => vec![0.05, 0.8, 0.15],
        })
        .collect();
    Fixture { name: "z/ternary", law: law(&src, rows), d: ternary_metric() }
}

/// Binary fixtures small enough for exact analysis at `n = 8`.
pub fn binary_fixtures() -> Vec<Fixture> {
    vec![dsbs(), z_asym(), skewed()]
}

pub fn ternary_fixtures() -> Vec<Fixture> {
    vec![dsbs_ternary(), z_ternary()]
}
