//! Line-oriented `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! source = dsbs(0.1)          # dsbs(p) | zchannel(a) | matrix
//! source.Q = [
//!   0.45 0.05
//!   0.05 0.45
//! ]
//! distortion = hamming        # hamming | matrix (then distortion.d = [ ... ])
//! channel = bsc(0.11)         # bsc(p) | explicit (channel.P) | region (channel.D_max, channel.Delta_min)
//! n = 1024
//! mode = threshold            # threshold | rank(0.6)
//! ```

use std::collections::HashMap;
use std::path::PathBuf;

use privpolar::codec::FrozenPolicy;
use privpolar::construction::Mode;
use privpolar::source::{DistortionMetric, JointSource};

use crate::error::CliError;

const KEYS: &[&str] = &[
    "source",
    "source.Q",
    "distortion",
    "distortion.d",
    "channel",
    "channel.P",
    "channel.D_max",
    "channel.Delta_min",
    "q",
    "n",
    "beta",
    "mode",
    "rate",
    "samples",
    "trials",
    "seed",
    "frozen",
    "grid_res",
    "refine_iters",
    "out_dir",
    "epsilon",
    "limit",
];

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Bsc(f64),
    Explicit(Vec<Vec<f64>>),
    /// Minimum-rate channel from a region query.
    Region { d_max: f64, delta_min: f64 },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: JointSource,
    pub metric: DistortionMetric,
    pub channel: Option<ChannelSpec>,
    pub q: u32,
    pub n: usize,
    pub beta: f64,
    pub mode: Mode,
    pub samples: usize,
    pub trials: usize,
    pub seed: u64,
    pub frozen: FrozenPolicy,
    pub grid_res: usize,
    pub refine_iters: usize,
    pub out_dir: Option<PathBuf>,
    pub epsilon: f64,
    pub limit: usize,
}

enum Value {
    Scalar(String),
    Matrix(Vec<Vec<f64>>),
}

struct Entry {
    line: usize,
    value: Value,
}

fn err(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse { line, msg: msg.into() }
}

fn strip_comment(s: &str) -> &str {
    s.split('#').next().unwrap_or("").trim()
}

fn parse_row(line: usize, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| err(line, format!("bad number '{t}'"))))
        .collect()
}

fn entries(text: &str) -> Result<HashMap<String, Entry>, CliError> {
    let mut out = HashMap::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    while let Some((no, raw)) = lines.next() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| err(no, "expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return Err(err(no, format!("unknown key '{key}'")));
        }
        let value = if value == "[" {
            let mut rows = Vec::new();
            loop {
                let (rno, raw) = lines.next().ok_or_else(|| err(no, format!("unterminated matrix for '{key}'")))?;
                let row = strip_comment(raw);
                if row == "]" {
                    break;
                }
                if !row.is_empty() {
                    rows.push(parse_row(rno, row)?);
                }
            }
            Value::Matrix(rows)
        } else {
            Value::Scalar(value.to_string())
        };
        if out.insert(key.to_string(), Entry { line: no, value }).is_some() {
            return Err(err(no, format!("duplicate key '{key}'")));
        }
    }
    Ok(out)
}

/// `name(arg, ...)` with numeric arguments.
fn call(line: usize, s: &str) -> Result<(String, Vec<f64>), CliError> {
    match s.split_once('(') {
        None => Ok((s.to_string(), vec![])),
        Some((name, rest)) => {
            let inner = rest.strip_suffix(')').ok_or_else(|| err(line, format!("missing ')' in '{s}'")))?;
            Ok((name.trim().to_string(), parse_row(line, inner)?))
        }
    }
}

struct Reader {
    map: HashMap<String, Entry>,
}

impl Reader {
    fn scalar(&self, key: &str) -> Result<Option<(usize, &str)>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Entry { line, value: Value::Scalar(s) }) => Ok(Some((*line, s.as_str()))),
            Some(Entry { line, .. }) => Err(err(*line, format!("'{key}' takes a scalar value"))),
        }
    }

    fn matrix(&self, key: &str, needed_by: usize) -> Result<Vec<Vec<f64>>, CliError> {
        match self.map.get(key) {
            None => Err(err(needed_by, format!("'{key}' block is required"))),
            Some(Entry { value: Value::Matrix(m), .. }) => Ok(m.clone()),
            Some(Entry { line, .. }) => Err(err(*line, format!("'{key}' takes a '[' ... ']' block"))),
        }
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.scalar(key)? {
            None => Ok(default),
            Some((line, s)) => s.parse().map_err(|_| err(line, format!("bad value for '{key}': '{s}'"))),
        }
    }

    fn arg(line: usize, args: &[f64], name: &str) -> Result<f64, CliError> {
        match args {
            [v] => Ok(*v),
            _ => Err(err(line, format!("{name}(..) takes one argument"))),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let r = Reader { map: entries(text)? };

        let (sl, s) = r.scalar("source")?.ok_or_else(|| err(0, "'source' is required"))?;
        let (name, args) = call(sl, s)?;
        let source = match name.as_str() {
            "dsbs" => JointSource::dsbs(Reader::arg(sl, &args, "dsbs")?),
            "zchannel" => JointSource::z_channel(Reader::arg(sl, &args, "zchannel")?),
            "matrix" => JointSource::new(r.matrix("source.Q", sl)?),
            _ => return Err(err(sl, format!("unknown source '{s}'"))),
        }
        .map_err(|e| err(sl, e.to_string()))?;

        let q: u32 = r.num("q", 2)?;
        let metric = match r.scalar("distortion")? {
            None => DistortionMetric::hamming(source.nx(), q as usize),
            Some((_, "hamming")) => DistortionMetric::hamming(source.nx(), q as usize),
            Some((l, "matrix")) => DistortionMetric::new(r.matrix("distortion.d", l)?).map_err(|e| err(l, e.to_string()))?,
            Some((l, other)) => return Err(err(l, format!("unknown distortion '{other}'"))),
        };

        let channel = match r.scalar("channel")? {
            None => None,
            Some((l, s)) => {
                let (name, args) = call(l, s)?;
                Some(match name.as_str() {
                    "bsc" => ChannelSpec::Bsc(Reader::arg(l, &args, "bsc")?),
                    "explicit" => ChannelSpec::Explicit(r.matrix("channel.P", l)?),
                    "region" => {
                        let d_max = r.scalar("channel.D_max")?.ok_or_else(|| err(l, "'channel.D_max' is required"))?;
                        let delta = r.scalar("channel.Delta_min")?.ok_or_else(|| err(l, "'channel.Delta_min' is required"))?;
                        ChannelSpec::Region {
                            d_max: d_max.1.parse().map_err(|_| err(d_max.0, "bad 'channel.D_max'"))?,
                            delta_min: delta.1.parse().map_err(|_| err(delta.0, "bad 'channel.Delta_min'"))?,
                        }
                    }
                    _ => return Err(err(l, format!("unknown channel '{s}'"))),
                })
            }
        };

        let mode = match r.scalar("mode")? {
            None | Some((_, "threshold")) => Mode::Threshold,
            Some((l, s)) => match call(l, s)? {
                (name, args) if name == "rank" => Mode::Rank { rate: Reader::arg(l, &args, "rank")? },
                _ => return Err(err(l, format!("unknown mode '{s}'"))),
            },
        };
        let mode = match (mode, r.scalar("rate")?) {
            (Mode::Threshold, None) => Mode::Threshold,
            (Mode::Rank { rate }, None) => Mode::Rank { rate },
            (_, Some((l, s))) => Mode::Rank { rate: s.parse().map_err(|_| err(l, "bad 'rate'"))? },
        };

        let frozen = match r.scalar("frozen")? {
            None | Some((_, "uniform")) => FrozenPolicy::Uniform,
            Some((_, "zero")) => FrozenPolicy::Zero,
            Some((l, s)) => match call(l, s)? {
                (name, args) if name == "fixed" => FrozenPolicy::Fixed(
                    args.iter()
                        .map(|&v| if v >= 0.0 && v.fract() == 0.0 { Ok(v as u32) } else { Err(err(l, "frozen symbols must be integers")) })
                        .collect::<Result<_, _>>()?,
                ),
                _ => return Err(err(l, format!("unknown frozen policy '{s}'"))),
            },
        };

        Ok(RunConfig {
            source,
            metric,
            channel,
            q,
            n: r.num("n", 1024)?,
            beta: r.num("beta", 0.3)?,
            mode,
            samples: r.num("samples", 10_000)?,
            trials: r.num("trials", 1000)?,
            seed: r.num("seed", 0)?,
            frozen,
            grid_res: r.num("grid_res", 20)?,
            refine_iters: r.num("refine_iters", 12)?,
            out_dir: r.scalar("out_dir")?.map(|(_, s)| PathBuf::from(s)),
            epsilon: r.num("epsilon", 1e-3)?,
            limit: r.num("limit", privpolar::timeshare::DEFAULT_LIMIT)?,
        })
    }
}
