//! Ping-pong benchmark driver, CSV samples and single-vs-twin comparison.
//!
//! Each block runs `senders_per_block` pairs: member `i` sends to member
//! `senders + i`, and once every forward transfer in the block has arrived
//! the receivers send the same amount back. The round-trip time of a pair is
//! its forward duration plus its reverse duration. All blocks start at t=0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use thiserror::Error;

use crate::allocation::{allocate_block, AllocError, AllocationRequest, Block, WorkloadType};
use crate::config::ConfigError;
use crate::netsim::{simulate, Flow, FlowStatus, SimError};
use crate::topology::{
    build_cluster, ChannelKind, ClusterConfig, ClusterState, Mode, NodeId, TierName,
};

pub const CSV_HEADER: [&str; 8] = [
    "mode",
    "tier",
    "blocks",
    "block",
    "flow",
    "size_bytes",
    "rtt_us",
    "status",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("invalid bench spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("csv header mismatch: found `{0}`")]
    Header(String),
    #[error("csv row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("size ladders differ: single has {single:?}, twin has {twin:?}")]
    MismatchedLadders { single: Vec<u64>, twin: Vec<u64> },
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Csv(e.to_string())
    }
}

/// Powers of two from `min` to `max` inclusive, doubling. A zero `min`
/// contributes a leading 0 and the ladder continues from 1.
pub fn power_ladder(min: u64, max: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut s = min;
    if s == 0 {
        out.push(0);
        s = 1;
    }
    while s <= max {
        out.push(s);
        match s.checked_mul(2) {
            Some(n) => s = n,
            None => break,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchSpec {
    pub mode: Mode,
    /// Tier of the data channel.
    pub tier: TierName,
    pub n_blocks: usize,
    /// Compute nodes per block, the dedicated master included.
    pub nodes_per_block: usize,
    pub senders_per_block: usize,
    pub sizes: Vec<u64>,
    pub reps: usize,
}

impl BenchSpec {
    /// Four-node blocks, two senders each, sizes 2^10..=2^30, one rep.
    pub fn new(mode: Mode, tier: TierName, n_blocks: usize) -> Self {
        BenchSpec {
            mode,
            tier,
            n_blocks,
            nodes_per_block: 4,
            senders_per_block: 2,
            sizes: power_ladder(1 << 10, 1 << 30),
            reps: 1,
        }
    }

    pub fn with_sizes(mut self, sizes: Vec<u64>) -> Self {
        self.sizes = sizes;
        self
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidSpec(m.to_string()));
        if !(1..=2).contains(&self.n_blocks) {
            return bad("blocks must be 1 or 2");
        }
        if self.senders_per_block == 0 {
            return bad("need at least one sender per block");
        }
        if self.senders_per_block * 2 > self.nodes_per_block {
            return bad("each sender needs its own receiver inside the block");
        }
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.sizes.is_empty() {
            return bad("size ladder is empty");
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sizes must be strictly increasing");
        }
        Ok(())
    }

    /// Builds a cluster from `base` with this spec's mode and data tier and
    /// allocates the benchmark blocks.
    pub fn prepare(&self, base: &ClusterConfig) -> Result<(ClusterState, Vec<Block>), BenchError> {
        self.validate()?;
        let config = ClusterConfig {
            mode: self.mode,
            io_tier: self.tier,
            ..base.clone()
        };
        let mut state = build_cluster(&config)?;
        let workers = match self.mode {
            Mode::Conventional => self.nodes_per_block,
            Mode::Independent => self.nodes_per_block - 1,
        };
        let mut blocks = Vec::with_capacity(self.n_blocks);
        for i in 0..self.n_blocks {
            let req =
                AllocationRequest::new(format!("bench{i}"), workers, WorkloadType::IoIntensive);
            let (next, block) = allocate_block(&state, &req)?;
            state = next;
            blocks.push(block);
        }
        Ok((state, blocks))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSample {
    pub mode: Mode,
    pub tier: TierName,
    pub n_blocks: usize,
    pub block: usize,
    pub flow: usize,
    pub size_bytes: u64,
    pub rtt_us: Option<f64>,
    pub status: FlowStatus,
}

/// Round trip of one sender/receiver pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairResult {
    pub status: FlowStatus,
    pub rtt_us: Option<f64>,
}

fn failed() -> PairResult {
    PairResult {
        status: FlowStatus::FailedUnreliable,
        rtt_us: None,
    }
}

/// Per-block barrier: arrival of the last completed forward transfer.
fn barriers(completions: &[Vec<Option<f64>>]) -> Vec<Option<f64>> {
    completions
        .iter()
        .map(|block| {
            block
                .iter()
                .flatten()
                .copied()
                .max_by(|a, b| a.total_cmp(b))
        })
        .collect()
}

/// Runs a barrier-synchronised ping-pong over explicit pairs, one list per
/// block, all starting at t=0.
///
/// When every block reaches its barrier at the same instant the reverse phase
/// is simulated on its own clock starting from zero, so forward and reverse
/// durations come out of identical arithmetic. Otherwise both phases share
/// one timeline and the barriers are iterated to a fixed point: the earliest
/// barrier can only be influenced by flows that start before it.
pub fn pingpong_pairs(
    state: &ClusterState,
    pairs: &[Vec<(NodeId, NodeId)>],
    size_bytes: u64,
) -> Result<Vec<Vec<PairResult>>, BenchError> {
    let mut index = Vec::new();
    let mut forward = Vec::new();
    for (b, block) in pairs.iter().enumerate() {
        for (p, &(src, dst)) in block.iter().enumerate() {
            index.push((b, p));
            forward.push(Flow::new(forward.len() as u64, src, dst, size_bytes).on(ChannelKind::Io));
        }
    }
    let n = forward.len() as u64;
    let reverse_of = |f: &Flow, start: f64| {
        Flow::new(f.id.0 + n, f.dst, f.src, size_bytes)
            .on(ChannelKind::Io)
            .starting_at(start)
    };
    let shape = |values: Vec<Option<f64>>| -> Vec<Vec<Option<f64>>> {
        let mut out: Vec<Vec<Option<f64>>> = pairs.iter().map(|b| vec![None; b.len()]).collect();
        for (&(b, p), v) in index.iter().zip(values) {
            out[b][p] = v;
        }
        out
    };

    let fwd = simulate(state, &forward)?;
    let mut fwd_done = shape(fwd.iter().map(|o| o.completion_us).collect());
    let mut bars = barriers(&fwd_done);
    let mut rev_done: Vec<Vec<Option<f64>>>;

    let reached: Vec<f64> = bars.iter().flatten().copied().collect();
    if reached.windows(2).all(|w| w[0] == w[1]) {
        let flows: Vec<Flow> = forward
            .iter()
            .zip(fwd.iter())
            .filter(|(_, o)| o.status == FlowStatus::Completed)
            .map(|(f, _)| reverse_of(f, 0.0))
            .collect();
        let rev = simulate(state, &flows)?;
        let mut by_id: BTreeMap<u64, Option<f64>> = rev
            .iter()
            .map(|o| (o.flow.0 - n, o.completion_us))
            .collect();
        rev_done = shape((0..n).map(|i| by_id.remove(&i).flatten()).collect());
        bars = bars.iter().map(|b| b.map(|_| 0.0)).collect();
    } else {
        rev_done = shape(vec![None; forward.len()]);
        for _ in 0..=pairs.len() {
            let mut flows = forward.clone();
            for (f, &(b, p)) in forward.iter().zip(&index) {
                if let (Some(_), Some(bar)) = (fwd_done[b][p], bars[b]) {
                    flows.push(reverse_of(f, bar));
                }
            }
            let out = simulate(state, &flows)?;
            let (fo, ro) = out.split_at(forward.len());
            fwd_done = shape(fo.iter().map(|o| o.completion_us).collect());
            let mut rev_by_id: BTreeMap<u64, Option<f64>> =
                ro.iter().map(|o| (o.flow.0 - n, o.completion_us)).collect();
            rev_done = shape((0..n).map(|i| rev_by_id.remove(&i).flatten()).collect());
            let next = barriers(&fwd_done);
            if next == bars {
                break;
            }
            bars = next;
        }
    }

    let mut out: Vec<Vec<PairResult>> = Vec::with_capacity(pairs.len());
    for (b, block) in pairs.iter().enumerate() {
        out.push(
            (0..block.len())
                .map(|p| match (fwd_done[b][p], rev_done[b][p], bars[b]) {
                    (Some(f), Some(r), Some(bar)) => PairResult {
                        status: FlowStatus::Completed,
                        rtt_us: Some(f + (r - bar)),
                    },
                    _ => failed(),
                })
                .collect(),
        );
    }
    Ok(out)
}

/// One ping-pong at `size_bytes` over blocks allocated by [`BenchSpec::prepare`].
pub fn pingpong(
    state: &ClusterState,
    blocks: &[Block],
    spec: &BenchSpec,
    size_bytes: u64,
) -> Result<Vec<BenchSample>, BenchError> {
    let mode = state.mode();
    let senders = spec.senders_per_block;
    let mut pairs = Vec::with_capacity(blocks.len());
    for block in blocks {
        let members = block.members(mode);
        if members.len() < 2 * senders {
            return Err(BenchError::InvalidSpec(format!(
                "block {} has {} nodes, {} senders need {}",
                block.id,
                members.len(),
                senders,
                2 * senders
            )));
        }
        pairs.push(
            (0..senders)
                .map(|i| (members[i], members[senders + i]))
                .collect(),
        );
    }
    let tier = state.channel(ChannelKind::Io).tier.name;
    let results = pingpong_pairs(state, &pairs, size_bytes)?;
    Ok(results
        .into_iter()
        .enumerate()
        .flat_map(|(b, block)| {
            block
                .into_iter()
                .enumerate()
                .map(move |(f, r)| BenchSample {
                    mode,
                    tier,
                    n_blocks: blocks.len(),
                    block: b,
                    flow: f,
                    size_bytes,
                    rtt_us: r.rtt_us,
                    status: r.status,
                })
        })
        .collect())
}

/// Runs the whole size ladder, `reps` times per size. Rows are ordered by
/// size, then rep, then block, then flow.
pub fn sweep(
    state: &ClusterState,
    blocks: &[Block],
    spec: &BenchSpec,
) -> Result<Vec<BenchSample>, BenchError> {
    spec.validate()?;
    let mut out =
        Vec::with_capacity(spec.sizes.len() * spec.reps * blocks.len() * spec.senders_per_block);
    for &size in &spec.sizes {
        for _ in 0..spec.reps {
            out.extend(pingpong(state, blocks, spec, size)?);
        }
    }
    Ok(out)
}

/// Builds the cluster described by `spec` on top of `base` and sweeps it.
pub fn run_sweep(base: &ClusterConfig, spec: &BenchSpec) -> Result<Vec<BenchSample>, BenchError> {
    let (state, blocks) = spec.prepare(base)?;
    sweep(&state, &blocks, spec)
}

pub fn write_csv<W: Write>(samples: &[BenchSample], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in samples {
        w.write_record([
            s.mode.to_string(),
            s.tier.to_string(),
            s.n_blocks.to_string(),
            s.block.to_string(),
            s.flow.to_string(),
            s.size_bytes.to_string(),
            s.rtt_us.map(|r| format!("{r:.3}")).unwrap_or_default(),
            s.status.to_string(),
        ])?;
    }
    w.flush().map_err(|e| BenchError::Csv(e.to_string()))?;
    Ok(())
}

pub fn to_csv_string(samples: &[BenchSample]) -> String {
    let mut buf = Vec::new();
    write_csv(samples, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<BenchSample>, BenchError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(BenchError::Header(
            header.iter().collect::<Vec<_>>().join(","),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let err = |message: String| BenchError::Parse { row, message };
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let num = |k: usize| -> Result<u64, BenchError> {
            field(k)
                .parse()
                .map_err(|e| err(format!("{}: {e}", CSV_HEADER[k])))
        };
        let status = match field(7) {
            "completed" => FlowStatus::Completed,
            "failed_unreliable" => FlowStatus::FailedUnreliable,
            other => return Err(err(format!("unknown status `{other}`"))),
        };
        let rtt_us = match field(6) {
            "" => None,
            v => Some(v.parse::<f64>().map_err(|e| err(format!("rtt_us: {e}")))?),
        };
        if (status == FlowStatus::Completed) != rtt_us.is_some() {
            return Err(err(
                "rtt_us must be present exactly for completed rows".into()
            ));
        }
        out.push(BenchSample {
            mode: field(0).parse().map_err(err)?,
            tier: field(1).parse().map_err(err)?,
            n_blocks: num(2)? as usize,
            block: num(3)? as usize,
            flow: num(4)? as usize,
            size_bytes: num(5)?,
            rtt_us,
            status,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub size_bytes: u64,
    pub single_mean_us: Option<f64>,
    pub twin_mean_us: Option<f64>,
    /// Twin mean over single mean; absent when either side has no completed rows.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<RatioRow>,
    /// Largest ratio and the size it occurs at.
    pub max_ratio: Option<(u64, f64)>,
    /// Smallest failing size per tier seen in either input; `None` if all completed.
    pub first_failing: BTreeMap<TierName, Option<u64>>,
}

fn mean_rtts(samples: &[BenchSample]) -> BTreeMap<u64, Option<f64>> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for s in samples {
        let e = acc.entry(s.size_bytes).or_insert((0.0, 0));
        if let Some(r) = s.rtt_us {
            e.0 += r;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(size, (sum, n))| (size, (n > 0).then(|| sum / n as f64)))
        .collect()
}

/// Per-size slowdown of the twin-block run relative to the single-block run.
pub fn compare(single: &[BenchSample], twin: &[BenchSample]) -> Result<CompareReport, BenchError> {
    let a = mean_rtts(single);
    let b = mean_rtts(twin);
    if a.keys().ne(b.keys()) {
        return Err(BenchError::MismatchedLadders {
            single: a.keys().copied().collect(),
            twin: b.keys().copied().collect(),
        });
    }
    let rows: Vec<RatioRow> = a
        .iter()
        .zip(b.values())
        .map(|((&size, &s), &t)| RatioRow {
            size_bytes: size,
            single_mean_us: s,
            twin_mean_us: t,
            ratio: s.zip(t).map(|(s, t)| t / s),
        })
        .collect();
    let max_ratio = rows
        .iter()
        .filter_map(|r| r.ratio.map(|x| (r.size_bytes, x)))
        .max_by(|x, y| x.1.total_cmp(&y.1));

    let tiers: BTreeSet<TierName> = single.iter().chain(twin).map(|s| s.tier).collect();
    let first_failing = tiers
        .into_iter()
        .map(|tier| {
            let first = single
                .iter()
                .chain(twin)
                .filter(|s| s.tier == tier && s.status == FlowStatus::FailedUnreliable)
                .map(|s| s.size_bytes)
                .min();
            (tier, first)
        })
        .collect();
    Ok(CompareReport {
        rows,
        max_ratio,
        first_failing,
    })
}

impl CompareReport {
    pub fn summary(&self) -> String {
        let mut s = match self.max_ratio {
            Some((size, r)) => format!("max ratio {r:.3} at size_bytes={size}"),
            None => "max ratio n/a".to_string(),
        };
        for (tier, first) in &self.first_failing {
            match first {
                Some(size) => s.push_str(&format!("; first failing {tier} size {size}")),
                None => s.push_str(&format!("; first failing {tier} size none")),
            }
        }
        s
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>, digits: usize| match v {
            Some(x) => format!("{x:.digits$}"),
            None => "failed".to_string(),
        };
        writeln!(
            f,
            "{:>12} {:>18} {:>18} {:>8}",
            "size_bytes", "single_rtt_us", "twin_rtt_us", "ratio"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>12} {:>18} {:>18} {:>8}",
                r.size_bytes,
                cell(r.single_mean_us, 3),
                cell(r.twin_mean_us, 3),
                cell(r.ratio, 3)
            )?;
        }
        writeln!(f, "{}", self.summary())
    }
}
