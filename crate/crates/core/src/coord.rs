//! Forward-backward coordination engine.
//!
//! One round updates every receive filter from the current transmit filters
//! (forward phase), then every transmit filter from the fresh receive filters
//! (backward phase). Within a phase the node updates are independent.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chanmodel::complex_gaussian_matrix;
use crate::error::{Error, Phase, Result};
use crate::matrixkit::{orthonormal_basis, CMatrix, C64};
use crate::netmodel::{self, ChannelSet, CovariancePair, FilterBank, NetworkConfig, Side};
use crate::solvers;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmId {
    #[serde(rename = "AIMS")]
    Aims,
    #[serde(rename = "AIMS_RA")]
    AimsRa,
    #[serde(rename = "MAX_DLT")]
    MaxDlt,
    #[serde(rename = "MAX_SINR")]
    MaxSinr,
    #[serde(rename = "UNCOORDINATED")]
    Uncoordinated,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 5] = [
        AlgorithmId::Aims,
        AlgorithmId::AimsRa,
        AlgorithmId::MaxDlt,
        AlgorithmId::MaxSinr,
        AlgorithmId::Uncoordinated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::Aims => "AIMS",
            AlgorithmId::AimsRa => "AIMS_RA",
            AlgorithmId::MaxDlt => "MAX_DLT",
            AlgorithmId::MaxSinr => "MAX_SINR",
            AlgorithmId::Uncoordinated => "UNCOORDINATED",
        }
    }

    /// Whether the algorithm runs forward-backward rounds at all.
    pub fn is_iterative(self) -> bool {
        self != AlgorithmId::Uncoordinated
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPolicy {
    #[default]
    Eigen,
    Random,
}

impl FromStr for InitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eigen" => Ok(InitPolicy::Eigen),
            "random" => Ok(InitPolicy::Random),
            _ => Err(Error::InvalidInput(format!("unknown init policy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub init: InitPolicy,
    pub seed: u64,
    /// AIMS_RA: apply rank adaptation only in the final round.
    pub ra_last_only: bool,
    /// MAX_DLT: keep a node's previous filter when the closed-form update
    /// would lower its own bound term.
    pub monotone_guard: bool,
    /// Run the node updates of a phase on the rayon pool.
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            init: InitPolicy::Eigen,
            seed: 0,
            ra_last_only: false,
            monotone_guard: false,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub sum_rate: f64,
    pub dlt_fwd: f64,
    pub filter_norm_dev: f64,
    pub rx_ranks: Vec<usize>,
    pub tx_ranks: Vec<usize>,
    /// Seconds since the start of the run, initialization included.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algo: AlgorithmId,
    pub entries: Vec<TraceEntry>,
    /// Times the monotone guard rejected a closed-form update.
    pub guard_rejections: usize,
}

impl RunTrace {
    pub fn last(&self) -> &TraceEntry {
        self.entries.last().expect("a trace always holds the initial entry")
    }
}

/// Initial filter bank; every filter meets its power budget with equal column norms.
pub fn init_filters(cfg: &NetworkConfig, ch: &ChannelSet, policy: InitPolicy, seed: u64) -> Result<FilterBank> {
    cfg.validate()?;
    let d = cfg.streams;
    let users = cfg.num_users();
    let scale = |p: f64| C64::new((p / d as f64).sqrt(), 0.0);
    match policy {
        InitPolicy::Eigen => {
            let mut rx = Vec::with_capacity(users);
            let mut tx = Vec::with_capacity(users);
            for user in 0..users {
                let (v, u) = solvers::eigen_beamform(ch.get(cfg.cell_of(user), user), d, cfg.tx_power)
                    .map_err(|e| e.at(user, Phase::Init, 0))?;
                rx.push(u * scale(cfg.rx_filter_power));
                tx.push(v);
            }
            Ok(FilterBank { rx, tx })
        }
        InitPolicy::Random => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut draw = |rows: usize, p: f64| loop {
                if let Some(q) = orthonormal_basis(&complex_gaussian_matrix(&mut rng, rows, d)) {
                    break q * scale(p);
                }
            };
            let rx = (0..users).map(|_| draw(cfg.rx_antennas, cfg.rx_filter_power)).collect();
            let tx = (0..users).map(|_| draw(cfg.tx_antennas, cfg.tx_power)).collect();
            Ok(FilterBank { rx, tx })
        }
    }
}

fn normalized(x: CMatrix, power: f64) -> Result<CMatrix> {
    let norm = x.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::SingularProjection {
            condition: f64::INFINITY,
        });
    }
    Ok(x * C64::new(power.sqrt() / norm, 0.0))
}

/// Result of one node update.
struct NodeUpdate {
    filter: CMatrix,
    rank: usize,
    rejected: bool,
}

/// What the AIMS_RA schedule asks of the current phase.
#[derive(Clone, Copy)]
enum RankMode {
    Full,
    Adapt,
}

fn node_update(
    algo: AlgorithmId,
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    fb: &FilterBank,
    cov: &CovariancePair,
    mode: RankMode,
    guard: bool,
) -> Result<NodeUpdate> {
    let user = cov.owner;
    let (current, partner, power) = match cov.side {
        Side::Forward => (&fb.rx[user], &fb.tx[user], cfg.rx_filter_power),
        Side::Reverse => (&fb.tx[user], &fb.rx[user], cfg.tx_power),
    };
    let width = partner.ncols();
    match algo {
        AlgorithmId::Aims | AlgorithmId::AimsRa => {
            let rank = match mode {
                RankMode::Full => width,
                RankMode::Adapt => solvers::rank_adapt(&cov.signal, &cov.interference, width)?,
            };
            let x = solvers::gmrq_max(&cov.signal, &cov.interference, rank)?;
            Ok(NodeUpdate {
                filter: normalized(x, power)?,
                rank,
                rejected: false,
            })
        }
        AlgorithmId::MaxDlt => {
            let out = solvers::nh_waterfill(&cov.signal, &cov.interference, width, power)?;
            if guard && current.ncols() == width {
                let fresh = netmodel::dlt_user_lb(&out.filter, cov)?;
                let previous = netmodel::dlt_user_lb(current, cov)?;
                if previous > fresh {
                    return Ok(NodeUpdate {
                        filter: current.clone(),
                        rank: out.active_streams,
                        rejected: true,
                    });
                }
            }
            Ok(NodeUpdate {
                filter: out.filter,
                rank: out.active_streams,
                rejected: false,
            })
        }
        AlgorithmId::MaxSinr => {
            let filter = solvers::max_sinr_update(cfg, ch, fb, user, cov.side)?;
            Ok(NodeUpdate {
                rank: filter.ncols(),
                filter,
                rejected: false,
            })
        }
        AlgorithmId::Uncoordinated => Err(Error::InvalidInput(
            "the uncoordinated baseline has no phase updates".into(),
        )),
    }
}

struct PhaseOutcome {
    ranks: Vec<usize>,
    rejections: usize,
}

fn run_phase(
    algo: AlgorithmId,
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    fb: &mut FilterBank,
    side: Side,
    mode: RankMode,
    iteration: usize,
    opts: &RunOptions,
) -> Result<PhaseOutcome> {
    let covs = match side {
        Side::Forward => netmodel::all_fwd_covariances(cfg, ch, fb)?,
        Side::Reverse => netmodel::all_rev_covariances(cfg, ch, fb)?,
    };
    let snapshot: &FilterBank = fb;
    let update = |cov: &CovariancePair| {
        node_update(algo, cfg, ch, snapshot, cov, mode, opts.monotone_guard)
            .map_err(|e| e.at(cov.owner, side.into(), iteration))
    };
    let updates: Vec<NodeUpdate> = if opts.parallel {
        covs.par_iter().map(update).collect::<Result<_>>()?
    } else {
        covs.iter().map(update).collect::<Result<_>>()?
    };
    let mut ranks = Vec::with_capacity(updates.len());
    let mut rejections = 0;
    let target = match side {
        Side::Forward => &mut fb.rx,
        Side::Reverse => &mut fb.tx,
    };
    for (slot, upd) in target.iter_mut().zip(updates) {
        *slot = upd.filter;
        ranks.push(upd.rank);
        rejections += usize::from(upd.rejected);
    }
    Ok(PhaseOutcome { ranks, rejections })
}

/// Forward phase: every receive filter is recomputed from the current transmit filters.
///
/// Single phases never adapt ranks; AIMS_RA behaves like AIMS here.
pub fn forward_phase(
    algo: AlgorithmId,
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    fb: &mut FilterBank,
    iteration: usize,
    opts: &RunOptions,
) -> Result<Vec<usize>> {
    run_phase(algo, cfg, ch, fb, Side::Forward, RankMode::Full, iteration, opts).map(|o| o.ranks)
}

/// Backward phase: every transmit filter is recomputed from the current receive filters.
pub fn backward_phase(
    algo: AlgorithmId,
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    fb: &mut FilterBank,
    iteration: usize,
    opts: &RunOptions,
) -> Result<Vec<usize>> {
    run_phase(algo, cfg, ch, fb, Side::Reverse, RankMode::Full, iteration, opts).map(|o| o.ranks)
}

/// AIMS_RA backward phase: each pair settles on `min(rx rank, tx rank)`
/// streams; the receive filter keeps its leading columns.
fn rank_adapted_backward(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    fb: &mut FilterBank,
    rx_ranks: &[usize],
    iteration: usize,
) -> Result<Vec<usize>> {
    let covs = netmodel::all_rev_covariances(cfg, ch, fb)?;
    let mut ranks = Vec::with_capacity(covs.len());
    for cov in &covs {
        let user = cov.owner;
        let step = || -> Result<(CMatrix, usize)> {
            let tx_rank = solvers::rank_adapt(&cov.signal, &cov.interference, fb.rx[user].ncols())?;
            let rank = tx_rank.min(rx_ranks[user]);
            let x = solvers::gmrq_max(&cov.signal, &cov.interference, rank)?;
            Ok((normalized(x, cfg.tx_power)?, rank))
        };
        let (v, rank) = step().map_err(|e| e.at(user, Phase::Backward, iteration))?;
        fb.tx[user] = v;
        ranks.push(rank);
    }
    for (u, &rank) in fb.rx.iter_mut().zip(&ranks) {
        if u.ncols() > rank {
            *u = normalized(u.columns(0, rank).into_owned(), cfg.rx_filter_power)?;
        }
    }
    Ok(ranks)
}

fn trace_entry(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    fb: &FilterBank,
    iteration: usize,
    rx_ranks: Vec<usize>,
    tx_ranks: Vec<usize>,
    start: Instant,
) -> Result<TraceEntry> {
    Ok(TraceEntry {
        iteration,
        sum_rate: netmodel::sum_rate_regularized(cfg, ch, fb)?,
        dlt_fwd: netmodel::dlt_objective(cfg, ch, fb, Side::Forward)?,
        filter_norm_dev: fb.max_norm_deviation(cfg),
        rx_ranks,
        tx_ranks,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn widths(filters: &[CMatrix]) -> Vec<usize> {
    filters.iter().map(CMatrix::ncols).collect()
}

/// Runs `iterations` forward-backward rounds from the default initialization.
pub fn run(
    algo: AlgorithmId,
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    iterations: usize,
    seed: u64,
) -> Result<(FilterBank, RunTrace)> {
    run_with(
        algo,
        cfg,
        ch,
        iterations,
        &RunOptions {
            seed,
            ..RunOptions::default()
        },
    )
}

pub fn run_with(
    algo: AlgorithmId,
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    iterations: usize,
    opts: &RunOptions,
) -> Result<(FilterBank, RunTrace)> {
    let start = Instant::now();
    let policy = if algo.is_iterative() { opts.init } else { InitPolicy::Eigen };
    let fb = init_filters(cfg, ch, policy, opts.seed)?;
    run_from_inner(algo, cfg, ch, iterations, fb, opts, start)
}

/// Runs from a caller-supplied filter bank.
pub fn run_from(
    algo: AlgorithmId,
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    iterations: usize,
    init: FilterBank,
    opts: &RunOptions,
) -> Result<(FilterBank, RunTrace)> {
    init.check(cfg)?;
    run_from_inner(algo, cfg, ch, iterations, init, opts, Instant::now())
}

fn run_from_inner(
    algo: AlgorithmId,
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    iterations: usize,
    mut fb: FilterBank,
    opts: &RunOptions,
    start: Instant,
) -> Result<(FilterBank, RunTrace)> {
    let mut entries = vec![trace_entry(cfg, ch, &fb, 0, widths(&fb.rx), widths(&fb.tx), start)?];
    let mut guard_rejections = 0;
    let rounds = if algo.is_iterative() { iterations } else { 0 };
    for t in 1..=rounds {
        let (rx_ranks, tx_ranks) = match algo {
            AlgorithmId::AimsRa => {
                let adapt = !opts.ra_last_only || t == rounds;
                let mode = if adapt { RankMode::Adapt } else { RankMode::Full };
                let fwd = run_phase(algo, cfg, ch, &mut fb, Side::Forward, mode, t, opts)?;
                if adapt {
                    let ranks = rank_adapted_backward(cfg, ch, &mut fb, &fwd.ranks, t)?;
                    (ranks.clone(), ranks)
                } else {
                    let bwd = run_phase(algo, cfg, ch, &mut fb, Side::Reverse, mode, t, opts)?;
                    (fwd.ranks, bwd.ranks)
                }
            }
            _ => {
                let fwd = run_phase(algo, cfg, ch, &mut fb, Side::Forward, RankMode::Full, t, opts)?;
                let bwd = run_phase(algo, cfg, ch, &mut fb, Side::Reverse, RankMode::Full, t, opts)?;
                guard_rejections += fwd.rejections + bwd.rejections;
                (fwd.ranks, bwd.ranks)
            }
        };
        entries.push(trace_entry(cfg, ch, &fb, t, rx_ranks, tx_ranks, start)?);
    }
    Ok((
        fb,
        RunTrace {
            algo,
            entries,
            guard_rejections,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverheadFamily {
    /// Forward-backward schemes: one pilot per stream per phase.
    Prop,
    Wmmse,
    CcpWmmse,
}

impl FromStr for OverheadFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "prop" => Ok(OverheadFamily::Prop),
            "wmmse" => Ok(OverheadFamily::Wmmse),
            "ccp_wmmse" => Ok(OverheadFamily::CcpWmmse),
            _ => Err(Error::InvalidInput(format!("unknown overhead family '{s}'"))),
        }
    }
}

/// Inputs of the pilot-overhead formulas. `turbo` is the inner iteration count of CCP-WMMSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverheadParams {
    pub rounds: u64,
    pub users_per_cell: u64,
    pub cells: u64,
    pub tx_antennas: u64,
    pub rx_antennas: u64,
    pub streams: u64,
    pub turbo: u64,
}

fn checked(terms: &[u64]) -> Result<u64> {
    terms
        .iter()
        .try_fold(1u64, |acc, &x| acc.checked_mul(x))
        .ok_or_else(|| Error::InvalidInput("overhead overflows 64 bits".into()))
}

fn add(a: u64, b: u64) -> Result<u64> {
    a.checked_add(b)
        .ok_or_else(|| Error::InvalidInput("overhead overflows 64 bits".into()))
}

/// Channel uses spent on pilots over `rounds` coordination rounds.
pub fn overhead(family: OverheadFamily, p: &OverheadParams) -> Result<u64> {
    let OverheadParams {
        rounds: t,
        users_per_cell: k,
        cells: l,
        tx_antennas: m,
        rx_antennas: n,
        streams: d,
        turbo,
    } = *p;
    match family {
        OverheadFamily::Prop => checked(&[2, t, k, l, d]),
        OverheadFamily::Wmmse => {
            let per_round = add(add(checked(&[k, l, d])?, checked(&[k, l, m])?)?, checked(&[k, l, d])?)?;
            checked(&[t, per_round])
        }
        OverheadFamily::CcpWmmse => {
            if l == 0 {
                return Err(Error::InvalidInput("ccp_wmmse overhead needs at least one cell".into()));
            }
            let per_round = add(checked(&[k, l, m, l - 1])?, checked(&[turbo, k, l, n])?)?;
            checked(&[t, per_round])
        }
    }
}

/// Pilot overhead reported for a run of `algo`; the uncoordinated baseline spends none.
pub fn algorithm_overhead(algo: AlgorithmId, cfg: &NetworkConfig, rounds: usize) -> Result<u64> {
    if !algo.is_iterative() {
        return Ok(0);
    }
    overhead(
        OverheadFamily::Prop,
        &OverheadParams {
            rounds: rounds as u64,
            users_per_cell: cfg.users_per_cell as u64,
            cells: cfg.cells as u64,
            tx_antennas: cfg.tx_antennas as u64,
            rx_antennas: cfg.rx_antennas as u64,
            streams: cfg.streams as u64,
            turbo: 0,
        },
    )
}
