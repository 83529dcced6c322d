//! Monte-Carlo experiment harness: config parsing, seeded fan-out over
//! channel realizations, CSV emission and console summaries.
//!
//! Configs are TOML with three tables:
//!
//! ```toml
//! [network]
//! cells = 3
//! users_per_cell = 1
//! tx_antennas = 4
//! rx_antennas = 4
//! streams = 2
//!
//! [channel]
//! kind = "iid"
//! snr_db = [25.0]
//!
//! [run]
//! algos = ["MAX_DLT", "MAX_SINR", "UNCOORDINATED"]
//! iterations = [4]
//! realizations = 500
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chanmodel::{self, DeploymentSpec};
use crate::coord::{self, AlgorithmId, InitPolicy, RunOptions};
use crate::error::{Error, Result};
use crate::netmodel::{ChannelSet, NetworkConfig};

pub const CSV_HEADER: &str =
    "algo,L,K,M,N,d,T,snr_db,realization,sum_rate_bits,dlt_objective,overhead,wall_time_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub cells: usize,
    pub users_per_cell: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub streams: usize,
    #[serde(default = "unit")]
    pub tx_power: f64,
    #[serde(default = "unit")]
    pub rx_filter_power: f64,
}

fn unit() -> f64 {
    1.0
}

impl NetworkSection {
    /// Network with every noise variance set to `sigma2`.
    pub fn config(&self, sigma2: f64) -> Result<NetworkConfig> {
        let cfg = NetworkConfig::new(
            self.cells,
            self.users_per_cell,
            self.tx_antennas,
            self.rx_antennas,
            self.streams,
        )?
        .with_powers(self.tx_power, self.rx_filter_power)
        .with_noise(sigma2);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChannelSpec {
    /// I.i.d. Rayleigh channels; each SNR point sets `sigma^2 = 10^(-snr/10)`.
    Iid { snr_db: Vec<f64> },
    /// Drop-based deployment with per-realization noise calibration.
    Dense {
        target_snr_db: f64,
        deployment: DeploymentSpec,
    },
}

impl ChannelSpec {
    pub fn snr_points(&self) -> Vec<f64> {
        match self {
            ChannelSpec::Iid { snr_db } => snr_db.clone(),
            ChannelSpec::Dense { target_snr_db, .. } => vec![*target_snr_db],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algos: Vec<AlgorithmId>,
    pub iterations: Vec<usize>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitPolicy,
    #[serde(default)]
    pub ra_last_only: bool,
    #[serde(default)]
    pub monotone_guard: bool,
    #[serde(default = "default_output")]
    pub output: String,
}

fn default_realizations() -> usize {
    500
}

fn default_output() -> String {
    "results.csv".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub network: NetworkSection,
    pub channel: ChannelSpec,
    pub run: RunSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a config; omitted fields take their defaults.
pub fn parse_experiment(text: &str) -> Result<ExperimentSpec> {
    let mut spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    if let ChannelSpec::Dense { deployment, .. } = &mut spec.channel {
        if deployment.cells == 0 {
            deployment.cells = spec.network.cells;
        }
    }
    spec.validate()?;
    Ok(spec)
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.network.config(1.0)?;
        match &self.channel {
            ChannelSpec::Iid { snr_db } => {
                if snr_db.is_empty() || snr_db.iter().any(|s| !s.is_finite()) {
                    return Err(Error::Validation("channel.snr_db must list finite values".into()));
                }
            }
            ChannelSpec::Dense {
                target_snr_db,
                deployment,
            } => {
                if !target_snr_db.is_finite() {
                    return Err(Error::Validation("channel.target_snr_db must be finite".into()));
                }
                deployment.validate()?;
                if deployment.cells != self.network.cells {
                    return Err(Error::Validation(format!(
                        "deployment cells={} differs from network cells={}",
                        deployment.cells, self.network.cells
                    )));
                }
            }
        }
        if self.run.algos.is_empty() {
            return Err(Error::Validation("run.algos must name at least one algorithm".into()));
        }
        if self.run.iterations.is_empty() {
            return Err(Error::Validation("run.iterations must list at least one T".into()));
        }
        if self.run.realizations == 0 {
            return Err(Error::Validation("run.realizations must be positive".into()));
        }
        Ok(())
    }

    /// Config text that parses back to this spec.
    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    fn options(&self, seed: u64) -> RunOptions {
        RunOptions {
            init: self.run.init,
            seed: chanmodel::splitmix64(seed),
            ra_last_only: self.run.ra_last_only,
            monotone_guard: self.run.monotone_guard,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algo: AlgorithmId,
    pub cells: usize,
    pub users_per_cell: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub streams: usize,
    pub iterations: usize,
    pub snr_db: f64,
    pub realization: usize,
    pub sum_rate_bits: f64,
    pub dlt_objective: f64,
    pub overhead: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowFailure {
    pub algo: AlgorithmId,
    pub snr_db: f64,
    pub realization: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<RowFailure>,
}

fn realization_channels(spec: &ExperimentSpec, snr_db: f64, seed: u64) -> Result<(NetworkConfig, ChannelSet)> {
    match &spec.channel {
        ChannelSpec::Iid { .. } => {
            let cfg = spec.network.config(10f64.powf(-snr_db / 10.0))?;
            let ch = chanmodel::iid_channels(&cfg, seed);
            Ok((cfg, ch))
        }
        ChannelSpec::Dense { deployment, .. } => {
            let probe = spec.network.config(1.0)?;
            let (ch, _) = chanmodel::dense_drop(&probe, deployment, seed)?;
            let sigma2 = chanmodel::calibrate_noise(&ch, &probe, snr_db);
            Ok((probe.with_noise(sigma2), ch))
        }
    }
}

type CellResult = std::result::Result<Vec<ResultRow>, RowFailure>;

/// All rows of one (algorithm, SNR point, realization) cell of the grid.
fn run_cell(
    spec: &ExperimentSpec,
    algo: AlgorithmId,
    snr_db: f64,
    realization: usize,
    seed: u64,
) -> CellResult {
    let fail = |e: Error| RowFailure {
        algo,
        snr_db,
        realization,
        message: e.to_string(),
    };
    let (cfg, ch) = realization_channels(spec, snr_db, seed).map_err(fail)?;
    let opts = spec.options(seed);
    let iters = &spec.run.iterations;
    let row = |t: usize, entry: &coord::TraceEntry| -> Result<ResultRow> {
        Ok(ResultRow {
            algo,
            cells: cfg.cells,
            users_per_cell: cfg.users_per_cell,
            tx_antennas: cfg.tx_antennas,
            rx_antennas: cfg.rx_antennas,
            streams: cfg.streams,
            iterations: t,
            snr_db,
            realization,
            sum_rate_bits: entry.sum_rate,
            dlt_objective: entry.dlt_fwd,
            overhead: coord::algorithm_overhead(algo, &cfg, t)?,
            wall_time_s: entry.wall_time,
        })
    };
    let rows: Result<Vec<ResultRow>> = (|| {
        // Round t only depends on earlier rounds, so one run to max T covers
        // every prefix. Last-round-only rank adaptation breaks that.
        if algo == AlgorithmId::AimsRa && spec.run.ra_last_only {
            iters
                .iter()
                .map(|&t| {
                    let (_, trace) = coord::run_with(algo, &cfg, &ch, t, &opts)?;
                    row(t, trace.last())
                })
                .collect()
        } else {
            let t_max = iters.iter().copied().max().unwrap_or(0);
            let (_, trace) = coord::run_with(algo, &cfg, &ch, t_max, &opts)?;
            iters
                .iter()
                .map(|&t| {
                    let entry = if algo.is_iterative() { &trace.entries[t] } else { trace.last() };
                    row(t, entry)
                })
                .collect()
        }
    })();
    rows.map_err(fail)
}

/// Runs the whole grid on a pool of `workers` threads (`None`: rayon's default).
///
/// Every algorithm sees the same channel draw for a given (SNR point,
/// realization). Rows come back sorted by algorithm (config order), T, SNR
/// point and realization, so the output does not depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec, workers: Option<usize>) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let snrs = spec.channel.snr_points();
    let tasks: Vec<(usize, usize, usize)> = (0..spec.run.algos.len())
        .flat_map(|a| (0..snrs.len()).flat_map(move |s| (0..spec.run.realizations).map(move |r| (a, s, r))))
        .collect();
    let work = || -> Vec<CellResult> {
        tasks
            .par_iter()
            .map(|&(a, s, r)| {
                let seed = chanmodel::derive_seed(spec.run.seed, s as u64, r as u64);
                run_cell(spec, spec.run.algos[a], snrs[s], r, seed)
            })
            .collect()
    };
    let results = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut outcome = ExperimentOutcome::default();
    let mut keyed = Vec::new();
    for (&(a, s, r), res) in tasks.iter().zip(results) {
        match res {
            Ok(rows) => {
                for (ti, row) in rows.into_iter().enumerate() {
                    keyed.push(((a, ti, s, r), row));
                }
            }
            Err(f) => outcome.failures.push(f),
        }
    }
    keyed.sort_by_key(|(k, _)| *k);
    outcome.rows = keyed.into_iter().map(|(_, row)| row).collect();
    Ok(outcome)
}

/// Formats with 12 significant digits, in positional notation when the
/// magnitude allows it.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.11e}")
    }
}

fn csv_line(r: &ResultRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.algo,
        r.cells,
        r.users_per_cell,
        r.tx_antennas,
        r.rx_antennas,
        r.streams,
        r.iterations,
        format_sig(r.snr_db),
        r.realization,
        format_sig(r.sum_rate_bits),
        format_sig(r.dlt_objective),
        r.overhead,
        format_sig(r.wall_time_s)
    )
}

/// Writes the header and one line per row. Empty input is an error and no file is created.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no rows to write".into()));
    }
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&csv_line(r));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Parses a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "unexpected CSV header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = |what: &str| Error::Parse {
                line: i + 1,
                message: format!("bad {what}"),
            };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 13 {
                return Err(bad("field count"));
            }
            let int = |j: usize| f[j].parse::<usize>().map_err(|_| bad(&format!("integer in column {}", j + 1)));
            let real = |j: usize| f[j].parse::<f64>().map_err(|_| bad(&format!("number in column {}", j + 1)));
            Ok(ResultRow {
                algo: f[0].parse().map_err(|_| bad("algorithm"))?,
                cells: int(1)?,
                users_per_cell: int(2)?,
                tx_antennas: int(3)?,
                rx_antennas: int(4)?,
                streams: int(5)?,
                iterations: int(6)?,
                snr_db: real(7)?,
                realization: int(8)?,
                sum_rate_bits: real(9)?,
                dlt_objective: real(10)?,
                overhead: f[11].parse().map_err(|_| bad("overhead"))?,
                wall_time_s: real(12)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub algo: AlgorithmId,
    pub iterations: usize,
    pub snr_db: f64,
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error of the sum-rate per (algorithm, T, SNR), in row order.
pub fn summary_lines(rows: &[ResultRow]) -> Vec<SummaryLine> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<(AlgorithmId, usize, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let key = (r.algo, r.iterations, r.snr_db.to_bits());
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r.sum_rate_bits);
    }
    order
        .into_iter()
        .map(|key| {
            let v = &groups[&key];
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let stderr = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                0.0
            };
            SummaryLine {
                algo: key.0,
                iterations: key.1,
                snr_db: f64::from_bits(key.2),
                count: v.len(),
                mean,
                stderr,
            }
        })
        .collect()
}

/// Console table of [`summary_lines`].
pub fn summarize(rows: &[ResultRow]) -> String {
    let mut out = format!(
        "{:<14} {:>4} {:>8} {:>6} {:>14}\n",
        "algo", "T", "snr_db", "n", "sum_rate"
    );
    for s in summary_lines(rows) {
        let _ = writeln!(
            out,
            "{:<14} {:>4} {:>8.2} {:>6} {:>9.4} ± {:.4}",
            s.algo.name(),
            s.iterations,
            s.snr_db,
            s.count,
            s.mean,
            s.stderr
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[network]
cells = 2
users_per_cell = 1
tx_antennas = 2
rx_antennas = 2
streams = 1

[channel]
kind = "iid"
snr_db = [10.0]

[run]
algos = ["MAX_DLT"]
iterations = [2]
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let spec = parse_experiment(MINIMAL).unwrap();
        assert_eq!(spec.run.realizations, 500);
        assert_eq!(spec.run.init, InitPolicy::Eigen);
        assert_eq!(spec.network.tx_power, 1.0);
        assert!(!spec.run.monotone_guard);
    }

    #[test]
    fn too_many_streams_is_a_validation_error() {
        let text = MINIMAL.replace("streams = 1", "streams = 3");
        assert!(matches!(parse_experiment(&text), Err(Error::Validation(m)) if m.contains("streams")));
    }

    #[test]
    fn syntax_errors_report_the_line() {
        let text = MINIMAL.replace("tx_antennas = 2", "tx_antennas = = 2");
        match parse_experiment(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected a parse error, got {other:?}"),
        }
        let unknown = MINIMAL.replace("streams = 1", "streams = 1\nbogus = 4");
        assert!(matches!(parse_experiment(&unknown), Err(Error::Parse { line: 8, .. })));
    }

    #[test]
    fn config_round_trips() {
        let spec = parse_experiment(MINIMAL).unwrap();
        assert_eq!(parse_experiment(&spec.to_text().unwrap()).unwrap(), spec);

        let dense = r#"
[network]
cells = 4
users_per_cell = 2
tx_antennas = 2
rx_antennas = 3
streams = 1

[channel]
kind = "dense"
target_snr_db = 19.0

[channel.deployment]
cell_radius = 12.0

[run]
algos = ["UNCOORDINATED", "AIMS_RA"]
iterations = [1, 3]
realizations = 2
ra_last_only = true
"#;
        let spec = parse_experiment(dense).unwrap();
        match &spec.channel {
            ChannelSpec::Dense { deployment, .. } => {
                assert_eq!(deployment.cells, 4);
                assert_eq!(deployment.cell_radius, 12.0);
                assert_eq!(deployment.pathloss_exponent, 3.4);
            }
            _ => panic!("expected a dense channel"),
        }
        assert_eq!(parse_experiment(&spec.to_text().unwrap()).unwrap(), spec);
    }

    #[test]
    fn format_keeps_twelve_significant_digits() {
        assert_eq!(format_sig(1.0), "1.00000000000");
        assert_eq!(format_sig(12.345678901234567), "12.3456789012");
        assert_eq!(format_sig(-0.5), "-0.500000000000");
        assert_eq!(format_sig(1e-9), "1.00000000000e-9");
        assert_eq!(format_sig(0.0), "0");
    }
}
