//! Network data model: configuration, channels, filter banks, forward and
//! reverse covariance assembly, and the rate / bound metrics built on them.
//!
//! Users are addressed by a flat index `cell * K + slot`. A user's receive
//! filter lives at its serving base station, its transmit filter at the
//! mobile. The engine always optimizes "transmit side M, receive side N";
//! a downlink is expressed by swapping which device holds which antenna count.

use serde::{Deserialize, Serialize};

use crate::chanmodel::Geometry;
use crate::error::{Error, Result};
use crate::matrixkit::{self, orthonormal_basis, CMatrix, C64};

/// Condition number of `U^H Q U` above which a projection counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Ridge weight (relative to `tr(Q)`) used by the regularized rate fallback.
pub const RIDGE_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub cells: usize,
    pub users_per_cell: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub streams: usize,
    pub tx_power: f64,
    pub rx_filter_power: f64,
    /// Noise variance at each base station (length `cells`).
    pub noise_fwd: Vec<f64>,
    /// Noise variance at each user in the reverse network (length `cells * users_per_cell`).
    pub noise_rev: Vec<f64>,
}

impl NetworkConfig {
    /// Unit powers and unit noise everywhere.
    pub fn new(cells: usize, users_per_cell: usize, tx: usize, rx: usize, streams: usize) -> Result<Self> {
        let cfg = Self {
            cells,
            users_per_cell,
            tx_antennas: tx,
            rx_antennas: rx,
            streams,
            tx_power: 1.0,
            rx_filter_power: 1.0,
            noise_fwd: vec![1.0; cells],
            noise_rev: vec![1.0; cells * users_per_cell],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets every forward and reverse noise variance to `sigma2`.
    pub fn with_noise(mut self, sigma2: f64) -> Self {
        self.noise_fwd = vec![sigma2; self.cells];
        self.noise_rev = vec![sigma2; self.num_users()];
        self
    }

    pub fn with_powers(mut self, tx_power: f64, rx_filter_power: f64) -> Self {
        self.tx_power = tx_power;
        self.rx_filter_power = rx_filter_power;
        self
    }

    pub fn num_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    /// Serving cell of a flat user index.
    pub fn cell_of(&self, user: usize) -> usize {
        user / self.users_per_cell
    }

    pub fn user_index(&self, cell: usize, slot: usize) -> usize {
        cell * self.users_per_cell + slot
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cells", self.cells),
            ("users_per_cell", self.users_per_cell),
            ("tx_antennas", self.tx_antennas),
            ("rx_antennas", self.rx_antennas),
            ("streams", self.streams),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if self.streams > self.tx_antennas.min(self.rx_antennas) {
            return Err(Error::Validation(format!(
                "streams d={} exceeds min(M, N)={}",
                self.streams,
                self.tx_antennas.min(self.rx_antennas)
            )));
        }
        for (name, p) in [("tx_power", self.tx_power), ("rx_filter_power", self.rx_filter_power)] {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::Validation(format!("{name} must be finite and non-negative")));
            }
        }
        if self.noise_fwd.len() != self.cells {
            return Err(Error::Validation(format!(
                "noise_fwd has {} entries, expected {}",
                self.noise_fwd.len(),
                self.cells
            )));
        }
        if self.noise_rev.len() != self.num_users() {
            return Err(Error::Validation(format!(
                "noise_rev has {} entries, expected {}",
                self.noise_rev.len(),
                self.num_users()
            )));
        }
        if self
            .noise_fwd
            .iter()
            .chain(&self.noise_rev)
            .any(|&s| !(s.is_finite() && s > 0.0))
        {
            return Err(Error::Validation("noise variances must be finite and positive".into()));
        }
        Ok(())
    }
}

/// All cross-link channels `H[l, u]` (N x M) from user `u` to base station `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    cells: usize,
    users: usize,
    links: Vec<CMatrix>,
    pub geometry: Option<Geometry>,
}

impl ChannelSet {
    /// `links` is ordered base station major: index `bs * users + user`.
    pub fn new(cfg: &NetworkConfig, links: Vec<CMatrix>) -> Result<Self> {
        let users = cfg.num_users();
        if links.len() != cfg.cells * users {
            return Err(Error::DimensionMismatch(format!(
                "expected {} channel matrices, got {}",
                cfg.cells * users,
                links.len()
            )));
        }
        for h in &links {
            if h.shape() != (cfg.rx_antennas, cfg.tx_antennas) {
                return Err(Error::DimensionMismatch(format!(
                    "channel is {}x{}, expected {}x{}",
                    h.nrows(),
                    h.ncols(),
                    cfg.rx_antennas,
                    cfg.tx_antennas
                )));
            }
            if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidInput("channel has non-finite entries".into()));
            }
        }
        Ok(Self {
            cells: cfg.cells,
            users,
            links,
            geometry: None,
        })
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Self {
        self.geometry = Some(geometry);
        self
    }

    /// Channel from `user` to base station `bs`.
    pub fn get(&self, bs: usize, user: usize) -> &CMatrix {
        &self.links[bs * self.users + user]
    }

    pub fn get_mut(&mut self, bs: usize, user: usize) -> &mut CMatrix {
        &mut self.links[bs * self.users + user]
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn links(&self) -> &[CMatrix] {
        &self.links
    }
}

/// Receive filters `U[u]` (N x r) and transmit filters `V[u]` (M x r).
///
/// Filters may carry fewer than `d` columns after rank adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub rx: Vec<CMatrix>,
    pub tx: Vec<CMatrix>,
}

impl FilterBank {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let users = cfg.num_users();
        Self {
            rx: vec![CMatrix::zeros(cfg.rx_antennas, cfg.streams); users],
            tx: vec![CMatrix::zeros(cfg.tx_antennas, cfg.streams); users],
        }
    }

    /// Largest relative deviation of `||U||^2` from `P_r` and `||V||^2` from `P_t`.
    pub fn max_norm_deviation(&self, cfg: &NetworkConfig) -> f64 {
        let dev = |f: &CMatrix, p: f64| {
            let e = f.norm_squared();
            if p > 0.0 {
                (e - p).abs() / p
            } else {
                e
            }
        };
        self.rx
            .iter()
            .map(|u| dev(u, cfg.rx_filter_power))
            .chain(self.tx.iter().map(|v| dev(v, cfg.tx_power)))
            .fold(0.0, f64::max)
    }

    pub fn check(&self, cfg: &NetworkConfig) -> Result<()> {
        let users = cfg.num_users();
        if self.rx.len() != users || self.tx.len() != users {
            return Err(Error::DimensionMismatch(format!(
                "filter bank holds {} receive / {} transmit filters, expected {users}",
                self.rx.len(),
                self.tx.len()
            )));
        }
        for (u, v) in self.rx.iter().zip(&self.tx) {
            if u.nrows() != cfg.rx_antennas || v.nrows() != cfg.tx_antennas {
                return Err(Error::DimensionMismatch(format!(
                    "filter rows {}/{} do not match N={} / M={}",
                    u.nrows(),
                    v.nrows(),
                    cfg.rx_antennas,
                    cfg.tx_antennas
                )));
            }
            for f in [u, v] {
                if f.ncols() == 0 || f.ncols() > cfg.streams {
                    return Err(Error::DimensionMismatch(format!(
                        "filter has {} columns, expected 1..={}",
                        f.ncols(),
                        cfg.streams
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Forward,
    Reverse,
}

/// Signal covariance `R` and interference-plus-noise covariance `Q` seen by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub signal: CMatrix,
    pub interference: CMatrix,
    pub side: Side,
    pub owner: usize,
}

fn check_inputs(cfg: &NetworkConfig, ch: &ChannelSet, fb: &FilterBank) -> Result<()> {
    if ch.cells() != cfg.cells || ch.users() != cfg.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "channel set covers {} cells / {} users, config has {} / {}",
            ch.cells(),
            ch.users(),
            cfg.cells,
            cfg.num_users()
        )));
    }
    fb.check(cfg)
}

fn check_user(cfg: &NetworkConfig, user: usize) -> Result<()> {
    if user >= cfg.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "user {user} out of range ({} users)",
            cfg.num_users()
        )));
    }
    Ok(())
}

fn add_scaled_identity(m: &mut CMatrix, s: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += C64::new(s, 0.0);
    }
}

/// Total received covariance at base station `bs`, noise included.
fn received_covariance(cfg: &NetworkConfig, ch: &ChannelSet, fb: &FilterBank, bs: usize) -> CMatrix {
    let n = cfg.rx_antennas;
    let mut total = CMatrix::zeros(n, n);
    for (user, v) in fb.tx.iter().enumerate() {
        let g = ch.get(bs, user) * v;
        total.gemm(C64::new(1.0, 0.0), &g, &g.adjoint(), C64::new(1.0, 0.0));
    }
    add_scaled_identity(&mut total, cfg.noise_fwd[bs]);
    total
}

/// Total reverse-network covariance at `user`, noise included.
fn reverse_received_covariance(cfg: &NetworkConfig, ch: &ChannelSet, fb: &FilterBank, user: usize) -> CMatrix {
    let m = cfg.tx_antennas;
    let mut total = CMatrix::zeros(m, m);
    for (rx_user, u) in fb.rx.iter().enumerate() {
        let bs = cfg.cell_of(rx_user);
        let g = ch.get(bs, user).adjoint() * u;
        total.gemm(C64::new(1.0, 0.0), &g, &g.adjoint(), C64::new(1.0, 0.0));
    }
    add_scaled_identity(&mut total, cfg.noise_rev[user]);
    total
}

fn split(total: CMatrix, g: &CMatrix, side: Side, owner: usize) -> CovariancePair {
    let signal = matrixkit::hermitian_part(&(g * g.adjoint()));
    let interference = matrixkit::hermitian_part(&(total - &signal));
    CovariancePair {
        signal,
        interference,
        side,
        owner,
    }
}

/// Forward covariances of `user` at its serving base station.
pub fn fwd_covariances(cfg: &NetworkConfig, ch: &ChannelSet, fb: &FilterBank, user: usize) -> Result<CovariancePair> {
    check_inputs(cfg, ch, fb)?;
    check_user(cfg, user)?;
    let bs = cfg.cell_of(user);
    let total = received_covariance(cfg, ch, fb, bs);
    let g = ch.get(bs, user) * &fb.tx[user];
    Ok(split(total, &g, Side::Forward, user))
}

/// Reverse-network covariances of `user` (seen at the mobile).
pub fn rev_covariances(cfg: &NetworkConfig, ch: &ChannelSet, fb: &FilterBank, user: usize) -> Result<CovariancePair> {
    check_inputs(cfg, ch, fb)?;
    check_user(cfg, user)?;
    let total = reverse_received_covariance(cfg, ch, fb, user);
    let g = ch.get(cfg.cell_of(user), user).adjoint() * &fb.rx[user];
    Ok(split(total, &g, Side::Reverse, user))
}

/// Forward covariances of every user, sharing one received covariance per cell.
pub fn all_fwd_covariances(cfg: &NetworkConfig, ch: &ChannelSet, fb: &FilterBank) -> Result<Vec<CovariancePair>> {
    check_inputs(cfg, ch, fb)?;
    let totals: Vec<CMatrix> = (0..cfg.cells).map(|bs| received_covariance(cfg, ch, fb, bs)).collect();
    Ok((0..cfg.num_users())
        .map(|user| {
            let bs = cfg.cell_of(user);
            let g = ch.get(bs, user) * &fb.tx[user];
            split(totals[bs].clone(), &g, Side::Forward, user)
        })
        .collect())
}

pub fn all_rev_covariances(cfg: &NetworkConfig, ch: &ChannelSet, fb: &FilterBank) -> Result<Vec<CovariancePair>> {
    check_inputs(cfg, ch, fb)?;
    Ok((0..cfg.num_users())
        .map(|user| {
            let total = reverse_received_covariance(cfg, ch, fb, user);
            let g = ch.get(cfg.cell_of(user), user).adjoint() * &fb.rx[user];
            split(total, &g, Side::Reverse, user)
        })
        .collect())
}

fn check_filter(u: &CMatrix, cov: &CovariancePair) -> Result<()> {
    if u.nrows() != cov.signal.nrows() || cov.signal.shape() != cov.interference.shape() {
        return Err(Error::DimensionMismatch(format!(
            "filter has {} rows, covariances are {}x{}",
            u.nrows(),
            cov.signal.nrows(),
            cov.signal.ncols()
        )));
    }
    Ok(())
}

/// `(U^H R U, U^H Q U)` on an orthonormal basis of span(U), after checking
/// that the projected interference is well conditioned.
///
/// Both the rate and the GMRQ are invariant to `U -> U G` for nonsingular `G`,
/// so evaluating them on the basis is exact and avoids conditioning loss from
/// badly scaled columns.
fn projected_on_span(u: &CMatrix, r: &CMatrix, q: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let basis = orthonormal_basis(u).ok_or(Error::SingularProjection {
        condition: f64::INFINITY,
    })?;
    let a = matrixkit::hermitian_part(&(basis.adjoint() * r * &basis));
    let b = matrixkit::hermitian_part(&(basis.adjoint() * q * &basis));
    let eig = matrixkit::herm_eig(&b)?;
    let max = eig.values[0];
    let min = *eig.values.last().unwrap();
    if !(min > 0.0) || max / min > SINGULAR_CONDITION {
        return Err(Error::SingularProjection {
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    Ok((a, b))
}

fn rate_from_projection(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    // log2|I + A B^-1| = log2|A + B| - log2|B|
    let rate = (matrixkit::ln_det_pd(&(a + b))? - matrixkit::ln_det_pd(b)?) / std::f64::consts::LN_2;
    Ok(rate.max(0.0))
}

/// Achievable rate `log2|I + (U^H R U)(U^H Q U)^-1|` in bits per channel use.
pub fn user_rate(u: &CMatrix, cov: &CovariancePair) -> Result<f64> {
    check_filter(u, cov)?;
    let (a, b) = projected_on_span(u, &cov.signal, &cov.interference)?;
    rate_from_projection(&a, &b)
}

/// [`user_rate`] with a `1e-12 tr(Q)` ridge added to `Q` when the plain
/// evaluation reports a singular projection. A rank-deficient filter is
/// evaluated on its column span.
pub fn user_rate_regularized(u: &CMatrix, cov: &CovariancePair) -> Result<f64> {
    match user_rate(u, cov) {
        Err(Error::SingularProjection { .. }) => {
            check_filter(u, cov)?;
            let mut q = cov.interference.clone();
            let ridge = RIDGE_WEIGHT * matrixkit::trace_re(&q);
            add_scaled_identity(&mut q, ridge);
            let span = column_span(u);
            if span.ncols() == 0 {
                return Ok(0.0);
            }
            let a = matrixkit::hermitian_part(&(span.adjoint() * &cov.signal * &span));
            let b = matrixkit::hermitian_part(&(span.adjoint() * &q * &span));
            rate_from_projection(&a, &b)
        }
        other => other,
    }
}

/// Orthonormal basis of the numerical column span (possibly fewer columns).
fn column_span(u: &CMatrix) -> CMatrix {
    let gram = matrixkit::hermitian_part(&(u.adjoint() * u));
    let Ok(eig) = matrixkit::herm_eig(&gram) else {
        return CMatrix::zeros(u.nrows(), 0);
    };
    let top = eig.values.first().copied().unwrap_or(0.0);
    let keep = eig.values.iter().take_while(|&&l| l > 1e-20 * top && l > 0.0).count();
    let mut span = CMatrix::zeros(u.nrows(), keep);
    for j in 0..keep {
        let col = u * eig.vectors.column(j);
        let norm = col.norm();
        span.set_column(j, &(col / C64::new(norm, 0.0)));
    }
    span
}

/// Sum of all user rates.
pub fn sum_rate(cfg: &NetworkConfig, ch: &ChannelSet, fb: &FilterBank) -> Result<f64> {
    let covs = all_fwd_covariances(cfg, ch, fb)?;
    covs.iter().map(|c| user_rate(&fb.rx[c.owner], c)).sum()
}

/// [`sum_rate`] using [`user_rate_regularized`] for every user.
pub fn sum_rate_regularized(cfg: &NetworkConfig, ch: &ChannelSet, fb: &FilterBank) -> Result<f64> {
    let covs = all_fwd_covariances(cfg, ch, fb)?;
    covs.iter().map(|c| user_rate_regularized(&fb.rx[c.owner], c)).sum()
}

/// Generalized multi-dimensional Rayleigh quotient `|U^H R U| / |U^H Q U|`.
pub fn gmrq_value(u: &CMatrix, cov: &CovariancePair) -> Result<f64> {
    check_filter(u, cov)?;
    let (a, b) = projected_on_span(u, &cov.signal, &cov.interference)?;
    let eig_a = matrixkit::herm_eig(&a)?;
    let det_a: f64 = eig_a.values.iter().map(|&l| l.max(0.0)).product();
    Ok(det_a / matrixkit::ln_det_pd(&b)?.exp())
}

/// `log2|I + U^H R U| - tr(U^H Q U)`.
pub fn dlt_user_lb(u: &CMatrix, cov: &CovariancePair) -> Result<f64> {
    check_filter(u, cov)?;
    let a = matrixkit::hermitian_part(&(u.adjoint() * &cov.signal * u));
    let mut ia = a;
    add_scaled_identity(&mut ia, 1.0);
    let log_term = matrixkit::ln_det_pd(&ia)? / std::f64::consts::LN_2;
    let trace_term = matrixkit::trace_re(&(u.adjoint() * &cov.interference * u));
    Ok(log_term - trace_term)
}

/// Sum of per-user DLT bounds evaluated in the forward or reverse network.
pub fn dlt_objective(cfg: &NetworkConfig, ch: &ChannelSet, fb: &FilterBank, side: Side) -> Result<f64> {
    match side {
        Side::Forward => all_fwd_covariances(cfg, ch, fb)?
            .iter()
            .map(|c| dlt_user_lb(&fb.rx[c.owner], c))
            .sum(),
        Side::Reverse => all_rev_covariances(cfg, ch, fb)?
            .iter()
            .map(|c| dlt_user_lb(&fb.tx[c.owner], c))
            .sum(),
    }
}

/// True iff `lambda_min(U^H Q U) >= 1`.
pub fn interference_limited_check(u: &CMatrix, cov: &CovariancePair) -> Result<bool> {
    check_filter(u, cov)?;
    let b = matrixkit::hermitian_part(&(u.adjoint() * &cov.interference * u));
    let eig = matrixkit::herm_eig(&b)?;
    let max = eig.values[0];
    let min = *eig.values.last().unwrap();
    if !(min > 0.0) || max / min > SINGULAR_CONDITION {
        return Err(Error::SingularProjection {
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    Ok(min >= 1.0)
}
