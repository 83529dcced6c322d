//! Per-node filter solvers.
//!
//! Every solver works on one node's covariance pair `(R, Q)`: it whitens with
//! the Cholesky factor `Q = L L^H`, decomposes `M = L^-1 R L^-H`, and maps the
//! eigenvectors back through `L^-H`.

use crate::error::{Error, Result};
use crate::matrixkit::{self, CMatrix, C64};
use crate::netmodel::{ChannelSet, FilterBank, NetworkConfig, Side};

/// Whitened eigenvalues at or below this are treated as exactly zero.
pub const ALPHA_FLOOR: f64 = 1e-12;

/// Relative amplitude given to switched-off streams, `delta = STREAM_EPS * sqrt(zeta / r)`.
pub const STREAM_EPS: f64 = 1e-6;

const BISECTION_MAX_ITERS: usize = 200;

/// Top-`rank` generalized eigenpairs of `(R, Q)`: `R X = Q X diag(values)`.
///
/// `X = L^-H Psi` where `Psi` are the leading eigenvectors of the whitened
/// matrix, so `X^H Q X = I`.
pub fn generalized_eigen(r: &CMatrix, q: &CMatrix, rank: usize) -> Result<(CMatrix, Vec<f64>)> {
    let n = r.nrows();
    if rank == 0 || rank > n {
        return Err(Error::InvalidInput(format!("rank {rank} must lie in 1..={n}")));
    }
    let (factor, m) = matrixkit::whiten(r, q)?;
    let eig = matrixkit::herm_eig(&m)?;
    let psi = eig.leading_vectors(rank);
    Ok((factor.solve_upper_adjoint(&psi), eig.values[..rank].to_vec()))
}

/// Maximizer of the `rank`-dimensional GMRQ `|X^H R X| / |X^H Q X|`.
pub fn gmrq_max(r: &CMatrix, q: &CMatrix, rank: usize) -> Result<CMatrix> {
    generalized_eigen(r, q, rank).map(|(x, _)| x)
}

/// Eigenvalues of `L^-1 R L^-H` in descending order.
pub fn whitened_spectrum(r: &CMatrix, q: &CMatrix) -> Result<Vec<f64>> {
    let (_, m) = matrixkit::whiten(r, q)?;
    Ok(matrixkit::herm_eig(&m)?.values)
}

/// Number of eigenvalues `>= 1`, clamped to `1..=d_max`.
pub fn rank_from_spectrum(values: &[f64], d_max: usize) -> usize {
    values.iter().filter(|&&l| l >= 1.0).count().clamp(1, d_max.max(1))
}

/// Stream count for rank adaptation: whitened eigenvalues `>= 1`, at least one, at most `d_max`.
pub fn rank_adapt(r: &CMatrix, q: &CMatrix, d_max: usize) -> Result<usize> {
    Ok(rank_from_spectrum(&whitened_spectrum(r, q)?, d_max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// Stream powers.
    pub x: Vec<f64>,
    /// Multiplier of the budget constraint.
    pub mu: f64,
    /// Quasi-SINR per stream.
    pub alpha: Vec<f64>,
    /// Power cost per stream.
    pub beta: Vec<f64>,
    pub zeta: f64,
}

impl PowerAllocation {
    pub fn spent(&self) -> f64 {
        self.beta.iter().zip(&self.x).map(|(b, x)| b * x).sum()
    }
}

fn stream_power(alpha: f64, beta: f64, mu: f64) -> f64 {
    (1.0 / (1.0 + mu * beta) - 1.0 / alpha).max(0.0)
}

/// Stream power as a function of `w = 1/(1 + mu beta_max)`, with `b = beta / beta_max`.
///
/// `1/(1 + mu beta) = w / (w (1 - b) + b)`, which stays accurate when `mu`
/// approaches the pole `-1/beta_max`.
fn stream_power_w(alpha: f64, b: f64, w: f64) -> f64 {
    (w / (w * (1.0 - b) + b) - 1.0 / alpha).max(0.0)
}

fn argmax(values: &[f64], candidates: impl Iterator<Item = usize>) -> Option<usize> {
    // first index wins ties
    candidates.fold(None, |best, i| match best {
        Some(b) if values[b] >= values[i] => Some(b),
        _ => Some(i),
    })
}

/// Minimizes `sum(x_i - ln(1 + alpha_i x_i))` subject to `sum(beta_i x_i) = zeta`, `x >= 0`.
///
/// Live streams get `x_i = (1/(1 + mu beta_i) - 1/alpha_i)^+` where `mu` is the
/// root of the budget equation on `]-1/max beta, inf[`, located by bracketing
/// and bisection. Streams with `alpha_i <= ALPHA_FLOOR` only cost power; they
/// receive budget solely when no live stream can absorb it, and then all of it
/// lands on the cheapest one (largest `beta`).
pub fn power_alloc(alpha: &[f64], beta: &[f64], zeta: f64) -> Result<PowerAllocation> {
    if alpha.is_empty() || alpha.len() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has {} entries and beta {}",
            alpha.len(),
            beta.len()
        )));
    }
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::InvalidInput(format!("budget zeta={zeta} must be positive")));
    }
    if beta.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidInput("every beta must be positive and finite".into()));
    }
    if alpha.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
        return Err(Error::InvalidInput("every alpha must be non-negative and finite".into()));
    }

    let r = alpha.len();
    let live: Vec<usize> = (0..r).filter(|&i| alpha[i] > ALPHA_FLOOR).collect();
    let dead_best = argmax(beta, (0..r).filter(|&i| alpha[i] <= ALPHA_FLOOR));
    let finish = |x: Vec<f64>, mu: f64| PowerAllocation {
        x,
        mu,
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
        zeta,
    };

    let Some(m) = argmax(beta, live.iter().copied()) else {
        let j = dead_best.expect("nonempty");
        let mut x = vec![0.0; r];
        x[j] = zeta / beta[j];
        return Ok(finish(x, -1.0 / beta[j]));
    };

    // A dead stream cheaper than every live one caps mu from below at -1/beta_dead.
    if let Some(j) = dead_best.filter(|&j| beta[j] > beta[m]) {
        let mu = -1.0 / beta[j];
        let mut x = vec![0.0; r];
        for &i in &live {
            x[i] = stream_power(alpha[i], beta[i], mu);
        }
        let absorbed: f64 = live.iter().map(|&i| beta[i] * x[i]).sum();
        if absorbed < zeta {
            x[j] = (zeta - absorbed) / beta[j];
            return Ok(finish(x, mu));
        }
    }

    // Search over w = 1/(1 + mu beta_m) in ]0, inf[; g is increasing in w.
    let b: Vec<f64> = beta.iter().map(|&bi| bi / beta[m]).collect();
    let powers = |w: f64| -> Vec<f64> {
        let mut x = vec![0.0; r];
        for &i in &live {
            x[i] = stream_power_w(alpha[i], b[i], w);
        }
        x
    };
    let g = |w: f64| powers(w).iter().zip(beta).map(|(x, bi)| x * bi).sum::<f64>() - zeta;
    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    while g(lo) >= 0.0 {
        lo *= 0.5;
        if lo == 0.0 {
            return Err(Error::InfeasibleAllocation("lower bracket collapsed".into()));
        }
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InfeasibleAllocation("upper bracket diverged".into()));
        }
    }
    let mut w = 0.5 * (lo + hi);
    for _ in 0..BISECTION_MAX_ITERS {
        w = 0.5 * (lo + hi);
        if w <= lo || w >= hi {
            break;
        }
        let gw = g(w);
        if gw.abs() <= 1e-13 * zeta {
            break;
        }
        if gw < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
    }
    let spent_at = |x: &[f64]| beta.iter().zip(x).map(|(bi, v)| bi * v).sum::<f64>();
    let mut x = powers(w);
    let mut spent = spent_at(&x);
    if !(spent > 0.0) {
        // root within an ulp of a stream threshold: x = w - 1/alpha cancels
        x = powers(hi);
        spent = spent_at(&x);
    }
    if !(spent > 0.0) {
        return Err(Error::InfeasibleAllocation("bisection left every stream empty".into()));
    }
    // absorb the last bits of bisection error into an exact budget
    let scale = zeta / spent;
    x.iter_mut().for_each(|v| *v *= scale);
    Ok(finish(x, (1.0 / w - 1.0) / beta[m]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub filter: CMatrix,
    pub allocation: PowerAllocation,
    pub active_streams: usize,
}

/// Waterfilling filter `X = L^-H Psi diag(sqrt(x))` with `||X||_F^2 = zeta`.
///
/// Streams left without power keep a `STREAM_EPS`-scaled column along their
/// eigen-direction so they can be revived later; the filter is then rescaled
/// to the exact budget.
pub fn nh_waterfill(r: &CMatrix, q: &CMatrix, rank: usize, zeta: f64) -> Result<SolverOutput> {
    let n = r.nrows();
    if rank == 0 || rank > n {
        return Err(Error::InvalidInput(format!("rank {rank} must lie in 1..={n}")));
    }
    let (factor, m) = matrixkit::whiten(r, q)?;
    let eig = matrixkit::herm_eig(&m)?;
    let directions = factor.solve_upper_adjoint(&eig.leading_vectors(rank));
    let alpha: Vec<f64> = eig.values[..rank]
        .iter()
        .map(|&l| if l > ALPHA_FLOOR { l } else { 0.0 })
        .collect();
    let beta: Vec<f64> = (0..rank).map(|i| directions.column(i).norm_squared()).collect();
    let allocation = power_alloc(&alpha, &beta, zeta)?;

    let delta = STREAM_EPS * (zeta / rank as f64).sqrt();
    let mut filter = directions;
    let mut active = 0;
    for (i, &xi) in allocation.x.iter().enumerate() {
        let mut col = filter.column_mut(i);
        if xi > delta * delta {
            active += 1;
            col.scale_mut(xi.sqrt());
        } else {
            let norm = col.norm();
            col.scale_mut(delta / norm);
        }
    }
    let norm2 = filter.norm_squared();
    filter.scale_mut((zeta / norm2).sqrt());
    Ok(SolverOutput {
        filter,
        allocation,
        active_streams: active,
    })
}

/// Per-stream max-SINR filter for `node` on the given side.
///
/// For stream `m` the combiner is `B_m^-1 a_m`, where `a_m` is the stream's
/// effective direct channel and `B_m` is the full received covariance minus
/// `a_m a_m^H`. Columns are scaled to `sqrt(P / d)`.
pub fn max_sinr_update(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    fb: &FilterBank,
    node: usize,
    side: Side,
) -> Result<CMatrix> {
    fb.check(cfg)?;
    if node >= cfg.num_users() {
        return Err(Error::DimensionMismatch(format!("node {node} out of range")));
    }
    let one = C64::new(1.0, 0.0);
    let (total, direct, power) = match side {
        Side::Forward => {
            let bs = cfg.cell_of(node);
            let mut total = CMatrix::identity(cfg.rx_antennas, cfg.rx_antennas) * C64::new(cfg.noise_fwd[bs], 0.0);
            for (user, v) in fb.tx.iter().enumerate() {
                let g = ch.get(bs, user) * v;
                total.gemm(one, &g, &g.adjoint(), one);
            }
            (total, ch.get(bs, node) * &fb.tx[node], cfg.rx_filter_power)
        }
        Side::Reverse => {
            let mut total =
                CMatrix::identity(cfg.tx_antennas, cfg.tx_antennas) * C64::new(cfg.noise_rev[node], 0.0);
            for (rx_user, u) in fb.rx.iter().enumerate() {
                let g = ch.get(cfg.cell_of(rx_user), node).adjoint() * u;
                total.gemm(one, &g, &g.adjoint(), one);
            }
            let direct = ch.get(cfg.cell_of(node), node).adjoint() * &fb.rx[node];
            (total, direct, cfg.tx_power)
        }
    };
    let streams = direct.ncols();
    let col_norm = (power / streams as f64).sqrt();
    let mut out = CMatrix::zeros(total.nrows(), streams);
    for s in 0..streams {
        let a = direct.columns(s, 1).into_owned();
        let b = matrixkit::hermitian_part(&(&total - &a * a.adjoint()));
        let factor = matrixkit::cholesky(&b).map_err(|_| Error::SingularProjection {
            condition: f64::INFINITY,
        })?;
        let w = factor.solve(&a);
        let norm = w.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::SingularProjection {
                condition: f64::INFINITY,
            });
        }
        out.set_column(s, &(w.column(0) * C64::new(col_norm / norm, 0.0)));
    }
    Ok(out)
}

/// Eigen-beamforming on a single link: `V` spans the top-`d` right singular
/// vectors (each column scaled to `sqrt(P/d)`), `U` the matching unit-norm left
/// singular vectors, so `U^H H V` is diagonal, real and descending.
pub fn eigen_beamform(h: &CMatrix, d: usize, power: f64) -> Result<(CMatrix, CMatrix)> {
    let (n, m) = h.shape();
    if d == 0 || d > n.min(m) {
        return Err(Error::DimensionMismatch(format!(
            "d={d} must lie in 1..=min({n}, {m})"
        )));
    }
    let gram = matrixkit::hermitian_part(&(h.adjoint() * h));
    let eig = matrixkit::herm_eig(&gram)?;
    let right = eig.leading_vectors(d);
    let top = eig.values[0].max(0.0).sqrt();
    let mut left = CMatrix::zeros(n, d);
    for i in 0..d {
        let sigma = eig.values[i].max(0.0).sqrt();
        let col = if sigma > 1e-12 * top && sigma > 0.0 {
            (h * right.column(i)) / C64::new(sigma, 0.0)
        } else {
            complete_basis(&left.columns(0, i).into_owned(), n)
        };
        left.set_column(i, &col);
    }
    let v = right * C64::new((power / d as f64).sqrt(), 0.0);
    Ok((v, left))
}

/// First canonical vector, orthogonalized against `basis`, that survives projection.
fn complete_basis(basis: &CMatrix, n: usize) -> nalgebra::DVector<C64> {
    let mut best = nalgebra::DVector::zeros(n);
    let mut best_norm = -1.0;
    for k in 0..n {
        let mut e = nalgebra::DVector::<C64>::zeros(n);
        e[k] = C64::new(1.0, 0.0);
        for j in 0..basis.ncols() {
            let proj = basis.column(j).dotc(&e);
            e -= basis.column(j) * proj;
        }
        let norm = e.norm();
        if norm > best_norm + 1e-12 {
            best_norm = norm;
            best = e / C64::new(norm, 0.0);
        }
    }
    best
}

/// `||U^H U - (tr(U^H U)/d) I||_F / ||U^H U||_F`: zero iff the columns are
/// orthogonal with equal norms.
pub fn orthonormality_deviation(u: &CMatrix) -> f64 {
    let gram = u.adjoint() * u;
    let d = gram.nrows();
    let mean = matrixkit::trace_re(&gram) / d as f64;
    let dev = &gram - CMatrix::identity(d, d) * C64::new(mean, 0.0);
    matrixkit::frobenius_norm(&dev) / matrixkit::frobenius_norm(&gram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanmodel::{complex_gaussian_matrix, iid_channels};
    use crate::netmodel::{fwd_covariances, gmrq_value, CovariancePair};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn diag(v: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&DVector::from_iterator(v.len(), v.iter().map(|&x| c(x))))
    }

    fn random_pd(n: usize, rng: &mut ChaCha20Rng) -> CMatrix {
        let a = complex_gaussian_matrix(rng, n, n);
        matrixkit::hermitian_part(&(&a * a.adjoint() + CMatrix::identity(n, n) * c(0.1)))
    }

    fn random_psd(n: usize, rank: usize, rng: &mut ChaCha20Rng) -> CMatrix {
        let g = complex_gaussian_matrix(rng, n, rank);
        matrixkit::hermitian_part(&(&g * g.adjoint()))
    }

    fn pair(r: CMatrix, q: CMatrix) -> CovariancePair {
        CovariancePair {
            signal: r,
            interference: q,
            side: Side::Forward,
            owner: 0,
        }
    }

    #[test]
    fn gmrq_diagonal_case() {
        let r = diag(&[4.0, 1.0, 0.0, 0.0]);
        let q = CMatrix::identity(4, 4);
        let x = gmrq_max(&r, &q, 1).unwrap();
        let mut e1 = CMatrix::zeros(4, 1);
        e1[(0, 0)] = c(1.0);
        assert!(matrixkit::frobenius_norm(&(&x - &e1)) < 1e-12);
        assert!((gmrq_value(&x, &pair(r, q)).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn gmrq_self_case_is_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let q = random_pd(5, &mut rng);
        for rank in 1..=3 {
            let x = gmrq_max(&q, &q, rank).unwrap();
            assert!((gmrq_value(&x, &pair(q.clone(), q.clone())).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn gmrq_satisfies_generalized_eigen_relation() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let r = random_psd(6, 3, &mut rng);
            let q = random_pd(6, &mut rng);
            let (x, values) = generalized_eigen(&r, &q, 2).unwrap();
            let lhs = &r * &x;
            let rhs = &q * &x * diag(&values);
            assert!(matrixkit::frobenius_norm(&(lhs - rhs)) <= 1e-8 * matrixkit::frobenius_norm(&r));
            let gram = x.adjoint() * &q * &x;
            assert!(matrixkit::frobenius_norm(&(gram - CMatrix::identity(2, 2))) < 1e-10);
        }
    }

    #[test]
    fn gmrq_beats_random_candidates() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let r = random_psd(4, 4, &mut rng);
        let q = random_pd(4, &mut rng);
        let cov = pair(r.clone(), q.clone());
        let best = gmrq_value(&gmrq_max(&r, &q, 2).unwrap(), &cov).unwrap();
        for _ in 0..2000 {
            let cand = complex_gaussian_matrix(&mut rng, 4, 2);
            assert!(gmrq_value(&cand, &cov).unwrap() <= best * (1.0 + 1e-10));
        }
    }

    #[test]
    fn rank_table() {
        assert_eq!(rank_from_spectrum(&[2.5, 1.2, 0.7, 0.1], 4), 2);
        assert_eq!(rank_from_spectrum(&[0.9, 0.5, 0.1], 3), 1);
        assert_eq!(rank_from_spectrum(&[3.0, 2.5, 2.0, 1.5], 2), 2);
        assert_eq!(rank_from_spectrum(&[1.0, 1.0, 0.999], 3), 2);
        assert_eq!(rank_adapt(&diag(&[2.5, 1.2, 0.7, 0.1]), &CMatrix::identity(4, 4), 4).unwrap(), 2);
        assert_eq!(rank_adapt(&diag(&[5.0, 5.0]), &diag(&[10.0, 2.0]), 2).unwrap(), 1);
    }

    #[test]
    fn power_alloc_examples() {
        let one = power_alloc(&[7.0], &[1.0], 1.0).unwrap();
        assert!((one.x[0] - 1.0).abs() < 1e-14);

        let a = power_alloc(&[4.0, 2.0], &[1.0, 1.0], 1.0).unwrap();
        assert!((a.mu - 1.0 / 7.0).abs() < 1e-12);
        assert!((a.x[0] - 0.625).abs() < 1e-12 && (a.x[1] - 0.375).abs() < 1e-12);

        let b = power_alloc(&[4.0, 0.01], &[1.0, 1.0], 0.5).unwrap();
        assert!((b.mu - 1.0 / 3.0).abs() < 1e-12);
        assert!((b.x[0] - 0.5).abs() < 1e-12 && b.x[1] == 0.0);
    }

    #[test]
    fn power_alloc_degenerate_and_invalid() {
        let z = power_alloc(&[0.0, 0.0, 0.0], &[1.0, 3.0, 2.0], 6.0).unwrap();
        assert_eq!(z.x, vec![0.0, 2.0, 0.0]);
        assert!(matches!(power_alloc(&[1.0], &[0.0], 1.0), Err(Error::InvalidInput(_))));
        assert!(matches!(power_alloc(&[1.0], &[1.0], 0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(power_alloc(&[1.0, 2.0], &[1.0], 1.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn cheap_dead_stream_takes_leftover_budget() {
        // the live stream saturates at x = 1 - 1/alpha when mu = -1/beta_dead
        let p = power_alloc(&[2.0, 0.0], &[1.0, 4.0], 10.0).unwrap();
        assert!((p.mu + 0.25).abs() < 1e-15);
        let live = 1.0 / (1.0 - 0.25) - 0.5;
        assert!((p.x[0] - live).abs() < 1e-12);
        assert!((p.spent() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn waterfill_diagonal_example() {
        let out = nh_waterfill(&diag(&[3.0, 1.0]), &CMatrix::identity(2, 2), 2, 1.0).unwrap();
        let al = &out.allocation;
        assert!((al.alpha[0] - 3.0).abs() < 1e-12 && (al.alpha[1] - 1.0).abs() < 1e-12);
        assert!((al.mu + 1.0 / 7.0).abs() < 1e-10);
        let expect = diag(&[(5.0f64 / 6.0).sqrt(), (1.0f64 / 6.0).sqrt()]);
        assert!(matrixkit::frobenius_norm(&(&out.filter - expect)) < 1e-10);
        assert_eq!(out.active_streams, 2);
    }

    #[test]
    fn waterfill_zero_signal_uses_cheapest_stream() {
        let q = diag(&[1.0, 0.25, 4.0]);
        let out = nh_waterfill(&CMatrix::zeros(3, 3), &q, 2, 2.0).unwrap();
        let al = &out.allocation;
        let j = (0..2).max_by(|&a, &b| al.beta[a].partial_cmp(&al.beta[b]).unwrap()).unwrap();
        assert!((al.x[j] - 2.0 / al.beta[j]).abs() < 1e-12);
        assert!((out.filter.norm_squared() - 2.0).abs() < 1e-12);
        assert_eq!(out.active_streams, 1);
    }

    #[test]
    fn waterfill_respects_budget() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for rank in 1..=3 {
            let r = random_psd(4, 2, &mut rng);
            let q = random_pd(4, &mut rng);
            let out = nh_waterfill(&r, &q, rank, 1.7).unwrap();
            assert!((out.filter.norm_squared() - 1.7).abs() <= 1e-9 * 1.7);
            assert!((out.allocation.spent() - 1.7).abs() <= 1e-10 * 1.7);
        }
    }

    #[test]
    fn max_sinr_matched_filter_without_interference() {
        let cfg = NetworkConfig::new(1, 1, 3, 3, 1).unwrap().with_noise(0.4);
        let ch = iid_channels(&cfg, 3);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let fb = FilterBank {
            rx: vec![complex_gaussian_matrix(&mut rng, 3, 1)],
            tx: vec![complex_gaussian_matrix(&mut rng, 3, 1)],
        };
        let u = max_sinr_update(&cfg, &ch, &fb, 0, Side::Forward).unwrap();
        let hv = ch.get(0, 0) * &fb.tx[0];
        let cos = (u.adjoint() * &hv)[(0, 0)].norm() / (u.norm() * hv.norm());
        assert!(1.0 - cos < 1e-12);
        assert!((u.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn max_sinr_matches_gmrq_direction_at_one_stream() {
        let cfg = NetworkConfig::new(3, 1, 4, 4, 1).unwrap().with_noise(0.1);
        let ch = iid_channels(&cfg, 6);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let fb = FilterBank {
            rx: (0..3).map(|_| complex_gaussian_matrix(&mut rng, 4, 1)).collect(),
            tx: (0..3).map(|_| complex_gaussian_matrix(&mut rng, 4, 1)).collect(),
        };
        for node in 0..3 {
            let u = max_sinr_update(&cfg, &ch, &fb, node, Side::Forward).unwrap();
            let cov = fwd_covariances(&cfg, &ch, &fb, node).unwrap();
            let x = gmrq_max(&cov.signal, &cov.interference, 1).unwrap();
            let cos = (u.adjoint() * &x)[(0, 0)].norm() / (u.norm() * x.norm());
            assert!(1.0 - cos <= 1e-8);
        }
    }

    #[test]
    fn max_sinr_columns_share_power() {
        let cfg = NetworkConfig::new(2, 2, 4, 4, 2).unwrap().with_powers(3.0, 2.0);
        let ch = iid_channels(&cfg, 1);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let fb = FilterBank {
            rx: (0..4).map(|_| complex_gaussian_matrix(&mut rng, 4, 2)).collect(),
            tx: (0..4).map(|_| complex_gaussian_matrix(&mut rng, 4, 2)).collect(),
        };
        let v = max_sinr_update(&cfg, &ch, &fb, 2, Side::Reverse).unwrap();
        for j in 0..2 {
            assert!((v.column(j).norm_squared() - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_beamform_diagonal() {
        let (v, u) = eigen_beamform(&diag(&[3.0, 1.0]), 1, 1.0).unwrap();
        let e1 = CMatrix::from_column_slice(2, 1, &[c(1.0), c(0.0)]);
        assert!(matrixkit::frobenius_norm(&(v - &e1)) < 1e-14);
        assert!(matrixkit::frobenius_norm(&(u - &e1)) < 1e-14);
        assert!(matches!(eigen_beamform(&diag(&[3.0, 1.0]), 3, 1.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn eigen_beamform_diagonalizes_channel() {
        let mut rng = ChaCha20Rng::seed_from_u64(30);
        let h = complex_gaussian_matrix(&mut rng, 5, 4);
        let (v, u) = eigen_beamform(&h, 3, 3.0).unwrap();
        let d = u.adjoint() * &h * (v / c(1.0));
        let mut prev = f64::INFINITY;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(d[(i, j)].norm() < 1e-10);
                }
            }
            assert!(d[(i, i)].im.abs() < 1e-10 && d[(i, i)].re >= 0.0 && d[(i, i)].re <= prev + 1e-10);
            prev = d[(i, i)].re;
        }
    }

    #[test]
    fn eigen_beamform_completes_rank_deficient_channel() {
        let mut h = CMatrix::zeros(3, 3);
        h[(0, 0)] = c(2.0);
        let (_, u) = eigen_beamform(&h, 3, 1.0).unwrap();
        let gram = u.adjoint() * &u;
        assert!(matrixkit::frobenius_norm(&(gram - CMatrix::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn orthonormality_deviation_cases() {
        assert!(orthonormality_deviation(&(CMatrix::identity(4, 2) * c(3.0))) < 1e-15);
        assert!(orthonormality_deviation(&diag(&[1.0, 2.0])) > 0.1);
    }
}
