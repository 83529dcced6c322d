//! Seeded channel generation: i.i.d. Rayleigh links and a drop-based dense
//! deployment with pathloss, log-normal shadowing and small-scale fading.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixkit::{CMatrix, C64};
use crate::netmodel::{ChannelSet, NetworkConfig};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Draws per user before placement gives up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Standard circular complex Gaussian sample, `CN(0, 1)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rows x cols` matrix of independent `CN(0, 1)` entries, filled column-major.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a realization: `splitmix(splitmix(splitmix(master) ^ point) ^ realization)`.
pub fn derive_seed(master: u64, grid_point: u64, realization: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ grid_point) ^ realization)
}

/// I.i.d. `CN(0, 1)` channels for every (base station, user) pair.
pub fn iid_channels(cfg: &NetworkConfig, seed: u64) -> ChannelSet {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let links = (0..cfg.cells * cfg.num_users())
        .map(|_| complex_gaussian_matrix(&mut rng, cfg.rx_antennas, cfg.tx_antennas))
        .collect();
    ChannelSet::new(cfg, links).expect("generated channels match the configuration")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentSpec {
    /// Zero in a config file means "same as the network".
    #[serde(default)]
    pub cells: usize,
    #[serde(default = "defaults::cell_radius")]
    pub cell_radius: f64,
    #[serde(default = "defaults::carrier_freq")]
    pub carrier_freq: f64,
    #[serde(default = "defaults::pathloss_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default = "defaults::shadowing_std")]
    pub shadowing_std: f64,
    #[serde(default = "defaults::min_distance")]
    pub min_distance: f64,
    #[serde(default)]
    pub rician_k: f64,
}

mod defaults {
    pub fn cell_radius() -> f64 {
        10.0
    }
    pub fn carrier_freq() -> f64 {
        28e9
    }
    pub fn pathloss_exponent() -> f64 {
        3.4
    }
    pub fn shadowing_std() -> f64 {
        9.0
    }
    pub fn min_distance() -> f64 {
        1.0
    }
}

impl DeploymentSpec {
    /// 10 m cells at 28 GHz, exponent 3.4, 9 dB shadowing, 1 m exclusion, Rayleigh fading.
    pub fn dense(cells: usize) -> Self {
        Self {
            cells,
            cell_radius: defaults::cell_radius(),
            carrier_freq: defaults::carrier_freq(),
            pathloss_exponent: defaults::pathloss_exponent(),
            shadowing_std: defaults::shadowing_std(),
            min_distance: defaults::min_distance(),
            rician_k: 0.0,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn grid_side(&self) -> Option<usize> {
        let side = (self.cells as f64).sqrt().round() as usize;
        (side * side == self.cells).then_some(side)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 || self.grid_side().is_none() {
            return Err(Error::Validation(format!(
                "deployment cells={} must be a positive perfect square",
                self.cells
            )));
        }
        if !(self.min_distance > 0.0 && self.cell_radius > self.min_distance && self.cell_radius.is_finite()) {
            return Err(Error::Validation(format!(
                "need cell_radius > min_distance > 0 (got {} and {})",
                self.cell_radius, self.min_distance
            )));
        }
        if !(self.carrier_freq > 0.0 && self.carrier_freq.is_finite()) {
            return Err(Error::Validation("carrier_freq must be positive".into()));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 0.0) {
            return Err(Error::Validation("pathloss_exponent must be non-negative".into()));
        }
        if !(self.shadowing_std.is_finite() && self.shadowing_std >= 0.0) {
            return Err(Error::Validation("shadowing_std must be non-negative".into()));
        }
        if !(self.rician_k.is_finite() && self.rician_k >= 0.0) {
            return Err(Error::Validation("rician_k must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs_positions: Vec<[f64; 2]>,
    /// `user_positions[cell][slot]`.
    pub user_positions: Vec<Vec<[f64; 2]>>,
}

impl Geometry {
    pub fn distance(&self, bs: usize, cell: usize, slot: usize) -> f64 {
        let [bx, by] = self.bs_positions[bs];
        let [ux, uy] = self.user_positions[cell][slot];
        (bx - ux).hypot(by - uy)
    }
}

/// Pathloss in dB: free-space intercept at 1 m, distance exponent, plus shadowing.
pub fn pathloss_db(distance: f64, spec: &DeploymentSpec, shadow_db: f64) -> Result<f64> {
    if !(distance >= spec.min_distance) {
        return Err(Error::BelowMinDistance {
            distance,
            min_distance: spec.min_distance,
        });
    }
    let intercept = 20.0 * (4.0 * PI / spec.wavelength()).log10();
    Ok(intercept + 10.0 * spec.pathloss_exponent * distance.log10() + shadow_db)
}

/// Base stations on a square grid with spacing `2 * cell_radius`, origin at the first site.
pub fn grid_positions(spec: &DeploymentSpec) -> Result<Vec<[f64; 2]>> {
    spec.validate()?;
    let side = spec.grid_side().expect("validated");
    let pitch = 2.0 * spec.cell_radius;
    Ok((0..spec.cells)
        .map(|i| [(i % side) as f64 * pitch, (i / side) as f64 * pitch])
        .collect())
}

fn place_user<R: Rng + ?Sized>(
    rng: &mut R,
    centre: [f64; 2],
    bs_positions: &[[f64; 2]],
    spec: &DeploymentSpec,
) -> Result<[f64; 2]> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        // uniform in the disc: radius ~ R sqrt(U)
        let rho = spec.cell_radius * rng.random::<f64>().sqrt();
        let theta = 2.0 * PI * rng.random::<f64>();
        let p = [centre[0] + rho * theta.cos(), centre[1] + rho * theta.sin()];
        if bs_positions
            .iter()
            .all(|b| (b[0] - p[0]).hypot(b[1] - p[1]) >= spec.min_distance)
        {
            return Ok(p);
        }
    }
    Err(Error::RejectionBudgetExceeded {
        attempts: MAX_PLACEMENT_ATTEMPTS,
    })
}

fn fading_entry<R: Rng + ?Sized>(rng: &mut R, los_phase: f64, k: f64) -> C64 {
    let scattered = complex_gaussian(rng);
    if k == 0.0 {
        return scattered;
    }
    C64::from_polar((k / (k + 1.0)).sqrt(), los_phase) + scattered * (1.0 / (k + 1.0)).sqrt()
}

/// Drops `K` users per cell and draws every cross link.
///
/// Each (base station, user) link gets its own shadowing sample and, when
/// `rician_k > 0`, its own line-of-sight phase.
pub fn dense_drop(cfg: &NetworkConfig, spec: &DeploymentSpec, seed: u64) -> Result<(ChannelSet, Geometry)> {
    spec.validate()?;
    if spec.cells != cfg.cells {
        return Err(Error::Validation(format!(
            "deployment has {} cells, network has {}",
            spec.cells, cfg.cells
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let bs_positions = grid_positions(spec)?;
    let mut user_positions = Vec::with_capacity(cfg.cells);
    for centre in &bs_positions {
        let cell = (0..cfg.users_per_cell)
            .map(|_| place_user(&mut rng, *centre, &bs_positions, spec))
            .collect::<Result<Vec<_>>>()?;
        user_positions.push(cell);
    }
    let geometry = Geometry {
        bs_positions,
        user_positions,
    };

    let shadow = Normal::new(0.0, spec.shadowing_std).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut links = Vec::with_capacity(cfg.cells * cfg.num_users());
    for bs in 0..cfg.cells {
        for user in 0..cfg.num_users() {
            let (cell, slot) = (cfg.cell_of(user), user % cfg.users_per_cell);
            let d = geometry.distance(bs, cell, slot);
            let loss = pathloss_db(d, spec, shadow.sample(&mut rng))?;
            let amp = 10f64.powf(-loss / 20.0);
            let phase = 2.0 * PI * rng.random::<f64>();
            links.push(CMatrix::from_fn(cfg.rx_antennas, cfg.tx_antennas, |_, _| {
                fading_entry(&mut rng, phase, spec.rician_k) * amp
            }));
        }
    }
    Ok((ChannelSet::new(cfg, links)?.with_geometry(geometry.clone()), geometry))
}

/// Average effective SNR over direct links, `mean P_t ||H||_F^2 / (M sigma^2)`, in dB.
pub fn effective_snr_db(ch: &ChannelSet, cfg: &NetworkConfig, sigma2: f64) -> f64 {
    10.0 * (mean_direct_gain(ch, cfg) * cfg.tx_power / sigma2).log10()
}

fn mean_direct_gain(ch: &ChannelSet, cfg: &NetworkConfig) -> f64 {
    let users = cfg.num_users();
    (0..users)
        .map(|u| ch.get(cfg.cell_of(u), u).norm_squared() / cfg.tx_antennas as f64)
        .sum::<f64>()
        / users as f64
}

/// Noise variance that puts the average effective SNR at `target_snr_db`.
pub fn calibrate_noise(ch: &ChannelSet, cfg: &NetworkConfig, target_snr_db: f64) -> f64 {
    mean_direct_gain(ch, cfg) * cfg.tx_power / 10f64.powf(target_snr_db / 10.0)
}
