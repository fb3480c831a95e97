//! Uplink OFDM signal model.
//!
//! A coherence block is a tile of `n_cbw` subcarriers by `n_slot` OFDM symbols
//! over which the channel is constant. Columns of every grid are resource
//! elements ordered symbol-major: column `t * n_cbw + f` is subcarrier `f` of
//! OFDM symbol `t`, so the first `n_cbw` columns are the training block.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Unit-average-power constellations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Qpsk,
    Qam16,
    Qam64,
}

impl Constellation {
    /// All points, normalized to unit average power.
    pub fn points(self) -> Vec<Complex64> {
        let (levels, norm): (&[f64], f64) = match self {
            Constellation::Qpsk => (&[-1.0, 1.0], 2.0),
            Constellation::Qam16 => (&[-3.0, -1.0, 1.0, 3.0], 10.0),
            Constellation::Qam64 => (&[-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0], 42.0),
        };
        let scale = norm.sqrt().recip();
        levels
            .iter()
            .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re * scale, im * scale)))
            .collect()
    }

    pub fn order(self) -> usize {
        match self {
            Constellation::Qpsk => 4,
            Constellation::Qam16 => 16,
            Constellation::Qam64 => 64,
        }
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constellation::Qpsk => "qpsk",
            Constellation::Qam16 => "qam16",
            Constellation::Qam64 => "qam64",
        })
    }
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Constellation::Qpsk),
            "qam16" | "16qam" | "16-qam" => Ok(Constellation::Qam16),
            "qam64" | "64qam" | "64-qam" => Ok(Constellation::Qam64),
            other => Err(Error::config(format!("unknown constellation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Receive antennas.
    pub m: usize,
    /// Single-antenna users.
    pub k: usize,
    pub n_sc: usize,
    pub n_cbw: usize,
    pub n_slot: usize,
    pub constellation: Constellation,
    pub master_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            m: 64,
            k: 8,
            n_sc: 1200,
            n_cbw: 12,
            n_slot: 7,
            constellation: Constellation::Qam16,
            master_seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn new(m: usize, k: usize) -> Self {
        SystemConfig {
            m,
            k,
            ..SystemConfig::default()
        }
    }

    /// Resource elements per coherence block.
    pub fn n_re(&self) -> usize {
        self.n_cbw * self.n_slot
    }

    /// Coherence blocks per slot across the full band.
    pub fn blocks_per_slot(&self) -> usize {
        self.n_sc / self.n_cbw
    }

    /// Every violated invariant, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.k < 1 {
            v.push("k must be at least 1".to_string());
        }
        if self.m <= self.k {
            v.push(format!("m ({}) must exceed k ({})", self.m, self.k));
        }
        if self.n_cbw == 0 || self.n_sc % self.n_cbw != 0 {
            v.push(format!("n_cbw ({}) must divide n_sc ({})", self.n_cbw, self.n_sc));
        }
        if self.n_slot < 2 {
            v.push(format!("n_slot ({}) must be at least 2", self.n_slot));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Random substreams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Channel = 1,
    Symbols = 2,
    Noise = 3,
    AutoencoderInit = 4,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for `(master_seed, block_id, stream)`. The result does
/// not depend on how many other substreams were drawn before it.
pub fn substream(master_seed: u64, block_id: u64, stream: Stream) -> ChaCha8Rng {
    let seed = splitmix64(master_seed ^ splitmix64(block_id.wrapping_add(0xA5A5_0000)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// σ² per complex receive dimension such that the per-antenna receive SNR,
/// `K / σ²` for unit-power users and unit-variance channel taps, equals `snr_db`.
/// `+inf` dB gives a noiseless link.
pub fn snr_to_noise_var(snr_db: f64, k: usize) -> f64 {
    k as f64 * 10f64.powf(-snr_db / 10.0)
}

/// Draw from CN(0, 1).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// M×K flat Rayleigh channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix(pub CMatrix);

impl ChannelMatrix {
    pub fn m(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    /// Keep only the first `rows` antennas.
    pub fn first_rows(&self, rows: usize) -> ChannelMatrix {
        ChannelMatrix(self.0.rows(0, rows).into_owned())
    }
}

pub fn generate_channel<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> ChannelMatrix {
    // from_fn visits column-major, matching storage order.
    ChannelMatrix(CMatrix::from_fn(m, k, |_, _| complex_gaussian(rng)))
}

/// K×n_re transmitted symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    pub entries: CMatrix,
    pub constellation: Constellation,
}

pub fn draw_symbols<R: Rng + ?Sized>(
    k: usize,
    n_re: usize,
    constellation: Constellation,
    rng: &mut R,
) -> SymbolGrid {
    let points = constellation.points();
    let entries = CMatrix::from_fn(k, n_re, |_, _| points[rng.random_range(0..points.len())]);
    SymbolGrid {
        entries,
        constellation,
    }
}

/// M×n_re received samples after FFT.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedGrid {
    pub entries: CMatrix,
    /// σ² per complex dimension; zero in noiseless mode.
    pub noise_var: f64,
}

impl ReceivedGrid {
    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_re(&self) -> usize {
        self.entries.ncols()
    }

    pub fn first_rows(&self, rows: usize) -> ReceivedGrid {
        ReceivedGrid {
            entries: self.entries.rows(0, rows).into_owned(),
            noise_var: self.noise_var,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceBlock {
    pub block_id: u64,
    pub channel: ChannelMatrix,
    pub tx: SymbolGrid,
    pub rx: ReceivedGrid,
}

impl CoherenceBlock {
    /// Assemble `rx = H·tx + n` with `n` drawn from `noise_rng` and scaled to
    /// `noise_var`. Noise draws are consumed even when `noise_var` is zero so
    /// realizations stay paired across SNR points.
    pub fn from_parts<R: Rng + ?Sized>(
        block_id: u64,
        channel: ChannelMatrix,
        tx: SymbolGrid,
        noise_var: f64,
        noise_rng: &mut R,
    ) -> Result<Self> {
        if channel.k() != tx.entries.nrows() {
            return Err(Error::Dimension(format!(
                "channel has {} users, symbol grid has {}",
                channel.k(),
                tx.entries.nrows()
            )));
        }
        let unit_noise = CMatrix::from_fn(channel.m(), tx.entries.ncols(), |_, _| complex_gaussian(noise_rng));
        let mut entries = channel.matrix() * &tx.entries;
        if noise_var > 0.0 {
            entries += unit_noise * Complex64::from(noise_var.sqrt());
        }
        Ok(CoherenceBlock {
            block_id,
            channel,
            tx,
            rx: ReceivedGrid { entries, noise_var },
        })
    }

    /// Same channel and data with a different noise level; the underlying unit
    /// noise realization is shared.
    pub fn with_snr(&self, cfg: &SystemConfig, snr_db: f64) -> Result<CoherenceBlock> {
        let mut noise_rng = substream(cfg.master_seed, self.block_id, Stream::Noise);
        CoherenceBlock::from_parts(
            self.block_id,
            self.channel.clone(),
            self.tx.clone(),
            snr_to_noise_var(snr_db, cfg.k),
            &mut noise_rng,
        )
    }

    /// The first OFDM symbol's `n_cbw` received columns.
    pub fn training_columns(&self, n_cbw: usize) -> CMatrix {
        self.rx.entries.columns(0, n_cbw).into_owned()
    }
}

/// Generate block `block_id` for `cfg`. Channel, symbols and noise come from
/// separate substreams keyed on `(master_seed, block_id)`, so a block is
/// reproducible in isolation and identical across SNR points except for the
/// noise scale.
pub fn build_coherence_block(cfg: &SystemConfig, snr_db: f64, block_id: u64) -> Result<CoherenceBlock> {
    cfg.validate()?;
    let mut ch_rng = substream(cfg.master_seed, block_id, Stream::Channel);
    let mut sym_rng = substream(cfg.master_seed, block_id, Stream::Symbols);
    let mut noise_rng = substream(cfg.master_seed, block_id, Stream::Noise);
    let channel = generate_channel(cfg.m, cfg.k, &mut ch_rng);
    let tx = draw_symbols(cfg.k, cfg.n_re(), cfg.constellation, &mut sym_rng);
    CoherenceBlock::from_parts(block_id, channel, tx, snr_to_noise_var(snr_db, cfg.k), &mut noise_rng)
}

/// Real-valued `[Re(v); Im(v)]` representation of a complex antenna vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RealStack(pub Vec<f64>);

impl RealStack {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn complex_to_real_stack(v: &[Complex64]) -> RealStack {
    RealStack(v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect())
}

pub fn real_stack_to_complex(r: &RealStack) -> Result<Vec<Complex64>> {
    if r.len() % 2 != 0 {
        return Err(Error::Dimension(format!("real stack has odd length {}", r.len())));
    }
    let m = r.len() / 2;
    Ok((0..m).map(|i| Complex64::new(r.0[i], r.0[m + i])).collect())
}

/// Stack every column of an M×n complex grid into a 2M×n real matrix.
pub fn stack_grid(grid: &CMatrix) -> DMatrix<f64> {
    let m = grid.nrows();
    DMatrix::from_fn(2 * m, grid.ncols(), |i, j| {
        if i < m {
            grid[(i, j)].re
        } else {
            grid[(i - m, j)].im
        }
    })
}

pub fn unstack_grid(stacked: &DMatrix<f64>) -> Result<CMatrix> {
    if stacked.nrows() % 2 != 0 {
        return Err(Error::Dimension(format!("stacked grid has odd row count {}", stacked.nrows())));
    }
    let m = stacked.nrows() / 2;
    Ok(CMatrix::from_fn(m, stacked.ncols(), |i, j| {
        Complex64::new(stacked[(i, j)], stacked[(m + i, j)])
    }))
}

pub fn stack_column(v: &DVector<Complex64>) -> RealStack {
    complex_to_real_stack(v.as_slice())
}
