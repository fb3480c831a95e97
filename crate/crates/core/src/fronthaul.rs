//! Radio-head to CPU interconnect: wire frames and bandwidth accounting.
//!
//! Frame layout, all integers little-endian:
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 4    | magic `MAEF`                            |
//! | 4      | 2    | version (1 = f32 payload, 2 = f64)      |
//! | 6      | 1    | kind (1 latent, 2 decoder, 3 encoder)   |
//! | 7      | 8    | block id                                |
//! | 15     | 4    | rows                                    |
//! | 19     | 4    | cols                                    |
//! | 23     | 4    | M (antennas)                            |
//! | 27     | 4    | n_div                                   |
//! | 31     | r·c·w| payload, row-major                      |
//! | end    | 4    | CRC-32 (IEEE) of every preceding byte   |

use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::autoencoder::{AutoencoderModel, DecoderPart, EncoderPart, FeatureScaling, LatentGrid};
use crate::error::{Error, FrameError, Result};

pub const MAGIC: [u8; 4] = *b"MAEF";
pub const HEADER_LEN: usize = 31;
pub const CRC_LEN: usize = 4;
/// Effective reduction factor quoted for M=512, N_CBW=12, N_Slot=7, N_DIV=8.
pub const QUOTED_EFFECTIVE_FACTOR: f64 = 7.466;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn version(self) -> u16 {
        match self {
            Precision::F32 => 1,
            Precision::F64 => 2,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    fn from_version(v: u16) -> std::result::Result<Precision, FrameError> {
        match v {
            1 => Ok(Precision::F32),
            2 => Ok(Precision::F64),
            other => Err(FrameError::UnsupportedVersion(other)),
        }
    }
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::config(format!("precision {s:?} is not f32 or f64"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameKind {
    Latent = 1,
    Decoder = 2,
    Encoder = 3,
}

impl TryFrom<u8> for FrameKind {
    type Error = FrameError;

    fn try_from(v: u8) -> std::result::Result<Self, FrameError> {
        match v {
            1 => Ok(FrameKind::Latent),
            2 => Ok(FrameKind::Decoder),
            3 => Ok(FrameKind::Encoder),
            other => Err(FrameError::UnknownKind(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireFrame {
    pub precision: Precision,
    pub kind: FrameKind,
    pub block_id: u64,
    pub rows: u32,
    pub cols: u32,
    pub m: u32,
    pub n_div: u32,
    /// Row-major values. Under `F32` these are exactly representable in f32
    /// once the frame has been through [`deserialize`].
    pub payload: Vec<f64>,
}

impl WireFrame {
    pub fn values(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.values() * self.precision.width() + CRC_LEN
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows as usize, self.cols as usize, &self.payload)
    }

    fn expect_kind(&self, kind: FrameKind) -> Result<()> {
        if self.kind != kind {
            return Err(FrameError::Layout(format!("expected {kind:?} frame, found {:?}", self.kind)).into());
        }
        Ok(())
    }
}

fn u32_dim(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Dimension(format!("{what} {v} does not fit in 32 bits")))
}

/// Encode one frame.
pub fn serialize(frame: &WireFrame) -> Result<Vec<u8>> {
    if frame.payload.len() != frame.values() {
        return Err(FrameError::Layout(format!(
            "{} values for a {}x{} frame",
            frame.payload.len(),
            frame.rows,
            frame.cols
        ))
        .into());
    }
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&frame.precision.version().to_le_bytes());
    out.push(frame.kind as u8);
    out.extend_from_slice(&frame.block_id.to_le_bytes());
    for d in [frame.rows, frame.cols, frame.m, frame.n_div] {
        out.extend_from_slice(&d.to_le_bytes());
    }
    match frame.precision {
        Precision::F32 => {
            for &v in &frame.payload {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Precision::F64 => {
            for &v in &frame.payload {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn take<const N: usize>(bytes: &[u8], at: usize) -> [u8; N] {
    bytes[at..at + N].try_into().expect("length checked by caller")
}

/// Decode the frame at the start of `bytes`, returning it and the number of
/// bytes consumed.
pub fn deserialize_prefix(bytes: &[u8]) -> std::result::Result<(WireFrame, usize), FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = take(bytes, 0);
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let precision = Precision::from_version(u16::from_le_bytes(take(bytes, 4)))?;
    let kind = FrameKind::try_from(bytes[6])?;
    let block_id = u64::from_le_bytes(take(bytes, 7));
    let rows = u32::from_le_bytes(take(bytes, 15));
    let cols = u32::from_le_bytes(take(bytes, 19));
    let m = u32::from_le_bytes(take(bytes, 23));
    let n_div = u32::from_le_bytes(take(bytes, 27));

    let values = rows as usize * cols as usize;
    let payload_len = values
        .checked_mul(precision.width())
        .ok_or_else(|| FrameError::Layout(format!("{rows}x{cols} payload overflows")))?;
    let total = HEADER_LEN + payload_len + CRC_LEN;
    if bytes.len() < total {
        return Err(FrameError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    let body_end = HEADER_LEN + payload_len;
    let stored = u32::from_le_bytes(take(bytes, body_end));
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(FrameError::Crc { stored, computed });
    }

    let body = &bytes[HEADER_LEN..body_end];
    let payload = match precision {
        Precision::F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect(),
        Precision::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    let frame = WireFrame {
        precision,
        kind,
        block_id,
        rows,
        cols,
        m,
        n_div,
        payload,
    };
    Ok((frame, total))
}

/// Decode exactly one frame; trailing bytes are an error.
pub fn deserialize(bytes: &[u8]) -> Result<WireFrame> {
    let (frame, used) = deserialize_prefix(bytes)?;
    if used != bytes.len() {
        return Err(FrameError::Layout(format!("{} trailing bytes after frame", bytes.len() - used)).into());
    }
    Ok(frame)
}

/// Decode a `.maef` stream of concatenated frames.
pub fn read_frames(mut bytes: &[u8]) -> Result<Vec<WireFrame>> {
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        let (frame, used) = deserialize_prefix(bytes)?;
        frames.push(frame);
        bytes = &bytes[used..];
    }
    Ok(frames)
}

pub fn write_frames(frames: &[WireFrame]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for f in frames {
        out.extend(serialize(f)?);
    }
    Ok(out)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Latent grid: `latent_dim × n_re`.
pub fn latent_frame(latent: &LatentGrid, m: usize, n_div: usize, precision: Precision) -> Result<WireFrame> {
    Ok(WireFrame {
        precision,
        kind: FrameKind::Latent,
        block_id: latent.block_id,
        rows: u32_dim(latent.values.nrows(), "latent rows")?,
        cols: u32_dim(latent.values.ncols(), "latent cols")?,
        m: u32_dim(m, "M")?,
        n_div: u32_dim(n_div, "n_div")?,
        payload: row_major(&latent.values),
    })
}

pub fn latent_from_frame(frame: &WireFrame) -> Result<LatentGrid> {
    frame.expect_kind(FrameKind::Latent)?;
    Ok(LatentGrid {
        block_id: frame.block_id,
        values: frame.matrix(),
    })
}

/// Decoder part as an `input_dim × (latent_dim + 3)` matrix
/// `[W_dec | b_dec | feat_min | feat_max]`.
pub fn decoder_frame(dec: &DecoderPart, block_id: u64, precision: Precision) -> Result<WireFrame> {
    let (d, l) = (dec.input_dim(), dec.latent_dim());
    let mut packed = DMatrix::zeros(d, l + 3);
    packed.columns_mut(0, l).copy_from(&dec.w_dec);
    packed.set_column(l, &dec.b_dec);
    packed.set_column(l + 1, &dec.scaling.min);
    packed.set_column(l + 2, &dec.scaling.max);
    Ok(WireFrame {
        precision,
        kind: FrameKind::Decoder,
        block_id,
        rows: u32_dim(d, "decoder rows")?,
        cols: u32_dim(l + 3, "decoder cols")?,
        m: u32_dim(d / 2, "M")?,
        n_div: u32_dim(if l == 0 { 0 } else { d / l }, "n_div")?,
        payload: row_major(&packed),
    })
}

pub fn decoder_from_frame(frame: &WireFrame) -> Result<DecoderPart> {
    frame.expect_kind(FrameKind::Decoder)?;
    if frame.cols < 4 {
        return Err(FrameError::Layout(format!("decoder frame needs at least 4 columns, has {}", frame.cols)).into());
    }
    let packed = frame.matrix();
    let l = packed.ncols() - 3;
    Ok(DecoderPart {
        w_dec: packed.columns(0, l).into_owned(),
        b_dec: packed.column(l).into_owned(),
        scaling: FeatureScaling {
            min: packed.column(l + 1).into_owned(),
            max: packed.column(l + 2).into_owned(),
        },
    })
}

/// Encoder part as a `(latent_dim + 2) × (input_dim + 1)` matrix: rows
/// `[W_enc | b_enc]`, then `[feat_min | 0]` and `[feat_max | 0]`.
pub fn encoder_frame(enc: &EncoderPart, block_id: u64, precision: Precision) -> Result<WireFrame> {
    let (d, l) = (enc.input_dim(), enc.latent_dim());
    let mut packed = DMatrix::zeros(l + 2, d + 1);
    packed.view_mut((0, 0), (l, d)).copy_from(&enc.w_enc);
    packed.view_mut((0, d), (l, 1)).copy_from(&enc.b_enc);
    packed.view_mut((l, 0), (1, d)).copy_from(&enc.scaling.min.transpose());
    packed.view_mut((l + 1, 0), (1, d)).copy_from(&enc.scaling.max.transpose());
    Ok(WireFrame {
        precision,
        kind: FrameKind::Encoder,
        block_id,
        rows: u32_dim(l + 2, "encoder rows")?,
        cols: u32_dim(d + 1, "encoder cols")?,
        m: u32_dim(d / 2, "M")?,
        n_div: u32_dim(if l == 0 { 0 } else { d / l }, "n_div")?,
        payload: row_major(&packed),
    })
}

pub fn encoder_from_frame(frame: &WireFrame) -> Result<EncoderPart> {
    frame.expect_kind(FrameKind::Encoder)?;
    if frame.rows < 3 || frame.cols < 2 {
        return Err(FrameError::Layout(format!("encoder frame {}x{} too small", frame.rows, frame.cols)).into());
    }
    let packed = frame.matrix();
    let (l, d) = (packed.nrows() - 2, packed.ncols() - 1);
    Ok(EncoderPart {
        w_enc: packed.view((0, 0), (l, d)).into_owned(),
        b_enc: packed.view((0, d), (l, 1)).column(0).into_owned(),
        scaling: FeatureScaling {
            min: DVector::from_iterator(d, packed.view((l, 0), (1, d)).iter().copied()),
            max: DVector::from_iterator(d, packed.view((l + 1, 0), (1, d)).iter().copied()),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LedgerMode {
    /// Decoder overhead counted as `n_cbw · 2M / n_div` per block.
    Paper,
    /// Decoder overhead counted as every value actually shipped.
    Actual,
}

impl fmt::Display for LedgerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LedgerMode::Paper => "paper",
            LedgerMode::Actual => "actual",
        })
    }
}

/// Real-valued sample counts crossing the interconnect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandwidthLedger {
    pub mode: LedgerMode,
    /// Samples an uncompressed link would carry.
    pub full_samples: u64,
    pub latent_samples: u64,
    pub overhead_samples: u64,
}

impl BandwidthLedger {
    pub fn empty(mode: LedgerMode) -> Self {
        BandwidthLedger {
            mode,
            full_samples: 0,
            latent_samples: 0,
            overhead_samples: 0,
        }
    }

    pub fn transferred(&self) -> u64 {
        self.latent_samples + self.overhead_samples
    }

    /// `full / (latent + overhead)`.
    pub fn effective_factor(&self) -> f64 {
        self.full_samples as f64 / self.transferred() as f64
    }

    pub fn merge(&mut self, other: &BandwidthLedger) -> Result<()> {
        if self.mode != other.mode {
            return Err(Error::Other(format!("cannot merge {} ledger into {}", other.mode, self.mode)));
        }
        *self += *other;
        Ok(())
    }
}

impl AddAssign for BandwidthLedger {
    fn add_assign(&mut self, rhs: BandwidthLedger) {
        debug_assert_eq!(self.mode, rhs.mode);
        self.full_samples += rhs.full_samples;
        self.latent_samples += rhs.latent_samples;
        self.overhead_samples += rhs.overhead_samples;
    }
}

fn check_n_div(m: usize, n_div: usize) -> Result<()> {
    if n_div == 0 || (2 * m) % n_div != 0 {
        return Err(Error::config(format!("n_div ({n_div}) must divide 2M ({})", 2 * m)));
    }
    Ok(())
}

/// Per-block counts with overhead `n_cbw · 2M / n_div`.
pub fn paper_sample_count(m: usize, n_cbw: usize, n_slot: usize, n_div: usize) -> Result<BandwidthLedger> {
    check_n_div(m, n_div)?;
    let latent_dim = (2 * m / n_div) as u64;
    let (n_cbw, n_slot) = (n_cbw as u64, n_slot as u64);
    Ok(BandwidthLedger {
        mode: LedgerMode::Paper,
        full_samples: 2 * m as u64 * n_cbw * n_slot,
        latent_samples: latent_dim * n_cbw * n_slot,
        overhead_samples: n_cbw * latent_dim,
    })
}

/// Per-block counts with overhead equal to the decoder weights, biases and
/// both scaling vectors.
pub fn actual_sample_count_for(m: usize, n_cbw: usize, n_slot: usize, n_div: usize) -> Result<BandwidthLedger> {
    check_n_div(m, n_div)?;
    let input_dim = 2 * m as u64;
    let latent_dim = input_dim / n_div as u64;
    let n_re = (n_cbw * n_slot) as u64;
    Ok(BandwidthLedger {
        mode: LedgerMode::Actual,
        full_samples: input_dim * n_re,
        latent_samples: latent_dim * n_re,
        overhead_samples: input_dim * latent_dim + input_dim + 2 * input_dim,
    })
}

pub fn actual_sample_count(model: &AutoencoderModel, n_cbw: usize, n_slot: usize) -> Result<BandwidthLedger> {
    actual_sample_count_for(model.input_dim() / 2, n_cbw, n_slot, model.n_div())
}

/// Report line comparing the formula's factor with the quoted 7.466.
pub fn quoted_factor_note() -> Result<String> {
    let f = paper_sample_count(512, 12, 7, 8)?.effective_factor();
    Ok(format!(
        "M=512, N_CBW=12, N_Slot=7, N_DIV=8: transferred-sample formula gives effective factor {f:.3}; \
         the quoted value is {QUOTED_EFFECTIVE_FACTOR} (discrepancy {:+.3}, flagged, not reconciled)",
        QUOTED_EFFECTIVE_FACTOR - f
    ))
}

/// Push a latent grid and decoder part through serialize/deserialize and
/// charge both payloads to an actual-mode `ledger`.
pub fn transfer_block(
    latent: &LatentGrid,
    dec: &DecoderPart,
    ledger: &mut BandwidthLedger,
    precision: Precision,
) -> Result<(LatentGrid, DecoderPart)> {
    if latent.values.nrows() != dec.latent_dim() {
        return Err(Error::Dimension(format!(
            "latent grid has {} rows, decoder expects {}",
            latent.values.nrows(),
            dec.latent_dim()
        )));
    }
    let m = dec.input_dim() / 2;
    let n_div = dec.input_dim() / dec.latent_dim();
    let lf = latent_frame(latent, m, n_div, precision)?;
    let df = decoder_frame(dec, latent.block_id, precision)?;
    let lf_rx = deserialize(&serialize(&lf)?)?;
    let df_rx = deserialize(&serialize(&df)?)?;

    *ledger += BandwidthLedger {
        mode: ledger.mode,
        full_samples: (2 * m * latent.values.ncols()) as u64,
        latent_samples: lf_rx.values() as u64,
        overhead_samples: df_rx.values() as u64,
    };
    Ok((latent_from_frame(&lf_rx)?, decoder_from_frame(&df_rx)?))
}
