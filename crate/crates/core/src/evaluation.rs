//! Monte Carlo EVM-vs-SNR sweeps over paired coherence blocks.
//!
//! Every scenario at a given `(block_id, snr)` sees the same channel, symbols
//! and unit noise; only the processing differs. Work is split per block and
//! reduced in a fixed order, so output does not depend on the thread count.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, AutoencoderConfig, AutoencoderModel, LatentGrid};
use crate::detectors::{admm_gs_detect, evm_from_powers, evm_powers, gs_detect, partition_clusters, AdmmParams};
use crate::error::{Error, Result};
use crate::fronthaul::{
    actual_sample_count_for, paper_sample_count, quoted_factor_note, transfer_block, BandwidthLedger, LedgerMode,
    Precision,
};
use crate::signal_model::{
    build_coherence_block, stack_grid, substream, unstack_grid, CMatrix, CoherenceBlock, Stream, SystemConfig,
};

pub const DEFAULT_ITERATIONS: usize = 5;
pub const THREADS_ENV: &str = "MIMO_AE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScenarioKind {
    FullBwCentralized,
    AeCentralized,
    ArrayReduced,
    DecentralizedAdmm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Present iff `kind` is `AeCentralized` or `ArrayReduced`.
    pub n_div: Option<usize>,
    /// Present iff `kind` is `DecentralizedAdmm`.
    pub clusters: Option<usize>,
    /// GS sweeps for centralized kinds; outer ADMM iterations are taken from
    /// [`EvalConfig::admm`].
    pub iterations: usize,
    /// `None` trains each block at its operating SNR; `Some(s)` trains at `s` dB.
    pub train_snr_db: Option<f64>,
}

impl Scenario {
    pub fn full() -> Scenario {
        Scenario {
            kind: ScenarioKind::FullBwCentralized,
            n_div: None,
            clusters: None,
            iterations: DEFAULT_ITERATIONS,
            train_snr_db: None,
        }
    }

    pub fn autoencoder(n_div: usize) -> Scenario {
        Scenario {
            kind: ScenarioKind::AeCentralized,
            n_div: Some(n_div),
            ..Scenario::full()
        }
    }

    pub fn autoencoder_trained_at(n_div: usize, snr_db: f64) -> Scenario {
        Scenario {
            train_snr_db: Some(snr_db),
            ..Scenario::autoencoder(n_div)
        }
    }

    pub fn array_reduced(n_div: usize) -> Scenario {
        Scenario {
            kind: ScenarioKind::ArrayReduced,
            n_div: Some(n_div),
            ..Scenario::full()
        }
    }

    pub fn admm(clusters: usize) -> Scenario {
        Scenario {
            kind: ScenarioKind::DecentralizedAdmm,
            clusters: Some(clusters),
            ..Scenario::full()
        }
    }

    pub fn violations(&self, cfg: &SystemConfig) -> Vec<String> {
        let mut v = Vec::new();
        let needs_div = matches!(self.kind, ScenarioKind::AeCentralized | ScenarioKind::ArrayReduced);
        match (needs_div, self.n_div) {
            (true, None) => v.push(format!("{self}: n_div required")),
            (false, Some(_)) => v.push(format!("{self}: n_div not applicable")),
            (true, Some(d)) if d == 0 || cfg.m % d != 0 => {
                v.push(format!("{self}: n_div {d} must divide m = {}", cfg.m))
            }
            (true, Some(d)) if self.kind == ScenarioKind::ArrayReduced && cfg.m / d < cfg.k => v.push(format!(
                "{self}: {} remaining antennas cannot separate {} users",
                cfg.m / d,
                cfg.k
            )),
            _ => {}
        }
        let needs_clusters = self.kind == ScenarioKind::DecentralizedAdmm;
        match (needs_clusters, self.clusters) {
            (true, None) => v.push(format!("{self}: clusters required")),
            (false, Some(_)) => v.push(format!("{self}: clusters not applicable")),
            (true, Some(c)) if c == 0 || cfg.m % c != 0 => {
                v.push(format!("{self}: {c} clusters must divide m = {}", cfg.m))
            }
            _ => {}
        }
        if self.train_snr_db.is_some() && self.kind != ScenarioKind::AeCentralized {
            v.push(format!("{self}: training SNR applies to autoencoder scenarios only"));
        }
        v
    }

    /// Canonical output order: kind, then n_div, clusters, training SNR.
    fn sort_key(&self) -> (ScenarioKind, usize, usize, u8, i64) {
        let (fixed, snr) = match self.train_snr_db {
            None => (0, 0),
            Some(s) => (1, (s * 1000.0).round() as i64),
        };
        (self.kind, self.n_div.unwrap_or(1), self.clusters.unwrap_or(0), fixed, snr)
    }

    /// CSV tag; `n_div` travels in its own column.
    pub fn tag(&self) -> String {
        match self.kind {
            ScenarioKind::FullBwCentralized => "full".into(),
            ScenarioKind::AeCentralized => match self.train_snr_db {
                None => "ae".into(),
                Some(s) => format!("ae-train{s}"),
            },
            ScenarioKind::ArrayReduced => "array".into(),
            ScenarioKind::DecentralizedAdmm => format!("admm-c{}", self.clusters.unwrap_or(0)),
        }
    }

    fn from_tag(tag: &str, n_div: usize) -> Result<Scenario> {
        let bad = || Error::config(format!("unknown scenario tag {tag:?}"));
        Ok(match tag {
            "full" => Scenario::full(),
            "ae" => Scenario::autoencoder(n_div),
            "array" => Scenario::array_reduced(n_div),
            t if t.starts_with("ae-train") => {
                Scenario::autoencoder_trained_at(n_div, t["ae-train".len()..].parse().map_err(|_| bad())?)
            }
            t if t.starts_with("admm-c") => Scenario::admm(t["admm-c".len()..].parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.n_div {
            Some(d) => write!(f, "{}/{}", self.tag(), d),
            None => f.write_str(&self.tag()),
        }
    }
}

/// Parses `full`, `ae`, `array`, `admm`, `ae-train10`, `admm-c4`, with
/// `ae`/`array` expanded over `n_divs` and bare `admm` using `clusters`.
pub fn parse_scenarios(list: &str, n_divs: &[usize], clusters: usize) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "full" => out.push(Scenario::full()),
            "admm" => out.push(Scenario::admm(clusters)),
            t if t.starts_with("admm-c") => match Scenario::from_tag(t, 1) {
                Ok(s) => out.push(s),
                Err(e) => errors.push(e.to_string()),
            },
            t if t == "ae" || t == "array" || t.starts_with("ae-train") => {
                for &d in n_divs {
                    match Scenario::from_tag(t, d) {
                        Ok(s) => out.push(s),
                        Err(e) => errors.push(e.to_string()),
                    }
                }
            }
            other => errors.push(format!("unknown scenario {other:?}")),
        }
    }
    if out.is_empty() && errors.is_empty() {
        errors.push("scenario list is empty".into());
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(Error::Config(errors))
    }
}

/// Everything a sweep needs besides the scenario list and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub system: SystemConfig,
    /// `n_div` is overridden per scenario.
    pub autoencoder: AutoencoderConfig,
    pub admm: AdmmParams,
    pub precision: Precision,
    /// Worker cap; `None` defers to the environment, then to rayon's default.
    pub threads: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            system: SystemConfig::default(),
            autoencoder: AutoencoderConfig {
                max_epochs: 2000,
                ..AutoencoderConfig::default()
            },
            admm: AdmmParams::default(),
            precision: Precision::F32,
            threads: None,
        }
    }
}

impl EvalConfig {
    pub fn violations(&self, scenarios: &[Scenario]) -> Vec<String> {
        let mut v = self.system.violations();
        let d = 2 * self.system.m;
        let mut ae_checked = false;
        for s in scenarios {
            v.extend(s.violations(&self.system));
            if let (ScenarioKind::AeCentralized, Some(n_div)) = (s.kind, s.n_div) {
                let cfg = AutoencoderConfig { n_div, ..self.autoencoder.clone() };
                for msg in cfg.violations(d) {
                    if !(ae_checked && !msg.starts_with("n_div")) {
                        v.push(format!("autoencoder: {msg}"));
                    }
                }
                ae_checked = true;
            }
        }
        if self.admm.rho < 0.0 {
            v.push(format!("admm rho {} must be non-negative", self.admm.rho));
        }
        if self.threads == Some(0) {
            v.push("threads must be at least 1".into());
        }
        v
    }
}

/// Summed quantities for one scenario over some set of blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutcome {
    pub err_power: f64,
    pub ref_power: f64,
    pub recon_sq_err: f64,
    pub recon_count: u64,
    pub ledger: Option<BandwidthLedger>,
}

impl BlockOutcome {
    fn detection(err_power: f64, ref_power: f64) -> BlockOutcome {
        BlockOutcome {
            err_power,
            ref_power,
            recon_sq_err: 0.0,
            recon_count: 0,
            ledger: None,
        }
    }

    pub fn evm_percent(&self) -> Result<f64> {
        evm_from_powers(self.err_power, self.ref_power)
    }

    fn accumulate(&mut self, other: &BlockOutcome) -> Result<()> {
        self.err_power += other.err_power;
        self.ref_power += other.ref_power;
        self.recon_sq_err += other.recon_sq_err;
        self.recon_count += other.recon_count;
        match (&mut self.ledger, &other.ledger) {
            (Some(a), Some(b)) => a.merge(b)?,
            (a @ None, Some(b)) => *a = Some(*b),
            _ => {}
        }
        Ok(())
    }
}

fn ae_config(cfg: &EvalConfig, n_div: usize) -> AutoencoderConfig {
    AutoencoderConfig {
        n_div,
        ..cfg.autoencoder.clone()
    }
}

/// Train on the block's first-symbol columns. Initial weights come from the
/// block's own substream, so results do not depend on scheduling.
pub fn train_block_model(cfg: &EvalConfig, block: &CoherenceBlock, n_div: usize) -> Result<AutoencoderModel> {
    let ae = ae_config(cfg, n_div);
    let x = autoencoder::training_set(&block.training_columns(cfg.system.n_cbw), ae.rotations);
    let mut rng = substream(cfg.system.master_seed, block.block_id, Stream::AutoencoderInit);
    autoencoder::train(&x, &ae, &mut rng).map_err(|e| Error::Block {
        block_id: block.block_id,
        source: Box::new(e),
    })
}

/// Encode the whole block, ship latents and decoder through the wire format,
/// and reconstruct at the CPU side.
pub fn compress_block(
    model: &AutoencoderModel,
    block: &CoherenceBlock,
    precision: Precision,
) -> Result<(CMatrix, BandwidthLedger)> {
    let stacked = stack_grid(&block.rx.entries);
    let latent = LatentGrid {
        block_id: block.block_id,
        values: model.encoder().encode_matrix(&stacked)?,
    };
    let mut ledger = BandwidthLedger::empty(LedgerMode::Actual);
    let (latent_rx, dec_rx) = transfer_block(&latent, &model.decoder(), &mut ledger, precision)?;
    let recon = dec_rx.decode_matrix(&latent_rx.values)?;
    Ok((unstack_grid(&recon)?, ledger))
}

/// Process one block under `scenario`. `model` must be supplied for
/// autoencoder scenarios and is ignored otherwise.
pub fn run_block(
    cfg: &EvalConfig,
    block: &CoherenceBlock,
    scenario: &Scenario,
    model: Option<&AutoencoderModel>,
) -> Result<BlockOutcome> {
    let h = block.channel.matrix();
    let y = &block.rx.entries;
    let s = &block.tx.entries;
    let t = scenario.iterations;
    match scenario.kind {
        ScenarioKind::FullBwCentralized => {
            let (e, r) = evm_powers(&gs_detect(h, y, t)?.s_hat, s)?;
            Ok(BlockOutcome::detection(e, r))
        }
        ScenarioKind::ArrayReduced => {
            let rows = block.channel.m() / scenario.n_div.unwrap_or(1);
            let hr = block.channel.first_rows(rows);
            let yr = block.rx.first_rows(rows);
            let (e, r) = evm_powers(&gs_detect(hr.matrix(), &yr.entries, t)?.s_hat, s)?;
            Ok(BlockOutcome::detection(e, r))
        }
        ScenarioKind::DecentralizedAdmm => {
            let p = partition_clusters(h, y, scenario.clusters.unwrap_or(1), cfg.admm)?;
            let (e, r) = evm_powers(&admm_gs_detect(&p)?.s_hat, s)?;
            Ok(BlockOutcome::detection(e, r))
        }
        ScenarioKind::AeCentralized => {
            let model = model.ok_or_else(|| Error::Other(format!("{scenario} needs a trained model")))?;
            let (recon, ledger) = compress_block(model, block, cfg.precision)?;
            let (e, r) = evm_powers(&gs_detect(h, &recon, t)?.s_hat, s)?;
            let diff = stack_grid(&(&recon - y));
            Ok(BlockOutcome {
                err_power: e,
                ref_power: r,
                recon_sq_err: diff.norm_squared(),
                recon_count: diff.len() as u64,
                ledger: Some(ledger),
            })
        }
    }
}

/// One `(scenario, snr)` result.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub scenario: Scenario,
    pub snr_db: f64,
    pub evm_percent: f64,
    pub n_blocks: usize,
    pub seed: u64,
    /// Mean squared error per real sample of the reconstruction.
    pub recon_mse: Option<f64>,
    /// Transferred-sample factor of the stated formula.
    pub paper_factor: Option<f64>,
    /// Real samples of per-block model overhead actually sent.
    pub actual_overhead: Option<u64>,
}

impl SweepRecord {
    pub fn n_div(&self) -> usize {
        self.scenario.n_div.unwrap_or(1)
    }
}

fn canonical(scenarios: &[Scenario]) -> Vec<Scenario> {
    let mut out = scenarios.to_vec();
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out.dedup_by(|a, b| a.sort_key() == b.sort_key());
    out
}

fn worker_count(cfg: &EvalConfig) -> Result<Option<usize>> {
    if let Some(n) = cfg.threads {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// All `(snr, scenario)` outcomes of one block, in grid order.
fn sweep_block(cfg: &EvalConfig, scenarios: &[Scenario], snrs: &[f64], block_id: u64) -> Result<Vec<BlockOutcome>> {
    let base = build_coherence_block(&cfg.system, snrs[0], block_id)?;
    // Fixed-SNR models do not depend on the operating point.
    let mut fixed: BTreeMap<(usize, i64), AutoencoderModel> = BTreeMap::new();
    for s in scenarios {
        if let (ScenarioKind::AeCentralized, Some(d), Some(ts)) = (s.kind, s.n_div, s.train_snr_db) {
            let key = (d, ts.to_bits() as i64);
            if let std::collections::btree_map::Entry::Vacant(slot) = fixed.entry(key) {
                slot.insert(train_block_model(cfg, &base.with_snr(&cfg.system, ts)?, d)?);
            }
        }
    }

    let mut out = Vec::with_capacity(snrs.len() * scenarios.len());
    for &snr in snrs {
        let block = base.with_snr(&cfg.system, snr)?;
        let mut operating: BTreeMap<usize, AutoencoderModel> = BTreeMap::new();
        for s in scenarios {
            let model = match (s.kind, s.n_div, s.train_snr_db) {
                (ScenarioKind::AeCentralized, Some(d), None) => {
                    if !operating.contains_key(&d) {
                        operating.insert(d, train_block_model(cfg, &block, d)?);
                    }
                    operating.get(&d)
                }
                (ScenarioKind::AeCentralized, Some(d), Some(ts)) => fixed.get(&(d, ts.to_bits() as i64)),
                _ => None,
            };
            out.push(run_block(cfg, &block, s, model).map_err(|e| match e {
                e @ Error::Block { .. } => e,
                e => Error::Block {
                    block_id,
                    source: Box::new(e),
                },
            })?);
        }
    }
    Ok(out)
}

/// Average every scenario over blocks `0..n_blocks` at every SNR. Records come
/// back sorted by scenario, then SNR.
pub fn sweep(cfg: &EvalConfig, scenarios: &[Scenario], snr_grid: &[f64], n_blocks: usize) -> Result<Vec<SweepRecord>> {
    if n_blocks == 0 {
        return Err(Error::config("n_blocks must be at least 1"));
    }
    if snr_grid.is_empty() || scenarios.is_empty() {
        return Err(Error::config("sweep needs at least one scenario and one SNR point"));
    }
    let violations = cfg.violations(scenarios);
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let scenarios = canonical(scenarios);
    let mut snrs = snr_grid.to_vec();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();

    let run = || -> Vec<Result<Vec<BlockOutcome>>> {
        (0..n_blocks as u64)
            .into_par_iter()
            .map(|b| sweep_block(cfg, &scenarios, &snrs, b))
            .collect()
    };
    let per_block = match worker_count(cfg)? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Other(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let cells = snrs.len() * scenarios.len();
    let mut totals: Vec<Option<BlockOutcome>> = vec![None; cells];
    for block in per_block {
        for (slot, o) in totals.iter_mut().zip(block?) {
            match slot {
                Some(t) => t.accumulate(&o)?,
                None => *slot = Some(o),
            }
        }
    }

    let seed = cfg.system.master_seed;
    let mut records = Vec::with_capacity(cells);
    for (si, s) in scenarios.iter().enumerate() {
        for (pi, &snr) in snrs.iter().enumerate() {
            let t = totals[pi * scenarios.len() + si].as_ref().expect("every cell is filled");
            let ae = s.kind == ScenarioKind::AeCentralized;
            let paper_factor = match (ae, s.n_div) {
                (true, Some(d)) => Some(
                    paper_sample_count(cfg.system.m, cfg.system.n_cbw, cfg.system.n_slot, d)?.effective_factor(),
                ),
                _ => None,
            };
            records.push(SweepRecord {
                scenario: *s,
                snr_db: snr,
                evm_percent: t.evm_percent()?,
                n_blocks,
                seed,
                recon_mse: (t.recon_count > 0).then(|| t.recon_sq_err / t.recon_count as f64),
                paper_factor,
                actual_overhead: t.ledger.map(|l| l.overhead_samples / n_blocks as u64),
            });
        }
    }
    Ok(records)
}

pub const CSV_COLUMNS: [&str; 9] = [
    "scenario",
    "n_div",
    "snr_db",
    "evm_percent",
    "n_blocks",
    "seed",
    "recon_mse",
    "paper_factor",
    "actual_overhead",
];

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    scenario: String,
    n_div: usize,
    snr_db: f64,
    evm_percent: f64,
    n_blocks: usize,
    seed: u64,
    recon_mse: Option<f64>,
    paper_factor: Option<f64>,
    actual_overhead: Option<u64>,
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Csv {
        line,
        reason: e.to_string(),
    }
}

pub fn write_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Other("no records to write".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            scenario: r.scenario.tag(),
            n_div: r.n_div(),
            snr_db: r.snr_db,
            evm_percent: r.evm_percent,
            n_blocks: r.n_blocks,
            seed: r.seed,
            recon_mse: r.recon_mse,
            paper_factor: r.paper_factor,
            actual_overhead: r.actual_overhead,
        })
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Other(format!("csv flush: {e}")))?;
    Ok(())
}

pub fn to_csv_string(records: &[SweepRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is ASCII"))
}

pub fn emit_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let text = to_csv_string(records)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers().map_err(csv_error)?.clone();
    for col in CSV_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Csv {
                line: 1,
                reason: format!("missing column {col:?}"),
            });
        }
    }
    let mut out = Vec::new();
    for row in rd.deserialize::<CsvRow>() {
        let row = row.map_err(csv_error)?;
        let line = out.len() + 2;
        let scenario = Scenario::from_tag(&row.scenario, row.n_div).map_err(|e| Error::Csv {
            line,
            reason: e.to_string(),
        })?;
        if row.n_blocks == 0 || !(row.evm_percent >= 0.0) {
            return Err(Error::Csv {
                line,
                reason: "n_blocks must be positive and evm_percent non-negative".into(),
            });
        }
        out.push(SweepRecord {
            scenario,
            snr_db: row.snr_db,
            evm_percent: row.evm_percent,
            n_blocks: row.n_blocks,
            seed: row.seed,
            recon_mse: row.recon_mse,
            paper_factor: row.paper_factor,
            actual_overhead: row.actual_overhead,
        });
    }
    if out.is_empty() {
        return Err(Error::Csv {
            line: 1,
            reason: "no data rows".into(),
        });
    }
    Ok(out)
}

pub fn parse_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

/// Wide table: one row per SNR, one EVM column per scenario.
pub fn plot_csv_string(records: &[SweepRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Other("no records to plot".into()));
    }
    let mut series: Vec<Scenario> = Vec::new();
    for r in records {
        if !series.iter().any(|s| s.sort_key() == r.scenario.sort_key()) {
            series.push(r.scenario);
        }
    }
    let mut snrs: Vec<f64> = records.iter().map(|r| r.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["snr_db".to_string()];
    header.extend(series.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(csv_error)?;
    for snr in snrs {
        let mut row = vec![snr.to_string()];
        for s in &series {
            let v = records
                .iter()
                .find(|r| r.snr_db == snr && r.scenario.sort_key() == s.sort_key())
                .map(|r| r.evm_percent.to_string())
                .unwrap_or_default();
            row.push(v);
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Other(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn emit_plot_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    std::fs::write(path, plot_csv_string(records)?).map_err(|e| Error::io(path, e))
}

/// Outcome of one inequality check over a set of records.
#[derive(Debug, Clone, PartialEq)]
pub struct RemarkCheck {
    pub name: &'static str,
    pub statement: String,
    /// `None` when the records lack the series or SNR points the check needs.
    pub pass: Option<bool>,
    /// Smallest slack over the checked points; negative when violated.
    pub worst_margin: f64,
    pub points: Vec<(f64, f64, f64)>,
}

impl RemarkCheck {
    pub fn status(&self) -> &'static str {
        match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        }
    }
}

fn series<'a>(records: &'a [SweepRecord], tag: &str, n_div: usize) -> BTreeMap<i64, &'a SweepRecord> {
    records
        .iter()
        .filter(|r| r.scenario.tag() == tag && r.n_div() == n_div)
        .map(|r| ((r.snr_db * 1000.0).round() as i64, r))
        .collect()
}

fn compare(
    name: &'static str,
    statement: String,
    a: &BTreeMap<i64, &SweepRecord>,
    b: &BTreeMap<i64, &SweepRecord>,
    keep: impl Fn(f64) -> bool,
    margin: impl Fn(f64, f64) -> f64,
) -> RemarkCheck {
    let mut points = Vec::new();
    for (k, ra) in a {
        if let Some(rb) = b.get(k) {
            if keep(ra.snr_db) {
                points.push((ra.snr_db, ra.evm_percent, rb.evm_percent));
            }
        }
    }
    let worst = points.iter().map(|&(_, x, y)| margin(x, y)).fold(f64::INFINITY, f64::min);
    RemarkCheck {
        name,
        statement,
        pass: (!points.is_empty()).then_some(worst >= 0.0 && points.iter().all(|&(_, x, y)| margin(x, y) >= 0.0)),
        worst_margin: if points.is_empty() { f64::NAN } else { worst },
        points,
    }
}

pub const LOW_SNR_RATIO: f64 = 1.10;
pub const SIMILARITY_PP: f64 = 3.0;

/// The three performance remarks as inequalities on (ae/8, full, array/4, admm-c4).
pub fn remark_checks(records: &[SweepRecord]) -> Vec<RemarkCheck> {
    let ae = series(records, "ae", 8);
    let full = series(records, "full", 1);
    let array = series(records, "array", 4);
    let admm = series(records, "admm-c4", 1);
    // Strict inequality: margins of exactly zero count as failures for (ii).
    let mut ii = compare(
        "remark (ii)",
        "EVM(ae/8) < EVM(array/4) at every SNR >= 0 dB".into(),
        &ae,
        &array,
        |s| s >= 0.0,
        |a, r| r - a,
    );
    if let Some(p) = ii.pass.as_mut() {
        *p = *p && ii.worst_margin > 0.0;
    }
    vec![
        compare(
            "remark (i)",
            format!("EVM(ae/8) <= {LOW_SNR_RATIO:.2} x EVM(full) at every SNR <= 0 dB"),
            &ae,
            &full,
            |s| s <= 0.0,
            |a, f| LOW_SNR_RATIO * f - a,
        ),
        ii,
        compare(
            "remark (iii)",
            format!("|EVM(ae/8) - EVM(admm-c4)| <= {SIMILARITY_PP} pp at every SNR"),
            &ae,
            &admm,
            |_| true,
            |a, d| SIMILARITY_PP - (a - d).abs(),
        ),
    ]
}

/// Plain-text summary: EVM table, remark checks and both bandwidth ledgers
/// computed for `system`.
pub fn emit_report(records: &[SweepRecord], system: &SystemConfig) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Other("no records to report".into()));
    }
    let mut out = String::new();
    let seeds: Vec<u64> = {
        let mut s: Vec<u64> = records.iter().map(|r| r.seed).collect();
        s.dedup();
        s
    };
    let _ = writeln!(
        out,
        "EVM per scenario (percent; root of summed error power over summed symbol power across {} blocks, seed {:?})",
        records[0].n_blocks, seeds
    );
    out.push_str(&plot_csv_string(records)?.replace(',', "\t"));

    out.push_str("\nRemark checks\n");
    for c in remark_checks(records) {
        let _ = writeln!(
            out,
            "  {:<13} {}  worst margin {:+.3}  [{}]",
            c.name, c.status(), c.worst_margin, c.statement
        );
        for (snr, a, b) in &c.points {
            let _ = writeln!(out, "      {snr:>6} dB: {a:8.3} vs {b:8.3}");
        }
    }

    let _ = writeln!(
        out,
        "\nBandwidth ledgers per coherence block (M={}, N_CBW={}, N_Slot={})",
        system.m, system.n_cbw, system.n_slot
    );
    let mut n_divs: Vec<usize> = records
        .iter()
        .filter(|r| r.scenario.kind == ScenarioKind::AeCentralized)
        .map(|r| r.n_div())
        .collect();
    n_divs.sort_unstable();
    n_divs.dedup();
    for d in n_divs {
        for ledger in [
            paper_sample_count(system.m, system.n_cbw, system.n_slot, d)?,
            actual_sample_count_for(system.m, system.n_cbw, system.n_slot, d)?,
        ] {
            let _ = writeln!(
                out,
                "  n_div {d:<3} {:<6} full {:>8} latent {:>8} overhead {:>8} total {:>8} factor {:.3}",
                ledger.mode.to_string(),
                ledger.full_samples,
                ledger.latent_samples,
                ledger.overhead_samples,
                ledger.transferred(),
                ledger.effective_factor()
            );
        }
        for r in records.iter().filter(|r| r.scenario.kind == ScenarioKind::AeCentralized && r.n_div() == d).take(1) {
            if let Some(o) = r.actual_overhead {
                let _ = writeln!(out, "  n_div {d:<3} measured overhead on the wire {o} samples per block");
            }
        }
    }
    let _ = writeln!(out, "  note: {}", quoted_factor_note()?);
    Ok(out)
}

/// Reconstruction MSE of a block's trained AE and of the rank-`latent_dim`
/// truncated SVD fitted to the same training matrix, both over all resource
/// elements: `(ae_mse, svd_mse)`.
pub fn compression_oracle(cfg: &EvalConfig, block: &CoherenceBlock, n_div: usize) -> Result<(f64, f64)> {
    let model = train_block_model(cfg, block, n_div)?;
    let x_all = stack_grid(&block.rx.entries);
    let x_train = autoencoder::training_set(&block.training_columns(cfg.system.n_cbw), cfg.autoencoder.rotations);
    let recon = model.reconstruct_matrix(&x_all)?;
    let ae_mse = (&recon - &x_all).norm_squared() / x_all.len() as f64;
    let svd_mse = truncated_svd_mse(&x_train, &x_all, model.latent_dim())?;
    Ok((ae_mse, svd_mse))
}

/// Project `x` onto the leading `rank` left singular vectors of `basis_from`.
pub fn truncated_svd_mse(basis_from: &DMatrix<f64>, x: &DMatrix<f64>, rank: usize) -> Result<f64> {
    let svd = basis_from.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Other("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let r = rank.min(order.len());
    let basis = DMatrix::from_fn(u.nrows(), r, |i, j| u[(i, order[j])]);
    let proj = &basis * (basis.transpose() * x);
    Ok((proj - x).norm_squared() / x.len() as f64)
}
