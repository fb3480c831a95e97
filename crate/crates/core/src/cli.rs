//! Command-line front end. [`run`] returns the process exit code:
//! 0 success, 1 check failure or computation error, 2 usage, config or I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::{emit_csv, emit_plot_csv, emit_report, parse_csv, sweep, train_block_model};
use crate::fronthaul::{encoder_frame, decoder_frame, serialize};
use crate::selftest::{self, Fault};
use crate::signal_model::build_coherence_block;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mimo-ae", version, about = "Autoencoder fronthaul compression for massive MIMO uplink")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one autoencoder per block and write encoder/decoder frames.
    Train(Common),
    /// Run the EVM-vs-SNR sweep and write CSV, plot CSV and report.
    Sweep(Common),
    /// Summarize a sweep CSV.
    Report {
        /// Sweep CSV to summarize.
        csv: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Exit 1 when any remark check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Run the fast invariant checks.
    Selftest {
        #[arg(long = "inject-fault", hide = true, value_name = "CHECK")]
        inject_fault: Vec<String>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration; flags below override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// M=512, 40 blocks, 4 clusters, n_div=8.
    #[arg(long)]
    pub paper_scale: bool,
    /// Model directory for train, CSV for sweep, report text for report.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Comma list from full, ae, array, admm.
    #[arg(long, value_name = "LIST")]
    pub scenarios: Option<String>,
    /// Comma list of compression divisors.
    #[arg(long, value_name = "LIST")]
    pub ndiv: Option<String>,
    /// Comma list of SNR points in dB.
    #[arg(long, value_name = "LIST")]
    pub snr: Option<String>,
    /// Coherence blocks per SNR point.
    #[arg(long, value_name = "N")]
    pub blocks: Option<usize>,
    /// Training epoch cap per block.
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str, errors: &mut Vec<String>) -> Vec<T> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        match item.parse() {
            Ok(v) => out.push(v),
            Err(_) => errors.push(format!("--{flag}: cannot parse {item:?}")),
        }
    }
    out
}

impl Common {
    /// Load the file (or defaults), apply overrides, validate.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.paper_scale {
            cfg.apply_paper_scale();
        }
        let mut errors = Vec::new();
        if let Some(s) = self.seed {
            cfg.sweep.seed = s;
        }
        if let Some(s) = &self.scenarios {
            cfg.sweep.scenarios = s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
        }
        if let Some(s) = &self.ndiv {
            cfg.sweep.n_div = parse_list("ndiv", s, &mut errors);
        }
        if let Some(s) = &self.snr {
            cfg.sweep.snr_db = parse_list("snr", s, &mut errors);
        }
        if let Some(b) = self.blocks {
            cfg.sweep.blocks = b;
        }
        if let Some(e) = self.epochs {
            cfg.autoencoder.max_epochs = e;
        }
        errors.extend(cfg.violations());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io { .. } | Error::Csv { .. } | Error::MalformedFrame(_) => EXIT_USAGE,
        _ => EXIT_CHECK,
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    block_id: u64,
    n_div: usize,
    snr_db: f64,
    encoder: String,
    decoder: String,
    epochs_max: usize,
}

#[derive(Debug, Serialize)]
struct Manifest {
    seed: u64,
    m: usize,
    k: usize,
    precision: String,
    models: Vec<ManifestEntry>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn cmd_train(cfg: &RunConfig, out_dir: &Path, snrs: &[f64]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let eval = cfg.eval_config();
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for &snr in snrs {
        for block_id in 0..cfg.sweep.blocks as u64 {
            let block = build_coherence_block(&eval.system, snr, block_id)?;
            for &n_div in &cfg.sweep.n_div {
                let model = train_block_model(&eval, &block, n_div)?;
                let stem = format!("b{block_id:05}-ndiv{n_div}-snr{snr}");
                let enc_name = format!("{stem}.enc.maef");
                let dec_name = format!("{stem}.dec.maef");
                for (name, bytes) in [
                    (&enc_name, serialize(&encoder_frame(&model.encoder(), block_id, eval.precision)?)?),
                    (&dec_name, serialize(&decoder_frame(&model.decoder(), block_id, eval.precision)?)?),
                ] {
                    let p = out_dir.join(name);
                    write_file(&p, &bytes)?;
                    written.push(p);
                }
                entries.push(ManifestEntry {
                    block_id,
                    n_div,
                    snr_db: snr,
                    encoder: enc_name,
                    decoder: dec_name,
                    epochs_max: cfg.autoencoder.max_epochs,
                });
            }
        }
    }
    let manifest = Manifest {
        seed: cfg.sweep.seed,
        m: cfg.system.m,
        k: cfg.system.k,
        precision: format!("{:?}", eval.precision).to_lowercase(),
        models: entries,
    };
    let p = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Other(e.to_string()))?;
    text.push('\n');
    write_file(&p, text.as_bytes())?;
    written.push(p);
    Ok(written)
}

/// Sibling path `<stem>.<suffix>` next to the CSV.
fn sibling(csv: &Path, suffix: &str) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sweep".into());
    csv.with_file_name(format!("{stem}.{suffix}"))
}

pub fn cmd_sweep(cfg: &RunConfig, out_csv: &Path) -> Result<String> {
    if let Some(dir) = out_csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let records = sweep(&cfg.eval_config(), &cfg.scenarios()?, &cfg.sweep.snr_db, cfg.sweep.blocks)?;
    emit_csv(&records, out_csv)?;
    emit_plot_csv(&records, &sibling(out_csv, "plot.csv"))?;
    let report = emit_report(&records, &cfg.system())?;
    write_file(&sibling(out_csv, "report.txt"), report.as_bytes())?;
    Ok(report)
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    let say = |out: &mut dyn Write, s: &str| {
        let _ = writeln!(out, "{s}");
    };
    match cli.command {
        Command::Train(common) => {
            let cfg = common.resolve()?;
            let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.join("models"));
            let snrs = if common.snr.is_some() {
                cfg.sweep.snr_db.clone()
            } else {
                vec![cfg.sweep.training_snr_db]
            };
            let files = cmd_train(&cfg, &out, &snrs)?;
            say(stdout, &format!("wrote {} files to {}", files.len(), out.display()));
            Ok(EXIT_OK)
        }
        Command::Sweep(common) => {
            let cfg = common.resolve()?;
            let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.join("sweep.csv"));
            let report = cmd_sweep(&cfg, &out)?;
            say(stdout, &report);
            say(stdout, &format!("wrote {}", out.display()));
            Ok(EXIT_OK)
        }
        Command::Report { csv, common, strict } => {
            let cfg = common.resolve()?;
            let records = parse_csv(&csv)?;
            let report = emit_report(&records, &cfg.system())?;
            if let Some(out) = &common.out {
                write_file(out, report.as_bytes())?;
            }
            say(stdout, &report);
            let failed = crate::evaluation::remark_checks(&records).iter().any(|c| c.pass == Some(false));
            Ok(if strict && failed { EXIT_CHECK } else { EXIT_OK })
        }
        Command::Selftest { inject_fault } => {
            let faults = inject_fault.iter().map(|f| f.parse()).collect::<Result<Vec<Fault>>>()?;
            let results = selftest::run(&faults);
            for r in &results {
                say(stdout, &r.to_string());
            }
            Ok(if results.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_CHECK })
        }
    }
}

/// Parse `args` (including the program name) and run; messages go to
/// `stdout`, errors to stderr.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run(std::iter::once("mimo-ae").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn overrides_apply_and_validate_together() {
        let c = Common {
            seed: Some(7),
            ndiv: Some("4, 8".into()),
            snr: Some("0,x".into()),
            blocks: Some(0),
            ..Common::default()
        };
        match c.resolve() {
            Err(Error::Config(v)) => {
                assert!(v.iter().any(|m| m.contains("--snr")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("blocks")), "{v:?}");
            }
            other => panic!("{other:?}"),
        }
        let ok = Common {
            seed: Some(7),
            ndiv: Some("4,8".into()),
            ..Common::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(ok.sweep.seed, 7);
        assert_eq!(ok.sweep.n_div, vec![4, 8]);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["sweep", "--blocks", "zero"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["sweep", "--ndiv", "3"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["selftest", "--inject-fault", "bogus"]).0, EXIT_USAGE);
    }

    #[test]
    fn selftest_exit_codes() {
        let (code, out) = run_capture(&["selftest"]);
        assert_eq!(code, EXIT_OK, "{out}");
        let (code, out) = run_capture(&["selftest", "--inject-fault", "gradient"]);
        assert_eq!(code, EXIT_CHECK);
        assert!(out.contains("FAIL gradient"), "{out}");
    }
}
