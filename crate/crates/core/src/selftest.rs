//! Fast invariant checks runnable from the command line without any files.
//!
//! A [`Fault`] perturbs one check's computation so that the failure path can
//! be exercised end to end.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::{fit_scaling, gradient, numeric_gradient, relative_error, AutoencoderConfig, AutoencoderModel};
use crate::detectors::{admm_gs_detect, gram, gs_detect, gs_spectral_radius, partition_clusters, zf_exact, AdmmParams};
use crate::error::{Error, Result};
use crate::fronthaul::{deserialize, serialize, FrameKind, Precision, WireFrame};
use crate::signal_model::{complex_gaussian, generate_channel, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Gradient,
    Solver,
    Serialization,
    Admm,
}

impl FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Fault> {
        match s {
            "gradient" => Ok(Fault::Gradient),
            "solver" => Ok(Fault::Solver),
            "serialization" => Ok(Fault::Serialization),
            "admm" => Ok(Fault::Admm),
            _ => Err(Error::config(format!("unknown fault {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:<22} {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn check(name: &'static str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn gradient_check(fault: bool) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(8, 10, |_, _| rng.random_range(-2.0..2.0));
        let mut model = AutoencoderModel::initialize(8, 4, fit_scaling(&x)?, &mut rng);
        model.b_enc.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        let cfg = AutoencoderConfig::with_n_div(2);
        let mut analytic = gradient(&model, &x, &cfg)?.to_flat();
        if fault {
            analytic[0] += 1e-3 * analytic.norm().max(1.0);
        }
        let numeric = numeric_gradient(&model, &x, &cfg, 1e-6)?;
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok((worst < 1e-5, format!("max relative error {worst:.2e} (limit 1e-5)")))
}

fn instance(rng: &mut ChaCha8Rng, m: usize, k: usize, cols: usize) -> (CMatrix, CMatrix, CMatrix) {
    let h = generate_channel(m, k, rng).0;
    let s = CMatrix::from_fn(k, cols, |_, _| complex_gaussian(rng));
    let y = &h * &s;
    (h, s, y)
}

fn solver_check(fault: bool) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..10 {
        let (h, _, y) = instance(&mut rng, 64, 8, 4);
        if gs_spectral_radius(&gram(&h))? >= 1.0 {
            continue;
        }
        let zf = zf_exact(&h, &y)?.s_hat;
        let mut gs = gs_detect(&h, &y, 200)?.s_hat;
        if fault {
            gs[(0, 0)] += 1e-3;
        }
        worst = worst.max((gs - &zf).norm() / zf.norm());
        checked += 1;
    }
    Ok((
        checked > 0 && worst < 1e-8,
        format!("200-sweep GS vs Cholesky ZF, {checked} instances, max relative error {worst:.2e}"),
    ))
}

fn serialization_check(fault: bool) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();
    for precision in [Precision::F32, Precision::F64] {
        let payload: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0) as f32 as f64).collect();
        let frame = WireFrame {
            precision,
            kind: FrameKind::Latent,
            block_id: 9,
            rows: 4,
            cols: 6,
            m: 16,
            n_div: 8,
            payload,
        };
        let mut bytes = serialize(&frame)?;
        if fault {
            bytes[crate::fronthaul::HEADER_LEN] ^= 0x01;
        }
        match deserialize(&bytes) {
            Ok(back) if back == frame && serialize(&back)? == bytes => {}
            Ok(_) => failures.push(format!("{precision:?}: round trip changed the frame")),
            Err(e) => failures.push(format!("{precision:?}: {e}")),
        }
        let mut corrupt = bytes.clone();
        let last = corrupt.len() - 5;
        corrupt[last] ^= 0x80;
        if deserialize(&corrupt).is_ok() {
            failures.push(format!("{precision:?}: corrupted payload accepted"));
        }
    }
    let detail = if failures.is_empty() {
        "f32 and f64 frames round-trip bit-exactly; corruption rejected".to_string()
    } else {
        failures.join("; ")
    };
    Ok((failures.is_empty(), detail))
}

fn admm_check(fault: bool) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let params = AdmmParams {
        rho: if fault { 0.5 } else { 0.0 },
        t_outer: 5,
        t_inner: 1,
    };
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let (h, _, y) = instance(&mut rng, 32, 4, 3);
        let gs = gs_detect(&h, &y, 5)?.s_hat;
        let admm = admm_gs_detect(&partition_clusters(&h, &y, 1, params)?)?.s_hat;
        worst = worst.max((admm - &gs).norm() / gs.norm());
    }
    Ok((worst < 1e-12, format!("single-cluster ADMM vs GS, max relative difference {worst:.2e}")))
}

/// Run every check, applying the listed faults.
pub fn run(faults: &[Fault]) -> Vec<CheckResult> {
    let has = |f: Fault| faults.contains(&f);
    let start = Instant::now();
    let mut out = vec![
        check("gradient", gradient_check(has(Fault::Gradient))),
        check("gs-vs-zf", solver_check(has(Fault::Solver))),
        check("serialization", serialization_check(has(Fault::Serialization))),
        check("admm-single-cluster", admm_check(has(Fault::Admm))),
    ];
    let elapsed = start.elapsed().as_secs_f64();
    out.push(CheckResult {
        name: "runtime",
        passed: elapsed < 60.0,
        detail: format!("{elapsed:.2} s (limit 60 s)"),
    });
    out
}
