//! Linear uplink detectors on the normal equations `A ŝ = y_MF`, with
//! `A = HᴴH` and `y_MF = HᴴY`.
//!
//! Every detector works column by column over resource elements; a `Y` with
//! `n` columns produces a `K × n` estimate.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal_model::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMethod {
    Mrc,
    ZeroForcing,
    GaussSeidel,
    AdmmGaussSeidel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// K × n_re symbol estimates.
    pub s_hat: CMatrix,
    pub method: DetectionMethod,
    pub iterations: usize,
}

/// Gram matrix and matched-filter outputs for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSystem {
    pub a: CMatrix,
    pub y_mf: CMatrix,
}

fn check_rows(h: &CMatrix, y: &CMatrix) -> Result<()> {
    if h.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "channel has {} antennas, received grid has {}",
            h.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

/// `HᴴY`.
pub fn matched_filter(h: &CMatrix, y: &CMatrix) -> Result<CMatrix> {
    check_rows(h, y)?;
    Ok(h.ad_mul(y))
}

/// `HᴴH`, symmetrized as `(A + Aᴴ)/2` with an exactly real diagonal.
pub fn gram(h: &CMatrix) -> CMatrix {
    let a = h.ad_mul(h);
    let mut sym = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    for i in 0..sym.nrows() {
        sym[(i, i)].im = 0.0;
    }
    sym
}

impl GramSystem {
    pub fn new(h: &CMatrix, y: &CMatrix) -> Result<GramSystem> {
        Ok(GramSystem {
            a: gram(h),
            y_mf: matched_filter(h, y)?,
        })
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    fn check_diagonal(&self) -> Result<()> {
        for i in 0..self.k() {
            let d = self.a[(i, i)].re;
            if !(d > 0.0) {
                return Err(Error::Singular(format!("diagonal entry {i} of the Gram matrix is {d}")));
            }
        }
        Ok(())
    }

    /// `D⁻¹ y_MF`.
    pub fn diagonal_solve(&self) -> Result<CMatrix> {
        self.check_diagonal()?;
        let mut s = self.y_mf.clone();
        for i in 0..self.k() {
            let inv = 1.0 / self.a[(i, i)].re;
            s.row_mut(i).scale_mut(inv);
        }
        Ok(s)
    }

    /// Apply `sweeps` Gauss-Seidel sweeps to `(A + shift·I) s = rhs` in place.
    pub(crate) fn gs_sweeps(a: &CMatrix, shift: f64, rhs: &CMatrix, s: &mut CMatrix, sweeps: usize) {
        let k = a.nrows();
        for _ in 0..sweeps {
            for col in 0..s.ncols() {
                for i in 0..k {
                    let mut acc = rhs[(i, col)];
                    for j in 0..k {
                        if j != i {
                            acc -= a[(i, j)] * s[(j, col)];
                        }
                    }
                    s[(i, col)] = acc / (a[(i, i)].re + shift);
                }
            }
        }
    }
}

/// Maximum-ratio combining: `diag(A)⁻¹ HᴴY`.
pub fn mrc_detect(h: &CMatrix, y: &CMatrix) -> Result<DetectionResult> {
    let sys = GramSystem::new(h, y)?;
    Ok(DetectionResult {
        s_hat: sys.diagonal_solve()?,
        method: DetectionMethod::Mrc,
        iterations: 0,
    })
}

/// Exact zero-forcing through a Cholesky factorization of `A`.
pub fn zf_exact(h: &CMatrix, y: &CMatrix) -> Result<DetectionResult> {
    let sys = GramSystem::new(h, y)?;
    let chol = sys
        .a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Gram matrix is not positive definite".into()))?;
    Ok(DetectionResult {
        s_hat: chol.solve(&sys.y_mf),
        method: DetectionMethod::ZeroForcing,
        iterations: 0,
    })
}

/// Gauss-Seidel ZF approximation: `ŝ⁰ = D⁻¹ y_MF`, then `iterations` sweeps of
/// `ŝ ← (D + L)⁻¹ (y_MF − U ŝ)`.
pub fn gs_detect(h: &CMatrix, y: &CMatrix, iterations: usize) -> Result<DetectionResult> {
    let sys = GramSystem::new(h, y)?;
    let mut s = sys.diagonal_solve()?;
    GramSystem::gs_sweeps(&sys.a, 0.0, &sys.y_mf, &mut s, iterations);
    Ok(DetectionResult {
        s_hat: s,
        method: DetectionMethod::GaussSeidel,
        iterations,
    })
}

/// Spectral radius of the Gauss-Seidel iteration matrix `−(D+L)⁻¹U`.
pub fn gs_spectral_radius(a: &CMatrix) -> Result<f64> {
    let k = a.nrows();
    let mut lower = CMatrix::zeros(k, k);
    let mut upper = CMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if j <= i {
                lower[(i, j)] = a[(i, j)];
            } else {
                upper[(i, j)] = -a[(i, j)];
            }
        }
    }
    let lu = lower.lu();
    let iter = lu
        .solve(&upper)
        .ok_or_else(|| Error::Singular("D + L is singular".into()))?;
    // [[Re, −Im], [Im, Re]] has eigenvalues λ and λ̄ for each eigenvalue λ.
    let real = DMatrix::from_fn(2 * k, 2 * k, |i, j| {
        let z = iter[(i % k, j % k)];
        match (i < k, j < k) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    Ok(real.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmParams {
    pub rho: f64,
    pub t_outer: usize,
    pub t_inner: usize,
}

impl Default for AdmmParams {
    fn default() -> Self {
        AdmmParams {
            rho: 1.0,
            t_outer: 5,
            t_inner: 1,
        }
    }
}

/// Antenna array cut into `c` contiguous equal row blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    pub h: Vec<CMatrix>,
    pub y: Vec<CMatrix>,
    pub params: AdmmParams,
}

impl ClusterPartition {
    pub fn clusters(&self) -> usize {
        self.h.len()
    }

    /// Stack the slices back into the full channel.
    pub fn restack_channel(&self) -> CMatrix {
        let rows: usize = self.h.iter().map(|h| h.nrows()).sum();
        let k = self.h[0].ncols();
        let mut full = CMatrix::zeros(rows, k);
        let mut at = 0;
        for h in &self.h {
            full.rows_mut(at, h.nrows()).copy_from(h);
            at += h.nrows();
        }
        full
    }
}

pub fn partition_clusters(h: &CMatrix, y: &CMatrix, c: usize, params: AdmmParams) -> Result<ClusterPartition> {
    check_rows(h, y)?;
    let m = h.nrows();
    if c == 0 || m % c != 0 {
        return Err(Error::config(format!("cluster count {c} must divide antenna count {m}")));
    }
    if !(params.rho > 0.0 || (params.rho == 0.0 && c == 1)) {
        return Err(Error::config(format!(
            "ADMM penalty must be positive (zero allowed only for one cluster), got {}",
            params.rho
        )));
    }
    let rows = m / c;
    Ok(ClusterPartition {
        h: (0..c).map(|i| h.rows(i * rows, rows).into_owned()).collect(),
        y: (0..c).map(|i| y.rows(i * rows, rows).into_owned()).collect(),
        params,
    })
}

/// Decentralized consensus-ADMM detection with Gauss-Seidel local solves.
///
/// Each cluster holds `s_c` and a scaled dual `u_c`; per outer iteration it runs
/// `t_inner` warm-started GS sweeps on `(A_c + ρI) s_c = y_MF,c + ρ(z − u_c)`,
/// then `z = mean(s_c + u_c)` and `u_c += s_c − z`. Local estimates start at
/// `D_c⁻¹ y_MF,c`.
pub fn admm_gs_detect(p: &ClusterPartition) -> Result<DetectionResult> {
    admm_gs_detect_traced(p).map(|(r, _)| r)
}

/// As [`admm_gs_detect`], also returning `max_c ‖s_c − z‖_F` after every outer
/// iteration.
pub fn admm_gs_detect_traced(p: &ClusterPartition) -> Result<(DetectionResult, Vec<f64>)> {
    let AdmmParams { rho, t_outer, t_inner } = p.params;
    let c = p.clusters();
    let systems: Vec<GramSystem> = p
        .h
        .iter()
        .zip(&p.y)
        .map(|(h, y)| GramSystem::new(h, y))
        .collect::<Result<_>>()?;

    let mut s: Vec<CMatrix> = systems.iter().map(|g| g.diagonal_solve()).collect::<Result<_>>()?;
    let k = systems[0].k();
    let n = systems[0].y_mf.ncols();
    let mut u: Vec<CMatrix> = vec![CMatrix::zeros(k, n); c];
    let mut z = mean(&s);
    let rho_c = Complex64::new(rho, 0.0);

    let mut residuals = Vec::with_capacity(t_outer);
    let mut initial = None;
    for iter in 1..=t_outer {
        for ((sys, s_c), u_c) in systems.iter().zip(s.iter_mut()).zip(&u) {
            let rhs = if rho == 0.0 {
                sys.y_mf.clone()
            } else {
                &sys.y_mf + (&z - u_c) * rho_c
            };
            GramSystem::gs_sweeps(&sys.a, rho, &rhs, s_c, t_inner);
        }
        let sum_su: Vec<CMatrix> = s.iter().zip(&u).map(|(s_c, u_c)| s_c + u_c).collect();
        z = mean(&sum_su);
        for (u_c, s_c) in u.iter_mut().zip(&s) {
            *u_c += s_c - &z;
        }

        let residual = s.iter().map(|s_c| (s_c - &z).norm()).fold(0.0, f64::max);
        residuals.push(residual);
        match initial {
            None => initial = Some(residual),
            Some(r0) if r0 > 0.0 && residual > 10.0 * r0 => {
                return Err(Error::Divergence {
                    iteration: iter,
                    residual,
                    initial: r0,
                })
            }
            _ => {}
        }
    }

    Ok((
        DetectionResult {
            s_hat: z,
            method: DetectionMethod::AdmmGaussSeidel,
            iterations: t_outer * t_inner,
        },
        residuals,
    ))
}

fn mean(mats: &[CMatrix]) -> CMatrix {
    let mut acc = mats[0].clone();
    for m in &mats[1..] {
        acc += m;
    }
    acc * Complex64::new(1.0 / mats.len() as f64, 0.0)
}

/// Error vector magnitude in percent: `100·√(Σ|ŝ−s|² / Σ|s|²)` over all entries.
pub fn evm(s_hat: &CMatrix, s: &CMatrix) -> Result<f64> {
    let (err, reference) = evm_powers(s_hat, s)?;
    evm_from_powers(err, reference)
}

/// Summed error and reference powers, for pooling EVM across blocks.
pub fn evm_powers(s_hat: &CMatrix, s: &CMatrix) -> Result<(f64, f64)> {
    if s_hat.shape() != s.shape() {
        return Err(Error::Dimension(format!(
            "estimate shape {:?} differs from reference {:?}",
            s_hat.shape(),
            s.shape()
        )));
    }
    Ok(((s_hat - s).norm_squared(), s.norm_squared()))
}

pub fn evm_from_powers(err: f64, reference: f64) -> Result<f64> {
    if reference <= 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(100.0 * (err / reference).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::{complex_gaussian, generate_channel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_grid(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng))
    }

    /// Triple-loop product, independent of nalgebra's kernels.
    fn naive_adjoint_product(h: &CMatrix, y: &CMatrix) -> CMatrix {
        CMatrix::from_fn(h.ncols(), y.ncols(), |i, j| {
            (0..h.nrows()).map(|r| h[(r, i)].conj() * y[(r, j)]).sum()
        })
    }

    #[test]
    fn matched_filter_examples() {
        let y = random_grid(3, 4, 1);
        assert_eq!(matched_filter(&CMatrix::identity(3, 3), &y).unwrap(), y);

        let h = random_grid(5, 1, 2);
        let mf = matched_filter(&h, &h).unwrap();
        assert!((mf[(0, 0)].re - h.norm_squared()).abs() < 1e-12);

        let h = random_grid(16, 4, 3);
        let y = random_grid(16, 7, 4);
        assert!((matched_filter(&h, &y).unwrap() - naive_adjoint_product(&h, &y)).norm() < 1e-12);
        assert!(matched_filter(&h, &random_grid(15, 7, 4)).is_err());
    }

    #[test]
    fn gram_examples() {
        let u = CMatrix::from_row_slice(2, 2, &[c(0.6, 0.0), c(-0.8, 0.0), c(0.8, 0.0), c(0.6, 0.0)]);
        assert!((gram(&u) - CMatrix::identity(2, 2)).norm() < 1e-15);

        let h = random_grid(6, 1, 5);
        assert!((gram(&h)[(0, 0)].re - h.norm_squared()).abs() < 1e-12);

        let a = gram(&random_grid(64, 8, 6));
        assert!((&a - a.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn mrc_examples() {
        let u = CMatrix::from_row_slice(3, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let s = random_grid(2, 5, 7);
        let y = &u * &s;
        assert!((mrc_detect(&u, &y).unwrap().s_hat - &s).norm() < 1e-14);

        let h = random_grid(8, 1, 8);
        let s = random_grid(1, 3, 9);
        assert!((mrc_detect(&h, &(&h * &s)).unwrap().s_hat - &s).norm() < 1e-12);

        // Correlated 2-user case: columns h1 = (1, 0), h2 = (1, 1).
        // A = [[1, 1], [1, 2]], s = (1, 1) → y_MF = (2, 3), MRC = (2/1, 3/2).
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let s = CMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let est = mrc_detect(&h, &(&h * &s)).unwrap().s_hat;
        assert!((est[(0, 0)] - c(2.0, 0.0)).norm() < 1e-15);
        assert!((est[(1, 0)] - c(1.5, 0.0)).norm() < 1e-15);

        let zero_col = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(mrc_detect(&zero_col, &random_grid(2, 1, 1)), Err(Error::Singular(_))));
    }

    #[test]
    fn zf_examples() {
        let h = generate_channel(32, 4, &mut ChaCha8Rng::seed_from_u64(10)).0;
        let s = random_grid(4, 12, 11);
        let est = zf_exact(&h, &(&h * &s)).unwrap().s_hat;
        assert!((est - &s).norm() < 1e-10);

        let y = random_grid(3, 2, 12);
        assert!((zf_exact(&CMatrix::identity(3, 3), &y).unwrap().s_hat - &y).norm() < 1e-14);

        // Least-squares oracle through the SVD pseudo-inverse.
        let y = random_grid(32, 6, 13);
        let pinv = h.clone().pseudo_inverse(1e-12).unwrap();
        assert!((zf_exact(&h, &y).unwrap().s_hat - pinv * &y).norm() < 1e-10);

        let rank_deficient = CMatrix::from_fn(4, 2, |i, _| c(i as f64, 0.0));
        assert!(matches!(zf_exact(&rank_deficient, &random_grid(4, 1, 1)), Err(Error::Singular(_))));
    }

    #[test]
    fn gs_is_exact_for_diagonal_gram() {
        let h = CMatrix::from_row_slice(3, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let y = random_grid(3, 4, 14);
        let gs = gs_detect(&h, &y, 1).unwrap().s_hat;
        let zf = zf_exact(&h, &y).unwrap().s_hat;
        assert!((gs - zf).norm() < 1e-14);
    }

    #[test]
    fn gs_converges_to_zf() {
        let h = generate_channel(64, 8, &mut ChaCha8Rng::seed_from_u64(15)).0;
        let y = random_grid(64, 10, 16);
        assert!(gs_spectral_radius(&gram(&h)).unwrap() < 1.0);
        let zf = zf_exact(&h, &y).unwrap().s_hat;
        let gs = gs_detect(&h, &y, 100).unwrap().s_hat;
        assert!((gs - &zf).norm() / zf.norm() < 1e-8);
    }

    #[test]
    fn gs_rejects_zero_diagonal() {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(gs_detect(&h, &random_grid(2, 1, 0), 3), Err(Error::Singular(_))));
    }

    #[test]
    fn detectors_commute_with_column_permutation() {
        let h = generate_channel(16, 4, &mut ChaCha8Rng::seed_from_u64(17)).0;
        let y = random_grid(16, 5, 18);
        let perm = [3usize, 0, 4, 1, 2];
        let y_perm = CMatrix::from_fn(16, 5, |i, j| y[(i, perm[j])]);
        let base = gs_detect(&h, &y, 5).unwrap().s_hat;
        let permuted = gs_detect(&h, &y_perm, 5).unwrap().s_hat;
        for (j, &p) in perm.iter().enumerate() {
            assert_eq!(permuted.column(j), base.column(p));
        }
        let part = partition_clusters(&h, &y, 2, AdmmParams::default()).unwrap();
        let part_perm = partition_clusters(&h, &y_perm, 2, AdmmParams::default()).unwrap();
        let a = admm_gs_detect(&part).unwrap().s_hat;
        let b = admm_gs_detect(&part_perm).unwrap().s_hat;
        for (j, &p) in perm.iter().enumerate() {
            assert!((b.column(j) - a.column(p)).norm() < 1e-14);
        }
    }

    #[test]
    fn partition_examples() {
        let h = random_grid(512, 4, 19);
        let y = random_grid(512, 3, 20);
        let single = partition_clusters(&h, &y, 1, AdmmParams::default()).unwrap();
        assert_eq!(single.h[0], h);
        assert_eq!(single.y[0], y);

        let four = partition_clusters(&h, &y, 4, AdmmParams::default()).unwrap();
        assert!(four.h.iter().all(|hc| hc.shape() == (128, 4)));
        assert_eq!(four.restack_channel(), h);

        let a_sum = four.h.iter().map(gram).fold(CMatrix::zeros(4, 4), |acc, a| acc + a);
        assert!((a_sum - gram(&h)).norm() < 1e-12 * gram(&h).norm());
        let mf_sum = four
            .h
            .iter()
            .zip(&four.y)
            .map(|(hc, yc)| matched_filter(hc, yc).unwrap())
            .fold(CMatrix::zeros(4, 3), |acc, v| acc + v);
        assert!((mf_sum - matched_filter(&h, &y).unwrap()).norm() < 1e-12 * y.norm() * h.norm());

        assert!(partition_clusters(&h, &y, 3, AdmmParams::default()).is_err());
        let bad_rho = AdmmParams {
            rho: 0.0,
            ..AdmmParams::default()
        };
        assert!(partition_clusters(&h, &y, 4, bad_rho).is_err());
    }

    #[test]
    fn single_cluster_admm_is_gauss_seidel() {
        let h = generate_channel(64, 8, &mut ChaCha8Rng::seed_from_u64(21)).0;
        let y = random_grid(64, 6, 22);
        let params = AdmmParams {
            rho: 0.0,
            t_outer: 5,
            t_inner: 1,
        };
        let admm = admm_gs_detect(&partition_clusters(&h, &y, 1, params).unwrap()).unwrap();
        let gs = gs_detect(&h, &y, 5).unwrap();
        assert!((admm.s_hat - gs.s_hat).norm() < 1e-12);
        assert_eq!(admm.iterations, 5);
    }

    #[test]
    fn admm_recovers_noiseless_symbols() {
        let h = generate_channel(64, 8, &mut ChaCha8Rng::seed_from_u64(23)).0;
        let s = random_grid(8, 6, 24);
        let params = AdmmParams {
            t_outer: 50,
            ..AdmmParams::default()
        };
        let est = admm_gs_detect(&partition_clusters(&h, &(&h * &s), 4, params).unwrap()).unwrap();
        let worst = (est.s_hat - &s).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "max error {worst}");
    }

    #[test]
    fn evm_examples() {
        let s = random_grid(3, 4, 25);
        assert_eq!(evm(&s, &s).unwrap(), 0.0);
        assert!((evm(&(&s * c(2.0, 0.0)), &s).unwrap() - 100.0).abs() < 1e-12);
        let one = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let off = CMatrix::from_element(1, 1, c(1.0, 0.1));
        assert!((evm(&off, &one).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(evm(&one, &CMatrix::zeros(1, 1)), Err(Error::ZeroReference)));
        assert!(evm(&one, &CMatrix::zeros(1, 2)).is_err());
    }
}
