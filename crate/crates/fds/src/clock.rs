//! Tensors of the clock-model network: character coefficients, the two-site
//! gate and its symmetric decomposition, the single-layer bulk tensor and
//! impurity tensors for observables.

use ndarray::{Array2, Array4, Array5};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::linalg::eigh_dc;
use crate::{FdsError, Result};

/// Model definition: number of clock states, inverse temperature and bias
/// field. The coupling J = 1 is absorbed into beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockParams {
    pub n: usize,
    pub beta: f64,
    pub h: f64,
}

impl ClockParams {
    pub fn new(n: usize, beta: f64, h: f64) -> Result<Self> {
        if n < 2 {
            return Err(FdsError::InvalidParams(format!("N must be >= 2, got {n}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(FdsError::InvalidParams(format!("beta must be > 0, got {beta}")));
        }
        if !(h >= 0.0) || !h.is_finite() {
            return Err(FdsError::InvalidParams(format!("h must be >= 0, got {h}")));
        }
        Ok(Self { n, beta, h })
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn from_temperature(n: usize, t: f64, h: f64) -> Result<Self> {
        Self::new(n, 1.0 / t, h)
    }

    /// Angle of clock state n.
    pub fn theta(&self, state: usize) -> f64 {
        2.0 * PI * state as f64 / self.n as f64
    }
}

/// Fourier coefficients of the bond Boltzmann weight e^{x cos}.
#[derive(Debug, Clone)]
pub struct CharacterCoefficients {
    pub n: usize,
    pub x: f64,
    pub c: Vec<f64>,
}

/// c_m(x) = (1/N) sum_k cos(2 pi k m / N) e^{x cos(2 pi k / N)}.
///
/// The exponent is taken positive so that all c_m > 0 for x > 0; this is the
/// sign for which the gate decomposition identity holds exactly (checked by
/// `verify_gate_decomposition`).
pub fn character_coefficients(n: usize, x: f64) -> CharacterCoefficients {
    let nf = n as f64;
    let c = (0..n)
        .map(|m| {
            (0..n)
                .map(|k| {
                    let kf = k as f64;
                    (2.0 * PI * kf * m as f64 / nf).cos() * (x * (2.0 * PI * kf / nf).cos()).exp()
                })
                .sum::<f64>()
                / nf
        })
        .collect();
    CharacterCoefficients { n, x, c }
}

/// Diagonal two-site gate exp(-beta h_ij / 2) as an N^2 x N^2 matrix,
/// i.e. G[(si,sj),(si,sj)] = e^{(beta/2) cos(2 pi (si - sj)/N)}.
pub fn gate_matrix(params: &ClockParams) -> Array2<f64> {
    let n = params.n;
    let nf = n as f64;
    let mut g = Array2::zeros((n * n, n * n));
    for si in 0..n {
        for sj in 0..n {
            let d = si as f64 - sj as f64;
            let idx = si * n + sj;
            g[[idx, idx]] = (params.beta / 2.0 * (2.0 * PI * d / nf).cos()).exp();
        }
    }
    g
}

/// Reconstructs the gate from sum_m c_m(beta/2) Z^m x (Z^dag)^m and returns
/// the max-abs residual. Errors above 1e-12: that signals a sign bug in the
/// coefficient convention.
pub fn verify_gate_decomposition(params: &ClockParams) -> Result<f64> {
    const TOL: f64 = 1e-12;
    let n = params.n;
    let nf = n as f64;
    let coeffs = character_coefficients(n, params.beta / 2.0);
    let g = gate_matrix(params);
    let mut residual = 0.0f64;
    for si in 0..n {
        for sj in 0..n {
            // (Z^m x Z^dag^m) is diagonal with entry omega^{m (si - sj)}.
            let mut sum = Complex64::new(0.0, 0.0);
            for (m, &cm) in coeffs.c.iter().enumerate() {
                let phase = 2.0 * PI * m as f64 * (si as f64 - sj as f64) / nf;
                sum += cm * Complex64::new(phase.cos(), phase.sin());
            }
            let idx = si * n + sj;
            residual = residual
                .max((sum.re - g[[idx, idx]]).abs())
                .max(sum.im.abs());
        }
    }
    if residual >= TOL {
        return Err(FdsError::GateDecomposition { residual, tol: TOL });
    }
    Ok(residual)
}

/// Factor O with O O^T = U, where U_{m,m'} = delta_{m,(N-m') mod N}.
///
/// U is a real-symmetric orthogonal involution; in its orthogonal eigenbasis
/// the factor is O = V diag(sqrt(lambda)) with sqrt(-1) = i.
pub fn gauge_factor(n: usize) -> Array2<Complex64> {
    let mut u = Array2::zeros((n, n));
    for m in 0..n {
        u[[m, (n - m) % n]] = 1.0;
    }
    let (vals, vecs) = eigh_dc(&u).expect("involution eigendecomposition");
    let mut o = Array2::zeros((n, n));
    for j in 0..n {
        let s = if vals[j] > 0.0 {
            Complex64::new(vals[j].sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-vals[j]).sqrt())
        };
        for i in 0..n {
            o[[i, j]] = s * vecs[[i, j]];
        }
    }
    o
}

/// Rank-5 rotation-invariant PEPS tensor B[s][i][j][k][l] (physical index
/// first). Kept for equivalence tests against the single-layer bulk tensor.
#[derive(Debug, Clone)]
pub struct PepsTensor {
    pub n: usize,
    pub entries: Array5<Complex64>,
    /// V[a][s]: bond factor of the symmetric gate decomposition; the bond
    /// amplitude between two sites is sum_a V[a][si] V[a][sj].
    pub leg: Array2<Complex64>,
}

/// Builds B_psi by applying V_m = O^T (sqrt(c_m) Z^m) on each of the four
/// virtual directions of the product tensor A_+ (all physical amplitudes 1).
/// A bias field h contributes e^{(beta h / 2) cos(theta_s)} per site.
pub fn peps_tensor(params: &ClockParams) -> PepsTensor {
    let n = params.n;
    let nf = n as f64;
    let coeffs = character_coefficients(n, params.beta / 2.0);
    let o = gauge_factor(n);
    // V[a][s] = sum_m O[m][a] sqrt(c_m) omega^{m s}; Z^m is diagonal so the
    // two physical legs of the gate factor collapse to one.
    let mut leg = Array2::zeros((n, n));
    for a in 0..n {
        for s in 0..n {
            let mut v = Complex64::new(0.0, 0.0);
            for m in 0..n {
                let cm = coeffs.c[m].max(0.0);
                let phase = 2.0 * PI * (m * s) as f64 / nf;
                v += o[[m, a]] * cm.sqrt() * Complex64::new(phase.cos(), phase.sin());
            }
            leg[[a, s]] = v;
        }
    }
    let mut entries = Array5::zeros((n, n, n, n, n));
    for s in 0..n {
        let site = (params.beta * params.h * (2.0 * PI * s as f64 / nf).cos() / 2.0).exp();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        entries[[s, i, j, k, l]] =
                            site * leg[[i, s]] * leg[[j, s]] * leg[[k, s]] * leg[[l, s]];
                    }
                }
            }
        }
    }
    PepsTensor { n, entries, leg }
}

/// Rank-4 single-layer bulk tensor, bond dimension N, indices
/// (up, right, down, left). Max-abs normalized with the true scale in
/// `log_scale`: raw = entries * e^{log_scale}.
#[derive(Debug, Clone)]
pub struct BulkTensor {
    pub n: usize,
    pub entries: Array4<f64>,
    pub log_scale: f64,
}

/// Real factor P of the bond Boltzmann matrix W = P P^T, built in the
/// circulant cos/sin Fourier basis. Eigenvalues of W are N c_m(beta).
pub fn bond_factor(n: usize, beta: f64) -> Result<Array2<f64>> {
    let nf = n as f64;
    let coeffs = character_coefficients(n, beta);
    let mut p = Array2::zeros((n, n));
    let mut col = 0usize;
    let push_col = |p: &mut Array2<f64>, col: usize, lam: f64, v: &[f64]| -> Result<()> {
        if lam <= 0.0 {
            return Err(FdsError::NonPositiveEigenvalue { value: lam });
        }
        let s = lam.sqrt();
        for (row, &vi) in v.iter().enumerate() {
            p[[row, col]] = s * vi;
        }
        Ok(())
    };
    // k = 0 mode
    let v0: Vec<f64> = (0..n).map(|_| 1.0 / nf.sqrt()).collect();
    push_col(&mut p, col, nf * coeffs.c[0], &v0)?;
    col += 1;
    // paired cos/sin modes
    for k in 1..=(n - 1) / 2 {
        let lam = nf * coeffs.c[k];
        let vc: Vec<f64> = (0..n)
            .map(|m| (2.0 / nf).sqrt() * (2.0 * PI * (k * m) as f64 / nf).cos())
            .collect();
        let vs: Vec<f64> = (0..n)
            .map(|m| (2.0 / nf).sqrt() * (2.0 * PI * (k * m) as f64 / nf).sin())
            .collect();
        push_col(&mut p, col, lam, &vc)?;
        col += 1;
        push_col(&mut p, col, lam, &vs)?;
        col += 1;
    }
    // Nyquist mode for even N
    if n % 2 == 0 {
        let v: Vec<f64> = (0..n)
            .map(|m| if m % 2 == 0 { 1.0 } else { -1.0 } / nf.sqrt())
            .collect();
        push_col(&mut p, col, nf * coeffs.c[n / 2], &v)?;
    }
    Ok(p)
}

fn weighted_bulk(params: &ClockParams, weight: impl Fn(usize) -> f64) -> Result<Array4<f64>> {
    let n = params.n;
    let nf = n as f64;
    let p = bond_factor(n, params.beta)?;
    let mut a: Array4<f64> = Array4::zeros((n, n, n, n));
    for spin in 0..n {
        let w = weight(spin)
            * (params.beta * params.h * (2.0 * PI * spin as f64 / nf).cos()).exp();
        for i in 0..n {
            let pi = p[[spin, i]];
            for j in 0..n {
                let pij = pi * p[[spin, j]];
                for k in 0..n {
                    let pijk = pij * p[[spin, k]];
                    for l in 0..n {
                        a[[i, j, k, l]] += w * pijk * p[[spin, l]];
                    }
                }
            }
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(FdsError::NonFinite("bulk tensor"));
    }
    Ok(a)
}

fn max_abs4(a: &Array4<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Single-layer classical bulk tensor: the bond matrix W = e^{beta cos} is
/// factored as W = P P^T and a[i][j][k][l] = sum_n P[n][i]..P[n][l] times
/// the bias weight e^{beta h cos(theta_n)}.
pub fn bulk_tensor(params: &ClockParams) -> Result<BulkTensor> {
    let mut a = weighted_bulk(params, |_| 1.0)?;
    let scale = max_abs4(&a);
    if scale <= 0.0 || !scale.is_finite() {
        return Err(FdsError::NonFinite("bulk tensor scale"));
    }
    a.mapv_inplace(|v| v / scale);
    Ok(BulkTensor {
        n: params.n,
        entries: a,
        log_scale: scale.ln(),
    })
}

/// Impurity tensor with the spin sum weighted by `weight(n)`. Shares the
/// plain bulk tensor's normalization scale so contraction ratios are direct
/// expectation values.
pub fn impurity_tensor(params: &ClockParams, weight: impl Fn(usize) -> f64) -> Result<BulkTensor> {
    let plain = weighted_bulk(params, |_| 1.0)?;
    let scale = max_abs4(&plain);
    let mut a = weighted_bulk(params, weight)?;
    a.mapv_inplace(|v| v / scale);
    Ok(BulkTensor {
        n: params.n,
        entries: a,
        log_scale: scale.ln(),
    })
}

/// Impurity weight for the magnetization M = <cos theta>.
pub fn cos_weight(n: usize) -> impl Fn(usize) -> f64 {
    move |s| (2.0 * PI * s as f64 / n as f64).cos()
}

/// Exact contraction of the bulk-tensor network on an Lx x Ly torus,
/// returned as log Z. Row transfer matrices are built by contracting a ring
/// of L tensors; intended for small oracle-scale lattices.
pub fn bulk_torus_log_z(bulk: &BulkTensor, lx: usize, ly: usize) -> Result<f64> {
    let m = row_transfer(&bulk.entries, bulk.n, lx)?;
    let dim = m.nrows();
    // trace of M^Ly with scale tracking
    let mut acc = Array2::eye(dim);
    let mut log_scale = 0.0f64;
    for _ in 0..ly {
        acc = acc.dot(&m);
        let s = acc.iter().fold(0.0f64, |mm, &v| mm.max(v.abs()));
        if s <= 0.0 || !s.is_finite() {
            return Err(FdsError::NonFinite("torus contraction"));
        }
        acc.mapv_inplace(|v| v / s);
        log_scale += s.ln();
    }
    let tr: f64 = (0..dim).map(|i| acc[[i, i]]).sum();
    if tr <= 0.0 {
        return Err(FdsError::NonPositiveContraction {
            context: "torus trace",
            value: tr,
        });
    }
    Ok(tr.ln() + log_scale + (lx * ly) as f64 * bulk.log_scale)
}

/// Row transfer matrix of a ring of `l` bulk tensors, periodic horizontally:
/// M[(u_1..u_l),(d_1..d_l)] = sum_{h_1..h_l} prod_i a[u_i][h_{i+1}][d_i][h_i].
fn row_transfer(a: &Array4<f64>, n: usize, l: usize) -> Result<Array2<f64>> {
    let dim = n.checked_pow(l as u32).ok_or_else(|| {
        FdsError::BudgetExceeded(format!("row transfer N={n} L={l}"))
    })?;
    if dim > 20_000 {
        return Err(FdsError::BudgetExceeded(format!(
            "row transfer dimension {dim} exceeds 20000"
        )));
    }
    // accumulate over sites: state indexed by (h_first, ud-prefix, h_cur)
    // acc[h1][(u..d.. interleaved prefix)][hc]
    let mut acc = vec![0.0f64; n * n];
    for h1 in 0..n {
        for hc in 0..n {
            acc[h1 * n + hc] = if h1 == hc { 1.0 } else { 0.0 };
        }
    }
    let mut prefix = 1usize;
    for _ in 0..l {
        let mut next = vec![0.0f64; n * prefix * n * n * n];
        // next[h1][pre][u][d][hn] = sum_hc acc[h1][pre][hc] * a[u][hn][d][hc]
        for h1 in 0..n {
            for pre in 0..prefix {
                for hc in 0..n {
                    let v = acc[(h1 * prefix + pre) * n + hc];
                    if v == 0.0 {
                        continue;
                    }
                    for u in 0..n {
                        for d in 0..n {
                            for hn in 0..n {
                                let idx = ((((h1 * prefix + pre) * n + u) * n + d) * n) + hn;
                                next[idx] += v * a[[u, hn, d, hc]];
                            }
                        }
                    }
                }
            }
        }
        acc = next;
        prefix *= n * n;
    }
    // close the ring: h_last == h_first; reorder interleaved (u,d) pairs into
    // row index (u_1..u_l) and column index (d_1..d_l).
    let mut m = Array2::zeros((dim, dim));
    let total = n * prefix * n;
    for flat in 0..total {
        let hn = flat % n;
        let rest = flat / n;
        let h1 = rest / prefix;
        if h1 != hn {
            continue;
        }
        let mut pre = rest % prefix;
        // decode l (u,d) pairs, least-significant last
        let mut us = vec![0usize; l];
        let mut ds = vec![0usize; l];
        for site in (0..l).rev() {
            ds[site] = pre % n;
            pre /= n;
            us[site] = pre % n;
            pre /= n;
        }
        let row = us.iter().fold(0usize, |x, &u| x * n + u);
        let col = ds.iter().fold(0usize, |x, &d| x * n + d);
        m[[row, col]] += acc[flat];
    }
    Ok(m)
}

/// Norm of the PEPS network on an Lx x Ly torus, returned as log <psi|psi>.
///
/// For a fixed spin configuration the virtual network factorizes into bond
/// amplitudes g[s][s'] = sum_a V[a][s] V[a][s'], so the norm is the exact
/// configuration sum of |amplitude|^2. Independent of the single-layer path.
pub fn peps_norm_log(params: &ClockParams, lx: usize, ly: usize) -> Result<f64> {
    let n = params.n;
    let sites = lx * ly;
    let dim = (n as f64).powi(sites as i32);
    if dim > 1e8 {
        return Err(FdsError::BudgetExceeded(format!(
            "peps norm enumeration {dim} configs"
        )));
    }
    let peps = peps_tensor(params);
    let mut bond = Array2::<Complex64>::zeros((n, n));
    for s in 0..n {
        for sp in 0..n {
            let mut g = Complex64::new(0.0, 0.0);
            for a in 0..n {
                g += peps.leg[[a, s]] * peps.leg[[a, sp]];
            }
            bond[[s, sp]] = g;
        }
    }
    let nf = n as f64;
    let site_weight: Vec<f64> = (0..n)
        .map(|s| (params.beta * params.h * (2.0 * PI * s as f64 / nf).cos() / 2.0).exp())
        .collect();

    let total = n.pow(sites as u32);
    let mut cfg = vec![0usize; sites];
    // streaming sum of |amp|^2 with max-rescaling
    let mut max_log = f64::NEG_INFINITY;
    let mut sum = 0.0f64;
    for flat in 0..total {
        if flat > 0 {
            // odometer increment
            let mut i = 0;
            loop {
                cfg[i] += 1;
                if cfg[i] < n {
                    break;
                }
                cfg[i] = 0;
                i += 1;
            }
        }
        let mut amp = Complex64::new(1.0, 0.0);
        for y in 0..ly {
            for x in 0..lx {
                let s = cfg[y * lx + x];
                let right = cfg[y * lx + (x + 1) % lx];
                let down = cfg[((y + 1) % ly) * lx + x];
                amp *= bond[[s, right]] * bond[[s, down]] * site_weight[s];
            }
        }
        let a2 = amp.norm_sqr();
        if a2 > 0.0 {
            let lg = a2.ln();
            if lg > max_log {
                sum = sum * (max_log - lg).exp() + 1.0;
                max_log = lg;
            } else {
                sum += (lg - max_log).exp();
            }
        }
    }
    Ok(max_log + sum.ln())
}
