//! Local observables from a converged CTMRG environment: impurity-ratio
//! magnetization, boundary-transfer correlation length, and the free
//! energy density from corner/edge/site partition ratios.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::clock::{bulk_tensor, cos_weight, impurity_tensor, ClockParams};
use crate::ctmrg::{one_site_ring, t_slices, Environment};
use crate::linalg::eigh_dc;
use crate::{FdsError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub magnetization: f64,
    pub correlation_length: f64,
    pub free_energy_density: f64,
}

/// <cos theta> at the central site: ratio of the impurity-inserted one-site
/// contraction to the plain one. Normalization scales cancel because the
/// impurity shares the bulk tensor's scale.
pub fn magnetization(env: &Environment, params: &ClockParams) -> Result<f64> {
    let bulk = bulk_tensor(params)?;
    let imp = impurity_tensor(params, &cos_weight(params.n))?;
    let ring = one_site_ring(env)?;
    let n = params.n;
    let mut num = 0.0;
    let mut den = 0.0;
    for u in 0..n {
        for r in 0..n {
            for d in 0..n {
                for l in 0..n {
                    let w = ring[[u, r, d, l]];
                    num += w * imp.entries[[u, r, d, l]];
                    den += w * bulk.entries[[u, r, d, l]];
                }
            }
        }
    }
    if den == 0.0 || !den.is_finite() {
        return Err(FdsError::NonPositiveContraction {
            context: "magnetization denominator",
            value: den,
        });
    }
    Ok(num / den)
}

/// xi = 1 / ln(|lambda_1| / |lambda_2|) of the boundary channel
/// M = sum_s T_s (x) T_s, applied matrix-free as V -> sum_s T_s V T_s^T.
/// Dense diagonalization below `DENSE_LIMIT` rows, power iteration with
/// deflation above.
pub fn correlation_length(env: &Environment) -> Result<f64> {
    let ts = t_slices(env);
    let chi = env.chi;
    let dim = chi * chi;
    let (l1, l2) = if dim <= DENSE_LIMIT {
        channel_spectrum_dense(&ts, chi)?
    } else {
        channel_spectrum_iterative(&ts, chi)?
    };
    if !(l1.abs() > 0.0) {
        return Err(FdsError::NonPositiveContraction {
            context: "boundary channel leading eigenvalue",
            value: l1,
        });
    }
    let ratio = l1.abs() / l2.abs();
    if !(ratio > 1.0) {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / ratio.ln())
}

const DENSE_LIMIT: usize = 4096;

fn channel_matrix(ts: &[Array2<f64>], chi: usize) -> Array2<f64> {
    let dim = chi * chi;
    let mut m = Array2::zeros((dim, dim));
    for t in ts {
        for i in 0..chi {
            for j in 0..chi {
                let tij = t[[i, j]];
                if tij == 0.0 {
                    continue;
                }
                for k in 0..chi {
                    for l in 0..chi {
                        m[[i * chi + k, j * chi + l]] += tij * t[[k, l]];
                    }
                }
            }
        }
    }
    m
}

fn channel_spectrum_dense(ts: &[Array2<f64>], chi: usize) -> Result<(f64, f64)> {
    let m = channel_matrix(ts, chi);
    // symmetric because each T_s is symmetrized
    let (vals, _) = eigh_dc(&m)?;
    let mut mags: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if mags.len() < 2 {
        return Err(FdsError::TooFewPoints { needed: 2, got: mags.len() });
    }
    Ok((mags[0], mags[1]))
}

fn apply_channel(ts: &[Array2<f64>], v: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(v.raw_dim());
    for t in ts {
        out = out + t.dot(v).dot(&t.t());
    }
    out
}

fn channel_spectrum_iterative(ts: &[Array2<f64>], chi: usize) -> Result<(f64, f64)> {
    const TOL: f64 = 1e-12;
    const MAX_IT: usize = 50_000;
    let dot = |a: &Array2<f64>, b: &Array2<f64>| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    };
    // Power-iterate the squared channel: its eigenvalues are lambda^2 >= 0,
    // so sign-degenerate pairs of the channel itself cannot stall convergence.
    let mut leading: Vec<(f64, Array2<f64>)> = Vec::new();
    for _ in 0..2 {
        // deterministic start, orthogonalized against already-found vectors
        let mut v = Array2::from_shape_fn((chi, chi), |(i, j)| {
            1.0 + ((i * 31 + j * 17 + leading.len() * 7) % 97) as f64 / 97.0
        });
        let mut lam2 = 0.0f64;
        let mut converged = false;
        for _ in 0..MAX_IT {
            for (_, u) in &leading {
                let c = dot(&v, u);
                v = v - &u.mapv(|x| x * c);
            }
            let norm = dot(&v, &v).sqrt();
            if !(norm > 0.0) {
                return Err(FdsError::NonFinite("power iteration"));
            }
            v.mapv_inplace(|x| x / norm);
            let w = apply_channel(ts, &apply_channel(ts, &v));
            let new_lam2 = dot(&v, &w);
            let res = (&w - &v.mapv(|x| x * new_lam2))
                .iter()
                .fold(0.0f64, |m, &x| m.max(x.abs()));
            v = w;
            if (new_lam2 - lam2).abs() < TOL * new_lam2.abs().max(1.0)
                && res < TOL.sqrt() * new_lam2.abs()
            {
                lam2 = new_lam2;
                converged = true;
                break;
            }
            lam2 = new_lam2;
        }
        if !converged {
            return Err(FdsError::ToleranceExceeded {
                context: "boundary channel power iteration",
                residual: f64::NAN,
                tol: TOL,
            });
        }
        let norm = dot(&v, &v).sqrt();
        v.mapv_inplace(|x| x / norm);
        leading.push((lam2, v));
    }
    Ok((leading[0].0.max(0.0).sqrt(), leading[1].0.max(0.0).sqrt()))
}

/// f = -T (ln kappa + s_a) where kappa = Z_site Z_corner / Z_edge^2 is the
/// per-site partition ratio of the environment networks and s_a the bulk
/// tensor's stripped log scale.
pub fn free_energy_density(env: &Environment, params: &ClockParams) -> Result<f64> {
    let bulk = bulk_tensor(params)?;
    let ring = one_site_ring(env)?;
    let n = params.n;
    let chi = env.chi;

    let mut z_site = 0.0;
    for u in 0..n {
        for r in 0..n {
            for d in 0..n {
                for l in 0..n {
                    z_site += ring[[u, r, d, l]] * bulk.entries[[u, r, d, l]];
                }
            }
        }
    }
    let z_corner: f64 = env.c.iter().map(|&c| c.powi(4)).sum();
    let mut z_edge = 0.0;
    for s in 0..n {
        for al in 0..chi {
            for be in 0..chi {
                z_edge += env.c[al].powi(2)
                    * env.c[be].powi(2)
                    * env.t[[al, s, be]]
                    * env.t[[be, s, al]];
            }
        }
    }
    let kappa = z_site * z_corner / (z_edge * z_edge);
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(FdsError::NonPositiveContraction {
            context: "per-site partition ratio",
            value: kappa,
        });
    }
    let t = params.temperature();
    Ok(-t * (kappa.ln() + bulk.log_scale))
}

/// All three observables from one environment.
pub fn observables(env: &Environment, params: &ClockParams) -> Result<ObservableRecord> {
    Ok(ObservableRecord {
        magnetization: magnetization(env, params)?,
        correlation_length: correlation_length(env)?,
        free_energy_density: free_energy_density(env, params)?,
    })
}
