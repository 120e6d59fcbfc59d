//! Isotropic corner-transfer-matrix renormalization group.
//!
//! The bulk tensor is fully index-symmetric, so a single diagonal corner C
//! and a single half-row tensor T describe the environment. One iteration
//! grows the corner with two T's and a bulk tensor, diagonalizes it, and
//! projects T through the resulting isometry.

use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::BulkTensor;
use crate::linalg::eigh_dc;
use crate::{FdsError, Result};

/// Converged (or in-progress) CTMRG environment: diagonal corner spectrum
/// and half-row transfer tensor of shape chi x N x chi.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub chi: usize,
    /// corner diagonal, descending, max-abs normalized to 1
    pub c: Vec<f64>,
    pub t: Array3<f64>,
    pub log_scale_c: f64,
    pub log_scale_t: f64,
}

#[derive(Debug, Clone)]
pub enum InitMode {
    FromBulk,
    Random(u64),
    WarmStart(Environment),
}

#[derive(Debug, Clone)]
pub struct CtmrgConfig {
    pub chi: usize,
    pub eps: f64,
    pub max_iters: usize,
    /// (h, eps) ladder; must end with h = 0
    pub anneal_schedule: Vec<(f64, f64)>,
    pub init: InitMode,
}

impl CtmrgConfig {
    pub fn new(chi: usize) -> Self {
        Self {
            chi,
            eps: 1e-8,
            max_iters: 5000,
            anneal_schedule: default_anneal_schedule(),
            init: InitMode::FromBulk,
        }
    }
}

/// h ladder of the ferromagnetic boundary-condition protocol.
pub fn default_anneal_schedule() -> Vec<(f64, f64)> {
    vec![(1e-2, 1e-5), (1e-4, 1e-5), (0.0, 1e-8)]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    /// smallest kept corner value (truncation diagnostic)
    pub spectrum_tail: f64,
}

/// Initial environment from the bulk tensor's boundary traces, a seeded
/// random start, or a warm start padded/truncated to the requested chi.
pub fn init_environment(bulk: &BulkTensor, config: &CtmrgConfig) -> Result<Environment> {
    let n = bulk.n;
    let chi = config.chi;
    match &config.init {
        InitMode::FromBulk => {
            let a = &bulk.entries;
            // corner: trace out two adjacent legs; diagonalize to match the
            // diagonal-corner representation and rotate T along.
            let mut cmat = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        for l in 0..n {
                            s += a[[i, j, k, l]];
                        }
                    }
                    cmat[[i, j]] = s;
                }
            }
            let cmat = &(&cmat + &cmat.t()) * 0.5;
            let (vals, vecs) = eigh_dc(&cmat)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| {
                vals[y]
                    .abs()
                    .partial_cmp(&vals[x].abs())
                    .unwrap()
                    .then(x.cmp(&y))
            });
            let mut t0 = Array3::zeros((n, n, n));
            for i in 0..n {
                for s in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += a[[i, s, k, j]];
                        }
                        t0[[i, s, j]] = acc;
                    }
                }
            }
            // rotate T into the corner eigenbasis (kept columns only)
            let keep = n.min(chi);
            let mut c = vec![0.0; chi];
            let mut t = Array3::zeros((chi, n, chi));
            for (dst, &src) in order.iter().take(keep).enumerate() {
                c[dst] = vals[src];
            }
            for a_i in 0..keep {
                for s in 0..n {
                    for b_i in 0..keep {
                        let mut acc = 0.0;
                        for i in 0..n {
                            for j in 0..n {
                                acc += vecs[[i, order[a_i]]] * t0[[i, s, j]] * vecs[[j, order[b_i]]];
                            }
                        }
                        t[[a_i, s, b_i]] = acc;
                    }
                }
            }
            let mut env = Environment {
                chi,
                c,
                t,
                log_scale_c: 0.0,
                log_scale_t: 0.0,
            };
            normalize(&mut env)?;
            Ok(env)
        }
        InitMode::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut c: Vec<f64> = (0..chi).map(|_| rng.gen_range(0.0..1.0)).collect();
            c.sort_by(|x, y| y.partial_cmp(x).unwrap());
            let mut t = Array3::zeros((chi, n, chi));
            for i in 0..chi {
                for s in 0..n {
                    for j in 0..=i {
                        let v = rng.gen_range(0.0..1.0);
                        t[[i, s, j]] = v;
                        t[[j, s, i]] = v;
                    }
                }
            }
            let mut env = Environment {
                chi,
                c,
                t,
                log_scale_c: 0.0,
                log_scale_t: 0.0,
            };
            normalize(&mut env)?;
            Ok(env)
        }
        InitMode::WarmStart(prev) => {
            if prev.t.dim().1 != n {
                return Err(FdsError::DimensionMismatch {
                    expected: n,
                    got: prev.t.dim().1,
                });
            }
            if prev.chi == chi {
                return Ok(prev.clone());
            }
            let keep = prev.chi.min(chi);
            let mut c = vec![0.0; chi];
            c[..keep].copy_from_slice(&prev.c[..keep]);
            let mut t = Array3::zeros((chi, n, chi));
            for i in 0..keep {
                for s in 0..n {
                    for j in 0..keep {
                        t[[i, s, j]] = prev.t[[i, s, j]];
                    }
                }
            }
            Ok(Environment {
                chi,
                c,
                t,
                log_scale_c: prev.log_scale_c,
                log_scale_t: prev.log_scale_t,
            })
        }
    }
}

fn normalize(env: &mut Environment) -> Result<()> {
    let cmax = env.c.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let tmax = env.t.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if !(cmax > 0.0) || !(tmax > 0.0) || !cmax.is_finite() || !tmax.is_finite() {
        return Err(FdsError::NonFinite("environment normalization"));
    }
    env.c.iter_mut().for_each(|v| *v /= cmax);
    env.t.mapv_inplace(|v| v / tmax);
    env.log_scale_c += cmax.ln();
    env.log_scale_t += tmax.ln();
    Ok(())
}

/// One isotropic CTMRG iteration. Returns the updated environment and
/// delta = max_i |C_i' - C_i| over the leading shared corner values.
pub fn ctmrg_step(env: &Environment, bulk: &BulkTensor) -> Result<(Environment, f64)> {
    let n = bulk.n;
    let chi = env.chi;
    if env.t.dim().1 != n {
        return Err(FdsError::DimensionMismatch {
            expected: n,
            got: env.t.dim().1,
        });
    }
    let a = &bulk.entries;

    // G[(b_l, le), (b_t, u)] = sum_al c_al T[al][le][b_l] T[al][u][b_t]
    let t_flat = env
        .t
        .view()
        .into_shape_with_order((chi, n * chi))
        .map_err(|e| FdsError::Linalg(e.to_string()))?; // [al][(s, b)]
    let mut ct = Array2::zeros((chi, n * chi));
    for al in 0..chi {
        let cv = env.c[al];
        for sb in 0..n * chi {
            ct[[al, sb]] = cv * t_flat[[al, sb]];
        }
    }
    let g = ct.t().dot(&t_flat); // [(le, b_l)][(u, b_t)]

    // reorder to [(b_l, b_t)][(le, u)] and contract with a over (le, u)
    let g4 = g
        .into_shape_with_order((n, chi, n, chi))
        .map_err(|e| FdsError::Linalg(e.to_string()))?;
    let g4 = g4.permuted_axes([1, 3, 0, 2]); // [b_l][b_t][le][u]
    let g_mat = g4
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((chi * chi, n * n))
        .map_err(|e| FdsError::Linalg(e.to_string()))?;
    // a permuted to [(le, u)][(d, r)]: a[u][r][d][l] -> axes (3, 0, 2, 1)
    let a_perm = a.view().permuted_axes([3, 0, 2, 1]); // [l][u][d][r]
    let a_mat = a_perm
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n * n, n * n))
        .map_err(|e| FdsError::Linalg(e.to_string()))?;
    let cg = g_mat.dot(&a_mat); // [(b_l, b_t)][(d, r)]

    // assemble the enlarged corner [(b_l, d)][(b_t, r)] and symmetrize
    let cg4 = cg
        .into_shape_with_order((chi, chi, n, n))
        .map_err(|e| FdsError::Linalg(e.to_string()))?;
    let big = chi * n;
    let mut cbig = Array2::zeros((big, big));
    for bl in 0..chi {
        for bt in 0..chi {
            for d in 0..n {
                for r in 0..n {
                    cbig[[bl * n + d, bt * n + r]] = cg4[[bl, bt, d, r]];
                }
            }
        }
    }
    let cbig = &(&cbig + &cbig.t()) * 0.5;
    if cbig.iter().any(|v| !v.is_finite()) {
        return Err(FdsError::NonFinite("enlarged corner"));
    }

    // spectrum: keep the chi largest-magnitude eigenvalues, deterministic
    // tie-break by value then index; fix eigenvector signs.
    let (vals, vecs) = eigh_dc(&cbig)?;
    let mut order: Vec<usize> = (0..big).collect();
    order.sort_by(|&x, &y| {
        vals[y]
            .abs()
            .partial_cmp(&vals[x].abs())
            .unwrap()
            .then(vals[y].partial_cmp(&vals[x]).unwrap())
            .then(x.cmp(&y))
    });
    let keep = chi.min(big);
    let mut kept: Vec<usize> = order[..keep].to_vec();
    // present the kept spectrum in descending value order
    kept.sort_by(|&x, &y| vals[y].partial_cmp(&vals[x]).unwrap().then(x.cmp(&y)));

    let mut proj = Array2::zeros((big, keep)); // isometry columns
    let mut c_new = vec![0.0; chi];
    for (col, &src) in kept.iter().enumerate() {
        c_new[col] = vals[src];
        // sign fix: largest-magnitude entry positive
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for i in 0..big {
            let v = vecs[[i, src]].abs();
            if v > best_abs {
                best_abs = v;
                best = i;
            }
        }
        let sgn = if vecs[[best, src]] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..big {
            proj[[i, col]] = sgn * vecs[[i, src]];
        }
    }

    // grow T: Tg[(al, u)][(s, be, d)] = sum_le T[al][le][be] a[u][s][d][le]
    // via (chi^2 x n) . (n x n^3)
    let t_le = env.t.view().permuted_axes([0, 2, 1]); // [al][be][le]
    let t_le = t_le
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((chi * chi, n))
        .map_err(|e| FdsError::Linalg(e.to_string()))?;
    let a_le = a.view().permuted_axes([3, 0, 1, 2]); // [le][u][s(r)][d]
    let a_le = a_le
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, n * n * n))
        .map_err(|e| FdsError::Linalg(e.to_string()))?;
    let tg = t_le.dot(&a_le); // [(al, be)][(u, s, d)]
    let tg = tg
        .into_shape_with_order((chi, chi, n, n, n))
        .map_err(|e| FdsError::Linalg(e.to_string()))?;
    // -> [(al, u)][(s, be, d)]
    let tg = tg.permuted_axes([0, 2, 3, 1, 4]); // [al][u][s][be][d]
    let tg_mat = tg
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((big, n * chi * n))
        .map_err(|e| FdsError::Linalg(e.to_string()))?;
    let half = proj.t().dot(&tg_mat); // [al'][(s, be, d)]
    let half = half
        .into_shape_with_order((keep, n, chi, n))
        .map_err(|e| FdsError::Linalg(e.to_string()))?;
    let half = half.permuted_axes([2, 3, 0, 1]); // [be][d][al'][s]
    let half_mat = half
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((big, keep * n))
        .map_err(|e| FdsError::Linalg(e.to_string()))?;
    let t_new_mat = proj.t().dot(&half_mat); // [be'][(al', s)]
    let mut t_new = Array3::zeros((chi, n, chi));
    for bp in 0..keep {
        for ap in 0..keep {
            for s in 0..n {
                t_new[[ap, s, bp]] = t_new_mat[[bp, ap * n + s]];
            }
        }
    }

    let mut out = Environment {
        chi,
        c: c_new,
        t: t_new,
        log_scale_c: env.log_scale_c,
        log_scale_t: env.log_scale_t,
    };
    normalize(&mut out)?;
    let delta = out
        .c
        .iter()
        .zip(env.c.iter())
        .take(keep)
        .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
    Ok((out, delta))
}

/// Iterate `ctmrg_step` until the corner spectrum moves less than `eps`.
pub fn converge(
    env: Environment,
    bulk: &BulkTensor,
    eps: f64,
    max_iters: usize,
) -> Result<(Environment, ConvergenceReport)> {
    if !(eps > 0.0) {
        return Err(FdsError::InvalidParams(format!("eps must be > 0, got {eps}")));
    }
    let mut cur = env;
    let mut delta = f64::INFINITY;
    let mut iters = 0usize;
    while iters < max_iters {
        let (next, d) = ctmrg_step(&cur, bulk)?;
        cur = next;
        delta = d;
        iters += 1;
        if delta < eps {
            break;
        }
    }
    let tail = cur.c.iter().fold(f64::INFINITY, |m, &v| m.min(v.abs()));
    let report = ConvergenceReport {
        iterations: iters,
        final_delta: delta,
        converged: delta < eps,
        spectrum_tail: tail,
    };
    Ok((cur, report))
}

#[derive(Debug)]
pub struct AnnealFailure {
    pub source: FdsError,
    pub reports: Vec<ConvergenceReport>,
}

impl std::fmt::Display for AnnealFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "anneal run failed after {} stages: {}", self.reports.len(), self.source)
    }
}

impl std::error::Error for AnnealFailure {}

/// Bias-field annealing ladder: converge at each (h, eps) stage, warm
/// starting every stage from the previous one. `n` and `beta` fix the model;
/// the schedule's h values rebuild the bulk tensor per stage.
pub fn anneal_run(
    n: usize,
    beta: f64,
    config: &CtmrgConfig,
) -> std::result::Result<(Environment, Vec<ConvergenceReport>), AnnealFailure> {
    let mut reports = Vec::new();
    let fail = |source, reports| AnnealFailure { source, reports };
    if config.anneal_schedule.is_empty()
        || config.anneal_schedule.last().map(|&(h, _)| h) != Some(0.0)
    {
        return Err(fail(
            FdsError::InvalidParams("anneal schedule must end with h = 0".into()),
            reports,
        ));
    }
    let mut env: Option<Environment> = None;
    for (stage, &(h, eps)) in config.anneal_schedule.iter().enumerate() {
        let params = match crate::clock::ClockParams::new(n, beta, h) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, reports)),
        };
        let bulk = match crate::clock::bulk_tensor(&params) {
            Ok(b) => b,
            Err(e) => return Err(fail(e, reports)),
        };
        let start = if stage == 0 {
            match init_environment(&bulk, config) {
                Ok(e) => e,
                Err(e) => return Err(fail(e, reports)),
            }
        } else {
            env.take().expect("previous stage environment")
        };
        match converge(start, &bulk, eps, config.max_iters) {
            Ok((e, report)) => {
                reports.push(report);
                env = Some(e);
            }
            Err(e) => return Err(fail(e, reports)),
        }
    }
    Ok((env.expect("schedule non-empty"), reports))
}

/// chi x chi slices of T along the middle index, symmetrized; shared by the
/// observable contractions.
pub fn t_slices(env: &Environment) -> Vec<Array2<f64>> {
    let (chi, n, _) = env.t.dim();
    (0..n)
        .map(|s| {
            let mut m = Array2::zeros((chi, chi));
            for i in 0..chi {
                for j in 0..chi {
                    m[[i, j]] = 0.5 * (env.t[[i, s, j]] + env.t[[j, s, i]]);
                }
            }
            m
        })
        .collect()
}

/// Environment ring around one site: R[u][r][d][l] from 4 corners and 4
/// half-rows.
pub fn one_site_ring(env: &Environment) -> Result<Array4<f64>> {
    let (chi, n, _) = env.t.dim();
    // E[al][s][be] = T[al][s][be'] c[be']
    let mut e = Array3::zeros((chi, n, chi));
    for al in 0..chi {
        for s in 0..n {
            for be in 0..chi {
                e[[al, s, be]] = env.t[[al, s, be]] * env.c[be];
            }
        }
    }
    // F[al][(s1, s2)][ga] = sum_be E[al][s1][be] E[be][s2][ga]
    let e_mat = e
        .view()
        .into_shape_with_order((chi * n, chi))
        .map_err(|er| FdsError::Linalg(er.to_string()))?;
    let e_mat2 = e
        .view()
        .into_shape_with_order((chi, n * chi))
        .map_err(|er| FdsError::Linalg(er.to_string()))?;
    let f = e_mat.dot(&e_mat2); // [(al, s1)][(s2, ga)]
    let f4 = f
        .into_shape_with_order((chi, n, n, chi))
        .map_err(|er| FdsError::Linalg(er.to_string()))?;
    // R[s1 s2 s3 s4] = sum_{al, ga} F[al][s1 s2][ga] F[ga][s3 s4][al]
    let fa = f4.view().permuted_axes([1, 2, 0, 3]); // [s1][s2][al][ga]
    let fa = fa
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n * n, chi * chi))
        .map_err(|er| FdsError::Linalg(er.to_string()))?;
    let fb = f4.view().permuted_axes([0, 3, 1, 2]); // [al][ga] -> wrong order
    let fb = fb
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((chi * chi, n * n))
        .map_err(|er| FdsError::Linalg(er.to_string()))?;
    // fb rows indexed by (ga, al) must match fa columns (al, ga): build the
    // transposed pairing explicitly
    let fb4 = fb
        .into_shape_with_order((chi, chi, n, n))
        .map_err(|er| FdsError::Linalg(er.to_string()))?;
    let fb_sw = fb4.permuted_axes([1, 0, 2, 3]); // [ga->al swap]
    let fb_mat = fb_sw
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((chi * chi, n * n))
        .map_err(|er| FdsError::Linalg(er.to_string()))?;
    let r = fa.dot(&fb_mat); // [(s1, s2)][(s3, s4)]
    let r = r
        .into_shape_with_order((n, n, n, n))
        .map_err(|er| FdsError::Linalg(er.to_string()))?;
    Ok(r)
}
