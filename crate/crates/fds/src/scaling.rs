//! Finite-chi analysis: 1/chi extrapolation, the correlation-length fit,
//! scaling collapses and their quality score, kappa estimation, and a
//! critical-temperature estimator for when no table is supplied.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{FdsError, Result};

/// One converged sweep measurement, the unit all analyses consume.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: u32,
    pub temp: f64,
    pub chi: u32,
    pub magnetization: f64,
    pub xi: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    M,
    Xi,
}

impl Field {
    fn get(&self, p: &ScalingPoint) -> f64 {
        match self {
            Field::M => p.magnetization,
            Field::Xi => p.xi,
        }
    }
}

/// Per-N critical temperatures, supplied by config or by `estimate_t_l`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CriticalTemps {
    temps: BTreeMap<u32, f64>,
}

impl CriticalTemps {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, n: u32, t_l: f64) -> Result<()> {
        if !(t_l > 0.0) {
            return Err(FdsError::InvalidParams(format!(
                "critical temperature must be positive, got {t_l} for N = {n}"
            )));
        }
        self.temps.insert(n, t_l);
        Ok(())
    }

    pub fn get(&self, n: u32) -> Result<f64> {
        self.temps
            .get(&n)
            .copied()
            .ok_or(FdsError::MissingCriticalTemp(n))
    }

    /// reduced temperature t = (T - T_L) / T_L
    pub fn reduced(&self, n: u32, temp: f64) -> Result<f64> {
        let t_l = self.get(n)?;
        Ok((temp - t_l) / t_l)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.temps.iter().map(|(&n, &t)| (n, t))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    pub value: f64,
    pub stderr: f64,
    pub used_chis: Vec<u32>,
    pub rel_err: f64,
}

impl ExtrapolationResult {
    /// downstream exclusion rule: relative error above 3.5% disqualifies
    /// the extrapolated value from fits and collapses
    pub fn excluded(&self) -> bool {
        !(self.rel_err <= REL_ERR_CUT)
    }
}

pub const CHI_MIN_DEFAULT: u32 = 70;
pub const REL_ERR_CUT: f64 = 0.035;

/// Ordinary least squares of a field against 1/chi over converged records
/// with chi >= `chi_min`; the intercept estimates the chi -> infinity limit.
pub fn extrapolate_chi(
    records: &[ScalingPoint],
    field: Field,
    chi_min: u32,
) -> Result<ExtrapolationResult> {
    let mut pts: Vec<(u32, f64)> = records
        .iter()
        .filter(|r| r.converged && r.chi >= chi_min)
        .map(|r| (r.chi, field.get(r)))
        .collect();
    pts.sort_by_key(|p| p.0);
    pts.dedup_by_key(|p| p.0);
    if pts.len() < 3 {
        return Err(FdsError::TooFewPoints {
            needed: 3,
            got: pts.len(),
        });
    }
    let xs: Vec<f64> = pts.iter().map(|p| 1.0 / p.0 as f64).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (intercept, _, var_intercept) = ols(&xs, &ys)?;
    let stderr = var_intercept.sqrt();
    Ok(ExtrapolationResult {
        value: intercept,
        stderr,
        used_chis: pts.iter().map(|p| p.0).collect(),
        rel_err: stderr / intercept.abs(),
    })
}

/// OLS y = c0 + c1 x; returns (c0, c1, var(c0)).
fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let m = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(FdsError::Domain("degenerate abscissas in OLS".into()));
    }
    let c1 = (m * sxy - sx * sy) / denom;
    let c0 = (sy - c1 * sx) / m;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - c0 - c1 * x;
            r * r
        })
        .sum();
    let dof = (xs.len() as f64 - 2.0).max(1.0);
    let sigma2 = rss / dof;
    let var_c0 = sigma2 * sxx / denom;
    Ok((c0, c1, var_c0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiFitResult {
    pub a: f64,
    pub b: f64,
    pub eps0: f64,
    pub covariance: [[f64; 3]; 3],
    pub residual: f64,
}

const FIT_BOUNDS: [(f64, f64); 3] = [(0.0, 4.0), (0.0, 3.0), (1e-12, 10.0)];

fn xi_model(a: f64, b: f64, eps0: f64, n: f64, t: f64) -> f64 {
    eps0.ln() - a * n.ln() + std::f64::consts::FRAC_PI_4 / (t.abs() / n.powf(b)).sqrt()
}

/// Nonlinear least squares of
///   log xi = log eps0 - a log N + (pi/4) / sqrt(|t| / N^b)
/// over (N, T, xi_inf) data below the critical temperature, by
/// Levenberg-Marquardt with the analytic Jacobian.
pub fn fit_xi_scaling(
    xi_inf: &[(u32, f64, f64)],
    temps: &CriticalTemps,
) -> Result<XiFitResult> {
    let mut data: Vec<(f64, f64, f64)> = Vec::new(); // (N, t, log xi)
    for &(n, temp, xi) in xi_inf {
        let t = temps.reduced(n, temp)?;
        if !(t < 0.0) {
            return Err(FdsError::Domain(format!(
                "xi fit needs data below the transition; N = {n}, T = {temp} has t = {t}"
            )));
        }
        if !(xi > 0.0) {
            return Err(FdsError::Domain(format!(
                "xi must be positive, got {xi} at N = {n}, T = {temp}"
            )));
        }
        data.push((n as f64, t, xi.ln()));
    }
    let distinct_n = {
        let mut ns: Vec<u32> = xi_inf.iter().map(|d| d.0).collect();
        ns.sort_unstable();
        ns.dedup();
        ns.len()
    };
    if distinct_n < 2 {
        return Err(FdsError::InvalidParams(
            "xi fit needs at least 2 distinct N to identify b".into(),
        ));
    }
    if data.len() < 4 {
        return Err(FdsError::TooFewPoints {
            needed: 4,
            got: data.len(),
        });
    }

    let mut p = [1.5f64, 1.0, std::f64::consts::LN_2];
    let mut lambda = 1e-3;
    let m = data.len();
    let residuals = |p: &[f64; 3]| -> Vec<f64> {
        data.iter()
            .map(|&(n, t, ly)| xi_model(p[0], p[1], p[2], n, t) - ly)
            .collect()
    };
    let cost = |r: &[f64]| -> f64 { r.iter().map(|v| v * v).sum() };
    let mut r = residuals(&p);
    let mut c = cost(&r);
    let mut jtj = [[0.0f64; 3]; 3];
    for _iter in 0..500 {
        // Jacobian rows: d model / d (a, b, eps0)
        let mut jac = Vec::with_capacity(m);
        for &(n, t, _) in &data {
            let s = t.abs() / n.powf(p[1]);
            let term = std::f64::consts::FRAC_PI_4 / s.sqrt();
            jac.push([-n.ln(), 0.5 * term * n.ln(), 1.0 / p[2]]);
        }
        jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for (row, &ri) in jac.iter().zip(r.iter()) {
            for i in 0..3 {
                jtr[i] += row[i] * ri;
                for j in 0..3 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        let mut step_taken = false;
        for _ in 0..30 {
            let mut lhs = jtj;
            for (i, row) in lhs.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-12);
            }
            let rhs = [-jtr[0], -jtr[1], -jtr[2]];
            let Some(delta) = solve3(lhs, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for i in 0..3 {
                trial[i] = (p[i] + delta[i]).clamp(FIT_BOUNDS[i].0, FIT_BOUNDS[i].1);
            }
            let tr = residuals(&trial);
            let tc = cost(&tr);
            if tc < c {
                let rel = (c - tc) / c.max(1e-300);
                p = trial;
                r = tr;
                c = tc;
                lambda = (lambda * 0.3).max(1e-12);
                step_taken = true;
                if rel < 1e-14 {
                    break;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if !step_taken {
            break;
        }
    }
    if !c.is_finite() {
        return Err(FdsError::FitDiverged(format!(
            "cost {c} after Levenberg-Marquardt at parameters {p:?}"
        )));
    }
    // covariance = sigma^2 (J^T J)^{-1}
    let dof = (m as f64 - 3.0).max(1.0);
    let sigma2 = c / dof;
    let cov = match invert3(jtj) {
        Some(inv) => {
            let mut cv = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    cv[i][j] = sigma2 * inv[i][j];
                }
            }
            cv
        }
        None => [[f64::NAN; 3]; 3],
    };
    Ok(XiFitResult {
        a: p[0],
        b: p[1],
        eps0: p[2],
        covariance: cov,
        residual: c.sqrt(),
    })
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

fn invert3(a: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut out = [[0.0f64; 3]; 3];
    for col in 0..3 {
        let mut e = [0.0; 3];
        e[col] = 1.0;
        let x = solve3(a, e)?;
        for row in 0..3 {
            out[row][col] = x[row];
        }
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CollapsePoint {
    pub x: f64,
    pub y: f64,
    pub n: u32,
    pub chi: u32,
    pub temp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollapseResult {
    pub points: Vec<CollapsePoint>,
    pub score: f64,
    pub kappa_used: Option<f64>,
    pub delta_used: Vec<(u32, f64)>,
}

/// Binned-variance collapse quality: sort by x, split into equal-count bins
/// of ceil(sqrt(n)) points, return the mean over bins of Var(y) / Var_total(y).
/// Bins with at least three points measure Var(y) around the bin's
/// least-squares line in x rather than its mean, so the slope of the common
/// curve itself does not contribute -- the score sees only the scatter
/// transverse to the curve. Zero means all curves lie on top of each other;
/// ~1 means no collapse.
pub fn collapse_score(points: &[(f64, f64)]) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(FdsError::TooFewPoints { needed: 2, got: n });
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mean: f64 = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let var_total: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n as f64;
    if var_total == 0.0 {
        return Ok(0.0);
    }
    let bin = (n as f64).sqrt().ceil() as usize;
    let mut acc = 0.0;
    let mut bins = 0usize;
    let mut start = 0usize;
    while start < n {
        let end = (start + bin).min(n);
        let chunk = &pts[start..end];
        let k = chunk.len() as f64;
        let mx: f64 = chunk.iter().map(|p| p.0).sum::<f64>() / k;
        let my: f64 = chunk.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = chunk.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = chunk.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        // slope of the in-bin detrend line; two-point bins (and bins with a
        // single distinct x) fall back to the plain mean
        let slope = if chunk.len() >= 3 && sxx > 0.0 { sxy / sxx } else { 0.0 };
        let var: f64 = chunk
            .iter()
            .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
            .sum::<f64>()
            / k;
        acc += var / var_total;
        bins += 1;
        start = end;
    }
    Ok(acc / bins as f64)
}

fn score_of(points: &[CollapsePoint]) -> Result<f64> {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    collapse_score(&xy)
}

/// Rescaling collapse in N at infinite chi: x = |t| / (N Delta^2),
/// y = O_inf N^{-(3/2) Delta}, with Delta = delta_o(N).
pub fn collapse_ansatz_n(
    o_inf: &[(u32, f64, f64)],
    temps: &CriticalTemps,
    delta_o: impl Fn(u32) -> f64,
) -> Result<CollapseResult> {
    let mut points = Vec::new();
    let mut deltas: BTreeMap<u32, f64> = BTreeMap::new();
    for &(n, temp, o) in o_inf {
        let t = temps.reduced(n, temp)?;
        if !(t < 0.0) {
            continue;
        }
        let delta = delta_o(n);
        if !(delta > 0.0) {
            return Err(FdsError::InvalidParams(format!(
                "scaling dimension must be positive, got {delta} for N = {n}"
            )));
        }
        deltas.insert(n, delta);
        let nf = n as f64;
        points.push(CollapsePoint {
            x: t.abs() / (nf * delta * delta),
            y: o * nf.powf(-1.5 * delta),
            n,
            chi: 0,
            temp,
        });
    }
    if points.is_empty() {
        return Err(FdsError::EmptyWindow);
    }
    let score = score_of(&points)?;
    Ok(CollapseResult {
        points,
        score,
        kappa_used: None,
        delta_used: deltas.into_iter().collect(),
    })
}

fn kappa_points(records: &[ScalingPoint], kappa: f64) -> Vec<CollapsePoint> {
    records
        .iter()
        .map(|r| CollapsePoint {
            x: r.temp,
            y: r.xi / (r.chi as f64).powf(kappa),
            n: r.n,
            chi: r.chi,
            temp: r.temp,
        })
        .collect()
}

/// Scan kappa in [1.0, 1.5] (grid plus golden-section refinement) for the
/// exponent minimizing the collapse score of xi / chi^kappa against T
/// across all (N, chi). Records must be pre-filtered to the critical window.
pub fn collapse_kappa(records: &[ScalingPoint]) -> Result<(f64, CollapseResult)> {
    if records.is_empty() {
        return Err(FdsError::EmptyWindow);
    }
    let score_at = |k: f64| -> Result<f64> { score_of(&kappa_points(records, k)) };
    let (lo, hi) = (1.0, 1.5);
    let grid = 51usize;
    let mut best = (lo, f64::INFINITY);
    for i in 0..grid {
        let k = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
        let s = score_at(k)?;
        if s < best.1 {
            best = (k, s);
        }
    }
    let step = (hi - lo) / (grid - 1) as f64;
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    // golden-section refinement
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if score_at(x1)? < score_at(x2)? {
            b = x2;
        } else {
            a = x1;
        }
        if b - a < 1e-10 {
            break;
        }
    }
    let kappa = 0.5 * (a + b);
    let points = kappa_points(records, kappa);
    let score = score_of(&points)?;
    Ok((
        kappa,
        CollapseResult {
            points,
            score,
            kappa_used: Some(kappa),
            delta_used: Vec::new(),
        },
    ))
}

/// Collapse scores at a fixed kappa with and without N grouping: the
/// grouped score averages per-N scores, the ungrouped score pools all N.
/// Agreement signals that no N-rescaling is needed in the critical window.
pub fn kappa_grouping_scores(records: &[ScalingPoint], kappa: f64) -> Result<(f64, f64)> {
    let pooled = score_of(&kappa_points(records, kappa))?;
    let mut ns: Vec<u32> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut acc = 0.0;
    for n in &ns {
        let sub: Vec<ScalingPoint> = records.iter().filter(|r| r.n == *n).copied().collect();
        acc += score_of(&kappa_points(&sub, kappa))?;
    }
    Ok((acc / ns.len() as f64, pooled))
}

/// Crossover collapse at finite chi:
///   x = (t / N) log^2(chi^kappa / xi0(N)),  xi0(N) = log 2 / N^(3/2),
///   y = O^(-1/Delta) / chi^kappa.
pub fn collapse_crossover(
    records: &[ScalingPoint],
    temps: &CriticalTemps,
    delta_o: impl Fn(u32) -> f64,
    kappa: f64,
) -> Result<CollapseResult> {
    let mut points = Vec::new();
    let mut deltas: BTreeMap<u32, f64> = BTreeMap::new();
    for r in records {
        let t = temps.reduced(r.n, r.temp)?;
        let delta = delta_o(r.n);
        if !(delta > 0.0) {
            return Err(FdsError::InvalidParams(format!(
                "scaling dimension must be positive, got {delta} for N = {}",
                r.n
            )));
        }
        deltas.insert(r.n, delta);
        let o = r.magnetization;
        if !(o > 0.0) {
            continue;
        }
        let nf = r.n as f64;
        let xi0 = std::f64::consts::LN_2 / nf.powf(1.5);
        let chik = (r.chi as f64).powf(kappa);
        points.push(CollapsePoint {
            x: t / nf * (chik / xi0).ln().powi(2),
            y: o.powf(-1.0 / delta) / chik,
            n: r.n,
            chi: r.chi,
            temp: r.temp,
        });
    }
    if points.is_empty() {
        return Err(FdsError::EmptyWindow);
    }
    let score = score_of(&points)?;
    Ok(CollapseResult {
        points,
        score,
        kappa_used: Some(kappa),
        delta_used: deltas.into_iter().collect(),
    })
}

/// Estimate T_L from xi(T) data below and above the transition: choose the
/// candidate T_L that best linearizes log xi against 1 / sqrt(|t|) on the
/// t < 0 side (grid scan plus golden-section refinement of the OLS residual).
pub fn estimate_t_l(points: &[(f64, f64)], t_lo: f64, t_hi: f64) -> Result<f64> {
    if points.len() < 5 {
        return Err(FdsError::TooFewPoints {
            needed: 5,
            got: points.len(),
        });
    }
    if !(t_hi > t_lo) {
        return Err(FdsError::InvalidParams(
            "candidate window must have t_hi > t_lo".into(),
        ));
    }
    let rss_at = |t_l: f64| -> f64 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &(temp, xi) in points {
            let t = (temp - t_l) / t_l;
            if t < -1e-9 && xi > 0.0 {
                xs.push(1.0 / t.abs().sqrt());
                ys.push(xi.ln());
            }
        }
        if xs.len() < 3 {
            return f64::INFINITY;
        }
        match ols(&xs, &ys) {
            Ok((c0, c1, _)) => xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (y - c0 - c1 * x).powi(2))
                .sum::<f64>()
                / xs.len() as f64,
            Err(_) => f64::INFINITY,
        }
    };
    let grid = 101usize;
    let mut best = (t_lo, f64::INFINITY);
    let mut best_i = 0usize;
    for i in 0..grid {
        let t_l = t_lo + (t_hi - t_lo) * i as f64 / (grid - 1) as f64;
        let s = rss_at(t_l);
        if s < best.1 {
            best = (t_l, s);
            best_i = i;
        }
    }
    if !best.1.is_finite() || best_i == 0 || best_i == grid - 1 {
        return Err(FdsError::NotBracketed);
    }
    let step = (t_hi - t_lo) / (grid - 1) as f64;
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if rss_at(x1) < rss_at(x2) {
            b = x2;
        } else {
            a = x1;
        }
        if b - a < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point(n: u32, temp: f64, chi: u32, m: f64, xi: f64) -> ScalingPoint {
        ScalingPoint {
            n,
            temp,
            chi,
            magnetization: m,
            xi,
            converged: true,
        }
    }

    #[test]
    fn extrapolation_exact_linear_model() {
        let recs: Vec<ScalingPoint> = [70u32, 96, 128]
            .iter()
            .map(|&chi| point(2, 0.5, chi, 3.0 + 5.0 / chi as f64, 1.0))
            .collect();
        let r = extrapolate_chi(&recs, Field::M, CHI_MIN_DEFAULT).unwrap();
        assert!((r.value - 3.0).abs() < 1e-12, "value {}", r.value);
        assert!(r.stderr < 1e-10);
        assert_eq!(r.used_chis, vec![70, 96, 128]);
        assert!(!r.excluded());
    }

    #[test]
    fn extrapolation_filters_low_chi_and_unconverged() {
        let mut recs: Vec<ScalingPoint> = [70u32, 96, 128]
            .iter()
            .map(|&chi| point(2, 0.5, chi, 3.0 + 5.0 / chi as f64, 1.0))
            .collect();
        recs.push(point(2, 0.5, 32, 100.0, 1.0)); // below filter
        let mut bad = point(2, 0.5, 112, 100.0, 1.0);
        bad.converged = false;
        recs.push(bad);
        let r = extrapolate_chi(&recs, Field::M, CHI_MIN_DEFAULT).unwrap();
        assert!((r.value - 3.0).abs() < 1e-12);
        assert_eq!(r.used_chis, vec![70, 96, 128]);
    }

    #[test]
    fn extrapolation_too_few_points() {
        let recs: Vec<ScalingPoint> = [70u32, 96]
            .iter()
            .map(|&chi| point(2, 0.5, chi, 1.0, 1.0))
            .collect();
        assert!(matches!(
            extrapolate_chi(&recs, Field::M, CHI_MIN_DEFAULT),
            Err(FdsError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn extrapolation_noise_coverage() {
        // 3-sigma coverage under 1% noise over 100 seeded repetitions
        let chis: Vec<u32> = (7..=19).map(|k| k * 10).collect();
        let mut misses = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let recs: Vec<ScalingPoint> = chis
                .iter()
                .map(|&chi| {
                    let clean = 3.0 + 5.0 / chi as f64;
                    // Box-Muller normal draw
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                    point(2, 0.5, chi, clean * (1.0 + 0.01 * g), 1.0)
                })
                .collect();
            let r = extrapolate_chi(&recs, Field::M, CHI_MIN_DEFAULT).unwrap();
            if (r.value - 3.0).abs() > 3.0 * r.stderr {
                misses += 1;
            }
        }
        assert!(misses <= 2, "{misses} of 100 repetitions outside 3 sigma");
    }

    fn temps_for(ns: &[u32], t_l: f64) -> CriticalTemps {
        let mut temps = CriticalTemps::new();
        for &n in ns {
            temps.insert(n, t_l).unwrap();
        }
        temps
    }

    #[test]
    fn xi_fit_round_trip() {
        let t_l = 0.9;
        let temps = temps_for(&[6, 7, 8, 9], t_l);
        let mut data = Vec::new();
        for n in 6u32..=9 {
            for k in 1..=6 {
                let t = -0.04 * k as f64;
                let temp = t_l * (1.0 + t);
                let logxi = xi_model(1.5, 1.0, std::f64::consts::LN_2, n as f64, t);
                data.push((n, temp, logxi.exp()));
            }
        }
        let fit = fit_xi_scaling(&data, &temps).unwrap();
        assert!((fit.a - 1.5).abs() < 1e-6, "a = {}", fit.a);
        assert!((fit.b - 1.0).abs() < 1e-6, "b = {}", fit.b);
        assert!((fit.eps0 - std::f64::consts::LN_2).abs() < 1e-6, "eps0 = {}", fit.eps0);
        assert!(fit.residual < 1e-8);
    }

    #[test]
    fn xi_fit_round_trip_off_nominal_parameters() {
        let t_l = 0.8;
        let temps = temps_for(&[4, 6, 8], t_l);
        let truth = (1.2, 0.8, 0.5);
        let mut data = Vec::new();
        for &n in &[4u32, 6, 8] {
            for k in 1..=5 {
                let t = -0.05 * k as f64;
                let temp = t_l * (1.0 + t);
                let logxi = xi_model(truth.0, truth.1, truth.2, n as f64, t);
                data.push((n, temp, logxi.exp()));
            }
        }
        let fit = fit_xi_scaling(&data, &temps).unwrap();
        assert!((fit.a - truth.0).abs() < 1e-5);
        assert!((fit.b - truth.1).abs() < 1e-5);
        assert!((fit.eps0 - truth.2).abs() < 1e-5);
    }

    #[test]
    fn xi_fit_rejects_single_n() {
        let temps = temps_for(&[6], 0.9);
        let data: Vec<(u32, f64, f64)> = (1..=5)
            .map(|k| (6, 0.9 * (1.0 - 0.04 * k as f64), 10.0 + k as f64))
            .collect();
        assert!(matches!(
            fit_xi_scaling(&data, &temps),
            Err(FdsError::InvalidParams(_))
        ));
    }

    #[test]
    fn xi_fit_rejects_positive_t() {
        let temps = temps_for(&[6, 7], 0.9);
        let data = vec![(6, 1.0, 5.0), (7, 0.8, 5.0)];
        assert!(fit_xi_scaling(&data, &temps).is_err());
    }

    #[test]
    fn xi_fit_missing_temperature_names_n() {
        let temps = temps_for(&[6], 0.9);
        let data = vec![(6, 0.8, 5.0), (7, 0.8, 5.0)];
        assert!(matches!(
            fit_xi_scaling(&data, &temps),
            Err(FdsError::MissingCriticalTemp(7))
        ));
    }

    #[test]
    fn collapse_score_single_curve() {
        let pts: Vec<(f64, f64)> = (0..400)
            .map(|i| {
                let x = i as f64 / 100.0;
                (x, (-x).exp())
            })
            .collect();
        let s = collapse_score(&pts).unwrap();
        // dense single curve: small but nonzero within-bin spread
        assert!(s < 5e-3, "score {s}");
    }

    #[test]
    fn collapse_score_identical_points_per_x() {
        // two exactly overlapping curves
        let mut pts = Vec::new();
        for i in 0..100 {
            let x = i as f64 / 25.0;
            pts.push((x, x.sin()));
            pts.push((x, x.sin()));
        }
        let s = collapse_score(&pts).unwrap();
        // floor set by curve curvature within bins, not by scatter
        assert!(s < 1e-4, "score {s}");
    }

    #[test]
    fn collapse_score_two_points_is_one() {
        let s = collapse_score(&[(0.0, 1.0), (1.0, 2.0)]).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn collapse_score_two_offset_curves() {
        // vertical offset dy between two flat curves: every bin mixes both,
        // so each bin variance is (dy/2)^2 and the score is about
        // (dy/2)^2 / var_total
        let dy = 0.6;
        let mut pts = Vec::new();
        for i in 0..512 {
            let x = i as f64;
            pts.push((x, 1.0));
            pts.push((x, 1.0 + dy));
        }
        let s = collapse_score(&pts).unwrap();
        let var_total = (dy / 2.0) * (dy / 2.0);
        assert!((s - (dy / 2.0).powi(2) / var_total).abs() < 1e-12);
    }

    #[test]
    fn collapse_score_invariant_under_affine_y() {
        let pts: Vec<(f64, f64)> = (0..90)
            .map(|i| (i as f64 * 0.1, (i as f64 * 0.07).cos() + 0.2 * ((i % 3) as f64)))
            .collect();
        let s1 = collapse_score(&pts).unwrap();
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, 5.0 * y - 3.0)).collect();
        let s2 = collapse_score(&shifted).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn ansatz_collapse_synthetic_exponential() {
        // O(N, t) = e^{-x} N^{(3/2) Delta} with constant Delta: exact collapse
        let t_l = 1.0;
        let temps = temps_for(&[4, 6, 8, 10], t_l);
        let delta = 0.25;
        let mut data = Vec::new();
        for &n in &[4u32, 6, 8, 10] {
            for k in 1..=12 {
                let t = -0.02 * k as f64;
                let x = t.abs() / (n as f64 * delta * delta);
                let o = (-x).exp() * (n as f64).powf(1.5 * delta);
                data.push((n, t_l * (1.0 + t), o));
            }
        }
        let r = collapse_ansatz_n(&data, &temps, |_| delta).unwrap();
        // exact collapse: only the in-bin curvature floor remains
        assert!(r.score < 1e-3, "score {}", r.score);
        assert_eq!(r.delta_used.len(), 4);
    }

    #[test]
    fn ansatz_collapse_beats_unrescaled_on_n_dependent_data() {
        let t_l = 1.0;
        let ns = [4u32, 6, 8, 10];
        let temps = temps_for(&ns, t_l);
        let delta = |n: u32| 2.0 / (n as f64 * n as f64);
        let mut data = Vec::new();
        for &n in &ns {
            let d = delta(n);
            for k in 1..=12 {
                let t = -0.02 * k as f64;
                let x = t.abs() / (n as f64 * d * d);
                let o = (-x).exp() * (n as f64).powf(1.5 * d);
                data.push((n, t_l * (1.0 + t), o));
            }
        }
        let rescaled = collapse_ansatz_n(&data, &temps, delta).unwrap();
        let raw: Vec<(f64, f64)> = data.iter().map(|&(_, temp, o)| (temp, o)).collect();
        let raw_score = collapse_score(&raw).unwrap();
        assert!(
            rescaled.score * 5.0 < raw_score,
            "rescaled {} vs raw {raw_score}",
            rescaled.score
        );
    }

    #[test]
    fn kappa_round_trip() {
        // xi = A(T) chi^1.247
        let amp = |temp: f64| 2.0 + (temp - 0.8) * 3.0;
        let mut recs = Vec::new();
        for &n in &[6u32, 7, 8] {
            for &chi in &[40u32, 64, 96, 128] {
                for k in 0..6 {
                    let temp = 0.8 + 0.01 * k as f64;
                    let xi = amp(temp) * (chi as f64).powf(1.247);
                    recs.push(point(n, temp, chi, 0.1, xi));
                }
            }
        }
        let (kappa, result) = collapse_kappa(&recs).unwrap();
        assert!((kappa - 1.247).abs() < 1e-3, "kappa {kappa}");
        assert!(result.score < 1e-10, "score {}", result.score);
    }

    #[test]
    fn kappa_grouping_agrees_on_n_independent_data() {
        // genuine chi-dependent scatter, identical for every N: grouping by N
        // must not change the verdict
        let mut recs = Vec::new();
        for &n in &[6u32, 7, 8] {
            for &chi in &[40u32, 64, 96] {
                for k in 0..24 {
                    let temp = 0.8 + 0.004 * k as f64;
                    let xi = (1.0 + temp)
                        * (chi as f64).powf(1.25)
                        * (1.0 + 0.05 * (chi as f64).sin());
                    recs.push(point(n, temp, chi, 0.1, xi));
                }
            }
        }
        let (grouped, pooled) = kappa_grouping_scores(&recs, 1.25).unwrap();
        let rel = (grouped - pooled).abs() / pooled.max(1e-300);
        assert!(rel < 0.2, "grouped {grouped} vs pooled {pooled}");
    }

    #[test]
    fn crossover_collapse_synthetic() {
        // build records satisfying y = g[x] with g[x] = 1 + x^2 exactly
        let t_l = 0.9;
        let ns = [6u32, 7, 8];
        let temps = temps_for(&ns, t_l);
        let delta = |n: u32| 2.0 / (n as f64 * n as f64);
        let kappa = 1.247;
        let mut recs = Vec::new();
        for &n in &ns {
            let d = delta(n);
            let nf = n as f64;
            let xi0 = std::f64::consts::LN_2 / nf.powf(1.5);
            for &chi in &[60u32, 96, 144, 192] {
                let chik = (chi as f64).powf(kappa);
                for k in -6..=6 {
                    let t = 0.008 * k as f64;
                    let x = t / nf * (chik / xi0).ln().powi(2);
                    let y = 1.0 + x * x;
                    // invert y = O^{-1/Delta} / chi^kappa
                    let o = (y * chik).powf(-d);
                    recs.push(point(n, t_l * (1.0 + t), chi, o, 1.0));
                }
            }
        }
        let r = collapse_crossover(&recs, &temps, delta, kappa).unwrap();
        // exact collapse onto g(x) = 1 + x^2: curvature floor only
        assert!(r.score < 1e-3, "score {}", r.score);
    }

    #[test]
    fn estimate_t_l_round_trip() {
        let t_l = 0.9;
        let pts: Vec<(f64, f64)> = (1..=40)
            .map(|k| {
                let temp = 0.9 - 0.005 * k as f64;
                let t = (temp - t_l) / t_l;
                let logxi = xi_model(1.5, 1.0, std::f64::consts::LN_2, 6.0, t);
                (temp, logxi.exp())
            })
            .collect();
        let est = estimate_t_l(&pts, 0.85, 0.95).unwrap();
        assert!((est - t_l).abs() < 1e-3, "estimated {est}");
    }

    #[test]
    fn estimate_t_l_featureless_input_not_bracketed() {
        // pure exponential in T has no 1/sqrt(|t|) feature; the scan runs to
        // an edge of the candidate window
        let pts: Vec<(f64, f64)> = (1..=40)
            .map(|k| {
                let temp = 0.5 + 0.01 * k as f64;
                (temp, (3.0 - 2.0 * temp).exp())
            })
            .collect();
        assert!(matches!(
            estimate_t_l(&pts, 0.95, 1.2),
            Err(FdsError::NotBracketed)
        ));
    }

    #[test]
    fn solve3_and_invert3_consistency() {
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, -0.2], [0.5, -0.2, 2.0]];
        let inv = invert3(a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a[i][k] * inv[k][j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12);
            }
        }
    }
}
