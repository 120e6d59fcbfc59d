//! Independent ground-truth generators: brute-force enumeration, strip
//! transfer matrices and Ising closed forms. Deliberately shares no
//! contraction code with the tensor modules.

use std::f64::consts::PI;

use crate::{FdsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Torus,
    Open,
}

#[derive(Debug, Clone, Copy)]
pub struct LatticeSpec {
    pub lx: usize,
    pub ly: usize,
    pub boundary: Boundary,
    pub n: usize,
    pub beta: f64,
    pub h: f64,
}

impl LatticeSpec {
    fn config_count(&self) -> Result<usize> {
        let sites = self.lx * self.ly;
        let count = (self.n as f64).powi(sites as i32);
        if count > 1e8 {
            return Err(FdsError::BudgetExceeded(format!(
                "{count} configurations (limit 1e8)"
            )));
        }
        Ok(self.n.pow(sites as u32))
    }

    /// Nearest-neighbor bonds as site-index pairs; on the torus every site
    /// emits a right and a down bond (L = 2 then yields doubled bonds, which
    /// is the convention shared with the tensor construction).
    fn bonds(&self) -> Vec<(usize, usize)> {
        let mut bonds = Vec::new();
        for y in 0..self.ly {
            for x in 0..self.lx {
                let s = y * self.lx + x;
                match self.boundary {
                    Boundary::Torus => {
                        bonds.push((s, y * self.lx + (x + 1) % self.lx));
                        bonds.push((s, ((y + 1) % self.ly) * self.lx + x));
                    }
                    Boundary::Open => {
                        if x + 1 < self.lx {
                            bonds.push((s, y * self.lx + x + 1));
                        }
                        if y + 1 < self.ly {
                            bonds.push((s, (y + 1) * self.lx + x));
                        }
                    }
                }
            }
        }
        bonds
    }
}

struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
    fn add(&mut self, log_term: f64, weight: f64) {
        if log_term > self.max {
            self.sum = self.sum * (self.max - log_term).exp() + weight;
            self.max = log_term;
        } else {
            self.sum += weight * (log_term - self.max).exp();
        }
    }
    fn log(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

fn for_each_config(
    spec: &LatticeSpec,
    mut f: impl FnMut(&[usize], f64),
) -> Result<()> {
    let total = spec.config_count()?;
    let sites = spec.lx * spec.ly;
    let n = spec.n;
    let bonds = spec.bonds();
    let cos_table: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| (2.0 * PI * (a as f64 - b as f64) / n as f64).cos())
                .collect()
        })
        .collect();
    let site_cos: Vec<f64> = (0..n).map(|a| (2.0 * PI * a as f64 / n as f64).cos()).collect();
    let mut cfg = vec![0usize; sites];
    for flat in 0..total {
        if flat > 0 {
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
        let mut log_w = 0.0;
        for &(a, b) in &bonds {
            log_w += spec.beta * cos_table[cfg[a]][cfg[b]];
        }
        for &s in &cfg {
            log_w += spec.beta * spec.h * site_cos[s];
        }
        f(&cfg, log_w);
    }
    Ok(())
}

/// Exact log Z by enumeration over all N^(Lx*Ly) configurations.
pub fn brute_force_z(spec: &LatticeSpec) -> Result<f64> {
    let mut lse = LogSumExp::new();
    for_each_config(spec, |_, log_w| lse.add(log_w, 1.0))?;
    Ok(lse.log())
}

/// Exact <weight(n at site 0)> under the Boltzmann measure.
pub fn brute_force_observable(
    spec: &LatticeSpec,
    weight: impl Fn(usize) -> f64,
) -> Result<f64> {
    let mut num = LogSumExp::new();
    let mut den = LogSumExp::new();
    // split the weighted sum by sign to keep log-sum-exp applicable
    let mut neg = LogSumExp::new();
    for_each_config(spec, |cfg, log_w| {
        den.add(log_w, 1.0);
        let w = weight(cfg[0]);
        if w > 0.0 {
            num.add(log_w + w.ln(), 1.0);
        } else if w < 0.0 {
            neg.add(log_w + (-w).ln(), 1.0);
        }
    })?;
    let d = den.log();
    let pos = if num.sum > 0.0 { (num.log() - d).exp() } else { 0.0 };
    let min = if neg.sum > 0.0 { (neg.log() - d).exp() } else { 0.0 };
    Ok(pos - min)
}

/// Free energy per site of an infinite strip of width `l` (periodic in both
/// directions across the width), from the leading transfer-matrix
/// eigenvalue: f_L = -T ln(lambda_max) / L.
///
/// The row-to-row transfer matrix is the symmetric form D^{1/2} K D^{1/2}
/// with D the intra-row Boltzmann factor and K the product of per-column
/// bond matrices; lambda_max comes from a matrix-free power iteration.
pub fn strip_transfer_f(n: usize, beta: f64, l: usize) -> Result<f64> {
    let dim_f = (n as f64).powi(l as i32);
    if dim_f > 20_000.0 {
        return Err(FdsError::BudgetExceeded(format!(
            "strip dimension {dim_f} exceeds 20000"
        )));
    }
    let dim = n.pow(l as u32);
    let nf = n as f64;
    let w: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (a, b) = (idx / n, idx % n);
            (beta * (2.0 * PI * (a as f64 - b as f64) / nf).cos()).exp()
        })
        .collect();
    // half intra-row weights: sqrt(D)[cfg]
    let mut half_d = vec![0.0f64; dim];
    for cfg_idx in 0..dim {
        let mut rest = cfg_idx;
        let mut spins = vec![0usize; l];
        for s in (0..l).rev() {
            spins[s] = rest % n;
            rest /= n;
        }
        let mut e = 0.0;
        if l == 1 {
            e += 1.0; // periodic width-1 ring closes on itself: cos(0)
        } else {
            for i in 0..l {
                let j = (i + 1) % l;
                e += (2.0 * PI * (spins[i] as f64 - spins[j] as f64) / nf).cos();
            }
        }
        half_d[cfg_idx] = (beta * e / 2.0).exp();
    }
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut x: Vec<f64> = v.iter().zip(&half_d).map(|(a, b)| a * b).collect();
        // apply K = kron of W over the l columns
        let mut stride = dim / n;
        for _site in 0..l {
            let mut y = vec![0.0f64; dim];
            for outer in 0..dim / (n * stride) {
                for inner in 0..stride {
                    let base = outer * n * stride + inner;
                    for a in 0..n {
                        let mut acc = 0.0;
                        for b in 0..n {
                            acc += w[a * n + b] * x[base + b * stride];
                        }
                        y[base + a * stride] = acc;
                    }
                }
            }
            x = y;
            stride /= n;
        }
        x.iter_mut().zip(&half_d).for_each(|(a, b)| *a *= *b);
        x
    };
    // power iteration from a uniform positive vector; the matrix is
    // elementwise positive so Perron-Frobenius applies.
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut lambda_log = 0.0f64;
    let mut prev = f64::NAN;
    for _ in 0..200_000 {
        let x = apply(&v);
        let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !norm.is_finite() || norm <= 0.0 {
            return Err(FdsError::NonFinite("strip power iteration"));
        }
        lambda_log = norm.ln();
        v = x.iter().map(|a| a / norm).collect();
        if (lambda_log - prev).abs() < 1e-14 * lambda_log.abs().max(1.0) {
            break;
        }
        prev = lambda_log;
    }
    Ok(-(1.0 / beta) * lambda_log / l as f64)
}

/// Extrapolates strip free energies to infinite width. Off criticality the
/// finite-width error of a periodic strip decays geometrically in L, so an
/// Aitken delta-squared step on the last three widths removes the leading
/// exponential correction; widths must be given in increasing order.
pub fn strip_extrapolate_f(n: usize, beta: f64, widths: &[usize]) -> Result<f64> {
    if widths.len() < 3 {
        return Err(FdsError::TooFewPoints {
            needed: 3,
            got: widths.len(),
        });
    }
    if widths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FdsError::InvalidParams(
            "strip widths must be strictly increasing".into(),
        ));
    }
    let fs: Vec<f64> = widths
        .iter()
        .map(|&l| strip_transfer_f(n, beta, l))
        .collect::<Result<_>>()?;
    let k = fs.len();
    let (f1, f2, f3) = (fs[k - 3], fs[k - 2], fs[k - 1]);
    let (d1, d2) = (f2 - f1, f3 - f2);
    let denom = d2 - d1;
    if denom.abs() < 1e-300 * d1.abs().max(1.0) {
        // already converged within the sequence
        return Ok(f3);
    }
    let f_inf = f3 - d2 * d2 / denom;
    if !f_inf.is_finite() {
        return Err(FdsError::NonFinite("strip extrapolation"));
    }
    Ok(f_inf)
}

/// Onsager spontaneous magnetization of the square-lattice Ising model with
/// J = 1 (the N = 2 clock model): (1 - sinh(2 beta)^{-4})^{1/8} above
/// beta_c = ln(1 + sqrt 2)/2, zero below.
pub fn ising_exact_magnetization(beta: f64) -> f64 {
    let beta_c = (1.0 + 2.0f64.sqrt()).ln() / 2.0;
    if beta <= beta_c {
        return 0.0;
    }
    let s = (2.0 * beta).sinh();
    (1.0 - s.powi(-4)).powf(0.125)
}

/// Onsager free energy per site of the square-lattice Ising model (J = 1):
/// -beta f = ln 2 + (1/8pi^2) \int\int ln[cosh^2(2b) - sinh(2b)(cos q1 + cos q2)].
/// The periodic integrand makes the trapezoid rule spectrally accurate away
/// from criticality.
pub fn onsager_free_energy(beta: f64) -> f64 {
    let m = 512usize;
    let ch = (2.0 * beta).cosh();
    let sh = (2.0 * beta).sinh();
    let mut acc = 0.0;
    for i in 0..m {
        let q1 = 2.0 * PI * i as f64 / m as f64;
        for j in 0..m {
            let q2 = 2.0 * PI * j as f64 / m as f64;
            acc += (ch * ch - sh * (q1.cos() + q2.cos())).ln();
        }
    }
    let integral = acc / (m * m) as f64; // already divided by (2pi)^2
    -(2.0f64.ln() + 0.5 * integral) / beta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_spin_chain_closed_form() {
        // N=2, 1x2 open chain: Z = 4 cosh(beta)
        for &beta in &[0.3, 0.7, 1.3] {
            let spec = LatticeSpec {
                lx: 2,
                ly: 1,
                boundary: Boundary::Open,
                n: 2,
                beta,
                h: 0.0,
            };
            let z = brute_force_z(&spec).unwrap();
            assert!((z - (4.0 * beta.cosh()).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_temperature_entropy() {
        let spec = LatticeSpec {
            lx: 3,
            ly: 2,
            boundary: Boundary::Torus,
            n: 3,
            beta: 1e-12,
            h: 0.0,
        };
        let z = brute_force_z(&spec).unwrap();
        assert!((z - 6.0 * 3.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn global_shift_invariance_on_torus() {
        // grouping configurations by global-shift orbits: Z is N times the
        // sum over orbit representatives (site 0 fixed to 0)
        let spec = LatticeSpec {
            lx: 2,
            ly: 2,
            boundary: Boundary::Torus,
            n: 4,
            beta: 0.6,
            h: 0.0,
        };
        let z = brute_force_z(&spec).unwrap();
        let mut lse = LogSumExp::new();
        for_each_config(&spec, |cfg, log_w| {
            if cfg[0] == 0 {
                lse.add(log_w, 1.0)
            }
        })
        .unwrap();
        assert!((z - (lse.log() + 4.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn observable_symmetry_and_identity() {
        let spec = LatticeSpec {
            lx: 2,
            ly: 2,
            boundary: Boundary::Torus,
            n: 3,
            beta: 0.5,
            h: 0.0,
        };
        let m = brute_force_observable(&spec, |s| (2.0 * PI * s as f64 / 3.0).cos()).unwrap();
        assert!(m.abs() < 1e-12);
        let one = brute_force_observable(&spec, |_| 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strip_reduces_to_1d_chain_at_width_one() {
        // width-1 periodic strip: f = -T (beta + ln sum_n e^{beta cos})
        for &(n, beta) in &[(2usize, 0.4f64), (5, 0.9)] {
            let f = strip_transfer_f(n, beta, 1).unwrap();
            let lam: f64 = (0..n)
                .map(|d| (beta * (2.0 * PI * d as f64 / n as f64).cos()).exp())
                .sum();
            let expect = -(1.0 / beta) * (beta + lam.ln());
            assert!((f - expect).abs() < 1e-10, "N={n} beta={beta}: {f} vs {expect}");
        }
    }

    #[test]
    fn strip_infinite_temperature() {
        for &l in &[2usize, 4] {
            // f -> -T ln N; with T = 1/beta enormous compare beta*f
            let f = strip_transfer_f(3, 1e-12, l).unwrap();
            assert!((-f * 1e-12 - 3.0f64.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn strip_converges_to_onsager() {
        let beta = 0.3;
        let exact = onsager_free_energy(beta);
        let f = strip_extrapolate_f(2, beta, &[8, 10, 12, 14]).unwrap();
        assert!(
            (f - exact).abs() < 1e-6,
            "strip {f} vs onsager {exact} (diff {:e})",
            (f - exact).abs()
        );
    }

    #[test]
    fn magnetization_closed_form_values() {
        assert!((ising_exact_magnetization(0.5) - 0.911319).abs() < 1e-6);
        assert!((ising_exact_magnetization(1.0) - 0.999275).abs() < 1e-6);
        assert_eq!(ising_exact_magnetization((1.0 + 2.0f64.sqrt()).ln() / 2.0), 0.0);
    }
}
