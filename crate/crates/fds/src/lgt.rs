//! Z_N lattice gauge theory cross-checks.
//!
//! The dual plaquette-variable representation maps the gauge theory's
//! ground state onto clock-model Boltzmann weights, so every quantity here
//! has an independent closed-form or enumeration partner: single-site
//! frustration operators are provably positive semidefinite, the dual
//! Hamiltonian annihilates the Boltzmann state exactly, and the state norm
//! reproduces the clock partition function.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::eigh_dc;
use crate::{FdsError, Result};

/// Clock (diagonal phase) and shift operators on C^N. `shift` maps
/// |n> -> |n+1 mod N|.
pub fn clock_ops(n: usize) -> (Array2<Complex64>, Array2<Complex64>) {
    let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / n as f64);
    let mut z = Array2::zeros((n, n));
    let mut x = Array2::zeros((n, n));
    for k in 0..n {
        z[[k, k]] = omega.powu(k as u32);
        x[[(k + 1) % n, k]] = Complex64::new(1.0, 0.0);
    }
    (x, z)
}

/// Neighbor-phase sum for a single-site sector: four unit phases, one fixed
/// to 1 by the relative gauge, the remaining three indexed by ks in Z_N^3.
pub fn sector_phase_sum(n: usize, ks: [usize; 3]) -> Complex64 {
    let omega = |k: i64| {
        Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64)
    };
    Complex64::new(1.0, 0.0)
        + omega(ks[0] as i64)
        + omega((ks[0] + ks[1]) as i64)
        + omega(-(ks[2] as i64))
}

fn d_phase(n: usize) -> Complex64 {
    Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / n as f64)
}

/// Single-site frustration operator
///   Q = (1/2) sum_n [ f_n |n><n| - |n><n-1| - |n><n+1| ],
/// f_n = exp(-(beta/2) Re(c w^n d)) + exp(-(beta/2) Re(c w^n d*)),
/// d = 1 - w. Real symmetric; PSD for every complex neighbor sum c.
pub fn qtilde(n: usize, beta: f64, c: Complex64) -> Result<Array2<f64>> {
    if n < 2 {
        return Err(FdsError::InvalidParams(format!("n must be >= 2, got {n}")));
    }
    let d = d_phase(n);
    let mut q = Array2::zeros((n, n));
    for k in 0..n {
        let wk = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
        let f = (-(beta / 2.0) * (c * wk * d).re).exp()
            + (-(beta / 2.0) * (c * wk * d.conj()).re).exp();
        q[[k, k]] += 0.5 * f;
        q[[k, (k + n - 1) % n]] -= 0.5;
        q[[k, (k + 1) % n]] -= 0.5;
    }
    Ok(q)
}

/// Minimum eigenvalue of the (symmetrized) single-site operator in one
/// charge sector; >= 0 up to roundoff by the sum-of-squares identity.
pub fn sector_min_eigenvalue(n: usize, beta: f64, c: Complex64) -> Result<f64> {
    let q = qtilde(n, beta, c)?;
    let q = &(&q + &q.t()) * 0.5;
    let (vals, _) = eigh_dc(&q)?;
    Ok(vals[0])
}

/// Sum-of-squares factor: f_n = g_n + 1/g_{n-1} with
/// g_n = exp(-(beta/2) Re(c w^n d)).
pub fn g_factor(n: usize, beta: f64, c: Complex64, k: usize) -> f64 {
    let d = d_phase(n);
    let wk = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
    (-(beta / 2.0) * (c * wk * d).re).exp()
}

/// Verify positivity of `qtilde` two independent ways: the minimum
/// eigenvalue, and the sum-of-squares identity
///   <v|Q|v> = (1/2) sum_n ( sqrt(g_n) v_n - v_{n+1} / sqrt(g_n) )^2
/// on `samples` seeded random vectors. Returns (min eigenvalue, max
/// identity residual).
pub fn verify_psd_identity(
    n: usize,
    beta: f64,
    c: Complex64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let q = qtilde(n, beta, c)?;
    let (vals, _) = eigh_dc(&q)?;
    let min_eig = vals.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_res = 0.0f64;
    for _ in 0..samples {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += v[i] * q[[i, j]] * v[j];
            }
        }
        let mut sos = 0.0;
        for k in 0..n {
            let g = g_factor(n, beta, c, k);
            let term = g.sqrt() * v[k] - v[(k + 1) % n] / g.sqrt();
            sos += 0.5 * term * term;
        }
        let scale = quad.abs().max(sos.abs()).max(1.0);
        max_res = max_res.max((quad - sos).abs() / scale);
    }
    Ok((min_eig, max_res))
}

/// Square-torus dual lattice: one Z_N variable per plaquette, the first
/// fixed to 0 by the global shift symmetry.
#[derive(Debug, Clone, Copy)]
pub struct DualLattice {
    pub lx: usize,
    pub ly: usize,
    pub n: usize,
}

impl DualLattice {
    pub fn new(lx: usize, ly: usize, n: usize) -> Result<Self> {
        if lx < 2 || ly < 2 || n < 2 {
            return Err(FdsError::InvalidParams(format!(
                "dual lattice needs lx, ly, n >= 2; got {lx} x {ly}, n = {n}"
            )));
        }
        let lat = Self { lx, ly, n };
        let dim = (n as f64).powi((lx * ly - 1) as i32);
        if dim > 4e6 {
            return Err(FdsError::BudgetExceeded(format!(
                "dual state dimension {dim} (limit 4e6)"
            )));
        }
        Ok(lat)
    }

    pub fn plaquettes(&self) -> usize {
        self.lx * self.ly
    }

    /// dimension of the gauge-fixed state space, N^(P-1)
    pub fn state_dim(&self) -> usize {
        self.n.pow((self.plaquettes() - 1) as u32)
    }

    fn decode(&self, mut idx: usize, out: &mut [usize]) {
        out[0] = 0;
        for p in 1..self.plaquettes() {
            out[p] = idx % self.n;
            idx /= self.n;
        }
    }

    fn encode(&self, cfg: &[usize]) -> usize {
        // gauge: shift all variables so the first is 0
        let shift = cfg[0];
        let mut idx = 0usize;
        for p in (1..self.plaquettes()).rev() {
            idx = idx * self.n + (cfg[p] + self.n - shift) % self.n;
        }
        idx
    }

    fn neighbors(&self, p: usize) -> [usize; 4] {
        let (x, y) = (p % self.lx, p / self.lx);
        let xp = (x + 1) % self.lx;
        let xm = (x + self.lx - 1) % self.lx;
        let yp = (y + 1) % self.ly;
        let ym = (y + self.ly - 1) % self.ly;
        [y * self.lx + xp, y * self.lx + xm, yp * self.lx + x, ym * self.lx + x]
    }

    /// log of the dual Boltzmann amplitude at a plaquette configuration:
    /// (beta/2) sum over directed links (right, down) of cos(2 pi dn / N)
    fn log_amplitude(&self, beta: f64, cfg: &[usize]) -> f64 {
        let mut s = 0.0;
        for p in 0..self.plaquettes() {
            let (x, y) = (p % self.lx, p / self.lx);
            let right = y * self.lx + (x + 1) % self.lx;
            let down = ((y + 1) % self.ly) * self.lx + x;
            for q in [right, down] {
                let dn = (cfg[p] + self.n - cfg[q]) % self.n;
                s += (2.0 * std::f64::consts::PI * dn as f64 / self.n as f64).cos();
            }
        }
        beta / 2.0 * s
    }
}

/// Unnormalized ground-state vector: dual Boltzmann amplitudes over the
/// gauge-fixed configuration space.
pub fn build_ground_state(lat: &DualLattice, beta: f64) -> Vec<f64> {
    let dim = lat.state_dim();
    let mut cfg = vec![0usize; lat.plaquettes()];
    let mut psi = vec![0.0; dim];
    for (idx, slot) in psi.iter_mut().enumerate() {
        lat.decode(idx, &mut cfg);
        *slot = lat.log_amplitude(beta, &cfg).exp();
    }
    psi
}

/// Matrix-free H = sum_p Q_p on the gauge-fixed dual space. Raising or
/// lowering the fixed plaquette is realized by shifting every other
/// variable the opposite way.
pub fn apply_hamiltonian(lat: &DualLattice, beta: f64, psi: &[f64]) -> Result<Vec<f64>> {
    let dim = lat.state_dim();
    if psi.len() != dim {
        return Err(FdsError::DimensionMismatch {
            expected: dim,
            got: psi.len(),
        });
    }
    let np = lat.plaquettes();
    let nn = lat.n;
    let d = d_phase(nn);
    let omega = |k: usize| {
        Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / nn as f64)
    };
    let mut out = vec![0.0; dim];
    let mut cfg = vec![0usize; np];
    let mut moved = vec![0usize; np];
    for idx in 0..dim {
        lat.decode(idx, &mut cfg);
        let amp = psi[idx];
        for p in 0..np {
            // diagonal: f depends on the four neighbor phase differences
            let mut c = Complex64::new(0.0, 0.0);
            for q in lat.neighbors(p) {
                c += omega((cfg[p] + nn - cfg[q]) % nn);
            }
            let f = (-(beta / 2.0) * (c * d).re).exp() + (-(beta / 2.0) * (c * d.conj()).re).exp();
            out[idx] += 0.5 * f * amp;
            // hopping: -(1/2) |n_p +- 1><n_p|
            for delta in [1usize, nn - 1] {
                moved.copy_from_slice(&cfg);
                moved[p] = (cfg[p] + delta) % nn;
                let to = lat.encode(&moved);
                out[to] -= 0.5 * amp;
            }
        }
    }
    Ok(out)
}

/// Dense Hamiltonian for small dual lattices.
pub fn hamiltonian_matrix(lat: &DualLattice, beta: f64) -> Result<Array2<f64>> {
    let dim = lat.state_dim();
    if dim > 4096 {
        return Err(FdsError::BudgetExceeded(format!(
            "dense Hamiltonian dimension {dim} (limit 4096)"
        )));
    }
    let mut h = Array2::zeros((dim, dim));
    let mut e = vec![0.0; dim];
    for col in 0..dim {
        e[col] = 1.0;
        let out = apply_hamiltonian(lat, beta, &e)?;
        for (row, &v) in out.iter().enumerate() {
            h[[row, col]] = v;
        }
        e[col] = 0.0;
    }
    Ok(h)
}

/// Smallest eigenvalue of the dense Hamiltonian.
pub fn ground_energy(lat: &DualLattice, beta: f64) -> Result<f64> {
    let h = hamiltonian_matrix(lat, beta)?;
    let h = &(&h + &h.t()) * 0.5;
    let (vals, _) = eigh_dc(&h)?;
    Ok(vals[0])
}

/// Relative norm of H applied to the dual Boltzmann state; zero when the
/// frustration operators annihilate it exactly.
pub fn annihilation_residual(lat: &DualLattice, beta: f64) -> Result<f64> {
    let psi = build_ground_state(lat, beta);
    let hpsi = apply_hamiltonian(lat, beta, &psi)?;
    let n2: f64 = psi.iter().map(|v| v * v).sum();
    let r2: f64 = hpsi.iter().map(|v| v * v).sum();
    Ok((r2 / n2).sqrt())
}

/// Relative deviation of N * |psi|^2 from the clock-model torus partition
/// function on the same lattice (computed by independent enumeration).
pub fn partition_equivalence(lat: &DualLattice, beta: f64) -> Result<f64> {
    // log sum of |amplitude|^2, streamed in log space
    let mut cfg = vec![0usize; lat.plaquettes()];
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0f64;
    for idx in 0..lat.state_dim() {
        lat.decode(idx, &mut cfg);
        let log_a2 = 2.0 * lat.log_amplitude(beta, &cfg);
        if log_a2 > max {
            sum = sum * (max - log_a2).exp() + 1.0;
            max = log_a2;
        } else {
            sum += (log_a2 - max).exp();
        }
    }
    let lhs = (lat.n as f64).ln() + max + sum.ln();
    let spec = crate::oracle::LatticeSpec {
        lx: lat.lx,
        ly: lat.ly,
        boundary: crate::oracle::Boundary::Torus,
        n: lat.n,
        beta,
        h: 0.0,
    };
    let rhs = crate::oracle::brute_force_z(&spec)?;
    Ok((lhs - rhs).abs() / rhs.abs().max(1.0))
}

/// Explicit link-space state of the gauge theory on an lx x ly torus and
/// the Gauss operators acting on it.
pub struct LinkSpace {
    pub lx: usize,
    pub ly: usize,
    pub n: usize,
}

impl LinkSpace {
    pub fn new(lx: usize, ly: usize, n: usize) -> Result<Self> {
        if lx < 2 || ly < 2 || n < 2 {
            return Err(FdsError::InvalidParams(format!(
                "link space needs lx, ly, n >= 2; got {lx} x {ly}, n = {n}"
            )));
        }
        let links = 2 * lx * ly;
        let dim = (n as f64).powi(links as i32);
        if dim > 1.0e6 {
            return Err(FdsError::BudgetExceeded(format!(
                "link space dimension {dim} (limit 1e6)"
            )));
        }
        Ok(Self { lx, ly, n })
    }

    pub fn links(&self) -> usize {
        2 * self.lx * self.ly
    }

    pub fn dim(&self) -> usize {
        self.n.pow(self.links() as u32)
    }

    /// link index: horizontal link out of vertex (x, y) is 2*(y*lx+x),
    /// vertical link is 2*(y*lx+x)+1
    fn h_link(&self, x: usize, y: usize) -> usize {
        2 * (y * self.lx + x)
    }

    fn v_link(&self, x: usize, y: usize) -> usize {
        2 * (y * self.lx + x) + 1
    }

    fn decode(&self, mut idx: usize, out: &mut [usize]) {
        for slot in out.iter_mut() {
            *slot = idx % self.n;
            idx /= self.n;
        }
    }

    /// plaquette flux at lower-left vertex (x, y): oriented boundary sum
    fn plaquette_flux(&self, cfg: &[usize], x: usize, y: usize) -> usize {
        let xp = (x + 1) % self.lx;
        let yp = (y + 1) % self.ly;
        let s = cfg[self.h_link(x, y)] + cfg[self.v_link(xp, y)] + 2 * self.n
            - cfg[self.h_link(x, yp)]
            - cfg[self.v_link(x, y)];
        s % self.n
    }

    /// Ground-state amplitudes on the full link space: product of plaquette
    /// Boltzmann factors (zero net electric field sector).
    pub fn ground_state(&self, beta: f64) -> Vec<f64> {
        let dim = self.dim();
        let mut cfg = vec![0usize; self.links()];
        let mut psi = vec![0.0; dim];
        for (idx, slot) in psi.iter_mut().enumerate() {
            self.decode(idx, &mut cfg);
            let mut s = 0.0;
            for y in 0..self.ly {
                for x in 0..self.lx {
                    let flux = self.plaquette_flux(&cfg, x, y);
                    s += (2.0 * std::f64::consts::PI * flux as f64 / self.n as f64).cos();
                }
            }
            *slot = (beta / 2.0 * s).exp();
        }
        psi
    }

    /// Apply the Gauss operator at vertex (x, y): the monomial permutation
    /// raising outgoing links and lowering incoming ones.
    pub fn apply_gauss(&self, psi: &[f64], x: usize, y: usize) -> Result<Vec<f64>> {
        let dim = self.dim();
        if psi.len() != dim {
            return Err(FdsError::DimensionMismatch {
                expected: dim,
                got: psi.len(),
            });
        }
        let xm = (x + self.lx - 1) % self.lx;
        let ym = (y + self.ly - 1) % self.ly;
        let raise = [self.h_link(x, y), self.v_link(x, y)];
        let lower = [self.h_link(xm, y), self.v_link(x, ym)];
        let mut out = vec![0.0; dim];
        let mut cfg = vec![0usize; self.links()];
        for (idx, &amp) in psi.iter().enumerate() {
            self.decode(idx, &mut cfg);
            for l in raise {
                cfg[l] = (cfg[l] + 1) % self.n;
            }
            for l in lower {
                cfg[l] = (cfg[l] + self.n - 1) % self.n;
            }
            let mut to = 0usize;
            for &v in cfg.iter().rev() {
                to = to * self.n + v;
            }
            out[to] += amp;
        }
        Ok(out)
    }

    /// Max relative deviation of G_v psi from psi over all vertices.
    pub fn gauss_law_residual(&self, beta: f64) -> Result<f64> {
        let psi = self.ground_state(beta);
        let norm = psi.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for y in 0..self.ly {
            for x in 0..self.lx {
                let gpsi = self.apply_gauss(&psi, x, y)?;
                for (a, b) in gpsi.iter().zip(psi.iter()) {
                    worst = worst.max((a - b).abs() / norm);
                }
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_ops_algebra() {
        for n in 2..=6 {
            let (x, z) = clock_ops(n);
            let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / n as f64);
            let zx = z.dot(&x);
            let xz = x.dot(&z);
            let mut res = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    res = res.max((zx[[i, j]] - omega * xz[[i, j]]).norm());
                }
            }
            assert!(res < 1e-14, "ZX = wXZ residual {res} at N = {n}");
            // X^N = Z^N = 1
            let mut xp = Array2::eye(n);
            for _ in 0..n {
                xp = x.dot(&xp);
            }
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((xp[[i, j]] - want).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn qtilde_n2_trivial_sector() {
        let beta = 0.7;
        let c = sector_phase_sum(2, [0, 0, 0]);
        assert!((c - Complex64::new(4.0, 0.0)).norm() < 1e-15);
        let q = qtilde(2, beta, c).unwrap();
        assert!((q[[0, 0]] - (-4.0 * beta).exp()).abs() < 1e-14);
        assert!((q[[1, 1]] - (4.0 * beta).exp()).abs() < 1e-14);
        assert!((q[[0, 1]] + 1.0).abs() < 1e-15);
        assert!((q[[1, 0]] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn qtilde_is_psd_across_sectors() {
        for n in 2..=5usize {
            for beta in [0.1, 1.0, 4.0] {
                for k1 in 0..n {
                    for k2 in 0..n {
                        for k3 in 0..n {
                            let c = sector_phase_sum(n, [k1, k2, k3]);
                            let (min_eig, res) =
                                verify_psd_identity(n, beta, c, 20, 11).unwrap();
                            assert!(
                                min_eig >= -1e-12,
                                "N = {n}, beta = {beta}, ks = ({k1},{k2},{k3}): min eig {min_eig}"
                            );
                            assert!(res < 1e-12, "sum-of-squares residual {res}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn f_splits_into_g_terms() {
        let n = 7;
        let beta = 1.3;
        let c = sector_phase_sum(n, [2, 5, 3]);
        let q = qtilde(n, beta, c).unwrap();
        for k in 0..n {
            let f = 2.0 * q[[k, k]];
            let split = g_factor(n, beta, c, k) + 1.0 / g_factor(n, beta, c, (k + n - 1) % n);
            assert!((f - split).abs() < 1e-13 * f.abs().max(1.0));
        }
    }

    #[test]
    fn hamiltonian_annihilates_boltzmann_state() {
        for n in 2..=5usize {
            let lat = DualLattice::new(2, 2, n).unwrap();
            for beta in [0.3, 1.0] {
                let r = annihilation_residual(&lat, beta).unwrap();
                assert!(r < 1e-12, "N = {n}, beta = {beta}: residual {r}");
            }
        }
    }

    #[test]
    fn hamiltonian_annihilates_on_rectangular_torus() {
        let lat = DualLattice::new(3, 2, 3).unwrap();
        let r = annihilation_residual(&lat, 0.8).unwrap();
        assert!(r < 1e-12, "residual {r}");
    }

    #[test]
    fn ground_energy_is_zero_and_hamiltonian_symmetric() {
        let lat = DualLattice::new(2, 2, 3).unwrap();
        let beta = 0.6;
        let h = hamiltonian_matrix(&lat, beta).unwrap();
        let mut asym = 0.0f64;
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                asym = asym.max((h[[i, j]] - h[[j, i]]).abs());
            }
        }
        assert!(asym < 1e-12, "asymmetry {asym}");
        let e0 = ground_energy(&lat, beta).unwrap();
        assert!(e0.abs() < 1e-11, "ground energy {e0}");
        // and it is the bottom of a nonnegative spectrum
        let (vals, _) = eigh_dc(&h).unwrap();
        assert!(vals.iter().all(|&v| v > -1e-11));
    }

    #[test]
    fn partition_function_equivalence() {
        for n in [2usize, 3, 4] {
            let lat = DualLattice::new(2, 2, n).unwrap();
            let dev = partition_equivalence(&lat, 0.9).unwrap();
            assert!(dev < 1e-12, "N = {n}: deviation {dev}");
        }
        let lat = DualLattice::new(3, 3, 2).unwrap();
        let dev = partition_equivalence(&lat, 0.5).unwrap();
        assert!(dev < 1e-12, "3x3 deviation {dev}");
    }

    #[test]
    fn gauss_law_holds_on_link_space() {
        for n in [2usize, 3] {
            let ls = LinkSpace::new(2, 2, n).unwrap();
            let r = ls.gauss_law_residual(0.7).unwrap();
            assert!(r < 1e-13, "N = {n}: Gauss residual {r}");
        }
    }

    #[test]
    fn gauss_operator_is_a_permutation() {
        let ls = LinkSpace::new(2, 2, 2).unwrap();
        let dim = ls.dim();
        for idx in 0..dim {
            let mut e = vec![0.0; dim];
            e[idx] = 1.0;
            let g = ls.apply_gauss(&e, 1, 0).unwrap();
            let nonzero: Vec<usize> = g
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(nonzero.len(), 1);
            assert_eq!(g[nonzero[0]], 1.0);
        }
    }

    #[test]
    fn budget_guards() {
        assert!(DualLattice::new(4, 4, 12).is_err());
        assert!(LinkSpace::new(3, 3, 5).is_err());
    }
}
