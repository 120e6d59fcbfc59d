//! Sine-Gordon renormalization flow near the self-dual line.
//!
//! Flow variable is l = -ln(Lambda), so the couplings grow with l. In the
//! combined variables z1 = u + d, z2 = u - d the flow is
//!     dz1/dl = z1^2 + C,    dz2/dl = -z2 (z1 + z2),
//! with C = u^2 - d^2 = z1 z2 conserved... C is conserved only through the
//! product z1 z2; the closed-form solution z1(l) = sqrt(C) tan(sqrt(C) l + c1)
//! holds on the symmetric trajectory.

use serde::{Deserialize, Serialize};

use crate::{FdsError, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SgFlowParams {
    /// initial value of u (fugacity-like coupling)
    pub u0: f64,
    /// initial value of d (dual coupling)
    pub d0: f64,
    pub l_max: f64,
    pub dl: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub l: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

impl SgFlowParams {
    pub fn c_invariant(&self) -> f64 {
        self.u0 * self.u0 - self.d0 * self.d0
    }
}

/// RK4 integration of the (z1, z2) flow. Stops early (truncating the
/// trajectory) once |z1| exceeds `Z_CAP`, past which the flow has left the
/// perturbative regime and diverges in finite l.
pub fn integrate_flow(params: &SgFlowParams) -> Result<FlowTrajectory> {
    const Z_CAP: f64 = 1.0e6;
    if !(params.dl > 0.0) || !(params.l_max > 0.0) {
        return Err(FdsError::InvalidParams(
            "dl and l_max must be positive".into(),
        ));
    }
    let c = params.c_invariant();
    let deriv = |z: [f64; 2]| -> [f64; 2] { [z[0] * z[0] + c, -z[1] * (z[0] + z[1])] };
    let mut z = [params.u0 + params.d0, params.u0 - params.d0];
    let steps = (params.l_max / params.dl).round() as usize;
    let mut traj = FlowTrajectory {
        l: Vec::with_capacity(steps + 1),
        z1: Vec::with_capacity(steps + 1),
        z2: Vec::with_capacity(steps + 1),
    };
    traj.l.push(0.0);
    traj.z1.push(z[0]);
    traj.z2.push(z[1]);
    let h = params.dl;
    for step in 1..=steps {
        let k1 = deriv(z);
        let k2 = deriv([z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]]);
        let k3 = deriv([z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]]);
        let k4 = deriv([z[0] + h * k3[0], z[1] + h * k3[1]]);
        z[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        z[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        if !z[0].is_finite() || !z[1].is_finite() || z[0].abs() > Z_CAP {
            break;
        }
        traj.l.push(step as f64 * h);
        traj.z1.push(z[0]);
        traj.z2.push(z[1]);
    }
    Ok(traj)
}

/// Integration constant of the tan solution from the initial condition
/// z1(0) = eps, small-coupling form.
pub fn c1_small_coupling(eps: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(FdsError::Domain("c1 requires C > 0".into()));
    }
    Ok((eps / c.sqrt()).atan())
}

/// Exact integration constant when the trajectory starts on the symmetric
/// line with z1(0) = eps and C from the full quadratic relation.
pub fn c1_exact(eps: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(FdsError::Domain("c1 requires C > 0".into()));
    }
    let disc = eps * eps - c;
    if disc < 0.0 {
        return c1_small_coupling(eps, c);
    }
    Ok(((eps + disc.sqrt()) / c.sqrt()).atan())
}

/// Closed-form z1(l) = sqrt(C) tan(sqrt(C) l + c1) for C > 0.
pub fn analytic_z1(l: f64, c: f64, c1: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(FdsError::Domain("analytic z1 requires C > 0".into()));
    }
    let s = c.sqrt();
    Ok(s * (s * l + c1).tan())
}

/// Scale l* at which z1 reaches the strong-coupling value
/// (1 + sqrt(1 - C)) / sqrt(C) of the tan argument:
/// l* = (arctan[(1 + sqrt(1 - C)) / sqrt(C)] - c1) / sqrt(C).
pub fn l_star(c: f64, c1: f64) -> Result<f64> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(FdsError::Domain("l_star requires 0 < C <= 1".into()));
    }
    let s = c.sqrt();
    Ok((((1.0 + (1.0 - c).sqrt()) / s).atan() - c1) / s)
}

/// Leading asymptotic l* ~ pi / (4 sqrt(C)) as C -> 0+ along near-critical
/// trajectories, where c1 = arctan(eps/sqrt(C)) -> pi/4.
pub fn l_star_asymptotic(c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(FdsError::Domain("l_star_asymptotic requires C > 0".into()));
    }
    Ok(std::f64::consts::PI / (4.0 * c.sqrt()))
}

/// Correlation-length prediction near the transition at reduced temperature
/// t < 0 for the N-state model: ln xi = ln(ln 2) - 1.5 ln N + (pi/4) /
/// sqrt(|t| / N).
pub fn xi_prediction(n: u32, t: f64) -> Result<f64> {
    if n < 2 {
        return Err(FdsError::InvalidParams(format!("n must be >= 2, got {n}")));
    }
    if !(t < 0.0) {
        return Err(FdsError::Domain(
            "xi prediction applies below the transition (t < 0)".into(),
        ));
    }
    let nf = n as f64;
    Ok(std::f64::consts::LN_2.ln() - 1.5 * nf.ln()
        + std::f64::consts::FRAC_PI_4 / ((-t) / nf).sqrt())
}
