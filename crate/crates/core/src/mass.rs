//! Mass-constrained cubic system: minimize
//! I(u,v) = ½∫(|∇u|² + |∇v|²) + ¼∫(u⁴ + v⁴) + (β/2)∫u²v²
//! over the manifold 𝒮 = { ∫u² = ∫v² = 1 }, by normalized gradient flow.
//! The constraint multipliers λ, μ are recovered a posteriori from the
//! converged state and certify stationarity of the discrete Euler–Lagrange
//! equations −Δu + u³ + βuv² = λu (and symmetrically for v).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_neg_laplacian, inner_w, integrate, norm_w, shifted_poisson_solve, Field, Grid};
use crate::polarize::{polarize, HalfSpace};

const MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct MassState {
    pub u: Field,
    pub v: Field,
}

impl MassState {
    pub fn masses(&self, grid: &Grid) -> Result<(f64, f64)> {
        let mu = norm_w(grid, &self.u)?.powi(2);
        let mv = norm_w(grid, &self.v)?.powi(2);
        Ok((mu, mv))
    }

    /// Checks 𝒮 membership: both masses within `MASS_TOL` of one.
    pub fn check_on_manifold(&self, grid: &Grid) -> Result<()> {
        let (mu, mv) = self.masses(grid)?;
        let worst = (mu - 1.0).abs().max((mv - 1.0).abs());
        if worst > MASS_TOL {
            return Err(Error::OffManifold(worst));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MultiplierPair {
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassSolveOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub tau: f64,
    pub max_halvings: usize,
}

impl Default for MassSolveOptions {
    fn default() -> Self {
        MassSolveOptions {
            tol: 1e-9,
            max_iterations: 20_000,
            tau: 0.1,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MassDiagnostics {
    pub i_energy: f64,
    pub masses: [f64; 2],
    pub tangential_residual: f64,
    pub stationarity_residuals: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MassPolarizationReport {
    pub masses_polarized: [f64; 2],
    pub mass_deviation: f64,
    pub i_original: f64,
    pub i_polarized: f64,
    pub energy_increase: f64,
    pub coupling_integral_deviation: f64,
}

pub fn i_energy(grid: &Grid, state: &MassState, beta: f64) -> Result<f64> {
    grid.check_field(&state.u)?;
    grid.check_field(&state.v)?;
    let lap_u = apply_neg_laplacian(grid, &state.u)?;
    let lap_v = apply_neg_laplacian(grid, &state.v)?;
    let dirichlet = inner_w(grid, &lap_u, &state.u)? + inner_w(grid, &lap_v, &state.v)?;
    let w = grid.weights();
    let u = state.u.values();
    let v = state.v.values();
    let mut quartic = 0.0;
    let mut cross = 0.0;
    for i in 0..u.len() {
        quartic += w[i] * (u[i].powi(4) + v[i].powi(4));
        cross += w[i] * u[i].powi(2) * v[i].powi(2);
    }
    Ok(0.5 * dirichlet + 0.25 * quartic + 0.5 * beta * cross)
}

/// Rescales both components to unit w-weighted L² mass.
pub fn project_mass(grid: &Grid, state: &MassState) -> Result<MassState> {
    let nu = norm_w(grid, &state.u)?;
    let nv = norm_w(grid, &state.v)?;
    if nu < 1e-14 || nv < 1e-14 {
        return Err(Error::DegenerateComponent(if nu < 1e-14 { 0 } else { 1 }));
    }
    Ok(MassState {
        u: state.u.scaled(1.0 / nu),
        v: state.v.scaled(1.0 / nv),
    })
}

/// Unconstrained I-gradient of one component: −Δu + u³ + β u v².
fn flow_gradient(grid: &Grid, own: &Field, other: &Field, beta: f64) -> Result<Field> {
    let mut g = apply_neg_laplacian(grid, own)?;
    let u = own.values();
    let v = other.values();
    let gv = g.values_mut();
    for i in 0..u.len() {
        gv[i] += u[i].powi(3) + beta * u[i] * v[i].powi(2);
    }
    Ok(g)
}

/// Tangential part of the I-gradient on 𝒮: g − ⟨g,u⟩_w u for a unit-mass u.
fn tangential(grid: &Grid, g: &Field, u: &Field) -> Result<Field> {
    let c = inner_w(grid, g, u)?;
    let mut t = g.clone();
    t.axpy(-c, u);
    Ok(t)
}

fn multipliers(grid: &Grid, state: &MassState, beta: f64) -> Result<MultiplierPair> {
    let lap_u = apply_neg_laplacian(grid, &state.u)?;
    let lap_v = apply_neg_laplacian(grid, &state.v)?;
    let w = grid.weights();
    let u = state.u.values();
    let v = state.v.values();
    let mut lambda = inner_w(grid, &lap_u, &state.u)?;
    let mut mu = inner_w(grid, &lap_v, &state.v)?;
    for i in 0..u.len() {
        let cross = beta * u[i].powi(2) * v[i].powi(2);
        lambda += w[i] * (u[i].powi(4) + cross);
        mu += w[i] * (v[i].powi(4) + cross);
    }
    Ok(MultiplierPair { lambda, mu })
}

/// Relative residual of −Δu − λu + u³ + βuv² for one component.
fn stationarity_residual(
    grid: &Grid,
    own: &Field,
    other: &Field,
    beta: f64,
    multiplier: f64,
) -> Result<f64> {
    let mut r = flow_gradient(grid, own, other, beta)?;
    r.axpy(-multiplier, own);
    Ok(norm_w(grid, &r)? / norm_w(grid, own)?.max(1e-30))
}

/// Normalized gradient flow for the ground state of I on 𝒮. Each outer step
/// preconditions the flow gradient with (−Δ + 1)⁻¹, descends with step
/// halving on energy increase, re-normalizes the masses and takes absolute
/// values; the flow stops when the tangential gradient norm drops below
/// tolerance.
pub fn solve_mass_ground_state(
    grid: &Grid,
    beta: f64,
    initial: &MassState,
    opts: &MassSolveOptions,
) -> Result<(MassState, MultiplierPair, MassDiagnostics)> {
    if beta < 0.0 {
        return Err(Error::Config("beta must be nonnegative".into()));
    }
    let one = grid.zero_field();
    let mut state = project_mass(grid, initial)?;
    state.u.abs_in_place();
    state.v.abs_in_place();
    let mut energy = i_energy(grid, &state, beta)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut tangential_residual = f64::INFINITY;

    while iterations < opts.max_iterations {
        iterations += 1;
        let gu = flow_gradient(grid, &state.u, &state.v, beta)?;
        let gv = flow_gradient(grid, &state.v, &state.u, beta)?;
        let tu = tangential(grid, &gu, &state.u)?;
        let tv = tangential(grid, &gv, &state.v)?;
        tangential_residual =
            (norm_w(grid, &tu)?.powi(2) + norm_w(grid, &tv)?.powi(2)).sqrt();
        if tangential_residual <= opts.tol {
            converged = true;
            break;
        }
        let du = shifted_poisson_solve(grid, 1.0, &one, 1.0, &tu)?;
        let dv = shifted_poisson_solve(grid, 1.0, &one, 1.0, &tv)?;

        let mut tau = opts.tau;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let mut trial = MassState {
                u: state.u.clone(),
                v: state.v.clone(),
            };
            trial.u.axpy(-tau, &du);
            trial.v.axpy(-tau, &dv);
            let mut trial = project_mass(grid, &trial)?;
            trial.u.abs_in_place();
            trial.v.abs_in_place();
            let trial_energy = i_energy(grid, &trial, beta)?;
            if trial_energy <= energy + 1e-12 * (1.0 + energy.abs()) {
                state = trial;
                energy = trial_energy;
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    if !converged {
        return Err(Error::NoConvergence(format!(
            "mass flow stalled after {iterations} iterations, tangential residual {tangential_residual:.3e}"
        )));
    }

    let pair = multipliers(grid, &state, beta)?;
    let res_u = stationarity_residual(grid, &state.u, &state.v, beta, pair.lambda)?;
    let res_v = stationarity_residual(grid, &state.v, &state.u, beta, pair.mu)?;
    let (mu_mass, mv_mass) = state.masses(grid)?;
    let diagnostics = MassDiagnostics {
        i_energy: energy,
        masses: [mu_mass, mv_mass],
        tangential_residual,
        stationarity_residuals: [res_u, res_v],
        iterations,
        converged,
    };
    Ok((state, pair, diagnostics))
}

/// Checks the polarization step of the constrained symmetry argument: for a
/// half-space H, the pair (u_H, v_Ĥ) stays on 𝒮 and cannot increase I; at a
/// minimizer the coupling integral ∫u²v² is preserved as well.
pub fn mass_polarization_check(
    grid: &Grid,
    state: &MassState,
    beta: f64,
    h: &HalfSpace,
) -> Result<MassPolarizationReport> {
    state.check_on_manifold(grid)?;
    let u_h = polarize(&state.u, h)?;
    let v_hc = polarize(&state.v, &h.complement())?;
    let pol = MassState { u: u_h, v: v_hc };

    let (mu_mass, mv_mass) = pol.masses(grid)?;
    let mass_deviation = (mu_mass - 1.0).abs().max((mv_mass - 1.0).abs());

    let i_original = i_energy(grid, state, beta)?;
    let i_polarized = i_energy(grid, &pol, beta)?;

    let coupling = |s: &MassState| -> Result<f64> {
        let sq: Vec<f64> = s
            .u
            .values()
            .iter()
            .zip(s.v.values())
            .map(|(a, b)| a.powi(2) * b.powi(2))
            .collect();
        integrate(grid, &grid.field_from_values(sq)?)
    };
    let coupling_integral_deviation = (coupling(&pol)? - coupling(state)?).abs();

    Ok(MassPolarizationReport {
        masses_polarized: [mu_mass, mv_mass],
        mass_deviation,
        i_original,
        i_polarized,
        energy_increase: i_polarized - i_original,
        coupling_integral_deviation,
    })
}
