//! Ground-state solver: minimize `E` over the discrete Nehari set by
//! preconditioned projected descent with multiple starts.
//!
//! Each start alternates a backtracking descent step on `E`, componentwise
//! absolute value (which never raises `E`), and re-projection onto the
//! Nehari set. The stopping test uses the full energy gradient: at a
//! constrained minimizer the Lagrange multipliers vanish, so the full
//! gradient — and with it the discrete PDE residual — goes to zero.

use serde::{Deserialize, Serialize};

use crate::energy::{
    energy, energy_gradient, membership_in_m, nehari_diagnostics, project_to_nehari_with,
    scale_state, Membership, NehariDiagnostics, Problem, ProjectionOptions,
};
use crate::error::{Error, Result};
use crate::grid::{inner_w, norm_w, Grid, GridLayout, State};
use crate::model::PointEval;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Number of random starts in addition to the structured ones.
    pub start_count: usize,
    pub max_outer_iterations: usize,
    /// Relative gradient tolerance: stop when
    /// `||grad E||_w <= tol * max(1, ||u||_w)`.
    pub gradient_tol: f64,
    pub initial_step: f64,
    pub backtracking_factor: f64,
    pub armijo_constant: f64,
    pub seed: u64,
    pub preconditioned: bool,
}

impl Default for SolverOptions {
    fn default() -> SolverOptions {
        SolverOptions {
            start_count: 3,
            max_outer_iterations: 5000,
            gradient_tol: 1e-9,
            initial_step: 1.0,
            backtracking_factor: 0.5,
            armijo_constant: 1e-4,
            seed: 0,
            preconditioned: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tol > 0.0)
            || !(self.initial_step > 0.0)
            || !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0)
            || !(self.armijo_constant > 0.0)
        {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one start, kept for multiplicity inspection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StartRecord {
    pub start_index: usize,
    pub label: String,
    pub converged: bool,
    pub energy: Option<f64>,
    pub iterations: usize,
    pub failure: Option<String>,
}

/// A converged ground-state candidate with its certificates.
#[derive(Clone, Debug)]
pub struct Solution {
    pub state: State,
    pub energy_level: f64,
    pub nehari: NehariDiagnostics,
    pub multipliers: Vec<f64>,
    pub multiplier_fit_residual: f64,
    pub pde_residual: Vec<f64>,
    pub start_index: usize,
    pub iterations: usize,
    pub start_records: Vec<StartRecord>,
}

fn state_norm_w(grid: &Grid, u: &State) -> Result<f64> {
    let mut s = 0.0;
    for f in &u.components {
        let n = norm_w(grid, f)?;
        s += n * n;
    }
    Ok(s.sqrt())
}

fn state_inner_w(grid: &Grid, a: &State, b: &State) -> Result<f64> {
    let mut s = 0.0;
    for (fa, fb) in a.components.iter().zip(&b.components) {
        s += inner_w(grid, fa, fb)?;
    }
    Ok(s)
}

/// Precondition the gradient by `(c_i (-Lap) + max(V_i, 0) + 1)^{-1}`.
///
/// The descent loop tolerates a rough application (it only needs a descent
/// direction), hence the loose default. Krylov callers need `M` to act as
/// one consistent linear operator, so they request a tight tolerance.
fn precondition_with(problem: &Problem, g: &State, rel_tol: f64, max_iter: usize) -> Result<State> {
    let comps = (0..problem.k())
        .map(|i| {
            let mut vpos = problem.potentials[i].clone();
            for v in vpos.values_mut() {
                *v = v.max(0.0);
            }
            crate::grid::shifted_poisson_precondition(
                &problem.grid,
                problem.diffusion[i],
                &vpos,
                1.0,
                &g.components[i],
                rel_tol,
                max_iter,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(State::new(comps))
}

fn precondition(problem: &Problem, g: &State) -> Result<State> {
    precondition_with(problem, g, 1e-6, 200)
}

/// Structured and random nonnegative initial states.
///
/// The structured starts are a centered "radial" bump (identical in every
/// component) and a segregated one with components concentrated in
/// different angular sectors (halves in Cartesian coordinates); both are
/// exactly invariant under the grid reflection fixing the splitting axis.
fn build_starts(problem: &Problem, opts: &SolverOptions) -> Vec<(String, State)> {
    let grid = &problem.grid;
    let k = problem.k();
    let mut starts = Vec::new();

    let bump = |x: f64, y: f64| -> f64 {
        match grid.layout() {
            GridLayout::Line { n, h } => {
                let l = (*n as f64 + 1.0) * h;
                x * (l - x)
            }
            GridLayout::Rect { nx, ny, hx, hy } => {
                let lx = (*nx as f64 + 1.0) * hx;
                let ly = (*ny as f64 + 1.0) * hy;
                x * (lx - x) * y * (ly - y)
            }
            GridLayout::Polar {
                nr, dr, r_in, ..
            } => {
                let r_out = r_in + *nr as f64 * dr;
                let r = (x * x + y * y).sqrt();
                (r_out - r) * (r - r_in).max(0.0).max(if *r_in == 0.0 { r_out - r } else { 0.0 })
            }
        }
    };

    let centered = State::new(
        (0..k)
            .map(|_| grid.field_from_fn(|x, y| bump(x, y)))
            .collect(),
    );
    starts.push(("centered".to_string(), centered));

    // Segregated start: component i weighted toward direction 2 pi i / k
    // (polar) or interleaved coordinate slabs (Cartesian).
    let segregated = State::new(
        (0..k)
            .map(|i| match grid.layout() {
                GridLayout::Polar { .. } => {
                    let phase = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                    grid.field_from_fn(|x, y| {
                        let theta = y.atan2(x);
                        let ang = (1.0 + (theta - phase).cos()) / 2.0;
                        bump(x, y) * ang * ang * ang * ang
                    })
                }
                GridLayout::Line { n, h } => {
                    let l = (*n as f64 + 1.0) * h;
                    let lo = l * i as f64 / k as f64;
                    let hi = l * (i as f64 + 1.0) / k as f64;
                    grid.field_from_fn(move |x, y| {
                        let win = ((x - lo).max(0.0) * (hi - x).max(0.0)).powi(2);
                        bump(x, y) * win
                    })
                }
                GridLayout::Rect { nx, hx, .. } => {
                    let lx = (*nx as f64 + 1.0) * hx;
                    let lo = lx * i as f64 / k as f64;
                    let hi = lx * (i as f64 + 1.0) / k as f64;
                    grid.field_from_fn(move |x, y| {
                        let win = ((x - lo).max(0.0) * (hi - x).max(0.0)).powi(2);
                        bump(x, y) * win
                    })
                }
            })
            .collect(),
    );
    starts.push(("segregated".to_string(), segregated));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for s in 0..opts.start_count {
        let state = State::new(
            (0..k)
                .map(|_| {
                    // A couple of random Gaussian bumps on top of a floor.
                    let n_bumps = rng.gen_range(1..=3);
                    let centers: Vec<(f64, f64, f64, f64)> = (0..n_bumps)
                        .map(|_| {
                            let node = rng.gen_range(0..grid.len());
                            let (cx, cy) = grid.coords(node);
                            let width: f64 = rng.gen_range(0.05..0.4);
                            let height: f64 = rng.gen_range(0.5..1.5);
                            (cx, cy, width, height)
                        })
                        .collect();
                    grid.field_from_fn(|x, y| {
                        let mut v = 0.0;
                        for (cx, cy, w, h) in &centers {
                            let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                            v += h * (-d2 / (2.0 * w * w)).exp();
                        }
                        v * bump(x, y).max(0.0)
                    })
                })
                .collect(),
        );
        starts.push((format!("random-{s}"), state));
    }
    starts
}

/// Run a single start to convergence.
/// Apply the full energy Hessian at `u` to a direction `v`:
/// component `i` is `c_i (-L v_i) + V_i v_i - sum_j P_{u_i u_j}(u) v_j`,
/// with the pointwise Hessian entries precomputed in `hess` (row-major k×k
/// per node).
fn hessian_apply(problem: &Problem, hess: &[f64], v: &State) -> Result<State> {
    let k = problem.k();
    let n = problem.grid.len();
    let mut comps: Vec<crate::grid::Field> = (0..k)
        .map(|i| problem.apply_linear_operator(i, &v.components[i]))
        .collect::<Result<Vec<_>>>()?;
    for node in 0..n {
        let h = &hess[node * k * k..(node + 1) * k * k];
        for i in 0..k {
            let mut acc = 0.0;
            for j in 0..k {
                acc += h[i * k + j] * v.components[j].values()[node];
            }
            comps[i].values_mut()[node] -= acc;
        }
    }
    Ok(State::new(comps))
}

fn pointwise_hessian(problem: &Problem, u: &State) -> Vec<f64> {
    let k = problem.k();
    let n = problem.grid.len();
    let mut point = vec![0.0; k];
    let mut eval = crate::model::PointEval::new(k);
    let mut hess = vec![0.0; n * k * k];
    for node in 0..n {
        for i in 0..k {
            point[i] = u.components[i].values()[node];
        }
        problem.model.eval_into(&point, &mut eval);
        hess[node * k * k..(node + 1) * k * k].copy_from_slice(&eval.hess);
    }
    hess
}

/// Preconditioned CGNR solve of `H d = r` for the symmetric (generally
/// indefinite) energy Hessian: conjugate gradients on the normal equations
/// of the right-preconditioned system `(H M) y = r`, `d = M y`, in the
/// w-inner product, with `M` the (SPD) shifted-Poisson preconditioner.
/// `M ≈ H⁻¹` up to the bounded nonlinear part, so the preconditioned
/// operator is well conditioned and the squaring inherent in the normal
/// equations stays harmless. Returns the iterate at the residual tolerance
/// or the iteration cap, whichever comes first.
fn cgnr_solve(
    problem: &Problem,
    hess: &[f64],
    r: &State,
    rel_tol: f64,
    max_iter: usize,
) -> Result<State> {
    let grid = &problem.grid;
    let rnorm = state_norm_w(grid, r)?;
    let mut d = State::new(r.components.iter().map(|_| grid.zero_field()).collect());
    if rnorm == 0.0 {
        return Ok(d);
    }
    let mut res = r.clone();
    // z = Aᵀ res = M H res; p is the search direction in y-space,
    // mp = M p is accumulated into d so the tracked residual stays
    // consistent with the returned iterate.
    let mut z = precondition_with(problem, &hessian_apply(problem, hess, &res)?, 1e-10, 4000)?;
    let mut p = z.clone();
    let mut zz = state_inner_w(grid, &z, &z)?;
    // Stagnation guard: the residual norm decreases monotonically, so a
    // long stretch without meaningful progress means the iteration has hit
    // its round-off floor and further matrix applications are wasted.
    let mut best = rnorm;
    let mut since_progress = 0usize;
    for _ in 0..max_iter {
        let mp = precondition_with(problem, &p, 1e-10, 4000)?;
        let q = hessian_apply(problem, hess, &mp)?;
        let qq = state_inner_w(grid, &q, &q)?;
        if !(qq > 0.0) {
            break;
        }
        let alpha = zz / qq;
        for i in 0..d.components.len() {
            d.components[i].axpy(alpha, &mp.components[i]);
            res.components[i].axpy(-alpha, &q.components[i]);
        }
        let resnorm = state_norm_w(grid, &res)?;
        if resnorm <= rel_tol * rnorm {
            break;
        }
        if resnorm < 0.99 * best {
            best = resnorm;
            since_progress = 0;
        } else {
            since_progress += 1;
            if since_progress >= 60 {
                break;
            }
        }
        z = precondition_with(problem, &hessian_apply(problem, hess, &res)?, 1e-10, 4000)?;
        let zz_new = state_inner_w(grid, &z, &z)?;
        let beta = zz_new / zz;
        zz = zz_new;
        for i in 0..p.components.len() {
            let mut pn = z.components[i].clone();
            pn.axpy(beta, &p.components[i]);
            p.components[i] = pn;
        }
    }
    Ok(d)
}

/// Newton iteration on the full gradient system from a near-converged
/// state. Descent with the absolute-value fold stalls around relative
/// gradients of 1e-6 (the fold and the re-projection set a noise floor);
/// Newton pushes the residual to the requested tolerance quadratically.
/// Returns the improved state and its gradient norm; the input is returned
/// unchanged if a step fails to decrease the residual.
fn newton_polish(
    problem: &Problem,
    start: &State,
    tol: f64,
    max_newton: usize,
) -> Result<(State, f64)> {
    let grid = &problem.grid;
    let mut u = start.clone();
    let mut gnorm = state_norm_w(grid, &energy_gradient(problem, &u)?)?;
    for _ in 0..max_newton {
        let unorm = state_norm_w(grid, &u)?;
        if gnorm <= tol * unorm.max(1.0) {
            break;
        }
        let g = energy_gradient(problem, &u)?;
        let hess = pointwise_hessian(problem, &u);
        // Inexact Newton: a direction good to 1e-3 already cuts the
        // residual by that factor per step, so two or three cheap steps
        // reach any practical tolerance.
        let delta = cgnr_solve(problem, &hess, &g, 1e-3, 300)?;
        // Damped step: halve until the residual decreases. No absolute-value
        // fold here — the discrete ground state is strictly positive, and
        // folding the tiny plateau values the step passes through injects
        // O(1/h²)-amplified gradient noise that defeats the decrease test.
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..10 {
            let mut trial = u.clone();
            for i in 0..problem.k() {
                trial.components[i].axpy(-step, &delta.components[i]);
            }
            let trial_norm = state_norm_w(grid, &energy_gradient(problem, &trial)?)?;
            if trial_norm < gnorm {
                u = trial;
                gnorm = trial_norm;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((u, gnorm))
}

fn run_start(
    problem: &Problem,
    opts: &SolverOptions,
    initial: &State,
) -> Result<(State, f64, usize)> {
    let proj_opts = ProjectionOptions::default();
    let (_, mut u, _) = project_to_nehari_with(problem, initial, &proj_opts)?;
    let mut e = energy(problem, &u)?;
    // Descent drives the gradient into the Newton basin; the fold-and-
    // reproject loop has a noise floor around relative gradients of 1e-6,
    // so the last digits are left to a Newton polish on the full gradient
    // system.
    let coarse_tol = opts.gradient_tol.max(1e-5);
    // Newton polish alternated with the exact Nehari projection: the
    // polish drives the full gradient below tolerance and the projection
    // restores the manifold constraints to round-off (a scaling by
    // 1 + O(tol), which may nudge the gradient — hence the short loop).
    let polish = |u: State, iters: usize| -> Result<(State, f64, usize)> {
        let mut current = u;
        let mut last_rel = f64::INFINITY;
        for _ in 0..4 {
            let (polished, _) = newton_polish(problem, &current, opts.gradient_tol, 12)?;
            let (_, projected, diag) = project_to_nehari_with(problem, &polished, &proj_opts)?;
            let g = energy_gradient(problem, &projected)?;
            let gn = state_norm_w(&problem.grid, &g)?;
            let un = state_norm_w(&problem.grid, &projected)?;
            last_rel = gn / un.max(1.0);
            if gn <= opts.gradient_tol * un.max(1.0) {
                return Ok((projected, diag.energy, iters));
            }
            current = projected;
        }
        Err(Error::NoConvergence(format!(
            "Newton polish stalled at relative gradient {last_rel:.3e}"
        )))
    };
    let mut last_relg = f64::INFINITY;
    for iter in 0..opts.max_outer_iterations {
        let g = energy_gradient(problem, &u)?;
        let gnorm = state_norm_w(&problem.grid, &g)?;
        let unorm = state_norm_w(&problem.grid, &u)?;
        last_relg = gnorm / unorm.max(1.0);
        if gnorm <= opts.gradient_tol * unorm.max(1.0) {
            return Ok((u, e, iter));
        }
        if gnorm <= coarse_tol * unorm.max(1.0) {
            return polish(u, iter);
        }

        let d = if opts.preconditioned {
            precondition(problem, &g)?
        } else {
            g.clone()
        };
        let slope = state_inner_w(&problem.grid, &g, &d)?;
        if !(slope > 0.0) {
            return Err(Error::SolverFailure(
                "preconditioned direction is not a descent direction".into(),
            ));
        }

        let mut step = opts.initial_step;
        let mut advanced = false;
        for _ in 0..60 {
            let mut cand = u.clone();
            for i in 0..problem.k() {
                cand.components[i].axpy(-step, &d.components[i]);
            }
            cand.abs_in_place();
            match project_to_nehari_with(problem, &cand, &proj_opts) {
                Ok((_, next, diag)) => {
                    // Armijo decrease or — once the model decrease falls
                    // below the floating resolution of E — energy within
                    // round-off jitter and a strictly smaller gradient.
                    let armijo = diag.energy <= e - opts.armijo_constant * step * slope;
                    let accept = armijo
                        || (diag.energy <= e + 1e-12 * (1.0 + e.abs()) && {
                            let gn = energy_gradient(problem, &next)?;
                            state_norm_w(&problem.grid, &gn)? < gnorm
                        });
                    if accept {
                        u = next;
                        e = diag.energy;
                        advanced = true;
                        break;
                    }
                }
                Err(Error::ProjectionFailure { .. }) | Err(Error::DegenerateComponent(_)) => {}
                Err(other) => return Err(other),
            }
            step *= opts.backtracking_factor;
        }
        if !advanced {
            if gnorm <= 1e-3 * unorm.max(1.0) {
                return polish(u, iter);
            }
            return Err(Error::NoConvergence(format!(
                "line search stalled at iteration {iter} with relative gradient {:.3e}",
                gnorm / unorm.max(1.0)
            )));
        }
    }
    if last_relg <= 1e-3 {
        return polish(u, opts.max_outer_iterations);
    }
    Err(Error::NoConvergence(format!(
        "outer iteration cap {} reached",
        opts.max_outer_iterations
    )))
}

/// Multi-start minimization of `E` over the discrete Nehari set.
///
/// Returns the lowest-energy converged run (ties broken by start index),
/// with per-start energies kept in the solution for multiplicity
/// inspection. Fails only if every start fails.
pub fn solve_ground_state(problem: &Problem, opts: &SolverOptions) -> Result<Solution> {
    opts.validate()?;
    let starts = build_starts(problem, opts);
    let mut records = Vec::new();
    let mut best: Option<(usize, State, f64, usize)> = None;
    for (idx, (label, initial)) in starts.iter().enumerate() {
        match run_start(problem, opts, initial) {
            Ok((state, e, iters)) => {
                records.push(StartRecord {
                    start_index: idx,
                    label: label.clone(),
                    converged: true,
                    energy: Some(e),
                    iterations: iters,
                    failure: None,
                });
                let better = match &best {
                    None => true,
                    Some((_, _, be, _)) => e < *be - 1e-14 * be.abs(),
                };
                if better {
                    best = Some((idx, state, e, iters));
                }
            }
            Err(err) => {
                records.push(StartRecord {
                    start_index: idx,
                    label: label.clone(),
                    converged: false,
                    energy: None,
                    iterations: 0,
                    failure: Some(err.to_string()),
                });
            }
        }
    }
    let (start_index, state, energy_level, iterations) = best.ok_or_else(|| {
        Error::SolverFailure(format!(
            "all starts failed: {:?}",
            records
                .iter()
                .map(|r| r.failure.clone().unwrap_or_default())
                .collect::<Vec<_>>()
        ))
    })?;
    let nehari = nehari_diagnostics(problem, &state)?;
    let (multipliers, multiplier_fit_residual) = multiplier_residual(problem, &state)?;
    let pde_residual = discrete_pde_residual(problem, &state)?;
    Ok(Solution {
        state,
        energy_level,
        nehari,
        multipliers,
        multiplier_fit_residual,
        pde_residual,
        start_index,
        iterations,
        start_records: records,
    })
}

/// Gradient fields of the Nehari constraints: component `j` of `grad F_i` is
/// `delta_ij (2 (c_i (-Lap) + V_i) u_i - P_{u_i}(u)) - P_{u_i u_j}(u) u_i`.
fn constraint_gradients(problem: &Problem, u: &State) -> Result<Vec<State>> {
    problem.check_state(u)?;
    let k = problem.k();
    let n = problem.grid.len();
    let mut grads: Vec<State> = (0..k)
        .map(|_| State::new((0..k).map(|_| problem.grid.zero_field()).collect()))
        .collect();
    for i in 0..k {
        let li = problem.apply_linear_operator(i, &u.components[i])?;
        let gi = grads[i].components[i].values_mut();
        for (g, l) in gi.iter_mut().zip(li.values()) {
            *g = 2.0 * l;
        }
    }
    let mut point = vec![0.0; k];
    let mut eval = PointEval::new(k);
    for node in 0..n {
        for i in 0..k {
            point[i] = u.components[i].values()[node];
        }
        problem.model.eval_into(&point, &mut eval);
        for i in 0..k {
            grads[i].components[i].values_mut()[node] -= eval.grad[i];
            for j in 0..k {
                grads[i].components[j].values_mut()[node] -= eval.hess[i * k + j] * point[i];
            }
        }
    }
    Ok(grads)
}

/// Least-squares fit of `grad E(u)` against the span of the constraint
/// gradients in the w-inner product. At a true constrained minimizer both
/// the coefficients and the relative fit residual vanish (the paper's
/// multiplier argument).
pub fn multiplier_residual(problem: &Problem, u: &State) -> Result<(Vec<f64>, f64)> {
    let diag = nehari_diagnostics(problem, u)?;
    if !diag.on_manifold() {
        return Err(Error::OffManifold(diag.max_relative_residual()));
    }
    let k = problem.k();
    let ge = energy_gradient(problem, u)?;
    let gf = constraint_gradients(problem, u)?;
    let gram = nalgebra::DMatrix::from_fn(k, k, |a, b| {
        state_inner_w(&problem.grid, &gf[a], &gf[b]).unwrap()
    });
    let rhs = nalgebra::DVector::from_fn(k, |a, _| {
        state_inner_w(&problem.grid, &gf[a], &ge).unwrap()
    });
    let scale = gram.diagonal().iter().copied().fold(0.0, f64::max);
    let chol = gram
        .clone()
        .cholesky()
        .ok_or(Error::RankDeficient)?;
    // Guard against near-singular Gram matrices that Cholesky tolerates.
    if gram.determinant().abs() < 1e-14 * scale.powi(k as i32) {
        return Err(Error::RankDeficient);
    }
    let lambda = chol.solve(&rhs);
    let mut resid = ge;
    for a in 0..k {
        for j in 0..k {
            resid.components[j].axpy(-lambda[a], &gf[a].components[j]);
        }
    }
    let rnorm = state_norm_w(&problem.grid, &resid)?;
    let unorm = state_norm_w(&problem.grid, u)?;
    Ok((lambda.iter().copied().collect(), rnorm / unorm.max(1.0)))
}

/// Per-component PDE residual
/// `||c_i (-Lap u_i) + V_i u_i - P_{u_i}(u)||_w / max(1, ||u_i||_w)`.
pub fn discrete_pde_residual(problem: &Problem, u: &State) -> Result<Vec<f64>> {
    let g = energy_gradient(problem, u)?;
    (0..problem.k())
        .map(|i| {
            let gn = norm_w(&problem.grid, &g.components[i])?;
            let un = norm_w(&problem.grid, &u.components[i])?;
            Ok(gn / un.max(1.0))
        })
        .collect()
}

/// Post-hoc certificate report for a converged solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Minimum interior nodal value per component (positivity expected).
    pub interior_minima: Vec<f64>,
    pub positivity_ok: bool,
    pub lower_bound_slack: f64,
    pub norm_floors_ok: bool,
    pub hessian_max_eig: f64,
    pub hessian_certificate_ok: bool,
    pub membership: Membership,
}

/// Qualitative floor for the Lemma-style norm lower bound; the sharp
/// constant depends on an embedding constant that is not computable here.
pub const NORM_FLOOR_QUALITATIVE: f64 = 1e-6;

pub fn diagnostics_bundle(problem: &Problem, sol: &Solution) -> Result<DiagnosticsReport> {
    let interior_minima: Vec<f64> = sol
        .state
        .components
        .iter()
        .map(|f| f.values().iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let positivity_ok = interior_minima.iter().all(|m| *m > 0.0);
    let norm_floors_ok = sol
        .nehari
        .norms
        .iter()
        .all(|n| *n >= NORM_FLOOR_QUALITATIVE);
    let membership = membership_in_m(problem, &sol.state)?;
    Ok(DiagnosticsReport {
        interior_minima,
        positivity_ok,
        lower_bound_slack: sol.nehari.lower_bound_slack,
        norm_floors_ok,
        hessian_max_eig: sol.nehari.hessian_max_eig,
        hessian_certificate_ok: sol.nehari.hessian_max_eig < 0.0,
        membership,
    })
}

/// Scale a state along the cone so re-solving starts on the manifold; a
/// convenience for idempotence tests.
pub fn renormalized_copy(u: &State, factor: f64) -> State {
    scale_state(u, &vec![factor; u.k()])
}
