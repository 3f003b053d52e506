//! Discretized domains and the discrete Dirichlet Laplacian.
//!
//! Four domain kinds are supported: a 1-D interval, a rectangle, a disk and
//! an annulus. Cartesian grids use uniform vertex-centered nodes; polar
//! grids use an offset radial layout `r_j = r_in + (j + 1/2) dr` so that no
//! node sits on the coordinate singularity at `r = 0`. The negative
//! Laplacian is discretized in conservative form and is self-adjoint and
//! positive definite in the quadrature-weighted inner product.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static GRID_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Declarative description of a computational domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval {
        length: f64,
        n: usize,
    },
    Rectangle {
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
    },
    Disk {
        radius: f64,
        nr: usize,
        ntheta: usize,
    },
    Annulus {
        r_in: f64,
        r_out: f64,
        nr: usize,
        ntheta: usize,
    },
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidGeometry(msg));
        match *self {
            DomainSpec::Interval { length, n } => {
                if !(length > 0.0) {
                    return err(format!("interval length must be positive, got {length}"));
                }
                if n < 4 {
                    return err(format!("interval needs at least 4 interior nodes, got {n}"));
                }
            }
            DomainSpec::Rectangle { lx, ly, nx, ny } => {
                if !(lx > 0.0 && ly > 0.0) {
                    return err(format!("rectangle sides must be positive, got {lx} x {ly}"));
                }
                if nx < 4 || ny < 4 {
                    return err(format!("rectangle resolution must be >= 4, got {nx} x {ny}"));
                }
            }
            DomainSpec::Disk { radius, nr, ntheta } => {
                if !(radius > 0.0) {
                    return err(format!("disk radius must be positive, got {radius}"));
                }
                validate_polar_resolution(nr, ntheta)?;
            }
            DomainSpec::Annulus {
                r_in,
                r_out,
                nr,
                ntheta,
            } => {
                if !(r_in > 0.0 && r_out > r_in) {
                    return err(format!(
                        "annulus requires 0 < r_in < r_out, got r_in={r_in}, r_out={r_out}"
                    ));
                }
                validate_polar_resolution(nr, ntheta)?;
            }
        }
        Ok(())
    }
}

fn validate_polar_resolution(nr: usize, ntheta: usize) -> Result<()> {
    if nr < 4 {
        return Err(Error::InvalidGeometry(format!(
            "polar grid needs nr >= 4, got {nr}"
        )));
    }
    if ntheta < 8 || ntheta % 2 != 0 {
        return Err(Error::InvalidGeometry(format!(
            "polar grid needs even ntheta >= 8, got {ntheta}"
        )));
    }
    Ok(())
}

/// Index layout and mesh increments of a built grid.
#[derive(Clone, Debug)]
pub enum GridLayout {
    /// Nodes at `x_i = (i+1) h`, `i = 0..n`.
    Line { n: usize, h: f64 },
    /// Row-major nodes at `((i+1) hx, (j+1) hy)`, index `j * nx + i`.
    Rect {
        nx: usize,
        ny: usize,
        hx: f64,
        hy: f64,
    },
    /// Ring-major nodes at `(r_j, m dtheta)`, index `j * ntheta + m`,
    /// with `r_j = r_in + (j + 1/2) dr`.
    Polar {
        nr: usize,
        ntheta: usize,
        dr: f64,
        dtheta: f64,
        r_in: f64,
    },
}

/// An immutable discretized domain: node layout plus quadrature weights.
#[derive(Debug)]
pub struct Grid {
    id: u64,
    spec: DomainSpec,
    layout: GridLayout,
    weights: Vec<f64>,
}

/// One real value per interior grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid_id: u64,
    values: Vec<f64>,
}

impl Field {
    pub(crate) fn raw(grid_id: u64, values: Vec<f64>) -> Field {
        Field { grid_id, values }
    }

    pub(crate) fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Componentwise absolute value, in place.
    pub fn abs_in_place(&mut self) {
        for v in &mut self.values {
            *v = v.abs();
        }
    }

    pub fn scaled(&self, s: f64) -> Field {
        Field {
            grid_id: self.grid_id,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`; panics on layout mismatch.
    pub fn axpy(&mut self, s: f64, other: &Field) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }
}

/// `k` fields sharing one grid.
#[derive(Clone, Debug)]
pub struct State {
    pub components: Vec<Field>,
}

impl State {
    pub fn new(components: Vec<Field>) -> State {
        assert!(!components.is_empty());
        State { components }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn abs_in_place(&mut self) {
        for c in &mut self.components {
            c.abs_in_place();
        }
    }
}

impl Grid {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_polar(&self) -> bool {
        matches!(self.layout, GridLayout::Polar { .. })
    }

    /// Cartesian coordinates of node `i` (y = 0 on interval grids).
    pub fn coords(&self, i: usize) -> (f64, f64) {
        match self.layout {
            GridLayout::Line { h, .. } => ((i as f64 + 1.0) * h, 0.0),
            GridLayout::Rect { nx, hx, hy, .. } => {
                let ix = i % nx;
                let iy = i / nx;
                ((ix as f64 + 1.0) * hx, (iy as f64 + 1.0) * hy)
            }
            GridLayout::Polar { .. } => {
                let (r, theta) = self.polar_coords(i).unwrap();
                (r * theta.cos(), r * theta.sin())
            }
        }
    }

    /// `(r, theta)` of node `i` on polar grids.
    pub fn polar_coords(&self, i: usize) -> Option<(f64, f64)> {
        match self.layout {
            GridLayout::Polar {
                ntheta,
                dr,
                dtheta,
                r_in,
                ..
            } => {
                let j = i / ntheta;
                let m = i % ntheta;
                Some((r_in + (j as f64 + 0.5) * dr, m as f64 * dtheta))
            }
            _ => None,
        }
    }

    /// Distance of node `i` to the origin (to the interval start in 1-D).
    pub fn radius(&self, i: usize) -> f64 {
        match self.layout {
            GridLayout::Polar { .. } => self.polar_coords(i).unwrap().0,
            _ => {
                let (x, y) = self.coords(i);
                (x * x + y * y).sqrt()
            }
        }
    }

    pub fn zero_field(&self) -> Field {
        Field {
            grid_id: self.id,
            values: vec![0.0; self.len()],
        }
    }

    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        let values = (0..self.len())
            .map(|i| {
                let (x, y) = self.coords(i);
                f(x, y)
            })
            .collect();
        Field {
            grid_id: self.id,
            values,
        }
    }

    pub fn field_from_values(&self, values: Vec<f64>) -> Result<Field> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Field {
            grid_id: self.id,
            values,
        })
    }

    pub fn check_field(&self, f: &Field) -> Result<()> {
        if f.grid_id != self.id || f.values.len() != self.len() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn check_state(&self, u: &State) -> Result<()> {
        for c in &u.components {
            self.check_field(c)?;
        }
        Ok(())
    }

    /// JSON description of the grid (kind, geometry, resolution).
    pub fn describe_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.spec).expect("spec serializes")
    }

    /// CSV dump of node coordinates and quadrature weights.
    ///
    /// Columns: `index,x,y,weight` on Cartesian grids and
    /// `index,r,theta,weight` on polar grids.
    pub fn dump_nodes_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        if self.is_polar() {
            writeln!(out, "index,r,theta,weight")?;
            for i in 0..self.len() {
                let (r, theta) = self.polar_coords(i).unwrap();
                writeln!(out, "{i},{r},{theta},{w}", w = self.weights[i])?;
            }
        } else {
            writeln!(out, "index,x,y,weight")?;
            for i in 0..self.len() {
                let (x, y) = self.coords(i);
                writeln!(out, "{i},{x},{y},{w}", w = self.weights[i])?;
            }
        }
        Ok(())
    }
}

/// Build a grid from its domain description.
pub fn build_grid(spec: &DomainSpec) -> Result<Grid> {
    spec.validate()?;
    let (layout, weights) = match *spec {
        DomainSpec::Interval { length, n } => {
            let h = length / (n as f64 + 1.0);
            (GridLayout::Line { n, h }, vec![h; n])
        }
        DomainSpec::Rectangle { lx, ly, nx, ny } => {
            let hx = lx / (nx as f64 + 1.0);
            let hy = ly / (ny as f64 + 1.0);
            (GridLayout::Rect { nx, ny, hx, hy }, vec![hx * hy; nx * ny])
        }
        DomainSpec::Disk { radius, nr, ntheta } => polar_layout(0.0, radius, nr, ntheta),
        DomainSpec::Annulus {
            r_in,
            r_out,
            nr,
            ntheta,
        } => polar_layout(r_in, r_out, nr, ntheta),
    };
    Ok(Grid {
        id: GRID_COUNTER.fetch_add(1, Ordering::Relaxed),
        spec: spec.clone(),
        layout,
        weights,
    })
}

fn polar_layout(r_in: f64, r_out: f64, nr: usize, ntheta: usize) -> (GridLayout, Vec<f64>) {
    let dr = (r_out - r_in) / nr as f64;
    let dtheta = std::f64::consts::TAU / ntheta as f64;
    let mut weights = Vec::with_capacity(nr * ntheta);
    for j in 0..nr {
        let rj = r_in + (j as f64 + 0.5) * dr;
        for _ in 0..ntheta {
            weights.push(rj * dr * dtheta);
        }
    }
    (
        GridLayout::Polar {
            nr,
            ntheta,
            dr,
            dtheta,
            r_in,
        },
        weights,
    )
}

/// Apply the discrete negative Laplacian with homogeneous Dirichlet data.
///
/// Polar grids use the conservative form
/// `-(1/r)(r u_r)_r - (1/r^2) u_thetatheta`, periodic in theta, with the
/// Dirichlet boundary realized through odd ghost values at the offset ring.
pub fn apply_neg_laplacian(grid: &Grid, f: &Field) -> Result<Field> {
    grid.check_field(f)?;
    let u = f.values();
    let mut out = vec![0.0; u.len()];
    match grid.layout {
        GridLayout::Line { n, h } => {
            let ih2 = 1.0 / (h * h);
            for i in 0..n {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                out[i] = (2.0 * u[i] - left - right) * ih2;
            }
        }
        GridLayout::Rect { nx, ny, hx, hy } => {
            let ihx2 = 1.0 / (hx * hx);
            let ihy2 = 1.0 / (hy * hy);
            for iy in 0..ny {
                for ix in 0..nx {
                    let i = iy * nx + ix;
                    let l = if ix > 0 { u[i - 1] } else { 0.0 };
                    let r = if ix + 1 < nx { u[i + 1] } else { 0.0 };
                    let b = if iy > 0 { u[i - nx] } else { 0.0 };
                    let t = if iy + 1 < ny { u[i + nx] } else { 0.0 };
                    out[i] = (2.0 * u[i] - l - r) * ihx2 + (2.0 * u[i] - b - t) * ihy2;
                }
            }
        }
        GridLayout::Polar {
            nr,
            ntheta,
            dr,
            dtheta,
            r_in,
        } => {
            let idr2 = 1.0 / (dr * dr);
            let idt2 = 1.0 / (dtheta * dtheta);
            for j in 0..nr {
                let rj = r_in + (j as f64 + 0.5) * dr;
                let r_minus = r_in + j as f64 * dr;
                let r_plus = r_in + (j as f64 + 1.0) * dr;
                let base = j * ntheta;
                for m in 0..ntheta {
                    let i = base + m;
                    // Dirichlet ghosts: odd reflection across the boundary
                    // face. On the disk the inner face has r_minus = 0 and
                    // the inner flux vanishes.
                    let inner = if j > 0 {
                        u[i - ntheta]
                    } else if r_in > 0.0 {
                        -u[i]
                    } else {
                        0.0
                    };
                    let outer = if j + 1 < nr { u[i + ntheta] } else { -u[i] };
                    let radial = (r_plus * (u[i] - outer) + r_minus * (u[i] - inner)) * idr2 / rj;
                    let mp = base + (m + 1) % ntheta;
                    let mm = base + (m + ntheta - 1) % ntheta;
                    let angular = (2.0 * u[i] - u[mp] - u[mm]) * idt2 / (rj * rj);
                    out[i] = radial + angular;
                }
            }
        }
    }
    grid.field_from_values(out)
}

/// Quadrature: `sum_i w_i f_i`.
pub fn integrate(grid: &Grid, f: &Field) -> Result<f64> {
    grid.check_field(f)?;
    Ok(f.values()
        .iter()
        .zip(grid.weights())
        .map(|(v, w)| v * w)
        .sum())
}

/// Weighted inner product `<f, g>_w`.
pub fn inner_w(grid: &Grid, f: &Field, g: &Field) -> Result<f64> {
    grid.check_field(f)?;
    grid.check_field(g)?;
    Ok(f.values()
        .iter()
        .zip(g.values())
        .zip(grid.weights())
        .map(|((a, b), w)| a * b * w)
        .sum())
}

pub fn norm_w(grid: &Grid, f: &Field) -> Result<f64> {
    Ok(inner_w(grid, f, f)?.sqrt())
}

/// Matrix-free conjugate gradients in the w-inner product for a
/// self-adjoint positive definite operator.
fn cg_solve(
    grid: &Grid,
    op: impl Fn(&Field) -> Field,
    rhs: &Field,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Field> {
    let rhs_norm = norm_w(grid, rhs)?;
    let mut x = grid.zero_field();
    if rhs_norm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = inner_w(grid, &r, &r)?;
    let tol = rel_tol * rhs_norm;
    for _ in 0..max_iter {
        let ap = op(&p);
        let pap = inner_w(grid, &p, &ap)?;
        if !(pap > 0.0) {
            return Err(Error::CgBreakdown(format!(
                "curvature <p, Ap>_w = {pap:.3e} is not positive (indefinite operator?)"
            )));
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_new = inner_w(grid, &r, &r)?;
        if rr_new.sqrt() <= tol {
            return Ok(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        let mut p_new = r.clone();
        p_new.axpy(beta, &p);
        p = p_new;
    }
    Err(Error::NoConvergence(format!(
        "CG did not reach tolerance {rel_tol:.1e} in {max_iter} iterations \
         (residual {res:.3e})",
        res = rr.sqrt() / rhs_norm
    )))
}

/// Solve `(c (-Lap) + V + sigma) x = rhs` by matrix-free CG.
///
/// The shift `sigma` must make the operator positive definite; indefiniteness
/// is detected as a CG breakdown and reported.
pub fn shifted_poisson_solve(
    grid: &Grid,
    c: f64,
    potential: &Field,
    sigma: f64,
    rhs: &Field,
) -> Result<Field> {
    grid.check_field(potential)?;
    grid.check_field(rhs)?;
    let op = |f: &Field| {
        let mut out = apply_neg_laplacian(grid, f).expect("field checked");
        for ((o, v), p) in out
            .values_mut()
            .iter_mut()
            .zip(f.values())
            .zip(potential.values())
        {
            *o = c * *o + (p + sigma) * v;
        }
        out
    };
    cg_solve(grid, op, rhs, 1e-12, 50 * grid.len().max(100))
}

/// Like [`shifted_poisson_solve`] but inexact: stops at `rel_tol` or after
/// `max_iter` CG iterations, whichever comes first, returning the current
/// iterate. Starting from zero, every CG iterate is a descent direction for
/// the right-hand side, which is all a preconditioner needs.
pub fn shifted_poisson_precondition(
    grid: &Grid,
    c: f64,
    potential: &Field,
    sigma: f64,
    rhs: &Field,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Field> {
    grid.check_field(potential)?;
    grid.check_field(rhs)?;
    let op = |f: &Field| {
        let mut out = apply_neg_laplacian(grid, f).expect("field checked");
        for ((o, v), p) in out
            .values_mut()
            .iter_mut()
            .zip(f.values())
            .zip(potential.values())
        {
            *o = c * *o + (p + sigma) * v;
        }
        out
    };
    cg_solve_capped(grid, op, rhs, rel_tol, max_iter)
}

/// CG that returns the iterate after `max_iter` steps regardless of the
/// residual.
fn cg_solve_capped(
    grid: &Grid,
    op: impl Fn(&Field) -> Field,
    rhs: &Field,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Field> {
    let rhs_norm = norm_w(grid, rhs)?;
    let mut x = grid.zero_field();
    if rhs_norm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = inner_w(grid, &r, &r)?;
    let tol = rel_tol * rhs_norm;
    for _ in 0..max_iter {
        let ap = op(&p);
        let pap = inner_w(grid, &p, &ap)?;
        if !(pap > 0.0) {
            return Err(Error::CgBreakdown(format!(
                "curvature <p, Ap>_w = {pap:.3e} is not positive (indefinite operator?)"
            )));
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_new = inner_w(grid, &r, &r)?;
        if rr_new.sqrt() <= tol {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        let mut p_new = r.clone();
        p_new.axpy(beta, &p);
        p = p_new;
    }
    Ok(x)
}

/// Smallest eigenvalue of the discrete negative Laplacian, by inverse power
/// iteration with matrix-free CG solves.
pub fn lambda1_estimate(grid: &Grid) -> Result<f64> {
    let zero_v = grid.zero_field();
    let mut v = grid.field_from_fn(|_, _| 1.0);
    let mut lambda = 0.0;
    for _ in 0..500 {
        let nv = norm_w(grid, &v)?;
        let w = shifted_poisson_solve(grid, 1.0, &zero_v, 0.0, &v.scaled(1.0 / nv))?;
        let nw = norm_w(grid, &w)?;
        v = w.scaled(1.0 / nw);
        let av = apply_neg_laplacian(grid, &v)?;
        lambda = inner_w(grid, &v, &av)?;
        let mut res = av;
        res.axpy(-lambda, &v);
        if norm_w(grid, &res)? <= 1e-8 * lambda.abs() {
            return Ok(lambda);
        }
    }
    Err(Error::NoConvergence(format!(
        "inverse power iteration stalled at lambda = {lambda:.6e}"
    )))
}
