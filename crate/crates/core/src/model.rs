//! The coupling nonlinearity `P`, potentials, and assumption validation.
//!
//! The built-in family is
//! `P(u) = sum_i (lambda_i / p) |u_i|^p - (1/2) sum_{i != j} beta_ij |u_i|^{q_i} |u_j|^{q_j}`,
//! evaluated with its even extension so that values and derivatives are
//! well defined for arbitrary sign patterns. Custom nonlinearities plug in
//! through the [`Nonlinearity`] trait and are validated by sampling.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{lambda1_estimate, Field, Grid};

/// `x^e` that is exact for small integer exponents and treats `0^0 = 1`.
pub(crate) fn pow(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 3.0 {
        x * x * x
    } else if e == 4.0 {
        let s = x * x;
        s * s
    } else {
        x.powf(e)
    }
}

/// Value, gradient and Hessian of `P` at a single point of `R^k`.
#[derive(Clone, Debug)]
pub struct PointEval {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major `k x k`, symmetric.
    pub hess: Vec<f64>,
}

impl PointEval {
    pub fn new(k: usize) -> PointEval {
        PointEval {
            value: 0.0,
            grad: vec![0.0; k],
            hess: vec![0.0; k * k],
        }
    }
}

/// A `C^2` nonlinearity on the positive cone (with even extension).
pub trait Nonlinearity: Send + Sync {
    fn k(&self) -> usize;

    /// Write value, gradient and Hessian at `u` into `out`.
    fn eval_into(&self, u: &[f64], out: &mut PointEval);

    /// Value only; override when a cheaper path exists.
    fn value(&self, u: &[f64]) -> f64 {
        let mut out = PointEval::new(self.k());
        self.eval_into(u, &mut out);
        out.value
    }
}

/// Parameters of the power-coupling family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCouplingParams {
    pub k: usize,
    pub p: f64,
    pub lambda: Vec<f64>,
    pub q: Vec<f64>,
    /// Symmetric `k x k`, nonnegative, zero diagonal.
    pub beta: Vec<Vec<f64>>,
}

impl PowerCouplingParams {
    /// Decoupled scalar power model `P(u) = (lambda/p) |u|^p`.
    pub fn scalar(p: f64, lambda: f64) -> PowerCouplingParams {
        PowerCouplingParams {
            k: 1,
            p,
            lambda: vec![lambda],
            q: vec![2.0],
            beta: vec![vec![0.0]],
        }
    }

    /// The cubic two-component preset (`p = 4`, `q_i = 2`). The coupling
    /// `beta` enters the PDE right-hand side as `2 beta u_j^2 u_i` under
    /// the built-in 1/2 interaction normalization.
    pub fn cubic_pair(lambda: [f64; 2], beta: f64) -> PowerCouplingParams {
        PowerCouplingParams {
            k: 2,
            p: 4.0,
            lambda: lambda.to_vec(),
            q: vec![2.0, 2.0],
            beta: vec![vec![0.0, beta], vec![beta, 0.0]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        let fail = |msg: String| Err(Error::Config(msg));
        if k == 0 {
            return fail("component count k must be >= 1".into());
        }
        if self.lambda.len() != k || self.q.len() != k || self.beta.len() != k {
            return fail(format!("lambda, q, beta must all have length k = {k}"));
        }
        if self.beta.iter().any(|row| row.len() != k) {
            return fail(format!("beta must be a {k} x {k} matrix"));
        }
        if !(self.p > 2.0) {
            return fail(format!("exponent p must satisfy p > 2, got {}", self.p));
        }
        for (i, &l) in self.lambda.iter().enumerate() {
            if !(l > 0.0) {
                return fail(format!("lambda[{i}] must be positive, got {l}"));
            }
        }
        for (i, &qi) in self.q.iter().enumerate() {
            if !(qi >= 2.0) {
                return fail(format!("q[{i}] must satisfy q >= 2, got {qi}"));
            }
        }
        for i in 0..k {
            if self.beta[i][i] != 0.0 {
                return fail(format!("beta diagonal must be zero, beta[{i}][{i}] != 0"));
            }
            for j in 0..k {
                if self.beta[i][j] < 0.0 {
                    return fail(format!("beta[{i}][{j}] must be nonnegative"));
                }
                if self.beta[i][j] != self.beta[j][i] {
                    return fail(format!("beta must be symmetric, mismatch at ({i},{j})"));
                }
                if i != j && self.p < self.q[i] + self.q[j] {
                    return fail(format!(
                        "coupling exponents must satisfy p >= q_i + q_j; \
                         p = {} < q[{i}] + q[{j}] = {}",
                        self.p,
                        self.q[i] + self.q[j]
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The nonlinearity of a problem: the built-in power family or a custom
/// trait object.
#[derive(Clone)]
pub enum ModelP {
    Power(PowerCouplingParams),
    Custom(Arc<dyn Nonlinearity>),
}

impl std::fmt::Debug for ModelP {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelP::Power(p) => f.debug_tuple("Power").field(p).finish(),
            ModelP::Custom(m) => write!(f, "Custom(k = {})", m.k()),
        }
    }
}

impl ModelP {
    pub fn power(params: PowerCouplingParams) -> Result<ModelP> {
        params.validate()?;
        Ok(ModelP::Power(params))
    }

    pub fn k(&self) -> usize {
        match self {
            ModelP::Power(p) => p.k,
            ModelP::Custom(m) => m.k(),
        }
    }

    pub fn power_params(&self) -> Option<&PowerCouplingParams> {
        match self {
            ModelP::Power(p) => Some(p),
            ModelP::Custom(_) => None,
        }
    }

    /// The default superquadraticity exponent: `p - 2` for the power family.
    pub fn default_alpha(&self) -> Option<f64> {
        self.power_params().map(|p| p.p - 2.0)
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        match self {
            ModelP::Power(p) => power_value(p, u),
            ModelP::Custom(m) => m.value(u),
        }
    }

    pub fn eval_into(&self, u: &[f64], out: &mut PointEval) {
        match self {
            ModelP::Power(p) => eval_power_into(p, u, out),
            ModelP::Custom(m) => m.eval_into(u, out),
        }
    }

    /// Value, gradient, Hessian at a point (allocating convenience).
    pub fn eval(&self, u: &[f64]) -> Result<PointEval> {
        if u.len() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} entries, model has k = {}",
                u.len(),
                self.k()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite input point".into()));
        }
        let mut out = PointEval::new(self.k());
        self.eval_into(u, &mut out);
        Ok(out)
    }
}

fn power_value(pr: &PowerCouplingParams, u: &[f64]) -> f64 {
    let k = pr.k;
    let mut value = 0.0;
    for i in 0..k {
        let s = u[i].abs();
        value += pr.lambda[i] / pr.p * pow(s, pr.p);
        for j in 0..k {
            if j != i && pr.beta[i][j] != 0.0 {
                value -= 0.5 * pr.beta[i][j] * pow(s, pr.q[i]) * pow(u[j].abs(), pr.q[j]);
            }
        }
    }
    value
}

fn eval_power_into(pr: &PowerCouplingParams, u: &[f64], out: &mut PointEval) {
    let k = pr.k;
    out.value = 0.0;
    out.grad.iter_mut().for_each(|g| *g = 0.0);
    out.hess.iter_mut().for_each(|h| *h = 0.0);
    for i in 0..k {
        let sign_i = if u[i] < 0.0 { -1.0 } else { 1.0 };
        let si = u[i].abs();
        out.value += pr.lambda[i] / pr.p * pow(si, pr.p);
        out.grad[i] += sign_i * pr.lambda[i] * pow(si, pr.p - 1.0);
        out.hess[i * k + i] += pr.lambda[i] * (pr.p - 1.0) * pow(si, pr.p - 2.0);
        let coupling: f64 = (0..k)
            .filter(|&j| j != i)
            .map(|j| pr.beta[i][j] * pow(u[j].abs(), pr.q[j]))
            .sum();
        if coupling != 0.0 {
            out.grad[i] -= sign_i * pr.q[i] * pow(si, pr.q[i] - 1.0) * coupling;
            out.hess[i * k + i] -= pr.q[i] * (pr.q[i] - 1.0) * pow(si, pr.q[i] - 2.0) * coupling;
        }
        for j in 0..k {
            if j == i || pr.beta[i][j] == 0.0 {
                continue;
            }
            let sign_j = if u[j] < 0.0 { -1.0 } else { 1.0 };
            let sj = u[j].abs();
            out.value -= 0.5 * pr.beta[i][j] * pow(si, pr.q[i]) * pow(sj, pr.q[j]);
            out.hess[i * k + j] -= sign_i
                * sign_j
                * pr.q[i]
                * pr.q[j]
                * pr.beta[i][j]
                * pow(si, pr.q[i] - 1.0)
                * pow(sj, pr.q[j] - 1.0);
        }
    }
}

/// Potential profile, realized on a grid as a [`Field`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Constant { value: f64 },
    RadialQuadratic { a: f64, b: f64 },
    TabulatedRadial { radii: Vec<f64>, values: Vec<f64> },
}

impl Potential {
    pub fn realize(&self, grid: &Grid) -> Result<Field> {
        match self {
            Potential::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Config("potential value must be finite".into()));
                }
                Ok(grid.field_from_fn(|_, _| *value))
            }
            Potential::RadialQuadratic { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::Config("potential coefficients must be finite".into()));
                }
                let vals = (0..grid.len())
                    .map(|i| {
                        let r = grid.radius(i);
                        a + b * r * r
                    })
                    .collect();
                grid.field_from_values(vals)
            }
            Potential::TabulatedRadial { radii, values } => {
                if radii.len() != values.len() || radii.len() < 2 {
                    return Err(Error::Config(
                        "tabulated potential needs matching radii/values, length >= 2".into(),
                    ));
                }
                if radii.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("tabulated radii must increase".into()));
                }
                let vals = (0..grid.len())
                    .map(|i| {
                        let r = grid.radius(i);
                        // Piecewise-linear with constant extrapolation.
                        if r <= radii[0] {
                            values[0]
                        } else if r >= *radii.last().unwrap() {
                            *values.last().unwrap()
                        } else {
                            let idx = radii.partition_point(|x| *x <= r) - 1;
                            let t = (r - radii[idx]) / (radii[idx + 1] - radii[idx]);
                            values[idx] * (1.0 - t) + values[idx + 1] * t
                        }
                    })
                    .collect();
                grid.field_from_values(vals)
            }
        }
    }
}

/// The matrix `M(u)` with entries
/// `delta_ij (1 + alpha) P_{u_i}(u) u_i - P_{u_i u_j}(u) u_i u_j`.
pub fn matrix_m_alpha(model: &ModelP, u_point: &[f64], alpha: f64) -> Result<Vec<Vec<f64>>> {
    let k = model.k();
    let e = model.eval(u_point)?;
    let mut m = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut v = -e.hess[i * k + j] * u_point[i] * u_point[j];
            if i == j {
                v += (1.0 + alpha) * e.grad[i] * u_point[i];
            }
            m[i][j] = v;
        }
    }
    Ok(m)
}

/// Gershgorin sufficient test for negative semidefiniteness of a symmetric
/// matrix: every disc lies in the nonpositive half-line.
pub fn gershgorin_nsd(h: &[Vec<f64>]) -> Result<bool> {
    let k = h.len();
    for (i, row) in h.iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch("matrix is not square".into()));
        }
        for j in 0..k {
            if (h[i][j] - h[j][i]).abs() > 1e-12 * (1.0 + h[i][j].abs()) {
                return Err(Error::NotSymmetric);
            }
        }
        let off: f64 = (0..k).filter(|&j| j != i).map(|j| row[j].abs()).sum();
        if row[i] + off > 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMethod {
    ClosedForm,
    Sampled,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionVerdict {
    pub name: String,
    pub pass: bool,
    pub method: CheckMethod,
    pub detail: String,
    /// Cone point witnessing a failure, when one exists.
    pub witness: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub verdicts: Vec<AssumptionVerdict>,
    /// The exponent certified for the superquadraticity matrix condition.
    pub certified_alpha: Option<f64>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, name: &str) -> Option<&AssumptionVerdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

fn closed(name: &str, pass: bool, detail: String, witness: Option<Vec<f64>>) -> AssumptionVerdict {
    AssumptionVerdict {
        name: name.into(),
        pass,
        method: CheckMethod::ClosedForm,
        detail,
        witness,
    }
}

fn sampled(name: &str, pass: bool, detail: String, witness: Option<Vec<f64>>) -> AssumptionVerdict {
    AssumptionVerdict {
        name: name.into(),
        pass,
        method: CheckMethod::Sampled,
        detail,
        witness,
    }
}

/// Validate the structural assumptions for a model on a concrete grid with
/// concrete potentials and diffusion constants.
///
/// Power-family parameters are decided by closed-form inequalities; custom
/// models fall back to sampling a log-spaced lattice in the positive cone.
pub fn check_assumptions(
    model: &ModelP,
    grid: &Grid,
    potentials: &[Field],
    diffusion: &[f64],
    alpha: Option<f64>,
) -> Result<AssumptionReport> {
    let k = model.k();
    if potentials.len() != k || diffusion.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "need {k} potentials and diffusion constants"
        )));
    }
    for v in potentials {
        grid.check_field(v)?;
    }
    let mut verdicts = Vec::new();

    // (P0): inf V_i > -c_i lambda1.
    let lambda1 = lambda1_estimate(grid)?;
    let mut p0_pass = true;
    let mut p0_detail = format!("lambda1 = {lambda1:.6e}");
    for i in 0..k {
        let inf_v = potentials[i]
            .values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(inf_v > -diffusion[i] * lambda1) {
            p0_pass = false;
            p0_detail = format!(
                "inf V_{i} = {inf_v:.6e} <= -c_{i} lambda1 = {:.6e}",
                -diffusion[i] * lambda1
            );
            break;
        }
    }
    verdicts.push(closed("P0", p0_pass, p0_detail, None));

    let certified_alpha = match model {
        ModelP::Power(params) => {
            check_power_assumptions(params, &mut verdicts);
            Some(alpha.unwrap_or(params.p - 2.0))
        }
        ModelP::Custom(custom) => {
            let a = alpha.unwrap_or(1.0);
            check_sampled_assumptions(custom.as_ref(), a, &mut verdicts);
            Some(a)
        }
    };

    Ok(AssumptionReport {
        verdicts,
        certified_alpha,
    })
}

fn check_power_assumptions(params: &PowerCouplingParams, verdicts: &mut Vec<AssumptionVerdict>) {
    let k = params.k;
    let p = params.p;

    // Parameter inequalities of the coupling family.
    let mut eq4_pass = true;
    let mut eq4_detail = "lambda_i > 0, beta symmetric >= 0, q_i >= 2, p >= q_i + q_j".to_string();
    if params.lambda.iter().any(|l| !(*l > 0.0)) {
        eq4_pass = false;
        eq4_detail = "some lambda_i <= 0".into();
    }
    if params.q.iter().any(|q| *q < 2.0) {
        eq4_pass = false;
        eq4_detail = "some q_i < 2".into();
    }
    'outer: for i in 0..k {
        for j in 0..k {
            if params.beta[i][j] < 0.0 || params.beta[i][j] != params.beta[j][i] {
                eq4_pass = false;
                eq4_detail = format!("beta not symmetric nonnegative at ({i},{j})");
                break 'outer;
            }
            if i != j && params.beta[i][j] > 0.0 && p < params.q[i] + params.q[j] {
                eq4_pass = false;
                eq4_detail = format!(
                    "p >= q_i + q_j violated for pair ({i},{j}): p = {p}, q_i + q_j = {}",
                    params.q[i] + params.q[j]
                );
                break 'outer;
            }
        }
    }
    verdicts.push(closed("coupling_exponents", eq4_pass, eq4_detail, None));

    verdicts.push(closed(
        "P1",
        p > 2.0,
        format!("growth exponent p = {p} in (2, inf) for N <= 2"),
        None,
    ));
    verdicts.push(closed(
        "P2",
        true,
        "P(0) = 0 and each partial vanishes on its zero slice by construction".into(),
        None,
    ));
    verdicts.push(closed(
        "P3",
        eq4_pass,
        "nonnegative coupling only subtracts from the decoupled pairing".into(),
        None,
    ));
    verdicts.push(closed(
        "P4",
        eq4_pass && p > 2.0,
        format!("M(u) negative semidefinite with alpha = p - 2 = {}", p - 2.0),
        None,
    ));
    verdicts.push(closed(
        "P5",
        true,
        "second pure derivative on a zero slice is nonpositive (q_i >= 2)".into(),
        None,
    ));
    if k == 2 {
        let p6 = params.beta[0][1] > 0.0;
        verdicts.push(closed(
            "P6",
            p6,
            if p6 {
                "cross derivative strictly negative on the open cone".into()
            } else {
                "beta_12 = 0: cross derivative vanishes".into()
            },
            None,
        ));
    }

    verdicts.push(closed(
        "a1",
        p > 2.0,
        format!("|f_i'(s)| <= C (1 + s^(p-2)) with p = {p}"),
        None,
    ));
    verdicts.push(closed("a2", p > 2.0, "f_i(s) = lambda_i s^(p-1) = o(s)".into(), None));
    verdicts.push(closed(
        "a3",
        p > 2.0 && params.lambda.iter().all(|l| *l > 0.0),
        format!("(1 + gamma) f_i s = f_i' s^2 with gamma = p - 2 = {}", p - 2.0),
        None,
    ));
    verdicts.push(closed(
        "H1",
        eq4_pass,
        "interaction Hessian growth bounded with alpha = p - 2 (q_i + q_j - 2 <= p - 2)".into(),
        None,
    ));
    verdicts.push(closed("H2", true, "interaction vanishes on zero slices".into(), None));
    verdicts.push(closed(
        "H3",
        eq4_pass,
        "interaction partials nonnegative for beta >= 0".into(),
        None,
    ));
    // (H4) via the Gershgorin row bound: eigenvalues of (h_ij) are bounded
    // below by q_i (p - q_i - q_j) beta_ij u^.. >= 0.
    verdicts.push(closed(
        "H4",
        eq4_pass,
        "Gershgorin rows give eigenvalue lower bound q_i (p - q_i - q_j) >= 0".into(),
        None,
    ));
    if k == 2 {
        let h5 = params.beta[0][1] > 0.0;
        verdicts.push(closed(
            "H5",
            h5,
            if h5 {
                "H_uv > 0 on the open cone".into()
            } else {
                "beta_12 = 0".into()
            },
            None,
        ));
    }
}

/// Log-spaced magnitudes used for sampled assumption checks.
fn sample_magnitudes() -> Vec<f64> {
    // 17 log-spaced values in [1e-3, 1e3].
    (0..17)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 16.0))
        .collect()
}

fn lattice_points(k: usize) -> Vec<Vec<f64>> {
    let mags = sample_magnitudes();
    let per_axis = mags.len();
    let total = per_axis.pow(k as u32).min(100_000);
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; k];
    loop {
        points.push(idx.iter().map(|&i| mags[i]).collect::<Vec<f64>>());
        if points.len() >= total {
            break;
        }
        let mut carry = 0;
        loop {
            idx[carry] += 1;
            if idx[carry] < per_axis {
                break;
            }
            idx[carry] = 0;
            carry += 1;
            if carry == k {
                return points;
            }
        }
    }
    points
}

fn max_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let k = m.len();
    let dm = nalgebra::DMatrix::from_fn(k, k, |i, j| 0.5 * (m[i][j] + m[j][i]));
    dm.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_sampled_assumptions(
    model: &dyn Nonlinearity,
    alpha: f64,
    verdicts: &mut Vec<AssumptionVerdict>,
) {
    let k = model.k();
    let points = lattice_points(k);
    let mut eval = PointEval::new(k);

    // (P2): value at 0 and gradient entries on zero slices.
    let mut p2_pass = true;
    let mut p2_witness = None;
    model.eval_into(&vec![0.0; k], &mut eval);
    if eval.value.abs() > 1e-12 {
        p2_pass = false;
        p2_witness = Some(vec![0.0; k]);
    }
    'p2: for pt in &points {
        for i in 0..k {
            let mut slice = pt.clone();
            slice[i] = 0.0;
            model.eval_into(&slice, &mut eval);
            if eval.grad[i].abs() > 1e-10 * (1.0 + eval.value.abs()) {
                p2_pass = false;
                p2_witness = Some(slice);
                break 'p2;
            }
        }
    }
    verdicts.push(sampled(
        "P2",
        p2_pass,
        "value at origin and gradient on zero slices".into(),
        p2_witness,
    ));

    // (P3): P_{u_i}(u) u_i <= P_{u_i}(0,..,u_i,..,0) u_i.
    let mut p3_pass = true;
    let mut p3_witness = None;
    'p3: for pt in &points {
        model.eval_into(pt, &mut eval);
        let grad = eval.grad.clone();
        for i in 0..k {
            let mut alone = vec![0.0; k];
            alone[i] = pt[i];
            model.eval_into(&alone, &mut eval);
            let scale = 1.0 + eval.grad[i].abs() * pt[i];
            if grad[i] * pt[i] > eval.grad[i] * pt[i] + 1e-10 * scale {
                p3_pass = false;
                p3_witness = Some(pt.clone());
                break 'p3;
            }
        }
    }
    verdicts.push(sampled(
        "P3",
        p3_pass,
        "weak competitivity on sampled cone lattice".into(),
        p3_witness,
    ));

    // (P4): M(u) negative semidefinite, by direct eigenvalue on samples.
    let mut p4_pass = true;
    let mut p4_witness = None;
    for pt in &points {
        model.eval_into(pt, &mut eval);
        let mut m = vec![vec![0.0; k]; k];
        // Entries are differences of large terms; tolerance must scale with
        // the terms, not the (possibly cancelled) result.
        let mut scale: f64 = 1.0;
        for i in 0..k {
            for j in 0..k {
                let quad = eval.hess[i * k + j] * pt[i] * pt[j];
                let mut v = -quad;
                scale = scale.max(quad.abs());
                if i == j {
                    let lin = (1.0 + alpha) * eval.grad[i] * pt[i];
                    v += lin;
                    scale = scale.max(lin.abs());
                }
                m[i][j] = v;
            }
        }
        if max_eigenvalue(&m) > 1e-10 * scale {
            p4_pass = false;
            p4_witness = Some(pt.clone());
            break;
        }
    }
    verdicts.push(sampled(
        "P4",
        p4_pass,
        format!("sampled eigenvalues of M(u) with alpha = {alpha}"),
        p4_witness,
    ));

    // (P5): pure second derivative on zero slices nonpositive.
    let mut p5_pass = true;
    let mut p5_witness = None;
    'p5: for pt in &points {
        for i in 0..k {
            let mut slice = pt.clone();
            slice[i] = 0.0;
            model.eval_into(&slice, &mut eval);
            if eval.hess[i * k + i] > 1e-10 {
                p5_pass = false;
                p5_witness = Some(slice);
                break 'p5;
            }
        }
    }
    verdicts.push(sampled("P5", p5_pass, "boundary concavity".into(), p5_witness));

    if k == 2 {
        let mut p6_pass = true;
        let mut p6_witness = None;
        for pt in &points {
            model.eval_into(pt, &mut eval);
            if eval.hess[1] >= 0.0 {
                p6_pass = false;
                p6_witness = Some(pt.clone());
                break;
            }
        }
        verdicts.push(sampled(
            "P6",
            p6_pass,
            "strictly negative cross derivative on sampled open cone".into(),
            p6_witness,
        ));
    }
}
