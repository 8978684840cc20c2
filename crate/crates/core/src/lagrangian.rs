//! Doubled-coordinate dynamics: every coordinate gets an independent conjugate
//! partner, which makes the flow divergence-free even when the coordinate
//! equations alone contract phase space.
//!
//! Two systems live here. The scalar toy model `dq/dt = f(q)`,
//! `dq'/dt = -q' f'(q)` comes from `L = -q' dq/dt + q' f(q)`. The field system
//! pairs the state-diffusion equation for `psi` with the Euler-Lagrange equation
//! of `psi'` obtained from the real action `int (Lc + conj(Lc)) dt`, where
//!
//! ```text
//! Lc = -i psi'^T dpsi/dt + psi'^T H psi + i psi'^T Q psi
//! Q  = -1/2 (G - g)^2 + (G - g) nu,    g = psi^dagger G psi
//! ```
//!
//! and `nu` is the noise rate held fixed over a step. Products with `psi'` are
//! bilinear (no conjugation). Varying `psi'` gives `dpsi/dt = -iH psi + Q psi`;
//! varying `psi`, with `g` depending on both `psi` and `conj(psi)`, gives
//!
//! ```text
//! dpsi'/dt = i H^T psi' - Q^T psi' - 2i Im(A - nu B) G^T conj(psi)
//! A = psi'^T (G - g) psi,    B = psi'^T psi
//! ```

use std::io::{self, Write};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::ensemble::haar_state;
use crate::error::{dimension_mismatch, QsdError, Result};
use crate::hilbert::{check_dims, HermitianOperator, StateVector, C64};
use crate::noise::NoiseStream;
use crate::oscillator::fd_divergence;
use crate::propagator::{record_indices, step_count, QsdModel};

const I: C64 = C64::new(0.0, 1.0);
const TWO: C64 = C64::new(2.0, 0.0);

/// Magnitude of `psi'` treated as an integration blow-up.
pub const BLOW_UP_MAGNITUDE: f64 = 1e12;

/// Step used by the finite-difference divergences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ToyFunction {
    /// `f(q) = a q`
    Linear { a: C64 },
    /// `f(q) = a q - b q^3`
    Cubic { a: C64, b: C64 },
}

impl ToyFunction {
    pub fn name(&self) -> &'static str {
        match self {
            ToyFunction::Linear { .. } => "linear",
            ToyFunction::Cubic { .. } => "cubic",
        }
    }

    pub fn f(&self, q: C64) -> C64 {
        match *self {
            ToyFunction::Linear { a } => a * q,
            ToyFunction::Cubic { a, b } => a * q - b * q * q * q,
        }
    }

    pub fn df(&self, q: C64) -> C64 {
        match *self {
            ToyFunction::Linear { a } => a,
            ToyFunction::Cubic { a, b } => a - b * q * q * 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToyModel {
    function: ToyFunction,
}

impl ToyModel {
    /// Checks `df` against a central difference of `f` at a few points before accepting.
    pub fn new(function: ToyFunction) -> Result<Self> {
        let h = 1e-6;
        for q in [C64::new(0.3, 0.2), C64::new(-1.1, 0.5), C64::new(0.7, -0.9), C64::new(2.0, 0.0)] {
            let fd = (function.f(q + h) - function.f(q - h)) / (2.0 * h);
            let exact = function.df(q);
            if !exact.re.is_finite() || !exact.im.is_finite() || (fd - exact).norm() > 1e-6 * (1.0 + exact.norm()) {
                return Err(QsdError::InvalidArgument(format!(
                    "{} toy function: derivative check failed at q = {q}",
                    function.name()
                )));
            }
        }
        Ok(ToyModel { function })
    }

    /// Registry lookup: `linear` uses `a`, `cubic` uses `a` and `b`.
    pub fn from_name(name: &str, a: C64, b: C64) -> Result<Self> {
        match name {
            "linear" => ToyModel::new(ToyFunction::Linear { a }),
            "cubic" => ToyModel::new(ToyFunction::Cubic { a, b }),
            other => {
                Err(QsdError::InvalidArgument(format!("unknown toy function `{other}` (expected linear or cubic)")))
            }
        }
    }

    pub fn function(&self) -> ToyFunction {
        self.function
    }

    pub fn rhs(&self, q: C64, q_prime: C64) -> (C64, C64) {
        (self.function.f(q), -q_prime * self.function.df(q))
    }
}

/// One RK4 step of the pair. The `q` stages are computed first and never see `q'`.
pub fn toy_step(model: &ToyModel, q: C64, q_prime: C64, dt: f64) -> Result<(C64, C64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QsdError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let f = |q: C64| model.function.f(q);
    let g = |q: C64, qp: C64| -qp * model.function.df(q);

    let k1 = f(q);
    let q2 = q + k1 * (dt / 2.0);
    let k2 = f(q2);
    let q3 = q + k2 * (dt / 2.0);
    let k3 = f(q3);
    let q4 = q + k3 * dt;
    let k4 = f(q4);

    let l1 = g(q, q_prime);
    let l2 = g(q2, q_prime + l1 * (dt / 2.0));
    let l3 = g(q3, q_prime + l2 * (dt / 2.0));
    let l4 = g(q4, q_prime + l3 * dt);

    Ok((q + (k1 + k2 * TWO + k3 * TWO + k4) * (dt / 6.0), q_prime + (l1 + l2 * TWO + l3 * TWO + l4) * (dt / 6.0)))
}

/// `d(dq/dt)/dq + d(dq'/dt)/dq' = f'(q) - f'(q)`, as a real divergence over `(q, q')`.
pub fn toy_divergence(model: &ToyModel, q: C64, _q_prime: C64) -> f64 {
    // Each complex coordinate contributes twice the real part of its own derivative.
    let from_q = model.function.df(q);
    let from_q_prime = -model.function.df(q);
    2.0 * (from_q + from_q_prime).re
}

/// `d(dq/dt)/dq = f'(q)` for the `q` equation on its own.
pub fn toy_q_divergence(model: &ToyModel, q: C64) -> C64 {
    model.function.df(q)
}

/// Finite-difference divergence of the toy field over the four real coordinates.
pub fn toy_fd_divergence(model: &ToyModel, q: C64, q_prime: C64, h: f64) -> f64 {
    let field = |x: &[f64]| {
        let (a, b) = model.rhs(C64::new(x[0], x[1]), C64::new(x[2], x[3]));
        vec![a.re, a.im, b.re, b.im]
    };
    fd_divergence(field, &[q.re, q.im, q_prime.re, q_prime.im], h)
}

/// Canonical momenta `(p, p') = (-q', q)`.
pub fn toy_momenta(q: C64, q_prime: C64) -> (C64, C64) {
    (-q_prime, q)
}

/// Inverse of [`toy_momenta`].
pub fn toy_coordinates(p: C64, p_prime: C64) -> (C64, C64) {
    (p_prime, -p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyTrajectory {
    pub function: ToyFunction,
    pub times: Vec<f64>,
    pub q: Vec<C64>,
    pub q_prime: Vec<C64>,
}

impl ToyTrajectory {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "t,re_q,im_q,re_q_prime,im_q_prime,re_product,im_product,divergence")?;
        let model = ToyModel { function: self.function };
        for ((t, q), qp) in self.times.iter().zip(&self.q).zip(&self.q_prime) {
            let prod = q * qp;
            let div = toy_divergence(&model, *q, *qp);
            writeln!(out, "{t},{},{},{},{},{},{},{div}", q.re, q.im, qp.re, qp.im, prod.re, prod.im)?;
        }
        Ok(())
    }
}

pub fn evolve_toy(
    model: &ToyModel,
    q0: C64,
    q_prime0: C64,
    t_final: f64,
    dt: f64,
    record_every: usize,
) -> Result<ToyTrajectory> {
    let n_steps = step_count(t_final, dt)?;
    let indices = record_indices(n_steps, record_every);
    let (mut q, mut qp) = (q0, q_prime0);
    let mut traj = ToyTrajectory { function: model.function, times: vec![0.0], q: vec![q], q_prime: vec![qp] };
    let mut next = 1;
    for k in 1..=n_steps {
        (q, qp) = toy_step(model, q, qp, dt)?;
        let t = k as f64 * dt;
        if !(q.norm().is_finite() && qp.norm().is_finite()) || qp.norm() > BLOW_UP_MAGNITUDE {
            return Err(QsdError::BlowUp { t, magnitude: q.norm().max(qp.norm()) });
        }
        if indices[next] == k {
            traj.times.push(t);
            traj.q.push(q);
            traj.q_prime.push(qp);
            next += 1;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFieldReport {
    pub omega: f64,
    pub t_final: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `|q'(t) - conj(q(t))|` at each recorded time.
    pub conjugate_deviation: Vec<f64>,
    /// Max error of `q` against `q0 exp(i omega t)` and of `q'` against `q'0 exp(-i omega t)`.
    pub closed_form_error: f64,
    pub max_conjugate_deviation: f64,
    /// True when `q'` started as `conj(q0)` and stayed there within `1e-8`.
    pub conjugate_consistent: bool,
}

/// Evolves the linear field `f(q) = i omega q`; `q'` defaults to `conj(q0)`.
pub fn linear_field_consistency(
    omega: f64,
    q0: C64,
    q_prime0: Option<C64>,
    t_final: f64,
    dt: f64,
) -> Result<LinearFieldReport> {
    if !omega.is_finite() {
        return Err(QsdError::InvalidArgument("omega must be finite".into()));
    }
    let model = ToyModel::new(ToyFunction::Linear { a: C64::new(0.0, omega) })?;
    let qp0 = q_prime0.unwrap_or(q0.conj());
    let n_steps = step_count(t_final, dt)?;
    let (mut q, mut qp) = (q0, qp0);
    let mut times = vec![0.0];
    let mut deviation = vec![(qp - q.conj()).norm()];
    let mut closed = 0.0f64;
    for k in 1..=n_steps {
        (q, qp) = toy_step(&model, q, qp, dt)?;
        let t = k as f64 * dt;
        closed = closed
            .max((q - q0 * C64::from_polar(1.0, omega * t)).norm())
            .max((qp - qp0 * C64::from_polar(1.0, -omega * t)).norm());
        times.push(t);
        deviation.push((qp - q.conj()).norm());
    }
    let max_dev = deviation.iter().copied().fold(0.0, f64::max);
    Ok(LinearFieldReport {
        omega,
        t_final,
        dt,
        times,
        conjugate_deviation: deviation,
        closed_form_error: closed,
        max_conjugate_deviation: max_dev,
        conjugate_consistent: (qp0 - q0.conj()).norm() == 0.0 && max_dev < 1e-8,
    })
}

/// `(psi, psi')`; the starred coordinates are always the conjugates and are built on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedFieldState {
    psi: DVector<C64>,
    psi_prime: DVector<C64>,
}

impl ExtendedFieldState {
    pub fn new(psi: DVector<C64>, psi_prime: DVector<C64>) -> Result<Self> {
        if psi.len() != psi_prime.len() {
            return Err(dimension_mismatch("ExtendedFieldState", psi.len(), psi_prime.len()));
        }
        if psi.iter().chain(psi_prime.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QsdError::InvalidArgument("field amplitudes must be finite".into()));
        }
        Ok(ExtendedFieldState { psi, psi_prime })
    }

    /// `psi' = conj(psi)`, the unmeasured pairing.
    pub fn conjugate_start(psi: &StateVector) -> Self {
        ExtendedFieldState { psi: psi.amplitudes().clone(), psi_prime: psi.amplitudes().conjugate() }
    }

    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    pub fn psi(&self) -> &DVector<C64> {
        &self.psi
    }

    pub fn psi_prime(&self) -> &DVector<C64> {
        &self.psi_prime
    }

    pub fn psi_star(&self) -> DVector<C64> {
        self.psi.conjugate()
    }

    pub fn psi_star_prime(&self) -> DVector<C64> {
        self.psi_prime.conjugate()
    }

    /// `p_psi = -i psi'`.
    pub fn momentum(&self) -> DVector<C64> {
        &self.psi_prime * -I
    }

    /// `p_psi* = i conj(psi')`.
    pub fn conjugate_momentum(&self) -> DVector<C64> {
        self.psi_star_prime() * I
    }

    /// `|psi' - conj(psi)|`.
    pub fn conjugate_deviation(&self) -> f64 {
        (&self.psi_prime - self.psi.conjugate()).norm()
    }

    /// Real coordinates `(Re psi, Im psi, Re psi', Im psi')`.
    pub fn to_real(&self) -> Vec<f64> {
        let re = |v: &DVector<C64>| v.iter().map(|z| z.re).collect::<Vec<_>>();
        let im = |v: &DVector<C64>| v.iter().map(|z| z.im).collect::<Vec<_>>();
        [re(&self.psi), im(&self.psi), re(&self.psi_prime), im(&self.psi_prime)].concat()
    }

    pub fn from_real(x: &[f64]) -> Result<Self> {
        if !x.len().is_multiple_of(4) {
            return Err(QsdError::InvalidArgument("real field coordinates must have length 4N".into()));
        }
        let n = x.len() / 4;
        ExtendedFieldState::new(
            DVector::from_fn(n, |j, _| C64::new(x[j], x[n + j])),
            DVector::from_fn(n, |j, _| C64::new(x[2 * n + j], x[3 * n + j])),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDerivative {
    pub psi: DVector<C64>,
    pub psi_prime: DVector<C64>,
}

fn shifted(g: &HermitianOperator, mean: C64, v: &DVector<C64>) -> DVector<C64> {
    g.matrix() * v - v * mean
}

/// `dpsi/dt = -iH psi + Q psi`. Reads only `psi`.
fn psi_rhs(model: &QsdModel, psi: &DVector<C64>, nu: C64) -> DVector<C64> {
    let g = model.g();
    let mean = psi.dotc(&(g.matrix() * psi));
    let d = shifted(g, mean, psi);
    let dd = shifted(g, mean, &d);
    model.h().matrix() * psi * -I - dd * C64::new(0.5, 0.0) + d * nu
}

/// `dpsi'/dt` at the given `(psi, psi')`.
fn psi_prime_rhs(model: &QsdModel, psi: &DVector<C64>, psi_prime: &DVector<C64>, nu: C64) -> DVector<C64> {
    let g = model.g().matrix();
    let gt = g.transpose();
    let mean = psi.dotc(&(g * psi));
    let d = g * psi - psi * mean;
    let a = psi_prime.dot(&d);
    let b = psi_prime.dot(psi);
    // Q^T psi' with Q^T = -1/2 (G^T - g)^2 + (G^T - g) nu.
    let dt1 = &gt * psi_prime - psi_prime * mean;
    let dt2 = &gt * &dt1 - &dt1 * mean;
    let qt = dt2 * C64::new(-0.5, 0.0) + dt1 * nu;
    let chain = (a - nu * b).im;
    model.h().matrix().transpose() * psi_prime * I - qt - (&gt * psi.conjugate()) * (I * 2.0 * chain)
}

fn check_field(model: &QsdModel, state: &ExtendedFieldState, nu: C64) -> Result<()> {
    check_dims("qsd_field_rhs", model.dim(), state.dim())?;
    if !(nu.re.is_finite() && nu.im.is_finite()) {
        return Err(QsdError::InvalidArgument("noise rate must be finite".into()));
    }
    Ok(())
}

/// Time derivatives of `(psi, psi')` at a frozen noise rate `nu`.
///
/// `<G>` is taken without a normalization denominator, so `psi` should be
/// normalized for the `psi` equation to be the state-diffusion drift.
pub fn qsd_field_rhs(model: &QsdModel, state: &ExtendedFieldState, nu: C64) -> Result<FieldDerivative> {
    check_field(model, state, nu)?;
    Ok(FieldDerivative {
        psi: psi_rhs(model, &state.psi, nu),
        psi_prime: psi_prime_rhs(model, &state.psi, &state.psi_prime, nu),
    })
}

/// Finite-difference divergence of the full `(psi, psi')` field over its `4N` real coordinates.
pub fn extended_divergence(model: &QsdModel, state: &ExtendedFieldState, nu: C64) -> Result<f64> {
    check_field(model, state, nu)?;
    let field = |x: &[f64]| {
        let s = ExtendedFieldState::from_real(x).expect("finite perturbation");
        let d = FieldDerivative {
            psi: psi_rhs(model, &s.psi, nu),
            psi_prime: psi_prime_rhs(model, &s.psi, &s.psi_prime, nu),
        };
        ExtendedFieldState { psi: d.psi, psi_prime: d.psi_prime }.to_real()
    };
    Ok(fd_divergence(field, &state.to_real(), FD_STEP))
}

/// Finite-difference divergence of the `psi` equation alone over its `2N` real coordinates.
pub fn psi_divergence(model: &QsdModel, psi: &DVector<C64>, nu: C64) -> Result<f64> {
    check_dims("psi_divergence", model.dim(), psi.len())?;
    let n = psi.len();
    let field = |x: &[f64]| {
        let v = psi_rhs(model, &DVector::from_fn(n, |j, _| C64::new(x[j], x[n + j])), nu);
        v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect()
    };
    let x: Vec<f64> = psi.iter().map(|z| z.re).chain(psi.iter().map(|z| z.im)).collect();
    Ok(fd_divergence(field, &x, FD_STEP))
}

/// One RK4 step of `(psi, psi')` at frozen `nu`. The `psi` stages never read `psi'`.
pub fn field_rk4_step(model: &QsdModel, state: &ExtendedFieldState, nu: C64, dt: f64) -> Result<ExtendedFieldState> {
    check_field(model, state, nu)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QsdError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let half = C64::new(dt / 2.0, 0.0);
    let full = C64::new(dt, 0.0);
    let psi = &state.psi;
    let k1 = psi_rhs(model, psi, nu);
    let p2 = psi + &k1 * half;
    let k2 = psi_rhs(model, &p2, nu);
    let p3 = psi + &k2 * half;
    let k3 = psi_rhs(model, &p3, nu);
    let p4 = psi + &k3 * full;
    let k4 = psi_rhs(model, &p4, nu);

    let pp = &state.psi_prime;
    let l1 = psi_prime_rhs(model, psi, pp, nu);
    let l2 = psi_prime_rhs(model, &p2, &(pp + &l1 * half), nu);
    let l3 = psi_prime_rhs(model, &p3, &(pp + &l2 * half), nu);
    let l4 = psi_prime_rhs(model, &p4, &(pp + &l3 * full), nu);

    let sixth = C64::new(dt / 6.0, 0.0);
    Ok(ExtendedFieldState {
        psi: psi + (k1 + k2 * TWO + k3 * TWO + k4) * sixth,
        psi_prime: pp + (l1 + l2 * TWO + l3 * TWO + l4) * sixth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumDriftSeries {
    pub stream_id: Option<u64>,
    pub times: Vec<f64>,
    /// `|psi' - conj(psi)|`.
    pub deviation: Vec<f64>,
    pub psi_prime_norm: Vec<f64>,
}

impl MomentumDriftSeries {
    pub fn max_deviation(&self) -> f64 {
        self.deviation.iter().copied().fold(0.0, f64::max)
    }

    /// First recorded time at which the deviation exceeds `threshold`.
    pub fn first_exceeding(&self, threshold: f64) -> Option<f64> {
        self.times.iter().zip(&self.deviation).find(|(_, d)| **d > threshold).map(|(t, _)| *t)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "stream_id,t,deviation_norm,psi_prime_norm")?;
        let id = self.stream_id.map(|s| s.to_string()).unwrap_or_default();
        for ((t, d), n) in self.times.iter().zip(&self.deviation).zip(&self.psi_prime_norm) {
            writeln!(out, "{id},{t},{d},{n}")?;
        }
        Ok(())
    }
}

/// Co-integrates `(psi, psi')` from `psi' = conj(psi0)` and tracks how far `psi'`
/// drifts from `conj(psi)`.
///
/// The noise rate is `dxi / dt` from `noise`, frozen over each step; `None`
/// means `nu = 0`. After every step `psi` is rescaled to unit norm and `psi'`
/// by the inverse factor, which keeps `psi'^T psi` and the canonical pairing
/// unchanged. `psi'` itself has no norm constraint; a norm above
/// [`BLOW_UP_MAGNITUDE`] or a non-finite value is reported as a blow-up.
pub fn momentum_drift_experiment(
    model: &QsdModel,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
    mut noise: Option<NoiseStream>,
    record_every: usize,
) -> Result<MomentumDriftSeries> {
    check_dims("momentum_drift_experiment", model.dim(), psi0.dim())?;
    psi0.require_normalized("momentum_drift_experiment")?;
    if let Some(s) = &noise {
        if (s.dt() - dt).abs() > 1e-15 * dt {
            return Err(QsdError::InvalidArgument(format!("noise stream dt {} does not match dt {dt}", s.dt())));
        }
    }
    let n_steps = step_count(t_final, dt)?;
    let indices = record_indices(n_steps, record_every);
    let mut state = ExtendedFieldState::conjugate_start(psi0);
    let mut series = MomentumDriftSeries {
        stream_id: noise.as_ref().map(|s| s.stream_id()),
        times: vec![0.0],
        deviation: vec![state.conjugate_deviation()],
        psi_prime_norm: vec![state.psi_prime.norm()],
    };
    let mut next = 1;
    for k in 1..=n_steps {
        let t = k as f64 * dt;
        let nu = noise.as_mut().map_or(C64::new(0.0, 0.0), |s| s.next_increment().as_complex() / dt);
        state = field_rk4_step(model, &state, nu, dt)?;
        let norm = state.psi.norm();
        if !(norm > crate::hilbert::DEGENERATE_NORM && norm.is_finite()) {
            return Err(QsdError::DegenerateState { norm }.at_time(t));
        }
        state.psi.unscale_mut(norm);
        state.psi_prime.scale_mut(norm);
        let pn = state.psi_prime.norm();
        if !pn.is_finite() || pn > BLOW_UP_MAGNITUDE {
            return Err(QsdError::BlowUp { t, magnitude: pn });
        }
        if indices[next] == k {
            series.times.push(t);
            series.deviation.push(state.conjugate_deviation());
            series.psi_prime_norm.push(pn);
            next += 1;
        }
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceSample {
    pub state_id: usize,
    pub nu: C64,
    pub extended: f64,
    pub psi_only: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiouvilleScan {
    pub samples: Vec<DivergenceSample>,
    pub max_abs_extended: f64,
    pub max_abs_psi_only: f64,
}

impl LiouvilleScan {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "state_id,nu_re,nu_im,extended_div,psi_only_div")?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{},{}", s.state_id, s.nu.re, s.nu.im, s.extended, s.psi_only)?;
        }
        Ok(())
    }
}

/// Divergences at `state_count` random `(psi, psi')` pairs times `nu_count` random noise rates.
///
/// `psi` is uniformly distributed on the unit sphere, `psi'` has independent
/// standard complex Gaussian entries, and `nu` has standard normal parts.
pub fn liouville_scan(model: &QsdModel, state_count: usize, nu_count: usize, seed: u64) -> Result<LiouvilleScan> {
    let n = model.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let nus: Vec<C64> =
        (0..nu_count).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let mut samples = Vec::with_capacity(state_count * nu_count);
    for state_id in 0..state_count {
        let psi = haar_state(n, &mut rng).into_amplitudes();
        let psi_prime = DVector::from_fn(n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let state = ExtendedFieldState::new(psi, psi_prime)?;
        for &nu in &nus {
            samples.push(DivergenceSample {
                state_id,
                nu,
                extended: extended_divergence(model, &state, nu)?,
                psi_only: psi_divergence(model, &state.psi, nu)?,
            });
        }
    }
    let max_abs = |f: fn(&DivergenceSample) -> f64| samples.iter().map(|s| f(s).abs()).fold(0.0, f64::max);
    Ok(LiouvilleScan { max_abs_extended: max_abs(|s| s.extended), max_abs_psi_only: max_abs(|s| s.psi_only), samples })
}
