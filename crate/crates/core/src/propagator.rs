//! Single-trajectory integration of the quantum state diffusion equation
//!
//! ```text
//! d|psi> = -i H |psi> dt - 1/2 G_d^2 |psi> dt + G_d |psi> dxi,   G_d = G - <G>_psi
//! ```
//!
//! in the Ito sense, with the increment `dxi` consumed directly.

use std::io::{self, Write};

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::hilbert::{check_dims, HermitianOperator, StateVector, C64, DEGENERATE_NORM};
use crate::noise::{ComplexIncrement, NoiseStream};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Hamiltonian `H` and measured operator `G` (rate constant absorbed) on a common space.
#[derive(Debug, Clone, PartialEq)]
pub struct QsdModel {
    h: HermitianOperator,
    g: HermitianOperator,
}

impl QsdModel {
    pub fn new(h: HermitianOperator, g: HermitianOperator) -> Result<Self> {
        check_dims("QsdModel H vs G", h.dim(), g.dim())?;
        Ok(QsdModel { h, g })
    }

    /// `H = 0`.
    pub fn pure_measurement(g: HermitianOperator) -> Self {
        QsdModel { h: HermitianOperator::zeros(g.dim()), g }
    }

    /// `G = 0`.
    pub fn unitary(h: HermitianOperator) -> Self {
        QsdModel { g: HermitianOperator::zeros(h.dim()), h }
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn h(&self) -> &HermitianOperator {
        &self.h
    }

    pub fn g(&self) -> &HermitianOperator {
        &self.g
    }

    /// `[H, G] = 0` to tolerance.
    pub fn is_commuting(&self) -> bool {
        self.h.commutes_with(&self.g)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// `psi + drift dt + diffusion dxi`, no renormalization.
    EulerMaruyama,
    /// Euler-Maruyama followed by renormalization.
    #[default]
    EulerRenormalized,
    /// Exact `exp(-iH dt)` for the Hamiltonian part, then an Euler-Maruyama
    /// measurement increment and renormalization.
    ExponentialRenormalized,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] =
        [SchemeKind::EulerMaruyama, SchemeKind::EulerRenormalized, SchemeKind::ExponentialRenormalized];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::EulerMaruyama => "euler-maruyama",
            SchemeKind::EulerRenormalized => "euler-renormalized",
            SchemeKind::ExponentialRenormalized => "exponential-renormalized",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn renormalizes(self) -> bool {
        !matches!(self, SchemeKind::EulerMaruyama)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepScheme {
    pub kind: SchemeKind,
    pub dt: f64,
}

impl StepScheme {
    pub fn new(kind: SchemeKind, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(QsdError::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(StepScheme { kind, dt })
    }

    /// `dt * rho(G^2)`; values at or above 0.5 make the explicit step unreliable.
    pub fn stiffness(&self, model: &QsdModel) -> f64 {
        let r = model.g().spectral_radius();
        self.dt * r * r
    }

    pub fn warn_if_stiff(&self, model: &QsdModel) {
        let s = self.stiffness(model);
        if s >= 0.5 {
            warn!("dt * rho(G^2) = {s:.3} >= 0.5; the explicit QSD step is likely unstable");
        }
    }
}

/// `(-iH - 1/2 G_d^2) psi` with `G_d` shifted by the expectation in `psi`.
pub fn drift(model: &QsdModel, psi: &StateVector) -> Result<DVector<C64>> {
    check_dims("drift", model.dim(), psi.dim())?;
    psi.require_normalized("drift")?;
    let mut ws = Workspace::new(model.dim());
    ws.measurement_terms(model.g(), psi.amplitudes());
    let hpsi = model.h().matrix() * psi.amplitudes();
    Ok(hpsi * C64::new(0.0, -1.0) - &ws.g2psi * C64::new(0.5, 0.0))
}

/// `G_d psi`; the noise increment applied by a step is `G_d psi * dxi`.
pub fn diffusion(model: &QsdModel, psi: &StateVector) -> Result<DVector<C64>> {
    check_dims("diffusion", model.dim(), psi.dim())?;
    psi.require_normalized("diffusion")?;
    let mut ws = Workspace::new(model.dim());
    ws.measurement_terms(model.g(), psi.amplitudes());
    Ok(ws.gpsi_shifted)
}

/// One step from a normalized state.
pub fn step(model: &QsdModel, psi: &StateVector, scheme: &StepScheme, dxi: ComplexIncrement) -> Result<StateVector> {
    check_dims("step", model.dim(), psi.dim())?;
    psi.require_normalized("step")?;
    let mut stepper = Stepper::new(model, *scheme);
    let mut amps = psi.amplitudes().clone();
    stepper.advance(&mut amps, dxi)?;
    StateVector::from_dvector(amps)
}

#[derive(Debug, Clone)]
struct Workspace {
    gpsi: DVector<C64>,
    gpsi_shifted: DVector<C64>,
    g2psi: DVector<C64>,
    hpsi: DVector<C64>,
    tmp: DVector<C64>,
    mean: f64,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            gpsi: DVector::zeros(n),
            gpsi_shifted: DVector::zeros(n),
            g2psi: DVector::zeros(n),
            hpsi: DVector::zeros(n),
            tmp: DVector::zeros(n),
            mean: 0.0,
        }
    }

    /// Fills `gpsi_shifted = G_d psi` and `g2psi = G_d^2 psi`, with `<G>` taken on `psi / |psi|`.
    fn measurement_terms(&mut self, g: &HermitianOperator, psi: &DVector<C64>) {
        self.gpsi.gemv(ONE, g.matrix(), psi, ZERO);
        let norm_sqr = psi.norm_squared();
        self.mean = psi.dotc(&self.gpsi).re / norm_sqr;
        let shift = C64::new(self.mean, 0.0);
        self.gpsi_shifted.copy_from(&self.gpsi);
        self.gpsi_shifted.axpy(-shift, psi, ONE);
        self.g2psi.gemv(ONE, g.matrix(), &self.gpsi_shifted, ZERO);
        self.g2psi.axpy(-shift, &self.gpsi_shifted, ONE);
    }
}

/// Reusable integrator state for one model and scheme.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    model: &'a QsdModel,
    scheme: StepScheme,
    unitary: Option<DMatrix<C64>>,
    h_is_zero: bool,
    g_is_zero: bool,
    ws: Workspace,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a QsdModel, scheme: StepScheme) -> Self {
        let h_is_zero = model.h().is_zero();
        let unitary = (scheme.kind == SchemeKind::ExponentialRenormalized && !h_is_zero)
            .then(|| model.h().unitary_propagator(scheme.dt));
        Stepper { model, scheme, unitary, h_is_zero, g_is_zero: model.g().is_zero(), ws: Workspace::new(model.dim()) }
    }

    pub fn scheme(&self) -> &StepScheme {
        &self.scheme
    }

    /// Advances `psi` in place and returns its norm before any renormalization.
    pub fn advance(&mut self, psi: &mut DVector<C64>, dxi: ComplexIncrement) -> Result<f64> {
        let dt = self.scheme.dt;
        let ws = &mut self.ws;

        if let Some(u) = &self.unitary {
            ws.tmp.gemv(ONE, u, psi, ZERO);
            psi.copy_from(&ws.tmp);
        } else if !self.h_is_zero {
            // Euler schemes: the Hamiltonian part is part of the drift at the current state.
            ws.hpsi.gemv(ONE, self.model.h().matrix(), psi, ZERO);
        }

        if !self.g_is_zero {
            ws.measurement_terms(self.model.g(), psi);
        }

        if self.unitary.is_none() && !self.h_is_zero {
            psi.axpy(C64::new(0.0, -dt), &ws.hpsi, ONE);
        }
        if !self.g_is_zero {
            psi.axpy(C64::new(-0.5 * dt, 0.0), &ws.g2psi, ONE);
            psi.axpy(dxi.as_complex(), &ws.gpsi_shifted, ONE);
        }

        let norm = psi.norm();
        if norm.is_nan() || norm <= DEGENERATE_NORM {
            return Err(QsdError::DegenerateState { norm });
        }
        if self.scheme.kind.renormalizes() {
            psi.unscale_mut(norm);
        }
        Ok(norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub stream_id: u64,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub expectation_g: Vec<f64>,
    pub variance_g: Vec<f64>,
    /// State norm at each record; for renormalizing schemes, the norm just before renormalization.
    pub norm: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("records always include t = 0")
    }

    pub fn csv_header(dim: usize, amplitudes: bool, keyed: bool) -> String {
        let mut cols: Vec<String> = Vec::new();
        if keyed {
            cols.push("trajectory".into());
        }
        cols.push("t".into());
        if amplitudes {
            for j in 0..dim {
                cols.push(format!("re_{j}"));
                cols.push(format!("im_{j}"));
            }
        }
        cols.extend(["expectation_G", "variance_G", "norm"].map(String::from));
        cols.join(",")
    }

    /// Writes the data rows (no header). `keyed` prefixes each row with the stream id.
    pub fn write_csv_rows<W: Write>(&self, out: &mut W, amplitudes: bool, keyed: bool) -> io::Result<()> {
        for i in 0..self.len() {
            if keyed {
                write!(out, "{},", self.stream_id)?;
            }
            write!(out, "{}", self.times[i])?;
            if amplitudes {
                for z in self.states[i].amplitudes().iter() {
                    write!(out, ",{},{}", z.re, z.im)?;
                }
            }
            writeln!(out, ",{},{},{}", self.expectation_g[i], self.variance_g[i], self.norm[i])?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: &mut W, amplitudes: bool) -> io::Result<()> {
        let dim = self.states.first().map_or(0, StateVector::dim);
        writeln!(out, "{}", Self::csv_header(dim, amplitudes, false))?;
        self.write_csv_rows(out, amplitudes, false)
    }
}

/// Number of `dt` steps covering `t_final`; `t_final` must be a whole number of steps.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(QsdError::InvalidArgument(format!("t_final must be positive, got {t_final}")));
    }
    let n = (t_final / dt).round();
    if n < 1.0 || (n * dt - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(QsdError::InvalidArgument(format!(
            "t_final = {t_final} is not a whole number of steps of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Step indices at which a record is taken: every `record_every` steps plus the last step.
pub fn record_indices(n_steps: usize, record_every: usize) -> Vec<usize> {
    let every = record_every.max(1);
    let mut idx: Vec<usize> = (0..=n_steps).step_by(every).collect();
    if *idx.last().unwrap() != n_steps {
        idx.push(n_steps);
    }
    idx
}

fn diagnostics(g: &HermitianOperator, psi: &DVector<C64>, ws: &mut Workspace) -> (f64, f64) {
    ws.measurement_terms(g, psi);
    let var = ws.gpsi_shifted.norm_squared() / psi.norm_squared();
    (ws.mean, var.max(0.0))
}

/// Integrates one trajectory from `psi0` to `t_final`, recording every `record_every` steps.
pub fn evolve_trajectory(
    model: &QsdModel,
    psi0: &StateVector,
    scheme: &StepScheme,
    mut stream: NoiseStream,
    t_final: f64,
    record_every: usize,
) -> Result<TrajectoryRecord> {
    check_dims("evolve_trajectory", model.dim(), psi0.dim())?;
    psi0.require_normalized("evolve_trajectory")?;
    if (stream.dt() - scheme.dt).abs() > 1e-15 * scheme.dt {
        return Err(QsdError::InvalidArgument(format!(
            "noise stream dt {} does not match scheme dt {}",
            stream.dt(),
            scheme.dt
        )));
    }
    if record_every == 0 {
        return Err(QsdError::InvalidArgument("record_every must be at least 1".into()));
    }
    let n_steps = step_count(t_final, scheme.dt)?;
    let indices = record_indices(n_steps, record_every);

    let mut stepper = Stepper::new(model, *scheme);
    let mut diag_ws = Workspace::new(model.dim());
    let mut psi = psi0.amplitudes().clone();
    let mut record = TrajectoryRecord {
        stream_id: stream.stream_id(),
        times: Vec::with_capacity(indices.len()),
        states: Vec::with_capacity(indices.len()),
        expectation_g: Vec::with_capacity(indices.len()),
        variance_g: Vec::with_capacity(indices.len()),
        norm: Vec::with_capacity(indices.len()),
    };
    let mut push = |record: &mut TrajectoryRecord, k: usize, psi: &DVector<C64>, norm: f64| {
        let (mean, var) = diagnostics(model.g(), psi, &mut diag_ws);
        record.times.push(k as f64 * scheme.dt);
        record.states.push(StateVector::from_dvector(psi.clone()).expect("finite state"));
        record.expectation_g.push(mean);
        record.variance_g.push(var);
        record.norm.push(norm);
    };

    push(&mut record, 0, &psi, psi.norm());
    let mut next = 1;
    for k in 1..=n_steps {
        let dxi = stream.next_increment();
        let norm = stepper.advance(&mut psi, dxi).map_err(|e| e.at_time(k as f64 * scheme.dt))?;
        if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QsdError::BlowUp { t: k as f64 * scheme.dt, magnitude: norm }.at_time(k as f64 * scheme.dt));
        }
        if indices[next] == k {
            push(&mut record, k, &psi, norm);
            next += 1;
        }
    }
    Ok(record)
}
