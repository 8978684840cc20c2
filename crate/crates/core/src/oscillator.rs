//! Real oscillator coordinates for state amplitudes, `psi_j = (q_j + i p_j) / sqrt(2)`,
//! and phase-space volume diagnostics with and without measurement.
//!
//! Real coordinates are ordered `(q_1..q_N, p_1..p_N)` throughout.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{QsdError, Result};
use crate::hilbert::{check_dims, normalize, HermitianOperator, StateVector, C64};
use crate::noise::NoiseStream;
use crate::propagator::{record_indices, step_count, QsdModel, StepScheme, Stepper};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillatorState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub omega: Vec<f64>,
}

fn check_omega(omega: &[f64]) -> Result<()> {
    if omega.iter().all(|w| *w > 0.0 && w.is_finite()) {
        Ok(())
    } else {
        Err(QsdError::InvalidArgument("oscillator frequencies must be positive and finite".into()))
    }
}

pub fn to_oscillator(psi: &StateVector, omega: &[f64]) -> Result<OscillatorState> {
    check_dims("to_oscillator", omega.len(), psi.dim())?;
    check_omega(omega)?;
    let a = psi.amplitudes();
    Ok(OscillatorState {
        q: a.iter().map(|z| SQRT2 * z.re).collect(),
        p: a.iter().map(|z| SQRT2 * z.im).collect(),
        omega: omega.to_vec(),
    })
}

pub fn from_oscillator(state: &OscillatorState) -> Result<StateVector> {
    StateVector::new(state.q.iter().zip(&state.p).map(|(q, p)| C64::new(*q, *p) / SQRT2).collect())
}

/// `sum_j omega_j (q_j^2 + p_j^2) / 2`.
pub fn oscillator_energy(state: &OscillatorState) -> f64 {
    state.q.iter().zip(&state.p).zip(&state.omega).map(|((q, p), w)| 0.5 * w * (q * q + p * p)).sum()
}

/// Hamilton's equations `dq/dt = omega p`, `dp/dt = -omega q`.
fn hamilton_field(omega: &[f64], x: &[f64]) -> Vec<f64> {
    let n = omega.len();
    let mut out = vec![0.0; 2 * n];
    for j in 0..n {
        out[j] = omega[j] * x[n + j];
        out[n + j] = -omega[j] * x[j];
    }
    out
}

fn rk4_real<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], dt: f64) -> Vec<f64> {
    let add = |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<_>>();
    let k1 = f(x);
    let k2 = f(&add(x, &k1, dt / 2.0));
    let k3 = f(&add(x, &k2, dt / 2.0));
    let k4 = f(&add(x, &k3, dt));
    (0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

fn hamilton_flow(omega: &[f64], x0: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
    let n = step_count(t, dt)?;
    let mut x = x0.to_vec();
    for _ in 0..n {
        x = rk4_real(&|y: &[f64]| hamilton_field(omega, y), &x, dt);
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowCheckReport {
    pub t_final: f64,
    pub dt: f64,
    /// Max component deviation of the `(q, p)` integration from the closed form.
    pub hamilton_deviation: f64,
    /// Max amplitude deviation of the Schrodinger integration from `psi_j(0) exp(-i omega_j t)`.
    pub schrodinger_deviation: f64,
    /// Max deviation between the two integrations after mapping `(q, p)` back to amplitudes.
    pub cross_deviation: f64,
    pub energy_drift: f64,
    pub pass: bool,
}

/// Integrates `(q, p)` and `psi` independently with RK4 and compares both with the closed form.
pub fn hamilton_flow_check(omega: &[f64], psi0: &StateVector, t_final: f64, dt: f64) -> Result<FlowCheckReport> {
    let osc0 = to_oscillator(psi0, omega)?;
    let n_steps = step_count(t_final, dt)?;
    let n = omega.len();
    let mut x: Vec<f64> = osc0.q.iter().chain(&osc0.p).copied().collect();
    let mut psi: Vec<C64> = psi0.amplitudes().iter().copied().collect();
    let e0 = oscillator_energy(&osc0);

    let schrodinger = |z: &[C64]| z.iter().zip(omega).map(|(a, w)| a * C64::new(0.0, -w)).collect::<Vec<_>>();
    let (mut dev_h, mut dev_s, mut dev_x, mut drift) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 1..=n_steps {
        x = rk4_real(&|y: &[f64]| hamilton_field(omega, y), &x, dt);
        let k1 = schrodinger(&psi);
        let k2 = schrodinger(&axpy(&psi, &k1, dt / 2.0));
        let k3 = schrodinger(&axpy(&psi, &k2, dt / 2.0));
        let k4 = schrodinger(&axpy(&psi, &k3, dt));
        for j in 0..n {
            psi[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (dt / 6.0);
        }

        let t = k as f64 * dt;
        for j in 0..n {
            let exact = psi0.amplitudes()[j] * C64::from_polar(1.0, -omega[j] * t);
            dev_h = dev_h.max((x[j] - SQRT2 * exact.re).abs()).max((x[n + j] - SQRT2 * exact.im).abs());
            dev_s = dev_s.max((psi[j] - exact).norm());
            dev_x = dev_x.max((psi[j] - C64::new(x[j], x[n + j]) / SQRT2).norm());
        }
        let energy: f64 = (0..n).map(|j| 0.5 * omega[j] * (x[j] * x[j] + x[n + j] * x[n + j])).sum();
        drift = drift.max((energy - e0).abs());
    }
    Ok(FlowCheckReport {
        t_final,
        dt,
        hamilton_deviation: dev_h,
        schrodinger_deviation: dev_s,
        cross_deviation: dev_x,
        energy_drift: drift,
        pass: dev_h < 1e-6 && dev_s < 1e-6,
    })
}

fn axpy(x: &[C64], y: &[C64], s: f64) -> Vec<C64> {
    x.iter().zip(y).map(|(a, b)| a + b * s).collect()
}

/// Central-difference Jacobian of the time-`t` Hamilton flow at `(q, p)`.
pub fn flow_jacobian(omega: &[f64], state: &OscillatorState, t: f64, dt: f64, h: f64) -> Result<DMatrix<f64>> {
    check_omega(omega)?;
    let x0: Vec<f64> = state.q.iter().chain(&state.p).copied().collect();
    let m = x0.len();
    let mut jac = DMatrix::zeros(m, m);
    for c in 0..m {
        let mut plus = x0.clone();
        let mut minus = x0.clone();
        plus[c] += h;
        minus[c] -= h;
        let fp = hamilton_flow(omega, &plus, t, dt)?;
        let fm = hamilton_flow(omega, &minus, t, dt)?;
        for r in 0..m {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Standard symplectic form for `(q, p)` ordering.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        omega[(j, n + j)] = 1.0;
        omega[(n + j, j)] = -1.0;
    }
    omega
}

/// `max |J^T Omega J - Omega|`.
pub fn symplectic_defect(jac: &DMatrix<f64>) -> f64 {
    let form = symplectic_form(jac.nrows() / 2);
    (jac.transpose() * &form * jac - form).amax()
}

/// Central-difference divergence of a real vector field.
pub fn fd_divergence<F: Fn(&[f64]) -> Vec<f64>>(field: F, x: &[f64], h: f64) -> f64 {
    let mut div = 0.0;
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let fp = field(&y)[i];
        y[i] = x[i] - h;
        let fm = field(&y)[i];
        y[i] = x[i];
        div += (fp - fm) / (2.0 * h);
    }
    div
}

/// Finite-difference divergence of the oscillator field at `(q, p)`; zero for Hamiltonian flow.
pub fn unitary_divergence(state: &OscillatorState, h: f64) -> f64 {
    let x: Vec<f64> = state.q.iter().chain(&state.p).copied().collect();
    fd_divergence(|y| hamilton_field(&state.omega, y), &x, h)
}

fn to_real(psi: &DVector<C64>) -> Vec<f64> {
    psi.iter().map(|z| z.re).chain(psi.iter().map(|z| z.im)).collect()
}

fn from_real(x: &[f64]) -> DVector<C64> {
    let n = x.len() / 2;
    DVector::from_fn(n, |j, _| C64::new(x[j], x[n + j]))
}

/// Noise-free measurement drift `-1/2 G_d^2 psi`, projected onto the tangent space of the norm sphere.
fn sphere_measurement_drift(g: &HermitianOperator, x: &[f64]) -> Vec<f64> {
    let psi = from_real(x);
    let norm_sqr = psi.norm_squared();
    let gpsi = g.matrix() * &psi;
    let mean = psi.dotc(&gpsi).re / norm_sqr;
    let shifted = &gpsi - &psi * C64::new(mean, 0.0);
    let g2 = g.matrix() * &shifted - &shifted * C64::new(mean, 0.0);
    let v = to_real(&(g2 * C64::new(-0.5, 0.0)));
    let radial: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / norm_sqr;
    v.iter().zip(x).map(|(a, b)| a - radial * b).collect()
}

/// Orthonormal basis of the complement of `x` in `R^m`.
fn tangent_basis(x: &[f64]) -> Vec<Vec<f64>> {
    let m = x.len();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<f64>> = vec![x.iter().map(|v| v / norm).collect()];
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        for b in &basis {
            let d: f64 = e.iter().zip(b).map(|(a, c)| a * c).sum();
            e.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
        }
        let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-8 {
            basis.push(e.into_iter().map(|v| v / n).collect());
        }
        if basis.len() == m {
            break;
        }
    }
    basis.remove(0);
    basis
}

/// Divergence on the unit sphere of the noise-free, norm-preserving measurement drift at `psi`.
pub fn sphere_drift_divergence(g: &HermitianOperator, psi: &StateVector, h: f64) -> Result<f64> {
    check_dims("sphere_drift_divergence", g.dim(), psi.dim())?;
    psi.require_normalized("sphere_drift_divergence")?;
    let x = to_real(psi.amplitudes());
    let mut div = 0.0;
    for e in tangent_basis(&x) {
        let step = |s: f64| x.iter().zip(&e).map(|(a, b)| a + s * b).collect::<Vec<_>>();
        let fp = sphere_measurement_drift(g, &step(h));
        let fm = sphere_measurement_drift(g, &step(-h));
        div += fp.iter().zip(&fm).zip(&e).map(|((a, b), c)| (a - b) * c).sum::<f64>() / (2.0 * h);
    }
    Ok(div)
}

/// Dynamics applied to every member of a state cloud.
#[derive(Debug, Clone)]
pub enum CloudDynamics<'a> {
    /// Exact `exp(-iH dt)` per step.
    Unitary(&'a HermitianOperator),
    /// QSD steps driven by stream 0 of `noise_seed`, shared by all members.
    Measurement { model: &'a QsdModel, scheme: StepScheme, noise_seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeConfig {
    pub cloud_size: usize,
    pub spread: f64,
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    pub cloud_seed: u64,
}

impl VolumeConfig {
    pub fn new(cloud_size: usize, t_final: f64, dt: f64) -> Self {
        VolumeConfig { cloud_size, spread: 1e-2, t_final, dt, record_every: 1, cloud_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumePoint {
    pub t: f64,
    /// Half the log-determinant of the cloud covariance; `None` once the cloud is fully localized.
    pub log_volume: Option<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeSeries {
    /// Number of physical tangent directions, `2N - 2`.
    pub tangent_dim: usize,
    pub points: Vec<VolumePoint>,
}

impl VolumeSeries {
    pub fn fully_localized(&self) -> bool {
        self.points.last().is_some_and(|p| p.log_volume.is_none())
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "t,log_volume,rank")?;
        for p in &self.points {
            match p.log_volume {
                Some(v) => writeln!(out, "{},{},{}", p.t, v, p.rank)?,
                None => writeln!(out, "{},,{}", p.t, p.rank)?,
            }
        }
        Ok(())
    }
}

/// Covariance eigenvalues below this count as collapsed directions.
const RANK_TOLERANCE: f64 = 1e-26;

/// Log-volume proxy of a cloud whose member 0 is the reference state.
///
/// Each member is phase-aligned with the reference and expressed in an orthonormal
/// basis of the reference's orthogonal complement, which removes the norm and global
/// phase directions. Coordinates are scaled by `sqrt(2)` to match `(q, p)`.
pub fn cloud_log_volume(cloud: &[DVector<C64>]) -> (Option<f64>, usize) {
    let reference = &cloud[0];
    let n = reference.len();
    let r_norm = reference.norm();
    let r_hat = reference / C64::new(r_norm, 0.0);
    // Orthonormal complement of r_hat via Gram-Schmidt over the standard basis.
    let mut basis: Vec<DVector<C64>> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let mut e = DVector::<C64>::zeros(n);
        e[i] = C64::new(1.0, 0.0);
        let d = r_hat.dotc(&e);
        e -= &r_hat * d;
        for b in &basis {
            let d = b.dotc(&e);
            e -= b * d;
        }
        let norm = e.norm();
        if norm > 1e-6 {
            basis.push(e / C64::new(norm, 0.0));
        }
        if basis.len() == n - 1 {
            break;
        }
    }
    let dim = 2 * (n - 1);
    if dim == 0 {
        return (Some(0.0), 0);
    }
    let coords: Vec<Vec<f64>> = cloud
        .iter()
        .map(|psi| {
            let overlap = r_hat.dotc(psi);
            let phase = if overlap.norm() > 0.0 { overlap.conj() / overlap.norm() } else { C64::new(1.0, 0.0) };
            let scale = phase / C64::new(psi.norm(), 0.0);
            let mut c = Vec::with_capacity(dim);
            for b in &basis {
                let z = b.dotc(psi) * scale;
                c.push(SQRT2 * z.re);
                c.push(SQRT2 * z.im);
            }
            c
        })
        .collect();
    let k = coords.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|d| coords.iter().map(|c| c[d]).sum::<f64>() / k).collect();
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for c in &coords {
        for a in 0..dim {
            for b in 0..dim {
                cov[(a, b)] += (c[a] - mean[a]) * (c[b] - mean[b]);
            }
        }
    }
    cov /= k - 1.0;
    let eig = cov.symmetric_eigen().eigenvalues;
    let rank = eig.iter().filter(|&&v| v > RANK_TOLERANCE).count();
    if rank < dim {
        (None, rank)
    } else {
        (Some(0.5 * eig.iter().map(|v| v.ln()).sum::<f64>()), rank)
    }
}

/// Evolves a cloud of `cloud_size` states around `psi0` and tracks its log-volume proxy.
pub fn volume_diagnostic(
    dynamics: &CloudDynamics<'_>,
    psi0: &StateVector,
    config: &VolumeConfig,
) -> Result<VolumeSeries> {
    let n = psi0.dim();
    psi0.require_normalized("volume_diagnostic")?;
    let model_dim = match dynamics {
        CloudDynamics::Unitary(h) => h.dim(),
        CloudDynamics::Measurement { model, .. } => model.dim(),
    };
    check_dims("volume_diagnostic", model_dim, n)?;
    if config.cloud_size < 2 * n + 2 {
        return Err(QsdError::InvalidArgument(format!(
            "cloud_size must be at least 2N + 2 = {}, got {}",
            2 * n + 2,
            config.cloud_size
        )));
    }
    if !(config.spread >= 0.0 && config.spread.is_finite()) {
        return Err(QsdError::InvalidArgument("spread must be non-negative".into()));
    }
    let n_steps = step_count(config.t_final, config.dt)?;
    let indices = record_indices(n_steps, config.record_every);

    let mut rng = ChaCha20Rng::seed_from_u64(config.cloud_seed);
    let mut cloud: Vec<DVector<C64>> = vec![psi0.amplitudes().clone()];
    for _ in 1..config.cloud_size {
        let kick = DVector::from_fn(n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let raw = StateVector::from_dvector(psi0.amplitudes() + kick * C64::new(config.spread, 0.0))?;
        cloud.push(normalize(&raw)?.into_amplitudes());
    }

    let mut points = Vec::with_capacity(indices.len());
    let record = |cloud: &[DVector<C64>], k: usize, points: &mut Vec<VolumePoint>| {
        let (log_volume, rank) = cloud_log_volume(cloud);
        points.push(VolumePoint { t: k as f64 * config.dt, log_volume, rank });
    };
    record(&cloud, 0, &mut points);

    let mut next = 1;
    match dynamics {
        CloudDynamics::Unitary(h) => {
            let u = h.unitary_propagator(config.dt);
            for k in 1..=n_steps {
                for psi in cloud.iter_mut() {
                    *psi = &u * &*psi;
                }
                if indices[next] == k {
                    record(&cloud, k, &mut points);
                    next += 1;
                }
            }
        }
        CloudDynamics::Measurement { model, scheme, noise_seed } => {
            if (scheme.dt - config.dt).abs() > 1e-15 * config.dt {
                return Err(QsdError::InvalidArgument("scheme dt must equal the volume dt".into()));
            }
            let mut stream = NoiseStream::new(*noise_seed, 0, config.dt)?;
            let mut stepper = Stepper::new(model, *scheme);
            for k in 1..=n_steps {
                let dxi = stream.next_increment();
                for psi in cloud.iter_mut() {
                    stepper.advance(psi, dxi).map_err(|e| e.at_time(k as f64 * config.dt))?;
                }
                if indices[next] == k {
                    record(&cloud, k, &mut points);
                    next += 1;
                }
            }
        }
    }
    Ok(VolumeSeries { tangent_dim: 2 * (n - 1), points })
}
