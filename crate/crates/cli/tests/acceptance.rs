//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the criteria execute in order
//! and the summary is printed even when an earlier criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::E;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use qsd_cli::{parse_config_str, run};
use qsd_core::ensemble::{martingale_check, run_ensemble, EnsembleSpec, EnsembleStats, InitialState, MartingaleReport};
use qsd_core::hilbert::expectation;
use qsd_core::lagrangian::{
    evolve_toy, field_rk4_step, liouville_scan, momentum_drift_experiment, psi_divergence, qsd_field_rhs,
    toy_divergence, toy_fd_divergence, toy_q_divergence, ExtendedFieldState, ToyModel, FD_STEP,
};
use qsd_core::lindblad::evolve_rho;
use qsd_core::noise::moment_report;
use qsd_core::oscillator::{oscillator_energy, to_oscillator, volume_diagnostic, CloudDynamics, VolumeConfig};
use qsd_core::propagator::{evolve_trajectory, step};
use qsd_core::{DensityMatrix, HermitianOperator, NoiseStream, QsdModel, SchemeKind, StateVector, StepScheme, C64};

const I: C64 = C64::new(0.0, 1.0);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn sz() -> HermitianOperator {
    HermitianOperator::diagonal(&[1.0, -1.0]).unwrap()
}

fn qubit(p0: f64) -> StateVector {
    StateVector::from_real(&[p0.sqrt(), (1.0 - p0).sqrt()]).unwrap()
}

/// Deterministic, well-spread test vector of dimension `n` (not normalized).
fn spread_vector(n: usize, seed: usize) -> DVector<C64> {
    DVector::from_fn(n, |j, _| {
        let k = (seed * 7 + j * 3 + 1) as f64;
        c((1.3 * k).sin() + 0.2, (2.1 * k + 0.4).cos())
    })
}

fn spread_state(n: usize, seed: usize) -> StateVector {
    let v = spread_vector(n, seed);
    let norm = v.norm();
    StateVector::from_dvector(v / c(norm, 0.0)).unwrap()
}

fn criterion_1() -> Outcome {
    let dt = 0.01;
    let r = moment_report(20260101, 100, 10_000, dt).unwrap();
    let n = r.stream_count * r.draws_per_stream;
    let checks = [
        ("M dxi re", r.mean_re, 0.0),
        ("M dxi im", r.mean_im, 0.0),
        ("M dxi^2 re", r.mean_square_re, 0.0),
        ("M dxi^2 im", r.mean_square_im, 0.0),
        ("M |dxi|^2", r.mean_abs_square, dt),
    ];
    let pass = n == 1_000_000 && checks.iter().all(|(_, e, target)| e.within(*target, 4.0));
    let worst = checks
        .iter()
        .map(|(name, e, target)| (name, (e.value - target).abs() / e.std_error))
        .fold(("", 0.0f64), |best, (name, z)| if z > best.1 { (name, z) } else { best });
    Outcome::new(pass, format!("{n} draws, worst |z| = {:.2} ({})", worst.1, worst.0))
}

fn criterion_2() -> Outcome {
    let omega = [0.7, 1.3, 2.9];
    let psi0 = StateVector::new(vec![c(0.6, 0.0), c(0.0, 0.48), c(0.64, 0.0)]).unwrap();
    let (dt, t_final) = (1e-4, 10.0);
    let model = QsdModel::unitary(HermitianOperator::diagonal(&omega).unwrap());
    let scheme = StepScheme::new(SchemeKind::ExponentialRenormalized, dt).unwrap();
    let rec = evolve_trajectory(&model, &psi0, &scheme, NoiseStream::new(3, 0, dt).unwrap(), t_final, 1000).unwrap();
    let mut amp_err = 0.0f64;
    let mut energy_drift = 0.0f64;
    let e0: f64 = omega.iter().zip(psi0.amplitudes().iter()).map(|(w, z)| w * z.norm_sqr()).sum();
    for (t, s) in rec.times.iter().zip(&rec.states) {
        for (j, z) in s.amplitudes().iter().enumerate() {
            let exact = psi0.amplitudes()[j] * (-I * omega[j] * *t).exp();
            amp_err = amp_err.max((z - exact).norm());
        }
        let osc = to_oscillator(s, &omega).unwrap();
        energy_drift = energy_drift.max((oscillator_energy(&osc) - e0).abs());
    }
    let reached = (rec.times.last().unwrap() - t_final).abs() < 1e-9;
    Outcome::new(
        reached && amp_err < 1e-4 && energy_drift < 1e-6,
        format!("amplitude error {amp_err:.2e} (< 1e-4), energy drift {energy_drift:.2e} (< 1e-6)"),
    )
}

fn criterion_3() -> Outcome {
    // Raw Euler-Maruyama, H = 0, G = sigma_z at (sqrt 0.3, sqrt 0.7). The exact
    // one-step mean is 1/4 <G_d^4> dt^2, an O(dt^2) remainder; the O(dt) terms cancel.
    let psi = qubit(0.3);
    let g_mean = expectation(&psi, &sz()).unwrap();
    let d4: f64 = [(0.3, 1.0), (0.7, -1.0)].iter().map(|(p, x)| p * (x - g_mean).powi(4)).sum();
    let model = QsdModel::pure_measurement(sz());
    let samples = 200_000;
    let mut lines = Vec::new();
    let mut pass = true;
    for (k, dt) in [1e-2, 1e-3].into_iter().enumerate() {
        let scheme = StepScheme::new(SchemeKind::EulerMaruyama, dt).unwrap();
        let mut stream = NoiseStream::new(777, k as u64, dt).unwrap();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..samples {
            let next = step(&model, &psi, &scheme, stream.next_increment()).unwrap();
            let change = next.norm_sqr() - 1.0;
            sum += change;
            sum_sq += change * change;
        }
        let n = samples as f64;
        let mean = sum / n;
        let se = ((sum_sq / n - mean * mean) / (n - 1.0)).sqrt();
        let remainder = 0.25 * d4 * dt * dt;
        pass &= mean.abs() <= 4.0 * se && (mean - remainder).abs() <= 4.0 * se;
        lines.push(format!("dt={dt:e}: mean {mean:.2e} +/- {se:.1e} (O(dt^2) term {remainder:.1e})"));
    }
    Outcome::new(pass, lines.join("; "))
}

fn qubit_ensemble(initial: InitialState, t_final: f64, seed: u64, record_every: usize) -> EnsembleStats {
    let spec = EnsembleSpec {
        model: QsdModel::pure_measurement(sz()),
        initial,
        scheme: StepScheme::new(SchemeKind::EulerRenormalized, 1e-3).unwrap(),
        trajectories: 10_000,
        master_seed: seed,
        t_final,
        record_every,
    };
    run_ensemble(&spec).unwrap()
}

fn criterion_4() -> Outcome {
    let stats = qubit_ensemble(InitialState::Fixed(qubit(0.5)), 10.0, 4040, 1000);
    let localized = stats.localized_fraction(0.99);
    let variance = *stats.mean_variance.last().unwrap();
    Outcome::new(
        localized >= 0.99 && variance < 0.01,
        format!("localized fraction {localized:.4} (>= 0.99), final mean Var G {variance:.2e} (< 0.01)"),
    )
}

fn martingale_line(stats: &EnsembleStats) -> (bool, String) {
    match martingale_check(stats) {
        MartingaleReport::Evaluated { points, pass, .. } => {
            let worst = points.iter().map(|p| p.deviation.abs() / (p.tolerance / 4.0)).fold(0.0f64, f64::max);
            (pass, format!("{} times, worst |z| = {worst:.2}", points.len()))
        }
        MartingaleReport::Skipped => (false, "skipped: [H, G] != 0".into()),
    }
}

fn criterion_5_and_7() -> (Outcome, Outcome) {
    let m = 10_000.0f64;
    let born = qubit_ensemble(InitialState::Fixed(qubit(0.3)), 10.0, 5050, 500);
    let f = born.occupation_fractions();
    let tol_born = 4.0 * (0.21f64 / m).sqrt();
    let born_ok = (f[0] - 0.3).abs() <= tol_born && (f[1] - 0.7).abs() <= tol_born;

    let haar = qubit_ensemble(InitialState::UniformRandom, 10.0, 5151, 500);
    let h = haar.occupation_fractions();
    let tol_haar = 4.0 * 0.5 / m.sqrt();
    let haar_ok = (h[0] - 0.5).abs() <= tol_haar && (h[1] - 0.5).abs() <= tol_haar;

    let five = Outcome::new(
        born_ok && haar_ok,
        format!(
            "(0.3, 0.7) start: {:.4}/{:.4} (tol {tol_born:.4}); Haar start: {:.4}/{:.4} (tol {tol_haar:.4})",
            f[0], f[1], h[0], h[1]
        ),
    );
    let (a_ok, a) = martingale_line(&born);
    let (b_ok, b) = martingale_line(&haar);
    let seven = Outcome::new(a_ok && b_ok, format!("fixed start {a}; Haar start {b}"));
    (five, seven)
}

fn criterion_6() -> Outcome {
    let stats = qubit_ensemble(InitialState::Fixed(qubit(0.5)), 2.0, 6060, 20);
    let model = QsdModel::pure_measurement(sz());
    let oracle = evolve_rho(&model, &DensityMatrix::pure(&qubit(0.5)).unwrap(), 1e-3, 2.0, 20).unwrap();
    let mut max_td = 0.0f64;
    let mut max_coh = 0.0f64;
    for ((t, ens), rho) in stats.times.iter().zip(&stats.mean_rho).zip(&oracle.states) {
        max_td = max_td.max(trace_distance(ens.matrix(), rho.matrix()));
        max_coh = max_coh.max((rho.matrix()[(0, 1)] - c(0.5 * (-2.0 * t).exp(), 0.0)).norm());
    }
    let aligned = stats.times.len() == oracle.times.len() && (oracle.times.last().unwrap() - 2.0).abs() < 1e-9;
    Outcome::new(
        aligned && max_td < 0.06 && max_coh < 1e-6,
        format!("max trace distance {max_td:.4} (< 0.06), |rho01 - e^-2t/2| {max_coh:.1e} (< 1e-6)"),
    )
}

/// Half the sum of |eigenvalues| of the (Hermitian) difference.
fn trace_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let d = a - b;
    0.5 * d.symmetric_eigen().eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
}

fn criterion_8() -> Outcome {
    // (a) toy model f(q) = -q
    let toy = ToyModel::from_name("linear", c(-1.0, 0.0), c(0.0, 0.0)).unwrap();
    let traj = evolve_toy(&toy, c(1.0, 0.0), c(1.0, 0.0), 1.0, 1e-3, 100).unwrap();
    let q1 = *traj.q.last().unwrap();
    let qp1 = *traj.q_prime.last().unwrap();
    let end_err = (q1 - c(1.0 / E, 0.0)).norm().max((qp1 - c(E, 0.0)).norm());
    let mut div_analytic = 0.0f64;
    let mut div_fd = 0.0f64;
    let mut q_only_exact = true;
    for (q, qp) in traj.q.iter().zip(&traj.q_prime) {
        div_analytic = div_analytic.max(toy_divergence(&toy, *q, *qp).abs());
        div_fd = div_fd.max(toy_fd_divergence(&toy, *q, *qp, FD_STEP).abs());
        q_only_exact &= toy_q_divergence(&toy, *q) == c(-1.0, 0.0);
    }
    let a_ok = end_err < 1e-8 && div_analytic < 1e-12 && div_fd < 1e-6 && q_only_exact;

    // (b) QSD field system on random qubit states and noise rates
    let model = QsdModel::pure_measurement(sz());
    let scan = liouville_scan(&model, 1000, 10, 8080).unwrap();
    let mut psi_only_min = f64::INFINITY;
    let mut formula_err = 0.0f64;
    for p0 in [0.1, 0.3, 0.7, 0.9] {
        let psi = qubit(p0);
        let g = 2.0 * p0 - 1.0;
        for nu in [c(0.0, 0.0), c(0.4, -0.2), c(-0.05, 1.0)] {
            let div = psi_divergence(&model, psi.amplitudes(), nu).unwrap();
            psi_only_min = psi_only_min.min(div.abs());
            formula_err = formula_err.max((div - (-4.0 * g * g - 6.0 * g * nu.re)).abs());
        }
    }
    let b_ok =
        scan.samples.len() == 10_000 && scan.max_abs_extended < 1e-6 && psi_only_min > 1e-3 && formula_err < 1e-6;

    // (c) state-cloud volume, unitary vs measurement drift
    let h = HermitianOperator::from_real_rows(&[&[0.5, 0.3], &[0.3, -0.5]]).unwrap();
    let psi0 = qubit(0.3);
    let mut cfg = VolumeConfig::new(24, 10.0, 1e-3);
    cfg.record_every = 100;
    cfg.cloud_seed = 8181;
    let unitary = volume_diagnostic(&CloudDynamics::Unitary(&h), &psi0, &cfg).unwrap();
    let measured_model = QsdModel::new(h.clone(), sz()).unwrap();
    let scheme = StepScheme::new(SchemeKind::EulerRenormalized, 1e-3).unwrap();
    let measured = volume_diagnostic(
        &CloudDynamics::Measurement { model: &measured_model, scheme, noise_seed: 8282 },
        &psi0,
        &cfg,
    )
    .unwrap();
    let v0 = unitary.points[0].log_volume.unwrap();
    let unitary_spread =
        unitary.points.iter().map(|p| p.log_volume.map_or(f64::INFINITY, |v| (v - v0).abs())).fold(0.0, f64::max);
    let m0 = measured.points[0].log_volume.unwrap();
    // A fully collapsed cloud has no finite log-volume; that counts as an unbounded decrease.
    let decrease = measured.points.last().unwrap().log_volume.map_or(f64::INFINITY, |v| m0 - v);
    let c_ok = unitary_spread < 1e-3 && decrease > 5.0;

    Outcome::new(
        a_ok && b_ok && c_ok,
        format!(
            "(a) end error {end_err:.1e}, |div| {div_analytic:.1e} / fd {div_fd:.1e}, q-only -1 exact: {q_only_exact}; \
             (b) max |ext div| {:.1e}, min |psi-only| {psi_only_min:.2}; \
             (c) unitary drift {unitary_spread:.1e}, measurement decrease {decrease:.2}",
            scan.max_abs_extended
        ),
    )
}

/// `Lc` for the extended field system, written out from the Lagrangian itself.
fn lc(model: &QsdModel, nu: C64, s: &ExtendedFieldState, psi_dot: &DVector<C64>) -> C64 {
    let n = s.dim();
    let g = model.g().matrix();
    let mean = s.psi().dotc(&(g * s.psi()));
    let d = g - DMatrix::identity(n, n) * mean;
    let q = &d * &d * c(-0.5, 0.0) + &d * nu;
    let pp = s.psi_prime();
    -I * pp.dot(psi_dot) + pp.dot(&(model.h().matrix() * s.psi())) + I * pp.dot(&(q * s.psi()))
}

fn real_lagrangian(model: &QsdModel, nu: C64, x: &[f64], v: &[f64]) -> f64 {
    let s = ExtendedFieldState::from_real(x).unwrap();
    let vel = ExtendedFieldState::from_real(v).unwrap();
    2.0 * lc(model, nu, &s, vel.psi()).re
}

fn central<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut y = x.to_vec();
    y[i] = x[i] + h;
    let up = f(&y);
    y[i] = x[i] - h;
    (up - f(&y)) / (2.0 * h)
}

/// Largest Euler-Lagrange residual `dL/dx - d/dt dL/dv` along the implemented flow.
fn el_residual(model: &QsdModel, nu: C64, start: ExtendedFieldState) -> f64 {
    let tau = 1e-2;
    let velocity = |s: &ExtendedFieldState| {
        let d = qsd_field_rhs(model, s, nu).unwrap();
        ExtendedFieldState::new(d.psi, d.psi_prime).unwrap().to_real()
    };
    let mut path = vec![start];
    for _ in 0..4 {
        let mut s = path.last().unwrap().clone();
        for _ in 0..100 {
            s = field_rk4_step(model, &s, nu, tau / 100.0).unwrap();
        }
        path.push(s);
    }
    let xs: Vec<Vec<f64>> = path.iter().map(|s| s.to_real()).collect();
    let vs: Vec<Vec<f64>> = path.iter().map(velocity).collect();
    let delta = 1e-6;
    (0..xs[0].len())
        .map(|i| {
            let p: Vec<f64> =
                (0..5).map(|k| central(|v| real_lagrangian(model, nu, &xs[k], v), &vs[k], i, delta)).collect();
            let dp = (p[0] - 8.0 * p[1] + 8.0 * p[3] - p[4]) / (12.0 * tau);
            let dl = central(|x| real_lagrangian(model, nu, x, &vs[2]), &xs[2], i, delta);
            (dl - dp).abs()
        })
        .fold(0.0, f64::max)
}

fn criterion_9() -> Outcome {
    let general = QsdModel::new(
        HermitianOperator::from_real_rows(&[&[0.4, 0.2, 0.0], &[0.2, -0.1, 0.3], &[0.0, 0.3, 0.6]]).unwrap(),
        HermitianOperator::diagonal(&[1.0, 0.2, -0.7]).unwrap(),
    )
    .unwrap();
    let qubit_model = QsdModel::pure_measurement(sz());
    let mut residual = 0.0f64;
    for seed in 0..4 {
        for (model, n) in [(&qubit_model, 2), (&general, 3)] {
            let psi = spread_state(n, seed).into_amplitudes();
            let psi_prime = spread_vector(n, seed + 11) * c(0.8, 0.0);
            let nu = c(0.3 - 0.2 * seed as f64, 0.1 * seed as f64);
            residual = residual.max(el_residual(model, nu, ExtendedFieldState::new(psi, psi_prime).unwrap()));
        }
    }

    let h = HermitianOperator::from_real_rows(&[&[0.5, 0.3], &[0.3, -0.5]]).unwrap();
    let dt = 1e-3;
    let quiet = momentum_drift_experiment(
        &QsdModel::unitary(h.clone()),
        &qubit(0.3),
        5.0,
        dt,
        Some(NoiseStream::new(9090, 0, dt).unwrap()),
        10,
    )
    .unwrap();
    let measured = momentum_drift_experiment(
        &QsdModel::new(h, sz()).unwrap(),
        &qubit(0.3),
        5.0,
        dt,
        Some(NoiseStream::new(9090, 0, dt).unwrap()),
        10,
    )
    .unwrap();
    let (q, m) = (quiet.max_deviation(), measured.max_deviation());
    Outcome::new(
        residual < 1e-6 && q < 1e-8 && m > 1e-3,
        format!(
            "EL residual {residual:.1e} (< 1e-6); drift with G=0 {q:.1e} (< 1e-8), with G=diag(1,-1) {m:.2e} (> 1e-3)"
        ),
    )
}

fn criterion_10() -> Outcome {
    let base = "dimension = 2\ng = [[0, 0, 1.0], [1, 1, -1.0]]\nh = [[0, 1, 0.2], [1, 0, 0.2]]\n\
                psi0 = [[0, 0.5477225575051661], [1, 0.0, 0.8366600265340756]]\ndt = 1e-3\nmaster_seed = 31337\n";
    let cases: [(&str, &str); 9] = [
        ("trajectory", "t_final = 1.0\nstream_id = 3\n"),
        ("ensemble", "t_final = 1.0\ntrajectories = 500\nrecord_every = 20\n"),
        ("lindblad", "t_final = 1.0\n"),
        ("compare", "t_final = 0.5\ntrajectories = 300\nrecord_every = 10\n"),
        ("liouville", "t_final = 1.0\nrecord_every = 50\n"),
        ("lagrangian-field", "t_final = 0.5\n[field]\nstates = 50\nnoise_rates = 4\n"),
        ("noise-selftest", "[noise]\nstreams = 8\ndraws_per_stream = 2000\n"),
        ("oscillator", "t_final = 1.0\n[oscillator]\nomega = [1.0, 2.5]\n"),
        ("lagrangian-toy", "t_final = 1.0\n[toy]\nfunction = \"cubic\"\na = [-1.0, 0.2]\nb = 0.1\nq0 = 0.5\n"),
    ];
    let mut failures = Vec::new();
    let mut files = 0;
    for (experiment, extra) in cases {
        let mut text = format!("experiment = \"{experiment}\"\noutput_dir = \"unused\"\n{base}{extra}");
        if experiment == "oscillator" {
            text = text.replace("g = [[0, 0, 1.0], [1, 1, -1.0]]\nh = [[0, 1, 0.2], [1, 0, 0.2]]\n", "");
        }
        if experiment == "lagrangian-toy" {
            text = text
                .replace("dimension = 2", "dimension = 1")
                .replace("psi0 = [[0, 0.5477225575051661], [1, 0.0, 0.8366600265340756]]\n", "");
            text = text.replace("g = [[0, 0, 1.0], [1, 1, -1.0]]\nh = [[0, 1, 0.2], [1, 0, 0.2]]\n", "");
        }
        let config = match parse_config_str(&text) {
            Ok(c) => c,
            Err(e) => {
                failures.push(format!("{experiment}: {e}"));
                continue;
            }
        };
        let mut runs = Vec::new();
        for workers in [1, 4, 2] {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = config.clone();
            cfg.output_dir = dir.path().join("out");
            match run(&cfg, Some(workers)) {
                Ok(_) => runs.push(read_outputs(&cfg.output_dir)),
                Err(e) => failures.push(format!("{experiment}: {e}")),
            }
        }
        if runs.len() == 3 {
            files += runs[0].len();
            if runs[0].is_empty() || runs[0] != runs[1] || runs[0] != runs[2] {
                failures.push(format!("{experiment}: outputs differ between runs"));
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!("9 experiments x 3 runs (1, 4, 2 workers), {files} artifacts byte-identical")
        } else {
            failures.join("; ")
        },
    )
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap()))
        .collect()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Option<Duration>, Outcome, Duration)> = Vec::new();
    let secs = Duration::from_secs;

    let (o, t) = timed(criterion_1);
    results.push((1, "noise moments", Some(secs(5)), o, t));
    let (o, t) = timed(criterion_2);
    results.push((2, "unitary limit", Some(secs(5)), o, t));
    let (o, t) = timed(criterion_3);
    results.push((3, "Ito norm balance", Some(secs(5)), o, t));
    let (o, t) = timed(criterion_4);
    results.push((4, "localization", Some(secs(120)), o, t));
    let ((five, seven), t) = timed(criterion_5_and_7);
    // Criterion 5 runs two ensembles under a 2 minute budget each; criterion 7 reuses them.
    results.push((5, "Born fractions", Some(secs(240)), five, t));
    results.push((7, "martingale", None, seven, Duration::ZERO));
    let (o, t) = timed(criterion_6);
    results.push((6, "ensemble vs Lindblad", Some(secs(120)), o, t));
    let (o, t) = timed(criterion_8);
    results.push((8, "Liouville violation and restoration", Some(secs(60)), o, t));
    let (o, t) = timed(criterion_9);
    results.push((9, "Euler-Lagrange residual and momentum drift", Some(secs(30)), o, t));
    let (o, t) = timed(criterion_10);
    results.push((10, "determinism", None, o, t));
    results.sort_by_key(|r| r.0);

    let mut all = true;
    println!();
    for (id, name, budget, outcome, took) in &results {
        let in_time = budget.is_none_or(|b| *took <= b);
        let pass = outcome.pass && in_time;
        all &= pass;
        let budget = budget.map_or(String::new(), |b| format!(", budget {}s", b.as_secs()));
        println!(
            "criterion {id:>2} {}: {name} | {} | {:.1}s{budget}",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            took.as_secs_f64()
        );
    }
    println!(
        "\n{} of {} criteria passed",
        results.iter().filter(|r| r.3.pass && r.2.is_none_or(|b| r.4 <= b)).count(),
        results.len()
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
