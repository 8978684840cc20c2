//! Experiment dispatch and artifact emission.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use qsd_core::ensemble::{
    compare_to_lindblad, localization_curve, martingale_check, run_ensemble, EnsembleSpec, EnsembleStats, InitialState,
};
use qsd_core::lagrangian::{
    evolve_toy, linear_field_consistency, liouville_scan, momentum_drift_experiment, toy_divergence, toy_fd_divergence,
    toy_q_divergence, ToyModel, FD_STEP,
};
use qsd_core::lindblad::{evolve_rho, OracleSeries};
use qsd_core::noise::moment_report;
use qsd_core::oscillator::{
    hamilton_flow_check, sphere_drift_divergence, to_oscillator, volume_diagnostic, CloudDynamics, VolumeConfig,
    VolumeSeries,
};
use qsd_core::propagator::evolve_trajectory;
use qsd_core::{DensityMatrix, HermitianOperator, NoiseStream, QsdError, QsdModel, StateVector, StepScheme};
use serde::Serialize;

use crate::config::{ConfigError, Experiment, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{module}: {source}")]
    Numeric { module: &'static str, source: QsdError },
    #[error("cannot build worker pool: {0}")]
    Workers(String),
}

impl RunError {
    /// 1 for invalid input or I/O trouble, 2 for failures inside the numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io { .. } | RunError::Workers(_) => 1,
            RunError::Numeric { source: QsdError::InvalidArgument(_), .. } => 1,
            RunError::Numeric { .. } => 2,
        }
    }
}

fn numeric(module: &'static str) -> impl Fn(QsdError) -> RunError {
    move |source| RunError::Numeric { module, source }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    pub qsd_cli: &'static str,
    pub qsd_core: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub master_seed: u64,
    pub experiment: Experiment,
    pub start_time: String,
    pub wall_seconds: f64,
    pub artifact_list: Vec<String>,
    pub versions: Versions,
}

/// Outcome of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub manifest: Manifest,
}

/// Writes artifacts into one directory and remembers their names.
struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn create(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
        Ok(Artifacts { dir: dir.to_path_buf(), names: Vec::new() })
    }

    fn write<F>(&mut self, name: &str, body: F) -> Result<(), RunError>
    where
        F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    {
        let path = self.dir.join(name);
        let io_err = |source| RunError::Io { path: path.clone(), source };
        let mut out = BufWriter::new(File::create(&path).map_err(io_err)?);
        body(&mut out).map_err(io_err)?;
        out.flush().map_err(io_err)?;
        info!("wrote {}", path.display());
        self.names.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        self.write(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value).map_err(io::Error::other)?;
            writeln!(out)
        })
    }
}

/// Runs the configured experiment on `workers` threads (all cores when `None`).
pub fn run(config: &RunConfig, workers: Option<usize>) -> Result<RunSummary, RunError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().map_err(|e| RunError::Workers(e.to_string()))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &RunConfig) -> Result<RunSummary, RunError> {
    let start_time = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let clock = Instant::now();
    let mut art = Artifacts::create(&config.output_dir)?;
    info!("running {} into {}", config.experiment, config.output_dir.display());

    match config.experiment {
        Experiment::Trajectory => trajectory(config, &mut art)?,
        Experiment::Ensemble => ensemble(config, &mut art).map(|_| ())?,
        Experiment::Lindblad => lindblad(config, &mut art).map(|_| ())?,
        Experiment::Compare => compare(config, &mut art)?,
        Experiment::Oscillator => oscillator(config, &mut art)?,
        Experiment::Liouville => liouville(config, &mut art)?,
        Experiment::LagrangianToy => lagrangian_toy(config, &mut art)?,
        Experiment::LagrangianField => lagrangian_field(config, &mut art)?,
        Experiment::NoiseSelftest => noise_selftest(config, &mut art)?,
    }

    let manifest = Manifest {
        config_hash: config.config_hash.clone(),
        master_seed: config.master_seed,
        experiment: config.experiment,
        start_time,
        wall_seconds: clock.elapsed().as_secs_f64(),
        artifact_list: art.names.clone(),
        versions: Versions { qsd_cli: env!("CARGO_PKG_VERSION"), qsd_core: qsd_core::VERSION },
    };
    art.json(MANIFEST_FILE, &manifest)?;
    Ok(RunSummary { output_dir: art.dir, artifacts: art.names, manifest })
}

fn model(config: &RunConfig) -> Result<QsdModel, RunError> {
    QsdModel::new(config.h.clone(), config.g.clone()).map_err(numeric("qsd-propagator"))
}

fn scheme(config: &RunConfig) -> Result<StepScheme, RunError> {
    StepScheme::new(config.scheme, config.dt).map_err(numeric("qsd-propagator"))
}

fn fixed_psi0(config: &RunConfig) -> &StateVector {
    match &config.psi0 {
        Some(InitialState::Fixed(psi)) => psi,
        // Validation only admits a fixed state for the experiments that call this.
        _ => unreachable!("experiment {} requires a fixed psi0", config.experiment),
    }
}

fn ensemble_spec(config: &RunConfig) -> Result<EnsembleSpec, RunError> {
    Ok(EnsembleSpec {
        model: model(config)?,
        initial: config.psi0.clone().expect("validated psi0"),
        scheme: scheme(config)?,
        trajectories: config.trajectories(),
        master_seed: config.master_seed,
        t_final: config.t_final(),
        record_every: config.record_every,
    })
}

#[derive(Serialize)]
struct TrajectorySummary<'a> {
    stream_id: u64,
    scheme: &'a str,
    steps_recorded: usize,
    final_time: f64,
    final_amplitudes: Vec<[f64; 2]>,
    final_expectation_g: f64,
    final_variance_g: f64,
}

fn trajectory(config: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let spec = EnsembleSpec { trajectories: 1, ..ensemble_spec(config)? };
    let psi0 = spec.initial_state(config.stream_id);
    let stream = NoiseStream::new(config.master_seed, config.stream_id, config.dt).map_err(numeric("noise-process"))?;
    spec.scheme.warn_if_stiff(&spec.model);
    let rec = evolve_trajectory(&spec.model, &psi0, &spec.scheme, stream, config.t_final(), config.record_every)
        .map_err(numeric("qsd-propagator"))?;
    art.write("trajectory.csv", |out| rec.write_csv(out, true))?;
    let last = rec.len() - 1;
    art.json(
        "trajectory_summary.json",
        &TrajectorySummary {
            stream_id: rec.stream_id,
            scheme: config.scheme.name(),
            steps_recorded: rec.len(),
            final_time: rec.times[last],
            final_amplitudes: rec.final_state().amplitudes().iter().map(|z| [z.re, z.im]).collect(),
            final_expectation_g: rec.expectation_g[last],
            final_variance_g: rec.variance_g[last],
        },
    )
}

fn ensemble(config: &RunConfig, art: &mut Artifacts) -> Result<EnsembleStats, RunError> {
    let spec = ensemble_spec(config)?;
    spec.scheme.warn_if_stiff(&spec.model);
    let stats = run_ensemble(&spec).map_err(numeric("ensemble-lab"))?;
    art.write("ensemble_timeseries.csv", |out| stats.write_timeseries_csv(out))?;
    art.write("final_assignments.csv", |out| stats.write_assignments_csv(out))?;
    art.json("ensemble_summary.json", &stats.summary())?;
    art.json("martingale.json", &martingale_check(&stats))?;
    art.json("localization.json", &localization_curve(&stats))?;
    Ok(stats)
}

/// The oracle's starting point: the pure projector, or `I/N` for Haar-random starts.
fn initial_rho(config: &RunConfig) -> Result<DensityMatrix, RunError> {
    match config.psi0.as_ref().expect("validated psi0") {
        InitialState::Fixed(psi) => DensityMatrix::pure(psi).map_err(numeric("lindblad-oracle")),
        InitialState::UniformRandom => Ok(DensityMatrix::maximally_mixed(config.dimension)),
    }
}

fn lindblad(config: &RunConfig, art: &mut Artifacts) -> Result<OracleSeries, RunError> {
    let rho0 = initial_rho(config)?;
    let oracle = evolve_rho(&model(config)?, &rho0, config.dt, config.t_final(), config.record_every)
        .map_err(numeric("lindblad-oracle"))?;
    art.write("lindblad.csv", |out| oracle.write_csv(out))?;
    Ok(oracle)
}

fn compare(config: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let stats = ensemble(config, art)?;
    let oracle = lindblad(config, art)?;
    let report = compare_to_lindblad(&stats, &oracle).map_err(numeric("ensemble-lab"))?;
    if !report.pass {
        warn!(
            "ensemble deviates from the master equation: max trace distance {} >= {}",
            report.max_distance, report.threshold
        );
    }
    art.json("comparison.json", &report)
}

#[derive(Serialize)]
struct OscillatorReport<'a> {
    omega: &'a [f64],
    initial_energy: f64,
    flow: qsd_core::oscillator::FlowCheckReport,
}

fn oscillator(config: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let omega = &config.oscillator.as_ref().expect("validated oscillator section").omega;
    let psi0 = fixed_psi0(config);
    let h = HermitianOperator::diagonal(omega).map_err(numeric("oscillator-map"))?;
    let model = QsdModel::unitary(h);
    let scheme = scheme(config)?;
    let stream = NoiseStream::new(config.master_seed, config.stream_id, config.dt).map_err(numeric("noise-process"))?;
    let rec = evolve_trajectory(&model, psi0, &scheme, stream, config.t_final(), config.record_every)
        .map_err(numeric("qsd-propagator"))?;
    let coords = rec
        .states
        .iter()
        .map(|s| to_oscillator(s, omega))
        .collect::<Result<Vec<_>, _>>()
        .map_err(numeric("oscillator-map"))?;
    art.write("oscillator.csv", |out| {
        let n = omega.len();
        let mut cols = vec!["t".to_string()];
        cols.extend((0..n).map(|j| format!("q_{j}")));
        cols.extend((0..n).map(|j| format!("p_{j}")));
        cols.push("energy".into());
        writeln!(out, "{}", cols.join(","))?;
        for (t, c) in rec.times.iter().zip(&coords) {
            write!(out, "{t}")?;
            for x in c.q.iter().chain(&c.p) {
                write!(out, ",{x}")?;
            }
            writeln!(out, ",{}", qsd_core::oscillator::oscillator_energy(c))?;
        }
        Ok(())
    })?;
    let flow = hamilton_flow_check(omega, psi0, config.t_final(), config.dt).map_err(numeric("oscillator-map"))?;
    art.json(
        "oscillator_report.json",
        &OscillatorReport { omega, initial_energy: qsd_core::oscillator::oscillator_energy(&coords[0]), flow },
    )
}

#[derive(Serialize)]
struct VolumeSummary {
    initial: Option<f64>,
    last_finite: Option<f64>,
    change: Option<f64>,
    fully_localized: bool,
}

impl VolumeSummary {
    fn of(series: &VolumeSeries) -> Self {
        let initial = series.points.first().and_then(|p| p.log_volume);
        let last_finite = series.points.iter().rev().find_map(|p| p.log_volume);
        VolumeSummary {
            initial,
            last_finite,
            change: initial.zip(last_finite).map(|(a, b)| b - a),
            fully_localized: series.fully_localized(),
        }
    }
}

#[derive(Serialize)]
struct LiouvilleReport {
    volume: VolumeConfig,
    unitary: VolumeSummary,
    measurement: VolumeSummary,
    /// Divergence of the noise-off renormalized drift on the sphere, at `psi0`.
    sphere_drift_divergence: f64,
}

fn liouville(config: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let psi0 = fixed_psi0(config);
    let model = model(config)?;
    let volume = VolumeConfig {
        cloud_size: config.liouville.cloud_size,
        spread: config.liouville.spread,
        t_final: config.t_final(),
        dt: config.dt,
        record_every: config.record_every,
        cloud_seed: config.cloud_seed(),
    };
    let unitary =
        volume_diagnostic(&CloudDynamics::Unitary(model.h()), psi0, &volume).map_err(numeric("oscillator-map"))?;
    let measured = volume_diagnostic(
        &CloudDynamics::Measurement { model: &model, scheme: scheme(config)?, noise_seed: config.master_seed },
        psi0,
        &volume,
    )
    .map_err(numeric("oscillator-map"))?;
    art.write("volume_unitary.csv", |out| unitary.write_csv(out))?;
    art.write("volume_measurement.csv", |out| measured.write_csv(out))?;
    let div = sphere_drift_divergence(model.g(), psi0, FD_STEP).map_err(numeric("oscillator-map"))?;
    art.json(
        "liouville_report.json",
        &LiouvilleReport {
            volume,
            unitary: VolumeSummary::of(&unitary),
            measurement: VolumeSummary::of(&measured),
            sphere_drift_divergence: div,
        },
    )
}

#[derive(Serialize)]
struct ToyReport {
    function: qsd_core::lagrangian::ToyFunction,
    final_q: [f64; 2],
    final_q_prime: [f64; 2],
    /// Analytic divergence of the extended `(q, q')` flow at the start.
    extended_divergence: f64,
    extended_divergence_fd: f64,
    /// Divergence of the `q` flow alone, `f'(q0)`.
    q_only_divergence: [f64; 2],
    linear_field: qsd_core::lagrangian::LinearFieldReport,
}

fn lagrangian_toy(config: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let toy = &config.toy;
    let model = ToyModel::from_name(&toy.function, toy.a, toy.b).map_err(numeric("extended-lagrangian"))?;
    let traj = evolve_toy(&model, toy.q0, toy.q_prime0, config.t_final(), config.dt, config.record_every)
        .map_err(numeric("extended-lagrangian"))?;
    art.write("toy.csv", |out| traj.write_csv(out))?;
    let linear = linear_field_consistency(toy.omega, toy.q0, None, config.t_final(), config.dt)
        .map_err(numeric("extended-lagrangian"))?;
    art.write("linear_field.csv", |out| {
        writeln!(out, "t,conjugate_deviation")?;
        for (t, d) in linear.times.iter().zip(&linear.conjugate_deviation) {
            writeln!(out, "{t},{d}")?;
        }
        Ok(())
    })?;
    let last = traj.q.len() - 1;
    let dq = toy_q_divergence(&model, toy.q0);
    art.json(
        "toy_report.json",
        &ToyReport {
            function: model.function(),
            final_q: [traj.q[last].re, traj.q[last].im],
            final_q_prime: [traj.q_prime[last].re, traj.q_prime[last].im],
            extended_divergence: toy_divergence(&model, toy.q0, toy.q_prime0),
            extended_divergence_fd: toy_fd_divergence(&model, toy.q0, toy.q_prime0, FD_STEP),
            q_only_divergence: [dq.re, dq.im],
            linear_field: linear,
        },
    )
}

#[derive(Serialize)]
struct FieldReport {
    states: usize,
    noise_rates: usize,
    scan_seed: u64,
    max_abs_extended_divergence: f64,
    max_abs_psi_only_divergence: f64,
    drift_stream_id: u64,
    max_drift_noise_off: f64,
    max_drift_noisy: f64,
    /// First recorded time at which the noisy drift exceeds 1e-3.
    drift_exceeds_1e3_at: Option<f64>,
}

fn lagrangian_field(config: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let psi0 = fixed_psi0(config);
    let model = model(config)?;
    let scan = liouville_scan(&model, config.field.states, config.field.noise_rates, config.scan_seed())
        .map_err(numeric("extended-lagrangian"))?;
    art.write("divergence_scan.csv", |out| scan.write_csv(out))?;
    let quiet = momentum_drift_experiment(&model, psi0, config.t_final(), config.dt, None, config.record_every)
        .map_err(numeric("extended-lagrangian"))?;
    let stream = NoiseStream::new(config.master_seed, config.stream_id, config.dt).map_err(numeric("noise-process"))?;
    let noisy = momentum_drift_experiment(&model, psi0, config.t_final(), config.dt, Some(stream), config.record_every)
        .map_err(numeric("extended-lagrangian"))?;
    art.write("momentum_drift_noise_off.csv", |out| quiet.write_csv(out))?;
    art.write("momentum_drift.csv", |out| noisy.write_csv(out))?;
    art.json(
        "field_report.json",
        &FieldReport {
            states: config.field.states,
            noise_rates: config.field.noise_rates,
            scan_seed: config.scan_seed(),
            max_abs_extended_divergence: scan.max_abs_extended,
            max_abs_psi_only_divergence: scan.max_abs_psi_only,
            drift_stream_id: config.stream_id,
            max_drift_noise_off: quiet.max_deviation(),
            max_drift_noisy: noisy.max_deviation(),
            drift_exceeds_1e3_at: noisy.first_exceeding(1e-3),
        },
    )
}

#[derive(Serialize)]
struct NoiseReport {
    report: qsd_core::noise::MomentReport,
    /// All moments within 4 standard errors of their Ito values.
    pass: bool,
}

fn noise_selftest(config: &RunConfig, art: &mut Artifacts) -> Result<(), RunError> {
    let report = moment_report(config.master_seed, config.noise.streams, config.noise.draws_per_stream, config.dt)
        .map_err(numeric("noise-process"))?;
    let pass = report.passes(4.0);
    if !pass {
        warn!("noise moments outside 4 standard errors");
    }
    art.json("noise_moments.json", &NoiseReport { report, pass })
}
