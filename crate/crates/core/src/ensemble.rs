//! Trajectory ensembles and the measurement diagnostics built on them:
//! ensemble-mean density matrix, Born-rule occupation fractions, martingale
//! and localization checks, and agreement with the Lindblad oracle.
//!
//! Trajectory `i` always uses noise stream `i` of the master seed. Trajectories
//! run in parallel in fixed-size chunks and are reduced strictly in stream-id
//! order, so results do not depend on the worker count.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QsdError, Result};
use crate::hilbert::{check_dims, DensityMatrix, HermitianOperator, StateVector, C64};
use crate::lindblad::{trace_distance, OracleSeries};
use crate::noise::{Estimate, NoiseStream};
use crate::propagator::{evolve_trajectory, QsdModel, StepScheme};

const CHUNK: usize = 256;
/// Mixed into the master seed for initial-state sampling, keeping it apart from the noise streams.
const INITIAL_STATE_DOMAIN: u64 = 0x5eed_1a17_57a7_e000;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Fixed(StateVector),
    /// Haar-uniform on the unit sphere, drawn independently per trajectory.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub model: QsdModel,
    pub initial: InitialState,
    pub scheme: StepScheme,
    pub trajectories: usize,
    pub master_seed: u64,
    pub t_final: f64,
    pub record_every: usize,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(QsdError::InvalidArgument("ensemble needs at least one trajectory".into()));
        }
        if let InitialState::Fixed(psi) = &self.initial {
            check_dims("ensemble initial state", self.model.dim(), psi.dim())?;
            psi.require_normalized("ensemble initial state")?;
        }
        Ok(())
    }

    /// Initial state of trajectory `stream_id`.
    pub fn initial_state(&self, stream_id: u64) -> StateVector {
        match &self.initial {
            InitialState::Fixed(psi) => psi.clone(),
            InitialState::UniformRandom => {
                let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed ^ INITIAL_STATE_DOMAIN);
                rng.set_stream(stream_id);
                haar_state(self.model.dim(), &mut rng)
            }
        }
    }
}

/// Haar-uniform pure state: a normalized vector of i.i.d. complex Gaussians.
pub fn haar_state<R: Rng>(n: usize, rng: &mut R) -> StateVector {
    loop {
        let v = DVector::from_fn(n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let norm = v.norm();
        if norm > 1e-8 {
            return StateVector::from_dvector(v / C64::new(norm, 0.0)).expect("finite");
        }
    }
}

/// Eigenvalues of `G` with degenerate ones merged, and an orthonormal basis of each eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLevels {
    pub values: Vec<f64>,
    bases: Vec<DMatrix<C64>>,
}

impl SpectralLevels {
    pub fn of(g: &HermitianOperator) -> Self {
        let (vals, vecs) = g.eigen();
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        let tol = 1e-8 * (1.0 + vals.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some((v, members)) if (vals[i] - *v).abs() <= tol => members.push(i),
                _ => groups.push((vals[i], vec![i])),
            }
        }
        let values = groups.iter().map(|(v, _)| *v).collect();
        let bases = groups
            .iter()
            .map(|(_, m)| DMatrix::from_columns(&m.iter().map(|&i| vecs.column(i)).collect::<Vec<_>>()))
            .collect();
        SpectralLevels { values, bases }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spectral-projector populations of `psi / |psi|`, one per level.
    pub fn populations(&self, psi: &DVector<C64>) -> Vec<f64> {
        let norm_sqr = psi.norm_squared();
        self.bases.iter().map(|b| (b.adjoint() * psi).norm_squared() / norm_sqr).collect()
    }
}

/// Final-time assignment of one trajectory to its most populated level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinalAssignment {
    pub stream_id: u64,
    pub level: usize,
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub trajectories: usize,
    pub master_seed: u64,
    pub times: Vec<f64>,
    /// Distinct eigenvalues of `G`, descending.
    pub levels: Vec<f64>,
    pub mean_rho: Vec<DensityMatrix>,
    pub mean_g: Vec<f64>,
    pub se_g: Vec<f64>,
    /// Standard error of `<G>(t) - <G>(0)` across trajectories.
    pub se_g_change: Vec<f64>,
    pub mean_variance: Vec<f64>,
    pub se_variance: Vec<f64>,
    pub mean_populations: Vec<Vec<f64>>,
    pub final_assignments: Vec<FinalAssignment>,
    pub commuting: bool,
    pub pure_measurement: bool,
}

struct TrajectorySummary {
    stream_id: u64,
    rho: Vec<DMatrix<C64>>,
    g: Vec<f64>,
    var: Vec<f64>,
    pops: Vec<Vec<f64>>,
    assignment: FinalAssignment,
    times: Vec<f64>,
}

fn summarize(spec: &EnsembleSpec, levels: &SpectralLevels, stream_id: u64) -> Result<TrajectorySummary> {
    let psi0 = spec.initial_state(stream_id);
    let stream = NoiseStream::new(spec.master_seed, stream_id, spec.scheme.dt)?;
    let rec = evolve_trajectory(&spec.model, &psi0, &spec.scheme, stream, spec.t_final, spec.record_every)?;
    let mut rho = Vec::with_capacity(rec.len());
    let mut pops = Vec::with_capacity(rec.len());
    for s in &rec.states {
        let a = s.amplitudes();
        let norm_sqr = a.norm_squared();
        rho.push(a * a.adjoint() / C64::new(norm_sqr, 0.0));
        pops.push(levels.populations(a));
    }
    let last = pops.last().expect("records include t = 0");
    let (level, population) =
        last.iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
    Ok(TrajectorySummary {
        stream_id,
        rho,
        g: rec.expectation_g,
        var: rec.variance_g,
        pops,
        assignment: FinalAssignment { stream_id, level, population },
        times: rec.times,
    })
}

#[derive(Default, Clone)]
struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean_se(&self, m: usize) -> (f64, f64) {
        let mf = m as f64;
        let mean = self.sum / mf;
        if m < 2 {
            return (mean, 0.0);
        }
        let var = ((self.sum_sq - mf * mean * mean) / (mf - 1.0)).max(0.0);
        (mean, (var / mf).sqrt())
    }
}

/// Runs `spec.trajectories` trajectories with stream ids `0..M` and aggregates them.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleStats> {
    spec.validate()?;
    spec.scheme.warn_if_stiff(&spec.model);
    let levels = SpectralLevels::of(spec.model.g());
    let m = spec.trajectories;

    let mut times: Option<Vec<f64>> = None;
    let mut rho_sum: Vec<DMatrix<C64>> = Vec::new();
    let mut g_acc: Vec<Moments> = Vec::new();
    let mut dg_acc: Vec<Moments> = Vec::new();
    let mut var_acc: Vec<Moments> = Vec::new();
    let mut pop_sum: Vec<Vec<f64>> = Vec::new();
    let mut assignments = Vec::with_capacity(m);
    let mut failures = Vec::new();

    for start in (0..m).step_by(CHUNK) {
        let end = (start + CHUNK).min(m);
        let results: Vec<Result<TrajectorySummary>> =
            (start..end).into_par_iter().map(|i| summarize(spec, &levels, i as u64)).collect();
        for (offset, result) in results.into_iter().enumerate() {
            let summary = match result {
                Ok(s) => s,
                Err(e) => {
                    failures.push(((start + offset) as u64, e));
                    continue;
                }
            };
            if times.is_none() {
                let r = summary.times.len();
                let n = spec.model.dim();
                rho_sum = vec![DMatrix::zeros(n, n); r];
                g_acc = vec![Moments::default(); r];
                dg_acc = vec![Moments::default(); r];
                var_acc = vec![Moments::default(); r];
                pop_sum = vec![vec![0.0; levels.len()]; r];
                times = Some(summary.times.clone());
            }
            let g0 = summary.g[0];
            for r in 0..summary.rho.len() {
                rho_sum[r] += &summary.rho[r];
                g_acc[r].push(summary.g[r]);
                dg_acc[r].push(summary.g[r] - g0);
                var_acc[r].push(summary.var[r]);
                for (acc, p) in pop_sum[r].iter_mut().zip(&summary.pops[r]) {
                    *acc += p;
                }
            }
            debug_assert_eq!(summary.stream_id, summary.assignment.stream_id);
            assignments.push(summary.assignment);
        }
    }
    if !failures.is_empty() {
        return Err(QsdError::EnsembleFailed { failures });
    }

    let mf = C64::new(m as f64, 0.0);
    let (mean_g, se_g): (Vec<f64>, Vec<f64>) = g_acc.iter().map(|a| a.mean_se(m)).unzip();
    let (mean_variance, se_variance): (Vec<f64>, Vec<f64>) = var_acc.iter().map(|a| a.mean_se(m)).unzip();
    Ok(EnsembleStats {
        trajectories: m,
        master_seed: spec.master_seed,
        times: times.unwrap_or_default(),
        levels: levels.values.clone(),
        mean_rho: rho_sum.into_iter().map(|s| DensityMatrix::from_matrix_unchecked(s / mf)).collect(),
        mean_g,
        se_g,
        se_g_change: dg_acc.iter().map(|a| a.mean_se(m).1).collect(),
        mean_variance,
        se_variance,
        mean_populations: pop_sum.into_iter().map(|p| p.into_iter().map(|x| x / m as f64).collect()).collect(),
        final_assignments: assignments,
        commuting: spec.model.is_commuting(),
        pure_measurement: spec.model.h().is_zero(),
    })
}

impl EnsembleStats {
    pub fn t_final(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Fraction of trajectories hard-assigned to each level at the final time.
    pub fn occupation_fractions(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.levels.len()];
        for a in &self.final_assignments {
            counts[a.level] += 1;
        }
        counts.into_iter().map(|c| c as f64 / self.trajectories as f64).collect()
    }

    /// Fraction of trajectories whose dominant level holds at least `threshold` of the population.
    pub fn localized_fraction(&self, threshold: f64) -> f64 {
        let n = self.final_assignments.iter().filter(|a| a.population >= threshold).count();
        n as f64 / self.trajectories as f64
    }

    pub fn summary(&self) -> EnsembleSummary {
        let last = self.times.len().saturating_sub(1);
        EnsembleSummary {
            trajectories: self.trajectories,
            master_seed: self.master_seed,
            t_final: self.t_final(),
            levels: self.levels.clone(),
            final_occupation_fractions: self.occupation_fractions(),
            final_mean_populations: self.mean_populations.get(last).cloned().unwrap_or_default(),
            localized_fraction_099: self.localized_fraction(0.99),
            initial_mean_g: Estimate { value: self.mean_g[0], std_error: self.se_g[0] },
            final_mean_g: Estimate { value: self.mean_g[last], std_error: self.se_g[last] },
            final_mean_variance: Estimate { value: self.mean_variance[last], std_error: self.se_variance[last] },
            commuting: self.commuting,
            pure_measurement: self.pure_measurement,
        }
    }

    /// Time series: scalar statistics, level populations, then the mean density matrix row-major.
    pub fn write_timeseries_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let n = self.mean_rho.first().map_or(0, DensityMatrix::dim);
        write!(out, "t,mean_G,se_G,mean_variance_G,se_variance_G")?;
        for l in 0..self.levels.len() {
            write!(out, ",population_{l}")?;
        }
        for j in 0..n {
            for k in 0..n {
                write!(out, ",re_rho_{j}_{k},im_rho_{j}_{k}")?;
            }
        }
        writeln!(out)?;
        for i in 0..self.times.len() {
            write!(
                out,
                "{},{},{},{},{}",
                self.times[i], self.mean_g[i], self.se_g[i], self.mean_variance[i], self.se_variance[i]
            )?;
            for p in &self.mean_populations[i] {
                write!(out, ",{p}")?;
            }
            let rho = self.mean_rho[i].matrix();
            for j in 0..n {
                for k in 0..n {
                    write!(out, ",{},{}", rho[(j, k)].re, rho[(j, k)].im)?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// One row per trajectory: `trajectory, level, eigenvalue, population`.
    pub fn write_assignments_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "trajectory,level,eigenvalue,population")?;
        for a in &self.final_assignments {
            writeln!(out, "{},{},{},{}", a.stream_id, a.level, self.levels[a.level], a.population)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub trajectories: usize,
    pub master_seed: u64,
    pub t_final: f64,
    pub levels: Vec<f64>,
    pub final_occupation_fractions: Vec<f64>,
    pub final_mean_populations: Vec<f64>,
    pub localized_fraction_099: f64,
    pub initial_mean_g: Estimate,
    pub final_mean_g: Estimate,
    pub final_mean_variance: Estimate,
    pub commuting: bool,
    pub pure_measurement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub trajectories: usize,
    pub times: Vec<f64>,
    pub trace_distances: Vec<f64>,
    pub max_distance: f64,
    /// `5 / sqrt(M) + 0.01`.
    pub threshold: f64,
    pub pass: bool,
}

/// Trace distance between the ensemble-mean density matrix and the oracle at each recorded time.
pub fn compare_to_lindblad(stats: &EnsembleStats, oracle: &OracleSeries) -> Result<ComparisonReport> {
    if stats.times.len() != oracle.times.len()
        || stats.times.iter().zip(&oracle.times).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        return Err(QsdError::InvalidArgument(format!(
            "time grids differ: ensemble has {} points, oracle has {}",
            stats.times.len(),
            oracle.times.len()
        )));
    }
    let trace_distances =
        stats.mean_rho.iter().zip(&oracle.states).map(|(a, b)| trace_distance(a, b)).collect::<Result<Vec<_>>>()?;
    let max_distance = trace_distances.iter().fold(0.0f64, |m, &d| m.max(d));
    let threshold = 5.0 / (stats.trajectories as f64).sqrt() + 0.01;
    Ok(ComparisonReport {
        trajectories: stats.trajectories,
        times: stats.times.clone(),
        trace_distances,
        max_distance,
        threshold,
        pass: max_distance < threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingalePoint {
    pub t: f64,
    pub mean_g: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum MartingaleReport {
    /// `[H, G] != 0`: the ensemble mean of `<G>` is not conserved.
    Skipped,
    Evaluated {
        initial_mean_g: f64,
        points: Vec<MartingalePoint>,
        pass: bool,
    },
}

/// Checks that `M<G>(t)` stays within 4 standard errors of its initial value.
pub fn martingale_check(stats: &EnsembleStats) -> MartingaleReport {
    if !stats.commuting {
        return MartingaleReport::Skipped;
    }
    let g0 = stats.mean_g[0];
    let points: Vec<MartingalePoint> = stats
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let deviation = stats.mean_g[i] - g0;
            // A zero standard error means every trajectory sits on an eigenstate.
            let tolerance = (4.0 * stats.se_g_change[i]).max(1e-12);
            MartingalePoint { t, mean_g: stats.mean_g[i], deviation, tolerance, pass: deviation.abs() <= tolerance }
        })
        .collect();
    let pass = points.iter().all(|p| p.pass);
    MartingaleReport::Evaluated { initial_mean_g: g0, points, pass }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationCurve {
    pub times: Vec<f64>,
    pub mean_variance: Vec<f64>,
    pub final_value: f64,
    /// For pure-measurement runs with `t_final >= 10`: whether the final mean variance is below 0.01.
    pub localized: Option<bool>,
}

pub fn localization_curve(stats: &EnsembleStats) -> LocalizationCurve {
    let final_value = *stats.mean_variance.last().unwrap_or(&0.0);
    let applicable = stats.pure_measurement && stats.t_final() >= 10.0 - 1e-9;
    LocalizationCurve {
        times: stats.times.clone(),
        mean_variance: stats.mean_variance.clone(),
        final_value,
        localized: applicable.then_some(final_value < 0.01),
    }
}
