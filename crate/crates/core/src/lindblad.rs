//! Master-equation reference dynamics for the ensemble-averaged projector:
//!
//! ```text
//! d rho / dt = -i [H, rho] + G rho G - 1/2 {G^2, rho}
//! ```
//!
//! integrated with classic fourth-order Runge-Kutta at fixed `dt`.

use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::error::{QsdError, Result};
use crate::hilbert::{check_dims, DensityMatrix, HermitianOperator, C64};
use crate::propagator::{record_indices, step_count, QsdModel};

/// Same conventions as [`QsdModel`].
pub type LindbladModel = QsdModel;

pub fn lindblad_rhs(model: &LindbladModel, rho: &DensityMatrix) -> Result<DMatrix<C64>> {
    check_dims("lindblad_rhs", model.dim(), rho.dim())?;
    Ok(rhs_matrix(model.h(), model.g(), &model.g().squared(), rho.matrix()))
}

fn rhs_matrix(
    h: &HermitianOperator,
    g: &HermitianOperator,
    g2: &HermitianOperator,
    rho: &DMatrix<C64>,
) -> DMatrix<C64> {
    let (h, g, g2) = (h.matrix(), g.matrix(), g2.matrix());
    let commutator = h * rho - rho * h;
    let anti = g2 * rho + rho * g2;
    commutator * C64::new(0.0, -1.0) + g * rho * g - anti * C64::new(0.5, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl OracleSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Columns `t, re_jk, im_jk` in row-major order of `(j, k)`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let n = self.states.first().map_or(0, DensityMatrix::dim);
        write!(out, "t")?;
        for j in 0..n {
            for k in 0..n {
                write!(out, ",re_{j}_{k},im_{j}_{k}")?;
            }
        }
        writeln!(out)?;
        for (t, rho) in self.times.iter().zip(&self.states) {
            write!(out, "{t}")?;
            for j in 0..n {
                for k in 0..n {
                    let z = rho.matrix()[(j, k)];
                    write!(out, ",{},{}", z.re, z.im)?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Integrates from `rho0` to `t_final`, keeping every `record_every`-th step and the last.
///
/// Positivity is checked at each kept step; an eigenvalue below `-1e-8` aborts.
pub fn evolve_rho(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    dt: f64,
    t_final: f64,
    record_every: usize,
) -> Result<OracleSeries> {
    check_dims("evolve_rho", model.dim(), rho0.dim())?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QsdError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let n_steps = step_count(t_final, dt)?;
    let indices = record_indices(n_steps, record_every);
    let (h, g) = (model.h(), model.g());
    let g2 = g.squared();
    let f = |r: &DMatrix<C64>| rhs_matrix(h, g, &g2, r);
    let half = C64::new(dt / 2.0, 0.0);
    let full = C64::new(dt, 0.0);
    let sixth = C64::new(dt / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);

    let mut rho = rho0.matrix().clone();
    let mut out = OracleSeries { times: vec![0.0], states: vec![rho0.clone()] };
    let mut next = 1;
    for k in 1..=n_steps {
        let k1 = f(&rho);
        let k2 = f(&(&rho + &k1 * half));
        let k3 = f(&(&rho + &k2 * half));
        let k4 = f(&(&rho + &k3 * full));
        rho += (k1 + k2 * two + k3 * two + k4) * sixth;
        if indices[next] == k {
            let t = k as f64 * dt;
            let state = DensityMatrix::from_matrix_unchecked(rho.clone());
            let check = state.check();
            if check.min_eigenvalue < -DensityMatrix::POSITIVITY_TOLERANCE {
                return Err(QsdError::OracleInstability { t, min_eigenvalue: check.min_eigenvalue });
            }
            out.times.push(t);
            out.states.push(state);
            next += 1;
        }
    }
    Ok(out)
}

/// Half the sum of absolute eigenvalues of `a - b`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_dims("trace_distance", a.dim(), b.dim())?;
    let diff = a.matrix() - b.matrix();
    let herm = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
    Ok(0.5 * herm.symmetric_eigen().eigenvalues.iter().map(|x| x.abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::StateVector;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sz() -> HermitianOperator {
        HermitianOperator::diagonal(&[1.0, -1.0]).unwrap()
    }

    fn plus_rho() -> DensityMatrix {
        let s = 0.5f64.sqrt();
        DensityMatrix::pure(&StateVector::from_real(&[s, s]).unwrap()).unwrap()
    }

    fn diag_rho(p: &[f64]) -> DensityMatrix {
        DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_iterator(p.len(), p.iter().map(|&x| c(x, 0.0)))))
            .unwrap()
    }

    #[test]
    fn rhs_dephasing_example() {
        let model = LindbladModel::pure_measurement(sz());
        let d = lindblad_rhs(&model, &plus_rho()).unwrap();
        // G rho G flips rho_01 and G^2 = I: d rho_01 / dt = -2 rho_01.
        assert_abs_diff_eq!((d[(0, 1)] - c(-1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 0)].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 1)].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rhs_without_measurement_is_commutator() {
        let h = HermitianOperator::from_real_rows(&[&[0.3, 1.0], &[1.0, -0.2]]).unwrap();
        let model = LindbladModel::unitary(h.clone());
        let rho = plus_rho();
        let d = lindblad_rhs(&model, &rho).unwrap();
        let expected = (h.matrix() * rho.matrix() - rho.matrix() * h.matrix()) * c(0.0, -1.0);
        assert!((d - expected).norm() < 1e-15);
    }

    #[test]
    fn rhs_is_traceless() {
        let h = HermitianOperator::new(DMatrix::from_fn(3, 3, |j, k| {
            c((j + 2 * k) as f64 * 0.1, (j as f64 - k as f64) * 0.3)
        }))
        .unwrap();
        let g =
            HermitianOperator::new(DMatrix::from_fn(3, 3, |j, k| c(((j * k) as f64).sin(), (j as f64) - (k as f64))))
                .unwrap();
        let model = LindbladModel::new(h, g).unwrap();
        let psi = crate::hilbert::normalize(&StateVector::new(vec![c(1.0, 0.2), c(-0.3, 0.5), c(0.1, 0.0)]).unwrap())
            .unwrap();
        let d = lindblad_rhs(&model, &DensityMatrix::pure(&psi).unwrap()).unwrap();
        assert!(d.trace().norm() < 1e-12);
    }

    #[test]
    fn dephasing_decay_matches_closed_form() {
        let model = LindbladModel::pure_measurement(sz());
        let series = evolve_rho(&model, &plus_rho(), 1e-3, 1.0, 100).unwrap();
        let last = series.states.last().unwrap();
        assert_abs_diff_eq!(last.matrix()[(0, 1)].re, 0.5 * (-2.0f64).exp(), epsilon = 1e-10);
        assert_abs_diff_eq!(last.matrix()[(0, 1)].re, 0.06767, epsilon = 1e-5);
        for rho in &series.states {
            assert_abs_diff_eq!(rho.matrix()[(0, 0)].re, 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(rho.matrix()[(1, 1)].re, 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn unitary_rotation_matches_closed_form() {
        let omega = 1.7;
        let model = LindbladModel::unitary(HermitianOperator::diagonal(&[omega, 0.0]).unwrap());
        let t = std::f64::consts::PI / omega;
        // t is not a multiple of a round dt; pick dt = t / 4000.
        let series = evolve_rho(&model, &plus_rho(), t / 4000.0, t, 4000).unwrap();
        let got = series.states.last().unwrap().matrix()[(0, 1)];
        let expected = c(0.5, 0.0) * C64::from_polar(1.0, -omega * t);
        assert!((got - expected).norm() < 1e-8, "{got} vs {expected}");
    }

    #[test]
    fn diagonal_commuting_state_is_stationary() {
        let model = LindbladModel::new(
            HermitianOperator::diagonal(&[0.5, -1.0, 2.0]).unwrap(),
            HermitianOperator::diagonal(&[1.0, 0.0, -1.0]).unwrap(),
        )
        .unwrap();
        let rho0 = diag_rho(&[0.2, 0.5, 0.3]);
        let series = evolve_rho(&model, &rho0, 1e-2, 5.0, 50).unwrap();
        for rho in &series.states {
            assert!((rho.matrix() - rho0.matrix()).norm() < 1e-14);
        }
    }

    #[test]
    fn trace_and_hermiticity_conserved() {
        let h = HermitianOperator::from_real_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.5, 0.3], &[0.0, 0.3, -1.0]]).unwrap();
        let g = HermitianOperator::diagonal(&[1.0, 0.0, -1.0]).unwrap();
        let model = LindbladModel::new(h, g).unwrap();
        let psi = crate::hilbert::normalize(&StateVector::from_real(&[1.0, 1.0, 1.0]).unwrap()).unwrap();
        let series = evolve_rho(&model, &DensityMatrix::pure(&psi).unwrap(), 1e-3, 3.0, 100).unwrap();
        for (t, rho) in series.times.iter().zip(&series.states) {
            let check = rho.check();
            assert!(check.trace_error < 1e-9 * (1.0 + t));
            assert!(check.hermiticity_defect < 1e-10);
            assert!(check.min_eigenvalue > -1e-8);
        }
    }

    #[test]
    fn diagonal_entries_constant_under_diagonal_measurement() {
        let g = HermitianOperator::diagonal(&[1.0, 0.3, -1.0]).unwrap();
        let model = LindbladModel::pure_measurement(g);
        let psi = crate::hilbert::normalize(&StateVector::new(vec![c(1.0, 0.0), c(0.5, 0.5), c(0.0, -0.7)]).unwrap())
            .unwrap();
        let rho0 = DensityMatrix::pure(&psi).unwrap();
        let series = evolve_rho(&model, &rho0, 1e-3, 2.0, 10).unwrap();
        for rho in &series.states {
            for j in 0..3 {
                assert!((rho.matrix()[(j, j)] - rho0.matrix()[(j, j)]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn oversized_step_reports_instability() {
        let g = HermitianOperator::diagonal(&[3.0, -3.0]).unwrap();
        let model = LindbladModel::pure_measurement(g);
        let r = evolve_rho(&model, &plus_rho(), 0.5, 5.0, 1);
        assert!(matches!(r, Err(QsdError::OracleInstability { .. })), "{r:?}");
    }

    #[test]
    fn trace_distance_examples() {
        let a = diag_rho(&[0.75, 0.25]);
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(
            trace_distance(&diag_rho(&[1.0, 0.0]), &diag_rho(&[0.0, 1.0])).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let b = diag_rho(&[0.5, 0.5]);
        assert_abs_diff_eq!(trace_distance(&a, &b).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(trace_distance(&b, &a).unwrap(), trace_distance(&a, &b).unwrap(), epsilon = 1e-15);
        assert!(trace_distance(&a, &DensityMatrix::maximally_mixed(3)).is_err());
    }

    #[test]
    fn csv_layout() {
        let series = OracleSeries { times: vec![0.0], states: vec![diag_rho(&[1.0, 0.0])] };
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,re_0_0,im_0_0,re_0_1,im_0_1,re_1_0,im_1_0,re_1_1,im_1_1\n0,1,0,0,0,0,0,0,0\n");
    }
}
