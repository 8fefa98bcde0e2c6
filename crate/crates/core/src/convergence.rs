//! Empirical convergence study over the spectral truncation.
//!
//! Solving the same problem at increasing mode counts and comparing against
//! the largest-N solve gives observable Cauchy-style decay of the optimal
//! cost, the optimal initial boundary value, the Riccati action on a fixed
//! probe, and the semigroup projection tail. The reference truth is the
//! largest-N solve, not an unattainable continuum solution; all decay
//! statements are self-referential.
//!
//! Probe vectors are fixed so reports are comparable across runs: the
//! normalized reference initial state for the Riccati distance and the
//! normalized lifting-profile coefficients for the semigroup tail.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{assemble, initial_state, AugmentedOperators};
use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::riccati::solve_riccati;
use crate::spectral::{build_basis, rho_coeffs, H1Vector};
use crate::{real, Real};

/// Per-truncation quantities recorded by [`sweep_modes`], plus the
/// reference solve they are compared against.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport<T: Real> {
    pub mode_counts: Vec<usize>,
    /// Optimal costs v_N at the per-N optimal initial boundary value.
    pub values: Vec<T>,
    /// Optimal initial boundary values.
    pub u0s: Vec<T>,
    /// Distance of the zero-padded Riccati action to the reference on the
    /// fixed probe.
    pub gain_dists: Vec<T>,
    /// Semigroup projection-tail errors, sup over time (attained at t = 0).
    pub semigroup_errs: Vec<T>,
    pub ref_modes: usize,
    pub ref_value: T,
    pub ref_u0: T,
}

/// Tail norm of the probe beyond mode `n`: the sup over `t >= 0` of the
/// semigroup approximation error, attained at `t = 0` because every tail
/// mode contracts.
pub fn semigroup_tail_error<T: Real>(probe: &H1Vector<T>, max_mode: usize) -> T {
    let mut acc = T::zero();
    for j in (max_mode + 1)..probe.coeffs.len() {
        acc += probe.coeffs[j] * probe.coeffs[j];
    }
    acc.sqrt()
}

/// Runge-Kutta steps needed to keep the stiffest Riccati mode (decay rate
/// about `2 lambda_N`) well inside the stability region.
fn stable_steps<T: Real>(horizon: T, max_mode: usize, configured: usize) -> usize {
    let lambda = std::f64::consts::PI.powi(2) * (max_mode as f64).powi(2);
    let needed = (2.0 * crate::as_f64(horizon) * lambda).ceil() as usize;
    configured.max(needed).max(2)
}

struct ModeSolve<T: Real> {
    ops: AugmentedOperators<T>,
    pi0: DMatrix<T>,
    u0: T,
    value: T,
}

fn solve_at<T: Real>(spec: &ProblemSpec<T>, modes: usize) -> Result<ModeSolve<T>> {
    let mut local = spec.clone();
    local.disc.modes = modes;
    let basis = build_basis(modes);
    let ops = assemble(&local, &basis).map_err(|e| e.with_context(&format!("N = {modes}")))?;
    let steps = stable_steps(local.cost.horizon, modes, local.disc.riccati_steps);
    let sched = solve_riccati(&ops, local.cost.horizon, steps)
        .map_err(|e| e.with_context(&format!("N = {modes}")))?;
    let u0 = sched.optimal_u0(&ops);
    let value = sched.value(&initial_state(&ops, u0));
    Ok(ModeSolve {
        pi0: sched.pi[0].clone(),
        ops,
        u0,
        value,
    })
}

/// Zero-padding injection: maps a low-truncation augmented vector into the
/// reference space by keeping the shared (X, Y) block and the retained
/// z-modes and zeroing the rest. `restrict` is its adjoint.
fn restrict<T: Real>(w: &DVector<T>, x_dim: usize, modes: usize) -> DVector<T> {
    let small = x_dim + 1 + modes + 1;
    DVector::from_fn(small, |i, _| w[i])
}

fn embed<T: Real>(v: &DVector<T>, x_dim: usize, ref_dim: usize) -> DVector<T> {
    let mut out = DVector::zeros(ref_dim);
    for i in 0..v.len() {
        out[i] = v[i];
    }
    let _ = x_dim;
    out
}

/// Solves the problem at every requested truncation plus the reference one
/// and records the convergence quantities. Requires
/// `ref_modes > max(mode_counts)`.
pub fn sweep_modes<T: Real>(
    spec: &ProblemSpec<T>,
    mode_counts: &[usize],
    ref_modes: usize,
) -> Result<ConvergenceReport<T>> {
    if mode_counts.is_empty() {
        return Err(Error::Domain("mode sweep needs at least one entry".into()));
    }
    let max_swept = *mode_counts.iter().max().unwrap();
    if ref_modes <= max_swept {
        return Err(Error::Domain(format!(
            "reference truncation {ref_modes} must exceed every swept count (max {max_swept})"
        )));
    }

    let reference = solve_at(spec, ref_modes)?;
    let z0_ref = initial_state(&reference.ops, reference.u0);
    let probe = &z0_ref / z0_ref.norm();
    let pi_ref_probe = &reference.pi0 * &probe;

    let rho_ref = rho_coeffs(
        &build_basis::<T>(ref_modes),
        spec.pde.c,
        spec.control.mu,
    )?;
    let rho_probe = H1Vector {
        coeffs: &rho_ref.coeffs / rho_ref.coeffs.norm(),
    };

    let x_dim = spec.state_dim();
    let mut values = Vec::with_capacity(mode_counts.len());
    let mut u0s = Vec::with_capacity(mode_counts.len());
    let mut gain_dists = Vec::with_capacity(mode_counts.len());
    let mut semigroup_errs = Vec::with_capacity(mode_counts.len());
    for &n in mode_counts {
        let solve = solve_at(spec, n)?;
        values.push(solve.value);
        u0s.push(solve.u0);
        let action = embed(
            &(&solve.pi0 * restrict(&probe, x_dim, n)),
            x_dim,
            reference.ops.dim,
        );
        gain_dists.push((&pi_ref_probe - action).norm());
        semigroup_errs.push(semigroup_tail_error(&rho_probe, n));
    }

    Ok(ConvergenceReport {
        mode_counts: mode_counts.to_vec(),
        values,
        u0s,
        gain_dists,
        semigroup_errs,
        ref_modes,
        ref_value: reference.value,
        ref_u0: reference.u0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_spec_str;
    use nalgebra::DVector;

    fn sec7_spec() -> ProblemSpec<f64> {
        load_spec_str(
            r#"{
                "sde": { "A": 2.0, "B": 2.0, "C": 1.0, "D": 0.5, "X0": 1.0 },
                "pde": { "c": 0.5, "u0": 1.0 },
                "cost": { "Q": 10.0, "r": 1.0, "G": 10.0, "delta": 0.5, "T": 1.0 },
                "control": { "mu": 1.5 },
                "discretization": { "N": 3, "riccati_steps": 1000, "seed": 42 }
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn tail_error_of_spanned_probe_is_zero() {
        let probe = H1Vector {
            coeffs: DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0]),
        };
        assert_eq!(semigroup_tail_error(&probe, 2), 0.0);
        assert_eq!(semigroup_tail_error(&probe, 4), 0.0);
        assert_eq!(semigroup_tail_error(&probe, 1), 1.0);
    }

    #[test]
    fn reference_must_dominate_the_sweep() {
        let spec = sec7_spec();
        assert!(matches!(
            sweep_modes(&spec, &[2, 4, 8], 8),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            sweep_modes(&spec, &[], 8),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn small_sweep_decays_toward_the_reference() {
        let spec = sec7_spec();
        let report = sweep_modes(&spec, &[1, 2, 4], 8).unwrap();
        // cost differences to the reference shrink as N grows
        let diffs: Vec<f64> = report
            .values
            .iter()
            .map(|v| (v - report.ref_value).abs())
            .collect();
        assert!(
            diffs[0] > diffs[1] && diffs[1] > diffs[2],
            "diffs not decreasing: {diffs:?}"
        );
        // semigroup tails decrease strictly
        for w in report.semigroup_errs.windows(2) {
            assert!(w[1] < w[0], "tails not decreasing: {:?}", report.semigroup_errs);
        }
        // Riccati probe distances decrease
        let g = &report.gain_dists;
        assert!(g[2] < g[0], "probe distances not improving: {g:?}");
    }
}
