//! Closed-loop trajectory simulation, two ways.
//!
//! * [`simulate_spectral`] integrates the finite-dimensional augmented SDE
//!   under the Riccati feedback by Euler-Maruyama.
//! * [`simulate_full`] integrates the original boundary-actuated plant by
//!   finite differences (Crank-Nicolson diffusion, ghost-point Neumann
//!   conditions) with the SDE and the boundary-value dynamics stepped
//!   explicitly, reconstructing the feedback signal from the spectral
//!   projection of the current state. It serves as a model-mismatch
//!   cross-check for the spectral loop.
//!
//! Each path is a pure function of `(operators, schedule, seed, index)`;
//! paths may run in parallel with no shared mutable state.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::assembly::AugmentedOperators;
use crate::error::{Error, Result};
use crate::model::{InitialCondition, ProblemSpec};
use crate::riccati::GainSchedule;
use crate::spectral::{derivative_samples, rho_eval, GridFunction, SpectralBasis};
use crate::{as_f64, real, Real};

const STATE_BLOWUP_LIMIT: f64 = 1e9;

/// One sampled closed-loop trajectory of the augmented system.
///
/// `states[k]` holds `(X, U, z-coefficients)` at `times[k]`; `controls[k]`
/// is the applied auxiliary control `V(t_k)`. The running cost is the
/// trapezoid of `X^T Q X + r U^2 + delta V^2`, the terminal cost is
/// `X_T^T G X_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathResult<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    pub controls: Vec<T>,
    pub running_cost: T,
    pub terminal_cost: T,
    pub x_dim: usize,
}

impl<T: Real> PathResult<T> {
    pub fn total_cost(&self) -> T {
        self.running_cost + self.terminal_cost
    }
}

/// Running-cost integrand of the augmented system,
/// `z^T Qmat z + delta v^2`.
pub fn quadratic_cost_integrand<T: Real>(
    ops: &AugmentedOperators<T>,
    z: &DVector<T>,
    v: T,
) -> T {
    (&ops.qmat * z).dot(z) + ops.delta * v * v
}

/// Number of Euler-Maruyama steps; errors unless `dt` divides the horizon
/// within tolerance.
fn step_count<T: Real>(horizon: T, dt: T) -> Result<usize> {
    if dt <= T::zero() {
        return Err(Error::Domain("dt must be positive".into()));
    }
    let ratio = as_f64(horizon / dt);
    let steps = ratio.round();
    if steps < 1.0 {
        return Err(Error::Domain("dt must not exceed the horizon".into()));
    }
    let tol = real::<T>(1e-12).max(T::default_epsilon() * real::<T>(8.0) * horizon.max(T::one()));
    let remainder = (real::<T>(steps) * dt - horizon).abs();
    if remainder > tol {
        return Err(Error::Domain(format!(
            "dt = {} does not divide the horizon {}",
            as_f64(dt),
            as_f64(horizon)
        )));
    }
    Ok(steps as usize)
}

fn check_state_norm<T: Real>(z: &DVector<T>, context: &str, t: T) -> Result<()> {
    let norm = as_f64(z.amax());
    if norm <= STATE_BLOWUP_LIMIT {
        Ok(())
    } else {
        Err(Error::Blowup {
            context: format!("{context} at t = {}", as_f64(t)),
            norm,
            limit: STATE_BLOWUP_LIMIT,
        })
    }
}

/// Core Euler-Maruyama loop. The observer sees every node `(k, t_k, Z_k,
/// V_k)` in order and must not alter the arithmetic; it is used both to
/// collect full trajectories and to discard them when only the cost is
/// needed.
fn em_core<T, R, F>(
    ops: &AugmentedOperators<T>,
    sched: &GainSchedule<T>,
    z0: &DVector<T>,
    dt: T,
    rng: &mut R,
    mut observe: F,
) -> Result<(T, T)>
where
    T: Real,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
    F: FnMut(usize, T, &DVector<T>, T),
{
    if z0.len() != ops.dim {
        return Err(Error::Mismatch(format!(
            "initial state has {} entries, operators expect {}",
            z0.len(),
            ops.dim
        )));
    }
    let horizon = sched.horizon();
    let steps = step_count(horizon, dt)?;
    let sqrt_dt = dt.sqrt();
    let half = real::<T>(0.5);

    let mut z = z0.clone();
    let mut t = T::zero();
    let mut v = -(sched.gain_at(t)? * &z)[0];
    observe(0, t, &z, v);
    let mut f_prev = quadratic_cost_integrand(ops, &z, v);
    let mut running = T::zero();

    for step in 0..steps {
        let xi: T = rng.sample(StandardNormal);
        let dw = xi * sqrt_dt;
        let drift = &ops.atot * &z + &ops.bvec * v;
        let noise = &ops.ctot * &z;
        z += drift * dt + noise * dw;
        t = real::<T>((step + 1) as f64) * dt;
        check_state_norm(&z, "spectral Euler-Maruyama", t)?;
        v = -(sched.gain_at(t)? * &z)[0];
        observe(step + 1, t, &z, v);
        let f = quadratic_cost_integrand(ops, &z, v);
        running += half * dt * (f_prev + f);
        f_prev = f;
    }
    let terminal = (&ops.gmat * &z).dot(&z);
    Ok((running, terminal))
}

/// Simulates one path of the augmented SDE under the scheduled feedback:
/// `Z_{k+1} = Z_k + (Atot Z_k + Bvec V_k) dt + Ctot Z_k dW_k` with
/// `V_k = -K(t_k) Z_k` and `dW_k ~ N(0, dt)` drawn in fixed order from the
/// given stream.
pub fn simulate_spectral<T, R>(
    ops: &AugmentedOperators<T>,
    sched: &GainSchedule<T>,
    z0: &DVector<T>,
    dt: T,
    rng: &mut R,
) -> Result<PathResult<T>>
where
    T: Real,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut controls = Vec::new();
    let (running_cost, terminal_cost) = em_core(ops, sched, z0, dt, rng, |_, t, z, v| {
        times.push(t);
        states.push(z.clone());
        controls.push(v);
    })?;
    Ok(PathResult {
        times,
        states,
        controls,
        running_cost,
        terminal_cost,
        x_dim: ops.x_dim,
    })
}

/// Same dynamics as [`simulate_spectral`] but returns only the realized
/// cost; used by the Monte Carlo estimator to avoid storing trajectories.
pub(crate) fn simulate_cost_only<T, R>(
    ops: &AugmentedOperators<T>,
    sched: &GainSchedule<T>,
    z0: &DVector<T>,
    dt: T,
    rng: &mut R,
) -> Result<T>
where
    T: Real,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    let (running, terminal) = em_core(ops, sched, z0, dt, rng, |_, _, _, _| {})?;
    Ok(running + terminal)
}

/// Undoes the change of variables at every stored node: `u = z + rho U`,
/// with the spanned part of `z` evaluated on `xs`.
pub fn reconstruct_u<T: Real>(
    basis: &SpectralBasis<T>,
    path: &PathResult<T>,
    c: T,
    mu: T,
    xs: &[T],
) -> Result<Vec<GridFunction<T>>> {
    let d = path.x_dim;
    let n_modes = basis.len();
    if path.states[0].len() != d + 1 + n_modes {
        return Err(Error::Mismatch(format!(
            "state dimension {} does not match d + 1 + (N+1) = {}",
            path.states[0].len(),
            d + 1 + n_modes
        )));
    }
    let rho_vals: Vec<T> = xs
        .iter()
        .map(|&x| rho_eval(c, mu, x))
        .collect::<Result<_>>()?;
    path.states
        .iter()
        .map(|state| {
            let u_ctrl = state[d];
            let values: Vec<T> = xs
                .iter()
                .zip(&rho_vals)
                .map(|(&x, &rho)| {
                    let z_val = (0..n_modes)
                        .map(|n| state[d + 1 + n] * basis.phi_unchecked(n, x))
                        .fold(T::zero(), |a, b| a + b);
                    z_val + rho * u_ctrl
                })
                .collect();
            GridFunction::new(xs.to_vec(), values)
        })
        .collect()
}

/// One finite-difference path of the original boundary-actuated plant.
#[derive(Clone, Debug, PartialEq)]
pub struct FullPlantState<T: Real> {
    pub times: Vec<T>,
    /// Final PDE state on the uniform grid.
    pub u: GridFunction<T>,
    /// SDE state trajectory.
    pub x_traj: Vec<DVector<T>>,
    /// Boundary value U(t) trajectory.
    pub u_ctrl_traj: Vec<T>,
    /// Applied auxiliary control V(t) trajectory.
    pub v_traj: Vec<T>,
    /// PDE field at every node, when requested.
    pub field: Option<Vec<Vec<T>>>,
    pub running_cost: T,
    pub terminal_cost: T,
}

impl<T: Real> FullPlantState<T> {
    pub fn total_cost(&self) -> T {
        self.running_cost + self.terminal_cost
    }
}

/// Constant tridiagonal system solved by the Thomas algorithm; scratch
/// buffers are reused across steps.
struct Tridiagonal<T> {
    sub: Vec<T>,
    diag: Vec<T>,
    sup: Vec<T>,
    scratch_diag: Vec<T>,
    scratch_rhs: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    fn solve(&mut self, rhs: &[T], out: &mut [T]) {
        let n = self.diag.len();
        self.scratch_diag.copy_from_slice(&self.diag);
        self.scratch_rhs.copy_from_slice(rhs);
        for i in 1..n {
            let w = self.sub[i] / self.scratch_diag[i - 1];
            self.scratch_diag[i] -= w * self.sup[i - 1];
            let upd = w * self.scratch_rhs[i - 1];
            self.scratch_rhs[i] -= upd;
        }
        out[n - 1] = self.scratch_rhs[n - 1] / self.scratch_diag[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = (self.scratch_rhs[i] - self.sup[i] * out[i + 1]) / self.scratch_diag[i];
        }
    }
}

fn interpolate_onto<T: Real>(g: &GridFunction<T>, xs: &[T]) -> Vec<T> {
    xs.iter()
        .map(|&x| {
            let j = g.xs.partition_point(|&p| p <= x);
            if j == 0 {
                g.values[0]
            } else if j >= g.xs.len() {
                *g.values.last().unwrap()
            } else {
                let (x0, x1) = (g.xs[j - 1], g.xs[j]);
                let (v0, v1) = (g.values[j - 1], g.values[j]);
                v0 + (v1 - v0) * (x - x0) / (x1 - x0)
            }
        })
        .collect()
}

/// Simulates one path of the original plant closed with the spectral
/// feedback.
///
/// Diffusion is stepped by Crank-Nicolson with the reaction term explicit;
/// the Neumann conditions use second-order ghost points, the controlled
/// flux `u_x(t,1) = U(t)` entering the right ghost value (old and new U on
/// the explicit and implicit halves). The SDE is driven by the grid trace
/// `u(t,0)` and stepped by Euler-Maruyama with one Gaussian draw per step,
/// in the same order as the spectral simulator, so a shared stream yields
/// matched noise increments. `U` follows `dU = mu U dt + V dt` by explicit
/// Euler, `V` being the scheduled feedback applied to the projected
/// augmented state; the projection is recomputed by quadrature on the grid
/// each step (a precomputed projection matrix would be equivalent).
pub fn simulate_full<T, R>(
    spec: &ProblemSpec<T>,
    sched: &GainSchedule<T>,
    basis: &SpectralBasis<T>,
    u0_value: T,
    rng: &mut R,
    store_field: bool,
) -> Result<FullPlantState<T>>
where
    T: Real,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    let d = spec.state_dim();
    let n_modes = basis.len();
    let m = spec.disc.fd_grid_points;
    if m < 8 {
        return Err(Error::Domain("fd_grid_points must be at least 8".into()));
    }
    let horizon = spec.cost.horizon;
    let dt = spec.disc.sim_dt;
    let steps = step_count(horizon, dt)?;
    let sqrt_dt = dt.sqrt();
    let half = real::<T>(0.5);
    let two = real::<T>(2.0);

    let h = T::one() / real::<T>((m - 1) as f64);
    let xs: Vec<T> = (0..m)
        .map(|i| {
            if i == m - 1 {
                T::one()
            } else {
                real::<T>(i as f64) * h
            }
        })
        .collect();
    let rho_vals: Vec<T> = xs
        .iter()
        .map(|&x| rho_eval(spec.pde.c, spec.control.mu, x))
        .collect::<Result<_>>()?;
    let phi_tab: Vec<Vec<T>> = (0..n_modes)
        .map(|n| xs.iter().map(|&x| basis.phi_unchecked(n, x)).collect())
        .collect();
    let dphi_tab: Vec<Vec<T>> = (0..n_modes)
        .map(|n| {
            xs.iter()
                .map(|&x| basis.phi_deriv_unchecked(n, x))
                .collect()
        })
        .collect();

    // Crank-Nicolson system (I - beta D2) u_next = (I + beta D2 + dt c) u + flux.
    let beta = dt / (two * h * h);
    let mut lhs = {
        let mut sub = vec![-beta; m];
        let mut sup = vec![-beta; m];
        let diag = vec![T::one() + two * beta; m];
        sup[0] = -two * beta;
        sub[m - 1] = -two * beta;
        Tridiagonal {
            sub,
            diag,
            sup,
            scratch_diag: vec![T::zero(); m],
            scratch_rhs: vec![T::zero(); m],
        }
    };

    let mut u: Vec<T> = match &spec.pde.u0 {
        InitialCondition::Constant(v) => vec![*v; m],
        InitialCondition::Table(g) => interpolate_onto(g, &xs),
    };
    let mut x_state = spec.sde.x0.clone();
    let mut u_ctrl = u0_value;

    let mut times = Vec::with_capacity(steps + 1);
    let mut x_traj = Vec::with_capacity(steps + 1);
    let mut u_ctrl_traj = Vec::with_capacity(steps + 1);
    let mut v_traj = Vec::with_capacity(steps + 1);
    let mut field = store_field.then(|| Vec::with_capacity(steps + 1));

    let mut z_buf = vec![T::zero(); m];
    let mut rhs_buf = vec![T::zero(); m];
    let mut u_next = vec![T::zero(); m];
    let mut aug = DVector::zeros(d + 1 + n_modes);

    let trapz = |f: &[T], g: &[T]| {
        let mut acc = T::zero();
        for i in 0..m - 1 {
            acc += half * h * (f[i] * g[i] + f[i + 1] * g[i + 1]);
        }
        acc
    };

    // Feedback from the projected augmented state (X, U, P_N(u - rho U)).
    let feedback = |t: T,
                    u: &[T],
                    u_ctrl: T,
                    x_state: &DVector<T>,
                    z_buf: &mut [T],
                    aug: &mut DVector<T>|
     -> Result<T> {
        for i in 0..m {
            z_buf[i] = u[i] - rho_vals[i] * u_ctrl;
        }
        let dz = derivative_samples(&xs, z_buf);
        for i in 0..d {
            aug[i] = x_state[i];
        }
        aug[d] = u_ctrl;
        for n in 0..n_modes {
            aug[d + 1 + n] = trapz(z_buf, &phi_tab[n]) + trapz(&dz, &dphi_tab[n]);
        }
        Ok(-(sched.gain_at(t)? * &*aug)[0])
    };

    let integrand = |x_state: &DVector<T>, u_ctrl: T, v: T| {
        (&spec.cost.q * x_state).dot(x_state)
            + spec.cost.r * u_ctrl * u_ctrl
            + spec.cost.delta * v * v
    };

    let mut t = T::zero();
    let mut v = feedback(t, &u, u_ctrl, &x_state, &mut z_buf, &mut aug)?;
    times.push(t);
    x_traj.push(x_state.clone());
    u_ctrl_traj.push(u_ctrl);
    v_traj.push(v);
    if let Some(f) = field.as_mut() {
        f.push(u.clone());
    }
    let mut f_prev = integrand(&x_state, u_ctrl, v);
    let mut running = T::zero();

    for step in 0..steps {
        let xi: T = rng.sample(StandardNormal);
        let dw = xi * sqrt_dt;

        let trace = u[0];
        let drift = &spec.sde.a * &x_state + &spec.sde.b * trace;
        let noise = &spec.sde.c * &x_state + &spec.sde.d * trace;
        x_state += drift * dt + noise * dw;

        let u_ctrl_next = u_ctrl + dt * (spec.control.mu * u_ctrl + v);

        // Crank-Nicolson right-hand side with ghost-point Neumann fluxes.
        let c_dt = spec.pde.c * dt;
        rhs_buf[0] = u[0] + beta * (two * u[1] - two * u[0]) + c_dt * u[0];
        for i in 1..m - 1 {
            rhs_buf[i] = u[i] + beta * (u[i - 1] - two * u[i] + u[i + 1]) + c_dt * u[i];
        }
        let flux = beta * two * h;
        rhs_buf[m - 1] = u[m - 1]
            + beta * (two * u[m - 2] - two * u[m - 1])
            + c_dt * u[m - 1]
            + flux * u_ctrl
            + flux * u_ctrl_next;
        lhs.solve(&rhs_buf, &mut u_next);
        std::mem::swap(&mut u, &mut u_next);
        u_ctrl = u_ctrl_next;

        t = real::<T>((step + 1) as f64) * dt;
        check_state_norm(&x_state, "full-plant SDE state", t)?;
        let field_norm = u.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        if !(as_f64(field_norm) <= STATE_BLOWUP_LIMIT)
            || !(as_f64(u_ctrl.abs()) <= STATE_BLOWUP_LIMIT)
        {
            return Err(Error::Blowup {
                context: format!("full-plant PDE state at t = {}", as_f64(t)),
                norm: as_f64(field_norm.max(u_ctrl.abs())),
                limit: STATE_BLOWUP_LIMIT,
            });
        }

        v = feedback(t, &u, u_ctrl, &x_state, &mut z_buf, &mut aug)?;
        times.push(t);
        x_traj.push(x_state.clone());
        u_ctrl_traj.push(u_ctrl);
        v_traj.push(v);
        if let Some(f) = field.as_mut() {
            f.push(u.clone());
        }
        let f_now = integrand(&x_state, u_ctrl, v);
        running += half * dt * (f_prev + f_now);
        f_prev = f_now;
    }

    let terminal = (&spec.cost.g * &x_state).dot(&x_state);
    Ok(FullPlantState {
        times,
        u: GridFunction::new(xs, u)?,
        x_traj,
        u_ctrl_traj,
        v_traj,
        field,
        running_cost: running,
        terminal_cost: terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, initial_state};
    use crate::model::load_spec_str;
    use crate::riccati::solve_riccati;
    use crate::rng::path_stream;
    use crate::spectral::build_basis;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn sec7_spec() -> ProblemSpec<f64> {
        load_spec_str(
            r#"{
                "sde": { "A": 2.0, "B": 2.0, "C": 1.0, "D": 0.5, "X0": 1.0 },
                "pde": { "c": 0.5, "u0": 1.0 },
                "cost": { "Q": 10.0, "r": 1.0, "G": 10.0, "delta": 0.5, "T": 1.0 },
                "control": { "mu": 1.5 },
                "discretization": { "N": 3, "seed": 42 }
            }"#,
        )
        .unwrap()
    }

    fn pipeline(spec: &ProblemSpec<f64>) -> (AugmentedOperators<f64>, GainSchedule<f64>) {
        let basis = build_basis(spec.disc.modes);
        let ops = assemble(spec, &basis).unwrap();
        let sched = solve_riccati(&ops, spec.cost.horizon, spec.disc.riccati_steps).unwrap();
        (ops, sched)
    }

    // Test-local matrix exponential by scaling and squaring.
    fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut scaled = m.clone();
        let mut squarings = 0u32;
        while scaled.amax() > 0.25 {
            scaled /= 2.0;
            squarings += 1;
        }
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = DMatrix::<f64>::identity(n, n);
        for j in 1..40 {
            term = &term * &scaled / j as f64;
            sum += &term;
            if term.amax() < 1e-19 {
                break;
            }
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn noise_free_path_follows_the_matrix_exponential_flow() {
        let mut spec = sec7_spec();
        spec.cost.q.fill(0.0);
        spec.cost.g.fill(0.0);
        spec.sde.c.fill(0.0);
        spec.sde.d.fill(0.0);
        let (ops, sched) = pipeline(&spec);
        let z0 = initial_state(&ops, 0.3);
        let exact = expm(&ops.atot) * &z0;

        let mut err = [0.0; 2];
        for (slot, dt) in [(0usize, 1e-3), (1usize, 1e-4)] {
            let mut rng = path_stream(1, 0);
            let path = simulate_spectral(&ops, &sched, &z0, dt, &mut rng).unwrap();
            err[slot] = (path.states.last().unwrap() - &exact).norm();
        }
        // first-order scheme: refining dt tenfold cuts the error ~tenfold
        let ratio = err[0] / err[1];
        assert!(
            (5.0..20.0).contains(&ratio),
            "errors {err:?}, ratio {ratio:.2}"
        );
    }

    #[test]
    fn zero_noise_operator_reduces_to_explicit_euler_exactly() {
        let mut spec = sec7_spec();
        spec.sde.c.fill(0.0);
        spec.sde.d.fill(0.0);
        let (ops, sched) = pipeline(&spec);
        let z0 = initial_state(&ops, sched.optimal_u0(&ops));
        let dt = 1e-2;
        let mut rng = path_stream(3, 0);
        let path = simulate_spectral(&ops, &sched, &z0, dt, &mut rng).unwrap();

        // independent explicit Euler with the same gain evaluations
        let mut z = z0.clone();
        for step in 0..100usize {
            let t = step as f64 * dt;
            let v = -(sched.gain_at(t).unwrap() * &z)[0];
            let drift = &ops.atot * &z + &ops.bvec * v;
            z += drift * dt;
            let znode = &path.states[step + 1];
            assert_eq!(&z, znode, "diverged at step {step}");
        }
    }

    #[test]
    fn strong_order_on_the_exact_solution_sde() {
        let slope = crate::checks::em_strong_order_slope::<f64>(1000, 42);
        assert!(
            (0.4..=0.6).contains(&slope),
            "strong-order slope {slope:.3}"
        );
    }

    #[test]
    fn dt_must_divide_horizon() {
        let (ops, sched) = pipeline(&sec7_spec());
        let z0 = initial_state(&ops, 0.0);
        let mut rng = path_stream(0, 0);
        let err = simulate_spectral(&ops, &sched, &z0, 3e-4, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(simulate_spectral(&ops, &sched, &z0, 1e-3, &mut rng).is_ok());
    }

    #[test]
    fn identical_seed_gives_identical_path() {
        let (ops, sched) = pipeline(&sec7_spec());
        let z0 = initial_state(&ops, sched.optimal_u0(&ops));
        let a = simulate_spectral(&ops, &sched, &z0, 1e-3, &mut path_stream(9, 4)).unwrap();
        let b = simulate_spectral(&ops, &sched, &z0, 1e-3, &mut path_stream(9, 4)).unwrap();
        assert_eq!(a, b);
        let c = simulate_spectral(&ops, &sched, &z0, 1e-3, &mut path_stream(9, 5)).unwrap();
        assert_ne!(a.states.last(), c.states.last());
    }

    #[test]
    fn cost_accumulation_is_additive_over_subintervals() {
        let (ops, sched) = pipeline(&sec7_spec());
        let z0 = initial_state(&ops, sched.optimal_u0(&ops));
        let dt = 1e-2;
        let path = simulate_spectral(&ops, &sched, &z0, dt, &mut path_stream(5, 0)).unwrap();
        for split in [1usize, 37, 50, 99] {
            let mut left = 0.0;
            let mut right = 0.0;
            for k in 0..path.times.len() - 1 {
                let f0 = quadratic_cost_integrand(&ops, &path.states[k], path.controls[k]);
                let f1 =
                    quadratic_cost_integrand(&ops, &path.states[k + 1], path.controls[k + 1]);
                let piece = 0.5 * dt * (f0 + f1);
                if k < split {
                    left += piece;
                } else {
                    right += piece;
                }
            }
            assert!(
                ((left + right) - path.running_cost).abs() <= 1e-12 * path.running_cost.max(1.0),
                "split at {split}"
            );
        }
        assert!(path.running_cost >= 0.0 && path.terminal_cost >= 0.0);
    }

    #[test]
    fn state_blowup_is_reported_with_context() {
        let mut spec = sec7_spec();
        spec.sde.a[(0, 0)] = 60.0; // e^60 over the horizon, explodes mid-way
        let (ops, sched) = pipeline(&spec);
        let z0 = initial_state(&ops, 0.0);
        let err = simulate_spectral(&ops, &sched, &z0, 1e-3, &mut path_stream(0, 0));
        assert!(matches!(err, Err(Error::Blowup { .. })));
    }

    #[test]
    fn reconstruction_recovers_the_initial_profile() {
        let mut spec = sec7_spec();
        spec.disc.modes = 8;
        let (ops, sched) = pipeline(&spec);
        let basis = build_basis(8);
        let u0 = sched.optimal_u0(&ops);
        let z0 = initial_state(&ops, u0);
        let path = simulate_spectral(&ops, &sched, &z0, 1e-3, &mut path_stream(2, 0)).unwrap();
        let xs: Vec<f64> = (0..501).map(|i| i as f64 / 500.0).collect();
        let fields = reconstruct_u(&basis, &path, 0.5, 1.5, &xs).unwrap();
        // at t = 0 the change of variables is exact up to the projection tail
        let max_err = fields[0]
            .values
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 0.05, "initial profile error {max_err:.3}");
    }

    #[test]
    fn reconstruction_flux_at_right_boundary_matches_u() {
        let mut spec = sec7_spec();
        spec.disc.modes = 8;
        let (ops, sched) = pipeline(&spec);
        let basis = build_basis(8);
        let z0 = initial_state(&ops, sched.optimal_u0(&ops));
        let path = simulate_spectral(&ops, &sched, &z0, 1e-3, &mut path_stream(2, 1)).unwrap();
        let xs: Vec<f64> = (0..2001).map(|i| i as f64 / 2000.0).collect();
        let h = xs[1] - xs[0];
        let fields = reconstruct_u(&basis, &path, 0.5, 1.5, &xs).unwrap();
        for k in [0usize, 250, 500, 750, 1000] {
            let f = &fields[k];
            let n = f.values.len();
            let deriv =
                (3.0 * f.values[n - 1] - 4.0 * f.values[n - 2] + f.values[n - 3]) / (2.0 * h);
            let u_ctrl = path.states[k][1];
            assert!(
                (deriv - u_ctrl).abs() < 1e-2 * (1.0 + u_ctrl.abs()),
                "node {k}: flux {deriv:.5} vs U {u_ctrl:.5}"
            );
        }
    }

    #[test]
    fn zero_control_zero_noise_equilibrium_is_preserved() {
        let mut spec = sec7_spec();
        spec.pde.c = 0.0;
        spec.control.mu = 1.0; // keep mu > c
        spec.sde.c.fill(0.0);
        spec.sde.d.fill(0.0);
        spec.cost.q.fill(0.0);
        spec.cost.g.fill(0.0);
        spec.disc.fd_grid_points = 64;
        let (_, sched) = pipeline(&spec);
        let basis = build_basis(spec.disc.modes);
        let mut rng = path_stream(0, 0);
        let out = simulate_full(&spec, &sched, &basis, 0.0, &mut rng, false).unwrap();
        let max_dev = out
            .u
            .values
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev < 1e-10, "equilibrium drifted by {max_dev:.3e}");
        assert!(out.u_ctrl_traj.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn heat_mode_decays_at_the_exact_rate() {
        let mut spec = sec7_spec();
        spec.pde.c = 0.0;
        spec.control.mu = 1.0;
        spec.sde.c.fill(0.0);
        spec.sde.d.fill(0.0);
        spec.cost.q.fill(0.0);
        spec.cost.g.fill(0.0);
        spec.cost.horizon = 0.1;
        spec.disc.sim_dt = 1e-4;
        spec.disc.fd_grid_points = 129;
        let m = spec.disc.fd_grid_points;
        let xs: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        let values: Vec<f64> = xs
            .iter()
            .map(|&x| (std::f64::consts::PI * x).cos())
            .collect();
        spec.pde.u0 = InitialCondition::Table(GridFunction::new(xs, values).unwrap());
        let (_, sched) = pipeline(&spec);
        let basis = build_basis(spec.disc.modes);
        let out =
            simulate_full(&spec, &sched, &basis, 0.0, &mut path_stream(0, 0), false).unwrap();
        let amplitude = out.u.values[0]; // cos(pi * 0) = 1 carries the amplitude
        let exact = (-std::f64::consts::PI.powi(2) * 0.1).exp();
        assert_relative_eq!(amplitude, exact, max_relative = 0.01);
    }

    #[test]
    fn crank_nicolson_l2_norm_is_nonincreasing() {
        let mut spec = sec7_spec();
        spec.pde.c = 0.0;
        spec.control.mu = 1.0;
        spec.sde.c.fill(0.0);
        spec.sde.d.fill(0.0);
        spec.cost.q.fill(0.0);
        spec.cost.g.fill(0.0);
        spec.disc.sim_dt = 0.05; // far beyond any explicit stability limit
        spec.disc.fd_grid_points = 64;
        let m = spec.disc.fd_grid_points;
        let xs: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        let values: Vec<f64> = xs
            .iter()
            .map(|&x| (17.0 * x).sin() + 0.3 * (41.0 * x).cos())
            .collect();
        spec.pde.u0 = InitialCondition::Table(GridFunction::new(xs, values).unwrap());
        let (_, sched) = pipeline(&spec);
        let basis = build_basis(spec.disc.modes);
        let out =
            simulate_full(&spec, &sched, &basis, 0.0, &mut path_stream(0, 0), true).unwrap();
        let h = 1.0 / (m - 1) as f64;
        let l2 = |u: &[f64]| {
            let mut acc = 0.0;
            for i in 0..m - 1 {
                acc += 0.5 * h * (u[i] * u[i] + u[i + 1] * u[i + 1]);
            }
            acc
        };
        let field = out.field.unwrap();
        let mut prev = f64::INFINITY;
        for u in &field {
            let norm = l2(u);
            assert!(norm <= prev * (1.0 + 1e-12), "L2 norm grew: {norm} > {prev}");
            prev = norm;
        }
    }

    #[test]
    fn full_plant_blowup_is_reported() {
        let mut spec = sec7_spec();
        spec.sde.a[(0, 0)] = 60.0;
        let (_, sched) = pipeline(&spec);
        let basis = build_basis(spec.disc.modes);
        let err = simulate_full(&spec, &sched, &basis, 0.0, &mut path_stream(0, 0), false);
        assert!(matches!(err, Err(Error::Blowup { .. })));
    }
}
