//! Expected-cost estimation: Monte Carlo over sampled paths and, as a
//! deterministic cross-check, exact propagation of the second moment
//! through a Lyapunov matrix ODE.
//!
//! For the linear closed loop `dZ = A_cl(t) Z dt + Ctot Z dW` the second
//! moment `M(t) = E[Z_t Z_t^T]` satisfies
//! `dM/dt = A_cl M + M A_cl^T + Ctot M Ctot^T`, so the expected quadratic
//! cost follows without sampling. The moment route is the designated
//! ground truth; Monte Carlo validates the distributional correctness of
//! the simulator against it, and both are compared to the Riccati value.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::assembly::{initial_state, AugmentedOperators};
use crate::closedloop::simulate_cost_only;
use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::riccati::{solve_riccati, GainSchedule};
use crate::rng::path_stream;
use crate::spectral::build_basis;
use crate::{as_f64, real, Real};

const MOMENT_BLOWUP_LIMIT: f64 = 1e12;

/// Sampled estimate of the expected cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostEstimate<T: Real> {
    pub mean: T,
    pub std_err: T,
    pub paths: usize,
    pub seed: u64,
}

/// Time-sampled second moment `E[Z_t Z_t^T]` of the closed loop.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSolution<T: Real> {
    pub times: Vec<T>,
    pub moments: Vec<DMatrix<T>>,
}

/// Compensated (Kahan) accumulator; keeps aggregation independent of the
/// number of worker threads to well below the comparison tolerances.
struct Kahan<T> {
    sum: T,
    comp: T,
}

impl<T: Real> Kahan<T> {
    fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    fn add(&mut self, x: T) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Monte Carlo estimate of the expected cost over independent paths.
///
/// Path `i` draws from the stream `(seed, i)`; the per-path costs are
/// collected in index order and reduced sequentially with compensated
/// summation, so the result does not depend on the thread count.
pub fn estimate_cost<T>(
    ops: &AugmentedOperators<T>,
    sched: &GainSchedule<T>,
    z0: &DVector<T>,
    dt: T,
    paths: usize,
    seed: u64,
) -> Result<CostEstimate<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    if paths < 2 {
        return Err(Error::Domain(
            "estimate_cost needs at least 2 paths for a standard error".into(),
        ));
    }
    let results: Vec<Result<T>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_stream(seed, i as u64);
            simulate_cost_only(ops, sched, z0, dt, &mut rng)
                .map_err(|e| e.with_context(&format!("path {i}")))
        })
        .collect();
    let mut costs = Vec::with_capacity(paths);
    for r in results {
        costs.push(r?);
    }

    let nf = real::<T>(paths as f64);
    let mut acc = Kahan::new();
    for &c in &costs {
        acc.add(c);
    }
    let mean = acc.sum / nf;
    let mut sq = Kahan::new();
    for &c in &costs {
        let d = c - mean;
        sq.add(d * d);
    }
    let variance = sq.sum / real::<T>((paths - 1) as f64);
    let std_err = (variance / nf).sqrt();
    Ok(CostEstimate {
        mean,
        std_err,
        paths,
        seed,
    })
}

fn moment_rhs<T: Real>(
    ops: &AugmentedOperators<T>,
    gain: &RowDVector<T>,
    m: &DMatrix<T>,
) -> DMatrix<T> {
    let a_cl = &ops.atot - &ops.bvec * gain;
    let am = &a_cl * m;
    let cm = &ops.ctot * m * ops.ctot.transpose();
    &am + am.transpose() + cm
}

fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let half = real::<T>(0.5);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

/// Propagates the second moment along the given time grid under an
/// arbitrary gain signal by classical Runge-Kutta, starting from the
/// deterministic initial state (`M(0) = Z0 Z0^T` exactly).
pub fn propagate_moments_with<T, F>(
    ops: &AugmentedOperators<T>,
    times: &[T],
    z0: &DVector<T>,
    gain: F,
) -> Result<MomentSolution<T>>
where
    T: Real,
    F: Fn(T) -> Result<RowDVector<T>>,
{
    if times.len() < 2 {
        return Err(Error::Domain("moment grid needs at least 2 nodes".into()));
    }
    let half = real::<T>(0.5);
    let sixth = real::<T>(1.0 / 6.0);
    let two = real::<T>(2.0);
    let mut m = z0 * z0.transpose();
    let mut moments = Vec::with_capacity(times.len());
    moments.push(m.clone());
    for w in times.windows(2) {
        let (t, t_next) = (w[0], w[1]);
        let h = t_next - t;
        let k_t = gain(t)?;
        let k_mid = gain(t + h * half)?;
        let k_end = gain(t_next)?;
        let k1 = moment_rhs(ops, &k_t, &m);
        let k2 = moment_rhs(ops, &k_mid, &(&m + &k1 * (h * half)));
        let k3 = moment_rhs(ops, &k_mid, &(&m + &k2 * (h * half)));
        let k4 = moment_rhs(ops, &k_end, &(&m + &k3 * h));
        m += (k1 + k2 * two + k3 * two + k4) * (h * sixth);
        symmetrize(&mut m);
        let norm = as_f64(m.amax());
        if !(norm <= MOMENT_BLOWUP_LIMIT) {
            return Err(Error::Blowup {
                context: format!("moment propagation at t = {}", as_f64(t_next)),
                norm,
                limit: MOMENT_BLOWUP_LIMIT,
            });
        }
        moments.push(m.clone());
    }
    Ok(MomentSolution {
        times: times.to_vec(),
        moments,
    })
}

/// Second-moment propagation under the scheduled feedback, on the
/// schedule's own grid.
pub fn propagate_moments<T: Real>(
    ops: &AugmentedOperators<T>,
    sched: &GainSchedule<T>,
    z0: &DVector<T>,
) -> Result<MomentSolution<T>> {
    propagate_moments_with(ops, &sched.times, z0, |t| sched.gain_at(t))
}

/// Entrywise product trace `sum_ij a_ij b_ij`; equals `tr(a b)` for
/// symmetric factors.
fn trace_product<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Exact expected cost of running the scheduled feedback from `z0`:
/// trapezoid of `tr[(Qmat + delta K^T K) M(t)]` over the schedule grid plus
/// `tr[Gmat M(T)]`.
pub fn moment_ode_cost<T: Real>(
    ops: &AugmentedOperators<T>,
    sched: &GainSchedule<T>,
    z0: &DVector<T>,
) -> Result<T> {
    let sol = propagate_moments(ops, sched, z0)?;
    let half = real::<T>(0.5);
    let integrand = |i: usize| {
        let k = &sched.gains[i];
        let m = &sol.moments[i];
        trace_product(&ops.qmat, m) + ops.delta * (k * m * k.transpose())[0]
    };
    let mut total = T::zero();
    let mut f_prev = integrand(0);
    for i in 1..sol.times.len() {
        let f = integrand(i);
        total += half * (sol.times[i] - sol.times[i - 1]) * (f_prev + f);
        f_prev = f;
    }
    Ok(total + trace_product(&ops.gmat, sol.moments.last().unwrap()))
}

/// One pairwise tolerance check of the oracle comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheck<T: Real> {
    pub name: &'static str,
    pub difference: T,
    pub tolerance: T,
    pub pass: bool,
}

/// Three-way comparison of the Riccati value, the moment-ODE cost and the
/// Monte Carlo estimate at the spec's own settings.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport<T: Real> {
    pub riccati_value: T,
    pub moment_cost: T,
    pub mc: CostEstimate<T>,
    pub u0_used: T,
    pub checks: Vec<OracleCheck<T>>,
}

impl<T: Real> OracleReport<T> {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Names of the pairs that disagreed.
    pub fn failures(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name)
            .collect()
    }
}

/// Runs the full pipeline on a spec and compares the three cost routes:
/// Riccati vs moment ODE at 1e-3 relative, Monte Carlo vs either within
/// three standard errors plus a 5% discretization allowance.
pub fn compare_oracles<T>(spec: &ProblemSpec<T>) -> Result<OracleReport<T>>
where
    T: Real + Send + Sync,
    StandardNormal: Distribution<T>,
{
    let basis = build_basis(spec.disc.modes);
    let ops = crate::assembly::assemble(spec, &basis)?;
    let sched = solve_riccati(&ops, spec.cost.horizon, spec.disc.riccati_steps)?;
    let u0 = sched.resolve_u0(&ops, spec.control.u0_mode);
    let z0 = initial_state(&ops, u0);
    let riccati_value = sched.value(&z0);
    let moment_cost = moment_ode_cost(&ops, &sched, &z0)?;
    let mc = estimate_cost(
        &ops,
        &sched,
        &z0,
        spec.disc.sim_dt,
        spec.disc.mc_paths,
        spec.disc.seed,
    )?;

    let three = real::<T>(3.0);
    let allowance = real::<T>(0.05);
    let rel = real::<T>(1e-3);
    let d_rm = (riccati_value - moment_cost).abs();
    let tol_rm = rel * moment_cost.abs();
    let d_mm = (mc.mean - moment_cost).abs();
    let tol_mm = three * mc.std_err + allowance * moment_cost.abs();
    let d_mr = (mc.mean - riccati_value).abs();
    let tol_mr = three * mc.std_err + allowance * riccati_value.abs();
    let checks = vec![
        OracleCheck {
            name: "riccati_vs_moment",
            difference: d_rm,
            tolerance: tol_rm,
            pass: d_rm <= tol_rm,
        },
        OracleCheck {
            name: "mc_vs_moment",
            difference: d_mm,
            tolerance: tol_mm,
            pass: d_mm <= tol_mm,
        },
        OracleCheck {
            name: "mc_vs_riccati",
            difference: d_mr,
            tolerance: tol_mr,
            pass: d_mr <= tol_mr,
        },
    ];
    Ok(OracleReport {
        riccati_value,
        moment_cost,
        mc,
        u0_used: u0,
        checks,
    })
}
