//! Backward integration of the stochastic matrix Riccati equation, the
//! time-varying feedback gain, the quadratic value, and the optimal initial
//! boundary value.
//!
//! The terminal-value problem is
//!
//! ```text
//! dPi/dt = -[Pi Atot + Atot^T Pi + Ctot^T Pi Ctot + Qmat
//!            - delta^-1 (Pi Bvec)(Pi Bvec)^T],      Pi(T) = Gmat,
//! ```
//!
//! integrated by fixed-step classical Runge-Kutta on a uniform grid. The
//! flow preserves symmetry analytically; every stage output is symmetrized
//! so the stored matrices stay numerically symmetric and the PSD checks
//! stay meaningful. The feedback gain is `K(t) = delta^-1 Bvec^T Pi(t)` and
//! the applied control is `V(t) = -K(t) Z(t)`.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::assembly::AugmentedOperators;
use crate::error::{Error, Result};
use crate::{as_f64, real, Real};

const BLOWUP_LIMIT: f64 = 1e12;

/// Time-sampled Riccati solution and feedback gains, ordered forward in
/// time with `times[0] = 0` and `times[last] = T`. Immutable after the
/// solve; safe for concurrent readers.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSchedule<T: Real> {
    pub times: Vec<T>,
    pub pi: Vec<DMatrix<T>>,
    pub gains: Vec<RowDVector<T>>,
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

/// Right-hand side `dPi/dt` of the backward Riccati equation, symmetrized.
///
/// With a zero noise operator the stochastic term vanishes and this reduces
/// term by term to the deterministic LQR Riccati right-hand side.
pub fn riccati_rhs<T: Real>(ops: &AugmentedOperators<T>, pi: &DMatrix<T>) -> DMatrix<T> {
    let pia = pi * &ops.atot;
    let pic = pi * &ops.ctot;
    let cpic = ops.ctot.transpose() * pic;
    let pib: DVector<T> = pi * &ops.bvec;
    let quad = &pib * pib.transpose() / ops.delta;
    let mut rhs = -(&pia + pia.transpose() + cpic + &ops.qmat - quad);
    symmetrize(&mut rhs);
    rhs
}

/// Integrates the Riccati equation backward from `Pi(T) = Gmat` on a
/// uniform grid with `steps` intervals and stores `Pi` and the gain at
/// every node. The terminal node holds `Gmat` bit-exactly.
pub fn solve_riccati<T: Real>(
    ops: &AugmentedOperators<T>,
    horizon: T,
    steps: usize,
) -> Result<GainSchedule<T>> {
    if steps < 2 {
        return Err(Error::Domain("riccati_steps must be at least 2".into()));
    }
    if horizon <= T::zero() {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    let nf = real::<T>(steps as f64);
    let times: Vec<T> = (0..=steps)
        .map(|i| horizon * real::<T>(i as f64) / nf)
        .collect();
    let h = -horizon / nf; // backward step
    let half = real::<T>(0.5);
    let sixth = real::<T>(1.0 / 6.0);
    let two = real::<T>(2.0);

    let mut pi_nodes = vec![DMatrix::zeros(ops.dim, ops.dim); steps + 1];
    pi_nodes[steps] = ops.gmat.clone();

    let mut current = ops.gmat.clone();
    for i in (0..steps).rev() {
        let k1 = riccati_rhs(ops, &current);
        let mut s2 = &current + &k1 * (h * half);
        symmetrize(&mut s2);
        let k2 = riccati_rhs(ops, &s2);
        let mut s3 = &current + &k2 * (h * half);
        symmetrize(&mut s3);
        let k3 = riccati_rhs(ops, &s3);
        let mut s4 = &current + &k3 * h;
        symmetrize(&mut s4);
        let k4 = riccati_rhs(ops, &s4);
        current += (k1 + k2 * two + k3 * two + k4) * (h * sixth);
        symmetrize(&mut current);
        let norm = as_f64(current.amax());
        if !(norm <= BLOWUP_LIMIT) {
            return Err(Error::Blowup {
                context: format!("Riccati integration at t = {}", as_f64(times[i])),
                norm,
                limit: BLOWUP_LIMIT,
            });
        }
        pi_nodes[i] = current.clone();
    }

    let gains = pi_nodes
        .iter()
        .map(|pi| ((pi * &ops.bvec) / ops.delta).transpose())
        .collect();
    Ok(GainSchedule {
        times,
        pi: pi_nodes,
        gains,
    })
}

impl<T: Real> GainSchedule<T> {
    /// Final time of the schedule.
    pub fn horizon(&self) -> T {
        *self.times.last().expect("schedule is never empty")
    }

    /// State dimension of the stored matrices.
    pub fn dim(&self) -> usize {
        self.pi[0].nrows()
    }

    /// Feedback gain at time `t`, linearly interpolated between the stored
    /// nodes and exact at nodes.
    pub fn gain_at(&self, t: T) -> Result<RowDVector<T>> {
        let horizon = self.horizon();
        let slack = real::<T>(1e-9) * horizon.max(T::one());
        if t < -slack || t > horizon + slack {
            return Err(Error::OutOfRange(format!(
                "t = {} outside [0, {}]",
                as_f64(t),
                as_f64(horizon)
            )));
        }
        let t = t.clamp(T::zero(), horizon);
        // times is sorted; find the bracketing interval.
        let idx = self.times.partition_point(|&node| node <= t);
        if idx == 0 {
            return Ok(self.gains[0].clone());
        }
        if idx > self.times.len() - 1 {
            return Ok(self.gains[self.times.len() - 1].clone());
        }
        let (lo, hi) = (idx - 1, idx);
        if self.times[lo] == t {
            return Ok(self.gains[lo].clone());
        }
        let theta = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        Ok(&self.gains[lo] * (T::one() - theta) + &self.gains[hi] * theta)
    }

    /// Quadratic value `Z0^T Pi(0) Z0` of starting the optimal feedback at
    /// state `z0`.
    pub fn value(&self, z0: &DVector<T>) -> T {
        (&self.pi[0] * z0).dot(z0)
    }

    /// Applies the configured initial-control policy.
    pub fn resolve_u0(
        &self,
        ops: &AugmentedOperators<T>,
        mode: crate::model::U0Mode<T>,
    ) -> T {
        match mode {
            crate::model::U0Mode::Optimal => self.optimal_u0(ops),
            crate::model::U0Mode::Fixed(v) => v,
        }
    }

    /// Boundary value U(0) minimizing the quadratic value over the affine
    /// family `Z(0) = lrho U(0) + m0`.
    ///
    /// When the curvature `lrho^T Pi(0) lrho` is below the relative
    /// threshold `1e-10 * |Pi(0)|_max * |lrho|^2`, the value is constant in
    /// U(0) up to noise and 0 is returned.
    pub fn optimal_u0(&self, ops: &AugmentedOperators<T>) -> T {
        let pi0 = &self.pi[0];
        let pil: DVector<T> = pi0 * &ops.lrho;
        let curvature = pil.dot(&ops.lrho);
        let floor = real::<T>(1e-10) * pi0.amax() * ops.lrho.norm_squared();
        if curvature > floor {
            -pil.dot(&ops.m0) / curvature
        } else {
            T::zero()
        }
    }
}
