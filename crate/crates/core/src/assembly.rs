//! Assembly of the finite-dimensional augmented system.
//!
//! The augmented state is `Z = (X, Y, z)` where `X` is the SDE state, `Y`
//! carries the boundary value `U(t)`, and `z` holds the spectral
//! coefficients of the lifted PDE state `z = u - rho U`. The blocks below
//! express, in the cosine basis, the drift, noise, input, cost and
//! initial-condition operators of that system. State ordering is fixed as
//! (X-block, Y, z-block) everywhere, including CSV outputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{InitialCondition, ProblemSpec};
use crate::spectral::{gamma0_coeffs, project, rho_coeffs, rho_eval, SpectralBasis};
use crate::Real;

/// Dense operators of the augmented system, of dimension `d + 1 + (N+1)`.
///
/// Immutable after assembly; shared concurrent reads are safe. Dimensions
/// stay small, so everything is dense.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedOperators<T: Real> {
    /// SDE state dimension d.
    pub x_dim: usize,
    /// Highest retained mode N.
    pub max_mode: usize,
    /// Total dimension d + 1 + (N+1).
    pub dim: usize,
    /// Drift: diffusion diagonal plus couplings.
    pub atot: DMatrix<T>,
    /// Noise: only the first d rows are nonzero.
    pub ctot: DMatrix<T>,
    /// Input direction of the auxiliary control V.
    pub bvec: DVector<T>,
    /// Running cost weight, block-diagonal (Q, r, 0).
    pub qmat: DMatrix<T>,
    /// Terminal cost weight, block-diagonal (G, 0, 0).
    pub gmat: DMatrix<T>,
    /// Direction of the initial state in U(0): Z(0) = lrho U(0) + m0.
    pub lrho: DVector<T>,
    /// Offset of the initial state: (X0, 0, u0 coefficients).
    pub m0: DVector<T>,
    /// Control regularization weight.
    pub delta: T,
}

/// Builds the augmented operators from a validated spec and a basis with
/// matching truncation.
///
/// The X-row coupling follows from the change of variables `z = u - rho U`:
/// the trace feeding the SDE is `u(t,0) = z(t,0) + rho(0) U(t)`, so the `Y`
/// column of the drift and noise blocks carries `+B rho(0)` and
/// `+D rho(0)`, and the z-columns carry the evaluation coordinates
/// `gamma0 = (phi_0(0), ..., phi_N(0))`.
pub fn assemble<T: Real>(
    spec: &ProblemSpec<T>,
    basis: &SpectralBasis<T>,
) -> Result<AugmentedOperators<T>> {
    if basis.max_mode() != spec.disc.modes {
        return Err(Error::Mismatch(format!(
            "basis holds modes 0..={} but the spec asks for 0..={}",
            basis.max_mode(),
            spec.disc.modes
        )));
    }
    let d = spec.state_dim();
    let n_modes = basis.len();
    let dim = d + 1 + n_modes;
    let c_pde = spec.pde.c;
    let mu = spec.control.mu;

    let rho0 = rho_eval(c_pde, mu, T::zero())?;
    let rho_n = rho_coeffs(basis, c_pde, mu)?;
    let gamma0 = gamma0_coeffs(basis);

    let mut atot = DMatrix::zeros(dim, dim);
    let mut ctot = DMatrix::zeros(dim, dim);

    // X rows: [A, B rho(0), B gamma0^T] and [C, D rho(0), D gamma0^T].
    atot.view_mut((0, 0), (d, d)).copy_from(&spec.sde.a);
    ctot.view_mut((0, 0), (d, d)).copy_from(&spec.sde.c);
    for i in 0..d {
        atot[(i, d)] = spec.sde.b[i] * rho0;
        ctot[(i, d)] = spec.sde.d[i] * rho0;
        for n in 0..n_modes {
            atot[(i, d + 1 + n)] = spec.sde.b[i] * gamma0.coeffs[n];
            ctot[(i, d + 1 + n)] = spec.sde.d[i] * gamma0.coeffs[n];
        }
    }
    // Y row: dU = mu U dt + V dt.
    atot[(d, d)] = mu;
    // z rows: diagonal c - lambda_n.
    for n in 0..n_modes {
        atot[(d + 1 + n, d + 1 + n)] = c_pde - basis.lambdas()[n];
    }

    // Input and initial-state directions share (0, 1, -rho^N).
    let mut lrho = DVector::zeros(dim);
    lrho[d] = T::one();
    for n in 0..n_modes {
        lrho[d + 1 + n] = -rho_n.coeffs[n];
    }
    let bvec = lrho.clone();

    let mut qmat = DMatrix::zeros(dim, dim);
    qmat.view_mut((0, 0), (d, d)).copy_from(&spec.cost.q);
    qmat[(d, d)] = spec.cost.r;
    let mut gmat = DMatrix::zeros(dim, dim);
    gmat.view_mut((0, 0), (d, d)).copy_from(&spec.cost.g);

    let u0_coeffs = match &spec.pde.u0 {
        InitialCondition::Constant(v) => {
            let mut c = DVector::zeros(n_modes);
            c[0] = *v;
            c
        }
        InitialCondition::Table(g) => project(basis, g)?.coeffs,
    };
    let mut m0 = DVector::zeros(dim);
    m0.rows_mut(0, d).copy_from(&spec.sde.x0);
    for n in 0..n_modes {
        m0[d + 1 + n] = u0_coeffs[n];
    }

    Ok(AugmentedOperators {
        x_dim: d,
        max_mode: basis.max_mode(),
        dim,
        atot,
        ctot,
        bvec,
        qmat,
        gmat,
        lrho,
        m0,
        delta: spec.cost.delta,
    })
}

/// Initial augmented state for a given boundary value `U(0)`:
/// `Z(0) = lrho * U(0) + m0`.
pub fn initial_state<T: Real>(ops: &AugmentedOperators<T>, u0_value: T) -> DVector<T> {
    &ops.lrho * u0_value + &ops.m0
}
