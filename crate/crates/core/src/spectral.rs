//! Neumann-Laplacian cosine eigenbasis on [0,1], H1 inner products,
//! projections, the boundary-lifting profile rho, and the diagonal heat
//! semigroup.
//!
//! The eigenpairs of the Neumann Laplacian are `lambda_n = pi^2 n^2` with
//! `phi_n(x) = A_n cos(n pi x)`. The coefficients `A_n = sqrt(2/(1+pi^2 n^2))`
//! for `n >= 1` and `A_0 = 1` make `(phi_n)` orthonormal in H1, where
//! `<u,v>_{H1} = int u v + int u' v'`. (The n = 0 coefficient must be 1, not
//! the sqrt(2/(1+0)) the general formula would give: the constant 1 already
//! has unit H1 norm.)
//!
//! All operations here are pure functions over immutable data and safe to
//! call concurrently.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::{real, Real};

/// Eigenvalues and normalization coefficients of the cosine basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis<T: Real> {
    max_mode: usize,
    lambdas: Vec<T>,
    norm_coeffs: Vec<T>,
}

/// Coordinates of an H1 function in the orthonormal basis `(phi_n)`.
///
/// With an orthonormal basis the H1 norm is the Euclidean norm of the
/// coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct H1Vector<T: Real> {
    pub coeffs: DVector<T>,
}

impl<T: Real> H1Vector<T> {
    pub fn norm(&self) -> T {
        self.coeffs.norm()
    }
}

/// A sampled function on a strictly increasing grid covering [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T: Real> {
    pub xs: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    /// Builds a grid function, checking the grid invariants: matching
    /// lengths, strictly increasing abscissae, endpoints 0 and 1.
    pub fn new(xs: Vec<T>, values: Vec<T>) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(Error::Mismatch(format!(
                "grid has {} points but {} values",
                xs.len(),
                values.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::Domain("grid needs at least 2 points".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("grid must be strictly increasing".into()));
        }
        let tol = real::<T>(1e-12);
        if xs[0].abs() > tol || (xs[xs.len() - 1] - T::one()).abs() > tol {
            return Err(Error::Domain("grid must cover [0, 1] exactly".into()));
        }
        Ok(Self { xs, values })
    }

    /// Samples `f` on a uniform grid with `points` nodes.
    pub fn sample(f: impl Fn(T) -> T, points: usize) -> Self {
        assert!(points >= 2, "need at least 2 sample points");
        let h = T::one() / real::<T>((points - 1) as f64);
        let xs: Vec<T> = (0..points)
            .map(|i| {
                if i == points - 1 {
                    T::one()
                } else {
                    real::<T>(i as f64) * h
                }
            })
            .collect();
        let values = xs.iter().map(|&x| f(x)).collect();
        Self { xs, values }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Writes the two-column `x,value` CSV used for debugging dumps.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,value")?;
        for (x, v) in self.xs.iter().zip(&self.values) {
            writeln!(w, "{:.16e},{:.16e}", crate::as_f64(*x), crate::as_f64(*v))?;
        }
        Ok(())
    }
}

/// Builds the basis holding modes `0..=max_mode`.
pub fn build_basis<T: Real>(max_mode: usize) -> SpectralBasis<T> {
    let pi2 = T::pi() * T::pi();
    let mut lambdas = Vec::with_capacity(max_mode + 1);
    let mut norm_coeffs = Vec::with_capacity(max_mode + 1);
    for n in 0..=max_mode {
        let nf = real::<T>(n as f64);
        let lambda = pi2 * nf * nf;
        lambdas.push(lambda);
        norm_coeffs.push(if n == 0 {
            T::one()
        } else {
            (real::<T>(2.0) / (T::one() + lambda)).sqrt()
        });
    }
    SpectralBasis {
        max_mode,
        lambdas,
        norm_coeffs,
    }
}

impl<T: Real> SpectralBasis<T> {
    /// Highest retained mode index N.
    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    /// Number of retained modes, N + 1.
    pub fn len(&self) -> usize {
        self.max_mode + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    pub fn norm_coeffs(&self) -> &[T] {
        &self.norm_coeffs
    }

    fn check_mode(&self, n: usize) -> Result<()> {
        if n > self.max_mode {
            Err(Error::OutOfRange(format!(
                "mode {n} exceeds basis maximum {}",
                self.max_mode
            )))
        } else {
            Ok(())
        }
    }

    /// `phi_n(x) = A_n cos(n pi x)`.
    pub fn eval_phi(&self, n: usize, x: T) -> Result<T> {
        self.check_mode(n)?;
        Ok(self.phi_unchecked(n, x))
    }

    /// `phi_n'(x) = -A_n n pi sin(n pi x)`.
    pub fn eval_phi_deriv(&self, n: usize, x: T) -> Result<T> {
        self.check_mode(n)?;
        Ok(self.phi_deriv_unchecked(n, x))
    }

    pub(crate) fn phi_unchecked(&self, n: usize, x: T) -> T {
        self.norm_coeffs[n] * (real::<T>(n as f64) * T::pi() * x).cos()
    }

    pub(crate) fn phi_deriv_unchecked(&self, n: usize, x: T) -> T {
        let npi = real::<T>(n as f64) * T::pi();
        -self.norm_coeffs[n] * npi * (npi * x).sin()
    }
}

// ---------------------------------------------------------------------------
// H1 inner products
// ---------------------------------------------------------------------------

/// Second-order finite-difference derivative samples on a (possibly
/// non-uniform) grid: three-point centered formulas interiorly, one-sided
/// at both endpoints.
pub(crate) fn derivative_samples<T: Real>(xs: &[T], values: &[T]) -> Vec<T> {
    let n = xs.len();
    debug_assert!(n >= 3);
    let mut d = vec![T::zero(); n];
    // left endpoint
    {
        let h1 = xs[1] - xs[0];
        let h2 = xs[2] - xs[1];
        let c0 = -(h1 + h1 + h2) / (h1 * (h1 + h2));
        let c1 = (h1 + h2) / (h1 * h2);
        let c2 = -h1 / (h2 * (h1 + h2));
        d[0] = c0 * values[0] + c1 * values[1] + c2 * values[2];
    }
    for i in 1..n - 1 {
        let hl = xs[i] - xs[i - 1];
        let hr = xs[i + 1] - xs[i];
        let cl = -hr / (hl * (hl + hr));
        let cc = (hr - hl) / (hl * hr);
        let cr = hl / (hr * (hl + hr));
        d[i] = cl * values[i - 1] + cc * values[i] + cr * values[i + 1];
    }
    // right endpoint
    {
        let h1 = xs[n - 1] - xs[n - 2];
        let h2 = xs[n - 2] - xs[n - 3];
        let c0 = (h1 + h1 + h2) / (h1 * (h1 + h2));
        let c1 = -(h1 + h2) / (h1 * h2);
        let c2 = h1 / (h2 * (h1 + h2));
        d[n - 1] = c0 * values[n - 1] + c1 * values[n - 2] + c2 * values[n - 3];
    }
    d
}

fn trapezoid_product<T: Real>(xs: &[T], f: &[T], g: &[T]) -> T {
    let mut acc = T::zero();
    let half = real::<T>(0.5);
    for i in 0..xs.len() - 1 {
        let h = xs[i + 1] - xs[i];
        acc += half * h * (f[i] * g[i] + f[i + 1] * g[i + 1]);
    }
    acc
}

fn check_quadrature_grid<T: Real>(f: &GridFunction<T>) -> Result<()> {
    if f.len() < 3 {
        return Err(Error::Domain(
            "H1 quadrature needs at least 3 grid points".into(),
        ));
    }
    Ok(())
}

/// H1 inner product of two grid functions on the same grid: composite
/// trapezoid on the values plus trapezoid on finite-difference derivatives.
pub fn h1_inner<T: Real>(f: &GridFunction<T>, g: &GridFunction<T>) -> Result<T> {
    check_quadrature_grid(f)?;
    check_quadrature_grid(g)?;
    if f.len() != g.len() {
        return Err(Error::Mismatch(format!(
            "grids have {} and {} points",
            f.len(),
            g.len()
        )));
    }
    let tol = real::<T>(1e-12);
    if f.xs.iter().zip(&g.xs).any(|(&a, &b)| (a - b).abs() > tol) {
        return Err(Error::Mismatch("grid abscissae differ".into()));
    }
    let df = derivative_samples(&f.xs, &f.values);
    let dg = derivative_samples(&g.xs, &g.values);
    Ok(trapezoid_product(&f.xs, &f.values, &g.values)
        + trapezoid_product(&f.xs, &df, &dg))
}

/// H1 inner product of a grid function against an analytically known
/// function given by `g` and its derivative `dg`. The grid side still uses
/// finite-difference derivatives; the analytic side is exact.
pub fn h1_inner_analytic<T: Real>(
    f: &GridFunction<T>,
    g: impl Fn(T) -> T,
    dg: impl Fn(T) -> T,
) -> Result<T> {
    check_quadrature_grid(f)?;
    let gv: Vec<T> = f.xs.iter().map(|&x| g(x)).collect();
    let dgv: Vec<T> = f.xs.iter().map(|&x| dg(x)).collect();
    let df = derivative_samples(&f.xs, &f.values);
    Ok(trapezoid_product(&f.xs, &f.values, &gv) + trapezoid_product(&f.xs, &df, &dgv))
}

// ---------------------------------------------------------------------------
// The lifting profile rho
// ---------------------------------------------------------------------------

fn stiffness<T: Real>(c: T, mu: T) -> Result<T> {
    if mu <= c {
        return Err(Error::Domain("mu must exceed c".into()));
    }
    Ok((mu - c).sqrt())
}

/// The lifting profile: the unique solution of
/// `-rho'' + (mu - c) rho = 0`, `rho'(0) = 0`, `rho'(1) = 1`,
/// namely `rho(x) = cosh(k x) / (k sinh k)` with `k = sqrt(mu - c)`.
pub fn rho_eval<T: Real>(c: T, mu: T, x: T) -> Result<T> {
    let k = stiffness(c, mu)?;
    Ok((k * x).cosh() / (k * k.sinh()))
}

/// Spatial derivative of the lifting profile, `sinh(k x) / sinh(k)`; equals
/// 0 at x = 0 and 1 at x = 1 by construction.
pub fn rho_deriv<T: Real>(c: T, mu: T, x: T) -> Result<T> {
    let k = stiffness(c, mu)?;
    Ok((k * x).sinh() / k.sinh())
}

/// H1 coefficients of rho in the cosine basis, in closed form.
///
/// Using `rho'' = k^2 rho` and integration by parts,
/// `<rho, phi_n>_{H1} = (1 - k^2) A_n (-1)^n / (k^2 + n^2 pi^2) + phi_n(1)`,
/// with `phi_n(1) = A_n (-1)^n`.
pub fn rho_coeffs<T: Real>(basis: &SpectralBasis<T>, c: T, mu: T) -> Result<H1Vector<T>> {
    let k = stiffness(c, mu)?;
    let k2 = k * k;
    let coeffs = DVector::from_iterator(
        basis.len(),
        (0..basis.len()).map(|n| {
            let sign = if n % 2 == 0 { T::one() } else { -T::one() };
            let an = basis.norm_coeffs[n];
            let lam = basis.lambdas[n]; // n^2 pi^2
            an * sign * ((T::one() - k2) / (k2 + lam) + T::one())
        }),
    );
    Ok(H1Vector { coeffs })
}

/// Coordinates of the evaluation functional at x = 0: since
/// `phi_n(0) = A_n`, the vector is simply `(A_0, ..., A_N)`.
pub fn gamma0_coeffs<T: Real>(basis: &SpectralBasis<T>) -> H1Vector<T> {
    H1Vector {
        coeffs: DVector::from_column_slice(&basis.norm_coeffs),
    }
}

// ---------------------------------------------------------------------------
// Projection, reconstruction, semigroup
// ---------------------------------------------------------------------------

/// Projects a grid function onto the retained modes by quadrature:
/// `coeffs[n] = <f, phi_n>_{H1}`. Idempotent on functions already in the
/// span, up to quadrature error.
pub fn project<T: Real>(basis: &SpectralBasis<T>, f: &GridFunction<T>) -> Result<H1Vector<T>> {
    check_quadrature_grid(f)?;
    let df = derivative_samples(&f.xs, &f.values);
    let mut coeffs = DVector::zeros(basis.len());
    for n in 0..basis.len() {
        let gv: Vec<T> = f.xs.iter().map(|&x| basis.phi_unchecked(n, x)).collect();
        let dgv: Vec<T> = f
            .xs
            .iter()
            .map(|&x| basis.phi_deriv_unchecked(n, x))
            .collect();
        coeffs[n] =
            trapezoid_product(&f.xs, &f.values, &gv) + trapezoid_product(&f.xs, &df, &dgv);
    }
    Ok(H1Vector { coeffs })
}

/// Evaluates the spanned function `sum_n coeffs[n] phi_n` on the given grid.
pub fn reconstruct<T: Real>(
    basis: &SpectralBasis<T>,
    z: &H1Vector<T>,
    xs: &[T],
) -> Result<GridFunction<T>> {
    if z.coeffs.len() != basis.len() {
        return Err(Error::Mismatch(format!(
            "coefficient vector has {} entries for a basis of {} modes",
            z.coeffs.len(),
            basis.len()
        )));
    }
    let values: Vec<T> = xs
        .iter()
        .map(|&x| {
            (0..basis.len())
                .map(|n| z.coeffs[n] * basis.phi_unchecked(n, x))
                .fold(T::zero(), |a, b| a + b)
        })
        .collect();
    GridFunction::new(xs.to_vec(), values)
}

/// Applies the Neumann heat semigroup for time `t >= 0`, which is diagonal
/// in this basis: `coeffs[n] <- exp(-lambda_n t) coeffs[n]`. The constant
/// mode (`lambda_0 = 0`) is preserved exactly.
pub fn heat_semigroup_coeffs<T: Real>(
    basis: &SpectralBasis<T>,
    t: T,
    z: &H1Vector<T>,
) -> H1Vector<T> {
    let coeffs = DVector::from_iterator(
        basis.len(),
        z.coeffs
            .iter()
            .enumerate()
            .map(|(n, &c)| (-basis.lambdas[n] * t).exp() * c),
    );
    H1Vector { coeffs }
}
