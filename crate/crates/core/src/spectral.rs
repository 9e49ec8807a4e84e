//! Functional calculus for Hermitian equivariant kernels: eigendecomposition,
//! `f(D)`, wave operators `e^{itD}`, Fourier-inversion reconstruction and the
//! normalizing functions used by the index constructions.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::{compress, EquivariantKernel, C64, ZERO};

/// Entrywise Hermiticity tolerance for inputs of the calculus.
pub const HERMITIAN_TOL: f64 = 1e-13;
/// Tolerance used when compressing `f(D)` back to a kernel.
pub const CALCULUS_COMPRESS_TOL: f64 = 1e-11;

/// `U Λ U*` for a Hermitian kernel, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    source: EquivariantKernel,
    eigenvalues: Vec<f64>,
    vectors: DMatrix<C64>,
}

pub fn eigendecompose(k: &EquivariantKernel) -> Result<SpectralDecomposition> {
    let residual = k.hermitian_residual();
    if residual > HERMITIAN_TOL {
        return Err(Error::NotHermitian { residual });
    }
    let n = k.dimension();
    let eig = SymmetricEigen::new(k.assemble());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition { source: k.clone(), eigenvalues, vectors })
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    pub fn source(&self) -> &EquivariantKernel {
        &self.source
    }

    /// `U diag(values) U*` as a dense matrix.
    pub fn dense_with(&self, values: &[C64]) -> DMatrix<C64> {
        let mut scaled = self.vectors.clone();
        for (j, &d) in values.iter().enumerate() {
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= d;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// `U diag(values) U*` compressed back to a kernel.
    pub fn kernel_with(&self, values: &[C64]) -> Result<EquivariantKernel> {
        compress(&self.dense_with(values), self.source.cover(), self.source.rank(), CALCULUS_COMPRESS_TOL)
    }

    /// `f(D)`.
    pub fn apply(&self, f: &ScalarFunction) -> Result<EquivariantKernel> {
        let values: Vec<C64> = self.eigenvalues.iter().map(|&x| f.eval(x)).collect();
        let k = self.kernel_with(&values)?;
        if f.is_real_valued() {
            // symmetrize away rounding so real functions give exactly Hermitian kernels
            return Ok(k.add(&k.adjoint())?.scale(C64::new(0.5, 0.0)));
        }
        Ok(k)
    }

    /// `‖UΛU* − A‖_max / max(‖A‖_max, 1)`.
    pub fn reconstruction_residual(&self) -> f64 {
        let values: Vec<C64> = self.eigenvalues.iter().map(|&x| C64::new(x, 0.0)).collect();
        let a = self.source.assemble();
        let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
        max_entry(&(self.dense_with(&values) - a)) / scale
    }

    /// `‖U*U − I‖_max`.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.vectors.nrows();
        max_entry(&(self.vectors.adjoint() * &self.vectors - DMatrix::identity(n, n)))
    }

    /// Smallest `|λ|`.
    pub fn gap(&self) -> f64 {
        self.eigenvalues.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn max_entry(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

type Eval = Arc<dyn Fn(f64) -> C64 + Send + Sync>;
type Tail = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coarse classification carried alongside a scalar function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionClass {
    /// Vanishes at infinity.
    C0,
    Bounded,
    /// Odd, with limits `±1`.
    Normalizing,
    /// Normalizing with distributional Fourier transform supported in
    /// `[−λ, λ]`.
    Bandlimited(f64),
    /// No growth restriction (polynomials, the identity).
    Unbounded,
}

/// Fourier transform `f̂(t) = ∫ f(x) e^{−itx} dx` with a bound on the tail
/// `(1/2π) ∫_{|t|>T} |f̂(t)| dt`.
#[derive(Clone)]
pub struct FourierData {
    pub transform: Eval,
    pub tail_bound: Tail,
}

#[derive(Clone)]
pub struct ScalarFunction {
    name: String,
    eval: Eval,
    class: FunctionClass,
    real_valued: bool,
    fourier: Option<FourierData>,
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFunction")
            .field("name", &self.name)
            .field("class", &self.class)
            .field("real_valued", &self.real_valued)
            .field("fourier", &self.fourier.is_some())
            .finish()
    }
}

const NORMALIZING_PROBE: f64 = 1e6;
const NORMALIZING_LIMIT_TOL: f64 = 1e-2;

impl ScalarFunction {
    /// A general function; `real_valued` asserts `f(ℝ) ⊆ ℝ`.
    pub fn new(
        name: impl Into<String>,
        class: FunctionClass,
        real_valued: bool,
        eval: impl Fn(f64) -> C64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let f = ScalarFunction { name: name.into(), eval: Arc::new(eval), class, real_valued, fourier: None };
        match class {
            FunctionClass::Normalizing | FunctionClass::Bandlimited(_) => f.check_normalizing()?,
            _ => {}
        }
        if let FunctionClass::Bandlimited(l) = class {
            if !(l > 0.0) {
                return Err(Error::BadParameterization(format!("band radius {l} must be positive")));
            }
        }
        Ok(f)
    }

    /// Real function of a real variable.
    pub fn real(
        name: impl Into<String>,
        class: FunctionClass,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(name, class, true, move |x| C64::new(eval(x), 0.0))
    }

    fn check_normalizing(&self) -> Result<()> {
        for x in [0.5, 1.0, 3.0, 10.0, NORMALIZING_PROBE] {
            if (self.eval(-x) + self.eval(x)).norm() > 1e-12 {
                return Err(Error::BadParameterization(format!("{} is not odd at {x}", self.name)));
            }
        }
        let top = self.eval(NORMALIZING_PROBE);
        if (top - C64::new(1.0, 0.0)).norm() > NORMALIZING_LIMIT_TOL {
            return Err(Error::BadParameterization(format!("{} does not tend to 1 (value {top})", self.name)));
        }
        Ok(())
    }

    pub fn with_fourier(
        mut self,
        transform: impl Fn(f64) -> C64 + Send + Sync + 'static,
        tail_bound: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.fourier = Some(FourierData { transform: Arc::new(transform), tail_bound: Arc::new(tail_bound) });
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn is_real_valued(&self) -> bool {
        self.real_valued
    }

    pub fn fourier(&self) -> Option<&FourierData> {
        self.fourier.as_ref()
    }

    #[inline]
    pub fn eval(&self, x: f64) -> C64 {
        (self.eval)(x)
    }

    /// Band radius if the function is bandlimited.
    pub fn band_radius(&self) -> Option<f64> {
        match self.class {
            FunctionClass::Bandlimited(l) => Some(l),
            _ => None,
        }
    }

    /// `h ∘ f`.
    pub fn map(&self, name: impl Into<String>, real_valued: bool, h: impl Fn(C64) -> C64 + Send + Sync + 'static) -> Self {
        let inner = Arc::clone(&self.eval);
        ScalarFunction {
            name: name.into(),
            eval: Arc::new(move |x| h(inner(x))),
            class: FunctionClass::Bounded,
            real_valued,
            fourier: None,
        }
    }

    /// Pointwise product `fg`.
    pub fn product(&self, other: &Self) -> Self {
        let (a, b) = (Arc::clone(&self.eval), Arc::clone(&other.eval));
        let class = match (self.class, other.class) {
            (FunctionClass::C0, c) | (c, FunctionClass::C0) if c != FunctionClass::Unbounded => FunctionClass::C0,
            (FunctionClass::Unbounded, _) | (_, FunctionClass::Unbounded) => FunctionClass::Unbounded,
            _ => FunctionClass::Bounded,
        };
        ScalarFunction {
            name: format!("({})·({})", self.name, other.name),
            eval: Arc::new(move |x| a(x) * b(x)),
            class,
            real_valued: self.real_valued && other.real_valued,
            fourier: None,
        }
    }

    pub fn identity() -> Self {
        Self::real("x", FunctionClass::Unbounded, |x| x).expect("valid")
    }

    pub fn constant(c: C64) -> Self {
        Self::new(format!("{c}"), FunctionClass::Bounded, c.im == 0.0, move |_| c).expect("valid")
    }

    /// `Σ c_k x^k` with real coefficients.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let name = format!("poly{coeffs:?}");
        Self::real(name, FunctionClass::Unbounded, move |x| coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c))
            .expect("valid")
    }

    /// `e^{−x²/2}` with `f̂(t) = √(2π) e^{−t²/2}`.
    pub fn gaussian() -> Self {
        Self::real("gaussian", FunctionClass::C0, |x| (-x * x / 2.0).exp())
            .expect("valid")
            .with_fourier(|t| C64::new((2.0 * PI).sqrt() * (-t * t / 2.0).exp(), 0.0), gaussian_tail_bound)
    }

    /// The sign function, `0` at `0`.
    pub fn sign() -> Self {
        Self::real("sign", FunctionClass::Normalizing, |x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .expect("valid")
    }

    /// `x ↦ e^{itx}`.
    pub fn exp_i(t: f64) -> Self {
        Self::new(format!("exp(i{t}x)"), FunctionClass::Bounded, false, move |x| C64::new(0.0, t * x).exp())
            .expect("valid")
    }
}

/// `(1/2π) ∫_{|t|>T} √(2π) e^{−t²/2} dt ≤ e^{−T²/2}·√2 / (T√π)`.
pub fn gaussian_tail_bound(t_max: f64) -> f64 {
    if t_max <= 0.0 {
        return 1.0;
    }
    (-t_max * t_max / 2.0).exp() * 2f64.sqrt() / (t_max * PI.sqrt())
}

/// `χ(x) = x/√(1+x²)`.
pub fn chi_default(x: f64) -> f64 {
    x / (1.0 + x * x).sqrt()
}

pub fn chi_default_function() -> ScalarFunction {
    ScalarFunction::real("chi_default", FunctionClass::Normalizing, chi_default).expect("chi_default is normalizing")
}

/// Beyond this argument the Fejér integral is evaluated from the sine
/// integral asymptotic series instead of quadrature.
const FEJER_ASYMPTOTIC_FROM: f64 = 200.0;

/// `G(z) = (2/π) ∫₀^z (1 − u/z) sin(u)/u du` for `z ≥ 0`.
fn fejer_profile(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    if z > FEJER_ASYMPTOTIC_FROM {
        // Si(z) = π/2 − f(z) cos z − g(z) sin z, and (2/π)[Si(z) − (1 − cos z)/z]
        let zi2 = 1.0 / (z * z);
        let f = (1.0 - 2.0 * zi2 * (1.0 - 12.0 * zi2 * (1.0 - 30.0 * zi2 * (1.0 - 56.0 * zi2)))) / z;
        let g = (1.0 - 6.0 * zi2 * (1.0 - 20.0 * zi2 * (1.0 - 42.0 * zi2 * (1.0 - 72.0 * zi2)))) * zi2;
        let si = PI / 2.0 - f * z.cos() - g * z.sin();
        return FRAC_2_PI * (si - (1.0 - z.cos()) / z);
    }
    let integrand = |u: f64| {
        let sinc = if u == 0.0 { 1.0 } else { u.sin() / u };
        (1.0 - u / z) * sinc
    };
    // one panel per half period keeps every piece free of sign changes
    let panels = (z / PI).ceil() as usize;
    let mut total = 0.0;
    for k in 0..panels {
        let a = k as f64 * PI;
        let b = ((k + 1) as f64 * PI).min(z);
        if b > a {
            total += quadrature::integrate(integrand, a, b, 1e-15).integral;
        }
    }
    FRAC_2_PI * total
}

/// `F_λ(x) = (2/π) ∫₀^λ (1 − s/λ) sin(sx)/s ds`.
pub fn fejer_normalizing(lambda: f64, x: f64) -> f64 {
    let z = lambda * x;
    if z < 0.0 {
        -fejer_profile(-z)
    } else {
        fejer_profile(z)
    }
}

/// `t ↦ F_t` with `F₀ = sign` and band radius `λ(t)` for `t > 0`.
#[derive(Clone)]
pub struct NormalizingFamily {
    lambda: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for NormalizingFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalizingFamily").finish_non_exhaustive()
    }
}

/// Builds the Fejér family. `λ` is sampled on a logarithmic grid and must be
/// positive, strictly decreasing and small at large `t`.
pub fn fejer_normalizing_family(lambda: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<NormalizingFamily> {
    let grid: Vec<f64> = (-12..=12).map(|k| 2f64.powi(k)).collect();
    let values: Vec<f64> = grid.iter().map(|&t| lambda(t)).collect();
    if let Some((t, l)) = grid.iter().zip(&values).find(|(_, &l)| !(l > 0.0 && l.is_finite())) {
        return Err(Error::BadParameterization(format!("λ({t}) = {l} is not positive")));
    }
    if let Some(w) = values.windows(2).position(|w| w[1] >= w[0]) {
        return Err(Error::BadParameterization(format!(
            "λ is not decreasing between t = {} and t = {}",
            grid[w],
            grid[w + 1]
        )));
    }
    if values[values.len() - 1] >= values[0] * 1e-2 {
        return Err(Error::BadParameterization("λ does not tend to 0".into()));
    }
    Ok(NormalizingFamily { lambda: Arc::new(lambda) })
}

/// Family with `λ(t) = 1/t`.
pub fn default_family() -> NormalizingFamily {
    fejer_normalizing_family(|t| 1.0 / t).expect("1/t is admissible")
}

impl NormalizingFamily {
    pub fn lambda(&self, t: f64) -> f64 {
        (self.lambda)(t)
    }

    /// `F_t`; `t = 0` gives the sign function.
    pub fn member(&self, t: f64) -> Result<ScalarFunction> {
        if t < 0.0 {
            return Err(Error::BadParameterization(format!("negative parameter {t}")));
        }
        if t == 0.0 {
            return Ok(ScalarFunction::sign());
        }
        let l = self.lambda(t);
        ScalarFunction::real(format!("fejer(t={t})"), FunctionClass::Bandlimited(l), move |x| fejer_normalizing(l, x))
    }
}

/// `f(D)`.
pub fn apply_function(k: &EquivariantKernel, f: &ScalarFunction) -> Result<EquivariantKernel> {
    eigendecompose(k)?.apply(f)
}

/// `e^{itD}` from the eigendecomposition.
pub fn wave_operator(k: &EquivariantKernel, t: f64) -> Result<EquivariantKernel> {
    eigendecompose(k)?.apply(&ScalarFunction::exp_i(t))
}

/// `e^{itD}` by classical RK4 on `U' = iDU`, `U(0) = I`, with step at most
/// `step_scale / ‖D‖`.
pub fn wave_operator_rk4(k: &EquivariantKernel, t: f64, step_scale: f64) -> DMatrix<C64> {
    let n = k.dimension();
    let id = DMatrix::<C64>::identity(n, n);
    let norm = k.operator_norm();
    if t == 0.0 || norm == 0.0 {
        return id;
    }
    let steps = ((t.abs() * norm / step_scale).ceil() as usize).max(1);
    let h = t / steps as f64;
    let a = k.assemble() * C64::new(0.0, 1.0);
    let mut u = id;
    for _ in 0..steps {
        let k1 = &a * &u;
        let k2 = &a * (&u + &k1 * C64::new(h / 2.0, 0.0));
        let k3 = &a * (&u + &k2 * C64::new(h / 2.0, 0.0));
        let k4 = &a * (&u + &k3 * C64::new(h, 0.0));
        u += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
    }
    u
}

/// `(t, ε-propagation of e^{itD})` along a grid.
pub fn epsilon_propagation_profile(k: &EquivariantKernel, grid: &[f64], tau: f64) -> Result<Vec<(f64, f64)>> {
    let dec = eigendecompose(k)?;
    grid.par_iter()
        .map(|&t| Ok((t, dec.apply(&ScalarFunction::exp_i(t))?.propagation(tau))))
        .collect()
}

/// Speed and slack of the discrete propagation bound `v|t| + s₀`:
/// `v = ‖D‖·(max edge length)` and `s₀` one edge length.
pub fn propagation_speed(k: &EquivariantKernel) -> (f64, f64) {
    let base = k.cover().base();
    (k.operator_norm() * base.max_edge_length(), base.max_edge_length())
}

/// Quadrature parameters for Fourier inversion. `nodes` is the number of
/// Simpson subintervals on `[−t_max, t_max]` and must be even.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierQuadrature {
    pub t_max: f64,
    pub nodes: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct FourierInversion {
    pub kernel: EquivariantKernel,
    /// Richardson estimate of the discretization error.
    pub quadrature_estimate: f64,
    pub tail_bound: f64,
}

fn simpson_sum(f: &FourierData, lambda: f64, t_max: f64, nodes: usize) -> C64 {
    let h = 2.0 * t_max / nodes as f64;
    let mut acc = ZERO;
    for k in 0..=nodes {
        let t = -t_max + k as f64 * h;
        let w = if k == 0 || k == nodes {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (f.transform)(t) * C64::new(0.0, t * lambda).exp() * w;
    }
    acc * (h / 3.0) / (2.0 * PI)
}

/// `f(D) ≈ (1/2π) Σ_k w_k f̂(t_k) e^{i t_k D}` by composite Simpson.
pub fn fourier_inversion_apply(k: &EquivariantKernel, f: &ScalarFunction, quad: FourierQuadrature) -> Result<FourierInversion> {
    let fd = f
        .fourier()
        .ok_or_else(|| Error::BadParameterization(format!("{} has no Fourier transform", f.name())))?;
    if quad.nodes < 4 || !quad.nodes.is_multiple_of(4) {
        return Err(Error::BadParameterization(format!(
            "node count {} must be a positive multiple of 4",
            quad.nodes
        )));
    }
    if !(quad.t_max > 0.0) {
        return Err(Error::BadParameterization("t_max must be positive".into()));
    }
    let dec = eigendecompose(k)?;
    let fine: Vec<C64> = dec.eigenvalues().iter().map(|&x| simpson_sum(fd, x, quad.t_max, quad.nodes)).collect();
    let coarse: Vec<C64> = dec.eigenvalues().iter().map(|&x| simpson_sum(fd, x, quad.t_max, quad.nodes / 2)).collect();
    let quadrature_estimate = fine.iter().zip(&coarse).map(|(a, b)| (a - b).norm() / 15.0).fold(0.0, f64::max);
    let tail_bound = (fd.tail_bound)(quad.t_max);
    if quadrature_estimate + tail_bound > quad.tolerance {
        return Err(Error::QuadratureUnderresolved { estimate: quadrature_estimate + tail_bound, tolerance: quad.tolerance });
    }
    Ok(FourierInversion { kernel: dec.kernel_with(&fine)?, quadrature_estimate, tail_bound })
}

/// Round-off level below which residuals carry no convergence information.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Residual of the Simpson reconstruction against `f(D)` for each node
/// count, with no tolerance enforced.
pub fn fourier_convergence_audit(k: &EquivariantKernel, f: &ScalarFunction, t_max: f64, nodes: &[usize]) -> Result<Vec<(usize, f64)>> {
    let exact = apply_function(k, f)?;
    nodes
        .iter()
        .map(|&n| {
            let quad = FourierQuadrature { t_max, nodes: n, tolerance: f64::INFINITY };
            Ok((n, fourier_inversion_apply(k, f, quad)?.kernel.max_abs_diff(&exact)?))
        })
        .collect()
}

/// `log₂(r_n / r_{2n})` for consecutive doublings whose finer residual is
/// still above [`ROUNDOFF_FLOOR`].
pub fn observed_orders(audit: &[(usize, f64)]) -> Vec<f64> {
    audit
        .windows(2)
        .filter(|w| w[1].0 == 2 * w[0].0 && w[1].1 > ROUNDOFF_FLOOR)
        .map(|w| (w[0].1 / w[1].1).log2())
        .collect()
}

/// `min |λ|` over the spectrum.
pub fn spectral_gap(k: &EquivariantKernel) -> Result<f64> {
    Ok(eigendecompose(k)?.gap())
}

/// Spectral gap, or [`Error::InvertibilityRequired`] below `floor`.
pub fn require_gap(k: &EquivariantKernel, floor: f64) -> Result<f64> {
    let gap = spectral_gap(k)?;
    if gap < floor {
        return Err(Error::InvertibilityRequired { gap, floor });
    }
    Ok(gap)
}

/// Matches every element of `sub` to a distinct element of `sup` within
/// `tol`. Returns the largest matched distance, or `None` if no such
/// matching exists. Both inputs are sorted internally.
pub fn multiset_contained(sub: &[f64], sup: &[f64], tol: f64) -> Option<f64> {
    let mut a = sub.to_vec();
    let mut b = sup.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut j = 0;
    let mut worst: f64 = 0.0;
    for x in a {
        while j < b.len() && b[j] < x - tol {
            j += 1;
        }
        if j == b.len() || b[j] > x + tol {
            return None;
        }
        worst = worst.max((b[j] - x).abs());
        j += 1;
    }
    Some(worst)
}
