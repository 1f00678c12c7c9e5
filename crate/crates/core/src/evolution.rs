//! Symbol exponentials `exp(-i tau A(u, theta))` and exact per-mode linear
//! evolution of constant-coefficient perturbations on a periodic square.

use nalgebra::{DMatrix, DVector, SMatrix};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::eigen::{right_vector_x, spectrum, Label};
use crate::error::{Error, Result};
use crate::model::{
    build_a_theta, build_aug_a_theta, build_aug_source_jacobian, build_ax, build_rotation,
    energy_hessian, AugmentedState, LayerState, PhysParams,
};

/// Eigenvector matrices with a larger condition number use the Padé path.
pub const MAX_EIGEN_COND: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpMethod {
    Eigen,
    Pade,
}

/// `tau -> exp(-i tau A)` for a fixed real symbol `A`.
#[derive(Debug, Clone)]
pub struct SymbolPropagator {
    a: DMatrix<Complex64>,
    eig: Option<(DMatrix<Complex64>, DMatrix<Complex64>, Vec<Complex64>)>,
    /// 2-norm condition number of the column-normalized eigenvector matrix,
    /// infinite when no usable eigenbasis exists.
    pub cond: f64,
}

impl SymbolPropagator {
    pub fn new(s: &LayerState, p: &PhysParams, theta: f64) -> Self {
        let a = build_a_theta(s, p, theta).map(|x| Complex64::new(x, 0.0));
        let a = DMatrix::from_column_slice(6, 6, a.as_slice());
        let eig = closed_form_basis(s, p, theta);
        let (eig, cond) = match eig {
            Some((v, mu)) => {
                let cond = condition_number(&v);
                match v.clone().try_inverse() {
                    Some(vinv) if cond < MAX_EIGEN_COND => (Some((v, vinv, mu)), cond),
                    _ => (None, f64::INFINITY),
                }
            }
            None => (None, f64::INFINITY),
        };
        SymbolPropagator { a, eig, cond }
    }

    pub fn method(&self) -> ExpMethod {
        if self.eig.is_some() {
            ExpMethod::Eigen
        } else {
            ExpMethod::Pade
        }
    }

    pub fn at(&self, tau: f64) -> DMatrix<Complex64> {
        let n = self.a.nrows();
        if tau == 0.0 {
            return DMatrix::identity(n, n);
        }
        match &self.eig {
            Some((v, vinv, mu)) => {
                let mut vd = v.clone();
                for (j, m) in mu.iter().enumerate() {
                    let phase = (Complex64::new(0.0, -tau) * m).exp();
                    vd.column_mut(j).scale_mut_complex(phase);
                }
                vd * vinv
            }
            None => (&self.a * Complex64::new(0.0, -tau)).exp(),
        }
    }
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, c: Complex64);
}

impl<S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>> ScaleComplex
    for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>
{
    fn scale_mut_complex(&mut self, c: Complex64) {
        for x in self.iter_mut() {
            *x *= c;
        }
    }
}

/// Column-normalized closed-form eigenvectors of `A(u, theta)` (complex
/// eigenvalues allowed) and the eigenvalues.
fn closed_form_basis(
    s: &LayerState,
    p: &PhysParams,
    theta: f64,
) -> Option<(DMatrix<Complex64>, Vec<Complex64>)> {
    if !(s.h1 > 0.0 && s.h2 > 0.0) {
        return None;
    }
    let sp = spectrum(s, p, theta).ok()?;
    let rs = s.rotated(theta);
    let pt = build_rotation(theta)
        .transpose()
        .map(|x| Complex64::new(x, 0.0));
    let mut v = DMatrix::zeros(6, 6);
    for (j, &label) in Label::BASE.iter().enumerate() {
        let mu = sp.get(label);
        let col = pt * right_vector_x(&rs, p, label, mu);
        let norm = col.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        v.set_column(j, &(col / Complex64::new(norm, 0.0)));
    }
    Some((v, sp.values.clone()))
}

fn condition_number(v: &DMatrix<Complex64>) -> f64 {
    let sv = v.clone().singular_values();
    let (mx, mn) = (sv.max(), sv.min());
    if mn > 0.0 && mx.is_finite() {
        mx / mn
    } else {
        f64::INFINITY
    }
}

/// Spectral norm of a complex matrix.
pub fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    m.clone().singular_values().max()
}

/// `exp(-i tau A(u, theta))`.
pub fn symbol_exponential(
    s: &LayerState,
    p: &PhysParams,
    theta: f64,
    tau: f64,
) -> DMatrix<Complex64> {
    SymbolPropagator::new(s, p, theta).at(tau)
}

/// Condition number of the normalized eigenvector matrix of `A(u, theta)`;
/// bounds `sup_tau |exp(-i tau A)|` when the spectrum is real.
pub fn eigenvector_condition(s: &LayerState, p: &PhysParams, theta: f64) -> f64 {
    closed_form_basis(s, p, theta)
        .map(|(v, _)| condition_number(&v))
        .unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGrowthReport {
    pub theta: f64,
    pub tau_max: f64,
    pub n_tau: usize,
    /// `(tau, |exp(-i tau A)|_2)` samples.
    pub norms: Vec<(f64, f64)>,
    pub sup_norm: f64,
    /// Slope of `ln |exp(-i tau A)|` over `tau` in `[tau_max/2, tau_max]`.
    pub growth_rate: f64,
    /// Largest `|Im mu|` of the spectrum (m/s).
    pub oracle_growth_rate: f64,
    pub cond: f64,
    pub method: ExpMethod,
}

pub fn mode_growth(
    s: &LayerState,
    p: &PhysParams,
    theta: f64,
    tau_max: f64,
    n_tau: usize,
) -> Result<ModeGrowthReport> {
    if n_tau < 16 {
        return Err(Error::InvalidInput(format!(
            "n_tau must be at least 16, got {n_tau}"
        )));
    }
    if !(tau_max > 0.0 && tau_max.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "tau_max must be positive, got {tau_max}"
        )));
    }
    let prop = SymbolPropagator::new(s, p, theta);
    let norms: Vec<(f64, f64)> = (0..n_tau)
        .map(|j| {
            let tau = tau_max * j as f64 / (n_tau - 1) as f64;
            (tau, spectral_norm(&prop.at(tau)))
        })
        .collect();
    let sup_norm = norms.iter().map(|x| x.1).fold(0.0, f64::max);
    let tail: Vec<(f64, f64)> = norms
        .iter()
        .filter(|x| x.0 >= 0.5 * tau_max)
        .map(|&(t, n)| (t, n.ln()))
        .collect();
    let oracle_growth_rate = spectrum(s, p, theta)
        .map(|sp| sp.max_imag())
        .unwrap_or(f64::NAN);
    Ok(ModeGrowthReport {
        theta,
        tau_max,
        n_tau,
        norms,
        sup_norm,
        growth_rate: ls_slope(&tail),
        oracle_growth_rate,
        cond: prop.cond,
        method: prop.method(),
    })
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupNormTrend {
    pub tau_max: Vec<f64>,
    /// Sup over the directions and over `[0, tau_max]`.
    pub sup_norm: Vec<f64>,
    /// Log-log slope of `sup_norm` against `tau_max`.
    pub slope: f64,
    /// Sampling step in `tau`.
    pub step: f64,
}

/// Largest phase advance (radians) between consecutive `tau` samples of the
/// fastest eigenvalue difference.
pub const MAX_PHASE_STEP: f64 = 0.2;

type CMat4 = SMatrix<Complex64, 4, 4>;

/// `exp(-i tau B)` for the quartic block `B` of `A_x(P(theta) u)`. The other
/// block is the diagonal advective pair, so the full exponential has norm
/// `max(1, |exp(-i tau B)|)`.
struct BlockPropagator {
    b: CMat4,
    eig: Option<(CMat4, CMat4, [Complex64; 4])>,
}

impl BlockPropagator {
    fn new(s: &LayerState, p: &PhysParams, theta: f64) -> Self {
        let rs = s.rotated(theta);
        let b = build_ax(&rs, p)
            .fixed_view::<4, 4>(0, 0)
            .map(|x| Complex64::new(x, 0.0));
        let eig = (|| {
            if !(rs.h1 > 0.0 && rs.h2 > 0.0) {
                return None;
            }
            let sp = spectrum(s, p, theta).ok()?;
            let mut v = CMat4::zeros();
            let mut mu = [Complex64::new(0.0, 0.0); 4];
            for (j, &label) in Label::BASE[..4].iter().enumerate() {
                mu[j] = sp.get(label);
                let col = right_vector_x(&rs, p, label, mu[j])
                    .fixed_rows::<4>(0)
                    .into_owned();
                let norm = col.norm();
                if !(norm > 0.0 && norm.is_finite()) {
                    return None;
                }
                v.set_column(j, &(col / Complex64::new(norm, 0.0)));
            }
            let sv = v.singular_values();
            if !(sv.min() > 0.0 && sv.max() / sv.min() < MAX_EIGEN_COND) {
                return None;
            }
            let vinv = v.try_inverse()?;
            Some((v, vinv, mu))
        })();
        BlockPropagator { b, eig }
    }

    fn norm_at(&self, tau: f64) -> f64 {
        let m = match &self.eig {
            Some((v, vinv, mu)) => {
                let mut vd = *v;
                for (j, m) in mu.iter().enumerate() {
                    let phase = (Complex64::new(0.0, -tau) * m).exp();
                    vd.column_mut(j).iter_mut().for_each(|x| *x *= phase);
                }
                vd * vinv
            }
            None => (self.b * Complex64::new(0.0, -tau)).exp(),
        };
        m.singular_values().max().max(1.0)
    }
}

/// Smallest and largest distance between the real parts of two quartic
/// eigenvalues over the directions. The largest sets the `tau` sampling
/// step, the smallest the slowest recurrence.
pub fn phase_gaps(s: &LayerState, p: &PhysParams, thetas: &[f64]) -> (f64, f64) {
    let mut gaps = (f64::INFINITY, 0.0f64);
    for sp in thetas
        .iter()
        .filter_map(|&theta| spectrum(s, p, theta).ok())
    {
        let re: Vec<f64> = sp.values[..4].iter().map(|z| z.re).collect();
        for i in 0..4 {
            for j in 0..i {
                let d = (re[i] - re[j]).abs();
                gaps = (gaps.0.min(d), gaps.1.max(d));
            }
        }
    }
    gaps
}

/// Sup-norm of the symbol exponential over several directions for
/// `tau_max = tau0, 2 tau0, ..., 2^doublings tau0`. The step resolves the
/// fastest phase difference to [`MAX_PHASE_STEP`].
pub fn sup_norm_trend(
    s: &LayerState,
    p: &PhysParams,
    thetas: &[f64],
    tau0: f64,
    doublings: u32,
) -> SupNormTrend {
    let levels = doublings as usize + 1;
    let spread = phase_gaps(s, p, thetas).1;
    let step = if spread > 0.0 {
        (MAX_PHASE_STEP / spread).min(tau0 / 16.0)
    } else {
        tau0 / 16.0
    };
    let tau_max: Vec<f64> = (0..levels).map(|j| tau0 * (1u64 << j) as f64).collect();
    // A(theta + pi) = -A(theta) is real, so both directions give exponentials
    // of equal norm
    let mut distinct: Vec<f64> = Vec::new();
    for &theta in thetas {
        let t = theta.rem_euclid(std::f64::consts::PI);
        if !distinct.iter().any(|&d| (d - t).abs() < 1e-12) {
            distinct.push(t);
        }
    }
    let per_theta: Vec<Vec<f64>> = distinct
        .par_iter()
        .map(|&theta| {
            let prop = BlockPropagator::new(s, p, theta);
            let mut running = 1.0f64;
            let mut k = 1usize;
            let mut sups = Vec::with_capacity(levels);
            for &end in &tau_max {
                while (k as f64) * step < end {
                    running = running.max(prop.norm_at(k as f64 * step));
                    k += 1;
                }
                running = running.max(prop.norm_at(end));
                sups.push(running);
            }
            sups
        })
        .collect();
    let sup_norm: Vec<f64> = (0..levels)
        .map(|j| per_theta.iter().map(|v| v[j]).fold(0.0, f64::max))
        .collect();
    let pts: Vec<(f64, f64)> = tau_max
        .iter()
        .zip(&sup_norm)
        .map(|(t, s)| (t.ln(), s.ln()))
        .collect();
    SupNormTrend {
        slope: ls_slope(&pts),
        tau_max,
        sup_norm,
        step,
    }
}

/// Values of a `dim`-component field on an `n × n` grid over `[0, length)²`.
/// Stored component-major, then row (`y`) major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicField {
    n: usize,
    dim: usize,
    length: f64,
    data: Vec<f64>,
}

impl PeriodicField {
    pub fn zeros(n: usize, dim: usize, length: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "grid size must be a power of two, got {n}"
            )));
        }
        if dim != 6 && dim != 8 {
            return Err(Error::InvalidInput(format!(
                "field dimension must be 6 or 8, got {dim}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "domain length must be positive, got {length}"
            )));
        }
        Ok(PeriodicField {
            n,
            dim,
            length,
            data: vec![0.0; dim * n * n],
        })
    }

    /// Samples `f(x, y)` at the grid points `(ix dx, iy dx)`.
    pub fn from_fn(
        n: usize,
        dim: usize,
        length: f64,
        f: impl Fn(f64, f64) -> Vec<f64>,
    ) -> Result<Self> {
        let mut field = Self::zeros(n, dim, length)?;
        let dx = field.spacing();
        for iy in 0..n {
            for ix in 0..n {
                let v = f(ix as f64 * dx, iy as f64 * dx);
                if v.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "expected {dim} components, got {}",
                        v.len()
                    )));
                }
                for (c, x) in v.into_iter().enumerate() {
                    field.set(c, ix, iy, x);
                }
            }
        }
        field.validate()?;
        Ok(field)
    }

    pub fn from_data(n: usize, dim: usize, length: f64, data: Vec<f64>) -> Result<Self> {
        let mut field = Self::zeros(n, dim, length)?;
        if data.len() != field.data.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                field.data.len(),
                data.len()
            )));
        }
        field.data = data;
        field.validate()?;
        Ok(field)
    }

    fn validate(&self) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput("field has non-finite values".into()))
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, ix: usize, iy: usize) -> f64 {
        self.data[(c * self.n + iy) * self.n + ix]
    }

    pub fn set(&mut self, c: usize, ix: usize, iy: usize, value: f64) {
        self.data[(c * self.n + iy) * self.n + ix] = value;
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let m = self.n * self.n;
        &self.data[c * m..(c + 1) * m]
    }

    /// Discrete `L²` norm `sqrt(sum |v|² dx²)`.
    pub fn l2_norm(&self) -> f64 {
        let dx = self.spacing();
        (self.data.iter().map(|x| x * x).sum::<f64>() * dx * dx).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Fourier coefficients of every component of a field.
#[derive(Debug, Clone)]
struct Spectral {
    n: usize,
    length: f64,
    hat: Vec<Vec<Complex64>>,
}

fn fft2(n: usize, values: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    for row in values.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for ix in 0..n {
        for iy in 0..n {
            col[iy] = values[iy * n + ix];
        }
        fft.process(&mut col);
        for iy in 0..n {
            values[iy * n + ix] = col[iy];
        }
    }
    if inverse {
        let scale = 1.0 / (n * n) as f64;
        for v in values.iter_mut() {
            *v *= scale;
        }
    }
}

fn forward(field: &PeriodicField) -> Spectral {
    let hat = (0..field.dim)
        .map(|c| {
            let mut v: Vec<Complex64> = field
                .component(c)
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect();
            fft2(field.n, &mut v, false);
            v
        })
        .collect();
    Spectral {
        n: field.n,
        length: field.length,
        hat,
    }
}

fn inverse(sp: Spectral) -> PeriodicField {
    let dim = sp.hat.len();
    let mut data = Vec::with_capacity(dim * sp.n * sp.n);
    for mut v in sp.hat {
        fft2(sp.n, &mut v, true);
        data.extend(v.iter().map(|z| z.re));
    }
    PeriodicField {
        n: sp.n,
        dim,
        length: sp.length,
        data,
    }
}

/// Angular wavenumber of FFT index `j`.
fn wavenumber(j: usize, n: usize, length: f64) -> f64 {
    let signed = if j < n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    };
    std::f64::consts::TAU * signed / length
}

/// Fraction of the field's energy in the top octave (`max(|jx|, |jy|) >= n/4`).
pub fn top_octave_energy_fraction(field: &PeriodicField) -> f64 {
    let sp = forward(field);
    let n = sp.n;
    let (mut top, mut all) = (0.0, 0.0);
    for hat in &sp.hat {
        for iy in 0..n {
            for ix in 0..n {
                let e = hat[iy * n + ix].norm_sqr();
                all += e;
                let sj = |j: usize| if j < n / 2 { j } else { n - j };
                if sj(ix).max(sj(iy)) >= n / 4 {
                    top += e;
                }
            }
        }
    }
    if all > 0.0 {
        top / all
    } else {
        0.0
    }
}

/// Largest top-octave energy fraction accepted as band-limited.
pub const BAND_LIMIT_TOL: f64 = 1e-20;

fn check_band_limited(field: &PeriodicField) -> Result<()> {
    let frac = top_octave_energy_fraction(field);
    if frac > BAND_LIMIT_TOL {
        return Err(Error::InvalidInput(format!(
            "initial field is not band-limited (top-octave energy fraction {frac:.3e})"
        )));
    }
    Ok(())
}

/// Fourier coefficients below this fraction of the largest one are roundoff
/// from the transform and are zeroed before evolving.
pub const COEFF_CUTOFF: f64 = 1e-13;

fn denoise(spec: &mut Spectral) {
    let big = spec
        .hat
        .iter()
        .flatten()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    let n = spec.n;
    for idx in 0..n * n {
        let small = spec.hat.iter().all(|h| h[idx].norm() <= COEFF_CUTOFF * big);
        if small {
            for h in spec.hat.iter_mut() {
                h[idx] = Complex64::new(0.0, 0.0);
            }
        }
    }
}

struct ModeProp {
    index: usize,
    kmag: f64,
    prop: SymbolPropagator,
}

/// Exact evolution of `dv/dt + A_x dv/dx + A_y dv/dy = 0` with frozen
/// coefficients: each Fourier mode `k` evolves by `exp(-i t |k| A(u, theta_k))`.
pub struct LinearEvolution {
    init: Spectral,
    modes: Vec<ModeProp>,
    c_t: f64,
}

impl LinearEvolution {
    pub fn new(background: &LayerState, p: &PhysParams, init: &PeriodicField) -> Result<Self> {
        if init.dim != 6 {
            return Err(Error::InvalidInput(
                "base evolution needs a 6-component field".into(),
            ));
        }
        check_band_limited(init)?;
        let mut spec = forward(init);
        denoise(&mut spec);
        let n = spec.n;
        let active: Vec<usize> = (0..n * n)
            .filter(|&idx| idx != 0 && spec.hat.iter().any(|h| h[idx].norm() > 0.0))
            .collect();
        let modes: Vec<ModeProp> = active
            .par_iter()
            .map(|&idx| {
                let (kx, ky) = (
                    wavenumber(idx % n, n, spec.length),
                    wavenumber(idx / n, n, spec.length),
                );
                let theta = ky.atan2(kx);
                ModeProp {
                    index: idx,
                    kmag: kx.hypot(ky),
                    prop: SymbolPropagator::new(background, p, theta),
                }
            })
            .collect();
        let c_t = modes.iter().map(|m| m.prop.cond).fold(1.0, f64::max);
        Ok(LinearEvolution {
            init: spec,
            modes,
            c_t,
        })
    }

    /// Well-posedness constant: the largest eigenvector condition number over
    /// the excited modes (infinite if some mode has no usable eigenbasis).
    pub fn c_t(&self) -> f64 {
        self.c_t
    }

    pub fn at(&self, t: f64) -> PeriodicField {
        let mut out = self.init.clone();
        let updates: Vec<(usize, DVector<Complex64>)> = self
            .modes
            .par_iter()
            .map(|m| {
                let v0 = DVector::from_iterator(6, self.init.hat.iter().map(|h| h[m.index]));
                (m.index, m.prop.at(t * m.kmag) * v0)
            })
            .collect();
        for (idx, v) in updates {
            for (c, h) in out.hat.iter_mut().enumerate() {
                h[idx] = v[c];
            }
        }
        inverse(out)
    }
}

pub fn evolve_linear(
    background: &LayerState,
    p: &PhysParams,
    init: &PeriodicField,
    t: f64,
) -> Result<PeriodicField> {
    Ok(LinearEvolution::new(background, p, init)?.at(t))
}

/// Linearized augmented evolution: mode `k` evolves by
/// `exp(-t (i |k| A^r(v, theta_k) + B))` with `B` the Jacobian of the
/// augmented source at the background (flat bottom). Without `B` the
/// mismatch between `w` and the curl of the velocity is not conserved.
pub fn evolve_linear_augmented(
    background: &AugmentedState,
    p: &PhysParams,
    init: &PeriodicField,
    t: f64,
) -> Result<PeriodicField> {
    if init.dim != 8 {
        return Err(Error::InvalidInput(
            "augmented evolution needs an 8-component field".into(),
        ));
    }
    check_band_limited(init)?;
    let mut spec = forward(init);
    denoise(&mut spec);
    let n = spec.n;
    let b = build_aug_source_jacobian(background, p).map(|x| Complex64::new(x, 0.0));
    let b = DMatrix::from_column_slice(8, 8, b.as_slice());
    let updates: Vec<(usize, DVector<Complex64>)> = (0..n * n)
        .into_par_iter()
        .filter(|&idx| spec.hat.iter().any(|h| h[idx].norm() > 0.0))
        .map(|idx| {
            let (kx, ky) = (
                wavenumber(idx % n, n, spec.length),
                wavenumber(idx / n, n, spec.length),
            );
            let kmag = kx.hypot(ky);
            let a = build_aug_a_theta(background, p, ky.atan2(kx))
                .map(|x| Complex64::new(0.0, x * kmag));
            let gen = DMatrix::from_column_slice(8, 8, a.as_slice()) + &b;
            let m = if t == 0.0 {
                DMatrix::identity(8, 8)
            } else {
                (gen * Complex64::new(-t, 0.0)).exp()
            };
            let v0 = DVector::from_iterator(8, spec.hat.iter().map(|h| h[idx]));
            (idx, m * v0)
        })
        .collect();
    for (idx, v) in updates {
        for (c, h) in spec.hat.iter_mut().enumerate() {
            h[idx] = v[c];
        }
    }
    Ok(inverse(spec))
}

/// `phi_i = w_i - (dv_i/dx - du_i/dy)`, computed spectrally, for `i = 1, 2`.
pub fn vorticity_mismatch(field: &PeriodicField) -> Result<[Vec<f64>; 2]> {
    if field.dim != 8 {
        return Err(Error::InvalidInput(
            "vorticity mismatch needs an 8-component field".into(),
        ));
    }
    let spec = forward(field);
    let n = spec.n;
    let phi = |u: usize, v: usize, w: usize| {
        let mut hat: Vec<Complex64> = (0..n * n)
            .map(|idx| {
                let (kx, ky) = (
                    wavenumber(idx % n, n, spec.length),
                    wavenumber(idx / n, n, spec.length),
                );
                let curl = Complex64::new(0.0, kx) * spec.hat[v][idx]
                    - Complex64::new(0.0, ky) * spec.hat[u][idx];
                spec.hat[w][idx] - curl
            })
            .collect();
        fft2(n, &mut hat, true);
        hat.iter().map(|z| z.re).collect::<Vec<f64>>()
    };
    Ok([phi(2, 4, 6), phi(3, 5, 7)])
}

/// Replaces `w_i` by the spectral curl of the layer velocity.
pub fn make_compatible(field: &mut PeriodicField) -> Result<()> {
    let phi = vorticity_mismatch(field)?;
    let m = field.n * field.n;
    for (i, ph) in phi.iter().enumerate() {
        let c = 6 + i;
        for (k, x) in ph.iter().enumerate() {
            field.data[c * m + k] -= x;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VorticityReport {
    pub times: Vec<f64>,
    /// `max |phi_1|`, `max |phi_2|` at each time.
    pub max_mismatch: Vec<[f64; 2]>,
    /// `max_t max |phi(t) - phi(0)|`.
    pub max_drift: f64,
    /// Largest absolute value of the initial field, at least 1.
    pub scale: f64,
}

pub fn vorticity_compatibility(
    background: &AugmentedState,
    p: &PhysParams,
    init: &PeriodicField,
    times: &[f64],
) -> Result<VorticityReport> {
    let phi0 = vorticity_mismatch(init)?;
    let mut max_mismatch = Vec::with_capacity(times.len());
    let mut max_drift = 0.0f64;
    for &t in times {
        let field = evolve_linear_augmented(background, p, init, t)?;
        let phi = vorticity_mismatch(&field)?;
        let mut mm = [0.0f64; 2];
        for i in 0..2 {
            for (a, b) in phi[i].iter().zip(&phi0[i]) {
                mm[i] = mm[i].max(a.abs());
                max_drift = max_drift.max((a - b).abs());
            }
        }
        max_mismatch.push(mm);
    }
    Ok(VorticityReport {
        times: times.to_vec(),
        max_mismatch,
        max_drift,
        scale: init.max_abs().max(1.0),
    })
}

/// Quadratic perturbation energy `1/2 sum v^T H v dx²`, with `H` the Hessian
/// of the two-dimensional energy at the background.
pub fn perturbation_energy(
    background: &LayerState,
    p: &PhysParams,
    field: &PeriodicField,
) -> Result<f64> {
    if field.dim != 6 {
        return Err(Error::InvalidInput(
            "perturbation energy needs a 6-component field".into(),
        ));
    }
    let h = energy_hessian(background, p);
    let m = field.n * field.n;
    let dx = field.spacing();
    let mut total = 0.0;
    for k in 0..m {
        let v = crate::model::Vec6::from_iterator((0..6).map(|c| field.data[c * m + k]));
        total += v.dot(&(h * v));
    }
    Ok(0.5 * total * dx * dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NondimState;
    use std::f64::consts::TAU;

    fn params(gamma: f64) -> PhysParams {
        PhysParams::new(gamma, 1.0, 0.0).unwrap()
    }

    fn nd_state(fx: f64, fy: f64, h: f64) -> LayerState {
        NondimState::new(fx, fy, h).unwrap().to_layer_state(1.0)
    }

    #[test]
    fn identity_at_zero_tau() {
        let s = nd_state(0.1, 0.0, 1.0);
        let m = symbol_exponential(&s, &params(0.9), 0.3, 0.0);
        assert_eq!(m, DMatrix::identity(6, 6));
    }

    #[test]
    fn diagonal_symbol_is_unitary() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, -2.5),
            Complex64::new(0.0, 0.7),
        ]));
        for tau in [0.1, 3.0, 40.0] {
            let m = (&a * Complex64::new(tau, 0.0)).exp();
            assert!((spectral_norm(&m) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_and_pade_paths_agree() {
        let s = LayerState::new(1.2, 0.7, 0.1, 0.3, -0.2, 0.05).unwrap();
        let p = PhysParams::new(0.8, 9.81, 0.0).unwrap();
        let prop = SymbolPropagator::new(&s, &p, 0.6);
        assert_eq!(prop.method(), ExpMethod::Eigen);
        let a = build_a_theta(&s, &p, 0.6).map(|x| Complex64::new(x, 0.0));
        let a = DMatrix::from_column_slice(6, 6, a.as_slice());
        for tau in [0.01, 0.7, 5.0] {
            let pade = (&a * Complex64::new(0.0, -tau)).exp();
            assert!((prop.at(tau) - pade).camax() < 1e-10, "tau {tau}");
        }
        // gap state: complex eigenvalues
        let s = nd_state(2.0, 0.0, 1.0);
        let prop = SymbolPropagator::new(&s, &params(0.5), 0.0);
        let a = build_a_theta(&s, &params(0.5), 0.0).map(|x| Complex64::new(x, 0.0));
        let a = DMatrix::from_column_slice(6, 6, a.as_slice());
        let pade = (&a * Complex64::new(0.0, -2.0)).exp();
        assert!((prop.at(2.0) - &pade).camax() < 1e-9 * pade.camax());
    }

    #[test]
    fn block_norm_matches_full_exponential() {
        let s = LayerState::new(1.2, 0.7, 0.1, 0.3, -0.2, 0.05).unwrap();
        let p = PhysParams::new(0.8, 9.81, 0.0).unwrap();
        for theta in [0.0, 0.9, 2.5] {
            let block = BlockPropagator::new(&s, &p, theta);
            assert!(block.eig.is_some());
            for tau in [0.3, 4.0, 17.0] {
                let full = spectral_norm(&symbol_exponential(&s, &p, theta, tau));
                assert!((block.norm_at(tau) - full).abs() < 1e-10 * full);
            }
        }
        let t = sup_norm_trend(&s, &p, &[0.0, 1.0], 5.0, 3);
        assert_eq!(t.sup_norm.len(), 4);
        assert!(t.sup_norm.windows(2).all(|w| w[0] <= w[1]));
        assert!(t.step <= MAX_PHASE_STEP / phase_gaps(&s, &p, &[0.0, 1.0]).1);
    }

    #[test]
    fn determinant_modulus() {
        let s = nd_state(0.1, 0.05, 1.0);
        let m = symbol_exponential(&s, &params(0.9), 0.4, 7.0);
        assert!((m.determinant().norm() - 1.0).abs() < 1e-10);
        let s = nd_state(2.0, 0.0, 1.0);
        let p = params(0.5);
        let sp = spectrum(&s, &p, 0.0).unwrap();
        let sum_im: f64 = sp.values.iter().map(|z| z.im).sum();
        let m = symbol_exponential(&s, &p, 0.0, 3.0);
        assert!((m.determinant().norm() - (3.0 * sum_im).exp()).abs() < 1e-9);
    }

    #[test]
    fn growth_in_gap_and_bounded_when_hyperbolic() {
        let r = mode_growth(&nd_state(2.0, 0.0, 1.0), &params(0.5), 0.0, 60.0, 200).unwrap();
        assert_eq!(r.norms[0].1, 1.0);
        assert!(r.oracle_growth_rate > 0.0);
        assert!(
            (r.growth_rate / r.oracle_growth_rate - 1.0).abs() < 0.05,
            "{} {}",
            r.growth_rate,
            r.oracle_growth_rate
        );

        let r = mode_growth(&nd_state(0.0, 0.0, 1.0), &params(0.9), 0.0, 100.0, 400).unwrap();
        assert!(r.sup_norm <= r.cond * (1.0 + 1e-10));
        assert!(r.growth_rate.abs() < 1e-2);
        assert!(mode_growth(&nd_state(0.0, 0.0, 1.0), &params(0.9), 0.0, 1.0, 8).is_err());
    }

    fn smooth_field(n: usize, dim: usize) -> PeriodicField {
        PeriodicField::from_fn(n, dim, TAU, |x, y| {
            (0..dim)
                .map(|c| {
                    let c = c as f64;
                    0.1 * ((x + 0.3 * c).sin()
                        + 0.5 * (2.0 * y - c).cos()
                        + 0.2 * (x + 3.0 * y + c).sin())
                })
                .collect()
        })
        .unwrap()
    }

    #[test]
    fn zero_field_stays_zero() {
        let init = PeriodicField::zeros(16, 6, TAU).unwrap();
        let out = evolve_linear(&nd_state(0.1, 0.0, 1.0), &params(0.9), &init, 3.0).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn bounded_evolution_in_hyperbolic_background() {
        let init = smooth_field(16, 6);
        let bg = LayerState::new(1.0, 1.0, 0.0, 0.05, 0.0, 0.02).unwrap();
        let p = params(0.9);
        let evo = LinearEvolution::new(&bg, &p, &init).unwrap();
        let n0 = init.l2_norm();
        assert!((evo.at(0.0).l2_norm() - n0).abs() < 1e-12 * n0);
        for t in [0.5, 2.0, 10.0, 40.0] {
            assert!(evo.at(t).l2_norm() <= evo.c_t() * n0 * (1.0 + 1e-10));
        }
    }

    #[test]
    fn single_mode_grows_in_gap() {
        let init = PeriodicField::from_fn(16, 6, TAU, |x, _| {
            vec![1e-3 * x.cos(), 0.0, 0.0, 0.0, 0.0, 0.0]
        })
        .unwrap();
        let bg = nd_state(2.0, 0.0, 1.0);
        let p = params(0.5);
        let rate = spectrum(&bg, &p, 0.0).unwrap().max_imag();
        let evo = LinearEvolution::new(&bg, &p, &init).unwrap();
        let (a, b) = (evo.at(10.0).l2_norm(), evo.at(20.0).l2_norm());
        assert!(
            ((b / a).ln() / 10.0 / rate - 1.0).abs() < 0.01,
            "{} {rate}",
            (b / a).ln() / 10.0
        );
    }

    #[test]
    fn rejects_non_band_limited_init() {
        let init = PeriodicField::from_fn(8, 6, TAU, |x, _| {
            vec![(3.0 * x).sin(), 0.0, 0.0, 0.0, 0.0, 0.0]
        })
        .unwrap();
        assert!(evolve_linear(&nd_state(0.0, 0.0, 1.0), &params(0.9), &init, 1.0).is_err());
        assert!(PeriodicField::zeros(12, 6, TAU).is_err());
    }

    #[test]
    fn vorticity_mismatch_is_conserved() {
        let bg = AugmentedState::new(
            LayerState::new(1.0, 1.0, 0.05, -0.03, 0.02, 0.04).unwrap(),
            0.0,
            0.0,
        )
        .unwrap();
        let p = PhysParams::new(0.9, 1.0, 0.0).unwrap();
        let mut init = smooth_field(16, 8);
        make_compatible(&mut init).unwrap();
        let r = vorticity_compatibility(&bg, &p, &init, &[0.5, 3.0]).unwrap();
        for mm in &r.max_mismatch {
            assert!(mm[0] < 1e-10 * r.scale && mm[1] < 1e-10 * r.scale, "{mm:?}");
        }
        let mut shifted = init.clone();
        for k in 0..16 * 16 {
            shifted.data[6 * 256 + k] += 0.3;
        }
        let r = vorticity_compatibility(&bg, &p, &shifted, &[0.5, 3.0]).unwrap();
        assert!(r.max_drift < 1e-10 * r.scale, "{}", r.max_drift);
        assert!((r.max_mismatch[1][0] - 0.3).abs() < 1e-10);
    }
}
