//! Periodic grids, spectral fields and Fourier multipliers.
//!
//! Convention: the DFT is unitary, `f_hat[k] = N^{-1/2} sum_x f[x] e^{-i xi_k x}`,
//! so `sum |f|^2 = sum |f_hat|^2`. The continuum norm used everywhere is
//! `||f||_{L2}^2 = cell_volume * sum |f_hat|^2` with `cell_volume = (L/n)^dim`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
    length: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PeriodicGrid(dim={}, n={}, L={})", self.dim, self.n, self.length)
    }
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, o: &Self) -> bool {
        self.dim == o.dim && self.n == o.n && self.length == o.length
    }
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidParam { field: "dim", reason: format!("must be 1 or 2, got {dim}") });
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidParam { field: "n", reason: format!("must be a power of two >= 8, got {n}") });
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParam { field: "length", reason: format!("must be > 0, got {length}") });
        }
        let mut planner = FftPlanner::new();
        Ok(PeriodicGrid { dim, n, length, fft: planner.plan_fft_forward(n), ifft: planner.plan_fft_inverse(n) })
    }

    /// `[0, 2 pi)^dim` with `n` points per axis.
    pub fn standard(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, 2.0 * PI)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn cell_volume(&self) -> f64 {
        (self.length / self.n as f64).powi(self.dim as i32)
    }
    /// Smallest nonzero `|xi|`.
    pub fn fundamental(&self) -> f64 {
        2.0 * PI / self.length
    }
    /// Largest retained integer wavenumber per axis under the 2/3 rule.
    pub fn band_limit(&self) -> usize {
        self.n / 3
    }

    fn signed(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Integer wavevector of a flat index (second entry 0 in 1D).
    pub fn int_k(&self, idx: usize) -> [i64; 2] {
        if self.dim == 1 {
            [self.signed(idx), 0]
        } else {
            [self.signed(idx / self.n), self.signed(idx % self.n)]
        }
    }

    pub fn is_nyquist(&self, idx: usize) -> bool {
        let k = self.int_k(idx);
        let h = (self.n / 2) as i64;
        k[0] == -h || (self.dim == 2 && k[1] == -h)
    }

    /// Wavevector `xi = 2 pi k / L`.
    pub fn xi(&self, idx: usize) -> [f64; 2] {
        let k = self.int_k(idx);
        let f = self.fundamental();
        [k[0] as f64 * f, k[1] as f64 * f]
    }

    pub fn xi_norm(&self, idx: usize) -> f64 {
        let x = self.xi(idx);
        (x[0] * x[0] + x[1] * x[1]).sqrt()
    }

    /// Physical coordinates of a flat index.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let h = self.length / self.n as f64;
        if self.dim == 1 {
            [idx as f64 * h, 0.0]
        } else {
            [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h]
        }
    }

    fn fft_in_place(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.ifft } else { &self.fft };
        let n = self.n;
        for row in data.chunks_mut(n) {
            plan.process(row);
        }
        if self.dim == 2 {
            let mut col = vec![ZERO; n];
            for c in 0..n {
                for r in 0..n {
                    col[r] = data[r * n + c];
                }
                plan.process(&mut col);
                for r in 0..n {
                    data[r * n + c] = col[r];
                }
            }
        }
        let s = 1.0 / (self.len() as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= s);
    }
}

/// Fourier coefficients of a scalar or vector field on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: PeriodicGrid,
    comps: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(grid: &PeriodicGrid, ncomp: usize) -> Self {
        SpectralField { grid: grid.clone(), comps: vec![vec![ZERO; grid.len()]; ncomp] }
    }

    pub fn from_coeffs(grid: &PeriodicGrid, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        for c in &comps {
            if c.len() != grid.len() {
                return Err(Error::Shape { expected: grid.len(), got: c.len() });
            }
        }
        Ok(SpectralField { grid: grid.clone(), comps })
    }

    /// Forward transform of real samples, one vector per component.
    pub fn from_physical(grid: &PeriodicGrid, samples: &[Vec<f64>]) -> Result<Self> {
        let mut comps = Vec::with_capacity(samples.len());
        for s in samples {
            if s.len() != grid.len() {
                return Err(Error::Shape { expected: grid.len(), got: s.len() });
            }
            let mut buf: Vec<Complex64> = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            grid.fft_in_place(&mut buf, false);
            comps.push(buf);
        }
        Ok(SpectralField { grid: grid.clone(), comps })
    }

    /// Samples `f(x, component)` on the grid.
    pub fn from_fn(grid: &PeriodicGrid, ncomp: usize, f: impl Fn([f64; 2], usize) -> f64) -> Self {
        let samples: Vec<Vec<f64>> =
            (0..ncomp).map(|c| (0..grid.len()).map(|i| f(grid.coords(i), c)).collect()).collect();
        Self::from_physical(grid, &samples).expect("shape is the grid's")
    }

    /// Inverse transform; imaginary residue is dropped.
    pub fn to_physical(&self) -> Vec<Vec<f64>> {
        self.comps
            .iter()
            .map(|c| {
                let mut buf = c.clone();
                self.grid.fft_in_place(&mut buf, true);
                buf.iter().map(|z| z.re).collect()
            })
            .collect()
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }
    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }
    pub fn coeffs(&self) -> &[Vec<Complex64>] {
        &self.comps
    }
    pub fn coeffs_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.comps
    }
    pub fn component(&self, c: usize) -> SpectralField {
        SpectralField { grid: self.grid.clone(), comps: vec![self.comps[c].clone()] }
    }

    pub fn stack(parts: &[SpectralField]) -> Result<SpectralField> {
        let grid = parts.first().ok_or(Error::Shape { expected: 1, got: 0 })?.grid.clone();
        let mut comps = Vec::new();
        for p in parts {
            if p.grid != grid {
                return Err(Error::GridMismatch);
            }
            comps.extend(p.comps.iter().cloned());
        }
        Ok(SpectralField { grid, comps })
    }

    pub fn check_compatible(&self, o: &SpectralField) -> Result<()> {
        if self.grid != o.grid {
            return Err(Error::GridMismatch);
        }
        if self.ncomp() != o.ncomp() {
            return Err(Error::Shape { expected: self.ncomp(), got: o.ncomp() });
        }
        Ok(())
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &SpectralField, b: f64) -> Result<SpectralField> {
        self.check_compatible(other)?;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x * a + y * b).collect())
            .collect();
        Ok(SpectralField { grid: self.grid.clone(), comps })
    }

    pub fn add(&self, o: &SpectralField) -> Result<SpectralField> {
        self.lin_comb(1.0, o, 1.0)
    }
    pub fn sub(&self, o: &SpectralField) -> Result<SpectralField> {
        self.lin_comb(1.0, o, -1.0)
    }
    pub fn scale(&self, a: f64) -> SpectralField {
        let comps = self.comps.iter().map(|c| c.iter().map(|z| z * a).collect()).collect();
        SpectralField { grid: self.grid.clone(), comps }
    }

    /// Physical mean of each component.
    pub fn mean(&self) -> Vec<f64> {
        let s = (self.grid.len() as f64).sqrt();
        self.comps.iter().map(|c| c[0].re / s).collect()
    }

    pub fn remove_mean(&self) -> SpectralField {
        let mut out = self.clone();
        out.comps.iter_mut().for_each(|c| c[0] = ZERO);
        out
    }

    pub fn is_zero_mean(&self) -> bool {
        self.comps.iter().all(|c| c[0] == ZERO)
    }

    /// Sum over components of `sum_k |f_hat_k|^2`, no volume factor.
    pub fn coeff_energy(&self) -> f64 {
        self.comps.iter().flat_map(|c| c.iter()).map(|z| z.norm_sqr()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.coeff_energy()).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        let phys = self.to_physical();
        let n = self.grid.len();
        (0..n).map(|i| phys.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    /// Applies a scalar symbol to every component. The symbol sees `xi`
    /// (length `dim`), including `xi = 0`.
    pub fn apply_multiplier(&self, m: impl Fn(&[f64]) -> Complex64) -> Result<SpectralField> {
        let d = self.grid.dim;
        let mut out = self.clone();
        for idx in 0..self.grid.len() {
            let xi = self.grid.xi(idx);
            let v = m(&xi[..d]);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite(format!("multiplier at xi={:?}", &xi[..d])));
            }
            for c in out.comps.iter_mut() {
                c[idx] *= v;
            }
        }
        Ok(out)
    }

    /// Real-valued symbol shorthand.
    pub fn apply_real_multiplier(&self, m: impl Fn(&[f64]) -> f64) -> Result<SpectralField> {
        self.apply_multiplier(|xi| Complex64::new(m(xi), 0.0))
    }

    /// Matrix symbol: `m(xi)` returns `out_comps x ncomp` entries, row-major.
    pub fn apply_matrix_multiplier(
        &self,
        out_comps: usize,
        m: impl Fn(&[f64]) -> Vec<Complex64>,
    ) -> Result<SpectralField> {
        let d = self.grid.dim;
        let nin = self.ncomp();
        let mut out = SpectralField::zeros(&self.grid, out_comps);
        for idx in 0..self.grid.len() {
            let xi = self.grid.xi(idx);
            let mat = m(&xi[..d]);
            if mat.len() != out_comps * nin {
                return Err(Error::Shape { expected: out_comps * nin, got: mat.len() });
            }
            for (r, oc) in out.comps.iter_mut().enumerate() {
                let mut acc = ZERO;
                for c in 0..nin {
                    let e = mat[r * nin + c];
                    if !(e.re.is_finite() && e.im.is_finite()) {
                        return Err(Error::NonFinite(format!("matrix multiplier at xi={:?}", &xi[..d])));
                    }
                    acc += e * self.comps[c][idx];
                }
                oc[idx] = acc;
            }
        }
        Ok(out)
    }

    /// `d/dx_axis`; the Nyquist mode is dropped so real fields stay real.
    pub fn partial(&self, axis: usize) -> SpectralField {
        let mut out = self.clone();
        for idx in 0..self.grid.len() {
            let v = if self.grid.is_nyquist(idx) { ZERO } else { Complex64::new(0.0, self.grid.xi(idx)[axis]) };
            out.comps.iter_mut().for_each(|c| c[idx] *= v);
        }
        out
    }

    /// Gradient of a scalar field.
    pub fn gradient(&self) -> SpectralField {
        let parts: Vec<SpectralField> = (0..self.grid.dim).map(|a| self.component(0).partial(a)).collect();
        SpectralField::stack(&parts).expect("same grid")
    }

    pub fn divergence(&self) -> Result<SpectralField> {
        if self.ncomp() != self.grid.dim {
            return Err(Error::Shape { expected: self.grid.dim, got: self.ncomp() });
        }
        let mut out = SpectralField::zeros(&self.grid, 1);
        for a in 0..self.grid.dim {
            let d = self.component(a).partial(a);
            out = out.add(&d)?;
        }
        Ok(out)
    }

    pub fn laplacian(&self) -> SpectralField {
        self.apply_real_multiplier(|xi| -xi.iter().map(|x| x * x).sum::<f64>()).expect("finite")
    }

    /// `mu Lap u + (lambda + mu) grad div u`.
    pub fn lame(&self, mu: f64, lambda: f64) -> Result<SpectralField> {
        let gd = self.divergence()?.gradient();
        self.laplacian().lin_comb(mu, &gd, lambda + mu)
    }

    /// Nonlocal capillary operator `(phi_eps * f - f) / eps^2`.
    pub fn capillary_op(&self, eps: f64) -> Result<SpectralField> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
        }
        self.apply_real_multiplier(|xi| capillary_symbol(xi.iter().map(|x| x * x).sum(), eps))
    }

    /// `f(. - eps y) + f(. + eps y) - 2 f`.
    pub fn symmetric_difference(&self, y: &[f64], eps: f64) -> SpectralField {
        self.apply_real_multiplier(|xi| {
            let d: f64 = xi.iter().zip(y).map(|(a, b)| a * b).sum();
            2.0 * ((eps * d).cos() - 1.0)
        })
        .expect("bounded symbol")
    }

    /// `f(. + a)`.
    pub fn shift(&self, a: &[f64]) -> SpectralField {
        let mut out = self.clone();
        for idx in 0..self.grid.len() {
            let xi = self.grid.xi(idx);
            let ph: f64 = xi.iter().zip(a).map(|(x, a)| x * a).sum();
            let v = if self.grid.is_nyquist(idx) { Complex64::new(ph.cos(), 0.0) } else { Complex64::from_polar(1.0, ph) };
            out.comps.iter_mut().for_each(|c| c[idx] *= v);
        }
        out
    }

    fn assert_dim(&self, f: &str) -> Result<()> {
        if self.ncomp() != self.grid.dim {
            return Err(Error::Domain(format!("{f} needs a vector field")));
        }
        Ok(())
    }

    /// `(v, w) = (Lambda^-1 div u, Lambda^-1 curl u)`. In 2D `w` is the single
    /// component `Lambda^-1 (d1 u2 - d2 u1)`; in 1D it is identically zero.
    pub fn helmholtz(&self) -> Result<(SpectralField, SpectralField)> {
        self.assert_dim("helmholtz")?;
        let m = self.mean().iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if m > 1e-12 * (1.0 + self.linf_norm()) {
            return Err(Error::NonzeroMean(m));
        }
        let d = self.grid.dim;
        let inv = |xi: &[f64]| {
            let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r == 0.0 {
                0.0
            } else {
                1.0 / r
            }
        };
        let v = self.divergence()?.apply_real_multiplier(inv)?;
        let w = if d == 1 {
            SpectralField::zeros(&self.grid, 1)
        } else {
            let curl = self.component(1).partial(0).sub(&self.component(0).partial(1))?;
            curl.apply_real_multiplier(inv)?
        };
        Ok((v, w))
    }

    /// Inverse of [`Self::helmholtz`]: `u = -Lambda^-1 grad v + Lambda^-1 div w`.
    pub fn from_helmholtz(v: &SpectralField, w: &SpectralField) -> Result<SpectralField> {
        let grid = v.grid.clone();
        let d = grid.dim;
        let inv = |xi: &[f64]| {
            let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r == 0.0 {
                0.0
            } else {
                1.0 / r
            }
        };
        let gv = v.gradient().apply_real_multiplier(inv)?.scale(-1.0);
        if d == 1 {
            return Ok(gv);
        }
        let w0 = w.component(0);
        let dw = SpectralField::stack(&[w0.partial(1), w0.partial(0).scale(-1.0)])?.apply_real_multiplier(inv)?;
        gv.add(&dw)
    }

    /// Fraction of coefficient energy outside the 2/3-rule band.
    pub fn energy_above_band(&self) -> f64 {
        let kb = self.grid.band_limit() as i64;
        let total = self.coeff_energy();
        if total == 0.0 {
            return 0.0;
        }
        let mut out = 0.0;
        for idx in 0..self.grid.len() {
            let k = self.grid.int_k(idx);
            if k[0].abs() > kb || k[1].abs() > kb {
                out += self.comps.iter().map(|c| c[idx].norm_sqr()).sum::<f64>();
            }
        }
        out / total
    }

    /// Zeroes modes outside the 2/3-rule band.
    pub fn truncate_to_band(&self) -> SpectralField {
        let kb = self.grid.band_limit() as i64;
        let mut out = self.clone();
        for idx in 0..self.grid.len() {
            let k = self.grid.int_k(idx);
            if k[0].abs() > kb || k[1].abs() > kb {
                out.comps.iter_mut().for_each(|c| c[idx] = ZERO);
            }
        }
        out
    }

    /// Evaluates the trigonometric interpolant at arbitrary points.
    pub fn eval_at(&self, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
        let g = &self.grid;
        let n = g.n;
        let s = 1.0 / (g.len() as f64).sqrt();
        let f0 = g.fundamental();
        let mut out = vec![vec![0.0; points.len()]; self.ncomp()];
        let powers = |x: f64| -> Vec<Complex64> {
            // e^{i k f0 x} for k in FFT order, Nyquist as cos
            let base = Complex64::from_polar(1.0, f0 * x);
            let mut pos = vec![ZERO; n / 2 + 1];
            pos[0] = Complex64::new(1.0, 0.0);
            for k in 1..=n / 2 {
                pos[k] = pos[k - 1] * base;
            }
            let mut v = vec![ZERO; n];
            for i in 0..n {
                let k = g.signed(i);
                v[i] = if k == -((n / 2) as i64) {
                    Complex64::new(pos[n / 2].re, 0.0)
                } else if k >= 0 {
                    pos[k as usize]
                } else {
                    pos[(-k) as usize].conj()
                };
            }
            v
        };
        for (pi, p) in points.iter().enumerate() {
            let e0 = powers(p[0]);
            if g.dim == 1 {
                for (c, oc) in self.comps.iter().zip(out.iter_mut()) {
                    let acc: f64 = c.iter().zip(&e0).map(|(a, b)| (a * b).re).sum();
                    oc[pi] = acc * s;
                }
            } else {
                let e1 = powers(p[1]);
                for (c, oc) in self.comps.iter().zip(out.iter_mut()) {
                    let mut acc = ZERO;
                    for r in 0..n {
                        let row: Complex64 = c[r * n..(r + 1) * n].iter().zip(&e1).map(|(a, b)| a * b).sum();
                        acc += row * e0[r];
                    }
                    oc[pi] = acc.re * s;
                }
            }
        }
        out
    }

    /// Pointwise product `a * b` with `a` scalar, truncated to the 2/3 band.
    /// Fails if either input has energy above the band.
    pub fn dealiased_product(a: &SpectralField, b: &SpectralField) -> Result<SpectralField> {
        if a.grid != b.grid {
            return Err(Error::GridMismatch);
        }
        if a.ncomp() != 1 {
            return Err(Error::Shape { expected: 1, got: a.ncomp() });
        }
        for f in [a, b] {
            let e = f.energy_above_band();
            if e > 1e-20 {
                return Err(Error::Aliasing(e));
            }
        }
        Ok(Self::product_truncated(a, b))
    }

    /// Pointwise product `a * b` (`a` scalar) followed by band truncation,
    /// without the input guard.
    pub fn product_truncated(a: &SpectralField, b: &SpectralField) -> SpectralField {
        let pa = a.to_physical();
        let pb = b.to_physical();
        let prod: Vec<Vec<f64>> = pb.iter().map(|c| c.iter().zip(&pa[0]).map(|(x, y)| x * y).collect()).collect();
        SpectralField::from_physical(&a.grid, &prod).expect("same grid").truncate_to_band()
    }
}

/// `(e^{-eps^2 |xi|^2} - 1) / eps^2` as a function of `|xi|^2`.
pub fn capillary_symbol(xi2: f64, eps: f64) -> f64 {
    (-eps * eps * xi2).exp_m1() / (eps * eps)
}

/// Random real field with modes `0 < |k|_inf <= kmax`, amplitude
/// `|k|^{-decay}` and uniform random phases, deterministic in `seed`.
pub fn random_field(grid: &PeriodicGrid, ncomp: usize, kmax: usize, decay: f64, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SpectralField::zeros(grid, ncomp);
    let km = kmax as i64;
    for c in out.comps.iter_mut() {
        for (idx, z) in c.iter_mut().enumerate() {
            let k = grid.int_k(idx);
            let amp_u: f64 = rng.random::<f64>();
            let ph: f64 = rng.random::<f64>() * 2.0 * PI;
            if (k[0] == 0 && k[1] == 0) || k[0].abs() > km || k[1].abs() > km {
                continue;
            }
            let r = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
            *z = Complex64::from_polar((0.5 + amp_u) * r.powf(-decay), ph);
        }
    }
    // project onto real fields
    let phys = out.to_physical();
    SpectralField::from_physical(grid, &phys).expect("same grid")
}

/// Writes a text snapshot: a header line `dim,n,L,components`, its values,
/// then one row per grid point (row-major) with one column per component.
pub fn write_snapshot_csv(path: &Path, f: &SpectralField) -> Result<()> {
    let g = f.grid();
    let phys = f.to_physical();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "dim,n,L,components")?;
    writeln!(w, "{},{},{:e},{}", g.dim, g.n, g.length, f.ncomp())?;
    for i in 0..g.len() {
        let row: Vec<String> = phys.iter().map(|c| format!("{:e}", c[i])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot_csv(path: &Path) -> Result<SpectralField> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = r.lines();
    let bad = |m: &str| Error::Io(format!("snapshot {}: {m}", path.display()));
    lines.next().ok_or_else(|| bad("missing header"))??;
    let hdr = lines.next().ok_or_else(|| bad("missing header values"))??;
    let h: Vec<&str> = hdr.split(',').collect();
    if h.len() != 4 {
        return Err(bad("header needs 4 values"));
    }
    let dim: usize = h[0].parse().map_err(|_| bad("dim"))?;
    let n: usize = h[1].parse().map_err(|_| bad("n"))?;
    let length: f64 = h[2].parse().map_err(|_| bad("L"))?;
    let nc: usize = h[3].parse().map_err(|_| bad("components"))?;
    let grid = PeriodicGrid::new(dim, n, length)?;
    let mut samples = vec![Vec::with_capacity(grid.len()); nc];
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != nc {
            return Err(bad("row width"));
        }
        for (c, v) in vals.iter().enumerate() {
            samples[c].push(v.parse::<f64>().map_err(|_| bad("sample"))?);
        }
    }
    SpectralField::from_physical(&grid, &samples)
}

const MAGIC: &[u8; 4] = b"KSNP";

/// Binary snapshot: magic, u32 dim, u32 n, f64 L, u32 components, then
/// little-endian f64 samples, component-major, row-major within.
pub fn write_snapshot_bin(path: &Path, f: &SpectralField) -> Result<()> {
    let g = f.grid();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(g.dim as u32).to_le_bytes())?;
    w.write_all(&(g.n as u32).to_le_bytes())?;
    w.write_all(&g.length.to_le_bytes())?;
    w.write_all(&(f.ncomp() as u32).to_le_bytes())?;
    for c in f.to_physical() {
        for v in c {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot_bin(path: &Path) -> Result<SpectralField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = || Error::Io(format!("snapshot {}: malformed", path.display()));
    if bytes.len() < 24 || &bytes[..4] != MAGIC {
        return Err(bad());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let dim = u32_at(4);
    let n = u32_at(8);
    let length = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let nc = u32_at(20);
    let grid = PeriodicGrid::new(dim, n, length)?;
    if bytes.len() != 24 + 8 * nc * grid.len() {
        return Err(bad());
    }
    let mut samples = Vec::with_capacity(nc);
    for c in 0..nc {
        let off = 24 + 8 * c * grid.len();
        samples.push(
            (0..grid.len())
                .map(|i| f64::from_le_bytes(bytes[off + 8 * i..off + 8 * i + 8].try_into().unwrap()))
                .collect(),
        );
    }
    SpectralField::from_physical(&grid, &samples)
}
