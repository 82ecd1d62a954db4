//! Field containers on the slab: scalar data on the surface `Sigma = T^2_L`
//! and on the volume `Omega = T^2_L x (-b, 0)`, with horizontal spectral
//! transforms, collocation derivatives, Sobolev norms and quadrature.

use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex;
use once_cell::sync::OnceCell;

use crate::error::{CapError, Result};
use crate::grid::Grid;

type C64 = Complex<f64>;

/// Real scalar field on the horizontal torus, with lazily cached Fourier
/// coefficients. Immutable after construction.
pub struct SurfaceField {
    pub grid: Arc<Grid>,
    values: Array2<f64>,
    spec: OnceCell<Array2<C64>>,
}

impl Clone for SurfaceField {
    fn clone(&self) -> Self {
        SurfaceField {
            grid: self.grid.clone(),
            values: self.values.clone(),
            spec: self.spec.clone(),
        }
    }
}

impl std::fmt::Debug for SurfaceField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SurfaceField({}x{})", self.grid.nx, self.grid.ny)
    }
}

impl SurfaceField {
    pub fn from_values(grid: Arc<Grid>, values: Array2<f64>) -> Self {
        assert_eq!(values.dim(), (grid.nx, grid.ny));
        SurfaceField {
            grid,
            values,
            spec: OnceCell::new(),
        }
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut v = Array2::zeros((nx, ny));
        for i in 0..nx {
            for j in 0..ny {
                v[[i, j]] = f(grid.x(i), grid.y(j));
            }
        }
        SurfaceField::from_values(grid, v)
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        SurfaceField::from_values(grid.clone(), Array2::zeros((grid.nx, grid.ny)))
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        SurfaceField::from_values(grid.clone(), Array2::from_elem((grid.nx, grid.ny), c))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Fourier coefficients `c_{mn}` with `f(x) = sum c_{mn} e^{i k.x}`.
    pub fn spectral(&self) -> &Array2<C64> {
        self.spec.get_or_init(|| {
            let mut buf: Vec<C64> = self.values.iter().map(|&v| C64::new(v, 0.0)).collect();
            fft2_forward(&self.grid, &mut buf);
            let norm = 1.0 / (self.grid.nx * self.grid.ny) as f64;
            Array2::from_shape_vec(
                (self.grid.nx, self.grid.ny),
                buf.into_iter().map(|c| c * norm).collect(),
            )
            .unwrap()
        })
    }

    /// Synthesize a real field from Fourier coefficients (imaginary residue
    /// from non-Hermitian input is discarded).
    pub fn from_spectral(grid: Arc<Grid>, coeffs: &Array2<C64>) -> Self {
        let mut buf: Vec<C64> = coeffs.iter().cloned().collect();
        fft2_inverse(&grid, &mut buf);
        let values = Array2::from_shape_vec(
            (grid.nx, grid.ny),
            buf.into_iter().map(|c| c.re).collect(),
        )
        .unwrap();
        let mut sf = SurfaceField::from_values(grid, values);
        // The coefficients are authoritative; cache them.
        sf.spec = OnceCell::with_value(coeffs.clone());
        sf
    }

    /// Apply a spectral multiplier `g(kx, ky)`.
    pub fn multiplier(&self, g: impl Fn(f64, f64) -> C64) -> SurfaceField {
        let spec = self.spectral();
        let mut out = spec.clone();
        for m in 0..self.grid.nx {
            for n in 0..self.grid.ny {
                out[[m, n]] *= g(self.grid.kx[m], self.grid.ky[n]);
            }
        }
        SurfaceField::from_spectral(self.grid.clone(), &out)
    }

    pub fn real_multiplier(&self, g: impl Fn(f64, f64) -> f64) -> SurfaceField {
        self.multiplier(|kx, ky| C64::new(g(kx, ky), 0.0))
    }

    /// Horizontal derivative, `dir` in {0, 1}; Nyquist modes are zeroed.
    pub fn deriv(&self, dir: usize) -> SurfaceField {
        let (nyq_x, nyq_y) = self.grid_nyquist();
        self.multiplier(|kx, ky| {
            let k = if dir == 0 { kx } else { ky };
            if (dir == 0 && kx.abs() >= nyq_x) || (dir == 1 && ky.abs() >= nyq_y) {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, k)
            }
        })
    }

    fn grid_nyquist(&self) -> (f64, f64) {
        let kx_nyq = std::f64::consts::PI * self.grid.nx as f64 / self.grid.l;
        let ky_nyq = std::f64::consts::PI * self.grid.ny as f64 / self.grid.l;
        (kx_nyq - 1e-9, ky_nyq - 1e-9)
    }

    pub fn dx(&self) -> SurfaceField {
        self.deriv(0)
    }

    pub fn dy(&self) -> SurfaceField {
        self.deriv(1)
    }

    pub fn laplacian(&self) -> SurfaceField {
        self.real_multiplier(|kx, ky| -(kx * kx + ky * ky))
    }

    /// Sobolev norm `(sum_k (1+|k|^2)^s |c_k|^2 L^2)^(1/2)`; equals the grid
    /// L2 norm at `s = 0` by Parseval.
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        if !(-2.0..=8.0).contains(&s) {
            return Err(CapError::InvalidParameter(format!(
                "surface Sobolev index s = {s} outside [-2, 8]"
            )));
        }
        Ok(self.sobolev_norm_unchecked(s))
    }

    pub(crate) fn sobolev_norm_unchecked(&self, s: f64) -> f64 {
        let spec = self.spectral();
        let area = self.grid.l * self.grid.l;
        let mut acc = 0.0;
        for m in 0..self.grid.nx {
            for n in 0..self.grid.ny {
                let k2 = self.grid.kx[m].powi(2) + self.grid.ky[n].powi(2);
                acc += (1.0 + k2).powf(s) * spec[[m, n]].norm_sqr();
            }
        }
        (area * acc).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm_unchecked(0.0)
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    pub fn w1inf_norm(&self) -> f64 {
        self.linf_norm() + self.dx().linf_norm().max(self.dy().linf_norm())
    }

    /// L2(Sigma) inner product by trapezoid quadrature.
    pub fn inner(&self, other: &SurfaceField) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            acc += a * b;
        }
        acc * self.grid.cell_area()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / (self.grid.nx * self.grid.ny) as f64
    }

    /// 2/3-rule dealiasing.
    pub fn dealias(&self) -> SurfaceField {
        let nx = self.grid.nx as i64;
        let ny = self.grid.ny as i64;
        let kx_cut = 2.0 * std::f64::consts::PI * (nx / 3) as f64 / self.grid.l + 1e-9;
        let ky_cut = 2.0 * std::f64::consts::PI * (ny / 3) as f64 / self.grid.l + 1e-9;
        self.multiplier(|kx, ky| {
            if kx.abs() > kx_cut || ky.abs() > ky_cut {
                C64::new(0.0, 0.0)
            } else {
                C64::new(1.0, 0.0)
            }
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SurfaceField {
        SurfaceField::from_values(self.grid.clone(), self.values.mapv(|v| f(v)))
    }

    pub fn zip(&self, other: &SurfaceField, f: impl Fn(f64, f64) -> f64) -> SurfaceField {
        let mut out = self.values.clone();
        out.zip_mut_with(&other.values, |a, &b| *a = f(*a, b));
        SurfaceField::from_values(self.grid.clone(), out)
    }

    pub fn add(&self, other: &SurfaceField) -> SurfaceField {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SurfaceField) -> SurfaceField {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &SurfaceField) -> SurfaceField {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> SurfaceField {
        self.map(|v| c * v)
    }

    /// Extend into the volume, constant in the vertical direction.
    pub fn extend(&self) -> VolumeField {
        let (nx, ny, nz) = (self.grid.nx, self.grid.ny, self.grid.nz);
        let mut v = Array3::zeros((nx, ny, nz));
        for i in 0..nx {
            for j in 0..ny {
                for l in 0..nz {
                    v[[i, j, l]] = self.values[[i, j]];
                }
            }
        }
        VolumeField::from_values(self.grid.clone(), v)
    }
}

/// Real scalar field on the slab volume. Immutable after construction.
#[derive(Clone)]
pub struct VolumeField {
    pub grid: Arc<Grid>,
    values: Array3<f64>,
}

impl std::fmt::Debug for VolumeField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "VolumeField({}x{}x{})",
            self.grid.nx, self.grid.ny, self.grid.nz
        )
    }
}

impl VolumeField {
    pub fn from_values(grid: Arc<Grid>, values: Array3<f64>) -> Self {
        assert_eq!(values.dim(), (grid.nx, grid.ny, grid.nz));
        VolumeField { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
        let mut v = Array3::zeros((nx, ny, nz));
        for i in 0..nx {
            for j in 0..ny {
                for l in 0..nz {
                    v[[i, j, l]] = f(grid.x(i), grid.y(j), grid.z[l]);
                }
            }
        }
        VolumeField::from_values(grid, v)
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        VolumeField::from_values(grid.clone(), Array3::zeros((grid.nx, grid.ny, grid.nz)))
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        VolumeField::from_values(
            grid.clone(),
            Array3::from_elem((grid.nx, grid.ny, grid.nz), c),
        )
    }

    /// Field depending on the vertical coordinate only.
    pub fn from_profile(grid: Arc<Grid>, profile: &[f64]) -> Self {
        assert_eq!(profile.len(), grid.nz);
        let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
        let mut v = Array3::zeros((nx, ny, nz));
        for i in 0..nx {
            for j in 0..ny {
                for l in 0..nz {
                    v[[i, j, l]] = profile[l];
                }
            }
        }
        VolumeField::from_values(grid, v)
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.values[[i, j, l]]
    }

    /// Trace on the free surface `z = 0` (the top collocation slice).
    pub fn surface_trace(&self) -> SurfaceField {
        let l = self.grid.nz - 1;
        self.slice(l)
    }

    /// Trace on the bottom `z = -b`.
    pub fn bottom_trace(&self) -> SurfaceField {
        self.slice(0)
    }

    pub fn slice(&self, l: usize) -> SurfaceField {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut v = Array2::zeros((nx, ny));
        for i in 0..nx {
            for j in 0..ny {
                v[[i, j]] = self.values[[i, j, l]];
            }
        }
        SurfaceField::from_values(self.grid.clone(), v)
    }

    pub fn with_slice(&self, l: usize, sf: &SurfaceField) -> VolumeField {
        let mut v = self.values.clone();
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                v[[i, j, l]] = sf.values()[[i, j]];
            }
        }
        VolumeField::from_values(self.grid.clone(), v)
    }

    /// Horizontal derivative slice-by-slice (spectral).
    pub fn deriv_h(&self, dir: usize) -> VolumeField {
        self.map_slices(|sf| sf.deriv(dir))
    }

    pub fn dx(&self) -> VolumeField {
        self.deriv_h(0)
    }

    pub fn dy(&self) -> VolumeField {
        self.deriv_h(1)
    }

    /// Vertical collocation derivative of the given order (1..=4).
    pub fn dz(&self, order: usize) -> VolumeField {
        assert!(
            (1..=4).contains(&order),
            "vertical derivative order must be in 1..=4"
        );
        let d = &self.grid.dz[order - 1];
        let (nx, ny, nz) = (self.grid.nx, self.grid.ny, self.grid.nz);
        let mut out = Array3::zeros((nx, ny, nz));
        for i in 0..nx {
            for j in 0..ny {
                for l in 0..nz {
                    let mut acc = 0.0;
                    for m in 0..nz {
                        acc += d[[l, m]] * self.values[[i, j, m]];
                    }
                    out[[i, j, l]] = acc;
                }
            }
        }
        VolumeField::from_values(self.grid.clone(), out)
    }

    /// Apply a surface operation to every horizontal slice.
    pub fn map_slices(&self, f: impl Fn(&SurfaceField) -> SurfaceField) -> VolumeField {
        let mut out = self.values.clone();
        for l in 0..self.grid.nz {
            let sf = self.slice(l);
            let res = f(&sf);
            for i in 0..self.grid.nx {
                for j in 0..self.grid.ny {
                    out[[i, j, l]] = res.values()[[i, j]];
                }
            }
        }
        VolumeField::from_values(self.grid.clone(), out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> VolumeField {
        VolumeField::from_values(self.grid.clone(), self.values.mapv(|v| f(v)))
    }

    pub fn zip(&self, other: &VolumeField, f: impl Fn(f64, f64) -> f64) -> VolumeField {
        let mut out = self.values.clone();
        out.zip_mut_with(&other.values, |a, &b| *a = f(*a, b));
        VolumeField::from_values(self.grid.clone(), out)
    }

    pub fn add(&self, other: &VolumeField) -> VolumeField {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &VolumeField) -> VolumeField {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &VolumeField) -> VolumeField {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> VolumeField {
        self.map(|v| c * v)
    }

    pub fn recip(&self) -> VolumeField {
        self.map(|v| 1.0 / v)
    }

    pub fn dealias(&self) -> VolumeField {
        self.map_slices(|sf| sf.dealias())
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, &v| a.min(v))
    }

    /// `int_Omega f w dx` with trapezoid (horizontal) x Clenshaw-Curtis
    /// (vertical) quadrature; `w` is an optional pointwise weight.
    pub fn integral_weighted(&self, w: Option<&VolumeField>) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                for l in 0..self.grid.nz {
                    let wv = w.map_or(1.0, |w| w.values[[i, j, l]]);
                    acc += self.values[[i, j, l]] * wv * self.grid.zw[l];
                }
            }
        }
        acc * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.mul(self).integral_weighted(None).max(0.0).sqrt()
    }

    pub fn inner(&self, other: &VolumeField, w: Option<&VolumeField>) -> f64 {
        self.mul(other).integral_weighted(w)
    }

    /// Integer-order interior Sobolev norm: root sum of squares of all mixed
    /// derivatives up to total order `s` (vertical factors capped at four per
    /// application, composed beyond that).
    pub fn sobolev_norm_int(&self, s: usize) -> f64 {
        let mut acc = 0.0;
        // Cache pure vertical derivative chains of self.
        let mut z_chain: Vec<VolumeField> = vec![self.clone()];
        for zord in 1..=s {
            let prev = &z_chain[zord - 1];
            let next = if zord <= 4 { self.dz_upto(zord) } else { prev.dz(1) };
            z_chain.push(next);
        }
        for total in 0..=s {
            for a in 0..=total {
                for b in 0..=(total - a) {
                    let c = total - a - b;
                    let mut f = z_chain[c].clone();
                    for _ in 0..a {
                        f = f.dx();
                    }
                    for _ in 0..b {
                        f = f.dy();
                    }
                    let n = f.l2_norm();
                    acc += n * n;
                }
            }
        }
        acc.sqrt()
    }

    fn dz_upto(&self, order: usize) -> VolumeField {
        self.dz(order.min(4))
    }
}

fn fft2_forward(grid: &Grid, buf: &mut [C64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    for i in 0..nx {
        grid.fft_y.process(&mut buf[i * ny..(i + 1) * ny]);
    }
    let mut col = vec![C64::new(0.0, 0.0); nx];
    for j in 0..ny {
        for i in 0..nx {
            col[i] = buf[i * ny + j];
        }
        grid.fft_x.process(&mut col);
        for i in 0..nx {
            buf[i * ny + j] = col[i];
        }
    }
}

fn fft2_inverse(grid: &Grid, buf: &mut [C64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    for i in 0..nx {
        grid.ifft_y.process(&mut buf[i * ny..(i + 1) * ny]);
    }
    let mut col = vec![C64::new(0.0, 0.0); nx];
    for j in 0..ny {
        for i in 0..nx {
            col[i] = buf[i * ny + j];
        }
        grid.ifft_x.process(&mut col);
        for i in 0..nx {
            buf[i * ny + j] = col[i];
        }
    }
}
