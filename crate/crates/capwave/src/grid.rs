//! Slab discretization: uniform Fourier grid on the horizontal torus
//! `T^2_L` and Chebyshev-Gauss-Lobatto collocation on `[-b, 0]`, plus the
//! fixed vertical profiles `chi` and `omega`.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::{Fft, FftPlanner};

use crate::error::{CapError, Result};

/// Immutable slab discretization shared by all fields.
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Horizontal period (same in both directions).
    pub l: f64,
    /// Slab depth; the domain is `(-b, 0)`.
    pub b: f64,
    /// Signed wavenumbers `2 pi m / L` in FFT ordering.
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    /// Vertical collocation nodes, ascending, `z[0] = -b`, `z[nz-1] = 0`.
    pub z: Vec<f64>,
    /// Clenshaw-Curtis quadrature weights on `z` (integrate over `(-b, 0)`).
    pub zw: Vec<f64>,
    /// Vertical differentiation matrices, orders 1..=4 (`dz[0]` is d/dz).
    pub dz: Vec<Array2<f64>>,
    pub(crate) fft_x: Arc<dyn Fft<f64>>,
    pub(crate) ifft_x: Arc<dyn Fft<f64>>,
    pub(crate) fft_y: Arc<dyn Fft<f64>>,
    pub(crate) ifft_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Grid({}x{}x{}, L={}, b={})",
            self.nx, self.ny, self.nz, self.l, self.b
        )
    }
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize, l: f64, b: f64) -> Result<Arc<Grid>> {
        if nx < 8 || ny < 8 {
            return Err(CapError::InvalidGrid(format!(
                "horizontal mode counts must be >= 8, got {nx}x{ny}"
            )));
        }
        if nx % 2 != 0 || ny % 2 != 0 {
            return Err(CapError::InvalidGrid(format!(
                "horizontal mode counts must be even, got {nx}x{ny}"
            )));
        }
        if nz < 9 {
            return Err(CapError::InvalidGrid(format!(
                "vertical node count must be >= 9, got {nz}"
            )));
        }
        if !(l > 0.0) || !(b > 0.0) {
            return Err(CapError::InvalidGrid(format!(
                "period and depth must be positive, got L={l}, b={b}"
            )));
        }

        let wavenumbers = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|m| {
                    let signed = if m <= n / 2 - 1 {
                        m as i64
                    } else {
                        m as i64 - n as i64
                    };
                    2.0 * std::f64::consts::PI * signed as f64 / l
                })
                .collect()
        };

        // CGL nodes on [-1,1] mapped to [-b, 0], stored ascending so that the
        // endpoints are exact.
        let mut z = vec![0.0; nz];
        let m = (nz - 1) as f64;
        for (j, zj) in z.iter_mut().enumerate() {
            let xi = (std::f64::consts::PI * (nz - 1 - j) as f64 / m).cos();
            *zj = (xi - 1.0) * b / 2.0;
        }
        z[0] = -b;
        z[nz - 1] = 0.0;

        let d1 = cheb_diff_matrix(&z);
        let mut dz = vec![d1.clone()];
        for _ in 1..4 {
            let next = dz.last().unwrap().dot(&d1);
            dz.push(next);
        }

        let zw = clenshaw_curtis_weights(nz, b);

        let mut planner = FftPlanner::<f64>::new();
        let fft_x = planner.plan_fft_forward(nx);
        let ifft_x = planner.plan_fft_inverse(nx);
        let fft_y = planner.plan_fft_forward(ny);
        let ifft_y = planner.plan_fft_inverse(ny);

        Ok(Arc::new(Grid {
            nx,
            ny,
            nz,
            l,
            b,
            kx: wavenumbers(nx),
            ky: wavenumbers(ny),
            z,
            zw,
            dz,
            fft_x,
            ifft_x,
            fft_y,
            ifft_y,
        }))
    }

    pub fn x(&self, i: usize) -> f64 {
        self.l * i as f64 / self.nx as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.l * j as f64 / self.ny as f64
    }

    /// Horizontal cell area for trapezoid quadrature (exact for trig
    /// polynomials on the torus).
    pub fn cell_area(&self) -> f64 {
        (self.l / self.nx as f64) * (self.l / self.ny as f64)
    }

    /// Magnitude of the wavevector at FFT index `(m, n)`.
    pub fn k_abs(&self, m: usize, n: usize) -> f64 {
        self.kx[m].hypot(self.ky[n])
    }

    /// Smallest horizontal grid spacing.
    pub fn min_dx(&self) -> f64 {
        (self.l / self.nx as f64).min(self.l / self.ny as f64)
    }
}

/// Barycentric differentiation matrix for the CGL nodes (any strictly
/// monotone node vector with Chebyshev barycentric weights).
fn cheb_diff_matrix(z: &[f64]) -> Array2<f64> {
    let n = z.len();
    // Barycentric weights for CGL nodes: alternating signs, halved ends.
    // Node j here corresponds to xi_{n-1-j}, which only flips the global
    // sign pattern and cancels in the ratios.
    let mut w = vec![0.0; n];
    for (j, wj) in w.iter_mut().enumerate() {
        *wj = if j % 2 == 0 { 1.0 } else { -1.0 };
    }
    w[0] *= 0.5;
    w[n - 1] *= 0.5;

    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let v = (w[j] / w[i]) / (z[i] - z[j]);
                d[[i, j]] = v;
                row_sum += v;
            }
        }
        d[[i, i]] = -row_sum;
    }
    d
}

/// Clenshaw-Curtis weights on the CGL nodes mapped to an interval of
/// length `b` (ascending node order).
fn clenshaw_curtis_weights(nz: usize, b: f64) -> Vec<f64> {
    let n = nz - 1;
    let mut w = vec![0.0; nz];
    // Standard CC weights on [-1, 1] for nodes cos(j pi / n), j = 0..n.
    for j in 0..=n {
        let mut s = 1.0;
        let half = n / 2;
        for k in 1..=half {
            let factor = if 2 * k == n { 1.0 } else { 2.0 };
            s -= factor * (2.0 * k as f64 * j as f64 * std::f64::consts::PI / n as f64).cos()
                / ((4 * k * k - 1) as f64);
        }
        let cj = if j == 0 || j == n { 1.0 } else { 2.0 };
        w[j] = s * cj / n as f64;
    }
    // Map [-1,1] -> [-b,0]: scale by b/2; node order reversal is symmetric.
    for wj in w.iter_mut() {
        *wj *= b / 2.0;
    }
    w
}

/// Vertical cutoff `chi` (with derivatives up to order five) and the
/// tangential-derivative weight `omega`.
#[derive(Debug, Clone)]
pub struct Profiles {
    /// `chi` sampled at the grid's z nodes.
    pub chi: Vec<f64>,
    /// Derivatives `chi^(1..=5)` at the z nodes.
    pub chi_deriv: Vec<Vec<f64>>,
    /// `omega` sampled at the z nodes.
    pub omega: Vec<f64>,
    /// `omega'` at the z nodes.
    pub omega_deriv: Vec<f64>,
    /// Support parameter: `chi = 1` on `(-delta0, 0]`, `chi = 0` below
    /// `-b + delta0`.
    pub delta0: f64,
}

impl Profiles {
    /// Build profiles for a surface bound `psi_inf` (the cutoff slope must
    /// satisfy `|chi'| <= 1/(psi_inf + 1)`); the transition window is widened
    /// automatically when the requested `delta0` is too aggressive.
    pub fn new(grid: &Grid, delta0: f64, psi_inf: f64) -> Result<Profiles> {
        let b = grid.b;
        if !(delta0 > 0.0) || 2.0 * delta0 >= b {
            return Err(CapError::InvalidParameter(format!(
                "delta0 = {delta0} must lie in (0, b/2)"
            )));
        }
        // Peak slope of the bump smoothstep is 2; the transition width
        // b - 2*delta0 must absorb it.
        let needed = 2.0 * (psi_inf + 1.0);
        let mut d0 = delta0;
        if b - 2.0 * d0 < needed {
            d0 = (b - needed) / 2.0;
            if d0 <= 0.0 {
                return Err(CapError::InvalidParameter(format!(
                    "depth b = {b} too small for |chi'| <= 1/({psi_inf}+1)"
                )));
            }
        }
        let width = b - 2.0 * d0;

        let nz = grid.nz;
        let mut chi = vec![0.0; nz];
        let mut chi_deriv = vec![vec![0.0; nz]; 5];
        for (j, &zj) in grid.z.iter().enumerate() {
            let t = (zj + b - d0) / width;
            let s = smoothstep_jet(t, 1.0 / width);
            chi[j] = s[0];
            let mut fact = 1.0;
            for (ord, row) in chi_deriv.iter_mut().enumerate() {
                fact *= (ord + 1) as f64;
                row[j] = s[ord + 1] * fact;
            }
        }

        let mut omega = vec![0.0; nz];
        let mut omega_deriv = vec![0.0; nz];
        for (j, &zj) in grid.z.iter().enumerate() {
            omega[j] = -zj * (zj + b) / b;
            omega_deriv[j] = -(2.0 * zj + b) / b;
        }

        Ok(Profiles {
            chi,
            chi_deriv,
            omega,
            omega_deriv,
            delta0: d0,
        })
    }
}

/// Degree-5 Taylor coefficients of the C-infinity smoothstep
/// `S(t) = sig(t) / (sig(t) + sig(1-t))`, `sig(t) = exp(-1/t)` for `t > 0`,
/// at the point `t` with inner derivative `dt` (chain-rule input slope).
/// Entry k is the k-th Taylor coefficient (derivative / k!).
fn smoothstep_jet(t: f64, dt: f64) -> [f64; 6] {
    if t <= 0.0 {
        return [0.0; 6];
    }
    if t >= 1.0 {
        let mut out = [0.0; 6];
        out[0] = 1.0;
        return out;
    }
    let tj = {
        let mut a = [0.0; 6];
        a[0] = t;
        a[1] = dt;
        a
    };
    let one_minus = {
        let mut a = [0.0; 6];
        a[0] = 1.0 - t;
        a[1] = -dt;
        a
    };
    let num = jet_exp(&jet_neg(&jet_recip(&tj)));
    let den_b = jet_exp(&jet_neg(&jet_recip(&one_minus)));
    let den = jet_add(&num, &den_b);
    jet_mul(&num, &jet_recip(&den))
}

fn jet_add(a: &[f64; 6], b: &[f64; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for k in 0..6 {
        out[k] = a[k] + b[k];
    }
    out
}

fn jet_neg(a: &[f64; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for k in 0..6 {
        out[k] = -a[k];
    }
    out
}

fn jet_mul(a: &[f64; 6], b: &[f64; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for k in 0..6 {
        for j in 0..=k {
            out[k] += a[j] * b[k - j];
        }
    }
    out
}

fn jet_recip(a: &[f64; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    out[0] = 1.0 / a[0];
    for k in 1..6 {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += a[j] * out[k - j];
        }
        out[k] = -acc * out[0];
    }
    out
}

fn jet_exp(a: &[f64; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    out[0] = a[0].exp();
    for k in 1..6 {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += j as f64 * a[j] * out[k - j];
        }
        out[k] = acc / k as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_and_wavenumbers() {
        let g = Grid::new(8, 8, 9, 2.0 * std::f64::consts::PI, 12.0).unwrap();
        assert_eq!(g.z[0], -12.0);
        assert_eq!(g.z[8], 0.0);
        // k in {-4..3} for nx = 8, L = 2 pi.
        let mut ks: Vec<i64> = g.kx.iter().map(|k| k.round() as i64).collect();
        ks.sort_unstable();
        assert_eq!(ks, vec![-4, -3, -2, -1, 0, 1, 2, 3]);
    }

    #[test]
    fn wavenumber_scaling() {
        let g = Grid::new(16, 16, 17, 1.0, 12.0).unwrap();
        let kmax = g.kx.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!((kmax - 2.0 * std::f64::consts::PI * 8.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(7, 8, 9, 1.0, 12.0).is_err());
        assert!(Grid::new(8, 8, 5, 1.0, 12.0).is_err());
        assert!(Grid::new(4, 8, 9, 1.0, 12.0).is_err());
    }

    #[test]
    fn diff_matrix_exact_on_polynomials() {
        let g = Grid::new(8, 8, 9, 1.0, 12.0).unwrap();
        let f: Vec<f64> = g.z.iter().map(|z| z * z).collect();
        for (j, _) in g.z.iter().enumerate() {
            let mut acc = 0.0;
            for (m, fm) in f.iter().enumerate() {
                acc += g.dz[0][[j, m]] * fm;
            }
            assert!((acc - 2.0 * g.z[j]).abs() < 1e-9, "d/dz z^2 at node {j}");
        }
    }

    #[test]
    fn clenshaw_curtis_integrates_polynomials() {
        let g = Grid::new(8, 8, 17, 1.0, 2.0).unwrap();
        // integral of z^4 over (-2, 0) = 32/5
        let acc: f64 = g
            .z
            .iter()
            .zip(&g.zw)
            .map(|(z, w)| z.powi(4) * w)
            .sum();
        assert!((acc - 32.0 / 5.0).abs() < 1e-10);
    }

    #[test]
    fn chi_profile_invariants() {
        let g = Grid::new(8, 8, 33, 1.0, 12.0).unwrap();
        let p = Profiles::new(&g, 3.0, 1.0).unwrap();
        for (j, &zj) in g.z.iter().enumerate() {
            if zj > -p.delta0 {
                assert!((p.chi[j] - 1.0).abs() < 1e-14);
            }
            if zj <= -g.b + p.delta0 {
                assert!(p.chi[j].abs() < 1e-14);
            }
            assert!(p.chi_deriv[0][j].abs() <= 0.5 + 1e-12);
            assert!(p.omega[j] >= -1e-15);
        }
        // omega vanishes at both faces and tracks |z| near the surface.
        assert!(p.omega[0].abs() < 1e-14);
        assert!(p.omega[g.nz - 1].abs() < 1e-14);
        for (j, &zj) in g.z.iter().enumerate() {
            if zj >= -2.0 && zj < -1e-9 {
                let ratio = p.omega[j] / zj.abs();
                assert!(ratio >= 0.5 && ratio <= 2.0, "omega ratio at z = {zj}");
            }
        }
    }
}
