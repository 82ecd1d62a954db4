//! Graph-coordinate calculus on the slab: the diffeomorphism built from the
//! interface height, covariant derivatives, material derivatives, normal
//! vectors, mean curvature, good unknowns with their commutators, and exact
//! discrete checkers for the transport and integration-by-parts identities.

use std::sync::Arc;

use crate::error::{CapError, Result};
use crate::field::{SurfaceField, VolumeField};
use crate::grid::{Grid, Profiles};
use crate::smoothing::mollify_squared;

/// The graph frame `phi = x3 + chi(x3) psi` together with its smoothed
/// counterpart `phi~ = x3 + chi(x3) psi~`, `psi~ = L_k^2 psi`.
///
/// All derived coefficient fields are computed analytically from `chi` and
/// spectral derivatives of the surface, so the frame carries no collocation
/// error of its own.
#[derive(Clone)]
pub struct GeometryFrame {
    pub grid: Arc<Grid>,
    pub profiles: Profiles,
    pub kappa: f64,
    pub psi: SurfaceField,
    pub psi_tilde: SurfaceField,
    pub phi: VolumeField,
    pub phi_tilde: VolumeField,
    /// `d3 phi~ = 1 + chi'(x3) psi~` (must stay positive).
    pub d3_phi_tilde: VolumeField,
    pub d3_phi: VolumeField,
    pub d1_phi_tilde: VolumeField,
    pub d2_phi_tilde: VolumeField,
    pub d1_phi: VolumeField,
    pub d2_phi: VolumeField,
    /// Interface normal `N = (-d1 psi, -d2 psi, 1)`; first two components.
    pub n1: SurfaceField,
    pub n2: SurfaceField,
    /// Smoothed interface normal components.
    pub nt1: SurfaceField,
    pub nt2: SurfaceField,
}

impl GeometryFrame {
    /// Build the frame; fails with `DiffeomorphismViolation` when the
    /// smoothed map degenerates (`d3 phi~ <= 0` somewhere).
    pub fn build(psi: &SurfaceField, kappa: f64, profiles: &Profiles) -> Result<GeometryFrame> {
        let grid = psi.grid.clone();
        let psi_tilde = mollify_squared(psi, kappa)?;

        let chi_vol = |s: &SurfaceField, chi: &[f64]| -> VolumeField {
            let mut v = ndarray::Array3::zeros((grid.nx, grid.ny, grid.nz));
            for i in 0..grid.nx {
                for j in 0..grid.ny {
                    for l in 0..grid.nz {
                        v[[i, j, l]] = chi[l] * s.values()[[i, j]];
                    }
                }
            }
            VolumeField::from_values(grid.clone(), v)
        };

        let z_vol = VolumeField::from_fn(grid.clone(), |_, _, z| z);
        let phi = z_vol.add(&chi_vol(psi, &profiles.chi));
        let phi_tilde = z_vol.add(&chi_vol(&psi_tilde, &profiles.chi));

        let one = VolumeField::constant(grid.clone(), 1.0);
        let d3_phi = one.add(&chi_vol(psi, &profiles.chi_deriv[0]));
        let d3_phi_tilde = one.add(&chi_vol(&psi_tilde, &profiles.chi_deriv[0]));

        let min = d3_phi_tilde.min();
        if min <= 0.0 {
            return Err(CapError::DiffeomorphismViolation { min });
        }

        let d1_phi = chi_vol(&psi.dx(), &profiles.chi);
        let d2_phi = chi_vol(&psi.dy(), &profiles.chi);
        let d1_phi_tilde = chi_vol(&psi_tilde.dx(), &profiles.chi);
        let d2_phi_tilde = chi_vol(&psi_tilde.dy(), &profiles.chi);

        Ok(GeometryFrame {
            grid,
            profiles: profiles.clone(),
            kappa,
            n1: psi.dx().scale(-1.0),
            n2: psi.dy().scale(-1.0),
            nt1: psi_tilde.dx().scale(-1.0),
            nt2: psi_tilde.dy().scale(-1.0),
            psi: psi.clone(),
            psi_tilde,
            phi,
            phi_tilde,
            d3_phi_tilde,
            d3_phi,
            d1_phi_tilde,
            d2_phi_tilde,
            d1_phi,
            d2_phi,
        })
    }

    /// `v . NN~ = -d1 phi~ v1 - d2 phi~ v2 + v3` in the volume.
    pub fn dot_nn_tilde(&self, v: &[VolumeField; 3]) -> VolumeField {
        v[2].sub(&self.d1_phi_tilde.mul(&v[0]))
            .sub(&self.d2_phi_tilde.mul(&v[1]))
    }

    /// `v . N~` on the surface (kinematic boundary combination).
    pub fn dot_n_tilde_surface(&self, v: &[VolumeField; 3]) -> SurfaceField {
        let v1 = v[0].surface_trace();
        let v2 = v[1].surface_trace();
        let v3 = v[2].surface_trace();
        v3.add(&self.nt1.mul(&v1)).add(&self.nt2.mul(&v2))
    }

    /// Volume extension of a surface time derivative of the raw height:
    /// `dt phi = chi(x3) dt psi`.
    pub fn chi_extend(&self, s: &SurfaceField) -> VolumeField {
        let grid = &self.grid;
        let mut v = ndarray::Array3::zeros((grid.nx, grid.ny, grid.nz));
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                for l in 0..grid.nz {
                    v[[i, j, l]] = self.profiles.chi[l] * s.values()[[i, j]];
                }
            }
        }
        VolumeField::from_values(grid.clone(), v)
    }

    pub fn omega_field(&self) -> VolumeField {
        VolumeField::from_profile(self.grid.clone(), &self.profiles.omega)
    }
}

/// Covariant gradient with respect to the smoothed frame:
/// horizontal components `d_a f - (d_a phi~ / d3 phi~) d3 f`, vertical
/// component `(d3 phi~)^{-1} d3 f`.
pub fn covariant_grad(f: &VolumeField, frame: &GeometryFrame) -> [VolumeField; 3] {
    let fz = f.dz(1);
    let pinv = frame.d3_phi_tilde.recip();
    let gx = f.dx().sub(&frame.d1_phi_tilde.mul(&pinv).mul(&fz));
    let gy = f.dy().sub(&frame.d2_phi_tilde.mul(&pinv).mul(&fz));
    let gz = pinv.mul(&fz);
    [gx, gy, gz]
}

/// Covariant divergence `sum_i d_i^{phi~} v_i`.
pub fn covariant_div(v: &[VolumeField; 3], frame: &GeometryFrame) -> VolumeField {
    let gx = covariant_grad(&v[0], frame);
    let gy = covariant_grad(&v[1], frame);
    let gz = covariant_grad(&v[2], frame);
    gx[0].add(&gy[1]).add(&gz[2])
}

/// Covariant curl `nabla^{phi~} x v`.
pub fn covariant_curl(v: &[VolumeField; 3], frame: &GeometryFrame) -> [VolumeField; 3] {
    let g0 = covariant_grad(&v[0], frame);
    let g1 = covariant_grad(&v[1], frame);
    let g2 = covariant_grad(&v[2], frame);
    [g2[1].sub(&g1[2]), g0[2].sub(&g2[0]), g1[0].sub(&g0[1])]
}

/// Material derivative in graph coordinates:
/// `D_t f = dt_f + vbar . grad_h f + w3 d3 f` with
/// `w3 = (v . NN~ - dt phi) / d3 phi~` and `dt phi = chi dt psi` built from
/// the raw (unsmoothed) height derivative.
pub fn material_derivative(
    dt_f: &VolumeField,
    f: &VolumeField,
    v: &[VolumeField; 3],
    frame: &GeometryFrame,
    dt_psi: &SurfaceField,
) -> VolumeField {
    let dt_phi = frame.chi_extend(dt_psi);
    let w3 = frame
        .dot_nn_tilde(v)
        .sub(&dt_phi)
        .mul(&frame.d3_phi_tilde.recip());
    dt_f.add(&v[0].mul(&f.dx()))
        .add(&v[1].mul(&f.dy()))
        .add(&w3.mul(&f.dz(1)))
}

/// Mean curvature `H(psi) = -div( grad psi / sqrt(1 + |grad psi|^2) )`,
/// evaluated spectrally with pointwise nonlinearity.
pub fn mean_curvature(psi: &SurfaceField) -> SurfaceField {
    let px = psi.dx();
    let py = psi.dy();
    let w = px.zip(&py, |a, b| (1.0 + a * a + b * b).sqrt());
    let qx = px.zip(&w, |a, b| a / b);
    let qy = py.zip(&w, |a, b| a / b);
    qx.dx().add(&qy.dy()).scale(-1.0)
}

/// Directional derivative of the mean curvature at `psi` in direction `h`.
pub fn mean_curvature_linearized(psi: &SurfaceField, h: &SurfaceField) -> SurfaceField {
    let px = psi.dx();
    let py = psi.dy();
    let hx = h.dx();
    let hy = h.dy();
    let w = px.zip(&py, |a, b| (1.0 + a * a + b * b).sqrt());
    let dot = px.mul(&hx).add(&py.mul(&hy));
    let ax = hx
        .zip(&w, |a, b| a / b)
        .sub(&px.mul(&dot).zip(&w, |a, b| a / (b * b * b)));
    let ay = hy
        .zip(&w, |a, b| a / b)
        .sub(&py.mul(&dot).zip(&w, |a, b| a / (b * b * b)));
    ax.dx().add(&ay.dy()).scale(-1.0)
}

/// Pointwise minimum over the grid of the surface-tension coercivity margin
/// `|a|^2/W - (grad psi . a)^2/W^3 - |a|^2/W^3`.
pub fn st_inequality_margin(a1: &SurfaceField, a2: &SurfaceField, psi: &SurfaceField) -> f64 {
    let px = psi.dx();
    let py = psi.dy();
    let mut min = f64::INFINITY;
    for i in 0..psi.grid.nx {
        for j in 0..psi.grid.ny {
            let (gx, gy) = (px.values()[[i, j]], py.values()[[i, j]]);
            let (u, v) = (a1.values()[[i, j]], a2.values()[[i, j]]);
            let w = (1.0 + gx * gx + gy * gy).sqrt();
            let a2n = u * u + v * v;
            let dot = gx * u + gy * v;
            let margin = a2n / w - dot * dot / (w * w * w) - a2n / (w * w * w);
            min = min.min(margin);
        }
    }
    min
}

/// Tangential derivative factors: time, the two horizontal directions, and
/// the weighted vertical direction `omega(x3) d3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tangential {
    Dt,
    Dx,
    Dy,
    OmegaDz,
}

/// A field together with its time derivatives (level k holds `dt^k f`).
/// Plain fields are depth-one jets.
#[derive(Clone)]
pub struct VJet {
    pub levels: Vec<VolumeField>,
}

impl From<VolumeField> for VJet {
    fn from(f: VolumeField) -> Self {
        VJet { levels: vec![f] }
    }
}

impl VJet {
    pub fn new(levels: Vec<VolumeField>) -> Self {
        assert!(!levels.is_empty());
        VJet { levels }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn value(&self) -> &VolumeField {
        &self.levels[0]
    }

    /// Time derivative: shift jet levels (loses one level of depth).
    pub fn dt(&self) -> Result<VJet> {
        if self.levels.len() < 2 {
            return Err(CapError::UnsupportedAlpha(
                "jet too shallow for a time derivative".into(),
            ));
        }
        Ok(VJet::new(self.levels[1..].to_vec()))
    }

    pub fn apply_spatial(&self, f: impl Fn(&VolumeField) -> VolumeField) -> VJet {
        VJet::new(self.levels.iter().map(|l| f(l)).collect())
    }

    pub fn dx(&self) -> VJet {
        self.apply_spatial(|f| f.dx())
    }

    pub fn dy(&self) -> VJet {
        self.apply_spatial(|f| f.dy())
    }

    pub fn dz(&self) -> VJet {
        self.apply_spatial(|f| f.dz(1))
    }

    pub fn scale(&self, c: f64) -> VJet {
        self.apply_spatial(|f| f.scale(c))
    }

    pub fn add(&self, other: &VJet) -> VJet {
        let d = self.depth().min(other.depth());
        VJet::new(
            (0..d)
                .map(|k| self.levels[k].add(&other.levels[k]))
                .collect(),
        )
    }

    pub fn sub(&self, other: &VJet) -> VJet {
        self.add(&other.scale(-1.0))
    }

    /// Leibniz product, truncated to the common depth.
    pub fn mul(&self, other: &VJet) -> VJet {
        let d = self.depth().min(other.depth());
        let mut levels = Vec::with_capacity(d);
        for k in 0..d {
            let mut acc = VolumeField::zeros(self.levels[0].grid.clone());
            for j in 0..=k {
                let c = binomial(k, j);
                acc = acc.add(&self.levels[j].mul(&other.levels[k - j]).scale(c));
            }
            levels.push(acc);
        }
        VJet::new(levels)
    }

    /// Jet of the reciprocal `1/f` (requires nonvanishing level zero).
    pub fn recip(&self) -> VJet {
        let d = self.depth();
        let inv0 = self.levels[0].recip();
        let mut levels = vec![inv0.clone()];
        for k in 1..d {
            // r^(k) = -(1/f) sum_{j=1..k} C(k,j) f^(j) r^(k-j)
            let mut acc = VolumeField::zeros(self.levels[0].grid.clone());
            for j in 1..=k {
                let c = binomial(k, j);
                acc = acc.add(&self.levels[j].mul(&levels[k - j]).scale(c));
            }
            levels.push(acc.mul(&inv0).scale(-1.0));
        }
        VJet::new(levels)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Frame coefficient jets: the smoothed map and its partials with time
/// derivatives up to the depth of the supplied height jets.
#[derive(Clone)]
pub struct FrameJet {
    pub frame: GeometryFrame,
    pub phi_tilde: VJet,
    /// `d3 phi~` jet.
    pub p: VJet,
    pub a1: VJet,
    pub a2: VJet,
}

impl FrameJet {
    /// Build from jets of the raw height (`psi_levels[k] = dt^k psi`).
    pub fn build(
        psi_levels: &[SurfaceField],
        kappa: f64,
        profiles: &Profiles,
    ) -> Result<FrameJet> {
        let frame = GeometryFrame::build(&psi_levels[0], kappa, profiles)?;
        let mut phi_t = vec![frame.phi_tilde.clone()];
        let mut p = vec![frame.d3_phi_tilde.clone()];
        let mut a1 = vec![frame.d1_phi_tilde.clone()];
        let mut a2 = vec![frame.d2_phi_tilde.clone()];
        for lev in psi_levels.iter().skip(1) {
            let smt = mollify_squared(lev, kappa)?;
            phi_t.push(frame.chi_extend(&smt));
            p.push(chi_deriv_extend(&frame, &smt));
            a1.push(frame.chi_extend(&smt.dx()));
            a2.push(frame.chi_extend(&smt.dy()));
        }
        Ok(FrameJet {
            frame,
            phi_tilde: VJet::new(phi_t),
            p: VJet::new(p),
            a1: VJet::new(a1),
            a2: VJet::new(a2),
        })
    }

    pub fn from_frame(frame: &GeometryFrame) -> FrameJet {
        FrameJet {
            frame: frame.clone(),
            phi_tilde: frame.phi_tilde.clone().into(),
            p: frame.d3_phi_tilde.clone().into(),
            a1: frame.d1_phi_tilde.clone().into(),
            a2: frame.d2_phi_tilde.clone().into(),
        }
    }

    fn a(&self, i: usize) -> &VJet {
        match i {
            0 => &self.a1,
            1 => &self.a2,
            _ => unreachable!(),
        }
    }

    /// Covariant derivative of a jet: `d_i^{phi~}` for i in {0,1,2} mapping
    /// to (x1, x2, x3).
    pub fn cov_deriv(&self, f: &VJet, i: usize) -> VJet {
        let pinv = self.p.recip();
        match i {
            0 | 1 => {
                let dh = if i == 0 { f.dx() } else { f.dy() };
                dh.sub(&self.a(i).mul(&pinv).mul(&f.dz()))
            }
            2 => pinv.mul(&f.dz()),
            _ => unreachable!(),
        }
    }
}

fn chi_deriv_extend(frame: &GeometryFrame, s: &SurfaceField) -> VolumeField {
    let grid = &frame.grid;
    let mut v = ndarray::Array3::zeros((grid.nx, grid.ny, grid.nz));
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            for l in 0..grid.nz {
                v[[i, j, l]] = frame.profiles.chi_deriv[0][l] * s.values()[[i, j]];
            }
        }
    }
    VolumeField::from_values(grid.clone(), v)
}

/// Apply a single tangential factor to a jet.
pub fn apply_tangential(t: Tangential, f: &VJet, frame: &FrameJet) -> Result<VJet> {
    Ok(match t {
        Tangential::Dt => f.dt()?,
        Tangential::Dx => f.dx(),
        Tangential::Dy => f.dy(),
        Tangential::OmegaDz => {
            let om = VJet::from(frame.frame.omega_field());
            om.mul(&f.dz())
        }
    })
}

/// Apply a multi-index of tangential factors (leftmost acts last).
pub fn apply_alpha(alpha: &[Tangential], f: &VJet, frame: &FrameJet) -> Result<VJet> {
    let mut cur = f.clone();
    for &t in alpha.iter().rev() {
        cur = apply_tangential(t, &cur, frame)?;
    }
    Ok(cur)
}

/// Commutator `[T, d3] f` for a single factor; nonzero only for the
/// weighted vertical factor where it equals `-omega' d3 f`.
fn bracket_t_d3(t: Tangential, f: &VJet, frame: &FrameJet) -> VJet {
    match t {
        Tangential::OmegaDz => {
            let omp = VJet::from(VolumeField::from_profile(
                frame.frame.grid.clone(),
                &frame.frame.profiles.omega_deriv,
            ));
            omp.mul(&f.dz()).scale(-1.0)
        }
        _ => f.apply_spatial(|l| VolumeField::zeros(l.grid.clone())),
    }
}

/// Single-factor good-unknown commutator: the defect in
/// `T d_i^{phi~} f = d_i^{phi~}(T f - d3^{phi~} f T phi~) + c_i(f)`.
fn base_commutator(t: Tangential, f: &VJet, i: usize, frame: &FrameJet) -> Result<VJet> {
    let pinv = frame.p.recip();
    let d3cov_f = pinv.mul(&f.dz());
    let t_phi = apply_tangential(t, &frame.phi_tilde, frame)?;
    let t_p = apply_tangential(t, &frame.p, frame)?;
    let br_f = bracket_t_d3(t, f, frame);

    // Common tail: (d3^cov f) d_i^{phi~}(T phi~) + T phi~ d_i^{phi~} d3^{phi~} f
    let tail = d3cov_f
        .mul(&frame.cov_deriv(&t_phi, i))
        .add(&t_phi.mul(&frame.cov_deriv(&d3cov_f, i)));

    match i {
        0 | 1 => {
            let a = frame.a(i);
            let t_a = apply_tangential(t, a, frame)?;
            // M = T a - (a/p) T p
            let m = t_a.sub(&a.mul(&pinv).mul(&t_p));
            Ok(tail.sub(&d3cov_f.mul(&m)).sub(&a.mul(&pinv).mul(&br_f)))
        }
        2 => {
            let m = pinv.mul(&t_p);
            Ok(tail.sub(&d3cov_f.mul(&m)).add(&pinv.mul(&br_f)))
        }
        _ => unreachable!(),
    }
}

/// Alinhac good unknown `T^alpha f - d3^{phi~} f T^alpha phi~`.
pub fn good_unknown(f: &VJet, alpha: &[Tangential], frame: &FrameJet) -> Result<VJet> {
    if alpha.len() > 4 {
        return Err(CapError::UnsupportedAlpha(format!(
            "|alpha| = {} exceeds 4",
            alpha.len()
        )));
    }
    let ta_f = apply_alpha(alpha, f, frame)?;
    let ta_phi = apply_alpha(alpha, &frame.phi_tilde, frame)?;
    let d3cov_f = frame.p.recip().mul(&f.dz());
    Ok(ta_f.sub(&d3cov_f.mul(&ta_phi)))
}

/// The commutator `c_i(f)` in
/// `T^alpha d_i^{phi~} f = d_i^{phi~}(good unknown) + c_i(f)`,
/// computed by peeling factors; the discrete residual of the defining
/// identity then measures only aliasing and collocation error.
pub fn commutator(f: &VJet, alpha: &[Tangential], i: usize, frame: &FrameJet) -> Result<VJet> {
    if alpha.is_empty() || alpha.len() > 4 {
        return Err(CapError::UnsupportedAlpha(format!(
            "|alpha| = {} outside 1..=4",
            alpha.len()
        )));
    }
    if i > 2 {
        return Err(CapError::UnsupportedAlpha(format!("direction {i} > 2")));
    }
    if alpha.len() == 1 {
        return base_commutator(alpha[0], f, i, frame);
    }
    let t = alpha[0];
    let beta = &alpha[1..];
    let f_beta = good_unknown(f, beta, frame)?;
    let c_beta = commutator(f, beta, i, frame)?;
    let d3cov_f = frame.p.recip().mul(&f.dz());
    let t_of_d3cov_f = apply_tangential(t, &d3cov_f, frame)?;
    let tbeta_phi = apply_alpha(beta, &frame.phi_tilde, frame)?;
    let t_phi = apply_tangential(t, &frame.phi_tilde, frame)?;
    let d3cov_fbeta = frame.p.recip().mul(&f_beta.dz());
    // G = -T(d3^{phi~} f) T^beta phi~ - d3^{phi~}(F_beta) T phi~
    let g = t_of_d3cov_f
        .mul(&tbeta_phi)
        .scale(-1.0)
        .sub(&d3cov_fbeta.mul(&t_phi));
    let term1 = frame.cov_deriv(&g, i);
    let term2 = base_commutator(t, &f_beta, i, frame)?;
    let term3 = apply_tangential(t, &c_beta, frame)?;
    Ok(term1.add(&term2).add(&term3))
}

/// Residual of the good-unknown identity
/// `T^alpha d_i^{phi~} f - d_i^{phi~} F - c_i(f)` in the max norm of the
/// value level.
pub fn good_unknown_identity_residual(
    f: &VJet,
    alpha: &[Tangential],
    i: usize,
    frame: &FrameJet,
) -> Result<f64> {
    let lhs = apply_alpha(alpha, &frame.cov_deriv(f, i), frame)?;
    let gu = good_unknown(f, alpha, frame)?;
    let rhs = frame.cov_deriv(&gu, i).add(&commutator(f, alpha, i, frame)?);
    Ok(lhs.sub(&rhs).value().linf_norm())
}

/// Inputs for the transport-theorem residual: one time level.
pub struct TransportSnapshot {
    pub psi: SurfaceField,
    pub rho: VolumeField,
    pub f: VolumeField,
    pub v: [VolumeField; 3],
}

/// Evaluates both sides of the Reynolds transport identity
/// `d/dt int rho |f|^2 d3phi~ = 2 int rho (D_t f) f d3phi~
///  + int rho |f|^2 d3 dt(phi~ - phi)`
/// with centered time differences, returning the absolute gap.
pub fn transport_identity_residual(
    prev: &TransportSnapshot,
    mid: &TransportSnapshot,
    next: &TransportSnapshot,
    dt: f64,
    kappa: f64,
    profiles: &Profiles,
) -> Result<f64> {
    let fr_prev = GeometryFrame::build(&prev.psi, kappa, profiles)?;
    let fr_mid = GeometryFrame::build(&mid.psi, kappa, profiles)?;
    let fr_next = GeometryFrame::build(&next.psi, kappa, profiles)?;

    let energy = |s: &TransportSnapshot, fr: &GeometryFrame| -> f64 {
        s.rho.mul(&s.f).mul(&s.f).inner(&fr.d3_phi_tilde, None)
    };
    let lhs = (energy(next, &fr_next) - energy(prev, &fr_prev)) / (2.0 * dt);

    let dt_f = next.f.sub(&prev.f).scale(1.0 / (2.0 * dt));
    let dt_psi = next.psi.sub(&prev.psi).scale(1.0 / (2.0 * dt));
    let dtf_material = material_derivative(&dt_f, &mid.f, &mid.v, &fr_mid, &dt_psi);
    let first = mid
        .rho
        .mul(&dtf_material)
        .mul(&mid.f)
        .inner(&fr_mid.d3_phi_tilde, None)
        * 2.0;

    // d3 dt (phi~ - phi) = chi'(x3) (dt psi~ - dt psi)
    let dt_psi_tilde = mollify_squared(&dt_psi, kappa)?;
    let mismatch = chi_deriv_extend(&fr_mid, &dt_psi_tilde.sub(&dt_psi));
    let second = mid.rho.mul(&mid.f).mul(&mid.f).inner(&mismatch, None);

    Ok((lhs - (first + second)).abs())
}

/// Residual of the covariant integration-by-parts formula in direction `i`:
/// `int (d_i^{phi~} f) g d3phi~ + int f (d_i^{phi~} g) d3phi~
///  - oint_Sigma f g N~_i + [i = 3] oint_{Sigma_b} f g`.
pub fn integration_by_parts_residual(
    f: &VolumeField,
    g: &VolumeField,
    frame: &GeometryFrame,
    i: usize,
) -> f64 {
    let df = covariant_grad(f, frame);
    let dg = covariant_grad(g, frame);
    let vol = df[i]
        .mul(g)
        .add(&f.mul(&dg[i]))
        .inner(&frame.d3_phi_tilde, None);
    let fs = f.surface_trace().mul(&g.surface_trace());
    let top = match i {
        0 => fs.mul(&frame.nt1).integral(),
        1 => fs.mul(&frame.nt2).integral(),
        2 => fs.integral(),
        _ => unreachable!(),
    };
    let bottom = if i == 2 {
        f.bottom_trace().mul(&g.bottom_trace()).integral()
    } else {
        0.0
    };
    (vol - top + bottom).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn setup(nx: usize, nz: usize) -> (Arc<Grid>, Profiles) {
        let g = Grid::new(nx, nx, nz, 2.0 * std::f64::consts::PI, 12.0).unwrap();
        let p = Profiles::new(&g, 3.0, 1.0).unwrap();
        (g, p)
    }

    #[test]
    fn flat_frame_is_identity() {
        let (g, p) = setup(8, 9);
        let psi = SurfaceField::zeros(g.clone());
        let fr = GeometryFrame::build(&psi, 0.1, &p).unwrap();
        let zf = VolumeField::from_fn(g.clone(), |_, _, z| z);
        assert!(fr.phi.sub(&zf).linf_norm() < 1e-14);
        assert!(
            fr.d3_phi_tilde
                .sub(&VolumeField::constant(g, 1.0))
                .linf_norm()
                < 1e-14
        );
        assert!(fr.n1.linf_norm() < 1e-14);
    }

    #[test]
    fn curved_frame_matches_closed_form() {
        let (g, p) = setup(8, 17);
        let eps = 0.1;
        let psi = SurfaceField::from_fn(g.clone(), |x, _| eps * x.sin());
        let fr = GeometryFrame::build(&psi, 0.0, &p).unwrap();
        for l in 0..g.nz {
            for i in 0..g.nx {
                let expect = g.z[l] + p.chi[l] * eps * g.x(i).sin();
                assert!((fr.phi.get(i, 0, l) - expect).abs() < 1e-13);
                let expect_d3 = 1.0 + p.chi_deriv[0][l] * eps * g.x(i).sin();
                assert!((fr.d3_phi.get(i, 0, l) - expect_d3).abs() < 1e-13);
            }
        }
        assert!(
            fr.phi_tilde
                .surface_trace()
                .sub(&fr.psi_tilde)
                .linf_norm()
                < 1e-13
        );
        assert!((fr.phi_tilde.bottom_trace().linf_norm() - g.b).abs() < 1e-12);
    }

    #[test]
    fn steep_surface_rejected() {
        let (g, p) = setup(8, 17);
        let psi = SurfaceField::from_fn(g.clone(), |x, _| 3.0 * x.sin());
        assert!(matches!(
            GeometryFrame::build(&psi, 0.0, &p),
            Err(CapError::DiffeomorphismViolation { .. })
        ));
    }

    #[test]
    fn covariant_gradient_of_phi_is_e3() {
        let (g, p) = setup(16, 25);
        let psi = SurfaceField::from_fn(g.clone(), |x, y| 0.2 * x.sin() + 0.1 * y.cos());
        let fr = GeometryFrame::build(&psi, 0.1, &p).unwrap();
        let grad = covariant_grad(&fr.phi_tilde, &fr);
        assert!(grad[0].linf_norm() < 1e-10);
        assert!(grad[1].linf_norm() < 1e-10);
        assert!(grad[2].sub(&VolumeField::constant(g, 1.0)).linf_norm() < 1e-10);
    }

    #[test]
    fn covariant_gradient_of_x3_closed_form() {
        let (g, p) = setup(8, 17);
        let psi = SurfaceField::from_fn(g.clone(), |x, _| 0.2 * x.sin());
        let fr = GeometryFrame::build(&psi, 0.0, &p).unwrap();
        let f = VolumeField::from_fn(g.clone(), |_, _, z| z);
        let grad = covariant_grad(&f, &fr);
        let pinv = fr.d3_phi_tilde.recip();
        assert!(grad[2].sub(&pinv).linf_norm() < 1e-11);
        let expect_x = fr.d1_phi_tilde.mul(&pinv).scale(-1.0);
        assert!(grad[0].sub(&expect_x).linf_norm() < 1e-11);
    }

    #[test]
    fn material_derivative_cases() {
        let (g, p) = setup(8, 17);
        let psi = SurfaceField::from_fn(g.clone(), |x, _| 0.1 * x.sin());
        let fr = GeometryFrame::build(&psi, 0.0, &p).unwrap();
        let f = VolumeField::from_fn(g.clone(), |x, _, z| (x.cos() + 1.0) * z);
        let dtf = VolumeField::from_fn(g.clone(), |x, _, _| x.sin());
        let zero_v = [
            VolumeField::zeros(g.clone()),
            VolumeField::zeros(g.clone()),
            VolumeField::zeros(g.clone()),
        ];
        let dt_psi = SurfaceField::zeros(g.clone());
        let out = material_derivative(&dtf, &f, &zero_v, &fr, &dt_psi);
        assert!(out.sub(&dtf).linf_norm() < 1e-13);

        // When dt psi obeys the kinematic condition the vertical weight
        // vanishes on the surface.
        let v1 = VolumeField::from_fn(g.clone(), |x, y, _| (x + y).cos());
        let v2 = VolumeField::from_fn(g.clone(), |x, _, _| x.sin());
        let v3 = VolumeField::from_fn(g.clone(), |_, y, z| y.sin() * (z / 3.0).exp());
        let v = [v1, v2, v3];
        let dt_psi_kbc = fr.dot_n_tilde_surface(&v);
        let dt_phi = fr.chi_extend(&dt_psi_kbc);
        let w3 = fr
            .dot_nn_tilde(&v)
            .sub(&dt_phi)
            .mul(&fr.d3_phi_tilde.recip());
        assert!(w3.surface_trace().linf_norm() < 1e-12);
    }

    #[test]
    fn mean_curvature_small_amplitude_scaling() {
        let (g, _) = setup(16, 9);
        for eps in [1e-3, 1e-2] {
            let psi = SurfaceField::from_fn(g.clone(), |x, y| eps * (x + y).sin());
            let h = mean_curvature(&psi);
            let lin = psi.scale(2.0);
            let err = h.sub(&lin).linf_norm();
            assert!(err < 20.0 * eps * eps * eps + 1e-12, "eps = {eps}: {err}");
        }
        assert!(mean_curvature(&SurfaceField::zeros(g)).linf_norm() < 1e-14);
    }

    #[test]
    fn curvature_linearization_matches_difference_quotient() {
        let (g, _) = setup(16, 9);
        let psi = SurfaceField::from_fn(g.clone(), |x, y| 0.2 * x.sin() + 0.1 * y.cos());
        let h = SurfaceField::from_fn(g.clone(), |x, y| (x + 2.0 * y).cos());
        let eps = 1e-6;
        let fd = mean_curvature(&psi.add(&h.scale(eps)))
            .sub(&mean_curvature(&psi.add(&h.scale(-eps))))
            .scale(1.0 / (2.0 * eps));
        let lin = mean_curvature_linearized(&psi, &h);
        assert!(fd.sub(&lin).linf_norm() < 1e-6);
    }

    #[test]
    fn st_margin_nonnegative() {
        let (g, _) = setup(8, 9);
        let zero = SurfaceField::zeros(g.clone());
        let a1 = SurfaceField::from_fn(g.clone(), |x, _| x.cos());
        let a2 = SurfaceField::from_fn(g.clone(), |_, y| y.sin());
        let m = st_inequality_margin(&a1, &a2, &zero);
        assert!(m.abs() < 1e-14);

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s = rng.gen_range(0.1..1.0);
            let psi = SurfaceField::from_fn(g.clone(), |x, y| s * (x.sin() + y.cos()));
            let b1 = SurfaceField::from_fn(g.clone(), |_, y| y.cos() * s);
            let b2 = SurfaceField::from_fn(g.clone(), |x, _| (2.0 * x).sin());
            assert!(st_inequality_margin(&b1, &b2, &psi) >= -1e-12);
        }
    }

    #[test]
    fn good_unknown_flat_frame_trivial() {
        let (g, p) = setup(8, 17);
        let psi = SurfaceField::zeros(g.clone());
        let fj = FrameJet::build(&[psi], 0.1, &p).unwrap();
        let f: VJet = VolumeField::from_fn(g.clone(), |x, _, z| x.sin() * (z + 1.0)).into();
        let alpha = [Tangential::Dx];
        let gu = good_unknown(&f, &alpha, &fj).unwrap();
        let direct = apply_alpha(&alpha, &f, &fj).unwrap();
        assert!(gu.value().sub(direct.value()).linf_norm() < 1e-12);
        let c = commutator(&f, &alpha, 0, &fj).unwrap();
        assert!(c.value().linf_norm() < 1e-12);
    }

    #[test]
    fn good_unknown_identity_first_order() {
        let (g, p) = setup(16, 25);
        let psi = SurfaceField::from_fn(g.clone(), |x, y| 0.15 * x.sin() + 0.1 * y.cos());
        let fj = FrameJet::build(&[psi], 0.2, &p).unwrap();
        let f: VJet = VolumeField::from_fn(g.clone(), |x, y, z| {
            (x.sin() + y.cos()) * (z / 12.0 + 0.5 * (z / 6.0).cos())
        })
        .into();
        for i in 0..3 {
            for alpha in [[Tangential::Dx], [Tangential::Dy], [Tangential::OmegaDz]] {
                let res = good_unknown_identity_residual(&f, &alpha, i, &fj).unwrap();
                assert!(res < 1e-8, "alpha {alpha:?} dir {i}: residual {res}");
            }
        }
    }

    #[test]
    fn good_unknown_identity_second_order_refines() {
        let run = |nx: usize, nz: usize| -> f64 {
            let (g, p) = setup(nx, nz);
            let psi = SurfaceField::from_fn(g.clone(), |x, y| 0.1 * x.sin() + 0.05 * y.cos());
            let fj = FrameJet::build(&[psi], 0.2, &p).unwrap();
            let f: VJet =
                VolumeField::from_fn(g.clone(), |x, y, z| x.sin() * y.cos() * (0.3 * z).cos())
                    .into();
            let alpha = [Tangential::Dx, Tangential::Dy];
            good_unknown_identity_residual(&f, &alpha, 0, &fj).unwrap()
        };
        let coarse = run(16, 17);
        let fine = run(32, 33);
        assert!(fine < 1e-7, "fine residual {fine}");
        assert!(fine <= coarse.max(1e-12));
    }

    #[test]
    fn ibp_identity() {
        let (g, p) = setup(16, 25);
        let psi = SurfaceField::from_fn(g.clone(), |x, _| 0.2 * x.sin());
        let fr = GeometryFrame::build(&psi, 0.1, &p).unwrap();
        let bump = |z: f64| {
            let t: f64 = (z + 6.0) / 3.0;
            (-t * t).exp()
        };
        let f = VolumeField::from_fn(g.clone(), |x, _, z| x.sin() * bump(z));
        let gfun = VolumeField::from_fn(g.clone(), |_, y, z| y.cos() * bump(z));
        for i in 0..3 {
            let r = integration_by_parts_residual(&f, &gfun, &fr, i);
            assert!(r < 1e-9, "direction {i}: {r}");
        }
        let f2 = VolumeField::from_fn(g.clone(), |x, _, z| x.sin() * (z / 5.0).cos());
        let g2 = VolumeField::from_fn(g.clone(), |_, y, z| y.cos() + z / 7.0);
        for i in 0..3 {
            let r = integration_by_parts_residual(&f2, &g2, &fr, i);
            assert!(r < 1e-7, "direction {i} with boundary terms: {r}");
        }
    }

    #[test]
    fn transport_identity_manufactured() {
        let (g, p) = setup(8, 17);
        let gap = |dt: f64| -> f64 {
            let snap = |t: f64| -> TransportSnapshot {
                let psi = SurfaceField::from_fn(g.clone(), |x, _| 0.05 * x.sin() * t.cos());
                TransportSnapshot {
                    psi,
                    rho: VolumeField::constant(g.clone(), 1.0),
                    f: VolumeField::from_fn(g.clone(), |x, _, z| {
                        (x + t).sin() * (z / 4.0).cos()
                    }),
                    v: [
                        VolumeField::zeros(g.clone()),
                        VolumeField::zeros(g.clone()),
                        VolumeField::zeros(g.clone()),
                    ],
                }
            };
            transport_identity_residual(&snap(-dt), &snap(0.0), &snap(dt), dt, 0.1, &p)
                .unwrap()
        };
        let g1 = gap(0.02);
        let g2 = gap(0.01);
        assert!(g2 < g1 / 2.5, "gaps {g1} vs {g2}");

        let zero_snap = || TransportSnapshot {
            psi: SurfaceField::zeros(g.clone()),
            rho: VolumeField::constant(g.clone(), 1.0),
            f: VolumeField::constant(g.clone(), 1.0),
            v: [
                VolumeField::zeros(g.clone()),
                VolumeField::zeros(g.clone()),
                VolumeField::zeros(g.clone()),
            ],
        };
        let r = transport_identity_residual(&zero_snap(), &zero_snap(), &zero_snap(), 0.01, 0.1, &p)
            .unwrap();
        assert!(r < 1e-13);
    }
}
