//! Tangential mollification: horizontal-only smoothing at scale `kappa`,
//! realized as a Gaussian spectral multiplier, together with a measurement
//! harness for the smoothing inequalities the scheme relies on.

use std::sync::Arc;

use crate::error::{CapError, Result};
use crate::field::{SurfaceField, VolumeField};
use crate::grid::Grid;

/// Horizontal smoothing operator at scale `kappa > 0`.
///
/// The multiplier is `zeta_hat(kappa k) = exp(-kappa^2 |k|^2)`: mass one,
/// even, real, and bounded by one, which is everything the scheme uses.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub kappa: f64,
    grid: Arc<Grid>,
}

impl Mollifier {
    pub fn new(grid: Arc<Grid>, kappa: f64) -> Result<Mollifier> {
        if !(kappa > 0.0) {
            return Err(CapError::InvalidParameter(format!(
                "mollifier scale kappa = {kappa} must be positive"
            )));
        }
        Ok(Mollifier { kappa, grid })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel_hat(&self, kx: f64, ky: f64) -> f64 {
        (-self.kappa * self.kappa * (kx * kx + ky * ky)).exp()
    }

    pub fn apply(&self, f: &SurfaceField) -> SurfaceField {
        let k = self.kappa;
        f.real_multiplier(|kx, ky| (-k * k * (kx * kx + ky * ky)).exp())
    }

    /// Squared operator in a single spectral pass (used for the doubly
    /// smoothed surface).
    pub fn apply_squared(&self, f: &SurfaceField) -> SurfaceField {
        let k = self.kappa;
        f.real_multiplier(|kx, ky| (-2.0 * k * k * (kx * kx + ky * ky)).exp())
    }

    /// Tangential smoothing of a volume field, slice by slice in z.
    pub fn apply_volume(&self, g: &VolumeField) -> VolumeField {
        g.map_slices(|sf| self.apply(sf))
    }
}

/// Smooth a surface field at scale `kappa`; `kappa = 0` is the identity.
pub fn mollify(f: &SurfaceField, kappa: f64) -> Result<SurfaceField> {
    if kappa == 0.0 {
        return Ok(f.clone());
    }
    Ok(Mollifier::new(f.grid.clone(), kappa)?.apply(f))
}

/// Doubly smoothed field (the squared multiplier); `kappa = 0` is identity.
pub fn mollify_squared(f: &SurfaceField, kappa: f64) -> Result<SurfaceField> {
    if kappa == 0.0 {
        return Ok(f.clone());
    }
    Ok(Mollifier::new(f.grid.clone(), kappa)?.apply_squared(f))
}

pub fn mollify_volume(g: &VolumeField, kappa: f64) -> Result<VolumeField> {
    if kappa == 0.0 {
        return Ok(g.clone());
    }
    Ok(Mollifier::new(g.grid.clone(), kappa)?.apply_volume(g))
}

/// One measured inequality: `sup(lhs/rhs)` over a corpus, per kappa.
#[derive(Debug, Clone)]
pub struct InequalityReport {
    pub id: &'static str,
    pub kappa: f64,
    pub constant: f64,
    /// Number of corpus entries skipped because the right side degenerated.
    pub skipped: usize,
}

/// Measure the empirical constants of the smoothing inequalities over a
/// function corpus and a kappa list.
///
/// Covered bounds (s-indices fixed to representative values):
///   lkk1: |Lf|_s <= C |f|_s            (s in {-0.5, 0, 1, 2})
///   lkk2: |grad L f|_0 <= C kappa^{-s} |f|_{1-s}   (s in {0, 0.5, 1})
///   lkk3: |f - Lf|_inf <= C sqrt(kappa) |grad f|_{0.5}
///   lkk33: |f - Lf|_0 <= C kappa |grad f|_0
///   lkk4: |[L, f] g|_0 <= C |f|_inf |g|_0
///   lkk5: |[L, f] grad g|_0 <= C |f|_{W^{1,inf}} |g|_0
///   lkk6: |[L, f] grad g|_0 <= C kappa |f|_{W^{1,inf}} |grad g|_0
pub fn measure_mollifier_constants(
    kappa_list: &[f64],
    corpus: &[SurfaceField],
) -> Result<Vec<InequalityReport>> {
    if corpus.is_empty() {
        return Err(CapError::InvalidParameter("empty corpus".into()));
    }
    let mut out = Vec::new();
    for &kappa in kappa_list {
        let moll = Mollifier::new(corpus[0].grid.clone(), kappa)?;
        let mut rep = |id: &'static str, ratios: Vec<Option<f64>>| {
            let skipped = ratios.iter().filter(|r| r.is_none()).count();
            let constant = ratios.into_iter().flatten().fold(0.0f64, f64::max);
            out.push(InequalityReport {
                id,
                kappa,
                constant,
                skipped,
            });
        };

        let ratio = |lhs: f64, rhs: f64| -> Option<f64> {
            if rhs <= 1e-14 {
                None
            } else {
                Some(lhs / rhs)
            }
        };

        // lkk1
        let mut r1 = Vec::new();
        for f in corpus {
            let lf = moll.apply(f);
            for s in [-0.5, 0.0, 1.0, 2.0] {
                r1.push(ratio(
                    lf.sobolev_norm_unchecked(s),
                    f.sobolev_norm_unchecked(s),
                ));
            }
        }
        rep("lkk1", r1);

        // lkk2
        let mut r2 = Vec::new();
        for f in corpus {
            let lf = moll.apply(f);
            let grad = lf.dx().l2_norm().hypot(lf.dy().l2_norm());
            for s in [0.0, 0.5, 1.0] {
                r2.push(ratio(
                    grad * kappa.powf(s),
                    f.sobolev_norm_unchecked(1.0 - s),
                ));
            }
        }
        rep("lkk2", r2);

        // lkk3
        let mut r3 = Vec::new();
        for f in corpus {
            let diff = f.sub(&moll.apply(f));
            let gnorm = f
                .dx()
                .sobolev_norm_unchecked(0.5)
                .hypot(f.dy().sobolev_norm_unchecked(0.5));
            r3.push(ratio(diff.linf_norm(), kappa.sqrt() * gnorm));
        }
        rep("lkk3", r3);

        // lkk33
        let mut r33 = Vec::new();
        for f in corpus {
            let diff = f.sub(&moll.apply(f));
            let gnorm = f.dx().l2_norm().hypot(f.dy().l2_norm());
            r33.push(ratio(diff.l2_norm(), kappa * gnorm));
        }
        rep("lkk33", r33);

        // Commutators: pair consecutive corpus entries.
        let pairs: Vec<(&SurfaceField, &SurfaceField)> = corpus
            .iter()
            .zip(corpus.iter().cycle().skip(1))
            .take(corpus.len())
            .collect();

        let comm = |f: &SurfaceField, g: &SurfaceField| -> SurfaceField {
            moll.apply(&f.mul(g)).sub(&f.mul(&moll.apply(g)))
        };

        let mut r4 = Vec::new();
        for (f, g) in &pairs {
            r4.push(ratio(comm(f, g).l2_norm(), f.linf_norm() * g.l2_norm()));
        }
        rep("lkk4", r4);

        let mut r5 = Vec::new();
        let mut r6 = Vec::new();
        for (f, g) in &pairs {
            let gx = g.dx();
            let c = comm(f, &gx);
            r5.push(ratio(c.l2_norm(), f.w1inf_norm() * g.l2_norm()));
            r6.push(ratio(c.l2_norm(), kappa * f.w1inf_norm() * gx.l2_norm()));
        }
        rep("lkk5", r5);
        rep("lkk6", r6);
    }
    Ok(out)
}
