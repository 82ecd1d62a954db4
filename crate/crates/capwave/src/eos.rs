//! Tait equation of state and the log-density function linking pressure to
//! density, parametrized by the Mach parameter `lambda` (inverse sound
//! speed) and adiabatic index `gamma`.

use crate::error::{CapError, Result};

/// Tait equation of state `q(rho) = gamma^{-1} lambda'^2 (rho^gamma - 1)`
/// with `lambda' = 1/lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eos {
    /// Mach parameter (inverse sound speed at the reference density).
    pub lambda: f64,
    /// Adiabatic index, >= 1.
    pub gamma: f64,
}

impl Eos {
    pub fn new(lambda: f64, gamma: f64) -> Result<Eos> {
        if !(lambda > 0.0) {
            return Err(CapError::InvalidParameter(format!(
                "lambda = {lambda} must be positive"
            )));
        }
        if !(gamma >= 1.0) {
            return Err(CapError::InvalidParameter(format!(
                "gamma = {gamma} must be >= 1"
            )));
        }
        Ok(Eos { lambda, gamma })
    }

    /// Sound speed at the reference density.
    pub fn sound_speed(&self) -> f64 {
        1.0 / self.lambda
    }

    /// Pressure as a function of density (`rho >= 1` for liquids).
    pub fn q_of_rho(&self, rho: f64) -> f64 {
        let lp2 = 1.0 / (self.lambda * self.lambda);
        lp2 / self.gamma * (rho.powf(self.gamma) - 1.0)
    }

    fn argument(&self, q: f64) -> Result<f64> {
        let a = self.lambda * self.lambda * self.gamma * q + 1.0;
        if a <= 0.0 {
            return Err(CapError::HyperbolicityViolation { value: a });
        }
        Ok(a)
    }

    /// Density as a function of pressure.
    pub fn rho_of_q(&self, q: f64) -> Result<f64> {
        Ok(self.argument(q)?.powf(1.0 / self.gamma))
    }

    /// Log-density `F(q) = log rho(q) = gamma^{-1} log(lambda^2 gamma q + 1)`.
    pub fn f(&self, q: f64) -> Result<f64> {
        Ok(self.argument(q)?.ln() / self.gamma)
    }

    /// `F'(q) = lambda^2 / (lambda^2 gamma q + 1)`, comparable to lambda^2.
    pub fn f_prime(&self, q: f64) -> Result<f64> {
        Ok(self.lambda * self.lambda / self.argument(q)?)
    }

    /// Higher derivatives `F^(s)` for s = 1..=4 (closed forms).
    pub fn f_deriv(&self, q: f64, s: usize) -> Result<f64> {
        let a = self.argument(q)?;
        let l2 = self.lambda * self.lambda;
        let g = self.gamma;
        Ok(match s {
            1 => l2 / a,
            2 => -g * l2 * l2 / (a * a),
            3 => 2.0 * g * g * l2.powi(3) / a.powi(3),
            4 => -6.0 * g.powi(3) * l2.powi(4) / a.powi(4),
            _ => {
                return Err(CapError::InvalidParameter(format!(
                    "F derivative order {s} unsupported (1..=4)"
                )))
            }
        })
    }

    /// Specific internal energy `Q(rho) = int_1^rho p(r) r^{-2} dr` in
    /// closed form.
    pub fn internal_energy(&self, rho: f64) -> f64 {
        let lp2 = 1.0 / (self.lambda * self.lambda);
        let g = self.gamma;
        if (g - 1.0).abs() < 1e-12 {
            lp2 * (rho.ln() + 1.0 / rho - 1.0)
        } else {
            lp2 / g * (rho.powf(g - 1.0) / (g - 1.0) + 1.0 / rho - g / (g - 1.0))
        }
    }
}
