use super::{IResult, IntegratorError};

/// Constants of the step-size controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub safety: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Lower bound on the reduction after a failed error test.
    pub eta_min_fail: f64,
    /// Reduction applied after a nonlinear solver failure.
    pub eta_nonlinear_fail: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            safety: 0.9,
            eta_min: 0.1,
            eta_max: 10.0,
            eta_min_fail: 0.1,
            eta_nonlinear_fail: 0.25,
            h_min: 0.0,
            h_max: f64::INFINITY,
        }
    }
}

impl ControllerParams {
    /// Integral controller. `accepted` selects the growth or the failure rule;
    /// `embedded_order` is the order of the error estimate.
    pub fn adapt(&self, eps: f64, h: f64, embedded_order: usize, accepted: bool) -> IResult<f64> {
        let raw = self.safety * eps.powf(-1.0 / (embedded_order as f64 + 1.0));
        let eta = if accepted {
            raw.clamp(self.eta_min, self.eta_max)
        } else {
            raw.max(self.eta_min_fail).min(1.0)
        };
        self.bound(h * eta)
    }

    /// Clamps to `h_max` and rejects steps below `h_min`.
    pub fn bound(&self, h_new: f64) -> IResult<f64> {
        let mag = h_new.abs().min(self.h_max);
        if mag < self.h_min || mag == 0.0 || !mag.is_finite() {
            return Err(IntegratorError::HMinReached { t: f64::NAN, h: h_new });
        }
        Ok(mag.copysign(h_new))
    }
}
