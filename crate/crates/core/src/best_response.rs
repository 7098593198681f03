//! Stage-II: each client's utility-maximizing relative accuracy for an
//! announced uniform reward rate.
//!
//! With `u_k(r, theta) = r (1 - theta) - C_k(theta)` the first-order
//! condition reduces to `h(theta) = g_k(r)` where
//! `h(theta) = 1/theta + ln theta` is strictly decreasing on `(0, 1]` with
//! `h(1) = 1`, and `g_k(r) = (r + nu T) / ((1 - nu) gamma) - 1`.

use serde::{Deserialize, Serialize};

use crate::cost::{cost_unchecked, ClientProfile};
use crate::error::{domain, Error, Result};
use crate::numeric::safeguarded_newton;

/// Smallest relative accuracy the root finder will report.
pub const THETA_FLOOR: f64 = 1e-9;

/// Default residual tolerance on `|h(theta) - g|`.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Uniform reward per unit of accuracy improvement, `r >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RewardRate(f64);

impl RewardRate {
    pub const ZERO: RewardRate = RewardRate(0.0);

    pub fn new(r: f64) -> Result<Self> {
        if r.is_finite() && r >= 0.0 {
            Ok(Self(r))
        } else {
            Err(domain(format!("reward rate must be finite and >= 0, got {r}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RewardRate {
    type Error = Error;
    fn try_from(r: f64) -> Result<Self> {
        Self::new(r)
    }
}

impl From<RewardRate> for f64 {
    fn from(r: RewardRate) -> f64 {
        r.0
    }
}

/// A client's reaction to an announced reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub client: usize,
    /// Reported accuracy `min(unclamped, theta_th)`, or 1 when `g < 1`.
    pub theta_star: f64,
    pub unclamped_theta: f64,
    /// `z_k`: the reward strictly exceeds the client's threshold price.
    pub participates: bool,
    pub r_hat: f64,
    /// `u_k(r, theta_star)`.
    pub utility: f64,
}

/// `g_k(r)`.
pub fn g_of_r(profile: &ClientProfile, r: RewardRate) -> Result<f64> {
    let m = ResponseModel::new(profile)?;
    Ok(m.g(r.get()))
}

/// `h(theta) = 1/theta + ln theta`.
pub fn h_of_theta(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(domain(format!("relative accuracy must be in (0, 1], got {theta}")));
    }
    Ok(h(theta))
}

#[inline]
fn h(theta: f64) -> f64 {
    1.0 / theta + theta.ln()
}

#[inline]
fn dh(theta: f64) -> f64 {
    (theta - 1.0) / (theta * theta)
}

/// Unique `theta` in `(0, 1]` with `h(theta) = g`, for `g >= 1`.
pub fn invert_h(g: f64, tol: f64) -> Result<f64> {
    if g.is_nan() || g < 1.0 {
        return Err(Error::NoInteriorSolution { g });
    }
    if g == 1.0 {
        return Ok(1.0);
    }
    if g >= h(THETA_FLOOR) {
        return Ok(THETA_FLOOR);
    }
    // u - ln u = g with u = 1/theta; u ~ g + ln g for large g, 1 + sqrt(2(g-1)) near 1
    let u0 = if g > 2.0 { g + g.ln() } else { 1.0 + (2.0 * (g - 1.0)).sqrt() };
    let root = safeguarded_newton(|t| h(t) - g, dh, THETA_FLOOR, 1.0, 1.0 / u0, tol, 200);
    if !root.converged {
        return Err(Error::Convergence { iterations: root.iterations, residual: root.residual });
    }
    // polish to rounding level: near g = 1 the slope of h vanishes and a
    // small residual still leaves a visible error in theta
    let (mut x, mut fx) = (root.x, root.residual);
    for _ in 0..4 {
        let d = dh(x);
        if d == 0.0 || fx == 0.0 {
            break;
        }
        let next = (x - fx / d).clamp(THETA_FLOOR, 1.0);
        let f_next = h(next) - g;
        if f_next.abs() >= fx.abs() {
            break;
        }
        (x, fx) = (next, f_next);
    }
    Ok(x)
}

/// Interior optimum of `u_k(r, .)` ignoring the threshold clamp.
pub fn solve_unclamped(profile: &ClientProfile, r: RewardRate, tol: f64) -> Result<f64> {
    invert_h(g_of_r(profile, r)?, tol)
}

/// Minimum reward at which the unclamped response reaches `theta_th`,
/// floored at 0.
pub fn r_hat(profile: &ClientProfile, theta_th: f64) -> Result<RewardRate> {
    let m = ResponseModel::new(profile)?;
    RewardRate::new(m.r_hat(h_of_theta(theta_th)?))
}

/// Best response of one client at reward `r` under the consensus
/// threshold `theta_th`.
pub fn best_response(profile: &ClientProfile, r: RewardRate, theta_th: f64, tol: f64) -> Result<BestResponse> {
    let m = ResponseModel::new(profile)?;
    m.respond(r.get(), theta_th, h_of_theta(theta_th)?, tol)
}

/// `u_k(r, theta)` for an arbitrary strategy `theta`.
pub fn client_utility(profile: &ClientProfile, r: RewardRate, theta: f64) -> Result<f64> {
    let cost = crate::cost::client_cost(profile, theta)?;
    Ok(r.get() * (1.0 - theta) - cost)
}

/// Pre-resolved client parameters for repeated evaluation inside solvers.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ResponseModel {
    pub id: usize,
    pub nu: f64,
    pub gamma: f64,
    pub comm_time: f64,
    scale: f64,
}

impl ResponseModel {
    pub fn new(profile: &ClientProfile) -> Result<Self> {
        profile.validate()?;
        if profile.nu >= 1.0 {
            return Err(Error::DegenerateClient { id: profile.id });
        }
        let comm_time = profile.comm_time()?;
        Ok(Self {
            id: profile.id,
            nu: profile.nu,
            gamma: profile.gamma,
            comm_time,
            scale: (1.0 - profile.nu) * profile.gamma,
        })
    }

    #[inline]
    pub fn g(&self, r: f64) -> f64 {
        (r + self.nu * self.comm_time) / self.scale - 1.0
    }

    /// `g^{-1}(h_th)`, floored at 0.
    pub fn r_hat(&self, h_th: f64) -> f64 {
        (self.scale * (h_th + 1.0) - self.nu * self.comm_time).max(0.0)
    }

    /// Unclamped response; 1 when `g <= 1`.
    pub fn unclamped(&self, r: f64, tol: f64) -> Result<f64> {
        let g = self.g(r);
        if g <= 1.0 {
            Ok(1.0)
        } else {
            invert_h(g, tol)
        }
    }

    pub fn utility(&self, r: f64, theta: f64) -> f64 {
        r * (1.0 - theta) - cost_unchecked(self.nu, self.gamma, self.comm_time, theta)
    }

    pub fn respond(&self, r: f64, theta_th: f64, h_th: f64, tol: f64) -> Result<BestResponse> {
        let g = self.g(r);
        let r_hat = self.r_hat(h_th);
        let (unclamped, theta_star) = if g < 1.0 {
            (1.0, 1.0)
        } else {
            let t = invert_h(g, tol)?;
            (t, t.min(theta_th))
        };
        Ok(BestResponse {
            client: self.id,
            theta_star,
            unclamped_theta: unclamped,
            participates: r > r_hat,
            r_hat,
            utility: self.utility(r, theta_star),
        })
    }
}
