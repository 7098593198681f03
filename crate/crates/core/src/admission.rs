//! Admission control: pick the accuracy threshold that balances the
//! server's satisfaction against the expected number of accepted clients.
//!
//! With responses `theta ~ F` on `[theta_min, theta_max]` and `K` expected
//! clients, accepting everyone at or below `theta` admits `K F(theta)` of
//! them, and the server maximizes
//! `beta (1 - 10^-(a delta (1 - theta) + b)) + (1 - theta) K F(theta)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::safeguarded_newton;
use crate::stackelberg::ServerConfig;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 60;

/// Distribution of client accuracy responses.
pub trait ResponseDistribution {
    /// `[lo, hi]` carrying all mass.
    fn support(&self) -> (f64, f64);
    fn cdf(&self, theta: f64) -> f64;
    fn pdf(&self, theta: f64) -> f64;
    fn pdf_derivative(&self, theta: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    pub lo: f64,
    pub hi: f64,
}

impl ResponseDistribution for Uniform {
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
    fn cdf(&self, theta: f64) -> f64 {
        ((theta - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
    fn pdf(&self, theta: f64) -> f64 {
        if (self.lo..=self.hi).contains(&theta) {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }
    fn pdf_derivative(&self, _theta: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionConfig {
    /// Expected number of responding clients.
    pub k: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub server: ServerConfig,
}

impl AdmissionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(domain(format!("K must be >= 0, got {}", self.k)));
        }
        if !(self.theta_min > 0.0 && self.theta_min < self.theta_max && self.theta_max <= 1.0) {
            return Err(domain(format!(
                "need 0 < theta_min < theta_max <= 1, got [{}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        let s = &self.server;
        if !(s.a.is_finite() && s.a >= 0.0 && s.b.is_finite() && s.beta > 0.0 && s.delta > 0.0) {
            return Err(domain(format!("invalid server parameters {s:?}")));
        }
        Ok(())
    }

    pub fn distribution(&self) -> Uniform {
        Uniform { lo: self.theta_min, hi: self.theta_max }
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        self.validate()?;
        if !(self.theta_min..=self.theta_max).contains(&theta) {
            return Err(domain(format!(
                "theta {theta} outside [{}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Interior,
    AtMin,
    AtMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionResult {
    pub theta_star: f64,
    pub accepted_n: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    pub boundary: Boundary,
}

fn tail(s: &ServerConfig, theta: f64) -> f64 {
    10f64.powf(-(s.a * s.delta * (1.0 - theta) + s.b))
}

pub fn admission_objective(cfg: &AdmissionConfig, theta: f64) -> Result<f64> {
    cfg.check_theta(theta)?;
    Ok(objective_with(cfg, &cfg.distribution(), theta))
}

pub fn objective_with(cfg: &AdmissionConfig, dist: &impl ResponseDistribution, theta: f64) -> f64 {
    let s = &cfg.server;
    s.beta * (1.0 - tail(s, theta)) + (1.0 - theta) * cfg.k * dist.cdf(theta)
}

/// Derivative of the objective in `theta`.
pub fn stationarity_residual(cfg: &AdmissionConfig, theta: f64) -> Result<f64> {
    cfg.check_theta(theta)?;
    Ok(residual_with(cfg, &cfg.distribution(), theta))
}

pub fn residual_with(cfg: &AdmissionConfig, dist: &impl ResponseDistribution, theta: f64) -> f64 {
    let s = &cfg.server;
    let participation = cfg.k * ((1.0 - theta) * dist.pdf(theta) - dist.cdf(theta));
    participation - std::f64::consts::LN_10 * s.beta * s.delta * s.a * tail(s, theta)
}

fn residual_derivative(cfg: &AdmissionConfig, dist: &impl ResponseDistribution, theta: f64) -> f64 {
    let s = &cfg.server;
    let ln10 = std::f64::consts::LN_10;
    let participation = cfg.k * ((1.0 - theta) * dist.pdf_derivative(theta) - 2.0 * dist.pdf(theta));
    participation - ln10 * ln10 * s.beta * (s.delta * s.a).powi(2) * tail(s, theta)
}

pub fn solve_threshold(cfg: &AdmissionConfig, tol: f64, max_iter: usize) -> Result<AdmissionResult> {
    cfg.validate()?;
    solve_threshold_with(cfg, &cfg.distribution(), tol, max_iter)
}

/// Safeguarded Newton on the residual from the distribution's midpoint.
/// Assumes the residual is non-increasing (a concave objective), which
/// holds for the uniform distribution.
pub fn solve_threshold_with(
    cfg: &AdmissionConfig,
    dist: &impl ResponseDistribution,
    tol: f64,
    max_iter: usize,
) -> Result<AdmissionResult> {
    let (lo, hi) = dist.support();
    let accepted = |theta: f64| cfg.k * dist.cdf(theta);
    let f = |t: f64| residual_with(cfg, dist, t);
    let at = |theta: f64, boundary| AdmissionResult {
        theta_star: theta,
        accepted_n: accepted(theta),
        newton_iterations: 0,
        residual: f(theta),
        boundary,
    };
    if f(lo) <= 0.0 {
        return Ok(at(lo, Boundary::AtMin));
    }
    if f(hi) >= 0.0 {
        return Ok(at(hi, Boundary::AtMax));
    }
    let root = safeguarded_newton(f, |t| residual_derivative(cfg, dist, t), lo, hi, 0.5 * (lo + hi), tol, max_iter);
    if !root.converged {
        return Err(Error::Convergence { iterations: root.iterations, residual: root.residual });
    }
    Ok(AdmissionResult {
        theta_star: root.x,
        accepted_n: accepted(root.x),
        newton_iterations: root.iterations,
        residual: root.residual,
        boundary: Boundary::Interior,
    })
}
