//! Client cost model: iteration bounds, uplink time and the total
//! computation/communication cost of reaching a relative local accuracy.
//!
//! Every logarithm here is natural. Relative accuracy `theta` lives in
//! `(0, 1]`, where smaller is better and `theta = 1` means no local progress.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Uplink parameters of one client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Allocated bandwidth in Hz.
    pub bandwidth: f64,
    /// Transmit power in W.
    pub tx_power: f64,
    /// Channel gain `|G_k|^2`.
    pub channel_gain_sq: f64,
    /// Noise power in W.
    pub noise_power: f64,
    /// Size of one local update in bits.
    pub update_size: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("bandwidth", self.bandwidth),
            ("tx_power", self.tx_power),
            ("channel_gain_sq", self.channel_gain_sq),
            ("noise_power", self.noise_power),
            ("update_size", self.update_size),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("channel {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn snr(&self) -> f64 {
        self.tx_power * self.channel_gain_sq / self.noise_power
    }
}

/// Economic and compute parameters of a participating client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientProfile {
    pub id: usize,
    /// Monetary weight on communication versus computation, in `[0, 1]`.
    pub nu: f64,
    /// Local-solver constant in `I_l = gamma ln(1/theta)`.
    pub gamma: f64,
    /// Per-round upload time in seconds. Takes precedence over `channel`.
    #[serde(default)]
    pub comm_time: Option<f64>,
    #[serde(default)]
    pub channel: Option<ChannelParams>,
}

impl ClientProfile {
    pub fn new(id: usize, nu: f64, gamma: f64, comm_time: f64) -> Self {
        Self { id, nu, gamma, comm_time: Some(comm_time), channel: None }
    }

    pub fn with_channel(id: usize, nu: f64, gamma: f64, channel: ChannelParams) -> Self {
        Self { id, nu, gamma, comm_time: None, channel: Some(channel) }
    }

    /// Per-round communication time `T_k`.
    pub fn comm_time(&self) -> Result<f64> {
        match (self.comm_time, &self.channel) {
            (Some(t), _) => {
                if t.is_finite() && t > 0.0 {
                    Ok(t)
                } else {
                    Err(domain(format!("client {}: comm_time must be > 0, got {t}", self.id)))
                }
            }
            (None, Some(ch)) => comm_round_time(ch),
            (None, None) => Err(domain(format!("client {}: neither comm_time nor channel given", self.id))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(domain(format!("client {}: nu must be in [0, 1], got {}", self.id, self.nu)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(domain(format!("client {}: gamma must be > 0, got {}", self.id, self.gamma)));
        }
        self.comm_time().map(|_| ())
    }
}

/// Global iteration bound `I_g = zeta ln(1/eps) / (1 - theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalIterModel {
    pub zeta: f64,
}

impl Default for GlobalIterModel {
    fn default() -> Self {
        Self { zeta: 1.0 }
    }
}

/// How the communication expenditure `T_k / (1 - theta)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommMode {
    /// First-order expansion `T_k (1 + theta)`, used by the cost model.
    #[default]
    Approx,
    /// `T_k / (1 - theta)`.
    Exact,
}

/// Shannon rate `B log2(1 + p|G|^2 / N)` in bits/s.
pub fn data_rate(ch: &ChannelParams) -> Result<f64> {
    ch.validate()?;
    Ok(ch.bandwidth * (1.0 + ch.snr()).log2())
}

/// Upload time of one local update, `e_k / R_k`.
pub fn comm_round_time(ch: &ChannelParams) -> Result<f64> {
    let rate = data_rate(ch)?;
    if rate <= 0.0 {
        return Err(domain("data rate is zero"));
    }
    Ok(ch.update_size / rate)
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(domain(format!("relative accuracy must be in (0, 1], got {theta}")))
    }
}

/// Local iterations `gamma_k ln(1/theta)` needed for relative accuracy `theta`.
pub fn local_iterations(profile: &ClientProfile, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(profile.gamma * (1.0 / theta).ln())
}

/// Global rounds needed for accuracy `epsilon` when the worst local
/// accuracy is `theta_worst`.
pub fn global_iterations(model: &GlobalIterModel, epsilon: f64, theta_worst: f64) -> Result<f64> {
    if !(model.zeta.is_finite() && model.zeta > 0.0) {
        return Err(domain(format!("zeta must be > 0, got {}", model.zeta)));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    if !(0.0..=1.0).contains(&theta_worst) {
        return Err(domain(format!("theta must be in [0, 1], got {theta_worst}")));
    }
    if theta_worst >= 1.0 {
        return Err(Error::Divergence("worst-case relative accuracy is 1".into()));
    }
    Ok(model.zeta * (1.0 / epsilon).ln() / (1.0 - theta_worst))
}

/// [`global_iterations`] driven by the worst of several client responses.
pub fn global_iterations_heterogeneous(model: &GlobalIterModel, epsilon: f64, thetas: &[f64]) -> Result<f64> {
    let worst = thetas.iter().copied().fold(f64::NAN, f64::max);
    if worst.is_nan() {
        return Err(domain("no client responses"));
    }
    global_iterations(model, epsilon, worst)
}

/// Total communication time over all rounds, `T(theta)`.
pub fn communication_expenditure(comm_time: f64, theta: f64, mode: CommMode) -> Result<f64> {
    if !(comm_time.is_finite() && comm_time > 0.0) {
        return Err(domain(format!("comm_time must be > 0, got {comm_time}")));
    }
    // theta = 0 is the exact-local-solve limit and is well defined here
    if !(0.0..=1.0).contains(&theta) {
        return Err(domain(format!("relative accuracy must be in [0, 1], got {theta}")));
    }
    match mode {
        CommMode::Approx => Ok(comm_time * (1.0 + theta)),
        CommMode::Exact if theta >= 1.0 => Err(Error::Divergence("exact expenditure at theta = 1".into())),
        CommMode::Exact => Ok(comm_time / (1.0 - theta)),
    }
}

/// Client cost `(1 + theta)(nu T + (1 - nu) gamma ln(1/theta))`.
pub fn client_cost(profile: &ClientProfile, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let t = profile.comm_time()?;
    Ok(cost_unchecked(profile.nu, profile.gamma, t, theta))
}

#[inline]
pub(crate) fn cost_unchecked(nu: f64, gamma: f64, comm_time: f64, theta: f64) -> f64 {
    (1.0 + theta) * (nu * comm_time + (1.0 - nu) * gamma * (-theta.ln()))
}

/// Modeled wall-clock time to reach `epsilon`:
/// `I_g(eps, theta) * (T(theta) + tau_unit * I_l(theta))`.
pub fn wall_clock(
    model: &GlobalIterModel,
    epsilon: f64,
    theta: f64,
    comm_time: f64,
    tau_unit: f64,
    profile: &ClientProfile,
    mode: CommMode,
) -> Result<f64> {
    if !(tau_unit.is_finite() && tau_unit >= 0.0) {
        return Err(domain(format!("tau_unit must be >= 0, got {tau_unit}")));
    }
    let rounds = global_iterations(model, epsilon, theta)?;
    let comm = communication_expenditure(comm_time, theta, mode)?;
    let local = tau_unit * local_iterations(profile, theta)?;
    Ok(rounds * (comm + local))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};

    fn ch(bandwidth: f64, snr: f64, bits: f64) -> ChannelParams {
        ChannelParams { bandwidth, tx_power: snr, channel_gain_sq: 1.0, noise_power: 1.0, update_size: bits }
    }

    #[test]
    fn data_rate_examples() {
        assert!((data_rate(&ch(1e6, 3.0, 1.0)).unwrap() - 2e6).abs() < 1e-6);
        assert!((data_rate(&ch(2e6, 7.0, 1.0)).unwrap() - 6e6).abs() < 1e-6);
        // zero SNR is rejected by the positivity precondition
        assert!(data_rate(&ch(1e6, 0.0, 1.0)).is_err());
    }

    #[test]
    fn round_time_examples() {
        assert!((comm_round_time(&ch(1e6, 3.0, 1e6)).unwrap() - 0.5).abs() < 1e-12);
        assert!((comm_round_time(&ch(1e6, 1.0, 1e6)).unwrap() - 1.0).abs() < 1e-12);
        // oracle: e / (B log2(1 + snr)) with log2(4) = 2
        let oracle = 5e5 / (1e6 * 2.0);
        assert!((comm_round_time(&ch(1e6, 3.0, 5e5)).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.25).abs() < 1e-15);
    }

    #[test]
    fn direct_comm_time_wins() {
        let mut p = ClientProfile::with_channel(0, 0.5, 1.0, ch(1e6, 3.0, 1e6));
        assert!((p.comm_time().unwrap() - 0.5).abs() < 1e-12);
        p.comm_time = Some(2.0);
        assert_eq!(p.comm_time().unwrap(), 2.0);
    }

    #[test]
    fn local_iteration_examples() {
        let p1 = ClientProfile::new(0, 0.5, 1.0, 1.0);
        let p2 = ClientProfile::new(0, 0.5, 2.0, 1.0);
        assert_eq!(local_iterations(&p1, 1.0).unwrap(), 0.0);
        assert!((local_iterations(&p2, (-1.0f64).exp()).unwrap() - 2.0).abs() < 1e-12);
        assert!((local_iterations(&p1, 0.2).unwrap() - 1.609_437_912_434_100_3).abs() < 1e-12);
        assert!(local_iterations(&p1, 0.0).is_err());
        assert!(local_iterations(&p1, 1.5).is_err());
    }

    #[test]
    fn global_iteration_examples() {
        let m = GlobalIterModel::default();
        assert!((global_iterations(&m, (-2.0f64).exp(), 0.5).unwrap() - 4.0).abs() < 1e-12);
        assert!((global_iterations(&m, 1.0 / E, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let v = global_iterations_heterogeneous(&m, 0.01, &[0.2, 0.5]).unwrap();
        assert!((v - 100f64.ln() / 0.5).abs() < 1e-12);
        assert!((v - 9.210_340_371_976_184).abs() < 1e-9);
        assert!(matches!(global_iterations(&m, 0.1, 1.0), Err(Error::Divergence(_))));
    }

    #[test]
    fn expenditure_examples() {
        assert_eq!(communication_expenditure(1.0, 0.0, CommMode::Approx).unwrap(), 1.0);
        assert_eq!(communication_expenditure(1.0, 0.5, CommMode::Approx).unwrap(), 1.5);
        assert_eq!(communication_expenditure(1.0, 0.5, CommMode::Exact).unwrap(), 2.0);
        assert!((communication_expenditure(0.5, 0.2, CommMode::Approx).unwrap() - 0.6).abs() < 1e-15);
        assert!((communication_expenditure(0.5, 0.2, CommMode::Exact).unwrap() - 0.625).abs() < 1e-15);
        assert!(communication_expenditure(1.0, 1.2, CommMode::Approx).is_err());
    }

    #[test]
    fn cost_examples() {
        let p = ClientProfile::new(0, 0.5, 1.0, 1.0);
        assert!((client_cost(&p, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let comm_only = ClientProfile::new(0, 1.0, 1.0, 2.0);
        assert!((client_cost(&comm_only, 0.5).unwrap() - 3.0).abs() < 1e-15);
        let expected = 1.5 * (0.5 + 0.5 * LN_2);
        assert!((client_cost(&p, 0.5).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 1.269_860_3).abs() < 1e-6);
        assert!(client_cost(&p, 0.0).is_err());
    }

    #[test]
    fn wall_clock_examples() {
        let m = GlobalIterModel::default();
        let p = ClientProfile::new(0, 0.5, 1.0, 1.0);
        let v = wall_clock(&m, 1.0 / E, 0.5, 1.0, 0.0, &p, CommMode::Exact).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let v = wall_clock(&m, (-2.0f64).exp(), 0.5, 1.0, 1.0, &p, CommMode::Approx).unwrap();
        assert!((v - 4.0 * (1.5 + LN_2)).abs() < 1e-12);
        assert!((v - 8.772_588_722).abs() < 1e-8);
        assert!(matches!(
            wall_clock(&m, 0.1, 1.0, 1.0, 0.0, &p, CommMode::Approx),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn profile_validation() {
        assert!(ClientProfile::new(0, 1.2, 1.0, 1.0).validate().is_err());
        assert!(ClientProfile::new(0, 0.5, 0.0, 1.0).validate().is_err());
        assert!(ClientProfile::new(0, 0.5, 1.0, -1.0).validate().is_err());
        let none = ClientProfile { id: 0, nu: 0.5, gamma: 1.0, comm_time: None, channel: None };
        assert!(none.validate().is_err());
    }
}
