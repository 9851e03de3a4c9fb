//! Closed-form Black-Scholes-Merton prices for European options on a
//! non-dividend-paying stock.
//!
//! `time_to_maturity` is the time remaining, so the discount factor is
//! `exp(-r * (T - t))` throughout. At exactly zero time remaining the price
//! functions return the payoff.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    /// Years remaining until expiry.
    pub time_to_maturity: f64,
}

impl MarketParams {
    pub fn new(
        spot: f64,
        strike: f64,
        rate: f64,
        sigma: f64,
        time_to_maturity: f64,
    ) -> Result<Self> {
        let p = MarketParams {
            spot,
            strike,
            rate,
            sigma,
            time_to_maturity,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return Err(Error::domain(format!(
                "spot must be positive, got {}",
                self.spot
            )));
        }
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(Error::domain(format!(
                "strike must be positive, got {}",
                self.strike
            )));
        }
        if !self.rate.is_finite() {
            return Err(Error::domain("rate must be finite"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::domain(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.time_to_maturity.is_finite() && self.time_to_maturity >= 0.0) {
            return Err(Error::domain(format!(
                "time to maturity must be non-negative, got {}",
                self.time_to_maturity
            )));
        }
        Ok(())
    }

    fn discount(&self) -> f64 {
        (-self.rate * self.time_to_maturity).exp()
    }
}

/// Standard normal cumulative distribution function.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("normal cdf of non-finite value {x}")));
    }
    Ok(norm_cdf(x))
}

// erfc keeps full relative precision in the lower tail, where 1 - erf loses it.
#[inline]
fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn d1_d2(p: &MarketParams) -> Result<(f64, f64)> {
    p.validate()?;
    if p.time_to_maturity == 0.0 {
        return Err(Error::AtExpiry);
    }
    let vol_sqrt_t = p.sigma * p.time_to_maturity.sqrt();
    let d1 = ((p.spot / p.strike).ln() + (p.rate + 0.5 * p.sigma * p.sigma) * p.time_to_maturity)
        / vol_sqrt_t;
    Ok((d1, d1 - vol_sqrt_t))
}

pub fn call_price(p: &MarketParams) -> Result<f64> {
    match d1_d2(p) {
        Ok((d1, d2)) => {
            let c = p.spot * norm_cdf(d1) - p.strike * p.discount() * norm_cdf(d2);
            // Cancellation can leave a few ulps below the no-arbitrage floor.
            Ok(c.max(0.0).min(p.spot))
        }
        Err(Error::AtExpiry) => call_payoff(p.spot, p.strike),
        Err(e) => Err(e),
    }
}

pub fn put_price(p: &MarketParams) -> Result<f64> {
    match d1_d2(p) {
        Ok((d1, d2)) => {
            let v = p.strike * p.discount() * norm_cdf(-d2) - p.spot * norm_cdf(-d1);
            Ok(v.max(0.0))
        }
        Err(Error::AtExpiry) => put_payoff(p.spot, p.strike),
        Err(e) => Err(e),
    }
}

pub fn option_price(kind: OptionKind, p: &MarketParams) -> Result<f64> {
    match kind {
        OptionKind::Call => call_price(p),
        OptionKind::Put => put_price(p),
    }
}

fn check_payoff_args(spot_at_expiry: f64, strike: f64) -> Result<()> {
    if !(spot_at_expiry.is_finite() && spot_at_expiry >= 0.0) {
        return Err(Error::domain(format!(
            "spot at expiry must be non-negative, got {spot_at_expiry}"
        )));
    }
    if !(strike.is_finite() && strike > 0.0) {
        return Err(Error::domain(format!(
            "strike must be positive, got {strike}"
        )));
    }
    Ok(())
}

pub fn call_payoff(spot_at_expiry: f64, strike: f64) -> Result<f64> {
    check_payoff_args(spot_at_expiry, strike)?;
    Ok((spot_at_expiry - strike).max(0.0))
}

pub fn put_payoff(spot_at_expiry: f64, strike: f64) -> Result<f64> {
    check_payoff_args(spot_at_expiry, strike)?;
    Ok((strike - spot_at_expiry).max(0.0))
}
