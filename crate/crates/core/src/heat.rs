//! Change of variables between option coordinates `(S, t, c)` and heat
//! coordinates `(x, tau, u)`:
//!
//! ```text
//! x   = ln(S / K)
//! tau = sigma^2 (T - t) / 2
//! c   = K u exp(alpha x + beta tau),  alpha = -(k - 1)/2,  beta = -(k + 1)^2/4,  k = 2r/sigma^2
//! ```
//!
//! Under this map the Black-Scholes PDE becomes `u_tau = u_xx` and the call
//! payoff becomes [`initial_condition_u`].

use crate::error::{Error, Result};
use crate::market::{OptionContract, QuoteSeries};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformContext {
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    /// Expiry measured in years from the start of the series.
    pub expiry: f64,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatPoint {
    pub x: f64,
    pub tau: f64,
    pub u: f64,
}

impl TransformContext {
    pub fn new(strike: f64, rate: f64, sigma: f64, expiry: f64) -> Result<Self> {
        if !(strike.is_finite() && strike > 0.0) {
            return Err(Error::domain(format!(
                "strike must be positive, got {strike}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::domain(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !rate.is_finite() {
            return Err(Error::domain("rate must be finite"));
        }
        if !(expiry.is_finite() && expiry > 0.0) {
            return Err(Error::domain(format!(
                "expiry must be positive, got {expiry}"
            )));
        }
        let k = 2.0 * rate / (sigma * sigma);
        Ok(TransformContext {
            strike,
            rate,
            sigma,
            expiry,
            k,
            alpha: -(k - 1.0) / 2.0,
            beta: -(k + 1.0) * (k + 1.0) / 4.0,
        })
    }

    pub fn to_x(&self, spot: f64) -> Result<f64> {
        if !(spot.is_finite() && spot > 0.0) {
            return Err(Error::domain(format!("spot must be positive, got {spot}")));
        }
        Ok((spot / self.strike).ln())
    }

    pub fn to_tau(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t > self.expiry {
            return Err(Error::domain(format!(
                "time {t} is past expiry {}",
                self.expiry
            )));
        }
        if t < 0.0 {
            return Err(Error::domain(format!("time must be non-negative, got {t}")));
        }
        Ok(0.5 * self.sigma * self.sigma * (self.expiry - t))
    }

    /// Inverse of [`to_x`](Self::to_x).
    pub fn spot_from_x(&self, x: f64) -> f64 {
        self.strike * x.exp()
    }

    /// Inverse of [`to_tau`](Self::to_tau).
    pub fn t_from_tau(&self, tau: f64) -> f64 {
        self.expiry - 2.0 * tau / (self.sigma * self.sigma)
    }

    /// `exp(alpha x + beta tau)`, the factor with `c = K u scale`.
    #[inline]
    pub fn scale(&self, x: f64, tau: f64) -> f64 {
        (self.alpha * x + self.beta * tau).exp()
    }

    pub fn c_from_u(&self, pt: &HeatPoint) -> f64 {
        self.strike * pt.u * self.scale(pt.x, pt.tau)
    }

    pub fn u_from_c(&self, c: f64, x: f64, tau: f64) -> f64 {
        c / (self.strike * self.scale(x, tau))
    }

    /// The call payoff in heat coordinates, `u(x, 0)`.
    pub fn initial_condition_u(&self, x: f64) -> f64 {
        initial_condition_u(x, self.k)
    }

    pub fn transform_series(
        &self,
        series: &QuoteSeries,
        contract: &OptionContract,
    ) -> Result<Vec<HeatPoint>> {
        transform_series(series, contract, self)
    }
}

/// `max(exp((k+1)x/2) - exp((k-1)x/2), 0)`.
pub fn initial_condition_u(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ((0.5 * (k + 1.0) * x).exp() - (0.5 * (k - 1.0) * x).exp()).max(0.0)
}

/// Value, first and second x-derivatives of the initial condition. The kink at
/// `x = 0` is assigned the left-hand derivatives.
pub fn initial_condition_derivs(x: f64, k: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let (a, b) = (0.5 * (k + 1.0), 0.5 * (k - 1.0));
    let (ea, eb) = ((a * x).exp(), (b * x).exp());
    (ea - eb, a * ea - b * eb, a * a * ea - b * b * eb)
}

/// One heat point per quote row, in calendar order (decreasing `tau`).
///
/// Fails on the first invalid row, citing its 1-based position in the series.
pub fn transform_series(
    series: &QuoteSeries,
    contract: &OptionContract,
    ctx: &TransformContext,
) -> Result<Vec<HeatPoint>> {
    let start = series.start_date();
    series
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let fail = |message: String| Error::Row {
                line: i + 1,
                message,
            };
            if !(row.spot_close > 0.0) {
                return Err(fail(format!("non-positive spot {}", row.spot_close)));
            }
            if !(row.option_close >= 0.0) {
                return Err(fail(format!("negative option price {}", row.option_close)));
            }
            if row.date > contract.expiry_date {
                return Err(fail(format!(
                    "{} is after expiry {}",
                    row.date, contract.expiry_date
                )));
            }
            let t = contract.year_fraction(start, row.date)?;
            let x = ctx.to_x(row.spot_close)?;
            // Round-off in the year fraction can push t a hair past expiry.
            let tau = ctx
                .to_tau(t.min(ctx.expiry))
                .map_err(|e| fail(e.to_string()))?;
            let tau = if row.date == contract.expiry_date {
                0.0
            } else {
                tau
            };
            Ok(HeatPoint {
                x,
                tau,
                u: ctx.u_from_c(row.option_close, x, tau),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn context_constants() {
        let ctx = TransformContext::new(10.0, 0.02, 0.2, 1.0).unwrap();
        assert_abs_diff_eq!(ctx.k, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ctx.alpha, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ctx.beta, -1.0, epsilon = 1e-14);

        let ctx = TransformContext::new(10.0, 0.1375, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(ctx.k, 1.1, epsilon = 1e-14);

        assert!(TransformContext::new(10.0, 0.1, 0.0, 1.0).is_err());
        assert!(TransformContext::new(10.0, 0.1, -0.2, 1.0).is_err());
        assert!(TransformContext::new(0.0, 0.1, 0.2, 1.0).is_err());
        assert!(TransformContext::new(10.0, 0.1, 0.2, 0.0).is_err());
    }

    #[test]
    fn alpha_beta_reproduce_scale_exponent() {
        for &(r, s) in &[(0.05, 0.2), (0.1375, 0.3), (0.0, 0.4), (-0.01, 0.25)] {
            let ctx = TransformContext::new(1.0, r, s, 1.0).unwrap();
            let (x, tau) = (0.37, 0.011);
            let expected = -0.5 * (ctx.k - 1.0) * x - 0.25 * (ctx.k + 1.0).powi(2) * tau;
            assert_abs_diff_eq!(ctx.alpha * x + ctx.beta * tau, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn coordinate_maps() {
        let ctx = TransformContext::new(24.76, 0.1375, 0.3, 0.5).unwrap();
        assert_eq!(ctx.to_x(24.76).unwrap(), 0.0);
        assert_abs_diff_eq!(
            ctx.to_x(24.76 * std::f64::consts::E).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(ctx.to_x(24.76 * 2.0).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert!(ctx.to_x(0.0).is_err());
        assert!(ctx.to_x(-3.0).is_err());

        assert_eq!(ctx.to_tau(0.5).unwrap(), 0.0);
        assert!(ctx.to_tau(0.6).is_err());
        let ctx = TransformContext::new(1.0, 0.05, 0.2, 1.0).unwrap();
        assert_abs_diff_eq!(ctx.to_tau(0.0).unwrap(), 0.02, epsilon = 1e-16);
        let ctx = TransformContext::new(1.0, 0.05, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(ctx.to_tau(0.5).unwrap(), 0.0625, epsilon = 1e-16);
        assert!(ctx.to_tau(0.2).unwrap() > ctx.to_tau(0.3).unwrap());
    }

    #[test]
    fn price_maps() {
        let ctx = TransformContext::new(10.0, 0.02, 0.2, 1.0).unwrap();
        let c = ctx.c_from_u(&HeatPoint {
            x: 2.0,
            tau: 1.0,
            u: 1.0,
        });
        assert_abs_diff_eq!(c, 10.0 * (-1f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(c, 3.6788, epsilon = 1e-4);
        assert_relative_eq!(ctx.u_from_c(c, 2.0, 1.0), 1.0, max_relative = 1e-14);
        assert_abs_diff_eq!(ctx.u_from_c(3.6788, 2.0, 1.0), 1.0, epsilon = 1e-4);
        assert_eq!(
            ctx.c_from_u(&HeatPoint {
                x: 0.4,
                tau: 0.1,
                u: 0.0
            }),
            0.0
        );
        assert_eq!(ctx.u_from_c(0.0, 0.4, 0.1), 0.0);
        assert_eq!(
            ctx.c_from_u(&HeatPoint {
                x: 0.0,
                tau: 0.0,
                u: 0.3
            }),
            10.0 * 0.3
        );
    }

    #[test]
    fn initial_condition() {
        assert_eq!(initial_condition_u(0.0, 2.5), 0.0);
        assert_eq!(initial_condition_u(-5.0, 2.5), 0.0);
        assert_abs_diff_eq!(initial_condition_u(4f64.ln(), 1.0), 3.0, epsilon = 1e-14);
        // continuity at the kink
        assert!(initial_condition_u(1e-12, 2.5) < 1e-11);
        let mut prev = 0.0;
        for i in 1..100 {
            let v = initial_condition_u(i as f64 * 0.03, 2.5);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn initial_condition_derivatives_match_differences() {
        let k = 3.06;
        let h = 1e-4;
        for &x in &[0.1, 0.5, 1.3] {
            let (_, d1, d2) = initial_condition_derivs(x, k);
            let f = |x| initial_condition_u(x, k);
            assert_relative_eq!(d1, (f(x + h) - f(x - h)) / (2.0 * h), max_relative = 1e-7);
            assert_relative_eq!(
                d2,
                (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
                max_relative = 1e-5
            );
        }
    }

    #[test]
    fn payoff_maps_back_to_call_payoff() {
        let ctx = TransformContext::new(25.0, 0.1375, 0.3, 0.25).unwrap();
        for &s in &[10.0, 24.0, 25.0, 26.0, 31.5, 80.0] {
            let x = ctx.to_x(s).unwrap();
            let c = ctx.c_from_u(&HeatPoint {
                x,
                tau: 0.0,
                u: ctx.initial_condition_u(x),
            });
            assert_abs_diff_eq!(c, (s - 25.0f64).max(0.0), epsilon = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn c_u_round_trip(
            c in 0.0f64..500.0,
            x in -3.0f64..3.0,
            ttm in 0.0f64..5.0,
            strike in 1.0f64..100.0,
            r in -0.05f64..0.3,
            s in 0.05f64..1.0,
        ) {
            let ctx = TransformContext::new(strike, r, s, 5.0).unwrap();
            let tau = 0.5 * s * s * ttm;
            let u = ctx.u_from_c(c, x, tau);
            let back = ctx.c_from_u(&HeatPoint { x, tau, u });
            prop_assert!((back - c).abs() <= 1e-12 * c.abs().max(f64::MIN_POSITIVE));
        }
    }
}
