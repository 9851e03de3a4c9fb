//! Physics-informed training of the heat-equation surrogate.
//!
//! The network output `u_hat` enters through the trial solution
//!
//! ```text
//! u~(x, tau) = u0(x) + (1 - exp(-tau)) u_hat(x, tau)
//! ```
//!
//! so the payoff `u0` holds exactly at `tau = 0`. Training minimizes
//! `mean(R^2) + lambda * mean((u~ - u_obs)^2)` with `R = u~_tau - u~_xx` over
//! collocation points resampled every epoch and any transformed market
//! observations.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::heat::{initial_condition_derivs, HeatPoint, TransformContext};
use crate::net::{
    AdamConfig, AdamState, Checkpoint, InputDerivs, LossEvaluator, MlpParams, OutputSeeds, Tape,
    DEFAULT_HIDDEN,
};

pub const DEFAULT_EPOCHS: usize = 30_000;
pub const DEFAULT_COLLOCATION: usize = 1024;
/// Log-moneyness margin added around the observed data range.
pub const DEFAULT_X_MARGIN: f64 = 1.0;
/// `x` range used when training without market data.
pub const PURE_PDE_X_RANGE: (f64, f64) = (-1.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Fresh uniform points every epoch.
    #[default]
    Random,
    /// A fixed equispaced grid of cell centres.
    Grid,
}

impl Sampling {
    pub fn as_str(self) -> &'static str {
        match self {
            Sampling::Random => "random",
            Sampling::Grid => "grid",
        }
    }
}

impl std::str::FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Sampling::Random),
            "grid" => Ok(Sampling::Grid),
            other => Err(Error::Format(format!(
                "unknown sampling `{other}`; expected random or grid"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain2D {
    pub x_min: f64,
    pub x_max: f64,
    pub tau_max: f64,
    pub collocation_count: usize,
    pub seed: u64,
    pub sampling: Sampling,
}

impl Domain2D {
    pub fn new(
        x_min: f64,
        x_max: f64,
        tau_max: f64,
        collocation_count: usize,
        seed: u64,
    ) -> Result<Self> {
        let d = Domain2D {
            x_min,
            x_max,
            tau_max,
            collocation_count,
            seed,
            sampling: Sampling::Random,
        };
        d.validate()?;
        Ok(d)
    }

    /// `[-1.5, 1.5] x [0, sigma^2 T / 2]`.
    pub fn pure_pde(ctx: &TransformContext, collocation_count: usize, seed: u64) -> Result<Self> {
        let (lo, hi) = PURE_PDE_X_RANGE;
        Self::new(lo, hi, full_tau(ctx), collocation_count, seed)
    }

    /// Observed `x` range widened by `margin` on each side; the full `tau`
    /// range of the contract.
    pub fn around_data(
        data: &[HeatPoint],
        ctx: &TransformContext,
        margin: f64,
        collocation_count: usize,
        seed: u64,
    ) -> Result<Self> {
        if data.is_empty() {
            return Self::pure_pde(ctx, collocation_count, seed);
        }
        let lo = data.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let hi = data.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        Self::new(
            lo - margin,
            hi + margin,
            full_tau(ctx),
            collocation_count,
            seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::domain(format!(
                "bad x range [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return Err(Error::domain(format!(
                "tau_max must be positive, got {}",
                self.tau_max
            )));
        }
        if self.collocation_count == 0 {
            return Err(Error::domain("collocation_count must be at least 1"));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, tau: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (0.0..=self.tau_max).contains(&tau)
    }
}

fn full_tau(ctx: &TransformContext) -> f64 {
    0.5 * ctx.sigma * ctx.sigma * ctx.expiry
}

/// Collocation points for one epoch. Random sampling draws from a stream fixed
/// by `(seed, epoch)`; grid sampling ignores the epoch.
pub fn sample_collocation(domain: &Domain2D, epoch: u64) -> Vec<(f64, f64)> {
    let (x0, x1, t1) = (domain.x_min, domain.x_max, domain.tau_max);
    match domain.sampling {
        Sampling::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(domain.seed);
            rng.set_stream(epoch);
            (0..domain.collocation_count)
                .map(|_| {
                    (
                        x0 + (x1 - x0) * rng.random::<f64>(),
                        t1 * rng.random::<f64>(),
                    )
                })
                .collect()
        }
        Sampling::Grid => {
            let nx = ((domain.collocation_count as f64).sqrt().round() as usize).max(1);
            let nt = domain.collocation_count.div_ceil(nx);
            let mut pts = Vec::with_capacity(nx * nt);
            for j in 0..nt {
                let t = t1 * (j as f64 + 0.5) / nt as f64;
                for i in 0..nx {
                    pts.push((x0 + (x1 - x0) * (i as f64 + 0.5) / nx as f64, t));
                }
            }
            pts
        }
    }
}

/// Anything that yields a candidate solution with the derivatives the heat
/// residual needs.
pub trait Surrogate {
    fn trial_derivs(&self, x: f64, tau: f64, ctx: &TransformContext) -> InputDerivs;
}

impl Surrogate for MlpParams {
    fn trial_derivs(&self, x: f64, tau: f64, ctx: &TransformContext) -> InputDerivs {
        let mut tape = Tape::new(self.hidden());
        let net = net_forward(&mut tape, self, x, tau, ctx);
        blend(&net, x, tau, ctx)
    }
}

/// The network sees `tau / tau_full`, so its time input spans the unit
/// interval regardless of how small `sigma^2 T / 2` is.
#[inline]
fn tau_scale(ctx: &TransformContext) -> f64 {
    let full = full_tau(ctx);
    if full > 0.0 {
        1.0 / full
    } else {
        1.0
    }
}

#[inline]
fn net_forward(
    tape: &mut Tape,
    params: &MlpParams,
    x: f64,
    tau: f64,
    ctx: &TransformContext,
) -> InputDerivs {
    let s = tau_scale(ctx);
    let mut d = tape.forward(params, x, tau * s);
    d.u_tau *= s;
    d
}

/// `1 - exp(-tau)`, exactly zero at `tau = 0`.
#[inline]
fn blend_factor(tau: f64) -> f64 {
    -(-tau).exp_m1()
}

#[inline]
fn blend(net: &InputDerivs, x: f64, tau: f64, ctx: &TransformContext) -> InputDerivs {
    let (u0, u0_x, u0_xx) = initial_condition_derivs(x, ctx.k);
    let b = blend_factor(tau);
    let db = (-tau).exp();
    InputDerivs {
        u: u0 + b * net.u,
        u_x: u0_x + b * net.u_x,
        u_tau: db * net.u + b * net.u_tau,
        u_xx: u0_xx + b * net.u_xx,
    }
}

/// The trial solution `u0(x) + (1 - exp(-tau)) u_hat(x, tau)`.
pub fn trial_u(params: &MlpParams, x: f64, tau: f64, ctx: &TransformContext) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::domain(format!(
            "tau must be non-negative, got {tau}"
        )));
    }
    let b = blend_factor(tau);
    let u0 = ctx.initial_condition_u(x);
    if b == 0.0 {
        return Ok(u0);
    }
    Ok(u0 + b * params.forward(x, tau * tau_scale(ctx))?)
}

/// Heat residual `u_tau - u_xx` of the surrogate's trial solution.
pub fn residual<S: Surrogate + ?Sized>(s: &S, x: f64, tau: f64, ctx: &TransformContext) -> f64 {
    let d = s.trial_derivs(x, tau, ctx);
    d.u_tau - d.u_xx
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub residual: f64,
    pub data: f64,
}

/// Residual mean square over `collocation` plus `lambda_data` times the data
/// mean square.
pub fn total_loss<S: Surrogate + ?Sized>(
    s: &S,
    collocation: &[(f64, f64)],
    data: &[HeatPoint],
    lambda_data: f64,
    ctx: &TransformContext,
) -> Result<LossParts> {
    if collocation.is_empty() {
        return Err(Error::domain("at least one collocation point is required"));
    }
    let mut res = 0.0;
    for &(x, t) in collocation {
        let r = residual(s, x, t, ctx);
        check_finite(r, "residual", x, t)?;
        res += r * r;
    }
    res /= collocation.len() as f64;
    let mut fit = 0.0;
    for p in data {
        let e = s.trial_derivs(p.x, p.tau, ctx).u - p.u;
        check_finite(e, "data misfit", p.x, p.tau)?;
        fit += e * e;
    }
    if !data.is_empty() {
        fit /= data.len() as f64;
    }
    Ok(LossParts {
        total: res + lambda_data * fit,
        residual: res,
        data: fit,
    })
}

fn check_finite(v: f64, what: &str, x: f64, tau: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            location: format!("{what} at (x = {x}, tau = {tau})"),
            detail: v.to_string(),
        })
    }
}

/// One training batch: the residual-plus-data loss with its exact gradient.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss<'a> {
    pub collocation: &'a [(f64, f64)],
    pub data: &'a [HeatPoint],
    pub lambda_data: f64,
    pub ctx: &'a TransformContext,
}

impl BatchLoss<'_> {
    pub fn evaluate_parts(
        &self,
        params: &MlpParams,
        mut grad: Option<&mut MlpParams>,
    ) -> Result<LossParts> {
        if self.collocation.is_empty() {
            return Err(Error::domain("at least one collocation point is required"));
        }
        let mut tape = Tape::new(params.hidden());
        let ctx = self.ctx;
        let s = tau_scale(ctx);

        let nc = self.collocation.len() as f64;
        let mut res = 0.0;
        for &(x, tau) in self.collocation {
            let net = net_forward(&mut tape, params, x, tau, ctx);
            let d = blend(&net, x, tau, ctx);
            let r = d.u_tau - d.u_xx;
            check_finite(r, "residual", x, tau)?;
            res += r * r;
            if let Some(g) = grad.as_deref_mut() {
                let w = 2.0 * r / nc;
                let b = blend_factor(tau);
                let seeds = OutputSeeds {
                    u: w * (-tau).exp(),
                    u_x: 0.0,
                    u_tau: w * b * s,
                    u_xx: -w * b,
                };
                tape.backward(params, &seeds, g);
            }
        }
        res /= nc;

        let mut fit = 0.0;
        if !self.data.is_empty() {
            let nd = self.data.len() as f64;
            for p in self.data {
                let b = blend_factor(p.tau);
                let net = tape.forward(params, p.x, p.tau * s);
                let e = ctx.initial_condition_u(p.x) + b * net.u - p.u;
                check_finite(e, "data misfit", p.x, p.tau)?;
                fit += e * e;
                if let Some(g) = grad.as_deref_mut() {
                    let seeds = OutputSeeds {
                        u: 2.0 * self.lambda_data * e * b / nd,
                        ..Default::default()
                    };
                    tape.backward(params, &seeds, g);
                }
            }
            fit /= nd;
        }
        Ok(LossParts {
            total: res + self.lambda_data * fit,
            residual: res,
            data: fit,
        })
    }
}

impl LossEvaluator for BatchLoss<'_> {
    fn evaluate(&self, params: &MlpParams, grad: Option<&mut MlpParams>) -> Result<f64> {
        Ok(self.evaluate_parts(params, grad)?.total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lambda_data: f64,
    pub adam: AdamConfig,
    pub domain: Domain2D,
    pub record_every: usize,
    /// Seed for the weight initialization.
    pub seed: u64,
    pub hidden: usize,
}

impl TrainConfig {
    pub fn new(domain: Domain2D, seed: u64) -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            lambda_data: 1.0,
            adam: AdamConfig::default(),
            domain,
            record_every: 100,
            seed,
            hidden: DEFAULT_HIDDEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be at least 1"));
        }
        if !(self.lambda_data >= 0.0 && self.lambda_data.is_finite()) {
            return Err(Error::domain(format!(
                "lambda_data must be non-negative, got {}",
                self.lambda_data
            )));
        }
        if self.record_every == 0 {
            return Err(Error::domain("record_every must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(Error::domain("hidden width must be at least 1"));
        }
        let a = self.adam;
        if !(a.lr > 0.0
            && (0.0..1.0).contains(&a.beta1)
            && (0.0..1.0).contains(&a.beta2)
            && a.epsilon > 0.0)
        {
            return Err(Error::domain(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

/// Losses at the start of an epoch (before its update).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub residual_loss: f64,
    pub data_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: MlpParams,
    pub ctx: TransformContext,
    pub domain: Domain2D,
    pub loss_history: Vec<LossRecord>,
    pub seed: u64,
    pub steps: u64,
}

/// A price from the trained surrogate. `extrapolated` is set when the query
/// falls outside the training box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub price: f64,
    pub extrapolated: bool,
}

pub fn train(
    config: &TrainConfig,
    data: &[HeatPoint],
    ctx: &TransformContext,
) -> Result<TrainedModel> {
    train_with_progress(config, data, ctx, |_| {})
}

/// [`train`], calling `progress` with every recorded history entry.
pub fn train_with_progress(
    config: &TrainConfig,
    data: &[HeatPoint],
    ctx: &TransformContext,
    mut progress: impl FnMut(&LossRecord),
) -> Result<TrainedModel> {
    config.validate()?;
    let mut params = MlpParams::init(config.seed, config.hidden);
    let mut adam = AdamState::new(&params, config.adam);
    let mut grad = MlpParams::zeros(config.hidden);
    let mut history = Vec::new();
    let fixed_grid =
        (config.domain.sampling == Sampling::Grid).then(|| sample_collocation(&config.domain, 0));

    for epoch in 1..=config.epochs {
        let sampled;
        let collocation = match &fixed_grid {
            Some(g) => g,
            None => {
                sampled = sample_collocation(&config.domain, epoch as u64);
                &sampled
            }
        };
        let batch = BatchLoss {
            collocation,
            data,
            lambda_data: config.lambda_data,
            ctx,
        };
        grad.fill(0.0);
        let parts = batch
            .evaluate_parts(&params, Some(&mut grad))
            .map_err(|e| abort(epoch, collocation.len(), data.len(), e))?;
        if !parts.total.is_finite() {
            return Err(abort(
                epoch,
                collocation.len(),
                data.len(),
                Error::NonFinite {
                    location: "loss".into(),
                    detail: parts.total.to_string(),
                },
            ));
        }
        adam.step(&mut params, &grad)
            .map_err(|e| abort(epoch, collocation.len(), data.len(), e))?;

        if epoch == 1 || epoch % config.record_every == 0 || epoch == config.epochs {
            let rec = LossRecord {
                epoch,
                residual_loss: parts.residual,
                data_loss: parts.data,
            };
            progress(&rec);
            history.push(rec);
        }
    }

    Ok(TrainedModel {
        params,
        ctx: *ctx,
        domain: config.domain,
        loss_history: history,
        seed: config.seed,
        steps: adam.step_count(),
    })
}

fn abort(epoch: usize, collocation: usize, data: usize, cause: Error) -> Error {
    let (location, detail) = match cause {
        Error::NonFinite { location, detail } => (location, detail),
        other => (String::new(), other.to_string()),
    };
    Error::NonFinite {
        location: format!(
            "epoch {epoch} ({collocation} collocation, {data} data points) {location}"
        ),
        detail,
    }
}

impl TrainedModel {
    pub fn trial_u(&self, x: f64, tau: f64) -> Result<f64> {
        trial_u(&self.params, x, tau, &self.ctx)
    }

    /// Call price at spot `spot` and time `t` (years from series start).
    pub fn predict_option_price(&self, spot: f64, t: f64) -> Result<Prediction> {
        let x = self.ctx.to_x(spot)?;
        let tau = self.ctx.to_tau(t)?;
        let u = self.trial_u(x, tau)?;
        // the surrogate may dip below zero out of the money; prices cannot
        let price = self.ctx.c_from_u(&HeatPoint { x, tau, u }).max(0.0);
        Ok(Prediction {
            price,
            extrapolated: !self.domain.contains(x, tau),
        })
    }

    pub fn mean_squared_residual(&self, points: &[(f64, f64)]) -> Result<f64> {
        Ok(total_loss(&self.params, points, &[], 0.0, &self.ctx)?.residual)
    }

    /// Delimited history: `epoch,residual_loss,data_loss`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,residual_loss,data_loss\n");
        for r in &self.loss_history {
            let _ = writeln!(out, "{},{:e},{:e}", r.epoch, r.residual_loss, r.data_loss);
        }
        out
    }

    /// Checkpoint carrying the transform context and training box, plus any
    /// caller metadata.
    pub fn to_checkpoint(&self, extra: &[(String, String)]) -> Checkpoint {
        let c = &self.ctx;
        let d = &self.domain;
        let mut meta: Vec<(String, String)> = [
            ("strike", c.strike),
            ("rate", c.rate),
            ("sigma", c.sigma),
            ("expiry", c.expiry),
            ("x_min", d.x_min),
            ("x_max", d.x_max),
            ("tau_max", d.tau_max),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), format!("{v:e}")))
        .collect();
        meta.push(("collocation".into(), d.collocation_count.to_string()));
        meta.push(("sampling_seed".into(), d.seed.to_string()));
        meta.push(("sampling".into(), d.sampling.as_str().into()));
        meta.extend(extra.iter().cloned());
        Checkpoint {
            seed: self.seed,
            steps: self.steps,
            params: self.params.clone(),
            meta,
        }
    }

    /// Inverse of [`to_checkpoint`](Self::to_checkpoint); the loss history is
    /// not stored and comes back empty.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let num = |key: &str| -> Result<f64> {
            ck.meta(key)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("checkpoint lacks numeric `{key}`")))
        };
        let int = |key: &str| -> Result<u64> {
            ck.meta(key)
                .and_then(|v| v.parse::<u64>().ok())
                .ok_or_else(|| Error::Format(format!("checkpoint lacks integer `{key}`")))
        };
        let ctx =
            TransformContext::new(num("strike")?, num("rate")?, num("sigma")?, num("expiry")?)?;
        let mut domain = Domain2D::new(
            num("x_min")?,
            num("x_max")?,
            num("tau_max")?,
            int("collocation")? as usize,
            int("sampling_seed")?,
        )?;
        if let Some(s) = ck.meta("sampling") {
            domain.sampling = s.parse()?;
        }
        Ok(TrainedModel {
            params: ck.params.clone(),
            ctx,
            domain,
            loss_history: Vec::new(),
            seed: ck.seed,
            steps: ck.steps,
        })
    }
}
