use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use bspinn::fd::{
    crank_nicolson_solve, crank_nicolson_solve_with, error_vs_analytic, refinement_study, Field,
    Grid1D, HeatProblem,
};
use bspinn::heat::{HeatPoint, TransformContext};
use bspinn::market::{parse_series_csv, ContractTerms, OptionContract, QuoteRow, QuoteSeries};
use bspinn::metrics::{report_with, MetricsRow};
use bspinn::net::{AdamConfig, Checkpoint};
use bspinn::pinn::{train_with_progress, Domain2D, TrainConfig, TrainedModel};
use bspinn::pricing::{call_payoff, call_price, put_payoff, put_price, MarketParams, OptionKind};
use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::config::{hex, EvalWindow, InitialCondition, RunConfig};
use crate::{PriceArgs, VERSION};

pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PLOT_FILE: &str = "plot.csv";
pub const FIELD_FILE: &str = "field.csv";
pub const SERIES_FILE: &str = "series.csv";
pub const CONTRACT_FILE: &str = "contract.txt";

pub const PLOT_HEADER: &str = "date,spot,option_market,bls_analytic,nn_price";

pub fn price(args: &PriceArgs, out: &mut dyn Write) -> Result<()> {
    let (call, put) = if args.tenor == 0.0 {
        (
            call_payoff(args.spot, args.strike)?,
            put_payoff(args.spot, args.strike)?,
        )
    } else {
        let sigma = args
            .sigma
            .ok_or_else(|| anyhow!("--sigma is required when --tenor is not 0"))?;
        let p = MarketParams::new(args.spot, args.strike, args.rate, sigma, args.tenor)?;
        (call_price(&p)?, put_price(&p)?)
    };
    writeln!(out, "call {call:.6}")?;
    writeln!(out, "put {put:.6}")?;
    Ok(())
}

/// A validated contract with its series, ready for training or evaluation.
struct Prepared {
    series: QuoteSeries,
    contract: OptionContract,
    ctx: TransformContext,
    points: Vec<HeatPoint>,
    hash: String,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let series_path = cfg
        .data
        .series
        .as_ref()
        .ok_or_else(|| anyhow!("[data] series is not set"))?;
    let contract_path = cfg
        .data
        .contract
        .as_ref()
        .ok_or_else(|| anyhow!("[data] contract is not set"))?;
    let series = parse_series_csv(&read(series_path)?)
        .with_context(|| format!("invalid series {}", series_path.display()))?;
    let text = String::from_utf8(read(contract_path)?)
        .with_context(|| format!("{} is not UTF-8", contract_path.display()))?;
    let mut terms = ContractTerms::parse(&text)
        .with_context(|| format!("invalid contract {}", contract_path.display()))?;
    terms.rate = terms.rate.or(Some(cfg.market.rate));
    terms.basis = terms.basis.or(Some(cfg.market.basis));
    let contract = OptionContract::resolve(&terms, &series)?;
    ensure!(
        contract.kind == OptionKind::Call,
        "{} is a put; only calls are supported by the heat-equation model",
        contract.code
    );
    let start = series.start_date();
    let expiry = contract.year_fraction(start, contract.expiry_date)?;
    ensure!(
        expiry > 0.0,
        "series starts on the expiry date; nothing to fit"
    );
    let ctx = TransformContext::new(contract.strike, contract.rate, contract.sigma, expiry)?;
    let points = ctx.transform_series(&series, &contract)?;
    ensure!(
        cfg.data.holdout_rows < series.len(),
        "holdout_rows {} leaves no rows to train on",
        cfg.data.holdout_rows
    );
    let hash = contract_hash(&contract, start);
    Ok(Prepared {
        series,
        contract,
        ctx,
        points,
        hash,
    })
}

/// Identifies the contract terms a checkpoint was trained against.
pub fn contract_hash(c: &OptionContract, start: NaiveDate) -> String {
    let key = format!(
        "{}|{:e}|{}|{:e}|{:e}|{:e}|{}",
        c.code, c.strike, c.expiry_date, c.rate, c.sigma, c.basis, start
    );
    hex(&Sha256::digest(key.as_bytes()))
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let prep = prepare(cfg)?;
    let n_train = prep.points.len() - cfg.data.holdout_rows;
    let data = &prep.points[..n_train];
    let t = &cfg.training;
    let mut domain = Domain2D::around_data(
        data,
        &prep.ctx,
        t.x_margin,
        t.collocation_count,
        t.sampling_seed,
    )?;
    domain.sampling = t.sampling;
    let config = TrainConfig {
        epochs: t.epochs,
        lambda_data: t.lambda_data,
        adam: AdamConfig {
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
        },
        domain,
        record_every: cfg.output.record_every,
        seed: cfg.model.seed,
        hidden: cfg.model.hidden,
    };
    let report_every = (t.epochs / 10).max(1);
    let model = train_with_progress(&config, data, &prep.ctx, |r| {
        if r.epoch == 1 || r.epoch % report_every == 0 {
            eprintln!(
                "epoch {:>6}  residual {:.4e}  data {:.4e}",
                r.epoch, r.residual_loss, r.data_loss
            );
        }
    })?;

    let c = &prep.contract;
    let extra: Vec<(String, String)> = [
        ("code", c.code.clone()),
        ("expiry_date", c.expiry_date.to_string()),
        ("series_start", prep.series.start_date().to_string()),
        ("contract_hash", prep.hash.clone()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let last = model.loss_history.last().copied();
    let mut manifest = String::from("bspinn-run 1\n");
    let _ = writeln!(manifest, "version {VERSION}");
    let _ = writeln!(manifest, "command train");
    let _ = writeln!(manifest, "config_hash {}", cfg.hash);
    let _ = writeln!(manifest, "contract_hash {}", prep.hash);
    let _ = writeln!(manifest, "seed {}", cfg.model.seed);
    let _ = writeln!(manifest, "sampling_seed {}", t.sampling_seed);
    let _ = writeln!(manifest, "epochs {}", model.steps);
    let _ = writeln!(manifest, "training_rows {n_train}");
    if let Some(r) = last {
        let _ = writeln!(manifest, "last_recorded_epoch {}", r.epoch);
        let _ = writeln!(manifest, "residual_loss {:e}", r.residual_loss);
        let _ = writeln!(manifest, "data_loss {:e}", r.data_loss);
    }

    let dir = cfg.output_dir();
    let ck = write_output(
        &dir,
        CHECKPOINT_FILE,
        &model.to_checkpoint(&extra).to_text(),
    )?;
    write_output(&dir, HISTORY_FILE, &model.history_csv())?;
    write_output(&dir, MANIFEST_FILE, &manifest)?;
    writeln!(
        out,
        "trained {} epochs on {} rows of {}",
        model.steps, n_train, c.code
    )?;
    if let Some(r) = last {
        writeln!(out, "residual_loss {:e}", r.residual_loss)?;
        writeln!(out, "data_loss {:e}", r.data_loss)?;
    }
    writeln!(out, "checkpoint {}", ck.display())?;
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let prep = prepare(cfg)?;
    let dir = cfg.output_dir();
    let ck_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join(CHECKPOINT_FILE));
    let text = std::fs::read_to_string(&ck_path)
        .with_context(|| format!("cannot read {}", ck_path.display()))?;
    let ck = Checkpoint::parse(&text)
        .with_context(|| format!("invalid checkpoint {}", ck_path.display()))?;
    match ck.meta("contract_hash") {
        Some(h) if h == prep.hash => {}
        Some(_) => bail!(
            "checkpoint {} was trained for different contract terms than {}",
            ck_path.display(),
            prep.contract.code
        ),
        None => bail!(
            "checkpoint {} does not record its contract",
            ck_path.display()
        ),
    }
    let model = TrainedModel::from_checkpoint(&ck)?;

    let rows = prep.series.rows();
    let first = match cfg.data.eval_window {
        EvalWindow::All => 0,
        EvalWindow::Holdout => {
            ensure!(
                cfg.data.holdout_rows > 0,
                "eval_window = holdout needs holdout_rows > 0"
            );
            rows.len() - cfg.data.holdout_rows
        }
    };
    let c = &prep.contract;
    let start = prep.series.start_date();
    let mut plot = format!("{PLOT_HEADER}\n");
    let (mut actual, mut predicted) = (Vec::new(), Vec::new());
    for row in &rows[first..] {
        let ttm = c.time_to_maturity(row.date)?;
        let bls = if ttm == 0.0 {
            call_payoff(row.spot_close, c.strike)?
        } else {
            call_price(&MarketParams::new(
                row.spot_close,
                c.strike,
                c.rate,
                c.sigma,
                ttm,
            )?)?
        };
        let t = c.year_fraction(start, row.date)?.min(prep.ctx.expiry);
        let nn = model.predict_option_price(row.spot_close, t)?.price;
        let _ = writeln!(
            plot,
            "{},{},{},{},{}",
            row.date, row.spot_close, row.option_close, bls, nn
        );
        actual.push(row.option_close);
        predicted.push(nn);
    }
    let report = report_with(&actual, &predicted, cfg.output.arv_denominator)?;
    let metrics = MetricsRow {
        code: c.code.clone(),
        strike: c.strike,
        report,
    };
    let table = format!("{}\n{metrics}\n", MetricsRow::HEADER);
    write_output(&dir, METRICS_FILE, &table)?;
    let plot_path = write_output(&dir, PLOT_FILE, &plot)?;
    out.write_all(table.as_bytes())?;
    writeln!(out, "plot data {}", plot_path.display())?;
    Ok(())
}

/// Zero initial data with zero boundaries.
struct Quiescent;

impl HeatProblem for Quiescent {
    fn initial(&self, _: f64) -> f64 {
        0.0
    }
    fn left(&self, _: f64) -> f64 {
        0.0
    }
    fn right(&self, _: f64) -> f64 {
        0.0
    }
}

pub fn oracle(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let o = &cfg.oracle;
    let ctx = TransformContext::new(o.strike, cfg.oracle_rate(), o.sigma, o.expiry)?;
    let tau_max = 0.5 * o.sigma * o.sigma * o.expiry;
    let grid = Grid1D::new(o.x_min, o.x_max, o.nodes, tau_max, o.steps)?;
    writeln!(
        out,
        "grid {} nodes x {} steps, x in [{}, {}], tau_max {}",
        o.nodes, o.steps, o.x_min, o.x_max, tau_max
    )?;
    let field: Field = match o.initial {
        InitialCondition::Payoff => {
            let field = crank_nicolson_solve(&grid, &ctx)?;
            let err = error_vs_analytic(&field, &ctx)?;
            writeln!(out, "max_abs {:e}", err.max_abs)?;
            writeln!(out, "l2 {:e}", err.l2)?;
            if o.refine {
                let study = refinement_study(&grid, &ctx)?;
                writeln!(out, "refined_max_abs {:e}", study.fine.max_abs)?;
                writeln!(out, "ratio {:.4}", study.ratio())?;
            }
            field
        }
        InitialCondition::Zero => {
            let field = crank_nicolson_solve_with(&grid, &Quiescent)?;
            let peak = field
                .values
                .iter()
                .flatten()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            writeln!(out, "max_abs_value {peak:e}")?;
            field
        }
    };
    let path = write_output(&cfg.output_dir(), FIELD_FILE, &field.to_csv())?;
    writeln!(out, "field {}", path.display())?;
    Ok(())
}

/// `count` consecutive weekdays starting at (or after) `start`.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut days = Vec::with_capacity(count);
    let mut d = start;
    while days.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            days.push(d);
        }
        d += Duration::days(1);
    }
    days
}

/// Geometric Brownian spot path with closed-form call prices; the last day is
/// expiry.
pub fn synthesize(cfg: &RunConfig) -> Result<(QuoteSeries, ContractTerms)> {
    let s = &cfg.synth;
    let (rate, basis) = (cfg.market.rate, cfg.market.basis);
    let dates = business_days(s.start, s.days);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    // a separate stream keeps the spot path independent of the noise setting
    let mut noise_rng = ChaCha8Rng::seed_from_u64(s.seed);
    noise_rng.set_stream(1);
    let dt = 1.0 / basis;
    let drift = (s.mu - 0.5 * s.sigma * s.sigma) * dt;
    let mut spot = s.spot0;
    let mut rows = Vec::with_capacity(dates.len());
    for (i, &date) in dates.iter().enumerate() {
        if i > 0 {
            let z: f64 = rng.sample(StandardNormal);
            spot *= (drift + s.sigma * dt.sqrt() * z).exp();
        }
        let ttm = (dates.len() - 1 - i) as f64 / basis;
        let fair = if ttm == 0.0 {
            call_payoff(spot, s.strike)?
        } else {
            call_price(&MarketParams::new(spot, s.strike, rate, s.sigma, ttm)?)?
        };
        let option_close = if s.noise > 0.0 {
            (fair + noise_rng.random_range(-s.noise..=s.noise)).max(0.0)
        } else {
            fair
        };
        rows.push(QuoteRow {
            date,
            spot_close: spot,
            option_close,
        });
    }
    let terms = ContractTerms {
        code: s.code.clone(),
        strike: s.strike,
        expiry: *dates.last().expect("at least two days"),
        rate: Some(rate),
        sigma: Some(s.sigma),
        basis: Some(basis),
    };
    Ok((QuoteSeries::new(rows)?, terms))
}

pub fn synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let (series, terms) = synthesize(cfg)?;
    let dir = cfg.output_dir();
    let series_path = write_output(&dir, SERIES_FILE, &series.to_csv())?;
    let contract_path = write_output(&dir, CONTRACT_FILE, &terms.to_text())?;
    writeln!(
        out,
        "{} rows {} to {}",
        series.len(),
        series.start_date(),
        series.end_date()
    )?;
    writeln!(out, "series {}", series_path.display())?;
    writeln!(out, "contract {}", contract_path.display())?;
    Ok(())
}
