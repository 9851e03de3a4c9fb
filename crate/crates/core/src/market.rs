//! Market inputs: quote series, contract terms, Brazilian option codes,
//! historical volatility and the trading-day calendar.

use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate, Weekday};

use crate::error::{Error, Result};
use crate::pricing::OptionKind;

/// SELIC rate used when a contract does not override it.
pub const DEFAULT_RATE: f64 = 0.1375;
pub const DEFAULT_BASIS: f64 = 252.0;

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteRow {
    pub date: NaiveDate,
    pub spot_close: f64,
    pub option_close: f64,
}

/// Dated spot and option closes for one contract, strictly increasing in date.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSeries {
    rows: Vec<QuoteRow>,
}

impl QuoteSeries {
    /// Sorts by date and validates. Row errors cite the 1-based position in
    /// the input order.
    pub fn new(mut rows: Vec<QuoteRow>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            validate_row(row).map_err(|message| Error::Row {
                line: i + 1,
                message,
            })?;
        }
        rows.sort_by_key(|r| r.date);
        Self::from_sorted(rows)
    }

    fn from_sorted(rows: Vec<QuoteRow>) -> Result<Self> {
        if let Some(w) = rows.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(Error::Format(format!("duplicate date {}", w[0].date)));
        }
        if rows.len() < 2 {
            return Err(Error::Format(format!(
                "series needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        Ok(QuoteSeries { rows })
    }

    pub fn rows(&self) -> &[QuoteRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn start_date(&self) -> NaiveDate {
        self.rows[0].date
    }

    pub fn end_date(&self) -> NaiveDate {
        self.rows[self.rows.len() - 1].date
    }

    pub fn spots(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.spot_close).collect()
    }

    pub fn option_prices(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.option_close).collect()
    }

    /// Serializes in the same layout [`parse_series_csv`] reads.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,spot_close,option_close\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{}",
                r.date.format(DATE_FORMAT),
                r.spot_close,
                r.option_close
            );
        }
        out
    }
}

fn validate_row(row: &QuoteRow) -> std::result::Result<(), String> {
    if !(row.spot_close.is_finite() && row.spot_close > 0.0) {
        return Err(format!(
            "spot_close must be positive, got {}",
            row.spot_close
        ));
    }
    if !(row.option_close.is_finite() && row.option_close >= 0.0) {
        return Err(format!(
            "option_close must be non-negative, got {}",
            row.option_close
        ));
    }
    Ok(())
}

/// Parses a comma-separated series with a header naming `date`, `spot_close`
/// and `option_close` (any order, extra columns ignored).
pub fn parse_series_csv(bytes: &[u8]) -> Result<QuoteSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
    };
    let (date_col, spot_col, option_col) = (
        column("date")?,
        column("spot_close")?,
        column("option_close")?,
    );

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Row {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |col: usize| record.get(col).unwrap_or("");
        let row_err = |message: String| Error::Row { line, message };

        let date = NaiveDate::parse_from_str(field(date_col), DATE_FORMAT)
            .map_err(|e| row_err(format!("bad date `{}`: {e}", field(date_col))))?;
        let number = |col: usize, name: &str| -> Result<f64> {
            field(col)
                .parse::<f64>()
                .map_err(|_| row_err(format!("bad {name} `{}`", field(col))))
        };
        let row = QuoteRow {
            date,
            spot_close: number(spot_col, "spot_close")?,
            option_close: number(option_col, "option_close")?,
        };
        validate_row(&row).map_err(row_err)?;
        rows.push(row);
    }
    rows.sort_by_key(|r| r.date);
    QuoteSeries::from_sorted(rows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionCode {
    pub underlying: String,
    pub kind: OptionKind,
    pub series_hint: String,
}

/// Splits a B3 option code: four-letter root, a series letter (A-L calls,
/// M-X puts), then two or three digits.
pub fn parse_option_code(code: &str) -> Result<OptionCode> {
    let bad = |why: &str| Error::Format(format!("option code `{code}`: {why}"));
    let bytes = code.as_bytes();
    if !(6..=8).contains(&bytes.len()) || !code.is_ascii() {
        return Err(bad("expected 4 letters, a series letter and 2-3 digits"));
    }
    let (root, rest) = code.split_at(4);
    if !root.bytes().all(|b| b.is_ascii_alphanumeric()) || !root.as_bytes()[0].is_ascii_alphabetic()
    {
        return Err(bad("root must be four alphanumeric characters"));
    }
    let letter = rest.as_bytes()[0].to_ascii_uppercase();
    let digits = &rest[1..];
    if !(2..=3).contains(&digits.len()) || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("expected 2-3 trailing digits"));
    }
    let kind = match letter {
        b'A'..=b'L' => OptionKind::Call,
        b'M'..=b'X' => OptionKind::Put,
        _ => return Err(bad("series letter must be within A-X")),
    };
    Ok(OptionCode {
        underlying: root.to_ascii_uppercase(),
        kind,
        series_hint: digits.to_string(),
    })
}

/// Annualized sample standard deviation of log returns.
pub fn estimate_volatility(spot: &[f64], basis: f64) -> Result<f64> {
    if spot.len() < 3 {
        return Err(Error::domain(format!(
            "volatility needs at least 3 prices, got {}",
            spot.len()
        )));
    }
    if let Some(i) = spot.iter().position(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::domain(format!(
            "price {} at index {i} is not positive",
            spot[i]
        )));
    }
    if !(basis.is_finite() && basis > 0.0) {
        return Err(Error::domain(format!(
            "basis must be positive, got {basis}"
        )));
    }
    let returns: Vec<f64> = spot.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() * basis.sqrt())
}

/// Weekdays in `(from, to]`. Holidays are not modelled.
pub fn trading_days_between(from: NaiveDate, to: NaiveDate) -> Result<i64> {
    if from > to {
        return Err(Error::domain(format!("{from} is after {to}")));
    }
    let days = (to - from).num_days();
    let (weeks, rem) = (days / 7, days % 7);
    let mut count = weeks * 5;
    let mut wd = from.weekday();
    for _ in 0..rem {
        wd = wd.succ();
        if !matches!(wd, Weekday::Sat | Weekday::Sun) {
            count += 1;
        }
    }
    Ok(count)
}

pub fn time_to_maturity(date: NaiveDate, expiry: NaiveDate, basis: f64) -> Result<f64> {
    if !(basis.is_finite() && basis > 0.0) {
        return Err(Error::domain(format!(
            "basis must be positive, got {basis}"
        )));
    }
    Ok(trading_days_between(date, expiry)? as f64 / basis)
}

/// Terms read from a contract sidecar file; optional fields fall back to
/// defaults when resolved against a series.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractTerms {
    pub code: String,
    pub strike: f64,
    pub expiry: NaiveDate,
    pub rate: Option<f64>,
    pub sigma: Option<f64>,
    pub basis: Option<f64>,
}

impl ContractTerms {
    /// Parses `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut code = None;
        let mut strike = None;
        let mut expiry = None;
        let (mut rate, mut sigma, mut basis) = (None, None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Row {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let num = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("bad number for `{key}`: `{value}`")))
            };
            match key {
                "code" => code = Some(value.to_string()),
                "strike" => strike = Some(num()?),
                "expiry" => {
                    expiry = Some(
                        NaiveDate::parse_from_str(value, DATE_FORMAT)
                            .map_err(|e| err(format!("bad expiry `{value}`: {e}")))?,
                    )
                }
                "rate" => rate = Some(num()?),
                "sigma" => sigma = Some(num()?),
                "basis" => basis = Some(num()?),
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("contract file is missing `{k}`"));
        let terms = ContractTerms {
            code: code.ok_or_else(|| missing("code"))?,
            strike: strike.ok_or_else(|| missing("strike"))?,
            expiry: expiry.ok_or_else(|| missing("expiry"))?,
            rate,
            sigma,
            basis,
        };
        if terms.strike <= 0.0 {
            return Err(Error::domain(format!(
                "strike must be positive, got {}",
                terms.strike
            )));
        }
        Ok(terms)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "code = {}\nstrike = {}\nexpiry = {}\n",
            self.code,
            self.strike,
            self.expiry.format(DATE_FORMAT)
        );
        for (key, value) in [
            ("rate", self.rate),
            ("sigma", self.sigma),
            ("basis", self.basis),
        ] {
            if let Some(v) = value {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionContract {
    pub underlying: String,
    pub code: String,
    pub kind: OptionKind,
    pub strike: f64,
    pub expiry_date: NaiveDate,
    pub rate: f64,
    pub sigma: f64,
    pub basis: f64,
}

impl OptionContract {
    /// Fills in rate, basis and volatility and checks the series against the
    /// contract. Volatility is estimated over the whole spot history unless the
    /// terms override it.
    pub fn resolve(terms: &ContractTerms, series: &QuoteSeries) -> Result<Self> {
        let (underlying, kind) = match parse_option_code(&terms.code) {
            Ok(parsed) => (parsed.underlying, parsed.kind),
            Err(_) => (terms.code.clone(), OptionKind::Call),
        };
        let basis = terms.basis.unwrap_or(DEFAULT_BASIS);
        let sigma = match terms.sigma {
            Some(s) => s,
            None => estimate_volatility(&series.spots(), basis)?,
        };
        if !(sigma > 0.0) {
            return Err(Error::domain(format!(
                "volatility resolved to {sigma}; set `sigma` in the contract file"
            )));
        }
        if series.end_date() > terms.expiry {
            return Err(Error::domain(format!(
                "series runs to {} past expiry {}",
                series.end_date(),
                terms.expiry
            )));
        }
        Ok(OptionContract {
            underlying,
            code: terms.code.clone(),
            kind,
            strike: terms.strike,
            expiry_date: terms.expiry,
            rate: terms.rate.unwrap_or(DEFAULT_RATE),
            sigma,
            basis,
        })
    }

    pub fn time_to_maturity(&self, date: NaiveDate) -> Result<f64> {
        time_to_maturity(date, self.expiry_date, self.basis)
    }

    /// Years elapsed from `start` to `date` on the contract's day count.
    pub fn year_fraction(&self, start: NaiveDate, date: NaiveDate) -> Result<f64> {
        Ok(trading_days_between(start, date)? as f64 / self.basis)
    }
}
