//! Forecast error measures over an actual series `Y` and a predicted series
//! `Y_hat`: MAE, MSE, MAPE, POCID and ARV.

use std::fmt;

use crate::error::{Error, Result};

/// Guard for the ARV denominator.
pub const ARV_DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct SeriesPair<'a> {
    actual: &'a [f64],
    predicted: &'a [f64],
}

impl<'a> SeriesPair<'a> {
    pub fn new(actual: &'a [f64], predicted: &'a [f64]) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "actual has {} points, predicted has {}",
                actual.len(),
                predicted.len()
            )));
        }
        if actual.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least 2 points, got {}",
                actual.len()
            )));
        }
        Ok(SeriesPair { actual, predicted })
    }

    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + 'a {
        self.actual
            .iter()
            .copied()
            .zip(self.predicted.iter().copied())
    }
}

/// Which mean-deviation the ARV denominator sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArvDenominator {
    /// `sum (Y_hat_i - mean(Y))^2`, the form printed with the measure.
    #[default]
    Predicted,
    /// `sum (Y_i - mean(Y))^2`, the conventional mean-predictor baseline.
    Actual,
}

pub fn mae(pair: &SeriesPair) -> f64 {
    pair.pairs().map(|(y, p)| (y - p).abs()).sum::<f64>() / pair.len() as f64
}

pub fn mse(pair: &SeriesPair) -> f64 {
    pair.pairs().map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / pair.len() as f64
}

/// Mean absolute percentage error as a fraction (not multiplied by 100).
pub fn mape(pair: &SeriesPair) -> Result<f64> {
    if let Some(i) = pair.actual.iter().position(|&y| y == 0.0) {
        return Err(Error::domain(format!(
            "MAPE undefined: actual value at index {i} is zero"
        )));
    }
    Ok(pair.pairs().map(|(y, p)| ((y - p) / y).abs()).sum::<f64>() / pair.len() as f64)
}

/// Percentage of steps `i = 2..N` where actual and predicted move in the same
/// strict direction. Flat steps count as misses.
pub fn pocid(pair: &SeriesPair) -> f64 {
    let (y, p) = (pair.actual, pair.predicted);
    let hits = (1..y.len())
        .filter(|&i| (y[i] - y[i - 1]) * (p[i] - p[i - 1]) > 0.0)
        .count();
    100.0 * hits as f64 / (y.len() - 1) as f64
}

pub fn arv(pair: &SeriesPair) -> Result<f64> {
    arv_with(pair, ArvDenominator::Predicted)
}

pub fn arv_with(pair: &SeriesPair, denominator: ArvDenominator) -> Result<f64> {
    let n = pair.len() as f64;
    let mean = pair.actual.iter().sum::<f64>() / n;
    let numerator: f64 = pair.pairs().map(|(y, p)| (p - y) * (p - y)).sum();
    let denom: f64 = match denominator {
        ArvDenominator::Predicted => pair.predicted.iter().map(|p| (p - mean) * (p - mean)).sum(),
        ArvDenominator::Actual => pair.actual.iter().map(|y| (y - mean) * (y - mean)).sum(),
    };
    if denom < ARV_DEGENERATE_EPS {
        return Err(Error::domain(format!(
            "ARV undefined: degenerate denominator {denom:e}"
        )));
    }
    Ok(numerator / (n * denom))
}

/// All five measures for one evaluated series. A measure whose domain check
/// fails is `None`; the others are still reported.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub mape: Option<f64>,
    pub pocid: f64,
    pub arv: Option<f64>,
    pub n: usize,
}

pub fn report_all(actual: &[f64], predicted: &[f64]) -> Result<MetricsReport> {
    report_with(actual, predicted, ArvDenominator::Predicted)
}

pub fn report_with(
    actual: &[f64],
    predicted: &[f64],
    denominator: ArvDenominator,
) -> Result<MetricsReport> {
    let pair = SeriesPair::new(actual, predicted)?;
    Ok(MetricsReport {
        mae: mae(&pair),
        mse: mse(&pair),
        mape: mape(&pair).ok(),
        pocid: pocid(&pair),
        arv: arv_with(&pair, denominator).ok(),
        n: pair.len(),
    })
}

/// One row of the per-contract metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub code: String,
    pub strike: f64,
    pub report: MetricsReport,
}

impl MetricsRow {
    pub const HEADER: &'static str = "code,K,MAE,MSE,MAPE,POCID,ARV,N";
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

impl fmt::Display for MetricsRow {
    /// Comma-separated, full precision, `NA` for unavailable measures.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.report;
        write!(
            f,
            "{},{},{},{},{},{},{},{}",
            self.code,
            self.strike,
            r.mae,
            r.mse,
            opt(r.mape),
            r.pocid,
            opt(r.arv),
            r.n
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair<'a>(y: &'a [f64], p: &'a [f64]) -> SeriesPair<'a> {
        SeriesPair::new(y, p).unwrap()
    }

    #[test]
    fn worked_examples() {
        // directions (+, -, +) against (+, +, +): steps 1 and 3 agree
        assert_eq!(mae(&pair(&[0.0, 0.0], &[1.0, 3.0])), 2.0);
        assert_eq!(mse(&pair(&[0.0, 0.0], &[1.0, 3.0])), 5.0);
        assert_eq!(mape(&pair(&[2.0, 4.0], &[1.0, 2.0])).unwrap(), 0.5);
        assert_abs_diff_eq!(
            pocid(&pair(&[1.0, 2.0, 1.0, 2.0], &[0.0, 1.0, 2.0, 3.0])),
            200.0 / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            arv(&pair(&[1.0, 3.0], &[2.0, 4.0])).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identical_series() {
        let y = [1.0, 3.0, 2.0, 5.0];
        let r = report_all(&y, &y).unwrap();
        assert_eq!(
            r,
            MetricsReport {
                mae: 0.0,
                mse: 0.0,
                mape: Some(0.0),
                pocid: 100.0,
                arv: Some(0.0),
                n: 4
            }
        );
    }

    #[test]
    fn opposite_directions() {
        let y = [1.0, 2.0, 4.0, 7.0];
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert_eq!(pocid(&pair(&y, &neg)), 0.0);
    }

    #[test]
    fn flat_steps_are_misses() {
        assert_eq!(pocid(&pair(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0])), 50.0);
    }

    #[test]
    fn guards() {
        assert!(mape(&pair(&[0.0, 1.0], &[1.0, 1.0])).is_err());
        assert!(arv(&pair(&[1.0, 3.0], &[2.0, 2.0])).is_err());
        assert!(SeriesPair::new(&[1.0, 2.0], &[1.0]).is_err());
        assert!(SeriesPair::new(&[1.0], &[1.0]).is_err());
        assert!(report_all(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn report_marks_unavailable_fields() {
        let r = report_all(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(r.mape, None);
        // predicted constant at mean(Y) = 0.5
        assert_eq!(r.arv, None);
        assert_eq!(r.mae, 0.5);
        let row = MetricsRow {
            code: "X".into(),
            strike: 1.0,
            report: r,
        };
        assert_eq!(row.to_string(), "X,1,0.5,0.25,NA,0,NA,2");
    }

    #[test]
    fn report_example() {
        let r = report_all(&[2.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(
            (r.mae, r.mse, r.mape, r.pocid),
            (1.5, 2.5, Some(0.5), 100.0)
        );
        // mean(Y) = 3, numerator 1 + 4 = 5, denominator 4 + 1 = 5
        assert_abs_diff_eq!(r.arv.unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn arv_actual_denominator() {
        // mean(Y) = 2, numerator 2, actual denominator 1 + 1 = 2
        let v = arv_with(&pair(&[1.0, 3.0], &[2.0, 4.0]), ArvDenominator::Actual).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn symmetry_witnesses() {
        let (y, p) = ([1.0, 2.0, 4.0], [2.0, 2.5, 3.0]);
        assert_eq!(mae(&pair(&y, &p)), mae(&pair(&p, &y)));
        assert_eq!(mse(&pair(&y, &p)), mse(&pair(&p, &y)));
        assert_ne!(mape(&pair(&y, &p)).unwrap(), mape(&pair(&p, &y)).unwrap());
        assert_ne!(arv(&pair(&y, &p)).unwrap(), arv(&pair(&p, &y)).unwrap());
    }
}
