use bspinn::metrics::{
    arv, arv_with, mae, mape, mse, pocid, report_all, ArvDenominator, SeriesPair,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Literal transcriptions of the definitions, one index at a time.
mod brute {
    pub fn mae(y: &[f64], p: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..y.len() {
            s += (y[i] - p[i]).abs();
        }
        s / y.len() as f64
    }
    pub fn mse(y: &[f64], p: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..y.len() {
            s += (y[i] - p[i]).powi(2);
        }
        s / y.len() as f64
    }
    pub fn mape(y: &[f64], p: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..y.len() {
            s += ((y[i] - p[i]) / y[i]).abs();
        }
        s / y.len() as f64
    }
    pub fn pocid(y: &[f64], p: &[f64]) -> f64 {
        let mut d = 0.0;
        for i in 1..y.len() {
            if (y[i] - y[i - 1]) * (p[i] - p[i - 1]) > 0.0 {
                d += 1.0;
            }
        }
        100.0 * d / (y.len() - 1) as f64
    }
    pub fn arv(y: &[f64], p: &[f64], about_predicted: bool) -> f64 {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..y.len() {
            num += (p[i] - y[i]).powi(2);
            let z = if about_predicted { p[i] } else { y[i] };
            den += (z - mean).powi(2);
        }
        (1.0 / n) * num / den
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn matches_brute_force_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let n = rng.random_range(2..40);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..20.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
        let pair = SeriesPair::new(&y, &p).unwrap();
        assert!(close(mae(&pair), brute::mae(&y, &p)));
        assert!(close(mse(&pair), brute::mse(&y, &p)));
        assert!(close(mape(&pair).unwrap(), brute::mape(&y, &p)));
        assert_eq!(pocid(&pair), brute::pocid(&y, &p));
        assert!(close(arv(&pair).unwrap(), brute::arv(&y, &p, true)));
        assert!(close(
            arv_with(&pair, ArvDenominator::Actual).unwrap(),
            brute::arv(&y, &p, false)
        ));
    }
}

#[test]
fn report_agrees_with_individual_measures() {
    let y = [3.0, 5.0, 4.0, 6.0, 7.5];
    let p = [2.5, 5.5, 4.5, 5.0, 8.0];
    let pair = SeriesPair::new(&y, &p).unwrap();
    let r = report_all(&y, &p).unwrap();
    assert_eq!(r.mae, mae(&pair));
    assert_eq!(r.mse, mse(&pair));
    assert_eq!(r.mape, Some(mape(&pair).unwrap()));
    assert_eq!(r.pocid, pocid(&pair));
    assert_eq!(r.arv, Some(arv(&pair).unwrap()));
    assert_eq!(r.n, 5);
}

proptest! {
    #[test]
    fn pointwise_measures_ignore_order(
        pairs in prop::collection::vec((0.5f64..50.0, 0.0f64..50.0), 2..30),
        seed in any::<u64>(),
    ) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let mut order: Vec<usize> = (0..y.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let ps: Vec<f64> = order.iter().map(|&i| p[i]).collect();
        let a = SeriesPair::new(&y, &p).unwrap();
        let b = SeriesPair::new(&ys, &ps).unwrap();
        prop_assert!(close(mae(&a), mae(&b)));
        prop_assert!(close(mse(&a), mse(&b)));
        prop_assert!(close(mape(&a).unwrap(), mape(&b).unwrap()));
        if let (Ok(x), Ok(z)) = (arv(&a), arv(&b)) {
            prop_assert!(close(x, z));
        }
    }

    #[test]
    fn bounds_hold(pairs in prop::collection::vec((0.5f64..50.0, 0.0f64..50.0), 2..30)) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let pair = SeriesPair::new(&y, &p).unwrap();
        let pc = pocid(&pair);
        prop_assert!((0.0..=100.0).contains(&pc));
        let m = mse(&pair);
        prop_assert!(m >= 0.0);
        prop_assert_eq!(m == 0.0, y == p);
        if let Ok(v) = arv(&pair) {
            prop_assert!(v >= 0.0);
        }
    }
}
