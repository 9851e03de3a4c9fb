use approx::{assert_abs_diff_eq, assert_relative_eq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Deliberately naive forward pass written from the layer formula.
fn naive_forward(p: &MlpParams, x: f64, tau: f64) -> f64 {
    let h = p.hidden();
    let mut a1 = vec![0.0; h];
    for i in 0..h {
        a1[i] = (p.w1()[i * 2] * x + p.w1()[i * 2 + 1] * tau + p.b1()[i]).tanh();
    }
    let mut a2 = vec![0.0; h];
    for i in 0..h {
        let mut z = p.b2()[i];
        for j in 0..h {
            z += p.w2()[i * h + j] * a1[j];
        }
        a2[i] = z.tanh();
    }
    let mut u = p.b3();
    for i in 0..h {
        u += p.w3()[i] * a2[i];
    }
    u
}

/// Random parameters with larger spread than Glorot so curvature is visible.
fn random_params(seed: u64, hidden: usize) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = MlpParams::param_count(hidden);
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    MlpParams::from_vec(hidden, data).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn init_is_deterministic_and_bounded() {
    let a = MlpParams::init(42, DEFAULT_HIDDEN);
    let b = MlpParams::init(42, DEFAULT_HIDDEN);
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_ne!(
        MlpParams::init(1, DEFAULT_HIDDEN),
        MlpParams::init(2, DEFAULT_HIDDEN)
    );

    let bound1 = (6.0f64 / 34.0).sqrt();
    assert!(a.w1().iter().all(|w| w.abs() <= bound1));
    let bound2 = (6.0f64 / 64.0).sqrt();
    assert!(a.w2().iter().all(|w| w.abs() <= bound2));
    assert!(a.b1().iter().chain(a.b2()).all(|&b| b == 0.0));
    assert_eq!(a.b3(), 0.0);
    assert_eq!(a.as_slice().len(), 1185);
    assert_eq!(a.architecture(), "2-32-32-1-tanh");
}

#[test]
fn zero_network() {
    let p = MlpParams::zeros(DEFAULT_HIDDEN);
    assert_eq!(p.forward(0.3, 0.1).unwrap(), 0.0);
    assert_eq!(
        p.forward_with_input_derivs(-2.0, 5.0).unwrap(),
        InputDerivs::default()
    );
}

#[test]
fn constant_network() {
    let mut p = MlpParams::zeros(8);
    *p.parts_mut().5 = 1.75;
    let d = p.forward_with_input_derivs(0.4, 0.02).unwrap();
    assert_eq!(
        d,
        InputDerivs {
            u: 1.75,
            u_x: 0.0,
            u_tau: 0.0,
            u_xx: 0.0
        }
    );
}

#[test]
fn forward_matches_naive_and_is_bounded() {
    for seed in 0..10 {
        let p = random_params(seed, DEFAULT_HIDDEN);
        let bound = p.b3().abs() + p.w3().iter().map(|w| w.abs()).sum::<f64>();
        for &(x, t) in &[(0.3, 0.1), (-1.2, 0.0), (5.0, 2.0)] {
            let u = p.forward(x, t).unwrap();
            assert_abs_diff_eq!(u, naive_forward(&p, x, t), epsilon = 1e-15);
            let d = p.forward_with_input_derivs(x, t).unwrap();
            assert_abs_diff_eq!(d.u, u, epsilon = 1e-14);
            assert!(u.abs() <= bound);
        }
    }
    let p = random_params(0, 4);
    assert!(p.forward(f64::NAN, 0.0).is_err());
    assert!(p.forward_with_input_derivs(0.0, f64::INFINITY).is_err());
}

#[test]
fn input_derivatives_match_central_differences() {
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..100 {
        let p = random_params(1000 + seed, DEFAULT_HIDDEN);
        let (x, t) = (rng.random_range(-1.5..1.5), rng.random_range(0.0..0.5));
        let d = p.forward_with_input_derivs(x, t).unwrap();
        let f = |x: f64, t: f64| naive_forward(&p, x, t);
        let ux = (f(x + h, t) - f(x - h, t)) / (2.0 * h);
        let ut = (f(x, t + h) - f(x, t - h)) / (2.0 * h);
        let uxx = (f(x + h, t) - 2.0 * f(x, t) + f(x - h, t)) / (h * h);
        assert!(rel_err(d.u_x, ux) < 1e-5, "u_x {} vs {}", d.u_x, ux);
        assert!(rel_err(d.u_tau, ut) < 1e-5, "u_tau {} vs {}", d.u_tau, ut);
        assert!(rel_err(d.u_xx, uxx) < 1e-4, "u_xx {} vs {}", d.u_xx, uxx);
    }
}

/// Sum over points of a fixed combination of all four forward outputs, squared.
struct MixedLoss {
    points: Vec<(f64, f64)>,
    weights: InputDerivs,
}

impl LossEvaluator for MixedLoss {
    fn evaluate(&self, p: &MlpParams, mut grad: Option<&mut MlpParams>) -> Result<f64> {
        let mut tape = Tape::new(p.hidden());
        let w = self.weights;
        let mut total = 0.0;
        for &(x, t) in &self.points {
            let d = tape.forward(p, x, t);
            let e = w.u * d.u + w.u_x * d.u_x + w.u_tau * d.u_tau + w.u_xx * d.u_xx;
            total += e * e;
            if let Some(g) = grad.as_deref_mut() {
                let s = 2.0 * e;
                let seeds = OutputSeeds {
                    u: s * w.u,
                    u_x: s * w.u_x,
                    u_tau: s * w.u_tau,
                    u_xx: s * w.u_xx,
                };
                tape.backward(p, &seeds, g);
            }
        }
        Ok(total)
    }
}

fn fd_gradient<L: LossEvaluator>(p: &MlpParams, loss: &L, i: usize, h: f64) -> f64 {
    let mut plus = p.clone();
    plus.as_mut_slice()[i] += h;
    let mut minus = p.clone();
    minus.as_mut_slice()[i] -= h;
    (loss.evaluate(&plus, None).unwrap() - loss.evaluate(&minus, None).unwrap()) / (2.0 * h)
}

#[test]
fn parameter_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..100 {
        let hidden = if seed % 4 == 0 { DEFAULT_HIDDEN } else { 6 };
        let p = random_params(seed, hidden);
        let loss = MixedLoss {
            points: (0..3)
                .map(|_| (rng.random_range(-1.5..1.5), rng.random_range(0.0..0.3)))
                .collect(),
            weights: InputDerivs {
                u: rng.random_range(-1.0..1.0),
                u_x: rng.random_range(-1.0..1.0),
                u_tau: rng.random_range(-1.0..1.0),
                u_xx: rng.random_range(-1.0..1.0),
            },
        };
        let (_, grad) = param_gradients(&p, &loss).unwrap();
        for _ in 0..20 {
            let i = rng.random_range(0..p.as_slice().len());
            let fd = fd_gradient(&p, &loss, i, 1e-5);
            let g = grad.as_slice()[i];
            let ok = (g - fd).abs() <= 1e-4 * g.abs().max(fd.abs()) || (g - fd).abs() < 1e-7;
            assert!(ok, "seed {seed} component {i}: {g} vs {fd}");
        }
    }
}

#[test]
fn single_unit_backprop_by_hand() {
    let (w1x, w1t, b1, w2, b2, w3, b3) = (0.7, -0.4, 0.1, 1.3, -0.2, 0.9, 0.05);
    let p = MlpParams::from_vec(1, vec![w1x, w1t, b1, w2, b2, w3, b3]).unwrap();
    let (x, t, y) = (0.5, 0.25, 0.3);

    let h1 = (w1x * x + w1t * t + b1).tanh();
    let h2 = (w2 * h1 + b2).tanh();
    let u = w3 * h2 + b3;
    let e = 2.0 * (u - y);
    let d2 = e * w3 * (1.0 - h2 * h2);
    let d1 = d2 * w2 * (1.0 - h1 * h1);
    let expected = [d1 * x, d1 * t, d1, d2 * h1, d2, e * h2, e];

    struct Quadratic(f64, f64, f64);
    impl LossEvaluator for Quadratic {
        fn evaluate(&self, p: &MlpParams, grad: Option<&mut MlpParams>) -> Result<f64> {
            let mut tape = Tape::new(p.hidden());
            let d = tape.forward(p, self.0, self.1);
            if let Some(g) = grad {
                let seeds = OutputSeeds {
                    u: 2.0 * (d.u - self.2),
                    ..Default::default()
                };
                tape.backward(p, &seeds, g);
            }
            Ok((d.u - self.2).powi(2))
        }
    }
    let (value, grad) = param_gradients(&p, &Quadratic(x, t, y)).unwrap();
    assert_abs_diff_eq!(value, (u - y) * (u - y), epsilon = 1e-15);
    for (g, e) in grad.as_slice().iter().zip(expected) {
        assert_abs_diff_eq!(*g, e, epsilon = 1e-14);
    }
}

#[test]
fn zero_loss_zero_gradient() {
    let p = MlpParams::zeros(DEFAULT_HIDDEN);
    let loss = MixedLoss {
        points: vec![(0.1, 0.2), (-0.5, 0.01)],
        weights: InputDerivs {
            u: 0.0,
            u_x: 0.0,
            u_tau: 1.0,
            u_xx: -1.0,
        },
    };
    let (value, grad) = param_gradients(&p, &loss).unwrap();
    assert_eq!(value, 0.0);
    assert!(grad.as_slice().iter().all(|&g| g == 0.0));
}

#[test]
fn non_finite_loss_is_reported() {
    struct Broken;
    impl LossEvaluator for Broken {
        fn evaluate(&self, _: &MlpParams, _: Option<&mut MlpParams>) -> Result<f64> {
            Ok(f64::NAN)
        }
    }
    let p = MlpParams::zeros(2);
    assert!(matches!(
        param_gradients(&p, &Broken),
        Err(Error::NonFinite { .. })
    ));
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut p = random_params(3, 4);
    let before = p.clone();
    let mut state = AdamState::new(&p, AdamConfig::default());
    let g = MlpParams::zeros(4);
    adam_step(&mut p, &g, &mut state).unwrap();
    assert_eq!(p, before);
    assert_eq!(state.step_count(), 1);
}

#[test]
fn adam_first_step_moves_by_lr() {
    // hidden 1 gives 7 scalars; treat each as an independent scalar parameter
    let mut p = MlpParams::from_vec(1, vec![0.5; 7]).unwrap();
    let g = MlpParams::from_vec(1, vec![1.0; 7]).unwrap();
    let mut state = AdamState::new(&p, AdamConfig::default());
    state.step(&mut p, &g).unwrap();
    // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    for &v in p.as_slice() {
        assert_relative_eq!(v, 0.5 - 1e-3 / (1.0 + 1e-8), max_relative = 1e-15);
    }
    assert!(state.second_moment().iter().all(|&v| v >= 0.0));
    state.step(&mut p, &g).unwrap();
    assert_eq!(state.step_count(), 2);
    // constant gradient keeps m_hat / sqrt(v_hat) = 1
    for &v in p.as_slice() {
        assert_relative_eq!(v, 0.5 - 2.0 * 1e-3 / (1.0 + 1e-8), max_relative = 1e-12);
    }
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut p = random_params(3, 2);
    let before = p.clone();
    let mut state = AdamState::new(&p, AdamConfig::default());
    let snapshot = state.clone();
    let mut g = MlpParams::zeros(2);
    g.as_mut_slice()[3] = f64::NAN;
    assert!(state.step(&mut p, &g).is_err());
    assert_eq!(p, before);
    assert_eq!(state, snapshot);
    assert!(state.step(&mut p, &MlpParams::zeros(3)).is_err());
}

#[test]
fn adam_trajectories_are_reproducible() {
    let run = || {
        let mut p = MlpParams::init(11, 8);
        let mut state = AdamState::new(&p, AdamConfig::default());
        let loss = MixedLoss {
            points: vec![(0.2, 0.1), (-0.7, 0.3), (1.1, 0.05)],
            weights: InputDerivs {
                u: 1.0,
                u_x: 0.2,
                u_tau: 0.5,
                u_xx: -0.5,
            },
        };
        for _ in 0..50 {
            let (_, g) = param_gradients(&p, &loss).unwrap();
            state.step(&mut p, &g).unwrap();
        }
        p.to_bytes()
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_round_trip() {
    let params = random_params(8, DEFAULT_HIDDEN);
    let ck = Checkpoint {
        seed: 8,
        steps: 1234,
        params,
        meta: vec![
            ("strike".into(), "24.76".into()),
            ("code".into(), "PETRA332".into()),
        ],
    };
    let text = ck.to_text();
    assert!(
        text.starts_with("bspinn-checkpoint 1\narchitecture 2-32-32-1-tanh\nseed 8\nsteps 1234\n")
    );
    let back = Checkpoint::parse(&text).unwrap();
    assert_eq!(back.params.to_bytes(), ck.params.to_bytes());
    assert_eq!(back, ck);
    assert_eq!(back.meta("strike"), Some("24.76"));

    assert!(Checkpoint::parse("garbage").is_err());
    let truncated: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
    assert!(Checkpoint::parse(&truncated).is_err());
}
