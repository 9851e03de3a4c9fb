#![allow(clippy::needless_range_loop)]

//! The `2-H-H-1` tanh network used as the heat-equation surrogate.
//!
//! Alongside the value, the forward pass carries the exact input derivatives
//! `u_x`, `u_tau` and `u_xx` through each layer with the identities
//! `tanh' = 1 - tanh^2` and `tanh'' = -2 tanh tanh'`. [`Tape::backward`]
//! then reverse-accumulates parameter gradients of any loss that depends on
//! those four outputs, which is what a PDE residual loss needs.

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hidden width of the reference architecture.
pub const DEFAULT_HIDDEN: usize = 32;

/// Network weights, stored flat in row-major layer order:
/// `W1 (H x 2), b1 (H), W2 (H x H), b2 (H), W3 (1 x H), b3 (1)`.
///
/// Gradients share this type and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    hidden: usize,
    data: Vec<f64>,
}

/// Output value and input derivatives at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InputDerivs {
    pub u: f64,
    pub u_x: f64,
    pub u_tau: f64,
    pub u_xx: f64,
}

/// Adjoints of a scalar loss with respect to the four forward outputs.
pub type OutputSeeds = InputDerivs;

impl MlpParams {
    pub fn param_count(hidden: usize) -> usize {
        hidden * 2 + hidden + hidden * hidden + hidden + hidden + 1
    }

    pub fn zeros(hidden: usize) -> Self {
        assert!(hidden > 0, "hidden width must be positive");
        MlpParams {
            hidden,
            data: vec![0.0; Self::param_count(hidden)],
        }
    }

    pub fn from_vec(hidden: usize, data: Vec<f64>) -> Result<Self> {
        if hidden == 0 || data.len() != Self::param_count(hidden) {
            return Err(Error::Shape(format!(
                "{} values do not fit hidden width {hidden}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("parameter {i}"),
                detail: data[i].to_string(),
            });
        }
        Ok(MlpParams { hidden, data })
    }

    /// Glorot-uniform weights, zero biases. The same seed always produces
    /// bit-identical parameters.
    pub fn init(seed: u64, hidden: usize) -> Self {
        let mut p = Self::zeros(hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |w: &mut [f64], fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w {
                *v = rng.random_range(-a..a);
            }
        };
        let (w1, w2, w3) = p.weights_mut();
        fill(w1, 2, hidden);
        fill(w2, hidden, hidden);
        fill(w3, hidden, 1);
        p
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn architecture(&self) -> String {
        format!("2-{0}-{0}-1-tanh", self.hidden)
    }

    fn offsets(&self) -> [usize; 6] {
        let h = self.hidden;
        let b1 = 2 * h;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + h;
        [0, b1, w2, b2, w3, b3]
    }

    pub fn w1(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[0]..o[1]]
    }
    pub fn b1(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[1]..o[2]]
    }
    pub fn w2(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[2]..o[3]]
    }
    pub fn b2(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[3]..o[4]]
    }
    pub fn w3(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[4]..o[5]]
    }
    pub fn b3(&self) -> f64 {
        self.data[self.data.len() - 1]
    }

    /// Mutable views `(W1, b1, W2, b2, W3, b3)`.
    #[allow(clippy::type_complexity)]
    pub fn parts_mut(
        &mut self,
    ) -> (
        &mut [f64],
        &mut [f64],
        &mut [f64],
        &mut [f64],
        &mut [f64],
        &mut f64,
    ) {
        let o = self.offsets();
        let (w1, rest) = self.data.split_at_mut(o[1]);
        let (b1, rest) = rest.split_at_mut(o[2] - o[1]);
        let (w2, rest) = rest.split_at_mut(o[3] - o[2]);
        let (b2, rest) = rest.split_at_mut(o[4] - o[3]);
        let (w3, b3) = rest.split_at_mut(o[5] - o[4]);
        (w1, b1, w2, b2, w3, &mut b3[0])
    }

    fn weights_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        let (w1, _, w2, _, w3, _) = self.parts_mut();
        (w1, w2, w3)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &MlpParams) {
        assert_eq!(self.hidden, other.hidden, "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Little-endian bytes of every parameter, for bit-exact comparisons.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn forward(&self, x: f64, tau: f64) -> Result<f64> {
        check_inputs(x, tau)?;
        let h = self.hidden;
        let (w1, b1, w2, b2, w3) = (self.w1(), self.b1(), self.w2(), self.b2(), self.w3());
        let h1: Vec<f64> = (0..h)
            .map(|i| (w1[2 * i] * x + w1[2 * i + 1] * tau + b1[i]).tanh())
            .collect();
        let mut out = self.b3();
        for i in 0..h {
            let row = &w2[i * h..(i + 1) * h];
            let z = row.iter().zip(&h1).fold(b2[i], |acc, (w, a)| acc + w * a);
            out += w3[i] * z.tanh();
        }
        Ok(out)
    }

    pub fn forward_with_input_derivs(&self, x: f64, tau: f64) -> Result<InputDerivs> {
        check_inputs(x, tau)?;
        let mut tape = Tape::new(self.hidden);
        Ok(tape.forward(self, x, tau))
    }
}

fn check_inputs(x: f64, tau: f64) -> Result<()> {
    if !(x.is_finite() && tau.is_finite()) {
        return Err(Error::domain(format!(
            "network input ({x}, {tau}) is not finite"
        )));
    }
    Ok(())
}

/// Per-unit quantities of one hidden layer, kept for the backward pass.
#[derive(Debug, Clone)]
struct LayerTape {
    h: Vec<f64>,
    h_x: Vec<f64>,
    h_t: Vec<f64>,
    h_xx: Vec<f64>,
    z_x: Vec<f64>,
    z_t: Vec<f64>,
    z_xx: Vec<f64>,
    /// `tanh'(z)`
    s: Vec<f64>,
    /// `tanh''(z)`
    sp: Vec<f64>,
}

impl LayerTape {
    fn new(n: usize) -> Self {
        let v = || vec![0.0; n];
        LayerTape {
            h: v(),
            h_x: v(),
            h_t: v(),
            h_xx: v(),
            z_x: v(),
            z_t: v(),
            z_xx: v(),
            s: v(),
            sp: v(),
        }
    }

    /// Applies tanh to unit `i` with pre-activation `z` and its derivatives
    /// already stored in `z_x`, `z_t`, `z_xx`.
    #[inline]
    fn activate(&mut self, i: usize, z: f64) {
        let h = z.tanh();
        let s = 1.0 - h * h;
        let sp = -2.0 * h * s;
        let zx = self.z_x[i];
        self.h[i] = h;
        self.s[i] = s;
        self.sp[i] = sp;
        self.h_x[i] = s * zx;
        self.h_t[i] = s * self.z_t[i];
        self.h_xx[i] = s * self.z_xx[i] + sp * zx * zx;
    }

    /// Pulls output adjoints `(a_h, a_hx, a_ht, a_hxx)` back through tanh,
    /// overwriting them in place with the pre-activation adjoints
    /// `(a_z, a_zx, a_zt, a_zxx)`.
    #[inline]
    fn backward(&self, adj: &mut Adjoints) {
        for i in 0..self.h.len() {
            let (h, s, sp) = (self.h[i], self.s[i], self.sp[i]);
            let spp = -2.0 * s * s - 2.0 * h * sp;
            let (zx, zt, zxx) = (self.z_x[i], self.z_t[i], self.z_xx[i]);
            let (ah, ahx, aht, ahxx) = (adj.v[i], adj.x[i], adj.t[i], adj.xx[i]);
            adj.v[i] = ah * s + ahx * sp * zx + aht * sp * zt + ahxx * (sp * zxx + spp * zx * zx);
            adj.x[i] = ahx * s + 2.0 * ahxx * sp * zx;
            adj.t[i] = aht * s;
            adj.xx[i] = ahxx * s;
        }
    }
}

#[derive(Debug, Clone)]
struct Adjoints {
    v: Vec<f64>,
    x: Vec<f64>,
    t: Vec<f64>,
    xx: Vec<f64>,
}

impl Adjoints {
    fn new(n: usize) -> Self {
        Adjoints {
            v: vec![0.0; n],
            x: vec![0.0; n],
            t: vec![0.0; n],
            xx: vec![0.0; n],
        }
    }

    fn clear(&mut self) {
        self.v.fill(0.0);
        self.x.fill(0.0);
        self.t.fill(0.0);
        self.xx.fill(0.0);
    }
}

/// Reusable forward/backward workspace for one evaluation point at a time.
#[derive(Debug, Clone)]
pub struct Tape {
    x: f64,
    tau: f64,
    l1: LayerTape,
    l2: LayerTape,
    a1: Adjoints,
    a2: Adjoints,
}

impl Tape {
    pub fn new(hidden: usize) -> Self {
        Tape {
            x: 0.0,
            tau: 0.0,
            l1: LayerTape::new(hidden),
            l2: LayerTape::new(hidden),
            a1: Adjoints::new(hidden),
            a2: Adjoints::new(hidden),
        }
    }

    /// Evaluates the network and its input derivatives at `(x, tau)`,
    /// recording what [`backward`](Self::backward) needs.
    pub fn forward(&mut self, p: &MlpParams, x: f64, tau: f64) -> InputDerivs {
        let h = p.hidden;
        debug_assert_eq!(self.l1.h.len(), h);
        self.x = x;
        self.tau = tau;
        let (w1, b1, w2, b2, w3) = (p.w1(), p.b1(), p.w2(), p.b2(), p.w3());

        for i in 0..h {
            let (wx, wt) = (w1[2 * i], w1[2 * i + 1]);
            self.l1.z_x[i] = wx;
            self.l1.z_t[i] = wt;
            self.l1.z_xx[i] = 0.0;
            self.l1.activate(i, wx * x + wt * tau + b1[i]);
        }

        let l1 = &self.l1;
        for i in 0..h {
            let row = &w2[i * h..(i + 1) * h];
            let (mut z, mut zx, mut zt, mut zxx) = (b2[i], 0.0, 0.0, 0.0);
            for j in 0..h {
                let w = row[j];
                z += w * l1.h[j];
                zx += w * l1.h_x[j];
                zt += w * l1.h_t[j];
                zxx += w * l1.h_xx[j];
            }
            self.l2.z_x[i] = zx;
            self.l2.z_t[i] = zt;
            self.l2.z_xx[i] = zxx;
            self.l2.activate(i, z);
        }

        let l2 = &self.l2;
        let mut out = InputDerivs {
            u: p.b3(),
            ..Default::default()
        };
        for j in 0..h {
            out.u += w3[j] * l2.h[j];
            out.u_x += w3[j] * l2.h_x[j];
            out.u_tau += w3[j] * l2.h_t[j];
            out.u_xx += w3[j] * l2.h_xx[j];
        }
        out
    }

    /// Adds `seeds . d(outputs)/d(params)` for the last forwarded point to
    /// `grad`.
    pub fn backward(&mut self, p: &MlpParams, seeds: &OutputSeeds, grad: &mut MlpParams) {
        let h = p.hidden;
        let (x, tau) = (self.x, self.tau);
        let w2 = p.w2();
        let w3 = p.w3();
        let (gw1, gb1, gw2, gb2, gw3, gb3) = grad.parts_mut();

        // output layer
        *gb3 += seeds.u;
        let l2 = &self.l2;
        let a2 = &mut self.a2;
        for j in 0..h {
            gw3[j] += seeds.u * l2.h[j]
                + seeds.u_x * l2.h_x[j]
                + seeds.u_tau * l2.h_t[j]
                + seeds.u_xx * l2.h_xx[j];
            a2.v[j] = seeds.u * w3[j];
            a2.x[j] = seeds.u_x * w3[j];
            a2.t[j] = seeds.u_tau * w3[j];
            a2.xx[j] = seeds.u_xx * w3[j];
        }
        l2.backward(a2);

        // hidden layer 2 weights and adjoints of layer-1 outputs
        let l1 = &self.l1;
        let a1 = &mut self.a1;
        a1.clear();
        for i in 0..h {
            let (az, azx, azt, azxx) = (a2.v[i], a2.x[i], a2.t[i], a2.xx[i]);
            gb2[i] += az;
            let row = &w2[i * h..(i + 1) * h];
            let grow = &mut gw2[i * h..(i + 1) * h];
            for j in 0..h {
                grow[j] += az * l1.h[j] + azx * l1.h_x[j] + azt * l1.h_t[j] + azxx * l1.h_xx[j];
                let w = row[j];
                a1.v[j] += w * az;
                a1.x[j] += w * azx;
                a1.t[j] += w * azt;
                a1.xx[j] += w * azxx;
            }
        }
        l1.backward(a1);

        // hidden layer 1: z = wx x + wt tau + b, z_x = wx, z_t = wt
        for i in 0..h {
            gw1[2 * i] += a1.v[i] * x + a1.x[i];
            gw1[2 * i + 1] += a1.v[i] * tau + a1.t[i];
            gb1[i] += a1.v[i];
        }
    }
}

/// A scalar loss of the network parameters that can also accumulate its
/// gradient.
pub trait LossEvaluator {
    /// Returns the loss. When `grad` is given, adds `dL/dparams` to it.
    fn evaluate(&self, params: &MlpParams, grad: Option<&mut MlpParams>) -> Result<f64>;
}

/// Loss value and its exact parameter gradient.
pub fn param_gradients<L: LossEvaluator + ?Sized>(
    params: &MlpParams,
    loss: &L,
) -> Result<(f64, MlpParams)> {
    let mut grad = MlpParams::zeros(params.hidden);
    let value = loss.evaluate(params, Some(&mut grad))?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            location: "loss".into(),
            detail: value.to_string(),
        });
    }
    if let Some(i) = grad.data.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            location: format!("gradient component {i}"),
            detail: grad.data[i].to_string(),
        });
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests;
