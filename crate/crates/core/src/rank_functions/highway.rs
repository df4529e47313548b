//! Recurrent highway network.
//!
//! ```text
//! z_1     = relu(b_x + W_x x)
//! z_{l+1} = H(z_l) * T(z_l) + z_l * (1 - T(z_l)),   l = 1..L-1
//! H(z)    = relu(b_h + W_h z)
//! T(z)    = sigmoid(b_t + W_t z)
//! f(x)    = <w, z_L>
//! ```
//!
//! `W_h`, `W_t`, `b_h` and `b_t` are shared by all `L - 1` recurrent layers.
//! Matrices are stored row-major with one row per hidden unit, so row `k`
//! holds the incoming weights of unit `k`.

use rand::Rng;
use rand_distr::Normal;

use super::{check_dim, draw_mask, Mode, RankFunction, Scorer};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.01;
/// Initial value of every gate bias.
pub const GATE_BIAS_INIT: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HighwayParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// `hidden x input_dim`
    pub w_x: Vec<f64>,
    pub b_x: Vec<f64>,
    /// `hidden x hidden`
    pub w_h: Vec<f64>,
    pub b_h: Vec<f64>,
    /// `hidden x hidden`
    pub w_t: Vec<f64>,
    pub b_t: Vec<f64>,
    pub w_out: Vec<f64>,
}

/// Gaussian weights, `b_t = -1`, `b_h = b_x = 0`.
pub fn init_highway(input_dim: usize, hidden: usize, layers: usize, seed: u64) -> Result<HighwayParams> {
    if input_dim == 0 || hidden == 0 || layers == 0 {
        return Err(Error::Validation(
            "highway network needs p, K, L >= 1".into(),
        ));
    }
    let mut rng = rng::stream(seed, Stream::Init);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(normal)).collect() };
    let w_x = draw(hidden * input_dim);
    let w_h = draw(hidden * hidden);
    let w_t = draw(hidden * hidden);
    let w_out = draw(hidden);
    Ok(HighwayParams {
        input_dim,
        hidden,
        layers,
        w_x,
        b_x: vec![0.0; hidden],
        w_h,
        b_h: vec![0.0; hidden],
        w_t,
        b_t: vec![GATE_BIAS_INIT; hidden],
        w_out,
    })
}

impl HighwayParams {
    /// All-zero parameters with the given shape.
    pub fn zeros(input_dim: usize, hidden: usize, layers: usize) -> Self {
        let k = hidden;
        HighwayParams {
            input_dim,
            hidden,
            layers,
            w_x: vec![0.0; k * input_dim],
            b_x: vec![0.0; k],
            w_h: vec![0.0; k * k],
            b_h: vec![0.0; k],
            w_t: vec![0.0; k * k],
            b_t: vec![0.0; k],
            w_out: vec![0.0; k],
        }
    }

    /// Tensors in serialization order.
    pub fn tensors(&self) -> [&Vec<f64>; 7] {
        [
            &self.w_x, &self.b_x, &self.w_h, &self.b_h, &self.w_t, &self.b_t, &self.w_out,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [
            &mut self.w_x,
            &mut self.b_x,
            &mut self.w_h,
            &mut self.b_h,
            &mut self.w_t,
            &mut self.b_t,
            &mut self.w_out,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim && self.hidden == other.hidden && self.layers == other.layers
    }

    pub(crate) fn shape_is_consistent(&self) -> bool {
        let k = self.hidden;
        self.w_x.len() == k * self.input_dim
            && self.b_x.len() == k
            && self.w_h.len() == k * k
            && self.b_h.len() == k
            && self.w_t.len() == k * k
            && self.b_t.len() == k
            && self.w_out.len() == k
    }
}

#[inline]
fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `bias + W v` for a row-major `W`.
fn affine(w: &[f64], bias: &[f64], v: &[f64]) -> Vec<f64> {
    let cols = v.len();
    bias.iter()
        .zip(w.chunks_exact(cols))
        .map(|(b, row)| b + row.iter().zip(v).map(|(a, x)| a * x).sum::<f64>())
        .collect()
}

/// `acc += outer(d, v)` and `back += W^T d`.
fn affine_backward(w: &[f64], d: &[f64], v: &[f64], acc: &mut [f64], back: &mut [f64]) {
    let cols = v.len();
    for (k, (&dk, row)) in d.iter().zip(w.chunks_exact(cols)).enumerate() {
        if dk == 0.0 {
            continue;
        }
        let acc_row = &mut acc[k * cols..(k + 1) * cols];
        for ((a, x), (b, wk)) in acc_row.iter_mut().zip(v).zip(back.iter_mut().zip(row)) {
            *a += dk * x;
            *b += dk * wk;
        }
    }
}

fn apply_mask(v: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (x, k) in v.iter_mut().zip(m) {
            *x *= k;
        }
    }
}

#[derive(Debug, Clone)]
struct RecurrentStep {
    gate: Vec<f64>,
    transform_pre: Vec<f64>,
    transform: Vec<f64>,
}

/// Intermediates of one forward pass, replayed by [`highway_backward`].
#[derive(Debug, Clone)]
pub struct HighwayTape {
    shape: (usize, usize, usize),
    input: Vec<f64>,
    input_pre: Vec<f64>,
    /// Hidden dropout mask applied to each `z_l`, `l = 1..=L`.
    masks: Vec<Option<Vec<f64>>>,
    /// `z_l` after dropout, `l = 1..=L`.
    states: Vec<Vec<f64>>,
    steps: Vec<RecurrentStep>,
}

impl HighwayTape {
    /// Smallest `|pre-activation|` among all ReLU units. Finite-difference
    /// checks are only meaningful when this is not close to zero.
    pub fn min_abs_relu_preactivation(&self) -> f64 {
        self.input_pre
            .iter()
            .chain(self.steps.iter().flat_map(|s| s.transform_pre.iter()))
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    /// Gate activations of each recurrent layer.
    pub fn gates(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.gate.as_slice())
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("at least one layer")
    }
}

pub fn highway_forward(params: &HighwayParams, x: &[f64], mode: Mode<'_>) -> Result<(f64, HighwayTape)> {
    check_dim(params.input_dim, x.len())?;
    let k = params.hidden;
    let (p_vis, p_hid, mut rng) = match mode {
        Mode::Infer => (0.0, 0.0, None),
        Mode::Train { dropout, rng } => (dropout.p_vis, dropout.p_hid, Some(rng)),
    };
    let mut mask = |len: usize, p: f64| rng.as_mut().and_then(|r| draw_mask(len, p, r));

    let mut input = x.to_vec();
    apply_mask(&mut input, &mask(x.len(), p_vis));

    let input_pre = affine(&params.w_x, &params.b_x, &input);
    let mut z: Vec<f64> = input_pre.iter().map(|a| a.max(0.0)).collect();
    let m = mask(k, p_hid);
    apply_mask(&mut z, &m);

    let mut masks = Vec::with_capacity(params.layers);
    let mut states = Vec::with_capacity(params.layers);
    let mut steps = Vec::with_capacity(params.layers.saturating_sub(1));
    masks.push(m);
    states.push(z);

    for _ in 1..params.layers {
        let prev = states.last().unwrap();
        let gate: Vec<f64> = affine(&params.w_t, &params.b_t, prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let transform_pre = affine(&params.w_h, &params.b_h, prev);
        let transform: Vec<f64> = transform_pre.iter().map(|a| a.max(0.0)).collect();
        let mut next: Vec<f64> = (0..k)
            .map(|i| transform[i] * gate[i] + prev[i] * (1.0 - gate[i]))
            .collect();
        let m = mask(k, p_hid);
        apply_mask(&mut next, &m);
        masks.push(m);
        states.push(next);
        steps.push(RecurrentStep {
            gate,
            transform_pre,
            transform,
        });
    }

    let score = params
        .w_out
        .iter()
        .zip(states.last().unwrap())
        .map(|(w, z)| w * z)
        .sum();
    Ok((
        score,
        HighwayTape {
            shape: (params.input_dim, params.hidden, params.layers),
            input,
            input_pre,
            masks,
            states,
            steps,
        },
    ))
}

fn backward_into(params: &HighwayParams, tape: &HighwayTape, dscore: f64, g: &mut HighwayParams) -> Result<()> {
    let shape = (params.input_dim, params.hidden, params.layers);
    if tape.shape != shape || tape.states.len() != params.layers || !g.same_shape(params) {
        return Err(Error::Contract(format!(
            "tape recorded for shape {:?}, parameters have shape {:?}",
            tape.shape, shape
        )));
    }
    if dscore == 0.0 {
        return Ok(());
    }
    let k = params.hidden;
    let top = tape.states.last().unwrap();
    for (gw, z) in g.w_out.iter_mut().zip(top) {
        *gw += dscore * z;
    }
    let mut dz: Vec<f64> = params.w_out.iter().map(|w| dscore * w).collect();

    for l in (1..params.layers).rev() {
        // dz is d/d z_{l+1} (post-mask); undo the mask first.
        apply_mask(&mut dz, &tape.masks[l]);
        let step = &tape.steps[l - 1];
        let prev = &tape.states[l - 1];
        let mut d_prev = vec![0.0; k];
        let mut d_tpre = vec![0.0; k];
        let mut d_hpre = vec![0.0; k];
        for i in 0..k {
            let t = step.gate[i];
            let dh = dz[i] * t;
            let dt = dz[i] * (step.transform[i] - prev[i]);
            d_prev[i] = dz[i] * (1.0 - t);
            d_hpre[i] = if step.transform_pre[i] > 0.0 { dh } else { 0.0 };
            d_tpre[i] = dt * t * (1.0 - t);
        }
        for i in 0..k {
            g.b_h[i] += d_hpre[i];
            g.b_t[i] += d_tpre[i];
        }
        affine_backward(&params.w_h, &d_hpre, prev, &mut g.w_h, &mut d_prev);
        affine_backward(&params.w_t, &d_tpre, prev, &mut g.w_t, &mut d_prev);
        dz = d_prev;
    }

    apply_mask(&mut dz, &tape.masks[0]);
    let d_pre: Vec<f64> = dz
        .iter()
        .zip(&tape.input_pre)
        .map(|(d, a)| if *a > 0.0 { *d } else { 0.0 })
        .collect();
    for (gb, d) in g.b_x.iter_mut().zip(&d_pre) {
        *gb += d;
    }
    let mut unused = vec![0.0; params.input_dim];
    affine_backward(&params.w_x, &d_pre, &tape.input, &mut g.w_x, &mut unused);
    Ok(())
}

/// Exact gradient of `dscore * score` with respect to every parameter.
pub fn highway_backward(params: &HighwayParams, tape: &HighwayTape, dscore: f64) -> Result<HighwayParams> {
    let mut g = params.zeros_like();
    backward_into(params, tape, dscore, &mut g)?;
    Ok(g)
}

fn cap_rows(w: &mut [f64], cols: usize, cap: f64) {
    for row in w.chunks_exact_mut(cols) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > cap {
            let s = cap / norm;
            for v in row.iter_mut() {
                *v *= s;
            }
        }
    }
}

impl Scorer for HighwayParams {
    fn feature_dim(&self) -> usize {
        self.input_dim
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        highway_forward(self, x, Mode::Infer).map(|(s, _)| s)
    }
}

impl RankFunction for HighwayParams {
    type Tape = HighwayTape;

    fn forward(&self, x: &[f64], mode: Mode<'_>) -> Result<(f64, HighwayTape)> {
        highway_forward(self, x, mode)
    }

    fn accumulate_grad(&self, tape: &HighwayTape, dscore: f64, grad: &mut Self) -> Result<()> {
        backward_into(self, tape, dscore, grad)
    }

    fn zeros_like(&self) -> Self {
        HighwayParams::zeros(self.input_dim, self.hidden, self.layers)
    }

    fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    fn project_maxnorm(&mut self, cap: f64) {
        let (p, k) = (self.input_dim, self.hidden);
        cap_rows(&mut self.w_x, p, cap);
        cap_rows(&mut self.w_h, k, cap);
        cap_rows(&mut self.w_t, k, cap);
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Largest incoming-weight row norm over `W_x`, `W_h` and `W_t`.
pub fn max_row_norm(params: &HighwayParams) -> f64 {
    let rows = |w: &[f64], cols: usize| {
        w.chunks_exact(cols)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    };
    rows(&params.w_x, params.input_dim)
        .max(rows(&params.w_h, params.hidden))
        .max(rows(&params.w_t, params.hidden))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank_functions::DropoutConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(p: usize, k: usize, l: usize, seed: u64, scale: f64) -> HighwayParams {
        let mut params = init_highway(p, k, l, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
        let normal = Normal::new(0.0, scale).unwrap();
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.sample(normal);
            }
        }
        params
    }

    #[test]
    fn init_recipe() {
        let a = init_highway(5, 10, 3, 42).unwrap();
        let b = init_highway(5, 10, 3, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.b_t.iter().all(|&v| v == -1.0));
        assert!(a.b_h.iter().all(|&v| v == 0.0));
        assert!(a.b_x.iter().all(|&v| v == 0.0));
        let n = a.w_h.len() as f64;
        let mean = a.w_h.iter().sum::<f64>() / n;
        let sd = (a.w_h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.005..=0.02).contains(&sd), "sd {sd}");
        assert!(init_highway(0, 1, 1, 0).is_err());
    }

    #[test]
    fn closed_gate_passes_first_state() {
        let mut params = random_params(4, 6, 1, 3, 0.5);
        let x = [0.3, -1.0, 2.0, 0.7];
        params.b_t = vec![-1e6; 6];
        let shallow = params.score(&x).unwrap();
        for layers in 2..7 {
            let mut deep = params.clone();
            deep.layers = layers;
            assert_eq!(deep.score(&x).unwrap(), shallow);
        }
    }

    #[test]
    fn open_gate_zero_transform_kills_signal() {
        let mut params = random_params(3, 5, 3, 9, 0.5);
        params.b_t = vec![1e6; 5];
        params.w_t = vec![0.0; 25];
        params.w_h = vec![0.0; 25];
        params.b_h = vec![0.0; 5];
        assert_eq!(params.score(&[1.0, 2.0, -0.5]).unwrap(), 0.0);
    }

    #[test]
    fn single_layer_is_shallow_net() {
        let params = random_params(3, 4, 1, 5, 0.7);
        let x = [0.2, -0.4, 1.1];
        let z: Vec<f64> = affine(&params.w_x, &params.b_x, &x)
            .into_iter()
            .map(|a| a.max(0.0))
            .collect();
        let expect: f64 = params.w_out.iter().zip(&z).map(|(a, b)| a * b).sum();
        assert_eq!(params.score(&x).unwrap(), expect);
        let (_, tape) = highway_forward(&params, &x, Mode::Infer).unwrap();
        let g = highway_backward(&params, &tape, 1.0).unwrap();
        assert_eq!(g.w_out, z);
    }

    #[test]
    fn zero_upstream_gradient() {
        let params = random_params(3, 4, 3, 6, 0.7);
        let (_, tape) = highway_forward(&params, &[1.0, 0.5, -0.5], Mode::Infer).unwrap();
        let g = highway_backward(&params, &tape, 0.0).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn mismatched_tape_is_rejected() {
        let a = random_params(3, 4, 3, 6, 0.7);
        let b = random_params(3, 4, 2, 6, 0.7);
        let (_, tape) = highway_forward(&a, &[1.0, 0.5, -0.5], Mode::Infer).unwrap();
        assert!(matches!(highway_backward(&b, &tape, 1.0), Err(Error::Contract(_))));
        assert!(matches!(
            highway_forward(&a, &[1.0], Mode::Infer),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn dropout_gradient_replays_masks() {
        let params = random_params(4, 5, 3, 8, 0.6);
        let x = [0.5, -1.0, 0.25, 2.0];
        let cfg = DropoutConfig { p_vis: 0.2, p_hid: 0.3, rng_seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (_, tape) = highway_forward(&params, &x, Mode::Train { dropout: &cfg, rng: &mut rng }).unwrap();
        let g = highway_backward(&params, &tape, 1.0).unwrap();
        // With masks frozen the network is a deterministic function of theta;
        // check the output weights, which enter linearly.
        assert_eq!(g.w_out, tape.final_state().to_vec());
    }

    #[test]
    fn maxnorm_projection() {
        let mut params = HighwayParams::zeros(2, 2, 2);
        params.w_x = vec![0.3, 0.4, 0.0, 4.0];
        params.project_maxnorm(1.0);
        assert_eq!(&params.w_x[..2], &[0.3, 0.4]);
        assert_eq!(&params.w_x[2..], &[0.0, 1.0]);
        let mut r = random_params(4, 6, 3, 1, 3.0);
        r.project_maxnorm(1.0);
        let once = r.clone();
        r.project_maxnorm(1.0);
        assert_eq!(r, once);
        assert!(max_row_norm(&r) <= 1.0 + 1e-9);
    }

    #[test]
    fn infer_mode_is_deterministic() {
        let params = random_params(3, 4, 4, 2, 0.5);
        let x = [0.1, 0.2, 0.3];
        assert_eq!(
            params.score(&x).unwrap().to_bits(),
            params.score(&x).unwrap().to_bits()
        );
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = 0.3;
        let n = 100_000;
        let total: f64 = (0..n)
            .map(|_| draw_mask(1, p, &mut rng).unwrap()[0] * 2.5)
            .sum();
        let mean = total / n as f64;
        assert!((mean - 2.5).abs() / 2.5 < 0.01, "{mean}");
    }
}
