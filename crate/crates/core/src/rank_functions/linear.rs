use rand_chacha::ChaCha8Rng;

use super::{check_dim, draw_mask, Mode, RankFunction, Scorer};
use crate::error::{Error, Result};

/// `f(x) = <w, x> + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearParams {
    pub fn zeros(p: usize) -> Self {
        LinearParams { w: vec![0.0; p], b: 0.0 }
    }
}

pub fn linear_forward(params: &LinearParams, x: &[f64]) -> Result<f64> {
    check_dim(params.w.len(), x.len())?;
    Ok(params.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + params.b)
}

/// Gradient of `dscore * f(x)` with respect to `(w, b)`.
pub fn linear_grad(x: &[f64], dscore: f64) -> LinearParams {
    LinearParams {
        w: x.iter().map(|v| dscore * v).collect(),
        b: dscore,
    }
}

/// The (possibly dropped-out) input seen by the forward pass.
#[derive(Debug, Clone)]
pub struct LinearTape {
    input: Vec<f64>,
}

impl Scorer for LinearParams {
    fn feature_dim(&self) -> usize {
        self.w.len()
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        linear_forward(self, x)
    }
}

fn masked_input(x: &[f64], p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match draw_mask(x.len(), p, rng) {
        Some(m) => x.iter().zip(m).map(|(v, k)| v * k).collect(),
        None => x.to_vec(),
    }
}

impl RankFunction for LinearParams {
    type Tape = LinearTape;

    fn forward(&self, x: &[f64], mode: Mode<'_>) -> Result<(f64, LinearTape)> {
        check_dim(self.w.len(), x.len())?;
        let input = match mode {
            Mode::Infer => x.to_vec(),
            Mode::Train { dropout, rng } => masked_input(x, dropout.p_vis, rng),
        };
        let score = linear_forward(self, &input)?;
        Ok((score, LinearTape { input }))
    }

    fn accumulate_grad(&self, tape: &LinearTape, dscore: f64, grad: &mut Self) -> Result<()> {
        if tape.input.len() != self.w.len() || grad.w.len() != self.w.len() {
            return Err(Error::Contract("linear tape does not match parameters".into()));
        }
        for (g, v) in grad.w.iter_mut().zip(&tape.input) {
            *g += dscore * v;
        }
        grad.b += dscore;
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        LinearParams::zeros(self.w.len())
    }

    fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += alpha * b;
        }
        self.b += alpha * other.b;
    }

    fn project_maxnorm(&mut self, _cap: f64) {}

    fn all_finite(&self) -> bool {
        self.b.is_finite() && self.w.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_examples() {
        let zero = LinearParams::zeros(3);
        assert_eq!(linear_forward(&zero, &[1.0, -2.0, 9.0]).unwrap(), 0.0);
        let p = LinearParams { w: vec![1.0, 2.0], b: 0.5 };
        assert_eq!(linear_forward(&p, &[3.0, 4.0]).unwrap(), 11.5);
        assert!(matches!(linear_forward(&p, &[1.0]), Err(Error::Validation(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = LinearParams { w: vec![0.3, -1.2, 2.5], b: -0.7 };
        let x = [1.5, -0.25, 0.8];
        let dscore = 1.3;
        let g = linear_grad(&x, dscore);
        let h = 1e-5;
        for i in 0..3 {
            let mut up = p.clone();
            up.w[i] += h;
            let mut dn = p.clone();
            dn.w[i] -= h;
            let fd = dscore * (up.score(&x).unwrap() - dn.score(&x).unwrap()) / (2.0 * h);
            assert!((fd - g.w[i]).abs() / g.w[i].abs().max(1e-12) < 1e-8);
        }
        let mut up = p.clone();
        up.b += h;
        let mut dn = p.clone();
        dn.b -= h;
        let fd = dscore * (up.score(&x).unwrap() - dn.score(&x).unwrap()) / (2.0 * h);
        assert!((fd - g.b).abs() / g.b.abs() < 1e-8);

        let (_, tape) = p.forward(&x, Mode::Infer).unwrap();
        let mut acc = p.zeros_like();
        p.accumulate_grad(&tape, dscore, &mut acc).unwrap();
        assert_eq!(acc, g);
    }
}
