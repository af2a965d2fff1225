use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Noise variance used by the reverse step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceKind {
    /// `β̃_t = (1 - ᾱ_{t-1}) / (1 - ᾱ_t) · β_t`
    Posterior,
    /// `β_t`
    Beta,
}

impl VarianceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceKind::Posterior => "posterior",
            VarianceKind::Beta => "beta",
        }
    }
}

impl FromStr for VarianceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "posterior" => Ok(VarianceKind::Posterior),
            "beta" => Ok(VarianceKind::Beta),
            _ => Err(Error::Config(format!("unknown variance kind {s:?}"))),
        }
    }
}

/// Forward-process tables indexed by timestep `t ∈ 1..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Schedule {
    /// `T` betas spaced linearly from `beta_start` to `beta_end`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("every beta must lie in (0, 1), got {b}")));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::Config(format!("timestep {t} outside 1..={}", self.steps())));
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn variance(&self, t: usize, kind: VarianceKind) -> f64 {
        match kind {
            VarianceKind::Beta => self.beta(t),
            VarianceKind::Posterior => (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t)) * self.beta(t),
        }
    }

    /// `x_t = √ᾱ_t · x0 + √(1 - ᾱ_t) · ε`
    pub fn q_sample(&self, x0: &Tensor, t: usize, eps: &Tensor) -> Result<Tensor> {
        self.check(t)?;
        if x0.shape() != eps.shape() {
            return Err(Error::shape("q_sample", x0.shape(), eps.shape()));
        }
        let ab = self.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        let data = x0.data().iter().zip(eps.data()).map(|(x, e)| a * x + b * e).collect();
        Tensor::new(x0.shape(), data)
    }

    /// Mean of `q(x_{t-1} | x_t, x0 = x0_hat)`.
    pub fn posterior_mean(&self, x_t: &Tensor, x0_hat: &Tensor, t: usize) -> Result<Tensor> {
        self.check(t)?;
        if x_t.shape() != x0_hat.shape() {
            return Err(Error::shape("posterior_mean", x_t.shape(), x0_hat.shape()));
        }
        let (c0, ct) = posterior_coefficients(self.alpha_bar(t - 1), self.alpha_bar(t));
        let data = x0_hat
            .data()
            .iter()
            .zip(x_t.data())
            .map(|(x0, xt)| c0 * x0 + ct * xt)
            .collect();
        Tensor::new(x_t.shape(), data)
    }

    /// One reverse step from `x_t` given the predicted clean motion.
    /// `noise` is ignored at `t = 1`, where the step returns the mean.
    pub fn posterior_step(
        &self,
        x_t: &Tensor,
        x0_hat: &Tensor,
        t: usize,
        kind: VarianceKind,
        noise: Option<&Tensor>,
    ) -> Result<Tensor> {
        let mut mean = self.posterior_mean(x_t, x0_hat, t)?;
        if t > 1 {
            if let Some(z) = noise {
                if z.shape() != mean.shape() {
                    return Err(Error::shape("posterior_step", z.shape(), mean.shape()));
                }
                let sd = self.variance(t, kind).sqrt();
                mean.data_mut().iter_mut().zip(z.data()).for_each(|(m, z)| *m += sd * z);
            }
        }
        Ok(mean)
    }
}

/// Weights `(c0, ct)` of the posterior mean `c0 · x0 + ct · x_t`, written in
/// terms of the two cumulative products. The per-step beta is implied by
/// their ratio, so equal products give `(0, 1)`.
pub fn posterior_coefficients(alpha_bar_prev: f64, alpha_bar_t: f64) -> (f64, f64) {
    let alpha_t = alpha_bar_t / alpha_bar_prev;
    let beta_t = 1.0 - alpha_t;
    let denom = 1.0 - alpha_bar_t;
    (
        alpha_bar_prev.sqrt() * beta_t / denom,
        alpha_t.sqrt() * (1.0 - alpha_bar_prev) / denom,
    )
}
