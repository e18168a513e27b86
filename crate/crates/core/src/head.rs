//! Trainable classification head: three linear maps followed by a
//! learned-prototype score.
//!
//! For an embedding `V` of shape `T_v × E` the forward chain is
//!
//! ```text
//! H1 = W1ᵀ · V          t × E
//! H2 = H1 · W2          t × e
//! h  = flatten(H2)      t·e   (row-major)
//! ω  = W3ᵀ · h          C
//! s  = prototype_score(ω, c, σ)
//! ```
//!
//! The spreads are parametrized as `σ_k = exp(softplus(ρ_k))`, which keeps
//! `log σ_k > 0` for every value of `ρ_k`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::{sigmoid, softplus, softplus_inverse, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadConfig {
    /// `T_v` of the incoming embedding.
    pub visual_tokens: usize,
    /// `E` of the incoming embedding.
    pub embed_width: usize,
    /// Intermediate token count `t`.
    pub tokens: usize,
    /// Reduced width `e`.
    pub width: usize,
    /// Number of prototypes `C`.
    pub prototypes: usize,
    /// Use `(ω−c)²` instead of `|ω−c|` in the distance term.
    pub squared_distance: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            visual_tokens: 8,
            embed_width: 128,
            tokens: 4,
            width: 16,
            prototypes: 1,
            squared_distance: false,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("visual_tokens", self.visual_tokens),
            ("embed_width", self.embed_width),
            ("tokens", self.tokens),
            ("width", self.width),
            ("prototypes", self.prototypes),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(alloc::format!("head {name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn flat_len(&self) -> usize {
        self.tokens * self.width
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.visual_tokens * self.tokens
            + self.embed_width * self.width
            + self.flat_len() * self.prototypes
            + 2 * self.prototypes
    }
}

/// Trainable parameters `W1`, `W2`, `W3`, centroids `c` and spread
/// parametrization `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub config: HeadConfig,
    /// `T_v × t`
    pub w1: Matrix,
    /// `E × e`
    pub w2: Matrix,
    /// `(t·e) × C`
    pub w3: Matrix,
    pub centroids: Vec<f32>,
    pub rho: Vec<f32>,
}

impl HeadParams {
    /// All parameters zero except `ρ`, which gives `log σ = 1`.
    pub fn zeros(config: HeadConfig) -> Result<Self> {
        config.validate()?;
        Ok(HeadParams {
            config,
            w1: Matrix::zeros(config.visual_tokens, config.tokens),
            w2: Matrix::zeros(config.embed_width, config.width),
            w3: Matrix::zeros(config.flat_len(), config.prototypes),
            centroids: vec![0.0; config.prototypes],
            rho: vec![softplus_inverse(1.0) as f32; config.prototypes],
        })
    }

    /// Checks every tensor against the configured dimensions.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let expect = [
            (self.w1.shape(), (c.visual_tokens, c.tokens)),
            (self.w2.shape(), (c.embed_width, c.width)),
            (self.w3.shape(), (c.flat_len(), c.prototypes)),
            ((self.centroids.len(), 1), (c.prototypes, 1)),
            ((self.rho.len(), 1), (c.prototypes, 1)),
        ];
        for (got, want) in expect {
            if got != want {
                return Err(Error::Config(alloc::format!(
                    "head tensor is {}x{}, configuration expects {}x{}",
                    got.0,
                    got.1,
                    want.0,
                    want.1
                )));
            }
        }
        Ok(())
    }

    pub fn log_sigma(&self, k: usize) -> f64 {
        softplus(self.rho[k] as f64)
    }

    pub fn sigma(&self, k: usize) -> f64 {
        libm::exp(self.log_sigma(k))
    }

    /// Tensors in canonical order `W1, W2, W3, c, ρ`.
    pub fn tensors(&self) -> [&[f32]; 5] {
        [
            self.w1.as_slice(),
            self.w2.as_slice(),
            self.w3.as_slice(),
            &self.centroids,
            &self.rho,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f32]; 5] {
        [
            self.w1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.w3.as_mut_slice(),
            &mut self.centroids,
            &mut self.rho,
        ]
    }

    /// Score `s` of one embedding.
    pub fn score(&self, embedding: &Matrix) -> Result<f64> {
        head_forward(embedding, self).map(|(s, _)| s)
    }
}

/// Glorot-uniform weights, zero centroids and `σ = e`.
pub fn init_head(config: HeadConfig, seed: u64) -> Result<HeadParams> {
    let mut params = HeadParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in [&mut params.w1, &mut params.w2, &mut params.w3] {
        let bound = libm::sqrt(6.0 / (w.rows() + w.cols()) as f64) as f32;
        w.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..=bound));
    }
    Ok(params)
}

/// Intermediates of one forward pass, consumed by [`head_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadActivation {
    pub input: Matrix,
    /// `t × E`, row-major.
    pub h1: Vec<f64>,
    /// `t × e`, row-major; also the flattened `h`.
    pub h2: Vec<f64>,
    pub omega: Vec<f64>,
    pub score: f64,
    /// Prototype index that attains the score.
    pub active: usize,
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Signed distance term `sign(d)·dist(d) / (2σ²)` with `σ² = e^{2·log σ}`.
#[inline]
fn distance_term(d: f64, log_sigma: f64, squared: bool) -> f64 {
    let dist = if squared { d * d } else { d.abs() };
    sign(d) * dist * 0.5 * libm::exp(-2.0 * log_sigma)
}

/// Minimum over prototypes of `sign(d_k)·dist_k/(2σ_k²) + C·log σ_k`; with
/// a single prototype this is the plain score. Returns the value and the
/// attaining index (lowest on ties).
fn score_parts(omega: &[f64], centroids: &[f64], log_sigma: &[f64], squared: bool) -> (f64, usize) {
    let count = omega.len() as f64;
    let mut best = (f64::INFINITY, 0);
    for k in 0..omega.len() {
        let v = distance_term(omega[k] - centroids[k], log_sigma[k], squared) + count * log_sigma[k];
        if v < best.0 {
            best = (v, k);
        }
    }
    best
}

/// Learned-prototype score with the unsquared distance.
///
/// For `C = 1`: `s = sign(ω−c)·|ω−c| / (2σ²) + log σ`, with `sign(0) = 0`.
/// Every `σ_k` must exceed 1.
pub fn prototype_score(omega: &[f64], centroids: &[f64], sigma: &[f64]) -> Result<f64> {
    prototype_score_with(omega, centroids, sigma, false)
}

pub fn prototype_score_with(
    omega: &[f64],
    centroids: &[f64],
    sigma: &[f64],
    squared_distance: bool,
) -> Result<f64> {
    if omega.is_empty() {
        return Err(Error::Empty("prototype vector"));
    }
    if centroids.len() != omega.len() || sigma.len() != omega.len() {
        return Err(Error::Shape {
            op: "prototype_score",
            left: (omega.len(), 1),
            right: (centroids.len(), sigma.len()),
        });
    }
    if let Some((index, &s)) = sigma.iter().enumerate().find(|(_, &s)| s.is_nan() || s <= 1.0) {
        return Err(Error::Constraint { index, sigma: s });
    }
    let log_sigma: Vec<f64> = sigma.iter().map(|&s| libm::log(s)).collect();
    Ok(score_parts(omega, centroids, &log_sigma, squared_distance).0)
}

/// Runs the head on one `T_v × E` embedding.
pub fn head_forward(input: &Matrix, params: &HeadParams) -> Result<(f64, HeadActivation)> {
    let cfg = &params.config;
    params.validate()?;
    if input.shape() != (cfg.visual_tokens, cfg.embed_width) {
        return Err(Error::Config(alloc::format!(
            "embedding is {}x{}, head expects {}x{}",
            input.rows(),
            input.cols(),
            cfg.visual_tokens,
            cfg.embed_width
        )));
    }
    let (tv, ew, t, e, c) = (
        cfg.visual_tokens,
        cfg.embed_width,
        cfg.tokens,
        cfg.width,
        cfg.prototypes,
    );

    // H1[i][k] = Σ_r W1[r][i] · V[r][k]
    let mut h1 = vec![0.0f64; t * ew];
    for r in 0..tv {
        let vrow = input.row(r);
        for i in 0..t {
            let w = params.w1.get(r, i) as f64;
            let out = &mut h1[i * ew..(i + 1) * ew];
            for (o, &v) in out.iter_mut().zip(vrow) {
                *o += w * v as f64;
            }
        }
    }

    // H2[i][j] = Σ_k H1[i][k] · W2[k][j]
    let mut h2 = vec![0.0f64; t * e];
    for i in 0..t {
        let out = &mut h2[i * e..(i + 1) * e];
        for k in 0..ew {
            let a = h1[i * ew + k];
            for (o, &w) in out.iter_mut().zip(params.w2.row(k)) {
                *o += a * w as f64;
            }
        }
    }

    // ω = W3ᵀ · h
    let mut omega = vec![0.0f64; c];
    for (q, &hq) in h2.iter().enumerate() {
        for (o, &w) in omega.iter_mut().zip(params.w3.row(q)) {
            *o += hq * w as f64;
        }
    }

    let centroids: Vec<f64> = params.centroids.iter().map(|&v| v as f64).collect();
    let log_sigma: Vec<f64> = (0..c).map(|k| params.log_sigma(k)).collect();
    let (score, active) = score_parts(&omega, &centroids, &log_sigma, cfg.squared_distance);
    Ok((
        score,
        HeadActivation {
            input: input.clone(),
            h1,
            h2,
            omega,
            score,
            active,
        },
    ))
}

/// Gradients of a scalar loss with respect to every head parameter, in the
/// same layout as [`HeadParams::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w3: Vec<f64>,
    pub centroids: Vec<f64>,
    pub rho: Vec<f64>,
}

impl HeadGradients {
    pub fn zeros(cfg: &HeadConfig) -> Self {
        HeadGradients {
            w1: vec![0.0; cfg.visual_tokens * cfg.tokens],
            w2: vec![0.0; cfg.embed_width * cfg.width],
            w3: vec![0.0; cfg.flat_len() * cfg.prototypes],
            centroids: vec![0.0; cfg.prototypes],
            rho: vec![0.0; cfg.prototypes],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [&self.w1, &self.w2, &self.w3, &self.centroids, &self.rho]
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &HeadGradients) {
        let dst = [
            &mut self.w1,
            &mut self.w2,
            &mut self.w3,
            &mut self.centroids,
            &mut self.rho,
        ];
        for (d, s) in dst.into_iter().zip(other.tensors()) {
            d.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
    }
}

/// Back-propagates `dL/ds` through the head.
///
/// Only the prototype attaining the score receives gradient. With the
/// unsquared distance, `sign(d)·|d| = d`, so `∂s/∂ω = 1/(2σ²)` everywhere,
/// including `ω = c`.
pub fn head_backward(act: &HeadActivation, params: &HeadParams, dl_ds: f64) -> Result<HeadGradients> {
    let cfg = &params.config;
    let (tv, ew, t, e, c) = (
        cfg.visual_tokens,
        cfg.embed_width,
        cfg.tokens,
        cfg.width,
        cfg.prototypes,
    );
    if act.input.shape() != (tv, ew)
        || act.h1.len() != t * ew
        || act.h2.len() != t * e
        || act.omega.len() != c
        || act.active >= c
    {
        return Err(Error::Internal(
            "activation does not match head parameters".into(),
        ));
    }
    let mut grads = HeadGradients::zeros(cfg);
    if dl_ds == 0.0 {
        return Ok(grads);
    }

    let k = act.active;
    let log_sigma = params.log_sigma(k);
    let d = act.omega[k] - params.centroids[k] as f64;
    let inv_two_var = 0.5 * libm::exp(-2.0 * log_sigma);
    let ds_dd = if cfg.squared_distance {
        2.0 * d.abs() * inv_two_var
    } else {
        inv_two_var
    };
    let term = distance_term(d, log_sigma, cfg.squared_distance);
    let ds_dlog_sigma = -2.0 * term + c as f64;

    let mut g_omega = vec![0.0f64; c];
    g_omega[k] = dl_ds * ds_dd;
    grads.centroids[k] = -g_omega[k];
    grads.rho[k] = dl_ds * ds_dlog_sigma * sigmoid(params.rho[k] as f64);

    // W3 and h
    let mut g_h = vec![0.0f64; t * e];
    for (q, gh) in g_h.iter_mut().enumerate() {
        let w3row = params.w3.row(q);
        let mut acc = 0.0;
        for col in 0..c {
            grads.w3[q * c + col] = act.h2[q] * g_omega[col];
            acc += w3row[col] as f64 * g_omega[col];
        }
        *gh = acc;
    }

    // W2[k][j] grad = Σ_i H1[i][k] · G[i][j];  G_H1[i][k] = Σ_j G[i][j] · W2[k][j]
    let mut g_h1 = vec![0.0f64; t * ew];
    for i in 0..t {
        let g_row = &g_h[i * e..(i + 1) * e];
        for kk in 0..ew {
            let a = act.h1[i * ew + kk];
            let w2row = params.w2.row(kk);
            let gw2 = &mut grads.w2[kk * e..(kk + 1) * e];
            let mut acc = 0.0;
            for j in 0..e {
                gw2[j] += a * g_row[j];
                acc += g_row[j] * w2row[j] as f64;
            }
            g_h1[i * ew + kk] = acc;
        }
    }

    // W1[r][i] grad = Σ_k V[r][k] · G_H1[i][k]
    for r in 0..tv {
        let vrow = act.input.row(r);
        for i in 0..t {
            let g = &g_h1[i * ew..(i + 1) * ew];
            grads.w1[r * t + i] = vrow.iter().zip(g).map(|(&v, &gv)| v as f64 * gv).sum();
        }
    }
    Ok(grads)
}
