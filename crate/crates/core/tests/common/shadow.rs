//! Independent 64-bit reference of the head forward pass, written directly
//! from the formulas and sharing no code with the crate.

#![allow(dead_code)]

use vipera_core::head::HeadParams;
use vipera_core::Matrix;

#[derive(Debug, Clone)]
pub struct Shadow {
    pub tv: usize,
    pub ew: usize,
    pub t: usize,
    pub e: usize,
    pub c: usize,
    pub squared: bool,
    /// `W1, W2, W3, c, ρ` flattened row-major.
    pub tensors: [Vec<f64>; 5],
}

fn widen(xs: &[f32]) -> Vec<f64> {
    xs.iter().map(|&v| v as f64).collect()
}

impl Shadow {
    pub fn of(p: &HeadParams) -> Self {
        let cfg = p.config;
        Shadow {
            tv: cfg.visual_tokens,
            ew: cfg.embed_width,
            t: cfg.tokens,
            e: cfg.width,
            c: cfg.prototypes,
            squared: cfg.squared_distance,
            tensors: [
                widen(p.w1.as_slice()),
                widen(p.w2.as_slice()),
                widen(p.w3.as_slice()),
                widen(&p.centroids),
                widen(&p.rho),
            ],
        }
    }

    pub fn omega(&self, v: &Matrix) -> Vec<f64> {
        let [w1, w2, w3, _, _] = &self.tensors;
        let x = |r: usize, k: usize| v.get(r, k) as f64;
        let mut h1 = vec![vec![0.0; self.ew]; self.t];
        for (i, row) in h1.iter_mut().enumerate() {
            for (k, out) in row.iter_mut().enumerate() {
                *out = (0..self.tv).map(|r| w1[r * self.t + i] * x(r, k)).sum();
            }
        }
        let mut h = Vec::with_capacity(self.t * self.e);
        for row in &h1 {
            for j in 0..self.e {
                h.push((0..self.ew).map(|k| row[k] * w2[k * self.e + j]).sum::<f64>());
            }
        }
        (0..self.c)
            .map(|col| h.iter().enumerate().map(|(q, hq)| hq * w3[q * self.c + col]).sum())
            .collect()
    }

    /// Per-prototype terms; the score is their minimum.
    pub fn terms(&self, v: &Matrix) -> Vec<f64> {
        let omega = self.omega(v);
        let [_, _, _, cen, rho] = &self.tensors;
        (0..self.c)
            .map(|k| {
                let log_sigma = (1.0 + rho[k].exp()).ln();
                let sigma2 = (2.0 * log_sigma).exp();
                let d = omega[k] - cen[k];
                let signed = if self.squared { d * d.abs() } else { d };
                signed / (2.0 * sigma2) + self.c as f64 * log_sigma
            })
            .collect()
    }

    pub fn score(&self, v: &Matrix) -> f64 {
        self.terms(v).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Per-example loss: mean BCE of `sigmoid(s_b)` against the label.
    pub fn loss(&self, windows: &[Matrix], target: f64) -> f64 {
        let n = windows.len() as f64;
        windows
            .iter()
            .map(|w| {
                let p = 1.0 / (1.0 + (-self.score(w)).exp());
                -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n
    }

    /// Smallest `|ω_k − c_k|`; with the squared distance the second
    /// derivative jumps where this is zero.
    pub fn kink_distance(&self, v: &Matrix) -> f64 {
        self.omega(v)
            .iter()
            .zip(&self.tensors[3])
            .map(|(o, c)| (o - c).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Gap between the two smallest prototype terms, infinite for `C = 1`.
    pub fn margin(&self, v: &Matrix) -> f64 {
        let mut t = self.terms(v);
        t.sort_by(f64::total_cmp);
        if t.len() < 2 {
            f64::INFINITY
        } else {
            t[1] - t[0]
        }
    }
}

/// Central finite difference of `f` with respect to every shadow parameter.
pub fn numeric_gradient(base: &Shadow, step: f64, f: impl Fn(&Shadow) -> f64) -> [Vec<f64>; 5] {
    let mut out: [Vec<f64>; 5] = Default::default();
    for (ti, tensor) in base.tensors.iter().enumerate() {
        out[ti] = (0..tensor.len())
            .map(|j| {
                let mut plus = base.clone();
                plus.tensors[ti][j] += step;
                let mut minus = base.clone();
                minus.tensors[ti][j] -= step;
                (f(&plus) - f(&minus)) / (2.0 * step)
            })
            .collect();
    }
    out
}

/// Largest relative error between analytic and numeric gradients, with an
/// absolute floor for entries that are both near zero.
pub fn max_relative_error(analytic: [&[f64]; 5], numeric: &[Vec<f64>; 5]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&x, &y) in a.iter().zip(n) {
            let scale = x.abs().max(y.abs()).max(1e-6);
            worst = worst.max((x - y).abs() / scale);
        }
    }
    worst
}
