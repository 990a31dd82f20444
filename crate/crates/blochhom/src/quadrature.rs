//! Tensor-product wavenumber quadrature on the box |khat|_inf <= K_max.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    GaussLegendre,
    Trapezoid,
}

#[derive(Debug, Clone)]
pub struct WavenumberQuadrature {
    pub d: usize,
    pub rule: QuadratureRule,
    pub q: usize,
    pub k_max: f64,
    /// One-dimensional rule on [-K_max, K_max], ascending.
    pub axis_nodes: Vec<f64>,
    pub axis_weights: Vec<f64>,
}

impl WavenumberQuadrature {
    pub fn new(d: usize, rule: QuadratureRule, q: usize, k_max: f64) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(invalid("d", "must be 1 or 2"));
        }
        if q < 2 {
            return Err(invalid("q", "at least 2 nodes per axis are needed"));
        }
        if !(k_max.is_finite() && k_max > 0.0) {
            return Err(invalid("k_max", "must be positive"));
        }
        let (axis_nodes, axis_weights) = match rule {
            QuadratureRule::GaussLegendre => {
                let gl = GaussLegendre::new(NonZeroUsize::new(q).unwrap());
                let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                pairs.into_iter().map(|(x, w)| (x * k_max, w * k_max)).unzip()
            }
            QuadratureRule::Trapezoid => {
                let h = 2.0 * k_max / (q - 1) as f64;
                (0..q)
                    .map(|i| {
                        let w = if i == 0 || i == q - 1 { 0.5 * h } else { h };
                        (-k_max + i as f64 * h, w)
                    })
                    .unzip()
            }
        };
        Ok(WavenumberQuadrature { d, rule, q, k_max, axis_nodes, axis_weights })
    }

    pub fn len(&self) -> usize {
        self.q.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.q == 0
    }

    /// All nodes with weights; for d = 2 the second axis varies fastest.
    pub fn nodes(&self) -> Vec<([f64; 2], f64)> {
        if self.d == 1 {
            self.axis_nodes.iter().zip(&self.axis_weights).map(|(&k, &w)| ([k, 0.0], w)).collect()
        } else {
            let mut out = Vec::with_capacity(self.len());
            for (&k1, &w1) in self.axis_nodes.iter().zip(&self.axis_weights) {
                for (&k2, &w2) in self.axis_nodes.iter().zip(&self.axis_weights) {
                    out.push(([k1, k2], w1 * w2));
                }
            }
            out
        }
    }
}
