//! Trapezoid quadrature for the integrated Gaussian process: the level is
//! `f(t) = alpha + integral of the rate p from the first node to t`, with the
//! rate linearly interpolated between equally spaced nodes. Exact for
//! constant and linear rate paths.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct IgpQuadrature {
    nodes: Vec<f64>,
    spacing: f64,
}

impl IgpQuadrature {
    /// `n >= 2` equally spaced nodes spanning `[lo, hi]`.
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2, "need at least 2 quadrature nodes");
        assert!(hi > lo, "empty quadrature range");
        let spacing = (hi - lo) / (n - 1) as f64;
        let nodes = (0..n).map(|i| lo + i as f64 * spacing).collect();
        IgpQuadrature { nodes, spacing }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    /// Weights of the full-range trapezoid rule.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut w = vec![self.spacing; n];
        w[0] = self.spacing / 2.0;
        w[n - 1] = self.spacing / 2.0;
        w
    }

    /// Row of the cumulative integral operator:
    /// `integral_{nodes[0]}^{t} p(u) du = row . p` for `t` in range.
    pub fn cumulative_row(&self, t: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let h = self.spacing;
        let mut w = vec![0.0; n];
        let (lo, hi) = self.range();
        debug_assert!(t >= lo - 1e-9 * h && t <= hi + 1e-9 * h, "t outside node range");
        let t = t.clamp(lo, hi);
        let k = (((t - lo) / h).floor() as usize).min(n - 2);
        for j in 0..k {
            w[j] += h / 2.0;
            w[j + 1] += h / 2.0;
        }
        // partial trapezoid from node k to t, with p linear on the segment
        let d = t - self.nodes[k];
        let theta = d / h;
        w[k] += d * (2.0 - theta) / 2.0;
        w[k + 1] += d * theta / 2.0;
        w
    }

    pub fn cumulative_matrix(&self, ts: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(ts.len(), self.n());
        for (r, &t) in ts.iter().enumerate() {
            let row = self.cumulative_row(t);
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        m
    }

    /// Row interpolating `p` itself at `t` (two nonzero entries).
    pub fn interp_row(&self, t: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let (lo, hi) = self.range();
        let t = t.clamp(lo, hi);
        let k = (((t - lo) / self.spacing).floor() as usize).min(n - 2);
        let theta = (t - self.nodes[k]) / self.spacing;
        let mut w = vec![0.0; n];
        w[k] = 1.0 - theta;
        w[k + 1] = theta;
        w
    }

    pub fn interp_matrix(&self, ts: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(ts.len(), self.n());
        for (r, &t) in ts.iter().enumerate() {
            let row = self.interp_row(t);
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_constant_rates() {
        let q = IgpQuadrature::new(-2.0, 3.0, 40);
        let p = vec![1.7; 40];
        for t in [-2.0, -0.31, 0.0, 1.234, 3.0] {
            let row = q.cumulative_row(t);
            let integral: f64 = row.iter().zip(&p).map(|(w, v)| w * v).sum();
            assert!((integral - 1.7 * (t + 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_for_linear_rates() {
        let q = IgpQuadrature::new(0.0, 2.0, 21);
        let p: Vec<f64> = q.nodes().iter().map(|u| 3.0 * u - 1.0).collect();
        for t in [0.0, 0.37, 1.0, 1.99, 2.0] {
            let row = q.cumulative_row(t);
            let integral: f64 = row.iter().zip(&p).map(|(w, v)| w * v).sum();
            let analytic = 1.5 * t * t - t;
            assert!((integral - analytic).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn sine_integral_within_composite_trapezoid_error() {
        let q = IgpQuadrature::new(0.0, std::f64::consts::PI, 101);
        let p: Vec<f64> = q.nodes().iter().map(|u| u.sin()).collect();
        let integral: f64 = q.weights().iter().zip(&p).map(|(w, v)| w * v).sum();
        assert!((integral - 2.0).abs() < 3e-4, "integral {integral}");
        // and via the cumulative operator at the right endpoint
        let row = q.cumulative_row(std::f64::consts::PI);
        let via_cumulative: f64 = row.iter().zip(&p).map(|(w, v)| w * v).sum();
        assert!((via_cumulative - integral).abs() < 1e-12);
    }

    #[test]
    fn interpolation_hits_node_values() {
        let q = IgpQuadrature::new(0.0, 1.0, 11);
        let p: Vec<f64> = (0..11).map(|i| (i * i) as f64).collect();
        for (k, &u) in q.nodes().iter().enumerate() {
            let row = q.interp_row(u);
            let v: f64 = row.iter().zip(&p).map(|(w, x)| w * x).sum();
            assert!((v - p[k]).abs() < 1e-12);
        }
        let row = q.interp_row(0.25);
        let v: f64 = row.iter().zip(&p).map(|(w, x)| w * x).sum();
        assert!((v - (0.5 * 4.0 + 0.5 * 9.0)).abs() < 1e-12);
    }
}
