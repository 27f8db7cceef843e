//! Composite Gauss-Legendre rules.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    pub fn extend(&mut self, other: Rule) {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
    }

    /// Pushes the rule forward through `x = g(s)` with Jacobian `dg`.
    pub fn map(&self, g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64) -> Rule {
        Rule {
            nodes: self.nodes.iter().map(|s| g(*s)).collect(),
            weights: self.nodes.iter().zip(&self.weights).map(|(s, w)| w * dg(*s)).collect(),
        }
    }
}

/// `order`-point Gauss-Legendre rule on each panel `[b_i, b_{i+1}]`.
pub fn panels(breaks: &[f64], order: usize) -> Rule {
    let gl = GaussLegendre::new(NonZeroUsize::new(order.max(1)).unwrap());
    let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rule = Rule::default();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wt) in &pairs {
            rule.nodes.push(mid + half * x);
            rule.weights.push(half * wt);
        }
    }
    rule
}

/// `count` equal panels on `[a, b]`.
pub fn uniform(a: f64, b: f64, count: usize, order: usize) -> Rule {
    let count = count.max(1);
    let breaks: Vec<f64> = (0..=count).map(|i| a + (b - a) * i as f64 / count as f64).collect();
    panels(&breaks, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_nodes() {
        let r = panels(&[-1.0, 1.0], 2);
        let s = 3f64.sqrt().recip();
        assert!((r.nodes[0] + s).abs() < 1e-15 && (r.nodes[1] - s).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_degree_2n_minus_1() {
        let r = uniform(0.0, 2.0, 3, 5);
        let v = r.integrate(|x| x.powi(9) - 3.0 * x.powi(4));
        let exact = 2f64.powi(10) / 10.0 - 3.0 * 2f64.powi(5) / 5.0;
        assert!((v - exact).abs() < 1e-11 * exact.abs());
    }

    #[test]
    fn mapped_rule() {
        // int_0^4 sqrt(b) db with b = v^2
        let r = uniform(0.0, 2.0, 2, 8).map(|v| v * v, |v| 2.0 * v);
        let v = r.integrate(f64::sqrt);
        assert!((v - 16.0 / 3.0).abs() < 1e-12);
    }
}
