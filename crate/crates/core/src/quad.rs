//! Quadrature, interpolation and finite-difference utilities shared by the solvers.

use gauss_quad::{FiniteAboveNegOneF64, GaussJacobi, GaussLegendre};
use nalgebra::DMatrix;
use std::num::NonZeroUsize;

/// Values `P_0(x) ..= P_nmax(x)` of the Legendre polynomials.
pub fn legendre_values(nmax: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; nmax + 1];
    p[0] = 1.0;
    if nmax >= 1 {
        p[1] = x;
    }
    for n in 1..nmax {
        let nf = n as f64;
        p[n + 1] = ((2.0 * nf + 1.0) * x * p[n] - nf * p[n - 1]) / (nf + 1.0);
    }
    p
}

/// `(P_n(x), P_n'(x))` for |x| < 1.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let p = legendre_values(n, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    let nf = n as f64;
    (p[n], nf * (x * p[n] - p[n - 1]) / (x * x - 1.0))
}

/// A quadrature rule on the reference interval [-1, 1] with ascending nodes.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Gauss-Legendre rule with `n` nodes.
    pub fn gauss(n: usize) -> Rule {
        let n = NonZeroUsize::new(n).expect("rule needs at least one node");
        let mut pairs: Vec<(f64, f64)> = GaussLegendre::new(n).as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Rule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Gauss-Lobatto-Legendre rule of polynomial order `order` (`order + 1` nodes).
    pub fn lobatto(order: usize) -> Rule {
        assert!(order >= 2, "lobatto order must be at least 2");
        let one = FiniteAboveNegOneF64::new(1.0).unwrap();
        let deg = NonZeroUsize::new(order - 1).unwrap();
        let mut interior: Vec<f64> =
            GaussJacobi::new(deg, one, one).as_node_weight_pairs().iter().map(|p| p.0).collect();
        interior.sort_by(f64::total_cmp);
        let nf = order as f64;
        for x in interior.iter_mut() {
            for _ in 0..3 {
                // Newton on P_n' using P_n'' = (2x P_n' - n(n+1) P_n) / (1 - x^2).
                let (p, dp) = legendre_with_derivative(order, *x);
                let d2p = (2.0 * *x * dp - nf * (nf + 1.0) * p) / (1.0 - *x * *x);
                *x -= dp / d2p;
            }
        }
        let mut nodes = Vec::with_capacity(order + 1);
        nodes.push(-1.0);
        nodes.extend(interior);
        nodes.push(1.0);
        let weights = nodes
            .iter()
            .map(|&x| {
                let p = legendre_values(order, x)[order];
                2.0 / (nf * (nf + 1.0) * p * p)
            })
            .collect();
        Rule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }

    /// Integral of `f` over [a, b] split into `panels` equal panels.
    pub fn composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + h * k as f64;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }
}

/// Cumulative integration matrix on arbitrary distinct nodes of [-1, 1]:
/// `J[k][l] = ∫_{-1}^{x_k} ℓ_l(t) dt`, where `ℓ_l` is the Lagrange basis polynomial.
pub fn cumulative_matrix(nodes: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let v = DMatrix::from_fn(n, n, |k, p| legendre_values(n - 1, nodes[k])[p]);
    let q = DMatrix::from_fn(n, n, |k, p| {
        let x = nodes[k];
        if p == 0 {
            x + 1.0
        } else {
            let vals = legendre_values(p + 1, x);
            (vals[p + 1] - vals[p - 1]) / (2.0 * p as f64 + 1.0)
        }
    });
    // J = Q V^{-1}  <=>  V^T J^T = Q^T
    let lu = v.transpose().lu();
    let jt = lu.solve(&q.transpose()).expect("Legendre Vandermonde is nonsingular at distinct nodes");
    jt.transpose()
}

/// Barycentric Lagrange interpolation on a fixed node set.
#[derive(Clone, Debug)]
pub struct Barycentric {
    pub nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Barycentric {
    pub fn new(nodes: &[f64]) -> Barycentric {
        let n = nodes.len();
        let mut weights = vec![1.0; n];
        for j in 0..n {
            for k in 0..n {
                if k != j {
                    weights[j] /= nodes[j] - nodes[k];
                }
            }
        }
        let scale = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        weights.iter_mut().for_each(|w| *w /= scale);
        Barycentric { nodes: nodes.to_vec(), weights }
    }

    /// Interpolation coefficients `c` with `p(x) = Σ c_j values_j`.
    pub fn coefficients(&self, x: f64) -> Vec<f64> {
        let mut c = vec![0.0; self.nodes.len()];
        if let Some(j) = self.nodes.iter().position(|&xj| xj == x) {
            c[j] = 1.0;
            return c;
        }
        let mut total = 0.0;
        for (j, (&xj, &wj)) in self.nodes.iter().zip(&self.weights).enumerate() {
            c[j] = wj / (x - xj);
            total += c[j];
        }
        c.iter_mut().for_each(|v| *v /= total);
        c
    }

    pub fn eval(&self, values: &[f64], x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xj, &wj), &fj) in self.nodes.iter().zip(&self.weights).zip(values) {
            let d = x - xj;
            if d == 0.0 {
                return fj;
            }
            let t = wj / d;
            num += t * fj;
            den += t;
        }
        num / den
    }
}

/// Fornberg finite-difference weights for derivatives `0..=order` at `x0`
/// on the stencil `xs`. Returns `w[d][j]`.
pub fn fornberg_weights(x0: f64, xs: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}
