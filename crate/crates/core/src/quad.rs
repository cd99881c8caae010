//! Integration over the 4-ball: closed-form monomial moments and a hyperspherical
//! product rule for everything else.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::RwLock;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NahmError, Result};
use crate::gauge::Point4;
use crate::linalg::{c64, pairwise_sum, pairwise_sum_real};

/// Γ(k/2) for a positive integer k.
fn gamma_half(k: u32) -> f64 {
    let mut g = if k % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if k % 2 == 0 { 1.0 } else { 0.5 };
    while 2.0 * x < k as f64 {
        g *= x;
        x += 1.0;
    }
    g
}

/// ∫ over the unit 3-sphere of x^α.
pub fn sphere_moment(alpha: [u32; 4]) -> f64 {
    if alpha.iter().any(|a| a % 2 == 1) {
        return 0.0;
    }
    let k: u32 = alpha.iter().sum();
    2.0 * alpha.iter().map(|&a| gamma_half(a + 1)).product::<f64>() / gamma_half(k + 4)
}

/// ∫_{B(R)} x^α dx, exactly.
pub fn monomial_integral(alpha: [u32; 4], r: f64) -> f64 {
    let k: u32 = alpha.iter().sum();
    sphere_moment(alpha) * r.powi(k as i32 + 4) / (k as f64 + 4.0)
}

pub fn ball_volume(r: f64) -> f64 {
    0.5 * PI * PI * r.powi(4)
}

pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).expect("nonzero");
    GaussLegendre::new(n).as_node_weight_pairs().to_vec()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadOrders {
    pub nr: usize,
    pub nt1: usize,
    pub nt2: usize,
    pub nphi: usize,
}

impl Default for QuadOrders {
    fn default() -> Self {
        QuadOrders { nr: 24, nt1: 20, nt2: 20, nphi: 24 }
    }
}

impl QuadOrders {
    pub fn doubled(&self) -> Self {
        QuadOrders { nr: 2 * self.nr, nt1: 2 * self.nt1, nt2: 2 * self.nt2, nphi: 2 * self.nphi }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.nr, self.nt1, self.nt2, self.nphi];
        if all.iter().any(|&v| v < 2) {
            return Err(NahmError::InvalidParameter { field: "quad", reason: format!("every order must be >= 2, got {all:?}") });
        }
        Ok(())
    }
}

/// Product rule in (r, θ₁, θ₂, φ): Gauss–Legendre in r and both polar angles,
/// trapezoid in the periodic angle.
#[derive(Clone, Debug)]
pub struct BallRule {
    pub nodes: Vec<Point4>,
    pub weights: Vec<f64>,
    pub orders: QuadOrders,
    pub radius: f64,
}

pub fn ball_rule(orders: QuadOrders, radius: f64) -> Result<BallRule> {
    shell_rule(orders, 0.0, radius)
}

/// Rule on the shell a ≤ |x| ≤ b.
pub fn shell_rule(orders: QuadOrders, a: f64, b: f64) -> Result<BallRule> {
    orders.validate()?;
    if !(b > a && a >= 0.0) {
        return Err(NahmError::InvalidParameter { field: "radius", reason: format!("bad shell [{a}, {b}]") });
    }
    let gr = gauss_legendre(orders.nr);
    let g1 = gauss_legendre(orders.nt1);
    let g2 = gauss_legendre(orders.nt2);
    let mut nodes = Vec::with_capacity(orders.nr * orders.nt1 * orders.nt2 * orders.nphi);
    let mut weights = Vec::with_capacity(nodes.capacity());
    let dphi = 2.0 * PI / orders.nphi as f64;
    for &(xr, wr) in &gr {
        let r = 0.5 * (b - a) * xr + 0.5 * (b + a);
        let wr = 0.5 * (b - a) * wr * r.powi(3);
        for &(x1, w1) in &g1 {
            let t1 = 0.5 * PI * (x1 + 1.0);
            let w1 = 0.5 * PI * w1 * t1.sin().powi(2);
            for &(x2, w2) in &g2 {
                let t2 = 0.5 * PI * (x2 + 1.0);
                let w2 = 0.5 * PI * w2 * t2.sin();
                for l in 0..orders.nphi {
                    let phi = dphi * l as f64;
                    let (s1, s2) = (t1.sin(), t2.sin());
                    nodes.push([
                        r * t1.cos(),
                        r * s1 * t2.cos(),
                        r * s1 * s2 * phi.cos(),
                        r * s1 * s2 * phi.sin(),
                    ]);
                    weights.push(wr * w1 * w2 * dphi);
                }
            }
        }
    }
    Ok(BallRule { nodes, weights, orders, radius: b })
}

impl BallRule {
    /// Evaluates `f` at the nodes in parallel and sums by a fixed pairwise tree.
    pub fn integrate<F>(&self, f: F) -> c64
    where
        F: Fn(&Point4) -> c64 + Sync,
    {
        let vals: Vec<c64> = self
            .nodes
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(x, w)| f(x) * *w)
            .collect();
        pairwise_sum(&vals)
    }

    pub fn integrate_real<F>(&self, f: F) -> f64
    where
        F: Fn(&Point4) -> f64 + Sync,
    {
        let vals: Vec<f64> = self
            .nodes
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(x, w)| f(x) * *w)
            .collect();
        pairwise_sum_real(&vals)
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum_real(&self.weights)
    }

    /// Every moment ∫x^α with |α| ≤ max_degree, in lexicographic order of α.
    /// One pass over the nodes; chunk sums are combined pairwise in a fixed order.
    pub fn moment_table(&self, max_degree: u32) -> Vec<([u32; 4], f64)> {
        let d = max_degree as usize;
        let mut alphas = Vec::new();
        for a in 0..=max_degree {
            for b in 0..=max_degree - a {
                for c in 0..=max_degree - a - b {
                    for e in 0..=max_degree - a - b - c {
                        alphas.push([a, b, c, e]);
                    }
                }
            }
        }
        const CHUNK: usize = 2048;
        let partial: Vec<Vec<f64>> = self
            .nodes
            .par_chunks(CHUNK)
            .zip(self.weights.par_chunks(CHUNK))
            .map(|(xs, ws)| {
                let mut acc = vec![0.0; alphas.len()];
                let mut pw = vec![[1.0; 4]; d + 1];
                for (x, &w) in xs.iter().zip(ws) {
                    for k in 1..=d {
                        for i in 0..4 {
                            pw[k][i] = pw[k - 1][i] * x[i];
                        }
                    }
                    for (s, al) in acc.iter_mut().zip(&alphas) {
                        *s += w * pw[al[0] as usize][0] * pw[al[1] as usize][1] * pw[al[2] as usize][2] * pw[al[3] as usize][3];
                    }
                }
                acc
            })
            .collect();
        alphas
            .iter()
            .enumerate()
            .map(|(j, al)| {
                let col: Vec<f64> = partial.iter().map(|p| p[j]).collect();
                (*al, pairwise_sum_real(&col))
            })
            .collect()
    }
}

/// ∫_a^b r^{k+3} (r² + ρ²)^{-β} dr by composite Gauss–Legendre on panels that
/// refine geometrically towards the scale ρ.
pub fn radial_integral(k: u32, beta: f64, rho2: f64, a: f64, b: f64) -> f64 {
    radial_integral_pow(k as f64, beta, rho2, a, b)
}

/// ∫_a^b r^{s+3} (r² + ρ²)^{-β} dr for real s > −4.
pub fn radial_integral_pow(s: f64, beta: f64, rho2: f64, a: f64, b: f64) -> f64 {
    if beta == 0.0 {
        let p = s + 4.0;
        return (b.powf(p) - a.powf(p)) / p;
    }
    let rho = rho2.sqrt();
    let mut edges = vec![a];
    let mut t = rho / 64.0;
    while t < b {
        if t > a {
            edges.push(t);
        }
        t *= 2.0;
    }
    edges.push(b);
    let g = gauss_legendre(40);
    let mut parts = Vec::with_capacity(edges.len() * g.len());
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for &(x, wt) in &g {
            let r = 0.5 * (hi - lo) * x + 0.5 * (hi + lo);
            parts.push(0.5 * (hi - lo) * wt * r.powf(s + 3.0) * (r * r + rho2).powf(-beta));
        }
    }
    pairwise_sum_real(&parts)
}

/// w(x) = |x − c|² + ρ²; the denominators of the BPST potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weight {
    pub center: Point4,
    pub rho2: f64,
}

impl Weight {
    pub fn eval(&self, x: &Point4) -> f64 {
        (0..4).map(|i| (x[i] - self.center[i]).powi(2)).sum::<f64>() + self.rho2
    }

    pub fn is_centered(&self) -> bool {
        self.center.iter().all(|c| *c == 0.0)
    }
}

enum MomentKind {
    /// Centered weight; `rpow` adds an extra factor |x|^rpow.
    Radial { rho2: Option<f64>, rpow: f64 },
    Rule { rule: BallRule, weight: Weight, cols: RwLock<HashMap<u64, Vec<f64>>> },
}

/// Moments ∫_{a ≤ |x| ≤ b} x^α w(x)^{-β} dx, cached.
pub struct Moments {
    kind: MomentKind,
    pub inner: f64,
    pub outer: f64,
    radial: RwLock<HashMap<(u32, u64), f64>>,
    general: RwLock<HashMap<([u32; 4], u64), f64>>,
}

impl Moments {
    /// Plain Lebesgue moments on the ball.
    pub fn flat(radius: f64) -> Self {
        Self::new_radial(None, 0.0, radius)
    }

    pub fn new(weight: Option<Weight>, radius: f64, orders: QuadOrders) -> Result<Self> {
        Self::on_shell(weight, 0.0, radius, orders)
    }

    pub fn on_shell(weight: Option<Weight>, a: f64, b: f64, orders: QuadOrders) -> Result<Self> {
        match weight {
            None => Ok(Self::new_radial(None, a, b)),
            Some(w) if w.is_centered() => Ok(Self::new_radial(Some(w.rho2), a, b)),
            Some(w) => Ok(Moments {
                kind: MomentKind::Rule { rule: shell_rule(orders, a, b)?, weight: w, cols: RwLock::new(HashMap::new()) },
                inner: a,
                outer: b,
                radial: RwLock::new(HashMap::new()),
                general: RwLock::new(HashMap::new()),
            }),
        }
    }

    fn new_radial(rho2: Option<f64>, a: f64, b: f64) -> Self {
        Moments {
            kind: MomentKind::Radial { rho2, rpow: 0.0 },
            inner: a,
            outer: b,
            radial: RwLock::new(HashMap::new()),
            general: RwLock::new(HashMap::new()),
        }
    }

    /// Same centered weight with an extra radial factor |x|^p (used for pairings
    /// against fields carrying the singular gauge x/|x|).
    pub fn with_radial_power(&self, p: f64) -> Result<Self> {
        match &self.kind {
            MomentKind::Radial { rho2, .. } => Ok(Moments {
                kind: MomentKind::Radial { rho2: *rho2, rpow: p },
                inner: self.inner,
                outer: self.outer,
                radial: RwLock::new(HashMap::new()),
                general: RwLock::new(HashMap::new()),
            }),
            MomentKind::Rule { .. } => Err(NahmError::InvalidParameter {
                field: "field.center",
                reason: "radial reweighting needs a weight centered at the origin".into(),
            }),
        }
    }

    /// The same weight restricted to the shell a ≤ |x| ≤ b.
    pub fn restricted(&self, a: f64, b: f64, orders: QuadOrders) -> Result<Self> {
        match &self.kind {
            MomentKind::Radial { rho2, rpow } => Ok(Moments {
                kind: MomentKind::Radial { rho2: *rho2, rpow: *rpow },
                inner: a,
                outer: b,
                radial: RwLock::new(HashMap::new()),
                general: RwLock::new(HashMap::new()),
            }),
            MomentKind::Rule { weight, .. } => Self::on_shell(Some(*weight), a, b, orders),
        }
    }

    /// Whether odd monomials integrate to zero, so Gram matrices split by parity class.
    pub fn parity_symmetric(&self) -> bool {
        matches!(self.kind, MomentKind::Radial { .. })
    }

    pub fn moment(&self, alpha: [u32; 4], beta: f64) -> f64 {
        match &self.kind {
            MomentKind::Radial { rho2, rpow } => {
                let s = sphere_moment(alpha);
                if s == 0.0 {
                    return 0.0;
                }
                let k: u32 = alpha.iter().sum();
                let beta = if rho2.is_none() { 0.0 } else { beta };
                let key = (k, beta.to_bits());
                if let Some(v) = self.radial.read().unwrap().get(&key) {
                    return s * v;
                }
                let v = radial_integral_pow(k as f64 + rpow, beta, rho2.unwrap_or(0.0), self.inner, self.outer);
                self.radial.write().unwrap().insert(key, v);
                s * v
            }
            MomentKind::Rule { rule, weight, cols } => {
                let key = (alpha, beta.to_bits());
                if let Some(v) = self.general.read().unwrap().get(&key) {
                    return *v;
                }
                let wcol = {
                    let have = cols.read().unwrap().contains_key(&beta.to_bits());
                    if !have {
                        let col: Vec<f64> = rule
                            .nodes
                            .iter()
                            .zip(&rule.weights)
                            .map(|(x, w)| w * weight.eval(x).powf(-beta))
                            .collect();
                        cols.write().unwrap().insert(beta.to_bits(), col);
                    }
                    cols.read().unwrap()[&beta.to_bits()].clone()
                };
                let vals: Vec<f64> = rule
                    .nodes
                    .iter()
                    .zip(&wcol)
                    .map(|(x, w)| w * (0..4).map(|i| x[i].powi(alpha[i] as i32)).product::<f64>())
                    .collect();
                let v = pairwise_sum_real(&vals);
                self.general.write().unwrap().insert(key, v);
                v
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_half_values() {
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(2), 1.0);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-14);
        assert_eq!(gamma_half(8), 6.0);
    }

    #[test]
    fn volume_and_second_moment() {
        assert!((monomial_integral([0; 4], 1.0) - PI * PI / 2.0).abs() < 1e-14);
        assert!((monomial_integral([2, 0, 0, 0], 1.0) - PI * PI / 12.0).abs() < 1e-14);
        assert_eq!(monomial_integral([1, 0, 0, 0], 2.0), 0.0);
    }

    #[test]
    fn moment_table_matches_direct_sums() {
        let rule = ball_rule(QuadOrders { nr: 6, nt1: 5, nt2: 5, nphi: 7 }, 0.8).unwrap();
        let table = rule.moment_table(4);
        assert_eq!(table.len(), 70);
        for (al, m) in table {
            let q = rule.integrate_real(|x| (0..4).map(|i| x[i].powi(al[i] as i32)).product());
            assert!((m - q).abs() <= 1e-14 * (1.0 + q.abs()), "{al:?}");
        }
    }

    #[test]
    fn radial_integral_closed_forms() {
        // d/dr [−(3r² + ρ²) / (12 (r² + ρ²)³)] = r³ / (r² + ρ²)⁴
        let rho2: f64 = 0.09;
        let f = |r: f64| -(3.0 * r * r + rho2) / (12.0 * (r * r + rho2).powi(3));
        let exact = f(1.0) - f(0.0);
        let num = radial_integral(0, 4.0, rho2, 0.0, 1.0);
        assert!((num - exact).abs() < 1e-13 * exact.abs());
    }

    #[test]
    fn shell_rule_volume() {
        let rule = shell_rule(QuadOrders::default(), 0.5, 1.0).unwrap();
        let v = ball_volume(1.0) - ball_volume(0.5);
        assert!((rule.total_weight() - v).abs() < 1e-12 * v);
    }
}
