//! Monomials in four variables and small sparse scalar polynomials.

use std::collections::{BTreeMap, HashMap};

use crate::gauge::Point4;

pub type Mono = [u8; 4];

pub fn degree(a: &Mono) -> usize {
    a.iter().map(|&v| v as usize).sum()
}

/// All monomials of total degree ≤ `deg`, ordered by degree and then lexicographically.
pub fn monomials(deg: usize) -> Vec<Mono> {
    let mut out = Vec::new();
    for d in 0..=deg {
        for a in 0..=d {
            for b in 0..=d - a {
                for c in 0..=d - a - b {
                    out.push([a as u8, b as u8, c as u8, (d - a - b - c) as u8]);
                }
            }
        }
    }
    out
}

pub fn mono_count(deg: usize) -> usize {
    (deg + 1) * (deg + 2) * (deg + 3) * (deg + 4) / 24
}

pub fn add(a: &Mono, b: &Mono) -> Mono {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

pub fn eval_mono(a: &Mono, x: &Point4) -> f64 {
    let mut v = 1.0;
    for i in 0..4 {
        if a[i] > 0 {
            v *= x[i].powi(a[i] as i32);
        }
    }
    v
}

/// Parity class of a monomial: bit i set when the exponent of x_i is odd.
pub fn parity(a: &Mono) -> usize {
    (0..4).map(|i| ((a[i] & 1) as usize) << i).sum()
}

pub fn unit(mu: usize) -> Mono {
    let mut a = [0u8; 4];
    a[mu] = 1;
    a
}

/// Indexing of the monomials of degree ≤ `degree`, split into the classes
/// used for block-diagonal Gram matrices.
#[derive(Clone, Debug)]
pub struct MonoIndex {
    pub degree: usize,
    pub monos: Vec<Mono>,
    pos: HashMap<Mono, usize>,
    pub n_classes: usize,
}

impl MonoIndex {
    pub fn new(degree: usize, split_parity: bool) -> Self {
        let monos = monomials(degree);
        let pos = monos.iter().enumerate().map(|(i, m)| (*m, i)).collect();
        MonoIndex { degree, monos, pos, n_classes: if split_parity { 16 } else { 1 } }
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    pub fn find(&self, a: &Mono) -> Option<usize> {
        self.pos.get(a).copied()
    }

    pub fn class_of(&self, a: &Mono) -> usize {
        if self.n_classes == 1 {
            0
        } else {
            parity(a)
        }
    }

    pub fn class_members(&self, k: usize) -> Vec<Mono> {
        self.monos.iter().filter(|m| self.class_of(m) == k).copied().collect()
    }
}

/// Real scalar polynomial with sparse monomial storage.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarPoly {
    pub terms: BTreeMap<Mono, f64>,
}

impl ScalarPoly {
    pub fn constant(c: f64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert([0; 4], c);
        }
        ScalarPoly { terms }
    }

    pub fn monomial(a: Mono, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(a, c);
        ScalarPoly { terms }
    }

    /// |x − c|² + s.
    pub fn shifted_square(center: &Point4, s: f64) -> Self {
        let mut p = ScalarPoly::constant(s + center.iter().map(|v| v * v).sum::<f64>());
        for mu in 0..4 {
            let mut a = [0u8; 4];
            a[mu] = 2;
            p.add_term(a, 1.0);
            p.add_term(unit(mu), -2.0 * center[mu]);
        }
        p.prune();
        p
    }

    /// R² − |x|², the bubble factor.
    pub fn bubble(radius: f64) -> Self {
        let mut p = ScalarPoly::constant(radius * radius);
        for mu in 0..4 {
            let mut a = [0u8; 4];
            a[mu] = 2;
            p.add_term(a, -1.0);
        }
        p
    }

    pub fn add_term(&mut self, a: Mono, c: f64) {
        *self.terms.entry(a).or_insert(0.0) += c;
    }

    fn prune(&mut self) {
        self.terms.retain(|_, v| *v != 0.0);
    }

    pub fn mul(&self, other: &ScalarPoly) -> ScalarPoly {
        let mut out = ScalarPoly::default();
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                out.add_term(add(a, b), x * y);
            }
        }
        out.prune();
        out
    }

    pub fn scale(&self, s: f64) -> ScalarPoly {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= s;
        }
        out.prune();
        out
    }

    pub fn plus(&self, other: &ScalarPoly) -> ScalarPoly {
        let mut out = self.clone();
        for (a, v) in &other.terms {
            out.add_term(*a, *v);
        }
        out.prune();
        out
    }

    pub fn deriv(&self, mu: usize) -> ScalarPoly {
        let mut out = ScalarPoly::default();
        for (a, v) in &self.terms {
            if a[mu] > 0 {
                let mut b = *a;
                b[mu] -= 1;
                out.add_term(b, v * a[mu] as f64);
            }
        }
        out.prune();
        out
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &Point4) -> f64 {
        self.terms.iter().map(|(a, v)| v * eval_mono(a, x)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_binomial() {
        for d in 0..10 {
            assert_eq!(monomials(d).len(), mono_count(d));
        }
    }

    #[test]
    fn ordering_is_by_degree() {
        let m = monomials(3);
        assert_eq!(m[0], [0, 0, 0, 0]);
        assert!(m.windows(2).all(|w| degree(&w[0]) <= degree(&w[1])));
    }

    #[test]
    fn bubble_times_itself() {
        let b = ScalarPoly::bubble(1.0);
        let b2 = b.mul(&b);
        let x = [0.1, -0.2, 0.3, 0.4];
        assert!((b2.eval(&x) - b.eval(&x).powi(2)).abs() < 1e-15);
        assert_eq!(b2.degree(), 4);
    }

    #[test]
    fn shifted_square_evaluates() {
        let c = [0.1, 0.0, -0.2, 0.3];
        let w = ScalarPoly::shifted_square(&c, 0.04);
        let x = [0.5, 0.1, 0.2, -0.3];
        let direct: f64 = (0..4).map(|i| (x[i] - c[i]).powi(2)).sum::<f64>() + 0.04;
        assert!((w.eval(&x) - direct).abs() < 1e-15);
    }
}
