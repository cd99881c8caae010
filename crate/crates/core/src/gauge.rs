//! Gauge potentials on the ball: flat, BPST (regular gauge) and Poincaré twists.
//!
//! Every built-in potential is rational of the form A_μ = P_μ(x)/w(x) with P_μ a
//! matrix polynomial and w = |x − c|² + ρ² (or w ≡ 1), which is what lets the
//! Galerkin machinery keep all derivatives exact.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{NahmError, Result};
use crate::linalg::{adjoint, c64, ci, cr, cz, frobenius, identity, CMat};
use crate::poly::{eval_mono, Mono, ScalarPoly};
use crate::quad::{ball_rule, QuadOrders, Weight};

pub type Point4 = [f64; 4];

const SMALL_RANK: usize = 4;

/// The six coordinate planes μ < ν, 0-based.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

pub fn norm4(x: &Point4) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn sub4(a: &Point4, b: &Point4) -> Point4 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Flat {
        #[serde(default = "one")]
        rank: usize,
    },
    Bpst {
        rho: f64,
        #[serde(default)]
        center: Point4,
    },
    Twisted {
        base: Box<FieldSpec>,
        z: Point4,
    },
}

impl FieldSpec {
    pub fn build(&self) -> Result<GaugeField> {
        match self {
            FieldSpec::Flat { rank } => flat_field(*rank),
            FieldSpec::Bpst { rho, center } => bpst_field(*rho, *center),
            FieldSpec::Twisted { base, z } => Ok(twist(&base.build()?, *z)),
        }
    }

    pub fn is_flat(&self) -> bool {
        match self {
            FieldSpec::Flat { .. } => true,
            FieldSpec::Bpst { .. } => false,
            FieldSpec::Twisted { base, .. } => base.is_flat(),
        }
    }
}

/// 't Hooft symbol η_{aμν}, all indices 0-based with μ, ν = 3 the fourth axis.
pub fn thooft_eta(a: usize, mu: usize, nu: usize) -> f64 {
    if mu < 3 && nu < 3 {
        let (i, j, k) = (a, mu, nu);
        if i == j || j == k || i == k {
            return 0.0;
        }
        return if (j + 3 - i) % 3 == 1 { 1.0 } else { -1.0 };
    }
    if nu == 3 && mu == a {
        1.0
    } else if mu == 3 && nu == a {
        -1.0
    } else {
        0.0
    }
}

/// su(2) generators t_a = −iτ_a.
pub fn su2_generators() -> [CMat; 3] {
    let p = crate::clifford::pauli();
    [0, 1, 2].map(|a| Mat::from_fn(2, 2, |i, j| p[a][(i, j)] * ci(-1.0)))
}

#[derive(Clone, Debug)]
pub struct GaugeField {
    pub spec: FieldSpec,
    pub rank: usize,
    /// Common denominator w; `None` means w ≡ 1.
    pub weight: Option<Weight>,
    /// Numerators P_μ as sparse (monomial, r×r matrix) lists.
    pub numer: [Vec<(Mono, CMat)>; 4],
}

pub fn flat_field(rank: usize) -> Result<GaugeField> {
    if rank == 0 {
        return Err(NahmError::InvalidParameter { field: "field.rank", reason: "rank must be at least 1".into() });
    }
    Ok(GaugeField { spec: FieldSpec::Flat { rank }, rank, weight: None, numer: Default::default() })
}

/// Charge-one instanton in regular gauge, A_μ = η_{aμν}(x − c)_ν t_a / (|x − c|² + ρ²).
pub fn bpst_field(rho: f64, center: Point4) -> Result<GaugeField> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(NahmError::InvalidParameter { field: "field.rho", reason: format!("scale must be positive, got {rho}") });
    }
    let t = su2_generators();
    let mut numer: [Vec<(Mono, CMat)>; 4] = Default::default();
    for (mu, num) in numer.iter_mut().enumerate() {
        for nu in 0..4 {
            let mut lin = Mat::<c64>::zeros(2, 2);
            for (a, ta) in t.iter().enumerate() {
                let e = thooft_eta(a, mu, nu);
                if e != 0.0 {
                    lin += ta * faer::Scale(cr(e));
                }
            }
            if frobenius(lin.as_ref()) == 0.0 {
                continue;
            }
            num.push((crate::poly::unit(nu), lin.clone()));
            if center[nu] != 0.0 {
                num.push(([0; 4], &lin * faer::Scale(cr(-center[nu]))));
            }
        }
    }
    Ok(GaugeField {
        spec: FieldSpec::Bpst { rho, center },
        rank: 2,
        weight: Some(Weight { center, rho2: rho * rho }),
        numer,
    })
}

/// A_z = A + 2πi Σ z_μ dx_μ.
pub fn twist(base: &GaugeField, z: Point4) -> GaugeField {
    let mut numer = base.numer.clone();
    let w = base.weight_poly();
    let id = identity(base.rank);
    for mu in 0..4 {
        if z[mu] == 0.0 {
            continue;
        }
        for (a, v) in &w.terms {
            numer[mu].push((*a, &id * faer::Scale(ci(2.0 * PI * z[mu] * v))));
        }
    }
    GaugeField {
        spec: FieldSpec::Twisted { base: Box::new(base.spec.clone()), z },
        rank: base.rank,
        weight: base.weight,
        numer,
    }
}

fn eval_numer(terms: &[(Mono, CMat)], x: &Point4, r: usize) -> CMat {
    let mut out = Mat::<c64>::zeros(r, r);
    for (a, m) in terms {
        out += m * faer::Scale(cr(eval_mono(a, x)));
    }
    out
}

fn eval_numer_deriv(terms: &[(Mono, CMat)], x: &Point4, mu: usize, r: usize) -> CMat {
    let mut out = Mat::<c64>::zeros(r, r);
    for (a, m) in terms {
        if a[mu] == 0 {
            continue;
        }
        let mut b = *a;
        b[mu] -= 1;
        out += m * faer::Scale(cr(a[mu] as f64 * eval_mono(&b, x)));
    }
    out
}

impl GaugeField {
    pub fn weight_poly(&self) -> ScalarPoly {
        match &self.weight {
            None => ScalarPoly::constant(1.0),
            Some(w) => ScalarPoly::shifted_square(&w.center, w.rho2),
        }
    }

    pub fn weight_at(&self, x: &Point4) -> f64 {
        self.weight.map(|w| w.eval(x)).unwrap_or(1.0)
    }

    pub fn is_trivial(&self) -> bool {
        self.numer.iter().all(|v| v.is_empty())
    }

    pub fn potential(&self, x: &Point4) -> [CMat; 4] {
        let w = self.weight_at(x);
        [0, 1, 2, 3].map(|mu| eval_numer(&self.numer[mu], x, self.rank) * faer::Scale(cr(1.0 / w)))
    }

    /// ∂_μ A_ν, indexed [μ][ν].
    fn potential_jacobian(&self, x: &Point4) -> [[CMat; 4]; 4] {
        let w = self.weight_at(x);
        let dw: Point4 = match &self.weight {
            None => [0.0; 4],
            Some(wt) => [0, 1, 2, 3].map(|m| 2.0 * (x[m] - wt.center[m])),
        };
        let p: [CMat; 4] = [0, 1, 2, 3].map(|nu| eval_numer(&self.numer[nu], x, self.rank));
        [0, 1, 2, 3].map(|mu| {
            [0, 1, 2, 3].map(|nu| {
                let dp = eval_numer_deriv(&self.numer[nu], x, mu, self.rank);
                dp * faer::Scale(cr(1.0 / w)) - &p[nu] * faer::Scale(cr(dw[mu] / (w * w)))
            })
        })
    }

    /// F_{μν} = ∂_μA_ν − ∂_νA_μ + [A_μ, A_ν] over `PAIRS`, from the exact rational form.
    pub fn curvature(&self, x: &Point4) -> [CMat; 6] {
        let a = self.potential(x);
        let d = self.potential_jacobian(x);
        PAIRS.map(|(mu, nu)| &d[mu][nu] - &d[nu][mu] + &a[mu] * &a[nu] - &a[nu] * &a[mu])
    }

    /// Central-difference curvature from the potential alone.
    pub fn curvature_fd(&self, x: &Point4, h: f64) -> [CMat; 6] {
        let a = self.potential(x);
        let shifted = |mu: usize, s: f64| {
            let mut y = *x;
            y[mu] += s;
            self.potential(&y)
        };
        let d: Vec<[CMat; 4]> = (0..4)
            .map(|mu| {
                let (p, m) = (shifted(mu, h), shifted(mu, -h));
                [0, 1, 2, 3].map(|nu| (&p[nu] - &m[nu]) * faer::Scale(cr(0.5 / h)))
            })
            .collect();
        PAIRS.map(|(mu, nu)| &d[mu][nu] - &d[nu][mu] + &a[mu] * &a[nu] - &a[nu] * &a[mu])
    }

    /// Norm of the part of F that must vanish for an ASD field in this crate's orientation:
    /// the combinations F₁₂ − F₃₄, F₁₃ + F₂₄, F₁₄ − F₂₃.
    pub fn asd_residual(&self, x: &Point4) -> f64 {
        asd_part_norm(&self.curvature(x))
    }

    /// |F|² = Σ_{μ<ν} ‖F_{μν}‖²_F.
    pub fn energy_density(&self, x: &Point4) -> f64 {
        if self.rank <= SMALL_RANK {
            return self.energy_density_small(x);
        }
        self.curvature(x).iter().map(|f| frobenius(f.as_ref()).powi(2)).sum()
    }

    /// Allocation-free version of `energy_density` for small ranks (quadrature hot loop).
    fn energy_density_small(&self, x: &Point4) -> f64 {
        let r = self.rank;
        let w = self.weight_at(x);
        let dw: Point4 = match &self.weight {
            None => [0.0; 4],
            Some(wt) => [0, 1, 2, 3].map(|m| 2.0 * (x[m] - wt.center[m])),
        };
        let zero = [cz(); SMALL_RANK * SMALL_RANK];
        let mut p = [zero; 4];
        // dp[μ][ν] = ∂_μ P_ν
        let mut dp = [[zero; 4]; 4];
        for nu in 0..4 {
            for (a, m) in &self.numer[nu] {
                let v = eval_mono(a, x);
                for mu in 0..4 {
                    if a[mu] > 0 {
                        let mut b = *a;
                        b[mu] -= 1;
                        let dv = a[mu] as f64 * eval_mono(&b, x);
                        for i in 0..r {
                            for j in 0..r {
                                dp[mu][nu][i * r + j] += m[(i, j)] * dv;
                            }
                        }
                    }
                }
                for i in 0..r {
                    for j in 0..r {
                        p[nu][i * r + j] += m[(i, j)] * v;
                    }
                }
            }
        }
        let iw = 1.0 / w;
        let mut total = 0.0;
        for (mu, nu) in PAIRS {
            for i in 0..r {
                for j in 0..r {
                    let k = i * r + j;
                    let mut f = (dp[mu][nu][k] - dp[nu][mu][k]) * iw - (p[nu][k] * dw[mu] - p[mu][k] * dw[nu]) * (iw * iw);
                    for l in 0..r {
                        f += (p[mu][i * r + l] * p[nu][l * r + j] - p[nu][i * r + l] * p[mu][l * r + j]) * (iw * iw);
                    }
                    total += f.norm_sqr();
                }
            }
        }
        total
    }

    /// (1/8π²) ∫_{B(R)} |F|².
    pub fn ball_energy(&self, radius: f64, orders: QuadOrders) -> Result<f64> {
        if self.is_trivial() || matches!(self.spec, FieldSpec::Twisted { ref base, .. } if base.is_flat()) {
            return Ok(0.0);
        }
        let rule = ball_rule(orders, radius)?;
        Ok(rule.integrate_real(|x| self.energy_density(x)) / (8.0 * PI * PI))
    }

    /// Conjugation by a constant unitary, A ↦ U A U†.
    pub fn conjugated(&self, u: &CMat) -> GaugeField {
        let ud = adjoint(u.as_ref());
        let mut out = self.clone();
        for terms in out.numer.iter_mut() {
            for (_, m) in terms.iter_mut() {
                *m = u * &*m * &ud;
            }
        }
        out
    }
}

/// √(½ Σ ‖C_i‖²) for the three combinations listed at `asd_residual`; equals the
/// norm of the six components of the offending half of F.
pub fn asd_part_norm(f: &[CMat; 6]) -> f64 {
    let combos = [&f[0] - &f[5], &f[1] + &f[4], &f[2] - &f[3]];
    (0.5 * combos.iter().map(|c| frobenius(c.as_ref()).powi(2)).sum::<f64>()).sqrt()
}

pub fn curvature_norm(f: &[CMat; 6]) -> f64 {
    f.iter().map(|m| frobenius(m.as_ref()).powi(2)).sum::<f64>().sqrt()
}

/// Closed form of the BPST ball energy: 1 − 3s² + 2s³ with s = ρ²/(R² + ρ²).
pub fn bpst_ball_energy_exact(rho: f64, radius: f64) -> f64 {
    let s = rho * rho / (radius * radius + rho * rho);
    1.0 - 3.0 * s * s + 2.0 * s.powi(3)
}

/// Anti-Hermiticity defect max_μ ‖A_μ + A_μ†‖_F at x.
pub fn anti_hermitian_defect(a: &[CMat; 4]) -> f64 {
    a.iter()
        .map(|m| frobenius((m + adjoint(m.as_ref())).as_ref()))
        .fold(0.0, f64::max)
}

#[allow(dead_code)]
fn zero(r: usize) -> CMat {
    Mat::from_fn(r, r, |_, _| cz())
}
