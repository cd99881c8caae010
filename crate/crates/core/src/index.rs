//! Toeplitz symbol operators T = Σ f̂_μ ĉ_μ and their finite-section Fredholm index.
//!
//! T maps B_N ⊗ S₋ into B_{N+1} ⊗ S₊ (f̂_μ = P_{N+1}∘f_μ restricted to B_N). The
//! cokernel is measured through T^♯ = Σ f̂_μ ĉ_μ† on B_N ⊗ S₊, the compression of
//! the adjoint symbol, so both counts come from tall matrices whose near-null
//! singular values are meaningful.

use std::f64::consts::PI;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{sandwich, AnsatzSpace, Chirality, FieldOp};
use crate::bergmann::{BergmannSpace, LiftedPair};
use crate::clifford::{clifford_rep, epsilon};
use crate::diracop::{dirac_minus, dirac_plus, project_by_quadrature, setting_for, GreenSolver};
use crate::error::{NahmError, Result};
use crate::gauge::{flat_field, norm4, Point4};
use crate::linalg::{adjoint, c64, cr, identity, kron, singular_values, CMat};
use crate::nahm::fiber;
use crate::poly::{unit, ScalarPoly};
use crate::quad::QuadOrders;

/// Symbols closer than this (relative to R) to vanishing on ∂B are refused.
pub const MARGIN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Symbol {
    /// f_μ(x) = x_μ − y_μ.
    Affine { y: Point4 },
    /// Polynomial symbols with a degree supplied by the caller.
    Polynomial {
        #[serde(skip)]
        f: Vec<ScalarPoly>,
        degree: i32,
    },
    Composite { degree: i32 },
}

impl Symbol {
    fn polys(&self) -> Vec<ScalarPoly> {
        match self {
            Symbol::Affine { y } => (0..4)
                .map(|mu| {
                    let mut p = ScalarPoly::monomial(unit(mu), 1.0);
                    p.add_term([0; 4], -y[mu]);
                    p
                })
                .collect(),
            Symbol::Polynomial { f, .. } => f.clone(),
            Symbol::Composite { .. } => Vec::new(),
        }
    }
}

/// The assembled pair (T, T^♯) with the boundary margin min_{∂B}|f_T|.
#[derive(Clone)]
pub struct SymbolOp {
    pub symbol: Symbol,
    pub t: CMat,
    pub t_sharp: CMat,
    pub margin: f64,
    /// deg(f_T) when known: internal for affine symbols, supplied otherwise.
    pub degree: Option<i32>,
    pub rank: usize,
}

/// Degree of the affine symbol x − y on B(R): 1 inside, 0 outside.
pub fn affine_degree(y: &Point4, radius: f64) -> Result<i32> {
    let r = norm4(y);
    if (r - radius).abs() <= MARGIN_TOL * radius {
        return Err(NahmError::NotFredholm((r - radius).abs()));
    }
    Ok(if r < radius { 1 } else { 0 })
}

/// Points on the sphere of radius R: a hyperspherical grid plus the ±R e_μ poles.
pub fn sphere_samples(radius: f64, n: usize) -> Vec<Point4> {
    let n = n.max(2);
    let mut out = Vec::new();
    for mu in 0..4 {
        for s in [-1.0, 1.0] {
            let mut p = [0.0; 4];
            p[mu] = s * radius;
            out.push(p);
        }
    }
    for i in 0..n {
        let t1 = PI * (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let t2 = PI * (j as f64 + 0.5) / n as f64;
            for k in 0..2 * n {
                let ph = PI * k as f64 / n as f64;
                out.push([
                    radius * t1.cos(),
                    radius * t1.sin() * t2.cos(),
                    radius * t1.sin() * t2.sin() * ph.cos(),
                    radius * t1.sin() * t2.sin() * ph.sin(),
                ]);
            }
        }
    }
    out
}

/// min over sampled ∂B of |f(x)| = (Σ f_μ²)^{1/2}.
pub fn sampled_margin(f: &[ScalarPoly], radius: f64, n: usize) -> f64 {
    sphere_samples(radius, n)
        .iter()
        .map(|x| f.iter().map(|p| p.eval(x).powi(2)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
}

fn assemble(blocks: &[CMat], dagger: bool) -> CMat {
    let cl = clifford_rep();
    let (r, c) = (blocks[0].nrows(), blocks[0].ncols());
    let mut t = Mat::<c64>::zeros(2 * r, 2 * c);
    for (mu, b) in blocks.iter().enumerate() {
        let ch = if dagger { adjoint(cl.chat(mu).as_ref()) } else { cl.chat(mu).clone() };
        t += kron(b.as_ref(), ch.as_ref());
    }
    t
}

/// Builds T and T^♯ for a symbol between B_N (`lower`) and B_{N+1} (`upper`).
pub fn symbol_op(lower: &BergmannSpace, upper: &BergmannSpace, symbol: &Symbol) -> Result<SymbolOp> {
    let radius = lower.radius();
    let polys = symbol.polys();
    if polys.len() != 4 {
        return Err(NahmError::InvalidParameter { field: "symbol", reason: "four component functions are required".into() });
    }
    let (margin, degree) = match symbol {
        Symbol::Affine { y } => ((norm4(y) - radius).abs(), None),
        Symbol::Polynomial { degree, .. } => (sampled_margin(&polys, radius, 24), Some(*degree)),
        Symbol::Composite { .. } => unreachable!(),
    };
    if margin <= MARGIN_TOL * radius {
        return Err(NahmError::NotFredholm(margin));
    }
    let degree = match symbol {
        Symbol::Affine { y } => Some(affine_degree(y, radius)?),
        _ => degree,
    };
    let c = lower.space.comps();
    let id = FieldOp::identity(c);
    let beta = 2.0 * lower.kappa();
    let blocks: Vec<CMat> = polys
        .par_iter()
        .map(|p| sandwich(&upper.space, &id, &upper.basis, &lower.space, &FieldOp::multiply(p, c), &lower.basis, beta))
        .collect();
    Ok(SymbolOp {
        symbol: symbol.clone(),
        t: assemble(&blocks, false),
        t_sharp: assemble(&blocks, true),
        margin,
        degree,
        rank: lower.space.setting.rank,
    })
}

/// Affine symbol from an already assembled lifted pair.
pub fn affine_op(pair: &LiftedPair, y: &Point4) -> Result<SymbolOp> {
    let radius = pair.lower.radius();
    let degree = affine_degree(y, radius)?;
    let blocks = pair.shifted(y);
    Ok(SymbolOp {
        symbol: Symbol::Affine { y: *y },
        t: assemble(&blocks, false),
        t_sharp: assemble(&blocks, true),
        margin: (norm4(y) - radius).abs(),
        degree: Some(degree),
        rank: pair.lower.space.setting.rank,
    })
}

/// outer ∘ (1 ⊗ ĉ₁†) ∘ inner, and the matching ♯ composite through ĉ₁. `inner`
/// maps B_N → B_{N+1} and `outer` maps B_{N+1} → B_{N+2}.
pub fn composite(outer: &SymbolOp, inner: &SymbolOp) -> Result<SymbolOp> {
    if outer.t.ncols() != inner.t.nrows() {
        return Err(NahmError::DimensionMismatch(format!(
            "outer operator expects {} columns, inner produces {} rows",
            outer.t.ncols(),
            inner.t.nrows()
        )));
    }
    let cl = clifford_rep();
    let m = inner.t.nrows() / 2;
    let c1 = cl.chat(0);
    let flip = kron(identity(m).as_ref(), adjoint(c1.as_ref()).as_ref());
    let flip_sharp = kron(identity(m).as_ref(), c1.as_ref());
    let degree = match (outer.degree, inner.degree) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };
    Ok(SymbolOp {
        symbol: Symbol::Composite { degree: degree.unwrap_or(0) },
        t: &outer.t * &flip * &inner.t,
        t_sharp: &outer.t_sharp * &flip_sharp * &inner.t_sharp,
        margin: outer.margin.min(inner.margin),
        degree,
        rank: inner.rank,
    })
}

/// Near-null count of one tall matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NullCount {
    pub count: usize,
    pub gap: f64,
    /// Singular values divided by the largest one, ascending.
    pub relative: Vec<f64>,
}

pub fn null_count(t: &CMat, eps_rel: f64) -> Result<NullCount> {
    let mut s = singular_values(t.as_ref())?;
    s.sort_by(|a, b| a.total_cmp(b));
    let smax = s.last().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(NullCount { count: s.len(), gap: f64::INFINITY, relative: vec![0.0; s.len()] });
    }
    let relative: Vec<f64> = s.iter().map(|v| v / smax).collect();
    // columns beyond the row count are null automatically
    let extra = t.ncols().saturating_sub(t.nrows());
    let count = relative.iter().filter(|&&v| v <= eps_rel).count() + extra;
    let gap = if count == extra {
        relative.first().copied().unwrap_or(f64::INFINITY) / eps_rel
    } else {
        let below = relative[count - extra - 1].max(1e-16);
        relative.get(count - extra).copied().unwrap_or(f64::INFINITY) / below
    };
    Ok(NullCount { count, gap, relative })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexResult {
    pub dim_ker: usize,
    pub dim_coker: usize,
    pub index: i64,
    pub gap_ker: f64,
    pub gap_coker: f64,
    pub margin: f64,
    pub expected: Option<i64>,
    #[serde(skip)]
    pub sv_ker: Vec<f64>,
    #[serde(skip)]
    pub sv_coker: Vec<f64>,
}

/// (dim ker, dim coker, index) by near-null singular values at ε·σ_max, with a
/// mandatory gap on both sides.
pub fn numerical_index(op: &SymbolOp, eps_rel: f64, min_gap: f64) -> Result<IndexResult> {
    let (k, c) = rayon::join(|| null_count(&op.t, eps_rel), || null_count(&op.t_sharp, eps_rel));
    let (k, c) = (k?, c?);
    if k.gap < min_gap {
        return Err(NahmError::NoSpectralGap { what: "index kernel", gap: k.gap, required: min_gap });
    }
    if c.gap < min_gap {
        return Err(NahmError::NoSpectralGap { what: "index cokernel", gap: c.gap, required: min_gap });
    }
    Ok(IndexResult {
        dim_ker: k.count,
        dim_coker: c.count,
        index: k.count as i64 - c.count as i64,
        gap_ker: k.gap,
        gap_coker: c.gap,
        margin: op.margin,
        expected: op.degree.map(|d| d as i64 * op.rank as i64),
        sv_ker: k.relative,
        sv_coker: c.relative,
    })
}

/// ρ/|x|² with ρ = ½(|x|² − R²), and its Laplacian from closed-form second
/// derivatives.
pub fn harmonicity_residual(x: &Point4, radius: f64) -> f64 {
    // ρ/|x|² = ½ − (R²/2)|x|⁻²; ∂_i∂_i |x|⁻² = −2|x|⁻⁴ + 8x_i²|x|⁻⁶
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let terms: f64 = x.iter().map(|xi| -2.0 / (r2 * r2) + 8.0 * xi * xi / (r2 * r2 * r2)).sum();
    (-0.5 * radius * radius * terms).abs()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelCheck {
    /// Principal-angle sine between −Σ η_ν ⊗ ε(η_ν) and the computed kernel.
    pub angle: f64,
    /// ‖D⁺τ − Σ x_μ ĉ_μ s‖ / ‖Σ x_μ ĉ_μ s‖ with τ = G₀D⁻(Σ x_μ ĉ_μ s).
    pub tau_residual: f64,
    /// max |Δ(ρ/|x|²)| over the interior samples.
    pub harmonicity: f64,
    pub kernel_dim: usize,
}

/// The explicit kernel element of the affine symbol at y = 0 for the flat line bundle.
pub fn explicit_kernel_check(pair: &LiftedPair, orders: QuadOrders, eps_rel: f64, min_gap: f64) -> Result<KernelCheck> {
    let b = &pair.lower;
    if !b.field.is_trivial() || b.space.setting.rank != 1 || b.space.chirality != Chirality::Minus {
        return Err(NahmError::InvalidParameter { field: "field", reason: "explicit kernel check needs the flat line bundle".into() });
    }
    let radius = b.radius();
    let cl = clifford_rep();
    let eta = cl.eta_minus;

    // ⟨b_j, η_ν⟩ for the constant spinors, then s in the layout j·2 + spin
    let consts = project_by_quadrature(&b.space, orders, |_| identity(2))?;
    let coords = b.basis.adjoint() * &consts;
    let m = b.dim();
    let mut s = Mat::<c64>::zeros(2 * m, 1);
    for (nu, e) in eta.iter().enumerate() {
        let eps_e = epsilon(e);
        for j in 0..m {
            for a in 0..2 {
                s[(2 * j + a, 0)] -= coords[(j, nu)] * eps_e[a];
            }
        }
    }
    let norm = s.norm_l2();
    let fib = fiber(pair, &[0.0; 4], eps_rel, min_gap)?;
    let proj = fib.basis.adjoint() * &s;
    let cos = (proj.norm_l2() / norm).min(1.0);
    let angle = (1.0 - cos * cos).max(0.0).sqrt();

    // Σ x_μ ĉ_μ s as a rank-2 S₋ field, gauge slot = Nahm-side spinor
    let g_at = |x: &Point4| {
        let mut v = Mat::<c64>::zeros(4, 1);
        for e in eta.iter() {
            let eps_e = epsilon(e);
            for mu in 0..4 {
                let ch = cl.chat(mu);
                for a in 0..2 {
                    for bb in 0..2 {
                        let ce = ch[(bb, 0)] * eps_e[0] + ch[(bb, 1)] * eps_e[1];
                        v[(a * 2 + bb, 0)] -= e[a] * ce * cr(x[mu]);
                    }
                }
            }
        }
        v
    };
    let flat2 = flat_field(2)?;
    let set2 = setting_for(&flat2, radius, orders, b.space.setting.cond_tol)?;
    let gspace = AnsatzSpace::new(&set2, 1, Chirality::Minus, false)?;
    let g = project_by_quadrature(&gspace, orders, g_at)?;
    let solver = GreenSolver::new(&flat2, &set2, 1, Chirality::Plus)?;
    let id = FieldOp::identity(4);
    let load = crate::ansatz::sandwich_all(&solver.space, &id, &gspace, &dirac_minus(&flat2, &set2), &g, 0.0);
    let tau = solver.solve(&load);
    let dp = dirac_plus(&flat2, &set2);
    let aa = sandwich(&solver.space, &dp, &tau, &solver.space, &dp, &tau, 0.0)[(0, 0)].re;
    let ab = sandwich(&solver.space, &dp, &tau, &gspace, &id, &g, 0.0)[(0, 0)].re;
    let bb = sandwich(&gspace, &id, &g, &gspace, &id, &g, 0.0)[(0, 0)].re;
    let tau_residual = ((aa - 2.0 * ab + bb).max(0.0) / bb).sqrt();

    let mut harmonicity: f64 = 0.0;
    for (i, x) in sphere_samples(0.6 * radius, 3).iter().enumerate() {
        let scale = 0.3 + 0.7 * ((i % 7) as f64 / 7.0);
        let p = x.map(|v| v * scale);
        harmonicity = harmonicity.max(harmonicity_residual(&p, radius));
    }
    Ok(KernelCheck { angle, tau_residual, harmonicity, kernel_dim: fib.dim() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_of_affine_symbols() {
        assert_eq!(affine_degree(&[0.0; 4], 1.0).unwrap(), 1);
        assert_eq!(affine_degree(&[2.0, 0.0, 0.0, 0.0], 1.0).unwrap(), 0);
        assert_eq!(affine_degree(&[0.0, 0.0, 0.999, 0.0], 1.0).unwrap(), 1);
        assert!(affine_degree(&[0.6, 0.8, 0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn sampled_margin_of_affine_symbol() {
        let y = [1.5, 0.0, 0.0, 0.0];
        let f = Symbol::Affine { y }.polys();
        assert!((sampled_margin(&f, 1.0, 16) - 0.5).abs() < 1e-12);
        let f0 = Symbol::Affine { y: [0.0; 4] }.polys();
        assert!((sampled_margin(&f0, 1.0, 8) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quaternion_symbol_norm() {
        // q(f)†q(f) = Σf_μ² for the symbol blocks
        let cl = clifford_rep();
        let f = [0.3, -1.2, 0.7, 2.0];
        let mut q = Mat::<c64>::zeros(2, 2);
        for mu in 0..4 {
            q += cl.chat(mu) * faer::Scale(cr(f[mu]));
        }
        let qq = q.adjoint() * &q;
        let n2: f64 = f.iter().map(|v| v * v).sum();
        assert!(crate::linalg::max_abs_diff(qq.as_ref(), (identity(2) * faer::Scale(cr(n2))).as_ref()) < 1e-14);
    }

    #[test]
    fn harmonic_function() {
        for x in [[0.1, 0.2, -0.3, 0.05], [0.5, 0.0, 0.0, 0.1]] {
            assert!(harmonicity_residual(&x, 1.0) < 1e-10);
        }
    }
}
