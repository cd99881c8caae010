//! Inverse transform: Dirac matrices on the Nahm side, kernel fibers, the
//! projector, both curvature formulas, the canonical map α and the correlator.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::ansatz::{sandwich, FieldOp};
use crate::bergmann::{AdhmData, BergmannSpace, GreenBasis, LiftedPair};
use crate::clifford::{clifford_rep, epsilon};
use crate::diracop::GreenSolver;
use crate::error::{NahmError, Result};
use crate::gauge::{norm4, Point4, PAIRS};
use crate::linalg::{c64, ci, cr, cz, eigh, hermitian_part, identity, kron, svd, CMat};

/// −2πi Σ (X_μ − y_μ) ⊗ ĉ_μ on B_N ⊗ S₋, index `j * 2 + spin`.
pub fn dirac_hat(x: &AdhmData, y: &Point4) -> CMat {
    let m = x.dim();
    let shifted: Vec<CMat> = (0..4).map(|mu| &x.x[mu] - identity(m) * faer::Scale(cr(y[mu]))).collect();
    assemble(&shifted, false)
}

/// The rectangular version B_N ⊗ S₋ → B_{N+1} ⊗ S₊ built from the lifted pair.
pub fn dirac_hat_lifted(pair: &LiftedPair, y: &Point4) -> CMat {
    assemble(&pair.shifted(y), false)
}

/// −2πi Σ blocks_μ ⊗ ĉ_μ (or ĉ_μ† when `dagger`).
fn assemble(blocks: &[CMat], dagger: bool) -> CMat {
    let cl = clifford_rep();
    let (r, c) = (blocks[0].nrows(), blocks[0].ncols());
    let mut t = Mat::<c64>::zeros(2 * r, 2 * c);
    for (mu, b) in blocks.iter().enumerate() {
        let ch = if dagger { crate::linalg::adjoint(cl.chat(mu).as_ref()) } else { cl.chat(mu).clone() };
        t += kron(b.as_ref(), ch.as_ref());
    }
    t * faer::Scale(ci(-2.0 * PI))
}

/// Kernel of the Nahm-side Dirac operator at y.
#[derive(Clone)]
pub struct FiberData {
    pub y: Point4,
    /// Orthonormal kernel basis, columns in B_N ⊗ S₋.
    pub basis: CMat,
    /// Singular values, ascending.
    pub singular_values: Vec<f64>,
    /// Absolute kernel threshold.
    pub eps_ker: f64,
    /// Smallest dropped over largest kept singular value, or smallest over ε_ker
    /// when the kernel is empty.
    pub gap: f64,
    /// Pseudo-inverse of T T† on the complement of the kernel, (2m₁)².
    pub green: CMat,
}

impl FiberData {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn min_singular(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }
}

/// SVD kernel of T_y with threshold `eps_rel · σ_max` and a mandatory gap.
pub fn fiber(pair: &LiftedPair, y: &Point4, eps_rel: f64, min_gap: f64) -> Result<FiberData> {
    let t = dirac_hat_lifted(pair, y);
    let d = svd(t.as_ref())?;
    let n = t.ncols();
    let smax = d.s.first().copied().unwrap_or(0.0);
    let eps = eps_rel * smax;
    let kept: Vec<usize> = (0..d.s.len()).filter(|&i| d.s[i] > eps).collect();
    let ker: Vec<usize> = (0..n).filter(|&i| i >= d.s.len() || d.s[i] <= eps).collect();
    let mut asc = d.s.clone();
    asc.reverse();
    let gap = if ker.is_empty() {
        asc.first().copied().unwrap_or(f64::INFINITY) / eps.max(f64::MIN_POSITIVE)
    } else {
        let largest_kept_ker = ker.iter().map(|&i| d.s.get(i).copied().unwrap_or(0.0)).fold(0.0, f64::max);
        let smallest_range = kept.last().map(|&i| d.s[i]).unwrap_or(f64::INFINITY);
        smallest_range / largest_kept_ker.max(1e-16 * smax)
    };
    if gap < min_gap {
        return Err(NahmError::NoSpectralGap { what: "Nahm fiber", gap, required: min_gap });
    }
    let basis = crate::linalg::select_cols(d.v.as_ref(), &ker);
    let mut green = Mat::<c64>::zeros(t.nrows(), t.nrows());
    for &i in &kept {
        let u = d.u.as_ref().col(i);
        let f = 1.0 / (d.s[i] * d.s[i]);
        for b in 0..t.nrows() {
            let ub = u[b].conj() * f;
            for a in 0..t.nrows() {
                green[(a, b)] += u[a] * ub;
            }
        }
    }
    Ok(FiberData { y: *y, basis, singular_values: asc, eps_ker: eps, gap, green })
}

/// P̂ = 1 − T†(TT†)⁺T, with the pseudo-inverse cut at ε_ker²·‖T‖², computed from
/// the eigen-decomposition of T T† rather than the SVD used by `fiber`.
pub fn projector_hat(pair: &LiftedPair, y: &Point4, eps_rel: f64) -> Result<CMat> {
    let t = dirac_hat_lifted(pair, y);
    let tt = &t * t.adjoint();
    let (w, u) = eigh(tt.as_ref())?;
    let wmax = w.last().copied().unwrap_or(0.0);
    let cut = eps_rel * eps_rel * wmax;
    let mut g = Mat::<c64>::zeros(tt.nrows(), tt.ncols());
    for (k, &v) in w.iter().enumerate() {
        if v > cut {
            let col = u.as_ref().col(k);
            for b in 0..g.ncols() {
                let cb = col[b].conj() / v;
                for a in 0..g.nrows() {
                    g[(a, b)] += col[a] * cb;
                }
            }
        }
    }
    let p = identity(t.ncols()) - t.adjoint() * &g * &t;
    Ok(hermitian_part(p.as_ref()))
}

/// The square-matrix analogue 1 − T†(Δ̂⁻¹ ⊗ 1)T with Δ̂ = 4π²Σ(X_μ − y_μ)². It is
/// a projector only when the truncated X_μ satisfy the ADHM equations exactly.
pub fn projector_hat_square(x: &AdhmData, y: &Point4) -> Result<CMat> {
    let t = dirac_hat(x, y);
    let lap = crate::bergmann::nahm_laplacian(x, y);
    let inv = crate::linalg::solve_hpd(lap.as_ref(), identity(lap.nrows()).as_ref())?;
    let g = kron(inv.as_ref(), identity(2).as_ref());
    let p = identity(t.ncols()) - t.adjoint() * &g * &t;
    Ok(hermitian_part(p.as_ref()))
}

/// Largest principal-angle sine between the range of a projector and a subspace
/// with orthonormal columns `v`.
pub fn projector_angle(p: &CMat, v: &CMat) -> Result<f64> {
    let (w, u) = eigh(p.as_ref())?;
    let k = v.ncols();
    let n = w.len();
    let top: Vec<usize> = (n.saturating_sub(k)..n).collect();
    let q = crate::linalg::select_cols(u.as_ref(), &top);
    let s = crate::linalg::singular_values((q.adjoint() * v).as_ref())?;
    let cmin = s.iter().copied().fold(1.0, f64::min).min(1.0);
    Ok((1.0 - cmin * cmin).max(0.0).sqrt())
}

/// Which formula `curvature_hat` uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureBackend {
    /// −4π²[X_μ, X_ν] inside B_N.
    Square,
    /// −4π²(Y_μ†Y_ν − Y_ν†Y_μ) through B_{N+1}.
    Lifted,
    /// 4π²⟨(c_μc_ν − c_νc_μ)ψ, G₀ψ⟩ through the Green operator.
    Green,
}

/// F̂_{μν} over `PAIRS`, six m × m matrices.
pub fn curvature_hat_square(x: &AdhmData) -> [CMat; 6] {
    let k = -4.0 * PI * PI;
    PAIRS.map(|(m, n)| (&x.x[m] * &x.x[n] - &x.x[n] * &x.x[m]) * faer::Scale(cr(k)))
}

pub fn curvature_hat_lifted(pair: &LiftedPair) -> [CMat; 6] {
    let k = -4.0 * PI * PI;
    let y = &pair.y_ops;
    PAIRS.map(|(m, n)| (y[m].adjoint() * &y[n] - y[n].adjoint() * &y[m]) * faer::Scale(cr(k)))
}

pub fn curvature_hat_green(b: &BergmannSpace, solver: &GreenSolver, green: &GreenBasis) -> [CMat; 6] {
    let cl = clifford_rep();
    let r = b.space.setting.rank;
    let c = b.space.comps();
    let id = FieldOp::identity(c);
    let beta = 2.0 * b.kappa();
    PAIRS.map(|(m, n)| {
        let cc = cl.cc_minus(m, n) - cl.cc_minus(n, m);
        let op = id.left(&kron(cc.as_ref(), identity(r).as_ref()));
        let v = sandwich(&b.space, &op, &b.basis, &solver.space, &id, &green.coeffs, beta);
        v * faer::Scale(cr(4.0 * PI * PI))
    })
}

/// Curvature of the reconstructed connection at a fiber, six k × k matrices:
/// (2π)² V†[(ι⊗ĉ_μ)†(TT†)⁺(ι⊗ĉ_ν) − (μ↔ν)]V.
pub fn curvature_double_hat(pair: &LiftedPair, fib: &FiberData) -> [CMat; 6] {
    let cl = clifford_rep();
    let ups: Vec<CMat> = (0..4).map(|mu| kron(pair.inclusion.as_ref(), cl.chat(mu).as_ref())).collect();
    let v = &fib.basis;
    let gv: Vec<CMat> = ups.iter().map(|u| &fib.green * (u * v)).collect();
    let uv: Vec<CMat> = ups.iter().map(|u| u * v).collect();
    let k = 4.0 * PI * PI;
    PAIRS.map(|(m, n)| (uv[m].adjoint() * &gv[n] - uv[n].adjoint() * &gv[m]) * faer::Scale(cr(k)))
}

/// Cross-check of `curvature_double_hat`: −(2π)² V†(Δ̂⁻¹ ⊗ (c_μc_ν − c_νc_μ))V with
/// the lifted Laplacian.
pub fn curvature_double_hat_laplacian(pair: &LiftedPair, fib: &FiberData) -> Result<[CMat; 6]> {
    let cl = clifford_rep();
    let lap = crate::bergmann::nahm_laplacian_lifted(pair, &fib.y);
    let inv = crate::linalg::solve_hpd(lap.as_ref(), identity(lap.nrows()).as_ref())?;
    let v = &fib.basis;
    let k = -4.0 * PI * PI;
    Ok(PAIRS.map(|(m, n)| {
        let cc = cl.cc_minus(m, n) - cl.cc_minus(n, m);
        let op = kron(inv.as_ref(), cc.as_ref());
        v.adjoint() * &op * v * faer::Scale(cr(k))
    }))
}

/// Values (G₀σ_j)(y) for all j: comps × m.
pub fn green_values(solver: &GreenSolver, green: &GreenBasis, y: &Point4) -> CMat {
    solver.space.evaluate(&green.coeffs, y)
}

/// α(ξ) for a frame ξ_a of E_y (columns of `frame`, r × k): coefficient columns in
/// B_N ⊗ S₋ with entries α[j·2 + spin] = 4π·ε(Σ_e conj(ξ_e)(G₀σ_j)(y)[spin, e]).
pub fn canonical_map(b: &BergmannSpace, solver: &GreenSolver, green: &GreenBasis, y: &Point4, frame: &CMat) -> Result<ReconstructionFiber> {
    if norm4(y) >= b.radius() {
        return Err(NahmError::OutsideBall(*y));
    }
    let r = b.space.setting.rank;
    let vals = green_values(solver, green, y);
    let m = b.dim();
    let k = frame.ncols();
    let mut alpha = Mat::<c64>::zeros(2 * m, k);
    for a in 0..k {
        for j in 0..m {
            let mut v = [cz(); 2];
            for (spin, vs) in v.iter_mut().enumerate() {
                for e in 0..r {
                    *vs += frame[(e, a)].conj() * vals[(spin * r + e, j)];
                }
            }
            let t = epsilon(&v);
            alpha[(2 * j, a)] = t[0] * (4.0 * PI);
            alpha[(2 * j + 1, a)] = t[1] * (4.0 * PI);
        }
    }
    let gram = alpha.adjoint() * &alpha;
    Ok(ReconstructionFiber { y: *y, alpha, gram })
}

#[derive(Clone)]
pub struct ReconstructionFiber {
    pub y: Point4,
    pub alpha: CMat,
    pub gram: CMat,
}

impl ReconstructionFiber {
    /// max |gram − I|.
    pub fn metric_defect(&self) -> f64 {
        crate::linalg::max_abs_diff(self.gram.as_ref(), identity(self.gram.nrows()).as_ref())
    }
}

/// (4π)² Σ_j Σ_spin (G₀σ_j)(x₁)[spin, a] conj((G₀σ_j)(x₂)[spin, b]), an r × r matrix.
pub fn correlator(solver: &GreenSolver, green: &GreenBasis, rank: usize, x1: &Point4, x2: &Point4) -> Result<CMat> {
    if x1 == x2 {
        return Err(NahmError::CoincidentPoints);
    }
    let g1 = green_values(solver, green, x1);
    let g2 = green_values(solver, green, x2);
    let m = g1.ncols();
    let mut out = Mat::<c64>::zeros(rank, rank);
    for a in 0..rank {
        for bb in 0..rank {
            let mut s = cz();
            for j in 0..m {
                for spin in 0..2 {
                    s += g1[(spin * rank + a, j)] * g2[(spin * rank + bb, j)].conj();
                }
            }
            out[(a, bb)] = s * (16.0 * PI * PI);
        }
    }
    Ok(out)
}

/// 4π² G(x₁, x₂)|x₁ − x₂|² for the flat ball.
pub fn flat_correlator_closed(x1: &Point4, x2: &Point4, radius: f64) -> Result<f64> {
    let g = crate::diracop::flat_green_closed(x1, x2, radius)?;
    let d2: f64 = (0..4).map(|i| (x1[i] - x2[i]).powi(2)).sum();
    Ok(4.0 * PI * PI * g * d2)
}

/// One row of a fiber scan.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FiberRow {
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub y4: f64,
    pub fiber_dim: usize,
    pub min_singular: f64,
    pub gap: f64,
    /// The kernel split cleared the required gap.
    pub conclusive: bool,
    pub metric_defect: Option<f64>,
    pub f_rec: Option<f64>,
    pub f_orig: Option<f64>,
}

/// Fiber dimension, metric defect of α and |F̂̂| against |F| at each point.
/// Points without a clean kernel split are reported with `conclusive = false`.
pub fn fiber_scan(
    pair: &LiftedPair,
    solver: &GreenSolver,
    green: &GreenBasis,
    points: &[Point4],
    eps_rel: f64,
    min_gap: f64,
) -> Result<Vec<FiberRow>> {
    let field = &pair.lower.field;
    let rank = pair.lower.space.setting.rank;
    let radius = pair.lower.radius();
    points
        .iter()
        .map(|y| {
            let fib = fiber(pair, y, eps_rel, 0.0)?;
            let conclusive = fib.gap >= min_gap;
            let inside = norm4(y) < radius;
            let metric_defect = if inside && fib.dim() > 0 {
                Some(canonical_map(&pair.lower, solver, green, y, &identity(rank))?.metric_defect())
            } else {
                None
            };
            let f_rec = if fib.dim() > 0 { Some(crate::gauge::curvature_norm(&curvature_double_hat(pair, &fib))) } else { None };
            let f_orig = if inside { Some(crate::gauge::curvature_norm(&field.curvature(y))) } else { None };
            Ok(FiberRow {
                y1: y[0],
                y2: y[1],
                y3: y[2],
                y4: y[3],
                fiber_dim: fib.dim(),
                min_singular: fib.min_singular() / fib.singular_values.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE),
                gap: fib.gap,
                conclusive,
                metric_defect,
                f_rec,
                f_orig,
            })
        })
        .collect()
}
