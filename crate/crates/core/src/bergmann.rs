//! Discrete Bergmann spaces, Toeplitz compressions, ADHM position operators,
//! the oscillator spectrum and the Nahm-side Laplacian.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::ansatz::{sandwich, sandwich_all, AnsatzSpace, Chirality, FieldOp, Setting};
use crate::diracop::{degree_shift, dirac_form, dirac_plus, green_apply, multiply_lifted, FormSolver, GreenSolver};
use crate::error::{NahmError, Result};
use crate::gauge::{FieldSpec, GaugeField, Point4, PAIRS};
use crate::linalg::{c64, cr, eigh, frobenius, hermitian_part, identity, CMat};
use crate::poly::ScalarPoly;
use crate::quad::QuadOrders;

/// Orthonormal basis of the numerical null space of the Dirac form.
#[derive(Clone)]
pub struct BergmannSpace {
    pub space: Arc<AnsatzSpace>,
    pub field: GaugeField,
    /// Nominal degree N; the ansatz itself has degree N + shift for weighted fields.
    pub degree: usize,
    /// Coefficient columns (space.dim × m).
    pub basis: CMat,
    /// Rayleigh quotients of the kept vectors.
    pub residuals: Vec<f64>,
    pub threshold: f64,
    /// Smallest dropped over largest kept form eigenvalue (∞ when nothing is dropped).
    pub gap: f64,
    pub form_norm: f64,
}

impl BergmannSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn radius(&self) -> f64 {
        self.space.setting.radius
    }

    pub fn kappa(&self) -> f64 {
        self.space.setting.kappa
    }

    /// P₀ in the coordinates of the parent ansatz (orthonormal there).
    pub fn projector(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }

    /// Values of the basis fields at x, comps × m.
    pub fn evaluate(&self, x: &Point4) -> CMat {
        self.space.evaluate(&self.basis, x)
    }

    /// Same basis viewed through a different weight table (e.g. restricted to a shell).
    pub fn with_moments(&self, moments: crate::quad::Moments) -> BergmannSpace {
        let mut out = self.clone();
        let mut sp = (*self.space).clone();
        sp.setting.moments = Arc::new(moments);
        out.space = Arc::new(sp);
        out
    }
}

/// Bergmann space at nominal degree `n` with threshold ε_null·‖Q‖ and a mandatory gap.
pub fn compute_bergmann(field: &GaugeField, setting: &Setting, n: usize, eps_null: f64, min_gap: f64) -> Result<BergmannSpace> {
    let space = AnsatzSpace::new(setting, n + degree_shift(setting), Chirality::Minus, false)?;
    bergmann_in(field, Arc::new(space), n, eps_null, min_gap)
}

pub fn bergmann_in(field: &GaugeField, space: Arc<AnsatzSpace>, n: usize, eps_null: f64, min_gap: f64) -> Result<BergmannSpace> {
    let form = dirac_form(field, &space)?;
    let eig = form.eigen_blocks()?;
    let norm = eig.iter().flat_map(|(w, _)| w.iter().copied()).fold(0.0_f64, f64::max);
    let threshold = eps_null * norm;
    let mut cols: Vec<(usize, usize)> = Vec::new();
    let mut residuals = Vec::new();
    let mut max_kept: f64 = 0.0;
    let mut min_dropped = f64::INFINITY;
    for (bi, (w, _)) in eig.iter().enumerate() {
        for (k, &v) in w.iter().enumerate() {
            if norm == 0.0 || v <= threshold {
                cols.push((bi, k));
                residuals.push(v.max(0.0));
                max_kept = max_kept.max(v);
            } else {
                min_dropped = min_dropped.min(v);
            }
        }
    }
    let gap = if norm == 0.0 || min_dropped.is_infinite() {
        f64::INFINITY
    } else {
        min_dropped / max_kept.max(1e-16 * norm)
    };
    if gap < min_gap {
        return Err(NahmError::NoSpectralGap { what: "Bergmann null space", gap, required: min_gap });
    }
    let mut basis = Mat::<c64>::zeros(space.dim(), cols.len());
    for (j, &(bi, k)) in cols.iter().enumerate() {
        let blk = &form.blocks[bi];
        let u = &eig[bi].1;
        for (i, &gi) in blk.indices.iter().enumerate() {
            basis[(gi, j)] = u[(i, k)];
        }
    }
    Ok(BergmannSpace { space, field: field.clone(), degree: n, basis, residuals, threshold, gap, form_norm: norm })
}

/// Compression P₀∘f of multiplication by a scalar polynomial: ⟨σ_i, f σ_j⟩.
pub fn toeplitz(b: &BergmannSpace, f: &ScalarPoly) -> CMat {
    let c = b.space.comps();
    let m = sandwich(&b.space, &FieldOp::identity(c), &b.basis, &b.space, &FieldOp::multiply(f, c), &b.basis, 2.0 * b.kappa());
    hermitian_part(m.as_ref())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdhmProvenance {
    pub degree: usize,
    pub field: FieldSpec,
    pub eps_null: f64,
    pub dim: usize,
}

/// The four compressed coordinates X_μ = P₀ x_μ on the Bergmann space.
#[derive(Clone)]
pub struct AdhmData {
    pub x: [CMat; 4],
    pub provenance: AdhmProvenance,
}

impl AdhmData {
    pub fn dim(&self) -> usize {
        self.x[0].nrows()
    }

    /// Σ_μ ‖X_μ‖²_F.
    pub fn norm_sq(&self) -> f64 {
        self.x.iter().map(|m| frobenius(m.as_ref()).powi(2)).sum()
    }
}

pub fn position_ops(b: &BergmannSpace, eps_null: f64) -> AdhmData {
    let x = [0, 1, 2, 3].map(|mu| toeplitz(b, &ScalarPoly::monomial(crate::poly::unit(mu), 1.0)));
    AdhmData {
        x,
        provenance: AdhmProvenance { degree: b.degree, field: b.field.spec.clone(), eps_null, dim: b.dim() },
    }
}

fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// The three commutator combinations that vanish for ASD data in this crate's
/// orientation: [X₁,X₂] − [X₃,X₄], [X₁,X₃] + [X₂,X₄], [X₁,X₄] − [X₂,X₃].
pub fn adhm_combinations(x: &[CMat; 4]) -> [CMat; 3] {
    let c: Vec<CMat> = PAIRS.iter().map(|&(m, n)| commutator(&x[m], &x[n])).collect();
    [&c[0] - &c[5], &c[1] + &c[4], &c[2] - &c[3]]
}

/// Frobenius norms of the three combinations, each divided by Σ‖X_μ‖²_F.
pub fn adhm_residual(x: &AdhmData) -> [f64; 3] {
    let n = x.norm_sq();
    let combos = adhm_combinations(&x.x);
    combos.map(|c| if n == 0.0 { 0.0 } else { frobenius(c.as_ref()) / n })
}

/// 4π² Σ (X_μ − y_μ)², computed inside the fixed space B_N.
pub fn nahm_laplacian(x: &AdhmData, y: &Point4) -> CMat {
    let m = x.dim();
    let mut out = Mat::<c64>::zeros(m, m);
    for mu in 0..4 {
        let d = &x.x[mu] - identity(m) * faer::Scale(cr(y[mu]));
        out += &d * &d;
    }
    out * faer::Scale(cr(4.0 * PI * PI))
}

/// x_μ: B_N → B_{N+1} and the inclusion, as matrices between the two orthonormal bases.
#[derive(Clone)]
pub struct LiftedPair {
    pub lower: BergmannSpace,
    pub upper: BergmannSpace,
    pub y_ops: [CMat; 4],
    pub inclusion: CMat,
}

impl LiftedPair {
    pub fn new(lower: BergmannSpace, upper: BergmannSpace) -> Self {
        let c = lower.space.comps();
        let beta = 2.0 * lower.kappa();
        let id = FieldOp::identity(c);
        let y_ops = [0, 1, 2, 3]
            .map(|mu| sandwich(&upper.space, &id, &upper.basis, &lower.space, &FieldOp::coordinate(mu, c), &lower.basis, beta));
        let inclusion = sandwich(&upper.space, &id, &upper.basis, &lower.space, &id, &lower.basis, beta);
        LiftedPair { lower, upper, y_ops, inclusion }
    }

    pub fn build(field: &GaugeField, setting: &Setting, n: usize, eps_null: f64, min_gap: f64) -> Result<Self> {
        let lower = compute_bergmann(field, setting, n, eps_null, min_gap)?;
        let upper = compute_bergmann(field, setting, n + 1, eps_null, min_gap)?;
        Ok(Self::new(lower, upper))
    }

    /// Y_μ − y_μ ι.
    pub fn shifted(&self, y: &Point4) -> [CMat; 4] {
        [0, 1, 2, 3].map(|mu| &self.y_ops[mu] - &self.inclusion * faer::Scale(cr(y[mu])))
    }
}

/// 4π² Σ_μ ‖P₀(x_μ − y_μ)s‖² as a form on B_N, with P₀ realized by B_{N+1}.
pub fn nahm_laplacian_lifted(pair: &LiftedPair, y: &Point4) -> CMat {
    let m = pair.lower.dim();
    let mut out = Mat::<c64>::zeros(m, m);
    for d in pair.shifted(y) {
        out += d.adjoint() * &d;
    }
    hermitian_part((out * faer::Scale(cr(4.0 * PI * PI))).as_ref())
}

/// G₀ applied to every basis field, with the pairing ⟨σ_i, G₀σ_j⟩.
#[derive(Clone)]
pub struct GreenBasis {
    pub coeffs: CMat,
    pub pairing: CMat,
    pub residual: f64,
}

pub fn green_basis(b: &BergmannSpace, solver: &GreenSolver) -> GreenBasis {
    let g = green_apply(solver, &b.space, &b.basis);
    let c = b.space.comps();
    let id = FieldOp::identity(c);
    let pairing = sandwich(&b.space, &id, &b.basis, &solver.space, &id, &g.coeffs, 2.0 * b.kappa());
    GreenBasis { coeffs: g.coeffs, pairing: hermitian_part(pairing.as_ref()), residual: g.residual }
}

/// 4π² P₀{|x − y|² − 4G₀} on B_N.
pub fn nahm_laplacian_green(b: &BergmannSpace, green: &GreenBasis, y: &Point4) -> CMat {
    let t = toeplitz(b, &ScalarPoly::shifted_square(y, 0.0));
    (t - &green.pairing * faer::Scale(cr(4.0))) * faer::Scale(cr(4.0 * PI * PI))
}

/// One row of the oscillator spectrum.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpectrumRow {
    pub index: usize,
    pub half_lambda_sq: f64,
    pub lambda: f64,
    pub zeta_residual: Option<f64>,
    pub origin_ratio: Option<f64>,
    pub boundary_ratio: Option<f64>,
}

#[derive(Clone)]
pub struct SpectrumReport {
    pub rows: Vec<SpectrumRow>,
    /// Eigenvectors in the Bergmann basis, one column per row.
    pub vectors: CMat,
}

impl SpectrumReport {
    pub fn half_lambda_sq(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.half_lambda_sq).collect()
    }
}

/// Eigen-decomposition of H(s) = (1/2R²)∫|x|²|s|² on the Bergmann space.
pub fn oscillator(b: &BergmannSpace) -> Result<SpectrumReport> {
    let r = b.radius();
    let h = toeplitz(b, &ScalarPoly::shifted_square(&[0.0; 4], 0.0)) * faer::Scale(cr(0.5 / (r * r)));
    let (w, v) = eigh(h.as_ref())?;
    let rows = w
        .iter()
        .enumerate()
        .map(|(i, &e)| SpectrumRow {
            index: i,
            half_lambda_sq: e,
            lambda: (2.0 * e).max(0.0).sqrt(),
            zeta_residual: None,
            origin_ratio: None,
            boundary_ratio: None,
        })
        .collect();
    Ok(SpectrumReport { rows, vectors: v })
}

/// Solution ζ of D⁺ζ = (|x|²/2R² − λ²/2)s in a bubble S₊ space.
pub struct ZetaSolution {
    pub space: AnsatzSpace,
    pub coeffs: CMat,
    /// ‖D⁺ζ − rhs‖/‖rhs‖ for each column.
    pub residuals: Vec<f64>,
    /// ‖D⁺ζ‖², equal to ‖∇ζ‖² for ASD fields.
    pub grad_norms: Vec<f64>,
}

/// Least-squares solve of D⁺ζ = (|x|²/2R² − h)s for eigenvector columns `vecs`
/// (Bergmann coordinates) with eigenvalues `halves`. The bubble space has degree
/// N + 2 beyond the shift.
pub fn eigenstate_zeta(b: &BergmannSpace, vecs: &CMat, halves: &[f64]) -> Result<ZetaSolution> {
    let setting = &b.space.setting;
    let field = &b.field;
    let zsp = AnsatzSpace::new(setting, b.degree + 2 + degree_shift(setting), Chirality::Plus, true)?;
    let dp = dirac_plus(field, setting);
    let beta = 2.0 * setting.kappa + 2.0;
    let solver = FormSolver::new(&zsp, std::slice::from_ref(&dp), beta)?;
    let r = b.radius();
    let s = &b.basis * vecs;
    let mut coeffs = Mat::<c64>::zeros(zsp.dim(), vecs.ncols());
    let mut residuals = Vec::with_capacity(vecs.ncols());
    let mut grad_norms = Vec::with_capacity(vecs.ncols());
    for (j, &h) in halves.iter().enumerate() {
        let p = ScalarPoly::shifted_square(&[0.0; 4], 0.0).scale(0.5 / (r * r)).plus(&ScalarPoly::constant(-h));
        let rhs_op = multiply_lifted(field, setting, &p);
        let sj = s.as_ref().subcols(j, 1).to_owned();
        let load = sandwich_all(&zsp, &dp, &b.space, &rhs_op, &sj, beta);
        let c = solver.solve(&load);
        let f2 = sandwich(&b.space, &rhs_op, &sj, &b.space, &rhs_op, &sj, beta)[(0, 0)].re;
        let proj = (c.adjoint() * &load)[(0, 0)].re;
        residuals.push(if f2 > 0.0 { ((f2 - proj).max(0.0) / f2).sqrt() } else { 0.0 });
        grad_norms.push(proj);
        for i in 0..zsp.dim() {
            coeffs[(i, j)] = c[(i, 0)];
        }
    }
    Ok(ZetaSolution { space: zsp, coeffs, residuals, grad_norms })
}

/// Ratios of Eq. (4.3)-type and Eq. (4.4)-type mass bounds at radius r:
/// origin = ∫_{|x|>r}|s|² / (λ²R²/r²), boundary = ∫_{|x|<r}|s|² / ((1−λ²)R²/(R²−r²)),
/// for unit eigenvectors `vecs`.
pub fn concentration_check(b: &BergmannSpace, vecs: &CMat, halves: &[f64], r: f64, orders: QuadOrders) -> Result<Vec<(f64, f64)>> {
    let big_r = b.radius();
    if !(r > 0.0 && r < big_r) {
        return Err(NahmError::InvalidParameter { field: "r", reason: format!("need 0 < r < R, got {r}") });
    }
    let mom = &b.space.setting.moments;
    let inner = b.with_moments(mom.restricted(0.0, r, orders)?);
    let outer = b.with_moments(mom.restricted(r, big_r, orders)?);
    let c = b.space.comps();
    let id = FieldOp::identity(c);
    let s = &b.basis * vecs;
    let mass = |sp: &BergmannSpace| {
        let g = sandwich(&sp.space, &id, &s, &sp.space, &id, &s, 2.0 * sp.kappa());
        (0..s.ncols()).map(|j| g[(j, j)].re).collect::<Vec<f64>>()
    };
    let (mi, mo) = (mass(&inner), mass(&outer));
    Ok(halves
        .iter()
        .enumerate()
        .map(|(j, &h)| {
            let l2 = 2.0 * h;
            let origin = mo[j] / (l2 * big_r * big_r / (r * r));
            let boundary = mi[j] / ((1.0 - l2) * big_r * big_r / (big_r * big_r - r * r));
            (origin, boundary)
        })
        .collect())
}

/// Fill the concentration columns of a report with the worst ratio over `radii`.
pub fn annotate_concentration(b: &BergmannSpace, report: &mut SpectrumReport, radii: &[f64], orders: QuadOrders) -> Result<()> {
    let halves = report.half_lambda_sq();
    for &r in radii {
        let ratios = concentration_check(b, &report.vectors, &halves, r, orders)?;
        for (row, (o, bd)) in report.rows.iter_mut().zip(ratios) {
            row.origin_ratio = Some(row.origin_ratio.map_or(o, |v| v.max(o)));
            row.boundary_ratio = Some(row.boundary_ratio.map_or(bd, |v| v.max(bd)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diracop::setting_for;
    use crate::gauge::flat_field;
    use crate::linalg::max_abs_diff;

    fn flat(n: usize) -> BergmannSpace {
        let f = flat_field(1).unwrap();
        let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
        compute_bergmann(&f, &set, n, 1e-8, 1e2).unwrap()
    }

    #[test]
    fn flat_dimensions() {
        assert_eq!(flat(0).dim(), 2);
        assert_eq!(flat(2).dim(), 20);
    }

    #[test]
    fn projector_is_idempotent() {
        let b = flat(2);
        let p = b.projector();
        assert!(max_abs_diff((&p * &p).as_ref(), p.as_ref()) < 1e-10);
        let g = crate::ansatz::gram(&b.space, &b.basis);
        assert!(max_abs_diff(g.as_ref(), identity(b.dim()).as_ref()) < 1e-10);
    }

    #[test]
    fn flat_ground_state() {
        for n in [0, 3] {
            let b = flat(n);
            let rep = oscillator(&b).unwrap();
            let h = rep.half_lambda_sq();
            assert!((h[0] - 1.0 / 3.0).abs() < 1e-8 && (h[1] - 1.0 / 3.0).abs() < 1e-8);
            if h.len() > 2 {
                assert!(h[2] > 1.0 / 3.0 + 1e-6);
            }
            assert!(h.iter().all(|v| *v > 0.0 && *v < 0.5));
        }
    }

    #[test]
    fn position_ops_hermitian_and_zero_on_constants() {
        let x = position_ops(&flat(0), 1e-8);
        assert!(x.norm_sq() < 1e-28);
        let x = position_ops(&flat(2), 1e-8);
        for m in &x.x {
            assert!(max_abs_diff(m.as_ref(), crate::linalg::adjoint(m.as_ref()).as_ref()) < 1e-12);
        }
    }
}
