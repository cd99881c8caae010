//! Weak-form Dirac and covariant-derivative operators, the Dirichlet Green
//! operator on bubble spaces, and the closed-form flat Green function.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rayon::prelude::*;

use crate::ansatz::{form_blocks, sandwich_all, AnsatzSpace, Chirality, FieldOp, FormBlock, OpGroup, OpTerm, Setting};
use crate::clifford::clifford_rep;
use crate::error::{NahmError, Result};
use crate::gauge::{norm4, GaugeField, Point4};
use crate::linalg::{c64, cr, eigvalsh, frobenius, hermitian_part, identity, kron, CMat};
use crate::poly::ScalarPoly;
use crate::quad::{Moments, QuadOrders};

/// Weight exponent κ of the trial fields w^{-κ}·p. BPST potentials decay like
/// 1/|x| and the coupled Dirac null fields pick up w^{-3/2}.
pub fn kappa_for(field: &GaugeField) -> f64 {
    if field.weight.is_some() {
        1.5
    } else {
        0.0
    }
}

/// Extra polynomial degree carried by weighted spaces, so that the space at
/// nominal degree N contains w^{-κ}·(degree-N polynomials)·w^{κ}-type fields.
pub fn degree_shift(setting: &Setting) -> usize {
    (2.0 * setting.kappa).round() as usize
}

pub fn setting_for(field: &GaugeField, radius: f64, orders: QuadOrders, cond_tol: f64) -> Result<Setting> {
    if !(radius > 0.0) {
        return Err(NahmError::InvalidParameter { field: "radius", reason: format!("must be positive, got {radius}") });
    }
    Ok(Setting {
        radius,
        rank: field.rank,
        kappa: kappa_for(field),
        weight: field.weight,
        moments: Arc::new(Moments::new(field.weight, radius, orders)?),
        cond_tol,
    })
}

/// Numerator of ∇_μ(w^{-κ}p) = w^{-κ-1}·[w∂_μp − κ(∂_μw)p + P_μp].
pub fn covariant(field: &GaugeField, setting: &Setting, mu: usize) -> FieldOp {
    let c = setting.comps();
    let w = field.weight_poly();
    let mut scalar = Vec::new();
    for (a, v) in &w.terms {
        scalar.push(OpTerm { deriv: Some(mu), mono: *a, coef: *v });
    }
    if setting.kappa != 0.0 {
        for (a, v) in &w.deriv(mu).terms {
            scalar.push(OpTerm { deriv: None, mono: *a, coef: -setting.kappa * v });
        }
    }
    let mut groups = vec![OpGroup { mat: identity(c), terms: scalar }];
    let id2 = identity(2);
    for (a, m) in &field.numer[mu] {
        groups.push(OpGroup { mat: kron(id2.as_ref(), m.as_ref()), terms: vec![OpTerm { deriv: None, mono: *a, coef: 1.0 }] });
    }
    FieldOp { c_in: c, c_out: c, groups }
}

/// D⁻ = Σ c_μ∇_μ from S₋ to S₊ (blocks −σ_μ† ⊗ 1).
pub fn dirac_minus(field: &GaugeField, setting: &Setting) -> FieldOp {
    dirac(field, setting, Chirality::Minus)
}

/// D⁺ = Σ c_μ∇_μ from S₊ to S₋ (blocks σ_μ ⊗ 1).
pub fn dirac_plus(field: &GaugeField, setting: &Setting) -> FieldOp {
    dirac(field, setting, Chirality::Plus)
}

fn dirac(field: &GaugeField, setting: &Setting, from: Chirality) -> FieldOp {
    let cl = clifford_rep();
    let idr = identity(setting.rank);
    let mut out: Option<FieldOp> = None;
    for mu in 0..4 {
        let spin = match from {
            Chirality::Minus => &cl.c_minus_to_plus[mu],
            Chirality::Plus => &cl.c_plus_to_minus[mu],
        };
        let term = covariant(field, setting, mu).left(&kron(spin.as_ref(), idr.as_ref()));
        out = Some(match out {
            None => term,
            Some(o) => o.plus(&term),
        });
    }
    out.expect("four axes")
}

/// Multiplication by a scalar polynomial, re-expressed one weight power higher
/// (numerator multiplied by w) so it can be paired with derivative outputs.
pub fn multiply_lifted(field: &GaugeField, setting: &Setting, p: &ScalarPoly) -> FieldOp {
    FieldOp::multiply(&field.weight_poly().mul(p), setting.comps())
}

/// ⟨D⁻φ_i, D⁻φ_j⟩ on an orthonormal S₋ basis, split into independent blocks.
pub struct DiracForm {
    pub blocks: Vec<FormBlock>,
    pub dim: usize,
}

impl DiracForm {
    /// Largest eigenvalue over all blocks, i.e. ‖Q‖.
    pub fn eigen_blocks(&self) -> Result<Vec<(Vec<f64>, CMat)>> {
        self.blocks.iter().map(|b| crate::linalg::eigh(b.matrix.as_ref())).collect()
    }

    pub fn to_dense(&self) -> CMat {
        let mut q = Mat::<c64>::zeros(self.dim, self.dim);
        for b in &self.blocks {
            for (i, &gi) in b.indices.iter().enumerate() {
                for (j, &gj) in b.indices.iter().enumerate() {
                    q[(gi, gj)] = b.matrix[(i, j)];
                }
            }
        }
        q
    }
}

pub fn dirac_form(field: &GaugeField, space: &AnsatzSpace) -> Result<DiracForm> {
    if space.chirality != Chirality::Minus || space.bubble {
        return Err(NahmError::DimensionMismatch("the Dirac form is built on a plain S₋ space".into()));
    }
    if field.rank != space.setting.rank {
        return Err(NahmError::DimensionMismatch(format!("field rank {} vs space rank {}", field.rank, space.setting.rank)));
    }
    let op = dirac_minus(field, &space.setting);
    let blocks = form_blocks(space, &[op], 2.0 * space.setting.kappa + 2.0);
    let blocks = blocks
        .into_iter()
        .map(|mut b| {
            b.matrix = hermitian_part(b.matrix.as_ref());
            b
        })
        .collect();
    Ok(DiracForm { blocks, dim: space.dim() })
}

struct Factor {
    indices: Vec<usize>,
    llt: faer::linalg::solvers::Llt<c64>,
}

/// Cholesky factors of a positive form split into independent blocks.
pub struct FormSolver {
    factors: Vec<Factor>,
    /// Smallest eigenvalue when the blocks are small enough to afford it.
    pub min_eigenvalue: Option<f64>,
}

impl FormSolver {
    pub fn new(space: &AnsatzSpace, ops: &[FieldOp], beta: f64) -> Result<Self> {
        let blocks = form_blocks(space, ops, beta);
        let small = blocks.iter().all(|b| b.indices.len() <= 1200);
        let mut min_eig: Option<f64> = None;
        let mut factors = Vec::with_capacity(blocks.len());
        for b in blocks {
            let h = hermitian_part(b.matrix.as_ref());
            if small {
                let w = eigvalsh(h.as_ref())?;
                let lo = w.first().copied().unwrap_or(f64::INFINITY);
                min_eig = Some(min_eig.map_or(lo, |m| m.min(lo)));
            }
            let llt = h
                .llt(Side::Lower)
                .map_err(|_| NahmError::SingularSolve("form is not positive definite".into()))?;
            factors.push(Factor { indices: b.indices, llt });
        }
        Ok(FormSolver { factors, min_eigenvalue: min_eig })
    }

    /// Solve K c = load for load columns indexed like the space.
    pub fn solve(&self, load: &CMat) -> CMat {
        let mut out = Mat::<c64>::zeros(load.nrows(), load.ncols());
        let parts: Vec<CMat> = self
            .factors
            .par_iter()
            .map(|f| {
                let rhs = Mat::from_fn(f.indices.len(), load.ncols(), |i, j| load[(f.indices[i], j)]);
                f.llt.solve(&rhs)
            })
            .collect();
        for (f, sol) in self.factors.iter().zip(parts) {
            for (i, &gi) in f.indices.iter().enumerate() {
                for j in 0..load.ncols() {
                    out[(gi, j)] = sol[(i, j)];
                }
            }
        }
        out
    }
}

/// Galerkin solver for ∇*∇τ = s with τ in a bubble space (zero boundary values).
pub struct GreenSolver {
    pub space: AnsatzSpace,
    pub field: GaugeField,
    solver: FormSolver,
    /// Smallest stiffness eigenvalue when the blocks are small enough to afford it.
    pub min_eigenvalue: Option<f64>,
}

impl GreenSolver {
    pub fn new(field: &GaugeField, setting: &Setting, degree: usize, chirality: Chirality) -> Result<Self> {
        let space = AnsatzSpace::new(setting, degree, chirality, true)?;
        let ops: Vec<FieldOp> = (0..4).map(|mu| covariant(field, setting, mu)).collect();
        let solver = FormSolver::new(&space, &ops, 2.0 * setting.kappa + 2.0)
            .map_err(|_| NahmError::SingularSolve("covariant stiffness is not positive definite".into()))?;
        let min_eigenvalue = solver.min_eigenvalue;
        Ok(GreenSolver { space, field: field.clone(), solver, min_eigenvalue })
    }

    pub fn solve(&self, load: &CMat) -> CMat {
        self.solver.solve(load)
    }

    /// Load vectors ⟨τ_i, s⟩ for fields s given by coefficient columns of `src`.
    pub fn load(&self, src: &AnsatzSpace, coeffs: &CMat) -> CMat {
        let id = FieldOp::identity(self.space.comps());
        sandwich_all(&self.space, &id, src, &id, coeffs, 2.0 * self.space.setting.kappa)
    }
}

/// Result of a Green solve: bubble coefficients and the Galerkin residual.
pub struct GreenResult {
    pub coeffs: CMat,
    pub residual: f64,
}

/// τ = G₀ s for each column of `coeffs` in `src`.
pub fn green_apply(solver: &GreenSolver, src: &AnsatzSpace, coeffs: &CMat) -> GreenResult {
    let load = solver.load(src, coeffs);
    let sol = solver.solve(&load);
    // residual of the block systems, measured against the assembled load
    let residual = {
        let mut ksol = Mat::<c64>::zeros(sol.nrows(), sol.ncols());
        for mu in 0..4 {
            let op = covariant(&solver.field, &solver.space.setting, mu);
            ksol += sandwich_all(&solver.space, &op, &solver.space, &op, &sol, 2.0 * solver.space.setting.kappa + 2.0);
        }
        frobenius((&ksol - &load).as_ref()) / frobenius(load.as_ref()).max(1e-300)
    };
    GreenResult { coeffs: sol, residual }
}

/// Dirichlet Green function of the ball for −Δ on R⁴:
/// G(p,q) = (1/4π²){|p − q|⁻² − |p|q|/R − qR/|q||⁻²}.
pub fn flat_green_closed(p: &Point4, q: &Point4, radius: f64) -> Result<f64> {
    let d2: f64 = (0..4).map(|i| (p[i] - q[i]).powi(2)).sum();
    if d2 == 0.0 {
        return Err(NahmError::CoincidentPoints);
    }
    let nq = norm4(q);
    let image = if nq == 0.0 {
        radius * radius
    } else {
        (0..4).map(|i| (p[i] * nq / radius - q[i] * radius / nq).powi(2)).sum::<f64>()
    };
    Ok((1.0 / d2 - 1.0 / image) / (4.0 * PI * PI))
}

/// Field value at x for coefficient columns in a space: (comps × k).
pub fn evaluate_field(space: &AnsatzSpace, coeffs: &CMat, x: &Point4) -> CMat {
    space.evaluate(coeffs, x)
}

/// Coefficients of a pointwise-given field projected onto `space` by quadrature.
pub fn project_by_quadrature<F>(space: &AnsatzSpace, orders: QuadOrders, f: F) -> Result<CMat>
where
    F: Fn(&Point4) -> CMat + Sync,
{
    let rule = crate::quad::ball_rule(orders, space.setting.radius)?;
    let first = f(&rule.nodes[0]);
    let k = first.ncols();
    let n = space.dim();
    let chunks: Vec<CMat> = rule
        .nodes
        .par_chunks(2048)
        .zip(rule.weights.par_chunks(2048))
        .map(|(xs, ws)| {
            let mut acc = Mat::<c64>::zeros(n, k);
            for (x, w) in xs.iter().zip(ws) {
                let b = space.eval_basis(x);
                let v = f(x);
                acc += b.adjoint() * &v * faer::Scale(cr(*w));
            }
            acc
        })
        .collect();
    let mut out = Mat::<c64>::zeros(n, k);
    for c in chunks {
        out += c;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::sandwich;
    use crate::gauge::{bpst_field, flat_field};
    use crate::poly::unit;

    #[test]
    fn green_function_properties() {
        let p = [0.3, 0.1, -0.2, 0.0];
        let q = [-0.1, 0.4, 0.0, 0.2];
        let a = flat_green_closed(&p, &q, 1.0).unwrap();
        let b = flat_green_closed(&q, &p, 1.0).unwrap();
        assert!((a - b).abs() < 1e-14);
        let edge = [0.6, 0.8, 0.0, 0.0];
        assert!(flat_green_closed(&edge, &q, 1.0).unwrap().abs() < 1e-14);
        let at0 = flat_green_closed(&p, &[0.0; 4], 1.0).unwrap();
        let r2: f64 = p.iter().map(|v| v * v).sum();
        assert!((at0 - (1.0 / r2 - 1.0) / (4.0 * PI * PI)).abs() < 1e-14);
        assert!(matches!(flat_green_closed(&p, &p, 1.0), Err(NahmError::CoincidentPoints)));
    }

    #[test]
    fn flat_constants_are_null() {
        let f = flat_field(1).unwrap();
        let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
        let sp = AnsatzSpace::new(&set, 0, Chirality::Minus, false).unwrap();
        let q = dirac_form(&f, &sp).unwrap().to_dense();
        assert!(frobenius(q.as_ref()) < 1e-14);
    }

    #[test]
    fn green_of_constant() {
        let f = flat_field(1).unwrap();
        let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
        let src = AnsatzSpace::new(&set, 0, Chirality::Minus, false).unwrap();
        let solver = GreenSolver::new(&f, &set, 2, Chirality::Minus).unwrap();
        let g = green_apply(&solver, &src, &identity(2));
        assert!(g.residual < 1e-12);
        let x = [0.3, 0.0, 0.1, -0.2];
        let val = solver.space.evaluate(&g.coeffs, &x);
        let s0 = (PI * PI / 2.0).powf(-0.5);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        assert!((val[(0, 0)].re - s0 * (1.0 - r2) / 8.0).abs() < 1e-12);
        assert!(val[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn weitzenbock_on_bubbles() {
        for f in [flat_field(1).unwrap(), bpst_field(0.4, [0.0; 4]).unwrap()] {
            let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
            let deg = 1 + degree_shift(&set);
            let sp = AnsatzSpace::new(&set, deg, Chirality::Plus, true).unwrap();
            let all = identity(sp.dim());
            let beta = 2.0 * set.kappa + 2.0;
            let d = dirac_plus(&f, &set);
            let dd = sandwich(&sp, &d, &all, &sp, &d, &all, beta);
            let mut k = Mat::<c64>::zeros(sp.dim(), sp.dim());
            for mu in 0..4 {
                let op = covariant(&f, &set, mu);
                k += sandwich(&sp, &op, &all, &sp, &op, &all, beta);
            }
            let rel = frobenius((&dd - &k).as_ref()) / frobenius(k.as_ref());
            assert!(rel < 1e-8, "Weitzenböck defect {rel}");
        }
    }

    #[test]
    fn bpst_twist_is_null_shifted() {
        let f = bpst_field(0.3, [0.0; 4]).unwrap();
        let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
        assert_eq!(degree_shift(&set), 3);
        let op = dirac_minus(&f, &set);
        assert!(op.degree_increase() <= 2);
        let _ = unit(0);
    }
}
