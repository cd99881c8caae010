//! Concentrating BPST families: spectral dichotomy, small-spectrum dimension,
//! comparison with the flat limit and the energy ledger.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{sandwich, Chirality, FieldOp, OpGroup, OpTerm};
use crate::bergmann::{annotate_concentration, compute_bergmann, concentration_check, green_basis, oscillator, toeplitz, BergmannSpace, GreenBasis, SpectrumRow};
use crate::clifford::clifford_rep;
use crate::diracop::{setting_for, GreenSolver};
use crate::error::{NahmError, Result};
use crate::gauge::{bpst_field, flat_field, norm4, GaugeField, Point4};
use crate::linalg::{adjoint, c64, cr, frobenius, identity, kron, max_abs_diff, op_norm, select_cols, CMat};
use crate::poly::{unit, ScalarPoly};
use crate::quad::QuadOrders;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Bpst,
    /// Rank-2 flat control family: no concentration at any scale.
    Flat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyParams {
    pub kind: FamilyKind,
    pub schedule: Vec<f64>,
    pub degree: usize,
    pub radius: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub eps_null: f64,
    pub min_gap: f64,
    pub cond_tol: f64,
    pub orders: QuadOrders,
    pub energy_tol: f64,
    /// Radii (relative to R) at which every eigenstate's mass bounds are checked.
    pub concentration_radii: Vec<f64>,
    /// Annulus points for the Green limit diagnostic; skipped when empty.
    pub green_points: Vec<Point4>,
}

impl FamilyParams {
    pub fn new(kind: FamilyKind, schedule: Vec<f64>, degree: usize, radius: f64) -> Self {
        FamilyParams {
            kind,
            schedule,
            degree,
            radius,
            delta1: 0.35,
            delta2: 0.1,
            eps_null: 1e-8,
            min_gap: 1e2,
            cond_tol: 1e-12,
            orders: QuadOrders::default(),
            energy_tol: 1e-6,
            concentration_radii: vec![0.25, 0.5, 0.75],
            green_points: Vec::new(),
        }
    }

    /// Upper end √(2/3) − δ₂ of the forbidden band.
    pub fn band_top(&self) -> f64 {
        (2.0f64 / 3.0).sqrt() - self.delta2
    }

    fn field_at(&self, rho: f64) -> Result<GaugeField> {
        match self.kind {
            FamilyKind::Bpst => bpst_field(rho, [0.0; 4]),
            FamilyKind::Flat => flat_field(2),
        }
    }
}

/// Resolution gate: the ball energy must change by at most `tol` (relative) when
/// every order is doubled. The radial order is doubled up to `max_refine` times
/// before the gate refuses.
pub fn resolution_gate(field: &GaugeField, radius: f64, orders: QuadOrders, tol: f64, max_refine: usize) -> Result<(QuadOrders, f64, f64)> {
    let mut o = orders;
    let mut last = f64::NAN;
    for _ in 0..=max_refine {
        let e = field.ball_energy(radius, o)?;
        let e2 = field.ball_energy(radius, o.doubled())?;
        let change = if e2 == 0.0 { (e - e2).abs() } else { ((e - e2) / e2).abs() };
        if change <= tol {
            return Ok((o, e, change));
        }
        last = change;
        o = QuadOrders { nr: 2 * o.nr, ..o };
    }
    Err(NahmError::ResolutionGate(format!("ball energy still changes by {last:.2e} (> {tol:.1e}) with radial order {}", o.nr / 2)))
}

/// q̃_μ with g⁻¹ = Σ x_μ q̃_μ/|x| and g⁻¹dg equal to the ρ → 0 limit of the BPST
/// potential, selected from the quaternion-unit candidates by a finite-difference test.
pub fn limit_gauge() -> Result<[CMat; 4]> {
    let cl = clifford_rep();
    let s = &cl.sigma;
    let cands: [[CMat; 4]; 4] = [
        s.clone(),
        s.clone().map(|m| adjoint(m.as_ref())),
        s.clone().map(|m| Mat::from_fn(2, 2, |i, j| m[(i, j)].conj())),
        s.clone().map(|m| Mat::from_fn(2, 2, |i, j| m[(j, i)])),
    ];
    let limit = bpst_field(1e-9, [0.0; 4])?;
    let pts: [Point4; 3] = [[0.3, -0.2, 0.5, 0.1], [-0.4, 0.1, 0.2, 0.6], [0.1, 0.7, -0.3, -0.2]];
    let mut best = (f64::INFINITY, 0);
    for (k, q) in cands.iter().enumerate() {
        let mut d: f64 = 0.0;
        for x in &pts {
            let a = limit.potential(x);
            for mu in 0..4 {
                let h = 1e-5;
                let (mut xp, mut xm) = (*x, *x);
                xp[mu] += h;
                xm[mu] -= h;
                let dg = (gauge_g(q, &xp) - gauge_g(q, &xm)) * faer::Scale(cr(0.5 / h));
                let v = gauge_ginv(q, x) * dg;
                d = d.max(max_abs_diff(v.as_ref(), a[mu].as_ref()));
            }
        }
        if d < best.0 {
            best = (d, k);
        }
    }
    if best.0 > 1e-6 {
        return Err(NahmError::Numerical(format!("no quaternion gauge reproduces the singular limit (defect {:.2e})", best.0)));
    }
    Ok(cands[best.1].clone())
}

/// g⁻¹(x) = Σ x_μ q̃_μ/|x|.
pub fn gauge_ginv(q: &[CMat; 4], x: &Point4) -> CMat {
    let n = norm4(x);
    let mut out = Mat::<c64>::zeros(2, 2);
    for mu in 0..4 {
        out += &q[mu] * faer::Scale(cr(x[mu] / n));
    }
    out
}

fn gauge_g(q: &[CMat; 4], x: &Point4) -> CMat {
    adjoint(gauge_ginv(q, x).as_ref())
}

/// Multiplication by |x|·g⁻¹ on spinor ⊗ C² fields.
fn gauge_op(q: &[CMat; 4]) -> FieldOp {
    let id2 = identity(2);
    FieldOp {
        c_in: 4,
        c_out: 4,
        groups: (0..4)
            .map(|mu| OpGroup { mat: kron(id2.as_ref(), q[mu].as_ref()), terms: vec![OpTerm { deriv: None, mono: unit(mu), coef: 1.0 }] })
            .collect(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub dim_large: usize,
    pub dim_flat: usize,
    /// Large block and flat space have equal dimension.
    pub square: bool,
    /// ‖M†M − I‖_op.
    pub defect: f64,
    #[serde(skip, default = "empty")]
    pub matrix: CMat,
}

fn empty() -> CMat {
    Mat::zeros(0, 0)
}

/// M_{ij} = ⟨σ_i, g⁻¹ s_j⟩ for large-block eigenstates σ_i (columns `large` in
/// Bergmann coordinates of `b`) and the flat Bergmann basis s_j. `gauge` is None
/// for a flat family, where A_∞ = A_t and no gauge change is needed.
pub fn comparison_map(b: &BergmannSpace, flat: &BergmannSpace, large: &CMat, gauge: Option<&[CMat; 4]>) -> Result<Comparison> {
    let c = b.space.comps();
    if flat.space.comps() != c {
        return Err(NahmError::DimensionMismatch(format!("ranks differ: {} vs {}", c, flat.space.comps())));
    }
    let cols = &b.basis * large;
    let id = FieldOp::identity(c);
    let matrix = match gauge {
        None => sandwich(&b.space, &id, &cols, &flat.space, &id, &flat.basis, 2.0 * b.kappa()),
        Some(q) => {
            let pb = b.with_moments(b.space.setting.moments.with_radial_power(-1.0)?);
            sandwich(&pb.space, &id, &cols, &flat.space, &gauge_op(q), &flat.basis, b.kappa())
        }
    };
    let mm = matrix.adjoint() * &matrix - identity(flat.dim());
    Ok(Comparison {
        dim_large: large.ncols(),
        dim_flat: flat.dim(),
        square: large.ncols() == flat.dim(),
        defect: op_norm(mm.as_ref())?,
        matrix,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToeplitzLimit {
    pub x1: f64,
    pub r2: f64,
    pub one: f64,
}

/// Operator norm of V†f̂V on the small block for f = x₁, |x|², 1.
pub fn toeplitz_limit_check(b: &BergmannSpace, small: &CMat) -> Result<ToeplitzLimit> {
    if small.ncols() == 0 {
        return Ok(ToeplitzLimit { x1: 0.0, r2: 0.0, one: 0.0 });
    }
    let norm = |f: ScalarPoly| -> Result<f64> {
        let t = toeplitz(b, &f);
        op_norm((small.adjoint() * &t * small).as_ref())
    };
    Ok(ToeplitzLimit {
        x1: norm(ScalarPoly::monomial(unit(0), 1.0))?,
        r2: norm(ScalarPoly::shifted_square(&[0.0; 4], 0.0))?,
        one: norm(ScalarPoly::constant(1.0))?,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenLimit {
    /// max_x ‖(G₀ s)(x)‖ over small-block states.
    pub small_norm: f64,
    /// max_x relative distance of (G₀σ_large)(x)·M from g⁻¹(x)(G_flat s)(x).
    pub large_distance: f64,
}

/// Evaluation of the Green operator at annulus points, split by block.
#[allow(clippy::too_many_arguments)]
pub fn green_limit_check(
    solver: &GreenSolver,
    green: &GreenBasis,
    small: &CMat,
    large: &CMat,
    cmp: &Comparison,
    flat_solver: &GreenSolver,
    flat_green: &GreenBasis,
    gauge: Option<&[CMat; 4]>,
    points: &[Point4],
) -> Result<GreenLimit> {
    let gs = &green.coeffs * small;
    let gl = &green.coeffs * large * &cmp.matrix;
    let mut small_norm: f64 = 0.0;
    let mut large_distance: f64 = 0.0;
    for x in points {
        if small.ncols() > 0 {
            small_norm = small_norm.max(frobenius(solver.space.evaluate(&gs, x).as_ref()));
        }
        let lt = solver.space.evaluate(&gl, x);
        let mut lf = flat_solver.space.evaluate(&flat_green.coeffs, x);
        if let Some(q) = gauge {
            lf = kron(identity(2).as_ref(), gauge_ginv(q, x).as_ref()) * &lf;
        }
        let d = frobenius((&lt - &lf).as_ref()) / frobenius(lf.as_ref()).max(1e-300);
        large_distance = large_distance.max(d);
    }
    Ok(GreenLimit { small_norm, large_distance })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub large: f64,
    pub flat: f64,
    pub rel_gap: f64,
}

/// k-th ascending large eigenvalue against the k-th flat eigenvalue (½λ² values).
pub fn spectral_convergence_table(large: &[f64], flat: &[f64]) -> Vec<ConvergenceRow> {
    large
        .iter()
        .zip(flat)
        .enumerate()
        .map(|(k, (&l, &f))| ConvergenceRow { k, large: l, flat: f, rel_gap: (l - f).abs() / f })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleReport {
    pub rho: f64,
    pub orders: QuadOrders,
    pub energy: f64,
    pub energy_change: f64,
    pub dim: usize,
    pub bergmann_gap: f64,
    pub spectrum: Vec<SpectrumRow>,
    pub dim_small: usize,
    pub dim_large: usize,
    /// Eigenvalues λ inside [δ₁, √(2/3) − δ₂].
    pub band: Vec<f64>,
    pub dichotomy: bool,
    pub small_lambdas: Vec<f64>,
    /// Origin-concentration ratio at r = 3ρ for each small state (None if 3ρ ≥ R).
    pub small_origin_ratio: Vec<Option<f64>>,
    pub comparison: Comparison,
    pub toeplitz: ToeplitzLimit,
    pub green: Option<GreenLimit>,
    pub convergence: Vec<ConvergenceRow>,
    /// Largest concentration ratio over every eigenstate and radius.
    pub max_concentration_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub energies: Vec<(f64, f64)>,
    pub flat_limit_energy: f64,
    /// E(ρ) ≈ a + bρ⁴ through the two smallest scales.
    pub extrapolated: f64,
    pub slope: f64,
    pub k: i64,
    pub margin: f64,
    pub inconclusive: bool,
}

/// k = round(lim E(A_t) − E(A_∞)); the limit is extrapolated in ρ⁴.
pub fn instanton_number(energies: &[(f64, f64)], flat_limit_energy: f64) -> Result<EnergyLedger> {
    if energies.is_empty() {
        return Err(NahmError::InvalidParameter { field: "schedule", reason: "no scales".into() });
    }
    let n = energies.len();
    let (a, b) = if n == 1 {
        (energies[0].1, 0.0)
    } else {
        let (r1, e1) = energies[n - 2];
        let (r2, e2) = energies[n - 1];
        let b = (e1 - e2) / (r1.powi(4) - r2.powi(4));
        (e2 - b * r2.powi(4), b)
    };
    let loss = a - flat_limit_energy;
    let k = loss.round();
    let margin = 0.5 - (loss - k).abs();
    Ok(EnergyLedger {
        energies: energies.to_vec(),
        flat_limit_energy,
        extrapolated: a,
        slope: b,
        k: k as i64,
        margin,
        inconclusive: margin < 0.2,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    /// The gate passes at the two smallest scales.
    pub dichotomy_tail: bool,
    /// dim_small is constant from the first passing scale on.
    pub dim_small_constant: bool,
    pub dim_small: Option<usize>,
    pub k_equals_dim_small: bool,
    pub comparison_square: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyReport {
    pub params: FamilyParams,
    pub flat_spectrum: Vec<f64>,
    pub flat_dim: usize,
    pub scales: Vec<ScaleReport>,
    pub ledger: EnergyLedger,
    pub verdict: Verdict,
}

impl FamilyReport {
    /// True when the report cannot support the k == dim_small verdict.
    pub fn inconclusive(&self) -> bool {
        !self.verdict.dichotomy_tail || self.ledger.inconclusive
    }
}

fn scale_report(
    p: &FamilyParams,
    rho: f64,
    flat: &BergmannSpace,
    flat_half: &[f64],
    flat_green: Option<&(GreenSolver, GreenBasis)>,
    gauge: Option<&[CMat; 4]>,
) -> Result<ScaleReport> {
    let field = p.field_at(rho)?;
    let (orders, energy, energy_change) = resolution_gate(&field, p.radius, p.orders, p.energy_tol, 3)?;
    let setting = setting_for(&field, p.radius, orders, p.cond_tol)?;
    let b = compute_bergmann(&field, &setting, p.degree, p.eps_null, p.min_gap)?;
    let mut rep = oscillator(&b)?;
    let radii: Vec<f64> = p.concentration_radii.iter().map(|r| r * p.radius).collect();
    annotate_concentration(&b, &mut rep, &radii, orders)?;
    let max_concentration_ratio = rep
        .rows
        .iter()
        .flat_map(|r| [r.origin_ratio.unwrap_or(0.0), r.boundary_ratio.unwrap_or(0.0)])
        .fold(0.0, f64::max);

    let top = p.band_top();
    let lam: Vec<f64> = rep.rows.iter().map(|r| r.lambda).collect();
    let small_idx: Vec<usize> = (0..lam.len()).filter(|&i| lam[i] < p.delta1).collect();
    let large_idx: Vec<usize> = (0..lam.len()).filter(|&i| lam[i] > top).collect();
    let band: Vec<f64> = lam.iter().copied().filter(|&l| l >= p.delta1 && l <= top).collect();
    let small = select_cols(rep.vectors.as_ref(), &small_idx);
    let large = select_cols(rep.vectors.as_ref(), &large_idx);

    let r3 = 3.0 * rho;
    let small_origin_ratio = if small_idx.is_empty() {
        Vec::new()
    } else if r3 < p.radius {
        let halves: Vec<f64> = small_idx.iter().map(|&i| rep.rows[i].half_lambda_sq).collect();
        concentration_check(&b, &small, &halves, r3, orders)?.into_iter().map(|(o, _)| Some(o)).collect()
    } else {
        vec![None; small_idx.len()]
    };

    let comparison = comparison_map(&b, flat, &large, gauge)?;
    let toeplitz = toeplitz_limit_check(&b, &small)?;
    let green = match flat_green {
        Some((fs, fg)) if !p.green_points.is_empty() => {
            let solver = GreenSolver::new(&field, &setting, b.space.degree + 2, Chirality::Minus)?;
            let g = green_basis(&b, &solver);
            Some(green_limit_check(&solver, &g, &small, &large, &comparison, fs, fg, gauge, &p.green_points)?)
        }
        _ => None,
    };
    let large_half: Vec<f64> = large_idx.iter().map(|&i| rep.rows[i].half_lambda_sq).collect();
    let convergence = spectral_convergence_table(&large_half, flat_half);
    Ok(ScaleReport {
        rho,
        orders,
        energy,
        energy_change,
        dim: b.dim(),
        bergmann_gap: b.gap,
        dim_small: small_idx.len(),
        dim_large: large_idx.len(),
        dichotomy: band.is_empty(),
        band,
        small_lambdas: small_idx.iter().map(|&i| lam[i]).collect(),
        small_origin_ratio,
        comparison,
        toeplitz,
        green,
        convergence,
        max_concentration_ratio,
        spectrum: rep.rows,
    })
}

/// Sweeps the schedule; scales run in parallel and are assembled in schedule order.
pub fn run_family(p: &FamilyParams) -> Result<FamilyReport> {
    if p.schedule.is_empty() {
        return Err(NahmError::InvalidParameter { field: "schedule", reason: "no scales".into() });
    }
    let min_rho = p.schedule.iter().copied().fold(f64::INFINITY, f64::min);
    // refuse early at the most demanding scale
    resolution_gate(&p.field_at(min_rho)?, p.radius, p.orders, p.energy_tol, 3)?;

    let flat_field2 = flat_field(2)?;
    let fset = setting_for(&flat_field2, p.radius, p.orders, p.cond_tol)?;
    let flat = compute_bergmann(&flat_field2, &fset, p.degree, p.eps_null, p.min_gap)?;
    let flat_half = oscillator(&flat)?.half_lambda_sq();
    let flat_green = if p.green_points.is_empty() {
        None
    } else {
        let s = GreenSolver::new(&flat_field2, &fset, p.degree + 2, Chirality::Minus)?;
        let g = green_basis(&flat, &s);
        Some((s, g))
    };
    let gauge = match p.kind {
        FamilyKind::Bpst => Some(limit_gauge()?),
        FamilyKind::Flat => None,
    };
    let scales: Vec<ScaleReport> = p
        .schedule
        .par_iter()
        .map(|&rho| scale_report(p, rho, &flat, &flat_half, flat_green.as_ref(), gauge.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let energies: Vec<(f64, f64)> = scales.iter().map(|s| (s.rho, s.energy)).collect();
    let ledger = instanton_number(&energies, 0.0)?;
    let n = scales.len();
    let dichotomy_tail = scales[n.saturating_sub(2)..].iter().all(|s| s.dichotomy);
    let first = scales.iter().position(|s| s.dichotomy);
    let (dim_small_constant, dim_small) = match first {
        Some(f) => {
            let d = scales[f].dim_small;
            (scales[f..].iter().all(|s| s.dim_small == d), Some(d))
        }
        None => (false, None),
    };
    let verdict = Verdict {
        dichotomy_tail,
        dim_small_constant,
        dim_small,
        k_equals_dim_small: dim_small.map(|d| d as i64 == ledger.k).unwrap_or(false),
        comparison_square: scales.last().map(|s| s.comparison.square).unwrap_or(false),
    };
    Ok(FamilyReport { params: p.clone(), flat_spectrum: flat_half, flat_dim: flat.dim(), scales, ledger, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauge_is_unitary() {
        let q = limit_gauge().unwrap();
        let g = gauge_ginv(&q, &[0.2, -0.5, 0.1, 0.4]);
        assert!(max_abs_diff((g.adjoint() * &g).as_ref(), identity(2).as_ref()) < 1e-14);
    }

    #[test]
    fn ledger_rounds_energy_loss() {
        let e = |r: f64| crate::gauge::bpst_ball_energy_exact(r, 1.0);
        let l = instanton_number(&[(0.2, e(0.2)), (0.15, e(0.15))], 0.0).unwrap();
        assert_eq!(l.k, 1);
        assert!(l.margin > 0.49);
        let z = instanton_number(&[(0.3, 0.0), (0.2, 0.0)], 0.0).unwrap();
        assert_eq!((z.k, z.inconclusive), (0, false));
    }

    #[test]
    fn convergence_rows() {
        let t = spectral_convergence_table(&[0.34, 0.5], &[1.0 / 3.0, 0.5, 0.6]);
        assert_eq!(t.len(), 2);
        assert!((t[0].rel_gap - 0.02).abs() < 1e-12);
    }
}
