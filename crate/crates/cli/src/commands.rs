use std::path::Path;

use nahmlab::ansatz::Chirality;
use nahmlab::bergmann::{
    adhm_residual, annotate_concentration, compute_bergmann, eigenstate_zeta, green_basis, nahm_laplacian_lifted, oscillator, position_ops,
    AdhmProvenance, LiftedPair,
};
use nahmlab::config::{sample_points, RunConfig};
use nahmlab::diracop::{degree_shift, setting_for, GreenSolver};
use nahmlab::family::{run_family, FamilyKind, FamilyParams};
use nahmlab::gauge::Point4;
use nahmlab::index::{affine_op, numerical_index};
use nahmlab::linalg::{eigvalsh, select_cols, CMat};
use nahmlab::nahm::{correlator, fiber_scan, flat_correlator_closed};
use nahmlab::FieldSpec;
use serde::Serialize;

use crate::output::{write_csv, write_json, CliError, Outcome, EXIT_CONFIG, EXIT_INCONCLUSIVE};

type Res = Result<Outcome, CliError>;

#[derive(Serialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    /// Column-major real and imaginary parts.
    re: Vec<f64>,
    im: Vec<f64>,
}

impl MatrixJson {
    fn new(m: &CMat) -> Self {
        let mut re = Vec::with_capacity(m.nrows() * m.ncols());
        let mut im = Vec::with_capacity(m.nrows() * m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        MatrixJson { rows: m.nrows(), cols: m.ncols(), re, im }
    }
}

#[derive(Serialize)]
struct BergmannRow {
    degree: usize,
    dim: usize,
    gap: f64,
    threshold: f64,
    adhm_1: Option<f64>,
    adhm_2: Option<f64>,
    adhm_3: Option<f64>,
}

pub fn flat_adhm(c: &RunConfig, out: &Path) -> Res {
    let field = c.field.build()?;
    let t = &c.thresholds;
    let setting = setting_for(&field, c.radius, c.quad, t.cond_tol)?;
    let mut rows = Vec::new();
    let mut last = None;
    for n in 0..=c.degree {
        let b = compute_bergmann(&field, &setting, n, t.eps_null, t.min_gap)?;
        let x = position_ops(&b, t.eps_null);
        let r = (x.norm_sq() > 0.0).then(|| adhm_residual(&x));
        rows.push(BergmannRow {
            degree: n,
            dim: b.dim(),
            gap: b.gap,
            threshold: b.threshold,
            adhm_1: r.map(|v| v[0]),
            adhm_2: r.map(|v| v[1]),
            adhm_3: r.map(|v| v[2]),
        });
        last = Some(x);
    }
    #[derive(Serialize)]
    struct AdhmJson {
        provenance: AdhmProvenance,
        x: Vec<MatrixJson>,
    }
    let x = last.expect("degree range is nonempty");
    let files = vec![
        write_csv(out, "bergmann.csv", &rows)?,
        write_json(out, "adhm.json", &AdhmJson { provenance: x.provenance.clone(), x: x.x.iter().map(MatrixJson::new).collect() })?,
    ];
    Ok(Outcome::ok(files))
}

pub fn spectrum(c: &RunConfig, out: &Path) -> Res {
    let field = c.field.build()?;
    let t = &c.thresholds;
    let setting = setting_for(&field, c.radius, c.quad, t.cond_tol)?;
    let b = compute_bergmann(&field, &setting, c.degree, t.eps_null, t.min_gap)?;
    let mut rep = oscillator(&b)?;
    let k = rep.rows.len().min(5);
    let idx: Vec<usize> = (0..k).collect();
    let halves: Vec<f64> = rep.rows[..k].iter().map(|r| r.half_lambda_sq).collect();
    let z = eigenstate_zeta(&b, &select_cols(rep.vectors.as_ref(), &idx), &halves)?;
    for (row, r) in rep.rows.iter_mut().zip(&z.residuals) {
        row.zeta_residual = Some(*r);
    }
    let radii: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|s| s * c.radius).collect();
    annotate_concentration(&b, &mut rep, &radii, c.quad)?;
    #[derive(Serialize)]
    struct Summary {
        dim: usize,
        bergmann_gap: f64,
        min_half_lambda_sq: f64,
        max_concentration_ratio: f64,
    }
    let summary = Summary {
        dim: b.dim(),
        bergmann_gap: b.gap,
        min_half_lambda_sq: rep.rows.first().map(|r| r.half_lambda_sq).unwrap_or(f64::NAN),
        max_concentration_ratio: rep
            .rows
            .iter()
            .flat_map(|r| [r.origin_ratio.unwrap_or(0.0), r.boundary_ratio.unwrap_or(0.0)])
            .fold(0.0, f64::max),
    };
    let files = vec![write_csv(out, "spectrum.csv", &rep.rows)?, write_json(out, "spectrum.json", &summary)?];
    Ok(Outcome::ok(files))
}

fn scan_points(c: &RunConfig) -> Vec<Point4> {
    match &c.points {
        Some(p) => p.clone(),
        None => {
            let r = c.radius;
            let mut p = sample_points(c.seed, c.samples.interior, 0.0, 0.35 * r);
            p.extend(sample_points(c.seed.wrapping_add(1), c.samples.exterior, 1.2 * r, 2.0 * r));
            p
        }
    }
}

pub fn reconstruct(c: &RunConfig, out: &Path) -> Res {
    let field = c.field.build()?;
    let t = &c.thresholds;
    let setting = setting_for(&field, c.radius, c.quad, t.cond_tol)?;
    let pair = LiftedPair::build(&field, &setting, c.degree, t.eps_null, t.min_gap)?;
    let solver = GreenSolver::new(&field, &setting, c.degree + degree_shift(&setting) + 2, Chirality::Minus)?;
    let green = green_basis(&pair.lower, &solver);
    let points = scan_points(c);
    let rows = fiber_scan(&pair, &solver, &green, &points, t.eps_ker, t.min_gap)?;

    #[derive(Serialize)]
    struct LaplacianRow {
        y1: f64,
        y2: f64,
        y3: f64,
        y4: f64,
        min_eigenvalue: f64,
    }
    let lap = points
        .iter()
        .map(|y| {
            let w = eigvalsh(nahm_laplacian_lifted(&pair, y).as_ref())?;
            Ok(LaplacianRow { y1: y[0], y2: y[1], y3: y[2], y4: y[3], min_eigenvalue: w.first().copied().unwrap_or(f64::NAN) })
        })
        .collect::<nahmlab::Result<Vec<_>>>()?;

    #[derive(Serialize)]
    struct CorrelatorRow {
        x1: String,
        x2: String,
        value: f64,
        closed_form: Option<f64>,
        rel_err: Option<f64>,
    }
    let rank = field.rank;
    let pts = sample_points(c.seed.wrapping_add(2), 2 * c.samples.correlator_pairs, 0.05 * c.radius, 0.7 * c.radius);
    let flat_line = matches!(c.field, FieldSpec::Flat { rank: 1 });
    let mut corr = Vec::new();
    for pq in pts.chunks(2) {
        let m = correlator(&solver, &green, rank, &pq[0], &pq[1])?;
        let value = (0..rank).map(|i| m[(i, i)].re).sum::<f64>() / rank as f64;
        let closed = if flat_line { Some(flat_correlator_closed(&pq[0], &pq[1], c.radius)?) } else { None };
        corr.push(CorrelatorRow {
            x1: format!("{:?}", pq[0]),
            x2: format!("{:?}", pq[1]),
            value,
            closed_form: closed,
            rel_err: closed.map(|v| (value - v).abs() / v.abs()),
        });
    }
    let files = vec![
        write_csv(out, "fibers.csv", &rows)?,
        write_csv(out, "laplacian.csv", &lap)?,
        write_csv(out, "correlator.csv", &corr)?,
    ];
    let bad = rows.iter().filter(|r| !r.conclusive).count();
    if bad > 0 {
        return Ok(Outcome { code: EXIT_INCONCLUSIVE, reason: Some(format!("{bad} fiber(s) without a singular-value gap")), files });
    }
    Ok(Outcome::ok(files))
}

pub fn index(c: &RunConfig, out: &Path) -> Res {
    let field = c.field.build()?;
    let t = &c.thresholds;
    let setting = setting_for(&field, c.radius, c.quad, t.cond_tol)?;
    let points = c.points.clone().unwrap_or_else(|| vec![[0.0; 4], [1.5 * c.radius, 0.0, 0.0, 0.0]]);
    // refuse boundary symbols before any expensive work
    for y in &points {
        nahmlab::index::affine_degree(y, c.radius)?;
    }
    let pair = LiftedPair::build(&field, &setting, c.degree, t.eps_null, t.min_gap)?;

    #[derive(Serialize)]
    struct IndexRow {
        y1: f64,
        y2: f64,
        y3: f64,
        y4: f64,
        margin: f64,
        expected: Option<i64>,
        dim_ker: usize,
        dim_coker: usize,
        index: i64,
        gap_ker: f64,
        gap_coker: f64,
        conclusive: bool,
    }
    #[derive(Serialize)]
    struct SvRow {
        point: usize,
        side: &'static str,
        k: usize,
        relative: f64,
    }
    let mut rows = Vec::new();
    let mut svs = Vec::new();
    for (p, y) in points.iter().enumerate() {
        let op = affine_op(&pair, y)?;
        let r = numerical_index(&op, t.eps_index, 0.0)?;
        for (k, v) in r.sv_ker.iter().enumerate() {
            svs.push(SvRow { point: p, side: "ker", k, relative: *v });
        }
        for (k, v) in r.sv_coker.iter().enumerate() {
            svs.push(SvRow { point: p, side: "coker", k, relative: *v });
        }
        rows.push(IndexRow {
            y1: y[0],
            y2: y[1],
            y3: y[2],
            y4: y[3],
            margin: r.margin,
            expected: r.expected,
            dim_ker: r.dim_ker,
            dim_coker: r.dim_coker,
            index: r.index,
            gap_ker: r.gap_ker,
            gap_coker: r.gap_coker,
            conclusive: r.gap_ker >= t.min_gap && r.gap_coker >= t.min_gap,
        });
    }
    let files = vec![write_csv(out, "index.csv", &rows)?, write_csv(out, "singular_values.csv", &svs)?];
    let bad = rows.iter().filter(|r| !r.conclusive).count();
    if bad > 0 {
        return Ok(Outcome { code: EXIT_INCONCLUSIVE, reason: Some(format!("{bad} point(s) without a singular-value gap")), files });
    }
    Ok(Outcome::ok(files))
}

pub fn family(c: &RunConfig, out: &Path) -> Res {
    let kind = match &c.field {
        FieldSpec::Bpst { center, .. } if center.iter().all(|v| *v == 0.0) => FamilyKind::Bpst,
        FieldSpec::Flat { rank: 2 } => FamilyKind::Flat,
        _ => {
            return Err(CliError { code: EXIT_CONFIG, message: "invalid parameter `field`: family needs a centered bpst field or the rank-2 flat control".into() })
        }
    };
    let t = &c.thresholds;
    let mut p = FamilyParams::new(kind, c.schedule.clone(), c.degree, c.radius);
    p.delta1 = t.delta1;
    p.delta2 = t.delta2;
    p.eps_null = t.eps_null;
    p.min_gap = t.min_gap;
    p.cond_tol = t.cond_tol;
    p.orders = c.quad;
    p.energy_tol = t.energy_tol;
    if c.green_check {
        p.green_points = sample_points(c.seed, 6, 0.45 * c.radius, 0.7 * c.radius);
    }
    let report = run_family(&p)?;

    #[derive(Serialize)]
    struct PlotRow {
        rho: f64,
        k: usize,
        lambda: f64,
        half_lambda_sq: f64,
    }
    let mut files = vec![write_json(out, "report.json", &report)?];
    let mut plot = Vec::new();
    for (i, s) in report.scales.iter().enumerate() {
        files.push(write_csv(out, &format!("spectrum_{i:02}.csv"), &s.spectrum)?);
        plot.extend(s.spectrum.iter().map(|r| PlotRow { rho: s.rho, k: r.index, lambda: r.lambda, half_lambda_sq: r.half_lambda_sq }));
    }
    files.push(write_csv(out, "plot.csv", &plot)?);
    if report.inconclusive() {
        let reason = if !report.verdict.dichotomy_tail {
            "dichotomy gate failed at the smallest scales".to_string()
        } else {
            format!("instanton-number rounding margin {:.3} below 0.2", report.ledger.margin)
        };
        return Ok(Outcome { code: EXIT_INCONCLUSIVE, reason: Some(reason), files });
    }
    Ok(Outcome::ok(files))
}
