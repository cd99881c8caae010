//! Trial spaces of weighted polynomial spinor fields.
//!
//! A field is w(x)^{-κ} · p(x), with p a polynomial with values in spinors ⊗ E
//! (component index `spin * rank + gauge`) and w the denominator of the gauge
//! potential. Bubble spaces carry the extra factor R² − |x|² inside p. When the
//! moments are parity-symmetric, Gram matrices split over the 16 parity classes
//! of monomials and each class is orthonormalized on its own; the basis of the
//! whole space is (class-wise scalar orthonormal polynomials) ⊗ (unit components).

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NahmError, Result};
use crate::gauge::Point4;
use crate::linalg::{c64, cr, cz, eigh_real, CMat, RMat};
use crate::poly::{degree, eval_mono, mono_count, parity, Mono, MonoIndex, ScalarPoly};
use crate::quad::{Moments, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chirality {
    Plus,
    Minus,
}

/// Parameters shared by every space attached to one gauge field.
#[derive(Clone)]
pub struct Setting {
    pub radius: f64,
    pub rank: usize,
    pub kappa: f64,
    pub weight: Option<Weight>,
    pub moments: Arc<Moments>,
    pub cond_tol: f64,
}

impl Setting {
    pub fn comps(&self) -> usize {
        2 * self.rank
    }

    pub fn split(&self) -> bool {
        self.moments.parity_symmetric()
    }

    pub fn n_classes(&self) -> usize {
        if self.split() {
            16
        } else {
            1
        }
    }

    pub fn class_of(&self, a: &Mono) -> usize {
        if self.split() {
            parity(a)
        } else {
            0
        }
    }

    pub fn weight_at(&self, x: &Point4) -> f64 {
        self.weight.map(|w| w.eval(x)).unwrap_or(1.0)
    }

    /// Scalar prefactor w(x)^{-κ}.
    pub fn prefactor(&self, x: &Point4) -> f64 {
        if self.kappa == 0.0 {
            1.0
        } else {
            self.weight_at(x).powf(-self.kappa)
        }
    }

    /// Moment ∫ x^α w^{-β}; flat settings ignore β.
    pub fn moment(&self, a: Mono, beta: f64) -> f64 {
        self.moments.moment([a[0] as u32, a[1] as u32, a[2] as u32, a[3] as u32], beta)
    }

    /// Real moment matrix between two monomial lists.
    pub fn moment_matrix(&self, rows: &[Mono], cols: &[Mono], beta: f64) -> RMat {
        let vals: Vec<f64> = (0..rows.len() * cols.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx % rows.len(), idx / rows.len());
                self.moment(crate::poly::add(&rows[i], &cols[j]), beta)
            })
            .collect();
        Mat::from_fn(rows.len(), cols.len(), |i, j| vals[i + j * rows.len()])
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OrthoReport {
    pub generators: usize,
    pub retained: usize,
    pub condition: f64,
}

/// Spectral orthonormalization of a real Gram matrix: Jacobi scaling, eigenvectors
/// with eigenvalue below `tol · max` dropped, one refinement pass. Returns B with
/// Bᵀ G B = I. Without drops the symmetric (Löwdin) form is used, so an already
/// orthonormal set maps to the identity.
pub fn orthonormalize(gram: &RMat, tol: f64) -> Result<(RMat, OrthoReport)> {
    let n = gram.nrows();
    if n == 0 {
        return Ok((Mat::zeros(0, 0), OrthoReport { generators: 0, retained: 0, condition: 1.0 }));
    }
    let d: Vec<f64> = (0..n).map(|i| 1.0 / gram[(i, i)].max(1e-300).sqrt()).collect();
    let gs = Mat::from_fn(n, n, |i, j| gram[(i, j)] * d[i] * d[j]);
    let (w, u) = eigh_real(gs.as_ref())?;
    let wmax = w[n - 1];
    if !(wmax > 0.0) {
        return Err(NahmError::Conditioning);
    }
    let keep: Vec<usize> = (0..n).filter(|&i| w[i] > tol * wmax).collect();
    if keep.is_empty() {
        return Err(NahmError::Conditioning);
    }
    let condition = wmax / w[keep[0]];
    let mut b = if keep.len() == n {
        let scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] / w[j].sqrt());
        &scaled * u.transpose()
    } else {
        Mat::from_fn(n, keep.len(), |i, j| u[(i, keep[j])] / w[keep[j]].sqrt())
    };
    for i in 0..n {
        for j in 0..b.ncols() {
            b[(i, j)] *= d[i];
        }
    }
    // refinement: B ← B (BᵀGB)^{-1/2}
    let s = b.transpose() * gram * &b;
    let (ws, us) = eigh_real(s.as_ref())?;
    let k = ws.len();
    let fix = {
        let scaled = Mat::from_fn(k, k, |i, j| us[(i, j)] / ws[j].sqrt());
        &scaled * us.transpose()
    };
    b = &b * &fix;
    Ok((b, OrthoReport { generators: n, retained: keep.len(), condition }))
}

/// One parity class of a space: numerator monomials and the real coefficient
/// columns of the orthonormal scalar functions.
#[derive(Clone, Debug)]
pub struct ClassBlock {
    pub class: usize,
    pub monos: Vec<Mono>,
    pub coeff: RMat,
}

impl ClassBlock {
    pub fn dim(&self) -> usize {
        self.coeff.ncols()
    }
}

#[derive(Clone)]
pub struct AnsatzSpace {
    pub setting: Setting,
    /// Maximal total degree of the generators x^α (before the bubble factor).
    pub degree: usize,
    pub chirality: Chirality,
    pub bubble: bool,
    pub blocks: Vec<ClassBlock>,
    /// Offsets of each block in units of scalar functions.
    pub offsets: Vec<usize>,
    pub report: OrthoReport,
}

impl AnsatzSpace {
    pub fn new(setting: &Setting, degree: usize, chirality: Chirality, bubble: bool) -> Result<Self> {
        let gens = MonoIndex::new(degree, false).monos;
        let bub = ScalarPoly::bubble(setting.radius);
        let beta = 2.0 * setting.kappa;
        let results: Vec<Result<Option<(ClassBlock, OrthoReport)>>> = (0..setting.n_classes())
            .into_par_iter()
            .map(|k| {
                let cls: Vec<Mono> = gens.iter().filter(|a| setting.class_of(a) == k).copied().collect();
                if cls.is_empty() {
                    return Ok(None);
                }
                // generator → numerator polynomial
                let polys: Vec<ScalarPoly> = cls
                    .iter()
                    .map(|a| {
                        let m = ScalarPoly::monomial(*a, 1.0);
                        if bubble {
                            m.mul(&bub)
                        } else {
                            m
                        }
                    })
                    .collect();
                let mut set: BTreeMap<(usize, Mono), ()> = BTreeMap::new();
                for p in &polys {
                    for a in p.terms.keys() {
                        set.insert((degree_of(a), *a), ());
                    }
                }
                let monos: Vec<Mono> = set.keys().map(|(_, a)| *a).collect();
                let pos: HashMap<Mono, usize> = monos.iter().enumerate().map(|(i, a)| (*a, i)).collect();
                let e = Mat::from_fn(monos.len(), cls.len(), |i, j| polys[j].terms.get(&monos[i]).copied().unwrap_or(0.0));
                let _ = &pos;
                let m = setting.moment_matrix(&monos, &monos, beta);
                let gram = e.transpose() * &m * &e;
                let (b, rep) = orthonormalize(&gram, setting.cond_tol)?;
                Ok(Some((ClassBlock { class: k, monos, coeff: &e * &b }, rep)))
            })
            .collect();
        let mut blocks = Vec::new();
        let mut report = OrthoReport { generators: 0, retained: 0, condition: 1.0 };
        for r in results {
            if let Some((blk, rep)) = r? {
                report.generators += rep.generators;
                report.retained += rep.retained;
                report.condition = report.condition.max(rep.condition);
                blocks.push(blk);
            }
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut acc = 0;
        for b in &blocks {
            offsets.push(acc);
            acc += b.dim();
        }
        Ok(AnsatzSpace { setting: setting.clone(), degree, chirality, bubble, blocks, offsets, report })
    }

    pub fn comps(&self) -> usize {
        self.setting.comps()
    }

    pub fn scalar_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim()).sum()
    }

    pub fn dim(&self) -> usize {
        self.scalar_dim() * self.comps()
    }

    /// Number of generators before conditioning: 2r · binom(N+4, 4).
    pub fn generator_count(&self) -> usize {
        self.comps() * mono_count(self.degree)
    }

    /// Maximal numerator degree.
    pub fn numer_degree(&self) -> usize {
        self.degree + if self.bubble { 2 } else { 0 }
    }

    /// Range of coefficient indices belonging to block `b`.
    pub fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        let c = self.comps();
        self.offsets[b] * c..(self.offsets[b] + self.blocks[b].dim()) * c
    }

    /// Values of every basis function at x, as a (comps × dim) matrix.
    pub fn eval_basis(&self, x: &Point4) -> CMat {
        let c = self.comps();
        let pre = self.setting.prefactor(x);
        let mut out = Mat::<c64>::zeros(c, self.dim());
        for (bi, blk) in self.blocks.iter().enumerate() {
            let vals: Vec<f64> = blk.monos.iter().map(|a| eval_mono(a, x)).collect();
            for j in 0..blk.dim() {
                let mut v = 0.0;
                for (i, m) in vals.iter().enumerate() {
                    v += blk.coeff[(i, j)] * m;
                }
                for e in 0..c {
                    out[(e, (self.offsets[bi] + j) * c + e)] = cr(v * pre);
                }
            }
        }
        out
    }

    /// Field value at x for coefficient columns `coeffs` (dim × k); returns comps × k.
    pub fn evaluate(&self, coeffs: &CMat, x: &Point4) -> CMat {
        self.eval_basis(x) * coeffs
    }

    /// Numerator polynomial of a coefficient vector, keyed by monomial, one entry per component.
    pub fn numerator(&self, v: &[c64]) -> BTreeMap<Mono, Vec<c64>> {
        let c = self.comps();
        let mut out: BTreeMap<Mono, Vec<c64>> = BTreeMap::new();
        for (bi, blk) in self.blocks.iter().enumerate() {
            for (i, a) in blk.monos.iter().enumerate() {
                let entry = out.entry(*a).or_insert_with(|| vec![cz(); c]);
                for j in 0..blk.dim() {
                    let s = blk.coeff[(i, j)];
                    if s == 0.0 {
                        continue;
                    }
                    for e in 0..c {
                        entry[e] += v[(self.offsets[bi] + j) * c + e] * s;
                    }
                }
            }
        }
        out
    }
}

fn degree_of(a: &Mono) -> usize {
    degree(a)
}

/// One term of a polynomial differential operator acting on numerators:
/// p ↦ coef · x^mono · (∂_deriv p), or without the derivative.
#[derive(Clone, Debug)]
pub struct OpTerm {
    pub deriv: Option<usize>,
    pub mono: Mono,
    pub coef: f64,
}

/// Terms sharing one c_out × c_in component matrix.
#[derive(Clone, Debug)]
pub struct OpGroup {
    pub mat: CMat,
    pub terms: Vec<OpTerm>,
}

/// A linear map on numerators, Σ_groups mat ⊗ (scalar differential polynomial).
#[derive(Clone, Debug)]
pub struct FieldOp {
    pub c_in: usize,
    pub c_out: usize,
    pub groups: Vec<OpGroup>,
}

impl FieldOp {
    pub fn identity(c: usize) -> Self {
        Self::multiply(&ScalarPoly::constant(1.0), c)
    }

    pub fn multiply(p: &ScalarPoly, c: usize) -> Self {
        FieldOp {
            c_in: c,
            c_out: c,
            groups: vec![OpGroup {
                mat: crate::linalg::identity(c),
                terms: p.terms.iter().map(|(a, v)| OpTerm { deriv: None, mono: *a, coef: *v }).collect(),
            }],
        }
    }

    /// Multiplication by x_μ.
    pub fn coordinate(mu: usize, c: usize) -> Self {
        Self::multiply(&ScalarPoly::monomial(crate::poly::unit(mu), 1.0), c)
    }

    /// mat ∘ self.
    pub fn left(&self, mat: &CMat) -> Self {
        FieldOp {
            c_in: self.c_in,
            c_out: mat.nrows(),
            groups: self.groups.iter().map(|g| OpGroup { mat: mat * &g.mat, terms: g.terms.clone() }).collect(),
        }
    }

    pub fn plus(&self, other: &FieldOp) -> Self {
        assert_eq!((self.c_in, self.c_out), (other.c_in, other.c_out));
        let mut groups = self.groups.clone();
        groups.extend(other.groups.iter().cloned());
        FieldOp { c_in: self.c_in, c_out: self.c_out, groups }
    }

    pub fn degree_increase(&self) -> usize {
        self.groups
            .iter()
            .flat_map(|g| g.terms.iter())
            .map(|t| degree(&t.mono))
            .max()
            .unwrap_or(0)
    }

    /// Scalar image of one numerator polynomial column under the terms of a group.
    fn apply_terms(terms: &[OpTerm], monos: &[Mono], col: impl Fn(usize) -> f64, out: &mut BTreeMap<(usize, Mono), f64>) {
        for (i, a) in monos.iter().enumerate() {
            let v = col(i);
            if v == 0.0 {
                continue;
            }
            for t in terms {
                let (base, fac) = match t.deriv {
                    None => (*a, 1.0),
                    Some(mu) => {
                        if a[mu] == 0 {
                            continue;
                        }
                        let mut b = *a;
                        b[mu] -= 1;
                        (b, a[mu] as f64)
                    }
                };
                let o = crate::poly::add(&base, &t.mono);
                *out.entry((degree(&o), o)).or_insert(0.0) += v * fac * t.coef;
            }
        }
    }
}

/// Image of one class block under an operator, split by output class:
/// out class → (output monomials, matrix with rows (mono, comp) and columns (basis j, comp)).
type Image = BTreeMap<usize, (Vec<Mono>, CMat)>;

fn block_image(space: &AnsatzSpace, b: usize, op: &FieldOp) -> Image {
    let blk = &space.blocks[b];
    let m = blk.dim();
    let (ci, co) = (op.c_in, op.c_out);
    assert_eq!(ci, space.comps());
    // per group: scalar images S_g (out mono → row over j)
    let mut per_group: Vec<BTreeMap<(usize, Mono), Vec<f64>>> = Vec::with_capacity(op.groups.len());
    for g in &op.groups {
        let mut rows: BTreeMap<(usize, Mono), Vec<f64>> = BTreeMap::new();
        for j in 0..m {
            let mut acc = BTreeMap::new();
            FieldOp::apply_terms(&g.terms, &blk.monos, |i| blk.coeff[(i, j)], &mut acc);
            for (k, v) in acc {
                rows.entry(k).or_insert_with(|| vec![0.0; m])[j] += v;
            }
        }
        per_group.push(rows);
    }
    let setting = &space.setting;
    let mut by_class: BTreeMap<usize, BTreeMap<(usize, Mono), ()>> = BTreeMap::new();
    for rows in &per_group {
        for key in rows.keys() {
            by_class.entry(setting.class_of(&key.1)).or_default().insert(*key, ());
        }
    }
    let mut out = Image::new();
    for (cls, keys) in by_class {
        let monos: Vec<Mono> = keys.keys().map(|k| k.1).collect();
        let pos: HashMap<Mono, usize> = monos.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let mut mat = Mat::<c64>::zeros(monos.len() * co, m * ci);
        for (g, rows) in op.groups.iter().zip(&per_group) {
            for ((_, a), row) in rows.iter() {
                if setting.class_of(a) != cls {
                    continue;
                }
                let r = pos[a];
                for (j, s) in row.iter().enumerate() {
                    if *s == 0.0 {
                        continue;
                    }
                    for o in 0..co {
                        for e in 0..ci {
                            let v = g.mat[(o, e)];
                            if v != cz() {
                                mat[(r * co + o, j * ci + e)] += v * *s;
                            }
                        }
                    }
                }
            }
        }
        out.insert(cls, (monos, mat));
    }
    out
}

fn images(space: &AnsatzSpace, op: &FieldOp) -> Vec<Image> {
    (0..space.blocks.len()).into_par_iter().map(|b| block_image(space, b, op)).collect()
}

/// Stack the images of several blocks (each right-multiplied by its coefficient
/// rows) into one matrix over the union of output monomials of class `cls`.
fn stacked(
    setting: &Setting,
    parts: &[(&Image, CMat)],
    cls: usize,
    monos: &[Mono],
    c_out: usize,
    ncols: usize,
) -> CMat {
    let pos: HashMap<Mono, usize> = monos.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let _ = setting;
    let mut out = Mat::<c64>::zeros(monos.len() * c_out, ncols);
    for (img, right) in parts {
        if let Some((ms, mat)) = img.get(&cls) {
            let prod = mat * right;
            for (i, a) in ms.iter().enumerate() {
                let r = pos[a];
                for o in 0..c_out {
                    for j in 0..ncols {
                        out[(r * c_out + o, j)] += prod[(i * c_out + o, j)];
                    }
                }
            }
        }
    }
    out
}

/// Like `stacked`, but each image is copied into columns starting at its offset.
fn placed(parts: &[(&Image, usize)], cls: usize, monos: &[Mono], c_out: usize, ncols: usize) -> CMat {
    let pos: HashMap<Mono, usize> = monos.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut out = Mat::<c64>::zeros(monos.len() * c_out, ncols);
    for (img, off) in parts {
        if let Some((ms, mat)) = img.get(&cls) {
            for (i, a) in ms.iter().enumerate() {
                let r = pos[a];
                for o in 0..c_out {
                    for j in 0..mat.ncols() {
                        out[(r * c_out + o, off + j)] = mat[(i * c_out + o, j)];
                    }
                }
            }
        }
    }
    out
}

fn union_monos(lists: &[&Image], cls: usize) -> Vec<Mono> {
    let mut set: BTreeMap<(usize, Mono), ()> = BTreeMap::new();
    for img in lists {
        if let Some((ms, _)) = img.get(&cls) {
            for a in ms {
                set.insert((degree(a), *a), ());
            }
        }
    }
    set.keys().map(|k| k.1).collect()
}

fn weighted(setting: &Setting, monos: &[Mono], c: usize, beta: f64, y: &CMat) -> CMat {
    let m = setting.moment_matrix(monos, monos, beta);
    // (M ⊗ I_c) y, applied component by component
    let n = monos.len();
    let k = y.ncols();
    let mut out = Mat::<c64>::zeros(n * c, k);
    for e in 0..c {
        let ye = Mat::from_fn(n, k, |i, j| y[(i * c + e, j)]);
        let me = crate::linalg::to_complex(m.as_ref());
        let prod = &me * &ye;
        for i in 0..n {
            for j in 0..k {
                out[(i * c + e, j)] = prod[(i, j)];
            }
        }
    }
    out
}

/// ⟨op_a(A ca), op_b(B cb)⟩ = ∫ conj(numer_a)·numer_b w^{-β}, for coefficient
/// columns `ca` (dim A × ka) and `cb` (dim B × kb). Both spaces must share a setting.
pub fn sandwich(
    a: &AnsatzSpace,
    op_a: &FieldOp,
    ca: &CMat,
    b: &AnsatzSpace,
    op_b: &FieldOp,
    cb: &CMat,
    beta: f64,
) -> CMat {
    sandwich_impl(a, op_a, Some(ca), b, op_b, cb, beta)
}

/// `sandwich` with every basis vector of `a` on the left (dim A × kb), without
/// materializing an identity matrix.
pub fn sandwich_all(a: &AnsatzSpace, op_a: &FieldOp, b: &AnsatzSpace, op_b: &FieldOp, cb: &CMat, beta: f64) -> CMat {
    sandwich_impl(a, op_a, None, b, op_b, cb, beta)
}

fn sandwich_impl(
    a: &AnsatzSpace,
    op_a: &FieldOp,
    ca: Option<&CMat>,
    b: &AnsatzSpace,
    op_b: &FieldOp,
    cb: &CMat,
    beta: f64,
) -> CMat {
    assert_eq!(op_a.c_out, op_b.c_out);
    let ia = images(a, op_a);
    let ib = images(b, op_b);
    let rows_of = |sp: &AnsatzSpace, c: &CMat, bi: usize| {
        let r = sp.block_range(bi);
        c.as_ref().subrows(r.start, r.len()).to_owned()
    };
    let na = ca.map(|m| m.ncols()).unwrap_or(a.dim());
    let parts_a: Vec<(&Image, CMat)> = match ca {
        Some(ca) => ia.iter().enumerate().map(|(bi, img)| (img, rows_of(a, ca, bi))).collect(),
        None => Vec::new(),
    };
    let placed_a: Vec<(&Image, usize)> = ia.iter().enumerate().map(|(bi, img)| (img, a.block_range(bi).start)).collect();
    let parts_b: Vec<(&Image, CMat)> = ib.iter().enumerate().map(|(bi, img)| (img, rows_of(b, cb, bi))).collect();
    let classes = a.setting.n_classes();
    let c = op_a.c_out;
    let piece = |cls: usize| {
        let all: Vec<&Image> = ia.iter().chain(ib.iter()).collect();
        let monos = union_monos(&all, cls);
        if monos.is_empty() {
            return None;
        }
        let ya = match ca {
            Some(_) => stacked(&a.setting, &parts_a, cls, &monos, c, na),
            None => placed(&placed_a, cls, &monos, c, na),
        };
        let yb = stacked(&a.setting, &parts_b, cls, &monos, c, cb.ncols());
        let myb = weighted(&a.setting, &monos, c, beta, &yb);
        Some(ya.adjoint() * myb)
    };
    let mut out = Mat::<c64>::zeros(na, cb.ncols());
    let all: Vec<usize> = (0..classes).collect();
    for batch in all.chunks(rayon::current_num_threads().max(1)) {
        let pieces: Vec<Option<CMat>> = batch.par_iter().map(|&cls| piece(cls)).collect();
        for m in pieces.into_iter().flatten() {
            out += m;
        }
    }
    out
}

/// A Hermitian form restricted to one connected group of blocks.
#[derive(Clone)]
pub struct FormBlock {
    /// Block indices of the space covered by this piece.
    pub blocks: Vec<usize>,
    /// Coefficient indices in the space, in the order used by `matrix`.
    pub indices: Vec<usize>,
    pub matrix: CMat,
}

/// The form ⟨op φ_i, op φ_j⟩ with weight w^{-β}, split into the connected
/// components of the block coupling graph (blocks couple when their images
/// share an output class).
pub fn form_blocks(space: &AnsatzSpace, ops: &[FieldOp], beta: f64) -> Vec<FormBlock> {
    let imgs: Vec<Vec<Image>> = ops.iter().map(|op| images(space, op)).collect();
    let nb = space.blocks.len();
    let mut parent: Vec<usize> = (0..nb).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut k = i;
        while p[k] != r {
            let n = p[k];
            p[k] = r;
            k = n;
        }
        r
    }
    for per_op in &imgs {
        let mut owner: HashMap<usize, usize> = HashMap::new();
        for (bi, img) in per_op.iter().enumerate() {
            for cls in img.keys() {
                if let Some(&o) = owner.get(cls) {
                    let (x, y) = (find(&mut parent, o), find(&mut parent, bi));
                    if x != y {
                        parent[x.max(y)] = x.min(y);
                    }
                } else {
                    owner.insert(*cls, bi);
                }
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for bi in 0..nb {
        let r = find(&mut parent, bi);
        comps.entry(r).or_default().push(bi);
    }
    let c = space.comps();
    let c_out = ops[0].c_out;
    comps
        .into_values()
        .map(|members| {
            let indices: Vec<usize> = members.iter().flat_map(|&bi| space.block_range(bi)).collect();
            let n = indices.len();
            let mut matrix = Mat::<c64>::zeros(n, n);
            // local column offsets of each member
            let mut local = Vec::new();
            let mut acc = 0;
            for &bi in &members {
                local.push(acc);
                acc += space.blocks[bi].dim() * c;
            }
            for per_op in &imgs {
                let mut classes: Vec<usize> = members.iter().flat_map(|&bi| per_op[bi].keys().copied()).collect();
                classes.sort_unstable();
                classes.dedup();
                // each class only touches the members whose image reaches it; pieces are
                // computed a thread-batch at a time and added in class order
                let piece = |cls: usize| {
                    let mut cols = Vec::new();
                    let mut parts: Vec<(&Image, usize)> = Vec::new();
                    let mut width = 0;
                    for (k, &bi) in members.iter().enumerate() {
                        if per_op[bi].contains_key(&cls) {
                            let d = space.blocks[bi].dim() * c;
                            parts.push((&per_op[bi], width));
                            cols.extend(local[k]..local[k] + d);
                            width += d;
                        }
                    }
                    let refs: Vec<&Image> = parts.iter().map(|p| p.0).collect();
                    let monos = union_monos(&refs, cls);
                    let z = placed(&parts, cls, &monos, c_out, width);
                    let mz = weighted(&space.setting, &monos, c_out, beta, &z);
                    (cols, z.adjoint() * mz)
                };
                for batch in classes.chunks(rayon::current_num_threads().max(1)) {
                    let pieces: Vec<(Vec<usize>, CMat)> = batch.par_iter().map(|&cls| piece(cls)).collect();
                    for (cols, p) in pieces {
                        for (j, &gj) in cols.iter().enumerate() {
                            for (i, &gi) in cols.iter().enumerate() {
                                matrix[(gi, gj)] += p[(i, j)];
                            }
                        }
                    }
                }
            }
            FormBlock { blocks: members, indices, matrix }
        })
        .collect()
}

/// Gram matrix of arbitrary coefficient columns in `space` (identity for orthonormal coordinates).
pub fn gram(space: &AnsatzSpace, cols: &CMat) -> CMat {
    let id = FieldOp::identity(space.comps());
    sandwich(space, &id, cols, space, &id, cols, 2.0 * space.setting.kappa)
}
