//! The chiral spin representation of Cl(4) every other module uses.
//!
//! S₊ and S₋ are both C². The map S₊ → S₋ of c_μ is σ_μ with σ_j = i·Pauli_j and
//! σ₄ = 1; the map S₋ → S₊ is −σ_μ†. The auxiliary factor ĉ_μ acting on the
//! Nahm side is the S₋ → S₊ block.

use faer::Mat;

use crate::error::{NahmError, Result};
use crate::linalg::{c64, ci, cr, cz, CMat};

pub type Spinor = [c64; 2];

#[derive(Clone, Debug)]
pub struct CliffordRep {
    pub sigma: [CMat; 4],
    pub c_plus_to_minus: [CMat; 4],
    pub c_minus_to_plus: [CMat; 4],
    pub eta_minus: [Spinor; 2],
    pub eta_plus: [Spinor; 2],
}

pub fn pauli() -> [CMat; 3] {
    let m = |a: [[c64; 2]; 2]| Mat::from_fn(2, 2, |i, j| a[i][j]);
    [
        m([[cz(), cr(1.0)], [cr(1.0), cz()]]),
        m([[cz(), ci(-1.0)], [ci(1.0), cz()]]),
        m([[cr(1.0), cz()], [cz(), cr(-1.0)]]),
    ]
}

pub fn clifford_rep() -> CliffordRep {
    let p = pauli();
    let sigma = [
        &p[0] * faer::Scale(ci(1.0)),
        &p[1] * faer::Scale(ci(1.0)),
        &p[2] * faer::Scale(ci(1.0)),
        crate::linalg::identity(2),
    ];
    let minus_to_plus = std::array::from_fn(|mu| {
        let s: &CMat = &sigma[mu];
        Mat::from_fn(2, 2, |i, j| -s[(j, i)].conj())
    });
    let e1 = [cr(1.0), cz()];
    let e2 = [cz(), cr(1.0)];
    CliffordRep {
        c_plus_to_minus: sigma.clone(),
        sigma,
        c_minus_to_plus: minus_to_plus,
        eta_minus: [e1, e2],
        eta_plus: [e1, e2],
    }
}

fn apply(m: &CMat, v: &Spinor) -> Spinor {
    [m[(0, 0)] * v[0] + m[(0, 1)] * v[1], m[(1, 0)] * v[0] + m[(1, 1)] * v[1]]
}

fn axis(mu: usize) -> Result<usize> {
    if (1..=4).contains(&mu) {
        Ok(mu - 1)
    } else {
        Err(NahmError::InvalidAxis(mu))
    }
}

/// The antilinear quaternionic structure, (a, b) ↦ (−b̄, ā).
pub fn epsilon(v: &Spinor) -> Spinor {
    [-v[1].conj(), v[0].conj()]
}

impl CliffordRep {
    /// c_μ restricted to S₊ → S₋, with the axis label μ ∈ 1..=4.
    pub fn act_minus(&self, mu: usize, psi: &Spinor) -> Result<Spinor> {
        Ok(apply(&self.c_plus_to_minus[axis(mu)?], psi))
    }

    /// c_μ restricted to S₋ → S₊, with the axis label μ ∈ 1..=4.
    pub fn act_plus(&self, mu: usize, psi: &Spinor) -> Result<Spinor> {
        Ok(apply(&self.c_minus_to_plus[axis(mu)?], psi))
    }

    /// The 4×4 matrix of c_μ on S₊ ⊕ S₋ (0-based μ).
    pub fn full(&self, mu: usize) -> CMat {
        let a = &self.c_plus_to_minus[mu];
        let b = &self.c_minus_to_plus[mu];
        Mat::from_fn(4, 4, |i, j| match (i < 2, j < 2) {
            (true, false) => b[(i, j - 2)],
            (false, true) => a[(i - 2, j)],
            _ => cz(),
        })
    }

    /// ĉ_μ, the S₋ → S₊ block used on the Nahm side (0-based μ).
    pub fn chat(&self, mu: usize) -> &CMat {
        &self.c_minus_to_plus[mu]
    }

    /// ε on S₊ ⊕ S₋ as a pair of component maps, used to test that it commutes with c_μ.
    pub fn epsilon_full(&self, v: &[c64; 4]) -> [c64; 4] {
        let a = epsilon(&[v[0], v[1]]);
        let b = epsilon(&[v[2], v[3]]);
        [a[0], a[1], b[0], b[1]]
    }

    /// The quaternion symbol q(f) = Σ f_μ σ_μ.
    pub fn quaternion(&self, f: [f64; 4]) -> CMat {
        let mut q = Mat::zeros(2, 2);
        for (mu, fm) in f.iter().enumerate() {
            q += &self.sigma[mu] * faer::Scale(cr(*fm));
        }
        q
    }

    /// c_μ c_ν restricted to S₋ (0-based), i.e. σ_μ ∘ (−σ_ν†).
    pub fn cc_minus(&self, mu: usize, nu: usize) -> CMat {
        &self.c_plus_to_minus[mu] * &self.c_minus_to_plus[nu]
    }

    /// c_μ c_ν restricted to S₊ (0-based), i.e. (−σ_μ†) ∘ σ_ν.
    pub fn cc_plus(&self, mu: usize, nu: usize) -> CMat {
        &self.c_minus_to_plus[mu] * &self.c_plus_to_minus[nu]
    }
}
