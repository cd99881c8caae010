//! Run configuration shared by the CLI drivers and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NahmError, Result};
use crate::gauge::{norm4, FieldSpec, Point4};
use crate::quad::QuadOrders;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Bergmann null threshold relative to the form norm.
    pub eps_null: f64,
    /// Nahm fiber kernel threshold relative to σ_max.
    pub eps_ker: f64,
    /// Index near-null threshold relative to σ_max.
    pub eps_index: f64,
    /// Required ratio across every null/non-null split.
    pub min_gap: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Gram conditioning cutoff of the ansatz.
    pub cond_tol: f64,
    /// Relative energy change allowed by the resolution gate.
    pub energy_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            eps_null: 1e-8,
            eps_ker: 1e-3,
            eps_index: 1e-6,
            min_gap: 1e2,
            delta1: 0.35,
            delta2: 0.1,
            cond_tol: 1e-12,
            energy_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Samples {
    pub interior: usize,
    pub exterior: usize,
    pub correlator_pairs: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Samples { interior: 10, exterior: 5, correlator_pairs: 20 }
    }
}

fn default_degree() -> usize {
    6
}

fn default_radius() -> f64 {
    1.0
}

fn default_schedule() -> Vec<f64> {
    vec![0.3, 0.2, 0.15]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub field: FieldSpec,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub quad: QuadOrders,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// BPST scales ρ for `family`, in sweep order.
    #[serde(default = "default_schedule")]
    pub schedule: Vec<f64>,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Explicit evaluation points y; sampled from the seed when absent.
    #[serde(default)]
    pub points: Option<Vec<Point4>>,
    #[serde(default)]
    pub samples: Samples,
    /// Run the (slow) Green-operator limit diagnostic in `family`.
    #[serde(default)]
    pub green_check: bool,
}

pub const MAX_DEGREE: usize = 14;

fn bad(field: &'static str, reason: String) -> NahmError {
    NahmError::InvalidParameter { field, reason }
}

impl RunConfig {
    pub fn new(field: FieldSpec) -> Self {
        RunConfig {
            field,
            degree: default_degree(),
            radius: default_radius(),
            quad: QuadOrders::default(),
            thresholds: Thresholds::default(),
            schedule: default_schedule(),
            out: None,
            seed: 0,
            points: None,
            samples: Samples::default(),
            green_check: false,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s).map_err(|e| bad("config", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.field.build()?;
        if let FieldSpec::Bpst { center, .. } = &self.field {
            if norm4(center) >= self.radius {
                return Err(bad("field.center", format!("center {center:?} must lie inside B({})", self.radius)));
            }
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(bad("radius", format!("must be positive, got {}", self.radius)));
        }
        if self.degree > MAX_DEGREE {
            return Err(bad("degree", format!("must be at most {MAX_DEGREE}, got {}", self.degree)));
        }
        self.quad.validate()?;
        let t = &self.thresholds;
        let unit = |name: &'static str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(bad(name, format!("must lie in (0, 1), got {v}")))
            }
        };
        unit("thresholds.eps_null", t.eps_null)?;
        unit("thresholds.eps_ker", t.eps_ker)?;
        unit("thresholds.eps_index", t.eps_index)?;
        unit("thresholds.cond_tol", t.cond_tol)?;
        unit("thresholds.energy_tol", t.energy_tol)?;
        unit("thresholds.delta1", t.delta1)?;
        unit("thresholds.delta2", t.delta2)?;
        if !(t.min_gap >= 1.0) {
            return Err(bad("thresholds.min_gap", format!("must be at least 1, got {}", t.min_gap)));
        }
        let top = (2.0f64 / 3.0).sqrt() - t.delta2;
        if t.delta1 >= top {
            return Err(bad("thresholds.delta1", format!("band [{}, {top:.4}] is empty", t.delta1)));
        }
        for (i, &rho) in self.schedule.iter().enumerate() {
            if !(rho > 0.0 && rho < self.radius) {
                return Err(bad("schedule", format!("entry {i} = {rho} must lie in (0, R)")));
            }
            if i > 0 && rho >= self.schedule[i - 1] {
                return Err(bad("schedule", "scales must decrease".into()));
            }
        }
        if let Some(pts) = &self.points {
            if pts.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(bad("points", "non-finite coordinate".into()));
            }
        }
        Ok(())
    }
}

/// Deterministic points with |y| uniform in [r_min, r_max] and uniform direction.
pub fn sample_points(seed: u64, n: usize, r_min: f64, r_max: f64) -> Vec<Point4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut d = [0.0f64; 4];
            loop {
                for v in d.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
                let n = norm4(&d);
                if n > 1e-3 && n <= 1.0 {
                    d.iter_mut().for_each(|v| *v /= n);
                    break;
                }
            }
            let r = rng.gen_range(r_min..=r_max);
            d.map(|v| v * r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(r#"{"field": {"kind": "flat"}}"#).unwrap();
        assert_eq!(c.degree, 6);
        assert_eq!(c.thresholds, Thresholds::default());
        assert_eq!(c.field, FieldSpec::Flat { rank: 1 });
    }

    #[test]
    fn nonpositive_scale_names_the_field() {
        let e = RunConfig::from_json(r#"{"field": {"kind": "bpst", "rho": -0.1}}"#).unwrap_err();
        assert!(e.to_string().contains("field.rho"), "{e}");
        let e = RunConfig::from_json(r#"{"field": {"kind": "flat"}, "schedule": [0.2, 0.3]}"#).unwrap_err();
        assert!(e.to_string().contains("schedule"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"field": {"kind": "flat"}, "degre": 3}"#).is_err());
    }

    #[test]
    fn samples_are_reproducible() {
        let a = sample_points(7, 5, 0.1, 0.3);
        assert_eq!(a, sample_points(7, 5, 0.1, 0.3));
        assert!(a.iter().all(|p| (0.1 - 1e-12..=0.3 + 1e-12).contains(&norm4(p))));
        assert_ne!(a, sample_points(8, 5, 0.1, 0.3));
    }
}
