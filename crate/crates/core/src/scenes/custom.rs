//! JSON-defined affine scenes built from monomials, sums, `|.|^2` and `log`.
//!
//! ```json
//! {
//!   "n": 2,
//!   "s0": [{"coef": [1, 0], "pow": [1, 1]}],
//!   "h":  [{"coef": [1, 0], "pow": [0, 0]}],
//!   "weight": [{"kind": "abs2", "index": 0, "coef": 1.0},
//!              {"kind": "abs2", "index": 1, "coef": 1.0}],
//!   "stratum": [0, 1]
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::jetcalc::{Cx, Scalar, C64, MAX_DIM};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    /// Complex coefficient `[re, im]`.
    pub coef: [f64; 2],
    /// Exponent of each chart coordinate.
    pub pow: Vec<u32>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(transparent)]
pub struct Poly(pub Vec<Monomial>);

impl Poly {
    pub fn eval<T: Scalar>(&self, z: &[Cx<T>]) -> Cx<T> {
        let mut acc = Cx::zero();
        for m in &self.0 {
            let mut t = Cx::<T>::one();
            for (zj, &k) in z.iter().zip(&m.pow) {
                if k > 0 {
                    t = t * zj.powu(k);
                }
            }
            acc = acc + t.mul_c(C64::new(m.coef[0], m.coef[1]));
        }
        acc
    }

    fn check(&self, n: usize, what: &str) -> Result<()> {
        if self.0.is_empty() {
            return Err(LabError::BadParams(format!("{what} has no terms")));
        }
        for m in &self.0 {
            if m.pow.len() != n {
                return Err(LabError::BadParams(format!("{what}: exponent list must have length {n}")));
            }
            if !m.coef.iter().all(|c| c.is_finite()) {
                return Err(LabError::BadParams(format!("{what}: non-finite coefficient")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightTerm {
    /// `coef * |z_index|^2`
    Abs2 { index: usize, coef: f64 },
    /// `coef * ln(1 + |z|^2)`
    Log1pNorm2 { coef: f64 },
    /// `coef * Re(poly)`
    RePoly { coef: f64, poly: Poly },
}

fn default_box() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CustomScene {
    pub n: usize,
    pub s0: Poly,
    pub h: Poly,
    pub weight: Vec<WeightTerm>,
    /// The two coordinates cutting out the singular stratum `{z_a = z_b = 0}`.
    pub stratum: [usize; 2],
    #[serde(default = "default_box")]
    pub box_radius: f64,
}

impl CustomScene {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_DIM / 2).contains(&self.n) {
            return Err(LabError::BadParams(format!("custom scene needs 2 <= n <= 6, got {}", self.n)));
        }
        self.s0.check(self.n, "s0")?;
        self.h.check(self.n, "h")?;
        let [a, b] = self.stratum;
        if a == b || a >= self.n || b >= self.n {
            return Err(LabError::BadParams("stratum must name two distinct coordinates".into()));
        }
        for t in &self.weight {
            match t {
                WeightTerm::Abs2 { index, coef } => {
                    if *index >= self.n || !coef.is_finite() {
                        return Err(LabError::BadParams("bad abs2 weight term".into()));
                    }
                }
                WeightTerm::Log1pNorm2 { coef } => {
                    if !coef.is_finite() {
                        return Err(LabError::BadParams("bad log1p_norm2 weight term".into()));
                    }
                }
                WeightTerm::RePoly { coef, poly } => {
                    if !coef.is_finite() {
                        return Err(LabError::BadParams("bad re_poly weight term".into()));
                    }
                    poly.check(self.n, "re_poly")?;
                }
            }
        }
        Ok(())
    }

    pub fn weight<T: Scalar>(&self, z: &[Cx<T>]) -> T {
        let mut w = T::cst(0.0);
        for t in &self.weight {
            w = w + match t {
                WeightTerm::Abs2 { index, coef } => z[*index].norm_sqr() * *coef,
                WeightTerm::Log1pNorm2 { coef } => {
                    let mut s = T::cst(1.0);
                    for c in z {
                        s = s + c.norm_sqr();
                    }
                    s.ln() * *coef
                }
                WeightTerm::RePoly { coef, poly } => poly.eval(z).re * *coef,
            };
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetcalc::{eval_jet2, ChartPoint};
    use crate::scenes::{builtin_scene, SceneParams};

    const LOCAL_JSON: &str = r#"{
        "n": 2,
        "s0": [{"coef": [1, 0], "pow": [1, 1]}],
        "h":  [{"coef": [1, 0], "pow": [0, 0]}],
        "weight": [{"kind": "abs2", "index": 0, "coef": 1.0},
                   {"kind": "abs2", "index": 1, "coef": 1.0}],
        "stratum": [0, 1]
    }"#;

    #[test]
    fn custom_reproduces_local_model() {
        let c: CustomScene = serde_json::from_str(LOCAL_JSON).unwrap();
        let params = SceneParams {
            custom: Some(c),
            ..Default::default()
        };
        let cs = builtin_scene("custom", &params).unwrap();
        let ls = builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap();
        let p = ChartPoint::new(0, vec![0.2, -0.1, 0.3, 0.25]);
        let a = eval_jet2(&cs, &p, 0.1).unwrap();
        let b = eval_jet2(&ls, &p, 0.1).unwrap();
        assert!((a.value - b.value).abs() < 1e-14);
        assert!((a.hess - b.hess).amax() < 1e-12);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_stratum() {
        let bad = LOCAL_JSON.replace("\"stratum\"", "\"strata\"");
        assert!(serde_json::from_str::<CustomScene>(&bad).is_err());
        let mut c: CustomScene = serde_json::from_str(LOCAL_JSON).unwrap();
        c.stratum = [1, 1];
        assert!(c.validate().is_err());
    }
}
