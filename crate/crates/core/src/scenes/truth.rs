//! Analytically known critical data of the built-in scenes, used as oracles.

use serde::Serialize;

use super::{Model, SceneSpec};
use crate::jetcalc::ChartPoint;

/// Shape of the critical set of `phi_0` away from the divisor.
#[derive(Clone, Debug, Default, Serialize)]
pub enum CritPhi0 {
    /// `{|z0| = |z1| = 1, z_j = 0 (j >= 2)}` in the affine local model.
    Torus,
    /// `{|Z0| = |Z1|, Z_j = 0 (j >= 2)}` in `CP^n`: a Morse-Bott circle.
    Circle,
    /// Isolated points.
    Points(Vec<ChartPoint>),
    #[default]
    Unknown,
}

/// A critical point of `phi_eps` restricted to `S-bar`.
#[derive(Clone, Debug, Serialize)]
pub struct StratumCrit {
    pub point: ChartPoint,
    pub stratum_chart: usize,
    /// Morse index of the restriction.
    pub sbar_index: usize,
    /// Expected Morse index of the nearby critical point of `phi_eps`.
    pub full_index: usize,
    /// `-log||h||^2` at the point, the limit of `phi_eps + 2 log eps`.
    pub value_limit: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct KnownTruth {
    pub crit_phi0: CritPhi0,
    pub crit_sbar: Vec<StratumCrit>,
    /// Morse index of each isolated critical point of `phi_0`.
    pub phi0_indices: Vec<usize>,
    pub notes: Vec<String>,
}

pub(super) fn known_truth(scene: &SceneSpec) -> KnownTruth {
    let n = scene.n;
    let dim = scene.real_dim();
    match &scene.model {
        Model::LocalNc { psi_b } => {
            let idx = psi_b.iter().filter(|b| b.abs() > 1.0).count();
            KnownTruth {
                crit_phi0: CritPhi0::Torus,
                crit_sbar: vec![StratumCrit {
                    point: ChartPoint::new(0, vec![0.0; dim]),
                    stratum_chart: 0,
                    sbar_index: idx,
                    full_index: idx + 2,
                    value_limit: 0.0,
                }],
                phi0_indices: vec![],
                notes: vec![],
            }
        }
        Model::CpnO2h { a } => {
            let crit_sbar = (2..=n)
                .map(|k| StratumCrit {
                    point: ChartPoint::new(k, vec![0.0; dim]),
                    stratum_chart: k - 2,
                    sbar_index: n - k,
                    full_index: n - k + 2,
                    value_limit: -(a[k - 2] * a[k - 2]).ln(),
                })
                .collect();
            KnownTruth {
                crit_phi0: CritPhi0::Circle,
                crit_sbar,
                phi0_indices: vec![],
                notes: vec![
                    "Crit(phi_0) computed in charts is {|Z0| = |Z1|, Z_j = 0 for j >= 2}; \
                     the condition |Z0| = |Z1| alone describes a larger set"
                        .into(),
                ],
            }
        }
        Model::CpnXCpn { a, kappa } => {
            let crit_sbar = (1..=n)
                .map(|i| StratumCrit {
                    point: ChartPoint::new(scene.chart_from_indices(&[i, i]), vec![0.0; dim]),
                    stratum_chart: (i - 1) * n + (i - 1),
                    sbar_index: 2 * (n - i),
                    full_index: 2 * (n - i) + 2,
                    value_limit: -(a[i - 1] * a[i - 1]).ln(),
                })
                .collect();
            let mut notes = vec![];
            if *kappa != 0.0 {
                notes.push("metric perturbation kappa != 0: analytic data not guaranteed".into());
            }
            KnownTruth {
                crit_phi0: CritPhi0::Points(vec![ChartPoint::new(0, vec![0.0; dim])]),
                crit_sbar: if *kappa == 0.0 { crit_sbar } else { vec![] },
                phi0_indices: vec![0],
                notes,
            }
        }
        Model::Custom(_) => KnownTruth::default(),
    }
}

impl SceneSpec {
    /// Chart distance to the known critical set of `phi_0`, `+inf` if unknown.
    pub fn crit_phi0_distance(&self, p: &ChartPoint) -> f64 {
        match &self.known_truth.crit_phi0 {
            CritPhi0::Torus => {
                let z = p.complex();
                let mut d = (z[0].abs() - 1.0).powi(2) + (z[1].abs() - 1.0).powi(2);
                for w in &z[2..] {
                    d += w.norm_sqr();
                }
                d.sqrt()
            }
            CritPhi0::Circle => {
                let f = &self.hom_factors(p.chart, &p.complex())[0];
                let c = if f[0].norm_sqr() >= f[1].norm_sqr() { 0 } else { 1 };
                let Ok(q) = self.to_chart(p, c) else {
                    return f64::INFINITY;
                };
                let z = q.complex();
                // chart c: the other normal coordinate sits at position 0
                let mut d = (z[0].abs() - 1.0).powi(2);
                for w in &z[1..] {
                    d += w.norm_sqr();
                }
                d.sqrt()
            }
            CritPhi0::Points(pts) => pts
                .iter()
                .map(|q| self.distance(q, p))
                .fold(f64::INFINITY, f64::min),
            CritPhi0::Unknown => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::jetcalc::{eval_jet2, ChartPoint};
    use crate::scenes::{builtin_scene, SceneParams};

    #[test]
    fn stratum_truth_points_are_critical() {
        for (name, n) in [("cpn_o2h", 2), ("cpn_o2h", 3), ("cpn_x_cpn", 2), ("local_nc", 2)] {
            let s = builtin_scene(name, &SceneParams::with_n(n)).unwrap();
            for sc in &s.known_truth.crit_sbar {
                for eps in [0.1, 0.003] {
                    let j = eval_jet2(&s, &sc.point, eps).unwrap();
                    assert!(j.grad.norm() < 1e-13, "{name}");
                }
            }
        }
    }

    #[test]
    fn circle_distance() {
        let s = builtin_scene("cpn_o2h", &SceneParams::with_n(2)).unwrap();
        // chart 1: (Z0, Z2), with |Z0| = 1 on the circle
        let p = ChartPoint::new(1, vec![0.6, 0.8, 0.0, 0.0]);
        assert!(s.crit_phi0_distance(&p) < 1e-15);
        let q = s.to_chart(&p, 0).unwrap();
        assert!(s.crit_phi0_distance(&q) < 1e-14);
        let j = eval_jet2(&s, &p, 0.0).unwrap();
        assert!(j.grad.norm() < 1e-13);
    }
}
