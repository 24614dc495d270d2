//! Sample-based self-checks of the kernel: AD against finite differences,
//! `epsilon`-independence of `omega`, the Liouville equation and metric
//! positivity.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{eval_jet2, j_matrix, jacobi_spectrum, phi_value, symplectic_from_jet, ChartPoint};
use crate::error::Result;
use crate::scenes::SceneSpec;

pub const FD_GRAD_STEP: f64 = 1e-5;
pub const FD_HESS_STEP: f64 = 1e-4;
/// Samples with `|s_eps|` below this (for any checked `eps`) are redrawn.
pub const SAMPLE_DIVISOR_FLOOR: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub samples: usize,
    pub eps: Vec<f64>,
    /// Max over samples of `|g_ad - g_fd| / max(|g_ad|, 1)`.
    pub grad_rel: f64,
    pub hess_rel: f64,
    /// Max over samples of `|omega_a - omega_b| / max(|omega_a|, 1)`.
    pub omega_eps: f64,
    /// Max over samples of `|i_Z omega - lambda| / max(|lambda|, 1)`.
    pub liouville: f64,
    /// Smallest eigenvalue of `g = omega(., J .)` seen.
    pub min_metric_eig: f64,
}

/// Random chart points inside the seeding domain, away from every `{s_eps = 0}`
/// for `eps` in `eps_list`.
pub fn kernel_samples(scene: &SceneSpec, count: usize, seed: u64, eps_list: &[f64]) -> Vec<ChartPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = if scene.is_projective() { 1.0 } else { scene.box_radius };
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count && tries < 100 * count {
        tries += 1;
        let chart = tries % scene.n_charts();
        let p = scene.random_point(&mut rng, chart, r);
        if !scene.in_domain(&p) {
            continue;
        }
        let Ok((s0, h)) = scene.sections_at(&p) else {
            continue;
        };
        if eps_list.iter().all(|e| (s0 - h.scale(*e)).abs() > SAMPLE_DIVISOR_FLOOR) {
            out.push(p);
        }
    }
    out
}

fn rel(d: f64, scale: f64) -> f64 {
    d / scale.max(1.0)
}

pub fn kernel_report(scene: &SceneSpec, samples: &[ChartPoint], eps_list: &[f64]) -> Result<KernelReport> {
    let mut rep = KernelReport {
        samples: samples.len(),
        eps: eps_list.to_vec(),
        grad_rel: 0.0,
        hess_rel: 0.0,
        omega_eps: 0.0,
        liouville: 0.0,
        min_metric_eig: f64::INFINITY,
    };
    let j = j_matrix(scene.real_dim());
    for p in samples {
        let mut first: Option<DMatrix<f64>> = None;
        for &eps in eps_list {
            let jet = eval_jet2(scene, p, eps)?;
            let f = |x: &[f64]| phi_value(scene, &ChartPoint::new(p.chart, x.to_vec()), eps);
            let g = super::fd::gradient(f, &p.coords, FD_GRAD_STEP)?;
            let h = super::fd::hessian(f, &p.coords, FD_HESS_STEP)?;
            rep.grad_rel = rep.grad_rel.max(rel((&g - &jet.grad).norm(), jet.grad.norm()));
            rep.hess_rel = rep.hess_rel.max(rel((&h - &jet.hess).norm(), jet.hess.norm()));
            let s = symplectic_from_jet(scene, p, &jet)?;
            rep.liouville = rep.liouville.max(rel(s.liouville_residual(), s.lambda.norm()));
            let g_mat = &s.omega * &j;
            let sym = (&g_mat + g_mat.transpose()) * 0.5;
            let spec = jacobi_spectrum(&sym)?;
            rep.min_metric_eig = rep.min_metric_eig.min(spec.values[0]);
            match &first {
                None => first = Some(s.omega),
                Some(o) => rep.omega_eps = rep.omega_eps.max(rel((&s.omega - o).norm(), o.norm())),
            }
        }
    }
    Ok(rep)
}
