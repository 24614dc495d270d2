//! Continuation of critical points down an eps-ladder, and the checks run on
//! the resulting tracks: index shift, eigenvalue rates, value asymptotics,
//! escape distances, and the tangency statements on the stratum.

use serde::Serialize;

use crate::critfinder::{
    find_critical_points, find_stratum_critical_points, newton, CritField, CritRecord, PhiField,
    RestrictedField, SeedPlan, GRAD_ACCEPT,
};
use crate::error::{LabError, Result};
use crate::jetcalc::{eval_jet2, symplectic_sample, ChartPoint};
use crate::scenes::{b_distance, d0_minus_tube_distance, SceneSpec, StratumPoint};

pub const DEFAULT_LADDER: [f64; 7] = [1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3];
/// Smallest admissible ladder rung.
pub const MIN_EPS: f64 = 1e-6;
/// Track-to-stratum-critical-point pairing radius.
pub const MATCH_RADIUS: f64 = 1e-2;
/// Allowed deviation of a diverging eigenvalue's log-log slope from -1.
pub const SLOPE_TOL: f64 = 0.05;
/// Relative change allowed per decade for converging eigenvalues, and
/// distance allowed from the stratum Hessian spectrum.
pub const CAUCHY_TOL: f64 = 1e-3;
/// Tolerance on the limit of `phi_eps + 2 log eps`.
pub const VALUE_TOL: f64 = 1e-3;
/// Radius of the tube around `S` excluded from `D_0` in escape distances.
pub const ESCAPE_TUBE: f64 = 0.1;
/// Floor of the escape threshold.
pub const ESCAPE_FLOOR: f64 = 1e-3;
/// Stratum tangency thresholds: hypothesis, tangency, criticality.
pub const HYPOTHESIS_TOL: f64 = 1e-10;
pub const TANGENCY_TOL: f64 = 1e-8;
pub const CRIT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitClass {
    ToCritPhi0,
    ToStratum,
    ToBoundaryUnresolved,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeFit {
    /// Position in the ascending spectrum.
    pub position: usize,
    pub slope: f64,
    pub intercept: f64,
    pub rms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StratumMatch {
    /// Full-space location.
    pub point: ChartPoint,
    /// Intrinsic location on the stratum.
    pub intrinsic: ChartPoint,
    pub index: usize,
    pub spectrum: Vec<f64>,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Track {
    pub records: Vec<CritRecord>,
    pub limit_class: LimitClass,
    pub limit_point: ChartPoint,
    pub matched_stratum_crit: Option<StratumMatch>,
    pub slope_fit: Vec<SlopeFit>,
    /// Set when this track was split off another because of a jump.
    pub split_from: Option<usize>,
    /// Rung at which warm-started Newton failed, if any.
    pub lost_at: Option<f64>,
}

impl Track {
    pub fn eps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eps).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderRun {
    pub ladder: Vec<f64>,
    pub tracks: Vec<Track>,
    /// Critical points of the restriction to `S`, found independently at the
    /// bottom rung (intrinsic coordinates).
    pub stratum_crits: Vec<CritRecord>,
}

/// Validates a ladder: strictly descending, positive, bounded below by [`MIN_EPS`].
pub fn check_ladder(ladder: &[f64]) -> Result<()> {
    for w in ladder.windows(2) {
        if !(w[1] < w[0]) {
            return Err(LabError::Config("eps_ladder must be strictly descending".into()));
        }
    }
    if let Some(last) = ladder.last() {
        if !(*last >= MIN_EPS) || !ladder[0].is_finite() {
            return Err(LabError::Config(format!("eps_ladder entries must lie in [{MIN_EPS}, inf)")));
        }
    }
    Ok(())
}

/// Least-squares slope of `log|y|` against `log x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, icpt, rms)
}

fn fit_track(records: &[CritRecord]) -> Vec<SlopeFit> {
    if records.len() < 2 {
        return vec![];
    }
    let eps: Vec<f64> = records.iter().map(|r| r.eps).collect();
    let dim = records[0].spectrum.len();
    (0..dim)
        .map(|k| {
            let ys: Vec<f64> = records.iter().map(|r| r.spectrum[k]).collect();
            let (slope, intercept, rms) = loglog_fit(&eps, &ys);
            SlopeFit {
                position: k,
                slope,
                intercept,
                rms,
            }
        })
        .collect()
}

fn classify_limit(scene: &SceneSpec, p: &ChartPoint) -> LimitClass {
    let d0 = scene.crit_phi0_distance(p);
    let ds = scene.stratum_distance(p);
    if d0.min(ds) > 0.1 {
        LimitClass::ToBoundaryUnresolved
    } else if ds <= d0 {
        LimitClass::ToStratum
    } else {
        LimitClass::ToCritPhi0
    }
}

fn match_stratum(scene: &SceneSpec, p: &ChartPoint, crits: &[CritRecord], eps: f64) -> Option<StratumMatch> {
    let rf = RestrictedField { scene, eps };
    let mut best: Option<StratumMatch> = None;
    for c in crits {
        let full = rf.to_full(&c.point);
        let d = scene.distance(&full, p);
        if d < MATCH_RADIUS && best.as_ref().is_none_or(|b| d < b.distance) {
            best = Some(StratumMatch {
                point: full,
                intrinsic: c.point.clone(),
                index: c.index,
                spectrum: c.spectrum.clone(),
                distance: d,
            });
        }
    }
    best
}

/// Finds critical points at the top rung and continues each down the ladder
/// by warm-started Newton.
pub fn run_ladder(scene: &SceneSpec, ladder: &[f64], plan: &SeedPlan) -> Result<LadderRun> {
    check_ladder(ladder)?;
    if ladder.is_empty() {
        return Ok(LadderRun {
            ladder: vec![],
            tracks: vec![],
            stratum_crits: vec![],
        });
    }
    let (top, _) = find_critical_points(scene, ladder[0], plan)?;
    let bottom = *ladder.last().unwrap();
    let (stratum_crits, _) = find_stratum_critical_points(scene, bottom, plan)?;

    let mut raw: Vec<(Vec<CritRecord>, Option<usize>, Option<f64>)> = Vec::new();
    for rec in top {
        let mut current = vec![rec];
        let mut split_from = None;
        let mut lost = None;
        for w in ladder.windows(2) {
            let (e_prev, e) = (w[0], w[1]);
            let prev = current.last().unwrap().clone();
            let field = PhiField { scene, eps: e };
            let next = newton(&field, &prev.point, 60).ok().and_then(|(p, jet)| {
                (jet.grad.norm() < GRAD_ACCEPT).then(|| {
                    let c = field.canonical(&p);
                    let jet = if c.chart != p.chart { field.jet(&c).ok() } else { Some(jet) };
                    jet.map(|j| (c, j))
                })?
            });
            let Some((p, jet)) = next else {
                lost = Some(e);
                break;
            };
            let r = crate::critfinder::classify(&p, e, &jet, field.tag(&p))?;
            let bound = 10.0 * (e_prev - e).sqrt();
            if scene.distance(&prev.point, &p) > bound {
                raw.push((std::mem::take(&mut current), split_from, None));
                split_from = Some(raw.len() - 1);
            }
            current.push(r);
        }
        raw.push((current, split_from, lost));
    }

    let mut tracks: Vec<Track> = raw
        .into_iter()
        .map(|(records, split_from, lost_at)| {
            let last = records.last().unwrap().point.clone();
            let mut limit_class = if lost_at.is_some() {
                LimitClass::ToBoundaryUnresolved
            } else {
                classify_limit(scene, &last)
            };
            let matched = if limit_class == LimitClass::ToStratum {
                match_stratum(scene, &last, &stratum_crits, bottom)
            } else {
                None
            };
            if limit_class == LimitClass::ToStratum && records.last().unwrap().morse_bott {
                limit_class = LimitClass::ToBoundaryUnresolved;
            }
            Track {
                slope_fit: fit_track(&records),
                limit_point: matched.as_ref().map(|m| m.point.clone()).unwrap_or(last),
                matched_stratum_crit: matched,
                records,
                limit_class,
                split_from,
                lost_at,
            }
        })
        .collect();
    tracks.sort_by(|a, b| {
        let (p, q) = (&a.records[0].point, &b.records[0].point);
        p.chart.cmp(&q.chart).then_with(|| {
            p.coords
                .iter()
                .zip(&q.coords)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    Ok(LadderRun {
        ladder: ladder.to_vec(),
        tracks,
        stratum_crits,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
    NotImplied,
}

impl CheckStatus {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        }
    }

    /// Passing or vacuous.
    pub fn ok(self) -> bool {
        !matches!(self, CheckStatus::Fail)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IndexShiftReport {
    pub status: CheckStatus,
    pub stratum_index: Option<usize>,
    pub expected: Option<usize>,
    pub observed: Vec<usize>,
    /// Largest rung of the terminal stretch on which the index equals the
    /// expected value.
    pub threshold_eps: Option<f64>,
}

/// Checks `index(p_eps) = index_S(p) + 2` on the terminal stretch of the ladder.
pub fn verify_index_shift(track: &Track) -> Result<IndexShiftReport> {
    let observed: Vec<usize> = track.records.iter().map(|r| r.index).collect();
    if track.limit_class != LimitClass::ToStratum {
        return Ok(IndexShiftReport {
            status: CheckStatus::NotApplicable,
            stratum_index: None,
            expected: None,
            observed,
            threshold_eps: None,
        });
    }
    let m = track
        .matched_stratum_crit
        .as_ref()
        .ok_or(LabError::NoMatch(MATCH_RADIUS))?;
    let expected = m.index + 2;
    let mut threshold = None;
    for r in track.records.iter().rev() {
        if r.index != expected {
            break;
        }
        threshold = Some(r.eps);
    }
    Ok(IndexShiftReport {
        status: CheckStatus::from_bool(threshold.is_some()),
        stratum_index: Some(m.index),
        expected: Some(expected),
        observed,
        threshold_eps: threshold,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergenceReport {
    pub status: CheckStatus,
    /// Slopes of the eigenvalues classified as diverging (|slope| > 0.5).
    pub diverging_slopes: Vec<f64>,
    /// Number of eigenvalues with `|slope + 1| < SLOPE_TOL`.
    pub within_tolerance: usize,
    pub worst_slope_error: f64,
    /// Largest per-decade relative change of the converging eigenvalues.
    pub cauchy_change: f64,
    /// Largest distance between converging eigenvalues and the stratum spectrum.
    pub stratum_spectrum_error: f64,
}

/// Checks that exactly 4 eigenvalues diverge like `1/eps` and the rest
/// converge to the stratum Hessian spectrum.
pub fn verify_divergence(track: &Track) -> DivergenceReport {
    let mut rep = DivergenceReport {
        status: CheckStatus::NotApplicable,
        diverging_slopes: vec![],
        within_tolerance: 0,
        worst_slope_error: 0.0,
        cauchy_change: 0.0,
        stratum_spectrum_error: 0.0,
    };
    if track.limit_class != LimitClass::ToStratum || track.records.len() < 2 {
        return rep;
    }
    let mut converging = Vec::new();
    for f in &track.slope_fit {
        if (f.slope + 1.0).abs() < SLOPE_TOL {
            rep.within_tolerance += 1;
        }
        if f.slope.abs() > 0.5 {
            rep.diverging_slopes.push(f.slope);
            rep.worst_slope_error = rep.worst_slope_error.max((f.slope + 1.0).abs());
        } else {
            converging.push(f.position);
        }
    }
    // per-decade relative change over the bottom of the ladder
    let recs = &track.records;
    let last = recs.last().unwrap();
    let decade = recs
        .iter()
        .rev()
        .find(|r| r.eps >= 10.0 * last.eps * (1.0 - 1e-12))
        .unwrap_or(&recs[0]);
    let decades = (decade.eps / last.eps).log10().max(1e-12);
    for &k in &converging {
        let a = decade.spectrum[k];
        let b = last.spectrum[k];
        let scale = a.abs().max(b.abs()).max(1e-300);
        rep.cauchy_change = rep.cauchy_change.max((a - b).abs() / scale / decades);
    }
    if let Some(m) = &track.matched_stratum_crit {
        let mut mine: Vec<f64> = converging.iter().map(|&k| last.spectrum[k]).collect();
        mine.sort_by(f64::total_cmp);
        if mine.len() == m.spectrum.len() {
            for (a, b) in mine.iter().zip(&m.spectrum) {
                rep.stratum_spectrum_error = rep.stratum_spectrum_error.max((a - b).abs());
            }
        } else {
            rep.stratum_spectrum_error = f64::INFINITY;
        }
    }
    let ok = rep.within_tolerance == 4
        && rep.diverging_slopes.len() == 4
        && rep.cauchy_change < CAUCHY_TOL
        && rep.stratum_spectrum_error < CAUCHY_TOL;
    rep.status = CheckStatus::from_bool(ok);
    rep
}

#[derive(Clone, Debug, Serialize)]
pub struct ValueReport {
    pub status: CheckStatus,
    /// `phi_eps(p_eps) + 2 log eps` per rung.
    pub shifted: Vec<f64>,
    /// Extrapolated limit at `eps = 0`.
    pub limit: f64,
    /// `-log||h||^2` at the matched stratum point.
    pub reference: f64,
    pub deviation: f64,
}

/// Fits the limit of `phi_eps(p_eps) + 2 log eps` (linear in `eps` over the
/// three smallest rungs) and compares it with `-log||h(p)||^2`.
pub fn value_asymptotics(scene: &SceneSpec, track: &Track) -> Result<ValueReport> {
    let shifted: Vec<f64> = track.records.iter().map(|r| r.value + 2.0 * r.eps.ln()).collect();
    let nan = ValueReport {
        status: CheckStatus::NotApplicable,
        shifted: shifted.clone(),
        limit: f64::NAN,
        reference: f64::NAN,
        deviation: f64::NAN,
    };
    if track.limit_class != LimitClass::ToStratum {
        return Ok(nan);
    }
    let Some(m) = &track.matched_stratum_crit else {
        return Ok(nan);
    };
    let k = shifted.len().min(3);
    let xs: Vec<f64> = track.records[shifted.len() - k..].iter().map(|r| r.eps).collect();
    let ys = &shifted[shifted.len() - k..];
    let limit = if k >= 2 {
        let n = k as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        my - if sxx > 0.0 { sxy / sxx } else { 0.0 } * mx
    } else {
        ys[0]
    };
    let reference = scene.g_potential(m.point.chart, &m.point.complex())?;
    let deviation = (limit - reference).abs();
    Ok(ValueReport {
        status: CheckStatus::from_bool(deviation < VALUE_TOL),
        shifted,
        limit,
        reference,
        deviation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeRow {
    pub track: usize,
    pub min_b_distance: f64,
    pub min_d0_distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeReport {
    pub status: CheckStatus,
    pub threshold: f64,
    pub rows: Vec<EscapeRow>,
    pub min_b_distance: f64,
    pub min_d0_distance: f64,
}

/// Distances of every stratum track from `B` and from `D_0` outside a tube
/// around `S`, compared with `max(10 * largest rung step, ESCAPE_FLOOR)`.
pub fn escape_evidence(scene: &SceneSpec, tracks: &[Track]) -> EscapeReport {
    let mut step: f64 = 0.0;
    let mut rows = Vec::new();
    for (i, t) in tracks.iter().enumerate() {
        for w in t.records.windows(2) {
            step = step.max(scene.distance(&w[0].point, &w[1].point));
        }
        if t.limit_class != LimitClass::ToStratum {
            continue;
        }
        let mut row = EscapeRow {
            track: i,
            min_b_distance: f64::INFINITY,
            min_d0_distance: f64::INFINITY,
        };
        for r in &t.records {
            row.min_b_distance = row.min_b_distance.min(b_distance(scene, &r.point));
            row.min_d0_distance = row
                .min_d0_distance
                .min(d0_minus_tube_distance(scene, &r.point, ESCAPE_TUBE));
        }
        rows.push(row);
    }
    let threshold = (10.0 * step).max(ESCAPE_FLOOR);
    let min_b = rows.iter().map(|r| r.min_b_distance).fold(f64::INFINITY, f64::min);
    let min_d0 = rows.iter().map(|r| r.min_d0_distance).fold(f64::INFINITY, f64::min);
    EscapeReport {
        status: CheckStatus::from_bool(min_b > threshold && min_d0 > threshold),
        threshold,
        rows,
        min_b_distance: min_b,
        min_d0_distance: min_d0,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BijectionReport {
    pub status: CheckStatus,
    pub stratum_tracks: usize,
    pub stratum_crits: usize,
    pub matched_one_to_one: bool,
}

/// Stratum tracks versus independently computed critical points of the
/// restriction: equal counts and a 1-1 matching.
pub fn bijection_check(run: &LadderRun) -> BijectionReport {
    let st: Vec<&Track> = run
        .tracks
        .iter()
        .filter(|t| t.limit_class == LimitClass::ToStratum)
        .collect();
    let mut used = vec![false; run.stratum_crits.len()];
    let mut one_to_one = true;
    for t in &st {
        let Some(m) = &t.matched_stratum_crit else {
            one_to_one = false;
            continue;
        };
        match run.stratum_crits.iter().position(|c| c.point == m.intrinsic) {
            Some(k) if !used[k] => used[k] = true,
            _ => one_to_one = false,
        }
    }
    let ok = one_to_one && st.len() == run.stratum_crits.len();
    BijectionReport {
        status: CheckStatus::from_bool(ok),
        stratum_tracks: st.len(),
        stratum_crits: run.stratum_crits.len(),
        matched_one_to_one: one_to_one,
    }
}

/// Largest rung from which every smaller rung yields `expected`
/// nondegenerate critical points in an independent search.
pub fn count_threshold(scene: &SceneSpec, ladder: &[f64], plan: &SeedPlan, expected: usize) -> Result<Option<f64>> {
    let mut threshold = None;
    for &e in ladder.iter().rev() {
        let (recs, _) = find_critical_points(scene, e, plan)?;
        let count = recs.iter().filter(|r| !r.morse_bott).count();
        if count != expected {
            break;
        }
        threshold = Some(e);
    }
    Ok(threshold)
}

#[derive(Clone, Debug, Serialize)]
pub struct Prop36Row {
    pub hypothesis: f64,
    pub tangency: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Prop36Report {
    /// `max |dg(e)|` over samples and normal vectors.
    pub hypothesis_residual: f64,
    pub hypothesis: CheckStatus,
    /// Largest Euclidean component of `Z_eps` normal to `S`.
    pub tangency_residual: f64,
    pub tangency: CheckStatus,
    /// Largest `|dphi_eps|` at the critical points of the restriction.
    pub crit_residual: f64,
    pub crit: CheckStatus,
    pub rows: Vec<Prop36Row>,
}

/// Hypothesis `dg|_E = 0` and its consequences: `Z_eps` tangent to `S-bar`
/// and `Crit(S-bar)` critical for `phi_eps`. The consequences are reported
/// as `NotImplied` when the hypothesis fails.
pub fn prop36_checks(
    scene: &SceneSpec,
    eps: f64,
    samples: &[StratumPoint],
    stratum_crits: &[ChartPoint],
) -> Result<Prop36Report> {
    let mut rows = Vec::new();
    for sp in samples {
        let gj = scene.g_jet(&sp.point)?;
        let hyp = sp
            .normal_basis
            .iter()
            .map(|e| gj.grad.dot(e).abs())
            .fold(0.0, f64::max);
        let s = symplectic_sample(scene, &sp.point, eps)?;
        let tangency = if sp.tangent_basis.is_empty() {
            s.liouville.norm()
        } else {
            let t = nalgebra::DMatrix::from_columns(&sp.tangent_basis);
            let coef = (t.transpose() * &t)
                .lu()
                .solve(&(t.transpose() * &s.liouville))
                .ok_or_else(|| LabError::Degenerate(0.0))?;
            (&s.liouville - t * coef).norm()
        };
        rows.push(Prop36Row {
            hypothesis: hyp,
            tangency,
        });
    }
    let mut crit_residual: f64 = 0.0;
    for p in stratum_crits {
        crit_residual = crit_residual.max(eval_jet2(scene, p, eps)?.grad.norm());
    }
    let hypothesis_residual = rows.iter().map(|r| r.hypothesis).fold(0.0, f64::max);
    let tangency_residual = rows.iter().map(|r| r.tangency).fold(0.0, f64::max);
    let hyp_ok = hypothesis_residual < HYPOTHESIS_TOL;
    let gate = |ok: bool| {
        if !hyp_ok {
            CheckStatus::NotImplied
        } else {
            CheckStatus::from_bool(ok)
        }
    };
    Ok(Prop36Report {
        hypothesis_residual,
        hypothesis: CheckStatus::from_bool(hyp_ok),
        tangency_residual,
        tangency: gate(tangency_residual < TANGENCY_TOL),
        crit_residual,
        crit: gate(crit_residual < CRIT_TOL),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_recovers_power_law() {
        let x = [0.1, 0.05, 0.01];
        let y: Vec<f64> = x.iter().map(|v| 3.0 / v).collect();
        let (s, _, rms) = loglog_fit(&x, &y);
        assert!((s + 1.0).abs() < 1e-12 && rms < 1e-12);
    }

    #[test]
    fn ladder_validation() {
        assert!(check_ladder(&[]).is_ok());
        assert!(check_ladder(&DEFAULT_LADDER).is_ok());
        assert!(check_ladder(&[0.1, 0.2]).is_err());
        assert!(check_ladder(&[0.1, 1e-7]).is_err());
    }
}
