//! Per-second nested-model F tests and confidence bands for home advantage.
//!
//! Each second is tested on its own with no multiplicity correction; the
//! resulting P-value curve is exploratory. Degrees of freedom come from the
//! effective ranks reported by the fits, so pinned parameters do not count.

mod dist;

pub use dist::{beta_reg, f_cdf, f_cdf_sf, f_sf, ln_beta, ln_gamma, t_cdf, t_quantile};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::CurveSeries;
use crate::design::ModelKind;
use crate::solver::RatingSet;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid degrees of freedom {0}")]
    InvalidDegreesOfFreedom(f64),
    #[error("invalid argument {0}")]
    InvalidArgument(f64),
    #[error("{reduced:?} is not nested in {full:?}")]
    NotNested { reduced: ModelKind, full: ModelKind },
    #[error("fits differ: {0}")]
    Mismatch(&'static str),
    #[error("full model leaves no residual degrees of freedom")]
    NoResidualDof,
    #[error("{0:?} fit has no home-advantage curve")]
    NoAlpha(ModelKind),
    #[error("a team must be named for per-team home advantage")]
    TeamRequired,
    #[error("unknown team `{0}`")]
    UnknownTeam(String),
    #[error("home advantage of `{0}` is unidentified (team hosts no games)")]
    Unidentified(String),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
}

/// SSE values at or below this fraction of `‖d(t)‖²` count as zero.
const ZERO_SSE_REL: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_curve: CurveSeries,
    pub p_curve: CurveSeries,
    pub df_num: usize,
    pub df_den: usize,
    /// Seconds where the full model fits exactly and the ratio is undefined.
    pub degenerate: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaSummary {
    pub df_num: usize,
    pub df_den: usize,
    pub threshold: f64,
    pub frac_below_threshold: f64,
    pub min_p: f64,
    pub argmin_p: usize,
    /// First second with P below the threshold.
    pub first_below_s: Option<usize>,
    /// Last second at which P moves across the threshold.
    pub last_crossing_s: Option<usize>,
    pub degenerate_seconds: usize,
}

impl AnovaResult {
    pub fn summary(&self, threshold: f64) -> AnovaSummary {
        let p = &self.p_curve.values;
        let below: Vec<bool> = p.iter().map(|&v| v < threshold).collect();
        let (argmin_p, min_p) = p
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, f64::NAN));
        AnovaSummary {
            df_num: self.df_num,
            df_den: self.df_den,
            threshold,
            frac_below_threshold: below.iter().filter(|&&b| b).count() as f64 / p.len() as f64,
            min_p,
            argmin_p,
            first_below_s: below.iter().position(|&b| b),
            last_crossing_s: (1..below.len()).rev().find(|&t| below[t] != below[t - 1]),
            degenerate_seconds: self.degenerate.iter().filter(|&&d| d).count(),
        }
    }

    /// Fraction of seconds in `from..` with P below `threshold`.
    pub fn frac_below_from(&self, threshold: f64, from: usize) -> f64 {
        let tail = &self.p_curve.values[from.min(self.p_curve.len())..];
        tail.iter().filter(|&&p| p < threshold).count() as f64 / tail.len().max(1) as f64
    }
}

/// Compares a reduced fit against a full fit at every second.
///
/// `F(t) = [(SSE_r − SSE_f)/df_num] / [SSE_f/df_den]` and
/// `P(t) = P(F(df_num, df_den) > F(t))`. Where the full model fits exactly,
/// F is `+∞` with P = 0, or F = 0 with P = 1 if the reduced model is exact
/// too (typically t = 0, when every game is 0-0).
pub fn anova_nested(reduced: &RatingSet, full: &RatingSet) -> Result<AnovaResult, InferenceError> {
    if reduced.kind() > full.kind() {
        return Err(InferenceError::NotNested {
            reduced: reduced.kind(),
            full: full.kind(),
        });
    }
    if reduced.grid_len != full.grid_len {
        return Err(InferenceError::Mismatch("grid length"));
    }
    if reduced.game_ids != full.game_ids {
        return Err(InferenceError::Mismatch("game set"));
    }
    if reduced.spec.teams != full.spec.teams {
        return Err(InferenceError::Mismatch("team index"));
    }
    let df_den = full.dof_resid;
    if df_den == 0 {
        return Err(InferenceError::NoResidualDof);
    }
    let df_num = full.rank.saturating_sub(reduced.rank);
    let len = full.grid_len;
    let mut f = Vec::with_capacity(len);
    let mut p = Vec::with_capacity(len);
    let mut degenerate = Vec::with_capacity(len);
    for t in 0..len {
        let tol = ZERO_SSE_REL * full.tss[t];
        let sse_f = full.sse[t];
        let gain = (reduced.sse[t] - sse_f).max(0.0);
        let (fv, pv, degen) = if df_num == 0 {
            (0.0, 1.0, false)
        } else if sse_f <= tol {
            if gain <= tol {
                (0.0, 1.0, true)
            } else {
                (f64::INFINITY, 0.0, true)
            }
        } else {
            let fv = (gain / df_num as f64) / (sse_f / df_den as f64);
            (fv, f_sf(fv, df_num as u32, df_den as u32)?, false)
        };
        f.push(fv);
        p.push(pv);
        degenerate.push(degen);
    }
    let label = format!(
        "model{}-vs-model{}",
        reduced.kind().number(),
        full.kind().number()
    );
    Ok(AnovaResult {
        f_curve: CurveSeries::new(format!("F:{label}"), f, "F"),
        p_curve: CurveSeries::new(format!("P:{label}"), p, "probability"),
        df_num,
        df_den,
        degenerate,
    })
}

/// Pointwise Wald band `α̂(t) ± t_{(1+level)/2, df} · se(t)` for a
/// home-advantage curve.
///
/// `se(t)² = SSE(t)/df · v`, where `v` is the advantage parameter's diagonal
/// entry of the constrained inverse Gram matrix. The band is pointwise, not
/// simultaneous over the game. `team` selects the curve for per-team fits.
pub fn alpha_confidence_band(
    fit: &RatingSet,
    level: f64,
    team: Option<&str>,
) -> Result<(CurveSeries, CurveSeries), InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::InvalidLevel(level));
    }
    let n = fit.n_teams();
    let (param, slot, label) = match fit.kind() {
        ModelKind::Basic => return Err(InferenceError::NoAlpha(ModelKind::Basic)),
        ModelKind::ConstantHca => (n, 0, "alpha".to_string()),
        ModelKind::IndividualHca => {
            let team = team.ok_or(InferenceError::TeamRequired)?;
            let i = fit
                .spec
                .teams
                .get(team)
                .ok_or_else(|| InferenceError::UnknownTeam(team.to_string()))?;
            (n + i, i, format!("alpha:{team}"))
        }
    };
    let v = fit.alpha_variance[slot].ok_or_else(|| InferenceError::Unidentified(label.clone()))?;
    let df = fit.dof_resid;
    if df == 0 {
        return Err(InferenceError::NoResidualDof);
    }
    let crit = t_quantile(0.5 * (1.0 + level), df as u32)?;
    let alpha = &fit.params[param];
    let half: Vec<f64> = fit
        .sse
        .iter()
        .map(|&sse| crit * (sse / df as f64 * v).sqrt())
        .collect();
    let pct = (level * 100.0).round();
    let lower = alpha.iter().zip(&half).map(|(a, h)| a - h).collect();
    let upper = alpha.iter().zip(&half).map(|(a, h)| a + h).collect();
    Ok((
        CurveSeries::new(format!("{label}:lower{pct}"), lower, "points"),
        CurveSeries::new(format!("{label}:upper{pct}"), upper, "points"),
    ))
}
