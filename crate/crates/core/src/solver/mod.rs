//! Pointwise constrained least squares over the per-second grid.
//!
//! The design `X` does not change with time, so it is factored once and the
//! factorization is reused for all `T + 1` right-hand sides.
//!
//! The sum-to-zero constraint is imposed by reparametrization: team ratings
//! are written as `β = H γ`, where the columns of `H` are an orthonormal
//! (Helmert) basis of the subspace `Σ βᵢ = 0`. Home-advantage columns that
//! never appear in a game are pinned to zero and dropped. The reduced design
//! `Z = X A` is factored with a column-pivoted QR; any rank loss beyond the
//! constraint (a disconnected schedule, partially identified per-team
//! advantages) is absorbed by a complete orthogonal decomposition, so the
//! result is always the minimum-norm least-squares solution. Because `A` has
//! orthonormal columns this coincides with `X⁺ d(t)`.
//!
//! Per-second solves use corrected semi-normal equations: form `Zᵀd` from
//! the sparse design, do two triangular solves, then one refinement step
//! against the true residual.

mod qr;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{check_connectivity, DesignMatrix, ModelKind, ModelSpec};
use crate::ingest::DifferentialTrack;
use qr::PivotedQr;

pub const DEFAULT_BLOCK_COLS: usize = 256;
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("team graph is disconnected ({} components); ratings are not comparable across components", components.len())]
    Disconnected { components: Vec<Vec<String>> },
    #[error("dimension mismatch: {what} expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unknown team `{0}`")]
    UnknownTeam(String),
    #[error("no tracks to stack")]
    NoTracks,
}

fn mismatch(what: &'static str, expected: usize, found: usize) -> SolverError {
    SolverError::DimensionMismatch {
        what,
        expected,
        found,
    }
}

/// How the one-dimensional null space of `X` is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// Team ratings sum to zero at every second.
    SumZero,
    /// One team's rating is held at `value`; all others shift with it.
    PinTeam { team: String, value: f64 },
    /// Ratings are shifted by the mean per-team score, so they read as an
    /// expected score rather than a margin.
    PinAverageScore { mean_score: Vec<f64> },
}

impl Constraint {
    pub fn label(&self) -> String {
        match self {
            Constraint::SumZero => "sum-zero".into(),
            Constraint::PinTeam { team, value } => format!("pin-team:{team}={value}"),
            Constraint::PinAverageScore { .. } => "pin-average-score".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub constraint: Constraint,
    /// Fit a disconnected schedule anyway; each component then sums to zero
    /// on its own.
    pub allow_disconnected: bool,
    /// Time columns per solve block.
    pub block_cols: usize,
    /// Worker threads for the block solves; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub rank_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            constraint: Constraint::SumZero,
            allow_disconnected: false,
            block_cols: DEFAULT_BLOCK_COLS,
            threads: None,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// Timing counters for one fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub factorizations: usize,
    pub factor_secs: f64,
    pub solve_secs: f64,
    pub columns: usize,
}

/// Fitted functional ratings on the per-second grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSet {
    pub spec: ModelSpec,
    pub constraint: Constraint,
    pub game_ids: Vec<String>,
    pub grid_len: usize,
    /// One curve per parameter: teams first, then home-advantage curves.
    pub params: Vec<Vec<f64>>,
    /// `‖Xθ(t) − d(t)‖²`.
    pub sse: Vec<f64>,
    /// `‖d(t)‖²`, the scale against which a zero SSE is judged.
    pub tss: Vec<f64>,
    pub rank: usize,
    pub dof_resid: usize,
    /// Parameters pinned to zero because their column is empty.
    pub unidentified: Vec<usize>,
    /// Diagonal of the constrained inverse Gram matrix for each
    /// home-advantage parameter; `None` where pinned.
    pub alpha_variance: Vec<Option<f64>>,
    pub stats: FitStats,
}

impl RatingSet {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn n_teams(&self) -> usize {
        self.spec.n_teams()
    }

    pub fn n_games(&self) -> usize {
        self.game_ids.len()
    }

    pub fn team_index(&self, team: &str) -> Result<usize, SolverError> {
        self.spec
            .teams
            .get(team)
            .ok_or_else(|| SolverError::UnknownTeam(team.to_string()))
    }

    pub fn beta(&self, team: usize) -> &[f64] {
        &self.params[team]
    }

    pub fn beta_of(&self, team: &str) -> Result<&[f64], SolverError> {
        Ok(self.beta(self.team_index(team)?))
    }

    /// Shared home-advantage curve (ConstantHca only).
    pub fn alpha(&self) -> Option<&[f64]> {
        (self.kind() == ModelKind::ConstantHca).then(|| self.params[self.n_teams()].as_slice())
    }

    /// Home-advantage curve that applies when `team` hosts.
    pub fn home_alpha(&self, team: usize) -> Option<&[f64]> {
        let n = self.n_teams();
        match self.kind() {
            ModelKind::Basic => None,
            ModelKind::ConstantHca => Some(&self.params[n]),
            ModelKind::IndividualHca => Some(&self.params[n + team]),
        }
    }

    /// `θ(t)` as a vector.
    pub fn theta_at(&self, t: usize) -> Vec<f64> {
        self.params.iter().map(|c| c[t]).collect()
    }

    pub fn total_sse(&self) -> f64 {
        self.sse.iter().sum()
    }
}

/// Stacks tracks into the `m × (T+1)` response matrix, rows in track order.
pub fn stack_tracks(tracks: &[DifferentialTrack]) -> Result<DMatrix<f64>, SolverError> {
    let first = tracks.first().ok_or(SolverError::NoTracks)?;
    let len = first.d.len();
    if let Some(bad) = tracks.iter().find(|t| t.d.len() != len) {
        return Err(mismatch("track length", len, bad.d.len()));
    }
    Ok(DMatrix::from_fn(tracks.len(), len, |k, t| {
        tracks[k].d[t] as f64
    }))
}

/// Reduced parametrization `θ = A γ`.
#[derive(Debug, Clone)]
struct Reparam {
    n_teams: usize,
    n_params: usize,
    /// Helmert column scales `1/√((c+1)(c+2))`.
    scale: Vec<f64>,
    /// Original α parameter index for each reduced α coordinate.
    kept_alpha: Vec<usize>,
    /// Reduced coordinate for each original α parameter.
    alpha_slot: Vec<Option<usize>>,
}

impl Reparam {
    fn new(x: &DesignMatrix) -> Reparam {
        let n = x.spec.n_teams();
        let p = x.n_cols();
        let counts = x.column_counts();
        let kept_alpha: Vec<usize> = (n..p).filter(|&c| counts[c] > 0).collect();
        let mut alpha_slot = vec![None; p - n];
        for (j, &c) in kept_alpha.iter().enumerate() {
            alpha_slot[c - n] = Some(n - 1 + j);
        }
        let scale = (0..n.saturating_sub(1))
            .map(|c| 1.0 / (((c + 1) * (c + 2)) as f64).sqrt())
            .collect();
        Reparam {
            n_teams: n,
            n_params: p,
            scale,
            kept_alpha,
            alpha_slot,
        }
    }

    fn dim(&self) -> usize {
        self.n_teams - 1 + self.kept_alpha.len()
    }

    /// `γ = Aᵀ θ`-style map applied to a parameter-space vector.
    fn tr_apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n_teams;
        let mut prefix = 0.0;
        for c in 0..n - 1 {
            prefix += x[c];
            out[c] = self.scale[c] * (prefix - (c + 1) as f64 * x[c + 1]);
        }
        for (j, &col) in self.kept_alpha.iter().enumerate() {
            out[n - 1 + j] = x[col];
        }
    }

    /// `θ = A γ`; pinned parameters come out as zero.
    fn apply(&self, g: &[f64], out: &mut [f64]) {
        let n = self.n_teams;
        let mut suffix = 0.0;
        for i in (0..n).rev() {
            if i < n - 1 {
                suffix += self.scale[i] * g[i];
            }
            out[i] = suffix;
            if i >= 1 {
                out[i] -= i as f64 * self.scale[i - 1] * g[i - 1];
            }
        }
        out[n..self.n_params].fill(0.0);
        for (j, &col) in self.kept_alpha.iter().enumerate() {
            out[col] = g[n - 1 + j];
        }
    }

    /// Dense column-major `Z = X A`.
    fn reduced_design(&self, x: &DesignMatrix) -> Vec<f64> {
        let m = x.n_rows();
        let n = self.n_teams;
        let mut z = vec![0.0; m * self.dim()];
        for e in x.entries() {
            let v = f64::from(e.value);
            if e.col < n {
                let i = e.col;
                for c in i..n - 1 {
                    z[c * m + e.row] += v * self.scale[c];
                }
                if i >= 1 {
                    z[(i - 1) * m + e.row] -= v * i as f64 * self.scale[i - 1];
                }
            } else if let Some(slot) = self.alpha_slot[e.col - n] {
                z[slot * m + e.row] += v;
            }
        }
        z
    }
}

/// Maps between the reduced coordinates and the triangular factor's basis.
#[derive(Debug, Clone)]
enum Basis {
    /// Full rank: the basis is the pivot permutation.
    Permutation(Vec<usize>),
    /// Rank deficient: `q × r` matrix with orthonormal columns.
    Dense(DMatrix<f64>),
}

/// `Z = Q T Gᵀ` with `T` triangular and `G` the basis above.
#[derive(Debug, Clone)]
struct Factorization {
    reparam: Reparam,
    basis: Basis,
    tri: DMatrix<f64>,
    /// `T` is upper triangular after plain QR, lower after the orthogonal
    /// completion.
    upper: bool,
    rank: usize,
}

impl Factorization {
    fn new(x: &DesignMatrix, rel_tol: f64) -> Factorization {
        let reparam = Reparam::new(x);
        let m = x.n_rows();
        let q = reparam.dim();
        let qr = PivotedQr::factor(reparam.reduced_design(x), m, q, rel_tol);
        let rank = qr.rank;
        if rank == q {
            return Factorization {
                reparam,
                basis: Basis::Permutation(qr.perm),
                tri: qr.r,
                upper: true,
                rank,
            };
        }
        // [R11 R12]ᵀ = W S, so Z P = Q_r Sᵀ Wᵀ.
        let decomp = qr.r.transpose().qr();
        let w = decomp.q();
        let s = decomp.r();
        let mut g = DMatrix::zeros(q, rank);
        for (j, &orig) in qr.perm.iter().enumerate() {
            g.row_mut(orig).copy_from(&w.row(j));
        }
        Factorization {
            reparam,
            basis: Basis::Dense(g),
            tri: s.transpose(),
            upper: false,
            rank,
        }
    }

    fn to_basis(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.basis {
            Basis::Permutation(perm) => {
                DMatrix::from_fn(self.rank, b.ncols(), |j, t| b[(perm[j], t)])
            }
            Basis::Dense(g) => g.tr_mul(b),
        }
    }

    fn expand_basis(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.basis {
            Basis::Permutation(perm) => {
                let mut out = DMatrix::zeros(perm.len(), c.ncols());
                for (j, &orig) in perm.iter().enumerate() {
                    out.row_mut(orig).copy_from(&c.row(j));
                }
                out
            }
            Basis::Dense(g) => g * c,
        }
    }

    /// `(ZᵀZ)⁺ b` for a block of reduced right-hand sides.
    fn gram_solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = self.to_basis(b);
        if self.upper {
            self.tri.tr_solve_upper_triangular_mut(&mut c);
            self.tri.solve_upper_triangular_mut(&mut c);
        } else {
            self.tri.tr_solve_lower_triangular_mut(&mut c);
            self.tri.solve_lower_triangular_mut(&mut c);
        }
        self.expand_basis(&c)
    }

    /// Diagonal of `(ZᵀZ)⁺` at reduced coordinate `slot`.
    fn gram_inverse_diag(&self, slot: usize) -> f64 {
        let mut e = DMatrix::zeros(self.reparam.dim(), 1);
        e[(slot, 0)] = 1.0;
        let mut c = self.to_basis(&e);
        if self.upper {
            self.tri.tr_solve_upper_triangular_mut(&mut c);
        } else {
            self.tri.tr_solve_lower_triangular_mut(&mut c);
        }
        c.norm_squared()
    }
}

struct BlockResult {
    theta: DMatrix<f64>,
    sse: Vec<f64>,
    tss: Vec<f64>,
}

/// `Aᵀ Xᵀ R` for an `m × w` block.
fn reduced_rhs(x: &DesignMatrix, fac: &Factorization, r: &DMatrix<f64>) -> DMatrix<f64> {
    let p = x.n_cols();
    let q = fac.reparam.dim();
    let mut out = DMatrix::zeros(q, r.ncols());
    let mut xt = vec![0.0; p];
    for t in 0..r.ncols() {
        xt.fill(0.0);
        let col = r.column(t);
        for e in x.entries() {
            xt[e.col] += f64::from(e.value) * col[e.row];
        }
        fac.reparam.tr_apply(&xt, out.column_mut(t).as_mut_slice());
    }
    out
}

fn to_params(fac: &Factorization, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let mut theta = DMatrix::zeros(fac.reparam.n_params, gamma.ncols());
    for t in 0..gamma.ncols() {
        fac.reparam.apply(
            gamma.column(t).as_slice(),
            theta.column_mut(t).as_mut_slice(),
        );
    }
    theta
}

/// `D − X Θ` for a block.
fn block_residual(x: &DesignMatrix, theta: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let mut r = d.clone();
    for t in 0..d.ncols() {
        let th = theta.column(t);
        let mut col = r.column_mut(t);
        for e in x.entries() {
            col[e.row] -= f64::from(e.value) * th[e.col];
        }
    }
    r
}

fn solve_block(x: &DesignMatrix, fac: &Factorization, d: DMatrix<f64>) -> BlockResult {
    let mut gamma = fac.gram_solve(&reduced_rhs(x, fac, &d));
    let r = block_residual(x, &to_params(fac, &gamma), &d);
    gamma += fac.gram_solve(&reduced_rhs(x, fac, &r));
    let theta = to_params(fac, &gamma);
    let r = block_residual(x, &theta, &d);
    let sse = r.column_iter().map(|c| c.norm_squared()).collect();
    let tss = d.column_iter().map(|c| c.norm_squared()).collect();
    BlockResult { theta, sse, tss }
}

/// Fits the model at every second.
///
/// `d` is the `m × (T+1)` stack of differential tracks with rows in the
/// design's game order.
pub fn fit(
    x: &DesignMatrix,
    d: &DMatrix<f64>,
    opts: &FitOptions,
) -> Result<RatingSet, SolverError> {
    let m = x.n_rows();
    if d.nrows() != m {
        return Err(mismatch("response rows", m, d.nrows()));
    }
    let grid_len = d.ncols();
    if grid_len == 0 {
        return Err(mismatch("grid length", 1, 0));
    }
    let connectivity = check_connectivity(x);
    if !connectivity.is_connected && !opts.allow_disconnected {
        return Err(SolverError::Disconnected {
            components: connectivity.components,
        });
    }
    let n = x.spec.n_teams();
    let p = x.n_cols();

    let started = Instant::now();
    let fac = Factorization::new(x, opts.rank_tol);
    let factor_secs = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let block = opts.block_cols.max(1);
    let starts: Vec<usize> = (0..grid_len).step_by(block).collect();
    let run = || -> Vec<BlockResult> {
        starts
            .par_iter()
            .map(|&t0| {
                let w = block.min(grid_len - t0);
                solve_block(x, &fac, d.columns(t0, w).into_owned())
            })
            .collect()
    };
    let blocks = match opts.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map(|pool| pool.install(run))
            .unwrap_or_else(|_| run()),
        None => run(),
    };
    let solve_secs = started.elapsed().as_secs_f64();

    let mut params = vec![vec![0.0; grid_len]; p];
    let mut sse = Vec::with_capacity(grid_len);
    let mut tss = Vec::with_capacity(grid_len);
    for (b, &t0) in blocks.iter().zip(&starts) {
        for (i, curve) in params.iter_mut().enumerate() {
            for (j, v) in b.theta.row(i).iter().enumerate() {
                curve[t0 + j] = *v;
            }
        }
        sse.extend_from_slice(&b.sse);
        tss.extend_from_slice(&b.tss);
    }

    match &opts.constraint {
        Constraint::SumZero => {}
        Constraint::PinTeam { team, value } => {
            let idx = x
                .spec
                .teams
                .get(team)
                .ok_or_else(|| SolverError::UnknownTeam(team.clone()))?;
            let shift: Vec<f64> = params[idx].iter().map(|b| value - b).collect();
            for curve in &mut params[..n] {
                curve.iter_mut().zip(&shift).for_each(|(b, s)| *b += s);
            }
        }
        Constraint::PinAverageScore { mean_score } => {
            if mean_score.len() != grid_len {
                return Err(mismatch("average score curve", grid_len, mean_score.len()));
            }
            for curve in &mut params[..n] {
                curve.iter_mut().zip(mean_score).for_each(|(b, s)| *b += s);
            }
        }
    }

    let unidentified = x.zero_columns();
    let alpha_variance = fac
        .reparam
        .alpha_slot
        .iter()
        .map(|slot| slot.map(|s| fac.gram_inverse_diag(s)))
        .collect();

    Ok(RatingSet {
        spec: x.spec.clone(),
        constraint: opts.constraint.clone(),
        game_ids: x.row_game().to_vec(),
        grid_len,
        params,
        sse,
        tss,
        rank: fac.rank,
        dof_resid: m - fac.rank,
        unidentified,
        alpha_variance,
        stats: FitStats {
            factorizations: 1,
            factor_secs,
            solve_secs,
            columns: grid_len,
        },
    })
}

/// Residual matrix `r[k][t] = (Xθ(t) − d(t))[k]`.
pub fn residuals(
    x: &DesignMatrix,
    ratings: &RatingSet,
    d: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SolverError> {
    if d.nrows() != x.n_rows() {
        return Err(mismatch("response rows", x.n_rows(), d.nrows()));
    }
    if d.ncols() != ratings.grid_len {
        return Err(mismatch("grid length", ratings.grid_len, d.ncols()));
    }
    if ratings.params.len() != x.n_cols() {
        return Err(mismatch(
            "parameter count",
            x.n_cols(),
            ratings.params.len(),
        ));
    }
    let mut r = -d;
    for e in x.entries() {
        let v = f64::from(e.value);
        let curve = &ratings.params[e.col];
        for (t, &th) in curve.iter().enumerate() {
            r[(e.row, t)] += v * th;
        }
    }
    Ok(r)
}

/// `Xᵀ r(t)` for one residual column, used to check the normal equations.
pub fn normal_equation_defect(x: &DesignMatrix, residual: &DVector<f64>) -> Vec<f64> {
    x.tr_mul_vec(residual.as_slice())
}
