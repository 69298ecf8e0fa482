//! Second-moment operator algebra for the estimation error and the
//! delayed-mode state feedback loop.
//!
//! A [`BlockCollection`] `S = [S_1, ..., S_I]` holds one square matrix per
//! sensing mode. For per-mode branch matrices `Γ_{n1}` (packet delivered) and
//! `Γ_{n0}` (packet lost) the operators are
//!
//! ```text
//! D_n(S) = Σ_m q_mn S_m
//! V_n(S) = γ_n Γ_n1 D_n(S) Γ_n1* + (1 - γ_n) Γ_n0 D_n(S) Γ_n0*
//! J_m(S) = Σ_n q_mn [γ_n Γ_n1* S_n Γ_n1 + (1 - γ_n) Γ_n0* S_n Γ_n0]
//! ```
//!
//! `J` is the adjoint of `V` under `<S; T> = Σ tr(S_m* T_m)`. Stacking the
//! column-major `vec` of each block turns `V` into a square matrix whose
//! spectral radius decides mean-square stability.

use std::ops::{Add, Sub};

use nalgebra::{DMatrix, DVector};

use crate::channels::{MarkovChannel, TransitionMatrix};
use crate::linalg::{self, DENSE_EIG_MAX_DIM};
use crate::model::MjlsModel;
use crate::{Error, Result};

const STEIN_ITER_TOL: f64 = 1e-12;
const STEIN_ITER_MAX: usize = 1_000_000;

/// One square `n×n` matrix per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCollection {
    blocks: Vec<DMatrix<f64>>,
}

impl BlockCollection {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::dims("block collection needs at least one block"));
        };
        let n = first.nrows();
        if blocks.iter().any(|b| b.shape() != (n, n)) {
            return Err(Error::dims("blocks must be square with a common size"));
        }
        Ok(Self { blocks })
    }

    pub fn zeros(modes: usize, n: usize) -> Self {
        Self {
            blocks: vec![DMatrix::zeros(n, n); modes],
        }
    }

    pub fn identity(modes: usize, n: usize) -> Self {
        Self {
            blocks: vec![DMatrix::identity(n, n); modes],
        }
    }

    pub fn from_fn(modes: usize, f: impl FnMut(usize) -> DMatrix<f64>) -> Result<Self> {
        Self::new((0..modes).map(f).collect())
    }

    /// Number of modes.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Size of each block.
    pub fn dim(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<DMatrix<f64>> {
        self.blocks
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.blocks.iter()
    }

    /// Stacked column-major `vec` of every block.
    pub fn vectorize(&self) -> DVector<f64> {
        let d = self.dim() * self.dim();
        let mut v = DVector::zeros(self.len() * d);
        for (m, b) in self.blocks.iter().enumerate() {
            v.rows_mut(m * d, d).copy_from_slice(b.as_slice());
        }
        v
    }

    /// Inverse of [`vectorize`](Self::vectorize).
    pub fn from_vector(v: &DVector<f64>, modes: usize, n: usize) -> Result<Self> {
        if v.len() != modes * n * n {
            return Err(Error::dims(format!(
                "vector of length {} cannot hold {modes} blocks of {n}x{n}",
                v.len()
            )));
        }
        let d = n * n;
        Self::from_fn(modes, |m| {
            DMatrix::from_column_slice(n, n, &v.as_slice()[m * d..(m + 1) * d])
        })
    }

    /// `Σ tr(S_m* T_m)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(s, t)| s.dot(t))
            .sum()
    }

    pub fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            blocks: self.blocks.iter().map(f).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|b| b * c)
    }

    pub fn transpose(&self) -> Self {
        self.map(|b| b.transpose())
    }

    pub fn hermitian_part(&self) -> Self {
        self.map(linalg::hermitian_part)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.blocks.iter().all(|b| linalg::is_hermitian(b, tol))
    }

    /// Smallest eigenvalue over all (symmetrized) blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(linalg::min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.blocks.iter().all(|b| linalg::is_psd(b, tol))
    }

    /// `Σ_m S_m`.
    pub fn sum(&self) -> DMatrix<f64> {
        self.blocks
            .iter()
            .fold(DMatrix::zeros(self.dim(), self.dim()), |acc, b| acc + b)
    }

    /// `Σ_m tr(S_m)`.
    pub fn trace_sum(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }

    /// Largest absolute entry over all blocks.
    pub fn amax(&self) -> f64 {
        self.blocks.iter().map(|b| b.amax()).fold(0.0, f64::max)
    }

    /// Largest absolute entry of the blockwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

impl Add for &BlockCollection {
    type Output = BlockCollection;

    fn add(self, rhs: Self) -> BlockCollection {
        BlockCollection {
            blocks: self
                .blocks
                .iter()
                .zip(&rhs.blocks)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &BlockCollection {
    type Output = BlockCollection;

    fn sub(self, rhs: Self) -> BlockCollection {
        BlockCollection {
            blocks: self
                .blocks
                .iter()
                .zip(&rhs.blocks)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Per-mode dynamics for a delivered packet and a lost one.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchMatrices {
    pub delivered: Vec<DMatrix<f64>>,
    pub lost: Vec<DMatrix<f64>>,
}

impl BranchMatrices {
    pub fn new(delivered: Vec<DMatrix<f64>>, lost: Vec<DMatrix<f64>>) -> Result<Self> {
        if delivered.len() != lost.len() || delivered.is_empty() {
            return Err(Error::dims(
                "branch lists must be non-empty and of equal length",
            ));
        }
        let n = delivered[0].nrows();
        if delivered.iter().chain(&lost).any(|m| m.shape() != (n, n)) {
            return Err(Error::dims(
                "branch matrices must be square with a common size",
            ));
        }
        Ok(Self { delivered, lost })
    }

    /// Error dynamics of the observer with gains `M`: `A + M_n L` when the
    /// measurement arrives, `A` otherwise.
    pub fn observer(model: &MjlsModel, gains: &[DMatrix<f64>]) -> Result<Self> {
        check_filter_gains(model, gains)?;
        Self::new(
            gains.iter().map(|m| &model.a + m * &model.l).collect(),
            vec![model.a.clone(); gains.len()],
        )
    }

    pub fn modes(&self) -> usize {
        self.delivered.len()
    }

    pub fn dim(&self) -> usize {
        self.delivered[0].nrows()
    }
}

pub(crate) fn check_filter_gains(model: &MjlsModel, gains: &[DMatrix<f64>]) -> Result<()> {
    if gains.iter().any(|m| m.shape() != (model.nx(), model.ny())) {
        return Err(Error::dims(format!(
            "filter gains must be {}x{}",
            model.nx(),
            model.ny()
        )));
    }
    Ok(())
}

pub(crate) fn check_control_gains(model: &MjlsModel, gains: &[DMatrix<f64>]) -> Result<()> {
    if gains.iter().any(|f| f.shape() != (model.nu(), model.nx())) {
        return Err(Error::dims(format!(
            "control gains must be {}x{}",
            model.nu(),
            model.nx()
        )));
    }
    Ok(())
}

fn check_operands(ch: &MarkovChannel, br: &BranchMatrices, s: &BlockCollection) -> Result<()> {
    if br.modes() != ch.modes() || s.len() != ch.modes() || s.dim() != br.dim() {
        return Err(Error::dims(format!(
            "channel has {} modes, branches {}x{}, collection {}x{}",
            ch.modes(),
            br.modes(),
            br.dim(),
            s.len(),
            s.dim()
        )));
    }
    Ok(())
}

/// `D_n(S) = Σ_m q_mn S_m`.
pub fn op_d(q: &TransitionMatrix, s: &BlockCollection, n: usize) -> Result<DMatrix<f64>> {
    if s.len() != q.modes() {
        return Err(Error::dims(format!(
            "{} blocks for {} modes",
            s.len(),
            q.modes()
        )));
    }
    if n >= q.modes() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: q.modes(),
        });
    }
    let mut out = DMatrix::zeros(s.dim(), s.dim());
    for (m, block) in s.iter().enumerate() {
        let w = q.prob(m, n);
        if w != 0.0 {
            out += block * w;
        }
    }
    Ok(out)
}

/// Forward second-moment operator `V`.
pub fn op_v(
    ch: &MarkovChannel,
    br: &BranchMatrices,
    s: &BlockCollection,
) -> Result<BlockCollection> {
    check_operands(ch, br, s)?;
    BlockCollection::from_fn(ch.modes(), |n| {
        let d = op_d(ch.tpm(), s, n).expect("checked");
        let p = ch.delivery(n);
        let (g1, g0) = (&br.delivered[n], &br.lost[n]);
        g1 * &d * g1.transpose() * p + g0 * &d * g0.transpose() * (1.0 - p)
    })
}

/// Adjoint operator `J = V*`.
pub fn op_j(
    ch: &MarkovChannel,
    br: &BranchMatrices,
    s: &BlockCollection,
) -> Result<BlockCollection> {
    check_operands(ch, br, s)?;
    let transformed: Vec<DMatrix<f64>> = (0..ch.modes())
        .map(|n| {
            let p = ch.delivery(n);
            let (g1, g0) = (&br.delivered[n], &br.lost[n]);
            g1.transpose() * &s.blocks[n] * g1 * p + g0.transpose() * &s.blocks[n] * g0 * (1.0 - p)
        })
        .collect();
    BlockCollection::from_fn(ch.modes(), |m| {
        transformed
            .iter()
            .enumerate()
            .fold(DMatrix::zeros(s.dim(), s.dim()), |acc, (n, t)| {
                acc + t * ch.tpm().prob(m, n)
            })
    })
}

/// `V` built on a second set of branch matrices (`Λ_{n1}`, `Λ_{n0}`), used to
/// compare a candidate gain `K` against a reference gain `M`.
pub fn op_vtilde(
    ch: &MarkovChannel,
    br: &BranchMatrices,
    s: &BlockCollection,
) -> Result<BlockCollection> {
    op_v(ch, br, s)
}

/// Which operator a matrix representation stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    V,
    J,
    Vtilde,
    FirstMoment,
    ControlDelay,
    ControlDelayReduced,
    Augmented,
}

/// Matrix representation of a linear operator on stacked mode blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub rep: DMatrix<f64>,
    pub kind: OperatorKind,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.rep.nrows()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.rep * v
    }
}

fn kron_self(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.kronecker(m)
}

/// Representation of `V`: `φ(V(S)) = Λ φ(S)` with block `(n, m)` equal to
/// `q_mn [γ_n Γ_n1 ⊗ Γ_n1 + (1 - γ_n) Γ_n0 ⊗ Γ_n0]`.
pub fn matrix_rep_v(ch: &MarkovChannel, br: &BranchMatrices) -> Result<OperatorMatrix> {
    Ok(OperatorMatrix {
        rep: weighted_kron_rep(ch, br, false)?,
        kind: OperatorKind::V,
    })
}

/// Representation of `J`, assembled directly from its definition.
pub fn matrix_rep_j(ch: &MarkovChannel, br: &BranchMatrices) -> Result<OperatorMatrix> {
    Ok(OperatorMatrix {
        rep: weighted_kron_rep(ch, br, true)?,
        kind: OperatorKind::J,
    })
}

fn weighted_kron_rep(
    ch: &MarkovChannel,
    br: &BranchMatrices,
    adjoint: bool,
) -> Result<DMatrix<f64>> {
    if br.modes() != ch.modes() {
        return Err(Error::dims(format!(
            "{} branch modes for {} channel modes",
            br.modes(),
            ch.modes()
        )));
    }
    let s = ch.modes();
    let d = br.dim() * br.dim();
    let mut rep = DMatrix::zeros(s * d, s * d);
    for n in 0..s {
        let p = ch.delivery(n);
        let (g1, g0) = if adjoint {
            (br.delivered[n].transpose(), br.lost[n].transpose())
        } else {
            (br.delivered[n].clone(), br.lost[n].clone())
        };
        let w = kron_self(&g1) * p + kron_self(&g0) * (1.0 - p);
        for m in 0..s {
            let q = ch.tpm().prob(m, n);
            if q == 0.0 {
                continue;
            }
            // V: row block n reads column block m. J: row block m reads n.
            let (r, c) = if adjoint { (m, n) } else { (n, m) };
            rep.view_mut((r * d, c * d), (d, d)).copy_from(&(&w * q));
        }
    }
    Ok(rep)
}

/// First-moment operator `B = (⊕ γ_n Γ_n1 + ⊕ (1 - γ_n) Γ_n0)(Q' ⊗ I)`.
pub fn matrix_rep_firstmoment(ch: &MarkovChannel, br: &BranchMatrices) -> Result<OperatorMatrix> {
    if br.modes() != ch.modes() {
        return Err(Error::dims("branch and channel mode counts differ"));
    }
    let s = ch.modes();
    let n = br.dim();
    let mut rep = DMatrix::zeros(s * n, s * n);
    for to in 0..s {
        let p = ch.delivery(to);
        let avg = &br.delivered[to] * p + &br.lost[to] * (1.0 - p);
        for from in 0..s {
            let q = ch.tpm().prob(from, to);
            if q != 0.0 {
                rep.view_mut((to * n, from * n), (n, n))
                    .copy_from(&(&avg * q));
            }
        }
    }
    Ok(OperatorMatrix {
        rep,
        kind: OperatorKind::FirstMoment,
    })
}

/// Largest eigenvalue modulus of the representation.
pub fn spectral_radius(op: &OperatorMatrix) -> Result<f64> {
    linalg::spectral_radius(&op.rep)
}

/// Per-mode noise injection `O_n = π_n α (GG* + γ_n M_n HH* M_n*)`.
pub fn noise_injection(
    model: &MjlsModel,
    ch: &MarkovChannel,
    gains: &[DMatrix<f64>],
    mode_prob: &DVector<f64>,
) -> Result<BlockCollection> {
    check_filter_gains(model, gains)?;
    if gains.len() != ch.modes() || mode_prob.len() != ch.modes() {
        return Err(Error::dims(
            "gains and mode probabilities must match the sensing modes",
        ));
    }
    let gg = model.process_cov();
    let hh = model.measurement_cov();
    BlockCollection::from_fn(ch.modes(), |n| {
        let m = &gains[n];
        (&gg + m * &hh * m.transpose() * ch.delivery(n)) * (mode_prob[n] * model.noise_scale)
    })
}

/// Solves the Stein-type equation `Y = V(Y) + O`.
///
/// Exact dense solve of `(I - Λ) φ(Y) = φ(O)` when the representation fits
/// [`DENSE_EIG_MAX_DIM`], otherwise the affine map is iterated to `1e-12`.
pub fn solve_stein(
    ch: &MarkovChannel,
    br: &BranchMatrices,
    rhs: &BlockCollection,
) -> Result<BlockCollection> {
    check_operands(ch, br, rhs)?;
    let (s, n) = (ch.modes(), br.dim());
    if s * n * n <= DENSE_EIG_MAX_DIM {
        let lambda = matrix_rep_v(ch, br)?.rep;
        let system = DMatrix::identity(s * n * n, s * n * n) - lambda;
        let sol = system
            .lu()
            .solve(&rhs.vectorize())
            .ok_or_else(|| Error::ConvergenceFailure("Stein system is singular".into()))?;
        return Ok(BlockCollection::from_vector(&sol, s, n)?.hermitian_part());
    }
    let mut y = rhs.clone();
    for _ in 0..STEIN_ITER_MAX {
        let next = &op_v(ch, br, &y)? + rhs;
        let change = next.max_abs_diff(&y);
        y = next.hermitian_part();
        if change <= STEIN_ITER_TOL * y.amax().max(1.0) {
            return Ok(y);
        }
        if !y.amax().is_finite() {
            break;
        }
    }
    Err(Error::ConvergenceFailure(
        "Stein fixed-point iteration did not settle".into(),
    ))
}

/// Error moments at step `k`, indexed by the sensing mode at `k - 1`:
/// `first[n] = E[e_k 1{η_{k-1}=n}]`, `second[n] = E[e_k e_k* 1{η_{k-1}=n}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub k: usize,
    pub first: Vec<DVector<f64>>,
    pub second: BlockCollection,
    /// `P(η_k = n)`.
    pub mode_dist: DVector<f64>,
}

impl MomentState {
    /// State at `k = 0` for a deterministic-in-distribution initial error with
    /// mean `e0_mean` and second moment `e0_second`, independent of the mode
    /// `η_{-1}`, which is distributed as `prev_mode_dist`.
    pub fn initial(
        ch: &MarkovChannel,
        e0_mean: &DVector<f64>,
        e0_second: &DMatrix<f64>,
        prev_mode_dist: &DVector<f64>,
    ) -> Result<Self> {
        if prev_mode_dist.len() != ch.modes() || e0_second.shape() != (e0_mean.len(), e0_mean.len())
        {
            return Err(Error::dims(
                "initial moments do not match the channel or each other",
            ));
        }
        Ok(Self {
            k: 0,
            first: prev_mode_dist.iter().map(|&p| e0_mean * p).collect(),
            second: BlockCollection::from_fn(ch.modes(), |n| e0_second * prev_mode_dist[n])?,
            mode_dist: crate::channels::mode_probabilities(ch, prev_mode_dist, 1)?,
        })
    }

    /// `E[e_k]`.
    pub fn mean(&self) -> DVector<f64> {
        self.first
            .iter()
            .fold(DVector::zeros(self.second.dim()), |acc, m| acc + m)
    }

    /// `E[e_k e_k*]`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        self.second.sum()
    }
}

/// One exact step of the error-moment recursion
/// `m(k+1) = B m(k)`, `Y(k+1) = V(Y(k)) + O(M, k)` with `π_n(k) = P(η_k = n)`.
pub fn propagate_moments(
    ch: &MarkovChannel,
    gains: &[DMatrix<f64>],
    model: &MjlsModel,
    state: &MomentState,
) -> Result<MomentState> {
    let br = BranchMatrices::observer(model, gains)?;
    if br.modes() != ch.modes() || state.first.len() != ch.modes() {
        return Err(Error::dims(
            "moment state, gains and channel disagree on the mode count",
        ));
    }
    let stacked = DVector::from_iterator(
        ch.modes() * model.nx(),
        state.first.iter().flat_map(|v| v.iter().copied()),
    );
    let next_first = matrix_rep_firstmoment(ch, &br)?.apply(&stacked);
    let nx = model.nx();
    let first = (0..ch.modes())
        .map(|n| next_first.rows(n * nx, nx).into_owned())
        .collect();
    let noise = noise_injection(model, ch, gains, &state.mode_dist)?;
    let second = &op_v(ch, &br, &state.second)? + &noise;
    Ok(MomentState {
        k: state.k + 1,
        first,
        second,
        mode_dist: crate::channels::mode_probabilities(ch, &state.mode_dist, 1)?,
    })
}

/// Mean-square detectability certificate for gains `M`: `ρ(V) < 1` with
/// `Γ_n1 = A + M_n L`, `Γ_n0 = A`.
pub fn is_ms_detectable_with_gain(
    ch: &MarkovChannel,
    model: &MjlsModel,
    gains: &[DMatrix<f64>],
) -> Result<(bool, f64)> {
    let br = BranchMatrices::observer(model, gains)?;
    let rho = spectral_radius(&matrix_rep_v(ch, &br)?)?;
    Ok((rho < 1.0, rho))
}

fn check_actuation(
    ch_act: &MarkovChannel,
    model: &MjlsModel,
    gains: &[DMatrix<f64>],
) -> Result<()> {
    check_control_gains(model, gains)?;
    if gains.len() != ch_act.modes() {
        return Err(Error::dims(format!(
            "{} control gains for {} actuation modes",
            gains.len(),
            ch_act.modes()
        )));
    }
    Ok(())
}

/// Second-moment operator of `x_{k+1} = (A + ν_k B F_{θ_{k-1}}) x_k` on blocks
/// indexed by the aggregated mode `(θ_k, θ_{k-1})`.
///
/// Block `(i, l)` moves to `(j, i)` with probability `p_ij`, through
/// `A + B F_l` with probability `ν_i` and `A` otherwise. The result is
/// `N² n²` square.
pub fn control_delay_operator(
    ch_act: &MarkovChannel,
    model: &MjlsModel,
    gains: &[DMatrix<f64>],
) -> Result<OperatorMatrix> {
    check_actuation(ch_act, model, gains)?;
    let n_modes = ch_act.modes();
    let d = model.nx() * model.nx();
    let open = kron_self(&model.a);
    let closed: Vec<DMatrix<f64>> = gains
        .iter()
        .map(|f| kron_self(&(&model.a + &model.b * f)))
        .collect();
    let agg = |cur: usize, prev: usize| cur * n_modes + prev;
    let mut rep = DMatrix::zeros(n_modes * n_modes * d, n_modes * n_modes * d);
    for i in 0..n_modes {
        let p = ch_act.delivery(i);
        for l in 0..n_modes {
            let w = &closed[l] * p + &open * (1.0 - p);
            for j in 0..n_modes {
                let q = ch_act.tpm().prob(i, j);
                if q != 0.0 {
                    rep.view_mut((agg(j, i) * d, agg(i, l) * d), (d, d))
                        .copy_from(&(&w * q));
                }
            }
        }
    }
    Ok(OperatorMatrix {
        rep,
        kind: OperatorKind::ControlDelay,
    })
}

/// `N n²` operator with the same nonzero spectrum as
/// [`control_delay_operator`]: summing the aggregated blocks over the older
/// mode gives `Z_j ← Σ_i p_ij [ν_j (A + B F_i) Z_i (·)* + (1 - ν_j) A Z_i A*]`.
pub fn control_delay_operator_reduced(
    ch_act: &MarkovChannel,
    model: &MjlsModel,
    gains: &[DMatrix<f64>],
) -> Result<OperatorMatrix> {
    check_actuation(ch_act, model, gains)?;
    let n_modes = ch_act.modes();
    let d = model.nx() * model.nx();
    let open = kron_self(&model.a);
    let closed: Vec<DMatrix<f64>> = gains
        .iter()
        .map(|f| kron_self(&(&model.a + &model.b * f)))
        .collect();
    let mut rep = DMatrix::zeros(n_modes * d, n_modes * d);
    for j in 0..n_modes {
        let p = ch_act.delivery(j);
        for i in 0..n_modes {
            let q = ch_act.tpm().prob(i, j);
            if q != 0.0 {
                let w = (&closed[i] * p + &open * (1.0 - p)) * q;
                rep.view_mut((j * d, i * d), (d, d)).copy_from(&w);
            }
        }
    }
    Ok(OperatorMatrix {
        rep,
        kind: OperatorKind::ControlDelayReduced,
    })
}

/// Mean-square stability certificate of the delayed-mode state feedback.
pub fn is_ms_stabilizing_control_gain(
    ch_act: &MarkovChannel,
    model: &MjlsModel,
    gains: &[DMatrix<f64>],
) -> Result<(bool, f64)> {
    let rho = spectral_radius(&control_delay_operator_reduced(ch_act, model, gains)?)?;
    Ok((rho < 1.0, rho))
}
