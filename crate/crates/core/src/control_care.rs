//! Coupled Riccati equation of the state-feedback problem in which the
//! controller sees the actuation mode with a one-step delay.
//!
//! For `X = [X_1, ..., X_N]` and actuation mode `l = θ_{k-1}`:
//!
//! ```text
//! A_l = A* (Σ_i p_li X_i) A + C*C
//! C_l = A* (Σ_i p_li ν_i X_i) B
//! B_l = Σ_i p_li ν_i (B* X_i B + D*D)
//! X_l = A_l - C_l B_l⁻¹ C_l*
//! ```
//!
//! The optimal gain is `F_l = -B_l⁻¹ C_l*` and the control input is
//! `u_k = F_{θ_{k-1}} x_k`.

use nalgebra::DMatrix;

use crate::channels::MarkovChannel;
use crate::linalg::{self, spd_condition};
use crate::model::MjlsModel;
use crate::msops::{self, BlockCollection};
use crate::{Error, Result};

/// `B_l` with a condition number above this is treated as singular.
pub const BTILDE_MAX_CONDITION: f64 = 1e12;

/// The four matrices of one Riccati block.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOps {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCareSolution {
    pub x: BlockCollection,
    pub gains: Vec<DMatrix<f64>>,
    /// Optimal average cost `α Σ π_i tr(G* X_i G)`.
    pub cost: f64,
    /// `max_l |X_l - 𝒳_l(X)| / max(1, |X|)`.
    pub residual: f64,
    pub rho_control: f64,
    pub iterations: usize,
}

fn check_inputs(model: &MjlsModel, ch_act: &MarkovChannel, x: &BlockCollection) -> Result<()> {
    if x.len() != ch_act.modes() || x.dim() != model.nx() {
        return Err(Error::dims(format!(
            "X has {} blocks of {}x{}; expected {} of {}x{}",
            x.len(),
            x.dim(),
            x.dim(),
            ch_act.modes(),
            model.nx(),
            model.nx()
        )));
    }
    Ok(())
}

/// `(A_l, C_l, B_l, X_l)` at `X` for mode `l`.
pub fn care_ops_control(
    model: &MjlsModel,
    ch_act: &MarkovChannel,
    x: &BlockCollection,
    l: usize,
) -> Result<ControlOps> {
    check_inputs(model, ch_act, x)?;
    if l >= ch_act.modes() {
        return Err(Error::IndexOutOfRange {
            index: l,
            len: ch_act.modes(),
        });
    }
    let (nx, nu) = (model.nx(), model.nu());
    let mut ex = DMatrix::zeros(nx, nx);
    let mut ex_nu = DMatrix::zeros(nx, nx);
    let mut nu_mass = 0.0;
    for (i, xi) in x.iter().enumerate() {
        let p = ch_act.tpm().prob(l, i);
        if p == 0.0 {
            continue;
        }
        ex += xi * p;
        let pv = p * ch_act.delivery(i);
        ex_nu += xi * pv;
        nu_mass += pv;
    }
    let a = model.a.transpose() * &ex * &model.a + model.qc();
    let c = model.a.transpose() * &ex_nu * &model.b;
    let b =
        linalg::hermitian_part(&(model.b.transpose() * &ex_nu * &model.b + model.rc() * nu_mass));
    if nu_mass == 0.0 || (nu > 0 && spd_condition(&b) > BTILDE_MAX_CONDITION) {
        return Err(Error::SingularBtilde { mode: l });
    }
    let b_inv = linalg::spd_inverse(&b).ok_or(Error::SingularBtilde { mode: l })?;
    let x_next = linalg::hermitian_part(&(&a - &c * &b_inv * c.transpose()));
    Ok(ControlOps { a, c, b, x: x_next })
}

/// `F_l = -B_l(X)⁻¹ C_l(X)*`.
pub fn control_gain(
    model: &MjlsModel,
    ch_act: &MarkovChannel,
    x: &BlockCollection,
    l: usize,
) -> Result<DMatrix<f64>> {
    let ops = care_ops_control(model, ch_act, x, l)?;
    let b_inv = linalg::spd_inverse(&ops.b).ok_or(Error::SingularBtilde { mode: l })?;
    Ok(-(b_inv * ops.c.transpose()))
}

/// The Riccati map `X ↦ [𝒳_1(X), ..., 𝒳_N(X)]`.
pub fn control_riccati_map(
    model: &MjlsModel,
    ch_act: &MarkovChannel,
    x: &BlockCollection,
) -> Result<BlockCollection> {
    let blocks = (0..ch_act.modes())
        .map(|l| care_ops_control(model, ch_act, x, l).map(|o| o.x))
        .collect::<Result<Vec<_>>>()?;
    BlockCollection::new(blocks)
}

/// `max_l |X_l - 𝒳_l(X)| / max(1, max_l |X_l|)`.
pub fn control_residual(
    model: &MjlsModel,
    ch_act: &MarkovChannel,
    x: &BlockCollection,
) -> Result<f64> {
    let next = control_riccati_map(model, ch_act, x)?;
    Ok(x.max_abs_diff(&next) / x.amax().max(1.0))
}

/// `α Σ_i π_i tr(G* X_i G)` with `π` the stationary actuation distribution.
pub fn optimal_control_cost(ch_act: &MarkovChannel, model: &MjlsModel, x: &BlockCollection) -> f64 {
    let g = &model.g;
    x.iter()
        .zip(ch_act.stationary().iter())
        .map(|(xi, &p)| p * (g.transpose() * xi * g).trace())
        .sum::<f64>()
        * model.noise_scale
}

/// Value iteration `X ← 𝒳(X)` from `X_l = C*C` until the relative change is
/// at most `tol`.
///
/// A converged solution whose gains fail the delayed-mode stability
/// certificate comes back as [`Error::NonStabilizing`] carrying the solution.
pub fn solve_control_care(
    model: &MjlsModel,
    ch_act: &MarkovChannel,
    tol: f64,
    max_iter: usize,
) -> Result<ControlCareSolution> {
    let n_modes = ch_act.modes();
    let mut x = BlockCollection::from_fn(n_modes, |_| model.qc())?;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = control_riccati_map(model, ch_act, &x)?;
        iterations += 1;
        change = next.max_abs_diff(&x) / next.amax().max(1.0);
        x = next;
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            break;
        }
    }
    if !(change <= tol) {
        return Err(Error::NotConverged {
            iterations,
            residual: change,
        });
    }
    log::debug!("control CARE converged in {iterations} iterations");
    let gains = (0..n_modes)
        .map(|l| control_gain(model, ch_act, &x, l))
        .collect::<Result<Vec<_>>>()?;
    let residual = control_residual(model, ch_act, &x)?;
    let (stable, rho_control) = msops::is_ms_stabilizing_control_gain(ch_act, model, &gains)?;
    let solution = ControlCareSolution {
        cost: optimal_control_cost(ch_act, model, &x),
        x,
        gains,
        residual,
        rho_control,
        iterations,
    };
    if !stable {
        return Err(Error::NonStabilizing {
            rho: rho_control,
            solution: Box::new(solution),
        });
    }
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::ChannelConfig;

    fn s1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar(a: f64, b: f64) -> MjlsModel {
        MjlsModel {
            a: s1(a),
            b: s1(b),
            g: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            c: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            d: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            l: s1(1.0),
            h: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            noise_scale: 1.0,
        }
    }

    fn root() -> f64 {
        (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0
    }

    #[test]
    fn scalar_ops_by_hand() {
        let ch = MarkovChannel::bernoulli(1.0).unwrap();
        let x = BlockCollection::new(vec![s1(1.0)]).unwrap();
        let ops = care_ops_control(&scalar(0.5, 1.0), &ch, &x, 0).unwrap();
        assert!((ops.a[(0, 0)] - 1.25).abs() < 1e-15);
        assert!((ops.c[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((ops.b[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((ops.x[(0, 0)] - 1.125).abs() < 1e-15);
    }

    #[test]
    fn never_delivered_is_singular() {
        let ch = MarkovChannel::bernoulli(0.0).unwrap();
        let x = BlockCollection::new(vec![s1(1.0)]).unwrap();
        let err = care_ops_control(&scalar(0.5, 1.0), &ch, &x, 0).unwrap_err();
        assert!(matches!(err, Error::SingularBtilde { mode: 0 }));
        assert!(err
            .to_string()
            .starts_with("SingularBtilde: control never delivered"));
    }

    #[test]
    fn no_authority_leaves_a_unchanged() {
        let ch = MarkovChannel::bernoulli(0.7).unwrap();
        let x = BlockCollection::new(vec![s1(2.0)]).unwrap();
        let m = scalar(0.5, 0.0);
        let ops = care_ops_control(&m, &ch, &x, 0).unwrap();
        assert_eq!(ops.x, ops.a);
        assert_eq!(control_gain(&m, &ch, &x, 0).unwrap(), s1(0.0));
    }

    #[test]
    fn scalar_solution_and_gain() {
        let ch = MarkovChannel::bernoulli(1.0).unwrap();
        let sol = solve_control_care(&scalar(0.5, 1.0), &ch, 1e-13, 10_000).unwrap();
        let x = sol.x.blocks()[0][(0, 0)];
        assert!((x - root()).abs() < 1e-10);
        assert!((sol.gains[0][(0, 0)] + 0.5 * x / (x + 1.0)).abs() < 1e-12);
        assert!((sol.rho_control - (0.5 + sol.gains[0][(0, 0)]).powi(2)).abs() < 1e-12);
        assert!((sol.cost - x).abs() < 1e-12);
    }

    #[test]
    fn completion_of_squares_identity() {
        let ch = MarkovChannel::from_config(&ChannelConfig {
            tpm: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            delivery_prob: vec![0.9, 0.4],
        })
        .unwrap();
        let m = MjlsModel {
            a: DMatrix::from_row_slice(2, 2, &[1.1, 0.3, 0.0, 0.8]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            g: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            c: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            d: DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]),
            l: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            h: DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]),
            noise_scale: 1.0,
        };
        let x = BlockCollection::new(vec![
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 3.0]),
        ])
        .unwrap();
        for l in 0..2 {
            let ops = care_ops_control(&m, &ch, &x, l).unwrap();
            let f = control_gain(&m, &ch, &x, l).unwrap();
            let lhs = &ops.a
                + &ops.c * &f
                + f.transpose() * ops.c.transpose()
                + f.transpose() * &ops.b * &f;
            assert!((lhs - &ops.x).amax() < 1e-10);
        }
    }
}
