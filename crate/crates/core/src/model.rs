//! Plant matrices and the one-step stochastic dynamics
//!
//! ```text
//! x_{k+1} = A x_k + nu_k B u_k + G w_k
//! y_k     = gamma_k (L x_k + H w_k)
//! z_k     = C x_k + nu_k D u_k
//! ```
//!
//! with `E[w_k w_k*] = noise_scale * I`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{is_pd, min_eigenvalue, psd_sqrt};
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Tolerance of the structural matrix checks.
pub const MODEL_TOL: f64 = 1e-10;

/// Row-major matrix as stored in JSON.
pub type Rows = Vec<Vec<f64>>;

/// Model as it appears in configuration files. Either `C` or `Qc = C*C` and
/// either `D` or `Rc = D*D` must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "G")]
    pub g: Rows,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Rows>,
    #[serde(rename = "Qc", default, skip_serializing_if = "Option::is_none")]
    pub qc: Option<Rows>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Rows>,
    #[serde(rename = "Rc", default, skip_serializing_if = "Option::is_none")]
    pub rc: Option<Rows>,
    #[serde(rename = "L")]
    pub l: Rows,
    #[serde(rename = "H")]
    pub h: Rows,
    pub noise_scale: f64,
}

pub fn matrix_from_rows(rows: &Rows) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dims("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// The seven plant matrices and the noise variance multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct MjlsModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub noise_scale: f64,
}

impl MjlsModel {
    /// Builds a model and rejects it unless [`validate_model`] is clean.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        g: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        l: DMatrix<f64>,
        h: DMatrix<f64>,
        noise_scale: f64,
    ) -> Result<Self> {
        let m = Self {
            a,
            b,
            g,
            c,
            d,
            l,
            h,
            noise_scale,
        };
        let problems = validate_model(&m);
        if problems.is_empty() {
            Ok(m)
        } else {
            Err(Error::InvalidModel(problems))
        }
    }

    /// Builds `C`, `D` from the weights when only `Qc`, `Rc` are given:
    /// `C = [Qc^½; 0]`, `D = [0; Rc^½]`, so `C*D = 0` by construction.
    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        let a = matrix_from_rows(&cfg.a)?;
        let b = matrix_from_rows(&cfg.b)?;
        let (nx, nu) = (a.nrows(), b.ncols());
        let (c, d) = match (&cfg.c, &cfg.d) {
            (Some(c), Some(d)) => (matrix_from_rows(c)?, matrix_from_rows(d)?),
            _ => {
                let qc = match (&cfg.qc, &cfg.c) {
                    (Some(q), _) => matrix_from_rows(q)?,
                    (None, Some(c)) => {
                        let c = matrix_from_rows(c)?;
                        c.transpose() * c
                    }
                    (None, None) => {
                        return Err(Error::InvalidModel(vec!["missing C or Qc".into()]))
                    }
                };
                let rc = match (&cfg.rc, &cfg.d) {
                    (Some(r), _) => matrix_from_rows(r)?,
                    (None, Some(d)) => {
                        let d = matrix_from_rows(d)?;
                        d.transpose() * d
                    }
                    (None, None) => {
                        return Err(Error::InvalidModel(vec!["missing D or Rc".into()]))
                    }
                };
                if qc.shape() != (nx, nx) || rc.shape() != (nu, nu) {
                    return Err(Error::InvalidModel(vec![format!(
                        "weights must be {nx}x{nx} and {nu}x{nu}"
                    )]));
                }
                let mut c = DMatrix::zeros(nx + nu, nx);
                c.view_mut((0, 0), (nx, nx)).copy_from(&psd_sqrt(&qc));
                let mut d = DMatrix::zeros(nx + nu, nu);
                d.view_mut((nx, 0), (nu, nu)).copy_from(&psd_sqrt(&rc));
                (c, d)
            }
        };
        Self::new(
            a,
            b,
            matrix_from_rows(&cfg.g)?,
            c,
            d,
            matrix_from_rows(&cfg.l)?,
            matrix_from_rows(&cfg.h)?,
            cfg.noise_scale,
        )
    }

    pub fn to_config(&self) -> ModelConfig {
        ModelConfig {
            a: matrix_to_rows(&self.a),
            b: matrix_to_rows(&self.b),
            g: matrix_to_rows(&self.g),
            c: Some(matrix_to_rows(&self.c)),
            qc: None,
            d: Some(matrix_to_rows(&self.d)),
            rc: None,
            l: matrix_to_rows(&self.l),
            h: matrix_to_rows(&self.h),
            noise_scale: self.noise_scale,
        }
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn nw(&self) -> usize {
        self.g.ncols()
    }

    pub fn ny(&self) -> usize {
        self.l.nrows()
    }

    /// State weight `C*C`.
    pub fn qc(&self) -> DMatrix<f64> {
        self.c.transpose() * &self.c
    }

    /// Input weight `D*D`.
    pub fn rc(&self) -> DMatrix<f64> {
        self.d.transpose() * &self.d
    }

    /// `GG*`.
    pub fn process_cov(&self) -> DMatrix<f64> {
        &self.g * self.g.transpose()
    }

    /// `HH*`.
    pub fn measurement_cov(&self) -> DMatrix<f64> {
        &self.h * self.h.transpose()
    }
}

/// Dimension consistency plus `GG* ⪰ 0, GH* = 0, HH* ≻ 0, C*D = 0, D*D ≻ 0`.
pub fn validate_model(m: &MjlsModel) -> Vec<String> {
    let mut out = Vec::new();
    let nx = m.a.nrows();
    if !m.a.is_square() {
        out.push(format!(
            "A must be square, got {}x{}",
            m.a.nrows(),
            m.a.ncols()
        ));
    }
    let nu = m.b.ncols();
    let nw = m.g.ncols();
    let check =
        |out: &mut Vec<String>, name: &str, mat: &DMatrix<f64>, rows: usize, cols: usize| {
            if mat.shape() != (rows, cols) {
                out.push(format!(
                    "{name} must be {rows}x{cols}, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                ));
            }
        };
    check(&mut out, "B", &m.b, nx, nu);
    check(&mut out, "G", &m.g, nx, nw);
    check(&mut out, "C", &m.c, m.c.nrows(), nx);
    check(&mut out, "D", &m.d, m.c.nrows(), nu);
    check(&mut out, "L", &m.l, m.l.nrows(), nx);
    check(&mut out, "H", &m.h, m.l.nrows(), nw);
    if !(m.noise_scale >= 0.0) {
        out.push(format!(
            "noise_scale must be nonnegative, got {}",
            m.noise_scale
        ));
    }
    let all = [&m.a, &m.b, &m.g, &m.c, &m.d, &m.l, &m.h];
    if all.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        out.push("matrices contain non-finite entries".into());
    }
    if !out.is_empty() {
        return out;
    }
    if min_eigenvalue(&m.process_cov()) < -MODEL_TOL {
        out.push("GG* not positive semidefinite".into());
    }
    if (&m.g * m.h.transpose()).amax() > MODEL_TOL {
        out.push("GH* ≠ 0".into());
    }
    if !is_pd(&m.measurement_cov(), MODEL_TOL) {
        out.push("HH* not positive definite".into());
    }
    if (m.c.transpose() * &m.d).amax() > MODEL_TOL {
        out.push("C*D ≠ 0".into());
    }
    if !is_pd(&m.rc(), MODEL_TOL) {
        out.push("D*D not positive definite".into());
    }
    out
}

/// Plant state at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub x: DVector<f64>,
    pub k: usize,
}

/// Result of one plant step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantStep {
    pub x_next: DVector<f64>,
    /// Measurement received by the controller (zero when lost).
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

/// Advances the plant one step. `w` is the already-scaled noise sample.
pub fn plant_step(
    m: &MjlsModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    nu: bool,
    gamma: bool,
    w: &DVector<f64>,
) -> Result<PlantStep> {
    if x.len() != m.nx() || u.len() != m.nu() || w.len() != m.nw() {
        return Err(Error::dims(format!(
            "plant step expects x:{}, u:{}, w:{}; got {}, {}, {}",
            m.nx(),
            m.nu(),
            m.nw(),
            x.len(),
            u.len(),
            w.len()
        )));
    }
    let mut x_next = &m.a * x + &m.g * w;
    let mut z = &m.c * x;
    if nu {
        x_next += &m.b * u;
        z += &m.d * u;
    }
    let y = if gamma {
        &m.l * x + &m.h * w
    } else {
        DVector::zeros(m.ny())
    };
    Ok(PlantStep { x_next, y, z })
}

/// Gaussian noise sample for step `k`: i.i.d. `N(0, noise_scale)` entries,
/// deterministic in `(seed, k)`.
pub fn draw_noise(m: &MjlsModel, seed: u64, k: u64) -> DVector<f64> {
    if m.noise_scale == 0.0 {
        return DVector::zeros(m.nw());
    }
    let mut rng = stream_rng(seed, k);
    let sd = m.noise_scale.sqrt();
    DVector::from_fn(m.nw(), |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        sd * v
    })
}
