//! Finite-state Markov packet-loss channels.
//!
//! A channel is a time-homogeneous Markov chain over link modes together with
//! the probability that a packet sent while the link is in a given mode is
//! delivered. The same type models the actuation link (controller to plant)
//! and the sensing link (sensor to controller).

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::{Error, Result};

/// Rows whose sum is off by at most this much are silently renormalized.
pub const ROW_SUM_RENORMALIZE_TOL: f64 = 1e-9;
/// Post-construction bound on row-sum error.
pub const ROW_SUM_TOL: f64 = 1e-12;

const STATIONARY_TOL: f64 = 1e-14;
const STATIONARY_MAX_ITER: usize = 1_000_000;

/// Channel as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Row-major transition probability matrix.
    pub tpm: Vec<Vec<f64>>,
    /// Per-mode probability that a packet is delivered.
    pub delivery_prob: Vec<f64>,
}

/// A single failed channel check.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelViolation {
    Empty,
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    EntryOutOfRange {
        row: usize,
        col: usize,
        value: f64,
    },
    RowSum {
        row: usize,
        sum: f64,
    },
    DeliveryLength {
        len: usize,
        expected: usize,
    },
    DeliveryOutOfRange {
        mode: usize,
        value: f64,
    },
    NotErgodic(String),
}

impl fmt::Display for ChannelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "tpm has no modes"),
            Self::NotSquare { row, len, expected } => {
                write!(f, "row {row} has {len} entries, expected {expected}")
            }
            Self::EntryOutOfRange { row, col, value } => {
                write!(
                    f,
                    "entry ({row}, {col}) = {} is not a probability",
                    short(*value)
                )
            }
            Self::RowSum { row, sum } => write!(f, "row {row} sums to {}", short(*sum)),
            Self::DeliveryLength { len, expected } => {
                write!(f, "delivery_prob has {len} entries, expected {expected}")
            }
            Self::DeliveryOutOfRange { mode, value } => {
                write!(
                    f,
                    "delivery_prob[{mode}] = {} is not a probability",
                    short(*value)
                )
            }
            Self::NotErgodic(why) => write!(f, "not ergodic: {why}"),
        }
    }
}

fn short(v: f64) -> String {
    let s = format!("{v:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn count_word(k: usize) -> String {
    const WORDS: [&str; 9] = [
        "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    if (2..=10).contains(&k) {
        WORDS[k - 2].to_string()
    } else {
        k.to_string()
    }
}

/// Checks a raw channel description. An empty list means the channel is
/// usable: square, probabilities in range, rows stochastic (up to
/// [`ROW_SUM_RENORMALIZE_TOL`]) and the chain ergodic.
pub fn validate_channel(ch: &ChannelConfig) -> Vec<ChannelViolation> {
    let mut out = Vec::new();
    let s = ch.tpm.len();
    if s == 0 {
        out.push(ChannelViolation::Empty);
        return out;
    }
    let mut shape_ok = true;
    for (i, row) in ch.tpm.iter().enumerate() {
        if row.len() != s {
            out.push(ChannelViolation::NotSquare {
                row: i,
                len: row.len(),
                expected: s,
            });
            shape_ok = false;
        }
    }
    if !shape_ok {
        return out;
    }
    for (i, row) in ch.tpm.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                out.push(ChannelViolation::EntryOutOfRange {
                    row: i,
                    col: j,
                    value: p,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if !((sum - 1.0).abs() <= ROW_SUM_RENORMALIZE_TOL) {
            out.push(ChannelViolation::RowSum { row: i, sum });
        }
    }
    if ch.delivery_prob.len() != s {
        out.push(ChannelViolation::DeliveryLength {
            len: ch.delivery_prob.len(),
            expected: s,
        });
    }
    for (m, &p) in ch.delivery_prob.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            out.push(ChannelViolation::DeliveryOutOfRange { mode: m, value: p });
        }
    }
    let pattern = DMatrix::from_fn(s, s, |i, j| ch.tpm[i][j]);
    if let Err(why) = ergodicity(&pattern) {
        out.push(ChannelViolation::NotErgodic(why));
    }
    out
}

/// Irreducibility and aperiodicity of the directed graph of positive entries.
fn ergodicity(p: &DMatrix<f64>) -> std::result::Result<(), String> {
    let s = p.nrows();
    let succ: Vec<Vec<usize>> = (0..s)
        .map(|i| (0..s).filter(|&j| p[(i, j)] > 0.0).collect())
        .collect();
    let reach: Vec<Vec<bool>> = (0..s).map(|i| reachable(&succ, i)).collect();

    // Communicating classes; a class is closed when no edge leaves it.
    let mut class_of = vec![usize::MAX; s];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in 0..s {
        if class_of[i] != usize::MAX {
            continue;
        }
        let members: Vec<usize> = (0..s).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &members {
            class_of[j] = classes.len();
        }
        classes.push(members);
    }
    if classes.len() > 1 {
        let closed = classes
            .iter()
            .filter(|c| {
                c.iter()
                    .all(|&i| succ[i].iter().all(|&j| class_of[j] == class_of[i]))
            })
            .count();
        if closed > 1 {
            return Err(format!("{} closed classes", count_word(closed)));
        }
        let transient: Vec<usize> = classes
            .iter()
            .filter(|c| {
                !c.iter()
                    .all(|&i| succ[i].iter().all(|&j| class_of[j] == class_of[i]))
            })
            .flatten()
            .copied()
            .collect();
        return Err(format!("transient modes {transient:?}"));
    }

    // Period = gcd of cycle lengths, read off BFS levels from mode 0.
    let mut level = vec![usize::MAX; s];
    level[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for &v in &succ[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0usize;
    for u in 0..s {
        for &v in &succ[u] {
            let d = (level[u] + 1).abs_diff(level[v]);
            period = gcd(period, d);
        }
    }
    if period > 1 {
        return Err(format!("periodic with period {period}"));
    }
    Ok(())
}

fn reachable(succ: &[Vec<usize>], from: usize) -> Vec<bool> {
    let mut seen = vec![false; succ.len()];
    seen[from] = true;
    let mut stack = vec![from];
    while let Some(u) = stack.pop() {
        for &v in &succ[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Row-stochastic square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix(DMatrix<f64>);

impl TransitionMatrix {
    /// Validates entries and row sums. Rows off by at most
    /// [`ROW_SUM_RENORMALIZE_TOL`] are rescaled with a warning.
    pub fn new(mut m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || !m.is_square() {
            return Err(Error::InvalidChannel(vec![format!(
                "tpm must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )]));
        }
        let mut problems = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let p = m[(i, j)];
                if !(0.0..=1.0).contains(&p) {
                    problems.push(
                        ChannelViolation::EntryOutOfRange {
                            row: i,
                            col: j,
                            value: p,
                        }
                        .to_string(),
                    );
                }
            }
            let sum = m.row(i).sum();
            if !((sum - 1.0).abs() <= ROW_SUM_RENORMALIZE_TOL) {
                problems.push(ChannelViolation::RowSum { row: i, sum }.to_string());
            } else if sum != 1.0 {
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    log::warn!("renormalizing tpm row {i} (sum {sum})");
                }
                m.row_mut(i).scale_mut(1.0 / sum);
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidChannel(problems));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let s = rows.len();
        if rows.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidChannel(vec!["tpm is not square".into()]));
        }
        Self::new(DMatrix::from_fn(s, s, |i, j| rows[i][j]))
    }

    pub fn modes(&self) -> usize {
        self.0.nrows()
    }

    /// Probability of moving from `from` to `to`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.0[(from, to)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Irreducible and aperiodic.
    pub fn is_ergodic(&self) -> bool {
        ergodicity(&self.0).is_ok()
    }
}

/// Stationary distribution by power iteration from the uniform vector.
pub fn stationary_distribution(tpm: &TransitionMatrix) -> Result<DVector<f64>> {
    ergodicity(tpm.matrix()).map_err(Error::NotErgodic)?;
    let s = tpm.modes();
    let qt = tpm.matrix().transpose();
    let mut pi = DVector::from_element(s, 1.0 / s as f64);
    for _ in 0..STATIONARY_MAX_ITER {
        let mut next = &qt * &pi;
        next /= next.sum();
        let change = (&next - &pi).lp_norm(1);
        pi = next;
        if change <= STATIONARY_TOL {
            return Ok(pi);
        }
    }
    Err(Error::NotErgodic("power iteration did not contract".into()))
}

/// A validated Markov channel with its stationary distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChannel {
    tpm: TransitionMatrix,
    delivery_prob: DVector<f64>,
    stationary: DVector<f64>,
}

impl MarkovChannel {
    pub fn new(tpm: TransitionMatrix, delivery_prob: DVector<f64>) -> Result<Self> {
        if delivery_prob.len() != tpm.modes() {
            return Err(Error::InvalidChannel(vec![
                ChannelViolation::DeliveryLength {
                    len: delivery_prob.len(),
                    expected: tpm.modes(),
                }
                .to_string(),
            ]));
        }
        let bad: Vec<String> = delivery_prob
            .iter()
            .enumerate()
            .filter(|(_, p)| !(0.0..=1.0).contains(*p))
            .map(|(mode, &value)| ChannelViolation::DeliveryOutOfRange { mode, value }.to_string())
            .collect();
        if !bad.is_empty() {
            return Err(Error::InvalidChannel(bad));
        }
        let stationary = stationary_distribution(&tpm)?;
        Ok(Self {
            tpm,
            delivery_prob,
            stationary,
        })
    }

    pub fn from_config(cfg: &ChannelConfig) -> Result<Self> {
        let violations = validate_channel(cfg);
        if !violations.is_empty() {
            return Err(Error::InvalidChannel(
                violations.iter().map(ToString::to_string).collect(),
            ));
        }
        Self::new(
            TransitionMatrix::from_rows(&cfg.tpm)?,
            DVector::from_column_slice(&cfg.delivery_prob),
        )
    }

    pub fn to_config(&self) -> ChannelConfig {
        let m = self.tpm.matrix();
        ChannelConfig {
            tpm: (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect(),
            delivery_prob: self.delivery_prob.iter().copied().collect(),
        }
    }

    /// Bernoulli channel: a single mode with delivery probability `p`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::new(
            TransitionMatrix::new(DMatrix::from_element(1, 1, 1.0))?,
            DVector::from_element(1, p),
        )
    }

    pub fn modes(&self) -> usize {
        self.tpm.modes()
    }

    pub fn tpm(&self) -> &TransitionMatrix {
        &self.tpm
    }

    pub fn delivery_prob(&self) -> &DVector<f64> {
        &self.delivery_prob
    }

    /// Delivery probability in `mode`.
    pub fn delivery(&self, mode: usize) -> f64 {
        self.delivery_prob[mode]
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.modes() {
            return Err(Error::IndexOutOfRange {
                index: mode,
                len: self.modes(),
            });
        }
        Ok(())
    }

    /// Draws the successor of `mode`.
    pub fn next_mode<R: Rng + ?Sized>(&self, mode: usize, rng: &mut R) -> usize {
        let row = self.tpm.matrix().row(mode);
        sample_index(row.iter().copied(), rng)
    }

    /// Draws a mode from the stationary distribution.
    pub fn stationary_mode<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(self.stationary.iter().copied(), rng)
    }

    /// Draws whether a packet sent in `mode` is delivered.
    pub fn draw_delivery<R: Rng + ?Sized>(&self, mode: usize, rng: &mut R) -> bool {
        rng.random::<f64>() < self.delivery_prob[mode]
    }
}

fn sample_index<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// `P(delivered, next mode = to | mode = from)`.
pub fn joint_delivery_probability(
    ch: &MarkovChannel,
    from: usize,
    to: usize,
    delivered: bool,
) -> Result<f64> {
    ch.check_mode(from)?;
    ch.check_mode(to)?;
    let q = ch.tpm.prob(from, to);
    let p = ch.delivery(to);
    Ok(if delivered { p * q } else { (1.0 - p) * q })
}

/// Distribution of the mode after `k` steps from `initial`.
pub fn mode_probabilities(
    ch: &MarkovChannel,
    initial: &DVector<f64>,
    k: usize,
) -> Result<DVector<f64>> {
    if initial.len() != ch.modes() {
        return Err(Error::dims(format!(
            "initial distribution has {} entries for {} modes",
            initial.len(),
            ch.modes()
        )));
    }
    let qt = ch.tpm.matrix().transpose();
    let mut pi = initial.clone();
    for _ in 0..k {
        pi = &qt * pi;
    }
    Ok(pi)
}

/// A realization of the channel: modes and per-step delivery outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModePath {
    /// Zero-based mode indices, length `T + 1`.
    pub modes: Vec<usize>,
    /// Delivery outcome at each step, length `T + 1`.
    pub deliveries: Vec<bool>,
    pub seed: u64,
}

/// Samples `length + 1` modes starting from `initial_mode`, with a delivery
/// draw at each step. Deterministic in `seed`.
pub fn sample_path(
    ch: &MarkovChannel,
    initial_mode: usize,
    length: usize,
    seed: u64,
) -> Result<ModePath> {
    if initial_mode >= ch.modes() {
        return Err(Error::InvalidInitialMode {
            mode: initial_mode,
            modes: ch.modes(),
        });
    }
    let mut rng = stream_rng(seed, 0);
    let mut modes = Vec::with_capacity(length + 1);
    let mut deliveries = Vec::with_capacity(length + 1);
    let mut mode = initial_mode;
    for k in 0..=length {
        modes.push(mode);
        deliveries.push(ch.draw_delivery(mode, &mut rng));
        if k < length {
            mode = ch.next_mode(mode, &mut rng);
        }
    }
    Ok(ModePath {
        modes,
        deliveries,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tpm: &[&[f64]], delivery: &[f64]) -> ChannelConfig {
        ChannelConfig {
            tpm: tpm.iter().map(|r| r.to_vec()).collect(),
            delivery_prob: delivery.to_vec(),
        }
    }

    fn channel(tpm: &[&[f64]], delivery: &[f64]) -> MarkovChannel {
        MarkovChannel::from_config(&cfg(tpm, delivery)).unwrap()
    }

    #[test]
    fn validate_examples() {
        assert!(validate_channel(&cfg(&[&[0.5, 0.5], &[0.5, 0.5]], &[0.0, 1.0])).is_empty());

        let v = validate_channel(&cfg(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.5, 0.5]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "not ergodic: two closed classes");

        let v = validate_channel(&cfg(&[&[0.7, 0.4], &[0.3, 0.7]], &[0.5, 0.5]));
        assert!(
            v.iter().any(|e| e.to_string() == "row 0 sums to 1.1"),
            "{v:?}"
        );
    }

    #[test]
    fn validate_periodic_and_transient() {
        let v = validate_channel(&cfg(&[&[0.0, 1.0], &[1.0, 0.0]], &[1.0, 1.0]));
        assert_eq!(v[0].to_string(), "not ergodic: periodic with period 2");
        let v = validate_channel(&cfg(&[&[0.5, 0.5], &[0.0, 1.0]], &[1.0, 1.0]));
        assert_eq!(v[0].to_string(), "not ergodic: transient modes [0]");
        let v = validate_channel(&cfg(&[&[0.5, 0.5]], &[1.0]));
        assert!(matches!(v[0], ChannelViolation::NotSquare { .. }));
        let v = validate_channel(&cfg(&[&[1.0]], &[1.5, 0.2]));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn tiny_row_drift_is_renormalized() {
        let ch = channel(&[&[0.5, 0.5 + 5e-10], &[0.5, 0.5]], &[1.0, 1.0]);
        let sum = ch.tpm().matrix().row(0).sum();
        assert!((sum - 1.0).abs() <= ROW_SUM_TOL);
    }

    #[test]
    fn stationary_examples() {
        let one = TransitionMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert_eq!(stationary_distribution(&one).unwrap()[0], 1.0);

        let sym = TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let pi = stationary_distribution(&sym).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);

        // Hand solution of pi Q = pi: 0.1 pi_0 = 0.2 pi_1.
        let q = TransitionMatrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let pi = stationary_distribution(&q).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-12);
        let residual = (q.matrix().transpose() * &pi - &pi).amax();
        assert!(residual <= 1e-12);
    }

    #[test]
    fn stationary_rejects_reducible() {
        let id = TransitionMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            stationary_distribution(&id),
            Err(Error::NotErgodic(_))
        ));
    }

    #[test]
    fn joint_delivery_examples() {
        let ch = channel(&[&[0.3, 0.7], &[0.6, 0.4]], &[0.2, 0.9]);
        assert!((joint_delivery_probability(&ch, 0, 1, true).unwrap() - 0.63).abs() < 1e-15);
        assert!((joint_delivery_probability(&ch, 0, 1, false).unwrap() - 0.07).abs() < 1e-15);
        for m in 0..2 {
            let total: f64 = (0..2)
                .flat_map(|n| {
                    [true, false].map(|b| joint_delivery_probability(&ch, m, n, b).unwrap())
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-15);
        }
        assert!(matches!(
            joint_delivery_probability(&ch, 2, 0, true),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn mode_probability_examples() {
        let ch = channel(&[&[0.9, 0.1], &[0.2, 0.8]], &[1.0, 1.0]);
        let init = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(mode_probabilities(&ch, &init, 0).unwrap(), init);
        let far = mode_probabilities(&ch, &init, 500).unwrap();
        assert!((far[0] - 2.0 / 3.0).abs() < 1e-10 && (far[1] - 1.0 / 3.0).abs() < 1e-10);
        let one = mode_probabilities(&ch, ch.stationary(), 1).unwrap();
        assert!((one - ch.stationary()).amax() < 1e-12);

        let half = channel(&[&[0.5, 0.5], &[0.5, 0.5]], &[1.0, 1.0]);
        let p = mode_probabilities(&half, &init, 1).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
        assert!(mode_probabilities(&half, &DVector::zeros(3), 1).is_err());
    }

    #[test]
    fn sample_path_sure_delivery_and_loss() {
        let sure = channel(&[&[0.5, 0.5], &[0.1, 0.9]], &[1.0, 1.0]);
        assert!(sample_path(&sure, 0, 200, 1)
            .unwrap()
            .deliveries
            .iter()
            .all(|&d| d));
        let never = channel(&[&[0.5, 0.5], &[0.1, 0.9]], &[0.0, 0.0]);
        assert!(sample_path(&never, 1, 200, 1)
            .unwrap()
            .deliveries
            .iter()
            .all(|&d| !d));
        assert!(matches!(
            sample_path(&never, 2, 5, 1),
            Err(Error::InvalidInitialMode { .. })
        ));
    }

    #[test]
    fn sample_path_is_seed_deterministic() {
        let ch = channel(&[&[0.5, 0.5], &[0.1, 0.9]], &[0.3, 0.8]);
        assert_eq!(
            sample_path(&ch, 0, 100, 9).unwrap(),
            sample_path(&ch, 0, 100, 9).unwrap()
        );
        assert_ne!(
            sample_path(&ch, 0, 100, 9).unwrap(),
            sample_path(&ch, 0, 100, 10).unwrap()
        );
    }
}
