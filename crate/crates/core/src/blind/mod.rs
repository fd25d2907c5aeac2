//! Blind identification of an FIR model whose input is a piecewise-constant
//! signal with known change times.
//!
//! With output `y`, door events `T_1 < … < T_p = N` and FIR order `n`, the
//! model is `y(t) = Σ_{k=1..n} q(k) o(t−k) + e(t)` with `o = H x`, where `H`
//! spreads each segment level `x_k` over its samples. Indices are 0-based
//! throughout: segment `k` covers samples `T_{k−1} .. T_k − 1` with `T_0 = 0`.

mod baseline;
mod kernel;
mod lstsq;
mod nnls;

pub use baseline::baseline_identify;
pub use kernel::{
    kernel_identify, marginal_likelihood_direct, stable_spline_gram, HyperParams, KernelOptions,
};
pub use lstsq::lstsq;
pub use nnls::nnls;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output record and door events of one identification problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindIdProblem {
    pub y: Vec<f64>,
    pub door_events: Vec<usize>,
    pub order: usize,
}

impl BlindIdProblem {
    pub fn new(y: Vec<f64>, door_events: Vec<usize>, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Argument("FIR order must be at least 1".into()));
        }
        if y.is_empty() {
            return Err(Error::Argument("empty output record".into()));
        }
        EventMatrix::new(door_events.clone(), y.len())?;
        Ok(BlindIdProblem {
            y,
            door_events,
            order,
        })
    }

    pub fn samples(&self) -> usize {
        self.y.len()
    }

    pub fn segments(&self) -> usize {
        self.door_events.len()
    }

    pub fn event_matrix(&self) -> EventMatrix {
        EventMatrix::new(self.door_events.clone(), self.y.len()).expect("validated on construction")
    }
}

/// The `N × p` block matrix of ones mapping segment levels to samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventMatrix {
    events: Vec<usize>,
    rows: usize,
}

impl EventMatrix {
    pub fn new(events: Vec<usize>, rows: usize) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::Argument(
                "at least one door event is required".into(),
            ));
        }
        if events[0] == 0 || events.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(
                "door events must be positive and strictly increasing".into(),
            ));
        }
        if *events.last().unwrap() != rows {
            return Err(Error::Argument(format!(
                "last door event must equal the sample count {rows}, got {}",
                events.last().unwrap()
            )));
        }
        Ok(EventMatrix { events, rows })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.events.len()
    }

    pub fn events(&self) -> &[usize] {
        &self.events
    }

    /// Sample range `[start, end)` of segment `k`.
    pub fn segment(&self, k: usize) -> (usize, usize) {
        let start = if k == 0 { 0 } else { self.events[k - 1] };
        (start, self.events[k])
    }

    pub fn segment_lengths(&self) -> Vec<usize> {
        (0..self.cols())
            .map(|k| {
                let (a, b) = self.segment(k);
                b - a
            })
            .collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.rows, self.cols());
        for k in 0..self.cols() {
            let (a, b) = self.segment(k);
            for t in a..b {
                h[(t, k)] = 1.0;
            }
        }
        h
    }

    /// `H x` without forming `H`.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols());
        let mut o = vec![0.0; self.rows];
        for (k, &xk) in x.iter().enumerate() {
            let (a, b) = self.segment(k);
            o[a..b].iter_mut().for_each(|v| *v = xk);
        }
        o
    }
}

pub fn build_event_matrix(door_events: &[usize], samples: usize) -> Result<EventMatrix> {
    EventMatrix::new(door_events.to_vec(), samples)
}

/// `N × n` Toeplitz matrix with `O[t, k−1] = o(t − k)` (zero before the start).
pub fn build_regressor(o: &[f64], order: usize) -> DMatrix<f64> {
    let n = o.len();
    DMatrix::from_fn(n, order, |t, j| if t > j { o[t - j - 1] } else { 0.0 })
}

/// Downward shift by `k` positions with zero fill.
pub fn shift_down(v: &[f64], k: usize) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|t| if t >= k { v[t - k] } else { 0.0 })
        .collect()
}

/// Lifted regressor `[S H, S² H, …, Sⁿ H]` (`N × n·p`), so that
/// `Φ θ = build_regressor(H x, n) q` with `θ[j·p + i] = q_j x_i`.
pub fn build_phi(h: &EventMatrix, order: usize) -> Result<DMatrix<f64>> {
    let (rows, p) = (h.rows(), h.cols());
    if order == 0 {
        return Err(Error::Argument("FIR order must be at least 1".into()));
    }
    if order * p > rows {
        return Err(Error::Dimension(format!(
            "n·p = {}·{} exceeds N = {rows}",
            order, p
        )));
    }
    let mut phi = DMatrix::zeros(rows, order * p);
    for j in 0..order {
        let lag = j + 1;
        for i in 0..p {
            let (a, b) = h.segment(i);
            for t in (a + lag)..(b + lag).min(rows) {
                phi[(t, j * p + i)] = 1.0;
            }
        }
    }
    Ok(phi)
}

/// `θ` ordering used by [`build_phi`].
pub fn lift(q: &[f64], x: &[f64]) -> Vec<f64> {
    q.iter()
        .flat_map(|&qj| x.iter().map(move |&xi| qj * xi))
        .collect()
}

/// Strictly causal convolution `Σ_{k=1..n} q(k) o(t−k)`.
pub fn convolve(q: &[f64], o: &[f64]) -> Vec<f64> {
    (0..o.len())
        .map(|t| {
            q.iter()
                .enumerate()
                .take(t)
                .map(|(j, qj)| qj * o[t - j - 1])
                .sum()
        })
        .collect()
}

pub fn predict_output(q: &[f64], x: &[f64], h: &EventMatrix) -> Vec<f64> {
    convolve(q, &h.expand(x))
}

/// How the bilinear scale ambiguity `(c q, x / c)` is fixed in a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    /// `‖q‖₂ = 1` with the sign chosen so that `mean(x) ≥ 0`.
    #[default]
    UnitQNorm,
    /// Unit-norm normalisation followed by a positive rescale that brings the
    /// segment levels closest to whole numbers.
    IntegerSnap,
}

/// Log-spaced candidates for the integer-snap search.
///
/// The search covers `[c₀ / spread, c₀ · spread]` around a centre scale `c₀`.
/// With `first_tap` set (the expected first impulse-response coefficient, in
/// output units per person) the centre is the scale that gives `q` that
/// leading coefficient; otherwise the centre is 1.
///
/// Integrality alone cannot fix the scale: for any estimate there are much
/// larger scales at which every level lands near a whole number, so the
/// search is kept local.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnapGrid {
    pub first_tap: Option<f64>,
    pub spread: f64,
    pub points: usize,
}

impl Default for SnapGrid {
    fn default() -> Self {
        SnapGrid {
            first_tap: None,
            spread: 1.1,
            points: 201,
        }
    }
}

impl SnapGrid {
    /// Centre scale for unit-norm factors `q`.
    pub fn centre(&self, q: &[f64]) -> f64 {
        let Some(tap) = self.first_tap.filter(|t| *t > 0.0 && t.is_finite()) else {
            return 1.0;
        };
        let lead = match q.first() {
            Some(&v) if v > 0.0 => v,
            _ => q.iter().fold(0.0f64, |m, &v| m.max(v)),
        };
        if lead > 0.0 {
            lead / tap
        } else {
            1.0
        }
    }
}

pub fn resolve_scale(
    q: &[f64],
    x: &[f64],
    weights: &[f64],
    mode: ScaleMode,
    grid: &SnapGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate("impulse response is zero".into()));
    }
    let mean_x = x.iter().sum::<f64>();
    let s = if mean_x < 0.0 { -1.0 } else { 1.0 };
    let q1: Vec<f64> = q.iter().map(|v| v / norm * s).collect();
    let x1: Vec<f64> = x.iter().map(|v| v * norm * s).collect();
    match mode {
        ScaleMode::UnitQNorm => Ok((q1, x1)),
        ScaleMode::IntegerSnap => {
            let c = snap_scale(&x1, weights, grid.centre(&q1), grid);
            Ok((
                q1.iter().map(|v| v / c).collect(),
                x1.iter().map(|v| v * c).collect(),
            ))
        }
    }
}

/// Weighted squared distance of `c·x` to the nearest integers.
pub fn snap_cost(c: f64, x: &[f64], weights: &[f64]) -> f64 {
    x.iter()
        .zip(weights)
        .map(|(xi, w)| {
            let v = c * xi;
            w * (v - v.round()).powi(2)
        })
        .sum()
}

/// Grid minimiser of [`snap_cost`] around `centre`; the first grid point wins
/// ties, scanning outward from the centre.
pub fn snap_scale(x: &[f64], weights: &[f64], centre: f64, grid: &SnapGrid) -> f64 {
    assert_eq!(x.len(), weights.len());
    if x.iter().all(|&v| v == 0.0) || centre.is_nan() || centre <= 0.0 {
        return centre.max(f64::MIN_POSITIVE);
    }
    let half = grid.points.max(1) / 2;
    let step = grid.spread.max(1.0).ln() / half.max(1) as f64;
    let mut best = (snap_cost(centre, x, weights), centre);
    for i in 1..=half {
        for dir in [-1.0, 1.0] {
            let c = centre * (dir * step * i as f64).exp();
            let cost = snap_cost(c, x, weights);
            if cost < best.0 {
                best = (cost, c);
            }
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Kernel,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Kernel => "kernel",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "baseline" => Ok(Method::Baseline),
            "kernel" => Ok(Method::Kernel),
            other => Err(Error::Argument(format!(
                "unknown method `{other}` (valid methods: baseline, kernel)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// FIR order actually used.
    pub order: usize,
    pub marginal_likelihood: Option<f64>,
    pub hyper: Option<HyperParams>,
    /// Log marginal likelihood after each accepted hyperparameter update of
    /// the final kernel step.
    pub ml_trace: Vec<f64>,
    /// Rank of the lifted regressor (baseline only).
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindIdResult {
    pub method: Method,
    pub q: Vec<f64>,
    pub x: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub scale_mode: ScaleMode,
    pub diagnostics: Diagnostics,
}

impl BlindIdResult {
    /// Re-expresses the factors under another scale convention; `y_hat` is
    /// unchanged.
    pub fn rescaled(&self, mode: ScaleMode, weights: &[f64], grid: &SnapGrid) -> Result<Self> {
        let (q, x) = resolve_scale(&self.q, &self.x, weights, mode, grid)?;
        Ok(BlindIdResult {
            q,
            x,
            scale_mode: mode,
            ..self.clone()
        })
    }
}

pub(crate) fn zero_result(
    method: Method,
    problem: &BlindIdProblem,
    mode: ScaleMode,
) -> BlindIdResult {
    BlindIdResult {
        method,
        q: vec![0.0; problem.order],
        x: vec![0.0; problem.segments()],
        y_hat: vec![0.0; problem.samples()],
        scale_mode: mode,
        diagnostics: Diagnostics {
            converged: true,
            order: problem.order,
            ..Default::default()
        },
    }
}

pub(crate) fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn event_matrix_examples() {
        let h = build_event_matrix(&[2, 4], 4).unwrap().to_matrix();
        assert_eq!(
            h,
            DMatrix::from_row_slice(4, 2, &[1., 0., 1., 0., 0., 1., 0., 1.])
        );
        let h = build_event_matrix(&[3], 3).unwrap().to_matrix();
        assert_eq!(h, DMatrix::from_element(3, 1, 1.0));
        assert!(matches!(
            build_event_matrix(&[4, 2], 4),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            build_event_matrix(&[2, 3], 4),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn regressor_examples() {
        let o = build_regressor(&[1., 0., 0., 0.], 2);
        assert_eq!(
            o,
            DMatrix::from_row_slice(4, 2, &[0., 0., 1., 0., 0., 1., 0., 0.])
        );
        let o = build_regressor(&[1.; 5], 1);
        assert_eq!(o.column(0).as_slice(), &[0., 1., 1., 1., 1.]);
    }

    #[test]
    fn shift_and_single_block_phi() {
        assert_eq!(shift_down(&[1., 2., 3.], 1), vec![0., 1., 2.]);
        let h = build_event_matrix(&[2, 5], 5).unwrap();
        let phi = build_phi(&h, 1).unwrap();
        let hm = h.to_matrix();
        for i in 0..2 {
            assert_eq!(
                phi.column(i).as_slice(),
                shift_down(hm.column(i).as_slice(), 1).as_slice()
            );
        }
        assert!(matches!(build_phi(&h, 3), Err(Error::Dimension(_))));
    }

    #[test]
    fn scale_resolution() {
        let w = [30.0, 30.0, 30.0];
        let (q, x) = (vec![0.3, -0.1, 0.2], vec![1.0, 2.0, 0.5]);
        let q2: Vec<f64> = q.iter().map(|v| 2.0 * v).collect();
        let x2: Vec<f64> = x.iter().map(|v| v / 2.0).collect();
        let g = SnapGrid::default();
        let a = resolve_scale(&q, &x, &w, ScaleMode::UnitQNorm, &g).unwrap();
        let b = resolve_scale(&q2, &x2, &w, ScaleMode::UnitQNorm, &g).unwrap();
        for (u, v) in a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1)) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(matches!(
            resolve_scale(&[0.0; 3], &x, &w, ScaleMode::UnitQNorm, &g),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn integer_snap_recovers_near_integers() {
        let x = [1.98, 3.02, 0.0];
        let w = [40.0, 60.0, 20.0];
        let g = SnapGrid::default();
        let c = snap_scale(&x, &w, 1.0, &g);
        // Oracle: dense linear scan over the same interval.
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=200_000 {
            let c = 1.0 / g.spread + (g.spread - 1.0 / g.spread) * i as f64 / 200_000.0;
            let cost = snap_cost(c, &x, &w);
            if cost < best.0 {
                best = (cost, c);
            }
        }
        assert!((best.1 - 1.0).abs() < 0.01, "oracle picked {}", best.1);
        assert!((c - 1.0).abs() < 0.01, "grid picked {c}");
        let snapped: Vec<f64> = x.iter().map(|v| (v * c).round()).collect();
        assert_eq!(snapped, vec![2.0, 3.0, 0.0]);
    }

    #[test]
    fn snap_centre_follows_first_tap() {
        let q = [0.6, 0.8];
        let mut g = SnapGrid::default();
        assert_eq!(g.centre(&q), 1.0);
        g.first_tap = Some(3.0);
        assert!((g.centre(&q) - 0.2).abs() < 1e-15);
        assert!((g.centre(&[-0.6, 0.8]) - 0.8 / 3.0).abs() < 1e-15);

        // Levels 2 and 5 people hidden behind an arbitrary scale.
        let q: Vec<f64> = [3.0, 1.5].iter().map(|v| v * 0.37).collect();
        let x: Vec<f64> = [2.0, 5.0].iter().map(|v| v / 0.37).collect();
        let (q2, x2) = resolve_scale(&q, &x, &[10.0, 10.0], ScaleMode::IntegerSnap, &g).unwrap();
        assert!((q2[0] - 3.0).abs() < 1e-9, "{q2:?}");
        assert!(
            (x2[0] - 2.0).abs() < 1e-9 && (x2[1] - 5.0).abs() < 1e-9,
            "{x2:?}"
        );
    }

    #[test]
    fn method_parsing() {
        assert_eq!("kernel".parse::<Method>().unwrap(), Method::Kernel);
        let err = "fourier".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("baseline") && err.contains("kernel"));
    }

    fn events_strategy() -> impl Strategy<Value = (usize, Vec<usize>)> {
        (20usize..200, 1usize..=5).prop_flat_map(|(n, p)| {
            prop::collection::btree_set(1..n, p - 1).prop_map(move |s| {
                let mut ev: Vec<usize> = s.into_iter().collect();
                ev.push(n);
                (n, ev)
            })
        })
    }

    proptest! {
        #[test]
        fn phi_lift_matches_toeplitz(
            (n_samples, events) in events_strategy(),
            order in 1usize..=10,
            seed in prop::collection::vec(-1f64..1.0, 15),
        ) {
            let h = build_event_matrix(&events, n_samples).unwrap();
            let p = h.cols();
            prop_assume!(order * p <= n_samples);
            let q: Vec<f64> = (0..order).map(|j| seed[j % seed.len()] + 0.1 * j as f64).collect();
            let x: Vec<f64> = (0..p).map(|i| seed[(i + 7) % seed.len()] * 3.0).collect();
            let phi = build_phi(&h, order).unwrap();
            let lhs = &phi * DVector::from_vec(lift(&q, &x));
            let rhs = build_regressor(&h.expand(&x), order) * DVector::from_vec(q.clone());
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn convolution_matches_brute_force(
            o in prop::collection::vec(-5f64..5.0, 1..60),
            q in prop::collection::vec(-1f64..1.0, 1..12),
        ) {
            let fast = convolve(&q, &o);
            let reg = build_regressor(&o, q.len()) * DVector::from_vec(q.clone());
            for t in 0..o.len() {
                let mut direct = 0.0;
                for k in 1..=q.len() {
                    if t >= k {
                        direct += q[k - 1] * o[t - k];
                    }
                }
                prop_assert!((fast[t] - direct).abs() < 1e-12);
                prop_assert!((reg[t] - direct).abs() < 1e-12);
            }
        }

        #[test]
        fn prediction_invariant_to_bilinear_scale(
            q in prop::collection::vec(-1f64..1.0, 1..8),
            x in prop::collection::vec(0f64..10.0, 3),
            c in prop_oneof![-5f64..-0.1, 0.1f64..5.0],
        ) {
            let h = build_event_matrix(&[10, 25, 40], 40).unwrap();
            let a = predict_output(&q, &x, &h);
            let qc: Vec<f64> = q.iter().map(|v| v * c).collect();
            let xc: Vec<f64> = x.iter().map(|v| v / c).collect();
            let b = predict_output(&qc, &xc, &h);
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
            }
            prop_assert!(predict_output(&vec![0.0; q.len()], &x, &h).iter().all(|v| *v == 0.0));
        }
    }
}
