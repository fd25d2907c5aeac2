//! Kernel-regularised alternating estimator.
//!
//! Given the segment levels, the impulse response gets a zero-mean Gaussian
//! prior with stable-spline covariance `λ K(α)` and is estimated as the
//! posterior mean, with `(λ, α, σ²)` chosen by maximising the marginal
//! likelihood of the output. Given the impulse response, the levels solve a
//! nonnegative least-squares problem. The two steps alternate until the
//! predicted output settles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    convolve, nnls, predict_output, resolve_scale, to_vec, zero_result, BlindIdProblem,
    BlindIdResult, Diagnostics, EventMatrix, Method, ScaleMode, SnapGrid,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda: f64,
    pub alpha: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelOptions {
    pub max_iter: usize,
    /// Relative change of the predicted output that ends the iteration.
    pub tol: f64,
    pub lambda_range: (f64, f64),
    pub lambda_points: usize,
    pub alpha_range: (f64, f64),
    pub alpha_points: usize,
    /// Noise variance search range, as multiples of the FIR residual variance.
    pub sigma2_factor_range: (f64, f64),
    pub sigma2_points: usize,
    /// Pattern-search refinement after the grid pass.
    pub refine: bool,
    /// Decay rates of the exponential responses used to seed extra starts.
    pub start_decays: Vec<f64>,
    pub scale_mode: ScaleMode,
    pub snap: SnapGrid,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            max_iter: 100,
            tol: 1e-6,
            lambda_range: (1e-4, 1e4),
            lambda_points: 81,
            alpha_range: (0.5, 0.99),
            alpha_points: 50,
            sigma2_factor_range: (0.1, 10.0),
            sigma2_points: 21,
            refine: true,
            start_decays: vec![0.8, 0.9, 0.95],
            scale_mode: ScaleMode::UnitQNorm,
            snap: SnapGrid::default(),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// `K[s, t] = λ α^max(s, t)` with 1-based `s, t`.
pub fn stable_spline_gram(n: usize, lambda: f64, alpha: f64) -> Result<DMatrix<f64>> {
    check_alpha(alpha)?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Argument(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |s, t| {
        lambda * alpha.powi(s.max(t) as i32 + 1)
    }))
}

/// Exact factor `L` with `L Lᵀ = α^max(s, t)`.
///
/// `α^max(s,t) = Σ_{j ≥ max(s,t)} c_j` with `c_j = α^j − α^{j+1}` for `j < n`
/// and `c_n = α^n`, so `L[s, j] = √c_j` for `s ≤ j`.
fn stable_spline_factor(n: usize, alpha: f64) -> DMatrix<f64> {
    let c: Vec<f64> = (1..=n)
        .map(|j| {
            if j < n {
                alpha.powi(j as i32) * (1.0 - alpha)
            } else {
                alpha.powi(n as i32)
            }
        })
        .map(f64::sqrt)
        .collect();
    DMatrix::from_fn(n, n, |s, j| if s <= j { c[j] } else { 0.0 })
}

/// Sufficient statistics of the Gaussian model `y = O q + e` for a fixed
/// regressor.
struct GpModel {
    oto: DMatrix<f64>,
    oty: DVector<f64>,
    yty: f64,
    samples: usize,
}

/// Eigen-decomposition of `Lᵀ OᵀO L` for one value of `α`.
struct AlphaCache {
    alpha: f64,
    factor: DMatrix<f64>,
    basis: DMatrix<f64>,
    eig: DVector<f64>,
    proj: DVector<f64>,
}

impl GpModel {
    fn new(o: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        GpModel {
            oto: o.tr_mul(o),
            oty: o.tr_mul(y),
            yty: y.norm_squared(),
            samples: y.len(),
        }
    }

    fn order(&self) -> usize {
        self.oto.nrows()
    }

    fn cache(&self, alpha: f64) -> AlphaCache {
        let factor = stable_spline_factor(self.order(), alpha);
        let m = factor.tr_mul(&self.oto) * &factor;
        let m = (&m + m.transpose()) * 0.5;
        let eigen = m.symmetric_eigen();
        let eig = eigen.eigenvalues.map(|d| d.max(0.0));
        let proj = eigen.eigenvectors.tr_mul(&factor.tr_mul(&self.oty));
        AlphaCache {
            alpha,
            factor,
            basis: eigen.eigenvectors,
            eig,
            proj,
        }
    }

    /// Log marginal likelihood of `y ~ N(0, σ² I + λ O K Oᵀ)`.
    fn log_ml(&self, c: &AlphaCache, lambda: f64, sigma2: f64) -> f64 {
        let mut logdet = self.samples as f64 * sigma2.ln();
        let mut explained = 0.0;
        for (d, b) in c.eig.iter().zip(c.proj.iter()) {
            logdet += (1.0 + lambda * d / sigma2).ln();
            explained += lambda * b * b / (sigma2 + lambda * d);
        }
        let quad = (self.yty - explained).max(0.0) / sigma2;
        -0.5 * (quad + logdet + self.samples as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    /// Posterior mean `λ K Oᵀ (λ O K Oᵀ + σ² I)⁻¹ y`, computed in `n` dimensions.
    fn posterior_mean(&self, c: &AlphaCache, lambda: f64, sigma2: f64) -> DVector<f64> {
        let ratio = sigma2 / lambda;
        let w = DVector::from_fn(c.eig.len(), |i, _| c.proj[i] / (ratio + c.eig[i]));
        &c.factor * (&c.basis * w)
    }

    /// Residual variance of the unregularised FIR fit.
    fn fir_residual_variance(&self) -> f64 {
        let n = self.order();
        let floor = 1e-8 * self.yty / self.samples as f64;
        if self.samples <= n {
            return (self.yty / self.samples as f64).max(floor);
        }
        let (q, _) = super::lstsq(&self.oto, &self.oty, 1e-12);
        let rss = self.yty - 2.0 * q.dot(&self.oty) + q.dot(&(&self.oto * &q));
        (rss / (self.samples - n) as f64).max(floor)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |i| a + (b - a) * i as f64 / (n - 1) as f64)
}

struct HyperSearch {
    best: HyperParams,
    best_ml: f64,
    cache: AlphaCache,
    trace: Vec<f64>,
}

/// Grid pass followed by pattern refinement. With `warm` set and refinement
/// enabled, the grid pass is skipped and the search starts from `warm`.
fn search_hyper(model: &GpModel, opts: &KernelOptions, warm: Option<HyperParams>) -> HyperSearch {
    let sigma2_0 = model.fir_residual_variance();
    let (la, lb) = (opts.lambda_range.0.ln(), opts.lambda_range.1.ln());
    let (sa, sb) = (
        opts.sigma2_factor_range.0.ln(),
        opts.sigma2_factor_range.1.ln(),
    );
    let (aa, ab) = opts.alpha_range;

    let mut trace = Vec::new();
    let warm = warm.filter(|_| opts.refine).map(|w| {
        let hp = HyperParams {
            lambda: w.lambda.clamp(opts.lambda_range.0, opts.lambda_range.1),
            alpha: w.alpha.clamp(aa, ab),
            sigma2: w.sigma2.clamp(sigma2_0 * sa.exp(), sigma2_0 * sb.exp()),
        };
        let ml = model.log_ml(&model.cache(hp.alpha), hp.lambda, hp.sigma2);
        trace.push(ml);
        (hp, ml, hp.alpha)
    });
    let mut best: Option<(HyperParams, f64, f64)> = warm;
    if warm.is_none() {
        for alpha in linspace(aa, ab, opts.alpha_points) {
            let cache = model.cache(alpha);
            for ll in linspace(la, lb, opts.lambda_points) {
                for ls in linspace(sa, sb, opts.sigma2_points) {
                    let (lambda, sigma2) = (ll.exp(), sigma2_0 * ls.exp());
                    let ml = model.log_ml(&cache, lambda, sigma2);
                    if best.is_none_or(|b| ml > b.1) {
                        trace.push(ml);
                        best = Some((
                            HyperParams {
                                lambda,
                                alpha,
                                sigma2,
                            },
                            ml,
                            alpha,
                        ));
                    }
                }
            }
        }
    }
    let (mut hp, mut best_ml, alpha) = best.expect("grids are nonempty");
    let mut cache = model.cache(alpha);

    if opts.refine {
        // Coordinate pattern search in (ln λ, α, ln σ²); only improvements
        // are accepted.
        let mut steps = [
            (lb - la) / (opts.lambda_points.max(2) - 1) as f64,
            (ab - aa) / (opts.alpha_points.max(2) - 1) as f64,
            (sb - sa) / (opts.sigma2_points.max(2) - 1) as f64,
        ];
        let min_steps = steps.map(|s| s * 1e-3);
        let mut evals = 0;
        while evals < 400 && steps.iter().zip(&min_steps).any(|(s, m)| s > m) {
            let mut improved = false;
            for coord in 0..3 {
                for dir in [1.0, -1.0] {
                    let mut cand = hp;
                    match coord {
                        0 => cand.lambda = (hp.lambda.ln() + dir * steps[0]).clamp(la, lb).exp(),
                        1 => cand.alpha = (hp.alpha + dir * steps[1]).clamp(aa, ab),
                        _ => {
                            cand.sigma2 = (hp.sigma2.ln() + dir * steps[2])
                                .clamp(sigma2_0.ln() + sa, sigma2_0.ln() + sb)
                                .exp()
                        }
                    }
                    if cand == hp {
                        continue;
                    }
                    let cand_cache;
                    let c = if cand.alpha == cache.alpha {
                        &cache
                    } else {
                        cand_cache = model.cache(cand.alpha);
                        &cand_cache
                    };
                    let ml = model.log_ml(c, cand.lambda, cand.sigma2);
                    evals += 1;
                    if ml > best_ml {
                        best_ml = ml;
                        hp = cand;
                        trace.push(ml);
                        if cand.alpha != cache.alpha {
                            cache = model.cache(cand.alpha);
                        }
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                steps.iter_mut().for_each(|s| *s *= 0.5);
            }
        }
    }
    HyperSearch {
        best: hp,
        best_ml,
        cache,
        trace,
    }
}

/// Log marginal likelihood evaluated with explicit `N × N` matrices.
pub fn marginal_likelihood_direct(
    o: &DMatrix<f64>,
    y: &DVector<f64>,
    hp: &HyperParams,
) -> Result<f64> {
    let k = stable_spline_gram(o.ncols(), hp.lambda, hp.alpha)?;
    let sigma = o * k * o.transpose() + DMatrix::identity(y.len(), y.len()) * hp.sigma2;
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Arithmetic("output covariance is not positive definite".into()))?;
    let alpha = chol.solve(y);
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (y.dot(&alpha) + logdet + y.len() as f64 * (2.0 * std::f64::consts::PI).ln()))
}

/// Columns `Σ_k q_k S^k h_i`, so that the output equals `G x`.
fn level_regressor(q: &[f64], h: &EventMatrix) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(h.rows(), h.cols());
    let mut indicator = vec![0.0; h.rows()];
    for i in 0..h.cols() {
        let (a, b) = h.segment(i);
        indicator.iter_mut().for_each(|v| *v = 0.0);
        indicator[a..b].iter_mut().for_each(|v| *v = 1.0);
        let col = convolve(q, &indicator);
        g.set_column(i, &DVector::from_vec(col));
    }
    g
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

struct Run {
    q: Vec<f64>,
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
    search: Option<HyperSearch>,
}

fn alternate(
    h: &EventMatrix,
    n: usize,
    ys: &DVector<f64>,
    x0: Vec<f64>,
    opts: &KernelOptions,
) -> Run {
    let mut x = x0;
    let mut q = vec![0.0; n];
    let mut y_prev: Option<DVector<f64>> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_search: Option<HyperSearch> = None;

    for it in 1..=opts.max_iter {
        iterations = it;
        let o = h.expand(&x);
        let r = rms(&o);
        if r == 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= r);
        let o: Vec<f64> = o.iter().map(|v| v / r).collect();

        let model = GpModel::new(&super::build_regressor(&o, n), ys);
        let search = search_hyper(&model, opts, last_search.as_ref().map(|s| s.best));
        q = to_vec(&model.posterior_mean(&search.cache, search.best.lambda, search.best.sigma2));
        last_search = Some(search);

        let g = level_regressor(&q, h);
        let x_new = nnls(&g, ys);
        if x_new.iter().all(|&v| v == 0.0) {
            break;
        }
        let y_hat = &g * &x_new;
        x = to_vec(&x_new);
        let settled = y_prev.as_ref().is_some_and(|prev| {
            (&y_hat - prev).norm() <= opts.tol * y_hat.norm().max(f64::MIN_POSITIVE)
        });
        y_prev = Some(y_hat);
        if settled {
            converged = true;
            break;
        }
    }
    Run {
        q,
        x,
        iterations,
        converged,
        search: last_search,
    }
}

pub fn kernel_identify(problem: &BlindIdProblem, opts: &KernelOptions) -> Result<BlindIdResult> {
    let h = problem.event_matrix();
    let n = problem.order;
    if n > problem.samples() {
        return Err(Error::Dimension(format!(
            "FIR order {n} exceeds the {} available samples",
            problem.samples()
        )));
    }
    let y_scale = rms(&problem.y);
    if y_scale == 0.0 {
        return Ok(zero_result(Method::Kernel, problem, opts.scale_mode));
    }
    let ys = DVector::from_iterator(problem.samples(), problem.y.iter().map(|v| v / y_scale));

    // Deterministic starts: flat levels, then levels fitted under a few
    // exponentially decaying responses. The run with the highest marginal
    // likelihood wins.
    let mut starts = vec![vec![1.0; h.cols()]];
    for &decay in &opts.start_decays {
        let q0: Vec<f64> = (0..n).map(|k| decay.powi(k as i32)).collect();
        let x0 = to_vec(&nnls(&level_regressor(&q0, &h), &ys));
        if x0.iter().any(|&v| v > 0.0) {
            starts.push(x0);
        }
    }
    let mut best: Option<Run> = None;
    for x0 in starts {
        let run = alternate(&h, n, &ys, x0, opts);
        let better = match (&best, &run.search) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(b), Some(s)) => b.search.as_ref().is_none_or(|bs| s.best_ml > bs.best_ml),
        };
        if better {
            best = Some(run);
        }
    }
    let Run {
        q,
        x,
        iterations,
        converged,
        search: last_search,
    } = best.expect("at least one start");

    let q_out: Vec<f64> = q.iter().map(|v| v * y_scale).collect();
    let weights: Vec<f64> = h.segment_lengths().iter().map(|&l| l as f64).collect();
    let (q_out, x_out) = if q_out.iter().all(|&v| v == 0.0) {
        (q_out, vec![0.0; h.cols()])
    } else {
        resolve_scale(&q_out, &x, &weights, opts.scale_mode, &opts.snap)?
    };
    let y_hat = predict_output(&q_out, &x_out, &h);
    let (hyper, ml, trace) = match last_search {
        Some(s) => (Some(s.best), Some(s.best_ml), s.trace),
        None => (None, None, Vec::new()),
    };
    Ok(BlindIdResult {
        method: Method::Kernel,
        q: q_out,
        x: x_out,
        y_hat,
        scale_mode: opts.scale_mode,
        diagnostics: Diagnostics {
            iterations,
            converged,
            order: n,
            marginal_likelihood: ml,
            hyper,
            ml_trace: trace,
            rank: None,
        },
    })
}
