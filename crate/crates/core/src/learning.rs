//! Projected gradient training through the unrolled discrete dynamics.
//!
//! The forward map is smooth in the weights for every expression (the
//! linear excitation makes the reset a quadratic in `u`, differentiated
//! exactly — no surrogate gradient), so the loss gradient is computed by
//! reverse accumulation through the step sequence. A central-difference
//! mode serves as the independent oracle. Each gradient step is followed
//! by a norm projection, keeping every iterate inside the `M_w` ball.

use crate::network::{forward, Expression, Matrix, MultiTrace, Network, SimulationRecord};
use crate::neuron::{Kernel, Trace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    UnrolledAdjoint,
    FiniteDifference,
}

/// Which grid points enter the per-epoch loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batch {
    Full,
    /// Sliding window of the given length, cycling deterministically
    /// across epochs. The forward pass always runs from t = 0 so the
    /// state entering the window is exact.
    Window(usize),
}

/// Loss family. Only least squares is implemented; its capacity-bound
/// constants come from [`lsq_constants`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch: Batch,
    pub loss: Loss,
    pub seed: u64,
    pub gradient_mode: GradientMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-2,
            batch: Batch::Full,
            loss: Loss::LeastSquares,
            seed: 0,
            gradient_mode: GradientMode::UnrolledAdjoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub final_train_error: f64,
    /// Post-update loss after each epoch; recorded, not required to be
    /// monotone.
    pub error_curve: Vec<f64>,
    /// Wall-clock seconds (diagnostic; excluded from determinism checks).
    pub elapsed: f64,
}

/// Mean squared difference over the common grid.
///
/// On the clipped range `[−N_f, N_f]` the loss is `4·N_f`-Lipschitz in
/// its first argument and bounded by `4·N_f²`; see [`lsq_constants`].
pub fn loss_lsq(pred: &Trace, target: &Trace) -> Result<f64> {
    if !pred.same_grid(target) {
        return Err(Error::GridMismatch(format!(
            "loss_lsq: pred (t0={}, dt={}, len={}) vs target (t0={}, dt={}, len={})",
            pred.t0(),
            pred.dt(),
            pred.len(),
            target.t0(),
            target.dt(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    Ok(pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / n)
}

/// Lipschitz constant and ceiling of the least-squares loss on
/// `[−N_f, N_f]²`: `(L_ℏ, M_ℏ) = (4·N_f, 4·N_f²)`.
pub fn lsq_constants(n_f: f64) -> (f64, f64) {
    (4.0 * n_f, 4.0 * n_f * n_f)
}

/// Per-layer backward bookkeeping.
struct Pending {
    /// Adjoint of the post-reset potential carried into the next step
    /// (DEF / EID / DTA / GsF).
    ur: Vec<f64>,
    /// Adjoint of this step's aggregate as seen by the next GsF step.
    a_prev: Vec<f64>,
    /// γ·λ_H flowing into the previous step's self-history (SRM).
    h: Vec<f64>,
    /// γ·λ_H flowing into the previous step's own spikes (SRM).
    s_from_h: Vec<f64>,
    /// β·λ_P flowing into the previous step's presynaptic accumulator.
    p: Vec<f64>,
}

impl Pending {
    fn zeros(width: usize) -> Self {
        Self {
            ur: vec![0.0; width],
            a_prev: vec![0.0; width],
            h: vec![0.0; width],
            s_from_h: vec![0.0; width],
            p: vec![0.0; width],
        }
    }
}

/// Reverse accumulation of `dJ/dW` for a scalar objective `J` whose
/// derivative with respect to the (single-channel) output trace is
/// `output_grad[k]`.
///
/// This is the shared machinery behind the least-squares [`gradient`]
/// and the sign-correlation objective of the Rademacher estimator.
pub fn trace_functional_gradient(
    net: &Network,
    input: &MultiTrace,
    output_grad: &[f64],
) -> Result<Vec<Matrix>> {
    let cfg = &net.config;
    if cfg.output_width() != 1 {
        return Err(Error::InvalidArgument(format!(
            "trace objectives need output width 1, got {}",
            cfg.output_width()
        )));
    }
    let record = forward(net, input)?;
    if output_grad.len() != record.output.len() {
        return Err(Error::GridMismatch(format!(
            "output_grad length {} vs trace length {}",
            output_grad.len(),
            record.output.len()
        )));
    }
    Ok(adjoint(net, input, &record, output_grad))
}

fn adjoint(
    net: &Network,
    input: &MultiTrace,
    record: &SimulationRecord,
    output_grad: &[f64],
) -> Vec<Matrix> {
    let cfg = &net.config;
    let p = &cfg.params;
    let depth = cfg.depth();
    let k_len = record.output.len();
    let dt = cfg.dt;
    let alpha = (-dt / p.tau_m).exp();
    let u_f = p.u_firing;

    let (eta_scale, gamma, eps_scale, beta) = match cfg.kernels {
        Some(k) => {
            let (Kernel::ExpDecay { scale: es, tau: et }, Kernel::ExpDecay { scale: ps, tau: pt }) =
                (k.eta, k.epsilon);
            (es, (-dt / et).exp(), ps, (-dt / pt).exp())
        }
        None => (0.0, 0.0, 0.0, 0.0),
    };
    let gsf_c = p.tau_r / p.tau_m * dt / 2.0;

    let clipped: Vec<Vec<f64>> = input
        .channels()
        .iter()
        .map(|c| c.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
        .collect();
    // Spikes of the layer below at step k.
    let below = |l: usize, k: usize| -> Vec<f64> {
        if l == 0 {
            clipped.iter().map(|c| c[k]).collect()
        } else {
            record.layer_spikes[l - 1].column(k)
        }
    };

    let mut grads: Vec<Matrix> = net
        .weights()
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut pend: Vec<Pending> = (1..=depth).map(|l| Pending::zeros(cfg.widths[l])).collect();

    for k in (1..k_len).rev() {
        // Adjoint of the spikes flowing down from the layer above.
        let mut from_above: Vec<f64> = Vec::new();
        for l in (0..depth).rev() {
            let width = cfg.widths[l + 1];
            let u_k = record.layer_potentials[l].column(k);

            let mut lam_s = vec![0.0; width];
            if l == depth - 1 {
                lam_s[0] += output_grad[k];
            } else {
                for (i, v) in from_above.iter().enumerate() {
                    lam_s[i] += v;
                }
            }
            if cfg.expression == Expression::Srm {
                for i in 0..width {
                    lam_s[i] += pend[l].s_from_h[i];
                }
            }

            let mut lam_a = vec![0.0; width];
            match cfg.expression {
                Expression::Def | Expression::Eid | Expression::Dta | Expression::Gsf => {
                    let d_state = match cfg.expression {
                        Expression::Dta => 1.0 - dt / p.tau_m,
                        _ => alpha,
                    };
                    let d_agg = match cfg.expression {
                        Expression::Def | Expression::Eid => p.tau_r * (1.0 - alpha),
                        Expression::Dta => dt * p.tau_r / p.tau_m,
                        Expression::Gsf => gsf_c,
                        Expression::Srm => unreachable!(),
                    };
                    for i in 0..width {
                        // Reset derivative: d/du[(1−u/u_f)·u + (u/u_f)·u_reset].
                        let reset_du = 1.0 - 2.0 * u_k[i] / u_f + p.u_reset / u_f;
                        let lam_u = lam_s[i] / u_f + pend[l].ur[i] * reset_du;
                        lam_a[i] = d_agg * lam_u;
                        if cfg.expression == Expression::Gsf {
                            lam_a[i] += pend[l].a_prev[i];
                            pend[l].a_prev[i] = alpha * gsf_c * lam_u;
                        }
                        pend[l].ur[i] = d_state * lam_u;
                    }
                }
                Expression::Srm => {
                    for i in 0..width {
                        let lam_u = lam_s[i] / u_f;
                        let lam_h = eta_scale * lam_u + pend[l].h[i];
                        let lam_p = eps_scale * lam_u + pend[l].p[i];
                        lam_a[i] = lam_p;
                        pend[l].h[i] = gamma * lam_h;
                        pend[l].s_from_h[i] = gamma * lam_h;
                        pend[l].p[i] = beta * lam_p;
                    }
                }
            }

            let s_below = below(l, k);
            grads[l].add_outer(&lam_a, &s_below);
            if l > 0 {
                from_above = net.weights()[l].matvec_t(&lam_a).expect("shapes fixed");
            }
        }
    }

    // Grid index 0: potentials are the constant u_init, but the SRM
    // presynaptic accumulator and the GsF trapezoid both taste the
    // initial aggregate.
    for l in 0..depth {
        let lam_a0: Vec<f64> = match cfg.expression {
            Expression::Srm => pend[l].p.clone(),
            Expression::Gsf => pend[l].a_prev.clone(),
            _ => continue,
        };
        let s_below = below(l, 0);
        grads[l].add_outer(&lam_a0, &s_below);
    }

    grads
}

fn lsq_output_grad(
    record: &SimulationRecord,
    target: &Trace,
    window: Option<(usize, usize)>,
) -> Result<Vec<f64>> {
    let pred = record.output.channel(0);
    if pred.len() != target.len() {
        return Err(Error::GridMismatch(format!(
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        )));
    }
    let (lo, hi) = window.unwrap_or((0, pred.len() - 1));
    let count = (hi - lo + 1) as f64;
    let mut g = vec![0.0; pred.len()];
    for k in lo..=hi {
        g[k] = 2.0 * (pred[k] - target.values()[k]) / count;
    }
    Ok(g)
}

fn gradient_windowed(
    net: &Network,
    input: &MultiTrace,
    target: &Trace,
    cfg: &TrainConfig,
    window: Option<(usize, usize)>,
) -> Result<Vec<Matrix>> {
    match cfg.gradient_mode {
        GradientMode::UnrolledAdjoint => {
            let record = forward(net, input)?;
            let g = lsq_output_grad(&record, target, window)?;
            Ok(adjoint(net, input, &record, &g))
        }
        GradientMode::FiniteDifference => {
            let h = 1e-5;
            let eval = |n: &Network| -> Result<f64> {
                let record = forward(n, input)?;
                let pred = record.output.channel(0);
                let (lo, hi) = window.unwrap_or((0, pred.len() - 1));
                let count = (hi - lo + 1) as f64;
                Ok((lo..=hi)
                    .map(|k| {
                        let r = pred[k] - target.values()[k];
                        r * r
                    })
                    .sum::<f64>()
                    / count)
            };
            let mut grads = Vec::with_capacity(net.weights().len());
            for l in 0..net.weights().len() {
                let w = &net.weights()[l];
                let mut g = Matrix::zeros(w.rows(), w.cols());
                for idx in 0..w.data().len() {
                    let mut plus = net.clone();
                    plus.weights_mut()[l].data_mut()[idx] += h;
                    let mut minus = net.clone();
                    minus.weights_mut()[l].data_mut()[idx] -= h;
                    g.data_mut()[idx] = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
                }
                grads.push(g);
            }
            Ok(grads)
        }
    }
}

/// `∂loss/∂w^(l)` for every layer under the configured mode.
pub fn gradient(
    net: &Network,
    input: &MultiTrace,
    target: &Trace,
    cfg: &TrainConfig,
) -> Result<Vec<Matrix>> {
    gradient_windowed(net, input, target, cfg, None)
}

/// Runs `epochs` steps of `w ← w − lr·grad` followed by norm projection,
/// recording the post-update full-trace loss after each epoch.
pub fn train(
    net: &Network,
    input: &MultiTrace,
    target: &Trace,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    if cfg.epochs == 0 {
        return Err(Error::InvalidParam("train needs epochs ≥ 1".into()));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParam(format!(
            "learning rate must be > 0, got {}",
            cfg.learning_rate
        )));
    }
    if let Batch::Window(w) = cfg.batch {
        if w == 0 || w > target.len() {
            return Err(Error::InvalidParam(format!(
                "window length {w} outside 1..={}",
                target.len()
            )));
        }
    }
    let start = std::time::Instant::now();
    let mut current = net.clone();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let window = match cfg.batch {
            Batch::Full => None,
            Batch::Window(w) => {
                let positions = target.len() - w + 1;
                let lo = (epoch * w) % positions;
                Some((lo, lo + w - 1))
            }
        };
        let grads = gradient_windowed(&current, input, target, cfg, window)?;
        for (wm, g) in current.weights_mut().iter_mut().zip(&grads) {
            wm.add_scaled(g, -cfg.learning_rate);
        }
        current = current.project_weights();
        let record = forward(&current, input)?;
        let err = loss_lsq(&record.output.channel_trace(0), target)?;
        if !err.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss became {err} at epoch {epoch}"
            )));
        }
        curve.push(err);
    }
    let report = TrainReport {
        final_train_error: *curve.last().unwrap(),
        error_curve: curve,
        elapsed: start.elapsed().as_secs_f64(),
    };
    Ok((current, report))
}
