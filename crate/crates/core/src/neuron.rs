//! Single-neuron membrane dynamics.
//!
//! Five equivalent-in-spirit expressions of the leaky integrate-and-fire
//! update are provided:
//!
//! * [`step_def`] — the differential form `τ_m du/dt = −(u − u_rest) + τ_r f_agg`,
//!   advanced by the exponential-Euler rule (exact for input held constant
//!   over the step);
//! * [`eval_eid`] — the exponential-integral closed form;
//! * [`step_dta`] — the literal forward-Euler discretization;
//! * [`eval_gsf`] — the Green's-function convolution with kernel
//!   `h(t) = (τ_r/τ_m)·exp(−t/τ_m)`, integrated by the trapezoidal rule;
//! * [`eval_srm`] — spike-response kernel sums over self and presynaptic
//!   spike events.
//!
//! Spike emission uses the linear excitation `s = u / u_firing`
//! ([`excite`]) and the post-spike map `u ← (1−s)·u + s·u_reset`
//! ([`reset`]). All functions here are pure; every type is an immutable
//! value.

use crate::{Error, Result};

/// Scalar constants of a spiking neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronParams {
    /// Membrane time constant `τ_m` (> 0).
    pub tau_m: f64,
    /// Membrane resistance factor `τ_r` (> 0).
    pub tau_r: f64,
    /// Rest potential `u_rest`.
    pub u_rest: f64,
    /// Firing threshold `u_firing` (> 0).
    pub u_firing: f64,
    /// Post-spike potential `u_reset` (≤ `u_firing`).
    pub u_reset: f64,
    /// Initial potential `u_init`.
    pub u_init: f64,
}

impl NeuronParams {
    pub fn new(
        tau_m: f64,
        tau_r: f64,
        u_rest: f64,
        u_firing: f64,
        u_reset: f64,
        u_init: f64,
    ) -> Result<Self> {
        let p = Self {
            tau_m,
            tau_r,
            u_rest,
            u_firing,
            u_reset,
            u_init,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0) || !self.tau_m.is_finite() {
            return Err(Error::InvalidParam(format!("tau_m must be > 0, got {}", self.tau_m)));
        }
        if !(self.tau_r > 0.0) || !self.tau_r.is_finite() {
            return Err(Error::InvalidParam(format!("tau_r must be > 0, got {}", self.tau_r)));
        }
        if !(self.u_firing > 0.0) || !self.u_firing.is_finite() {
            return Err(Error::InvalidParam(format!(
                "u_firing must be > 0, got {}",
                self.u_firing
            )));
        }
        if self.u_reset > self.u_firing {
            return Err(Error::InvalidParam(format!(
                "u_reset ({}) must not exceed u_firing ({})",
                self.u_reset, self.u_firing
            )));
        }
        Ok(())
    }
}

impl Default for NeuronParams {
    fn default() -> Self {
        // The linear excite/reset pair amplifies potentials driven far
        // below zero (the post-reset map is u − u²/u_firing); the basin
        // of contraction scales with u_firing, so these constants keep
        // unit-scale pulse drives inside it at dt = 1.
        Self {
            tau_m: 2.0,
            tau_r: 1.0,
            u_rest: 0.0,
            u_firing: 2.0,
            u_reset: 0.0,
            u_init: 0.0,
        }
    }
}

/// Densely sampled real-valued signal on a uniform time grid.
///
/// Index `k` maps to time `t0 + k·dt` exactly; times are never formed by
/// repeated addition.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl Trace {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParam(format!("trace dt must be > 0, got {dt}")));
        }
        if values.is_empty() {
            return Err(Error::InvalidParam("trace needs at least one sample".into()));
        }
        Ok(Self { t0, dt, values })
    }

    pub fn constant(t0: f64, dt: f64, len: usize, value: f64) -> Result<Self> {
        Self::new(t0, dt, vec![value; len])
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: length ≥ 1
    }

    /// Time of sample `k`, computed as `t0 + k·dt`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// End of the spanned interval, `t0 + (len−1)·dt`.
    pub fn t_end(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    pub fn duration(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// True when the two traces share `t0`, `dt`, and length.
    pub fn same_grid(&self, other: &Trace) -> bool {
        self.t0 == other.t0 && self.dt == other.dt && self.values.len() == other.values.len()
    }

    /// Contiguous sub-trace over sample indices `[start, end]` (inclusive).
    pub fn slice(&self, start: usize, end: usize) -> Result<Trace> {
        if start > end || end >= self.values.len() {
            return Err(Error::InvalidArgument(format!(
                "slice [{start}, {end}] out of bounds for trace of length {}",
                self.values.len()
            )));
        }
        Trace::new(self.time(start), self.dt, self.values[start..=end].to_vec())
    }
}

/// Timestamped spike events with real amplitudes.
///
/// Times are strictly increasing and nonnegative; a kernel sum weights
/// each event's kernel contribution by its amplitude, so unit amplitudes
/// recover the plain kernel sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeEvents {
    times: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl SpikeEvents {
    pub fn new(times: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if times.len() != amplitudes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} spike times vs {} amplitudes",
                times.len(),
                amplitudes.len()
            )));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParam(format!(
                    "spike times must be strictly increasing (index {i}: {} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&first) = times.first() {
            if first < 0.0 {
                return Err(Error::InvalidParam(format!("spike time {first} precedes 0")));
            }
        }
        Ok(Self { times, amplitudes })
    }

    pub fn empty() -> Self {
        Self {
            times: Vec::new(),
            amplitudes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.amplitudes.iter().copied())
    }
}

/// Response-kernel descriptor. Causal: evaluates to 0 for `t < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `scale · exp(−t/tau)` for `t ≥ 0`.
    ExpDecay { scale: f64, tau: f64 },
}

impl Kernel {
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            Kernel::ExpDecay { scale, tau } => scale * (-t / tau).exp(),
        }
    }

    /// Lipschitz constant on `[0, ∞)`: the slope magnitude at `t = 0`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Kernel::ExpDecay { scale, tau } => scale.abs() / tau,
        }
    }

    fn tau(&self) -> f64 {
        match *self {
            Kernel::ExpDecay { tau, .. } => tau,
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            Kernel::ExpDecay { scale, .. } => scale,
        }
    }
}

/// Spike-response kernel pair: `eta` for the neuron's own past spikes
/// (reset-like, negative), `epsilon` for presynaptic spikes (positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrmKernels {
    pub eta: Kernel,
    pub epsilon: Kernel,
    /// Declared Lipschitz constant of `eta` on `[0, T]`.
    pub l_eta: f64,
    /// Declared Lipschitz constant of `epsilon` on `[0, T]`.
    pub l_epsilon: f64,
}

impl SrmKernels {
    pub fn new(eta: Kernel, epsilon: Kernel) -> Result<Self> {
        if !(eta.tau() > 0.0) || !(epsilon.tau() > 0.0) {
            return Err(Error::InvalidParam("kernel tau must be > 0".into()));
        }
        if eta.scale() >= 0.0 {
            return Err(Error::InvalidParam(format!(
                "eta is a reset kernel and must have negative scale, got {}",
                eta.scale()
            )));
        }
        if epsilon.scale() <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "epsilon must have positive scale, got {}",
                epsilon.scale()
            )));
        }
        Ok(Self {
            l_eta: eta.lipschitz(),
            l_epsilon: epsilon.lipschitz(),
            eta,
            epsilon,
        })
    }

    /// Kernels whose impulse responses mirror the differential-form
    /// dynamics: a unit presynaptic spike injects `(τ_r/τ_m)·exp(−t/τ_m)`
    /// (the Green's-function kernel) and a unit self-spike removes the
    /// threshold-to-reset drop with the same decay.
    pub fn lif_matched(params: &NeuronParams) -> Self {
        let eta = Kernel::ExpDecay {
            scale: -(params.u_firing - params.u_reset),
            tau: params.tau_m,
        };
        let epsilon = Kernel::ExpDecay {
            scale: params.tau_r / params.tau_m,
            tau: params.tau_m,
        };
        Self::new(eta, epsilon).expect("matched kernels are valid by construction")
    }
}

/// Spike excitation `s = u / u_firing`.
pub fn excite(u: f64, params: &NeuronParams) -> f64 {
    u / params.u_firing
}

/// Post-spike potential `(1 − s)·u + s·u_reset`.
pub fn reset(u: f64, s: f64, params: &NeuronParams) -> f64 {
    (1.0 - s) * u + s * params.u_reset
}

/// Advances the differential form by one exponential-Euler step with
/// `f_agg` held constant: `u' = u_eq + (u − u_eq)·exp(−dt/τ_m)` where
/// `u_eq = u_rest + τ_r·f_agg`.
pub fn step_def(u: f64, f_agg: f64, dt: f64, params: &NeuronParams) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step_def needs dt > 0, got {dt}")));
    }
    let u_eq = params.u_rest + params.tau_r * f_agg;
    Ok(u_eq + (u - u_eq) * (-dt / params.tau_m).exp())
}

/// Exponential-integral closed form from state `u_t0` at `t0` under
/// constant aggregate input.
pub fn eval_eid(t: f64, t0: f64, u_t0: f64, f_agg: f64, params: &NeuronParams) -> Result<f64> {
    if t < t0 {
        return Err(Error::InvalidArgument(format!("eval_eid needs t ≥ t0, got t={t} < t0={t0}")));
    }
    let decay = (-(t - t0) / params.tau_m).exp();
    Ok(params.u_rest + (u_t0 - params.u_rest) * decay + params.tau_r * f_agg * (1.0 - decay))
}

/// One forward-Euler step of the discrete-time approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtaStep {
    pub u: f64,
    /// Set when `dt/τ_m ≥ 1`, the instability region of forward Euler.
    pub unstable: bool,
}

/// `u + (dt/τ_m)·[−(u − u_rest) + τ_r·f_agg]`, the literal forward-Euler
/// update (no exponential substitution).
pub fn step_dta(u: f64, f_agg: f64, dt: f64, params: &NeuronParams) -> Result<DtaStep> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step_dta needs dt > 0, got {dt}")));
    }
    let ratio = dt / params.tau_m;
    Ok(DtaStep {
        u: u + ratio * (-(u - params.u_rest) + params.tau_r * f_agg),
        unstable: ratio >= 1.0,
    })
}

/// Green's-function convolution `u_rest + ∫₀ᵗ h(t−s)·f_agg(s) ds` with
/// `h(t) = (τ_r/τ_m)·exp(−t/τ_m)`, integrated by the trapezoidal rule on
/// the trace grid (plus one partial panel when `t` falls between
/// samples).
pub fn eval_gsf(t: f64, f_agg: &Trace, params: &NeuronParams) -> Result<f64> {
    if f_agg.t0() != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eval_gsf expects the input trace to start at 0, got t0={}",
            f_agg.t0()
        )));
    }
    let span = f_agg.t_end();
    if t < 0.0 || t > span + 1e-9 * f_agg.dt() {
        return Err(Error::InvalidArgument(format!(
            "eval_gsf: t={t} outside the trace span [0, {span}]"
        )));
    }
    let dt = f_agg.dt();
    let h = |lag: f64| params.tau_r / params.tau_m * (-lag / params.tau_m).exp();
    let vals = f_agg.values();
    let k_full = ((t / dt) + 1e-9).floor() as usize;
    let k_full = k_full.min(vals.len() - 1);
    let mut integral = 0.0;
    for k in 0..k_full {
        let s0 = f_agg.time(k);
        let s1 = f_agg.time(k + 1);
        integral += 0.5 * dt * (h(t - s0) * vals[k] + h(t - s1) * vals[k + 1]);
    }
    // Partial panel between the last full grid point and t itself.
    let t_k = f_agg.time(k_full);
    let rem = t - t_k;
    if rem > 1e-12 * dt && k_full + 1 < vals.len() {
        let frac = rem / dt;
        let f_t = vals[k_full] + frac * (vals[k_full + 1] - vals[k_full]);
        integral += 0.5 * rem * (h(rem) * vals[k_full] + h(0.0) * f_t);
    }
    Ok(params.u_rest + integral)
}

/// Spike-response potential: amplitude-weighted kernel sums over the
/// neuron's own spike history and each presynaptic train.
///
/// Events after `t` contribute nothing (causal kernels).
pub fn eval_srm(
    t: f64,
    self_spikes: &SpikeEvents,
    presyn: &[SpikeEvents],
    weights: &[f64],
    kernels: &SrmKernels,
) -> Result<f64> {
    if presyn.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} presynaptic trains vs {} weights",
            presyn.len(),
            weights.len()
        )));
    }
    let mut u = 0.0;
    for (tf, amp) in self_spikes.iter() {
        if tf <= t {
            u += amp * kernels.eta.eval(t - tf);
        }
    }
    for (train, &w) in presyn.iter().zip(weights) {
        let mut acc = 0.0;
        for (te, amp) in train.iter() {
            if te <= t {
                acc += amp * kernels.epsilon.eval(t - te);
            }
        }
        u += w * acc;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_params() -> NeuronParams {
        NeuronParams::new(1.0, 1.0, 0.0, 1.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(NeuronParams::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(NeuronParams::new(1.0, -1.0, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(NeuronParams::new(1.0, 1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(NeuronParams::new(1.0, 1.0, 0.0, 1.0, 2.0, 0.0).is_err());
        assert!(NeuronParams::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn excite_examples() {
        let p = unit_params();
        assert_eq!(excite(0.0, &p), 0.0);
        assert_eq!(excite(p.u_firing, &p), 1.0);
        let p2 = NeuronParams::new(1.0, 1.0, 0.0, 2.0, 0.0, 0.0).unwrap();
        assert_eq!(excite(0.5, &p2), 0.25);
    }

    #[test]
    fn excite_is_positively_homogeneous() {
        let p = NeuronParams::new(2.0, 3.0, -0.5, 1.7, 0.1, 0.0).unwrap();
        for u in [-2.0, -0.3, 0.0, 0.4, 5.0] {
            for a in [-3.0, 0.5, 2.0] {
                let lhs = excite(a * u, &p);
                let rhs = a * excite(u, &p);
                assert!((lhs - rhs).abs() <= 1e-15 * rhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn reset_examples() {
        let p = unit_params();
        assert_eq!(reset(3.0, 0.0, &p), 3.0);
        assert_eq!(reset(3.0, 1.0, &p), 0.0);
        assert_eq!(reset(2.0, 0.5, &p), 1.0);
        let p2 = NeuronParams::new(1.0, 1.0, 0.0, 1.0, -0.7, 0.0).unwrap();
        assert_eq!(reset(5.0, 1.0, &p2), -0.7);
    }

    #[test]
    fn step_def_examples() {
        let p = NeuronParams::new(2.0, 1.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        // Homogeneous decay.
        let u1 = step_def(0.8, 0.0, 0.5, &p).unwrap();
        assert!((u1 - 0.8 * (-0.25f64).exp()).abs() < 1e-15);
        // Equilibrium is a fixed point.
        let u_eq = p.u_rest + p.tau_r * 0.3;
        assert_eq!(step_def(u_eq, 0.3, 1.0, &p).unwrap(), u_eq);
        // Closed-form exponential solution.
        let p1 = unit_params();
        let u = step_def(0.0, 1.0, 1.0, &p1).unwrap();
        assert!((u - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(step_def(0.0, 0.0, 0.0, &p1).is_err());
        assert!(step_def(0.0, 0.0, -1.0, &p1).is_err());
    }

    #[test]
    fn eval_eid_examples() {
        let p = unit_params();
        // Zero lag returns the initial state.
        assert_eq!(eval_eid(2.0, 2.0, 0.37, 5.0, &p).unwrap(), 0.37);
        // Steady state.
        let far = eval_eid(1e9, 0.0, 0.2, 0.75, &p).unwrap();
        assert!((far - (p.u_rest + p.tau_r * 0.75)).abs() < 1e-12);
        // Cross-oracle with step_def.
        let u = eval_eid(1.0, 0.0, 0.0, 1.0, &p).unwrap();
        assert!((u - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(eval_eid(0.0, 1.0, 0.0, 0.0, &p).is_err());
    }

    #[test]
    fn step_def_matches_eid_over_many_steps() {
        // Exponential-Euler is exact for piecewise-constant input.
        let p = NeuronParams::new(3.0, 2.0, -0.25, 1.5, 0.0, 0.0).unwrap();
        let (dt, f) = (0.05, 0.8);
        let mut u = 0.4;
        let mut max_rel = 0.0f64;
        for k in 1..=1000 {
            u = step_def(u, f, dt, &p).unwrap();
            let exact = eval_eid(k as f64 * dt, 0.0, 0.4, f, &p).unwrap();
            max_rel = max_rel.max((u - exact).abs() / exact.abs().max(1e-300));
        }
        assert!(max_rel <= 1e-12, "max relative drift {max_rel}");
    }

    #[test]
    fn step_dta_examples() {
        let p = unit_params();
        // Fixed point at rest with zero input.
        let s = step_dta(p.u_rest, 0.0, 0.5, &p).unwrap();
        assert_eq!(s.u, p.u_rest);
        assert!(!s.unstable);
        // Hand Euler step.
        let s = step_dta(0.0, 1.0, 1.0, &p).unwrap();
        assert_eq!(s.u, 1.0);
        assert!(s.unstable); // dt/tau_m = 1 flags the stability boundary
        assert!(step_dta(0.0, 0.0, 0.0, &p).is_err());
    }

    #[test]
    fn step_dta_first_order_convergence() {
        let p = NeuronParams::new(2.0, 1.0, 0.1, 1.0, 0.0, 0.0).unwrap();
        let (u0, f, t_end) = (0.3, 0.9, 2.0);
        let exact = eval_eid(t_end, 0.0, u0, f, &p).unwrap();
        let endpoint = |dt: f64| {
            let n = (t_end / dt).round() as usize;
            let mut u = u0;
            for _ in 0..n {
                u = step_dta(u, f, dt, &p).unwrap().u;
            }
            u
        };
        let e1 = (endpoint(0.02) - exact).abs();
        let e2 = (endpoint(0.01) - exact).abs();
        let ratio = e1 / e2;
        assert!((1.8..=2.2).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn eval_gsf_examples() {
        let p = unit_params();
        let zero = Trace::constant(0.0, 0.01, 201, 0.0).unwrap();
        assert_eq!(eval_gsf(1.5, &zero, &p).unwrap(), p.u_rest);

        // Constant input approaches u_rest + tau_r·c.
        let pl = NeuronParams::new(0.5, 2.0, 0.1, 1.0, 0.0, 0.0).unwrap();
        let c = 0.6;
        let trace = Trace::constant(0.0, 0.001, 20_001, c).unwrap();
        let far = eval_gsf(20.0, &trace, &pl).unwrap();
        assert!((far - (pl.u_rest + pl.tau_r * c)).abs() < 1e-6);

        // Analytic integral of the kernel at finite t.
        let fine = Trace::constant(0.0, 0.001, 1001, 1.0).unwrap();
        let u = eval_gsf(1.0, &fine, &p).unwrap();
        assert!((u - (1.0 - (-1.0f64).exp())).abs() < 1e-6);

        assert!(eval_gsf(1.2, &fine, &p).is_err());
        assert!(eval_gsf(-0.1, &fine, &p).is_err());
    }

    #[test]
    fn eval_srm_examples() {
        let p = unit_params();
        let kernels = SrmKernels::new(
            Kernel::ExpDecay { scale: -1.0, tau: 1.0 },
            Kernel::ExpDecay { scale: 1.0, tau: 1.0 },
        )
        .unwrap();
        let _ = p;

        // Empty sums.
        let u = eval_srm(3.0, &SpikeEvents::empty(), &[], &[], &kernels).unwrap();
        assert_eq!(u, 0.0);

        // Single presynaptic spike at t_e = 0 evaluated at t = 0.
        let train = SpikeEvents::new(vec![0.0], vec![1.0]).unwrap();
        let u = eval_srm(0.0, &SpikeEvents::empty(), &[train.clone()], &[1.0], &kernels).unwrap();
        assert_eq!(u, 1.0);

        // Linearity in the weights.
        let self_sp = SpikeEvents::new(vec![0.5], vec![1.0]).unwrap();
        let base = eval_srm(2.0, &SpikeEvents::empty(), &[train.clone()], &[0.7], &kernels).unwrap();
        let scaled =
            eval_srm(2.0, &SpikeEvents::empty(), &[train.clone()], &[2.1], &kernels).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-14);
        let _ = self_sp;

        assert!(eval_srm(1.0, &SpikeEvents::empty(), &[train], &[], &kernels).is_err());
    }

    #[test]
    fn eval_srm_is_causal() {
        let kernels = SrmKernels::new(
            Kernel::ExpDecay { scale: -0.8, tau: 2.0 },
            Kernel::ExpDecay { scale: 1.3, tau: 0.7 },
        )
        .unwrap();
        let t = 1.0;
        let early = SpikeEvents::new(vec![0.2, 0.9], vec![1.0, -1.0]).unwrap();
        let with_late = SpikeEvents::new(vec![0.2, 0.9, 1.5, 2.0], vec![1.0, -1.0, 1.0, 1.0]).unwrap();
        let self_sp = SpikeEvents::new(vec![0.4], vec![1.0]).unwrap();
        let self_late = SpikeEvents::new(vec![0.4, 1.01], vec![1.0, 1.0]).unwrap();
        let a = eval_srm(t, &self_sp, &[early], &[0.5], &kernels).unwrap();
        let b = eval_srm(t, &self_late, &[with_late], &[0.5], &kernels).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kernel_lipschitz_bounds_grid_slope() {
        for kernel in [
            Kernel::ExpDecay { scale: -1.5, tau: 0.8 },
            Kernel::ExpDecay { scale: 0.9, tau: 2.5 },
        ] {
            let lip = kernel.lipschitz();
            let dt = 1e-3;
            for k in 0..5000 {
                let t = k as f64 * dt;
                let slope = (kernel.eval(t + dt) - kernel.eval(t)).abs() / dt;
                assert!(slope <= lip + 1e-9, "slope {slope} exceeds declared {lip}");
            }
        }
    }

    #[test]
    fn kernel_is_causal() {
        let k = Kernel::ExpDecay { scale: 2.0, tau: 1.0 };
        assert_eq!(k.eval(-1e-9), 0.0);
        assert_eq!(k.eval(-5.0), 0.0);
        assert!(k.eval(0.0) > 0.0);
    }

    #[test]
    fn srm_kernel_sign_validation() {
        let neg = Kernel::ExpDecay { scale: -1.0, tau: 1.0 };
        let pos = Kernel::ExpDecay { scale: 1.0, tau: 1.0 };
        assert!(SrmKernels::new(pos, pos).is_err());
        assert!(SrmKernels::new(neg, neg).is_err());
        assert!(SrmKernels::new(neg, pos).is_ok());
    }

    #[test]
    fn trace_time_has_no_accumulated_drift() {
        let t = Trace::constant(0.0, 0.1, 1001, 0.0).unwrap();
        // 1000 · 0.1 computed by multiplication, not repeated addition.
        assert_eq!(t.time(1000), 1000.0 * 0.1);
        let mut acc = 0.0;
        for _ in 0..1000 {
            acc += 0.1;
        }
        assert_ne!(acc, t.time(1000)); // the drifting alternative differs
    }

    #[test]
    fn spike_events_validation() {
        assert!(SpikeEvents::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(SpikeEvents::new(vec![1.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(SpikeEvents::new(vec![-0.1], vec![1.0]).is_err());
        assert!(SpikeEvents::new(vec![0.1], vec![1.0, 2.0]).is_err());
        assert!(SpikeEvents::new(vec![0.1, 0.2], vec![1.0, -1.0]).is_ok());
    }
}
