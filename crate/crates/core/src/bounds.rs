//! Closed-form capacity quantities and the inequality suites backing
//! them.
//!
//! The chain runs: per-layer growth factors `Ã`, `B̃` → sup-norm ceiling
//! `N_f` (with a per-expression effective depth) → covering-number log
//! bounds → empirical Rademacher complexity bound → generalization
//! bound. Counts are kept in the log domain throughout; the raw covering
//! counts and `exp(T/τ_m)` factors overflow `f64` at realistic horizons.
//!
//! The auxiliary machinery (three Gronwall-style recursions and the
//! central-binomial bounds) is verified numerically: each check reports
//! whether its premise and conclusion hold on concrete data.

use crate::network::Expression;
use crate::neuron::{NeuronParams, Trace};
use crate::{Error, Result};
use num_bigint::BigUint;
use num_traits::One;

use std::f64::consts::{LN_2, PI};

/// Everything entering the bound chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Horizon `T`.
    pub horizon: f64,
    /// Depth `L`.
    pub depth: usize,
    /// Width `N_w`.
    pub width: usize,
    /// Weight-norm cap `M_w`.
    pub weight_cap: f64,
    /// Input sup-norm `M_x`.
    pub input_sup: f64,
    /// Sample count `n`.
    pub samples: usize,
    /// Confidence `δ ∈ (0, 1)`.
    pub delta: f64,
    pub params: NeuronParams,
    /// Loss Lipschitz constant `L_ℏ`.
    pub loss_lipschitz: f64,
    /// Loss ceiling `M_ℏ`.
    pub loss_ceiling: f64,
    pub expression: Expression,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParam(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.depth == 0 {
            return Err(Error::InvalidParam("depth must be ≥ 1".into()));
        }
        if self.width == 0 {
            return Err(Error::InvalidParam("width must be ≥ 1".into()));
        }
        if self.weight_cap < 0.0 || self.input_sup < 0.0 {
            return Err(Error::InvalidParam("norm caps must be ≥ 0".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParam("sample count must be ≥ 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParam(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if self.loss_lipschitz < 0.0 || self.loss_ceiling < 0.0 {
            return Err(Error::InvalidParam("loss constants must be ≥ 0".into()));
        }
        self.params.validate()
    }
}

/// Per-layer growth factors.
///
/// `Ã = (T·τ_r / (τ_m·u_firing)) · exp(T/τ_m) · M_w` and
/// `B̃ = (‖u(0)‖₂/u_firing + T·‖u_rest‖₂/(τ_m·u_firing)) · exp(T/τ_m)`,
/// with `u(0)` and `u_rest` taken as the `N_w`-vectors of `u_init` and
/// `u_rest` (2-norms `√N_w·|·|`). `exp(T/τ_m)` may overflow to `+∞`; the
/// assembled report flags that.
pub fn compute_ab(inp: &BoundInputs) -> (f64, f64) {
    let p = &inp.params;
    let growth = (inp.horizon / p.tau_m).exp();
    let a_coeff = inp.horizon * p.tau_r / (p.tau_m * p.u_firing) * inp.weight_cap;
    let sqrt_w = (inp.width as f64).sqrt();
    let b_coeff = sqrt_w * p.u_init.abs() / p.u_firing
        + inp.horizon * sqrt_w * p.u_rest.abs() / (p.tau_m * p.u_firing);
    // A zero coefficient means a zero factor even when exp(T/τ_m)
    // overflows; 0·∞ must not poison the chain with NaN.
    let a = if a_coeff == 0.0 { 0.0 } else { a_coeff * growth };
    let b = if b_coeff == 0.0 { 0.0 } else { b_coeff * growth };
    (a, b)
}

/// `N_f` value plus the branch taken at the geometric-sum singularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NfValue {
    pub value: f64,
    /// Set when `|Ã − 1| ≤ 1e−9` and the geometric factor was replaced
    /// by its continuity limit `L`.
    pub limit_branch: bool,
}

/// Sup-norm ceiling `N_f = Ã^L·M_x + ((Ã^L − 1)/(Ã(Ã−1)))·B̃`.
///
/// At `B̃ = 0` the geometric term vanishes; at `Ã = 1` the factor is
/// replaced by its limit `L`.
pub fn compute_nf(a_tilde: f64, b_tilde: f64, depth: usize, input_sup: f64) -> NfValue {
    let l = depth as f64;
    let pow = a_tilde.powi(depth as i32);
    if b_tilde == 0.0 {
        return NfValue { value: pow * input_sup, limit_branch: false };
    }
    if (a_tilde - 1.0).abs() <= 1e-9 {
        return NfValue { value: pow * input_sup + l * b_tilde, limit_branch: true };
    }
    let geometric = (pow - 1.0) / (a_tilde * (a_tilde - 1.0));
    NfValue { value: pow * input_sup + geometric * b_tilde, limit_branch: false }
}

/// Effective depth entering the `N_f` chain: the kernel-sum and
/// forward-Euler expressions carry exponent `L − 1` (floored at 1), the
/// continuous-form expressions carry `L`.
pub fn effective_depth(expression: Expression, depth: usize) -> usize {
    match expression {
        Expression::Def | Expression::Eid | Expression::Gsf => depth,
        Expression::Srm | Expression::Dta => depth.saturating_sub(1).max(1),
    }
}

/// Expression-aware `N_f` using the shared `Ã`, `B̃` chain.
pub fn variant_nf(inp: &BoundInputs) -> NfValue {
    let (a, b) = compute_ab(inp);
    compute_nf(a, b, effective_depth(inp.expression, inp.depth), inp.input_sup)
}

/// The two covered function classes: monotone envelopes (`I`) and the
/// bounded-variation ball (`B`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverClass {
    I,
    B,
}

/// Natural log of the covering-number bound
/// `N_cn(γ, I) ≤ [2^{4·T·N_f·√N_w/γ} / (6π)]^{N_w}` and
/// `N_cn(γ, B) ≤ [2^{16·T·N_f·√N_w/γ} / (6π)²]^{N_w}`.
///
/// Only the log is ever materialized.
pub fn covering_bound(
    gamma: f64,
    horizon: f64,
    n_f: f64,
    width: usize,
    class: CoverClass,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("covering_bound needs γ > 0, got {gamma}")));
    }
    let (c, k) = match class {
        CoverClass::I => (4.0, 1.0),
        CoverClass::B => (16.0, 2.0),
    };
    let w = width as f64;
    Ok(w * (c * horizon * n_f * w.sqrt() / gamma * LN_2 - k * (6.0 * PI).ln()))
}

/// Rademacher-complexity bound with its vacuity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcUpper {
    pub value: f64,
    /// A negative upper bound on a nonnegative quantity: the bound is
    /// outside its informative regime. The value is preserved as printed.
    pub vacuous: bool,
}

/// `R̂ ≤ 128·T·N_f·N_w^{3/2}·ln2/(3πn) − 32·√(2·ln2/(3π))·√(T·N_f²·N_w^{3/2}/n)`.
pub fn rademacher_upper(horizon: f64, n_f: f64, width: usize, samples: usize) -> RcUpper {
    let w32 = (width as f64).powf(1.5);
    let n = samples as f64;
    let first = 128.0 * horizon * n_f * w32 * LN_2 / (3.0 * PI * n);
    let second = 32.0 * (2.0 * LN_2 / (3.0 * PI)).sqrt() * (horizon * n_f * n_f * w32 / n).sqrt();
    let value = first - second;
    RcUpper { value, vacuous: value < 0.0 }
}

/// Generalization bound `E ≤ Ê + 2·L_ℏ·R̂ + 3·M_ℏ·√(ln(2/δ)/(2n))`.
///
/// A vacuously negative `rc` is clamped to 0 so the result stays an
/// upper bound.
pub fn generalization_upper(emp_error: f64, rc: f64, inp: &BoundInputs) -> Result<f64> {
    if !(inp.delta > 0.0 && inp.delta < 1.0) {
        return Err(Error::InvalidParam(format!("delta must lie in (0,1), got {}", inp.delta)));
    }
    let confidence =
        3.0 * inp.loss_ceiling * ((2.0 / inp.delta).ln() / (2.0 * inp.samples as f64)).sqrt();
    Ok(emp_error + 2.0 * inp.loss_lipschitz * rc.max(0.0) + confidence)
}

/// Which α surrogate bounds `sup √E[f²]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    /// `α ≤ N_f` under `‖f‖_∞ ≤ N_f` (the default branch).
    SupNorm,
    /// `α ≤ N_f / T^{N_f/2}` under `‖f‖₂ ≤ N_f`.
    L2,
}

pub fn alpha_bound(n_f: f64, horizon: f64, mode: AlphaMode) -> f64 {
    match mode {
        AlphaMode::SupNorm => n_f,
        AlphaMode::L2 => n_f / horizon.powf(n_f / 2.0),
    }
}

/// Outcome of a premise/conclusion inequality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallVerdict {
    pub premise_holds: bool,
    pub conclusion_holds: bool,
    /// Smallest conclusion slack (rhs − lhs) observed.
    pub worst_margin: f64,
}

fn cmp_tol(rhs: f64) -> f64 {
    1e-9 * rhs.abs().max(1.0)
}

/// Recursive-sum form: premise `u_n ≤ a_n + Σ_{l<n} b_l·u_l` against
/// conclusion `u_n ≤ a_n + Σ_{l<n} a_l·b_l·Π_{j=l+1}^{n−1}(1+b_j)`.
///
/// `u` and `a` must be positive; `b` nonnegative (the all-zero `b` edge
/// is part of the contract).
pub fn check_gronwall_discrete(u: &[f64], a: &[f64], b: &[f64]) -> Result<GronwallVerdict> {
    if u.len() != a.len() || u.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "sequence lengths {} / {} / {}",
            u.len(),
            a.len(),
            b.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::InvalidArgument("empty sequences".into()));
    }
    if u.iter().chain(a).any(|&v| !(v > 0.0)) || b.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidParam("u, a must be positive and b nonnegative".into()));
    }
    let n = u.len();
    let mut premise = true;
    let mut conclusion = true;
    let mut worst = f64::INFINITY;
    for i in 0..n {
        let premise_rhs = a[i] + (0..i).map(|l| b[l] * u[l]).sum::<f64>();
        premise &= u[i] <= premise_rhs + cmp_tol(premise_rhs);
        let mut sum = 0.0;
        for l in 0..i {
            let prod: f64 = (l + 1..i).map(|j| 1.0 + b[j]).product();
            sum += a[l] * b[l] * prod;
        }
        let rhs = a[i] + sum;
        worst = worst.min(rhs - u[i]);
        conclusion &= u[i] <= rhs + cmp_tol(rhs);
    }
    Ok(GronwallVerdict { premise_holds: premise, conclusion_holds: conclusion, worst_margin: worst })
}

fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for k in 1..values.len() {
        out[k] = out[k - 1] + 0.5 * dt * (values[k - 1] + values[k]);
    }
    out
}

/// Integral form: premise `u(t) ≤ α(t) + ∫ₐᵗ β·u` against conclusion
/// `u(t) ≤ α(t)·exp(∫ₐᵗ β)`, trapezoidal integrals on the common grid.
///
/// Requires β ≥ 0 and α nondecreasing.
pub fn check_gronwall_continuous(u: &Trace, alpha: &Trace, beta: &Trace) -> Result<GronwallVerdict> {
    if !u.same_grid(alpha) || !u.same_grid(beta) {
        return Err(Error::GridMismatch("u, α, β must share one grid".into()));
    }
    if beta.values().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParam("β must be nonnegative".into()));
    }
    if alpha.values().windows(2).any(|w| w[1] < w[0] - 1e-12) {
        return Err(Error::InvalidParam("α must be nondecreasing".into()));
    }
    let dt = u.dt();
    let bu: Vec<f64> = beta.values().iter().zip(u.values()).map(|(b, uu)| b * uu).collect();
    let int_bu = cumulative_trapezoid(&bu, dt);
    let int_b = cumulative_trapezoid(beta.values(), dt);
    let mut premise = true;
    let mut conclusion = true;
    let mut worst = f64::INFINITY;
    for k in 0..u.len() {
        let premise_rhs = alpha.values()[k] + int_bu[k];
        premise &= u.values()[k] <= premise_rhs + cmp_tol(premise_rhs);
        let rhs = alpha.values()[k] * int_b[k].exp();
        worst = worst.min(rhs - u.values()[k]);
        conclusion &= u.values()[k] <= rhs + cmp_tol(rhs);
    }
    Ok(GronwallVerdict { premise_holds: premise, conclusion_holds: conclusion, worst_margin: worst })
}

/// Product form: builds the maximal sequence `u_k = a_k·u_{k−1} + b_k`
/// and checks the closed form
/// `u_k ≤ (Π_{j≤k} a_j)·u_0 + Σ_j b_j·Π_{i>j} a_i` (equality in this
/// extremal case).
///
/// `a` must be positive; `b` nonnegative.
pub fn check_gronwall_product(u0: f64, a: &[f64], b: &[f64]) -> Result<GronwallVerdict> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "sequence lengths {} / {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty sequences".into()));
    }
    if a.iter().any(|&v| !(v > 0.0)) || b.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidParam("a must be positive and b nonnegative".into()));
    }
    let mut u = u0;
    let mut conclusion = true;
    let mut worst = f64::INFINITY;
    for k in 1..=a.len() {
        u = a[k - 1] * u + b[k - 1];
        let prod_all: f64 = a[..k].iter().product();
        let sum: f64 = (0..k).map(|j| b[j] * a[j + 1..k].iter().product::<f64>()).sum();
        let rhs = prod_all * u0 + sum;
        worst = worst.min(rhs - u);
        conclusion &= u <= rhs + cmp_tol(rhs);
    }
    // The maximal sequence satisfies the recursion with equality.
    Ok(GronwallVerdict { premise_holds: true, conclusion_holds: conclusion, worst_margin: worst })
}

/// Exact central binomial `C(2n, n)` via the recurrence
/// `(n+1)·a_{n+1} = (4n+2)·a_n`.
pub fn central_binomial(n: u32) -> BigUint {
    let mut a = BigUint::one();
    for k in 0..n as u64 {
        a = a * BigUint::from(4 * k + 2) / BigUint::from(k + 1);
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinomialVerdict {
    pub n: u32,
    /// `C(2N,N) ≤ 2^{2N}/√(πN)`, checked in exact integer arithmetic
    /// against a rational upper bound of π.
    pub gamma_ratio_holds: bool,
    /// `C(2N,N)² ≤ 2^{4N}/(6π)`; only claimed for `N ≥ 6`.
    pub six_pi_holds: Option<bool>,
}

impl BinomialVerdict {
    pub fn holds(&self) -> bool {
        self.gamma_ratio_holds && self.six_pi_holds.unwrap_or(true)
    }
}

/// Checks the central-binomial bounds for one `N ≥ 1`.
///
/// `C ≤ 2^{2N}/√(πN)` is equivalent to `C²·π·N ≤ 2^{4N}`; with
/// `π < 314159265358979324 / 10^17` the comparison happens entirely in
/// `BigUint` arithmetic.
pub fn binomial_bound_check(n: u32) -> Result<BinomialVerdict> {
    if n == 0 {
        return Err(Error::InvalidArgument("binomial bound needs N ≥ 1".into()));
    }
    const PI_NUM: u64 = 314_159_265_358_979_324;
    const PI_DEN: u64 = 100_000_000_000_000_000;
    let c = central_binomial(n);
    let c2 = &c * &c;
    let pow = BigUint::one() << (4 * n as usize);
    let gamma_ratio_holds =
        &c2 * BigUint::from(n) * BigUint::from(PI_NUM) <= &pow * BigUint::from(PI_DEN);
    let six_pi_holds = if n >= 6 {
        Some(&c2 * BigUint::from(6u32) * BigUint::from(PI_NUM) <= &pow * BigUint::from(PI_DEN))
    } else {
        None
    };
    Ok(BinomialVerdict { n, gamma_ratio_holds, six_pi_holds })
}

/// Fully evaluated bound chain for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub a_tilde: f64,
    pub b_tilde: f64,
    pub n_f: f64,
    /// `sup √E[f²]` surrogate (sup-norm branch: `α = N_f`).
    pub alpha: f64,
    pub rc_upper: f64,
    pub rc_vacuous: bool,
    pub cover_log_i: f64,
    pub cover_log_b: f64,
    /// Generalization bound at zero empirical error (the capacity and
    /// confidence terms); add the empirical error for a concrete run.
    pub gen_upper: f64,
    pub nf_limit_branch: bool,
    pub overflow: bool,
}

impl BoundReport {
    /// Flat key=value block, one field per line, fixed order.
    pub fn to_kv(&self) -> String {
        format!(
            "a_tilde={}\nb_tilde={}\nn_f={}\nalpha={}\nrc_upper={}\nrc_vacuous={}\n\
             cover_log_i={}\ncover_log_b={}\ngen_upper={}\nnf_limit_branch={}\noverflow={}\n",
            self.a_tilde,
            self.b_tilde,
            self.n_f,
            self.alpha,
            self.rc_upper,
            self.rc_vacuous,
            self.cover_log_i,
            self.cover_log_b,
            self.gen_upper,
            self.nf_limit_branch,
            self.overflow
        )
    }
}

/// Composes the whole chain at probe radius `gamma_probe`.
pub fn assemble_report(inp: &BoundInputs, gamma_probe: f64) -> Result<BoundReport> {
    inp.validate()?;
    if !(gamma_probe > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma_probe must be > 0, got {gamma_probe}")));
    }
    let (a_tilde, b_tilde) = compute_ab(inp);
    let nf = variant_nf(inp);
    if !nf.value.is_finite() {
        return Ok(BoundReport {
            a_tilde,
            b_tilde,
            n_f: nf.value,
            alpha: nf.value,
            rc_upper: f64::INFINITY,
            rc_vacuous: false,
            cover_log_i: f64::INFINITY,
            cover_log_b: f64::INFINITY,
            gen_upper: f64::INFINITY,
            nf_limit_branch: nf.limit_branch,
            overflow: true,
        });
    }
    let cover_log_i = covering_bound(gamma_probe, inp.horizon, nf.value, inp.width, CoverClass::I)?;
    let cover_log_b = covering_bound(gamma_probe, inp.horizon, nf.value, inp.width, CoverClass::B)?;
    let rc = rademacher_upper(inp.horizon, nf.value, inp.width, inp.samples);
    let gen_upper = generalization_upper(0.0, rc.value, inp)?;
    Ok(BoundReport {
        a_tilde,
        b_tilde,
        n_f: nf.value,
        alpha: alpha_bound(nf.value, inp.horizon, AlphaMode::SupNorm),
        rc_upper: rc.value,
        rc_vacuous: rc.vacuous,
        cover_log_i,
        cover_log_b,
        gen_upper,
        nf_limit_branch: nf.limit_branch,
        overflow: !a_tilde.is_finite() || !b_tilde.is_finite(),
    })
}
