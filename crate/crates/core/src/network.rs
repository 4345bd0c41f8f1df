//! Layered spiking networks.
//!
//! A network is a stack of weight matrices feeding shared-parameter
//! neuron layers. Within one grid step the layers update in sequence
//! `l = 1..L`, each seeing the current-step spikes of the layer below:
//! aggregate, membrane update under the configured expression, excite,
//! reset. The recorded potential is the pre-reset value; the reset only
//! shapes the state carried into the next step.

use crate::neuron::{
    self, excite, reset, NeuronParams, SrmKernels, Trace,
};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The five expressions of the membrane dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Expression {
    Def,
    Srm,
    Eid,
    Dta,
    Gsf,
}

impl Expression {
    pub const ALL: [Expression; 5] = [
        Expression::Def,
        Expression::Srm,
        Expression::Eid,
        Expression::Dta,
        Expression::Gsf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Expression::Def => "DEF",
            Expression::Srm => "SRM",
            Expression::Eid => "EID",
            Expression::Dta => "DTA",
            Expression::Gsf => "GsF",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DEF" => Ok(Expression::Def),
            "SRM" => Ok(Expression::Srm),
            "EID" => Ok(Expression::Eid),
            "DTA" => Ok(Expression::Dta),
            "GSF" => Ok(Expression::Gsf),
            other => Err(Error::Parse(format!("unknown expression '{other}'"))),
        }
    }
}

impl std::fmt::Display for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense row-major matrix with the entrywise 2-norm used throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged or empty matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Entrywise 2-norm `(Σ w_ij²)^{1/2}`.
    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "matvec: {}x{} matrix against vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect())
    }

    /// `Wᵀ · v` without materializing the transpose.
    pub fn matvec_t(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "matvec_t: {}x{} matrix against vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * v[r];
            }
        }
        Ok(out)
    }

    /// Accumulates the outer product `a · bᵀ` into `self`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &av) in a.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += av * bv;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }
}

/// Matrix–vector aggregation `f_agg = W · s_prev`.
pub fn aggregate(weights: &Matrix, s_prev: &[f64]) -> Result<Vec<f64>> {
    weights.matvec(s_prev)
}

/// Multi-channel signal sharing one time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTrace {
    t0: f64,
    dt: f64,
    channels: Vec<Vec<f64>>,
}

impl MultiTrace {
    pub fn new(t0: f64, dt: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParam(format!("multitrace dt must be > 0, got {dt}")));
        }
        if channels.is_empty() {
            return Err(Error::InvalidParam("multitrace needs at least one channel".into()));
        }
        let len = channels[0].len();
        if len == 0 || channels.iter().any(|c| c.len() != len) {
            return Err(Error::GridMismatch("channels empty or of unequal length".into()));
        }
        Ok(Self { t0, dt, channels })
    }

    pub fn zeros(t0: f64, dt: f64, channels: usize, len: usize) -> Result<Self> {
        Self::new(t0, dt, vec![vec![0.0; len]; channels])
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Column at grid index `k` across channels.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.channels.iter().map(|c| c[k]).collect()
    }

    /// Channel `i` as a standalone [`Trace`].
    pub fn channel_trace(&self, i: usize) -> Trace {
        Trace::new(self.t0, self.dt, self.channels[i].clone()).expect("channel grids are valid")
    }

    /// Contiguous sub-signal over sample indices `[start, end]` (inclusive).
    pub fn slice(&self, start: usize, end: usize) -> Result<MultiTrace> {
        if start > end || end >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "slice [{start}, {end}] out of bounds for length {}",
                self.len()
            )));
        }
        MultiTrace::new(
            self.time(start),
            self.dt,
            self.channels.iter().map(|c| c[start..=end].to_vec()).collect(),
        )
    }
}

/// Architecture and simulation grid of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Layer widths: input dimension, hidden widths, output dimension.
    /// The depth `L` is `widths.len() − 1`.
    pub widths: Vec<usize>,
    pub expression: Expression,
    pub dt: f64,
    /// Horizon `T`; `T/dt` must be an integer step count.
    pub horizon: f64,
    pub params: NeuronParams,
    /// Required when `expression` is SRM, ignored otherwise.
    pub kernels: Option<SrmKernels>,
    /// Per-layer cap `M_w` on the entrywise weight 2-norm.
    pub weight_norm_cap: f64,
}

impl NetworkConfig {
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of grid steps `T/dt`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Number of grid samples, `steps + 1`.
    pub fn grid_len(&self) -> usize {
        self.steps() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::InvalidParam("network needs depth ≥ 1 (widths: input + output)".into()));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidParam("layer widths must be ≥ 1".into()));
        }
        if !(self.horizon > 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidParam(format!(
                "horizon and dt must be > 0, got T={} dt={}",
                self.horizon, self.dt
            )));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidParam(format!(
                "T/dt must be an integer step count, got {steps}"
            )));
        }
        if !(self.weight_norm_cap > 0.0) {
            return Err(Error::InvalidParam(format!(
                "weight_norm_cap must be > 0, got {}",
                self.weight_norm_cap
            )));
        }
        self.params.validate()?;
        if self.expression == Expression::Srm && self.kernels.is_none() {
            return Err(Error::InvalidParam("SRM expression requires kernels".into()));
        }
        Ok(())
    }
}

/// Weighted layer stack. Construction projects every layer into the
/// norm ball, so `‖w^(l)‖₂ ≤ M_w` holds from birth onward.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    weights: Vec<Matrix>,
}

impl Network {
    pub fn new(config: NetworkConfig, weights: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        if weights.len() != config.depth() {
            return Err(Error::DimensionMismatch(format!(
                "{} weight matrices for depth {}",
                weights.len(),
                config.depth()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            if w.rows() != config.widths[l + 1] || w.cols() != config.widths[l] {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l}: expected {}x{} weights, got {}x{}",
                    config.widths[l + 1],
                    config.widths[l],
                    w.rows(),
                    w.cols()
                )));
            }
        }
        Ok(Self { config, weights }.project_weights())
    }

    /// Seeded init: entries uniform in [−1, 1], each layer rescaled so its
    /// norm equals `M_w / 2` (strictly inside the hypothesis ball).
    /// Entries are drawn layer by layer in row-major order.
    pub fn random(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(config.depth());
        for l in 0..config.depth() {
            let (rows, cols) = (config.widths[l + 1], config.widths[l]);
            let mut m = Matrix::zeros(rows, cols);
            for v in m.data_mut() {
                *v = rng.gen_range(-1.0..=1.0);
            }
            let norm = m.norm2();
            if norm > 0.0 {
                m.scale(config.weight_norm_cap / 2.0 / norm);
            }
            weights.push(m);
        }
        Network::new(config, weights)
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    /// Rescales any layer whose norm exceeds `M_w` back onto the ball;
    /// layers already inside are untouched.
    pub fn project_weights(mut self) -> Self {
        let cap = self.config.weight_norm_cap;
        for w in &mut self.weights {
            let norm = w.norm2();
            if norm > cap {
                w.scale(cap / norm);
            }
        }
        self
    }

    pub fn forward(&self, input: &MultiTrace) -> Result<SimulationRecord> {
        forward(self, input)
    }
}

/// Per-layer carried state of the discrete simulation.
///
/// * DEF / EID / DTA carry the post-reset potential.
/// * GsF carries the post-reset potential plus the previous aggregate,
///   using the exponential kernel's recursive trapezoid identity; the
///   reset is folded into the carried state so the running convolution
///   stays O(T) total.
/// * SRM carries the two kernel accumulators (self-history `h`,
///   presynaptic `p`) and the previous step's own spikes; the η kernel
///   itself plays the reset role, so no separate reset is applied.
enum LayerState {
    Carried { ur: Vec<f64> },
    Gsf { ur: Vec<f64>, a_prev: Vec<f64> },
    Srm { h: Vec<f64>, p: Vec<f64>, s_prev: Vec<f64> },
}

/// Everything `forward` observed: the output spikes of the last layer
/// plus per-layer, per-neuron potential and spike traces, all on the
/// input grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    pub output: MultiTrace,
    pub layer_potentials: Vec<MultiTrace>,
    pub layer_spikes: Vec<MultiTrace>,
    /// Set when the DTA expression stepped inside its instability region.
    pub dta_unstable: bool,
}

/// Runs the layered simulation over `[0, T]`.
///
/// Input channels are clipped to [−1, 1] before entering the first
/// layer. All layers start at `u_init`; grid index 0 records that
/// initial state.
pub fn forward(net: &Network, input: &MultiTrace) -> Result<SimulationRecord> {
    let cfg = &net.config;
    cfg.validate()?;
    if input.num_channels() != cfg.input_width() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} channels, network expects {}",
            input.num_channels(),
            cfg.input_width()
        )));
    }
    if input.t0() != 0.0 || input.dt() != cfg.dt || input.len() != cfg.grid_len() {
        return Err(Error::GridMismatch(format!(
            "input grid (t0={}, dt={}, len={}) does not span [0, {}] at dt={}",
            input.t0(),
            input.dt(),
            input.len(),
            cfg.horizon,
            cfg.dt
        )));
    }

    let p = &cfg.params;
    let depth = cfg.depth();
    let k_len = cfg.grid_len();
    let dt = cfg.dt;
    let alpha = (-dt / p.tau_m).exp();

    let clipped: Vec<Vec<f64>> = input
        .channels()
        .iter()
        .map(|c| c.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
        .collect();
    let clipped = MultiTrace::new(0.0, dt, clipped)?;

    let mut potentials: Vec<Vec<Vec<f64>>> = (0..depth)
        .map(|l| vec![vec![0.0; k_len]; cfg.widths[l + 1]])
        .collect();
    let mut spikes = potentials.clone();
    let mut dta_unstable = false;

    // Grid index 0: initial condition in every layer.
    let s0 = excite(p.u_init, p);
    let mut states: Vec<LayerState> = Vec::with_capacity(depth);
    {
        let mut below: Vec<f64> = clipped.column(0);
        for l in 0..depth {
            let width = cfg.widths[l + 1];
            for i in 0..width {
                potentials[l][i][0] = p.u_init;
                spikes[l][i][0] = s0;
            }
            let a0 = net.weights[l].matvec(&below)?;
            let ur0 = vec![reset(p.u_init, s0, p); width];
            let state = match cfg.expression {
                Expression::Def | Expression::Eid | Expression::Dta => LayerState::Carried { ur: ur0 },
                Expression::Gsf => LayerState::Gsf { ur: ur0, a_prev: a0 },
                Expression::Srm => LayerState::Srm {
                    h: vec![0.0; width],
                    p: a0,
                    s_prev: vec![s0; width],
                },
            };
            states.push(state);
            below = vec![s0; width];
        }
    }

    let kernels = cfg.kernels;
    let (eta_scale, eta_tau, eps_scale, eps_tau) = match kernels {
        Some(k) => match (k.eta, k.epsilon) {
            (
                neuron::Kernel::ExpDecay { scale: es, tau: et },
                neuron::Kernel::ExpDecay { scale: ps, tau: pt },
            ) => (es, et, ps, pt),
        },
        None => (0.0, 1.0, 0.0, 1.0),
    };
    let gamma = (-dt / eta_tau).exp();
    let beta = (-dt / eps_tau).exp();

    for k in 1..k_len {
        let mut below: Vec<f64> = clipped.column(k);
        for l in 0..depth {
            let width = cfg.widths[l + 1];
            let a = net.weights[l].matvec(&below)?;
            let mut s_now = vec![0.0; width];
            match &mut states[l] {
                LayerState::Carried { ur } => {
                    for i in 0..width {
                        let u = match cfg.expression {
                            Expression::Def => neuron::step_def(ur[i], a[i], dt, p)?,
                            Expression::Eid => {
                                let t = clipped.time(k);
                                neuron::eval_eid(t, t - dt, ur[i], a[i], p)?
                            }
                            Expression::Dta => {
                                let step = neuron::step_dta(ur[i], a[i], dt, p)?;
                                dta_unstable |= step.unstable;
                                step.u
                            }
                            _ => unreachable!(),
                        };
                        let s = excite(u, p);
                        potentials[l][i][k] = u;
                        spikes[l][i][k] = s;
                        s_now[i] = s;
                        ur[i] = reset(u, s, p);
                    }
                }
                LayerState::Gsf { ur, a_prev } => {
                    let c = p.tau_r / p.tau_m * dt / 2.0;
                    for i in 0..width {
                        let u = p.u_rest
                            + alpha * (ur[i] - p.u_rest)
                            + c * (alpha * a_prev[i] + a[i]);
                        let s = excite(u, p);
                        potentials[l][i][k] = u;
                        spikes[l][i][k] = s;
                        s_now[i] = s;
                        ur[i] = reset(u, s, p);
                    }
                    *a_prev = a;
                }
                LayerState::Srm { h, p: pacc, s_prev } => {
                    for i in 0..width {
                        h[i] = gamma * (h[i] + s_prev[i]);
                        pacc[i] = beta * pacc[i] + a[i];
                        let u = eta_scale * h[i] + eps_scale * pacc[i];
                        let s = excite(u, p);
                        potentials[l][i][k] = u;
                        spikes[l][i][k] = s;
                        s_now[i] = s;
                    }
                    *s_prev = s_now.clone();
                }
            }
            below = s_now;
        }
    }

    let out_width = cfg.output_width();
    let output = MultiTrace::new(0.0, dt, spikes[depth - 1][..out_width].to_vec())?;
    let layer_potentials = potentials
        .into_iter()
        .map(|chs| MultiTrace::new(0.0, dt, chs))
        .collect::<Result<Vec<_>>>()?;
    let layer_spikes = spikes
        .into_iter()
        .map(|chs| MultiTrace::new(0.0, dt, chs))
        .collect::<Result<Vec<_>>>()?;

    Ok(SimulationRecord {
        output,
        layer_potentials,
        layer_spikes,
        dta_unstable,
    })
}

// --- textual serialization -------------------------------------------------
//
// Versioned, binary-free format: a key-value header followed by one
// `layer` block per weight matrix with row-major decimal entries. The
// shortest-roundtrip float formatting makes save/load lossless. Field
// order is fixed; see docs/formats.md.

const FORMAT_TAG: &str = "snngb-network v1";

fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse()
            .map_err(|e| Error::Parse(format!("bad float '{s}': {e}"))),
    }
}

impl Network {
    /// Serializes to the versioned textual format.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        out.push_str(FORMAT_TAG);
        out.push('\n');
        out.push_str(&format!("expression {}\n", c.expression));
        out.push_str(&format!(
            "widths {}\n",
            c.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(" ")
        ));
        out.push_str(&format!("dt {}\n", fmt_f64(c.dt)));
        out.push_str(&format!("horizon {}\n", fmt_f64(c.horizon)));
        out.push_str(&format!("tau_m {}\n", fmt_f64(c.params.tau_m)));
        out.push_str(&format!("tau_r {}\n", fmt_f64(c.params.tau_r)));
        out.push_str(&format!("u_rest {}\n", fmt_f64(c.params.u_rest)));
        out.push_str(&format!("u_firing {}\n", fmt_f64(c.params.u_firing)));
        out.push_str(&format!("u_reset {}\n", fmt_f64(c.params.u_reset)));
        out.push_str(&format!("u_init {}\n", fmt_f64(c.params.u_init)));
        out.push_str(&format!("weight_norm_cap {}\n", fmt_f64(c.weight_norm_cap)));
        if let Some(k) = &c.kernels {
            let (neuron::Kernel::ExpDecay { scale: es, tau: et }, neuron::Kernel::ExpDecay { scale: ps, tau: pt }) =
                (k.eta, k.epsilon);
            out.push_str(&format!(
                "kernels exp {} {} exp {} {}\n",
                fmt_f64(es),
                fmt_f64(et),
                fmt_f64(ps),
                fmt_f64(pt)
            ));
        }
        for (l, w) in self.weights.iter().enumerate() {
            out.push_str(&format!("layer {} {} {}\n", l, w.rows(), w.cols()));
            for r in 0..w.rows() {
                let row: Vec<String> = (0..w.cols()).map(|c| fmt_f64(w.get(r, c))).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_TAG) {
            return Err(Error::Parse(format!("missing '{FORMAT_TAG}' header")));
        }
        let mut expression = None;
        let mut widths: Vec<usize> = Vec::new();
        let mut dt = None;
        let mut horizon = None;
        let mut fields = std::collections::HashMap::new();
        let mut kernels = None;
        let mut weights: Vec<Matrix> = Vec::new();
        let mut lines = lines.peekable();
        while let Some(line) = lines.next() {
            let line = line.trim_end();
            if line == "end" {
                break;
            }
            let mut parts = line.split_whitespace();
            let key = parts
                .next()
                .ok_or_else(|| Error::Parse("blank line inside network block".into()))?;
            match key {
                "expression" => {
                    expression = Some(Expression::parse(
                        parts.next().ok_or_else(|| Error::Parse("expression missing value".into()))?,
                    )?)
                }
                "widths" => {
                    widths = parts
                        .map(|p| p.parse::<usize>().map_err(|e| Error::Parse(format!("bad width '{p}': {e}"))))
                        .collect::<Result<Vec<_>>>()?;
                }
                "dt" => dt = Some(parse_f64(parts.next().unwrap_or(""))?),
                "horizon" => horizon = Some(parse_f64(parts.next().unwrap_or(""))?),
                "tau_m" | "tau_r" | "u_rest" | "u_firing" | "u_reset" | "u_init"
                | "weight_norm_cap" => {
                    fields.insert(key.to_string(), parse_f64(parts.next().unwrap_or(""))?);
                }
                "kernels" => {
                    let vals: Vec<&str> = parts.collect();
                    if vals.len() != 6 || vals[0] != "exp" || vals[3] != "exp" {
                        return Err(Error::Parse("kernels line must be 'kernels exp s t exp s t'".into()));
                    }
                    kernels = Some(SrmKernels::new(
                        neuron::Kernel::ExpDecay {
                            scale: parse_f64(vals[1])?,
                            tau: parse_f64(vals[2])?,
                        },
                        neuron::Kernel::ExpDecay {
                            scale: parse_f64(vals[4])?,
                            tau: parse_f64(vals[5])?,
                        },
                    )?);
                }
                "layer" => {
                    let idx: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| Error::Parse("layer index missing".into()))?;
                    if idx != weights.len() {
                        return Err(Error::Parse(format!("layer {idx} out of order")));
                    }
                    let rows: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| Error::Parse("layer rows missing".into()))?;
                    let cols: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| Error::Parse("layer cols missing".into()))?;
                    let mut m = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let row_line = lines
                            .next()
                            .ok_or_else(|| Error::Parse(format!("layer {idx} truncated at row {r}")))?;
                        let entries: Vec<&str> = row_line.split_whitespace().collect();
                        if entries.len() != cols {
                            return Err(Error::Parse(format!(
                                "layer {idx} row {r}: expected {cols} entries, got {}",
                                entries.len()
                            )));
                        }
                        for (c, e) in entries.iter().enumerate() {
                            m.set(r, c, parse_f64(e)?);
                        }
                    }
                    weights.push(m);
                }
                other => return Err(Error::Parse(format!("unknown field '{other}'"))),
            }
        }
        let require = |k: &str| -> Result<f64> {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Parse(format!("missing field '{k}'")))
        };
        let config = NetworkConfig {
            widths,
            expression: expression.ok_or_else(|| Error::Parse("missing expression".into()))?,
            dt: dt.ok_or_else(|| Error::Parse("missing dt".into()))?,
            horizon: horizon.ok_or_else(|| Error::Parse("missing horizon".into()))?,
            params: NeuronParams::new(
                require("tau_m")?,
                require("tau_r")?,
                require("u_rest")?,
                require("u_firing")?,
                require("u_reset")?,
                require("u_init")?,
            )?,
            kernels,
            weight_norm_cap: require("weight_norm_cap")?,
        };
        Network::new(config, weights)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(widths: &[usize], expression: Expression, t: f64, dt: f64) -> NetworkConfig {
        let params = NeuronParams::default();
        NetworkConfig {
            widths: widths.to_vec(),
            expression,
            dt,
            horizon: t,
            kernels: match expression {
                Expression::Srm => Some(SrmKernels::lif_matched(&params)),
                _ => None,
            },
            params,
            weight_norm_cap: 3.0,
        }
    }

    #[test]
    fn aggregate_examples() {
        let id = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(aggregate(&id, &[0.3, -0.4]).unwrap(), vec![0.3, -0.4]);
        let zero = Matrix::zeros(2, 2);
        assert_eq!(aggregate(&zero, &[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        let w = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(aggregate(&w, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert!(aggregate(&w, &[1.0]).is_err());
    }

    #[test]
    fn project_examples() {
        let cfg = config(&[1, 1], Expression::Def, 4.0, 1.0);
        // Inside the ball: unchanged.
        let w = Matrix::from_rows(vec![vec![1.5]]).unwrap();
        let net = Network::new(cfg.clone(), vec![w.clone()]).unwrap();
        assert_eq!(net.weights()[0], w);
        // Outside: rescaled onto the cap.
        let w = Matrix::from_rows(vec![vec![6.0]]).unwrap();
        let net = Network::new(cfg.clone(), vec![w]).unwrap();
        assert!((net.weights()[0].get(0, 0) - 3.0).abs() < 1e-15);
        // Zero matrix stays zero.
        let net = Network::new(cfg, vec![Matrix::zeros(1, 1)]).unwrap();
        assert_eq!(net.weights()[0].get(0, 0), 0.0);
    }

    #[test]
    fn random_init_sits_inside_the_ball() {
        let cfg = config(&[2, 4, 1], Expression::Def, 10.0, 1.0);
        let net = Network::random(cfg, 7).unwrap();
        for w in net.weights() {
            assert!((w.norm2() - 1.5).abs() < 1e-12); // M_w / 2
        }
        let again = Network::random(net.config.clone(), 7).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn zero_input_zero_init_gives_zero_output() {
        for expr in Expression::ALL {
            let cfg = config(&[2, 3, 1], expr, 20.0, 1.0);
            let net = Network::random(cfg.clone(), 3).unwrap();
            let input = MultiTrace::zeros(0.0, 1.0, 2, cfg.grid_len()).unwrap();
            let rec = net.forward(&input).unwrap();
            assert!(
                rec.output.channel(0).iter().all(|&v| v == 0.0),
                "{expr} output not identically zero"
            );
        }
    }

    #[test]
    fn single_neuron_def_matches_scalar_recursion() {
        // One layer, one weight; the vector pipeline must reproduce the
        // hand-stepped excite/reset scalar recursion exactly.
        let cfg = config(&[1, 1], Expression::Def, 30.0, 0.5);
        let p = cfg.params;
        let w = 0.8;
        let net = Network::new(cfg.clone(), vec![Matrix::from_rows(vec![vec![w]]).unwrap()]).unwrap();
        let c_in = 0.6;
        let input = MultiTrace::new(0.0, 0.5, vec![vec![c_in; cfg.grid_len()]]).unwrap();
        let rec = net.forward(&input).unwrap();

        let mut ur = reset(p.u_init, excite(p.u_init, &p), &p);
        for k in 1..cfg.grid_len() {
            let u = neuron::eval_eid(k as f64 * 0.5, k as f64 * 0.5 - 0.5, ur, w * c_in, &p).unwrap();
            let s = excite(u, &p);
            let rel = (rec.output.channel(0)[k] - s).abs() / s.abs().max(1e-12);
            assert!(rel < 1e-12, "step {k}: {} vs {}", rec.output.channel(0)[k], s);
            ur = reset(u, s, &p);
        }
    }

    #[test]
    fn output_is_the_excitation_of_last_layer_potentials() {
        // The read-out is f_e(u^(L)) pointwise, and f_e is homogeneous in
        // 1/u_firing: doubling the threshold halves the spike read of the
        // same potentials.
        let cfg = config(&[1, 1], Expression::Def, 10.0, 1.0);
        let p = cfg.params;
        let w = Matrix::from_rows(vec![vec![1.0]]).unwrap();
        let input = MultiTrace::new(0.0, 1.0, vec![vec![0.5; cfg.grid_len()]]).unwrap();
        let rec = Network::new(cfg, vec![w]).unwrap().forward(&input).unwrap();
        let mut doubled = p;
        doubled.u_firing = 2.0 * p.u_firing;
        for (k, &u) in rec.layer_potentials[0].channel(0).iter().enumerate() {
            let s = rec.output.channel(0)[k];
            assert_eq!(s, excite(u, &p));
            assert!((excite(u, &doubled) - s / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn def_and_eid_backends_agree() {
        let cfg_def = config(&[2, 3, 2], Expression::Def, 50.0, 0.5);
        let mut cfg_eid = cfg_def.clone();
        cfg_eid.expression = Expression::Eid;
        let net_def = Network::random(cfg_def, 11).unwrap();
        let net_eid = Network::new(cfg_eid, net_def.weights().to_vec()).unwrap();
        let input = MultiTrace::new(
            0.0,
            0.5,
            vec![vec![0.04; net_def.config.grid_len()], vec![-0.02; net_def.config.grid_len()]],
        )
        .unwrap();
        let rec_def = net_def.forward(&input).unwrap();
        let rec_eid = net_eid.forward(&input).unwrap();
        let mut max_abs = 0.0f64;
        let mut max_val = 0.0f64;
        for l in 0..2 {
            for (cu, cv) in rec_def.layer_potentials[l]
                .channels()
                .iter()
                .zip(rec_eid.layer_potentials[l].channels())
            {
                for (a, b) in cu.iter().zip(cv) {
                    max_abs = max_abs.max((a - b).abs());
                    max_val = max_val.max(a.abs());
                }
            }
        }
        assert!(max_abs <= 1e-12 * max_val.max(1.0), "Δ={max_abs}");
    }

    #[test]
    fn dta_converges_to_def_at_first_order() {
        let t_end = 8.0;
        let weights = vec![
            Matrix::from_rows(vec![vec![0.5], vec![0.3]]).unwrap(),
            Matrix::from_rows(vec![vec![0.4, 0.4]]).unwrap(),
        ];
        let endpoint_gap = |dt: f64| {
            let cfg_def = config(&[1, 2, 1], Expression::Def, t_end, dt);
            let mut cfg_dta = cfg_def.clone();
            cfg_dta.expression = Expression::Dta;
            let net_def = Network::new(cfg_def, weights.clone()).unwrap();
            let net_dta = Network::new(cfg_dta, weights.clone()).unwrap();
            let len = net_def.config.grid_len();
            // Low drive keeps the quadratic reset negligible, so the gap
            // is dominated by the integrator difference.
            let input = MultiTrace::new(0.0, dt, vec![vec![0.05; len]]).unwrap();
            let a = net_def.forward(&input).unwrap();
            let b = net_dta.forward(&input).unwrap();
            (a.output.channel(0).last().unwrap() - b.output.channel(0).last().unwrap()).abs()
        };
        let e1 = endpoint_gap(0.1);
        let e2 = endpoint_gap(0.05);
        let ratio = e1 / e2;
        assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn gsf_agrees_with_eid_when_started_at_rest() {
        let dt = 1e-3;
        let t_end = 1.0;
        let mut cfg = config(&[1, 1], Expression::Eid, t_end, dt);
        cfg.params.u_init = cfg.params.u_rest;
        let mut cfg_gsf = cfg.clone();
        cfg_gsf.expression = Expression::Gsf;
        let w = Matrix::from_rows(vec![vec![1.0]]).unwrap();
        let net_eid = Network::new(cfg.clone(), vec![w.clone()]).unwrap();
        let net_gsf = Network::new(cfg_gsf, vec![w]).unwrap();
        let input = MultiTrace::new(0.0, dt, vec![vec![0.8; cfg.grid_len()]]).unwrap();
        let a = net_eid.forward(&input).unwrap();
        let b = net_gsf.forward(&input).unwrap();
        let mut max_gap = 0.0f64;
        for (x, y) in a.output.channel(0).iter().zip(b.output.channel(0)) {
            max_gap = max_gap.max((x - y).abs());
        }
        assert!(max_gap <= 1e-6, "gap {max_gap}");
    }

    #[test]
    fn zeroed_layer_forces_downstream_to_zero_trajectory() {
        let cfg = config(&[2, 3, 3, 1], Expression::Def, 20.0, 1.0);
        let mut net = Network::random(cfg.clone(), 23).unwrap();
        net.weights_mut()[1] = Matrix::zeros(3, 3);
        let len = cfg.grid_len();
        let input =
            MultiTrace::new(0.0, 1.0, vec![vec![0.05; len], vec![-0.05; len]]).unwrap();
        let rec = net.forward(&input).unwrap();

        // Layers at and above the zeroed one follow the zero-input trajectory.
        let zero_input = MultiTrace::zeros(0.0, 1.0, 2, len).unwrap();
        let rec_zero = Network::random(cfg, 23)
            .map(|mut n| {
                n.weights_mut()[1] = Matrix::zeros(3, 3);
                n
            })
            .unwrap()
            .forward(&zero_input)
            .unwrap();
        for l in 1..3 {
            assert_eq!(rec.layer_spikes[l], rec_zero.layer_spikes[l], "layer {l}");
        }
    }

    #[test]
    fn forward_rejects_mismatched_input() {
        let cfg = config(&[2, 1], Expression::Def, 10.0, 1.0);
        let net = Network::random(cfg.clone(), 1).unwrap();
        let wrong_channels = MultiTrace::zeros(0.0, 1.0, 3, cfg.grid_len()).unwrap();
        assert!(net.forward(&wrong_channels).is_err());
        let wrong_len = MultiTrace::zeros(0.0, 1.0, 2, cfg.grid_len() + 1).unwrap();
        assert!(net.forward(&wrong_len).is_err());
        let mut srm_cfg = cfg;
        srm_cfg.expression = Expression::Srm;
        srm_cfg.kernels = None;
        assert!(srm_cfg.validate().is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = config(&[2, 4, 1], Expression::Srm, 40.0, 1.0);
        let net = Network::random(cfg.clone(), 99).unwrap();
        let len = cfg.grid_len();
        let mut chans = vec![vec![0.0; len], vec![0.0; len]];
        for k in (0..len).step_by(7) {
            chans[0][k] = if k % 14 == 0 { 1.0 } else { -1.0 };
        }
        for k in (0..len).step_by(11) {
            chans[1][k] = 1.0;
        }
        let input = MultiTrace::new(0.0, 1.0, chans).unwrap();
        let a = net.forward(&input).unwrap();
        let b = net.forward(&input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_roundtrip_is_exact() {
        for expr in Expression::ALL {
            let cfg = config(&[2, 3, 1], expr, 25.0, 0.5);
            let net = Network::random(cfg, 1234).unwrap();
            let text = net.to_text();
            let back = Network::from_text(&text).unwrap();
            assert_eq!(net, back, "{expr} roundtrip");
            assert_eq!(text, back.to_text());
        }
    }

    #[test]
    fn from_text_rejects_garbage() {
        assert!(Network::from_text("not a network").is_err());
        assert!(Network::from_text("snngb-network v1\nexpression DEF\nend\n").is_err());
    }
}
