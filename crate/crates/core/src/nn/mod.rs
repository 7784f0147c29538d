//! Linear, feed-forward and recurrent networks with exact analytic gradients.
//!
//! Parameters live in a flat list of named row-major [`Param`]s whose order
//! is fixed by the [`NetworkSpec`]. Forward passes in training mode return a
//! [`Tape`] that [`Network::backward`] consumes; gradients accumulate into a
//! [`Gradients`] buffer aligned with the parameter list.

mod ffnn;
mod kernels;
mod rnn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub use ffnn::forward_ffnn;
pub use rnn::{forward_rnn, rnn_readout};

/// Standard deviation of the `random_normal` initializer.
pub const RANDOM_NORMAL_SD: f64 = 0.05;

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    XavierNormal,
    RandomNormal,
    HeNormal,
}

impl InitScheme {
    pub fn sd(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            InitScheme::XavierNormal => (2.0 / (fan_in + fan_out) as f64).sqrt(),
            InitScheme::HeNormal => (2.0 / fan_in as f64).sqrt(),
            InitScheme::RandomNormal => RANDOM_NORMAL_SD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    /// Identity; reserved for output layers.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    Vanilla,
    Lstm,
    Gru,
}

impl CellType {
    /// Number of stacked gate blocks in the input and recurrent matrices.
    pub fn gates(self) -> usize {
        match self {
            CellType::Vanilla => 1,
            CellType::Gru => 3,
            CellType::Lstm => 4,
        }
    }
}

/// Recurrent cell and direction, written `lstm`, `b-lstm`, etc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CellKind {
    pub cell: CellType,
    pub bidirectional: bool,
}

impl CellKind {
    pub const fn new(cell: CellType, bidirectional: bool) -> Self {
        Self { cell, bidirectional }
    }

    pub fn directions(self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// The six cells of the recurrent search space.
    pub const ALL: [CellKind; 6] = [
        CellKind::new(CellType::Vanilla, false),
        CellKind::new(CellType::Lstm, false),
        CellKind::new(CellType::Gru, false),
        CellKind::new(CellType::Vanilla, true),
        CellKind::new(CellType::Lstm, true),
        CellKind::new(CellType::Gru, true),
    ];
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.cell {
            CellType::Vanilla => "vanilla",
            CellType::Lstm => "lstm",
            CellType::Gru => "gru",
        };
        if self.bidirectional {
            write!(f, "b-{name}")
        } else {
            f.write_str(name)
        }
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (bidirectional, rest) = match lower.strip_prefix("b-") {
            Some(r) => (true, r),
            None => (false, lower.as_str()),
        };
        let cell = match rest {
            "vanilla" => CellType::Vanilla,
            "lstm" => CellType::Lstm,
            "gru" => CellType::Gru,
            _ => return Err(Error::InvalidSpec(format!("unknown cell {s}"))),
        };
        Ok(Self { cell, bidirectional })
    }
}

impl TryFrom<String> for CellKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CellKind> for String {
    fn from(c: CellKind) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Linear,
    Ffnn,
    Rnn,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Linear => "linear",
            Arch::Ffnn => "ffnn",
            Arch::Rnn => "rnn",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Arch::Linear),
            "ffnn" => Ok(Arch::Ffnn),
            "rnn" => Ok(Arch::Rnn),
            _ => Err(Error::InvalidSpec(format!("unknown architecture {s}"))),
        }
    }
}

/// Architecture plus the structural hyperparameters of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub arch: Arch,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub nodes_per_layer: usize,
    /// Hidden activation (FFNN) or candidate/output activation (RNN cells).
    pub activation: Activation,
    pub cell: Option<CellKind>,
    pub dropout_p: f64,
    pub init: InitScheme,
    pub window_t: Option<usize>,
}

impl NetworkSpec {
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            arch: Arch::Linear,
            input_dim,
            output_dim,
            hidden_layers: 0,
            nodes_per_layer: 0,
            activation: Activation::None,
            cell: None,
            dropout_p: 0.0,
            init: InitScheme::XavierNormal,
            window_t: None,
        }
    }

    pub fn ffnn(
        input_dim: usize,
        output_dim: usize,
        hidden_layers: usize,
        nodes: usize,
        activation: Activation,
    ) -> Self {
        Self {
            arch: Arch::Ffnn,
            hidden_layers,
            nodes_per_layer: nodes,
            activation,
            ..Self::linear(input_dim, output_dim)
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn rnn(
        input_dim: usize,
        output_dim: usize,
        cell: CellKind,
        layers: usize,
        nodes: usize,
        activation: Activation,
        window_t: usize,
    ) -> Self {
        Self {
            arch: Arch::Rnn,
            hidden_layers: layers,
            nodes_per_layer: nodes,
            activation,
            cell: Some(cell),
            window_t: Some(window_t),
            ..Self::linear(input_dim, output_dim)
        }
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_p = p;
        self
    }

    pub fn with_init(mut self, init: InitScheme) -> Self {
        self.init = init;
        self
    }

    /// Number of consecutive input frames one sample spans.
    pub fn seq_len(&self) -> usize {
        match self.arch {
            Arch::Rnn => self.window_t.unwrap_or(1),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.input_dim == 0 || self.output_dim == 0 {
            return bad("input and output dimensions must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout probability must lie in [0, 1)");
        }
        match self.arch {
            Arch::Linear => {
                if self.hidden_layers != 0 {
                    return bad("linear models have no hidden layers");
                }
            }
            Arch::Ffnn | Arch::Rnn => {
                if self.hidden_layers == 0 || self.nodes_per_layer == 0 {
                    return bad("hidden layers and nodes must be positive");
                }
                if self.activation == Activation::None {
                    return bad("the identity activation is reserved for the output layer");
                }
            }
        }
        if self.arch == Arch::Rnn {
            if self.cell.is_none() {
                return bad("recurrent networks need a cell kind");
            }
            if self.window_t.unwrap_or(0) == 0 {
                return bad("recurrent networks need a positive window length");
            }
        } else if self.cell.is_some() {
            return bad("cell kind is only meaningful for recurrent networks");
        }
        Ok(())
    }

    /// `(name, rows, cols)` of every parameter in storage order.
    pub(crate) fn layout(&self) -> Vec<(String, usize, usize)> {
        let (i, o, k) = (self.input_dim, self.output_dim, self.nodes_per_layer);
        let mut out = Vec::new();
        match self.arch {
            Arch::Linear => {
                out.push(("output.weight".into(), o, i));
                out.push(("output.bias".into(), o, 1));
            }
            Arch::Ffnn => {
                let mut fan_in = i;
                for l in 0..self.hidden_layers {
                    out.push((format!("hidden{l}.weight"), k, fan_in));
                    out.push((format!("hidden{l}.bias"), k, 1));
                    fan_in = k;
                }
                out.push(("output.weight".into(), o, k));
                out.push(("output.bias".into(), o, 1));
            }
            Arch::Rnn => {
                let cell = self.cell.expect("validated");
                let g = cell.cell.gates();
                let dirs = cell.directions();
                let mut fan_in = i;
                for l in 0..self.hidden_layers {
                    for d in 0..dirs {
                        let tag = if d == 0 { "fwd" } else { "bwd" };
                        out.push((format!("rnn{l}.{tag}.w_input"), g * k, fan_in));
                        out.push((format!("rnn{l}.{tag}.w_recurrent"), g * k, k));
                        out.push((format!("rnn{l}.{tag}.bias"), g * k, 1));
                    }
                    fan_in = dirs * k;
                }
                out.push(("head.weight".into(), o, dirs * k));
                out.push(("head.bias".into(), o, 1));
            }
        }
        out
    }
}

/// Exact trainable parameter count (weights plus biases).
pub fn count_params(spec: &NetworkSpec) -> Result<usize> {
    spec.validate()?;
    let (i, o, k, n) = (
        spec.input_dim,
        spec.output_dim,
        spec.nodes_per_layer,
        spec.hidden_layers,
    );
    Ok(match spec.arch {
        Arch::Linear => i * o + o,
        Arch::Ffnn => (i * k + k) + (n - 1) * (k * k + k) + (k * o + o),
        Arch::Rnn => {
            let cell = spec.cell.expect("validated");
            let (g, d) = (cell.cell.gates(), cell.directions());
            let first = d * g * k * (i + k + 1);
            let rest = (n - 1) * d * g * k * (d * k + k + 1);
            first + rest + d * k * o + o
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Param {
    pub fn is_bias(&self) -> bool {
        self.name.ends_with("bias")
    }
}

/// Gradient buffers aligned with [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            values: net.params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for g in &mut self.values {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }
}

/// Intermediate values of one training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    generation: u64,
    kind: TapeKind,
}

#[derive(Debug, Clone)]
enum TapeKind {
    Ffnn(ffnn::FfnnTape),
    Rnn(rnn::RnnTape),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "WeightsFile", into = "WeightsFile")]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<Param>,
    generation: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.params == other.params
    }
}

/// Allocates parameters for `spec`: normal weights at the scheme's scale, zero biases.
pub fn init_network(spec: &NetworkSpec, rng: &mut RngStream) -> Result<Network> {
    spec.validate()?;
    let params = spec
        .layout()
        .into_iter()
        .map(|(name, rows, cols)| {
            let values = if name.ends_with("bias") {
                vec![0.0; rows * cols]
            } else {
                let sd = spec.init.sd(cols, rows);
                (0..rows * cols).map(|_| sd * rng.normal()).collect()
            };
            Param {
                name,
                rows,
                cols,
                values,
            }
        })
        .collect();
    Ok(Network {
        spec: spec.clone(),
        params,
        generation: 0,
    })
}

/// Inverted-dropout mask: 0 with probability `p`, else `1 / (1 - p)`.
pub fn dropout_mask(rng: &mut RngStream, rows: usize, cols: usize, p: f64) -> Result<Matrix> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    Matrix::new(rows, cols, mask_values(rng, rows * cols, p))
}

pub(crate) fn mask_values(rng: &mut RngStream, n: usize, p: f64) -> Vec<f64> {
    if p == 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 / (1.0 - p);
    (0..n)
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// On-disk weight format: `{format_version, spec, layers: [{name, shape, values}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsFile {
    pub format_version: u32,
    pub spec: NetworkSpec,
    pub layers: Vec<LayerRecord>,
}

impl From<Network> for WeightsFile {
    fn from(net: Network) -> Self {
        WeightsFile {
            format_version: WEIGHTS_FORMAT_VERSION,
            spec: net.spec,
            layers: net
                .params
                .into_iter()
                .map(|p| LayerRecord {
                    name: p.name,
                    shape: [p.rows, p.cols],
                    values: p.values,
                })
                .collect(),
        }
    }
}

impl TryFrom<WeightsFile> for Network {
    type Error = Error;

    fn try_from(file: WeightsFile) -> Result<Self> {
        if file.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(file.format_version));
        }
        let params = file
            .layers
            .into_iter()
            .map(|l| Param {
                name: l.name,
                rows: l.shape[0],
                cols: l.shape[1],
                values: l.values,
            })
            .collect();
        Network::from_parts(file.spec, params)
    }
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    /// Mutable access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut [Param] {
        self.generation += 1;
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.generation += 1;
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        let want = self.spec.seq_len() * self.spec.input_dim;
        if input.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, network expects {} ({} x {})",
                input.len(),
                want,
                self.spec.seq_len(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Evaluation-mode forward pass on one sample (`seq_len x input_dim`, row-major).
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(match self.spec.arch {
            Arch::Linear | Arch::Ffnn => ffnn::forward(self, input, None).0,
            Arch::Rnn => rnn::forward(self, input, None).0,
        })
    }

    /// Training-mode forward pass. Dropout is sampled from `dropout` when the
    /// spec has a positive rate; `None` disables it.
    pub fn forward_train(
        &self,
        input: &[f64],
        dropout: Option<&mut RngStream>,
    ) -> Result<(Vec<f64>, Tape)> {
        self.check_input(input)?;
        let dropout = dropout.filter(|_| self.spec.dropout_p > 0.0);
        let (out, kind) = match self.spec.arch {
            Arch::Linear | Arch::Ffnn => {
                let (y, t) = ffnn::forward(self, input, dropout);
                (y, TapeKind::Ffnn(t))
            }
            Arch::Rnn => {
                let (y, t) = rnn::forward(self, input, dropout);
                (y, TapeKind::Rnn(t))
            }
        };
        Ok((
            out,
            Tape {
                generation: self.generation,
                kind,
            },
        ))
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
    pub fn backward(&self, tape: &Tape, d_out: &[f64], grads: &mut Gradients) -> Result<()> {
        if tape.generation != self.generation {
            return Err(Error::StaleCache);
        }
        if d_out.len() != self.spec.output_dim {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} values, expected {}",
                d_out.len(),
                self.spec.output_dim
            )));
        }
        if grads.values.len() != self.params.len() {
            return Err(Error::ShapeMismatch("gradient buffer does not match network".into()));
        }
        match &tape.kind {
            TapeKind::Ffnn(t) => ffnn::backward(self, t, d_out, grads),
            TapeKind::Rnn(t) => rnn::backward(self, t, d_out, grads),
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightsFile = serde_json::from_str(text)?;
        Network::try_from(file)
    }

    /// Rebuilds a network from explicit parameters, checking them against the spec layout.
    pub fn from_parts(spec: NetworkSpec, params: Vec<Param>) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        if layout.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "spec expects {} parameter tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, rows, cols), p) in layout.iter().zip(&params) {
            if *name != p.name || (*rows, *cols) != (p.rows, p.cols) || p.values.len() != rows * cols {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {} does not match expected {name} {rows}x{cols}",
                    p.name
                )));
            }
        }
        Ok(Self {
            spec,
            params,
            generation: 0,
        })
    }
}
