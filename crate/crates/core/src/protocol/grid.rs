use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Arch, CellKind, CellType, InitScheme, NetworkSpec};
use crate::optim::{OptimizerConfig, OptimizerKind, TrainConfig};

/// One named grid axis with its admissible values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "values", rename_all = "snake_case")]
pub enum Axis {
    Init(Vec<InitScheme>),
    Optimizer(Vec<OptimizerKind>),
    BatchSize(Vec<usize>),
    Epochs(Vec<usize>),
    Activation(Vec<Activation>),
    Nodes(Vec<usize>),
    HiddenLayers(Vec<usize>),
    LearningRate(Vec<f64>),
    Dropout(Vec<f64>),
    Cell(Vec<CellKind>),
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Init(_) => "init",
            Axis::Optimizer(_) => "optimizer",
            Axis::BatchSize(_) => "batch_size",
            Axis::Epochs(_) => "epochs",
            Axis::Activation(_) => "activation",
            Axis::Nodes(_) => "nodes",
            Axis::HiddenLayers(_) => "hidden_layers",
            Axis::LearningRate(_) => "learning_rate",
            Axis::Dropout(_) => "dropout",
            Axis::Cell(_) => "cell",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::Init(v) => v.len(),
            Axis::Optimizer(v) => v.len(),
            Axis::BatchSize(v) | Axis::Epochs(v) | Axis::Nodes(v) | Axis::HiddenLayers(v) => v.len(),
            Axis::Activation(v) => v.len(),
            Axis::LearningRate(v) | Axis::Dropout(v) => v.len(),
            Axis::Cell(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn apply(&self, i: usize, c: &mut HyperConfig) {
        match self {
            Axis::Init(v) => c.init = v[i],
            Axis::Optimizer(v) => c.optimizer = v[i],
            Axis::BatchSize(v) => c.batch_size = v[i],
            Axis::Epochs(v) => c.epochs = v[i],
            Axis::Activation(v) => c.activation = v[i],
            Axis::Nodes(v) => c.nodes = v[i],
            Axis::HiddenLayers(v) => c.hidden_layers = v[i],
            Axis::LearningRate(v) => c.learning_rate = v[i],
            Axis::Dropout(v) => c.dropout = v[i],
            Axis::Cell(v) => c.cell = Some(v[i]),
        }
    }
}

/// One point of a grid: everything needed to build and train a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub arch: Arch,
    pub init: InitScheme,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub activation: Activation,
    pub nodes: usize,
    pub hidden_layers: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub cell: Option<CellKind>,
}

impl HyperConfig {
    /// Values used for any axis a grid leaves out.
    pub fn base(arch: Arch) -> Self {
        Self {
            arch,
            init: InitScheme::XavierNormal,
            optimizer: OptimizerKind::Adam,
            batch_size: 64,
            epochs: 50,
            activation: if arch == Arch::Linear {
                Activation::None
            } else {
                Activation::Relu
            },
            nodes: if arch == Arch::Linear { 0 } else { 32 },
            hidden_layers: match arch {
                Arch::Linear => 0,
                Arch::Ffnn => 2,
                Arch::Rnn => 1,
            },
            learning_rate: 0.001,
            dropout: 0.0,
            cell: (arch == Arch::Rnn).then_some(CellKind::new(CellType::Lstm, false)),
        }
    }

    pub fn network_spec(&self, input_dim: usize, output_dim: usize, window_t: usize) -> NetworkSpec {
        let spec = match self.arch {
            Arch::Linear => NetworkSpec::linear(input_dim, output_dim),
            Arch::Ffnn => NetworkSpec::ffnn(
                input_dim,
                output_dim,
                self.hidden_layers,
                self.nodes,
                self.activation,
            ),
            Arch::Rnn => NetworkSpec::rnn(
                input_dim,
                output_dim,
                self.cell.unwrap_or(CellKind::new(CellType::Lstm, false)),
                self.hidden_layers,
                self.nodes,
                self.activation,
                window_t,
            ),
        };
        spec.with_dropout(self.dropout).with_init(self.init)
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig::new(self.optimizer, self.learning_rate)
    }

    pub fn train_config(&self, shuffle_seed: u64) -> TrainConfig {
        TrainConfig::new(self.batch_size, self.epochs, shuffle_seed)
    }
}

/// Ordered axes over one architecture. Enumeration is lexicographic with
/// the first axis varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub arch: Arch,
    pub axes: Vec<Axis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Table1,
    Table2,
    Smoke,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
            Preset::Smoke => "smoke",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Preset::Table1),
            "table2" => Ok(Preset::Table2),
            "smoke" => Ok(Preset::Smoke),
            _ => Err(Error::InvalidConfig(format!("unknown grid preset {s}"))),
        }
    }
}

const OPTIMIZERS: [OptimizerKind; 3] = [OptimizerKind::Adam, OptimizerKind::Sgd, OptimizerKind::Rmsprop];
const ACTIVATIONS: [Activation; 3] = [Activation::Relu, Activation::Tanh, Activation::Sigmoid];

impl GridSpec {
    pub fn new(arch: Arch, axes: Vec<Axis>) -> Result<Self> {
        let g = Self { arch, axes };
        g.validate()?;
        Ok(g)
    }

    /// Feed-forward search space: 43,740 configurations.
    pub fn table1() -> Self {
        Self {
            arch: Arch::Ffnn,
            axes: vec![
                Axis::Init(vec![
                    InitScheme::XavierNormal,
                    InitScheme::RandomNormal,
                    InitScheme::HeNormal,
                ]),
                Axis::Optimizer(OPTIMIZERS.to_vec()),
                Axis::BatchSize(vec![64, 256, 1028]),
                Axis::Epochs(vec![50, 100, 200]),
                Axis::Activation(ACTIVATIONS.to_vec()),
                Axis::Nodes((1..=9).map(|k| 200 * k).collect()),
                Axis::HiddenLayers(vec![2, 4, 6, 8, 10]),
                Axis::LearningRate(vec![0.001, 0.005]),
                Axis::Dropout(vec![0.0, 0.2]),
            ],
        }
    }

    /// Recurrent search space: 23,328 configurations.
    pub fn table2() -> Self {
        Self {
            arch: Arch::Rnn,
            axes: vec![
                Axis::Cell(CellKind::ALL.to_vec()),
                Axis::Optimizer(OPTIMIZERS.to_vec()),
                Axis::BatchSize(vec![64, 128, 256]),
                Axis::Epochs(vec![50, 100, 200]),
                Axis::Activation(ACTIVATIONS.to_vec()),
                Axis::Nodes(vec![128, 256, 512]),
                Axis::HiddenLayers(vec![1, 2, 3, 4]),
                Axis::LearningRate(vec![0.001, 0.005]),
                Axis::Dropout(vec![0.1, 0.2]),
            ],
        }
    }

    /// Small grids that train in seconds to minutes.
    pub fn smoke(arch: Arch) -> Self {
        let axes = match arch {
            Arch::Linear => Vec::new(),
            Arch::Ffnn => vec![
                Axis::Epochs(vec![40]),
                Axis::Activation(vec![Activation::Relu, Activation::Tanh]),
                Axis::Nodes(vec![16, 32]),
                Axis::HiddenLayers(vec![2]),
                Axis::LearningRate(vec![0.001, 0.005]),
            ],
            Arch::Rnn => vec![
                Axis::Cell(vec![
                    CellKind::new(CellType::Vanilla, false),
                    CellKind::new(CellType::Lstm, false),
                    CellKind::new(CellType::Gru, false),
                ]),
                Axis::BatchSize(vec![32]),
                Axis::Epochs(vec![20]),
                Axis::Activation(vec![Activation::Tanh]),
                Axis::Nodes(vec![16, 32]),
                Axis::HiddenLayers(vec![1]),
                Axis::LearningRate(vec![0.001, 0.005]),
            ],
        };
        Self { arch, axes }
    }

    pub fn preset(preset: Preset, arch: Arch) -> Result<Self> {
        match (preset, arch) {
            (Preset::Table1, Arch::Ffnn) => Ok(Self::table1()),
            (Preset::Table2, Arch::Rnn) => Ok(Self::table2()),
            (Preset::Smoke, a) => Ok(Self::smoke(a)),
            (p, a) => Err(Error::InvalidConfig(format!("preset {p} does not apply to {a}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.axes.iter().find(|a| a.is_empty()) {
            return Err(Error::EmptyAxis(a.name().to_string()));
        }
        Ok(())
    }

    /// Product of axis lengths, without enumerating.
    pub fn count(&self) -> Result<usize> {
        self.validate()?;
        Ok(self.axes.iter().map(Axis::len).product())
    }

    /// Configuration at `index`, decoding it as a mixed-radix number.
    pub fn config_at(&self, index: usize) -> Result<HyperConfig> {
        let n = self.count()?;
        if index >= n {
            return Err(Error::InvalidConfig(format!("config index {index} out of {n}")));
        }
        let mut c = HyperConfig::base(self.arch);
        let mut rem = index;
        for axis in self.axes.iter().rev() {
            axis.apply(rem % axis.len(), &mut c);
            rem /= axis.len();
        }
        Ok(c)
    }

    /// Streams configurations in enumeration order.
    pub fn iter(&self) -> Result<GridIter<'_>> {
        self.validate()?;
        Ok(GridIter {
            grid: self,
            digits: vec![0; self.axes.len()],
            done: false,
        })
    }
}

/// Odometer over the grid's axes.
pub struct GridIter<'a> {
    grid: &'a GridSpec,
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for GridIter<'_> {
    type Item = HyperConfig;

    fn next(&mut self) -> Option<HyperConfig> {
        if self.done {
            return None;
        }
        let mut c = HyperConfig::base(self.grid.arch);
        for (axis, &d) in self.grid.axes.iter().zip(&self.digits) {
            axis.apply(d, &mut c);
        }
        self.done = true;
        for (k, axis) in self.grid.axes.iter().enumerate().rev() {
            self.digits[k] += 1;
            if self.digits[k] < axis.len() {
                self.done = false;
                break;
            }
            self.digits[k] = 0;
        }
        Some(c)
    }
}

/// Enumeration of `grid` in lexicographic order.
pub fn enumerate_grid(grid: &GridSpec) -> Result<GridIter<'_>> {
    grid.iter()
}
