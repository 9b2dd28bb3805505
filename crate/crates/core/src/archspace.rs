//! Architecture search space: concrete CNN descriptions and the codec
//! between them and points of the unit cube.
//!
//! A [`SearchSpace`] is an ordered list of named parameters. Names carry
//! the meaning:
//!
//! | name                          | role                                        |
//! |-------------------------------|---------------------------------------------|
//! | `conv_blocks`                 | number of conv blocks (required)            |
//! | `channels_<i>` / `channels`   | output channels of block `i` / all blocks   |
//! | `kernel_<i>` / `kernel`       | kernel size of block `i` / all blocks       |
//! | `pool_<i>` / `pool`           | pool after block `i` (else [`PoolRule`])    |
//! | `fc_layers`                   | hidden dense layers (default 0)             |
//! | `fc_units_<i>` / `fc_units`   | width of hidden layer `i`                   |
//! | `nonlinearity`                | `"relu"` or `"tanh"` (default relu)         |
//! | `learning_rate`, `momentum`   | SGD hyperparameters (required)              |
//!
//! Coordinates of blocks/layers beyond the decoded count are inactive and
//! ignored by [`SearchSpace::decode`]; [`SearchSpace::encode`] writes 0.5
//! there.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::nn::{LayerSpec, NetworkState, NnError};

pub const KERNEL_SIZES: [usize; 3] = [3, 5, 7];

#[derive(Debug, Clone, PartialEq)]
pub enum SpaceError {
    InvalidSpace(String),
    WrongDimension { expected: usize, got: usize },
    NotRepresentable(String),
    Infeasible(Infeasible),
}

/// A spec whose shape algebra fails, with the trace up to the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasible {
    pub block: usize,
    pub reason: String,
    pub trace: Vec<ShapeStep>,
}

impl fmt::Display for SpaceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceError::InvalidSpace(m) => write!(f, "invalid search space: {m}"),
            SpaceError::WrongDimension { expected, got } => {
                write!(f, "parameter vector has {got} components, space has {expected}")
            }
            SpaceError::NotRepresentable(m) => write!(f, "architecture not representable: {m}"),
            SpaceError::Infeasible(i) => {
                write!(f, "infeasible architecture at block {}: {} (trace:", i.block, i.reason)?;
                for s in &i.trace {
                    write!(f, " {}", s)?;
                }
                f.write_str(")")
            }
        }
    }
}

impl core::error::Error for SpaceError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    Tanh,
}

impl Nonlinearity {
    fn layer(self) -> LayerSpec {
        match self {
            Nonlinearity::Relu => LayerSpec::Relu,
            Nonlinearity::Tanh => LayerSpec::Tanh,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub kernel_size: usize,
    pub pool: bool,
}

/// A candidate CNN: conv blocks (conv → nonlinearity → optional 2×2 pool),
/// then flatten, hidden dense layers (dense → nonlinearity) and an implicit
/// `K`-unit output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub conv_blocks: Vec<ConvBlock>,
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub fc_layers: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
}

/// One entry of a shape trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeStep {
    Conv { block: usize, shape: [usize; 3] },
    Pool { block: usize, shape: [usize; 3] },
    Flatten(usize),
    Dense(usize),
}

impl fmt::Display for ShapeStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeStep::Conv { shape: [c, h, w], .. } => write!(f, "conv[{c}x{h}x{w}]"),
            ShapeStep::Pool { shape: [c, h, w], .. } => write!(f, "pool[{c}x{h}x{w}]"),
            ShapeStep::Flatten(n) => write!(f, "flat[{n}]"),
            ShapeStep::Dense(n) => write!(f, "dense[{n}]"),
        }
    }
}

impl ArchitectureSpec {
    /// Shape algebra for an input of `[C, H, W]` and `classes` outputs.
    pub fn validate(&self, input: [usize; 3], classes: usize) -> Result<Vec<ShapeStep>, SpaceError> {
        let mut trace = Vec::new();
        let fail = |block, reason: String, trace: &Vec<ShapeStep>| {
            Err(SpaceError::Infeasible(Infeasible {
                block,
                reason,
                trace: trace.clone(),
            }))
        };
        if self.conv_blocks.is_empty() {
            return fail(0, "at least one conv block is required".into(), &trace);
        }
        if classes < 2 {
            return fail(0, format!("{classes} classes, need at least 2"), &trace);
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return fail(0, "learning_rate must be > 0 and momentum in [0, 1)".into(), &trace);
        }
        let [mut c, mut h, mut w] = input;
        if c == 0 || h == 0 || w == 0 {
            return fail(0, format!("input {input:?} has a zero extent"), &trace);
        }
        for (b, block) in self.conv_blocks.iter().enumerate() {
            let k = block.kernel_size;
            if block.out_channels == 0 || !KERNEL_SIZES.contains(&k) {
                return fail(b, format!("channels {} / kernel {k} not allowed", block.out_channels), &trace);
            }
            if k > h || k > w {
                return fail(b, format!("kernel {k} exceeds {h}x{w} input"), &trace);
            }
            c = block.out_channels;
            h = h - k + 1;
            w = w - k + 1;
            trace.push(ShapeStep::Conv { block: b, shape: [c, h, w] });
            if block.pool {
                if h < 2 || w < 2 {
                    return fail(b, format!("cannot pool a {h}x{w} map"), &trace);
                }
                h /= 2;
                w /= 2;
                trace.push(ShapeStep::Pool { block: b, shape: [c, h, w] });
            }
        }
        trace.push(ShapeStep::Flatten(c * h * w));
        for (i, &units) in self.fc_layers.iter().enumerate() {
            if units == 0 {
                return fail(self.conv_blocks.len() + i, "dense layer with 0 units".into(), &trace);
            }
            trace.push(ShapeStep::Dense(units));
        }
        trace.push(ShapeStep::Dense(classes));
        Ok(trace)
    }

    pub fn layers(&self, classes: usize) -> Vec<LayerSpec> {
        let act = self.nonlinearity.layer();
        let mut layers = Vec::new();
        for b in &self.conv_blocks {
            layers.push(LayerSpec::Conv2d {
                out_channels: b.out_channels,
                kernel_size: b.kernel_size,
            });
            layers.push(act);
            if b.pool {
                layers.push(LayerSpec::MaxPool2x2);
            }
        }
        layers.push(LayerSpec::Flatten);
        for &u in &self.fc_layers {
            layers.push(LayerSpec::Dense { units: u });
            layers.push(act);
        }
        layers.push(LayerSpec::Dense { units: classes });
        layers
    }

    /// Uninitialised network for this spec.
    pub fn build(&self, input: [usize; 3], classes: usize) -> Result<NetworkState, SpaceError> {
        self.validate(input, classes)?;
        NetworkState::new(self.layers(classes), input).map_err(|e: NnError| SpaceError::InvalidSpace(e.to_string()))
    }

    /// Trainable parameters: conv `C_out·C_in·k² + C_out`, dense `in·out + out`.
    pub fn param_count(&self, input: [usize; 3], classes: usize) -> Result<usize, SpaceError> {
        let trace = self.validate(input, classes)?;
        let mut c_in = input[0];
        let mut fan_in = 0;
        let mut total = 0;
        for step in trace {
            match step {
                ShapeStep::Conv { block, shape } => {
                    let k = self.conv_blocks[block].kernel_size;
                    total += shape[0] * c_in * k * k + shape[0];
                    c_in = shape[0];
                }
                ShapeStep::Pool { .. } => {}
                ShapeStep::Flatten(n) => fan_in = n,
                ShapeStep::Dense(units) => {
                    total += fan_in * units + units;
                    fan_in = units;
                }
            }
        }
        Ok(total)
    }

    /// Stable human-readable identifier, e.g. `c8k5p.c16k3-f64-relu-lr1.000e-2-m0.900`.
    pub fn id(&self) -> String {
        let blocks: Vec<String> = self
            .conv_blocks
            .iter()
            .map(|b| format!("c{}k{}{}", b.out_channels, b.kernel_size, if b.pool { "p" } else { "" }))
            .collect();
        let mut id = blocks.join(".");
        for u in &self.fc_layers {
            id.push_str(&format!("-f{u}"));
        }
        id.push_str(&format!(
            "-{}-lr{:.3e}-m{:.3}",
            self.nonlinearity.name(),
            self.learning_rate,
            self.momentum
        ));
        id
    }
}

/// A categorical choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamKind {
    /// Inclusive integer range.
    Integer { lo: i64, hi: i64 },
    /// Ordered list of choices.
    Categorical { values: Vec<Value> },
    /// Real interval, optionally on a log10 scale.
    Continuous {
        lo: f64,
        hi: f64,
        #[serde(default)]
        log: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl ParamDef {
    pub fn integer(name: &str, lo: i64, hi: i64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Integer { lo, hi },
        }
    }

    pub fn categorical(name: &str, values: Vec<Value>) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical { values },
        }
    }

    pub fn continuous(name: &str, lo: f64, hi: f64, log: bool) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Continuous { lo, hi, log },
        }
    }

    fn check(&self) -> Result<(), SpaceError> {
        let bad = |m: String| Err(SpaceError::InvalidSpace(format!("parameter `{}`: {m}", self.name)));
        match &self.kind {
            ParamKind::Integer { lo, hi } if lo >= hi => bad(format!("lo {lo} must be < hi {hi}")),
            ParamKind::Categorical { values } if values.is_empty() => bad("no categorical values".into()),
            ParamKind::Continuous { lo, hi, .. } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                bad(format!("lo {lo} must be < hi {hi}"))
            }
            ParamKind::Continuous { lo, log: true, .. } if *lo <= 0.0 => bad("log scale needs lo > 0".into()),
            _ => Ok(()),
        }
    }

    /// Unit-cube coordinate → parameter value.
    pub fn decode(&self, u: f64) -> Decoded {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            ParamKind::Integer { lo, hi } => {
                let span = (hi - lo + 1) as f64;
                let x = libm::floor(*lo as f64 + u * span) as i64;
                Decoded::Int(x.min(*hi))
            }
            ParamKind::Categorical { values } => {
                let idx = (libm::floor(u * values.len() as f64) as usize).min(values.len() - 1);
                Decoded::Choice(idx, values[idx].clone())
            }
            ParamKind::Continuous { lo, hi, log } => {
                if *log {
                    let (a, b) = (libm::log10(*lo), libm::log10(*hi));
                    Decoded::Real(libm::pow(10.0, a + u * (b - a)))
                } else {
                    Decoded::Real(lo + u * (hi - lo))
                }
            }
        }
    }

    /// Discrete values map to the centre of their bin; reals invert the
    /// (log-)affine map.
    fn encode_int(&self, x: i64) -> Result<f64, SpaceError> {
        match &self.kind {
            ParamKind::Integer { lo, hi } => {
                if x < *lo || x > *hi {
                    return Err(SpaceError::NotRepresentable(format!("{} = {x} outside [{lo}, {hi}]", self.name)));
                }
                Ok(((x - lo) as f64 + 0.5) / (hi - lo + 1) as f64)
            }
            ParamKind::Categorical { values } => {
                let idx = values
                    .iter()
                    .position(|v| matches!(v, Value::Int(i) if *i == x))
                    .ok_or_else(|| SpaceError::NotRepresentable(format!("{} = {x} is not a listed choice", self.name)))?;
                Ok((idx as f64 + 0.5) / values.len() as f64)
            }
            ParamKind::Continuous { .. } => self.encode_real(x as f64),
        }
    }

    fn encode_value(&self, v: &Value) -> Result<f64, SpaceError> {
        match (&self.kind, v) {
            (ParamKind::Categorical { values }, v) => {
                let idx = values
                    .iter()
                    .position(|c| c == v)
                    .ok_or_else(|| SpaceError::NotRepresentable(format!("{} = {v} is not a listed choice", self.name)))?;
                Ok((idx as f64 + 0.5) / values.len() as f64)
            }
            (_, Value::Int(i)) => self.encode_int(*i),
            (_, Value::Real(r)) => self.encode_real(*r),
            _ => Err(SpaceError::NotRepresentable(format!("{} cannot take {v}", self.name))),
        }
    }

    fn encode_real(&self, x: f64) -> Result<f64, SpaceError> {
        match &self.kind {
            ParamKind::Continuous { lo, hi, log } => {
                let tol = 1e-12 * (hi.abs().max(lo.abs()));
                if x < lo - tol || x > hi + tol {
                    return Err(SpaceError::NotRepresentable(format!("{} = {x} outside [{lo}, {hi}]", self.name)));
                }
                let u = if *log {
                    let (a, b) = (libm::log10(*lo), libm::log10(*hi));
                    (libm::log10(x) - a) / (b - a)
                } else {
                    (x - lo) / (hi - lo)
                };
                Ok(u.clamp(0.0, 1.0))
            }
            ParamKind::Categorical { .. } => self.encode_value(&Value::Real(x)),
            ParamKind::Integer { .. } => Err(SpaceError::NotRepresentable(format!("{} is an integer parameter", self.name))),
        }
    }
}

/// A decoded coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Int(i64),
    Real(f64),
    Choice(usize, Value),
}

impl Decoded {
    fn as_usize(&self, name: &str) -> Result<usize, SpaceError> {
        match self {
            Decoded::Int(i) | Decoded::Choice(_, Value::Int(i)) if *i >= 0 => Ok(*i as usize),
            _ => Err(SpaceError::InvalidSpace(format!("`{name}` must decode to a non-negative integer"))),
        }
    }

    fn as_f64(&self, name: &str) -> Result<f64, SpaceError> {
        match self {
            Decoded::Real(r) | Decoded::Choice(_, Value::Real(r)) => Ok(*r),
            Decoded::Int(i) | Decoded::Choice(_, Value::Int(i)) => Ok(*i as f64),
            _ => Err(SpaceError::InvalidSpace(format!("`{name}` must decode to a number"))),
        }
    }

    fn as_bool(&self, name: &str) -> Result<bool, SpaceError> {
        match self {
            Decoded::Choice(_, Value::Bool(b)) => Ok(*b),
            Decoded::Int(i) | Decoded::Choice(_, Value::Int(i)) => Ok(*i != 0),
            _ => Err(SpaceError::InvalidSpace(format!("`{name}` must decode to a boolean"))),
        }
    }

    fn as_nonlinearity(&self) -> Result<Nonlinearity, SpaceError> {
        match self {
            Decoded::Choice(_, Value::Text(s)) if s == "relu" => Ok(Nonlinearity::Relu),
            Decoded::Choice(_, Value::Text(s)) if s == "tanh" => Ok(Nonlinearity::Tanh),
            _ => Err(SpaceError::InvalidSpace("`nonlinearity` must be \"relu\" or \"tanh\"".into())),
        }
    }
}

/// How blocks without a `pool` parameter decide whether to pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolRule {
    /// Pool when the conv output is at least 4 pixels in both axes.
    #[default]
    WhenAtLeast4,
    Always,
    Never,
}

impl PoolRule {
    fn pools(self, h: usize, w: usize) -> bool {
        match self {
            PoolRule::WhenAtLeast4 => h >= 4 && w >= 4,
            PoolRule::Always => true,
            PoolRule::Never => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamDef>,
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    #[serde(default)]
    pub pool_rule: PoolRule,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamDef>, input_shape: [usize; 3], num_classes: usize, pool_rule: PoolRule) -> Result<Self, SpaceError> {
        let space = Self {
            params,
            input_shape,
            num_classes,
            pool_rule,
        };
        space.check()?;
        Ok(space)
    }

    /// The shipped default: 2–4 conv blocks with per-block channels
    /// {4, 8, 16, 32, 64} and kernels {3, 5}, 0–2 hidden dense layers of
    /// {16, 32, 64, 128, 256} units, relu/tanh, learning rate log-uniform
    /// on [1e-4, 1e-1] and momentum on [0, 0.95].
    pub fn default_for(input_shape: [usize; 3], num_classes: usize) -> Self {
        let ints = |v: &[i64]| v.iter().map(|&i| Value::Int(i)).collect::<Vec<_>>();
        let mut params = vec![ParamDef::integer("conv_blocks", 2, 4)];
        for i in 0..4 {
            params.push(ParamDef::categorical(&format!("channels_{i}"), ints(&[4, 8, 16, 32, 64])));
        }
        for i in 0..4 {
            params.push(ParamDef::categorical(&format!("kernel_{i}"), ints(&[3, 5])));
        }
        params.push(ParamDef::integer("fc_layers", 0, 2));
        for i in 0..2 {
            params.push(ParamDef::categorical(&format!("fc_units_{i}"), ints(&[16, 32, 64, 128, 256])));
        }
        params.push(ParamDef::categorical(
            "nonlinearity",
            vec![Value::Text("relu".into()), Value::Text("tanh".into())],
        ));
        params.push(ParamDef::continuous("learning_rate", 1e-4, 1e-1, true));
        params.push(ParamDef::continuous("momentum", 0.0, 0.95, false));
        Self::new(params, input_shape, num_classes, PoolRule::WhenAtLeast4).expect("default space is valid")
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Index of `<base>_<i>`, falling back to the shared `<base>`.
    fn indexed(&self, base: &str, i: usize) -> Option<usize> {
        self.index(&format!("{base}_{i}")).or_else(|| self.index(base))
    }

    fn max_count(&self, name: &str) -> Result<usize, SpaceError> {
        let Some(i) = self.index(name) else { return Ok(0) };
        let p = &self.params[i];
        match &p.kind {
            ParamKind::Integer { hi, .. } => Ok((*hi).max(0) as usize),
            ParamKind::Categorical { values } => values
                .iter()
                .map(|v| match v {
                    Value::Int(i) if *i >= 0 => Ok(*i as usize),
                    _ => Err(SpaceError::InvalidSpace(format!("`{name}` choices must be non-negative integers"))),
                })
                .try_fold(0, |m, v| v.map(|v| m.max(v))),
            ParamKind::Continuous { .. } => Err(SpaceError::InvalidSpace(format!("`{name}` cannot be continuous"))),
        }
    }

    fn check(&self) -> Result<(), SpaceError> {
        if self.params.is_empty() {
            return Err(SpaceError::InvalidSpace("no parameters".into()));
        }
        for (i, p) in self.params.iter().enumerate() {
            p.check()?;
            if self.params[..i].iter().any(|q| q.name == p.name) {
                return Err(SpaceError::InvalidSpace(format!("duplicate parameter `{}`", p.name)));
            }
        }
        if self.num_classes < 2 {
            return Err(SpaceError::InvalidSpace("need at least 2 classes".into()));
        }
        for required in ["conv_blocks", "learning_rate", "momentum"] {
            if self.index(required).is_none() {
                return Err(SpaceError::InvalidSpace(format!("missing required parameter `{required}`")));
            }
        }
        let blocks = self.max_count("conv_blocks")?;
        for b in 0..blocks {
            for base in ["channels", "kernel"] {
                if self.indexed(base, b).is_none() {
                    return Err(SpaceError::InvalidSpace(format!("no `{base}_{b}` or `{base}` parameter")));
                }
            }
        }
        for l in 0..self.max_count("fc_layers")? {
            if self.indexed("fc_units", l).is_none() {
                return Err(SpaceError::InvalidSpace(format!("no `fc_units_{l}` or `fc_units` parameter")));
            }
        }
        for p in &self.params {
            if !known_name(&p.name) {
                return Err(SpaceError::InvalidSpace(format!("unknown parameter `{}`", p.name)));
            }
        }
        // Every reachable value must decode to the right type.
        for p in &self.params {
            for u in [0.0, 0.5, 1.0] {
                let d = p.decode(u);
                let base = p.name.split('_').next().unwrap_or("");
                match p.name.as_str() {
                    "nonlinearity" => d.as_nonlinearity().map(drop)?,
                    "learning_rate" | "momentum" => d.as_f64(&p.name).map(drop)?,
                    _ if base == "pool" => d.as_bool(&p.name).map(drop)?,
                    _ => d.as_usize(&p.name).map(drop)?,
                }
            }
            if let ParamKind::Categorical { values } = &p.kind {
                for (j, v) in values.iter().enumerate() {
                    if values[..j].contains(v) {
                        return Err(SpaceError::InvalidSpace(format!("`{}` lists {v} twice", p.name)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Unit-cube point → architecture. Fails with `Infeasible` if the
    /// decoded network collapses spatially.
    pub fn decode(&self, v: &[f64]) -> Result<ArchitectureSpec, SpaceError> {
        if v.len() != self.dim() {
            return Err(SpaceError::WrongDimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        let get = |i: usize| self.params[i].decode(v[i]);
        let named = |name: &str| self.index(name).map(get);
        let blocks = named("conv_blocks").expect("checked").as_usize("conv_blocks")?;
        let mut conv_blocks = Vec::with_capacity(blocks);
        let [_, mut h, mut w] = self.input_shape;
        for b in 0..blocks {
            let out_channels = get(self.indexed("channels", b).expect("checked")).as_usize("channels")?;
            let kernel_size = get(self.indexed("kernel", b).expect("checked")).as_usize("kernel")?;
            let (ho, wo) = conv_out(h, w, kernel_size);
            let pool = match self.indexed("pool", b) {
                Some(i) => get(i).as_bool("pool")?,
                None => self.pool_rule.pools(ho, wo),
            };
            conv_blocks.push(ConvBlock {
                out_channels,
                kernel_size,
                pool,
            });
            (h, w) = if pool { (ho / 2, wo / 2) } else { (ho, wo) };
        }
        let fc = match named("fc_layers") {
            Some(d) => d.as_usize("fc_layers")?,
            None => 0,
        };
        let mut fc_layers = Vec::with_capacity(fc);
        for l in 0..fc {
            fc_layers.push(get(self.indexed("fc_units", l).expect("checked")).as_usize("fc_units")?);
        }
        let nonlinearity = match named("nonlinearity") {
            Some(d) => d.as_nonlinearity()?,
            None => Nonlinearity::Relu,
        };
        let spec = ArchitectureSpec {
            conv_blocks,
            nonlinearity,
            fc_layers,
            learning_rate: named("learning_rate").expect("checked").as_f64("learning_rate")?,
            momentum: named("momentum").expect("checked").as_f64("momentum")?,
        };
        spec.validate(self.input_shape, self.num_classes)?;
        Ok(spec)
    }

    /// Architecture → unit-cube point with `decode(encode(spec)) == spec`.
    pub fn encode(&self, spec: &ArchitectureSpec) -> Result<Vec<f64>, SpaceError> {
        let mut v: Vec<Option<f64>> = vec![None; self.dim()];
        let set = |i: usize, u: f64, v: &mut Vec<Option<f64>>| -> Result<(), SpaceError> {
            // A shared parameter must agree across every block that uses it.
            if v[i].is_some_and(|old| (old - u).abs() > 1e-12) {
                return Err(SpaceError::NotRepresentable(format!(
                    "shared parameter `{}` would need two values",
                    self.params[i].name
                )));
            }
            v[i] = Some(u);
            Ok(())
        };
        let nb = spec.conv_blocks.len();
        let i = self.index("conv_blocks").expect("checked");
        set(i, self.params[i].encode_int(nb as i64)?, &mut v)?;
        let [_, mut h, mut w] = self.input_shape;
        for (b, block) in spec.conv_blocks.iter().enumerate() {
            let ci = self
                .indexed("channels", b)
                .ok_or_else(|| SpaceError::NotRepresentable(format!("space has no channels for block {b}")))?;
            set(ci, self.params[ci].encode_int(block.out_channels as i64)?, &mut v)?;
            let ki = self
                .indexed("kernel", b)
                .ok_or_else(|| SpaceError::NotRepresentable(format!("space has no kernel for block {b}")))?;
            set(ki, self.params[ki].encode_int(block.kernel_size as i64)?, &mut v)?;
            let (ho, wo) = conv_out(h, w, block.kernel_size);
            match self.indexed("pool", b) {
                Some(pi) => set(pi, self.params[pi].encode_value(&Value::Bool(block.pool))?, &mut v)?,
                None if self.pool_rule.pools(ho, wo) != block.pool => {
                    return Err(SpaceError::NotRepresentable(format!(
                        "block {b} pooling {} contradicts the space's pool rule",
                        block.pool
                    )))
                }
                None => {}
            }
            (h, w) = if block.pool { (ho / 2, wo / 2) } else { (ho, wo) };
        }
        match self.index("fc_layers") {
            Some(i) => set(i, self.params[i].encode_int(spec.fc_layers.len() as i64)?, &mut v)?,
            None if !spec.fc_layers.is_empty() => {
                return Err(SpaceError::NotRepresentable("space has no hidden dense layers".into()))
            }
            None => {}
        }
        for (l, &u) in spec.fc_layers.iter().enumerate() {
            let i = self
                .indexed("fc_units", l)
                .ok_or_else(|| SpaceError::NotRepresentable(format!("space has no width for dense layer {l}")))?;
            set(i, self.params[i].encode_int(u as i64)?, &mut v)?;
        }
        match self.index("nonlinearity") {
            Some(i) => set(
                i,
                self.params[i].encode_value(&Value::Text(spec.nonlinearity.name().to_string()))?,
                &mut v,
            )?,
            None if spec.nonlinearity != Nonlinearity::Relu => {
                return Err(SpaceError::NotRepresentable("space only has relu".into()))
            }
            None => {}
        }
        let i = self.index("learning_rate").expect("checked");
        set(i, self.params[i].encode_real(spec.learning_rate)?, &mut v)?;
        let i = self.index("momentum").expect("checked");
        set(i, self.params[i].encode_real(spec.momentum)?, &mut v)?;
        Ok(v.into_iter().map(|u| u.unwrap_or(0.5)).collect())
    }
}

fn conv_out(h: usize, w: usize, k: usize) -> (usize, usize) {
    let r = k.saturating_sub(1);
    (h.saturating_sub(r), w.saturating_sub(r))
}

fn known_name(name: &str) -> bool {
    const PLAIN: [&str; 9] = [
        "conv_blocks",
        "channels",
        "kernel",
        "pool",
        "fc_layers",
        "fc_units",
        "nonlinearity",
        "learning_rate",
        "momentum",
    ];
    if PLAIN.contains(&name) {
        return true;
    }
    ["channels_", "kernel_", "pool_", "fc_units_"].iter().any(|p| {
        name.strip_prefix(p)
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> SearchSpace {
        SearchSpace::default_for([1, 28, 28], 10)
    }

    fn block(c: usize, k: usize, pool: bool) -> ConvBlock {
        ConvBlock {
            out_channels: c,
            kernel_size: k,
            pool,
        }
    }

    fn spec(blocks: Vec<ConvBlock>, fc: Vec<usize>) -> ArchitectureSpec {
        ArchitectureSpec {
            conv_blocks: blocks,
            nonlinearity: Nonlinearity::Relu,
            fc_layers: fc,
            learning_rate: 0.01,
            momentum: 0.9,
        }
    }

    #[test]
    fn all_zero_vector_gives_minima() {
        let s = space();
        let a = s.decode(&vec![0.0; s.dim()]).unwrap();
        assert_eq!(a.conv_blocks.len(), 2);
        assert!(a.conv_blocks.iter().all(|b| b.out_channels == 4 && b.kernel_size == 3));
        assert!(a.fc_layers.is_empty());
        assert_eq!(a.nonlinearity, Nonlinearity::Relu);
        assert!((a.learning_rate - 1e-4).abs() < 1e-16);
        assert_eq!(a.momentum, 0.0);
    }

    #[test]
    fn all_one_vector_gives_maxima() {
        // 4 blocks of kernel 5 collapse a 28x28 input, so use a larger one.
        let s = SearchSpace::default_for([1, 100, 100], 10);
        let a = s.decode(&vec![1.0; s.dim()]).unwrap();
        assert_eq!(a.conv_blocks.len(), 4);
        assert!(a.conv_blocks.iter().all(|b| b.out_channels == 64 && b.kernel_size == 5));
        assert_eq!(a.fc_layers, vec![256, 256]);
        assert_eq!(a.nonlinearity, Nonlinearity::Tanh);
        assert!((a.learning_rate - 0.1).abs() < 1e-15);
        assert!((a.momentum - 0.95).abs() < 1e-15);
    }

    #[test]
    fn log_midpoint() {
        let p = ParamDef::continuous("learning_rate", 1e-4, 1e-1, true);
        let Decoded::Real(lr) = p.decode(0.5) else { panic!() };
        assert!((lr - libm::pow(10.0, -2.5)).abs() < 1e-15);
        assert!((lr - 3.162e-3).abs() < 1e-6);
    }

    #[test]
    fn integer_decode_floor_and_clamp() {
        let p = ParamDef::integer("conv_blocks", 2, 4);
        let d: Vec<i64> = [0.0, 0.33, 0.34, 0.66, 0.67, 0.999, 1.0]
            .iter()
            .map(|&u| match p.decode(u) {
                Decoded::Int(i) => i,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(d, vec![2, 2, 3, 3, 4, 4, 4]);
    }

    #[test]
    fn infeasible_decode_reports_block() {
        let s = space();
        // 4 blocks, all kernel 5: 24 → 12 → 8 → 4, kernel 5 fails at block 2.
        let mut v = vec![0.0; s.dim()];
        v[0] = 1.0;
        for i in 5..9 {
            v[i] = 1.0;
        }
        match s.decode(&v) {
            Err(SpaceError::Infeasible(inf)) => {
                assert_eq!(inf.block, 2);
                assert_eq!(inf.trace.len(), 4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn three_kernel5_blocks_on_28() {
        let a = spec(vec![block(4, 5, true), block(4, 5, true), block(4, 5, true)], vec![]);
        let err = a.validate([1, 28, 28], 10).unwrap_err();
        let SpaceError::Infeasible(inf) = err else { panic!() };
        assert_eq!(inf.block, 2);
        let extents: Vec<usize> = inf
            .trace
            .iter()
            .map(|s| match s {
                ShapeStep::Conv { shape, .. } | ShapeStep::Pool { shape, .. } => shape[1],
                _ => 0,
            })
            .collect();
        assert_eq!(extents, vec![24, 12, 8, 4]);
    }

    #[test]
    fn two_kernel7_blocks_on_13() {
        let a = spec(vec![block(2, 7, false), block(2, 7, false)], vec![]);
        let trace = a.validate([2, 13, 13], 3).unwrap();
        assert_eq!(trace[0], ShapeStep::Conv { block: 0, shape: [2, 7, 7] });
        assert_eq!(trace[1], ShapeStep::Conv { block: 1, shape: [2, 1, 1] });
        assert!(spec(vec![block(2, 7, false)], vec![]).validate([1, 5, 5], 2).is_err());
    }

    #[test]
    fn param_count_formula() {
        // Conv 3x3 on a 3x3 input → 1 pixel, then a 10-unit output.
        let a = spec(vec![block(10, 3, false)], vec![]);
        assert_eq!(a.param_count([1, 3, 3], 10).unwrap(), (10 * 9 + 10) + (10 * 10 + 10));
        // LeNet-like: 28 → c6k5 24 → p12 → c16k5 8 → p4 → 256 → 120 → 84 → 10.
        let lenet = spec(vec![block(6, 5, true), block(16, 5, true)], vec![120, 84]);
        let hand = (6 * 25 + 6) + (16 * 6 * 25 + 16) + (256 * 120 + 120) + (120 * 84 + 84) + (84 * 10 + 10);
        assert_eq!(lenet.param_count([1, 28, 28], 10).unwrap(), hand);
        assert_eq!(lenet.build([1, 28, 28], 10).unwrap().param_count(), hand);
    }

    #[test]
    fn encode_minimal_spec() {
        let s = space();
        let a = spec(vec![block(4, 3, true), block(4, 3, true)], vec![]);
        let a = ArchitectureSpec {
            learning_rate: 1e-4,
            momentum: 0.0,
            ..a
        };
        let v = s.encode(&a).unwrap();
        assert!((v[0] - 0.5 / 3.0).abs() < 1e-15);
        assert!((v[1] - 0.1).abs() < 1e-15 && (v[2] - 0.1).abs() < 1e-15);
        assert!((v[5] - 0.25).abs() < 1e-15);
        assert!((v[9] - 0.5 / 3.0).abs() < 1e-15);
        assert!((v[12] - 0.25).abs() < 1e-15);
        assert!(v[13].abs() < 1e-12 && v[14] == 0.0);
        assert_eq!(s.decode(&v).unwrap(), a);
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let s = space();
        assert!(matches!(
            s.encode(&spec(vec![block(128, 3, true), block(4, 3, true)], vec![])),
            Err(SpaceError::NotRepresentable(_))
        ));
        assert!(matches!(
            s.encode(&spec(vec![block(4, 3, false), block(4, 3, true)], vec![])),
            Err(SpaceError::NotRepresentable(_))
        ));
    }

    #[test]
    fn space_validation() {
        let ok = SearchSpace::default_for([1, 8, 8], 2);
        let mut dup = ok.params.clone();
        dup.push(ParamDef::integer("fc_layers", 0, 1));
        assert!(SearchSpace::new(dup, [1, 8, 8], 2, PoolRule::Never).is_err());
        let mut unknown = ok.params.clone();
        unknown.push(ParamDef::integer("dropout", 0, 1));
        assert!(SearchSpace::new(unknown, [1, 8, 8], 2, PoolRule::Never).is_err());
        let missing: Vec<ParamDef> = ok.params.iter().filter(|p| p.name != "kernel_3").cloned().collect();
        assert!(SearchSpace::new(missing, [1, 8, 8], 2, PoolRule::Never).is_err());
        assert!(SearchSpace::new(vec![ParamDef::integer("conv_blocks", 3, 3)], [1, 8, 8], 2, PoolRule::Never).is_err());
    }

    #[test]
    fn wrong_dimension() {
        let s = space();
        assert_eq!(
            s.decode(&[0.5; 3]),
            Err(SpaceError::WrongDimension { expected: 15, got: 3 })
        );
    }
}
