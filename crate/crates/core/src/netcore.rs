//! Threshold networks: layers of σ(Wz + b) with σ(t) = 1 iff t ≥ 0.
//!
//! A network starts with an arbitrary layer fed real inputs; every later
//! layer sees a {0,1} vector. Integer layers are stored sparse (the
//! constructed networks are XOR trees, indicators and chunked weights) and
//! evaluated exactly in `i64`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The activation. Zero maps to one.
#[inline]
pub fn sigma<T: PartialOrd + Default>(t: T) -> u8 {
    u8::from(t >= T::default())
}

/// Layer-1 pre-activations closer than this to zero are flagged as fragile.
pub const MARGIN_WARNING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Real,
    Integer,
}

/// Dense real layer, row-major `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealLayer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl RealLayer {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("layer dimensions must be positive".into()));
        }
        if weights.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: weights.len(),
            });
        }
        if bias.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("real layer has non-finite parameters".into()));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| crate::geometry::dot(self.row(r), x) + self.bias[r])
            .collect()
    }
}

/// Sparse integer layer in CSR form, columns sorted within each row and
/// zero entries dropped, so structural equality is value equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerLayer {
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<i64>,
    bias: Vec<i64>,
    // column-major copy, so bit inputs only touch their active columns
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    col_vals: Vec<i64>,
    // every row's |bias| + Σ|w| fits in an i32
    fits_i32: bool,
}

impl IntegerLayer {
    pub fn rows(&self) -> usize {
        self.bias.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, i64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn bias(&self) -> &[i64] {
        &self.bias
    }

    /// Largest absolute value among weights and biases.
    pub fn max_abs(&self) -> i64 {
        self.vals.iter().chain(&self.bias).map(|v| v.abs()).max().unwrap_or(0)
    }

    fn from_csr(cols: usize, row_ptr: Vec<usize>, col_idx: Vec<u32>, vals: Vec<i64>, bias: Vec<i64>) -> Self {
        let mut col_ptr = vec![0usize; cols + 1];
        for &c in &col_idx {
            col_ptr[c as usize + 1] += 1;
        }
        for c in 0..cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0u32; vals.len()];
        let mut col_vals = vec![0i64; vals.len()];
        for r in 0..bias.len() {
            for k in row_ptr[r]..row_ptr[r + 1] {
                let slot = &mut next[col_idx[k] as usize];
                row_idx[*slot] = r as u32;
                col_vals[*slot] = vals[k];
                *slot += 1;
            }
        }
        let fits_i32 = (0..bias.len()).all(|r| {
            vals[row_ptr[r]..row_ptr[r + 1]]
                .iter()
                .chain(std::iter::once(&bias[r]))
                .try_fold(0i64, |t, v| t.checked_add(v.checked_abs()?))
                .is_some_and(|t| t <= i64::from(i32::MAX))
        });
        Self {
            cols,
            row_ptr,
            col_idx,
            vals,
            bias,
            col_ptr,
            row_idx,
            col_vals,
            fits_i32,
        }
    }

    /// Exact on {0,1} inputs: integer sums do not depend on order.
    fn eval_bits(&self, z: &[u8]) -> Vec<u8> {
        let mut acc = self.bias.clone();
        for (c, _) in z.iter().enumerate().filter(|(_, &b)| b != 0) {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc[self.row_idx[k] as usize] += self.col_vals[k];
            }
        }
        acc.into_iter().map(sigma).collect()
    }

    /// [`eval_bits`](Self::eval_bits) on `width` inputs at once; `z[c·width + s]`
    /// is input bit `c` of sample `s`, and the output uses the same layout.
    fn eval_block(&self, z: &[u8], width: usize) -> Vec<u8> {
        if self.fits_i32 {
            self.eval_block_with::<i32>(z, width)
        } else {
            self.eval_block_with::<i64>(z, width)
        }
    }

    fn eval_block_with<A>(&self, z: &[u8], width: usize) -> Vec<u8>
    where
        A: Copy + Default + PartialOrd + std::ops::AddAssign + std::ops::Mul<Output = A> + From<u8> + TryFrom<i64>,
    {
        // fits_i32 guarantees these conversions and every partial sum
        let cast = |v: i64| A::try_from(v).ok().expect("accumulator range checked at build");
        let mut out = vec![0u8; self.rows() * width];
        let mut acc = vec![A::default(); width];
        for (r, dst) in out.chunks_exact_mut(width).enumerate() {
            acc.fill(cast(self.bias[r]));
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k] as usize;
                let v = cast(self.vals[k]);
                for (a, &b) in acc.iter_mut().zip(&z[c * width..(c + 1) * width]) {
                    *a += v * A::from(b);
                }
            }
            for (o, &a) in dst.iter_mut().zip(&acc) {
                *o = sigma(a);
            }
        }
        out
    }

    fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|r| self.row(r).map(|(c, v)| v as f64 * x[c]).sum::<f64>() + self.bias[r] as f64)
            .collect()
    }
}

/// Row-by-row builder for [`IntegerLayer`].
#[derive(Debug, Clone)]
pub struct IntegerLayerBuilder {
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<i64>,
    bias: Vec<i64>,
    scratch: Vec<(usize, i64)>,
}

impl IntegerLayerBuilder {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            vals: Vec::new(),
            bias: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.bias.len()
    }

    /// Appends a neuron; returns its row index.
    pub fn push<I>(&mut self, weights: I, bias: i64) -> Result<usize>
    where
        I: IntoIterator<Item = (usize, i64)>,
    {
        self.scratch.clear();
        self.scratch.extend(weights.into_iter().filter(|&(_, v)| v != 0));
        self.scratch.sort_unstable_by_key(|&(c, _)| c);
        for w in self.scratch.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidInput(format!(
                    "neuron {} lists column {} twice",
                    self.rows(),
                    w[0].0
                )));
            }
        }
        if let Some(&(c, _)) = self.scratch.last() {
            if c >= self.cols {
                return Err(Error::DimensionMismatch {
                    expected: self.cols,
                    got: c + 1,
                });
            }
        }
        for &(c, v) in &self.scratch {
            self.col_idx.push(c as u32);
            self.vals.push(v);
        }
        self.row_ptr.push(self.col_idx.len());
        self.bias.push(bias);
        Ok(self.bias.len() - 1)
    }

    pub fn build(self) -> Result<ThresholdLayer> {
        if self.cols == 0 || self.bias.is_empty() {
            return Err(Error::InvalidInput("layer dimensions must be positive".into()));
        }
        Ok(ThresholdLayer::Integer(IntegerLayer::from_csr(
            self.cols,
            self.row_ptr,
            self.col_idx,
            self.vals,
            self.bias,
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdLayer {
    Real(RealLayer),
    Integer(IntegerLayer),
}

impl ThresholdLayer {
    pub fn rows(&self) -> usize {
        match self {
            ThresholdLayer::Real(l) => l.rows,
            ThresholdLayer::Integer(l) => l.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            ThresholdLayer::Real(l) => l.cols,
            ThresholdLayer::Integer(l) => l.cols,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            ThresholdLayer::Real(_) => Domain::Real,
            ThresholdLayer::Integer(_) => Domain::Integer,
        }
    }

    pub fn nonzero_weights(&self) -> usize {
        match self {
            ThresholdLayer::Real(l) => l.weights.iter().filter(|v| **v != 0.0).count(),
            ThresholdLayer::Integer(l) => l.vals.len(),
        }
    }

    /// `None` for real layers.
    pub fn max_abs_integer(&self) -> Option<i64> {
        match self {
            ThresholdLayer::Real(_) => None,
            ThresholdLayer::Integer(l) => Some(l.max_abs()),
        }
    }

    pub fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ThresholdLayer::Real(l) => l.pre_activations(x),
            ThresholdLayer::Integer(l) => l.pre_activations(x),
        }
    }

    pub fn fire_real(&self, x: &[f64]) -> Vec<u8> {
        self.pre_activations(x).into_iter().map(sigma).collect()
    }

    pub fn fire_bits(&self, z: &[u8]) -> Vec<u8> {
        match self {
            ThresholdLayer::Integer(l) => l.eval_bits(z),
            ThresholdLayer::Real(l) => {
                let x: Vec<f64> = z.iter().map(|&b| f64::from(b)).collect();
                l.pre_activations(&x).into_iter().map(sigma).collect()
            }
        }
    }
}

impl ThresholdLayer {
    fn fire_block(&self, z: &[u8], width: usize) -> Vec<u8> {
        match self {
            ThresholdLayer::Integer(l) => l.eval_block(z, width),
            ThresholdLayer::Real(l) => {
                let mut out = vec![0u8; l.rows * width];
                for s in 0..width {
                    let x: Vec<f64> = (0..l.cols).map(|c| f64::from(z[c * width + s])).collect();
                    for (r, t) in l.pre_activations(&x).into_iter().enumerate() {
                        out[r * width + s] = sigma(t);
                    }
                }
                out
            }
        }
    }
}

/// Samples per block in [`ThresholdNetwork::forward_batch`].
const BLOCK: usize = 64;

/// Runs a stack of layers on a {0,1} input.
pub fn propagate_bits(layers: &[ThresholdLayer], input: &[u8]) -> Result<Vec<u8>> {
    let mut z = input.to_vec();
    for layer in layers {
        if z.len() != layer.cols() {
            return Err(Error::DimensionMismatch {
                expected: layer.cols(),
                got: z.len(),
            });
        }
        z = layer.fire_bits(&z);
    }
    Ok(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdNetwork {
    input_dim: usize,
    layers: Vec<ThresholdLayer>,
}

impl ThresholdNetwork {
    pub fn new(input_dim: usize, layers: Vec<ThresholdLayer>) -> Result<Self> {
        let mut width = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.cols() != width {
                return Err(Error::InvalidInput(format!(
                    "layer {i} expects {} inputs but receives {width}",
                    l.cols()
                )));
            }
            width = l.rows();
        }
        match layers.last() {
            None => Err(Error::InvalidInput("network needs at least one layer".into())),
            Some(l) if l.rows() != 1 => Err(Error::InvalidInput(format!(
                "final layer must have one output, has {}",
                l.rows()
            ))),
            Some(_) => Ok(Self { input_dim, layers }),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[ThresholdLayer] {
        &self.layers
    }

    /// True iff every layer after the first is an integer layer.
    pub fn has_integer_tail(&self) -> bool {
        self.layers[1..].iter().all(|l| l.domain() == Domain::Integer)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Output of every layer, first to last.
    pub fn forward_trace(&self, x: &[f64]) -> Result<Vec<Vec<u8>>> {
        self.check_input(x)?;
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut z = self.layers[0].fire_real(x);
        for layer in &self.layers[1..] {
            let next = layer.fire_bits(&z);
            trace.push(z);
            z = next;
        }
        trace.push(z);
        Ok(trace)
    }

    pub fn forward(&self, x: &[f64]) -> Result<bool> {
        self.check_input(x)?;
        let mut z = self.layers[0].fire_real(x);
        for layer in &self.layers[1..] {
            z = layer.fire_bits(&z);
        }
        Ok(z[0] == 1)
    }

    /// `forward` on every input, in order. Blocks of inputs run in parallel,
    /// each block sharing one pass over the weights.
    pub fn forward_batch<X>(&self, xs: &[X]) -> Result<Vec<bool>>
    where
        X: AsRef<[f64]> + Sync,
    {
        let blocks: Vec<Vec<bool>> = xs
            .par_chunks(BLOCK)
            .map(|b| self.forward_block(b))
            .collect::<Result<_>>()?;
        Ok(blocks.concat())
    }

    fn forward_block<X: AsRef<[f64]>>(&self, xs: &[X]) -> Result<Vec<bool>> {
        let width = xs.len();
        let first = &self.layers[0];
        let mut z = vec![0u8; first.rows() * width];
        for (s, x) in xs.iter().enumerate() {
            self.check_input(x.as_ref())?;
            for (r, b) in first.fire_real(x.as_ref()).into_iter().enumerate() {
                z[r * width + s] = b;
            }
        }
        for layer in &self.layers[1..] {
            z = layer.fire_block(&z, width);
        }
        Ok(z.into_iter().map(|b| b == 1).collect())
    }
}

/// Size accounting over a run of layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SizeTotals {
    pub layers: usize,
    pub neurons: usize,
    pub nonzero_weights: usize,
    pub biases: usize,
    /// Connections: nonzero weights plus one bias per neuron.
    pub weights: usize,
    /// Over integer layers, weights and biases both.
    pub max_abs_integer_weight: Option<i64>,
}

impl SizeTotals {
    pub fn of_layers(layers: &[ThresholdLayer]) -> Self {
        layers.iter().fold(Self::default(), |acc, l| {
            let nz = l.nonzero_weights();
            Self {
                layers: acc.layers + 1,
                neurons: acc.neurons + l.rows(),
                nonzero_weights: acc.nonzero_weights + nz,
                biases: acc.biases + l.rows(),
                weights: acc.weights + nz + l.rows(),
                max_abs_integer_weight: match (acc.max_abs_integer_weight, l.max_abs_integer()) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                },
            }
        })
    }

    pub fn combine(self, other: Self) -> Self {
        Self {
            layers: self.layers + other.layers,
            neurons: self.neurons + other.neurons,
            nonzero_weights: self.nonzero_weights + other.nonzero_weights,
            biases: self.biases + other.biases,
            weights: self.weights + other.weights,
            max_abs_integer_weight: match (self.max_abs_integer_weight, other.max_abs_integer_weight) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
        }
    }
}

pub fn audit(net: &ThresholdNetwork) -> SizeTotals {
    SizeTotals::of_layers(net.layers())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginWarning {
    pub sample: usize,
    pub neuron: usize,
    pub pre_activation: f64,
}

/// First-layer pre-activations within `threshold` of zero. σ is defined at
/// zero, but such margins flip under tiny perturbations of the input.
pub fn margin_warnings<X: AsRef<[f64]>>(
    net: &ThresholdNetwork,
    xs: &[X],
    threshold: f64,
) -> Result<Vec<MarginWarning>> {
    let first = &net.layers[0];
    let mut out = Vec::new();
    for (sample, x) in xs.iter().enumerate() {
        net.check_input(x.as_ref())?;
        for (neuron, t) in first.pre_activations(x.as_ref()).into_iter().enumerate() {
            if t.abs() <= threshold {
                out.push(MarginWarning {
                    sample,
                    neuron,
                    pre_activation: t,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    input_dim: usize,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    domain: Domain,
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, serde_json::Number)>,
    bias: Vec<serde_json::Number>,
}

fn real_number(v: f64) -> serde_json::Number {
    serde_json::Number::from_f64(v).expect("real layers hold finite values")
}

impl From<&ThresholdLayer> for LayerDoc {
    fn from(layer: &ThresholdLayer) -> Self {
        match layer {
            ThresholdLayer::Real(l) => LayerDoc {
                domain: Domain::Real,
                rows: l.rows,
                cols: l.cols,
                entries: (0..l.rows)
                    .flat_map(|r| {
                        l.row(r)
                            .iter()
                            .enumerate()
                            .filter(|(_, v)| **v != 0.0)
                            .map(move |(c, &v)| (r, c, real_number(v)))
                    })
                    .collect(),
                bias: l.bias.iter().map(|&b| real_number(b)).collect(),
            },
            ThresholdLayer::Integer(l) => LayerDoc {
                domain: Domain::Integer,
                rows: l.rows(),
                cols: l.cols,
                entries: (0..l.rows())
                    .flat_map(|r| l.row(r).map(move |(c, v)| (r, c, v.into())))
                    .collect(),
                bias: l.bias.iter().map(|&b| b.into()).collect(),
            },
        }
    }
}

impl LayerDoc {
    fn into_layer(self, index: usize) -> Result<ThresholdLayer> {
        let at = |what: String| format!("layers[{index}].{what}");
        if self.bias.len() != self.rows {
            return Err(Error::parse(
                at("bias".into()),
                format!("expected {} biases, found {}", self.rows, self.bias.len()),
            ));
        }
        for (k, &(r, c, _)) in self.entries.iter().enumerate() {
            if r >= self.rows || c >= self.cols {
                return Err(Error::parse(
                    at(format!("entries[{k}]")),
                    format!("position ({r}, {c}) outside {}×{}", self.rows, self.cols),
                ));
            }
        }
        match self.domain {
            Domain::Real => {
                let mut weights = vec![0.0; self.rows * self.cols];
                let mut seen = vec![false; self.rows * self.cols];
                for (k, (r, c, v)) in self.entries.into_iter().enumerate() {
                    let slot = r * self.cols + c;
                    if std::mem::replace(&mut seen[slot], true) {
                        return Err(Error::parse(at(format!("entries[{k}]")), "duplicate position"));
                    }
                    weights[slot] = v
                        .as_f64()
                        .ok_or_else(|| Error::parse(at(format!("entries[{k}]")), "not a number"))?;
                }
                let bias = self
                    .bias
                    .iter()
                    .enumerate()
                    .map(|(k, b)| {
                        b.as_f64()
                            .ok_or_else(|| Error::parse(at(format!("bias[{k}]")), "not a number"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                RealLayer::new(self.rows, self.cols, weights, bias)
                    .map(ThresholdLayer::Real)
                    .map_err(|e| Error::parse(at("".into()), e.to_string()))
            }
            Domain::Integer => {
                let mut rows: Vec<Vec<(usize, i64)>> = vec![Vec::new(); self.rows];
                for (k, (r, c, v)) in self.entries.into_iter().enumerate() {
                    let v = v.as_i64().ok_or_else(|| {
                        Error::parse(
                            at(format!("entries[{k}]")),
                            format!("integer layer holds non-integer {v}"),
                        )
                    })?;
                    rows[r].push((c, v));
                }
                let mut b = IntegerLayerBuilder::new(self.cols);
                for (r, (entries, bias)) in rows.into_iter().zip(&self.bias).enumerate() {
                    let bias = bias.as_i64().ok_or_else(|| {
                        Error::parse(
                            at(format!("bias[{r}]")),
                            format!("integer layer holds non-integer {bias}"),
                        )
                    })?;
                    b.push(entries, bias)
                        .map_err(|e| Error::parse(at(format!("row {r}")), e.to_string()))?;
                }
                b.build().map_err(|e| Error::parse(at("".into()), e.to_string()))
            }
        }
    }
}

pub fn serialize(net: &ThresholdNetwork) -> Vec<u8> {
    let doc = NetworkDoc {
        input_dim: net.input_dim,
        layers: net.layers.iter().map(LayerDoc::from).collect(),
    };
    serde_json::to_vec(&doc).expect("network document serializes")
}

pub fn deserialize(bytes: &[u8]) -> Result<ThresholdNetwork> {
    let doc: NetworkDoc = serde_json::from_slice(bytes)
        .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let layers = doc
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.into_layer(i))
        .collect::<Result<Vec<_>>>()?;
    ThresholdNetwork::new(doc.input_dim, layers).map_err(|e| Error::parse("network", e.to_string()))
}
