//! Network structures, activations and forward passes for the feedforward and
//! Elman families.
//!
//! Both families are three-layer networks: two hidden layers followed by a
//! single output neuron. The Elman variant feeds a copy of the previous
//! first-layer activations (the context units) back into the first layer
//! through a square recurrent matrix.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Half-width of the uniform interval used by [`initialize`].
pub const INIT_RANGE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Hyperbolic tangent sigmoid.
    Tansig,
    /// Identity.
    Purelin,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tansig => x.tanh(),
            Activation::Purelin => x,
        }
    }

    /// Derivative expressed through the activation's own output `y = f(x)`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tansig => T::one() - y * y,
            Activation::Purelin => T::one(),
        }
    }
}

pub fn activate<T: Scalar>(a: Activation, x: T) -> T {
    a.apply(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Feedforward,
    Elman,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Feedforward, Family::Elman];

    pub fn short_name(self) -> &'static str {
        match self {
            Family::Feedforward => "ff",
            Family::Elman => "elman",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Feedforward => "feedforward",
            Family::Elman => "elman",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ff" | "feedforward" => Ok(Family::Feedforward),
            "elman" => Ok(Family::Elman),
            other => Err(Error::invalid(format!("unknown network family `{other}`"))),
        }
    }
}

/// Neuron counts and activations of the three layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StructureSpec {
    /// Catalog row (1..=5), or `None` for a custom structure.
    pub network_number: Option<u8>,
    pub layer1_neurons: usize,
    pub layer2_neurons: usize,
    pub output_neurons: usize,
    pub activations: [Activation; 3],
}

/// The five catalog structures as `(layer1, layer2, output)` neuron counts.
pub const CATALOG: [(usize, usize, usize); 5] =
    [(3, 3, 1), (3, 5, 1), (5, 7, 1), (9, 5, 1), (12, 10, 1)];

impl StructureSpec {
    pub const DEFAULT_ACTIVATIONS: [Activation; 3] =
        [Activation::Tansig, Activation::Tansig, Activation::Purelin];

    /// A non-catalog structure with the standard tansig/tansig/purelin stack.
    pub fn custom(layer1_neurons: usize, layer2_neurons: usize) -> Result<Self> {
        if layer1_neurons == 0 || layer2_neurons == 0 {
            return Err(Error::invalid("hidden layers need at least one neuron"));
        }
        Ok(StructureSpec {
            network_number: None,
            layer1_neurons,
            layer2_neurons,
            output_neurons: 1,
            activations: Self::DEFAULT_ACTIVATIONS,
        })
    }

    pub fn with_activations(mut self, activations: [Activation; 3]) -> Self {
        self.activations = activations;
        self
    }

    pub fn neurons(&self) -> (usize, usize, usize) {
        (self.layer1_neurons, self.layer2_neurons, self.output_neurons)
    }
}

impl fmt::Display for StructureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(n) = self.network_number {
            write!(f, "#{n} ")?;
        }
        write!(
            f,
            "({}, {}, {})",
            self.layer1_neurons, self.layer2_neurons, self.output_neurons
        )
    }
}

/// Looks up a row of the structure catalog.
pub fn catalog_structure(network_number: u8) -> Result<StructureSpec> {
    let idx = (network_number as usize)
        .checked_sub(1)
        .filter(|&i| i < CATALOG.len())
        .ok_or_else(|| {
            Error::invalid(format!(
                "network number {network_number} is outside the catalog 1..=5"
            ))
        })?;
    let (l1, l2, out) = CATALOG[idx];
    Ok(StructureSpec {
        network_number: Some(network_number),
        layer1_neurons: l1,
        layer2_neurons: l2,
        output_neurons: out,
        activations: StructureSpec::DEFAULT_ACTIVATIONS,
    })
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Weights, biases and (for Elman) recurrent state of one network.
///
/// `recurrent` and `context` are empty for the feedforward family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState<T> {
    pub family: Family,
    pub structure: StructureSpec,
    pub input_count: usize,
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
    pub w3: Matrix<T>,
    pub b3: Vec<T>,
    pub recurrent: Matrix<T>,
    pub context: Vec<T>,
}

/// Activations of every layer for a single forward step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace<T> {
    pub hidden1: Vec<T>,
    pub hidden2: Vec<T>,
    pub output: T,
}

impl<T: Scalar> NetworkState<T> {
    /// An all-zero network with the correct shapes.
    pub fn zeros(family: Family, structure: StructureSpec, input_count: usize) -> Self {
        let (l1, l2, out) = structure.neurons();
        let (recurrent, context) = match family {
            Family::Feedforward => (Matrix::zeros(0, 0), Vec::new()),
            Family::Elman => (Matrix::zeros(l1, l1), vec![T::zero(); l1]),
        };
        NetworkState {
            family,
            structure,
            input_count,
            w1: Matrix::zeros(l1, input_count),
            b1: vec![T::zero(); l1],
            w2: Matrix::zeros(l2, l1),
            b2: vec![T::zero(); l2],
            w3: Matrix::zeros(out, l2),
            b3: vec![T::zero(); out],
            recurrent,
            context,
        }
    }

    /// Checks every shape and finiteness invariant.
    pub fn validate(&self) -> Result<()> {
        let (l1, l2, out) = self.structure.neurons();
        if out != 1 {
            return Err(Error::invalid("networks have exactly one output neuron"));
        }
        let expect = |name: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} has shape {got:?}, expected {want:?}"
                )))
            }
        };
        expect("w1", self.w1.shape(), (l1, self.input_count))?;
        expect("w2", self.w2.shape(), (l2, l1))?;
        expect("w3", self.w3.shape(), (out, l2))?;
        expect("b1", (self.b1.len(), 1), (l1, 1))?;
        expect("b2", (self.b2.len(), 1), (l2, 1))?;
        expect("b3", (self.b3.len(), 1), (out, 1))?;
        match self.family {
            Family::Feedforward => {
                expect("recurrent", self.recurrent.shape(), (0, 0))?;
                expect("context", (self.context.len(), 1), (0, 1))?;
            }
            Family::Elman => {
                expect("recurrent", self.recurrent.shape(), (l1, l1))?;
                expect("context", (self.context.len(), 1), (l1, 1))?;
            }
        }
        if !self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
            || !self.context.iter().all(|v| v.is_finite())
        {
            return Err(Error::invalid("network contains non-finite values"));
        }
        Ok(())
    }

    /// Trainable parameters in a fixed order: w1, b1, w2, b2, w3, b3, recurrent.
    pub fn param_slices(&self) -> [&[T]; 7] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
            self.w3.as_slice(),
            &self.b3,
            self.recurrent.as_slice(),
        ]
    }

    pub fn param_slices_mut(&mut self) -> [&mut [T]; 7] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
            self.w3.as_mut_slice(),
            &mut self.b3,
            self.recurrent.as_mut_slice(),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Resets the Elman context units to zero; no-op for feedforward nets.
    pub fn reset_context(&mut self) {
        self.context.iter_mut().for_each(|c| *c = T::zero());
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_count {
            return Err(Error::invalid(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_count
            )));
        }
        Ok(())
    }

    /// Full forward step with an explicit context (empty for feedforward).
    pub(crate) fn trace(&self, input: &[T], context: &[T]) -> StepTrace<T> {
        let [a1, a2, a3] = self.structure.activations;
        let mut hidden1 = Vec::with_capacity(self.b1.len());
        for (j, &b) in self.b1.iter().enumerate() {
            let mut z = dot(self.w1.row(j), input) + b;
            if !context.is_empty() {
                z += dot(self.recurrent.row(j), context);
            }
            hidden1.push(a1.apply(z));
        }
        let hidden2: Vec<T> = self
            .b2
            .iter()
            .enumerate()
            .map(|(j, &b)| a2.apply(dot(self.w2.row(j), &hidden1) + b))
            .collect();
        let output = a3.apply(dot(self.w3.row(0), &hidden2) + self.b3[0]);
        StepTrace {
            hidden1,
            hidden2,
            output,
        }
    }
}

/// Output of a feedforward network for one input vector.
pub fn forward_feedforward<T: Scalar>(net: &NetworkState<T>, input: &[T]) -> Result<T> {
    if net.family != Family::Feedforward {
        return Err(Error::invalid("forward_feedforward called on an Elman network"));
    }
    net.check_input(input)?;
    Ok(net.trace(input, &[]).output)
}

/// One Elman step using the network's stored context.
///
/// Returns the output and the would-be next context. The network itself is not
/// modified; commit the context with `net.context = new_context` to step.
pub fn forward_elman<T: Scalar>(net: &NetworkState<T>, input: &[T]) -> Result<(T, Vec<T>)> {
    if net.family != Family::Elman {
        return Err(Error::invalid("forward_elman called on a feedforward network"));
    }
    net.check_input(input)?;
    if net.context.len() != net.structure.layer1_neurons {
        return Err(Error::invalid(format!(
            "context has length {}, expected {}",
            net.context.len(),
            net.structure.layer1_neurons
        )));
    }
    let t = net.trace(input, &net.context);
    Ok((t.output, t.hidden1))
}

/// Family-agnostic single step that commits the Elman context.
pub fn step<T: Scalar>(net: &mut NetworkState<T>, input: &[T]) -> Result<T> {
    match net.family {
        Family::Feedforward => forward_feedforward(net, input),
        Family::Elman => {
            let (y, ctx) = forward_elman(net, input)?;
            net.context = ctx;
            Ok(y)
        }
    }
}

/// Seeded network with every weight and bias drawn uniformly from [-0.5, 0.5].
///
/// Draw order is w1, b1, w2, b2, w3, b3 and then the recurrent matrix, so a
/// feedforward and an Elman net built from the same seed share all non-recurrent
/// parameters.
pub fn initialize<T: Scalar>(
    family: Family,
    structure: StructureSpec,
    input_count: usize,
    seed: u64,
) -> Result<NetworkState<T>> {
    if input_count == 0 {
        return Err(Error::invalid("input_count must be at least 1"));
    }
    if structure.output_neurons != 1 || structure.layer1_neurons == 0 || structure.layer2_neurons == 0
    {
        return Err(Error::invalid(format!("unsupported structure {structure}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = NetworkState::zeros(family, structure, input_count);
    for slice in net.param_slices_mut() {
        for v in slice.iter_mut() {
            *v = T::of(rng.random_range(-INIT_RANGE..=INIT_RANGE));
        }
    }
    Ok(net)
}
