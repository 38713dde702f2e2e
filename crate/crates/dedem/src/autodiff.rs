//! Reverse-mode tape with nested forward spatial channels.
//!
//! The training loss needs two derivative flavors at once: first spatial
//! derivatives of the trial function (they form the strain) and gradients of
//! the resulting scalar with respect to every trainable parameter. We record
//! the whole computation — including the two forward-mode spatial channels —
//! as scalar operations on one tape, so a single reverse sweep yields
//! d(loss)/d(theta) with the mixed d/dtheta d/dx terms handled for free.
//!
//! One recording is single-owner and discarded after its backward pass;
//! kinked primitives use fixed one-sided rules (`relu' = 0` at the kink,
//! `d|v|/dv = -1` at zero, min/max ties route to the first operand) so that
//! training is deterministic.

use crate::scalar::Scalar;
use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Range, Sub};
use std::rc::Rc;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdError {
    /// A primitive hit a domain violation while recording; carries its name.
    Domain(&'static str),
    /// `backward` was called on an already consumed recording.
    Consumed,
    /// Layout or shape inconsistency in a [`ParamVector`].
    Layout(String),
}

impl fmt::Display for AdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdError::Domain(op) => write!(f, "domain violation in primitive '{op}'"),
            AdError::Consumed => write!(f, "recording already consumed by backward"),
            AdError::Layout(m) => write!(f, "parameter layout error: {m}"),
        }
    }
}

impl std::error::Error for AdError {}

// ---------------------------------------------------------------------------
// Parameter vector and layout
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamRole {
    Weight,
    Bias,
}

/// Addresses one weight or bias block: (network, layer, role).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamKey {
    pub network: usize,
    pub layer: usize,
    pub role: ParamRole,
}

/// Maps parameter blocks to index ranges of the flat vector. The ranges are
/// contiguous, disjoint and cover `0..len` exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    entries: Vec<(ParamKey, Range<usize>)>,
    total: usize,
}

impl ParamLayout {
    pub fn new(entries: Vec<(ParamKey, Range<usize>)>) -> Result<Self, AdError> {
        let mut cursor = 0usize;
        for (key, range) in &entries {
            if range.start != cursor {
                return Err(AdError::Layout(format!(
                    "block {key:?} starts at {} but previous blocks end at {cursor}",
                    range.start
                )));
            }
            if range.end < range.start {
                return Err(AdError::Layout(format!("block {key:?} has negative length")));
            }
            cursor = range.end;
        }
        Ok(ParamLayout {
            entries,
            total: cursor,
        })
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn range(&self, key: ParamKey) -> Option<Range<usize>> {
        self.entries
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, r)| r.clone())
    }

    pub fn blocks(&self) -> impl Iterator<Item = (ParamKey, Range<usize>)> + '_ {
        self.entries.iter().map(|(k, r)| (*k, r.clone()))
    }
}

/// Flat trainable-parameter array plus its block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    pub values: Vec<T>,
    pub layout: ParamLayout,
}

impl<T: Scalar> ParamVector<T> {
    pub fn new(values: Vec<T>, layout: ParamLayout) -> Result<Self, AdError> {
        if values.len() != layout.len() {
            return Err(AdError::Layout(format!(
                "value count {} does not match layout length {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, key: ParamKey) -> Option<&[T]> {
        self.layout.range(key).map(|r| &self.values[r])
    }
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Tanh,
    Exp,
    Ln,
    Sqrt,
    Relu,
    /// Heaviside gate with `step(0) = 0`; its own derivative is zero.
    Step,
    Abs,
    Min,
    Max,
    PowI(i32),
}

#[derive(Debug, Clone, Copy)]
struct Op {
    kind: OpKind,
    a: u32,
    b: u32,
}

struct TapeInner<T> {
    vals: Vec<T>,
    ops: Vec<Op>,
    n_inputs: usize,
    error: Option<AdError>,
    consumed: bool,
}

/// A recording of scalar operations. Create with [`Tape::new`] or through
/// [`record`], seed inputs with [`Tape::input`], then run [`Tape::gradient`].
pub struct Tape<T> {
    inner: Rc<RefCell<TapeInner<T>>>,
}

impl<T> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.inner.borrow().vals.len())
    }
}

impl<T> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                vals: Vec::new(),
                ops: Vec::new(),
                n_inputs: 0,
                error: None,
                consumed: false,
            })),
        }
    }

    fn push(&self, value: T, kind: OpKind, a: u32, b: u32) -> Var<T> {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.vals.len() as u32;
        inner.vals.push(value);
        inner.ops.push(Op { kind, a, b });
        Var {
            tape: self.clone(),
            idx,
        }
    }

    fn poison(&self, op: &'static str) {
        let mut inner = self.inner.borrow_mut();
        if inner.error.is_none() {
            inner.error = Some(AdError::Domain(op));
        }
    }

    /// Differentiable input; gradients are reported for inputs in creation
    /// order.
    pub fn input(&self, value: T) -> Var<T> {
        {
            let mut inner = self.inner.borrow_mut();
            debug_assert_eq!(
                inner.n_inputs,
                inner.vals.len(),
                "inputs must be seeded before any other node"
            );
            inner.n_inputs += 1;
        }
        self.push(value, OpKind::Leaf, 0, 0)
    }

    pub fn inputs(&self, values: &[T]) -> Vec<Var<T>> {
        values.iter().map(|v| self.input(*v)).collect()
    }

    /// Non-differentiated constant node.
    pub fn constant(&self, value: T) -> Var<T> {
        self.push(value, OpKind::Leaf, 0, 0)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Surfaces a domain violation recorded by any earlier primitive.
    pub fn check(&self) -> Result<(), AdError> {
        match &self.inner.borrow().error {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }

    /// Reverse sweep from `output`; returns the gradient with respect to the
    /// seeded inputs, in creation order. Consumes the recording: a second
    /// call is an error.
    pub fn gradient(&self, output: &Var<T>) -> Result<Vec<T>, AdError> {
        assert!(
            Rc::ptr_eq(&self.inner, &output.tape.inner),
            "output belongs to a different recording"
        );
        self.check()?;
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(AdError::Consumed);
        }
        inner.consumed = true;

        let n = inner.vals.len();
        let mut grads = vec![T::zero(); n];
        grads[output.idx as usize] = T::one();
        let two = T::one() + T::one();
        for i in (0..=output.idx as usize).rev() {
            let g = grads[i];
            if g == T::zero() {
                continue;
            }
            let op = inner.ops[i];
            let (a, b) = (op.a as usize, op.b as usize);
            match op.kind {
                OpKind::Leaf | OpKind::Step => {}
                OpKind::Add => {
                    grads[a] = grads[a] + g;
                    grads[b] = grads[b] + g;
                }
                OpKind::Sub => {
                    grads[a] = grads[a] + g;
                    grads[b] = grads[b] - g;
                }
                OpKind::Mul => {
                    let (va, vb) = (inner.vals[a], inner.vals[b]);
                    grads[a] = grads[a] + g * vb;
                    grads[b] = grads[b] + g * va;
                }
                OpKind::Div => {
                    let (va, vb) = (inner.vals[a], inner.vals[b]);
                    grads[a] = grads[a] + g / vb;
                    grads[b] = grads[b] - g * va / (vb * vb);
                }
                OpKind::Neg => {
                    grads[a] = grads[a] - g;
                }
                OpKind::Tanh => {
                    let t = inner.vals[i];
                    grads[a] = grads[a] + g * (T::one() - t * t);
                }
                OpKind::Exp => {
                    grads[a] = grads[a] + g * inner.vals[i];
                }
                OpKind::Ln => {
                    grads[a] = grads[a] + g / inner.vals[a];
                }
                OpKind::Sqrt => {
                    grads[a] = grads[a] + g / (two * inner.vals[i]);
                }
                OpKind::Relu => {
                    if inner.vals[a] > T::zero() {
                        grads[a] = grads[a] + g;
                    }
                }
                OpKind::Abs => {
                    // d|v|/dv = -1 at v = 0, matching sgn(0) = -1.
                    let s = if inner.vals[a] > T::zero() {
                        T::one()
                    } else {
                        -T::one()
                    };
                    grads[a] = grads[a] + g * s;
                }
                OpKind::Min => {
                    if inner.vals[a] <= inner.vals[b] {
                        grads[a] = grads[a] + g;
                    } else {
                        grads[b] = grads[b] + g;
                    }
                }
                OpKind::Max => {
                    if inner.vals[a] >= inner.vals[b] {
                        grads[a] = grads[a] + g;
                    } else {
                        grads[b] = grads[b] + g;
                    }
                }
                OpKind::PowI(k) => {
                    let va = inner.vals[a];
                    grads[a] = grads[a] + g * T::c(k as f64) * va.powi(k - 1);
                }
            }
        }
        Ok(grads[..inner.n_inputs].to_vec())
    }
}

/// Scalar value living on a recording.
pub struct Var<T> {
    tape: Tape<T>,
    idx: u32,
}

impl<T: Scalar> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var[{}] = {}", self.idx, self.value())
    }
}

impl<T> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var {
            tape: self.tape.clone(),
            idx: self.idx,
        }
    }
}

impl<T: Scalar> Var<T> {
    pub fn value(&self) -> T {
        self.tape.inner.borrow().vals[self.idx as usize]
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    fn same_tape(&self, other: &Var<T>) {
        assert!(
            Rc::ptr_eq(&self.tape.inner, &other.tape.inner),
            "arithmetic between different recordings"
        );
    }

    fn unary(&self, kind: OpKind, value: T) -> Var<T> {
        self.tape.push(value, kind, self.idx, 0)
    }

    fn binary(&self, other: &Var<T>, kind: OpKind, value: T) -> Var<T> {
        self.same_tape(other);
        self.tape.push(value, kind, self.idx, other.idx)
    }

    pub fn tanh(&self) -> Var<T> {
        self.unary(OpKind::Tanh, self.value().tanh())
    }

    pub fn exp(&self) -> Var<T> {
        self.unary(OpKind::Exp, self.value().exp())
    }

    pub fn ln(&self) -> Var<T> {
        let v = self.value();
        if v <= T::zero() {
            self.tape.poison("ln");
            return self.unary(OpKind::Ln, T::nan());
        }
        self.unary(OpKind::Ln, v.ln())
    }

    pub fn sqrt(&self) -> Var<T> {
        let v = self.value();
        if v < T::zero() {
            self.tape.poison("sqrt");
            return self.unary(OpKind::Sqrt, T::nan());
        }
        self.unary(OpKind::Sqrt, v.sqrt())
    }

    pub fn relu(&self) -> Var<T> {
        self.unary(OpKind::Relu, self.value().max(T::zero()))
    }

    /// Heaviside gate of the value (`1` for positive, else `0`); contributes
    /// no derivative of its own.
    pub fn step(&self) -> Var<T> {
        let v = if self.value() > T::zero() {
            T::one()
        } else {
            T::zero()
        };
        self.unary(OpKind::Step, v)
    }

    pub fn abs(&self) -> Var<T> {
        self.unary(OpKind::Abs, self.value().abs())
    }

    pub fn powi(&self, k: i32) -> Var<T> {
        self.unary(OpKind::PowI(k), self.value().powi(k))
    }

    pub fn min(&self, other: &Var<T>) -> Var<T> {
        let v = if self.value() <= other.value() {
            self.value()
        } else {
            other.value()
        };
        self.binary(other, OpKind::Min, v)
    }

    pub fn max(&self, other: &Var<T>) -> Var<T> {
        let v = if self.value() >= other.value() {
            self.value()
        } else {
            other.value()
        };
        self.binary(other, OpKind::Max, v)
    }

    pub fn scale(&self, c: T) -> Var<T> {
        let cv = self.tape.constant(c);
        self * &cv
    }

    pub fn add_const(&self, c: T) -> Var<T> {
        let cv = self.tape.constant(c);
        self + &cv
    }
}

impl<T: Scalar> Add for &Var<T> {
    type Output = Var<T>;
    fn add(self, rhs: Self) -> Var<T> {
        self.binary(rhs, OpKind::Add, self.value() + rhs.value())
    }
}

impl<T: Scalar> Sub for &Var<T> {
    type Output = Var<T>;
    fn sub(self, rhs: Self) -> Var<T> {
        self.binary(rhs, OpKind::Sub, self.value() - rhs.value())
    }
}

impl<T: Scalar> Mul for &Var<T> {
    type Output = Var<T>;
    fn mul(self, rhs: Self) -> Var<T> {
        self.binary(rhs, OpKind::Mul, self.value() * rhs.value())
    }
}

impl<T: Scalar> Div for &Var<T> {
    type Output = Var<T>;
    fn div(self, rhs: Self) -> Var<T> {
        let vb = rhs.value();
        if vb == T::zero() {
            self.tape.poison("/");
            return self.binary(rhs, OpKind::Div, T::nan());
        }
        self.binary(rhs, OpKind::Div, self.value() / vb)
    }
}

impl<T: Scalar> Neg for &Var<T> {
    type Output = Var<T>;
    fn neg(self) -> Var<T> {
        self.unary(OpKind::Neg, -self.value())
    }
}

/// Records `f` over inputs seeded from `params` and returns the output
/// together with its recording. Any domain violation hit by a primitive
/// while recording surfaces here.
pub fn record<T: Scalar, F>(params: &ParamVector<T>, f: F) -> Result<(Var<T>, Tape<T>), AdError>
where
    F: FnOnce(&Tape<T>, &[Var<T>]) -> Var<T>,
{
    let tape = Tape::new();
    let theta = tape.inputs(&params.values);
    let out = f(&tape, &theta);
    tape.check()?;
    Ok((out, tape))
}

// ---------------------------------------------------------------------------
// Spatial dual numbers
// ---------------------------------------------------------------------------

/// Value plus first spatial-derivative channels, all expressed as tape
/// scalars so the reverse sweep differentiates every channel with respect
/// to the parameters.
pub struct SpatialDual<T> {
    pub v: Var<T>,
    pub dx1: Var<T>,
    pub dx2: Var<T>,
}

impl<T> Clone for SpatialDual<T> {
    fn clone(&self) -> Self {
        SpatialDual {
            v: self.v.clone(),
            dx1: self.dx1.clone(),
            dx2: self.dx2.clone(),
        }
    }
}

/// Seeds the two coordinates at `x` as spatial duals: derivative channels
/// form the 2x2 identity.
pub fn spatial_seed<T: Scalar>(tape: &Tape<T>, x: [T; 2]) -> (SpatialDual<T>, SpatialDual<T>) {
    let one = tape.constant(T::one());
    let zero = tape.constant(T::zero());
    (
        SpatialDual {
            v: tape.constant(x[0]),
            dx1: one.clone(),
            dx2: zero.clone(),
        },
        SpatialDual {
            v: tape.constant(x[1]),
            dx1: zero,
            dx2: one,
        },
    )
}

impl<T: Scalar> SpatialDual<T> {
    /// Lifts a spatially constant tape scalar (e.g. a trainable parameter).
    pub fn from_var(v: Var<T>) -> Self {
        let zero = v.tape().constant(T::zero());
        SpatialDual {
            v,
            dx1: zero.clone(),
            dx2: zero,
        }
    }

    /// Lifts a plain value with a known spatial gradient (e.g. an embedding
    /// or a constraint factor evaluated off-tape).
    pub fn lift(tape: &Tape<T>, value: T, grad: [T; 2]) -> Self {
        SpatialDual {
            v: tape.constant(value),
            dx1: tape.constant(grad[0]),
            dx2: tape.constant(grad[1]),
        }
    }

    pub fn constant(tape: &Tape<T>, value: T) -> Self {
        Self::lift(tape, value, [T::zero(); 2])
    }

    pub fn add(&self, o: &Self) -> Self {
        SpatialDual {
            v: &self.v + &o.v,
            dx1: &self.dx1 + &o.dx1,
            dx2: &self.dx2 + &o.dx2,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        SpatialDual {
            v: &self.v - &o.v,
            dx1: &self.dx1 - &o.dx1,
            dx2: &self.dx2 - &o.dx2,
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        SpatialDual {
            v: &self.v * &o.v,
            dx1: &(&self.dx1 * &o.v) + &(&self.v * &o.dx1),
            dx2: &(&self.dx2 * &o.v) + &(&self.v * &o.dx2),
        }
    }

    pub fn div(&self, o: &Self) -> Self {
        let v = &self.v / &o.v;
        let dx1 = &(&self.dx1 - &(&v * &o.dx1)) / &o.v;
        let dx2 = &(&self.dx2 - &(&v * &o.dx2)) / &o.v;
        SpatialDual { v, dx1, dx2 }
    }

    pub fn neg(&self) -> Self {
        SpatialDual {
            v: -&self.v,
            dx1: -&self.dx1,
            dx2: -&self.dx2,
        }
    }

    /// Product with a spatially constant tape scalar (cheaper than `mul`).
    pub fn mul_var(&self, w: &Var<T>) -> Self {
        SpatialDual {
            v: &self.v * w,
            dx1: &self.dx1 * w,
            dx2: &self.dx2 * w,
        }
    }

    /// Product with a plain constant; all channels scale.
    pub fn scale(&self, c: T) -> Self {
        SpatialDual {
            v: self.v.scale(c),
            dx1: self.dx1.scale(c),
            dx2: self.dx2.scale(c),
        }
    }

    pub fn tanh(&self) -> Self {
        let t = self.v.tanh();
        let s = &t.scale(-T::one()) * &t; // -t^2
        let s = s.add_const(T::one()); // 1 - t^2
        SpatialDual {
            dx1: &s * &self.dx1,
            dx2: &s * &self.dx2,
            v: t,
        }
    }

    pub fn relu(&self) -> Self {
        let gate = self.v.step();
        SpatialDual {
            v: self.v.relu(),
            dx1: &gate * &self.dx1,
            dx2: &gate * &self.dx2,
        }
    }

    pub fn powi(&self, k: i32) -> Self {
        let v = self.v.powi(k);
        let slope = self.v.powi(k - 1).scale(T::c(k as f64));
        SpatialDual {
            v,
            dx1: &slope * &self.dx1,
            dx2: &slope * &self.dx2,
        }
    }
}
