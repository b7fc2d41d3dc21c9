//! The computation tape and differentiable tensor handles.
//!
//! A [`Tape`] records every operation of one forward pass; [`Var`] is a handle
//! to a node on it. Backward rules are closures that map the gradient flowing
//! into a node to the contribution for one of its parents; fan-out sums
//! contributions, so a value used twice receives both.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::rc::Rc;

use statrs::function::erf::erf;
use statrs::function::gamma::{digamma, ln_gamma};

use super::{axis_geometry, Tensor, TensorError};

type GradFn = Box<dyn Fn(&Tensor) -> Tensor>;

struct Node {
    value: Rc<Tensor>,
    requires_grad: bool,
    grad: Option<Tensor>,
    parents: Vec<(usize, GradFn)>,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
}

/// Records one forward pass. Cheap to clone (shared handle), confined to a
/// single thread.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A node that does not track gradients (inputs, masks, feature rows).
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, false, Vec::new())
    }

    /// A leaf that will hold its gradient after `backward` (model weights).
    pub fn param(&self, value: Tensor) -> Var {
        self.push(value, true, Vec::new())
    }

    fn push(&self, value: Tensor, requires_grad: bool, parents: Vec<(usize, GradFn)>) -> Var {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len();
        inner.nodes.push(Node {
            value: value.rc(),
            requires_grad,
            grad: None,
            parents,
        });
        Var {
            tape: self.clone(),
            idx,
        }
    }
}

/// A differentiable tensor on a [`Tape`].
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    idx: usize,
}

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch(format!(
            "{}: {:?} vs {:?}",
            op,
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip preserves shape")
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = a.data().iter().map(|&x| f(x)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("map preserves shape")
}

pub(crate) fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.data()[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data()[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out).expect("matmul shape")
}

pub(crate) fn transpose_raw(a: &Tensor) -> Tensor {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data()[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out).expect("transpose shape")
}

impl Var {
    pub fn value(&self) -> Rc<Tensor> {
        self.tape.inner.borrow().nodes[self.idx].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Gradient populated by [`Var::backward`]; present only on
    /// `requires_grad` nodes.
    pub fn grad(&self) -> Option<Tensor> {
        self.tape.inner.borrow().nodes[self.idx].grad.clone()
    }

    fn assert_same_tape(&self, other: &Var) {
        assert!(
            Rc::ptr_eq(&self.tape.inner, &other.tape.inner),
            "operands recorded on different tapes"
        );
    }

    fn unary(&self, value: Tensor, grad: GradFn) -> Var {
        self.tape.push(value, false, vec![(self.idx, grad)])
    }

    fn binary(&self, other: &Var, value: Tensor, ga: GradFn, gb: GradFn) -> Var {
        self.assert_same_tape(other);
        self.tape
            .push(value, false, vec![(self.idx, ga), (other.idx, gb)])
    }

    // ---- elementwise arithmetic -------------------------------------------

    pub fn add(&self, other: &Var) -> Result<Var, TensorError> {
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "add")?;
        let out = zip(&a, &b, |x, y| x + y);
        Ok(self.binary(
            other,
            out,
            Box::new(|g| g.clone()),
            Box::new(|g| g.clone()),
        ))
    }

    pub fn sub(&self, other: &Var) -> Result<Var, TensorError> {
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "sub")?;
        let out = zip(&a, &b, |x, y| x - y);
        Ok(self.binary(
            other,
            out,
            Box::new(|g| g.clone()),
            Box::new(|g| map(g, |v| -v)),
        ))
    }

    pub fn mul(&self, other: &Var) -> Result<Var, TensorError> {
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "mul")?;
        let out = zip(&a, &b, |x, y| x * y);
        let (ac, bc) = (a.clone(), b.clone());
        Ok(self.binary(
            other,
            out,
            Box::new(move |g| zip(g, &bc, |gv, y| gv * y)),
            Box::new(move |g| zip(g, &ac, |gv, x| gv * x)),
        ))
    }

    pub fn div(&self, other: &Var) -> Result<Var, TensorError> {
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "div")?;
        if b.data().iter().any(|&y| y == 0.0) {
            return Err(TensorError::Domain("division by zero".into()));
        }
        let out = zip(&a, &b, |x, y| x / y);
        let (ac, bc) = (a.clone(), b.clone());
        let b2 = b.clone();
        Ok(self.binary(
            other,
            out,
            Box::new(move |g| zip(g, &bc, |gv, y| gv / y)),
            Box::new(move |g| {
                let mut out = g.clone();
                for (i, v) in out.data_mut().iter_mut().enumerate() {
                    let (x, y) = (ac.data()[i], b2.data()[i]);
                    *v *= -x / (y * y);
                }
                out
            }),
        ))
    }

    pub fn neg(&self) -> Var {
        let out = map(&self.value(), |x| -x);
        self.unary(out, Box::new(|g| map(g, |v| -v)))
    }

    /// Add a tensor that is not on the tape (masks, positional encodings,
    /// targets). No gradient flows into the constant.
    pub fn add_const(&self, c: &Tensor) -> Result<Var, TensorError> {
        let a = self.value();
        same_shape(&a, c, "add_const")?;
        let out = zip(&a, c, |x, y| x + y);
        Ok(self.unary(out, Box::new(|g| g.clone())))
    }

    pub fn mul_const(&self, c: &Tensor) -> Result<Var, TensorError> {
        let a = self.value();
        same_shape(&a, c, "mul_const")?;
        let out = zip(&a, c, |x, y| x * y);
        let cc = c.clone();
        Ok(self.unary(out, Box::new(move |g| zip(g, &cc, |gv, y| gv * y))))
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let out = map(&self.value(), |x| x + c);
        self.unary(out, Box::new(|g| g.clone()))
    }

    pub fn scale(&self, c: f64) -> Var {
        let out = map(&self.value(), |x| c * x);
        self.unary(out, Box::new(move |g| map(g, |v| c * v)))
    }

    // ---- transcendental / activation --------------------------------------

    pub fn exp(&self) -> Var {
        let out = map(&self.value(), f64::exp);
        let oc = out.clone();
        self.unary(out, Box::new(move |g| zip(g, &oc, |gv, y| gv * y)))
    }

    pub fn log(&self) -> Result<Var, TensorError> {
        let a = self.value();
        if a.data().iter().any(|&x| x <= 0.0) {
            return Err(TensorError::Domain("log of non-positive value".into()));
        }
        let out = map(&a, f64::ln);
        let ac = a.clone();
        Ok(self.unary(out, Box::new(move |g| zip(g, &ac, |gv, x| gv / x))))
    }

    pub fn tanh(&self) -> Var {
        let out = map(&self.value(), f64::tanh);
        let oc = out.clone();
        self.unary(
            out,
            Box::new(move |g| zip(g, &oc, |gv, y| gv * (1.0 - y * y))),
        )
    }

    pub fn relu(&self) -> Var {
        let a = self.value();
        let out = map(&a, |x| x.max(0.0));
        let ac = a.clone();
        self.unary(
            out,
            Box::new(move |g| zip(g, &ac, |gv, x| if x > 0.0 { gv } else { 0.0 })),
        )
    }

    pub fn sigmoid(&self) -> Var {
        let out = map(&self.value(), sigmoid_scalar);
        let oc = out.clone();
        self.unary(
            out,
            Box::new(move |g| zip(g, &oc, |gv, y| gv * y * (1.0 - y))),
        )
    }

    /// Exact gelu, `x * Phi(x)` with the Gaussian CDF.
    pub fn gelu(&self) -> Var {
        let a = self.value();
        let out = map(&a, |x| x * gauss_cdf(x));
        let ac = a.clone();
        self.unary(
            out,
            Box::new(move |g| zip(g, &ac, |gv, x| gv * (gauss_cdf(x) + x * gauss_pdf(x)))),
        )
    }

    /// `ln(1 + e^x)`, computed in the overflow-safe form.
    pub fn softplus(&self) -> Var {
        let out = map(&self.value(), softplus_scalar);
        let a = self.value();
        self.unary(
            out,
            Box::new(move |g| zip(g, &a, |gv, x| gv * sigmoid_scalar(x))),
        )
    }

    /// `ln Γ(x)` for positive arguments; derivative is the digamma function.
    pub fn lgamma(&self) -> Result<Var, TensorError> {
        let a = self.value();
        if a.data().iter().any(|&x| x <= 0.0) {
            return Err(TensorError::Domain("lgamma of non-positive value".into()));
        }
        let out = map(&a, ln_gamma);
        let ac = a.clone();
        Ok(self.unary(out, Box::new(move |g| zip(g, &ac, |gv, x| gv * digamma(x)))))
    }

    /// Elementwise op with a caller-supplied derivative. Escape hatch for
    /// functions not covered above; also how the gradient-checker's negative
    /// controls are built.
    pub fn custom_unary(
        &self,
        f: impl Fn(f64) -> f64 + 'static,
        df: impl Fn(f64) -> f64 + 'static,
    ) -> Var {
        let a = self.value();
        let out = map(&a, &f);
        let ac = a.clone();
        self.unary(out, Box::new(move |g| zip(g, &ac, |gv, x| gv * df(x))))
    }

    // ---- matrix ops --------------------------------------------------------

    pub fn matmul(&self, other: &Var) -> Result<Var, TensorError> {
        let (a, b) = (self.value(), other.value());
        if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul: {:?} x {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let out = matmul_raw(&a, &b);
        let (ac, bc) = (a.clone(), b.clone());
        Ok(self.binary(
            other,
            out,
            Box::new(move |g| matmul_raw(g, &transpose_raw(&bc))),
            Box::new(move |g| matmul_raw(&transpose_raw(&ac), g)),
        ))
    }

    pub fn transpose(&self) -> Result<Var, TensorError> {
        let a = self.value();
        if a.shape().len() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "transpose needs rank 2, got {:?}",
                a.shape()
            )));
        }
        let out = transpose_raw(&a);
        Ok(self.unary(out, Box::new(|g| transpose_raw(g))))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var, TensorError> {
        let a = self.value();
        let wanted: usize = shape.iter().product();
        if wanted != a.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "reshape {:?} -> {:?}",
                a.shape(),
                shape
            )));
        }
        let out = Tensor::new(shape.to_vec(), a.data().to_vec()).expect("checked length");
        let orig = a.shape().to_vec();
        Ok(self.unary(
            out,
            Box::new(move |g| {
                Tensor::new(orig.clone(), g.data().to_vec()).expect("reshape back")
            }),
        ))
    }

    /// Broadcast-add a vector along the last axis: `x[..., d] + b[d]`.
    pub fn add_bias(&self, bias: &Var) -> Result<Var, TensorError> {
        let (a, b) = (self.value(), bias.value());
        let d = *a.shape().last().ok_or_else(|| {
            TensorError::ShapeMismatch("add_bias on rank-0 tensor".into())
        })?;
        if b.shape() != [d] {
            return Err(TensorError::ShapeMismatch(format!(
                "add_bias: value {:?} vs bias {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let mut out = a.data().to_vec();
        for (i, v) in out.iter_mut().enumerate() {
            *v += b.data()[i % d];
        }
        let out = Tensor::new(a.shape().to_vec(), out).expect("add_bias shape");
        Ok(self.binary(
            bias,
            out,
            Box::new(|g| g.clone()),
            Box::new(move |g| {
                let mut acc = vec![0.0; d];
                for (i, &gv) in g.data().iter().enumerate() {
                    acc[i % d] += gv;
                }
                Tensor::from_vec(acc)
            }),
        ))
    }

    // ---- reductions --------------------------------------------------------

    pub fn sum_axis(&self, axis: usize) -> Result<Var, TensorError> {
        self.reduce_axis(axis, false)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var, TensorError> {
        self.reduce_axis(axis, true)
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Result<Var, TensorError> {
        let a = self.value();
        let geo = axis_geometry(a.shape(), axis)?;
        let scale = if mean { 1.0 / geo.axis_len as f64 } else { 1.0 };
        let mut out_shape = a.shape().to_vec();
        out_shape.remove(axis);
        let mut out = vec![0.0; geo.outer * geo.inner];
        for o in 0..geo.outer {
            for k in 0..geo.axis_len {
                let base = (o * geo.axis_len + k) * geo.inner;
                for i in 0..geo.inner {
                    out[o * geo.inner + i] += a.data()[base + i];
                }
            }
        }
        for v in &mut out {
            *v *= scale;
        }
        let out = Tensor::new(out_shape, out).expect("reduce shape");
        let in_shape = a.shape().to_vec();
        Ok(self.unary(
            out,
            Box::new(move |g| {
                let mut back = vec![0.0; in_shape.iter().product()];
                for o in 0..geo.outer {
                    for k in 0..geo.axis_len {
                        let base = (o * geo.axis_len + k) * geo.inner;
                        for i in 0..geo.inner {
                            back[base + i] = g.data()[o * geo.inner + i] * scale;
                        }
                    }
                }
                Tensor::new(in_shape.clone(), back).expect("reduce back")
            }),
        ))
    }

    pub fn sum_all(&self) -> Var {
        let a = self.value();
        let total: f64 = a.data().iter().sum();
        let shape = a.shape().to_vec();
        self.unary(
            Tensor::scalar(total),
            Box::new(move |g| Tensor::full(&shape, g.data()[0])),
        )
    }

    pub fn mean_all(&self) -> Var {
        let a = self.value();
        let n = a.len() as f64;
        let total: f64 = a.data().iter().sum();
        let shape = a.shape().to_vec();
        self.unary(
            Tensor::scalar(total / n),
            Box::new(move |g| Tensor::full(&shape, g.data()[0] / n)),
        )
    }

    // ---- softmax / layer norm ----------------------------------------------

    /// Exp-normalization along `axis` with max-subtraction. `-inf` inputs come
    /// out as exact zeros, which is how attention masking is realized.
    pub fn softmax(&self, axis: usize) -> Result<Var, TensorError> {
        let a = self.value();
        let geo = axis_geometry(a.shape(), axis)?;
        let mut out = vec![0.0; a.len()];
        for o in 0..geo.outer {
            for i in 0..geo.inner {
                let at = |k: usize| (o * geo.axis_len + k) * geo.inner + i;
                let mut hi = f64::NEG_INFINITY;
                for k in 0..geo.axis_len {
                    hi = hi.max(a.data()[at(k)]);
                }
                let mut denom = 0.0;
                for k in 0..geo.axis_len {
                    let e = (a.data()[at(k)] - hi).exp();
                    out[at(k)] = e;
                    denom += e;
                }
                for k in 0..geo.axis_len {
                    out[at(k)] /= denom;
                }
            }
        }
        let out = Tensor::new(a.shape().to_vec(), out).expect("softmax shape");
        let oc = out.clone();
        Ok(self.unary(
            out,
            Box::new(move |g| {
                // dx = y * (g - sum(g * y, axis))
                let mut back = vec![0.0; g.len()];
                for o in 0..geo.outer {
                    for i in 0..geo.inner {
                        let at = |k: usize| (o * geo.axis_len + k) * geo.inner + i;
                        let mut dot = 0.0;
                        for k in 0..geo.axis_len {
                            dot += g.data()[at(k)] * oc.data()[at(k)];
                        }
                        for k in 0..geo.axis_len {
                            back[at(k)] = oc.data()[at(k)] * (g.data()[at(k)] - dot);
                        }
                    }
                }
                Tensor::new(oc.shape().to_vec(), back).expect("softmax back")
            }),
        ))
    }

    /// Standardize the last axis, then apply `gain` and `bias`.
    pub fn layer_norm(&self, gain: &Var, bias: &Var, eps: f64) -> Result<Var, TensorError> {
        let (a, gv, bv) = (self.value(), gain.value(), bias.value());
        let d = *a.shape().last().ok_or_else(|| {
            TensorError::ShapeMismatch("layer_norm on rank-0 tensor".into())
        })?;
        if gv.shape() != [d] || bv.shape() != [d] {
            return Err(TensorError::ShapeMismatch(format!(
                "layer_norm: value {:?}, gain {:?}, bias {:?}",
                a.shape(),
                gv.shape(),
                bv.shape()
            )));
        }
        let lanes = a.len() / d;
        let mut normed = vec![0.0; a.len()];
        let mut inv_std = vec![0.0; lanes];
        for l in 0..lanes {
            let row = &a.data()[l * d..(l + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[l] = inv;
            for (i, &x) in row.iter().enumerate() {
                normed[l * d + i] = (x - mean) * inv;
            }
        }
        let mut out = vec![0.0; a.len()];
        for l in 0..lanes {
            for i in 0..d {
                out[l * d + i] = normed[l * d + i] * gv.data()[i] + bv.data()[i];
            }
        }
        let out = Tensor::new(a.shape().to_vec(), out).expect("layer_norm shape");

        let normed = Rc::new(normed);
        let inv_std = Rc::new(inv_std);
        let shape = a.shape().to_vec();
        let gval = gv.clone();

        let (n1, s1, sh1) = (normed.clone(), inv_std.clone(), shape.clone());
        let dx = Box::new(move |g: &Tensor| {
            let mut back = vec![0.0; g.len()];
            for l in 0..back.len() / d {
                let mut mean_dxhat = 0.0;
                let mut mean_dxhat_xhat = 0.0;
                for i in 0..d {
                    let dxhat = g.data()[l * d + i] * gval.data()[i];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * n1[l * d + i];
                }
                mean_dxhat /= d as f64;
                mean_dxhat_xhat /= d as f64;
                for i in 0..d {
                    let dxhat = g.data()[l * d + i] * gval.data()[i];
                    back[l * d + i] =
                        s1[l] * (dxhat - mean_dxhat - n1[l * d + i] * mean_dxhat_xhat);
                }
            }
            Tensor::new(sh1.clone(), back).expect("layer_norm back")
        });
        let n2 = normed;
        let dgain = Box::new(move |g: &Tensor| {
            let mut acc = vec![0.0; d];
            for (i, &gvv) in g.data().iter().enumerate() {
                acc[i % d] += gvv * n2[i];
            }
            Tensor::from_vec(acc)
        });
        let dbias = Box::new(move |g: &Tensor| {
            let mut acc = vec![0.0; d];
            for (i, &gvv) in g.data().iter().enumerate() {
                acc[i % d] += gvv;
            }
            Tensor::from_vec(acc)
        });

        self.assert_same_tape(gain);
        self.assert_same_tape(bias);
        Ok(self.tape.push(
            out,
            false,
            vec![(self.idx, dx), (gain.idx, dgain), (bias.idx, dbias)],
        ))
    }

    // ---- shape surgery -----------------------------------------------------

    /// Concatenate along `axis`; all other axes must agree.
    pub fn concat(parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::ShapeMismatch("concat of zero tensors".into()))?;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let base_shape = values[0].shape().to_vec();
        let mut total_axis = 0;
        for v in &values {
            if v.shape().len() != base_shape.len() {
                return Err(TensorError::ShapeMismatch("concat rank mismatch".into()));
            }
            for (ax, (&s, &b)) in v.shape().iter().zip(&base_shape).enumerate() {
                if ax != axis && s != b {
                    return Err(TensorError::ShapeMismatch(format!(
                        "concat axis {}: {:?} vs {:?}",
                        axis,
                        v.shape(),
                        base_shape
                    )));
                }
            }
            total_axis += v.shape()[axis];
        }
        let mut out_shape = base_shape;
        out_shape[axis] = total_axis;
        let out_geo = axis_geometry(&out_shape, axis)?;

        let mut out = vec![0.0; out_shape.iter().product()];
        let mut offset = 0;
        for v in &values {
            let part_len = v.shape()[axis];
            for o in 0..out_geo.outer {
                for k in 0..part_len {
                    let src = (o * part_len + k) * out_geo.inner;
                    let dst = (o * out_geo.axis_len + offset + k) * out_geo.inner;
                    out[dst..dst + out_geo.inner]
                        .copy_from_slice(&v.data()[src..src + out_geo.inner]);
                }
            }
            offset += part_len;
        }
        let out = Tensor::new(out_shape, out).expect("concat shape");

        let mut parents: Vec<(usize, GradFn)> = Vec::with_capacity(parts.len());
        let mut offset = 0;
        for (part, v) in parts.iter().zip(&values) {
            first.assert_same_tape(part);
            let part_len = v.shape()[axis];
            let part_shape = v.shape().to_vec();
            let start = offset;
            parents.push((
                part.idx,
                Box::new(move |g: &Tensor| {
                    let mut back = vec![0.0; part_shape.iter().product()];
                    for o in 0..out_geo.outer {
                        for k in 0..part_len {
                            let src = (o * out_geo.axis_len + start + k) * out_geo.inner;
                            let dst = (o * part_len + k) * out_geo.inner;
                            back[dst..dst + out_geo.inner]
                                .copy_from_slice(&g.data()[src..src + out_geo.inner]);
                        }
                    }
                    Tensor::new(part_shape.clone(), back).expect("concat back")
                }),
            ));
            offset += part_len;
        }
        Ok(first.tape.push(out, false, parents))
    }

    /// Take `[start, start + len)` along `axis`.
    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let a = self.value();
        let geo = axis_geometry(a.shape(), axis)?;
        if start + len > geo.axis_len {
            return Err(TensorError::ShapeMismatch(format!(
                "slice [{start}, {}) out of bounds for axis length {}",
                start + len,
                geo.axis_len
            )));
        }
        let mut out_shape = a.shape().to_vec();
        out_shape[axis] = len;
        let mut out = vec![0.0; out_shape.iter().product()];
        for o in 0..geo.outer {
            for k in 0..len {
                let src = (o * geo.axis_len + start + k) * geo.inner;
                let dst = (o * len + k) * geo.inner;
                out[dst..dst + geo.inner].copy_from_slice(&a.data()[src..src + geo.inner]);
            }
        }
        let out = Tensor::new(out_shape, out).expect("slice shape");
        let in_shape = a.shape().to_vec();
        Ok(self.unary(
            out,
            Box::new(move |g| {
                let mut back = vec![0.0; in_shape.iter().product()];
                for o in 0..geo.outer {
                    for k in 0..len {
                        let src = (o * len + k) * geo.inner;
                        let dst = (o * geo.axis_len + start + k) * geo.inner;
                        back[dst..dst + geo.inner]
                            .copy_from_slice(&g.data()[src..src + geo.inner]);
                    }
                }
                Tensor::new(in_shape.clone(), back).expect("slice back")
            }),
        ))
    }

    /// Gather rows of a `[vocab, dim]` table: result is `[indices.len(), dim]`.
    /// Gradients accumulate into the gathered rows.
    pub fn embedding_lookup(table: &Var, indices: &[usize]) -> Result<Var, TensorError> {
        let t = table.value();
        if t.shape().len() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "embedding table must be rank 2, got {:?}",
                t.shape()
            )));
        }
        let (vocab, dim) = (t.shape()[0], t.shape()[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(TensorError::Domain(format!(
                "embedding index {bad} out of range (cardinality {vocab})"
            )));
        }
        let mut out = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            out.extend_from_slice(&t.data()[i * dim..(i + 1) * dim]);
        }
        let out = Tensor::new(vec![indices.len(), dim], out).expect("lookup shape");
        let idxs = indices.to_vec();
        Ok(table.unary(
            out,
            Box::new(move |g| {
                let mut back = vec![0.0; vocab * dim];
                for (row, &i) in idxs.iter().enumerate() {
                    for c in 0..dim {
                        back[i * dim + c] += g.data()[row * dim + c];
                    }
                }
                Tensor::new(vec![vocab, dim], back).expect("lookup back")
            }),
        ))
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse sweep from a scalar. Populates `grad` on every `requires_grad`
    /// node reachable from this one; each tensor's gradient is accumulated
    /// exactly once per use.
    pub fn backward(&self) -> Result<(), TensorError> {
        let mut inner = self.tape.inner.borrow_mut();
        {
            let out = &inner.nodes[self.idx].value;
            if !out.is_scalar() {
                return Err(TensorError::NotScalar(out.shape().to_vec()));
            }
        }
        let mut grads: Vec<Option<Tensor>> = (0..inner.nodes.len()).map(|_| None).collect();
        let seed_shape = inner.nodes[self.idx].value.shape().to_vec();
        grads[self.idx] = Some(Tensor::full(&seed_shape, 1.0));

        for i in (0..=self.idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            {
                let node = &inner.nodes[i];
                for (parent, f) in &node.parents {
                    let contribution = f(&g);
                    match &mut grads[*parent] {
                        Some(acc) => {
                            for (a, c) in acc.data_mut().iter_mut().zip(contribution.data()) {
                                *a += c;
                            }
                        }
                        slot => *slot = Some(contribution),
                    }
                }
            }
            if inner.nodes[i].requires_grad {
                inner.nodes[i].grad = Some(g);
            }
        }
        Ok(())
    }
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus_scalar(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn gauss_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn gauss_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_identity_passes_through() {
        let tape = Tape::new();
        let eye = tape.constant(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
        let x = tape.constant(Tensor::from_rows(&[&[3.0, -1.0], &[2.5, 7.0]]).unwrap());
        let y = eye.matmul(&x).unwrap();
        assert_eq!(y.value().data(), x.value().data());
    }

    #[test]
    fn matmul_hand_example() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[&[1.0], &[1.0]]).unwrap());
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.value().data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a_data: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b_data: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = Tensor::new(vec![5, 4], a_data).unwrap();
        let b = Tensor::new(vec![4, 3], b_data).unwrap();

        // independent triple-loop reference
        let mut want = vec![0.0; 15];
        for i in 0..5 {
            for j in 0..3 {
                for k in 0..4 {
                    want[i * 3 + j] += a.data()[i * 4 + k] * b.data()[k * 3 + j];
                }
            }
        }

        let tape = Tape::new();
        let c = tape.constant(a).matmul(&tape.constant(b)).unwrap();
        for (got, want) in c.value().data().iter().zip(&want) {
            assert!(close(*got, *want, 1e-12), "{got} vs {want}");
        }
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(
            a.matmul(&b),
            Err(TensorError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn softmax_constant_row_is_uniform() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![4.2; 5]));
        let y = x.softmax(0).unwrap();
        for &v in y.value().data() {
            assert!(close(v, 0.2, 1e-15));
        }
    }

    #[test]
    fn softmax_closed_form() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![0.0, 3.0_f64.ln()]));
        let y = x.softmax(0).unwrap();
        assert!(close(y.value().data()[0], 0.25, 1e-15));
        assert!(close(y.value().data()[1], 0.75, 1e-15));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_match_direct_formula() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..24).map(|_| rng.random_range(-5.0..5.0)).collect();
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![4, 6], data.clone()).unwrap());
        let y = x.softmax(1).unwrap();
        for r in 0..4 {
            let row = &data[r * 6..(r + 1) * 6];
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            let mut sum = 0.0;
            for c in 0..6 {
                let got = y.value().at2(r, c);
                assert!(close(got, row[c].exp() / denom, 1e-12));
                sum += got;
            }
            assert!(close(sum, 1.0, 1e-12));
        }
    }

    #[test]
    fn softmax_neg_infinity_masks_to_exact_zero() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![1.0, f64::NEG_INFINITY, 2.0]));
        let y = x.softmax(0).unwrap();
        assert_eq!(y.value().data()[1], 0.0);
        let sum: f64 = y.value().data().iter().sum();
        assert!(close(sum, 1.0, 1e-12));
    }

    #[test]
    fn layer_norm_constant_lane_is_zero() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![5.0; 4]));
        let gain = tape.constant(Tensor::from_vec(vec![1.0; 4]));
        let bias = tape.constant(Tensor::from_vec(vec![0.0; 4]));
        let y = x.layer_norm(&gain, &bias, 1e-8).unwrap();
        for &v in y.value().data() {
            assert!(close(v, 0.0, 1e-9));
        }
    }

    #[test]
    fn layer_norm_already_standardized_input() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![1.0, -1.0]));
        let gain = tape.constant(Tensor::from_vec(vec![1.0; 2]));
        let bias = tape.constant(Tensor::from_vec(vec![0.0; 2]));
        let y = x.layer_norm(&gain, &bias, 1e-12).unwrap();
        assert!(close(y.value().data()[0], 1.0, 1e-9));
        assert!(close(y.value().data()[1], -1.0, 1e-9));
    }

    #[test]
    fn layer_norm_mean_equals_bias() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..8).map(|_| rng.random_range(-10.0..10.0)).collect();
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 8], data).unwrap());
        let gain = tape.constant(Tensor::from_vec(vec![2.0; 8]));
        let bias = tape.constant(Tensor::from_vec(vec![0.75; 8]));
        let y = x.layer_norm(&gain, &bias, 1e-12).unwrap();
        let mean: f64 = y.value().data().iter().sum::<f64>() / 8.0;
        assert!(close(mean, 0.75, 1e-9));
    }

    #[test]
    fn exp_of_zero_is_one() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::scalar(0.0));
        assert_eq!(x.exp().value().data()[0], 1.0);
    }

    #[test]
    fn sum_backward_is_ones() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let loss = x.sum_all();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_backward_is_two_x() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.5, -2.0, 0.0]));
        let loss = x.mul(&x).unwrap().sum_all();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[3.0, -4.0, 0.0]);
    }

    #[test]
    fn fanout_sums_contributions() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        let loss = x.sum_all().add(&x.sum_all()).unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(x.backward(), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn gelu_matches_direct_formula_on_grid() {
        let tape = Tape::new();
        let grid: Vec<f64> = (-40..=40).map(|i| i as f64 / 10.0).collect();
        let x = tape.constant(Tensor::from_vec(grid.clone()));
        let y = x.gelu();
        for (i, &v) in grid.iter().enumerate() {
            let want = 0.5 * v * (1.0 + erf(v / std::f64::consts::SQRT_2));
            assert!(close(y.value().data()[i], want, 1e-9));
        }
    }

    #[test]
    fn reshape_transpose_roundtrip_bit_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![3, 4], data.clone()).unwrap());
        let back = x
            .reshape(&[4, 3])
            .unwrap()
            .reshape(&[3, 4])
            .unwrap();
        assert_eq!(back.value().data(), data.as_slice());
        let double_t = x.transpose().unwrap().transpose().unwrap();
        assert_eq!(double_t.value().data(), data.as_slice());
    }

    #[test]
    fn concat_and_slice_invert() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[&[5.0], &[6.0]]).unwrap());
        let joined = Var::concat(&[a.clone(), b], 1).unwrap();
        assert_eq!(joined.value().data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let left = joined.slice_axis(1, 0, 2).unwrap();
        assert_eq!(left.value().data(), a.value().data());
    }

    #[test]
    fn embedding_lookup_gathers_and_accumulates() {
        let tape = Tape::new();
        let table = tape.param(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap());
        let rows = Var::embedding_lookup(&table, &[1, 1, 0]).unwrap();
        assert_eq!(rows.value().data(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        rows.sum_all().backward().unwrap();
        // row 1 used twice, row 0 once
        assert_eq!(table.grad().unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn division_by_zero_is_domain_error() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::scalar(1.0));
        let b = tape.constant(Tensor::scalar(0.0));
        assert!(matches!(a.div(&b), Err(TensorError::Domain(_))));
        let c = tape.constant(Tensor::scalar(-1.0));
        assert!(matches!(c.log(), Err(TensorError::Domain(_))));
    }

    #[test]
    fn mean_axis_reduces_rows() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_rows(&[&[1.0, 3.0], &[5.0, 7.0]]).unwrap());
        let m = x.mean_axis(0).unwrap();
        assert_eq!(m.value().data(), &[3.0, 5.0]);
        m.sum_all().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[0.5, 0.5, 0.5, 0.5]);
    }
}
