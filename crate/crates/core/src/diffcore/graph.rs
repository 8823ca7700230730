//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every forward op appends a node holding its output value and the inputs
//! it was computed from. [`Graph::backward`] walks the tape in reverse,
//! and [`Graph::reverse_accumulate`] adds the parameter gradients into a
//! [`ParamStore`].

use std::collections::HashMap;

use rand::Rng;

use super::rng::{name_key, stream_rng};
use super::{ParamStore, Tensor};
use crate::error::{dim_err, param_err, Error, Result};
use crate::scalar::Real;

/// Smoothing added under the Euclidean square root.
pub const DISTANCE_SMOOTHING: f64 = 1e-12;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Forward-pass mode. Train mode carries the counter that addresses the
/// dropout streams; replaying a counter replays the masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { stream: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    #[default]
    Euclidean,
    SquaredEuclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Output extent along one axis, or `None` if the kernel does not fit.
    pub fn out_len(&self, input: usize, kernel: usize) -> Option<usize> {
        let padded = input + 2 * self.pad;
        (padded >= kernel && self.stride > 0).then(|| (padded - kernel) / self.stride + 1)
    }
}

enum Op<T> {
    Leaf,
    Param,
    Linear { x: Var, w: Var, b: Var },
    Conv2d { x: Var, k: Var, b: Var, geom: ConvGeom },
    Relu(Var),
    Dropout { x: Var, mask: Vec<T> },
    Gap(Var),
    Flatten(Var),
    Concat(Vec<Var>),
    CrossDistance { q: Var, r: Var, pairs: Vec<(usize, usize)>, mode: DistanceMode },
    SoftMargin { dp: Var, dn: Var, alpha: T },
    Hinge { dp: Var, dn: Var, margin: T },
    Mean(Var),
    Sum(Var),
    Scale(Var, T),
    Add(Var, Var),
    L2Normalize(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// The tape.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    params: HashMap<String, Var>,
    backward_done: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Numerically safe `ln(1 + e^x)`.
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::c(30.0) {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid, the derivative of [`softplus`].
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: HashMap::new(),
            backward_done: false,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// A constant input; gradients flowing into it are computed but unused.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Binds a store parameter to the tape. Binding the same name twice
    /// returns the same node, so shared weights collect one gradient.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.value(name)?.clone();
        let v = self.push(value, Op::Param);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[0] || ws[1] != bs[0] {
            return Err(dim_err!(
                "linear: input {xs:?} incompatible with weights {ws:?} and bias {bs:?}"
            ));
        }
        let (n, din, dout) = (xs[0], ws[0], ws[1]);
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![T::zero(); n * dout];
        for r in 0..n {
            let orow = &mut out[r * dout..(r + 1) * dout];
            let xrow = &xv[r * din..(r + 1) * din];
            for (i, &xi) in xrow.iter().enumerate() {
                let wrow = &wv[i * dout..(i + 1) * dout];
                for (o, &wij) in orow.iter_mut().zip(wrow) {
                    *o += xi * wij;
                }
            }
            for (o, &bj) in orow.iter_mut().zip(bv) {
                *o += bj;
            }
        }
        let value = Tensor::new(&[n, dout], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    pub fn conv2d(&mut self, x: Var, k: Var, b: Var, geom: ConvGeom) -> Result<Var> {
        let (xs, ks, bs) = (self.value(x).shape(), self.value(k).shape(), self.value(b).shape());
        if xs.len() != 4 || ks.len() != 4 || bs.len() != 1 || xs[1] != ks[1] || ks[0] != bs[0] {
            return Err(dim_err!(
                "conv2d: input {xs:?} incompatible with kernel {ks:?} and bias {bs:?}"
            ));
        }
        let (oh, ow) = match (geom.out_len(xs[2], ks[2]), geom.out_len(xs[3], ks[3])) {
            (Some(h), Some(w)) => (h, w),
            _ => {
                return Err(dim_err!(
                    "conv2d: kernel {ks:?} larger than input {xs:?} (padding {})",
                    geom.pad
                ))
            }
        };
        let dims = ConvDims::new(xs, ks, oh, ow, geom);
        let mut out = vec![T::zero(); dims.n * dims.k * oh * ow];
        conv_forward(
            &dims,
            self.value(x).data(),
            self.value(k).data(),
            self.value(b).data(),
            &mut out,
        );
        let value = Tensor::new(&[dims.n, dims.k, oh, ow], out)?;
        Ok(self.push(value, Op::Conv2d { x, k, b, geom }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push(value, Op::Relu(x))
    }

    /// Inverted dropout. `site` identifies the layer; in train mode the mask
    /// is drawn from the stream `(site, stream)`.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, site: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(param_err!("dropout probability must lie in [0, 1), got {p}"));
        }
        let stream = match mode {
            Mode::Eval => return Ok(x),
            Mode::Train { .. } if p == 0.0 => return Ok(x),
            Mode::Train { stream } => stream,
        };
        let mut rng = stream_rng(site, name_key("dropout"), stream);
        let keep = T::c(1.0 / (1.0 - p));
        let src = self.value(x);
        let mask: Vec<T> = (0..src.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(src.shape(), data)?;
        Ok(self.push(value, Op::Dropout { x, mask }))
    }

    /// Global average pooling `N×C×H×W → N×C`.
    pub fn gap(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape();
        if s.len() != 4 {
            return Err(dim_err!("gap expects N×C×H×W, got {s:?}"));
        }
        let (n, c, plane) = (s[0], s[1], s[2] * s[3]);
        let inv = T::one() / T::from_usize_lossy(plane);
        let data = self
            .value(x)
            .data()
            .chunks(plane)
            .map(|ch| ch.iter().copied().sum::<T>() * inv)
            .collect();
        let value = Tensor::new(&[n, c], data)?;
        Ok(self.push(value, Op::Gap(x)))
    }

    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let (n, d) = self.value(x).rows_cols();
        let value = self.value(x).clone().reshape(&[n, d])?;
        Ok(self.push(value, Op::Flatten(x)))
    }

    /// Joins rank-2 tensors along the feature dimension.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| dim_err!("concat of nothing"))?;
        let n = self.value(*first).shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[0] != n {
                return Err(dim_err!(
                    "concat: part {s:?} does not match {:?}",
                    self.value(*first).shape()
                ));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::new(&[n, total], data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    /// Distances between rows `q[i]` and `r[j]` for each `(i, j)` in `pairs`.
    pub fn cross_distance(
        &mut self,
        q: Var,
        r: Var,
        pairs: Vec<(usize, usize)>,
        mode: DistanceMode,
    ) -> Result<Var> {
        let (qs, rs) = (self.value(q).shape(), self.value(r).shape());
        if qs.len() != 2 || rs.len() != 2 || qs[1] != rs[1] {
            return Err(dim_err!("distance: {qs:?} vs {rs:?}"));
        }
        if pairs.is_empty() {
            return Err(param_err!("distance: empty pair list"));
        }
        if let Some(&(i, j)) = pairs.iter().find(|(i, j)| *i >= qs[0] || *j >= rs[0]) {
            return Err(dim_err!("distance: pair ({i}, {j}) out of range for {qs:?} / {rs:?}"));
        }
        let (qt, rt) = (self.value(q), self.value(r));
        let data = pairs
            .iter()
            .map(|&(i, j)| row_distance(qt.row(i), rt.row(j), mode))
            .collect();
        let value = Tensor::new(&[pairs.len()], data)?;
        Ok(self.push(value, Op::CrossDistance { q, r, pairs, mode }))
    }

    /// Elementwise `ln(1 + e^{α·dp − α·dn})`.
    pub fn soft_margin(&mut self, dp: Var, dn: Var, alpha: T) -> Result<Var> {
        self.same_shape(dp, dn, "soft margin")?;
        let data = self
            .value(dp)
            .data()
            .iter()
            .zip(self.value(dn).data())
            .map(|(&p, &n)| softplus(alpha * p - alpha * n))
            .collect();
        let value = Tensor::new(self.value(dp).shape(), data)?;
        Ok(self.push(value, Op::SoftMargin { dp, dn, alpha }))
    }

    /// Elementwise `max(0, m + dp − dn)`.
    pub fn hinge(&mut self, dp: Var, dn: Var, margin: T) -> Result<Var> {
        self.same_shape(dp, dn, "hinge")?;
        let data = self
            .value(dp)
            .data()
            .iter()
            .zip(self.value(dn).data())
            .map(|(&p, &n)| (margin + p - n).max(T::zero()))
            .collect();
        let value = Tensor::new(self.value(dp).shape(), data)?;
        Ok(self.push(value, Op::Hinge { dp, dn, margin }))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().copied().sum::<T>() / T::from_usize_lossy(t.len());
        self.push(Tensor::scalar(m), Op::Mean(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::Scale(x, c))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Scales each row to unit Euclidean norm.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(dim_err!("l2 normalize expects a matrix, got {:?}", t.shape()));
        }
        let (n, _) = t.rows_cols();
        let eps = T::c(DISTANCE_SMOOTHING);
        let mut data = Vec::with_capacity(t.len());
        for i in 0..n {
            let row = t.row(i);
            let norm = (row.iter().map(|&v| v * v).sum::<T>() + eps).sqrt();
            data.extend(row.iter().map(|&v| v / norm));
        }
        let value = Tensor::new(t.shape(), data)?;
        Ok(self.push(value, Op::L2Normalize(x)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(dim_err!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        Ok(())
    }

    /// Propagates `∂loss/∂node` to every node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        if loss.0 >= self.nodes.len() || self.value(loss).len() != 1 {
            return Err(Error::State("backward requires a scalar loss node".into()));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g)?;
            self.grads[i] = Some(g);
        }
        self.backward_done = true;
        Ok(())
    }

    /// Runs [`backward`](Self::backward) and adds every bound parameter's
    /// gradient into `store`.
    pub fn reverse_accumulate(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        self.backward(loss)?;
        for (name, &v) in &self.params {
            if let Some(g) = &self.grads[v.0] {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }

    fn acc(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&mut self, i: usize, g: &Tensor<T>) -> Result<()> {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let val = |v: Var| &nodes[v.0].value;
        match &nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::Linear { x, w, b } => {
                let (xt, wt) = (val(*x), val(*w));
                let (n, din) = (xt.shape()[0], xt.shape()[1]);
                let dout = wt.shape()[1];
                let (xv, wv, gv) = (xt.data(), wt.data(), g.data());
                let mut dx = vec![T::zero(); n * din];
                let mut dw = vec![T::zero(); din * dout];
                let mut db = vec![T::zero(); dout];
                for r in 0..n {
                    let grow = &gv[r * dout..(r + 1) * dout];
                    for i in 0..din {
                        let wrow = &wv[i * dout..(i + 1) * dout];
                        let mut s = T::zero();
                        for (&gj, &wij) in grow.iter().zip(wrow) {
                            s += gj * wij;
                        }
                        dx[r * din + i] = s;
                        let xi = xv[r * din + i];
                        for (d, &gj) in dw[i * dout..(i + 1) * dout].iter_mut().zip(grow) {
                            *d += xi * gj;
                        }
                    }
                    for (d, &gj) in db.iter_mut().zip(grow) {
                        *d += gj;
                    }
                }
                Self::acc(grads, *x, Tensor::new(xt.shape(), dx)?);
                Self::acc(grads, *w, Tensor::new(wt.shape(), dw)?);
                Self::acc(grads, *b, Tensor::new(&[dout], db)?);
            }
            Op::Conv2d { x, k, b, geom } => {
                let (xt, kt) = (val(*x), val(*k));
                let out = &nodes[i].value;
                let dims = ConvDims::new(xt.shape(), kt.shape(), out.shape()[2], out.shape()[3], *geom);
                let mut dx = vec![T::zero(); xt.len()];
                let mut dk = vec![T::zero(); kt.len()];
                let mut db = vec![T::zero(); dims.k];
                conv_backward(&dims, xt.data(), kt.data(), g.data(), &mut dx, &mut dk, &mut db);
                Self::acc(grads, *x, Tensor::new(xt.shape(), dx)?);
                Self::acc(grads, *k, Tensor::new(kt.shape(), dk)?);
                Self::acc(grads, *b, Tensor::new(&[dims.k], db)?);
            }
            Op::Relu(x) => {
                let xt = val(*x);
                let data = xt
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gi)| if v > T::zero() { gi } else { T::zero() })
                    .collect();
                Self::acc(grads, *x, Tensor::new(xt.shape(), data)?);
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(&gi, &m)| gi * m).collect();
                Self::acc(grads, *x, Tensor::new(g.shape(), data)?);
            }
            Op::Gap(x) => {
                let s = val(*x).shape();
                let plane = s[2] * s[3];
                let inv = T::one() / T::from_usize_lossy(plane);
                let mut data = Vec::with_capacity(val(*x).len());
                for &gi in g.data() {
                    data.extend(std::iter::repeat_n(gi * inv, plane));
                }
                Self::acc(grads, *x, Tensor::new(s, data)?);
            }
            Op::Flatten(x) => {
                Self::acc(grads, *x, g.clone().reshape(val(*x).shape())?);
            }
            Op::Concat(parts) => {
                let n = g.shape()[0];
                let total = g.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).shape()[1];
                    let mut data = Vec::with_capacity(n * w);
                    for r in 0..n {
                        data.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                    }
                    offset += w;
                    Self::acc(grads, p, Tensor::new(&[n, w], data)?);
                }
            }
            Op::CrossDistance { q, r, pairs, mode } => {
                let (qt, rt) = (val(*q), val(*r));
                let e = qt.shape()[1];
                let out = nodes[i].value.data();
                let mut dq = vec![T::zero(); qt.len()];
                let mut dr = vec![T::zero(); rt.len()];
                for (p, &(a, bj)) in pairs.iter().enumerate() {
                    let coef = match mode {
                        DistanceMode::Euclidean => g.data()[p] / out[p],
                        DistanceMode::SquaredEuclidean => g.data()[p] * T::c(2.0),
                    };
                    let (qa, rb) = (qt.row(a), rt.row(bj));
                    for t in 0..e {
                        let d = coef * (qa[t] - rb[t]);
                        dq[a * e + t] += d;
                        dr[bj * e + t] -= d;
                    }
                }
                Self::acc(grads, *q, Tensor::new(qt.shape(), dq)?);
                Self::acc(grads, *r, Tensor::new(rt.shape(), dr)?);
            }
            Op::SoftMargin { dp, dn, alpha } => {
                let (pv, nv) = (val(*dp).data(), val(*dn).data());
                let mut gp = Vec::with_capacity(pv.len());
                let mut gn = Vec::with_capacity(pv.len());
                for ((&p, &n), &gi) in pv.iter().zip(nv).zip(g.data()) {
                    let s = gi * *alpha * sigmoid(*alpha * p - *alpha * n);
                    gp.push(s);
                    gn.push(-s);
                }
                Self::acc(grads, *dp, Tensor::new(g.shape(), gp)?);
                Self::acc(grads, *dn, Tensor::new(g.shape(), gn)?);
            }
            Op::Hinge { dp, dn, margin } => {
                let (pv, nv) = (val(*dp).data(), val(*dn).data());
                let mut gp = Vec::with_capacity(pv.len());
                for ((&p, &n), &gi) in pv.iter().zip(nv).zip(g.data()) {
                    gp.push(if *margin + p - n > T::zero() { gi } else { T::zero() });
                }
                let gn = gp.iter().map(|&v| -v).collect();
                Self::acc(grads, *dp, Tensor::new(g.shape(), gp)?);
                Self::acc(grads, *dn, Tensor::new(g.shape(), gn)?);
            }
            Op::Mean(x) => {
                let xt = val(*x);
                let gi = g.item() / T::from_usize_lossy(xt.len());
                Self::acc(grads, *x, Tensor::full(xt.shape(), gi));
            }
            Op::Sum(x) => {
                Self::acc(grads, *x, Tensor::full(val(*x).shape(), g.item()));
            }
            Op::Scale(x, c) => {
                Self::acc(grads, *x, g.map(|v| v * *c));
            }
            Op::Add(a, b) => {
                Self::acc(grads, *a, g.clone());
                Self::acc(grads, *b, g.clone());
            }
            Op::L2Normalize(x) => {
                let xt = val(*x);
                let y = &nodes[i].value;
                let (n, d) = xt.rows_cols();
                let eps = T::c(DISTANCE_SMOOTHING);
                let mut dx = Vec::with_capacity(xt.len());
                for r in 0..n {
                    let norm = (xt.row(r).iter().map(|&v| v * v).sum::<T>() + eps).sqrt();
                    let (yr, gr) = (y.row(r), &g.data()[r * d..(r + 1) * d]);
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    dx.extend(yr.iter().zip(gr).map(|(&yv, &gv)| (gv - yv * dot) / norm));
                }
                Self::acc(grads, *x, Tensor::new(xt.shape(), dx)?);
            }
        }
        Ok(())
    }
}

/// Distance between two equal-length rows.
pub fn row_distance<T: Real>(a: &[T], b: &[T], mode: DistanceMode) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    match mode {
        DistanceMode::Euclidean => (s + T::c(DISTANCE_SMOOTHING)).sqrt(),
        DistanceMode::SquaredEuclidean => s,
    }
}

struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl ConvDims {
    fn new(xs: &[usize], ks: &[usize], oh: usize, ow: usize, geom: ConvGeom) -> Self {
        Self {
            n: xs[0],
            c: xs[1],
            h: xs[2],
            w: xs[3],
            k: ks[0],
            kh: ks[2],
            kw: ks[3],
            oh,
            ow,
            stride: geom.stride,
            pad: geom.pad,
        }
    }

    /// Output positions `o` along an axis for which `o·s + tap − pad` lands
    /// inside `[0, len)`.
    fn valid(&self, tap: usize, len: usize, out_len: usize) -> std::ops::Range<usize> {
        let s = self.stride;
        let lo = if tap >= self.pad { 0 } else { (self.pad - tap).div_ceil(s) };
        // largest o with o·s + tap − pad ≤ len − 1
        let hi = if len + self.pad > tap {
            ((len - 1 + self.pad - tap) / s + 1).min(out_len)
        } else {
            0
        };
        lo.min(hi)..hi
    }
}

fn conv_forward<T: Real>(d: &ConvDims, x: &[T], k: &[T], b: &[T], out: &mut [T]) {
    let (plane_in, plane_out) = (d.h * d.w, d.oh * d.ow);
    for n in 0..d.n {
        for ko in 0..d.k {
            let o = &mut out[(n * d.k + ko) * plane_out..(n * d.k + ko + 1) * plane_out];
            o.iter_mut().for_each(|v| *v = b[ko]);
            for c in 0..d.c {
                let xin = &x[(n * d.c + c) * plane_in..(n * d.c + c + 1) * plane_in];
                for ki in 0..d.kh {
                    let oy_range = d.valid(ki, d.h, d.oh);
                    for kj in 0..d.kw {
                        let wv = k[((ko * d.c + c) * d.kh + ki) * d.kw + kj];
                        let ox_range = d.valid(kj, d.w, d.ow);
                        for oy in oy_range.clone() {
                            let iy = oy * d.stride + ki - d.pad;
                            let orow = &mut o[oy * d.ow..(oy + 1) * d.ow];
                            let xrow = &xin[iy * d.w..(iy + 1) * d.w];
                            for ox in ox_range.clone() {
                                orow[ox] += wv * xrow[ox * d.stride + kj - d.pad];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_backward<T: Real>(
    d: &ConvDims,
    x: &[T],
    k: &[T],
    g: &[T],
    dx: &mut [T],
    dk: &mut [T],
    db: &mut [T],
) {
    let (plane_in, plane_out) = (d.h * d.w, d.oh * d.ow);
    for n in 0..d.n {
        for ko in 0..d.k {
            let go = &g[(n * d.k + ko) * plane_out..(n * d.k + ko + 1) * plane_out];
            db[ko] += go.iter().copied().sum::<T>();
            for c in 0..d.c {
                let base = (n * d.c + c) * plane_in;
                for ki in 0..d.kh {
                    let oy_range = d.valid(ki, d.h, d.oh);
                    for kj in 0..d.kw {
                        let widx = ((ko * d.c + c) * d.kh + ki) * d.kw + kj;
                        let wv = k[widx];
                        let ox_range = d.valid(kj, d.w, d.ow);
                        let mut acc = T::zero();
                        for oy in oy_range.clone() {
                            let iy = oy * d.stride + ki - d.pad;
                            let grow = &go[oy * d.ow..(oy + 1) * d.ow];
                            let row = base + iy * d.w;
                            for ox in ox_range.clone() {
                                let ix = row + ox * d.stride + kj - d.pad;
                                acc += grow[ox] * x[ix];
                                dx[ix] += wv * grow[ox];
                            }
                        }
                        dk[widx] += acc;
                    }
                }
            }
        }
    }
}
