//! Reverse-mode differentiation over dense tensors.
//!
//! Every primitive pushes one node holding its forward value and the indices of
//! its parents, so nodes are stored in topological order by construction.
//! `backward` walks the record once in reverse and accumulates adjoints into
//! the leaves that were registered with `requires_grad`.

use super::error::{NumError, NumResult};
use super::func;
use super::scalar::{logistic, Scalar};
use super::tensor::{matmul_into, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    /// Stop-gradient marker. The parent is kept for auditing only.
    Detach(#[allow(dead_code)] Var),
    Affine {
        w: Var,
        x: Var,
        b: Option<Var>,
    },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MulScalarVar {
        v: Var,
        s: Var,
    },
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln {
        a: Var,
        floor: T,
    },
    Square(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Slice {
        a: Var,
        start: usize,
    },
    Reshape(Var),
    Outer(Var, Var),
    TrilFromVec {
        a: Var,
        n: usize,
    },
    Softmax {
        a: Var,
        temperature: T,
    },
    LogSoftmax(Var),
    Kl {
        q: Var,
        p: Var,
        floor: T,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Detach(_) => "detach",
            Op::Affine { .. } => "affine",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::MulScalarVar { .. } => "mul_scalar_var",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Exp(_) => "exp",
            Op::Ln { .. } => "ln",
            Op::Square(_) => "square",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::Outer(..) => "outer",
            Op::TrilFromVec { .. } => "tril_from_vec",
            Op::Softmax { .. } => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::Kl { .. } => "kl_divergence",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    /// True when some ancestor (or the node itself) is a trainable leaf.
    tracked: bool,
}

/// Record of primitive operations plus accumulated leaf gradients.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    non_finite: Option<(usize, &'static str)>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            non_finite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool, tracked: bool) -> Var {
        let idx = self.nodes.len();
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some((idx, op.name()));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            tracked,
        });
        self.grads.push(None);
        Var(idx)
    }

    fn derived(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.push(value, op, false, tracked)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a trainable leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Gradient barrier: same value, no gradient flows to `a`'s ancestors.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.value(a).clone();
        self.push(value, Op::Detach(a), false, false)
    }

    /// `w · x + b` for a weight matrix `w` of shape `[out, in]` and vector `x`.
    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>) -> NumResult<Var> {
        let (o, i) = self.value(w).dims2()?;
        if self.value(x).len() != i {
            return Err(NumError::dim(
                "affine",
                format!(
                    "weight [{o}, {i}] with input of length {}",
                    self.value(x).len()
                ),
            ));
        }
        let mut out = match b {
            Some(b) => {
                if self.value(b).len() != o {
                    return Err(NumError::dim("affine", "bias length differs from output"));
                }
                self.data(b).to_vec()
            }
            None => vec![T::zero(); o],
        };
        {
            let wd = self.data(w);
            let xd = self.data(x);
            for (r, ov) in out.iter_mut().enumerate() {
                let row = &wd[r * i..(r + 1) * i];
                *ov += row.iter().zip(xd).map(|(&a, &b)| a * b).sum::<T>();
            }
        }
        let parents: Vec<Var> = [Some(w), Some(x), b].into_iter().flatten().collect();
        Ok(self.derived(Tensor::vector(out), Op::Affine { w, x, b }, &parents))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> NumResult<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.derived(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> NumResult<Var> {
        let out = self.value(a).transpose()?;
        Ok(self.derived(out, Op::Transpose(a), &[a]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> NumResult<()> {
        if self.shape(a) != self.shape(b) {
            return Err(NumError::dim(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> NumResult<Var> {
        self.same_shape(op.name(), a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.derived(out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> NumResult<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> NumResult<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> NumResult<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let out = self.value(a).map(f);
        self.derived(out, op, &[a])
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    /// Multiplies every entry of `v` by the single-element node `s`.
    pub fn mul_scalar_var(&mut self, v: Var, s: Var) -> NumResult<Var> {
        if self.value(s).len() != 1 {
            return Err(NumError::dim(
                "mul_scalar_var",
                "multiplier must hold one element",
            ));
        }
        let k = self.value(s).item();
        let out = self.value(v).map(|x| x * k);
        Ok(self.derived(out, Op::MulScalarVar { v, s }, &[v, s]))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), logistic)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    /// `ln(max(a, floor))`; entries at or below the floor get zero gradient.
    pub fn ln(&mut self, a: Var, floor: T) -> Var {
        self.unary(a, Op::Ln { a, floor }, |x| x.max(floor).ln())
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().copied().sum();
        self.derived(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::from_usize_lossy(self.value(a).len().max(1));
        let s = self.data(a).iter().copied().sum::<T>() / n;
        self.derived(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Concatenates vectors (any shape is flattened).
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::with_capacity(parts.iter().map(|p| self.value(*p).len()).sum());
        for p in parts {
            data.extend_from_slice(self.data(*p));
        }
        self.derived(Tensor::vector(data), Op::Concat(parts.to_vec()), parts)
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> NumResult<Var> {
        let n = self.value(a).len();
        if start + len > n {
            return Err(NumError::dim(
                "slice",
                format!("range {start}..{} exceeds length {n}", start + len),
            ));
        }
        let data = self.data(a)[start..start + len].to_vec();
        Ok(self.derived(Tensor::vector(data), Op::Slice { a, start }, &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> NumResult<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.derived(out, Op::Reshape(a), &[a]))
    }

    /// Outer product `a bᵀ` of two vectors, shape `[len a, len b]`.
    pub fn outer(&mut self, a: Var, b: Var) -> Var {
        let (ad, bd) = (self.data(a), self.data(b));
        let mut data = Vec::with_capacity(ad.len() * bd.len());
        for &x in ad {
            data.extend(bd.iter().map(|&y| x * y));
        }
        let out = Tensor::new(vec![ad.len(), bd.len()], data).expect("outer shape");
        self.derived(out, Op::Outer(a, b), &[a, b])
    }

    /// Scatters `n(n+1)/2` entries row by row into the lower triangle of an `n × n` matrix.
    pub fn tril_from_vec(&mut self, a: Var, n: usize) -> NumResult<Var> {
        if self.value(a).len() != n * (n + 1) / 2 {
            return Err(NumError::dim(
                "tril_from_vec",
                format!(
                    "{} entries cannot fill a {n}x{n} triangle",
                    self.value(a).len()
                ),
            ));
        }
        let mut out = Tensor::zeros(&[n, n]);
        let src = self.data(a);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                out.data_mut()[i * n + j] = src[k];
                k += 1;
            }
        }
        Ok(self.derived(out, Op::TrilFromVec { a, n }, &[a]))
    }

    pub fn softmax(&mut self, a: Var, temperature: T) -> NumResult<Var> {
        let out = func::softmax(self.data(a), temperature)?;
        Ok(self.derived(Tensor::vector(out), Op::Softmax { a, temperature }, &[a]))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let out = func::log_softmax(self.data(a));
        self.derived(Tensor::vector(out), Op::LogSoftmax(a), &[a])
    }

    /// `KL(q ‖ p)` with `p` floored before the log.
    pub fn kl_divergence(&mut self, q: Var, p: Var) -> NumResult<Var> {
        let floor = T::lit(func::PROB_FLOOR);
        let value = func::kl_divergence(self.data(q), self.data(p))?;
        Ok(self.derived(Tensor::scalar(value), Op::Kl { q, p, floor }, &[q, p]))
    }

    /// Reverse sweep from a single-element `loss`. Leaf gradients accumulate
    /// across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> NumResult<()> {
        if self.value(loss).len() != 1 {
            return Err(NumError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if let Some((node, op)) = self.non_finite {
            return Err(NumError::NonFinite { op, node });
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            if node.requires_grad {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(NumError::NonFinite {
                        op: "backward",
                        node: i,
                    });
                }
                match &mut self.grads[i] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(a, &b)| *a += b),
                    slot => *slot = Some(Tensor::new(node.value.shape().to_vec(), g.clone())?),
                }
            }
            self.propagate(i, &g, &mut adj);
        }
        Ok(())
    }

    fn accumulate(&self, adj: &mut [Option<Vec<T>>], v: Var, contrib: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].tracked {
            return;
        }
        let slot = adj[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]);
        contrib(slot);
    }

    fn propagate(&self, i: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf | Op::Detach(_) => {}
            Op::Affine { w, x, b } => {
                let (o, n_in) = (y.len(), self.value(*x).len());
                let xd = self.data(*x);
                let wd = self.data(*w);
                self.accumulate(adj, *w, |dw| {
                    for r in 0..o {
                        if g[r] == T::zero() {
                            continue;
                        }
                        for c in 0..n_in {
                            dw[r * n_in + c] += g[r] * xd[c];
                        }
                    }
                });
                self.accumulate(adj, *x, |dx| {
                    for r in 0..o {
                        for c in 0..n_in {
                            dx[c] += wd[r * n_in + c] * g[r];
                        }
                    }
                });
                if let Some(b) = b {
                    self.accumulate(adj, *b, |db| add_into(db, g));
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2().expect("matmul operand");
                let n = self.value(*b).dims2().expect("matmul operand").1;
                let (ad, bd) = (self.data(*a), self.data(*b));
                self.accumulate(adj, *a, |da| {
                    // dA = dY · Bᵀ
                    for r in 0..m {
                        for c in 0..k {
                            let mut s = T::zero();
                            for j in 0..n {
                                s += g[r * n + j] * bd[c * n + j];
                            }
                            da[r * k + c] += s;
                        }
                    }
                });
                self.accumulate(adj, *b, |db| {
                    // dB = Aᵀ · dY
                    let at = transpose_raw(ad, m, k);
                    let mut tmp = vec![T::zero(); k * n];
                    matmul_into(&at, g, &mut tmp, k, m, n);
                    add_into(db, &tmp);
                });
            }
            Op::Transpose(a) => {
                let (r, c) = node.value.dims2().expect("transpose output");
                self.accumulate(adj, *a, |da| add_into(da, &transpose_raw(g, r, c)));
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, |da| add_into(da, g));
                self.accumulate(adj, *b, |db| add_into(db, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, |da| add_into(da, g));
                self.accumulate(adj, *b, |db| {
                    db.iter_mut().zip(g).for_each(|(d, &v)| *d -= v)
                });
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                self.accumulate(adj, *a, |da| {
                    da.iter_mut()
                        .zip(g.iter().zip(bd))
                        .for_each(|(d, (&gv, &bv))| *d += gv * bv)
                });
                self.accumulate(adj, *b, |db| {
                    db.iter_mut()
                        .zip(g.iter().zip(ad))
                        .for_each(|(d, (&gv, &av))| *d += gv * av)
                });
            }
            Op::Scale(a, c) => {
                self.accumulate(adj, *a, |da| {
                    da.iter_mut().zip(g).for_each(|(d, &v)| *d += v * *c)
                });
            }
            Op::AddScalar(a) | Op::Reshape(a) => self.accumulate(adj, *a, |da| add_into(da, g)),
            Op::MulScalarVar { v, s } => {
                let k = self.value(*s).item();
                let vd = self.data(*v);
                self.accumulate(adj, *v, |dv| {
                    dv.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv * k)
                });
                self.accumulate(adj, *s, |ds| {
                    ds[0] += g.iter().zip(vd).map(|(&gv, &x)| gv * x).sum::<T>()
                });
            }
            Op::Tanh(a) => self.accumulate(adj, *a, |da| {
                for ((d, &gv), &yv) in da.iter_mut().zip(g).zip(y) {
                    *d += gv * (T::one() - yv * yv);
                }
            }),
            Op::Sigmoid(a) => self.accumulate(adj, *a, |da| {
                for ((d, &gv), &yv) in da.iter_mut().zip(g).zip(y) {
                    *d += gv * yv * (T::one() - yv);
                }
            }),
            Op::Exp(a) => self.accumulate(adj, *a, |da| {
                for ((d, &gv), &yv) in da.iter_mut().zip(g).zip(y) {
                    *d += gv * yv;
                }
            }),
            Op::Ln { a, floor } => {
                let ad = self.data(*a);
                self.accumulate(adj, *a, |da| {
                    for ((d, &gv), &x) in da.iter_mut().zip(g).zip(ad) {
                        if x > *floor {
                            *d += gv / x;
                        }
                    }
                })
            }
            Op::Square(a) => {
                let ad = self.data(*a);
                let two = T::lit(2.0);
                self.accumulate(adj, *a, |da| {
                    for ((d, &gv), &x) in da.iter_mut().zip(g).zip(ad) {
                        *d += two * x * gv;
                    }
                })
            }
            Op::Sum(a) => self.accumulate(adj, *a, |da| da.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => {
                let n = T::from_usize_lossy(self.value(*a).len().max(1));
                self.accumulate(adj, *a, |da| da.iter_mut().for_each(|d| *d += g[0] / n))
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    self.accumulate(adj, *p, |dp| add_into(dp, &g[off..off + n]));
                    off += n;
                }
            }
            Op::Slice { a, start } => {
                self.accumulate(adj, *a, |da| add_into(&mut da[*start..*start + g.len()], g))
            }
            Op::Outer(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                let m = bd.len();
                self.accumulate(adj, *a, |da| {
                    for (i, d) in da.iter_mut().enumerate() {
                        *d += g[i * m..(i + 1) * m]
                            .iter()
                            .zip(bd)
                            .map(|(&gv, &bv)| gv * bv)
                            .sum::<T>();
                    }
                });
                self.accumulate(adj, *b, |db| {
                    for (i, &av) in ad.iter().enumerate() {
                        for (d, &gv) in db.iter_mut().zip(&g[i * m..(i + 1) * m]) {
                            *d += gv * av;
                        }
                    }
                });
            }
            Op::TrilFromVec { a, n } => self.accumulate(adj, *a, |da| {
                let mut k = 0;
                for i in 0..*n {
                    for j in 0..=i {
                        da[k] += g[i * n + j];
                        k += 1;
                    }
                }
            }),
            Op::Softmax { a, temperature } => {
                let dot: T = g.iter().zip(y).map(|(&gv, &yv)| gv * yv).sum();
                self.accumulate(adj, *a, |da| {
                    for ((d, &gv), &yv) in da.iter_mut().zip(g).zip(y) {
                        *d += yv * (gv - dot) / *temperature;
                    }
                })
            }
            Op::LogSoftmax(a) => {
                let total: T = g.iter().copied().sum();
                self.accumulate(adj, *a, |da| {
                    for ((d, &gv), &yv) in da.iter_mut().zip(g).zip(y) {
                        *d += gv - yv.exp() * total;
                    }
                })
            }
            Op::Kl { q, p, floor } => {
                let (qd, pd) = (self.data(*q), self.data(*p));
                self.accumulate(adj, *q, |dq| {
                    for ((d, &qv), &pv) in dq.iter_mut().zip(qd).zip(pd) {
                        if qv > T::zero() {
                            *d += g[0] * (qv.ln() - pv.max(*floor).ln() + T::one());
                        }
                    }
                });
                self.accumulate(adj, *p, |dp| {
                    for ((d, &qv), &pv) in dp.iter_mut().zip(qd).zip(pd) {
                        if pv > *floor {
                            *d -= g[0] * qv / pv;
                        }
                    }
                });
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

fn transpose_raw<T: Scalar>(a: &[T], r: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let s = t.sum(x);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[1.0; 6]);
        assert_eq!(t.grad(x).unwrap().shape(), &[2, 3]);
    }

    #[test]
    fn square_of_three_has_slope_six() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::scalar(3.0));
        let y = t.square(x);
        t.backward(y).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 12.0);
        t.zero_grad();
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(NumError::Contract(_))));
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::scalar(2.0));
        let d = t.detach(x);
        let y = t.mul(d, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 2.0);
    }

    #[test]
    fn non_finite_forward_is_a_hard_error() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::scalar(1000.0));
        let e = t.exp(x);
        let y = t.sum(e);
        assert!(matches!(t.backward(y), Err(NumError::NonFinite { .. })));
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut t = Tape::<f64>::new();
        let a = t.param(Tensor::zeros(&[2, 3]));
        let b = t.param(Tensor::zeros(&[2, 3]));
        assert!(matches!(t.matmul(a, b), Err(NumError::Dimension { .. })));
        let c = t.param(Tensor::zeros(&[3]));
        assert!(matches!(t.add(a, c), Err(NumError::Dimension { .. })));
    }
}
