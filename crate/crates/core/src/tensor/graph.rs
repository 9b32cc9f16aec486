use std::rc::Rc;

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Boolean keep-mask for [`Graph::masked_softmax`]. `true` keeps an entry.
///
/// A mask either matches the logits exactly or is a single row broadcast
/// over every logit row.
#[derive(Clone, Debug)]
pub struct Mask {
    rows: usize,
    cols: usize,
    keep: Rc<[bool]>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, keep: Vec<bool>) -> Self {
        assert_eq!(rows * cols, keep.len(), "mask size");
        Mask {
            rows,
            cols,
            keep: keep.into(),
        }
    }

    pub fn row(keep: Vec<bool>) -> Self {
        let cols = keep.len();
        Mask::new(1, cols, keep)
    }

    pub fn keeps(&self, row: usize, col: usize) -> bool {
        let r = if self.rows == 1 { 0 } else { row };
        self.keep[r * self.cols + col]
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    MaskedSoftmax(Var),
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    Sum(Var),
    Dropout {
        x: Var,
        scale: Vec<f64>,
    },
    SmoothedCe {
        probs: Var,
        gold: Vec<usize>,
        eps: f64,
    },
    BinaryNll {
        p: Var,
        label: f64,
    },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// A computation tape. Values live in an arena and are addressed by [`Var`].
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn check(cond: bool, msg: impl FnOnce() -> String) {
    if !cond {
        panic!("{}", msg());
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert!(t.is_scalar(), "not a scalar: {:?}", t.shape());
        t.data()[0]
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Drops every node recorded after the first `len`. Vars pointing past
    /// the cut become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.dims2(a);
        let (k2, m) = self.dims2(b);
        check(k == k2, || format!("matmul inner dims {k} vs {k2}"));
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let av = ad[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &bd[p * m..(p + 1) * m];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::matrix(n, m, out), rg, Op::MatMul(a, b))
    }

    /// `a · bᵀ` without materialising the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.dims2(a);
        let (m, k2) = self.dims2(b);
        check(k == k2, || format!("matmul_nt inner dims {k} vs {k2}"));
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = &ad[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &bd[j * k..(j + 1) * k];
                out[i * m + j] = dot(arow, brow);
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::matrix(n, m, out), rg, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        check(ta.shape() == tb.shape(), || {
            format!("add shapes {:?} vs {:?}", ta.shape(), tb.shape())
        });
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor { shape, data }, rg, Op::Add(a, b))
    }

    /// Adds a row vector to every row of `a` (broadcast-add).
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (n, m) = self.dims2(a);
        check(self.value(row).len() == m, || {
            format!("add_row width {} vs {m}", self.value(row).len())
        });
        let rd = self.value(row).data();
        let mut data = self.value(a).data().to_vec();
        for i in 0..n {
            for (o, r) in data[i * m..(i + 1) * m].iter_mut().zip(rd) {
                *o += r;
            }
        }
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(a) || self.rg(row);
        self.push(Tensor { shape, data }, rg, Op::AddRow(a, row))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        check(ta.shape() == tb.shape(), || {
            format!("mul shapes {:?} vs {:?}", ta.shape(), tb.shape())
        });
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor { shape, data }, rg, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x * c).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor { shape, data }, rg, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| x.max(0.0)).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor { shape, data }, rg, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| sigmoid(x)).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor { shape, data }, rg, Op::Sigmoid(a))
    }

    /// Normalises each row to zero mean and unit variance, then applies the
    /// affine `gamma`/`beta` row vectors.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let (n, m) = self.dims2(x);
        check(self.value(gamma).len() == m && self.value(beta).len() == m, || {
            "layer_norm affine width".to_string()
        });
        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![0.0; n * m];
        let mut rstd = vec![0.0; n];
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &xd[i * m..(i + 1) * m];
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let r = 1.0 / (var + eps).sqrt();
            rstd[i] = r;
            for j in 0..m {
                let h = (row[j] - mean) * r;
                xhat[i * m + j] = h;
                out[i * m + j] = h * gd[j] + bd[j];
            }
        }
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            Tensor { shape, data: out },
            rg,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        )
    }

    /// Gathers rows of `table`; the backward pass scatter-adds into them.
    pub fn embedding(&mut self, table: Var, ids: &[usize], name: &'static str) -> Result<Var> {
        let (rows, d) = self.dims2(table);
        let td = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::IdOutOfRange {
                    table: name,
                    id,
                    size: rows,
                });
            }
            out.extend_from_slice(&td[id * d..(id + 1) * d]);
        }
        if ids.is_empty() {
            return Err(Error::Shape(format!("empty id list for {name}")));
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::matrix(ids.len(), d, out),
            rg,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Row-wise softmax where masked entries are treated as −∞ and come out
    /// as exact zeros.
    pub fn masked_softmax(&mut self, logits: Var, mask: Option<&Mask>) -> Result<Var> {
        let (n, m) = self.dims2(logits);
        if let Some(mk) = mask {
            check(mk.cols == m && (mk.rows == 1 || mk.rows == n), || {
                format!("mask {}x{} vs logits {n}x{m}", mk.rows, mk.cols)
            });
        }
        let xd = self.value(logits).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &xd[i * m..(i + 1) * m];
            let keep = |j: usize| mask.map_or(true, |mk| mk.keeps(i, j));
            let mut max = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if keep(j) && v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(Error::FullyMaskedRow { row: i });
            }
            let orow = &mut out[i * m..(i + 1) * m];
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if keep(j) {
                    let e = (v - max).exp();
                    orow[j] = e;
                    z += e;
                }
            }
            for o in orow.iter_mut() {
                *o /= z;
            }
        }
        let shape = self.value(logits).shape().to_vec();
        let rg = self.rg(logits);
        Ok(self.push(Tensor { shape, data: out }, rg, Op::MaskedSoftmax(logits)))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.dims2(x);
        check(len > 0 && start + len <= n, || {
            format!("slice_rows {start}+{len} of {n}")
        });
        let data = self.value(x).data()[start * m..(start + len) * m].to_vec();
        let rg = self.rg(x);
        self.push(Tensor::matrix(len, m, data), rg, Op::SliceRows { x, start })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.dims2(x);
        check(len > 0 && start + len <= m, || {
            format!("slice_cols {start}+{len} of {m}")
        });
        let xd = self.value(x).data();
        let mut data = Vec::with_capacity(n * len);
        for i in 0..n {
            data.extend_from_slice(&xd[i * m + start..i * m + start + len]);
        }
        let rg = self.rg(x);
        self.push(Tensor::matrix(n, len, data), rg, Op::SliceCols { x, start })
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        check(!parts.is_empty(), || "concat of nothing".into());
        let n = self.dims2(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.dims2(p);
                check(r == n, || format!("concat_cols rows {r} vs {n}"));
                c
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::matrix(n, total, data), rg, Op::ConcatCols(parts.to_vec()))
    }

    /// Stacks matrices with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        check(!parts.is_empty(), || "concat of nothing".into());
        let m = self.dims2(parts[0]).1;
        let mut data = Vec::new();
        let mut n = 0;
        for &p in parts {
            let (r, c) = self.dims2(p);
            check(c == m, || format!("concat_rows cols {c} vs {m}"));
            data.extend_from_slice(self.value(p).data());
            n += r;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::matrix(n, m, data), rg, Op::ConcatRows(parts.to_vec()))
    }

    /// Mean over the row axis, giving a `1 × cols` result.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let (n, m) = self.dims2(x);
        let xd = self.value(x).data();
        let mut out = vec![0.0; m];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(&xd[i * m..(i + 1) * m]) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= n as f64;
        }
        let rg = self.rg(x);
        self.push(Tensor::row(out), rg, Op::MeanRows(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), rg, Op::Sum(x))
    }

    /// Inverted dropout. With `rng = None` (evaluation) or `p == 0` this is
    /// the identity and records nothing.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: Option<&mut R>) -> Var {
        let Some(rng) = rng else { return x };
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let t = self.value(x);
        let scale: Vec<f64> = (0..t.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = t.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(x);
        self.push(Tensor { shape, data }, rg, Op::Dropout { x, scale })
    }

    /// Sum over rows of the label-smoothed negative log-likelihood
    /// `−Σ_k q_k log p_k`, `q_k = eps/V + (1−eps)·[k = gold]`.
    ///
    /// Probabilities below [`PROB_FLOOR`] are clamped inside the logarithm.
    pub fn smoothed_cross_entropy(&mut self, probs: Var, gold: &[usize], eps: f64) -> Var {
        let (n, v) = self.dims2(probs);
        check(gold.len() == n, || format!("{} gold ids for {n} rows", gold.len()));
        check((0.0..1.0).contains(&eps), || format!("smoothing {eps} not in [0,1)"));
        let pd = self.value(probs).data();
        let uniform = eps / v as f64;
        let mut loss = 0.0;
        for (i, &g) in gold.iter().enumerate() {
            check(g < v, || format!("gold id {g} >= vocab {v}"));
            let row = &pd[i * v..(i + 1) * v];
            for (k, &p) in row.iter().enumerate() {
                let q = uniform + if k == g { 1.0 - eps } else { 0.0 };
                if q != 0.0 {
                    loss -= q * p.max(PROB_FLOOR).ln();
                }
            }
        }
        let rg = self.rg(probs);
        self.push(
            Tensor::scalar(loss),
            rg,
            Op::SmoothedCe {
                probs,
                gold: gold.to_vec(),
                eps,
            },
        )
    }

    /// Negative log-likelihood of a binary label given `p = P(label = 1)`.
    pub fn binary_nll(&mut self, p: Var, label: bool) -> Var {
        let pv = self.scalar(p);
        let l = if label { 1.0 } else { 0.0 };
        let loss = -(l * pv.max(PROB_FLOOR).ln() + (1.0 - l) * (1.0 - pv).max(PROB_FLOOR).ln());
        let rg = self.rg(p);
        self.push(Tensor::scalar(loss), rg, Op::BinaryNll { p, label: l })
    }

    /// Accumulates `∂root/∂leaf` into every trainable leaf reachable from
    /// `root`. Calling it again without [`Graph::zero_grad`] adds to the
    /// stored gradients.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rt = self.value(root);
        if !rt.is_scalar() {
            return Err(Error::NonScalarRoot(rt.shape().to_vec()));
        }
        if !rt.data()[0].is_finite() {
            return Err(Error::NonFiniteRoot(rt.data()[0]));
        }
        let mut gbuf: Vec<Option<Vec<f64>>> = (0..=root.0).map(|_| None).collect();
        gbuf[root.0] = Some(vec![1.0]);
        for id in (0..=root.0).rev() {
            let Some(g) = gbuf[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut gbuf);
            if matches!(self.nodes[id].op, Op::Leaf) {
                let node = &mut self.nodes[id];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], gbuf: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        macro_rules! with_grad {
            ($v:expr, |$b:ident| $body:block) => {
                if let Some($b) = self.grad_slot(id, $v, gbuf) {
                    $body
                }
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.dims2(*a);
                let m = self.dims2(*b).1;
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                with_grad!(*a, |da| {
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            da[i * k + p] += dot(grow, &bd[p * m..(p + 1) * m]);
                        }
                    }
                });
                with_grad!(*b, |db| {
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let av = ad[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (d, gv) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *d += av * gv;
                            }
                        }
                    }
                });
            }
            Op::MatMulNT(a, b) => {
                let (n, k) = self.dims2(*a);
                let m = self.dims2(*b).0;
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                with_grad!(*a, |da| {
                    for i in 0..n {
                        let drow = &mut da[i * k..(i + 1) * k];
                        for j in 0..m {
                            let gv = g[i * m + j];
                            if gv == 0.0 {
                                continue;
                            }
                            for (d, bv) in drow.iter_mut().zip(&bd[j * k..(j + 1) * k]) {
                                *d += gv * bv;
                            }
                        }
                    }
                });
                with_grad!(*b, |db| {
                    for i in 0..n {
                        let arow = &ad[i * k..(i + 1) * k];
                        for j in 0..m {
                            let gv = g[i * m + j];
                            if gv == 0.0 {
                                continue;
                            }
                            for (d, av) in db[j * k..(j + 1) * k].iter_mut().zip(arow) {
                                *d += gv * av;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                with_grad!(*a, |da| { axpy(da, g, 1.0) });
                with_grad!(*b, |db| { axpy(db, g, 1.0) });
            }
            Op::AddRow(a, row) => {
                with_grad!(*a, |da| { axpy(da, g, 1.0) });
                with_grad!(*row, |dr| {
                    let m = dr.len();
                    for chunk in g.chunks(m) {
                        axpy(dr, chunk, 1.0);
                    }
                });
            }
            Op::Mul(a, b) => {
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                with_grad!(*a, |da| {
                    for ((d, gv), bv) in da.iter_mut().zip(g).zip(bd) {
                        *d += gv * bv;
                    }
                });
                with_grad!(*b, |db| {
                    for ((d, gv), av) in db.iter_mut().zip(g).zip(ad) {
                        *d += gv * av;
                    }
                });
            }
            Op::Scale(a, c) => {
                with_grad!(*a, |da| { axpy(da, g, *c) });
            }
            Op::Relu(a) => {
                let xd = self.value(*a).data();
                with_grad!(*a, |da| {
                    for ((d, gv), x) in da.iter_mut().zip(g).zip(xd) {
                        if *x > 0.0 {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let yd = node.value.data();
                with_grad!(*a, |da| {
                    for ((d, gv), y) in da.iter_mut().zip(g).zip(yd) {
                        *d += gv * y * (1.0 - y);
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (n, m) = self.dims2(*x);
                let gd = self.value(*gamma).data();
                with_grad!(*gamma, |dg| {
                    for i in 0..n {
                        for j in 0..m {
                            dg[j] += g[i * m + j] * xhat[i * m + j];
                        }
                    }
                });
                with_grad!(*beta, |db| {
                    for chunk in g.chunks(m) {
                        axpy(db, chunk, 1.0);
                    }
                });
                with_grad!(*x, |dx| {
                    let mf = m as f64;
                    for i in 0..n {
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..m {
                            let dh = g[i * m + j] * gd[j];
                            mean_dh += dh;
                            mean_dh_h += dh * xhat[i * m + j];
                        }
                        mean_dh /= mf;
                        mean_dh_h /= mf;
                        for j in 0..m {
                            let dh = g[i * m + j] * gd[j];
                            dx[i * m + j] +=
                                rstd[i] * (dh - mean_dh - xhat[i * m + j] * mean_dh_h);
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let d = self.dims2(*table).1;
                with_grad!(*table, |dt| {
                    for (i, &id) in ids.iter().enumerate() {
                        axpy(&mut dt[id * d..(id + 1) * d], &g[i * d..(i + 1) * d], 1.0);
                    }
                });
            }
            Op::MaskedSoftmax(x) => {
                let (n, m) = self.dims2(*x);
                let yd = node.value.data();
                with_grad!(*x, |dx| {
                    for i in 0..n {
                        let y = &yd[i * m..(i + 1) * m];
                        let gr = &g[i * m..(i + 1) * m];
                        let s = dot(y, gr);
                        for j in 0..m {
                            dx[i * m + j] += y[j] * (gr[j] - s);
                        }
                    }
                });
            }
            Op::SliceRows { x, start } => {
                let m = self.dims2(*x).1;
                with_grad!(*x, |dx| {
                    axpy(&mut dx[start * m..start * m + g.len()], g, 1.0);
                });
            }
            Op::SliceCols { x, start } => {
                let (n, m) = self.dims2(*x);
                let len = g.len() / n;
                with_grad!(*x, |dx| {
                    for i in 0..n {
                        axpy(
                            &mut dx[i * m + start..i * m + start + len],
                            &g[i * len..(i + 1) * len],
                            1.0,
                        );
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let n = node.value.rows();
                let total = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let w = self.dims2(p).1;
                    with_grad!(p, |dp| {
                        for i in 0..n {
                            axpy(
                                &mut dp[i * w..(i + 1) * w],
                                &g[i * total + off..i * total + off + w],
                                1.0,
                            );
                        }
                    });
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    with_grad!(p, |dp| { axpy(dp, &g[off..off + len], 1.0) });
                    off += len;
                }
            }
            Op::MeanRows(x) => {
                let (n, m) = self.dims2(*x);
                with_grad!(*x, |dx| {
                    let inv = 1.0 / n as f64;
                    for i in 0..n {
                        axpy(&mut dx[i * m..(i + 1) * m], g, inv);
                    }
                });
            }
            Op::Sum(x) => {
                with_grad!(*x, |dx| {
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                });
            }
            Op::Dropout { x, scale } => {
                with_grad!(*x, |dx| {
                    for ((d, gv), s) in dx.iter_mut().zip(g).zip(scale) {
                        *d += gv * s;
                    }
                });
            }
            Op::SmoothedCe { probs, gold, eps } => {
                let (_, v) = self.dims2(*probs);
                let pd = self.value(*probs).data();
                let uniform = eps / v as f64;
                with_grad!(*probs, |dp| {
                    for (i, &gi) in gold.iter().enumerate() {
                        for k in 0..v {
                            let q = uniform + if k == gi { 1.0 - eps } else { 0.0 };
                            let p = pd[i * v + k];
                            if q != 0.0 && p > PROB_FLOOR {
                                dp[i * v + k] -= g[0] * q / p;
                            }
                        }
                    }
                });
            }
            Op::BinaryNll { p, label } => {
                let pv = self.scalar(*p);
                with_grad!(*p, |dp| {
                    let mut d = 0.0;
                    if pv > PROB_FLOOR {
                        d -= label / pv;
                    }
                    if 1.0 - pv > PROB_FLOOR {
                        d += (1.0 - label) / (1.0 - pv);
                    }
                    dp[0] += g[0] * d;
                });
            }
        }
    }
}

impl Graph {
    // Inputs always precede their consumer on the tape.
    fn grad_slot<'a>(
        &self,
        id: usize,
        v: Var,
        gbuf: &'a mut [Option<Vec<f64>>],
    ) -> Option<&'a mut Vec<f64>> {
        assert!(v.0 < id, "tape order violated: node {id} reads {}", v.0);
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(gbuf[v.0].get_or_insert_with(|| vec![0.0; len]))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
