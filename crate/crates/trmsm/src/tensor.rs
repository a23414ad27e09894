//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Every operation the model needs is implemented here with an explicit
//! backward rule. Graphs are built dynamically: each op node keeps its
//! parent tensors alive through `Rc` and stores a closure that scatters
//! the upstream gradient into the parents. `backward()` on a scalar runs
//! a topological sweep over the graph.

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::masks::Mask;

type BackFn = Box<dyn Fn(&[f64], &[Tensor])>;

struct Inner {
    data: Vec<f64>,
    shape: Vec<usize>,
    grad: Option<Vec<f64>>,
    tracked: bool,
    parents: Vec<Tensor>,
    backward: Option<BackFn>,
}

/// A dense row-major tensor, optionally tracked by the autodiff graph.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("data", &inner.data)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    /// Untracked leaf (constant input).
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Tensor {
        assert_eq!(data.len(), numel(shape), "data length must match shape");
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                data,
                shape: shape.to_vec(),
                grad: None,
                tracked: false,
                parents: Vec::new(),
                backward: None,
            })),
        }
    }

    /// Tracked leaf with a zeroed gradient buffer (a trainable parameter).
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Tensor {
        assert_eq!(data.len(), numel(shape), "data length must match shape");
        let n = data.len();
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                data,
                shape: shape.to_vec(),
                grad: Some(vec![0.0; n]),
                tracked: true,
                parents: Vec::new(),
                backward: None,
            })),
        }
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_vec(vec![0.0; numel(shape)], shape)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(vec![v], &[1])
    }

    fn node(data: Vec<f64>, shape: Vec<usize>, parents: Vec<Tensor>, back: BackFn) -> Tensor {
        let tracked = parents.iter().any(|p| p.inner.borrow().tracked);
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                data,
                shape,
                grad: None,
                tracked,
                parents: if tracked { parents } else { Vec::new() },
                backward: if tracked { Some(back) } else { None },
            })),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_tracked(&self) -> bool {
        self.inner.borrow().tracked
    }

    /// Snapshot of the forward values.
    pub fn data(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        assert_eq!(inner.data.len(), 1, "item() requires a scalar tensor");
        inner.data[0]
    }

    /// Snapshot of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        let mut inner = self.inner.borrow_mut();
        if let Some(g) = inner.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Overwrite the gradient buffer (clipping, tests).
    pub fn set_grad(&self, grad: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.data.len(), grad.len());
        inner.grad = Some(grad.to_vec());
    }

    /// Overwrite the stored values in place (optimizer updates).
    pub fn set_data(&self, data: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.data.len(), data.len());
        inner.data.copy_from_slice(data);
    }

    fn accum(&self, delta: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        if !inner.tracked {
            return;
        }
        let n = inner.data.len();
        let g = inner.grad.get_or_insert_with(|| vec![0.0; n]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// Reverse sweep from a scalar. Accumulates gradients into every
    /// tracked leaf reachable from `self`.
    pub fn backward(&self) {
        {
            let mut inner = self.inner.borrow_mut();
            assert_eq!(inner.data.len(), 1, "backward() requires a scalar loss");
            assert!(inner.tracked, "backward() on an untracked tensor");
            inner.grad = Some(vec![1.0]);
        }
        let order = self.topo_order();
        for node in order.iter().rev() {
            let inner = node.inner.borrow();
            if let (Some(back), Some(grad)) = (&inner.backward, &inner.grad) {
                back(grad, &inner.parents);
            }
        }
    }

    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited: HashSet<*const RefCell<Inner>> = HashSet::new();
        // iterative post-order DFS
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        while let Some((node, child)) = stack.pop() {
            let ptr = Rc::as_ptr(&node.inner);
            if child == 0 {
                if visited.contains(&ptr) {
                    continue;
                }
            }
            let parents: Vec<Tensor> = node.inner.borrow().parents.clone();
            if child < parents.len() {
                let next = parents[child].clone();
                stack.push((node, child + 1));
                if next.inner.borrow().tracked && !visited.contains(&Rc::as_ptr(&next.inner)) {
                    stack.push((next, 0));
                }
            } else {
                visited.insert(ptr);
                order.push(node);
            }
        }
        order
    }
}

fn check2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    let s = t.shape();
    if s.len() != 2 {
        return Err(Error::ShapeMismatch {
            op,
            lhs: s,
            rhs: vec![],
        });
    }
    Ok((s[0], s[1]))
}

impl Tensor {
    /// Matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = check2(self, "matmul")?;
        let (k2, n) = check2(rhs, "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let a = self.data();
        let b = rhs.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
        let (ac, bc) = (a, b);
        Ok(Tensor::node(
            out,
            vec![m, n],
            vec![self.clone(), rhs.clone()],
            Box::new(move |gout, parents| {
                // dA = dC . B^T
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let g = gout[i * n + j];
                        if g == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += g * bc[p * n + j];
                        }
                    }
                }
                parents[0].accum(&da);
                // dB = A^T . dC
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = ac[i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += av * gout[i * n + j];
                        }
                    }
                }
                parents[1].accum(&db);
            }),
        ))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = check2(self, "transpose")?;
        let a = self.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = a[i * n + j];
            }
        }
        Ok(Tensor::node(
            out,
            vec![n, m],
            vec![self.clone()],
            Box::new(move |gout, parents| {
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = gout[j * m + i];
                    }
                }
                parents[0].accum(&da);
            }),
        ))
    }

    /// Elementwise sum of two same-shaped tensors.
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape() != rhs.shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let a = self.data();
        let b = rhs.data();
        let out: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        Ok(Tensor::node(
            out,
            self.shape(),
            vec![self.clone(), rhs.clone()],
            Box::new(move |gout, parents| {
                parents[0].accum(gout);
                parents[1].accum(gout);
            }),
        ))
    }

    /// `[n,d] + [d]` broadcast over rows (bias add).
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        let (n, d) = check2(self, "add_row")?;
        let bs = bias.shape();
        if bs != vec![d] && bs != vec![1, d] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(),
                rhs: bs,
            });
        }
        let a = self.data();
        let b = bias.data();
        let mut out = a.clone();
        for i in 0..n {
            for j in 0..d {
                out[i * d + j] += b[j];
            }
        }
        Ok(Tensor::node(
            out,
            vec![n, d],
            vec![self.clone(), bias.clone()],
            Box::new(move |gout, parents| {
                parents[0].accum(gout);
                let mut db = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        db[j] += gout[i * d + j];
                    }
                }
                parents[1].accum(&db);
            }),
        ))
    }

    pub fn scale(&self, s: f64) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|x| x * s).collect();
        Tensor::node(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(move |gout, parents| {
                let da: Vec<f64> = gout.iter().map(|g| g * s).collect();
                parents[0].accum(&da);
            }),
        )
    }

    pub fn relu(&self) -> Tensor {
        let a = self.data();
        let out: Vec<f64> = a.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        Tensor::node(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(move |gout, parents| {
                let da: Vec<f64> = gout
                    .iter()
                    .zip(&a)
                    .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                parents[0].accum(&da);
            }),
        )
    }

    /// Row-wise softmax with a boolean validity mask. Invalid positions get
    /// weight exactly 0. A row with no valid position yields the all-zero row.
    pub fn masked_softmax(&self, mask: &Mask) -> Result<Tensor> {
        let (n, m) = check2(self, "masked_softmax")?;
        if mask.rows() != n || mask.cols() != m {
            return Err(Error::ShapeMismatch {
                op: "masked_softmax",
                lhs: self.shape(),
                rhs: vec![mask.rows(), mask.cols()],
            });
        }
        let a = self.data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let mut max = f64::NEG_INFINITY;
            for j in 0..m {
                if mask.get(i, j) {
                    max = max.max(a[i * m + j]);
                }
            }
            if max == f64::NEG_INFINITY {
                continue; // fully masked row stays zero
            }
            let mut sum = 0.0;
            for j in 0..m {
                if mask.get(i, j) {
                    let e = (a[i * m + j] - max).exp();
                    out[i * m + j] = e;
                    sum += e;
                }
            }
            for j in 0..m {
                out[i * m + j] /= sum;
            }
        }
        let y = out.clone();
        Ok(Tensor::node(
            out,
            vec![n, m],
            vec![self.clone()],
            Box::new(move |gout, parents| {
                // ds = y * (dy - sum(y * dy)); masked entries have y == 0
                let mut da = vec![0.0; n * m];
                for i in 0..n {
                    let mut dot = 0.0;
                    for j in 0..m {
                        dot += y[i * m + j] * gout[i * m + j];
                    }
                    for j in 0..m {
                        da[i * m + j] = y[i * m + j] * (gout[i * m + j] - dot);
                    }
                }
                parents[0].accum(&da);
            }),
        ))
    }

    /// Row-wise softmax over every position.
    pub fn softmax_rows(&self) -> Result<Tensor> {
        let (n, m) = check2(self, "softmax_rows")?;
        self.masked_softmax(&Mask::all_true(n, m))
    }

    /// Per-row standardization with epsilon 1e-5, then a learned affine.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
        const EPS: f64 = 1e-5;
        let (n, d) = check2(self, "layer_norm")?;
        if gain.shape() != vec![d] || bias.shape() != vec![d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape(),
                rhs: gain.shape(),
            });
        }
        let x = self.data();
        let g = gain.data();
        let b = bias.data();
        let mut out = vec![0.0; n * d];
        let mut xhat = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std[i] = istd;
            for j in 0..d {
                let h = (row[j] - mean) * istd;
                xhat[i * d + j] = h;
                out[i * d + j] = h * g[j] + b[j];
            }
        }
        let gc = g.clone();
        Ok(Tensor::node(
            out,
            vec![n, d],
            vec![self.clone(), gain.clone(), bias.clone()],
            Box::new(move |gout, parents| {
                let mut dx = vec![0.0; n * d];
                let mut dg = vec![0.0; d];
                let mut db = vec![0.0; d];
                for i in 0..n {
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..d {
                        let dy = gout[i * d + j];
                        let h = xhat[i * d + j];
                        dg[j] += dy * h;
                        db[j] += dy;
                        let dh = dy * gc[j];
                        mean_dh += dh;
                        mean_dh_h += dh * h;
                    }
                    mean_dh /= d as f64;
                    mean_dh_h /= d as f64;
                    for j in 0..d {
                        let dh = gout[i * d + j] * gc[j];
                        let h = xhat[i * d + j];
                        dx[i * d + j] = inv_std[i] * (dh - mean_dh - h * mean_dh_h);
                    }
                }
                parents[0].accum(&dx);
                parents[1].accum(&dg);
                parents[2].accum(&db);
            }),
        ))
    }

    /// Column-wise max over rows: `[n,d] -> [1,d]`. Ties go to the first row.
    pub fn max_pool_rows(&self) -> Result<Tensor> {
        let (n, d) = check2(self, "max_pool_rows")?;
        let a = self.data();
        let mut out = vec![f64::NEG_INFINITY; d];
        let mut argmax = vec![0usize; d];
        for j in 0..d {
            for i in 0..n {
                if a[i * d + j] > out[j] {
                    out[j] = a[i * d + j];
                    argmax[j] = i;
                }
            }
        }
        Ok(Tensor::node(
            out,
            vec![1, d],
            vec![self.clone()],
            Box::new(move |gout, parents| {
                let mut da = vec![0.0; n * d];
                for j in 0..d {
                    da[argmax[j] * d + j] = gout[j];
                }
                parents[0].accum(&da);
            }),
        ))
    }

    /// Inverted-scaling dropout: identity when `train` is false or `p == 0`.
    pub fn dropout<R: Rng>(&self, p: f64, train: bool, rng: &mut R) -> Tensor {
        if !train || p == 0.0 {
            return self.clone();
        }
        let keep = 1.0 - p;
        let a = self.data();
        let mask: Vec<f64> = a
            .iter()
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let out: Vec<f64> = a.iter().zip(&mask).map(|(x, m)| x * m).collect();
        Tensor::node(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(move |gout, parents| {
                let da: Vec<f64> = gout.iter().zip(&mask).map(|(g, m)| g * m).collect();
                parents[0].accum(&da);
            }),
        )
    }

    /// Columns `[start, start+len)` of a matrix.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor> {
        let (n, d) = check2(self, "slice_cols")?;
        if start + len > d {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: self.shape(),
                rhs: vec![start, len],
            });
        }
        let a = self.data();
        let mut out = vec![0.0; n * len];
        for i in 0..n {
            out[i * len..(i + 1) * len].copy_from_slice(&a[i * d + start..i * d + start + len]);
        }
        Ok(Tensor::node(
            out,
            vec![n, len],
            vec![self.clone()],
            Box::new(move |gout, parents| {
                let mut da = vec![0.0; n * d];
                for i in 0..n {
                    da[i * d + start..i * d + start + len]
                        .copy_from_slice(&gout[i * len..(i + 1) * len]);
                }
                parents[0].accum(&da);
            }),
        ))
    }

    /// Scale row `i` by `w[i]`: `[n,d] * [n,1]`.
    pub fn mul_col(&self, w: &Tensor) -> Result<Tensor> {
        let (n, d) = check2(self, "mul_col")?;
        let ws = w.shape();
        if ws != vec![n, 1] {
            return Err(Error::ShapeMismatch {
                op: "mul_col",
                lhs: self.shape(),
                rhs: ws,
            });
        }
        let a = self.data();
        let wv = w.data();
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                out[i * d + j] = a[i * d + j] * wv[i];
            }
        }
        Ok(Tensor::node(
            out,
            vec![n, d],
            vec![self.clone(), w.clone()],
            Box::new(move |gout, parents| {
                let mut da = vec![0.0; n * d];
                let mut dw = vec![0.0; n];
                for i in 0..n {
                    for j in 0..d {
                        da[i * d + j] = gout[i * d + j] * wv[i];
                        dw[i] += gout[i * d + j] * a[i * d + j];
                    }
                }
                parents[0].accum(&da);
                parents[1].accum(&dw);
            }),
        ))
    }

    /// Rows of `table` at `indices`: `[v,d] x idx[n] -> [n,d]`.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (v, d) = check2(self, "gather_rows")?;
        for &ix in indices {
            if ix >= v {
                return Err(Error::ShapeMismatch {
                    op: "gather_rows",
                    lhs: self.shape(),
                    rhs: vec![ix],
                });
            }
        }
        let a = self.data();
        let n = indices.len();
        let mut out = vec![0.0; n * d];
        for (i, &ix) in indices.iter().enumerate() {
            out[i * d..(i + 1) * d].copy_from_slice(&a[ix * d..(ix + 1) * d]);
        }
        let idx = indices.to_vec();
        Ok(Tensor::node(
            out,
            vec![n, d],
            vec![self.clone()],
            Box::new(move |gout, parents| {
                let mut da = vec![0.0; v * d];
                for (i, &ix) in idx.iter().enumerate() {
                    for j in 0..d {
                        da[ix * d + j] += gout[i * d + j];
                    }
                }
                parents[0].accum(&da);
            }),
        ))
    }

    /// Mean negative log-likelihood of row-stochastic predictions against
    /// integer labels.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Tensor> {
        let (n, k) = check2(self, "cross_entropy")?;
        if labels.len() != n {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                lhs: self.shape(),
                rhs: vec![labels.len()],
            });
        }
        for &y in labels {
            if y >= k {
                return Err(Error::Data(format!("label {y} out of range for K={k}")));
            }
        }
        let p = self.data();
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            loss -= p[i * k + y].max(1e-300).ln();
        }
        loss /= n as f64;
        let labels = labels.to_vec();
        Ok(Tensor::node(
            vec![loss],
            vec![1],
            vec![self.clone()],
            Box::new(move |gout, parents| {
                let g = gout[0];
                let mut dp = vec![0.0; n * k];
                for (i, &y) in labels.iter().enumerate() {
                    dp[i * k + y] = -g / (n as f64 * p[i * k + y].max(1e-300));
                }
                parents[0].accum(&dp);
            }),
        ))
    }

    /// Sum of all entries (test helper for scalar losses).
    pub fn sum(&self) -> Tensor {
        let a = self.data();
        let s: f64 = a.iter().sum();
        let n = a.len();
        Tensor::node(
            vec![s],
            vec![1],
            vec![self.clone()],
            Box::new(move |gout, parents| {
                parents[0].accum(&vec![gout[0]; n]);
            }),
        )
    }
}

/// Side-by-side concatenation of same-height matrices.
pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
    assert!(!parts.is_empty());
    let (n, _) = check2(&parts[0], "concat_cols")?;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (pn, pd) = check2(p, "concat_cols")?;
        if pn != n {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: parts[0].shape(),
                rhs: p.shape(),
            });
        }
        widths.push(pd);
    }
    let total: usize = widths.iter().sum();
    let mut out = vec![0.0; n * total];
    let mut off = 0;
    for (p, &w) in parts.iter().zip(&widths) {
        let a = p.data();
        for i in 0..n {
            out[i * total + off..i * total + off + w].copy_from_slice(&a[i * w..(i + 1) * w]);
        }
        off += w;
    }
    let widths_c = widths.clone();
    Ok(Tensor::node(
        out,
        vec![n, total],
        parts.to_vec(),
        Box::new(move |gout, parents| {
            let mut off = 0;
            for (p, &w) in parents.iter().zip(&widths_c) {
                let mut dp = vec![0.0; n * w];
                for i in 0..n {
                    dp[i * w..(i + 1) * w]
                        .copy_from_slice(&gout[i * total + off..i * total + off + w]);
                }
                p.accum(&dp);
                off += w;
            }
        }),
    ))
}

/// Vertical stacking of same-width matrices.
pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
    assert!(!parts.is_empty());
    let (_, d) = check2(&parts[0], "concat_rows")?;
    let mut heights = Vec::with_capacity(parts.len());
    for p in parts {
        let (pn, pd) = check2(p, "concat_rows")?;
        if pd != d {
            return Err(Error::ShapeMismatch {
                op: "concat_rows",
                lhs: parts[0].shape(),
                rhs: p.shape(),
            });
        }
        heights.push(pn);
    }
    let total: usize = heights.iter().sum();
    let mut out = Vec::with_capacity(total * d);
    for p in parts {
        out.extend_from_slice(&p.data());
    }
    let heights_c = heights.clone();
    Ok(Tensor::node(
        out,
        vec![total, d],
        parts.to_vec(),
        Box::new(move |gout, parents| {
            let mut off = 0;
            for (p, &h) in parents.iter().zip(&heights_c) {
                p.accum(&gout[off * d..(off + h) * d]);
                off += h;
            }
        }),
    ))
}
