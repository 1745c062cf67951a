//! Recorded-operation tape and reverse-mode differentiation.
//!
//! Every operation validates shapes, computes its output eagerly, scans the
//! result for non-finite values and appends a node to the tape. Nodes are in
//! topological order by construction, so [`Graph::backward`] is a single
//! reverse sweep. All reductions accumulate in fixed sequential index order,
//! which makes replays bit-identical.

use rand::Rng;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value stored on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Node<T> {
    Add { a: usize, b: usize, out: usize },
    Mul { a: usize, b: usize, out: usize },
    Matmul { a: usize, b: usize, out: usize },
    /// out = a · bᵀ
    MatmulNT { a: usize, b: usize, out: usize },
    /// Row-broadcast bias add: a is R×C, bias is C.
    AddBias { a: usize, bias: usize, out: usize },
    ConcatCols { a: usize, b: usize, out: usize },
    ConcatRows { parts: Vec<usize>, out: usize },
    SliceRows { a: usize, start: usize, out: usize },
    Conv1dCausal { input: usize, kernel: usize, dilation: usize, out: usize },
    Relu { a: usize, out: usize },
    Softmax { a: usize, axis: usize, out: usize },
    Scale { a: usize, c: T, out: usize },
    MeanRows { a: usize, out: usize },
    Sum { a: usize, out: usize },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        weights: Option<Vec<T>>,
        out: usize,
    },
}

struct Value<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Wengert-style tape: values arena plus recorded nodes.
pub struct Graph<T = f32> {
    values: Vec<Value<T>>,
    nodes: Vec<Node<T>>,
    /// Whether gradient must flow to this value (leaf flag or inherited).
    track: Vec<bool>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            values: Vec::new(),
            nodes: Vec::new(),
            track: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.values[v.0].data
    }

    pub fn shape_of(&self, v: Var) -> &[usize] {
        &self.values[v.0].shape
    }

    /// Gradient of a value after [`Graph::backward`]; `None` if no gradient flowed to it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient with non-participating values reported as zeros.
    pub fn grad_or_zeros(&self, v: Var) -> Vec<T> {
        match self.grad(v) {
            Some(g) => g.to_vec(),
            None => vec![T::zero(); self.values[v.0].data.len()],
        }
    }

    /// Registers a leaf value, inheriting the tensor's `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Result<Var> {
        self.leaf_raw(t.shape().to_vec(), t.data().to_vec(), t.requires_grad())
    }

    pub fn leaf_raw(&mut self, shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Result<Var> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        check_finite("leaf", &data)?;
        let id = self.push_value(shape, data, requires_grad);
        Ok(Var(id))
    }

    fn push_value(&mut self, shape: Vec<usize>, data: Vec<T>, track: bool) -> usize {
        self.values.push(Value { shape, data });
        self.track.push(track);
        self.grads.push(None);
        self.values.len() - 1
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let s = &self.values[v.0].shape;
        if s.len() != 2 {
            return Err(Error::shape(op, format!("expected 2-D tensor, got shape {:?}", s)));
        }
        Ok((s[0], s[1]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (&self.values[a.0].shape, &self.values[b.0].shape);
        if sa != sb {
            return Err(Error::shape("add", format!("{:?} vs {:?}", sa, sb)));
        }
        let data: Vec<T> = self.values[a.0]
            .data
            .iter()
            .zip(&self.values[b.0].data)
            .map(|(&x, &y)| x + y)
            .collect();
        self.finish("add", sa.clone(), data, &[a, b], |out| Node::Add { a: a.0, b: b.0, out })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (&self.values[a.0].shape, &self.values[b.0].shape);
        if sa != sb {
            return Err(Error::shape("mul", format!("{:?} vs {:?}", sa, sb)));
        }
        let data: Vec<T> = self.values[a.0]
            .data
            .iter()
            .zip(&self.values[b.0].data)
            .map(|(&x, &y)| x * y)
            .collect();
        self.finish("mul", sa.clone(), data, &[a, b], |out| Node::Mul { a: a.0, b: b.0, out })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.dims2("matmul", a)?;
        let (kb, n) = self.dims2("matmul", b)?;
        if ka != kb {
            return Err(Error::shape(
                "matmul",
                format!("inner dimensions disagree: [{m}, {ka}] vs [{kb}, {n}]"),
            ));
        }
        let data = mm_nn(&self.values[a.0].data, &self.values[b.0].data, m, ka, n);
        self.finish("matmul", vec![m, n], data, &[a, b], |out| Node::Matmul { a: a.0, b: b.0, out })
    }

    /// `a · bᵀ` for `a: M×K`, `b: N×K`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.dims2("matmul_nt", a)?;
        let (n, kb) = self.dims2("matmul_nt", b)?;
        if ka != kb {
            return Err(Error::shape(
                "matmul_nt",
                format!("inner dimensions disagree: [{m}, {ka}] vs [{n}, {kb}]ᵀ"),
            ));
        }
        let data = mm_nt(&self.values[a.0].data, &self.values[b.0].data, m, ka, n);
        self.finish("matmul_nt", vec![m, n], data, &[a, b], |out| Node::MatmulNT {
            a: a.0,
            b: b.0,
            out,
        })
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims2("add_bias", a)?;
        let sb = &self.values[bias.0].shape;
        if sb.len() != 1 || sb[0] != c {
            return Err(Error::shape(
                "add_bias",
                format!("matrix [{r}, {c}] vs bias {:?}", sb),
            ));
        }
        let mut data = self.values[a.0].data.clone();
        let bv = &self.values[bias.0].data;
        for row in data.chunks_mut(c) {
            for (x, &b) in row.iter_mut().zip(bv) {
                *x = *x + b;
            }
        }
        self.finish("add_bias", vec![r, c], data, &[a, bias], |out| Node::AddBias {
            a: a.0,
            bias: bias.0,
            out,
        })
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims2("concat_cols", a)?;
        let (rb, cb) = self.dims2("concat_cols", b)?;
        if ra != rb {
            return Err(Error::shape(
                "concat_cols",
                format!("row counts disagree: [{ra}, {ca}] vs [{rb}, {cb}]"),
            ));
        }
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            data.extend_from_slice(&self.values[a.0].data[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&self.values[b.0].data[r * cb..(r + 1) * cb]);
        }
        self.finish("concat_cols", vec![ra, ca + cb], data, &[a, b], |out| Node::ConcatCols {
            a: a.0,
            b: b.0,
            out,
        })
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_rows of zero parts".into()));
        }
        let (_, c) = self.dims2("concat_rows", parts[0])?;
        let mut rows = 0;
        for &p in parts {
            let (rp, cp) = self.dims2("concat_rows", p)?;
            if cp != c {
                return Err(Error::shape(
                    "concat_rows",
                    format!("column counts disagree: {c} vs {cp}"),
                ));
            }
            rows += rp;
        }
        let mut data = Vec::with_capacity(rows * c);
        for &p in parts {
            data.extend_from_slice(&self.values[p.0].data);
        }
        let track = parts.iter().any(|p| self.track[p.0]);
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        check_finite("concat_rows", &data)?;
        let out = self.push_value(vec![rows, c], data, track);
        self.nodes.push(Node::ConcatRows { parts: ids, out });
        Ok(Var(out))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2("slice_rows", a)?;
        if start + len > r {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {start}..{} out of [{r}, {c}]", start + len),
            ));
        }
        let data = self.values[a.0].data[start * c..(start + len) * c].to_vec();
        self.finish("slice_rows", vec![len, c], data, &[a], |out| Node::SliceRows {
            a: a.0,
            start,
            out,
        })
    }

    /// Causal 1-D convolution. `input` is T×C_in, `kernel` is k×C_in×C_out,
    /// laid out oldest-tap-first: tap `j` reads input frame `t - (k-1-j)·dilation`
    /// and out-of-range frames are zero, so output frame `t` sees only inputs ≤ `t`.
    pub fn conv1d_causal(&mut self, input: Var, kernel: Var, dilation: usize) -> Result<Var> {
        if dilation < 1 {
            return Err(Error::Parameter(format!("dilation must be >= 1, got {dilation}")));
        }
        let (t_len, c_in) = self.dims2("conv1d_causal", input)?;
        let ks = &self.values[kernel.0].shape;
        if ks.len() != 3 || ks[1] != c_in {
            return Err(Error::shape(
                "conv1d_causal",
                format!("input [{t_len}, {c_in}] vs kernel {:?}", ks),
            ));
        }
        let (k, c_out) = (ks[0], ks[2]);
        let x = &self.values[input.0].data;
        let w = &self.values[kernel.0].data;
        let mut data = vec![T::zero(); t_len * c_out];
        for t in 0..t_len {
            let out_row = &mut data[t * c_out..(t + 1) * c_out];
            for j in 0..k {
                let offset = (k - 1 - j) * dilation;
                if offset > t {
                    continue;
                }
                let src = t - offset;
                let x_row = &x[src * c_in..(src + 1) * c_in];
                let w_tap = &w[j * c_in * c_out..(j + 1) * c_in * c_out];
                for (ci, &xv) in x_row.iter().enumerate() {
                    let w_row = &w_tap[ci * c_out..(ci + 1) * c_out];
                    for (o, &wv) in out_row.iter_mut().zip(w_row) {
                        *o = *o + xv * wv;
                    }
                }
            }
        }
        self.finish("conv1d_causal", vec![t_len, c_out], data, &[input, kernel], |out| {
            Node::Conv1dCausal {
                input: input.0,
                kernel: kernel.0,
                dilation,
                out,
            }
        })
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let data: Vec<T> = self.values[a.0]
            .data
            .iter()
            .map(|&x| if x > T::zero() { x } else { T::zero() })
            .collect();
        let shape = self.values[a.0].shape.clone();
        self.finish("relu", shape, data, &[a], |out| Node::Relu { a: a.0, out })
    }

    /// Max-subtracted softmax along `axis` of a 1-D or 2-D tensor.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.values[a.0].shape.clone();
        if axis >= shape.len() {
            return Err(Error::Parameter(format!(
                "softmax axis {axis} out of range for shape {:?}",
                shape
            )));
        }
        check_finite("softmax", &self.values[a.0].data)?;
        let (rows, cols) = if shape.len() == 1 { (1, shape[0]) } else { (shape[0], shape[1]) };
        let x = &self.values[a.0].data;
        let mut data = vec![T::zero(); x.len()];
        let row_major = shape.len() == 1 || axis == 1;
        if row_major {
            for r in 0..rows {
                softmax_slice(&x[r * cols..(r + 1) * cols], &mut data[r * cols..(r + 1) * cols]);
            }
        } else {
            // axis 0 of a 2-D tensor: strided columns
            let mut col_in = vec![T::zero(); rows];
            let mut col_out = vec![T::zero(); rows];
            for c in 0..cols {
                for r in 0..rows {
                    col_in[r] = x[r * cols + c];
                }
                softmax_slice(&col_in, &mut col_out);
                for r in 0..rows {
                    data[r * cols + c] = col_out[r];
                }
            }
        }
        self.finish("softmax", shape, data, &[a], |out| Node::Softmax { a: a.0, axis, out })
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let data: Vec<T> = self.values[a.0].data.iter().map(|&x| x * c).collect();
        let shape = self.values[a.0].shape.clone();
        self.finish("scale", shape, data, &[a], |out| Node::Scale { a: a.0, c, out })
    }

    /// Column-wise mean over rows: N×D → 1×D.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2("mean_rows", a)?;
        if r == 0 {
            return Err(Error::Contract("mean_rows over zero rows".into()));
        }
        let x = &self.values[a.0].data;
        let inv = T::one() / T::from_f64(r as f64);
        let mut data = vec![T::zero(); c];
        for row in x.chunks(c) {
            for (acc, &v) in data.iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
        for v in data.iter_mut() {
            *v = *v * inv;
        }
        self.finish("mean_rows", vec![1, c], data, &[a], |out| Node::MeanRows { a: a.0, out })
    }

    /// Sum of all elements, as a scalar value.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.values[a.0].data.iter().fold(T::zero(), |acc, &v| acc + v);
        self.finish("sum", vec![1], vec![total], &[a], |out| Node::Sum { a: a.0, out })
    }

    /// Mean over frames of the (optionally class-weighted) negative
    /// log-softmax probability of each frame's target class. Weighted mean is
    /// normalized by the total weight, so uniform weights reproduce the
    /// unweighted loss exactly.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        class_weights: Option<&[T]>,
    ) -> Result<Var> {
        let (t_len, k) = self.dims2("cross_entropy", logits)?;
        if targets.len() != t_len {
            return Err(Error::shape(
                "cross_entropy",
                format!("logits [{t_len}, {k}] vs {} targets", targets.len()),
            ));
        }
        for (i, &y) in targets.iter().enumerate() {
            if y >= k {
                return Err(Error::Label {
                    index: i,
                    value: y,
                    classes: k,
                });
            }
        }
        if let Some(w) = class_weights {
            if w.len() != k {
                return Err(Error::shape(
                    "cross_entropy",
                    format!("{} class weights vs {k} classes", w.len()),
                ));
            }
        }
        let x = &self.values[logits.0].data;
        let mut loss_sum = T::zero();
        let mut weight_sum = T::zero();
        for (t, &y) in targets.iter().enumerate() {
            let row = &x[t * k..(t + 1) * k];
            let lse = log_sum_exp(row);
            let w = class_weights.map_or_else(T::one, |cw| cw[y]);
            loss_sum = loss_sum + w * (lse - row[y]);
            weight_sum = weight_sum + w;
        }
        if weight_sum <= T::zero() {
            return Err(Error::Contract("cross_entropy with non-positive total weight".into()));
        }
        let loss = loss_sum / weight_sum;
        let weights = class_weights.map(|w| w.to_vec());
        self.finish("cross_entropy", vec![1], vec![loss], &[logits], |out| Node::CrossEntropy {
            logits: logits.0,
            targets: targets.to_vec(),
            weights,
            out,
        })
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// rescales survivors by 1/(1-rate). The mask is recorded as a constant
    /// leaf so backward replays it exactly.
    pub fn dropout<R: Rng>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = T::from_f64(1.0 / (1.0 - rate));
        let shape = self.values[a.0].shape.clone();
        let mask: Vec<T> = (0..self.values[a.0].data.len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let mask_var = self.leaf_raw(shape, mask, false)?;
        self.mul(a, mask_var)
    }

    fn finish(
        &mut self,
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        inputs: &[Var],
        make: impl FnOnce(usize) -> Node<T>,
    ) -> Result<Var> {
        check_finite(op, &data)?;
        let track = inputs.iter().any(|v| self.track[v.0]);
        let out = self.push_value(shape, data, track);
        self.nodes.push(make(out));
        Ok(Var(out))
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate (sum) where a
    /// value feeds several nodes; values the loss does not depend on keep a
    /// `None` gradient (reported as zeros by [`Graph::grad_or_zeros`]).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.values[loss.0].data.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.values[loss.0].shape
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..self.nodes.len()).rev() {
            let node = self.nodes[i].clone();
            self.backward_node(&node);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: usize, g: &[T]) {
        if !self.track[id] {
            return;
        }
        match &mut self.grads[id] {
            Some(buf) => {
                for (acc, &v) in buf.iter_mut().zip(g) {
                    *acc = *acc + v;
                }
            }
            None => self.grads[id] = Some(g.to_vec()),
        }
    }

    fn backward_node(&mut self, node: &Node<T>) {
        match node {
            Node::Add { a, b, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                self.accumulate(*a, &g);
                self.accumulate(*b, &g);
            }
            Node::Mul { a, b, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                if self.track[*a] {
                    let da: Vec<T> =
                        g.iter().zip(&self.values[*b].data).map(|(&gv, &bv)| gv * bv).collect();
                    self.accumulate(*a, &da);
                }
                if self.track[*b] {
                    let db: Vec<T> =
                        g.iter().zip(&self.values[*a].data).map(|(&gv, &av)| gv * av).collect();
                    self.accumulate(*b, &db);
                }
            }
            Node::Matmul { a, b, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                let (m, k) = (self.values[*a].shape[0], self.values[*a].shape[1]);
                let n = self.values[*b].shape[1];
                if self.track[*a] {
                    let da = mm_nt(&g, &self.values[*b].data, m, n, k);
                    self.accumulate(*a, &da);
                }
                if self.track[*b] {
                    let db = mm_tn(&self.values[*a].data, &g, m, k, n);
                    self.accumulate(*b, &db);
                }
            }
            Node::MatmulNT { a, b, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                let (m, k) = (self.values[*a].shape[0], self.values[*a].shape[1]);
                let n = self.values[*b].shape[0];
                if self.track[*a] {
                    // d a = g · b  (M×N · N×K)
                    let da = mm_nn(&g, &self.values[*b].data, m, n, k);
                    self.accumulate(*a, &da);
                }
                if self.track[*b] {
                    // d b = gᵀ · a  (N×M · M×K)
                    let db = mm_tn(&g, &self.values[*a].data, m, n, k);
                    self.accumulate(*b, &db);
                }
            }
            Node::AddBias { a, bias, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                let c = self.values[*bias].data.len();
                self.accumulate(*a, &g);
                if self.track[*bias] {
                    let mut db = vec![T::zero(); c];
                    for row in g.chunks(c) {
                        for (acc, &v) in db.iter_mut().zip(row) {
                            *acc = *acc + v;
                        }
                    }
                    self.accumulate(*bias, &db);
                }
            }
            Node::ConcatCols { a, b, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                let (r, ca) = (self.values[*a].shape[0], self.values[*a].shape[1]);
                let cb = self.values[*b].shape[1];
                let ct = ca + cb;
                if self.track[*a] {
                    let mut da = vec![T::zero(); r * ca];
                    for i in 0..r {
                        da[i * ca..(i + 1) * ca].copy_from_slice(&g[i * ct..i * ct + ca]);
                    }
                    self.accumulate(*a, &da);
                }
                if self.track[*b] {
                    let mut db = vec![T::zero(); r * cb];
                    for i in 0..r {
                        db[i * cb..(i + 1) * cb].copy_from_slice(&g[i * ct + ca..(i + 1) * ct]);
                    }
                    self.accumulate(*b, &db);
                }
            }
            Node::ConcatRows { parts, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                let mut offset = 0;
                for &p in parts {
                    let n = self.values[p].data.len();
                    if self.track[p] {
                        let dp = g[offset..offset + n].to_vec();
                        self.accumulate(p, &dp);
                    }
                    offset += n;
                }
            }
            Node::SliceRows { a, start, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                if !self.track[*a] {
                    return;
                }
                let c = self.values[*a].shape[1];
                let mut da = vec![T::zero(); self.values[*a].data.len()];
                da[start * c..start * c + g.len()].copy_from_slice(&g);
                self.accumulate(*a, &da);
            }
            Node::Conv1dCausal { input, kernel, dilation, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                let (t_len, c_in) = (self.values[*input].shape[0], self.values[*input].shape[1]);
                let (k, c_out) = (self.values[*kernel].shape[0], self.values[*kernel].shape[2]);
                let x = &self.values[*input].data;
                let w = &self.values[*kernel].data;
                let mut d_in = vec![T::zero(); t_len * c_in];
                let mut d_ker = vec![T::zero(); k * c_in * c_out];
                let grad_in = self.track[*input];
                let grad_ker = self.track[*kernel];
                for t in 0..t_len {
                    let g_row = &g[t * c_out..(t + 1) * c_out];
                    for j in 0..k {
                        let offset = (k - 1 - j) * dilation;
                        if offset > t {
                            continue;
                        }
                        let src = t - offset;
                        if grad_ker {
                            let x_row = &x[src * c_in..(src + 1) * c_in];
                            let dk_tap = &mut d_ker[j * c_in * c_out..(j + 1) * c_in * c_out];
                            for (ci, &xv) in x_row.iter().enumerate() {
                                let dk_row = &mut dk_tap[ci * c_out..(ci + 1) * c_out];
                                for (dk, &gv) in dk_row.iter_mut().zip(g_row) {
                                    *dk = *dk + xv * gv;
                                }
                            }
                        }
                        if grad_in {
                            let w_tap = &w[j * c_in * c_out..(j + 1) * c_in * c_out];
                            let di_row = &mut d_in[src * c_in..(src + 1) * c_in];
                            for (ci, di) in di_row.iter_mut().enumerate() {
                                let w_row = &w_tap[ci * c_out..(ci + 1) * c_out];
                                let mut acc = T::zero();
                                for (&wv, &gv) in w_row.iter().zip(g_row) {
                                    acc = acc + wv * gv;
                                }
                                *di = *di + acc;
                            }
                        }
                    }
                }
                if grad_in {
                    self.accumulate(*input, &d_in);
                }
                if grad_ker {
                    self.accumulate(*kernel, &d_ker);
                }
            }
            Node::Relu { a, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                if !self.track[*a] {
                    return;
                }
                let da: Vec<T> = g
                    .iter()
                    .zip(&self.values[*a].data)
                    .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                self.accumulate(*a, &da);
            }
            Node::Softmax { a, axis, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                if !self.track[*a] {
                    return;
                }
                let shape = &self.values[*out].shape;
                let s = &self.values[*out].data;
                let (rows, cols) = if shape.len() == 1 { (1, shape[0]) } else { (shape[0], shape[1]) };
                let mut da = vec![T::zero(); s.len()];
                let row_major = shape.len() == 1 || *axis == 1;
                if row_major {
                    for r in 0..rows {
                        let (sr, gr) = (&s[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                        let dot = sr.iter().zip(gr).fold(T::zero(), |acc, (&sv, &gv)| acc + sv * gv);
                        for c in 0..cols {
                            da[r * cols + c] = sr[c] * (gr[c] - dot);
                        }
                    }
                } else {
                    for c in 0..cols {
                        let mut dot = T::zero();
                        for r in 0..rows {
                            dot = dot + s[r * cols + c] * g[r * cols + c];
                        }
                        for r in 0..rows {
                            da[r * cols + c] = s[r * cols + c] * (g[r * cols + c] - dot);
                        }
                    }
                }
                self.accumulate(*a, &da);
            }
            Node::Scale { a, c, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                if !self.track[*a] {
                    return;
                }
                let da: Vec<T> = g.iter().map(|&gv| gv * *c).collect();
                self.accumulate(*a, &da);
            }
            Node::MeanRows { a, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                if !self.track[*a] {
                    return;
                }
                let (r, c) = (self.values[*a].shape[0], self.values[*a].shape[1]);
                let inv = T::one() / T::from_f64(r as f64);
                let mut da = vec![T::zero(); r * c];
                for row in da.chunks_mut(c) {
                    for (dv, &gv) in row.iter_mut().zip(&g) {
                        *dv = gv * inv;
                    }
                }
                self.accumulate(*a, &da);
            }
            Node::Sum { a, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                if !self.track[*a] {
                    return;
                }
                let da = vec![g[0]; self.values[*a].data.len()];
                self.accumulate(*a, &da);
            }
            Node::CrossEntropy { logits, targets, weights, out } => {
                let Some(g) = self.grads[*out].clone() else { return };
                if !self.track[*logits] {
                    return;
                }
                let k = self.values[*logits].shape[1];
                let x = &self.values[*logits].data;
                let weight_sum = targets
                    .iter()
                    .map(|&y| weights.as_ref().map_or_else(T::one, |w| w[y]))
                    .fold(T::zero(), |acc, w| acc + w);
                let scale = g[0] / weight_sum;
                let mut da = vec![T::zero(); x.len()];
                for (t, &y) in targets.iter().enumerate() {
                    let row = &x[t * k..(t + 1) * k];
                    let w = weights.as_ref().map_or_else(T::one, |cw| cw[y]);
                    let mut probs = vec![T::zero(); k];
                    softmax_slice(row, &mut probs);
                    for c in 0..k {
                        let indicator = if c == y { T::one() } else { T::zero() };
                        da[t * k + c] = scale * w * (probs[c] - indicator);
                    }
                }
                self.accumulate(*logits, &da);
            }
        }
    }
}

fn check_finite<T: Scalar>(op: &'static str, data: &[T]) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op });
    }
    Ok(())
}

fn softmax_slice<T: Scalar>(x: &[T], out: &mut [T]) {
    let max = x.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        let e = (v - max).exp();
        *o = e;
        sum = sum + e;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

fn log_sum_exp<T: Scalar>(x: &[T]) -> T {
    let max = x.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let sum = x.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}

fn mm_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// a: M×K, b: N×K (used transposed) → M×N.
fn mm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc = acc + av * bv;
            }
            *o = acc;
        }
    }
    out
}

/// aᵀ · b for a: M×K, b: M×N → K×N.
fn mm_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
    out
}
