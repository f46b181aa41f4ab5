//! Minimal reverse-mode differentiation over row-major `f64` matrices.
//!
//! Only the operations the GNN decoder needs are provided. Parameters are not
//! tape nodes; operations that read a parameter refer to it by index into a
//! [`ParamSet`] and accumulate its gradient during [`Tape::backward`].

use std::sync::Arc;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn add_assign(&mut self, other: &Mat) {
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }
}

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Mat,
}

/// Ordered collection of trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn zeros_like(&self) -> Vec<Mat> {
        self.tensors
            .iter()
            .map(|t| Mat::zeros(t.value.rows, t.value.cols))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.data.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }
}

/// Compressed row groups: group `g` owns `members[offsets[g]..offsets[g + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    pub offsets: Vec<usize>,
    pub members: Vec<usize>,
}

impl Segments {
    pub fn from_groups<I, G>(groups: I) -> Self
    where
        I: IntoIterator<Item = G>,
        G: IntoIterator<Item = usize>,
    {
        let mut offsets = vec![0];
        let mut members = Vec::new();
        for g in groups {
            members.extend(g);
            offsets.push(members.len());
        }
        Segments { offsets, members }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn group(&self, g: usize) -> &[usize] {
        &self.members[self.offsets[g]..self.offsets[g + 1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    /// `x * W[:, off..off + x.cols]^T`
    MatMulBlock { x: NodeId, param: usize, off: usize, bias: Option<usize> },
    AddBias { x: NodeId, param: usize },
    Add { a: NodeId, b: NodeId },
    Relu { x: NodeId },
    Gather { x: NodeId, idx: Arc<Vec<usize>> },
    /// Row `i` is `sum_p parts[p].x[idx_p[i]]` plus an optional bias row.
    SumGather { parts: Vec<Part>, bias: Option<usize> },
    SegmentMean { x: NodeId, seg: Arc<Segments> },
}

/// One addend of [`Tape::sum_gather`]; `idx: None` takes rows in order.
#[derive(Debug, Clone)]
pub struct Part {
    pub x: NodeId,
    pub idx: Option<Arc<Vec<usize>>>,
}

impl Part {
    pub fn rows(x: NodeId) -> Self {
        Part { x, idx: None }
    }

    pub fn gathered(x: NodeId, idx: &Arc<Vec<usize>>) -> Self {
        Part {
            x,
            idx: Some(idx.clone()),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation for later differentiation.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

/// `C = beta * C + A * B` for strided operands.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |rows: usize, cols: usize, rs: isize, cs: isize| -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
        }
    };
    assert!(a.len() >= extent(m, k, rsa, csa));
    assert!(b.len() >= extent(k, n, rsb, csb));
    assert!(c.len() >= extent(m, n, rsc, csc));
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    /// Active set of every ReLU recorded so far (input > 0), in recording order.
    /// Two tapes of the same graph with equal patterns lie on the same linear
    /// piece of every ReLU.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu { x } => Some(&self.nodes[x.0].value.data),
                _ => None,
            })
            .flat_map(|v| v.iter().map(|&z| z > 0.0))
            .collect()
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Multiplies by the transpose of a column block of parameter `param`,
    /// starting at column `off` and as wide as `x`.
    pub fn matmul_block(&mut self, x: NodeId, param: usize, off: usize) -> NodeId {
        let y = self.block_product(x, param, off, None);
        self.push(y, Op::MatMulBlock { x, param, off, bias: None }, true)
    }

    /// `x W^T + b` over the whole of `W`.
    pub fn linear(&mut self, x: NodeId, param: usize, bias: usize) -> NodeId {
        let y = self.block_product(x, param, 0, Some(bias));
        let op = Op::MatMulBlock { x, param, off: 0, bias: Some(bias) };
        self.push(y, op, true)
    }

    fn block_product(&self, x: NodeId, param: usize, off: usize, bias: Option<usize>) -> Mat {
        let w = &self.params.tensors[param].value;
        let xv = &self.nodes[x.0].value;
        assert!(off + xv.cols <= w.cols, "parameter block out of range");
        let mut y = Mat::zeros(xv.rows, w.rows);
        let beta = match bias {
            None => 0.0,
            Some(b) => {
                let b = &self.params.tensors[b].value.data;
                assert_eq!(b.len(), w.rows, "bias width");
                for row in y.data.chunks_exact_mut(w.rows.max(1)) {
                    row.copy_from_slice(b);
                }
                1.0
            }
        };
        gemm(
            xv.rows,
            xv.cols,
            w.rows,
            &xv.data,
            xv.cols as isize,
            1,
            &w.data[off..],
            1,
            w.cols as isize,
            beta,
            &mut y.data,
            w.rows as isize,
            1,
        );
        y
    }

    /// Adds a `1 x cols` parameter row to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, param: usize) -> NodeId {
        let b = &self.params.tensors[param].value;
        let mut y = self.nodes[x.0].value.clone();
        assert_eq!(b.data.len(), y.cols, "bias width");
        for row in y.data.chunks_exact_mut(b.data.len()) {
            row.iter_mut().zip(&b.data).for_each(|(v, bb)| *v += bb);
        }
        self.push(y, Op::AddBias { x, param }, true)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut y = self.nodes[a.0].value.clone();
        let bv = &self.nodes[b.0].value;
        assert_eq!((y.rows, y.cols), (bv.rows, bv.cols), "add shapes");
        y.add_assign(bv);
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(y, Op::Add { a, b }, needs)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut y = self.nodes[x.0].value.clone();
        y.data.iter_mut().for_each(|v| *v = v.max(0.0));
        let needs = self.nodes[x.0].needs_grad;
        self.push(y, Op::Relu { x }, needs)
    }

    /// Row `i` of the output is row `idx[i]` of `x`.
    pub fn gather(&mut self, x: NodeId, idx: Arc<Vec<usize>>) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let mut y = Mat::zeros(idx.len(), xv.cols);
        for (dst, &src) in y.data.chunks_exact_mut(xv.cols.max(1)).zip(idx.iter()) {
            dst.copy_from_slice(xv.row(src));
        }
        let needs = self.nodes[x.0].needs_grad;
        self.push(y, Op::Gather { x, idx }, needs)
    }

    /// Sums rows drawn from several nodes, plus an optional bias row.
    /// All parts must have the same width; `rows` is the output height.
    pub fn sum_gather(&mut self, rows: usize, parts: Vec<Part>, bias: Option<usize>) -> NodeId {
        let cols = self.nodes[parts[0].x.0].value.cols;
        let mut y = Mat::zeros(rows, cols);
        if let Some(b) = bias {
            let b = &self.params.tensors[b].value.data;
            assert_eq!(b.len(), cols, "bias width");
            for row in y.data.chunks_exact_mut(cols.max(1)) {
                row.copy_from_slice(b);
            }
        }
        for part in &parts {
            let xv = &self.nodes[part.x.0].value;
            assert_eq!(xv.cols, cols, "sum_gather widths");
            match &part.idx {
                None => {
                    assert_eq!(xv.rows, rows, "sum_gather rows");
                    y.add_assign(xv);
                }
                Some(idx) => {
                    assert_eq!(idx.len(), rows, "sum_gather index length");
                    for (dst, &src) in y.data.chunks_exact_mut(cols.max(1)).zip(idx.iter()) {
                        dst.iter_mut().zip(xv.row(src)).for_each(|(d, s)| *d += s);
                    }
                }
            }
        }
        let needs = bias.is_some() || parts.iter().any(|p| self.nodes[p.x.0].needs_grad);
        self.push(y, Op::SumGather { parts, bias }, needs)
    }

    /// Row `g` of the output is the mean of the rows of `x` in group `g`.
    pub fn segment_mean(&mut self, x: NodeId, seg: Arc<Segments>) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let cols = xv.cols;
        let mut y = Mat::zeros(seg.len(), cols);
        for g in 0..seg.len() {
            let members = seg.group(g);
            if members.is_empty() {
                continue;
            }
            let dst = &mut y.data[g * cols..(g + 1) * cols];
            for &m in members {
                dst.iter_mut().zip(xv.row(m)).for_each(|(d, s)| *d += s);
            }
            let inv = 1.0 / members.len() as f64;
            dst.iter_mut().for_each(|d| *d *= inv);
        }
        let needs = self.nodes[x.0].needs_grad;
        self.push(y, Op::SegmentMean { x, seg }, needs)
    }

    /// Back-propagates `seed` (the gradient of the objective with respect to
    /// `output`) and returns one gradient per parameter tensor.
    pub fn backward(&self, output: NodeId, seed: Mat) -> Vec<Mat> {
        self.backward_many(vec![(output, seed)])
    }

    /// Gradient of `sum_k <seed_k, output_k>` with respect to every parameter.
    pub fn backward_many(&self, seeds: Vec<(NodeId, Mat)>) -> Vec<Mat> {
        let mut param_grads = self.params.zeros_like();
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let Some(last) = seeds.iter().map(|(id, _)| id.0).max() else {
            return param_grads;
        };
        for (output, seed) in seeds {
            let value = &self.nodes[output.0].value;
            assert_eq!((seed.rows, seed.cols), (value.rows, value.cols), "seed shape");
            match &mut grads[output.0] {
                Some(g) => g.add_assign(&seed),
                slot => *slot = Some(seed),
            }
        }

        fn accumulate(grads: &mut [Option<Mat>], id: NodeId, rows: usize, cols: usize) -> &mut Mat {
            grads[id.0].get_or_insert_with(|| Mat::zeros(rows, cols))
        }

        for i in (0..=last).rev() {
            let Some(dy) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::MatMulBlock { x, param, off, bias } => {
                    if let Some(b) = bias {
                        let gb = &mut param_grads[*b];
                        for row in dy.data.chunks_exact(dy.cols.max(1)) {
                            gb.data.iter_mut().zip(row).for_each(|(g, d)| *g += d);
                        }
                    }
                    let w = &self.params.tensors[*param].value;
                    let xv = &self.nodes[x.0].value;
                    // dW[:, off..] += dy^T x
                    let gw = &mut param_grads[*param];
                    gemm(
                        w.rows,
                        dy.rows,
                        xv.cols,
                        &dy.data,
                        1,
                        dy.cols as isize,
                        &xv.data,
                        xv.cols as isize,
                        1,
                        1.0,
                        &mut gw.data[*off..],
                        w.cols as isize,
                        1,
                    );
                    if self.nodes[x.0].needs_grad {
                        // dx += dy W[:, off..]
                        let gx = accumulate(&mut grads, *x, xv.rows, xv.cols);
                        gemm(
                            dy.rows,
                            w.rows,
                            xv.cols,
                            &dy.data,
                            dy.cols as isize,
                            1,
                            &w.data[*off..],
                            w.cols as isize,
                            1,
                            1.0,
                            &mut gx.data,
                            xv.cols as isize,
                            1,
                        );
                    }
                }
                Op::AddBias { x, param } => {
                    let gb = &mut param_grads[*param];
                    for row in dy.data.chunks_exact(dy.cols) {
                        gb.data.iter_mut().zip(row).for_each(|(g, d)| *g += d);
                    }
                    if self.nodes[x.0].needs_grad {
                        accumulate(&mut grads, *x, dy.rows, dy.cols).add_assign(&dy);
                    }
                }
                Op::Add { a, b } => {
                    for id in [a, b] {
                        if self.nodes[id.0].needs_grad {
                            accumulate(&mut grads, *id, dy.rows, dy.cols).add_assign(&dy);
                        }
                    }
                }
                Op::Relu { x } => {
                    let gx = accumulate(&mut grads, *x, dy.rows, dy.cols);
                    for ((g, d), y) in gx.data.iter_mut().zip(&dy.data).zip(&node.value.data) {
                        if *y > 0.0 {
                            *g += d;
                        }
                    }
                }
                Op::Gather { x, idx } => {
                    let xv = &self.nodes[x.0].value;
                    let cols = xv.cols;
                    let gx = accumulate(&mut grads, *x, xv.rows, cols);
                    for (row, &src) in dy.data.chunks_exact(cols.max(1)).zip(idx.iter()) {
                        gx.data[src * cols..(src + 1) * cols]
                            .iter_mut()
                            .zip(row)
                            .for_each(|(g, d)| *g += d);
                    }
                }
                Op::SumGather { parts, bias } => {
                    if let Some(b) = bias {
                        let gb = &mut param_grads[*b];
                        for row in dy.data.chunks_exact(dy.cols.max(1)) {
                            gb.data.iter_mut().zip(row).for_each(|(g, d)| *g += d);
                        }
                    }
                    for part in parts {
                        let src = &self.nodes[part.x.0];
                        if !src.needs_grad {
                            continue;
                        }
                        let (rows, cols) = (src.value.rows, src.value.cols);
                        let gx = accumulate(&mut grads, part.x, rows, cols);
                        match &part.idx {
                            None => gx.add_assign(&dy),
                            Some(idx) => {
                                for (row, &dst) in dy.data.chunks_exact(cols.max(1)).zip(idx.iter()) {
                                    gx.data[dst * cols..(dst + 1) * cols]
                                        .iter_mut()
                                        .zip(row)
                                        .for_each(|(g, d)| *g += d);
                                }
                            }
                        }
                    }
                }
                Op::SegmentMean { x, seg } => {
                    let xv = &self.nodes[x.0].value;
                    let cols = xv.cols;
                    let gx = accumulate(&mut grads, *x, xv.rows, cols);
                    for g in 0..seg.len() {
                        let members = seg.group(g);
                        if members.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / members.len() as f64;
                        let src = &dy.data[g * cols..(g + 1) * cols];
                        for &m in members {
                            gx.data[m * cols..(m + 1) * cols]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(gg, d)| *gg += d * inv);
                        }
                    }
                }
            }
        }
        param_grads
    }
}
