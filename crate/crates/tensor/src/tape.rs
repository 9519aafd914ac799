use crate::error::{Result, TensorError};
use crate::ops::activation::Activation;
use crate::ops::conv::{self, ConvGeometry, Padding};
use crate::ops::norm::{self, BatchNormCache, BatchNormConfig, BatchNormStats};
use crate::ops::{dropout, linalg, loss, pool};
use crate::scalar::Scalar;
use crate::tensor::{check_shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    AddBias { x: Var, bias: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: T },
    Square { x: Var },
    Sum { x: Var },
    Mean { x: Var },
    Reshape { x: Var },
    Conv { x: Var, kernel: Var, bias: Option<Var>, geom: ConvGeometry, cols: Vec<T> },
    ConvTranspose { x: Var, kernel: Var, geom: ConvGeometry },
    MaxPool { x: Var, argmax: Vec<usize> },
    BatchNorm { x: Var, gamma: Var, beta: Var, cache: BatchNormCache<T> },
    BatchNormInfer { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, scale: Vec<T> },
    Act { x: Var, kind: Activation },
    Dropout { x: Var, mask: Vec<T> },
    BceWithLogits { x: Var, targets: Vec<T> },
    SoftmaxXent { x: Var, labels: Vec<usize>, logp: Vec<T> },
}

struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a forward computation so one reverse sweep can produce gradients
/// for every leaf that asked for them.
///
/// A tape is single-use: after [`Tape::backward`] it only answers gradient
/// queries, and a second `backward` is an error.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a tensor; it receives a gradient iff `requires_grad` is set.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    pub fn constant(&mut self, shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        if n.shape.is_empty() {
            Tensor::scalar(n.value[0])
        } else {
            Tensor::new(n.shape.clone(), n.value.clone()).expect("recorded shapes are valid")
        }
    }

    pub fn scalar(&self, v: Var) -> Option<T> {
        let n = self.node(v);
        (n.value.len() == 1).then(|| n.value[0])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n) = linalg::matmul_dims(self.shape(a), self.shape(b))?;
        let out = linalg::matmul(self.value(a), self.value(b), m, k, n);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b, m, k, n }, needs))
    }

    /// Adds a `[c]` bias along the trailing axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap_or(&1);
        if self.shape(bias) != [c] {
            return Err(TensorError::mismatch(
                "add_bias",
                format!("bias {:?} for input {:?}", self.shape(bias), self.shape(x)),
            ));
        }
        let mut out = self.value(x).to_vec();
        linalg::add_bias(&mut out, self.value(bias));
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddBias { x, bias }, needs))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::mismatch(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, rec: Op<T>) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), out, rec, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).iter().map(|&v| v * factor).collect();
        let needs = self.needs(x);
        self.push(self.shape(x).to_vec(), out, Op::Scale { x, factor }, needs)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| v * v).collect();
        let needs = self.needs(x);
        self.push(self.shape(x).to_vec(), out, Op::Square { x }, needs)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        let needs = self.needs(x);
        self.push(Vec::new(), vec![s], Op::Sum { x }, needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let vals = self.value(x);
        let s = vals.iter().copied().sum::<T>() / T::lit(vals.len() as f64);
        let needs = self.needs(x);
        self.push(Vec::new(), vec![s], Op::Mean { x }, needs)
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        if len != self.value(x).len() {
            return Err(TensorError::mismatch(
                "reshape",
                format!("{:?} -> {:?}", self.shape(x), shape),
            ));
        }
        let out = self.value(x).to_vec();
        let needs = self.needs(x);
        Ok(self.push(shape, out, Op::Reshape { x }, needs))
    }

    /// Collapses everything but the leading batch axis.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let batch = *s.first().ok_or_else(|| TensorError::mismatch("flatten", "scalar input"))?;
        let rest = s[1..].iter().product();
        self.reshape(x, vec![batch, rest])
    }

    fn conv_common(&mut self, x: Var, kernel: Var, bias: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        if let Some(b) = bias {
            if self.shape(b) != [geom.c_out] {
                return Err(TensorError::mismatch(
                    "conv",
                    format!("bias {:?} for {} output channels", self.shape(b), geom.c_out),
                ));
            }
        }
        let (out, cols) = conv::conv_forward(
            self.value(x),
            self.value(kernel),
            bias.map(|b| self.value(b)),
            &geom,
        );
        let needs = self.needs(x) || self.needs(kernel) || bias.is_some_and(|b| self.needs(b));
        let shape = geom.output_shape();
        Ok(self.push(shape, out, Op::Conv { x, kernel, bias, geom, cols }, needs))
    }

    /// `x: [batch, h, w, c_in]`, `kernel: [kh, kw, c_in, c_out]`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>, stride: usize, padding: Padding) -> Result<Var> {
        let geom = ConvGeometry::conv2d(self.shape(x), self.shape(kernel), stride, padding)?;
        self.conv_common(x, kernel, bias, geom)
    }

    /// `x: [batch, h, w, d, c_in]`, `kernel: [kh, kw, kd, c_in, c_out]`;
    /// stride 1, valid padding.
    pub fn conv3d(&mut self, x: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let geom = ConvGeometry::conv3d(self.shape(x), self.shape(kernel))?;
        self.conv_common(x, kernel, bias, geom)
    }

    /// `x: [batch, h, w, c_in]`, `kernel: [kh, kw, c_in, c_out]`; output
    /// `[batch, h * stride, w * stride, c_out]`.
    pub fn conv2d_transpose(&mut self, x: Var, kernel: Var, stride: usize) -> Result<Var> {
        let geom = ConvGeometry::conv2d_transpose(self.shape(x), self.shape(kernel), stride)?;
        let out = conv::conv_transpose_forward(self.value(x), self.value(kernel), &geom);
        let needs = self.needs(x) || self.needs(kernel);
        let shape = geom.input_shape();
        Ok(self.push(shape, out, Op::ConvTranspose { x, kernel, geom }, needs))
    }

    pub fn maxpool3d(&mut self, x: Var) -> Result<Var> {
        let shape = pool::maxpool3d_shape(self.shape(x))?;
        let (out, argmax) = pool::maxpool3d(self.value(x), self.shape(x))?;
        let needs = self.needs(x);
        Ok(self.push(shape, out, Op::MaxPool { x, argmax }, needs))
    }

    /// Batch normalization over all but the trailing channel axis. In
    /// training mode `stats` is updated with the batch moments.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BatchNormStats<T>,
        cfg: BatchNormConfig,
        training: bool,
    ) -> Result<Var> {
        let c = self.shape(gamma).iter().product::<usize>();
        norm::check_input(self.shape(x), c, training)?;
        if self.shape(beta) != [c] || stats.mean.len() != c || stats.var.len() != c {
            return Err(TensorError::mismatch("batchnorm", "parameter lengths disagree"));
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let shape = self.shape(x).to_vec();
        if training {
            let (out, cache) = norm::forward_train(self.value(x), self.value(gamma), self.value(beta), stats, cfg);
            Ok(self.push(shape, out, Op::BatchNorm { x, gamma, beta, cache }, needs))
        } else {
            let eps = T::lit(cfg.epsilon);
            let inv: Vec<T> = stats.var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            let mut xhat = self.value(x).to_vec();
            for row in xhat.chunks_exact_mut(c) {
                for j in 0..c {
                    row[j] = (row[j] - stats.mean[j]) * inv[j];
                }
            }
            let out = norm::forward_infer(self.value(x), self.value(gamma), self.value(beta), stats, cfg);
            let scale = inv.iter().zip(self.value(gamma)).map(|(&i, &g)| i * g).collect();
            Ok(self.push(shape, out, Op::BatchNormInfer { x, gamma, beta, xhat, scale }, needs))
        }
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let last = *self.shape(x).last().unwrap_or(&1);
        let out = kind.forward(self.value(x), last);
        let needs = self.needs(x);
        self.push(self.shape(x).to_vec(), out, Op::Act { x, kind }, needs)
    }

    /// Inverted dropout; identity when not training or when `rate == 0`.
    pub fn dropout(&mut self, x: Var, rate: f64, training: bool, seed: u64) -> Result<Var> {
        dropout::check_rate(rate)?;
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mask = dropout::mask::<T>(self.value(x).len(), rate, seed)?;
        let out = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let needs = self.needs(x);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Dropout { x, mask }, needs))
    }

    /// Mean binary cross-entropy of `sigmoid(x)` against `targets`.
    pub fn bce_with_logits(&mut self, x: Var, targets: &[T]) -> Result<Var> {
        if self.value(x).len() != targets.len() {
            return Err(TensorError::mismatch(
                "bce_with_logits",
                format!("{} logits, {} targets", self.value(x).len(), targets.len()),
            ));
        }
        let l = loss::bce_with_logits(self.value(x), targets);
        let needs = self.needs(x);
        Ok(self.push(Vec::new(), vec![l], Op::BceWithLogits { x, targets: targets.to_vec() }, needs))
    }

    /// Mean softmax cross-entropy of `x: [rows, classes]` against integer labels.
    pub fn softmax_cross_entropy(&mut self, x: Var, labels: &[usize]) -> Result<Var> {
        let (rows, classes) = match self.shape(x) {
            &[r, c] => (r, c),
            s => return Err(TensorError::mismatch("softmax_cross_entropy", format!("expected rank 2, got {s:?}"))),
        };
        if labels.len() != rows || labels.iter().any(|&l| l >= classes) {
            return Err(TensorError::mismatch(
                "softmax_cross_entropy",
                format!("{} labels (max class {classes}) for {rows} rows", labels.len()),
            ));
        }
        let (l, logp) = loss::softmax_cross_entropy(self.value(x), labels, classes);
        let needs = self.needs(x);
        Ok(self.push(Vec::new(), vec![l], Op::SoftmaxXent { x, labels: labels.to_vec(), logp }, needs))
    }

    /// Reverse sweep from the rank-0 `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::Contract(format!("{loss:?} is not on this tape")));
        }
        if !self.node(loss).shape.is_empty() {
            return Err(TensorError::NonScalarLoss(self.node(loss).shape.clone()));
        }
        self.consumed = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(dout) = self.grads[i].take() else { continue };
            let contributions = self.backward_node(i, &dout);
            self.grads[i] = Some(dout);
            for (v, g) in contributions {
                match &mut self.grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, dout: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let mut out = Vec::new();
        let mut emit = |v: Var, g: Vec<T>| {
            if self.needs(v) {
                out.push((v, g));
            }
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, m, k, n } => {
                let (da, db) = linalg::matmul_backward(self.value(a), self.value(b), dout, m, k, n);
                emit(a, da);
                emit(b, db);
            }
            &Op::AddBias { x, bias } => {
                let c = self.shape(bias)[0];
                emit(bias, linalg::bias_grad(dout, c));
                emit(x, dout.to_vec());
            }
            &Op::Add { a, b } => {
                emit(a, dout.to_vec());
                emit(b, dout.to_vec());
            }
            &Op::Sub { a, b } => {
                emit(a, dout.to_vec());
                emit(b, dout.iter().map(|&g| -g).collect());
            }
            &Op::Mul { a, b } => {
                emit(a, dout.iter().zip(self.value(b)).map(|(&g, &v)| g * v).collect());
                emit(b, dout.iter().zip(self.value(a)).map(|(&g, &v)| g * v).collect());
            }
            &Op::Scale { x, factor } => emit(x, dout.iter().map(|&g| g * factor).collect()),
            &Op::Square { x } => {
                let two = T::lit(2.0);
                emit(x, dout.iter().zip(self.value(x)).map(|(&g, &v)| two * g * v).collect());
            }
            &Op::Sum { x } => emit(x, vec![dout[0]; self.value(x).len()]),
            &Op::Mean { x } => {
                let n = self.value(x).len();
                emit(x, vec![dout[0] / T::lit(n as f64); n]);
            }
            &Op::Reshape { x } => emit(x, dout.to_vec()),
            Op::Conv { x, kernel, bias, geom, cols } => {
                let need = [self.needs(*x), self.needs(*kernel), bias.is_some_and(|b| self.needs(b))];
                let g = conv::conv_backward(dout, cols, self.value(*kernel), geom, need);
                if let Some(dx) = g.input {
                    emit(*x, dx);
                }
                if let Some(dk) = g.kernel {
                    emit(*kernel, dk);
                }
                if let (Some(b), Some(db)) = (bias, g.bias) {
                    emit(*b, db);
                }
            }
            Op::ConvTranspose { x, kernel, geom } => {
                let need = [self.needs(*x), self.needs(*kernel)];
                let (dx, dk) = conv::conv_transpose_backward(dout, self.value(*x), self.value(*kernel), geom, need);
                if let Some(dx) = dx {
                    emit(*x, dx);
                }
                if let Some(dk) = dk {
                    emit(*kernel, dk);
                }
            }
            Op::MaxPool { x, argmax } => {
                emit(*x, pool::maxpool_backward(dout, argmax, self.value(*x).len()));
            }
            Op::BatchNorm { x, gamma, beta, cache } => {
                let (dx, dg, db) = norm::backward_train(dout, self.value(*gamma), cache);
                emit(*x, dx);
                emit(*gamma, dg);
                emit(*beta, db);
            }
            Op::BatchNormInfer { x, gamma, beta, xhat, scale } => {
                let c = scale.len();
                let mut dg = vec![T::zero(); c];
                let mut db = vec![T::zero(); c];
                let mut dx = dout.to_vec();
                for ((dxr, dr), hr) in dx.chunks_exact_mut(c).zip(dout.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
                    for j in 0..c {
                        dg[j] = dg[j] + dr[j] * hr[j];
                        db[j] = db[j] + dr[j];
                        dxr[j] = dr[j] * scale[j];
                    }
                }
                emit(*x, dx);
                emit(*gamma, dg);
                emit(*beta, db);
            }
            Op::Act { x, kind } => {
                let last = *node.shape.last().unwrap_or(&1);
                emit(*x, kind.backward(self.value(*x), &node.value, dout, last));
            }
            Op::Dropout { x, mask } => emit(*x, dout.iter().zip(mask).map(|(&g, &m)| g * m).collect()),
            Op::BceWithLogits { x, targets } => {
                let g = loss::bce_with_logits_grad(self.value(*x), targets);
                emit(*x, g.into_iter().map(|v| v * dout[0]).collect());
            }
            Op::SoftmaxXent { x, labels, logp } => {
                let classes = self.shape(*x)[1];
                let g = loss::softmax_cross_entropy_grad(logp, labels, classes);
                emit(*x, g.into_iter().map(|v| v * dout[0]).collect());
            }
        }
        out
    }

    /// Gradient of the last backward sweep with respect to `v`; `None` if `v`
    /// did not require a gradient or the loss does not depend on it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Like [`Tape::grad`] but zero-filled for leaves the loss ignores.
    pub fn grad_or_zeros(&self, v: Var) -> Vec<T> {
        self.grad(v)
            .map(<[T]>::to_vec)
            .unwrap_or_else(|| vec![T::zero(); self.value(v).len()])
    }

    /// Copies the gradient of `v` into `t.grad`.
    pub fn write_grad(&self, v: Var, t: &mut Tensor<T>) -> Result<()> {
        t.set_grad(self.grad_or_zeros(v))
    }
}
