//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Nodes are appended in evaluation order, so the node index is already a
//! topological order; the backward pass walks indices downward from the
//! loss and visits every node at most once. Operations are coarse (matrix
//! product, bias broadcast, activation, losses) rather than scalar.
//!
//! The feature prior is a single node: its gradient with respect to the
//! feature matrix is known in closed form, so the Cholesky factorizations
//! never appear on the tape.

use std::collections::BTreeMap;

use super::loss::{check_labels, softmax_rows};
use super::model::{Activation, Model, ModelGrads, ParamKey};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::prior::{
    gp_kl, gp_kl_grad, gram_kernel, hinton_soft_target, hinton_soft_target_grad, l2_feature_distance, FeatureMatrix,
    KernelMatrix, PriorConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Activation(NodeId, Activation),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Hadamard(NodeId, NodeId),
    Sum(NodeId),
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
    },
    SoftTarget {
        logits: NodeId,
        teacher: Matrix,
        temperature: f64,
    },
    SquaredDistance {
        input: NodeId,
        target: Matrix,
    },
    GpKl {
        features: NodeId,
        student: KernelMatrix,
        teacher: KernelMatrix,
        config: PriorConfig,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    param: Option<ParamKey>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let v = self.value(id);
        if v.shape() != (1, 1) {
            return Err(Error::NotScalarLoss(v.rows(), v.cols()));
        }
        Ok(v[(0, 0)])
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op, param: None });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, value: Matrix, key: ParamKey) -> NodeId {
        let id = self.push(value, Op::Leaf);
        self.nodes[id.0].param = Some(key);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Adds a `1 × m` row to every row of an `n × m` node.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::DimensionMismatch(format!(
                "bias {}x{} for input {}x{}",
                bv.rows(),
                bv.cols(),
                xv.rows(),
                xv.cols()
            )));
        }
        let mut v = xv.clone();
        super::model::add_bias(&mut v, bv);
        Ok(self.push(v, Op::AddBias(x, bias)))
    }

    pub fn activation(&mut self, x: NodeId, act: Activation) -> NodeId {
        let v = act.apply(self.value(x));
        self.push(v, Op::Activation(x, act))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::DimensionMismatch("hadamard operands differ in shape".into()));
        }
        let data = av.as_slice().iter().zip(bv.as_slice()).map(|(x, y)| x * y).collect();
        let v = Matrix::from_raw(av.rows(), av.cols(), data);
        Ok(self.push(v, Op::Hadamard(a, b)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Sum of several scalar nodes; `None` when the list is empty.
    pub fn add_all(&mut self, terms: &[NodeId]) -> Result<Option<NodeId>> {
        let mut iter = terms.iter();
        let Some(&first) = iter.next() else {
            return Ok(None);
        };
        let mut acc = first;
        for &t in iter {
            acc = self.add(acc, t)?;
        }
        Ok(Some(acc))
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let z = self.value(logits);
        let loss = super::loss::softmax_cross_entropy(z, labels)?;
        Ok(self.push(
            Matrix::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Temperature soft-target cross-entropy against fixed teacher logits.
    pub fn soft_target(&mut self, logits: NodeId, teacher: &Matrix, temperature: f64) -> Result<NodeId> {
        let loss = hinton_soft_target(self.value(logits), teacher, temperature)?;
        Ok(self.push(
            Matrix::scalar(loss),
            Op::SoftTarget {
                logits,
                teacher: teacher.clone(),
                temperature,
            },
        ))
    }

    /// Mean squared difference to a fixed target.
    pub fn squared_distance(&mut self, input: NodeId, target: &Matrix) -> Result<NodeId> {
        let loss = l2_feature_distance(self.value(input), target)?;
        Ok(self.push(
            Matrix::scalar(loss),
            Op::SquaredDistance {
                input,
                target: target.clone(),
            },
        ))
    }

    /// KL divergence from the GP induced by the node's features to the GP
    /// of a fixed teacher kernel over the same batch.
    pub fn gp_kl(&mut self, features: NodeId, teacher: &KernelMatrix, config: &PriorConfig) -> Result<NodeId> {
        let phi = FeatureMatrix::new(self.value(features).clone())?;
        if phi.batch() != teacher.size() {
            return Err(Error::BatchMismatch(format!(
                "student batch of {} rows against a teacher kernel over {} points",
                phi.batch(),
                teacher.size()
            )));
        }
        let student = gram_kernel(&phi, config)?;
        let kl = gp_kl(&student, teacher)?;
        Ok(self.push(
            Matrix::scalar(kl),
            Op::GpKl {
                features,
                student,
                teacher: teacher.clone(),
                config: config.clone(),
            },
        ))
    }

    /// Propagates `d loss / d node` for every node reachable from `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NotScalarLoss(lv.rows(), lv.cols()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    // leaves keep their gradient for lookup
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(self.value(*b))?;
                    let gb = self.value(*a).matmul_tn(&g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::AddBias(x, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (acc, v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *b, gb)?;
                    accumulate(&mut grads, *x, g.clone())?;
                }
                Op::Activation(x, act) => {
                    let out = &node.value;
                    let data = g
                        .as_slice()
                        .iter()
                        .zip(out.as_slice())
                        .map(|(gv, o)| gv * act.derivative_from_output(*o))
                        .collect();
                    accumulate(&mut grads, *x, Matrix::from_raw(g.rows(), g.cols(), data))?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s))?,
                Op::Hadamard(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = elementwise(&g, bv);
                    let gb = elementwise(&g, av);
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Sum(a) => {
                    let av = self.value(*a);
                    accumulate(&mut grads, *a, Matrix::filled(av.rows(), av.cols(), g[(0, 0)]))?;
                }
                Op::SoftmaxCrossEntropy { logits, labels } => {
                    let z = self.value(*logits);
                    check_labels(labels, z.rows(), z.cols())?;
                    let mut p = softmax_rows(z);
                    for (r, &y) in labels.iter().enumerate() {
                        p[(r, y)] -= 1.0;
                    }
                    let scale = g[(0, 0)] / z.rows() as f64;
                    accumulate(&mut grads, *logits, p.scale(scale))?;
                }
                Op::SoftTarget {
                    logits,
                    teacher,
                    temperature,
                } => {
                    let d = hinton_soft_target_grad(self.value(*logits), teacher, *temperature)?;
                    accumulate(&mut grads, *logits, d.scale(g[(0, 0)]))?;
                }
                Op::SquaredDistance { input, target } => {
                    let x = self.value(*input);
                    let count = (x.rows() * x.cols()) as f64;
                    let d = x.sub(target)?.scale(2.0 * g[(0, 0)] / count);
                    accumulate(&mut grads, *input, d)?;
                }
                Op::GpKl {
                    features,
                    student,
                    teacher,
                    config,
                } => {
                    let phi = FeatureMatrix::new(self.value(*features).clone())?;
                    let d = gp_kl_grad(&phi, student, teacher, config)?;
                    accumulate(&mut grads, *features, d.scale(g[(0, 0)]))?;
                }
            }
        }

        let mut params = BTreeMap::new();
        for (idx, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Some(key), Some(g)) = (node.param, grads[idx].as_ref()) {
                params
                    .entry(key)
                    .and_modify(|acc: &mut Matrix| {
                        acc.add_assign(g).expect("same parameter, same shape");
                    })
                    .or_insert_with(|| g.clone());
            }
        }
        Ok(Gradients { leaves: grads, params })
    }
}

fn elementwise(a: &Matrix, b: &Matrix) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).collect();
    Matrix::from_raw(a.rows(), a.cols(), data)
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) -> Result<()> {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    leaves: Vec<Option<Matrix>>,
    params: BTreeMap<ParamKey, Matrix>,
}

impl Gradients {
    /// Gradient of a leaf node, if the loss depends on it.
    pub fn leaf(&self, id: NodeId) -> Option<&Matrix> {
        self.leaves.get(id.0).and_then(Option::as_ref)
    }

    pub fn param(&self, key: ParamKey) -> Option<&Matrix> {
        self.params.get(&key)
    }

    /// Gradients for every parameter of `model`; parameters the loss does
    /// not reach get zeros.
    pub fn for_model(&self, model: &Model) -> ModelGrads {
        let mut out = ModelGrads::zeros_like(model);
        for (key, g) in &self.params {
            if key.layer < out.layers.len() {
                *out.get_mut(*key) = g.clone();
            }
        }
        out
    }
}
