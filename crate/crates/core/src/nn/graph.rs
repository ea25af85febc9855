//! Static layer graphs with reverse-mode gradients.
//!
//! Nodes are stored in insertion order, which is a topological order because a
//! node may only consume nodes that already exist. Fan-out is allowed; the
//! gradients of all consumers are summed during the backward pass.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rand_distr::{Distribution, Normal};

use super::activation::Activation;
use super::conv::{conv2d_backward_into, conv2d_forward, ConvSpec};
use super::dense::{fully_connected, fully_connected_backward_into};
use super::ops::{add_elementwise, concat_backward, concat_depth, global_avg_pool, global_avg_pool_backward};
use super::tensor::{shape_error, Scalar, Shape, Tensor4};
use crate::error::{invalid, Result};
use crate::seed;

pub type NodeId = usize;
pub type ParamId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input,
    Conv { spec: ConvSpec, weight: ParamId, bias: ParamId },
    Act(Activation),
    Concat,
    Add,
    GlobalAvgPool { pool: (usize, usize) },
    Dense { out_features: usize, weight: ParamId, bias: ParamId },
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Conv { spec, .. } if spec.groups > 1 => "gconv",
            Op::Conv { .. } => "conv",
            Op::Act(Activation::Relu) => "relu",
            Op::Act(Activation::ClippedRelu { .. }) => "clipped_relu",
            Op::Concat => "concat",
            Op::Add => "add",
            Op::GlobalAvgPool { .. } => "avgpool",
            Op::Dense { .. } => "fc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<NodeId>,
    /// Per-sample output shape (`n = 1`).
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub dims: Vec<usize>,
    /// Fan-in for weight initialization; 0 marks a bias.
    pub fan_in: usize,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_bias(&self) -> bool {
        self.fan_in == 0
    }
}

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<T>,
}

/// All trainable parameters of a graph, in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub entries: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn zeros(infos: &[ParamInfo]) -> Self {
        Self {
            entries: infos
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    dims: p.dims.clone(),
                    values: alloc::vec![T::zero(); p.len()],
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|p| p.values.len()).sum()
    }

    pub fn values(&self, id: ParamId) -> &[T] {
        &self.entries[id].values
    }

    pub fn fill_zero(&mut self) {
        for p in &mut self.entries {
            p.values.fill(T::zero());
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            for (x, &y) in a.values.iter_mut().zip(&b.values) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for p in &mut self.entries {
            for v in &mut p.values {
                *v *= k;
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    dims: p.dims.clone(),
                    values: p.values.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Concatenation of every parameter, in order.
    pub fn flatten(&self) -> Vec<T> {
        self.entries.iter().flat_map(|p| p.values.iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[T]) {
        let mut off = 0;
        for p in &mut self.entries {
            let l = p.values.len();
            p.values.copy_from_slice(&flat[off..off + l]);
            off += l;
        }
    }

    /// Name of the first parameter holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|p| p.values.iter().any(|v| !v.is_finite()))
            .map(|p| p.name.as_str())
    }
}

/// Incremental, shape-checked graph construction.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    params: Vec<ParamInfo>,
}

impl GraphBuilder {
    /// Starts a graph whose input samples have shape `channels × h × w`.
    pub fn new(channels: usize, h: usize, w: usize) -> (Self, NodeId) {
        let b = Self {
            nodes: alloc::vec![Node {
                name: "input".to_string(),
                op: Op::Input,
                inputs: Vec::new(),
                shape: Shape::new(1, channels, h, w),
            }],
            params: Vec::new(),
        };
        (b, 0)
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id].shape
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id)
            .ok_or_else(|| invalid(format!("node {id} does not exist")))
    }

    fn check_name(&self, name: &str) -> Result<()> {
        if self.nodes.iter().any(|n| n.name == name) {
            return Err(invalid(format!("duplicate node name `{name}`")));
        }
        Ok(())
    }

    fn push(&mut self, name: &str, op: Op, inputs: Vec<NodeId>, shape: Shape) -> Result<NodeId> {
        self.check_name(name)?;
        self.nodes.push(Node {
            name: name.to_string(),
            op,
            inputs,
            shape,
        });
        Ok(self.nodes.len() - 1)
    }

    fn param(&mut self, name: String, dims: Vec<usize>, fan_in: usize) -> ParamId {
        self.params.push(ParamInfo { name, dims, fan_in });
        self.params.len() - 1
    }

    pub fn conv(&mut self, name: &str, input: NodeId, spec: ConvSpec) -> Result<NodeId> {
        self.check_name(name)?;
        let shape = spec.output_shape(self.node(input)?.shape)?;
        let weight = self.param(format!("{name}.weight"), spec.weight_dims().to_vec(), spec.fan_in());
        let bias = self.param(format!("{name}.bias"), alloc::vec![spec.out_channels], 0);
        self.push(name, Op::Conv { spec, weight, bias }, alloc::vec![input], shape)
    }

    pub fn activation(&mut self, name: &str, input: NodeId, act: Activation) -> Result<NodeId> {
        act.validate()?;
        let shape = self.node(input)?.shape;
        self.push(name, Op::Act(act), alloc::vec![input], shape)
    }

    pub fn concat(&mut self, name: &str, inputs: &[NodeId]) -> Result<NodeId> {
        let first = self.node(*inputs.first().ok_or_else(|| invalid("concat needs inputs"))?)?.shape;
        let mut c = 0;
        for &i in inputs {
            let s = self.node(i)?.shape;
            if (s.h, s.w) != (first.h, first.w) {
                return Err(shape_error("concat", first, s));
            }
            c += s.c;
        }
        self.push(name, Op::Concat, inputs.to_vec(), Shape::new(1, c, first.h, first.w))
    }

    pub fn add(&mut self, name: &str, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.node(a)?.shape, self.node(b)?.shape);
        if sa != sb {
            return Err(shape_error("add", sa, sb));
        }
        self.push(name, Op::Add, alloc::vec![a, b], sa)
    }

    /// Average pooling whose window is the whole input plane.
    pub fn global_avg_pool(&mut self, name: &str, input: NodeId) -> Result<NodeId> {
        let s = self.node(input)?.shape;
        self.push(
            name,
            Op::GlobalAvgPool { pool: (s.h, s.w) },
            alloc::vec![input],
            Shape::new(1, s.c, 1, 1),
        )
    }

    pub fn dense(&mut self, name: &str, input: NodeId, out_features: usize) -> Result<NodeId> {
        if out_features == 0 {
            return Err(invalid("fully connected layer needs at least one output"));
        }
        self.check_name(name)?;
        let inf = self.node(input)?.shape.sample_len();
        let weight = self.param(format!("{name}.weight"), alloc::vec![out_features, inf], inf);
        let bias = self.param(format!("{name}.bias"), alloc::vec![out_features], 0);
        self.push(
            name,
            Op::Dense {
                out_features,
                weight,
                bias,
            },
            alloc::vec![input],
            Shape::new(1, out_features, 1, 1),
        )
    }

    /// Finalizes the graph. Every node must feed `output`.
    pub fn finish(self, output: NodeId) -> Result<LayerGraph> {
        self.node(output)?;
        let mut live = alloc::vec![false; self.nodes.len()];
        live[output] = true;
        for i in (0..self.nodes.len()).rev() {
            if live[i] {
                for &j in &self.nodes[i].inputs {
                    live[j] = true;
                }
            }
        }
        if let Some(i) = live.iter().position(|l| !l) {
            return Err(invalid(format!("node `{}` does not reach the output", self.nodes[i].name)));
        }
        let mut last_use: Vec<usize> = (0..self.nodes.len()).collect();
        for (i, n) in self.nodes.iter().enumerate() {
            for &j in &n.inputs {
                last_use[j] = last_use[j].max(i);
            }
        }
        last_use[output] = usize::MAX;
        Ok(LayerGraph {
            nodes: self.nodes,
            params: self.params,
            output,
            last_use,
        })
    }
}

/// A finished computation graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    nodes: Vec<Node>,
    params: Vec<ParamInfo>,
    output: NodeId,
    last_use: Vec<usize>,
}

/// Node outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct Activations<T> {
    values: Vec<Option<Tensor4<T>>>,
    output: NodeId,
}

impl<T: Scalar> Activations<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor4<T>> {
        self.values.get(id).and_then(|v| v.as_ref())
    }

    pub fn output(&self) -> &Tensor4<T> {
        self.values[self.output].as_ref().expect("output is always retained")
    }
}

impl LayerGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> &[ParamInfo] {
        &self.params
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn input_shape(&self) -> Shape {
        self.nodes[0].shape
    }

    pub fn output_shape(&self) -> Shape {
        self.nodes[self.output].shape
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(ParamInfo::len).sum()
    }

    /// Trainable scalars per node that owns parameters.
    pub fn param_count_by_node(&self) -> Vec<(String, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Conv { weight, bias, .. } | Op::Dense { weight, bias, .. } => {
                    Some((n.name.clone(), self.params[weight].len() + self.params[bias].len()))
                }
                _ => None,
            })
            .collect()
    }

    /// Kaiming-normal weights (`std = sqrt(2 / fan_in)`) and zero biases.
    pub fn init_params<T: Scalar>(&self, rng_seed: u64) -> ParamSet<T> {
        let mut set = ParamSet::zeros(&self.params);
        for (i, (p, info)) in set.entries.iter_mut().zip(&self.params).enumerate() {
            if info.is_bias() {
                continue;
            }
            let std = num_traits::Float::sqrt(2.0 / info.fan_in as f64);
            let normal = Normal::new(0.0, std).expect("finite std");
            let mut rng = seed::rng(seed::derive(rng_seed, &[i as u64]));
            for v in &mut p.values {
                *v = T::from_f64(normal.sample(&mut rng));
            }
        }
        set
    }

    /// Checks that `params` matches this graph's parameter layout.
    pub fn check_params<T: Scalar>(&self, params: &ParamSet<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(shape_error("params", self.params.len(), params.len()));
        }
        for (p, info) in params.entries.iter().zip(&self.params) {
            if p.name != info.name || p.dims != info.dims || p.values.len() != info.len() {
                return Err(shape_error(
                    "params",
                    format!("{} {:?}", info.name, info.dims),
                    format!("{} {:?} ({} values)", p.name, p.dims, p.values.len()),
                ));
            }
        }
        Ok(())
    }

    fn check_input<T: Scalar>(&self, input: &Tensor4<T>) -> Result<()> {
        let s = input.shape();
        let want = self.input_shape().with_batch(s.n);
        if s != want || s.n == 0 {
            return Err(shape_error("graph input", want, s));
        }
        Ok(())
    }

    fn eval_node<T: Scalar>(&self, id: NodeId, params: &ParamSet<T>, values: &[Option<Tensor4<T>>]) -> Result<Tensor4<T>> {
        let node = &self.nodes[id];
        let arg = |k: usize| -> &Tensor4<T> { values[node.inputs[k]].as_ref().expect("input retained until last use") };
        match &node.op {
            Op::Input => unreachable!("input is seeded directly"),
            Op::Conv { spec, weight, bias } => conv2d_forward(arg(0), spec, params.values(*weight), params.values(*bias)),
            Op::Act(a) => Ok(a.forward(arg(0))),
            Op::Concat => {
                let xs: Vec<&Tensor4<T>> = (0..node.inputs.len()).map(arg).collect();
                concat_depth(&xs)
            }
            Op::Add => add_elementwise(arg(0), arg(1)),
            Op::GlobalAvgPool { pool } => global_avg_pool(arg(0), *pool),
            Op::Dense {
                out_features,
                weight,
                bias,
            } => fully_connected(arg(0), *out_features, params.values(*weight), params.values(*bias)),
        }
    }

    /// Forward pass retaining every node output for a backward pass.
    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, input: &Tensor4<T>) -> Result<Activations<T>> {
        self.check_input(input)?;
        let mut values: Vec<Option<Tensor4<T>>> = alloc::vec![None; self.nodes.len()];
        values[0] = Some(input.clone());
        for id in 1..self.nodes.len() {
            values[id] = Some(self.eval_node(id, params, &values)?);
        }
        Ok(Activations {
            values,
            output: self.output,
        })
    }

    /// Forward pass that drops intermediate outputs as soon as they are dead.
    pub fn infer<T: Scalar>(&self, params: &ParamSet<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(input)?;
        let mut values: Vec<Option<Tensor4<T>>> = alloc::vec![None; self.nodes.len()];
        values[0] = Some(input.clone());
        for id in 1..self.nodes.len() {
            values[id] = Some(self.eval_node(id, params, &values)?);
            for &j in &self.nodes[id].inputs {
                if self.last_use[j] == id {
                    values[j] = None;
                }
            }
        }
        Ok(values[self.output].take().expect("output retained"))
    }

    /// Reverse pass. Parameter gradients are added into `grads`.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        acts: &Activations<T>,
        grad_output: Tensor4<T>,
        grads: &mut ParamSet<T>,
    ) -> Result<()> {
        let out_shape = acts.output().shape();
        if grad_output.shape() != out_shape {
            return Err(shape_error("backward", out_shape, grad_output.shape()));
        }
        self.check_params(grads)?;
        let act = |id: NodeId| acts.values[id].as_ref().expect("forward retains all outputs");
        let mut pending: Vec<Option<Tensor4<T>>> = alloc::vec![None; self.nodes.len()];
        pending[self.output] = Some(grad_output);
        let deliver = |pending: &mut Vec<Option<Tensor4<T>>>, to: NodeId, g: Tensor4<T>| match &mut pending[to] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        };
        for id in (1..self.nodes.len()).rev() {
            let Some(g) = pending[id].take() else { continue };
            let node = &self.nodes[id];
            let needs_input = |k: usize| node.inputs[k] != 0;
            match &node.op {
                Op::Input => {}
                Op::Conv { spec, weight, bias } => {
                    let (w, b) = two_mut(&mut grads.entries, *weight, *bias);
                    let gx = conv2d_backward_into(
                        act(node.inputs[0]),
                        spec,
                        params.values(*weight),
                        &g,
                        &mut w.values,
                        &mut b.values,
                        needs_input(0),
                    )?;
                    if let Some(gx) = gx {
                        deliver(&mut pending, node.inputs[0], gx);
                    }
                }
                Op::Act(a) => {
                    let gx = a.backward(act(id), &g);
                    deliver(&mut pending, node.inputs[0], gx);
                }
                Op::Concat => {
                    let channels: Vec<usize> = node.inputs.iter().map(|&i| self.nodes[i].shape.c).collect();
                    for (k, part) in concat_backward(&g, &channels)?.into_iter().enumerate() {
                        deliver(&mut pending, node.inputs[k], part);
                    }
                }
                Op::Add => {
                    deliver(&mut pending, node.inputs[1], g.clone());
                    deliver(&mut pending, node.inputs[0], g);
                }
                Op::GlobalAvgPool { .. } => {
                    let gx = global_avg_pool_backward(&g, act(node.inputs[0]).shape())?;
                    deliver(&mut pending, node.inputs[0], gx);
                }
                Op::Dense { weight, bias, .. } => {
                    let (w, b) = two_mut(&mut grads.entries, *weight, *bias);
                    let gx = fully_connected_backward_into(
                        act(node.inputs[0]),
                        params.values(*weight),
                        &g,
                        &mut w.values,
                        &mut b.values,
                    )?;
                    deliver(&mut pending, node.inputs[0], gx);
                }
            }
        }
        Ok(())
    }

    /// Hash of the linear region of every activation, for kink detection in
    /// finite-difference checks.
    pub fn regime_signature<T: Scalar>(&self, acts: &Activations<T>) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Act(a) = node.op {
                if let Some(t) = acts.get(id) {
                    for &v in t.data() {
                        h ^= a.regime(v) as u64;
                        h = h.wrapping_mul(0x0000_0100_0000_01b3);
                    }
                }
            }
        }
        h
    }

    /// One line per node: name, type, per-sample output shape, inputs and
    /// parameter count.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# name\ttype\toutput(CxHxW)\tinputs\tparams\tdetail");
        for n in &self.nodes {
            let params = match n.op {
                Op::Conv { weight, bias, .. } | Op::Dense { weight, bias, .. } => {
                    self.params[weight].len() + self.params[bias].len()
                }
                _ => 0,
            };
            let inputs: Vec<&str> = n.inputs.iter().map(|&i| self.nodes[i].name.as_str()).collect();
            let detail = match &n.op {
                Op::Conv { spec, .. } => format!(
                    "{}x{} stride {}x{} groups {} {}->{}",
                    spec.kernel.0, spec.kernel.1, spec.stride.0, spec.stride.1, spec.groups, spec.in_channels, spec.out_channels
                ),
                Op::Act(Activation::ClippedRelu { ceiling }) => format!("ceiling {ceiling}"),
                Op::GlobalAvgPool { pool } => format!("pool {}x{}", pool.0, pool.1),
                Op::Dense { out_features, .. } => format!("{} -> {}", self.nodes[n.inputs[0]].shape.sample_len(), out_features),
                _ => String::new(),
            };
            let _ = writeln!(
                s,
                "{}\t{}\t{}x{}x{}\t{}\t{}\t{}",
                n.name,
                n.op.kind(),
                n.shape.c,
                n.shape.h,
                n.shape.w,
                inputs.join(","),
                params,
                detail
            );
        }
        let _ = writeln!(s, "# total trainable parameters: {}", self.param_count());
        s
    }
}

fn two_mut<P>(v: &mut [P], a: usize, b: usize) -> (&mut P, &mut P) {
    assert!(a != b);
    if a < b {
        let (l, r) = v.split_at_mut(b);
        (&mut l[a], &mut r[0])
    } else {
        let (l, r) = v.split_at_mut(a);
        (&mut r[0], &mut l[b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_indices, Tolerance};
    use crate::nn::loss::cross_entropy_batch;
    use rand::Rng;

    fn toy() -> LayerGraph {
        let (mut b, x) = GraphBuilder::new(2, 6, 6);
        let c = b.conv("c1", x, ConvSpec::new(2, 4, (3, 3))).unwrap();
        let r = b.activation("r1", c, Activation::Relu).unwrap();
        let d = b.conv("d1", r, ConvSpec::depthwise(4, (1, 3)).stride(2, 2)).unwrap();
        let q = b.activation("q1", d, Activation::clipped()).unwrap();
        let e = b.conv("e1", q, ConvSpec::new(4, 4, (3, 1))).unwrap();
        let s = b.add("skip", q, e).unwrap();
        let k = b.concat("cat", &[s, q]).unwrap();
        let p = b.global_avg_pool("pool", k).unwrap();
        let f = b.dense("fc", p, 3).unwrap();
        b.finish(f).unwrap()
    }

    fn random_input(shape: Shape, s: u64) -> Tensor4<f64> {
        let mut rng = seed::rng(s);
        Tensor4::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn builder_shapes_and_errors() {
        let g = toy();
        assert_eq!(g.output_shape(), Shape::new(1, 3, 1, 1));
        assert_eq!(g.nodes()[g.find("d1").unwrap()].shape, Shape::new(1, 4, 3, 3));
        let (mut b, x) = GraphBuilder::new(1, 4, 4);
        let c = b.conv("c", x, ConvSpec::new(1, 2, (1, 1))).unwrap();
        assert!(b.add("bad", x, c).is_err());
        assert!(b.conv("c", x, ConvSpec::new(1, 2, (1, 1))).is_err());
        let _dangling = b.conv("dangling", x, ConvSpec::new(1, 2, (1, 1))).unwrap();
        assert!(b.finish(c).is_err());
    }

    #[test]
    fn infer_equals_forward_and_is_batch_consistent() {
        let g = toy();
        let params = g.init_params::<f64>(3);
        let batch = random_input(Shape::new(3, 2, 6, 6), 1);
        let full = g.forward(&params, &batch).unwrap();
        let lean = g.infer(&params, &batch).unwrap();
        assert_eq!(full.output(), &lean);
        for n in 0..3 {
            let one = Tensor4::from_vec(Shape::new(1, 2, 6, 6), batch.sample(n).to_vec()).unwrap();
            let y = g.infer(&params, &one).unwrap();
            for (a, b) in y.data().iter().zip(lean.sample(n)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        let wrong = random_input(Shape::new(1, 2, 5, 6), 1);
        assert!(g.infer(&params, &wrong).is_err());
    }

    #[test]
    fn full_graph_gradcheck() {
        let g = toy();
        let mut params = g.init_params::<f64>(11);
        // small non-zero biases so every bias gradient path is exercised
        for p in &mut params.entries {
            if p.name.ends_with(".bias") {
                for (i, v) in p.values.iter_mut().enumerate() {
                    *v = 0.05 * (i as f64 + 1.0);
                }
            }
        }
        let x = random_input(Shape::new(2, 2, 6, 6), 5);
        let labels = [0usize, 2];
        let acts = g.forward(&params, &x).unwrap();
        let (_, grad) = cross_entropy_batch(acts.output(), &labels, 2.0).unwrap();
        let mut grads = ParamSet::zeros(g.params());
        g.backward(&params, &acts, grad, &mut grads).unwrap();
        let flat = params.flatten();
        let analytic = grads.flatten();
        let idx: Vec<usize> = (0..flat.len()).collect();
        let mut probe = params.clone();
        let report = check_indices(&flat, &analytic, &idx, Tolerance::default(), |v| {
            probe.unflatten(v);
            let a = g.forward(&probe, &x).unwrap();
            let (l, _) = cross_entropy_batch(a.output(), &labels, 2.0).unwrap();
            (l, g.regime_signature(&a))
        });
        assert!(report.passed(), "{:?}", report.failures);
        assert!(report.checked > flat.len() * 9 / 10);
    }

    #[test]
    fn param_accounting() {
        let g = toy();
        let by_node = g.param_count_by_node();
        assert_eq!(by_node[0], ("c1".to_string(), 4 * 2 * 9 + 4));
        assert_eq!(by_node[1], ("d1".to_string(), 4 * 3 + 4));
        assert_eq!(by_node.iter().map(|(_, c)| c).sum::<usize>(), g.param_count());
        assert!(g.dump().contains("skip\tadd"));
    }
}
