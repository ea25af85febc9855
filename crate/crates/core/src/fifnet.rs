//! The flow-in-flow classifier graph.
//!
//! ```text
//! input 1×S×S
//!   conv 3×3×64 + relu
//!   5 × module:
//!     gconv 3×3 depthwise stride 2 + clipped relu ─┐
//!     fif-block                                    │
//!     add ─────────────────────────────────────────┘
//!     fif-block
//!   global average pool (terminal size)
//!   fc 128 + relu
//!   fc num_classes
//! ```
//!
//! A FiF-block splits into two flows, each with its own 1×1 entry conv. The
//! grouped flow runs depthwise 1×3 and 3×1 kernels, the regular flow runs
//! dense 1×3 and 3×1 kernels; each flow concatenates its pair and projects
//! back with a 1×1 exit conv, and the two flows are concatenated again.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::nn::{softmax, Activation, ConvSpec, GraphBuilder, LayerGraph, NodeId, ParamSet, Scalar, Shape, Tensor4};
use crate::render::ConstellationImage;

/// Widths inside one FiF-block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FifBlockSpec {
    pub in_depth: usize,
    /// Output width of each entry 1×1 conv.
    pub flow_width: usize,
    /// Width of each asymmetric conv (1×3 and 3×1) in both flows.
    pub kernel_width: usize,
    /// Output width of each exit 1×1 conv.
    pub exit_width: usize,
}

impl Default for FifBlockSpec {
    fn default() -> Self {
        Self {
            in_depth: 64,
            flow_width: 32,
            kernel_width: 32,
            exit_width: 32,
        }
    }
}

impl FifBlockSpec {
    pub fn validate(&self) -> Result<()> {
        if self.flow_width == 0 || self.kernel_width == 0 || self.exit_width == 0 {
            return Err(invalid("FiF-block widths must be positive"));
        }
        if 2 * self.exit_width != self.in_depth {
            return Err(invalid(format!(
                "the two flows give depth {} but the block input has depth {}",
                2 * self.exit_width,
                self.in_depth
            )));
        }
        if self.kernel_width != self.flow_width {
            return Err(invalid("depthwise kernels need kernel_width == flow_width"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FifNetSpec {
    pub input_size: usize,
    pub num_classes: usize,
    pub module_count: usize,
    pub stem_filters: usize,
    pub fc1_width: usize,
    pub block: FifBlockSpec,
    pub clip_ceiling: f64,
    /// The add inside each module; disabled only for sanity checks.
    pub skip_connections: bool,
}

impl Default for FifNetSpec {
    fn default() -> Self {
        Self::new(200, 8)
    }
}

impl FifNetSpec {
    pub fn new(input_size: usize, num_classes: usize) -> Self {
        Self {
            input_size,
            num_classes,
            module_count: 5,
            stem_filters: 64,
            fc1_width: 128,
            block: FifBlockSpec::default(),
            clip_ceiling: Activation::DEFAULT_CEILING,
            skip_connections: true,
        }
    }

    /// Spatial size after the stem and after each module.
    pub fn spatial_chain(&self) -> Vec<usize> {
        let mut v = alloc::vec![self.input_size];
        for _ in 0..self.module_count {
            let last = *v.last().expect("non-empty");
            v.push(last.div_ceil(2));
        }
        v
    }

    pub fn terminal_size(&self) -> usize {
        *self.spatial_chain().last().expect("non-empty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(invalid("at least two classes are needed"));
        }
        if self.module_count == 0 || self.stem_filters == 0 || self.fc1_width == 0 {
            return Err(invalid("module count, stem filters and fc1 width must be positive"));
        }
        if self.stem_filters != self.block.in_depth {
            return Err(invalid("stem filters must equal the FiF-block input depth"));
        }
        if !(self.clip_ceiling > 0.0) {
            return Err(invalid("clipped ReLU ceiling must be positive"));
        }
        self.block.validate()?;
        let chain = self.spatial_chain();
        if chain.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid(format!(
                "input size {} cannot be halved {} times (spatial chain {:?})",
                self.input_size, self.module_count, chain
            )));
        }
        Ok(())
    }
}

fn fif_block(b: &mut GraphBuilder, p: &str, x: NodeId, s: &FifBlockSpec, clip: Activation) -> Result<NodeId> {
    let relu = Activation::Relu;
    let k = s.kernel_width;

    let ge = b.conv(&format!("{p}.g.entry"), x, ConvSpec::new(s.in_depth, s.flow_width, (1, 1)))?;
    let ge = b.activation(&format!("{p}.g.entry.relu"), ge, relu)?;
    let g13 = b.conv(&format!("{p}.g.1x3"), ge, ConvSpec::depthwise(k, (1, 3)))?;
    let g13 = b.activation(&format!("{p}.g.1x3.clip"), g13, clip)?;
    let g31 = b.conv(&format!("{p}.g.3x1"), ge, ConvSpec::depthwise(k, (3, 1)))?;
    let g31 = b.activation(&format!("{p}.g.3x1.clip"), g31, clip)?;
    let gc = b.concat(&format!("{p}.g.concat"), &[g13, g31])?;
    let gx = b.conv(&format!("{p}.g.exit"), gc, ConvSpec::new(2 * k, s.exit_width, (1, 1)))?;

    let ce = b.conv(&format!("{p}.c.entry"), x, ConvSpec::new(s.in_depth, s.flow_width, (1, 1)))?;
    let ce = b.activation(&format!("{p}.c.entry.relu"), ce, relu)?;
    let c13 = b.conv(&format!("{p}.c.1x3"), ce, ConvSpec::new(s.flow_width, k, (1, 3)))?;
    let c13 = b.activation(&format!("{p}.c.1x3.relu"), c13, relu)?;
    let c31 = b.conv(&format!("{p}.c.3x1"), ce, ConvSpec::new(s.flow_width, k, (3, 1)))?;
    let c31 = b.activation(&format!("{p}.c.3x1.relu"), c31, relu)?;
    let cc = b.concat(&format!("{p}.c.concat"), &[c13, c31])?;
    let cx = b.conv(&format!("{p}.c.exit"), cc, ConvSpec::new(2 * k, s.exit_width, (1, 1)))?;

    let out = b.concat(&format!("{p}.concat"), &[gx, cx])?;
    debug_assert_eq!(b.shape(out).c, s.in_depth);
    Ok(out)
}

/// Builds the classifier graph.
pub fn build_fifnet(spec: &FifNetSpec) -> Result<LayerGraph> {
    spec.validate()?;
    let clip = Activation::ClippedRelu {
        ceiling: spec.clip_ceiling,
    };
    let d = spec.stem_filters;
    let (mut b, input) = GraphBuilder::new(1, spec.input_size, spec.input_size);
    let x = b.conv("stem", input, ConvSpec::new(1, d, (3, 3)))?;
    let mut x = b.activation("stem.relu", x, Activation::Relu)?;
    for m in 1..=spec.module_count {
        let p = format!("m{m}");
        let g = b.conv(&format!("{p}.gconv"), x, ConvSpec::depthwise(d, (3, 3)).stride(2, 2))?;
        let g = b.activation(&format!("{p}.gconv.clip"), g, clip)?;
        let y = fif_block(&mut b, &format!("{p}.b1"), g, &spec.block, clip)?;
        let y = if spec.skip_connections {
            b.add(&format!("{p}.skip"), g, y)?
        } else {
            y
        };
        x = fif_block(&mut b, &format!("{p}.b2"), y, &spec.block, clip)?;
    }
    let x = b.global_avg_pool("pool", x)?;
    let x = b.dense("fc1", x, spec.fc1_width)?;
    let x = b.activation("fc1.relu", x, Activation::Relu)?;
    let x = b.dense("fc2", x, spec.num_classes)?;
    b.finish(x)
}

/// A built network together with the spec that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FifNet {
    pub spec: FifNetSpec,
    pub graph: LayerGraph,
}

impl FifNet {
    pub fn new(spec: FifNetSpec) -> Result<Self> {
        Ok(Self {
            graph: build_fifnet(&spec)?,
            spec,
        })
    }

    pub fn param_count(&self) -> usize {
        self.graph.param_count()
    }

    /// Stacks images into a `(N, 1, S, S)` batch.
    pub fn batch<T: Scalar>(&self, images: &[&ConstellationImage]) -> Result<Tensor4<T>> {
        let s = self.spec.input_size;
        if images.is_empty() {
            return Err(invalid("empty image batch"));
        }
        let mut data = Vec::with_capacity(images.len() * s * s);
        for img in images {
            if img.size != s || img.pixels.len() != s * s {
                return Err(crate::nn::tensor::shape_error("fifnet input", format!("{s}x{s}"), format!("{0}x{0}", img.size)));
            }
            data.extend(img.pixels.iter().map(|&v| T::from_f64(v)));
        }
        Tensor4::from_vec(Shape::new(images.len(), 1, s, s), data)
    }

    /// Logits of shape `(N, num_classes, 1, 1)`.
    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, images: &[&ConstellationImage]) -> Result<Tensor4<T>> {
        self.graph.check_params(params)?;
        self.graph.infer(params, &self.batch(images)?)
    }

    /// Arg-max label and softmax probabilities.
    pub fn predict<T: Scalar>(&self, params: &ParamSet<T>, image: &ConstellationImage) -> Result<(usize, Vec<f64>)> {
        let logits = self.forward(params, &[image])?;
        let z: Vec<f64> = logits.data().iter().map(|v| v.as_f64()).collect();
        let p = softmax(&z);
        Ok((argmax(&p), p))
    }

    pub fn dump(&self) -> String {
        let mut s = format!(
            "# fifnet input {0}x{0}, {1} classes, spatial chain {2:?}\n",
            self.spec.input_size,
            self.spec.num_classes,
            self.spec.spatial_chain()
        );
        s.push_str(&self.graph.dump());
        s
    }
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_indices, Tolerance};
    use crate::nn::{cross_entropy_batch, Op};
    use crate::seed;
    use rand::Rng;

    fn image(size: usize, s: u64) -> ConstellationImage {
        let mut rng = seed::rng(s);
        ConstellationImage {
            size,
            pixels: (0..size * size).map(|_| rng.random_range(0.0..1.0)).collect(),
            raw_peak: 1.0,
            label: None,
            snr_db: None,
        }
    }

    fn zero_image(size: usize) -> ConstellationImage {
        ConstellationImage {
            size,
            pixels: alloc::vec![0.0; size * size],
            raw_peak: 0.0,
            label: None,
            snr_db: None,
        }
    }

    #[test]
    fn spatial_chain_for_paper_sizes() {
        assert_eq!(FifNetSpec::new(200, 8).spatial_chain(), [200, 100, 50, 25, 13, 7]);
        assert_eq!(FifNetSpec::new(100, 8).terminal_size(), 4);
        assert_eq!(FifNetSpec::new(50, 8).terminal_size(), 2);
        assert_eq!(FifNetSpec::new(25, 8).terminal_size(), 1);
        assert!(FifNetSpec::new(16, 8).validate().is_err());
        assert!(FifNetSpec::new(17, 8).validate().is_ok());
    }

    #[test]
    fn full_size_graph_shapes() {
        let net = FifNet::new(FifNetSpec::new(200, 8)).unwrap();
        let g = &net.graph;
        let pool = g.find("pool").unwrap();
        let pre = g.nodes()[pool].inputs[0];
        assert_eq!(g.nodes()[pre].shape, Shape::new(1, 64, 7, 7));
        assert_eq!(g.nodes()[pool].op, Op::GlobalAvgPool { pool: (7, 7) });
        assert_eq!(g.output_shape(), Shape::new(1, 8, 1, 1));
        for (m, size) in [100, 50, 25, 13, 7].into_iter().enumerate() {
            let id = g.find(&format!("m{}.gconv", m + 1)).unwrap();
            assert_eq!(g.nodes()[id].shape, Shape::new(1, 64, size, size));
            let outer = g.find(&format!("m{}.b1.concat", m + 1)).unwrap();
            assert_eq!(g.nodes()[outer].shape.c, 64);
        }
    }

    #[test]
    fn block_composition() {
        let net = FifNet::new(FifNetSpec::new(25, 8)).unwrap();
        let g = &net.graph;
        let in_block = |n: &&crate::nn::Node| n.name.starts_with("m3.b2.");
        let nodes: Vec<_> = g.nodes().iter().filter(in_block).collect();
        let conv = |k: (usize, usize), grouped: bool| {
            nodes
                .iter()
                .filter(|n| matches!(&n.op, Op::Conv { spec, .. } if spec.kernel == k && (spec.groups > 1) == grouped))
                .count()
        };
        assert_eq!(conv((1, 1), false), 4);
        assert_eq!(conv((1, 3), false), 1);
        assert_eq!(conv((3, 1), false), 1);
        assert_eq!(conv((1, 3), true), 1);
        assert_eq!(conv((3, 1), true), 1);
        assert_eq!(nodes.iter().filter(|n| n.op == Op::Concat).count(), 3);
        for n in &nodes {
            if let Op::Conv { spec, .. } = &n.op {
                if spec.kernel == (1, 1) {
                    assert_eq!(spec.out_channels, 32);
                }
            }
        }
    }

    #[test]
    fn parameter_counts() {
        let a = FifNet::new(FifNetSpec::new(200, 8)).unwrap();
        let b = FifNet::new(FifNetSpec::new(200, 8)).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        let by_node = a.graph.param_count_by_node();
        assert_eq!(by_node[0], ("stem".into(), 640));
        let find = |name: &str| by_node.iter().find(|(n, _)| n == name).unwrap().1;
        // depthwise asymmetric pair: weights 32*3 + 32*3, plus biases
        assert_eq!(find("m1.b1.g.1x3") + find("m1.b1.g.3x1"), 192 + 64);
        assert_eq!(find("m1.gconv"), 64 * 9 + 64);
        assert_eq!(find("fc1"), 64 * 128 + 128);
        assert_eq!(find("fc2"), 128 * 8 + 8);
        // independent arithmetic for one block:
        // 4 × 1x1 (64->32) + 2 × dw(32*3+32) + 2 × regular(32*32*3+32)
        let block = 4 * (64 * 32 + 32) + 2 * (32 * 3 + 32) + 2 * (32 * 32 * 3 + 32);
        let module = (64 * 9 + 64) + 2 * block;
        let total = 640 + 5 * module + (64 * 128 + 128) + (128 * 8 + 8);
        assert_eq!(a.param_count(), total);
        assert!(a.dump().contains("m5.b2.concat\tconcat\t64x7x7"));
    }

    #[test]
    fn forward_is_finite_and_deterministic() {
        let net = FifNet::new(FifNetSpec::new(25, 8)).unwrap();
        let params = net.graph.init_params::<f32>(1);
        let z = zero_image(25);
        let img = image(25, 4);
        let logits = net.forward(&params, &[&z, &img, &img]).unwrap();
        assert!(logits.is_finite());
        assert_eq!(logits.shape(), Shape::new(3, 8, 1, 1));
        assert_eq!(logits.sample(1), logits.sample(2));
        let alone = net.forward(&params, &[&img]).unwrap();
        assert_eq!(alone.sample(0), logits.sample(1));
        assert!(net.forward(&params, &[&zero_image(26)]).is_err());
    }

    #[test]
    fn predict_probabilities() {
        let net = FifNet::new(FifNetSpec::new(25, 8)).unwrap();
        let params = net.graph.init_params::<f64>(2);
        let (label, p) = net.predict(&params, &image(25, 9)).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(label < 8);
        let mut z = alloc::vec![0.0; 8];
        z[0] = 10.0;
        let p = softmax(&z);
        assert_eq!(argmax(&p), 0);
        assert!(p[0] > 0.999);
    }

    #[test]
    fn predict_rejects_mismatched_params() {
        let net = FifNet::new(FifNetSpec::new(25, 8)).unwrap();
        let other = FifNet::new(FifNetSpec::new(25, 4)).unwrap();
        let params = other.graph.init_params::<f32>(2);
        assert!(net.predict(&params, &image(25, 1)).is_err());
    }

    #[test]
    fn skip_connections_matter() {
        let with = FifNet::new(FifNetSpec::new(25, 4)).unwrap();
        let without = FifNet::new(FifNetSpec {
            skip_connections: false,
            ..FifNetSpec::new(25, 4)
        })
        .unwrap();
        // identical parameter layout, so the same weights drive both graphs
        assert_eq!(with.graph.params(), without.graph.params());
        let params = with.graph.init_params::<f64>(8);
        let img = image(25, 3);
        let a = with.forward(&params, &[&img]).unwrap();
        let b = without.forward(&params, &[&img]).unwrap();
        let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-9);
    }

    #[test]
    fn fc2_rescaling_keeps_argmax() {
        let net = FifNet::new(FifNetSpec::new(25, 8)).unwrap();
        let mut params = net.graph.init_params::<f64>(5);
        let img = image(25, 6);
        let (before, _) = net.predict(&params, &img).unwrap();
        for e in params.entries.iter_mut().filter(|e| e.name.starts_with("fc2.")) {
            for v in &mut e.values {
                *v *= 3.7;
            }
        }
        let (after, _) = net.predict(&params, &img).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn whole_network_gradcheck() {
        let net = FifNet::new(FifNetSpec::new(25, 2)).unwrap();
        let g = &net.graph;
        let mut params = net.graph.init_params::<f64>(21);
        for e in params.entries.iter_mut().filter(|e| e.name.ends_with(".bias")) {
            for (i, v) in e.values.iter_mut().enumerate() {
                *v = 0.01 * ((i % 7) as f64 - 3.0);
            }
        }
        let imgs = [image(25, 1), image(25, 2)];
        let refs: Vec<&ConstellationImage> = imgs.iter().collect();
        let x: Tensor4<f64> = net.batch(&refs).unwrap();
        let labels = [0usize, 1];
        let acts = g.forward(&params, &x).unwrap();
        let (_, grad) = cross_entropy_batch(acts.output(), &labels, 2.0).unwrap();
        let mut grads = ParamSet::zeros(g.params());
        g.backward(&params, &acts, grad, &mut grads).unwrap();

        let flat = params.flatten();
        let analytic = grads.flatten();
        // a deterministic sample covering every parameter tensor
        let mut idx = Vec::new();
        let mut off = 0;
        let mut rng = seed::rng(77);
        for e in &params.entries {
            let l = e.values.len();
            for _ in 0..3.min(l) {
                idx.push(off + rng.random_range(0..l));
            }
            off += l;
        }
        let mut probe = params.clone();
        let report = check_indices(&flat, &analytic, &idx, Tolerance::default(), |v| {
            probe.unflatten(v);
            let a = g.forward(&probe, &x).unwrap();
            let (l, _) = cross_entropy_batch(a.output(), &labels, 2.0).unwrap();
            (l, g.regime_signature(&a))
        });
        assert!(report.passed(), "{:?}", report.failures);
        assert!(report.checked * 10 >= idx.len() * 8, "{} of {}", report.checked, idx.len());
    }
}
