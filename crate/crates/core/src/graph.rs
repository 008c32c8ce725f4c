//! DAG model representation: vertices are tensors, edges are operators.
//!
//! Graphs are immutable values; mutation produces new graphs. Validation
//! never aborts — it reports every violation it finds so the fuzzing loop
//! can treat invalid mutants as data rather than errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct VertexId(pub u32);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    Int8,
    Fp16,
    Fp32,
}

/// Shape and element type of one tensor vertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
}

pub const MAX_RANK: usize = 5;

impl TensorSpec {
    pub fn fp32(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            dtype: Dtype::Fp32,
        }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn well_formed(&self) -> bool {
        !self.shape.is_empty()
            && self.shape.len() <= MAX_RANK
            && self.shape.iter().all(|&d| d >= 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Int8,
    Fp16,
    Fp32,
    MixedInt8Fp16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvVariant {
    Standard,
    Depthwise,
    Separable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RnnDirection {
    Unidirectional,
    Bidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerDepth {
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementwiseOp {
    Relu,
    Add,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

/// Operator attached to an edge. Convolutions and matrix products carry a
/// precision; the `gemm` flag marks convolutions lowered to matrix
/// multiplication, which routes them to the compute-intensive cost tier in
/// the degraded executor (the reference executor ignores it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum OperatorKind {
    GemmConv {
        variant: ConvVariant,
        precision: Precision,
        gemm: bool,
    },
    MatMul {
        precision: Precision,
    },
    Rnn {
        direction: RnnDirection,
    },
    Lstm {
        layers: LayerDepth,
        bidirectional: bool,
    },
    Gru {
        layers: LayerDepth,
        bidirectional: bool,
    },
    Elementwise {
        op: ElementwiseOp,
    },
    Dense,
    Pool {
        kind: PoolKind,
    },
    BatchNorm,
    NonePlaceholder,
}

impl OperatorKind {
    /// Short stable tag used in execution logs and crash tokens.
    pub fn tag(&self) -> &'static str {
        match self {
            Self::GemmConv { .. } => "gemm_conv",
            Self::MatMul { .. } => "matmul",
            Self::Rnn { .. } => "rnn",
            Self::Lstm { .. } => "lstm",
            Self::Gru { .. } => "gru",
            Self::Elementwise {
                op: ElementwiseOp::Relu,
            } => "relu",
            Self::Elementwise {
                op: ElementwiseOp::Add,
            } => "add",
            Self::Elementwise {
                op: ElementwiseOp::Mul,
            } => "mul",
            Self::Dense => "dense",
            Self::Pool { kind: PoolKind::Max } => "max_pool",
            Self::Pool { kind: PoolKind::Avg } => "avg_pool",
            Self::BatchNorm => "batch_norm",
            Self::NonePlaceholder => "none",
        }
    }

    pub fn precision(&self) -> Option<Precision> {
        match self {
            Self::GemmConv { precision, .. } | Self::MatMul { precision } => Some(*precision),
            _ => None,
        }
    }

    pub fn with_precision(&self, precision: Precision) -> Option<Self> {
        match *self {
            Self::GemmConv { variant, gemm, .. } => Some(Self::GemmConv {
                variant,
                precision,
                gemm,
            }),
            Self::MatMul { .. } => Some(Self::MatMul { precision }),
            _ => None,
        }
    }

    /// Whether the operator's correctness degrades under frequency
    /// variation: compute-intensive, high/mixed precision, or time-series.
    pub fn temperature_sensitive(&self) -> bool {
        matches!(
            self,
            Self::GemmConv { .. } | Self::MatMul { .. } | Self::Rnn { .. } | Self::Lstm { .. } | Self::Gru { .. }
        ) || matches!(
            self.precision(),
            Some(Precision::Fp32) | Some(Precision::MixedInt8Fp16)
        )
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, Self::Rnn { .. } | Self::Lstm { .. } | Self::Gru { .. })
    }

    /// Number of sources the operator accepts.
    pub fn arity(&self) -> std::ops::RangeInclusive<usize> {
        match self {
            Self::MatMul { .. } => 1..=2,
            Self::Elementwise { op } => match op {
                ElementwiseOp::Relu => 1..=1,
                ElementwiseOp::Add | ElementwiseOp::Mul => 1..=2,
            },
            _ => 1..=1,
        }
    }
}

/// Shape consistency of one operator against its source and target specs.
///
/// The rules are deliberately minimal: stride-1 zero-padding windows for
/// convolution and pooling, inner-dimension agreement for matrix products,
/// `(time, batch, feature)` tensors for recurrent operators, and a fully
/// connected projection that maps any shape to any shape.
pub fn shape_ok(kind: &OperatorKind, srcs: &[&TensorSpec], dst: &TensorSpec) -> bool {
    if !kind.arity().contains(&srcs.len()) {
        return false;
    }
    if srcs.iter().any(|s| !s.well_formed()) || !dst.well_formed() {
        return false;
    }
    match kind {
        OperatorKind::GemmConv { variant, .. } => {
            let s = &srcs[0].shape;
            let d = &dst.shape;
            if s.len() != 3 || d.len() != 3 {
                return false;
            }
            let (h, w, c) = (s[0], s[1], s[2]);
            let (h2, w2, c2) = (d[0], d[1], d[2]);
            if h2 > h || w2 > w {
                return false;
            }
            let k = h - h2 + 1;
            if w - w2 + 1 != k || k < 1 {
                return false;
            }
            match variant {
                ConvVariant::Depthwise => c2 == c,
                ConvVariant::Standard | ConvVariant::Separable => c2 >= 1,
            }
        }
        OperatorKind::MatMul { .. } => {
            let d = &dst.shape;
            if d.len() != 2 {
                return false;
            }
            match srcs {
                [a] => a.shape.len() == 2 && a.shape[0] == d[0],
                [a, b] => {
                    a.shape.len() == 2
                        && b.shape.len() == 2
                        && a.shape[1] == b.shape[0]
                        && a.shape[0] == d[0]
                        && b.shape[1] == d[1]
                }
                _ => false,
            }
        }
        OperatorKind::Rnn { direction } => {
            recurrent_shape_ok(srcs[0], dst, *direction == RnnDirection::Bidirectional)
        }
        OperatorKind::Lstm { bidirectional, .. } | OperatorKind::Gru { bidirectional, .. } => {
            recurrent_shape_ok(srcs[0], dst, *bidirectional)
        }
        OperatorKind::Elementwise { .. } => srcs.iter().all(|s| s.shape == dst.shape),
        OperatorKind::Dense => true,
        OperatorKind::Pool { .. } => {
            let s = &srcs[0].shape;
            let d = &dst.shape;
            if s.len() != 3 || d.len() != 3 {
                return false;
            }
            if d[0] > s[0] || d[1] > s[1] || d[2] != s[2] {
                return false;
            }
            s[0] - d[0] == s[1] - d[1]
        }
        OperatorKind::BatchNorm | OperatorKind::NonePlaceholder => srcs[0].shape == dst.shape,
    }
}

fn recurrent_shape_ok(src: &TensorSpec, dst: &TensorSpec, bidirectional: bool) -> bool {
    if src.shape.len() != 3 || dst.shape.len() != 3 {
        return false;
    }
    if src.shape[0] != dst.shape[0] || src.shape[1] != dst.shape[1] {
        return false;
    }
    let h = dst.shape[2];
    h >= 1 && (!bidirectional || h % 2 == 0)
}

/// One operator edge: source tensors, target tensor, operator, and the
/// seed from which its weights are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub srcs: Vec<VertexId>,
    pub dst: VertexId,
    #[serde(flatten)]
    pub kind: OperatorKind,
    pub weight_seed: u64,
}

/// The mutable-by-construction graph value. Mutation and loading produce
/// new graphs; nothing edits a graph in place after it is shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub vertices: BTreeMap<VertexId, TensorSpec>,
    pub edges: BTreeMap<EdgeId, Edge>,
    pub inputs: Vec<VertexId>,
    pub output: VertexId,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph contains a cycle or an unproducible vertex")]
    Cyclic,
    #[error("graph failed to parse: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownVertex { edge: EdgeId, vertex: VertexId },
    BadTensorSpec { vertex: VertexId },
    NoInputs,
    OutputNotFound { vertex: VertexId },
    InputNotFound { vertex: VertexId },
    InputHasProducer { vertex: VertexId },
    MultipleProducers { vertex: VertexId },
    MissingProducer { vertex: VertexId },
    Cycle,
    UnreachableFromInputs { vertex: VertexId },
    DoesNotReachOutput { vertex: VertexId },
    ShapeMismatch { edge: EdgeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownVertex { edge, vertex } => {
                write!(f, "edge {edge} references unknown vertex {vertex}")
            }
            Self::BadTensorSpec { vertex } => write!(f, "vertex {vertex} has an invalid spec"),
            Self::NoInputs => write!(f, "graph declares no input vertices"),
            Self::OutputNotFound { vertex } => write!(f, "output vertex {vertex} does not exist"),
            Self::InputNotFound { vertex } => write!(f, "input vertex {vertex} does not exist"),
            Self::InputHasProducer { vertex } => {
                write!(f, "input vertex {vertex} is produced by an edge")
            }
            Self::MultipleProducers { vertex } => {
                write!(f, "vertex {vertex} is produced by more than one edge")
            }
            Self::MissingProducer { vertex } => {
                write!(f, "vertex {vertex} is neither an input nor produced by an edge")
            }
            Self::Cycle => write!(f, "cycle: the edge set cannot be topologically ordered"),
            Self::UnreachableFromInputs { vertex } => {
                write!(f, "vertex {vertex} is unreachable from the inputs")
            }
            Self::DoesNotReachOutput { vertex } => {
                write!(f, "vertex {vertex} does not reach the output")
            }
            Self::ShapeMismatch { edge } => {
                write!(f, "shape: edge {edge} violates its operator's shape rule")
            }
        }
    }
}

impl ModelGraph {
    pub fn new() -> Self {
        Self {
            vertices: BTreeMap::new(),
            edges: BTreeMap::new(),
            inputs: Vec::new(),
            output: VertexId(0),
        }
    }

    pub fn add_vertex(&mut self, spec: TensorSpec) -> VertexId {
        let id = VertexId(self.vertices.keys().next_back().map_or(0, |v| v.0 + 1));
        self.vertices.insert(id, spec);
        id
    }

    pub fn add_edge(
        &mut self,
        srcs: Vec<VertexId>,
        dst: VertexId,
        kind: OperatorKind,
        weight_seed: u64,
    ) -> EdgeId {
        let id = EdgeId(self.edges.keys().next_back().map_or(0, |e| e.0 + 1));
        self.edges.insert(
            id,
            Edge {
                srcs,
                dst,
                kind,
                weight_seed,
            },
        );
        id
    }

    pub fn spec(&self, v: VertexId) -> &TensorSpec {
        &self.vertices[&v]
    }

    /// The edge producing each non-input vertex.
    pub fn producers(&self) -> BTreeMap<VertexId, EdgeId> {
        let mut map = BTreeMap::new();
        for (&eid, edge) in &self.edges {
            map.entry(edge.dst).or_insert(eid);
        }
        map
    }

    /// Checks every structural and shape invariant; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();

        for (&v, spec) in &self.vertices {
            if !spec.well_formed() {
                violations.push(Violation::BadTensorSpec { vertex: v });
            }
        }
        if self.inputs.is_empty() {
            violations.push(Violation::NoInputs);
        }
        for &v in &self.inputs {
            if !self.vertices.contains_key(&v) {
                violations.push(Violation::InputNotFound { vertex: v });
            }
        }
        if !self.vertices.contains_key(&self.output) {
            violations.push(Violation::OutputNotFound { vertex: self.output });
        }
        for (&eid, edge) in &self.edges {
            for &v in edge.srcs.iter().chain(std::iter::once(&edge.dst)) {
                if !self.vertices.contains_key(&v) {
                    violations.push(Violation::UnknownVertex { edge: eid, vertex: v });
                }
            }
        }
        if !violations.is_empty() {
            return violations;
        }

        let inputs: BTreeSet<VertexId> = self.inputs.iter().copied().collect();
        let mut producer_count: BTreeMap<VertexId, usize> = BTreeMap::new();
        for edge in self.edges.values() {
            *producer_count.entry(edge.dst).or_insert(0) += 1;
        }
        for (&v, &n) in &producer_count {
            if inputs.contains(&v) {
                violations.push(Violation::InputHasProducer { vertex: v });
            } else if n > 1 {
                violations.push(Violation::MultipleProducers { vertex: v });
            }
        }
        for &v in self.vertices.keys() {
            if !inputs.contains(&v) && !producer_count.contains_key(&v) {
                violations.push(Violation::MissingProducer { vertex: v });
            }
        }
        if !violations.is_empty() {
            return violations;
        }

        // Kahn over edges doubles as the cycle check: every vertex now has
        // exactly one producer or is an input, so unfired edges mean a cycle.
        match self.topo_order() {
            Ok(order) => {
                debug_assert_eq!(order.len(), self.edges.len());
            }
            Err(_) => {
                violations.push(Violation::Cycle);
                return violations;
            }
        }

        let mut forward: BTreeSet<VertexId> = inputs.clone();
        let mut changed = true;
        while changed {
            changed = false;
            for edge in self.edges.values() {
                if !forward.contains(&edge.dst) && edge.srcs.iter().all(|s| forward.contains(s)) {
                    forward.insert(edge.dst);
                    changed = true;
                }
            }
        }
        let mut backward: BTreeSet<VertexId> = BTreeSet::new();
        backward.insert(self.output);
        let mut changed = true;
        while changed {
            changed = false;
            for edge in self.edges.values() {
                if backward.contains(&edge.dst) {
                    for &s in &edge.srcs {
                        if backward.insert(s) {
                            changed = true;
                        }
                    }
                }
            }
        }
        for &v in self.vertices.keys() {
            if !forward.contains(&v) {
                violations.push(Violation::UnreachableFromInputs { vertex: v });
            }
            if !backward.contains(&v) {
                violations.push(Violation::DoesNotReachOutput { vertex: v });
            }
        }

        for (&eid, edge) in &self.edges {
            let srcs: Vec<&TensorSpec> = edge.srcs.iter().map(|s| self.spec(*s)).collect();
            if !shape_ok(&edge.kind, &srcs, self.spec(edge.dst)) {
                violations.push(Violation::ShapeMismatch { edge: eid });
            }
        }

        violations
    }

    /// Deterministic execution order: every edge appears after all edges
    /// producing its sources, ties broken by ascending edge id.
    pub fn topo_order(&self) -> Result<Vec<EdgeId>, GraphError> {
        let mut available: BTreeSet<VertexId> = self.inputs.iter().copied().collect();
        let mut remaining: BTreeSet<EdgeId> = self.edges.keys().copied().collect();
        let mut order = Vec::with_capacity(self.edges.len());
        loop {
            let next = remaining
                .iter()
                .copied()
                .find(|eid| self.edges[eid].srcs.iter().all(|s| available.contains(s)));
            match next {
                Some(eid) => {
                    remaining.remove(&eid);
                    available.insert(self.edges[&eid].dst);
                    order.push(eid);
                }
                None => {
                    if remaining.is_empty() {
                        return Ok(order);
                    }
                    return Err(GraphError::Cyclic);
                }
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))
    }

    /// Stable content hash of the canonical JSON encoding. Used as the
    /// dedup key for NaN findings and for replay integrity checks.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            use fmt::Write;
            write!(out, "{b:02x}").unwrap();
        }
        out
    }
}

impl Default for ModelGraph {
    fn default() -> Self {
        Self::new()
    }
}

/// Coverage category: a named predicate over operators. A single operator
/// can cover several categories (an fp32 GEMM convolution covers both the
/// convolution and the high-precision category).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    GemmConv,
    MatMul,
    Fp32Precision,
    MixedPrecision,
    Rnn,
    Lstm,
    Gru,
    Relu,
    ElementwiseAdd,
    ElementwiseMul,
    Dense,
    MaxPool,
    AvgPool,
    BatchNorm,
    NonePlaceholder,
    LowPrecision,
}

impl Category {
    /// The documented 16-category universe: seven temperature-sensitive
    /// categories (the two compute-intensive operators, the two elevated
    /// precision modes, and the three time-series operators) plus nine
    /// non-sensitive categories.
    pub fn universe() -> &'static [Category; 16] {
        &[
            Category::GemmConv,
            Category::MatMul,
            Category::Fp32Precision,
            Category::MixedPrecision,
            Category::Rnn,
            Category::Lstm,
            Category::Gru,
            Category::Relu,
            Category::ElementwiseAdd,
            Category::ElementwiseMul,
            Category::Dense,
            Category::MaxPool,
            Category::AvgPool,
            Category::BatchNorm,
            Category::NonePlaceholder,
            Category::LowPrecision,
        ]
    }

    pub fn temperature_sensitive(&self) -> bool {
        matches!(
            self,
            Category::GemmConv
                | Category::MatMul
                | Category::Fp32Precision
                | Category::MixedPrecision
                | Category::Rnn
                | Category::Lstm
                | Category::Gru
        )
    }

    pub fn covers(&self, kind: &OperatorKind) -> bool {
        match self {
            Category::GemmConv => matches!(kind, OperatorKind::GemmConv { .. }),
            Category::MatMul => matches!(kind, OperatorKind::MatMul { .. }),
            Category::Fp32Precision => kind.precision() == Some(Precision::Fp32),
            Category::MixedPrecision => kind.precision() == Some(Precision::MixedInt8Fp16),
            Category::Rnn => matches!(kind, OperatorKind::Rnn { .. }),
            Category::Lstm => matches!(kind, OperatorKind::Lstm { .. }),
            Category::Gru => matches!(kind, OperatorKind::Gru { .. }),
            Category::Relu => {
                matches!(kind, OperatorKind::Elementwise { op: ElementwiseOp::Relu })
            }
            Category::ElementwiseAdd => {
                matches!(kind, OperatorKind::Elementwise { op: ElementwiseOp::Add })
            }
            Category::ElementwiseMul => {
                matches!(kind, OperatorKind::Elementwise { op: ElementwiseOp::Mul })
            }
            Category::Dense => matches!(kind, OperatorKind::Dense),
            Category::MaxPool => matches!(kind, OperatorKind::Pool { kind: PoolKind::Max }),
            Category::AvgPool => matches!(kind, OperatorKind::Pool { kind: PoolKind::Avg }),
            Category::BatchNorm => matches!(kind, OperatorKind::BatchNorm),
            Category::NonePlaceholder => matches!(kind, OperatorKind::NonePlaceholder),
            Category::LowPrecision => matches!(
                kind.precision(),
                Some(Precision::Int8) | Some(Precision::Fp16)
            ),
        }
    }
}

/// Incrementally tracked category coverage of a corpus.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CoverageSet {
    pub covered: BTreeSet<Category>,
}

impl CoverageSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_graph(&mut self, graph: &ModelGraph) {
        for edge in graph.edges.values() {
            for category in Category::universe() {
                if category.covers(&edge.kind) {
                    self.covered.insert(*category);
                }
            }
        }
    }

    /// `(operator coverage, temperature-sensitive coverage)` over a
    /// universe. An empty restricted universe is vacuously fully covered.
    pub fn fractions(&self, universe: &[Category]) -> (f64, f64) {
        let hit = universe
            .iter()
            .filter(|c| self.covered.contains(c))
            .count();
        let sensitive: Vec<&Category> =
            universe.iter().filter(|c| c.temperature_sensitive()).collect();
        let sensitive_hit = sensitive
            .iter()
            .filter(|c| self.covered.contains(c))
            .count();
        let total = if universe.is_empty() {
            1.0
        } else {
            hit as f64 / universe.len() as f64
        };
        let sens = if sensitive.is_empty() {
            1.0
        } else {
            sensitive_hit as f64 / sensitive.len() as f64
        };
        (total, sens)
    }
}

/// Fraction of universe categories exercised by at least one corpus graph,
/// and the same fraction restricted to temperature-sensitive categories.
pub fn coverage(corpus: &[ModelGraph], universe: &[Category]) -> (f64, f64) {
    let mut set = CoverageSet::new();
    for graph in corpus {
        set.add_graph(graph);
    }
    set.fractions(universe)
}
