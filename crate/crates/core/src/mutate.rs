//! Model mutation rules.
//!
//! Eight DAG edits: rules 1-7 grow or rewrite temperature-sensitive
//! operators (compute-intensive insertions, precision rewrites, recurrent
//! insertions); rule 8 replaces non-sensitive operators, where the
//! placeholder operator doubles as insert/remove. Every rule yields a
//! graph that validates; insertions that change a tensor shape repair the
//! downstream contract with a fully connected adapter edge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    ConvVariant, EdgeId, ElementwiseOp, LayerDepth, ModelGraph, OperatorKind, PoolKind, Precision,
    RnnDirection, TensorSpec, VertexId,
};
use crate::rng::{hash, SplitMix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationRule {
    GemmConvInsertion,
    MatMulInsertion,
    HighPrecisionReplacement,
    MixPrecisionReplacement,
    RnnInsertion,
    LstmInsertion,
    GruInsertion,
    RandomOperatorReplacement,
}

pub const RULE_COUNT: usize = 8;

impl MutationRule {
    pub const ALL: [MutationRule; RULE_COUNT] = [
        MutationRule::GemmConvInsertion,
        MutationRule::MatMulInsertion,
        MutationRule::HighPrecisionReplacement,
        MutationRule::MixPrecisionReplacement,
        MutationRule::RnnInsertion,
        MutationRule::LstmInsertion,
        MutationRule::GruInsertion,
        MutationRule::RandomOperatorReplacement,
    ];

    pub fn id(&self) -> u8 {
        match self {
            Self::GemmConvInsertion => 1,
            Self::MatMulInsertion => 2,
            Self::HighPrecisionReplacement => 3,
            Self::MixPrecisionReplacement => 4,
            Self::RnnInsertion => 5,
            Self::LstmInsertion => 6,
            Self::GruInsertion => 7,
            Self::RandomOperatorReplacement => 8,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id.checked_sub(1)? as usize).copied()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GemmConvInsertion => "GEMM Convolution Insertion",
            Self::MatMulInsertion => "MatMul Product Insertion",
            Self::HighPrecisionReplacement => "High Precision Operator Replacement",
            Self::MixPrecisionReplacement => "Mix Precision Operator Replacement",
            Self::RnnInsertion => "RNN Insertion",
            Self::LstmInsertion => "LSTM Insertion",
            Self::GruInsertion => "GRU Insertion",
            Self::RandomOperatorReplacement => "Random Operator Replacement",
        }
    }

    /// Rules 1-7 target temperature-sensitive operators; rule 8 targets
    /// the non-sensitive rest.
    pub fn targets_sensitive(&self) -> bool {
        !matches!(self, Self::RandomOperatorReplacement)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MutationError {
    #[error("the graph has no position satisfying this rule")]
    NoEligibleSite,
}

/// A position a rule can act on: a wire between a producing vertex and one
/// source slot of a consuming edge (insertion rules), or an edge
/// (replacement rules).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Wire {
        edge: EdgeId,
        slot: usize,
        from: VertexId,
        to: VertexId,
    },
    Edge {
        edge: EdgeId,
    },
}

fn wires(graph: &ModelGraph) -> impl Iterator<Item = Site> + '_ {
    graph.edges.iter().flat_map(|(&eid, edge)| {
        edge.srcs.iter().enumerate().map(move |(slot, &from)| Site::Wire {
            edge: eid,
            slot,
            from,
            to: edge.dst,
        })
    })
}

/// Non-sensitive replacement candidates in fixed draw order.
const REPLACEMENT_CANDIDATES: [OperatorKind; 8] = [
    OperatorKind::Elementwise { op: ElementwiseOp::Relu },
    OperatorKind::Elementwise { op: ElementwiseOp::Add },
    OperatorKind::Elementwise { op: ElementwiseOp::Mul },
    OperatorKind::Dense,
    OperatorKind::Pool { kind: PoolKind::Max },
    OperatorKind::Pool { kind: PoolKind::Avg },
    OperatorKind::BatchNorm,
    OperatorKind::NonePlaceholder,
];

fn replacement_candidates(graph: &ModelGraph, edge_id: EdgeId) -> Vec<OperatorKind> {
    let edge = &graph.edges[&edge_id];
    let srcs: Vec<&TensorSpec> = edge.srcs.iter().map(|s| graph.spec(*s)).collect();
    let dst = graph.spec(edge.dst);
    REPLACEMENT_CANDIDATES
        .iter()
        .filter(|k| **k != edge.kind && crate::graph::shape_ok(k, &srcs, dst))
        .copied()
        .collect()
}

/// Enumerates every site where the rule, plus shape repair, yields a valid
/// graph. Deterministic order (ascending edge id, then source slot).
pub fn eligible_sites(graph: &ModelGraph, rule: MutationRule) -> Vec<Site> {
    match rule {
        MutationRule::GemmConvInsertion
        | MutationRule::RnnInsertion
        | MutationRule::LstmInsertion
        | MutationRule::GruInsertion => wires(graph)
            .filter(|s| match s {
                Site::Wire { from, .. } => graph.spec(*from).rank() == 3,
                Site::Edge { .. } => false,
            })
            .collect(),
        MutationRule::MatMulInsertion => wires(graph)
            .filter(|s| match s {
                Site::Wire { from, .. } => graph.spec(*from).rank() == 2,
                Site::Edge { .. } => false,
            })
            .collect(),
        MutationRule::HighPrecisionReplacement => graph
            .edges
            .iter()
            .filter(|(_, e)| {
                e.kind
                    .precision()
                    .is_some_and(|p| p != Precision::Fp32)
            })
            .map(|(&eid, _)| Site::Edge { edge: eid })
            .collect(),
        MutationRule::MixPrecisionReplacement => graph
            .edges
            .iter()
            .filter(|(_, e)| {
                e.kind
                    .precision()
                    .is_some_and(|p| p != Precision::MixedInt8Fp16)
            })
            .map(|(&eid, _)| Site::Edge { edge: eid })
            .collect(),
        MutationRule::RandomOperatorReplacement => graph
            .edges
            .iter()
            .filter(|(&eid, e)| {
                !e.kind.temperature_sensitive() && !replacement_candidates(graph, eid).is_empty()
            })
            .map(|(&eid, _)| Site::Edge { edge: eid })
            .collect(),
    }
}

/// Splices an operator onto a wire: the wire's source now feeds the new
/// operator, whose result (adapted back to the original spec if the shape
/// changed) feeds the original consumer slot.
fn splice(
    graph: &mut ModelGraph,
    site: Site,
    kind: OperatorKind,
    out_spec: TensorSpec,
    rng: &mut SplitMix,
) {
    let Site::Wire { edge, slot, from, .. } = site else {
        unreachable!("insertion rules only produce wire sites");
    };
    let from_spec = graph.spec(from).clone();
    let mid = graph.add_vertex(out_spec.clone());
    graph.add_edge(vec![from], mid, kind, rng.next_u64());
    let rewired = if out_spec.shape == from_spec.shape {
        mid
    } else {
        let back = graph.add_vertex(from_spec);
        graph.add_edge(vec![mid], back, OperatorKind::Dense, rng.next_u64());
        back
    };
    graph
        .edges
        .get_mut(&edge)
        .expect("site edge exists")
        .srcs[slot] = rewired;
}

/// Applies one mutation rule; a pure function of `(graph, rule, rng_seed)`.
pub fn apply_rule(
    graph: &ModelGraph,
    rule: MutationRule,
    rng_seed: u64,
) -> Result<ModelGraph, MutationError> {
    let mut rng = SplitMix::new(hash(rng_seed, &[rule.id() as u64]));
    let sites = eligible_sites(graph, rule);
    if sites.is_empty() {
        return Err(MutationError::NoEligibleSite);
    }
    let mut out = graph.clone();

    match rule {
        MutationRule::GemmConvInsertion => {
            let variant = match rng.index(3) {
                0 => ConvVariant::Standard,
                1 => ConvVariant::Depthwise,
                _ => ConvVariant::Separable,
            };
            let site = sites[rng.index(sites.len())];
            let Site::Wire { from, .. } = site else { unreachable!() };
            let s = &graph.spec(from).shape;
            let k = s[0].min(s[1]).min(3);
            let spec = TensorSpec::fp32(&[s[0] - k + 1, s[1] - k + 1, s[2]]);
            let kind = OperatorKind::GemmConv {
                variant,
                precision: Precision::Int8,
                gemm: true,
            };
            splice(&mut out, site, kind, spec, &mut rng);
        }
        MutationRule::MatMulInsertion => {
            let site = sites[rng.index(sites.len())];
            let Site::Wire { from, .. } = site else { unreachable!() };
            let s = &graph.spec(from).shape;
            let spec = TensorSpec::fp32(&[s[0], s[1]]);
            splice(
                &mut out,
                site,
                OperatorKind::MatMul { precision: Precision::Int8 },
                spec,
                &mut rng,
            );
        }
        MutationRule::HighPrecisionReplacement => {
            let Site::Edge { edge } = sites[rng.index(sites.len())] else { unreachable!() };
            let e = out.edges.get_mut(&edge).expect("site edge exists");
            e.kind = e
                .kind
                .with_precision(Precision::Fp32)
                .expect("site filter keeps precision-bearing operators");
        }
        MutationRule::MixPrecisionReplacement => {
            let Site::Edge { edge } = sites[rng.index(sites.len())] else { unreachable!() };
            let e = out.edges.get_mut(&edge).expect("site edge exists");
            e.kind = e
                .kind
                .with_precision(Precision::MixedInt8Fp16)
                .expect("site filter keeps precision-bearing operators");
        }
        MutationRule::RnnInsertion => {
            let direction = if rng.index(2) == 0 {
                RnnDirection::Unidirectional
            } else {
                RnnDirection::Bidirectional
            };
            let site = sites[rng.index(sites.len())];
            let Site::Wire { from, .. } = site else { unreachable!() };
            let s = &graph.spec(from).shape;
            let width = match direction {
                RnnDirection::Unidirectional => s[2],
                RnnDirection::Bidirectional => 2 * s[2],
            };
            let spec = TensorSpec::fp32(&[s[0], s[1], width]);
            splice(&mut out, site, OperatorKind::Rnn { direction }, spec, &mut rng);
        }
        MutationRule::LstmInsertion | MutationRule::GruInsertion => {
            // Single-layer, multi-layer, or bidirectional, drawn uniformly.
            let (layers, bidirectional) = match rng.index(3) {
                0 => (LayerDepth::Single, false),
                1 => (LayerDepth::Multi, false),
                _ => (LayerDepth::Single, true),
            };
            let site = sites[rng.index(sites.len())];
            let Site::Wire { from, .. } = site else { unreachable!() };
            let s = &graph.spec(from).shape;
            let width = if bidirectional { 2 * s[2] } else { s[2] };
            let spec = TensorSpec::fp32(&[s[0], s[1], width]);
            let kind = if rule == MutationRule::LstmInsertion {
                OperatorKind::Lstm { layers, bidirectional }
            } else {
                OperatorKind::Gru { layers, bidirectional }
            };
            splice(&mut out, site, kind, spec, &mut rng);
        }
        MutationRule::RandomOperatorReplacement => {
            let Site::Edge { edge } = sites[rng.index(sites.len())] else { unreachable!() };
            let candidates = replacement_candidates(graph, edge);
            let kind = candidates[rng.index(candidates.len())];
            out.edges.get_mut(&edge).expect("site edge exists").kind = kind;
        }
    }
    Ok(out)
}
