//! Ideal executor: full-precision operator semantics with no thermal
//! coupling. Stands in for the cloud-side framework of a differential
//! testing pair.

use crate::graph::ModelGraph;
use crate::tensor::Tensor;

use super::ops::{execute_op, OpContext};
use super::weights::{SeededWeights, WeightSource};
use super::{ExecStatus, ExecutionTrace, LogEvent, LogLine};

pub fn run_reference(graph: &ModelGraph, inputs: &[Tensor]) -> ExecutionTrace {
    run_reference_with(graph, inputs, &SeededWeights)
}

/// Reference execution with an explicit weight source; tests use this to
/// pin identity matrices or hand-set kernels.
pub fn run_reference_with(
    graph: &ModelGraph,
    inputs: &[Tensor],
    weights: &dyn WeightSource,
) -> ExecutionTrace {
    let mut log = Vec::new();
    let crash = |reason: &str, log: Vec<LogLine>| ExecutionTrace {
        status: ExecStatus::Crash(reason.to_string()),
        outputs: Vec::new(),
        sim_wall_time: 0.0,
        log,
    };

    let mut values = match bind_inputs(graph, inputs) {
        Ok(v) => v,
        Err(reason) => return crash(&reason, log),
    };
    let order = match graph.topo_order() {
        Ok(o) => o,
        Err(_) => return crash("reference-internal: graph is not orderable", log),
    };

    for edge_id in order {
        let edge = &graph.edges[&edge_id];
        let srcs: Vec<&Tensor> = edge.srcs.iter().map(|s| &values[&s.0]).collect();
        let ctx = OpContext {
            edge_id,
            edge,
            srcs,
            dst_spec: graph.spec(edge.dst),
        };
        match execute_op(&ctx, weights, &|_| false) {
            Ok(out) => {
                log.push(LogLine {
                    op: edge_id,
                    kind: edge.kind.tag().to_string(),
                    event: LogEvent::Exec,
                    t_sim: 0.0,
                    temperature: None,
                    ratio: None,
                });
                values.insert(edge.dst.0, out);
            }
            Err(reason) => {
                log.push(LogLine {
                    op: edge_id,
                    kind: edge.kind.tag().to_string(),
                    event: LogEvent::InternalError,
                    t_sim: 0.0,
                    temperature: None,
                    ratio: None,
                });
                return crash(&format!("reference-internal: {reason}"), log);
            }
        }
    }

    let output = values
        .get(&graph.output.0)
        .cloned()
        .expect("output vertex produced by a topologically ordered run");
    ExecutionTrace {
        status: ExecStatus::Ok,
        outputs: vec![output],
        sim_wall_time: 0.0,
        log,
    }
}

/// Binds input tensors to input vertices in ascending vertex-id order,
/// checking shape agreement.
pub(crate) fn bind_inputs(
    graph: &ModelGraph,
    inputs: &[Tensor],
) -> Result<std::collections::BTreeMap<u32, Tensor>, String> {
    let mut sorted = graph.inputs.clone();
    sorted.sort();
    if sorted.len() != inputs.len() {
        return Err(format!(
            "input-mismatch: graph has {} inputs, got {}",
            sorted.len(),
            inputs.len()
        ));
    }
    let mut values = std::collections::BTreeMap::new();
    for (v, tensor) in sorted.iter().zip(inputs) {
        if graph.spec(*v).shape != tensor.spec.shape {
            return Err(format!(
                "input-mismatch: vertex {v} expects {:?}, got {:?}",
                graph.spec(*v).shape,
                tensor.spec.shape
            ));
        }
        values.insert(v.0, tensor.clone());
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::PinnedWeights;
    use crate::graph::{OperatorKind, TensorSpec};

    #[test]
    fn identity_dense_graph_reproduces_input() {
        let mut g = ModelGraph::new();
        let a = g.add_vertex(TensorSpec::fp32(&[4]));
        let b = g.add_vertex(TensorSpec::fp32(&[4]));
        let e = g.add_edge(vec![a], b, OperatorKind::Dense, 3);
        g.inputs = vec![a];
        g.output = b;
        let mut identity = vec![0.0f32; 16];
        for i in 0..4 {
            identity[i * 4 + i] = 1.0;
        }
        let x = Tensor::new(TensorSpec::fp32(&[4]), vec![0.1, -0.5, 2.0, 0.0]).unwrap();
        let weights = PinnedWeights::new().pin(e, identity);
        let trace = run_reference_with(&g, &[x.clone()], &weights);
        assert!(trace.is_ok());
        assert_eq!(trace.outputs[0].data, x.data);
        assert_eq!(trace.log.len(), 1);
    }

    #[test]
    fn input_mismatch_reports_crash_not_panic() {
        let mut g = ModelGraph::new();
        let a = g.add_vertex(TensorSpec::fp32(&[4]));
        let b = g.add_vertex(TensorSpec::fp32(&[4]));
        g.add_edge(vec![a], b, OperatorKind::Dense, 3);
        g.inputs = vec![a];
        g.output = b;
        let wrong = Tensor::new(TensorSpec::fp32(&[5]), vec![0.0; 5]).unwrap();
        let trace = run_reference(&g, &[wrong]);
        assert!(matches!(trace.status, ExecStatus::Crash(ref r) if r.contains("input-mismatch")));
        assert!(trace.outputs.is_empty());
    }

    #[test]
    fn outputs_match_output_spec() {
        let mut g = ModelGraph::new();
        let a = g.add_vertex(TensorSpec::fp32(&[2, 3]));
        let b = g.add_vertex(TensorSpec::fp32(&[2, 5]));
        g.add_edge(
            vec![a],
            b,
            OperatorKind::MatMul { precision: crate::graph::Precision::Int8 },
            17,
        );
        g.inputs = vec![a];
        g.output = b;
        let x = Tensor::new(TensorSpec::fp32(&[2, 3]), vec![0.5; 6]).unwrap();
        let trace = run_reference(&g, &[x]);
        assert!(trace.is_ok());
        assert_eq!(trace.outputs[0].spec.shape, vec![2, 5]);
        assert_eq!(trace.sim_wall_time, 0.0);
    }
}
