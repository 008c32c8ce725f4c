//! Bundled starter models.
//!
//! Five small graphs standing in for deployed perception models, covering
//! the three input modalities (camera frames, time series, voxel grids)
//! plus two plain feed-forward shapes. Kept deliberately lean on
//! temperature-sensitive operators so the mutation rules, not the seeds,
//! are what drives sensitive-operator coverage.

use crate::graph::{
    ConvVariant, ElementwiseOp, ModelGraph, OperatorKind, PoolKind, Precision, RnnDirection,
    TensorSpec,
};
use crate::schedule::SeedPool;

fn conv_int8(variant: ConvVariant) -> OperatorKind {
    OperatorKind::GemmConv {
        variant,
        precision: Precision::Int8,
        gemm: true,
    }
}

/// Camera-frame classifier: convolution, activation, pooling, projection.
pub fn tiny_cnn() -> ModelGraph {
    let mut g = ModelGraph::new();
    let input = g.add_vertex(TensorSpec::fp32(&[12, 12, 3]));
    let conv = g.add_vertex(TensorSpec::fp32(&[10, 10, 3]));
    let act = g.add_vertex(TensorSpec::fp32(&[10, 10, 3]));
    let pooled = g.add_vertex(TensorSpec::fp32(&[9, 9, 3]));
    let feat = g.add_vertex(TensorSpec::fp32(&[6, 6]));
    let out = g.add_vertex(TensorSpec::fp32(&[4]));
    g.add_edge(vec![input], conv, conv_int8(ConvVariant::Standard), 0x11);
    g.add_edge(vec![conv], act, OperatorKind::Elementwise { op: ElementwiseOp::Relu }, 0x12);
    g.add_edge(vec![act], pooled, OperatorKind::Pool { kind: PoolKind::Max }, 0x13);
    g.add_edge(vec![pooled], feat, OperatorKind::Dense, 0x14);
    g.add_edge(vec![feat], out, OperatorKind::Dense, 0x15);
    g.inputs = vec![input];
    g.output = out;
    g
}

/// Time-series head: one recurrent stage over `(time, batch, feature)`.
pub fn recurrent_head() -> ModelGraph {
    let mut g = ModelGraph::new();
    let input = g.add_vertex(TensorSpec::fp32(&[8, 4, 16]));
    let hidden = g.add_vertex(TensorSpec::fp32(&[8, 4, 16]));
    let wired = g.add_vertex(TensorSpec::fp32(&[8, 4, 16]));
    let feat = g.add_vertex(TensorSpec::fp32(&[4, 8]));
    let out = g.add_vertex(TensorSpec::fp32(&[8]));
    g.add_edge(
        vec![input],
        hidden,
        OperatorKind::Rnn { direction: RnnDirection::Unidirectional },
        0x21,
    );
    g.add_edge(vec![hidden], wired, OperatorKind::NonePlaceholder, 0x22);
    g.add_edge(vec![wired], feat, OperatorKind::Dense, 0x23);
    g.add_edge(vec![feat], out, OperatorKind::Dense, 0x24);
    g.inputs = vec![input];
    g.output = out;
    g
}

/// Voxel-grid classifier over an occupancy cube.
pub fn voxel_net() -> ModelGraph {
    let mut g = ModelGraph::new();
    let input = g.add_vertex(TensorSpec::fp32(&[8, 8, 8]));
    let conv = g.add_vertex(TensorSpec::fp32(&[6, 6, 8]));
    let act = g.add_vertex(TensorSpec::fp32(&[6, 6, 8]));
    let norm = g.add_vertex(TensorSpec::fp32(&[6, 6, 8]));
    let feat = g.add_vertex(TensorSpec::fp32(&[8, 8]));
    let out = g.add_vertex(TensorSpec::fp32(&[10]));
    g.add_edge(vec![input], conv, conv_int8(ConvVariant::Standard), 0x31);
    g.add_edge(vec![conv], act, OperatorKind::Elementwise { op: ElementwiseOp::Relu }, 0x32);
    g.add_edge(vec![act], norm, OperatorKind::BatchNorm, 0x33);
    g.add_edge(vec![norm], feat, OperatorKind::Dense, 0x34);
    g.add_edge(vec![feat], out, OperatorKind::Dense, 0x35);
    g.inputs = vec![input];
    g.output = out;
    g
}

/// Two-modality fusion: camera and voxel branches projected to a shared
/// feature space and added elementwise.
pub fn fusion_mlp() -> ModelGraph {
    let mut g = ModelGraph::new();
    let camera = g.add_vertex(TensorSpec::fp32(&[8, 8, 3]));
    let voxels = g.add_vertex(TensorSpec::fp32(&[8, 8, 8]));
    let cam_feat = g.add_vertex(TensorSpec::fp32(&[4, 6]));
    let vox_feat = g.add_vertex(TensorSpec::fp32(&[4, 6]));
    let fused = g.add_vertex(TensorSpec::fp32(&[4, 6]));
    let out = g.add_vertex(TensorSpec::fp32(&[5]));
    g.add_edge(vec![camera], cam_feat, OperatorKind::Dense, 0x41);
    g.add_edge(vec![voxels], vox_feat, OperatorKind::Dense, 0x42);
    g.add_edge(
        vec![cam_feat, vox_feat],
        fused,
        OperatorKind::Elementwise { op: ElementwiseOp::Add },
        0x43,
    );
    g.add_edge(vec![fused], out, OperatorKind::Dense, 0x44);
    g.inputs = vec![camera, voxels];
    g.output = out;
    g
}

/// Plain projection stack with a placeholder wire for replacement rules.
pub fn plain_mlp() -> ModelGraph {
    let mut g = ModelGraph::new();
    let input = g.add_vertex(TensorSpec::fp32(&[6, 6, 3]));
    let feat = g.add_vertex(TensorSpec::fp32(&[8, 8]));
    let scaled = g.add_vertex(TensorSpec::fp32(&[8, 8]));
    let norm = g.add_vertex(TensorSpec::fp32(&[8, 8]));
    let wired = g.add_vertex(TensorSpec::fp32(&[8, 8]));
    let out = g.add_vertex(TensorSpec::fp32(&[3]));
    g.add_edge(vec![input], feat, OperatorKind::Dense, 0x51);
    g.add_edge(vec![feat], scaled, OperatorKind::Elementwise { op: ElementwiseOp::Mul }, 0x52);
    g.add_edge(vec![scaled], norm, OperatorKind::BatchNorm, 0x53);
    g.add_edge(vec![norm], wired, OperatorKind::NonePlaceholder, 0x54);
    g.add_edge(vec![wired], out, OperatorKind::Dense, 0x55);
    g.inputs = vec![input];
    g.output = out;
    g
}

/// The bundled starter set, in fixed order.
pub fn starter_graphs() -> Vec<ModelGraph> {
    vec![
        tiny_cnn(),
        recurrent_head(),
        voxel_net(),
        fusion_mlp(),
        plain_mlp(),
    ]
}

/// Fresh pool seeded with the bundled starters.
pub fn starter_pool() -> SeedPool {
    SeedPool::from_initial(starter_graphs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Category;

    #[test]
    fn all_starters_validate() {
        for (i, g) in starter_graphs().iter().enumerate() {
            let violations = g.validate();
            assert!(violations.is_empty(), "starter {i}: {violations:?}");
        }
    }

    #[test]
    fn starters_execute_on_both_sides() {
        use crate::exec::{run_degraded, run_reference, FaultConfig};
        use crate::tensor::gen_inputs;
        use crate::thermal::{GpuProfile, ThermalScenario};
        let p = GpuProfile::rtx4090d();
        let nominal = ThermalScenario::new(0, "nominal", p.t_nominal, p.t_nominal);
        for (i, g) in starter_graphs().iter().enumerate() {
            let inputs = gen_inputs(g, 7);
            let r = run_reference(g, &inputs);
            assert!(r.is_ok(), "starter {i} reference: {:?}", r.status);
            assert!(!r.outputs_contain_nan(), "starter {i} reference NaN");
            let d = run_degraded(g, &inputs, &nominal, &p, &FaultConfig::default(), 1);
            assert!(d.is_ok(), "starter {i} degraded: {:?}", d.status);
            assert_eq!(r.outputs, d.outputs, "starter {i} nominal equivalence");
        }
    }

    #[test]
    fn starters_cover_few_sensitive_categories() {
        // The mutation rules, not the seeds, must be what reaches full
        // sensitive coverage: the bundle itself stays below half.
        let graphs = starter_graphs();
        let (_, sensitive) = crate::graph::coverage(&graphs, Category::universe());
        assert!(sensitive < 0.5, "starters cover {sensitive}");
        assert!(sensitive > 0.0);
    }

    #[test]
    fn starter_pool_has_at_least_five_models() {
        let pool = starter_pool();
        assert!(pool.len() >= 5);
    }
}
