#![allow(dead_code)]

use llcg::graph::{gen_sbm, Graph, SbmParams};
use llcg::model::{Arch, Model};

pub fn small_sbm(seed: u64) -> Graph {
    gen_sbm(&SbmParams {
        blocks: 4,
        per_block: 40,
        p_intra: 0.15,
        p_inter: 0.02,
        feature_dim: 8,
        noise: 1.0,
        seed,
    })
    .unwrap()
}

pub fn model_for(graph: &Graph, arch: &str, seed: u64) -> Model {
    let arch: Arch = arch.parse().unwrap();
    let mut dims = vec![graph.feature_dim()];
    dims.extend(std::iter::repeat_n(8, arch.len() - 1));
    dims.push(graph.num_classes());
    Model::init(arch, dims, seed).unwrap()
}
