#![allow(dead_code)]

use catp_core::cost::PriceTable;
use catp_core::tpl::{PlanDag, Producer};
use catp_core::{DataKind, RequiredOutput, TaskInput, TaskSpec, ToolSpec, ToolUniverse};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn tool(id: &str, inputs: &[&str], outputs: &[&str], cap: &str, quality: f64, time_ms: f64) -> ToolSpec {
    ToolSpec {
        id: id.into(),
        inputs: inputs.iter().map(|k| DataKind::new(*k)).collect(),
        outputs: outputs.iter().map(|k| DataKind::new(*k)).collect(),
        capability: cap.into(),
        quality,
        base_time_ms: vec![time_ms],
        cpu_cons_mb: 512.0,
        gpu_cons_mb: 0.0,
        cpu_inst_mb: vec![100.0],
        gpu_inst_mb: vec![0.0],
        noise_sigma: 0.0,
    }
}

/// Single-input image and text tools plus two tools with two inputs.
pub fn mixed_universe() -> ToolUniverse {
    ToolUniverse::new(
        1,
        0,
        vec![DataKind::new("image"), DataKind::new("text")],
        PriceTable::default(),
        vec![
            tool("caption", &["image"], &["text"], "caption", 0.9, 120.0),
            tool("deblur", &["image"], &["image"], "deblur", 0.9, 200.0),
            tool("denoise", &["image"], &["image"], "denoise", 0.8, 90.0),
            tool("fuse", &["image", "text"], &["text"], "fuse", 0.95, 60.0),
            tool("overlay", &["image", "image"], &["image"], "overlay", 0.85, 70.0),
            tool("translate", &["text"], &["text"], "translate", 0.9, 40.0),
        ],
    )
    .unwrap()
}

pub fn task(inputs: &[&str], outputs: &[(&str, &[&str])]) -> TaskSpec {
    TaskSpec {
        id: "task".into(),
        inputs: inputs.iter().map(|k| TaskInput { kind: DataKind::new(*k), size: 1.0 }).collect(),
        required_outputs: outputs
            .iter()
            .map(|(k, chain)| RequiredOutput { kind: DataKind::new(*k), chain: chain.iter().map(|c| c.to_string()).collect() })
            .collect(),
        size_level: 1,
    }
}

/// A random well-wired DAG with `1..=max_nodes` instances whose instance
/// numbering is a random permutation of a topological order.
pub fn random_dag<R: Rng>(u: &ToolUniverse, max_nodes: usize, rng: &mut R) -> PlanDag {
    let n = rng.random_range(1..=max_nodes);
    let mut nodes = Vec::with_capacity(n);
    let mut deps: Vec<Vec<Producer>> = Vec::with_capacity(n);
    while nodes.len() < n {
        let t = rng.random_range(0..u.n_tools());
        let mut ds = Vec::new();
        for kind in &u.tool(t).inputs {
            let mut options: Vec<Producer> =
                (0..nodes.len()).filter(|&j| u.tool(nodes[j]).outputs.contains(kind)).map(Producer::Node).collect();
            options.push(Producer::Task);
            options.retain(|p| !ds.contains(p));
            match options.choose(rng) {
                Some(&p) => ds.push(p),
                None => break,
            }
        }
        // A tool whose ports cannot all be wired yet is drawn again.
        if ds.len() == u.tool(t).inputs.len() {
            nodes.push(t);
            deps.push(ds);
        }
    }
    let dag = PlanDag::from_deps(nodes, &deps);
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    dag.relabel(&order)
}

/// Whether some relabeling of `a`'s instances turns it into `b`.
pub fn isomorphic(a: &PlanDag, b: &PlanDag) -> bool {
    use itertools::Itertools;
    if a.nodes.len() != b.nodes.len() || a.edges.len() != b.edges.len() {
        return false;
    }
    let mut eb = b.edges.clone();
    eb.sort();
    (0..a.nodes.len()).permutations(a.nodes.len()).any(|pi| {
        if (0..a.nodes.len()).any(|v| a.nodes[v] != b.nodes[pi[v]]) {
            return false;
        }
        let mut ea: Vec<_> = a
            .edges
            .iter()
            .map(|e| catp_core::tpl::Edge {
                producer: match e.producer {
                    Producer::Task => Producer::Task,
                    Producer::Node(u) => Producer::Node(pi[u]),
                },
                consumer: pi[e.consumer],
                port: e.port,
            })
            .collect();
        ea.sort();
        ea == eb
    })
}
