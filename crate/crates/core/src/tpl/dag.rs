use std::collections::HashSet;

use super::{PlanBuilder, PlanSequence, Token, TplError};
use crate::universe::ToolUniverse;

/// Source of an input: the task's data or an earlier plan instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Producer {
    Task,
    Node(usize),
}

/// `producer` feeds input `port` of instance `consumer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub producer: Producer,
    pub consumer: usize,
    pub port: usize,
}

/// A plan as a graph. `nodes[i]` is the tool index of instance `i`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlanDag {
    pub nodes: Vec<usize>,
    pub edges: Vec<Edge>,
}

impl PlanDag {
    /// Builds a DAG from per-instance dependency lists in port order.
    pub fn from_deps(nodes: Vec<usize>, deps: &[Vec<Producer>]) -> Self {
        let edges = deps
            .iter()
            .enumerate()
            .flat_map(|(consumer, ps)| {
                ps.iter()
                    .enumerate()
                    .map(move |(port, &producer)| Edge { producer, consumer, port })
            })
            .collect();
        Self { nodes, edges }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Producers of `v`, in port order.
    pub fn producers_of(&self, v: usize) -> impl Iterator<Item = Producer> + '_ {
        self.deps_of(v).into_iter()
    }

    pub fn deps_of(&self, v: usize) -> Vec<Producer> {
        let mut es: Vec<&Edge> = self.edges.iter().filter(|e| e.consumer == v).collect();
        es.sort_by_key(|e| e.port);
        es.into_iter().map(|e| e.producer).collect()
    }

    /// Instances consuming the output of `u`, ascending and deduplicated.
    pub fn consumers_of(&self, u: usize) -> Vec<usize> {
        let mut cs: Vec<usize> = self
            .edges
            .iter()
            .filter(|e| e.producer == Producer::Node(u))
            .map(|e| e.consumer)
            .collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    }

    /// Instances whose output nothing consumes.
    pub fn leaves(&self) -> Vec<usize> {
        let mut used = vec![false; self.nodes.len()];
        for e in &self.edges {
            if let Producer::Node(u) = e.producer {
                if u < used.len() {
                    used[u] = true;
                }
            }
        }
        (0..self.nodes.len()).filter(|&v| !used[v]).collect()
    }

    /// Kahn's algorithm, smallest ready index first.
    pub fn topological_order(&self) -> Result<Vec<usize>, TplError> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            if e.consumer >= n {
                return Err(TplError::DanglingEdge(e.consumer));
            }
            if let Producer::Node(u) = e.producer {
                if u >= n {
                    return Err(TplError::DanglingEdge(u));
                }
                indeg[e.consumer] += 1;
                out[u].push(e.consumer);
            }
        }
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &w in &out[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        if order.len() != n {
            return Err(TplError::Cyclic);
        }
        Ok(order)
    }

    /// Checks the structural invariants and returns each instance's
    /// dependency list in port order.
    pub fn check(&self) -> Result<Vec<Vec<Producer>>, TplError> {
        let n = self.nodes.len();
        let mut ports: Vec<Vec<Option<Producer>>> = vec![Vec::new(); n];
        for e in &self.edges {
            if e.consumer >= n {
                return Err(TplError::DanglingEdge(e.consumer));
            }
            if let Producer::Node(u) = e.producer {
                if u >= n {
                    return Err(TplError::DanglingEdge(u));
                }
            }
            let slots = &mut ports[e.consumer];
            if slots.len() <= e.port {
                slots.resize(e.port + 1, None);
            }
            if slots[e.port].is_some() {
                return Err(TplError::PortConflict { consumer: e.consumer, port: e.port });
            }
            slots[e.port] = Some(e.producer);
        }
        let mut deps = Vec::with_capacity(n);
        for (v, slots) in ports.into_iter().enumerate() {
            if slots.is_empty() {
                return Err(TplError::NoDependencies(v));
            }
            let mut list = Vec::with_capacity(slots.len());
            for (port, p) in slots.into_iter().enumerate() {
                let p = p.ok_or(TplError::PortGap { consumer: v, port })?;
                if list.contains(&p) {
                    return Err(TplError::RepeatedProducer { consumer: v });
                }
                list.push(p);
            }
            deps.push(list);
        }
        self.topological_order()?;
        Ok(deps)
    }

    /// The same plan with instance `order[i]` renumbered to `i`.
    pub fn relabel(&self, order: &[usize]) -> PlanDag {
        let mut new_id = vec![0usize; order.len()];
        for (i, &v) in order.iter().enumerate() {
            new_id[v] = i;
        }
        let nodes = order.iter().map(|&v| self.nodes[v]).collect();
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge {
                producer: match e.producer {
                    Producer::Task => Producer::Task,
                    Producer::Node(u) => Producer::Node(new_id[u]),
                },
                consumer: new_id[e.consumer],
                port: e.port,
            })
            .collect();
        edges.sort_by_key(|e| (e.consumer, e.port));
        PlanDag { nodes, edges }
    }
}

struct Emitter<'a> {
    dag: &'a PlanDag,
    deps: &'a [Vec<Producer>],
    consumers: Vec<Vec<usize>>,
    emitted: Vec<bool>,
    latest: Vec<Option<usize>>,
    order: Vec<usize>,
    dead: HashSet<(Vec<bool>, Vec<Option<usize>>)>,
}

impl Emitter<'_> {
    fn emittable(&self, v: usize) -> bool {
        if self.emitted[v] {
            return false;
        }
        for p in &self.deps[v] {
            if let Producer::Node(u) = *p {
                // The token `<tool(u)>` must resolve to `u` itself.
                if !self.emitted[u] || self.latest[self.dag.nodes[u]] != Some(u) {
                    return false;
                }
            }
        }
        // Emitting `v` shadows the current latest instance of its tool.
        if let Some(w) = self.latest[self.dag.nodes[v]] {
            if self.consumers[w].iter().any(|&c| c != v && !self.emitted[c]) {
                return false;
            }
        }
        true
    }

    fn search(&mut self) -> bool {
        if self.order.len() == self.dag.nodes.len() {
            return true;
        }
        let key = (self.emitted.clone(), self.latest.clone());
        if self.dead.contains(&key) {
            return false;
        }
        let mut cands: Vec<usize> = (0..self.dag.nodes.len()).filter(|&v| self.emittable(v)).collect();
        cands.sort_by_key(|&v| (self.dag.nodes[v], v));
        for v in cands {
            let t = self.dag.nodes[v];
            let prev = self.latest[t];
            self.emitted[v] = true;
            self.latest[t] = Some(v);
            self.order.push(v);
            if self.search() {
                return true;
            }
            self.order.pop();
            self.latest[t] = prev;
            self.emitted[v] = false;
        }
        self.dead.insert(key);
        false
    }
}

/// Serializes `dag` as a token sequence.
///
/// Instances are emitted in the lexicographically smallest topological order
/// (keyed by tool index, then instance index) in which every dependency token
/// resolves back to the intended instance. Dependencies are listed in port
/// order.
pub fn encode_plan(dag: &PlanDag) -> Result<PlanSequence, TplError> {
    if dag.is_empty() {
        return Err(TplError::EmptyPlan);
    }
    let deps = dag.check()?;
    let n_tools = dag.nodes.iter().copied().max().unwrap_or(0) + 1;
    let mut consumers = vec![Vec::new(); dag.nodes.len()];
    for (v, ds) in deps.iter().enumerate() {
        for p in ds {
            if let Producer::Node(u) = *p {
                consumers[u].push(v);
            }
        }
    }
    let mut em = Emitter {
        dag,
        deps: &deps,
        consumers,
        emitted: vec![false; dag.nodes.len()],
        latest: vec![None; n_tools],
        order: Vec::with_capacity(dag.nodes.len()),
        dead: HashSet::new(),
    };
    if !em.search() {
        return Err(TplError::Unrepresentable);
    }
    let mut tokens = vec![Token::SoP];
    for &v in &em.order {
        tokens.push(Token::Tool(dag.nodes[v]));
        tokens.push(Token::SoD);
        for p in &deps[v] {
            tokens.push(match *p {
                Producer::Task => Token::TaskDep,
                Producer::Node(u) => Token::Dep(dag.nodes[u]),
            });
        }
        tokens.push(Token::EoD);
    }
    tokens.push(Token::EoP);
    Ok(PlanSequence::new(tokens))
}

/// Parses a complete sequence into a DAG whose instance indices follow
/// sequence order.
pub fn decode_sequence(seq: &PlanSequence, universe: &ToolUniverse) -> Result<PlanDag, TplError> {
    let mut toks = seq.tokens.iter().copied();
    match toks.next() {
        Some(Token::SoP) => {}
        Some(other) => {
            return Err(TplError::Unexpected { pos: 0, expected: "[SoP]", found: other.render(universe) })
        }
        None => return Err(TplError::Incomplete),
    }
    let mut b = PlanBuilder::new(universe.n_tools());
    for tok in toks {
        b.push_token(tok, universe)?;
    }
    if !b.is_finished() {
        return Err(TplError::Incomplete);
    }
    Ok(b.dag())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpl::testutil::small_universe;

    fn idx(u: &ToolUniverse, id: &str) -> usize {
        u.tool_index(id).unwrap()
    }

    #[test]
    fn chain_encodes_like_the_reference_example() {
        let u = small_universe();
        let dag = PlanDag::from_deps(
            vec![idx(&u, "deblur"), idx(&u, "caption")],
            &[vec![Producer::Task], vec![Producer::Node(0)]],
        );
        let seq = encode_plan(&dag).unwrap();
        assert_eq!(
            seq.render(&u),
            "[SoP] [deblur] <SoD> <task> <EoD> [caption] <SoD> <deblur> <EoD> [EoP]"
        );
        assert_eq!(decode_sequence(&seq, &u).unwrap(), dag);
    }

    #[test]
    fn fork_lists_parent_then_children_by_tool() {
        let u = small_universe();
        let dag = PlanDag::from_deps(
            vec![idx(&u, "denoise"), idx(&u, "classify"), idx(&u, "caption")],
            &[vec![Producer::Task], vec![Producer::Node(0)], vec![Producer::Node(0)]],
        );
        let seq = encode_plan(&dag).unwrap();
        assert_eq!(
            seq.render(&u),
            "[SoP] [denoise] <SoD> <task> <EoD> [caption] <SoD> <denoise> <EoD> \
             [classify] <SoD> <denoise> <EoD> [EoP]"
        );
    }

    #[test]
    fn shadowing_forces_a_non_greedy_order() {
        // Two deblur instances; the caption reads the first one, so it must be
        // written before the second deblur shadows it.
        let u = small_universe();
        let (d, c) = (idx(&u, "deblur"), idx(&u, "caption"));
        let dag = PlanDag::from_deps(
            vec![d, d, c],
            &[vec![Producer::Task], vec![Producer::Task], vec![Producer::Node(0)]],
        );
        let seq = encode_plan(&dag).unwrap();
        assert_eq!(
            seq.render(&u),
            "[SoP] [deblur] <SoD> <task> <EoD> [caption] <SoD> <deblur> <EoD> \
             [deblur] <SoD> <task> <EoD> [EoP]"
        );
        let back = decode_sequence(&seq, &u).unwrap();
        assert_eq!(back.nodes, vec![d, c, d]);
    }

    #[test]
    fn a_consumer_of_two_same_tool_instances_is_unrepresentable() {
        let mut u_tools = small_universe().tools().to_vec();
        u_tools.push(crate::tpl::testutil::tool("merge", &["image", "image"], &["image"], "merge"));
        let u = ToolUniverse::new(1, 0, small_universe().kinds.clone(), Default::default(), u_tools).unwrap();
        let (d, m) = (idx(&u, "deblur"), idx(&u, "merge"));
        let dag = PlanDag::from_deps(
            vec![d, d, m],
            &[vec![Producer::Task], vec![Producer::Task], vec![Producer::Node(0), Producer::Node(1)]],
        );
        assert_eq!(encode_plan(&dag), Err(TplError::Unrepresentable));
    }

    #[test]
    fn structural_errors() {
        assert_eq!(encode_plan(&PlanDag::default()), Err(TplError::EmptyPlan));
        let lonely = PlanDag { nodes: vec![0], edges: vec![] };
        assert_eq!(encode_plan(&lonely), Err(TplError::NoDependencies(0)));
        let cyc = PlanDag::from_deps(vec![0, 1], &[vec![Producer::Node(1)], vec![Producer::Node(0)]]);
        assert_eq!(encode_plan(&cyc), Err(TplError::Cyclic));
    }

    #[test]
    fn decode_errors() {
        let u = small_universe();
        let parse = |s: &str| PlanSequence::parse(s, &u).unwrap();
        assert_eq!(decode_sequence(&parse("[SoP] [EoP]"), &u), Err(TplError::EmptyPlan));
        assert!(matches!(
            decode_sequence(&parse("[SoP] [caption] <SoD> <deblur> <EoD> [deblur] <SoD> <task> <EoD> [EoP]"), &u),
            Err(TplError::UnresolvedDependency { .. })
        ));
        assert!(matches!(
            decode_sequence(&parse("[SoP] [deblur] <task> <EoD> [EoP]"), &u),
            Err(TplError::Unexpected { .. })
        ));
        assert!(matches!(
            decode_sequence(&parse("[SoP] [caption] <SoD> <task> <EoD> [deblur] <SoD> <caption> <EoD> [EoP]"), &u),
            Err(TplError::KindMismatch { .. })
        ));
        assert_eq!(
            decode_sequence(&parse("[SoP] [deblur] <SoD> <task> <EoD>"), &u),
            Err(TplError::Incomplete)
        );
    }

    #[test]
    fn self_reference_binds_to_the_previous_instance() {
        let u = small_universe();
        let seq = PlanSequence::parse(
            "[SoP] [deblur] <SoD> <task> <EoD> [deblur] <SoD> <deblur> <EoD> [EoP]",
            &u,
        )
        .unwrap();
        let dag = decode_sequence(&seq, &u).unwrap();
        assert_eq!(dag.deps_of(1), vec![Producer::Node(0)]);
        assert_eq!(encode_plan(&dag).unwrap(), seq);
    }
}
