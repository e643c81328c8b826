use std::fmt;

use super::{decode_sequence, PlanDag, PlanSequence, Producer, TplError};
use crate::universe::{TaskSpec, ToolUniverse};

/// One reason a plan is not executable for a task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    /// The sequence does not decode.
    Decode(TplError),
    /// An input port has no producer.
    MissingInput { node: usize, tool: String, port: usize, kind: String },
    /// A port reads task data of a kind the task does not supply.
    TaskKindMissing { node: usize, tool: String, port: usize, kind: String },
    /// No terminal output is left to cover this required output.
    MissingOutput { index: usize, kind: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Decode(e) => write!(f, "decode error: {e}"),
            Diagnostic::MissingInput { node, tool, port, kind } => {
                write!(f, "missing input: instance {node} ({tool}) port {port} needs `{kind}`")
            }
            Diagnostic::TaskKindMissing { node, tool, port, kind } => {
                write!(f, "task does not supply `{kind}` for instance {node} ({tool}) port {port}")
            }
            Diagnostic::MissingOutput { index, kind } => {
                write!(f, "missing output: required output {index} of kind `{kind}` is not produced")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationResult {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationResult {
    pub fn is_valid(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Assigns each required output a distinct `(leaf instance, output slot)`
/// of the same kind. Entries are `None` where nothing is left to assign.
///
/// Since every slot carries exactly one kind, a greedy pass per kind finds a
/// maximum assignment.
pub fn match_required_outputs(dag: &PlanDag, universe: &ToolUniverse, task: &TaskSpec) -> Vec<Option<(usize, usize)>> {
    let mut free: Vec<(usize, usize)> = Vec::new();
    for v in dag.leaves() {
        for slot in 0..universe.tool(dag.nodes[v]).outputs.len() {
            free.push((v, slot));
        }
    }
    let mut taken = vec![false; free.len()];
    task.required_outputs
        .iter()
        .map(|req| {
            let hit = free.iter().enumerate().find(|(i, &(v, slot))| {
                !taken[*i] && universe.tool(dag.nodes[v]).outputs[slot] == req.kind
            });
            hit.map(|(i, &pair)| {
                taken[i] = true;
                pair
            })
        })
        .collect()
}

/// Number of required outputs the plan's terminal outputs cover.
pub fn covered_outputs(dag: &PlanDag, universe: &ToolUniverse, task: &TaskSpec) -> usize {
    match_required_outputs(dag, universe, task).iter().flatten().count()
}

/// Checks that `dag` is executable for `task`: every port is fed, task data
/// is of a kind the task supplies, and the terminal outputs cover every
/// required output.
pub fn validate_dag(dag: &PlanDag, universe: &ToolUniverse, task: &TaskSpec) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for v in 0..dag.len() {
        let tool = universe.tool(dag.nodes[v]);
        let deps = dag.deps_of(v);
        for (port, kind) in tool.inputs.iter().enumerate() {
            match deps.get(port) {
                None => diags.push(Diagnostic::MissingInput {
                    node: v,
                    tool: tool.id.clone(),
                    port,
                    kind: kind.0.clone(),
                }),
                Some(Producer::Task) if !task.provides(kind) => diags.push(Diagnostic::TaskKindMissing {
                    node: v,
                    tool: tool.id.clone(),
                    port,
                    kind: kind.0.clone(),
                }),
                Some(_) => {}
            }
        }
    }
    for (index, hit) in match_required_outputs(dag, universe, task).into_iter().enumerate() {
        if hit.is_none() {
            diags.push(Diagnostic::MissingOutput { index, kind: task.required_outputs[index].kind.0.clone() });
        }
    }
    diags
}

pub fn validate_sequence(seq: &PlanSequence, universe: &ToolUniverse, task: &TaskSpec) -> ValidationResult {
    let diagnostics = match decode_sequence(seq, universe) {
        Err(e) => vec![Diagnostic::Decode(e)],
        Ok(dag) => validate_dag(&dag, universe, task),
    };
    ValidationResult { diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpl::testutil::{small_universe, task};

    fn check(text: &str, t: &TaskSpec) -> ValidationResult {
        let u = small_universe();
        validate_sequence(&PlanSequence::parse(text, &u).unwrap(), &u, t)
    }

    #[test]
    fn valid_chain() {
        let t = task("image", &[("text", &["deblur", "caption"])]);
        let r = check("[SoP] [deblur] <SoD> <task> <EoD> [caption] <SoD> <deblur> <EoD> [EoP]", &t);
        assert!(r.is_valid(), "{:?}", r.diagnostics);
    }

    #[test]
    fn image_tool_behind_text_tool_is_invalid() {
        let t = task("image", &[("text", &["caption"])]);
        let r = check("[SoP] [caption] <SoD> <task> <EoD> [classify] <SoD> <caption> <EoD> [EoP]", &t);
        assert!(matches!(r.diagnostics[..], [Diagnostic::Decode(TplError::KindMismatch { .. })]));
    }

    #[test]
    fn one_of_two_outputs_missing() {
        let t = task("image", &[("text", &["caption"]), ("image", &["deblur"])]);
        let r = check("[SoP] [caption] <SoD> <task> <EoD> [EoP]", &t);
        assert_eq!(r.diagnostics, vec![Diagnostic::MissingOutput { index: 1, kind: "image".into() }]);
    }

    #[test]
    fn consumed_outputs_do_not_count() {
        let t = task("image", &[("image", &["deblur"]), ("text", &["caption"])]);
        let r = check("[SoP] [deblur] <SoD> <task> <EoD> [caption] <SoD> <deblur> <EoD> [EoP]", &t);
        assert_eq!(r.diagnostics, vec![Diagnostic::MissingOutput { index: 0, kind: "image".into() }]);
    }

    #[test]
    fn task_data_of_the_wrong_kind() {
        let t = task("text", &[("text", &["caption"])]);
        let r = check("[SoP] [caption] <SoD> <task> <EoD> [EoP]", &t);
        assert!(matches!(r.diagnostics[..], [Diagnostic::TaskKindMissing { port: 0, .. }]));
    }
}
