use std::collections::HashMap;
use std::fmt::Write;

use num_traits::{One, Zero};

use crate::bits::Bits;
use crate::lower::{Env, Pc};
use crate::prob::{format_rational, Rational};

pub type NodeId = usize;
pub type BoxId = usize;

/// A location in a component: a plain node, or a call/return port of a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    Node(NodeId),
    /// Entry `entry` of the component called by box `box_`.
    Call {
        box_: BoxId,
        entry: NodeId,
    },
    /// Exit `exit` of the component called by box `box_`.
    Ret {
        box_: BoxId,
        exit: NodeId,
    },
}

impl std::fmt::Display for Loc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Loc::Node(n) => write!(f, "n{n}"),
            Loc::Call { box_, entry } => write!(f, "call(b{box_}, n{entry})"),
            Loc::Ret { box_, exit } => write!(f, "ret(b{box_}, n{exit})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    /// Dedicated entry node; used when the procedure's first command can be
    /// re-entered (a loop at the head of the body) or is empty.
    Entry {
        inputs: Bits,
    },
    At {
        pc: Pc,
        env: Env,
    },
    Exit {
        outputs: Bits,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub src: Loc,
    pub prob: Rational,
    pub dst: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxInfo {
    pub callee: usize,
    /// The unique node whose transition enters this box.
    pub call_node: NodeId,
    pub entry: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Component {
    pub name: String,
    pub nodes: Vec<NodeKind>,
    pub entries: Vec<NodeId>,
    pub exits: Vec<NodeId>,
    pub boxes: Vec<BoxInfo>,
    pub transitions: Vec<Transition>,
}

impl Component {
    pub fn is_exit(&self, n: NodeId) -> bool {
        matches!(self.nodes[n], NodeKind::Exit { .. })
    }

    pub fn exit_outputs(&self, n: NodeId) -> Option<&Bits> {
        match &self.nodes[n] {
            NodeKind::Exit { outputs } => Some(outputs),
            _ => None,
        }
    }

    /// Number of nodes plus box ports.
    pub fn location_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Recursive Markov chain: components with nodes, boxes and probabilistic
/// transitions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Rmc {
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StructureError {
    #[error("component {component}: outgoing probabilities of {src} sum to {sum}")]
    NotStochastic {
        component: String,
        src: String,
        sum: String,
    },
    #[error("component {component}: {what}")]
    Malformed { component: String, what: String },
}

impl Rmc {
    pub fn location_count(&self) -> usize {
        self.components.iter().map(Component::location_count).sum()
    }

    pub fn box_count(&self) -> usize {
        self.components.iter().map(|c| c.boxes.len()).sum()
    }

    /// Checks that every source's outgoing probabilities sum to exactly 1,
    /// that exits have no outgoing and entries no incoming transitions, and
    /// that box ports refer to the callee's entries and exits.
    pub fn check(&self) -> Result<(), StructureError> {
        for comp in &self.components {
            let malformed = |what: String| StructureError::Malformed {
                component: comp.name.clone(),
                what,
            };
            let mut sums: HashMap<Loc, Rational> = HashMap::new();
            for t in &comp.transitions {
                match t.src {
                    Loc::Node(n) if comp.is_exit(n) => {
                        return Err(malformed(format!("exit n{n} has an outgoing transition")))
                    }
                    Loc::Call { .. } => return Err(malformed(format!("{} used as a source", t.src))),
                    _ => {}
                }
                match t.dst {
                    Loc::Node(n) if comp.entries.contains(&n) => {
                        return Err(malformed(format!("entry n{n} has an incoming transition")))
                    }
                    Loc::Ret { .. } => return Err(malformed(format!("{} used as a destination", t.dst))),
                    _ => {}
                }
                for port in [t.src, t.dst] {
                    match port {
                        Loc::Call { box_, entry } => {
                            let b = &comp.boxes[box_];
                            if !self.components[b.callee].entries.contains(&entry) {
                                return Err(malformed(format!("{port} is not a callee entry")));
                            }
                        }
                        Loc::Ret { box_, exit } => {
                            let b = &comp.boxes[box_];
                            if !self.components[b.callee].exits.contains(&exit) {
                                return Err(malformed(format!("{port} is not a callee exit")));
                            }
                        }
                        Loc::Node(_) => {}
                    }
                }
                *sums.entry(t.src).or_insert_with(Rational::zero) += &t.prob;
            }
            for (src, sum) in sums {
                if !sum.is_one() {
                    return Err(StructureError::NotStochastic {
                        component: comp.name.clone(),
                        src: src.to_string(),
                        sum: format_rational(&sum),
                    });
                }
            }
        }
        Ok(())
    }

    /// Human-readable listing of components, nodes, boxes and transitions.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (ci, comp) in self.components.iter().enumerate() {
            writeln!(out, "component {ci} {}", comp.name).unwrap();
            let list = |ns: &[NodeId]| ns.iter().map(|n| format!("n{n}")).collect::<Vec<_>>().join(" ");
            writeln!(out, "  entries {}", list(&comp.entries)).unwrap();
            writeln!(out, "  exits {}", list(&comp.exits)).unwrap();
            for (n, kind) in comp.nodes.iter().enumerate() {
                match kind {
                    NodeKind::Entry { inputs } => writeln!(out, "  node n{n} entry in={inputs}"),
                    NodeKind::At { pc, env } => writeln!(out, "  node n{n} pc={pc} env={env:#x}"),
                    NodeKind::Exit { outputs } => writeln!(out, "  node n{n} exit out={outputs}"),
                }
                .unwrap();
            }
            for (b, info) in comp.boxes.iter().enumerate() {
                writeln!(
                    out,
                    "  box b{b} -> {} from n{}",
                    self.components[info.callee].name, info.call_node
                )
                .unwrap();
            }
            for t in &comp.transitions {
                writeln!(out, "  {} -> {} {}", t.src, t.dst, format_rational(&t.prob)).unwrap();
            }
        }
        out
    }
}
