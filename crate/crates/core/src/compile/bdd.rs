use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::symbolic::{Context, Formula, Literal, Sign};

/// Reference to a diagram node: `0` is the false terminal, `1` the true
/// terminal, `k >= 2` is `nodes[k - 2]`.
pub type NodeRef = u32;

pub const FALSE: NodeRef = 0;
pub const TRUE: NodeRef = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiagramNode {
    pub var: u32,
    pub low: NodeRef,
    pub high: NodeRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagramError {
    #[error("node {0} has identical children")]
    Redundant(NodeRef),
    #[error("node {0} duplicates an earlier node")]
    Duplicate(NodeRef),
    #[error("node {0} breaks the variable order")]
    Unordered(NodeRef),
    #[error("node {0} references a node that is not below it")]
    BadReference(NodeRef),
}

/// Canonical reduced ordered decision diagram.
///
/// Nodes are stored children-first in depth-first post-order from the root
/// (low branch before high branch), so equivalent formulas produce
/// identical node arrays.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompiledDiagram {
    n_vars: usize,
    nodes: Vec<DiagramNode>,
    root: NodeRef,
}

impl CompiledDiagram {
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn nodes(&self) -> &[DiagramNode] {
        &self.nodes
    }

    pub fn root(&self) -> NodeRef {
        self.root
    }

    pub fn is_false(&self) -> bool {
        self.root == FALSE
    }

    pub fn is_true(&self) -> bool {
        self.root == TRUE
    }

    fn var_of(&self, r: NodeRef) -> usize {
        if r < 2 {
            self.n_vars
        } else {
            self.nodes[r as usize - 2].var as usize
        }
    }

    /// Follows the path selected by `ctx`.
    pub fn eval(&self, ctx: &Context) -> bool {
        let mut r = self.root;
        while r >= 2 {
            let n = self.nodes[r as usize - 2];
            r = if ctx.sign(n.var as usize).is_positive() { n.high } else { n.low };
        }
        r == TRUE
    }

    /// Number of satisfying total assignments over all `n_vars` variables.
    pub fn model_count(&self) -> u128 {
        let mut counts: Vec<u128> = vec![0, 1];
        for (i, n) in self.nodes.iter().enumerate() {
            let id = i as u32 + 2;
            let lift = |c: NodeRef| counts[c as usize] << (self.var_of(c) - n.var as usize - 1);
            let c = lift(n.low) + lift(n.high);
            debug_assert_eq!(counts.len(), id as usize);
            counts.push(c);
        }
        counts[self.root as usize] << self.var_of(self.root)
    }

    /// Checks order, reduction, uniqueness and child-before-parent layout.
    pub fn check(&self) -> Result<(), DiagramError> {
        let mut seen = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let id = i as NodeRef + 2;
            if n.low >= id || n.high >= id {
                return Err(DiagramError::BadReference(id));
            }
            if n.low == n.high {
                return Err(DiagramError::Redundant(id));
            }
            if self.var_of(n.low) <= n.var as usize || self.var_of(n.high) <= n.var as usize {
                return Err(DiagramError::Unordered(id));
            }
            if seen.insert(*n, id).is_some() {
                return Err(DiagramError::Duplicate(id));
            }
        }
        Ok(())
    }

    /// One node per line, `id var low high`, children first, followed by a
    /// `root <id>` line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "{} {} {} {}", i + 2, n.var, n.low, n.high);
        }
        let _ = writeln!(out, "root {}", self.root);
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    And,
    Or,
}

/// Hash-consed node store used during compilation only.
struct Builder {
    n_vars: u32,
    nodes: Vec<DiagramNode>,
    unique: HashMap<DiagramNode, NodeRef>,
    memo: HashMap<(Op, NodeRef, NodeRef), NodeRef>,
}

impl Builder {
    fn new(n_vars: usize) -> Builder {
        Builder {
            n_vars: n_vars as u32,
            nodes: Vec::new(),
            unique: HashMap::new(),
            memo: HashMap::new(),
        }
    }

    fn var(&self, r: NodeRef) -> u32 {
        if r < 2 {
            self.n_vars
        } else {
            self.nodes[r as usize - 2].var
        }
    }

    fn mk(&mut self, var: u32, low: NodeRef, high: NodeRef) -> NodeRef {
        if low == high {
            return low;
        }
        let node = DiagramNode { var, low, high };
        if let Some(&r) = self.unique.get(&node) {
            return r;
        }
        let r = self.nodes.len() as NodeRef + 2;
        self.nodes.push(node);
        self.unique.insert(node, r);
        r
    }

    fn literal(&mut self, l: Literal) -> NodeRef {
        let v = l.atom.0 as u32;
        match l.sign {
            Sign::Positive => self.mk(v, FALSE, TRUE),
            Sign::Negative => self.mk(v, TRUE, FALSE),
        }
    }

    fn cofactors(&self, r: NodeRef, var: u32) -> (NodeRef, NodeRef) {
        if self.var(r) == var {
            let n = self.nodes[r as usize - 2];
            (n.low, n.high)
        } else {
            (r, r)
        }
    }

    fn apply(&mut self, op: Op, f: NodeRef, g: NodeRef) -> NodeRef {
        match (op, f, g) {
            (Op::And, FALSE, _) | (Op::And, _, FALSE) => return FALSE,
            (Op::And, TRUE, x) | (Op::And, x, TRUE) => return x,
            (Op::Or, TRUE, _) | (Op::Or, _, TRUE) => return TRUE,
            (Op::Or, FALSE, x) | (Op::Or, x, FALSE) => return x,
            _ => {}
        }
        if f == g {
            return f;
        }
        let key = if f <= g { (op, f, g) } else { (op, g, f) };
        if let Some(&r) = self.memo.get(&key) {
            return r;
        }
        let v = self.var(f).min(self.var(g));
        let (f0, f1) = self.cofactors(f, v);
        let (g0, g1) = self.cofactors(g, v);
        let low = self.apply(op, f0, g0);
        let high = self.apply(op, f1, g1);
        let r = self.mk(v, low, high);
        self.memo.insert(key, r);
        r
    }

    fn build(&mut self, f: &Formula) -> NodeRef {
        match f {
            Formula::True => TRUE,
            Formula::False => FALSE,
            Formula::Lit(l) => self.literal(*l),
            Formula::And(parts) => parts.iter().fold(TRUE, |acc, p| {
                let r = self.build(p);
                self.apply(Op::And, acc, r)
            }),
            Formula::Or(parts) => parts.iter().fold(FALSE, |acc, p| {
                let r = self.build(p);
                self.apply(Op::Or, acc, r)
            }),
        }
    }

    /// Copies the nodes reachable from `root` in canonical post-order.
    fn extract(&self, root: NodeRef) -> CompiledDiagram {
        let mut map: HashMap<NodeRef, NodeRef> = HashMap::new();
        let mut nodes = Vec::new();
        let mut stack = vec![(root, false)];
        while let Some((r, expanded)) = stack.pop() {
            if r < 2 || map.contains_key(&r) {
                continue;
            }
            let n = self.nodes[r as usize - 2];
            if expanded {
                let remap = |c: NodeRef| if c < 2 { c } else { map[&c] };
                let node = DiagramNode { var: n.var, low: remap(n.low), high: remap(n.high) };
                nodes.push(node);
                map.insert(r, nodes.len() as NodeRef + 1);
            } else {
                stack.push((r, true));
                stack.push((n.high, false));
                stack.push((n.low, false));
            }
        }
        let root = if root < 2 { root } else { map[&root] };
        CompiledDiagram { n_vars: self.n_vars as usize, nodes, root }
    }
}

/// Compiles an NNF formula over `n_vars` atoms into its canonical diagram.
pub fn compile(formula: &Formula, n_vars: usize) -> CompiledDiagram {
    let mut b = Builder::new(n_vars);
    let root = b.build(formula);
    b.extract(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(l: Literal) -> Formula {
        Formula::Lit(l)
    }

    #[test]
    fn single_literal() {
        let d = compile(&lit(Literal::pos(0)), 1);
        assert_eq!(d.nodes(), &[DiagramNode { var: 0, low: FALSE, high: TRUE }]);
        assert_eq!(d.root(), 2);
        assert_eq!(d.model_count(), 1);
    }

    #[test]
    fn false_is_terminal() {
        let d = compile(&Formula::False, 3);
        assert!(d.is_false());
        assert!(d.nodes().is_empty());
        assert_eq!(d.model_count(), 0);
        assert_eq!(compile(&Formula::True, 3).model_count(), 8);
    }

    #[test]
    fn three_of_four() {
        // a1 | (-a1 & a2)
        let f = Formula::or([
            lit(Literal::pos(0)),
            Formula::and([lit(Literal::neg(0)), lit(Literal::pos(1))]),
        ]);
        let d = compile(&f, 2);
        d.check().unwrap();
        assert_eq!(d.model_count(), 3);
        let sat: Vec<u64> = Context::all(2).filter(|c| d.eval(c)).map(|c| c.bits()).collect();
        assert_eq!(sat, vec![0b01, 0b10, 0b11]);
    }

    #[test]
    fn equivalent_formulas_share_structure() {
        // a1 | a2  ==  a1 | (-a1 & a2)
        let f1 = Formula::or([lit(Literal::pos(0)), lit(Literal::pos(1))]);
        let f2 = Formula::or([
            lit(Literal::pos(0)),
            Formula::and([lit(Literal::neg(0)), lit(Literal::pos(1))]),
        ]);
        assert_eq!(compile(&f1, 3), compile(&f2, 3));
    }

    #[test]
    fn dump_format() {
        let d = compile(&lit(Literal::neg(1)), 2);
        assert_eq!(d.dump(), "2 1 1 0\nroot 2\n");
        assert_eq!(compile(&Formula::True, 2).dump(), "root 1\n");
    }

    #[test]
    fn check_flags_broken_diagrams() {
        let bad = CompiledDiagram {
            n_vars: 2,
            nodes: vec![DiagramNode { var: 0, low: TRUE, high: TRUE }],
            root: 2,
        };
        assert_eq!(bad.check(), Err(DiagramError::Redundant(2)));
        let bad = CompiledDiagram {
            n_vars: 2,
            nodes: vec![
                DiagramNode { var: 0, low: FALSE, high: TRUE },
                DiagramNode { var: 1, low: 2, high: TRUE },
            ],
            root: 3,
        };
        assert_eq!(bad.check(), Err(DiagramError::Unordered(3)));
    }
}
