use num_traits::Num;

use super::bdd::{CompiledDiagram, NodeRef};
use crate::scalar::Scalar;

/// Floor applied to the WMC before taking its logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TapeOp {
    var: u32,
    low: u32,
    high: u32,
}

/// Evaluation tape over a compiled diagram.
///
/// Slot 0 holds the false terminal, slot 1 the true terminal and slot
/// `k + 2` the `k`-th operation; operations are stored children first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WmcGraph {
    n_vars: usize,
    ops: Vec<TapeOp>,
    root: u32,
}

impl WmcGraph {
    pub fn from_diagram(d: &CompiledDiagram) -> WmcGraph {
        let ops = d
            .nodes()
            .iter()
            .map(|n| TapeOp { var: n.var, low: n.low, high: n.high })
            .collect();
        WmcGraph { n_vars: d.n_vars(), ops, root: d.root() as NodeRef }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// True when the graph is the constant-false function.
    pub fn is_unsatisfiable(&self) -> bool {
        self.root == 0
    }

    /// Bottom-up pass; `values` is scratch space reused across calls.
    pub fn forward<T: Num + Clone>(&self, probs: &[T], values: &mut Vec<T>) -> T {
        assert_eq!(probs.len(), self.n_vars, "probability vector length");
        values.clear();
        values.push(T::zero());
        values.push(T::one());
        for op in &self.ops {
            let p = probs[op.var as usize].clone();
            let hi = values[op.high as usize].clone();
            let lo = values[op.low as usize].clone();
            let v = p.clone() * hi + (T::one() - p) * lo;
            values.push(v);
        }
        values[self.root as usize].clone()
    }

    /// WMC and its gradient with respect to every probability.
    pub fn value_and_gradient<T: Scalar>(&self, probs: &[T]) -> (T, Vec<T>) {
        let mut values = Vec::with_capacity(self.ops.len() + 2);
        let w = self.forward(probs, &mut values);
        let mut grad = vec![T::zero(); self.n_vars];
        let mut adj = vec![T::zero(); values.len()];
        adj[self.root as usize] = T::one();
        for (k, op) in self.ops.iter().enumerate().rev() {
            let a = adj[k + 2];
            if a == T::zero() {
                continue;
            }
            let v = op.var as usize;
            let p = probs[v];
            grad[v] += a * (values[op.high as usize] - values[op.low as usize]);
            adj[op.high as usize] += a * p;
            adj[op.low as usize] += a * (T::one() - p);
        }
        (w, grad)
    }
}

/// Weighted model count of `diagram`: the probability that independent
/// atoms with `P(atom i positive) = probs[i]` satisfy it.
pub fn wmc<T: Num + Clone>(diagram: &CompiledDiagram, probs: &[T]) -> T {
    WmcGraph::from_diagram(diagram).forward(probs, &mut Vec::new())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticLoss<T> {
    pub loss: T,
    pub grad: Vec<T>,
    pub wmc: T,
    /// The WMC fell below [`LOG_CLAMP`] and was floored.
    pub clamped: bool,
}

/// `-ln max(wmc, 1e-12)` and its gradient with respect to the atom
/// probabilities.
pub fn semantic_loss<T: Scalar>(graph: &WmcGraph, probs: &[T]) -> SemanticLoss<T> {
    let (w, dw) = graph.value_and_gradient(probs);
    let eps = T::from_f64_lossy(LOG_CLAMP);
    let clamped = !(w >= eps);
    let denom = if clamped { eps } else { w };
    SemanticLoss {
        loss: -denom.ln(),
        grad: dw.into_iter().map(|g| -g / denom).collect(),
        wmc: w,
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::super::compile;
    use super::*;
    use crate::symbolic::{Formula, Literal};

    #[test]
    fn literal_weight() {
        let d = compile(&Formula::Lit(Literal::pos(0)), 1);
        assert_eq!(wmc(&d, &[0.7f64]), 0.7);
    }

    #[test]
    fn tautology_is_one() {
        let d = compile(&Formula::True, 3);
        assert_eq!(wmc(&d, &[0.1f64, 0.2, 0.9]), 1.0);
        let sl = semantic_loss(&WmcGraph::from_diagram(&d), &[0.3f64, 0.4, 0.5]);
        assert_eq!(sl.loss, 0.0);
        assert!(sl.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn half_literal_loss() {
        let d = compile(&Formula::Lit(Literal::pos(0)), 1);
        let sl = semantic_loss(&WmcGraph::from_diagram(&d), &[0.5f64]);
        assert!((sl.loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(sl.grad, vec![-2.0]);
    }

    #[test]
    fn false_is_clamped() {
        let d = compile(&Formula::False, 2);
        let sl = semantic_loss(&WmcGraph::from_diagram(&d), &[0.5f64, 0.5]);
        assert!(sl.clamped);
        assert!((sl.loss - (-(1e-12f64).ln())).abs() < 1e-12);
        assert_eq!(sl.grad, vec![0.0, 0.0]);
    }

    #[test]
    fn skipped_levels_contribute_unit_factor() {
        // a3 only: variables a1, a2 are skipped
        let d = compile(&Formula::Lit(Literal::pos(2)), 3);
        assert!((wmc(&d, &[0.9f64, 0.1, 0.25]) - 0.25).abs() < 1e-15);
    }
}
