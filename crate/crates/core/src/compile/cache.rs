use std::collections::HashMap;
use std::sync::Arc;

use super::bdd::{compile, CompiledDiagram};
use super::wmc::WmcGraph;
use crate::rng::fnv1a64;
use crate::symbolic::{abduce, render_policy, Policy, Sign};

/// 64-bit content fingerprint of a policy (universe size plus canonical
/// text).
pub fn policy_fingerprint(policy: &Policy) -> u64 {
    let text = format!("{}\n{}", policy.n_atoms(), render_policy(policy));
    fnv1a64(text.as_bytes())
}

/// Compiled abduction result for one (policy, label) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledLabel {
    pub diagram: CompiledDiagram,
    pub graph: WmcGraph,
}

impl CompiledLabel {
    pub fn build(policy: &Policy, label: Sign) -> CompiledLabel {
        let diagram = compile(&abduce(policy, label), policy.n_atoms());
        let graph = WmcGraph::from_diagram(&diagram);
        CompiledLabel { diagram, graph }
    }
}

/// Per-organism memo of compiled label graphs.
///
/// With caching disabled every request recompiles; the counters make the
/// difference observable.
#[derive(Debug, Clone)]
pub struct CompilationCache {
    enabled: bool,
    entries: HashMap<(u64, Sign), Arc<CompiledLabel>>,
    // fingerprint of the most recently seen policy; skips re-rendering
    last: Option<(Policy, u64)>,
    #[cfg(debug_assertions)]
    texts: HashMap<u64, String>,
    compilations: usize,
    requests: usize,
}

impl Default for CompilationCache {
    fn default() -> Self {
        CompilationCache::new(true)
    }
}

impl CompilationCache {
    pub fn new(enabled: bool) -> CompilationCache {
        CompilationCache {
            enabled,
            entries: HashMap::new(),
            last: None,
            #[cfg(debug_assertions)]
            texts: HashMap::new(),
            compilations: 0,
            requests: 0,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// Number of abduce + compile runs performed so far.
    pub fn compilations(&self) -> usize {
        self.compilations
    }

    pub fn requests(&self) -> usize {
        self.requests
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.last = None;
        #[cfg(debug_assertions)]
        self.texts.clear();
    }

    pub fn get_or_compile(&mut self, policy: &Policy, label: Sign) -> Arc<CompiledLabel> {
        self.requests += 1;
        if !self.enabled {
            self.compilations += 1;
            return Arc::new(CompiledLabel::build(policy, label));
        }
        let fp = match &self.last {
            Some((p, fp)) if p == policy => *fp,
            _ => {
                let fp = policy_fingerprint(policy);
                #[cfg(debug_assertions)]
                {
                    let text = render_policy(policy);
                    let stored = self.texts.entry(fp).or_insert_with(|| text.clone());
                    debug_assert_eq!(*stored, text, "policy fingerprint collision");
                }
                self.last = Some((policy.clone(), fp));
                fp
            }
        };
        if let Some(hit) = self.entries.get(&(fp, label)) {
            return Arc::clone(hit);
        }
        self.compilations += 1;
        let entry = Arc::new(CompiledLabel::build(policy, label));
        self.entries.insert((fp, label), Arc::clone(&entry));
        entry
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::parse_policy;

    #[test]
    fn second_lookup_is_a_hit() {
        let p = parse_policy("a1 implies head\na2 implies -head", 2).unwrap();
        let mut cache = CompilationCache::new(true);
        let a = cache.get_or_compile(&p, Sign::Positive);
        let b = cache.get_or_compile(&p, Sign::Positive);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.compilations(), 1);
        cache.get_or_compile(&p, Sign::Negative);
        assert_eq!(cache.compilations(), 2);
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn disabled_cache_always_compiles() {
        let p = parse_policy("a1 implies head", 2).unwrap();
        let mut cache = CompilationCache::new(false);
        let a = cache.get_or_compile(&p, Sign::Positive);
        let b = cache.get_or_compile(&p, Sign::Positive);
        assert_eq!(*a, *b);
        assert_eq!(cache.compilations(), 2);
    }

    #[test]
    fn thousand_shared_label_requests_compile_once() {
        let p = parse_policy("a1, -a3 implies head\na2 implies -head\na4 implies head", 4).unwrap();
        let mut cache = CompilationCache::new(true);
        for _ in 0..1000 {
            cache.get_or_compile(&p, Sign::Negative);
        }
        assert_eq!((cache.compilations(), cache.requests()), (1, 1000));
    }

    #[test]
    fn fingerprint_tracks_rule_changes() {
        let a = parse_policy("a1 implies head", 2).unwrap();
        let b = parse_policy("a1 implies -head", 2).unwrap();
        let c = parse_policy("a1 implies head", 3).unwrap();
        assert_ne!(policy_fingerprint(&a), policy_fingerprint(&b));
        assert_ne!(policy_fingerprint(&a), policy_fingerprint(&c));
    }
}
