//! Compilation of a parsed expression into a minimal DFA.
//!
//! Pipeline: Thompson construction of an epsilon-NFA, subset
//! construction, removal of states that are unreachable from the start
//! or cannot reach an accepting state, then Hopcroft minimization over
//! the sink-completed automaton. The resulting states are renumbered by
//! a breadth-first walk with label-sorted edges so that compilation is
//! fully deterministic and the start state is always 0.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::vocab::Label;

use super::parser::RegexAst;
use super::{Dfa, QueryError, StateId};

// ---------------------------------------------------------------------------
// Thompson construction
// ---------------------------------------------------------------------------

struct Nfa {
    /// Per state: labelled transitions and epsilon transitions.
    moves: Vec<Vec<(Label, usize)>>,
    eps: Vec<Vec<usize>>,
    start: usize,
    accept: usize,
}

impl Nfa {
    fn new() -> Self {
        Nfa { moves: Vec::new(), eps: Vec::new(), start: 0, accept: 0 }
    }

    fn add_state(&mut self) -> usize {
        self.moves.push(Vec::new());
        self.eps.push(Vec::new());
        self.moves.len() - 1
    }

    fn add_eps(&mut self, from: usize, to: usize) {
        self.eps[from].push(to);
    }

    fn add_move(&mut self, from: usize, label: Label, to: usize) {
        self.moves[from].push((label, to));
    }
}

/// A fragment with a single entry and a single exit state.
#[derive(Clone, Copy)]
struct Fragment {
    start: usize,
    accept: usize,
}

fn build_fragment(
    nfa: &mut Nfa,
    ast: &RegexAst,
    intern: &mut dyn FnMut(&str) -> Label,
) -> Fragment {
    match ast {
        RegexAst::Epsilon => {
            let s = nfa.add_state();
            let a = nfa.add_state();
            nfa.add_eps(s, a);
            Fragment { start: s, accept: a }
        }
        RegexAst::Atom(text) => {
            let s = nfa.add_state();
            let a = nfa.add_state();
            let label = intern(text);
            nfa.add_move(s, label, a);
            Fragment { start: s, accept: a }
        }
        RegexAst::Concat(l, r) => {
            let fl = build_fragment(nfa, l, intern);
            let fr = build_fragment(nfa, r, intern);
            nfa.add_eps(fl.accept, fr.start);
            Fragment { start: fl.start, accept: fr.accept }
        }
        RegexAst::Alt(l, r) => {
            let fl = build_fragment(nfa, l, intern);
            let fr = build_fragment(nfa, r, intern);
            let s = nfa.add_state();
            let a = nfa.add_state();
            nfa.add_eps(s, fl.start);
            nfa.add_eps(s, fr.start);
            nfa.add_eps(fl.accept, a);
            nfa.add_eps(fr.accept, a);
            Fragment { start: s, accept: a }
        }
        RegexAst::Star(c) => {
            let fc = build_fragment(nfa, c, intern);
            let s = nfa.add_state();
            let a = nfa.add_state();
            nfa.add_eps(s, fc.start);
            nfa.add_eps(s, a);
            nfa.add_eps(fc.accept, fc.start);
            nfa.add_eps(fc.accept, a);
            Fragment { start: s, accept: a }
        }
        RegexAst::Plus(c) => {
            // r+ = r ∘ r*
            let desugared = RegexAst::concat((**c).clone(), RegexAst::star((**c).clone()));
            build_fragment(nfa, &desugared, intern)
        }
        RegexAst::Optional(c) => {
            // r? = ε | r
            let desugared = RegexAst::alt(RegexAst::Epsilon, (**c).clone());
            build_fragment(nfa, &desugared, intern)
        }
    }
}

fn eps_closure(nfa: &Nfa, seed: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut closure = seed.clone();
    let mut stack: Vec<usize> = seed.iter().copied().collect();
    while let Some(s) = stack.pop() {
        for &t in &nfa.eps[s] {
            if closure.insert(t) {
                stack.push(t);
            }
        }
    }
    closure
}

// ---------------------------------------------------------------------------
// Subset construction
// ---------------------------------------------------------------------------

struct RawDfa {
    transitions: Vec<BTreeMap<Label, usize>>,
    accepting: Vec<bool>,
    start: usize,
}

fn determinize(nfa: &Nfa) -> RawDfa {
    let mut states: HashMap<BTreeSet<usize>, usize> = HashMap::new();
    let mut transitions: Vec<BTreeMap<Label, usize>> = Vec::new();
    let mut accepting: Vec<bool> = Vec::new();
    let mut queue: VecDeque<BTreeSet<usize>> = VecDeque::new();

    let start_set = eps_closure(nfa, &BTreeSet::from([nfa.start]));
    states.insert(start_set.clone(), 0);
    transitions.push(BTreeMap::new());
    accepting.push(start_set.contains(&nfa.accept));
    queue.push_back(start_set);

    while let Some(set) = queue.pop_front() {
        let id = states[&set];
        let mut by_label: BTreeMap<Label, BTreeSet<usize>> = BTreeMap::new();
        for &s in &set {
            for &(label, t) in &nfa.moves[s] {
                by_label.entry(label).or_default().insert(t);
            }
        }
        for (label, seed) in by_label {
            let target_set = eps_closure(nfa, &seed);
            let next_id = *states.entry(target_set.clone()).or_insert_with(|| {
                transitions.push(BTreeMap::new());
                accepting.push(target_set.contains(&nfa.accept));
                queue.push_back(target_set.clone());
                transitions.len() - 1
            });
            transitions[id].insert(label, next_id);
        }
    }

    RawDfa { transitions, accepting, start: 0 }
}

// ---------------------------------------------------------------------------
// Pruning and minimization
// ---------------------------------------------------------------------------

/// Keep only states reachable from the start that can reach acceptance.
fn prune(dfa: &RawDfa) -> Result<RawDfa, QueryError> {
    let n = dfa.transitions.len();

    let mut reachable = vec![false; n];
    let mut stack = vec![dfa.start];
    reachable[dfa.start] = true;
    while let Some(s) = stack.pop() {
        for &t in dfa.transitions[s].values() {
            if !reachable[t] {
                reachable[t] = true;
                stack.push(t);
            }
        }
    }

    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, row) in dfa.transitions.iter().enumerate() {
        for &t in row.values() {
            reverse[t].push(s);
        }
    }
    let mut coaccessible = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&s| dfa.accepting[s]).collect();
    for &s in &stack {
        coaccessible[s] = true;
    }
    while let Some(s) = stack.pop() {
        for &p in &reverse[s] {
            if !coaccessible[p] {
                coaccessible[p] = true;
                stack.push(p);
            }
        }
    }

    let keep: Vec<usize> = (0..n).filter(|&s| reachable[s] && coaccessible[s]).collect();
    if !keep.contains(&dfa.start) {
        return Err(QueryError::EmptyLanguage);
    }
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }

    let mut transitions = vec![BTreeMap::new(); keep.len()];
    let mut accepting = vec![false; keep.len()];
    for &old in &keep {
        accepting[remap[old]] = dfa.accepting[old];
        for (&label, &t) in &dfa.transitions[old] {
            if remap[t] != usize::MAX {
                transitions[remap[old]].insert(label, remap[t]);
            }
        }
    }
    Ok(RawDfa { transitions, accepting, start: remap[dfa.start] })
}

/// Hopcroft partition refinement over the sink-completed automaton.
fn minimize(dfa: &RawDfa, alphabet: &BTreeSet<Label>) -> RawDfa {
    let n = dfa.transitions.len();
    let sink = n; // implicit rejecting sink completing the transition function
    let total = n + 1;

    let delta = |s: usize, label: Label| -> usize {
        if s == sink {
            sink
        } else {
            dfa.transitions[s].get(&label).copied().unwrap_or(sink)
        }
    };

    // Reverse image per label.
    let mut reverse: HashMap<Label, Vec<Vec<usize>>> = alphabet
        .iter()
        .map(|&l| (l, vec![Vec::new(); total]))
        .collect();
    for s in 0..total {
        for &label in alphabet {
            let t = delta(s, label);
            reverse.get_mut(&label).unwrap()[t].push(s);
        }
    }

    let accepting_set: BTreeSet<usize> = (0..n).filter(|&s| dfa.accepting[s]).collect();
    let rejecting_set: BTreeSet<usize> =
        (0..total).filter(|&s| s == sink || !dfa.accepting[s]).collect();

    let mut partitions: Vec<BTreeSet<usize>> = Vec::new();
    if !accepting_set.is_empty() {
        partitions.push(accepting_set.clone());
    }
    if !rejecting_set.is_empty() {
        partitions.push(rejecting_set);
    }

    let mut worklist: Vec<(usize, Label)> = Vec::new();
    for (i, _) in partitions.iter().enumerate() {
        for &label in alphabet {
            worklist.push((i, label));
        }
    }

    while let Some((splitter_idx, label)) = worklist.pop() {
        let splitter = partitions[splitter_idx].clone();
        let mut predecessors: BTreeSet<usize> = BTreeSet::new();
        for &t in &splitter {
            predecessors.extend(reverse[&label][t].iter().copied());
        }
        if predecessors.is_empty() {
            continue;
        }
        let mut i = 0;
        while i < partitions.len() {
            let inside: BTreeSet<usize> =
                partitions[i].intersection(&predecessors).copied().collect();
            if inside.is_empty() || inside.len() == partitions[i].len() {
                i += 1;
                continue;
            }
            let outside: BTreeSet<usize> =
                partitions[i].difference(&inside).copied().collect();
            let (smaller, larger) =
                if inside.len() <= outside.len() { (inside, outside) } else {
                    let o = partitions[i].intersection(&predecessors).copied().collect();
                    (partitions[i].difference(&o).copied().collect::<BTreeSet<_>>(), o)
                };
            // Replace partition i with the larger half, append the smaller.
            partitions[i] = larger;
            let new_idx = partitions.len();
            partitions.push(smaller);
            for &l in alphabet {
                worklist.push((new_idx, l));
            }
            i += 1;
        }
    }

    let mut class_of = vec![usize::MAX; total];
    for (ci, class) in partitions.iter().enumerate() {
        for &s in class {
            class_of[s] = ci;
        }
    }
    let sink_class = class_of[sink];

    // Rebuild a partial DFA over the classes, dropping the sink class.
    let mut class_ids: HashMap<usize, usize> = HashMap::new();
    let mut order: Vec<usize> = Vec::new();
    for s in 0..n {
        let c = class_of[s];
        if c != sink_class && !class_ids.contains_key(&c) {
            class_ids.insert(c, order.len());
            order.push(c);
        }
    }
    let mut transitions = vec![BTreeMap::new(); order.len()];
    let mut accepting = vec![false; order.len()];
    for s in 0..n {
        let c = class_of[s];
        if c == sink_class {
            continue;
        }
        let id = class_ids[&c];
        accepting[id] = dfa.accepting[s];
        for (&label, &t) in &dfa.transitions[s] {
            if class_of[t] != sink_class {
                transitions[id].insert(label, class_ids[&class_of[t]]);
            }
        }
    }
    RawDfa { transitions, accepting, start: class_ids[&class_of[dfa.start]] }
}

/// Renumber states breadth-first from the start with label-sorted edges.
fn renumber(dfa: &RawDfa) -> RawDfa {
    let n = dfa.transitions.len();
    let mut remap = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([dfa.start]);
    remap[dfa.start] = 0;
    order.push(dfa.start);
    while let Some(s) = queue.pop_front() {
        for &t in dfa.transitions[s].values() {
            if remap[t] == usize::MAX {
                remap[t] = order.len();
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    let mut transitions = vec![BTreeMap::new(); order.len()];
    let mut accepting = vec![false; order.len()];
    for &old in &order {
        let id = remap[old];
        accepting[id] = dfa.accepting[old];
        for (&label, &t) in &dfa.transitions[old] {
            transitions[id].insert(label, remap[t]);
        }
    }
    RawDfa { transitions, accepting, start: 0 }
}

/// Compile an expression into a minimal, pruned DFA.
///
/// `intern` resolves label texts to ids; expressions denoting the empty
/// language or accepting only the empty word are rejected.
pub fn compile_with(
    ast: &RegexAst,
    intern: &mut dyn FnMut(&str) -> Label,
) -> Result<Dfa, QueryError> {
    let mut nfa = Nfa::new();
    let fragment = build_fragment(&mut nfa, ast, intern);
    nfa.start = fragment.start;
    nfa.accept = fragment.accept;

    let raw = determinize(&nfa);
    let pruned = prune(&raw)?;
    let alphabet: BTreeSet<Label> =
        pruned.transitions.iter().flat_map(|row| row.keys().copied()).collect();
    if alphabet.is_empty() {
        // Only the empty word is accepted; no edge can ever match.
        return Err(QueryError::EpsilonOnly);
    }
    let minimal = renumber(&minimize(&pruned, &alphabet));

    let state_count = minimal.transitions.len();
    let mut transitions: Vec<BTreeMap<Label, StateId>> = vec![BTreeMap::new(); state_count];
    for (s, row) in minimal.transitions.iter().enumerate() {
        for (&label, &t) in row {
            transitions[s].insert(label, t as StateId);
        }
    }
    let accepting = minimal.accepting.clone();
    Ok(Dfa::from_parts(transitions, accepting))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parser::parse_regex;
    use crate::vocab::Vocab;

    fn compile_str(text: &str) -> (Dfa, Vocab) {
        let mut vocab = Vocab::new();
        let ast = parse_regex(text).unwrap();
        let dfa = compile_with(&ast, &mut |t| vocab.label(t)).unwrap();
        (dfa, vocab)
    }

    #[test]
    fn running_example_automaton() {
        // Expected: 3 states, 0 -f-> 1 -m-> 2 -f-> 1, F = {2}.
        let (dfa, mut vocab) = compile_str("(follows/mentions)+");
        let f = vocab.label("follows");
        let m = vocab.label("mentions");
        assert_eq!(dfa.state_count(), 3);
        assert_eq!(dfa.transition(0, f), Some(1));
        assert_eq!(dfa.transition(1, m), Some(2));
        assert_eq!(dfa.transition(2, f), Some(1));
        assert_eq!(dfa.transition(0, m), None);
        assert!(!dfa.is_accepting(0));
        assert!(!dfa.is_accepting(1));
        assert!(dfa.is_accepting(2));
    }

    #[test]
    fn kleene_star_single_atom() {
        let (dfa, mut vocab) = compile_str("a*");
        let a = vocab.label("a");
        assert_eq!(dfa.state_count(), 1);
        assert!(dfa.is_accepting(0));
        assert_eq!(dfa.transition(0, a), Some(0));
    }

    #[test]
    fn concat_with_inner_star() {
        // a/b*/c: 0 -a-> 1, 1 -b-> 1, 1 -c-> 2, F = {2}.
        let (dfa, mut vocab) = compile_str("a/b*/c");
        let a = vocab.label("a");
        let b = vocab.label("b");
        let c = vocab.label("c");
        assert_eq!(dfa.state_count(), 3);
        assert_eq!(dfa.transition(0, a), Some(1));
        assert_eq!(dfa.transition(1, b), Some(1));
        assert_eq!(dfa.transition(1, c), Some(2));
        assert!(dfa.is_accepting(2));
        assert_eq!(dfa.accepting_states(), vec![2]);
    }

    #[test]
    fn epsilon_only_rejected() {
        let mut vocab = Vocab::new();
        let eps_only = RegexAst::optional(RegexAst::Epsilon);
        let err = compile_with(&eps_only, &mut |t| vocab.label(t)).unwrap_err();
        assert!(matches!(err, QueryError::EpsilonOnly));
    }

    #[test]
    fn optional_concat_accepts_epsilon_but_compiles() {
        // a?/b* accepts epsilon but has edges, so it is a valid query.
        let (dfa, _) = compile_str("a?/b*");
        assert!(dfa.is_accepting(0));
        assert_eq!(dfa.state_count(), 2);
    }
}
