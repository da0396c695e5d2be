//! Query registration: parsing, DFA compilation and the suffix-language
//! containment table used for conflict detection.

mod automaton;
mod containment;
mod parser;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::vocab::{Label, Vocab};

pub use containment::{containment_table, has_containment_property, ContainmentTable};
pub use parser::{parse_regex, RegexAst};

/// DFA state identifier; the start state is always 0.
pub type StateId = u32;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("expression denotes the empty language")]
    EmptyLanguage,
    #[error("expression accepts only the empty word; a path needs at least one edge")]
    EpsilonOnly,
    #[error("query file line {line}: {message}")]
    QueryFile { line: usize, message: String },
}

/// Minimal deterministic automaton for a registered query.
///
/// States are densely numbered with start state 0; every state is
/// reachable from the start and co-accessible, and no two states share
/// a suffix language. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Dfa {
    transitions: Vec<BTreeMap<Label, StateId>>,
    accepting: Vec<bool>,
    accepting_list: Vec<StateId>,
    alphabet: Vec<Label>,
    /// Per label: the (source, target) transition pairs, sorted.
    by_label: BTreeMap<Label, Vec<(StateId, StateId)>>,
    /// Per label: (target, source) pairs for reverse traversal, sorted by target.
    rev_by_label: BTreeMap<Label, Vec<(StateId, StateId)>>,
    /// Per target state: (label, source) pairs leading into it, sorted.
    incoming: Vec<Vec<(Label, StateId)>>,
}

impl Dfa {
    pub(crate) fn from_parts(transitions: Vec<BTreeMap<Label, StateId>>, accepting: Vec<bool>) -> Self {
        let mut alphabet: Vec<Label> = transitions
            .iter()
            .flat_map(|row| row.keys().copied())
            .collect();
        alphabet.sort_unstable();
        alphabet.dedup();

        let mut by_label: BTreeMap<Label, Vec<(StateId, StateId)>> = BTreeMap::new();
        let mut rev_by_label: BTreeMap<Label, Vec<(StateId, StateId)>> = BTreeMap::new();
        let mut incoming: Vec<Vec<(Label, StateId)>> = vec![Vec::new(); transitions.len()];
        for (s, row) in transitions.iter().enumerate() {
            for (&label, &t) in row {
                by_label.entry(label).or_default().push((s as StateId, t));
                rev_by_label.entry(label).or_default().push((t, s as StateId));
                incoming[t as usize].push((label, s as StateId));
            }
        }
        for pairs in by_label.values_mut() {
            pairs.sort_unstable();
        }
        for pairs in rev_by_label.values_mut() {
            pairs.sort_unstable();
        }
        for pairs in &mut incoming {
            pairs.sort_unstable();
        }
        let accepting_list = accepting
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(s, _)| s as StateId)
            .collect();
        Dfa { transitions, accepting, accepting_list, alphabet, by_label, rev_by_label, incoming }
    }

    pub fn state_count(&self) -> usize {
        self.transitions.len()
    }

    pub const fn start_state(&self) -> StateId {
        0
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.accepting[state]
    }

    pub fn accepting_states(&self) -> Vec<StateId> {
        self.accepting_list.clone()
    }

    pub fn transition(&self, state: usize, label: Label) -> Option<StateId> {
        self.transitions[state].get(&label).copied()
    }

    pub fn transitions(&self, state: usize) -> &BTreeMap<Label, StateId> {
        &self.transitions[state]
    }

    /// Sorted query alphabet Σ_Q.
    pub fn alphabet(&self) -> &[Label] {
        &self.alphabet
    }

    pub fn in_alphabet(&self, label: Label) -> bool {
        self.alphabet.binary_search(&label).is_ok()
    }

    /// All transitions (s, t) with `delta(s, label) = t`.
    pub fn transitions_on(&self, label: Label) -> &[(StateId, StateId)] {
        self.by_label.get(&label).map_or(&[], |v| v.as_slice())
    }

    /// All pairs (t, s) with `delta(s, label) = t`, sorted by target t.
    pub fn reverse_transitions_on(&self, label: Label) -> &[(StateId, StateId)] {
        self.rev_by_label.get(&label).map_or(&[], |v| v.as_slice())
    }

    /// Sources s with `delta(s, label) = target`.
    pub fn sources_into(&self, target: StateId, label: Label) -> impl Iterator<Item = StateId> + '_ {
        let pairs = self.reverse_transitions_on(label);
        let from = pairs.partition_point(|&(t, _)| t < target);
        pairs[from..]
            .iter()
            .take_while(move |&&(t, _)| t == target)
            .map(|&(_, s)| s)
    }

    /// All (label, source) pairs with `delta(source, label) = target`.
    pub fn incoming(&self, target: StateId) -> &[(Label, StateId)] {
        &self.incoming[target as usize]
    }

    /// Extended transition function: the state reached by consuming the
    /// word from `state`, or `None` if any step is undefined.
    pub fn extended_transition(&self, state: StateId, word: &[Label]) -> Option<StateId> {
        word.iter()
            .try_fold(state, |s, &label| self.transition(s as usize, label))
    }

    pub fn accepts(&self, word: &[Label]) -> bool {
        self.extended_transition(self.start_state(), word)
            .is_some_and(|s| self.is_accepting(s as usize))
    }
}

/// Compile a parsed expression to a minimal DFA, interning labels through
/// the supplied resolver.
pub fn compile(
    ast: &RegexAst,
    intern: &mut dyn FnMut(&str) -> Label,
) -> Result<Dfa, QueryError> {
    automaton::compile_with(ast, intern)
}

/// A registered query: expression, automaton and containment table.
#[derive(Debug, Clone)]
pub struct CompiledQuery {
    pub name: String,
    pub ast: RegexAst,
    pub dfa: Dfa,
    pub containment: ContainmentTable,
}

impl CompiledQuery {
    pub fn build(name: &str, text: &str, vocab: &mut Vocab) -> Result<Self, QueryError> {
        let ast = parse_regex(text)?;
        Self::from_ast(name, ast, vocab)
    }

    pub fn from_ast(name: &str, ast: RegexAst, vocab: &mut Vocab) -> Result<Self, QueryError> {
        let dfa = compile(&ast, &mut |t| vocab.label(t))?;
        let containment = containment_table(&dfa);
        Ok(CompiledQuery { name: name.to_owned(), ast, dfa, containment })
    }

    pub fn has_containment_property(&self) -> bool {
        has_containment_property(&self.dfa, &self.containment)
    }
}

/// Parse a query file: one `name<TAB>regex` entry per line, `#` comments
/// and blank lines skipped.
pub fn parse_query_file(contents: &str) -> Result<Vec<(String, String)>, QueryError> {
    let mut out = Vec::new();
    for (i, raw) in contents.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((name, regex)) = line.split_once('\t') else {
            return Err(QueryError::QueryFile {
                line: i + 1,
                message: "expected `name<TAB>regex`".to_owned(),
            });
        };
        if name.trim().is_empty() || regex.trim().is_empty() {
            return Err(QueryError::QueryFile {
                line: i + 1,
                message: "empty name or expression".to_owned(),
            });
        }
        out.push((name.trim().to_owned(), regex.trim().to_owned()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocab;

    fn q1(vocab: &mut Vocab) -> Dfa {
        let ast = parse_regex("(follows/mentions)+").unwrap();
        compile(&ast, &mut |t| vocab.label(t)).unwrap()
    }

    #[test]
    fn extended_transition_running_example() {
        let mut vocab = Vocab::new();
        let dfa = q1(&mut vocab);
        let f = vocab.label("follows");
        let m = vocab.label("mentions");
        assert_eq!(dfa.extended_transition(0, &[f, m, f, m]), Some(2));
        assert_eq!(dfa.extended_transition(1, &[]), Some(1));
        assert_eq!(dfa.extended_transition(0, &[m]), None);
    }

    #[test]
    fn query_file_parsing() {
        let text = "# comment\nq1\t(follows/mentions)+\n\nq2\ta*\n";
        let queries = parse_query_file(text).unwrap();
        assert_eq!(queries.len(), 2);
        assert_eq!(queries[0], ("q1".to_owned(), "(follows/mentions)+".to_owned()));
        assert!(parse_query_file("no-tab-here\n").is_err());
    }

    /// Independent matcher interpreting the AST directly, used to
    /// cross-check compiled automata on random words.
    pub(crate) fn ast_matches(ast: &RegexAst, word: &[&str]) -> bool {
        match ast {
            RegexAst::Epsilon => word.is_empty(),
            RegexAst::Atom(a) => word.len() == 1 && word[0] == a,
            RegexAst::Concat(l, r) => (0..=word.len())
                .any(|cut| ast_matches(l, &word[..cut]) && ast_matches(r, &word[cut..])),
            RegexAst::Alt(l, r) => ast_matches(l, word) || ast_matches(r, word),
            RegexAst::Star(c) => {
                if word.is_empty() {
                    return true;
                }
                // First chunk must be non-empty to guarantee progress.
                (1..=word.len())
                    .any(|cut| ast_matches(c, &word[..cut]) && ast_matches(ast, &word[cut..]))
            }
            RegexAst::Plus(c) => (1..=word.len()).any(|cut| {
                ast_matches(c, &word[..cut])
                    && ast_matches(&RegexAst::star((**c).clone()), &word[cut..])
            }),
            RegexAst::Optional(c) => word.is_empty() || ast_matches(c, word),
        }
    }

    #[test]
    fn membership_agrees_with_ast_interpreter() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;

        let queries = [
            "(follows/mentions)+",
            "a/b*/c",
            "a*",
            "(a|b)*/c",
            "a?/b+",
            "a/b|b/a",
            "((a/b)+|c)*/a",
        ];
        let alphabet = ["a", "b", "c", "follows", "mentions"];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for query in queries {
            let ast = parse_regex(query).unwrap();
            let mut vocab = Vocab::new();
            let dfa = compile(&ast, &mut |t| vocab.label(t)).unwrap();
            for _ in 0..1000 {
                let len = rng.gen_range(0..=12);
                let word: Vec<&str> =
                    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
                let ids: Vec<_> = word.iter().map(|w| vocab.label(w)).collect();
                assert_eq!(
                    dfa.accepts(&ids),
                    ast_matches(&ast, &word),
                    "{query} disagrees on {word:?}"
                );
            }
        }
    }

    #[test]
    fn minimality_no_two_states_mergeable() {
        // Merging any two distinct states must change the language on some
        // word of length <= 2k; equivalently no two states have identical
        // suffix languages up to that horizon.
        let queries = ["(follows/mentions)+", "a/b*/c", "(a|b)+/c?", "a*/b*", "a/b/c"];
        for query in queries {
            let mut vocab = Vocab::new();
            let ast = parse_regex(query).unwrap();
            let dfa = compile(&ast, &mut |t| vocab.label(t)).unwrap();
            let k = dfa.state_count();
            assert!(k <= 6, "test horizon assumes small automata");
            let horizon = 2 * k;
            let mut signatures = Vec::new();
            for s in 0..k {
                signatures.push(suffix_signature(&dfa, s as StateId, horizon));
            }
            for s in 0..k {
                for t in (s + 1)..k {
                    assert_ne!(
                        signatures[s], signatures[t],
                        "{query}: states {s} and {t} are language-equivalent"
                    );
                }
            }
        }
    }

    fn suffix_signature(dfa: &Dfa, from: StateId, horizon: usize) -> Vec<Vec<Label>> {
        let mut accepted = Vec::new();
        let mut frontier = vec![(from, Vec::new())];
        if dfa.is_accepting(from as usize) {
            accepted.push(Vec::new());
        }
        for _ in 0..horizon {
            let mut next = Vec::new();
            for (s, word) in frontier {
                for (&label, &t) in dfa.transitions(s as usize) {
                    let mut w = word.clone();
                    w.push(label);
                    if dfa.is_accepting(t as usize) {
                        accepted.push(w.clone());
                    }
                    next.push((t, w));
                }
            }
            frontier = next;
        }
        accepted.sort();
        accepted
    }

    #[test]
    fn pruning_every_state_productive() {
        for query in ["(follows/mentions)+", "a/b*/c", "(a|b)+", "a?/b*"] {
            let mut vocab = Vocab::new();
            let ast = parse_regex(query).unwrap();
            let dfa = compile(&ast, &mut |t| vocab.label(t)).unwrap();
            let k = dfa.state_count();
            // Reachability from the start.
            let mut reach = vec![false; k];
            let mut stack = vec![0usize];
            reach[0] = true;
            while let Some(s) = stack.pop() {
                for &t in dfa.transitions(s).values() {
                    if !reach[t as usize] {
                        reach[t as usize] = true;
                        stack.push(t as usize);
                    }
                }
            }
            assert!(reach.iter().all(|&r| r), "{query}: unreachable state");
            // Co-accessibility.
            for s in 0..k {
                let mut seen = std::collections::HashSet::from([s]);
                let mut stack = vec![s];
                let mut ok = dfa.is_accepting(s);
                while let Some(c) = stack.pop() {
                    if ok {
                        break;
                    }
                    for &t in dfa.transitions(c).values() {
                        if dfa.is_accepting(t as usize) {
                            ok = true;
                            break;
                        }
                        if seen.insert(t as usize) {
                            stack.push(t as usize);
                        }
                    }
                }
                assert!(ok, "{query}: state {s} cannot reach acceptance");
            }
        }
    }
}
