//! Query templates from real-world workloads and a reproducible
//! synthetic stream generator.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::query::RegexAst;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("template {template} expects {expected} labels, got {got}")]
    Arity { template: &'static str, expected: &'static str, got: usize },
}

/// The eleven recursive query shapes most common in real workloads.
/// Variadic templates take k labels (plus a trailing one for Q10).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryTemplate {
    /// a*
    Q1,
    /// a ∘ b*
    Q2,
    /// a ∘ b* ∘ c*
    Q3,
    /// (a1 | … | ak)*
    Q4,
    /// a ∘ b* ∘ c
    Q5,
    /// a* ∘ b*
    Q6,
    /// a ∘ b ∘ c*
    Q7,
    /// a? ∘ b*
    Q8,
    /// (a1 | … | ak)+
    Q9,
    /// (a1 | … | ak) ∘ b*
    Q10,
    /// a1 ∘ a2 ∘ … ∘ ak
    Q11,
}

pub const ALL_TEMPLATES: [QueryTemplate; 11] = [
    QueryTemplate::Q1,
    QueryTemplate::Q2,
    QueryTemplate::Q3,
    QueryTemplate::Q4,
    QueryTemplate::Q5,
    QueryTemplate::Q6,
    QueryTemplate::Q7,
    QueryTemplate::Q8,
    QueryTemplate::Q9,
    QueryTemplate::Q10,
    QueryTemplate::Q11,
];

impl QueryTemplate {
    pub fn name(self) -> &'static str {
        match self {
            QueryTemplate::Q1 => "Q1",
            QueryTemplate::Q2 => "Q2",
            QueryTemplate::Q3 => "Q3",
            QueryTemplate::Q4 => "Q4",
            QueryTemplate::Q5 => "Q5",
            QueryTemplate::Q6 => "Q6",
            QueryTemplate::Q7 => "Q7",
            QueryTemplate::Q8 => "Q8",
            QueryTemplate::Q9 => "Q9",
            QueryTemplate::Q10 => "Q10",
            QueryTemplate::Q11 => "Q11",
        }
    }

    fn arity_error(self, expected: &'static str, got: usize) -> WorkloadError {
        WorkloadError::Arity { template: self.name(), expected, got }
    }

    /// Instantiate the template shape with concrete labels.
    pub fn instantiate(self, labels: &[&str]) -> Result<RegexAst, WorkloadError> {
        use RegexAst as R;
        let fixed = |n: usize| -> Result<(), WorkloadError> {
            if labels.len() == n {
                Ok(())
            } else {
                Err(self.arity_error(match n {
                    1 => "1",
                    2 => "2",
                    _ => "3",
                }, labels.len()))
            }
        };
        let atom = |i: usize| R::atom(labels[i]);
        Ok(match self {
            QueryTemplate::Q1 => {
                fixed(1)?;
                R::star(atom(0))
            }
            QueryTemplate::Q2 => {
                fixed(2)?;
                R::concat(atom(0), R::star(atom(1)))
            }
            QueryTemplate::Q3 => {
                fixed(3)?;
                R::concat(R::concat(atom(0), R::star(atom(1))), R::star(atom(2)))
            }
            QueryTemplate::Q4 => {
                if labels.is_empty() {
                    return Err(self.arity_error(">=1", 0));
                }
                R::star(alternation(labels))
            }
            QueryTemplate::Q5 => {
                fixed(3)?;
                R::concat(R::concat(atom(0), R::star(atom(1))), atom(2))
            }
            QueryTemplate::Q6 => {
                fixed(2)?;
                R::concat(R::star(atom(0)), R::star(atom(1)))
            }
            QueryTemplate::Q7 => {
                fixed(3)?;
                R::concat(R::concat(atom(0), atom(1)), R::star(atom(2)))
            }
            QueryTemplate::Q8 => {
                fixed(2)?;
                R::concat(R::optional(atom(0)), R::star(atom(1)))
            }
            QueryTemplate::Q9 => {
                if labels.is_empty() {
                    return Err(self.arity_error(">=1", 0));
                }
                R::plus(alternation(labels))
            }
            QueryTemplate::Q10 => {
                if labels.len() < 2 {
                    return Err(self.arity_error(">=2", labels.len()));
                }
                let (head, tail) = labels.split_at(labels.len() - 1);
                R::concat(alternation(head), R::star(R::atom(tail[0])))
            }
            QueryTemplate::Q11 => {
                if labels.is_empty() {
                    return Err(self.arity_error(">=1", 0));
                }
                concatenation(labels)
            }
        })
    }
}

fn alternation(labels: &[&str]) -> RegexAst {
    labels[1..]
        .iter()
        .fold(RegexAst::atom(labels[0]), |acc, l| RegexAst::alt(acc, RegexAst::atom(l)))
}

fn concatenation(labels: &[&str]) -> RegexAst {
    labels[1..]
        .iter()
        .fold(RegexAst::atom(labels[0]), |acc, l| RegexAst::concat(acc, RegexAst::atom(l)))
}

/// Configuration of the synthetic stream generator.
#[derive(Debug, Clone)]
pub struct StreamGenConfig {
    pub vertex_count: u32,
    pub label_count: u32,
    pub tuple_count: u64,
    /// Timestamp increment between consecutive tuples.
    pub timestamp_stride: u64,
    /// Fraction of tuples that delete a live (inserted, not yet deleted) edge.
    pub deletion_ratio: f64,
    pub seed: u64,
    /// 0.0 draws sources uniformly; larger values skew toward low ids.
    pub degree_skew: f64,
}

impl Default for StreamGenConfig {
    fn default() -> Self {
        StreamGenConfig {
            vertex_count: 100,
            label_count: 3,
            tuple_count: 1000,
            timestamp_stride: 1,
            deletion_ratio: 0.0,
            seed: 1,
            degree_skew: 0.0,
        }
    }
}

/// A generated tuple in original (string) form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedTuple {
    pub ts: u64,
    pub source: String,
    pub label: String,
    pub target: String,
    pub delete: bool,
}

impl GeneratedTuple {
    /// Wire-format line without the trailing newline.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.ts,
            self.source,
            self.label,
            self.target,
            if self.delete { "-" } else { "+" }
        )
    }
}

/// Generate a reproducible random stream. Deletions are sampled only
/// from edges that were inserted and are still live; duplicate inserts
/// of the same edge may occur and act as timestamp refreshes.
pub fn generate(cfg: &StreamGenConfig) -> Vec<GeneratedTuple> {
    assert!(cfg.vertex_count > 0 && cfg.label_count > 0);
    assert!((0.0..=1.0).contains(&cfg.deletion_ratio));
    assert!(cfg.timestamp_stride > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut live: Vec<(u32, u32, u32)> = Vec::new();
    let mut live_index: std::collections::HashMap<(u32, u32, u32), usize> =
        std::collections::HashMap::new();
    let mut out = Vec::with_capacity(cfg.tuple_count as usize);

    let pick_source = |rng: &mut ChaCha8Rng| -> u32 {
        if cfg.degree_skew <= 0.0 {
            rng.gen_range(0..cfg.vertex_count)
        } else {
            let u: f64 = rng.gen::<f64>();
            let biased = u.powf(1.0 + cfg.degree_skew);
            ((biased * cfg.vertex_count as f64) as u32).min(cfg.vertex_count - 1)
        }
    };

    for i in 0..cfg.tuple_count {
        let ts = (i + 1) * cfg.timestamp_stride;
        let delete = !live.is_empty() && rng.gen_bool(cfg.deletion_ratio);
        if delete {
            let pos = rng.gen_range(0..live.len());
            let edge = live.swap_remove(pos);
            live_index.remove(&edge);
            if pos < live.len() {
                live_index.insert(live[pos], pos);
            }
            let (u, l, v) = edge;
            out.push(GeneratedTuple {
                ts,
                source: format!("v{u}"),
                label: format!("l{l}"),
                target: format!("v{v}"),
                delete: true,
            });
        } else {
            let u = pick_source(&mut rng);
            let v = rng.gen_range(0..cfg.vertex_count);
            let l = rng.gen_range(0..cfg.label_count);
            if !live_index.contains_key(&(u, l, v)) {
                live_index.insert((u, l, v), live.len());
                live.push((u, l, v));
            }
            out.push(GeneratedTuple {
                ts,
                source: format!("v{u}"),
                label: format!("l{l}"),
                target: format!("v{v}"),
                delete: false,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_regex;
    use crate::stream::{parse_tuple, Op};
    use crate::vocab::Vocab;

    #[test]
    fn q1_is_a_star() {
        let ast = QueryTemplate::Q1.instantiate(&["knows"]).unwrap();
        assert_eq!(ast, parse_regex("knows*").unwrap());
    }

    #[test]
    fn q9_alternation_left_associates() {
        let ast = QueryTemplate::Q9.instantiate(&["a1", "a2", "a3"]).unwrap();
        assert_eq!(ast, parse_regex("(a1|a2|a3)+").unwrap());
        assert_eq!(
            ast,
            RegexAst::plus(RegexAst::alt(
                RegexAst::alt(RegexAst::atom("a1"), RegexAst::atom("a2")),
                RegexAst::atom("a3")
            ))
        );
    }

    #[test]
    fn q11_degenerate_single_label() {
        let ast = QueryTemplate::Q11.instantiate(&["a1"]).unwrap();
        assert_eq!(ast, RegexAst::atom("a1"));
    }

    #[test]
    fn template_shapes_parse_back() {
        let labels = ["a", "b", "c"];
        for template in ALL_TEMPLATES {
            let take = match template {
                QueryTemplate::Q1 => 1,
                QueryTemplate::Q2 | QueryTemplate::Q6 | QueryTemplate::Q8 => 2,
                _ => 3,
            };
            let ast = template.instantiate(&labels[..take]).unwrap();
            assert!(!ast.labels().is_empty(), "{}", template.name());
        }
    }

    #[test]
    fn arity_mismatch_rejected() {
        assert!(QueryTemplate::Q5.instantiate(&["a"]).is_err());
        assert!(QueryTemplate::Q10.instantiate(&["a"]).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = StreamGenConfig { tuple_count: 500, seed: 42, ..Default::default() };
        assert_eq!(generate(&cfg), generate(&cfg));
    }

    #[test]
    fn zero_ratio_generates_no_deletes() {
        let cfg = StreamGenConfig { tuple_count: 500, ..Default::default() };
        assert!(generate(&cfg).iter().all(|t| !t.delete));
    }

    #[test]
    fn deletion_ratio_respected_and_targets_live_edges() {
        let cfg = StreamGenConfig {
            tuple_count: 10_000,
            deletion_ratio: 0.1,
            seed: 9,
            ..Default::default()
        };
        let stream = generate(&cfg);
        let deletes = stream.iter().filter(|t| t.delete).count();
        // 1000 expected; allow a generous binomial tolerance.
        assert!((850..=1150).contains(&deletes), "saw {deletes} deletes");
        let mut live = std::collections::HashSet::new();
        for t in &stream {
            let key = (t.source.clone(), t.label.clone(), t.target.clone());
            if t.delete {
                assert!(live.remove(&key), "delete of non-live edge {key:?}");
            } else {
                live.insert(key);
            }
        }
    }

    #[test]
    fn generated_lines_round_trip() {
        let cfg = StreamGenConfig {
            tuple_count: 200,
            deletion_ratio: 0.05,
            seed: 3,
            ..Default::default()
        };
        let mut vocab = Vocab::new();
        for (i, t) in generate(&cfg).iter().enumerate() {
            let parsed = parse_tuple(&t.to_line(), i + 1, &mut vocab).unwrap();
            assert_eq!(parsed.ts, t.ts);
            assert_eq!(vocab.vertex_name(parsed.source), t.source);
            assert_eq!(vocab.label_name(parsed.label), t.label);
            assert_eq!(vocab.vertex_name(parsed.target), t.target);
            assert_eq!(parsed.op == Op::Delete, t.delete);
        }
    }
}
