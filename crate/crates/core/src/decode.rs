//! Beam decoding of posterior lattices over a search graph.
//!
//! The decoder runs frame-synchronous token passing. Each frame, every
//! surviving token is pushed across the arcs that consume a frame label,
//! paying the negated log posterior of that label plus the scaled graph
//! weight; input-epsilon arcs (backoff moves and erased disambiguation
//! arcs) are then relaxed to a fixpoint without consuming a frame. The
//! graph's epsilon subnetwork is acyclic by construction, so the
//! relaxation terminates.
//!
//! Scoring: `total = acoustic + γ·graph + word-count·(−ln β)`, where
//! `γ` scales the language-model contribution and `β` is a per-word
//! bonus (mass > 1) or penalty (mass < 1). Word count is one more than
//! the number of emitted boundary tokens whenever anything was emitted.
//!
//! Pruning keeps, after each frame, only tokens within `beam` of the
//! best current total (an absolute margin in negated-log space), and at
//! most `n_best` tokens per state. With an infinite beam the decoder is
//! an exact joint Viterbi search.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fst::{Label, StateId, EPS};
use crate::graph::SearchGraph;
use crate::lattice::PosteriorLattice;
use crate::tokens::WORD_BOUNDARY;

/// Posterior floor: frame labels are never charged more than
/// `−ln(1e-12)` acoustically, keeping zero-probability cells finite.
pub const POSTERIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct DecodeConfig {
    /// Language-model scale γ applied to every graph weight.
    pub gamma: f64,
    /// Word-insertion mass β: each decoded word multiplies the score by β.
    pub beta: f64,
    /// Beam width: absolute margin (in negated-log units) a token may
    /// trail the frame-best before it is dropped. `f64::INFINITY`
    /// disables pruning.
    pub beam: f64,
    /// Number of distinct hypotheses to return (and tokens kept per state).
    pub n_best: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            gamma: 1.0,
            beta: 1.0,
            beam: 12.0,
            n_best: 1,
        }
    }
}

// Negated comparisons so that NaN parameters fail validation too.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn validate_config(cfg: &DecodeConfig) -> Result<()> {
    if !(cfg.gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be non-negative, got {}",
            cfg.gamma
        )));
    }
    if !(cfg.beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {}",
            cfg.beta
        )));
    }
    if !(cfg.beam > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beam must be positive, got {}",
            cfg.beam
        )));
    }
    if cfg.n_best == 0 {
        return Err(Error::InvalidParameter("n_best must be at least 1".into()));
    }
    Ok(())
}

/// One decoded hypothesis with its score breakdown
/// (`total = acoustic + lm` up to rounding).
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<String>,
    pub text: String,
    pub total: f64,
    pub acoustic: f64,
    pub lm: f64,
}

/// Join decoded tokens into text: boundary tokens become spaces, all
/// other tokens concatenate.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        if t == WORD_BOUNDARY {
            out.push(' ');
        } else {
            out.push_str(t);
        }
    }
    // Boundary tokens at the edges (or doubled by lattice noise) would
    // produce stray spaces; emit the normalized line form instead, the
    // same shape every reference line has.
    let mut words = out.split_whitespace();
    let mut text = String::new();
    if let Some(first) = words.next() {
        text.push_str(first);
        for w in words {
            text.push(' ');
            text.push_str(w);
        }
    }
    text
}

const ROOT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Tok {
    total: f64,
    ac: f64,
    lm: f64,
    hist: u32,
}

/// Insert a token into a state's list: dedup on identical history,
/// keep at most `k`, smallest totals win. Returns true if the list
/// changed (used to detect the epsilon-relaxation fixpoint).
fn push_token(list: &mut Vec<Tok>, tok: Tok, k: usize) -> bool {
    if let Some(existing) = list.iter_mut().find(|e| e.hist == tok.hist) {
        if tok.total < existing.total {
            *existing = tok;
            return true;
        }
        return false;
    }
    if list.len() < k {
        list.push(tok);
        return true;
    }
    let (worst_i, worst) = list
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total.total_cmp(&b.1.total))
        .expect("list is non-empty here");
    if tok.total < worst.total {
        list[worst_i] = tok;
        return true;
    }
    false
}

struct Search<'a> {
    graph: &'a SearchGraph,
    cfg: DecodeConfig,
    sp_label: Option<Label>,
    word_bonus: f64, // −ln β
    arena: Vec<(Label, u32)>,
}

impl<'a> Search<'a> {
    fn extend(&mut self, hist: u32, olabel: Label) -> u32 {
        if olabel == EPS {
            return hist;
        }
        self.arena.push((olabel, hist));
        (self.arena.len() - 1) as u32
    }

    fn tokens_of(&self, mut hist: u32) -> Vec<String> {
        let mut labels = Vec::new();
        while hist != ROOT {
            let (l, parent) = self.arena[hist as usize];
            labels.push(l);
            hist = parent;
        }
        labels.reverse();
        labels
            .into_iter()
            .filter_map(|l| self.graph.fst.output_symbols().name(l))
            .map(str::to_string)
            .collect()
    }

    /// Graph-side cost of an arc: scaled weight plus the word bonus on
    /// boundary emissions.
    fn arc_cost(&self, weight: f64, olabel: Label) -> f64 {
        let mut w = self.cfg.gamma * weight;
        if Some(olabel) == self.sp_label {
            w += self.word_bonus;
        }
        w
    }

    /// Relax input-epsilon arcs to a fixpoint. The epsilon subnetwork is
    /// acyclic (every cycle in the graph consumes characters), so a few
    /// sweeps suffice; the pass cap only guards against a malformed graph.
    fn relax_epsilons(&mut self, active: &mut HashMap<StateId, Vec<Tok>>) {
        let max_passes = self.graph.fst.num_states() + 5;
        for _ in 0..max_passes {
            let mut changed = false;
            let states: Vec<StateId> = active.keys().copied().collect();
            for s in states {
                let toks = active[&s].clone();
                for arc in self.graph.fst.arcs(s) {
                    if arc.ilabel != EPS {
                        continue;
                    }
                    let w = self.arc_cost(arc.weight.value(), arc.olabel);
                    for t in &toks {
                        let hist = self.extend(t.hist, arc.olabel);
                        let tok = Tok {
                            total: t.total + w,
                            ac: t.ac,
                            lm: t.lm + w,
                            hist,
                        };
                        changed |= push_token(
                            active.entry(arc.nextstate).or_default(),
                            tok,
                            self.cfg.n_best,
                        );
                    }
                }
            }
            if !changed {
                return;
            }
        }
        debug_assert!(false, "epsilon relaxation did not converge");
    }

    fn prune(&self, active: &mut HashMap<StateId, Vec<Tok>>) {
        let best = active
            .values()
            .flatten()
            .map(|t| t.total)
            .fold(f64::INFINITY, f64::min);
        let cutoff = best + self.cfg.beam;
        active.retain(|_, toks| {
            toks.retain(|t| t.total <= cutoff);
            !toks.is_empty()
        });
    }
}

/// Decode one lattice against a search graph.
///
/// Returns up to `n_best` hypotheses, best first; ties in total score
/// break lexicographically on the token sequence.
pub fn decode_lattice(
    lat: &PosteriorLattice,
    graph: &SearchGraph,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    validate_config(cfg)?;
    if &lat.labels != graph.fst.input_symbols() {
        return Err(Error::LabelTableMismatch(
            "lattice label alphabet does not match the graph's input alphabet".into(),
        ));
    }
    let Some(start) = graph.fst.start() else {
        return Err(Error::EmptyGraph);
    };

    let mut search = Search {
        graph,
        cfg: *cfg,
        sp_label: graph.fst.output_symbols().id(WORD_BOUNDARY),
        word_bonus: -cfg.beta.ln(),
        arena: Vec::new(),
    };

    let mut active: HashMap<StateId, Vec<Tok>> = HashMap::new();
    active.insert(
        start,
        vec![Tok {
            total: 0.0,
            ac: 0.0,
            lm: 0.0,
            hist: ROOT,
        }],
    );
    search.relax_epsilons(&mut active);

    for row in &lat.rows {
        let mut next: HashMap<StateId, Vec<Tok>> = HashMap::new();
        for (&s, toks) in &active {
            for arc in graph.fst.arcs(s) {
                if arc.ilabel == EPS {
                    continue;
                }
                let p = row[arc.ilabel as usize];
                let ac = -p.max(POSTERIOR_FLOOR).ln();
                let w = search.arc_cost(arc.weight.value(), arc.olabel);
                for t in toks {
                    let hist = search.extend(t.hist, arc.olabel);
                    let tok = Tok {
                        total: t.total + ac + w,
                        ac: t.ac + ac,
                        lm: t.lm + w,
                        hist,
                    };
                    push_token(next.entry(arc.nextstate).or_default(), tok, cfg.n_best);
                }
            }
        }
        if next.is_empty() {
            return Err(Error::NoHypothesis);
        }
        search.relax_epsilons(&mut next);
        search.prune(&mut next);
        active = next;
    }

    // Terminate at final states; a non-empty output pays the word bonus
    // once more (word count = boundary tokens + 1).
    let mut candidates: Vec<(Vec<String>, Hypothesis)> = Vec::new();
    for (&s, toks) in &active {
        let Some(fw) = graph.fst.final_weight(s) else {
            continue;
        };
        let wf = cfg.gamma * fw.value();
        for t in toks {
            let end_bonus = if t.hist != ROOT {
                search.word_bonus
            } else {
                0.0
            };
            let lm = t.lm + wf + end_bonus;
            let total = t.total + wf + end_bonus;
            let tokens = search.tokens_of(t.hist);
            debug_assert!((total - (t.ac + lm)).abs() < 1e-9);
            let text = detokenize(&tokens);
            candidates.push((
                tokens.clone(),
                Hypothesis {
                    tokens,
                    text,
                    total,
                    acoustic: t.ac,
                    lm,
                },
            ));
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoHypothesis);
    }

    // Dedup identical token sequences, keep the best-scoring copy.
    candidates.sort_by(|a, b| a.1.total.total_cmp(&b.1.total).then_with(|| a.0.cmp(&b.0)));
    let mut out: Vec<Hypothesis> = Vec::new();
    for (tokens, hyp) in candidates {
        if out.iter().any(|h| h.tokens == tokens) {
            continue;
        }
        out.push(hyp);
        if out.len() == cfg.n_best {
            break;
        }
    }
    Ok(out)
}
