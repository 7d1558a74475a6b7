//! Independent oracles shared by the integration suites.
//!
//! Every function here recomputes a quantity the library also computes,
//! using the most direct (usually exhaustive) method available, so the
//! two implementations share no code paths beyond public data accessors.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::Rng;

use sublex::fst::{Label, SymbolTable, Transducer, Weight, EPS};
use sublex::lattice::PosteriorLattice;
use sublex::lm::NgramModel;
use sublex::multigram::MultigramModel;

pub const LN_10: f64 = std::f64::consts::LN_10;

/// Relative comparison with an absolute floor of 1 for small magnitudes.
pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- multigram

/// All ways to split `len` positions into chunks of size 1..=d_max,
/// returned as duration vectors.
pub fn all_covers(len: usize, d_max: usize) -> Vec<Vec<usize>> {
    if len == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for d in 1..=d_max.min(len) {
        for mut rest in all_covers(len - d, d_max) {
            rest.insert(0, d);
            out.push(rest);
        }
    }
    out
}

fn cover_units(word: &[char], cover: &[usize]) -> Vec<String> {
    let mut units = Vec::with_capacity(cover.len());
    let mut at = 0;
    for &d in cover {
        units.push(word[at..at + d].iter().collect());
        at += d;
    }
    units
}

/// ln Σ over segmentations of Π unit probabilities, by enumeration.
/// None when no segmentation is covered by the model.
pub fn oracle_total_ln(word: &str, model: &MultigramModel) -> Option<f64> {
    let chars: Vec<char> = word.chars().collect();
    let mut lns: Vec<f64> = Vec::new();
    'cover: for cover in all_covers(chars.len(), model.d_max()) {
        let mut ln = 0.0;
        for unit in cover_units(&chars, &cover) {
            match model.unit_ln_prob(&unit) {
                Some(p) => ln += p,
                None => continue 'cover,
            }
        }
        lns.push(ln);
    }
    if lns.is_empty() {
        return None;
    }
    let m = lns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(m + lns.iter().map(|l| (l - m).exp()).sum::<f64>().ln())
}

/// Best segmentation by enumeration. Scores follow the segmenter's
/// objective: per-unit ln p, divided by the unit length when
/// `length_penalty` is set. Exact score ties go to the segmentation
/// whose units are longer when read right to left (the DP keeps the
/// longest duration at each boundary).
pub fn oracle_best_segmentation(
    word: &str,
    model: &MultigramModel,
    length_penalty: bool,
) -> Option<(Vec<String>, f64)> {
    let chars: Vec<char> = word.chars().collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    'cover: for cover in all_covers(chars.len(), model.d_max()) {
        let mut score = 0.0;
        for (i, unit) in cover_units(&chars, &cover).iter().enumerate() {
            match model.unit_ln_prob(unit) {
                Some(p) => {
                    score += if length_penalty {
                        p / cover[i] as f64
                    } else {
                        p
                    }
                }
                None => continue 'cover,
            }
        }
        let wins = match &best {
            None => true,
            Some((bc, bs)) => score > *bs || (score == *bs && right_to_left_longer(&cover, bc)),
        };
        if wins {
            best = Some((cover, score));
        }
    }
    best.map(|(cover, score)| (cover_units(&chars, &cover), score))
}

/// True when cover `a` beats cover `b` under the right-to-left
/// longest-unit preference.
fn right_to_left_longer(a: &[usize], b: &[usize]) -> bool {
    let mut ai = a.iter().rev();
    let mut bi = b.iter().rev();
    loop {
        match (ai.next(), bi.next()) {
            (Some(x), Some(y)) if x == y => continue,
            (Some(x), Some(y)) => return x > y,
            // Same positions consumed at equal lengths: identical covers.
            _ => return false,
        }
    }
}

// ----------------------------------------------------------------------- lm

/// Standalone backoff scorer built from a model's public gram tables.
///
/// P(w | h) = stored(h·w)          when h·w is a stored gram
///          = bow(h) + P(w | h′)   otherwise, h′ = h minus its first
///                                 token, bow of an unstored context = 0.
pub struct BackoffOracle {
    grams: HashMap<Vec<String>, (f64, Option<f64>)>,
    vocab: Vec<String>,
}

impl BackoffOracle {
    pub fn from_model(model: &NgramModel) -> Self {
        let mut grams = HashMap::new();
        let mut vocab = Vec::new();
        for k in 1..=model.order() {
            for e in model.grams(k) {
                let key: Vec<String> = e.gram.iter().map(|s| s.to_string()).collect();
                if k == 1 {
                    vocab.push(key[0].clone());
                }
                grams.insert(key, (e.logp, e.bow));
            }
        }
        BackoffOracle { grams, vocab }
    }

    fn known(&self, token: &str) -> bool {
        self.grams.contains_key(&vec![token.to_string()])
    }

    fn map<'a>(&self, token: &'a str) -> &'a str {
        if self.known(token) {
            token
        } else {
            "<unk>"
        }
    }

    /// log10 P(w | h), recursive backoff.
    pub fn prob(&self, context: &[&str], token: &str) -> f64 {
        let mut gram: Vec<String> = context.iter().map(|s| self.map(s).to_string()).collect();
        gram.push(self.map(token).to_string());
        if let Some(&(logp, _)) = self.grams.get(&gram) {
            return logp;
        }
        if context.is_empty() {
            // Unigram of a known token is always stored; only the start
            // marker can reach here. Matches the model's floor constant.
            return -99.0;
        }
        let ctx_key: Vec<String> = context.iter().map(|s| self.map(s).to_string()).collect();
        let bow = self
            .grams
            .get(&ctx_key)
            .and_then(|&(_, b)| b)
            .unwrap_or(0.0);
        bow + self.prob(&context[1..], token)
    }

    /// log10 of the full sequence with start context and end marker.
    pub fn score_sequence(&self, tokens: &[&str]) -> f64 {
        let mut context: Vec<&str> = vec!["<s>"];
        let mut total = 0.0;
        for &t in tokens {
            total += self.prob(&context, t);
            context.push(self.map(t));
        }
        total + self.prob(&context, "</s>")
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }
}

// ---------------------------------------------------------------------- fst

/// The weighted relation of a machine: min path weight per
/// (input string, output string), epsilons stripped. Exhaustive up to
/// `max_arcs` arcs per path, which covers every path of an acyclic
/// machine when set at or above its longest path.
pub fn relation(t: &Transducer, max_arcs: usize) -> HashMap<(Vec<Label>, Vec<Label>), f64> {
    let mut map: HashMap<(Vec<Label>, Vec<Label>), f64> = HashMap::new();
    for p in t.enumerate_paths(max_arcs) {
        let key = (p.ilabels(), p.olabels());
        let w = p.weight.value();
        map.entry(key).and_modify(|c| *c = c.min(w)).or_insert(w);
    }
    map
}

pub fn relations_match(
    a: &HashMap<(Vec<Label>, Vec<Label>), f64>,
    b: &HashMap<(Vec<Label>, Vec<Label>), f64>,
    tol: f64,
) -> bool {
    a.len() == b.len()
        && a.iter()
            .all(|(k, &w)| b.get(k).is_some_and(|&w2| (w - w2).abs() <= tol))
}

/// Relational join: the expected relation of a composition, computed
/// from the two operand relations alone.
pub fn join_relations(
    a: &HashMap<(Vec<Label>, Vec<Label>), f64>,
    b: &HashMap<(Vec<Label>, Vec<Label>), f64>,
) -> HashMap<(Vec<Label>, Vec<Label>), f64> {
    let mut out: HashMap<(Vec<Label>, Vec<Label>), f64> = HashMap::new();
    for ((x, y), &wa) in a {
        for ((y2, z), &wb) in b {
            if y == y2 {
                let key = (x.clone(), z.clone());
                let w = wa + wb;
                out.entry(key).and_modify(|c| *c = c.min(w)).or_insert(w);
            }
        }
    }
    out
}

/// Minimum full-path weight by enumeration, None when nothing accepts.
pub fn oracle_min_weight(t: &Transducer, max_arcs: usize) -> Option<f64> {
    t.enumerate_paths(max_arcs)
        .iter()
        .map(|p| p.weight.value())
        .min_by(|a, b| a.partial_cmp(b).expect("finite weights"))
}

/// Random acyclic machine over `syms`: arcs only go from lower to higher
/// state ids, so every path is short and enumerable. A spine of arcs
/// keeps all states reachable; the last state is always final.
/// `acceptor` forces matching labels; `eps_share` is the chance an arc
/// is an epsilon arc (both labels when acceptor/eps-only machines).
pub fn random_acyclic_machine(
    rng: &mut StdRng,
    syms: &SymbolTable,
    acceptor: bool,
    eps_share: f64,
) -> Transducer {
    let n_syms = (syms.len() - 1) as u32; // real labels are 1..=n_syms
    let n_states = rng.gen_range(2..=8usize);
    let mut t = if acceptor {
        Transducer::acceptor(syms.clone())
    } else {
        Transducer::new(syms.clone(), syms.clone())
    };
    for _ in 0..n_states {
        t.add_state();
    }
    t.set_start(0);
    let pick_labels = |rng: &mut StdRng| -> (Label, Label) {
        if rng.gen_bool(eps_share) {
            (EPS, EPS)
        } else {
            let i = rng.gen_range(1..=n_syms);
            let o = if acceptor {
                i
            } else {
                rng.gen_range(1..=n_syms)
            };
            (i, o)
        }
    };
    let weight = |rng: &mut StdRng| -> Weight {
        // Three decimals keep text round-trips and oracle sums exact
        // enough for 1e-9 comparisons.
        Weight::new((rng.gen_range(0..5000) as f64) / 1000.0)
    };
    for s in 0..n_states - 1 {
        let (i, o) = pick_labels(rng);
        let w = weight(rng);
        t.add_arc(s, sublex::fst::Arc::new(i, o, w, s + 1));
    }
    let extra = rng.gen_range(0..=2 * n_states);
    for _ in 0..extra {
        let src = rng.gen_range(0..n_states - 1);
        let dst = rng.gen_range(src + 1..n_states);
        let (i, o) = pick_labels(rng);
        let w = weight(rng);
        t.add_arc(src, sublex::fst::Arc::new(i, o, w, dst));
    }
    for s in 0..n_states {
        if s + 1 == n_states || rng.gen_bool(0.3) {
            t.set_final(s, weight(rng));
        }
    }
    t
}

// ------------------------------------------------------------ edit distance

/// Classic full-matrix Levenshtein distance, the textbook recurrence.
pub fn plain_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in dp[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = dp[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }
    dp[a.len()][b.len()]
}

// ------------------------------------------------------------- joint decode

/// Minimum alignment cost of `text` against the frame posteriors: the
/// cheapest frame labeling that collapses (merge repeats, drop blanks)
/// to exactly `text`. Standard alignment lattice over the blank-padded
/// symbol sequence. `f64::INFINITY` when the text cannot fit.
pub fn oracle_alignment_cost(lat: &PosteriorLattice, text: &str) -> f64 {
    const FLOOR: f64 = 1e-12;
    let frames = lat.rows.len();
    let char_label = |c: char| -> Option<u32> {
        let name = if c == ' ' {
            "<space>".to_string()
        } else {
            c.to_string()
        };
        lat.labels.id(&name)
    };
    let Some(chars) = text.chars().map(char_label).collect::<Option<Vec<u32>>>() else {
        return f64::INFINITY;
    };
    let blank = 1u32;
    let cost = |t: usize, label: u32| -> f64 { -(lat.rows[t][label as usize].max(FLOOR)).ln() };

    // Padded sequence: blank, c1, blank, c2, ..., cm, blank.
    let m = chars.len();
    if frames == 0 {
        return if m == 0 { 0.0 } else { f64::INFINITY };
    }
    let z = |k: usize| -> u32 {
        if k.is_multiple_of(2) {
            blank
        } else {
            chars[k / 2]
        }
    };
    let zlen = 2 * m + 1;
    let inf = f64::INFINITY;
    let mut dp = vec![inf; zlen];
    dp[0] = cost(0, z(0));
    if zlen > 1 {
        dp[1] = cost(0, z(1));
    }
    for t in 1..frames {
        let mut next = vec![inf; zlen];
        for (k, &d) in dp.iter().enumerate() {
            if d.is_infinite() {
                continue;
            }
            // stay
            let c = d + cost(t, z(k));
            if c < next[k] {
                next[k] = c;
            }
            // advance one
            if k + 1 < zlen {
                let c = d + cost(t, z(k + 1));
                if c < next[k + 1] {
                    next[k + 1] = c;
                }
            }
            // skip the blank between two distinct symbols
            if k + 2 < zlen && z(k + 2) != blank && z(k + 2) != z(k) {
                let c = d + cost(t, z(k + 2));
                if c < next[k + 2] {
                    next[k + 2] = c;
                }
            }
        }
        dp = next;
    }
    let mut best = dp[zlen - 1];
    if zlen >= 2 && dp[zlen - 2] < best {
        best = dp[zlen - 2];
    }
    best
}

/// Exhaustive joint argmin over every token sequence the lexicon can
/// form (bounded by the frame budget), scoring
/// alignment + γ·(−ln P(tokens)) + word count·(−ln β).
/// Word count mirrors the decoder: boundary tokens plus one for any
/// non-empty output. Returns the winning tokens and total cost.
pub fn exhaustive_joint_best(
    lat: &PosteriorLattice,
    units: &[(String, String)], // (token, spelling)
    lm: &BackoffOracle,
    gamma: f64,
    beta: f64,
) -> (Vec<String>, f64) {
    let frames = lat.rows.len();
    let mut best: Option<(Vec<String>, f64)> = None;
    let mut current: Vec<usize> = Vec::new();

    #[allow(clippy::too_many_arguments)]
    fn visit(
        units: &[(String, String)],
        lat: &PosteriorLattice,
        lm: &BackoffOracle,
        gamma: f64,
        beta: f64,
        frames: usize,
        current: &mut Vec<usize>,
        chars_used: usize,
        best: &mut Option<(Vec<String>, f64)>,
    ) {
        let tokens: Vec<&str> = current.iter().map(|&i| units[i].0.as_str()).collect();
        let text: String = current.iter().map(|&i| units[i].1.as_str()).collect();
        let ac = oracle_alignment_cost(lat, &text);
        if ac.is_finite() {
            let lm_ln = -lm.score_sequence(&tokens) * LN_10;
            let words =
                tokens.iter().filter(|t| **t == "<sp>").count() + usize::from(!tokens.is_empty());
            let total = ac + gamma * lm_ln + words as f64 * -beta.ln();
            let better = match best {
                None => true,
                Some((_, b)) => total < *b,
            };
            if better {
                *best = Some((tokens.iter().map(|t| t.to_string()).collect(), total));
            }
        }
        for (i, (_, spelling)) in units.iter().enumerate() {
            let n = spelling.chars().count();
            if chars_used + n <= frames {
                current.push(i);
                visit(
                    units,
                    lat,
                    lm,
                    gamma,
                    beta,
                    frames,
                    current,
                    chars_used + n,
                    best,
                );
                current.pop();
            }
        }
    }

    visit(
        units,
        lat,
        lm,
        gamma,
        beta,
        frames,
        &mut current,
        0,
        &mut best,
    );
    best.expect("the empty sequence always aligns")
}
