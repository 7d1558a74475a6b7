//! Backoff n-gram language models over unit token sequences, estimated
//! with interpolated modified Kneser-Ney smoothing.
//!
//! Conventions:
//!
//! * Sequences are padded with a single [`SEQ_START`] / [`SEQ_END`] pair.
//! * The predictable vocabulary is every observed token plus
//!   [`WORD_BOUNDARY`], [`SEQ_END`], and [`UNKNOWN`]; [`SEQ_START`] is a
//!   context-only token that is never predicted (its table entry carries
//!   log-prob −99, matching common toolkit output).
//! * Lower-order distributions use continuation counts (how many distinct
//!   predecessors a gram has) except for grams starting with
//!   [`SEQ_START`], which keep raw counts; the top order always uses raw
//!   counts.
//! * Stored probabilities are interpolated, and each context's backoff
//!   weight is computed as the ratio of its unseen stored mass to its
//!   unseen lower-order mass, so the model sums to one over the full
//!   vocabulary to within rounding error in every context.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{split_words, CorpusLine};
use crate::error::{Error, Result};
use crate::multigram::MultigramLexicon;
use crate::tokens::{SEQ_END, SEQ_START, UNKNOWN, WORD_BOUNDARY};

/// Raw n-gram occurrence counts at every order from 1 to `order`.
#[derive(Debug)]
pub struct NgramCounts {
    order: usize,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// `counts[k-1]`: raw counts of k-grams (token-id keys).
    counts: Vec<HashMap<Box<[u32]>, u64>>,
}

impl NgramCounts {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Raw count of a token gram (0 when unseen or any token is unknown).
    pub fn count(&self, gram: &[&str]) -> u64 {
        if gram.is_empty() || gram.len() > self.order {
            return 0;
        }
        let ids: Option<Vec<u32>> = gram.iter().map(|t| self.index.get(*t).copied()).collect();
        match ids {
            Some(ids) => *self.counts[ids.len() - 1].get(ids.as_slice()).unwrap_or(&0),
            None => 0,
        }
    }

    /// Total number of counted k-grams (token instances for k = 1).
    pub fn total(&self, k: usize) -> u64 {
        self.counts
            .get(k - 1)
            .map(|m| m.values().sum())
            .unwrap_or(0)
    }

    pub fn distinct(&self, k: usize) -> usize {
        self.counts.get(k - 1).map(HashMap::len).unwrap_or(0)
    }
}

/// Count n-grams over token sequences.
///
/// With `concatenate` the sequences form one stream joined by
/// [`WORD_BOUNDARY`] tokens and padded once; otherwise every sequence is
/// padded and counted independently.
pub fn count_ngrams(
    sequences: &[Vec<String>],
    order: usize,
    concatenate: bool,
) -> Result<NgramCounts> {
    if order == 0 {
        return Err(Error::InvalidParameter("n-gram order must be >= 1".into()));
    }
    let nonempty: Vec<&Vec<String>> = sequences.iter().filter(|s| !s.is_empty()).collect();
    if nonempty.is_empty() {
        return Err(Error::EmptyInput("no token sequences to count".into()));
    }

    // Deterministic ids: collect the vocabulary first and sort it.
    let mut names: BTreeSet<&str> = nonempty
        .iter()
        .flat_map(|s| s.iter().map(String::as_str))
        .collect();
    names.insert(SEQ_START);
    names.insert(SEQ_END);
    names.insert(WORD_BOUNDARY);
    names.insert(UNKNOWN);
    let vocab: Vec<String> = names.into_iter().map(str::to_string).collect();
    let index: HashMap<String, u32> = vocab
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();
    let id = |t: &str| index[t];

    let streams: Vec<Vec<u32>> = if concatenate {
        let mut stream = vec![id(SEQ_START)];
        for (i, seq) in nonempty.iter().enumerate() {
            if i > 0 {
                stream.push(id(WORD_BOUNDARY));
            }
            stream.extend(seq.iter().map(|t| id(t)));
        }
        stream.push(id(SEQ_END));
        vec![stream]
    } else {
        nonempty
            .iter()
            .map(|seq| {
                let mut stream = vec![id(SEQ_START)];
                stream.extend(seq.iter().map(|t| id(t)));
                stream.push(id(SEQ_END));
                stream
            })
            .collect()
    };

    let mut counts: Vec<HashMap<Box<[u32]>, u64>> = vec![HashMap::new(); order];
    for stream in &streams {
        for k in 1..=order {
            for window in stream.windows(k) {
                *counts[k - 1].entry(window.into()).or_insert(0) += 1;
            }
        }
    }

    Ok(NgramCounts {
        order,
        vocab,
        index,
        counts,
    })
}

/// One stored gram: log10 probability plus, for grams that serve as
/// contexts, a log10 backoff weight.
#[derive(Debug, Clone, Copy)]
struct Entry {
    logp: f64,
    bow: Option<f64>,
}

/// A gram exposed for serialization or graph building.
#[derive(Debug, Clone)]
pub struct GramEntry<'a> {
    pub gram: Vec<&'a str>,
    pub logp: f64,
    pub bow: Option<f64>,
}

/// A backoff n-gram model with log10 scores.
#[derive(Debug)]
pub struct NgramModel {
    order: usize,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    entries: Vec<HashMap<Box<[u32]>, Entry>>,
}

/// Placeholder log10 score for events that are never predicted.
const LOG_NEVER: f64 = -99.0;

/// Estimate an interpolated modified Kneser-Ney model from raw counts.
///
/// Discounts per order follow the count-of-count formulas
/// `Y = n1/(n1+2·n2)`, `D1 = 1−2Y·n2/n1`, `D2 = 2−3Y·n3/n2`,
/// `D3 = 3−4Y·n4/n3`; when any of them falls outside its open validity
/// interval (0,1)/(0,2)/(0,3) — degenerate count-of-count statistics —
/// that order falls back to a flat 0.5 discount.
pub fn estimate_kneser_ney(counts: &NgramCounts) -> Result<NgramModel> {
    let order = counts.order;
    let start_id = counts.index[SEQ_START];
    let end_id = counts.index[SEQ_END];

    // Predictable vocabulary: everything except the start marker.
    let predictable: Vec<u32> = (0..counts.vocab.len() as u32)
        .filter(|&i| i != start_id)
        .collect();
    let v_pred = predictable.len() as f64;

    // Adjusted counts. Top order: raw. Below: continuation counts
    // (distinct predecessors), except grams starting with the start
    // marker, which keep raw counts because nothing can precede them.
    let mut adjusted: Vec<HashMap<Box<[u32]>, u64>> = Vec::with_capacity(order);
    for k in 1..=order {
        if k == order {
            adjusted.push(counts.counts[k - 1].clone());
        } else {
            let mut m: HashMap<Box<[u32]>, u64> = HashMap::new();
            for key in counts.counts[k].keys() {
                // key = predecessor · gram; distinct keys mean distinct
                // (predecessor, gram) pairs, so this counts predecessors.
                let gram = &key[1..];
                if gram[0] == start_id {
                    continue;
                }
                *m.entry(gram.into()).or_insert(0) += 1;
            }
            for (key, &c) in &counts.counts[k - 1] {
                if key[0] == start_id {
                    m.insert(key.clone(), c);
                }
            }
            adjusted.push(m);
        }
    }

    // Per-order discounts.
    let mut discounts: Vec<[f64; 3]> = Vec::with_capacity(order);
    for k in 1..=order {
        let mut n = [0u64; 4];
        for (key, &c) in &adjusted[k - 1] {
            if k == 1 && key[0] == start_id {
                continue; // the −99 placeholder is not an estimated event
            }
            if (1..=4).contains(&c) {
                n[(c - 1) as usize] += 1;
            }
        }
        let (n1, n2, n3, n4) = (n[0] as f64, n[1] as f64, n[2] as f64, n[3] as f64);
        let d = if n1 > 0.0 && n2 > 0.0 && n3 > 0.0 && n4 > 0.0 {
            let y = n1 / (n1 + 2.0 * n2);
            [
                1.0 - 2.0 * y * n2 / n1,
                2.0 - 3.0 * y * n3 / n2,
                3.0 - 4.0 * y * n4 / n3,
            ]
        } else {
            [f64::NAN; 3]
        };
        let valid =
            d[0] > 0.0 && d[0] < 1.0 && d[1] > 0.0 && d[1] < 2.0 && d[2] > 0.0 && d[2] < 3.0;
        if valid {
            discounts.push(d);
        } else {
            log::warn!(
                "order-{k} count-of-count statistics are degenerate; using a flat 0.5 discount"
            );
            discounts.push([0.5; 3]);
        }
    }
    let discount_for = |k: usize, c: u64| -> f64 {
        let d = &discounts[k - 1];
        match c {
            1 => d[0],
            2 => d[1],
            _ => d[2],
        }
    };

    // Estimated linear probabilities per order, then converted to logs.
    let mut probs: Vec<HashMap<Box<[u32]>, f64>> = Vec::with_capacity(order);
    let mut bows: Vec<HashMap<Box<[u32]>, f64>> = Vec::with_capacity(order);

    for k in 1..=order {
        let mut level: HashMap<Box<[u32]>, f64> = HashMap::new();
        let mut level_bows: HashMap<Box<[u32]>, f64> = HashMap::new();

        // Group grams by context (first k−1 tokens).
        let mut by_context: HashMap<&[u32], Vec<(u32, u64)>> = HashMap::new();
        for (key, &c) in &adjusted[k - 1] {
            if k == 1 && key[0] == start_id {
                continue;
            }
            by_context
                .entry(&key[..k - 1])
                .or_default()
                .push((key[k - 1], c));
        }

        for (ctx, mut items) in by_context {
            items.sort_by_key(|&(w, _)| w);
            let denom: f64 = items.iter().map(|&(_, c)| c as f64).sum();
            let lower = |w: u32| -> f64 {
                if k == 1 {
                    1.0 / v_pred
                } else {
                    let mut sub: Vec<u32> = ctx[1..].to_vec();
                    sub.push(w);
                    probs[k - 2][sub.as_slice()]
                }
            };
            let lambda: f64 = items.iter().map(|&(_, c)| discount_for(k, c)).sum::<f64>() / denom;
            let mut seen_stored = 0.0;
            let mut seen_lower = 0.0;
            for &(w, c) in &items {
                let pl = lower(w);
                let p = (c as f64 - discount_for(k, c)) / denom + lambda * pl;
                let mut gram: Vec<u32> = ctx.to_vec();
                gram.push(w);
                level.insert(gram.into_boxed_slice(), p);
                seen_stored += p;
                seen_lower += pl;
            }
            // Backoff weight as a mass ratio: exact normalization even
            // after rounding. Falls back to 0 when no mass remains.
            let bow = if (1.0 - seen_lower).abs() > 1e-13 {
                ((1.0 - seen_stored) / (1.0 - seen_lower)).max(0.0)
            } else {
                0.0
            };
            level_bows.insert(ctx.to_vec().into_boxed_slice(), bow);
        }
        probs.push(level);
        bows.push(level_bows);
    }

    // Assemble entries. Unigrams: full predictable vocabulary (unseen
    // members get their interpolation share) plus the −99 start marker.
    let mut entries: Vec<HashMap<Box<[u32]>, Entry>> = vec![HashMap::new(); order];
    let empty_ctx: &[u32] = &[];
    let lambda_uni = bows[0].get(empty_ctx).copied().unwrap_or(0.0);
    for &w in &predictable {
        let key: Box<[u32]> = vec![w].into_boxed_slice();
        let p = probs[0].get(&key).copied().unwrap_or(lambda_uni / v_pred);
        entries[0].insert(
            key,
            Entry {
                logp: p.log10(),
                bow: None,
            },
        );
    }
    entries[0].insert(
        vec![start_id].into_boxed_slice(),
        Entry {
            logp: LOG_NEVER,
            bow: None,
        },
    );
    for k in 2..=order {
        for (key, &p) in &probs[k - 1] {
            entries[k - 1].insert(
                key.clone(),
                Entry {
                    logp: p.log10(),
                    bow: None,
                },
            );
        }
    }
    // Attach backoff weights to their context entries one level down.
    for k in 2..=order {
        for (ctx, &bow) in &bows[k - 1] {
            let entry = entries[k - 2].get_mut(ctx).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "context of length {} has no entry of its own",
                    ctx.len()
                ))
            })?;
            entry.bow = Some(if bow > 0.0 { bow.log10() } else { LOG_NEVER });
        }
    }

    // Nothing ever follows the end marker, so it never carries a bow.
    debug_assert!(entries[0]
        .get(&vec![end_id].into_boxed_slice())
        .is_some_and(|e| e.bow.is_none()));

    Ok(NgramModel {
        order,
        vocab: counts.vocab.clone(),
        index: counts.index.clone(),
        entries,
    })
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored k-grams.
    pub fn num_grams(&self, k: usize) -> usize {
        self.entries.get(k - 1).map(HashMap::len).unwrap_or(0)
    }

    /// Every token that can appear in a prediction, sorted; excludes the
    /// start marker.
    pub fn predictable_tokens(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.entries[0]
            .keys()
            .map(|k| self.vocab[k[0] as usize].as_str())
            .filter(|t| *t != SEQ_START)
            .collect();
        v.sort_unstable();
        v
    }

    /// Stored k-grams with their scores, sorted by token strings.
    pub fn grams(&self, k: usize) -> Vec<GramEntry<'_>> {
        let mut out: Vec<GramEntry<'_>> = self
            .entries
            .get(k - 1)
            .map(|level| {
                level
                    .iter()
                    .map(|(key, e)| GramEntry {
                        gram: key
                            .iter()
                            .map(|&i| self.vocab[i as usize].as_str())
                            .collect(),
                        logp: e.logp,
                        bow: e.bow,
                    })
                    .collect()
            })
            .unwrap_or_default();
        out.sort_by(|a, b| a.gram.cmp(&b.gram));
        out
    }

    fn token_id(&self, token: &str) -> u32 {
        self.index
            .get(token)
            .or_else(|| self.index.get(UNKNOWN))
            .copied()
            .expect("models always intern the unknown marker")
    }

    /// log10 P(token | context), longest-suffix backoff semantics.
    /// Unknown tokens (in the context or predicted) map to the unknown
    /// marker; contexts longer than order−1 are truncated on the left.
    pub fn eval_log10(&self, context: &[&str], token: &str) -> f64 {
        let w = self.token_id(token);
        let keep = context.len().min(self.order.saturating_sub(1));
        let ctx: Vec<u32> = context[context.len() - keep..]
            .iter()
            .map(|t| self.token_id(t))
            .collect();
        self.eval_ids(&ctx, w)
    }

    fn eval_ids(&self, context: &[u32], w: u32) -> f64 {
        let mut gram: Vec<u32> = context.to_vec();
        gram.push(w);
        if let Some(e) = self.entries[gram.len() - 1].get(gram.as_slice()) {
            return e.logp;
        }
        if context.is_empty() {
            // Every predictable token has a unigram entry; only the start
            // marker can reach here, and it is never a valid prediction.
            return LOG_NEVER;
        }
        let bow = self.entries[context.len() - 1]
            .get(context)
            .and_then(|e| e.bow)
            .unwrap_or(0.0);
        bow + self.eval_ids(&context[1..], w)
    }

    /// Total log10 probability of a token sequence, including the end
    /// marker: log10 P(t1 | <s>) + ... + log10 P(</s> | ...).
    pub fn score_sequence(&self, tokens: &[&str]) -> f64 {
        let mut context: Vec<&str> = vec![SEQ_START];
        let mut total = 0.0;
        for &t in tokens {
            total += self.eval_log10(&context, t);
            // Push the mapped token so unknown words become the unknown
            // marker in later contexts, mirroring eval's own mapping.
            context.push(if self.index.contains_key(t) {
                t
            } else {
                UNKNOWN
            });
        }
        total + self.eval_log10(&context, SEQ_END)
    }

    /// Corpus perplexity: 10^(−total / events), one end-marker event per
    /// sequence.
    pub fn perplexity(&self, sequences: &[Vec<String>]) -> Result<f64> {
        let mut total = 0.0;
        let mut events = 0usize;
        for seq in sequences {
            let toks: Vec<&str> = seq.iter().map(String::as_str).collect();
            total += self.score_sequence(&toks);
            events += toks.len() + 1;
        }
        if events == 0 {
            return Err(Error::EmptyInput("no sequences to score".into()));
        }
        Ok(10f64.powf(-total / events as f64))
    }

    /// Serialize in the standard backoff table format.
    pub fn write_arpa(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("\\data\\\n");
        for k in 1..=self.order {
            let _ = writeln!(out, "ngram {k}={}", self.num_grams(k));
        }
        for k in 1..=self.order {
            let _ = writeln!(out, "\n\\{k}-grams:");
            for e in self.grams(k) {
                let _ = write!(out, "{:.7}\t{}", e.logp, e.gram.join(" "));
                if let Some(bow) = e.bow {
                    let _ = write!(out, "\t{bow:.7}");
                }
                out.push('\n');
            }
        }
        out.push_str("\n\\end\\\n");
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Parse the backoff table format written by [`Self::write_arpa`].
    pub fn read_arpa(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut declared: Vec<usize> = Vec::new();
        let mut vocab: Vec<String> = Vec::new();
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut entries: Vec<HashMap<Box<[u32]>, Entry>> = Vec::new();
        let mut section: Option<usize> = None;
        let mut in_data = false;
        let mut saw_end = false;

        for (lineno, line) in raw.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if line == "\\data\\" {
                in_data = true;
                continue;
            }
            if line == "\\end\\" {
                saw_end = true;
                break;
            }
            if let Some(rest) = line.strip_prefix('\\') {
                if let Some(k) = rest
                    .strip_suffix("-grams:")
                    .and_then(|k| k.parse::<usize>().ok())
                {
                    if k != entries.len() + 1 || k > declared.len() {
                        return Err(Error::format(path, lineno + 1, "sections out of order"));
                    }
                    entries.push(HashMap::new());
                    section = Some(k);
                    in_data = false;
                    continue;
                }
            }
            if in_data {
                let (label, count) = line
                    .split_once('=')
                    .ok_or_else(|| Error::format(path, lineno + 1, "bad count declaration"))?;
                if !label.trim().starts_with("ngram") {
                    return Err(Error::format(path, lineno + 1, "bad count declaration"));
                }
                let count: usize = count
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(path, lineno + 1, "bad count"))?;
                declared.push(count);
                continue;
            }
            let Some(k) = section else {
                return Err(Error::format(path, lineno + 1, "entry outside any section"));
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(Error::format(path, lineno + 1, "expected 2 or 3 fields"));
            }
            let logp: f64 = fields[0]
                .parse()
                .map_err(|_| Error::format(path, lineno + 1, "bad log probability"))?;
            let toks: Vec<&str> = fields[1].split(' ').collect();
            if toks.len() != k {
                return Err(Error::format(
                    path,
                    lineno + 1,
                    format!("expected a {k}-gram, got {} tokens", toks.len()),
                ));
            }
            let bow: Option<f64> = match fields.get(2) {
                Some(s) => Some(
                    s.parse()
                        .map_err(|_| Error::format(path, lineno + 1, "bad backoff weight"))?,
                ),
                None => None,
            };
            let mut ids: Vec<u32> = Vec::with_capacity(toks.len());
            for t in &toks {
                match index.get(*t) {
                    Some(&i) => ids.push(i),
                    None if k == 1 => {
                        let i = vocab.len() as u32;
                        vocab.push(t.to_string());
                        index.insert(t.to_string(), i);
                        ids.push(i);
                    }
                    None => {
                        return Err(Error::format(
                            path,
                            lineno + 1,
                            format!("token {t:?} not declared in the unigram section"),
                        ))
                    }
                }
            }
            entries[k - 1].insert(ids.into_boxed_slice(), Entry { logp, bow });
        }

        if !saw_end {
            return Err(Error::format(path, raw.lines().count(), "missing \\end\\"));
        }
        if entries.len() != declared.len() {
            return Err(Error::format(path, 1, "missing n-gram sections"));
        }
        for (k, &want) in declared.iter().enumerate() {
            let got = entries[k].len();
            if got != want {
                return Err(Error::format(
                    path,
                    1,
                    format!("section {} declares {want} entries but has {got}", k + 1),
                ));
            }
        }
        for t in [SEQ_START, SEQ_END, UNKNOWN, WORD_BOUNDARY] {
            if !index.contains_key(t) {
                index.insert(t.to_string(), vocab.len() as u32);
                vocab.push(t.to_string());
            }
        }
        Ok(NgramModel {
            order: declared.len(),
            vocab,
            index,
            entries,
        })
    }
}

/// Share of running test words whose characters cannot be concatenated
/// from lexicon units (out-of-vocabulary rate) and its complement
/// (coverage), both in percent.
pub fn oov_and_coverage(lexicon: &MultigramLexicon, lines: &[CorpusLine]) -> Result<(f64, f64)> {
    let units: Vec<Vec<char>> = lexicon
        .iter()
        .map(|u| u.chars().collect::<Vec<char>>())
        .collect();
    let unit_set: std::collections::HashSet<&[char]> = units.iter().map(Vec::as_slice).collect();
    let max_len = units.iter().map(Vec::len).max().unwrap_or(0);
    if max_len == 0 {
        return Err(Error::EmptyInput("lexicon has no units".into()));
    }

    let mut total = 0u64;
    let mut missed = 0u64;
    for line in lines {
        for word in split_words(&line.text) {
            total += 1;
            let chars: Vec<char> = word.chars().collect();
            let n = chars.len();
            let mut reach = vec![false; n + 1];
            reach[0] = true;
            for i in 0..n {
                if !reach[i] {
                    continue;
                }
                for d in 1..=max_len.min(n - i) {
                    if reach[i + d] {
                        continue;
                    }
                    if unit_set.contains(&chars[i..i + d]) {
                        reach[i + d] = true;
                    }
                }
            }
            if !reach[n] {
                missed += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no words in the evaluation lines".into()));
    }
    let oov = 100.0 * missed as f64 / total as f64;
    Ok((oov, 100.0 - oov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusLine;
    use crate::multigram::MultigramLexicon;

    fn seqs(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split(' ').map(str::to_string).collect())
            .collect()
    }

    fn p(model: &NgramModel, ctx: &[&str], w: &str) -> f64 {
        10f64.powf(model.eval_log10(ctx, w))
    }

    /// Hand-computed reference for the corpus "a a a b", order 2.
    ///
    /// Stream: <s> a a a b </s>. Continuation unigram counts: a:2, b:1,
    /// </s>:1 → n3 = 0, so both orders use the flat 0.5 discount.
    /// Predictable vocabulary: {a, b, </s>, <sp>, <unk>}, size 5.
    ///
    /// Unigrams: denom 4, λ = 1.5/4 = 0.375:
    ///   P(a) = 1.5/4 + 0.375/5 = 0.45;  P(b) = P(</s>) = 0.2;
    ///   P(<sp>) = P(<unk>) = 0.075.
    /// Bigrams (raw): context (a): denom 3, λ = 1/3:
    ///   P(a|a) = 1.5/3 + 0.45/3 = 0.65;  P(b|a) = 0.5/3 + 0.2/3 = 7/30.
    /// Context (<s>): P(a|<s>) = 0.5 + 0.5·0.45 = 0.725, bow 0.5.
    /// Context (b): P(</s>|b) = 0.5 + 0.5·0.2 = 0.6, bow 0.5.
    #[test]
    fn kneser_ney_matches_hand_computation() {
        let counts = count_ngrams(&seqs(&["a a a b"]), 2, false).unwrap();
        let m = estimate_kneser_ney(&counts).unwrap();

        let tol = 1e-12;
        assert!((p(&m, &[], "a") - 0.45).abs() < tol);
        assert!((p(&m, &[], "b") - 0.2).abs() < tol);
        assert!((p(&m, &[], "</s>") - 0.2).abs() < tol);
        assert!((p(&m, &[], "<sp>") - 0.075).abs() < tol);
        assert!((p(&m, &[], "<unk>") - 0.075).abs() < tol);

        assert!((p(&m, &["a"], "a") - 0.65).abs() < tol);
        assert!((p(&m, &["a"], "b") - 7.0 / 30.0).abs() < tol);
        assert!((p(&m, &["<s>"], "a") - 0.725).abs() < tol);
        assert!((p(&m, &["b"], "</s>") - 0.6).abs() < tol);

        // Backed-off events: bow(a) = λ(a) = 1/3.
        assert!((p(&m, &["a"], "</s>") - 0.2 / 3.0).abs() < tol);
        assert!((p(&m, &["a"], "zzz") - 0.075 / 3.0).abs() < tol);
    }

    #[test]
    fn every_context_sums_to_one() {
        let counts = count_ngrams(&seqs(&["a a a b", "b a b"]), 3, false).unwrap();
        let m = estimate_kneser_ney(&counts).unwrap();
        let vocab = m.predictable_tokens();
        for ctx in [
            vec![],
            vec!["a"],
            vec!["b"],
            vec!["<s>"],
            vec!["<s>", "a"],
            vec!["a", "b"],
            vec!["b", "b"], // unseen context
            vec!["<unk>"],  // unknown context
        ] {
            let sum: f64 = vocab.iter().map(|w| p(&m, &ctx, w)).sum();
            assert!((sum - 1.0).abs() < 1e-9, "context {ctx:?} sums to {sum}");
        }
    }

    #[test]
    fn score_sequence_composes_conditionals() {
        let counts = count_ngrams(&seqs(&["a a a b"]), 2, false).unwrap();
        let m = estimate_kneser_ney(&counts).unwrap();
        let expected = (0.725f64 * (7.0 / 30.0) * 0.6).log10();
        assert!((m.score_sequence(&["a", "b"]) - expected).abs() < 1e-12);
        // Empty sequence: P(</s> | <s>) backs off through bow(<s>) = 0.5.
        assert!((m.score_sequence(&[]) - (0.5f64 * 0.2).log10()).abs() < 1e-12);
    }

    #[test]
    fn unknown_tokens_map_to_the_unknown_marker() {
        let counts = count_ngrams(&seqs(&["a a a b"]), 2, false).unwrap();
        let m = estimate_kneser_ney(&counts).unwrap();
        assert_eq!(
            m.score_sequence(&["zzz"]),
            m.score_sequence(&["<unk>"]),
            "out-of-vocabulary words score exactly like the unknown marker"
        );
    }

    #[test]
    fn concatenation_counts_across_sequence_joints() {
        let separate = count_ngrams(&seqs(&["a", "b"]), 2, false).unwrap();
        assert_eq!(separate.count(&["a", "<sp>"]), 0);
        assert_eq!(separate.count(&["<s>", "a"]), 1);
        assert_eq!(separate.count(&["<s>", "b"]), 1);

        let joined = count_ngrams(&seqs(&["a", "b"]), 2, true).unwrap();
        assert_eq!(joined.count(&["a", "<sp>"]), 1);
        assert_eq!(joined.count(&["<sp>", "b"]), 1);
        assert_eq!(joined.count(&["<s>", "b"]), 0);
        assert_eq!(joined.total(1), 5); // <s> a <sp> b </s>
    }

    #[test]
    fn window_counts_are_consistent_across_orders() {
        let sequences = seqs(&["a b a a", "b b a", "a"]);
        let counts = count_ngrams(&sequences, 3, false).unwrap();
        // Each padded sequence of length L contributes L unigrams and
        // L−1 bigrams.
        let padded: u64 = sequences.iter().map(|s| s.len() as u64 + 2).sum();
        assert_eq!(counts.total(1), padded);
        assert_eq!(counts.total(2), padded - 3);
        assert_eq!(counts.total(3), padded - 6);
    }

    #[test]
    fn rejects_empty_and_invalid_inputs() {
        assert!(matches!(
            count_ngrams(&seqs(&["a b"]), 0, false),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            count_ngrams(&[], 2, false),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            count_ngrams(&[vec![]], 2, false),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn arpa_round_trip_preserves_scores_and_bytes() {
        let counts = count_ngrams(&seqs(&["a a a b", "b a b", "a b a"]), 3, false).unwrap();
        let m = estimate_kneser_ney(&counts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.arpa");
        m.write_arpa(&path).unwrap();
        let back = NgramModel::read_arpa(&path).unwrap();

        assert_eq!(back.order(), 3);
        for k in 1..=3 {
            assert_eq!(back.num_grams(k), m.num_grams(k));
        }
        for ctx in [vec![], vec!["a"], vec!["<s>", "a"], vec!["b", "a"]] {
            for w in ["a", "b", "</s>", "<unk>"] {
                let d = (m.eval_log10(&ctx, w) - back.eval_log10(&ctx, w)).abs();
                assert!(d < 1e-6, "score drift {d} for {ctx:?} → {w}");
            }
        }

        // A second write is byte-identical.
        let first = std::fs::read_to_string(&path).unwrap();
        let path2 = dir.path().join("model2.arpa");
        back.write_arpa(&path2).unwrap();
        let second = std::fs::read_to_string(&path2).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn arpa_reader_validates_declared_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.arpa");
        std::fs::write(
            &path,
            "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.5\ta\n\n\\end\\\n",
        )
        .unwrap();
        assert!(matches!(
            NgramModel::read_arpa(&path),
            Err(Error::FileFormat { .. })
        ));
    }

    /// Transparent re-implementation of backoff lookup used to verify
    /// the recursive evaluator: find the longest stored suffix match,
    /// multiplying backoff weights for every level skipped.
    fn oracle_eval(m: &NgramModel, context: &[&str], token: &str) -> f64 {
        let keep = context.len().min(m.order() - 1);
        let mut ctx: Vec<String> = context[context.len() - keep..]
            .iter()
            .map(|t| {
                if m.predictable_tokens().contains(t) || *t == SEQ_START {
                    t.to_string()
                } else {
                    UNKNOWN.to_string()
                }
            })
            .collect();
        let token = if m.predictable_tokens().contains(&token) {
            token.to_string()
        } else {
            UNKNOWN.to_string()
        };
        let mut bow_total = 0.0;
        loop {
            let gram: Vec<&str> = ctx
                .iter()
                .map(String::as_str)
                .chain(std::iter::once(token.as_str()))
                .collect();
            let hit = m.grams(gram.len()).into_iter().find(|e| e.gram == gram);
            if let Some(e) = hit {
                return bow_total + e.logp;
            }
            if ctx.is_empty() {
                return bow_total + LOG_NEVER;
            }
            let ctx_ref: Vec<&str> = ctx.iter().map(String::as_str).collect();
            if let Some(e) = m.grams(ctx.len()).into_iter().find(|e| e.gram == ctx_ref) {
                if let Some(b) = e.bow {
                    bow_total += b;
                }
            }
            ctx.remove(0);
        }
    }

    #[test]
    fn evaluator_matches_transparent_backoff_oracle() {
        let counts =
            count_ngrams(&seqs(&["a a a b", "b a b", "a b a", "b b b a"]), 3, false).unwrap();
        let m = estimate_kneser_ney(&counts).unwrap();
        for ctx in [
            vec![],
            vec!["a"],
            vec!["b", "a"],
            vec!["<s>"],
            vec!["a", "a"],
            vec!["zzz", "a"],
            vec!["b", "b"],
        ] {
            for w in ["a", "b", "</s>", "<sp>", "zzz"] {
                let got = m.eval_log10(&ctx, w);
                let want = oracle_eval(&m, &ctx, w);
                assert!(
                    (got - want).abs() < 1e-12,
                    "eval mismatch for {ctx:?} → {w}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn perplexity_matches_direct_computation() {
        let counts = count_ngrams(&seqs(&["a a a b"]), 2, false).unwrap();
        let m = estimate_kneser_ney(&counts).unwrap();
        let eval_set = seqs(&["a b", "a a"]);
        let total = m.score_sequence(&["a", "b"]) + m.score_sequence(&["a", "a"]);
        let events = 3 + 3;
        let want = 10f64.powf(-total / events as f64);
        let got = m.perplexity(&eval_set).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!(got > 1.0);
    }

    #[test]
    fn oov_and_coverage_are_complementary() {
        let lexicon =
            MultigramLexicon::from_units(["ab", "a", "c"].iter().map(|s| s.to_string()), "test");
        let lines = vec![
            CorpusLine {
                text: "abc aba ca".into(),
                language_tag: "test".into(),
            },
            CorpusLine {
                text: "xq ab".into(),
                language_tag: "test".into(),
            },
        ];
        // Words: abc ✓ (ab+c), aba ✓ (ab+a), ca ✓ (c+a), xq ✗, ab ✓.
        let (oov, coverage) = oov_and_coverage(&lexicon, &lines).unwrap();
        assert!((oov - 20.0).abs() < 1e-12);
        assert!((coverage - 80.0).abs() < 1e-12);
        assert!((oov + coverage - 100.0).abs() < 1e-12);
    }
}
