//! Learning variable-length sub-lexical units (multigrams) from words.
//!
//! A multigram model is a zero-order hidden semi-Markov model: a word is
//! generated by concatenating hidden units, each unit emitting between one
//! and `d_max` characters, with units drawn independently of one another.
//! The emission table holds one conditional distribution per duration, so
//! the score of a segmentation is simply the product of its unit
//! probabilities. Training runs expectation-maximization over the word
//! list; segmentation runs a best-path sweep whose optional length penalty
//! raises every emission to the power `1/duration`, which favors longer
//! units at equal per-character quality.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::CorpusLine;
use crate::error::{Error, Result};
use crate::logmath::{ln_to_log10, log10_to_ln, log_add, LOG_ZERO};
use crate::tokens::WORD_BOUNDARY;

/// Probability floor assumed for characters outside the unit inventory
/// when a word has to be tokenized anyway (see [`tokenize_word`]).
pub const FALLBACK_CHAR_LN_PROB: f64 = -23.025850929940457; // ln(1e-10)

/// Unit (as characters) -> a natural-log probability or expected count.
type UnitMap = HashMap<Box<[char]>, f64>;

/// A learned unit inventory with per-duration emission probabilities.
#[derive(Debug, Clone)]
pub struct MultigramModel {
    d_max: usize,
    language_tag: String,
    /// unit (as characters) -> ln P(unit | duration = unit length)
    emissions: UnitMap,
}

impl MultigramModel {
    /// Build a model from explicit natural-log emission probabilities.
    // Negated comparison below so that NaN log-probabilities are rejected.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn from_log_emissions<I, S>(d_max: usize, language_tag: &str, units: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        if d_max < 1 {
            return Err(Error::InvalidParameter("d_max must be at least 1".into()));
        }
        let mut emissions = HashMap::new();
        for (unit, ln_p) in units {
            let chars: Box<[char]> = unit.as_ref().chars().collect();
            if chars.is_empty() || chars.len() > d_max {
                return Err(Error::InvalidParameter(format!(
                    "unit {:?} has length outside 1..={d_max}",
                    unit.as_ref()
                )));
            }
            if !(ln_p <= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "unit {:?} has log-probability {ln_p} > 0",
                    unit.as_ref()
                )));
            }
            emissions.insert(chars, ln_p);
        }
        Ok(MultigramModel {
            d_max,
            language_tag: language_tag.to_string(),
            emissions,
        })
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn language_tag(&self) -> &str {
        &self.language_tag
    }

    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    /// ln P(unit | duration = |unit|), if the unit is in the inventory.
    pub fn unit_ln_prob(&self, unit: &str) -> Option<f64> {
        let chars: Vec<char> = unit.chars().collect();
        self.emissions.get(chars.as_slice()).copied()
    }

    fn ln_prob_chars(&self, unit: &[char]) -> Option<f64> {
        self.emissions.get(unit).copied()
    }

    /// Units sorted by (length, spelling): `(unit, length, ln_prob)`.
    pub fn units_sorted(&self) -> Vec<(String, usize, f64)> {
        let mut rows: Vec<(String, usize, f64)> = self
            .emissions
            .iter()
            .map(|(u, &p)| (u.iter().collect::<String>(), u.len(), p))
            .collect();
        rows.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
        rows
    }

    /// Sum of emission probabilities for one duration (at most 1).
    pub fn duration_mass(&self, d: usize) -> f64 {
        let mut ps: Vec<f64> = self
            .emissions
            .iter()
            .filter(|(u, _)| u.len() == d)
            .map(|(_, &p)| p.exp())
            .collect();
        ps.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite probabilities"));
        ps.iter().sum()
    }

    /// Write the model as TSV: a `#d_max=<k> lang=<tag>` header followed by
    /// `unit<TAB>length<TAB>log10_prob` rows sorted by (length, unit).
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!(
            "#d_max={} lang={}\n",
            self.d_max, self.language_tag
        ));
        for (unit, len, ln_p) in self.units_sorted() {
            out.push_str(&format!("{unit}\t{len}\t{}\n", ln_to_log10(ln_p)));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = raw.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::format(path, 1, "empty model file"))?;
        let (d_max, tag) = parse_model_header(header)
            .ok_or_else(|| Error::format(path, 1, "expected `#d_max=<k> lang=<tag>`"))?;
        let mut emissions = HashMap::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut f = line.split('\t');
            let (unit, len, log10) = match (f.next(), f.next(), f.next()) {
                (Some(u), Some(l), Some(p)) => (u, l, p),
                _ => {
                    return Err(Error::format(
                        path,
                        idx + 1,
                        "expected 3 tab-separated fields",
                    ))
                }
            };
            let len: usize = len
                .parse()
                .map_err(|_| Error::format(path, idx + 1, "bad length field"))?;
            let log10: f64 = log10
                .parse()
                .map_err(|_| Error::format(path, idx + 1, "bad probability field"))?;
            let chars: Box<[char]> = unit.chars().collect();
            if chars.len() != len {
                return Err(Error::format(
                    path,
                    idx + 1,
                    format!(
                        "declared length {len} but unit has {} characters",
                        chars.len()
                    ),
                ));
            }
            if chars.is_empty() || chars.len() > d_max {
                return Err(Error::format(
                    path,
                    idx + 1,
                    "unit length outside 1..=d_max",
                ));
            }
            emissions.insert(chars, log10_to_ln(log10));
        }
        if emissions.is_empty() {
            return Err(Error::EmptyInput(format!(
                "model file {} has no units",
                path.display()
            )));
        }
        Ok(MultigramModel {
            d_max,
            language_tag: tag,
            emissions,
        })
    }
}

fn parse_model_header(header: &str) -> Option<(usize, String)> {
    let rest = header.strip_prefix("#d_max=")?;
    let (k, lang) = rest.split_once(" lang=")?;
    let d_max: usize = k.parse().ok()?;
    if d_max < 1 {
        return None;
    }
    Some((d_max, lang.trim().to_string()))
}

/// One word segmented into units whose concatenation restores the word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub units: Vec<String>,
    pub source_word: String,
}

impl Segmentation {
    /// Concatenation of the units; always equals `source_word`.
    pub fn joined(&self) -> String {
        self.units.concat()
    }
}

/// Forward/backward/best-path tables over one word.
///
/// Index `t` counts characters consumed, so every table spans `0..=T`.
/// `alpha[t]` is the ln-total score of all unit covers of the prefix,
/// `beta[t]` the same for the suffix, and `delta[t][d]` the best ln-score
/// of covers of the prefix whose last unit has duration `d` (unpenalized).
/// Unreachable cells hold negative infinity.
#[derive(Debug, Clone)]
pub struct TrellisState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: Vec<Vec<f64>>,
}

impl TrellisState {
    /// ln of the word likelihood (sum over all segmentations).
    pub fn log_likelihood(&self) -> f64 {
        *self.alpha.last().expect("alpha is never empty")
    }
}

/// Run the forward-backward pass over one word.
///
/// Returns the trellis together with the expected unit counts
/// (posterior occupancy of every unit occurrence, summed per unit).
pub fn forward_backward(
    word: &str,
    model: &MultigramModel,
) -> Result<(TrellisState, BTreeMap<String, f64>)> {
    let chars: Vec<char> = word.chars().collect();
    let (trellis, counts) = forward_backward_chars(&chars, model)?;
    let named = counts
        .into_iter()
        .map(|(u, c)| (u.iter().collect::<String>(), c))
        .collect();
    Ok((trellis, named))
}

fn forward_backward_chars(
    chars: &[char],
    model: &MultigramModel,
) -> Result<(TrellisState, UnitMap)> {
    if chars.is_empty() {
        return Err(Error::EmptyInput("cannot segment an empty word".into()));
    }
    let t_len = chars.len();
    let d_max = model.d_max;

    let mut alpha = vec![LOG_ZERO; t_len + 1];
    let mut delta = vec![vec![LOG_ZERO; d_max + 1]; t_len + 1];
    alpha[0] = 0.0;
    let mut best_prefix = vec![LOG_ZERO; t_len + 1];
    best_prefix[0] = 0.0;
    for t in 1..=t_len {
        for d in 1..=d_max.min(t) {
            if let Some(ln_b) = model.ln_prob_chars(&chars[t - d..t]) {
                alpha[t] = log_add(alpha[t], alpha[t - d] + ln_b);
                let cand = best_prefix[t - d] + ln_b;
                if cand > delta[t][d] {
                    delta[t][d] = cand;
                }
            }
        }
        best_prefix[t] = delta[t].iter().copied().fold(LOG_ZERO, f64::max);
    }
    if alpha[t_len] == LOG_ZERO {
        return Err(Error::UnsegmentableWord {
            word: chars.iter().collect(),
        });
    }

    let mut beta = vec![LOG_ZERO; t_len + 1];
    beta[t_len] = 0.0;
    for t in (0..t_len).rev() {
        for d in 1..=d_max.min(t_len - t) {
            if let Some(ln_b) = model.ln_prob_chars(&chars[t..t + d]) {
                beta[t] = log_add(beta[t], ln_b + beta[t + d]);
            }
        }
    }

    let ll = alpha[t_len];
    let mut counts: UnitMap = HashMap::new();
    for t in 1..=t_len {
        for d in 1..=d_max.min(t) {
            let unit = &chars[t - d..t];
            if let Some(ln_b) = model.ln_prob_chars(unit) {
                let occupancy = alpha[t - d] + ln_b + beta[t] - ll;
                if occupancy > LOG_ZERO {
                    *counts.entry(unit.into()).or_insert(0.0) += occupancy.exp();
                }
            }
        }
    }

    Ok((TrellisState { alpha, beta, delta }, counts))
}

/// Initialize a model by relative frequency of every substring up to
/// `d_max` characters: P(u | d) = count(u) / total count of length-d
/// substrings. Duplicate words count once per occurrence.
pub fn initialize_model(
    words: &[String],
    d_max: usize,
    language_tag: &str,
) -> Result<MultigramModel> {
    if d_max < 1 {
        return Err(Error::InvalidParameter("d_max must be at least 1".into()));
    }
    if words.is_empty() {
        return Err(Error::EmptyInput("no words to initialize from".into()));
    }
    let mut counts: UnitMap = HashMap::new();
    let mut totals = vec![0.0f64; d_max + 1];
    for word in words {
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() {
            return Err(Error::EmptyInput("empty word in training list".into()));
        }
        for t in 1..=chars.len() {
            for d in 1..=d_max.min(t) {
                *counts.entry(chars[t - d..t].into()).or_insert(0.0) += 1.0;
                totals[d] += 1.0;
            }
        }
    }
    let emissions = counts
        .into_iter()
        .map(|(u, c)| {
            let ln_p = (c / totals[u.len()]).ln();
            (u, ln_p)
        })
        .collect();
    Ok(MultigramModel {
        d_max,
        language_tag: language_tag.to_string(),
        emissions,
    })
}

/// Expectation-maximization settings.
#[derive(Debug, Clone)]
pub struct EmConfig {
    pub d_max: usize,
    pub max_iters: usize,
    /// Stop when the relative log-likelihood improvement falls below this.
    pub rel_tol: f64,
    pub language_tag: String,
}

impl EmConfig {
    pub fn new(d_max: usize, language_tag: &str) -> Self {
        EmConfig {
            d_max,
            max_iters: 50,
            rel_tol: 1e-6,
            language_tag: language_tag.to_string(),
        }
    }
}

/// Outcome of an EM run: the trained model plus the corpus log-likelihood
/// after every iteration (non-decreasing) and how many distinct word types
/// had to be skipped as unsegmentable.
#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub model: MultigramModel,
    pub log_likelihood: Vec<f64>,
    pub skipped_word_types: usize,
}

/// Train a multigram model with EM over the given running words.
pub fn em_train(words: &[String], config: &EmConfig) -> Result<EmOutcome> {
    let mut model = initialize_model(words, config.d_max, &config.language_tag)?;

    // Words repeat heavily in running text; fold duplicates into weights.
    let mut weighted: BTreeMap<Box<[char]>, f64> = BTreeMap::new();
    for word in words {
        *weighted
            .entry(word.chars().collect::<Box<[char]>>())
            .or_insert(0.0) += 1.0;
    }
    let weighted: Vec<(Box<[char]>, f64)> = weighted.into_iter().collect();

    let mut history = Vec::new();
    let mut skipped = 0usize;
    for _ in 0..config.max_iters {
        let per_word: Vec<Option<(f64, UnitMap)>> = weighted
            .par_iter()
            .map(|(chars, _)| match forward_backward_chars(chars, &model) {
                Ok((trellis, counts)) => Some((trellis.log_likelihood(), counts)),
                Err(_) => None,
            })
            .collect();

        let mut ll = 0.0;
        // BTreeMap keeps the reduction order fixed, so repeated runs sum
        // floats identically and artifacts stay byte-for-byte stable.
        let mut counts: BTreeMap<Box<[char]>, f64> = BTreeMap::new();
        skipped = 0;
        for ((chars, weight), outcome) in weighted.iter().zip(per_word) {
            match outcome {
                Some((word_ll, word_counts)) => {
                    ll += weight * word_ll;
                    for (unit, c) in word_counts {
                        *counts.entry(unit).or_insert(0.0) += weight * c;
                    }
                }
                None => {
                    skipped += 1;
                    log::warn!(
                        "skipping unsegmentable word {:?} during EM",
                        chars.iter().collect::<String>()
                    );
                }
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyInput(
                "every training word is unsegmentable".into(),
            ));
        }

        let mut totals = vec![0.0f64; config.d_max + 1];
        for (unit, c) in &counts {
            totals[unit.len()] += c;
        }
        model.emissions = counts
            .into_iter()
            .filter(|(_, c)| *c > 0.0)
            .map(|(u, c)| {
                let ln_p = (c / totals[u.len()]).ln();
                (u, ln_p)
            })
            .collect();

        let converged = history
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() <= config.rel_tol * prev.abs().max(1.0));
        history.push(ll);
        if converged {
            break;
        }
    }

    Ok(EmOutcome {
        model,
        log_likelihood: history,
        skipped_word_types: skipped,
    })
}

/// Best segmentation of a word under the model.
///
/// With `length_penalty`, maximizes the product of emissions raised to
/// `1/duration`; without it, the plain emission product. Score ties are
/// broken toward the longer unit, applied right to left.
pub fn viterbi_segment(
    word: &str,
    model: &MultigramModel,
    length_penalty: bool,
) -> Result<Segmentation> {
    let chars: Vec<char> = word.chars().collect();
    let units =
        viterbi_chars(&chars, model, length_penalty)?.ok_or_else(|| Error::UnsegmentableWord {
            word: word.to_string(),
        })?;
    Ok(Segmentation {
        units: units
            .iter()
            .map(|span| chars[span.0..span.1].iter().collect())
            .collect(),
        source_word: word.to_string(),
    })
}

/// Best cover of `chars` as (start, end) spans, or None if no cover exists.
fn viterbi_chars(
    chars: &[char],
    model: &MultigramModel,
    length_penalty: bool,
) -> Result<Option<Vec<(usize, usize)>>> {
    if chars.is_empty() {
        return Err(Error::EmptyInput("cannot segment an empty word".into()));
    }
    let t_len = chars.len();
    let mut best = vec![LOG_ZERO; t_len + 1];
    let mut back: Vec<usize> = vec![0; t_len + 1];
    best[0] = 0.0;
    for t in 1..=t_len {
        for d in 1..=model.d_max.min(t) {
            if best[t - d] == LOG_ZERO {
                continue;
            }
            if let Some(ln_b) = model.ln_prob_chars(&chars[t - d..t]) {
                let step = if length_penalty {
                    ln_b / d as f64
                } else {
                    ln_b
                };
                let cand = best[t - d] + step;
                // `>=` with ascending d prefers the longer unit on ties.
                if cand >= best[t] {
                    best[t] = cand;
                    back[t] = d;
                }
            }
        }
    }
    if best[t_len] == LOG_ZERO {
        return Ok(None);
    }
    let mut spans = Vec::new();
    let mut t = t_len;
    while t > 0 {
        let d = back[t];
        spans.push((t - d, t));
        t -= d;
    }
    spans.reverse();
    Ok(Some(spans))
}

/// Remove units with probability below `min_prob`, keeping all
/// single-character units, and renormalize every duration that lost mass.
pub fn prune_model(model: &MultigramModel, min_prob: f64) -> MultigramModel {
    let ln_min = if min_prob > 0.0 {
        min_prob.ln()
    } else {
        LOG_ZERO
    };
    let mut kept: UnitMap = HashMap::new();
    let mut removed_any = vec![false; model.d_max + 1];
    let mut kept_mass = vec![0.0f64; model.d_max + 1];
    // Sorted traversal keeps the renormalization sums byte-reproducible.
    let mut units: Vec<(&Box<[char]>, &f64)> = model.emissions.iter().collect();
    units.sort_unstable_by(|a, b| a.0.cmp(b.0));
    for (unit, &ln_p) in units {
        if unit.len() > 1 && ln_p < ln_min {
            removed_any[unit.len()] = true;
        } else {
            kept_mass[unit.len()] += ln_p.exp();
            kept.insert(unit.clone(), ln_p);
        }
    }
    for (unit, ln_p) in kept.iter_mut() {
        let d = unit.len();
        if removed_any[d] && kept_mass[d] > 0.0 {
            *ln_p -= kept_mass[d].ln();
        }
    }
    MultigramModel {
        d_max: model.d_max,
        language_tag: model.language_tag.clone(),
        emissions: kept,
    }
}

/// Segment one word for tokenization, falling back to per-character units
/// when the model cannot cover the word. Fallback characters are assumed
/// to carry the floor probability [`FALLBACK_CHAR_LN_PROB`]; they become
/// ordinary tokens downstream.
pub fn tokenize_word(word: &str, model: &MultigramModel) -> Vec<String> {
    match viterbi_segment(word, model, true) {
        Ok(seg) => seg.units,
        Err(_) => {
            log::warn!("word {word:?} is not coverable; emitting per-character units");
            word.chars().map(|c| c.to_string()).collect()
        }
    }
}

/// Tokenize corpus lines: per-word best segmentations (length penalty on)
/// with the explicit word-boundary token between words.
pub fn tokenize_corpus(lines: &[CorpusLine], model: &MultigramModel) -> Vec<Vec<String>> {
    lines
        .par_iter()
        .map(|line| {
            let words = crate::corpus::split_words(&line.text);
            let mut tokens = Vec::new();
            for (i, word) in words.iter().enumerate() {
                if i > 0 {
                    tokens.push(WORD_BOUNDARY.to_string());
                }
                tokens.extend(tokenize_word(word, model));
            }
            tokens
        })
        .collect()
}

/// A set of units with the languages they were learned from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MultigramLexicon {
    units: BTreeSet<String>,
    origin_tags: BTreeMap<String, BTreeSet<String>>,
}

impl MultigramLexicon {
    pub fn from_units<I, S>(units: I, tag: &str) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut lex = MultigramLexicon::default();
        for u in units {
            lex.insert(u.into(), tag);
        }
        lex
    }

    /// All units of a trained model, tagged with the model's language.
    pub fn from_model(model: &MultigramModel) -> Self {
        Self::from_units(
            model.units_sorted().into_iter().map(|(u, _, _)| u),
            model.language_tag(),
        )
    }

    /// The distinct non-marker tokens of a tokenized corpus.
    pub fn from_tokenized(lines: &[Vec<String>], tag: &str) -> Self {
        Self::from_units(
            lines
                .iter()
                .flatten()
                .filter(|t| !crate::tokens::is_marker(t))
                .cloned(),
            tag,
        )
    }

    pub fn insert(&mut self, unit: String, tag: &str) {
        if !tag.is_empty() {
            self.origin_tags
                .entry(unit.clone())
                .or_default()
                .insert(tag.to_string());
        }
        self.units.insert(unit);
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn contains(&self, unit: &str) -> bool {
        self.units.contains(unit)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.units.iter().map(String::as_str)
    }

    pub fn tags_of(&self, unit: &str) -> Option<&BTreeSet<String>> {
        self.origin_tags.get(unit)
    }

    /// Write as TSV `unit<TAB>unit<TAB>tag1,tag2` (token, spelling, origins).
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for unit in &self.units {
            let tags = self
                .origin_tags
                .get(unit)
                .map(|t| t.iter().cloned().collect::<Vec<_>>().join(","))
                .unwrap_or_default();
            out.push_str(&format!("{unit}\t{unit}\t{tags}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Read a lexicon written by [`write_tsv`]. The third (tags) column
    /// is optional; the second column must equal the first, since these
    /// units spell themselves.
    pub fn read_tsv(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lex = MultigramLexicon::default();
        for (i, line) in raw.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let token = fields
                .next()
                .filter(|t| !t.is_empty())
                .ok_or_else(|| Error::format(path, i + 1, "missing unit"))?;
            let spelling = fields
                .next()
                .ok_or_else(|| Error::format(path, i + 1, "missing spelling column"))?;
            if spelling != token {
                return Err(Error::format(
                    path,
                    i + 1,
                    format!("unit {token:?} must spell itself, found {spelling:?}"),
                ));
            }
            let tags = fields.next().unwrap_or("");
            if tags.is_empty() {
                lex.insert(token.to_string(), "");
            } else {
                for tag in tags.split(',') {
                    lex.insert(token.to_string(), tag);
                }
            }
        }
        if lex.is_empty() {
            return Err(Error::EmptyInput(format!(
                "lexicon {} has no units",
                path.display()
            )));
        }
        Ok(lex)
    }
}

/// Union of several lexicons; origin tags accumulate.
pub fn merge_lexicons(lexicons: &[MultigramLexicon]) -> MultigramLexicon {
    let mut merged = MultigramLexicon::default();
    for lex in lexicons {
        for unit in &lex.units {
            for tag in lex.origin_tags.get(unit).into_iter().flatten() {
                merged.insert(unit.clone(), tag);
            }
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logmath::rel_close;

    fn toy_model() -> MultigramModel {
        MultigramModel::from_log_emissions(
            2,
            "toy",
            [("a", 0.3f64.ln()), ("b", 0.2f64.ln()), ("ab", 0.5f64.ln())],
        )
        .unwrap()
    }

    #[test]
    fn forward_backward_on_two_letter_word() {
        let (trellis, counts) = forward_backward("ab", &toy_model()).unwrap();
        let lik = trellis.log_likelihood().exp();
        assert!((lik - 0.56).abs() < 1e-12, "likelihood {lik}");
        assert!((counts["ab"] - 0.5 / 0.56).abs() < 1e-12);
        assert!((counts["a"] - 0.06 / 0.56).abs() < 1e-12);
        assert!((counts["b"] - 0.06 / 0.56).abs() < 1e-12);
    }

    #[test]
    fn forward_and_backward_totals_agree() {
        let (trellis, _) = forward_backward("abab", &toy_model()).unwrap();
        assert!(rel_close(trellis.alpha[4], trellis.beta[0], 1e-9));
    }

    #[test]
    fn unsegmentable_word_is_reported() {
        assert!(matches!(
            forward_backward("xy", &toy_model()),
            Err(Error::UnsegmentableWord { .. })
        ));
        assert!(matches!(
            viterbi_segment("axb", &toy_model(), true),
            Err(Error::UnsegmentableWord { .. })
        ));
    }

    #[test]
    fn initialize_counts_substrings_per_occurrence() {
        let words = vec!["ab".to_string(), "ab".to_string()];
        let model = initialize_model(&words, 2, "t").unwrap();
        assert!((model.unit_ln_prob("a").unwrap().exp() - 0.5).abs() < 1e-12);
        assert!((model.unit_ln_prob("b").unwrap().exp() - 0.5).abs() < 1e-12);
        assert!((model.unit_ln_prob("ab").unwrap().exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initialize_rejects_bad_inputs() {
        assert!(initialize_model(&["ab".to_string()], 0, "t").is_err());
        assert!(initialize_model(&[], 2, "t").is_err());
        assert!(initialize_model(&[String::new()], 2, "t").is_err());
    }

    #[test]
    fn viterbi_prefers_whole_unit_with_penalty() {
        // Without the penalty the character path wins (0.4 * 0.4 > 0.15);
        // the 1/d exponent flips the preference (0.15^(1/2) ≈ 0.387 > 0.16).
        let model = MultigramModel::from_log_emissions(
            2,
            "t",
            [("a", 0.4f64.ln()), ("b", 0.4f64.ln()), ("ab", 0.15f64.ln())],
        )
        .unwrap();
        let plain = viterbi_segment("ab", &model, false).unwrap();
        assert_eq!(plain.units, vec!["a", "b"]);
        let penalized = viterbi_segment("ab", &model, true).unwrap();
        assert_eq!(penalized.units, vec!["ab"]);
    }

    #[test]
    fn viterbi_tie_prefers_longer_final_unit() {
        // ln-scores engineered to tie exactly: [a][b] = -2.0 = [ab].
        let model =
            MultigramModel::from_log_emissions(2, "t", [("a", -1.0), ("b", -1.0), ("ab", -2.0)])
                .unwrap();
        let seg = viterbi_segment("ab", &model, false).unwrap();
        assert_eq!(seg.units, vec!["ab"]);
        // Same construction under the penalty: -4.0 / 2 == -1.0 + -1.0 is false;
        // use ln(ab) = -4 so the penalized scores tie at -2.0.
        let model =
            MultigramModel::from_log_emissions(2, "t", [("a", -1.0), ("b", -1.0), ("ab", -4.0)])
                .unwrap();
        let seg = viterbi_segment("ab", &model, true).unwrap();
        assert_eq!(seg.units, vec!["ab"]);
    }

    #[test]
    fn segmentation_concatenates_back_to_the_word() {
        let model = toy_model();
        for word in ["ab", "aab", "abab", "ba"] {
            let seg = viterbi_segment(word, &model, true).unwrap();
            assert_eq!(seg.joined(), word);
        }
    }

    #[test]
    fn em_reaches_whole_word_fixed_point() {
        let words = vec!["aa".to_string(); 8];
        let outcome = em_train(&words, &EmConfig::new(2, "t")).unwrap();
        let p_aa = outcome.model.unit_ln_prob("aa").unwrap().exp();
        assert!((p_aa - 1.0).abs() < 1e-9, "P(aa) = {p_aa}");
        for w in outcome.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn em_is_monotone_on_a_small_mixed_corpus() {
        let words: Vec<String> = ["abab", "aba", "bab", "ab", "ba", "abba", "baab"]
            .iter()
            .cycle()
            .take(40)
            .map(|s| s.to_string())
            .collect();
        let outcome = em_train(&words, &EmConfig::new(3, "t")).unwrap();
        for w in outcome.log_likelihood.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0),
                "log-likelihood decreased: {} -> {}",
                w[0],
                w[1]
            );
        }
        // Per-duration distributions stay (sub-)normalized.
        for d in 1..=3 {
            assert!(outcome.model.duration_mass(d) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn prune_keeps_single_characters_and_renormalizes() {
        let model = MultigramModel::from_log_emissions(
            2,
            "t",
            [
                ("a", 0.001f64.ln()),
                ("b", 0.999f64.ln()),
                ("ab", 0.7f64.ln()),
                ("ba", 0.3f64.ln()),
            ],
        )
        .unwrap();
        let pruned = prune_model(&model, 0.5);
        assert!(pruned.unit_ln_prob("a").is_some(), "length-1 units survive");
        assert!(pruned.unit_ln_prob("ba").is_none());
        let p_ab = pruned.unit_ln_prob("ab").unwrap().exp();
        assert!(
            (p_ab - 1.0).abs() < 1e-12,
            "duration-2 renormalized, got {p_ab}"
        );
    }

    #[test]
    fn prune_with_zero_threshold_is_identity() {
        let model = toy_model();
        let pruned = prune_model(&model, 0.0);
        for (unit, _, ln_p) in model.units_sorted() {
            assert_eq!(pruned.unit_ln_prob(&unit), Some(ln_p));
        }
    }

    #[test]
    fn tokenize_inserts_word_boundaries_and_falls_back() {
        let model = toy_model();
        let lines = vec![CorpusLine {
            text: "ab ba xq".to_string(),
            language_tag: "t".to_string(),
        }];
        let tokens = tokenize_corpus(&lines, &model);
        assert_eq!(tokens[0], vec!["ab", "<sp>", "b", "a", "<sp>", "x", "q"]);
    }

    #[test]
    fn model_file_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let words: Vec<String> = ["abab", "abba", "baba"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let model = em_train(&words, &EmConfig::new(3, "fr")).unwrap().model;
        model.write_tsv(&path).unwrap();
        let back = MultigramModel::read_tsv(&path).unwrap();
        assert_eq!(back.d_max(), model.d_max());
        assert_eq!(back.language_tag(), model.language_tag());
        assert_eq!(back.len(), model.len());
        for (unit, _, ln_p) in model.units_sorted() {
            let got = back.unit_ln_prob(&unit).unwrap();
            assert!(rel_close(got, ln_p, 1e-12), "{unit}: {got} vs {ln_p}");
        }
    }

    #[test]
    fn model_file_rejects_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        std::fs::write(&path, "#d_max=2 lang=t\nab\t3\t-0.5\n").unwrap();
        assert!(matches!(
            MultigramModel::read_tsv(&path),
            Err(Error::FileFormat { line: 2, .. })
        ));
    }

    #[test]
    fn merged_lexicon_is_a_superset_with_union_tags() {
        let fr = MultigramLexicon::from_units(["le", "ch", "e"], "fr");
        let en = MultigramLexicon::from_units(["th", "ch", "e"], "en");
        let merged = merge_lexicons(&[fr.clone(), en.clone()]);
        assert!(fr.iter().all(|u| merged.contains(u)));
        assert!(en.iter().all(|u| merged.contains(u)));
        let tags = merged.tags_of("ch").unwrap();
        assert!(tags.contains("fr") && tags.contains("en"));
        assert_eq!(merged.len(), 4);
    }

    #[test]
    fn lexicon_tsv_round_trip() {
        let fr = MultigramLexicon::from_units(["le", "ch", "é"], "fr");
        let en = MultigramLexicon::from_units(["th", "ch"], "en");
        let merged = merge_lexicons(&[fr, en]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("units.tsv");
        merged.write_tsv(&path).unwrap();
        let back = MultigramLexicon::read_tsv(&path).unwrap();
        assert_eq!(back.len(), merged.len());
        assert!(merged.iter().all(|u| back.contains(u)));
        assert_eq!(back.tags_of("ch"), merged.tags_of("ch"));

        fs::write(&path, "ab\tba\tfr\n").unwrap();
        assert!(matches!(
            MultigramLexicon::read_tsv(&path),
            Err(Error::FileFormat { line: 1, .. })
        ));
    }

    // --- brute-force oracle (recursive, linear-probability domain) ---

    fn all_segmentations(chars: &[char], model: &MultigramModel) -> Vec<Vec<(usize, usize)>> {
        fn go(
            chars: &[char],
            from: usize,
            model: &MultigramModel,
            prefix: &mut Vec<(usize, usize)>,
            out: &mut Vec<Vec<(usize, usize)>>,
        ) {
            if from == chars.len() {
                out.push(prefix.clone());
                return;
            }
            for d in 1..=model.d_max().min(chars.len() - from) {
                let unit: String = chars[from..from + d].iter().collect();
                if model.unit_ln_prob(&unit).is_some() {
                    prefix.push((from, from + d));
                    go(chars, from + d, model, prefix, out);
                    prefix.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(chars, 0, model, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn forward_matches_exhaustive_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let alphabet: Vec<char> = "abc".chars().collect();
            let len = rng.gen_range(1..=7);
            let word: String = (0..len)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect();
            let d_max = rng.gen_range(1..=3);
            // Random model over all substrings, sub-normalized per duration.
            let chars: Vec<char> = word.chars().collect();
            let mut units: BTreeSet<String> = BTreeSet::new();
            for t in 1..=chars.len() {
                for d in 1..=d_max.min(t) {
                    units.insert(chars[t - d..t].iter().collect());
                }
            }
            let model = MultigramModel::from_log_emissions(
                d_max,
                "t",
                units
                    .iter()
                    .map(|u| (u.clone(), rng.gen_range(0.05f64..0.6).ln())),
            )
            .unwrap();

            let (trellis, counts) = forward_backward(&word, &model).unwrap();
            let segs = all_segmentations(&chars, &model);
            let mut total = 0.0f64;
            let mut by_unit: BTreeMap<String, f64> = BTreeMap::new();
            for seg in &segs {
                let p: f64 = seg
                    .iter()
                    .map(|&(s, e)| {
                        model
                            .unit_ln_prob(&chars[s..e].iter().collect::<String>())
                            .unwrap()
                            .exp()
                    })
                    .product();
                total += p;
                for &(s, e) in seg {
                    *by_unit
                        .entry(chars[s..e].iter().collect::<String>())
                        .or_insert(0.0) += p;
                }
            }
            let got = trellis.log_likelihood().exp();
            assert!(rel_close(got, total, 1e-9), "lik {got} vs {total} ({word})");
            for (unit, mass) in by_unit {
                let want = mass / total;
                let got = counts[&unit];
                assert!(rel_close(got, want, 1e-9), "E[{unit}] {got} vs {want}");
            }
        }
    }
}
