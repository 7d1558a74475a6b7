//! Evaluation: edit-distance error rates, set-level decoding reports,
//! grid tuning of the decoder's scales, and graph-complexity tables.
//!
//! Error rates are pooled: `100 · Σ distance / Σ reference length`
//! across all lines, which weights lines by their length instead of
//! averaging per-line rates. The word rate tokenizes on whitespace
//! (punctuation detached, as everywhere else); the character rate runs
//! over the full line including spaces.

use std::time::Instant;

use rayon::prelude::*;

use crate::corpus::{split_words, CorpusLine};
use crate::decode::{decode_lattice, DecodeConfig};
use crate::error::{Error, Result};
use crate::graph::{GraphStats, SearchGraph};
use crate::lattice::PosteriorLattice;
use crate::lm::oov_and_coverage;
use crate::multigram::MultigramLexicon;
use crate::tokens::WORD_BOUNDARY;

/// Alignment counts from one edit-distance computation.
/// `distance = substitutions + deletions + insertions`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditStats {
    pub distance: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditStats {
    fn add(mut self, subs: usize, dels: usize, inss: usize) -> Self {
        self.distance += subs + dels + inss;
        self.substitutions += subs;
        self.deletions += dels;
        self.insertions += inss;
        self
    }
}

/// Levenshtein alignment between a reference and a hypothesis, with the
/// error decomposition. Ties prefer the diagonal step, then deletion,
/// then insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditStats {
    let cols = hypothesis.len() + 1;
    let mut prev: Vec<EditStats> = (0..cols)
        .map(|j| EditStats::default().add(0, 0, j))
        .collect();
    let mut cur = vec![EditStats::default(); cols];
    for i in 1..=reference.len() {
        cur[0] = EditStats::default().add(0, i, 0);
        for j in 1..=hypothesis.len() {
            let hit = reference[i - 1] == hypothesis[j - 1];
            let diag = prev[j - 1].add(usize::from(!hit), 0, 0);
            let del = prev[j].add(0, 1, 0);
            let ins = cur[j - 1].add(0, 0, 1);
            let mut best = diag;
            if del.distance < best.distance {
                best = del;
            }
            if ins.distance < best.distance {
                best = ins;
            }
            cur[j] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

fn pooled_rate<T: PartialEq>(pairs: &[(Vec<T>, Vec<T>)]) -> Result<f64> {
    let ref_len: usize = pairs.iter().map(|(r, _)| r.len()).sum();
    if ref_len == 0 {
        return Err(Error::EmptyInput(
            "cannot compute an error rate against empty references".into(),
        ));
    }
    let dist: usize = pairs
        .iter()
        .map(|(r, h)| edit_distance(r, h).distance)
        .sum();
    Ok(100.0 * dist as f64 / ref_len as f64)
}

fn check_paired(refs: &[&str], hyps: &[&str]) -> Result<()> {
    if refs.len() != hyps.len() {
        return Err(Error::InvalidParameter(format!(
            "{} references vs {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    Ok(())
}

/// Pooled word error rate in percent.
pub fn word_error_rate(refs: &[&str], hyps: &[&str]) -> Result<f64> {
    check_paired(refs, hyps)?;
    let pairs: Vec<(Vec<String>, Vec<String>)> = refs
        .iter()
        .zip(hyps)
        .map(|(r, h)| (split_words(r), split_words(h)))
        .collect();
    pooled_rate(&pairs)
}

/// Pooled character error rate in percent (spaces count as characters).
pub fn char_error_rate(refs: &[&str], hyps: &[&str]) -> Result<f64> {
    check_paired(refs, hyps)?;
    let pairs: Vec<(Vec<char>, Vec<char>)> = refs
        .iter()
        .zip(hyps)
        .map(|(r, h)| (r.chars().collect(), h.chars().collect()))
        .collect();
    pooled_rate(&pairs)
}

/// Results of decoding and scoring one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub lines: usize,
    /// Lines where the decoder produced no hypothesis (scored as empty).
    pub failed: usize,
    pub wer: f64,
    pub cer: f64,
    /// Percent of reference words the graph's lexicon cannot spell.
    pub oov_rate: f64,
    /// Percent of reference words the lexicon can spell (100 − oov).
    pub coverage: f64,
    pub wall_ms: u128,
}

/// Decode every lattice in the set (in parallel) and score against the
/// references. A line whose search dies is counted in `failed` and
/// scored as an empty hypothesis; systemic errors (e.g. mismatched
/// alphabets) abort instead.
pub fn evaluate_set(
    graph: &SearchGraph,
    items: &[(PosteriorLattice, String)],
    cfg: &DecodeConfig,
) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::EmptyInput("nothing to evaluate".into()));
    }
    let started = Instant::now();
    let decoded: Vec<Result<String>> = items
        .par_iter()
        .map(|(lat, _)| match decode_lattice(lat, graph, cfg) {
            Ok(hyps) => Ok(hyps[0].text.clone()),
            Err(Error::NoHypothesis) | Err(Error::SearchBudgetExceeded) => Ok(String::new()),
            Err(e) => Err(e),
        })
        .collect();
    let wall_ms = started.elapsed().as_millis();

    let mut hyps = Vec::with_capacity(items.len());
    let mut failed = 0usize;
    for (d, (_, reference)) in decoded.into_iter().zip(items) {
        let text = d?;
        if text.is_empty() && !reference.is_empty() {
            failed += 1;
        }
        hyps.push(text);
    }
    let refs: Vec<&str> = items.iter().map(|(_, r)| r.as_str()).collect();
    let hyp_refs: Vec<&str> = hyps.iter().map(String::as_str).collect();
    let wer = word_error_rate(&refs, &hyp_refs)?;
    let cer = char_error_rate(&refs, &hyp_refs)?;

    let units = graph
        .entries
        .iter()
        .filter(|e| e.token != WORD_BOUNDARY)
        .map(|e| e.spelling.clone());
    let lexicon = MultigramLexicon::from_units(units, "graph");
    let lines: Vec<CorpusLine> = items
        .iter()
        .map(|(_, r)| CorpusLine {
            text: r.clone(),
            language_tag: String::new(),
        })
        .collect();
    let (oov_rate, coverage) = oov_and_coverage(&lexicon, &lines)?;

    Ok(EvalReport {
        lines: items.len(),
        failed,
        wer,
        cer,
        oov_rate,
        coverage,
        wall_ms,
    })
}

/// Winning point of a tuning sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneResult {
    pub gamma: f64,
    pub beta: f64,
    pub wer: f64,
}

/// Grid-search the decoder scales on a development set, minimizing the
/// word error rate. Ties prefer the smaller gamma, then the smaller
/// beta, so results are deterministic.
pub fn tune_hyperparameters(
    graph: &SearchGraph,
    dev: &[(PosteriorLattice, String)],
    gammas: &[f64],
    betas: &[f64],
    beam: f64,
) -> Result<TuneResult> {
    if gammas.is_empty() || betas.is_empty() {
        return Err(Error::InvalidParameter("empty tuning grid".into()));
    }
    let mut best: Option<TuneResult> = None;
    for &gamma in gammas {
        for &beta in betas {
            let cfg = DecodeConfig {
                gamma,
                beta,
                beam,
                n_best: 1,
            };
            let report = evaluate_set(graph, dev, &cfg)?;
            let cand = TuneResult {
                gamma,
                beta,
                wer: report.wer,
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    cand.wer < b.wer
                        || (cand.wer == b.wer
                            && (cand.gamma < b.gamma
                                || (cand.gamma == b.gamma && cand.beta < b.beta)))
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// One line of the complexity table.
#[derive(Debug, Clone)]
pub struct ComplexityRow {
    pub name: String,
    pub stats: GraphStats,
    pub build_ms: u128,
}

/// Milliseconds as `mm:ss`.
pub fn format_mmss(ms: u128) -> String {
    let secs = ms / 1000;
    format!("{:02}:{:02}", secs / 60, secs % 60)
}

/// Render a fixed-width table of graph sizes. The row named `words` is
/// the baseline: every other row shows its size reduction relative to
/// it (states + arcs), positive meaning smaller.
pub fn complexity_report(rows: &[ComplexityRow]) -> String {
    let baseline = rows
        .iter()
        .find(|r| r.name == "words")
        .map(|r| r.stats.states + r.stats.arcs);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>10} {:>12} {:>12} {:>9} {:>7}\n",
        "lexicon", "states", "arcs", "states+arcs", "vs-words", "build"
    ));
    for r in rows {
        let size = r.stats.states + r.stats.arcs;
        let vs = match baseline {
            Some(b) if r.name != "words" => {
                format!("{:+.1}%", 100.0 * (1.0 - size as f64 / b as f64))
            }
            _ => "-".to_string(),
        };
        out.push_str(&format!(
            "{:<10} {:>10} {:>12} {:>12} {:>9} {:>7}\n",
            r.name,
            r.stats.states,
            r.stats.arcs,
            size,
            vs,
            format_mmss(r.build_ms)
        ));
    }
    out
}
