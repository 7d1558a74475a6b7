//! Search-graph compilation.
//!
//! Three component machines are built and fused into one decoding graph:
//!
//! * **T** — frame transducer: collapses per-frame character labels
//!   (with a blank symbol and repeat conventions) into character strings.
//! * **L** — lexicon transducer: maps character strings to token strings
//!   using each token's spelling, with terminal disambiguation symbols so
//!   duplicate and prefix spellings stay distinguishable.
//! * **G** — grammar acceptor: the backoff n-gram model over tokens,
//!   with explicit `#0`-labeled backoff arcs and end-of-sequence
//!   probabilities as final weights.
//!
//! The combined graph is `S = T ∘ min(det(L ∘ G))` with disambiguation
//! labels erased afterwards. Costs are negated natural logs of the
//! model's probabilities. `S` may keep input-epsilon arcs (erased
//! disambiguation and backoff moves); the decoder treats them as free
//! moves that consume no frame.
//!
//! L emits each token on the *first* arc of its spelling. The relation is
//! identical to emitting on the last arc — paths keep the same strings
//! and weights — but composition then only explores a spelling under
//! contexts that can actually continue with its token, which keeps
//! `L ∘ G` near linear size. Determinization re-delays outputs to the
//! disambiguation points.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::corpus::{split_words, CharacterInventory, CorpusLine};
use crate::error::{Error, Result};
use crate::fst::{
    compose, determinize, minimize, Arc, Label, SymbolTable, Transducer, Weight, EPS,
};
use crate::lm::NgramModel;
use crate::tokens::{BLANK, SEQ_END, SEQ_START, WORD_BOUNDARY};

const LN_10: f64 = std::f64::consts::LN_10;

/// Symbol-table name for a character (space is escaped for readability
/// in tab-separated files).
pub(crate) fn char_symbol(c: char) -> String {
    if c == ' ' {
        "<space>".to_string()
    } else {
        c.to_string()
    }
}

/// `[<eps>, chars…]` — the character tape alphabet, sorted.
pub fn character_table(inventory: &CharacterInventory) -> SymbolTable {
    SymbolTable::from_symbols(inventory.iter().map(char_symbol))
}

/// `[<eps>, <blank>, chars…]` — the frame-label alphabet.
pub fn frame_table(inventory: &CharacterInventory) -> SymbolTable {
    let mut t = SymbolTable::new();
    t.add(BLANK);
    for c in inventory.iter() {
        t.add(char_symbol(c));
    }
    t
}

/// `[<eps>, predictable tokens…, #0]` — the token alphabet shared by the
/// lexicon's output tape and the grammar.
pub fn token_table(model: &NgramModel) -> SymbolTable {
    let mut t = SymbolTable::from_symbols(model.predictable_tokens());
    t.add("#0");
    t
}

/// One lexicon row: a token and the character string that spells it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LexiconEntry {
    pub token: String,
    pub spelling: String,
}

/// Lexicon rows for a set of self-spelling units (multigram units, whole
/// words, or single characters), plus the word-boundary token spelled as
/// a space.
pub fn unit_lexicon_entries<I, S>(units: I) -> Vec<LexiconEntry>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let distinct: BTreeSet<String> = units.into_iter().map(Into::into).collect();
    let mut entries = vec![LexiconEntry {
        token: WORD_BOUNDARY.to_string(),
        spelling: " ".to_string(),
    }];
    entries.extend(distinct.into_iter().map(|u| LexiconEntry {
        token: u.clone(),
        spelling: u,
    }));
    entries
}

/// Token sequences where every word is one token, separated by the
/// word-boundary token.
pub fn word_token_sequences(lines: &[CorpusLine]) -> Vec<Vec<String>> {
    lines
        .iter()
        .map(|line| {
            let mut seq = Vec::new();
            for (i, w) in split_words(&line.text).into_iter().enumerate() {
                if i > 0 {
                    seq.push(WORD_BOUNDARY.to_string());
                }
                seq.push(w);
            }
            seq
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Token sequences where every character is one token, with the
/// word-boundary token between words.
pub fn char_token_sequences(lines: &[CorpusLine]) -> Vec<Vec<String>> {
    lines
        .iter()
        .map(|line| {
            let mut seq = Vec::new();
            for (i, w) in split_words(&line.text).into_iter().enumerate() {
                if i > 0 {
                    seq.push(WORD_BOUNDARY.to_string());
                }
                seq.extend(w.chars().map(|c| c.to_string()));
            }
            seq
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Build the frame transducer T.
///
/// Input: frame labels (blank + characters); output: characters. A run
/// of identical character frames emits the character once; blank emits
/// nothing and separates repeated characters. Every state is final with
/// weight one, so any frame sequence is accepted.
pub fn build_frame_transducer(inventory: &CharacterInventory) -> Transducer {
    let isyms = frame_table(inventory);
    let osyms = character_table(inventory);
    let n_chars = osyms.len() - 1;
    let mut t = Transducer::new(isyms, osyms);
    let hub = t.add_state(); // "just saw blank / start"
    t.set_start(hub);
    t.set_final(hub, Weight::one());
    // Char c: frame label c+1, char label c (ids offset by the blank).
    let char_state: Vec<_> = (0..n_chars).map(|_| t.add_state()).collect();
    let blank = 1 as Label;
    t.add_arc(hub, Arc::new(blank, EPS, Weight::one(), hub));
    for (c, &s) in char_state.iter().enumerate() {
        let frame_label = (c + 2) as Label;
        let char_label = (c + 1) as Label;
        t.set_final(s, Weight::one());
        // Enter: first frame of a character emits it.
        t.add_arc(hub, Arc::new(frame_label, char_label, Weight::one(), s));
        // Stay: repeated frames of the same character emit nothing.
        t.add_arc(s, Arc::new(frame_label, EPS, Weight::one(), s));
        // Blank returns to the hub (allowing a genuine repeat next).
        t.add_arc(s, Arc::new(blank, EPS, Weight::one(), hub));
        // Direct switch to a different character.
        for (c2, &s2) in char_state.iter().enumerate() {
            if c2 != c {
                let fl2 = (c2 + 2) as Label;
                let cl2 = (c2 + 1) as Label;
                t.add_arc(s, Arc::new(fl2, cl2, Weight::one(), s2));
            }
        }
    }
    t.sort_arcs();
    t
}

/// Build the lexicon transducer L over the given character and token
/// alphabets. Returns the machine and the number of disambiguation
/// symbols it appended to a copy of the character table (its input
/// table is `[chars…, #0, #1..#K]`).
///
/// Tokens whose spelling duplicates another's, or is a prefix of
/// another's, get a terminal disambiguation arc; `#0` loops at the root
/// so grammar backoff moves can pass through unchanged.
pub fn build_lexicon_fst(
    entries: &[LexiconEntry],
    char_syms: &SymbolTable,
    token_syms: &SymbolTable,
) -> Result<(Transducer, usize)> {
    if entries.is_empty() {
        return Err(Error::EmptyInput("lexicon has no entries".into()));
    }
    // Validate spellings and tokens up front.
    for e in entries {
        if e.spelling.is_empty() {
            return Err(Error::MissingSpelling {
                token: e.token.clone(),
            });
        }
        for c in e.spelling.chars() {
            if char_syms.id(&char_symbol(c)).is_none() {
                return Err(Error::SpellingOutsideInventory {
                    token: e.token.clone(),
                    spelling: e.spelling.clone(),
                    ch: c,
                });
            }
        }
        if token_syms.id(&e.token).is_none() {
            return Err(Error::SymbolTableMismatch(format!(
                "lexicon token {:?} is not in the grammar vocabulary",
                e.token
            )));
        }
    }

    // Disambiguation: a spelling needs terminal symbols when it occurs
    // more than once or is a strict prefix of another spelling.
    let spellings: BTreeSet<&str> = entries.iter().map(|e| e.spelling.as_str()).collect();
    let mut occurrences: BTreeMap<&str, usize> = BTreeMap::new();
    for e in entries {
        *occurrences.entry(e.spelling.as_str()).or_insert(0) += 1;
    }
    let is_prefix = |s: &str| {
        spellings
            .range::<str, _>((std::ops::Bound::Excluded(s), std::ops::Bound::Unbounded))
            .take_while(|t| t.starts_with(s))
            .next()
            .is_some()
    };
    let needs_disambig: BTreeSet<&str> = occurrences
        .iter()
        .filter(|(s, &n)| n > 1 || is_prefix(s))
        .map(|(s, _)| *s)
        .collect();
    let max_disambig = occurrences
        .iter()
        .filter(|(s, _)| needs_disambig.contains(*s))
        .map(|(_, &n)| n)
        .max()
        .unwrap_or(0);

    // Input alphabet: characters plus #0..#K.
    let mut isyms = char_syms.clone();
    for i in 0..=max_disambig {
        isyms.add(format!("#{i}"));
    }
    let disambig_id = |i: usize| isyms.id(&format!("#{i}")).expect("disambig symbol present");

    let mut l = Transducer::new(isyms.clone(), token_syms.clone());
    let root = l.add_state();
    l.set_start(root);
    l.set_final(root, Weight::one());
    l.add_arc(
        root,
        Arc::new(
            disambig_id(0),
            token_syms
                .id("#0")
                .ok_or_else(|| Error::SymbolTableMismatch("token table is missing #0".into()))?,
            Weight::one(),
            root,
        ),
    );

    // One chain per entry; the token rides on the first arc.
    let mut next_index: BTreeMap<&str, usize> = BTreeMap::new();
    for e in entries {
        let chars: Vec<Label> = e
            .spelling
            .chars()
            .map(|c| isyms.id(&char_symbol(c)).unwrap())
            .collect();
        let token_label = token_syms.id(&e.token).unwrap();
        let tagged = needs_disambig.contains(e.spelling.as_str());
        let mut src = root;
        for (i, &c) in chars.iter().enumerate() {
            let olabel = if i == 0 { token_label } else { EPS };
            let last = i + 1 == chars.len();
            let dst = if last && !tagged { root } else { l.add_state() };
            l.add_arc(src, Arc::new(c, olabel, Weight::one(), dst));
            src = dst;
        }
        if tagged {
            let idx = next_index.entry(e.spelling.as_str()).or_insert(0);
            *idx += 1;
            l.add_arc(src, Arc::new(disambig_id(*idx), EPS, Weight::one(), root));
        }
    }
    l.sort_arcs();
    Ok((l, max_disambig))
}

/// Build the grammar acceptor G from an n-gram model.
///
/// States are the model's contexts (grams carrying a backoff weight)
/// plus the empty context. Stored grams become token arcs with cost
/// `−ln P`; backoff moves are explicit `#0:ε` arcs with cost `−ln bow`;
/// end-of-sequence grams become final weights. The start state is the
/// sequence-start context.
pub fn build_grammar_fst(model: &NgramModel, token_syms: &SymbolTable) -> Result<Transducer> {
    let order = model.order();
    let mut g = Transducer::new(token_syms.clone(), token_syms.clone());
    let hash0 = token_syms
        .id("#0")
        .ok_or_else(|| Error::SymbolTableMismatch("token table is missing #0".into()))?;

    // Collect contexts: every gram with a backoff weight, plus ε.
    let mut state_of: HashMap<Vec<String>, usize> = HashMap::new();
    let mut bows: HashMap<Vec<String>, f64> = HashMap::new();
    state_of.insert(Vec::new(), g.add_state());
    for k in 1..order {
        for e in model.grams(k) {
            if let Some(bow) = e.bow {
                let ctx: Vec<String> = e.gram.iter().map(|s| s.to_string()).collect();
                state_of.insert(ctx.clone(), g.add_state());
                bows.insert(ctx, bow);
            }
        }
    }
    let resolve = |mut ctx: &[String], map: &HashMap<Vec<String>, usize>| -> usize {
        loop {
            if let Some(&s) = map.get(ctx) {
                return s;
            }
            ctx = &ctx[1..];
        }
    };

    for k in 1..=order {
        for e in model.grams(k) {
            let gram: Vec<String> = e.gram.iter().map(|s| s.to_string()).collect();
            let (h, w) = gram.split_at(k - 1);
            let w = &w[0];
            if w == SEQ_START {
                continue; // context-only; the −99 placeholder is not an event
            }
            let src = resolve(h, &state_of);
            let cost = Weight::new(-e.logp * LN_10);
            if w == SEQ_END {
                g.set_final(src, cost);
            } else {
                let label = token_syms.id(w).ok_or_else(|| {
                    Error::SymbolTableMismatch(format!("token {w:?} missing from the table"))
                })?;
                let dst = resolve(&gram, &state_of);
                g.add_arc(src, Arc::new(label, label, cost, dst));
            }
        }
    }
    for (ctx, bow) in &bows {
        let src = state_of[ctx];
        let dst = resolve(&ctx[1..], &state_of);
        g.add_arc(src, Arc::new(hash0, EPS, Weight::new(-bow * LN_10), dst));
    }

    let start_ctx = vec![SEQ_START.to_string()];
    g.set_start(resolve(&start_ctx, &state_of));
    g.connect();
    g.sort_arcs();
    Ok(g)
}

/// A token-sequence acceptor with `#0` pass-through loops at every
/// state, suitable for scoring a sequence against G by shortest path.
pub fn scoring_acceptor(tokens: &[&str], token_syms: &SymbolTable) -> Result<Transducer> {
    let hash0 = token_syms
        .id("#0")
        .ok_or_else(|| Error::SymbolTableMismatch("token table is missing #0".into()))?;
    let mut labels = Vec::with_capacity(tokens.len());
    for t in tokens {
        labels.push(token_syms.id(t).ok_or_else(|| {
            Error::SymbolTableMismatch(format!("token {t:?} missing from the table"))
        })?);
    }
    let mut a = Transducer::linear_acceptor(&labels, token_syms);
    for s in 0..a.num_states() {
        a.add_arc(s, Arc::new(hash0, hash0, Weight::one(), s));
    }
    a.sort_arcs();
    Ok(a)
}

/// Size measures of one machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    pub states: usize,
    pub arcs: usize,
    pub text_bytes: usize,
}

pub fn graph_stats(t: &Transducer) -> GraphStats {
    GraphStats {
        states: t.num_states(),
        arcs: t.num_arcs(),
        text_bytes: t.to_text().len(),
    }
}

/// A compiled decoding graph with its lexicon and build metadata.
#[derive(Debug)]
pub struct SearchGraph {
    pub fst: Transducer,
    pub entries: Vec<LexiconEntry>,
    pub meta: BTreeMap<String, String>,
}

/// Compile `S = T ∘ min(det(L ∘ G))`, erase disambiguation symbols, and
/// record intermediate sizes in the metadata.
pub fn build_search_graph(
    model: &NgramModel,
    entries: Vec<LexiconEntry>,
    inventory: &CharacterInventory,
) -> Result<SearchGraph> {
    let char_syms = character_table(inventory);
    let token_syms = token_table(model);
    let (l, num_disambig) = build_lexicon_fst(&entries, &char_syms, &token_syms)?;
    let g = build_grammar_fst(model, &token_syms)?;

    let lg = compose(&l, &g)?;
    let det = determinize(&lg)?;
    let mut opt = minimize(&det)?;

    // Erase disambiguation symbols: input labels beyond the character
    // alphabet become epsilon, and both tables shed their helper ids.
    let first_disambig = char_syms.len() as Label;
    for s in 0..opt.num_states() {
        for arc in &mut opt.arcs[s] {
            if arc.ilabel >= first_disambig {
                arc.ilabel = EPS;
            }
        }
    }
    opt.isyms.truncate(first_disambig);
    let hash0_out = token_syms.id("#0").expect("token table always holds #0");
    debug_assert!(
        (0..opt.num_states()).all(|s| opt.arcs(s).iter().all(|a| a.olabel != hash0_out)),
        "#0 must never appear as an output label"
    );
    opt.osyms.truncate(hash0_out);

    let t = build_frame_transducer(inventory);
    let mut fused = compose(&t, &opt)?;
    fused.sort_arcs();
    if fused.num_states() == 0 {
        return Err(Error::EmptyGraph);
    }

    let mut meta = BTreeMap::new();
    let put = |meta: &mut BTreeMap<String, String>, key: &str, st: GraphStats| {
        meta.insert(format!("{key}_states"), st.states.to_string());
        meta.insert(format!("{key}_arcs"), st.arcs.to_string());
    };
    put(&mut meta, "lexicon", graph_stats(&l));
    put(&mut meta, "grammar", graph_stats(&g));
    put(&mut meta, "composed", graph_stats(&lg));
    put(&mut meta, "optimized", graph_stats(&opt));
    put(&mut meta, "graph", graph_stats(&fused));
    meta.insert("lm_order".into(), model.order().to_string());
    meta.insert("num_tokens".into(), entries.len().to_string());
    meta.insert("num_disambig".into(), num_disambig.to_string());

    Ok(SearchGraph {
        fst: fused,
        entries,
        meta,
    })
}

/// File names inside a graph directory.
const GRAPH_FILE: &str = "graph.fst.txt";
const ISYMS_FILE: &str = "isyms.txt";
const OSYMS_FILE: &str = "osyms.txt";
const LEXICON_FILE: &str = "lexicon.tsv";
const META_FILE: &str = "meta.txt";

/// Write a graph directory: the arc listing, both symbol tables, the
/// lexicon, and `meta.txt` (sorted `key=value` lines plus a build
/// timestamp).
pub fn write_graph_dir(graph: &SearchGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    graph.fst.write_files(
        &dir.join(GRAPH_FILE),
        &dir.join(ISYMS_FILE),
        &dir.join(OSYMS_FILE),
    )?;
    let mut lex = String::new();
    for e in &graph.entries {
        lex.push_str(&format!("{}\t{}\n", e.token, e.spelling));
    }
    let lex_path = dir.join(LEXICON_FILE);
    fs::write(&lex_path, lex).map_err(|e| Error::io(&lex_path, e))?;

    let mut text = String::new();
    for (k, v) in &graph.meta {
        text.push_str(&format!("{k}={v}\n"));
    }
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
}

/// Read a graph directory written by [`write_graph_dir`].
pub fn read_graph_dir(dir: &Path) -> Result<SearchGraph> {
    let fst = Transducer::read_files(
        &dir.join(GRAPH_FILE),
        &dir.join(ISYMS_FILE),
        &dir.join(OSYMS_FILE),
    )?;
    let lex_path = dir.join(LEXICON_FILE);
    let raw = fs::read_to_string(&lex_path).map_err(|e| Error::io(&lex_path, e))?;
    let mut entries = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (token, spelling) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(&lex_path, i + 1, "expected token<TAB>spelling"))?;
        entries.push(LexiconEntry {
            token: token.to_string(),
            spelling: spelling.to_string(),
        });
    }
    let meta_path = dir.join(META_FILE);
    let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut meta = BTreeMap::new();
    for (i, line) in raw.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(&meta_path, i + 1, "expected key=value"))?;
        meta.insert(k.to_string(), v.to_string());
    }
    Ok(SearchGraph { fst, entries, meta })
}
