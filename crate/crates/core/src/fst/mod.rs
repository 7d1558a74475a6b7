//! Weighted finite-state transducers over the tropical semiring.
//!
//! Weights are costs (typically negated natural-log probabilities):
//! `⊕ = min`, `⊗ = +`, zero = +∞, one = 0. Label 0 is reserved for
//! epsilon in every symbol table. The text format is the classic
//! tab-separated arc listing — `src dst ilabel olabel weight` plus
//! `state weight` final lines — with companion `symbol<TAB>id` tables;
//! state 0 is always the start state in serialized form.

mod ops;

pub use ops::{
    compose, determinize, determinize_with_budget, minimize, remove_epsilons, shortest_path,
};

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::tokens::EPSILON;

/// State index within one transducer.
pub type StateId = usize;

/// Symbol id; 0 is epsilon everywhere.
pub type Label = u32;

/// The reserved epsilon label.
pub const EPS: Label = 0;

/// Default determinization state budget, as a multiple of input states.
pub const DETERMINIZE_BUDGET_FACTOR: usize = 50;

/// A tropical-semiring weight (a cost; lower is better).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight(f64);

impl Weight {
    pub fn new(v: f64) -> Self {
        Weight(v)
    }

    /// The semiring zero (+∞): annihilates ⊗, identity of ⊕.
    pub fn zero() -> Self {
        Weight(f64::INFINITY)
    }

    /// The semiring one (0.0): identity of ⊗.
    pub fn one() -> Self {
        Weight(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::INFINITY
    }

    /// ⊕: minimum of the two costs.
    pub fn plus(self, other: Weight) -> Weight {
        Weight(self.0.min(other.0))
    }

    /// ⊗: sum of the two costs.
    pub fn times(self, other: Weight) -> Weight {
        Weight(self.0 + other.0)
    }

    pub fn approx_eq(self, other: Weight, tol: f64) -> bool {
        if self.is_zero() || other.is_zero() {
            return self.is_zero() && other.is_zero();
        }
        (self.0 - other.0).abs() <= tol
    }
}

impl std::fmt::Display for Weight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&fmt_weight(self.0))
    }
}

/// Render a weight with nine significant digits (`%.9g` style).
///
/// Strings produced here re-parse to the same f64 and re-render to the
/// same string, which is what makes the text format round-trip bit-exact.
pub fn fmt_weight(w: f64) -> String {
    if w == f64::INFINITY {
        return "inf".into();
    }
    if w == f64::NEG_INFINITY {
        return "-inf".into();
    }
    if w == 0.0 {
        return "0".into();
    }
    let mag = w.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let fixed = format!("{:.*}", decimals, w);
        // Rounding can push the value across a power of ten (e.g. 9.99e8
        // rounding to 1e9); fall through to scientific form in that case.
        let reparsed: f64 = fixed.parse().unwrap_or(w);
        if reparsed == 0.0 || (-4..9).contains(&(reparsed.abs().log10().floor() as i32)) {
            return trim_fixed(fixed);
        }
    }
    let sci = format!("{:.8e}", w);
    trim_scientific(sci)
}

fn trim_fixed(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn trim_scientific(s: String) -> String {
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let mantissa = trim_fixed(mantissa.to_string());
            format!("{mantissa}e{exp}")
        }
        None => s,
    }
}

fn parse_weight(field: &str) -> Option<f64> {
    match field {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => field.parse().ok(),
    }
}

/// Bidirectional symbol ↔ label table; label 0 is always `<eps>`.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, Label>,
}

impl PartialEq for SymbolTable {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols
    }
}
impl Eq for SymbolTable {}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolTable {
    pub fn new() -> Self {
        SymbolTable {
            symbols: vec![EPSILON.to_string()],
            index: HashMap::from([(EPSILON.to_string(), 0)]),
        }
    }

    /// Build a table from real (non-epsilon) symbols, ids 1, 2, ...
    pub fn from_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = Self::new();
        for s in symbols {
            table.add(s.into());
        }
        table
    }

    /// Insert a symbol (if new) and return its label.
    pub fn add(&mut self, symbol: impl Into<String>) -> Label {
        let symbol = symbol.into();
        if let Some(&id) = self.index.get(&symbol) {
            return id;
        }
        let id = self.symbols.len() as Label;
        self.index.insert(symbol.clone(), id);
        self.symbols.push(symbol);
        id
    }

    pub fn id(&self, symbol: &str) -> Option<Label> {
        self.index.get(symbol).copied()
    }

    pub fn name(&self, label: Label) -> Option<&str> {
        self.symbols.get(label as usize).map(String::as_str)
    }

    /// Number of entries including epsilon.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len() <= 1
    }

    /// All `(label, symbol)` pairs including epsilon.
    pub fn iter(&self) -> impl Iterator<Item = (Label, &str)> {
        self.symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (i as Label, s.as_str()))
    }

    /// Drop the entries at the end of the table starting at `from`.
    pub(crate) fn truncate(&mut self, from: Label) {
        for s in self.symbols.drain(from as usize..) {
            self.index.remove(&s);
        }
    }

    pub fn write(&self, path: &FsPath) -> Result<()> {
        let mut out = String::new();
        for (id, sym) in self.iter() {
            out.push_str(&format!("{sym}\t{id}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &FsPath) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table = SymbolTable::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (sym, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(path, idx + 1, "expected symbol<TAB>id"))?;
            let id: Label = id
                .trim()
                .parse()
                .map_err(|_| Error::format(path, idx + 1, "bad label id"))?;
            if id == 0 {
                if sym != EPSILON {
                    return Err(Error::format(path, idx + 1, "label 0 must be <eps>"));
                }
                continue;
            }
            let got = table.add(sym);
            if got != id {
                return Err(Error::format(
                    path,
                    idx + 1,
                    format!("non-contiguous label {id} for {sym:?} (expected {got})"),
                ));
            }
        }
        Ok(table)
    }
}

/// One transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub ilabel: Label,
    pub olabel: Label,
    pub weight: Weight,
    pub nextstate: StateId,
}

impl Arc {
    pub fn new(ilabel: Label, olabel: Label, weight: Weight, nextstate: StateId) -> Self {
        Arc {
            ilabel,
            olabel,
            weight,
            nextstate,
        }
    }
}

/// A weighted transducer with symbol tables on both tapes.
#[derive(Debug, Clone)]
pub struct Transducer {
    pub(crate) start: Option<StateId>,
    pub(crate) arcs: Vec<Vec<Arc>>,
    pub(crate) finals: Vec<Option<Weight>>,
    pub(crate) isyms: SymbolTable,
    pub(crate) osyms: SymbolTable,
}

impl Transducer {
    pub fn new(isyms: SymbolTable, osyms: SymbolTable) -> Self {
        Transducer {
            start: None,
            arcs: Vec::new(),
            finals: Vec::new(),
            isyms,
            osyms,
        }
    }

    /// An acceptor shares one table for both tapes.
    pub fn acceptor(syms: SymbolTable) -> Self {
        Self::new(syms.clone(), syms)
    }

    /// A straight-line acceptor for one label sequence (all-one weights).
    pub fn linear_acceptor(labels: &[Label], syms: &SymbolTable) -> Self {
        let mut t = Self::acceptor(syms.clone());
        let mut state = t.add_state();
        t.set_start(state);
        for &l in labels {
            let next = t.add_state();
            t.add_arc(state, Arc::new(l, l, Weight::one(), next));
            state = next;
        }
        t.set_final(state, Weight::one());
        t
    }

    pub fn add_state(&mut self) -> StateId {
        self.arcs.push(Vec::new());
        self.finals.push(None);
        self.arcs.len() - 1
    }

    pub fn set_start(&mut self, s: StateId) {
        self.start = Some(s);
    }

    pub fn start(&self) -> Option<StateId> {
        self.start
    }

    pub fn add_arc(&mut self, s: StateId, arc: Arc) {
        self.arcs[s].push(arc);
    }

    pub fn set_final(&mut self, s: StateId, w: Weight) {
        self.finals[s] = Some(w);
    }

    pub fn final_weight(&self, s: StateId) -> Option<Weight> {
        self.finals.get(s).copied().flatten()
    }

    pub fn is_final(&self, s: StateId) -> bool {
        self.final_weight(s).is_some()
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn arcs(&self, s: StateId) -> &[Arc] {
        &self.arcs[s]
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        0..self.num_states()
    }

    pub fn input_symbols(&self) -> &SymbolTable {
        &self.isyms
    }

    pub fn output_symbols(&self) -> &SymbolTable {
        &self.osyms
    }

    /// Sort every state's arcs by (ilabel, olabel, nextstate, weight).
    pub fn sort_arcs(&mut self) {
        for arcs in &mut self.arcs {
            arcs.sort_by(|a, b| {
                (a.ilabel, a.olabel, a.nextstate, a.weight.value().to_bits()).cmp(&(
                    b.ilabel,
                    b.olabel,
                    b.nextstate,
                    b.weight.value().to_bits(),
                ))
            });
        }
    }

    /// No input-epsilon arcs and at most one arc per input label per state.
    pub fn is_deterministic(&self) -> bool {
        for s in self.states() {
            let mut seen = std::collections::HashSet::new();
            for arc in &self.arcs[s] {
                if arc.ilabel == EPS || !seen.insert(arc.ilabel) {
                    return false;
                }
            }
        }
        true
    }

    /// Remove states that are not both accessible from the start and
    /// co-accessible to a final state. Surviving states keep their
    /// relative order.
    pub fn connect(&mut self) {
        let n = self.num_states();
        let mut forward = vec![false; n];
        if let Some(start) = self.start {
            let mut queue = VecDeque::from([start]);
            forward[start] = true;
            while let Some(s) = queue.pop_front() {
                for arc in &self.arcs[s] {
                    if !forward[arc.nextstate] {
                        forward[arc.nextstate] = true;
                        queue.push_back(arc.nextstate);
                    }
                }
            }
        }
        // Backward reachability over reversed arcs.
        let mut rev: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for s in 0..n {
            for arc in &self.arcs[s] {
                rev[arc.nextstate].push(s);
            }
        }
        let mut backward = vec![false; n];
        let mut queue: VecDeque<StateId> = (0..n)
            .filter(|&s| self.finals[s].is_some())
            .inspect(|&s| backward[s] = true)
            .collect();
        while let Some(s) = queue.pop_front() {
            for &p in &rev[s] {
                if !backward[p] {
                    backward[p] = true;
                    queue.push_back(p);
                }
            }
        }

        let keep: Vec<bool> = (0..n).map(|s| forward[s] && backward[s]).collect();
        let mut remap: Vec<Option<StateId>> = vec![None; n];
        let mut next = 0;
        for s in 0..n {
            if keep[s] {
                remap[s] = Some(next);
                next += 1;
            }
        }
        let mut arcs = vec![Vec::new(); next];
        let mut finals = vec![None; next];
        for s in 0..n {
            let Some(new_s) = remap[s] else { continue };
            finals[new_s] = self.finals[s];
            arcs[new_s] = self.arcs[s]
                .iter()
                .filter_map(|a| {
                    remap[a.nextstate].map(|ns| Arc::new(a.ilabel, a.olabel, a.weight, ns))
                })
                .collect();
        }
        self.arcs = arcs;
        self.finals = finals;
        self.start = self.start.and_then(|s| remap[s]);
    }

    /// All accepting paths with at most `max_arcs` arcs, by exhaustive
    /// depth-first search. Exponential; intended as a test oracle and for
    /// toy-sized machines only.
    pub fn enumerate_paths(&self, max_arcs: usize) -> Vec<Path> {
        let mut out = Vec::new();
        let Some(start) = self.start else {
            return out;
        };
        let mut stack: Vec<Arc> = Vec::new();
        self.enumerate_from(start, max_arcs, Weight::one(), &mut stack, &mut out);
        out
    }

    fn enumerate_from(
        &self,
        state: StateId,
        remaining: usize,
        acc: Weight,
        stack: &mut Vec<Arc>,
        out: &mut Vec<Path>,
    ) {
        if let Some(f) = self.final_weight(state) {
            out.push(Path {
                arcs: stack.clone(),
                weight: acc.times(f),
            });
        }
        if remaining == 0 {
            return;
        }
        for arc in &self.arcs[state] {
            stack.push(*arc);
            self.enumerate_from(
                arc.nextstate,
                remaining - 1,
                acc.times(arc.weight),
                stack,
                out,
            );
            stack.pop();
        }
    }

    /// Serialize to the text format (states renumbered so start is 0,
    /// breadth-first). Isolated states with neither arcs nor a final
    /// weight are not representable and are dropped.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let Some(start) = self.start else {
            return out;
        };
        let order = self.bfs_order(start);
        let mut remap: Vec<Option<usize>> = vec![None; self.num_states()];
        for (new_id, &old) in order.iter().enumerate() {
            remap[old] = Some(new_id);
        }
        for &old in &order {
            let src = remap[old].unwrap();
            for arc in &self.arcs[old] {
                if let Some(dst) = remap[arc.nextstate] {
                    out.push_str(&format!(
                        "{src}\t{dst}\t{}\t{}\t{}\n",
                        arc.ilabel,
                        arc.olabel,
                        fmt_weight(arc.weight.value())
                    ));
                }
            }
        }
        for &old in &order {
            if let Some(f) = self.finals[old] {
                out.push_str(&format!(
                    "{}\t{}\n",
                    remap[old].unwrap(),
                    fmt_weight(f.value())
                ));
            }
        }
        out
    }

    /// Breadth-first state order from the start, following sorted arcs;
    /// unreachable states are appended in index order if they carry arcs
    /// or final weights.
    fn bfs_order(&self, start: StateId) -> Vec<StateId> {
        let mut seen = vec![false; self.num_states()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for arc in &self.arcs[s] {
                if !seen[arc.nextstate] {
                    seen[arc.nextstate] = true;
                    queue.push_back(arc.nextstate);
                }
            }
        }
        for s in self.states() {
            if !seen[s] && (!self.arcs[s].is_empty() || self.finals[s].is_some()) {
                order.push(s);
            }
        }
        order
    }

    /// Write the arc listing and both symbol tables.
    pub fn write_files(
        &self,
        fst_path: &FsPath,
        isyms_path: &FsPath,
        osyms_path: &FsPath,
    ) -> Result<()> {
        fs::write(fst_path, self.to_text()).map_err(|e| Error::io(fst_path, e))?;
        self.isyms.write(isyms_path)?;
        self.osyms.write(osyms_path)
    }

    pub fn read_files(fst_path: &FsPath, isyms_path: &FsPath, osyms_path: &FsPath) -> Result<Self> {
        let isyms = SymbolTable::read(isyms_path)?;
        let osyms = SymbolTable::read(osyms_path)?;
        let raw = fs::read_to_string(fst_path).map_err(|e| Error::io(fst_path, e))?;
        let mut t = Transducer::new(isyms, osyms);
        let ensure_state = |t: &mut Transducer, s: usize| {
            while t.num_states() <= s {
                t.add_state();
            }
        };
        for (idx, line) in raw.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [src, dst, il, ol, w] => {
                    let src: usize = src
                        .parse()
                        .map_err(|_| Error::format(fst_path, idx + 1, "bad source state"))?;
                    let dst: usize = dst
                        .parse()
                        .map_err(|_| Error::format(fst_path, idx + 1, "bad target state"))?;
                    let il: Label = il
                        .parse()
                        .map_err(|_| Error::format(fst_path, idx + 1, "bad input label"))?;
                    let ol: Label = ol
                        .parse()
                        .map_err(|_| Error::format(fst_path, idx + 1, "bad output label"))?;
                    let w = parse_weight(w)
                        .ok_or_else(|| Error::format(fst_path, idx + 1, "bad weight"))?;
                    if il as usize >= t.isyms.len() || ol as usize >= t.osyms.len() {
                        return Err(Error::format(
                            fst_path,
                            idx + 1,
                            "label outside symbol table",
                        ));
                    }
                    ensure_state(&mut t, src.max(dst));
                    t.add_arc(src, Arc::new(il, ol, Weight::new(w), dst));
                    if t.start.is_none() {
                        t.set_start(src);
                    }
                }
                [state, w] => {
                    let state: usize = state
                        .parse()
                        .map_err(|_| Error::format(fst_path, idx + 1, "bad final state"))?;
                    let w = parse_weight(w)
                        .ok_or_else(|| Error::format(fst_path, idx + 1, "bad final weight"))?;
                    ensure_state(&mut t, state);
                    t.set_final(state, Weight::new(w));
                    if t.start.is_none() {
                        t.set_start(state);
                    }
                }
                _ => {
                    return Err(Error::format(
                        fst_path,
                        idx + 1,
                        format!("expected 2 or 5 tab-separated fields, got {}", fields.len()),
                    ))
                }
            }
        }
        Ok(t)
    }
}

/// One accepting path.
#[derive(Debug, Clone)]
pub struct Path {
    pub arcs: Vec<Arc>,
    /// Total weight including the final weight.
    pub weight: Weight,
}

impl Path {
    /// Input labels with epsilons removed.
    pub fn ilabels(&self) -> Vec<Label> {
        self.arcs
            .iter()
            .filter(|a| a.ilabel != EPS)
            .map(|a| a.ilabel)
            .collect()
    }

    /// Output labels with epsilons removed.
    pub fn olabels(&self) -> Vec<Label> {
        self.arcs
            .iter()
            .filter(|a| a.olabel != EPS)
            .map(|a| a.olabel)
            .collect()
    }

    /// Input labels rendered through a symbol table, concatenated.
    pub fn input_string(&self, syms: &SymbolTable) -> String {
        self.ilabels()
            .iter()
            .filter_map(|&l| syms.name(l))
            .collect()
    }

    pub fn output_string(&self, syms: &SymbolTable) -> String {
        self.olabels()
            .iter()
            .filter_map(|&l| syms.name(l))
            .collect()
    }
}
