//! Core transducer algorithms: composition, determinization, minimization,
//! epsilon removal, and n-best shortest paths.

use std::collections::{BinaryHeap, HashMap, VecDeque};

use super::{Arc, Label, StateId, Transducer, Weight, DETERMINIZE_BUDGET_FACTOR, EPS};
use crate::error::{Error, Result};

/// Compose two machines: paths of the result pair an `a`-path with a
/// `b`-path whose input string equals the `a`-path's output string, with
/// weights ⊗-combined. Epsilon moves are sequenced by a three-state
/// filter so every compatible path pair is represented and weights are
/// never dropped. `a`'s output table must equal `b`'s input table. The
/// result is trimmed.
pub fn compose(a: &Transducer, b: &Transducer) -> Result<Transducer> {
    if a.osyms != b.isyms {
        return Err(Error::SymbolTableMismatch(
            "left machine's output symbols differ from right machine's input symbols".into(),
        ));
    }
    let mut out = Transducer::new(a.isyms.clone(), b.osyms.clone());
    let (Some(a_start), Some(b_start)) = (a.start, b.start) else {
        return Ok(out);
    };

    // b's arcs indexed per state, sorted by input label for range lookup.
    let b_sorted: Vec<Vec<Arc>> = b
        .arcs
        .iter()
        .map(|arcs| {
            let mut v = arcs.clone();
            v.sort_by_key(|arc| arc.ilabel);
            v
        })
        .collect();
    fn matching(arcs: &[Arc], label: Label) -> &[Arc] {
        let lo = arcs.partition_point(|arc| arc.ilabel < label);
        let hi = arcs.partition_point(|arc| arc.ilabel <= label);
        &arcs[lo..hi]
    }

    // Filter: 0 = anything may move; 1 = only `a` may move alone;
    // 2 = only `b` may move alone. Joint moves always reset to 0.
    type Key = (StateId, StateId, u8);
    let mut ids: HashMap<Key, StateId> = HashMap::new();
    let mut queue: VecDeque<Key> = VecDeque::new();
    let start_key = (a_start, b_start, 0u8);

    macro_rules! state_of {
        ($out:expr, $key:expr) => {{
            let key: Key = $key;
            *ids.entry(key).or_insert_with(|| {
                queue.push_back(key);
                $out.add_state()
            })
        }};
    }

    let s0 = state_of!(out, start_key);
    out.set_start(s0);

    while let Some(key @ (qa, qb, filter)) = queue.pop_front() {
        let src = ids[&key];
        for a_arc in &a.arcs[qa] {
            if a_arc.olabel != EPS {
                // Joint move on a real intermediate symbol.
                for b_arc in matching(&b_sorted[qb], a_arc.olabel) {
                    let dst = state_of!(out, (a_arc.nextstate, b_arc.nextstate, 0));
                    out.add_arc(
                        src,
                        Arc::new(
                            a_arc.ilabel,
                            b_arc.olabel,
                            a_arc.weight.times(b_arc.weight),
                            dst,
                        ),
                    );
                }
            } else {
                // `a` moves alone, producing nothing for `b` to consume.
                if filter != 2 {
                    let dst = state_of!(out, (a_arc.nextstate, qb, 1));
                    out.add_arc(src, Arc::new(a_arc.ilabel, EPS, a_arc.weight, dst));
                }
                // Both sides move on epsilon simultaneously.
                if filter == 0 {
                    for b_arc in matching(&b_sorted[qb], EPS) {
                        let dst = state_of!(out, (a_arc.nextstate, b_arc.nextstate, 0));
                        out.add_arc(
                            src,
                            Arc::new(
                                a_arc.ilabel,
                                b_arc.olabel,
                                a_arc.weight.times(b_arc.weight),
                                dst,
                            ),
                        );
                    }
                }
            }
        }
        // `b` moves alone on an epsilon input.
        if filter != 1 {
            for b_arc in matching(&b_sorted[qb], EPS) {
                let dst = state_of!(out, (qa, b_arc.nextstate, 2));
                out.add_arc(src, Arc::new(EPS, b_arc.olabel, b_arc.weight, dst));
            }
        }
        if let (Some(fa), Some(fb)) = (a.final_weight(qa), b.final_weight(qb)) {
            out.set_final(src, fa.times(fb));
        }
    }

    out.connect();
    out.sort_arcs();
    Ok(out)
}

/// Determinize with the default state budget (50× the input size).
pub fn determinize(t: &Transducer) -> Result<Transducer> {
    determinize_with_budget(t, DETERMINIZE_BUDGET_FACTOR)
}

/// Weighted subset construction with output- and weight-residuals.
///
/// Equal input strings are ⊕-combined (minimum cost). Input-epsilon arcs
/// are eliminated first, so the result has at most one arc per input
/// label per state and no input epsilons. Each arc emits at most one
/// output symbol; pending output is carried in the subset elements.
///
/// Errors: [`Error::DeterminizationBudget`] when the result would exceed
/// `budget_factor` states per input state, and
/// [`Error::DeterminizationResidual`] when a final state is reached while
/// output symbols are still pending (the relation cannot be expressed
/// deterministically arc-by-arc).
pub fn determinize_with_budget(t: &Transducer, budget_factor: usize) -> Result<Transducer> {
    let has_input_eps = t
        .states()
        .any(|s| t.arcs(s).iter().any(|a| a.ilabel == EPS));
    let cleaned;
    let t = if has_input_eps {
        cleaned = remove_epsilons(t)?;
        &cleaned
    } else {
        t
    };

    let mut out = Transducer::new(t.isyms.clone(), t.osyms.clone());
    let Some(start) = t.start else {
        return Ok(out);
    };
    let budget = budget_factor.saturating_mul(t.num_states().max(1));

    // One subset element: a source state, the output symbols still owed,
    // and the cost not yet carried by emitted arcs.
    type Elem = (StateId, Vec<Label>, f64);
    // Keys replace the residual cost by its bit pattern so equal subsets
    // hash identically.
    type Key = Vec<(StateId, Vec<Label>, u64)>;

    let key_of = |elems: &[Elem]| -> Key {
        elems
            .iter()
            .map(|(s, z, w)| (*s, z.clone(), w.to_bits()))
            .collect()
    };

    let start_elems: Vec<Elem> = vec![(start, Vec::new(), 0.0)];
    let mut ids: HashMap<Key, StateId> = HashMap::new();
    let mut subsets: Vec<Vec<Elem>> = Vec::new();
    let mut queue: VecDeque<StateId> = VecDeque::new();

    let sid = out.add_state();
    out.set_start(sid);
    ids.insert(key_of(&start_elems), sid);
    subsets.push(start_elems);
    queue.push_back(sid);

    while let Some(src) = queue.pop_front() {
        let elems = subsets[src].clone();

        // Final weight: ⊕ over final member states; all of them must have
        // flushed their output by now.
        let mut final_w = Weight::zero();
        for (q, z, w) in &elems {
            if let Some(f) = t.final_weight(*q) {
                if !z.is_empty() {
                    return Err(Error::DeterminizationResidual);
                }
                final_w = final_w.plus(Weight::new(w + f.value()));
            }
        }
        if !final_w.is_zero() {
            out.set_final(src, final_w);
        }

        // All input labels leaving this subset, in sorted order.
        let mut labels: Vec<Label> = elems
            .iter()
            .flat_map(|(q, _, _)| t.arcs(*q).iter().map(|a| a.ilabel))
            .collect();
        labels.sort_unstable();
        labels.dedup();

        for x in labels {
            // Successor candidates, ⊕-merged per (state, pending output).
            let mut cand: HashMap<(StateId, Vec<Label>), f64> = HashMap::new();
            for (q, z, w) in &elems {
                for arc in t.arcs(*q).iter().filter(|a| a.ilabel == x) {
                    let mut z2 = z.clone();
                    if arc.olabel != EPS {
                        z2.push(arc.olabel);
                    }
                    let w2 = w + arc.weight.value();
                    cand.entry((arc.nextstate, z2))
                        .and_modify(|cw| *cw = cw.min(w2))
                        .or_insert(w2);
                }
            }
            let mut next: Vec<Elem> = cand.into_iter().map(|((q, z), w)| (q, z, w)).collect();
            next.sort_by(|a, b| (a.0, &a.1, a.2.to_bits()).cmp(&(b.0, &b.1, b.2.to_bits())));

            // Shared cost moves onto the arc.
            let base = next
                .iter()
                .map(|(_, _, w)| *w)
                .fold(f64::INFINITY, f64::min);
            for (_, _, w) in &mut next {
                *w -= base;
            }
            // If every pending output starts with the same symbol, that
            // one symbol can be emitted on this arc.
            let emit = match next.first().and_then(|(_, z, _)| z.first().copied()) {
                Some(sym) if next.iter().all(|(_, z, _)| z.first() == Some(&sym)) => {
                    for (_, z, _) in &mut next {
                        z.remove(0);
                    }
                    sym
                }
                _ => EPS,
            };

            let key = key_of(&next);
            let dst = match ids.get(&key) {
                Some(&d) => d,
                None => {
                    if subsets.len() >= budget {
                        return Err(Error::DeterminizationBudget {
                            budget,
                            input_states: t.num_states(),
                        });
                    }
                    let d = out.add_state();
                    ids.insert(key, d);
                    subsets.push(next);
                    queue.push_back(d);
                    d
                }
            };
            out.add_arc(src, Arc::new(x, emit, Weight::new(base), dst));
        }
    }

    out.connect();
    out.sort_arcs();
    Ok(out)
}

/// Shortest distance from every state to a final state (tropical).
/// States that cannot reach a final state get +∞.
pub(crate) fn shortest_distance_to_final(t: &Transducer) -> Result<Vec<f64>> {
    let n = t.num_states();
    let mut rev: Vec<Vec<(StateId, f64)>> = vec![Vec::new(); n];
    for s in 0..n {
        for arc in t.arcs(s) {
            rev[arc.nextstate].push((s, arc.weight.value()));
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut queued = vec![false; n];
    // Arc count of the path behind each state's current distance. Without
    // a negative cycle every improving path is simple (a repeated state
    // would mean a strictly improving loop), so n or more arcs is proof
    // of one. Counting improvements per state instead would misfire:
    // cascaded updates can legitimately improve a state far more than n
    // times when paths are dense.
    let mut path_arcs = vec![0usize; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        if let Some(f) = t.final_weight(s) {
            dist[s] = f.value();
            queue.push_back(s);
            queued[s] = true;
        }
    }
    while let Some(s) = queue.pop_front() {
        queued[s] = false;
        for &(p, w) in &rev[s] {
            let nd = w + dist[s];
            if nd < dist[p] {
                dist[p] = nd;
                path_arcs[p] = path_arcs[s] + 1;
                if path_arcs[p] >= n {
                    return Err(Error::NegativeWeightCycle);
                }
                if !queued[p] {
                    queued[p] = true;
                    queue.push_back(p);
                }
            }
        }
    }
    Ok(dist)
}

/// Minimize a deterministic machine: push weights toward the start so
/// equivalent residual behaviors become bitwise identical, then merge
/// states by Moore partition refinement. Path weights are preserved
/// exactly.
pub fn minimize(t: &Transducer) -> Result<Transducer> {
    for s in t.states() {
        let mut seen = std::collections::HashSet::new();
        for arc in t.arcs(s) {
            if arc.ilabel == EPS || !seen.insert(arc.ilabel) {
                return Err(Error::NotDeterministic { state: s });
            }
        }
    }
    let mut m = t.clone();
    m.connect();
    let n = m.num_states();
    if n == 0 || m.start.is_none() {
        return Ok(m);
    }
    let start = m.start.unwrap();

    // Weight pushing: reweight so every state's cheapest way out costs 0.
    // Adding the start's distance back onto final weights keeps each
    // accepting path's total bit-for-bit identical.
    let dist = shortest_distance_to_final(&m)?;
    let d_start = dist[start];
    let mut pushed_arcs: Vec<Vec<Arc>> = vec![Vec::new(); n];
    let mut pushed_finals: Vec<Option<f64>> = vec![None; n];
    for s in 0..n {
        for arc in &m.arcs[s] {
            let w = arc.weight.value() + dist[arc.nextstate] - dist[s];
            pushed_arcs[s].push(Arc::new(
                arc.ilabel,
                arc.olabel,
                Weight::new(w),
                arc.nextstate,
            ));
        }
        if let Some(f) = m.finals[s] {
            pushed_finals[s] = Some(f.value() - dist[s] + d_start);
        }
        pushed_arcs[s].sort_by_key(|a| a.ilabel);
    }

    // Moore refinement: start from finality classes, split by outgoing
    // behavior until stable. Weights compare bitwise; pushing has already
    // canonicalized them.
    let mut class = vec![0u32; n];
    {
        let mut seen: HashMap<Option<u64>, u32> = HashMap::new();
        for s in 0..n {
            let sig = pushed_finals[s].map(f64::to_bits);
            let next_id = seen.len() as u32;
            class[s] = *seen.entry(sig).or_insert(next_id);
        }
    }
    loop {
        type Sig = (u32, Vec<(Label, Label, u64, u32)>);
        let mut seen: HashMap<Sig, u32> = HashMap::new();
        let mut next_class = vec![0u32; n];
        for s in 0..n {
            let sig: Sig = (
                class[s],
                pushed_arcs[s]
                    .iter()
                    .map(|a| {
                        (
                            a.ilabel,
                            a.olabel,
                            a.weight.value().to_bits(),
                            class[a.nextstate],
                        )
                    })
                    .collect(),
            );
            let next_id = seen.len() as u32;
            next_class[s] = *seen.entry(sig).or_insert(next_id);
        }
        let stable = seen.len() as u32
            == class
                .iter()
                .copied()
                .collect::<std::collections::HashSet<_>>()
                .len() as u32;
        class = next_class;
        if stable {
            break;
        }
    }

    // Quotient machine: one state per class, numbered by first occurrence.
    let mut remap: HashMap<u32, StateId> = HashMap::new();
    let mut order: Vec<StateId> = Vec::new();
    for (s, &c) in class.iter().enumerate() {
        remap.entry(c).or_insert_with(|| {
            order.push(s);
            order.len() - 1
        });
    }
    let mut out = Transducer::new(m.isyms.clone(), m.osyms.clone());
    for _ in 0..order.len() {
        out.add_state();
    }
    out.set_start(remap[&class[start]]);
    for (new_id, &rep) in order.iter().enumerate() {
        for arc in &pushed_arcs[rep] {
            out.add_arc(
                new_id,
                Arc::new(
                    arc.ilabel,
                    arc.olabel,
                    arc.weight,
                    remap[&class[arc.nextstate]],
                ),
            );
        }
        if let Some(f) = pushed_finals[rep] {
            out.set_final(new_id, Weight::new(f));
        }
    }
    out.sort_arcs();
    Ok(out)
}

/// Remove input-epsilon arcs by folding each state's epsilon closure into
/// its real arcs and final weight.
///
/// Output symbols riding on epsilon arcs are pushed forward onto the next
/// real arc. If a closure would need to emit two or more symbols on one
/// arc, or still owes output at a final state, the machine cannot be
/// represented without structural changes and
/// [`Error::EpsilonOutputTooLong`] is returned. Epsilon cycles must have
/// non-negative weight ([`Error::NegativeEpsilonCycle`] otherwise).
pub fn remove_epsilons(t: &Transducer) -> Result<Transducer> {
    let n = t.num_states();
    let mut out = Transducer::new(t.isyms.clone(), t.osyms.clone());
    for _ in 0..n {
        out.add_state();
    }
    if let Some(s) = t.start {
        out.set_start(s);
    }

    for q in 0..n {
        // Non-epsilon arcs survive unchanged; merged map also ⊕-combines
        // duplicates produced by the closure.
        let mut merged: HashMap<(Label, Label, StateId), f64> = HashMap::new();
        for arc in t.arcs(q) {
            if arc.ilabel != EPS {
                let key = (arc.ilabel, arc.olabel, arc.nextstate);
                merged
                    .entry(key)
                    .and_modify(|w| *w = w.min(arc.weight.value()))
                    .or_insert(arc.weight.value());
            }
        }
        let mut final_w = t.final_weight(q).map(|w| w.value());

        // Epsilon closure of q: (state, pending output) → best weight.
        let mut dist: HashMap<(StateId, Vec<Label>), f64> = HashMap::new();
        let mut queue: VecDeque<(StateId, Vec<Label>)> = VecDeque::new();
        dist.insert((q, Vec::new()), 0.0);
        queue.push_back((q, Vec::new()));
        let pop_budget = n * n * 16 + 64;
        let mut pops = 0usize;
        while let Some(key) = queue.pop_front() {
            pops += 1;
            if pops > pop_budget {
                return Err(Error::NegativeEpsilonCycle { state: q });
            }
            let w = dist[&key];
            let (p, ref z) = key;
            for arc in t.arcs(p).iter().filter(|a| a.ilabel == EPS) {
                let mut z2 = z.clone();
                if arc.olabel != EPS {
                    z2.push(arc.olabel);
                }
                if z2.len() > n {
                    return Err(Error::EpsilonOutputTooLong { state: q });
                }
                let w2 = w + arc.weight.value();
                let entry = dist
                    .entry((arc.nextstate, z2.clone()))
                    .or_insert(f64::INFINITY);
                if w2 < *entry {
                    *entry = w2;
                    queue.push_back((arc.nextstate, z2));
                }
            }
        }

        for ((p, z), w) in &dist {
            if *p == q && z.is_empty() {
                continue; // the trivial closure element, already handled
            }
            if let Some(f) = t.final_weight(*p) {
                if !z.is_empty() {
                    return Err(Error::EpsilonOutputTooLong { state: q });
                }
                let candidate = w + f.value();
                final_w = Some(final_w.map_or(candidate, |cur| cur.min(candidate)));
            }
            for arc in t.arcs(*p).iter().filter(|a| a.ilabel != EPS) {
                let mut z2 = z.clone();
                if arc.olabel != EPS {
                    z2.push(arc.olabel);
                }
                if z2.len() > 1 {
                    return Err(Error::EpsilonOutputTooLong { state: q });
                }
                let olabel = z2.first().copied().unwrap_or(EPS);
                let key = (arc.ilabel, olabel, arc.nextstate);
                let w2 = w + arc.weight.value();
                merged
                    .entry(key)
                    .and_modify(|cur| *cur = cur.min(w2))
                    .or_insert(w2);
            }
        }

        let mut arcs: Vec<Arc> = merged
            .into_iter()
            .map(|((il, ol, next), w)| Arc::new(il, ol, Weight::new(w), next))
            .collect();
        arcs.sort_by_key(|a| (a.ilabel, a.olabel, a.nextstate));
        for arc in arcs {
            out.add_arc(q, arc);
        }
        if let Some(f) = final_w {
            out.set_final(q, Weight::new(f));
        }
    }

    out.connect();
    Ok(out)
}

/// The `n` lowest-cost accepting paths, best first.
///
/// A* over the machine with the exact cost-to-finish as the heuristic, so
/// paths pop in nondecreasing total-cost order. Fewer than `n` paths are
/// returned when the machine has fewer accepting paths; zero paths is
/// [`Error::NoAcceptingPath`]. Expansion is capped
/// ([`Error::SearchBudgetExceeded`]) to keep pathological inputs from
/// hanging.
pub fn shortest_path(t: &Transducer, n: usize) -> Result<Vec<super::Path>> {
    if n == 0 {
        return Err(Error::InvalidParameter("shortest_path needs n >= 1".into()));
    }
    let Some(start) = t.start else {
        return Err(Error::NoAcceptingPath);
    };
    let dist = shortest_distance_to_final(t)?;
    if dist[start].is_infinite() {
        return Err(Error::NoAcceptingPath);
    }

    const EXPANSION_BUDGET: usize = 10_000_000;

    #[derive(Debug)]
    struct Item {
        est: f64,
        g: f64,
        seq: u64,
        // None marks a completed path (final weight already in `g`).
        state: Option<StateId>,
        backptr: Option<usize>,
    }
    impl PartialEq for Item {
        fn eq(&self, other: &Self) -> bool {
            self.seq == other.seq
        }
    }
    impl Eq for Item {}
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // BinaryHeap is a max-heap; invert so the smallest estimate pops.
            other
                .est
                .total_cmp(&self.est)
                .then_with(|| other.g.total_cmp(&self.g))
                .then_with(|| other.seq.cmp(&self.seq))
        }
    }
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let mut arena: Vec<(Arc, Option<usize>)> = Vec::new();
    let mut heap: BinaryHeap<Item> = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Item {
        est: dist[start],
        g: 0.0,
        seq,
        state: Some(start),
        backptr: None,
    });
    let mut pops_per_state = vec![0usize; t.num_states()];
    let mut paths: Vec<super::Path> = Vec::new();
    let mut expansions = 0usize;

    while let Some(item) = heap.pop() {
        expansions += 1;
        if expansions > EXPANSION_BUDGET {
            return Err(Error::SearchBudgetExceeded);
        }
        let Some(s) = item.state else {
            // A finished path; rebuild its arcs from the back-pointers.
            let mut arcs = Vec::new();
            let mut bp = item.backptr;
            while let Some(idx) = bp {
                let (arc, prev) = arena[idx];
                arcs.push(arc);
                bp = prev;
            }
            arcs.reverse();
            paths.push(super::Path {
                arcs,
                weight: Weight::new(item.g),
            });
            if paths.len() == n {
                break;
            }
            continue;
        };
        // The k-th pop of a state yields its k-th best prefix cost; more
        // than n pops can never contribute to the n best paths.
        pops_per_state[s] += 1;
        if pops_per_state[s] > n {
            continue;
        }
        if let Some(f) = t.final_weight(s) {
            let g = item.g + f.value();
            seq += 1;
            heap.push(Item {
                est: g,
                g,
                seq,
                state: None,
                backptr: item.backptr,
            });
        }
        for arc in t.arcs(s) {
            if dist[arc.nextstate].is_infinite() {
                continue;
            }
            let g = item.g + arc.weight.value();
            arena.push((*arc, item.backptr));
            seq += 1;
            heap.push(Item {
                est: g + dist[arc.nextstate],
                g,
                seq,
                state: Some(arc.nextstate),
                backptr: Some(arena.len() - 1),
            });
        }
    }

    if paths.is_empty() {
        return Err(Error::NoAcceptingPath);
    }
    Ok(paths)
}
