//! Replication properties over recorded decisions, proposals, and outputs.
//!
//! Each function returns the first violation it finds as indices into its
//! arguments, so callers can point at the offending trace events.

use std::collections::BTreeMap;

use crate::chain::Chain;
use crate::quorum::{ProcSet, ProcessorId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub proc: ProcessorId,
    pub instance: u64,
    pub chain: Chain,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub proc: ProcessorId,
    pub instance: u64,
    pub chain: Chain,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputRecord {
    pub proc: ProcessorId,
    pub instance: u64,
    pub decided: Chain,
    pub upper: Chain,
    pub seq: u64,
}

/// A pair of decisions that do not agree.
///
/// All decisions agree pairwise iff, sorted by length, each is a prefix of
/// the next; the first break in that order is reported.
pub fn agreement_violation(decisions: &[Decision]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..decisions.len()).collect();
    order.sort_by_key(|&i| (decisions[i].chain.len(), decisions[i].seq));
    order.windows(2).find_map(|w| {
        let (a, b) = (&decisions[w[0]].chain, &decisions[w[1]].chain);
        (!a.is_prefix_of(b)).then(|| (w[0].min(w[1]), w[0].max(w[1])))
    })
}

/// A decision that no proposal extends.
pub fn validity_violation(decisions: &[Decision], proposals: &[Proposal]) -> Option<usize> {
    let mut by_instance: BTreeMap<u64, Vec<&Chain>> = BTreeMap::new();
    for p in proposals {
        by_instance.entry(p.instance).or_default().push(&p.chain);
    }
    decisions.iter().position(|d| {
        let same = by_instance.get(&d.instance).into_iter().flatten();
        !same.clone().any(|c| d.chain.is_prefix_of(c)) && !proposals.iter().any(|p| d.chain.is_prefix_of(&p.chain))
    })
}

/// Two successive decisions of one processor where the later one does not
/// extend the earlier. Decisions are taken in the given order.
pub fn monotonicity_violation(decisions: &[Decision]) -> Option<(usize, usize)> {
    let mut last: BTreeMap<ProcessorId, usize> = BTreeMap::new();
    for (j, d) in decisions.iter().enumerate() {
        if let Some(&i) = last.get(&d.proc) {
            if !decisions[i].chain.is_prefix_of(&d.chain) {
                return Some((i, j));
            }
        }
        last.insert(d.proc, j);
    }
    None
}

/// A decision by a member of `correct` in an instance before `horizon` that
/// some member of `correct` never caught up with.
///
/// `horizon` is the last instance every correct processor completed.
pub fn relay_violation(decisions: &[Decision], correct: ProcSet, horizon: u64) -> Option<(usize, ProcessorId)> {
    let mut longest: BTreeMap<ProcessorId, &Chain> = BTreeMap::new();
    for d in decisions.iter().filter(|d| correct.contains(d.proc)) {
        let e = longest.entry(d.proc).or_insert(&d.chain);
        if d.chain.len() > e.len() {
            *e = &d.chain;
        }
    }
    let empty = Chain::empty();
    for (i, d) in decisions.iter().enumerate() {
        if !correct.contains(d.proc) || d.instance >= horizon {
            continue;
        }
        for q in correct.iter() {
            let reached = longest.get(&q).copied().unwrap_or(&empty);
            if !d.chain.is_prefix_of(reached) {
                return Some((i, q));
            }
        }
    }
    None
}

/// An output `⟨i, d, u⟩` and a proposal to a later instance `j > i` whose
/// chain does not extend `d`.
pub fn input_extension_violation(outputs: &[OutputRecord], proposals: &[Proposal]) -> Option<(usize, usize)> {
    let mut meets: BTreeMap<u64, Chain> = BTreeMap::new();
    for p in proposals {
        let m = meets.entry(p.instance).or_insert_with(|| p.chain.clone());
        *m = m.meet(&p.chain);
    }
    // later[i] = meet of all proposals to instances after i.
    let mut later: BTreeMap<u64, Chain> = BTreeMap::new();
    let mut acc: Option<Chain> = None;
    for (&j, m) in meets.iter().rev() {
        acc = Some(match acc {
            None => m.clone(),
            Some(a) => a.meet(m),
        });
        later.insert(j, acc.clone().expect("just set"));
    }
    for (i, o) in outputs.iter().enumerate() {
        let Some((_, bound)) = later.range(o.instance + 1..).next() else { continue };
        if !o.decided.is_prefix_of(bound) {
            let j = proposals
                .iter()
                .position(|p| p.instance > o.instance && !o.decided.is_prefix_of(&p.chain))
                .expect("some proposal is below the meet");
            return Some((i, j));
        }
    }
    None
}

/// A member of `correct` missing its output for some instance in `1..=instances`.
pub fn missing_output(outputs: &[OutputRecord], correct: ProcSet, instances: u64) -> Option<(ProcessorId, u64)> {
    let mut done: BTreeMap<ProcessorId, Vec<bool>> = correct
        .iter()
        .map(|p| (p, vec![false; instances as usize + 1]))
        .collect();
    for o in outputs {
        if let Some(v) = done.get_mut(&o.proc) {
            if let Some(slot) = v.get_mut(o.instance as usize) {
                *slot = true;
            }
        }
    }
    done.iter()
        .find_map(|(p, v)| (1..=instances).find(|&i| !v[i as usize]).map(|i| (*p, i)))
}

/// A window of instances in which a processor's longest decision did not grow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stall {
    pub proc: ProcessorId,
    pub first: u64,
    pub last: u64,
}

/// Checks growth over consecutive windows of `window` instances starting at
/// `start`, for every member of `correct`. Only windows a processor completed
/// are checked. Returns the stalls and the number of windows checked.
pub fn progress_stalls(decisions: &[Decision], correct: ProcSet, start: u64, window: u64, completed: &BTreeMap<ProcessorId, u64>) -> (Vec<Stall>, usize) {
    let mut stalls = vec![];
    let mut checked = 0;
    for p in correct.iter() {
        let last = completed.get(&p).copied().unwrap_or(0);
        let mut len_by_instance: BTreeMap<u64, usize> = BTreeMap::new();
        for d in decisions.iter().filter(|d| d.proc == p) {
            let e = len_by_instance.entry(d.instance).or_insert(0);
            *e = (*e).max(d.chain.len());
        }
        let longest_through = |i: u64| len_by_instance.range(..=i).map(|(_, l)| *l).max().unwrap_or(0);
        let mut first = start.max(1);
        while first + window - 1 <= last {
            let end = first + window - 1;
            checked += 1;
            if longest_through(end) <= longest_through(first - 1) {
                stalls.push(Stall { proc: p, first, last: end });
            }
            first += window;
        }
    }
    (stalls, checked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::testkit::chain;

    fn dec(p: u16, i: u64, c: &str) -> Decision {
        Decision {
            proc: ProcessorId(p),
            instance: i,
            chain: chain(c),
            seq: i * 10 + p as u64,
        }
    }

    fn prop(p: u16, i: u64, c: &str) -> Proposal {
        Proposal {
            proc: ProcessorId(p),
            instance: i,
            chain: chain(c),
            seq: i * 10 + p as u64,
        }
    }

    fn out(p: u16, i: u64, d: &str, u: &str) -> OutputRecord {
        OutputRecord {
            proc: ProcessorId(p),
            instance: i,
            decided: chain(d),
            upper: chain(u),
            seq: i * 10 + p as u64,
        }
    }

    /// Pairwise oracle for agreement.
    fn agree_all(ds: &[Decision]) -> bool {
        ds.iter().all(|a| ds.iter().all(|b| crate::chain::agrees(&a.chain, &b.chain)))
    }

    #[test]
    fn agreement_matches_pairwise_oracle() {
        let words = ["", "a", "ab", "abc", "ac", "b", "abd"];
        for mask in 0u32..(1 << words.len()) {
            let ds: Vec<_> = (0..words.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| dec(i as u16, 1, words[i]))
                .collect();
            let v = agreement_violation(&ds);
            assert_eq!(v.is_none(), agree_all(&ds), "{mask:b}");
            if let Some((i, j)) = v {
                assert!(!crate::chain::agrees(&ds[i].chain, &ds[j].chain));
            }
        }
    }

    #[test]
    fn divergent_decisions_fail_agreement() {
        assert!(agreement_violation(&[dec(0, 1, "ab"), dec(1, 1, "ac")]).is_some());
    }

    #[test]
    fn shrinking_decision_fails_monotonicity() {
        assert_eq!(monotonicity_violation(&[dec(0, 1, "ab"), dec(1, 1, "a"), dec(0, 2, "a")]), Some((0, 2)));
        assert_eq!(monotonicity_violation(&[dec(0, 1, "a"), dec(0, 2, "ab")]), None);
    }

    #[test]
    fn validity_needs_an_extending_proposal() {
        let ps = [prop(0, 1, "ab"), prop(1, 1, "ac")];
        assert_eq!(validity_violation(&[dec(0, 1, "a"), dec(1, 1, "ab")], &ps), None);
        assert_eq!(validity_violation(&[dec(0, 1, "abc")], &ps), Some(0));
    }

    #[test]
    fn relay_up_to_horizon() {
        let correct = ProcSet::all(2);
        let ds = [dec(0, 1, "ab"), dec(1, 1, "a")];
        assert_eq!(relay_violation(&ds, correct, 1), None);
        assert_eq!(relay_violation(&ds, correct, 2), Some((0, ProcessorId(1))));
        let ds = [dec(0, 1, "ab"), dec(1, 1, "a"), dec(1, 2, "abc")];
        assert_eq!(relay_violation(&ds, correct, 2), None);
    }

    #[test]
    fn later_inputs_extend_decisions() {
        let outs = [out(0, 1, "a", "ab")];
        assert_eq!(input_extension_violation(&outs, &[prop(0, 2, "ab"), prop(1, 2, "ac")]), None);
        assert_eq!(input_extension_violation(&outs, &[prop(0, 2, "ab"), prop(1, 3, "b")]), Some((0, 1)));
        // Same-instance proposals are not constrained.
        assert_eq!(input_extension_violation(&outs, &[prop(1, 1, "b")]), None);
    }

    #[test]
    fn missing_outputs_are_found() {
        let correct = ProcSet::all(2);
        let outs = [out(0, 1, "", ""), out(0, 2, "", ""), out(1, 1, "", "")];
        assert_eq!(missing_output(&outs, correct, 2), Some((ProcessorId(1), 2)));
        assert_eq!(missing_output(&outs, correct, 1), None);
    }

    #[test]
    fn stalls_by_window() {
        let correct = ProcSet::all(1);
        let ds: Vec<_> = [(1, "a"), (2, "a"), (3, "ab"), (4, "ab"), (5, "ab"), (6, "ab")]
            .iter()
            .map(|(i, c)| dec(0, *i, c))
            .collect();
        let completed = BTreeMap::from([(ProcessorId(0), 6)]);
        let (stalls, checked) = progress_stalls(&ds, correct, 1, 2, &completed);
        assert_eq!(checked, 3);
        assert_eq!(
            stalls,
            vec![Stall {
                proc: ProcessorId(0),
                first: 5,
                last: 6
            }]
        );
    }
}
