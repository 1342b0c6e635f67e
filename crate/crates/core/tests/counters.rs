use std::collections::{BTreeMap, BTreeSet};

use pdevs_core::devstone::{expected_counts, generate, structural_counts, DevstoneConfig, Shape};
use pdevs_core::{flatten, CouplingKind, CounterTriple, ModelGraph, ModelRegistry, SequentialCoordinator, SimOptions};

/// Replays a zero-delay DEVStone run by hand on the flat couplings.
///
/// Every benchmark atomic fires one instant after it receives, re-emitting
/// everything it holds; the trigger fires once at the start. Since no
/// delay advances virtual time, the run is a sequence of waves.
fn wave_oracle(graph: &ModelGraph) -> CounterTriple {
    let flat = flatten(graph).unwrap();
    let kind: BTreeMap<&str, &str> = flat.atomics().map(|a| (a.name.as_str(), a.model.as_str())).collect();
    let mut held: BTreeMap<&str, u64> = kind.keys().map(|k| (*k, 0)).collect();
    let mut pending: BTreeSet<&str> = kind.iter().filter(|(_, m)| **m == "seed").map(|(n, _)| *n).collect();
    let mut c = CounterTriple::default();
    while !pending.is_empty() {
        let mut inbox: BTreeMap<&str, u64> = BTreeMap::new();
        for cp in flat.couplings().iter().filter(|cp| cp.kind == CouplingKind::Ic) {
            let src = cp.from.component.as_str();
            if pending.contains(src) {
                let emitted = if kind[src] == "seed" { 1 } else { held[src] };
                *inbox.entry(cp.to.component.as_str()).or_default() += emitted;
            }
        }
        for n in &pending {
            if kind[n] == "devstone" {
                c.num_delt_ints += 1;
            }
            held.insert(n, 0);
        }
        pending.clear();
        for (n, values) in inbox.into_iter().filter(|(_, v)| *v > 0) {
            c.num_delt_exts += 1;
            c.num_events += values;
            *held.get_mut(n).unwrap() += values;
            pending.insert(n);
        }
    }
    c
}

fn simulate(graph: &ModelGraph) -> CounterTriple {
    let reg = ModelRegistry::standard();
    SequentialCoordinator::new(graph, &reg, SimOptions::default())
        .unwrap()
        .simulate(u64::MAX)
        .unwrap()
        .counters
}

#[test]
fn ho_matches_closed_forms_over_the_grid() {
    for w in 2..=10u64 {
        for d in 1..=10u64 {
            let model = generate(&DevstoneConfig::ho(w as usize, d as usize)).unwrap();
            let e = expected_counts(w, d);
            let got = simulate(&model.graph);
            assert_eq!(
                (got.num_delt_ints, got.num_delt_exts, got.num_events),
                (e.delt_ints, e.delt_exts, e.events),
                "HO({w},{d})"
            );
            let s = structural_counts(model.benchmark());
            assert_eq!((s.atomics, s.eic, s.ic, s.eoc), (e.atomics, e.eic, e.ic, e.eoc), "HO({w},{d})");
        }
    }
}

#[test]
fn every_shape_matches_the_wave_replay() {
    for shape in [Shape::Li, Shape::Hi, Shape::Ho] {
        for w in 2..=6 {
            for d in 1..=6 {
                let model = generate(&DevstoneConfig::new(shape, w, d)).unwrap();
                assert_eq!(simulate(&model.graph), wave_oracle(&model.graph), "{shape}({w},{d})");
            }
        }
    }
}

#[test]
fn li_and_hi_have_the_textbook_totals() {
    // LI: every atomic fires once. HI adds the chain, so every atomic
    // fires at least once and each reception is answered by one output.
    for w in 2..=8u64 {
        for d in 1..=8u64 {
            let atomics = 1 + (d - 1) * (w - 1);
            let li = simulate(&generate(&DevstoneConfig::new(Shape::Li, w as usize, d as usize)).unwrap().graph);
            assert_eq!((li.num_delt_ints, li.num_delt_exts, li.num_events), (atomics, atomics, atomics));
            let hi = simulate(&generate(&DevstoneConfig::new(Shape::Hi, w as usize, d as usize)).unwrap().graph);
            assert_eq!(hi.num_delt_ints, hi.num_delt_exts);
            assert!(hi.num_delt_exts >= atomics);
            assert!(hi.num_events >= li.num_events);
        }
    }
}

#[test]
fn atomic_count_table() {
    let counts: Vec<u64> = (10..=15)
        .map(|w| structural_counts(generate(&DevstoneConfig::ho(w, w)).unwrap().benchmark()).atomics)
        .collect();
    assert_eq!(counts, [82, 101, 122, 145, 170, 197]);
}
