use std::collections::BTreeSet;

use gwve_core::oracle::enumerate_trees;
use gwve_core::{Environment, Error, Genealogy, Label, OffspringLaw, SpineTip, SpinedTree};
use proptest::prelude::*;

fn lab(parts: &[u32]) -> Label {
    Label::new(parts.to_vec()).unwrap()
}

fn full_binary(h: usize) -> Genealogy {
    let counts: Vec<Vec<u32>> = (0..h).map(|m| vec![2; 1 << m]).collect();
    Genealogy::from_offspring(&counts).unwrap()
}

/// Every tree of height ≤ 2 with at most two children per node.
fn small_trees() -> Vec<Genealogy> {
    let env = Environment::constant(OffspringLaw::explicit(vec![0.25, 0.5, 0.25]).unwrap());
    let mut out = vec![Genealogy::root_only()];
    for h in 1..=2 {
        out.extend(enumerate_trees::<f64>(&env, h).unwrap().into_iter().map(|o| o.tree));
    }
    out
}

/// Reference t ⊔_u s on label sets: u·(l_u(t) + w_1)·w_2… for every w ∈ s \ {∅}.
fn concat_by_labels(t: &Genealogy, u: &Label, s: &Genealogy) -> Genealogy {
    let Some(idx) = t.locate(u) else {
        return t.clone();
    };
    let l_u = t.offspring(u.len(), idx) as u32;
    let mut labels: BTreeSet<Label> = t.labels().into_iter().collect();
    for w in s.labels().into_iter().filter(|w| !w.is_root()) {
        let mut parts = u.parts().to_vec();
        parts.push(l_u + w.parts()[0]);
        parts.extend_from_slice(&w.parts()[1..]);
        labels.insert(Label::new(parts).unwrap());
    }
    let labels: Vec<Label> = labels.into_iter().collect();
    Genealogy::from_labels(&labels, t.height().max(u.len() + s.height())).unwrap()
}

/// Drops trailing empty generations.
fn trim(t: &Genealogy) -> Genealogy {
    let mut h = t.height();
    while h > 0 && t.population(h) == 0 {
        h -= 1;
    }
    t.restrict(h).unwrap()
}

#[test]
fn restrict_goldens() {
    let t = full_binary(2);
    assert_eq!(t.restrict(2).unwrap(), t);
    assert_eq!(t.restrict(0).unwrap(), Genealogy::root_only());
    let r1 = t.restrict(1).unwrap();
    assert_eq!(r1.population(1), 2);
    assert_eq!(r1.height(), 1);
    assert!(matches!(t.restrict(3), Err(Error::Domain(_))));
}

#[test]
fn subtree_goldens() {
    let t = full_binary(2);
    assert_eq!(t.subtree(&Label::root()), Some(t.clone()));
    assert_eq!(t.subtree(&lab(&[3])), None);
    let s = t.subtree(&lab(&[1])).unwrap();
    assert_eq!(s.height(), 1);
    assert_eq!(s.population(1), 2);
}

#[test]
fn concat_goldens() {
    let t = full_binary(1);
    let s = full_binary(2);
    assert_eq!(t.concat(&lab(&[5]), &s), t);
    // Root-only t: the children of s become the children of ∅.
    assert_eq!(Genealogy::root_only().concat(&Label::root(), &s), s);
    // Leaf case: generation-2 census gains X_1(s).
    let c = t.concat(&lab(&[2]), &s);
    assert_eq!(c.census(1).unwrap(), 2);
    assert_eq!(c.census(2).unwrap(), 2);
    assert_eq!(c.census(3).unwrap(), 4);
    assert!(c.contains(&lab(&[2, 2, 1])));
    assert!(!c.contains(&lab(&[1, 1])));
}

#[test]
fn census_goldens() {
    let t = full_binary(2);
    assert_eq!(t.census(0).unwrap(), 1);
    assert_eq!(t.census(2).unwrap(), 4);
    assert!(t.census(3).is_err());
}

#[test]
fn exhaustive_concat_against_label_sets() {
    let trees = small_trees();
    for t in &trees {
        for u in t.labels().into_iter().chain([lab(&[3]), lab(&[1, 1, 1])]) {
            for s in &trees {
                let c = t.concat(&u, s);
                assert_eq!(c, concat_by_labels(t, &u, s), "t={t:?} u={u} s={s:?}");
                if u.len() <= t.height() && t.contains(&u) {
                    assert_eq!(c.restrict(u.len()).unwrap(), t.restrict(u.len()).unwrap());
                    // The attached block: children l_u(t)+1, … of u carry the subtrees of s.
                    let l_u = t.offspring(u.len(), t.locate(&u).unwrap()) as u32;
                    for w1 in 1..=s.population(1) as u32 {
                        let got = c.subtree(&u.child(l_u + w1)).unwrap();
                        let want = s.subtree(&lab(&[w1])).unwrap();
                        assert_eq!(trim(&got), trim(&want));
                    }
                    if l_u == 0 {
                        assert_eq!(trim(&c.subtree(&u).unwrap()), trim(s));
                    }
                }
            }
        }
    }
}

#[test]
fn labels_round_trip_and_axioms() {
    for t in small_trees() {
        let labels = t.labels();
        assert_eq!(Genealogy::from_labels(&labels, t.height()).unwrap(), t);
        for l in &labels {
            if let Some(p) = l.parent() {
                assert!(t.contains(&p));
                assert!(p.is_ancestor_of(l));
            }
        }
    }
    let bad = vec![Label::root(), lab(&[2])];
    assert!(Genealogy::from_labels(&bad, 1).is_err());
}

#[test]
fn serialization_round_trip() {
    for t in small_trees() {
        assert_eq!(Genealogy::parse(&t.serialize()).unwrap(), t);
    }
    assert_eq!(full_binary(2).serialize(), "gwve-tree 2\n0 0\n0 0 1 1\n");
    assert!(Genealogy::parse("gwve-tree 1\n1\n").is_err());
    assert!(Genealogy::parse("tree 1\n0\n").is_err());
}

#[test]
fn parents_must_be_block_ordered() {
    assert!(Genealogy::from_parents(vec![vec![0, 0], vec![1, 0]]).is_err());
    assert!(Genealogy::from_parents(vec![vec![0], vec![1]]).is_err());
}

#[test]
fn mark_goldens() {
    let t = full_binary(2);
    let spined = SpinedTree::from_leaves(t.clone(), &[0, 2]).unwrap();
    assert_eq!(spined.marks(&Label::root()).unwrap(), 2);
    assert_eq!(spined.marks(&lab(&[1])).unwrap(), 1);
    assert_eq!(spined.marks(&lab(&[2])).unwrap(), 1);
    assert_eq!(spined.marks(&lab(&[1, 2])).unwrap(), 0);
    assert!(spined.marks(&lab(&[3])).is_err());
    assert!(spined.is_hat());
    assert!(!SpinedTree::from_leaves(t.clone(), &[1, 1]).unwrap().is_hat());
    assert!(SpinedTree::from_leaves(t, &[4]).is_err());
}

#[test]
fn spined_subtree_and_restrict() {
    let spined = SpinedTree::from_leaves(full_binary(2), &[3, 0, 1]).unwrap();
    let sub = spined.subtree(&lab(&[1])).unwrap();
    assert_eq!(sub.tips(), &[SpineTip::Alive(0), SpineTip::Alive(1)]);
    let r = spined.restrict(1).unwrap();
    assert_eq!(r.tips(), &[SpineTip::Alive(1), SpineTip::Alive(0), SpineTip::Alive(0)]);
    assert_eq!(spined.subtree(&lab(&[7])), None);
}

#[test]
fn spined_concat_at_leaf_transfers_marks() {
    // t: root with two leaves; spines on leaf 2 (twice) and leaf 1.
    let t = SpinedTree::from_leaves(full_binary(1), &[1, 0, 1]).unwrap();
    let s = SpinedTree::from_leaves(full_binary(1), &[1, 0]).unwrap();
    let c = t.concat(&lab(&[2]), &s).unwrap();
    assert_eq!(c.tree().height(), 2);
    let h = c.tree().height();
    let labels: Vec<Label> = c
        .tips()
        .iter()
        .map(|tip| c.tree().label(tip.generation(h), tip.index()))
        .collect();
    assert_eq!(labels, vec![lab(&[2, 2]), lab(&[1]), lab(&[2, 1])]);
    // The unmarked-at-height spine is now absorbed below the new height.
    assert!(matches!(c.tips()[1], SpineTip::Graveyard { generation: 1, index: 0 }));
    assert_eq!(c.marks(&lab(&[2])).unwrap(), 2);
}

#[test]
fn spined_concat_errors() {
    let t = SpinedTree::from_leaves(full_binary(2), &[0]).unwrap();
    let s = SpinedTree::from_leaves(full_binary(1), &[0]).unwrap();
    assert!(matches!(t.concat(&lab(&[1]), &s), Err(Error::InvalidConcatenation(_))));
    let two = SpinedTree::from_leaves(full_binary(1), &[0, 1]).unwrap();
    assert!(matches!(t.concat(&lab(&[1, 1]), &two), Err(Error::InvalidConcatenation(_))));
    assert_eq!(t.concat(&lab(&[9]), &s).unwrap(), t);
}

#[test]
fn spined_serialization_round_trip() {
    let tree = Genealogy::from_offspring(&[vec![2], vec![0, 2]]).unwrap();
    let spined = SpinedTree::new(tree, vec![SpineTip::Alive(1), SpineTip::Graveyard { generation: 1, index: 0 }]).unwrap();
    let text = spined.serialize();
    assert!(text.ends_with("spines 1 1:0\n"));
    assert_eq!(SpinedTree::parse(&text).unwrap(), spined);
    assert!(!spined.is_hat());
}

fn arb_tree() -> impl Strategy<Value = Genealogy> {
    (1usize..5, prop::collection::vec(0u32..3, 1..200)).prop_map(|(h, draws)| {
        let mut it = draws.into_iter().cycle();
        let mut counts = Vec::new();
        let mut pop = 1usize;
        for _ in 0..h {
            let gen: Vec<u32> = (0..pop).map(|_| it.next().unwrap()).collect();
            pop = gen.iter().map(|&c| c as usize).sum::<usize>().min(60);
            // Keep populations bounded by truncating the last parents' broods.
            let mut left = pop;
            let gen: Vec<u32> = gen
                .into_iter()
                .map(|c| {
                    let c = (c as usize).min(left);
                    left -= c;
                    c as u32
                })
                .collect();
            counts.push(gen);
        }
        Genealogy::from_offspring(&counts).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn marks_are_conserved(t in arb_tree(), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..5)) {
        let n = t.height();
        let z = t.population(n);
        prop_assume!(z >= picks.len());
        let mut leaves: Vec<usize> = Vec::new();
        for p in &picks {
            let mut i = p.index(z);
            while leaves.contains(&i) {
                i = (i + 1) % z;
            }
            leaves.push(i);
        }
        let spined = SpinedTree::from_leaves(t.clone(), &leaves).unwrap();
        prop_assert!(spined.is_hat());
        for m in 0..=n {
            let counts = spined.mark_counts(m);
            prop_assert_eq!(counts.iter().sum::<u32>() as usize, leaves.len());
            // The marked ancestors at m+1 refine the partition at m.
            if m < n {
                let next = spined.mark_counts(m + 1);
                for (i, &c) in counts.iter().enumerate() {
                    let below: u32 = t.children(m, i).map(|j| next[j]).sum();
                    prop_assert_eq!(below, c);
                }
            }
        }
        prop_assert_eq!(SpinedTree::parse(&spined.serialize()).unwrap(), spined);
    }

    #[test]
    fn restrict_of_concat(t in arb_tree(), s in arb_tree(), pick in any::<prop::sample::Index>()) {
        let labels = t.labels();
        let u = labels[pick.index(labels.len())].clone();
        let c = t.concat(&u, &s);
        prop_assert_eq!(c.restrict(u.len()).unwrap(), t.restrict(u.len()).unwrap());
        prop_assert_eq!(&c, &concat_by_labels(&t, &u, &s));
        prop_assert_eq!(c.total_size(), t.total_size() + s.total_size() - 1);
    }
}
