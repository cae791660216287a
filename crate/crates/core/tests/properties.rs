use extprob::coarsegrain::{
    class_sums, coarse_decoherence_functional, coarse_extended_probabilities_direct, coarsen_slot, slot_partition,
    CoarseGrained, Partition,
};
use extprob::histories::{
    dec_measure, decoherence_functional, extended_probabilities, total_negative_of, DecoherenceOptions,
    HistoryFamily,
};
use extprob::random::{self, ModelRng};
use extprob::records::{construct_records, verify_strong_records};
use extprob::{Error, HistorySet, StateVector};
use proptest::prelude::*;
use rand::Rng;

fn model(rng: &mut ModelRng, max_dim: usize, max_slots: usize) -> (StateVector, HistorySet) {
    let dim = rng.random_range(2..=max_dim);
    let slots = rng.random_range(1..=max_slots);
    let psi = random::random_state(rng, dim);
    (psi, random::random_history_set(rng, dim, slots).unwrap())
}

fn opts() -> DecoherenceOptions {
    DecoherenceOptions::with_tolerance(1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_sum_to_one(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let (psi, hs) = model(&mut rng, 6, 3);
        let p = extended_probabilities(&hs, &psi).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn functional_is_hermitian_with_unit_trace(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let (psi, hs) = model(&mut rng, 5, 3);
        let rep = decoherence_functional(&hs, &psi, &opts()).unwrap();
        let d = &rep.functional;
        prop_assert!((d - d.adjoint()).iter().all(|z| z.norm() <= 1e-14));
        let total: f64 = d.iter().map(|z| z.re).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for (a, p) in rep.ep_probs.iter().enumerate() {
            // p(α) = Σ_β Re D(β, α)
            let col: f64 = (0..d.nrows()).map(|b| d[(b, a)].re).sum();
            prop_assert!((col - p).abs() <= 1e-12);
        }
    }

    #[test]
    fn coarse_sums_match_direct_evaluation(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let (psi, hs) = model(&mut rng, 6, 3);
        let part = random::random_partition(&mut rng, hs.len());
        let fine = extended_probabilities(&hs, &psi).unwrap();
        let summed = class_sums(&fine, &part).unwrap();
        let direct = coarse_extended_probabilities_direct(&hs, &part, &psi).unwrap();
        for (a, b) in summed.iter().zip(&direct) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((summed.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn dec_never_increases_along_a_refinement_chain(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let (psi, hs) = model(&mut rng, 4, 3);
        let rep = decoherence_functional(&hs, &psi, &opts()).unwrap();
        let mut part = Partition::singletons(hs.len());
        let mut last = dec_measure(&rep.functional);
        while part.len() > 1 {
            let i = rng.random_range(0..part.len());
            let mut j = rng.random_range(0..part.len() - 1);
            if j >= i {
                j += 1;
            }
            let next = part.merge(i, j).unwrap();
            prop_assert!(part.refines(&next));
            let dec = dec_measure(&coarse_decoherence_functional(&rep.functional, &next).unwrap());
            prop_assert!(dec <= last + 1e-12);
            last = dec;
            part = next;
        }
        prop_assert!(last <= 1e-12);
    }

    #[test]
    fn coarse_graining_never_grows_total_negative(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let (psi, hs) = model(&mut rng, 5, 3);
        let fine = extended_probabilities(&hs, &psi).unwrap();
        let part = random::random_partition(&mut rng, hs.len());
        let coarse = class_sums(&fine, &part).unwrap();
        prop_assert!(total_negative_of(&coarse).abs() <= total_negative_of(&fine).abs() + 1e-12);
    }

    #[test]
    fn slot_coarsening_matches_flat_partition(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let (psi, hs) = model(&mut rng, 4, 3);
        let slot = rng.random_range(0..hs.slots().len());
        let k = hs.slots()[slot].len();
        let groups = random::random_partition(&mut rng, k);
        let chain = coarsen_slot(&hs, slot, &groups).unwrap();
        let flat = slot_partition(&hs, slot, &groups).unwrap();
        let via_chain = extended_probabilities(&chain, &psi).unwrap();
        let via_sum = class_sums(&extended_probabilities(&hs, &psi).unwrap(), &flat).unwrap();
        for (a, b) in via_chain.iter().zip(&via_sum) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn decoherent_fixtures_have_records(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let dim = rng.random_range(2..=5);
        let psi = random::random_state(&mut rng, dim);
        let slots = rng.random_range(1..=3);
        let hs = random::decoherent_history_set(&mut rng, &psi, slots).unwrap();
        let rs = construct_records(&hs, &psi, &DecoherenceOptions::default()).unwrap();
        let check = verify_strong_records(&hs, &psi, &rs, 1e-9).unwrap();
        prop_assert!(check.pass, "defect {}", check.max_defect);
        let part = random::random_partition(&mut rng, hs.len());
        let cg = CoarseGrained::new(&hs, part).unwrap();
        let rep = decoherence_functional(&cg, &psi, &opts()).unwrap();
        prop_assert!(rep.dec <= 1e-12);
        prop_assert!(rep.linearly_positive);
    }
}

#[test]
fn interfering_fixtures_are_rejected() {
    let mut rng = random::rng(99);
    let mut rejected = 0;
    while rejected < 25 {
        let (psi, hs) = model(&mut rng, 4, 3);
        let rep = decoherence_functional(&hs, &psi, &opts()).unwrap();
        if rep.max_off_diagonal < 1e-3 {
            continue;
        }
        match construct_records(&hs, &psi, &DecoherenceOptions::default()) {
            Err(Error::NotDecoherent { max, .. }) => assert!(max >= 1e-3),
            other => panic!("expected NotDecoherent, got {other:?}"),
        }
        rejected += 1;
    }
}

#[test]
fn coarse_family_labels_join_members() {
    let mut rng = random::rng(5);
    let (_, hs) = model(&mut rng, 3, 1);
    let part = Partition::total(hs.len());
    let cg = CoarseGrained::new(&hs, part).unwrap();
    let label = cg.history_label(0);
    assert_eq!(label.split('|').count(), hs.len());
}

#[test]
fn multi_time_histories_go_negative_for_some_state() {
    let mut rng = random::rng(17);
    for _ in 0..20 {
        let dim = rng.random_range(2..=4);
        let slots = (1..=2)
            .map(|t| {
                let basis = random::random_unitary(&mut rng, dim);
                let groups: Vec<Vec<usize>> = (0..dim).map(|i| vec![i]).collect();
                random::grouped_projector_set(&basis, &groups, t as f64)
            })
            .collect::<extprob::Result<Vec<_>>>()
            .unwrap();
        let hs = HistorySet::new(slots).unwrap();
        let mut min = vec![f64::INFINITY; hs.len()];
        for _ in 0..1000 {
            let psi = random::random_state(&mut rng, dim);
            for (m, p) in min.iter_mut().zip(extended_probabilities(&hs, &psi).unwrap()) {
                *m = m.min(p);
            }
        }
        assert!(min.iter().all(|&m| m < 0.0), "{min:?}");
    }
}
