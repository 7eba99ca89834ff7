mod common;

use common::*;
use der_core::experience::{apply_decay_epochs, update_experience};
use der_core::ledger::Replayer;
use der_core::simulator::{self, Scenario};
use der_core::trust::trust;
use der_core::{
    build_transition_matrices, rank, replay, replay_until, solve, ExperienceParams,
    ExperienceState, FeedbackEvent, FeedbackScore, Ledger, ReputationParams, ReputationScores,
    ReputationVector, TrustQuery, TrustWeights,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn state(current: f64, previous: f64) -> ExperienceState {
    ExperienceState {
        current,
        previous,
        last_update_block: 0,
    }
}

fn score(v: f64) -> FeedbackScore {
    FeedbackScore::new(v).unwrap()
}

prop_compose! {
    fn params()(
        exp0 in 0.05..0.95f64,
        min_frac in 0.0..1.0f64,
        theta_unco in 0.05..0.6f64,
        gap in 0.01..0.35f64,
        alpha in 0.001..0.5f64,
        beta in 1.01..4.0f64,
        delta in 0.0001..0.05f64,
        gamma in 0.0001..0.05f64,
    ) -> ExperienceParams {
        ExperienceParams {
            exp0,
            min_exp: exp0 * min_frac * 0.9,
            max_exp: 1.0,
            theta_co: (theta_unco + gap).min(0.99),
            theta_unco,
            alpha,
            beta,
            delta,
            gamma,
        }
    }
}

fn any_score() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64]
}

proptest! {
    #[test]
    fn experience_stays_bounded(p in params(), scores in prop::collection::vec(any_score(), 1..300)) {
        let mut s = ExperienceState::bootstrap(&p, 0);
        for v in scores {
            s = update_experience(s, score(v), &p).unwrap();
            prop_assert!(s.current >= p.min_exp && s.current <= p.max_exp, "{s:?}");
        }
    }

    #[test]
    fn feedback_moves_in_its_direction(p in params(), c in 0.0..=1.0f64, prev in 0.0..=1.0f64, v in any_score()) {
        let c = c.max(p.min_exp);
        let next = update_experience(state(c, prev), score(v), &p).unwrap();
        if v >= p.theta_co {
            prop_assert!(next.current >= c);
        } else {
            prop_assert!(next.current <= c);
        }
        prop_assert_eq!(next.previous, c);
    }

    /// A cooperative score `s` and an uncooperative score `1 - s` move
    /// experience by amounts in ratio beta.
    #[test]
    fn losses_outpace_gains(p in params(), c in 0.0..0.99f64, s in 0.0..=1.0f64) {
        prop_assume!(s >= p.theta_co && 1.0 - s > 0.0 && 1.0 - s <= p.theta_unco);
        let c = c.max(p.min_exp);
        let up = update_experience(state(c, c), score(s), &p).unwrap().current - c;
        let down = c - update_experience(state(c, c), score(1.0 - s), &p).unwrap().current;
        prop_assert!(up > 0.0);
        if c - p.beta * up > p.min_exp + 1e-9 {
            prop_assert!((down - p.beta * up).abs() <= 1e-12, "up {up} down {down}");
            prop_assert!(down > up);
        } else {
            prop_assert!(down <= p.beta * up + 1e-12);
        }
    }

    #[test]
    fn decay_is_strictly_positive_above_floor(p in params(), c in 0.0..=1.0f64, prev in 0.0..=1.0f64) {
        let c = c.max(p.min_exp);
        let next = apply_decay_epochs(state(c, prev), 1, &p).unwrap().current;
        if c - p.delta * p.gamma > p.min_exp {
            prop_assert!(c - next >= p.delta * p.gamma * (1.0 - 1e-9));
        } else {
            prop_assert!(next <= c && next >= p.min_exp);
        }
    }

    /// Weak relationships fade faster than strong ones.
    #[test]
    fn weaker_history_decays_faster(p in params(), c in 0.0..=1.0f64, lo in 0.0..=1.0f64, hi in 0.0..=1.0f64) {
        prop_assume!(hi - lo > 1e-6);
        let c = c.max(p.min_exp);
        let after = |prev| apply_decay_epochs(state(c, prev), 1, &p).unwrap().current;
        let (weak, strong) = (after(lo), after(hi));
        if weak > p.min_exp {
            prop_assert!(c - weak > c - strong);
        } else {
            prop_assert!(weak <= strong);
        }
    }

    #[test]
    fn decay_epochs_compose(p in params(), c in 0.0..=1.0f64, a in 0u64..40, b in 0u64..40) {
        let s = state(c.max(p.min_exp), c.max(p.min_exp));
        let once = apply_decay_epochs(s, a + b, &p).unwrap();
        let twice = apply_decay_epochs(apply_decay_epochs(s, a, &p).unwrap(), b, &p).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn split_partitions_edges(seed in any::<u64>(), n in 2usize..12, theta in 0.05..0.95f64) {
        let edges = random_edges(&mut rng(seed), n, 0.4);
        let g = graph_with_theta(n, &edges, theta);
        let split = g.split();
        for &(f, t, e) in &edges {
            let pe = split.pe.get(f, t);
            let ne = split.ne.get(f, t);
            if e >= theta {
                prop_assert_eq!(pe, e);
                prop_assert_eq!(ne, 0.0);
            } else {
                prop_assert_eq!(pe, 0.0);
                prop_assert!((1.0 - ne - e).abs() <= 1e-15);
            }
        }
        prop_assert_eq!(split.pe.nnz() + split.ne.nnz(), edges.len());
    }

    #[test]
    fn transition_columns_are_stochastic(seed in any::<u64>(), n in 1usize..20) {
        let edges = random_edges(&mut rng(seed), n, 0.3);
        let g = graph_from_edges(n, &edges);
        let split = g.split();
        let t = build_transition_matrices(&split);
        for (a, c) in [(&t.a_pos, &split.c_pos), (&t.a_neg, &split.c_neg)] {
            let mut sums = vec![0.0; n];
            for (_, j, v) in a.iter() {
                prop_assert!(v >= 0.0);
                sums[j] += v;
            }
            for j in 0..n {
                if c[j] > 0.0 {
                    prop_assert!((sums[j] - 1.0).abs() <= 1e-12);
                } else {
                    prop_assert_eq!(sums[j], 0.0);
                }
            }
        }
    }

    #[test]
    fn overall_reputation_clips_at_zero(seed in any::<u64>(), n in 1usize..15) {
        let g = graph_from_edges(n, &random_edges(&mut rng(seed), n, 0.3));
        let t = build_transition_matrices(&g.split());
        let v = solve(&t.a_pos, &t.a_neg, &ReputationParams::default(), None).unwrap();
        for i in 0..n {
            prop_assert_eq!(v.rep[i], (v.rep_pos[i] - v.rep_neg[i]).max(0.0));
        }
    }

    #[test]
    fn fixed_point_independent_of_start(seed in any::<u64>(), n in 2usize..15) {
        let mut r = rng(seed);
        let g = graph_from_edges(n, &random_edges(&mut r, n, 0.3));
        let t = build_transition_matrices(&g.split());
        let params = ReputationParams { tol: 1e-12, ..Default::default() };
        let a = solve(&t.a_pos, &t.a_neg, &params, None).unwrap();
        let init = ReputationVector::from_parts(
            (0..n).map(|_| r.random::<f64>()).collect(),
            (0..n).map(|_| r.random::<f64>() * 5.0).collect(),
        );
        let b = solve(&t.a_pos, &t.a_neg, &params, Some(&init)).unwrap();
        for i in 0..n {
            prop_assert!((a.rep_pos[i] - b.rep_pos[i]).abs() < 1e-10);
            prop_assert!((a.rep_neg[i] - b.rep_neg[i]).abs() < 1e-10);
        }
    }

    /// Renaming users permutes reputation and nothing else.
    #[test]
    fn reputation_follows_relabeling(seed in any::<u64>(), n in 2usize..12) {
        let mut r = rng(seed);
        let edges = random_edges(&mut r, n, 0.35);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let moved: Vec<_> = edges.iter().map(|&(f, t, e)| (perm[f], perm[t], e)).collect();
        let params = ReputationParams { tol: 1e-13, ..Default::default() };
        let solve_edges = |edges: &[(usize, usize, f64)]| {
            let t = build_transition_matrices(&graph_from_edges(n, edges).split());
            solve(&t.a_pos, &t.a_neg, &params, None).unwrap()
        };
        let a = solve_edges(&edges);
        let b = solve_edges(&moved);
        for (i, &j) in perm.iter().enumerate() {
            prop_assert!((a.rep[i] - b.rep[j]).abs() < 1e-11);
        }
    }

    #[test]
    fn degenerate_weights_isolate_one_term(
        seed in any::<u64>(), n in 3usize..10, shift in 0.01..0.5f64,
    ) {
        let mut r = rng(seed);
        let edges = random_edges(&mut r, n, 0.5);
        let g = graph_from_edges(n, &edges);
        let raw: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let scores = ReputationScores::identity(raw.clone()).unwrap();
        let other = ReputationScores::identity(raw.iter().map(|v| (v + shift) % 1.0).collect()).unwrap();
        let bumped = graph_from_edges(
            n,
            &edges.iter().map(|&(f, t, e)| (f, t, ((e + shift) % 1.0).max(1e-3))).collect::<Vec<_>>(),
        );
        for a in 0..n {
            for b in 0..n {
                let (na, nb) = (format!("v{a}"), format!("v{b}"));
                let q = |w1, w2| TrustQuery {
                    trustor: &na,
                    trustee: &nb,
                    weights: TrustWeights::new(w1, w2).unwrap(),
                };
                let rep_only = q(1.0, 0.0);
                prop_assert_eq!(
                    trust(&g, &scores, &rep_only).unwrap().value,
                    trust(&bumped, &scores, &rep_only).unwrap().value
                );
                let exp_only = q(0.0, 1.0);
                if g.edge(a, b).is_some() {
                    prop_assert_eq!(
                        trust(&g, &scores, &exp_only).unwrap().value,
                        trust(&g, &other, &exp_only).unwrap().value
                    );
                }
            }
        }
    }
}

fn random_ledger(seed: u64, users: usize, events: usize, decay_epoch: u64) -> Ledger {
    let mut r = rng(seed);
    let mut ledger = Ledger::new(decay_epoch).unwrap();
    let mut block = 0u64;
    for k in 0..events {
        block += r.random_range(0..=decay_epoch * 2);
        let from = r.random_range(0..users);
        let to = (from + r.random_range(1..users)) % users;
        let score = match r.random_range(0..4) {
            0 => 1.0,
            1 => r.random_range(0.01..=0.5),
            _ => r.random_range(0.01..=1.0),
        };
        ledger
            .append(FeedbackEvent {
                block,
                from: format!("p{from}"),
                to: format!("p{to}"),
                score,
                tx_id: format!("tx{k}"),
            })
            .unwrap();
    }
    ledger
}

#[test]
fn replay_matches_oracle() {
    let p = ExperienceParams::default();
    for seed in 0..50 {
        let ledger = random_ledger(seed, 6, 80, 10);
        let end = ledger.last_block().unwrap() + 35;
        let g = replay_until(&ledger, &p, 0.5, end).unwrap();
        let expect = oracle_replay(ledger.events(), &p, 10, end);
        assert_eq!(g.edge_count(), expect.len());
        for ((from, to), (cur, prev)) in expect {
            let s = g
                .edge(g.lookup(&from).unwrap(), g.lookup(&to).unwrap())
                .unwrap();
            assert!((s.current - cur).abs() < 1e-12, "seed {seed} {from}->{to}");
            assert!(
                (s.previous - prev).abs() < 1e-12,
                "seed {seed} {from}->{to}"
            );
        }
    }
}

#[test]
fn replay_is_deterministic() {
    let p = ExperienceParams::default();
    let ledger = random_ledger(7, 10, 300, 25);
    let text = ledger.to_canonical_string();
    let again = Ledger::read_from(text.as_bytes(), 1).unwrap();
    assert_eq!(again.to_canonical_string(), text);
    let a = replay(&ledger, &p, 0.5).unwrap().snapshot_string();
    let b = replay(&again, &p, 0.5).unwrap().snapshot_string();
    assert_eq!(a, b);
}

#[test]
fn prefix_then_remainder_equals_full_replay() {
    let p = ExperienceParams::default();
    for seed in 0..30 {
        let ledger = random_ledger(seed, 5, 60, 10);
        let full = replay(&ledger, &p, 0.5).unwrap();
        for k in [0, 1, 17, 59, 60] {
            let events = ledger.events();
            let mut r = Replayer::new(p, 0.5, 10).unwrap();
            for e in &events[..k] {
                r.apply(e).unwrap();
            }
            if let Some(last) = r.last_block() {
                r.advance_to(last);
            }
            for e in &events[k..] {
                r.apply(e).unwrap();
            }
            r.advance_to(ledger.last_block().unwrap());
            assert_eq!(r.graph(), &full, "seed {seed} split at {k}");
        }
    }
}

#[test]
fn idle_edge_matches_batched_decay() {
    let p = ExperienceParams::default();
    let d = 100;
    for n in [1u64, 2, 7, 40, 300] {
        let mut ledger = Ledger::new(d).unwrap();
        for (k, (b, s)) in [(0, 0.9), (3, 0.95)].into_iter().enumerate() {
            ledger
                .append(FeedbackEvent {
                    block: b,
                    from: "a".into(),
                    to: "b".into(),
                    score: s,
                    tx_id: format!("t{k}"),
                })
                .unwrap();
        }
        let g = replay_until(&ledger, &p, 0.5, 3 + n * d).unwrap();
        let after = g.edge(0, 1).copied().unwrap();

        let mut s = ExperienceState::bootstrap(&p, 0);
        s = update_experience(s, score(0.9), &p).unwrap();
        s = update_experience(s, score(0.95), &p).unwrap();
        let batched = apply_decay_epochs(s, n, &p).unwrap();
        assert_eq!(after.current, batched.current);
        assert_eq!(after.previous, batched.previous);
    }
}

#[test]
fn simulated_metrics_recompute_from_ledger() {
    let scenario = Scenario::from_json(
        r#"{"name":"consistency","seed":11,"n_users":60,"n_blocks":520,
            "tracked_users":["u00000","u00001","u00002"],
            "classes":{"honest":0.6,"low_quality":0.2,"whitewasher":0.2}}"#,
    )
    .unwrap();
    let (ledger, report) = simulator::run(&scenario).unwrap();
    let text = ledger.to_canonical_string();
    let ledger = Ledger::read_from(text.as_bytes(), 1).unwrap();
    let p = &scenario.params;
    assert!(!report.epochs.is_empty());
    for e in &report.epochs {
        let g = replay_until(&ledger, &p.experience, p.theta, e.block).unwrap();
        let t = build_transition_matrices(&g.split());
        let v = solve(&t.a_pos, &t.a_neg, &p.reputation, None).unwrap();
        assert_eq!(v.iterations, e.iterations);
        let order = rank(&v);
        for snap in report.snapshots.iter().filter(|s| s.epoch == e.epoch) {
            let i = g.lookup(&snap.user).unwrap();
            assert_eq!(v.rep_pos[i], snap.rep_pos);
            assert_eq!(v.rep_neg[i], snap.rep_neg);
            assert_eq!(v.rep[i], snap.rep);
            assert_eq!(
                order.iter().position(|&(j, _)| j == i).unwrap() + 1,
                snap.rank
            );
        }
    }
}
