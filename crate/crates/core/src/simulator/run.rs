use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scenario::{
    user_name, AttackKind, AttackSpec, AttackTarget, AttackerIdentities, BehaviorClass, Scenario,
    ScoreDist, Selection,
};
use super::{
    AttackOutcome, EdgeTracePoint, EpochSummary, MetricsReport, SimError, UserSnapshot,
    WhitewashRecord,
};
use crate::graph::{build_transition_matrices, TrustGraph};
use crate::ledger::{FeedbackEvent, Ledger, Replayer};
use crate::solver::{self, ReputationVector, SolverError};
use crate::trust::{self, ReputationScores, TrustWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Client,
    Provider,
    Attacker,
}

#[derive(Debug, Clone)]
struct Agent {
    name: String,
    role: Role,
    class: BehaviorClass,
    active: bool,
}

struct TruncatedNormal(Normal<f64>);

impl TruncatedNormal {
    fn new(d: ScoreDist) -> Self {
        Self(Normal::new(d.mean, d.sd).expect("validated distribution"))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        loop {
            let x = self.0.sample(rng);
            if x > 0.0 && x <= 1.0 {
                return x;
            }
        }
    }
}

/// Reputation computed at the most recent epoch.
struct Epoch {
    number: u64,
    block: u64,
    rep: ReputationVector,
    /// `position[i]` is the 1-based rank of graph user `i`.
    position: Vec<usize>,
    order: Vec<usize>,
    scores: ReputationScores,
}

impl Epoch {
    fn snapshot(&self, graph: &TrustGraph, user: &str) -> Option<UserSnapshot> {
        let i = graph.lookup(user)?;
        if i >= self.rep.len() {
            return None;
        }
        Some(UserSnapshot {
            epoch: self.number,
            block: self.block,
            user: user.to_owned(),
            rep_pos: self.rep.rep_pos[i],
            rep_neg: self.rep.rep_neg[i],
            rep: self.rep.rep[i],
            rank: self.position[i],
        })
    }
}

struct ActiveAttack {
    target: String,
    attackers: Vec<String>,
    before: UserSnapshot,
    last_block: u64,
}

struct Sim<'a> {
    scenario: &'a Scenario,
    rng: ChaCha8Rng,
    agents: Vec<Agent>,
    ledger: Ledger,
    replayer: Replayer,
    weights: TrustWeights,
    honest: TruncatedNormal,
    low: TruncatedNormal,
    tx_counter: u64,
    latest: Option<Epoch>,
    attack: Option<ActiveAttack>,
    report: MetricsReport,
}

/// Runs `scenario` to its horizon, returning the emitted ledger and metrics.
///
/// Reputation is recomputed from scratch (uniform start) every
/// `decay_epoch` blocks over the users seen so far, so every reported value
/// can be reproduced by replaying the ledger prefix up to that block.
pub fn run(scenario: &Scenario) -> Result<(Ledger, MetricsReport), SimError> {
    scenario.validate()?;
    let p = &scenario.params;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let agents = populate(scenario, &mut rng);
    let mut sim = Sim {
        scenario,
        rng,
        agents,
        ledger: Ledger::new(p.decay_epoch)?,
        replayer: Replayer::new(p.experience, p.theta, p.decay_epoch)?,
        weights: p
            .reputation
            .weights()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?,
        honest: TruncatedNormal::new(scenario.workload.honest_score),
        low: TruncatedNormal::new(scenario.workload.low_quality_score),
        tx_counter: 0,
        latest: None,
        attack: None,
        report: MetricsReport {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            epochs: Vec::new(),
            snapshots: Vec::new(),
            edge_traces: Vec::new(),
            attack: None,
            whitewash: Vec::new(),
        },
    };
    for block in 1..=scenario.n_blocks {
        sim.attack_step(block)?;
        sim.workload_step(block)?;
        if block % p.decay_epoch == 0 {
            sim.epoch(block)?;
        }
    }
    Ok((sim.ledger, sim.report))
}

/// Splits the population into providers and clients and assigns provider
/// classes by exact counts, in shuffled order.
fn populate(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Vec<Agent> {
    let n = scenario.n_users;
    let n_providers =
        ((scenario.workload.provider_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    // Fisher-Yates with explicit draws keeps the sequence independent of
    // library shuffle internals.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let c = &scenario.classes;
    let n_low = (c.low_quality * n_providers as f64).round() as usize;
    let n_ww = ((c.whitewasher * n_providers as f64).round() as usize)
        .min(n_providers - n_low.min(n_providers));
    let mut agents: Vec<Agent> = (0..n)
        .map(|i| Agent {
            name: user_name(i),
            role: Role::Client,
            class: BehaviorClass::Honest,
            active: true,
        })
        .collect();
    for (k, &i) in order.iter().take(n_providers).enumerate() {
        agents[i].role = Role::Provider;
        agents[i].class = if k < n_low {
            BehaviorClass::LowQuality
        } else if k < n_low + n_ww {
            BehaviorClass::Whitewasher
        } else {
            BehaviorClass::Honest
        };
    }
    agents
}

impl Sim<'_> {
    fn emit(&mut self, block: u64, from: &str, to: &str, score: f64) -> Result<(), SimError> {
        self.tx_counter += 1;
        let event = FeedbackEvent {
            block,
            from: from.to_owned(),
            to: to.to_owned(),
            score,
            tx_id: format!("tx{:08}", self.tx_counter),
        };
        self.replayer.apply(&event)?;
        self.ledger.append(event)?;
        Ok(())
    }

    fn new_identity(&mut self, role: Role, class: BehaviorClass) -> String {
        let name = user_name(self.agents.len());
        self.agents.push(Agent {
            name: name.clone(),
            role,
            class,
            active: true,
        });
        name
    }

    fn workload_step(&mut self, block: u64) -> Result<(), SimError> {
        let w = &self.scenario.workload;
        let mut n_tx = w.tx_per_block.floor() as u64;
        let frac = w.tx_per_block.fract();
        if frac > 0.0 && self.rng.random::<f64>() < frac {
            n_tx += 1;
        }
        let clients: Vec<usize> = self.active(Role::Client);
        let providers: Vec<usize> = self.active(Role::Provider);
        if clients.is_empty() || providers.is_empty() {
            return Ok(());
        }
        for _ in 0..n_tx {
            let client = clients[self.rng.random_range(0..clients.len())];
            let provider = self.select_provider(client, &providers);
            let score = match self.agents[provider].class {
                BehaviorClass::Honest => self.honest.sample(&mut self.rng),
                _ => self.low.sample(&mut self.rng),
            };
            let (c, pr) = (
                self.agents[client].name.clone(),
                self.agents[provider].name.clone(),
            );
            self.emit(block, &c, &pr, score)?;
            if w.reciprocal_rate > 0.0 && self.rng.random::<f64>() < w.reciprocal_rate {
                let back = self.honest.sample(&mut self.rng);
                self.emit(block, &pr, &c, back)?;
            }
        }
        Ok(())
    }

    fn active(&self, role: Role) -> Vec<usize> {
        self.agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.active && a.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    fn select_provider(&mut self, client: usize, providers: &[usize]) -> usize {
        let w = &self.scenario.workload;
        let scores = match (&self.latest, w.selection) {
            (Some(epoch), Selection::TrustWeighted) => &epoch.scores,
            _ => return providers[self.rng.random_range(0..providers.len())],
        };
        let graph = self.replayer.graph();
        let pop = graph.len();
        let client_idx = graph.lookup(&self.agents[client].name);
        let weights: Vec<f64> = providers
            .iter()
            .map(|&p| {
                let t = match (client_idx, graph.lookup(&self.agents[p].name)) {
                    (Some(a), Some(b)) => trust::trust_at(graph, scores, a, b, self.weights).value,
                    (None, Some(b)) => scores.score(b, pop),
                    (_, None) => scores.score(usize::MAX, pop),
                };
                t + w.selection_floor
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut target = self.rng.random::<f64>() * total;
        for (k, wt) in weights.iter().enumerate() {
            if target < *wt {
                return providers[k];
            }
            target -= wt;
        }
        *providers.last().expect("non-empty providers")
    }

    fn attack_step(&mut self, block: u64) -> Result<(), SimError> {
        let Some(spec) = self.scenario.attack.clone() else {
            return Ok(());
        };
        let end = spec.onset_block + u64::from(spec.ratings_per_attacker);
        if block < spec.onset_block || block >= end {
            return Ok(());
        }
        if self.attack.is_none() {
            self.start_attack(&spec, end - 1)?;
        }
        let active = self.attack.as_ref().expect("attack started");
        let (target, attackers) = (active.target.clone(), active.attackers.clone());
        for a in &attackers {
            self.emit(block, a, &target, spec.score)?;
        }
        Ok(())
    }

    fn start_attack(&mut self, spec: &AttackSpec, last_block: u64) -> Result<(), SimError> {
        let graph = self.replayer.graph();
        let epoch = self
            .latest
            .as_ref()
            .ok_or_else(|| SimError::InvalidScenario("attack before first epoch".into()))?;
        let target = match &spec.target {
            AttackTarget::User(name) => name.clone(),
            AttackTarget::Rank(r) => {
                let i = *epoch.order.get(r - 1).ok_or_else(|| {
                    SimError::InvalidScenario(format!("no user at rank {r} at attack onset"))
                })?;
                graph.name(i).0.clone()
            }
        };
        let before = epoch.snapshot(graph, &target).ok_or_else(|| {
            SimError::InvalidScenario(format!("attack target {target} has no history at onset"))
        })?;
        let attackers = match spec.identities {
            AttackerIdentities::Established => {
                let chosen: Vec<String> = epoch
                    .order
                    .iter()
                    .map(|&i| graph.name(i).0.clone())
                    .filter(|n| *n != target)
                    .take(spec.attackers)
                    .collect();
                if chosen.len() < spec.attackers {
                    return Err(SimError::InvalidScenario(
                        "not enough established users for the attack".into(),
                    ));
                }
                chosen
            }
            AttackerIdentities::Fresh => {
                let class = match spec.kind {
                    AttackKind::SelfPromote => BehaviorClass::Sybil,
                    AttackKind::BadMouth => BehaviorClass::BadMouther,
                };
                (0..spec.attackers)
                    .map(|_| self.new_identity(Role::Attacker, class))
                    .collect()
            }
        };
        self.attack = Some(ActiveAttack {
            target,
            attackers,
            before,
            last_block,
        });
        Ok(())
    }

    fn epoch(&mut self, block: u64) -> Result<(), SimError> {
        let params = &self.scenario.params;
        self.replayer.advance_to(block);
        let graph = self.replayer.graph();
        let t = build_transition_matrices(&graph.split());
        let rep = match solver::solve(&t.a_pos, &t.a_neg, &params.reputation, None) {
            Ok(v) => v,
            Err(SolverError::NotConverged { best }) => *best,
            Err(e) => return Err(e.into()),
        };
        let ranking = solver::rank(&rep);
        let mut position = vec![0; rep.len()];
        for (pos, &(i, _)) in ranking.iter().enumerate() {
            position[i] = pos + 1;
        }
        let number = block / params.decay_epoch;
        let epoch = Epoch {
            number,
            block,
            scores: ReputationScores::min_max(&rep),
            order: ranking.iter().map(|&(i, _)| i).collect(),
            position,
            rep,
        };

        self.report.epochs.push(EpochSummary {
            epoch: number,
            block,
            n_users: graph.len(),
            n_edges: graph.edge_count(),
            iterations: epoch.rep.iterations,
            residual: epoch.rep.final_residual,
            converged: epoch.rep.converged,
        });

        let mut tracked: Vec<String> = self.scenario.tracked_users.clone();
        if let Some(a) = &self.attack {
            tracked.push(a.target.clone());
        }
        let mut seen = HashSet::new();
        for user in tracked {
            if seen.insert(user.clone()) {
                if let Some(s) = epoch.snapshot(graph, &user) {
                    self.report.snapshots.push(s);
                }
            }
        }
        for e in &self.scenario.tracked_edges {
            if let (Some(f), Some(t)) = (graph.lookup(&e.from), graph.lookup(&e.to)) {
                if let Some(state) = graph.edge(f, t) {
                    self.report.edge_traces.push(EdgeTracePoint {
                        epoch: number,
                        from: e.from.clone(),
                        to: e.to.clone(),
                        exp: state.current,
                    });
                }
            }
        }

        if let Some(a) = &self.attack {
            if self.report.attack.is_none() && block >= a.last_block {
                let spec = self.scenario.attack.as_ref().expect("attack spec");
                self.report.attack = Some(AttackOutcome {
                    kind: spec.kind,
                    identities: spec.identities,
                    target: a.target.clone(),
                    attackers: a.attackers.clone(),
                    onset_block: spec.onset_block,
                    before: a.before.clone(),
                    after: epoch.snapshot(graph, &a.target),
                });
            }
        }

        self.whitewash(&epoch, number);
        self.latest = Some(epoch);
        Ok(())
    }

    fn whitewash(&mut self, epoch: &Epoch, number: u64) {
        let graph = self.replayer.graph();
        let rep_of = |name: &str| {
            graph
                .lookup(name)
                .and_then(|i| epoch.rep.rep.get(i).copied())
        };
        for record in self.report.whitewash.iter_mut() {
            if record.epochs_to_recover.is_none() {
                if let Some(r) = rep_of(&record.fresh) {
                    if r > record.abandoned_rep {
                        record.epochs_to_recover = Some(number - record.epoch);
                    }
                }
            }
        }
        let bootstrap = 1.0 / graph.len().max(1) as f64;
        let mut abandon = Vec::new();
        for (k, agent) in self.agents.iter().enumerate() {
            if agent.active && agent.class == BehaviorClass::Whitewasher {
                if let Some(r) = rep_of(&agent.name) {
                    if r < bootstrap {
                        abandon.push((k, r));
                    }
                }
            }
        }
        for (k, r) in abandon {
            self.agents[k].active = false;
            let role = self.agents[k].role;
            let fresh = self.new_identity(role, BehaviorClass::Whitewasher);
            self.report.whitewash.push(WhitewashRecord {
                abandoned: self.agents[k].name.clone(),
                fresh,
                epoch: number,
                abandoned_rep: r,
                epochs_to_recover: None,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::scenario::*;
    use super::*;
    use crate::ledger::replay_until;

    fn scenario(seed: u64) -> Scenario {
        Scenario {
            name: "unit".into(),
            seed,
            n_users: 40,
            n_blocks: 600,
            workload: Workload {
                reciprocal_rate: 0.2,
                ..Workload::default()
            },
            classes: ClassMix {
                honest: 0.5,
                low_quality: 0.25,
                whitewasher: 0.25,
            },
            attack: None,
            tracked_users: vec![user_name(0), user_name(1)],
            tracked_edges: vec![],
            params: ScenarioParams::default(),
        }
    }

    #[test]
    fn deterministic() {
        let (l1, m1) = run(&scenario(9)).unwrap();
        let (l2, m2) = run(&scenario(9)).unwrap();
        assert_eq!(l1.to_canonical_string(), l2.to_canonical_string());
        assert_eq!(m1, m2);
        let (l3, _) = run(&scenario(10)).unwrap();
        assert_ne!(l1.to_canonical_string(), l3.to_canonical_string());
    }

    #[test]
    fn epochs_match_replay() {
        let s = scenario(4);
        let (ledger, report) = run(&s).unwrap();
        assert_eq!(report.epochs.len(), 6);
        let p = &s.params;
        for e in &report.epochs {
            let g = replay_until(&ledger, &p.experience, p.theta, e.block).unwrap();
            assert_eq!(g.len(), e.n_users);
            assert_eq!(g.edge_count(), e.n_edges);
            let t = build_transition_matrices(&g.split());
            let v = solver::solve(&t.a_pos, &t.a_neg, &p.reputation, None).unwrap();
            assert_eq!(v.iterations, e.iterations);
            for snap in report.snapshots.iter().filter(|s| s.epoch == e.epoch) {
                let i = g.lookup(&snap.user).unwrap();
                assert_eq!(v.rep_pos[i], snap.rep_pos);
                assert_eq!(v.rep_neg[i], snap.rep_neg);
            }
        }
    }

    #[test]
    fn whitewashers_reenter() {
        let (_, report) = run(&scenario(4)).unwrap();
        assert!(!report.whitewash.is_empty());
        for w in &report.whitewash {
            assert!(w.abandoned_rep < 1.0);
            assert_ne!(w.abandoned, w.fresh);
        }
    }
}
