//! States, signals, partitions, priors and securities.
//!
//! A state is one joint realisation of `n` binary signals. States are kept
//! in a canonical order where state 0 has every signal true and the last
//! state has every signal false, so for three signals the eight states are
//! named `a` through `h` with `a = (1,1,1)` and `h = (0,0,0)`.
//!
//! Each trader's private knowledge is a partition of the state space; the
//! cell containing the true state is what the trader considers possible.
//! Observing a myopically optimal price lets everyone discard the private
//! cells that could not have produced it, shrinking the common-knowledge
//! public event. [`myopic_trace`] plays this out for a whole market.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Tolerance used when matching an announced price to a cell posterior.
/// All benchmark posteriors are dyadic rationals, so this is unambiguous.
pub const POSTERIOR_TOL: f64 = 1e-9;

pub type StateId = usize;
pub type TraderId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum KnowledgeError {
    #[error("conditioning on null event")]
    NullEvent,
    #[error("inconsistent public event for trader {trader}")]
    InconsistentPublicEvent { trader: TraderId },
    #[error("announcement {announced} inconsistent with structure for trader {trader}")]
    InconsistentAnnouncement { trader: TraderId, announced: f64 },
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
}

/// A set of states, stored as a bitmask. Supports state spaces up to 2^16.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    bits: Vec<u64>,
    n_states: usize,
}

impl StateSet {
    pub fn empty(n_states: usize) -> Self {
        StateSet {
            bits: vec![0; n_states.div_ceil(64)],
            n_states,
        }
    }

    pub fn full(n_states: usize) -> Self {
        let mut s = Self::empty(n_states);
        for i in 0..n_states {
            s.insert(i);
        }
        s
    }

    pub fn from_states(n_states: usize, states: &[StateId]) -> Self {
        let mut s = Self::empty(n_states);
        for &i in states {
            s.insert(i);
        }
        s
    }

    pub fn singleton(n_states: usize, state: StateId) -> Self {
        Self::from_states(n_states, &[state])
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn insert(&mut self, state: StateId) {
        assert!(state < self.n_states);
        self.bits[state / 64] |= 1 << (state % 64);
    }

    pub fn contains(&self, state: StateId) -> bool {
        state < self.n_states && self.bits[state / 64] & (1 << (state % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn intersect(&self, other: &StateSet) -> StateSet {
        assert_eq!(self.n_states, other.n_states);
        StateSet {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a & b)
                .collect(),
            n_states: self.n_states,
        }
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        assert_eq!(self.n_states, other.n_states);
        StateSet {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a | b)
                .collect(),
            n_states: self.n_states,
        }
    }

    pub fn is_subset_of(&self, other: &StateSet) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.n_states).filter(move |&i| self.contains(i))
    }
}

impl fmt::Debug for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, s) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "}}")
    }
}

/// The common-knowledge event: the set of states everyone considers possible.
pub type PublicEvent = StateSet;

/// Binary signals and the 2^n states given by their joint realisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    signal_names: Vec<String>,
}

impl StateSpace {
    pub fn new(signal_names: Vec<String>) -> Result<Self, KnowledgeError> {
        if signal_names.is_empty() || signal_names.len() > 16 {
            return Err(KnowledgeError::InvalidStructure(
                "signal count must be in 1..=16".into(),
            ));
        }
        Ok(StateSpace { signal_names })
    }

    pub fn n_signals(&self) -> usize {
        self.signal_names.len()
    }

    pub fn n_states(&self) -> usize {
        1 << self.signal_names.len()
    }

    pub fn signal_names(&self) -> &[String] {
        &self.signal_names
    }

    /// Realisation of signal `sig` at `state` in the canonical order
    /// (state 0 is all-true, the last state is all-false).
    pub fn signal(&self, state: StateId, sig: usize) -> bool {
        let n = self.n_signals();
        (state >> (n - 1 - sig)) & 1 == 0
    }

    pub fn signals(&self, state: StateId) -> Vec<bool> {
        (0..self.n_signals()).map(|j| self.signal(state, j)).collect()
    }

    pub fn state_from_signals(&self, realisations: &[bool]) -> StateId {
        let n = self.n_signals();
        assert_eq!(realisations.len(), n);
        realisations
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &r)| acc | (usize::from(!r) << (n - 1 - j)))
    }

    pub fn state_name(&self, state: StateId) -> String {
        if self.n_states() <= 26 {
            char::from(b'a' + state as u8).to_string()
        } else {
            format!("s{state}")
        }
    }

    pub fn state_from_name(&self, name: &str) -> Option<StateId> {
        if self.n_states() <= 26 {
            let b = name.as_bytes();
            if b.len() == 1 && b[0] >= b'a' && ((b[0] - b'a') as usize) < self.n_states() {
                return Some((b[0] - b'a') as usize);
            }
        }
        name.strip_prefix('s')
            .and_then(|rest| rest.parse().ok())
            .filter(|&s: &usize| s < self.n_states())
    }

    /// Partition a trader obtains from observing the given signals.
    pub fn partition_from_signals(&self, observed: &[usize]) -> Partition {
        let n_states = self.n_states();
        let mut cells: Vec<StateSet> = Vec::new();
        let mut cell_key: Vec<Option<usize>> = vec![None; 1 << observed.len()];
        for state in 0..n_states {
            let mut key = 0;
            for (j, &sig) in observed.iter().enumerate() {
                key |= usize::from(self.signal(state, sig)) << j;
            }
            let idx = *cell_key[key].get_or_insert_with(|| {
                cells.push(StateSet::empty(n_states));
                cells.len() - 1
            });
            cells[idx].insert(state);
        }
        Partition { cells }
    }
}

/// Probability weights over states; nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    weights: Vec<f64>,
}

impl Prior {
    pub fn new(weights: Vec<f64>) -> Result<Self, KnowledgeError> {
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(KnowledgeError::InvalidStructure(
                "prior weights must be nonnegative and finite".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(KnowledgeError::InvalidStructure(format!(
                "prior weights sum to {sum}, expected 1"
            )));
        }
        Ok(Prior { weights })
    }

    pub fn uniform(n_states: usize) -> Self {
        Prior {
            weights: vec![1.0 / n_states as f64; n_states],
        }
    }

    pub fn weight(&self, state: StateId) -> f64 {
        self.weights[state]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self, event: &StateSet) -> f64 {
        event.iter().map(|s| self.weights[s]).sum()
    }
}

/// A trader's information: disjoint nonempty cells covering the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    cells: Vec<StateSet>,
}

impl Partition {
    pub fn new(cells: Vec<StateSet>) -> Result<Self, KnowledgeError> {
        if cells.is_empty() {
            return Err(KnowledgeError::InvalidStructure("empty partition".into()));
        }
        let n_states = cells[0].n_states();
        let mut seen = StateSet::empty(n_states);
        for cell in &cells {
            if cell.is_empty() {
                return Err(KnowledgeError::InvalidStructure("empty cell".into()));
            }
            if !cell.intersect(&seen).is_empty() {
                return Err(KnowledgeError::InvalidStructure(
                    "overlapping partition cells".into(),
                ));
            }
            seen = seen.union(cell);
        }
        if seen != StateSet::full(n_states) {
            return Err(KnowledgeError::InvalidStructure(
                "partition cells do not cover the state space".into(),
            ));
        }
        Ok(Partition { cells })
    }

    pub fn cells(&self) -> &[StateSet] {
        &self.cells
    }

    pub fn cell_of(&self, state: StateId) -> &StateSet {
        self.cells
            .iter()
            .find(|c| c.contains(state))
            .expect("partition covers the state space")
    }
}

/// Payoff of the Yes share at each state. Binary 0/1 for all presets,
/// but arbitrary real payoffs are supported for separability analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Security {
    payoff: Vec<f64>,
}

impl Security {
    pub fn new(payoff: Vec<f64>) -> Self {
        Security { payoff }
    }

    pub fn payoff(&self, state: StateId) -> f64 {
        self.payoff[state]
    }

    pub fn payoffs(&self) -> &[f64] {
        &self.payoff
    }
}

/// The four benchmark structures, in increasing order of reasoning difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureId {
    Easy,
    Medium,
    Hard,
    VeryHard,
}

impl StructureId {
    pub const ALL: [StructureId; 4] = [
        StructureId::Easy,
        StructureId::Medium,
        StructureId::Hard,
        StructureId::VeryHard,
    ];

    /// Short label used in CSV output and market ids.
    pub fn label(self) -> &'static str {
        match self {
            StructureId::Easy => "easy",
            StructureId::Medium => "medium",
            StructureId::Hard => "hard",
            StructureId::VeryHard => "very_hard",
        }
    }

    /// The platform-style code name of the structure.
    pub fn code(self) -> &'static str {
        match self {
            StructureId::Easy => "t3s111y2",
            StructureId::Medium => "t3s110",
            StructureId::Hard => "t3s111",
            StructureId::VeryHard => "t3s111o2ye2",
        }
    }

    /// Complexity level 1 (easiest) to 4 (hardest).
    pub fn complexity_level(self) -> u32 {
        match self {
            StructureId::Easy => 1,
            StructureId::Medium => 2,
            StructureId::Hard => 3,
            StructureId::VeryHard => 4,
        }
    }

    pub fn from_label(label: &str) -> Option<StructureId> {
        match label {
            "easy" | "t3s111y2" => Some(StructureId::Easy),
            "medium" | "t3s110" => Some(StructureId::Medium),
            "hard" | "t3s111" => Some(StructureId::Hard),
            "very_hard" | "veryhard" | "t3s111o2ye2" => Some(StructureId::VeryHard),
            _ => None,
        }
    }
}

/// A complete information and payoff structure: who knows what, what the
/// security pays where, and which state actually occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoStructure {
    pub space: StateSpace,
    pub prior: Prior,
    partitions: Vec<Partition>,
    pub security: Security,
    pub true_state: StateId,
    pub preset: Option<StructureId>,
}

impl InfoStructure {
    pub fn new(
        space: StateSpace,
        prior: Prior,
        partitions: Vec<Partition>,
        security: Security,
        true_state: StateId,
    ) -> Result<Self, KnowledgeError> {
        let n = space.n_states();
        if prior.weights().len() != n || security.payoffs().len() != n {
            return Err(KnowledgeError::InvalidStructure(
                "prior/payoff length does not match state count".into(),
            ));
        }
        if true_state >= n {
            return Err(KnowledgeError::InvalidStructure(
                "true state out of range".into(),
            ));
        }
        if partitions.is_empty() {
            return Err(KnowledgeError::InvalidStructure("no traders".into()));
        }
        for p in &partitions {
            if p.cells()[0].n_states() != n {
                return Err(KnowledgeError::InvalidStructure(
                    "partition defined over a different state space".into(),
                ));
            }
        }
        Ok(InfoStructure {
            space,
            prior,
            partitions,
            security,
            true_state,
            preset: None,
        })
    }

    pub fn n_traders(&self) -> usize {
        self.partitions.len()
    }

    pub fn partition(&self, trader: TraderId) -> &Partition {
        &self.partitions[trader]
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn full_event(&self) -> PublicEvent {
        StateSet::full(self.space.n_states())
    }

    /// True iff the pooled information of all traders reveals every state:
    /// the join of the partitions is the discrete partition.
    pub fn join_is_discrete(&self) -> bool {
        (0..self.space.n_states()).all(|state| {
            let mut meet = StateSet::full(self.space.n_states());
            for p in &self.partitions {
                meet = meet.intersect(p.cell_of(state));
            }
            meet.len() == 1
        })
    }

    /// Same structure with a different realised state.
    pub fn with_true_state(&self, state: StateId) -> InfoStructure {
        let mut s = self.clone();
        s.true_state = state;
        s
    }
}

/// Builds one of the four benchmark structures, including its realised state.
pub fn make_structure(preset: StructureId) -> InfoStructure {
    let space = StateSpace::new(vec!["d_a".into(), "d_b".into(), "d_c".into()]).unwrap();
    let n = space.n_states();
    let prior = Prior::uniform(n);

    let count_true = |s: StateId| space.signals(s).iter().filter(|&&b| b).count();
    let payoff: Vec<f64> = (0..n)
        .map(|s| match preset {
            StructureId::Easy => f64::from(count_true(s) >= 2),
            StructureId::Medium | StructureId::Hard => f64::from(count_true(s) == 3),
            StructureId::VeryHard => f64::from(count_true(s) == 2),
        })
        .collect();

    let partitions: Vec<Partition> = (0..3)
        .map(|trader| match preset {
            // Trader i observes his own signal.
            StructureId::Easy | StructureId::Medium | StructureId::Hard => {
                space.partition_from_signals(&[trader])
            }
            // Trader i observes the other two signals.
            StructureId::VeryHard => {
                let observed: Vec<usize> = (0..3).filter(|&j| j != trader).collect();
                space.partition_from_signals(&observed)
            }
        })
        .collect();

    let true_state = match preset {
        StructureId::Medium => space.state_from_signals(&[true, true, false]),
        _ => space.state_from_signals(&[true, true, true]),
    };

    let mut s = InfoStructure::new(space, prior, partitions, Security::new(payoff), true_state)
        .expect("presets are valid");
    s.preset = Some(preset);
    s
}

/// Expected payoff of the security conditional on `event` under the prior.
pub fn conditional_expectation(
    structure: &InfoStructure,
    event: &StateSet,
) -> Result<f64, KnowledgeError> {
    let mass = structure.prior.mass(event);
    if mass <= 0.0 {
        return Err(KnowledgeError::NullEvent);
    }
    let weighted: f64 = event
        .iter()
        .map(|s| structure.prior.weight(s) * structure.security.payoff(s))
        .sum();
    Ok(weighted / mass)
}

/// The trader's posterior expectation of the payoff at the true state,
/// given the public event.
pub fn trader_posterior(
    structure: &InfoStructure,
    trader: TraderId,
    public: &PublicEvent,
) -> Result<f64, KnowledgeError> {
    let cell = structure.partition(trader).cell_of(structure.true_state);
    let joint = cell.intersect(public);
    if joint.is_empty() || structure.prior.mass(&joint) <= 0.0 {
        return Err(KnowledgeError::InconsistentPublicEvent { trader });
    }
    conditional_expectation(structure, &joint)
}

/// Shrinks the public event after observing a trader's announced price.
///
/// Observers keep exactly the private cells of the trader that would have
/// produced the announced price: the cells `c` with a nonempty, positive-mass
/// intersection with the public event whose conditional expectation equals
/// the announcement within [`POSTERIOR_TOL`].
pub fn refine_public_event(
    structure: &InfoStructure,
    trader: TraderId,
    announced: f64,
    public: &PublicEvent,
) -> Result<PublicEvent, KnowledgeError> {
    let mut consistent = StateSet::empty(structure.space.n_states());
    for cell in structure.partition(trader).cells() {
        let joint = cell.intersect(public);
        if joint.is_empty() || structure.prior.mass(&joint) <= 0.0 {
            continue;
        }
        let posterior = conditional_expectation(structure, &joint)?;
        if (posterior - announced).abs() <= POSTERIOR_TOL {
            consistent = consistent.union(cell);
        }
    }
    if consistent.is_empty() {
        return Err(KnowledgeError::InconsistentAnnouncement { trader, announced });
    }
    Ok(public.intersect(&consistent))
}

/// Posteriors achievable by the trader's cells given the public event.
pub fn achievable_posteriors(
    structure: &InfoStructure,
    trader: TraderId,
    public: &PublicEvent,
) -> Vec<f64> {
    structure
        .partition(trader)
        .cells()
        .iter()
        .filter_map(|cell| {
            let joint = cell.intersect(public);
            if joint.is_empty() || structure.prior.mass(&joint) <= 0.0 {
                None
            } else {
                conditional_expectation(structure, &joint).ok()
            }
        })
        .collect()
}

/// One step of the theoretical myopic price path.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub round: u32,
    pub trader: TraderId,
    pub price: f64,
    pub public: PublicEvent,
}

/// The myopic benchmark: each trader in turn announces his posterior and the
/// public event is refined after each announcement. Rounds past one full
/// rotation are fixed points for the benchmark structures.
pub fn myopic_trace(structure: &InfoStructure) -> Vec<TraceStep> {
    myopic_trace_rounds(structure, structure.n_traders() as u32)
}

pub fn myopic_trace_rounds(structure: &InfoStructure, rounds: u32) -> Vec<TraceStep> {
    let mut public = structure.full_event();
    let mut steps = Vec::with_capacity(rounds as usize);
    for round in 1..=rounds {
        let trader = (round as usize - 1) % structure.n_traders();
        let price = trader_posterior(structure, trader, &public)
            .expect("truthful play keeps the true state in the public event");
        public = refine_public_event(structure, trader, price, &public)
            .expect("a truthful announcement is always consistent");
        steps.push(TraceStep {
            round,
            trader,
            price,
            public: public.clone(),
        });
    }
    steps
}

// ---------------------------------------------------------------------------
// Structure catalog file format
// ---------------------------------------------------------------------------

/// Serialisable mirror of [`InfoStructure`] for the structure catalog files
/// consumed by the separability CLI and the prompt builder.
#[derive(Debug, Serialize, Deserialize)]
pub struct StructureFile {
    pub signals: Vec<String>,
    /// Payoff of the Yes share per state, in canonical state order.
    pub payoff: Vec<f64>,
    pub true_state: String,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    #[serde(default)]
    pub preset: Option<StructureId>,
    pub traders: Vec<TraderCells>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraderCells {
    pub cells: Vec<Vec<String>>,
}

impl StructureFile {
    pub fn from_structure(s: &InfoStructure) -> StructureFile {
        StructureFile {
            signals: s.space.signal_names().to_vec(),
            payoff: s.security.payoffs().to_vec(),
            true_state: s.space.state_name(s.true_state),
            prior: Some(s.prior.weights().to_vec()),
            preset: s.preset,
            traders: s
                .partitions()
                .iter()
                .map(|p| TraderCells {
                    cells: p
                        .cells()
                        .iter()
                        .map(|c| c.iter().map(|st| s.space.state_name(st)).collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn into_structure(self) -> Result<InfoStructure, KnowledgeError> {
        let space = StateSpace::new(self.signals)?;
        let n = space.n_states();
        let prior = match self.prior {
            Some(w) => Prior::new(w)?,
            None => Prior::uniform(n),
        };
        let lookup = |name: &str| {
            space
                .state_from_name(name)
                .ok_or_else(|| KnowledgeError::InvalidStructure(format!("unknown state {name}")))
        };
        let true_state = lookup(&self.true_state)?;
        let mut partitions = Vec::new();
        for t in self.traders {
            let mut cells = Vec::new();
            for cell in t.cells {
                let states: Vec<StateId> =
                    cell.iter().map(|n| lookup(n)).collect::<Result<_, _>>()?;
                cells.push(StateSet::from_states(n, &states));
            }
            partitions.push(Partition::new(cells)?);
        }
        let mut s =
            InfoStructure::new(space, prior, partitions, Security::new(self.payoff), true_state)?;
        s.preset = self.preset;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("structure files are serialisable")
    }

    pub fn from_toml(text: &str) -> Result<StructureFile, KnowledgeError> {
        toml::from_str(text).map_err(|e| KnowledgeError::InvalidStructure(e.to_string()))
    }
}
