use crate::error::{Error, Result};
use crate::types::{boundary_level, CrfParams, CrfState, MAX_LAYERS};

/// State reached from `prev` when the next step carries a level-`b` boundary.
///
/// Counters of levels `1..=b` restart at 0, level `b + 1` has just completed a
/// sub-unit and reads 1, and every higher counter is carried over unchanged.
pub fn successor_state(prev: CrfState, b: usize) -> CrfState {
    let layers = prev.num_layers();
    assert!(b <= layers, "boundary level {b} exceeds {layers} layers");
    let cleared = prev.bits() & !(((1u32 << (b + 1)) - 1) as u16);
    let bits = if b < layers { cleared | (1 << b) } else { 0 };
    CrfState::from_raw(bits, layers)
}

/// Log transition potential from `prev` into `successor_state(prev, b)`.
///
/// Levels `1..=b+1` contribute `log A^(l)`; levels above are frozen and
/// contribute nothing. Infinite penalties produce `-inf`.
pub fn transition_log_potential(params: &CrfParams, prev: CrfState, b: usize) -> f64 {
    let next = successor_state(prev, b);
    let top = (b + 1).min(params.num_layers());
    let mut total = 0.0;
    for l in 1..=top {
        total += params.log_potential(l, prev.counter(l), next.counter(l));
    }
    total
}

/// One finite-weight move out of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Move {
    pub level: u8,
    pub to: u16,
    pub log_potential: f64,
}

/// One finite-weight move into a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Incoming {
    pub from: u16,
    pub log_potential: f64,
}

/// Precomputed successor and log-potential for every `(state, level)` pair.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    num_layers: usize,
    successors: Vec<u16>,
    log_potentials: Vec<f64>,
    state_levels: Vec<u8>,
    outgoing: Vec<Vec<Move>>,
    incoming: Vec<Vec<Incoming>>,
}

impl TransitionTable {
    pub fn new(params: &CrfParams) -> Result<Self> {
        let layers = params.num_layers();
        if layers > MAX_LAYERS {
            return Err(Error::Capacity(format!(
                "{layers} layers exceeds the {MAX_LAYERS}-layer state table limit"
            )));
        }
        let num_states = 1usize << layers;
        let width = layers + 1;
        let mut successors = Vec::with_capacity(num_states * width);
        let mut log_potentials = Vec::with_capacity(num_states * width);
        let mut outgoing = vec![Vec::new(); num_states];
        let mut incoming = vec![Vec::new(); num_states];
        let state_levels = (0..num_states)
            .map(|s| boundary_level(CrfState::from_raw(s as u16, layers)) as u8)
            .collect();

        for (s, moves) in outgoing.iter_mut().enumerate() {
            let prev = CrfState::from_raw(s as u16, layers);
            for b in 0..=layers {
                let next = successor_state(prev, b);
                let lp = transition_log_potential(params, prev, b);
                successors.push(next.bits());
                log_potentials.push(lp);
                if lp > f64::NEG_INFINITY {
                    moves.push(Move {
                        level: b as u8,
                        to: next.bits(),
                        log_potential: lp,
                    });
                    incoming[next.bits() as usize].push(Incoming {
                        from: s as u16,
                        log_potential: lp,
                    });
                }
            }
        }
        Ok(TransitionTable {
            num_layers: layers,
            successors,
            log_potentials,
            state_levels,
            outgoing,
            incoming,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_states(&self) -> usize {
        1 << self.num_layers
    }

    /// Total number of `(state, level)` entries, `2^L * (L + 1)`.
    pub fn len(&self) -> usize {
        self.successors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.successors.is_empty()
    }

    pub fn successor(&self, state: CrfState, b: usize) -> CrfState {
        let idx = state.bits() as usize * (self.num_layers + 1) + b;
        CrfState::from_raw(self.successors[idx], self.num_layers)
    }

    pub fn log_potential(&self, state: CrfState, b: usize) -> f64 {
        self.log_potentials[state.bits() as usize * (self.num_layers + 1) + b]
    }

    pub(crate) fn state_level(&self, state: usize) -> usize {
        self.state_levels[state] as usize
    }

    pub(crate) fn outgoing(&self, state: usize) -> &[Move] {
        &self.outgoing[state]
    }

    pub(crate) fn incoming(&self, state: usize) -> &[Incoming] {
        &self.incoming[state]
    }
}

/// Builds the table; fails for more than 12 layers.
pub fn build_transition_table(params: &CrfParams) -> Result<TransitionTable> {
    TransitionTable::new(params)
}
