//! Synchronous message-passing engine. Each agent is a node holding only its own
//! problem data, its dual block and the multipliers of the edges it owns; everything
//! else arrives as messages from graph neighbors.
//!
//! A round has two exchanges:
//! 1. every agent sends `λ_i^t` to each neighbor, and every edge owner `i` sends
//!    `ξ_ij^t` to its peer `j`; agents then compute `λ_i^{t+1}`;
//! 2. every agent sends `λ_i^{t+1}` to the owners of its incoming edges, which then
//!    update `ξ_ij`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::functions::FunctionError;
use crate::problems::{AgentProblem, ProblemInstance};
use crate::solver::{lambda_update, xi_update, AgentDual, DualState, EdgeMultiplier, LocalInputs, SolverError, StepSizes};
use crate::topology::{Graph, NeighborSets};
use crate::Vector;

#[derive(Debug, Error)]
pub enum NetsimError {
    #[error("protocol violation in round {round}, {phase} phase, {sender} -> {recipient}: {reason}")]
    ProtocolViolation {
        round: usize,
        phase: Phase,
        /// 1-based.
        sender: usize,
        /// 1-based.
        recipient: usize,
        reason: String,
    },
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    LambdaExchange,
    LambdaPlusExchange,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::LambdaExchange => "lambda",
            Phase::LambdaPlusExchange => "lambda+",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Lambda(AgentDual),
    Xi(Vector),
}

impl Payload {
    pub fn scalars(&self) -> usize {
        match self {
            Payload::Lambda(l) => l.theta.len() + l.mu.len(),
            Payload::Xi(x) => x.len(),
        }
    }
}

/// Vertex indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub round: usize,
    pub phase: Phase,
    pub sender: usize,
    pub recipient: usize,
    pub payload: Payload,
}

pub trait Transport {
    fn send(&mut self, msg: Message) -> Result<(), NetsimError>;
    /// Removes and returns everything queued for `recipient`.
    fn drain(&mut self, recipient: usize) -> Vec<Message>;
}

/// Per-recipient FIFO mailboxes.
#[derive(Debug, Clone, Default)]
pub struct InMemoryTransport {
    mailboxes: BTreeMap<usize, Vec<Message>>,
}

impl InMemoryTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> usize {
        self.mailboxes.values().map(Vec::len).sum()
    }
}

impl Transport for InMemoryTransport {
    fn send(&mut self, msg: Message) -> Result<(), NetsimError> {
        self.mailboxes.entry(msg.recipient).or_default().push(msg);
        Ok(())
    }

    fn drain(&mut self, recipient: usize) -> Vec<Message> {
        self.mailboxes.remove(&recipient).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub round: usize,
    pub phase: Phase,
    pub sender: usize,
    pub recipient: usize,
    pub scalars: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundStats {
    pub messages: usize,
    pub scalars: usize,
}

/// Messages and scalars per round on `graph`:
/// `2|E|` λ-messages, `|E|` ξ-messages and `|E|` λ⁺-messages, carrying
/// `2|E|(B+M) + |E|B + |E|(B+M)` scalars.
pub fn message_volume(graph: &Graph, b: usize, m: usize) -> RoundStats {
    let e = graph.n_edges();
    RoundStats {
        messages: 4 * e,
        scalars: 2 * e * (b + m) + e * b + e * (b + m),
    }
}

/// What one agent knows.
#[derive(Debug, Clone)]
struct Node {
    id: usize,
    problem: AgentProblem,
    b: Vector,
    neighbors: NeighborSets,
    lambda: AgentDual,
    /// `ξ_ij` for owned edges, in the order of `neighbors.owned`.
    owned_xi: Vec<Vector>,
}

pub struct Engine<T: Transport> {
    nodes: Vec<Node>,
    edge_count: usize,
    steps: StepSizes,
    transport: T,
    round: usize,
    log: Option<Vec<Event>>,
    last_stats: RoundStats,
}

impl<T: Transport> Engine<T> {
    /// Distributes the instance and the initial iterate over the nodes.
    pub fn new(
        problem: &ProblemInstance,
        steps: StepSizes,
        initial: &DualState,
        transport: T,
    ) -> Result<Self, NetsimError> {
        initial.check_shape(problem)?;
        let g = &problem.graph;
        let nodes = problem
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let nb = g.neighbors(i).clone();
                let owned_xi = nb.owned.iter().map(|&(_, k)| initial.xi[k].xi.clone()).collect();
                Node {
                    id: i,
                    problem: a.clone(),
                    b: problem.b.clone(),
                    neighbors: nb,
                    lambda: initial.lambda[i].clone(),
                    owned_xi,
                }
            })
            .collect();
        Ok(Engine {
            nodes,
            edge_count: g.n_edges(),
            steps,
            transport,
            round: 0,
            log: None,
            last_stats: RoundStats::default(),
        })
    }

    /// Records every delivered message from now on.
    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn events(&self) -> &[Event] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn last_stats(&self) -> RoundStats {
        self.last_stats
    }

    /// Assembles the global iterate from the nodes' local data.
    pub fn state(&self) -> DualState {
        let mut xi: Vec<(usize, EdgeMultiplier)> = Vec::with_capacity(self.edge_count);
        for n in &self.nodes {
            for (&(peer, k), v) in n.neighbors.owned.iter().zip(&n.owned_xi) {
                xi.push((
                    k,
                    EdgeMultiplier {
                        owner: n.id,
                        peer,
                        xi: v.clone(),
                    },
                ));
            }
        }
        xi.sort_by_key(|(k, _)| *k);
        DualState {
            lambda: self.nodes.iter().map(|n| n.lambda.clone()).collect(),
            xi: xi.into_iter().map(|(_, e)| e).collect(),
        }
    }

    fn send(&mut self, stats: &mut RoundStats, msg: Message) -> Result<(), NetsimError> {
        stats.messages += 1;
        stats.scalars += msg.payload.scalars();
        if let Some(log) = &mut self.log {
            log.push(Event {
                round: msg.round,
                phase: msg.phase,
                sender: msg.sender,
                recipient: msg.recipient,
                scalars: msg.payload.scalars(),
            });
        }
        self.transport.send(msg)
    }

    fn violation(&self, phase: Phase, sender: usize, recipient: usize, reason: &str) -> NetsimError {
        NetsimError::ProtocolViolation {
            round: self.round,
            phase,
            sender: sender + 1,
            recipient: recipient + 1,
            reason: reason.to_string(),
        }
    }

    /// Checks that `inbox` holds exactly one message of the expected kind from every
    /// sender in `expected` (sorted), and returns the payloads in that order.
    fn collect(
        &self,
        recipient: usize,
        phase: Phase,
        inbox: &mut Vec<Message>,
        expected: &[usize],
        want_xi: bool,
    ) -> Result<Vec<Payload>, NetsimError> {
        let mut by_sender: BTreeMap<usize, Payload> = BTreeMap::new();
        let mut rest = Vec::new();
        for msg in inbox.drain(..) {
            let kind_matches = matches!(msg.payload, Payload::Xi(_)) == want_xi;
            if msg.phase != phase || !kind_matches {
                rest.push(msg);
                continue;
            }
            if msg.round != self.round {
                return Err(self.violation(phase, msg.sender, recipient, "stale round"));
            }
            if msg.recipient != recipient {
                return Err(self.violation(phase, msg.sender, recipient, "misrouted message"));
            }
            if expected.binary_search(&msg.sender).is_err() {
                return Err(self.violation(phase, msg.sender, recipient, "sender is not an expected neighbor"));
            }
            if by_sender.insert(msg.sender, msg.payload).is_some() {
                return Err(self.violation(phase, msg.sender, recipient, "duplicate message"));
            }
        }
        *inbox = rest;
        let mut out = Vec::with_capacity(expected.len());
        for &j in expected {
            match by_sender.remove(&j) {
                Some(p) => out.push(p),
                None => return Err(self.violation(phase, j, recipient, "missing message")),
            }
        }
        Ok(out)
    }

    /// Runs one synchronous round.
    pub fn run_round(&mut self) -> Result<RoundStats, NetsimError> {
        let mut stats = RoundStats::default();
        let round = self.round;
        let n = self.nodes.len();

        // Exchange λ^t and ξ^t.
        for i in 0..n {
            let node = &self.nodes[i];
            let mut out = Vec::new();
            for &j in &node.neighbors.all {
                out.push(Message {
                    round,
                    phase: Phase::LambdaExchange,
                    sender: i,
                    recipient: j,
                    payload: Payload::Lambda(node.lambda.clone()),
                });
            }
            for (&(j, _), xi) in node.neighbors.owned.iter().zip(&node.owned_xi) {
                out.push(Message {
                    round,
                    phase: Phase::LambdaExchange,
                    sender: i,
                    recipient: j,
                    payload: Payload::Xi(xi.clone()),
                });
            }
            for m in out {
                self.send(&mut stats, m)?;
            }
        }

        let mut updated = Vec::with_capacity(n);
        let mut leftovers = Vec::with_capacity(n);
        for i in 0..n {
            let mut inbox = self.transport.drain(i);
            let node = &self.nodes[i];
            let lam = self.collect(i, Phase::LambdaExchange, &mut inbox, &node.neighbors.all, false)?;
            let senders: Vec<usize> = node.neighbors.incoming.iter().map(|&(j, _)| j).collect();
            let xis = self.collect(i, Phase::LambdaExchange, &mut inbox, &senders, true)?;
            leftovers.push(inbox);

            let neighbor_lambda: Vec<&AgentDual> = lam
                .iter()
                .map(|p| match p {
                    Payload::Lambda(l) => l,
                    Payload::Xi(_) => unreachable!("filtered by kind"),
                })
                .collect();
            let incoming: Vec<&Vector> = xis
                .iter()
                .map(|p| match p {
                    Payload::Xi(x) => x,
                    Payload::Lambda(_) => unreachable!("filtered by kind"),
                })
                .collect();
            let owned: Vec<&Vector> = node.owned_xi.iter().collect();
            let inputs = LocalInputs {
                neighbors: &neighbor_lambda,
                owned_xi: &owned,
                incoming_xi: &incoming,
            };
            updated.push(lambda_update(&node.problem, &node.b, &node.lambda, inputs, &self.steps)?);
        }
        for (i, inbox) in leftovers.into_iter().enumerate() {
            if let Some(m) = inbox.first() {
                return Err(self.violation(m.phase, m.sender, i, "unexpected message"));
            }
        }
        for (node, l) in self.nodes.iter_mut().zip(updated) {
            node.lambda = l;
        }

        // Send λ^{t+1} to the owners of incoming edges, then update ξ.
        for i in 0..n {
            let node = &self.nodes[i];
            let out: Vec<Message> = node
                .neighbors
                .incoming
                .iter()
                .map(|&(j, _)| Message {
                    round,
                    phase: Phase::LambdaPlusExchange,
                    sender: i,
                    recipient: j,
                    payload: Payload::Lambda(node.lambda.clone()),
                })
                .collect();
            for m in out {
                self.send(&mut stats, m)?;
            }
        }
        let gamma = self.steps.gamma;
        for i in 0..n {
            let mut inbox = self.transport.drain(i);
            let peers: Vec<usize> = self.nodes[i].neighbors.owned.iter().map(|&(j, _)| j).collect();
            let lam = self.collect(i, Phase::LambdaPlusExchange, &mut inbox, &peers, false)?;
            if let Some(m) = inbox.first() {
                return Err(self.violation(m.phase, m.sender, i, "unexpected message"));
            }
            let node = &mut self.nodes[i];
            for (xi, p) in node.owned_xi.iter_mut().zip(&lam) {
                if let Payload::Lambda(peer) = p {
                    *xi = xi_update(xi, &node.lambda.theta, &peer.theta, gamma);
                }
            }
        }

        self.round += 1;
        self.last_stats = stats;
        Ok(stats)
    }

    pub fn run(&mut self, rounds: usize) -> Result<(), NetsimError> {
        for _ in 0..rounds {
            self.run_round()?;
        }
        Ok(())
    }
}
