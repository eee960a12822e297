//! Undirected CARP instances and their line-oriented text format.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{CarpError, Result};

/// An undirected edge. Traversal cost is the same in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub cost: i64,
    pub demand: u32,
    pub required: bool,
}

impl Edge {
    pub fn required(u: usize, v: usize, cost: i64, demand: u32) -> Self {
        Edge {
            u,
            v,
            cost,
            demand,
            required: true,
        }
    }

    pub fn deadhead(u: usize, v: usize, cost: i64) -> Self {
        Edge {
            u,
            v,
            cost,
            demand: 0,
            required: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub name: String,
    pub node_count: usize,
    pub depot: usize,
    pub capacity: u32,
    pub edges: Vec<Edge>,
}

/// A broken instance invariant. Returned as data by [`Instance::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoNodes,
    ZeroCapacity,
    DepotOutOfRange { depot: usize },
    EndpointOutOfRange { edge: usize, node: usize },
    SelfLoop { edge: usize },
    NonPositiveCost { edge: usize, cost: i64 },
    DemandOutOfRange { edge: usize, demand: u32, capacity: u32 },
    RequiredFlagMismatch { edge: usize },
    Unreachable { node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoNodes => write!(f, "instance has no nodes"),
            Violation::ZeroCapacity => write!(f, "capacity must be positive"),
            Violation::DepotOutOfRange { depot } => write!(f, "depot {depot} out of range"),
            Violation::EndpointOutOfRange { edge, node } => {
                write!(f, "edge {edge}: endpoint {node} out of range")
            }
            Violation::SelfLoop { edge } => write!(f, "edge {edge} is a self-loop"),
            Violation::NonPositiveCost { edge, cost } => {
                write!(f, "edge {edge}: cost {cost} is not positive")
            }
            Violation::DemandOutOfRange {
                edge,
                demand,
                capacity,
            } => write!(f, "edge {edge}: demand {demand} outside [1, {capacity}]"),
            Violation::RequiredFlagMismatch { edge } => {
                write!(f, "edge {edge}: required flag disagrees with demand")
            }
            Violation::Unreachable { node } => write!(f, "node {node} unreachable from depot"),
        }
    }
}

impl Instance {
    pub fn required_edges(&self) -> impl Iterator<Item = (usize, &Edge)> + '_ {
        self.edges.iter().enumerate().filter(|(_, e)| e.required)
    }

    pub fn required_count(&self) -> usize {
        self.edges.iter().filter(|e| e.required).count()
    }

    /// Sum of required-edge costs. Every feasible solution pays exactly this
    /// much for service, whatever the traversal directions.
    pub fn service_cost(&self) -> i64 {
        self.required_edges().map(|(_, e)| e.cost).sum()
    }

    pub fn total_demand(&self) -> u64 {
        self.required_edges().map(|(_, e)| e.demand as u64).sum()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.node_count == 0 {
            out.push(Violation::NoNodes);
        }
        if self.capacity == 0 {
            out.push(Violation::ZeroCapacity);
        }
        if self.depot >= self.node_count {
            out.push(Violation::DepotOutOfRange { depot: self.depot });
        }
        for (k, e) in self.edges.iter().enumerate() {
            for node in [e.u, e.v] {
                if node >= self.node_count {
                    out.push(Violation::EndpointOutOfRange { edge: k, node });
                }
            }
            if e.u == e.v {
                out.push(Violation::SelfLoop { edge: k });
            }
            if e.cost <= 0 {
                out.push(Violation::NonPositiveCost {
                    edge: k,
                    cost: e.cost,
                });
            }
            if e.required != (e.demand > 0) {
                out.push(Violation::RequiredFlagMismatch { edge: k });
            }
            if e.required && (e.demand == 0 || e.demand > self.capacity) {
                out.push(Violation::DemandOutOfRange {
                    edge: k,
                    demand: e.demand,
                    capacity: self.capacity,
                });
            }
        }
        if self.depot < self.node_count {
            let reached = self.reachable_from(self.depot);
            out.extend(
                reached
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| !**r)
                    .map(|(node, _)| Violation::Unreachable { node }),
            );
        }
        out
    }

    /// Returns an error carrying every violation when the instance is invalid.
    pub fn check(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            Err(CarpError::InvalidInstance(msg.join("; ")))
        }
    }

    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut adj = vec![Vec::new(); self.node_count];
        for e in &self.edges {
            if e.u < self.node_count && e.v < self.node_count {
                adj[e.u].push(e.v);
                adj[e.v].push(e.u);
            }
        }
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(n) = queue.pop_front() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// Parses the line-oriented instance format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Instance> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let mut header = |key: &str| -> Result<(usize, String)> {
            let (no, line) = lines.next().ok_or(CarpError::Format {
                line: 0,
                message: format!("unexpected end of input, expected {key}"),
            })?;
            let rest = line
                .strip_prefix(key)
                .filter(|r| r.is_empty() || r.starts_with(char::is_whitespace))
                .ok_or_else(|| CarpError::Format {
                    line: no,
                    message: format!("expected `{key}`, found `{line}`"),
                })?;
            Ok((no, rest.trim().to_string()))
        };
        let number = |(no, s): (usize, String)| -> Result<usize> {
            s.parse().map_err(|_| CarpError::Format {
                line: no,
                message: format!("expected a nonnegative integer, found `{s}`"),
            })
        };

        let (_, name) = header("NAME")?;
        let node_count = number(header("VERTICES")?)?;
        let depot = number(header("DEPOT")?)?;
        let capacity = number(header("CAPACITY")?)?;
        let edge_count = number(header("EDGES")?)?;
        let capacity = u32::try_from(capacity).map_err(|_| CarpError::Format {
            line: 0,
            message: "capacity too large".into(),
        })?;

        let mut edges = Vec::with_capacity(edge_count);
        for _ in 0..edge_count {
            let (no, line) = lines.next().ok_or(CarpError::Format {
                line: 0,
                message: format!("expected {edge_count} edge lines"),
            })?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |message: String| CarpError::Format { line: no, message };
            if fields.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", fields.len())));
            }
            let int = |s: &str| -> Result<i64> {
                s.parse::<i64>()
                    .map_err(|_| bad(format!("`{s}` is not an integer")))
            };
            let (u, v, cost, demand, req) = (
                int(fields[0])?,
                int(fields[1])?,
                int(fields[2])?,
                int(fields[3])?,
                int(fields[4])?,
            );
            if u < 0 || v < 0 || demand < 0 || demand > u32::MAX as i64 {
                return Err(bad("negative node index or demand".into()));
            }
            let required = match req {
                0 => false,
                1 => true,
                _ => return Err(bad(format!("required flag must be 0 or 1, found {req}"))),
            };
            edges.push(Edge {
                u: u as usize,
                v: v as usize,
                cost,
                demand: demand as u32,
                required,
            });
        }
        match lines.next() {
            Some((_, "END")) => {}
            Some((no, other)) => {
                return Err(CarpError::Format {
                    line: no,
                    message: format!("expected `END`, found `{other}`"),
                })
            }
            None => {
                return Err(CarpError::Format {
                    line: 0,
                    message: "missing `END`".into(),
                })
            }
        }
        if let Some((no, other)) = lines.next() {
            return Err(CarpError::Format {
                line: no,
                message: format!("trailing content `{other}`"),
            });
        }
        Ok(Instance {
            name,
            node_count,
            depot,
            capacity,
            edges,
        })
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "NAME {}", self.name);
        let _ = writeln!(s, "VERTICES {}", self.node_count);
        let _ = writeln!(s, "DEPOT {}", self.depot);
        let _ = writeln!(s, "CAPACITY {}", self.capacity);
        let _ = writeln!(s, "EDGES {}", self.edges.len());
        for e in &self.edges {
            let _ = writeln!(
                s,
                "{} {} {} {} {}",
                e.u, e.v, e.cost, e.demand, e.required as u8
            );
        }
        s.push_str("END\n");
        s
    }
}
