//! A deterministic simulation of the MPC model: `p` servers, synchronized
//! rounds, message routing, and the ledger that defines the measured load.
//!
//! Drivers (primitives and join algorithms) move tuples between servers with
//! [`Cluster::send`], passing an explicit round index. The ledger accumulates
//! one unit per tuple and per standalone integer received, per
//! `(round, server)` cell; the measured load `L` is the maximum cell. Passing
//! the round explicitly lets logically-concurrent sub-programs (e.g. the
//! per-subproblem recursions of the hierarchical join) share rounds: each
//! starts from the same base round and the parent resumes from the maximum
//! round any of them reached, so both the round count and the per-round load
//! reflect parallel execution while the simulation itself runs sequentially.
//!
//! Local, zero-cost computation mutates per-server stores in place. In audit
//! mode every store change is checked to preserve tuple provenance: a tuple
//! may appear on a server only if its constituent input tuples were delivered
//! there (directly or inside a composite), and emissions are checked the same
//! way.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::data::{DataError, Instance, Tuple, Values};

/// Round index. Rounds are synchronized across all servers.
pub type Round = usize;

/// Provenance: ids of the original input tuples a (possibly composite) tuple
/// was built from.
pub type Prov = SmallVec<[u32; 4]>;

/// A tuple in flight or at rest on a server. `weight` is the semiring
/// annotation; `prov` tracks which input tuples it embeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTuple {
    pub values: Values,
    pub weight: i64,
    pub prov: Prov,
}

impl SimTuple {
    pub fn new(values: impl Into<Values>, weight: i64, prov: Prov) -> Self {
        SimTuple { values: values.into(), weight, prov }
    }

    /// Concatenation of two tuples' provenance, used by local joins.
    pub fn merged_prov(a: &SimTuple, b: &SimTuple) -> Prov {
        let mut p = a.prov.clone();
        p.extend_from_slice(&b.prov);
        p
    }
}

/// Handle to a distributed relation (one tuple vector per server).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RelId(usize);

/// An inclusive range of server indices allocated to a subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerRange {
    pub lo: usize,
    pub hi: usize,
}

impl ServerRange {
    pub fn new(lo: usize, hi: usize) -> Self {
        assert!(lo <= hi);
        ServerRange { lo, hi }
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.lo..=self.hi
    }

    pub fn contains(&self, s: usize) -> bool {
        self.lo <= s && s <= self.hi
    }

    /// The `i`-th server of the range, wrapping around.
    pub fn nth(&self, i: usize) -> usize {
        self.lo + i % self.width()
    }
}

/// Destination of emitted join results.
pub enum EmitSink {
    /// Count results only.
    Count(u64),
    /// Keep `(values-over-all-query-attributes, annotation)` pairs.
    Collect(Vec<(Values, i64)>),
    /// Append TSV rows to a file (header written by the caller).
    Tsv(std::io::BufWriter<fs::File>),
}

impl EmitSink {
    pub fn count() -> Self {
        EmitSink::Count(0)
    }

    pub fn collect() -> Self {
        EmitSink::Collect(Vec::new())
    }

    pub fn tsv(path: PathBuf, header: &[String]) -> Result<Self, DataError> {
        let io_err = |e: std::io::Error| DataError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        };
        let mut f = std::io::BufWriter::new(fs::File::create(&path).map_err(io_err)?);
        writeln!(f, "{}", header.join("\t")).map_err(io_err)?;
        Ok(EmitSink::Tsv(f))
    }

    pub fn emitted(&self) -> u64 {
        match self {
            EmitSink::Count(n) => *n,
            EmitSink::Collect(v) => v.len() as u64,
            EmitSink::Tsv(_) => 0,
        }
    }

    fn push(&mut self, values: &Values, weight: i64) {
        match self {
            EmitSink::Count(n) => *n += 1,
            EmitSink::Collect(v) => v.push((values.clone(), weight)),
            EmitSink::Tsv(f) => {
                let mut line = String::new();
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        line.push('\t');
                    }
                    let _ = write!(line, "{v}");
                }
                let _ = writeln!(f, "{line}\t{weight}");
            }
        }
    }
}

/// Cumulative load figures for one run.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub algorithm: String,
    pub query: String,
    pub input_size: u64,
    pub output_size: u64,
    pub p: usize,
    pub seed: u64,
    pub rounds: usize,
    pub l_measured: u64,
    pub l_predicted: f64,
    pub per_round_max: Vec<u64>,
}

impl LoadReport {
    pub const CSV_HEADER: &'static str =
        "algorithm,query,IN,OUT,p,seed,rounds,L_measured,L_predicted";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.3}",
            self.algorithm,
            self.query,
            self.input_size,
            self.output_size,
            self.p,
            self.seed,
            self.rounds,
            self.l_measured,
            self.l_predicted
        )
    }
}

/// The simulated cluster.
pub struct Cluster {
    p: usize,
    seed: u64,
    stores: Vec<Vec<Vec<SimTuple>>>,
    ledger: Vec<Vec<u64>>,
    rounds_used: Round,
    audit: bool,
    present: Vec<HashSet<u32>>,
    next_input_id: u32,
    pub low_parallelism_warning: bool,
}

impl Cluster {
    pub fn new(p: usize, seed: u64) -> Self {
        assert!(p >= 1);
        Cluster {
            p,
            seed,
            stores: Vec::new(),
            ledger: Vec::new(),
            rounds_used: 0,
            audit: false,
            present: vec![HashSet::new(); p],
            next_input_id: 0,
            low_parallelism_warning: false,
        }
    }

    /// Enables the provenance audit (checked stores and emissions).
    pub fn with_audit(mut self) -> Self {
        self.audit = true;
        self
    }

    pub fn audit_enabled(&self) -> bool {
        self.audit
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn all_servers(&self) -> ServerRange {
        ServerRange::new(0, self.p - 1)
    }

    /// Allocates an empty distributed relation.
    pub fn new_rel(&mut self) -> RelId {
        self.stores.push(vec![Vec::new(); self.p]);
        RelId(self.stores.len() - 1)
    }

    /// Releases a relation's storage (the handle stays valid but empty).
    pub fn drop_rel(&mut self, rel: RelId) {
        for s in &mut self.stores[rel.0] {
            s.clear();
            s.shrink_to_fit();
        }
    }

    pub fn tuples(&self, rel: RelId, server: usize) -> &[SimTuple] {
        &self.stores[rel.0][server]
    }

    /// Local (zero-cost) mutation of one server's store. Audit mode verifies
    /// afterwards that no unseen provenance appeared.
    pub fn tuples_mut(&mut self, rel: RelId, server: usize) -> &mut Vec<SimTuple> {
        &mut self.stores[rel.0][server]
    }

    /// Verifies a locally-constructed store against the provenance audit.
    pub fn audit_rel(&self, rel: RelId) {
        if !self.audit {
            return;
        }
        for s in 0..self.p {
            for t in &self.stores[rel.0][s] {
                for id in &t.prov {
                    assert!(
                        self.present[s].contains(id),
                        "audit: tuple {id} never delivered to server {s}"
                    );
                }
            }
        }
    }

    pub fn total_len(&self, rel: RelId) -> u64 {
        self.stores[rel.0].iter().map(|v| v.len() as u64).sum()
    }

    pub fn rel_is_empty(&self, rel: RelId) -> bool {
        self.stores[rel.0].iter().all(|v| v.is_empty())
    }

    fn charge(&mut self, at: Round, server: usize, units: u64) {
        while self.ledger.len() <= at {
            self.ledger.push(vec![0; self.p]);
        }
        self.ledger[at][server] += units;
        self.rounds_used = self.rounds_used.max(at + 1);
    }

    /// Marks a round as executed even if no message flows.
    pub fn advance(&mut self, at: Round) -> Round {
        while self.ledger.len() <= at {
            self.ledger.push(vec![0; self.p]);
        }
        self.rounds_used = self.rounds_used.max(at + 1);
        at + 1
    }

    /// One synchronized exchange: delivers each `(destination, tuple)` into
    /// `dst` and charges one unit per delivered tuple (self-sends included).
    /// Returns the next round index.
    pub fn send(
        &mut self,
        at: Round,
        dst: RelId,
        msgs: impl IntoIterator<Item = (usize, SimTuple)>,
    ) -> Round {
        for (server, t) in msgs {
            debug_assert!(server < self.p);
            self.charge(at, server, 1);
            if self.audit {
                for id in &t.prov {
                    self.present[server].insert(*id);
                }
            }
            self.stores[dst.0][server].push(t);
        }
        self.advance(at)
    }

    /// Charges standalone integers (statistics, splitters, offsets) received
    /// by servers in this round, without materializing them.
    pub fn charge_ints(&mut self, at: Round, per_server: impl IntoIterator<Item = (usize, u64)>) {
        for (server, n) in per_server {
            self.charge(at, server, n);
        }
    }

    /// Broadcast of one scalar to every server of `range`: each receives one
    /// integer unit. Returns the next round index.
    pub fn broadcast_scalar(&mut self, at: Round, range: ServerRange) -> Round {
        for s in range.iter() {
            self.charge(at, s, 1);
        }
        self.advance(at)
    }

    /// Loads an instance onto the cluster: a seeded shuffle followed by
    /// round-robin placement. Initial placement does not count toward the
    /// load (the ledger starts at round 0 untouched). Returns one relation
    /// handle per query edge.
    pub fn distribute_input(&mut self, inst: &Instance, seed: u64) -> Vec<RelId> {
        let rels: Vec<RelId> = inst.relations.iter().map(|_| self.new_rel()).collect();
        let mut all: Vec<(usize, &Tuple)> = Vec::new();
        for (e, rel) in inst.relations.iter().enumerate() {
            for t in &rel.tuples {
                all.push((e, t));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        all.shuffle(&mut rng);
        for (i, (e, t)) in all.into_iter().enumerate() {
            let server = i % self.p;
            let id = self.next_input_id;
            self.next_input_id += 1;
            if self.audit {
                self.present[server].insert(id);
            }
            self.stores[rels[e].0][server].push(SimTuple {
                values: t.values.clone(),
                weight: t.weight,
                prov: SmallVec::from_slice(&[id]),
            });
        }
        let in_per_p = inst.input_size() as f64 / self.p as f64;
        if (inst.input_size() as f64) < (self.p as f64).powf(1.1) && self.p > 1 {
            self.low_parallelism_warning = true;
        }
        let _ = in_per_p;
        rels
    }

    /// Emits one join result from `server`. Emission is free; in audit mode
    /// the constituent tuples must have been delivered to that server.
    pub fn emit(&self, server: usize, t: &SimTuple, sink: &mut EmitSink) {
        if self.audit {
            for id in &t.prov {
                assert!(
                    self.present[server].contains(id),
                    "audit: emit of tuple {id} not local to server {server}"
                );
            }
        }
        sink.push(&t.values, t.weight);
    }

    /// Measured load: the maximum units received by any server in any round.
    pub fn measured_load(&self) -> u64 {
        self.ledger
            .iter()
            .flat_map(|row| row.iter().copied())
            .max()
            .unwrap_or(0)
    }

    pub fn rounds_used(&self) -> Round {
        self.rounds_used
    }

    pub fn per_round_max(&self) -> Vec<u64> {
        self.ledger
            .iter()
            .map(|row| row.iter().copied().max().unwrap_or(0))
            .collect()
    }

    /// Builds a report for a finished run; requires at least one round.
    pub fn load_report(&self, algorithm: &str, query: &str, out: u64, seed: u64) -> LoadReport {
        assert!(self.rounds_used >= 1, "load_report requires at least one executed round");
        LoadReport {
            algorithm: algorithm.to_owned(),
            query: query.to_owned(),
            input_size: 0,
            output_size: out,
            p: self.p,
            seed,
            rounds: self.rounds_used,
            l_measured: self.measured_load(),
            l_predicted: 0.0,
            per_round_max: self.per_round_max(),
        }
    }

    /// Test hook: permutes every per-server tuple vector. Results of a
    /// correct driver must not depend on store order.
    pub fn scramble_store_order(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for store in &mut self.stores {
            for v in store.iter_mut() {
                v.shuffle(&mut rng);
            }
        }
    }
}

/// Deterministic 64-bit mixer used for seeded hash partitioning.
pub fn hash64(seed: u64, values: &[u64]) -> u64 {
    let mut h = seed ^ 0x51_7c_c1_b7_27_22_0a_95;
    for &v in values {
        let mut z = v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}
