//! Synthetic growing-KG snapshot sequences.
//!
//! Carves a single base triple file into an N-snapshot sequence whose growth
//! is dominated by one rationed resource: new entities, new relations, or new
//! facts, plus size-shaped variants where the per-snapshot triple count stays
//! equal, doubles, or halves. Snapshot 0 is seeded by breadth-first expansion
//! from a random root; every later delta grows from the already-known entity
//! set so the graph stays connected.

use std::collections::VecDeque;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::SnapshotSequence;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthKind {
    /// New entities are rationed per snapshot; relations stay near-constant.
    EntityGrowth,
    /// New relations are rationed per snapshot.
    RelationGrowth,
    /// Triple counts are rationed; entity/relation growth is minimized.
    FactGrowth,
    /// Alternates the rationed resource (entity, relation, fact) per snapshot.
    Hybrid,
    /// |ΔS_i| equal across snapshots.
    EqualSize,
    /// |ΔS_i| roughly doubles each snapshot.
    IncreasingSize,
    /// |ΔS_i| roughly halves each snapshot.
    DecreasingSize,
}

impl GrowthKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GrowthKind::EntityGrowth => "entity-growth",
            GrowthKind::RelationGrowth => "relation-growth",
            GrowthKind::FactGrowth => "fact-growth",
            GrowthKind::Hybrid => "hybrid",
            GrowthKind::EqualSize => "equal-size",
            GrowthKind::IncreasingSize => "increasing-size",
            GrowthKind::DecreasingSize => "decreasing-size",
        }
    }
}

impl std::str::FromStr for GrowthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "entity-growth" => GrowthKind::EntityGrowth,
            "relation-growth" => GrowthKind::RelationGrowth,
            "fact-growth" => GrowthKind::FactGrowth,
            "hybrid" => GrowthKind::Hybrid,
            "equal-size" => GrowthKind::EqualSize,
            "increasing-size" => GrowthKind::IncreasingSize,
            "decreasing-size" => GrowthKind::DecreasingSize,
            other => return Err(Error::Config(format!("unknown growth kind `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthScenario {
    pub kind: GrowthKind,
    pub n_snapshots: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub valid_fraction: f64,
}

impl GrowthScenario {
    pub fn new(kind: GrowthKind, n_snapshots: usize, seed: u64) -> Self {
        GrowthScenario {
            kind,
            n_snapshots,
            seed,
            test_fraction: 0.1,
            valid_fraction: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_snapshots < 2 {
            return Err(Error::Config("n_snapshots must be at least 2".into()));
        }
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.test_fraction) || !ok(self.valid_fraction) {
            return Err(Error::Config(
                "test_fraction and valid_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.test_fraction + self.valid_fraction >= 1.0 {
            return Err(Error::Config(
                "test_fraction + valid_fraction must be below 1".into(),
            ));
        }
        Ok(())
    }
}

/// Reads a single TSV triple file (head<TAB>relation<TAB>tail per line).
pub fn read_triple_file(path: &Path) -> Result<Vec<(String, String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(h), Some(r), Some(t), None)
                if !h.is_empty() && !r.is_empty() && !t.is_empty() =>
            {
                out.push((h.to_owned(), r.to_owned(), t.to_owned()))
            }
            _ => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: "expected exactly three non-empty tab-separated fields".into(),
                })
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Base graph indexing
// ---------------------------------------------------------------------------

struct BaseTriple {
    head: usize,
    relation: usize,
    tail: usize,
}

struct BaseGraph {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    triples: Vec<BaseTriple>,
    /// Triple indices incident to each entity, in base order.
    incident: Vec<Vec<usize>>,
    /// Entities of the largest connected component.
    in_cc: Vec<bool>,
    cc_entities: usize,
    cc_triples: usize,
}

impl BaseGraph {
    fn build(base: &[(String, String, String)]) -> BaseGraph {
        let mut entity_ids = std::collections::HashMap::new();
        let mut relation_ids = std::collections::HashMap::new();
        let mut entity_names = Vec::new();
        let mut relation_names = Vec::new();
        let mut triples = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (h, r, t) in base {
            if !seen.insert((h.as_str(), r.as_str(), t.as_str())) {
                continue; // base files may repeat lines; keep the first
            }
            let mut ent = |name: &str| -> usize {
                *entity_ids.entry(name.to_owned()).or_insert_with(|| {
                    entity_names.push(name.to_owned());
                    entity_names.len() - 1
                })
            };
            let head = ent(h);
            let tail = ent(t);
            let relation = *relation_ids.entry(r.clone()).or_insert_with(|| {
                relation_names.push(r.clone());
                relation_names.len() - 1
            });
            triples.push(BaseTriple {
                head,
                relation,
                tail,
            });
        }
        let mut incident = vec![Vec::new(); entity_names.len()];
        for (i, t) in triples.iter().enumerate() {
            incident[t.head].push(i);
            if t.tail != t.head {
                incident[t.tail].push(i);
            }
        }
        // Largest connected component over the undirected entity graph.
        let n = entity_names.len();
        let mut comp = vec![usize::MAX; n];
        let mut best = (0usize, 0usize); // (size, representative component id)
        let mut next_comp = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut size = 0;
            let mut queue = VecDeque::from([start]);
            comp[start] = next_comp;
            while let Some(e) = queue.pop_front() {
                size += 1;
                for &ti in &incident[e] {
                    let t = &triples[ti];
                    for other in [t.head, t.tail] {
                        if comp[other] == usize::MAX {
                            comp[other] = next_comp;
                            queue.push_back(other);
                        }
                    }
                }
            }
            if size > best.0 {
                best = (size, next_comp);
            }
            next_comp += 1;
        }
        let in_cc: Vec<bool> = comp.iter().map(|&c| c == best.1).collect();
        let cc_triples = triples.iter().filter(|t| in_cc[t.head]).count();
        BaseGraph {
            entity_names,
            relation_names,
            triples,
            incident,
            in_cc,
            cc_entities: best.0,
            cc_triples,
        }
    }

    fn name_triple(&self, idx: usize) -> (String, String, String) {
        let t = &self.triples[idx];
        (
            self.entity_names[t.head].clone(),
            self.relation_names[t.relation].clone(),
            self.entity_names[t.tail].clone(),
        )
    }
}

// ---------------------------------------------------------------------------
// Sequential BFS admission
// ---------------------------------------------------------------------------

/// How the BFS frontier is consumed within a snapshot.
#[derive(Clone, Copy, PartialEq)]
enum PopOrder {
    /// Push-order FIFO over the whole frontier.
    Bfs,
    /// Entity-opening triples before settled ones: front-loads the entity
    /// vocabulary so later snapshots mostly add facts among known entities.
    OpeningFirst,
}

/// Per-snapshot admission limits; absent fields never bind.
#[derive(Default, Clone, Copy)]
struct Ration {
    triples: Option<usize>,
    new_entities: Option<usize>,
    new_relations: Option<usize>,
}

impl Ration {
    fn triples(k: usize) -> Self {
        Ration {
            triples: Some(k),
            ..Ration::default()
        }
    }

    fn all() -> Self {
        Ration::default()
    }
}

struct Admission<'a> {
    g: &'a BaseGraph,
    known_entity: Vec<bool>,
    known_relation: Vec<bool>,
    assigned: Vec<bool>,
    /// (push sequence number, triple index); both endpoints known at push.
    ready_both: VecDeque<(u64, usize)>,
    /// (push sequence number, triple index); one endpoint known at push.
    ready_one: VecDeque<(u64, usize)>,
    push_seq: u64,
    n_assigned: usize,
}

impl<'a> Admission<'a> {
    fn new(g: &'a BaseGraph) -> Self {
        Admission {
            g,
            known_entity: vec![false; g.entity_names.len()],
            known_relation: vec![false; g.relation_names.len()],
            assigned: vec![false; g.triples.len()],
            ready_both: VecDeque::new(),
            ready_one: VecDeque::new(),
            push_seq: 0,
            n_assigned: 0,
        }
    }

    fn open_entity(&mut self, e: usize) {
        if self.known_entity[e] {
            return;
        }
        self.known_entity[e] = true;
        for i in 0..self.g.incident[e].len() {
            let ti = self.g.incident[e][i];
            if self.assigned[ti] {
                continue;
            }
            let t = &self.g.triples[ti];
            let both = self.known_entity[t.head] && self.known_entity[t.tail];
            let entry = (self.push_seq, ti);
            self.push_seq += 1;
            if both {
                self.ready_both.push_back(entry);
            } else {
                self.ready_one.push_back(entry);
            }
        }
    }

    fn pop(&mut self, order: PopOrder) -> Option<usize> {
        loop {
            let next = match order {
                // Open new entities as early as possible. Entries whose
                // second endpoint opened since they were queued no longer
                // open anything; they migrate to the settled queue.
                PopOrder::OpeningFirst => loop {
                    match self.ready_one.pop_front() {
                        Some((_, ti)) if self.assigned[ti] => continue,
                        Some(entry) if self.entity_need(entry.1) == 0 => {
                            self.ready_both.push_back(entry);
                            continue;
                        }
                        Some((_, ti)) => break Some(ti),
                        None => break self.ready_both.pop_front().map(|(_, ti)| ti),
                    }
                },
                PopOrder::Bfs => {
                    // Plain FIFO across both queues, by push order.
                    match (self.ready_both.front(), self.ready_one.front()) {
                        (Some(&(a, _)), Some(&(b, _))) => {
                            if a < b {
                                self.ready_both.pop_front().map(|(_, ti)| ti)
                            } else {
                                self.ready_one.pop_front().map(|(_, ti)| ti)
                            }
                        }
                        (Some(_), None) => self.ready_both.pop_front().map(|(_, ti)| ti),
                        (None, Some(_)) => self.ready_one.pop_front().map(|(_, ti)| ti),
                        (None, None) => None,
                    }
                }
            };
            match next {
                None => return None,
                Some(ti) if self.assigned[ti] => continue,
                Some(ti) => return Some(ti),
            }
        }
    }

    fn entity_need(&self, ti: usize) -> usize {
        let t = &self.g.triples[ti];
        let mut need = 0;
        if !self.known_entity[t.head] {
            need += 1;
        }
        if !self.known_entity[t.tail] && t.tail != t.head {
            need += 1;
        }
        need
    }

    fn admit(&mut self, ti: usize) {
        let (h, r, t) = {
            let t = &self.g.triples[ti];
            (t.head, t.relation, t.tail)
        };
        self.assigned[ti] = true;
        self.n_assigned += 1;
        self.known_relation[r] = true;
        self.open_entity(h);
        self.open_entity(t);
    }

    /// Admits triples into one snapshot until some ration binds or the
    /// frontier is exhausted. Returns admitted triple indices in order.
    fn run_snapshot(&mut self, ration: Ration, order: PopOrder) -> Vec<usize> {
        let mut delta = Vec::new();
        let mut opened_entities = 0usize;
        let mut opened_relations = 0usize;
        loop {
            if ration.triples.is_some_and(|k| delta.len() >= k) {
                break;
            }
            let Some(ti) = self.pop(order) else {
                break;
            };
            let e_need = self.entity_need(ti);
            let r_need = usize::from(!self.known_relation[self.g.triples[ti].relation]);
            let blows_budget = ration
                .new_entities
                .is_some_and(|b| opened_entities + e_need > b)
                || ration
                    .new_relations
                    .is_some_and(|b| opened_relations + r_need > b);
            if blows_budget {
                // Requeue the head and stop the snapshot.
                self.ready_one.push_front((0, ti));
                break;
            }
            opened_entities += e_need;
            opened_relations += r_need;
            self.admit(ti);
            delta.push(ti);
        }
        delta
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Balanced partition of `total` into `parts` (earlier parts take the rest).
fn balanced_sizes(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let rem = total % parts;
    (0..parts).map(|i| base + usize::from(i < rem)).collect()
}

/// Geometric targets c·2^i (or mirrored); the final slot absorbs rounding.
fn geometric_sizes(total: usize, parts: usize, increasing: bool) -> Vec<usize> {
    let denom = (1usize << parts) - 1;
    let c = (total / denom).max(1);
    let mut sizes: Vec<usize> = (0..parts - 1)
        .map(|i| {
            let exp = if increasing { i } else { parts - 1 - i };
            c << exp
        })
        .collect();
    let used: usize = sizes.iter().sum();
    sizes.push(total.saturating_sub(used));
    sizes
}

pub fn generate_snapshots(
    base: &[(String, String, String)],
    scenario: &GrowthScenario,
) -> Result<SnapshotSequence> {
    scenario.validate()?;
    let n = scenario.n_snapshots;
    let g = BaseGraph::build(base);
    if g.triples.len() < n * 5 {
        return Err(Error::Infeasible(format!(
            "base graph has {} triples; {} snapshots need at least {}",
            g.triples.len(),
            n,
            n * 5
        )));
    }
    if g.cc_entities * 10 < g.entity_names.len() * 9 {
        return Err(Error::Infeasible(format!(
            "largest connected component covers {}/{} entities (< 90%)",
            g.cc_entities,
            g.entity_names.len()
        )));
    }
    match scenario.kind {
        GrowthKind::EntityGrowth | GrowthKind::Hybrid if g.cc_entities < n + 1 => {
            return Err(Error::Infeasible(format!(
                "{} with {n} snapshots needs more than {n} entities (component has {})",
                scenario.kind.as_str(),
                g.cc_entities
            )));
        }
        GrowthKind::RelationGrowth if g.relation_names.len() < n => {
            return Err(Error::Infeasible(format!(
                "relation-growth with {n} snapshots needs at least {n} relations (base has {})",
                g.relation_names.len()
            )));
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let root = pick_root(&g, &mut rng);

    let deltas: Vec<Vec<usize>> = match scenario.kind {
        GrowthKind::EntityGrowth => entity_growth_deltas(&g, root, n)?,
        GrowthKind::RelationGrowth => relation_growth_deltas(&g, n)?,
        GrowthKind::FactGrowth => {
            let sizes = balanced_sizes(g.cc_triples, n);
            admission_deltas(
                &g,
                root,
                n,
                move |i, _, _| Ration::triples(sizes[i]),
                PopOrder::OpeningFirst,
            )
        }
        GrowthKind::EqualSize => {
            let sizes = balanced_sizes(g.cc_triples, n);
            admission_deltas(
                &g,
                root,
                n,
                move |i, _, _| Ration::triples(sizes[i]),
                PopOrder::Bfs,
            )
        }
        GrowthKind::IncreasingSize => {
            let sizes = geometric_sizes(g.cc_triples, n, true);
            admission_deltas(
                &g,
                root,
                n,
                move |i, _, _| Ration::triples(sizes[i]),
                PopOrder::Bfs,
            )
        }
        GrowthKind::DecreasingSize => {
            let sizes = geometric_sizes(g.cc_triples, n, false);
            admission_deltas(
                &g,
                root,
                n,
                move |i, _, _| Ration::triples(sizes[i]),
                PopOrder::Bfs,
            )
        }
        GrowthKind::Hybrid => {
            // Each snapshot rations one resource but keeps the common triple
            // cap so a saturated resource cannot swallow the rest.
            admission_deltas(
                &g,
                root,
                n,
                |i, remaining, parts_left| {
                    let cap = (remaining.2 / parts_left).max(1);
                    let mut ration = Ration::triples(cap);
                    match i % 3 {
                        0 => ration.new_entities = Some((remaining.0 / parts_left).max(1)),
                        1 => ration.new_relations = Some((remaining.1 / parts_left).max(1)),
                        _ => {}
                    }
                    ration
                },
                PopOrder::Bfs,
            )
        }
    };

    // Any non-final empty delta cannot satisfy the growth shape.
    for (i, d) in deltas.iter().enumerate() {
        if d.is_empty() {
            return Err(Error::Infeasible(format!(
                "snapshot {i} received no triples; try fewer snapshots"
            )));
        }
    }

    assemble_sequence(&g, &deltas, scenario, &mut rng)
}

fn pick_root(g: &BaseGraph, rng: &mut ChaCha8Rng) -> usize {
    let cc: Vec<usize> = (0..g.entity_names.len()).filter(|&e| g.in_cc[e]).collect();
    cc[rng.gen_range(0..cc.len())]
}

/// Entity-rationed growth: entities take their birth snapshot from BFS order,
/// and a triple lands at the later of its endpoints' births. Every entity's
/// BFS discovery edge lands exactly at its birth snapshot, which keeps each
/// delta reachable from the previous snapshot's entities.
fn entity_growth_deltas(g: &BaseGraph, root: usize, n: usize) -> Result<Vec<Vec<usize>>> {
    let mut order = Vec::with_capacity(g.cc_entities);
    let mut seen = vec![false; g.entity_names.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(e) = queue.pop_front() {
        order.push(e);
        for &ti in &g.incident[e] {
            let t = &g.triples[ti];
            for other in [t.head, t.tail] {
                if !seen[other] {
                    seen[other] = true;
                    queue.push_back(other);
                }
            }
        }
    }
    let sizes = balanced_sizes(order.len(), n);
    if sizes.contains(&0) || sizes[0] < 2 {
        return Err(Error::Infeasible(format!(
            "entity-growth cannot give every one of {n} snapshots new entities \
             from {} entities",
            order.len()
        )));
    }
    let mut birth = vec![usize::MAX; g.entity_names.len()];
    let mut cursor = 0;
    for (snap, &size) in sizes.iter().enumerate() {
        for &e in &order[cursor..cursor + size] {
            birth[e] = snap;
        }
        cursor += size;
    }
    let mut deltas = vec![Vec::new(); n];
    for (ti, t) in g.triples.iter().enumerate() {
        if !g.in_cc[t.head] {
            continue;
        }
        deltas[birth[t.head].max(birth[t.tail])].push(ti);
    }
    Ok(deltas)
}

/// Relation-rationed growth: relations are split into near-equal blocks by
/// descending base frequency; a triple becomes eligible at its relation's
/// block and is admitted at the first eligible snapshot where it is reachable
/// from already-known entities (unreachable triples defer to the next one).
fn relation_growth_deltas(g: &BaseGraph, n: usize) -> Result<Vec<Vec<usize>>> {
    let mut freq = vec![0usize; g.relation_names.len()];
    for t in &g.triples {
        if g.in_cc[t.head] {
            freq[t.relation] += 1;
        }
    }
    let mut rels: Vec<usize> = (0..g.relation_names.len()).collect();
    rels.sort_by_key(|&r| (std::cmp::Reverse(freq[r]), r));
    let sizes = balanced_sizes(rels.len(), n);
    let mut block = vec![usize::MAX; rels.len()];
    let mut cursor = 0;
    for (snap, &size) in sizes.iter().enumerate() {
        for &r in &rels[cursor..cursor + size] {
            block[r] = snap;
        }
        cursor += size;
    }

    let mut deltas = vec![Vec::new(); n];
    let mut known = vec![false; g.entity_names.len()];
    let mut assigned = vec![false; g.triples.len()];
    let mut deferred: Vec<usize> = Vec::new();
    for snap in 0..n {
        let mut pool: Vec<usize> = std::mem::take(&mut deferred);
        pool.extend(
            (0..g.triples.len())
                .filter(|&ti| g.in_cc[g.triples[ti].head] && block[g.triples[ti].relation] == snap),
        );
        if snap == 0 {
            // Snapshot 0 has no prior entities; admit its whole block.
            for &ti in &pool {
                assigned[ti] = true;
                known[g.triples[ti].head] = true;
                known[g.triples[ti].tail] = true;
                deltas[0].push(ti);
            }
            continue;
        }
        // Fixed-point: admit while some triple touches a known entity.
        let mut progress = true;
        while progress {
            progress = false;
            let mut still = Vec::new();
            for ti in pool {
                let t = &g.triples[ti];
                if known[t.head] || known[t.tail] {
                    assigned[ti] = true;
                    known[t.head] = true;
                    known[t.tail] = true;
                    deltas[snap].push(ti);
                    progress = true;
                } else {
                    still.push(ti);
                }
            }
            pool = still;
        }
        deferred = pool;
    }
    if !deferred.is_empty() {
        // The component is connected, so the final fixed point admits all.
        return Err(Error::Infeasible(format!(
            "{} triples never became reachable; base graph is too fragmented",
            deferred.len()
        )));
    }
    Ok(deltas)
}

fn admission_deltas(
    g: &BaseGraph,
    root: usize,
    n: usize,
    ration_for: impl Fn(usize, (usize, usize, usize), usize) -> Ration,
    order: PopOrder,
) -> Vec<Vec<usize>> {
    let mut adm = Admission::new(g);
    adm.open_entity(root);
    let mut deltas = Vec::with_capacity(n);
    for i in 0..n {
        let remaining = (
            g.cc_entities - adm.known_entity.iter().filter(|&&k| k).count(),
            g.relation_names.len() - adm.known_relation.iter().filter(|&&k| k).count(),
            g.cc_triples - adm.n_assigned,
        );
        let ration = if i + 1 == n {
            Ration::all()
        } else {
            ration_for(i, remaining, n - i)
        };
        deltas.push(adm.run_snapshot(ration, order));
    }
    deltas
}

/// Assembles validated kgstore structures from delta triple-index lists,
/// splitting each delta into train/valid/test uniformly at random.
fn assemble_sequence(
    g: &BaseGraph,
    deltas: &[Vec<usize>],
    scenario: &GrowthScenario,
    rng: &mut ChaCha8Rng,
) -> Result<SnapshotSequence> {
    let mut named: Vec<[Vec<(String, String, String)>; 3]> = Vec::with_capacity(deltas.len());
    for delta in deltas {
        let mut splits: [Vec<(String, String, String)>; 3] = Default::default();
        for &ti in delta {
            let u: f64 = rng.gen();
            let slot = if u < scenario.test_fraction {
                2
            } else if u < scenario.test_fraction + scenario.valid_fraction {
                1
            } else {
                0
            };
            splits[slot].push(g.name_triple(ti));
        }
        // Training on an empty delta is a hard error downstream; make sure
        // every non-empty delta keeps at least one training triple.
        if splits[0].is_empty() {
            for slot in [2, 1] {
                if let Some(t) = splits[slot].pop() {
                    splits[0].push(t);
                    break;
                }
            }
        }
        named.push(splits);
    }
    SnapshotSequence::from_named_triples(&named)
}

// ---------------------------------------------------------------------------
// Validation report
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct SnapshotShape {
    pub snapshot: usize,
    pub new_entities: usize,
    pub new_relations: usize,
    pub new_triples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub shapes: Vec<SnapshotShape>,
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Reports containment plus the scenario's shape constraints. Failures are
/// carried in the report, not returned as errors.
pub fn validate_sequence(seq: &SnapshotSequence, scenario: &GrowthScenario) -> ValidationReport {
    let mut checks = Vec::new();
    let containment = seq.validate();
    checks.push(ValidationCheck {
        name: "containment".into(),
        passed: containment.is_ok(),
        detail: containment.err().map(|e| e.to_string()).unwrap_or_default(),
    });

    let n = seq.n_snapshots();
    let mut shapes = Vec::with_capacity(n);
    for i in 0..n {
        let d = match seq.deltas(i) {
            Ok(d) => d,
            Err(_) => break,
        };
        shapes.push(SnapshotShape {
            snapshot: i,
            new_entities: d.new_entities.len(),
            new_relations: d.new_relations.len(),
            new_triples: seq.snapshot(i).n_triples(),
        });
    }
    if shapes.len() == n {
        shape_checks(&shapes, scenario, &mut checks);
    }
    ValidationReport { shapes, checks }
}

fn shape_checks(
    shapes: &[SnapshotShape],
    scenario: &GrowthScenario,
    checks: &mut Vec<ValidationCheck>,
) {
    let total: usize = shapes.iter().map(|s| s.new_triples).sum();
    let n = shapes.len();
    let within = |value: usize, target: usize, frac: f64| -> bool {
        (value as f64 - target as f64).abs() <= frac * target as f64
    };
    let mut check = |name: &str, passed: bool, detail: String| {
        checks.push(ValidationCheck {
            name: name.into(),
            passed,
            detail,
        })
    };
    match scenario.kind {
        GrowthKind::EntityGrowth => {
            let strict = shapes.iter().all(|s| s.new_entities >= 1);
            check(
                "entities-strictly-increase",
                strict,
                format!(
                    "ΔE per snapshot: {:?}",
                    shapes.iter().map(|s| s.new_entities).collect::<Vec<_>>()
                ),
            );
            let total_rel: usize = shapes.iter().map(|s| s.new_relations).sum();
            let late_rel = total_rel - shapes[0].new_relations;
            let near_constant = late_rel <= (total_rel / 10).max(2);
            check(
                "relations-near-constant",
                near_constant,
                format!("{late_rel}/{total_rel} relations born after snapshot 0"),
            );
        }
        GrowthKind::RelationGrowth => {
            let grows = shapes.iter().all(|s| s.new_relations >= 1);
            check(
                "relations-grow-each-snapshot",
                grows,
                format!(
                    "ΔR per snapshot: {:?}",
                    shapes.iter().map(|s| s.new_relations).collect::<Vec<_>>()
                ),
            );
        }
        GrowthKind::FactGrowth | GrowthKind::EqualSize => {
            let frac = if scenario.kind == GrowthKind::EqualSize {
                0.05
            } else {
                0.10
            };
            let target = total / n;
            let ok = shapes.iter().all(|s| within(s.new_triples, target, frac));
            check(
                "triples-evenly-sized",
                ok,
                format!(
                    "ΔS per snapshot: {:?} (target {target} ±{}%)",
                    shapes.iter().map(|s| s.new_triples).collect::<Vec<_>>(),
                    (frac * 100.0) as u32
                ),
            );
        }
        GrowthKind::Hybrid => {
            let ok = shapes.iter().all(|s| s.new_triples > 0);
            check(
                "all-snapshots-nonempty",
                ok,
                format!(
                    "ΔS per snapshot: {:?}",
                    shapes.iter().map(|s| s.new_triples).collect::<Vec<_>>()
                ),
            );
        }
        GrowthKind::IncreasingSize | GrowthKind::DecreasingSize => {
            let increasing = scenario.kind == GrowthKind::IncreasingSize;
            let targets = geometric_sizes(total, n, increasing);
            let ok = shapes
                .iter()
                .zip(&targets)
                .all(|(s, &t)| within(s.new_triples, t, 0.10));
            check(
                "triples-geometric",
                ok,
                format!(
                    "ΔS per snapshot: {:?} (targets {targets:?} ±10%)",
                    shapes.iter().map(|s| s.new_triples).collect::<Vec<_>>()
                ),
            );
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Erdős–Rényi-ish connected base: a random tree plus extra random edges.
    pub(crate) fn random_connected_base(
        n_entities: usize,
        n_relations: usize,
        n_triples: usize,
        seed: u64,
    ) -> Vec<(String, String, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for e in 1..n_entities {
            let parent = rng.gen_range(0..e);
            let r = rng.gen_range(0..n_relations);
            if seen.insert((parent, r, e)) {
                out.push((format!("e{parent}"), format!("r{r}"), format!("e{e}")));
            }
        }
        while out.len() < n_triples {
            let h = rng.gen_range(0..n_entities);
            let t = rng.gen_range(0..n_entities);
            let r = rng.gen_range(0..n_relations);
            if h != t && seen.insert((h, r, t)) {
                out.push((format!("e{h}"), format!("r{r}"), format!("e{t}")));
            }
        }
        out
    }

    fn scenario(kind: GrowthKind, n: usize, seed: u64) -> GrowthScenario {
        GrowthScenario::new(kind, n, seed)
    }

    #[test]
    fn equal_size_within_five_percent() {
        let base = random_connected_base(800, 12, 5000, 3);
        let sc = scenario(GrowthKind::EqualSize, 5, 17);
        let seq = generate_snapshots(&base, &sc).unwrap();
        let report = validate_sequence(&seq, &sc);
        assert!(report.passed(), "{:?}", report.checks);
        // Independent recount straight from the stored splits.
        for i in 0..5 {
            let count = seq.snapshot(i).n_triples();
            assert!(
                (count as f64 - 1000.0).abs() <= 50.0,
                "snapshot {i} has {count} triples"
            );
        }
    }

    #[test]
    fn increasing_size_matches_doubling_targets() {
        let base = random_connected_base(2000, 20, 15500, 5);
        let sc = scenario(GrowthKind::IncreasingSize, 5, 9);
        let seq = generate_snapshots(&base, &sc).unwrap();
        let report = validate_sequence(&seq, &sc);
        assert!(report.passed(), "{:?}", report.checks);
        let sizes: Vec<usize> = (0..5).map(|i| seq.snapshot(i).n_triples()).collect();
        for w in sizes.windows(2) {
            assert!(w[1] > w[0], "sizes not increasing: {sizes:?}");
        }
    }

    #[test]
    fn entity_growth_strictly_increases_entities() {
        let base = random_connected_base(600, 8, 3000, 11);
        let sc = scenario(GrowthKind::EntityGrowth, 4, 23);
        let seq = generate_snapshots(&base, &sc).unwrap();
        let report = validate_sequence(&seq, &sc);
        assert!(report.passed(), "{:?}", report.checks);
        for i in 1..4 {
            assert!(seq.entity_count(i) > seq.entity_count(i - 1));
        }
    }

    #[test]
    fn relation_growth_needs_enough_relations() {
        let base: Vec<_> = (0..40)
            .map(|i| {
                (
                    format!("e{i}"),
                    "r0".to_string(),
                    format!("e{}", (i + 1) % 40),
                )
            })
            .collect();
        let err =
            generate_snapshots(&base, &scenario(GrowthKind::RelationGrowth, 3, 1)).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
    }

    #[test]
    fn relation_growth_spreads_relations() {
        let base = random_connected_base(300, 24, 2400, 31);
        let sc = scenario(GrowthKind::RelationGrowth, 4, 7);
        let seq = generate_snapshots(&base, &sc).unwrap();
        let report = validate_sequence(&seq, &sc);
        assert!(report.passed(), "{:?}", report.checks);
    }

    #[test]
    fn fact_growth_on_clique_keeps_entity_set() {
        // 10 distinct triples over a 3-entity clique (two relation layers).
        let ents = ["a", "b", "c"];
        let mut base = Vec::new();
        'outer: for r in 0..2 {
            for h in ents {
                for t in ents {
                    if h != t {
                        base.push((h.to_string(), format!("p{r}"), t.to_string()));
                        if base.len() == 10 {
                            break 'outer;
                        }
                    }
                }
            }
        }
        assert_eq!(base.len(), 10);
        let sc = scenario(GrowthKind::FactGrowth, 2, 5);
        let seq = generate_snapshots(&base, &sc).unwrap();
        assert_eq!(seq.entity_count(0), 3);
        assert_eq!(
            seq.entity_count(1),
            3,
            "fact growth must not add entities here"
        );
    }

    #[test]
    fn too_small_base_is_rejected() {
        let base = random_connected_base(5, 2, 8, 1);
        let err = generate_snapshots(&base, &scenario(GrowthKind::EqualSize, 2, 1)).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn deterministic_given_seed() {
        let base = random_connected_base(400, 10, 2500, 77);
        let sc = scenario(GrowthKind::Hybrid, 4, 99);
        let a = generate_snapshots(&base, &sc).unwrap();
        let b = generate_snapshots(&base, &sc).unwrap();
        assert_eq!(a.n_snapshots(), b.n_snapshots());
        for i in 0..a.n_snapshots() {
            assert_eq!(a.snapshot(i).train, b.snapshot(i).train);
            assert_eq!(a.snapshot(i).valid, b.snapshot(i).valid);
            assert_eq!(a.snapshot(i).test, b.snapshot(i).test);
        }
        for e in 0..a.vocab().n_entities() as u32 {
            assert_eq!(a.vocab().entity_name(e), b.vocab().entity_name(e));
        }
    }

    #[test]
    fn hand_broken_sequence_fails_containment() {
        // entity-growth guarantees snapshot 2 actually has new entities.
        let base = random_connected_base(200, 6, 1200, 13);
        let sc = scenario(GrowthKind::EntityGrowth, 3, 4);
        let seq = generate_snapshots(&base, &sc).unwrap();
        let d2 = seq.deltas(2).unwrap();
        assert!(!d2.new_entities.is_empty());
        let victim_entity = d2.new_entities.start;
        let mut snaps = seq.snapshots().to_vec();
        // Drop every snapshot-2 triple that references the victim entity.
        let s2 = &mut snaps[2];
        for split in [&mut s2.train, &mut s2.valid, &mut s2.test] {
            split.retain(|t| t.head != victim_entity && t.tail != victim_entity);
        }
        let broken = SnapshotSequence::from_parts_unvalidated(snaps, seq.vocab().clone());
        let report = validate_sequence(&broken, &sc);
        assert!(!report.checks[0].passed, "containment should fail");
    }

    #[test]
    fn generated_deltas_reachable_by_fixed_point() {
        // Brute-force fixed-point labeling oracle over every generated delta.
        for kind in [
            GrowthKind::EntityGrowth,
            GrowthKind::FactGrowth,
            GrowthKind::RelationGrowth,
            GrowthKind::Hybrid,
            GrowthKind::EqualSize,
        ] {
            let base = random_connected_base(300, 10, 2000, 41);
            let sc = scenario(kind, 4, 2);
            let seq = generate_snapshots(&base, &sc).unwrap();
            for i in 1..seq.n_snapshots() {
                let mut known: std::collections::HashSet<u32> =
                    (0..seq.entity_count(i - 1) as u32).collect();
                let mut remaining: Vec<crate::kg::Triple> = seq
                    .snapshot(i)
                    .splits()
                    .into_iter()
                    .flatten()
                    .copied()
                    .collect();
                loop {
                    let before = remaining.len();
                    remaining.retain(|t| {
                        if known.contains(&t.head) || known.contains(&t.tail) {
                            known.insert(t.head);
                            known.insert(t.tail);
                            false
                        } else {
                            true
                        }
                    });
                    if remaining.len() == before {
                        break;
                    }
                }
                assert!(
                    remaining.is_empty(),
                    "kind {kind:?} snapshot {i}: {} unreachable triples",
                    remaining.len()
                );
            }
        }
    }
}


#[cfg(test)]
mod shape_tests {
    use super::*;
    use crate::snapgen::tests::random_connected_base;

    #[test]
    fn decreasing_size_halves_per_snapshot() {
        let base = random_connected_base(2000, 20, 15500, 5);
        let sc = GrowthScenario::new(GrowthKind::DecreasingSize, 5, 9);
        let seq = generate_snapshots(&base, &sc).unwrap();
        let report = validate_sequence(&seq, &sc);
        assert!(report.passed(), "{:?}", report.checks);
        let sizes: Vec<usize> = (0..5).map(|i| seq.snapshot(i).n_triples()).collect();
        for w in sizes.windows(2) {
            assert!(w[1] < w[0], "sizes not decreasing: {sizes:?}");
        }
    }

    #[test]
    fn hybrid_passes_its_shape_checks() {
        let base = random_connected_base(600, 14, 4200, 8);
        let sc = GrowthScenario::new(GrowthKind::Hybrid, 4, 13);
        let seq = generate_snapshots(&base, &sc).unwrap();
        let report = validate_sequence(&seq, &sc);
        assert!(report.passed(), "{:?}", report.checks);
    }
}
