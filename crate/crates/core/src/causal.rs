//! Constraint-based structure learning: Fisher-z partial-correlation tests,
//! PC-stable skeleton search with Meek orientation, and bootstrap arc
//! confidences.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{PrimeError, Result};
use crate::features::{pearson, AlignedDataset};
use crate::models::linear::fit_ols;
use crate::scoring::ScoreKind;

/// Correlation matrix of a set of named variables over `n` rows.
#[derive(Debug, Clone)]
pub struct CorrData {
    pub names: Vec<String>,
    pub corr: DMatrix<f64>,
    pub n: usize,
}

impl CorrData {
    /// `columns[j]` holds every row's value of variable `names[j]`.
    pub fn from_columns(names: &[String], columns: &[Vec<f64>]) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(PrimeError::Data(format!("{} names for {} columns", names.len(), columns.len())));
        }
        let p = names.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(PrimeError::Data("columns differ in length".into()));
        }
        let mut corr = DMatrix::identity(p, p);
        for i in 0..p {
            for j in i + 1..p {
                let r = pearson(&columns[i], &columns[j]).ok_or_else(|| {
                    PrimeError::Data(format!("cannot correlate `{}` with `{}`: zero variance", names[i], names[j]))
                })?;
                corr[(i, j)] = r;
                corr[(j, i)] = r;
            }
        }
        Ok(CorrData {
            names: names.to_vec(),
            corr,
            n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub partial_corr: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
}

/// Fisher-z test of `x ⟂ y | s`. Returns `Ok(None)` when the conditioning
/// submatrix is singular or `s` determines `x` or `y`; callers then keep the
/// edge.
pub fn ci_test(data: &CorrData, x: usize, y: usize, s: &[usize], alpha: f64) -> Result<Option<CiResult>> {
    if data.n <= s.len() + 3 {
        return Err(PrimeError::invalid(
            "rows",
            format!("{} rows cannot support a test conditioning on {} variables", data.n, s.len()),
        ));
    }
    let c = &data.corr;
    let rho = if s.is_empty() {
        c[(x, y)]
    } else {
        let k = s.len();
        let rss = DMatrix::from_fn(k, k, |i, j| c[(s[i], s[j])]);
        let rsx = DVector::from_fn(k, |i, _| c[(s[i], x)]);
        let rsy = DVector::from_fn(k, |i, _| c[(s[i], y)]);
        let Some(chol) = rss.cholesky() else {
            return Ok(None);
        };
        let a = chol.solve(&rsx);
        let b = chol.solve(&rsy);
        let vx = 1.0 - rsx.dot(&a);
        let vy = 1.0 - rsy.dot(&b);
        if !(vx > 1e-12 && vy > 1e-12) {
            return Ok(None);
        }
        (c[(x, y)] - rsx.dot(&b)) / (vx * vy).sqrt()
    };
    let rho = rho.clamp(-1.0, 1.0);
    let statistic = rho.atanh() * ((data.n - s.len() - 3) as f64).sqrt();
    let p_value = erfc(statistic.abs() / std::f64::consts::SQRT_2);
    Ok(Some(CiResult {
        partial_corr: rho,
        statistic,
        p_value,
        independent: p_value > alpha,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcOptions {
    pub alpha: f64,
    pub max_depth: usize,
}

impl Default for PcOptions {
    fn default() -> Self {
        PcOptions {
            alpha: 0.05,
            max_depth: 3,
        }
    }
}

/// One conditional-independence test the search performed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiRecord {
    pub x: String,
    pub y: String,
    pub given: Vec<String>,
    /// `None` when the test was skipped as singular.
    pub result: Option<CiResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub from: String,
    pub to: String,
    pub confidence: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sign: Option<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndirectedEdge {
    pub a: String,
    pub b: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dag {
    pub nodes: Vec<String>,
    pub arcs: Vec<Arc>,
    pub undirected: Vec<UndirectedEdge>,
    /// Skipped tests, orientation conflicts and cycle repairs.
    #[serde(default)]
    pub log: Vec<String>,
}

impl Dag {
    pub fn parents(&self, node: &str) -> Vec<&str> {
        self.arcs.iter().filter(|a| a.to == node).map(|a| a.from.as_str()).collect()
    }

    pub fn has_arc(&self, from: &str, to: &str) -> bool {
        self.arcs.iter().any(|a| a.from == from && a.to == to)
    }

    /// Unordered adjacencies, each pair name-sorted.
    pub fn skeleton(&self) -> BTreeSet<(String, String)> {
        let pair = |a: &str, b: &str| if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
        self.arcs
            .iter()
            .map(|a| pair(&a.from, &a.to))
            .chain(self.undirected.iter().map(|e| pair(&e.a, &e.b)))
            .collect()
    }

    /// True when the directed arcs admit a topological order.
    pub fn is_acyclic(&self) -> bool {
        let idx: BTreeMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let arcs: Vec<(usize, usize)> = self.arcs.iter().map(|a| (idx[a.from.as_str()], idx[a.to.as_str()])).collect();
        find_cycle(self.nodes.len(), &arcs).is_none()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_dot(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph \"{}\" {{", escape(title));
        let _ = writeln!(s, "  rankdir=LR;");
        for n in &self.nodes {
            let _ = writeln!(s, "  \"{}\";", escape(n));
        }
        for a in &self.arcs {
            let color = match a.sign {
                Some(s) if s < 0 => ", color=\"#b2182b\"",
                Some(_) => ", color=\"#2166ac\"",
                None => "",
            };
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [label=\"{:.2}\"{color}];",
                escape(&a.from),
                escape(&a.to),
                a.confidence
            );
        }
        for e in &self.undirected {
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [dir=none, style=dashed, label=\"{:.2}\"];",
                escape(&e.a),
                escape(&e.b),
                e.confidence
            );
        }
        s.push_str("}\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Some directed cycle among `arcs`, as arc indices.
fn find_cycle(p: usize, arcs: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); p];
    for (k, &(a, _)) in arcs.iter().enumerate() {
        out[a].push(k);
    }
    // 0 unvisited, 1 on stack, 2 done
    let mut state = vec![0u8; p];
    let mut via: Vec<Option<usize>> = vec![None; p];
    for root in 0..p {
        if state[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state[root] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < out[v].len() {
                let k = out[v][*next];
                *next += 1;
                let w = arcs[k].1;
                match state[w] {
                    0 => {
                        state[w] = 1;
                        via[w] = Some(k);
                        stack.push((w, 0));
                    }
                    1 => {
                        let mut cycle = vec![k];
                        let mut u = v;
                        while u != w {
                            let a = via[u].expect("stack nodes have an entry arc");
                            cycle.push(a);
                            u = arcs[a].0;
                        }
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                state[v] = 2;
                stack.pop();
            }
        }
    }
    None
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Mark {
    None,
    Undirected,
    /// Arrow from the row node to the column node.
    Out,
    /// Arrow from the column node into the row node.
    In,
}

struct Pdag {
    m: Vec<Vec<Mark>>,
}

impl Pdag {
    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.m[a][b] != Mark::None
    }
    fn undirected(&self, a: usize, b: usize) -> bool {
        self.m[a][b] == Mark::Undirected
    }
    fn directed(&self, a: usize, b: usize) -> bool {
        self.m[a][b] == Mark::Out
    }
    fn orient(&mut self, a: usize, b: usize) {
        self.m[a][b] = Mark::Out;
        self.m[b][a] = Mark::In;
    }
}

/// CPDAG from a single PC-stable pass, with its search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcResult {
    pub dag: Dag,
    pub trace: Vec<CiRecord>,
    /// Separating set per removed pair (pair name-sorted).
    pub sepsets: BTreeMap<String, Vec<String>>,
}

fn sepset_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}|{b}")
    } else {
        format!("{b}|{a}")
    }
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}

/// PC-stable. Adjacency sets are frozen at the start of each depth and
/// candidate conditioning sets are tried in name order, so the output does not
/// depend on the column order of `data`.
pub fn pc_stable(data: &CorrData, opts: PcOptions) -> Result<PcResult> {
    let p = data.names.len();
    if p < 2 {
        return Err(PrimeError::invalid("variables", "structure learning needs at least 2 variables"));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(PrimeError::invalid("alpha", format!("alpha must be in (0, 1), got {}", opts.alpha)));
    }
    let names = &data.names;
    // Variable indices sorted by name; every loop below walks this order.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| names[a].cmp(&names[b]));
    let rank: Vec<usize> = {
        let mut r = vec![0; p];
        for (pos, &v) in order.iter().enumerate() {
            r[v] = pos;
        }
        r
    };
    let by_name = |v: &mut Vec<usize>| v.sort_by_key(|&i| rank[i]);

    let mut adj = vec![vec![true; p]; p];
    for (i, row) in adj.iter_mut().enumerate() {
        row[i] = false;
    }
    let mut trace = Vec::new();
    let mut log = Vec::new();
    let mut sepset: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut strength = vec![vec![f64::INFINITY; p]; p];
    let key = |a: usize, b: usize| if rank[a] < rank[b] { (a, b) } else { (b, a) };

    for depth in 0..=opts.max_depth {
        let frozen = adj.clone();
        let neighbours = |v: usize, other: usize| -> Vec<usize> {
            let mut n: Vec<usize> = (0..p).filter(|&w| w != other && frozen[v][w]).collect();
            by_name(&mut n);
            n
        };
        let mut any_candidate = false;
        for (ia, &a) in order.iter().enumerate() {
            for &b in &order[ia + 1..] {
                if !frozen[a][b] {
                    continue;
                }
                let mut candidates: Vec<Vec<usize>> = Vec::new();
                for v in [a, b] {
                    let other = if v == a { b } else { a };
                    let nb = neighbours(v, other);
                    if nb.len() >= depth {
                        candidates.extend(combinations(&nb, depth));
                    }
                }
                if candidates.is_empty() {
                    continue;
                }
                any_candidate = true;
                candidates.sort_by(|x, y| x.iter().map(|&i| rank[i]).cmp(y.iter().map(|&i| rank[i])));
                candidates.dedup();
                for s in candidates {
                    let result = ci_test(data, a, b, &s, opts.alpha)?;
                    trace.push(CiRecord {
                        x: names[a].clone(),
                        y: names[b].clone(),
                        given: s.iter().map(|&i| names[i].clone()).collect(),
                        result,
                    });
                    match result {
                        None => log.push(format!(
                            "skipped singular test {} vs {} given {:?}; edge kept",
                            names[a],
                            names[b],
                            s.iter().map(|&i| names[i].as_str()).collect::<Vec<_>>()
                        )),
                        Some(r) if r.independent => {
                            adj[a][b] = false;
                            adj[b][a] = false;
                            sepset.insert(key(a, b), s);
                            break;
                        }
                        Some(r) => {
                            let st = r.statistic.abs().min(strength[a][b]);
                            strength[a][b] = st;
                            strength[b][a] = st;
                        }
                    }
                }
            }
        }
        if !any_candidate {
            break;
        }
    }

    let mut g = Pdag {
        m: (0..p)
            .map(|i| (0..p).map(|j| if adj[i][j] { Mark::Undirected } else { Mark::None }).collect())
            .collect(),
    };

    // Colliders x -> z <- y for unshielded x - z - y with z outside
    // sepset(x, y). Strongly supported colliders are oriented first: a
    // collider's strength is the weaker of its two edges, and an edge's
    // strength is the smallest |z| among the tests it survived. A later
    // collider never reverses an arc already placed.
    let mut colliders: Vec<(f64, usize, usize, usize)> = Vec::new();
    for &z in &order {
        for (ix, &x) in order.iter().enumerate() {
            for &y in &order[ix + 1..] {
                if x == z || y == z || !adj[x][z] || !adj[y][z] || adj[x][y] {
                    continue;
                }
                if sepset.get(&key(x, y)).is_some_and(|s| s.contains(&z)) {
                    continue;
                }
                colliders.push((strength[x][z].min(strength[y][z]), x, z, y));
            }
        }
    }
    colliders.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| (rank[a.2], rank[a.1], rank[a.3]).cmp(&(rank[b.2], rank[b.1], rank[b.3])))
    });
    for (_, x, z, y) in colliders {
        for t in [x, y] {
            match g.m[t][z] {
                Mark::Undirected => g.orient(t, z),
                Mark::In => log.push(format!(
                    "collider {}->{}<-{} conflicts with stronger {}->{}; kept the stronger arc",
                    names[x], names[z], names[y], names[z], names[t]
                )),
                _ => {}
            }
        }
    }

    meek_closure(&mut g, &order);

    let mut arcs = Vec::new();
    let mut undirected = Vec::new();
    for (ia, &a) in order.iter().enumerate() {
        for &b in &order[ia + 1..] {
            match g.m[a][b] {
                Mark::Out => arcs.push((a, b, 1.0)),
                Mark::In => arcs.push((b, a, 1.0)),
                Mark::Undirected => undirected.push((a, b, 1.0)),
                Mark::None => {}
            }
        }
    }
    let dag = assemble(names, arcs, undirected, log);
    let sepsets = sepset
        .into_iter()
        .map(|((a, b), s)| (sepset_key(&names[a], &names[b]), s.iter().map(|&i| names[i].clone()).collect()))
        .collect();
    Ok(PcResult { dag, trace, sepsets })
}

fn meek_closure(g: &mut Pdag, order: &[usize]) {
    loop {
        let mut changed = false;
        for &a in order {
            for &b in order {
                if a == b || !g.undirected(a, b) {
                    continue;
                }
                if meek_orients(g, a, b, order) {
                    g.orient(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Whether any of the four Meek rules forces the undirected edge a - b to a -> b.
fn meek_orients(g: &Pdag, a: usize, b: usize, order: &[usize]) -> bool {
    // R1: c -> a - b, c and b non-adjacent.
    if order.iter().any(|&c| c != b && g.directed(c, a) && !g.adjacent(c, b)) {
        return true;
    }
    // R2: a -> c -> b.
    if order.iter().any(|&c| g.directed(a, c) && g.directed(c, b)) {
        return true;
    }
    // R3: a - c -> b, a - d -> b, c and d non-adjacent.
    let mids: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&c| c != b && g.undirected(a, c) && g.directed(c, b))
        .collect();
    for (i, &c) in mids.iter().enumerate() {
        if mids[i + 1..].iter().any(|&d| !g.adjacent(c, d)) {
            return true;
        }
    }
    // R4: a - d -> c -> b, a adjacent to c, d and b non-adjacent.
    for &d in order {
        if d == b || !g.undirected(a, d) || g.adjacent(d, b) {
            continue;
        }
        if order.iter().any(|&c| c != a && g.directed(d, c) && g.directed(c, b) && g.adjacent(a, c)) {
            return true;
        }
    }
    false
}

/// Builds a `Dag`, removing the lowest-confidence arc of any directed cycle
/// until none remains. Ties remove the arc that sorts last by name.
fn assemble(
    names: &[String],
    mut arcs: Vec<(usize, usize, f64)>,
    undirected: Vec<(usize, usize, f64)>,
    mut log: Vec<String>,
) -> Dag {
    let p = names.len();
    loop {
        let pairs: Vec<(usize, usize)> = arcs.iter().map(|&(a, b, _)| (a, b)).collect();
        let Some(cycle) = find_cycle(p, &pairs) else { break };
        let victim = *cycle
            .iter()
            .min_by(|&&x, &&y| {
                arcs[x]
                    .2
                    .total_cmp(&arcs[y].2)
                    .then_with(|| (&names[arcs[y].0], &names[arcs[y].1]).cmp(&(&names[arcs[x].0], &names[arcs[x].1])))
            })
            .expect("cycles are nonempty");
        let (a, b, c) = arcs.remove(victim);
        log.push(format!("removed arc {}->{} (confidence {c:.3}) to break a cycle", names[a], names[b]));
    }
    let mut arcs: Vec<Arc> = arcs
        .into_iter()
        .map(|(a, b, confidence)| Arc {
            from: names[a].clone(),
            to: names[b].clone(),
            confidence,
            sign: None,
        })
        .collect();
    arcs.sort_by(|x, y| (&x.from, &x.to).cmp(&(&y.from, &y.to)));
    let mut undirected: Vec<UndirectedEdge> = undirected
        .into_iter()
        .map(|(a, b, confidence)| {
            let (a, b) = if names[a] <= names[b] { (a, b) } else { (b, a) };
            UndirectedEdge {
                a: names[a].clone(),
                b: names[b].clone(),
                confidence,
            }
        })
        .collect();
    undirected.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
    let mut nodes = names.to_vec();
    nodes.sort();
    Dag {
        nodes,
        arcs,
        undirected,
        log,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub subsample_fraction: f64,
    pub threshold: f64,
    pub seed: u64,
    pub pc: PcOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: 100,
            subsample_fraction: 0.9,
            threshold: 0.5,
            seed: 42,
            pc: PcOptions::default(),
        }
    }
}

/// PC-stable over `replicates` row subsamples drawn without replacement.
///
/// Arc confidence is the fraction of replicates containing that directed
/// arc; arcs at or above the threshold are kept. When both directions pass,
/// the more frequent one wins and an exact tie becomes an undirected edge.
/// Pairs adjacent in at least a threshold share of replicates but with no
/// kept direction are reported undirected with their adjacency frequency.
pub fn bootstrap_learn(names: &[String], columns: &[Vec<f64>], opts: BootstrapOptions) -> Result<Dag> {
    if opts.replicates == 0 {
        return Err(PrimeError::invalid("replicates", "need at least one bootstrap replicate"));
    }
    if !(opts.subsample_fraction > 0.0 && opts.subsample_fraction <= 1.0) {
        return Err(PrimeError::invalid("subsample_fraction", "must be in (0, 1]"));
    }
    if !(opts.threshold > 0.0 && opts.threshold <= 1.0) {
        return Err(PrimeError::invalid("threshold", "must be in (0, 1]"));
    }
    let n = columns.first().map_or(0, Vec::len);
    let m = ((opts.subsample_fraction * n as f64).round() as usize).min(n);
    if m == 0 {
        return Err(PrimeError::invalid("subsample_fraction", "subsample is empty"));
    }
    let p = names.len();
    let runs: Vec<Dag> = (0..opts.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let mut rows = sample(&mut rng, n, m).into_vec();
            rows.sort_unstable();
            let sub: Vec<Vec<f64>> = columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect();
            let data = CorrData::from_columns(names, &sub)?;
            Ok(pc_stable(&data, opts.pc)?.dag)
        })
        .collect::<Result<_>>()?;

    let idx: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut directed = vec![vec![0usize; p]; p];
    let mut adjacent = vec![vec![0usize; p]; p];
    let mut log = Vec::new();
    for (r, dag) in runs.iter().enumerate() {
        for a in &dag.arcs {
            let (i, j) = (idx[a.from.as_str()], idx[a.to.as_str()]);
            directed[i][j] += 1;
            adjacent[i][j] += 1;
            adjacent[j][i] += 1;
        }
        for e in &dag.undirected {
            let (i, j) = (idx[e.a.as_str()], idx[e.b.as_str()]);
            adjacent[i][j] += 1;
            adjacent[j][i] += 1;
        }
        log.extend(dag.log.iter().map(|l| format!("replicate {r}: {l}")));
    }
    let b = opts.replicates as f64;
    let mut arcs = Vec::new();
    let mut undirected = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            let (fij, fji) = (directed[i][j] as f64 / b, directed[j][i] as f64 / b);
            let keep_ij = fij >= opts.threshold;
            let keep_ji = fji >= opts.threshold;
            match (keep_ij, keep_ji) {
                (true, true) if fij > fji => arcs.push((i, j, fij)),
                (true, true) if fji > fij => arcs.push((j, i, fji)),
                (true, false) => arcs.push((i, j, fij)),
                (false, true) => arcs.push((j, i, fji)),
                (true, true) => {
                    log.push(format!("{} and {} tie in both directions; left undirected", names[i], names[j]));
                    undirected.push((i, j, adjacent[i][j] as f64 / b));
                }
                (false, false) => {
                    let fa = adjacent[i][j] as f64 / b;
                    if fa >= opts.threshold {
                        undirected.push((i, j, fa));
                    }
                }
            }
        }
    }
    Ok(assemble(names, arcs, undirected, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parent {
    pub name: String,
    pub coefficient: f64,
    pub sign: i8,
}

/// Tails of arcs into `node`, with coefficients from an OLS regression of
/// `node` on those parents alone.
pub fn extract_parents(dag: &Dag, node: &str, names: &[String], columns: &[Vec<f64>]) -> Result<Vec<Parent>> {
    let mut parents: Vec<&str> = dag.parents(node);
    parents.sort_unstable();
    if parents.is_empty() {
        return Ok(Vec::new());
    }
    let col = |name: &str| -> Result<&Vec<f64>> {
        names
            .iter()
            .position(|n| n == name)
            .map(|i| &columns[i])
            .ok_or_else(|| PrimeError::MissingColumn { column: name.to_string() })
    };
    let y = col(node)?;
    let pcols: Vec<&Vec<f64>> = parents.iter().map(|p| col(p)).collect::<Result<_>>()?;
    let x: Vec<Vec<f64>> = (0..y.len()).map(|r| pcols.iter().map(|c| c[r]).collect()).collect();
    let pnames: Vec<String> = parents.iter().map(|s| s.to_string()).collect();
    let fit = fit_ols(&x, y, &pnames)?;
    Ok(pnames
        .into_iter()
        .zip(fit.coefficients)
        .map(|(name, coefficient)| Parent {
            name,
            coefficient,
            sign: if coefficient < 0.0 { -1 } else { 1 },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalReport {
    pub target: ScoreKind,
    pub score_node: String,
    pub dag: Dag,
    pub parents: Vec<Parent>,
}

/// Name given to the score variable in the learned graph.
pub fn score_node_name(target: ScoreKind) -> String {
    format!("{}_score", target.as_str())
}

/// Learns a graph over the retained features plus one score and explains the
/// score's parents. Arcs into the score carry their regression sign.
pub fn causal_report(data: &AlignedDataset, target: ScoreKind, opts: BootstrapOptions) -> Result<CausalReport> {
    let score_node = score_node_name(target);
    let mut names = data.feature_names.clone();
    names.push(score_node.clone());
    let mut columns: Vec<Vec<f64>> = (0..data.n_features()).map(|j| data.column(j)).collect();
    columns.push(data.target(target).to_vec());
    let mut dag = bootstrap_learn(&names, &columns, opts)?;
    let parents = extract_parents(&dag, &score_node, &names, &columns)?;
    for arc in dag.arcs.iter_mut().filter(|a| a.to == score_node) {
        arc.sign = parents.iter().find(|p| p.name == arc.from).map(|p| p.sign);
    }
    Ok(CausalReport {
        target,
        score_node,
        dag,
        parents,
    })
}
