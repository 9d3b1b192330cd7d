//! Network graphs, routing matrices and observation scenarios.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::trace::{TraceKind, TraceSet};

/// A directed link. `metric` is the routing cost used by
/// [`RoutePolicy::ShortestMetric`]; it defaults to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: usize,
    pub source: String,
    pub destination: String,
    pub capacity_bps: f64,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    nodes: Vec<String>,
    links: Vec<Link>,
}

impl NetworkGraph {
    /// Validates ids (unique, contiguous from 1), endpoints and metrics.
    /// Links are stored sorted by id.
    pub fn new(nodes: Vec<String>, mut links: Vec<Link>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for n in &nodes {
            if !seen.insert(n.as_str()) {
                return Err(Error::Topology(format!("duplicate node {n:?}")));
            }
        }
        links.sort_by_key(|l| l.id);
        for (pos, link) in links.iter().enumerate() {
            if link.id != pos + 1 {
                return Err(Error::Topology(format!(
                    "link ids must be unique and contiguous from 1; found {} at position {}",
                    link.id,
                    pos + 1
                )));
            }
            if link.source == link.destination {
                return Err(Error::Topology(format!("link {} is a self-loop", link.id)));
            }
            for end in [&link.source, &link.destination] {
                if !seen.contains(end.as_str()) {
                    return Err(Error::Topology(format!(
                        "link {} references undeclared node {end:?}",
                        link.id
                    )));
                }
            }
            if !(link.metric > 0.0) || !link.metric.is_finite() {
                return Err(Error::Topology(format!(
                    "link {} has non-positive metric {}",
                    link.id, link.metric
                )));
            }
        }
        Ok(Self { nodes, links })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: usize) -> Option<&Link> {
        id.checked_sub(1).and_then(|i| self.links.get(i))
    }

    fn node_index(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == label)
    }

    /// Reads `link_id,source,destination,capacity_bps[,metric]` lines.
    /// Nodes are declared in order of first appearance. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn read_links<R: BufRead>(input: R) -> Result<Self> {
        let mut nodes: Vec<String> = Vec::new();
        let mut links = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 4 && fields.len() != 5 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected 4 or 5 fields, found {}", fields.len()),
                });
            }
            let parse_err = |what: &str| Error::Parse {
                line: idx + 1,
                message: format!("invalid {what}"),
            };
            let id: usize = fields[0].parse().map_err(|_| parse_err("link id"))?;
            let capacity_bps: f64 = fields[3].parse().map_err(|_| parse_err("capacity"))?;
            let metric: f64 = match fields.get(4) {
                Some(m) => m.parse().map_err(|_| parse_err("metric"))?,
                None => 1.0,
            };
            for end in [fields[1], fields[2]] {
                if !nodes.iter().any(|n| n == end) {
                    nodes.push(end.to_string());
                }
            }
            links.push(Link {
                id,
                source: fields[1].to_string(),
                destination: fields[2].to_string(),
                capacity_bps,
                metric,
            });
        }
        Self::new(nodes, links)
    }

    /// Writes the topology file; the metric column appears only when some
    /// metric differs from 1.
    pub fn write_links<W: Write>(&self, mut out: W) -> Result<()> {
        let weighted = self.links.iter().any(|l| l.metric != 1.0);
        for l in &self.links {
            write!(
                out,
                "{},{},{},{}",
                l.id, l.source, l.destination, l.capacity_bps
            )?;
            if weighted {
                write!(out, ",{}", l.metric)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Internet2 backbone node labels, in order of first appearance in the link table.
pub const INTERNET2_NODES: [&str; 9] = [
    "Los Angeles",
    "Seattle",
    "Salt Lake City",
    "Houston",
    "Kansas City",
    "Chicago",
    "Atlanta",
    "New York",
    "Washington",
];

// (forward id, source, destination, Gb/s, routing metric). The reverse link
// is id + 1 with the same capacity and metric. The metrics reproduce the
// observed routing: 14 routes over link 13, Seattle->Atlanta via links
// 3, 9, 13, 17 and Kansas City->Atlanta via 13, 17.
const INTERNET2_LINKS: [(usize, &str, &str, f64, f64); 13] = [
    (1, "Los Angeles", "Seattle", 10.0, 4.0),
    (3, "Seattle", "Salt Lake City", 10.0, 2.0),
    (5, "Los Angeles", "Salt Lake City", 10.0, 4.0),
    (7, "Los Angeles", "Houston", 10.0, 4.0),
    (9, "Salt Lake City", "Kansas City", 10.0, 4.0),
    (11, "Kansas City", "Houston", 10.0, 3.0),
    (13, "Kansas City", "Chicago", 20.0, 2.0),
    (15, "Houston", "Atlanta", 10.0, 4.0),
    (17, "Chicago", "Atlanta", 10.0, 3.0),
    (19, "Chicago", "New York", 10.0, 3.0),
    (21, "Chicago", "Washington", 10.0, 3.0),
    (23, "Atlanta", "Washington", 10.0, 1.0),
    (25, "Washington", "New York", 20.0, 2.0),
];

/// The 9-node, 26-link Internet2 backbone. Odd ids are the forward
/// direction, even ids the reverse.
pub fn internet2_topology() -> NetworkGraph {
    let nodes = INTERNET2_NODES.iter().map(|s| s.to_string()).collect();
    let mut links = Vec::with_capacity(26);
    for &(id, src, dst, gbps, metric) in &INTERNET2_LINKS {
        for (lid, a, b) in [(id, src, dst), (id + 1, dst, src)] {
            links.push(Link {
                id: lid,
                source: a.to_string(),
                destination: b.to_string(),
                capacity_bps: gbps * 1e9,
                metric,
            });
        }
    }
    NetworkGraph::new(nodes, links).expect("internet2 preset is valid")
}

/// Path selection for [`build_routing_matrix`]. Ties between equal-cost
/// paths are broken by the lexicographically smallest node-label sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoutePolicy {
    /// Minimum number of hops.
    ShortestHop,
    /// Minimum total link metric.
    #[default]
    ShortestMetric,
}

/// `L × J` 0/1 incidence of links (rows, ordered by id) over routes (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrix {
    entries: DMatrix<f64>,
    route_labels: Vec<(String, String)>,
}

impl RoutingMatrix {
    /// Validates that entries are 0/1 and each route uses at least one link.
    pub fn new(entries: DMatrix<f64>, route_labels: Vec<(String, String)>) -> Result<Self> {
        if route_labels.len() != entries.ncols() {
            return Err(Error::Dimension {
                context: "routing matrix labels",
                expected: entries.ncols(),
                actual: route_labels.len(),
            });
        }
        if entries.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Topology("routing matrix entries must be 0 or 1".into()));
        }
        for j in 0..entries.ncols() {
            if entries.column(j).sum() == 0.0 {
                return Err(Error::Topology(format!(
                    "route {} ({}->{}) uses no link",
                    j + 1,
                    route_labels[j].0,
                    route_labels[j].1
                )));
            }
        }
        Ok(Self {
            entries,
            route_labels,
        })
    }

    /// Convenience constructor for small hand-written matrices; routes are
    /// labelled `r1, r2, ...`.
    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let l = rows.len();
        let j = rows.first().map_or(0, |r| r.len());
        let entries = DMatrix::from_fn(l, j, |i, k| f64::from(rows[i][k]));
        let labels = (1..=j).map(|k| (format!("r{k}"), String::new())).collect();
        Self::new(entries, labels)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn route_labels(&self) -> &[(String, String)] {
        &self.route_labels
    }

    pub fn n_links(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_routes(&self) -> usize {
        self.entries.ncols()
    }

    /// 0-based route index for an ordered node pair.
    pub fn route_index(&self, source: &str, destination: &str) -> Option<usize> {
        self.route_labels
            .iter()
            .position(|(s, d)| s == source && d == destination)
    }

    /// Link ids (1-based) used by route `route` (0-based).
    pub fn links_of_route(&self, route: usize) -> Vec<usize> {
        (0..self.n_links())
            .filter(|&l| self.entries[(l, route)] == 1.0)
            .map(|l| l + 1)
            .collect()
    }

    /// Routes (0-based) that use link `link_id` (1-based).
    pub fn routes_using_link(&self, link_id: usize) -> Vec<usize> {
        let row = link_id - 1;
        (0..self.n_routes())
            .filter(|&j| self.entries[(row, j)] == 1.0)
            .collect()
    }

    /// Links (1-based, excluding `link_id`) that share at least one route with `link_id`.
    pub fn links_sharing_routes(&self, link_id: usize) -> Vec<usize> {
        let routes = self.routes_using_link(link_id);
        (1..=self.n_links())
            .filter(|&l| l != link_id && routes.iter().any(|&j| self.entries[(l - 1, j)] == 1.0))
            .collect()
    }

    /// Header of `src->dst` labels, then one comma-separated 0/1 row per link.
    pub fn write_matrix<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = self
            .route_labels
            .iter()
            .map(|(s, d)| format!("{s}->{d}"))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for l in 0..self.n_links() {
            let row: Vec<&str> = (0..self.n_routes())
                .map(|j| if self.entries[(l, j)] == 1.0 { "1" } else { "0" })
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_matrix<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| {
            l.as_ref().map_or(true, |s| !s.trim().is_empty())
        });
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header?;
        let mut labels = Vec::new();
        for (k, lab) in header.split(',').enumerate() {
            let (s, d) = lab.split_once("->").ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("route label {} is not of the form src->dst", k + 1),
            })?;
            labels.push((s.trim().to_string(), d.trim().to_string()));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let row: std::result::Result<Vec<f64>, _> = line
                .split(',')
                .map(|f| match f.trim() {
                    "0" => Ok(0.0),
                    "1" => Ok(1.0),
                    other => Err(Error::Parse {
                        line: idx + 1,
                        message: format!("expected 0 or 1, found {other:?}"),
                    }),
                })
                .collect();
            let row = row?;
            if row.len() != labels.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} entries, found {}", labels.len(), row.len()),
                });
            }
            rows.push(row);
        }
        let entries = DMatrix::from_fn(rows.len(), labels.len(), |i, j| rows[i][j]);
        Self::new(entries, labels)
    }
}

/// One route per ordered pair of distinct nodes, ordered source-major in
/// node declaration order, so `J = n(n−1)`.
pub fn build_routing_matrix(graph: &NetworkGraph, policy: RoutePolicy) -> Result<RoutingMatrix> {
    let n = graph.nodes.len();
    let cost = |l: &Link| match policy {
        RoutePolicy::ShortestHop => 1.0,
        RoutePolicy::ShortestMetric => l.metric,
    };
    // all-pairs distances
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let mut out_links: Vec<Vec<&Link>> = vec![Vec::new(); n];
    for l in &graph.links {
        let a = graph.node_index(&l.source).expect("validated");
        let b = graph.node_index(&l.destination).expect("validated");
        dist[a][b] = dist[a][b].min(cost(l));
        out_links[a].push(l);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    const TIE: f64 = 1e-9;
    let mut labels = Vec::with_capacity(n * n.saturating_sub(1));
    let mut columns: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s == d {
                continue;
            }
            if !dist[s][d].is_finite() {
                return Err(Error::Unreachable {
                    source_node: graph.nodes[s].clone(),
                    destination: graph.nodes[d].clone(),
                });
            }
            let mut path = Vec::new();
            let mut u = s;
            while u != d {
                let next = out_links[u]
                    .iter()
                    .filter(|l| {
                        let v = graph.node_index(&l.destination).expect("validated");
                        (cost(l) + dist[v][d] - dist[u][d]).abs() <= TIE * (1.0 + dist[u][d])
                    })
                    .min_by(|a, b| a.destination.cmp(&b.destination).then(a.id.cmp(&b.id)))
                    .expect("a shortest-path successor exists");
                path.push(next.id);
                u = graph.node_index(&next.destination).expect("validated");
            }
            labels.push((graph.nodes[s].clone(), graph.nodes[d].clone()));
            columns.push(path);
        }
    }
    let l = graph.links.len();
    let mut entries = DMatrix::zeros(l, columns.len());
    for (j, path) in columns.iter().enumerate() {
        for &id in path {
            entries[(id - 1, j)] = 1.0;
        }
    }
    RoutingMatrix::new(entries, labels)
}

/// Observed links `O` and prediction targets `U` (1-based link ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationScenario {
    observed: Vec<usize>,
    unobserved: Vec<usize>,
    scenario_id: Option<usize>,
}

impl ObservationScenario {
    pub fn new(observed: Vec<usize>, unobserved: Vec<usize>) -> Result<Self> {
        if observed.is_empty() || unobserved.is_empty() {
            return Err(Error::Scenario(
                "observed and unobserved sets must be nonempty".into(),
            ));
        }
        let o: BTreeSet<_> = observed.iter().collect();
        let u: BTreeSet<_> = unobserved.iter().collect();
        if o.len() != observed.len() || u.len() != unobserved.len() {
            return Err(Error::Scenario("duplicate link in scenario".into()));
        }
        if let Some(both) = o.intersection(&u).next() {
            return Err(Error::Scenario(format!(
                "link {both} is both observed and unobserved"
            )));
        }
        if observed.iter().chain(&unobserved).any(|&l| l == 0) {
            return Err(Error::Scenario("link ids are 1-based".into()));
        }
        Ok(Self {
            observed,
            unobserved,
            scenario_id: None,
        })
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn unobserved(&self) -> &[usize] {
        &self.unobserved
    }

    pub fn scenario_id(&self) -> Option<usize> {
        self.scenario_id
    }

    /// Checks that all ids fit a network with `n_links` links.
    pub fn validate(&self, n_links: usize) -> Result<()> {
        match self
            .observed
            .iter()
            .chain(&self.unobserved)
            .find(|&&l| l > n_links)
        {
            Some(l) => Err(Error::Scenario(format!(
                "link {l} exceeds link count {n_links}"
            ))),
            None => Ok(()),
        }
    }

    /// 0-based row indices of observed links.
    pub fn observed_rows(&self) -> Vec<usize> {
        self.observed.iter().map(|l| l - 1).collect()
    }

    /// 0-based row indices of unobserved links.
    pub fn unobserved_rows(&self) -> Vec<usize> {
        self.unobserved.iter().map(|l| l - 1).collect()
    }
}

// (predicted link, observed links) for the twelve Internet2 scenarios.
const SCENARIOS: [(usize, &[usize]); 12] = [
    (7, &[2, 12]),
    (7, &[2, 12, 13, 15]),
    (7, &[2, 12, 13, 15, 23, 25]),
    (7, &[2, 3, 9, 12, 15, 21, 23, 25]),
    (13, &[3, 7]),
    (13, &[3, 9]),
    (13, &[3, 9, 12]),
    (13, &[3, 7, 9, 12, 17, 19, 21]),
    (13, &[2, 3, 9, 12, 15, 21, 23, 25]),
    (19, &[3, 9]),
    (19, &[3, 9, 13]),
    (19, &[2, 3, 9, 12, 15, 21, 23, 25]),
];

/// Internet2 observation scenario `id` (1..=12).
pub fn scenario(id: usize) -> Result<ObservationScenario> {
    let &(target, observed) = id
        .checked_sub(1)
        .and_then(|i| SCENARIOS.get(i))
        .ok_or(Error::UnknownScenario(id))?;
    let mut s = ObservationScenario::new(observed.to_vec(), vec![target])?;
    s.scenario_id = Some(id);
    Ok(s)
}

/// Splits `A` into the observed rows `A_o` and unobserved rows `A_u`, in
/// scenario order.
pub fn partition(
    a: &RoutingMatrix,
    s: &ObservationScenario,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    s.validate(a.n_links())?;
    let a_o = a.entries.select_rows(s.observed_rows().iter());
    let a_u = a.entries.select_rows(s.unobserved_rows().iter());
    Ok((a_o, a_u))
}

/// Applies the routing equation `Y(t) = A X(t)` to every time bin.
pub fn route_traffic(a: &RoutingMatrix, flows: &TraceSet) -> Result<TraceSet> {
    if flows.series_count() != a.n_routes() {
        return Err(Error::Dimension {
            context: "route_traffic",
            expected: a.n_routes(),
            actual: flows.series_count(),
        });
    }
    let y = &a.entries * flows.values();
    let labels = (1..=a.n_links()).map(|l| format!("link{l}")).collect();
    TraceSet::new(y, TraceKind::Link)
        .with_bin_seconds(flows.bin_seconds())?
        .with_labels(labels)
}
