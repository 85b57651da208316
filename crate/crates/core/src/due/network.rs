use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A directed link. Times in hours, capacity in vehicles per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub free_flow_time: f64,
    pub capacity: f64,
}

/// Demand in vehicles, target arrival time in hours.
#[derive(Debug, Clone, PartialEq)]
pub struct OdPair {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
    pub target_arrival: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<usize>,
    links: Vec<Link>,
    od_pairs: Vec<OdPair>,
    link_index: HashMap<usize, usize>,
}

impl Network {
    pub fn new(nodes: Vec<usize>, links: Vec<Link>, od_pairs: Vec<OdPair>) -> Result<Self> {
        let node_set: HashSet<usize> = nodes.iter().copied().collect();
        if node_set.len() != nodes.len() {
            return Err(Error::InvalidNetwork("duplicate node id".into()));
        }
        let mut link_index = HashMap::new();
        for (k, l) in links.iter().enumerate() {
            if link_index.insert(l.id, k).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate link id {}", l.id)));
            }
            for end in [l.from, l.to] {
                if !node_set.contains(&end) {
                    return Err(Error::InvalidNetwork(format!(
                        "link {} references missing node {end}",
                        l.id
                    )));
                }
            }
            if !(l.free_flow_time > 0.0 && l.free_flow_time.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "link {} free-flow time must be positive",
                    l.id
                )));
            }
            if !(l.capacity > 0.0 && l.capacity.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "link {} capacity must be positive",
                    l.id
                )));
            }
        }
        for (w, od) in od_pairs.iter().enumerate() {
            for end in [od.origin, od.destination] {
                if !node_set.contains(&end) {
                    return Err(Error::InvalidNetwork(format!(
                        "o/d pair {w} references missing node {end}"
                    )));
                }
            }
            if !(od.demand > 0.0 && od.demand.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "o/d pair {w} demand must be positive"
                )));
            }
            if !od.target_arrival.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "o/d pair {w} target arrival is not finite"
                )));
            }
        }
        Ok(Self {
            nodes,
            links,
            od_pairs,
            link_index,
        })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn od_pairs(&self) -> &[OdPair] {
        &self.od_pairs
    }

    /// Position of the link with the given id.
    pub fn link_position(&self, id: usize) -> Option<usize> {
        self.link_index.get(&id).copied()
    }

    pub fn link(&self, id: usize) -> Option<&Link> {
        self.link_position(id).map(|k| &self.links[k])
    }

    /// Every simple path (no repeated node) from `origin` to `destination`,
    /// as link ids, in depth-first order over the link list.
    pub fn simple_paths(&self, origin: usize, destination: usize) -> Vec<Vec<usize>> {
        fn walk(
            net: &Network,
            at: usize,
            dest: usize,
            seen: &mut Vec<usize>,
            path: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if at == dest {
                out.push(path.clone());
                return;
            }
            for l in net.links.iter().filter(|l| l.from == at) {
                if seen.contains(&l.to) {
                    continue;
                }
                seen.push(l.to);
                path.push(l.id);
                walk(net, l.to, dest, seen, path, out);
                path.pop();
                seen.pop();
            }
        }
        let mut out = Vec::new();
        walk(
            self,
            origin,
            destination,
            &mut vec![origin],
            &mut Vec::new(),
            &mut out,
        );
        out
    }
}

/// Paths as link-id sequences, each owned by one o/d pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    paths: Vec<Vec<usize>>,
    owner: Vec<usize>,
    positions: Vec<Vec<usize>>,
}

impl PathSet {
    /// Checks that each path is a connected walk without repeated nodes from
    /// its pair's origin to its destination, and that every pair owns a path.
    pub fn new(network: &Network, paths: Vec<Vec<usize>>, owner: Vec<usize>) -> Result<Self> {
        if paths.len() != owner.len() {
            return Err(Error::InvalidNetwork(format!(
                "{} paths but {} owners",
                paths.len(),
                owner.len()
            )));
        }
        let pairs = network.od_pairs();
        let mut owned = vec![false; pairs.len()];
        let mut positions = Vec::with_capacity(paths.len());
        for (p, (links, &w)) in paths.iter().zip(&owner).enumerate() {
            let od = pairs.get(w).ok_or_else(|| {
                Error::InvalidNetwork(format!("path {p} owned by missing pair {w}"))
            })?;
            owned[w] = true;
            if links.is_empty() {
                return Err(Error::InvalidNetwork(format!("path {p} is empty")));
            }
            let mut pos = Vec::with_capacity(links.len());
            let mut at = od.origin;
            let mut visited = vec![at];
            for &id in links {
                let k = network.link_position(id).ok_or_else(|| {
                    Error::InvalidNetwork(format!("path {p} uses missing link {id}"))
                })?;
                let l = &network.links()[k];
                if l.from != at {
                    return Err(Error::InvalidNetwork(format!(
                        "path {p} is disconnected at link {id}"
                    )));
                }
                if visited.contains(&l.to) {
                    return Err(Error::InvalidNetwork(format!(
                        "path {p} revisits node {}",
                        l.to
                    )));
                }
                visited.push(l.to);
                at = l.to;
                pos.push(k);
            }
            if at != od.destination {
                return Err(Error::InvalidNetwork(format!(
                    "path {p} ends at {at}, not at destination {}",
                    od.destination
                )));
            }
            positions.push(pos);
        }
        if let Some(w) = owned.iter().position(|o| !o) {
            return Err(Error::InvalidNetwork(format!("o/d pair {w} owns no path")));
        }
        Ok(Self {
            paths,
            owner,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Link ids of each path.
    pub fn paths(&self) -> &[Vec<usize>] {
        &self.paths
    }

    /// O/d pair index of each path.
    pub fn owner(&self) -> &[usize] {
        &self.owner
    }

    /// Link positions (indices into [`Network::links`]) of each path.
    pub fn link_positions(&self) -> &[Vec<usize>] {
        &self.positions
    }

    /// Sum of free-flow times along each path.
    pub fn free_flow_times(&self, network: &Network) -> Vec<f64> {
        self.positions
            .iter()
            .map(|pos| pos.iter().map(|&k| network.links()[k].free_flow_time).sum())
            .collect()
    }
}

/// File locations of a network in the plain-text format.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkFiles<P> {
    pub nodes: P,
    pub links: P,
    pub od: P,
    pub paths: P,
}

const NODES_HEADER: &[&str] = &["id"];
const LINKS_HEADER: &[&str] = &["id", "from", "to", "free_flow_time", "capacity"];
const OD_HEADER: &[&str] = &["origin", "destination", "demand", "target_arrival"];
const PATHS_HEADER: &[&str] = &["path_id", "od_index", "links"];

/// Reads comma-separated records after a required header, skipping blank
/// lines and `#` comments. Returns `(line number, fields)` pairs.
fn read_records(path: &Path, header: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let file = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut seen_header = false;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n as u64 + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<String> = body.split(',').map(|f| f.trim().to_string()).collect();
        if !seen_header {
            if fields != header {
                return Err(Error::Parse {
                    file,
                    line: lineno,
                    message: format!("expected header `{}`", header.join(",")),
                });
            }
            seen_header = true;
            continue;
        }
        if fields.len() != header.len() {
            return Err(Error::Parse {
                file,
                line: lineno,
                message: format!("expected {} fields, found {}", header.len(), fields.len()),
            });
        }
        records.push((lineno, fields));
    }
    if !seen_header {
        return Err(Error::Parse {
            file,
            line: 0,
            message: "missing header line".into(),
        });
    }
    Ok(records)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        file: path.display().to_string(),
        line,
        message: format!("cannot parse {name} from `{raw}`"),
    })
}

/// Reads a network and its paths from the four files.
pub fn read_network<P: AsRef<Path>>(files: &NetworkFiles<P>) -> Result<(Network, PathSet)> {
    let np = files.nodes.as_ref();
    let nodes = read_records(np, NODES_HEADER)?
        .into_iter()
        .map(|(line, f)| field(np, line, "id", &f[0]))
        .collect::<Result<Vec<usize>>>()?;

    let lp = files.links.as_ref();
    let links = read_records(lp, LINKS_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            Ok(Link {
                id: field(lp, line, "id", &f[0])?,
                from: field(lp, line, "from", &f[1])?,
                to: field(lp, line, "to", &f[2])?,
                free_flow_time: field(lp, line, "free_flow_time", &f[3])?,
                capacity: field(lp, line, "capacity", &f[4])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let op = files.od.as_ref();
    let od_pairs = read_records(op, OD_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            Ok(OdPair {
                origin: field(op, line, "origin", &f[0])?,
                destination: field(op, line, "destination", &f[1])?,
                demand: field(op, line, "demand", &f[2])?,
                target_arrival: field(op, line, "target_arrival", &f[3])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let network = Network::new(nodes, links, od_pairs)?;

    let pp = files.paths.as_ref();
    let mut paths = Vec::new();
    let mut owner = Vec::new();
    for (line, f) in read_records(pp, PATHS_HEADER)? {
        let _: usize = field(pp, line, "path_id", &f[0])?;
        owner.push(field(pp, line, "od_index", &f[1])?);
        paths.push(
            f[2].split(':')
                .map(|id| field(pp, line, "link id", id.trim()))
                .collect::<Result<Vec<usize>>>()?,
        );
    }
    let paths = PathSet::new(&network, paths, owner)?;
    Ok((network, paths))
}

/// Writes a network and its paths in the format read by [`read_network`].
pub fn write_network<P: AsRef<Path>>(
    network: &Network,
    paths: &PathSet,
    files: &NetworkFiles<P>,
    comment: &str,
) -> Result<()> {
    let open = |p: &P, header: &[&str]| -> Result<File> {
        let mut f = File::create(p.as_ref())?;
        for line in comment.lines() {
            writeln!(f, "# {line}")?;
        }
        writeln!(f, "{}", header.join(","))?;
        Ok(f)
    };
    let mut f = open(&files.nodes, NODES_HEADER)?;
    for n in network.nodes() {
        writeln!(f, "{n}")?;
    }
    let mut f = open(&files.links, LINKS_HEADER)?;
    for l in network.links() {
        writeln!(
            f,
            "{},{},{},{},{}",
            l.id, l.from, l.to, l.free_flow_time, l.capacity
        )?;
    }
    let mut f = open(&files.od, OD_HEADER)?;
    for od in network.od_pairs() {
        writeln!(
            f,
            "{},{},{},{}",
            od.origin, od.destination, od.demand, od.target_arrival
        )?;
    }
    let mut f = open(&files.paths, PATHS_HEADER)?;
    for (p, (links, w)) in paths.paths().iter().zip(paths.owner()).enumerate() {
        let ids: Vec<String> = links.iter().map(|id| id.to_string()).collect();
        writeln!(f, "{p},{w},{}", ids.join(":"))?;
    }
    Ok(())
}
