//! Bundled networks. Topologies follow the standard test networks; link
//! capacities, free-flow times of the Nguyen network, demands and target
//! arrival times are synthetic.

use super::network::{Link, Network, OdPair, PathSet};
use crate::error::{Error, Result};

/// Names accepted by [`fixture`].
pub const FIXTURES: &[&str] = &["two_path_toy", "nguyen_topology", "sioux_topology"];

pub fn fixture(name: &str) -> Result<(Network, PathSet)> {
    match name {
        "two_path_toy" => two_path_toy(),
        "nguyen_topology" => nguyen(),
        "sioux_topology" => sioux_falls(),
        other => Err(Error::UnknownFixture(other.to_string())),
    }
}

fn minutes(m: f64) -> f64 {
    m / 60.0
}

fn two_path_toy() -> Result<(Network, PathSet)> {
    let links = vec![
        Link {
            id: 1,
            from: 1,
            to: 2,
            free_flow_time: 0.25,
            capacity: 1000.0,
        },
        Link {
            id: 2,
            from: 1,
            to: 2,
            free_flow_time: 0.35,
            capacity: 800.0,
        },
    ];
    let od = vec![OdPair {
        origin: 1,
        destination: 2,
        demand: 1500.0,
        target_arrival: 1.5,
    }];
    let net = Network::new(vec![1, 2], links, od)?;
    let paths = PathSet::new(&net, vec![vec![1], vec![2]], vec![0, 0])?;
    Ok((net, paths))
}

/// `(id, from, to, free-flow minutes)`.
const NGUYEN_LINKS: [(usize, usize, usize, f64); 19] = [
    (1, 1, 5, 7.0),
    (2, 1, 12, 9.0),
    (3, 4, 5, 9.0),
    (4, 4, 9, 12.0),
    (5, 5, 6, 3.0),
    (6, 5, 9, 9.0),
    (7, 6, 7, 5.0),
    (8, 6, 10, 13.0),
    (9, 7, 8, 5.0),
    (10, 7, 11, 9.0),
    (11, 8, 2, 9.0),
    (12, 9, 10, 10.0),
    (13, 9, 13, 9.0),
    (14, 10, 11, 6.0),
    (15, 11, 2, 9.0),
    (16, 11, 3, 8.0),
    (17, 12, 6, 7.0),
    (18, 12, 8, 14.0),
    (19, 13, 3, 11.0),
];

/// Of the 25 simple paths of the topology, the longest free-flow path of the
/// 1 -> 2 pair (links 2, 17, 8, 14, 15) is left out, giving 24.
const NGUYEN_PATHS: [(usize, &[usize]); 24] = [
    (0, &[1, 5, 7, 9, 11]),
    (0, &[1, 5, 7, 10, 15]),
    (0, &[1, 5, 8, 14, 15]),
    (0, &[1, 6, 12, 14, 15]),
    (0, &[2, 17, 7, 9, 11]),
    (0, &[2, 17, 7, 10, 15]),
    (0, &[2, 18, 11]),
    (1, &[1, 5, 7, 10, 16]),
    (1, &[1, 5, 8, 14, 16]),
    (1, &[1, 6, 12, 14, 16]),
    (1, &[1, 6, 13, 19]),
    (1, &[2, 17, 7, 10, 16]),
    (1, &[2, 17, 8, 14, 16]),
    (2, &[3, 5, 7, 9, 11]),
    (2, &[3, 5, 7, 10, 15]),
    (2, &[3, 5, 8, 14, 15]),
    (2, &[3, 6, 12, 14, 15]),
    (2, &[4, 12, 14, 15]),
    (3, &[3, 5, 7, 10, 16]),
    (3, &[3, 5, 8, 14, 16]),
    (3, &[3, 6, 12, 14, 16]),
    (3, &[3, 6, 13, 19]),
    (3, &[4, 12, 14, 16]),
    (3, &[4, 13, 19]),
];

fn nguyen() -> Result<(Network, PathSet)> {
    let links = NGUYEN_LINKS
        .iter()
        .map(|&(id, from, to, m)| Link {
            id,
            from,
            to,
            free_flow_time: minutes(m),
            capacity: [1800.0, 1200.0, 900.0][id % 3],
        })
        .collect();
    let od = vec![
        OdPair {
            origin: 1,
            destination: 2,
            demand: 600.0,
            target_arrival: 1.5,
        },
        OdPair {
            origin: 1,
            destination: 3,
            demand: 500.0,
            target_arrival: 1.5,
        },
        OdPair {
            origin: 4,
            destination: 2,
            demand: 500.0,
            target_arrival: 1.5,
        },
        OdPair {
            origin: 4,
            destination: 3,
            demand: 400.0,
            target_arrival: 1.5,
        },
    ];
    let net = Network::new((1..=13).collect(), links, od)?;
    let (owner, paths) = NGUYEN_PATHS.iter().map(|&(w, l)| (w, l.to_vec())).unzip();
    let paths = PathSet::new(&net, paths, owner)?;
    Ok((net, paths))
}

/// Undirected edges with free-flow minutes; each yields two directed links.
const SIOUX_EDGES: [(usize, usize, f64); 38] = [
    (1, 2, 6.0),
    (1, 3, 4.0),
    (2, 6, 5.0),
    (3, 4, 4.0),
    (3, 12, 4.0),
    (4, 5, 2.0),
    (4, 11, 6.0),
    (5, 6, 4.0),
    (5, 9, 5.0),
    (6, 8, 2.0),
    (7, 8, 3.0),
    (7, 18, 2.0),
    (8, 9, 10.0),
    (8, 16, 5.0),
    (9, 10, 3.0),
    (10, 11, 5.0),
    (10, 15, 6.0),
    (10, 16, 4.0),
    (10, 17, 8.0),
    (11, 12, 6.0),
    (11, 14, 4.0),
    (12, 13, 3.0),
    (13, 24, 4.0),
    (14, 15, 5.0),
    (14, 23, 4.0),
    (15, 19, 3.0),
    (15, 22, 3.0),
    (16, 17, 2.0),
    (16, 18, 3.0),
    (17, 19, 2.0),
    (18, 20, 4.0),
    (19, 20, 4.0),
    (20, 21, 6.0),
    (20, 22, 5.0),
    (21, 22, 2.0),
    (21, 24, 3.0),
    (22, 23, 4.0),
    (23, 24, 2.0),
];

/// A handful of o/d pairs with three paths each, by link id.
const SIOUX_PATHS: [(usize, &[usize]); 12] = [
    (0, &[1, 4, 16, 20, 18, 56]),
    (0, &[2, 7, 37, 39, 75, 64]),
    (0, &[1, 4, 16, 22, 50, 56]),
    (1, &[39, 75, 64, 60, 54]),
    (1, &[39, 75, 65, 68, 60, 54]),
    (1, &[39, 76, 72, 68, 60, 54]),
    (2, &[3, 2, 7, 37, 39]),
    (2, &[4, 16, 20, 18, 56, 62, 66]),
    (2, &[4, 15, 11, 8, 7, 37, 39]),
    (3, &[74, 38, 35, 5]),
    (3, &[76, 71, 40, 31, 8, 5]),
    (3, &[76, 71, 40, 33, 35, 5]),
];

/// Sioux Falls topology; link ids follow the lexicographic order of
/// `(from, to)`.
fn sioux_falls() -> Result<(Network, PathSet)> {
    let mut directed: Vec<(usize, usize, f64)> = SIOUX_EDGES
        .iter()
        .flat_map(|&(a, b, m)| [(a, b, m), (b, a, m)])
        .collect();
    directed.sort_by_key(|&(a, b, _)| (a, b));
    let links = directed
        .into_iter()
        .enumerate()
        .map(|(k, (from, to, m))| Link {
            id: k + 1,
            from,
            to,
            free_flow_time: minutes(m),
            capacity: [1500.0, 1200.0, 1800.0, 900.0][k % 4],
        })
        .collect();
    let od = vec![
        OdPair {
            origin: 1,
            destination: 20,
            demand: 800.0,
            target_arrival: 1.5,
        },
        OdPair {
            origin: 13,
            destination: 7,
            demand: 600.0,
            target_arrival: 1.5,
        },
        OdPair {
            origin: 2,
            destination: 24,
            demand: 500.0,
            target_arrival: 1.5,
        },
        OdPair {
            origin: 24,
            destination: 1,
            demand: 700.0,
            target_arrival: 1.5,
        },
    ];
    let net = Network::new((1..=24).collect(), links, od)?;
    let (owner, paths) = SIOUX_PATHS.iter().map(|&(w, l)| (w, l.to_vec())).unzip();
    let paths = PathSet::new(&net, paths, owner)?;
    Ok((net, paths))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nguyen_counts() {
        let (net, paths) = fixture("nguyen_topology").unwrap();
        assert_eq!(net.nodes().len(), 13);
        assert_eq!(net.links().len(), 19);
        assert_eq!(net.od_pairs().len(), 4);
        assert_eq!(paths.len(), 24);
    }

    #[test]
    fn nguyen_paths_are_the_enumerated_ones_but_one() {
        let (net, paths) = fixture("nguyen_topology").unwrap();
        let mut enumerated = Vec::new();
        for (w, od) in net.od_pairs().iter().enumerate() {
            for p in net.simple_paths(od.origin, od.destination) {
                enumerated.push((w, p));
            }
        }
        assert_eq!(enumerated.len(), 25);
        let shipped: Vec<(usize, Vec<usize>)> = paths
            .owner()
            .iter()
            .copied()
            .zip(paths.paths().iter().cloned())
            .collect();
        for s in &shipped {
            assert!(enumerated.contains(s), "{s:?} is not a simple path");
        }
        let missing: Vec<_> = enumerated.iter().filter(|e| !shipped.contains(e)).collect();
        assert_eq!(missing, vec![&(0, vec![2, 17, 8, 14, 15])]);
        let fft = paths.free_flow_times(&net);
        let dropped: f64 = [2, 17, 8, 14, 15]
            .iter()
            .map(|&id| net.link(id).unwrap().free_flow_time)
            .sum();
        let worst = (0..paths.len())
            .filter(|&p| paths.owner()[p] == 0)
            .map(|p| fft[p])
            .fold(0.0, f64::max);
        assert!(dropped > worst);
    }

    #[test]
    fn sioux_counts() {
        let (net, paths) = fixture("sioux_topology").unwrap();
        assert_eq!(net.nodes().len(), 24);
        assert_eq!(net.links().len(), 76);
        assert_eq!(paths.len(), 12);
    }

    #[test]
    fn toy_counts() {
        let (net, paths) = fixture("two_path_toy").unwrap();
        assert_eq!(net.nodes().len(), 2);
        assert_eq!(net.links().len(), 2);
        assert_eq!(net.od_pairs().len(), 1);
        assert_eq!(paths.owner(), &[0, 0]);
    }

    #[test]
    fn unknown_fixture() {
        assert!(matches!(fixture("braess"), Err(Error::UnknownFixture(_))));
    }
}
