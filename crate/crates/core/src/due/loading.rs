//! Point-queue (Vickrey) network loading on cumulative vehicle counts.
//!
//! Each link holds a free-flow section followed by a point bottleneck of
//! fixed capacity. With `U` the cumulative entries, the bottleneck sees
//! arrivals `A(s) = U(s - fft)` and discharges
//!
//! ```text
//! V(s_n) = min(A(s_n), V(s_{n-1}) + cap * dt)
//! ```
//!
//! A vehicle entering at `u` reaches the bottleneck at `s = u + fft` and
//! leaves at `s + q(s) / cap`, where `q` interpolates the grid queues
//! `A(s_n) - V(s_n)`. Since `V` grows by at most `cap * dt` per step, that
//! map is non-decreasing in `u`, so FIFO holds exactly. Per-path counts are carried across links by
//! inverting `U` at the discharged count.

use super::network::{Network, PathSet};
use crate::error::{Error, Result};
use crate::space::{HVector, TimeGrid};

/// Loaded network: path delays at bin midpoints and link diagnostics.
#[derive(Debug, Clone)]
pub struct PointQueueLoad {
    /// `D_p` at each bin midpoint, in hours.
    pub delays: HVector,
    /// Simulation step in hours.
    pub time_step: f64,
    /// Time at which the simulation stopped.
    pub end_time: f64,
    /// Largest bottleneck queue of each link, in vehicles.
    pub peak_queue: Vec<f64>,
    /// Vehicles that entered each link.
    pub entered: Vec<f64>,
    /// Vehicles that left each link.
    pub exited: Vec<f64>,
    /// Vehicles still on each link when the simulation stopped.
    pub remaining: Vec<f64>,
    /// Vehicles of each path that entered each of its links.
    pub path_link_totals: Vec<Vec<f64>>,
    t0: f64,
    free_flow: Vec<f64>,
    capacity: Vec<f64>,
    queues: Vec<Vec<f64>>,
}

/// Linear interpolation of grid samples at fractional index `x`, held
/// constant outside the sampled range.
fn sample(values: &[f64], x: f64) -> f64 {
    if x <= 0.0 {
        return values[0];
    }
    let last = values.len() - 1;
    if x >= last as f64 {
        return values[last];
    }
    let i = x.floor() as usize;
    let f = x - i as f64;
    values[i] + (values[i + 1] - values[i]) * f
}

/// Smallest fractional index at which the non-decreasing samples reach
/// `target`.
fn first_reach(values: &[f64], target: f64) -> f64 {
    let i = values.partition_point(|&v| v < target);
    if i == 0 {
        0.0
    } else if i == values.len() {
        (values.len() - 1) as f64
    } else {
        let (lo, hi) = (values[i - 1], values[i]);
        (i - 1) as f64 + (target - lo) / (hi - lo)
    }
}

impl PointQueueLoad {
    fn index(&self, s: f64) -> f64 {
        (s - self.t0) / self.time_step
    }

    /// Bottleneck queue of link `k` (position in the link list) at time `s`.
    pub fn queue(&self, k: usize, s: f64) -> f64 {
        sample(&self.queues[k], self.index(s))
    }

    /// Time at which a vehicle entering link `k` at `u` leaves it.
    pub fn link_exit_time(&self, k: usize, u: f64) -> f64 {
        let s = u + self.free_flow[k];
        s + self.queue(k, s) / self.capacity[k]
    }

    /// Arrival time at the destination of a departure at `t` on path `p`.
    pub fn path_exit_time(&self, paths: &PathSet, p: usize, t: f64) -> f64 {
        paths.link_positions()[p]
            .iter()
            .fold(t, |s, &k| self.link_exit_time(k, s))
    }
}

/// Loads departure rates `h` (vehicles per hour, one channel per path,
/// piecewise constant over the bins of a uniform grid) and returns path
/// delays at bin midpoints.
pub fn load_point_queue(
    network: &Network,
    paths: &PathSet,
    h: &HVector,
    grid: &TimeGrid,
) -> Result<PointQueueLoad> {
    if h.shape() != (paths.len(), grid.bins()) {
        return Err(Error::Dimension {
            expected: (paths.len(), grid.bins()),
            found: h.shape(),
        });
    }
    if !grid.is_uniform() {
        return Err(Error::InvalidGrid(
            "point-queue loading needs a uniform grid".into(),
        ));
    }
    if let Some(v) = h
        .as_slice()
        .iter()
        .find(|v| !(**v >= 0.0) || !v.is_finite())
    {
        return Err(Error::Domain(format!(
            "point-queue loading needs finite non-negative inflow, got {v}"
        )));
    }
    let links = network.links();
    let free_flow: Vec<f64> = links.iter().map(|l| l.free_flow_time).collect();
    let capacity: Vec<f64> = links.iter().map(|l| l.capacity).collect();
    let min_fft = free_flow.iter().copied().fold(f64::INFINITY, f64::min);
    let width = grid.weights()[0];
    let substeps = (width / min_fft).ceil().max(1.0) as usize;
    let dt = width / substeps as f64;
    let input_steps = grid.bins() * substeps;

    let total: f64 = h.as_slice().iter().sum::<f64>() * width;
    let min_cap = capacity.iter().copied().fold(f64::INFINITY, f64::min);
    let drain = free_flow.iter().sum::<f64>() + links.len() as f64 * total / min_cap;
    let max_steps = input_steps + (drain / dt).ceil() as usize + 2;

    let positions = paths.link_positions();
    let nl = links.len();
    let mut counts: Vec<Vec<Vec<f64>>> = positions
        .iter()
        .map(|pos| vec![vec![0.0]; pos.len()])
        .collect();
    let mut entries = vec![vec![0.0]; nl];
    let mut discharged = vec![vec![0.0]; nl];
    let mut queues = vec![vec![0.0]; nl];
    let mut reach = vec![0.0; nl];

    let mut n = 0;
    loop {
        let cleared = (0..nl).all(|k| discharged[k][n] == entries[k][n]);
        if n >= max_steps || (n >= input_steps && cleared) {
            break;
        }
        n += 1;
        let s = n as f64 * dt;
        for k in 0..nl {
            let arrived = sample(&entries[k], (s - free_flow[k]) / dt);
            let left = arrived.min(discharged[k][n - 1] + capacity[k] * dt);
            queues[k].push(arrived - left);
            discharged[k].push(left);
            reach[k] = first_reach(&entries[k], left);
        }
        for (p, pos) in positions.iter().enumerate() {
            let first = if n <= input_steps {
                let b = (n - 1) / substeps;
                counts[p][0][n - 1] + h.get(p, b) * dt
            } else {
                counts[p][0][n - 1]
            };
            counts[p][0].push(first);
            for j in 1..pos.len() {
                let carried = sample(&counts[p][j - 1], reach[pos[j - 1]]);
                counts[p][j].push(carried);
            }
        }
        for e in entries.iter_mut() {
            e.push(0.0);
        }
        for (p, pos) in positions.iter().enumerate() {
            for (j, &k) in pos.iter().enumerate() {
                entries[k][n] += counts[p][j][n];
            }
        }
    }
    if n >= max_steps {
        log::warn!("point-queue loading stopped before all queues cleared");
    }

    let peak = queues
        .iter()
        .map(|q| q.iter().copied().fold(0.0, f64::max))
        .collect();
    let entered: Vec<f64> = entries.iter().map(|e| e[n]).collect();
    let exited: Vec<f64> = discharged.iter().map(|v| v[n]).collect();
    let remaining = entered.iter().zip(&exited).map(|(u, v)| u - v).collect();
    let path_link_totals = counts
        .iter()
        .map(|c| c.iter().map(|curve| curve[n]).collect())
        .collect();
    let mut load = PointQueueLoad {
        delays: HVector::zeros(paths.len(), grid.bins()),
        time_step: dt,
        end_time: grid.t0() + n as f64 * dt,
        peak_queue: peak,
        entered,
        exited,
        remaining,
        path_link_totals,
        t0: grid.t0(),
        free_flow,
        capacity,
        queues,
    };
    let mids = grid.midpoints();
    for p in 0..paths.len() {
        for (i, &t) in mids.iter().enumerate() {
            let d = load.path_exit_time(paths, p, t) - t;
            load.delays.set(p, i, d);
        }
    }
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::due::fixture;
    use crate::due::network::{Link, OdPair};
    use rand::{Rng, SeedableRng};

    fn single_link(capacity: f64, fft: f64) -> (Network, PathSet) {
        let net = Network::new(
            vec![1, 2],
            vec![Link {
                id: 1,
                from: 1,
                to: 2,
                free_flow_time: fft,
                capacity,
            }],
            vec![OdPair {
                origin: 1,
                destination: 2,
                demand: 1000.0,
                target_arrival: 1.0,
            }],
        )
        .unwrap();
        let paths = PathSet::new(&net, vec![vec![1]], vec![0]).unwrap();
        (net, paths)
    }

    #[test]
    fn square_pulse_matches_cumulative_curves() {
        let (net, paths) = single_link(1000.0, 0.1);
        let grid = TimeGrid::uniform(0.0, 2.0, 80).unwrap();
        let width = 2.0 / 80.0;
        let h = HVector::from_fn(1, 80, |_, i| {
            if grid.midpoints()[i] < 0.5 {
                2000.0
            } else {
                0.0
            }
        });
        let load = load_point_queue(&net, &paths, &h, &grid).unwrap();
        assert!((load.peak_queue[0] - 500.0).abs() <= 2000.0 * width);
        let queueing: Vec<f64> = load.delays.channel(0).iter().map(|d| d - 0.1).collect();
        let peak = queueing.iter().copied().fold(0.0, f64::max);
        assert!((peak - 0.5).abs() <= width, "peak delay {peak}");
        // Entrant at t waits t hours while the pulse lasts.
        for (i, &t) in grid.midpoints().iter().enumerate() {
            if t < 0.5 {
                assert!((queueing[i] - t).abs() < 1e-9, "{t}: {}", queueing[i]);
            }
        }
        // Queue drains at capacity after the pulse reaches the bottleneck.
        for s in [0.7, 0.8, 0.9, 1.0] {
            assert!((load.queue(0, s) - (500.0 - 1000.0 * (s - 0.6))).abs() < 1e-6);
        }
        assert_eq!(load.queue(0, 1.2), 0.0);
        assert!(load.remaining[0].abs() < 1e-9);
    }

    #[test]
    fn sub_capacity_inflow_gives_free_flow_delays() {
        let (net, paths) = fixture("nguyen_topology").unwrap();
        let grid = TimeGrid::uniform(0.0, 2.0, 24).unwrap();
        let h = HVector::filled(paths.len(), 24, 20.0);
        let load = load_point_queue(&net, &paths, &h, &grid).unwrap();
        let fft = paths.free_flow_times(&net);
        for (p, free) in fft.iter().enumerate() {
            for &d in load.delays.channel(p) {
                assert!((d - free).abs() < 1e-12);
            }
        }
        assert!(load.peak_queue.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn doubling_slack_capacity_changes_nothing() {
        let (net, paths) = single_link(1000.0, 0.2);
        let (wide, _) = single_link(2000.0, 0.2);
        let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let h = HVector::from_fn(1, 10, |_, i| 100.0 * i as f64);
        let a = load_point_queue(&net, &paths, &h, &grid).unwrap();
        let b = load_point_queue(&wide, &paths, &h, &grid).unwrap();
        for (x, y) in a.delays.as_slice().iter().zip(b.delays.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_negative_inflow() {
        let (net, paths) = single_link(1000.0, 0.2);
        let grid = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
        let h = HVector::from_vec(1, 2, vec![1.0, -1.0]).unwrap();
        assert!(matches!(
            load_point_queue(&net, &paths, &h, &grid),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn fifo_and_conservation_on_random_congested_loads() {
        let (net, paths) = fixture("nguyen_topology").unwrap();
        let grid = TimeGrid::uniform(0.0, 2.0, 24).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let h = HVector::from_fn(paths.len(), 24, |_, _| rng.random_range(0.0..600.0));
            let load = load_point_queue(&net, &paths, &h, &grid).unwrap();
            assert!(load.peak_queue.iter().any(|&q| q > 0.0));
            for p in 0..paths.len() {
                let mut last = f64::NEG_INFINITY;
                for step in 0..=400 {
                    let t = 2.0 * step as f64 / 400.0;
                    let exit = load.path_exit_time(&paths, p, t);
                    assert!(exit >= last);
                    last = exit;
                }
                let sent: f64 = h.channel(p).iter().sum::<f64>() * grid.weights()[0];
                for &carried in &load.path_link_totals[p] {
                    assert!((carried - sent).abs() <= 1e-8 * sent.max(1.0));
                }
            }
            for k in 0..net.links().len() {
                let scale = load.entered[k].max(1.0);
                assert!(
                    (load.entered[k] - load.exited[k] - load.remaining[k]).abs() <= 1e-8 * scale
                );
                assert!(load.remaining[k].abs() <= 1e-8 * scale);
            }
        }
    }
}
