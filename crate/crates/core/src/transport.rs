//! Exact Kantorovich-Wasserstein distances by successive shortest paths.
//!
//! The transportation problem is solved as a min-cost flow on the dense
//! bipartite graph rows -> columns. Each augmentation runs a dense Dijkstra
//! on reduced costs; node potentials double as the optimal LP dual.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::space::{DiscreteMeasure, MetricMeasureSpace};

const MASS_RTOL: f64 = 1e-12;
/// Remaining supply or demand below this (for unit total mass) counts as exhausted.
const FLOW_EPS: f64 = 1e-15;

/// Coupling between two measures together with its cost `Σ plan[i][j] d(i,j)^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub plan: Vec<Vec<f64>>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let n = self.plan.first().map_or(0, Vec::len);
        (0..n).map(|j| self.plan.iter().map(|r| r[j]).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Wasserstein {
    /// `W_p = cost^{1/p}`.
    pub distance: f64,
    pub plan: TransportPlan,
    /// Dual potentials with `phi[i] + psi[j] <= d(i,j)^p`.
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// `Σ μ0 phi + Σ μ1 psi`; equals `plan.cost` up to rounding.
    pub dual_value: f64,
}

/// Common total mass of two measures, or the reason they cannot be coupled.
pub(crate) fn common_mass(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<(f64, f64)> {
    let (mass0, mass1) = (mu0.mass(), mu1.mass());
    let scale = mass0.max(mass1);
    if scale == 0.0 {
        return Err(Error::ZeroMass);
    }
    if (mass0 - mass1).abs() > MASS_RTOL * scale {
        return Err(Error::MassMismatch { mass0, mass1 });
    }
    Ok((mass0, mass1))
}

/// `W_p(μ0, μ1)` with an optimal plan and dual certificate.
pub fn wasserstein(space: &MetricMeasureSpace, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure, p: f64) -> Result<Wasserstein> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("Wasserstein exponent needs p >= 1, got {p}")));
    }
    check_len(space.len(), mu0.len())?;
    check_len(space.len(), mu1.len())?;
    let (mass0, mass1) = common_mass(mu0, mu1)?;
    let n = space.len();
    let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| space.dist(i, j).powf(p)).collect()).collect();
    let a: Vec<f64> = mu0.weights().iter().map(|w| w / mass0).collect();
    let b: Vec<f64> = mu1.weights().iter().map(|w| w / mass1).collect();

    let sol = min_cost_transport(&cost, &a, &b);

    let plan: Vec<Vec<f64>> = sol.flow.iter().map(|r| r.iter().map(|x| x * mass0).collect()).collect();
    let total: f64 = plan.iter().zip(&cost).map(|(r, c)| r.iter().zip(c).map(|(x, y)| x * y).sum::<f64>()).sum();
    let dual_value = mass0 * a.iter().zip(&sol.phi).map(|(x, y)| x * y).sum::<f64>()
        + mass0 * b.iter().zip(&sol.psi).map(|(x, y)| x * y).sum::<f64>();
    Ok(Wasserstein {
        distance: total.max(0.0).powf(1.0 / p),
        plan: TransportPlan { plan, cost: total },
        phi: sol.phi,
        psi: sol.psi,
        dual_value,
    })
}

pub(crate) struct FlowSolution {
    pub flow: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Balanced transportation problem `min Σ c x` with row sums `a` and column sums `b`.
pub(crate) fn min_cost_transport(cost: &[Vec<f64>], a: &[f64], b: &[f64]) -> FlowSolution {
    let n = a.len();
    let m = b.len();
    let mut flow = vec![vec![0.0; m]; n];
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    // Potentials: rows 0..n, columns n..n+m. Reduced cost of i->j is c + pi_i - pi_j.
    let mut pi = vec![0.0; n + m];
    let total = n + m;
    let mut dist = vec![0.0; total];
    let mut done = vec![false; total];
    let mut pred = vec![usize::MAX; total];

    loop {
        if supply.iter().all(|&s| s <= FLOW_EPS) || demand.iter().all(|&d| d <= FLOW_EPS) {
            break;
        }
        dist.fill(f64::INFINITY);
        done.fill(false);
        pred.fill(usize::MAX);
        for i in 0..n {
            if supply[i] > FLOW_EPS {
                dist[i] = 0.0;
            }
        }
        let mut target = usize::MAX;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..total {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n && demand[u - n] > FLOW_EPS {
                target = u;
                break;
            }
            if u < n {
                for j in 0..m {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost[u][j] + pi[u] - pi[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        pred[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[i][j] <= 0.0 {
                        continue;
                    }
                    let rc = (pi[u] - cost[i][j] - pi[i]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        pred[i] = u;
                    }
                }
            }
        }
        if target == usize::MAX {
            // Remaining supply cannot reach any demand; only rounding residue is left.
            break;
        }
        let dt = dist[target];
        for v in 0..total {
            pi[v] += dist[v].min(dt);
        }

        // Bottleneck along the path target <- ... <- source.
        let mut amount = demand[target - n];
        let mut v = target;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if u >= n {
                amount = amount.min(flow[v][u - n]);
            }
            v = u;
        }
        let source = v;
        amount = amount.min(supply[source]);

        let mut v = target;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if u < n {
                flow[u][v - n] += amount;
            } else {
                let f = &mut flow[v][u - n];
                *f = if *f <= amount { 0.0 } else { *f - amount };
            }
            v = u;
        }
        supply[source] = if supply[source] <= amount { 0.0 } else { supply[source] - amount };
        let d = &mut demand[target - n];
        *d = if *d <= amount { 0.0 } else { *d - amount };
    }

    let phi = pi[..n].iter().map(|x| -x).collect();
    let psi = pi[n..].to_vec();
    FlowSolution { flow, phi, psi }
}

/// `W_p` on the line via the monotone (quantile) coupling.
pub fn wasserstein_1d(positions: &[f64], mu0: &DiscreteMeasure, mu1: &DiscreteMeasure, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("Wasserstein exponent needs p >= 1, got {p}")));
    }
    check_len(positions.len(), mu0.len())?;
    check_len(positions.len(), mu1.len())?;
    if positions.iter().any(|x| !x.is_finite()) || positions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedPositions);
    }
    let (mass0, mass1) = common_mass(mu0, mu1)?;
    let a: Vec<f64> = mu0.weights().iter().map(|w| w / mass0).collect();
    let b: Vec<f64> = mu1.weights().iter().map(|w| w / mass1).collect();
    let n = positions.len();
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    let mut cost = 0.0;
    while i < n && j < n {
        let step = ra.min(rb);
        cost += step * (positions[i] - positions[j]).abs().powf(p);
        ra -= step;
        rb -= step;
        if ra <= 0.0 {
            i += 1;
            if i < n {
                ra = a[i];
            }
        }
        if rb <= 0.0 {
            j += 1;
            if j < n {
                rb = b[j];
            }
        }
    }
    Ok((mass0 * cost).powf(1.0 / p))
}
