//! Multi-horizon MPC objective compiled into an Ising instance.
//!
//! The bias vector follows the linear model `x(t+tau) = x(t) + A~ sigma(t) + b~`
//! with `A~ = A tau`, `b~ = b tau`. Over a horizon of `K` control cycles with
//! decisions `sigma_0 .. sigma_{K-1}`, the objective
//! `sum_{r=0}^{K-1} x_{r+1}^T Q x_{r+1}` is a quadratic form in the stacked
//! spins, which `compile_ising` expands into couplings, fields and a constant.

mod instance;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flowstats::FlowStats;
use crate::network::RoadNetwork;

pub use instance::{IsingInstance, MAX_TEXT_SPINS};

/// `x_i = sum_{roads (i,j)} eta_ij s_ij q_ij` for every signalized `i`, in
/// decision order.
pub fn compute_bias_vector(net: &RoadNetwork, counts: &[u32]) -> Vec<f64> {
    net.controlled()
        .iter()
        .map(|&node| {
            net.incoming(node)
                .iter()
                .map(|&r| {
                    let road = &net.roads()[r];
                    road.eta * f64::from(road.sign) * f64::from(counts[r])
                })
                .sum()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InternalModel {
    /// Continuous-time system matrix.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// `a * tau`
    pub a_step: DMatrix<f64>,
    /// `b * tau`
    pub b_step: DVector<f64>,
    /// Diagonal of Q.
    pub q: DVector<f64>,
    pub tau: f64,
    pub horizon: usize,
}

impl InternalModel {
    /// Model given directly by its per-cycle matrices.
    pub fn from_step(a_step: DMatrix<f64>, b_step: DVector<f64>, q: DVector<f64>, horizon: usize) -> Result<Self> {
        let n = b_step.len();
        if a_step.nrows() != n || a_step.ncols() != n || q.len() != n {
            return Err(Error::InvalidArgument("model dimensions disagree".into()));
        }
        validate_horizon_and_weights(horizon, q.as_slice())?;
        Ok(InternalModel { a: a_step.clone(), b: b_step.clone(), a_step, b_step, q, tau: 1.0, horizon })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn num_spins(&self) -> usize {
        self.dim() * self.horizon
    }
}

fn validate_horizon_and_weights(horizon: usize, q: &[f64]) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("prediction horizon must be at least 1".into()));
    }
    if q.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("Q weights must be positive".into()));
    }
    Ok(())
}

/// Builds `A` and `b` from the network and current flow estimates:
///
/// * `A_ii = -sum_j eta_ij o^Delta`
/// * `A_ij = eta_ij s_ij a^Delta_ij` for a road from `j` into `i`
/// * `b_i = sum_j eta_ij s_ij (a_bar_ij - o_bar)`
///
/// `q` defaults to all ones.
pub fn build_internal_model(
    net: &RoadNetwork,
    stats: &FlowStats,
    tau: f64,
    horizon: usize,
    q: Option<&[f64]>,
) -> Result<InternalModel> {
    let n = net.num_controlled();
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("control cycle must be positive, got {tau}")));
    }
    let q = match q {
        Some(q) if q.len() != n => {
            return Err(Error::InvalidArgument(format!("Q has {} entries, expected {n}", q.len())))
        }
        Some(q) => DVector::from_column_slice(q),
        None => DVector::from_element(n, 1.0),
    };
    validate_horizon_and_weights(horizon, q.as_slice())?;
    if stats.a0.len() != net.roads().len() {
        return Err(Error::InvalidArgument("flow statistics do not match the network".into()));
    }

    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (i, &node) in net.controlled().iter().enumerate() {
        for &r in net.incoming(node) {
            let road = &net.roads()[r];
            let s = f64::from(road.sign);
            a[(i, i)] -= road.eta * stats.o_delta();
            if let Some(j) = net.control_index(road.from) {
                a[(i, j)] += road.eta * s * stats.a_delta(r);
            }
            b[i] += road.eta * s * (stats.a_bar(r) - stats.o_bar());
        }
    }
    Ok(InternalModel { a_step: &a * tau, b_step: &b * tau, a, b, q, tau, horizon })
}

/// Iterates the difference equation from `x0` under `sigmas` (one decision
/// vector per cycle) and returns the predicted bias after each cycle.
pub fn predict_bias(model: &InternalModel, x0: &[f64], sigmas: &[Vec<i8>]) -> Result<Vec<DVector<f64>>> {
    let n = model.dim();
    if x0.len() != n {
        return Err(Error::InvalidArgument(format!("x0 has {} entries, expected {n}", x0.len())));
    }
    if sigmas.len() != model.horizon {
        return Err(Error::InvalidArgument(format!(
            "{} decision vectors for horizon {}",
            sigmas.len(),
            model.horizon
        )));
    }
    let mut x = DVector::from_column_slice(x0);
    let mut out = Vec::with_capacity(sigmas.len());
    for sigma in sigmas {
        if sigma.len() != n {
            return Err(Error::InvalidArgument(format!("decision vector has {} entries, expected {n}", sigma.len())));
        }
        let s = DVector::from_iterator(n, sigma.iter().map(|&v| f64::from(v)));
        x = x + &model.a_step * s + &model.b_step;
        out.push(x.clone());
    }
    Ok(out)
}

/// `sum_k x_k^T Q x_k` over a predicted trajectory.
pub fn horizon_objective(model: &InternalModel, trajectory: &[DVector<f64>]) -> f64 {
    trajectory.iter().map(|x| x.iter().zip(model.q.iter()).map(|(xi, w)| w * xi * xi).sum::<f64>()).sum()
}

/// Splits a stacked spin vector (cycle-major) into per-cycle decisions.
pub fn split_horizon(spins: &[i8], dim: usize, horizon: usize) -> Vec<Vec<i8>> {
    (0..horizon).map(|p| spins[p * dim..(p + 1) * dim].to_vec()).collect()
}

/// Expands the horizon objective into an Ising instance over the stacked
/// decisions; spin `p * N + a` is intersection `a` at cycle `p`.
///
/// With `M = A~^T Q A~`, the stacked quadratic form has block `(p, q)` equal
/// to `(K - max(p, q)) M`. Its diagonal collapses into the offset since
/// `s^2 = 1`. The linear term is `2 sum_{r >= p} A~^T Q y_r` for block `p`,
/// where `y_r = x0 + (r + 1) b~`, and the constant is `sum_r y_r^T Q y_r`.
pub fn compile_ising(model: &InternalModel, x0: &[f64]) -> Result<IsingInstance> {
    let n = model.dim();
    let k = model.horizon;
    if x0.len() != n {
        return Err(Error::InvalidArgument(format!("x0 has {} entries, expected {n}", x0.len())));
    }

    // Sparse rows of A~.
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|r| (0..n).filter_map(|c| {
            let v = model.a_step[(r, c)];
            (v != 0.0).then_some((c, v))
        }).collect())
        .collect();

    // M = A~^T Q A~, upper triangle.
    let mut m: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (r, row) in rows.iter().enumerate() {
        let w = model.q[r];
        for (u, &(a, va)) in row.iter().enumerate() {
            for &(b, vb) in &row[u..] {
                *m.entry((a.min(b), a.max(b))).or_insert(0.0) += w * va * vb;
            }
        }
    }

    let mut offset = 0.0;
    let mut couplings = Vec::new();
    for (&(a, b), &val) in &m {
        for p in 0..k {
            for q in 0..k {
                let weight = (k - p.max(q)) as f64 * val;
                if a == b {
                    match p.cmp(&q) {
                        std::cmp::Ordering::Equal => offset += weight,
                        std::cmp::Ordering::Less => couplings.push((p * n + a, q * n + a, 2.0 * weight)),
                        std::cmp::Ordering::Greater => {}
                    }
                } else {
                    couplings.push((p * n + a, q * n + b, 2.0 * weight));
                }
            }
        }
    }

    // y_r and g_r = A~^T Q y_r
    let x0 = DVector::from_column_slice(x0);
    let mut g = Vec::with_capacity(k);
    for r in 0..k {
        let y = &x0 + &model.b_step * (r + 1) as f64;
        let qy = y.component_mul(&model.q);
        offset += y.dot(&qy);
        g.push(model.a_step.tr_mul(&qy));
    }
    let mut fields = vec![0.0; n * k];
    let mut suffix = DVector::zeros(n);
    for p in (0..k).rev() {
        suffix += &g[p];
        for a in 0..n {
            fields[p * n + a] = 2.0 * suffix[a];
        }
    }

    IsingInstance::new(n * k, couplings, fields, offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::generate_lattice;

    #[test]
    fn bias_of_balanced_four_way() {
        let net = generate_lattice(3, 3, 100.0).unwrap().with_reference(100.0, 1.0).unwrap();
        let center = net.index_of_id(5).unwrap();
        let mut counts = vec![0u32; net.roads().len()];
        let mut plus = 0;
        let mut minus = 0;
        for &r in net.incoming(center) {
            if net.roads()[r].sign == 1 {
                counts[r] = [3, 2][plus];
                plus += 1;
            } else {
                counts[r] = [4, 1][minus];
                minus += 1;
            }
        }
        let x = compute_bias_vector(&net, &counts);
        assert_eq!(x[net.control_index(center).unwrap()], 0.0);
        assert!(compute_bias_vector(&net, &vec![0; net.roads().len()]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_flows_freeze_bias() {
        let net = generate_lattice(3, 3, 100.0).unwrap();
        let stats = FlowStats::from_rates(0.0, vec![0.0; net.roads().len()], vec![0.0; net.roads().len()]).unwrap();
        let model = build_internal_model(&net, &stats, 60.0, 1, None).unwrap();
        assert!(model.a.iter().all(|&v| v == 0.0));
        assert!(model.b.iter().all(|&v| v == 0.0));
        let x0 = vec![1.0, -2.0, 0.5, 3.0, 0.0];
        let pred = predict_bias(&model, &x0, &[vec![1, -1, 1, -1, 1]]).unwrap();
        assert_eq!(pred[0].as_slice(), x0.as_slice());
    }

    #[test]
    fn single_road_hand_evaluation() {
        // One signalized node fed by one road (eta=1, s=+1), outflow 0.5, no
        // upstream inflow.
        let net = RoadNetwork::from_json_str(
            r#"{"intersections": [
                  {"id": 1, "x": 0, "y": 0},
                  {"id": 2, "x": -100, "y": 0, "signalized": false},
                  {"id": 3, "x": 0, "y": 100, "signalized": false},
                  {"id": 4, "x": 100, "y": 0, "signalized": false}],
                "roads": [
                  {"from": 2, "to": 1, "length": 100},
                  {"from": 3, "to": 1, "length": 100},
                  {"from": 4, "to": 1, "length": 100},
                  {"from": 1, "to": 2, "length": 100},
                  {"from": 1, "to": 3, "length": 100},
                  {"from": 1, "to": 4, "length": 100}],
                "l_ref": 100, "n_ref": 1}"#,
        )
        .unwrap();
        let stats = FlowStats::from_rates(0.5, vec![0.0; 6], vec![0.0; 6]).unwrap();
        let model = build_internal_model(&net, &stats, 1.0, 1, None).unwrap();
        // eta = (1, 2, 1) with signs (+1, -1, +1): A_11 = -0.5 * (1 + 2 + 1)
        assert!((model.a[(0, 0)] + 2.0).abs() < 1e-15);
        // b = sum eta s (0 - 0.5) = -0.5 * (1 - 2 + 1) = 0
        assert!(model.b[0].abs() < 1e-15);

        // The single-road case in isolation: only road 2->1 contributes.
        let eta = net.roads()[0].eta;
        assert_eq!(eta, 1.0);
        let a_single = -eta * stats.o_delta();
        let b_single = eta * 1.0 * (stats.a_bar(0) - stats.o_bar());
        assert_eq!(a_single, -0.5);
        assert_eq!(b_single, -0.5);
    }

    #[test]
    fn one_step_prediction_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.25, 0.5, -2.0]);
        let b = DVector::from_column_slice(&[0.1, -0.3]);
        let model = InternalModel::from_step(a.clone(), b.clone(), DVector::from_element(2, 1.0), 1).unwrap();
        let x0 = [0.7, -0.2];
        let pred = predict_bias(&model, &x0, &[vec![1, -1]]).unwrap();
        let expected = DVector::from_column_slice(&x0) + &a * DVector::from_column_slice(&[1.0, -1.0]) + &b;
        assert_eq!(pred[0], expected);
        assert!(predict_bias(&model, &x0, &[vec![1]]).is_err());
        assert!(predict_bias(&model, &x0[..1], &[vec![1, 1]]).is_err());
    }

    #[test]
    fn two_spin_symbolic_expansion() {
        // A~ = [[a, c], [d, e]], Q = diag(w1, w2), x0 = (x1, x2), b~ = (b1, b2), K = 1.
        let (a, c, d, e) = (-1.5, 0.5, 0.25, -2.0);
        let (w1, w2) = (1.0, 3.0);
        let (x1, x2, b1, b2) = (0.4, -1.2, 0.3, 0.1);
        let model = InternalModel::from_step(
            DMatrix::from_row_slice(2, 2, &[a, c, d, e]),
            DVector::from_column_slice(&[b1, b2]),
            DVector::from_column_slice(&[w1, w2]),
            1,
        )
        .unwrap();
        let inst = compile_ising(&model, &[x1, x2]).unwrap();
        // x' = y + A~ s with y = x0 + b~:
        // w1 (y1 + a s1 + c s2)^2 + w2 (y2 + d s1 + e s2)^2
        let (y1, y2) = (x1 + b1, x2 + b2);
        let j12 = 2.0 * (w1 * a * c + w2 * d * e);
        let h1 = 2.0 * (w1 * y1 * a + w2 * y2 * d);
        let h2 = 2.0 * (w1 * y1 * c + w2 * y2 * e);
        let offset = w1 * (y1 * y1 + a * a + c * c) + w2 * (y2 * y2 + d * d + e * e);
        assert!((inst.coupling(0, 1) - j12).abs() < 1e-12);
        assert!((inst.fields()[0] - h1).abs() < 1e-12);
        assert!((inst.fields()[1] - h2).abs() < 1e-12);
        assert!((inst.offset() - offset).abs() < 1e-12);
    }

    #[test]
    fn no_control_authority_gives_constant_energy() {
        let b = DVector::from_column_slice(&[0.5, -1.0, 0.25]);
        let model = InternalModel::from_step(DMatrix::zeros(3, 3), b.clone(), DVector::from_element(3, 1.0), 3).unwrap();
        let x0 = DVector::from_column_slice(&[1.0, 2.0, -3.0]);
        let inst = compile_ising(&model, x0.as_slice()).unwrap();
        assert!(inst.couplings().is_empty());
        assert!(inst.fields().iter().all(|&h| h == 0.0));
        let expected: f64 = (1..=3).map(|k| (&x0 + &b * k as f64).norm_squared()).sum();
        assert!((inst.offset() - expected).abs() < 1e-12);
    }
}
