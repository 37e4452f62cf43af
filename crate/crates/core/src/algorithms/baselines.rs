//! Comparison methods. All mix with `W = I − aℒ`.

use super::{check_dims, check_iterate, extrapolate, round_scalars, AlgorithmSpec, IterState};
use crate::error::{Error, Result};
use crate::linalg;
use crate::netgraph::Graph;
use crate::objectives::Problem;

/// Inner consensus rounds D-NC performs at outer iteration `k`.
pub fn d_nc_rounds(k: usize) -> usize {
    ((k as f64 + 2.0).ln().ceil() as usize).max(1)
}

/// `W x = x − aℒx`
fn apply_w(g: &Graph, x: &[f64], d: usize, a: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    g.mix_into(x, d, -a, &mut out);
    out
}

/// One iteration of a baseline method. DNGD specs are rejected.
pub fn baseline_step(spec: &AlgorithmSpec, s: &IterState, g: &Graph, p: &Problem) -> Result<IterState> {
    let d = check_dims(s, g, p)?;
    let round = round_scalars(g, d);
    let k = s.k;
    let kf = k as f64;
    let mut grad = vec![0.0; s.x.len()];
    let next = match *spec {
        AlgorithmSpec::Dgd { mixing, gamma0, decay } => {
            p.stacked_grad_into(&s.x, &mut grad)?;
            let mut x = apply_w(g, &s.x, d, mixing);
            linalg::axpy(-gamma0 / (kf + 1.0).powf(decay), &grad, &mut x);
            check_iterate(&x, d, "dgd")?;
            IterState {
                k: k + 1,
                y: x.clone(),
                x,
                x_prev: s.x.clone(),
                tracker: None,
                comm_scalars: s.comm_scalars + round,
            }
        }
        AlgorithmSpec::DNg { mixing, c } => {
            let y = extrapolate(&s.x, &s.x_prev, (kf - 1.0) / (kf + 1.0));
            p.stacked_grad_into(&y, &mut grad)?;
            let mut x = apply_w(g, &y, d, mixing);
            linalg::axpy(-c / (kf + 1.0), &grad, &mut x);
            check_iterate(&x, d, "d_ng")?;
            IterState {
                k: k + 1,
                y: extrapolate(&x, &s.x, kf / (kf + 2.0)),
                x,
                x_prev: s.x.clone(),
                tracker: None,
                comm_scalars: s.comm_scalars + round,
            }
        }
        AlgorithmSpec::DNc { mixing, step } => {
            // x⁺ = W^τ (ỹ − step·G(ỹ)), ỹ with (k−1)/(k+2) momentum
            let y = extrapolate(&s.x, &s.x_prev, (kf - 1.0) / (kf + 2.0));
            p.stacked_grad_into(&y, &mut grad)?;
            let mut x = y;
            linalg::axpy(-step, &grad, &mut x);
            let rounds = d_nc_rounds(k);
            for _ in 0..rounds {
                x = apply_w(g, &x, d, mixing);
            }
            check_iterate(&x, d, "d_nc")?;
            let kn = kf + 1.0;
            IterState {
                k: k + 1,
                y: extrapolate(&x, &s.x, (kn - 1.0) / (kn + 2.0)),
                x,
                x_prev: s.x.clone(),
                tracker: None,
                comm_scalars: s.comm_scalars + round * rounds as u64,
            }
        }
        AlgorithmSpec::Extra { mixing, gamma } => {
            p.stacked_grad_into(&s.x, &mut grad)?;
            let x = match (&s.tracker, k) {
                (Some(prev_grad), k) if k > 0 => {
                    // x⁺ = (I + W)x − W̃x_prev − γ(G(x) − G(x_prev)), W̃ = (I + W)/2
                    let mut x = s.x.iter().zip(&s.x_prev).map(|(a, b)| 2.0 * a - b).collect::<Vec<_>>();
                    g.mix_into(&s.x, d, -mixing, &mut x);
                    g.mix_into(&s.x_prev, d, 0.5 * mixing, &mut x);
                    for i in 0..x.len() {
                        x[i] -= gamma * (grad[i] - prev_grad[i]);
                    }
                    x
                }
                (None, 0) => {
                    let mut x = apply_w(g, &s.x, d, mixing);
                    linalg::axpy(-gamma, &grad, &mut x);
                    x
                }
                _ => return Err(Error::argument("EXTRA state carries an inconsistent gradient history")),
            };
            check_iterate(&x, d, "extra")?;
            IterState {
                k: k + 1,
                y: x.clone(),
                x,
                x_prev: s.x.clone(),
                tracker: Some(grad),
                comm_scalars: s.comm_scalars + 2 * round,
            }
        }
        AlgorithmSpec::GradientTracking { mixing, gamma } => {
            p.stacked_grad_into(&s.x, &mut grad)?;
            let tracker = s.tracker.clone().unwrap_or_else(|| grad.clone());
            let mut x = apply_w(g, &s.x, d, mixing);
            linalg::axpy(-gamma, &tracker, &mut x);
            check_iterate(&x, d, "gradient_tracking")?;
            let mut next_grad = vec![0.0; x.len()];
            p.stacked_grad_into(&x, &mut next_grad)?;
            let mut t = apply_w(g, &tracker, d, mixing);
            for i in 0..t.len() {
                t[i] += next_grad[i] - grad[i];
            }
            check_iterate(&t, d, "gradient_tracking tracker")?;
            IterState {
                k: k + 1,
                y: x.clone(),
                x,
                x_prev: s.x.clone(),
                tracker: Some(t),
                comm_scalars: s.comm_scalars + 2 * round,
            }
        }
        AlgorithmSpec::DngdSc { .. } | AlgorithmSpec::DngdC { .. } => {
            return Err(Error::argument(format!("{} is not a baseline", spec.kind())))
        }
    };
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{build_graph, Topology};
    use crate::objectives::random_least_squares;

    #[test]
    fn rounds_grow_logarithmically() {
        assert_eq!(d_nc_rounds(0), 1);
        assert_eq!(d_nc_rounds(1), 2);
        assert_eq!(d_nc_rounds(6), 3);
        assert_eq!(d_nc_rounds(100), 5);
    }

    #[test]
    fn tracker_average_matches_gradient_average() {
        let g = build_graph(Topology::Ring { n: 5 }, 1.0).unwrap();
        let p = random_least_squares(5, 3, 2, 2, false).unwrap();
        let spec = AlgorithmSpec::GradientTracking { mixing: 0.2, gamma: 0.02 };
        let x0: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut s = IterState::initial(x0);
        for _ in 0..30 {
            s = baseline_step(&spec, &s, &g, &p).unwrap();
            let t = s.tracker.as_ref().unwrap();
            let gr = p.stacked_grad(&s.x).unwrap();
            for c in 0..3 {
                let ta: f64 = (0..5).map(|i| t[i * 3 + c]).sum();
                let ga: f64 = (0..5).map(|i| gr[i * 3 + c]).sum();
                assert!((ta - ga).abs() < 1e-10 * (1.0 + ga.abs()));
            }
        }
    }

    #[test]
    fn dngd_specs_are_not_baselines() {
        let g = build_graph(Topology::Path { n: 2 }, 1.0).unwrap();
        let p = random_least_squares(2, 1, 2, 0, false).unwrap();
        let s = IterState::initial(vec![0.0, 0.0]);
        assert!(baseline_step(&AlgorithmSpec::DngdC { eta: 0.1 }, &s, &g, &p).is_err());
    }
}
