//! Primal-dual interior-point solver for the ε-SVR dual in `(α, α*)` form:
//!
//! ```text
//! min ½ zᵀQz + cᵀz   s.t.  aᵀz = 0,  0 ≤ z ≤ C
//! Q = [K −K; −K K],  c = (ε − y, ε + y),  a = (1, −1)
//! ```
//!
//! Used as the robust finishing stage when pairwise steps stall.

use nalgebra::{DMatrix, DVector};

/// `δ = α − α*` after Mehrotra predictor-corrector iterations; the caller
/// verifies optimality.
pub(crate) fn solve(k: &DMatrix<f64>, y: &[f64], c: f64, eps: f64, max_iterations: usize) -> Vec<f64> {
    let n = y.len();
    let m = 2 * n;
    let lin: Vec<f64> = (0..m).map(|i| if i < n { eps - y[i] } else { eps + y[i - n] }).collect();
    let sign = |i: usize| if i < n { 1.0 } else { -1.0 };
    let scale = 1.0 + lin.iter().fold(0.0_f64, |a, v| a.max(v.abs()));

    let mut z = vec![0.5 * c; m];
    let mut w1 = vec![scale; m];
    let mut w2 = vec![scale; m];
    let mut lam = 0.0;

    let q_times = |z: &[f64]| -> Vec<f64> {
        let d: Vec<f64> = (0..n).map(|i| z[i] - z[n + i]).collect();
        let kd: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[(i, j)] * d[j]).sum()).collect();
        (0..m).map(|i| if i < n { kd[i] } else { -kd[i - n] }).collect()
    };

    for _ in 0..max_iterations {
        let qz = q_times(&z);
        let rd: Vec<f64> = (0..m).map(|i| qz[i] + lin[i] - lam * sign(i) - w1[i] + w2[i]).collect();
        let rp: f64 = (0..m).map(|i| sign(i) * z[i]).sum();
        let mu = (0..m).map(|i| z[i] * w1[i] + (c - z[i]) * w2[i]).sum::<f64>() / (2 * m) as f64;
        let last_rd = rd.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if last_rd <= 1e-11 * scale && rp.abs() <= 1e-11 * c.max(1.0) && mu <= 1e-13 * scale * c.max(1.0) {
            break;
        }

        let mut h = DMatrix::<f64>::zeros(m + 1, m + 1);
        for i in 0..n {
            for j in 0..n {
                let v = k[(i, j)];
                h[(i, j)] = v;
                h[(n + i, n + j)] = v;
                h[(i, n + j)] = -v;
                h[(n + i, j)] = -v;
            }
        }
        for i in 0..m {
            h[(i, i)] += w1[i] / z[i] + w2[i] / (c - z[i]);
            h[(i, m)] = -sign(i);
            h[(m, i)] = sign(i);
        }
        let Some(lu) = Some(h.lu()).filter(|lu| lu.is_invertible()) else {
            break;
        };

        let direction = |t1: &[f64], t2: &[f64]| -> Option<(Vec<f64>, f64, Vec<f64>, Vec<f64>)> {
            let mut rhs = DVector::<f64>::zeros(m + 1);
            for i in 0..m {
                rhs[i] = -rd[i] + t1[i] / z[i] - t2[i] / (c - z[i]);
            }
            rhs[m] = -rp;
            let sol = lu.solve(&rhs)?;
            let dz: Vec<f64> = (0..m).map(|i| sol[i]).collect();
            let dw1 = (0..m).map(|i| (t1[i] - w1[i] * dz[i]) / z[i]).collect();
            let dw2 = (0..m).map(|i| (t2[i] + w2[i] * dz[i]) / (c - z[i])).collect();
            Some((dz, sol[m], dw1, dw2))
        };
        let step_length = |dz: &[f64], dw1: &[f64], dw2: &[f64]| -> f64 {
            let mut a = 1.0_f64;
            for i in 0..m {
                if dz[i] < 0.0 {
                    a = a.min(-z[i] / dz[i]);
                }
                if dz[i] > 0.0 {
                    a = a.min((c - z[i]) / dz[i]);
                }
                if dw1[i] < 0.0 {
                    a = a.min(-w1[i] / dw1[i]);
                }
                if dw2[i] < 0.0 {
                    a = a.min(-w2[i] / dw2[i]);
                }
            }
            a
        };

        let t1: Vec<f64> = (0..m).map(|i| -z[i] * w1[i]).collect();
        let t2: Vec<f64> = (0..m).map(|i| -(c - z[i]) * w2[i]).collect();
        let Some((dz_a, _, dw1_a, dw2_a)) = direction(&t1, &t2) else { break };
        let a_aff = step_length(&dz_a, &dw1_a, &dw2_a);
        let mu_aff = (0..m)
            .map(|i| {
                (z[i] + a_aff * dz_a[i]) * (w1[i] + a_aff * dw1_a[i])
                    + (c - z[i] - a_aff * dz_a[i]) * (w2[i] + a_aff * dw2_a[i])
            })
            .sum::<f64>()
            / (2 * m) as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let t1: Vec<f64> = (0..m).map(|i| sigma * mu - z[i] * w1[i] - dz_a[i] * dw1_a[i]).collect();
        let t2: Vec<f64> = (0..m).map(|i| sigma * mu - (c - z[i]) * w2[i] + dz_a[i] * dw2_a[i]).collect();
        let Some((dz, dl, dw1, dw2)) = direction(&t1, &t2) else { break };
        let a = (0.995 * step_length(&dz, &dw1, &dw2)).min(1.0);
        for i in 0..m {
            z[i] = (z[i] + a * dz[i]).clamp(f64::MIN_POSITIVE, c * (1.0 - f64::EPSILON));
            w1[i] = (w1[i] + a * dw1[i]).max(f64::MIN_POSITIVE);
            w2[i] = (w2[i] + a * dw2[i]).max(f64::MIN_POSITIVE);
        }
        lam += a * dl;
    }
    (0..n).map(|i| z[i] - z[n + i]).collect()
}
