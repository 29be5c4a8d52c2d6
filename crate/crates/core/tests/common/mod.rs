//! Independent reference implementations used only by tests.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, SymmetricEigen};

/// Dense ε-SVR dual solved by accelerated projected gradient on the
/// `(α, α*)` formulation. Returns `(δ, b, dual objective)`.
pub fn qp_oracle(k: &DMatrix<f64>, y: &[f64], c: f64, eps: f64) -> (Vec<f64>, f64, f64) {
    let n = y.len();
    let lmax = SymmetricEigen::new(k.clone()).eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v));
    let step = 1.0 / (2.0 * lmax + 1e-12);
    // x = (α, α*); a = (1, −1) is the equality-constraint normal.
    let grad = |x: &[f64]| -> Vec<f64> {
        let d: Vec<f64> = (0..n).map(|i| x[i] - x[n + i]).collect();
        let kd: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[(i, j)] * d[j]).sum()).collect();
        let mut g = vec![0.0; 2 * n];
        for i in 0..n {
            g[i] = kd[i] + eps - y[i];
            g[n + i] = -kd[i] + eps + y[i];
        }
        g
    };
    let objective = |x: &[f64]| -> f64 {
        let d: Vec<f64> = (0..n).map(|i| x[i] - x[n + i]).collect();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += d[i] * k[(i, j)] * d[j];
            }
        }
        0.5 * q + eps * x.iter().sum::<f64>() - (0..n).map(|i| y[i] * d[i]).sum::<f64>()
    };
    let project = |z: &[f64]| -> Vec<f64> {
        let at = |lam: f64| -> (Vec<f64>, f64) {
            let mut x = vec![0.0; 2 * n];
            let mut s = 0.0;
            for i in 0..2 * n {
                let a = if i < n { 1.0 } else { -1.0 };
                x[i] = (z[i] - lam * a).clamp(0.0, c);
                s += a * x[i];
            }
            (x, s)
        };
        let span = z.iter().fold(c, |m, v| m.max(v.abs())) + c;
        let (mut lo, mut hi) = (-span, span);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if at(mid).1 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi)).0
    };

    let mut x = vec![0.0; 2 * n];
    let mut yk = x.clone();
    let mut t = 1.0_f64;
    let mut f_prev = objective(&x);
    for _ in 0..60_000 {
        let g = grad(&yk);
        let z: Vec<f64> = yk.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let x_new = project(&z);
        let f_new = objective(&x_new);
        if f_new > f_prev {
            // adaptive restart
            t = 1.0;
            yk = x.clone();
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved: f64 = x_new.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        yk = x_new.iter().zip(&x).map(|(a, b)| a + (t - 1.0) / t_new * (a - b)).collect();
        x = x_new;
        t = t_new;
        f_prev = f_new;
        if moved < 1e-13 {
            break;
        }
    }

    let delta: Vec<f64> = (0..n).map(|i| x[i] - x[n + i]).collect();
    let tol = 1e-7 * c;
    if let Some((polished, b)) = polish(k, y, c, eps, &delta, tol) {
        let as_x = |d: &[f64]| -> Vec<f64> {
            let mut x = vec![0.0; 2 * n];
            for i in 0..n {
                x[i] = d[i].max(0.0);
                x[n + i] = (-d[i]).max(0.0);
            }
            x
        };
        if objective(&as_x(&polished)) <= objective(&x) + 1e-12 {
            let dual = -objective(&as_x(&polished));
            return (polished, b, dual);
        }
    }
    let kd: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[(i, j)] * delta[j]).sum()).collect();
    let free: Vec<f64> = (0..n)
        .filter(|&i| delta[i].abs() > tol && delta[i].abs() < c - tol)
        .map(|i| y[i] - kd[i] - eps * delta[i].signum())
        .collect();
    let bias = if !free.is_empty() {
        free.iter().sum::<f64>() / free.len() as f64
    } else {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let r = y[i] - kd[i];
            if delta[i] >= c - tol {
                hi = hi.min(r - eps);
            } else if delta[i] <= -c + tol {
                lo = lo.max(r + eps);
            } else {
                lo = lo.max(r - eps);
                hi = hi.min(r + eps);
            }
        }
        0.5 * (lo + hi)
    };
    let dual = -objective(&x);
    (delta, bias, dual)
}

/// Exact KKT solve on the free set identified by an approximate solution:
/// `K_FF δ_F + b = y_F − ε sign(δ_F) − K_FB δ_B`, `Σ δ = 0`.
fn polish(k: &DMatrix<f64>, y: &[f64], c: f64, eps: f64, approx: &[f64], tol: f64) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let mut delta: Vec<f64> = approx
        .iter()
        .map(|&d| if d.abs() <= tol { 0.0 } else if d >= c - tol { c } else if d <= -c + tol { -c } else { d })
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| delta[i] != 0.0 && delta[i].abs() < c).collect();
    if free.is_empty() {
        return None;
    }
    let m = free.len();
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m + 1);
    let fixed_sum: f64 = (0..n).filter(|i| !free.contains(i)).map(|i| delta[i]).sum();
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            a[(r, s)] = k[(i, j)];
        }
        a[(r, m)] = 1.0;
        a[(m, r)] = 1.0;
        let bound: f64 = (0..n).filter(|j| !free.contains(j)).map(|j| k[(i, j)] * delta[j]).sum();
        rhs[r] = y[i] - eps * delta[i].signum() - bound;
    }
    rhs[m] = -fixed_sum;
    let sol = a.lu().solve(&rhs)?;
    for (r, &i) in free.iter().enumerate() {
        if sol[r].signum() != delta[i].signum() || sol[r].abs() > c {
            return None;
        }
        delta[i] = sol[r];
    }
    Some((delta, sol[m]))
}

/// Fixed-step RK4 integration of `i dψ/dt = Hψ` from `ψ0` up to `t`.
pub fn rk4_evolve(h: &DMatrix<f64>, psi0: &[Complex<f64>], t: f64, steps: usize) -> Vec<Complex<f64>> {
    let n = psi0.len();
    let dt = t / steps as f64;
    let rhs = |psi: &[Complex<f64>]| -> Vec<Complex<f64>> {
        (0..n)
            .map(|i| {
                let s: Complex<f64> = (0..n).map(|j| psi[j] * h[(i, j)]).sum();
                Complex::new(0.0, -1.0) * s
            })
            .collect()
    };
    let axpy = |a: &[Complex<f64>], b: &[Complex<f64>], s: f64| -> Vec<Complex<f64>> {
        a.iter().zip(b).map(|(x, y)| x + y * s).collect()
    };
    let mut psi = psi0.to_vec();
    for _ in 0..steps {
        let k1 = rhs(&psi);
        let k2 = rhs(&axpy(&psi, &k1, dt / 2.0));
        let k3 = rhs(&axpy(&psi, &k2, dt / 2.0));
        let k4 = rhs(&axpy(&psi, &k3, dt));
        for i in 0..n {
            psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
        }
    }
    psi
}

/// Step count giving `‖H‖·dt ≤ 2e-3`.
pub fn rk4_steps(h: &DMatrix<f64>, t: f64) -> usize {
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    ((t * norm / 2e-3).ceil() as usize).max(1)
}

/// Brute-force `Σ_s |ψ_s|² z_i(s)` with site 0 as the most significant bit.
pub fn magnetization(psi: &[Complex<f64>], site: usize, num_qubits: usize) -> f64 {
    psi.iter()
        .enumerate()
        .map(|(s, a)| {
            let bit = (s >> (num_qubits - 1 - site)) & 1;
            a.norm_sqr() * if bit == 1 { 1.0 } else { -1.0 }
        })
        .sum()
}
