//! Independent reference computations for power families: composite Simpson in
//! `t = ln x` on a fixed fine grid.
#![allow(dead_code)]

const T_LO: f64 = -50.0;
const T_HI: f64 = 12.0;
const STEPS: usize = 400_000;

fn exponent(exps: &[f64], c: &[f64], t: f64) -> f64 {
    let x = t.exp();
    exps.iter().zip(c).map(|(e, ci)| ci * x.powf(*e)).sum::<f64>() + t
}

/// `(log ∫ e^{Σcᵢx^{eᵢ}} dx, [∫ f(x) g_j(x) dx / ∫ f]_j)` for the given test functions.
pub fn integrate(exps: &[f64], c: &[f64], fs: &[&dyn Fn(f64) -> f64]) -> (f64, Vec<f64>) {
    let h = (T_HI - T_LO) / STEPS as f64;
    let shift = (0..=STEPS)
        .step_by(97)
        .map(|i| exponent(exps, c, T_LO + h * i as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut acc = vec![0.0; fs.len()];
    for i in 0..=STEPS {
        let t = T_LO + h * i as f64;
        let w = if i == 0 || i == STEPS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let v = w * (exponent(exps, c, t) - shift).exp();
        z += v;
        let x = t.exp();
        for (a, f) in acc.iter_mut().zip(fs) {
            *a += v * f(x);
        }
    }
    let log_z = (z * h / 3.0).ln() + shift;
    (log_z, acc.into_iter().map(|a| a / z).collect())
}

/// Lebesgue coefficients of the tilt `p` of `λ ∝ e^{-x^{e₁}}`.
pub fn lebesgue(p: &[f64]) -> Vec<f64> {
    let mut c = p.to_vec();
    c[0] -= 1.0;
    c
}

/// `log Z̃` and the moments `E[x^{eᵢ}]` of the tilt `p`.
pub fn tilt(exps: &[f64], p: &[f64]) -> (f64, Vec<f64>) {
    let owned: Vec<Box<dyn Fn(f64) -> f64>> = exps
        .iter()
        .map(|&e| Box::new(move |x: f64| x.powf(e)) as Box<dyn Fn(f64) -> f64>)
        .collect();
    let refs: Vec<&dyn Fn(f64) -> f64> = owned.iter().map(|b| b.as_ref()).collect();
    integrate(exps, &lebesgue(p), &refs)
}

/// `H(p) = log Z̃(p) − log Z̃(0)`.
pub fn log_partition(exps: &[f64], p: &[f64]) -> f64 {
    tilt(exps, p).0 - tilt(exps, &vec![0.0; exps.len()]).0
}
