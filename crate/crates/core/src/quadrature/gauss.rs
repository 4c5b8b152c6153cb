//! Gauss–Legendre nodes by Newton iteration on the three-term recurrence.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, LazyLock, Mutex};

static CACHE: LazyLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = LazyLock::new(|| Mutex::new(HashMap::new()));

/// Nodes and weights on [−1, 1], nodes ascending.
pub fn legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    assert!(n > 0, "Gauss rule needs at least one node");
    let mut cache = CACHE.lock().expect("Gauss cache poisoned");
    cache.entry(n).or_insert_with(|| Arc::new(compute(n))).clone()
}

fn compute(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Nodes and weights mapped to [a, b].
pub fn on_interval(n: usize, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let rule = legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (0..n).map(move |i| (mid + half * rule.0[i], half * rule.1[i]))
}
