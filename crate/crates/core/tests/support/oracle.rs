//! Brute-force reference implementations, written without reusing any of the
//! library's counting code.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Cohen's kappa with chance agreement from all `N x N` cross pairs.
pub fn cohen(y1: &[usize], y2: &[usize]) -> f64 {
    let n = y1.len();
    let agree = y1.iter().zip(y2).filter(|(a, b)| a == b).count();
    let mut cross = 0usize;
    for a in y1 {
        for b in y2 {
            if a == b {
                cross += 1;
            }
        }
    }
    if cross == n * n {
        return 1.0;
    }
    let p_o = agree as f64 / n as f64;
    let p_e = cross as f64 / (n * n) as f64;
    (p_o - p_e) / (1.0 - p_e)
}

/// Fleiss' kappa by enumerating rater pairs inside each item and all pairs
/// (with replacement) across the pooled ratings.
pub fn fleiss(items: &[Vec<usize>]) -> f64 {
    let m = items[0].len();
    let mut within = 0usize;
    for item in items {
        for i in 0..m {
            for j in 0..m {
                if i != j && item[i] == item[j] {
                    within += 1;
                }
            }
        }
    }
    let pooled: Vec<usize> = items.iter().flatten().copied().collect();
    let mut across = 0usize;
    for a in &pooled {
        for b in &pooled {
            if a == b {
                across += 1;
            }
        }
    }
    if across == pooled.len() * pooled.len() {
        return 1.0;
    }
    let p_bar = within as f64 / (items.len() * m * (m - 1)) as f64;
    let p_e = across as f64 / (pooled.len() * pooled.len()) as f64;
    (p_bar - p_e) / (1.0 - p_e)
}

/// Nominal alpha from an explicitly built coincidence matrix.
pub fn alpha(units: &[Vec<usize>], k: usize) -> Option<f64> {
    let mut o = vec![vec![0.0f64; k]; k];
    let mut pairable = false;
    for unit in units {
        let m = unit.len();
        if m < 2 {
            continue;
        }
        pairable = true;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    o[unit[i]][unit[j]] += 1.0 / (m - 1) as f64;
                }
            }
        }
    }
    if !pairable {
        return None;
    }
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                d_o += o[c][d];
                d_e += n_c[c] * n_c[d];
            }
        }
    }
    if d_e == 0.0 {
        return Some(1.0);
    }
    d_o /= n;
    d_e /= n * (n - 1.0);
    Some(1.0 - d_o / d_e)
}

/// Random complete rating table: `n` items, `m` raters, labels below `k`.
/// Raters agree with a per-item consensus at a random rate so values spread
/// over the whole coefficient range.
pub fn random_table(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> Vec<Vec<usize>> {
    let agreement: f64 = rng.gen();
    (0..n)
        .map(|_| {
            let consensus = rng.gen_range(0..k);
            (0..m).map(|_| if rng.gen_bool(agreement) { consensus } else { rng.gen_range(0..k) }).collect()
        })
        .collect()
}

/// Central finite-difference gradient of `loss` at `params`.
pub fn numeric_gradient(params: &mut [f64], h: f64, mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let saved = params[i];
            params[i] = saved + h;
            let up = loss(params);
            params[i] = saved - h;
            let down = loss(params);
            params[i] = saved;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
